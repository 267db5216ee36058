"""Sweep harness: noise mapping, schemes, oracles and CSV reports."""

import csv
import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from oirs_vlc.capacity import gram_logdet
from oirs_vlc.channel import LambertianParams, ChannelSet, cascade_gains, direct_channel, normalize
from oirs_vlc.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    certify_solvers,
    chi_curve,
    complexity_report,
    exhaustive_oracle,
    random_instance,
    run_scheme,
    snr_to_noise,
    sweep_elements,
    sweep_snr,
    write_records_csv,
)


def _tiny_config(**overrides):
    base = dict(
        schemes=("proposed2", "greedy", "no_oirs"),
        snr_db=(20.0, 40.0),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_snr_to_noise_formula():
    # sigma = sum(X) / (n 10^(snr/10)) with X = (1, 3): sum 4, n 2
    noise = snr_to_noise(10.0, [1.0, 3.0])
    assert noise.sigma == pytest.approx(0.2, rel=1e-12)
    assert_allclose(noise.k, 0.04 * np.eye(2))
    wide = snr_to_noise(0.0, [1.0, 3.0], n_rx=5)
    assert wide.k.shape == (5, 5)
    with pytest.raises(ValueError):
        snr_to_noise(10.0, [1.0, -1.0])


def test_config_round_trip_and_validation():
    cfg = _tiny_config()
    again = ExperimentConfig(**cfg.resolved())
    assert again.resolved() == cfg.resolved()
    with pytest.raises(ValueError):
        ExperimentConfig(schemes=("nonesuch",))
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"not_a_key": 1})
    with pytest.raises(ValueError):
        ExperimentConfig(case="IV")


def test_sweep_snr_record_layout():
    cfg = _tiny_config()
    records = sweep_snr(cfg)
    assert len(records) == 3 * 2
    for rec in records:
        assert rec.scheme in cfg.schemes
        assert rec.snr_db in cfg.snr_db
        assert rec.capacity_lower_nats >= 0.0
        assert rec.capacity_upper_nats is not None
        assert rec.capacity_lower_nats <= rec.capacity_upper_nats + 1e-9
        assert len(rec.power) == 4
    no_oirs = [r for r in records if r.scheme == "no_oirs"]
    assert all(r.n_elements == 0 for r in no_oirs)
    assert all(r.iterations == 0 for r in no_oirs)


def test_solver_cache_is_shared():
    cfg = _tiny_config(schemes=("proposed2", "uniform"))
    from oirs_vlc.geometry import build_scene

    scene = build_scene(cfg.scene)
    cache = {}
    run_scheme("proposed2", scene, cfg, cache)
    assert "ldao" in cache
    first = cache["ldao"]
    run_scheme("uniform", scene, cfg, cache)
    assert cache["ldao"] is first  # one alternating solve serves both schemes


def test_exhaustive_oracle_matches_bruteforce():
    scene = random_instance(np.random.default_rng(3), n_elements=2, n_tx=2, n_rx=2)
    params = LambertianParams()
    ch = normalize(ChannelSet(direct_channel(scene, params), cascade_gains(scene, params)))
    k = np.eye(2)
    best, best_obj = exhaustive_oracle(ch.h1, ch.cascade, k)

    ref_best = -math.inf
    for choice in itertools.product(range(-1, 4), repeat=2):
        h2 = np.zeros((2, 2))
        for el, c in enumerate(choice):
            if c >= 0:
                i, j = divmod(c, 2)
                h2[j, i] += ch.cascade[el, i, j]
        ref_best = max(ref_best, gram_logdet(ch.h1 + h2, k))
    assert best_obj == pytest.approx(ref_best, abs=1e-12)
    # reported alignment reproduces the reported objective
    from oirs_vlc.align_opt import alignment_objective

    assert alignment_objective(ch.h1, ch.cascade, k, best) == pytest.approx(best_obj, abs=1e-12)


def test_exhaustive_oracle_refuses_oversized():
    cascade = np.zeros((9, 2, 2))  # 5^9 candidates exceeds the refusal limit
    with pytest.raises(ValueError, match="1953125"):
        exhaustive_oracle(np.eye(2), cascade, np.eye(2))


def test_random_instance_bands_and_determinism():
    scene_a = random_instance(np.random.default_rng(42), 5, 3, 4)
    scene_b = random_instance(np.random.default_rng(42), 5, 3, 4)
    assert_allclose(scene_a.positions("oirs"), scene_b.positions("oirs"))
    room_z = scene_a.room[2]
    assert np.all(scene_a.positions("leds")[:, 2] >= 2.0 * room_z / 3.0)
    assert np.all(scene_a.positions("pds")[:, 2] <= room_z / 3.0)
    assert_allclose(scene_a.normals("leds"), [[0, 0, -1]] * 3)


def test_certify_solvers_report_shape():
    report = certify_solvers(n_seeds=6, n_elements=3, n_tx=2, n_rx=2, seed=1)
    assert len(report["rows"]) == 6
    assert 0.0 <= report["ldao_hit_rate"] <= 1.0
    for row in report["rows"]:
        assert row["ldao_gap"] >= -1e-9  # the oracle is a global maximum
        assert row["lip_gap"] >= -1e-9
        assert row["ldao"] >= row["greedy"] - 1e-12  # never below its init
        trace = np.asarray(row["ldao_trace"])
        assert np.all(np.diff(trace) >= 0.0)


def test_sweep_elements_carries_counts():
    cfg = _tiny_config(schemes=("greedy", "no_oirs"), snr_db=(40.0,))
    records = sweep_elements(cfg, [0, 8], 40.0)
    greedy = [r for r in records if r.scheme == "greedy"]
    assert [r.n_elements for r in greedy] == [0, 8]
    assert all(r.n_elements == 0 for r in records if r.scheme == "no_oirs")
    bad = _tiny_config()
    bad.scene["oirs"] = [[[0.0, 2.0, 1.5], [1, 0, 0]]]
    with pytest.raises(ValueError):
        sweep_elements(bad, [0, 8], 40.0)


def test_chi_curve_flat_above_half():
    curve = chi_curve([0.3, 0.5, 0.7, 1.0], 4)
    assert curve[1][1] == curve[2][1] == curve[3][1]
    assert curve[0][1] < curve[1][1]


def test_csv_layout_and_units(tmp_path):
    cfg = _tiny_config(schemes=("greedy", "no_oirs"), snr_db=(30.0,))
    records = sweep_snr(cfg)
    nats_path = tmp_path / "out_nats.csv"
    bits_path = tmp_path / "out_bits.csv"
    write_records_csv(records, nats_path)
    write_records_csv(records, bits_path, unit="bits")

    with open(nats_path, newline="") as fh:
        nats_rows = list(csv.reader(fh))
    with open(bits_path, newline="") as fh:
        bits_rows = list(csv.reader(fh))
    assert nats_rows[0] == list(CSV_COLUMNS)
    assert len(nats_rows) == len(records) + 1
    lower_col = CSV_COLUMNS.index("capacity_lower_nats")
    for nats, bits in zip(nats_rows[1:], bits_rows[1:]):
        assert float(bits[lower_col]) == pytest.approx(
            float(nats[lower_col]) / math.log(2.0), rel=1e-10
        )
    with pytest.raises(ValueError):
        write_records_csv(records, nats_path, unit="shannons")


def test_sweeps_reproducible_modulo_wall_time(tmp_path):
    """Two identical invocations differ at most in the wall_ms column."""
    cfg = _tiny_config(schemes=("greedy",), snr_db=(30.0, 40.0))
    a_path, b_path = tmp_path / "a.csv", tmp_path / "b.csv"
    write_records_csv(sweep_snr(cfg), a_path)
    write_records_csv(sweep_snr(cfg), b_path)
    wall_col = CSV_COLUMNS.index("wall_ms")
    with open(a_path, newline="") as fh:
        rows_a = [row[:wall_col] + row[wall_col + 1:] for row in csv.reader(fh)]
    with open(b_path, newline="") as fh:
        rows_b = [row[:wall_col] + row[wall_col + 1:] for row in csv.reader(fh)]
    assert rows_a == rows_b


def test_complexity_report_keys():
    report = complexity_report(n_list=(4, 6), repeats=1)
    assert "N" in report["ldao_order"]
    assert len(report["ldao_per_sweep_seconds"]) == 2
    assert all(t > 0 for t in report["ldao_per_sweep_seconds"])
    assert np.isfinite(report["ldao_fit_max_ratio"])
    assert report["lip_inner_iterations"] > 0
