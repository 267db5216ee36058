"""Binary element-alignment solvers for the reflected channel.

Both solvers maximize the alignment objective

    f1(G, F) = ln det(H^T K^-1 H),   H = H1 + H2(G, F)

over binary assignment matrices G (elements x LEDs) and F (elements x PDs)
whose rows select at most one device each.

`lip_optimize` relaxes the per-element pair indicator into a matrix V in
[0, 1]^(N x n_tx n_rx) with row sums below one, follows a log barrier with
an increasing weight t using gradient ascent plus backtracking, rounds
each row to its nearest vertex, and repairs the rounded point by monotone
corner ascent.  `ldao_optimize` alternates corner updates
of single rows of G and F, proposed by a quadratic upper surrogate of f1
anchored at the current iterate and kept only when the true objective
improves.  Both are deterministic and never return an alignment worse than
their initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .capacity import GRAM_RIDGE, gram_logdet
from .channel import Alignment, assemble_h2
from .geometry import Scene

SURROGATE_RIDGE = 1e-9


@dataclass
class LipConfig:
    """Barrier schedule and line-search knobs for the relaxed solver."""

    t_initial: float = 1.0
    t_multiplier: float = 10.0
    outer_tol: float = 1e-6  # stop once barrier-term count / t drops below this
    inner_tol: float = 1e-9  # stop an inner ascent once gains drop below this
    max_outer: int = 60
    max_inner: int = 200
    step_initial: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 60
    pull: float = 1e-3  # interior offset applied to a binary starting point


@dataclass
class AlignResult:
    """Solver outcome: binary alignment, its objective, and diagnostics."""

    alignment: Alignment
    objective: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    notes: tuple[str, ...] = field(default_factory=tuple)


def init_nearest(scene: Scene) -> Alignment:
    """Assign every element to its nearest LED and nearest PD (first index
    wins ties)."""
    n = scene.n_elements
    g = np.zeros((n, scene.n_tx), dtype=int)
    f = np.zeros((n, scene.n_rx), dtype=int)
    if n:
        el = scene.positions("oirs")
        d_led = np.linalg.norm(el[:, None, :] - scene.positions("leds")[None, :, :], axis=2)
        d_pd = np.linalg.norm(el[:, None, :] - scene.positions("pds")[None, :, :], axis=2)
        g[np.arange(n), d_led.argmin(axis=1)] = 1
        f[np.arange(n), d_pd.argmin(axis=1)] = 1
    return Alignment(g, f)


def alignment_objective(h1, cascade, k, alignment: Alignment) -> float:
    """f1 = ln det(H^T K^-1 H) at a binary alignment."""
    return gram_logdet(h1 + assemble_h2(cascade, alignment), k)


# ---------------------------------------------------------------------------
# relaxed-assignment machinery
#
# pair column p = i * n_rx + j (zero based) matches both the cascade tensor
# reshaped to (N, n_tx * n_rx) and the column-major vec of the (n_rx, n_tx)
# channel matrix


def alignment_to_v(alignment: Alignment) -> np.ndarray:
    """(N, n_tx * n_rx) pair-indicator matrix v[n, p] = g[n, i] f[n, j]."""
    return np.einsum("ni,nj->nij", alignment.g, alignment.f).reshape(
        alignment.n_elements, -1
    ).astype(float)


def v_to_alignment(v: np.ndarray, n_tx: int, n_rx: int, allow_unassigned: bool = False) -> Alignment:
    """Round each row to the nearest one-hot pair indicator.

    The nearest vertex in Euclidean distance is the largest entry; exact
    ties go to the lowest pair index.  With allow_unassigned the all-zero
    vertex competes too, winning when the largest entry is below 1/2.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 2 or v.shape[1] != n_tx * n_rx:
        raise ValueError("v must have n_tx * n_rx columns")
    n = v.shape[0]
    g = np.zeros((n, n_tx), dtype=int)
    f = np.zeros((n, n_rx), dtype=int)
    for row in range(n):
        p = int(np.argmax(v[row]))
        if allow_unassigned and v[row, p] < 0.5:
            continue
        g[row, p // n_rx] = 1
        f[row, p % n_rx] = 1
    return Alignment(g, f)


def relax_alignment(alignment: Alignment, pull: float = 1e-3) -> np.ndarray:
    """Strictly interior V near a binary alignment.

    Every entry is lifted to `pull`; a selected pair keeps 1 - pull * P so
    each row sums to 1 - pull (P = n_tx * n_rx pairs).
    """
    v_hot = alignment_to_v(alignment)
    n, p = v_hot.shape
    if pull <= 0 or pull * (p + 1) >= 1:
        raise ValueError("pull must leave room for an interior point")
    v = np.full((n, p), pull)
    hot = v_hot.argmax(axis=1)
    has_hot = v_hot[np.arange(n), hot] > 0
    v[np.arange(n)[has_hot], hot[has_hot]] = 1.0 - pull * p
    return v


def vec_channel(h1: np.ndarray, cascade: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Column-major vec of H1 plus the cascade columns weighted by V."""
    h1 = np.asarray(h1, dtype=float)
    n_rx, n_tx = h1.shape
    pair = np.asarray(cascade, dtype=float).reshape(np.asarray(v).shape[0], -1)
    if pair.shape[1] != n_tx * n_rx:
        raise ValueError("cascade and h1 disagree on n_tx * n_rx")
    return h1.flatten(order="F") + (pair * v).sum(axis=0)


def channel_from_v(h1: np.ndarray, cascade: np.ndarray, v: np.ndarray) -> np.ndarray:
    n_rx, n_tx = np.asarray(h1).shape
    return vec_channel(h1, cascade, v).reshape((n_rx, n_tx), order="F")


def gradient_logdet_v(v, h1, cascade, k) -> np.ndarray:
    """Gradient of f1 with respect to V: 2 H_c * vec(K^-1 H (H^T K^-1 H)^-1)."""
    v = np.asarray(v, dtype=float)
    h = channel_from_v(h1, cascade, v)
    kinv_h = np.linalg.solve(k, h)
    gram = h.T @ kinv_h
    try:
        m = np.linalg.solve(gram, kinv_h.T).T  # K^-1 H Gram^-1, Gram symmetric
    except np.linalg.LinAlgError:
        # same ridge the objective applies when the Gram is numerically singular
        ridged = gram + GRAM_RIDGE * np.eye(gram.shape[0])
        m = np.linalg.solve(ridged, kinv_h.T).T
    pair = np.asarray(cascade, dtype=float).reshape(v.shape[0], -1)
    return 2.0 * pair * m.flatten(order="F")[None, :]


def _barrier_value(v, h1, cascade, k, t):
    """(barrier objective, plain log-det) at V; -inf outside the domain."""
    slack = 1.0 - v.sum(axis=1)
    if np.any(v <= 0.0) or np.any(slack <= 0.0):
        return -np.inf, -np.inf
    f1 = gram_logdet(channel_from_v(h1, cascade, v), k)
    return t * f1 + float(np.sum(np.log(v)) + np.sum(np.log(slack))), f1


def _barrier_gradient(v, h1, cascade, k, t):
    slack = 1.0 - v.sum(axis=1)
    return t * gradient_logdet_v(v, h1, cascade, k) + 1.0 / v - (1.0 / slack)[:, None]


def lip_optimize(
    h1: np.ndarray,
    cascade: np.ndarray,
    k: np.ndarray,
    init: Alignment,
    config: LipConfig | None = None,
) -> AlignResult:
    """Relaxed barrier ascent over V, rounded back to a binary alignment.

    The barrier weight grows by `t_multiplier` each outer round until the
    N (n_tx n_rx + 1) barrier terms weigh in below `outer_tol` relative to
    t.  The rounded point is then repaired by monotone corner ascent, and
    the initialization is returned instead if it still scores higher, so
    the result never undercuts the starting point.
    """
    cfg = config or LipConfig()
    h1 = np.asarray(h1, dtype=float)
    cascade = np.asarray(cascade, dtype=float)
    k = np.asarray(k, dtype=float)
    n_rx, n_tx = h1.shape

    init_obj = alignment_objective(h1, cascade, k, init)
    if cascade.shape[0] == 0:
        return AlignResult(init, init_obj, 0, True, [], ())

    v = relax_alignment(init, cfg.pull)
    n, p = v.shape
    barrier_terms = n * (p + 1)
    t = cfg.t_initial
    trace = []
    total_inner = 0
    outer = 0
    while outer < cfg.max_outer:
        value, _ = _barrier_value(v, h1, cascade, k, t)
        step = cfg.step_initial
        for inner in range(cfg.max_inner):
            grad = _barrier_gradient(v, h1, cascade, k, t)
            gnorm2 = float(np.sum(grad * grad))
            # warm start: resume near the last accepted step instead of
            # re-shrinking from step_initial every iteration
            step = min(2.0 * step, cfg.step_initial)
            accepted = None
            for _ in range(cfg.max_backtracks):
                trial = v + step * grad
                trial_value, trial_f1 = _barrier_value(trial, h1, cascade, k, t)
                if trial_value >= value + cfg.armijo * step * gnorm2:
                    accepted = (trial, trial_value, trial_f1)
                    break
                step *= cfg.shrink
            if accepted is None:
                break
            v, new_value, f1 = accepted
            total_inner += 1
            trace.append((outer, inner, f1, step, t))
            improvement = new_value - value
            value = new_value
            if improvement < cfg.inner_tol:
                break
        outer += 1
        if barrier_terms / t < cfg.outer_tol:
            break
        t *= cfg.t_multiplier
    converged = barrier_terms / t < cfg.outer_tol

    rounded = v_to_alignment(v, n_tx, n_rx)
    rounded_obj = alignment_objective(h1, cascade, k, rounded)
    # nearest-vertex rounding discards curvature the barrier path found, so
    # repair the rounded point with the same monotone corner ascent the
    # alternating solver runs; ascent never lowers the rounded objective
    g_r, f_r = rounded.g.copy(), rounded.f.copy()
    rounded_obj, _, _ = _corner_ascent(
        h1, cascade, k, g_r, f_r, rounded_obj, [rounded_obj], cfg.max_outer, cfg.inner_tol
    )
    rounded = Alignment(g_r, f_r)
    notes = () if converged else ("iteration-cap",)
    if rounded_obj >= init_obj:
        return AlignResult(rounded, rounded_obj, total_inner, converged, trace, notes)
    return AlignResult(init, init_obj, total_inner, converged, trace, notes + ("rounding-fallback",))


# ---------------------------------------------------------------------------
# alternating corner updates against a concave surrogate


def cholesky_inverse_factor(k: np.ndarray) -> np.ndarray:
    """S with S^T S = K^-1: the inverse of the lower Cholesky factor of K."""
    k = np.asarray(k, dtype=float)
    if not np.allclose(k, k.T, atol=1e-12):
        raise ValueError("K must be symmetric")
    lower = np.linalg.cholesky(k)
    return solve_triangular(lower, np.eye(k.shape[0]), lower=True)


class _SurrogateContext:
    """Quantities fixed while sweeping rows against one anchor alignment.

    Anchored at B = S (H1 + H2(anchor)), C = B^T B (ridged if needed), the
    surrogate of f1 at a candidate reflected matrix H2 is

        || S H2 C^-1/2 ||_F^2 + 2 tr(C^-1 H1^T K^-1 H2) + u_const

        u_const = tr(C^-1 H1^T K^-1 H1) + ln det(C) - n_tx

    It touches f1 at the anchor and upper-bounds it everywhere else, so row
    updates can be scored in closed form without refactoring the channel.
    """

    def __init__(self, h1, cascade, k, anchor: Alignment | None = None, *, h2=None, s=None):
        if (anchor is None) == (h2 is None):
            raise ValueError("provide exactly one of anchor or h2")
        self.h1 = h1
        self.cascade = cascade
        self.s = cholesky_inverse_factor(k) if s is None else s
        self.kinv = self.s.T @ self.s
        if h2 is None:
            h2 = assemble_h2(cascade, anchor)
        b = self.s @ (h1 + h2)
        c = b.T @ b
        eigval, eigvec = np.linalg.eigh(c)
        if eigval[0] < SURROGATE_RIDGE:
            c = c + SURROGATE_RIDGE * np.eye(c.shape[0])
            eigval, eigvec = np.linalg.eigh(c)
        self.c_inv = eigvec @ np.diag(1.0 / eigval) @ eigvec.T
        self.c_invhalf = eigvec @ np.diag(1.0 / np.sqrt(eigval)) @ eigvec.T
        self.cross = self.kinv @ h1 @ self.c_inv  # <cross, H2> scores the trace term
        self.u_const = float(
            np.trace(self.c_inv @ h1.T @ self.kinv @ h1) + np.sum(np.log(eigval)) - h1.shape[1]
        )

    def score(self, h2: np.ndarray) -> float:
        quad = self.s @ h2 @ self.c_invhalf
        return float(np.sum(quad * quad) + 2.0 * np.sum(self.cross * h2) + self.u_const)


def surrogate_objective(h1, cascade, k, anchor: Alignment, candidate: Alignment) -> float:
    """Quadratic upper surrogate of f1 at `candidate`, anchored at `anchor`."""
    ctx = _SurrogateContext(
        np.asarray(h1, float), np.asarray(cascade, float), np.asarray(k, float), anchor
    )
    return ctx.score(assemble_h2(cascade, candidate))


def _g_contributions(cascade_el: np.ndarray, f_row: np.ndarray) -> np.ndarray:
    """Per-LED-choice contribution matrices of one element to H2.

    contribs[i] is (n_rx, n_tx) with column i equal to f_row * cascade_el[i].
    """
    n_tx, n_rx = cascade_el.shape
    contribs = np.zeros((n_tx, n_rx, n_tx))
    for i in range(n_tx):
        contribs[i, :, i] = f_row * cascade_el[i]
    return contribs


def _f_contributions(cascade_el: np.ndarray, g_row: np.ndarray) -> np.ndarray:
    """Per-PD-choice contribution matrices of one element to H2.

    contribs[j] is (n_rx, n_tx) with row j equal to g_row * cascade_el[:, j].
    """
    n_tx, n_rx = cascade_el.shape
    contribs = np.zeros((n_rx, n_rx, n_tx))
    for j in range(n_rx):
        contribs[j, j, :] = g_row * cascade_el[:, j]
    return contribs


def _pair_contributions(cascade_el: np.ndarray) -> np.ndarray:
    """Contribution matrices of one element under every joint (LED, PD) pair.

    contribs[p] for p = i n_rx + j is (n_rx, n_tx) with the single entry
    [j, i] = cascade_el[i, j].
    """
    n_tx, n_rx = cascade_el.shape
    contribs = np.zeros((n_tx * n_rx, n_rx, n_tx))
    for i in range(n_tx):
        for j in range(n_rx):
            contribs[i * n_rx + j, j, i] = cascade_el[i, j]
    return contribs


def corner_solve(ctx: _SurrogateContext, h2_other: np.ndarray, contribs: np.ndarray,
                 current: np.ndarray) -> np.ndarray:
    """Best row among the zero row and all one-hots for one element.

    h2_other is the reflected matrix without this element; contribs[c] is
    the element's contribution under choice c.  Keeps `current` unless a
    candidate scores strictly better; among equal newcomers the zero row,
    then the lowest index, wins.
    """
    current_contrib = contribs[current.argmax()] if current.any() else 0.0
    best = ctx.score(h2_other + current_contrib)
    best_row = current
    n_choices = contribs.shape[0]
    for c in range(-1, n_choices):
        row = np.zeros(n_choices, dtype=int)
        contrib = 0.0
        if c >= 0:
            row[c] = 1
            contrib = contribs[c]
        if np.array_equal(row, current):
            continue
        value = ctx.score(h2_other + contrib)
        if value > best:
            best, best_row = value, row
    return best_row


def ldao_optimize(
    h1: np.ndarray,
    cascade: np.ndarray,
    k: np.ndarray,
    init: Alignment,
    max_outer: int = 50,
    tol: float = 1e-9,
) -> AlignResult:
    """Alternating per-element corner updates of G then F.

    Each outer round sweeps every G row through its n_tx + 1 corners and
    then every F row through its n_rx + 1 corners.  A row update re-anchors
    the surrogate at the current alignment, proposes the corner with the
    best surrogate score, and keeps it only when the true objective
    improves, so the recorded objective trace never decreases.  Rows of G
    and F move one at a time, which can stall where only a simultaneous
    (LED, PD) reassignment of one element helps; a round that gains nothing
    therefore retries each element over its joint pair corners under the
    same scoring and acceptance rule.  The loop ends once a full round,
    including the joint retry, gains less than `tol`.
    """
    h1 = np.asarray(h1, dtype=float)
    cascade = np.asarray(cascade, dtype=float)
    k = np.asarray(k, dtype=float)

    g = init.g.copy()
    f = init.f.copy()
    obj = alignment_objective(h1, cascade, k, init)
    trace = [obj]
    if cascade.shape[0] == 0:
        return AlignResult(Alignment(g, f), obj, 0, True, trace, ())

    obj, outer, converged = _corner_ascent(h1, cascade, k, g, f, obj, trace, max_outer, tol)
    notes = () if converged else ("iteration-cap",)
    return AlignResult(Alignment(g, f), obj, outer, converged, trace, notes)


def _corner_ascent(h1, cascade, k, g, f, obj, trace, max_outer, tol):
    """Monotone corner ascent over rows of G and F plus joint element retries.

    Mutates `g`, `f`, and `trace` in place; returns the final objective, the
    number of outer rounds used, and whether the last round stalled below
    `tol` (converged) rather than hitting `max_outer`.
    """
    n = cascade.shape[0]
    n_rx = h1.shape[0]
    s = cholesky_inverse_factor(k)
    converged = False
    outer = 0
    for outer in range(1, max_outer + 1):
        round_start = obj
        h2 = assemble_h2(cascade, Alignment(g, f))

        for rows, contrib_of in ((g, _g_contributions), (f, _f_contributions)):
            for el in range(n):
                companion = f[el] if rows is g else g[el]
                contribs = contrib_of(cascade[el], companion)
                current = rows[el]
                current_contrib = contribs[current.argmax()] if current.any() else 0.0
                h2_other = h2 - current_contrib
                ctx = _SurrogateContext(h1, cascade, k, h2=h2, s=s)
                proposal = corner_solve(ctx, h2_other, contribs, current)
                if np.array_equal(proposal, current):
                    continue
                new_contrib = contribs[proposal.argmax()] if proposal.any() else 0.0
                h2_trial = h2_other + new_contrib
                trial_obj = gram_logdet(h1 + h2_trial, k)
                if trial_obj > obj:
                    rows[el] = proposal
                    h2 = h2_trial
                    obj = trial_obj
                    trace.append(obj)

        if obj - round_start < tol:
            for el in range(n):
                contribs = _pair_contributions(cascade[el])
                cur_p = -1
                if g[el].any() and f[el].any():
                    cur_p = int(g[el].argmax()) * n_rx + int(f[el].argmax())
                cur_contrib = contribs[cur_p] if cur_p >= 0 else 0.0
                h2_other = h2 - cur_contrib
                ctx = _SurrogateContext(h1, cascade, k, h2=h2, s=s)
                best_val = ctx.score(h2)
                best_p = cur_p
                for p in range(-1, contribs.shape[0]):
                    if p == cur_p:
                        continue
                    contrib = contribs[p] if p >= 0 else 0.0
                    val = ctx.score(h2_other + contrib)
                    if val > best_val:
                        best_val, best_p = val, p
                if best_p == cur_p:
                    continue
                new_contrib = contribs[best_p] if best_p >= 0 else 0.0
                h2_trial = h2_other + new_contrib
                trial_obj = gram_logdet(h1 + h2_trial, k)
                if trial_obj > obj:
                    g[el] = 0
                    f[el] = 0
                    if best_p >= 0:
                        g[el, best_p // n_rx] = 1
                        f[el, best_p % n_rx] = 1
                    h2 = h2_trial
                    obj = trial_obj
                    trace.append(obj)

        if obj - round_start < tol:
            converged = True
            break

    return obj, outer, converged
