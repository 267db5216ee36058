"""Lambertian gain synthesis for direct and reflector-assisted links.

A link from an emitter with Lambertian order m to a detector of area A_pd,
optical filter gain g_of, concentrator refractive index q and field-of-view
semi-angle fov carries the DC gain

    h = q^2 (m+1) A_pd g_of cos^m(theta) cos(phi) / (2 pi d^2 sin^2(fov))

where theta is the emission angle, phi the incidence angle and d the path
length.  The gain is zero when phi exceeds the field of view.  A reflector
element relays the same expression with reflectivity gamma and the additive
path length d1 + d2 of the two legs; in the near-field regime each element
serves at most one emitter-detector pair, so per-element gains are stored
unreduced as a (n_elements, n_tx, n_rx) tensor and combined only through an
explicit element alignment.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Scene


@dataclass
class LambertianParams:
    """Opto-electronic constants of the link budget.

    q             concentrator refractive index
    m             Lambertian order of the emitters
    a_pd          detector active area, m^2
    g_of          optical filter gain
    fov_semi_angle  detector field-of-view semi-angle, radians, in (0, pi/2]
    reflectivity  element reflection efficiency gamma, in (0, 1]
    """

    q: float = 1.5
    m: float = 1.0
    a_pd: float = 1e-4
    g_of: float = 1.0
    fov_semi_angle: float = math.radians(70.0)
    reflectivity: float = 0.9

    def __post_init__(self):
        if self.q <= 0 or self.m <= 0 or self.a_pd <= 0 or self.g_of <= 0:
            raise ValueError("q, m, a_pd and g_of must be positive")
        if not 0 < self.fov_semi_angle <= math.pi / 2:
            raise ValueError("fov_semi_angle must lie in (0, pi/2]")
        if not 0 < self.reflectivity <= 1:
            raise ValueError("reflectivity must lie in (0, 1]")

    @property
    def front_factor(self) -> float:
        """q^2 (m+1) A_pd g_of / (2 pi sin^2(fov))."""
        s = math.sin(self.fov_semi_angle)
        return self.q**2 * (self.m + 1.0) * self.a_pd * self.g_of / (2.0 * math.pi * s * s)


@dataclass
class Alignment:
    """Binary element assignment: element n serves LED i iff g[n, i] = 1 and
    PD j iff f[n, j] = 1.  Rows may be all zero (element unassigned); a row
    never selects more than one device."""

    g: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=int)
        self.f = np.asarray(self.f, dtype=int)
        if self.g.ndim != 2 or self.f.ndim != 2 or self.g.shape[0] != self.f.shape[0]:
            raise ValueError("g and f need matching element counts")
        for name, mat in (("g", self.g), ("f", self.f)):
            if not np.isin(mat, (0, 1)).all():
                raise ValueError(f"{name} must be binary")
            if np.any(mat.sum(axis=1) > 1):
                raise ValueError(f"{name} assigns some element to more than one device")

    @classmethod
    def empty(cls, n_elements: int, n_tx: int, n_rx: int) -> "Alignment":
        return cls(np.zeros((n_elements, n_tx), dtype=int), np.zeros((n_elements, n_rx), dtype=int))

    @property
    def n_elements(self) -> int:
        return self.g.shape[0]


@dataclass
class ChannelSet:
    """Direct gains plus unreduced per-element cascaded gains.

    h1      (n_rx, n_tx) direct gain matrix
    cascade (n_elements, n_tx, n_rx) tensor; entry (n, i, j) is the gain of
            the LED i -> element n -> PD j path
    scale   multiplier already applied by normalize(), 1.0 for raw gains
    """

    h1: np.ndarray
    cascade: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        self.h1 = np.asarray(self.h1, dtype=float)
        self.cascade = np.asarray(self.cascade, dtype=float)
        if self.h1.ndim != 2:
            raise ValueError("h1 must be a matrix")
        n_rx, n_tx = self.h1.shape
        if self.cascade.ndim != 3 or self.cascade.shape[1:] != (n_tx, n_rx):
            raise ValueError("cascade must have shape (n_elements, n_tx, n_rx)")
        if np.any(self.h1 < 0) or np.any(self.cascade < 0):
            raise ValueError("gains must be nonnegative")

    @property
    def n_tx(self) -> int:
        return self.h1.shape[1]

    @property
    def n_rx(self) -> int:
        return self.h1.shape[0]

    @property
    def n_elements(self) -> int:
        return self.cascade.shape[0]

    def pair_matrix(self) -> np.ndarray:
        """(n_elements, n_tx * n_rx) view with pair column p = i * n_rx + j."""
        return self.cascade.reshape(self.n_elements, -1)


def direct_channel(scene: Scene, params: LambertianParams) -> np.ndarray:
    """(n_rx, n_tx) matrix of line-of-sight gains, FoV mask applied."""
    led_pos = scene.positions("leds")
    led_nrm = scene.normals("leds")
    pd_pos = scene.positions("pds")
    pd_nrm = scene.normals("pds")

    diff = pd_pos[:, None, :] - led_pos[None, :, :]  # (n_rx, n_tx, 3)
    dist = np.linalg.norm(diff, axis=2)
    if np.any(dist < 1e-12):
        raise ValueError("an LED and a PD coincide")
    u = diff / dist[:, :, None]
    cos_irr = np.einsum("it,jit->ji", led_nrm, u)
    cos_inc = -np.einsum("jt,jit->ji", pd_nrm, u)
    return _lambertian(dist, cos_irr, cos_inc, params)


def cascade_gains(scene: Scene, params: LambertianParams) -> np.ndarray:
    """(n_elements, n_tx, n_rx) tensor of single-reflection gains.

    Uses the additive path length of the two legs.  The emission angle is
    taken at the LED, the incidence angle at the PD; the element itself is a
    point redirector with efficiency `reflectivity` and no FoV of its own.
    """
    n = scene.n_elements
    if n == 0:
        return np.zeros((0, scene.n_tx, scene.n_rx))
    el_pos = scene.positions("oirs")
    led_pos = scene.positions("leds")
    led_nrm = scene.normals("leds")
    pd_pos = scene.positions("pds")
    pd_nrm = scene.normals("pds")

    leg1 = el_pos[:, None, :] - led_pos[None, :, :]  # (n, n_tx, 3)
    d1 = np.linalg.norm(leg1, axis=2)
    leg2 = el_pos[:, None, :] - pd_pos[None, :, :]  # (n, n_rx, 3)
    d2 = np.linalg.norm(leg2, axis=2)
    if np.any(d1 < 1e-12) or np.any(d2 < 1e-12):
        raise ValueError("an element coincides with an LED or a PD")

    cos_theta = np.einsum("it,nit->ni", led_nrm, leg1 / d1[:, :, None])
    cos_phi = np.einsum("jt,njt->nj", pd_nrm, leg2 / d2[:, :, None])

    dist = d1[:, :, None] + d2[:, None, :]  # (n, n_tx, n_rx)
    gain = params.reflectivity * _lambertian(
        dist, cos_theta[:, :, None], cos_phi[:, None, :], params
    )
    return gain


def _lambertian(dist, cos_emit, cos_inc, params):
    cos_emit = np.maximum(cos_emit, 0.0)
    visible = cos_inc >= math.cos(params.fov_semi_angle)
    gain = params.front_factor * cos_emit**params.m * cos_inc / (dist * dist)
    return np.where(visible, gain, 0.0)


def assemble_h2(cascade: np.ndarray, alignment: Alignment) -> np.ndarray:
    """Reflected gain matrix [h2]_{j,i} = sum_n f[n,j] g[n,i] cascade[n,i,j]."""
    cascade = np.asarray(cascade, dtype=float)
    if cascade.ndim != 3:
        raise ValueError("cascade must have shape (n_elements, n_tx, n_rx)")
    n, n_tx, n_rx = cascade.shape
    if alignment.g.shape != (n, n_tx) or alignment.f.shape != (n, n_rx):
        raise ValueError("alignment shape does not match the cascade tensor")
    return np.einsum("ni,nj,nij->ji", alignment.g, alignment.f, cascade)


def total_channel(h1: np.ndarray, h2: np.ndarray) -> np.ndarray:
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    if h1.shape != h2.shape:
        raise ValueError("direct and reflected matrices differ in shape")
    return h1 + h2


def normalize(channels: ChannelSet) -> ChannelSet:
    """Rescale so the direct matrix has unit Frobenius norm.

    The cascade tensor is scaled by the same factor, which keeps every
    capacity and objective comparison invariant; the factor is recorded in
    `scale`.
    """
    nrm = float(np.linalg.norm(channels.h1))
    if nrm <= 0:
        raise ValueError("cannot normalize an all-zero direct channel")
    s = 1.0 / nrm
    return ChannelSet(h1=channels.h1 * s, cascade=channels.cascade * s, scale=channels.scale * s)


def export_channel_csv(channels: ChannelSet, h1_path, cascade_path) -> None:
    """Write the direct matrix and cascade tensor as two headed CSV files.

    Rows are emitted in deterministic index order (1-based indices), floats
    with 12 significant digits.
    """
    with open(h1_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "i", "gain"])
        for j in range(channels.n_rx):
            for i in range(channels.n_tx):
                w.writerow([j + 1, i + 1, f"{channels.h1[j, i]:.12g}"])
    with open(cascade_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "i", "j", "gain"])
        for n in range(channels.n_elements):
            for i in range(channels.n_tx):
                for j in range(channels.n_rx):
                    w.writerow([n + 1, i + 1, j + 1, f"{channels.cascade[n, i, j]:.12g}"])
