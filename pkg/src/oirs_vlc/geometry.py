"""3D scene construction for indoor optical MIMO links.

Coordinates are metric, right handed, z up.  The room is the axis-aligned box
[0, Lx] x [0, Ly] x [0, Lz].  By default emitters (LEDs) sit on the ceiling
facing down, detectors (PDs) sit on a receiver plane facing up, and reflector
elements tile a wall rectangle facing into the room.  Explicit per-device
[position, normal] lists override the generated layouts.

Functions
---------
build_scene        validated Scene from a config dict
path_geometry      distance and cosine factors of a single optical path
rayleigh_distance  near-field boundary 2 L^2 f / c of an aperture
default_scene_config  config dict for the standard evaluation layout
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass
class OrientedPoint:
    """A point device with a unit orientation normal.

    position : (3,) array, metres
    normal   : (3,) array, unit length (normalized on construction)
    """

    position: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.normal = np.asarray(self.normal, dtype=float).reshape(3)
        if not np.all(np.isfinite(self.position)):
            raise ValueError("position has non-finite components")
        if not np.all(np.isfinite(self.normal)):
            raise ValueError("normal has non-finite components")
        nrm = float(np.linalg.norm(self.normal))
        if nrm < 1e-12:
            raise ValueError("cannot normalize a zero orientation vector")
        self.normal = self.normal / nrm


@dataclass
class GeometricPath:
    """Distance plus emission/reception cosines of one line-of-sight leg."""

    distance: float
    cos_irradiance: float
    cos_incidence: float


@dataclass
class Scene:
    """Complete device layout.  Treat as immutable once built.

    leds : emitters, length n_tx
    pds  : detectors, length n_rx
    oirs : reflector elements, length n_elements (may be empty)
    room : (3,) box extents in metres
    """

    leds: list[OrientedPoint]
    pds: list[OrientedPoint]
    oirs: list[OrientedPoint] = field(default_factory=list)
    room: np.ndarray = field(default_factory=lambda: np.array([8.0, 8.0, 3.5]))

    def __post_init__(self):
        self.room = np.asarray(self.room, dtype=float).reshape(3)
        if np.any(self.room <= 0):
            raise ValueError("room extents must be positive")
        if not self.leds:
            raise ValueError("scene needs at least one LED")
        if not self.pds:
            raise ValueError("scene needs at least one PD")
        for kind, devices in (("led", self.leds), ("pd", self.pds), ("oirs", self.oirs)):
            for k, dev in enumerate(devices):
                p = dev.position
                if np.any(p < -1e-9) or np.any(p > self.room + 1e-9):
                    raise ValueError(f"{kind}[{k}] position {p.tolist()} outside room")

    @property
    def n_tx(self) -> int:
        return len(self.leds)

    @property
    def n_rx(self) -> int:
        return len(self.pds)

    @property
    def n_elements(self) -> int:
        return len(self.oirs)

    def positions(self, kind: str) -> np.ndarray:
        devices = {"leds": self.leds, "pds": self.pds, "oirs": self.oirs}[kind]
        if not devices:
            return np.zeros((0, 3))
        return np.stack([d.position for d in devices])

    def normals(self, kind: str) -> np.ndarray:
        devices = {"leds": self.leds, "pds": self.pds, "oirs": self.oirs}[kind]
        if not devices:
            return np.zeros((0, 3))
        return np.stack([d.normal for d in devices])


def path_geometry(src: OrientedPoint, dst: OrientedPoint) -> GeometricPath:
    """Distance and the two direction cosines of the src -> dst leg.

    cos_irradiance is measured against src.normal, cos_incidence against
    dst.normal.  Either may be negative when the device faces away; callers
    decide how to mask.  Raises for coincident endpoints.
    """
    diff = dst.position - src.position
    dist = float(np.linalg.norm(diff))
    if dist < 1e-12:
        raise ValueError("coincident devices: path has zero length")
    u = diff / dist
    return GeometricPath(
        distance=dist,
        cos_irradiance=float(np.dot(src.normal, u)),
        cos_incidence=float(np.dot(dst.normal, -u)),
    )


def rayleigh_distance(aperture: float, frequency: float) -> float:
    """Near-field boundary 2 L^2 f / c for aperture L (m) at carrier f (Hz).

    Links shorter than this operate in the radiating near field, where the
    no-crosstalk reflector model applies.
    """
    if aperture <= 0 or frequency <= 0:
        raise ValueError("aperture and frequency must be positive")
    return 2.0 * aperture * aperture * frequency / SPEED_OF_LIGHT


def default_scene_config() -> dict:
    """Config for the standard 8 x 8 x 3.5 m evaluation room.

    4 ceiling LEDs on a 0.5 m grid, 4 PDs on a 0.2 m grid around the
    receiver point (2, 3.2, 1), and 32 reflector elements on the x = 0 wall
    rectangle y in [1, 7], z in [1.2, 2.9].
    """
    return {
        "room": [8.0, 8.0, 3.5],
        "leds": {"count": 4, "spacing": 0.5},
        "pds": {"count": 4, "spacing": 0.2, "center": [2.0, 3.2, 1.0]},
        "oirs": {
            "count": 32,
            "wall": {"axis": "x", "offset": 0.0, "u_range": [1.0, 7.0], "v_range": [1.2, 2.9]},
        },
    }


def build_scene(config: dict) -> Scene:
    """Build and validate a Scene from a config dict.

    Each device class is either an explicit list of [position, normal] pairs
    (or {"position": ..., "normal": ...} dicts) or a grid-generator dict:

      leds: {count, spacing=0.5, center=[Lx/2, Ly/2], height=Lz}
      pds:  {count, spacing=0.2, center=[x, y, z]}
      oirs: {count, wall: {axis, offset, u_range, v_range}}

    Grids are row-major and centred; wall grids pick a column count matching
    the rectangle aspect ratio so elements spread over the full rectangle.
    """
    room = np.asarray(config.get("room", [8.0, 8.0, 3.5]), dtype=float).reshape(3)

    leds = _device_class(config.get("leds"), room, _generate_leds, (0.0, 0.0, -1.0))
    pds = _device_class(config.get("pds"), room, _generate_pds, (0.0, 0.0, 1.0))
    oirs_cfg = config.get("oirs", {"count": 0})
    if isinstance(oirs_cfg, dict) and oirs_cfg.get("count", 0) == 0:
        oirs = []
    else:
        oirs = _device_class(oirs_cfg, room, _generate_wall, None)
    return Scene(leds=leds, pds=pds, oirs=oirs, room=room)


def _device_class(cfg, room, generator, default_normal):
    if cfg is None:
        raise ValueError("scene config missing a device class")
    if isinstance(cfg, dict):
        return generator(cfg, room)
    points = []
    for entry in cfg:
        if isinstance(entry, dict):
            pos, nrm = entry["position"], entry.get("normal", default_normal)
        else:
            pos, nrm = entry[0], entry[1] if len(entry) > 1 else default_normal
        if nrm is None:
            raise ValueError("explicit device entries need a normal")
        points.append(OrientedPoint(pos, nrm))
    return points


def _grid_offsets(count: int, spacing: float) -> np.ndarray:
    """Centred row-major (count, 2) offsets on a near-square grid."""
    cols = math.ceil(math.sqrt(count))
    rows = math.ceil(count / cols)
    offs = []
    for k in range(count):
        r, c = divmod(k, cols)
        offs.append(((c - (cols - 1) / 2.0) * spacing, (r - (rows - 1) / 2.0) * spacing))
    return np.array(offs)


def _generate_leds(cfg, room):
    count = int(cfg["count"])
    spacing = float(cfg.get("spacing", 0.5))
    center = cfg.get("center", [room[0] / 2.0, room[1] / 2.0])
    height = float(cfg.get("height", room[2]))
    offs = _grid_offsets(count, spacing)
    return [
        OrientedPoint([center[0] + dx, center[1] + dy, height], (0.0, 0.0, -1.0))
        for dx, dy in offs
    ]


def _generate_pds(cfg, room):
    count = int(cfg["count"])
    spacing = float(cfg.get("spacing", 0.2))
    center = np.asarray(cfg["center"], dtype=float).reshape(3)
    if np.any(center < 0) or np.any(center > room):
        raise ValueError(f"receiver center {center.tolist()} outside room")
    offs = _grid_offsets(count, spacing)
    return [
        OrientedPoint([center[0] + dx, center[1] + dy, center[2]], (0.0, 0.0, 1.0))
        for dx, dy in offs
    ]


def _generate_wall(cfg, room):
    count = int(cfg["count"])
    wall = cfg["wall"]
    axis = {"x": 0, "y": 1}[wall.get("axis", "x")]
    offset = float(wall.get("offset", 0.0))
    u_lo, u_hi = (float(v) for v in wall["u_range"])
    v_lo, v_hi = (float(v) for v in wall["v_range"])
    if u_hi <= u_lo or v_hi <= v_lo:
        raise ValueError("wall rectangle ranges must be increasing")
    # inward normal: toward the room interior along the wall axis
    sign = 1.0 if offset < room[axis] / 2.0 else -1.0
    normal = np.zeros(3)
    normal[axis] = sign

    du, dv = u_hi - u_lo, v_hi - v_lo
    cols = max(1, round(math.sqrt(count * du / dv)))
    rows = math.ceil(count / cols)
    points = []
    for k in range(count):
        r, c = divmod(k, cols)
        u = u_lo + (c + 0.5) * du / cols
        v = v_lo + (r + 0.5) * dv / rows
        pos = np.zeros(3)
        pos[axis] = offset
        pos[1 - axis] = u
        pos[2] = v
        points.append(OrientedPoint(pos, normal))
    return points
