"""Radio environment: bands, cells, propagation, shadowing and user mobility.

Conventions used throughout:

* positions are metres in a square area ``[0, area_side]^2``;
* azimuths are degrees counter-clockwise from the +x axis;
* path loss is returned as a signed gain (negative dB), so received power is
  a plain sum ``tx + gains + shadowing + path_gain``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InputDomainError
from .seeding import substream

SPEED_OF_LIGHT = 2.998e8  # m/s
USER_HEIGHT_M = 1.5
SPEED_SET_KMH = (3.0, 60.0, 120.0, 240.0)

SECTOR_BEAMWIDTH_DEG = 65.0
SECTOR_MAX_ATTENUATION_DB = 30.0


@dataclass(frozen=True)
class BandConfig:
    band_id: int
    carrier_frequency: float  # GHz
    bandwidth: float  # MHz
    total_prbs: int
    tx_power: float  # dBm
    antenna_height: float  # m
    antenna_kind: str  # "tri-sector" or "omni"
    max_antenna_gain: float  # dBi

    def __post_init__(self):
        if self.total_prbs <= 0:
            raise ConfigurationError(f"band {self.band_id}: total_prbs must be positive", "total_prbs")
        if not math.isfinite(self.tx_power):
            raise ConfigurationError(f"band {self.band_id}: tx_power must be finite", "tx_power")
        if not self.carrier_frequency > 0:
            raise ConfigurationError(
                f"band {self.band_id}: carrier_frequency must be positive", "carrier_frequency"
            )
        if self.antenna_kind not in ("tri-sector", "omni"):
            raise ConfigurationError(f"unknown antenna kind {self.antenna_kind!r}", "antenna_kind")

    @property
    def label(self) -> str:
        """Frequency label in MHz, e.g. ``"1700"``."""
        return f"{round(self.carrier_frequency * 1000):d}"


DEFAULT_BANDS = (
    BandConfig(0, 1.7, 10.0, 52, 35.0, 30.0, "tri-sector", 14.0),
    BandConfig(1, 2.1, 15.0, 78, 35.0, 30.0, "tri-sector", 14.0),
    BandConfig(2, 3.5, 20.0, 106, 20.0, 20.0, "omni", 0.0),
)


@dataclass
class Cell:
    cell_id: int
    band: BandConfig
    site_position: tuple[float, float]
    azimuth: float = float("nan")  # tri-sector only
    allocated_prbs: float = 0.0  # may be a time average

    def __post_init__(self):
        if not 0 <= self.allocated_prbs <= self.band.total_prbs:
            raise InputDomainError(
                f"cell {self.cell_id}: allocated_prbs {self.allocated_prbs} outside "
                f"[0, {self.band.total_prbs}]"
            )

    @property
    def band_id(self) -> int:
        return self.band.band_id


@dataclass(frozen=True)
class PropagationModel:
    ple_near: float = 2.9
    ple_far: float = 3.9
    breakpoint_distance: float = 150.0  # m
    shadowing_sigma: float = 6.9  # dB
    shadowing_grid_resolution: float = 10.0  # m
    shadowing_seed: int = 0

    def __post_init__(self):
        if not (self.ple_near > 0 and self.ple_far > 0):
            raise ConfigurationError("path-loss exponents must be positive", "ple_near")
        if not self.breakpoint_distance > 1.0:
            raise ConfigurationError("breakpoint_distance must exceed 1 m", "breakpoint_distance")
        if not self.shadowing_sigma >= 0:
            raise ConfigurationError("shadowing_sigma must be non-negative", "shadowing_sigma")
        if not self.shadowing_grid_resolution > 0:
            raise ConfigurationError(
                "shadowing_grid_resolution must be positive", "shadowing_grid_resolution"
            )


@dataclass
class User:
    user_id: int
    position: tuple[float, float]
    speed: float  # km/h
    waypoint: tuple[float, float]
    serving_cell: int = -1
    prb_demand: int = 4

    def __post_init__(self):
        if self.speed not in SPEED_SET_KMH:
            raise InputDomainError(f"user speed {self.speed} km/h not in {SPEED_SET_KMH}")


@dataclass(frozen=True)
class NetworkConfig:
    area_side: float = 2000.0  # m
    macro_count_per_band: int = 6
    small_cell_count: int = 12
    user_density: float = 15.0  # users per km^2
    tti: int = 1  # ms
    sim_duration: int = 60_000  # ms
    master_seed: int = 0
    bands: tuple[BandConfig, ...] = field(default=DEFAULT_BANDS)
    prb_demand: int = 4
    site_jitter: float = 0.05  # fraction of the inter-site distance

    def __post_init__(self):
        for key in ("area_side", "user_density", "tti", "sim_duration", "prb_demand"):
            if not getattr(self, key) > 0:
                raise ConfigurationError(f"{key} must be positive", key)
        if self.macro_count_per_band <= 0 or self.macro_count_per_band % 3:
            raise ConfigurationError(
                "macro_count_per_band must be a positive multiple of 3 (tri-sector sites)",
                "macro_count_per_band",
            )
        if self.small_cell_count <= 0:
            raise ConfigurationError("small_cell_count must be positive", "small_cell_count")
        if self.sim_duration % self.tti:
            raise ConfigurationError("sim_duration must be a multiple of tti", "sim_duration")

    @property
    def user_count(self) -> int:
        return max(1, round(self.user_density * (self.area_side / 1000.0) ** 2))

    @property
    def n_ticks(self) -> int:
        return self.sim_duration // self.tti


# --- propagation -------------------------------------------------------------------


def fspl_1m_db(carrier_ghz: float) -> float:
    """Free-space path loss at the 1 m reference distance."""
    return 20.0 * math.log10(4.0 * math.pi * carrier_ghz * 1e9 / SPEED_OF_LIGHT)


def path_loss_db(distance_3d, band: BandConfig, prop: PropagationModel):
    """Close-in dual-slope path gain (negative dB) at ``distance_3d`` metres.

    Distances below 1 m are clamped to 1 m. Accepts scalars or arrays.
    """
    d = np.asarray(distance_3d, dtype=float)
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise InputDomainError("distance must be finite and positive")
    d = np.maximum(d, 1.0)
    gain = -fspl_1m_db(band.carrier_frequency) - 10.0 * prop.ple_near * np.log10(d)
    far = d > prop.breakpoint_distance
    gain = np.where(far, gain - 10.0 * prop.ple_far * np.log10(d / prop.breakpoint_distance), gain)
    return float(gain) if gain.ndim == 0 else gain


def sector_gain_db(angle_off_boresight_deg, max_gain: float):
    """Horizontal tri-sector pattern; angle is wrapped into [-180, 180)."""
    theta = (np.asarray(angle_off_boresight_deg, dtype=float) + 180.0) % 360.0 - 180.0
    att = np.minimum(12.0 * (theta / SECTOR_BEAMWIDTH_DEG) ** 2, SECTOR_MAX_ATTENUATION_DB)
    out = max_gain - att
    return float(out) if out.ndim == 0 else out


def antenna_gain_db(cell: Cell, position: Sequence[float]) -> float:
    if cell.band.antenna_kind == "omni":
        return cell.band.max_antenna_gain
    dx = position[0] - cell.site_position[0]
    dy = position[1] - cell.site_position[1]
    bearing = math.degrees(math.atan2(dy, dx))
    return sector_gain_db(bearing - cell.azimuth, cell.band.max_antenna_gain)


# --- shadowing -----------------------------------------------------------------------


def shadowing_nodes(area_side: float, resolution: float) -> int:
    return int(math.ceil(area_side / resolution)) + 1


@lru_cache(maxsize=256)
def shadowing_map(cell_id: int, prop: PropagationModel, area_side: float) -> np.ndarray:
    """i.i.d. N(0, sigma^2) samples on the shadowing grid of one cell.

    Indexed ``[ix, iy]``; node ``(i, j)`` sits at ``(i*res, j*res)``.
    """
    n = shadowing_nodes(area_side, prop.shadowing_grid_resolution)
    if prop.shadowing_sigma == 0:
        grid = np.zeros((n, n))
    else:
        rng = substream(prop.shadowing_seed, "shadowing", cell_id)
        grid = rng.normal(0.0, prop.shadowing_sigma, size=(n, n))
    grid.setflags(write=False)
    return grid


def bilinear(grid: np.ndarray, x: float, y: float, resolution: float) -> float:
    n = grid.shape[0]
    fx = min(max(x / resolution, 0.0), n - 1.0)
    fy = min(max(y / resolution, 0.0), n - 1.0)
    i = min(int(fx), n - 2)
    j = min(int(fy), n - 2)
    tx = fx - i
    ty = fy - j
    return float(
        grid[i, j] * (1 - tx) * (1 - ty)
        + grid[i + 1, j] * tx * (1 - ty)
        + grid[i, j + 1] * (1 - tx) * ty
        + grid[i + 1, j + 1] * tx * ty
    )


def shadowing_at(
    cell: Cell, position: Sequence[float], prop: PropagationModel, area_side: float = 2000.0
) -> float:
    """Spatially smooth shadowing (dB) seen from ``cell`` at ``position``.

    Positions outside the area are clamped to its boundary.
    """
    if prop.shadowing_sigma == 0:
        return 0.0
    x = min(max(position[0], 0.0), area_side)
    y = min(max(position[1], 0.0), area_side)
    grid = shadowing_map(cell.cell_id, prop, float(area_side))
    return bilinear(grid, x, y, prop.shadowing_grid_resolution)


def distance_3d(cell: Cell, position: Sequence[float]) -> float:
    dx = position[0] - cell.site_position[0]
    dy = position[1] - cell.site_position[1]
    dh = cell.band.antenna_height - USER_HEIGHT_M
    return math.sqrt(dx * dx + dy * dy + dh * dh)


def rsrp_dbm(
    cell: Cell,
    user: User,
    prop: PropagationModel,
    area_side: float = 2000.0,
    user_gain: float = 0.0,
) -> float:
    """Downlink RSRP from ``cell`` at the user's position, all terms in dB."""
    d = distance_3d(cell, user.position)
    return (
        cell.band.tx_power
        + user_gain
        + antenna_gain_db(cell, user.position)
        + shadowing_at(cell, user.position, prop, area_side)
        + path_loss_db(d, cell.band, prop)
    )


# --- mobility ------------------------------------------------------------------------


def draw_waypoint(rng: np.random.Generator, area_side: float) -> tuple[float, float]:
    x, y = rng.uniform(0.0, area_side, size=2)
    return float(x), float(y)


def step_mobility(user: User, dt: float, area: NetworkConfig, rng: np.random.Generator) -> User:
    """Advance ``user`` by ``speed * dt`` along its random-waypoint path.

    Pause time is zero: on reaching a waypoint a new one is drawn from ``rng``
    and the remaining distance is travelled towards it.
    """
    if not dt > 0:
        raise InputDomainError("dt must be positive")
    remaining = user.speed / 3600.0 * dt  # km/h -> m/ms
    x, y = user.position
    wx, wy = user.waypoint
    while True:
        leg = math.hypot(wx - x, wy - y)
        if leg > remaining:
            x += (wx - x) * remaining / leg
            y += (wy - y) * remaining / leg
            break
        remaining -= leg
        x, y = wx, wy
        wx, wy = draw_waypoint(rng, area.area_side)
    return User(user.user_id, (x, y), user.speed, (wx, wy), user.serving_cell, user.prb_demand)


def trajectory(
    start: tuple[float, float],
    first_waypoint: tuple[float, float],
    speed_kmh: float,
    n_ticks: int,
    tti: float,
    area_side: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Position at the start of each of ``n_ticks`` ticks, shape ``(n_ticks, 2)``.

    Row ``k`` equals the position after ``k`` :func:`step_mobility` calls with
    the same ``rng``: the path is the waypoint polyline parametrised by arc length.
    """
    total = speed_kmh / 3600.0 * tti * n_ticks
    pts = [start, first_waypoint]
    length = math.hypot(first_waypoint[0] - start[0], first_waypoint[1] - start[1])
    # one extra waypoint past the end keeps step_mobility and this in lockstep
    while length <= total:
        nxt = draw_waypoint(rng, area_side)
        length += math.hypot(nxt[0] - pts[-1][0], nxt[1] - pts[-1][1])
        pts.append(nxt)
    pts = np.asarray(pts)
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    s = speed_kmh / 3600.0 * tti * np.arange(n_ticks)
    return np.column_stack([np.interp(s, cum, pts[:, 0]), np.interp(s, cum, pts[:, 1])])


# --- topology ------------------------------------------------------------------------


def _hex_sites(n_sites: int, area_side: float) -> np.ndarray:
    isd = area_side / math.ceil(math.sqrt(n_sites))
    rings = int(math.ceil(math.sqrt(n_sites))) + 1
    pts = []
    for q in range(-rings, rings + 1):
        for r in range(-rings, rings + 1):
            pts.append((isd * (q + r / 2.0), isd * r * math.sqrt(3) / 2.0))
    pts = np.array(pts)
    order = np.lexsort((pts[:, 1], pts[:, 0], np.round(np.hypot(pts[:, 0], pts[:, 1]), 6)))
    chosen = pts[order[:n_sites]]
    return chosen - chosen.mean(axis=0) + area_side / 2.0


def build_cells(net: NetworkConfig, seed: int) -> list[Cell]:
    """Macro layers on a jittered hexagonal site grid plus uniform small cells.

    All tri-sector bands share the same sites; omni bands get
    ``small_cell_count`` independent uniform positions.
    """
    n_sites = net.macro_count_per_band // 3
    sites = _hex_sites(n_sites, net.area_side)
    isd = net.area_side / math.ceil(math.sqrt(n_sites))
    rng = substream(seed, "sites")
    sites = sites + rng.normal(0.0, net.site_jitter * isd, size=sites.shape)
    sites = np.clip(sites, 0.0, net.area_side)

    cells: list[Cell] = []
    for band in net.bands:
        if band.antenna_kind == "tri-sector":
            for sx, sy in sites:
                for az in (0.0, 120.0, 240.0):
                    cells.append(Cell(len(cells), band, (float(sx), float(sy)), az))
        else:
            pos = substream(seed, "small-cells", band.band_id).uniform(
                0.0, net.area_side, size=(net.small_cell_count, 2)
            )
            for sx, sy in pos:
                cells.append(Cell(len(cells), band, (float(sx), float(sy))))
    return cells


def build_users(net: NetworkConfig, seed: int) -> list[User]:
    rng = substream(seed, "users")
    users = []
    for uid in range(net.user_count):
        pos = draw_waypoint(rng, net.area_side)
        speed = float(rng.choice(SPEED_SET_KMH))
        users.append(User(uid, pos, speed, (0.0, 0.0), prb_demand=net.prb_demand))
    for u in users:
        u.waypoint = draw_waypoint(substream(seed, "mobility", u.user_id), net.area_side)
    return users


def mobility_rng(seed: int, user_id: int) -> np.random.Generator:
    """The waypoint stream of one user; the first draw is its initial waypoint."""
    return substream(seed, "mobility", user_id)


def write_topology_csv(cells: Sequence[Cell], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_id", "band_ghz", "x_m", "y_m", "azimuth_deg", "height_m", "tx_dbm"])
        for c in cells:
            w.writerow(
                [
                    c.cell_id,
                    repr(c.band.carrier_frequency),
                    repr(c.site_position[0]),
                    repr(c.site_position[1]),
                    repr(c.azimuth),
                    repr(c.band.antenna_height),
                    repr(c.band.tx_power),
                ]
            )
