"""Measurement geometry: linearization, constellation simulation, visibility.

Builds the linear systems consumed by the estimator and detectors, and
provides the synthetic-geometry pieces used by the experiment harness:
a circular-orbit Walker constellation propagator, an elevation-based
visibility filter, and a worldwide user grid on the WGS-84 ellipsoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError

# WGS-84 ellipsoid
WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

# Earth gravitational parameter and rotation rate
EARTH_GM = 3.986004418e14
EARTH_ROTATION_RATE = 7.2921151467e-5

# GPS L1/L5 center frequencies (Hz) for the ionosphere-free combination
L1_FREQUENCY = 1575.42e6
L5_FREQUENCY = 1176.45e6

DEFAULT_ELEVATION_MASK_DEG = 5.0


@dataclass(frozen=True)
class EcefPosition:
    """A point in the Earth-Centered Earth-Fixed frame, meters."""

    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, a) -> "EcefPosition":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]))


def _positions_array(positions) -> np.ndarray:
    """Coerce a list of EcefPosition or an (n, 3) array-like to ndarray."""
    if isinstance(positions, np.ndarray):
        arr = positions.astype(float, copy=False)
    else:
        rows = [p.as_array() if isinstance(p, EcefPosition) else np.asarray(p, dtype=float)
                for p in positions]
        arr = np.vstack(rows)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("satellite positions must have shape (n, 3)")
    if not np.isfinite(arr).all():
        raise ValueError("satellite positions must be finite")
    return arr


@dataclass(frozen=True)
class LinearSystem:
    """Linearized measurement system y = G x + e for one epoch.

    Attributes
    ----------
    y : ndarray, shape (n,)
        Observation vector in meters (predicted minus measured pseudorange).
    G : ndarray, shape (n, m)
        Geometry matrix: unit direction cosines plus a clock column of ones.
    w : ndarray, shape (n,)
        Diagonal of the positive weighting matrix, units 1/m^2.
    x0 : ndarray, shape (m,)
        Linearization point (position and clock, meters).
    """

    y: np.ndarray
    G: np.ndarray
    w: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        G = np.asarray(self.G, dtype=float)
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if G.ndim != 2:
            raise ValueError("G must be a matrix")
        n, m = G.shape
        if y.shape != (n,) or w.shape != (n,) or x0.shape != (m,):
            raise ValueError("inconsistent system shapes")
        if not (np.isfinite(y).all() and np.isfinite(G).all() and np.isfinite(w).all()):
            raise ValueError("system entries must be finite")
        if np.any(w <= 0.0):
            raise ValueError("all weights must be positive")
        for name, val in (("y", y), ("G", G), ("w", w), ("x0", x0)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.G.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[1]

    @property
    def W(self) -> np.ndarray:
        """Full diagonal weighting matrix."""
        return np.diag(self.w)

    def with_weights(self, w) -> "LinearSystem":
        return LinearSystem(self.y, self.G, np.asarray(w, dtype=float), self.x0)


@dataclass(frozen=True)
class EpochRecord:
    """One epoch of per-satellite observations, the replay/simulation unit."""

    epoch_s: float
    sat_ids: tuple
    sat_positions: np.ndarray  # (n, 3) meters
    measurements: np.ndarray   # (n,) pseudoranges, meters
    elevations_deg: np.ndarray  # (n,)
    truth_position: np.ndarray | None = None  # evaluation only

    def __post_init__(self):
        pos = _positions_array(self.sat_positions)
        meas = np.atleast_1d(np.asarray(self.measurements, dtype=float))
        elev = np.atleast_1d(np.asarray(self.elevations_deg, dtype=float))
        ids = tuple(self.sat_ids)
        if len(ids) != len(set(ids)):
            raise ValueError("satellite ids must be unique within an epoch")
        if not (len(ids) == pos.shape[0] == meas.shape[0] == elev.shape[0]):
            raise ValueError("per-satellite arrays must share one length")
        if np.any(elev < -90.0) or np.any(elev > 90.0):
            raise ValueError("elevations must lie in [-90, 90] degrees")
        object.__setattr__(self, "sat_ids", ids)
        object.__setattr__(self, "sat_positions", pos)
        object.__setattr__(self, "measurements", meas)
        object.__setattr__(self, "elevations_deg", elev)
        if self.truth_position is not None:
            object.__setattr__(self, "truth_position",
                               np.asarray(self.truth_position, dtype=float))

    @property
    def n(self) -> int:
        return len(self.sat_ids)


@dataclass(frozen=True)
class ConstellationConfig:
    """Walker constellation parameters (defaults follow a 27-satellite MEO design)."""

    total_satellites: int = 27
    planes: int = 3
    phasing: int = 1
    semi_major_axis_m: float = 29_600_318.0
    inclination_deg: float = 56.0
    elevation_mask_deg: float = DEFAULT_ELEVATION_MASK_DEG

    def __post_init__(self):
        if self.total_satellites % self.planes != 0:
            raise ValueError("total satellites must divide evenly into planes")
        if not (0.0 <= self.elevation_mask_deg < 90.0):
            raise ValueError("elevation mask must lie in [0, 90)")

    @property
    def sats_per_plane(self) -> int:
        return self.total_satellites // self.planes


def linearize_spp(sat_positions, measurements, x0, weights=None) -> LinearSystem:
    """Linearize single point positioning about ``x0``.

    Parameters
    ----------
    sat_positions : (n, 3) array or list of EcefPosition
    measurements : (n,) pseudoranges in meters
    x0 : (4,) linearization point [x, y, z, clock], meters

    Returns
    -------
    LinearSystem
        Row i of G is [a_i1, a_i2, a_i3, 1] with a_i the unit vector from
        the linearization point to satellite i, and y_i is the predicted
        pseudorange at ``x0`` minus the measured one. The fourth state is
        the negated clock increment, so reconstruct the clock with
        ``x0[3] - x_hat[3]``.
    """
    pos = _positions_array(sat_positions)
    rho = np.atleast_1d(np.asarray(measurements, dtype=float))
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (4,) or not np.isfinite(x0).all():
        raise ValueError("x0 must be a finite 4-vector")
    if rho.shape[0] != pos.shape[0]:
        raise ValueError("measurements must match satellite count")

    diff = pos - x0[:3]
    ranges = np.linalg.norm(diff, axis=1)
    if np.any(ranges < 1.0):
        raise DegenerateGeometryError("satellite coincident with linearization point")

    G = np.empty((pos.shape[0], 4))
    G[:, :3] = diff / ranges[:, None]
    G[:, 3] = 1.0
    predicted = ranges + x0[3]
    y = predicted - rho
    w = np.ones(pos.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    return LinearSystem(y=y, G=G, w=w, x0=x0)


def solve_linearization_point(sat_positions, measurements, x0=None,
                              tol_m: float = 1e-4, max_passes: int = 10) -> np.ndarray:
    """Gauss-Newton refinement of the linearization point.

    Iterates unweighted least-squares updates from ``x0`` (origin by default)
    until the position step drops below ``tol_m`` or ``max_passes`` is hit,
    then returns the fixed point. Two passes suffice from a warm start; the
    cap only matters when starting cold at the Earth's center.
    """
    pos = _positions_array(sat_positions)
    rho = np.atleast_1d(np.asarray(measurements, dtype=float))
    x0 = np.zeros(4) if x0 is None else np.asarray(x0, dtype=float).copy()
    for _ in range(max_passes):
        sys = linearize_spp(pos, rho, x0)
        x_hat, *_ = np.linalg.lstsq(sys.G, sys.y, rcond=None)
        x0 = x0 + np.array([x_hat[0], x_hat[1], x_hat[2], -x_hat[3]])
        if np.linalg.norm(x_hat[:3]) < tol_m:
            break
    return x0


def iono_free_combine(rho_l1, rho_l5, f_l1: float = L1_FREQUENCY,
                      f_l5: float = L5_FREQUENCY):
    """Dual-frequency ionosphere-free pseudorange combination.

    Returns (gamma * rho_l1 - rho_l5) / (gamma - 1) with
    gamma = (f_l1 / f_l5) ** 2. Accepts scalars or arrays.
    """
    rho_l1 = np.asarray(rho_l1, dtype=float)
    rho_l5 = np.asarray(rho_l5, dtype=float)
    if not (np.isfinite(rho_l1).all() and np.isfinite(rho_l5).all()):
        raise ValueError("pseudoranges must be finite")
    gamma = (f_l1 / f_l5) ** 2
    out = (gamma * rho_l1 - rho_l5) / (gamma - 1.0)
    return float(out) if out.ndim == 0 else out


def propagate_walker(config: ConstellationConfig, epoch_s: float) -> np.ndarray:
    """Positions of a Walker i:t/p/f constellation at one epoch.

    Satellites fly circular Keplerian orbits. Plane p (0-based) has right
    ascension 2*pi*p/planes; slot s in that plane has argument of latitude
    2*pi*s/per_plane + 2*pi*f*p/total plus the mean motion times the epoch.
    The inertial positions are rotated into ECEF by the Earth rotation
    accumulated since epoch 0. Deterministic in (config, epoch).

    Returns
    -------
    ndarray, shape (total_satellites, 3)
        Ordered plane-major: index p * sats_per_plane + s.
    """
    a = config.semi_major_axis_m
    inc = np.radians(config.inclination_deg)
    t = config.total_satellites
    p = config.planes
    s = config.sats_per_plane
    mean_motion = np.sqrt(EARTH_GM / a**3)

    plane_idx = np.repeat(np.arange(p), s)
    slot_idx = np.tile(np.arange(s), p)
    raan = 2.0 * np.pi * plane_idx / p
    arg_lat = (2.0 * np.pi * slot_idx / s
               + 2.0 * np.pi * config.phasing * plane_idx / t
               + mean_motion * epoch_s)

    cos_u, sin_u = np.cos(arg_lat), np.sin(arg_lat)
    cos_i, sin_i = np.cos(inc), np.sin(inc)
    cos_o, sin_o = np.cos(raan), np.sin(raan)
    # R_z(raan) @ R_x(inc) @ [a cos u, a sin u, 0]
    x_i = a * (cos_o * cos_u - sin_o * cos_i * sin_u)
    y_i = a * (sin_o * cos_u + cos_o * cos_i * sin_u)
    z_i = a * sin_i * sin_u

    theta = EARTH_ROTATION_RATE * epoch_s
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    x = cos_t * x_i + sin_t * y_i
    y = -sin_t * x_i + cos_t * y_i
    return np.column_stack([x, y, z_i])


def elevation_angles(user, sat_positions) -> np.ndarray:
    """Elevation of each satellite above the local spherical horizon, degrees."""
    user = np.asarray(user, dtype=float).reshape(3)
    pos = _positions_array(sat_positions)
    up = user / np.linalg.norm(user)
    los = pos - user
    los_unit = los / np.linalg.norm(los, axis=1)[:, None]
    sin_el = np.clip(los_unit @ up, -1.0, 1.0)
    return np.degrees(np.arcsin(sin_el))


def visible_satellites(user, sat_positions, mask_deg: float = DEFAULT_ELEVATION_MASK_DEG):
    """Indices and elevations of satellites at or above the elevation mask."""
    elev = elevation_angles(user, sat_positions)
    idx = np.flatnonzero(elev >= mask_deg)
    return idx, elev[idx]


def geodetic_to_ecef(lat_deg, lon_deg, height_m=0.0) -> np.ndarray:
    """Geodetic coordinates on WGS-84 to ECEF; broadcasts over inputs."""
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    lon = np.radians(np.asarray(lon_deg, dtype=float))
    n_rad = WGS84_A / np.sqrt(1.0 - WGS84_E2 * np.sin(lat) ** 2)
    x = (n_rad + height_m) * np.cos(lat) * np.cos(lon)
    y = (n_rad + height_m) * np.cos(lat) * np.sin(lon)
    z = (n_rad * (1.0 - WGS84_E2) + height_m) * np.sin(lat)
    return np.stack([x, y, z], axis=-1)


def user_grid(spacing_deg: float) -> np.ndarray:
    """Worldwide user locations on the WGS-84 surface.

    Longitudes step from -180 in ``spacing_deg`` increments; latitudes are
    offset by half a step so the poles are excluded. The count is always
    (360 / spacing) * (180 / spacing); 10 degrees gives 648 locations.
    """
    if spacing_deg <= 0 or 360.0 % spacing_deg != 0:
        raise ValueError("spacing must be positive and divide 360")
    lons = -180.0 + spacing_deg * np.arange(int(round(360.0 / spacing_deg)))
    lats = -90.0 + spacing_deg / 2.0 + spacing_deg * np.arange(int(round(180.0 / spacing_deg)))
    lat_grid, lon_grid = np.meshgrid(lats, lons, indexing="ij")
    return geodetic_to_ecef(lat_grid.ravel(), lon_grid.ravel())


def grid_latlon(spacing_deg: float) -> np.ndarray:
    """(lat, lon) pairs matching the ordering of :func:`user_grid`."""
    lons = -180.0 + spacing_deg * np.arange(int(round(360.0 / spacing_deg)))
    lats = -90.0 + spacing_deg / 2.0 + spacing_deg * np.arange(int(round(180.0 / spacing_deg)))
    lat_grid, lon_grid = np.meshgrid(lats, lons, indexing="ij")
    return np.column_stack([lat_grid.ravel(), lon_grid.ravel()])
