"""Cell geometry and Rician channel sampling for a surface-aided downlink.

Conventions used throughout:

- distances in meters, powers in linear milliwatt, angles in radians;
- large-scale gain is the bare power law ``d ** -beta`` (no carrier constant);
- the base station sits at the origin of a 2-D plane, reflecting surfaces and
  obstacles live on circles around it;
- every random quantity is drawn from an explicit ``numpy.random.Generator``
  so that a configuration plus a seed pins the realisation bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

TWO_PI = 2.0 * np.pi

# Paths per NLoS sum are drawn in chunks so the (paths, N, M) scratch tensor
# for the BS-surface link stays bounded in memory for large arrays.
_PATH_CHUNK = 512


class DegenerateConfigError(ValueError):
    """A link has neither a deterministic component nor scattered paths."""


class PlacementError(RuntimeError):
    """User placement kept landing inside obstacles; the cell is over-packed."""


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly symmetric unit-variance complex Gaussian draws."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


# ---------------------------------------------------------------------------
# array responses
# ---------------------------------------------------------------------------


def ula_steering(theta: float, n_antennas: int, delta: float = 0.5) -> np.ndarray:
    """Response of a uniform linear array toward azimuth ``theta``.

    Element ``m`` contributes ``exp(1j * 2 pi delta m cos(theta))`` with
    ``delta`` the element spacing in wavelengths.
    """
    phase = TWO_PI * delta * np.cos(theta) * np.arange(n_antennas)
    return np.exp(1j * phase)


def _ula_many(thetas: np.ndarray, n_antennas: int, delta: float) -> np.ndarray:
    """Stacked ULA responses, shape (n_antennas, len(thetas))."""
    phase = TWO_PI * delta * np.outer(np.arange(n_antennas), np.cos(thetas))
    return np.exp(1j * phase)


def pla_steering(psi_z: float, psi_x: float, n_x: int, n_y: int, delta: float = 0.5) -> np.ndarray:
    """Response of an ``n_x``-by-``n_y`` planar array, flattened to length ``n_x * n_y``.

    The vertical factor advances by ``-2 pi delta sin(psi_z) cos(psi_x)`` per
    row, the horizontal factor by ``-2 pi delta cos(psi_x) cos(psi_z)`` per
    column, and the full response is their Kronecker product.
    """
    k_z = -TWO_PI * delta * np.sin(psi_z) * np.cos(psi_x)
    k_x = -TWO_PI * delta * np.cos(psi_x) * np.cos(psi_z)
    b_z = np.exp(1j * k_z * np.arange(n_y))
    b_x = np.exp(1j * k_x * np.arange(n_x))
    return np.kron(b_z, b_x)


def _pla_many(psi_zs, psi_xs, n_x: int, n_y: int, delta: float) -> np.ndarray:
    """Stacked planar responses, shape (n_x * n_y, len(psi_xs))."""
    psi_zs = np.asarray(psi_zs, dtype=float)
    psi_xs = np.asarray(psi_xs, dtype=float)
    k_z = -TWO_PI * delta * np.sin(psi_zs) * np.cos(psi_xs)
    k_x = -TWO_PI * delta * np.cos(psi_xs) * np.cos(psi_zs)
    b_z = np.exp(1j * np.outer(np.arange(n_y), k_z))
    b_x = np.exp(1j * np.outer(np.arange(n_x), k_x))
    # column-wise Kronecker product
    n = n_x * n_y
    return (b_z[:, None, :] * b_x[None, :, :]).reshape(n, -1)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SteeringConfig:
    """Array sizes shared by every link of a scenario."""

    m_antennas: int = 8
    n_x: int = 10
    n_y: int = 10
    delta: float = 0.5

    def __post_init__(self):
        if self.m_antennas < 1 or self.n_x < 1 or self.n_y < 1:
            raise ValueError("array dimensions must be positive")
        if self.delta <= 0:
            raise ValueError("element spacing must be positive")

    @property
    def n_elements(self) -> int:
        return self.n_x * self.n_y


@dataclass(frozen=True)
class LinkParams:
    """Small-scale fading parameters of one link."""

    rician_k: float
    pathloss_beta: float
    n_paths: int

    def __post_init__(self):
        if self.rician_k < 0:
            raise ValueError("Rician factor must be >= 0")
        if self.pathloss_beta <= 0:
            raise ValueError("path loss exponent must be positive")
        if self.n_paths < 0:
            raise ValueError("path count must be >= 0")
        if self.rician_k == 0 and self.n_paths == 0:
            raise DegenerateConfigError("link with no deterministic part and no scattered paths")


@dataclass(frozen=True)
class UeLinkParams:
    """Fading parameters of the two links that terminate at a user."""

    direct: LinkParams
    ris_ue: LinkParams


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one random cell.

    ``obstacle_radius``, ``obstacle_center_distance`` and ``obstacle_angles``
    default (when ``None``) to the reference layout: radius ``R/4`` at
    distance ``R/4 + R/5`` on the diagonals, with ``R`` the cell radius.
    """

    cell_radius: float
    n_ues: int
    los_params: UeLinkParams
    nlos_params: UeLinkParams
    bs_ris_params: LinkParams
    steering: SteeringConfig = field(default_factory=SteeringConfig)
    n_ris: int = 4
    n_obstacles: int = 4
    obstacle_radius: float | None = None
    obstacle_center_distance: float | None = None
    obstacle_angles: tuple | None = None
    noise_power: float = 1e-8
    tx_power: float = 251.18864315095797
    seed: int = 0
    max_placement_tries: int = 1000

    def __post_init__(self):
        if self.cell_radius <= 0:
            raise ValueError("cell radius must be positive")
        if self.n_ues < 1:
            raise ValueError("need at least one user")
        if self.n_ris < 1:
            raise ValueError("need at least one reflecting surface")
        if self.noise_power <= 0 or self.tx_power <= 0:
            raise ValueError("powers must be positive (linear mW)")
        if self.obstacle_angles is not None and len(self.obstacle_angles) != self.n_obstacles:
            raise ValueError("obstacle_angles length must match n_obstacles")

    def obstacle_layout(self):
        """Centers (n_obstacles, 2) and radius of the blocking disks."""
        radius = self.obstacle_radius if self.obstacle_radius is not None else self.cell_radius / 4.0
        dist = (
            self.obstacle_center_distance
            if self.obstacle_center_distance is not None
            else self.cell_radius / 4.0 + self.cell_radius / 5.0
        )
        if self.obstacle_angles is not None:
            angles = np.asarray(self.obstacle_angles, dtype=float)
        else:
            angles = np.pi / 4.0 + np.pi / 2.0 * np.arange(self.n_obstacles)
        centers = dist * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return centers, radius

    def ris_layout(self):
        """Positions, BS departure angles and surface arrival azimuths."""
        angles = TWO_PI * np.arange(self.n_ris) / self.n_ris
        positions = self.cell_radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        departure = angles
        arrival_x = np.mod(angles + np.pi, TWO_PI)
        return positions, departure, arrival_x


@dataclass(frozen=True)
class UePlacement:
    """Geometry of one user after placement and surface association."""

    position: tuple
    bs_distance: float
    bs_angle: float
    is_los: bool
    assigned_ris: int
    ris_distance: float
    ris_angle: float


@dataclass
class ChannelRealization:
    """One draw of every channel in the cell.

    ``composite[k]`` stacks ``diag(conj(h_ris[k])) @ g`` of the serving
    surface on top of ``conj(h_direct[k])`` so that for a profile vector
    ``v`` the row ``conj(v) @ composite[k]`` is the end-to-end channel.
    """

    h_direct: np.ndarray  # (K, M) BS -> UE
    g_per_ris: np.ndarray  # (n_ris, N, M) BS -> surface
    h_ris: np.ndarray  # (K, N) serving surface -> UE
    composite: np.ndarray  # (K, N+1, M)

    @property
    def n_ues(self) -> int:
        return self.h_direct.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.h_direct.shape[1]

    @property
    def n_elements(self) -> int:
        return self.h_ris.shape[1]

    @property
    def direct_matrix(self) -> np.ndarray:
        """Direct downlink channel matrix with one column per user, (M, K)."""
        return self.h_direct.T.copy()


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample_direct_channel(
    placement: UePlacement,
    params: LinkParams,
    steering: SteeringConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """BS-to-user channel (length M): deterministic ray plus uniform scatter."""
    gain = placement.bs_distance ** -params.pathloss_beta
    k = params.rician_k
    h = np.zeros(steering.m_antennas, dtype=complex)
    if k > 0:
        los = ula_steering(placement.bs_angle, steering.m_antennas, steering.delta)
        h += np.sqrt(k / (k + 1.0)) * np.sqrt(gain) * los
    if params.n_paths > 0:
        thetas = rng.uniform(0.0, TWO_PI, params.n_paths)
        coeffs = _complex_normal(rng, params.n_paths)
        scatter = _ula_many(thetas, steering.m_antennas, steering.delta) @ coeffs
        h += np.sqrt(1.0 / (k + 1.0)) * np.sqrt(gain / params.n_paths) * scatter
    return h


def sample_ris_ue_channel(
    placement: UePlacement,
    params: LinkParams,
    steering: SteeringConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Serving-surface-to-user channel (length N = n_x * n_y)."""
    gain = placement.ris_distance ** -params.pathloss_beta
    k = params.rician_k
    n = steering.n_elements
    h = np.zeros(n, dtype=complex)
    if k > 0:
        los = pla_steering(0.0, placement.ris_angle, steering.n_x, steering.n_y, steering.delta)
        h += np.sqrt(k / (k + 1.0)) * np.sqrt(gain) * los
    if params.n_paths > 0:
        psis = rng.uniform(0.0, TWO_PI, params.n_paths)
        coeffs = _complex_normal(rng, params.n_paths)
        zeros = np.zeros(params.n_paths)
        scatter = _pla_many(zeros, psis, steering.n_x, steering.n_y, steering.delta) @ coeffs
        h += np.sqrt(1.0 / (k + 1.0)) * np.sqrt(gain / params.n_paths) * scatter
    return h


def sample_bs_ris_channel(
    distance: float,
    arrival: tuple,
    departure: float,
    params: LinkParams,
    steering: SteeringConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """BS-to-surface matrix (N, M). ``arrival`` is the (vertical, azimuth) pair.

    The scattered part sums ``n_paths`` outer products of random planar and
    linear responses, each weighted element-wise by an independent standard
    complex Gaussian matrix.
    """
    gain = distance ** -params.pathloss_beta
    k = params.rician_k
    n, m = steering.n_elements, steering.m_antennas
    g = np.zeros((n, m), dtype=complex)
    if k > 0:
        b = pla_steering(arrival[0], arrival[1], steering.n_x, steering.n_y, steering.delta)
        a = ula_steering(departure, m, steering.delta)
        g += np.sqrt(k / (k + 1.0)) * np.sqrt(gain) * np.outer(b, a.conj())
    if params.n_paths > 0:
        scale = np.sqrt(1.0 / (k + 1.0)) * np.sqrt(gain / params.n_paths)
        for start in range(0, params.n_paths, _PATH_CHUNK):
            count = min(_PATH_CHUNK, params.n_paths - start)
            psis = rng.uniform(0.0, TWO_PI, count)
            thetas = rng.uniform(0.0, TWO_PI, count)
            b_many = _pla_many(np.zeros(count), psis, steering.n_x, steering.n_y, steering.delta)
            a_many = _ula_many(thetas, m, steering.delta)
            weights = _complex_normal(rng, (count, n, m))
            g += scale * np.einsum("pnm,np,mp->nm", weights, b_many, a_many.conj())
    return g


def composite_channel(h_ris_k: np.ndarray, g: np.ndarray, h_direct_k: np.ndarray) -> np.ndarray:
    """Stack the reflected and direct paths into one (N+1, M) matrix.

    For any profile ``v`` (N surface coefficients plus a pinned last entry),
    ``conj(v) @ composite`` equals the end-to-end row channel
    ``conj(h_ris)^T Phi g + conj(h_direct)^T``.
    """
    reflected = h_ris_k.conj()[:, None] * g
    return np.vstack([reflected, h_direct_k.conj()[None, :]])


# ---------------------------------------------------------------------------
# placement and full scenario
# ---------------------------------------------------------------------------


def segment_hits_disk(p_from, p_to, center, radius: float) -> bool:
    """True when the closed segment comes within ``radius`` of ``center``."""
    p_from = np.asarray(p_from, dtype=float)
    p_to = np.asarray(p_to, dtype=float)
    center = np.asarray(center, dtype=float)
    d = p_to - p_from
    denom = float(d @ d)
    if denom == 0.0:
        return float(np.hypot(*(center - p_from))) <= radius
    t = float((center - p_from) @ d) / denom
    t = min(1.0, max(0.0, t))
    closest = p_from + t * d
    return float(np.hypot(*(center - closest))) <= radius


def place_ues(config: ScenarioConfig, rng: np.random.Generator) -> list:
    """Drop users uniformly in the cell, outside obstacles, and associate them.

    A user is line-of-sight when the straight segment from the BS misses every
    obstacle disk. Association picks the nearest surface; exact distance ties
    are broken by a coin flip.
    """
    centers, radius = config.obstacle_layout()
    ris_pos, _, _ = config.ris_layout()
    placements = []
    for _ in range(config.n_ues):
        for _attempt in range(config.max_placement_tries):
            r = config.cell_radius * np.sqrt(rng.uniform())
            ang = rng.uniform(0.0, TWO_PI)
            pos = np.array([r * np.cos(ang), r * np.sin(ang)])
            inside = any(np.hypot(*(pos - c)) <= radius for c in centers)
            if not inside:
                break
        else:
            raise PlacementError(
                f"no valid position found in {config.max_placement_tries} tries"
            )
        blocked = any(segment_hits_disk((0.0, 0.0), pos, c, radius) for c in centers)
        dists = np.hypot(ris_pos[:, 0] - pos[0], ris_pos[:, 1] - pos[1])
        best = np.flatnonzero(dists == dists.min())
        ris_idx = int(best[rng.integers(len(best))]) if len(best) > 1 else int(best[0])
        rel = pos - ris_pos[ris_idx]
        placements.append(
            UePlacement(
                position=(float(pos[0]), float(pos[1])),
                bs_distance=float(np.hypot(*pos)),
                bs_angle=float(np.arctan2(pos[1], pos[0])),
                is_los=not blocked,
                assigned_ris=ris_idx,
                ris_distance=float(np.hypot(*rel)),
                ris_angle=float(np.arctan2(rel[1], rel[0])),
            )
        )
    return placements


def generate_scenario(config: ScenarioConfig, rng: np.random.Generator | None = None):
    """Draw placements and every channel of one cell realisation.

    Returns ``(placements, realization)``. With ``rng=None`` a generator is
    seeded from ``config.seed``, making the output a pure function of the
    configuration.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    placements = place_ues(config, rng)
    _, departure, arrival_x = config.ris_layout()
    g_per_ris = np.stack(
        [
            sample_bs_ris_channel(
                config.cell_radius,
                (0.0, arrival_x[i]),
                departure[i],
                config.bs_ris_params,
                config.steering,
                rng,
            )
            for i in range(config.n_ris)
        ]
    )
    m = config.steering.m_antennas
    n = config.steering.n_elements
    k_ues = config.n_ues
    h_direct = np.zeros((k_ues, m), dtype=complex)
    h_ris = np.zeros((k_ues, n), dtype=complex)
    composite = np.zeros((k_ues, n + 1, m), dtype=complex)
    for k, plc in enumerate(placements):
        params = config.los_params if plc.is_los else config.nlos_params
        h_direct[k] = sample_direct_channel(plc, params.direct, config.steering, rng)
        h_ris[k] = sample_ris_ue_channel(plc, params.ris_ue, config.steering, rng)
        composite[k] = composite_channel(h_ris[k], g_per_ris[plc.assigned_ris], h_direct[k])
    return placements, ChannelRealization(h_direct, g_per_ris, h_ris, composite)


# ---------------------------------------------------------------------------
# presets and (de)serialisation
# ---------------------------------------------------------------------------


def table1_config(
    cell_radius: float = 100.0,
    n_ues: int = 12,
    m_antennas: int = 8,
    n_x: int = 10,
    n_y: int = 10,
    tx_power: float = 251.18864315095797,
    noise_power: float = 1e-8,
    seed: int = 0,
) -> ScenarioConfig:
    """Reference multiuser scenario. Path counts scale with the array sizes:
    twice M on the direct link, twice N on the surface-user link and twice
    N*M on the BS-surface link."""
    n = n_x * n_y
    steering = SteeringConfig(m_antennas=m_antennas, n_x=n_x, n_y=n_y)
    return ScenarioConfig(
        cell_radius=cell_radius,
        n_ues=n_ues,
        los_params=UeLinkParams(
            direct=LinkParams(rician_k=2.0, pathloss_beta=2.0, n_paths=2 * m_antennas),
            ris_ue=LinkParams(rician_k=2.5, pathloss_beta=2.0, n_paths=2 * n),
        ),
        nlos_params=UeLinkParams(
            direct=LinkParams(rician_k=0.0, pathloss_beta=4.0, n_paths=2 * m_antennas),
            ris_ue=LinkParams(rician_k=0.0, pathloss_beta=4.0, n_paths=2 * n),
        ),
        bs_ris_params=LinkParams(rician_k=2.5, pathloss_beta=2.0, n_paths=2 * n * m_antennas),
        steering=steering,
        noise_power=noise_power,
        tx_power=tx_power,
        seed=seed,
    )


_LINK_KEYS = {"rician_k", "pathloss_beta", "n_paths"}
_UE_LINK_KEYS = {"direct", "ris_ue"}
_STEERING_KEYS = {"m_antennas", "n_x", "n_y", "delta"}
_SCENARIO_KEYS = {
    "cell_radius",
    "n_ues",
    "los_params",
    "nlos_params",
    "bs_ris_params",
    "steering",
    "n_ris",
    "n_obstacles",
    "obstacle_radius",
    "obstacle_center_distance",
    "obstacle_angles",
    "noise_power",
    "tx_power",
    "seed",
    "max_placement_tries",
}


def _check_keys(data: dict, allowed: set, context: str):
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown {context} keys: {sorted(unknown)}")


def _link_from_dict(data: dict, context: str) -> LinkParams:
    _check_keys(data, _LINK_KEYS, context)
    return LinkParams(**data)


def _ue_link_from_dict(data: dict, context: str) -> UeLinkParams:
    _check_keys(data, _UE_LINK_KEYS, context)
    return UeLinkParams(
        direct=_link_from_dict(data["direct"], context + ".direct"),
        ris_ue=_link_from_dict(data["ris_ue"], context + ".ris_ue"),
    )


def scenario_config_from_dict(data: dict) -> ScenarioConfig:
    """Build a configuration from plain JSON-style data; unknown keys fail."""
    _check_keys(data, _SCENARIO_KEYS, "scenario")
    kwargs = dict(data)
    kwargs["los_params"] = _ue_link_from_dict(data["los_params"], "los_params")
    kwargs["nlos_params"] = _ue_link_from_dict(data["nlos_params"], "nlos_params")
    kwargs["bs_ris_params"] = _link_from_dict(data["bs_ris_params"], "bs_ris_params")
    if "steering" in data:
        _check_keys(data["steering"], _STEERING_KEYS, "steering")
        kwargs["steering"] = SteeringConfig(**data["steering"])
    if kwargs.get("obstacle_angles") is not None:
        kwargs["obstacle_angles"] = tuple(kwargs["obstacle_angles"])
    return ScenarioConfig(**kwargs)


def scenario_config_to_dict(config: ScenarioConfig) -> dict:
    """Inverse of :func:`scenario_config_from_dict`."""

    def link(p: LinkParams) -> dict:
        return {"rician_k": p.rician_k, "pathloss_beta": p.pathloss_beta, "n_paths": p.n_paths}

    return {
        "cell_radius": config.cell_radius,
        "n_ues": config.n_ues,
        "los_params": {"direct": link(config.los_params.direct), "ris_ue": link(config.los_params.ris_ue)},
        "nlos_params": {"direct": link(config.nlos_params.direct), "ris_ue": link(config.nlos_params.ris_ue)},
        "bs_ris_params": link(config.bs_ris_params),
        "steering": {
            "m_antennas": config.steering.m_antennas,
            "n_x": config.steering.n_x,
            "n_y": config.steering.n_y,
            "delta": config.steering.delta,
        },
        "n_ris": config.n_ris,
        "n_obstacles": config.n_obstacles,
        "obstacle_radius": config.obstacle_radius,
        "obstacle_center_distance": config.obstacle_center_distance,
        "obstacle_angles": list(config.obstacle_angles) if config.obstacle_angles is not None else None,
        "noise_power": config.noise_power,
        "tx_power": config.tx_power,
        "seed": config.seed,
        "max_placement_tries": config.max_placement_tries,
    }


def load_scenario_config(path) -> ScenarioConfig:
    """Read a scenario configuration from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_config_from_dict(json.load(fh))


def load_preset(name: str = "params_table1") -> ScenarioConfig:
    """Load one of the packaged scenario presets by file stem."""
    ref = resources.files("rismasim").joinpath("presets", f"{name}.json")
    with ref.open("r", encoding="utf-8") as fh:
        return scenario_config_from_dict(json.load(fh))
