"""Monte-Carlo experiment orchestration and CSV emission.

Each experiment sweeps one variable over a grid and, for every grid point and
trial, draws a fresh cell realisation and runs the requested methods on it.
All randomness is derived from integer seed sequences, so a run is a pure
function of its :class:`ExperimentSpec`: re-running produces byte-identical
CSV output, and trials can be computed in any order or in parallel without
changing a single row.

Multi-user experiments share one channel draw across methods within a trial,
so method curves are paired. Sweeps that do not alter the channel statistics
(quantization bits, transmit power) additionally share draws across grid
points, which makes per-trial differences along the sweep meaningful.

Zero-forcing rows: the strict inverse-based precoder is attempted first; when
it is infeasible (more users than antennas, or near-collinear user channels)
the row is flagged ``zf_feasible=false`` and the rate is computed with the
minimum-norm least-squares variant instead, so the baseline stays defined on
every trial. ``mean_rates`` excludes flagged rows by default.

The alternating surface solver runs in its "projected" mode here (every
iterate clipped onto the passive feasible set); the literal pseudocode modes
remain available through the library API but report far lower physical rates.

Powers are in milliwatts internally; dBm only appears at the CLI boundary.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import (
    ChannelRealization,
    ScenarioConfig,
    UeLinkParams,
    UePlacement,
    composite_channel,
    generate_scenario,
    sample_bs_ris_channel,
    sample_direct_channel,
    sample_ris_ue_channel,
    table1_config,
)
from . import precoders
from . import risma
from .lorisma import lorisma_solve
from . import single_ue

CSV_HEADER = (
    "experiment,method,sweep_name,sweep_value,trial,"
    "sum_rate_bps_hz,iterations,converged,zf_feasible,seed"
)

# stable integer codes keep per-method RNG streams disjoint and give rows a
# deterministic sort order inside a trial
METHOD_CODES = {
    "risma": 1,
    "lorisma": 2,
    "mmse": 3,
    "zf": 4,
    "mrt": 5,
    "ris_power_mw": 6,
    "ris_power_bound_mw": 7,
}

_MULTI_UE_METHODS = ("risma", "lorisma", "mmse", "zf")
_SINGLE_UE_METHODS = ("risma", "mrt")
_POWER_METHODS = ("ris_power_mw", "ris_power_bound_mw")

# the alternating solver is run with every iterate projected onto the passive
# feasible set; the literal unit-norm and pinned-last modes let the profile
# moduli leave the unit disk, and rates on their clipped extractions collapse
_RISMA_OPTIONS = risma.SolverOptions(v_normalization="projected")

_EXPERIMENT_KIND = {
    "fig2": "single_ue",
    "fig3": "single_ue",
    "fig4": "multi_ue",
    "fig5": "multi_ue",
    "fig6": "multi_ue",
    "fig7": "multi_ue",
    "power_scaling": "power",
}

_SWEEPS_BY_KIND = {
    "multi_ue": ("cell_radius", "n_ues", "m_antennas", "n_elements", "quantization_bits", "tx_power_dbm"),
    "single_ue": ("distance_m", "n_elements", "tx_power_dbm"),
    "power": ("n_elements",),
}

# sweeps that leave the channel-draw structure untouched: grid points share
# the per-trial streams, so curves are comparable draw by draw
_PAIRED_SWEEPS = ("quantization_bits", "tx_power_dbm")

_INT_SWEEPS = ("n_ues", "m_antennas", "n_elements", "quantization_bits")

# fixed single-user geometry: one surface at 25 m from the BS, departure
# azimuth pi/4, arrival azimuth 5*pi/4, user on the x axis
_SUE_BS_RIS_DISTANCE = 25.0
_SUE_PSI_DEPARTURE = np.pi / 4.0
_SUE_PSI_ARRIVAL_X = 5.0 * np.pi / 4.0


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0:
        raise ValueError("power must be positive")
    return 10.0 * math.log10(mw)


@dataclass(frozen=True)
class ExperimentSpec:
    """Complete, picklable description of one experiment run."""

    experiment: str
    sweep_name: str
    grid: tuple
    trials: int = 100
    seed: int = 0
    methods: tuple = ("risma", "mmse", "zf")
    scenario: ScenarioConfig = field(default_factory=table1_config)
    lorisma_bits: int = 2
    single_ue_solver: str = "p3"
    # fixed BS-user distance for single-user sweeps over anything but distance
    single_ue_distance: float = 70.0
    power_distances: tuple = (50.0, 25.0, 30.0)
    power_betas: tuple = (4.0, 2.0, 2.0)
    power_tx_mw: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(x) for x in self.grid))
        object.__setattr__(self, "methods", tuple(self.methods))
        validate_spec(self)


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    method: str
    sweep_name: str
    sweep_value: float
    trial: int
    sum_rate_bps_hz: float
    iterations: int
    converged: bool
    zf_feasible: bool
    seed: int


def validate_spec(spec: ExperimentSpec) -> None:
    """Reject a malformed spec before any trial is run."""
    kind = _EXPERIMENT_KIND.get(spec.experiment)
    if kind is None:
        raise ValueError(
            f"unknown experiment {spec.experiment!r}; expected one of {sorted(_EXPERIMENT_KIND)}"
        )
    if spec.trials < 1:
        raise ValueError("trials must be at least 1")
    if not spec.grid:
        raise ValueError("sweep grid must be nonempty")
    if spec.sweep_name not in _SWEEPS_BY_KIND[kind]:
        raise ValueError(
            f"sweep {spec.sweep_name!r} not valid for {spec.experiment}; "
            f"choose from {_SWEEPS_BY_KIND[kind]}"
        )
    allowed = {
        "multi_ue": _MULTI_UE_METHODS,
        "single_ue": _SINGLE_UE_METHODS,
        "power": _POWER_METHODS,
    }[kind]
    if not spec.methods:
        raise ValueError("methods must be nonempty")
    if len(set(spec.methods)) != len(spec.methods):
        raise ValueError("duplicate methods")
    unknown = [m for m in spec.methods if m not in allowed]
    if unknown:
        raise ValueError(f"methods {unknown} not valid for {spec.experiment}; allowed: {allowed}")
    if spec.sweep_name in _INT_SWEEPS:
        bad = [x for x in spec.grid if float(x) != int(x)]
        if bad:
            raise ValueError(f"sweep {spec.sweep_name} needs integer grid values, got {bad}")
    if spec.single_ue_solver not in ("p2", "p3"):
        raise ValueError(f"unknown single_ue_solver {spec.single_ue_solver!r}")
    if "lorisma" in spec.methods and spec.sweep_name != "quantization_bits" and spec.lorisma_bits < 1:
        raise ValueError("lorisma_bits must be >= 1")
    if kind == "power" and (len(spec.power_distances) != 3 or len(spec.power_betas) != 3):
        raise ValueError("power_distances and power_betas must have 3 entries")
    # materialising every grid point surfaces size/shape errors upfront; the
    # power study draws its links directly and never builds a scenario
    if kind != "power":
        for value in spec.grid:
            scenario_for(spec, value)


def _scaled_link(params, old_count: int, new_count: int):
    if params.n_paths == old_count:
        return replace(params, n_paths=new_count)
    return params


def _with_m_antennas(cfg: ScenarioConfig, m_new: int) -> ScenarioConfig:
    """Change the BS array size, rescaling path counts that follow it.

    Path counts equal to twice M (direct) or twice N*M (BS-surface) track the
    new size; anything else is treated as a deliberate override and kept.
    """
    m_old = cfg.steering.m_antennas
    n = cfg.steering.n_elements
    steering = replace(cfg.steering, m_antennas=m_new)

    def ue_links(links: UeLinkParams) -> UeLinkParams:
        return UeLinkParams(
            direct=_scaled_link(links.direct, 2 * m_old, 2 * m_new),
            ris_ue=links.ris_ue,
        )

    return replace(
        cfg,
        steering=steering,
        los_params=ue_links(cfg.los_params),
        nlos_params=ue_links(cfg.nlos_params),
        bs_ris_params=_scaled_link(cfg.bs_ris_params, 2 * n * m_old, 2 * n * m_new),
    )


def _with_n_elements(cfg: ScenarioConfig, n_new: int) -> ScenarioConfig:
    """Change the surface to a square n x n layout, rescaling path counts."""
    side = math.isqrt(n_new)
    if side * side != n_new:
        raise ValueError(f"element sweep needs perfect squares for the planar layout, got {n_new}")
    m = cfg.steering.m_antennas
    n_old = cfg.steering.n_elements
    steering = replace(cfg.steering, n_x=side, n_y=side)

    def ue_links(links: UeLinkParams) -> UeLinkParams:
        return UeLinkParams(
            direct=links.direct,
            ris_ue=_scaled_link(links.ris_ue, 2 * n_old, 2 * n_new),
        )

    return replace(
        cfg,
        steering=steering,
        los_params=ue_links(cfg.los_params),
        nlos_params=ue_links(cfg.nlos_params),
        bs_ris_params=_scaled_link(cfg.bs_ris_params, 2 * n_old * m, 2 * n_new * m),
    )


def scenario_for(spec: ExperimentSpec, sweep_value: float) -> ScenarioConfig:
    """Scenario configuration at one grid point of the sweep."""
    name = spec.sweep_name
    cfg = spec.scenario
    if name == "cell_radius":
        return replace(cfg, cell_radius=float(sweep_value))
    if name == "n_ues":
        return replace(cfg, n_ues=int(sweep_value))
    if name == "m_antennas":
        return _with_m_antennas(cfg, int(sweep_value))
    if name == "n_elements":
        return _with_n_elements(cfg, int(sweep_value))
    if name == "tx_power_dbm":
        return replace(cfg, tx_power=dbm_to_mw(float(sweep_value)))
    # quantization_bits and distance_m leave the scenario untouched
    return cfg


def _rng_base(spec: ExperimentSpec, grid_index: int, trial: int) -> list:
    if spec.sweep_name in _PAIRED_SWEEPS:
        return [spec.seed, trial]
    return [spec.seed, grid_index, trial]


def single_ue_realization(
    cfg: ScenarioConfig, distance: float, rng: np.random.Generator
) -> np.ndarray:
    """Stacked (N+1, M) channel of a lone user on the x axis.

    The direct link uses the scenario's blocked-user parameters and the
    surface-user link the clear-sky ones, matching the coverage study: the
    user has no direct view of the BS but sees the surface cleanly. Draw
    order is surface matrix, direct vector, surface-user vector.
    """
    ris_pos = _SUE_BS_RIS_DISTANCE * np.array(
        [np.cos(_SUE_PSI_DEPARTURE), np.sin(_SUE_PSI_DEPARTURE)]
    )
    ue_pos = np.array([float(distance), 0.0])
    rel = ue_pos - ris_pos
    placement = UePlacement(
        position=(float(ue_pos[0]), float(ue_pos[1])),
        bs_distance=float(distance),
        bs_angle=0.0,
        is_los=False,
        assigned_ris=0,
        ris_distance=float(np.hypot(*rel)),
        ris_angle=float(np.arctan2(rel[1], rel[0])),
    )
    g = sample_bs_ris_channel(
        _SUE_BS_RIS_DISTANCE,
        (0.0, _SUE_PSI_ARRIVAL_X),
        _SUE_PSI_DEPARTURE,
        cfg.bs_ris_params,
        cfg.steering,
        rng,
    )
    h_d = sample_direct_channel(placement, cfg.nlos_params.direct, cfg.steering, rng)
    h_r = sample_ris_ue_channel(placement, cfg.los_params.ris_ue, cfg.steering, rng)
    return composite_channel(h_r, g, h_d)


def _rate_from_row_gain(gain_sq: float, tx_power: float, noise_power: float) -> float:
    return float(np.log2(1.0 + tx_power * gain_sq / noise_power))


def _run_single_ue_trial(spec: ExperimentSpec, grid_index: int, trial: int) -> list:
    value = spec.grid[grid_index]
    cfg = scenario_for(spec, value)
    distance = float(value) if spec.sweep_name == "distance_m" else spec.single_ue_distance
    base = _rng_base(spec, grid_index, trial)
    composite = single_ue_realization(cfg, distance, np.random.default_rng(base))
    p, s2 = cfg.tx_power, cfg.noise_power
    instance = single_ue.SingleUeInstance(composite, p, s2)
    rows = []
    for method in spec.methods:
        rng_m = np.random.default_rng(base + [METHOD_CODES[method]])
        if method == "risma":
            if spec.single_ue_solver == "p3":
                res = single_ue.solve_p3(instance, rng=rng_m)
            else:
                res = single_ue.solve_p2_dc(instance)
            gain = np.linalg.norm(single_ue.effective_row(instance, res.profile))
            rate = _rate_from_row_gain(float(gain) ** 2, p, s2)
            iters = len(res.objective_trace) - 1
            conv = res.converged
        else:  # mrt with the surface off: only the direct row contributes
            gain = np.linalg.norm(composite[-1])
            rate = _rate_from_row_gain(float(gain) ** 2, p, s2)
            iters, conv = 0, True
        rows.append(
            ResultRow(
                spec.experiment, method, spec.sweep_name, float(value), trial,
                rate, iters, conv, True, spec.seed,
            )
        )
    return rows


def _run_multi_ue_trial(spec: ExperimentSpec, grid_index: int, trial: int) -> list:
    value = spec.grid[grid_index]
    cfg = scenario_for(spec, value)
    base = _rng_base(spec, grid_index, trial)
    _, channels = generate_scenario(cfg, np.random.default_rng(base))
    p, s2 = cfg.tx_power, cfg.noise_power
    off = risma.surface_off_profile(channels.n_elements)
    rows = []
    for method in spec.methods:
        rng_m = np.random.default_rng(base + [METHOD_CODES[method]])
        zf_ok = True
        if method == "risma":
            rep = risma.risma_solve(channels, p, s2, options=_RISMA_OPTIONS, rng=rng_m)
            rate, iters, conv = rep.sum_rate, rep.iterations, rep.converged
        elif method == "lorisma":
            if spec.sweep_name == "quantization_bits":
                bits = int(value)
            else:
                bits = spec.lorisma_bits
            rep = lorisma_solve(channels, p, s2, bits, rng=rng_m)
            rate, iters, conv = rep.sum_rate, rep.iterations, rep.converged
        elif method == "mmse":
            prec = precoders.mmse(channels.direct_matrix, p, s2)
            rate = risma.sum_rate(off, prec, channels, s2)
            iters, conv = 0, True
        else:  # zf
            prec = None
            if channels.n_ues <= channels.n_antennas:
                try:
                    prec = precoders.zf(channels.direct_matrix, p)
                except precoders.SingularChannelError:
                    prec = None
            if prec is None:
                zf_ok = False
                prec = precoders.zf_least_squares(channels.direct_matrix, p)
            rate = risma.sum_rate(off, prec, channels, s2)
            iters, conv = 0, True
        rows.append(
            ResultRow(
                spec.experiment, method, spec.sweep_name, float(value), trial,
                float(rate), int(iters), bool(conv), zf_ok, spec.seed,
            )
        )
    return rows


@dataclass(frozen=True)
class PowerScalingPoint:
    n_elements: int
    mean_power_mw: float
    bound_mw: float


def power_scaling_study(
    n_grid,
    distances=(50.0, 25.0, 30.0),
    betas=(4.0, 2.0, 2.0),
    trials: int = 2000,
    seed: int = 0,
    tx_power: float = 1.0,
    return_draws: bool = False,
):
    """Receive power of a phase-aligned surface versus element count.

    Single antenna, single user, all links i.i.d. Rayleigh with variances set
    by ``distances``/``betas`` as (direct, BS-surface, surface-user). Each
    draw aligns every element's phase with the direct-free cascade and
    records the matched-beam receive power. Returns one point per N with the
    empirical mean and the closed-form bound
    ``P * (pi^2/16 * gamma * gamma_G * N^2 + gamma_d)``.
    """
    d_direct, d_bs_ris, d_ris_ue = (float(x) for x in distances)
    b_direct, b_bs_ris, b_ris_ue = (float(x) for x in betas)
    gamma_d = d_direct**-b_direct
    gamma_g = d_bs_ris**-b_bs_ris
    gamma = d_ris_ue**-b_ris_ue
    points = []
    draws_by_n = {}
    for gi, n in enumerate(int(x) for x in n_grid):
        powers = np.empty(trials)
        for t in range(trials):
            rng = np.random.default_rng([seed, gi, t])
            h = np.sqrt(gamma / 2.0) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
            g = np.sqrt(gamma_g / 2.0) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
            h_d = np.sqrt(gamma_d / 2.0) * complex(rng.standard_normal(), rng.standard_normal())
            aligned = float(np.abs(h) @ np.abs(g))
            powers[t] = tx_power * abs(aligned + h_d.conjugate()) ** 2
        bound = tx_power * (np.pi**2 / 16.0 * gamma * gamma_g * n**2 + gamma_d)
        points.append(PowerScalingPoint(n, float(powers.mean()), float(bound)))
        if return_draws:
            draws_by_n[n] = powers
    if return_draws:
        return points, draws_by_n
    return points


def _power_scaling_rows(spec: ExperimentSpec) -> list:
    points = power_scaling_study(
        [int(v) for v in spec.grid],
        distances=spec.power_distances,
        betas=spec.power_betas,
        trials=spec.trials,
        seed=spec.seed,
        tx_power=spec.power_tx_mw,
    )
    rows = []
    for value, point in zip(spec.grid, points):
        for method, quantity in (
            ("ris_power_mw", point.mean_power_mw),
            ("ris_power_bound_mw", point.bound_mw),
        ):
            if method in spec.methods:
                rows.append(
                    ResultRow(
                        spec.experiment, method, spec.sweep_name, float(value), 0,
                        quantity, 0, True, True, spec.seed,
                    )
                )
    return rows


def _run_trial(spec: ExperimentSpec, grid_index: int, trial: int) -> list:
    if _EXPERIMENT_KIND[spec.experiment] == "single_ue":
        return _run_single_ue_trial(spec, grid_index, trial)
    return _run_multi_ue_trial(spec, grid_index, trial)


def _run_trial_star(args) -> list:
    return _run_trial(*args)


def sort_rows(rows) -> list:
    return sorted(
        rows,
        key=lambda r: (
            r.experiment,
            r.sweep_value,
            r.trial,
            METHOD_CODES.get(r.method, 99),
        ),
    )


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> list:
    """All result rows of one experiment, sorted deterministically."""
    validate_spec(spec)
    if _EXPERIMENT_KIND[spec.experiment] == "power":
        return sort_rows(_power_scaling_rows(spec))
    jobs = [
        (spec, gi, trial)
        for gi in range(len(spec.grid))
        for trial in range(spec.trials)
    ]
    if workers <= 1:
        per_job = [_run_trial_star(job) for job in jobs]
    else:
        chunk = max(1, len(jobs) // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_job = list(pool.map(_run_trial_star, jobs, chunksize=chunk))
    return sort_rows([row for job_rows in per_job for row in job_rows])


# ---------------------------------------------------------------------------
# aggregation helpers
# ---------------------------------------------------------------------------


def mean_rates(rows, method: str, include_flagged_zf: bool = False) -> dict:
    """Mean rate per sweep value for one method.

    Zero-forcing rows flagged infeasible are excluded unless
    ``include_flagged_zf`` is set; a sweep value whose rows are all excluded
    is absent from the result.
    """
    buckets = {}
    for row in rows:
        if row.method != method:
            continue
        if method == "zf" and not include_flagged_zf and not row.zf_feasible:
            continue
        buckets.setdefault(row.sweep_value, []).append(row.sum_rate_bps_hz)
    return {value: float(np.mean(rates)) for value, rates in sorted(buckets.items())}


def rates_by_trial(rows, method: str) -> dict:
    """``{sweep_value: {trial: rate}}`` for paired-draw comparisons."""
    out = {}
    for row in rows:
        if row.method == method:
            out.setdefault(row.sweep_value, {})[row.trial] = row.sum_rate_bps_hz
    return out


def antenna_equivalence(rows, method: str, target_rates, slack: float = 0.02) -> dict:
    """Smallest swept antenna count whose mean rate reaches each target.

    Expects rows from an antenna sweep. The mean-rate curve must be
    non-decreasing up to ``slack`` relative dips, otherwise the notion of a
    required antenna count is ill-posed and a ValueError is raised.
    Unreachable targets map to None.
    """
    means = mean_rates(rows, method)
    if not means:
        raise ValueError(f"no usable rows for method {method!r}")
    sizes = sorted(means)
    values = [means[m] for m in sizes]
    for prev, cur in zip(values, values[1:]):
        if cur < prev * (1.0 - slack):
            raise ValueError(
                f"mean rate for {method!r} is not monotone in the antenna count: {values}"
            )
    out = {}
    for target in target_rates:
        out[float(target)] = next(
            (int(m) for m, val in zip(sizes, values) if val >= target), None
        )
    return out


# ---------------------------------------------------------------------------
# presets and CSV
# ---------------------------------------------------------------------------


def experiment_preset(name: str, trials: int | None = None, seed: int = 0) -> ExperimentSpec:
    """Ready-to-run spec for one of the named experiments.

    fig2  single-user rate versus BS-user distance, surface on vs off
    fig3  single-user rate versus surface element count
    fig4  multi-user rate versus cell radius, against both baselines
    fig5  multi-user rate versus user count
    fig6  multi-user rate versus BS antenna count (antenna-equivalence data)
    fig7  multi-user rate versus surface quantization bits
    power_scaling  aligned-surface receive power versus element count
    """
    if name not in _EXPERIMENT_KIND:
        raise ValueError(f"unknown experiment {name!r}; expected one of {sorted(_EXPERIMENT_KIND)}")
    base = dict(experiment=name, seed=seed)
    if name == "fig2":
        base.update(
            sweep_name="distance_m", grid=(30, 50, 70, 90, 110),
            methods=_SINGLE_UE_METHODS, scenario=table1_config(n_x=5, n_y=5),
        )
    elif name == "fig3":
        base.update(
            sweep_name="n_elements", grid=(4, 9, 16, 25, 36, 49),
            methods=_SINGLE_UE_METHODS, scenario=table1_config(n_x=5, n_y=5),
        )
    elif name == "fig4":
        base.update(
            sweep_name="cell_radius", grid=(50, 75, 100, 125, 150),
            methods=("risma", "mmse", "zf"),
        )
    elif name == "fig5":
        base.update(
            sweep_name="n_ues", grid=(12, 48, 100),
            methods=("risma", "mmse", "zf"), scenario=table1_config(cell_radius=150.0),
        )
    elif name == "fig6":
        base.update(
            sweep_name="m_antennas", grid=(8, 12, 16, 20, 24, 28),
            methods=("risma", "mmse", "zf"), scenario=table1_config(cell_radius=100.0),
        )
    elif name == "fig7":
        base.update(
            sweep_name="quantization_bits", grid=(1, 2, 3, 4),
            methods=("lorisma", "risma", "mmse", "zf"),
            scenario=table1_config(cell_radius=100.0),
        )
    else:  # power_scaling
        base.update(
            sweep_name="n_elements", grid=(16, 32, 64, 128, 256),
            methods=_POWER_METHODS, trials=2000,
        )
    if trials is not None:
        base["trials"] = trials
    return ExperimentSpec(**base)


def list_experiments() -> list:
    return sorted(_EXPERIMENT_KIND)


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def _fmt_bool(x: bool) -> str:
    return "true" if x else "false"


def rows_to_csv(rows) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                (
                    r.experiment,
                    r.method,
                    r.sweep_name,
                    _fmt(r.sweep_value),
                    str(int(r.trial)),
                    _fmt(r.sum_rate_bps_hz),
                    str(int(r.iterations)),
                    _fmt_bool(r.converged),
                    _fmt_bool(r.zf_feasible),
                    str(int(r.seed)),
                )
            )
        )
    return "\n".join(lines) + "\n"


def write_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(rows_to_csv(rows))
