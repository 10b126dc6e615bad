"""Alternating optimizer for surfaces with b-bit phases and on/off moduli.

Each element coefficient must come from the constellation
``{0} + {exp(1j * 2 pi m / 2**b)}``. The profile update lifts the sum-MSE
objective to a homogeneous quadratic form over an augmented vector (profile,
direct-path slot, scaling slot), relaxes it to a diagonally constrained PSD
program, and rounds the relaxed covariance by Gaussian randomization onto
the constellation. The precoder update is shared with the unquantized solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization
from .risma import (
    Precoder,
    RisProfile,
    SolveReport,
    SolverOptions,
    _as_matrix,
    initial_precoder,
    physical_profile,
    smse,
    sum_rate,
    surface_off_profile,
    update_w,
)
from .sdr import SdpOptions, SdpProblem, SdpSolution, gaussian_randomize, sdp_solve

TWO_PI = 2.0 * np.pi

# inner relaxations only steer Gaussian rounding, so they are solved loosely;
# tightening beyond this moves the rounded profiles by less than the rounding
# noise while costing several times more iterations
_DEFAULT_SDR_OPTIONS = SdpOptions(tol=3e-3, max_iter=40000)

# slack when comparing angular/Euclidean distances for tie-breaking: grid
# points are separated by >= 2 pi / 2**b, many orders above rounding noise
_TIE_EPS = 1e-12


@dataclass(frozen=True)
class QuantizedConstellation:
    """Feasible per-element coefficients for a b-bit surface."""

    bits: int
    points: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("need at least one phase bit")
        levels = 2**self.bits
        circle = np.exp(1j * TWO_PI * np.arange(levels) / levels)
        object.__setattr__(self, "points", np.concatenate([[0.0 + 0.0j], circle]))

    @property
    def phase_grid(self) -> np.ndarray:
        return TWO_PI * np.arange(2**self.bits) / 2**self.bits


def quantize_phase(phi, bits: int):
    """Snap phases to the 2**bits uniform grid, nearest in angular distance.

    Exact ties go to the smaller grid index.
    """
    phi = np.asarray(phi, dtype=float)
    grid = TWO_PI * np.arange(2**bits) / 2**bits
    diff = phi[..., None] - grid
    dist = np.abs((diff + np.pi) % TWO_PI - np.pi)
    best = dist.min(axis=-1, keepdims=True)
    choice = np.argmax(dist <= best + _TIE_EPS, axis=-1)
    out = grid[choice]
    return float(out) if out.ndim == 0 else out


def project_to_constellation(z, constellation: QuantizedConstellation):
    """Nearest constellation point per entry; ties prefer 0, then lower index."""
    z = np.asarray(z, dtype=complex)
    dist = np.abs(z[..., None] - constellation.points)
    best = dist.min(axis=-1, keepdims=True)
    choice = np.argmax(dist <= best + _TIE_EPS, axis=-1)
    out = constellation.points[choice]
    return complex(out) if out.ndim == 0 else out


def project_unit_quantized(z, bits: int):
    """Keep unit modulus, quantize only the phase (used for the pinned slots)."""
    z = np.asarray(z, dtype=complex)
    return np.exp(1j * quantize_phase(np.angle(z), bits))


def build_augmented(channels: ChannelRealization, w) -> np.ndarray:
    """Per-user Hermitian forms whose quadratic value is that user's MSE
    without its constant part, stacked as (K, N+2, N+2).

    For feasible augmented vectors ``[v; 1]`` the form equals
    ``|own+cross gains|^2 - 2 Re(own gain)``.
    """
    w_mat = _as_matrix(w)
    h_bar = channels.composite
    k_users, n1, _ = h_bar.shape
    t = h_bar @ w_mat  # (K, N+1, K)
    own = np.einsum("knk->kn", t)  # own-stream columns
    out = np.zeros((k_users, n1 + 1, n1 + 1), dtype=complex)
    for k in range(k_users):
        out[k, :n1, :n1] = t[k] @ t[k].conj().T
        out[k, :n1, n1] = -own[k]
        out[k, n1, :n1] = -own[k].conj()
    return out


def _coordinate_refine(vec: np.ndarray, cost: np.ndarray, points: np.ndarray,
                       max_passes: int = 8) -> np.ndarray:
    """Greedy one-entry-at-a-time polish of a feasible candidate.

    Sweeps the surface entries (the two trailing slots stay pinned), moving an
    entry to whichever constellation point lowers the quadratic form the most.
    Each accepted move strictly decreases the objective, so the sweep
    terminates; ties keep the current entry, which keeps the result
    deterministic.
    """
    v = vec.copy()
    n_elems = v.size - 2
    # relative threshold keeps accept/reject decisions covariant under a
    # positive rescaling of the cost
    eps = 1e-12 * float(np.linalg.norm(cost))
    for _ in range(max_passes):
        improved = False
        cv = cost @ v
        for i in range(n_elems):
            delta = points - v[i]
            gains = 2.0 * np.real(np.conj(delta) * cv[i])
            gains += np.abs(delta) ** 2 * np.real(cost[i, i])
            j = int(np.argmin(gains))
            if gains[j] < -eps:
                cv += cost[:, i] * delta[j]
                v[i] = points[j]
                improved = True
        if not improved:
            break
    return v


def lorisma_v_step(
    channels: ChannelRealization,
    w,
    constellation: QuantizedConstellation,
    sdr_options: SdpOptions | None = None,
    rng: np.random.Generator | None = None,
    warm_start: SdpSolution | None = None,
    extra_candidates=(),
):
    """One quantized profile update for a fixed precoder.

    Returns ``(profile, sdp_solution)``. The profile is exactly feasible:
    every surface entry is a constellation point and the last entry is 1.
    """
    sdr_options = sdr_options or _DEFAULT_SDR_OPTIONS
    rng = rng or np.random.default_rng()
    aug = build_augmented(channels, w)
    cost = aug.sum(axis=0)
    n = cost.shape[0]  # N + 2
    n_elems = n - 2
    lo = np.zeros(n)
    hi = np.ones(n)
    pinned = np.array([n - 2, n - 1])
    # the PSD solver sees an O(1)-scaled copy: a positive rescaling of the
    # objective moves neither the argmin nor the randomization ranking, and
    # the splitting stalls when cost entries sit many orders of magnitude
    # below the unit-diagonal iterates (raw milliwatt channel products do)
    scale = float(np.linalg.norm(cost))
    problem = SdpProblem(cost / scale if scale > 0 else cost, lo, hi, pinned)
    sol = sdp_solve(
        problem,
        tol=sdr_options.tol,
        max_iter=sdr_options.max_iter,
        rho=sdr_options.rho,
        warm_start=warm_start,
    )

    def _recover(vec):
        # undo the homogenisation: absorb the scaling slot, re-pin the
        # direct-path slot to exactly 1 by a global rotation, and snap back
        # onto the grid (the rotation is itself a grid phase, so this only
        # clears rounding).
        v = vec[-1].conj() * vec[:-1]
        v = v * (v[-1].conj() / abs(v[-1]))
        v[:n_elems] = project_to_constellation(v[:n_elems], constellation)
        v[-1] = 1.0
        return np.append(v, 1.0)

    def projector(vec):
        out = np.empty(n, dtype=complex)
        out[:n_elems] = project_to_constellation(vec[:n_elems], constellation)
        out[n_elems:] = project_unit_quantized(vec[n_elems:], constellation.bits)
        # fold the recovery into the candidate itself: when the two pinned
        # slots disagree in phase, the raw homogeneous score is not the value
        # the returned profile achieves, so rank by the recovered point
        return _recover(out)

    def objective(vec):
        return float(np.real(vec.conj() @ cost @ vec))

    best, _ = gaussian_randomize(
        sol.matrix, sdr_options.randomizations, projector, objective, rng, extra_candidates
    )
    # Gaussian rounding alone can miss lattice points the relaxed covariance
    # puts little mass on; a greedy per-entry sweep fixes that cheaply and
    # never worsens the winner
    best = _coordinate_refine(best, cost, constellation.points)
    v = _recover(best)[:-1]
    return RisProfile(v), sol


def lorisma_solve(
    channels: ChannelRealization,
    tx_power: float,
    noise_power: float,
    bits: int,
    options: SolverOptions | None = None,
    sdr_options: SdpOptions | None = None,
    rng: np.random.Generator | None = None,
) -> SolveReport:
    """Alternate quantized profile updates with precoder updates.

    The previous profile is kept in the randomization pool, so the profile
    step never moves to a worse candidate, and each inner PSD program is
    warm-started from the previous one. Inner programs default to the loose
    tolerance of ``_DEFAULT_SDR_OPTIONS``; pass ``sdr_options`` to override.
    """
    options = options or SolverOptions()
    sdr_options = sdr_options or _DEFAULT_SDR_OPTIONS
    rng = rng or np.random.default_rng()
    constellation = QuantizedConstellation(bits)
    prec = initial_precoder(channels, tx_power, rng)
    profile = surface_off_profile(channels.n_elements)
    trace = [smse(profile, prec, channels, noise_power)]
    converged = False
    iterations = 0
    warm = None
    extras = ()
    for iterations in range(1, options.max_iter + 1):
        profile, warm = lorisma_v_step(
            channels, prec, constellation, sdr_options, rng,
            warm_start=warm, extra_candidates=extras,
        )
        extras = (np.append(profile.v, 1.0),)
        prec = update_w(profile, channels, tx_power, noise_power, options)
        trace.append(smse(profile, prec, channels, noise_power))
        if abs(trace[-1] - trace[-2]) / abs(trace[-1]) <= options.epsilon:
            converged = True
            break
    phys = physical_profile(profile)
    return SolveReport(
        smse_trace=trace,
        sum_rate=sum_rate(phys, prec, channels, noise_power),
        sum_rate_raw=sum_rate(profile, prec, channels, noise_power),
        iterations=iterations,
        converged=converged,
        v_final=phys,
        precoder=prec,
    )
