"""Surface tuning for a single user served by a matched full-power beam.

With one user the precoder is always the matched filter, so the only design
variable is the profile ``v``. Minimising the resulting mean-square error

    P * |g(v)|^2 - 2 sqrt(P) * |g(v)| + 1 + noise,  g(v) = effective channel,

reduces (after dropping constants and dividing by P) to a difference of a
convex quadratic and a concave norm term. Two solvers are provided: a
convex-concave scheme with a projected-gradient inner loop, and a PSD
relaxation of the homogenised problem rounded by Gaussian randomization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .risma import RisProfile, _as_vector
from .sdr import SdpOptions, SdpProblem, gaussian_randomize, sdp_solve


@dataclass
class SingleUeInstance:
    """Stacked channel of the single user plus its power/noise levels."""

    composite: np.ndarray  # (N+1, M)
    tx_power: float
    noise_power: float

    def __post_init__(self):
        self.composite = np.asarray(self.composite, dtype=complex)
        if self.tx_power <= 0 or self.noise_power <= 0:
            raise ValueError("powers must be positive")

    @property
    def n_elements(self) -> int:
        return self.composite.shape[0] - 1


@dataclass
class SingleUeResult:
    profile: RisProfile
    objective: float
    converged: bool
    objective_trace: list


def effective_row(instance: SingleUeInstance, v) -> np.ndarray:
    """End-to-end channel row under profile ``v``, length M."""
    return _as_vector(v).conj() @ instance.composite


def mse_after_mrt(instance: SingleUeInstance, v) -> float:
    """Mean-square error when the matched full-power beam is applied to ``v``."""
    gain = float(np.linalg.norm(effective_row(instance, v)))
    if gain == 0.0:
        raise ValueError("effective channel is zero under this profile")
    p = instance.tx_power
    return p * gain**2 - 2.0 * np.sqrt(p) * gain + 1.0 + instance.noise_power


def surrogate_objective(instance: SingleUeInstance, v) -> float:
    """MSE after matched beamforming, rescaled by P and without constants."""
    gain = float(np.linalg.norm(effective_row(instance, v)))
    return gain**2 - 2.0 / np.sqrt(instance.tx_power) * gain


def _project_feasible(v: np.ndarray) -> np.ndarray:
    """Clip surface entries to the unit disk, pin the last entry to 1."""
    out = v.copy()
    mags = np.abs(out[:-1])
    over = mags > 1.0
    out[:-1][over] = out[:-1][over] / mags[over]
    out[-1] = 1.0
    return out


def _gram(instance: SingleUeInstance) -> np.ndarray:
    return instance.composite @ instance.composite.conj().T


def _phase_aligned_start(instance: SingleUeInstance) -> np.ndarray:
    """Feasible profile with phases from the top eigenvector of the Gram."""
    gram = _gram(instance)
    _, vecs = np.linalg.eigh(gram)
    lead = vecs[:, -1]
    ref = lead[-1]
    v = lead * (ref.conj() / abs(ref)) if ref != 0 else lead.copy()
    angles = np.angle(v[:-1])
    out = np.empty_like(v)
    out[:-1] = np.exp(1j * angles)
    out[-1] = 1.0
    return out


def solve_p2_dc(
    instance: SingleUeInstance,
    v0: np.ndarray | None = None,
    tol: float = 1e-9,
    max_iter: int = 60,
    inner_max_iter: int = 400,
) -> SingleUeResult:
    """Convex-concave scheme on the profile with a projected-gradient inner loop.

    Each outer round replaces the concave ``-|g(v)|`` term by its tangent
    plane, leaving a convex quadratic over the clipped-disk set, solved by
    projected gradient with Armijo backtracking. The outer objective can
    never increase; a violation beyond rounding raises.

    With ``v0=None`` the better of the surface-off start and a phase-aligned
    start (top Gram eigenvector phases) is used.
    """
    gram = _gram(instance)
    n1 = gram.shape[0]
    sqrt_p = np.sqrt(instance.tx_power)
    if v0 is not None:
        v = _project_feasible(np.asarray(v0, dtype=complex).reshape(-1))
    else:
        off = np.zeros(n1, dtype=complex)
        off[-1] = 1.0
        aligned = _phase_aligned_start(instance)
        v = min((off, aligned), key=lambda c: surrogate_objective(instance, c))
    lipschitz = 2.0 * float(np.linalg.eigvalsh(gram)[-1])
    if lipschitz == 0.0:
        raise ValueError("channel matrix is zero")

    def f(x):
        return surrogate_objective(instance, x)

    trace = [f(v)]
    converged = False
    for _ in range(max_iter):
        rv = gram @ v
        g0 = np.sqrt(max(float(np.real(v.conj() @ rv)), 0.0))
        if g0 < 1e-300:
            q = np.zeros_like(v)
        else:
            q = rv / (sqrt_p * g0)

        def h(x):
            return float(np.real(x.conj() @ gram @ x)) - 2.0 * float(np.real(q.conj() @ x))

        x = v
        hx = h(x)
        step = 1.0 / lipschitz
        for _inner in range(inner_max_iter):
            grad = 2.0 * (gram @ x - q)
            s = step
            for _bt in range(40):
                x_new = _project_feasible(x - s * grad)
                if h(x_new) <= hx + 1e-15 * max(1.0, abs(hx)):
                    break
                s *= 0.5
            move = float(np.linalg.norm(x_new - x))
            x, hx = x_new, h(x_new)
            if move <= 1e-10 * (1.0 + float(np.linalg.norm(x))):
                break
        v = x
        trace.append(f(v))
        if trace[-1] > trace[-2] + 1e-9 * max(1.0, abs(trace[-2])):
            raise RuntimeError("majorization step increased the objective")
        if trace[-2] - trace[-1] <= tol * max(1.0, abs(trace[-1])):
            converged = True
            break
    return SingleUeResult(RisProfile(v), trace[-1], converged, trace)


def solve_p3(
    instance: SingleUeInstance,
    sdr_options: SdpOptions | None = None,
    rng: np.random.Generator | None = None,
    max_outer: int = 8,
) -> SingleUeResult:
    """PSD relaxation of the homogenised problem plus randomization.

    The objective ``t - 2/sqrt(P) * sqrt(t)`` with ``t = tr(Gram V)`` has its
    square root linearised around the current trace, so every inner problem
    is a pure PSD program with a scaled Gram cost. When the linearisation
    coefficient flips sign between rounds the optimum lies at an interior
    trace ``1/P``; the two iterates are then blended to land exactly there.

    The randomization pool always contains the surface-off profile and the
    clipped top-eigenvector candidate.
    """
    sdr_options = sdr_options or SdpOptions()
    rng = rng or np.random.default_rng()
    gram = _gram(instance)
    n1 = gram.shape[0]
    lo = np.zeros(n1)
    hi = np.ones(n1)
    pinned = np.array([n1 - 1])
    sqrt_p = np.sqrt(instance.tx_power)

    def g_of_t(t):
        return t - 2.0 / sqrt_p * np.sqrt(max(t, 0.0))

    off = np.zeros(n1, dtype=complex)
    off[-1] = 1.0
    t_cur = float(np.real(off.conj() @ gram @ off))
    # the surface-off rank-1 matrix is a feasible iterate, so a sign flip on
    # the very first round can already blend against it
    v_mat = np.outer(off, off.conj()) if t_cur > 0.0 else None
    if t_cur <= 0.0:
        t_cur = max(float(np.trace(gram).real) / n1, 1e-30)
    warm = None
    trace = [g_of_t(t_cur)]
    converged = False
    # the PSD solver sees an O(1)-scaled copy of each linearised cost: a
    # positive rescaling moves neither the argmin nor the trace it returns,
    # and the splitting stalls when cost entries sit orders of magnitude
    # below the unit-diagonal iterates (raw milliwatt channel products do)
    gram_scale = float(np.linalg.norm(gram))
    gram_unit = gram / gram_scale if gram_scale > 0 else gram
    for _ in range(max_outer):
        coeff = 1.0 - 1.0 / (sqrt_p * np.sqrt(t_cur))
        sol = sdp_solve(
            SdpProblem(coeff * gram_unit, lo, hi, pinned),
            tol=sdr_options.tol,
            max_iter=sdr_options.max_iter,
            rho=sdr_options.rho,
            warm_start=warm,
        )
        warm = sol
        t_new = float(np.real(np.tensordot(gram, sol.matrix, axes=([0, 1], [1, 0]))))
        # the splitting solver's PSD error can push a near-zero trace slightly
        # negative; clamp before it reaches a square root
        t_new = max(t_new, 0.0)
        coeff_new = 1.0 - 1.0 / (sqrt_p * np.sqrt(max(t_new, 1e-300)))
        if v_mat is not None and coeff * coeff_new < 0.0:
            # sign flip: optimum trace is 1/P, between the two iterates
            t_star = 1.0 / instance.tx_power
            lam = (t_star - t_cur) / (t_new - t_cur)
            lam = min(1.0, max(0.0, lam))
            v_mat = (1.0 - lam) * v_mat + lam * sol.matrix
            trace.append(g_of_t(t_star))
            converged = True
            break
        v_mat = sol.matrix
        trace.append(g_of_t(t_new))
        if abs(trace[-1] - trace[-2]) <= 1e-9 * max(1.0, abs(trace[-1])):
            t_cur = max(t_new, 1e-300)
            converged = True
            break
        t_cur = max(t_new, 1e-300)

    def projector(vec):
        ref = vec[-1]
        if ref == 0:
            return _project_feasible(vec)
        return _project_feasible(vec / ref)

    def objective(vec):
        return surrogate_objective(instance, vec)

    aligned = _project_feasible(_phase_aligned_start(instance))
    best, best_obj = gaussian_randomize(
        v_mat,
        sdr_options.randomizations,
        projector,
        objective,
        rng,
        extra_candidates=(off, aligned),
    )
    return SingleUeResult(RisProfile(best), best_obj, converged, trace)


def effective_with_phases(composite: np.ndarray, phis: np.ndarray) -> np.ndarray:
    """Apply unit-modulus phases to the reflected rows of a stacked channel."""
    composite = np.asarray(composite, dtype=complex)
    out = composite.copy()
    out[:-1] = np.exp(1j * np.asarray(phis, dtype=float))[:, None] * composite[:-1]
    return out


def optimal_binary_activation(n_elements: int) -> np.ndarray:
    """All-on activation: with aligned phases every element adds power."""
    return np.ones(n_elements + 1)


def receive_snr(effective: np.ndarray, activation: np.ndarray, tx_power: float, noise_power: float) -> float:
    """SNR after matched beamforming on the activated row combination."""
    row = np.asarray(activation, dtype=float) @ np.asarray(effective, dtype=complex)
    return float(tx_power * np.linalg.norm(row) ** 2 / noise_power)
