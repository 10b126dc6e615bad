"""Sum-MSE objective and the alternating precoder / surface-profile optimizer.

The profile vector ``v`` has N surface coefficients ``alpha * exp(-1j*phi)``
plus a last entry pinned to 1 that routes the direct path. Both closed-form
block updates below solve regularised least-squares problems; alternating
them drives the sum of per-user mean-square errors down until the relative
change falls under a threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization, _complex_normal
from .precoders import Precoder


@dataclass
class RisProfile:
    """Surface coefficients plus the pinned direct-path entry (length N+1)."""

    v: np.ndarray

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=complex).reshape(-1)

    @property
    def n_elements(self) -> int:
        return self.v.size - 1


@dataclass
class SolverOptions:
    """Knobs of the alternating solver.

    ``v_normalization``: "paper" rescales the profile to unit norm after each
    update (the pinned entry then carries the scale); "fixed-last" keeps the
    pinned entry at exactly 1; "projected" re-pins the entry to 1 and clips
    the surface moduli to the unit disk, so every iterate is realisable by a
    passive surface. The noise-level regulariser in the profile update is far
    too small to keep moduli inside the unit disk on its own at milliwatt
    scales, so only "projected" feeds the precoder update a surface it could
    actually face; it is what the experiment harness runs.
    ``mu_mode``: "heuristic" uses the closed-form loading K*sigma2/P followed
    by power rescaling; "bisection" finds the exact Lagrange multiplier of
    the power constraint instead.
    """

    epsilon: float = 1e-4
    max_iter: int = 100
    v_normalization: str = "paper"
    mu_mode: str = "heuristic"
    power_tolerance: float = 1e-6

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.power_tolerance <= 0:
            raise ValueError("power_tolerance must be positive")
        if self.v_normalization not in ("paper", "fixed-last", "projected"):
            raise ValueError(f"unknown v_normalization {self.v_normalization!r}")
        if self.mu_mode not in ("heuristic", "bisection"):
            raise ValueError(f"unknown mu_mode {self.mu_mode!r}")


@dataclass
class SolveReport:
    """Outcome of one alternating solve.

    ``sum_rate`` is evaluated on the physically extracted profile (clipped
    moduli, pinned last entry); ``sum_rate_raw`` on the final iterate as-is.
    """

    smse_trace: list
    sum_rate: float
    sum_rate_raw: float
    iterations: int
    converged: bool
    v_final: RisProfile
    precoder: Precoder

    def to_dict(self) -> dict:
        return {
            "smse_trace": [float(x) for x in self.smse_trace],
            "sum_rate": float(self.sum_rate),
            "sum_rate_raw": float(self.sum_rate_raw),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "v_final": [[float(c.real), float(c.imag)] for c in self.v_final.v],
            "precoder": [[[float(c.real), float(c.imag)] for c in row] for row in self.precoder.weights],
        }


def _as_vector(v) -> np.ndarray:
    return np.asarray(getattr(v, "v", v), dtype=complex).reshape(-1)


def _as_matrix(w) -> np.ndarray:
    return np.asarray(getattr(w, "weights", w), dtype=complex)


def effective_rows(v, channels: ChannelRealization) -> np.ndarray:
    """End-to-end row channel of every user under profile ``v``, (K, M)."""
    vec = _as_vector(v)
    return np.tensordot(vec.conj(), channels.composite, axes=(0, 1))


def _gains(v, w, channels: ChannelRealization) -> np.ndarray:
    """Matrix of cross gains: entry (k, j) couples stream j into user k."""
    return effective_rows(v, channels) @ _as_matrix(w)


def smse(v, w, channels: ChannelRealization, noise_power: float) -> float:
    """Sum over users of E|received symbol - sent symbol|^2 for unit symbols."""
    g = _gains(v, w, channels)
    k = channels.n_ues
    return float(
        np.sum(np.abs(g) ** 2) - 2.0 * np.sum(np.real(np.diag(g))) + k * (1.0 + noise_power)
    )


def sum_rate(v, w, channels: ChannelRealization, noise_power: float) -> float:
    """Sum of per-user log2(1 + SINR) in bit/s/Hz."""
    g = np.abs(_gains(v, w, channels)) ** 2
    signal = np.diag(g)
    interference = g.sum(axis=1) - signal
    return float(np.sum(np.log2(1.0 + signal / (interference + noise_power))))


def per_user_sinr(v, w, channels: ChannelRealization, noise_power: float) -> np.ndarray:
    g = np.abs(_gains(v, w, channels)) ** 2
    signal = np.diag(g)
    return signal / (g.sum(axis=1) - signal + noise_power)


def update_v(
    w,
    channels: ChannelRealization,
    noise_power: float,
    options: SolverOptions | None = None,
) -> RisProfile:
    """Closed-form profile update for a fixed precoder.

    Solves the noise-regularised sum-MSE normal equations over profiles whose
    last entry is held at 1 by a Lagrange multiplier, then rescales to unit
    norm ("paper"), returns the pinned solution as-is ("fixed-last"), or
    clips it onto the passive feasible set ("projected").
    """
    options = options or SolverOptions()
    w_mat = _as_matrix(w)
    if not np.any(w_mat):
        raise ValueError("precoder is identically zero")
    h_bar = channels.composite
    n1 = h_bar.shape[1]
    t = h_bar @ w_mat  # (K, N+1, K)
    t_flat = np.ascontiguousarray(t.transpose(1, 0, 2)).reshape(n1, -1)
    a = t_flat @ t_flat.conj().T + noise_power * np.eye(n1)
    z = np.einsum("knk->n", t)  # sum over users of own-stream column
    rhs = np.stack([z, np.eye(n1)[:, -1]], axis=1)
    sol = np.linalg.solve(a, rhs)
    bz, be = sol[:, 0], sol[:, 1]
    nu = (bz[-1] - 1.0) / be[-1]
    v_bar = bz - nu * be
    if options.v_normalization == "paper":
        return RisProfile(v_bar / np.linalg.norm(v_bar))
    if options.v_normalization == "projected":
        return physical_profile(v_bar)
    return RisProfile(v_bar)


def _power_profile(singular_values: np.ndarray, mu: float) -> float:
    s2 = singular_values**2
    return float(np.sum(s2 / (s2 + mu) ** 2))


def update_w(
    v,
    channels: ChannelRealization,
    tx_power: float,
    noise_power: float,
    options: SolverOptions | None = None,
) -> Precoder:
    """Closed-form precoder update for a fixed profile.

    Regularised channel inversion on the effective channels. In "heuristic"
    mode the loading is K*noise/tx_power and the result is rescaled to the
    power budget; in "bisection" mode the loading itself is tuned until the
    unnormalised solution meets the budget (or the constraint is slack).
    """
    options = options or SolverOptions()
    rows = effective_rows(v, channels)  # (K, M), row k = effective channel of user k
    if not np.any(rows):
        raise ValueError("all effective channels are zero under this profile")
    h_eff = rows.conj().T  # (M, K), columns are conjugated effective channels
    k_users = h_eff.shape[1]
    if options.mu_mode == "heuristic":
        m = h_eff.shape[0]
        a = h_eff @ h_eff.conj().T + (k_users * noise_power / tx_power) * np.eye(m)
        w_raw = np.linalg.solve(a, h_eff)
        w = np.sqrt(tx_power) * w_raw / np.linalg.norm(w_raw)
        return Precoder(w, tx_power)
    # bisection: work in the SVD basis where the power is a scalar function of mu
    u, s, vt = np.linalg.svd(h_eff, full_matrices=False)
    if _power_profile(s, 0.0) <= tx_power:
        mu = 0.0
    else:
        lo, hi = 0.0, max(1.0, float(s.max()) ** 2)
        while _power_profile(s, hi) > tx_power:
            hi *= 2.0
        # 200 halvings collapse the bracket to rounding noise, far inside the
        # documented power_tolerance; cheap because s is precomputed.
        mu = 0.5 * (lo + hi)
        for _ in range(200):
            p = _power_profile(s, mu)
            if abs(p - tx_power) <= 1e-14 * tx_power:
                break
            if p > tx_power:
                lo = mu
            else:
                hi = mu
            mu = 0.5 * (lo + hi)
    w = (u * (s / (s**2 + mu))) @ vt
    return Precoder(w, tx_power)


def extract_physical(v) -> tuple:
    """Per-element moduli and phases of a profile, after re-pinning.

    The vector is first rescaled so its last entry is 1, moduli are clipped
    to the unit disk (a passive surface cannot amplify) and phases are taken
    from the conjugated entries, reduced to [0, 2*pi).
    """
    vec = _as_vector(v)
    if vec[-1] == 0:
        raise ValueError("profile has a zero direct-path entry; cannot rescale")
    u = vec / vec[-1]
    alphas = np.minimum(np.abs(u[:-1]), 1.0)
    phis = np.mod(np.angle(u[:-1].conj()), 2.0 * np.pi)
    return alphas, phis


def physical_profile(v) -> RisProfile:
    """Profile rebuilt from the clipped moduli and phases of ``v``."""
    alphas, phis = extract_physical(v)
    return RisProfile(np.append(alphas * np.exp(-1j * phis), 1.0))


def initial_precoder(channels: ChannelRealization, tx_power: float, rng: np.random.Generator) -> Precoder:
    """Random complex Gaussian matrix scaled to the full power budget."""
    w0 = _complex_normal(rng, (channels.n_antennas, channels.n_ues))
    return Precoder(np.sqrt(tx_power) * w0 / np.linalg.norm(w0), tx_power)


def surface_off_profile(n_elements: int) -> RisProfile:
    """Profile with every surface coefficient zero: only the direct path."""
    v = np.zeros(n_elements + 1, dtype=complex)
    v[-1] = 1.0
    return RisProfile(v)


def risma_solve(
    channels: ChannelRealization,
    tx_power: float,
    noise_power: float,
    options: SolverOptions | None = None,
    rng: np.random.Generator | None = None,
) -> SolveReport:
    """Alternate the two closed-form updates until the sum MSE stalls.

    The trace starts from a random full-power precoder with the surface off;
    iteration ``n`` counts one profile update followed by one precoder
    update. Reported rates come from the physically extracted profile.
    """
    options = options or SolverOptions()
    rng = rng or np.random.default_rng()
    prec = initial_precoder(channels, tx_power, rng)
    v = surface_off_profile(channels.n_elements)
    trace = [smse(v, prec, channels, noise_power)]
    converged = False
    iterations = 0
    for iterations in range(1, options.max_iter + 1):
        v = update_v(prec, channels, noise_power, options)
        prec = update_w(v, channels, tx_power, noise_power, options)
        trace.append(smse(v, prec, channels, noise_power))
        if abs(trace[-1] - trace[-2]) / abs(trace[-1]) <= options.epsilon:
            converged = True
            break
    phys = physical_profile(v)
    return SolveReport(
        smse_trace=trace,
        sum_rate=sum_rate(phys, prec, channels, noise_power),
        sum_rate_raw=sum_rate(v, prec, channels, noise_power),
        iterations=iterations,
        converged=converged,
        v_final=phys,
        precoder=prec,
    )
