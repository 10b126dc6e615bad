"""Classic downlink precoders used as baselines and building blocks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Gram matrices with condition numbers beyond this are treated as rank
# deficient: the pseudo-solution would be dominated by rounding noise.
_COND_LIMIT = 1e12


class SingularChannelError(np.linalg.LinAlgError):
    """Channel matrix is (numerically) rank deficient for the requested precoder."""

    def __init__(self, message: str, cond: float):
        super().__init__(f"{message} (condition number {cond:.3e})")
        self.cond = cond


@dataclass
class Precoder:
    """A precoding matrix with one column per user and its power budget (mW)."""

    weights: np.ndarray  # (M, K)
    power_budget: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=complex)
        if self.weights.ndim == 1:
            self.weights = self.weights[:, None]
        used = float(np.linalg.norm(self.weights) ** 2)
        if used > self.power_budget * (1.0 + 1e-9):
            raise ValueError(f"precoder uses {used} mW > budget {self.power_budget} mW")

    @property
    def n_users(self) -> int:
        return self.weights.shape[1]


def mrt(effective_channel: np.ndarray, tx_power: float) -> Precoder:
    """Full-power beam matched to a single user's effective channel."""
    g = np.asarray(effective_channel, dtype=complex).reshape(-1)
    norm = np.linalg.norm(g)
    if norm == 0.0:
        raise SingularChannelError("zero effective channel", np.inf)
    w = np.sqrt(tx_power) * g / norm
    return Precoder(w[:, None], tx_power)


def zf(h_direct: np.ndarray, tx_power: float) -> Precoder:
    """Interference-nulling precoder, scaled to use the whole power budget.

    ``h_direct`` has one column per user. Requires at least as many antennas
    as users and well-separated columns; otherwise the unnormalised inverse
    blows up and the call fails loudly rather than returning noise.
    """
    h = np.asarray(h_direct, dtype=complex)
    m, k = h.shape
    if k > m:
        raise ValueError(f"zero forcing needs M >= K, got M={m}, K={k}")
    gram = h.conj().T @ h
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise SingularChannelError("rank-deficient user channels", cond)
    w_raw = h @ np.linalg.inv(gram)
    w = np.sqrt(tx_power) * w_raw / np.linalg.norm(w_raw)
    return Precoder(w, tx_power)


def zf_least_squares(h_direct: np.ndarray, tx_power: float) -> Precoder:
    """Best-effort interference nulling when the strict inverse does not exist.

    Minimum-norm least-squares solution of ``H^H W = I`` via the
    pseudo-inverse, Frobenius-normalised to the power budget. Used by the
    experiment harness for trials where :func:`zf` is infeasible (K > M or
    collinear users), so the baseline curve stays defined there.
    """
    h = np.asarray(h_direct, dtype=complex)
    w_raw = np.linalg.pinv(h.conj().T)
    w = np.sqrt(tx_power) * w_raw / np.linalg.norm(w_raw)
    return Precoder(w, tx_power)


def mmse(h_direct: np.ndarray, tx_power: float, noise_power: float) -> Precoder:
    """Regularised inversion of the direct channels, Frobenius-normalised.

    The regulariser is ``M * noise_power / tx_power`` with M the antenna
    count, which keeps the matrix invertible for any channel draw.
    """
    h = np.asarray(h_direct, dtype=complex)
    m = h.shape[0]
    a = h @ h.conj().T + (m * noise_power / tx_power) * np.eye(m)
    w_raw = np.linalg.solve(a, h)
    w = np.sqrt(tx_power) * w_raw / np.linalg.norm(w_raw)
    return Precoder(w, tx_power)
