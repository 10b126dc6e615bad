"""Shared builders and independent oracles for the test suite.

Everything random is driven by explicit integer-seeded generators so that
every test run sees the same draws.
"""

from __future__ import annotations

import numpy as np
import pytest

from rismasim.channel import ChannelRealization, composite_channel
from rismasim.precoders import Precoder


def rng_for(*keys) -> np.random.Generator:
    """Generator keyed by a tuple of small integers."""
    return np.random.default_rng(list(keys))


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_channels(
    rng: np.random.Generator,
    k_users: int,
    m_antennas: int,
    n_elements: int,
    scale: float = 1.0,
) -> ChannelRealization:
    """Unstructured random realisation with O(scale) channel entries.

    One surface serves every user; the composite stacks are assembled through
    the same helper the scenario generator uses.
    """
    h_direct = scale * complex_normal(rng, (k_users, m_antennas))
    g = scale * complex_normal(rng, (n_elements, m_antennas))
    h_ris = scale * complex_normal(rng, (k_users, n_elements))
    composite = np.stack(
        [composite_channel(h_ris[k], g, h_direct[k]) for k in range(k_users)]
    )
    return ChannelRealization(h_direct, g[None, :, :], h_ris, composite)


def random_precoder(rng: np.random.Generator, m_antennas: int, k_users: int, tx_power: float) -> Precoder:
    w = complex_normal(rng, (m_antennas, k_users))
    return Precoder(np.sqrt(tx_power) * w / np.linalg.norm(w), tx_power)


def min_trace_pinned_diag(cost: np.ndarray, rng: np.random.Generator,
                          n_starts: int = 12, max_iter: int = 4000) -> float:
    """First-order oracle for min tr(C V) over V PSD with unit diagonal.

    Works on a full-rank factor V = R R^H and walks the rows of R on the unit
    sphere with projected gradient steps and backtracking. Full-rank factors
    of this problem have no spurious basins, so the best of a few random
    starts lands on the global optimum to first-order accuracy.
    """
    cost = 0.5 * (cost + cost.conj().T)
    n = cost.shape[0]

    def value(r):
        return float(np.real(np.einsum("ij,jk,ik->", cost, r, r.conj())))

    def renormalize(r):
        return r / np.linalg.norm(r, axis=1, keepdims=True)

    best = np.inf
    for _ in range(n_starts):
        r = complex_normal(rng, (n, n))
        r = renormalize(r)
        val = value(r)
        step = 1.0 / max(1.0, float(np.linalg.norm(cost)))
        for _ in range(max_iter):
            grad = 2.0 * cost @ r
            s = step
            improved = False
            for _ in range(30):
                cand = renormalize(r - s * grad)
                cval = value(cand)
                if cval < val - 1e-14 * abs(val):
                    improved = True
                    break
                s *= 0.5
            if not improved:
                break
            r, val = cand, cval
            step = min(2.0 * s, 1e3 / max(1.0, float(np.linalg.norm(cost))))
        best = min(best, val)
    return best


@pytest.fixture
def rng():
    return rng_for(20240817)
