"""Small dense semidefinite programs by operator splitting, plus randomization.

Problems have the form

    minimize    tr(C V)
    subject to  V >= 0 (PSD), lo_i <= V_ii <= hi_i, V_ii = 1 on pinned indices

with Hermitian C. They are solved by a two-block splitting (scaled-dual ADMM):
one block is the linear cost plus the per-entry diagonal box, whose proximal
step is a shift and a clip; the other is the PSD cone, projected by clipping
negative eigenvalues. The penalty parameter self-tunes by residual balancing.

A Hermitian matrix and its real symmetric embedding
``[[Re V, -Im V], [Im V, Re V]]`` have identical spectra (doubled) and every
step above commutes with the embedding, so iterating on the complex form is
entry-for-entry the embedded iteration at half the eigendecomposition size.
``embed_hermitian``/``lift_hermitian`` expose the embedding; the test suite
runs the solver on both forms and checks the objectives coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SdpNonConvergence(RuntimeError):
    """Residuals stayed above tolerance for the allowed iteration budget."""

    def __init__(self, iterations: int, primal: float, dual: float):
        super().__init__(
            f"no convergence in {iterations} iterations "
            f"(primal residual {primal:.3e}, dual residual {dual:.3e})"
        )
        self.iterations = iterations
        self.primal_residual = primal
        self.dual_residual = dual


@dataclass
class SdpOptions:
    tol: float = 1e-6
    max_iter: int = 5000
    rho: float = 1.0
    randomizations: int = 500


@dataclass
class SdpProblem:
    """Data of one diagonally constrained PSD program."""

    cost: np.ndarray
    diag_lo: np.ndarray
    diag_hi: np.ndarray
    pinned: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    def __post_init__(self):
        self.cost = np.asarray(self.cost)
        n = self.cost.shape[0]
        if self.cost.shape != (n, n):
            raise ValueError("cost matrix must be square")
        scale = max(1.0, float(np.linalg.norm(self.cost)))
        if np.linalg.norm(self.cost - self.cost.conj().T) > 1e-12 * scale:
            raise ValueError("cost matrix must be Hermitian")
        self.diag_lo = np.asarray(self.diag_lo, dtype=float).reshape(-1)
        self.diag_hi = np.asarray(self.diag_hi, dtype=float).reshape(-1)
        if self.diag_lo.shape != (n,) or self.diag_hi.shape != (n,):
            raise ValueError("diagonal bounds must have one entry per row")
        if np.any(self.diag_lo > self.diag_hi):
            raise ValueError("diagonal lower bounds exceed upper bounds")
        self.pinned = np.asarray(self.pinned, dtype=int).reshape(-1)
        if self.pinned.size and (self.pinned.min() < 0 or self.pinned.max() >= n):
            raise ValueError("pinned indices out of range")

    @property
    def n(self) -> int:
        return self.cost.shape[0]


@dataclass
class SdpSolution:
    matrix: np.ndarray
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    # splitting state kept to warm-start a related follow-up solve
    z_state: np.ndarray | None = field(default=None, repr=False)
    u_state: np.ndarray | None = field(default=None, repr=False)
    rho_state: float = field(default=1.0, repr=False)


def embed_hermitian(a: np.ndarray) -> np.ndarray:
    """Real symmetric embedding [[Re a, -Im a], [Im a, Re a]]."""
    re, im = a.real, a.imag
    return np.block([[re, -im], [im, re]])


def lift_hermitian(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`embed_hermitian` (averaging the redundant blocks)."""
    n = x.shape[0] // 2
    re = 0.5 * (x[:n, :n] + x[n:, n:])
    im = 0.5 * (x[n:, :n] - x[:n, n:])
    return re + 1j * im


def psd_project(s: np.ndarray) -> np.ndarray:
    """Nearest (Frobenius) PSD matrix: clip negative eigenvalues to zero."""
    vals, vecs = np.linalg.eigh(s)
    if vals[0] >= 0.0:
        return s
    clipped = np.maximum(vals, 0.0)
    out = (vecs * clipped) @ vecs.conj().T
    return 0.5 * (out + out.conj().T)


def _hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def sdp_solve(
    problem: SdpProblem,
    tol: float = 1e-6,
    max_iter: int = 5000,
    rho: float = 1.0,
    warm_start: SdpSolution | None = None,
) -> SdpSolution:
    """Run the splitting to the requested residual tolerance.

    ``warm_start`` may carry the state of a previous solution of a nearby
    problem (same size); it usually cuts the iteration count several-fold.
    """
    n = problem.n
    cost = _hermitize(problem.cost.astype(complex))
    free = np.ones(n, dtype=bool)
    free[problem.pinned] = False
    if warm_start is not None and warm_start.z_state is not None and warm_start.z_state.shape == (n, n):
        z = warm_start.z_state.copy()
        u = warm_start.u_state.copy()
        rho = warm_start.rho_state
    else:
        z = np.zeros((n, n), dtype=complex)
        u = np.zeros((n, n), dtype=complex)

    x = z
    primal = dual = np.inf
    for it in range(1, max_iter + 1):
        x = _hermitize(z - u) - cost / rho
        d = x.diagonal().real.copy()
        d[free] = np.clip(d[free], problem.diag_lo[free], problem.diag_hi[free])
        d[~free] = 1.0
        np.fill_diagonal(x, d)
        z_prev = z
        z = psd_project(x + u)
        u = u + x - z
        diff = x - z
        primal = float(np.linalg.norm(diff))
        dual = float(rho * np.linalg.norm(z - z_prev))
        eps_primal = tol * max(1.0, float(np.linalg.norm(x)), float(np.linalg.norm(z)))
        eps_dual = tol * max(1.0, float(rho * np.linalg.norm(u)))
        if primal <= eps_primal and dual <= eps_dual:
            obj = float(np.real(np.tensordot(cost, x, axes=([0, 1], [1, 0]))))
            return SdpSolution(x, obj, it, primal, dual, z_state=z, u_state=u, rho_state=rho)
        if it % 25 == 0:
            if primal > 10.0 * dual and rho < 1e6:
                rho *= 2.0
                u = u / 2.0
            elif dual > 10.0 * primal and rho > 1e-6:
                rho /= 2.0
                u = u * 2.0
    raise SdpNonConvergence(max_iter, primal, dual)


def gaussian_randomize(
    covariance: np.ndarray,
    count: int,
    projector,
    objective,
    rng: np.random.Generator,
    extra_candidates=(),
):
    """Draw ``count`` Gaussian vectors with the given covariance, project each
    through ``projector`` and return ``(best_vector, best_objective)``.

    Draws are laid out so that the first L samples are identical for any
    larger count with the same generator state, making the best objective
    non-increasing in ``count``. ``extra_candidates`` are deterministic
    vectors appended to the pool after the random ones.
    """
    cov = _hermitize(np.asarray(covariance, dtype=complex))
    n = cov.shape[0]
    if count < 1 and not extra_candidates:
        raise ValueError("need at least one candidate")
    vals, vecs = np.linalg.eigh(cov)
    factor = vecs * np.sqrt(np.maximum(vals, 0.0))
    best_vec = None
    best_obj = np.inf
    if count >= 1:
        draws = rng.standard_normal((count, 2 * n))
        samples = (draws[:, :n] + 1j * draws[:, n:]) / np.sqrt(2.0) @ factor.T
        for row in samples:
            cand = projector(row)
            val = objective(cand)
            if val < best_obj:
                best_obj = val
                best_vec = cand
    for cand in extra_candidates:
        cand = np.asarray(cand, dtype=complex).reshape(-1)
        val = objective(cand)
        if val < best_obj:
            best_obj = val
            best_vec = cand
    return best_vec, float(best_obj)
