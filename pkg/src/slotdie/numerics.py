"""Small dense numerical kernels used across the package."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, signal, special

#: condition estimate above which least squares and inversion refuse to run
COND_LIMIT = 1e12


class NumericalError(RuntimeError):
    """Base class for numerical failures (non-convergence, singularity)."""


class IllConditionedError(NumericalError):
    def __init__(self, message: str, condition: float):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})")


class ConvergenceError(NumericalError):
    pass


def erf(x):
    """Gauss error function for scalars or arrays (odd by construction)."""
    if np.ndim(x) == 0:
        return math.erf(float(x))
    return special.erf(np.asarray(x, dtype=float))


def _cond(a: np.ndarray) -> float:
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[-1] == 0:
        return math.inf
    return float(s[0] / s[-1])


def lstsq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimise ||a x - b||_2 for full-column-rank ``a``.

    No minimal-norm fallback: a rank-deficient or badly conditioned design
    matrix raises :class:`IllConditionedError`.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValueError(f"incompatible shapes {a.shape} and {b.shape}")
    if a.shape[0] < a.shape[1]:
        raise ValueError("underdetermined system: need at least as many rows as columns")
    cond = _cond(a)
    if not cond < COND_LIMIT:
        raise IllConditionedError("least-squares design matrix is rank deficient", cond)
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    return x


def inverse(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"inverse needs a square matrix, got {m.shape}")
    cond = _cond(m)
    if not cond < COND_LIMIT:
        raise IllConditionedError("matrix is singular to working precision", cond)
    return np.linalg.inv(m)


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T


def svd(m: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60) -> SvdResult:
    """One-sided cyclic Jacobi SVD of a small square matrix.

    Columns of a working copy are rotated pairwise until mutually orthogonal;
    the rotations accumulate into V and the column norms are the singular
    values.
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"svd needs a square matrix, got {np.shape(m)}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    n = a.shape[1]
    v = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = a[:, p] @ a[:, p]
                beta = a[:, q] @ a[:, q]
                gamma = a[:, p] @ a[:, q]
                if abs(gamma) <= tol * math.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / math.hypot(1.0, t)
                s = c * t
                ap, aq = a[:, p].copy(), a[:, q]
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            break
    else:
        raise ConvergenceError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")

    sigma = np.linalg.norm(a, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, a, v = sigma[order], a[:, order], v[:, order]
    tiny = n * np.finfo(float).eps * (sigma[0] if sigma[0] > 0 else 1.0)
    rank = int(np.sum(sigma > tiny))
    u = np.zeros_like(a)
    u[:, :rank] = a[:, :rank] / sigma[:rank]
    if rank < n:
        # complete U with an orthonormal basis of the complement
        q, _ = np.linalg.qr(np.hstack([u[:, :rank], np.eye(n)]))
        u[:, rank:] = q[:, rank:n]
        sigma[rank:] = 0.0
    return SvdResult(U=u, S=sigma, V=v)


def minimize_1d(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-8,
    n_grid: int = 33,
) -> float:
    """Global-ish scalar minimisation on [lo, hi].

    A coarse grid (log-spaced when lo > 0) picks the best cell, which is then
    refined by bounded Brent/golden-section search to absolute tolerance tol.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    if not tol > 0:
        raise ValueError("tol must be positive")

    def checked(x: float) -> float:
        val = float(f(x))
        if not math.isfinite(val):
            raise NumericalError(f"objective returned {val} at x={x!r}")
        return val

    grid = np.geomspace(lo, hi, n_grid) if lo > 0 else np.linspace(lo, hi, n_grid)
    values = np.array([checked(x) for x in grid])
    k = int(np.argmin(values))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
    res = optimize.minimize_scalar(
        checked, bounds=(a, b), method="bounded", options={"xatol": tol, "maxiter": 500}
    )
    x = float(res.x)
    # Brent never evaluates the bracket ends; keep them if they are better
    best = min(((values[k], float(grid[k])), (float(res.fun), x)))
    return float(min(max(best[1], lo), hi))


def prbs_bits(n_bits: int, seed: int, degree: int = 10) -> np.ndarray:
    """Maximal-length LFSR sequence in {-1, +1}; ``seed`` picks the start state."""
    if n_bits < 1:
        raise ValueError("n_bits must be >= 1")
    if degree < 10:
        raise ValueError("LFSR degree must be at least 10")
    rng = np.random.default_rng(seed)
    state = np.zeros(degree, dtype=np.int8)
    while not state.any():
        state = rng.integers(0, 2, size=degree, dtype=np.int8)
    seq, _ = signal.max_len_seq(degree, state=state, length=n_bits)
    return 2.0 * seq.astype(float) - 1.0
