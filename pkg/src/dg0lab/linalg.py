"""SPD solves and operator norms in weighted (Gram) geometries."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import NumericFailure

DIRECT_LIMIT = 50_000
SOLVE_RTOL = 1e-12


class SpdSolver:
    """Factorised SPD system; direct up to DIRECT_LIMIT unknowns, CG above."""

    def __init__(self, A, rtol: float = SOLVE_RTOL):
        self.rtol = rtol
        if sps.issparse(A):
            self.A = A.tocsc()
            self.n = A.shape[0]
            if self.n <= DIRECT_LIMIT:
                self._lu = spla.splu(self.A)
                self._solve = self._lu.solve
            else:
                self._solve = self._cg
        else:
            self.A = np.asarray(A, dtype=float)
            self.n = self.A.shape[0]
            if self.n == 0:
                self._solve = lambda b: np.zeros_like(b)
            else:
                self._cho = sla.cho_factor(self.A)
                self._solve = lambda b: sla.cho_solve(self._cho, b)

    def _cg(self, b):
        if b.ndim > 1:
            return np.column_stack([self._cg(b[:, j]) for j in range(b.shape[1])])
        x, info = spla.cg(self.A, b, rtol=self.rtol, atol=0.0, maxiter=10 * self.n)
        if info != 0:
            raise NumericFailure("conjugate gradient did not converge", self._residual(x, b))
        return x

    def _residual(self, x, b):
        r = self.A @ x - b
        return float(np.linalg.norm(r) / max(np.linalg.norm(b), np.finfo(float).tiny))

    def solve(self, b, check: bool = False):
        b = np.asarray(b, dtype=float)
        if self.n == 0:
            return np.zeros_like(b)
        x = self._solve(b)
        if check and b.ndim == 1 and np.any(b):
            res = self._residual(x, b)
            if res > self.rtol:
                # one step of iterative refinement before giving up
                x = x - self._solve(self.A @ x - b)
                res = self._residual(x, b)
                if res > self.rtol:
                    raise NumericFailure(f"relative residual {res:.3e} above {self.rtol:.0e}", res)
        return x

    __call__ = solve


def dense(A) -> np.ndarray:
    return A.toarray() if sps.issparse(A) else np.asarray(A, dtype=float)


def _orthonormalize(X, gram_mul):
    C = X.T @ gram_mul(X)
    C = 0.5 * (C + C.T)
    w, V = np.linalg.eigh(C)
    keep = w > 1e-13 * max(w.max(), 0.0) if w.size else np.array([], bool)
    if not np.any(keep) or w.max() <= 0:
        return None
    return X @ (V[:, keep] / np.sqrt(w[keep]))


def gram_power_norm(apply_normal, gram_mul, n, block=6, tol=1e-14, maxiter=3000, seed=0):
    """Largest singular value of an operator between weighted spaces.

    ``apply_normal`` maps a block X to G_in^{-1} B* G_out B X, which is
    self-adjoint in the G_in inner product; ``gram_mul`` applies G_in.
    Subspace (block power) iteration with Rayleigh-Ritz extraction.
    """
    if n == 0:
        return 0.0
    b = min(block, n)
    rng = np.random.default_rng(seed)
    X = _orthonormalize(rng.standard_normal((n, b)), gram_mul)
    prev = None
    theta = 0.0
    for _ in range(maxiter):
        Y = apply_normal(X)
        H = X.T @ gram_mul(Y)
        theta = max(float(np.linalg.eigvalsh(0.5 * (H + H.T))[-1]), 0.0)
        if theta == 0.0 and not np.any(Y):
            return 0.0
        if prev is not None and abs(theta - prev) <= tol * theta:
            break
        prev = theta
        X_next = _orthonormalize(Y, gram_mul)
        if X_next is None:
            return 0.0
        X = X_next
    else:
        raise NumericFailure("power iteration did not converge")
    return float(np.sqrt(theta))


def lanczos_norm(apply_sym, n, tol=1e-14, seed=0) -> float:
    """sqrt of the largest eigenvalue of a symmetric PSD operator (B^T B form).

    ARPACK Lanczos with a seeded start vector; tiny systems go dense.
    """
    if n == 0:
        return 0.0
    if n <= 8:
        H = apply_sym(np.eye(n))
        return float(np.sqrt(max(np.linalg.eigvalsh(0.5 * (H + H.T))[-1], 0.0)))
    v0 = np.random.default_rng(seed).standard_normal(n)
    op = spla.LinearOperator((n, n), matvec=lambda x: apply_sym(x.reshape(n, -1)).ravel(),
                             dtype=float)
    try:
        theta = spla.eigsh(op, k=1, which="LA", tol=tol, v0=v0, maxiter=100 * n,
                           return_eigenvectors=False)[0]
    except spla.ArpackNoConvergence as exc:  # pragma: no cover - defensive
        raise NumericFailure(f"Lanczos iteration did not converge: {exc}") from exc
    return float(np.sqrt(max(theta, 0.0)))


def mass_operator_norm(apply_B, apply_Bt, mass, mass_solve, n, tol=1e-14, seed=0) -> float:
    """||B|| in the mass geometry for an implicitly given B (vectors -> vectors).

    Generalised Lanczos on B^T M B x = theta M x; ``apply_Bt`` applies the
    Euclidean transpose of B.
    """
    if n == 0:
        return 0.0
    normal = lambda x: apply_Bt(mass @ apply_B(x))  # noqa: E731
    if n <= 8:
        H = np.column_stack([normal(e) for e in np.eye(n)])
        theta = sla.eigh(0.5 * (H + H.T), dense(mass), eigvals_only=True)[-1]
        return float(np.sqrt(max(theta, 0.0)))
    op = spla.LinearOperator((n, n), matvec=normal, dtype=float)
    minv = spla.LinearOperator((n, n), matvec=mass_solve, dtype=float)
    v0 = np.random.default_rng(seed).standard_normal(n)
    theta = spla.eigsh(op, k=1, M=mass, Minv=minv, which="LA", tol=tol, v0=v0,
                       maxiter=100 * n, return_eigenvectors=False)[0]
    return float(np.sqrt(max(theta, 0.0)))


def weighted_norm(B, gram_in, gram_out=None, **kw) -> float:
    """||B|| from (R^n, gram_in) to (R^m, gram_out) for a dense matrix B."""
    B = np.asarray(B, dtype=float)
    gram_out = gram_in if gram_out is None else gram_out
    if not np.any(B):
        return 0.0
    Gin = SpdSolver(gram_in)
    BtGB = B.T @ (gram_out @ B)
    return gram_power_norm(lambda X: Gin(BtGB @ X), lambda X: gram_in @ X, B.shape[1], **kw)


def mass_norm(v, mass) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(max(v @ (mass @ v), 0.0)))
