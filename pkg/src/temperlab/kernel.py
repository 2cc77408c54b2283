"""Algebra of finite reversible Markov kernels.

An :class:`ExactKernel` pairs a row-stochastic matrix with the density it
is meant to preserve. Everything else in the package (tempered chains,
bounds, verification) is built from the operations in this module:
restriction to a subset, projection onto a partition, Metropolis-Hastings
construction, holding, composition, spectral gaps and Dirichlet forms.

Matrices may be dense ``numpy`` arrays or ``scipy.sparse`` CSR arrays; the
large product-space chains are sparse, everything else is dense.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from .errors import (
    DomainError,
    KernelValidationError,
    ReversibilityError,
    ShapeError,
)

STOCHASTIC_TOL = 1e-12
BALANCE_TOL = 1e-10
INEQUALITY_SLACK = 1e-9

# Above this many states the spectral routines switch from a full symmetric
# eigendecomposition to a deflated Lanczos solve on the sparse operator.
DENSE_LIMIT = 4096


def _is_sparse(m) -> bool:
    return sp.issparse(m)


def as_dense(m) -> np.ndarray:
    """Return ``m`` as a dense float array (no copy when already dense)."""
    if _is_sparse(m):
        return m.toarray()
    return np.asarray(m, dtype=float)


def as_density(weights, tol: float = STOCHASTIC_TOL) -> np.ndarray:
    """Validate a probability vector and return it as a float array.

    Raises
    ------
    DomainError
        If any weight is negative, the support is empty, or the weights do
        not sum to one within ``tol``.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise DomainError("density must be a non-empty 1-D array")
    if not np.all(np.isfinite(w)):
        raise DomainError("density has non-finite entries")
    if np.any(w < 0):
        raise DomainError("density has negative entries")
    total = w.sum()
    if abs(total - 1.0) > tol:
        raise DomainError(f"density sums to {total!r}, not 1")
    return w


def normalize(weights) -> np.ndarray:
    """Scale nonnegative weights to sum to one."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0:
        raise DomainError("cannot normalize weights with zero total mass")
    return w / total


class Partition:
    """A labelling of ``n`` states into ``J`` nonempty blocks.

    Block labels are 0-based: ``block_of[x]`` is in ``range(J)``.
    """

    def __init__(self, block_of: Sequence[int], n_blocks: int | None = None):
        labels = np.asarray(block_of, dtype=np.int64)
        if labels.ndim != 1 or labels.size == 0:
            raise DomainError("partition needs a non-empty 1-D label array")
        if labels.min() < 0:
            raise DomainError("block labels must be nonnegative")
        J = int(labels.max()) + 1 if n_blocks is None else int(n_blocks)
        if labels.max() >= J:
            raise DomainError("block label out of range")
        counts = np.bincount(labels, minlength=J)
        if np.any(counts == 0):
            empty = np.flatnonzero(counts == 0).tolist()
            raise DomainError(f"partition has empty blocks {empty}")
        self.block_of = labels
        self.J = J

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[int]], n: int) -> "Partition":
        labels = np.full(n, -1, dtype=np.int64)
        for j, block in enumerate(blocks):
            idx = np.asarray(block, dtype=np.int64)
            if np.any(labels[idx] >= 0):
                raise DomainError("blocks overlap")
            labels[idx] = j
        if np.any(labels < 0):
            raise DomainError("blocks do not cover the state space")
        return cls(labels, len(blocks))

    @classmethod
    def trivial(cls, n: int) -> "Partition":
        return cls(np.zeros(n, dtype=np.int64), 1)

    @property
    def size(self) -> int:
        return self.block_of.size

    def blocks(self) -> list[np.ndarray]:
        order = np.argsort(self.block_of, kind="stable")
        bounds = np.cumsum(np.bincount(self.block_of, minlength=self.J))[:-1]
        return np.split(order, bounds)

    def masses(self, pi) -> np.ndarray:
        pi = np.asarray(pi, dtype=float)
        if pi.shape != self.block_of.shape:
            raise ShapeError("density and partition sizes differ")
        return np.bincount(self.block_of, weights=pi, minlength=self.J)

    def indicator(self) -> sp.csr_array:
        n = self.size
        return sp.csr_array(
            (np.ones(n), (np.arange(n), self.block_of)), shape=(n, self.J)
        )

    def __repr__(self) -> str:
        return f"Partition(n={self.size}, J={self.J})"


@dataclass(frozen=True, eq=False)
class ExactKernel:
    """Row-stochastic matrix paired with its stationary density.

    ``reversible`` flags that detailed balance with ``stationary`` holds and
    is checked at construction. ``signed`` permits negative entries; it is
    only used for operator square roots, which are not Markov kernels.
    """

    matrix: object
    stationary: np.ndarray
    reversible: bool = True
    signed: bool = False

    def __post_init__(self):
        m = self.matrix
        if _is_sparse(m):
            m = sp.csr_array(m, dtype=float)
        else:
            m = np.array(m, dtype=float)
            m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"kernel matrix must be square, got {m.shape}")
        try:
            pi = as_density(self.stationary)
        except DomainError as exc:
            raise KernelValidationError(f"bad stationary density: {exc}") from exc
        if pi.size != m.shape[0]:
            raise ShapeError("stationary density length differs from matrix size")
        pi = pi.copy()
        pi.flags.writeable = False
        object.__setattr__(self, "stationary", pi)

        rows = np.asarray(m.sum(axis=1)).ravel()
        worst = np.max(np.abs(rows - 1.0))
        if worst > STOCHASTIC_TOL:
            raise KernelValidationError(f"rows do not sum to 1 (max error {worst:.3g})")
        if not self.signed:
            lowest = m.data.min() if _is_sparse(m) and m.nnz else np.min(m)
            if lowest < -STOCHASTIC_TOL:
                raise KernelValidationError(f"negative transition probability {lowest:.3g}")
        if self.reversible:
            res = balance_residual(self)
            if res > BALANCE_TOL:
                raise KernelValidationError(
                    f"flagged reversible but detailed balance fails by {res:.3g}"
                )

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_sparse(self) -> bool:
        return _is_sparse(self.matrix)

    def dense(self) -> np.ndarray:
        return as_dense(self.matrix)

    def to_dict(self) -> dict:
        """Dense row-major dump for debugging and replay files."""
        return {
            "matrix": self.dense().tolist(),
            "stationary": self.stationary.tolist(),
            "reversible": self.reversible,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExactKernel":
        return cls(np.array(d["matrix"], dtype=float), np.array(d["stationary"]),
                   reversible=bool(d.get("reversible", True)))


def _flow(k: ExactKernel):
    """pi(x) P(x, y) as a matrix."""
    if k.is_sparse:
        return sp.diags_array(k.stationary) @ k.matrix
    return k.stationary[:, None] * k.matrix


def balance_residual(k: ExactKernel) -> float:
    """max |pi(x)P(x,y) - pi(y)P(y,x)|."""
    F = _flow(k)
    D = F - F.T
    if _is_sparse(D):
        return float(abs(D).max()) if D.nnz else 0.0
    return float(np.max(np.abs(D)))


def check_reversible(k: ExactKernel, tol: float = BALANCE_TOL) -> bool:
    return balance_residual(k) <= tol


def _require_reversible(k: ExactKernel) -> None:
    if not k.reversible and not check_reversible(k):
        raise ReversibilityError("kernel is not reversible w.r.t. its stationary density")


def _require_positive(k: ExactKernel) -> None:
    if np.any(k.stationary <= 0):
        raise DomainError("stationary density has zero-mass states")


def _symmetrized(k: ExactKernel):
    """D^{1/2} P D^{-1/2}, symmetrized to remove rounding asymmetry."""
    r = 1.0 / np.sqrt(k.stationary)
    F = _flow(k)
    if _is_sparse(F):
        R = sp.diags_array(r)
        S = R @ F @ R
        return ((S + S.T) * 0.5).tocsr()
    S = r[:, None] * F * r[None, :]
    return 0.5 * (S + S.T)


def _top_nontrivial_eigenvalue(k: ExactKernel) -> float:
    S = _symmetrized(k)
    v = np.sqrt(k.stationary)
    n = k.n
    # Reflecting sqrt(pi) to eigenvalue -1 keeps lambda_2 on top even when
    # every nontrivial eigenvalue is negative.
    op = spl.LinearOperator(
        (n, n), matvec=lambda x: S @ np.ravel(x) - 2.0 * v * (v @ np.ravel(x)),
        dtype=float,
    )
    v0 = np.random.default_rng(0).standard_normal(n)
    vals = spl.eigsh(op, k=2, which="LA", tol=1e-13, v0=v0,
                     return_eigenvectors=False)
    return float(np.max(vals))


def eigenvalues(k: ExactKernel) -> np.ndarray:
    """All eigenvalues of a reversible kernel, descending (dense only)."""
    _require_reversible(k)
    _require_positive(k)
    S = _symmetrized(k)
    return np.linalg.eigvalsh(as_dense(S))[::-1]


def spectral_gap(k: ExactKernel, dense_limit: int = DENSE_LIMIT) -> float:
    """``1 - lambda_2`` of a reversible kernel.

    ``lambda_2`` is the second-largest signed eigenvalue of the
    pi-symmetrized matrix, so negative eigenvalues never cap the gap. A
    one-state kernel has gap 1 by convention (the variational infimum is
    over an empty set).

    Kernels with more than ``dense_limit`` states are handled by Lanczos
    iteration on the deflated sparse operator instead of a full
    eigendecomposition.

    Raises
    ------
    ReversibilityError
        If detailed balance fails.
    DomainError
        If the stationary density has zero-mass states.
    """
    _require_reversible(k)
    _require_positive(k)
    if k.n == 1:
        return 1.0
    if k.n > dense_limit:
        lam2 = _top_nontrivial_eigenvalue(k)
    else:
        lam2 = np.linalg.eigvalsh(as_dense(_symmetrized(k)))[-2]
    return float(min(max(1.0 - lam2, 0.0), 2.0))


def smallest_eigenvalue(k: ExactKernel, dense_limit: int = DENSE_LIMIT) -> float:
    _require_reversible(k)
    _require_positive(k)
    S = _symmetrized(k)
    if k.n > dense_limit:
        v0 = np.random.default_rng(0).standard_normal(k.n)
        return float(spl.eigsh(S, k=1, which="SA", tol=1e-12, v0=v0,
                               return_eigenvectors=False)[0])
    return float(np.linalg.eigvalsh(as_dense(S))[0])


def check_nonneg_definite(k: ExactKernel, tol: float = BALANCE_TOL) -> bool:
    """True iff every eigenvalue of the symmetrized kernel is >= -tol."""
    if not check_reversible(k):
        raise ReversibilityError("nonnegative definiteness needs a reversible kernel")
    return smallest_eigenvalue(k) >= -tol


def _check_vector(k: ExactKernel, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (k.n,):
        raise ShapeError(f"function has shape {f.shape}, kernel has {k.n} states")
    return f


def dirichlet_form(k: ExactKernel, f) -> float:
    """E(f, f) = sum_x pi(x) f(x) [(I - P) f](x)."""
    f = _check_vector(k, f)
    return float(np.dot(k.stationary * f, f - k.matrix @ f))


def dirichlet_form_edges(k: ExactKernel, f) -> float:
    """Edge form 1/2 sum pi(x)P(x,y)(f(x)-f(y))^2, equal to E(f,f) when reversible."""
    f = _check_vector(k, f)
    F = as_dense(_flow(k))
    d = f[:, None] - f[None, :]
    return float(0.5 * np.sum(F * d * d))


def variance(pi, f) -> float:
    pi = np.asarray(pi, dtype=float)
    f = np.asarray(f, dtype=float)
    if pi.shape != f.shape:
        raise ShapeError("density and function shapes differ")
    mean = np.dot(pi, f)
    return float(max(np.dot(pi, (f - mean) ** 2), 0.0))


def rayleigh_gap(k: ExactKernel, trials: int, rng=None) -> float:
    """Minimum of E(f,f)/Var(f) over sampled test functions.

    Trial ``t`` uses ``P^t g`` for a fresh random ``g``, so later trials
    concentrate on the slowest mode and the minimum approaches the gap for
    nonnegative definite chains. Always an upper bound on ``spectral_gap``.
    """
    _require_reversible(k)
    _require_positive(k)
    if k.n == 1:
        return 1.0
    rng = np.random.default_rng(rng)
    best = np.inf
    for t in range(trials):
        f = rng.standard_normal(k.n)
        for _ in range(t):
            f = k.matrix @ f
            f = f - np.dot(k.stationary, f)
            scale = np.max(np.abs(f))
            if scale == 0:
                break
            f = f / scale
        var = variance(k.stationary, f)
        if var <= 1e-300:
            continue
        best = min(best, dirichlet_form(k, f) / var)
    return float(best)


def _subset_indices(n: int, A) -> np.ndarray:
    A = np.asarray(A)
    if A.dtype == bool:
        if A.shape != (n,):
            raise ShapeError("boolean subset mask has the wrong length")
        idx = np.flatnonzero(A)
    else:
        idx = np.unique(A.astype(np.int64))
    if idx.size == 0:
        raise DomainError("subset is empty")
    if idx[0] < 0 or idx[-1] >= n:
        raise DomainError("subset index out of range")
    return idx


def restrict(k: ExactKernel, A) -> ExactKernel:
    """Restriction of ``k`` to ``A``: moves leaving ``A`` are turned into holds.

    The stationary density of the result is ``pi`` conditioned on ``A``.
    """
    idx = _subset_indices(k.n, A)
    mass = k.stationary[idx].sum()
    if not mass > 0:
        raise DomainError("subset has zero stationary mass")
    m = k.matrix
    if _is_sparse(m):
        sub = m[idx][:, idx].tocsr()
        leak = 1.0 - np.asarray(sub.sum(axis=1)).ravel()
        sub = (sub + sp.diags_array(leak)).tocsr()
    else:
        sub = m[np.ix_(idx, idx)].copy()
        sub[np.diag_indices(idx.size)] += 1.0 - sub.sum(axis=1)
    return ExactKernel(sub, k.stationary[idx] / mass, reversible=k.reversible)


def project(k: ExactKernel, partition: Partition) -> ExactKernel:
    """Projection matrix of ``k`` onto the blocks of ``partition``.

    Entry ``(i, j)`` is the stationary probability of jumping into block
    ``j`` given the chain is in block ``i``. Its stationary density is the
    vector of block masses.
    """
    if partition.size != k.n:
        raise ShapeError("partition size differs from kernel size")
    masses = partition.masses(k.stationary)
    if np.any(masses <= 0):
        raise DomainError("partition has a zero-mass block")
    B = partition.indicator()
    flows = B.T @ _flow(k) @ B
    P = as_dense(flows) / masses[:, None]
    # row sums equal 1 only up to rounding of the flow aggregation
    P /= P.sum(axis=1, keepdims=True)
    return ExactKernel(P, masses / masses.sum(), reversible=k.reversible)


def metropolis_hastings(proposal, target) -> ExactKernel:
    """Metropolis-Hastings kernel for a proposal matrix and a target density.

    A move ``w -> z`` with ``pi(w) p(w, z) = 0 < pi(z) p(z, w)`` is accepted
    with probability one (ratio treated as infinite); zero-over-zero moves
    are rejected. Rejected mass is held on the diagonal.
    """
    p = as_dense(proposal)
    pi = as_density(target)
    if p.shape != (pi.size, pi.size):
        raise ShapeError("proposal and target sizes differ")
    if np.any(p < 0) or np.max(np.abs(p.sum(axis=1) - 1.0)) > STOCHASTIC_TOL:
        raise DomainError("proposal is not row-stochastic")
    fwd = pi[:, None] * p
    back = fwd.T
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(fwd > 0, back / np.where(fwd > 0, fwd, 1.0),
                         np.where(back > 0, np.inf, 0.0))
    P = p * np.minimum(1.0, ratio)
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, np.clip(1.0 - P.sum(axis=1), 0.0, None))
    return ExactKernel(P, pi, reversible=True)


def add_holding(k: ExactKernel, h: float) -> ExactKernel:
    """(1 - h) P + h I."""
    if not 0.0 <= h < 1.0:
        raise DomainError("holding probability must lie in [0, 1)")
    if k.is_sparse:
        m = ((1.0 - h) * k.matrix + h * sp.eye_array(k.n)).tocsr()
    else:
        m = (1.0 - h) * k.matrix + h * np.eye(k.n)
    return ExactKernel(m, k.stationary, reversible=k.reversible, signed=k.signed)


def _same_stationary(a: ExactKernel, b: ExactKernel) -> None:
    if a.n != b.n:
        raise ShapeError("kernels act on different state spaces")
    if np.max(np.abs(a.stationary - b.stationary)) > STOCHASTIC_TOL:
        raise DomainError("kernels have different stationary densities")


def _matmul(a, b):
    if _is_sparse(a) and not _is_sparse(b):
        b = sp.csr_array(b)
    elif _is_sparse(b) and not _is_sparse(a):
        a = sp.csr_array(a)
    out = a @ b
    return out.tocsr() if _is_sparse(out) else out


def compose(a: ExactKernel, b: ExactKernel, c: ExactKernel) -> ExactKernel:
    """The product ``a b c``; reversible when ``a`` and ``c`` coincide."""
    _same_stationary(a, b)
    _same_stationary(b, c)
    m = _matmul(_matmul(a.matrix, b.matrix), c.matrix)
    symmetric = a is c or (
        a.is_sparse == c.is_sparse
        and (abs(a.matrix - c.matrix).max() == 0 if a.is_sparse
             else np.array_equal(a.matrix, c.matrix))
    )
    reversible = a.reversible and b.reversible and c.reversible and symmetric
    return ExactKernel(m, a.stationary, reversible=reversible,
                       signed=a.signed or b.signed or c.signed)


def power_kernel(k: ExactKernel, n: int) -> ExactKernel:
    if n < 1:
        raise DomainError("power must be at least 1")
    if k.is_sparse:
        m = k.matrix
        for _ in range(n - 1):
            m = (m @ k.matrix).tocsr()
    else:
        m = np.linalg.matrix_power(k.matrix, n)
    return ExactKernel(m, k.stationary, reversible=k.reversible, signed=k.signed)


def sqrt_kernel(k: ExactKernel) -> ExactKernel:
    """Nonnegative square root of a nonnegative definite reversible kernel.

    The result is self-adjoint in L2(pi) with rows summing to one but may
    have negative entries, so it is returned with ``signed=True``.
    """
    _require_reversible(k)
    _require_positive(k)
    S = as_dense(_symmetrized(k))
    lam, U = np.linalg.eigh(S)
    if lam[0] < -BALANCE_TOL:
        raise DomainError("square root needs a nonnegative definite kernel")
    root = (U * np.sqrt(np.clip(lam, 0.0, None))) @ U.T
    d = np.sqrt(k.stationary)
    m = root * d[None, :] / d[:, None]
    m /= m.sum(axis=1, keepdims=True)
    return ExactKernel(m, k.stationary, reversible=True, signed=True)


def tv_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError("densities have different lengths")
    return float(0.5 * np.abs(a - b).sum())


def distribution_after(k: ExactKernel, mu0, steps: Sequence[int]) -> np.ndarray:
    """Rows ``mu0 P^n`` for each ``n`` in increasing ``steps``."""
    mu = np.asarray(mu0, dtype=float)
    out = []
    done = 0
    for n in steps:
        for _ in range(n - done):
            mu = k.matrix.T @ mu
        done = n
        out.append(np.array(mu))
    return np.array(out)
