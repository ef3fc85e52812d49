"""Matrix-free operators on a hierarchical truncation, plus dense oracles.

The averaging operator at rank r replaces each rank-r block of a state by its
block mean; the cut-off Laplacian is the weighted sum of averaging operators
up to rank r.  Applications run in O(N * r) via blocked scans.  Compressing
the full Laplacian to the truncation leaves the cut-off part plus a rank-one
uniform kernel carrying the coupling tail: for x, y inside the truncation and
s > R both sites share their rank-s cluster, so each deep level contributes
the constant p_s / N_s.

Dense assembly goes through the distance kernel (independent of apply, so the
two paths can cross-check each other), and the dense symmetric eigensolver
wraps LAPACK's eigh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coupling import CouplingSequence
from .hierarchy import Truncation, distance_matrix

DENSE_CAP = 4096


class DenseCapError(ValueError):
    """Raised when a dense assembly or eigensolve exceeds the size cap."""


def _as_state(t: Truncation, psi) -> np.ndarray:
    psi = np.asarray(psi)
    if psi.ndim != 1 or psi.shape[0] != t.site_count:
        raise ValueError(
            f"state must be a vector of length {t.site_count}, got shape {psi.shape}"
        )
    dtype = np.complex128 if np.iscomplexobj(psi) else np.float64
    return psi.astype(dtype, copy=False)


def _check_cap(n: int, cap: int):
    if n > cap:
        raise DenseCapError(f"dense size {n} exceeds cap {cap}")


def averaging_apply(t: Truncation, r: int, psi: np.ndarray) -> np.ndarray:
    """Replace each rank-r block by its mean; fixes constants, projects."""
    if not 0 <= r <= t.depth:
        raise ValueError(f"rank {r} out of range [0, {t.depth}]")
    psi = _as_state(t, psi)
    if r == 0:
        return psi.copy()
    n_r = t.sizes[r]
    means = psi.reshape(-1, n_r).mean(axis=1)
    return np.repeat(means, n_r)


def cutoff_apply(
    t: Truncation, seq: CouplingSequence, r: int, psi: np.ndarray
) -> np.ndarray:
    """Apply sum_{s<=r} p_s E_s in one bottom-up/top-down blocked pass."""
    if not 0 <= r <= t.depth:
        raise ValueError(f"rank {r} out of range [0, {t.depth}]")
    psi = _as_state(t, psi)
    if r == 0:
        return np.zeros_like(psi)
    # bottom-up block sums per level, then accumulate weighted means downward
    sums = psi
    per_level = []
    for s in range(1, r + 1):
        sums = sums.reshape(-1, t.factor(s)).sum(axis=1)
        per_level.append(sums)
    acc = (seq.p(r) / t.sizes[r]) * per_level[r - 1]
    for s in range(r, 1, -1):
        acc = np.repeat(acc, t.factor(s))
        acc = acc + (seq.p(s - 1) / t.sizes[s - 1]) * per_level[s - 2]
    return np.repeat(acc, t.factor(1))


def _cutoff_kernel(t: Truncation, seq: CouplingSequence, r: int) -> np.ndarray:
    """Lookup table K[d] = sum_{s=max(1,d)}^{r} p_s / N_s, zero past rank r."""
    w = np.array([seq.p(s) / t.sizes[s] for s in range(1, r + 1)])
    k = np.zeros(t.depth + 1)
    if r > 0:
        suffix = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
        k[: r + 1] = suffix[np.maximum(np.arange(r + 1), 1) - 1]
    return k


class Averaging:
    """Orthogonal projection onto states constant on rank-r clusters."""

    def __init__(self, t: Truncation, rank: int):
        if not 0 <= rank <= t.depth:
            raise ValueError(f"rank {rank} out of range [0, {t.depth}]")
        self.trunc = t
        self.rank = rank

    def apply(self, psi) -> np.ndarray:
        return averaging_apply(self.trunc, self.rank, psi)

    def dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        t = self.trunc
        _check_cap(t.site_count, cap)
        d = distance_matrix(t)
        return np.where(d <= self.rank, 1.0 / t.sizes[self.rank], 0.0)


class CutoffLaplacian:
    """The rank-r cut-off Laplacian; block diagonal over rank-r clusters."""

    def __init__(self, t: Truncation, seq: CouplingSequence, rank: int):
        if not 0 <= rank <= t.depth:
            raise ValueError(f"rank {rank} out of range [0, {t.depth}]")
        self.trunc = t
        self.coupling = seq
        self.rank = rank

    def apply(self, psi) -> np.ndarray:
        return cutoff_apply(self.trunc, self.coupling, self.rank, psi)

    def dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        t = self.trunc
        _check_cap(t.site_count, cap)
        k = _cutoff_kernel(t, self.coupling, self.rank)
        return k[distance_matrix(t)]


class RestrictedFullLaplacian:
    """Exact compression of the full Laplacian onto the truncation.

    Equals the depth-R cut-off Laplacian plus the uniform rank-one kernel
    sum_{s>R} p_s / N_s on every entry.
    """

    def __init__(self, t: Truncation, seq: CouplingSequence):
        self.trunc = t
        self.coupling = seq
        self.tail_weight = seq.weighted_tail(t.depth, t)

    def apply(self, psi) -> np.ndarray:
        t = self.trunc
        out = cutoff_apply(t, self.coupling, t.depth, psi)
        psi = _as_state(t, psi)
        return out + self.tail_weight * psi.sum()

    def dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        t = self.trunc
        _check_cap(t.site_count, cap)
        k = _cutoff_kernel(t, self.coupling, t.depth) + self.tail_weight
        return k[distance_matrix(t)]


class Hamiltonian:
    """Random potential plus cut-off Laplacian at rank r.

    ``include_tail`` adds the compression's uniform kernel and is only
    meaningful at the truncation depth.
    """

    def __init__(
        self,
        t: Truncation,
        seq: CouplingSequence,
        omega: np.ndarray,
        rank: int,
        include_tail: bool = False,
    ):
        if not 0 <= rank <= t.depth:
            raise ValueError(f"rank {rank} out of range [0, {t.depth}]")
        omega = np.asarray(omega, dtype=float)
        if omega.shape != (t.site_count,):
            raise ValueError(
                f"potential must have length {t.site_count}, got shape {omega.shape}"
            )
        if include_tail and rank != t.depth:
            raise ValueError("the tail kernel only applies at the truncation depth")
        self.trunc = t
        self.coupling = seq
        self.omega = omega
        self.rank = rank
        self.include_tail = include_tail
        self.tail_weight = seq.weighted_tail(t.depth, t) if include_tail else 0.0

    def apply(self, psi) -> np.ndarray:
        psi = _as_state(self.trunc, psi)
        out = self.omega * psi + cutoff_apply(
            self.trunc, self.coupling, self.rank, psi
        )
        if self.include_tail:
            out = out + self.tail_weight * psi.sum()
        return out

    def dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        t = self.trunc
        _check_cap(t.site_count, cap)
        k = _cutoff_kernel(t, self.coupling, self.rank) + self.tail_weight
        h = k[distance_matrix(t)]
        h[np.diag_indices(t.site_count)] += self.omega
        return h


def cutoff_dense_block(
    t: Truncation, seq: CouplingSequence, r: int, cap: int = DENSE_CAP
) -> np.ndarray:
    """Dense rank-r cut-off Laplacian restricted to the cluster at site 0."""
    if not 0 <= r <= t.depth:
        raise ValueError(f"rank {r} out of range [0, {t.depth}]")
    n_r = t.sizes[r]
    _check_cap(n_r, cap)
    k = _cutoff_kernel(t, seq, r)
    return k[distance_matrix(t, n_r)]


def compression_dense_block(
    t: Truncation, seq: CouplingSequence, r: int, cap: int = DENSE_CAP
) -> np.ndarray:
    """Dense compression of the full Laplacian onto the cluster at site 0."""
    return cutoff_dense_block(t, seq, r, cap) + seq.weighted_tail(r, t)


@dataclass(frozen=True)
class DenseSpectrum:
    """Full symmetric eigendecomposition: ascending values, column vectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def dense_symmetric_eigensolve(a: np.ndarray) -> DenseSpectrum:
    """Eigendecompose a real symmetric matrix; deterministic for fixed input."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        raise ValueError("cannot eigensolve an empty matrix")
    tol = 1e-12 * max(1.0, float(np.abs(a).max()))
    asym = float(np.abs(a - a.T).max())
    if asym > tol:
        raise ValueError(f"matrix is not symmetric: max asymmetry {asym:g}")
    values, vectors = np.linalg.eigh(a)
    return DenseSpectrum(values, vectors)
