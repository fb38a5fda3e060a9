"""Finite reversible Markov kernels and the concrete chains under study.

A kernel is stored sparsely together with its stationary distribution and
the structural flags (reversibility, half-laziness) its builder promises.
Builders cover the half-lazy simple random walk on a discrete torus, the
Metropolis restriction of a regular-graph walk to a vertex subset, the
half-lazy random-transposition walk on the symmetric group, and its
restriction to derangements.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from . import permutations as perms
from .errors import (
    CapacityError,
    DegenerateGraphError,
    DimensionError,
    EmptySpaceError,
    ErgodicityError,
    StructureMismatchError,
    UnsupportedOperatorError,
)

ROW_TOL = 1e-12          # structural residuals: row sums, stationarity, balance
SPECTRAL_TOL = 1e-10     # top-eigenvalue residual
EIG_RESIDUAL_TOL = 1e-8  # ||Pv - lambda v||_inf when eigenvectors are requested
DENSE_EIG_CAP = 5100     # largest state count for full dense eigensolves


@dataclass(frozen=True)
class StateSpace:
    """Ordered label set with a dense integer indexing."""

    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(self.labels)})
        if len(self._index) != len(self.labels):
            raise ValueError("state labels are not unique")

    @property
    def index(self) -> dict:
        return self._index

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label) -> bool:
        return label in self._index


@dataclass
class Kernel:
    """Row-stochastic sparse transition operator with stationary weights."""

    space: StateSpace
    matrix: sp.csr_matrix
    pi: np.ndarray
    reversible: bool = False
    half_lazy: bool = False

    def __post_init__(self):
        n = len(self.space)
        if self.matrix.shape != (n, n) or self.pi.shape != (n,):
            raise DimensionError("kernel pieces disagree on the state count")
        coo = self.matrix.tocoo()
        off = coo.row != coo.col
        self._erow = coo.row[off].astype(np.int64)
        self._ecol = coo.col[off].astype(np.int64)
        self._eval = coo.data[off].astype(float)

    @property
    def n(self) -> int:
        return len(self.space)

    def edges(self):
        """Off-diagonal entries as (row, col, value) arrays."""
        return self._erow, self._ecol, self._eval

    def p(self, x, y) -> float:
        i, j = self.space.index[x], self.space.index[y]
        return self.matrix[i, j]

    def validate(self, tol: float = ROW_TOL) -> None:
        """Assert row sums, stationarity, and the declared flags."""
        rows = np.asarray(self.matrix.sum(axis=1)).ravel()
        if np.max(np.abs(rows - 1.0)) > tol:
            raise ValueError("rows do not sum to 1")
        if abs(self.pi.sum() - 1.0) > tol:
            raise ValueError("stationary weights do not sum to 1")
        if np.max(np.abs(self.pi @ self.matrix - self.pi)) > tol:
            raise ValueError("pi is not stationary")
        if self.reversible:
            r, c, v = self.edges()
            if np.max(np.abs(self.pi[r] * v - self.pi[c] * self._transposed_vals())) > tol:
                raise ValueError("detailed balance fails")
        if self.half_lazy:
            if np.min(self.matrix.diagonal()) < 0.5 - tol:
                raise ValueError("kernel is not half-lazy")

    def _transposed_vals(self) -> np.ndarray:
        csr = self.matrix.tocsr()
        return np.asarray(csr[self._ecol, self._erow]).ravel()

    def detailed_balance_residual(self) -> float:
        r, c, v = self.edges()
        if len(v) == 0:
            return 0.0
        return float(np.max(np.abs(self.pi[r] * v - self.pi[c] * self._transposed_vals())))

    def to_json(self) -> str:
        coo = self.matrix.tocoo()
        payload = {
            "states": [_label_to_json(l) for l in self.space.labels],
            "triplets": [[int(i), int(j), float(p)] for i, j, p in zip(coo.row, coo.col, coo.data)],
            "pi": [float(w) for w in self.pi],
        }
        return json.dumps(payload, sort_keys=True)


def _label_to_json(label):
    if isinstance(label, tuple):
        return list(label)
    return label


def _label_from_json(label):
    if isinstance(label, list):
        return tuple(label)
    return label


def kernel_from_json(text: str) -> Kernel:
    payload = json.loads(text)
    labels = tuple(_label_from_json(l) for l in payload["states"])
    n = len(labels)
    trip = payload["triplets"]
    rows = [t[0] for t in trip]
    cols = [t[1] for t in trip]
    vals = [t[2] for t in trip]
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    pi = np.array(payload["pi"], dtype=float)
    k = Kernel(StateSpace(labels), mat, pi)
    k.reversible = k.detailed_balance_residual() < ROW_TOL
    k.half_lazy = bool(np.min(mat.diagonal()) >= 0.5 - ROW_TOL)
    return k


def kernel_from_edge_list(text: str) -> Kernel:
    """Parse 'i j weight' lines ('#' comments). Missing diagonal mass is
    filled so rows sum to 1; the stationary law is the left Perron vector."""
    entries = {}
    labels = []
    seen = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        a, b, w = line.split()
        for lab in (a, b):
            if lab not in seen:
                seen.add(lab)
                labels.append(lab)
        entries[(a, b)] = entries.get((a, b), 0.0) + float(w)
    if not labels:
        raise EmptySpaceError("edge list defines no states")
    space = StateSpace(tuple(labels))
    n = len(space)
    mat = sp.dok_matrix((n, n))
    for (a, b), w in entries.items():
        mat[space.index[a], space.index[b]] = w
    mat = mat.tocsr()
    rows = np.asarray(mat.sum(axis=1)).ravel()
    if np.any(rows > 1.0 + ROW_TOL):
        raise ValueError("a row exceeds total mass 1")
    mat = mat + sp.diags(1.0 - rows)
    dense = mat.toarray()
    w, v = np.linalg.eig(dense.T)
    i = int(np.argmax(w.real))
    pi = np.abs(v[:, i].real)
    pi = pi / pi.sum()
    k = Kernel(space, mat.tocsr(), pi)
    k.reversible = k.detailed_balance_residual() < 1e-9
    k.half_lazy = bool(np.min(mat.diagonal()) >= 0.5 - ROW_TOL)
    return k


# ---------------------------------------------------------------------------
# builders


def build_torus_srw(side: int) -> Kernel:
    """Half-lazy simple random walk on the side x side torus.

    Each state keeps mass 1/2 and sends 1/8 to each of its four neighbours;
    the stationary law is uniform.
    """
    if side < 3:
        raise DegenerateGraphError("torus side must be at least 3")
    labels = tuple((i, j) for i in range(side) for j in range(side))
    space = StateSpace(labels)
    n = len(labels)
    rows, cols, vals = [], [], []
    for i in range(side):
        for j in range(side):
            a = space.index[(i, j)]
            rows.append(a)
            cols.append(a)
            vals.append(0.5)
            for (di, dj) in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                b = space.index[((i + di) % side, (j + dj) % side)]
                rows.append(a)
                cols.append(b)
                vals.append(0.125)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    pi = np.full(n, 1.0 / n)
    return Kernel(space, mat, pi, reversible=True, half_lazy=True)


def _srw_degree(base: Kernel) -> int:
    """Regular degree of a half-lazy SRW base kernel, or raise."""
    r, c, v = base.edges()
    if len(v) == 0:
        raise StructureMismatchError("base kernel has no edges")
    w = v[0]
    if np.max(np.abs(v - w)) > ROW_TOL:
        raise StructureMismatchError("base walk is not edge-uniform")
    diag = base.matrix.diagonal()
    if np.max(np.abs(diag - 0.5)) > ROW_TOL:
        raise StructureMismatchError("base walk is not half-lazy SRW")
    degs = np.bincount(r, minlength=base.n)
    if degs.min() != degs.max():
        raise StructureMismatchError("base graph is not regular")
    d = int(degs[0])
    if abs(w - 1.0 / (2 * d)) > ROW_TOL:
        raise StructureMismatchError("off-diagonal mass is not 1/(2d)")
    return d


def metropolize_restriction(base: Kernel, kept) -> Kernel:
    """Metropolis restriction of a half-lazy SRW to a vertex subset.

    Moves of the base walk that would exit the subset are rejected, so each
    kept edge keeps its proposal weight 1/(2d) and the diagonal becomes
    1 - deg(x)/(2d) >= 1/2.  The uniform law on the subset is stationary.
    """
    kept = list(kept)
    if not kept:
        raise EmptySpaceError("kept set is empty")
    d = _srw_degree(base)
    kept_set = set(kept)
    labels = tuple(lab for lab in base.space.labels if lab in kept_set)
    if len(labels) != len(kept_set):
        raise DimensionError("kept contains labels outside the base space")
    space = StateSpace(labels)
    n = len(labels)
    w = 1.0 / (2 * d)
    br, bc, _ = base.edges()
    rows, cols, vals = [], [], []
    deg = np.zeros(n, dtype=int)
    base_idx = base.space.index
    keep_id = {base_idx[lab]: space.index[lab] for lab in labels}
    for i, j in zip(br, bc):
        if i in keep_id and j in keep_id:
            rows.append(keep_id[i])
            cols.append(keep_id[j])
            vals.append(w)
            deg[keep_id[i]] += 1
    for a in range(n):
        rows.append(a)
        cols.append(a)
        vals.append(1.0 - deg[a] / (2 * d))
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    if not _connected(mat):
        raise ErgodicityError("induced subgraph is disconnected")
    pi = np.full(n, 1.0 / n)
    return Kernel(space, mat, pi, reversible=True, half_lazy=True)


def _connected(mat: sp.csr_matrix) -> bool:
    n = mat.shape[0]
    ncomp, _ = sp.csgraph.connected_components(mat, directed=False)
    return ncomp == 1 and n > 0


def build_random_transposition(n: int, lazy: bool = True) -> Kernel:
    """Random-transposition walk on S_n (half-lazy unless lazy=False)."""
    if not 3 <= n <= 8:
        raise CapacityError("supported range is 3 <= n <= 8")
    labels = tuple(perms.all_permutations(n))
    space = StateSpace(labels)
    nn = len(labels)
    m = n * (n - 1) // 2
    off = 1.0 / (2 * m) if lazy else 1.0 / m
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    rows, cols, vals = [], [], []
    for idx, p in enumerate(labels):
        if lazy:
            rows.append(idx)
            cols.append(idx)
            vals.append(0.5)
        for a, b in pairs:
            q = perms.mul_transposition(p, a, b)
            rows.append(idx)
            cols.append(space.index[q])
            vals.append(off)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(nn, nn))
    pi = np.full(nn, 1.0 / nn)
    return Kernel(space, mat, pi, reversible=True, half_lazy=lazy)


def restrict_to_derangements(n: int) -> Kernel:
    """Metropolis restriction of the half-lazy random-transposition walk to
    fixed-point-free permutations."""
    if n <= 3:
        raise ErgodicityError("derangement walk needs n >= 4")
    if n > 8:
        raise CapacityError("supported range is 4 <= n <= 8")
    base = build_random_transposition(n, lazy=True)
    kept = perms.derangements(n)
    return metropolize_restriction(base, kept)


# ---------------------------------------------------------------------------
# spectral and distributional computations


@dataclass
class Spectrum:
    """All eigenvalues of a reversible kernel, sorted descending."""

    eigenvalues: np.ndarray
    vectors: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def beta(self, i: int) -> float:
        return float(self.eigenvalues[i])


def spectrum(kernel: Kernel, vectors: bool = False) -> Spectrum:
    """Dense eigensolve of the pi-symmetrised operator.

    Returns eigenvalues sorted descending; with vectors=True also the right
    eigenvectors in the original coordinates.
    """
    if not kernel.reversible:
        raise UnsupportedOperatorError("spectrum requires a reversible kernel")
    if kernel.n > DENSE_EIG_CAP:
        raise CapacityError(f"dense eigensolve capped at {DENSE_EIG_CAP} states")
    sqrt_pi = np.sqrt(kernel.pi)
    dense = kernel.matrix.toarray()
    sym = dense * (sqrt_pi[:, None] / sqrt_pi[None, :])
    sym = 0.5 * (sym + sym.T)
    if vectors:
        w, v = np.linalg.eigh(sym)
        order = np.argsort(w)[::-1]
        w = w[order]
        v = v[:, order] / sqrt_pi[:, None]
        return Spectrum(w, v)
    w = np.linalg.eigvalsh(sym)[::-1]
    return Spectrum(w)


def top_eigenvalues(kernel: Kernel, k: int = 6) -> np.ndarray:
    """Largest eigenvalues via restarted symmetric iteration (Lanczos),
    with an eigenpair residual certificate.  Intended for state counts
    above the dense cap."""
    if not kernel.reversible:
        raise UnsupportedOperatorError("requires a reversible kernel")
    sqrt_pi = np.sqrt(kernel.pi)
    d = sp.diags(sqrt_pi) @ kernel.matrix @ sp.diags(1.0 / sqrt_pi)
    d = (d + d.T) * 0.5
    w, v = sp.linalg.eigsh(d, k=k, which="LA")
    res = np.max(np.abs(d @ v - v * w), axis=0)
    if np.max(res) > EIG_RESIDUAL_TOL:
        raise ValueError("iterative eigensolve failed residual certification")
    return np.sort(w)[::-1]


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(p - q).sum())


def tv_curve(kernel: Kernel, start, t_max: int) -> np.ndarray:
    """Exact total-variation distances ||delta_start P^t - pi|| for
    t = 0 .. t_max, by repeated row-vector application."""
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    i = kernel.space.index[start]
    v = np.zeros(kernel.n)
    v[i] = 1.0
    out = np.empty(t_max + 1)
    out[0] = tv_distance(v, kernel.pi)
    for t in range(1, t_max + 1):
        v = v @ kernel.matrix
        out[t] = tv_distance(v, kernel.pi)
    return out
