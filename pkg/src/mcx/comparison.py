"""Extension schemes and congestion constants for chains on nested spaces.

An extension scheme connects a chain K on an outer space to a chain Q on an
inner subset.  It consists of a probability measure P_x on the inner space
for every outer state (the point mass for inner states), a coupling P_{x,y}
of P_x and P_y for every K-edge with both ends outside, and a flow: for
every ordered inner pair that carries mass, a convex combination of paths
along Q-edges.

The congestion constant A is the worst per-edge load

    A = sup_{Q(q,r)>0} [ T1 + 2 T2 + T3 ](q,r) / (Q(q,r) nu(q))

    T1 = sum_{paths through (q,r)} F k K(i,o) mu(i)          (inner K-edges)
    T2 = sum_{paths} F k sum_{y outside} P_y[o] K(i,y) mu(i) (boundary)
    T3 = sum_{paths} F k sum_{x,y outside} P_xy[i,o] K(x,y) mu(x)

and certifies E_K(fhat, fhat) <= A * E_Q(f, f) for the induced linear
extension fhat.  Loads are accumulated on ordered edges and the supremum
runs over both orientations, which dominates the symmetrised tight
constant.  A sum-form variant with odd paths (edge repeats up to 2) bounds
the analogous <(I+P)f, f> forms and hence the smallest eigenvalue.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .chain_core import Kernel, StateSpace, Spectrum
from .errors import (
    DimensionError,
    IncompleteFlowError,
    ModeViolationError,
    RangeError,
    SchemeValidationError,
    StructureMismatchError,
)
from .functionals import f_sum_form, dirichlet

DIRICHLET = "dirichlet"
F_FORM = "f_form"


@dataclass
class Measure:
    """Weights on inner state ids; optional exact rational values."""

    ids: np.ndarray
    weights: np.ndarray
    fracs: list | None = None

    def total(self):
        if self.fracs is not None:
            return sum(self.fracs, Fraction(0))
        return float(self.weights.sum())


@dataclass
class Coupling:
    """Joint weights on inner pairs for one ordered outer edge (x, y).

    Row i puts mass weights[i] on the inner pair (a_ids[i], b_ids[i]); the
    left marginal must be P_x, the right marginal P_y.  The reversed edge
    (y, x) implicitly uses the transposed table.
    """

    a_ids: np.ndarray
    b_ids: np.ndarray
    weights: np.ndarray
    frac_base: Fraction | None = None  # exact per-row mass when uniform


@dataclass
class FlowPath:
    path: tuple
    weight: float
    frac: Fraction | None = None

    @property
    def k(self) -> int:
        return len(self.path) - 1


@dataclass
class ExtensionScheme:
    inner: StateSpace
    outer: StateSpace
    measures: dict        # outer id (outside states) -> Measure on inner ids
    couplings: dict       # (outer id, outer id) -> Coupling
    flows: dict           # (inner id, inner id) -> list[FlowPath]
    mode: str = DIRICHLET

    def __post_init__(self):
        missing = [lab for lab in self.inner.labels if lab not in self.outer.index]
        if missing:
            raise DimensionError(f"inner label {missing[0]!r} not in outer space")
        self.inner_to_outer = np.array(
            [self.outer.index[lab] for lab in self.inner.labels], dtype=np.int64)
        self.outer_is_inner = np.zeros(len(self.outer), dtype=bool)
        self.outer_is_inner[self.inner_to_outer] = True
        self.inner_of_outer = np.full(len(self.outer), -1, dtype=np.int64)
        self.inner_of_outer[self.inner_to_outer] = np.arange(len(self.inner))
        self._matrix = None
        self._compiled = None

    # -- extensions --------------------------------------------------------

    def extension_matrix(self) -> sp.csr_matrix:
        """Linear map f -> fhat as an (outer x inner) sparse matrix."""
        if self._matrix is None:
            rows, cols, vals = [], [], []
            for o in range(len(self.outer)):
                if self.outer_is_inner[o]:
                    rows.append(o)
                    cols.append(int(self.inner_of_outer[o]))
                    vals.append(1.0)
                else:
                    m = self.measures[o]
                    rows.extend([o] * len(m.ids))
                    cols.extend(int(i) for i in m.ids)
                    vals.extend(float(w) for w in m.weights)
            self._matrix = sp.csr_matrix(
                (vals, (rows, cols)), shape=(len(self.outer), len(self.inner)))
        return self._matrix

    def measure_of(self, o: int):
        """(ids, weights) of P_o, treating inner states as point masses."""
        if self.outer_is_inner[o]:
            return (np.array([self.inner_of_outer[o]], dtype=np.int64),
                    np.array([1.0]))
        m = self.measures[o]
        return m.ids, m.weights

    def coupling_rows(self, ox: int, oy: int):
        """Rows (a, b, w) of P_{ox,oy}, transposing a stored reverse edge."""
        if (ox, oy) in self.couplings:
            c = self.couplings[(ox, oy)]
            return c.a_ids, c.b_ids, c.weights
        if (oy, ox) in self.couplings:
            c = self.couplings[(oy, ox)]
            return c.b_ids, c.a_ids, c.weights
        return None


def extend(f, scheme: ExtensionScheme) -> np.ndarray:
    vals = np.asarray(f, float)
    if vals.shape != (len(scheme.inner),):
        raise DimensionError("function does not live on the inner space")
    return scheme.extension_matrix() @ vals


# ---------------------------------------------------------------------------
# validation


@dataclass
class Violation:
    kind: str
    witness: object
    detail: str

    def describe(self) -> str:
        return f"{self.kind} at {self.witness}: {self.detail}"


@dataclass
class ValidationReport:
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self):
        if self.violations:
            raise SchemeValidationError(self.violations)


def required_flow_pairs(scheme: ExtensionScheme, K: Kernel, Q: Kernel) -> set:
    """Ordered inner pairs that must carry a flow: inner K-edges, boundary
    pairs reached through some P_y, and coupling-support pairs.  Diagonal
    pairs are included (they take the empty path)."""
    need = set()
    kr, kc, _ = K.edges()
    is_in = scheme.outer_is_inner
    in_of = scheme.inner_of_outer
    for x, y in zip(kr, kc):
        xi, yi = is_in[x], is_in[y]
        if xi and yi:
            need.add((int(in_of[x]), int(in_of[y])))
        elif xi and not yi:
            a = int(in_of[x])
            ids, w = scheme.measure_of(int(y))
            for b, wb in zip(ids, w):
                if wb > 0:
                    need.add((a, int(b)))
        elif not xi and not yi:
            rows = scheme.coupling_rows(int(x), int(y))
            if rows is None:
                continue  # reported separately as a missing coupling
            aa, bb, ww = rows
            for a, b, w in zip(aa, bb, ww):
                if w > 0:
                    need.add((int(a), int(b)))
    return need


def validate_scheme(scheme: ExtensionScheme, K: Kernel, Q: Kernel,
                    tol: float = 1e-12) -> ValidationReport:
    """Check every structural invariant; one violation record per defect."""
    v = []
    inner, outer = scheme.inner, scheme.outer
    if K.space is not outer and K.space.labels != outer.labels:
        v.append(Violation("space-mismatch", None, "K does not live on the outer space"))
    if Q.space is not inner and Q.space.labels != inner.labels:
        v.append(Violation("space-mismatch", None, "Q does not live on the inner space"))
    if v:
        return ValidationReport(v)

    # measures: point mass inside, probabilities outside
    for o in range(len(outer)):
        if scheme.outer_is_inner[o]:
            if o in scheme.measures:
                m = scheme.measures[o]
                if not (len(m.ids) == 1 and m.ids[0] == scheme.inner_of_outer[o]
                        and abs(float(m.weights[0]) - 1.0) <= tol):
                    v.append(Violation("measure-not-delta", outer.labels[o],
                                       "inner state must carry its point mass"))
        else:
            if o not in scheme.measures:
                v.append(Violation("measure-missing", outer.labels[o], "no measure"))
                continue
            m = scheme.measures[o]
            if np.any(m.weights < -tol):
                v.append(Violation("measure-negative", outer.labels[o], "negative weight"))
            total = m.total()
            if (m.fracs is not None and total != 1) or \
               (m.fracs is None and abs(float(total) - 1.0) > tol):
                v.append(Violation("measure-mass", outer.labels[o],
                                   f"total mass {float(total)!r} != 1"))

    # couplings: on outer-outer K-edges, exact marginals
    kr, kc, _ = K.edges()
    outer_edges = set()
    for x, y in zip(kr, kc):
        if not scheme.outer_is_inner[x] and not scheme.outer_is_inner[y]:
            outer_edges.add((int(x), int(y)))
    covered = set()
    for (ox, oy), c in scheme.couplings.items():
        if (ox, oy) not in outer_edges:
            v.append(Violation("coupling-off-edge", (outer.labels[ox], outer.labels[oy]),
                               "coupling on a pair that is not an outer K-edge"))
            continue
        covered.add((ox, oy))
        covered.add((oy, ox))
        for side, ids, o in (("left", c.a_ids, ox), ("right", c.b_ids, oy)):
            got = {}
            for s, w in zip(ids, c.weights):
                got[int(s)] = got.get(int(s), 0.0) + float(w)
            mids, mw = scheme.measure_of(o)
            want = {int(s): float(w) for s, w in zip(mids, mw)}
            keys = set(got) | set(want)
            bad = [s for s in keys if abs(got.get(s, 0.0) - want.get(s, 0.0)) > tol]
            if bad:
                s = bad[0]
                v.append(Violation(
                    "coupling-marginal", (outer.labels[ox], outer.labels[oy]),
                    f"{side} marginal at {inner.labels[s]!r}: defect "
                    f"{got.get(s, 0.0) - want.get(s, 0.0):.3e}"))
    for (ox, oy) in outer_edges:
        if (ox, oy) not in covered:
            v.append(Violation("coupling-missing", (outer.labels[ox], outer.labels[oy]),
                               "outer K-edge has no coupling"))

    # flows: existence exactly on the required pairs, unit mass, Q-edge steps
    need = required_flow_pairs(scheme, K, Q)
    have = set(scheme.flows.keys())
    for pair in sorted(need - have):
        v.append(Violation("flow-missing",
                           (inner.labels[pair[0]], inner.labels[pair[1]]),
                           "pair carries mass but has no flow"))
    for pair in sorted(have - need):
        v.append(Violation("flow-extra",
                           (inner.labels[pair[0]], inner.labels[pair[1]]),
                           "flow on a pair that carries no mass"))

    qr, qc, _ = Q.edges()
    q_edges = set(zip(qr.tolist(), qc.tolist()))
    for (a, b), paths in scheme.flows.items():
        lab = (inner.labels[a], inner.labels[b])
        total = Fraction(0) if all(p.frac is not None for p in paths) else 0.0
        for p in paths:
            total = total + (p.frac if isinstance(total, Fraction) else p.weight)
            if p.weight < -tol:
                v.append(Violation("flow-negative", lab, "negative path weight"))
            if p.path[0] != a or p.path[-1] != b:
                v.append(Violation("flow-endpoints", lab, f"path {p.path} has wrong endpoints"))
            if a == b:
                if p.k != 0:
                    v.append(Violation("flow-diagonal", lab, "diagonal pair must use the empty path"))
                continue
            if p.k == 0:
                v.append(Violation("flow-empty", lab, "off-diagonal pair with empty path"))
                continue
            steps = list(zip(p.path[:-1], p.path[1:]))
            for (u, w) in steps:
                if (u, w) not in q_edges:
                    v.append(Violation("flow-step", lab,
                                       f"step ({inner.labels[u]!r}, {inner.labels[w]!r}) is not a Q-edge"))
                    break
            und = [frozenset(s) for s in steps]
            if scheme.mode == DIRICHLET:
                if len(set(und)) != len(und):
                    v.append(Violation("flow-repeated-edge", lab, "repeated edge in difference mode"))
            else:
                if p.k % 2 == 0:
                    v.append(Violation("flow-even-path", lab, "sum-form flow path of even length"))
                for e in set(und):
                    if und.count(e) > 2:
                        v.append(Violation("flow-traversal", lab, "edge traversed more than twice"))
        exact = isinstance(total, Fraction)
        if (exact and total != 1) or (not exact and abs(float(total) - 1.0) > 1e-9):
            v.append(Violation("flow-mass", lab, f"path weights sum to {float(total)!r}"))
    return ValidationReport(v)


# ---------------------------------------------------------------------------
# congestion


@dataclass
class ComparisonReport:
    a_const: float
    c1: float
    mode: str
    worst_edge: tuple
    worst_split: tuple
    loads: np.ndarray
    edge_list: list

    def to_json(self) -> str:
        return json.dumps({
            "a_const": self.a_const,
            "c1": self.c1,
            "mode": self.mode,
            "worst_edge": [str(self.worst_edge[0]), str(self.worst_edge[1])],
            "worst_split": list(self.worst_split),
        }, sort_keys=True)


def _compile_flows(scheme: ExtensionScheme, Q: Kernel):
    """Per pair: (slot ids, F*k per traversal) against ordered Q-edges."""
    if scheme._compiled is not None:
        return scheme._compiled
    qr, qc, _ = Q.edges()
    slot = {(int(u), int(w)): i for i, (u, w) in enumerate(zip(qr, qc))}
    compiled = {}
    for pair, paths in scheme.flows.items():
        ids, vals = [], []
        for p in paths:
            if p.k == 0:
                continue
            fk = p.weight * p.k
            for u, w in zip(p.path[:-1], p.path[1:]):
                s = slot.get((u, w))
                if s is None:
                    raise IncompleteFlowError(
                        f"flow step off the Q-edge set at pair {pair}")
                ids.append(s)
                vals.append(fk)
        compiled[pair] = (np.array(ids, dtype=np.int64), np.array(vals))
    scheme._compiled = (slot, compiled)
    return scheme._compiled


def _pair_weights(scheme: ExtensionScheme, K: Kernel):
    """Aggregate T1/T2/T3 masses per ordered inner pair."""
    w1, w2, w3 = {}, {}, {}
    kr, kc, kv = K.edges()
    mu = K.pi
    is_in = scheme.outer_is_inner
    in_of = scheme.inner_of_outer
    for x, y, val in zip(kr, kc, kv):
        if is_in[x] and is_in[y]:
            w1[(int(in_of[x]), int(in_of[y]))] = val * mu[x]
        elif is_in[x] and not is_in[y]:
            a = int(in_of[x])
            km = val * mu[x]
            ids, wts = scheme.measure_of(int(y))
            for b, pw in zip(ids.tolist(), wts.tolist()):
                if pw > 0:
                    key = (a, int(b))
                    w2[key] = w2.get(key, 0.0) + pw * km
        elif not is_in[x] and not is_in[y]:
            if (int(x), int(y)) not in scheme.couplings:
                continue  # handled when iterating the stored orientation
            c = scheme.couplings[(int(x), int(y))]
            km_f = val * mu[x]
            km_r = float(K.matrix[y, x]) * mu[y]
            aa = c.a_ids.tolist()
            bb = c.b_ids.tolist()
            ww = c.weights.tolist()
            for a, b, w in zip(aa, bb, ww):
                if w <= 0:
                    continue
                k1 = (a, b)
                w3[k1] = w3.get(k1, 0.0) + w * km_f
                k2 = (b, a)
                w3[k2] = w3.get(k2, 0.0) + w * km_r
    return w1, w2, w3


def _accumulate(compiled, weights, n_slots):
    acc = np.zeros(n_slots)
    ids_chunks, val_chunks = [], []
    for pair, w in weights.items():
        if pair[0] == pair[1]:
            continue
        entry = compiled.get(pair)
        if entry is None:
            raise IncompleteFlowError(f"no flow for loaded pair {pair}")
        ids, fk = entry
        if len(ids):
            ids_chunks.append(ids)
            val_chunks.append(fk * w)
    if ids_chunks:
        np.add.at(acc, np.concatenate(ids_chunks), np.concatenate(val_chunks))
    return acc


def c1_constant(scheme: ExtensionScheme, K: Kernel, Q: Kernel) -> float:
    return float(np.max(Q.pi / K.pi[scheme.inner_to_outer]))


def congestion_general(scheme: ExtensionScheme, K: Kernel, Q: Kernel) -> ComparisonReport:
    """Worst per-edge load of the three-term congestion formula."""
    if scheme.mode != DIRICHLET:
        raise ModeViolationError("difference-form congestion needs a dirichlet-mode scheme")
    slot, compiled = _compile_flows(scheme, Q)
    n_slots = len(slot)
    w1, w2, w3 = _pair_weights(scheme, K)
    t1 = _accumulate(compiled, w1, n_slots)
    t2 = _accumulate(compiled, w2, n_slots)
    t3 = _accumulate(compiled, w3, n_slots)
    qr, qc, qv = Q.edges()
    qnu = qv * Q.pi[qr]
    loads = (t1 + 2.0 * t2 + t3) / qnu
    best = int(np.argmax(loads))
    split = (t1[best] / qnu[best], 2.0 * t2[best] / qnu[best], t3[best] / qnu[best])
    edge_list = list(zip(qr.tolist(), qc.tolist()))
    worst = (Q.space.labels[qr[best]], Q.space.labels[qc[best]])
    return ComparisonReport(float(loads[best]), c1_constant(scheme, K, Q),
                            DIRICHLET, worst, split, loads, edge_list)


def _check_metropolized_pair(scheme: ExtensionScheme, K: Kernel, Q: Kernel):
    """K must be a half-lazy SRW on a regular graph and Q its Metropolis
    restriction to the inner labels; returns (d, n_outer, n_inner)."""
    kr, kc, kv = K.edges()
    if len(kv) == 0 or np.max(np.abs(kv - kv[0])) > 1e-12:
        raise StructureMismatchError("outer walk is not edge-uniform")
    if np.max(np.abs(K.matrix.diagonal() - 0.5)) > 1e-12:
        raise StructureMismatchError("outer walk is not half-lazy")
    degs = np.bincount(kr, minlength=K.n)
    if degs.min() != degs.max():
        raise StructureMismatchError("outer graph is not regular")
    d = int(degs[0])
    if abs(kv[0] - 1.0 / (2 * d)) > 1e-12:
        raise StructureMismatchError("outer edge mass is not 1/(2d)")
    if np.max(np.abs(K.pi - 1.0 / K.n)) > 1e-12:
        raise StructureMismatchError("outer stationary law is not uniform")
    qr, qc, qv = Q.edges()
    if len(qv) == 0 or np.max(np.abs(qv - 1.0 / (2 * d))) > 1e-12:
        raise StructureMismatchError("inner edge mass is not 1/(2d)")
    if np.max(np.abs(Q.pi - 1.0 / Q.n)) > 1e-12:
        raise StructureMismatchError("inner stationary law is not uniform")
    return d, K.n, Q.n


def congestion_srw(scheme: ExtensionScheme, K: Kernel, Q: Kernel) -> ComparisonReport:
    """Specialised congestion for a Metropolis restriction of an SRW.

    With uniform laws and edge mass 1/(2d) on both levels every ratio
    K(.,.)mu / (Q(.,.)nu) collapses to |inner|/|outer|, so the load is
    that prefactor times (sum Fk + 2 sum Fk P + sum Fk P_xy) in plain
    path-counting units.
    """
    if scheme.mode != DIRICHLET:
        raise ModeViolationError("difference-form congestion needs a dirichlet-mode scheme")
    d, n_outer, n_inner = _check_metropolized_pair(scheme, K, Q)
    slot, compiled = _compile_flows(scheme, Q)
    n_slots = len(slot)

    u1, u2, u3 = {}, {}, {}
    kr, kc, _ = K.edges()
    is_in = scheme.outer_is_inner
    in_of = scheme.inner_of_outer
    for x, y in zip(kr, kc):
        if is_in[x] and is_in[y]:
            u1[(int(in_of[x]), int(in_of[y]))] = 1.0
        elif is_in[x] and not is_in[y]:
            a = int(in_of[x])
            ids, wts = scheme.measure_of(int(y))
            for b, pw in zip(ids.tolist(), wts.tolist()):
                if pw > 0:
                    key = (a, int(b))
                    u2[key] = u2.get(key, 0.0) + pw
        elif not is_in[x] and not is_in[y]:
            if (int(x), int(y)) not in scheme.couplings:
                continue
            c = scheme.couplings[(int(x), int(y))]
            for a, b, w in zip(c.a_ids.tolist(), c.b_ids.tolist(), c.weights.tolist()):
                if w <= 0:
                    continue
                u3[(a, b)] = u3.get(k := (a, b), 0.0) + w
                u3[(b, a)] = u3.get((b, a), 0.0) + w
    t1 = _accumulate(compiled, u1, n_slots)
    t2 = _accumulate(compiled, u2, n_slots)
    t3 = _accumulate(compiled, u3, n_slots)
    ratio = n_inner / n_outer
    loads = ratio * (t1 + 2.0 * t2 + t3)
    qr, qc, _ = Q.edges()
    best = int(np.argmax(loads))
    split = (ratio * t1[best], ratio * 2.0 * t2[best], ratio * t3[best])
    worst = (Q.space.labels[qr[best]], Q.space.labels[qc[best]])
    return ComparisonReport(float(loads[best]), c1_constant(scheme, K, Q),
                            DIRICHLET, worst, split, loads,
                            list(zip(qr.tolist(), qc.tolist())))


def f_form(f, kernel: Kernel) -> float:
    """Sum form <(I+P)f, f>_pi; see functionals.f_sum_form."""
    return f_sum_form(f, kernel)


def congestion_fform(scheme: ExtensionScheme, K: Kernel, Q: Kernel) -> ComparisonReport:
    """Congestion for the sum form; paths must be odd with traversal <= 2.

    Traversal counts enter automatically because loads accumulate per path
    step, so an edge used twice by one path receives its F*k twice.
    """
    if scheme.mode != F_FORM:
        raise ModeViolationError("sum-form congestion needs an f_form-mode scheme")
    for (a, b), paths in scheme.flows.items():
        for p in paths:
            if a != b and p.k % 2 == 0:
                raise ModeViolationError(f"even-length flow path at pair {(a, b)}")
    slot, compiled = _compile_flows(scheme, Q)
    n_slots = len(slot)
    w1, w2, w3 = _pair_weights(scheme, K)
    t1 = _accumulate(compiled, w1, n_slots)
    t2 = _accumulate(compiled, w2, n_slots)
    t3 = _accumulate(compiled, w3, n_slots)
    qr, qc, qv = Q.edges()
    qnu = qv * Q.pi[qr]
    loads = (t1 + 2.0 * t2 + t3) / qnu
    best = int(np.argmax(loads))
    split = (t1[best] / qnu[best], 2.0 * t2[best] / qnu[best], t3[best] / qnu[best])
    worst = (Q.space.labels[qr[best]], Q.space.labels[qc[best]])
    return ComparisonReport(float(loads[best]), c1_constant(scheme, K, Q),
                            F_FORM, worst, split, loads,
                            list(zip(qr.tolist(), qc.tolist())))


# ---------------------------------------------------------------------------
# spectrum transfer and master-inequality checks


@dataclass
class SpectrumTransfer:
    bounds: np.ndarray        # lower bounds on 1 - beta_i(Q), i < |inner|
    alpha_factor: float       # alpha(Q) >= alpha(K) * alpha_factor

    def gap_bound(self) -> float:
        return float(self.bounds[1])


def spectrum_transfer(report: ComparisonReport, k_spec: Spectrum, c1: float,
                      n_inner: int) -> SpectrumTransfer:
    """Per-index bounds 1-beta_i(Q) >= (1-beta_i(K)) / (c1 * A)."""
    if report.mode != DIRICHLET:
        raise ModeViolationError("spectrum transfer needs a difference-form constant")
    if n_inner > len(k_spec):
        raise RangeError("inner space larger than the outer spectrum")
    factor = 1.0 / (c1 * report.a_const)
    bounds = factor * (1.0 - k_spec.eigenvalues[:n_inner])
    return SpectrumTransfer(bounds, factor)


def master_inequality_slack(scheme: ExtensionScheme, K: Kernel, Q: Kernel,
                            a_const: float, n_samples: int = 2000,
                            seed: int = 0, mode: str = DIRICHLET) -> float:
    """Smallest slack of A*form_Q(f) - form_K(fhat) over random f plus all
    coordinate indicators, normalised by max(1, form_Q)."""
    rng = np.random.default_rng(seed)
    n = len(scheme.inner)
    fs = rng.standard_normal((n_samples, n))
    fs = np.vstack([fs, np.eye(n)])
    m = scheme.extension_matrix()
    fhats = fs @ m.T.toarray() if n <= 4096 else (m @ fs.T).T
    qr, qc, qv = Q.edges()
    kr, kc, kv = K.edges()
    qw = qv * Q.pi[qr]
    kw = kv * K.pi[kr]
    if mode == DIRICHLET:
        eq = 0.5 * ((fs[:, qr] - fs[:, qc]) ** 2 @ qw)
        ek = 0.5 * ((fhats[:, kr] - fhats[:, kc]) ** 2 @ kw)
    else:
        eq = 0.5 * ((fs[:, qr] + fs[:, qc]) ** 2 @ qw) \
            + (fs * fs) @ (Q.matrix.diagonal() * Q.pi) * 2.0
        ek = 0.5 * ((fhats[:, kr] + fhats[:, kc]) ** 2 @ kw) \
            + (fhats * fhats) @ (K.matrix.diagonal() * K.pi) * 2.0
    slack = (a_const * eq - ek) / np.maximum(1.0, eq)
    return float(np.min(slack))


# ---------------------------------------------------------------------------
# serialization


def _lab(label) -> str:
    if isinstance(label, tuple):
        return ",".join(str(c) for c in label)
    return str(label)


def scheme_to_json(scheme: ExtensionScheme) -> str:
    inner, outer = scheme.inner, scheme.outer
    measures = {}
    for o, m in scheme.measures.items():
        measures[_lab(outer.labels[o])] = {
            _lab(inner.labels[int(i)]): float(w) for i, w in zip(m.ids, m.weights)}
    couplings = {}
    for (ox, oy), c in scheme.couplings.items():
        key = f"{_lab(outer.labels[ox])}|{_lab(outer.labels[oy])}"
        couplings[key] = {
            f"{_lab(inner.labels[int(a)])}|{_lab(inner.labels[int(b)])}": float(w)
            for a, b, w in zip(c.a_ids, c.b_ids, c.weights)}
    flows = {}
    for (a, b), paths in scheme.flows.items():
        key = f"{_lab(inner.labels[a])}|{_lab(inner.labels[b])}"
        flows[key] = [{"path": [_lab(inner.labels[s]) for s in p.path],
                       "w": float(p.weight)} for p in paths]
    return json.dumps({"mode": scheme.mode, "inner": [_lab(l) for l in inner.labels],
                       "outer": [_lab(l) for l in outer.labels],
                       "measures": measures, "couplings": couplings,
                       "flows": flows}, sort_keys=True)
