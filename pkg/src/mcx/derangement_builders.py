"""Measures, couplings, and flows comparing the transposition walk on S_n
with its Metropolis restriction to derangements.

For a non-derangement x with fixed points F = {f_1 < ... < f_m}, a random
derangement extending x is built by inserting the fixed points one at a
time: step t picks an anchor a_t uniformly outside the not-yet-inserted
fixed points and multiplies by (a_t, f_t), which splices f_t into the
cycle immediately before a_t.  Every reachable derangement arises from
exactly one anchor sequence, so the law is uniform on its support with
mass (n-m-1)!/(n-1)!, and the law does not depend on the insertion order.
The identity gets the uniform law on n-cycles instead.

Couplings between adjacent non-derangements share anchor variables: the
side with more fixed points inserts its extra points first, and the
common suffix drives both constructions.  Flows join coupled derangement
pairs along detours of length at most 4 whose interior states are again
derangements; pairs reachable from several constructions mix all their
path families with equal weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import permutations as perms
from .chain_core import Kernel, build_random_transposition, restrict_to_derangements
from .comparison import (
    DIRICHLET,
    Coupling,
    ExtensionScheme,
    FlowPath,
    Measure,
)
from .errors import CapacityError, ParameterError
from .permutations import Permutation

E = math.e


# ---------------------------------------------------------------------------
# insertion measures


def _insertion_leaves(start: tuple, order: tuple, n: int):
    """All (result, anchors) of inserting `order` into `start`.

    Anchor t is any letter outside the not-yet-inserted fixed points
    order[t:]; each leaf is reached exactly once.
    """
    out = []
    excl = [frozenset(order[t:]) for t in range(len(order))]

    def rec(t, cur, anchors):
        if t == len(order):
            out.append((cur, tuple(anchors)))
            return
        f = order[t]
        block = excl[t]
        for a in range(n):
            if a in block:
                continue
            anchors.append(a)
            rec(t + 1, perms.mul_transposition(cur, a, f), anchors)
            anchors.pop()

    rec(0, start, [])
    return out


@dataclass
class InsertionMeasure:
    """Uniform law on the derangements extending a base permutation."""

    base: tuple
    support: tuple
    weight: Fraction

    def as_dict(self) -> dict:
        return {s: self.weight for s in self.support}


def insertion_measure(x, n: int) -> InsertionMeasure:
    """Law P_x used to extend functions from derangements to all of S_n."""
    if not 4 <= n <= 8:
        raise CapacityError("supported range is 4 <= n <= 8")
    mapping = x.mapping if isinstance(x, Permutation) else tuple(x)
    if len(mapping) != n:
        raise ParameterError("permutation size disagrees with n")
    fixed = perms.fixed_points(mapping)
    if not fixed:
        return InsertionMeasure(mapping, (mapping,), Fraction(1))
    if len(fixed) == n:
        cyc = perms.full_cycles(n)
        return InsertionMeasure(mapping, cyc, Fraction(1, len(cyc)))
    leaves = _insertion_leaves(mapping, fixed, n)
    support = tuple(s for s, _ in leaves)
    assert len(set(support)) == len(support), "anchor sequences must be injective"
    m = len(fixed)
    w = Fraction(math.factorial(n - m - 1), math.factorial(n - 1))
    return InsertionMeasure(mapping, support, w)


@dataclass
class OrderIndifferenceReport:
    base: tuple
    n_orderings: int
    equal: bool
    counterexample: tuple | None = None


def order_indifference_check(x, n: int | None = None) -> OrderIndifferenceReport:
    """Exhaustively compare the insertion law across all insertion orders."""
    mapping = x.mapping if isinstance(x, Permutation) else tuple(x)
    n = len(mapping)
    fixed = perms.fixed_points(mapping)
    if not 1 <= len(fixed) <= n - 2:
        raise ParameterError("need 1 <= |Fix| <= n-2")
    reference = None
    ref_order = None
    count = 0
    for z in perms.all_permutations(len(fixed)):
        order = tuple(fixed[i] for i in z)
        leaves = _insertion_leaves(mapping, order, n)
        support = {}
        for s, _ in leaves:
            support[s] = support.get(s, 0) + 1
        count += 1
        if reference is None:
            reference = support
            ref_order = order
        elif support != reference:
            return OrderIndifferenceReport(mapping, count, False, (ref_order, order))
    return OrderIndifferenceReport(mapping, count, True)


def case4_weight_sum(n: int) -> Fraction:
    """Exact worst per-edge mass from equal-fixed-set couplings:
    sum_{j=1}^{n-2} (n/j) / (n-j)!."""
    return sum(
        (Fraction(n, j) / math.factorial(n - j) for j in range(1, n - 1)),
        Fraction(0),
    )


def case4_weight_sum_binomial(n: int) -> Fraction:
    """Same mass written as sum_j C(n,j) (j-1)!/(n-1)!; used as the
    independent cross-check of the closed sum."""
    return sum(
        (Fraction(math.comb(n, j) * math.factorial(j - 1), math.factorial(n - 1))
         for j in range(1, n - 1)),
        Fraction(0),
    )


# ---------------------------------------------------------------------------
# flow path templates


def _f1_map(state: tuple, shared: frozenset):
    """Block-head substitution: walk backwards through the run of shared
    inserted points immediately preceding a letter; identity off runs."""
    inv = perms.inverse(state)

    def f1(alpha: int) -> int:
        cur = alpha
        while inv[cur] in shared:
            cur = inv[cur]
        return cur

    return f1


def _apply_template(start: tuple, edges, target: tuple):
    """Multiply `start` along transposition edges; return the state path if
    all letters are distinct, interiors are derangements, no unordered edge
    repeats, and the walk ends at `target`."""
    path = [start]
    cur = start
    seen = set()
    for (u, v) in edges:
        if u == v:
            return None
        cur = perms.mul_transposition(cur, u, v)
        e = (min(path[-1], cur), max(path[-1], cur))
        if e in seen:
            return None
        seen.add(e)
        path.append(cur)
    if cur != target:
        return None
    for s in path[1:-1]:
        if not perms.is_derangement(s):
            return None
    return tuple(path)


def case2_family(sigma: tuple, tau: tuple, i: int, j: int, k: int,
                 shared: frozenset, n: int):
    """Paths from sigma to tau when tau rewires the insertion of one fixed
    point i from anchor j to anchor k.  A two-step detour works unless j
    and k sit in a bare 2-cycle, in which case length-4 detours through
    every spare letter h share the weight."""
    f1 = _f1_map(sigma, shared)
    fi, fj, fk = f1(i), f1(j), f1(k)
    for edges in (((fj, fk), (fj, fi)), ((fi, fk), (fk, fj))):
        path = _apply_template(sigma, edges, tau)
        if path is not None:
            return [(path, Fraction(1))]
    fam = []
    for h in range(n):
        if h in (i, j, k):
            continue
        fh = f1(h)
        path = _apply_template(sigma, ((fi, fh), (fj, fh), (fk, fh), (fi, fh)), tau)
        if path is not None:
            fam.append(path)
    if not fam:
        raise RuntimeError(f"no valid rewiring detour for pair {sigma} -> {tau}")
    w = Fraction(1, len(fam))
    return [(p, w) for p in fam]


def case3_family(inserted: tuple, neighbor: tuple, a: int, b: int,
                 pa: int, pb: int, shared: frozenset, same_cycle: bool):
    """Paths from `inserted` (two rewired insertions a->pa, b->pb) to
    `neighbor` (the state with a, b mutually swapped).  Distinct host
    cycles merge and re-split; a common host cycle splits at (a, b) first.
    The two symmetric detours share the weight."""
    f1 = _f1_map(inserted, shared)
    fa, fb, fpa, fpb = f1(a), f1(b), f1(pa), f1(pb)
    merge_split = (((fb, fpa), (fa, fpb), (fpb, fpa)),
                   ((fa, fpb), (fb, fpa), (fpa, fpb)))
    split_merge = (((fa, fb), (fpa, fb), (fa, fpb)),
                   ((fa, fb), (fpb, fa), (fb, fpa)))
    ordered = (merge_split, split_merge) if not same_cycle else (split_merge, merge_split)
    for templates in ordered:
        fam = []
        for edges in templates:
            path = _apply_template(inserted, edges, neighbor)
            if path is not None:
                fam.append(path)
        if fam:
            w = Fraction(1, len(fam))
            return [(p, w) for p in fam]
    raise RuntimeError(f"no valid double-rewiring detour for {inserted} -> {neighbor}")


def _reverse_family(family):
    return [(tuple(reversed(p)), w) for p, w in family]


# ---------------------------------------------------------------------------
# scheme construction


@dataclass
class DerangementComparison:
    """Everything the verification pipeline needs for one n."""

    n: int
    outer: Kernel          # transposition walk on S_n
    inner: Kernel          # restriction to derangements
    scheme: ExtensionScheme
    audit_mass: dict       # case -> {ordered inner pair -> float mass}
    coupling_meta: dict    # (big outer id, small outer id) -> case label
    max_flow_len: int


def derangement_scheme(n: int) -> ExtensionScheme:
    return build_derangement_comparison(n).scheme


def build_derangement_comparison(n: int) -> DerangementComparison:
    if n == 4:
        raise ParameterError(
            "the length-4 rewiring detour needs a spare non-fixed letter; n >= 5 required")
    if not 5 <= n <= 7:
        raise CapacityError("full scheme materialisation supports 5 <= n <= 7")
    outer = build_random_transposition(n, lazy=True)
    inner = restrict_to_derangements(n)
    oidx = outer.space.index
    iidx = inner.space.index
    ident = perms.identity(n)

    measures = {}
    support_ids = {}
    for o, lab in enumerate(outer.space.labels):
        if perms.is_derangement(lab):
            continue
        im = insertion_measure(lab, n)
        ids = np.array(sorted(iidx[s] for s in im.support), dtype=np.int64)
        support_ids[o] = ids
        measures[o] = Measure(ids, np.full(len(ids), float(im.weight)),
                              [im.weight] * len(ids))

    qr, qc, _ = inner.edges()
    q_edge_set = set(zip(qr.tolist(), qc.tolist()))
    flows = {}
    for a, b in q_edge_set:
        flows[(a, b)] = [FlowPath((a, b), 1.0, Fraction(1))]

    # mixture accumulators for pairs needing multi-step flows
    acc = {"t2": {}, "t3": {}}
    fam_count = {"t2": {}, "t3": {}}
    audit_mass = {c: {} for c in (1, 2, 3, 4, 5, 6)}
    diagonals = set()
    max_len = 1

    def add_family(kind, pair, family):
        nonlocal max_len
        slot = acc[kind].setdefault(pair, {})
        for path, w in family:
            ids = tuple(iidx[s] for s in path)
            slot[ids] = slot.get(ids, Fraction(0)) + w
            max_len = max(max_len, len(ids) - 1)
        fam_count[kind][pair] = fam_count[kind].get(pair, 0) + 1

    def add_mass(case, pair, mass):
        d = audit_mass[case]
        d[pair] = d.get(pair, 0.0) + mass

    # case 1: direct edges between derangements
    for pair in q_edge_set:
        add_mass(1, pair, 1.0)

    # cases 2 and 3: states adjacent to a hole with 1 or 2 fixed points
    for o, y in enumerate(outer.space.labels):
        fixed = perms.fixed_points(y)
        if len(fixed) == 1:
            i = fixed[0]
            nbrs = {j: perms.mul_transposition(y, i, j) for j in range(n) if j != i}
            w = 1.0 / (n - 1)
            for j, sig in nbrs.items():
                sid = iidx[sig]
                for k, tau in nbrs.items():
                    tid = iidx[tau]
                    pair = (sid, tid)
                    if k == j:
                        diagonals.add(pair)
                        continue
                    add_mass(2, pair, w)
                    if pair in q_edge_set:
                        continue
                    add_family("t2", pair, case2_family(sig, tau, i, j, k, frozenset(), n))
        elif len(fixed) == 2:
            a, b = fixed
            sig = perms.mul_transposition(y, a, b)
            sid = iidx[sig]
            cyc_of = {}
            for ci, cyc in enumerate(perms.cycles(y)):
                for s in cyc:
                    cyc_of[s] = ci
            w = 1.0 / ((n - 1) * (n - 2))
            for tau, anchors in _insertion_leaves(y, (a, b), n):
                tid = iidx[tau]
                pair = (sid, tid)
                if tid == sid:
                    diagonals.add(pair)
                    continue
                add_mass(3, pair, w)
                if pair in q_edge_set:
                    continue
                pa, pb = anchors
                fam = case3_family(tau, sig, a, b, pa, pb, frozenset(),
                                   pb not in (a, b) and cyc_of[pa] == cyc_of[pb])
                add_family("t2", pair, _reverse_family(fam))

    # cases 4-6: couplings between adjacent holes via shared anchors
    couplings = {}
    coupling_meta = {}
    tpairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    outer_states = [(o, lab) for o, lab in enumerate(outer.space.labels)
                    if not perms.is_derangement(lab)]
    for o, s in outer_states:
        fs = perms.fixed_points(s)
        for (u, v) in tpairs:
            r = perms.mul_transposition(s, u, v)
            if perms.is_derangement(r):
                continue
            ro = oidx[r]
            fr = perms.fixed_points(r)
            if len(fs) < len(fr) or (len(fs) == len(fr) and o > ro):
                continue  #処理 once, from the larger-fixed-set side
            if len(fs) == len(fr) and o == ro:
                continue
            if s == ident:
                ids = support_ids[o]
                couplings[(o, ro)] = Coupling(
                    ids.copy(), ids.copy(),
                    np.full(len(ids), 1.0 / math.factorial(n - 1)),
                    Fraction(1, math.factorial(n - 1)))
                coupling_meta[(o, ro)] = 6
                for did in ids.tolist():
                    diagonals.add((did, did))
                continue
            diff = tuple(sorted(set(fs) - set(fr)))
            sharedf = tuple(sorted(set(fs) & set(fr)))
            if len(fs) == len(fr):
                assert fs == fr, "equal-size fixed sets must coincide"
                case = 4
            else:
                case = 5 if len(diff) == 1 else 6
            order = diff + sharedf
            shared = frozenset(sharedf)
            m = len(order)
            base = Fraction(math.factorial(n - m - 1), math.factorial(n - 1))
            basef = float(base)
            a_rows, b_rows = [], []
            j_of_i = None
            if case == 5:
                j_of_i = r[diff[0]]  # r = s*(i,j) moves the extra fixed point i to j
            cyc_of = {}
            if case == 6:
                for ci, cyc in enumerate(perms.cycles(s)):
                    for t in cyc:
                        cyc_of[t] = ci
            for big_res, small_res, anchors in _leaves_shared(s, r, len(diff), order, n):
                bid = iidx[big_res]
                sid = iidx[small_res]
                a_rows.append(bid)
                b_rows.append(sid)
                if bid == sid:
                    diagonals.add((bid, bid))
                    continue
                add_mass(case, (bid, sid), basef)
                pair = (bid, sid)
                rpair = (sid, bid)
                if pair in q_edge_set:
                    continue
                if case == 4:
                    raise RuntimeError("equal-fixed-set coupling must give adjacent pairs")
                if case == 5:
                    i = diff[0]
                    fam = case2_family(small_res, big_res, i, j_of_i,
                                       anchors[0], shared, n)
                    add_family("t3", rpair, fam)
                    add_family("t3", pair, _reverse_family(fam))
                else:
                    c, d = diff
                    pc, pd = anchors[0], anchors[1]
                    fam = case3_family(big_res, small_res, c, d, pc, pd, shared,
                                       pd not in (c, d) and pd in cyc_of and pc in cyc_of
                                       and cyc_of[pc] == cyc_of[pd])
                    add_family("t3", pair, fam)
                    add_family("t3", rpair, _reverse_family(fam))
            couplings[(o, ro)] = Coupling(
                np.array(a_rows, dtype=np.int64), np.array(b_rows, dtype=np.int64),
                np.full(len(a_rows), basef), base)
            coupling_meta[(o, ro)] = case

    # finalise mixtures: T2-generated pairs keep only their T2 families
    for pair in diagonals:
        if pair not in flows:
            flows[pair] = [FlowPath((pair[0],), 1.0, Fraction(1))]
    for kind in ("t2", "t3"):
        for pair, paths in acc[kind].items():
            if kind == "t3" and pair in acc["t2"]:
                continue
            if pair in flows:
                continue
            g = fam_count[kind][pair]
            flows[pair] = [FlowPath(p, float(w / g), w / g)
                           for p, w in sorted(paths.items())]

    scheme = ExtensionScheme(inner.space, outer.space, measures, couplings,
                             flows, DIRICHLET)
    return DerangementComparison(n, outer, inner, scheme, audit_mass,
                                 coupling_meta, max_len)


def _leaves_shared(big: tuple, small: tuple, n_extra: int, order: tuple, n: int):
    """Anchor-sharing leaves: the big side inserts every point of `order`,
    the small side only the shared suffix order[n_extra:]."""
    out = []
    excl = [frozenset(order[t:]) for t in range(len(order))]

    def rec(t, cur_big, cur_small, anchors):
        if t == len(order):
            out.append((cur_big, cur_small, tuple(anchors)))
            return
        f = order[t]
        block = excl[t]
        for a in range(n):
            if a in block:
                continue
            anchors.append(a)
            rec(t + 1, perms.mul_transposition(cur_big, a, f),
                cur_small if t < n_extra else perms.mul_transposition(cur_small, a, f),
                anchors)
            anchors.pop()

    rec(0, big, small, [])
    return out


# ---------------------------------------------------------------------------
# audits and verification


@dataclass
class WeightAudit:
    n: int
    case_loads: dict          # case -> worst per-edge mass (path-weight units)
    case_bounds: dict         # case -> asserted bound (None when unasserted)
    w_sum: Fraction           # exact equal-fixed-set mass sum
    w_sum_cross: Fraction     # binomial form of the same sum
    ok: bool


def weight_audit(n: int, bundle: DerangementComparison) -> WeightAudit:
    """Per-edge, per-case congestion mass in plain path-weight units
    (instance mass times path weight per traversed edge)."""
    if bundle.n != n:
        raise ParameterError("bundle was built for a different n")
    loads = {}
    flows = bundle.scheme.flows
    for case, masses in bundle.audit_mass.items():
        per_edge = {}
        for pair, mass in masses.items():
            for fp in flows[pair]:
                for u, v in zip(fp.path[:-1], fp.path[1:]):
                    key = (u, v)
                    per_edge[key] = per_edge.get(key, 0.0) + mass * fp.weight
        loads[case] = max(per_edge.values()) if per_edge else 0.0
    w_sum = case4_weight_sum(n)
    w_cross = case4_weight_sum_binomial(n)
    bounds = {
        1: 1.0,
        2: 6.0 * (n - 2) / (n - 3),
        3: 1.0 + 3.0 * n * (n + 1) / ((n - 1) * (n - 2)),
        4: float(w_sum),
        5: None,
        6: None,
    }
    tol = 1e-9
    ok = (w_sum == w_cross
          and abs(loads[1] - 1.0) < 1e-12
          and all(loads[c] <= bounds[c] + tol for c in (2, 3, 4)))
    return WeightAudit(n, loads, bounds, w_sum, w_cross, ok)


def case4_relaxation_holds(n: int) -> bool:
    """For n with n^2 <= (n/2)!, the exact mass sum is at most 1 + 2(e-1)."""
    if math.factorial(n // 2) < n * n:
        raise ParameterError(f"relaxation is only claimed once n^2 <= (n/2)!; n={n} is outside")
    return float(case4_weight_sum(n)) <= 1.0 + 2.0 * (E - 1.0)


def exact_marginal_check(bundle: DerangementComparison) -> bool:
    """Rational-exact coupling marginals via integer row counting.

    Every coupling row carries the constant mass (n-m-1)!/(n-1)! of the
    larger fixed set, so the left marginal must hit each support state of
    the big side exactly once and the right marginal each small-side state
    exactly (count ratio) times.
    """
    n = bundle.n
    scheme = bundle.scheme
    for (obig, osmall), c in scheme.couplings.items():
        mb = scheme.measures[obig]
        ms = scheme.measures[osmall]
        if c.frac_base is None or c.frac_base != mb.fracs[0]:
            return False
        ratio = ms.fracs[0] / c.frac_base
        if ratio.denominator != 1:
            return False
        counts_a = np.bincount(c.a_ids, minlength=len(scheme.inner))
        counts_b = np.bincount(c.b_ids, minlength=len(scheme.inner))
        want_a = np.zeros(len(scheme.inner), dtype=int)
        want_a[mb.ids] = 1
        want_b = np.zeros(len(scheme.inner), dtype=int)
        want_b[ms.ids] = int(ratio)
        if not (np.array_equal(counts_a, want_a) and np.array_equal(counts_b, want_b)):
            return False
    return True
