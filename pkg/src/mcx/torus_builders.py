"""Explicit extension schemes for the torus walk with removed vertices.

Two removal patterns are built.  In the `holes` variant no two removed
vertices may share a unit square, which keeps every detour local: a
length-2 corner path for diagonal pairs and two length-4 loops (weight 1/2
each) for straight-through pairs, all of whose interior vertices share a
square with the generating hole and are therefore never removed.  The
`bottleneck` variant removes two wrap-around diagonals, each with a single
gap vertex, and routes every displaced pair along one lexicographically
minimal shortest path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .chain_core import Kernel, build_torus_srw, metropolize_restriction
from .comparison import DIRICHLET, ExtensionScheme, FlowPath, Measure
from .errors import ParameterError


@dataclass
class TorusInstance:
    side: int
    removed: tuple
    variant: str
    base: Kernel
    restricted: Kernel

    @property
    def n_total(self) -> int:
        return self.side * self.side


def _wrap(side, v):
    return (v[0] % side, v[1] % side)


def _neighbors(side, v):
    i, j = v
    return (((i + 1) % side, j), ((i - 1) % side, j),
            (i, (j + 1) % side), (i, (j - 1) % side))


def same_square(side: int, u, v) -> bool:
    """True when u and v are corners of a common unit square."""
    dx = (u[0] - v[0]) % side
    dy = (u[1] - v[1]) % side
    return (dx in (0, 1, side - 1)) and (dy in (0, 1, side - 1)) and not (dx == 0 and dy == 0)


def make_holes_instance(side: int, removed) -> TorusInstance:
    if side < 4:
        raise ParameterError("holes variant needs side >= 4")
    removed = tuple(_wrap(side, v) for v in removed)
    if len(set(removed)) != len(removed):
        raise ParameterError("removed vertices repeat")
    for a in range(len(removed)):
        for b in range(a + 1, len(removed)):
            if same_square(side, removed[a], removed[b]):
                raise ParameterError(
                    f"removed vertices {removed[a]} and {removed[b]} share a unit square")
    base = build_torus_srw(side)
    kept = [v for v in base.space.labels if v not in set(removed)]
    return TorusInstance(side, removed, "holes", base, metropolize_restriction(base, kept))


def bottleneck_removed_set(side: int) -> tuple:
    """Two diagonals offset by side/2, each missing its i=0 vertex so that
    exactly two passage vertices remain."""
    h = side // 2
    main = [(i, i) for i in range(1, side)]
    shifted = [(i, (i + h) % side) for i in range(1, side)]
    return tuple(main + shifted)


def make_bottleneck_instance(side: int) -> TorusInstance:
    if side % 2 != 0 or side < 6:
        raise ParameterError("bottleneck variant needs even side >= 6")
    removed = bottleneck_removed_set(side)
    base = build_torus_srw(side)
    kept = [v for v in base.space.labels if v not in set(removed)]
    return TorusInstance(side, removed, "bottleneck", base, metropolize_restriction(base, kept))


def _base_flows(instance: TorusInstance) -> dict:
    """Single-edge flows for every ordered kept edge."""
    Q = instance.restricted
    flows = {}
    qr, qc, _ = Q.edges()
    for a, b in zip(qr.tolist(), qc.tolist()):
        flows[(a, b)] = [FlowPath((a, b), 1.0, Fraction(1))]
    return flows


def _uniform_measures(instance: TorusInstance) -> dict:
    K = instance.base
    Q = instance.restricted
    measures = {}
    removed = set(instance.removed)
    for v in instance.removed:
        ids = np.array([Q.space.index[u] for u in _neighbors(instance.side, v)],
                       dtype=np.int64)
        measures[K.space.index[v]] = Measure(
            ids, np.full(4, 0.25), [Fraction(1, 4)] * 4)
    return measures


@dataclass
class TorusCaseRecord:
    """One routed pair: which hole generated it and which detour shape."""

    hole: tuple
    case: int          # 2 = corner pair, 3 = straight-through pair
    pair: tuple        # ordered (x, z) labels
    paths: list        # vertex-label paths


def holes_scheme(instance: TorusInstance):
    """Measures, flows, and per-case routing records for the holes variant.

    Returns (scheme, records).  Pairs reachable from several holes mix all
    generating path families with equal weight.
    """
    if instance.variant != "holes":
        raise ParameterError("expected a holes instance")
    side = instance.side
    K, Q = instance.base, instance.restricted
    qidx = Q.space.index
    removed = set(instance.removed)
    flows = _base_flows(instance)
    families = {}
    records = []
    for y in instance.removed:
        nbrs = _neighbors(side, y)
        for x in nbrs:
            for z in nbrs:
                if z == x:
                    continue
                u = ((y[0] - x[0]) % side, (y[1] - x[1]) % side)  # x + u = y
                paths = []
                if _wrap(side, (x[0] + 2 * u[0], x[1] + 2 * u[1])) == z:
                    # straight through the hole: two loops around it
                    for p in (((u[1]) % side, (-u[0]) % side),
                              ((-u[1]) % side, (u[0]) % side)):
                        verts = [x]
                        for step in (p, u, u, (-p[0] % side, -p[1] % side)):
                            verts.append(_wrap(side, (verts[-1][0] + step[0],
                                                      verts[-1][1] + step[1])))
                        paths.append((tuple(verts), Fraction(1, 2)))
                    case = 3
                else:
                    # corner pair: the one L-path that avoids the hole
                    v = ((z[0] - y[0]) % side, (z[1] - y[1]) % side)
                    mid = _wrap(side, (x[0] + v[0], x[1] + v[1]))
                    paths = [((x, mid, z), Fraction(1))]
                    case = 2
                for verts, _ in paths:
                    hit = [s for s in verts if s in removed]
                    if hit:
                        raise ParameterError(f"detour for {(x, z)} hits removed vertex {hit[0]}")
                records.append(TorusCaseRecord(y, case, (x, z), [p for p, _ in paths]))
                key = (qidx[x], qidx[z])
                families.setdefault(key, []).append(paths)
            families.setdefault((qidx[x], qidx[x]), []).append(
                [((x,), Fraction(1))])
    _merge_families(flows, families, Q)
    scheme = ExtensionScheme(Q.space, K.space, _uniform_measures(instance),
                             {}, flows, DIRICHLET)
    return scheme, records


def _merge_families(flows: dict, families: dict, Q: Kernel):
    for key, fams in families.items():
        share = Fraction(1, len(fams))
        acc = {}
        for fam in fams:
            for verts, w in fam:
                ids = tuple(Q.space.index[s] for s in verts)
                acc[ids] = acc.get(ids, Fraction(0)) + w * share
        flows[key] = [FlowPath(ids, float(w), w) for ids, w in sorted(acc.items())]


def _lex_shortest_path(Q: Kernel, src: int, dst: int) -> tuple:
    """Lexicographically smallest (by vertex labels) shortest path src->dst."""
    from collections import deque

    n = Q.n
    qr, qc, _ = Q.edges()
    adj = [[] for _ in range(n)]
    for a, b in zip(qr.tolist(), qc.tolist()):
        adj[a].append(b)
    dist = np.full(n, -1)
    dist[dst] = 0
    dq = deque([dst])
    while dq:
        v = dq.popleft()
        for w in adj[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                dq.append(w)
    if dist[src] < 0:
        raise ParameterError("restricted graph is disconnected")
    path = [src]
    cur = src
    while cur != dst:
        cands = [w for w in adj[cur] if dist[w] == dist[cur] - 1]
        cur = min(cands, key=lambda w: Q.space.labels[w])
        path.append(cur)
    return tuple(path)


def bottleneck_scheme(side: int):
    """Scheme for the double-diagonal removal; flows ride single minimal
    paths.  Returns (instance, scheme, max_path_length)."""
    instance = make_bottleneck_instance(side)
    K, Q = instance.base, instance.restricted
    qidx = Q.space.index
    flows = _base_flows(instance)
    longest = 1
    for y in instance.removed:
        nbrs = _neighbors(side, y)
        for x in nbrs:
            for z in nbrs:
                key = (qidx[x], qidx[z])
                if z == x:
                    flows.setdefault(key, [FlowPath((qidx[x],), 1.0, Fraction(1))])
                    continue
                if key in flows:
                    # shortest path depends only on the endpoints
                    continue
                path = _lex_shortest_path(Q, qidx[x], qidx[z])
                longest = max(longest, len(path) - 1)
                flows[key] = [FlowPath(path, 1.0, Fraction(1))]
    scheme = ExtensionScheme(Q.space, K.space, _uniform_measures(instance),
                             {}, flows, DIRICHLET)
    return instance, scheme, longest


def case_multiplicity_audit(instance: TorusInstance, records) -> dict:
    """Count, per oriented kept edge, how many routed paths of each detour
    shape traverse it.  The local construction promises at most 1 direct,
    2 corner, and 4 straight-through paths per edge."""
    counts = {}
    for rec in records:
        for verts in rec.paths:
            for u, w in zip(verts[:-1], verts[1:]):
                key = (u, w)
                c = counts.setdefault(key, {2: 0, 3: 0})
                c[rec.case] += 1
    return counts
