"""Circuit connectivity graphs and layout enumeration by subgraph monomorphism."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .circuit import Circuit, Instruction
from .device import DeviceModel


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class ConnectivityGraph:
    n: int
    edges: frozenset

    def __post_init__(self):
        norm = set()
        for a, b in self.edges:
            if a == b:
                raise LayoutError("self-loop in connectivity graph")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise LayoutError(f"edge {(a, b)} outside {self.n} vertices")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(norm))

    def adjacency(self) -> list[set[int]]:
        adj = [set() for _ in range(self.n)]
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj


@dataclass(frozen=True)
class Layout:
    mapping: tuple[int, ...]
    device_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mapping", tuple(int(p) for p in self.mapping))
        if len(set(self.mapping)) != len(self.mapping):
            raise LayoutError(f"layout {self.mapping} is not injective")

    @property
    def n(self) -> int:
        return len(self.mapping)

    def check(self, cg: ConnectivityGraph, device: DeviceModel) -> None:
        """Raise unless this layout embeds ``cg`` in ``device``."""
        if self.n != cg.n:
            raise LayoutError(f"layout width {self.n} != circuit width {cg.n}")
        for p in self.mapping:
            if not 0 <= p < device.Q:
                raise LayoutError(f"physical qubit {p} not on device")
        for a, b in cg.edges:
            if not device.has_edge(self.mapping[a], self.mapping[b]):
                raise LayoutError(
                    f"circuit edge {(a, b)} maps to {(self.mapping[a], self.mapping[b])}, not a device edge"
                )

    def is_valid(self, cg: ConnectivityGraph, device: DeviceModel) -> bool:
        try:
            self.check(cg, device)
        except LayoutError:
            return False
        return True


def device_graph(device: DeviceModel) -> ConnectivityGraph:
    return ConnectivityGraph(device.Q, device.edges)


def circuit_graph(circuit: Circuit) -> ConnectivityGraph:
    """One vertex per circuit qubit, one edge per distinct interacting pair."""
    return ConnectivityGraph(
        circuit.n, frozenset(i.qubits for i in circuit.instructions if len(i.qubits) == 2)
    )


def _search_order(adj: list[set[int]]) -> list[int]:
    # highest degree first, then grow through already-ordered neighbors
    n = len(adj)
    order: list[int] = []
    placed = set()
    while len(order) < n:
        rest = [v for v in range(n) if v not in placed]
        v = max(rest, key=lambda u: (len(adj[u] & placed), len(adj[u]), -u))
        order.append(v)
        placed.add(v)
    return order


def iter_monomorphisms(pattern: ConnectivityGraph, target: ConnectivityGraph) -> Iterator[tuple[int, ...]]:
    """VF2-style backtracking over injective maps preserving every pattern edge."""
    n, m = pattern.n, target.n
    if n > m:
        return
    padj, tadj = pattern.adjacency(), target.adjacency()
    order = _search_order(padj)
    core_p = [-1] * n
    core_t = [-1] * m
    # terminal sets: unmapped vertices adjacent to the mapped region
    depth_p = [0] * n
    depth_t = [0] * m

    def feasible(u: int, v: int, level: int) -> bool:
        if len(tadj[v]) < len(padj[u]):
            return False
        term_p = new_p = 0
        for w in padj[u]:
            if core_p[w] >= 0:
                if core_p[w] not in tadj[v]:
                    return False
            elif depth_p[w]:
                term_p += 1
            else:
                new_p += 1
        term_t = free_t = 0
        for x in tadj[v]:
            if core_t[x] < 0:
                free_t += 1
                if depth_t[x]:
                    term_t += 1
        return term_p <= term_t and term_p + new_p <= free_t

    def mark(adj, depth, core, vertex, level):
        if not depth[vertex]:
            depth[vertex] = level
        for w in adj[vertex]:
            if core[w] < 0 and not depth[w]:
                depth[w] = level

    def unmark(depth, level):
        for i, d in enumerate(depth):
            if d == level:
                depth[i] = 0

    def rec(level: int):
        if level == n:
            yield tuple(core_p)
            return
        u = order[level]
        anchors = [w for w in padj[u] if core_p[w] >= 0]
        if anchors:
            cands = sorted(x for x in tadj[core_p[anchors[0]]] if core_t[x] < 0)
        else:
            cands = [x for x in range(m) if core_t[x] < 0]
        for v in cands:
            if not feasible(u, v, level):
                continue
            core_p[u], core_t[v] = v, u
            mark(padj, depth_p, core_p, u, level + 1)
            mark(tadj, depth_t, core_t, v, level + 1)
            yield from rec(level + 1)
            unmark(depth_p, level + 1)
            unmark(depth_t, level + 1)
            core_p[u], core_t[v] = -1, -1

    yield from rec(0)


def enumerate_layouts(cg: ConnectivityGraph, device: DeviceModel, limit: int | None = None) -> list[Layout]:
    """All layouts of ``cg`` on ``device``, sorted lexicographically by mapping."""
    maps = sorted(iter_monomorphisms(cg, device_graph(device)))
    if limit is not None:
        maps = maps[:limit]
    return [Layout(m, device.name) for m in maps]


def brute_force_layouts(cg: ConnectivityGraph, target) -> list[tuple[int, ...]]:
    """Exhaustive injective-map filter; an oracle for small graphs only.

    ``target`` is a DeviceModel or a ConnectivityGraph.
    """
    tg = device_graph(target) if isinstance(target, DeviceModel) else target
    return sorted(
        m for m in itertools.permutations(range(tg.n), cg.n)
        if all((min(m[a], m[b]), max(m[a], m[b])) in tg.edges for a, b in cg.edges)
    )


def apply_layout(circuit: Circuit, layout: Layout, device: DeviceModel | None = None) -> Circuit:
    """Rewrite ``circuit`` onto physical qubit indices."""
    if layout.n != circuit.n:
        raise LayoutError(f"layout width {layout.n} != circuit width {circuit.n}")
    if device is not None:
        layout.check(circuit_graph(circuit), device)
        width = device.Q
    else:
        width = max(layout.mapping, default=-1) + 1
    insts = tuple(
        Instruction(i.name, tuple(layout.mapping[q] for q in i.qubits), i.params)
        for i in circuit.instructions
    )
    return Circuit(width, insts, circuit.label, circuit.expected)


def random_connected_subgraph(device: DeviceModel, n: int, rng: np.random.Generator,
                              extra_edge_prob: float = 0.5) -> ConnectivityGraph:
    """Random connected n-vertex subgraph of the device, relabelled to 0..n-1.

    Vertices grow from a random seed through the frontier; edges are the
    growth tree plus each remaining induced edge with ``extra_edge_prob``.
    """
    if not 1 <= n <= device.Q:
        raise LayoutError(f"cannot take {n} vertices from a {device.Q}-qubit device")
    adj = device_graph(device).adjacency()
    start = int(rng.integers(device.Q))
    chosen = [start]
    tree = []
    while len(chosen) < n:
        frontier = sorted({(w, v) for v in chosen for w in adj[v] if w not in chosen})
        w, v = frontier[int(rng.integers(len(frontier)))]
        chosen.append(w)
        tree.append((v, w))
    cset = set(chosen)
    tree_set = {(min(e), max(e)) for e in tree}
    extra = sorted(e for e in device.edges if e[0] in cset and e[1] in cset and e not in tree_set)
    edges = set(tree_set)
    for e in extra:
        if rng.random() < extra_edge_prob:
            edges.add(e)
    perm = rng.permutation(n)
    relabel = {p: int(perm[i]) for i, p in enumerate(chosen)}
    return ConnectivityGraph(n, frozenset((relabel[a], relabel[b]) for a, b in edges))


def layout_count_profile(device: DeviceModel, widths, circuits_per_width: int = 500,
                         seed: int = 0, cap: int | None = None) -> dict[int, tuple[float, int, int]]:
    """Mean/min/max layout counts of random connected circuit graphs per width."""
    out = {}
    for w in widths:
        if w > device.Q:
            raise LayoutError(f"width {w} exceeds device size {device.Q}")
        rng = np.random.default_rng([seed, w])
        counts = []
        dg = device_graph(device)
        for _ in range(circuits_per_width):
            cg = random_connected_subgraph(device, w, rng)
            c = 0
            for _m in iter_monomorphisms(cg, dg):
                c += 1
                if cap is not None and c >= cap:
                    break
            counts.append(c)
        out[w] = (float(np.mean(counts)), int(min(counts)), int(max(counts)))
    return out
