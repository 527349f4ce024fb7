"""Optical topology, node hierarchy, candidate paths and LAND pair search."""

from __future__ import annotations

import csv
import heapq
import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ABSENT = math.inf
SYMMETRY_RTOL = 1e-9


class TopologyError(ValueError):
    """Raised for malformed topology or hierarchy input."""


@dataclass(frozen=True)
class Link:
    a: int
    b: int
    km: float


@dataclass(frozen=True)
class Topology:
    """Undirected weighted fiber graph.

    Links are ordered by ``(min endpoint, max endpoint)``; the position of a
    link in ``links`` is its index everywhere else in the package.
    """

    name: str
    nodes: tuple[int, ...]
    links: tuple[Link, ...]
    adjacency: np.ndarray = field(repr=False, compare=False)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_links(self) -> int:
        return len(self.links)

    @property
    def link_lengths(self) -> np.ndarray:
        return np.array([link.km for link in self.links], dtype=float)

    @property
    def link_index(self) -> dict[tuple[int, int], int]:
        return {(link.a, link.b): i for i, link in enumerate(self.links)}

    def link_between(self, u: int, v: int) -> int:
        key = (u, v) if u < v else (v, u)
        try:
            return self.link_index[key]
        except KeyError:
            raise TopologyError(f"no link between {u} and {v}") from None

    def neighbors(self, node: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(np.isfinite(self.adjacency[node]))]

    def check_nodes(self, nodes: Iterable[int]) -> None:
        for n in nodes:
            if not 0 <= int(n) < self.num_nodes:
                raise TopologyError(f"unknown node {n}")


def topology_from_matrix(matrix: np.ndarray, name: str = "topology") -> Topology:
    """Build a validated :class:`Topology` from a square length matrix.

    Absent links are ``inf`` (or NaN). The diagonal is ignored when it holds
    0 or ``inf``.
    """
    m = np.array(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise TopologyError(f"matrix must be square, got shape {m.shape}")
    n = m.shape[0]
    if n == 0:
        raise TopologyError("empty topology")
    m[np.isnan(m)] = ABSENT
    diag = np.diag(m).copy()
    if np.any(np.isfinite(diag) & (diag != 0)):
        raise TopologyError("self-loop on diagonal")
    np.fill_diagonal(m, ABSENT)

    finite = np.isfinite(m)
    if np.any(finite != finite.T):
        raise TopologyError("asymmetric matrix: link present in one direction only")
    if np.any(m[finite] <= 0):
        raise TopologyError("non-positive link length")
    upper, lower = m[finite], m.T[finite]
    if np.any(np.abs(upper - lower) > SYMMETRY_RTOL * np.maximum(np.abs(upper), np.abs(lower))):
        raise TopologyError("asymmetric matrix beyond tolerance")
    m = np.where(finite, (m + m.T) / 2.0, ABSENT)

    links = tuple(
        Link(int(i), int(j), float(m[i, j]))
        for i in range(n)
        for j in range(i + 1, n)
        if np.isfinite(m[i, j])
    )
    topo = Topology(name=name, nodes=tuple(range(n)), links=links, adjacency=m)
    if not _is_connected(topo):
        raise TopologyError("topology is disconnected")
    return topo


def topology_from_links(
    num_nodes: int, links: Iterable[tuple[int, int, float]], name: str = "topology"
) -> Topology:
    m = np.full((num_nodes, num_nodes), ABSENT)
    for a, b, km in links:
        if a == b:
            raise TopologyError(f"self-loop at node {a}")
        if not (0 <= a < num_nodes and 0 <= b < num_nodes):
            raise TopologyError(f"link ({a}, {b}) references unknown node")
        if np.isfinite(m[a, b]):
            raise TopologyError(f"duplicate link ({a}, {b})")
        m[a, b] = m[b, a] = km
    return topology_from_matrix(m, name=name)


def _is_connected(topo: Topology) -> bool:
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in topo.neighbors(u):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == topo.num_nodes


def _parse_cell(cell: str) -> float:
    cell = cell.strip()
    if cell == "" or cell.lower() in {"inf", "+inf", "infinity"}:
        return ABSENT
    return float(cell)


def load_topology(source: str | Path, format: str | None = None, name: str | None = None) -> Topology:
    """Load a topology from a CSV length matrix or a JSON node/link list.

    ``format`` is ``"csv-matrix"`` or ``"json"``; inferred from the suffix when
    omitted.
    """
    path = Path(source)
    if format is None:
        format = "json" if path.suffix.lower() == ".json" else "csv-matrix"
    name = name or path.stem

    if format == "csv-matrix":
        with path.open(newline="", encoding="utf-8") as fh:
            rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
        width = {len(r) for r in rows}
        if len(width) != 1 or len(rows) != width.pop():
            raise TopologyError(f"{path}: matrix is not square")
        matrix = np.array([[_parse_cell(c) for c in row] for row in rows], dtype=float)
        return topology_from_matrix(matrix, name=name)

    if format == "json":
        payload = json.loads(path.read_text(encoding="utf-8"))
        nodes = sorted(int(n) for n in payload["nodes"])
        if nodes != list(range(len(nodes))):
            raise TopologyError(f"{path}: node ids must be 0..N-1")
        links = [(int(l["a"]), int(l["b"]), float(l["km"])) for l in payload["links"]]
        return topology_from_links(len(nodes), links, name=name)

    raise TopologyError(f"unknown topology format {format!r}")


# --------------------------------------------------------------------- hierarchy


@dataclass(frozen=True)
class LevelNodes:
    standalone: frozenset[int]
    colocated: frozenset[int]

    @property
    def members(self) -> frozenset[int]:
        return self.standalone | self.colocated


@dataclass(frozen=True)
class HierarchyMap:
    levels: Mapping[int, LevelNodes]

    def standalone(self, level: int) -> frozenset[int]:
        entry = self.levels.get(level)
        return entry.standalone if entry else frozenset()

    def colocated(self, level: int) -> frozenset[int]:
        entry = self.levels.get(level)
        return entry.colocated if entry else frozenset()

    def members(self, level: int) -> frozenset[int]:
        return self.standalone(level) | self.colocated(level)

    def all_nodes(self) -> list[int]:
        out: set[int] = set()
        for entry in self.levels.values():
            out |= entry.members
        return sorted(out)


def define_hierarchy(topology: Topology, assignments: Mapping[int, Mapping[str, Iterable[int] | None]]) -> HierarchyMap:
    """Assign nodes to hierarchy levels.

    ``assignments`` maps a level (1..4) to ``{"standalone": [...], "colocated": [...]}``.
    A missing or ``None`` colocated entry becomes the union of the standalone
    sets of all numerically smaller levels.
    """
    standalone: dict[int, frozenset[int]] = {}
    for level, spec in assignments.items():
        level = int(level)
        if level not in (1, 2, 3, 4):
            raise TopologyError(f"hierarchy level must be in 1..4, got {level}")
        nodes = frozenset(int(n) for n in spec.get("standalone", ()) or ())
        topology.check_nodes(nodes)
        standalone[level] = nodes

    seen: dict[int, int] = {}
    for level in sorted(standalone):
        for n in standalone[level]:
            if n in seen:
                raise TopologyError(f"node {n} is standalone at both HL{seen[n]} and HL{level}")
            seen[n] = level

    levels: dict[int, LevelNodes] = {}
    for level in sorted(standalone):
        given = assignments[level].get("colocated")
        if given is None:
            colocated = frozenset().union(*(standalone[l] for l in standalone if l < level))
        else:
            colocated = frozenset(int(n) for n in given)
            topology.check_nodes(colocated)
        levels[level] = LevelNodes(standalone[level], colocated)
    return HierarchyMap(levels)


def standalone_level_of(h: HierarchyMap, node: int) -> int | None:
    for level, entry in h.levels.items():
        if node in entry.standalone:
            return level
    return None


def hierarchy_subgraph(t: Topology, h: HierarchyMap, level: int, minimum_level: int) -> tuple[tuple[int, ...], np.ndarray]:
    """Links of the HL``level`` subnet and its cost matrix.

    A link is kept when one endpoint is standalone at ``level`` and the other
    endpoint is not standalone at any level in ``level+1 .. minimum_level``.
    Returns the kept global link indices and an N x N cost matrix with
    ``inf`` for every other pair.
    """
    if not 1 <= level <= minimum_level:
        raise TopologyError(f"invalid level range: level={level}, minimum_level={minimum_level}")
    own = h.standalone(level)
    window = frozenset().union(*(h.standalone(l) for l in range(level + 1, minimum_level + 1)))

    kept = []
    cost = np.full((t.num_nodes, t.num_nodes), ABSENT)
    for i, link in enumerate(t.links):
        a, b = link.a, link.b
        if (a in own and b not in window) or (b in own and a not in window):
            kept.append(i)
            cost[a, b] = cost[b, a] = link.km
    return tuple(kept), cost


def neighbor_nodes(t: Topology, nodes: Iterable[int]) -> list[int]:
    nodes = set(int(n) for n in nodes)
    t.check_nodes(nodes)
    out: set[int] = set()
    for n in nodes:
        out.update(t.neighbors(n))
    return sorted(out - nodes)


def node_degrees(t: Topology, nodes: Iterable[int]) -> np.ndarray:
    """Two-column array of ``(node, degree)``."""
    nodes = [int(n) for n in nodes]
    t.check_nodes(nodes)
    finite = np.isfinite(t.adjacency)
    return np.array([[n, int(finite[n].sum())] for n in nodes], dtype=int).reshape(-1, 2)


# ------------------------------------------------------------------ k shortest


@dataclass(frozen=True)
class CandidatePath:
    index: int
    src: int
    dest: int
    nodes: tuple[int, ...]
    link_indices: tuple[int, ...]
    distance: float
    num_hops: int


def _path_distance(cost: np.ndarray, nodes: Sequence[int]) -> float:
    return float(sum(cost[u, v] for u, v in zip(nodes, nodes[1:])))


def _best_path(
    cost: np.ndarray,
    adj: list[list[int]],
    src: int,
    dst: int,
    banned_nodes: set[int],
    banned_edges: set[tuple[int, int]],
) -> tuple[int, ...] | None:
    # Labels are (distance, hops, node sequence); this order is preserved when a
    # common edge is appended, so label-setting search returns the minimum path
    # under the full key.
    heap: list[tuple[float, int, tuple[int, ...]]] = [(0.0, 0, (src,))]
    settled: set[int] = set()
    while heap:
        dist, hops, path = heapq.heappop(heap)
        u = path[-1]
        if u in settled:
            continue
        settled.add(u)
        if u == dst:
            return path
        for v in adj[u]:
            if v in settled or v in banned_nodes or (u, v) in banned_edges:
                continue
            heapq.heappush(heap, (dist + cost[u, v], hops + 1, path + (v,)))
    return None


def _path_key(cost: np.ndarray, nodes: tuple[int, ...]) -> tuple[float, int, tuple[int, ...]]:
    return (_path_distance(cost, nodes), len(nodes) - 1, nodes)


def k_shortest_paths(cost: np.ndarray, src: int, dst: int, k: int, topology: Topology) -> list[CandidatePath]:
    """Up to ``k`` loopless paths by Yen's algorithm, ascending distance.

    Ties are broken by hop count, then by node sequence. ``index`` on the
    returned paths is their rank (0-based); tables that pool several searches
    reindex them.
    """
    if src == dst:
        raise TopologyError("source and destination must differ")
    if k < 1:
        raise TopologyError("k must be >= 1")
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    adj = [[int(v) for v in np.flatnonzero(np.isfinite(cost[u]))] for u in range(n)]

    first = _best_path(cost, adj, src, dst, set(), set())
    if first is None:
        return []
    accepted = [first]
    candidates: list[tuple[float, int, tuple[int, ...]]] = []
    known = {first}

    while len(accepted) < k:
        last = accepted[-1]
        for i in range(len(last) - 1):
            root = last[: i + 1]
            banned_edges = set()
            for p in accepted:
                if p[: i + 1] == root and len(p) > i + 1:
                    banned_edges.add((p[i], p[i + 1]))
            spur = _best_path(cost, adj, root[-1], dst, set(root[:-1]), banned_edges)
            if spur is None:
                continue
            total = root[:-1] + spur
            if total not in known:
                known.add(total)
                heapq.heappush(candidates, _path_key(cost, total))
        if not candidates:
            break
        accepted.append(heapq.heappop(candidates)[2])

    out = []
    for rank, nodes in enumerate(accepted):
        links = tuple(topology.link_between(u, v) for u, v in zip(nodes, nodes[1:]))
        out.append(
            CandidatePath(
                index=rank,
                src=src,
                dest=dst,
                nodes=nodes,
                link_indices=links,
                distance=_path_distance(cost, nodes),
                num_hops=len(nodes) - 1,
            )
        )
    return out


def candidate_table(
    cost: np.ndarray,
    topology: Topology,
    sources: Iterable[int],
    destinations: Iterable[int],
    k: int,
) -> list[CandidatePath]:
    """Pooled k-shortest paths from every source to every other destination.

    Paths are grouped by source and sorted by (distance, hops, nodes) within
    each group; ``index`` is the row position in the returned table.
    """
    destinations = sorted(set(destinations))
    rows: list[CandidatePath] = []
    for src in sorted(set(sources)):
        group = []
        for dst in destinations:
            if dst != src:
                group.extend(k_shortest_paths(cost, src, dst, k, topology))
        group.sort(key=lambda p: (p.distance, p.num_hops, p.nodes))
        rows.extend(group)
    return [
        CandidatePath(i, p.src, p.dest, p.nodes, p.link_indices, p.distance, p.num_hops)
        for i, p in enumerate(rows)
    ]


# ----------------------------------------------------------------- LAND pairs


@dataclass(frozen=True)
class LandPair:
    primary_path: int
    secondary_path: int
    src: int
    secondary_distance: float
    secondary_hops: int


_REQUIRED = ("index", "src", "dest", "nodes", "link_indices", "distance", "num_hops")


def _as_paths(candidates: Iterable[CandidatePath | Mapping]) -> list[CandidatePath]:
    out = []
    for row in candidates:
        if isinstance(row, CandidatePath):
            out.append(row)
            continue
        missing = [c for c in _REQUIRED if c not in row]
        if missing:
            raise TopologyError(f"candidate table is missing columns {missing}")
        out.append(
            CandidatePath(
                int(row["index"]), int(row["src"]), int(row["dest"]), tuple(row["nodes"]),
                tuple(row["link_indices"]), float(row["distance"]), int(row["num_hops"]),
            )
        )
    return out


def is_land_pair(primary: CandidatePath, secondary: CandidatePath) -> bool:
    if primary.src != secondary.src or primary.dest == secondary.dest:
        return False
    if set(primary.nodes[1:]) & set(secondary.nodes[1:]):
        return False
    return not set(primary.link_indices) & set(secondary.link_indices)


def land_pairs(
    src_list: Iterable[int], candidates: Iterable[CandidatePath | Mapping], num_pairs: int
) -> list[LandPair]:
    """Link- and node-disjoint primary/secondary pairs per source.

    Pairs are ranked by (primary distance, secondary distance, primary index,
    secondary index) and at most ``num_pairs`` are kept per source.
    """
    if num_pairs < 1:
        raise TopologyError("num_pairs must be >= 1")
    paths = _as_paths(candidates)
    by_src: dict[int, list[CandidatePath]] = {}
    for p in paths:
        by_src.setdefault(p.src, []).append(p)

    out: list[LandPair] = []
    for src in src_list:
        group = by_src.get(src, [])
        found = []
        for p in group:
            p_inner = set(p.nodes[1:])
            p_links = set(p.link_indices)
            for s in group:
                if s.dest == p.dest or p_inner.intersection(s.nodes[1:]) or p_links.intersection(s.link_indices):
                    continue
                found.append((p.distance, s.distance, p.index, s.index, s))
        found.sort(key=lambda r: r[:4])
        out.extend(
            LandPair(r[2], r[3], src, r[4].distance, r[4].num_hops) for r in found[:num_pairs]
        )
    return out


def calc_num_pair(pairs: Iterable[LandPair], src_list: Sequence[int]) -> np.ndarray:
    counts = {s: 0 for s in src_list}
    for pair in pairs:
        if pair.src in counts:
            counts[pair.src] += 1
    return np.array([counts[s] for s in src_list], dtype=int)
