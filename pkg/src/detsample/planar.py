"""Uniform perfect matchings of planar graphs: orientation-based counting
and separator-recursive sampling.

Counting signs a Pfaffian orientation into the adjacency matrix, so every
matching count is a determinant.  Deleting vertices in matched pairs (or
whole even components) keeps the orientation's cycle parities intact, which
is why conditioning can mask indices of one fixed matrix instead of
re-orienting subgraphs.

Sampling matches the vertices of a small balanced separator one edge-margin
draw at a time, then recurses on the disconnected remainder; sibling
components are independent, so their rounds are metered as a maximum, not a
sum.
"""
from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass

import networkx as nx
import numpy as np

from . import rng
from .errors import (
    IllConditioned,
    InvalidModel,
    NoPerfectMatching,
    NotPlanar,
    OddVertexCount,
    ProbabilityViolation,
)
from .samplers import RoundMeter

ROUND_TOL = 0.25
MARGINAL_SUM_TOL = 1e-9


@dataclass(frozen=True)
class PlanarGraph:
    """Embedded planar graph: edges plus a rotation system (cyclic neighbor
    order per vertex).  Construction verifies Euler's formula per component,
    which certifies the rotation system is a genus-zero embedding."""

    n: int
    edges: tuple[tuple[int, int], ...]
    rotation: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen = set()
        for u, v in self.edges:
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise InvalidModel(f"edge ({u}, {v}) outside vertex range")
            if u == v:
                raise InvalidModel(f"loop at vertex {u}")
            if u > v:
                raise InvalidModel(f"edge ({u}, {v}) not stored low-high")
            if (u, v) in seen:
                raise InvalidModel(f"duplicate edge ({u}, {v})")
            seen.add((u, v))
        if len(self.rotation) != self.n:
            raise InvalidModel("rotation system must cover every vertex")
        adjacency = [set() for _ in range(self.n)]
        for u, v in self.edges:
            adjacency[u].add(v)
            adjacency[v].add(u)
        for v, order in enumerate(self.rotation):
            if len(order) != len(set(order)) or set(order) != adjacency[v]:
                raise InvalidModel(
                    f"rotation of vertex {v} does not list its neighbors once"
                )
        _check_euler(self)

    @classmethod
    def from_edges(cls, n: int, edges) -> "PlanarGraph":
        """Compute an embedding for an abstract graph; NotPlanar if none."""
        norm = _normalize_edges(n, edges)
        graph = nx.Graph()
        graph.add_nodes_from(range(n))
        graph.add_edges_from(norm)
        ok, embedding = nx.check_planarity(graph)
        if not ok:
            raise NotPlanar("graph admits no planar embedding")
        data = embedding.get_data()
        rotation = tuple(tuple(data.get(v, ())) for v in range(n))
        return cls(n=n, edges=norm, rotation=rotation)

    @classmethod
    def from_rotation(cls, rotation) -> "PlanarGraph":
        """Build from a hand-specified rotation system; edges are implied."""
        n = len(rotation)
        edges = set()
        for v, order in enumerate(rotation):
            for u in order:
                edges.add((min(u, v), max(u, v)))
        return cls(n=n, edges=tuple(sorted(edges)), rotation=tuple(tuple(o) for o in rotation))

    @property
    def m(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.rotation[v]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.n).encode())
        h.update(repr(self.edges).encode())
        h.update(repr(self.rotation).encode())
        return h.hexdigest()


def _normalize_edges(n, edges) -> tuple[tuple[int, int], ...]:
    out = []
    for u, v in edges:
        u, v = int(u), int(v)
        out.append((min(u, v), max(u, v)))
    out = sorted(set(out))
    return tuple(out)


def _face_orbits(graph: PlanarGraph):
    """Faces as orbits of the next-half-edge permutation.  Every internal
    face comes out with one consistent handedness, which is all the
    orientation construction needs."""
    pos = {}
    for v, order in enumerate(graph.rotation):
        for i, u in enumerate(order):
            pos[(v, u)] = i
    faces = []
    face_of = {}
    for start in pos:
        if start in face_of:
            continue
        orbit = []
        half = start
        while half not in face_of:
            face_of[half] = len(faces)
            orbit.append(half)
            u, v = half
            order = graph.rotation[v]
            half = (v, order[(pos[(v, u)] + 1) % len(order)])
        faces.append(tuple(orbit))
    return faces, face_of


def _components(n, adjacency, alive=None):
    if alive is None:
        alive = range(n)
    alive_set = set(alive)
    seen = set()
    comps = []
    for root in sorted(alive_set):
        if root in seen:
            continue
        stack = [root]
        comp = []
        seen.add(root)
        while stack:
            v = stack.pop()
            comp.append(v)
            for u in adjacency[v]:
                if u in alive_set and u not in seen:
                    seen.add(u)
                    stack.append(u)
        comps.append(tuple(sorted(comp)))
    return comps


def _check_euler(graph: PlanarGraph) -> None:
    faces, _ = _face_orbits(graph)
    comps = _components(graph.n, graph.rotation)
    comp_of = {}
    for ci, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = ci
    v_count = [len(c) for c in comps]
    e_count = [0] * len(comps)
    for u, v in graph.edges:
        e_count[comp_of[u]] += 1
    f_count = [0] * len(comps)
    for orbit in faces:
        f_count[comp_of[orbit[0][0]]] += 1
    for ci, comp in enumerate(comps):
        # isolated vertices carry one implicit face and satisfy 1 - 0 + 1 = 2
        f_c = f_count[ci] if e_count[ci] else 1
        if v_count[ci] - e_count[ci] + f_c != 2:
            raise NotPlanar(
                f"rotation system violates the Euler relation on component {comp[:4]}..."
            )


def kasteleyn_orientation(graph: PlanarGraph) -> tuple[int, ...]:
    """Per-edge signs (+1 orients low-to-high) making every non-root face
    parity-odd: spanning-tree edges are fixed arbitrarily, then each
    non-tree edge is set while walking the dual tree leaves-first."""
    edge_index = {e: i for i, e in enumerate(graph.edges)}
    signs = [0] * graph.m
    faces, face_of = _face_orbits(graph)
    comps = _components(graph.n, graph.rotation)
    for comp in comps:
        if len(comp) == 1:
            continue
        comp_set = set(comp)
        tree_edges = set()
        seen = {comp[0]}
        queue = deque([comp[0]])
        while queue:
            v = queue.popleft()
            for u in graph.rotation[v]:
                if u not in seen:
                    seen.add(u)
                    e = (min(u, v), max(u, v))
                    tree_edges.add(e)
                    signs[edge_index[e]] = 1 if e[0] == v else -1
                    queue.append(u)
        # non-tree edges form a spanning tree of the dual: walk it from an
        # arbitrary root face, then fix parities bottom-up
        dual = {}
        for e in graph.edges:
            if e[0] not in comp_set or e in tree_edges:
                continue
            f1 = face_of[(e[0], e[1])]
            f2 = face_of[(e[1], e[0])]
            dual.setdefault(f1, []).append((f2, e))
            dual.setdefault(f2, []).append((f1, e))
        root_face = face_of[(comp[0], graph.rotation[comp[0]][0])]
        order = [root_face]
        parent_link = {root_face: None}
        for f in order:
            for g, e in dual.get(f, ()):  # noqa: B007
                if g not in parent_link:
                    parent_link[g] = e
                    order.append(g)
        for f in reversed(order[1:]):
            free = parent_link[f]
            agree = 0
            free_half = None
            for a, b in faces[f]:
                e = (min(a, b), max(a, b))
                if e == free:
                    free_half = (a, b)
                    continue
                s = signs[edge_index[e]]
                if s == 0:
                    continue
                if (s > 0) == (a < b):
                    agree += 1
            # orient the free edge along its in-face half-edge iff that
            # flips the face to odd
            a, b = free_half
            signs[edge_index[free]] = (1 if a < b else -1) if agree % 2 == 0 else (
                -1 if a < b else 1
            )
    return tuple(signs)


def signed_adjacency(graph: PlanarGraph) -> np.ndarray:
    signs = kasteleyn_orientation(graph)
    a = np.zeros((graph.n, graph.n))
    for (u, v), s in zip(graph.edges, signs):
        a[u, v] = s
        a[v, u] = -s
    return a


def _round_count(value: float) -> int:
    nearest = round(value)
    # large counts lose integer resolution in the determinant, so the gate is
    # absolute for small values and relative once ulps exceed it
    tol = max(ROUND_TOL, 1e-9 * abs(value))
    if abs(value - nearest) > tol:
        raise IllConditioned(f"matching count {value!r} is not near an integer")
    return int(nearest)


class _MatchingCounter:
    """Counts of perfect matchings on induced subgraphs of one fixed graph,
    memoized by alive-vertex mask.  Masks must only ever drop matched pairs
    or whole even components, which preserves the orientation's parity
    certificate."""

    def __init__(self, graph: PlanarGraph):
        self.graph = graph
        self.a = signed_adjacency(graph)
        self.adjacency = graph.rotation
        self._counts: dict[int, int] = {}
        self._marginals: dict[tuple[int, int], tuple] = {}
        self._splits: dict[tuple[int, ...], list] = {}
        self._separators: dict[tuple[int, ...], tuple] = {}
        self._comp_words: dict[tuple[int, ...], np.uint64] = {}

    def count_mask(self, mask: int) -> int:
        hit = self._counts.get(mask)
        if hit is not None:
            return hit
        idx = _mask_indices(mask)
        if len(idx) % 2:
            value = 0
        elif not idx:
            value = 1
        else:
            det = float(np.linalg.det(self.a[np.ix_(idx, idx)]))
            value = _round_count(float(np.sqrt(max(det, 0.0))))
        self._counts[mask] = value
        return value

    def components(self, alive: tuple[int, ...]):
        hit = self._splits.get(alive)
        if hit is None:
            hit = _components(self.graph.n, self.adjacency, alive)
            self._splits[alive] = hit
        return hit

    def separator(self, comp: tuple[int, ...]):
        hit = self._separators.get(comp)
        if hit is None:
            hit = _bfs_level_separator(self.adjacency, comp)
            self._separators[comp] = hit
        return hit


_COUNTER_CACHE: dict[str, _MatchingCounter] = {}


def _counter_for(graph: PlanarGraph) -> _MatchingCounter:
    key = graph.digest()
    hit = _COUNTER_CACHE.get(key)
    if hit is None:
        if len(_COUNTER_CACHE) >= 32:
            _COUNTER_CACHE.clear()
        hit = _MatchingCounter(graph)
        _COUNTER_CACHE[key] = hit
    return hit


def _mask_indices(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def _full_mask(n: int) -> int:
    return (1 << n) - 1


def count_matchings(graph: PlanarGraph) -> int:
    """Number of perfect matchings, as the square root of the signed
    adjacency determinant."""
    if graph.n % 2:
        raise OddVertexCount(f"{graph.n} vertices cannot be perfectly matched")
    return _counter_for(graph).count_mask(_full_mask(graph.n))


def _bfs_level_separator(adjacency, comp: tuple[int, ...]):
    """Split one connected vertex set by a breadth-first level: among levels
    leaving both sides at most 2/3 of the component, prefer the smallest
    level, then the better balance, then the earliest level."""
    comp_set = set(comp)
    root = comp[0]
    level = {root: 0}
    order = [root]
    for v in order:
        for u in adjacency[v]:
            if u in comp_set and u not in level:
                level[u] = level[v] + 1
                order.append(u)
    depth = max(level.values())
    buckets = [[] for _ in range(depth + 1)]
    for v in sorted(level):
        buckets[level[v]].append(v)
    total = len(comp)
    limit = 2 * total / 3
    best = None
    below = 0
    for ell, bucket in enumerate(buckets):
        above = total - below - len(bucket)
        if below <= limit and above <= limit:
            key = (len(bucket), max(below, above), ell)
            if best is None or key < best[0]:
                best = (key, ell)
        below += len(bucket)
    assert best is not None, "a median level always satisfies the balance bound"
    ell = best[1]
    sep = tuple(buckets[ell])
    v1 = tuple(sorted(v for b in buckets[:ell] for v in b))
    v2 = tuple(sorted(v for b in buckets[ell + 1 :] for v in b))
    return sep, v1, v2


def find_separator(graph: PlanarGraph):
    """(S, V1, V2) with no V1-V2 edge and both sides at most 2n/3."""
    comps = _components(graph.n, graph.rotation)
    if len(comps) > 1:
        # already disconnected: bin whole components into two balanced sides
        sides: tuple[list[int], list[int]] = ([], [])
        for comp in sorted(comps, key=len, reverse=True):
            target = sides[0] if len(sides[0]) <= len(sides[1]) else sides[1]
            target.extend(comp)
        return (), tuple(sorted(sides[0])), tuple(sorted(sides[1]))
    if graph.n == 0:
        return (), (), ()
    return _counter_for(graph).separator(comps[0])


def edge_marginal(graph: PlanarGraph, v: int, conditioned=()) -> tuple[tuple[int, ...], np.ndarray]:
    """P[v is matched along (v, u)] for each still-alive neighbor u, given a
    partial matching; the vector sums to one."""
    counter = _counter_for(graph)
    matched = _matched_vertices(graph, conditioned)
    if v in matched:
        raise InvalidModel(f"vertex {v} is already matched")
    if not 0 <= v < graph.n:
        raise InvalidModel(f"vertex {v} outside range")
    mask = _full_mask(graph.n)
    for w in matched:
        mask &= ~(1 << w)
    partners, probs, _ = _marginal_on_mask(counter, mask, v)
    return partners, probs


def _marginal_on_mask(counter: _MatchingCounter, mask: int, v: int):
    hit = counter._marginals.get((mask, v))
    if hit is not None:
        return hit
    base = counter.count_mask(mask)
    if base == 0:
        raise NoPerfectMatching("the conditioned graph has no perfect matching")
    partners = tuple(u for u in sorted(counter.adjacency[v]) if mask >> u & 1)
    weights = np.array(
        [counter.count_mask(mask & ~(1 << v) & ~(1 << u)) for u in partners],
        dtype=np.float64,
    )
    probs = weights / base
    if abs(probs.sum() - 1.0) > MARGINAL_SUM_TOL:
        raise ProbabilityViolation(
            f"incident-edge marginals sum to {probs.sum()!r}"
        )
    probs.flags.writeable = False
    cum = tuple(np.cumsum(probs).tolist())
    hit = (partners, probs, cum)
    counter._marginals[(mask, v)] = hit
    return hit


def _matched_vertices(graph: PlanarGraph, conditioned) -> set[int]:
    matched: set[int] = set()
    for a, b in conditioned:
        a, b = int(a), int(b)
        for w in (a, b):
            if not 0 <= w < graph.n:
                raise InvalidModel(f"matched vertex {w} outside range")
            if w in matched:
                raise InvalidModel(f"vertex {w} matched twice")
            matched.add(w)
    return matched


def _comp_word(counter: _MatchingCounter, comp: tuple[int, ...]) -> np.uint64:
    """Seed-independent 64-bit word for a sorted vertex set, so a subproblem
    key is one fold instead of one per vertex."""
    hit = counter._comp_words.get(comp)
    if hit is None:
        hit = rng.derive_key(0, *(np.uint64(v) for v in comp))
        counter._comp_words[comp] = hit
    return hit


def _sample_component(
    counter: _MatchingCounter, comp: tuple[int, ...], mask: int, seed_key: np.uint64
) -> tuple[list[tuple[int, int]], RoundMeter]:
    meter = RoundMeter()
    pairs: list[tuple[int, int]] = []
    if not comp:
        return pairs, meter
    key = rng.fold(seed_key, _comp_word(counter, comp))
    sep, _, _ = counter.separator(comp)
    draws = rng.u01(key, np.arange(len(sep), dtype=np.uint64)).tolist() if sep else []
    step = 0
    for s in sep:
        if not (mask >> s & 1):
            continue
        partners, _, cum = _marginal_on_mask(counter, mask, s)
        target = draws[step] * cum[-1]
        step += 1
        pick_at = 0
        while pick_at < len(cum) - 1 and cum[pick_at] <= target:
            pick_at += 1
        pick = partners[pick_at]
        meter.note_round(len(partners), len(partners))
        pairs.append((min(s, pick), max(s, pick)))
        mask &= ~(1 << s) & ~(1 << pick)
    remaining = tuple(v for v in comp if mask >> v & 1)
    if remaining:
        child_rounds = 0
        child_width = 0
        for child in counter.components(remaining):
            child_mask = 0
            for v in child:
                child_mask |= 1 << v
            got, child_meter = _sample_component(counter, child, child_mask, seed_key)
            pairs.extend(got)
            child_rounds = max(child_rounds, child_meter.adaptive_rounds)
            child_width = max(child_width, child_meter.max_width)
            meter.proposal_work += child_meter.proposal_work
        meter.adaptive_rounds += child_rounds
        meter.max_width = max(meter.max_width, child_width)
    return pairs, meter


def sample_matching(graph: PlanarGraph, seed: int = 0) -> tuple[tuple[tuple[int, int], ...], RoundMeter]:
    """Uniform perfect matching plus the round meter of the separator
    recursion; sibling components contribute their round maximum."""
    if graph.n % 2:
        raise OddVertexCount(f"{graph.n} vertices cannot be perfectly matched")
    counter = _counter_for(graph)
    if counter.count_mask(_full_mask(graph.n)) == 0:
        raise NoPerfectMatching("graph has no perfect matching")
    seed_key = rng.derive_key(seed, rng.D_PLANAR)
    meter = RoundMeter()
    rounds = 0
    width = 0
    pairs: list[tuple[int, int]] = []
    for comp in counter.components(tuple(range(graph.n))):
        comp_mask = 0
        for v in comp:
            comp_mask |= 1 << v
        got, comp_meter = _sample_component(counter, comp, comp_mask, seed_key)
        pairs.extend(got)
        rounds = max(rounds, comp_meter.adaptive_rounds)
        width = max(width, comp_meter.max_width)
        meter.proposal_work += comp_meter.proposal_work
    meter.adaptive_rounds = rounds
    meter.max_width = width
    return tuple(sorted(pairs)), meter


# --- constructors and file format ------------------------------------------


def grid_graph(rows: int, cols: int) -> PlanarGraph:
    """rows x cols grid with the row-major vertex numbering."""
    if rows < 1 or cols < 1:
        raise InvalidModel("grid needs positive dimensions")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return PlanarGraph.from_edges(rows * cols, edges)


def cycle_graph(n: int) -> PlanarGraph:
    if n < 3:
        raise InvalidModel("cycle needs at least 3 vertices")
    return PlanarGraph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def path_graph(n: int) -> PlanarGraph:
    if n < 1:
        raise InvalidModel("path needs at least one vertex")
    return PlanarGraph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def read_graph(path) -> PlanarGraph:
    """Text format: "n m" header, one "u v" line per edge, optionally a
    "# rotation" marker followed by n lines of cyclic neighbor order."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = [line.strip() for line in fh]
    lines = [ln for ln in raw if ln]
    if not lines:
        raise InvalidModel(f"{path}: empty graph file")
    head = lines[0].split()
    if len(head) != 2:
        raise InvalidModel(f"{path}: header must be 'n m'")
    n, m = int(head[0]), int(head[1])
    edges = []
    pos = 1
    for _ in range(m):
        if pos >= len(lines):
            raise InvalidModel(f"{path}: expected {m} edges")
        parts = lines[pos].split()
        if len(parts) != 2:
            raise InvalidModel(f"{path}: bad edge line {lines[pos]!r}")
        edges.append((int(parts[0]), int(parts[1])))
        pos += 1
    if pos < len(lines) and lines[pos].startswith("#"):
        if "rotation" not in lines[pos]:
            raise InvalidModel(f"{path}: unknown section {lines[pos]!r}")
        pos += 1
        rotation = []
        for _ in range(n):
            if pos >= len(lines):
                raise InvalidModel(f"{path}: rotation section needs {n} lines")
            rotation.append(tuple(int(x) for x in lines[pos].split()))
            pos += 1
        return PlanarGraph(
            n=n, edges=_normalize_edges(n, edges), rotation=tuple(rotation)
        )
    return PlanarGraph.from_edges(n, edges)


def write_graph(graph: PlanarGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{graph.n} {graph.m}\n")
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")
        fh.write("# rotation\n")
        for order in graph.rotation:
            fh.write(" ".join(str(u) for u in order) + "\n")
