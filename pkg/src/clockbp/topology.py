"""Random geometric network topologies: generation, validation, persistence.

Nodes are numbered 1..M; node 1 is the reference node by convention. Two
nodes share an edge exactly when their Euclidean distance is at most the
radio range (boundary included). Instances are immutable after
construction and safe to share across concurrent experiment workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TopologyFileError

FILE_HEADER = "clockbp-topology v1"


@dataclass(eq=False)
class Topology:
    """Geometric graph over nodes 1..num_nodes.

    positions: (M, 2) array, row k holds the coordinates of node k+1.
    radio_range: connection radius, same distance units as positions.
    edges: unordered node pairs stored as (i, j) tuples with i < j.
    """

    positions: np.ndarray
    radio_range: float
    edges: frozenset[tuple[int, int]]
    _adjacency: dict[int, tuple[int, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ValueError("positions must be an (M, 2) array")
        self.edges = frozenset(self.edges)
        self._validate()
        adj: dict[int, list[int]] = {i: [] for i in self.node_ids()}
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        self._adjacency = {i: tuple(sorted(nbrs)) for i, nbrs in adj.items()}

    @property
    def num_nodes(self) -> int:
        return self.positions.shape[0]

    def node_ids(self) -> range:
        return range(1, self.num_nodes + 1)

    def neighbors(self, node: int) -> tuple[int, ...]:
        return self._adjacency[node]

    def distance(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.positions[i - 1] - self.positions[j - 1]))

    def _validate(self):
        m = self.num_nodes
        for i, j in self.edges:
            if not (1 <= i < j <= m):
                raise TopologyFileError(
                    f"edge ({i}, {j}): endpoints must satisfy 1 <= i < j <= {m}"
                )
        induced = _induced_edges(self.positions, self.radio_range)
        extra = self.edges - induced
        if extra:
            i, j = sorted(extra)[0]
            raise TopologyFileError(
                f"edge ({i}, {j}): distance {self.distance(i, j):.6g} exceeds "
                f"radio_range {self.radio_range:.6g}"
            )
        missing = induced - self.edges
        if missing:
            i, j = sorted(missing)[0]
            raise TopologyFileError(
                f"missing edge ({i}, {j}): nodes are within radio_range "
                f"{self.radio_range:.6g} but the pair is not listed"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Topology):
            return NotImplemented
        return (
            self.positions.shape == other.positions.shape
            and np.array_equal(self.positions, other.positions)
            and self.radio_range == other.radio_range
            and self.edges == other.edges
        )


def _induced_edges(positions: np.ndarray, radio_range: float) -> frozenset[tuple[int, int]]:
    """All pairs within radio_range, by exhaustive scan."""
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    ii, jj = np.nonzero(np.triu(dist <= radio_range, k=1))
    return frozenset((int(a) + 1, int(b) + 1) for a, b in zip(ii, jj))


def generate_random_topology(
    num_nodes: int,
    area: tuple[float, float],
    radio_range: float,
    rng: np.random.Generator,
) -> Topology:
    """Drop num_nodes points i.i.d. uniform on the area and connect pairs
    within radio_range. Deterministic for a given generator state."""
    if num_nodes < 1:
        raise ValueError("num_nodes must be >= 1")
    width, height = area
    if width <= 0 or height <= 0:
        raise ValueError("area dimensions must be positive")
    if radio_range < 0:
        raise ValueError("radio_range must be >= 0")
    positions = rng.uniform(0.0, 1.0, size=(num_nodes, 2)) * np.array([width, height])
    return Topology(positions, float(radio_range), _induced_edges(positions, radio_range))


def is_strongly_connected(topology: Topology) -> bool:
    """True iff every node is reachable from node 1 (undirected graph, so
    plain reachability suffices). Iterative depth-first search."""
    m = topology.num_nodes
    if m == 1:
        return True
    seen = {1}
    stack = [1]
    while stack:
        node = stack.pop()
        for nbr in topology.neighbors(node):
            if nbr not in seen:
                seen.add(nbr)
                stack.append(nbr)
    return len(seen) == m


def generate_connected_topology(
    num_nodes: int,
    area: tuple[float, float],
    radio_range: float,
    rng: np.random.Generator,
    max_attempts: int = 1000,
) -> Topology:
    """Resample random topologies until one is strongly connected."""
    for _ in range(max_attempts):
        topo = generate_random_topology(num_nodes, area, radio_range, rng)
        if is_strongly_connected(topo):
            return topo
    raise TopologyFileError(
        f"no connected topology found in {max_attempts} attempts "
        f"(M={num_nodes}, area={area}, range={radio_range})"
    )


def save_topology(topology: Topology, path) -> None:
    """Write the versioned text format; floats use repr for exact round trips."""
    lines = [FILE_HEADER]
    lines.append(f"num_nodes {topology.num_nodes}")
    lines.append(f"radio_range {topology.radio_range!r}")
    for node in topology.node_ids():
        x, y = topology.positions[node - 1]
        lines.append(f"position {node} {x!r} {y!r}")
    for i, j in sorted(topology.edges):
        lines.append(f"edge {i} {j}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_topology(path) -> Topology:
    """Parse and validate a topology file; errors name the offending field."""
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    if not raw or raw[0] != FILE_HEADER:
        raise TopologyFileError(f"header: expected {FILE_HEADER!r}")

    num_nodes = None
    radio_range = None
    positions: dict[int, tuple[float, float]] = {}
    edges: set[tuple[int, int]] = set()

    for line in raw[1:]:
        fields = line.split()
        tag = fields[0]
        try:
            if tag == "num_nodes":
                num_nodes = int(fields[1])
            elif tag == "radio_range":
                radio_range = float(fields[1])
            elif tag == "position":
                node = int(fields[1])
                if node in positions:
                    raise TopologyFileError(f"position: duplicate node {node}")
                positions[node] = (float(fields[2]), float(fields[3]))
            elif tag == "edge":
                i, j = int(fields[1]), int(fields[2])
                if i == j:
                    raise TopologyFileError(f"edge: self-loop on node {i}")
                key = (min(i, j), max(i, j))
                if key in edges:
                    raise TopologyFileError(f"edge: duplicate edge {key}")
                edges.add(key)
            else:
                raise TopologyFileError(f"unknown field {tag!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, TopologyFileError):
                raise
            raise TopologyFileError(f"{tag}: malformed line {line!r}") from exc

    if num_nodes is None:
        raise TopologyFileError("num_nodes: field missing")
    if radio_range is None:
        raise TopologyFileError("radio_range: field missing")
    if set(positions) != set(range(1, num_nodes + 1)):
        raise TopologyFileError("position: need exactly one entry per node 1..M")

    coords = np.array([positions[n] for n in range(1, num_nodes + 1)])
    return Topology(coords, radio_range, frozenset(edges))
