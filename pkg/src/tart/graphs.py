"""Computational-graph data model, JSONL serialization, splitting, and synthetic data.

A computational graph is a DAG whose nodes carry one of 15 operator
primitive codes and whose edges describe forward activation flow.
Datasets are stored as JSONL, one labeled graph per line.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

NUM_PRIMITIVES = 15

TARGET_NAMES = ("clean_acc", "noisy_acc", "inference_speed", "convergence_speed")


class GraphError(ValueError):
    """Base class for graph-core failures."""


class CycleDetected(GraphError):
    def __init__(self):
        super().__init__("graph contains a cycle; no topological order exists")


class InvalidNodeCode(GraphError):
    def __init__(self, index: int, code):
        self.index = index
        self.code = code
        super().__init__(f"node {index}: op code {code!r} outside [1, {NUM_PRIMITIVES}]")


class InvalidEdge(GraphError):
    def __init__(self, u, v, reason: str = "endpoint out of range or self-loop"):
        self.u = u
        self.v = v
        super().__init__(f"edge ({u}, {v}): {reason}")


class DuplicateEdge(GraphError):
    def __init__(self, u: int, v: int):
        self.u = u
        self.v = v
        super().__init__(f"edge ({u}, {v}) appears more than once")


class ParseError(GraphError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class ValidationError(GraphError):
    def __init__(self, record_id: str, cause: GraphError):
        self.record_id = record_id
        self.cause = cause
        super().__init__(f"record {record_id!r}: {cause}")


class NotEnoughRecords(GraphError):
    pass


class InvalidSpec(GraphError):
    pass


@dataclass(frozen=True)
class ComputationalGraph:
    num_nodes: int
    node_ops: tuple
    edges: tuple
    topo_order: Optional[tuple] = None

    @property
    def num_edges(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class PerformanceRecord:
    clean_acc: float
    noisy_acc: float
    inference_speed: float
    convergence_speed: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.clean_acc, self.noisy_acc, self.inference_speed, self.convergence_speed],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class LabeledGraph:
    graph: ComputationalGraph
    targets: Optional[PerformanceRecord]
    id: str


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    test: tuple


def _topological_order(num_nodes: int, edges) -> tuple:
    """Kahn's algorithm; raises CycleDetected if no full order exists."""
    indegree = [0] * num_nodes
    adjacency = [[] for _ in range(num_nodes)]
    for u, v in edges:
        adjacency[u].append(v)
        indegree[v] += 1
    frontier = [i for i in range(num_nodes) if indegree[i] == 0]
    order = []
    while frontier:
        node = frontier.pop()
        order.append(node)
        for succ in adjacency[node]:
            indegree[succ] -= 1
            if indegree[succ] == 0:
                frontier.append(succ)
    if len(order) != num_nodes:
        raise CycleDetected()
    return tuple(order)


def validate_graph(graph: ComputationalGraph) -> ComputationalGraph:
    """Check all structural invariants and attach a cached topological order."""
    n = graph.num_nodes
    if n < 1:
        raise InvalidSpec(f"num_nodes must be >= 1, got {n}")
    if len(graph.node_ops) != n:
        raise InvalidSpec(f"node_ops has length {len(graph.node_ops)}, expected {n}")
    for i, code in enumerate(graph.node_ops):
        if not isinstance(code, (int, np.integer)) or not (1 <= code <= NUM_PRIMITIVES):
            raise InvalidNodeCode(i, code)
    seen = set()
    for u, v in graph.edges:
        if not (0 <= u < n and 0 <= v < n) or u == v:
            raise InvalidEdge(u, v)
        if (u, v) in seen:
            raise DuplicateEdge(u, v)
        seen.add((u, v))
    order = _topological_order(n, graph.edges)
    return replace(graph, topo_order=order)


def make_graph(num_nodes: int, node_ops, edges) -> ComputationalGraph:
    """Build and validate a graph from plain sequences."""
    g = ComputationalGraph(
        num_nodes=int(num_nodes),
        node_ops=tuple(int(c) for c in node_ops),
        edges=tuple((int(u), int(v)) for u, v in edges),
    )
    return validate_graph(g)


def longest_path_length(graph: ComputationalGraph) -> int:
    """Longest directed path, counted in edges (0 for an edgeless graph)."""
    if graph.topo_order is None:
        graph = validate_graph(graph)
    dist = [0] * graph.num_nodes
    preds = [[] for _ in range(graph.num_nodes)]
    for u, v in graph.edges:
        preds[v].append(u)
    for node in graph.topo_order:
        if preds[node]:
            dist[node] = 1 + max(dist[p] for p in preds[node])
    return max(dist) if dist else 0


# -- JSONL serialization ------------------------------------------------------

def _record_to_dict(rec: LabeledGraph) -> dict:
    d = {
        "id": rec.id,
        "num_nodes": rec.graph.num_nodes,
        "node_ops": list(rec.graph.node_ops),
        "edges": [list(e) for e in rec.graph.edges],
    }
    if rec.targets is not None:
        d["targets"] = {
            "clean_acc": rec.targets.clean_acc,
            "noisy_acc": rec.targets.noisy_acc,
            "inference_speed": rec.targets.inference_speed,
            "convergence_speed": rec.targets.convergence_speed,
        }
    return d


def _record_from_dict(d: dict, line_no: int) -> LabeledGraph:
    try:
        rec_id = d["id"]
        graph = ComputationalGraph(
            num_nodes=int(d["num_nodes"]),
            node_ops=tuple(int(c) for c in d["node_ops"]),
            edges=tuple((int(u), int(v)) for u, v in d["edges"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(line_no, f"malformed record: {exc}") from exc
    try:
        graph = validate_graph(graph)
    except GraphError as exc:
        raise ValidationError(rec_id, exc) from exc
    targets = None
    if "targets" in d:
        try:
            t = d["targets"]
            targets = PerformanceRecord(
                clean_acc=float(t["clean_acc"]),
                noisy_acc=float(t["noisy_acc"]),
                inference_speed=float(t["inference_speed"]),
                convergence_speed=float(t["convergence_speed"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(line_no, f"malformed targets: {exc}") from exc
        if not np.all(np.isfinite(targets.as_array())):
            raise ValidationError(rec_id, InvalidSpec("non-finite target value"))
    return LabeledGraph(graph=graph, targets=targets, id=rec_id)


def write_dataset(records: Sequence[LabeledGraph], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(_record_to_dict(rec)) + "\n")


def read_dataset(path) -> list:
    records = []
    ids = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, str(exc)) from exc
            rec = _record_from_dict(d, line_no)
            if rec.id in ids:
                raise ValidationError(rec.id, InvalidSpec("duplicate id in dataset"))
            ids.add(rec.id)
            records.append(rec)
    return records


def split_dataset(records: Sequence[LabeledGraph], n_train: int, seed: int) -> DatasetSplit:
    """Deterministic shuffled split: first n_train shuffled records train, rest test."""
    if n_train > len(records):
        raise NotEnoughRecords(f"requested {n_train} train records, only {len(records)} available")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(records))
    shuffled = [records[i] for i in perm]
    return DatasetSplit(train=tuple(shuffled[:n_train]), test=tuple(shuffled[n_train:]))


# -- Synthetic generation -----------------------------------------------------

def synthetic_targets(graph: ComputationalGraph, noise_sigma: float, rng) -> PerformanceRecord:
    """Closed-form labels used by the synthetic generator.

    clean_acc rewards long critical paths and cheap ops (codes <= 5);
    noisy_acc penalizes the fraction of code-1 nodes on top of clean_acc;
    inference_speed decreases with edge count; convergence_speed mirrors
    clean_acc exactly. Each of the first three gets independent
    Normal(0, noise_sigma) noise.
    """
    n = graph.num_nodes
    ops = np.asarray(graph.node_ops)
    lp = longest_path_length(graph)
    depth_term = lp / (n - 1) if n > 1 else 0.0
    cheap_frac = float(np.mean(ops <= 5))
    code1_frac = float(np.mean(ops == 1))
    m_max = n * (n - 1) / 2
    edge_frac = graph.num_edges / m_max if m_max > 0 else 0.0

    eps = rng.normal(0.0, noise_sigma, size=3) if noise_sigma > 0 else np.zeros(3)
    clean = 0.5 * depth_term + 0.5 * cheap_frac + eps[0]
    noisy = clean - 0.1 * code1_frac + eps[1]
    inference = 1.0 - edge_frac + eps[2]
    return PerformanceRecord(
        clean_acc=float(clean),
        noisy_acc=float(noisy),
        inference_speed=float(inference),
        convergence_speed=float(clean),
    )


def generate_synthetic(count: int, max_nodes: int, edge_density: float,
                       noise_sigma: float, seed: int) -> list:
    """Generate `count` random labeled DAGs.

    Edges are drawn between positions of a random node permutation
    (lower to higher position, each pair kept with probability
    edge_density), which guarantees acyclicity after relabeling.
    """
    if count < 1:
        raise InvalidSpec(f"count must be >= 1, got {count}")
    if max_nodes < 2:
        raise InvalidSpec(f"max_nodes must be >= 2, got {max_nodes}")
    if not (0.0 < edge_density <= 1.0):
        raise InvalidSpec(f"edge_density must be in (0, 1], got {edge_density}")
    if noise_sigma < 0:
        raise InvalidSpec(f"noise_sigma must be >= 0, got {noise_sigma}")

    rng = np.random.default_rng(seed)
    width = len(str(count))
    records = []
    for k in range(count):
        n = int(rng.integers(2, max_nodes + 1))
        ops = rng.integers(1, NUM_PRIMITIVES + 1, size=n)
        perm = rng.permutation(n)
        edges = []
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < edge_density:
                    edges.append((int(perm[i]), int(perm[j])))
        graph = make_graph(n, ops, edges)
        targets = synthetic_targets(graph, noise_sigma, rng)
        records.append(LabeledGraph(graph=graph, targets=targets, id=f"g{k:0{width}d}"))
    return records
