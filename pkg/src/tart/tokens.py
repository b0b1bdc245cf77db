"""Token-matrix assembly, batching with padding masks, and the binary dump format.

A tokenized graph is an (N+M) x (d_f + 2*d_p + 4) matrix: node rows first
(feature scalar, positional block duplicated, identifier [0,1,-1,-1]),
then edge rows in lexicographic (u,v) order (constant feature 1.0, the two
endpoint positional blocks, identifier [1,0,u,v]). The node-only variant
keeps just the node rows with zeroed positional blocks.
"""
from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .graphs import NUM_PRIMITIVES, ComputationalGraph
from .spectral import SpectralFeatures, graph_lap_features

DEFAULT_D_P = 3
IDENTIFIER_WIDTH = 4

TOKEN_MAGIC = b"TART"
TOKEN_FORMAT_VERSION = 1
TAG_NODE, TAG_EDGE, TAG_PAD = 0, 1, 2


class TokenizerError(ValueError):
    pass


class FeatureGraphMismatch(TokenizerError):
    def __init__(self, feats_n: int, graph_n: int):
        super().__init__(f"spectral features cover {feats_n} nodes, graph has {graph_n}")


class RowOverflow(TokenizerError):
    def __init__(self, index, rows: int, r_max: int):
        super().__init__(f"matrix {index}: {rows} rows exceed R_max={r_max}")


class WidthMismatch(TokenizerError):
    pass


def token_width(d_f: int, d_p: int) -> int:
    return d_f + 2 * d_p + IDENTIFIER_WIDTH


@dataclass(frozen=True)
class TokenMatrix:
    data: np.ndarray
    d_f: int
    d_p: int
    row_kinds: tuple

    @property
    def num_rows(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class PaddedBatch:
    tokens: np.ndarray  # B x R_max x C
    mask: np.ndarray    # B x R_max, True = real token


def _node_feature(code: int, raw_codes: bool) -> float:
    return float(code) if raw_codes else code / NUM_PRIMITIVES


def tokenize_lap(graph: ComputationalGraph, feats: SpectralFeatures,
                 d_f: int = 1, d_p: int = DEFAULT_D_P,
                 raw_codes: bool = False, normalize_ids: bool = False) -> TokenMatrix:
    """Assemble the full node+edge token matrix from precomputed positional features."""
    if d_f != 1:
        raise TokenizerError(f"only d_f=1 is supported, got {d_f}")
    if feats.num_nodes != graph.num_nodes:
        raise FeatureGraphMismatch(feats.num_nodes, graph.num_nodes)
    if feats.d_p != d_p:
        raise FeatureGraphMismatch(feats.d_p, d_p)

    n, m = graph.num_nodes, graph.num_edges
    width = token_width(d_f, d_p)
    data = np.zeros((n + m, width), dtype=np.float64)
    kinds = []

    id_scale = float(max(graph.num_nodes - 1, 1)) if normalize_ids else 1.0
    for i in range(n):
        data[i, 0] = _node_feature(graph.node_ops[i], raw_codes)
        data[i, 1:1 + d_p] = feats.P[i]
        data[i, 1 + d_p:1 + 2 * d_p] = feats.P[i]
        data[i, -4:] = (0.0, 1.0, -1.0, -1.0)
        kinds.append(("node", i))

    for row, (u, v) in enumerate(sorted(graph.edges), start=n):
        data[row, 0] = 1.0
        data[row, 1:1 + d_p] = feats.P[u]
        data[row, 1 + d_p:1 + 2 * d_p] = feats.P[v]
        data[row, -4:] = (1.0, 0.0, u / id_scale, v / id_scale)
        kinds.append(("edge", u, v))

    return TokenMatrix(data=data, d_f=d_f, d_p=d_p, row_kinds=tuple(kinds))


def tokenize_node_only(graph: ComputationalGraph, d_f: int = 1, d_p: int = DEFAULT_D_P,
                       raw_codes: bool = False) -> TokenMatrix:
    """Node rows only, positional blocks zeroed: the adjacency-blind baseline encoding."""
    if d_f != 1:
        raise TokenizerError(f"only d_f=1 is supported, got {d_f}")
    n = graph.num_nodes
    width = token_width(d_f, d_p)
    data = np.zeros((n, width), dtype=np.float64)
    kinds = []
    for i in range(n):
        data[i, 0] = _node_feature(graph.node_ops[i], raw_codes)
        data[i, -4:] = (0.0, 1.0, -1.0, -1.0)
        kinds.append(("node", i))
    return TokenMatrix(data=data, d_f=d_f, d_p=d_p, row_kinds=tuple(kinds))


def decode_row_kinds(matrix: TokenMatrix) -> tuple:
    """Recover row kinds from the trailing identifier columns alone."""
    kinds = []
    node_index = 0
    for row in matrix.data:
        is_edge, is_node, a, b = row[-4:]
        if is_node == 1.0 and is_edge == 0.0 and a == -1.0 and b == -1.0:
            kinds.append(("node", node_index))
            node_index += 1
        elif is_edge == 1.0 and is_node == 0.0:
            kinds.append(("edge", int(a), int(b)))
        else:
            raise TokenizerError(f"unrecognized identifier columns: {row[-4:]}")
    return tuple(kinds)


def tokenize_graph(graph: ComputationalGraph, mode: str, d_p: int = DEFAULT_D_P,
                   sign_convention="first_nonzero_positive",
                   operator: str = "laplacian", keep_trivial: bool = False,
                   raw_codes: bool = False, normalize_ids: bool = False) -> TokenMatrix:
    """One-stop tokenization: 'lap' (positional features included) or 'node-only'."""
    if mode == "node-only":
        return tokenize_node_only(graph, d_p=d_p, raw_codes=raw_codes)
    if mode == "lap":
        feats = graph_lap_features(graph, d_p, convention=sign_convention,
                                   operator=operator, keep_trivial=keep_trivial)
        return tokenize_lap(graph, feats, d_p=d_p, raw_codes=raw_codes,
                            normalize_ids=normalize_ids)
    raise TokenizerError(f"unknown tokenization mode: {mode!r}")


def tokenize_many(graphs, mode: str, d_p: int = DEFAULT_D_P, jobs: int = 1, **kwargs) -> list:
    """Tokenize a sequence of graphs, optionally across threads.

    Output order always matches input order regardless of jobs.
    """
    if jobs is None or jobs <= 1:
        return [tokenize_graph(g, mode, d_p=d_p, **kwargs) for g in graphs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda g: tokenize_graph(g, mode, d_p=d_p, **kwargs), graphs))


def pad_batch(matrices, r_max: int) -> PaddedBatch:
    """Zero-pad token matrices to a common row count with a validity mask."""
    if not matrices:
        raise TokenizerError("empty batch")
    width = matrices[0].width
    for i, tm in enumerate(matrices):
        if tm.width != width:
            raise WidthMismatch(f"matrix {i} has width {tm.width}, expected {width}")
        if tm.num_rows > r_max:
            raise RowOverflow(i, tm.num_rows, r_max)
    batch = np.zeros((len(matrices), r_max, width), dtype=np.float64)
    mask = np.zeros((len(matrices), r_max), dtype=bool)
    for i, tm in enumerate(matrices):
        batch[i, : tm.num_rows] = tm.data
        mask[i, : tm.num_rows] = True
    return PaddedBatch(tokens=batch, mask=mask)


def one_hot_element_count(graph: ComputationalGraph) -> int:
    """Element count of the baseline one-hot encoding: N x 15 features plus N x N adjacency."""
    n = graph.num_nodes
    return n * NUM_PRIMITIVES + n * n


# -- Binary dump format -------------------------------------------------------

def _row_tags(matrix: TokenMatrix) -> bytes:
    return bytes(TAG_NODE if kind[0] == "node" else TAG_EDGE for kind in matrix.row_kinds)


def write_token_file(path, entries) -> None:
    """Write (id, TokenMatrix) pairs as the little-endian binary token dump."""
    entries = list(entries)
    with open(path, "wb") as fh:
        fh.write(TOKEN_MAGIC)
        fh.write(struct.pack("<II", TOKEN_FORMAT_VERSION, len(entries)))
        for rec_id, tm in entries:
            id_bytes = rec_id.encode("utf-8")
            fh.write(struct.pack("<I", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(struct.pack("<II", tm.num_rows, tm.width))
            fh.write(np.ascontiguousarray(tm.data, dtype="<f8").tobytes())
            fh.write(_row_tags(tm))


def read_token_file(path) -> list:
    """Read the binary token dump back as (id, data array, tag bytes) triples."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != TOKEN_MAGIC:
        raise TokenizerError("bad magic in token file")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != TOKEN_FORMAT_VERSION:
        raise TokenizerError(f"unsupported token file version {version}")
    offset = 12
    out = []
    for _ in range(count):
        (id_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        rec_id = blob[offset:offset + id_len].decode("utf-8")
        offset += id_len
        rows, cols = struct.unpack_from("<II", blob, offset)
        offset += 8
        data = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=offset)
        data = data.reshape(rows, cols).astype(np.float64)
        offset += rows * cols * 8
        tags = blob[offset:offset + rows]
        offset += rows
        out.append((rec_id, data, tags))
    if offset != len(blob):
        raise TokenizerError("trailing bytes in token file")
    return out
