"""Siamese branch: two message-passing layers, mean readout, MLP to a 2-D embedding.

Everything runs in float64 numpy with hand-written reverse-mode gradients.
Graphs are processed as a disjoint union (``GraphBatch``) so a whole
training batch costs a handful of array operations.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .graph_builder import EDGE_DIM, NODE_DIM, SceneGraph

HIDDEN = 6
OUT_DIM = 2
CHECKPOINT_VERSION = 1

# fixed input scaling: speed / 5 m/s, yaw / pi, frenet distance / 20 m
DEFAULT_NODE_SCALE = (5.0, math.pi, 1.0, 1.0, 1.0, 1.0)
DEFAULT_EDGE_SCALE = (1.0, 1.0, 1.0, 20.0, 1.0, 1.0, 1.0)

# largest double below 1; float64 tanh rounds to exactly +-1 once |z| > ~19
_OPEN_UNIT = float(np.nextafter(1.0, 0.0))

LAYER_SHAPES = {
    "mp1_message": (HIDDEN, 2 * NODE_DIM + EDGE_DIM),
    "mp1_update": (HIDDEN, NODE_DIM + HIDDEN),
    "mp2_message": (HIDDEN, 2 * HIDDEN),
    "mp2_update": (HIDDEN, 2 * HIDDEN),
    "mlp_hidden": (HIDDEN, HIDDEN),
    "mlp_out": (OUT_DIM, HIDDEN),
}


class ShapeError(ValueError):
    pass


@dataclass
class LinearLayer:
    weight: np.ndarray
    bias: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight.T + self.bias


@dataclass
class EncoderParams:
    layers: dict[str, LinearLayer]
    leaky_slope: float = 0.01
    init_seed: int | None = None
    # not trained; features are divided by these before the first layer
    node_scale: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_NODE_SCALE))
    edge_scale: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_EDGE_SCALE))

    def __post_init__(self):
        self.node_scale = np.asarray(self.node_scale, dtype=float)
        self.edge_scale = np.asarray(self.edge_scale, dtype=float)
        self.validate()

    def validate(self) -> None:
        if set(self.layers) != set(LAYER_SHAPES):
            raise ShapeError(f"expected layers {sorted(LAYER_SHAPES)}, got {sorted(self.layers)}")
        for name, (out_dim, in_dim) in LAYER_SHAPES.items():
            layer = self.layers[name]
            if layer.weight.shape != (out_dim, in_dim) or layer.bias.shape != (out_dim,):
                raise ShapeError(
                    f"{name}: expected weight {(out_dim, in_dim)} and bias {(out_dim,)}, "
                    f"got {layer.weight.shape} and {layer.bias.shape}"
                )
            if not (np.all(np.isfinite(layer.weight)) and np.all(np.isfinite(layer.bias))):
                raise ValueError(f"{name}: non-finite parameters")
        if self.node_scale.shape != (NODE_DIM,) or self.edge_scale.shape != (EDGE_DIM,):
            raise ShapeError("node_scale / edge_scale must have 6 / 7 entries")
        if np.any(self.node_scale <= 0) or np.any(self.edge_scale <= 0):
            raise ValueError("feature scales must be positive")

    def __getattr__(self, name):
        layers = self.__dict__.get("layers")
        if layers is not None and name in layers:
            return layers[name]
        raise AttributeError(name)

    def arrays(self) -> dict[str, np.ndarray]:
        """Flat name -> array view, e.g. ``mp1_message.weight``."""
        out = {}
        for name in LAYER_SHAPES:
            out[f"{name}.weight"] = self.layers[name].weight
            out[f"{name}.bias"] = self.layers[name].bias
        return out

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            {k: LinearLayer(v.weight.copy(), v.bias.copy()) for k, v in self.layers.items()},
            self.leaky_slope,
            self.init_seed,
            self.node_scale.copy(),
            self.edge_scale.copy(),
        )

    def zeros_like(self) -> "EncoderParams":
        return EncoderParams(
            {k: LinearLayer(np.zeros_like(v.weight), np.zeros_like(v.bias)) for k, v in self.layers.items()},
            self.leaky_slope,
            self.init_seed,
            self.node_scale.copy(),
            self.edge_scale.copy(),
        )

    def num_parameters(self) -> int:
        return sum(a.size for a in self.arrays().values())


def init_params(seed: int, leaky_slope: float = 0.01) -> EncoderParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    layers = {}
    for name, (out_dim, in_dim) in LAYER_SHAPES.items():
        bound = math.sqrt(6.0 / (in_dim + out_dim))
        layers[name] = LinearLayer(rng.uniform(-bound, bound, size=(out_dim, in_dim)), np.zeros(out_dim))
    return EncoderParams(layers, leaky_slope, seed)


def zero_params(leaky_slope: float = 0.01) -> EncoderParams:
    return EncoderParams({n: LinearLayer(np.zeros(s), np.zeros(s[0])) for n, s in LAYER_SHAPES.items()}, leaky_slope)


class Embedding(NamedTuple):
    sx: float
    sy: float


@dataclass
class GraphBatch:
    """Disjoint union of graphs with global node indices."""

    x: np.ndarray  # (N, 6)
    edge_feat: np.ndarray  # (E, 7)
    src: np.ndarray
    dst: np.ndarray
    node_graph: np.ndarray  # graph index of every node
    counts: np.ndarray  # nodes per graph
    scene_ids: list[str] = field(default_factory=list)

    @property
    def num_graphs(self) -> int:
        return len(self.counts)

    @classmethod
    def from_graphs(cls, graphs) -> "GraphBatch":
        graphs = list(graphs)
        if not graphs:
            raise ValueError("empty graph batch")
        for g in graphs:
            if g.node_features.shape[1:] != (NODE_DIM,) or g.edge_features.shape[1:] != (EDGE_DIM,):
                raise ShapeError(f"graph {g.scene_id}: expected {NODE_DIM}-dim nodes and {EDGE_DIM}-dim edges")
            if g.num_nodes == 0:
                raise ValueError(f"graph {g.scene_id}: no nodes")
        counts = np.array([g.num_nodes for g in graphs], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
        return cls(
            x=np.concatenate([g.node_features for g in graphs]),
            edge_feat=np.concatenate([g.edge_features for g in graphs]),
            src=np.concatenate([g.edge_src + o for g, o in zip(graphs, offsets)]),
            dst=np.concatenate([g.edge_dst + o for g, o in zip(graphs, offsets)]),
            node_graph=np.repeat(np.arange(len(graphs)), counts),
            counts=counts,
            scene_ids=[g.scene_id for g in graphs],
        )


def _leaky(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0, z, slope * z)


def _leaky_grad(z: np.ndarray, slope: float) -> np.ndarray:
    # derivative at exactly 0 is the slope
    return np.where(z > 0, 1.0, slope)


def _scatter_sum(values: np.ndarray, index: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, values.shape[1]))
    np.add.at(out, index, values)
    return out


def forward_batch(params: EncoderParams, batch: GraphBatch) -> tuple[np.ndarray, dict]:
    """Embeddings ``(G, 2)`` for every graph in the batch plus the trace for backward."""
    a = params.leaky_slope
    L = params.layers
    n = len(batch.x)
    t = {"batch": batch}

    x0 = batch.x / params.node_scale
    edge = batch.edge_feat / params.edge_scale
    t["m1_in"] = np.concatenate([x0[batch.dst], x0[batch.src], edge], axis=1)
    t["m1_z"] = L["mp1_message"](t["m1_in"])
    agg1 = _scatter_sum(_leaky(t["m1_z"], a), batch.dst, n)
    t["u1_in"] = np.concatenate([x0, agg1], axis=1)
    t["u1_z"] = L["mp1_update"](t["u1_in"])
    x1 = _leaky(t["u1_z"], a)

    t["m2_in"] = np.concatenate([x1[batch.dst], x1[batch.src]], axis=1)
    t["m2_z"] = L["mp2_message"](t["m2_in"])
    agg2 = _scatter_sum(_leaky(t["m2_z"], a), batch.dst, n)
    t["u2_in"] = np.concatenate([x1, agg2], axis=1)
    t["u2_z"] = L["mp2_update"](t["u2_in"])
    x2 = _leaky(t["u2_z"], a)

    t["readout"] = _scatter_sum(x2, batch.node_graph, batch.num_graphs) / batch.counts[:, None]
    t["h_z"] = L["mlp_hidden"](t["readout"])
    t["h"] = _leaky(t["h_z"], a)
    # keep embeddings strictly inside (-1, 1) even when tanh saturates
    out = np.clip(np.tanh(L["mlp_out"](t["h"])), -_OPEN_UNIT, _OPEN_UNIT)
    t["out"] = out
    return out, t


def backward_batch(params: EncoderParams, trace: dict, grad_out: np.ndarray) -> EncoderParams:
    """Gradients of ``sum(grad_out * embeddings)`` with respect to every parameter."""
    a = params.leaky_slope
    L = params.layers
    batch: GraphBatch = trace["batch"]
    n = len(batch.x)
    grads = {}

    def linear_grad(name, dz, inp):
        grads[name] = LinearLayer(dz.T @ inp, dz.sum(axis=0))
        return dz @ L[name].weight

    d_o = np.asarray(grad_out, dtype=float).reshape(-1, OUT_DIM) * (1.0 - trace["out"] ** 2)
    d_h = linear_grad("mlp_out", d_o, trace["h"])
    d_readout = linear_grad("mlp_hidden", d_h * _leaky_grad(trace["h_z"], a), trace["readout"])

    d_x2 = (d_readout / batch.counts[:, None])[batch.node_graph]
    d_u2_in = linear_grad("mp2_update", d_x2 * _leaky_grad(trace["u2_z"], a), trace["u2_in"])
    d_x1 = d_u2_in[:, :HIDDEN].copy()
    d_m2 = d_u2_in[batch.dst, HIDDEN:]
    d_m2_in = linear_grad("mp2_message", d_m2 * _leaky_grad(trace["m2_z"], a), trace["m2_in"])
    d_x1 += _scatter_sum(d_m2_in[:, :HIDDEN], batch.dst, n)
    d_x1 += _scatter_sum(d_m2_in[:, HIDDEN:], batch.src, n)

    d_u1_in = linear_grad("mp1_update", d_x1 * _leaky_grad(trace["u1_z"], a), trace["u1_in"])
    d_m1 = d_u1_in[batch.dst, NODE_DIM:]
    linear_grad("mp1_message", d_m1 * _leaky_grad(trace["m1_z"], a), trace["m1_in"])
    return EncoderParams(grads, params.leaky_slope, params.init_seed, params.node_scale, params.edge_scale)


def forward(params: EncoderParams, graph: SceneGraph) -> tuple[Embedding, dict]:
    out, trace = forward_batch(params, GraphBatch.from_graphs([graph]))
    return Embedding(float(out[0, 0]), float(out[0, 1])), trace


def backward(params: EncoderParams, trace: dict, grad_embedding) -> EncoderParams:
    return backward_batch(params, trace, np.asarray(grad_embedding, dtype=float).reshape(1, OUT_DIM))


def embed(params: EncoderParams, graphs) -> np.ndarray:
    graphs = list(graphs)
    if not graphs:
        return np.zeros((0, OUT_DIM))
    return forward_batch(params, GraphBatch.from_graphs(graphs))[0]


def relative_error(analytic: float, numeric: float, floor: float = 1e-12) -> float:
    return abs(analytic - numeric) / max(floor, abs(analytic) + abs(numeric))


def numeric_gradient(params: EncoderParams, loss_fn, epsilon: float) -> dict[str, np.ndarray]:
    """Central differences of ``loss_fn(params) -> float`` for every scalar parameter.

    Parameters are nudged by ``+-epsilon`` in place and restored afterwards.
    """
    out = {}
    for name, arr in params.arrays().items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + epsilon
            up = loss_fn(params)
            arr[idx] = orig - epsilon
            down = loss_fn(params)
            arr[idx] = orig
            g[idx] = (up - down) / (2.0 * epsilon)
        out[name] = g
    return out


def max_relative_error(analytic: EncoderParams, numeric: dict[str, np.ndarray], floor: float = 1e-12) -> float:
    worst = 0.0
    for name, g in analytic.arrays().items():
        for a, n in zip(g.ravel(), numeric[name].ravel()):
            worst = max(worst, relative_error(float(a), float(n), floor))
    return worst


def finite_difference_check(params: EncoderParams, loss_fn, analytic: EncoderParams, epsilon: float,
                            floor: float = 1e-12) -> float:
    """Max relative error between ``analytic`` and central differences of ``loss_fn``."""
    return max_relative_error(analytic, numeric_gradient(params, loss_fn, epsilon), floor)


def kink_margin(trace: dict) -> float:
    """Smallest absolute pre-activation feeding a LeakyReLU.

    Central differences are only meaningful when no perturbation can push a
    unit across its kink, so gradient checks should skip near-zero margins.
    """
    return float(min(np.abs(trace[k]).min() for k in ("m1_z", "u1_z", "m2_z", "u2_z", "h_z") if trace[k].size))


PROBE = np.array([1.0, 2.0])


def grad_check(params: EncoderParams, graph: SceneGraph, epsilon: float = 1e-5) -> float:
    """Backward vs central differences on the probe ``sx + 2*sy``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    params = params.copy()
    batch = GraphBatch.from_graphs([graph])
    _, trace = forward_batch(params, batch)
    analytic = backward_batch(params, trace, PROBE)

    def probe(p):
        return float(forward_batch(p, batch)[0][0] @ PROBE)

    return finite_difference_check(params, probe, analytic, epsilon)


def params_to_dict(params: EncoderParams) -> dict:
    return {
        "format_version": CHECKPOINT_VERSION,
        "init_seed": params.init_seed,
        "leaky_slope": params.leaky_slope,
        "node_scale": params.node_scale.tolist(),
        "edge_scale": params.edge_scale.tolist(),
        "layers": {
            name: {
                "shape": list(LAYER_SHAPES[name]),
                "weights": params.layers[name].weight.ravel().tolist(),
                "bias": params.layers[name].bias.tolist(),
            }
            for name in LAYER_SHAPES
        },
    }


def params_from_dict(data: dict) -> EncoderParams:
    if data.get("format_version") != CHECKPOINT_VERSION:
        raise ShapeError(f"unsupported checkpoint format_version {data.get('format_version')!r}")
    layers = {}
    for name, spec in data["layers"].items():
        if name not in LAYER_SHAPES:
            raise ShapeError(f"unknown layer {name!r}")
        shape = tuple(spec["shape"])
        if shape != LAYER_SHAPES[name]:
            raise ShapeError(f"{name}: checkpoint shape {shape}, expected {LAYER_SHAPES[name]}")
        w = np.asarray(spec["weights"], dtype=float)
        if w.size != shape[0] * shape[1]:
            raise ShapeError(f"{name}: {w.size} weights for shape {shape}")
        layers[name] = LinearLayer(w.reshape(shape), np.asarray(spec["bias"], dtype=float))
    return EncoderParams(
        layers,
        float(data["leaky_slope"]),
        data.get("init_seed"),
        data.get("node_scale", DEFAULT_NODE_SCALE),
        data.get("edge_scale", DEFAULT_EDGE_SCALE),
    )


def save_checkpoint(params: EncoderParams, path) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params), indent=1))


def load_checkpoint(path) -> EncoderParams:
    return params_from_dict(json.loads(Path(path).read_text()))
