"""
Message-passing GNN with sum aggregation, evaluated with numpy.

Each graph layer maps node states H (N x d_in) to
    act(H W_self^T + Adj H W_neigh^T + bias)
where Adj is the off-diagonal adjacency. Node states are pooled (sum, or
mean) and fed through a dense head ending in one output unit.

``propagate_bounds`` computes interval bounds on every pre- and
post-activation value, as needed for big-M constants.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import ARCHITECTURES, ERROR_MESSAGES
from utils.camd import DesignSpace, MolecularGraph
from utils.errors import DomainError, ModelFormatError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "identity")
POOLINGS = ("sum", "mean")


def _apply_activation(values: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(values, 0.0)
    return values


def _as_matrix(value: Any, location: str) -> np.ndarray:
    try:
        matrix = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelFormatError(ERROR_MESSAGES["model_format"].format(location=location, reason="not a numeric matrix"), location)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ModelFormatError(ERROR_MESSAGES["model_format"].format(location=location, reason=f"expected a non-empty matrix, got shape {matrix.shape}"), location)
    if not np.all(np.isfinite(matrix)):
        raise ModelFormatError(ERROR_MESSAGES["model_format"].format(location=location, reason="non-finite entries"), location)
    matrix.setflags(write=False)
    return matrix


def _as_vector(value: Any, width: int, location: str) -> np.ndarray:
    try:
        vector = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelFormatError(ERROR_MESSAGES["model_format"].format(location=location, reason="not a numeric vector"), location)
    if vector.shape != (width,) or not np.all(np.isfinite(vector)):
        raise ModelFormatError(ERROR_MESSAGES["model_format"].format(location=location, reason=f"expected {width} finite values, got shape {vector.shape}"), location)
    vector.setflags(write=False)
    return vector


def _check_activation(value: Any, location: str) -> str:
    if value not in ACTIVATIONS:
        raise ModelFormatError(ERROR_MESSAGES["model_format"].format(location=location, reason=f"unknown activation {value!r}"), location)
    return value


@dataclass(frozen=True)
class GraphLayer:
    w_self: np.ndarray
    w_neigh: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    @property
    def in_width(self) -> int:
        return self.w_self.shape[1]

    @property
    def out_width(self) -> int:
        return self.w_self.shape[0]


@dataclass(frozen=True)
class DenseLayer:
    w: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    @property
    def in_width(self) -> int:
        return self.w.shape[1]

    @property
    def out_width(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class GnnModel:
    """Validated, immutable GNN. Consecutive widths chain and the output width is 1."""
    graph_layers: Tuple[GraphLayer, ...]
    dense_layers: Tuple[DenseLayer, ...]
    pooling: str = "sum"

    def __post_init__(self):
        object.__setattr__(self, "graph_layers", tuple(self.graph_layers))
        object.__setattr__(self, "dense_layers", tuple(self.dense_layers))
        if not self.graph_layers:
            raise ModelFormatError(ERROR_MESSAGES["model_format"].format(location="graph_layers", reason="at least one graph layer is required"), "graph_layers")
        if not self.dense_layers:
            raise ModelFormatError(ERROR_MESSAGES["model_format"].format(location="dense_layers", reason="at least one dense layer is required"), "dense_layers")
        if self.pooling not in POOLINGS:
            raise ModelFormatError(ERROR_MESSAGES["model_format"].format(location="pooling", reason=f"unknown pooling {self.pooling!r}"), "pooling")

        width = self.graph_layers[0].in_width
        for i, layer in enumerate(self.graph_layers):
            for name in ("w_self", "w_neigh"):
                location = f"graph_layers[{i}].{name}"
                if getattr(layer, name).shape != (layer.out_width, width):
                    raise ModelFormatError(ERROR_MESSAGES["model_format"].format(
                        location=location, reason=f"expected shape {(layer.out_width, width)}, got {getattr(layer, name).shape}"), location)
            width = layer.out_width
        for i, layer in enumerate(self.dense_layers):
            location = f"dense_layers[{i}].w"
            if layer.in_width != width:
                raise ModelFormatError(ERROR_MESSAGES["model_format"].format(
                    location=location, reason=f"expected {width} inputs, got {layer.in_width}"), location)
            width = layer.out_width
        if width != 1:
            location = f"dense_layers[{len(self.dense_layers) - 1}].w"
            raise ModelFormatError(ERROR_MESSAGES["model_format"].format(location=location, reason=f"final output width must be 1, got {width}"), location)

    @property
    def input_width(self) -> int:
        return self.graph_layers[0].in_width

    @property
    def pooled_width(self) -> int:
        return self.graph_layers[-1].out_width


def model_from_dict(data: Dict[str, Any]) -> GnnModel:
    """Build a model from the weight-file document, reporting errors by location."""
    if not isinstance(data, dict):
        raise ModelFormatError(ERROR_MESSAGES["model_format"].format(location="<root>", reason="expected an object"), "<root>")
    graph_layers = []
    for i, entry in enumerate(data.get("graph_layers") or []):
        base = f"graph_layers[{i}]"
        if not isinstance(entry, dict):
            raise ModelFormatError(ERROR_MESSAGES["model_format"].format(location=base, reason="expected an object"), base)
        if "w_edge" in entry:
            raise ModelFormatError(ERROR_MESSAGES["model_format"].format(
                location=f"{base}.w_edge", reason="per-edge weights are not supported"), f"{base}.w_edge")
        for key in ("w_self", "w_neigh", "bias"):
            if key not in entry:
                raise ModelFormatError(ERROR_MESSAGES["model_format"].format(location=f"{base}.{key}", reason="missing"), f"{base}.{key}")
        w_self = _as_matrix(entry["w_self"], f"{base}.w_self")
        w_neigh = _as_matrix(entry["w_neigh"], f"{base}.w_neigh")
        bias = _as_vector(entry["bias"], w_self.shape[0], f"{base}.bias")
        activation = _check_activation(entry.get("activation", "relu"), f"{base}.activation")
        graph_layers.append(GraphLayer(w_self, w_neigh, bias, activation))

    dense_layers = []
    for i, entry in enumerate(data.get("dense_layers") or []):
        base = f"dense_layers[{i}]"
        if not isinstance(entry, dict) or "w" not in entry or "bias" not in entry:
            raise ModelFormatError(ERROR_MESSAGES["model_format"].format(location=base, reason="expected an object with w and bias"), base)
        w = _as_matrix(entry["w"], f"{base}.w")
        bias = _as_vector(entry["bias"], w.shape[0], f"{base}.bias")
        activation = _check_activation(entry.get("activation", "relu"), f"{base}.activation")
        dense_layers.append(DenseLayer(w, bias, activation))

    return GnnModel(tuple(graph_layers), tuple(dense_layers), data.get("pooling", "sum"))


def load_model(path: str) -> GnnModel:
    """
    Load a weight file.

    Args:
        path: JSON document with graph_layers[] {w_self, w_neigh, bias, activation},
            dense_layers[] {w, bias, activation} and optional pooling

    Returns:
        Validated GnnModel
    """
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ModelFormatError(ERROR_MESSAGES["model_format"].format(location=f"line {e.lineno}", reason=e.msg), f"line {e.lineno}")
    model = model_from_dict(data)
    logger.info(f"Loaded model from {path}: graph widths "
                f"{[model.input_width] + [layer.out_width for layer in model.graph_layers]}, "
                f"dense widths {[layer.out_width for layer in model.dense_layers]}")
    return model


def model_to_dict(model: GnnModel) -> Dict[str, Any]:
    return {
        "pooling": model.pooling,
        "graph_layers": [
            {"w_self": layer.w_self.tolist(), "w_neigh": layer.w_neigh.tolist(),
             "bias": layer.bias.tolist(), "activation": layer.activation}
            for layer in model.graph_layers
        ],
        "dense_layers": [
            {"w": layer.w.tolist(), "bias": layer.bias.tolist(), "activation": layer.activation}
            for layer in model.dense_layers
        ],
    }


def save_model(model: GnnModel, path: str) -> None:
    with open(path, "w") as f:
        json.dump(model_to_dict(model), f, indent=2)
        f.write("\n")


def random_model(graph_widths: Sequence[int], dense_widths: Sequence[int], seed: int = 0,
                 pooling: str = "sum") -> GnnModel:
    """
    Random weights for a given skeleton.

    Args:
        graph_widths: Input width followed by each graph layer's output width
        dense_widths: Pooled width followed by each dense layer's output width (last = 1)
        seed: Random seed
        pooling: "sum" or "mean"

    Returns:
        GnnModel with ReLU everywhere except an identity output layer
    """
    if len(graph_widths) < 2 or len(dense_widths) < 2 or graph_widths[-1] != dense_widths[0]:
        raise DomainError(f"Widths {tuple(graph_widths)} | {tuple(dense_widths)} do not chain")
    rng = np.random.default_rng(seed)

    def draw(rows: int, cols: int) -> np.ndarray:
        return rng.normal(0.0, 1.0 / np.sqrt(cols), size=(rows, cols))

    graph_layers = tuple(
        GraphLayer(draw(d_out, d_in), draw(d_out, d_in), rng.normal(0.0, 0.1, size=d_out), "relu")
        for d_in, d_out in zip(graph_widths, graph_widths[1:])
    )
    dense_pairs = list(zip(dense_widths, dense_widths[1:]))
    dense_layers = tuple(
        DenseLayer(draw(d_out, d_in), rng.normal(0.0, 0.1, size=d_out),
                   "identity" if i == len(dense_pairs) - 1 else "relu")
        for i, (d_in, d_out) in enumerate(dense_pairs)
    )
    return GnnModel(graph_layers, dense_layers, pooling)


def architecture_skeleton(dataset: str, seed: int = 0) -> GnnModel:
    """Random-weight model with the layer widths used for a dataset."""
    try:
        widths = ARCHITECTURES[dataset.lower()]
    except KeyError:
        raise DomainError(f"Unknown dataset {dataset!r}; expected one of {sorted(ARCHITECTURES)}")
    return random_model(widths["graph"], widths["dense"], seed)


@dataclass
class ForwardTrace:
    """Pre/post-activation values of every layer for one input."""
    graph: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    pooled: Optional[np.ndarray] = None
    dense: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def output(self) -> float:
        return float(self.dense[-1][1][0])


Inputs = Union[MolecularGraph, Tuple[np.ndarray, np.ndarray]]


def _unpack(mol: Inputs) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(mol, MolecularGraph):
        features, adj = mol.X, mol.A
    else:
        features, adj = mol
    features = np.asarray(features, dtype=float)
    adj = np.asarray(adj, dtype=float).copy()
    np.fill_diagonal(adj, 0.0)
    return features, adj


def forward_trace(model: GnnModel, mol: Inputs) -> ForwardTrace:
    """
    Evaluate the model and keep every intermediate value.

    Args:
        model: GNN
        mol: Molecule, or a (features, adjacency) pair

    Returns:
        ForwardTrace
    """
    features, adj = _unpack(mol)
    if features.shape[1] != model.input_width:
        raise DomainError(ERROR_MESSAGES["width_mismatch"].format(
            model_width=model.input_width, feature_count=features.shape[1]))
    trace = ForwardTrace()
    h = features
    for layer in model.graph_layers:
        pre = h @ layer.w_self.T + adj @ h @ layer.w_neigh.T + layer.bias
        h = _apply_activation(pre, layer.activation)
        trace.graph.append((pre, h))
    pooled = h.sum(axis=0)
    if model.pooling == "mean":
        pooled = pooled / h.shape[0]
    trace.pooled = pooled
    x = pooled
    for layer in model.dense_layers:
        pre = layer.w @ x + layer.bias
        x = _apply_activation(pre, layer.activation)
        trace.dense.append((pre, x))
    return trace


def forward(model: GnnModel, mol: Inputs) -> float:
    return forward_trace(model, mol).output


def layer_as_dense(layer: GraphLayer, adj: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    With the graph fixed, a graph layer is one affine map on the stacked node
    states; returns its (N*d_out x N*d_in) matrix and bias.
    """
    adj = np.asarray(adj, dtype=float).copy()
    np.fill_diagonal(adj, 0.0)
    n = adj.shape[0]
    weight = np.kron(np.eye(n), layer.w_self) + np.kron(adj, layer.w_neigh)
    return weight, np.tile(layer.bias, n)


@dataclass
class Interval:
    lo: np.ndarray
    hi: np.ndarray


@dataclass
class LayerBounds:
    pre: Interval
    post: Interval


@dataclass
class BoundsTensor:
    """
    Interval bounds per layer. ``graph[l]`` arrays are N x d_l; ``inputs``
    holds the feature bounds; ``pooled`` and ``dense`` are vectors.
    """
    inputs: Interval
    graph: List[LayerBounds]
    pooled: Interval
    dense: List[LayerBounds]

    def node_post(self, l: int) -> Interval:
        """Post-activation bounds of graph layer l, with l = 0 meaning the inputs."""
        return self.inputs if l == 0 else self.graph[l - 1].post


def _affine_interval(w: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    wp = np.maximum(w, 0.0)
    wn = np.minimum(w, 0.0)
    return lo @ wp.T + hi @ wn.T, hi @ wp.T + lo @ wn.T


def _activation_interval(lo: np.ndarray, hi: np.ndarray, activation: str) -> Interval:
    return Interval(_apply_activation(lo, activation), _apply_activation(hi, activation))


def propagate_bounds(model: GnnModel, space: Union[DesignSpace, int]) -> BoundsTensor:
    """
    Interval bounds on every activation over all binary inputs and graphs.

    Each potential neighbor contributes an interval widened to contain 0
    (the edge may be absent); a node sums at most ``max_neighbors`` such
    contributions, taking the widest ones.

    Args:
        model: GNN
        space: Design space (neighbors capped by the neighbor-count features)
            or a plain node count (no cap beyond N-1)

    Returns:
        BoundsTensor
    """
    if isinstance(space, DesignSpace):
        n = space.n_atoms
        max_neighbors = min(n - 1, space.n_neighbor_features - 1)
        if space.n_features != model.input_width:
            raise DomainError(ERROR_MESSAGES["width_mismatch"].format(
                model_width=model.input_width, feature_count=space.n_features))
    else:
        n = int(space)
        max_neighbors = max(n - 1, 0)

    inputs = Interval(np.zeros((n, model.input_width)), np.ones((n, model.input_width)))
    lo, hi = inputs.lo, inputs.hi
    graph_bounds = []
    for layer in model.graph_layers:
        self_lo, self_hi = _affine_interval(layer.w_self, lo, hi)
        nb_lo, nb_hi = _affine_interval(layer.w_neigh, lo, hi)
        nb_lo = np.minimum(nb_lo, 0.0)
        nb_hi = np.maximum(nb_hi, 0.0)
        sum_lo = np.zeros_like(self_lo)
        sum_hi = np.zeros_like(self_hi)
        if max_neighbors > 0:
            for v in range(n):
                others = [u for u in range(n) if u != v]
                sum_lo[v] = np.sort(nb_lo[others], axis=0)[:max_neighbors].sum(axis=0)
                sum_hi[v] = -np.sort(-nb_hi[others], axis=0)[:max_neighbors].sum(axis=0)
        pre = Interval(self_lo + sum_lo + layer.bias, self_hi + sum_hi + layer.bias)
        post = _activation_interval(pre.lo, pre.hi, layer.activation)
        graph_bounds.append(LayerBounds(pre, post))
        lo, hi = post.lo, post.hi

    scale = 1.0 / n if model.pooling == "mean" else 1.0
    pooled = Interval(lo.sum(axis=0) * scale, hi.sum(axis=0) * scale)
    lo, hi = pooled.lo, pooled.hi
    dense_bounds = []
    for layer in model.dense_layers:
        pre_lo, pre_hi = _affine_interval(layer.w, lo, hi)
        pre = Interval(pre_lo + layer.bias, pre_hi + layer.bias)
        post = _activation_interval(pre.lo, pre.hi, layer.activation)
        dense_bounds.append(LayerBounds(pre, post))
        lo, hi = post.lo, post.hi

    logger.debug(f"Propagated bounds for {n} nodes; output in [{lo[0]:.4g}, {hi[0]:.4g}]")
    return BoundsTensor(inputs, graph_bounds, pooled, dense_bounds)
