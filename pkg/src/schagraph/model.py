"""Model assembly: pooling-GNN variants, voice head, and baseline models.

Parameters live in a flat name -> float64 matrix dict so checkpoints and
the optimizer stay simple; each forward pass binds them to a fresh tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from schagraph import autodiff as ad
from schagraph.autodiff import Tape, Var
from schagraph.graph import FEATURE_LAYOUT, EdgeType, MusicGraph
from schagraph.globalfeat import (
    GrassmannCache,
    grassmann_global,
    grassmann_precompute,
)
from schagraph.layers import (
    TransformerLayerVars,
    dir_rgcn_layer,
    gcn_layer,
    normalize,
    rgcn_layer,
    transformer_encode,
)
from schagraph.optim import glorot_uniform
from schagraph.pooling import DepthLayerVars, DepthScores, StackResult, apply_depth_stack

POOLING_VARIANTS = ("base", "sequence", "grassmann")
BASELINE_VARIANTS = ("mlp", "transformer", "gcn", "rgcn")

_EDGE_NAMES = [t.json_name for t in EdgeType]


class ConfigError(ValueError):
    """Invalid model configuration."""


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "base"
    depth_count: int = 4
    hidden_dim: int = 32
    conv_layers: int = 2
    alpha: float = 0.75
    c_min: float = 0.5
    global_width: int = 16
    transformer_layers: int = 1
    transformer_heads: int = 2
    transformer_dim: int = 32
    transformer_ff: int = 64
    subspace_k: int = 4
    subspace_lambda: float = 0.5
    feature_groups_off: tuple[str, ...] = ()
    edge_types_off: tuple[str, ...] = ()
    strict_monotonicity: bool = False
    global_once: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.variant not in POOLING_VARIANTS + BASELINE_VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.depth_count < 1:
            raise ConfigError("depth_count must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if not 0.0 < self.c_min < 1.0:
            raise ConfigError("c_min must lie in (0, 1)")
        for group in self.feature_groups_off:
            if group not in FEATURE_LAYOUT:
                raise ConfigError(f"unknown feature group {group!r}")
        for name in self.edge_types_off:
            if name not in _EDGE_NAMES:
                raise ConfigError(f"unknown edge type {name!r}")
        if self.variant == "sequence" and self.hidden_dim % self.transformer_heads:
            raise ConfigError("hidden_dim must be divisible by transformer_heads")
        if self.variant == "transformer" and self.transformer_dim % self.transformer_heads:
            raise ConfigError("transformer_dim must be divisible by transformer_heads")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["feature_groups_off"] = list(self.feature_groups_off)
        doc["edge_types_off"] = list(self.edge_types_off)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        doc = dict(doc)
        doc["feature_groups_off"] = tuple(doc.get("feature_groups_off", ()))
        doc["edge_types_off"] = tuple(doc.get("edge_types_off", ()))
        return cls(**doc)

    @property
    def score_input_dim(self) -> int:
        if self.variant == "sequence":
            return self.hidden_dim * 2
        if self.variant == "grassmann":
            return self.hidden_dim + self.global_width
        return self.hidden_dim


FEATURE_DIM = FEATURE_LAYOUT["metric_strength"][1]


def _param_shapes(config: ModelConfig) -> list[tuple[str, int, int, int]]:
    """Canonical (name, rows, cols, fan_terms) listing; order fixes init.

    fan_terms counts how many weight matrices are summed in the layer the
    parameter belongs to (2m for directed relational layers, m for plain
    relational ones); initialization folds it into the effective fan-in so
    stacked relational sums keep unit-scale activations.
    """
    p, q = FEATURE_DIM, config.hidden_dim
    m = len(_EDGE_NAMES)
    shapes: list[tuple[str, int, int, int]] = []

    def transformer_shapes(prefix: str, dim: int):
        head_dim = dim // config.transformer_heads
        for t in range(config.transformer_layers):
            for h in range(config.transformer_heads):
                shapes.append((f"{prefix}/tf{t}/wq{h}", dim, head_dim, 1))
                shapes.append((f"{prefix}/tf{t}/wk{h}", dim, head_dim, 1))
                shapes.append((f"{prefix}/tf{t}/wv{h}", dim, head_dim, 1))
            shapes.append((f"{prefix}/tf{t}/wo", dim, dim, 1))
            shapes.append((f"{prefix}/tf{t}/w1", dim, config.transformer_ff, 1))
            shapes.append((f"{prefix}/tf{t}/w2", config.transformer_ff, dim, 1))

    if config.variant in POOLING_VARIANTS:
        for l in range(1, config.depth_count + 1):
            for c in range(1, config.conv_layers + 1):
                in_dim = p if (l == 1 and c == 1) else q
                for name in _EDGE_NAMES:
                    shapes.append((f"d{l}/conv{c}/{name}/fwd", in_dim, q, 2 * m))
                    shapes.append((f"d{l}/conv{c}/{name}/bwd", in_dim, q, 2 * m))
            for name in _EDGE_NAMES:
                shapes.append((f"d{l}/score/{name}/fwd", config.score_input_dim, 1, 2 * m))
                shapes.append((f"d{l}/score/{name}/bwd", config.score_input_dim, 1, 2 * m))
        for name in _EDGE_NAMES:
            shapes.append((f"voice/conv/{name}/fwd", p, q, 2 * m))
            shapes.append((f"voice/conv/{name}/bwd", p, q, 2 * m))
            shapes.append((f"voice/head/{name}/fwd", q, 3, 2 * m))
            shapes.append((f"voice/head/{name}/bwd", q, 3, 2 * m))
        if config.variant == "sequence":
            transformer_shapes("global", q)
        elif config.variant == "grassmann":
            shapes.append(("global/wmod", p, config.global_width, 1))
    elif config.variant == "mlp":
        for l in range(1, config.depth_count + 1):
            shapes.append((f"depth{l}/mlp/w1", p + 1, q, 1))
            shapes.append((f"depth{l}/mlp/w2", q, q, 1))
            shapes.append((f"depth{l}/mlp/w3", q, 1, 1))
    elif config.variant == "transformer":
        dim = config.transformer_dim
        for l in range(1, config.depth_count + 1):
            shapes.append((f"depth{l}/embed", p, dim, 1))
            transformer_shapes(f"depth{l}", dim)
            shapes.append((f"depth{l}/head", dim, 1, 1))
    elif config.variant == "gcn":
        for l in range(1, config.depth_count + 1):
            shapes.append((f"depth{l}/gcn/w1", p, q, 1))
            shapes.append((f"depth{l}/gcn/w2", q, 1, 1))
    elif config.variant == "rgcn":
        for l in range(1, config.depth_count + 1):
            for name in _EDGE_NAMES:
                shapes.append((f"depth{l}/rgcn1/{name}", p, q, m))
                shapes.append((f"depth{l}/rgcn2/{name}", q, 1, m))
    return shapes


def init_params(config: ModelConfig, seed: int | None = None) -> dict[str, np.ndarray]:
    """Glorot-uniform initialization, deterministic per seed."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    return {
        name: glorot_uniform(rng, rows, cols) / np.sqrt(fan_terms)
        for name, rows, cols, fan_terms in _param_shapes(config)
    }


def count_params(params: dict[str, np.ndarray]) -> int:
    return sum(w.size for w in params.values())


class ParamBinding:
    """Binds numpy parameters to tape leaves, one leaf per name per pass."""

    def __init__(self, tape: Tape, params: dict[str, np.ndarray]):
        self.tape = tape
        self.params = params
        self._vars: dict[str, Var] = {}

    def __getitem__(self, name: str) -> Var:
        if name not in self._vars:
            self._vars[name] = self.tape.leaf(self.params[name])
        return self._vars[name]

    def grads(self) -> dict[str, np.ndarray]:
        return {name: var.grad for name, var in self._vars.items()}


def ablate_features(X: np.ndarray, config: ModelConfig) -> np.ndarray:
    if not config.feature_groups_off:
        return X
    X = X.copy()
    for group in config.feature_groups_off:
        start, end = FEATURE_LAYOUT[group]
        X[:, start:end] = 0.0
    return X


def ablate_edges(adjacency: dict, config: ModelConfig) -> dict:
    off = set(config.edge_types_off)
    return {
        t: (np.zeros_like(A) if t.json_name in off else A)
        for t, A in adjacency.items()
    }


def _bind_transformer(
    binding: ParamBinding, prefix: str, config: ModelConfig
) -> list[TransformerLayerVars]:
    layers = []
    for t in range(config.transformer_layers):
        layers.append(
            TransformerLayerVars(
                wq=[binding[f"{prefix}/tf{t}/wq{h}"] for h in range(config.transformer_heads)],
                wk=[binding[f"{prefix}/tf{t}/wk{h}"] for h in range(config.transformer_heads)],
                wv=[binding[f"{prefix}/tf{t}/wv{h}"] for h in range(config.transformer_heads)],
                wo=binding[f"{prefix}/tf{t}/wo"],
                w1=binding[f"{prefix}/tf{t}/w1"],
                w2=binding[f"{prefix}/tf{t}/w2"],
            )
        )
    return layers


def _depth_weights(binding: ParamBinding, config: ModelConfig) -> list[DepthLayerVars]:
    weights = []
    for l in range(1, config.depth_count + 1):
        conv = []
        for c in range(1, config.conv_layers + 1):
            conv.append(
                (
                    [binding[f"d{l}/conv{c}/{name}/fwd"] for name in _EDGE_NAMES],
                    [binding[f"d{l}/conv{c}/{name}/bwd"] for name in _EDGE_NAMES],
                )
            )
        score = (
            [binding[f"d{l}/score/{name}/fwd"] for name in _EDGE_NAMES],
            [binding[f"d{l}/score/{name}/bwd"] for name in _EDGE_NAMES],
        )
        weights.append(DepthLayerVars(conv=conv, score=score))
    return weights


@dataclass
class ForwardResult:
    stack: StackResult
    voice: Var | None
    binding: ParamBinding
    config: ModelConfig

    @property
    def score_vars(self) -> list[Var]:
        return self.stack.score_vars

    @property
    def depth_scores(self) -> DepthScores:
        return DepthScores(scores=self.stack.scores, c_min=self.config.c_min)


def voice_head(
    graph: MusicGraph, config: ModelConfig, binding: ParamBinding, tape: Tape
) -> Var:
    """n x 3 sigmoid scores for {treble, bass, inner}.

    Uses only the first convolution over the unmasked graph, so one pass
    serves every depth.
    """
    adjacency = ablate_edges(graph.adjacency, config)
    norms = [normalize(adjacency[t]) for t in EdgeType]
    Ms = [tape.constant(M) for M in norms]
    Mts = [tape.constant(M.T) for M in norms]
    X = tape.constant(ablate_features(graph.X, config))
    Z = dir_rgcn_layer(
        X,
        Ms,
        Mts,
        [binding[f"voice/conv/{name}/fwd"] for name in _EDGE_NAMES],
        [binding[f"voice/conv/{name}/bwd"] for name in _EDGE_NAMES],
        config.alpha,
        activation="relu",
    )
    return dir_rgcn_layer(
        Z,
        Ms,
        Mts,
        [binding[f"voice/head/{name}/fwd"] for name in _EDGE_NAMES],
        [binding[f"voice/head/{name}/bwd"] for name in _EDGE_NAMES],
        config.alpha,
        activation="sigmoid",
    )


def forward_pooling_model(
    graph: MusicGraph,
    config: ModelConfig,
    params: dict[str, np.ndarray],
    tape: Tape | None = None,
    frozen_masks: list[np.ndarray] | None = None,
    grassmann_cache: GrassmannCache | None = None,
    with_voice: bool = True,
) -> ForwardResult:
    """Full pooling-GNN forward pass for the base/sequence/grassmann variants."""
    if config.variant not in POOLING_VARIANTS:
        raise ConfigError(f"forward_pooling_model: not a pooling variant: {config.variant}")
    tape = tape if tape is not None else Tape()
    binding = ParamBinding(tape, params)
    X = ablate_features(graph.X, config)
    adjacency = ablate_edges(graph.adjacency, config)

    global_fn = None
    if config.variant == "sequence":
        tlayers = _bind_transformer(binding, "global", config)
        topo = graph.topo_order
        cache: dict[str, Var] = {}

        def global_fn(depth_idx, Z, prev_scores):
            if "xg" not in cache or not config.global_once:
                sequence = ad.permute_rows(Z, topo)
                encoded = transformer_encode(sequence, tlayers)
                cache["xg"] = ad.mean_rows(encoded)
            return ad.concat_cols([Z, ad.matmul(prev_scores, cache["xg"])])

    elif config.variant == "grassmann":
        if grassmann_cache is None:
            grassmann_cache = grassmann_precompute(
                adjacency, config.subspace_k, config.subspace_lambda
            )
        M_mod = tape.constant(grassmann_cache.M_mod)
        X_const = tape.constant(X)
        cache: dict[str, Var] = {}

        def global_fn(depth_idx, Z, prev_scores):
            if "xg" not in cache:
                cache["xg"] = grassmann_global(X_const, M_mod, binding["global/wmod"])
            return ad.concat_cols([Z, ad.row_scale(cache["xg"], prev_scores)])

    stack = apply_depth_stack(
        tape,
        adjacency,
        X,
        _depth_weights(binding, config),
        config.alpha,
        config.c_min,
        global_fn=global_fn,
        frozen_masks=frozen_masks,
    )
    voice = voice_head(graph, config, binding, tape) if with_voice else None
    return ForwardResult(stack=stack, voice=voice, binding=binding, config=config)


def forward_baseline(
    graph: MusicGraph,
    config: ModelConfig,
    params: dict[str, np.ndarray],
    depth: int,
    tape: Tape | None = None,
    binding: ParamBinding | None = None,
) -> Var:
    """Per-depth baseline score vector (n x 1); each depth trains separately."""
    if config.variant not in BASELINE_VARIANTS:
        raise ConfigError(f"forward_baseline: unknown baseline {config.variant!r}")
    if not 1 <= depth <= config.depth_count:
        raise ConfigError(f"depth {depth} outside 1..{config.depth_count}")
    if binding is None:
        tape = tape if tape is not None else Tape()
        binding = ParamBinding(tape, params)
    tape = binding.tape
    X = ablate_features(graph.X, config)
    n = graph.n

    if config.variant == "mlp":
        topo_pos = np.empty(n)
        topo_pos[graph.topo_order] = np.arange(n) / max(n - 1, 1)
        X_in = tape.constant(np.concatenate([X, topo_pos.reshape(-1, 1)], axis=1))
        h = ad.relu(ad.matmul(X_in, binding[f"depth{depth}/mlp/w1"]))
        h = ad.relu(ad.matmul(h, binding[f"depth{depth}/mlp/w2"]))
        return ad.sigmoid(ad.matmul(h, binding[f"depth{depth}/mlp/w3"]))

    if config.variant == "transformer":
        sequence = tape.constant(X[graph.topo_order])
        embedded = ad.matmul(sequence, binding[f"depth{depth}/embed"])
        encoded = transformer_encode(
            embedded, _bind_transformer(binding, f"depth{depth}", config)
        )
        inverse = np.empty(n, dtype=int)
        inverse[graph.topo_order] = np.arange(n)
        back = ad.permute_rows(encoded, inverse)
        return ad.sigmoid(ad.matmul(back, binding[f"depth{depth}/head"]))

    adjacency = ablate_edges(graph.adjacency, config)
    if config.variant == "gcn":
        union = np.zeros((n, n))
        for A in adjacency.values():
            union = np.maximum(union, np.maximum(A, A.T))
        M = tape.constant(normalize(union))
        Z = gcn_layer(tape.constant(X), M, binding[f"depth{depth}/gcn/w1"], "relu")
        return gcn_layer(Z, M, binding[f"depth{depth}/gcn/w2"], "sigmoid")

    # rgcn
    Ms = [tape.constant(normalize(adjacency[t])) for t in EdgeType]
    Z = rgcn_layer(
        tape.constant(X),
        Ms,
        [binding[f"depth{depth}/rgcn1/{name}"] for name in _EDGE_NAMES],
        "relu",
    )
    return rgcn_layer(
        Z,
        Ms,
        [binding[f"depth{depth}/rgcn2/{name}"] for name in _EDGE_NAMES],
        "sigmoid",
    )


def forward_scores(
    graph: MusicGraph,
    config: ModelConfig,
    params: dict[str, np.ndarray],
    tape: Tape | None = None,
    grassmann_cache: GrassmannCache | None = None,
    with_voice: bool = True,
) -> ForwardResult:
    """Uniform entry point: d x n depth scores for any variant."""
    if config.variant in POOLING_VARIANTS:
        return forward_pooling_model(
            graph, config, params, tape=tape,
            grassmann_cache=grassmann_cache, with_voice=with_voice,
        )
    tape = tape if tape is not None else Tape()
    binding = ParamBinding(tape, params)
    score_vars = [
        forward_baseline(graph, config, params, depth, binding=binding)
        for depth in range(1, config.depth_count + 1)
    ]
    stack = StackResult(score_vars=score_vars, embeddings=[], masks=[])
    return ForwardResult(stack=stack, voice=None, binding=binding, config=config)
