"""Single decoder block: conventional vs. fused execution, plus its op graph.

The block is pre-LN: the residual branches off before each normalization.
Three normalization sites exist per block, two norms (layernorm or
rmsnorm by variant) and the attention softmax, and each one feeds a
matrix multiplication, so each is a fusion site:

    site "ln1":     norm1 -> Q/K/V projections
    site "softmax": attention probabilities -> @ V (per head)
    site "ln2":     norm2 -> first MLP projection(s)

`run_conventional` and `run_fused` produce numerically equivalent outputs
(identical algebra, different operation order). `build_graph` emits the
dependency graph the latency simulator schedules; the fused graph differs
from the conventional one only by cutting the collective->matmul edge at
each site and adding a deferred-scale node after the matmul.

Normalizations and softmax run row-by-row through the single-row kernels;
multi-row inputs just loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fusion import (
    FoldedLinear,
    LlamaMlpWeights,
    RmsFoldedLinear,
    fold_layernorm_linear,
    fold_rmsnorm_linear,
    fused_layernorm_matmul,
    fused_rmsnorm_llama_mlp,
    fused_rmsnorm_matmul,
    fused_softmax_matmul,
    silu,
)
from .norms import LayerNormParams, RmsNormParams, layernorm, rmsnorm, softmax_stable
from .tensor import as_matrix, matmul

__all__ = [
    "VARIANTS",
    "SITES",
    "BlockConfig",
    "BlockWeights",
    "random_block_weights",
    "run_conventional",
    "run_fused",
    "Node",
    "OpGraph",
    "build_graph",
    "site_subgraph",
    "gelu",
]

VARIANTS = ("standard-gelu", "llama-swiglu")
SITES = ("ln1", "softmax", "ln2")

NODE_KINDS = ("elementwise", "collective", "matmul", "sync")
ENGINES = ("vector", "matrix")


@dataclass(frozen=True)
class BlockConfig:
    d_model: int
    n_heads: int
    seq_len: int
    mlp_hidden: int
    variant: str = "standard-gelu"
    epsilon_ln: float = 1e-5

    def __post_init__(self):
        for name in ("d_model", "n_heads", "seq_len", "mlp_hidden"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} must be divisible by n_heads {self.n_heads}"
            )
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not (np.isfinite(self.epsilon_ln) and self.epsilon_ln > 0):
            raise ValueError(f"epsilon_ln must be positive and finite, got {self.epsilon_ln}")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


@dataclass(frozen=True)
class BlockWeights:
    """Projection weights plus per-variant norm params and MLP weights.

    standard-gelu: ln1/ln2 are LayerNormParams, MLP is fc1/fc2.
    llama-swiglu:  ln1/ln2 are RmsNormParams, MLP is LlamaMlpWeights.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    ln1: LayerNormParams | RmsNormParams
    ln2: LayerNormParams | RmsNormParams
    fc1: np.ndarray | None = None
    fc2: np.ndarray | None = None
    mlp: LlamaMlpWeights | None = None

    def __post_init__(self):
        for name in ("w_q", "w_k", "w_v", "w_o"):
            object.__setattr__(self, name, as_matrix(getattr(self, name)))
        if self.fc1 is not None:
            object.__setattr__(self, "fc1", as_matrix(self.fc1))
        if self.fc2 is not None:
            object.__setattr__(self, "fc2", as_matrix(self.fc2))

    def validate(self, cfg: BlockConfig) -> None:
        n, h = cfg.d_model, cfg.mlp_hidden
        for name in ("w_q", "w_k", "w_v", "w_o"):
            m = getattr(self, name)
            if m.shape != (n, n):
                raise ValueError(f"{name} shape {m.shape}, expected {(n, n)}")
        if self.ln1.n != n or self.ln2.n != n:
            raise ValueError("norm parameter length does not match d_model")
        if cfg.variant == "standard-gelu":
            if not (isinstance(self.ln1, LayerNormParams) and isinstance(self.ln2, LayerNormParams)):
                raise ValueError("standard-gelu blocks use LayerNormParams")
            if self.fc1 is None or self.fc2 is None or self.mlp is not None:
                raise ValueError("standard-gelu blocks carry fc1/fc2 and no gated MLP")
            if self.fc1.shape != (n, h) or self.fc2.shape != (h, n):
                raise ValueError("fc1/fc2 shapes do not match config")
        else:
            if not (isinstance(self.ln1, RmsNormParams) and isinstance(self.ln2, RmsNormParams)):
                raise ValueError("llama-swiglu blocks use RmsNormParams")
            if self.mlp is None or self.fc1 is not None or self.fc2 is not None:
                raise ValueError("llama-swiglu blocks carry a gated MLP and no fc1/fc2")
            if self.mlp.w_gate.shape != (n, h):
                raise ValueError("gated MLP shapes do not match config")


def random_block_weights(cfg: BlockConfig, rng: np.random.Generator) -> BlockWeights:
    """Seeded random weights at 1/sqrt(fan-in) scale."""
    n, h = cfg.d_model, cfg.mlp_hidden
    proj = lambda rows, cols: rng.standard_normal((rows, cols)) / math.sqrt(rows)
    gamma = rng.uniform(0.8, 1.2, size=n)
    if cfg.variant == "standard-gelu":
        ln1 = LayerNormParams(gamma=gamma, beta=rng.standard_normal(n) * 0.05, epsilon=cfg.epsilon_ln)
        ln2 = LayerNormParams(
            gamma=rng.uniform(0.8, 1.2, size=n), beta=rng.standard_normal(n) * 0.05, epsilon=cfg.epsilon_ln
        )
        extra = dict(fc1=proj(n, h), fc2=proj(h, n))
    else:
        ln1 = RmsNormParams(gamma=gamma, epsilon=cfg.epsilon_ln)
        ln2 = RmsNormParams(gamma=rng.uniform(0.8, 1.2, size=n), epsilon=cfg.epsilon_ln)
        extra = dict(mlp=LlamaMlpWeights(w_gate=proj(n, h), w_up=proj(n, h), w_down=proj(h, n)))
    return BlockWeights(
        w_q=proj(n, n), w_k=proj(n, n), w_v=proj(n, n), w_o=proj(n, n),
        ln1=ln1, ln2=ln2, **extra,
    )


# GELU tanh approximation: 0.5*z*(1 + tanh(sqrt(2/pi)*(z + 0.044715*z^3))).
_GELU_SQRT_2_OVER_PI = 0.7978845608028654


def gelu(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return 0.5 * z * (1.0 + np.tanh(_GELU_SQRT_2_OVER_PI * (z + 0.044715 * z**3)))


def _check_input(cfg: BlockConfig, w: BlockWeights, x) -> np.ndarray:
    x = as_matrix(x)
    if x.shape != (cfg.seq_len, cfg.d_model):
        raise ValueError(f"input shape {x.shape}, expected {(cfg.seq_len, cfg.d_model)}")
    w.validate(cfg)
    return x


def _split_heads(m: np.ndarray, cfg: BlockConfig) -> list[np.ndarray]:
    return [m[:, i * cfg.d_head : (i + 1) * cfg.d_head] for i in range(cfg.n_heads)]


def _norm_rows(x: np.ndarray, params) -> np.ndarray:
    fn = layernorm if isinstance(params, LayerNormParams) else rmsnorm
    return np.stack([fn(row, params) for row in x])


def _attention_scores(q_h: np.ndarray, k_h: np.ndarray, d_head: int) -> np.ndarray:
    return matmul(q_h, k_h.T) * (1.0 / math.sqrt(d_head))


def run_conventional(cfg: BlockConfig, w: BlockWeights, x) -> np.ndarray:
    """Reference block: normalize fully, then multiply, at every site."""
    x = _check_input(cfg, w, x)

    normed = _norm_rows(x, w.ln1)
    q, k, v = matmul(normed, w.w_q), matmul(normed, w.w_k), matmul(normed, w.w_v)
    head_outs = []
    for q_h, k_h, v_h in zip(_split_heads(q, cfg), _split_heads(k, cfg), _split_heads(v, cfg)):
        scores = _attention_scores(q_h, k_h, cfg.d_head)
        probs = np.stack([softmax_stable(row) for row in scores])
        head_outs.append(matmul(probs, v_h))
    attn = matmul(np.hstack(head_outs), w.w_o)
    hidden = x + attn

    normed2 = _norm_rows(hidden, w.ln2)
    if cfg.variant == "standard-gelu":
        mlp_out = matmul(gelu(matmul(normed2, w.fc1)), w.fc2)
    else:
        gate = matmul(normed2, w.mlp.w_gate)
        up = matmul(normed2, w.mlp.w_up)
        mlp_out = matmul(silu(gate) * up, w.mlp.w_down)
    return hidden + mlp_out


def run_fused(cfg: BlockConfig, w: BlockWeights, x) -> np.ndarray:
    """Fused block: every normalization deferred past its matmul.

    One fold per projection: Q, K, V (and the MLP projections) each get
    their own folded weight built from the shared norm parameters.
    """
    x = _check_input(cfg, w, x)
    eps = cfg.epsilon_ln

    if cfg.variant == "standard-gelu":
        folds = [fold_layernorm_linear(w.ln1, f) for f in (w.w_q, w.w_k, w.w_v)]
        project = lambda fl: np.stack([fused_layernorm_matmul(row, fl, eps) for row in x])
    else:
        folds = [fold_rmsnorm_linear(w.ln1, f) for f in (w.w_q, w.w_k, w.w_v)]
        project = lambda fl: np.stack([fused_rmsnorm_matmul(row, fl, eps) for row in x])
    q, k, v = (project(fl) for fl in folds)

    head_outs = []
    for q_h, k_h, v_h in zip(_split_heads(q, cfg), _split_heads(k, cfg), _split_heads(v, cfg)):
        scores = _attention_scores(q_h, k_h, cfg.d_head)
        head_outs.append(np.stack([fused_softmax_matmul(row, v_h) for row in scores]))
    attn = matmul(np.hstack(head_outs), w.w_o)
    hidden = x + attn

    if cfg.variant == "standard-gelu":
        fc1_fold = fold_layernorm_linear(w.ln2, w.fc1)
        pre_act = np.stack([fused_layernorm_matmul(row, fc1_fold, eps) for row in hidden])
        mlp_out = matmul(gelu(pre_act), w.fc2)
    else:
        gate_fold = fold_rmsnorm_linear(w.ln2, w.mlp.w_gate)
        up_fold = fold_rmsnorm_linear(w.ln2, w.mlp.w_up)
        mlp_out = np.stack(
            [fused_rmsnorm_llama_mlp(row, gate_fold, up_fold, w.mlp.w_down, eps) for row in hidden]
        )
    return hidden + mlp_out


# --------------------------------------------------------------------------
# Operation dependency graph
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Node:
    """One schedulable operation.

    work counts elements for vector-engine kinds and MACs for matmuls.
    site tags the fusion site ("ln1" | "softmax" | "ln2") or None for
    common work (residuals, activations, unfused projections). meta keeps
    human-facing granularity notes (e.g. how many per-row reductions a
    collective aggregates); the scheduler ignores it.
    """

    id: int
    kind: str
    engine: str
    work: int
    name: str
    site: str | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ValueError(f"unknown node kind {self.kind!r}")
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.kind != "sync" and self.work <= 0:
            raise ValueError(f"node work must be positive, got {self.work}")


@dataclass(frozen=True)
class OpGraph:
    nodes: tuple[Node, ...]
    edges: tuple[tuple[int, int], ...]
    fused: bool
    config: BlockConfig

    def node(self, node_id: int) -> Node:
        return self._by_id[node_id]

    @property
    def _by_id(self) -> dict[int, Node]:
        return {n.id: n for n in self.nodes}

    def predecessors(self, node_id: int) -> list[int]:
        return [a for a, b in self.edges if b == node_id]

    def successors(self, node_id: int) -> list[int]:
        return [b for a, b in self.edges if a == node_id]

    def topological_order(self) -> list[int]:
        """Kahn's algorithm with ascending-id tie-break; raises on cycles."""
        indeg = {n.id: 0 for n in self.nodes}
        for _, b in self.edges:
            indeg[b] += 1
        ready = sorted(i for i, d in indeg.items() if d == 0)
        order: list[int] = []
        while ready:
            nid = ready.pop(0)
            order.append(nid)
            for succ in self.successors(nid):
                indeg[succ] -= 1
                if indeg[succ] == 0:
                    ready.append(succ)
            ready.sort()
        if len(order) != len(self.nodes):
            raise ValueError("operation graph contains a cycle")
        return order

    def has_path(self, src: int, dst: int) -> bool:
        frontier = [src]
        seen = set()
        while frontier:
            cur = frontier.pop()
            if cur == dst:
                return True
            if cur in seen:
                continue
            seen.add(cur)
            frontier.extend(self.successors(cur))
        return False

    def site_nodes(self, site: str) -> list[Node]:
        return [n for n in self.nodes if n.site == site]


class _GraphBuilder:
    def __init__(self):
        self.nodes: list[Node] = []
        self.edges: list[tuple[int, int]] = []

    def add(self, kind, engine, work, name, site=None, meta=None, deps=()) -> int:
        nid = len(self.nodes)
        self.nodes.append(
            Node(id=nid, kind=kind, engine=engine, work=int(work), name=name, site=site, meta=meta or {})
        )
        for d in deps:
            self.edges.append((d, nid))
        return nid


def _add_site(b: _GraphBuilder, site: str, ew_work: int, coll_work: int,
              mm_work: int, mm_out: int, fused: bool, coll_meta: dict, entry: int | None) -> int:
    """One normalization site.

    Conventional: elementwise -> collective -> matmul (a chain).
    Fused: the collective->matmul edge is cut (both hang off the
    elementwise node) and a deferred-scale node joins the two branches.
    Returns the node downstream consumers should depend on.
    """
    deps = [entry] if entry is not None else []
    ew = b.add("elementwise", "vector", ew_work, f"{site}.elementwise", site, deps=deps)
    coll = b.add("collective", "vector", coll_work, f"{site}.collective", site,
                 meta=coll_meta, deps=[ew])
    if not fused:
        mm = b.add("matmul", "matrix", mm_work, f"{site}.matmul", site, deps=[coll])
        return mm
    mm = b.add("matmul", "matrix", mm_work, f"{site}.matmul", site, deps=[ew])
    scale = b.add("elementwise", "vector", mm_out, f"{site}.scale", site, deps=[coll, mm])
    return scale


def build_graph(cfg: BlockConfig, fused: bool) -> OpGraph:
    """Dependency graph of one decoder block with exact work counts.

    Matmul work is seq * rows * cols MACs per product, summed where one
    node covers several projections (Q/K/V; gate+up). The softmax site's
    collective node aggregates every head's per-row denominator; the
    per-head granularity is recorded in its meta.
    """
    n, heads, seq, h = cfg.d_model, cfg.n_heads, cfg.seq_len, cfg.mlp_hidden
    b = _GraphBuilder()

    qkv = _add_site(
        b, "ln1",
        ew_work=seq * n, coll_work=seq * n,
        mm_work=3 * seq * n * n, mm_out=3 * seq * n,
        fused=fused, coll_meta={"reductions": seq, "width": n}, entry=None,
    )
    logits = b.add("matmul", "matrix", seq * seq * n, "attn.logits_matmul", deps=[qkv])
    av = _add_site(
        b, "softmax",
        ew_work=heads * seq * seq, coll_work=heads * seq * seq,
        mm_work=seq * seq * n, mm_out=seq * n,
        fused=fused, coll_meta={"reductions": heads * seq, "width": seq, "heads": heads},
        entry=logits,
    )
    out_proj = b.add("matmul", "matrix", seq * n * n, "attn.out_matmul", deps=[av])
    res1 = b.add("elementwise", "vector", seq * n, "residual1.add", deps=[out_proj])

    if cfg.variant == "standard-gelu":
        mlp_mm_work, mlp_mm_out = seq * n * h, seq * h
    else:
        mlp_mm_work, mlp_mm_out = 2 * seq * n * h, 2 * seq * h  # gate and up together
    fc1 = _add_site(
        b, "ln2",
        ew_work=seq * n, coll_work=seq * n,
        mm_work=mlp_mm_work, mm_out=mlp_mm_out,
        fused=fused, coll_meta={"reductions": seq, "width": n}, entry=res1,
    )
    act = b.add("elementwise", "vector", seq * h, "mlp.activation", deps=[fc1])
    down = b.add("matmul", "matrix", seq * h * n, "mlp.down_matmul", deps=[act])
    b.add("elementwise", "vector", seq * n, "residual2.add", deps=[down, res1])

    return OpGraph(nodes=tuple(b.nodes), edges=tuple(b.edges), fused=fused, config=cfg)


def site_subgraph(graph: OpGraph, site: str) -> OpGraph:
    """Induced subgraph of one fusion site (node ids preserved)."""
    if site not in SITES:
        raise ValueError(f"unknown fusion site {site!r}")
    keep = {n.id for n in graph.site_nodes(site)}
    nodes = tuple(n for n in graph.nodes if n.id in keep)
    edges = tuple((a, c) for a, c in graph.edges if a in keep and c in keep)
    return OpGraph(nodes=nodes, edges=edges, fused=graph.fused, config=graph.config)
