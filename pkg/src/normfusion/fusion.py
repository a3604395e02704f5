"""Compile-time weight folding and deferred-normalization execution.

The observation: each normalization is a scalar factor (1/sqrt(var+eps),
1/rms, 1/sum-of-exps) applied to a vector that immediately hits a linear
layer. Scalars commute with matrix multiplication, so the division can be
deferred until after the product. Everything static (the centering
matrix I - E/n, the diagonal scale, the bias) folds into the weight
matrix ahead of time:

    layernorm(x) @ F  ==  (x @ W_folded) / sqrt(var(x) + eps) + bias_folded
        with W_folded = (I - E/n) @ diag(gamma) @ F,  bias_folded = beta @ F

    softmax(x) @ V    ==  (exp(x - max) @ V) / sum(exp(x - max))

The reduction producing the scalar and the big matmul have no data
dependency on each other; they only join at the final scale. That
independence is a contract on the code structure (no shared
intermediates), not a threading requirement; a two-engine machine can
overlap them, and the simulator module quantifies the win.

Equivalence to the conventional forms is algebraic, so fused and
conventional paths agree to rounding (~1e-13 relative), well inside the
1e-10 contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .norms import LayerNormParams, RmsNormParams, moments
from .tensor import as_matrix, as_row_vector, ordered_sum, rowvec_matmul

__all__ = [
    "FoldedLinear",
    "RmsFoldedLinear",
    "LlamaMlpWeights",
    "fold_layernorm_linear",
    "fused_layernorm_matmul",
    "fused_softmax_matmul",
    "fold_rmsnorm_linear",
    "fused_rmsnorm_matmul",
    "fused_rmsnorm_llama_mlp",
    "silu",
]

# 1-vector annihilation tolerance for folded layernorm weights: the rows of
# (I - E/n) sum to zero, so constants must map to (numerically) zero.
_FOLD_ANNIHILATION_TOL = 1e-10


@dataclass(frozen=True)
class FoldedLinear:
    """Layernorm folded into a linear layer, built once at compile time.

    folded_weight = (I - E/n) @ diag(gamma) @ F     (n x m)
    folded_bias   = beta @ F                        (length m)
    """

    folded_weight: np.ndarray
    folded_bias: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "folded_weight", as_matrix(self.folded_weight))
        object.__setattr__(self, "folded_bias", as_row_vector(self.folded_bias))
        if self.folded_weight.shape[1] != self.folded_bias.size:
            raise ValueError(
                f"folded bias length {self.folded_bias.size} does not match "
                f"folded weight columns {self.folded_weight.shape[1]}"
            )


@dataclass(frozen=True)
class RmsFoldedLinear:
    """RMSNorm scale folded into a linear layer: folded_weight = diag(gamma) @ F."""

    folded_weight: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "folded_weight", as_matrix(self.folded_weight))


@dataclass(frozen=True)
class LlamaMlpWeights:
    """Gated MLP weights: up-projection, gate, and down-projection."""

    w_gate: np.ndarray
    w_up: np.ndarray
    w_down: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w_gate", as_matrix(self.w_gate))
        object.__setattr__(self, "w_up", as_matrix(self.w_up))
        object.__setattr__(self, "w_down", as_matrix(self.w_down))
        n, h = self.w_gate.shape
        if self.w_up.shape != (n, h):
            raise ValueError(f"w_up shape {self.w_up.shape} != w_gate shape {(n, h)}")
        if self.w_down.shape != (h, n):
            raise ValueError(f"w_down shape {self.w_down.shape}, expected {(h, n)}")


def fold_layernorm_linear(p: LayerNormParams, f) -> FoldedLinear:
    """Fold layernorm's static pieces into the downstream weight matrix.

    Row-scaling by gamma and column-centering realize
    (I - E/n) @ diag(gamma) @ F in O(n*m) without materializing the n x n
    factors. Column sums use the same left-to-right order as every other
    reduction here, and the result is checked against the row-space
    annihilation invariant: the all-ones vector must map to ~0.
    """
    f = as_matrix(f)
    if f.shape[0] != p.n:
        raise ValueError(
            f"weight rows {f.shape[0]} do not match normalized dimension {p.n}"
        )
    scaled = p.gamma[:, np.newaxis] * f
    folded_weight = scaled - ordered_sum(scaled, axis=0) / p.n
    folded_bias = rowvec_matmul(p.beta, f)

    ones_image = np.abs(ordered_sum(folded_weight, axis=0))
    limit = _FOLD_ANNIHILATION_TOL * max(1.0, float(np.max(np.abs(folded_weight)))) * p.n
    if float(np.max(ones_image)) > limit:
        raise ValueError("folded weight does not annihilate constant inputs")
    return FoldedLinear(folded_weight=folded_weight, folded_bias=folded_bias)


def fused_layernorm_matmul(x, fl: FoldedLinear, epsilon: float) -> np.ndarray:
    """Evaluate layernorm(x) @ F through the folded weights.

    The variance reduction and the x @ folded_weight product are
    independent tasks; they meet only at the final scale-and-bias.
    """
    x = as_row_vector(x)
    if x.size != fl.folded_weight.shape[0]:
        raise ValueError(
            f"input length {x.size} does not match folded weight rows {fl.folded_weight.shape[0]}"
        )
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon must be a positive finite scalar, got {epsilon}")

    variance = moments(x).variance            # collective task
    projected = rowvec_matmul(x, fl.folded_weight)  # matmul task, overlappable
    return projected / math.sqrt(variance + epsilon) + fl.folded_bias


def fused_softmax_matmul(x, v) -> np.ndarray:
    """Evaluate softmax(x) @ V with the denominator deferred past the matmul.

    Numerators are max-shifted, so the path is overflow-safe for any
    finite logits; the shift cancels between numerator and denominator.
    """
    x = as_row_vector(x)
    v = as_matrix(v)
    if x.size != v.shape[0]:
        raise ValueError(f"input length {x.size} does not match matrix rows {v.shape[0]}")

    numerators = np.exp(x - np.max(x))
    denominator = float(ordered_sum(numerators))  # collective task
    projected = rowvec_matmul(numerators, v)      # matmul task, overlappable
    return projected / denominator


def fold_rmsnorm_linear(p: RmsNormParams, f) -> RmsFoldedLinear:
    """Fold the RMSNorm scale vector into the downstream weight matrix."""
    f = as_matrix(f)
    if f.shape[0] != p.n:
        raise ValueError(
            f"weight rows {f.shape[0]} do not match normalized dimension {p.n}"
        )
    return RmsFoldedLinear(folded_weight=p.gamma[:, np.newaxis] * f)


def _root_mean_square(x: np.ndarray, epsilon: float) -> float:
    mean_sq = float(ordered_sum(x * x)) / x.size
    if mean_sq + epsilon == 0.0:
        raise ValueError("rms of an all-zero vector with epsilon=0 divides by zero")
    return math.sqrt(mean_sq + epsilon)


def fused_rmsnorm_matmul(x, rfl: RmsFoldedLinear, epsilon: float = 0.0) -> np.ndarray:
    """Evaluate rmsnorm(x) @ F through the folded weights, 1/rms deferred."""
    x = as_row_vector(x)
    if x.size != rfl.folded_weight.shape[0]:
        raise ValueError(
            f"input length {x.size} does not match folded weight rows {rfl.folded_weight.shape[0]}"
        )
    r = _root_mean_square(x, epsilon)              # collective task
    projected = rowvec_matmul(x, rfl.folded_weight)  # matmul task, overlappable
    return projected / r


def silu(z) -> np.ndarray:
    """z * sigmoid(z), branch-selected so exp never overflows."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = z[pos] / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = z[~pos] * ez / (1.0 + ez)
    return out


def fused_rmsnorm_llama_mlp(
    x,
    gate_folded: RmsFoldedLinear,
    up_folded: RmsFoldedLinear,
    w_down,
    epsilon: float = 0.0,
) -> np.ndarray:
    """Gated MLP with RMSNorm folded into the gate and up projections.

    Both projections consume raw x, so the rms reduction can overlap them.
    The deferred 1/rms must be applied before the gate non-linearity
    (scalars do not commute past silu), so the down-projection is outside
    the overlap. This is the maximal exact fusion for this layer.
    """
    x = as_row_vector(x)
    w_down = as_matrix(w_down)
    n = x.size
    if gate_folded.folded_weight.shape[0] != n or up_folded.folded_weight.shape[0] != n:
        raise ValueError("folded projection rows do not match input length")
    h = gate_folded.folded_weight.shape[1]
    if up_folded.folded_weight.shape[1] != h:
        raise ValueError("gate and up projections disagree on hidden width")
    if w_down.shape != (h, n):
        raise ValueError(f"down projection shape {w_down.shape}, expected {(h, n)}")

    r = _root_mean_square(x, epsilon)                      # collective task
    p_gate = rowvec_matmul(x, gate_folded.folded_weight)   # overlappable
    p_up = rowvec_matmul(x, up_folded.folded_weight)       # overlappable
    gated = silu(p_gate / r) * (p_up / r)
    return rowvec_matmul(gated, w_down)
