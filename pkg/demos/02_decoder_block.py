#!/usr/bin/env python3
"""Run a whole pre-LN decoder block conventionally and fused.

Each block has three fusion sites: norm -> Q/K/V, softmax -> @V (per
head), and norm -> MLP input projections. The fused path folds weights
once and defers every normalization; outputs must agree to rounding.
"""

import numpy as np

from normfusion import (
    BlockConfig,
    max_rel_error,
    random_block_weights,
    run_conventional,
    run_fused,
)

for variant in ("standard-gelu", "llama-swiglu"):
    cfg = BlockConfig(d_model=64, n_heads=4, seq_len=12, mlp_hidden=172, variant=variant)
    rng = np.random.default_rng(11)
    weights = random_block_weights(cfg, rng)
    x = rng.standard_normal((cfg.seq_len, cfg.d_model))

    conventional = run_conventional(cfg, weights, x)
    fused = run_fused(cfg, weights, x)

    print(f"=== {variant} ===")
    print(f"  d_model={cfg.d_model} heads={cfg.n_heads} seq={cfg.seq_len} hidden={cfg.mlp_hidden}")
    norms = "2 layernorms" if variant == "standard-gelu" else "2 rmsnorms"
    print(f"  fusion sites: {norms} + softmax, each deferred past its matmul")
    print(f"  max relative deviation fused vs conventional: {max_rel_error(fused, conventional):.3e}")
    print(f"  output sample (row 0, first 4): {np.array2string(fused[0, :4], precision=6)}")
    print()

print("The agreement is algebraic, not approximate: the fused path computes the")
print("same reductions and the same products, only in a different order.")
