#!/usr/bin/env python3
"""Fold weights offline through the CLI and prove the round trip is exact.

The folded matrices are compile-time artifacts, so they can be produced
once, shipped as JSON, and loaded at inference time. Serialization uses
shortest-round-trip decimals: the loaded fold is bit-identical to the
in-memory one, and so is everything computed from it.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from normfusion import BlockConfig, fold_layernorm_linear, fused_layernorm_matmul, random_block_weights
from normfusion.cli import main
from normfusion.jsonio import load_folded_weights, save_block_weights

cfg = BlockConfig(d_model=32, n_heads=4, seq_len=8, mlp_hidden=64, variant="standard-gelu")
rng = np.random.default_rng(3)
weights = random_block_weights(cfg, rng)

workdir = Path(tempfile.mkdtemp(prefix="normfusion_demo_"))
config_path = workdir / "config.json"
config_path.write_text(json.dumps({
    "block": {"d_model": 32, "n_heads": 4, "seq_len": 8, "mlp_hidden": 64,
              "variant": "standard-gelu", "epsilon_ln": 1e-5},
    "cost_model": {"matrix_macs_per_cycle": 65536, "vector_elems_per_cycle": 4096},
    "seed": 3,
}))
weights_path = workdir / "weights.json"
save_block_weights(str(weights_path), cfg, weights)

folded_path = workdir / "folded.json"
print(f"$ normfusion fold {config_path.name} {weights_path.name} {folded_path.name}")
code = main(["fold", str(config_path), str(weights_path), str(folded_path), "--quiet"])
print(f"(exit {code})\n")

loaded = load_folded_weights(str(folded_path))
in_memory = fold_layernorm_linear(weights.ln1, weights.w_q)
from_disk = loaded["ln1.w_q"]

print("folded sites on disk:", ", ".join(sorted(loaded)))
print("ln1.w_q weight bit-identical after JSON round trip:",
      np.array_equal(from_disk.folded_weight, in_memory.folded_weight))

x = rng.standard_normal(cfg.d_model)
run_disk = fused_layernorm_matmul(x, from_disk, cfg.epsilon_ln)
run_mem = fused_layernorm_matmul(x, in_memory, cfg.epsilon_ln)
print("fused projection from the reloaded fold bit-identical:",
      np.array_equal(run_disk, run_mem))

# idempotence: folding again writes the same bytes
before = folded_path.read_bytes()
main(["fold", str(config_path), str(weights_path), str(folded_path), "--quiet"])
print("second fold invocation byte-identical:", folded_path.read_bytes() == before)
print(f"\nartifacts left in {workdir}")
