#!/usr/bin/env python3
"""Schedule a 7B-scale decoder block on the two-engine cost model.

The conventional graph serializes elementwise -> collective -> matmul at
every normalization site. The fused graph cuts the collective->matmul
edge, so the vector engine's reduction runs while the matrix engine
multiplies; a small scale node joins them afterwards. The makespan
difference is the hidden collective time.
"""

from normfusion import build_graph, compare, load_config, schedule
from normfusion.cli import default_config_path

rc = load_config(str(default_config_path("llama7b_sim")))
cfg, cm = rc.block, rc.cost_model

print(f"block: d_model={cfg.d_model} heads={cfg.n_heads} seq={cfg.seq_len} "
      f"hidden={cfg.mlp_hidden} ({cfg.variant})")
print(f"cost model: matrix {cm.matrix_macs_per_cycle:.0f} MACs/cy, "
      f"vector {cm.vector_elems_per_cycle:.0f} elems/cy, "
      f"collective {cm.collective_alpha:.0f} + {cm.collective_beta:.0f}/tree-level, "
      f"sync {cm.sync_overhead:.0f}\n")

conv = build_graph(cfg, fused=False)
fused = build_graph(cfg, fused=True)

print("fused-graph timeline (cycle spans per engine):")
timeline = schedule(fused, cm)
nodes = {n.id: n for n in fused.nodes}
for entry in timeline.entries:
    node = nodes[entry.node_id]
    bar = "M" if entry.engine == "matrix" else "v"
    print(f"  [{bar}] {node.name:<22} {entry.start:>9} -> {entry.end:>9}  ({node.kind})")

report = compare(conv, fused, cm)
print(f"\nconventional makespan: {report.conventional_total:>9} cycles")
print(f"fused makespan:        {report.fused_total:>9} cycles")
for saving in report.per_site_savings:
    print(f"  hidden at {saving.site:<8}: {saving.hidden_cycles:>9} cycles")
print(f"speedup: {report.speedup_percent:.2f}%  "
      "(the collectively-computed denominators ride along under the matmuls)")
