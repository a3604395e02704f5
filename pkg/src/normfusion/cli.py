"""Command-line interface: equivalence verification, latency simulation,
and compile-time weight folding.

All reports are JSON on stdout; progress chatter goes to stderr and can be
silenced with --quiet. Exit codes: 0 success, 1 numerical/acceptance
failure, 2 usage or config error. Given the same config and seed, repeated
runs produce byte-identical reports.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .block import build_graph, random_block_weights, run_conventional, run_fused
from .fusion import (
    fold_layernorm_linear,
    fold_rmsnorm_linear,
    fused_layernorm_matmul,
    fused_rmsnorm_llama_mlp,
    fused_softmax_matmul,
    silu,
)
from .jsonio import (
    SCHEMA_VERSION,
    ConfigError,
    RunConfig,
    config_dict,
    dumps_report,
    latency_dict,
    load_block_weights,
    load_config,
    save_folded_weights,
    timeline_csv,
)
from .norms import LayerNormParams, RmsNormParams, layernorm, rmsnorm, softmax_stable
from .simulator import compare, schedule
from .tensor import max_rel_error, rowvec_matmul

__all__ = ["main", "main_entry", "default_config_path"]

VERIFY_SITES = ("layernorm_linear", "softmax_matmul", "rmsnorm_llama_mlp", "full_block")

_DATA_DIR = Path(__file__).parent / "data"


def default_config_path(name: str = "llama7b_sim") -> Path:
    """Path of a shipped config: "llama7b_sim" or "verify_small"."""
    path = _DATA_DIR / f"{name}.json"
    if not path.exists():
        raise ValueError(f"no shipped config named {name!r}")
    return path


def _site_rng(seed: int, site_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, site_index, trial])


def _verify_layernorm_linear(rc: RunConfig, trial: int) -> float:
    rng = _site_rng(rc.seed, 0, trial)
    n = rc.block.d_model
    x = rng.standard_normal(n)
    params = LayerNormParams(
        gamma=rng.uniform(0.5, 1.5, size=n),
        beta=rng.standard_normal(n) * 0.1,
        epsilon=rc.block.epsilon_ln,
    )
    f = rng.standard_normal((n, n)) / np.sqrt(n)
    expected = rowvec_matmul(layernorm(x, params), f)
    actual = fused_layernorm_matmul(x, fold_layernorm_linear(params, f), params.epsilon)
    return max_rel_error(actual, expected)


def _verify_softmax_matmul(rc: RunConfig, trial: int) -> float:
    rng = _site_rng(rc.seed, 1, trial)
    n = rc.block.d_model
    x = rng.uniform(-1e3, 1e3, size=n)
    v = rng.standard_normal((n, n)) / np.sqrt(n)
    expected = rowvec_matmul(softmax_stable(x), v)
    actual = fused_softmax_matmul(x, v)
    return max_rel_error(actual, expected)


def _verify_rmsnorm_llama_mlp(rc: RunConfig, trial: int) -> float:
    rng = _site_rng(rc.seed, 2, trial)
    n, h = rc.block.d_model, rc.block.mlp_hidden
    x = rng.standard_normal(n)
    params = RmsNormParams(gamma=rng.uniform(0.5, 1.5, size=n), epsilon=rc.block.epsilon_ln)
    w_gate = rng.standard_normal((n, h)) / np.sqrt(n)
    w_up = rng.standard_normal((n, h)) / np.sqrt(n)
    w_down = rng.standard_normal((h, n)) / np.sqrt(h)

    normed = rmsnorm(x, params)
    gated = silu(rowvec_matmul(normed, w_gate)) * rowvec_matmul(normed, w_up)
    expected = rowvec_matmul(gated, w_down)
    actual = fused_rmsnorm_llama_mlp(
        x,
        fold_rmsnorm_linear(params, w_gate),
        fold_rmsnorm_linear(params, w_up),
        w_down,
        params.epsilon,
    )
    return max_rel_error(actual, expected)


def _verify_full_block(rc: RunConfig, trial: int) -> float:
    rng = _site_rng(rc.seed, 3, trial)
    cfg = rc.block
    weights = random_block_weights(cfg, rng)
    x = rng.standard_normal((cfg.seq_len, cfg.d_model))
    return max_rel_error(run_fused(cfg, weights, x), run_conventional(cfg, weights, x))


_VERIFY_FNS = {
    "layernorm_linear": _verify_layernorm_linear,
    "softmax_matmul": _verify_softmax_matmul,
    "rmsnorm_llama_mlp": _verify_rmsnorm_llama_mlp,
    "full_block": _verify_full_block,
}


def cmd_verify(rc: RunConfig, quiet: bool) -> int:
    sites = {}
    all_pass = True
    for name in VERIFY_SITES:
        worst = 0.0
        for trial in range(rc.trials):
            worst = max(worst, _VERIFY_FNS[name](rc, trial))
        ok = worst <= rc.tolerance
        all_pass = all_pass and ok
        sites[name] = {"max_rel_err": worst, "pass": ok}
        if not quiet:
            print(f"verify: {name}: max_rel_err={worst:.3e} "
                  f"({'ok' if ok else 'FAIL'} at tolerance {rc.tolerance:g})", file=sys.stderr)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "seed": rc.seed,
        "trials": rc.trials,
        "tolerance": rc.tolerance,
        "config": config_dict(rc),
        "equivalence": sites,
        "pass": all_pass,
    }
    sys.stdout.write(dumps_report(report))
    return 0 if all_pass else 1


def _csv_path(base: str, mode: str, both: bool) -> Path:
    path = Path(base)
    if not both:
        return path
    stem = path.name[: -len(".csv")] if path.name.endswith(".csv") else path.name
    return path.with_name(f"{stem}.{mode}.csv")


def cmd_simulate(rc: RunConfig, mode: str, csv_base: str | None, quiet: bool) -> int:
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "seed": rc.seed,
        "config": config_dict(rc),
        "mode": mode,
    }
    graphs = {
        name: build_graph(rc.block, fused=(name == "fused"))
        for name in (("conventional", "fused") if mode == "both" else (mode,))
    }
    if mode == "both":
        rep = compare(graphs["conventional"], graphs["fused"], rc.cost_model)
        report["latency"] = latency_dict(rep)
        if not quiet:
            print(
                f"simulate: conventional={rep.conventional_total} fused={rep.fused_total} "
                f"speedup={rep.speedup_percent:.2f}%", file=sys.stderr,
            )
    else:
        graph = graphs[mode]
        timeline = schedule(graph, rc.cost_model)
        nodes = {n.id: n for n in graph.nodes}
        report["latency"] = {
            "total": timeline.total,
            "timeline": [
                {"node_id": e.node_id, "kind": nodes[e.node_id].kind, "engine": e.engine,
                 "start_cycle": e.start, "end_cycle": e.end}
                for e in timeline.entries
            ],
        }
        if not quiet:
            print(f"simulate: {mode} total={timeline.total} cycles", file=sys.stderr)

    if csv_base is not None:
        for name, graph in graphs.items():
            out = _csv_path(csv_base, name, both=(mode == "both"))
            out.write_text(timeline_csv(graph, schedule(graph, rc.cost_model)))
            report.setdefault("csv", []).append(str(out))

    sys.stdout.write(dumps_report(report))
    return 0


def cmd_fold(rc: RunConfig, weights_in: str, weights_out: str, quiet: bool) -> int:
    cfg = rc.block
    w = load_block_weights(weights_in, cfg)
    if cfg.variant == "standard-gelu":
        sites = {
            "ln1.w_q": fold_layernorm_linear(w.ln1, w.w_q),
            "ln1.w_k": fold_layernorm_linear(w.ln1, w.w_k),
            "ln1.w_v": fold_layernorm_linear(w.ln1, w.w_v),
            "ln2.fc1": fold_layernorm_linear(w.ln2, w.fc1),
        }
    else:
        sites = {
            "ln1.w_q": fold_rmsnorm_linear(w.ln1, w.w_q),
            "ln1.w_k": fold_rmsnorm_linear(w.ln1, w.w_k),
            "ln1.w_v": fold_rmsnorm_linear(w.ln1, w.w_v),
            "ln2.w_gate": fold_rmsnorm_linear(w.ln2, w.mlp.w_gate),
            "ln2.w_up": fold_rmsnorm_linear(w.ln2, w.mlp.w_up),
        }
    save_folded_weights(weights_out, cfg, sites)
    if not quiet:
        print(f"fold: wrote {len(sites)} folded site(s) to {weights_out}", file=sys.stderr)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "fold",
        "seed": rc.seed,
        "config": config_dict(rc),
        "sites": sorted(sites),
        "output": weights_out,
    }
    sys.stdout.write(dumps_report(report))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="normfusion",
        description="Deferred-normalization fusion: verify equivalence, simulate latency, fold weights.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="JSON run config (see shipped configs under normfusion/data/)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--quiet", action="store_true", help="suppress non-JSON stderr output")

    p_verify = sub.add_parser("verify", help="randomized fused-vs-conventional equivalence checks")
    common(p_verify)

    p_sim = sub.add_parser("simulate", help="two-engine latency simulation")
    common(p_sim)
    mode = p_sim.add_mutually_exclusive_group()
    mode.add_argument("--both", dest="mode", action="store_const", const="both",
                      help="schedule both graphs and report the speedup (default)")
    mode.add_argument("--fused", dest="mode", action="store_const", const="fused")
    mode.add_argument("--conventional", dest="mode", action="store_const", const="conventional")
    p_sim.set_defaults(mode="both")
    p_sim.add_argument("--csv", metavar="PATH", default=None,
                       help="write timeline CSV (with --both, writes PATH.conventional.csv and PATH.fused.csv)")

    p_fold = sub.add_parser("fold", help="fold norm parameters into downstream weights")
    common(p_fold)
    p_fold.add_argument("weights_in", help="block-weights JSON file")
    p_fold.add_argument("weights_out", help="output folded-weights JSON file")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0

    try:
        rc = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(f"--seed must be non-negative, got {args.seed}")
            rc = dataclasses.replace(rc, seed=args.seed)
        if args.command == "verify":
            return cmd_verify(rc, args.quiet)
        if args.command == "simulate":
            return cmd_simulate(rc, args.mode, args.csv, args.quiet)
        return cmd_fold(rc, args.weights_in, args.weights_out, args.quiet)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main_entry() -> None:
    sys.exit(main())
