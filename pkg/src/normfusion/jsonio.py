"""JSON config, weight-file, and report serialization.

Numbers round-trip exactly: floats are serialized with Python's
shortest-round-trip repr (what `json` emits) and parsed back with
correctly-rounded `float()`, so a save/load cycle is bit-lossless. Report
dicts are built in a fixed key order and serialized with a fixed layout,
making repeated runs byte-identical.

Config files use exactly the RunConfig field names (snake_case); unknown
keys anywhere are rejected so typos fail loudly instead of silently
falling back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from .block import BlockConfig, BlockWeights
from .fusion import FoldedLinear, LlamaMlpWeights, RmsFoldedLinear
from .norms import LayerNormParams, RmsNormParams
from .simulator import CostModel, LatencyReport, Timeline

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "save_block_weights",
    "load_block_weights",
    "save_folded_weights",
    "load_folded_weights",
    "dumps_report",
    "timeline_csv",
]

SCHEMA_VERSION = "1"


class ConfigError(ValueError):
    """Malformed or inconsistent configuration / weight file (CLI exit 2)."""


@dataclass(frozen=True)
class RunConfig:
    block: BlockConfig
    cost_model: CostModel
    seed: int = 0
    trials: int = 10
    tolerance: float = 1e-10
    notes: str = ""

    def __post_init__(self):
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError(f"trials must be a positive integer, got {self.trials!r}")
        # tolerance 0 is accepted (and will fail verification numerically);
        # only negatives are malformed.
        if not self.tolerance >= 0:
            raise ConfigError(f"tolerance must be non-negative, got {self.tolerance!r}")


def _take(mapping: dict, context: str, required: tuple[str, ...], optional: tuple[str, ...]) -> dict:
    if not isinstance(mapping, dict):
        raise ConfigError(f"{context} must be a JSON object")
    unknown = set(mapping) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"unknown key(s) in {context}: {', '.join(sorted(unknown))}")
    missing = [k for k in required if k not in mapping]
    if missing:
        raise ConfigError(f"missing key(s) in {context}: {', '.join(missing)}")
    return mapping


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e

    _take(raw, "config", required=("block", "cost_model"),
          optional=("seed", "trials", "tolerance", "notes"))
    block_raw = _take(
        raw["block"], "config.block",
        required=("d_model", "n_heads", "seq_len", "mlp_hidden"),
        optional=("variant", "epsilon_ln"),
    )
    cm_raw = _take(
        raw["cost_model"], "config.cost_model",
        required=("matrix_macs_per_cycle", "vector_elems_per_cycle"),
        optional=("collective_alpha", "collective_beta", "sync_overhead"),
    )
    try:
        block = BlockConfig(**block_raw)
        cost_model = CostModel(**cm_raw)
        return RunConfig(
            block=block,
            cost_model=cost_model,
            seed=raw.get("seed", 0),
            trials=raw.get("trials", 10),
            tolerance=raw.get("tolerance", 1e-10),
            notes=raw.get("notes", ""),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def config_dict(rc: RunConfig) -> dict:
    """RunConfig echoed as a plain dict in canonical key order."""
    return {
        "block": {
            "d_model": rc.block.d_model,
            "n_heads": rc.block.n_heads,
            "seq_len": rc.block.seq_len,
            "mlp_hidden": rc.block.mlp_hidden,
            "variant": rc.block.variant,
            "epsilon_ln": rc.block.epsilon_ln,
        },
        "cost_model": {
            "matrix_macs_per_cycle": rc.cost_model.matrix_macs_per_cycle,
            "vector_elems_per_cycle": rc.cost_model.vector_elems_per_cycle,
            "collective_alpha": rc.cost_model.collective_alpha,
            "collective_beta": rc.cost_model.collective_beta,
            "sync_overhead": rc.cost_model.sync_overhead,
        },
        "seed": rc.seed,
        "trials": rc.trials,
        "tolerance": rc.tolerance,
        "notes": rc.notes,
    }


# --------------------------------------------------------------------------
# Weight files: shape header + row-major full-precision decimal arrays
# --------------------------------------------------------------------------


def _matrix_json(m: np.ndarray) -> dict:
    return {"rows": int(m.shape[0]), "cols": int(m.shape[1]), "data": [float(v) for v in m.ravel()]}


def _matrix_from_json(obj: Any, context: str) -> np.ndarray:
    _take(obj, context, required=("rows", "cols", "data"), optional=())
    rows, cols, data = obj["rows"], obj["cols"], obj["data"]
    if not (isinstance(rows, int) and isinstance(cols, int) and rows > 0 and cols > 0):
        raise ConfigError(f"{context}: rows/cols must be positive integers")
    if len(data) != rows * cols:
        raise ConfigError(f"{context}: data length {len(data)} != rows*cols {rows * cols}")
    return np.array(data, dtype=np.float64).reshape(rows, cols)


def _vector_json(v: np.ndarray) -> list[float]:
    return [float(x) for x in v]


def save_block_weights(path: str, cfg: BlockConfig, w: BlockWeights) -> None:
    w.validate(cfg)
    matrices = {"w_q": w.w_q, "w_k": w.w_k, "w_v": w.w_v, "w_o": w.w_o}
    if cfg.variant == "standard-gelu":
        matrices.update(fc1=w.fc1, fc2=w.fc2)
        norms = {
            "ln1": {"gamma": _vector_json(w.ln1.gamma), "beta": _vector_json(w.ln1.beta),
                    "epsilon": float(w.ln1.epsilon)},
            "ln2": {"gamma": _vector_json(w.ln2.gamma), "beta": _vector_json(w.ln2.beta),
                    "epsilon": float(w.ln2.epsilon)},
        }
    else:
        matrices.update(w_gate=w.mlp.w_gate, w_up=w.mlp.w_up, w_down=w.mlp.w_down)
        norms = {
            "ln1": {"gamma": _vector_json(w.ln1.gamma), "epsilon": float(w.ln1.epsilon)},
            "ln2": {"gamma": _vector_json(w.ln2.gamma), "epsilon": float(w.ln2.epsilon)},
        }
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "block-weights",
        "variant": cfg.variant,
        "matrices": {name: _matrix_json(m) for name, m in matrices.items()},
        "norms": norms,
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_block_weights(path: str, cfg: BlockConfig) -> BlockWeights:
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read weight file: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"weight file is not valid JSON: {e}") from e

    _take(doc, "weights", required=("schema_version", "kind", "variant", "matrices", "norms"),
          optional=())
    if doc["kind"] != "block-weights":
        raise ConfigError(f"expected a block-weights file, got kind {doc['kind']!r}")
    if doc["variant"] != cfg.variant:
        raise ConfigError(
            f"weight file variant {doc['variant']!r} does not match config {cfg.variant!r}"
        )
    mats = {name: _matrix_from_json(obj, f"weights.matrices.{name}")
            for name, obj in doc["matrices"].items()}
    norms = doc["norms"]

    def norm_params(key: str):
        entry = norms.get(key)
        if entry is None:
            raise ConfigError(f"weights.norms.{key} is missing")
        if cfg.variant == "standard-gelu":
            _take(entry, f"weights.norms.{key}", required=("gamma", "beta", "epsilon"), optional=())
            return LayerNormParams(gamma=entry["gamma"], beta=entry["beta"], epsilon=entry["epsilon"])
        _take(entry, f"weights.norms.{key}", required=("gamma", "epsilon"), optional=())
        return RmsNormParams(gamma=entry["gamma"], epsilon=entry["epsilon"])

    try:
        if cfg.variant == "standard-gelu":
            w = BlockWeights(
                w_q=mats["w_q"], w_k=mats["w_k"], w_v=mats["w_v"], w_o=mats["w_o"],
                ln1=norm_params("ln1"), ln2=norm_params("ln2"),
                fc1=mats["fc1"], fc2=mats["fc2"],
            )
        else:
            w = BlockWeights(
                w_q=mats["w_q"], w_k=mats["w_k"], w_v=mats["w_v"], w_o=mats["w_o"],
                ln1=norm_params("ln1"), ln2=norm_params("ln2"),
                mlp=LlamaMlpWeights(w_gate=mats["w_gate"], w_up=mats["w_up"], w_down=mats["w_down"]),
            )
        w.validate(cfg)
    except KeyError as e:
        raise ConfigError(f"weight file is missing matrix {e}") from e
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return w


def save_folded_weights(path: str, cfg: BlockConfig,
                        sites: dict[str, FoldedLinear | RmsFoldedLinear]) -> None:
    entries = {}
    for name, fold in sites.items():
        entry = {"folded_weight": _matrix_json(fold.folded_weight)}
        if isinstance(fold, FoldedLinear):
            entry["folded_bias"] = _vector_json(fold.folded_bias)
        entries[name] = entry
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "folded-weights",
        "variant": cfg.variant,
        "sites": entries,
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_folded_weights(path: str) -> dict[str, FoldedLinear | RmsFoldedLinear]:
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read folded-weight file: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"folded-weight file is not valid JSON: {e}") from e

    _take(doc, "folded", required=("schema_version", "kind", "variant", "sites"), optional=())
    if doc["kind"] != "folded-weights":
        raise ConfigError(f"expected a folded-weights file, got kind {doc['kind']!r}")
    out: dict[str, FoldedLinear | RmsFoldedLinear] = {}
    for name, entry in doc["sites"].items():
        _take(entry, f"folded.sites.{name}", required=("folded_weight",), optional=("folded_bias",))
        weight = _matrix_from_json(entry["folded_weight"], f"folded.sites.{name}.folded_weight")
        if "folded_bias" in entry:
            out[name] = FoldedLinear(folded_weight=weight, folded_bias=entry["folded_bias"])
        else:
            out[name] = RmsFoldedLinear(folded_weight=weight)
    return out


# --------------------------------------------------------------------------
# Reports and timeline CSV
# --------------------------------------------------------------------------


def latency_dict(rep: LatencyReport) -> dict:
    return {
        "conventional_total": rep.conventional_total,
        "fused_total": rep.fused_total,
        "per_site_savings": [
            {"site": s.site, "hidden_cycles": s.hidden_cycles} for s in rep.per_site_savings
        ],
        "speedup_percent": rep.speedup_percent,
    }


def dumps_report(report: dict) -> str:
    """Stable serialization used for all stdout reports."""
    return json.dumps(report, indent=2) + "\n"


def timeline_csv(graph, timeline: Timeline) -> str:
    lines = ["node_id,kind,engine,start_cycle,end_cycle"]
    nodes = {n.id: n for n in graph.nodes}
    for e in timeline.entries:
        lines.append(f"{e.node_id},{nodes[e.node_id].kind},{e.engine},{e.start},{e.end}")
    return "\n".join(lines) + "\n"
