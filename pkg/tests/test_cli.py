"""CLI behavior: exit codes, report shape/determinism, folding round-trips."""

import json

import jsonschema
import numpy as np
import pytest
from numpy.testing import assert_array_equal

from normfusion.block import BlockConfig, random_block_weights
from normfusion.cli import default_config_path, main
from normfusion.fusion import (
    FoldedLinear,
    fold_layernorm_linear,
    fold_rmsnorm_linear,
    fused_layernorm_matmul,
)
from normfusion.jsonio import (
    load_block_weights,
    load_folded_weights,
    save_block_weights,
)

SCHEMA = json.loads((default_config_path().parent / "report.schema.json").read_text())


def small_config(tmp_path, **overrides):
    cfg = {
        "block": {"d_model": 16, "n_heads": 2, "seq_len": 4, "mlp_hidden": 24,
                  "variant": "llama-swiglu", "epsilon_ln": 1e-5},
        "cost_model": {"matrix_macs_per_cycle": 256, "vector_elems_per_cycle": 64,
                       "collective_alpha": 100, "collective_beta": 10, "sync_overhead": 4},
        "seed": 7,
        "trials": 5,
        "tolerance": 1e-10,
    }
    for key, value in overrides.items():
        if isinstance(value, dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestVerify:
    def test_passes_on_small_config(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "verify", small_config(tmp_path))
        assert code == 0
        report = json.loads(out)
        jsonschema.validate(report, SCHEMA)
        assert report["pass"] is True
        for site in ("layernorm_linear", "softmax_matmul", "rmsnorm_llama_mlp", "full_block"):
            assert report["equivalence"][site]["max_rel_err"] <= 1e-10

    def test_shipped_verify_config_passes(self, capsys):
        code, out, _ = run_cli(capsys, "verify", str(default_config_path("verify_small")), "--quiet")
        assert code == 0
        assert json.loads(out)["pass"] is True

    def test_zero_tolerance_fails_numerically(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "verify", small_config(tmp_path, tolerance=0.0))
        assert code == 1
        report = json.loads(out)
        jsonschema.validate(report, SCHEMA)
        assert report["pass"] is False

    def test_indivisible_heads_is_config_error(self, tmp_path, capsys):
        path = small_config(tmp_path, block={"d_model": 15})
        code, out, err = run_cli(capsys, "verify", path)
        assert code == 2
        assert out == ""
        assert "divisible" in err

    def test_unknown_key_rejected(self, tmp_path, capsys):
        path = small_config(tmp_path, tollerance=1e-10)
        code, _, err = run_cli(capsys, "verify", path)
        assert code == 2
        assert "unknown key" in err

    def test_unknown_nested_key_rejected(self, tmp_path, capsys):
        path = small_config(tmp_path, cost_model={"warp_size": 32})
        code, _, err = run_cli(capsys, "verify", path)
        assert code == 2
        assert "warp_size" in err

    def test_malformed_json_rejected(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        code, _, err = run_cli(capsys, "verify", str(path))
        assert code == 2
        assert "not valid JSON" in err

    def test_missing_file_rejected(self, tmp_path, capsys):
        code, _, _ = run_cli(capsys, "verify", str(tmp_path / "nope.json"))
        assert code == 2

    def test_byte_identical_reports(self, tmp_path, capsys):
        path = small_config(tmp_path)
        _, first, _ = run_cli(capsys, "verify", path, "--quiet")
        _, second, _ = run_cli(capsys, "verify", path, "--quiet")
        assert first == second

    def test_seed_override_changes_report(self, tmp_path, capsys):
        path = small_config(tmp_path)
        _, base, _ = run_cli(capsys, "verify", path)
        code, overridden, _ = run_cli(capsys, "verify", path, "--seed", "123")
        assert code == 0
        assert json.loads(overridden)["seed"] == 123
        assert json.loads(base)["seed"] == 7

    def test_quiet_suppresses_stderr(self, tmp_path, capsys):
        path = small_config(tmp_path)
        _, _, err = run_cli(capsys, "verify", path, "--quiet")
        assert err == ""
        _, _, err = run_cli(capsys, "verify", path)
        assert "verify:" in err


class TestSimulate:
    def test_default_config_hits_target_band(self, capsys):
        code, out, _ = run_cli(capsys, "simulate", str(default_config_path("llama7b_sim")), "--quiet")
        assert code == 0
        report = json.loads(out)
        jsonschema.validate(report, SCHEMA)
        assert 15.0 <= report["latency"]["speedup_percent"] <= 20.0

    def test_byte_identical_reports(self, capsys):
        path = str(default_config_path("llama7b_sim"))
        _, first, _ = run_cli(capsys, "simulate", path, "--quiet")
        _, second, _ = run_cli(capsys, "simulate", path, "--quiet")
        assert first == second

    def test_single_mode_totals_match_both(self, tmp_path, capsys):
        path = small_config(tmp_path)
        _, both, _ = run_cli(capsys, "simulate", path, "--quiet")
        _, fused, _ = run_cli(capsys, "simulate", path, "--fused", "--quiet")
        _, conv, _ = run_cli(capsys, "simulate", path, "--conventional", "--quiet")
        both_latency = json.loads(both)["latency"]
        fused_report, conv_report = json.loads(fused), json.loads(conv)
        jsonschema.validate(fused_report, SCHEMA)
        jsonschema.validate(conv_report, SCHEMA)
        assert fused_report["latency"]["total"] == both_latency["fused_total"]
        assert conv_report["latency"]["total"] == both_latency["conventional_total"]
        # single-mode reports embed the full timeline as JSON
        timeline = fused_report["latency"]["timeline"]
        assert timeline and max(e["end_cycle"] for e in timeline) == fused_report["latency"]["total"]

    def test_json_timeline_matches_csv(self, tmp_path, capsys):
        path = small_config(tmp_path)
        csv_path = tmp_path / "tl.csv"
        _, out, _ = run_cli(capsys, "simulate", path, "--conventional", "--csv", str(csv_path), "--quiet")
        timeline = json.loads(out)["latency"]["timeline"]
        csv_rows = csv_path.read_text().strip().splitlines()[1:]
        assert len(csv_rows) == len(timeline)
        for entry, row in zip(timeline, csv_rows):
            fields = row.split(",")
            assert [str(entry["node_id"]), entry["kind"], entry["engine"],
                    str(entry["start_cycle"]), str(entry["end_cycle"])] == fields

    def test_csv_export(self, tmp_path, capsys):
        path = small_config(tmp_path)
        csv_path = tmp_path / "timeline.csv"
        code, out, _ = run_cli(capsys, "simulate", path, "--fused", "--csv", str(csv_path), "--quiet")
        assert code == 0
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "node_id,kind,engine,start_cycle,end_cycle"
        assert len(lines) > 1
        for line in lines[1:]:
            node_id, kind, engine, start, end = line.split(",")
            assert kind in ("elementwise", "collective", "matmul", "sync")
            assert engine in ("vector", "matrix")
            assert int(end) >= int(start) >= 0

    def test_csv_both_writes_two_files(self, tmp_path, capsys):
        path = small_config(tmp_path)
        base = tmp_path / "tl.csv"
        code, out, _ = run_cli(capsys, "simulate", path, "--csv", str(base), "--quiet")
        assert code == 0
        report = json.loads(out)
        assert (tmp_path / "tl.conventional.csv").exists()
        assert (tmp_path / "tl.fused.csv").exists()
        assert sorted(report["csv"]) == sorted(
            [str(tmp_path / "tl.conventional.csv"), str(tmp_path / "tl.fused.csv")]
        )

    def test_zero_collective_zero_speedup(self, tmp_path, capsys):
        path = small_config(
            tmp_path,
            cost_model={"collective_alpha": 0, "collective_beta": 0,
                        "vector_elems_per_cycle": 1e12, "sync_overhead": 0},
        )
        _, out, _ = run_cli(capsys, "simulate", path, "--quiet")
        assert abs(json.loads(out)["latency"]["speedup_percent"]) <= 0.5


class TestFold:
    @pytest.fixture(params=["standard-gelu", "llama-swiglu"])
    def setup(self, request, tmp_path):
        variant = request.param
        cfg_path = small_config(tmp_path, block={"variant": variant})
        cfg = BlockConfig(d_model=16, n_heads=2, seq_len=4, mlp_hidden=24, variant=variant)
        weights = random_block_weights(cfg, np.random.default_rng(99))
        win = tmp_path / "weights.json"
        save_block_weights(str(win), cfg, weights)
        return cfg_path, cfg, weights, win, tmp_path / "folded.json"

    def test_fold_round_trip_is_bit_exact(self, setup, capsys):
        cfg_path, cfg, weights, win, wout = setup
        code, out, _ = run_cli(capsys, "fold", cfg_path, str(win), str(wout), "--quiet")
        assert code == 0
        jsonschema.validate(json.loads(out), SCHEMA)

        loaded = load_folded_weights(str(wout))
        fold = fold_layernorm_linear if cfg.variant == "standard-gelu" else fold_rmsnorm_linear
        for name, matrix in (("w_q", weights.w_q), ("w_k", weights.w_k), ("w_v", weights.w_v)):
            in_memory = fold(weights.ln1, matrix)
            assert_array_equal(loaded[f"ln1.{name}"].folded_weight, in_memory.folded_weight)
            if isinstance(in_memory, FoldedLinear):
                assert_array_equal(loaded[f"ln1.{name}"].folded_bias, in_memory.folded_bias)

        if cfg.variant == "standard-gelu":
            # a fused run through the deserialized fold is bit-equal to the
            # in-memory one
            x = np.random.default_rng(5).standard_normal(cfg.d_model)
            in_memory = fold_layernorm_linear(weights.ln1, weights.w_q)
            assert_array_equal(
                fused_layernorm_matmul(x, loaded["ln1.w_q"], cfg.epsilon_ln),
                fused_layernorm_matmul(x, in_memory, cfg.epsilon_ln),
            )

    def test_fold_is_idempotent(self, setup, capsys):
        cfg_path, _, _, win, wout = setup
        run_cli(capsys, "fold", cfg_path, str(win), str(wout), "--quiet")
        first = wout.read_bytes()
        run_cli(capsys, "fold", cfg_path, str(win), str(wout), "--quiet")
        assert wout.read_bytes() == first

    def test_weight_block_round_trip(self, setup, capsys):
        _, cfg, weights, win, _ = setup
        loaded = load_block_weights(str(win), cfg)
        assert_array_equal(loaded.w_q, weights.w_q)
        assert_array_equal(loaded.ln1.gamma, weights.ln1.gamma)

    def test_dimension_mismatch_is_config_error(self, setup, tmp_path, capsys):
        cfg_path, cfg, weights, win, wout = setup
        other_cfg = small_config(tmp_path, block={"d_model": 32, "variant": cfg.variant})
        code, _, err = run_cli(capsys, "fold", other_cfg, str(win), str(wout), "--quiet")
        assert code == 2
        assert "shape" in err or "match" in err


class TestUsage:
    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == 2

    def test_unknown_flag_is_usage_error(self, tmp_path, capsys):
        assert main(["simulate", small_config(tmp_path), "--gantt"]) == 2

    def test_negative_seed_rejected(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "verify", small_config(tmp_path), "--seed", "-3")
        assert code == 2
