import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from slotdie.cli import EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main
from slotdie.config import ConfigError, RunConfig
from slotdie.control import design_imc, design_p
from slotdie.datasets import cfd_gain, near_rank_one_gain, near_rank_one_surrogate
from slotdie.kernelmap import CrossGain
from slotdie.serialization import (
    SchemaError,
    controller_from_dict,
    controller_to_dict,
    jsonable,
    load_model,
    model_from_dict,
    model_to_dict,
    read_gain_csv,
    write_gain_csv,
)

ROOT = Path(__file__).resolve().parents[1]
PIPELINE = ROOT / "scripts" / "full_pipeline.sh"


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig.from_dict({})
        assert cfg.sample_time_s == 0.01 and cfg.seed == 0
        assert cfg.control.beta == 0.1
        np.testing.assert_array_equal(cfg.q0(), np.full(5, 1e-6))

    def test_seed_override_propagates(self):
        cfg = RunConfig.from_dict({}).with_seed(7)
        assert cfg.truth_plant_config().rng_seed == 7
        assert cfg.prbs_spec().base_seed == 7

    def test_dict_round_trip(self):
        cfg = RunConfig.from_dict({"control": {"type": "imc"}, "io": {"seed": 3}})
        assert RunConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize(
        "data",
        [
            {"bogus": 1},
            {"control": {"bogus": 1}},
            {"control": {"type": "pid"}},
            {"control": {"floor_fraction": 0.0}},
            {"io": {"seed": -1}},
            {"io": {"seed": True}},
            {"sample_time_s": 0},
            {"truth_plant": {"lateral_diffusivity_m2ps": 1.0}},
            {"geometry": {"stripe_centers_m": [0.045, 0.015]}},
            {"operating_point": {"q0_m3ps": [1e-6, 1e-6]}},
            {"ident": {"d_max": -1}},
            {"control": "p"},
        ],
    )
    def test_rejects_invalid(self, data):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(data)


class TestSerialization:
    def test_model_round_trip(self):
        model = load_model("builtin:cfd")
        back = model_from_dict(json.loads(json.dumps(model_to_dict(model))))
        assert back.surrogate == model.surrogate and back.d == model.d
        np.testing.assert_array_equal(back.H.H, model.H.H)
        np.testing.assert_array_equal(back.op.h0, model.op.h0)

    def test_model_missing_keys(self):
        with pytest.raises(SchemaError):
            model_from_dict({"L": 0.09})
        with pytest.raises(SchemaError):
            model_from_dict({"L": 0.09, "d": 9, "Ts": 0.01, "c0": 1.0, "c1": 1.0, "H": [[1, 2]]})

    def test_unknown_builtin(self):
        with pytest.raises(SchemaError):
            load_model("builtin:nope")

    def test_gain_csv_round_trip(self, tmp_path):
        write_gain_csv(cfd_gain(), tmp_path / "H.csv")
        assert np.array_equal(read_gain_csv(tmp_path / "H.csv").H, cfd_gain().H)
        model = load_model(str(tmp_path / "H.csv"))
        assert model.d == 9

    def test_controller_round_trip(self):
        model = load_model("builtin:near-rank-one")
        ctrl = design_imc(near_rank_one_gain(), near_rank_one_surrogate(), 0.01, 0.05)
        back = controller_from_dict(controller_to_dict(ctrl), model)
        np.testing.assert_array_equal(back.D, ctrl.D)
        p = design_p(cfd_gain(), 0.1)
        back_p = controller_from_dict(controller_to_dict(p), load_model("builtin:cfd"))
        np.testing.assert_array_equal(back_p.K_P, p.K_P)

    def test_controller_model_mismatch(self):
        data = controller_to_dict(design_imc(near_rank_one_gain(), near_rank_one_surrogate(), 0.01))
        with pytest.raises(SchemaError):
            controller_from_dict(data, load_model("builtin:cfd"))
        with pytest.raises(SchemaError):
            controller_from_dict({"type": "lqr"}, load_model("builtin:cfd"))

    def test_jsonable(self):
        out = jsonable({"a": np.array([1.0, np.nan]), "b": np.int64(3), "c": (np.float32(0.5),)})
        assert out == {"a": [1.0, None], "b": 3, "c": [0.5]}


def _run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


class TestCli:
    def test_stage_by_stage(self, tmp_path):
        assert _run(tmp_path, "simulate") == EXIT_OK
        assert _run(tmp_path, "identify", "--log", str(tmp_path / "log.csv")) == EXIT_OK
        model = json.loads((tmp_path / "model.json").read_text())
        assert model["d"] == 9 and model["provenance"] == "identified"
        assert _run(tmp_path, "calibrate-kernel", "--model", str(tmp_path / "model.json")) == EXIT_OK
        cal = json.loads((tmp_path / "calibration.json").read_text())
        assert cal["rel_error"] <= 0.15
        assert _run(tmp_path, "design-controller", "--model", str(tmp_path / "model.json")) == EXIT_OK
        assert (
            _run(tmp_path, "closed-loop", "--model", str(tmp_path / "model.json"),
                 "--controller", str(tmp_path / "controller.json"))
            == EXIT_OK
        )
        summary = json.loads((tmp_path / "summary.json").read_text())
        np.testing.assert_allclose(summary["final_values_m"], 100e-6, atol=0.05e-6)

    def test_builtin_imc_loop(self, tmp_path):
        assert _run(tmp_path, "design-controller", "--model", "builtin:near-rank-one", "--type", "imc") == EXIT_OK
        ctrl = json.loads((tmp_path / "controller.json").read_text())
        assert ctrl["type"] == "imc" and ctrl["floor_fraction"] == 0.05
        rc = _run(tmp_path, "closed-loop", "--model", "builtin:near-rank-one",
                  "--controller", str(tmp_path / "controller.json"))
        assert rc == EXIT_OK

    def test_global_flags_before_subcommand(self, tmp_path):
        assert main(["--out", str(tmp_path), "--seed", "2", "design-controller",
                     "--model", "builtin:cfd"]) == EXIT_OK
        assert (tmp_path / "controller.json").exists()

    def test_malformed_log_names_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,q1,h1\n0,1e-6,1e-4\n0.01,oops,1e-4\n")
        (tmp_path / "op.json").write_text(json.dumps({"q0_m3ps": [1e-6], "h0_m": [1e-4]}))
        rc = _run(tmp_path, "identify", "--log", str(bad), "--op", str(tmp_path / "op.json"))
        assert rc == EXIT_VALIDATION
        assert "line 3" in capsys.readouterr().err

    def test_missing_file_is_io_error(self, tmp_path):
        rc = _run(tmp_path, "identify", "--log", str(tmp_path / "none.csv"))
        assert rc == EXIT_IO

    def test_bad_config_is_validation_error(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"control": {"beta": -1}}))
        assert main(["--config", str(cfg), "simulate", "--out", str(tmp_path)]) == EXIT_VALIDATION

    def test_singular_gain_is_numerical_error(self, tmp_path):
        write_gain_csv(CrossGain(np.ones((5, 5))), tmp_path / "H.csv")
        rc = _run(tmp_path, "design-controller", "--model", str(tmp_path / "H.csv"), "--type", "p")
        assert rc == EXIT_NUMERICAL

    def test_non_positive_target(self, tmp_path):
        _run(tmp_path, "design-controller", "--model", "builtin:cfd")
        rc = _run(tmp_path, "closed-loop", "--model", "builtin:cfd",
                  "--controller", str(tmp_path / "controller.json"), "--target-m", "0")
        assert rc == EXIT_VALIDATION


def _pipeline(out: Path, seed: int = 0) -> dict[str, bytes]:
    env = dict(os.environ, SLOTDIE_CLI=f"{sys.executable} -m slotdie")
    subprocess.run(["bash", str(PIPELINE), str(out), str(seed)], check=True, env=env,
                   capture_output=True)
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_pipeline_is_byte_reproducible(tmp_path):
    a = _pipeline(tmp_path / "a")
    b = _pipeline(tmp_path / "b")
    assert set(a) == {"log.csv", "meta.json", "model.json", "validation.json", "calibration.json",
                      "controller.json", "closed_loop.csv", "summary.json"}
    assert a == b


def test_pipeline_seed_changes_data(tmp_path):
    a = _pipeline(tmp_path / "a", 0)
    b = _pipeline(tmp_path / "b", 1)
    assert a["log.csv"] != b["log.csv"]
