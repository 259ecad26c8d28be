import json

import pytest

from gabor_inr.config import ConfigError, ExperimentConfig, load_config, parse_override

SYNTH = {"synth": {"kind": "siemens_star", "dims": [16, 16]}}


def test_defaults_are_filled_per_kind():
    cfg = load_config(base={"task": "fit", "io": SYNTH})
    a = cfg.model.activation
    assert (a.kind, a.omega0, a.s0) == ("wire", 20.0, 10.0)
    siren = load_config(base={"task": "fit", "io": SYNTH, "model": {"activation": {"kind": "siren"}}})
    assert siren.model.activation.omega0 == 40.0
    gauss = load_config(base={"task": "fit", "io": SYNTH, "model": {"activation": {"kind": "gauss"}}})
    assert gauss.model.activation.s0 == 30.0
    assert cfg.model.hidden_layers == 3 and cfg.train.lr_final_factor == 0.1


def test_unknown_keys_rejected_with_field_path():
    with pytest.raises(ConfigError, match="model.hiden_layers"):
        load_config(base={"task": "fit", "io": SYNTH, "model": {"hiden_layers": 2}})
    with pytest.raises(ConfigError, match="train.lr"):
        load_config(base={"task": "fit", "io": SYNTH, "train": {"lr": -1}})


def test_version_and_task_checked():
    with pytest.raises(ConfigError, match="version"):
        load_config(base={"version": 2, "task": "fit", "io": SYNTH})
    with pytest.raises(ConfigError, match="task"):
        load_config(base={"task": "paint", "io": SYNTH})
    with pytest.raises(ConfigError, match="io.input or io.synth"):
        load_config(base={"task": "fit"})
    with pytest.raises(ConfigError, match="dump.checkpoint"):
        load_config(base={"task": "dump-activations"})
    with pytest.raises(ConfigError, match="not both"):
        load_config(base={"task": "fit", "io": {"input": "a.pgm", **SYNTH}})


def test_overrides_are_validated_like_file_values():
    cfg = load_config(base={"task": "fit", "io": SYNTH},
                      overrides=["train.steps=7", 'model.activation={"kind": "gauss", "s0": 12}', "io.out=xyz"])
    assert cfg.train.steps == 7 and cfg.model.activation.s0 == 12.0 and cfg.io.out == "xyz"
    with pytest.raises(ConfigError, match="train.steps"):
        load_config(base={"task": "fit", "io": SYNTH}, overrides=["train.steps=many"])
    with pytest.raises(ConfigError):
        load_config(base={"task": "fit", "io": SYNTH}, overrides=["train.steps"])
    with pytest.raises(ConfigError, match="not a section"):
        load_config(base={"task": "fit", "io": SYNTH, "train": {"steps": 3}}, overrides=["train.steps.x=1"])


def test_parse_override_values():
    assert parse_override("a.b=3") == ("a.b", 3)
    assert parse_override("a=[1, 2]") == ("a", [1, 2])
    assert parse_override("a=camera.pgm") == ("a", "camera.pgm")
    assert parse_override("a=x=y") == ("a", "x=y")


def test_file_syntax_errors_report_position(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"task": "fit",\n "io": }')
    with pytest.raises(ConfigError, match="line 2, column"):
        load_config(path)
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="object"):
        load_config(path)


def test_seed_and_out_flags_override_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"task": "fit", "io": SYNTH, "train": {"seed": 1}}))
    cfg = load_config(path, seed=5, out="o")
    assert cfg.train.seed == 5 and cfg.io.out == "o"


def test_resolved_drops_output_dir_and_unused_blocks():
    cfg = load_config(base={"task": "fit", "io": SYNTH, "train": {"steps": 3}}, out="anywhere")
    r = cfg.resolved()
    assert "out" not in r["io"] and "ntk" not in r and "sweep" not in r
    assert r["train"]["steps"] == 3 and r["model"]["activation"]["omega0"] == 20.0
    assert ExperimentConfig.model_validate({**r, "task": "fit"}).resolved() == r


def test_sweep_axes_validated():
    with pytest.raises(ConfigError, match="unknown sweep axis"):
        load_config(base={"task": "sweep", "io": SYNTH, "sweep": {"axes": {"depth": [1]}}})
    with pytest.raises(ConfigError, match="no values"):
        load_config(base={"task": "sweep", "io": SYNTH, "sweep": {"axes": {"lr": []}}})


def test_operator_block_builds_each_task():
    cfg = load_config(base={"task": "ct", "io": SYNTH, "operator": {"angles": 10}})
    op = cfg.operator.build("ct", 16, 0)
    assert op.kind == "radon" and len(op.angles) == 10 and op.output_shape((16, 16, 1)) == (10, 16, 1)
    ms = cfg.operator.build("multisr", 16, 0)
    assert ms.kind == "warp_downsample" and len(ms.warps) == 4 and ms.warps[0].shift_xy == (0.0, 0.0)
    assert cfg.operator.build("superres", 16, 0).factor == 4
