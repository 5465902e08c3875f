import json

import pytest

from quadlab.config import DEFAULTS, load_config, quad_params, section, sub_seed
from quadlab.errors import ConfigError
from quadlab.io import RunOutputs


def test_defaults_validate():
    cfg = load_config()
    assert cfg == DEFAULTS
    assert quad_params(cfg).mass == 0.027


def test_precedence(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("seed: 3\ntd3:\n  learning_rate: 0.01\n  batch_size: 64\n")
    cfg = load_config(f, ["td3.batch_size=32"], seed=9)
    assert cfg["td3.learning_rate"] == 0.01 and cfg["td3.batch_size"] == 32 and cfg["seed"] == 9


@pytest.mark.parametrize("override", ["td3.nope=1", "td3.batch_size=abc", "td3.batch_size=1.5",
                                      "nav.execution_mode=fly", "nav.target=[0,1]", "seed=-1",
                                      "tune.range.pos_kp=[3,1]", "noequals"])
def test_bad_overrides_name_the_key(override):
    with pytest.raises(ConfigError) as exc:
        load_config(None, [override])
    key = override.split("=")[0]
    assert key in str(exc.value) or "key=value" in str(exc.value)


def test_bad_yaml(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("a: [1,\n")
    with pytest.raises(ConfigError):
        load_config(f)
    f.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(f)


def test_sub_seeds_are_stable_and_distinct():
    assert sub_seed(7, "td3") == sub_seed(7, "td3")
    assert len({sub_seed(7, n) for n in ("td3", "tune", "disturbance")}) == 3
    assert sub_seed(7, "td3") != sub_seed(8, "td3")


def test_section():
    assert set(section(DEFAULTS, "traj.helix")) == {"radius", "height", "angular_rate", "duration", "center"}


def test_run_outputs_publish(tmp_path):
    with RunOutputs(tmp_path, "x", {"seed": 1}) as out:
        out.write_text("a.txt", "hi")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.txt", "manifest.json"]
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["outputs"] == ["a.txt"] and m["config"] == {"seed": 1} and m["subcommand"] == "x"
    assert set(m["timestamp_fields"]) == {"started_at", "finished_at"}


def test_run_outputs_atomic_on_error(tmp_path):
    with pytest.raises(RuntimeError):
        with RunOutputs(tmp_path, "x", {}) as out:
            out.write_text("a.txt", "partial")
            raise RuntimeError
    assert list(tmp_path.iterdir()) == []


def test_run_outputs_missing_declared_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        with RunOutputs(tmp_path, "x", {}) as out:
            out.path("never.csv")
    assert list(tmp_path.iterdir()) == []
