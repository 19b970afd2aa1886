import pytest

from cognav.config import RunConfig, dump_run_config, load_run_config
from cognav.errors import ConfigError
from cognav.prompts import ROLE_DESCRIBER, ROLE_PLANNER, ROLES


def test_defaults():
    config = load_run_config()
    assert (config.K, config.delta, config.forget_fraction, config.retrieval_k) == (7, 3.0, 0.10, 3)
    assert config.step_budget == 40
    assert config.backends == {role: "scripted" for role in ROLES}
    assert config.memory.delta == 3.0
    assert config.params.temperature == 0.0


def test_load_yaml_with_overrides(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("K: 5\nstep_budget: 12\nbackends:\n  planner: live\n", encoding="utf-8")
    config = load_run_config(path, {"seed": 9, "step_budget": None})
    assert (config.K, config.step_budget, config.seed) == (5, 12, 9)
    assert config.backends[ROLE_PLANNER] == "live"
    assert config.backends[ROLE_DESCRIBER] == "scripted"


def test_backends_as_single_mode():
    config = load_run_config(overrides={"backends": "live"})
    assert set(config.backends.values()) == {"live"}


def test_empty_yaml_uses_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("", encoding="utf-8")
    assert load_run_config(path) == RunConfig()


@pytest.mark.parametrize("overrides", [
    {"warp_speed": 3},
    {"K": 0},
    {"forget_fraction": 1.0},
    {"forget_cadence": "hourly"},
    {"completion_mode": "vibes"},
    {"backends": {"planner": "magic"}},
    {"backends": {"navigator": "scripted"}},
    {"backends": 3},
    {"planner_noise": 1.5},
])
def test_invalid_config(overrides):
    with pytest.raises(ConfigError):
        load_run_config(overrides=overrides)


def test_bad_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("K: [1, 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(path)
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.yaml")
    listed = tmp_path / "list.yaml"
    listed.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(listed)


def test_hints_follow_backend_mode():
    config = load_run_config(overrides={"backends": {"planner": "live"}})
    assert config.hints_for(ROLE_PLANNER) is False
    assert config.hints_for(ROLE_DESCRIBER) is True
    forced = load_run_config(overrides={"backends": {"planner": "live"}, "oracle_hints": True})
    assert forced.hints_for(ROLE_PLANNER) is True


def test_dump_then_load(tmp_path):
    config = load_run_config(overrides={"K": 4, "no_reflection": True, "planner_noise": 0.25})
    path = tmp_path / "out" / "run_config.yaml"
    dump_run_config(config, path)
    assert load_run_config(path) == config
