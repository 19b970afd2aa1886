import pytest

from cognav.cli import build_parser, main
from cognav.config import load_run_config


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli-suite")
    assert main(["--quiet", "generate", "--seed", "2", "--episodes", "2", "--out", str(path)]) == 0
    return path


def read_dir(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def run_args(suite, out, *extra):
    return ["--quiet", "run", "--suite", str(suite), "--out", str(out), *extra]


def test_generate_is_deterministic(suite, tmp_path):
    assert main(["--quiet", "generate", "--seed", "2", "--episodes", "2", "--out", str(tmp_path)]) == 0
    assert read_dir(tmp_path) == read_dir(suite)


def test_run_then_evaluate_gives_the_same_results(suite, tmp_path, capsys):
    assert main(run_args(suite, tmp_path)) == 0
    assert "Method" in capsys.readouterr().out
    before = (tmp_path / "results.csv").read_text(encoding="utf-8")
    assert main(["--quiet", "evaluate", "--suite", str(suite), "--run-dir", str(tmp_path)]) == 0
    assert (tmp_path / "results.csv").read_text(encoding="utf-8") == before


def test_record_then_replay(suite, tmp_path):
    rec, rep = tmp_path / "rec", tmp_path / "rep"
    assert main(run_args(suite, rec, "--record", "--planner-noise", "0.3")) == 0
    assert (rec / "cassette.jsonl").stat().st_size > 0
    assert main(["--quiet", "replay", "--suite", str(suite), "--from", str(rec), "--out", str(rep)]) == 0
    recorded, replayed = read_dir(rec / "traces"), read_dir(rep / "traces")
    assert recorded == replayed
    assert (rec / "results.csv").read_bytes() == (rep / "results.csv").read_bytes()


def test_replay_without_cassette_fails(suite, tmp_path):
    assert main(run_args(suite, tmp_path / "plain")) == 0
    assert main(["--quiet", "replay", "--suite", str(suite), "--from", str(tmp_path / "plain"),
                 "--out", str(tmp_path / "rep")]) == 2


def test_plot_writes_an_image(suite, tmp_path):
    assert main(run_args(suite, tmp_path / "run")) == 0
    out = tmp_path / "ep.png"
    assert main(["--quiet", "plot", "--suite", str(suite), "--run-dir", str(tmp_path / "run"),
                 "--episode", "ep-0000", "--out", str(out)]) == 0
    assert out.stat().st_size > 0


@pytest.mark.parametrize("argv", [
    ["--quiet", "run", "--suite", "/nonexistent/suite", "--out", "/tmp/unused"],
    ["--quiet", "evaluate", "--suite", "/nonexistent/suite", "--run-dir", "/nonexistent/run"],
])
def test_missing_inputs_exit_with_config_error(argv):
    assert main(argv) == 2


def test_bad_config_exits_with_config_error(suite, tmp_path):
    config = tmp_path / "run.yaml"
    config.write_text("K: 0\n", encoding="utf-8")
    assert main(run_args(suite, tmp_path / "out", "--config", str(config))) == 2


def test_parallel_requires_fresh_memory(suite, tmp_path):
    assert main(run_args(suite, tmp_path, "--parallel", "2")) == 2


def test_usage_errors_exit_with_two():
    assert main([]) == 2
    assert main(["run", "--suite", "x"]) == 2


def test_record_flag_defaults_to_run_dir():
    args = build_parser().parse_args(["run", "--suite", "s", "--out", "o", "--record"])
    assert args.record == ""
    args = build_parser().parse_args(["run", "--suite", "s", "--out", "o", "--record", "c.jsonl"])
    assert args.record == "c.jsonl"


def test_suite_can_come_from_the_config(suite, tmp_path):
    config = tmp_path / "run.yaml"
    config.write_text(f"episodes_path: {suite.as_posix()}\n", encoding="utf-8")
    assert main(["--quiet", "run", "--config", str(config), "--out", str(tmp_path / "run"), "--record"]) == 0
    assert load_run_config(tmp_path / "run" / "run_config.yaml").episodes_path == suite.as_posix()
    # replay picks the suite up from the recorded run config
    assert main(["--quiet", "replay", "--from", str(tmp_path / "run"), "--out", str(tmp_path / "rep")]) == 0
    assert read_dir(tmp_path / "run" / "traces") == read_dir(tmp_path / "rep" / "traces")


def test_run_without_any_suite_exits_with_config_error(tmp_path):
    assert main(["--quiet", "run", "--out", str(tmp_path)]) == 2
