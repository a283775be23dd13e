import json

import pytest

from scaleup import config
from scaleup.cli import main
from scaleup.models import DeltaGuard, RunConfig, SubpopulationFilter
from scaleup.errors import SurveyValidationError

SMALL_BINOMIAL = {
    "respondents": 1500,
    "subpopulations": 8,
    "total_population": 1000000,
    "size_bounds": [5000, 50000],
    "degree_bounds": [10, 500],
}


def write_config(tmp_path, payload, name="sim.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def test_simulate_writes_world(tmp_path, capsys):
    out = tmp_path / "world"
    code = main(["simulate", "--kind", "binomial", "--config", write_config(tmp_path, SMALL_BINOMIAL), "--seed", "4", "--out", str(out)])
    assert code == 0
    printed = capsys.readouterr().out
    assert printed.startswith("config: simulate seed=4 threads=1")
    assert "respondents=1500 subpopulations=8" in printed
    for name in ("responses.csv", "metadata.json", "truth.json"):
        assert (out / name).is_file()


def test_simulate_is_reproducible(tmp_path):
    config_path = write_config(tmp_path, SMALL_BINOMIAL)
    for directory in ("a", "b"):
        assert main(["simulate", "--config", config_path, "--seed", "9", "--out", str(tmp_path / directory)]) == 0
    for name in ("responses.csv", "metadata.json", "truth.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_file_seed_is_used(tmp_path, capsys):
    config_path = write_config(tmp_path, {**SMALL_BINOMIAL, "seed": 777})
    out = tmp_path / "world"
    assert main(["simulate", "--config", config_path, "--out", str(out)]) == 0
    assert "config: simulate seed=777 " in capsys.readouterr().out
    truth = json.loads((out / "truth.json").read_text(encoding="utf-8"))
    assert truth["seed"] == 777


def test_seed_flag_overrides_config_file(tmp_path, capsys):
    config_path = write_config(tmp_path, {**SMALL_BINOMIAL, "seed": 777})
    out = tmp_path / "world"
    assert main(["simulate", "--config", config_path, "--seed", "5", "--out", str(out)]) == 0
    assert "config: simulate seed=5 " in capsys.readouterr().out
    truth = json.loads((out / "truth.json").read_text(encoding="utf-8"))
    assert truth["seed"] == 5


def test_default_seed_without_flag_or_config(tmp_path, capsys):
    assert main(["simulate", "--config", write_config(tmp_path, SMALL_BINOMIAL), "--out", str(tmp_path / "w")]) == 0
    assert f"seed={config.DEFAULT_SEED} " in capsys.readouterr().out
    truth = json.loads((tmp_path / "w" / "truth.json").read_text(encoding="utf-8"))
    assert truth["seed"] == config.DEFAULT_SEED


def test_non_integer_config_seed_is_rejected(tmp_path):
    config_path = write_config(tmp_path, {**SMALL_BINOMIAL, "seed": "abc"})
    assert main(["simulate", "--config", config_path, "--out", str(tmp_path / "w")]) == 2


def test_simulate_rejects_invalid_probabilities(tmp_path, capsys):
    config_path = write_config(tmp_path, {**SMALL_BINOMIAL, "c": [1.0] * 8})
    assert main(["simulate", "--config", config_path, "--out", str(tmp_path / "w")]) == 2
    assert "error:" in capsys.readouterr().err


def test_simulate_rejects_bad_config_fields(tmp_path):
    config_path = write_config(tmp_path, {**SMALL_BINOMIAL, "respondents": 1})
    assert main(["simulate", "--config", config_path, "--out", str(tmp_path / "w")]) == 2


def test_estimate_on_fixture(mccarty_files, tmp_path, capsys):
    responses, metadata = mccarty_files
    out = tmp_path / "estimate"
    code = main([
        "estimate", "--responses", str(responses), "--metadata", str(metadata),
        "--hidden", "homeless", "--guard", "clamp:0.1,10", "--out", str(out),
    ])
    assert code == 0
    report = json.loads((out / "estimate.json").read_text(encoding="utf-8"))
    assert report["target"] == "homeless"
    assert report["respondents"] == 521
    assert report["adjustment"]["gamma1"] is not None
    assert "estimate: homeless" in capsys.readouterr().out


def test_estimate_without_adjustment(mccarty_files, tmp_path):
    responses, metadata = mccarty_files
    out = tmp_path / "basic"
    code = main([
        "estimate", "--responses", str(responses), "--metadata", str(metadata),
        "--no-adjust", "--all-ratios", "--guard", "clamp", "--out", str(out),
    ])
    assert code == 0
    report = json.loads((out / "estimate.json").read_text(encoding="utf-8"))
    assert report["target"] == "homeless"
    assert report["adjustment"] is None
    ratios = json.loads((out / "degree_ratios.json").read_text(encoding="utf-8"))
    assert len(ratios["subpopulations"]) == 32


def test_estimate_zero_hidden_column_is_degenerate(write_files, tmp_path, capsys):
    responses, metadata = write_files(
        "A,B,C,H\n1,2,3,0\n2,1,4,0\n3,3,1,0\n",
        {"total_population": 1000, "known_sizes": {"A": 100, "B": 150, "C": 200}, "hidden": ["H"]},
    )
    code = main(["estimate", "--responses", str(responses), "--metadata", str(metadata), "--out", str(tmp_path / "o")])
    assert code == 3
    assert "'H'" in capsys.readouterr().err


def test_estimate_oversized_count_is_a_validation_error(write_files, tmp_path, capsys):
    responses, metadata = write_files(
        "A,B,C,H\n1,2,3,1\n2,99999999999999999999,4,0\n3,3,1,2\n",
        {"total_population": 1000, "known_sizes": {"A": 100, "B": 150, "C": 200}, "hidden": ["H"]},
    )
    code = main(["estimate", "--responses", str(responses), "--metadata", str(metadata), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "row 2, column 'B'" in capsys.readouterr().err


def test_evaluate_simulated_block_model(tmp_path, capsys):
    config_path = write_config(tmp_path, {"nodes": 1200, "groups": 4, "between": 0.02}, name="sbm.json")
    out = tmp_path / "eval"
    code = main(["evaluate", "--kind", "sbm", "--config", config_path, "--degrees", "true", "--threads", "2", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["provenance"]["degrees_source"] == "true"
    assert (out / "report.csv").is_file()
    assert "evaluate: MAPE" in capsys.readouterr().out


def test_evaluate_with_degree_file(tmp_path):
    config_path = write_config(tmp_path, SMALL_BINOMIAL)
    world = tmp_path / "world"
    assert main(["simulate", "--config", config_path, "--out", str(world)]) == 0
    code = main([
        "evaluate", "--responses", str(world / "responses.csv"), "--metadata", str(world / "metadata.json"),
        "--degrees", f"true:{world / 'truth.json'}", "--out", str(tmp_path / "eval"),
    ])
    assert code == 0


def test_evaluate_filter_to_two_known_fails(tmp_path):
    config_path = write_config(tmp_path, SMALL_BINOMIAL)
    code = main(["evaluate", "--kind", "binomial", "--config", config_path, "--filter", "include=sub1,sub2", "--out", str(tmp_path / "e")])
    assert code == 2


def test_verify(tmp_path, capsys):
    code = main(["verify", "--seed", "2024", "--replicates", "300", "--sample-size", "300", "--z", "3", "--out", str(tmp_path)])
    printed = capsys.readouterr().out
    assert code == 0, printed
    assert "verify: 6/6 checks passed" in printed
    assert (tmp_path / "verify.json").is_file()


@pytest.mark.parametrize(
    "argv",
    [
        ["estimate", "--responses", "missing.csv", "--metadata", "missing.json"],
        ["simulate", "--threads", "0"],
        ["simulate", "--degrees", "sometimes"],
        ["evaluate", "--kind", "binomial", "--guard", "clamp:5,1"],
    ],
)
def test_validation_errors_exit_2(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == 2


def test_run_config_summary_line():
    run = RunConfig(subcommand="evaluate", seed=3, filter="include=@names", responses="r.csv")
    line = run.summary_line()
    assert line.startswith("config: evaluate seed=3 threads=1 responses=r.csv")
    assert "filter=include=@names" in line


def test_filter_and_guard_specs():
    spec = SubpopulationFilter.parse("include=@names;exclude=priest")
    assert spec.include == ("@names",) and spec.exclude == ("priest",)
    assert SubpopulationFilter.parse("exclude=twin,diabetes").describe() == "exclude=twin,diabetes"
    with pytest.raises(SurveyValidationError):
        SubpopulationFilter.parse("only=twin")
    assert DeltaGuard.parse("clamp:0.5,2") == DeltaGuard(mode="clamp", lower=0.5, upper=2.0)
    with pytest.raises(SurveyValidationError):
        DeltaGuard.parse("loose")


def test_config_status(tmp_path):
    status = config.get_config_status()
    assert status["binomial"]["respondents"] == 10000
    assert status["sbm"]["groups"] == 20
    target = config.resolve_output_dir(str(tmp_path / "new" / "dir"))
    assert target.is_dir()
