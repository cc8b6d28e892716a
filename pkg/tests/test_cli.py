import json
import shutil
from pathlib import Path

import pytest

from boolcons.boolfun import read_table
from boolcons.cli import main
from boolcons.config import ConfigError, ExperimentConfig, parse_config_text
from boolcons.construction import load_seed_groups
from boolcons.fitness import FIRST_GROUP, NL_ONLY, NL_WITH_SPECTRUM, SUM_ALL
from boolcons.gp import read_trees

from conftest import CONCAT, simplest_rows

CONFIG = """\
# (2,4,4,B) with two extra variables
variables = 6
independent_variables = 2
seed_functions = 2
seed_groups = 4
seed_type = balanced
seed_nl = 4
seed_source = file
seed_dir = {seed_dir}
objective = spectrum
fitness = sum
budget = 2000
population = 100
runs = 2
rng_seed = 5
"""


def artifacts(d: Path) -> dict:
    # the top-level manifest carries timestamps; everything else must match
    return {p.relative_to(d).as_posix(): p.read_bytes()
            for p in sorted(d.rglob("*")) if p.is_file() and p != d / "manifest.json"}


def assert_rerun_identical(out: Path, tmp_path: Path):
    again = tmp_path / (out.name + "-again")
    main(["rerun", str(out / "manifest.json"), "--out", str(again)])
    assert artifacts(out) == artifacts(again)


@pytest.fixture
def tree_file(tmp_path):
    p = tmp_path / "concat.txt"
    p.write_text(CONCAT + "\n")
    return p


@pytest.fixture
def test_dir(tmp_path, data_dir):
    d = tmp_path / "testsets"
    for name in ("seeds_n4_test", "seeds_n5_test"):
        shutil.copytree(data_dir / name, d / name)
    return d


# --- configuration ---------------------------------------------------------

def test_config_maps_keys(data_dir):
    cfg, extra = parse_config_text(CONFIG.format(seed_dir=data_dir / "seeds_n4_train"))
    assert (cfg.s, cfg.n, cfg.nl, cfg.ev, cfg.k) == (2, 4, 4, "B", 2)
    assert cfg.obj == NL_WITH_SPECTRUM and cfg.fitness_kind.variant == SUM_ALL
    assert cfg.target == 24 and cfg.evolver.budget == 2000 and cfg.evolver.runs == 2
    assert cfg.tuple_label == "(2,4,4,B)"
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_config_defaults_and_paper_scale():
    cfg, _ = parse_config_text("seed_variables = 5\nfitness = A\nobjective = nonlinearity\n"
                               "budget = 100\n", paper_scale=True)
    assert cfg.nl == 12 and cfg.target == 56
    assert cfg.fitness_kind.variant == FIRST_GROUP and cfg.fitness_kind.target_val == 56
    assert cfg.obj == NL_ONLY
    assert cfg.evolver.budget == 500_000 and cfg.evolver.runs == 30


@pytest.mark.parametrize("text", [
    "bogus = 1",
    "variables = 7\nseed_variables = 4",
    "independent_variables = 3",
    "seed_type = bent\nseed_variables = 5",
    "fitness = D",
    "budget = lots",
    "seed_source = file",
    "no equals sign",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


# --- evolve-fn -------------------------------------------------------------

def test_evolve_fn_trivial(tmp_path):
    out = tmp_path / "fn"
    assert main(["evolve-fn", "--n", "2", "--target-nl", "0", "--budget", "200",
                 "--population", "20", "--runs", "2", "--out", str(out)]) == 0
    assert read_table(out / "best.tt").n == 2
    rows = [json.loads(x) for x in (out / "runs.jsonl").read_text().splitlines()]
    assert len(rows) == 2 and any(r["balanced"] for r in rows)
    assert_rerun_identical(out, tmp_path)


def test_evolve_fn_summary_and_unmet_target(tmp_path, capsys):
    out = tmp_path / "fn4"
    code = main(["evolve-fn", "--n", "4", "--target-nl", "6", "--budget", "500",
                 "--population", "50", "--runs", "2", "--out", str(out)])
    assert code == 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["hits"] == 0 and summary["max"] <= 4
    assert "reached in 0 of 2 runs" in capsys.readouterr().out
    assert main(["report", str(out)]) == 0
    for line in (out / "log.jsonl").read_text().splitlines():
        assert json.loads(line)["event"] in ("improvement", "run_end")


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("BOOLCONS_OUT", str(tmp_path / "root"))
    main(["evolve-fn", "--n", "3", "--target-nl", "0", "--budget", "50", "--population",
          "10", "--runs", "1"])
    assert (tmp_path / "root" / "evolve-fn" / "manifest.json").exists()


# --- evolve-cons -----------------------------------------------------------

def test_evolve_cons_pipeline(tmp_path, data_dir):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(CONFIG.format(seed_dir=data_dir / "seeds_n4_train"))
    out = tmp_path / "cons"
    code = main(["evolve-cons", "--config", str(cfg), "--out", str(out)])
    trees = read_trees(out / "trees.txt")
    rows = [json.loads(x) for x in (out / "runs.jsonl").read_text().splitlines()]
    assert len(trees) == len(rows) == 2
    flagged = sum(r["locally_optimal"] for r in rows)
    assert code == (0 if flagged else 1)
    m = json.loads((out / "manifest.json").read_text())
    assert m["experiment"] == [2, 4, 4, "B"] and m["params"]["config"]["evolver"]["budget"] == 2000
    assert_rerun_identical(out, tmp_path)


def test_evolve_cons_generated_seeds_rerun(tmp_path):
    cfg = tmp_path / "gen.cfg"
    cfg.write_text("seed_variables = 4\nseed_groups = 2\nbudget = 300\npopulation = 30\n"
                   "runs = 1\nseed_budget = 3000\nrng_seed = 2\n")
    out = tmp_path / "gen"
    main(["evolve-cons", "--config", str(cfg), "--out", str(out)])
    assert len(load_seed_groups(out / "seeds")) == 2
    assert_rerun_identical(out, tmp_path)


def test_evolve_cons_empty_seed_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    cfg = tmp_path / "e.cfg"
    cfg.write_text(f"seed_source = file\nseed_dir = {tmp_path / 'empty'}\n")
    assert main(["evolve-cons", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_evolve_cons_bad_config(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("seed_type = bent\nseed_variables = 5\n")
    assert main(["evolve-cons", "--config", str(cfg)]) == 2
    assert main(["evolve-cons", "--config", str(tmp_path / "missing.cfg")]) == 2


# --- test-cons -------------------------------------------------------------

def test_test_cons_general(tmp_path, tree_file, test_dir, capsys):
    out = tmp_path / "tc"
    assert main(["test-cons", str(tree_file), str(test_dir), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["general"]
    assert [s["resulting_nl"] for s in report["sizes"]] == [24, 56]
    assert "verdict: general" in capsys.readouterr().out
    assert_rerun_identical(out, tmp_path)


def test_test_cons_not_general(tmp_path, test_dir, capsys):
    t = tmp_path / "seed.txt"
    t.write_text("f0\n")
    assert main(["test-cons", str(t), str(test_dir), "--out", str(tmp_path / "o")]) == 1
    assert "first failure at size 6, group 0" in capsys.readouterr().out


def test_test_cons_target_override(tmp_path, tree_file, test_dir):
    assert main(["test-cons", str(tree_file), str(test_dir), "--target", "6=26",
                 "--out", str(tmp_path / "o")]) == 1


def test_test_cons_bad_tree(tmp_path, test_dir):
    t = tmp_path / "bad.txt"
    t.write_text("IF(v0, f0\n")
    assert main(["test-cons", str(t), str(test_dir), "--out", str(tmp_path / "o")]) == 2


# --- analyze ---------------------------------------------------------------

def test_analyze_simplest_trees(tmp_path):
    t = tmp_path / "simplest.txt"
    t.write_text("\n".join(e for row, e in simplest_rows() if row[0] == 2) + "\n")
    out = tmp_path / "an"
    assert main(["analyze", str(t), "--relation", "extended", "--restrict",
                 "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["classes"] == 1 and summary["max_size"] == 5
    assert summary["seeds_used"] == 2
    assert len((out / "adjacency.txt").read_text().split()) == 5
    assert len(read_trees(out / "simplified.txt")) == 5
    assert_rerun_identical(out, tmp_path)


def test_analyze_single_tree(tmp_path, tree_file):
    out = tmp_path / "one"
    assert main(["analyze", str(tree_file), "--out", str(out)]) == 0
    assert not (out / "adjacency.txt").exists()
    assert json.loads((out / "sizes.json").read_text())["values"] == [6]


# --- bootstrap -------------------------------------------------------------

def test_bootstrap_two_levels(tmp_path, tree_file, data_dir, capsys):
    out = tmp_path / "bs"
    assert main(["bootstrap", str(tree_file), "--seeds", str(data_dir / "seeds_n5_train"),
                 "--levels", "2", "--out", str(out)]) == 0
    rows = json.loads((out / "report.json").read_text())["rows"]
    assert [(r["size"], r["seed_nl"], r["resulting_nl"]) for r in rows] == [(7, 12, 56),
                                                                           (9, 56, 240)]
    assert load_seed_groups(out / "level_02")[0].n == 9
    assert "resulting NL" in capsys.readouterr().out
    assert_rerun_identical(out, tmp_path)


def test_bootstrap_zero_levels(tmp_path, tree_file, data_dir):
    out = tmp_path / "bs0"
    assert main(["bootstrap", str(tree_file), "--seeds", str(data_dir / "seeds_n5_train"),
                 "--levels", "0", "--out", str(out)]) == 0
    assert load_seed_groups(out / "level_00") == load_seed_groups(data_dir / "seeds_n5_train")


def test_bootstrap_halt(tmp_path, data_dir, capsys):
    t = tmp_path / "and.txt"
    t.write_text("(f0 AND (v0 AND v1))\n")
    out = tmp_path / "halt"
    assert main(["bootstrap", str(t), "--seeds", str(data_dir / "seeds_n5_train"),
                 "--levels", "2", "--out", str(out)]) == 1
    assert "not balanced" in capsys.readouterr().err
    assert json.loads((out / "report.json").read_text())["levels_completed"] == 0


# --- usage -----------------------------------------------------------------

def test_usage_errors(tmp_path):
    assert main([]) == 2
    assert main(["evolve-fn"]) == 2
    assert main(["report", str(tmp_path)]) == 2
    assert main(["--help"]) == 0
