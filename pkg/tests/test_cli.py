import hashlib
import json

import pytest

from ncglue import cli
from ncglue.config import DEFAULT_CONFIG, ConfigError, parse_config, parse_symbol

MINIMAL = """
[potential]
centre = -1 0 0.5
centre = 1 0 0.5
"""

TRIANGLE = """
[potential]
centre = 0 1 0.3333333333333333
centre = -0.8660254037844386 -0.5 0.3333333333333333
centre = 0.8660254037844387 -0.5 0.3333333333333334

[geometry]
epsilon = 0.0125

[symbols]
sequence = {seq}
"""


def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.epsilon == 0.05 and cfg.R == 0.4 and cfg.delta == 0.08
    assert cfg.symbols == ["0|1", "0|1"]
    assert cfg.sweep.epsilons == [0.1, 0.05, 0.025, 0.0125]
    assert cfg.solver.c1_tolerance == 1e-5


def test_mass_sum_error():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL.replace("1 0 0.5", "1 0 0.4"))
    assert any("masses must sum to 1" in e for e in info.value.errors)


def test_delta_error():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL + "[geometry]\ndelta = 0.8\n")
    assert any("delta" in e for e in info.value.errors)


def test_all_errors_reported_with_lines():
    text = MINIMAL + "[geometry]\nR = abc\nfoo = 1\n[solver]\noptimizer_tol = -1\nno equals sign\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    errs = info.value.errors
    assert any(e.startswith("line 6") and "'R'" in e for e in errs)
    assert any(e.startswith("line 7") and "unknown key" in e for e in errs)
    assert any("optimizer_tol must be > 0" in e for e in errs)
    assert any(e.startswith("line 10") for e in errs)
    assert len(errs) >= 4


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(MINIMAL + "[geometry]\nR = 0.4\nR = 0.5\n")


@pytest.mark.parametrize("text, blocks", [("0|12", {0}), ("01|2", {2}), ("0,2|1", {1})])
def test_symbols(text, blocks):
    P = parse_symbol(text, 3)
    assert frozenset(blocks) in P.blocks
    with pytest.raises(ValueError):
        parse_symbol("0|1", 3)


def test_tol_override_and_seed(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text(DEFAULT_CONFIG)
    cfg = cli.load_config(path, seed=7, overrides=["optimizer_tol=1e-9", "solver.max_iter=5"])
    assert cfg.seed == 7 and cfg.solver.optimizer_tol == 1e-9 and cfg.solver.max_iter == 5
    with pytest.raises(ConfigError):
        cli.load_config(path, overrides=["nonsense=1"])


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "c.cfg"
    path.write_text(MINIMAL.replace("0.5\n", "0.45\n", 1))
    assert cli.main(["solve", "--config", str(path), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "masses must sum to 1" in capsys.readouterr().err


def test_solve_default_and_export(tmp_path):
    out = tmp_path / "run"
    assert cli.main(["solve", "--out", str(out)]) == cli.EXIT_OK
    env = json.loads((out / "report.json").read_text())
    assert env["payload"]["report"]["c1_verdict"] is True
    assert set(env) >= {"config", "timestamp", "payload", "version"}
    digest = lambda: hashlib.sha256((out / "trajectory.csv").read_bytes()).hexdigest()
    before = digest()
    assert cli.main(["export", "--out", str(out)]) == cli.EXIT_OK
    assert digest() == before
    assert json.loads((out / "manifest.json").read_text())["payload"]["closure_error"] <= 1e-8


@pytest.mark.parametrize("seq, code", [("02|1", cli.EXIT_BOUNDARY), ("0|12", cli.EXIT_SOLVER)])
def test_solve_exit_codes(tmp_path, seq, code):
    path = tmp_path / "t.cfg"
    path.write_text(TRIANGLE.format(seq=seq))
    assert cli.main(["solve", "--config", str(path), "--out", str(tmp_path)]) == code
    env = json.loads((tmp_path / "report.json").read_text())
    assert env["exit_code"] == code


def test_iteration_budget_gives_exit_2(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text(DEFAULT_CONFIG.replace("initial_phase = 1.3", "initial_phase = 0.3"))
    code = cli.main(["solve", "--config", str(path), "--out", str(tmp_path), "--tol-override", "max_iter=1",
                     "--tol-override", "optimizer_tol=1e-14"])
    assert code == cli.EXIT_NOT_CONVERGED


def test_epsilon_bar_rule():
    cells = [{"epsilon": e, "status": s} for e, s in
             [(0.0125, "interior"), (0.025, "interior"), (0.05, "boundary"), (0.1, "interior")]]
    assert cli.empirical_epsilon_bar(cells) == 0.025
    assert cli.empirical_epsilon_bar([{"epsilon": 0.01, "status": "failed"}]) is None


def test_partition_sequences_count():
    assert [len(cli.partition_sequences(3, n)) for n in (1, 2, 3)] == [3, 9, 27]
