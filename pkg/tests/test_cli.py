from pathlib import Path

import pytest

from bft_safety.cli import (
    EXIT_CONFLICT,
    EXIT_INJECTIVITY,
    EXIT_OK,
    EXIT_RULE,
    EXIT_USAGE,
    UsageError,
    main,
    scenario_from_text,
    verdict_exit_code,
)
from bft_safety.auditor import ConflictingCommits, InjectivityFailure, RuleViolation, Safe
from bft_safety.core import Weak
from bft_safety.simulator import Behavior

ROOT = Path(__file__).resolve().parent.parent
A1 = ROOT / "scenarios" / "a1_honest_n4.txt"


def test_scenario_parsing():
    sc = scenario_from_text("authors_n=4\nbyzantine=3\nadversary=Silent\nhash_mode=weak:2\nseed=9\n")
    assert sc.cfg.authors_n == 4 and sc.cfg.byzantine_budget == 1
    assert sc.adversary == ((3, Behavior.SILENT),)
    assert sc.hash_mode == Weak(2) and sc.seed == 9
    assert scenario_from_text("authors_n=4\nseed=9\n", seed=3).seed == 3


@pytest.mark.parametrize("text,needle", [
    ("f=1\n", "authors_n"),
    ("authors_n=4\ncolour=blue\n", "colour"),
    ("authors_n=4\nbyzantine=1\n", "adversary"),
    ("authors_n=4\nbyzantine=1\nadversary=Sneaky\n", "adversary"),
    ("authors_n=4\nquorum_model=median\n", "quorum_model"),
    ("authors_n=4\nsteps=many\n", "steps"),
])
def test_scenario_errors(text, needle):
    with pytest.raises(UsageError, match=needle):
        scenario_from_text(text)


def test_weighted_scenario():
    sc = scenario_from_text("authors_n=4\nquorum_model=weighted\nvoting_power=3,1,1,1\nbyz_power=1\n")
    assert sc.cfg.total_power == 6


def test_exit_codes_are_a_function_of_verdict():
    codes = {verdict_exit_code(v) for v in (Safe(),)}
    assert codes == {EXIT_OK}
    assert len({EXIT_OK, EXIT_CONFLICT, EXIT_INJECTIVITY, EXIT_RULE, EXIT_USAGE}) == 5
    assert verdict_exit_code(RuleViolation(0, "VotesOnlyOnce", 1)) == EXIT_RULE


def test_run_missing_key(tmp_path, capsys):
    bad = tmp_path / "s.txt"
    bad.write_text("f=1\n")
    code = main(["run", "--scenario", str(bad), "--trace", str(tmp_path / "t"), "--report", str(tmp_path / "r")])
    assert code == EXIT_USAGE
    assert "authors_n" in capsys.readouterr().err


def test_run_and_verify_round_trip(tmp_path, capsys):
    certs = tmp_path / "certs"
    code = main(["run", "--scenario", str(A1), "--trace", str(tmp_path / "t"), "--report",
                 str(tmp_path / "r"), "--seed", "7", "--cert-dir", str(certs)])
    assert code == EXIT_OK
    report = (tmp_path / "r").read_text()
    assert report.startswith("verdict=Safe\n")
    files = sorted(certs.iterdir())
    assert files
    capsys.readouterr()
    assert main(["verify-commit", "--cert", str(files[0]), "--config", str(A1)]) == EXIT_OK
    out = capsys.readouterr().out.strip()
    assert out == files[0].read_text().splitlines()[-1].split("=", 1)[1]

    lines = files[0].read_text().splitlines()
    q = max(i for i, l in enumerate(lines) if l.startswith("kind=Q"))
    head, votes = lines[q].split(" votes=")
    lines[q] = head + " votes=" + ",".join(votes.split(",")[1:])
    mutated = tmp_path / "mut.txt"
    mutated.write_text("\n".join(lines) + "\n")
    assert main(["verify-commit", "--cert", str(mutated), "--config", str(A1)]) == EXIT_CONFLICT
    assert "NotAQuorum" in capsys.readouterr().out

    short = tmp_path / "short.txt"
    short.write_text("\n".join(files[0].read_text().splitlines()[2:]) + "\n")
    assert main(["verify-commit", "--cert", str(short), "--config", str(A1)]) == EXIT_CONFLICT
    assert capsys.readouterr().out.startswith("TooShort")

    garbage = tmp_path / "garbage.txt"
    garbage.write_text("kind=B id=zz\n")
    assert main(["verify-commit", "--cert", str(garbage), "--config", str(A1)]) == EXIT_USAGE


@pytest.mark.parametrize("args,code", [
    (["--n", "4", "--f", "1"], EXIT_OK),
    (["--n", "4", "--f", "2"], EXIT_USAGE),
    (["--n", "7", "--f", "2"], EXIT_OK),
    (["--n", "13", "--f", "4"], EXIT_USAGE),
    (["--n", "4", "--powers", "3,1,1,1", "--byz-power", "1"], EXIT_OK),
    (["--n", "4", "--powers", "1,1,1"], EXIT_USAGE),
    (["--n", "4"], EXIT_USAGE),
])
def test_check_bft(args, code):
    assert main(["check-bft"] + args) == code


def test_usage_error_exit():
    assert main(["frobnicate"]) == EXIT_USAGE
