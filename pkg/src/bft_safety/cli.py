"""Command-line entry points: run scenarios, verify commit certificates,
check quorum configurations."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .auditor import (
    AuditReport,
    CertError,
    ConflictingCommits,
    InjectivityFailure,
    RuleViolation,
    Safe,
    certificate_for,
    verify_commit_certificate,
)
from .core import HashMode
from .dump import FormatError, format_certificate, parse_certificate
from .quorum import (
    MAX_EXHAUSTIVE_N,
    ConfigError,
    EpochConfig,
    HonestyMap,
    QuorumModel,
    check_bft_assumption,
)
from .simulator import Behavior, Scenario, ScenarioError, run_scenario

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFLICT = 2
EXIT_INJECTIVITY = 3
EXIT_RULE = 4

VERDICT_EXIT = {
    Safe: EXIT_OK,
    ConflictingCommits: EXIT_CONFLICT,
    InjectivityFailure: EXIT_INJECTIVITY,
    RuleViolation: EXIT_RULE,
}

SCENARIO_KEYS = (
    "epoch_id", "authors_n", "voting_power", "quorum_model", "f", "byz_power",
    "byzantine", "adversary", "steps", "drop_prob", "dup_prob", "max_delay",
    "seed", "hash_mode", "equivocation_fanout",
)


class UsageError(Exception):
    pass


def parse_key_values(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise UsageError(f"line {lineno}: expected key=value")
        if key not in SCENARIO_KEYS:
            raise UsageError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise UsageError(f"line {lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def _int_list(s: str, key: str) -> list[int]:
    if not s:
        return []
    try:
        return [int(x) for x in s.split(",")]
    except ValueError:
        raise UsageError(f"{key}: expected a comma-separated list of integers") from None


def _num(kv: dict, key: str, conv, default):
    if key not in kv:
        return default
    try:
        return conv(kv[key])
    except ValueError:
        raise UsageError(f"{key}: bad value {kv[key]!r}") from None


def config_from_keys(kv: dict[str, str]) -> EpochConfig:
    if "authors_n" not in kv:
        raise UsageError("missing required key authors_n")
    n = _num(kv, "authors_n", int, None)
    try:
        model = QuorumModel(kv.get("quorum_model", "count"))
    except ValueError:
        raise UsageError(f"quorum_model: expected count or weighted, got {kv['quorum_model']!r}") from None
    powers = tuple(_int_list(kv.get("voting_power", ""), "voting_power"))
    epoch = _num(kv, "epoch_id", int, 0)
    if model is QuorumModel.COUNT:
        if "byz_power" in kv:
            raise UsageError("byz_power applies to the weighted model; use f")
        f = _num(kv, "f", int, (n - 1) // 3)
        return EpochConfig(n, f, model, powers, epoch)
    if "f" in kv:
        raise UsageError("f applies to the count model; use byz_power")
    total = sum(powers) if powers else n
    budget = _num(kv, "byz_power", int, (total - 1) // 3)
    return EpochConfig(n, budget, model, powers, epoch)


def scenario_from_text(text: str, seed: Optional[int] = None) -> Scenario:
    kv = parse_key_values(text)
    cfg = config_from_keys(kv)
    byz = _int_list(kv.get("byzantine", ""), "byzantine")
    tags = [t for t in kv.get("adversary", "").split(",") if t]
    if len(tags) != len(byz):
        raise UsageError("adversary must list one behavior per byzantine member")
    try:
        behaviors = tuple((m, Behavior(t)) for m, t in zip(byz, tags))
    except ValueError as e:
        raise UsageError(f"adversary: {e}") from None
    try:
        hash_mode = HashMode.parse(kv.get("hash_mode", "strong"))
    except ValueError as e:
        raise UsageError(f"hash_mode: {e}") from None
    return Scenario(
        cfg=cfg,
        honesty=HonestyMap(byz),
        adversary=behaviors,
        steps=_num(kv, "steps", int, 2000),
        drop_prob=_num(kv, "drop_prob", float, 0.0),
        dup_prob=_num(kv, "dup_prob", float, 0.0),
        max_delay=_num(kv, "max_delay", int, 0),
        seed=seed if seed is not None else _num(kv, "seed", int, 0),
        hash_mode=hash_mode,
        equivocation_fanout=_num(kv, "equivocation_fanout", int, 1),
    )


def verdict_exit_code(verdict) -> int:
    return VERDICT_EXIT[type(verdict)]


def _members(ms) -> str:
    return ",".join(map(str, sorted(ms))) or "-"


def format_report(report: AuditReport) -> str:
    v = report.verdict
    ru = report.round_uniqueness
    lines = [
        f"verdict={v.name}",
        f"commits={len(report.commits)}",
        f"votes_only_once={len(report.votes_only_once)}",
        f"preferred_round={len(report.preferred_round)}",
        f"complete={len(report.complete)}",
        f"round_uniqueness={'ok' if ru is None else ru.name}",
        f"injectivity={'none' if report.injectivity is None else 'found'}",
    ]
    if isinstance(v, ConflictingCommits):
        for tag, cr in (("commit1", v.commit1), ("commit2", v.commit2)):
            lines += [
                f"[{tag}]",
                f"committed={cr.committed.id.hex()} round={cr.committed.round}",
                f"qc_round={cr.qc.round} qc_members={_members(cr.qc.members)}",
            ]
    elif isinstance(v, InjectivityFailure):
        for tag, b, prov in (("block0", v.block0, v.provenance0), ("block1", v.block1, v.provenance1)):
            sender = "-" if prov is None else prov.sender
            step = "-" if prov is None else prov.step
            lines += [
                f"[{tag}]",
                f"id={b.id.hex()} round={b.round} payload={b.payload.hex() or '-'}",
                f"sender={sender} step={step}",
            ]
    elif isinstance(v, RuleViolation):
        lines += [
            "[violation]",
            f"member={v.member} rule={v.rule} round={v.round}",
            f"detail={v.detail.replace(' ', '_') or '-'}",
        ]
    if report.explanation is not None:
        e = report.explanation
        lines += [
            "[explanation]",
            f"member={'-' if e.member is None else e.member} rule={e.rule or '-'}",
            f"text={e.text}",
        ]
    return "\n".join(lines) + "\n"


def cmd_run(args) -> int:
    text = Path(args.scenario).read_text()
    scenario = scenario_from_text(text, args.seed)
    result = run_scenario(scenario)
    Path(args.trace).write_text(result.trace)
    Path(args.report).write_text(format_report(result.report))
    if args.cert_dir:
        out = Path(args.cert_dir)
        out.mkdir(parents=True, exist_ok=True)
        for i, cr in enumerate(result.report.commits):
            records, claim = certificate_for(cr)
            (out / f"cert_{i:04d}.txt").write_text(format_certificate(records, claim, result.pool))
    return verdict_exit_code(result.verdict)


def config_and_hash_mode(text: str) -> tuple[EpochConfig, HashMode]:
    kv = parse_key_values(text)
    try:
        hash_mode = HashMode.parse(kv.get("hash_mode", "strong"))
    except ValueError as e:
        raise UsageError(f"hash_mode: {e}") from None
    return config_from_keys(kv), hash_mode


def verify_certificate_text(cert_text: str, cfg: EpochConfig, hash_mode: HashMode) -> tuple[int, str]:
    """Exit code and output line for one certificate."""
    try:
        cert = parse_certificate(cert_text)
    except FormatError as e:
        raise UsageError(f"certificate: {e}") from None
    try:
        uid = verify_commit_certificate(cert.records, cert.claim, cfg, cert.evidence, hash_mode)
    except CertError as e:
        return EXIT_CONFLICT, str(e)
    return EXIT_OK, uid.hex()


def cmd_verify_commit(args) -> int:
    cfg, hash_mode = config_and_hash_mode(Path(args.config).read_text())
    code, out = verify_certificate_text(Path(args.cert).read_text(), cfg, hash_mode)
    print(out)
    return code


def cmd_check_bft(args) -> int:
    if args.n > MAX_EXHAUSTIVE_N:
        raise UsageError(f"exhaustive check supports n <= {MAX_EXHAUSTIVE_N}")
    if args.powers:
        powers = _int_list(args.powers, "--powers")
        if len(powers) != args.n:
            raise UsageError("--powers must list exactly n weights")
        if args.byz_power is None:
            raise UsageError("--byz-power is required with --powers")
        cfg = EpochConfig.weighted(powers, args.byz_power)
    else:
        if args.f is None:
            raise UsageError("--f is required without --powers")
        cfg = EpochConfig.count(args.n, args.f)
    cex = check_bft_assumption(cfg)
    if cex is None:
        print("ok")
        return EXIT_OK
    print(f"counterexample {cex}")
    return EXIT_CONFLICT


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bft-safety", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario and audit it")
    run.add_argument("--scenario", required=True)
    run.add_argument("--trace", required=True)
    run.add_argument("--report", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--cert-dir", help="export a certificate for every derivable commit")
    run.set_defaults(func=cmd_run)

    vc = sub.add_parser("verify-commit", help="verify a commit certificate")
    vc.add_argument("--cert", required=True)
    vc.add_argument("--config", required=True)
    vc.set_defaults(func=cmd_verify_commit)

    cb = sub.add_parser("check-bft", help="exhaustively check quorum intersection")
    cb.add_argument("--n", type=int, required=True)
    cb.add_argument("--f", type=int)
    cb.add_argument("--powers")
    cb.add_argument("--byz-power", type=int)
    cb.set_defaults(func=cmd_check_bft)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ConfigError, ScenarioError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
