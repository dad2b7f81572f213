import random

import pytest

from bft_safety.auditor import (
    CertError,
    CertifiedRoundConflict,
    ConflictingCommits,
    InjectivityFailure,
    RecordPool,
    RuleViolation,
    Safe,
    audit_complete,
    audit_pool,
    audit_preferred_round,
    audit_votes_only_once,
    certificate_for,
    certified_round_uniqueness,
    commits_do_not_conflict,
    cross_check_conflict_pair,
    derivable_commits,
    find_injectivity_failure,
    verify_commit_certificate,
)
from bft_safety.chains import block_in_chain, detect_commit
from bft_safety.core import QC, Block, Genesis, SentVotes, Vote, Weak, make_block
from bft_safety.quorum import EpochConfig, HonestyMap

from conftest import make_qc
from test_chains import _colliding_pair, random_store
from oracles import brute_certified_conflict

CFG = EpochConfig.count(4, 1)


def fig1_pool(fig1):
    return RecordPool.from_records(fig1.order[1:], [v for q in fig1.q for v in q.votes])


def test_fig1_is_safe(fig1):
    pool = fig1_pool(fig1)
    commits = {cr.committed for cr in derivable_commits(pool, CFG)}
    assert commits == {fig1.b[0], fig1.b[1]}
    assert isinstance(commits_do_not_conflict(pool, CFG), Safe)
    assert certified_round_uniqueness(pool, CFG) is None
    assert find_injectivity_failure(pool) is None
    # the same three members sign every QC, so the sibling branch b2 (round 5
    # on top of q0) is only reachable if they ignored their preferred round
    report = audit_pool(pool, HonestyMap(), CFG)
    assert isinstance(report.verdict, RuleViolation)
    assert report.verdict.rule == "PreferredRound"
    assert isinstance(audit_pool(pool, HonestyMap({0, 1, 2}), CFG).verdict, Safe)


def test_empty_pool_is_safe():
    pool = RecordPool()
    assert isinstance(commits_do_not_conflict(pool, CFG), Safe)
    assert audit_votes_only_once(pool, HonestyMap()) == []
    assert audit_preferred_round(pool, HonestyMap(), CFG) == []


def test_votes_only_once_breach():
    x, y = make_block(2, None, b"x"), make_block(2, None, b"y")
    qx, qy = make_qc(x, (0, 1, 2)), make_qc(y, (0, 2, 3))
    pool = RecordPool.from_records([x, y, qx, qy], qx.votes + qy.votes)
    hits = audit_votes_only_once(pool, HonestyMap())
    assert [(h.member, h.round) for h in hits] == [(0, 2), (2, 2)]
    assert audit_votes_only_once(pool, HonestyMap({0, 2})) == []


def _two_branches(mid_round=4, fork_parent_round=None):
    """Honest-looking main chain b1<-b2<-b3 (commit b1) and a later vote by
    member 0 on a block whose parent QC is of round ``fork_parent_round``."""
    b1 = make_block(1, None, b"1")
    q1 = make_qc(b1)
    b2 = make_block(2, b1.id, b"2")
    q2 = make_qc(b2)
    b3 = make_block(3, b2.id, b"3")
    q3 = make_qc(b3)
    if fork_parent_round is None:
        fork = make_block(mid_round, None, b"fork")
    else:
        fork = make_block(mid_round, {1: b1, 2: b2, 3: b3}[fork_parent_round].id, b"fork")
    qf = make_qc(fork, (0, 2, 3))
    recs = [b1, q1, b2, q2, b3, q3, fork, qf]
    votes = [v for q in (q1, q2, q3, qf) for v in q.votes]
    return RecordPool.from_records(recs, votes), (b1, q3, fork, qf)


def test_preferred_round_breach():
    pool, (b1, q3, fork, qf) = _two_branches(4, None)
    hits = audit_preferred_round(pool, HonestyMap(), CFG)
    assert {(h.member, h.round) for h in hits} == {(0, 4), (2, 4)}
    assert all(isinstance(h, RuleViolation) and h.rule == "PreferredRound" for h in hits)
    assert audit_preferred_round(pool, HonestyMap({0, 2}), CFG) == []


def test_preferred_round_respected():
    pool, _ = _two_branches(4, 1)
    assert audit_preferred_round(pool, HonestyMap(), CFG) == []


def test_single_qc_pool_has_no_preferred_round_findings():
    b = make_block(1, None)
    q = make_qc(b)
    assert audit_preferred_round(RecordPool.from_records([b, q], q.votes), HonestyMap(), CFG) == []


def test_conflict_and_cross_check_names_rule():
    # two branches from genesis, each with a contiguous 3-chain; member 1 is
    # in every QC so it must have double-voted
    def branch(tag, members):
        recs, prev = [], None
        for r in (1, 2, 3):
            b = make_block(r, prev, tag + b"%d" % r)
            q = make_qc(b, members)
            recs += [b, q]
            prev = b.id
        return recs
    recs = branch(b"a", (0, 1, 2)) + branch(b"b", (1, 2, 3))
    votes = [v for r in recs if isinstance(r, QC) for v in r.votes]
    pool = RecordPool.from_records(recs, votes)
    verdict = commits_do_not_conflict(pool, CFG)
    assert isinstance(verdict, ConflictingCommits)
    assert isinstance(certified_round_uniqueness(pool, CFG), CertifiedRoundConflict)
    honesty = HonestyMap({2})
    ex = cross_check_conflict_pair(verdict, pool, honesty, CFG)
    assert (ex.member, ex.rule) == (1, "VotesOnlyOnce")
    ex = cross_check_conflict_pair(verdict, pool, HonestyMap({1, 2}), CFG)
    assert ex.member is None
    assert ex.text == "no honest member in quorum intersection; byzantine budget exceeded"
    with pytest.raises(ValueError):
        cross_check_conflict_pair(Safe(), pool, honesty, CFG)
    report = audit_pool(pool, honesty, CFG)
    assert isinstance(report.verdict, ConflictingCommits) and report.explanation.rule == "VotesOnlyOnce"


def test_injectivity_preempts_conflict():
    mode = Weak(1)
    x, y = _colliding_pair(mode)
    assert find_injectivity_failure(RecordPool.from_records([x, x])) is None
    qx, qy = make_qc(x), make_qc(y, (1, 2, 3))
    recs = [x, qx]
    prev = x.id
    for r in (3, 4):
        b = make_block(r, prev, b"x%d" % r, mode)
        recs += [b, make_qc(b)]
        prev = b.id
    # a second branch continuing from y's QC, which certifies the same id
    other = [y, qy]
    prev = y.id
    for r in (3, 4, 5):
        b = make_block(r + 10, prev, b"y%d" % r, mode)
        other += [b, make_qc(b, (1, 2, 3))]
        prev = b.id
    votes = [v for r in recs + other if isinstance(r, QC) for v in r.votes]
    pool = RecordPool.from_records(recs + other, votes)
    inj = find_injectivity_failure(pool)
    assert inj.block0.id == inj.block1.id and inj.block0 != inj.block1
    assert inj.provenance0 is not None and inj.provenance1 is not None
    verdict = commits_do_not_conflict(pool, CFG)
    assert not isinstance(verdict, ConflictingCommits)
    u = certified_round_uniqueness(pool, CFG)
    assert isinstance(u, InjectivityFailure)


def test_complete_audit():
    b = make_block(1, None)
    ghost = make_block(2, b"\x05" * 32)
    q = make_qc(b)
    qg = QC(2, ghost.id, tuple(Vote(2, m, ghost.id) for m in (0, 1, 2)))
    pool = RecordPool.from_records([b, q, qg], q.votes + qg.votes)
    hits = audit_complete(pool, HonestyMap({2}), CFG)
    assert [(h.member, h.rule) for h in hits] == [(0, "Complete"), (1, "Complete")]


def test_rule_violation_verdict_when_commits_agree():
    pool, _ = _two_branches(4, None)
    report = audit_pool(pool, HonestyMap(), CFG)
    assert isinstance(report.verdict, RuleViolation)
    assert report.verdict.rule == "PreferredRound"


# -- certificates -----------------------------------------------------------


def test_certificate_examples(fig1):
    b, q = fig1.b, fig1.q
    cert = [b[0], q[0], b[1], q[1], b[3], q[3]]
    assert verify_commit_certificate(cert, b[0].id, CFG, fig1.evidence) == b[0].id
    weak_q1 = QC(q[1].round, q[1].cert_block_id, q[1].votes[:2])
    with pytest.raises(CertError) as e:
        verify_commit_certificate([b[0], q[0], b[1], weak_q1, b[3], q[3]], b[0].id, CFG, fig1.evidence)
    assert (e.value.name, e.value.position, e.value.detail) == ("BadQC", 3, "NotAQuorum")
    with pytest.raises(CertError) as e:
        verify_commit_certificate([b[1], q[1], b[4], q[4], b[6], q[6]], b[1].id, CFG, fig1.evidence)
    assert e.value.name == "NotContiguous"
    with pytest.raises(CertError) as e:
        verify_commit_certificate(cert, b[1].id, CFG, fig1.evidence)
    assert e.value.name == "WrongClaimedBlock"
    with pytest.raises(CertError) as e:
        verify_commit_certificate(cert[2:], b[1].id, CFG, fig1.evidence)
    assert e.value.name == "TooShort"
    with pytest.raises(CertError) as e:
        verify_commit_certificate([b[0], q[0], b[1], q[1], b[5], q[5]], b[0].id, CFG, fig1.evidence)
    assert (e.value.name, e.value.position, e.value.detail) == ("BadLink", 4, "PrevQCMismatch")


def test_certificate_with_genesis_origin(fig1):
    b, q = fig1.b, fig1.q
    rc = [Genesis, b[0], q[0], b[1], q[1], b[3], q[3]]
    assert verify_commit_certificate(rc, b[0].id, CFG, fig1.evidence) == b[0].id


def test_certificate_for_commit(fig1):
    cr = detect_commit(fig1.store, fig1.q[5])
    recs, claim = certificate_for(cr)
    assert len(recs) == 6 and claim == fig1.b[1].id
    assert verify_commit_certificate(recs, claim, CFG, fig1.evidence) == claim


# -- oracle agreement -------------------------------------------------------


@pytest.mark.parametrize("seed", range(8))
def test_round_uniqueness_matches_all_pairs(seed):
    st, records = random_store(random.Random(100 + seed), 40)
    pool = RecordPool.from_records(records, [v for r in records if isinstance(r, QC) for v in r.votes])
    got = certified_round_uniqueness(pool, CFG)
    assert (got is not None) == brute_certified_conflict(records, CFG, pool)


@pytest.mark.parametrize("seed", range(8))
def test_safe_verdict_is_sound(seed):
    st, records = random_store(random.Random(200 + seed), 40)
    pool = RecordPool.from_records(records, [v for r in records if isinstance(r, QC) for v in r.votes])
    commits = derivable_commits(pool, CFG)
    pairwise_ok = all(
        block_in_chain(a.committed, b.chain) or block_in_chain(b.committed, a.chain)
        for a in commits for b in commits)
    verdict = commits_do_not_conflict(pool, CFG)
    assert isinstance(verdict, Safe) == pairwise_ok
