"""Safety audits over the pool of records that were actually sent.

Each audit checks one safety property directly against the pool and
returns evidence rather than a bare boolean.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

from .chains import (
    CommitRule,
    InsertError,
    RecordChain,
    RecordStore,
    Relation,
    block_in_chain,
    commit_from_chain,
    detect_commit,
    find_kchain,
)
from .core import (
    STRONG,
    QC,
    Block,
    EvidenceLookup,
    ExtendsError,
    Genesis,
    HashMode,
    QCError,
    Record,
    Vote,
    VoteEvidence,
    block_id_valid,
    extends,
    validate_qc,
)
from .quorum import EpochConfig, HonestyMap, quorum_intersection_honest


@dataclass(frozen=True)
class Provenance:
    sender: int
    step: int


class RecordPool:
    """Records and votes extracted from sent messages, with the first
    message that carried each one. Doubles as the vote-evidence lookup."""

    def __init__(self):
        self.provenance: dict = {Genesis: Provenance(-1, -1)}
        self.order: list[Record] = [Genesis]
        self.votes: dict[Vote, VoteEvidence] = {}
        self._store: Optional[RecordStore] = None
        self._store_key = None

    @classmethod
    def from_records(cls, records: Iterable[Record], votes: Iterable[Vote] = (),
                     sender: int = -1) -> "RecordPool":
        """Pool built by hand; every vote is treated as sent by its member."""
        pool = cls()
        for i, r in enumerate(records):
            pool.add_record(r, sender, i)
        for v in votes:
            pool.add_vote(v, v.member, 0)
        return pool

    def add_record(self, r: Record, sender: int, step: int) -> None:
        if r not in self.provenance:
            self.provenance[r] = Provenance(sender, step)
            self.order.append(r)
            self._store = None

    def add_vote(self, v: Vote, sender: int, step: int) -> None:
        if v not in self.votes:
            self.votes[v] = VoteEvidence(v, sender, step)
            self._store = None

    def find(self, vote: Vote) -> Optional[VoteEvidence]:
        ev = self.votes.get(vote)
        if ev is None or ev.sender != vote.member:
            return None
        return ev

    def __contains__(self, r) -> bool:
        return r in self.provenance

    def __len__(self) -> int:
        return len(self.order)

    @property
    def blocks(self) -> list[Block]:
        return [r for r in self.order if isinstance(r, Block)]

    @property
    def qcs(self) -> list[QC]:
        return [r for r in self.order if isinstance(r, QC)]

    def store(self, cfg: EpochConfig) -> RecordStore:
        """Record tree over the pool: every pool record that chains back to
        genesis through valid links and valid QCs. Block ids are not re-hashed
        here; colliding ids are exactly what the audits look for."""
        if self._store is not None and self._store_key is cfg:
            return self._store
        st = RecordStore(cfg, evidence=self, hash_mode=None)
        pending = [r for r in self.order if r is not Genesis]
        while pending:
            retry = []
            for r in pending:
                try:
                    st.insert(r)
                except InsertError:
                    retry.append(r)
            if len(retry) == len(pending):
                break
            pending = retry
        self._store, self._store_key = st, cfg
        return st


# ---------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class Safe:
    name = "Safe"


@dataclass(frozen=True)
class RuleViolation:
    member: int
    rule: str
    round: int
    detail: str = ""
    records: tuple = ()

    name = "RuleViolation"


@dataclass(frozen=True)
class ConflictingCommits:
    commit1: CommitRule
    commit2: CommitRule

    name = "ConflictingCommits"


@dataclass(frozen=True)
class InjectivityFailure:
    block0: Block
    block1: Block
    provenance0: Optional[Provenance] = None
    provenance1: Optional[Provenance] = None

    name = "InjectivityFailure"


@dataclass(frozen=True)
class CertifiedRoundConflict:
    """Two QCs for one round certifying different block ids."""

    qc0: QC
    qc1: QC

    name = "Conflict"


AuditVerdict = Union[Safe, RuleViolation, ConflictingCommits, InjectivityFailure]


# ---------------------------------------------------------------------------
# audits


def find_injectivity_failure(pool: RecordPool) -> Optional[InjectivityFailure]:
    first_by_id: dict[bytes, list[Block]] = {}
    for b in pool.blocks:
        seen = first_by_id.setdefault(b.id, [])
        for other in seen:
            if other.content() != b.content():
                return InjectivityFailure(other, b, pool.provenance[other], pool.provenance[b])
        seen.append(b)
    return None


def _honest_votes(qcs: Iterable[QC], honesty: HonestyMap):
    for q in qcs:
        for v in q.votes:
            if honesty.is_honest(v.member):
                yield q, v


def audit_votes_only_once(pool: RecordPool, honesty: HonestyMap) -> list[RuleViolation]:
    by_slot: dict[tuple[int, int], dict[Vote, QC]] = {}
    for q, v in _honest_votes(pool.qcs, honesty):
        by_slot.setdefault((v.member, v.round), {}).setdefault(v, q)
    out = []
    for (member, rnd), votes in sorted(by_slot.items()):
        items = list(votes.items())
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                (v0, q0), (v1, q1) = items[i], items[j]
                out.append(RuleViolation(
                    member, "VotesOnlyOnce", rnd,
                    f"blocks {v0.block_uid.hex()[:16]} and {v1.block_uid.hex()[:16]}",
                    (q0, q1)))
    return out


def _qc_prev_round(store: RecordStore, q: QC) -> int:
    b = store.parent[q]
    p = store.parent[b]
    return 0 if p is Genesis else p.round


def _chain_has_collision(store: RecordStore, q: QC) -> Optional[InjectivityFailure]:
    if not store.collisions:
        return None
    for r in store.chain_to(q).records:
        if isinstance(r, Block):
            for other in store.blocks_by_id.get(r.id, ()):
                if other.content() != r.content():
                    return InjectivityFailure(r, other)
    return None


def audit_preferred_round(pool: RecordPool, honesty: HonestyMap, cfg: EpochConfig) \
        -> list[Union[RuleViolation, InjectivityFailure]]:
    """For each honest member: a vote in a QC heading a contiguous 3-chain
    bounds every later vote's parent round from below by the committed
    block's round."""
    store = pool.store(cfg)
    stored_qcs = [q for q in store.qcs]
    per_member: dict[int, list[tuple[int, int, QC]]] = {}
    heads: dict[int, list[tuple[int, int, QC]]] = {}
    for q, v in _honest_votes(stored_qcs, honesty):
        per_member.setdefault(v.member, []).append((v.round, _qc_prev_round(store, q), q))
        c3 = find_kchain(store, q, 3, Relation.CONTIG)
        if c3 is not None:
            heads.setdefault(v.member, []).append((v.round, c3.block(2).round, q))
    out: list = []
    for member, head_list in sorted(heads.items()):
        later = sorted(per_member[member], key=lambda t: t[0])
        rounds = [t[0] for t in later]
        suffix_min = [0] * (len(later) + 1)
        suffix_min[len(later)] = 1 << 62
        for i in range(len(later) - 1, -1, -1):
            suffix_min[i] = min(later[i][1], suffix_min[i + 1])
        for vround, committed_round, q in head_list:
            start = bisect.bisect_right(rounds, vround)
            if suffix_min[start] >= committed_round:
                continue
            for vr2, pr2, q2 in later[start:]:
                if pr2 < committed_round:
                    inj = _chain_has_collision(store, q2) or _chain_has_collision(store, q)
                    if inj is not None:
                        out.append(inj)
                    else:
                        out.append(RuleViolation(
                            member, "PreferredRound", vr2,
                            f"committed round {committed_round} > prev round {pr2} "
                            f"after vote at round {vround}", (q, q2)))
    return out


def audit_complete(pool: RecordPool, honesty: HonestyMap, cfg: EpochConfig) -> list[RuleViolation]:
    """Every honest vote in a pool QC must be for a block with a full chain of
    sent records."""
    store = pool.store(cfg)
    out = []
    for q, v in _honest_votes(pool.qcs, honesty):
        ok = any(b.round == v.round for b in store.blocks_by_id.get(v.block_uid, ()))
        if not ok:
            out.append(RuleViolation(v.member, "Complete", v.round,
                                     f"no sent chain to block {v.block_uid.hex()[:16]}", (q,)))
    return out


def certified_round_uniqueness(pool: RecordPool, cfg: EpochConfig) \
        -> Optional[Union[InjectivityFailure, CertifiedRoundConflict]]:
    """At most one certified block per round. Collision evidence takes
    precedence over a conflict report."""
    store = pool.store(cfg)
    by_round: dict[int, list[QC]] = {}
    for q in store.qcs:
        by_round.setdefault(q.round, []).append(q)
    conflict = None
    for rnd in sorted(by_round):
        qs = by_round[rnd]
        for q in qs:
            certified = [b for b in store.blocks_by_id.get(q.cert_block_id, ()) if b.round == rnd]
            if len({b.content() for b in certified}) > 1:
                return InjectivityFailure(certified[0], certified[1],
                                          pool.provenance.get(certified[0]),
                                          pool.provenance.get(certified[1]))
        if conflict is None:
            ids = {}
            for q in qs:
                ids.setdefault(q.cert_block_id, q)
            if len(ids) > 1:
                q0, q1 = list(ids.values())[:2]
                conflict = CertifiedRoundConflict(q0, q1)
    return conflict


def derivable_commits(pool: RecordPool, cfg: EpochConfig) -> list[CommitRule]:
    """One commit rule per certified block heading a contiguous 3-chain
    whose records were all sent."""
    store = pool.store(cfg)
    seen = set()
    out = []
    for q in store.qcs:
        key = (q.cert_block_id, q.round)
        if key in seen:
            continue
        seen.add(key)
        cr = detect_commit(store, q)
        if cr is not None:
            out.append(cr)
    return out


def commits_do_not_conflict(pool: RecordPool, cfg: EpochConfig,
                            commits: Optional[Sequence[CommitRule]] = None):
    """Safe, ConflictingCommits, or InjectivityFailure (which preempts a
    conflict whenever the pool holds colliding blocks)."""
    if commits is None:
        commits = derivable_commits(pool, cfg)
    block_sets = [frozenset(cr.chain.blocks()) for cr in commits]
    for i in range(len(commits)):
        for j in range(i + 1, len(commits)):
            if commits[i].committed in block_sets[j] or commits[j].committed in block_sets[i]:
                continue
            inj = find_injectivity_failure(pool)
            if inj is not None:
                return inj
            return ConflictingCommits(commits[i], commits[j])
    return Safe()


# ---------------------------------------------------------------------------
# certificate verification


class CertError(Exception):
    def __init__(self, name: str, position: Optional[int] = None, detail: str = ""):
        self.name = name
        self.position = position
        self.detail = detail
        parts = [name]
        if position is not None:
            parts.append(f"position={position}")
        if detail:
            parts.append(f"reason={detail}")
        super().__init__(" ".join(parts))


MIN_CERT_RECORDS = 6


def verify_commit_certificate(records: Sequence[Record], claim: bytes, cfg: EpochConfig,
                              evidence: EvidenceLookup,
                              hash_mode: Optional[HashMode] = STRONG) -> bytes:
    """Check a self-contained partial chain that ends in a contiguous 3-chain
    and return the id of the block it commits."""
    if len(records) < MIN_CERT_RECORDS:
        raise CertError("TooShort", detail=f"{len(records)} records")
    for i, r in enumerate(records):
        if i > 0:
            try:
                extends(records[i - 1], r)
            except ExtendsError as e:
                raise CertError("BadLink", i, e.clause) from None
        elif r is not Genesis and not isinstance(r, (Block, QC)):
            raise CertError("BadLink", 0, "ShapeMismatch")
        if isinstance(r, Block):
            if hash_mode is not None and not block_id_valid(r, hash_mode):
                raise CertError("BadLink", i, "IdNotDigest")
        elif isinstance(r, QC):
            try:
                validate_qc(r, cfg, evidence)
            except QCError as e:
                raise CertError("BadQC", i, e.reason) from None
    cr = commit_from_chain(RecordChain(tuple(records)))
    if cr is None:
        tail = records[-6:]
        if all(isinstance(x, Block) for x in tail[0::2]) and all(isinstance(x, QC) for x in tail[1::2]):
            raise CertError("NotContiguous", detail="/".join(str(b.round) for b in tail[0::2]))
        raise CertError("TooShort", detail="fewer than three block/QC pairs")
    if cr.committed.id != claim:
        raise CertError("WrongClaimedBlock", detail=claim.hex()[:16])
    return cr.committed.id


def certificate_for(commit: CommitRule) -> tuple[tuple, bytes]:
    """Minimal certificate for a commit: the final three block/QC pairs."""
    return commit.chain.records[-6:], commit.committed.id


# ---------------------------------------------------------------------------
# conflict diagnosis


@dataclass(frozen=True)
class Explanation:
    member: Optional[int]
    rule: Optional[str]
    text: str


def cross_check_conflict_pair(verdict: ConflictingCommits, pool: RecordPool,
                              honesty: HonestyMap, cfg: EpochConfig) -> Explanation:
    """Find an honest member voting in both commit-heading QCs and name the
    rule its votes broke; report an assumption breach if none exists."""
    if not isinstance(verdict, ConflictingCommits):
        raise ValueError("cross-check needs a ConflictingCommits verdict")
    q1, q2 = verdict.commit1.qc, verdict.commit2.qc
    member = quorum_intersection_honest(q1.members, q2.members, honesty, cfg)
    if member is None:
        return Explanation(None, None,
                           "no honest member in quorum intersection; byzantine budget exceeded")
    for v in audit_votes_only_once(pool, honesty):
        if v.member == member:
            return Explanation(member, "VotesOnlyOnce",
                               f"member {member} violated VotesOnlyOnce at round {v.round}")
    for v in audit_preferred_round(pool, honesty, cfg):
        if isinstance(v, RuleViolation) and v.member == member:
            return Explanation(member, "PreferredRound",
                               f"member {member} violated PreferredRound at round {v.round}")
    text = f"member {member} is in both quorums but broke no audited rule"
    if not honesty.within_budget(cfg):
        text += "; byzantine budget exceeded on another QC of the chains"
    return Explanation(member, None, text)


# ---------------------------------------------------------------------------
# full audit


@dataclass
class AuditReport:
    verdict: AuditVerdict
    votes_only_once: list = field(default_factory=list)
    preferred_round: list = field(default_factory=list)
    complete: list = field(default_factory=list)
    round_uniqueness: object = None
    injectivity: Optional[InjectivityFailure] = None
    commits: list = field(default_factory=list)
    explanation: Optional[Explanation] = None


def audit_pool(pool: RecordPool, honesty: HonestyMap, cfg: EpochConfig) -> AuditReport:
    """Run every audit. Verdict precedence: injectivity failure, conflicting
    commits, honest rule violation, safe."""
    commits = derivable_commits(pool, cfg)
    cdc = commits_do_not_conflict(pool, cfg, commits)
    voo = audit_votes_only_once(pool, honesty)
    pr = audit_preferred_round(pool, honesty, cfg)
    comp = audit_complete(pool, honesty, cfg)
    inj = find_injectivity_failure(pool)
    report = AuditReport(cdc, voo, pr, comp, certified_round_uniqueness(pool, cfg), inj, commits)
    if isinstance(cdc, ConflictingCommits):
        report.explanation = cross_check_conflict_pair(cdc, pool, honesty, cfg)
    elif inj is not None:
        report.verdict = inj
    elif isinstance(cdc, Safe):
        rule_hits = [v for v in voo + pr + comp if isinstance(v, RuleViolation)]
        if rule_hits:
            report.verdict = rule_hits[0]
    return report
