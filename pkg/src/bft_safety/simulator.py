"""Deterministic discrete-event simulation of peers over a lossy network.

Time is logical. Every queued event carries a due time; the loop always pops
the earliest one, and each popped event is one step. Messages are delayed at
send time and dropped or duplicated when popped. Timeouts are local events and
only count as a step when they actually advance a peer's round.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np

from .auditor import AuditReport, RecordPool, audit_pool
from .chains import InsertError, RecordStore, Relation, find_kchain
from .core import STRONG, QC, Block, Genesis, HashMode, Vote, make_block
from .quorum import EpochConfig, HonestyMap
from .voter import Refusal, VoterSafetyState, should_vote, update_safety_state

PRNG_NAME = "PCG64"
_RAW_BATCH = 4096


class ScenarioError(ValueError):
    pass


class Behavior(Enum):
    EQUIVOCATE = "Equivocate"
    DOUBLE_VOTE = "DoubleVote"
    IGNORE_PREFERRED_ROUND = "IgnorePreferredRound"
    SILENT = "Silent"


@dataclass(frozen=True)
class Scenario:
    cfg: EpochConfig
    honesty: HonestyMap = field(default_factory=HonestyMap)
    adversary: tuple = ()  # (member, Behavior) pairs, one per byzantine member
    steps: int = 2000
    drop_prob: float = 0.0
    dup_prob: float = 0.0
    max_delay: int = 0
    seed: int = 0
    hash_mode: HashMode = STRONG
    equivocation_fanout: int = 1  # variants an equivocating leader sends each recipient

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.steps < 1:
            raise ScenarioError("steps must be at least 1")
        for name in ("drop_prob", "dup_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ScenarioError(f"{name} must lie in [0, 1], got {p}")
        if self.max_delay < 0:
            raise ScenarioError("max_delay must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ScenarioError("seed must be a 64-bit unsigned integer")
        if self.equivocation_fanout < 1:
            raise ScenarioError("equivocation_fanout must be at least 1")
        n = self.cfg.authors_n
        for m in self.honesty.byzantine:
            if not 0 <= m < n:
                raise ScenarioError(f"byzantine member {m} out of range")
        tagged = {}
        for m, b in self.adversary:
            if not isinstance(b, Behavior):
                raise ScenarioError(f"unknown adversary behavior {b!r}")
            tagged[m] = b
        if set(tagged) != set(self.honesty.byzantine):
            raise ScenarioError("adversary behaviors must cover exactly the byzantine members")

    def behavior(self, member: int) -> Optional[Behavior]:
        for m, b in self.adversary:
            if m == member:
                return b
        return None


class Rng:
    """Seeded PCG64 stream with buffered raw draws."""

    def __init__(self, seed: int):
        self._gen = np.random.PCG64(np.random.SeedSequence(seed))
        self._buf: list[int] = []

    def _raw(self) -> int:
        if not self._buf:
            self._buf = self._gen.random_raw(_RAW_BATCH).tolist()
            self._buf.reverse()
        return self._buf.pop()

    def random(self) -> float:
        return (self._raw() >> 11) * (1.0 / (1 << 53))

    def below(self, k: int) -> int:
        """Uniform integer in [0, k)."""
        return self._raw() % k


@dataclass(frozen=True)
class Proposal:
    block: Block
    support: tuple  # chain from genesis through the QC the block extends


@dataclass(frozen=True)
class VoteMsg:
    vote: Vote


@dataclass(frozen=True)
class QCMsg:
    qc: QC
    support: tuple  # chain from genesis through the QC itself


Payload = Union[Proposal, VoteMsg, QCMsg]


@dataclass(frozen=True)
class Message:
    payload: Payload
    sender: int
    send_step: int


def leader_of(round: int, n: int) -> int:
    return round % n


def _short(uid: Optional[bytes]) -> str:
    return "-" if uid is None else uid.hex()[:16]


def _kind(p: Payload) -> str:
    return type(p).__name__


def _payload_round_id(p: Payload) -> tuple[int, Optional[bytes]]:
    if isinstance(p, Proposal):
        return p.block.round, p.block.id
    if isinstance(p, VoteMsg):
        return p.vote.round, p.vote.block_uid
    return p.qc.round, p.qc.cert_block_id


class Peer:
    def __init__(self, world: "World", me: int, behavior: Optional[Behavior]):
        self.world = world
        self.me = me
        self.behavior = behavior
        self.store = RecordStore(world.cfg, evidence=world.pool, hash_mode=world.scenario.hash_mode)
        self.safety = VoterSafetyState()
        self.current_round = 1
        self.highest_qc: Optional[QC] = None
        self.proposed: set[int] = set()
        self.votes: dict[tuple[int, bytes], dict[int, Vote]] = {}
        self.formed: set[tuple[int, bytes]] = set()
        self.voted_pairs: set[tuple[int, bytes]] = set()
        self.commit_tip: Optional[Block] = None
        self.commit_log: list[Block] = []
        # adversary bookkeeping: last variant parent sent to each recipient
        self.branch_of: dict[int, Optional[QC]] = {}

    @property
    def honest(self) -> bool:
        return self.behavior is None

    # -- record intake ---------------------------------------------------

    def absorb(self, records: tuple, step: int, kind: str) -> bool:
        """Insert the unseen suffix of a supporting chain."""
        store = self.store
        i = len(records)
        while i > 0 and records[i - 1] not in store:
            i -= 1
        for r in records[i:]:
            try:
                store.insert(r)
            except InsertError as e:
                self.world.trace(step, "REFUSE", self.me, kind, getattr(r, "round", 0),
                                 getattr(r, "id", None) or getattr(r, "cert_block_id", None),
                                 f"InvalidRecord:{type(e).__name__}")
                return False
            if isinstance(r, QC):
                self.on_new_qc(r, step)
            else:
                self.try_form_for(r.id, r.round, step)
        return True

    def on_new_qc(self, q: QC, step: int) -> None:
        if self.highest_qc is None or q.round > self.highest_qc.round:
            self.highest_qc = q
        if self.behavior is not Behavior.SILENT:
            self.check_commit(q, step)
        if q.round + 1 > self.current_round:
            self.enter_round(q.round + 1, step)

    def _descends(self, r, anc: Block) -> bool:
        """Whether ``anc`` lies on the stored chain to ``r``; walks back only
        as far as ``anc``'s round."""
        parent = self.store.parent
        while r is not None and r is not Genesis and r.round >= anc.round:
            if r == anc:
                return True
            r = parent[r]
        return False

    def check_commit(self, q: QC, step: int) -> None:
        c3 = find_kchain(self.store, q, 3, Relation.CONTIG)
        if c3 is None:
            return
        b = c3.block(2)
        tip = self.commit_tip
        if tip is not None:
            if b.round <= tip.round:
                if not self._descends(tip, b):
                    self.world.trace(step, "VIOLATION", self.me, "Block", b.round, b.id,
                                     "CommitConflictsWithEarlier")
                return
            if not self._descends(b, tip):
                self.world.trace(step, "VIOLATION", self.me, "Block", b.round, b.id,
                                 "CommitRetractsEarlier")
                return
        self.commit_tip = b
        self.commit_log.append(b)
        self.world.trace(step, "COMMIT", self.me, "Block", b.round, b.id, f"qc_round:{q.round}")

    # -- rounds ----------------------------------------------------------

    def enter_round(self, r: int, step: int) -> None:
        self.current_round = r
        self.world.schedule_timeout(self.me, r)
        if leader_of(r, self.world.n) == self.me:
            self.propose(r, step)

    def on_timeout(self, r: int, step: int) -> None:
        self.world.trace(step, "DELIVER", self.me, "Timeout", r, None, "local")
        self.enter_round(r + 1, step)

    def propose(self, r: int, step: int) -> None:
        if r in self.proposed or self.behavior is Behavior.SILENT:
            return
        self.proposed.add(r)
        w = self.world
        if self.behavior in (Behavior.EQUIVOCATE, Behavior.DOUBLE_VOTE):
            self.propose_variants(r, step)
            return
        support, parent_id = self._support(self.highest_qc)
        b = make_block(r, parent_id, b"p%dr%d" % (self.me, r), w.scenario.hash_mode)
        w.broadcast(self.me, Proposal(b, support), step)

    def _support(self, q: Optional[QC]) -> tuple[tuple, Optional[bytes]]:
        if q is None:
            return (Genesis,), None
        return self.store.chain_to(q).records, q.cert_block_id

    def _branch_parent(self, recipient: int) -> Optional[QC]:
        """Highest known QC descending from the branch this recipient was
        last steered onto (fork-keeping equivocation)."""
        base = self.branch_of.get(recipient)
        if base is None:
            return self.highest_qc
        best = base
        for q in self.store.qcs:
            if q.round > best.round and self._descends(q, self.store.parent[base]):
                best = q
        return best

    def propose_variants(self, r: int, step: int) -> None:
        w = self.world
        fanout = w.scenario.equivocation_fanout
        byz = sorted(w.honesty.byzantine)
        all_variants: list[Proposal] = []
        for p in range(w.n):
            if p in w.honesty.byzantine:
                continue
            if self.behavior is Behavior.DOUBLE_VOTE:
                parent = self._branch_parent(p)
            else:
                parent = self.highest_qc
            support, parent_id = self._support(parent)
            last = None
            for j in range(fanout):
                b = make_block(r, parent_id, b"e%dr%dto%dv%d" % (self.me, r, p, j), w.scenario.hash_mode)
                prop = Proposal(b, support)
                w.send(self.me, p, prop, step)
                all_variants.append(prop)
                last = b
            if parent is not None and last is not None:
                self.branch_of[p] = parent
        # colluding byzantine peers see every variant
        for prop in all_variants:
            for p in byz:
                w.send(self.me, p, prop, step)

    # -- handlers --------------------------------------------------------

    def handle(self, msg: Message, step: int) -> None:
        if self.behavior is Behavior.SILENT:
            return
        p = msg.payload
        if isinstance(p, Proposal):
            self.on_proposal(p, msg.sender, step)
        elif isinstance(p, VoteMsg):
            self.on_vote(p.vote, msg.sender, step)
        else:
            self.absorb(p.support, step, "QC")

    def on_proposal(self, p: Proposal, sender: int, step: int) -> None:
        b = p.block
        if not self.absorb(p.support + (b,), step, "Proposal"):
            return
        if sender != leader_of(b.round, self.world.n):
            self.world.trace(step, "REFUSE", self.me, "Proposal", b.round, b.id, "NotLeader")
            return
        if self.behavior is Behavior.DOUBLE_VOTE:
            if (b.round, b.id) in self.voted_pairs:
                return
            self.cast(Vote(b.round, self.me, b.id), step)
            return
        if b.round < self.current_round:
            self.world.trace(step, "REFUSE", self.me, "Proposal", b.round, b.id, "StaleRound")
            return
        state = self.safety
        if self.behavior is Behavior.IGNORE_PREFERRED_ROUND:
            state = VoterSafetyState(state.last_voted_round, 0)
        try:
            v = should_vote(state, b, self.store, self.world.cfg, self.me)
        except Refusal as e:
            self.world.trace(step, "REFUSE", self.me, "Proposal", b.round, b.id, e.reason)
            return
        self.safety = update_safety_state(self.safety, b, self.store)
        if b.round > self.current_round:
            self.current_round = b.round
            self.world.schedule_timeout(self.me, b.round)
        self.cast(v, step)

    def cast(self, v: Vote, step: int) -> None:
        self.voted_pairs.add((v.round, v.block_uid))
        self.world.broadcast(self.me, VoteMsg(v), step)

    def on_vote(self, v: Vote, sender: int, step: int) -> None:
        if v.member != sender:
            self.world.trace(step, "REFUSE", self.me, "VoteMsg", v.round, v.block_uid, "NotSigner")
            return
        key = (v.round, v.block_uid)
        if key in self.formed:
            return
        self.votes.setdefault(key, {})[v.member] = v
        self.try_form(key, step)

    def try_form_for(self, uid: bytes, round: int, step: int) -> None:
        key = (round, uid)
        if key in self.votes and key not in self.formed:
            self.try_form(key, step)

    def try_form(self, key: tuple[int, bytes], step: int) -> None:
        acc = self.votes[key]
        if not self.world.cfg.is_quorum(acc):
            return
        rnd, uid = key
        if not any(b.round == rnd for b in self.store.blocks_by_id.get(uid, ())):
            return  # wait for the proposal
        q = QC(rnd, uid, tuple(acc[m] for m in sorted(acc)))
        try:
            self.store.insert(q)
        except InsertError as e:
            self.world.trace(step, "REFUSE", self.me, "QC", rnd, uid, f"InvalidQC:{e}")
            return
        self.formed.add(key)
        self.world.trace(step, "QCFORM", self.me, "QC", rnd, uid, f"votes:{len(acc)}")
        self.world.broadcast(self.me, QCMsg(q, self.store.chain_to(q).records), step, local=False)
        self.on_new_qc(q, step)


class World:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.cfg = scenario.cfg
        self.n = scenario.cfg.authors_n
        self.honesty = scenario.honesty
        self.rng = Rng(scenario.seed)
        self.pool = RecordPool()
        self.queue: list = []
        self.seq = 0
        self.step = 0
        self.time = 0
        self.lines: list[str] = [
            f"# prng={PRNG_NAME} seed={scenario.seed} authors_n={self.n} steps={scenario.steps} "
            f"hash_mode={scenario.hash_mode}"
        ]
        self.peers = [Peer(self, m, scenario.behavior(m)) for m in range(self.n)]
        self.timeout_len = 4 * (scenario.max_delay + 1) + 2 * self.n

    # -- tracing ---------------------------------------------------------

    def trace(self, step: int, evt: str, peer: int, kind: str, round: int,
              uid: Optional[bytes], detail: str) -> None:
        self.lines.append(f"step={step} evt={evt} peer={peer} kind={kind} round={round} "
                          f"id={_short(uid)} detail={detail or '-'}")

    # -- network ---------------------------------------------------------

    def _push(self, due: int, item: tuple) -> None:
        self.seq += 1
        heapq.heappush(self.queue, (due, self.seq) + item)

    def _record_sent(self, sender: int, p: Payload, step: int) -> None:
        pool = self.pool
        if isinstance(p, VoteMsg):
            pool.add_vote(p.vote, sender, step)
            return
        recs = p.support
        i = len(recs)
        while i > 0 and recs[i - 1] not in pool:
            i -= 1
        for r in recs[i:]:
            pool.add_record(r, sender, step)
        if isinstance(p, Proposal):
            pool.add_record(p.block, sender, step)

    def send(self, sender: int, to: int, p: Payload, step: int) -> None:
        self._record_sent(sender, p, step)
        rnd, uid = _payload_round_id(p)
        self.trace(step, "SEND", sender, _kind(p), rnd, uid, f"to:{to}")
        self._enqueue(Message(p, sender, step), to)

    def broadcast(self, sender: int, p: Payload, step: int, local: bool = True) -> None:
        """Send to every other peer; the sender handles its own copy at once
        unless ``local`` is false."""
        self._record_sent(sender, p, step)
        rnd, uid = _payload_round_id(p)
        self.trace(step, "SEND", sender, _kind(p), rnd, uid, "to:all")
        msg = Message(p, sender, step)
        for to in range(self.n):
            if to != sender:
                self._enqueue(msg, to)
        if local:
            self.peers[sender].handle(msg, step)

    def _enqueue(self, msg: Message, to: int) -> None:
        delay = self.rng.below(self.scenario.max_delay + 1) if self.scenario.max_delay else 0
        self._push(self.time + 1 + delay, (0, to, msg))

    def schedule_timeout(self, peer: int, round: int) -> None:
        self._push(self.time + self.timeout_len, (1, peer, round))

    # -- loop ------------------------------------------------------------

    def start(self) -> None:
        for p in self.peers:
            self.schedule_timeout(p.me, 1)
        self.peers[leader_of(1, self.n)].propose(1, 0)

    def step_once(self) -> bool:
        """Consume one event. Returns False when the queue is exhausted."""
        sc = self.scenario
        while self.queue:
            due, _, tag, target, item = heapq.heappop(self.queue)
            self.time = due
            peer = self.peers[target]
            if tag == 1:
                if item != peer.current_round or peer.behavior is Behavior.SILENT:
                    continue  # stale timeout, not a step
                self.step += 1
                peer.on_timeout(item, self.step)
                return True
            self.step += 1
            step = self.step
            msg: Message = item
            p = msg.payload
            rnd, uid = _payload_round_id(p)
            kind = _kind(p)
            if sc.drop_prob and self.rng.random() < sc.drop_prob:
                self.trace(step, "DROP", target, kind, rnd, uid, f"from:{msg.sender}")
                return True
            if sc.dup_prob and self.rng.random() < sc.dup_prob:
                self.trace(step, "DUP", target, kind, rnd, uid, f"from:{msg.sender}")
                self._enqueue(msg, target)
            self.trace(step, "DELIVER", target, kind, rnd, uid, f"from:{msg.sender}")
            peer.handle(msg, step)
            return True
        return False

    def run(self) -> None:
        self.start()
        while self.step < self.scenario.steps and self.step_once():
            pass

    def trace_text(self) -> str:
        return "\n".join(self.lines) + "\n"


@dataclass
class RunResult:
    trace: str
    pool: RecordPool
    report: AuditReport
    world: World

    @property
    def verdict(self):
        return self.report.verdict

    def committed_sequences(self, honest_only: bool = True) -> dict[int, list[Block]]:
        """Each peer's committed chain of blocks, oldest first."""
        out = {}
        for p in self.world.peers:
            if honest_only and not p.honest:
                continue
            if p.commit_tip is None:
                out[p.me] = []
            else:
                out[p.me] = list(p.store.chain_to(p.commit_tip).blocks())
        return out


def prefix_consistent(seqs: dict[int, list[Block]]) -> bool:
    vals = list(seqs.values())
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            a, b = vals[i], vals[j]
            k = min(len(a), len(b))
            if a[:k] != b[:k]:
                return False
    return True


def run_scenario(scenario: Scenario) -> RunResult:
    world = World(scenario)
    world.run()
    report = audit_pool(world.pool, scenario.honesty, scenario.cfg)
    return RunResult(world.trace_text(), world.pool, report, world)
