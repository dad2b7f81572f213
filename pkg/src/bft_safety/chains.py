"""Record tree, record chains, k-chains and the commit rule."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Optional, Sequence

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
    SentVotes,
    block_id_valid,
    extends,
    try_extends,
    validate_qc,
)
from .quorum import EpochConfig


class InsertError(Exception):
    pass


class OrphanRecord(InsertError):
    pass


class InvalidExtends(InsertError):
    def __init__(self, clause: str):
        self.clause = clause
        super().__init__(clause)


class InvalidQC(InsertError):
    def __init__(self, reason: str, member: Optional[int] = None):
        self.reason = reason
        self.member = member
        super().__init__(reason if member is None else f"{reason}({member})")


class BadBlockId(InsertError):
    """Block id is not the digest of the block's encoding."""


class ChainError(Exception):
    pass


class NotInStore(ChainError):
    pass


class Relation(Enum):
    CONTIG = "Contig"
    SIMPLE = "Simple"


@dataclass(frozen=True)
class InjectivityEvidence:
    """Two distinct blocks sharing one id."""

    block0: Block
    block1: Block


@dataclass(frozen=True)
class RecordChain:
    """Alternating records, each extending the previous one. A chain whose
    first record is genesis is a full chain; anything else is partial."""

    records: tuple

    @property
    def origin(self) -> Record:
        return self.records[0]

    @property
    def last(self) -> Record:
        return self.records[-1]

    @property
    def is_full(self) -> bool:
        return self.records[0] is Genesis

    def blocks(self) -> tuple[Block, ...]:
        return tuple(r for r in self.records if isinstance(r, Block))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    def check_links(self) -> None:
        for a, b in zip(self.records, self.records[1:]):
            extends(a, b)


@dataclass(frozen=True)
class KChain:
    k: int
    blocks: tuple[Block, ...]  # oldest first
    qcs: tuple[QC, ...]
    relation: Relation

    def block(self, n: int) -> Block:
        """The n-th block from the end (0 is the newest)."""
        return self.blocks[-1 - n]


@dataclass(frozen=True)
class CommitRule:
    chain: RecordChain
    kchain: KChain
    committed: Block

    @property
    def qc(self) -> QC:
        return self.chain.last


class RecordStore:
    """A tree of validated records rooted at genesis.

    Every stored record keeps the parent it was inserted under, so walks back
    to genesis are deterministic. Blocks whose ids collide are kept side by
    side and remembered in ``collisions``.
    """

    def __init__(self, cfg: EpochConfig, evidence: Optional[EvidenceLookup] = None,
                 hash_mode: Optional[HashMode] = STRONG):
        self.cfg = cfg
        self.evidence = evidence if evidence is not None else SentVotes()
        self.hash_mode = hash_mode
        self.parent: dict = {Genesis: None}
        self.children: dict = {Genesis: []}
        self.blocks_by_id: dict[bytes, list[Block]] = {}
        self.qcs_by_cert: dict[bytes, list[QC]] = {}
        self.collisions: list[InjectivityEvidence] = []
        self.order: list[Record] = [Genesis]

    def __contains__(self, r) -> bool:
        return r in self.parent

    def __len__(self) -> int:
        return len(self.parent)

    @property
    def blocks(self) -> list[Block]:
        return [r for r in self.order if isinstance(r, Block)]

    @property
    def qcs(self) -> list[QC]:
        return [r for r in self.order if isinstance(r, QC)]

    def _pick_parent(self, r: Record, candidates: Sequence[Record]) -> Record:
        first_error = None
        for c in candidates:
            try:
                extends(c, r)
                return c
            except ExtendsError as e:
                first_error = first_error or e
        raise InvalidExtends(first_error.clause)

    def insert(self, r: Record) -> None:
        if r in self.parent:
            return
        if isinstance(r, Block):
            if self.hash_mode is not None and not block_id_valid(r, self.hash_mode):
                raise BadBlockId(r.id.hex())
            if r.prev_qc is None:
                parent = self._pick_parent(r, (Genesis,))
            else:
                cands = self.qcs_by_cert.get(r.prev_qc)
                if not cands:
                    raise OrphanRecord(f"no QC certifying {r.prev_qc.hex()[:16]}")
                parent = self._pick_parent(r, cands)
            same_id = self.blocks_by_id.setdefault(r.id, [])
            for other in same_id:
                if other.content() != r.content():
                    self.collisions.append(InjectivityEvidence(other, r))
                    break
            same_id.append(r)
        elif isinstance(r, QC):
            cands = self.blocks_by_id.get(r.cert_block_id)
            if not cands:
                raise OrphanRecord(f"no block {r.cert_block_id.hex()[:16]}")
            parent = self._pick_parent(r, cands)
            try:
                validate_qc(r, self.cfg, self.evidence)
            except QCError as e:
                raise InvalidQC(e.reason, e.member) from None
            self.qcs_by_cert.setdefault(r.cert_block_id, []).append(r)
        else:
            raise InvalidExtends("ShapeMismatch")
        self.parent[r] = parent
        self.children[r] = []
        self.children[parent].append(r)
        self.order.append(r)

    def chain_to(self, r: Record) -> RecordChain:
        if r not in self.parent:
            raise NotInStore(repr(r))
        out = []
        parent = self.parent
        while r is not None:
            out.append(r)
            r = parent[r]
        out.reverse()
        return RecordChain(tuple(out))

    def parent_candidates(self, r: Record) -> list[Record]:
        """Every stored record that ``r`` validly extends, one QC per
        (cert id, round) class."""
        if isinstance(r, Block):
            if r.prev_qc is None:
                return [Genesis] if try_extends(Genesis, r) else []
            seen, out = set(), []
            for q in self.qcs_by_cert.get(r.prev_qc, ()):
                if (q.cert_block_id, q.round) not in seen and try_extends(q, r):
                    seen.add((q.cert_block_id, q.round))
                    out.append(q)
            return out
        if isinstance(r, QC):
            out = []
            for b in self.blocks_by_id.get(r.cert_block_id, ()):
                if try_extends(b, r) and b not in out:
                    out.append(b)
            return out
        return []

    def dump_lines(self) -> list[str]:
        from .dump import format_record
        return [format_record(r, self.evidence) for r in self.order]


def insert_record(store: RecordStore, r: Record) -> None:
    store.insert(r)


def record_chain(store: RecordStore, r: Record) -> RecordChain:
    return store.chain_to(r)


def prev_round(rc: RecordChain) -> int:
    """Round of the QC extended by the chain's final block (0 for genesis)."""
    recs = rc.records
    if len(recs) < 2 or not isinstance(recs[-1], QC) or not isinstance(recs[-2], Block):
        raise ChainError("chain must end in a block followed by its QC")
    b = recs[-2]
    if b.prev_qc is None:
        return 0
    if len(recs) < 3 or not isinstance(recs[-3], QC):
        raise ChainError("final block's parent QC is not in the chain")
    return recs[-3].round


def _contiguous(blocks: Sequence[Block]) -> bool:
    return all(b2.round == b1.round + 1 for b1, b2 in zip(blocks, blocks[1:]))


def kchain_from_suffix(records: Sequence[Record], k: int, relation: Relation) -> Optional[KChain]:
    """Interpret the last ``2k`` records as a k-chain, if they form one."""
    if k == 0:
        return KChain(0, (), (), relation)
    if len(records) < 2 * k:
        return None
    tail = records[len(records) - 2 * k:]
    blocks = tail[0::2]
    qcs = tail[1::2]
    if not all(isinstance(b, Block) for b in blocks) or not all(isinstance(q, QC) for q in qcs):
        return None
    if relation is Relation.CONTIG and not _contiguous(blocks):
        return None
    return KChain(k, tuple(blocks), tuple(qcs), relation)


def find_kchain(store: RecordStore, q: QC, k: int, relation: Relation) -> Optional[KChain]:
    if q not in store:
        raise NotInStore(repr(q))
    tail: list[Record] = []
    r = q
    parent = store.parent
    while len(tail) < 2 * k and r is not None:
        tail.append(r)
        r = parent[r]
    tail.reverse()
    return kchain_from_suffix(tail, k, relation)


def detect_commit(store: RecordStore, q: QC) -> Optional[CommitRule]:
    c3 = find_kchain(store, q, 3, Relation.CONTIG)
    if c3 is None:
        return None
    return CommitRule(store.chain_to(q), c3, c3.block(2))


def commit_from_chain(rc: RecordChain) -> Optional[CommitRule]:
    """The commit rule carried by a (possibly partial) chain ending in a QC."""
    c3 = kchain_from_suffix(rc.records, 3, Relation.CONTIG)
    if c3 is None:
        return None
    return CommitRule(rc, c3, c3.block(2))


def records_equivalent(a: Record, b: Record) -> bool:
    if a is Genesis or b is Genesis:
        return a is b
    if isinstance(a, Block):
        return isinstance(b, Block) and a == b
    return isinstance(b, QC) and a.cert_block_id == b.cert_block_id


def chains_equivalent(rc1: RecordChain, rc2: RecordChain) -> bool:
    """Pointwise equivalence: equal blocks, QCs certifying the same block id."""
    if len(rc1.records) != len(rc2.records):
        return False
    return all(records_equivalent(a, b) for a, b in zip(rc1.records, rc2.records))


def block_in_chain(b: Block, rc: RecordChain) -> bool:
    # equivalent chains agree on blocks position by position, so membership
    # through an equivalent chain reduces to a positional scan
    return any(isinstance(r, Block) and r == b for r in rc.records)


def all_chains(store: RecordStore, r: Record, limit: int = 256) -> list[RecordChain]:
    """Every distinct chain to ``r`` through all valid parent candidates (QCs
    collapsed to one representative per certified block)."""
    if r not in store:
        raise NotInStore(repr(r))
    memo: dict = {}

    def walk(x) -> list[tuple]:
        if x is Genesis:
            return [(Genesis,)]
        if x in memo:
            return memo[x]
        out: list[tuple] = []
        for p in store.parent_candidates(x):
            for prefix in walk(p):
                out.append(prefix + (x,))
                if len(out) >= limit:
                    break
        memo[x] = out
        return out

    return [RecordChain(t) for t in walk(r)]


def check_rc_irrelevance(store: RecordStore, r: Record) -> Optional[InjectivityEvidence]:
    """Verify that all chains ending at ``r`` are equivalent. Returns the
    colliding block pair that makes two of them differ, or ``None``."""
    chains = all_chains(store, r)
    for i in range(len(chains)):
        for j in range(i + 1, len(chains)):
            c1, c2 = chains[i].records, chains[j].records
            if chains_equivalent(chains[i], chains[j]):
                continue
            for a, b in zip(reversed(c1), reversed(c2)):
                if isinstance(a, Block) and isinstance(b, Block) and a != b:
                    return InjectivityEvidence(a, b)
    return None
