"""Abstract record types, canonical block encoding, id assignment and the
extends relation between records."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Optional, Protocol, Union

if TYPE_CHECKING:
    from .quorum import EpochConfig

UID_LEN = 32
BLOCK_TAG = 0x42
MAX_PAYLOAD = 2**32 - 1


class EncodingError(ValueError):
    pass


class _GenesisType:
    """The epoch's initial record. There is exactly one."""

    _instance: Optional["_GenesisType"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Genesis"

    def __reduce__(self):
        return (_GenesisType, ())

    round = 0


Genesis = _GenesisType()


@dataclass(frozen=True)
class Block:
    round: int
    id: bytes
    prev_qc: Optional[bytes]
    payload: bytes = b""

    def content(self) -> tuple:
        """Everything except the id; two blocks with equal ids but different
        content are an injectivity failure."""
        return (self.round, self.prev_qc, self.payload)


@dataclass(frozen=True)
class Vote:
    round: int
    member: int
    block_uid: bytes


@dataclass(frozen=True)
class QC:
    round: int
    cert_block_id: bytes
    votes: tuple[Vote, ...] = field(default=())

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(v.member for v in self.votes)


Record = Union[_GenesisType, Block, QC]


def record_kind(r: Record) -> str:
    if r is Genesis:
        return "I"
    if isinstance(r, Block):
        return "B"
    if isinstance(r, QC):
        return "Q"
    raise TypeError(f"not a record: {r!r}")


def record_round(r: Record) -> int:
    return r.round


# ---------------------------------------------------------------------------
# encoding and ids


def canonical_encode(b: Block) -> bytes:
    """Bit-exact block encoding used as input to id assignment.

    Layout: tag 0x42, round (u64 BE), prev-QC flag byte then 32 id bytes when
    present, payload length (u32 BE), payload. The block's own id is not part
    of the encoding.
    """
    if len(b.payload) > MAX_PAYLOAD:
        raise EncodingError(f"payload too long: {len(b.payload)} bytes")
    if not 0 <= b.round < 2**64:
        raise EncodingError(f"round out of range: {b.round}")
    parts = [struct.pack(">BQ", BLOCK_TAG, b.round)]
    if b.prev_qc is None:
        parts.append(b"\x00")
    else:
        if len(b.prev_qc) != UID_LEN:
            raise EncodingError("prev_qc must be 32 bytes")
        parts.append(b"\x01")
        parts.append(b.prev_qc)
    parts.append(struct.pack(">I", len(b.payload)))
    parts.append(b.payload)
    return b"".join(parts)


@dataclass(frozen=True)
class HashMode:
    """``weak_bytes=None`` is the strong (full SHA-256) mode; otherwise only the
    first ``weak_bytes`` digest bytes are kept and the rest zeroed."""

    weak_bytes: Optional[int] = None

    def __post_init__(self):
        if self.weak_bytes is not None and not 0 <= self.weak_bytes <= UID_LEN:
            raise ValueError(f"weak hash width must be in [0, {UID_LEN}]")

    @property
    def is_strong(self) -> bool:
        return self.weak_bytes is None

    def __str__(self) -> str:
        return "strong" if self.weak_bytes is None else f"weak:{self.weak_bytes}"

    @classmethod
    def parse(cls, text: str) -> "HashMode":
        text = text.strip().lower()
        if text == "strong":
            return cls()
        if text.startswith("weak:"):
            return cls(int(text[5:]))
        raise ValueError(f"unknown hash mode {text!r}")


STRONG = HashMode()


def Weak(k: int) -> HashMode:
    return HashMode(k)


def assign_id(enc: bytes, mode: HashMode = STRONG) -> bytes:
    digest = hashlib.sha256(enc).digest()
    if mode.weak_bytes is None:
        return digest
    k = mode.weak_bytes
    return digest[:k] + bytes(UID_LEN - k)


def make_block(round: int, prev_qc: Optional[bytes], payload: bytes = b"",
               mode: HashMode = STRONG) -> Block:
    """Build a block whose id is the digest of its canonical encoding."""
    draft = Block(round, b"", prev_qc, payload)
    return Block(round, assign_id(canonical_encode(draft), mode), prev_qc, payload)


def block_id_valid(b: Block, mode: HashMode = STRONG) -> bool:
    try:
        return assign_id(canonical_encode(b), mode) == b.id
    except EncodingError:
        return False


# ---------------------------------------------------------------------------
# extends relation


class ExtendsWitness(Enum):
    I_B = "I<-B"
    Q_B = "Q<-B"
    B_Q = "B<-Q"


class ExtendsError(Exception):
    """Raised when no extends constructor applies. ``clause`` names the first
    violated condition."""

    def __init__(self, clause: str, detail: str = ""):
        self.clause = clause
        super().__init__(f"{clause}: {detail}" if detail else clause)


def extends(r: Record, r2: Record) -> ExtendsWitness:
    """Return the constructor under which ``r2`` extends ``r``."""
    if r is Genesis and isinstance(r2, Block):
        if not r2.round > 0:
            raise ExtendsError("RoundNotGreater", "block extending genesis needs round > 0")
        if r2.prev_qc is not None:
            raise ExtendsError("PrevQCMismatch", "block extending genesis must not name a QC")
        return ExtendsWitness.I_B
    if isinstance(r, QC) and isinstance(r2, Block):
        if not r.round < r2.round:
            raise ExtendsError("RoundNotGreater", f"qc round {r.round} >= block round {r2.round}")
        if r2.prev_qc != r.cert_block_id:
            raise ExtendsError("PrevQCMismatch")
        return ExtendsWitness.Q_B
    if isinstance(r, Block) and isinstance(r2, QC):
        if r2.round != r.round:
            raise ExtendsError("RoundMismatch", f"qc round {r2.round} != block round {r.round}")
        if r2.cert_block_id != r.id:
            raise ExtendsError("IdMismatch")
        return ExtendsWitness.B_Q
    raise ExtendsError("ShapeMismatch", f"{record_kind(r)} cannot be extended by {record_kind(r2)}")


def try_extends(r: Record, r2: Record) -> Optional[ExtendsWitness]:
    try:
        return extends(r, r2)
    except ExtendsError:
        return None


# ---------------------------------------------------------------------------
# vote evidence and QC validation


@dataclass(frozen=True)
class VoteEvidence:
    """A vote together with the sent message that carried it."""

    vote: Vote
    sender: int
    step: int


class EvidenceLookup(Protocol):
    def find(self, vote: Vote) -> Optional[VoteEvidence]: ...


class SentVotes:
    """Evidence lookup backed by an explicit collection of sent votes.

    Used wherever there is no simulator log: hand-built fixtures and the
    offline certificate verifier.
    """

    def __init__(self, evidence=()):
        self._by_vote: dict[Vote, VoteEvidence] = {}
        for ev in evidence:
            self.add(ev)

    @classmethod
    def from_votes(cls, votes, step: int = 0) -> "SentVotes":
        return cls(VoteEvidence(v, v.member, step) for v in votes)

    def add(self, ev: VoteEvidence) -> None:
        if ev.sender == ev.vote.member:
            self._by_vote.setdefault(ev.vote, ev)

    def find(self, vote: Vote) -> Optional[VoteEvidence]:
        return self._by_vote.get(vote)

    def __len__(self) -> int:
        return len(self._by_vote)


class QCError(Exception):
    def __init__(self, reason: str, member: Optional[int] = None):
        self.reason = reason
        self.member = member
        super().__init__(reason if member is None else f"{reason}({member})")


def validate_qc(q: QC, cfg: "EpochConfig", evidence: EvidenceLookup) -> None:
    """Check coherence clauses C1-C4 in order; raise ``QCError`` on the first
    failure."""
    seen: set[int] = set()
    for v in q.votes:
        if not 0 <= v.member < cfg.authors_n:
            raise QCError("InvalidMember", v.member)
        if v.member in seen:
            raise QCError("DuplicateMember", v.member)
        seen.add(v.member)
    if not cfg.is_quorum(seen):
        raise QCError("NotAQuorum")
    for v in q.votes:
        if v.block_uid != q.cert_block_id:
            raise QCError("WrongBlockId", v.member)
    for v in q.votes:
        if v.round != q.round:
            raise QCError("WrongRound", v.member)
    for v in q.votes:
        ev = evidence.find(v)
        if ev is None or ev.sender != v.member:
            raise QCError("NoSendEvidence", v.member)
