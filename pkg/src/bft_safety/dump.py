"""Line-oriented text format for records and commit certificates.

One record per line, space-separated ``key=value`` fields in fixed order::

    kind=I id=- round=0 parent=-
    kind=B id=<hex> round=<r> parent=<prev-qc hex|-> payload=<hex|->
    kind=Q id=<cert hex> round=<r> parent=<cert hex> votes=<m>:<r>:<block hex>:<sender>:<step>,...

QCs carry no id of their own, so their ``id`` and ``parent`` both name the
certified block. Vote ``sender`` and ``step`` identify the sent message that
carried the vote (``-`` when unknown).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .core import QC, Block, EvidenceLookup, Genesis, Record, SentVotes, Vote, VoteEvidence


class FormatError(ValueError):
    pass


def _hex_or_dash(b: Optional[bytes]) -> str:
    return "-" if b is None else b.hex()


def _format_vote(v: Vote, evidence: Optional[EvidenceLookup]) -> str:
    ev = evidence.find(v) if evidence is not None else None
    sender = "-" if ev is None else str(ev.sender)
    step = "-" if ev is None else str(ev.step)
    return f"{v.member}:{v.round}:{v.block_uid.hex()}:{sender}:{step}"


def format_record(r: Record, evidence: Optional[EvidenceLookup] = None) -> str:
    if r is Genesis:
        return "kind=I id=- round=0 parent=-"
    if isinstance(r, Block):
        payload = r.payload.hex() if r.payload else "-"
        return f"kind=B id={r.id.hex()} round={r.round} parent={_hex_or_dash(r.prev_qc)} payload={payload}"
    if isinstance(r, QC):
        votes = ",".join(_format_vote(v, evidence) for v in r.votes) or "-"
        cert = r.cert_block_id.hex()
        return f"kind=Q id={cert} round={r.round} parent={cert} votes={votes}"
    raise TypeError(f"not a record: {r!r}")


def _fields(line: str) -> dict[str, str]:
    out = {}
    for tok in line.split():
        key, sep, val = tok.partition("=")
        if not sep:
            raise FormatError(f"expected key=value, got {tok!r}")
        out[key] = val
    return out


def _unhex(s: str, what: str) -> bytes:
    try:
        return bytes.fromhex(s)
    except ValueError:
        raise FormatError(f"bad hex in {what}: {s!r}") from None


def _int(s: str, what: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise FormatError(f"bad integer in {what}: {s!r}") from None


def parse_record(line: str) -> tuple[Record, list[VoteEvidence]]:
    """Parse one record line. Returns the record and the vote evidence
    entries named on it."""
    f = _fields(line)
    kind = f.get("kind")
    for key in ("id", "round", "parent"):
        if key not in f:
            raise FormatError(f"missing {key}= in record line")
    if kind == "I":
        return Genesis, []
    rnd = _int(f["round"], "round")
    if kind == "B":
        prev = None if f["parent"] == "-" else _unhex(f["parent"], "parent")
        payload = b"" if f.get("payload", "-") == "-" else _unhex(f["payload"], "payload")
        return Block(rnd, _unhex(f["id"], "id"), prev, payload), []
    if kind == "Q":
        cert = _unhex(f["id"], "id")
        if f["parent"] != f["id"]:
            raise FormatError("QC parent must name the certified block")
        votes, evidence = [], []
        raw = f.get("votes", "-")
        for item in ([] if raw == "-" else raw.split(",")):
            parts = item.split(":")
            if len(parts) != 5:
                raise FormatError(f"bad vote entry {item!r}")
            v = Vote(_int(parts[1], "vote round"), _int(parts[0], "vote member"),
                     _unhex(parts[2], "vote block"))
            votes.append(v)
            if parts[3] != "-":
                step = 0 if parts[4] == "-" else _int(parts[4], "vote step")
                evidence.append(VoteEvidence(v, _int(parts[3], "vote sender"), step))
        return QC(rnd, cert, tuple(votes)), evidence
    raise FormatError(f"unknown record kind {kind!r}")


@dataclass(frozen=True)
class CertificateFile:
    records: tuple
    claim: bytes
    evidence: SentVotes


def format_certificate(records: Iterable[Record], claim: bytes,
                       evidence: Optional[EvidenceLookup] = None) -> str:
    lines = [format_record(r, evidence) for r in records]
    lines.append(f"claim={claim.hex()}")
    return "\n".join(lines) + "\n"


def parse_certificate(text: str) -> CertificateFile:
    records, evidence, claim = [], SentVotes(), None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("claim="):
            if claim is not None:
                raise FormatError("duplicate claim= line")
            claim = _unhex(line[6:], "claim")
            continue
        rec, evs = parse_record(line)
        records.append(rec)
        for ev in evs:
            evidence.add(ev)
    if claim is None:
        raise FormatError("certificate has no claim= line")
    return CertificateFile(tuple(records), claim, evidence)
