"""Per-peer safety state and the voting decision."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .chains import RecordStore
from .core import QC, Block, ExtendsError, Genesis, Vote, extends
from .quorum import EpochConfig


class Refusal(Exception):
    """Why a peer declined to vote. ``reason`` is one of
    AlreadyVotedThisRound, BelowPreferredRound, UnknownParent,
    InvalidProposal."""

    def __init__(self, reason: str, clause: str = ""):
        self.reason = reason
        self.clause = clause
        super().__init__(f"{reason}({clause})" if clause else reason)


@dataclass(frozen=True)
class VoterSafetyState:
    last_voted_round: int = 0
    preferred_round: int = 0


def _parent_qc(proposal: Block, store: RecordStore) -> Optional[QC]:
    """The stored QC the proposal extends, ``None`` for a genesis child."""
    if proposal.prev_qc is None:
        try:
            extends(Genesis, proposal)
        except ExtendsError as e:
            raise Refusal("InvalidProposal", e.clause) from None
        return None
    cands = store.qcs_by_cert.get(proposal.prev_qc)
    if not cands:
        raise Refusal("UnknownParent")
    first_error = None
    for q in cands:
        try:
            extends(q, proposal)
            return q
        except ExtendsError as e:
            first_error = first_error or e
    raise Refusal("InvalidProposal", first_error.clause)


def should_vote(state: VoterSafetyState, proposal: Block, store: RecordStore,
                cfg: EpochConfig, member: int) -> Vote:
    """Return the vote ``member`` may cast for ``proposal`` or raise
    ``Refusal``.

    Votes require a strictly higher round than the last vote, and a parent
    QC round at least the preferred round.
    """
    if not 0 <= member < cfg.authors_n:
        raise ValueError(f"member {member} out of range")
    parent = _parent_qc(proposal, store)
    if proposal.round <= state.last_voted_round:
        raise Refusal("AlreadyVotedThisRound")
    parent_round = 0 if parent is None else parent.round
    if parent_round < state.preferred_round:
        raise Refusal("BelowPreferredRound")
    return Vote(proposal.round, member, proposal.id)


def grandparent_round(voted: Block, store: RecordStore) -> int:
    """Round of the block two links back from ``voted`` (0 if genesis is
    reached first)."""
    parent_qc = store.parent.get(voted) if voted in store else _parent_qc(voted, store)
    if parent_qc is None or parent_qc is Genesis:
        return 0
    parent_block = store.parent[parent_qc]
    gp_qc = store.parent[parent_block]
    if gp_qc is Genesis:
        return 0
    return gp_qc.round


def update_safety_state(state: VoterSafetyState, voted: Block,
                        store: RecordStore) -> VoterSafetyState:
    try:
        gp = grandparent_round(voted, store)
    except KeyError as e:
        raise RuntimeError(f"lineage of voted block not in store: {e}") from None
    return VoterSafetyState(
        last_voted_round=voted.round,
        preferred_round=max(state.preferred_round, gp),
    )
