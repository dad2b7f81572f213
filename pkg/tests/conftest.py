from dataclasses import dataclass

import pytest

from bft_safety.chains import RecordStore
from bft_safety.core import QC, Block, Genesis, SentVotes, Vote, make_block
from bft_safety.quorum import EpochConfig


def make_qc(b: Block, members=(0, 1, 2)) -> QC:
    return QC(b.round, b.id, tuple(Vote(b.round, m, b.id) for m in members))


@dataclass
class Fig1:
    cfg: EpochConfig
    store: RecordStore
    evidence: SentVotes
    b: list
    q: list
    order: list


# block index -> (round, index of the QC it extends or None)
FIG1_SHAPE = [(1, None), (2, 0), (5, 0), (3, 1), (6, 1), (4, 3), (7, 4)]


def build_fig1() -> Fig1:
    cfg = EpochConfig.count(4, 1)
    blocks, qcs, order = [], [], [Genesis]
    for i, (rnd, parent) in enumerate(FIG1_SHAPE):
        prev = None if parent is None else qcs[parent].cert_block_id
        b = make_block(rnd, prev, b"b%d" % i)
        blocks.append(b)
        qcs.append(make_qc(b))
    for b, q in zip(blocks, qcs):
        order += [b, q]
    evidence = SentVotes.from_votes(v for q in qcs for v in q.votes)
    store = RecordStore(cfg, evidence)
    for r in order[1:]:
        store.insert(r)
    return Fig1(cfg, store, evidence, blocks, qcs, order)


@pytest.fixture
def fig1() -> Fig1:
    return build_fig1()
