import pytest
from hypothesis import given, strategies as st

from bft_safety.core import QC, Block, Genesis, Vote
from bft_safety.dump import FormatError, format_certificate, format_record, parse_certificate, parse_record


def test_genesis_line():
    assert format_record(Genesis) == "kind=I id=- round=0 parent=-"
    assert parse_record("kind=I id=- round=0 parent=-") == (Genesis, [])


def test_fixture_round_trip(fig1):
    for r in fig1.order:
        line = format_record(r, fig1.evidence)
        back, evs = parse_record(line)
        assert back == r
        if isinstance(r, QC):
            assert {e.vote for e in evs} == set(r.votes)


uid = st.binary(min_size=32, max_size=32)


@given(st.integers(1, 10**9), uid, st.one_of(st.none(), uid), st.binary(max_size=16))
def test_block_round_trip(rnd, i, prev, payload):
    b = Block(rnd, i, prev, payload)
    assert parse_record(format_record(b))[0] == b


@given(st.integers(1, 10**6), uid, st.lists(st.integers(0, 50), max_size=6))
def test_qc_round_trip_without_evidence(rnd, cert, members):
    q = QC(rnd, cert, tuple(Vote(rnd, m, cert) for m in members))
    back, evs = parse_record(format_record(q))
    assert back == q and evs == []


@pytest.mark.parametrize("line", [
    "kind=B id=zz round=1 parent=-",
    "kind=B round=1 parent=-",
    "kind=X id=- round=0 parent=-",
    "kind=Q id=00 round=1 parent=00 votes=1:2",
    "garbage",
])
def test_malformed_lines(line):
    with pytest.raises(FormatError):
        parse_record(line)


def test_certificate_round_trip(fig1):
    recs = fig1.order[1:7]
    text = format_certificate(recs, fig1.b[0].id, fig1.evidence)
    assert text.endswith("\n")
    cert = parse_certificate("# comment\n" + text)
    assert cert.records == tuple(recs) and cert.claim == fig1.b[0].id
    assert len(cert.evidence) == 9
    with pytest.raises(FormatError):
        parse_certificate(format_record(fig1.b[0]) + "\n")
