import pytest

from waterweights.consensus import (
    ConsensusSnapshot,
    LoadCase,
    PoolTotals,
    classify_load_case,
    parse_native,
    parse_policy,
    parse_v3_subset,
    policy_accepts,
    serialize_native,
    snapshot_from_json,
    snapshot_to_json,
)
from waterweights.errors import (
    DegenerateNetworkError,
    DuplicateRelayError,
    ParseError,
)

from conftest import make_relay, make_snapshot

NATIVE_TWO_RELAY = """\
snapshot 1432548000
relay AAAA alice 100 flags=Guard,Fast policy=reject:* subnet=1.2
relay BBBB bob 300 flags=Exit,Fast policy=accept:80,443;reject:* subnet=3.4 country=de as=3320
"""


class TestParseNative:
    def test_two_relay_totals(self):
        snap = parse_native(NATIVE_TWO_RELAY)
        assert snap.valid_after == 1432548000
        assert [r.fingerprint for r in snap.relays] == ["AAAA", "BBBB"]
        assert snap.totals == PoolTotals(G=100, M=0, E=300, D=0)

    def test_empty_relay_section(self):
        snap = parse_native("snapshot 12345\n")
        assert snap.relays == ()
        assert snap.totals == PoolTotals()
        assert snap.totals.T == 0

    def test_duplicate_fingerprint_names_both_lines(self):
        doc = (
            "snapshot 1\n"
            "relay XX a 10 flags=Guard\n"
            "relay XX b 20 flags=Exit\n"
        )
        with pytest.raises(DuplicateRelayError) as err:
            parse_native(doc)
        assert "line 3" in str(err.value)
        assert "line 2" in str(err.value)

    def test_malformed_line_reports_number(self):
        doc = "snapshot 1\nrelay onlytwo fields\n"
        with pytest.raises(ParseError, match="line 2"):
            parse_native(doc)

    def test_bad_weight_reports_number(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_native("snapshot 1\nrelay AA nick notanumber\n")

    def test_optional_fields_roundtrip(self):
        snap = parse_native(NATIVE_TWO_RELAY)
        bob = snap.relay("BBBB")
        assert bob.country == "de"
        assert bob.as_number == 3320
        assert bob.accepts_port(443)
        assert not bob.accepts_port(25)

    def test_missing_header(self):
        with pytest.raises(ParseError, match="snapshot header"):
            parse_native("relay AA nick 5\n")


class TestRoundTrip:
    def test_serialize_then_parse_is_identity(self):
        snap = parse_native(NATIVE_TWO_RELAY)
        again = parse_native(serialize_native(snap))
        assert again == snap

    def test_roundtrip_preserves_unknown_flags(self):
        doc = "snapshot 7\nrelay AA a 5 flags=Guard,HSDir,V2Dir\n"
        snap = parse_native(doc)
        assert "HSDir" in snap.relays[0].flags
        assert parse_native(serialize_native(snap)) == snap
        # unknown flags never affect pool accounting
        assert snap.totals == PoolTotals(G=5)

    def test_json_roundtrip(self):
        snap = parse_native(NATIVE_TWO_RELAY)
        assert snapshot_from_json(snapshot_to_json(snap)) == snap

    def test_json_rejects_tampered_totals(self):
        text = snapshot_to_json(parse_native(NATIVE_TWO_RELAY))
        with pytest.raises(ParseError, match="totals"):
            snapshot_from_json(text.replace('"G": 100', '"G": 999'))


class TestPoolPartition:
    @pytest.mark.parametrize("role,pool", [("g", "G"), ("m", "M"), ("e", "E"), ("d", "D")])
    def test_each_relay_lands_in_one_pool(self, role, pool):
        relay = make_relay("FP", 42, role)
        assert relay.pool() == pool
        totals = PoolTotals.from_relays([relay])
        assert getattr(totals, pool) == 42
        assert totals.T == 42

    def test_partition_is_exhaustive(self, rng):
        roles = rng.choice(["g", "m", "e", "d"], size=50)
        weights = rng.integers(0, 1000, size=50)
        relays = [make_relay(f"R{i}", int(w), r) for i, (w, r) in enumerate(zip(weights, roles))]
        totals = PoolTotals.from_relays(relays)
        assert totals.T == sum(int(w) for w in weights)


class TestParseV3:
    MINIMAL = """\
valid-after 2015-05-25 10:00:00
r nick1 AAAA dig 2015-05-25 08:00:00 1.2.3.4 9001 0
s Fast Guard Running Valid
w Bandwidth=20
p reject 25
"""

    def test_minimal_router(self):
        snap = parse_v3_subset(self.MINIMAL)
        assert len(snap.relays) == 1
        relay = snap.relays[0]
        assert relay.consensus_weight == 20
        assert relay.subnet16 == "1.2"
        assert relay.flags == frozenset({"Fast", "Guard", "Running", "Valid"})
        assert relay.accepts_port(443)
        assert not relay.accepts_port(25)
        # 2015-05-25 10:00:00 UTC
        assert snap.valid_after == 1432548000

    def test_guard_exit_counts_in_dual_pool(self):
        doc = (
            "valid-after 2015-01-01 00:00:00\n"
            "r nick AAAA dig 2015-01-01 00:00:00 1.2.3.4 9001 0\n"
            "s Exit Guard Running\n"
            "w Bandwidth=77\n"
        )
        snap = parse_v3_subset(doc)
        assert snap.totals == PoolTotals(D=77)

    def test_missing_w_defaults_zero_with_warning(self):
        doc = (
            "valid-after 2015-01-01 00:00:00\n"
            "r nick AAAA dig 2015-01-01 00:00:00 1.2.3.4 9001 0\n"
            "s Guard\n"
        )
        warnings = []
        snap = parse_v3_subset(doc, warnings=warnings)
        assert snap.relays[0].consensus_weight == 0
        assert len(warnings) == 1
        assert "AAAA" in warnings[0]

    def test_unknown_lines_ignored(self):
        doc = self.MINIMAL + "directory-footer\nbandwidth-weights Wgg=5000\n"
        snap = parse_v3_subset(doc)
        assert len(snap.relays) == 1

    def test_missing_valid_after(self):
        with pytest.raises(ParseError, match="valid-after"):
            parse_v3_subset("r nick AAAA dig 2015-01-01 00:00:00 1.2.3.4 9001 0\n")

    def test_r_line_field_count(self):
        doc = "valid-after 2015-01-01 00:00:00\nr nick AAAA 1.2.3.4 9001 0\n"
        with pytest.raises(ParseError, match="line 2"):
            parse_v3_subset(doc)

    def test_duplicate_router(self):
        doc = (
            "valid-after 2015-01-01 00:00:00\n"
            "r nick AAAA dig 2015-01-01 00:00:00 1.2.3.4 9001 0\n"
            "r nick2 AAAA dig 2015-01-01 00:00:00 5.6.7.8 9001 0\n"
        )
        with pytest.raises(DuplicateRelayError):
            parse_v3_subset(doc)


class TestGoldenFiles:
    """Frozen fixtures: any parser or rendering change shows up as a diff."""

    def test_v3_document_matches_golden_json(self):
        from pathlib import Path

        data = Path(__file__).parent / "data"
        warnings = []
        snap = parse_v3_subset((data / "mini_status_v3.txt").read_text(), warnings=warnings)
        assert snapshot_to_json(snap) == (data / "mini_status_v3.expected.json").read_text()
        assert warnings == [
            "router DDDD33 (line 14) has no w line; consensus weight defaults to 0"
        ]
        assert snap.totals == PoolTotals(G=4130, M=0, E=2200, D=910)


class TestClassifyLoadCase:
    def test_case_3a(self):
        # E+D = 150 < 950/3 and G > M
        case, detail = classify_load_case(PoolTotals(G=500, M=300, E=100, D=50))
        assert case is LoadCase.CASE_3A
        assert detail == ""

    def test_case_3b(self):
        # E = 100 < 350 = T/3 <= E+D = 350
        case, _ = classify_load_case(PoolTotals(G=400, M=300, E=100, D=250))
        assert case is LoadCase.CASE_3B

    def test_balanced_symmetric(self):
        case, _ = classify_load_case(PoolTotals(G=100, M=100, E=100, D=0))
        assert case is LoadCase.BALANCED

    def test_unsupported_carries_reason(self):
        # exit scarce but G <= M: the unimplemented 3a subcase
        case, detail = classify_load_case(PoolTotals(G=300, M=500, E=100, D=50))
        assert case is LoadCase.UNSUPPORTED
        assert "guard pool" in detail

    def test_guard_scarce_unsupported(self):
        case, detail = classify_load_case(PoolTotals(G=10, M=500, E=400, D=0))
        assert case is LoadCase.UNSUPPORTED
        assert "guard capacity" in detail

    def test_degenerate_network(self):
        with pytest.raises(DegenerateNetworkError):
            classify_load_case(PoolTotals())

    def test_total_and_deterministic(self, rng):
        for _ in range(300):
            g, m, e, d = (int(x) for x in rng.integers(0, 10_000, size=4))
            if g + m + e + d == 0:
                continue
            totals = PoolTotals(G=g, M=m, E=e, D=d)
            first = classify_load_case(totals)
            assert first == classify_load_case(totals)
            assert first[0] in LoadCase


class TestExitPolicy:
    def test_first_match_wins(self):
        policy = parse_policy("reject:80;accept:1-100;reject:*")
        assert not policy_accepts(policy, 80)
        assert policy_accepts(policy, 99)
        assert not policy_accepts(policy, 443)

    def test_terminal_rule_appended(self):
        policy = parse_policy("accept:443")
        assert policy_accepts(policy, 443)
        assert not policy_accepts(policy, 80)

    def test_snapshot_requires_unique_fingerprints(self):
        with pytest.raises(DuplicateRelayError):
            ConsensusSnapshot.from_relays(
                0, [make_relay("A", 1, "g"), make_relay("A", 2, "e")]
            )

    def test_snapshot_order_preserved(self):
        snap = make_snapshot([("C", 1, "g"), ("A", 2, "e"), ("B", 3, "m")])
        assert [r.fingerprint for r in snap.relays] == ["C", "A", "B"]
