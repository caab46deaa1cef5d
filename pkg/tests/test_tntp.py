import numpy as np
import pytest

from poanet.errors import BadRow, MalformedBlock, MalformedHeader, UnknownZone
from poanet.tntp import (network_from_tntp, parse_tntp_network, parse_tntp_trips,
                         write_tntp_network, zone_od_pairs)

MINIMAL_NET = """<NUMBER OF ZONES> 2
<NUMBER OF NODES> 2
<FIRST THRU NODE> 1
<NUMBER OF LINKS> 2
<END OF METADATA>
~ Init Term Capacity Length FFT B Power Speed Toll Type ;
1 2 1500.5 2.0 0.034 0.15 4 40 0 1 ;
2 1 1200.0 2.0 0.04 0.15 4 40 0 1 ;
"""

MINIMAL_TRIPS = """<NUMBER OF ZONES> 2
<TOTAL OD FLOW> 150.0
<END OF METADATA>

Origin 1
 2 : 100.0;
Origin 2
 1 : 50.0;
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestNetworkParsing:
    def test_minimal(self, tmp_path):
        parsed = parse_tntp_network(write(tmp_path, "net.tntp", MINIMAL_NET))
        assert parsed.num_zones == 2
        assert parsed.num_nodes == 2
        assert parsed.num_links == 2
        assert parsed.links[0].free_flow_time == pytest.approx(0.034)
        assert parsed.links[0].capacity == pytest.approx(1500.5)
        assert parsed.links[0].power == 4

    def test_nonpositive_capacity_is_bad_row(self, tmp_path):
        text = MINIMAL_NET.replace("1500.5", "0.0")
        with pytest.raises(BadRow) as exc:
            parse_tntp_network(write(tmp_path, "net.tntp", text))
        assert exc.value.line_number == 7

    def test_short_row_rejected(self, tmp_path):
        text = MINIMAL_NET.replace("1 2 1500.5 2.0 0.034 0.15 4 40 0 1 ;", "1 2 5 ;")
        with pytest.raises(BadRow):
            parse_tntp_network(write(tmp_path, "net.tntp", text))

    def test_missing_header_key(self, tmp_path):
        text = MINIMAL_NET.replace("<NUMBER OF NODES> 2\n", "")
        with pytest.raises(MalformedHeader):
            parse_tntp_network(write(tmp_path, "net.tntp", text))

    def test_count_mismatch(self, tmp_path):
        text = MINIMAL_NET.replace("<NUMBER OF LINKS> 2", "<NUMBER OF LINKS> 3")
        with pytest.raises(MalformedHeader):
            parse_tntp_network(write(tmp_path, "net.tntp", text))

    def test_round_trip_preserves_everything(self, tmp_path):
        parsed = parse_tntp_network(write(tmp_path, "net.tntp", MINIMAL_NET))
        out = tmp_path / "rewritten.tntp"
        write_tntp_network(parsed, out)
        again = parse_tntp_network(out)
        assert again == parsed

    def test_network_from_tntp_defaults_to_zone_pairs(self, tmp_path):
        parsed = parse_tntp_network(write(tmp_path, "net.tntp", MINIMAL_NET))
        network = network_from_tntp(parsed)
        assert network.od_pairs == ((1, 2), (2, 1))
        assert network.free_flow_times[0] == pytest.approx(0.034)

    def test_zone_od_pairs_count(self):
        assert len(zone_od_pairs(38)) == 38 * 37


class TestTripsParsing:
    def test_minimal(self, tmp_path):
        table = parse_tntp_trips(write(tmp_path, "trips.tntp", MINIMAL_TRIPS))
        assert table.od_pairs == ((1, 2), (2, 1))
        np.testing.assert_allclose(table.demands, [100.0, 50.0])
        assert table.total_flow == pytest.approx(150.0)

    def test_empty_trips(self, tmp_path):
        text = "<NUMBER OF ZONES> 2\n<END OF METADATA>\n"
        table = parse_tntp_trips(write(tmp_path, "trips.tntp", text))
        assert table.od_pairs == ()

    def test_self_pairs_dropped(self, tmp_path):
        text = MINIMAL_TRIPS.replace("2 : 100.0;", "1 : 7.0; 2 : 100.0;")
        table = parse_tntp_trips(write(tmp_path, "trips.tntp", text))
        assert (1, 1) not in table.od_pairs
        assert dict(zip(table.od_pairs, table.demands))[(1, 2)] == 100.0

    def test_unknown_zone(self, tmp_path):
        text = MINIMAL_TRIPS.replace("2 : 100.0;", "5 : 100.0;")
        with pytest.raises(UnknownZone):
            parse_tntp_trips(write(tmp_path, "trips.tntp", text), num_zones=2)

    def test_entry_before_origin(self, tmp_path):
        text = "<END OF METADATA>\n 2 : 5.0;\n"
        with pytest.raises(MalformedBlock):
            parse_tntp_trips(write(tmp_path, "trips.tntp", text))

    def test_negative_demand_rejected(self, tmp_path):
        text = MINIMAL_TRIPS.replace("100.0", "-3.0")
        with pytest.raises(MalformedBlock):
            parse_tntp_trips(write(tmp_path, "trips.tntp", text))

    def test_demand_binding(self, tmp_path):
        parsed = parse_tntp_network(write(tmp_path, "net.tntp", MINIMAL_NET))
        network = network_from_tntp(parsed)
        table = parse_tntp_trips(write(tmp_path, "trips.tntp", MINIMAL_TRIPS))
        demand = table.demand_for(network)
        np.testing.assert_allclose(demand.values, [100.0, 50.0])
