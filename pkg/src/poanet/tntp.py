"""Parsers for the standard tab-delimited network / trips benchmark format.

The network file carries a metadata header (zone, node, and link counts plus
the first through node) followed by one row per link; the trips file lists
per-origin blocks of destination:amount pairs. Node and zone numbering is
1-based in the files and preserved as-is; internal link ids are the 0-based
row order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadRow, MalformedBlock, MalformedHeader, UnknownZone
from .network import DemandVector, Network, build_network

__all__ = [
    "TntpLink",
    "TntpNetwork",
    "TripTable",
    "parse_tntp_network",
    "parse_tntp_trips",
    "write_tntp_network",
    "network_from_tntp",
    "zone_od_pairs",
]


@dataclass(frozen=True)
class TntpLink:
    init_node: int
    term_node: int
    capacity: float
    length: float
    free_flow_time: float
    b: float = 0.0
    power: float = 0.0
    speed_limit: float = 0.0
    toll: float = 0.0
    link_type: float = 0.0


@dataclass(frozen=True)
class TntpNetwork:
    num_zones: int
    num_nodes: int
    first_thru_node: int
    num_links: int
    links: tuple


def parse_tntp_network(path) -> TntpNetwork:
    """Read a network file; raises MalformedHeader / BadRow with locations."""
    meta = {}
    links = []
    with open(path, "r", encoding="utf-8") as fh:
        in_body = False
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("~"):
                continue
            if line.startswith("<"):
                if ">" not in line:
                    raise MalformedHeader(f"line {lineno}: unterminated metadata tag")
                tag, _, rest = line[1:].partition(">")
                tag = tag.strip().upper()
                if tag == "END OF METADATA":
                    in_body = True
                    continue
                value = rest.strip()
                meta[tag] = value
                continue
            if not in_body:
                # tolerate files without an explicit end-of-metadata marker
                in_body = True
            fields = line.rstrip(";").split()
            if len(fields) < 5:
                raise BadRow(lineno, f"expected at least 5 columns, got {len(fields)}")
            try:
                numbers = [float(v) for v in fields[:10]]
            except ValueError as exc:
                raise BadRow(lineno, f"non-numeric field: {exc}") from None
            numbers += [0.0] * (10 - len(numbers))
            init_node, term_node = int(numbers[0]), int(numbers[1])
            capacity, length, fft = numbers[2], numbers[3], numbers[4]
            if capacity <= 0:
                raise BadRow(lineno, f"nonpositive capacity {capacity}")
            if fft <= 0:
                raise BadRow(lineno, f"nonpositive free-flow time {fft}")
            links.append(TntpLink(init_node, term_node, capacity, length, fft,
                                  *numbers[5:10]))

    def need(tag):
        if tag not in meta:
            raise MalformedHeader(f"missing <{tag}> header")
        try:
            return int(float(meta[tag]))
        except ValueError:
            raise MalformedHeader(f"non-numeric <{tag}> header: {meta[tag]!r}") from None

    num_zones = need("NUMBER OF ZONES")
    num_nodes = need("NUMBER OF NODES")
    num_links = need("NUMBER OF LINKS")
    first_thru = int(float(meta.get("FIRST THRU NODE", "1")))
    if len(links) != num_links:
        raise MalformedHeader(
            f"header declares {num_links} links but the body has {len(links)}"
        )
    return TntpNetwork(num_zones, num_nodes, first_thru, num_links, tuple(links))


def write_tntp_network(parsed: TntpNetwork, path) -> None:
    """Re-serialize a parsed network with full float precision."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"<NUMBER OF ZONES> {parsed.num_zones}\n")
        fh.write(f"<NUMBER OF NODES> {parsed.num_nodes}\n")
        fh.write(f"<FIRST THRU NODE> {parsed.first_thru_node}\n")
        fh.write(f"<NUMBER OF LINKS> {parsed.num_links}\n")
        fh.write("<END OF METADATA>\n")
        fh.write("~\tInit node\tTerm node\tCapacity\tLength\tFree Flow Time\t"
                 "B\tPower\tSpeed limit\tToll\tType\t;\n")
        for link in parsed.links:
            vals = [link.capacity, link.length, link.free_flow_time, link.b,
                    link.power, link.speed_limit, link.toll, link.link_type]
            body = "\t".join(f"{v:.17g}" for v in vals)
            fh.write(f"\t{link.init_node}\t{link.term_node}\t{body}\t;\n")


def zone_od_pairs(num_zones: int):
    """All ordered zone pairs (origin, destination), origin-major."""
    return [(o, d)
            for o in range(1, num_zones + 1)
            for d in range(1, num_zones + 1)
            if o != d]


def network_from_tntp(parsed: TntpNetwork, od_pairs=None, zone_map=None) -> Network:
    """Build the immutable network; OD pairs default to all ordered zone pairs."""
    links = [(l.init_node, l.term_node, l.free_flow_time, l.capacity)
             for l in parsed.links]
    if od_pairs is None:
        od_pairs = zone_od_pairs(parsed.num_zones)
    return build_network(links, od_pairs, zone_map)


@dataclass(frozen=True, eq=False)
class TripTable:
    """Ordered OD pairs with their demands, as read from a trips file."""

    od_pairs: tuple
    demands: np.ndarray
    total_flow: float | None = None

    def demand_for(self, network: Network) -> DemandVector:
        """Demand aligned to the network's OD ordering; absent pairs are zero."""
        lookup = dict(zip(self.od_pairs, self.demands))
        return DemandVector(np.array([lookup.get(od, 0.0)
                                      for od in network.od_pairs]))

    def as_dict(self) -> dict:
        return dict(zip(self.od_pairs, (float(v) for v in self.demands)))


def parse_tntp_trips(path, num_zones: int | None = None) -> TripTable:
    """Read a trips file of origin blocks; self-pairs are dropped.

    With ``num_zones`` given, origins or destinations outside 1..num_zones
    raise UnknownZone.
    """
    total_flow = None
    pairs = []
    demands = []
    origin = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("~"):
                continue
            if line.startswith("<"):
                tag, _, rest = line[1:].partition(">")
                if tag.strip().upper() == "TOTAL OD FLOW":
                    try:
                        total_flow = float(rest.strip())
                    except ValueError:
                        raise MalformedHeader(
                            f"line {lineno}: non-numeric total flow") from None
                continue
            if line.lower().startswith("origin"):
                parts = line.split()
                if len(parts) < 2:
                    raise MalformedBlock(f"line {lineno}: origin without a number")
                try:
                    origin = int(float(parts[1]))
                except ValueError:
                    raise MalformedBlock(
                        f"line {lineno}: bad origin {parts[1]!r}") from None
                if num_zones is not None and not (1 <= origin <= num_zones):
                    raise UnknownZone(f"line {lineno}: origin {origin} outside 1..{num_zones}")
                continue
            if origin is None:
                raise MalformedBlock(f"line {lineno}: entry before any origin block")
            for chunk in line.split(";"):
                chunk = chunk.strip()
                if not chunk:
                    continue
                dest_str, sep, amount_str = chunk.partition(":")
                if not sep:
                    raise MalformedBlock(f"line {lineno}: expected 'dest : amount'")
                try:
                    dest = int(float(dest_str.strip()))
                    amount = float(amount_str.strip())
                except ValueError:
                    raise MalformedBlock(
                        f"line {lineno}: bad entry {chunk!r}") from None
                if num_zones is not None and not (1 <= dest <= num_zones):
                    raise UnknownZone(
                        f"line {lineno}: destination {dest} outside 1..{num_zones}")
                if amount < 0:
                    raise MalformedBlock(f"line {lineno}: negative demand {amount}")
                if dest == origin:
                    continue
                pairs.append((origin, dest))
                demands.append(amount)
    return TripTable(tuple(pairs), np.asarray(demands, dtype=float), total_flow)
