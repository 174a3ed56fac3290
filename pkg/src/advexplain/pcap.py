"""Classic pcap reader and per-packet feature extraction.

Only the classic (non-pcapng) microsecond format with Ethernet II link type is
handled. Each IPv4 packet becomes one row of the default seven-feature schema;
protocol fields a packet does not carry (UDP ports on a TCP packet and so on)
are filled with ``FILL_VALUE``.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .dataset import FeatureSchema, LabeledDataset
from .errors import TruncatedCaptureError, UnsupportedFormatError

MAGIC_USEC = 0xA1B2C3D4
LINKTYPE_ETHERNET = 1
GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

ETH_HEADER_LEN = 14
ETHERTYPE_IPV4 = 0x0800
IPPROTO_TCP = 6
IPPROTO_UDP = 17

# Absent protocol fields. 0 is never a valid ephemeral source port, so TCP and
# UDP rows stay distinguishable to the model.
FILL_VALUE = 0

SKIP_NON_IPV4 = "non_ipv4"
SKIP_MALFORMED = "malformed"


@dataclass(frozen=True)
class PacketRecord:
    ts_sec: int
    ts_usec: int
    captured_len: int
    original_len: int
    payload: bytes

    @property
    def timestamp(self) -> float:
        return self.ts_sec + self.ts_usec * 1e-6


@dataclass(frozen=True)
class ExtractedFeatures:
    frame_len: int
    udp_dstport: int
    ip_flags: int
    tcp_dstport: int
    ip_ttl: int
    udp_srcport: int
    ip_len: int

    def as_row(self) -> list[int]:
        # Order matches dataset.DEFAULT_FEATURES.
        return [
            self.frame_len,
            self.udp_dstport,
            self.ip_flags,
            self.tcp_dstport,
            self.ip_ttl,
            self.udp_srcport,
            self.ip_len,
        ]


@dataclass(frozen=True)
class Skip:
    reason: str
    detail: str = ""


def read_pcap(path) -> Iterator[PacketRecord]:
    """Yield packet records in file order.

    Raises UnsupportedFormatError for an unknown magic number or link type and
    TruncatedCaptureError (1-based ``record_index``) for a cut-off record.
    """
    with Path(path).open("rb") as fh:
        header = fh.read(GLOBAL_HEADER_LEN)
        if len(header) < GLOBAL_HEADER_LEN:
            raise UnsupportedFormatError(f"{path}: file shorter than the 24-byte pcap global header")
        if struct.unpack("<I", header[:4])[0] == MAGIC_USEC:
            endian = "<"
        elif struct.unpack(">I", header[:4])[0] == MAGIC_USEC:
            endian = ">"
        else:
            raise UnsupportedFormatError(f"{path}: unknown pcap magic 0x{header[:4].hex()}")
        linktype = struct.unpack(endian + "I", header[20:24])[0]
        if linktype != LINKTYPE_ETHERNET:
            raise UnsupportedFormatError(f"{path}: link type {linktype} is not Ethernet")

        rec_fmt = endian + "IIII"
        index = 0
        while True:
            rec_header = fh.read(RECORD_HEADER_LEN)
            if not rec_header:
                return
            index += 1
            if len(rec_header) < RECORD_HEADER_LEN:
                raise TruncatedCaptureError(f"{path}: record {index} header is truncated", index)
            ts_sec, ts_usec, incl_len, orig_len = struct.unpack(rec_fmt, rec_header)
            data = fh.read(incl_len)
            if len(data) < incl_len:
                raise TruncatedCaptureError(
                    f"{path}: record {index} declares {incl_len} bytes but only {len(data)} remain", index
                )
            yield PacketRecord(ts_sec, ts_usec, incl_len, orig_len, data)


def write_pcap(path, packets: Iterable[bytes | PacketRecord], big_endian: bool = False, snaplen: int = 65535) -> None:
    """Write raw Ethernet frames (or PacketRecords) as a classic pcap file."""
    e = ">" if big_endian else "<"
    with Path(path).open("wb") as fh:
        fh.write(struct.pack(e + "IHHiIII", MAGIC_USEC, 2, 4, 0, 0, snaplen, LINKTYPE_ETHERNET))
        for i, pkt in enumerate(packets):
            if isinstance(pkt, PacketRecord):
                fh.write(struct.pack(e + "IIII", pkt.ts_sec, pkt.ts_usec, len(pkt.payload), pkt.original_len))
                fh.write(pkt.payload)
            else:
                fh.write(struct.pack(e + "IIII", i, 0, len(pkt), len(pkt)))
                fh.write(pkt)


def extract_features(record: PacketRecord) -> ExtractedFeatures | Skip:
    data = record.payload
    if len(data) < ETH_HEADER_LEN:
        return Skip(SKIP_MALFORMED, "short ethernet header")
    ethertype = int.from_bytes(data[12:14], "big")
    if ethertype != ETHERTYPE_IPV4:
        return Skip(SKIP_NON_IPV4, f"ethertype 0x{ethertype:04x}")

    ip = data[ETH_HEADER_LEN:]
    if len(ip) < 20:
        return Skip(SKIP_MALFORMED, "short ipv4 header")
    version, ihl = ip[0] >> 4, ip[0] & 0x0F
    if version != 4:
        return Skip(SKIP_MALFORMED, f"ip version {version} under ipv4 ethertype")
    header_len = ihl * 4
    if ihl < 5 or header_len > len(ip):
        return Skip(SKIP_MALFORMED, f"bad ihl {ihl}")
    total_len = int.from_bytes(ip[2:4], "big")
    if total_len < header_len or total_len > len(ip):
        return Skip(SKIP_MALFORMED, f"total length {total_len} outside captured {len(ip)} bytes")
    flags = ip[6] >> 5
    ttl = ip[8]
    proto = ip[9]

    tcp_dst = udp_src = udp_dst = FILL_VALUE
    segment = ip[header_len:total_len]
    if proto == IPPROTO_TCP:
        if len(segment) < 4:
            return Skip(SKIP_MALFORMED, "short tcp header")
        tcp_dst = int.from_bytes(segment[2:4], "big")
    elif proto == IPPROTO_UDP:
        if len(segment) < 4:
            return Skip(SKIP_MALFORMED, "short udp header")
        udp_src = int.from_bytes(segment[0:2], "big")
        udp_dst = int.from_bytes(segment[2:4], "big")

    return ExtractedFeatures(
        frame_len=record.captured_len,
        udp_dstport=udp_dst,
        ip_flags=flags,
        tcp_dstport=tcp_dst,
        ip_ttl=ttl,
        udp_srcport=udp_src,
        ip_len=total_len,
    )


@dataclass
class ExtractionStats:
    packets: int = 0
    rows: int = 0
    skips: Counter = None

    def __post_init__(self):
        if self.skips is None:
            self.skips = Counter()

    @property
    def skipped(self) -> int:
        return sum(self.skips.values())


def pcap_to_dataset(paths, label: int, schema: FeatureSchema | None = None) -> tuple[LabeledDataset, ExtractionStats]:
    """Extract feature rows from every capture in ``paths``, all carrying ``label``."""
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    schema = schema or FeatureSchema()
    if schema.count != 7:
        raise ValueError("pcap extraction produces the 7 default features")
    stats = ExtractionStats()
    rows = []
    for path in paths:
        for record in read_pcap(path):
            stats.packets += 1
            out = extract_features(record)
            if isinstance(out, Skip):
                stats.skips[out.reason] += 1
            else:
                rows.append(out.as_row())
    stats.rows = len(rows)
    x = np.array(rows, dtype=np.float64).reshape(len(rows), 7)
    y = np.full(len(rows), label, dtype=np.int8)
    return LabeledDataset(schema, x, y), stats
