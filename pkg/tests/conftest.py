import struct

import numpy as np
import pytest

from advexplain import synth
from advexplain.dataset import FeatureSchema, LabeledDataset
from advexplain.gbt import Tree, TrainConfig, TreeEnsemble, train


def ipv4_checksum(header: bytes) -> int:
    s = sum(struct.unpack("!10H", header))
    while s >> 16:
        s = (s & 0xFFFF) + (s >> 16)
    return ~s & 0xFFFF


def eth_frame(ethertype: int, payload: bytes, pad_to: int = 60) -> bytes:
    frame = bytes.fromhex("0a0b0c0d0e0f") + bytes.fromhex("010203040506") + struct.pack("!H", ethertype) + payload
    return frame + b"\x00" * max(0, pad_to - len(frame))


def ipv4_packet(proto: int, segment: bytes, ttl: int = 64, flags: int = 0b010, ihl: int = 5,
                total_len: int | None = None) -> bytes:
    options = b"\x00" * (max(ihl, 5) * 4 - 20)
    tl = total_len if total_len is not None else 20 + len(options) + len(segment)
    header = struct.pack(
        "!BBHHHBBH4s4s",
        (4 << 4) | ihl, 0, tl, 0x1234, flags << 13, ttl, proto, 0,
        bytes([192, 168, 1, 10]), bytes([10, 0, 0, 1]),
    )
    header = header[:10] + struct.pack("!H", ipv4_checksum(header)) + header[12:]
    return header + options + segment


def tcp_syn(sport: int, dport: int) -> bytes:
    return struct.pack("!HHIIBBHHH", sport, dport, 1000, 0, 5 << 4, 0x02, 64240, 0, 0)


def udp_datagram(sport: int, dport: int, payload: bytes = b"\x12\x34" * 6) -> bytes:
    return struct.pack("!HHHH", sport, dport, 8 + len(payload), 0) + payload


@pytest.fixture
def tcp_syn_frame():
    """60-byte frame: TCP SYN 40000 -> 80, TTL 64, DF set, IP total length 40."""
    return eth_frame(0x0800, ipv4_packet(6, tcp_syn(40000, 80), ttl=64, flags=0b010))


@pytest.fixture
def udp_dns_frame():
    """UDP 1000 -> 53 with a 12-byte payload, TTL 128, no flags."""
    return eth_frame(0x0800, ipv4_packet(17, udp_datagram(1000, 53), ttl=128, flags=0))


@pytest.fixture
def arp_frame():
    arp = struct.pack("!HHBBH6s4s6s4s", 1, 0x0800, 6, 4, 1, b"\x01" * 6, b"\xc0\xa8\x01\x0a", b"\x00" * 6, b"\xc0\xa8\x01\x01")
    return eth_frame(0x0806, arp)


def random_ensemble(rng, n_features=7, n_trees=20, max_depth=4, p_leaf=0.25) -> TreeEnsemble:
    """Random trees with integer covers so cover(parent) == cover(left) + cover(right) exactly."""
    trees = []
    for _ in range(n_trees):
        feature, threshold, left, right, value, cover = [], [], [], [], [], []

        def grow(depth, c):
            k = len(feature)
            for arr, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0), (cover, float(c))):
                arr.append(v)
            if depth == max_depth or c < 2 or (depth > 0 and rng.random() < p_leaf):
                value[k] = float(rng.normal())
                return k
            feature[k] = int(rng.integers(n_features))
            threshold[k] = float(rng.integers(1, 10)) + 0.5
            cl = int(rng.integers(1, c))
            left[k] = grow(depth + 1, cl)
            right[k] = grow(depth + 1, c - cl)
            return k

        grow(0, int(rng.integers(20, 200)))
        trees.append(Tree(feature, threshold, left, right, value, cover))
    return TreeEnsemble(trees, float(rng.normal()), 0.3, n_features)


@pytest.fixture(scope="session")
def small_synth():
    return synth.generate(synth.SynthConfig(n_samples=2000, seed=3))


@pytest.fixture(scope="session")
def small_model(small_synth):
    return train(small_synth, TrainConfig(n_rounds=15, max_depth=4))


@pytest.fixture
def two_feature_tree_model():
    """Root x0 < 5 (cover 10); left: x1 < 3 (cover 6) -> leaves 1 (cover 2), 3 (cover 4); right leaf -2 (cover 4)."""
    tree = Tree(
        feature=[0, 1, -1, -1, -1],
        threshold=[5.0, 3.0, 0.0, 0.0, 0.0],
        left=[1, 3, -1, -1, -1],
        right=[2, 4, -1, -1, -1],
        value=[0.0, 0.0, -2.0, 1.0, 3.0],
        cover=[10.0, 6.0, 4.0, 2.0, 4.0],
    )
    return TreeEnsemble([tree], 0.0, 1.0, 2, ("a", "b"))


def make_dataset(x, y, names=None) -> LabeledDataset:
    x = np.asarray(x, dtype=float)
    schema = FeatureSchema(tuple(names) if names else tuple(f"f{j}" for j in range(x.shape[1])))
    return LabeledDataset(schema, x, y)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool | None, detail: str) -> None:
    status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
    line = f"criterion {number} {status}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
