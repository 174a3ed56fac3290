"""Synthetic packet-feature datasets with one planted dominant feature.

Malicious rows draw the dominant feature from the low end of its field
domain (small scanning / keep-alive frames), benign rows from the high end;
a ``1 - signal_strength`` share of both classes comes from a shared low band
so the classes are not perfectly separable. The remaining features use
per-class triangular distributions that overlap heavily, so they carry only
weak signal. Every value is an integer inside the field's domain.

Features are drawn independently; in particular ``ip.len`` is not tied to
``frame.len``, which real traffic would do.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import DEFAULT_FEATURES, FeatureSchema, LabeledDataset

# Inclusive value domains of the seven packet fields.
DOMAINS = {
    "frame.len": (54, 1514),
    "udp.dstport": (1, 65535),
    "ip.flags": (0, 2),
    "tcp.dstport": (1, 65535),
    "ip.ttl": (1, 255),
    "udp.srcport": (1024, 65535),
    "ip.len": (20, 1500),
}

TCP_ONLY = ("tcp.dstport",)
UDP_ONLY = ("udp.dstport", "udp.srcport")


@dataclass(frozen=True)
class FeatureDist:
    """Integer-rounded triangular distribution on [low, high] peaking at mode."""

    low: float
    high: float
    mode: float

    def __post_init__(self):
        if not self.low <= self.mode <= self.high or self.low >= self.high:
            raise ValueError(f"need low <= mode <= high and low < high, got {self}")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.rint(rng.triangular(self.low, self.mode, self.high, size=n))


BENIGN_BACKGROUND = {
    "frame.len": FeatureDist(54, 1514, 400),
    "udp.dstport": FeatureDist(1, 65535, 443),
    "ip.flags": FeatureDist(0, 2, 2),
    "tcp.dstport": FeatureDist(1, 65535, 443),
    "ip.ttl": FeatureDist(32, 128, 64),
    "udp.srcport": FeatureDist(1024, 65535, 50000),
    "ip.len": FeatureDist(20, 1500, 300),
}

MALICIOUS_BACKGROUND = {
    "frame.len": FeatureDist(54, 1514, 450),
    "udp.dstport": FeatureDist(1, 65535, 2000),
    "ip.flags": FeatureDist(0, 2, 1.6),
    "tcp.dstport": FeatureDist(1, 65535, 2000),
    "ip.ttl": FeatureDist(32, 128, 70),
    "udp.srcport": FeatureDist(1024, 65535, 45000),
    "ip.len": FeatureDist(20, 1500, 340),
}


def dominant_distributions(name: str) -> tuple[FeatureDist, FeatureDist, FeatureDist]:
    """(benign, malicious, shared-overlap) distributions for a planted feature."""
    lo, hi = DOMAINS[name]
    span = hi - lo
    benign = FeatureDist(lo + 0.10 * span, hi, lo + 0.35 * span)
    malicious = FeatureDist(lo, lo + 0.07 * span, lo)
    overlap = FeatureDist(lo, lo + 0.25 * span, lo + 0.03 * span)
    return benign, malicious, overlap


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 20000
    malicious_fraction: float = 0.25
    dominant_feature: str = "frame.len"
    signal_strength: float = 0.95
    tcp_fraction: float = 0.5
    benign: dict = field(default_factory=lambda: dict(BENIGN_BACKGROUND))
    malicious: dict = field(default_factory=lambda: dict(MALICIOUS_BACKGROUND))
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        if not 0.0 < self.malicious_fraction < 1.0:
            raise ValueError("malicious_fraction must be in (0, 1)")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ValueError("signal_strength must be in [0, 1]")
        if not 0.0 <= self.tcp_fraction <= 1.0:
            raise ValueError("tcp_fraction must be in [0, 1]")
        if self.dominant_feature not in DEFAULT_FEATURES:
            raise ValueError(f"unknown dominant feature {self.dominant_feature!r}")
        for dists in (self.benign, self.malicious):
            for name, dist in dists.items():
                lo, hi = DOMAINS[name]
                if dist.low < lo or dist.high > hi:
                    raise ValueError(f"{name} distribution {dist} leaves the field domain [{lo}, {hi}]")

    def with_(self, **kw) -> "SynthConfig":
        return replace(self, **kw)


def generate(config: SynthConfig | None = None) -> LabeledDataset:
    config = config or SynthConfig()
    rng = np.random.default_rng(config.seed)
    n = config.n_samples
    n_mal = int(round(n * config.malicious_fraction))
    y = np.zeros(n, dtype=np.int8)
    y[rng.permutation(n)[:n_mal]] = 1
    is_mal = y == 1

    schema = FeatureSchema(DEFAULT_FEATURES)
    x = np.empty((n, schema.count))
    dom_benign, dom_mal, dom_overlap = dominant_distributions(config.dominant_feature)
    for j, name in enumerate(schema.names):
        col = np.where(is_mal, config.malicious[name].sample(rng, n), config.benign[name].sample(rng, n))
        if name == config.dominant_feature:
            planted = np.where(is_mal, dom_mal.sample(rng, n), dom_benign.sample(rng, n))
            shared = dom_overlap.sample(rng, n)
            col = np.where(rng.random(n) < config.signal_strength, planted, shared)
        x[:, j] = col

    # Fill the port columns a row's transport protocol does not have.
    is_tcp = rng.random(n) < config.tcp_fraction
    for name in UDP_ONLY:
        x[is_tcp, schema.index(name)] = 0
    for name in TCP_ONLY:
        x[~is_tcp, schema.index(name)] = 0
    return LabeledDataset(schema, x, y)
