"""Virtual-time benchmarks for ledger revocation checking.

Three workloads:

* ``run_check_benchmark`` - a station receives signed messages from a sender
  pool that is half revoked, for every (revoked count, frequency) cell.
* ``run_window_benchmark`` - time from misbehaviour report to the revocation
  becoming queryable (the vulnerability window).
* ``run_crl_baseline`` - the same receive workload checked by a linear scan
  over an in-memory CRL.

All clocks are simulated; latency models stand in for network and node.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterable, Sequence

from tanglerev.authorities import MisbehaviorReport, TrustDomain, bootstrap_trust
from tanglerev.certkit import Certificate, HashedId, KeyPair, generate_keypair
from tanglerev.station import ReceiveResult, Station, StationConfig, sign_message
from tanglerev.tangle import LatencyModel, Ledger

METRICS_HEADER = ["kind", "revoked_count", "frequency_hz", "mean_ms", "max_ms", "p95_ms", "n"]

EPOCH = 1_700_000_000  # simulated wall-clock origin, Unix seconds


class ConfigInvalid(ValueError):
    pass


class EmptySamples(ValueError):
    pass


# -- statistics ---------------------------------------------------------------


def percentile(samples: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ``ceil(p * n)``-th smallest sample."""
    if not samples:
        raise EmptySamples("percentile of an empty sample")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    ordered = sorted(samples)
    # guard against 0.95 * n landing a hair above an integer
    rank = math.ceil(round(p * len(ordered), 9))
    return ordered[max(rank, 1) - 1]


def emit_cdf(samples: Iterable[float]) -> list[tuple[float, float]]:
    counts = Counter(samples)
    if not counts:
        raise EmptySamples("CDF of an empty sample")
    n = sum(counts.values())
    out, seen = [], 0
    for value in sorted(counts):
        seen += counts[value]
        out.append((value, seen / n))
    return out


@dataclass(frozen=True)
class DelayStats:
    mean_ms: float
    max_ms: float
    p95_ms: float
    n: int

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> DelayStats:
        if not samples:
            raise EmptySamples("no delay samples")
        return cls(math.fsum(samples) / len(samples), max(samples),
                   percentile(samples, 0.95), len(samples))


@dataclass(frozen=True)
class DelaySample:
    kind: str
    value_ms: float
    revoked_count: int
    frequency_hz: float


# -- configuration ------------------------------------------------------------


def default_publish_model() -> LatencyModel:
    """Log-normal attach latency fit to mean 8 s / p95 18.57 s, capped at 82.96 s."""
    return LatencyModel.fit_lognormal(8000.0, 18570.0, 82960.0)


@dataclass
class ScenarioConfig:
    # 0 means "size the pool per cell as revoked_count / revoked_fraction"
    n_certificates: int = 0
    revoked_fraction: float = 0.5
    revoked_counts: list[int] = field(default_factory=lambda: [500, 5000, 10000])
    frequencies_hz: list[float] = field(default_factory=lambda: [1, 2, 10])
    duration_s: float = 60.0
    check_latency_model: LatencyModel = field(default_factory=lambda: LatencyModel.constant(10.0))
    publish_latency_model: LatencyModel = field(default_factory=default_publish_model)
    seed: int = 0
    local_work_ms: float = 0.0
    crl_entry_cost_us: float = 1.0
    n_revocations: int = 10000

    def validate(self) -> None:
        if not 0 < self.revoked_fraction <= 1:
            raise ConfigInvalid("revoked_fraction must lie in (0, 1]")
        if not self.revoked_counts or any(c < 1 for c in self.revoked_counts):
            raise ConfigInvalid("revoked_counts must be positive")
        if not self.frequencies_hz or any(f <= 0 for f in self.frequencies_hz):
            raise ConfigInvalid("frequencies_hz must be positive")
        if self.duration_s <= 0:
            raise ConfigInvalid("duration_s must be positive")
        if self.n_certificates and self.n_certificates < max(self.revoked_counts):
            raise ConfigInvalid("n_certificates smaller than the largest revoked count")
        if self.local_work_ms < 0 or self.crl_entry_cost_us < 0:
            raise ConfigInvalid("costs must be non-negative")
        if self.n_revocations < 1:
            raise ConfigInvalid("n_revocations must be >= 1")

    def pool_size(self, revoked_count: int) -> int:
        if self.n_certificates:
            return self.n_certificates
        return math.ceil(revoked_count / self.revoked_fraction)

    def to_dict(self) -> dict:
        return {
            "n_certificates": self.n_certificates,
            "revoked_fraction": self.revoked_fraction,
            "revoked_counts": list(self.revoked_counts),
            "frequencies_hz": list(self.frequencies_hz),
            "duration_s": self.duration_s,
            "check_latency_model": self.check_latency_model.to_dict(),
            "publish_latency_model": self.publish_latency_model.to_dict(),
            "seed": self.seed,
            "local_work_ms": self.local_work_ms,
            "crl_entry_cost_us": self.crl_entry_cost_us,
            "n_revocations": self.n_revocations,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ScenarioConfig:
        data = dict(data)
        known = set(cls().to_dict())
        unknown = set(data) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        for key in ("check_latency_model", "publish_latency_model"):
            if key in data:
                try:
                    data[key] = LatencyModel.from_dict(data[key])
                except (KeyError, ValueError, TypeError) as exc:
                    raise ConfigInvalid(f"{key}: {exc}") from None
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | PathLike) -> ScenarioConfig:
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigInvalid(f"{path}: {exc}") from None
        return cls.from_dict(data)


# -- populations --------------------------------------------------------------


@dataclass
class Vehicle:
    canonical_id: bytes
    ltc: Certificate
    stc: Certificate
    stc_keys: KeyPair

    @property
    def stc_hash(self) -> HashedId:
        return self.stc.hashed_id()


def enroll_population(domain: TrustDomain, n: int, seed, now: int = EPOCH) -> list[Vehicle]:
    """Pre-register, enroll and authorize ``n`` vehicles through the CAs."""
    vehicles = []
    for i in range(n):
        cid = f"V-{i:06d}".encode()
        ltc_keys = generate_keypair(f"{seed}/ltc/{i}".encode())
        stc_keys = generate_keypair(f"{seed}/stc/{i}".encode())
        domain.ltca.preregister(cid)
        ltc = domain.ltca.enroll(cid, ltc_keys.public_key, now)
        stc = domain.stca.authorize(ltc, stc_keys.public_key, now)
        vehicles.append(Vehicle(cid, ltc, stc, stc_keys))
    return vehicles


def receiver_for(domain: TrustDomain, ledger: Ledger | None, station_id: str = "obu-0") -> Station:
    cfg = StationConfig(station_id, domain.root.cert, domain.ra.cert,
                        authority_certs=(domain.stca.cert,))
    return Station(cfg, ledger)


def _arrivals(start_ms: int, frequency_hz: float, duration_s: float) -> list[int]:
    n = int(round(frequency_hz * duration_s))
    period = 1000.0 / frequency_hz
    return [start_ms + int(round(k * period)) for k in range(n)]


# -- check benchmark ----------------------------------------------------------


@dataclass
class CheckBenchmarkResult:
    stats: dict[tuple[int, float], DelayStats] = field(default_factory=dict)
    samples: dict[tuple[int, float], list[float]] = field(default_factory=dict)
    # delays of checks whose sender was not revoked
    miss_samples: dict[tuple[int, float], list[float]] = field(default_factory=dict)
    events: int = 0
    false_positives: int = 0
    false_negatives: int = 0
    other_outcomes: int = 0
    queries_per_check: Counter = field(default_factory=Counter)

    def rows(self, kind: str = "check") -> list[list]:
        return [[kind, c, f, s.mean_ms, s.max_ms, s.p95_ms, s.n]
                for (c, f), s in sorted(self.stats.items())]

    def sample_records(self, kind: str = "check") -> list[DelaySample]:
        return [DelaySample(kind, v, c, f)
                for (c, f), vals in sorted(self.samples.items()) for v in vals]


class _World:
    """Trust domain plus an enrolled population shared by every cell."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        size = max(config.pool_size(c) for c in config.revoked_counts)
        self.domain = bootstrap_trust(f"scenario/{config.seed}", now=EPOCH - 3600)
        self.vehicles = enroll_population(self.domain, size, f"scenario/{config.seed}")
        self._ledgers: dict[int, tuple[Ledger, int]] = {}

    def cell_pool(self, revoked_count: int) -> tuple[list[Vehicle], set[HashedId]]:
        pool = self.vehicles[: self.config.pool_size(revoked_count)]
        return pool, {v.stc_hash for v in pool[:revoked_count]}

    def ledger_for(self, revoked_count: int) -> tuple[Ledger, int]:
        """Ledger holding ``revoked_count`` RA-signed revocations, and the
        time (ms) by which all of them are queryable."""
        if revoked_count not in self._ledgers:
            cfg = self.config
            ledger = Ledger(cfg.publish_latency_model, seed=f"{cfg.seed}/publish/{revoked_count}")
            t0 = EPOCH * 1000
            ready = t0
            for v in self.vehicles[:revoked_count]:
                _, receipt = self.domain.ra.publish_revocation(v.stc_hash, t0, ledger=ledger)
                ready = max(ready, receipt.queryable_time)
            self._ledgers[revoked_count] = (ledger, ready + 1000)
        return self._ledgers[revoked_count]


def _run_cells(config: ScenarioConfig, world: _World | None, crl: bool) -> CheckBenchmarkResult:
    config.validate()
    world = world or _World(config)
    result = CheckBenchmarkResult()
    for count in config.revoked_counts:
        pool, revoked = world.cell_pool(count)
        ledger, start = world.ledger_for(count)
        receiver = receiver_for(world.domain, None if crl else ledger)
        crl_list = [v.stc_hash for v in pool[:count]]
        for freq in config.frequencies_hz:
            pick = random.Random(f"{config.seed}/senders/{count}/{freq}")
            lat = random.Random(f"{config.seed}/check/{count}/{freq}")
            delays, misses = [], []
            for t in _arrivals(start, freq, config.duration_s):
                sender = pool[pick.randrange(len(pool))]
                msg = sign_message(sender.stc, sender.stc_keys, b"CAM", t)
                truth = sender.stc_hash in revoked
                if crl:
                    scanned, hit = _crl_scan(crl_list, sender.stc.hashed_id())
                    delays.append(scanned * config.crl_entry_cost_us / 1000.0)
                    decided = hit
                    outcome_ok = True
                else:
                    before = ledger.query_count
                    outcome = receiver.receive(msg, t)
                    result.queries_per_check[ledger.query_count - before] += 1
                    delays.append(config.check_latency_model.sample(lat) + config.local_work_ms)
                    decided = outcome is ReceiveResult.IGNORED_REVOKED
                    outcome_ok = outcome in (ReceiveResult.IGNORED_REVOKED, ReceiveResult.ACCEPTED)
                if not truth:
                    misses.append(delays[-1])
                result.events += 1
                if not outcome_ok:
                    result.other_outcomes += 1
                elif decided and not truth:
                    result.false_positives += 1
                elif truth and not decided:
                    result.false_negatives += 1
            result.samples[(count, freq)] = delays
            result.stats[(count, freq)] = DelayStats.from_samples(delays)
            result.miss_samples[(count, freq)] = misses
    return result


def _crl_scan(crl: list[HashedId], target: HashedId) -> tuple[int, bool]:
    """Linear CRL lookup; returns entries compared and whether it matched."""
    for i, entry in enumerate(crl, 1):
        if entry == target:
            return i, True
    return len(crl), False


def run_check_benchmark(config: ScenarioConfig, world: _World | None = None) -> CheckBenchmarkResult:
    return _run_cells(config, world, crl=False)


def run_crl_baseline(config: ScenarioConfig, world: _World | None = None) -> CheckBenchmarkResult:
    return _run_cells(config, world, crl=True)


def miss_stats(result: CheckBenchmarkResult) -> dict[tuple[int, float], DelayStats]:
    """Stats restricted to unrevoked senders (full scans for a CRL)."""
    return {cell: DelayStats.from_samples(v) for cell, v in result.miss_samples.items() if v}


# -- vulnerability window ------------------------------------------------------


@dataclass
class WindowBenchmarkResult:
    stats: DelayStats
    samples: list[float]
    resolved: int


def run_window_benchmark(config: ScenarioConfig, n_revocations: int | None = None) -> WindowBenchmarkResult:
    """Report ``n_revocations`` distinct vehicles and time report -> queryable."""
    config.validate()
    n = n_revocations if n_revocations is not None else config.n_revocations
    if n < 1:
        raise ConfigInvalid("n_revocations must be >= 1")
    ledger = Ledger(config.publish_latency_model, seed=f"{config.seed}/window")
    domain = bootstrap_trust(f"window/{config.seed}", now=EPOCH - 3600, ledger=ledger)
    vehicles = enroll_population(domain, n, f"window/{config.seed}")
    windows, resolved = [], 0
    for i, v in enumerate(vehicles):
        report_ms = EPOCH * 1000 + i * 1000
        report = MisbehaviorReport(v.stc_hash, b"", "harness", report_ms // 1000)
        receipt, cid = domain.ma.report_misbehavior(report, report_ms)
        windows.append(float(receipt.queryable_time - report_ms))
        resolved += cid == v.canonical_id
    return WindowBenchmarkResult(DelayStats.from_samples(windows), windows, resolved)


# -- output -------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def metrics_text(rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def write_metrics(path: str | PathLike, rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_text(rows))


def write_samples(path: str | PathLike, samples: Iterable[DelaySample]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "revoked_count", "frequency_hz", "value_ms"])
        for s in samples:
            w.writerow([s.kind, s.revoked_count, _fmt(s.frequency_hz), _fmt(s.value_ms)])


def write_cdf(path: str | PathLike, series: dict[tuple[str, int, float], Sequence[float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "revoked_count", "frequency_hz", "value_ms", "cumulative_probability"])
        for (kind, count, freq), values in sorted(series.items()):
            for value, prob in emit_cdf(values):
                w.writerow([kind, count, _fmt(freq), _fmt(value), _fmt(prob)])
