"""Stochastic pair emission, loss channels, fixed delays and detectors.

Pair events are kept as parallel numpy arrays (``PairEvents``) rather than one
object per pair; a desk-scale run handles tens of millions of pairs.
All timestamps are integer picoseconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import dead_time_mask

PS_PER_S = 1_000_000_000_000
MAX_DURATION_PS = 2**63 - 1
# pairs generated per chunk; each chunk gets its own child seed
CHUNK_PS = 50_000_000_000  # 50 ms

SIGNAL = "signal"
IDLER = "idler"
BOTH = "both"


def make_rng(seed) -> np.random.Generator:
    """Generator from an int, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(0, 2**63)))
    return np.random.SeedSequence(seed)


@dataclass(frozen=True)
class LossBudget:
    """Per-stage losses in dB along the signal and idler paths.

    The interferometer stage includes the 3 dB lost at the unmonitored output
    port; the detector stages are the detection efficiencies expressed in dB.
    """

    source_out: float = 3.5
    splitter: float = 4.0
    filter: float = 3.5
    interferometer: float = 10.0
    detector_1: float = 10.0
    detector_2: float = 13.0

    def __post_init__(self) -> None:
        for name in ("source_out", "splitter", "filter", "interferometer", "detector_1", "detector_2"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss stage {name} must be >= 0 dB")

    @property
    def common(self) -> float:
        return self.source_out + self.splitter + self.filter + self.interferometer

    @property
    def total_signal(self) -> float:
        return self.common + self.detector_1

    @property
    def total_idler(self) -> float:
        return self.common + self.detector_2

    @property
    def total_coincidence(self) -> float:
        return self.total_signal + self.total_idler


def db_to_transmission(loss_db: float) -> float:
    return 10.0 ** (-loss_db / 10.0)


def transmission_to_db(eta: float) -> float:
    return -10.0 * np.log10(eta)


@dataclass(frozen=True)
class DetectorSpec:
    """Single-photon detector: efficiency, dark counts, Gaussian jitter, dead time."""

    efficiency: float = 0.10
    dark_count_rate: float = 100.0
    jitter_sigma: float = 32.0
    dead_time: float = 30_000.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must be in [0, 1], got {self.efficiency}")
        if self.dark_count_rate < 0:
            raise ValueError("dark_count_rate must be >= 0")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        if self.dead_time < 0:
            raise ValueError("dead_time must be >= 0")

    @classmethod
    def from_loss_db(cls, loss_db: float, **kw) -> DetectorSpec:
        return cls(efficiency=db_to_transmission(loss_db), **kw)


@dataclass
class PairEvents:
    emission_time: np.ndarray
    signal_alive: np.ndarray
    idler_alive: np.ndarray

    def __post_init__(self) -> None:
        self.emission_time = np.asarray(self.emission_time, dtype=np.int64)
        self.signal_alive = np.asarray(self.signal_alive, dtype=bool)
        self.idler_alive = np.asarray(self.idler_alive, dtype=bool)

    def __len__(self) -> int:
        return int(self.emission_time.size)

    def copy(self) -> PairEvents:
        return PairEvents(self.emission_time.copy(), self.signal_alive.copy(), self.idler_alive.copy())


@dataclass
class TimeTagStream:
    """Sorted click times of one detector channel."""

    channel: int
    tags: np.ndarray
    duration: int
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.tags = np.asarray(self.tags, dtype=np.int64)
        if not 0 <= self.channel <= 255:
            raise ValueError("channel id must fit in one byte")
        if self.tags.size and np.any(np.diff(self.tags) < 0):
            raise ValueError("time tags must be sorted ascending")
        if self.tags.size and (self.tags[0] < 0 or self.tags[-1] > self.duration):
            raise ValueError("time tags must lie in [0, duration]")

    def __len__(self) -> int:
        return int(self.tags.size)

    @property
    def rate(self) -> float:
        return self.tags.size / (self.duration / PS_PER_S) if self.duration else 0.0


def poisson_times(rate: float, duration_ps: int, rng: np.random.Generator) -> np.ndarray:
    """Sorted integer arrival times of a homogeneous Poisson process on [0, duration_ps).

    Uses a Poisson total count with sorted uniform positions, which is
    equivalent in law to summing exponential gaps.
    """
    if rate <= 0 or duration_ps <= 0:
        return np.zeros(0, dtype=np.int64)
    n = rng.poisson(rate * duration_ps / PS_PER_S)
    t = rng.integers(0, duration_ps, size=n, dtype=np.int64)
    t.sort()
    return t


def generate_pairs(rate: float, duration: float, seed) -> PairEvents:
    """Poisson pair emission at ``rate`` Hz over ``duration`` seconds.

    The time axis is cut into 50 ms chunks, each drawn from a child of the
    seed, so the result is identical however the chunks are scheduled.
    """
    if rate < 0:
        raise ValueError("rate must be >= 0")
    if duration <= 0:
        raise ValueError("duration must be positive")
    duration_ps = int(round(duration * PS_PER_S))
    if duration_ps > MAX_DURATION_PS:
        raise ValueError("duration exceeds the 64-bit picosecond range")
    if rate == 0:
        return PairEvents(np.zeros(0, np.int64), np.zeros(0, bool), np.zeros(0, bool))
    n_chunks = -(-duration_ps // CHUNK_PS)
    children = _seed_sequence(seed).spawn(n_chunks)
    parts = []
    for k, child in enumerate(children):
        start = k * CHUNK_PS
        stop = min(duration_ps, start + CHUNK_PS)
        parts.append(start + poisson_times(rate, stop - start, np.random.default_rng(child)))
    times = np.concatenate(parts)
    n = times.size
    return PairEvents(times, np.ones(n, bool), np.ones(n, bool))


def generate_surviving_pairs(rate: float, duration: float, eta_signal: float, eta_idler: float, seed) -> PairEvents:
    """Pairs with at least one photon surviving independent losses.

    Equal in law to ``generate_pairs`` followed by ``apply_loss`` on each photon
    with the dropped pairs removed: marking a Poisson process independently
    splits it into independent Poisson processes, so only the
    ``1 - (1 - eta_s)(1 - eta_i)`` fraction that can ever click is drawn.
    """
    for eta in (eta_signal, eta_idler):
        if not 0.0 <= eta <= 1.0:
            raise ValueError(f"survival probability must be in [0, 1], got {eta}")
    p_both = eta_signal * eta_idler
    p_sig = eta_signal * (1.0 - eta_idler)
    p_any = p_both + p_sig + (1.0 - eta_signal) * eta_idler
    time_seed, mark_seed = _seed_sequence(seed).spawn(2)
    events = generate_pairs(rate * p_any, duration, time_seed)
    n = len(events)
    if n == 0:
        return events
    u = np.random.default_rng(mark_seed).random(n) * p_any
    both = u < p_both
    sig_only = (u >= p_both) & (u < p_both + p_sig)
    return PairEvents(events.emission_time, both | sig_only, ~sig_only)


def apply_loss(events: PairEvents, loss_db: float, which_photon: str, seed) -> PairEvents:
    """Each selected photon survives independently with probability 10^(-dB/10)."""
    if loss_db < 0:
        raise ValueError("loss_db must be >= 0")
    if which_photon not in (SIGNAL, IDLER, BOTH):
        raise ValueError(f"which_photon must be one of signal/idler/both, got {which_photon!r}")
    out = events.copy()
    if loss_db == 0 or len(events) == 0:
        return out
    rng = make_rng(seed)
    p = db_to_transmission(loss_db)
    if which_photon in (SIGNAL, BOTH):
        out.signal_alive &= rng.random(len(out)) < p
    if which_photon in (IDLER, BOTH):
        out.idler_alive &= rng.random(len(out)) < p
    return out


def apply_delay(tags: np.ndarray, offset_ps: int) -> np.ndarray:
    return np.asarray(tags, dtype=np.int64) + np.int64(offset_ps)


def detect(
    tags: np.ndarray,
    spec: DetectorSpec,
    duration: int,
    seed,
    *,
    channel: int = 0,
    background_rate: float = 0.0,
) -> TimeTagStream:
    """Turn photon arrival times into detector clicks.

    Thins by efficiency, adds Gaussian jitter, merges dark counts and any
    uncorrelated background clicks (both given as detected rates), drops
    clicks outside ``[0, duration]`` and applies the dead time.
    ``duration`` is in ps.
    """
    t = np.asarray(tags, dtype=np.int64)
    if t.size and np.any(np.diff(t) < 0):
        raise ValueError("input tags must be sorted")
    rng = make_rng(seed)
    if spec.efficiency < 1.0:
        t = t[rng.random(t.size) < spec.efficiency]
    if spec.jitter_sigma > 0 and t.size:
        t = t + np.rint(rng.normal(0.0, spec.jitter_sigma, t.size)).astype(np.int64)
    noise = poisson_times(spec.dark_count_rate + background_rate, duration, rng)
    t = np.concatenate([t, noise])
    t.sort(kind="stable")
    t = t[(t >= 0) & (t <= duration)]
    if spec.dead_time > 0 and t.size:
        t = t[dead_time_mask(t, int(round(spec.dead_time)))]
    s = seed if isinstance(seed, (int, np.integer)) else 0
    return TimeTagStream(channel=channel, tags=t, duration=int(duration), seed=int(s))
