"""Two unbalanced Michelson interferometers in the Franson arrangement.

Each photon reaches the monitored output port through the short (S) or long
(L) arm with amplitude 1/2 per open arm, or leaves through the other port.
Coincidence weights below are in units of 1/16 of the pair probability:

* signal L, idler S  -> idler - signal = -dT, weight 1
* signal S, idler L  -> idler - signal = +dT, weight 1
* SS and LL          -> delay 0, indistinguishable, weight 2 (1 + w cos(phi))

with ``phi = phase_signal + phase_idler + theta_offset``. The per-photon
transmission of each arm is part of the loss budget, not of this model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .source import PairEvents

MASKS = ("none", "short_blocked", "long_blocked")
CATEGORIES = ("ls", "center", "sl")  # delays -dT, 0, +dT (idler minus signal)
PORT_FRACTION = 0.5  # open interferometer, one of two outputs monitored

# outcome codes per photon
PATH_S, PATH_L, PATH_X = 0, 1, 2


class NoThroughputError(ValueError):
    """Both arms of one interferometer are blocked."""


@dataclass(frozen=True)
class InterferometerPair:
    delta_t: float = 670.0
    phase_signal: float = 0.0
    phase_idler: float = 0.0
    theta_offset: float = 0.0
    visibility: float = 0.95
    mask_signal: str = "none"
    mask_idler: str = "none"

    def __post_init__(self) -> None:
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility w must be in [0, 1], got {self.visibility}")
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")
        for m in (self.mask_signal, self.mask_idler):
            if m not in MASKS:
                raise ValueError(f"unknown mask {m!r}; expected one of {MASKS}")

    @property
    def phase_sum(self) -> float:
        return self.phase_signal + self.phase_idler + self.theta_offset

    @property
    def masked(self) -> bool:
        return self.mask_signal != "none" or self.mask_idler != "none"


@dataclass(frozen=True)
class FransonRegime:
    tau_c: float
    delta_t: float = 670.0
    tau_pump: float = 5e6

    def __post_init__(self) -> None:
        if min(self.tau_c, self.delta_t, self.tau_pump) <= 0:
            raise ValueError("regime times must all be positive")


def _open_arms(mask: str) -> tuple[bool, bool]:
    return mask != "short_blocked", mask != "long_blocked"


def joint_delay_weights(ip: InterferometerPair) -> np.ndarray:
    """Relative coincidence weights for delays (-dT, 0, +dT)."""
    s_short, s_long = _open_arms(ip.mask_signal)
    i_short, i_long = _open_arms(ip.mask_idler)
    if ip.mask_signal == ip.mask_idler == "none":
        center = 2.0 * (1.0 + ip.visibility * math.cos(ip.phase_sum))
        return np.array([1.0, center, 1.0])
    ls = float(s_long and i_short)
    sl = float(s_short and i_long)
    # at most one of SS / LL survives a mask, so no interference
    center = float(s_short and i_short) + float(s_long and i_long)
    return np.array([ls, center, sl])


def category_probabilities(ip: InterferometerPair) -> np.ndarray:
    w = joint_delay_weights(ip)
    total = w.sum()
    if total <= 0:
        raise NoThroughputError("no coincidence category has nonzero weight")
    return w / total


def sample_pair_outcome(ip: InterferometerPair, rng, conditional: bool = True):
    """Draw one coincidence category index (0: -dT, 1: 0, 2: +dT).

    With ``conditional=False`` the draw uses the absolute port probabilities
    (weights / 16) and returns None when the pair does not produce a
    coincidence at the monitored outputs.
    """
    probs = _check_throughput(ip)
    if conditional:
        return int(rng.choice(3, p=probs / probs.sum()))
    u = rng.random()
    cum = np.cumsum(probs)
    k = int(np.searchsorted(cum, u, side="right"))
    return k if k < 3 else None


def _check_throughput(ip: InterferometerPair) -> np.ndarray:
    for label, mask in (("signal", ip.mask_signal), ("idler", ip.mask_idler)):
        short, long_ = _open_arms(mask)
        if not (short or long_):
            raise NoThroughputError(f"both arms of the {label} interferometer are blocked")
    return joint_delay_weights(ip) / 16.0


def path_marginal(mask: str) -> np.ndarray:
    """Single-photon probabilities of (short, long, not detected)."""
    short, long_ = _open_arms(mask)
    p = np.array([0.25 * short, 0.25 * long_, 0.0])
    p[2] = 1.0 - p[0] - p[1]
    return p


def joint_path_table(ip: InterferometerPair) -> np.ndarray:
    """3x3 joint distribution over (signal outcome, idler outcome) in {S, L, X}.

    The coincidence block reproduces ``joint_delay_weights / 16``; the rows
    and columns sum to the single-photon marginals, so singles rates carry no
    phase dependence.
    """
    w = _check_throughput(ip)
    ms = path_marginal(ip.mask_signal)
    mi = path_marginal(ip.mask_idler)
    table = np.zeros((3, 3))
    table[PATH_L, PATH_S] = w[0]
    table[PATH_S, PATH_L] = w[2]
    ss_open = ms[PATH_S] > 0 and mi[PATH_S] > 0
    ll_open = ms[PATH_L] > 0 and mi[PATH_L] > 0
    if ss_open and ll_open:
        table[PATH_S, PATH_S] = table[PATH_L, PATH_L] = w[1] / 2.0
    elif ss_open:
        table[PATH_S, PATH_S] = w[1]
    elif ll_open:
        table[PATH_L, PATH_L] = w[1]
    for k in (PATH_S, PATH_L):
        table[k, PATH_X] = ms[k] - table[k, :2].sum()
        table[PATH_X, k] = mi[k] - table[:2, k].sum()
    table[PATH_X, PATH_X] = 1.0 - table.sum()
    if table.min() < -1e-12:
        raise ValueError("inconsistent joint path table")
    return np.clip(table, 0.0, None)


def _draw(rng: np.random.Generator, probs: np.ndarray, n: int) -> np.ndarray:
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    return np.searchsorted(cum, rng.random(n), side="right")


def route_pairs(ip: InterferometerPair, events: PairEvents, rng) -> tuple[np.ndarray, np.ndarray]:
    """Arrival times (ps, before detection) at the two monitored ports.

    Pairs with both photons alive are routed through the joint table; a lone
    surviving photon follows its single-photon marginal. Returned arrays are
    sorted.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    dt = int(round(ip.delta_t))
    t = events.emission_time
    both = events.signal_alive & events.idler_alive
    s_only = events.signal_alive & ~events.idler_alive
    i_only = ~events.signal_alive & events.idler_alive

    s_out = np.full(t.size, PATH_X, dtype=np.int64)
    i_out = np.full(t.size, PATH_X, dtype=np.int64)
    idx = np.flatnonzero(both)
    joint = _draw(rng, joint_path_table(ip).ravel(), idx.size)
    s_out[idx] = joint // 3
    i_out[idx] = joint % 3
    idx = np.flatnonzero(s_only)
    s_out[idx] = _draw(rng, path_marginal(ip.mask_signal), idx.size)
    idx = np.flatnonzero(i_only)
    i_out[idx] = _draw(rng, path_marginal(ip.mask_idler), idx.size)

    sig = t[s_out != PATH_X] + dt * s_out[s_out != PATH_X]
    idl = t[i_out != PATH_X] + dt * i_out[i_out != PATH_X]
    sig.sort()
    idl.sort()
    return sig, idl


def first_order_coherence(delta_t: float, tau_c: float) -> float:
    """|g1| of a Lorentzian line at delay ``delta_t``."""
    return math.exp(-abs(delta_t) / tau_c)


def singles_modulation(ip: InterferometerPair, tau_c: float = 12.34, margin: float = 10.0) -> float:
    """First-order fringe amplitude seen by single photons.

    Exactly zero once the arm imbalance is ``margin`` times the coherence time;
    the simulation never modulates singles in that regime.
    """
    if ip.delta_t >= margin * tau_c:
        return 0.0
    return ip.visibility * first_order_coherence(ip.delta_t, tau_c)


def check_franson_regime(r: FransonRegime, margin: float = 10.0) -> bool:
    if margin < 1:
        raise ValueError("margin must be >= 1")
    return r.delta_t >= margin * r.tau_c and r.tau_pump >= margin * r.delta_t


# field envelope exp(-x^2 / l^2) -> overlap exp(-m^2 / (2 l^2))
ALIGNMENT_ENVELOPE_K = 0.5


def alignment_visibility(mismatch: float, pulse_coherence_length: float) -> float:
    """Visibility of the cascaded-interferometer alignment fringe.

    Only two of the four pulse paths interfere, hence the 1/2 ceiling.
    """
    if pulse_coherence_length <= 0:
        raise ValueError("pulse_coherence_length must be positive")
    x = mismatch / pulse_coherence_length
    return 0.5 * math.exp(-ALIGNMENT_ENVELOPE_K * x * x)
