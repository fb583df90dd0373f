"""Ground-truth clock state and the two-way timestamp exchange.

A node's local clock reads ``alpha * t + theta`` at real time t. One
exchange round between an initiator i and a responder j produces four
local readings: i stamps the send time t1, j stamps the receive time t2
and its reply time t3, and i stamps the reply arrival t4. The true times
obey t2 = t1 + d + w_j and t4 = t3 + d + w_i, with d the fixed symmetric
link delay and w zero-mean Gaussian jitter.

All operations are pure functions of their inputs plus an explicitly
passed random generator, so independent trials can run concurrently with
independent seeded generators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .topology import Topology


@dataclass(frozen=True)
class ClockParams:
    """True skew (dimensionless, positive in the physical regime) and
    offset (time units) of one node."""

    alpha: float
    theta: float

    def __post_init__(self):
        if self.alpha == 0:
            raise ConfigurationError("clock skew must be nonzero")


@dataclass(frozen=True)
class ClockRanges:
    """Sampling ranges for true clock and link parameters.

    A nonpositive skew breaks the linear reparameterization the estimator
    relies on; sampling rejects such ranges unless allow_unphysical_skew
    is set (an audit switch, not a supported operating mode).
    """

    skew: tuple[float, float] = (0.945, 1.055)
    offset: tuple[float, float] = (-5.5, 5.5)
    delay: tuple[float, float] = (8.0, 12.0)
    noise_var: float = 0.05
    allow_unphysical_skew: bool = False


@dataclass(frozen=True)
class ExchangeTiming:
    """True-time schedule of exchange rounds: round n starts at
    n * round_period; the responder replies after a uniform delay drawn
    from response_delay."""

    round_period: float = 100.0
    response_delay: tuple[float, float] = (1.0, 5.0)


@dataclass(frozen=True)
class TrueNetworkState:
    """Per-node clocks, per-edge fixed delays (symmetric), per-node jitter
    variances. clocks[k] belongs to node k+1."""

    clocks: tuple[ClockParams, ...]
    fixed_delays: dict[tuple[int, int], float]
    noise_vars: tuple[float, ...]

    @property
    def num_nodes(self) -> int:
        return len(self.clocks)

    def clock(self, node: int) -> ClockParams:
        return self.clocks[node - 1]

    def noise_var(self, node: int) -> float:
        return self.noise_vars[node - 1]

    def delay(self, i: int, j: int) -> float:
        return self.fixed_delays[(min(i, j), max(i, j))]


@dataclass(frozen=True)
class TimestampSet:
    """Local clock readings from N exchange rounds on one edge.

    Arrays are indexed by round: c_init_send = c_i(t1), c_resp_recv =
    c_j(t2), c_resp_send = c_j(t3), c_init_recv = c_i(t4).
    """

    initiator: int
    responder: int
    c_init_send: np.ndarray
    c_resp_recv: np.ndarray
    c_resp_send: np.ndarray
    c_init_recv: np.ndarray

    @property
    def rounds(self) -> int:
        return len(self.c_init_send)


def local_reading(clock: ClockParams, t) -> float | np.ndarray:
    """Local clock reading at real time t: alpha * t + theta."""
    return clock.alpha * t + clock.theta


def sample_true_state(
    topology: Topology,
    ranges: ClockRanges,
    rng: np.random.Generator,
) -> TrueNetworkState:
    """Draw a ground-truth network state.

    Node 1 (the reference) always gets skew 1 and offset 0; the other
    nodes draw uniformly from the configured ranges. Fixed delays are
    drawn once per edge and shared by both directions.
    """
    lo, hi = ranges.skew
    if lo <= 0 and not ranges.allow_unphysical_skew:
        raise ConfigurationError(
            f"skew range {ranges.skew} includes nonpositive values; "
            "set allow_unphysical_skew to sample it anyway"
        )
    if hi < lo:
        raise ConfigurationError(f"empty skew range {ranges.skew}")
    if ranges.noise_var <= 0:
        raise ConfigurationError("noise_var must be positive")

    clocks = [ClockParams(1.0, 0.0)]
    for _ in range(topology.num_nodes - 1):
        alpha = float(rng.uniform(lo, hi))
        theta = float(rng.uniform(*ranges.offset))
        clocks.append(ClockParams(alpha, theta))

    delays = {
        edge: float(rng.uniform(*ranges.delay)) for edge in sorted(topology.edges)
    }
    noise = (float(ranges.noise_var),) * topology.num_nodes
    return TrueNetworkState(tuple(clocks), delays, noise)


def simulate_exchange(
    edge: tuple[int, int],
    state: TrueNetworkState,
    num_rounds: int,
    timing: ExchangeTiming,
    rng: np.random.Generator,
) -> TimestampSet:
    """Run num_rounds two-way exchanges on one edge; the first element of
    ``edge`` initiates. Returns the four local reading sequences."""
    if num_rounds < 2:
        raise ConfigurationError(
            f"need at least 2 exchange rounds for identifiability, got {num_rounds}"
        )
    i, j = edge
    key = (min(i, j), max(i, j))
    if key not in state.fixed_delays:
        raise ConfigurationError(f"edge {edge} is not part of the network")
    d = state.fixed_delays[key]

    t1 = timing.round_period * np.arange(1, num_rounds + 1, dtype=float)
    w_j = rng.normal(0.0, np.sqrt(state.noise_var(j)), size=num_rounds)
    t2 = t1 + d + w_j
    t3 = t2 + rng.uniform(*timing.response_delay, size=num_rounds)
    w_i = rng.normal(0.0, np.sqrt(state.noise_var(i)), size=num_rounds)
    t4 = t3 + d + w_i

    ci, cj = state.clock(i), state.clock(j)
    return TimestampSet(
        initiator=i,
        responder=j,
        c_init_send=local_reading(ci, t1),
        c_resp_recv=local_reading(cj, t2),
        c_resp_send=local_reading(cj, t3),
        c_init_recv=local_reading(ci, t4),
    )
