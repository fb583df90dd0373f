"""Tick-driven network simulation with packet loss and stale messages.

The simulator advances in integer ticks. A message computed at tick l
becomes visible to its recipient at tick l+1 at the earliest; the
per-directed-edge mailbox always holds the latest successfully delivered
message together with the tick it was computed at, so recipients work
with possibly stale content.

Asynchronous mode: every node whose activation set contains the current
tick recomputes messages to all neighbors from its current mailbox
(excluding the recipient's own slot) and transmits; each transmission
independently succeeds with the edge's success probability. Nodes that
are inactive, and transmissions that are lost, leave mailbox slots
unchanged.

Synchronous mode: a node recomputes and re-sends only once it has
received the current round's message from every neighbor; undelivered
messages are re-attempted every tick until they land.

A single trace is advanced by one logical writer (tick-by-tick, with a
seeded generator); independent traces share no mutable state and may run
concurrently.
"""

from __future__ import annotations

import gzip
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import bp
from .errors import ConfigurationError
from .observations import ObservationPair
from .topology import Topology

MODES = ("synchronous", "asynchronous")
LOSS_POLICIES = ("refresh", "hold")


@dataclass(frozen=True)
class ScheduleConfig:
    """Message schedule: mode, per-edge success probability (scalar or a
    mapping keyed by unordered edge), optional per-node activation tick
    sets (missing node or None = active every tick), tick budget, and the
    loss policy in asynchronous mode ("refresh" resends the freshest
    computed message on every active tick, "hold" keeps one computed
    message until it is delivered)."""

    mode: str = "asynchronous"
    p_success: float | Mapping[tuple[int, int], float] = 1.0
    activation: Mapping[int, frozenset[int]] | None = None
    max_ticks: int = 500
    loss_policy: str = "refresh"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.loss_policy not in LOSS_POLICIES:
            raise ConfigurationError(
                f"loss_policy must be one of {LOSS_POLICIES}, got {self.loss_policy!r}"
            )
        if self.max_ticks < 1:
            raise ConfigurationError("max_ticks must be >= 1")
        probs = (
            [self.p_success]
            if np.isscalar(self.p_success)
            else list(self.p_success.values())
        )
        for p in probs:
            if not (0.0 <= p <= 1.0):
                raise ConfigurationError(f"success probability {p} outside [0, 1]")

    def edge_probability(self, edge: tuple[int, int]) -> float:
        if np.isscalar(self.p_success):
            return float(self.p_success)
        key = (min(edge), max(edge))
        return float(self.p_success[key])


class SimState:
    """Full state of one simulated network: topology, per-edge
    observations, per-node priors, per-directed-edge mailboxes, the tick
    counter, and the recorded per-node belief history."""

    def __init__(
        self,
        topology: Topology,
        observations,
        priors: Mapping[int, bp.PriorInfo] | None = None,
        reference: int = 1,
    ):
        self.topology = topology
        self.reference = reference
        if not isinstance(observations, Mapping):
            observations = {pair.edge: pair for pair in observations}
        self.observations: dict[tuple[int, int], ObservationPair] = {
            (min(k), max(k)): v for k, v in observations.items()
        }
        if set(self.observations) != set(topology.edges):
            raise ConfigurationError(
                "observations must cover exactly the topology's edges"
            )

        m = topology.num_nodes
        if priors is None:
            priors = {}
        self.priors: dict[int, bp.PriorInfo] = {}
        for node in topology.node_ids():
            if node in priors:
                self.priors[node] = priors[node]
            elif node == reference:
                self.priors[node] = bp.PriorInfo.delta(np.array([1.0, 0.0]))
            else:
                self.priors[node] = bp.PriorInfo.noninformative()
        if not self.priors[reference].is_delta:
            raise ConfigurationError("the reference node needs an exact prior")
        self._beta_ref = self.priors[reference].beta

        # Directed-edge arrays; edge 2k and 2k+1 are mutual reverses.
        send, recv = [], []
        for a, b_ in sorted(self.observations):
            send += [a, b_]
            recv += [b_, a]
        self._send = np.array(send, dtype=int)
        self._recv = np.array(recv, dtype=int)
        ne = len(send)
        self._rev = np.arange(ne) ^ 1
        self._gram_recv = np.empty((ne, 2, 2))
        self._gram_send = np.empty((ne, 2, 2))
        self._cross = np.empty((ne, 2, 2))
        self._sigma2 = np.empty(ne)
        self._ref_w = np.zeros((ne, 2, 2))
        self._ref_h = np.zeros((ne, 2))
        self._is_ref_send = self._send == reference
        for e in range(ne):
            pair = self.observations[(min(send[e], recv[e]), max(send[e], recv[e]))]
            a_s, a_r = pair.oriented(send[e])
            self._gram_recv[e] = a_r.T @ a_r
            self._gram_send[e] = a_s.T @ a_s
            self._cross[e] = a_r.T @ a_s
            self._sigma2[e] = pair.sigma2
            if send[e] == reference:
                msg = bp.reference_outgoing(pair, reference, self._beta_ref)
                self._ref_w[e] = msg.w
                self._ref_h[e] = msg.h

        # Finite priors; the reference's delta prior never enters sums.
        self._prior_w = np.zeros((m, 2, 2))
        self._prior_h = np.zeros((m, 2))
        for node in topology.node_ids():
            if node != reference:
                self._prior_w[node - 1] = self.priors[node].w
                self._prior_h[node - 1] = self.priors[node].h

        self._mbox_w = np.zeros((ne, 2, 2))
        self._mbox_h = np.zeros((ne, 2))
        self._mbox_tick = np.zeros(ne, dtype=int)
        self.tick = 0
        self._mu_hist: list[np.ndarray] = []
        self._cov_hist: list[np.ndarray] = []
        self._ident_hist: list[np.ndarray] = []
        self._trace_fh = None

        # Synchronous-mode bookkeeping, built on first synchronous step.
        self._sync_ready = False
        # Hold-policy bookkeeping, built on first asynchronous hold step.
        self._hold_ready = False

    # -- accessors ----------------------------------------------------------

    @property
    def num_directed_edges(self) -> int:
        return len(self._send)

    def mailbox(self, sender: int, receiver: int) -> tuple[bp.InfoMessage, int]:
        """Latest delivered message on the ordered pair sender -> receiver
        plus the tick it was computed at."""
        hits = np.nonzero((self._send == sender) & (self._recv == receiver))[0]
        if len(hits) != 1:
            raise KeyError(f"no directed edge {sender} -> {receiver}")
        e = hits[0]
        return (
            bp.InfoMessage(self._mbox_w[e].copy(), self._mbox_h[e].copy()),
            int(self._mbox_tick[e]),
        )

    def current_belief(self, node: int) -> bp.Belief:
        if not self._mu_hist:
            raise ValueError("no ticks have run yet")
        k = node - 1
        return bp.Belief(
            p=self._cov_hist[-1][k].copy(),
            mu=self._mu_hist[-1][k].copy(),
            identifiable=bool(self._ident_hist[-1][k]),
        )

    def trace_to(self, fh) -> None:
        """Write one wire-format line per delivered message to fh."""
        self._trace_fh = fh

    # -- internals ------------------------------------------------------------

    def _node_totals(self) -> tuple[np.ndarray, np.ndarray]:
        """Prior-plus-mailbox information aggregated per node."""
        tw = self._prior_w.copy()
        th = self._prior_h.copy()
        np.add.at(tw, self._recv - 1, self._mbox_w)
        np.add.at(th, self._recv - 1, self._mbox_h)
        return tw, th

    def _fresh_outgoing(self) -> tuple[np.ndarray, np.ndarray]:
        """Messages every sender would emit from the current mailboxes."""
        tw, th = self._node_totals()
        x = tw[self._send - 1] - self._mbox_w[self._rev]
        b = th[self._send - 1] - self._mbox_h[self._rev]
        w, h = bp.outgoing_batch(
            self._gram_recv, self._gram_send, self._cross, self._sigma2, x, b
        )
        ref = self._is_ref_send
        w[ref] = self._ref_w[ref]
        h[ref] = self._ref_h[ref]
        return w, h

    def _active_nodes(self, cfg: ScheduleConfig) -> np.ndarray:
        mask = np.ones(self.topology.num_nodes, dtype=bool)
        if cfg.activation is not None:
            for node in self.topology.node_ids():
                ticks = cfg.activation.get(node)
                if ticks is not None:
                    mask[node - 1] = self.tick in ticks
        return mask

    def _edge_probs(self, cfg: ScheduleConfig) -> np.ndarray:
        return np.array(
            [
                cfg.edge_probability((s, r))
                for s, r in zip(self._send, self._recv)
            ]
        )

    def _deliver(self, mask: np.ndarray, w, h, computed_tick) -> None:
        self._mbox_w[mask] = w[mask]
        self._mbox_h[mask] = h[mask]
        self._mbox_tick[mask] = computed_tick[mask]
        if self._trace_fh is not None:
            for e in np.nonzero(mask)[0]:
                line = bp.format_wire_line(
                    int(self._send[e]),
                    int(self._recv[e]),
                    bp.InfoMessage(w[e], h[e]),
                    int(computed_tick[e]),
                )
                self._trace_fh.write(line + "\n")

    def _record_beliefs(self) -> None:
        tw, th = self._node_totals()
        tw = 0.5 * (tw + np.swapaxes(tw, 1, 2))
        eig = np.linalg.eigvalsh(tw)
        ident = (eig[:, -1] > 0) & (eig[:, 0] > bp.IDENTIFIABLE_EIG_RATIO * eig[:, -1])
        mu = np.full((self.topology.num_nodes, 2), np.nan)
        cov = np.full((self.topology.num_nodes, 2, 2), np.nan)
        if ident.any():
            p = np.linalg.inv(tw[ident])
            p = 0.5 * (p + np.swapaxes(p, 1, 2))
            cov[ident] = p
            mu[ident] = np.einsum("kij,kj->ki", p, th[ident])
        r = self.reference - 1
        ident[r] = True
        mu[r] = self._beta_ref
        cov[r] = 0.0
        self._mu_hist.append(mu)
        self._cov_hist.append(cov)
        self._ident_hist.append(ident)

    def _step_async(self, cfg: ScheduleConfig, rng: np.random.Generator) -> None:
        ne = self.num_directed_edges
        send_active = self._active_nodes(cfg)[self._send - 1]
        fresh_w, fresh_h = self._fresh_outgoing()
        fresh_tick = np.full(ne, self.tick, dtype=int)
        u = rng.random(ne)
        p = self._edge_probs(cfg)

        if cfg.loss_policy == "refresh":
            deliver = send_active & (u < p)
            self._deliver(deliver, fresh_w, fresh_h, fresh_tick)
        else:
            if not self._hold_ready:
                self._pend_w = np.zeros((ne, 2, 2))
                self._pend_h = np.zeros((ne, 2))
                self._pend_tick = np.zeros(ne, dtype=int)
                self._pend_valid = np.zeros(ne, dtype=bool)
                self._hold_ready = True
            take = send_active & ~self._pend_valid
            self._pend_w[take] = fresh_w[take]
            self._pend_h[take] = fresh_h[take]
            self._pend_tick[take] = self.tick
            self._pend_valid |= take
            deliver = send_active & self._pend_valid & (u < p)
            self._deliver(deliver, self._pend_w, self._pend_h, self._pend_tick)
            self._pend_valid &= ~deliver

        self.tick += 1
        self._record_beliefs()

    def _step_sync(self, cfg: ScheduleConfig, rng: np.random.Generator) -> None:
        ne = self.num_directed_edges
        m = self.topology.num_nodes
        if not self._sync_ready:
            self._round = np.zeros(m, dtype=int)
            self._out_w = np.zeros((ne, 2, 2))
            self._out_h = np.zeros((ne, 2))
            self._out_tick = np.zeros(ne, dtype=int)
            self._delivered = np.zeros(ne, dtype=bool)
            self._arrival_round = np.full(ne, -1, dtype=int)
            need = np.ones(m, dtype=bool)
            self._sync_ready = True
        else:
            need = self._advance
            self._round[need] += 1

        if need.any():
            fresh_w, fresh_h = self._fresh_outgoing()
            pick = need[self._send - 1]
            self._out_w[pick] = fresh_w[pick]
            self._out_h[pick] = fresh_h[pick]
            self._out_tick[pick] = self.tick
            self._delivered[pick] = False

        u = rng.random(ne)
        p = self._edge_probs(cfg)
        ok = ~self._delivered & (u < p)
        self._deliver(ok, self._out_w, self._out_h, self._out_tick)
        self._delivered |= ok
        self._arrival_round[ok] = self._round[self._send[ok] - 1]

        self.tick += 1
        self._record_beliefs()

        # Round barrier: a node advances once every neighbor's
        # current-round message has arrived.
        arr_min = np.full(m, np.iinfo(int).max, dtype=int)
        np.minimum.at(arr_min, self._recv - 1, self._arrival_round)
        self._advance = arr_min >= self._round


def step(state: SimState, cfg: ScheduleConfig, rng: np.random.Generator) -> SimState:
    """Advance the network by one tick (in place); returns the state."""
    if state.tick >= cfg.max_ticks:
        raise ConfigurationError(f"tick budget {cfg.max_ticks} already spent")
    if cfg.mode == "asynchronous":
        state._step_async(cfg, rng)
    else:
        state._step_sync(cfg, rng)
    return state


@dataclass
class RunResult:
    """Recorded belief trajectory of one run.

    mu[l, k] and cov[l, k] hold node k+1's belief at tick l+1 (NaN while
    the node is not identifiable). converged_tick maps each node to the
    first tick from which its mean never again moved by conv_tol or more
    (None if it never settled within the run).
    """

    mu: np.ndarray
    cov: np.ndarray
    identifiable: np.ndarray
    converged_tick: dict[int, int | None]
    ticks: int

    def belief(self, tick: int, node: int) -> bp.Belief:
        l, k = tick - 1, node - 1
        return bp.Belief(
            p=self.cov[l, k].copy(),
            mu=self.mu[l, k].copy(),
            identifiable=bool(self.identifiable[l, k]),
        )

    def final_belief(self, node: int) -> bp.Belief:
        return self.belief(self.ticks, node)


def _sticky_converged_ticks(
    mu: np.ndarray, ident: np.ndarray, conv_tol: float
) -> dict[int, int | None]:
    """First tick from which each node's mean stays within conv_tol per
    tick through the end of the run. A one-tick dip below tolerance does
    not count: under loss or round barriers a belief can sit still for
    ticks while waiting for information, so only 'entered and stayed'
    indicates the iteration has settled."""
    ticks, m = mu.shape[0], mu.shape[1]
    out: dict[int, int | None] = {}
    for k in range(m):
        if ticks < 2:
            out[k + 1] = None
            continue
        both = ident[1:, k] & ident[:-1, k]
        delta = np.abs(mu[1:, k] - mu[:-1, k]).max(axis=1)
        ok = both & (delta < conv_tol)  # ok[t-2] covers tick t, t = 2..ticks
        if not ok[-1]:
            out[k + 1] = None
            continue
        bad = np.nonzero(~ok)[0]
        out[k + 1] = 2 if len(bad) == 0 else int(bad[-1]) + 3
    return out


def run(
    state: SimState,
    cfg: ScheduleConfig,
    conv_tol: float,
    rng: np.random.Generator,
    stop_early: bool = True,
    trace_path=None,
) -> RunResult:
    """Iterate step() until every node's belief mean moves less than
    conv_tol per tick (all nodes identifiable with usable means), or the
    tick budget runs out. An infinite conv_tol is trivially satisfied
    after the first tick. With stop_early=False the full budget runs
    regardless, which keeps traces complete for reporting."""
    if not conv_tol > 0:
        raise ConfigurationError("conv_tol must be positive")

    fh = None
    if trace_path is not None:
        opener = gzip.open if str(trace_path).endswith(".gz") else open
        fh = opener(trace_path, "wt")
        state.trace_to(fh)
    try:
        while state.tick < cfg.max_ticks:
            step(state, cfg, rng)
            if not stop_early:
                continue
            if not math.isfinite(conv_tol):
                break
            if state.tick >= 2:
                prev_i, last_i = state._ident_hist[-2], state._ident_hist[-1]
                prev_m, last_m = state._mu_hist[-2], state._mu_hist[-1]
                if (
                    prev_i.all()
                    and last_i.all()
                    and (np.abs(last_m[:, 0]) > bp.EXTRACT_EPS).all()
                    and np.abs(last_m - prev_m).max() < conv_tol
                ):
                    break
    finally:
        if fh is not None:
            fh.close()
            state.trace_to(None)

    mu = np.stack(state._mu_hist)
    cov = np.stack(state._cov_hist)
    ident = np.stack(state._ident_hist)
    if math.isfinite(conv_tol):
        converged = _sticky_converged_ticks(mu, ident, conv_tol)
    else:
        converged = {node: 1 for node in state.topology.node_ids()}
    return RunResult(
        mu=mu,
        cov=cov,
        identifiable=ident,
        converged_tick=converged,
        ticks=state.tick,
    )
