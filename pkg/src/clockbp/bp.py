"""Gaussian message passing in information form.

Every quantity lives in information (natural-parameter) form: a message
or prior is a 2x2 information matrix ``w`` (inverse covariance) and a
2-vector ``h`` (``w`` times the mean). The zero pair encodes the
non-informative state, so cold starts need no infinities.

The node-to-node update: a sender j with accumulated information
(X, b) from its prior and from all neighbors except the recipient i
sends, over an edge with sender matrix a_s, receiver matrix a_r and row
variance s2,

    W = (1/s2) * a_r^T [I - a_s (s2 X + a_s^T a_s)^{-1} a_s^T] a_r
    h = -a_r^T a_s (s2 X + a_s^T a_s)^{-1} b.

These are the matrix-inversion-lemma forms of the Gaussian
marginalization of the edge likelihood against N(X^{-1} b, X^{-1}); they
remain exact when X is singular or zero. Only the three Gram matrices
a_r^T a_r, a_s^T a_s and a_r^T a_s enter, so the whole update is 2x2
arithmetic regardless of the number of exchange rounds.

The reference node holds an exact (delta) prior, which cannot be written
as finite information; its outgoing message has the closed form
W = (1/s2) a_r^T a_r, h = -(1/s2) a_r^T a_s beta_ref, constant over the
entire run, and coincides with the generic update in the limit of
infinitely strong sender information.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateEstimateError
from .observations import ObservationPair

# A belief is identifiable when its total information matrix is positive
# definite up to this relative eigenvalue cutoff.
IDENTIFIABLE_EIG_RATIO = 1e-10
# Leading belief-mean components below this magnitude cannot be inverted
# into a skew estimate.
EXTRACT_EPS = 1e-12
# Messages whose information matrix is this small relative to the edge's
# information ceiling are snapped to the exact non-informative pair.
SNAP_RTOL = 1e-13

ZERO_W = np.zeros((2, 2))
ZERO_H = np.zeros(2)


@dataclass(frozen=True)
class InfoMessage:
    """One node-to-node message: information matrix w (symmetric PSD) and
    information vector h. w == 0 implies h == 0 (non-informative)."""

    w: np.ndarray
    h: np.ndarray

    @classmethod
    def noninformative(cls) -> "InfoMessage":
        return cls(ZERO_W.copy(), ZERO_H.copy())


@dataclass(frozen=True)
class PriorInfo:
    """Per-node prior in information form.

    The reference node uses ``is_delta`` with the exact ``beta`` attached;
    its infinite information never enters a finite sum. All other nodes
    default to the non-informative pair (w = 0, h = 0).
    """

    w: np.ndarray
    h: np.ndarray
    is_delta: bool = False
    beta: np.ndarray | None = None

    def __post_init__(self):
        if self.is_delta:
            if self.beta is None:
                raise ValueError("delta prior requires an exact beta")
        elif not np.any(self.w) and np.any(self.h):
            raise ValueError("zero information matrix with nonzero h is invalid")

    @classmethod
    def noninformative(cls) -> "PriorInfo":
        return cls(ZERO_W.copy(), ZERO_H.copy())

    @classmethod
    def delta(cls, beta: np.ndarray) -> "PriorInfo":
        return cls(ZERO_W.copy(), ZERO_H.copy(), is_delta=True, beta=np.asarray(beta, float))


@dataclass(frozen=True)
class Belief:
    """Per-node posterior: covariance p, mean mu, and whether the
    accumulated information was positive definite. The reference node's
    pinned belief carries p = 0 by convention (exact knowledge)."""

    p: np.ndarray
    mu: np.ndarray
    identifiable: bool


def _sym(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + np.swapaxes(mat, -1, -2))


def aggregate_info(
    prior: PriorInfo | None, incoming: Iterable[InfoMessage]
) -> tuple[np.ndarray, np.ndarray]:
    """Sum of prior and message information: X = w_p + sum w_k,
    b = h_p + sum h_k. All-zero inputs are fine (empty sum)."""
    if prior is not None and prior.is_delta:
        raise ValueError("delta priors never enter information sums; "
                         "use reference_outgoing for the reference node")
    x = ZERO_W.copy() if prior is None else prior.w.copy()
    b = ZERO_H.copy() if prior is None else prior.h.copy()
    for msg in incoming:
        x = x + msg.w
        b = b + msg.h
    return x, b


def outgoing_batch(
    gram_recv: np.ndarray,
    gram_send: np.ndarray,
    cross: np.ndarray,
    sigma2: np.ndarray,
    x: np.ndarray,
    b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized message update over any batch shape.

    gram_recv = a_r^T a_r, gram_send = a_s^T a_s, cross = a_r^T a_s, all
    (..., 2, 2); sigma2 (...,); x (..., 2, 2); b (..., 2). Returns the
    symmetrized W and h, with numerically-zero messages snapped to the
    exact non-informative pair so downstream identifiability checks never
    see rounding dust.
    """
    sigma2 = np.asarray(sigma2, float)
    s2 = sigma2[..., None, None]
    m = s2 * x + gram_send
    sol_k = np.linalg.solve(m, np.swapaxes(cross, -1, -2))
    w = _sym((gram_recv - cross @ sol_k) / s2)
    h = -(cross @ np.linalg.solve(m, b[..., None]))[..., 0]

    ceiling = np.abs(gram_recv).max(axis=(-1, -2)) / sigma2
    tiny = np.abs(w).max(axis=(-1, -2)) <= SNAP_RTOL * ceiling
    w = np.where(tiny[..., None, None], 0.0, w)
    h = np.where(tiny[..., None], 0.0, h)
    return w, h


def compute_outgoing(
    obs: ObservationPair, sender: int, x: np.ndarray, b: np.ndarray
) -> InfoMessage:
    """Message from ``sender`` to the other endpoint of ``obs``, given the
    sender's aggregated information (x, b) excluding the recipient's own
    previous message."""
    a_send, a_recv = obs.oriented(sender)
    w, h = outgoing_batch(
        a_recv.T @ a_recv,
        a_send.T @ a_send,
        a_recv.T @ a_send,
        obs.sigma2,
        np.asarray(x, float),
        np.asarray(b, float),
    )
    return InfoMessage(w, h)


def reference_outgoing(
    obs: ObservationPair, reference: int, beta_ref: np.ndarray
) -> InfoMessage:
    """Constant message from the reference node (exact prior):
    W = (1/s2) a_r^T a_r, h = -(1/s2) a_r^T a_s beta_ref."""
    a_send, a_recv = obs.oriented(reference)
    w = _sym(a_recv.T @ a_recv / obs.sigma2)
    h = -(a_recv.T @ (a_send @ np.asarray(beta_ref, float))) / obs.sigma2
    return InfoMessage(w, h)


def compute_belief(
    prior: PriorInfo | None, incoming: Sequence[InfoMessage]
) -> Belief:
    """Posterior from the latest delivered messages. Non-identifiability
    (information matrix not positive definite) is a valid state."""
    t, u = aggregate_info(prior, incoming)
    t = _sym(t)
    eig = np.linalg.eigvalsh(t)
    if eig[-1] <= 0 or eig[0] <= IDENTIFIABLE_EIG_RATIO * eig[-1]:
        return Belief(p=np.full((2, 2), np.nan), mu=np.full(2, np.nan), identifiable=False)
    p = _sym(np.linalg.inv(t))
    return Belief(p=p, mu=p @ u, identifiable=True)


def extract_clock_estimate(belief: Belief) -> tuple[float, float]:
    """Invert the belief mean back to clock parameters:
    alpha_hat = 1/mu[0], theta_hat = mu[1]/mu[0]."""
    if not belief.identifiable:
        raise DegenerateEstimateError("belief carries no usable information")
    lead = belief.mu[0]
    if abs(lead) < EXTRACT_EPS:
        raise DegenerateEstimateError(
            f"leading belief-mean component {lead!r} is numerically zero"
        )
    return float(1.0 / lead), float(belief.mu[1] / lead)


# --- simulated wire format -------------------------------------------------
#
# One delivered message is serialized as the whitespace-separated record
#   sender receiver w00 w01 w11 h0 h1 tick
# where tick is the tick the message content was computed at.

def format_wire_line(sender: int, receiver: int, msg: InfoMessage, tick: int) -> str:
    w, h = msg.w, msg.h
    return (
        f"{sender} {receiver} {w[0, 0]!r} {w[0, 1]!r} {w[1, 1]!r} "
        f"{h[0]!r} {h[1]!r} {tick}"
    )


def parse_wire_line(line: str) -> tuple[int, int, InfoMessage, int]:
    parts = line.split()
    if len(parts) != 8:
        raise ValueError(f"wire record needs 8 fields, got {len(parts)}")
    sender, receiver = int(parts[0]), int(parts[1])
    w00, w01, w11, h0, h1 = map(float, parts[2:7])
    tick = int(parts[7])
    msg = InfoMessage(np.array([[w00, w01], [w01, w11]]), np.array([h0, h1]))
    return sender, receiver, msg, tick
