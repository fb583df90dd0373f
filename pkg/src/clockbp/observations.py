"""Per-edge observation matrices, the only data the estimator consumes.

Each node's clock is re-parameterized as beta = [1/alpha, theta/alpha];
in that basis the summed forward/backward exchange equations become
linear. For an edge with initiator i and responder j, round n yields

    [c_j(t2_n) + c_j(t3_n), -2] . beta_j  -  [c_i(t1_n) + c_i(t4_n), -2] . beta_i
        = w_{j,n} - w_{i,n},

so stacking the N rounds gives a_ji @ beta_j + a_ij @ beta_i = z with
a_ij carrying a built-in minus sign and z zero-mean Gaussian with
variance sigma2_i + sigma2_j per row (the fixed delay cancels exactly).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clocks import ClockParams, TimestampSet
from .errors import ConfigurationError, DegenerateObservationError

# Relative singular-value cutoff below which a matrix counts as rank
# deficient; float timestamps rule out an exact rank test.
RANK_RTOL = 1e-12


def beta_from_clock(clock: ClockParams) -> np.ndarray:
    """Linearizing reparameterization [1/alpha, theta/alpha]."""
    return np.array([1.0 / clock.alpha, clock.theta / clock.alpha])


def clock_from_beta(beta: np.ndarray) -> ClockParams:
    """Inverse of beta_from_clock."""
    return ClockParams(alpha=1.0 / beta[0], theta=beta[1] / beta[0])


@dataclass(frozen=True)
class ObservationPair:
    """Stacked observation matrices for one edge.

    a_ji multiplies the responder's beta, row n = [c_j(t2)+c_j(t3), -2];
    a_ij multiplies the initiator's beta, row n = -[c_i(t1)+c_i(t4), -2].
    sigma2 is the per-row residual variance sigma2_i + sigma2_j. Both
    matrices have full column rank (checked at construction).
    """

    node_i: int
    node_j: int
    a_ji: np.ndarray
    a_ij: np.ndarray
    sigma2: float

    @property
    def rounds(self) -> int:
        return self.a_ji.shape[0]

    @property
    def edge(self) -> tuple[int, int]:
        return (min(self.node_i, self.node_j), max(self.node_i, self.node_j))

    def oriented(self, sender: int) -> tuple[np.ndarray, np.ndarray]:
        """(matrix multiplying the sender's beta, matrix multiplying the
        receiver's beta) for a message sent by ``sender`` on this edge."""
        if sender == self.node_j:
            return self.a_ji, self.a_ij
        if sender == self.node_i:
            return self.a_ij, self.a_ji
        raise ValueError(f"node {sender} is not an endpoint of edge {self.edge}")


def _check_full_rank(mat: np.ndarray, label: str) -> None:
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[-1] <= RANK_RTOL * sv[0]:
        raise DegenerateObservationError(
            f"{label} is rank deficient (singular-value ratio "
            f"{sv[-1] / sv[0]:.3g}); timestamp sums are (near-)identical "
            "across rounds"
        )


def build_observation(
    ts: TimestampSet, sigma2_i: float, sigma2_j: float
) -> ObservationPair:
    """Assemble the observation pair for one edge from its timestamps."""
    if ts.rounds < 2:
        raise ConfigurationError("need at least 2 rounds per edge")
    resp_sum = ts.c_resp_recv + ts.c_resp_send
    init_sum = ts.c_init_send + ts.c_init_recv
    a_ji = np.column_stack([resp_sum, np.full(ts.rounds, -2.0)])
    a_ij = -np.column_stack([init_sum, np.full(ts.rounds, -2.0)])
    _check_full_rank(a_ji, f"a_ji on edge ({ts.initiator}, {ts.responder})")
    _check_full_rank(a_ij, f"a_ij on edge ({ts.initiator}, {ts.responder})")
    return ObservationPair(
        node_i=ts.initiator,
        node_j=ts.responder,
        a_ji=a_ji,
        a_ij=a_ij,
        sigma2=float(sigma2_i + sigma2_j),
    )
