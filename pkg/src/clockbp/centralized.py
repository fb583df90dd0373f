"""Centralized verification oracles: joint weighted least squares over
all edges, and the estimation lower bound from the stacked linear model.

The joint weighted-least-squares estimator solves, with the reference
node's parameters fixed,

    min over beta_2..beta_M of
        sum_edges || a_ji beta_j + a_ij beta_i ||^2 / sigma2_edge,

via the normal equations of the stacked system. When the message-passing
iteration converges, its belief means must coincide with this solution;
that agreement is the package's central correctness test.

The lower bound keeps the fixed delays as nuisance parameters instead of
summing them away: each edge contributes the 2N-row block

    t_resp beta_resp - t_init beta_init - d * [1_N; -1_N] = noise,

where t_resp stacks [c_j(t2_n), -1] over [c_j(t3_n), -1] and t_init
stacks [c_i(t1_n), -1] over [c_i(t4_n), -1], and the noise covariance is
diag(s2_resp I_N, s2_init I_N). Stacking all edges into y = H xi + n with
xi = [beta_2; ...; beta_M; d], the bound for xi is [H^T Delta^-1 H]^-1;
mapping to per-node (offset, skew) uses the block-diagonal Jacobian with
per-node blocks [[-alpha*theta, alpha], [-alpha^2, 0]].

Dense linear algebra throughout: these are desk-scale oracles, not
production solvers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .clocks import TimestampSet, TrueNetworkState
from .errors import IdentifiabilityError
from .observations import ObservationPair


@dataclass(frozen=True)
class StackedEstimate:
    """Concatenated [beta_2; ...; beta_M] (the reference is excluded,
    pinned at its exact value)."""

    betas: np.ndarray

    @property
    def num_nodes(self) -> int:
        return len(self.betas) // 2 + 1

    def beta(self, node: int) -> np.ndarray:
        if node < 2 or node > self.num_nodes:
            raise ValueError(f"node {node} has no stacked estimate")
        k = 2 * (node - 2)
        return self.betas[k : k + 2]


@dataclass(frozen=True)
class CrbMatrix:
    """Lower-bound matrix over [theta_2, alpha_2, ..., theta_M, alpha_M]
    (offset before skew inside each per-node block)."""

    crb_zeta: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.crb_zeta.shape[0] // 2 + 1


def centralized_wls(
    observations: Iterable[ObservationPair], beta_ref: np.ndarray, reference: int = 1
) -> StackedEstimate:
    """Joint weighted least squares over all edges with the reference
    fixed, solved via the normal equations."""
    pairs = list(observations)
    beta_ref = np.asarray(beta_ref, float)
    num_nodes = max(max(p.node_i, p.node_j) for p in pairs)

    def col(node: int) -> int:
        return 2 * (node - 2) if node > reference else 2 * (node - 1)

    dim = 2 * (num_nodes - 1)
    gram = np.zeros((dim, dim))
    rhs = np.zeros(dim)
    for pair in pairs:
        for node, mat in ((pair.node_j, pair.a_ji), (pair.node_i, pair.a_ij)):
            other, omat = (
                (pair.node_i, pair.a_ij)
                if node == pair.node_j
                else (pair.node_j, pair.a_ji)
            )
            if node == reference:
                continue
            k = col(node)
            gram[k : k + 2, k : k + 2] += mat.T @ mat / pair.sigma2
            if other == reference:
                rhs[k : k + 2] -= mat.T @ (omat @ beta_ref) / pair.sigma2
            else:
                ko = col(other)
                gram[k : k + 2, ko : ko + 2] += mat.T @ omat / pair.sigma2

    eig = np.linalg.eigvalsh(0.5 * (gram + gram.T))
    if eig[0] <= 1e-12 * max(eig[-1], 0.0):
        raise IdentifiabilityError(
            "normal matrix is singular; the edge set does not tie every "
            "node to the reference"
        )
    return StackedEstimate(np.linalg.solve(gram, rhs))


def _timestamp_blocks(ts: TimestampSet) -> tuple[np.ndarray, np.ndarray]:
    """(t_resp, t_init): the 2N x 2 per-endpoint stacks of one edge."""
    ones = np.ones(ts.rounds)
    t_resp = np.block(
        [
            [np.column_stack([ts.c_resp_recv, -ones])],
            [np.column_stack([ts.c_resp_send, -ones])],
        ]
    )
    t_init = np.block(
        [
            [np.column_stack([ts.c_init_send, -ones])],
            [np.column_stack([ts.c_init_recv, -ones])],
        ]
    )
    return t_resp, t_init


def skew_offset_jacobian(alpha: float, theta: float) -> np.ndarray:
    """d(theta, alpha)/d(beta) evaluated at the true clock values."""
    return np.array([[-alpha * theta, alpha], [-(alpha**2), 0.0]])


def compute_crb(
    timestamps: Mapping[tuple[int, int], TimestampSet] | Iterable[TimestampSet],
    state: TrueNetworkState,
    reference: int = 1,
) -> CrbMatrix:
    """Assemble the stacked linear model over all edges and return the
    bound matrix for per-node (offset, skew), with fixed delays treated
    as nuisance parameters."""
    if isinstance(timestamps, Mapping):
        ts_list = [timestamps[k] for k in sorted(timestamps)]
    else:
        ts_list = sorted(
            timestamps, key=lambda t: (min(t.initiator, t.responder), max(t.initiator, t.responder))
        )
    m = state.num_nodes
    n_edges = len(ts_list)
    dim_beta = 2 * (m - 1)
    dim = dim_beta + n_edges

    def col(node: int) -> int:
        return 2 * (node - 2) if node > reference else 2 * (node - 1)

    rows = sum(2 * ts.rounds for ts in ts_list)
    h = np.zeros((rows, dim))
    wgt = np.empty(rows)
    r0 = 0
    for e, ts in enumerate(ts_list):
        n = ts.rounds
        t_resp, t_init = _timestamp_blocks(ts)
        if ts.responder != reference:
            h[r0 : r0 + 2 * n, col(ts.responder) : col(ts.responder) + 2] = t_resp
        if ts.initiator != reference:
            h[r0 : r0 + 2 * n, col(ts.initiator) : col(ts.initiator) + 2] = -t_init
        h[r0 : r0 + n, dim_beta + e] = -1.0
        h[r0 + n : r0 + 2 * n, dim_beta + e] = 1.0
        wgt[r0 : r0 + n] = 1.0 / state.noise_var(ts.responder)
        wgt[r0 + n : r0 + 2 * n] = 1.0 / state.noise_var(ts.initiator)
        r0 += 2 * n

    info = h.T @ (h * wgt[:, None])
    info = 0.5 * (info + info.T)
    eig = np.linalg.eigvalsh(info)
    if eig[0] <= 1e-13 * max(eig[-1], 0.0):
        raise IdentifiabilityError("stacked information matrix is singular")
    crb_xi = np.linalg.inv(info)
    crb_beta = crb_xi[:dim_beta, :dim_beta]

    jac = np.zeros((dim_beta, dim_beta))
    non_ref = [node for node in range(1, m + 1) if node != reference]
    for k, node in enumerate(sorted(non_ref)):
        clock = state.clock(node)
        jac[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = skew_offset_jacobian(
            clock.alpha, clock.theta
        )
    crb_zeta = jac @ crb_beta @ jac.T
    return CrbMatrix(0.5 * (crb_zeta + crb_zeta.T))


def crb_per_node(crb: CrbMatrix, node: int, reference: int = 1) -> tuple[float, float]:
    """(offset bound, skew bound) for one non-reference node."""
    if node == reference:
        raise ValueError("the reference node has no estimation bound")
    if node < 1 or node > crb.num_nodes:
        raise ValueError(f"node {node} outside 1..{crb.num_nodes}")
    k = 2 * (node - 2) if node > reference else 2 * (node - 1)
    return float(crb.crb_zeta[k, k]), float(crb.crb_zeta[k + 1, k + 1])
