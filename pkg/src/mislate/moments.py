"""GMM moment function for the misclassified-treatment LATE model.

The moment vector has 4K+3 components: the instrument mean, one treatment
probability moment and one outcome-contrast moment per (z, v_k) cell, the
true first-stage moment, and the LATE moment. In CASE_II the z-specific
misclassification probabilities are replaced by shared (m0, m1), which
shrinks the parameter vector but not the moment vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Mode, Observation, ParamVector
from .exceptions import DomainError


@dataclass(frozen=True)
class MomentLayout:
    """Index map from moment labels to vector positions."""

    k: int
    mode: Mode

    @property
    def n_moments(self) -> int:
        return 4 * self.k + 3

    @property
    def n_params(self) -> int:
        return 2 * self.k + 9 if self.mode is Mode.CASE_I else 2 * self.k + 7

    @property
    def n_overid(self) -> int:
        return self.n_moments - self.n_params

    def r_index(self) -> int:
        return 0

    def p_index(self, z: int, k: int) -> int:
        return 1 + z * self.k + k

    def tau_index(self, z: int, k: int) -> int:
        return 1 + 2 * self.k + z * self.k + k

    def dp_index(self) -> int:
        return 1 + 4 * self.k

    def beta_index(self) -> int:
        return 2 + 4 * self.k

    def labels(self) -> list:
        out = ["r"]
        out += [f"p[z={z},k={k}]" for z in (0, 1) for k in range(self.k)]
        out += [f"tau[z={z},k={k}]" for z in (0, 1) for k in range(self.k)]
        out += ["delta_p_star", "beta_star"]
        return out


@dataclass(frozen=True)
class MomentEval:
    gbar: np.ndarray
    g_rows: np.ndarray  # (n, 4K+3) per-observation moment rows
    layout: MomentLayout

    def omega(self) -> np.ndarray:
        """Uncentered second-moment matrix (1/n) sum g_i g_i'."""
        n = self.g_rows.shape[0]
        return self.g_rows.T @ self.g_rows / n


def _check_domain(theta: ParamVector):
    if not 0.0 < theta.r < 1.0:
        raise DomainError(f"r-moment: r={theta.r} outside (0,1)")
    s = theta.s
    for z in (0, 1):
        if s[z] <= 0.0:
            raise DomainError(f"p-moment: m0+m1 >= 1 at z={z}")
    if theta.delta_p_star == 0.0:
        raise DomainError("beta-moment: delta_p_star is zero")
    q = theta.m0[:, None] + s[:, None] * theta.p_star
    if np.any(q <= 0.0) or np.any(q >= 1.0):
        raise DomainError("tau-moment: cell denominator outside (0,1)")
    return q


def moment_matrix(ds: Dataset, theta: ParamVector) -> np.ndarray:
    """Per-observation moment rows, shape (n, 4K+3)."""
    k = ds.k
    layout = MomentLayout(k, theta.mode)
    q = _check_domain(theta)
    s = theta.s

    y, t, z, v = ds.y, ds.t.astype(float), ds.z.astype(float), ds.v
    n = ds.n
    g = np.zeros((n, layout.n_moments))
    g[:, 0] = theta.r - z

    zi = ds.z.astype(np.int64)
    cell_q = q[zi, v]
    cell_ps = theta.p_star[zi, v]
    cell_m0 = theta.m0[zi]
    cell_m1 = theta.m1[zi]
    cell_s = s[zi]
    cell_tau = theta.tau_star[zi]

    p_val = cell_m0 + cell_s * cell_ps - t
    tau_val = (
        cell_tau
        + (y * t - (1.0 - cell_m1) * cell_ps * cell_tau) / cell_q
        - (y * (1.0 - t) + (1.0 - cell_m0) * (1.0 - cell_ps) * cell_tau)
        / (1.0 - cell_q)
    )
    rows = np.arange(n)
    g[rows, 1 + zi * k + v] = p_val
    g[rows, 1 + 2 * k + zi * k + v] = tau_val

    g[:, layout.dp_index()] = theta.delta_p_star - (
        (t * z / theta.r - theta.m0[1]) / s[1]
        - (t * (1.0 - z) / (1.0 - theta.r) - theta.m0[0]) / s[0]
    )
    g[:, layout.beta_index()] = theta.beta_star - (
        y * z / theta.r - y * (1.0 - z) / (1.0 - theta.r)
    ) / theta.delta_p_star
    return g


def moment_vector(obs: Observation, theta: ParamVector, layout: MomentLayout) -> np.ndarray:
    """Moment vector g(X, theta) for a single observation."""
    ds = Dataset(
        y=np.array([obs.y]),
        t=np.array([obs.t]),
        z=np.array([obs.z]),
        v=np.array([obs.v]),
        v_support=tuple(range(layout.k)),
        mode=layout.mode,
    )
    return moment_matrix(ds, theta)[0]


def sample_moments(ds: Dataset, theta: ParamVector) -> MomentEval:
    """Sample mean of the moment function with per-row access."""
    g = moment_matrix(ds, theta)
    return MomentEval(gbar=g.mean(axis=0), g_rows=g, layout=MomentLayout(ds.k, theta.mode))


def gbar(ds: Dataset, theta_flat: np.ndarray, k: int, mode: Mode) -> np.ndarray:
    """Sample moment mean from a packed coordinate vector."""
    theta = ParamVector.unpack(theta_flat, k, mode)
    return moment_matrix(ds, theta).mean(axis=0)


def moment_jacobian(ds: Dataset, theta: ParamVector, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of the sample moment mean with
    respect to the packed parameter vector; column j uses
    h_j = step * max(1, |theta_j|)."""
    x0 = theta.pack()
    k, mode = theta.k, theta.mode
    layout = MomentLayout(k, mode)
    jac = np.empty((layout.n_moments, x0.size))
    for j in range(x0.size):
        h = step * max(1.0, abs(x0[j]))
        xp = x0.copy()
        xm = x0.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (gbar(ds, xp, k, mode) - gbar(ds, xm, k, mode)) / (2.0 * h)
    return jac
