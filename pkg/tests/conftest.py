"""Shared fixtures and generators for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from mislate.data import Dataset, Mode, ParamVector


def random_theta(rng: np.random.Generator, mode: Mode, k: int) -> ParamVector:
    """Admissible parameter draw with well-separated cells.

    Constraints: m0+m1 <= 0.9, |tau_z*| >= 0.1, p*_zv separated by >= 0.05,
    implied p_zv in [0.02, 0.98].
    """
    while True:
        m0 = rng.uniform(0.0, 0.9, size=2)
        m1 = rng.uniform(0.0, 0.9 - m0)
        if mode is Mode.CASE_II:
            m0[:] = m0[0]
            m1[:] = m1[0]
        tau = rng.uniform(0.1, 2.0, size=2) * rng.choice([-1.0, 1.0], size=2)
        p_star = rng.uniform(0.0, 1.0, size=(2, k))
        p_star.sort(axis=1)
        if np.any(np.diff(p_star, axis=1) < 0.05):
            continue
        p_star = p_star[:, rng.permutation(k)]
        s = 1.0 - m0 - m1
        p_zv = m0[:, None] + s[:, None] * p_star
        if np.any(p_zv < 0.02) or np.any(p_zv > 0.98):
            continue
        r = rng.uniform(0.2, 0.8)
        w = np.full((2, k), 1.0 / k)
        p_star_z = (w * p_star).sum(axis=1)
        dp = float(p_star_z[1] - p_star_z[0])
        if abs(dp) < 0.1:
            continue
        # the LATE coordinate is pinned down by the reduced form the other
        # coordinates imply (uniform weights over the exogenous support)
        beta = float(tau[1] * p_star_z[1] - tau[0] * p_star_z[0]) / dp
        return ParamVector(
            beta_star=beta,
            delta_p_star=dp,
            r=float(r),
            m0=m0,
            m1=m1,
            p_star=p_star,
            tau_star=tau,
            mode=mode,
        )


def simulate_from_theta(theta: ParamVector, n: int, rng: np.random.Generator,
                        noise_sd: float = 0.3,
                        error_by_v: bool = False) -> Dataset:
    """Latent DGP faithful to a CASE_II parameter vector.

    Y = T* tau_z* + 0.3 V + eps keeps the exclusion restriction exact.
    With error_by_v=True the misclassification rate varies with the
    exogenous variable, breaking the cross-cell error restriction the
    overidentified moments can detect.
    """
    z = (rng.random(n) < theta.r).astype(np.int8)
    v = rng.integers(0, theta.k, size=n).astype(np.int64)
    ps = theta.p_star[z.astype(np.int64), v]
    t_star = (rng.random(n) < ps).astype(np.int8)
    eps = rng.normal(0.0, noise_sd, size=n)
    if error_by_v:
        flip = 0.03 + 0.12 * v
    else:
        flip = np.where(t_star == 0, theta.m0[z.astype(np.int64)],
                        theta.m1[z.astype(np.int64)])
    t = np.where(rng.random(n) < flip, 1 - t_star, t_star).astype(np.int8)
    y = t_star * theta.tau_star[z.astype(np.int64)] + 0.3 * v + eps
    return Dataset(y=y, t=t, z=z, v=v, v_support=tuple(range(theta.k)),
                   mode=Mode.CASE_II)


@pytest.fixture
def rng():
    return np.random.default_rng(20240819)
