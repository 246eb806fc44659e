"""GMM estimation: point estimates, sandwich covariance, CIs, and J-test.

The objective Q(theta) = gbar(theta)' W gbar(theta) is minimised as a box
constrained nonlinear least-squares problem in the residuals W^{1/2} gbar,
warm-started from the closed-form identification solution. The constraint
m0 + m1 <= 1 - eps is enforced by projection plus a hinge penalty residual;
it is inactive at every interior solution.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, stats

from .data import Dataset, Mode, ParamVector, cell_stats, validate
from .exceptions import (
    MislateError,
    NotOveridentified,
    RankDeficient,
    StartFailure,
    ValidationError,
)
from .identification import identify
from .moments import MomentLayout, moment_jacobian, moment_matrix, sample_moments

EPS_CONSTRAINT = 1e-4
PENALTY = 10.0


@dataclass(frozen=True)
class GmmConfig:
    weighting: str = "identity"        # "identity" | "optimal"
    max_iter: int = 200
    tol_grad: float = 1e-10
    tol_step: float = 1e-12
    start: Optional[ParamVector] = None  # closed form when None
    ci_level: float = 0.95
    fd_step: float = 1e-6
    eps: float = EPS_CONSTRAINT

    def __post_init__(self):
        if self.weighting not in ("identity", "optimal"):
            raise ValueError(f"unknown weighting {self.weighting!r}")
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError("ci_level must be in (0,1)")
        if self.tol_grad <= 0 or self.tol_step <= 0 or self.fd_step <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class Estimate:
    theta_hat: ParamVector
    theta_flat: np.ndarray
    vcov: np.ndarray
    se: np.ndarray
    ci: np.ndarray                # (dim, 2)
    j_stat: float
    j_dof: int
    j_pvalue: Optional[float]
    objective: float
    converged: bool
    n: int
    layout: MomentLayout
    weighting: str
    param_names: list = field(default_factory=list)


def param_names(k: int, mode: Mode) -> list:
    names = ["beta_star", "delta_p_star", "r"]
    for z in (0, 1):
        if mode is Mode.CASE_I:
            names += [f"m0[z={z}]", f"m1[z={z}]"]
        else:
            names.append(f"m{z}")
        names += [f"p_star[z={z},k={k_}]" for k_ in range(k)]
        names.append(f"tau_star[z={z}]")
    return names


def _bounds(k: int, mode: Mode, dp_sign: float, eps: float) -> tuple:
    dim = 2 * k + 9 if mode is Mode.CASE_I else 2 * k + 7
    lo = np.full(dim, -np.inf)
    hi = np.full(dim, np.inf)
    # delta_p_star keeps the sign of the starting value
    if dp_sign >= 0:
        lo[1] = eps
    else:
        hi[1] = -eps
    lo[2], hi[2] = eps, 1.0 - eps
    pos = 3
    for _z in (0, 1):
        nm = 2 if mode is Mode.CASE_I else 1
        for _ in range(nm):
            lo[pos], hi[pos] = eps, 1.0 - eps
            pos += 1
        for _ in range(k):
            lo[pos], hi[pos] = eps, 1.0 - eps
            pos += 1
        pos += 1  # tau_star unbounded
    return lo, hi


def _m_indices(k: int, mode: Mode) -> list:
    """(m0, m1) coordinate index pairs, one per z-specific constraint."""
    if mode is Mode.CASE_I:
        return [(3, 4), (k + 6, k + 7)]
    return [(3, k + 5)]


def _project(x: np.ndarray, k: int, mode: Mode, eps: float) -> tuple:
    """Scale (m0, m1) onto m0+m1 <= 1-eps when violated; return the
    projected vector and per-constraint violations."""
    viols = []
    xp = x
    for i0, i1 in _m_indices(k, mode):
        tot = x[i0] + x[i1]
        v = max(0.0, tot - (1.0 - eps))
        viols.append(v)
        if v > 0.0:
            if xp is x:
                xp = x.copy()
            scale = (1.0 - eps) / tot
            xp[i0] *= scale
            xp[i1] *= scale
    return xp, np.array(viols)


def _clip_start(x: np.ndarray, lo: np.ndarray, hi: np.ndarray, k, mode, eps) -> np.ndarray:
    x = np.clip(x, lo + 1e-12, hi - 1e-12)
    x, _ = _project(x, k, mode, eps)
    return x


def _fallback_start(ds: Dataset, mode: Mode) -> ParamVector:
    """Moment-matched naive start used when closed-form identification fails:
    small misclassification, observed cell probabilities, naive Wald."""
    stats_ = cell_stats(ds)
    dp = stats_.p_z[1] - stats_.p_z[0]
    if dp == 0.0:
        raise StartFailure("observed first stage is exactly zero")
    beta = (stats_.mu_z[1] - stats_.mu_z[0]) / dp
    w = stats_.n_zv / stats_.n_zv.sum(axis=1, keepdims=True)
    tau = np.nansum(w * stats_.tau_zv, axis=1)
    m = np.full(2, 0.05)
    return ParamVector(
        beta_star=beta,
        delta_p_star=dp,
        r=stats_.r_hat,
        m0=m,
        m1=m,
        p_star=np.clip(stats_.p_zv, 1e-3, 1.0 - 1e-3),
        tau_star=tau,
        mode=mode,
    )


def starting_value(ds: Dataset, cfg: GmmConfig) -> ParamVector:
    if cfg.start is not None:
        return cfg.start
    try:
        return identify(cell_stats(ds), ds.mode).theta
    except MislateError:
        return _fallback_start(ds, ds.mode)


def _w_half(w: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(w)
    vals = np.clip(vals, 0.0, None)
    return vecs @ np.diag(np.sqrt(vals)) @ vecs.T


def _minimize(ds: Dataset, x0, w_half, k, mode, cfg):
    lo, hi = _bounds(k, mode, np.sign(x0[1]) or 1.0, cfg.eps)
    x0 = _clip_start(x0, lo, hi, k, mode, cfg.eps)
    n_con = len(_m_indices(k, mode))

    def residual(x):
        xp, viols = _project(x, k, mode, cfg.eps)
        theta = ParamVector.unpack(xp, k, mode)
        g = moment_matrix(ds, theta).mean(axis=0)
        return np.concatenate([w_half @ g, PENALTY * viols])

    res = optimize.least_squares(
        residual,
        x0,
        bounds=(lo, hi),
        method="trf",
        xtol=cfg.tol_step,
        gtol=cfg.tol_grad,
        ftol=cfg.tol_step,
        max_nfev=cfg.max_iter * (x0.size + 1),
    )
    x_hat, _ = _project(res.x, k, mode, cfg.eps)
    core = res.fun[: res.fun.size - n_con]
    return x_hat, float(core @ core), res.status > 0


def sandwich_cov(G: np.ndarray, W: np.ndarray, Omega: np.ndarray, n: int) -> np.ndarray:
    """(G'WG)^-1 G'W Omega W G (G'WG)^-1 / n."""
    if np.linalg.matrix_rank(G) < G.shape[1]:
        raise RankDeficient("moment Jacobian is rank deficient")
    gwg = G.T @ W @ G
    bread = np.linalg.inv(gwg)
    meat = G.T @ W @ Omega @ W @ G
    v = bread @ meat @ bread / n
    return (v + v.T) / 2.0


def confidence_intervals(theta_flat: np.ndarray, vcov: np.ndarray, level: float) -> np.ndarray:
    """Per-parameter normal intervals theta_j +/- z * se_j, shape (dim, 2)."""
    zcrit = stats.norm.ppf(0.5 + level / 2.0)
    se = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
    return np.column_stack([theta_flat - zcrit * se, theta_flat + zcrit * se])


def estimate(ds: Dataset, cfg: GmmConfig = GmmConfig()) -> Estimate:
    """Full GMM pipeline: start, minimise, (optionally) re-weight, infer."""
    problems = validate(ds)
    if problems:
        raise ValidationError("; ".join(problems))
    k, mode = ds.k, ds.mode
    layout = MomentLayout(k, mode)

    theta0 = starting_value(ds, cfg)
    x0 = theta0.pack()
    w_identity = np.eye(layout.n_moments)
    x_hat, objective, converged = _minimize(ds, x0, w_identity, k, mode, cfg)

    theta_hat = ParamVector.unpack(x_hat, k, mode)
    ev = sample_moments(ds, theta_hat)
    omega = ev.omega()
    weight = w_identity
    if cfg.weighting == "optimal":
        weight = np.linalg.pinv(omega)
        x_hat, objective, converged = _minimize(
            ds, x_hat, _w_half(weight), k, mode, cfg
        )
        theta_hat = ParamVector.unpack(x_hat, k, mode)
        ev = sample_moments(ds, theta_hat)
        omega = ev.omega()

    G = moment_jacobian(ds, theta_hat, step=cfg.fd_step)
    vcov = sandwich_cov(G, weight, omega, ds.n)
    se = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
    ci = confidence_intervals(x_hat, vcov, cfg.ci_level)

    gbar = ev.gbar
    omega_inv = np.linalg.pinv(omega)
    j_stat = float(ds.n * gbar @ omega_inv @ gbar)
    j_dof = layout.n_overid
    j_pvalue = (
        float(stats.chi2.sf(j_stat, j_dof))
        if (cfg.weighting == "optimal" and j_dof > 0)
        else None
    )

    return Estimate(
        theta_hat=theta_hat,
        theta_flat=x_hat,
        vcov=vcov,
        se=se,
        ci=ci,
        j_stat=j_stat,
        j_dof=j_dof,
        j_pvalue=j_pvalue,
        objective=objective,
        converged=converged,
        n=ds.n,
        layout=layout,
        weighting=cfg.weighting,
        param_names=param_names(k, mode),
    )


def j_test(est: Estimate, require_pvalue: bool = False) -> tuple:
    """Overidentification test (stat, dof, pvalue); pvalue is None at dof 0.

    With require_pvalue, a just-identified model raises NotOveridentified
    instead of returning the undefined marker.
    """
    if est.j_dof == 0:
        if require_pvalue:
            raise NotOveridentified("model is just-identified (dof = 0)")
        return est.j_stat, 0, None
    if est.weighting != "optimal":
        raise ValidationError(
            "J-test requires two-step optimal weighting in an overidentified model"
        )
    return est.j_stat, est.j_dof, float(stats.chi2.sf(est.j_stat, est.j_dof))
