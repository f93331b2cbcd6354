"""Global optimality certificates and rank adaptation.

A converged factor pair is checked against the first-order conditions of
the convex relaxation it factors: the background gradient must vanish,
every column must satisfy the scaling identity ``U_i^T Z V_i =
theta(U_i, V_i)`` for ``Z = -(1/lam) * A^T(residual)``, and the penalty's
polar at Z must not exceed one.  The polar has closed forms for pure
l2/l2 and l1/l1 column gauges; for composite gauges a multi-start
projected ascent produces a certified lower bound, which can refute
optimality but not prove it.

When a candidate fails the polar test, the polar maximizer is a descent
direction: placed into a zero column (found, created by a null
combination of the column outer products, or appended) it strictly
decreases the objective, which is the escape step of the rank-adaptive
loop in :func:`run_meta`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .regularizers import GaugeSpec, Rank1Regularizer, eval_gauge, eval_theta
from .solver import (
    FactorModel,
    ProblemSpec,
    SolverConfig,
    SolveTrace,
    build_init,
    objective,
    residual,
    run,
)

__all__ = [
    "PolarEstimate",
    "CertificateReport",
    "MetaConfig",
    "MetaAction",
    "MetaRunConfig",
    "RoundRecord",
    "MetaResult",
    "polar_exact_l2l2",
    "polar_exact_l1l1",
    "polar_lower_bound",
    "polar_estimate",
    "check_certificate",
    "find_redundancy",
    "meta_step",
    "run_meta",
]


@dataclass(frozen=True)
class PolarEstimate:
    """Value and maximizer of ``sup u^T Z v`` over ``theta(u, v) <= 1``.

    ``exact`` marks closed-form evaluations; otherwise the value is a
    lower bound attained by the reported feasible pair.
    """

    value: float
    u: np.ndarray
    v: np.ndarray
    exact: bool
    restarts_used: int = 0


def _is_pure_l2(g: GaugeSpec) -> bool:
    return g.nu1 == 0 and g.nu_tv == 0 and g.nu2 > 0 and not g.nonneg


def _is_pure_l1(g: GaugeSpec) -> bool:
    return g.nu1 > 0 and g.nu_tv == 0 and g.nu2 == 0 and not g.nonneg


def polar_exact_l2l2(z: np.ndarray, tol: float = 1e-10, max_iter: int = 20000) -> PolarEstimate:
    """Top singular value and pair of Z by power iteration on ``Z^T Z``."""
    z = np.asarray(z, dtype=float)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(z.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        w = z @ v
        s = float(np.linalg.norm(w))
        if s == 0.0:
            return PolarEstimate(0.0, np.zeros(z.shape[0]), v, exact=True)
        v_next = z.T @ (w / s)
        nv = float(np.linalg.norm(v_next))
        v = v_next / nv
        if abs(s - sigma) <= tol * max(1.0, s):
            sigma = s
            break
        sigma = s
    u = z @ v
    nu = float(np.linalg.norm(u))
    if nu > 0:
        u = u / nu
    return PolarEstimate(sigma, u, v, exact=True)


def polar_exact_l1l1(z: np.ndarray) -> PolarEstimate:
    """Largest absolute entry of Z with the matching signed basis pair."""
    z = np.asarray(z, dtype=float)
    i, j = np.unravel_index(np.argmax(np.abs(z)), z.shape)
    u = np.zeros(z.shape[0])
    v = np.zeros(z.shape[1])
    u[i] = 1.0 if z[i, j] >= 0 else -1.0
    v[j] = 1.0
    return PolarEstimate(float(abs(z[i, j])), u, v, exact=True)


def _feasible_scale(reg: Rank1Regularizer, u: np.ndarray, v: np.ndarray):
    """Scale (u, v) onto the unit level set of theta, or None if degenerate."""
    c = eval_theta(reg, u, v)
    if not math.isfinite(c) or c <= 1e-300:
        return None
    s = 1.0 / math.sqrt(c)
    return s * u, s * v


def polar_lower_bound(
    z: np.ndarray,
    reg: Rank1Regularizer,
    restarts: int = 20,
    seed: int = 0,
    max_iters: int = 500,
) -> PolarEstimate:
    """Multi-start projected-ascent lower bound on the penalty polar.

    Every iterate is rescaled onto the unit level set of theta before its
    value is recorded, so the best value found is attained by a feasible
    pair and genuinely bounds the polar from below.  One start uses the
    top singular pair of Z (projected when the gauges are one-sided), the
    rest are random.
    """
    z = np.asarray(z, dtype=float)
    rng = np.random.default_rng(seed)
    d, n = z.shape
    best_val = 0.0
    best_u = np.zeros(d)
    best_v = np.zeros(n)

    def ascend(u, v):
        nonlocal best_val, best_u, best_v
        pair = _feasible_scale(reg, u, v)
        if pair is None:
            return
        u, v = pair
        val = float(u @ z @ v)
        eta = 0.1
        for _ in range(max_iters):
            gu = z @ v
            gv = z.T @ u
            u1 = u + eta * gu
            v1 = v + eta * gv
            if reg.u_gauge.nonneg:
                u1 = np.maximum(u1, 0.0)
            if reg.v_gauge.nonneg:
                v1 = np.maximum(v1, 0.0)
            pair = _feasible_scale(reg, u1, v1)
            if pair is None:
                eta *= 0.5
                if eta < 1e-14:
                    break
                continue
            u1, v1 = pair
            val1 = float(u1 @ z @ v1)
            if val1 > val + 1e-14 * max(1.0, abs(val)):
                u, v, val = u1, v1, val1
                eta *= 1.2
            else:
                eta *= 0.5
                if eta < 1e-14:
                    break
        if val > best_val:
            best_val, best_u, best_v = val, u, v

    # informed start from the leading singular pair
    top = polar_exact_l2l2(z, tol=1e-8, max_iter=2000)
    starts = [(top.u.copy(), top.v.copy()), (-top.u.copy(), -top.v.copy())]
    for _ in range(max(restarts - len(starts), 0)):
        starts.append((rng.standard_normal(d), rng.standard_normal(n)))
    for u0, v0 in starts[: max(restarts, len(starts))]:
        if reg.u_gauge.nonneg:
            u0 = np.abs(u0)
        if reg.v_gauge.nonneg:
            v0 = np.abs(v0)
        ascend(u0, v0)
    return PolarEstimate(best_val, best_u, best_v, exact=False, restarts_used=restarts)


def polar_estimate(
    z: np.ndarray, reg: Rank1Regularizer, restarts: int = 20, seed: int = 0
) -> PolarEstimate:
    """Polar of the column penalty at Z: closed form when available.

    For pure l2/l2 gauges the polar is ``sigma_max(Z) / (nu_u2 * nu_v2)``;
    for pure l1/l1 it is ``max |Z_ij| / (nu_u1 * nu_v1)``.  Product and sum
    pairings share these values.  Everything else falls back to the
    projected-ascent lower bound.
    """
    gu, gv = reg.u_gauge, reg.v_gauge
    if _is_pure_l2(gu) and _is_pure_l2(gv):
        base = polar_exact_l2l2(z)
        scale = gu.nu2 * gv.nu2
        return PolarEstimate(
            base.value / scale, base.u / gu.nu2, base.v / gv.nu2, exact=True
        )
    if _is_pure_l1(gu) and _is_pure_l1(gv):
        base = polar_exact_l1l1(z)
        scale = gu.nu1 * gv.nu1
        return PolarEstimate(
            base.value / scale, base.u / gu.nu1, base.v / gv.nu1, exact=True
        )
    return polar_lower_bound(z, reg, restarts=restarts, seed=seed)


@dataclass(frozen=True)
class CertificateReport:
    """First-order optimality evidence for a factor model.

    ``gap_bound`` bounds the objective excess over the global optimum of
    the convex relaxation using the polar overshoot; it is meaningful
    only when the polar is exact, and zero overshoot means certified
    global optimality.  ``m_x`` and ``m_q`` record any strong-convexity
    moduli supplied for the loss (they tighten the true bound but are
    not folded into ``gap_bound``).
    """

    objective_value: float
    lam: float
    grad_q_norm: float
    scaling_residuals: np.ndarray
    polar: PolarEstimate
    gap_bound: float
    m_x: float = 0.0
    m_q: float = 0.0

    @property
    def max_scaling_residual(self) -> float:
        if self.scaling_residuals.size == 0:
            return 0.0
        return float(np.max(self.scaling_residuals))

    def certified(
        self,
        tol_q: float = 1e-6,
        tol_scaling: float = 1e-6,
        tol_polar: float = 1e-6,
    ) -> Optional[bool]:
        """True/False under the given tolerances; None when the polar is
        only a lower bound (which can refute but not certify)."""
        conditions_ok = (
            self.grad_q_norm <= tol_q and self.max_scaling_residual <= tol_scaling
        )
        if self.polar.value > 1.0 + tol_polar:
            return False
        if not self.polar.exact:
            return None
        return bool(conditions_ok)

    def to_dict(self) -> dict:
        return {
            "objective_value": self.objective_value,
            "lam": self.lam,
            "grad_q_norm": self.grad_q_norm,
            "scaling_residuals": self.scaling_residuals.tolist(),
            "max_scaling_residual": self.max_scaling_residual,
            "polar_value": self.polar.value,
            "polar_exact": self.polar.exact,
            "gap_bound": self.gap_bound,
            "m_x": self.m_x,
            "m_q": self.m_q,
        }


def certificate_z(p: ProblemSpec, m: FactorModel) -> np.ndarray:
    """Scaled negative loss gradient ``Z = -(1/lam) A^T(residual)``."""
    return -p.op.adjoint(residual(p, m)) / p.lam


def check_certificate(
    p: ProblemSpec,
    m: FactorModel,
    restarts: int = 20,
    seed: int = 0,
    m_x: float = 0.0,
    m_q: float = 0.0,
) -> CertificateReport:
    """Evaluate the three first-order conditions at ``m``.

    The reported ``gap_bound`` is ``f * max(polar - 1, 0)``: the penalty
    value of the candidate is bounded by ``f / lam``, which turns the
    polar overshoot into an objective-gap bound without knowing the
    optimum.
    """
    r = residual(p, m)
    z = -p.op.adjoint(r) / p.lam
    if p.bg_op is not None:
        grad_q_norm = float(np.linalg.norm(p.bg_op.adjoint(r)))
    else:
        grad_q_norm = 0.0
    k = m.rank
    resids = np.zeros(k)
    for i in range(k):
        th = eval_theta(p.reg, m.U[:, i], m.V[:, i])
        lhs = float(m.U[:, i] @ z @ m.V[:, i])
        resids[i] = abs(lhs - th) / max(1.0, th)
    pol = polar_estimate(z, p.reg, restarts=restarts, seed=seed)
    f = objective(p, m)
    gap = f * max(pol.value - 1.0, 0.0)
    return CertificateReport(
        objective_value=f,
        lam=p.lam,
        grad_q_norm=grad_q_norm,
        scaling_residuals=resids,
        polar=pol,
        gap_bound=gap,
        m_x=m_x,
        m_q=m_q,
    )


def find_redundancy(
    m: FactorModel, reg: Optional[Rank1Regularizer] = None, tol: float = 1e-10
) -> Optional[np.ndarray]:
    """Null combination of the column outer products, if one exists.

    Returns ``beta`` with ``sum_i beta_i U_i V_i^T ~= 0`` and
    ``min beta = -1``, so rescaling column i by ``sqrt(1 + beta_i)``
    preserves the factor product while zeroing at least one column.  The
    sign of ``beta`` is chosen so the rescale does not increase the
    column penalty when ``reg`` is given.  Requires at least two columns;
    returns None when the outer products are linearly independent.
    """
    r = m.rank
    if r < 2:
        return None
    gram = (m.U.T @ m.U) * (m.V.T @ m.V)
    evals, evecs = np.linalg.eigh(gram)
    trace = float(np.trace(gram))
    if evals[0] > tol * max(trace, 1e-300):
        return None
    beta = evecs[:, 0].copy()
    if reg is not None:
        thetas = np.array([eval_theta(reg, m.U[:, i], m.V[:, i]) for i in range(r)])
        if float(beta @ thetas) > 0:
            beta = -beta
    if beta.min() >= 0:
        beta = -beta
    mn = beta.min()
    if mn >= 0:
        return None  # degenerate eigenvector; cannot normalize
    return beta / (-mn)


@dataclass(frozen=True)
class MetaConfig:
    """Settings for one rank-adaptation step."""

    polar_restarts: int = 20
    escape_tol: float = 1e-5
    seed: int = 0
    max_backtracks: int = 50
    zero_tol_factor: float = 1e-10
    r_cap: Optional[int] = None


@dataclass(frozen=True)
class MetaAction:
    """What a rank-adaptation step did.

    ``kind`` is one of ``certify_stop``, ``escape``, ``escape_failed``,
    ``rank_capped``.  ``zero_source`` records how the zero column was
    obtained (``existing``, ``rescaled``, or ``appended``).
    """

    kind: str
    zero_source: Optional[str] = None
    polar: Optional[PolarEstimate] = None
    tau: Optional[float] = None
    backtracks: int = 0


def _zero_column_index(p: ProblemSpec, m: FactorModel, cfg: MetaConfig):
    """Find a negligible column, hard-zero it, and return its index."""
    f = objective(p, m)
    thresh = cfg.zero_tol_factor * (1.0 + f / p.lam)
    idx = None
    cur = f
    for i in range(m.rank):
        th = eval_theta(p.reg, m.U[:, i], m.V[:, i])
        if th > thresh:
            continue
        if not np.any(m.U[:, i]) and not np.any(m.V[:, i]):
            return i
        saved_u, saved_v = m.U[:, i].copy(), m.V[:, i].copy()
        m.U[:, i] = 0.0
        m.V[:, i] = 0.0
        new_obj = objective(p, m)
        if new_obj <= cur:
            cur = new_obj
            idx = i
            break
        m.U[:, i], m.V[:, i] = saved_u, saved_v
    return idx


def meta_step(
    p: ProblemSpec, m: FactorModel, cfg: Optional[MetaConfig] = None
) -> tuple[FactorModel, MetaAction]:
    """One rank-adaptation move at a (near-)critical model.

    Obtains a zero column (reusing a negligible one, rescaling away a
    null combination of column outer products, or appending), then either
    certifies and stops when the polar does not exceed ``1 + escape_tol``
    or fills the zero column with the scaled polar maximizer, backtracking
    the scale until the objective strictly decreases.
    """
    cfg = cfg or MetaConfig()
    m = m.copy()
    source = None

    zero_idx = _zero_column_index(p, m, cfg)
    if zero_idx is not None:
        source = "existing"
    else:
        beta = find_redundancy(m, p.reg)
        if beta is not None:
            scaled = m.copy()
            s = np.sqrt(1.0 + beta)
            scaled.U *= s
            scaled.V *= s
            if objective(p, scaled) <= objective(p, m):
                m = scaled
                zero_idx = int(np.argmin(beta))
                m.U[:, zero_idx] = 0.0
                m.V[:, zero_idx] = 0.0
                source = "rescaled"
        if zero_idx is None:
            d, n = p.factor_shape()
            cap = cfg.r_cap if cfg.r_cap is not None else d * n + 1
            if m.rank >= cap:
                return m, MetaAction(kind="rank_capped")
            m = FactorModel(
                np.hstack([m.U, np.zeros((m.U.shape[0], 1))]),
                np.hstack([m.V, np.zeros((m.V.shape[0], 1))]),
                m.Q,
            )
            zero_idx = m.rank - 1
            source = "appended"

    pol = polar_estimate(certificate_z(p, m), p.reg, cfg.polar_restarts, cfg.seed)
    if pol.value <= 1.0 + cfg.escape_tol:
        return m, MetaAction(kind="certify_stop", zero_source=source, polar=pol)

    f = objective(p, m)
    tau = 1.0
    for bt in range(cfg.max_backtracks + 1):
        m.U[:, zero_idx] = tau * pol.u
        m.V[:, zero_idx] = tau * pol.v
        if objective(p, m) < f:
            return m, MetaAction(
                kind="escape", zero_source=source, polar=pol, tau=tau, backtracks=bt
            )
        tau *= 0.5
    m.U[:, zero_idx] = 0.0
    m.V[:, zero_idx] = 0.0
    return m, MetaAction(kind="escape_failed", zero_source=source, polar=pol)


@dataclass(frozen=True)
class MetaRunConfig:
    solver: SolverConfig = SolverConfig()
    meta: MetaConfig = MetaConfig()
    max_rounds: int = 50
    cert_restarts: int = 20


@dataclass
class RoundRecord:
    round: int
    trace: SolveTrace
    action: MetaAction


@dataclass
class MetaResult:
    model: FactorModel
    certificate: CertificateReport
    history: list

    def all_objectives(self) -> list[float]:
        """Accepted objective values across every solve round, in order."""
        out: list[float] = []
        for rec in self.history:
            out.extend(rec.trace.objectives)
        return out


def run_meta(p: ProblemSpec, cfg: Optional[MetaRunConfig] = None) -> MetaResult:
    """Alternate local solves with rank-adaptation steps until certified.

    The column count never exceeds ``max(D * N + 1, initial count)`` for
    factor dimensions D and N.  The loop also stops when an escape fails
    to decrease the objective (polar estimate too loose) or after
    ``max_rounds`` rounds; the final certificate reports which case
    occurred through its polar value and exactness.
    """
    cfg = cfg or MetaRunConfig()
    rng = np.random.default_rng(cfg.solver.seed)
    m = build_init(p, cfg.solver.init, rng)
    d, n = p.factor_shape()
    r_cap = max(d * n + 1, m.rank)
    meta_cfg = MetaConfig(
        polar_restarts=cfg.meta.polar_restarts,
        escape_tol=cfg.meta.escape_tol,
        seed=cfg.meta.seed,
        max_backtracks=cfg.meta.max_backtracks,
        zero_tol_factor=cfg.meta.zero_tol_factor,
        r_cap=r_cap,
    )
    history: list[RoundRecord] = []
    for rnd in range(1, cfg.max_rounds + 1):
        m, trace = run(p, cfg.solver, init_model=m)
        m, action = meta_step(p, m, meta_cfg)
        history.append(RoundRecord(rnd, trace, action))
        if action.kind in ("certify_stop", "escape_failed", "rank_capped"):
            break
    cert = check_certificate(p, m, restarts=cfg.cert_restarts, seed=cfg.meta.seed)
    return MetaResult(model=m, certificate=cert, history=history)
