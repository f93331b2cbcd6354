"""Alternating proximal-linear solver for gauge-penalized factorizations.

Minimizes ``0.5 * ||Y - A(U V^T) - B(Q)||_F^2 + lam * sum_i theta(U_i, V_i)``
over factor matrices with a fixed column count.  Each pass takes a
prox-linear step on U, then V, then Q, linearizing the smooth loss at a
per-block extrapolated point with an inverse-Lipschitz step size.  A pass
is kept only if it strictly decreases the objective; otherwise the
momentum is dropped and the pass is retried from the last accepted point,
so the recorded objective sequence is always non-increasing.  Two
consecutive non-decreasing passes from the same point mean the iterate is
a block fixed point and the run stops.

The column penalty must be in product form: the U-subproblem then splits
into per-column gauge proxes with thresholds ``lam * sigma_v(V_i) / L_U``
(and symmetrically for V).  Columns whose penalty stays negligible
relative to the largest column for many consecutive passes are zeroed in
place, which keeps later passes cheap and exposes spare capacity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linops import LinearOperator
from .proximal import TVProxConfig, prox_gauge
from .regularizers import Rank1Regularizer, ThetaForm, eval_gauge, eval_theta, sum_theta

__all__ = [
    "ProblemSpec",
    "FactorModel",
    "InitSpec",
    "SolverConfig",
    "SolveTrace",
    "SolverState",
    "objective",
    "residual",
    "grad_u",
    "grad_v",
    "grad_q",
    "lipschitz_u",
    "lipschitz_v",
    "lipschitz_q",
    "prox_update_u",
    "prox_update_v",
    "build_init",
    "init_state",
    "step",
    "run",
]

LIPSCHITZ_FLOOR = 1e-12


@dataclass(frozen=True)
class ProblemSpec:
    """Data, measurement operators, penalty, and weight of one problem.

    ``op`` maps the factor product ``U V^T`` to the data space; ``bg_op``
    optionally maps a background term Q there as well.  ``lam`` scales the
    column penalty.
    """

    y: np.ndarray
    op: LinearOperator
    reg: Rank1Regularizer
    lam: float
    bg_op: Optional[LinearOperator] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 2:
            raise ValueError("y must be a matrix")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite entries")
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lam must be finite and positive, got {self.lam}")
        object.__setattr__(self, "y", y)

    def factor_shape(self) -> tuple[int, int]:
        """(rows of U, rows of V) implied by the forward operator."""
        d = self.op.domain_shape(self.y.shape)
        if len(d) != 2:
            raise ValueError("forward operator domain is not a matrix")
        return d


@dataclass
class FactorModel:
    """Factor pair and optional background term."""

    U: np.ndarray
    V: np.ndarray
    Q: Optional[np.ndarray] = None

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        if self.U.ndim != 2 or self.V.ndim != 2:
            raise ValueError("U and V must be matrices")
        if self.U.shape[1] != self.V.shape[1]:
            raise ValueError(
                f"column mismatch: U has {self.U.shape[1]}, V has {self.V.shape[1]}"
            )
        if self.Q is not None:
            self.Q = np.asarray(self.Q, dtype=float)

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    def product(self) -> np.ndarray:
        return self.U @ self.V.T

    def copy(self) -> "FactorModel":
        return FactorModel(
            self.U.copy(), self.V.copy(), None if self.Q is None else self.Q.copy()
        )


@dataclass(frozen=True)
class InitSpec:
    """Initialization recipe.

    Kinds: ``zeros`` (U, V both zero), ``identity_columns`` (U gets
    ``count`` distinct columns of the identity, all of it when ``count``
    equals the row dimension, a seeded subset otherwise), or
    ``uniform_random`` (U entrywise uniform on [0, 1]).  V always starts
    at zero.
    """

    kind: str = "zeros"
    count: int = 1

    def __post_init__(self):
        if self.kind not in ("zeros", "identity_columns", "uniform_random"):
            raise ValueError(f"unknown init kind: {self.kind!r}")
        if self.count < 1:
            raise ValueError("count must be positive")


@dataclass(frozen=True)
class SolverConfig:
    init: InitSpec = InitSpec()
    max_iter: int = 2000
    tol_rel_obj: float = 1e-6
    seed: int = 0
    prox: TVProxConfig = TVProxConfig()
    # momentum weight (t_prev - 1)/2 by default; the flag switches to the
    # classical (t_prev - 1)/t_new schedule, which stays below one
    classical_momentum: bool = False
    prune_after: int = 25
    prune_rel_tol: float = 1e-12


@dataclass
class SolveTrace:
    """Per-run diagnostics.

    ``objectives`` holds the initial objective followed by one value per
    accepted pass; the sequence is non-increasing by construction.
    """

    objectives: list = field(default_factory=list)
    iterations: int = 0
    restarts: int = 0
    prox_failures: int = 0
    converged: bool = False
    fixed_point: bool = False
    final_t: float = 1.0
    lipschitz: dict = field(default_factory=dict)
    pruned_columns: int = 0


@dataclass
class SolverState:
    """Mutable loop state threaded through :func:`step`."""

    m: FactorModel
    m_prev: FactorModel
    obj: float
    t: float = 1.0
    mu_base: float = 0.0
    l_prev: Optional[dict] = None
    prune_counts: Optional[np.ndarray] = None
    warm_u: Optional[list] = None
    warm_v: Optional[list] = None
    trace: SolveTrace = field(default_factory=SolveTrace)
    fixed_point: bool = False


def residual(p: ProblemSpec, m: FactorModel) -> np.ndarray:
    """A(U V^T) + B(Q) - Y, the gradient-side residual."""
    r = p.op.apply(m.U @ m.V.T) - p.y
    if p.bg_op is not None:
        if m.Q is None:
            raise ValueError("problem has a background operator but model has no Q")
        r = r + p.bg_op.apply(m.Q)
    return r


def objective(p: ProblemSpec, m: FactorModel) -> float:
    r = residual(p, m)
    return 0.5 * float(np.vdot(r, r)) + p.lam * sum_theta(p.reg, m.U, m.V)


def grad_u(p: ProblemSpec, m: FactorModel) -> np.ndarray:
    return p.op.adjoint(residual(p, m)) @ m.V


def grad_v(p: ProblemSpec, m: FactorModel) -> np.ndarray:
    return p.op.adjoint(residual(p, m)).T @ m.U


def grad_q(p: ProblemSpec, m: FactorModel) -> np.ndarray:
    if p.bg_op is None:
        raise ValueError("problem has no background operator")
    return p.bg_op.adjoint(residual(p, m))


def _sigma_max_sq(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 0.0
    if not np.all(np.isfinite(mat)):
        return math.inf
    gram = mat.T @ mat
    ev = np.linalg.eigvalsh(gram)
    return max(float(ev[-1]), 0.0)


def lipschitz_u(p: ProblemSpec, m: FactorModel) -> float:
    a = p.op.op_norm()
    return max(a * a * _sigma_max_sq(m.V), LIPSCHITZ_FLOOR)


def lipschitz_v(p: ProblemSpec, m: FactorModel) -> float:
    a = p.op.op_norm()
    return max(a * a * _sigma_max_sq(m.U), LIPSCHITZ_FLOOR)


def lipschitz_q(p: ProblemSpec, m: FactorModel) -> float:
    if p.bg_op is None:
        raise ValueError("problem has no background operator")
    b = p.bg_op.op_norm()
    return max(b * b, LIPSCHITZ_FLOOR)


def _require_product_form(p: ProblemSpec) -> None:
    if p.reg.form is not ThetaForm.PRODUCT:
        raise ValueError(
            "block prox steps need a product-form penalty; sum form does not "
            "split into per-column gauge proxes with fixed thresholds"
        )


def _block_prox(
    point: np.ndarray,
    weights: np.ndarray,
    l_block: float,
    gauge,
    cfg: TVProxConfig,
    warm: Optional[list],
):
    """Columnwise gauge prox of ``point`` with per-column thresholds.

    Columns with zero weight keep the plain gradient-step value, clipped
    to the orthant for one-sided gauges.  A non-finite point or weight
    means the extrapolation overshot; the point is returned unproxed so
    the acceptance test rejects the pass.  Returns the new block, updated
    warm-start duals, and the count of prox calls that stopped above
    their gap tolerance.
    """
    if not np.all(np.isfinite(point)):
        return point.copy(), 0
    out = np.empty_like(point)
    fails = 0
    for i in range(point.shape[1]):
        w = weights[i]
        if not math.isfinite(w):
            return point.copy(), fails
        if w <= 0.0:
            col = point[:, i]
            out[:, i] = np.maximum(col, 0.0) if gauge.nonneg else col
            continue
        g0 = warm[i] if warm is not None else None
        res = prox_gauge(point[:, i], w / l_block, gauge, cfg, g0)
        out[:, i] = res.x
        if warm is not None:
            warm[i] = res.gamma
        if res.dual_gap > cfg.gap_tol:
            fails += 1
    return out, fails


def _u_pass(p, hat_u, v, q, l_u, cfg, warm):
    base = FactorModel(hat_u, v, q)
    point = hat_u - grad_u(p, base) / l_u
    weights = np.array([p.lam * eval_gauge(p.reg.v_gauge, v[:, i]) for i in range(v.shape[1])])
    return _block_prox(point, weights, l_u, p.reg.u_gauge, cfg, warm)


def _v_pass(p, u, hat_v, q, l_v, cfg, warm):
    base = FactorModel(u, hat_v, q)
    point = hat_v - grad_v(p, base) / l_v
    weights = np.array([p.lam * eval_gauge(p.reg.u_gauge, u[:, i]) for i in range(u.shape[1])])
    return _block_prox(point, weights, l_v, p.reg.v_gauge, cfg, warm)


def prox_update_u(
    p: ProblemSpec, m: FactorModel, l_u: float, cfg: Optional[TVProxConfig] = None
) -> np.ndarray:
    """One prox-linear U update linearized at ``m`` with step ``1/l_u``."""
    _require_product_form(p)
    u_new, _ = _u_pass(p, m.U, m.V, m.Q, l_u, cfg or TVProxConfig(), None)
    return u_new


def prox_update_v(
    p: ProblemSpec, m: FactorModel, l_v: float, cfg: Optional[TVProxConfig] = None
) -> np.ndarray:
    """One prox-linear V update linearized at ``m`` with step ``1/l_v``."""
    _require_product_form(p)
    v_new, _ = _v_pass(p, m.U, m.V, m.Q, l_v, cfg or TVProxConfig(), None)
    return v_new


def build_init(p: ProblemSpec, init: InitSpec, rng: np.random.Generator) -> FactorModel:
    """Construct the starting model implied by an :class:`InitSpec`."""
    d, n = p.factor_shape()
    r = init.count
    if init.kind == "zeros":
        u = np.zeros((d, r))
    elif init.kind == "identity_columns":
        if r > d:
            raise ValueError(f"identity init supports at most {d} columns, got {r}")
        if r == d:
            cols = np.arange(d)
        else:
            cols = np.sort(rng.choice(d, size=r, replace=False))
        u = np.eye(d)[:, cols]
    else:  # uniform_random
        u = rng.uniform(0.0, 1.0, size=(d, r))
    v = np.zeros((n, r))
    q = None
    if p.bg_op is not None:
        q = np.zeros(p.bg_op.domain_shape(p.y.shape))
    return FactorModel(u, v, q)


def init_state(p: ProblemSpec, m0: FactorModel) -> SolverState:
    """Fresh loop state anchored at ``m0``; validates feasibility."""
    _require_product_form(p)
    d, n = p.factor_shape()
    if m0.U.shape[0] != d or m0.V.shape[0] != n:
        raise ValueError(
            f"model shaped ({m0.U.shape[0]}, {m0.V.shape[0]}) does not match "
            f"operator domain ({d}, {n})"
        )
    if (p.bg_op is not None) != (m0.Q is not None):
        raise ValueError("model must carry Q exactly when the problem has bg_op")
    obj0 = objective(p, m0)
    if not math.isfinite(obj0):
        raise ValueError("initial model has non-finite objective")
    r = m0.rank
    state = SolverState(
        m=m0.copy(),
        m_prev=m0.copy(),
        obj=obj0,
        prune_counts=np.zeros(r, dtype=int),
        warm_u=[None] * r,
        warm_v=[None] * r,
    )
    state.trace.objectives.append(obj0)
    return state


def _mu_block(state: SolverState, key: str, l_cur: float) -> float:
    if state.mu_base <= 0.0 or state.l_prev is None or key not in state.l_prev:
        return 0.0 if state.mu_base <= 0.0 else state.mu_base
    return min(state.mu_base, math.sqrt(state.l_prev[key] / l_cur))


def _prune(p: ProblemSpec, state: SolverState, cfg: SolverConfig) -> None:
    m = state.m
    r = m.rank
    thetas = np.array([eval_theta(p.reg, m.U[:, i], m.V[:, i]) for i in range(r)])
    top = thetas.max() if r else 0.0
    if top <= 0.0:
        state.prune_counts[:] = 0
        return
    small = thetas <= cfg.prune_rel_tol * top
    state.prune_counts[small] += 1
    state.prune_counts[~small] = 0
    ripe = (state.prune_counts >= cfg.prune_after) & small
    for i in np.nonzero(ripe)[0]:
        if not np.any(m.U[:, i]) and not np.any(m.V[:, i]):
            continue  # already zero
        saved = (m.U[:, i].copy(), m.V[:, i].copy(), state.obj)
        m.U[:, i] = 0.0
        m.V[:, i] = 0.0
        new_obj = objective(p, m)
        if new_obj > state.obj:
            m.U[:, i], m.V[:, i] = saved[0], saved[1]
            state.prune_counts[i] = 0
            continue
        state.m_prev.U[:, i] = 0.0
        state.m_prev.V[:, i] = 0.0
        state.obj = new_obj
        state.trace.pruned_columns += 1


def step(p: ProblemSpec, state: SolverState, cfg: Optional[SolverConfig] = None) -> SolverState:
    """One full U, V, Q pass with acceptance test; mutates and returns state."""
    cfg = cfg or SolverConfig()
    m, m_prev = state.m, state.m_prev

    l_u = lipschitz_u(p, m)
    mu_u = _mu_block(state, "u", l_u)
    hat_u = m.U + mu_u * (m.U - m_prev.U)
    u_new, f_u = _u_pass(p, hat_u, m.V, m.Q, l_u, cfg.prox, state.warm_u)

    l_v = lipschitz_v(p, FactorModel(u_new, m.V, m.Q))
    mu_v = _mu_block(state, "v", l_v)
    hat_v = m.V + mu_v * (m.V - m_prev.V)
    v_new, f_v = _v_pass(p, u_new, hat_v, m.Q, l_v, cfg.prox, state.warm_v)

    lip = {"u": l_u, "v": l_v}
    q_new = None
    if p.bg_op is not None:
        l_q = lipschitz_q(p, m)
        mu_q = _mu_block(state, "q", l_q)
        hat_q = m.Q + mu_q * (m.Q - m_prev.Q)
        g_q = grad_q(p, FactorModel(u_new, v_new, hat_q))
        q_new = hat_q - g_q / l_q
        lip["q"] = l_q

    state.trace.prox_failures += f_u + f_v
    state.trace.iterations += 1
    state.trace.lipschitz = lip

    cand = FactorModel(u_new, v_new, q_new)
    obj_new = objective(p, cand)
    if not math.isfinite(obj_new) and state.mu_base <= 0.0:
        # an overshooting extrapolation is recoverable (the pass is simply
        # rejected below), but a pure pass must stay finite
        raise RuntimeError(
            f"objective became non-finite ({obj_new}) at iteration "
            f"{state.trace.iterations}; step sizes {lip}"
        )

    if math.isfinite(obj_new) and obj_new < state.obj:
        state.m_prev = state.m
        state.m = cand
        state.obj = obj_new
        _prune(p, state, cfg)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * state.t * state.t))
        if cfg.classical_momentum:
            state.mu_base = (state.t - 1.0) / t_new
        else:
            state.mu_base = (state.t - 1.0) / 2.0
        state.t = t_new
        state.l_prev = lip
        state.trace.objectives.append(state.obj)
        state.trace.final_t = state.t
    else:
        was_pure = state.mu_base <= 0.0
        state.trace.restarts += 1
        state.m_prev = state.m
        state.mu_base = 0.0
        if was_pure:
            state.fixed_point = True
    return state


def run(
    p: ProblemSpec,
    cfg: Optional[SolverConfig] = None,
    init_model: Optional[FactorModel] = None,
) -> tuple[FactorModel, SolveTrace]:
    """Iterate :func:`step` until the objective flattens or budgets run out.

    Convergence is declared when the relative objective decrease over a
    five-pass window of accepted values falls under ``cfg.tol_rel_obj``,
    or when the iterate is detected to be a block fixed point.
    """
    cfg = cfg or SolverConfig()
    rng = np.random.default_rng(cfg.seed)
    m0 = init_model.copy() if init_model is not None else build_init(p, cfg.init, rng)
    state = init_state(p, m0)

    for _ in range(cfg.max_iter):
        step(p, state, cfg)
        if state.fixed_point:
            state.trace.converged = True
            state.trace.fixed_point = True
            break
        objs = state.trace.objectives
        if len(objs) >= 6:
            drop = objs[-6] - objs[-1]
            if drop <= cfg.tol_rel_obj * max(1.0, abs(objs[-1])):
                state.trace.converged = True
                break
    return state.m, state.trace
