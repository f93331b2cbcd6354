"""JSON descriptions of problems, penalties, and run settings.

A run configuration has five sections: ``problem`` (data path, operators,
penalty weight), ``regularizer`` (form plus the two column gauges),
``solver`` (initialization and iteration settings), ``meta`` (rank
adaptation), and ``output``.  Graphs may be given structurally (chain or
lattice) or as explicit edge lists; gauges and penalties serialize
losslessly.  Operators serialize as a variant tag plus parameters and
seed, never as raw masks or kernels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .io import load_matrix
from .linops import LinearOperator, operator_from_config
from .proximal import TVProxConfig
from .regularizers import (
    GaugeSpec,
    NeighborGraph,
    Rank1Regularizer,
    ThetaForm,
    chain_graph,
    lattice_graph,
)
from .solver import InitSpec, ProblemSpec, SolverConfig

__all__ = [
    "graph_to_config",
    "graph_from_config",
    "gauge_to_config",
    "gauge_from_config",
    "reg_to_config",
    "reg_from_config",
    "solver_config_to_dict",
    "solver_config_from_dict",
    "MetaSettings",
    "RunConfig",
    "load_run_config",
    "build_problem",
]


def _reject_unknown(d: dict, allowed: set, context: str) -> None:
    extra = set(d) - allowed
    if extra:
        raise ValueError(f"{context}: unknown keys {sorted(extra)}")


def graph_to_config(graph: Optional[NeighborGraph]) -> Optional[dict]:
    if graph is None:
        return None
    return {
        "kind": "edges",
        "node_count": graph.node_count,
        "edges": [list(e) for e in graph.edges],
    }


def graph_from_config(cfg: Optional[dict]) -> Optional[NeighborGraph]:
    if cfg is None:
        return None
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ValueError("graph config must be a dict with a 'kind' key")
    kind = cfg["kind"]
    if kind == "chain":
        _reject_unknown(cfg, {"kind", "nodes"}, "chain graph")
        return chain_graph(int(cfg["nodes"]))
    if kind == "lattice":
        _reject_unknown(cfg, {"kind", "height", "width", "connectivity"}, "lattice graph")
        return lattice_graph(
            int(cfg["height"]), int(cfg["width"]), int(cfg.get("connectivity", 4))
        )
    if kind == "edges":
        _reject_unknown(cfg, {"kind", "node_count", "edges"}, "edge-list graph")
        return NeighborGraph(
            int(cfg["node_count"]), tuple((int(i), int(j)) for i, j in cfg["edges"])
        )
    raise ValueError(f"unknown graph kind: {kind!r}")


def gauge_to_config(g: GaugeSpec) -> dict:
    return {
        "nu1": g.nu1,
        "nu_tv": g.nu_tv,
        "nu2": g.nu2,
        "nonneg": g.nonneg,
        "graph": graph_to_config(g.graph),
    }


def gauge_from_config(cfg: dict) -> GaugeSpec:
    _reject_unknown(cfg, {"nu1", "nu_tv", "nu2", "nonneg", "graph"}, "gauge")
    return GaugeSpec(
        nu1=float(cfg.get("nu1", 0.0)),
        nu_tv=float(cfg.get("nu_tv", 0.0)),
        nu2=float(cfg.get("nu2", 0.0)),
        nonneg=bool(cfg.get("nonneg", False)),
        graph=graph_from_config(cfg.get("graph")),
    )


def reg_to_config(reg: Rank1Regularizer) -> dict:
    return {
        "form": reg.form.value,
        "u_gauge": gauge_to_config(reg.u_gauge),
        "v_gauge": gauge_to_config(reg.v_gauge),
    }


def reg_from_config(cfg: dict) -> Rank1Regularizer:
    _reject_unknown(cfg, {"form", "u_gauge", "v_gauge"}, "regularizer")
    return Rank1Regularizer(
        form=ThetaForm(cfg.get("form", "product")),
        u_gauge=gauge_from_config(cfg["u_gauge"]),
        v_gauge=gauge_from_config(cfg["v_gauge"]),
    )


def solver_config_to_dict(cfg: SolverConfig) -> dict:
    return {
        "init": {"kind": cfg.init.kind, "count": cfg.init.count},
        "max_iter": cfg.max_iter,
        "tol_rel_obj": cfg.tol_rel_obj,
        "seed": cfg.seed,
        "prox": {"max_sweeps": cfg.prox.max_sweeps, "gap_tol": cfg.prox.gap_tol},
        "classical_momentum": cfg.classical_momentum,
    }


def solver_config_from_dict(cfg: dict) -> SolverConfig:
    _reject_unknown(
        cfg,
        {"init", "max_iter", "tol_rel_obj", "seed", "prox", "classical_momentum"},
        "solver",
    )
    init_cfg = cfg.get("init", {})
    _reject_unknown(init_cfg, {"kind", "count"}, "solver.init")
    prox_cfg = cfg.get("prox", {})
    _reject_unknown(prox_cfg, {"max_sweeps", "gap_tol"}, "solver.prox")
    prox_defaults = TVProxConfig()
    return SolverConfig(
        init=InitSpec(
            kind=init_cfg.get("kind", "zeros"), count=int(init_cfg.get("count", 1))
        ),
        max_iter=int(cfg.get("max_iter", 2000)),
        tol_rel_obj=float(cfg.get("tol_rel_obj", 1e-6)),
        seed=int(cfg.get("seed", 0)),
        prox=TVProxConfig(
            max_sweeps=int(prox_cfg.get("max_sweeps", prox_defaults.max_sweeps)),
            gap_tol=float(prox_cfg.get("gap_tol", prox_defaults.gap_tol)),
        ),
        classical_momentum=bool(cfg.get("classical_momentum", False)),
    )


@dataclass(frozen=True)
class MetaSettings:
    enabled: bool = False
    max_rounds: int = 50
    polar_restarts: int = 20
    escape_tol: float = 1e-5


@dataclass
class RunConfig:
    """Parsed contents of a run configuration file."""

    data_path: Path
    operator_cfg: dict
    lam: float
    reg: Rank1Regularizer
    solver: SolverConfig
    meta: MetaSettings
    background_cfg: Optional[dict] = None
    output_dir: Optional[Path] = None

    def operator(self) -> LinearOperator:
        return operator_from_config(self.operator_cfg)

    def background(self) -> Optional[LinearOperator]:
        if self.background_cfg is None:
            return None
        return operator_from_config(self.background_cfg)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    with open(path) as fh:
        raw = json.load(fh)
    _reject_unknown(
        raw, {"problem", "regularizer", "solver", "meta", "output"}, "run config"
    )
    try:
        prob = raw["problem"]
        reg_cfg = raw["regularizer"]
    except KeyError as exc:
        raise ValueError(f"run config missing section {exc}") from None
    _reject_unknown(
        prob, {"data", "operator", "background_operator", "lambda"}, "problem"
    )
    if "data" not in prob or "lambda" not in prob:
        raise ValueError("problem section needs 'data' and 'lambda'")
    lam = float(prob["lambda"])
    data_path = Path(prob["data"])
    if not data_path.is_absolute():
        data_path = path.parent / data_path

    meta_raw = raw.get("meta", {})
    _reject_unknown(
        meta_raw, {"enabled", "max_rounds", "polar_restarts", "escape_tol"}, "meta"
    )
    meta = MetaSettings(
        enabled=bool(meta_raw.get("enabled", False)),
        max_rounds=int(meta_raw.get("max_rounds", 50)),
        polar_restarts=int(meta_raw.get("polar_restarts", 20)),
        escape_tol=float(meta_raw.get("escape_tol", 1e-5)),
    )
    out_raw = raw.get("output", {})
    _reject_unknown(out_raw, {"directory"}, "output")
    out_dir = out_raw.get("directory")
    if out_dir is not None:
        out_dir = Path(out_dir)
        if not out_dir.is_absolute():
            out_dir = path.parent / out_dir

    return RunConfig(
        data_path=data_path,
        operator_cfg=prob.get("operator", {"variant": "identity"}),
        lam=lam,
        reg=reg_from_config(reg_cfg),
        solver=solver_config_from_dict(raw.get("solver", {})),
        meta=meta,
        background_cfg=prob.get("background_operator"),
        output_dir=out_dir,
    )


def build_problem(cfg: RunConfig) -> ProblemSpec:
    """Load the data matrix and assemble the problem a config describes."""
    y = load_matrix(cfg.data_path)
    return ProblemSpec(
        y=y, op=cfg.operator(), reg=cfg.reg, lam=cfg.lam, bg_op=cfg.background()
    )
