"""Warm-started solver pipelines such as qp -> dcneg -> lp."""

import time
from dataclasses import dataclass, field

import numpy as np

from .cccp import run_cccp_generic, run_cccp_negdef
from .energy import rounded_energy
from .errors import InvalidParameter
from .frank_wolfe import run_frank_wolfe
from .lp import LPOptions, restrict_labels, run_lp
from .meanfield import run_mf
from .model import MatrixCompat, TreeCompat

STAGES = ("mf", "mf5", "qp", "dcgen", "dcneg", "lp")


@dataclass
class PipelineSpec:
    """Ordered stages plus the knobs shared by all of them.

    ``max_iter`` and ``tol`` override each stage's own iteration budget and
    stopping tolerance when set (MF change, FW relative gap, CCCP relative
    decrease). ``lp_iters`` and ``lp_beta0`` configure the LP stage.
    """

    stages: list
    max_iter: int = None
    tol: float = None
    lp_iters: int = 5
    lp_beta0: float = 1.0
    restrict: bool = False
    integer_trace: bool = True
    tree: object = None

    def __post_init__(self):
        self.stages = list(self.stages)
        if not self.stages:
            raise InvalidParameter("pipeline needs at least one stage")
        for s in self.stages:
            if s not in STAGES:
                raise InvalidParameter(f"unknown stage {s!r}; choose from {', '.join(STAGES)}")


@dataclass
class StageSummary:
    stage: str
    relaxed_objective: float
    integer_energy: float
    wall_s: float


@dataclass
class PipelineResult:
    y: np.ndarray
    traces: list = field(default_factory=list)
    summary: list = field(default_factory=list)


def _opt(value, default):
    return default if value is None else value


def run_stage(problem, stage, y, spec):
    it, tol, integer = spec.max_iter, spec.tol, spec.integer_trace
    if stage == "mf":
        return run_mf(problem, y, max_iters=_opt(it, 100), tol=_opt(tol, 1e-5), integer_trace=integer, stage=stage)
    if stage == "mf5":
        return run_mf(problem, y, max_iters=5, tol=0.0, integer_trace=integer, stage=stage)
    if stage == "qp":
        return run_frank_wolfe(problem, y, max_iters=_opt(it, 100), gap_tol=_opt(tol, 1e-3),
                               integer_trace=integer, stage=stage)
    if stage == "dcgen":
        return run_cccp_generic(problem, y, outer_iters=_opt(it, 20), tol=_opt(tol, 1e-5),
                                integer_trace=integer, stage=stage)
    if stage == "dcneg":
        return run_cccp_negdef(problem, y, outer_iters=_opt(it, 20), tol=_opt(tol, 1e-5),
                               integer_trace=integer, stage=stage)
    if y is None:
        y = np.full(problem.unary.shape, 1.0 / problem.n_labels)
    opts = LPOptions(spec.lp_iters, spec.lp_beta0, restrict_labels(y) if spec.restrict else None)
    return run_lp(problem, y, opts, integer_trace=integer, stage=stage, tree=spec.tree)


def run_pipeline(problem, spec, on_stage=None):
    """Run the stages in order, each warm-started from the previous assignment.

    With a tree metric, the non-LP stages see the equivalent dense matrix
    compatibility. ``on_stage(result)`` is called after every finished stage,
    so a caller can persist partial traces before a later stage fails.
    """
    dense = problem
    if isinstance(problem.compat, TreeCompat):
        dense = problem.__class__(problem.unary, problem.kernels, MatrixCompat(problem.mu),
                                  problem.backend, problem.filter_options)
        dense.__dict__["filter"] = problem.filter
    out = PipelineResult(None)
    y = None
    for stage in spec.stages:
        t0 = time.perf_counter()
        res = run_stage(problem if stage == "lp" else dense, stage, y, spec)
        wall = time.perf_counter() - t0
        y = res.y
        out.traces.append(res.trace)
        relaxed = res.trace.relaxed[-1] if stage != "lp" else res.info["objective"]
        energy = rounded_energy(problem, y)
        out.summary.append(StageSummary(stage, float(relaxed), energy, wall))
        out.y = y
        if on_stage is not None:
            on_stage(out)
    return out
