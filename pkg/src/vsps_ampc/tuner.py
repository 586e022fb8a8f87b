"""Pattern-search tuning of the predictive controller's parameters.

The parameter vector is ``K = [N, N_c, p_PCC, p_1, ..., p_n]``.  The search
is a generalized pattern search with the coordinate poll set ``{+e_i, -e_i}``:
an improving poll expands the mesh by ``m1``, a failed poll contracts it by
``m2``, and the search stops once the mesh drops below ``eps``.  Integer
coordinates are rounded to the nearest admissible integer and always move by
at least one.

Two objectives are provided.  :func:`evaluate_candidate` is the cheap one:
the optimal cost of a single MPC solve at the initial operating point with the
load step known.  :func:`closed_loop_objective` runs the whole scenario and
returns ``|nadir|``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .ampc import AmpcConfig, AmpcController, build_qp, solve_qp
from .constraints import ConstraintSet, build_constraint_set
from .errors import DimensionMismatch, VspsError
from .linearize import OperatingPoint, PredictionModel, linear_model_at


@dataclass(frozen=True)
class PatternSearchConfig:
    """Settings of :func:`pattern_search`.

    ``scale`` sets the poll step of each coordinate as ``mesh * scale_i``;
    integer coordinates use ``max(1, round(mesh * scale_i))``.
    """

    K0: tuple
    lower: tuple
    upper: tuple
    integer: tuple = ()
    m1: float = 2.0
    m2: float = 0.5
    eps: float = 1e-3
    mesh0: float = 1.0
    scale: tuple = ()
    max_evals: int = 10000

    def __post_init__(self):
        n = len(self.K0)
        for name in ("K0", "lower", "upper"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "integer", tuple(bool(v) for v in self.integer) or (False,) * n)
        object.__setattr__(self, "scale", tuple(float(v) for v in self.scale) or (1.0,) * n)
        if not (len(self.lower) == len(self.upper) == len(self.integer) == len(self.scale) == n):
            raise DimensionMismatch("K0, bounds, integer mask and scale must have the same length")
        if not self.m1 > 1.0:
            raise ValueError("expansion multiple m1 must exceed 1")
        if not 0.0 < self.m2 < 1.0:
            raise ValueError("contraction multiple m2 must lie in (0, 1)")
        if self.eps <= 0.0 or self.mesh0 <= 0.0:
            raise ValueError("eps and mesh0 must be positive")
        if any(s <= 0.0 for s in self.scale):
            raise ValueError("scales must be positive")
        for lo, hi, k in zip(self.lower, self.upper, self.K0):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= k <= hi):
                raise ValueError("K0 must lie within finite bounds")


@dataclass
class SearchResult:
    K: np.ndarray
    f: float
    n_evals: int
    iterations: int
    contractions: int
    expansions: int
    mesh: float
    best_history: list = field(default_factory=list)
    evaluated: list = field(default_factory=list, repr=False)


def _project(K, cfg: PatternSearchConfig):
    K = np.clip(np.asarray(K, dtype=float), cfg.lower, cfg.upper)
    for i, is_int in enumerate(cfg.integer):
        if is_int:
            v = float(np.round(K[i]))
            lo, hi = math.ceil(cfg.lower[i] - 1e-12), math.floor(cfg.upper[i] + 1e-12)
            K[i] = min(max(v, lo), hi)
    return K


def pattern_search(cfg: PatternSearchConfig, objective: Callable, map_fn=map) -> SearchResult:
    """Coordinate-poll pattern search; returns the best point found.

    ``map_fn`` evaluates a list of poll points; pass an executor's ``map`` to
    run them concurrently.  The winner of a poll is picked after all points are
    back (smallest value, then earliest poll position), so the result does not
    depend on completion order.  Evaluations that raise or return NaN count as
    ``+inf``.
    """
    cache = {}
    evaluated = []

    def key(K):
        return tuple(float(v) for v in K)

    def safe(K):
        try:
            v = float(objective(K))
        except (VspsError, ArithmeticError, ValueError, np.linalg.LinAlgError):
            v = math.inf
        return math.inf if math.isnan(v) else v

    def evaluate_many(points):
        fresh = []
        for P in points:
            k = key(P)
            if k not in cache and k not in [key(F) for F in fresh]:
                fresh.append(P)
        if fresh:
            for P, v in zip(fresh, map_fn(safe, [P.copy() for P in fresh])):
                cache[key(P)] = v
                evaluated.append((P.copy(), v))
        return [cache[key(P)] for P in points]

    K = _project(cfg.K0, cfg)
    (f,) = evaluate_many([K])
    if not math.isfinite(f):
        warnings.warn("objective is not finite at the starting point", RuntimeWarning, stacklevel=2)
    mesh = cfg.mesh0
    history = [f]
    it = contractions = expansions = 0
    n = len(K)
    while mesh >= cfg.eps and len(evaluated) < cfg.max_evals:
        it += 1
        polls = []
        for i in range(n):
            step = mesh * cfg.scale[i]
            if cfg.integer[i]:
                step = max(1.0, float(np.round(step)))
            for sgn in (1.0, -1.0):
                P = K.copy()
                P[i] += sgn * step
                P = _project(P, cfg)
                if key(P) != key(K):
                    polls.append(P)
        values = evaluate_many(polls)
        best = None
        for j, v in enumerate(values):
            if v < f and (best is None or v < values[best]):
                best = j
        if best is not None:
            K, f = polls[best], values[best]
            mesh *= cfg.m1
            expansions += 1
        else:
            mesh *= cfg.m2
            contractions += 1
        history.append(f)
    return SearchResult(K=K, f=f, n_evals=len(evaluated), iterations=it, contractions=contractions,
                        expansions=expansions, mesh=mesh, best_history=history, evaluated=evaluated)


# -- AMPC parameter vector -------------------------------------------------------

def config_from_K(K, base: AmpcConfig, n_units) -> AmpcConfig:
    """``K = [N, N_c, p_PCC, p_1..p_n]`` (or a single shared ``p``) into a config."""
    K = np.asarray(K, dtype=float)
    if len(K) not in (3 + n_units, 4):
        raise DimensionMismatch(f"K has {len(K)} entries; expected {3 + n_units} (or 4 with a shared p)")
    N = int(round(K[0]))
    N_c = int(round(K[1]))
    return replace(base, N=N, N_c=N_c, p_PCC=float(K[2]), p=tuple(float(v) for v in K[3:]))


def default_search_config(n_units, K0=None, **overrides) -> PatternSearchConfig:
    if K0 is None:
        K0 = [30, 5, 1.0] + [0.1] * n_units
    kw = dict(
        K0=tuple(K0),
        lower=(5, 1, 1e-3) + (0.0,) * n_units,
        upper=(100, 20, 100.0) + (10.0,) * n_units,
        integer=(True, True) + (False,) * (1 + n_units),
        scale=(10.0, 2.0, 1.0) + (0.1,) * n_units,
    )
    kw.update(overrides)
    return PatternSearchConfig(**kw)


@dataclass
class TuningContext:
    """Initial operating point of a scenario with the load step known."""

    model: PredictionModel
    x0: np.ndarray
    u0: np.ndarray
    dP_load: float
    P_set: np.ndarray
    base: AmpcConfig


def tuning_context(cfg) -> TuningContext:
    """Build the J_min evaluation context from a :class:`scenario.ScenarioConfig`."""
    from .scenario import build_plant

    plant = build_plant(cfg.with_controller("ampc") if cfg.mode != "ampc" else cfg)
    params = [p for p, _ in cfg.units]
    P_set = np.array([P for _, P in cfg.units])
    model = PredictionModel(cfg.grid, params, cfg.chart, cfg.tunnel, P_set)
    step = sum(dp for _, dp in cfg.disturbance.events)
    return TuningContext(model=model, x0=plant.x.copy(), u0=plant.u.copy(), dP_load=step, P_set=P_set,
                         base=cfg.ampc)


def _single_solve(K, ctx: TuningContext, constrained=True):
    acfg = config_from_K(K, ctx.base, ctx.model.n)
    ctrl = AmpcController(ctx.model, ctx.P_set, acfg, ctx.x0, ctx.u0)
    op = OperatingPoint(x=ctx.x0, u=ctx.u0, d=np.array([ctx.dP_load]))
    lm = linear_model_at(ctx.model, op, acfg.dt_ctrl)
    dP_imb = -ctx.dP_load / ctrl.S_total
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        refs = ctrl.references(ctx.x0, dP_imb)
    if constrained:
        cons = build_constraint_set(ctx.model, ctx.x0, ctx.u0, acfg.N, acfg.N_c, acfg.dt_ctrl,
                                    printed_form=acfg.printed_form, speed_margin=acfg.speed_margin)
    else:
        nx, nu = ctx.model.nx, ctx.model.nu
        cons = ConstraintSet(Ax=np.zeros((0, acfg.N * nx)), Au=np.zeros((0, acfg.N_c * nu)), b=np.zeros(0),
                             labels=[], units=[], steps=[], family=np.zeros(0, dtype=int), n_families=0)
    qp = build_qp(lm, cons, ctx.x0, refs, acfg)
    out = solve_qp(qp, ctx.u0, ctx.P_set)
    return acfg, lm, qp, refs, out


def evaluate_candidate(K, ctx: TuningContext, constrained=True) -> float:
    """Optimal MPC cost at the initial operating point for parameters ``K``.

    Candidates whose solve fails (infeasible, iteration cap, invalid
    configuration) are rejected with ``+inf``.
    """
    try:
        _, _, _, _, out = _single_solve(K, ctx, constrained)
    except (VspsError, ValueError, np.linalg.LinAlgError):
        return math.inf
    return out.objective


def objective_terms(K, ctx: TuningContext, constrained=True):
    """Split the optimal cost into its frequency, rotor-speed, ridge and slack parts."""
    acfg, lm, qp, refs, out = _single_solve(K, ctx, constrained)
    from .ampc import _rollout

    N, N_c, nu = acfg.N, acfg.N_c, lm.nu
    Su, w = _rollout(lm, ctx.x0 - lm.x_op, lm.d_op - lm.d_op, N, N_c)
    U = out.dU.ravel()
    m0 = 1 if acfg.start_at_one else 0
    idx = np.asarray(refs.index)
    W = np.asarray(refs.weight)
    pcc = speed = 0.0
    for m in range(m0, N + m0):
        y = Su[m][idx] @ U + w[m][idx] + lm.x_op[idx] - refs.target
        pcc += 0.5 * W[0] * y[0] ** 2
        speed += 0.5 * float(np.sum(W[1:] * y[1:] ** 2))
    moves = np.linalg.solve(qp.T, U)
    ridge = 0.5 * acfg.rho_u * float(moves @ moves)
    slack = 0.5 * acfg.slack_weight * float(sum(v * v for v in out.slack.values()))
    return {"pcc": pcc, "speed": speed, "ridge": ridge, "slack": slack, "total": out.objective}


def closed_loop_objective(cfg, K=None):
    """``|nadir|`` of the closed-loop scenario run with parameters ``K``."""
    from .scenario import run_scenario

    keep = {"dt_ctrl": cfg.sim.dt_ctrl} if cfg.mode == "ampc" else {}
    run_cfg = cfg if cfg.mode == "ampc" else cfg.with_controller("ampc")
    try:
        if K is not None:
            acfg = config_from_K(K, run_cfg.ampc, len(cfg.units))
            run_cfg = run_cfg.with_controller("ampc", ampc={"N": acfg.N, "N_c": acfg.N_c, "p_PCC": acfg.p_PCC,
                                                            "p": list(acfg.p)}, **keep)
        res = run_scenario(run_cfg)
    except (VspsError, ValueError):
        return math.inf
    return abs(res.metrics["nadir"])


def tune_ampc(cfg, search: PatternSearchConfig | None = None, objective="jmin", map_fn=map) -> SearchResult:
    """Pattern search over ``K`` for a scenario; ``objective`` is ``"jmin"`` or ``"closed_loop"``."""
    n = len(cfg.units)
    search = search or default_search_config(n)
    if objective == "jmin":
        ctx = tuning_context(cfg)
        return pattern_search(search, lambda K: evaluate_candidate(K, ctx), map_fn=map_fn)
    if objective == "closed_loop":
        return pattern_search(search, lambda K: closed_loop_objective(cfg, K), map_fn=map_fn)
    raise ValueError(f"unknown objective {objective!r}")
