"""Event-driven simulation of the prelimit parallel server system.

The n-th system accelerates first order rates by n and adds the square
root perturbations: arrival rates lambda^n_i = n lambda_i + sqrt(n)
hat_lambda_i, potential service rates mu^n_j = n mu_j + sqrt(n)
hat_mu_j. Arrivals per class and potential services per activity are
independent renewal processes with mean-1 base draws scaled by the rate;
the service clock of activity j advances only while effort is allocated
to it, at the allocated fraction (head-of-line effort splitting with
preemptive resume, so a frozen clock keeps its progress). Queue lengths
are exact integer counts; between events all continuous quantities are
linear, so traces record event instants only and every integral below is
evaluated piecewise exactly.

Scaled (diffusion regime) series derived from a trace:

    Xhat = X / sqrt(n)                 W = y*.Xhat       H = h.Xhat
    Ihat_k = sqrt(n) (t - sum_{j on k} T_j)              L = z*.Ihat
    F = sum_i y*_i [ (A_i - n lambda_i t)
                     - sum_{j in J_i} (D_j - n mu_j T_j) ] / sqrt(n)
    Lan = sqrt(n) sum_{j=(i,k) always nonbasic} (z*_k - y*_i mu_j) T_j

These satisfy W = F + L + Lan identically (it is an algebraic
consequence of y*.lambda = 1, sum z* = 1 and y*_i mu_j = z*_k on the
potentially basic activities), so the residual of that identity is a
pure floating point check on the simulator and is verified on every
scaled computation. The trace inequality checks cover the workload-cost
comparison, the reflection lower bound through the Skorokhod map, and
state/idleness monotonicity.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .hjb import HjbSolution, ModePolicy
from .lp import ActivityClass, AssumptionError, LpAnalysis
from .model import PssInstance
from .wcp import Z95, McEstimate, skorokhod_map


class SimulatorInvariantError(RuntimeError):
    """An exact identity failed beyond rounding noise; simulator bug."""


class MinimumNError(ValueError):
    """Perturbed rates are not positive at this n."""

    def __init__(self, message: str, min_n: int):
        super().__init__(message)
        self.min_n = min_n


@dataclass(frozen=True)
class DistributionSpec:
    """Renewal interarrival family: mean-1 gamma with the given squared
    coefficient of variation, or deterministic (scv 0, services only)."""

    family: str
    scv: float

    @classmethod
    def for_scv(cls, scv: float) -> "DistributionSpec":
        if scv < 0:
            raise ValueError("scv must be nonnegative")
        return cls(family="deterministic" if scv == 0 else "gamma", scv=scv)


class RenewalSource:
    """Stream of interarrival increments with mean 1/rate and the given
    distribution's squared coefficient of variation; draws are buffered."""

    __slots__ = ("_rng", "_shape", "_scale", "_det", "_buf", "_pos")

    def __init__(self, spec: DistributionSpec, rate: float, rng: np.random.Generator):
        if rate <= 0:
            raise ValueError("rate must be positive")
        if spec.family == "deterministic":
            self._det = 1.0 / rate
            self._rng = None
        elif spec.family == "gamma":
            if spec.scv <= 0:
                raise ValueError("gamma renewal needs scv > 0")
            self._det = None
            self._rng = rng
            self._shape = 1.0 / spec.scv
            self._scale = spec.scv / rate
        else:
            raise ValueError(f"unknown renewal family {spec.family!r}")
        self._buf = None
        self._pos = 0

    def next(self) -> float:
        if self._det is not None:
            return self._det
        if self._buf is None or self._pos == len(self._buf):
            self._buf = self._rng.gamma(self._shape, self._scale, 512)
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return v


def make_renewal_source(spec: DistributionSpec, rate: float, seed) -> RenewalSource:
    """Build a source from a seed (int or SeedSequence) or Generator."""
    if isinstance(seed, np.random.Generator):
        rng = seed
    else:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return RenewalSource(spec, rate, rng)


@dataclass(frozen=True)
class PolicySpec:
    """Allocation rule for the prelimit system.

    kind "static": always project mode ``mode``; "threshold": pick the
    mode by the scaled workload through ``policy``; "priority": each
    server serves its first backlogged activity in ``priorities[k]`` at
    full rate. For static/threshold kinds the mode's effort is masked to
    backlogged classes; with work_conserving=True each server spreads its
    masked-off effort over its backlogged activities in proportion to the
    mode (evenly when the mode puts no weight on them).
    """

    kind: str
    mode: int | None = None
    policy: ModePolicy | None = None
    priorities: tuple[tuple[int, ...], ...] | None = None
    work_conserving: bool = False

    @classmethod
    def static_mode(cls, mode: int, work_conserving: bool = False) -> "PolicySpec":
        return cls(kind="static", mode=mode, work_conserving=work_conserving)

    @classmethod
    def workload_threshold(cls, policy: ModePolicy, work_conserving: bool = False) -> "PolicySpec":
        return cls(kind="threshold", policy=policy, work_conserving=work_conserving)

    @classmethod
    def server_priority(cls, priorities: tuple[tuple[int, ...], ...]) -> "PolicySpec":
        return cls(kind="priority", priorities=tuple(tuple(p) for p in priorities))

    @property
    def label(self) -> str:
        if self.kind == "static":
            return f"static:{self.mode}" + (":wc" if self.work_conserving else "")
        if self.kind == "threshold":
            return "threshold" + (":wc" if self.work_conserving else "")
        return "priority"


@dataclass(frozen=True)
class QcpTrace:
    """Event-indexed record of one run; row 0 is the empty initial state
    and the last row sits exactly at the horizon."""

    n: int
    horizon: float
    times: np.ndarray  # (E,)
    x: np.ndarray  # (E, I) queue lengths
    arrivals: np.ndarray  # (E, I)
    departures: np.ndarray  # (E, J)
    busy: np.ndarray  # (E, J) cumulative allocated effort T_j
    alloc: np.ndarray  # (E, J) allocation in force until the next row


@dataclass(frozen=True)
class ScaledSeries:
    """Diffusion-scaled series on the doubled event grid (left limits and
    post-event values at every event instant)."""

    times: np.ndarray
    x_hat: np.ndarray
    a_hat: np.ndarray
    s_hat: np.ndarray
    i_hat: np.ndarray
    w: np.ndarray
    f: np.ndarray
    l: np.ndarray
    l_an: np.ndarray
    h: np.ndarray
    scale: float
    identity_residual: float


@dataclass(frozen=True)
class TraceChecks:
    """Max violations, relative to the series scale."""

    cost_vs_workload: float
    cost_equality_on_axis: float
    reflection: float
    state_nonneg: float
    idleness_monotone: float

    @property
    def max_relative_violation(self) -> float:
        return max(
            self.cost_vs_workload,
            self.cost_equality_on_axis,
            self.reflection,
            self.state_nonneg,
            self.idleness_monotone,
        )


def effective_rates(inst: PssInstance, n: int) -> tuple[list[float], list[float]]:
    """lambda^n and mu^n; raises MinimumNError if any is nonpositive."""
    rt = math.sqrt(n)
    lam_n = [n * float(v) + rt * hv for v, hv in zip(inst.lam, inst.hat_lambda)]
    mu_n = [n * float(v) + rt * hv for v, hv in zip(inst.mu, inst.hat_mu)]
    if min(lam_n) > 0 and min(mu_n) > 0:
        return lam_n, mu_n
    min_n = 1
    for v, hv in list(zip(inst.lam, inst.hat_lambda)) + list(zip(inst.mu, inst.hat_mu)):
        if hv < 0:
            min_n = max(min_n, int((hv / float(v)) ** 2) + 1)
    raise MinimumNError(
        f"perturbed rates are nonpositive at n={n}; smallest admissible n is {min_n}",
        min_n,
    )


class _Context:
    """Flattened instance/policy data for the event loop."""

    __slots__ = (
        "ni", "nk", "nj", "cls_of", "srv_of", "server_acts", "mode_xi",
        "mode_budget", "kind", "static_mode", "threshold", "priorities",
        "work_conserving", "y", "h", "inv_sqrt_n",
    )

    def __init__(self, analysis: LpAnalysis, policy: PolicySpec, n: int):
        inst = analysis.instance
        self.ni = inst.num_classes
        self.nk = inst.num_servers
        self.nj = inst.num_activities
        self.cls_of = [a.class_index - 1 for a in inst.activities]
        self.srv_of = [a.server_index - 1 for a in inst.activities]
        self.server_acts = [list(acts) for acts in inst.server_activities]
        self.mode_xi = [[float(v) for v in m.xi] for m in analysis.modes]
        self.mode_budget = [
            [sum(xi[j] for j in acts) for acts in self.server_acts] for xi in self.mode_xi
        ]
        self.kind = policy.kind
        self.static_mode = policy.mode
        self.threshold = policy.policy
        self.priorities = policy.priorities
        self.work_conserving = policy.work_conserving
        self.y = None if analysis.dual is None else [float(v) for v in analysis.dual.y]
        self.h = list(inst.h)
        self.inv_sqrt_n = 1.0 / math.sqrt(n)
        if self.kind == "static":
            if policy.mode is None or not 0 <= policy.mode < len(self.mode_xi):
                raise ValueError(f"static policy needs a mode index in 0..{len(self.mode_xi) - 1}")
        elif self.kind == "threshold":
            if policy.policy is None:
                raise ValueError("threshold policy needs a ModePolicy")
            if self.y is None:
                raise ValueError("threshold policy needs the unique dual point")
            if any(m < 0 or m >= len(self.mode_xi) for m in policy.policy.modes):
                raise ValueError("threshold policy references a mode outside the mode list")
        elif self.kind == "priority":
            if policy.priorities is None or len(policy.priorities) != self.nk:
                raise ValueError("priority policy needs one activity order per server")
            for k, order in enumerate(policy.priorities):
                if sorted(order) != sorted(self.server_acts[k]):
                    raise ValueError(
                        f"priority order for server {k} must permute its activities"
                    )
        else:
            raise ValueError(f"unknown policy kind {policy.kind!r}")

    def fill_allocation(self, x: list[int], w_hat: float, out: list[float]) -> None:
        if self.kind == "priority":
            for j in range(self.nj):
                out[j] = 0.0
            for k in range(self.nk):
                for j in self.priorities[k]:
                    if x[self.cls_of[j]] >= 1:
                        out[j] = 1.0
                        break
            return
        m = self.static_mode if self.kind == "static" else self.threshold(w_hat)
        xi = self.mode_xi[m]
        cls_of = self.cls_of
        if not self.work_conserving:
            for j in range(self.nj):
                out[j] = xi[j] if x[cls_of[j]] >= 1 else 0.0
            return
        budgets = self.mode_budget[m]
        for k in range(self.nk):
            acts = self.server_acts[k]
            weight = 0.0
            eligible = 0
            for j in acts:
                if x[cls_of[j]] >= 1:
                    eligible += 1
                    weight += xi[j]
            if eligible == 0:
                for j in acts:
                    out[j] = 0.0
            elif weight > 0.0:
                scale = budgets[k] / weight
                for j in acts:
                    out[j] = xi[j] * scale if x[cls_of[j]] >= 1 else 0.0
            else:
                share = budgets[k] / eligible
                for j in acts:
                    out[j] = share if x[cls_of[j]] >= 1 else 0.0

    def workload(self, x: list[int]) -> float:
        if self.y is None:
            return 0.0
        return sum(yi * xi for yi, xi in zip(self.y, x)) * self.inv_sqrt_n

    def holding(self, x: list[int]) -> float:
        return sum(hi * xi for hi, xi in zip(self.h, x)) * self.inv_sqrt_n


def policy_allocation(
    policy: PolicySpec, x, w_hat: float, analysis: LpAnalysis, n: int = 1
) -> tuple[float, ...]:
    """Allocation used at state (x, w_hat); admissible by construction:
    effort only on backlogged classes, per-server totals at most 1."""
    ctx = _Context(analysis, policy, n)
    out = [0.0] * ctx.nj
    ctx.fill_allocation(list(x), w_hat, out)
    return tuple(out)


def _simulate(
    inst: PssInstance,
    analysis: LpAnalysis,
    n: int,
    policy: PolicySpec,
    horizon: float,
    seed: int,
    rep: int,
    record: bool,
):
    """Core event loop. Returns (rows or None, discounted cost, H at horizon)."""
    lam_n, mu_n = effective_rates(inst, n)
    ctx = _Context(analysis, policy, n)
    ni, nj = ctx.ni, ctx.nj
    gamma = inst.gamma

    def rng_for(kind: int, idx: int) -> np.random.Generator:
        seq = np.random.SeedSequence(seed, spawn_key=(rep, kind, idx))
        return np.random.Generator(np.random.Philox(seq))

    arr_src = [
        RenewalSource(DistributionSpec.for_scv(inst.c2_arrival[i]), lam_n[i], rng_for(0, i))
        for i in range(ni)
    ]
    svc_src = [
        RenewalSource(DistributionSpec.for_scv(inst.c2_service[j]), mu_n[j], rng_for(1, j))
        for j in range(nj)
    ]

    t = 0.0
    x = [0] * ni
    arr = [0] * ni
    dep = [0] * nj
    busy = [0.0] * nj
    next_arr = [arr_src[i].next() for i in range(ni)]
    thresh = [svc_src[j].next() for j in range(nj)]
    xi = [0.0] * nj
    ctx.fill_allocation(x, 0.0, xi)

    rows = [] if record else None
    if record:
        rows.append((t, tuple(x), tuple(arr), tuple(dep), tuple(busy), tuple(xi)))
    cost = 0.0
    exp_prev = 1.0
    cls_of = ctx.cls_of

    while True:
        best_dt = horizon - t
        event = -1
        for i in range(ni):
            dt = next_arr[i] - t
            if dt < best_dt:
                best_dt = dt
                event = i
        for j in range(nj):
            a = xi[j]
            if a > 0.0:
                dt = (thresh[j] - busy[j]) / a
                if dt < best_dt:
                    best_dt = dt
                    event = ni + j
        if best_dt < 0.0:
            best_dt = 0.0
        t_next = t + best_dt if event >= 0 else horizon
        h_rate = ctx.holding(x)
        if gamma > 0 and best_dt > 0:
            exp_next = math.exp(-gamma * t_next)
            cost += h_rate * (exp_prev - exp_next) / gamma
            exp_prev = exp_next
        elif best_dt > 0:
            cost += h_rate * best_dt
        for j in range(nj):
            if xi[j] > 0.0:
                busy[j] += xi[j] * best_dt
        t = t_next
        if event < 0:
            if record:
                rows.append((t, tuple(x), tuple(arr), tuple(dep), tuple(busy), tuple(xi)))
            return rows, cost, ctx.holding(x)
        if event < ni:
            i = event
            arr[i] += 1
            x[i] += 1
            next_arr[i] = t + arr_src[i].next()
        else:
            j = event - ni
            busy[j] = thresh[j]
            thresh[j] += svc_src[j].next()
            dep[j] += 1
            x[cls_of[j]] -= 1
            if x[cls_of[j]] < 0:
                raise SimulatorInvariantError("departure from an empty class")
        ctx.fill_allocation(x, ctx.workload(x), xi)
        if record:
            rows.append((t, tuple(x), tuple(arr), tuple(dep), tuple(busy), tuple(xi)))


def run_qcp(
    inst: PssInstance,
    analysis: LpAnalysis,
    n: int,
    policy: PolicySpec,
    horizon: float | None = None,
    seed: int = 0,
    rep: int = 0,
) -> QcpTrace:
    """Simulate one replication and record the full event trace."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    if horizon is None:
        horizon = 12.0 / inst.gamma
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    rows, _, _ = _simulate(inst, analysis, n, policy, horizon, seed, rep, record=True)
    times = np.array([r[0] for r in rows])
    return QcpTrace(
        n=n,
        horizon=horizon,
        times=times,
        x=np.array([r[1] for r in rows], dtype=np.int64),
        arrivals=np.array([r[2] for r in rows], dtype=np.int64),
        departures=np.array([r[3] for r in rows], dtype=np.int64),
        busy=np.array([r[4] for r in rows]),
        alloc=np.array([r[5] for r in rows]),
    )


def _doubled_grid(trace: QcpTrace):
    """Interleave left limits: count-like rows repeat the previous row,
    the busyness advances linearly at the recorded allocation."""
    e = len(trace.times)
    if e == 1:
        return trace.times, trace.x, trace.arrivals, trace.departures, trace.busy
    p = 2 * e - 1
    times = np.empty(p)
    times[0] = trace.times[0]
    times[1::2] = trace.times[1:]
    times[2::2] = trace.times[1:]
    gaps = (trace.times[1:] - trace.times[:-1])[:, None]
    busy_pre = trace.busy[:-1] + trace.alloc[:-1] * gaps

    def interleave(post: np.ndarray, pre: np.ndarray) -> np.ndarray:
        out = np.empty((p,) + post.shape[1:], dtype=post.dtype)
        out[0] = post[0]
        out[1::2] = pre
        out[2::2] = post[1:]
        return out

    x = interleave(trace.x, trace.x[:-1])
    arrivals = interleave(trace.arrivals, trace.arrivals[:-1])
    departures = interleave(trace.departures, trace.departures[:-1])
    busy = interleave(trace.busy, busy_pre)
    return times, x, arrivals, departures, busy


def compute_scaled(trace: QcpTrace, n: int, analysis: LpAnalysis) -> ScaledSeries:
    """Diffusion-scaled series on the doubled event grid.

    Verifies the workload identity W = F + L + Lan; a residual beyond
    rounding (1e-6 of the series scale) aborts, since the identity is
    algebraically exact.
    """
    if n != trace.n:
        raise ValueError("n does not match the trace")
    if not analysis.assumptions.all_pass:
        raise AssumptionError(
            "scaled series need the unique dual point and classification",
            analysis.assumptions.failing_parts,
        )
    inst = analysis.instance
    ni, nk, nj = inst.num_classes, inst.num_servers, inst.num_activities
    times, x, arrivals, departures, busy = _doubled_grid(trace)
    rt = math.sqrt(n)
    lam_f = np.array([float(v) for v in inst.lam])
    mu_f = np.array([float(v) for v in inst.mu])
    y_f = np.array([float(v) for v in analysis.dual.y])
    z_f = np.array([float(v) for v in analysis.dual.z])
    h_f = np.array(inst.h)

    cls_mat = np.zeros((ni, nj))
    srv_mat = np.zeros((nk, nj))
    for j, act in enumerate(inst.activities):
        cls_mat[act.class_index - 1, j] = 1.0
        srv_mat[act.server_index - 1, j] = 1.0

    x_hat = x / rt
    a_hat = (arrivals - n * lam_f[None, :] * times[:, None]) / rt
    s_hat = (departures - n * mu_f[None, :] * busy) / rt
    i_hat = rt * (times[:, None] - busy @ srv_mat.T)
    w = x_hat @ y_f
    f = (a_hat - s_hat @ cls_mat.T) @ y_f
    l = i_hat @ z_f
    an_coef = np.zeros(nj)
    for j, act in enumerate(inst.activities):
        if analysis.classification[j] is ActivityClass.ALWAYS_NONBASIC:
            an_coef[j] = float(
                analysis.dual.z[act.server_index - 1]
                - analysis.dual.y[act.class_index - 1] * inst.mu[j]
            )
    l_an = rt * (busy @ an_coef)
    h = x_hat @ h_f

    scale = max(1.0, float(np.max(np.abs(w))), float(np.max(np.abs(f))))
    residual = float(np.max(np.abs(w - f - l - l_an)))
    if residual > 1e-6 * scale:
        raise SimulatorInvariantError(
            f"workload identity residual {residual:.3e} exceeds rounding at scale {scale:.3e}"
        )
    return ScaledSeries(
        times=times,
        x_hat=x_hat,
        a_hat=a_hat,
        s_hat=s_hat,
        i_hat=i_hat,
        w=w,
        f=f,
        l=l,
        l_an=l_an,
        h=h,
        scale=scale,
        identity_residual=residual,
    )


def check_trace_inequalities(series: ScaledSeries, analysis: LpAnalysis) -> TraceChecks:
    """Pathwise relations underlying the lower bound, as max violations
    relative to the series scale (all should be at rounding level)."""
    inst = analysis.instance
    q = analysis.q
    ratio = inst.h[q] / float(analysis.dual.y[q])
    s = series.scale

    viol_h = float(np.max(ratio * series.w - series.h, initial=0.0))
    off_axis = series.x_hat.sum(axis=1) - series.x_hat[:, q]
    on_axis = off_axis == 0.0
    eq_viol = 0.0
    if np.any(on_axis):
        eq_viol = float(np.max(np.abs(series.h[on_axis] - ratio * series.w[on_axis])))
    phi, _ = skorokhod_map(series.f)
    viol_reflect = float(np.max(phi - series.w, initial=0.0))
    viol_state = max(0.0, -float(np.min(series.x_hat)))
    viol_idle = max(0.0, -float(np.min(np.diff(series.i_hat, axis=0), initial=0.0)))
    return TraceChecks(
        cost_vs_workload=viol_h / s,
        cost_equality_on_axis=eq_viol / s,
        reflection=viol_reflect / s,
        state_nonneg=viol_state / s,
        idleness_monotone=viol_idle / s,
    )


def _rep_cost(args) -> tuple[float, float]:
    inst, analysis, n, policy, horizon, seed, rep = args
    _, cost, h_t = _simulate(inst, analysis, n, policy, horizon, seed, rep, record=False)
    return cost, h_t


def estimate_qcp_cost(
    inst: PssInstance,
    analysis: LpAnalysis,
    n: int,
    policy: PolicySpec,
    n_reps: int,
    horizon: float | None = None,
    seed: int = 0,
    threads: int | None = None,
) -> McEstimate:
    """Monte Carlo discounted holding cost of the scaled state.

    The per-replication integral of exp(-gamma t) h.Xhat is evaluated
    exactly between events. Replication r draws from streams keyed by
    (seed, r), so estimates do not depend on scheduling; PSS_THREADS (or
    the threads argument) enables a process pool over replications.
    """
    if n_reps < 2:
        raise ValueError("n_reps must be at least 2")
    if horizon is None:
        horizon = 12.0 / inst.gamma
    if threads is None:
        threads = int(os.environ.get("PSS_THREADS", "1"))
    tasks = [(inst, analysis, n, policy, horizon, seed, rep) for rep in range(n_reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_rep_cost, tasks, chunksize=max(1, n_reps // (4 * threads))))
    else:
        results = [_rep_cost(task) for task in tasks]
    costs = np.array([r[0] for r in results])
    tail_h = float(np.mean([r[1] for r in results]))
    mean = float(np.mean(costs))
    hw = float(Z95 * np.std(costs, ddof=1) / math.sqrt(n_reps))
    return McEstimate(
        mean=mean,
        half_width_95=hw,
        n_paths=n_reps,
        step=0.0,
        horizon=horizon,
        truncation_bound=math.exp(-inst.gamma * horizon) * tail_h / inst.gamma,
    )


@dataclass(frozen=True)
class BoundRun:
    n: int
    policy: str
    mean: float
    half_width_95: float
    margin: float
    ok: bool


@dataclass(frozen=True)
class BoundReport:
    """Lower bound comparison: every simulated cost should be at least
    v0 - 2 CI; min_by_n reports the best policy cost at each n."""

    v0: float
    u0: float
    runs: tuple[BoundRun, ...]
    min_by_n: tuple[tuple[int, float], ...]
    verdict: str


def verify_lower_bound(
    inst: PssInstance,
    analysis: LpAnalysis,
    solution: HjbSolution,
    n_list: tuple[int, ...],
    policies: tuple[PolicySpec, ...],
    n_reps: int,
    horizon: float | None = None,
    seed: int = 0,
    threads: int | None = None,
) -> BoundReport:
    """Compare simulated costs at each (n, policy) against the bound v0."""
    if not analysis.assumptions.all_pass:
        raise AssumptionError(
            "the lower bound is defined only under the structural assumptions",
            analysis.assumptions.failing_parts,
        )
    q = analysis.q
    v0 = inst.h[q] / float(analysis.dual.y[q]) * solution.u0
    runs = []
    for n in n_list:
        for policy in policies:
            est = estimate_qcp_cost(
                inst, analysis, n, policy, n_reps, horizon=horizon, seed=seed, threads=threads
            )
            margin = est.mean - v0
            runs.append(
                BoundRun(
                    n=n,
                    policy=policy.label,
                    mean=est.mean,
                    half_width_95=est.half_width_95,
                    margin=margin,
                    ok=margin >= -2.0 * est.half_width_95,
                )
            )
    min_by_n = tuple(
        (n, min(r.mean for r in runs if r.n == n)) for n in n_list
    )
    verdict = "PASS" if all(r.ok for r in runs) else "FAIL"
    return BoundReport(v0=v0, u0=solution.u0, runs=tuple(runs), min_by_n=min_by_n, verdict=verdict)


def identity_residual_exact(trace: QcpTrace, n: int, analysis: LpAnalysis) -> Fraction:
    """Recompute the workload identity in exact rational arithmetic.

    Requires n to be a perfect square so sqrt(n) is rational. Event data
    (floats) promote to rationals exactly, so the returned residual is
    identically zero unless the simulator's bookkeeping is broken.
    """
    rt = math.isqrt(n)
    if rt * rt != n:
        raise ValueError("exact shadow check needs a square n")
    inst = analysis.instance
    y = analysis.dual.y
    z = analysis.dual.z
    times, x, arrivals, departures, busy = _doubled_grid(trace)
    an = [
        c is ActivityClass.ALWAYS_NONBASIC for c in analysis.classification
    ]
    worst = Fraction(0)
    for p in range(len(times)):
        t = Fraction(float(times[p]))
        busy_p = [Fraction(float(v)) for v in busy[p]]
        w = sum(y[i] * int(x[p][i]) for i in range(inst.num_classes)) / rt
        f = Fraction(0)
        for i in range(inst.num_classes):
            acc = Fraction(int(arrivals[p][i])) - n * inst.lam[i] * t
            for j in inst.class_activities[i]:
                acc -= Fraction(int(departures[p][j])) - n * inst.mu[j] * busy_p[j]
            f += y[i] * acc
        f /= rt
        l = Fraction(0)
        for k in range(inst.num_servers):
            idle = t - sum(busy_p[j] for j in inst.server_activities[k])
            l += z[k] * idle
        l *= rt
        l_an = Fraction(0)
        for j, act in enumerate(inst.activities):
            if an[j]:
                l_an += (z[act.server_index - 1] - y[act.class_index - 1] * inst.mu[j]) * busy_p[j]
        l_an *= rt
        res = abs(w - f - l - l_an)
        if res > worst:
            worst = res
    return worst
