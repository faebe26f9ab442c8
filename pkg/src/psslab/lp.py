"""Static allocation analysis for parallel server systems.

The first order planning problem assigns to each activity j = (i, k) a
long-run effort fraction xi_j:

    minimize rho  subject to  R xi = lambda,  G xi <= rho 1,  xi >= 0.

A system is critically loaded when rho* = 1. Its dual,

    maximize y.lambda  subject to  sum_k z_k = 1,  y_i mu_j <= z_k
    for every activity j = (i, k),  z >= 0,

prices classes (y) and servers (z). The heavy traffic analysis rests on
three structural conditions, validated here exactly:

  1. critical load: rho* = 1;
  2. full server load: every optimal allocation works every server at
     rate exactly 1;
  3. a unique dual optimum (y*, z*).

Under these, the optimal allocations form a bounded polytope whose
extreme points are the "modes". Activities split into potentially basic
(y*_i mu_j = z_k, used by some optimal allocation) and always nonbasic
(y*_i mu_j < z_k, never used). Each mode induces the drift and variance
coefficients of the one-dimensional workload diffusion; the workload
direction is y* and the effective holding cost is driven by the class q
minimizing h_i / y*_i.

All first order computations are exact over the rationals.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .exactlp import LpStatus, enumerate_basic_feasible, solve_lp
from .model import MatrixPair, PssInstance, build_matrices

ZERO = Fraction(0)
ONE = Fraction(1)


class AnalysisError(RuntimeError):
    """Internal inconsistency between exact routes; indicates a bug."""


class AssumptionError(RuntimeError):
    """An operation requiring the structural assumptions was invoked on an
    instance that fails them."""

    def __init__(self, message: str, failing_parts: tuple[int, ...] = ()):
        super().__init__(message)
        self.failing_parts = failing_parts


class ActivityClass(Enum):
    POTENTIALLY_BASIC = "potentially_basic"
    ALWAYS_NONBASIC = "always_nonbasic"


@dataclass(frozen=True)
class Mode:
    """Extreme point of the optimal allocation polytope."""

    index: int
    xi: tuple[Fraction, ...]
    degenerate: bool


@dataclass(frozen=True)
class DualSolution:
    y: tuple[Fraction, ...]
    z: tuple[Fraction, ...]


@dataclass(frozen=True)
class DualFace:
    """Coordinate ranges of the dual optimal face.

    ``ranges`` holds (min, max) for the coordinates y_1..y_I, z_1..z_K in
    that order. When all ranges are degenerate the face is the single
    point ``point``; otherwise ``witnesses`` carries two distinct dual
    optima, the minimizer and maximizer of the first non-unique
    coordinate.
    """

    unique: bool
    point: DualSolution | None
    witnesses: tuple[DualSolution, DualSolution] | None
    ranges: tuple[tuple[Fraction, Fraction], ...]


@dataclass(frozen=True)
class AssumptionReport:
    rho_star: Fraction
    critical: bool
    fully_loaded: bool
    dual_unique: bool
    load_witness: tuple[int, int, Fraction] | None
    dual_witnesses: tuple[DualSolution, DualSolution] | None

    @property
    def all_pass(self) -> bool:
        return self.critical and self.fully_loaded and self.dual_unique

    @property
    def failing_parts(self) -> tuple[int, ...]:
        parts = []
        if not self.critical:
            parts.append(1)
        if not self.fully_loaded:
            parts.append(2)
        if not self.dual_unique:
            parts.append(3)
        return tuple(parts)


@dataclass(frozen=True)
class Decomposition:
    """Service rates factor as mu_(i,k) = alpha_i beta_k with sum beta = 1."""

    alpha: tuple[Fraction, ...]
    beta: tuple[Fraction, ...]


@dataclass(frozen=True)
class DecompositionReport:
    status: str  # "decomposable" | "not_decomposable" | "not_applicable"
    decomposition: Decomposition | None
    detail: str


@dataclass(frozen=True)
class LpAnalysis:
    """Full exact analysis of an instance.

    ``dual``, ``classification``, ``q`` and ``coefficients`` are None when
    the corresponding assumption fails (there is then no unique dual to
    classify against). Mode indices are 0-based positions in the
    lexicographically sorted mode list.
    """

    instance: PssInstance
    rho_star: Fraction
    modes: tuple[Mode, ...]
    dual: DualSolution | None
    classification: tuple[ActivityClass, ...] | None
    assumptions: AssumptionReport
    q: int | None
    coefficients: tuple[tuple[float, float], ...] | None
    decomposition: DecompositionReport

    @property
    def degenerate_modes(self) -> tuple[bool, ...]:
        return tuple(m.degenerate for m in self.modes)


def solve_primal(inst: PssInstance) -> tuple[Fraction, tuple[Fraction, ...]]:
    """Exact optimum (rho*, xi*) of the allocation LP."""
    mats = build_matrices(inst)
    nj = inst.num_activities
    c = [ZERO] * nj + [ONE]
    a_eq = [list(row) + [ZERO] for row in mats.r]
    b_eq = list(inst.lam)
    a_ub = [list(row) + [-ONE] for row in mats.g]
    b_ub = [ZERO] * inst.num_servers
    res = solve_lp(c, a_eq, b_eq, a_ub, b_ub)
    if res.status is not LpStatus.OPTIMAL:
        raise AnalysisError(f"allocation LP is {res.status.value}; instance invariants violated")
    return res.value, res.x[:nj]


def _dual_constraints(inst: PssInstance) -> tuple[list, list, list, list]:
    """Constraint blocks of the dual over variables (y_1..y_I, z_1..z_K)."""
    ni, nk = inst.num_classes, inst.num_servers
    n = ni + nk
    a_eq = [[ZERO] * ni + [ONE] * nk]
    b_eq = [ONE]
    a_ub = []
    for j, act in enumerate(inst.activities):
        row = [ZERO] * n
        row[act.class_index - 1] = inst.mu[j]
        row[ni + act.server_index - 1] = -ONE
        a_ub.append(row)
    b_ub = [ZERO] * inst.num_activities
    return a_eq, b_eq, a_ub, b_ub


def solve_dual(inst: PssInstance, rho_star: Fraction | None = None) -> DualFace:
    """Describe the dual optimal face by exact coordinate ranges.

    Each of y_1..y_I, z_1..z_K is minimized and maximized over the face
    {dual feasible, y.lambda = rho*}; 2(I+K) small exact LPs in total.
    """
    if rho_star is None:
        rho_star, _ = solve_primal(inst)
    ni, nk = inst.num_classes, inst.num_servers
    n = ni + nk
    nonneg = [False] * ni + [True] * nk
    a_eq, b_eq, a_ub, b_ub = _dual_constraints(inst)

    obj = [-v for v in inst.lam] + [ZERO] * nk
    base = solve_lp(obj, a_eq, b_eq, a_ub, b_ub, nonneg)
    if base.status is not LpStatus.OPTIMAL or -base.value != rho_star:
        raise AnalysisError("dual optimum does not match the primal optimum")

    face_eq = a_eq + [list(inst.lam) + [ZERO] * nk]
    face_b = b_eq + [rho_star]
    ranges: list[tuple[Fraction, Fraction]] = []
    witnesses: tuple[DualSolution, DualSolution] | None = None
    for coord in range(n):
        c_min = [ZERO] * n
        c_min[coord] = ONE
        lo = solve_lp(c_min, face_eq, face_b, a_ub, b_ub, nonneg)
        c_max = [ZERO] * n
        c_max[coord] = -ONE
        hi = solve_lp(c_max, face_eq, face_b, a_ub, b_ub, nonneg)
        if lo.status is not LpStatus.OPTIMAL or hi.status is not LpStatus.OPTIMAL:
            raise AnalysisError("dual face scan failed; face should be a bounded polytope")
        ranges.append((lo.value, -hi.value))
        if witnesses is None and lo.value != -hi.value:
            witnesses = (
                DualSolution(y=lo.x[:ni], z=lo.x[ni:]),
                DualSolution(y=hi.x[:ni], z=hi.x[ni:]),
            )
    unique = witnesses is None
    point = None
    if unique:
        flat = [r[0] for r in ranges]
        point = DualSolution(y=tuple(flat[:ni]), z=tuple(flat[ni:]))
    return DualFace(unique=unique, point=point, witnesses=witnesses, ranges=tuple(ranges))


def enumerate_modes(
    inst: PssInstance, rho_star: Fraction = ONE, mats: MatrixPair | None = None
) -> tuple[Mode, ...]:
    """Extreme points of {xi >= 0 : R xi = lambda, G xi <= rho* 1}.

    Enumerated exactly via basic feasible solutions of the slack-extended
    equality system, deduplicated, sorted lexicographically. A mode is
    flagged degenerate when its support has fewer than I + K - 1
    activities, i.e. a basic variable vanishes once all server constraints
    bind.
    """
    if mats is None:
        mats = build_matrices(inst)
    ni, nk, nj = inst.num_classes, inst.num_servers, inst.num_activities
    a = []
    b = []
    for row in mats.r:
        a.append(list(row) + [ZERO] * nk)
        b.append(None)
    for i in range(ni):
        b[i] = inst.lam[i]
    for k, row in enumerate(mats.g):
        slack = [ZERO] * nk
        slack[k] = ONE
        a.append(list(row) + slack)
        b.append(rho_star)
    vertices = enumerate_basic_feasible(a, b)
    modes = []
    seen: set[tuple[Fraction, ...]] = set()
    for x in vertices:
        xi = x[:nj]
        if xi in seen:
            continue
        seen.add(xi)
        _verify_vertex(inst, mats, xi, rho_star)
        support = sum(1 for v in xi if v != 0)
        modes.append((xi, support < ni + nk - 1))
    modes.sort(key=lambda t: t[0])
    return tuple(Mode(index=m, xi=xi, degenerate=deg) for m, (xi, deg) in enumerate(modes))


def _verify_vertex(
    inst: PssInstance, mats: MatrixPair, xi: tuple[Fraction, ...], rho_star: Fraction
) -> None:
    """Check feasibility and the vertex rank condition; exact, no tolerances."""
    for i, row in enumerate(mats.r):
        if sum(c * v for c, v in zip(row, xi)) != inst.lam[i]:
            raise AnalysisError("mode fails R xi = lambda")
    binding = []
    for row in mats.g:
        load = sum(c * v for c, v in zip(row, xi))
        if load > rho_star:
            raise AnalysisError("mode exceeds server capacity")
        if load == rho_star:
            binding.append(row)
    support = [j for j, v in enumerate(xi) if v != 0]
    stacked = [[row[j] for j in support] for row in list(mats.r) + binding]
    if _rank(stacked) != len(support):
        raise AnalysisError("enumerated point is not a vertex")


def _rank(rows: list[list[Fraction]]) -> int:
    mat = [row[:] for row in rows]
    rank = 0
    ncols = len(mat[0]) if mat else 0
    for col in range(ncols):
        piv = next((r for r in range(rank, len(mat)) if mat[r][col] != 0), None)
        if piv is None:
            continue
        mat[rank], mat[piv] = mat[piv], mat[rank]
        inv = ONE / mat[rank][col]
        mat[rank] = [v * inv for v in mat[rank]]
        for r in range(len(mat)):
            if r != rank and mat[r][col] != 0:
                f = mat[r][col]
                mat[r] = [v - f * w for v, w in zip(mat[r], mat[rank])]
        rank += 1
        if rank == len(mat):
            break
    return rank


def classify_activities(
    inst: PssInstance,
    dual: DualSolution,
    modes: tuple[Mode, ...] | None = None,
) -> tuple[ActivityClass, ...]:
    """Split activities by the exact dual comparison y*_i mu_j vs z*_k.

    Cross-checked against the union of mode supports: the potentially
    basic set must be exactly the set of activities used by some mode.
    A mismatch means one of the exact routes is broken, so it aborts.
    """
    out = []
    for j, act in enumerate(inst.activities):
        lhs = dual.y[act.class_index - 1] * inst.mu[j]
        rhs = dual.z[act.server_index - 1]
        if lhs > rhs:
            raise AnalysisError("dual point violates feasibility y_i mu_j <= z_k")
        out.append(
            ActivityClass.POTENTIALLY_BASIC if lhs == rhs else ActivityClass.ALWAYS_NONBASIC
        )
    if modes is None:
        modes = enumerate_modes(inst)
    used = set()
    for mode in modes:
        for j, v in enumerate(mode.xi):
            if v != 0:
                used.add(j)
    claimed = {j for j, c in enumerate(out) if c is ActivityClass.POTENTIALLY_BASIC}
    if used != claimed:
        raise AnalysisError(
            f"activity classification mismatch: dual comparison gives {sorted(claimed)}, "
            f"mode supports give {sorted(used)}"
        )
    return tuple(out)


def validate_assumptions(inst: PssInstance) -> AssumptionReport:
    """Exact pass/fail for the three structural conditions, with witnesses."""
    rho_star, _ = solve_primal(inst)
    critical = rho_star == ONE
    modes = enumerate_modes(inst, rho_star=rho_star)
    mats = build_matrices(inst)
    load_witness = None
    for mode in modes:
        for k, row in enumerate(mats.g):
            load = sum(c * v for c, v in zip(row, mode.xi))
            if load != rho_star:
                load_witness = (mode.index, k, load)
                break
        if load_witness is not None:
            break
    face = solve_dual(inst, rho_star=rho_star)
    return AssumptionReport(
        rho_star=rho_star,
        critical=critical,
        fully_loaded=load_witness is None,
        dual_unique=face.unique,
        load_witness=load_witness,
        dual_witnesses=face.witnesses,
    )


def check_decomposable(inst: PssInstance) -> DecompositionReport:
    """Look for a factorization mu_(i,k) = alpha_i beta_k, sum beta = 1.

    The factorization is propagated over the bipartite activity graph and
    checked on every present activity. When the graph is connected the
    normalization sum_k beta_k = 1 pins (alpha, beta) down uniquely; a
    disconnected graph leaves free scalings, which is reported as not
    applicable rather than guessed.
    """
    ni, nk = inst.num_classes, inst.num_servers
    mu_of: dict[tuple[int, int], Fraction] = {}
    for j, act in enumerate(inst.activities):
        mu_of[(act.class_index - 1, act.server_index - 1)] = inst.mu[j]

    alpha_t: list[Fraction | None] = [None] * ni
    beta_t: list[Fraction | None] = [None] * nk
    beta_t[inst.activities[0].server_index - 1] = ONE
    changed = True
    while changed:
        changed = False
        for (i, k), mu in mu_of.items():
            if beta_t[k] is not None and alpha_t[i] is None:
                alpha_t[i] = mu / beta_t[k]
                changed = True
            elif alpha_t[i] is not None and beta_t[k] is None:
                beta_t[k] = mu / alpha_t[i]
                changed = True
    if any(v is None for v in alpha_t) or any(v is None for v in beta_t):
        return DecompositionReport(
            status="not_applicable",
            decomposition=None,
            detail="activity graph is disconnected; factor scalings are not determined",
        )
    for (i, k), mu in mu_of.items():
        if alpha_t[i] * beta_t[k] != mu:
            return DecompositionReport(
                status="not_decomposable",
                decomposition=None,
                detail=f"rate of activity ({i + 1},{k + 1}) is inconsistent with a product form",
            )
    total = sum(beta_t, ZERO)
    beta = tuple(v / total for v in beta_t)
    alpha = tuple(v * total for v in alpha_t)
    return DecompositionReport(
        status="decomposable",
        decomposition=Decomposition(alpha=alpha, beta=beta),
        detail="",
    )


def mode_coefficients(
    inst: PssInstance, mode: Mode, dual: DualSolution
) -> tuple[float, float]:
    """Workload drift b_m and variance sigma^2_m of a mode.

    b_m      = sum_i y*_i (hat_lambda_i - sum_{j in J_i} hat_mu_j xi_j)
    sigma2_m = sum_i y*_i^2 (lambda_i C2_A_i + sum_{j in J_i} mu_j C2_S_j xi_j)

    Evaluated in exact rational arithmetic (floats promoted exactly), then
    rounded once to float.
    """
    b = ZERO
    s2 = ZERO
    for i in range(inst.num_classes):
        y = dual.y[i]
        b += y * (Fraction(inst.hat_lambda[i]))
        s2 += y * y * inst.lam[i] * Fraction(inst.c2_arrival[i])
    for j, act in enumerate(inst.activities):
        y = dual.y[act.class_index - 1]
        b -= y * Fraction(inst.hat_mu[j]) * mode.xi[j]
        s2 += y * y * inst.mu[j] * Fraction(inst.c2_service[j]) * mode.xi[j]
    return float(b), float(s2)


def select_q(h: tuple[float, ...], dual: DualSolution) -> int:
    """Class index (0-based) minimizing h_i / y*_i; ties to the smallest."""
    best = None
    best_i = -1
    for i, (hi, yi) in enumerate(zip(h, dual.y)):
        if yi <= 0:
            raise AnalysisError("dual class prices must be positive under the assumptions")
        ratio = Fraction(hi) / yi
        if best is None or ratio < best:
            best = ratio
            best_i = i
    return best_i


def analyze(inst: PssInstance) -> LpAnalysis:
    """Run the full exact pipeline; partial results when assumptions fail."""
    report = validate_assumptions(inst)
    modes = enumerate_modes(inst, rho_star=report.rho_star)
    decomposition = check_decomposable(inst)
    dual = None
    classification = None
    q = None
    coefficients = None
    if report.dual_unique:
        face = solve_dual(inst, rho_star=report.rho_star)
        dual = face.point
    if report.all_pass:
        classification = classify_activities(inst, dual, modes=modes)
        q = select_q(inst.h, dual)
        coefficients = tuple(mode_coefficients(inst, mode, dual) for mode in modes)
    return LpAnalysis(
        instance=inst,
        rho_star=report.rho_star,
        modes=modes,
        dual=dual,
        classification=classification,
        assumptions=report,
        q=q,
        coefficients=coefficients,
        decomposition=decomposition,
    )
