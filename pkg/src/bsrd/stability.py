"""Linear stability analysis of the coupled bulk-surface system.

The 4x4 kinetics Jacobian is block lower-triangular, so its characteristic
polynomial factors into the bulk and surface quadratics

    (lambda^2 - Tr_B lambda + Det_B) (lambda^2 - Tr_S lambda + Det_S),

which makes every stability question answerable from the two 2x2 blocks.
This module evaluates the six Routh-Hurwitz conditions of the quartic, the
spatial dispersion relations over spherical-harmonic modes k^2 = l(l+1),
critical diffusion ratios, and a regime classifier combining them.

Conditions 5 and 6 are the scaled Hurwitz minors a1*a2 - a3 and
a3*(a1*a2 - a3) - a1^2*a4 written in block form; together with positivity
of the coefficients they are necessary and sufficient for all four
eigenvalues to lie in the open left half-plane.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .kinetics import (
    CouplingParams,
    DiffusionParams,
    JacobianBlocks,
    KineticParams,
    compatibility_residual,
    jacobian_at,
    reaction_derivs,
    steady_state,
    steady_state_residual,
)

#: Relative half-width of the band around zero inside which a strict
#: inequality is reported as marginal rather than pass/fail.
MARGINAL_BAND = 1e-10


class Regime(enum.Enum):
    NO_PATTERN = "NoPattern"
    BULK_ONLY = "BulkOnly"
    SURFACE_ONLY = "SurfaceOnly"
    BOTH = "Both"
    HOMOGENEOUS_UNSTABLE = "HomogeneousUnstable"


class StabilityPreconditionError(ValueError):
    """A classical Turing prerequisite (stable, positive-determinant block)
    does not hold for the requested computation."""


@dataclass(frozen=True)
class ConditionCheck:
    """Evaluated left-hand side of one strict inequality."""

    value: float
    holds: bool
    marginal: bool

    @staticmethod
    def positive(value: float, scale: float) -> "ConditionCheck":
        marginal = abs(value) <= MARGINAL_BAND * max(1.0, scale)
        return ConditionCheck(value=value, holds=value > 0.0, marginal=marginal)

    @staticmethod
    def negative(value: float, scale: float) -> "ConditionCheck":
        marginal = abs(value) <= MARGINAL_BAND * max(1.0, scale)
        return ConditionCheck(value=value, holds=value < 0.0, marginal=marginal)


@dataclass(frozen=True)
class TuringPair:
    """The two diffusion-dependent instability conditions for one branch:
    d*f_x + g_y > 0 and (d*f_x + g_y)^2 - 4*d*Det > 0."""

    excess: float
    discriminant: float
    holds: bool
    marginal: bool


@dataclass(frozen=True)
class QuarticCoeffs:
    """Coefficients of lambda^4 + a1 l^3 + a2 l^2 + a3 l + a4."""

    a1: float
    a2: float
    a3: float
    a4: float

    def as_array(self) -> np.ndarray:
        return np.array([1.0, self.a1, self.a2, self.a3, self.a4])


@dataclass(frozen=True)
class StabilityReport:
    """Outcome of the homogeneous (diffusion-free) stability analysis.

    ``eigenvalues`` holds the four roots obtained directly from the two
    quadratic factors and serves as the internal oracle for the condition
    suite.  ``zero_root_marginal`` flags a4 ~ 0, where lambda = 0 is a root
    and the six-condition equivalence is suspended.
    """

    trace_full: float
    trace_bulk: float
    trace_surf: float
    det_bulk: float
    det_surf: float
    cond1: ConditionCheck
    cond2: ConditionCheck
    cond3: ConditionCheck
    cond4: ConditionCheck
    cond5: ConditionCheck
    cond6: ConditionCheck
    eigenvalues: np.ndarray
    zero_root_marginal: bool
    turing_bulk: TuringPair | None = None
    turing_surf: TuringPair | None = None

    @property
    def all_conditions_hold(self) -> bool:
        return all(c.holds for c in (self.cond1, self.cond2, self.cond3,
                                     self.cond4, self.cond5, self.cond6))

    @property
    def max_real_eigenvalue(self) -> float:
        return float(np.max(self.eigenvalues.real))

    def condition_items(self):
        for i, cond in enumerate((self.cond1, self.cond2, self.cond3,
                                  self.cond4, self.cond5, self.cond6), start=1):
            yield f"cond{i}", cond


@dataclass(frozen=True)
class DispersionRow:
    l: int
    k2: int
    lambda_bulk: tuple[complex, complex]
    lambda_surf: tuple[complex, complex]
    max_re_bulk: float
    max_re_surf: float


@dataclass
class DispersionTable:
    rows: list[DispersionRow] = field(default_factory=list)

    def unstable_bulk_modes(self) -> list[int]:
        return [row.l for row in self.rows if row.max_re_bulk > 0.0]

    def unstable_surface_modes(self) -> list[int]:
        return [row.l for row in self.rows if row.max_re_surf > 0.0]

    def max_growth_bulk(self) -> tuple[int, float]:
        row = max(self.rows, key=lambda r: r.max_re_bulk)
        return row.l, row.max_re_bulk

    def max_growth_surf(self) -> tuple[int, float]:
        row = max(self.rows, key=lambda r: r.max_re_surf)
        return row.l, row.max_re_surf

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["l", "k2",
                             "re_lambda_bulk_1", "im_lambda_bulk_1",
                             "re_lambda_bulk_2", "im_lambda_bulk_2",
                             "re_lambda_surf_1", "im_lambda_surf_1",
                             "re_lambda_surf_2", "im_lambda_surf_2",
                             "max_re_bulk", "max_re_surf"])
            for row in self.rows:
                lb1, lb2 = row.lambda_bulk
                ls1, ls2 = row.lambda_surf
                writer.writerow([row.l, row.k2,
                                 lb1.real, lb1.imag, lb2.real, lb2.imag,
                                 ls1.real, ls1.imag, ls2.real, ls2.imag,
                                 row.max_re_bulk, row.max_re_surf])


def solve_quadratic(b: float, c: float) -> tuple[complex, complex]:
    """Roots of lambda^2 + b*lambda + c = 0, cancellation-free.

    For real roots the larger-magnitude one is computed from the stable
    formula -(b + sign(b)*sqrt(disc))/2 and the other as c over it.
    """
    disc = b * b - 4.0 * c
    if disc >= 0.0:
        s = math.sqrt(disc)
        q = -0.5 * (b + math.copysign(s, b))
        if q == 0.0:
            return complex(0.0), complex(-b)
        return complex(q), complex(c / q)
    s = math.sqrt(-disc)
    return complex(-0.5 * b, 0.5 * s), complex(-0.5 * b, -0.5 * s)


def _block_traces_dets(j: JacobianBlocks):
    jb = np.asarray(j.j_bulk, dtype=float)
    js = np.asarray(j.j_surf, dtype=float)
    tr_b = jb[0, 0] + jb[1, 1]
    tr_s = js[0, 0] + js[1, 1]
    det_b = jb[0, 0] * jb[1, 1] - jb[0, 1] * jb[1, 0]
    det_s = js[0, 0] * js[1, 1] - js[0, 1] * js[1, 0]
    return tr_b, tr_s, det_b, det_s


def quartic_coeffs(j: JacobianBlocks) -> QuarticCoeffs:
    """Characteristic-polynomial coefficients of the 4x4 Jacobian."""
    tr_b, tr_s, det_b, det_s = _block_traces_dets(j)
    return QuarticCoeffs(
        a1=-(tr_b + tr_s),
        a2=det_b + det_s + tr_b * tr_s,
        a3=-(det_b * tr_s + det_s * tr_b),
        a4=det_b * det_s,
    )


def quartic_factors(j: JacobianBlocks) -> tuple[np.ndarray, np.ndarray]:
    """The two quadratic factors (1, -Tr, Det) of the characteristic
    polynomial, bulk first; their product expands to ``quartic_coeffs``."""
    tr_b, tr_s, det_b, det_s = _block_traces_dets(j)
    return (np.array([1.0, -tr_b, det_b]), np.array([1.0, -tr_s, det_s]))


def routh_hurwitz(j: JacobianBlocks) -> StabilityReport:
    """Evaluate the six stability conditions of the block quartic.

    The conditions are, in block form: trace negative, a2 > 0, a3 > 0
    (stated as its negated sum), a4 > 0, and the two Hurwitz minors
    a1*a2 - a3 > 0 (times 2) and a3*(a1*a2 - a3) - a1^2*a4 > 0.  All six
    hold iff every eigenvalue has negative real part, provided a4 != 0.
    """
    tr_b, tr_s, det_b, det_s = _block_traces_dets(j)
    tr = tr_b + tr_s

    scale1 = abs(tr_b) + abs(tr_s)
    cond1 = ConditionCheck.negative(tr, scale1)

    v2 = det_b + det_s + tr_b * tr_s
    scale2 = abs(det_b) + abs(det_s) + abs(tr_b * tr_s)
    cond2 = ConditionCheck.positive(v2, scale2)

    v3 = det_b * tr_s + det_s * tr_b
    scale3 = abs(det_b * tr_s) + abs(det_s * tr_b)
    cond3 = ConditionCheck.negative(v3, scale3)

    v4 = det_b * det_s
    cond4 = ConditionCheck.positive(v4, abs(v4))

    # 2*(a1*a2 - a3) in block form.
    t5a = (tr_s * tr + 2.0 * det_b) * tr_b
    t5b = (tr_b * tr + 2.0 * det_s) * tr_s
    v5 = -(t5a + t5b)
    cond5 = ConditionCheck.positive(v5, abs(t5a) + abs(t5b))

    # a3*(a1*a2 - a3) - a1^2*a4 in block form.
    t6a = (det_b - det_s) ** 2
    t6b = (det_b * tr_s + det_s * tr_b) * tr
    v6 = (t6a + t6b) * tr_b * tr_s
    cond6 = ConditionCheck.positive(v6, (abs(t6a) + abs(t6b)) * abs(tr_b * tr_s))

    roots_b = solve_quadratic(-tr_b, det_b)
    roots_s = solve_quadratic(-tr_s, det_s)
    eigenvalues = np.array(list(roots_b) + list(roots_s))

    zero_root = abs(v4) <= MARGINAL_BAND * max(
        1.0, abs(det_b) * abs(det_s), abs(det_b), abs(det_s))

    return StabilityReport(
        trace_full=tr, trace_bulk=tr_b, trace_surf=tr_s,
        det_bulk=det_b, det_surf=det_s,
        cond1=cond1, cond2=cond2, cond3=cond3,
        cond4=cond4, cond5=cond5, cond6=cond6,
        eigenvalues=eigenvalues, zero_root_marginal=zero_root,
    )


def turing_pair(f_x: float, f_y: float, g_x: float, g_y: float,
                d: float) -> TuringPair:
    """Evaluate the diffusion-driven instability pair for one branch."""
    det = f_x * g_y - f_y * g_x
    excess = d * f_x + g_y
    disc = excess * excess - 4.0 * d * det
    scale = max(1.0, abs(d * f_x) + abs(g_y), excess * excess + 4.0 * abs(d * det))
    marginal = (abs(excess) <= MARGINAL_BAND * scale
                or abs(disc) <= MARGINAL_BAND * scale)
    return TuringPair(excess=excess, discriminant=disc,
                      holds=excess > 0.0 and disc > 0.0, marginal=marginal)


def critical_diffusion(f_x: float, f_y: float, g_x: float, g_y: float) -> float:
    """Smallest diffusion ratio beyond which the instability pair holds.

    Requires the classical prerequisites trace < 0 and determinant > 0 of
    the 2x2 block; raises ``StabilityPreconditionError`` otherwise.  When
    the activator derivative f_x is nonpositive no finite threshold exists
    and ``math.inf`` is returned.

    The threshold is the larger root of (d*f_x + g_y)^2 = 4*d*Det, at which
    d*f_x + g_y > 0 and beyond which both conditions hold.
    """
    tr = f_x + g_y
    det = f_x * g_y - f_y * g_x
    if tr >= 0.0:
        raise StabilityPreconditionError(f"block trace must be negative, got {tr}")
    if det <= 0.0:
        raise StabilityPreconditionError(f"block determinant must be positive, got {det}")
    if f_x <= 0.0:
        return math.inf
    # (f_x)^2 d^2 + (2 f_x g_y - 4 Det) d + (g_y)^2 = 0, larger root.
    aa = f_x * f_x
    bb = 2.0 * f_x * g_y - 4.0 * det
    cc = g_y * g_y
    disc = bb * bb - 4.0 * aa * cc
    return (-bb + math.sqrt(disc)) / (2.0 * aa)


def dispersion_scan(j: JacobianBlocks, d: DiffusionParams, p: KineticParams,
                    l_max: int) -> DispersionTable:
    """Temporal eigenvalues of both branches over modes l = 0..l_max.

    ``j`` must contain the per-unit-scale derivative blocks (build it with
    scale factors of one); the factors from ``p`` enter through the mode
    polynomials.  For mode l the modal eigenvalue is k^2 = l(l+1) and the
    two branches solve

        lambda^2 + Tr_M lambda + Det_M = 0,
        Tr_M  = (d + 1) k^2 - gamma (f_x + g_y),
        Det_M = d k^4 - gamma (d f_x + g_y) k^2 + gamma^2 (f_x g_y - f_y g_x),

    with the bulk (surface) block, diffusion ratio, and scale factor.
    """
    if l_max < 0:
        raise ValueError(f"l_max must be >= 0, got {l_max}")
    jb = np.asarray(j.j_bulk, dtype=float)
    js = np.asarray(j.j_surf, dtype=float)
    branches = (
        (jb, d.d_bulk, p.gamma_bulk),
        (js, d.d_surf, p.gamma_surf),
    )
    rows = []
    for l in range(l_max + 1):
        k2 = l * (l + 1)
        pair = []
        for block, dd, gamma in branches:
            fx, fy = block[0, 0], block[0, 1]
            gx, gy = block[1, 0], block[1, 1]
            det = fx * gy - fy * gx
            tr_m = (dd + 1.0) * k2 - gamma * (fx + gy)
            det_m = dd * float(k2) ** 2 - gamma * (dd * fx + gy) * k2 + gamma * gamma * det
            roots = solve_quadratic(tr_m, det_m)
            pair.append((roots, max(roots[0].real, roots[1].real)))
        (roots_b, mre_b), (roots_s, mre_s) = pair
        rows.append(DispersionRow(l=l, k2=k2,
                                  lambda_bulk=roots_b, lambda_surf=roots_s,
                                  max_re_bulk=mre_b, max_re_surf=mre_s))
    return DispersionTable(rows=rows)


@dataclass(frozen=True)
class RegimeAnalysis:
    """Full stability verdict at one parameter point.

    ``coupled`` evaluates the Jacobian including the exchange terms; the
    formal regime decision is taken from it.  ``uncoupled`` repeats the
    analysis with all coupling coefficients zeroed, which is the branch the
    dispersion bands and the pattern predictions are built on; both are
    reported because the exchange terms destabilize the surface block at
    the reference coupling while leaving the spatial branches untouched.
    """

    regime: Regime
    predicted_pattern_regime: Regime
    coupled: StabilityReport
    uncoupled: StabilityReport
    d_crit_bulk: float | None
    d_crit_surf: float | None
    d_crit_surf_uncoupled: float | None
    compatibility: float
    steady_residuals: tuple[float, float]


def _pattern_regime(report: StabilityReport) -> Regime:
    if not report.all_conditions_hold or report.zero_root_marginal:
        return Regime.HOMOGENEOUS_UNSTABLE
    bulk = report.turing_bulk is not None and report.turing_bulk.holds
    surf = report.turing_surf is not None and report.turing_surf.holds
    if bulk and surf:
        return Regime.BOTH
    if bulk:
        return Regime.BULK_ONLY
    if surf:
        return Regime.SURFACE_ONLY
    return Regime.NO_PATTERN


def _safe_critical(block: np.ndarray) -> float | None:
    try:
        return critical_diffusion(block[0, 0], block[0, 1], block[1, 0], block[1, 1])
    except StabilityPreconditionError:
        return None


def classify_regime(p: KineticParams, c: CouplingParams,
                    d: DiffusionParams) -> RegimeAnalysis:
    """Classify the expected patterning regime at a parameter point.

    Requires a steady state compatible with the coupling: both exchange
    functions must vanish there (which implies the determinant constraint).
    Raises ValueError otherwise.
    """
    h1, h2 = steady_state_residual(p, c)
    ss = steady_state(p)
    scale = max(1.0, abs(ss.u_star), abs(ss.v_star))
    if max(abs(h1), abs(h2)) > 1e-12 * scale:
        raise ValueError(
            "steady state violates the coupling boundary conditions: "
            f"h1 = {h1:.3e}, h2 = {h2:.3e}; adjust the coupling coefficients")
    if p.gamma_bulk <= 0.0 or p.gamma_surf <= 0.0:
        raise ValueError("regime classification requires positive scale factors")

    unit = KineticParams(a=p.a, b=p.b, gamma_bulk=1.0, gamma_surf=1.0)
    state = ss.as_tuple()
    reports = {}
    criticals = {}
    for label, coupling in (("coupled", c), ("uncoupled", CouplingParams.zero())):
        blocks = jacobian_at(p, coupling, state)
        per_unit = jacobian_at(unit, coupling, state)
        report = routh_hurwitz(blocks)
        tb = turing_pair(per_unit.j_bulk[0, 0], per_unit.j_bulk[0, 1],
                         per_unit.j_bulk[1, 0], per_unit.j_bulk[1, 1], d.d_bulk)
        ts = turing_pair(per_unit.j_surf[0, 0], per_unit.j_surf[0, 1],
                         per_unit.j_surf[1, 0], per_unit.j_surf[1, 1], d.d_surf)
        reports[label] = StabilityReport(
            trace_full=report.trace_full, trace_bulk=report.trace_bulk,
            trace_surf=report.trace_surf, det_bulk=report.det_bulk,
            det_surf=report.det_surf, cond1=report.cond1, cond2=report.cond2,
            cond3=report.cond3, cond4=report.cond4, cond5=report.cond5,
            cond6=report.cond6, eigenvalues=report.eigenvalues,
            zero_root_marginal=report.zero_root_marginal,
            turing_bulk=tb, turing_surf=ts,
        )
        criticals[label] = _safe_critical(per_unit.j_surf)

    per_unit_bulk = jacobian_at(unit, CouplingParams.zero(), state).j_bulk
    return RegimeAnalysis(
        regime=_pattern_regime(reports["coupled"]),
        predicted_pattern_regime=_pattern_regime(reports["uncoupled"]),
        coupled=reports["coupled"],
        uncoupled=reports["uncoupled"],
        d_crit_bulk=_safe_critical(per_unit_bulk),
        d_crit_surf=criticals["coupled"],
        d_crit_surf_uncoupled=criticals["uncoupled"],
        compatibility=compatibility_residual(c),
        steady_residuals=(h1, h2),
    )


def _fmt_crit(value: float | None) -> str:
    if value is None:
        return "n/a (block not Turing-capable)"
    if math.isinf(value):
        return "inf (no finite threshold: activator derivative <= 0)"
    return f"{value:.6f}"


def report_to_text(analysis: RegimeAnalysis) -> str:
    """Human-readable stability report."""
    lines = []
    lines.append("Stability analysis")
    lines.append(f"  compatibility residual     : {analysis.compatibility:.6e}")
    h1, h2 = analysis.steady_residuals
    lines.append(f"  steady coupling residuals  : h1 = {h1:.6e}, h2 = {h2:.6e}")
    for label, report in (("coupled", analysis.coupled),
                          ("uncoupled", analysis.uncoupled)):
        lines.append(f"  [{label} surface block]")
        lines.append(f"    traces (full/bulk/surf)  : {report.trace_full:.6g} / "
                     f"{report.trace_bulk:.6g} / {report.trace_surf:.6g}")
        lines.append(f"    determinants (bulk/surf) : {report.det_bulk:.6g} / "
                     f"{report.det_surf:.6g}")
        for name, cond in report.condition_items():
            status = "holds" if cond.holds else "fails"
            if cond.marginal:
                status = "marginal"
            lines.append(f"    {name}: value = {cond.value: .6g}  [{status}]")
        eigs = ", ".join(f"{z.real:.4g}{z.imag:+.4g}j" for z in report.eigenvalues)
        lines.append(f"    eigenvalues              : {eigs}")
        lines.append(f"    max Re(eigenvalue)       : {report.max_real_eigenvalue:.6g}")
        if report.zero_root_marginal:
            lines.append("    marginal: zero eigenvalue (a4 ~ 0); "
                         "equivalence with the spectrum suspended")
        for branch, pair in (("bulk", report.turing_bulk),
                             ("surface", report.turing_surf)):
            if pair is None:
                continue
            status = "holds" if pair.holds else "fails"
            lines.append(f"    instability pair ({branch:7s}): excess = {pair.excess: .6g}, "
                         f"discriminant = {pair.discriminant: .6g}  [{status}]")
    lines.append(f"  critical diffusion, bulk            : {_fmt_crit(analysis.d_crit_bulk)}")
    lines.append(f"  critical diffusion, surf (coupled)  : {_fmt_crit(analysis.d_crit_surf)}")
    lines.append(f"  critical diffusion, surf (uncoupled): "
                 f"{_fmt_crit(analysis.d_crit_surf_uncoupled)}")
    lines.append(f"  regime (coupled analysis)   : {analysis.regime.value}")
    lines.append(f"  pattern prediction (uncoupled): {analysis.predicted_pattern_regime.value}")
    return "\n".join(lines)


def report_to_csv(analysis: RegimeAnalysis, path) -> None:
    """One row per condition, both Jacobian variants."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "condition", "value", "holds", "marginal"])
        for label, report in (("coupled", analysis.coupled),
                              ("uncoupled", analysis.uncoupled)):
            for name, cond in report.condition_items():
                writer.writerow([label, name, cond.value, cond.holds, cond.marginal])
            for branch, pair in (("turing_bulk", report.turing_bulk),
                                 ("turing_surf", report.turing_surf)):
                if pair is None:
                    continue
                writer.writerow([label, branch + "_excess", pair.excess,
                                 pair.holds, pair.marginal])
                writer.writerow([label, branch + "_discriminant", pair.discriminant,
                                 pair.holds, pair.marginal])
            writer.writerow([label, "max_re_eigenvalue",
                             report.max_real_eigenvalue, "", ""])
        writer.writerow(["", "regime", analysis.regime.value, "", ""])
        writer.writerow(["", "predicted_pattern_regime",
                         analysis.predicted_pattern_regime.value, "", ""])
