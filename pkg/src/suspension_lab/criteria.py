"""Analytic classification of the suspension built over an intensity profile.

Two deterministic series drive everything:

* ``rn_square_integral``: the second moment defect of the inverse density
  under the n-step shift, sum_k (e^{3 eps_k - 2 eps_{k-n}} - e^{eps_k})
  times the constant intensity level.  Its growth in log n feeds the
  conservativity certificate (weighted Borel-Cantelli recurrence).
* ``hellinger_growth``: the squared L2 distance between the shifted and
  unshifted square-root densities.  Its growth feeds the dissipativity
  certificate (summable overlap series).

Both series cancel catastrophically if truncated, so they are evaluated as
an exact prefix plus an Euler-Maclaurin tail (see ``numerics``).  Slope
fits against log n replace the exact asymptotics; a verdict is only issued
when the decisive inequality clears three residual standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .intensity import (
    EpsilonFamily,
    ExplicitFamily,
    IntensityProfile,
    PowerFamily,
    ProfileError,
    StepFamily,
    Trivalent,
    ZeroFamily,
    check_condition,
    epsilon_at,
    intensities,
    limit_gap,
    limit_sets,
)
from .numerics import SlopeFit, fit_log_slope, geometric_grid, semi_infinite_sum

#: Default least-squares windows (powers of two, inclusive).  The
#: square-integral series is fitted from 16; the Hellinger series carries a
#: boundary block whose O(1) drift at small n biases the slope well past
#: the certificate margins, so its default window starts at 1024.
RN_FIT_RANGE = (16, 131_072)
HELLINGER_FIT_RANGE = (1_024, 131_072)

_PREFIX_MIN = 4_096
_PREFIX_MARGIN = 64


class PreconditionError(RuntimeError):
    """The profile does not satisfy the conditions this operation assumes."""


class GapNotZeroError(PreconditionError):
    """Operation requires the asymptotic intensity gap to vanish symbolically."""


class MonotonicityError(RuntimeError):
    """Scale scan produced a non-monotone verdict pattern."""


class Verdict(Enum):
    CONSERVATIVE = "conservative"
    TOTALLY_DISSIPATIVE = "totally_dissipative"
    INCONCLUSIVE = "inconclusive"
    NOT_NONSINGULAR = "not_nonsingular"


@dataclass(frozen=True)
class ClassificationReport:
    verdict: Verdict
    certificate: Optional[dict]
    profile: IntensityProfile
    notes: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "certificate": self.certificate,
            "profile": profile_as_dict(self.profile),
            "notes": list(self.notes),
        }


def profile_as_dict(profile: IntensityProfile) -> dict:
    fam = profile.epsilon
    if isinstance(fam, ZeroFamily):
        eps: dict = {"kind": "zero"}
    elif isinstance(fam, PowerFamily):
        eps = {"kind": "power", "gamma": fam.gamma, "sign": fam.sign}
    elif isinstance(fam, StepFamily):
        eps = {"kind": "step", "left": fam.left, "right": fam.right}
    else:
        eps = {
            "kind": "explicit",
            "table": [[n, e] for n, e in fam.table],
            "tail": profile_as_dict(IntensityProfile(1.0, fam.tail))["epsilon"] if fam.tail else None,
        }
    return {"base": profile.base, "scale": profile.scale, "epsilon": eps}


def nonsingularity_deficit(profile: IntensityProfile, N: int) -> float:
    """Partial sum over |n| <= N of twice the squared Hellinger distance
    between neighbouring atoms: 2 * (1 - exp(-(sqrt a_n - sqrt a_{n+1})^2 / 2)).
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    a = intensities(profile, np.arange(-N, N + 2))
    d = np.diff(np.sqrt(a))
    return float(np.sum(-2.0 * np.expm1(-0.5 * d * d)))


# ---------------------------------------------------------------------------
# the two unit series (intensity level factored out)
# ---------------------------------------------------------------------------


def _power_eps_diff(gamma: float, sign: int, t: np.ndarray, shift: float) -> np.ndarray:
    """eps(t) - eps(t - shift) for the pure power form, computed stably.

    Valid where both t and t - shift are in the power regime (> 1).
    """
    return -sign * np.power(t, -gamma) * np.expm1(-gamma * np.log1p(-shift / t))


def _rn_unit_power(fam: PowerFamily, n: int) -> float:
    g, s = fam.gamma, fam.sign
    K = max(2 * n + _PREFIX_MARGIN, _PREFIX_MIN)
    k = np.arange(2.0, K + 1.0)
    ek = s * np.power(k, -g)
    d = np.empty_like(k)
    boundary = k <= n + 1  # eps_{k-n} = 0 there
    d[boundary] = ek[boundary]
    d[~boundary] = _power_eps_diff(g, s, k[~boundary], float(n))
    prefix = float(np.sum(np.exp(ek) * np.expm1(2.0 * d)))

    def tail(t: np.ndarray) -> np.ndarray:
        e = s * np.power(t, -g)
        return np.exp(e) * np.expm1(2.0 * _power_eps_diff(g, s, t, float(n)))

    return prefix + semi_infinite_sum(tail, K + 1)


def _rn_unit_explicit(fam: ExplicitFamily, n: int) -> float:
    tmin, tmax = fam.index_range()
    if isinstance(fam.tail, StepFamily):
        raise ProfileError("square-integral series requires a zero or power tail")
    lo = min(2, tmin)
    if fam.tail is None or isinstance(fam.tail, ZeroFamily):
        hi = tmax + n + 1
        k = np.arange(lo, hi + 1, dtype=float)
        ek = epsilon_at(fam, k)
        ekn = epsilon_at(fam, k - n)
        return float(np.sum(np.exp(ek) * np.expm1(2.0 * (ek - ekn))))
    K = max(2 * n + _PREFIX_MARGIN, _PREFIX_MIN, tmax + n + _PREFIX_MARGIN)
    k = np.arange(lo, K + 1, dtype=float)
    ek = epsilon_at(fam, k)
    ekn = epsilon_at(fam, k - n)
    prefix = float(np.sum(np.exp(ek) * np.expm1(2.0 * (ek - ekn))))
    tail_fam = fam.tail

    def tail(t: np.ndarray) -> np.ndarray:
        e = tail_fam.sign * np.power(t, -tail_fam.gamma)
        return np.exp(e) * np.expm1(2.0 * _power_eps_diff(tail_fam.gamma, tail_fam.sign, t, float(n)))

    return prefix + semi_infinite_sum(tail, K + 1)


@lru_cache(maxsize=65536)
def _rn_unit(fam: EpsilonFamily, n: int) -> float:
    if isinstance(fam, ZeroFamily):
        return 0.0
    if isinstance(fam, StepFamily):
        # reachable only for left == right (zero gap), where eps is constant
        return 0.0
    if isinstance(fam, PowerFamily):
        return _rn_unit_power(fam, n)
    return _rn_unit_explicit(fam, n)


def _hellinger_unit_power(fam: PowerFamily, n: int) -> float:
    g, s = fam.gamma, fam.sign
    j = np.arange(2.0, n + 2.0)
    block1 = float(np.sum(np.expm1(0.5 * s * np.power(j, -g)) ** 2))

    K = max(2 * n + _PREFIX_MARGIN, _PREFIX_MIN)
    k = np.arange(2.0, K + 1.0)
    ek = s * np.power(k, -g)
    diff = _power_eps_diff(g, s, k + n, float(n))  # eps(k+n) - eps(k)
    block2 = float(np.sum(np.exp(ek) * np.expm1(0.5 * diff) ** 2))

    def tail(t: np.ndarray) -> np.ndarray:
        e = s * np.power(t, -g)
        d = _power_eps_diff(g, s, t + n, float(n))
        return np.exp(e) * np.expm1(0.5 * d) ** 2

    return block1 + block2 + semi_infinite_sum(tail, K + 1)


def _hellinger_unit_generic(fam: EpsilonFamily, n: int, lo: int, hi: int) -> float:
    x = np.arange(lo, hi + 1, dtype=float)
    ex = epsilon_at(fam, x)
    exn = epsilon_at(fam, x + n)
    return float(np.sum((np.exp(0.5 * exn) - np.exp(0.5 * ex)) ** 2))


@lru_cache(maxsize=65536)
def _hellinger_unit(fam: EpsilonFamily, n: int) -> float:
    if isinstance(fam, ZeroFamily):
        return 0.0
    if isinstance(fam, StepFamily):
        # eps(x+n) != eps(x) exactly for x in [1-n, 0]
        d = math.exp(0.5 * fam.right) - math.exp(0.5 * fam.left)
        return n * d * d
    if isinstance(fam, PowerFamily):
        return _hellinger_unit_power(fam, n)
    tmin, tmax = fam.index_range()
    if fam.tail is None or isinstance(fam.tail, ZeroFamily):
        return _hellinger_unit_generic(fam, n, tmin - n - 1, tmax + 1)
    if isinstance(fam.tail, StepFamily):
        raise ProfileError("hellinger series for explicit profiles requires a zero or power tail")
    tail_fam = fam.tail
    K = max(2 * n + _PREFIX_MARGIN, _PREFIX_MIN, tmax + _PREFIX_MARGIN)
    prefix = _hellinger_unit_generic(fam, n, min(2, tmin) - n - 1, K)

    def tail(t: np.ndarray) -> np.ndarray:
        e = tail_fam.sign * np.power(t, -tail_fam.gamma)
        d = _power_eps_diff(tail_fam.gamma, tail_fam.sign, t + n, float(n))
        return np.exp(e) * np.expm1(0.5 * d) ** 2

    return prefix + semi_infinite_sum(tail, K + 1)


def _require(profile: IntensityProfile, condition: str, who: str) -> None:
    verdict = check_condition(profile, condition)
    if verdict.holds is not Trivalent.YES:
        if condition == "zero_gap":
            raise GapNotZeroError(f"{who} requires a vanishing asymptotic gap; got {verdict.detail}")
        raise PreconditionError(f"{who} requires condition {condition}={Trivalent.YES.value}; got {verdict.detail}")


def rn_square_integral(profile: IntensityProfile, n: int, tol: float = 1e-9) -> float:
    """Level * sum_k (e^{3 eps_k - 2 eps_{k-n}} - e^{eps_k}).

    Refuses profiles whose asymptotic gap is nonzero: the derivation of the
    displayed form cancels the linear increment sum, which requires the gap
    to vanish.  The result approximates the infinite sum to well below
    ``tol`` (exact prefix plus Euler-Maclaurin tail).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    _require(profile, "zero_gap", "rn_square_integral")
    return profile.level * _rn_unit(profile.epsilon, n)


def hellinger_growth(profile: IntensityProfile, n: int, tol: float = 1e-9) -> float:
    """Level * sum_x (e^{eps_{x+n}/2} - e^{eps_x/2})^2 over the lattice."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    return profile.level * _hellinger_unit(profile.epsilon, n)


# ---------------------------------------------------------------------------
# slope fits and certificates
# ---------------------------------------------------------------------------


def rn_slope_fit(profile: IntensityProfile, fit_range: tuple[int, int] = RN_FIT_RANGE) -> SlopeFit:
    ns = geometric_grid(*fit_range)
    unit = fit_log_slope(ns, [_rn_unit(profile.epsilon, n) for n in ns], kind="rn_square_integral")
    return unit.scaled(profile.level)


def hellinger_slope_fit(profile: IntensityProfile,
                        fit_range: tuple[int, int] = HELLINGER_FIT_RANGE) -> SlopeFit:
    ns = geometric_grid(*fit_range)
    unit = fit_log_slope(ns, [_hellinger_unit(profile.epsilon, n) for n in ns], kind="hellinger_growth")
    return unit.scaled(profile.level)


@dataclass(frozen=True)
class SeriesVerdict:
    partial: float
    N: int
    convergent: Trivalent
    fit: SlopeFit

    def as_dict(self) -> dict:
        return {
            "partial": self.partial,
            "N": self.N,
            "convergent": self.convergent.value,
            "fit": self.fit.as_dict(),
        }


def dissipativity_series(profile: IntensityProfile, N: int = 200,
                         fit_range: tuple[int, int] = HELLINGER_FIT_RANGE) -> SeriesVerdict:
    """Partial sum of sum_n exp(-hellinger_growth(n)/2) and its convergence verdict.

    The terms behave like n^(-slope/2); the series converges (certifying a
    totally dissipative suspension) precisely when slope/2 > 1, and the
    verdict is issued only with a three-sigma margin on the fitted slope.
    """
    _require(profile, "nonsingularity", "dissipativity_series")
    partial = math.fsum(
        math.exp(-0.5 * hellinger_growth(profile, n)) for n in range(1, N + 1)
    )
    fit = hellinger_slope_fit(profile, fit_range)
    if (fit.slope - 3.0 * fit.slope_se) / 2.0 > 1.0:
        verdict = Trivalent.YES
    elif (fit.slope + 3.0 * fit.slope_se) / 2.0 < 1.0:
        verdict = Trivalent.NO
    else:
        verdict = Trivalent.UNDETERMINED
    return SeriesVerdict(partial=partial, N=N, convergent=verdict, fit=fit)


def conservativity_certificate(profile: IntensityProfile, N: int = 200,
                               fit_range: tuple[int, int] = RN_FIT_RANGE) -> ClassificationReport:
    """Weighted-series recurrence certificate.

    With c the fitted log-slope of the square-integral series, weights
    b_n = n^-beta give a divergent sum (beta <= 1) while
    sum b_n^2 e^{I(n)} behaves like sum n^(c - 2 beta), convergent as soon
    as 2 beta - c > 1.  Admissible betas form ((1+c)/2, 1]; we take the
    midpoint (3+c)/4.  Requires c < 1 with a three-sigma margin.
    """
    _require(profile, "zero_gap", "conservativity_certificate")
    _require(profile, "nonsingularity", "conservativity_certificate")
    fit = rn_slope_fit(profile, fit_range)
    c = fit.slope
    if c + 3.0 * fit.slope_se < 1.0:
        beta = min((3.0 + c) / 4.0, 1.0)
        series = math.fsum(
            n ** (-2.0 * beta) * math.exp(rn_square_integral(profile, n)) for n in range(1, N + 1)
        )
        certificate = {
            "kind": "recurrence_weights",
            "beta": beta,
            "rn_slope_fit": fit.as_dict(),
            "weighted_series_partial": series,
            "weighted_series_N": N,
            "exponent_margin": 2.0 * beta - c,
        }
        return ClassificationReport(Verdict.CONSERVATIVE, certificate, profile)
    note = f"rn slope {c:.4f} + 3se {3 * fit.slope_se:.4f} not below 1"
    return ClassificationReport(
        Verdict.INCONCLUSIVE,
        {"kind": "none", "rn_slope_fit": fit.as_dict()},
        profile,
        notes=(note,),
    )


def classify(profile: IntensityProfile, series_N: int = 200) -> ClassificationReport:
    """Verdict for the suspension over this profile.

    Certificates are attempted in fixed order, cheap exact tests first:
    nonzero asymptotic gap, disjoint limit sets, summable overlap series
    (dissipative), weighted recurrence series (conservative).  Anything
    else is an honest "inconclusive".
    """
    if check_condition(profile, "nonsingularity").holds is not Trivalent.YES:
        return ClassificationReport(Verdict.NOT_NONSINGULAR, None, profile,
                                    notes=("nonsingularity condition not established",))

    gap = limit_gap(profile)
    if gap is not None and gap != 0.0:
        return ClassificationReport(
            Verdict.TOTALLY_DISSIPATIVE,
            {"kind": "nonzero_limit_gap", "gap": gap},
            profile,
        )

    sets = limit_sets(profile)
    if sets is not None and sets.disjoint:
        return ClassificationReport(
            Verdict.TOTALLY_DISSIPATIVE,
            {"kind": "disjoint_limit_sets", "limit_sets": sets.as_dict()},
            profile,
        )

    notes: list[str] = []
    if gap is None:
        notes.append("asymptotic gap undetermined; fitted certificates skipped")
        return ClassificationReport(Verdict.INCONCLUSIVE, None, profile, tuple(notes))

    series = dissipativity_series(profile, N=series_N)
    if series.convergent is Trivalent.YES:
        return ClassificationReport(
            Verdict.TOTALLY_DISSIPATIVE,
            {"kind": "decay_series", **series.as_dict()},
            profile,
        )

    report = conservativity_certificate(profile, N=series_N)
    if report.verdict is Verdict.CONSERVATIVE:
        return report

    notes.append(f"dissipativity series verdict: {series.convergent.value}")
    notes.extend(report.notes)
    return ClassificationReport(
        Verdict.INCONCLUSIVE,
        {
            "kind": "none",
            "hellinger_slope_fit": series.fit.as_dict(),
            "rn_slope_fit": report.certificate.get("rn_slope_fit") if report.certificate else None,
        },
        profile,
        tuple(notes),
    )


@dataclass(frozen=True)
class BifurcationBracket:
    t_lower: float
    t_upper: float
    lower_report: ClassificationReport
    upper_report: ClassificationReport

    def as_dict(self) -> dict:
        return {
            "t_lower": self.t_lower,
            "t_upper": self.t_upper,
            "lower_report": self.lower_report.as_dict(),
            "upper_report": self.upper_report.as_dict(),
        }


_VERDICT_ORDER = {
    Verdict.CONSERVATIVE: 0,
    Verdict.INCONCLUSIVE: 1,
    Verdict.TOTALLY_DISSIPATIVE: 2,
}


def bifurcation_bracket(profile: IntensityProfile, rtol: float = 1e-3,
                        probe_range: tuple[float, float] = (2.0**-20, 2.0**20)) -> BifurcationBracket:
    """Certificate-limited bracket for the conservative/dissipative transition
    under intensity scaling.

    t_lower is the supremum of scales classified conservative, t_upper the
    infimum classified totally dissipative.  The verdict pattern along the
    scan must be monotone (conservative below dissipative); any inversion
    raises MonotonicityError.
    """

    def verdict_at(t: float) -> Verdict:
        # short evidence series during the scan; verdicts only use the fits
        return classify(profile.with_scale(t), series_N=20).verdict

    # Coarse scan over octaves establishes the pattern and the two seams.
    probes = []
    t = probe_range[0]
    while t <= probe_range[1]:
        probes.append(t)
        t *= 2.0
    verdicts = [verdict_at(t) for t in probes]
    if any(v is Verdict.NOT_NONSINGULAR for v in verdicts):
        raise ProfileError("bracket requires a nonsingular profile at every scale")
    order = [_VERDICT_ORDER[v] for v in verdicts]
    if any(b < a for a, b in zip(order, order[1:])):
        raise MonotonicityError(f"verdict pattern not monotone along scales: "
                                f"{[v.value for v in verdicts]}")
    if Verdict.CONSERVATIVE not in verdicts or Verdict.TOTALLY_DISSIPATIVE not in verdicts:
        raise ProfileError("probe range does not straddle the transition")

    def bisect(lo: float, hi: float, left_of_seam) -> float:
        while hi / lo > 1.0 + rtol:
            mid = math.sqrt(lo * hi)
            if left_of_seam(verdict_at(mid)):
                lo = mid
            else:
                hi = mid
        return math.sqrt(lo * hi)

    last_cons = max(i for i, v in enumerate(verdicts) if v is Verdict.CONSERVATIVE)
    first_diss = min(i for i, v in enumerate(verdicts) if v is Verdict.TOTALLY_DISSIPATIVE)
    t_lower = bisect(probes[last_cons], probes[last_cons + 1],
                     lambda v: v is Verdict.CONSERVATIVE)
    t_upper = bisect(probes[first_diss - 1], probes[first_diss],
                     lambda v: v is not Verdict.TOTALLY_DISSIPATIVE)
    lower_report = classify(profile.with_scale(t_lower / (1.0 + 2.0 * rtol)))
    upper_report = classify(profile.with_scale(t_upper * (1.0 + 2.0 * rtol)))
    return BifurcationBracket(t_lower, t_upper, lower_report, upper_report)


@dataclass(frozen=True)
class ContinuousBaseReport:
    gap: float
    sup_mass: float
    series_partial: float
    N: int
    dissipative: Trivalent

    def as_dict(self) -> dict:
        return {
            "gap": self.gap,
            "sup_mass": self.sup_mass,
            "series_partial": self.series_partial,
            "N": self.N,
            "dissipative": self.dissipative.value,
        }


def continuous_base_bound(densities: Sequence[Sequence[float]], N: int) -> ContinuousBaseReport:
    """Dissipativity certificate for a shift over a continuum of levels.

    ``densities`` are density vectors on a uniform partition of [0,1],
    indexed along a finite window of levels; the first vector is the
    declared constant left tail, the last the right tail.  With
    gap = ||right||_1 - ||left||_1 and D the sup of the level masses, the
    overlap series is dominated by the geometric series
    sum_n exp(-n gap^2 / (216 D^2)), so any nonzero gap certifies total
    dissipativity.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    rows = [np.asarray(d, dtype=float) for d in densities]
    if len(rows) < 2:
        raise ValueError("need at least the two tail density vectors")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("density vectors must share one partition")
    if any(not np.all(r > 0.0) for r in rows):
        raise ValueError("density entries must be strictly positive")
    masses = [float(np.mean(r)) for r in rows]
    gap = masses[-1] - masses[0]
    sup_mass = max(masses)
    if gap == 0.0:
        return ContinuousBaseReport(gap, sup_mass, float(N), N, Trivalent.UNDETERMINED)
    rate = gap * gap / (216.0 * sup_mass * sup_mass)
    series = math.fsum(math.exp(-rate * n) for n in range(1, N + 1))
    return ContinuousBaseReport(gap, sup_mass, series, N, Trivalent.YES)
