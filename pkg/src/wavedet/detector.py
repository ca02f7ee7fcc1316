"""Linear detection statistic, thresholds, and Monte Carlo performance.

The statistic is v = sum over steady indices of a[k] * d[k], declared a
detection when v exceeds the threshold strictly (ties are "no detection").
Under noise-only input v is zero-mean Gaussian with standard deviation
sigma_v = sigma_n * ||a_steady||, because the periodic orthonormal filter
bank maps white noise to white coefficients; under pulse-plus-noise the
mean shifts by amplitude(snr) * <a, d_template> over the same index set.
Both the analytic model built on that fact and seeded Monte Carlo
estimators are provided, plus the max-absolute-coefficient baseline whose
threshold has no Gaussian closed form and is always calibrated by Monte
Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import erfc

from .pipeline import FeaturePipe
from .rng import RNG_ID, derive_seed
from .signals import NoiseModel, SampledSignal, amplitude
from .wavelet import DetailCoefficients, ScaleLayout, tally_madds

__all__ = [
    "qfunc",
    "qfunc_inv",
    "Calibration",
    "LinearDetector",
    "MaxCoeffDetector",
    "DetectorStats",
    "DetectionCurve",
    "statistic",
    "analytic_stats",
    "threshold_for_pfa_analytic",
    "threshold_for_pfa_mc",
    "estimate_pd",
    "realized_pfa_mc",
    "max_coeff_baseline",
    "calibrate_max_coeff",
    "sweep_curve",
]

_SQRT2 = math.sqrt(2.0)


def qfunc(x: float) -> float:
    """Standard normal upper-tail probability Q(x) = P(Z > x)."""
    return 0.5 * float(erfc(float(x) / _SQRT2))


def qfunc_inv(p: float, tol: float = 1e-10) -> float:
    """Inverse of qfunc by bisection; |result - true quantile| <= tol."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"tail probability must lie in (0, 1), got {p}")
    lo, hi = -40.0, 40.0  # Q(lo) = 1, Q(hi) = 0 to double precision
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if qfunc(mid) > p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Calibration:
    """How a threshold was set: closed form, or an empirical quantile."""

    method: str  # "analytic" | "monte_carlo"
    trials: int | None = None
    seed: int | None = None
    rng_id: str | None = None

    def __post_init__(self) -> None:
        if self.method not in ("analytic", "monte_carlo"):
            raise ValueError(f"unknown calibration method {self.method!r}")
        if self.method == "monte_carlo" and (self.trials is None or self.seed is None):
            raise ValueError("monte_carlo calibration must record trials and seed")


def _check_steady_nonempty(layout: ScaleLayout) -> None:
    if layout.steady_length == 0:
        raise ValueError("layout has no steady coefficients at any retained scale")


@dataclass(frozen=True)
class LinearDetector:
    """Coefficient vector a (full layout length) plus threshold and Pfa."""

    a: np.ndarray
    layout: ScaleLayout
    v_threshold: float
    target_pfa: float
    calibration: Calibration
    detector_id: str = "linear"

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=np.float64).copy()
        if a.ndim != 1 or a.shape[0] != self.layout.total_length:
            raise ValueError(
                f"coefficient length {a.shape} does not match layout total "
                f"{self.layout.total_length}"
            )
        if not 0.0 < self.target_pfa < 1.0:
            raise ValueError(f"target_pfa must lie in (0, 1), got {self.target_pfa}")
        if not math.isfinite(self.v_threshold):
            raise ValueError("v_threshold must be finite")
        _check_steady_nonempty(self.layout)
        if not np.any(a[self.layout.steady_mask()]):
            raise ValueError("a must have a non-zero entry within the steady ranges")
        a.flags.writeable = False
        object.__setattr__(self, "a", a)

    def steady_a(self) -> np.ndarray:
        return self.a[self.layout.steady_mask()]


@dataclass(frozen=True)
class MaxCoeffDetector:
    """Baseline: declare a pulse when max |d[k]| over steady indices > V_T."""

    layout: ScaleLayout
    v_threshold: float
    target_pfa: float
    calibration: Calibration
    detector_id: str = "max-coeff"

    def __post_init__(self) -> None:
        if not 0.0 < self.target_pfa < 1.0:
            raise ValueError(f"target_pfa must lie in (0, 1), got {self.target_pfa}")
        if self.calibration.method != "monte_carlo":
            raise ValueError("the max-coefficient baseline is calibrated only by Monte Carlo")
        _check_steady_nonempty(self.layout)


@dataclass(frozen=True)
class DetectorStats:
    """Analytic Gaussian performance of a linear detector at one SNR."""

    eta_h1: float
    sigma_v: float
    pfa: float
    pd: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.eta_h1) and math.isfinite(self.sigma_v)):
            raise ValueError("eta_h1 and sigma_v must be finite")
        if self.sigma_v <= 0:
            raise ValueError("sigma_v must be positive")
        for name, p in (("pfa", self.pfa), ("pd", self.pd)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")


@dataclass(frozen=True)
class DetectionCurve:
    """Ordered (snr_db, pd, stderr) points at a fixed target Pfa."""

    pfa: float
    points: tuple[tuple[float, float, float], ...]
    detector_id: str
    trials_per_point: int
    seed: int
    rng_id: str = RNG_ID

    def __post_init__(self) -> None:
        if not 0.0 < self.pfa < 1.0:
            raise ValueError(f"pfa must lie in (0, 1), got {self.pfa}")
        pts = tuple((float(s), float(p), float(e)) for s, p, e in self.points)
        if not pts:
            raise ValueError("a detection curve needs at least one point")
        snrs = [s for s, _, _ in pts]
        if any(b <= a for a, b in zip(snrs, snrs[1:])):
            raise ValueError("snr_db values must be strictly increasing")
        if any(not 0.0 <= p <= 1.0 for _, p, _ in pts):
            raise ValueError("pd values must lie in [0, 1]")
        object.__setattr__(self, "points", pts)

    def snr_grid(self) -> np.ndarray:
        return np.array([s for s, _, _ in self.points])

    def pd_values(self) -> np.ndarray:
        return np.array([p for _, p, _ in self.points])

    def stderr_values(self) -> np.ndarray:
        return np.array([e for _, _, e in self.points])


# ---------------------------------------------------------------------------
# Statistics.

def _require_same_layout(d: DetailCoefficients, layout: ScaleLayout) -> None:
    if d.layout != layout:
        raise ValueError(
            f"coefficient layout {d.layout} does not match detector layout {layout}"
        )


def statistic(d: DetailCoefficients, det: LinearDetector, *, steady_only: bool = True) -> float:
    """Inner product of a and d over the steady ranges (the default).

    ``steady_only=False`` sums over the full vectors instead; that mode is
    for sensitivity studies only and no analytic result in this package
    applies to it.
    """
    _require_same_layout(d, det.layout)
    if steady_only:
        mask = det.layout.steady_mask()
        tally_madds(int(mask.sum()))
        return float(det.a[mask] @ d.values[mask])
    tally_madds(d.values.shape[0])
    return float(det.a @ d.values)


def _steady_stat_fn(det: LinearDetector | MaxCoeffDetector) -> Callable[[np.ndarray], np.ndarray]:
    """Map steady-feature rows to statistic values for either detector kind."""
    if isinstance(det, LinearDetector):
        a = det.steady_a()
        return lambda F: F @ a
    return lambda F: np.max(np.abs(F), axis=1)


def analytic_stats(
    pulse_details: DetailCoefficients,
    a: np.ndarray,
    snr_db: float,
    model: NoiseModel,
    v_threshold: float,
) -> DetectorStats:
    """Gaussian-model mean, spread, Pfa, and Pd of the linear statistic.

    The H1 mean is amplitude(snr_db) times the steady-range inner product
    of a with the template's details; the spread is sigma_n * ||a_steady||
    under both hypotheses.
    """
    a = np.asarray(a, dtype=np.float64)
    layout = pulse_details.layout
    if a.shape != (layout.total_length,):
        raise ValueError("coefficient vector does not match the template's layout")
    mask = layout.steady_mask()
    a_s = a[mask]
    sigma_v = model.sigma_n * float(np.linalg.norm(a_s))
    if sigma_v == 0.0:
        raise ValueError("a is zero on every steady index")
    eta = float(amplitude(snr_db, model)) * float(a_s @ pulse_details.values[mask])
    return DetectorStats(
        eta_h1=eta,
        sigma_v=sigma_v,
        pfa=qfunc(v_threshold / sigma_v),
        pd=qfunc((v_threshold - eta) / sigma_v),
    )


def threshold_for_pfa_analytic(
    a: np.ndarray, layout: ScaleLayout, model: NoiseModel, target_pfa: float
) -> float:
    """Closed-form V_T = sigma_v * Qinv(target_pfa) for the linear statistic."""
    if not 0.0 < target_pfa < 1.0:
        raise ValueError(f"target_pfa must lie in (0, 1), got {target_pfa}")
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (layout.total_length,):
        raise ValueError("coefficient vector does not match the layout")
    sigma_v = model.sigma_n * float(np.linalg.norm(a[layout.steady_mask()]))
    if sigma_v == 0.0:
        raise ValueError("a is zero on every steady index")
    return sigma_v * qfunc_inv(target_pfa)


def _empirical_upper_quantile(v: np.ndarray, target_pfa: float) -> float:
    """The ceil((1-pfa)*n)-th order statistic (higher interpolation)."""
    n = v.shape[0]
    k = int(math.ceil((1.0 - target_pfa) * n))
    k = min(max(k, 1), n)
    return float(np.partition(v, k - 1)[k - 1])


def _check_mc_quantile_args(target_pfa: float, trials: int) -> None:
    if not 0.0 < target_pfa < 1.0:
        raise ValueError(f"target_pfa must lie in (0, 1), got {target_pfa}")
    if trials * target_pfa < 100:
        raise ValueError(
            f"trials * target_pfa = {trials * target_pfa:g} < 100; "
            "the quantile would be too uncertain"
        )


def threshold_for_pfa_mc(
    a: np.ndarray,
    pipe: FeaturePipe,
    model: NoiseModel,
    target_pfa: float,
    trials: int,
    seed: int,
) -> float:
    """Empirical (1 - pfa) quantile of v over seeded noise realisations."""
    _check_mc_quantile_args(target_pfa, trials)
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (pipe.layout.total_length,):
        raise ValueError("coefficient vector does not match the pipe layout")
    a_s = a[pipe.layout.steady_mask()]
    v = np.empty(trials)
    for start, stop, F in pipe.iter_noise_steady(model, trials, seed):
        v[start:stop] = F @ a_s
    return _empirical_upper_quantile(v, target_pfa)


def estimate_pd(
    det: LinearDetector | MaxCoeffDetector,
    pulse: SampledSignal,
    snr_db: float,
    model: NoiseModel,
    trials: int,
    seed: int,
    pipe: FeaturePipe,
) -> tuple[float, float]:
    """Monte Carlo Pd at one SNR: fraction of H1 trials with v > V_T."""
    if trials < 100:
        raise ValueError(f"need at least 100 trials, got {trials}")
    if pipe.layout != det.layout:
        raise ValueError("pipe layout does not match detector layout")
    stat = _steady_stat_fn(det)
    hits = 0
    for _, _, F in pipe.iter_obs_steady(pulse, float(snr_db), model, trials, seed):
        hits += int(np.count_nonzero(stat(F) > det.v_threshold))
    pd = hits / trials
    return pd, math.sqrt(pd * (1.0 - pd) / trials)


def realized_pfa_mc(
    dets: Sequence[LinearDetector | MaxCoeffDetector],
    model: NoiseModel,
    trials: int,
    seed: int,
    pipe: FeaturePipe,
) -> list[tuple[float, float]]:
    """Empirical Pfa of several same-layout detectors on one noise stream.

    Sharing the stream keeps the estimates paired, which tightens
    comparisons between detectors evaluated at the same operating point.
    """
    if trials < 100:
        raise ValueError(f"need at least 100 trials, got {trials}")
    for det in dets:
        if pipe.layout != det.layout:
            raise ValueError("pipe layout does not match a detector layout")
    stats = [_steady_stat_fn(det) for det in dets]
    hits = [0] * len(dets)
    for _, _, F in pipe.iter_noise_steady(model, trials, seed):
        for k, (det, stat) in enumerate(zip(dets, stats)):
            hits[k] += int(np.count_nonzero(stat(F) > det.v_threshold))
    out = []
    for h in hits:
        p = h / trials
        out.append((p, math.sqrt(p * (1.0 - p) / trials)))
    return out


def max_coeff_baseline(d: DetailCoefficients, v_threshold: float) -> bool:
    """True iff the largest steady-range |coefficient| exceeds the threshold."""
    _check_steady_nonempty(d.layout)
    return bool(np.max(np.abs(d.steady_values())) > v_threshold)


def calibrate_max_coeff(
    pipe: FeaturePipe,
    model: NoiseModel,
    target_pfa: float,
    trials: int,
    seed: int,
    detector_id: str = "max-coeff",
) -> MaxCoeffDetector:
    """Monte Carlo threshold for the baseline at the requested Pfa."""
    _check_mc_quantile_args(target_pfa, trials)
    _check_steady_nonempty(pipe.layout)
    v = np.empty(trials)
    for start, stop, F in pipe.iter_noise_steady(model, trials, seed):
        v[start:stop] = np.max(np.abs(F), axis=1)
    vt = _empirical_upper_quantile(v, target_pfa)
    return MaxCoeffDetector(
        layout=pipe.layout,
        v_threshold=vt,
        target_pfa=float(target_pfa),
        calibration=Calibration("monte_carlo", trials=int(trials), seed=int(seed), rng_id=RNG_ID),
        detector_id=detector_id,
    )


def sweep_curve(
    det: LinearDetector | MaxCoeffDetector,
    pulse: SampledSignal,
    snr_grid: Sequence[float],
    model: NoiseModel,
    trials: int,
    seed: int,
    pipe: FeaturePipe,
) -> DetectionCurve:
    """One estimate_pd per grid point, each on its own derived substream."""
    grid = [float(s) for s in snr_grid]
    if not grid:
        raise ValueError("snr grid must be non-empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("snr grid must be strictly increasing")
    points = []
    for j, snr in enumerate(grid):
        pd, se = estimate_pd(det, pulse, snr, model, trials, derive_seed(seed, j), pipe)
        points.append((snr, pd, se))
    return DetectionCurve(
        pfa=det.target_pfa,
        points=tuple(points),
        detector_id=det.detector_id,
        trials_per_point=int(trials),
        seed=int(seed),
    )
