"""Soft-margin linear SVM on wavelet-domain patterns.

The dual problem

    maximise   sum_i alpha_i - 1/2 sum_ij alpha_i y_i alpha_j y_j <x_i, x_j>
    subject to 0 <= alpha_i <= C(y_i),   sum_i alpha_i y_i = 0

is solved by sequential minimal optimisation: each step picks the pair of
indices with the largest Karush-Kuhn-Tucker violation (maximal F_i over
the set that can move up against minimal F_j over the set that can move
down, F_i = y_i - sum_k alpha_k y_k K_ik) and solves the two-variable
subproblem in closed form.  Per-class box bounds C+ / C- implement the
asymmetric penalty used to price false positives above misses.

The trained bias is never deployed directly: deployment replaces it with a
Monte Carlo threshold hitting the requested false-alarm probability, since
the hinge loss alone does not pin the operating point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .detector import (
    Calibration,
    LinearDetector,
    estimate_pd,
    realized_pfa_mc,
    threshold_for_pfa_mc,
)
from .pipeline import FeaturePipe
from .rng import RNG_ID, derive_seed, substream, uniform
from .signals import Hypothesis, NoiseModel, SampledSignal
from .wavelet import DetailCoefficients, ScaleLayout, WaveletFilterPair, parse_family

__all__ = [
    "TrainingSet",
    "SvmModel",
    "build_training_set",
    "train",
    "decision",
    "calibrate_bias",
    "tune_c_for_pfa",
]

# substream purposes within a training-set seed
_PATH_SNR, _PATH_POS, _PATH_NEG = 0, 1, 2

_BOUND_SNAP = 1e-12  # relative snap of alphas onto their box bounds


@dataclass(frozen=True)
class TrainingSet:
    """Labelled steady-range detail patterns: +1 pulse+noise, -1 noise."""

    X: np.ndarray              # (n, dim) patterns, one per row
    y: np.ndarray              # (n,) labels in {+1, -1}
    snr_db_pos: np.ndarray     # SNR of each positive row, in row order
    seed: int
    layout: ScaleLayout
    signal_length: int
    family_name: str
    sigma_n: float
    snr_range: tuple[float, float]

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=np.float64).copy()
        y = np.asarray(self.y, dtype=np.int8).copy()
        snr = np.asarray(self.snr_db_pos, dtype=np.float64).copy()
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be (n, dim) with one label per row")
        if X.shape[1] != self.layout.steady_length:
            raise ValueError("pattern dimension does not match the layout's steady length")
        if not set(np.unique(y)) <= {-1, 1}:
            raise ValueError("labels must be +1 or -1")
        n_pos = int(np.sum(y == 1))
        if n_pos == 0 or n_pos == y.shape[0]:
            raise ValueError("both classes must be non-empty")
        if snr.shape != (n_pos,):
            raise ValueError("need exactly one SNR per positive pattern")
        for arr in (X, y, snr):
            arr.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "snr_db_pos", snr)

    @property
    def n_patterns(self) -> int:
        return int(self.X.shape[0])


@dataclass(frozen=True)
class SvmModel:
    """Dual solution plus the recovered primal weight vector and bias."""

    alphas: np.ndarray
    y: np.ndarray
    w: np.ndarray              # steady-range weights, length = layout.steady_length
    b: float
    c_plus: float
    c_minus: float
    kkt_tolerance: float
    support_count: int
    converged: bool
    n_passes: int
    objective_history: tuple[float, ...]
    layout: ScaleLayout

    def __post_init__(self) -> None:
        alphas = np.asarray(self.alphas, dtype=np.float64).copy()
        y = np.asarray(self.y, dtype=np.int8).copy()
        w = np.asarray(self.w, dtype=np.float64).copy()
        if alphas.shape != y.shape or alphas.ndim != 1:
            raise ValueError("alphas and y must be equal-length vectors")
        box = np.where(y == 1, self.c_plus, self.c_minus)
        if np.any(alphas < -1e-12) or np.any(alphas - box > 1e-12 * np.maximum(box, 1.0)):
            raise ValueError("alphas violate their per-class box constraints")
        balance = float(alphas @ y)
        if abs(balance) > self.kkt_tolerance:
            raise ValueError(f"sum alpha_i y_i = {balance!r} exceeds the KKT tolerance")
        if w.shape != (self.layout.steady_length,):
            raise ValueError("w length does not match the layout's steady length")
        for arr in (alphas, y, w):
            arr.flags.writeable = False
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)

    @property
    def dual_objective(self) -> float:
        return self.objective_history[-1]


def build_training_set(
    pulse: SampledSignal,
    scales: Sequence[int],
    filters: WaveletFilterPair,
    model: NoiseModel,
    n_pos: int,
    n_neg: int,
    snr_range: tuple[float, float],
    seed: int,
) -> TrainingSet:
    """Steady-range d_B patterns: n_pos observations with SNR uniform over
    ``snr_range`` and n_neg pure-noise realisations, positives first."""
    if n_pos < 1 or n_neg < 1:
        raise ValueError("both classes need at least one pattern")
    lo, hi = float(snr_range[0]), float(snr_range[1])
    if not lo <= hi:
        raise ValueError(f"snr_range must satisfy lo <= hi, got {snr_range}")
    if pulse.hypothesis is not Hypothesis.TEMPLATE:
        raise ValueError("build_training_set requires a pulse template")
    pipe = FeaturePipe.for_scales(pulse.length, filters, scales)
    snrs = uniform(substream(seed, (_PATH_SNR,)), n_pos, lo, hi)
    pos = pipe.obs_steady(pulse, snrs, model, n_pos, seed, path=(_PATH_POS,))
    neg = pipe.noise_steady(model, n_neg, seed, path=(_PATH_NEG,))
    X = np.concatenate([pos, neg], axis=0)
    y = np.concatenate([np.ones(n_pos, dtype=np.int8), -np.ones(n_neg, dtype=np.int8)])
    return TrainingSet(
        X=X,
        y=y,
        snr_db_pos=snrs,
        seed=int(seed),
        layout=pipe.layout,
        signal_length=pulse.length,
        family_name=filters.family_name,
        sigma_n=model.sigma_n,
        snr_range=(lo, hi),
    )


def _kkt_sets(alphas: np.ndarray, y: np.ndarray, box: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index masks that may move up (I_up) / down (I_low) in beta = alpha*y."""
    pos, neg = y == 1, y == -1
    at_zero, at_box = alphas <= 0.0, alphas >= box
    i_up = (pos & ~at_box) | (neg & ~at_zero)
    i_low = (pos & ~at_zero) | (neg & ~at_box)
    return i_up, i_low


def train(
    ts: TrainingSet,
    c_plus: float,
    c_minus: float,
    kkt_tolerance: float = 1e-3,
    max_passes: int = 10_000,
) -> SvmModel:
    """Maximal-violating-pair SMO on the precomputed Gram matrix.

    One pass is up to n two-variable updates; after each pass the margin
    cache is recomputed from scratch (drift control) and the exact dual
    objective is appended to the history.  Convergence is declared when the
    largest violation m - M falls to ``kkt_tolerance`` or below; if the
    pass budget runs out first the model is returned with
    ``converged=False``.
    """
    if c_plus <= 0 or c_minus <= 0:
        raise ValueError("c_plus and c_minus must be positive")
    if kkt_tolerance <= 0:
        raise ValueError("kkt_tolerance must be positive")
    if max_passes < 1:
        raise ValueError("max_passes must be at least 1")
    X = ts.X
    y = ts.y.astype(np.float64)
    n = ts.n_patterns
    box = np.where(ts.y == 1, float(c_plus), float(c_minus))
    K = X @ X.T
    alphas = np.zeros(n)
    f = np.zeros(n)  # f_i = sum_k alpha_k y_k K_ik, maintained incrementally
    objective = 0.0
    history: list[float] = []
    converged = False
    n_passes = 0
    m = m_low = 0.0
    for _pass in range(int(max_passes)):
        n_passes = _pass + 1
        for _step in range(n):
            F = y - f
            i_up, i_low = _kkt_sets(alphas, ts.y, box)
            up_idx = np.flatnonzero(i_up)
            low_idx = np.flatnonzero(i_low)
            i = up_idx[np.argmax(F[up_idx])]
            j = low_idx[np.argmin(F[low_idx])]
            m, m_low = float(F[i]), float(F[j])
            if m - m_low <= kkt_tolerance:
                converged = True
                break
            # feasible step range for beta_i += t, beta_j -= t
            if ts.y[i] == 1:
                t_hi_i = box[i] - alphas[i]
            else:
                t_hi_i = alphas[i]
            if ts.y[j] == 1:
                t_hi_j = alphas[j]
            else:
                t_hi_j = box[j] - alphas[j]
            t_hi = min(float(t_hi_i), float(t_hi_j))
            eta = float(K[i, i] + K[j, j] - 2.0 * K[i, j])
            if eta > 0.0:
                t = min((m - m_low) / eta, t_hi)
            else:
                t = t_hi  # identical patterns: objective is linear in t
            objective += t * (m - m_low) - 0.5 * t * t * eta
            alphas[i] += y[i] * t
            alphas[j] -= y[j] * t
            _snap_to_box(alphas, box, i)
            _snap_to_box(alphas, box, j)
            f += t * (K[:, i] - K[:, j])
        # exact refresh closes any incremental drift
        f = K @ (alphas * y)
        objective = float(np.sum(alphas) - 0.5 * (alphas * y) @ f)
        history.append(objective)
        if converged:
            break
    w = X.T @ (alphas * y)
    b = 0.5 * (m + m_low)
    return SvmModel(
        alphas=alphas,
        y=ts.y,
        w=w,
        b=float(b),
        c_plus=float(c_plus),
        c_minus=float(c_minus),
        kkt_tolerance=float(kkt_tolerance),
        support_count=int(np.count_nonzero(alphas > 0)),
        converged=converged,
        n_passes=n_passes,
        objective_history=tuple(history),
        layout=ts.layout,
    )


def _snap_to_box(alphas: np.ndarray, box: np.ndarray, k: int) -> None:
    # keep bound membership exact so the KKT index sets stay crisp
    if alphas[k] < _BOUND_SNAP * box[k]:
        alphas[k] = 0.0
    elif alphas[k] > box[k] * (1.0 - _BOUND_SNAP):
        alphas[k] = box[k]


def kkt_violation(model: SvmModel, X: np.ndarray) -> float:
    """Largest remaining violation m - M of the dual optimality conditions."""
    y = model.y.astype(np.float64)
    f = (X @ X.T) @ (model.alphas * y)
    F = y - f
    box = np.where(model.y == 1, model.c_plus, model.c_minus)
    i_up, i_low = _kkt_sets(model.alphas, model.y, box)
    return float(np.max(F[i_up]) - np.min(F[i_low]))


def decision(model: SvmModel, d: DetailCoefficients) -> float:
    """f(x) = <w, x> + b on the steady-range features of ``d``."""
    if d.layout != model.layout:
        raise ValueError("coefficient layout does not match the training layout")
    return float(model.w @ d.steady_values() + model.b)


def embed_weights(model: SvmModel) -> np.ndarray:
    """The weight vector placed into the full detail layout (zeros elsewhere)."""
    a = np.zeros(model.layout.total_length)
    a[model.layout.steady_mask()] = model.w
    return a


def calibrate_bias(
    model: SvmModel,
    noise: NoiseModel,
    pipe: FeaturePipe,
    target_pfa: float,
    trials: int,
    seed: int,
    detector_id: str | None = None,
) -> LinearDetector:
    """Freeze the direction w; replace b with a Monte Carlo threshold.

    The returned detector uses a = w (embedded in the full layout) and the
    empirical (1 - pfa) quantile of w-projected noise as its threshold.
    """
    if pipe.layout != model.layout:
        raise ValueError("pipe layout does not match the training layout")
    a = embed_weights(model)
    vt = threshold_for_pfa_mc(a, pipe, noise, target_pfa, trials, seed)
    if detector_id is None:
        detector_id = "svm-" + "_".join(str(s) for s in model.layout.scales)
    return LinearDetector(
        a=a,
        layout=model.layout,
        v_threshold=vt,
        target_pfa=float(target_pfa),
        calibration=Calibration("monte_carlo", trials=int(trials), seed=int(seed), rng_id=RNG_ID),
        detector_id=detector_id,
    )


def tune_c_for_pfa(
    ts: TrainingSet,
    target_pfa: float,
    c_grid: Sequence[tuple[float, float]],
    validation_noise_trials: int,
    seed: int,
    pulse: SampledSignal,
    kkt_tolerance: float = 1e-3,
    max_passes: int = 10_000,
    val_trials_per_point: int = 500,
    pfa_slack: float = 2.0,
) -> tuple[SvmModel, LinearDetector]:
    """Train per grid point, calibrate each, keep the best admissible model.

    Admissible means the realized false-alarm rate on an independent noise
    set lies within a factor ``pfa_slack`` of the target; among admissible
    models the one with the highest mean validation Pd over the training
    SNR grid wins (first grid point on ties).  Fully deterministic given
    (ts, seed).
    """
    grid = [(float(cp), float(cm)) for cp, cm in c_grid]
    if not grid:
        raise ValueError("c_grid must be non-empty")
    noise = NoiseModel(sigma_n=ts.sigma_n)
    pipe = FeaturePipe(
        length=ts.signal_length,
        filters=parse_family(ts.family_name),
        layout=ts.layout,
    )
    lo, hi = ts.snr_range
    val_grid = np.arange(lo, hi + 1e-9, 1.0)
    best: tuple[float, int] | None = None
    results: list[tuple[SvmModel, LinearDetector]] = []
    for gi, (cp, cm) in enumerate(grid):
        svm_model = train(ts, cp, cm, kkt_tolerance=kkt_tolerance, max_passes=max_passes)
        det = calibrate_bias(
            svm_model, noise, pipe, target_pfa, validation_noise_trials,
            derive_seed(seed, gi, 0),
        )
        results.append((svm_model, det))
        pfa_hat, _ = realized_pfa_mc(
            [det], noise, validation_noise_trials, derive_seed(seed, gi, 1), pipe
        )[0]
        if not target_pfa / pfa_slack <= pfa_hat <= target_pfa * pfa_slack:
            continue
        pd_sum = 0.0
        for pj, snr in enumerate(val_grid):
            pd, _ = estimate_pd(
                det, pulse, float(snr), noise, val_trials_per_point,
                derive_seed(seed, gi, 2, pj), pipe,
            )
            pd_sum += pd
        mean_pd = pd_sum / val_grid.shape[0]
        if best is None or mean_pd > best[0]:
            best = (mean_pd, gi)
    if best is None:
        raise RuntimeError(
            f"no (c_plus, c_minus) grid point achieved a realized Pfa within "
            f"{pfa_slack}x of {target_pfa}"
        )
    return results[best[1]]
