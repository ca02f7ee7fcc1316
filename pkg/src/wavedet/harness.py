"""End-to-end experiment suite: theory vs trained detectors, per scale set.

For every configured scale set the harness computes the matched-filter
detector and its closed-form curve, trains and calibrates an SVM detector
and sweeps its Monte Carlo curve, and calibrates and sweeps the
max-absolute-coefficient baseline.  Everything is keyed off one root seed
through purpose-tagged substreams, so a rerun of the same config file
produces byte-identical CSVs.  A self-check section re-derives the
cross-module consistency facts (decision/statistic equivalence, analytic
vs Monte Carlo thresholds, multi-scale dominance, theory ceiling) and the
output directory is marked valid only if every check passes.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field, fields as dc_fields, replace

import numpy as np

from .detector import (
    Calibration,
    DetectionCurve,
    LinearDetector,
    analytic_stats,
    calibrate_max_coeff,
    statistic,
    sweep_curve,
    threshold_for_pfa_mc,
)
from .io import read_curve_csv, write_curve_csv, write_detector
from .optimum import optimum_a
from .pipeline import FeaturePipe
from .rng import RNG_ID, derive_seed
from .signals import NoiseModel, make_chirp, make_observation
from .svm import SvmModel, build_training_set, decision, tune_c_for_pfa
from .wavelet import parse_family

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "CheckResult",
    "run_experiment",
    "gap_table",
    "experiment_check",
    "parse_config_text",
    "canonical_config_text",
    "config_hash",
]

_DEFAULT_C_GRID = tuple(
    (cp, cm) for cp in (0.1, 1.0, 10.0) for cm in (1.0, 10.0, 100.0)
)

# substream purposes hanging off the root seed
_P_TRAIN, _P_TUNE, _P_SVMCURVE, _P_BASECAL, _P_BASECURVE, _P_VTMC, _P_CHECKOBS = range(1, 8)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything run_experiment needs; defaults follow the reference setup."""

    length: int = 1024
    f_start: float = 0.05
    f_end: float = 0.45
    family: str = "db5"
    scale_sets: tuple[tuple[int, ...], ...] = ((3,), (4,), (5,), (6,), (4, 5, 6), (3, 4, 5, 6))
    pfa: float = 1e-3
    snr_min: float = -15.0
    snr_max: float = 0.0
    snr_step: float = 1.0
    trials_per_point: int = 10_000
    cal_trials: int = 100_000
    n_pos: int = 1000
    n_neg: int = 1000
    c_grid: tuple[tuple[float, float], ...] = _DEFAULT_C_GRID
    kkt_tolerance: float = 1e-3
    max_passes: int = 10_000
    sigma_n: float = 1.0
    seed: int = 1

    def __post_init__(self) -> None:
        n = self.length
        if n < 2 or n & (n - 1):
            raise ValueError(f"length must be a power of two >= 2, got {n}")
        filters = parse_family(self.family)
        N = n.bit_length() - 1
        sets = tuple(tuple(int(s) for s in b) for b in self.scale_sets)
        if not sets or any(not b for b in sets):
            raise ValueError("scale_sets must be a non-empty list of non-empty sets")
        if len({_set_label(b) for b in sets}) != len(sets):
            raise ValueError("scale_sets contains duplicates")
        for b in sets:
            for s in b:
                if not 1 <= s <= N:
                    raise ValueError(f"scale {s} out of range for length {n}")
                if 2 ** (N - s) < filters.length:
                    raise ValueError(
                        f"scale {s} leaves no steady coefficients: "
                        f"2^({N}-{s}) < filter length {filters.length}"
                    )
        object.__setattr__(self, "scale_sets", sets)
        object.__setattr__(self, "c_grid", tuple((float(a), float(m)) for a, m in self.c_grid))
        if not 0.0 < self.pfa < 1.0:
            raise ValueError(f"pfa must lie in (0, 1), got {self.pfa}")
        if self.pfa * self.cal_trials < 100:
            raise ValueError("pfa * cal_trials must be at least 100")
        if not self.snr_min < self.snr_max:
            raise ValueError("snr_min must be below snr_max")
        if self.snr_step <= 0:
            raise ValueError("snr_step must be positive")
        if self.trials_per_point < 100:
            raise ValueError("trials_per_point must be at least 100")
        if self.n_pos < 1 or self.n_neg < 1:
            raise ValueError("n_pos and n_neg must be at least 1")
        if not self.c_grid:
            raise ValueError("c_grid must be non-empty")

    def snr_grid(self) -> tuple[float, ...]:
        k = int(math.floor((self.snr_max - self.snr_min) / self.snr_step + 1e-9))
        return tuple(self.snr_min + i * self.snr_step for i in range(k + 1))


def _set_label(b: tuple[int, ...]) -> str:
    return "d" + "_".join(str(s) for s in b)


# -- config text format -------------------------------------------------------

_CONFIG_ORDER = (
    "length", "f_start", "f_end", "family", "scale_sets", "pfa", "snr_min",
    "snr_max", "snr_step", "trials_per_point", "cal_trials", "n_pos", "n_neg",
    "c_grid", "kkt_tolerance", "max_passes", "sigma_n", "seed",
)


def canonical_config_text(cfg: ExperimentConfig) -> str:
    """Flat key = value rendering; the hashable identity of an experiment."""
    vals = {
        "scale_sets": "; ".join(",".join(str(s) for s in b) for b in cfg.scale_sets),
        "c_grid": "; ".join(f"{cp!r}:{cm!r}" for cp, cm in cfg.c_grid),
    }
    lines = []
    for key in _CONFIG_ORDER:
        if key in vals:
            lines.append(f"{key} = {vals[key]}")
            continue
        v = getattr(cfg, key)
        lines.append(f"{key} = {v!r}" if isinstance(v, float) else f"{key} = {v}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse the flat key = value format, falling back to defaults."""
    known = {f.name: f.type for f in dc_fields(ExperimentConfig)}
    kwargs: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = (p.strip() for p in line.partition("="))
        if not sep:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        kwargs[key] = _parse_config_value(key, val)
    return ExperimentConfig(**kwargs)


def _parse_config_value(key: str, val: str):
    if key == "scale_sets":
        return tuple(
            tuple(int(s) for s in group.split(","))
            for group in val.split(";") if group.strip()
        )
    if key == "c_grid":
        pairs = []
        for group in val.split(";"):
            group = group.strip()
            if group:
                cp, _, cm = group.partition(":")
                pairs.append((float(cp), float(cm)))
        return tuple(pairs)
    if key == "family":
        return val
    if key in ("length", "trials_per_point", "cal_trials", "n_pos", "n_neg",
               "max_passes", "seed"):
        return int(val)
    return float(val)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_config_text(cfg).encode("ascii")).hexdigest()[:16]


# -- report -------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    config_hash: str
    labels: tuple[str, ...]
    theory: dict[str, DetectionCurve]
    svm: dict[str, DetectionCurve]
    baseline: dict[str, DetectionCurve]
    optimum_detectors: dict[str, LinearDetector] = field(repr=False)
    svm_detectors: dict[str, LinearDetector] = field(repr=False)
    svm_models: dict[str, SvmModel] = field(repr=False)
    checks: tuple[CheckResult, ...] = ()

    @property
    def valid(self) -> bool:
        return all(c.passed for c in self.checks)


def _theory_curve(
    pulse_details, det: LinearDetector, model: NoiseModel, grid, label: str, seed: int
) -> DetectionCurve:
    points = []
    for snr in grid:
        st = analytic_stats(pulse_details, det.a, snr, model, det.v_threshold)
        points.append((snr, st.pd, 0.0))
    return DetectionCurve(
        pfa=det.target_pfa,
        points=tuple(points),
        detector_id=f"theory-{label}",
        trials_per_point=0,
        seed=seed,
    )


def run_experiment(cfg: ExperimentConfig, out_dir: str) -> ExperimentReport:
    """Execute the full suite and write CSVs + self-check report to out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    chash = config_hash(cfg)
    filters = parse_family(cfg.family)
    noise = NoiseModel(sigma_n=cfg.sigma_n)
    pulse = make_chirp(cfg.length, cfg.f_start, cfg.f_end)
    grid = cfg.snr_grid()
    labels = tuple(_set_label(b) for b in cfg.scale_sets)

    theory: dict[str, DetectionCurve] = {}
    svm_curves: dict[str, DetectionCurve] = {}
    base_curves: dict[str, DetectionCurve] = {}
    opt_dets: dict[str, LinearDetector] = {}
    svm_dets: dict[str, LinearDetector] = {}
    svm_models: dict[str, SvmModel] = {}
    checks: list[CheckResult] = []

    for bi, b in enumerate(cfg.scale_sets):
        label = labels[bi]
        pipe = FeaturePipe.for_scales(cfg.length, filters, b)
        pulse_details = pipe.details_of(pulse)

        det_opt = optimum_a(pulse_details, cfg.pfa, noise, detector_id=f"optimum-{label}")
        opt_dets[label] = det_opt
        theory[label] = _theory_curve(pulse_details, det_opt, noise, grid, label, cfg.seed)

        ts = build_training_set(
            pulse, b, filters, noise, cfg.n_pos, cfg.n_neg,
            (cfg.snr_min, cfg.snr_max), derive_seed(cfg.seed, _P_TRAIN, bi),
        )
        model, det_svm = tune_c_for_pfa(
            ts, cfg.pfa, cfg.c_grid, cfg.cal_trials,
            derive_seed(cfg.seed, _P_TUNE, bi), pulse,
            kkt_tolerance=cfg.kkt_tolerance, max_passes=cfg.max_passes,
        )
        svm_models[label], svm_dets[label] = model, det_svm
        svm_curves[label] = sweep_curve(
            det_svm, pulse, grid, noise, cfg.trials_per_point,
            derive_seed(cfg.seed, _P_SVMCURVE, bi), pipe,
        )

        det_base = calibrate_max_coeff(
            pipe, noise, cfg.pfa, cfg.cal_trials,
            derive_seed(cfg.seed, _P_BASECAL, bi), detector_id=f"baseline-{label}",
        )
        base_curves[label] = sweep_curve(
            det_base, pulse, grid, noise, cfg.trials_per_point,
            derive_seed(cfg.seed, _P_BASECURVE, bi), pipe,
        )

        checks.append(_check_decision_equivalence(model, pulse, pipe, noise, cfg, bi, label))
        checks.append(_check_threshold_agreement(det_opt, pipe, noise, cfg, bi, label))

        prov = {
            "config_hash": chash,
            "root_seed": str(cfg.seed),
            "family": cfg.family,
            "scales": ",".join(str(s) for s in b),
            "sigma_n": repr(cfg.sigma_n),
            "rng": RNG_ID,
        }
        write_curve_csv(os.path.join(out_dir, f"theory_{label}.csv"), theory[label],
                        {**prov, "kind": "theory"})
        write_curve_csv(os.path.join(out_dir, f"svm_{label}.csv"), svm_curves[label],
                        {**prov, "kind": "svm"})
        write_curve_csv(os.path.join(out_dir, f"baseline_{label}.csv"), base_curves[label],
                        {**prov, "kind": "baseline"})
        write_detector(os.path.join(out_dir, f"optimum_{label}.det"), det_opt,
                       cfg.family, cfg.length)
        write_detector(
            os.path.join(out_dir, f"svm_{label}.det"), det_svm, cfg.family, cfg.length,
            extras={
                "c_plus": repr(model.c_plus), "c_minus": repr(model.c_minus),
                "kkt_tolerance": repr(model.kkt_tolerance),
                "converged": str(model.converged),
                "support_count": str(model.support_count),
                "alpha_sum": repr(float(np.sum(model.alphas))),
                "alpha_max": repr(float(np.max(model.alphas))),
            },
        )

    report = ExperimentReport(
        config=cfg, config_hash=chash, labels=labels, theory=theory, svm=svm_curves,
        baseline=base_curves, optimum_detectors=opt_dets, svm_detectors=svm_dets,
        svm_models=svm_models, checks=(),
    )
    checks.extend(_structural_checks(report))
    report = replace(report, checks=tuple(checks))

    _write_gaps_csv(os.path.join(out_dir, "gaps.csv"), report)
    _write_checks(os.path.join(out_dir, "checks.txt"), report)
    with open(os.path.join(out_dir, "config.txt"), "w", encoding="ascii") as fh:
        fh.write(canonical_config_text(cfg))
    return report


def _check_decision_equivalence(
    model: SvmModel, pulse, pipe: FeaturePipe, noise: NoiseModel,
    cfg: ExperimentConfig, bi: int, label: str,
) -> CheckResult:
    """decision(model, d) must equal the detector statistic with a = w, plus b."""
    a = np.zeros(pipe.layout.total_length)
    a[pipe.layout.steady_mask()] = model.w
    probe = LinearDetector(
        a=a, layout=pipe.layout, v_threshold=0.0, target_pfa=cfg.pfa,
        calibration=Calibration("analytic"), detector_id=f"probe-{label}",
    )
    worst = 0.0
    for k in range(3):
        obs = make_observation(pulse, -5.0, noise, derive_seed(cfg.seed, _P_CHECKOBS, bi, k))
        d = pipe.details_of(obs)
        worst = max(worst, abs(decision(model, d) - (statistic(d, probe) + model.b)))
    passed = worst <= 1e-12
    return CheckResult(
        name=f"decision-statistic-equivalence[{label}]",
        passed=passed,
        detail=f"max |decision - (statistic + b)| = {worst:.3e}",
    )


def _check_threshold_agreement(
    det_opt: LinearDetector, pipe: FeaturePipe, noise: NoiseModel,
    cfg: ExperimentConfig, bi: int, label: str,
) -> CheckResult:
    """Monte Carlo threshold must agree with the closed form within quantile error."""
    vt_mc = threshold_for_pfa_mc(
        det_opt.a, pipe, noise, cfg.pfa, cfg.cal_trials, derive_seed(cfg.seed, _P_VTMC, bi)
    )
    sigma_v = noise.sigma_n * float(np.linalg.norm(det_opt.steady_a()))
    z = det_opt.v_threshold / sigma_v
    density = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    se = sigma_v * math.sqrt(cfg.pfa * (1.0 - cfg.pfa) / cfg.cal_trials) / density
    delta = abs(vt_mc - det_opt.v_threshold)
    passed = delta <= 4.0 * se
    return CheckResult(
        name=f"analytic-mc-threshold[{label}]",
        passed=passed,
        detail=f"|V_T(mc) - V_T(analytic)| = {delta:.4g}, allowed 4*se = {4 * se:.4g}",
    )


def _structural_checks(report: ExperimentReport) -> list[CheckResult]:
    checks = []
    sets = {label: set(b) for label, b in zip(report.labels, report.config.scale_sets)}
    # theory dominance: a superset's curve must dominate its subsets' pointwise
    worst = 0.0
    pairs = 0
    for la in report.labels:
        for lb in report.labels:
            if la != lb and sets[lb] < sets[la]:
                pairs += 1
                gap = report.theory[lb].pd_values() - report.theory[la].pd_values()
                worst = max(worst, float(np.max(gap)))
    checks.append(CheckResult(
        name="theory-multiscale-dominance",
        passed=worst <= 1e-12,
        detail=f"{pairs} subset pairs, worst subset excess {worst:.3e}",
    ))
    # ceiling: Monte Carlo SVM Pd never above theory by more than 3 stderr
    worst_z = -math.inf
    for label in report.labels:
        th = report.theory[label].pd_values()
        sv = report.svm[label].pd_values()
        se = _ceiling_se(report.svm[label], th)
        worst_z = max(worst_z, float(np.max((sv - th) / se)))
    checks.append(CheckResult(
        name="svm-theory-ceiling",
        passed=worst_z <= 3.0,
        detail=f"max (pd_svm - pd_theory)/stderr = {worst_z:.2f}, allowed 3",
    ))
    return checks


def _ceiling_se(mc_curve: DetectionCurve, pd_theory: np.ndarray) -> np.ndarray:
    """Scale for comparing a Monte Carlo curve against its theoretical ceiling.

    Near saturation the empirical stderr collapses to zero even though the
    estimate can still sit a hair above the theory value, so the binomial
    deviation implied by the theory Pd itself is used as a floor.
    """
    n = max(mc_curve.trials_per_point, 1)
    implied = np.sqrt(np.clip(pd_theory * (1.0 - pd_theory), 0.0, None) / n)
    return np.maximum(np.maximum(mc_curve.stderr_values(), implied), 1e-12)


def gap_table(report: ExperimentReport) -> list[dict]:
    """Flat per-(scale set, SNR) comparison rows; errors on incomplete input."""
    rows = []
    for label in report.labels:
        if label not in report.svm:
            raise ValueError(f"report is missing the SVM curve for {label}")
        if label not in report.theory or label not in report.baseline:
            raise ValueError(f"report is missing curves for {label}")
        th, sv, ba = report.theory[label], report.svm[label], report.baseline[label]
        ses = _ceiling_se(sv, th.pd_values())
        for (snr, pd_t, _), (_, pd_s, _), (_, pd_b, _), se_s in zip(
            th.points, sv.points, ba.points, ses
        ):
            gap = pd_t - pd_s
            if gap < -3.0 * se_s:
                raise ValueError(
                    f"{label} at {snr} dB: gap {gap:.4g} below -3 stderr; "
                    "the ceiling property is violated"
                )
            rows.append({
                "scale_set": label, "snr_db": snr, "pd_theory": pd_t,
                "pd_svm": pd_s, "pd_baseline": pd_b, "gap": gap,
            })
    return rows


def _write_gaps_csv(path: str, report: ExperimentReport) -> None:
    lines = [
        f"# config_hash={report.config_hash}",
        f"# root_seed={report.config.seed}",
        f"# rng={RNG_ID}",
        "scale_set,snr_db,pd_theory,pd_svm,pd_baseline,gap",
    ]
    for r in gap_table(report):
        lines.append(
            f"{r['scale_set']},{r['snr_db']!r},{r['pd_theory']!r},"
            f"{r['pd_svm']!r},{r['pd_baseline']!r},{r['gap']!r}"
        )
    data = ("\n".join(lines) + "\n").encode("ascii")
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _write_checks(path: str, report: ExperimentReport) -> None:
    lines = [f"# config_hash={report.config_hash}"]
    for c in report.checks:
        lines.append(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    lines.append("VALID" if report.valid else "INVALID")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def experiment_check(out_dir: str) -> tuple[bool, list[str]]:
    """Re-verify a finished output directory from its stored artifacts."""
    messages = []
    ok = True

    def fail(msg: str) -> None:
        nonlocal ok
        ok = False
        messages.append("FAIL " + msg)

    cfg_path = os.path.join(out_dir, "config.txt")
    try:
        with open(cfg_path, "r", encoding="ascii") as fh:
            cfg = parse_config_text(fh.read())
    except (OSError, ValueError) as e:
        return False, [f"FAIL cannot load config: {e}"]
    chash = config_hash(cfg)
    labels = tuple(_set_label(b) for b in cfg.scale_sets)
    curves: dict[tuple[str, str], DetectionCurve] = {}
    for label in labels:
        for kind in ("theory", "svm", "baseline"):
            path = os.path.join(out_dir, f"{kind}_{label}.csv")
            try:
                curve, prov = read_curve_csv(path)
            except (OSError, ValueError) as e:
                fail(f"cannot load {path}: {e}")
                continue
            if prov.get("config_hash") != chash:
                fail(f"{path}: config_hash {prov.get('config_hash')} != {chash}")
            if prov.get("root_seed") != str(cfg.seed):
                fail(f"{path}: root_seed mismatch")
            curves[(kind, label)] = curve
    if ok:
        sets = {label: set(b) for label, b in zip(labels, cfg.scale_sets)}
        for la in labels:
            for lb in labels:
                if la != lb and sets[lb] < sets[la]:
                    gap = curves[("theory", lb)].pd_values() - curves[("theory", la)].pd_values()
                    if float(np.max(gap)) > 1e-12:
                        fail(f"theory dominance violated: {lb} exceeds {la}")
        for label in labels:
            th = curves[("theory", label)].pd_values()
            sv = curves[("svm", label)].pd_values()
            se = _ceiling_se(curves[("svm", label)], th)
            if float(np.max((sv - th) / se)) > 3.0:
                fail(f"svm ceiling violated for {label}")
    checks_path = os.path.join(out_dir, "checks.txt")
    try:
        with open(checks_path, "r", encoding="ascii") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        if not lines or lines[-1] != "VALID":
            fail("checks.txt does not end in VALID")
        if lines and lines[0] != f"# config_hash={chash}":
            fail("checks.txt config_hash mismatch")
    except OSError as e:
        fail(f"cannot load checks.txt: {e}")
    if ok:
        messages.append(f"OK {out_dir}: {len(labels)} scale sets verified against {chash}")
    return ok, messages
