"""File formats for signals, coefficient vectors, detectors, and curves.

Binary artifacts share one convention: a single ASCII header line of
semicolon-separated ``key=value`` fields, a newline, then the payload as
little-endian 64-bit floats.  Curves are plain CSV with ``#`` provenance
comments.  All floats are written with ``repr`` so that values round-trip
exactly and repeated runs produce byte-identical files.  Writes go through
a temporary file and an atomic rename, so readers never observe partial
artifacts.
"""

from __future__ import annotations

import os
import tempfile
from typing import Mapping

import numpy as np

from .detector import Calibration, DetectionCurve, LinearDetector, MaxCoeffDetector
from .signals import Hypothesis, SampledSignal
from .wavelet import DetailCoefficients, ScaleLayout

_SIGNAL_TAG = "wavedet-signal v1"
_COEFFS_TAG = "wavedet-coeffs v1"
_DETECTOR_TAG = "wavedet-detector v1"

_KIND_OF_HYP = {
    Hypothesis.TEMPLATE: "chirp",
    Hypothesis.NOISE: "noise",
    Hypothesis.OBSERVATION: "observation",
}
_HYP_OF_KIND = {v: k for k, v in _KIND_OF_HYP.items()}


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".wavedet-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _header_line(tag: str, fields: Mapping[str, str]) -> bytes:
    parts = [tag] + [f"{k}={v}" for k, v in fields.items()]
    line = "; ".join(parts)
    if "\n" in line:
        raise ValueError("header fields must not contain newlines")
    return (line + "\n").encode("ascii")


def _split_header(raw: bytes, tag: str, path: str) -> tuple[dict[str, str], bytes]:
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError(f"{path}: missing header line")
    line = raw[:nl].decode("ascii")
    parts = line.split("; ")
    if parts[0] != tag:
        raise ValueError(f"{path}: expected header tag {tag!r}, found {parts[0]!r}")
    fields: dict[str, str] = {}
    for part in parts[1:]:
        k, sep, v = part.partition("=")
        if not sep:
            raise ValueError(f"{path}: malformed header field {part!r}")
        fields[k] = v
    return fields, raw[nl + 1 :]


def _payload_floats(body: bytes, path: str) -> np.ndarray:
    if len(body) % 8:
        raise ValueError(f"{path}: payload is not a whole number of float64 values")
    return np.frombuffer(body, dtype="<f8").astype(np.float64)


def _opt(value) -> str:
    return "none" if value is None else repr(value)


def _parse_opt_int(s: str) -> int | None:
    return None if s == "none" else int(s)


# -- signals ----------------------------------------------------------------

def write_signal(path: str, sig: SampledSignal) -> None:
    fields = {
        "length": str(sig.length),
        "kind": _KIND_OF_HYP[sig.hypothesis],
        "snr_db": "nan" if sig.snr_db is None else repr(sig.snr_db),
        "seed": _opt(sig.seed),
    }
    payload = sig.samples.astype("<f8").tobytes()
    _atomic_write(path, _header_line(_SIGNAL_TAG, fields) + payload)


def read_signal(path: str) -> SampledSignal:
    with open(path, "rb") as fh:
        raw = fh.read()
    fields, body = _split_header(raw, _SIGNAL_TAG, path)
    samples = _payload_floats(body, path)
    if samples.shape[0] != int(fields["length"]):
        raise ValueError(f"{path}: payload length does not match header")
    kind = fields["kind"]
    if kind not in _HYP_OF_KIND:
        raise ValueError(f"{path}: unknown signal kind {kind!r}")
    snr = float(fields["snr_db"])
    return SampledSignal(
        samples=samples,
        hypothesis=_HYP_OF_KIND[kind],
        snr_db=None if np.isnan(snr) else snr,
        seed=_parse_opt_int(fields["seed"]),
    )


# -- layouts and coefficient vectors ----------------------------------------

def _layout_fields(layout: ScaleLayout) -> dict[str, str]:
    return {
        "scales": ",".join(str(s) for s in layout.scales),
        "segment_bounds": ",".join(
            f"{off}:{m}" for off, m in zip(layout.offsets, layout.seg_lengths)
        ),
        "steady_starts": ",".join(str(t) for t in layout.steady_starts),
    }


def _layout_from_fields(fields: Mapping[str, str], path: str) -> ScaleLayout:
    scales = tuple(int(s) for s in fields["scales"].split(","))
    bounds = [tuple(int(v) for v in b.split(":")) for b in fields["segment_bounds"].split(",")]
    starts = tuple(int(t) for t in fields["steady_starts"].split(","))
    layout = ScaleLayout(
        scales=scales,
        seg_lengths=tuple(m for _, m in bounds),
        steady_starts=starts,
    )
    if tuple(off for off, _ in bounds) != layout.offsets:
        raise ValueError(f"{path}: segment_bounds offsets are not contiguous")
    return layout


def write_coeffs(path: str, d: DetailCoefficients, family: str, signal_length: int) -> None:
    fields = {"length": str(d.layout.total_length)}
    fields.update(_layout_fields(d.layout))
    fields["family"] = family
    fields["signal_length"] = str(int(signal_length))
    _atomic_write(path, _header_line(_COEFFS_TAG, fields) + d.values.astype("<f8").tobytes())


def read_coeffs(path: str) -> tuple[DetailCoefficients, str, int]:
    with open(path, "rb") as fh:
        raw = fh.read()
    fields, body = _split_header(raw, _COEFFS_TAG, path)
    values = _payload_floats(body, path)
    if values.shape[0] != int(fields["length"]):
        raise ValueError(f"{path}: payload length does not match header")
    layout = _layout_from_fields(fields, path)
    return (
        DetailCoefficients(values=values, layout=layout),
        fields["family"],
        int(fields["signal_length"]),
    )


# -- detectors ----------------------------------------------------------------

_DETECTOR_KEYS = {
    "kind", "detector_id", "pfa", "v_threshold", "scales", "segment_bounds",
    "steady_starts", "family", "signal_length", "calibration", "cal_trials",
    "cal_seed", "rng",
}


def write_detector(
    path: str,
    det: LinearDetector | MaxCoeffDetector,
    family: str,
    signal_length: int,
    extras: Mapping[str, str] | None = None,
) -> None:
    """Detector artifact; ``extras`` lets callers append model metadata."""
    fields = {
        "kind": "linear" if isinstance(det, LinearDetector) else "max-coeff",
        "detector_id": det.detector_id,
        "pfa": repr(det.target_pfa),
        "v_threshold": repr(det.v_threshold),
    }
    fields.update(_layout_fields(det.layout))
    fields["family"] = family
    fields["signal_length"] = str(int(signal_length))
    cal = det.calibration
    fields["calibration"] = cal.method
    fields["cal_trials"] = _opt(cal.trials)
    fields["cal_seed"] = _opt(cal.seed)
    fields["rng"] = "none" if cal.rng_id is None else cal.rng_id
    for k, v in (extras or {}).items():
        if k in _DETECTOR_KEYS:
            raise ValueError(f"extras key {k!r} collides with a reserved detector field")
        fields[k] = str(v)
    a = det.a if isinstance(det, LinearDetector) else np.empty(0)
    _atomic_write(path, _header_line(_DETECTOR_TAG, fields) + a.astype("<f8").tobytes())


def read_detector(
    path: str,
) -> tuple[LinearDetector | MaxCoeffDetector, str, int, dict[str, str]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    fields, body = _split_header(raw, _DETECTOR_TAG, path)
    layout = _layout_from_fields(fields, path)
    rng = fields["rng"]
    cal = Calibration(
        method=fields["calibration"],
        trials=_parse_opt_int(fields["cal_trials"]),
        seed=_parse_opt_int(fields["cal_seed"]),
        rng_id=None if rng == "none" else rng,
    )
    extras = {k: v for k, v in fields.items() if k not in _DETECTOR_KEYS}
    common = dict(
        layout=layout,
        v_threshold=float(fields["v_threshold"]),
        target_pfa=float(fields["pfa"]),
        calibration=cal,
        detector_id=fields["detector_id"],
    )
    det: LinearDetector | MaxCoeffDetector
    if fields["kind"] == "linear":
        a = _payload_floats(body, path)
        det = LinearDetector(a=a, **common)
    elif fields["kind"] == "max-coeff":
        det = MaxCoeffDetector(**common)
    else:
        raise ValueError(f"{path}: unknown detector kind {fields['kind']!r}")
    return det, fields["family"], int(fields["signal_length"]), extras


# -- detection curves ---------------------------------------------------------

_CURVE_COLUMNS = "snr_db,pd,stderr,pfa,trials,seed"


def write_curve_csv(path: str, curve: DetectionCurve, provenance: Mapping[str, str]) -> None:
    lines = []
    prov = dict(provenance)
    prov.setdefault("detector_id", curve.detector_id)
    prov.setdefault("rng", curve.rng_id)
    for k in sorted(prov):
        lines.append(f"# {k}={prov[k]}")
    lines.append(_CURVE_COLUMNS)
    for snr, pd, se in curve.points:
        lines.append(
            f"{snr!r},{pd!r},{se!r},{curve.pfa!r},{curve.trials_per_point},{curve.seed}"
        )
    _atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))


def read_curve_csv(path: str) -> tuple[DetectionCurve, dict[str, str]]:
    prov: dict[str, str] = {}
    rows: list[tuple[float, ...]] = []
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    body = []
    for ln in lines:
        if ln.startswith("#"):
            k, sep, v = ln[1:].strip().partition("=")
            if sep:
                prov[k] = v
        elif ln:
            body.append(ln)
    if not body or body[0] != _CURVE_COLUMNS:
        raise ValueError(f"{path}: missing curve column header")
    for ln in body[1:]:
        cells = ln.split(",")
        if len(cells) != 6:
            raise ValueError(f"{path}: malformed curve row {ln!r}")
        rows.append(tuple(float(c) for c in cells))
    if not rows:
        raise ValueError(f"{path}: curve has no data rows")
    pfa_set = {r[3] for r in rows}
    trial_set = {int(r[4]) for r in rows}
    seed_set = {int(r[5]) for r in rows}
    if len(pfa_set) != 1 or len(trial_set) != 1 or len(seed_set) != 1:
        raise ValueError(f"{path}: pfa/trials/seed columns must be constant")
    curve = DetectionCurve(
        pfa=pfa_set.pop(),
        points=tuple((r[0], r[1], r[2]) for r in rows),
        detector_id=prov.get("detector_id", "unknown"),
        trials_per_point=trial_set.pop(),
        seed=seed_set.pop(),
        rng_id=prov.get("rng", "unknown"),
    )
    return curve, prov
