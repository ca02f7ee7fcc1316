"""Orthonormal Daubechies filter banks and the dyadic pyramid decomposition.

The transform is the classic two-filter subband scheme: at each level the
running approximation is circularly convolved with the low-pass and
high-pass analysis filters and decimated by two (even-indexed outputs
kept), producing the next approximation and that level's detail vector.
Periodic extension keeps the filter bank exactly orthogonal at every even
input length, so Parseval holds to rounding error and white noise maps to
white coefficients.

Detail vectors carry a per-scale ``steady_start`` index equal to the filter
length; detectors restrict their sums to indices at or beyond it so that
boundary-affected coefficients never enter a detection statistic.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .signals import SampledSignal

__all__ = [
    "WaveletFilterPair",
    "ScaleLayout",
    "DetailCoefficients",
    "db_filters",
    "dwt_details",
    "concat_scales",
    "pyramid_batch",
    "count_ops",
]

# Low-pass analysis coefficients for Daubechies orders 1..10, generated by
# spectral factorization of the order-p binomial half-band polynomial at
# 60-digit working precision and rounded to 17 significant digits.  Each
# row sums to sqrt(2) and has unit energy.
_DB_LOWPASS: dict[int, tuple[float, ...]] = {
    1: (0.70710678118654752, 0.70710678118654752),
    2: (0.48296291314453414, 0.83651630373780791, 0.22414386804201338,
        -0.12940952255126038),
    3: (0.33267055295008262, 0.80689150931109258, 0.45987750211849157,
        -0.13501102001025459, -0.085441273882026662, 0.035226291885709537),
    4: (0.2303778133088965, 0.71484657055291565, 0.63088076792985891,
        -0.027983769416859854, -0.18703481171909308, 0.030841381835560764,
        0.0328830116668852, -0.010597401785069032),
    5: (0.16010239797419291, 0.60382926979718967, 0.72430852843777293,
        0.13842814590132073, -0.24229488706638203, -0.032244869584638375,
        0.077571493840045714, -0.0062414902127982743, -0.012580751999081999,
        0.0033357252854737713),
    6: (0.11154074335010946, 0.49462389039845309, 0.75113390802109535,
        0.31525035170919763, -0.22626469396543982, -0.12976686756726194,
        0.097501605587323049, 0.027522865530305729, -0.03158203931748603,
        0.00055384220116149614, 0.0047772575109455106, -0.0010773010853084796),
    7: (0.077852054085009179, 0.39653931948191731, 0.72913209084623512,
        0.46978228740519312, -0.14390600392856498, -0.22403618499387498,
        0.071309219266830265, 0.080612609151083072, -0.038029936935014414,
        -0.016574541630666881, 0.012550998556099841, 0.00042957797292136652,
        -0.0018016407040474909, 0.00035371379997452025),
    8: (0.05441584224310401, 0.31287159091429997, 0.67563073629728981,
        0.58535468365420671, -0.015829105256349306, -0.28401554296154693,
        0.00047248457391328277, 0.12874742662047846, -0.017369301001807546,
        -0.044088253930794752, 0.013981027917398282, 0.0087460940474057767,
        -0.0048703529934515743, -0.00039174037337694705, 0.00067544940645056937,
        -0.00011747678412476953),
    9: (0.038077947363878347, 0.24383467461259035, 0.60482312369011111,
        0.65728807805130054, 0.13319738582500758, -0.29327378327917491,
        -0.096840783222976461, 0.14854074933810638, 0.030725681479333379,
        -0.067632829061329974, 0.00025094711483145196, 0.022361662123679097,
        -0.0047232047577513973, -0.0042815036824634298, 0.0018476468830562265,
        0.00023038576352319597, -0.00025196318894271014, 3.9347320316271599e-05),
    10: (0.026670057900555554, 0.18817680007769149, 0.52720118893172559,
         0.68845903945360357, 0.28117234366057746, -0.24984642432731538,
         -0.19594627437737704, 0.12736934033579326, 0.093057364603572351,
         -0.071394147166397087, -0.029457536821875813, 0.033212674059341002,
         0.0036065535669561697, -0.010733175483330575, 0.0013953517470529012,
         0.0019924052951850561, -0.00068585669495971163, -0.00011646685512928545,
         9.3588670320069591e-05, -1.3264202894521245e-05),
}

_ENERGY_TOL = 1e-12
_ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class WaveletFilterPair:
    """Orthonormal low-pass/high-pass analysis pair of even length L."""

    h: np.ndarray
    g: np.ndarray
    family_name: str

    def __post_init__(self) -> None:
        h = np.asarray(self.h, dtype=np.float64).copy()
        g = np.asarray(self.g, dtype=np.float64).copy()
        if h.ndim != 1 or h.shape != g.shape:
            raise ValueError("h and g must be equal-length 1-D vectors")
        L = h.shape[0]
        if L < 2 or L % 2:
            raise ValueError(f"filter length must be even and >= 2, got {L}")
        for name, f in (("h", h), ("g", g)):
            e = float(f @ f)
            if abs(e - 1.0) > _ENERGY_TOL:
                raise ValueError(f"{name} energy {e!r} deviates from 1 beyond {_ENERGY_TOL}")
        mirror = np.where(np.arange(L) % 2 == 0, 1.0, -1.0) * h[::-1]
        if np.max(np.abs(g - mirror)) > _ENERGY_TOL:
            raise ValueError("g is not the quadrature mirror of h")
        for k in range(1, L // 2):
            dot = float(h[: L - 2 * k] @ h[2 * k:])
            if abs(dot) > _ORTHO_TOL:
                raise ValueError(f"h fails shift-{2 * k} orthonormality: {dot!r}")
        h.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "g", g)

    @property
    def length(self) -> int:
        return int(self.h.shape[0])


def db_filters(order: int) -> WaveletFilterPair:
    """Standard Daubechies analysis pair of length L = 2 * order.

    ``order`` 1 is the Haar pair.  The high-pass filter is the quadrature
    mirror g[n] = (-1)^n * h[L-1-n].
    """
    if order not in _DB_LOWPASS:
        raise ValueError(f"unsupported Daubechies order {order}; supported: 1..10")
    h = np.array(_DB_LOWPASS[order], dtype=np.float64)
    L = h.shape[0]
    g = np.where(np.arange(L) % 2 == 0, 1.0, -1.0) * h[::-1]
    return WaveletFilterPair(h=h, g=g, family_name=f"db{order}")


def parse_family(name: str) -> WaveletFilterPair:
    """Filter pair from a family name such as "db5" or "haar"."""
    s = name.strip().lower()
    if s == "haar":
        return db_filters(1)
    if s.startswith("db"):
        try:
            return db_filters(int(s[2:]))
        except ValueError:
            pass
    raise ValueError(f"unknown wavelet family {name!r}")


@dataclass(frozen=True)
class ScaleLayout:
    """Shape of a (possibly concatenated) detail vector.

    ``scales`` lists the levels in storage order; segment k holds that
    level's detail vector of length ``seg_lengths[k]`` with boundary-affected
    coefficients below ``steady_starts[k]``.
    """

    scales: tuple[int, ...]
    seg_lengths: tuple[int, ...]
    steady_starts: tuple[int, ...]

    def __post_init__(self) -> None:
        scales = tuple(int(s) for s in self.scales)
        lengths = tuple(int(m) for m in self.seg_lengths)
        starts = tuple(int(t) for t in self.steady_starts)
        if not (len(scales) == len(lengths) == len(starts)) or not scales:
            raise ValueError("scales, seg_lengths, steady_starts must be equal-length and non-empty")
        if len(set(scales)) != len(scales):
            raise ValueError("duplicate scale index")
        if any(s < 1 for s in scales) or any(m < 1 for m in lengths):
            raise ValueError("scale indices and segment lengths must be positive")
        if any(not 0 <= t <= m for t, m in zip(starts, lengths)):
            raise ValueError("steady_start must lie in [0, segment length]")
        source = {m * 2**s for s, m in zip(scales, lengths)}
        if len(source) != 1:
            raise ValueError("segments imply different source signal lengths")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "seg_lengths", lengths)
        object.__setattr__(self, "steady_starts", starts)

    @property
    def total_length(self) -> int:
        return sum(self.seg_lengths)

    @property
    def source_length(self) -> int:
        return self.seg_lengths[0] * 2 ** self.scales[0]

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for m in self.seg_lengths:
            out.append(acc)
            acc += m
        return tuple(out)

    def steady_slices(self) -> tuple[slice, ...]:
        """Absolute slices of the steady range of each segment."""
        return tuple(
            slice(off + t, off + m)
            for off, m, t in zip(self.offsets, self.seg_lengths, self.steady_starts)
        )

    def steady_mask(self) -> np.ndarray:
        mask = np.zeros(self.total_length, dtype=bool)
        for sl in self.steady_slices():
            mask[sl] = True
        return mask

    @property
    def steady_length(self) -> int:
        return sum(m - t for m, t in zip(self.seg_lengths, self.steady_starts))


@dataclass(frozen=True)
class DetailCoefficients:
    """Detail coefficient values arranged according to a ScaleLayout."""

    values: np.ndarray
    layout: ScaleLayout

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64).copy()
        if v.ndim != 1 or v.shape[0] != self.layout.total_length:
            raise ValueError(
                f"values length {v.shape} does not match layout total {self.layout.total_length}"
            )
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def segment(self, scale: int) -> np.ndarray:
        k = self.layout.scales.index(scale)
        off = self.layout.offsets[k]
        return self.values[off : off + self.layout.seg_lengths[k]]

    def steady_values(self) -> np.ndarray:
        return np.concatenate([self.values[sl] for sl in self.layout.steady_slices()])


# ---------------------------------------------------------------------------
# Operation counting.  When a counter is active, the pyramid and the
# detector statistic tally the multiply-add count implied by their actual
# loop extents; used to check the linear-in-length complexity contract.

class OpCounter:
    def __init__(self) -> None:
        self.madds = 0


_ACTIVE_COUNTER: contextvars.ContextVar[OpCounter | None] = contextvars.ContextVar(
    "wavedet_op_counter", default=None
)


@contextlib.contextmanager
def count_ops() -> Iterator[OpCounter]:
    counter = OpCounter()
    token = _ACTIVE_COUNTER.set(counter)
    try:
        yield counter
    finally:
        _ACTIVE_COUNTER.reset(token)


def tally_madds(n: int) -> None:
    counter = _ACTIVE_COUNTER.get()
    if counter is not None:
        counter.madds += int(n)


# ---------------------------------------------------------------------------
# The pyramid engine.

def _filter_down(X: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Circular convolution with f followed by keep-even decimation.

    X is (batch, M) with M even; output is (batch, M//2) where
    out[b, k] = sum_j f[j] * X[b, (2k - j) mod M].
    """
    B, M = X.shape
    L = f.shape[0]
    if M % 2:
        raise ValueError(f"cannot decimate odd length {M}")
    # periodic prefix of L-1 columns; modular indexing handles L - 1 >= M
    cols = np.arange(M - (L - 1), M) % M
    Xp = np.concatenate([X[:, cols], X], axis=1)
    windows = sliding_window_view(Xp, L, axis=1)[:, ::2, :]
    tally_madds(B * (M // 2) * L)
    return windows @ np.ascontiguousarray(f[::-1])


def pyramid_batch(
    X: np.ndarray, filters: WaveletFilterPair, max_level: int
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Decompose a batch of rows; returns (approximation, [d_1 .. d_max])."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("pyramid_batch expects a 2-D batch")
    n = X.shape[1]
    if n < 2 or n & (n - 1):
        raise ValueError(f"input length must be a power of two >= 2, got {n}")
    levels = int(max_level)
    if not 1 <= levels <= n.bit_length() - 1:
        raise ValueError(f"max_level {max_level} out of range for length {n}")
    approx = X
    details: list[np.ndarray] = []
    for _ in range(levels):
        details.append(_filter_down(approx, filters.g))
        approx = _filter_down(approx, filters.h)
    return approx, details


def dwt_details(
    x: SampledSignal | np.ndarray, filters: WaveletFilterPair, max_level: int
) -> list[DetailCoefficients]:
    """Detail vectors d_1 .. d_max_level of a single signal.

    Level i has length 2^(N-i) for input length 2^N.  Each level's
    steady_start is the filter length L, clamped to the segment length when
    the level is too deep to have any steady coefficients (such levels
    cannot back a detector, but their values still satisfy Parseval).
    """
    samples = x.samples if isinstance(x, SampledSignal) else np.asarray(x, dtype=np.float64)
    _, dets = pyramid_batch(samples[None, :], filters, max_level)
    L = filters.length
    out = []
    for i, d in enumerate(dets, start=1):
        m = d.shape[1]
        layout = ScaleLayout(scales=(i,), seg_lengths=(m,), steady_starts=(min(L, m),))
        out.append(DetailCoefficients(values=d[0], layout=layout))
    return out


def concat_scales(
    details: Sequence[DetailCoefficients], B: Sequence[int]
) -> DetailCoefficients:
    """Concatenate the requested scales, in B's order, into one vector."""
    if not B:
        raise ValueError("scale set B must be non-empty")
    by_scale: dict[int, tuple[DetailCoefficients, int]] = {}
    for d in details:
        for k, s in enumerate(d.layout.scales):
            by_scale[s] = (d, k)
    missing = [s for s in B if s not in by_scale]
    if missing:
        raise ValueError(f"requested scales missing from input: {missing}")
    values, scales, lengths, starts = [], [], [], []
    for s in B:
        d, k = by_scale[int(s)]
        off = d.layout.offsets[k]
        m = d.layout.seg_lengths[k]
        values.append(d.values[off : off + m])
        scales.append(int(s))
        lengths.append(m)
        starts.append(d.layout.steady_starts[k])
    layout = ScaleLayout(scales=tuple(scales), seg_lengths=tuple(lengths),
                         steady_starts=tuple(starts))
    return DetailCoefficients(values=np.concatenate(values), layout=layout)
