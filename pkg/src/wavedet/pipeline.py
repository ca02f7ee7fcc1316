"""Batched signal-to-feature pipeline used by every Monte Carlo loop.

A FeaturePipe fixes the (signal length, filter pair, scale layout) triple
and turns raw sample batches into concatenated detail vectors or their
steady-range restrictions.  Monte Carlo generators are chunked: trial t
always lands in chunk t // CHUNK with substream path (*path, chunk), so the
realisation of trial t depends only on (seed, path, t), never on how many
trials a caller asked for or in what order chunks were evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .rng import chunk_bounds, normal, substream
from .signals import Hypothesis, NoiseModel, SampledSignal, amplitude
from .wavelet import (
    DetailCoefficients,
    ScaleLayout,
    WaveletFilterPair,
    concat_scales,
    dwt_details,
    pyramid_batch,
)


def layout_for_scales(
    length: int, filters: WaveletFilterPair, scales: Sequence[int]
) -> ScaleLayout:
    """Layout of the concatenated detail vector for ``scales`` of a 2^N signal."""
    n = int(length)
    if n < 2 or n & (n - 1):
        raise ValueError(f"signal length must be a power of two >= 2, got {length}")
    N = n.bit_length() - 1
    if not scales:
        raise ValueError("scale set must be non-empty")
    if any(not 1 <= int(s) <= N for s in scales):
        raise ValueError(f"scales {tuple(scales)} out of range for length {n}")
    lengths = tuple(2 ** (N - int(s)) for s in scales)
    starts = tuple(min(filters.length, m) for m in lengths)
    return ScaleLayout(scales=tuple(int(s) for s in scales), seg_lengths=lengths,
                       steady_starts=starts)


@dataclass(frozen=True)
class FeaturePipe:
    """Signal length + filter pair + detail layout, with batch transforms."""

    length: int
    filters: WaveletFilterPair
    layout: ScaleLayout

    def __post_init__(self) -> None:
        if self.layout.source_length != self.length:
            raise ValueError(
                f"layout implies source length {self.layout.source_length}, "
                f"pipe declares {self.length}"
            )

    @classmethod
    def for_scales(
        cls, length: int, filters: WaveletFilterPair, scales: Sequence[int]
    ) -> "FeaturePipe":
        return cls(length=int(length), filters=filters,
                   layout=layout_for_scales(length, filters, scales))

    @property
    def steady_dim(self) -> int:
        return self.layout.steady_length

    def transform_batch(self, X: np.ndarray) -> np.ndarray:
        """Concatenated detail values, one row per input row."""
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != self.length:
            raise ValueError(
                f"expected a (batch, {self.length}) array, got {X.shape}"
            )
        _, dets = pyramid_batch(X, self.filters, max(self.layout.scales))
        return np.concatenate([dets[s - 1] for s in self.layout.scales], axis=1)

    def steady_batch(self, X: np.ndarray) -> np.ndarray:
        """Steady-range detail features, one row per input row."""
        return self.transform_batch(X)[:, self.layout.steady_mask()]

    def details_of(self, x: SampledSignal | np.ndarray) -> DetailCoefficients:
        """Detail vector of one signal arranged in this pipe's layout."""
        samples = x.samples if isinstance(x, SampledSignal) else np.asarray(x)
        if samples.shape[0] != self.length:
            raise ValueError(f"signal length {samples.shape[0]} != pipe length {self.length}")
        dets = dwt_details(samples, self.filters, max(self.layout.scales))
        return concat_scales(dets, self.layout.scales)

    def template_steady(self, pulse: SampledSignal) -> np.ndarray:
        if pulse.hypothesis is not Hypothesis.TEMPLATE:
            raise ValueError("expected a pulse template")
        return self.details_of(pulse).steady_values()

    # -- chunked Monte Carlo feature streams ---------------------------------

    def iter_noise_steady(
        self, model: NoiseModel, trials: int, seed: int, path: Sequence[int] = ()
    ) -> Iterator[tuple[int, int, np.ndarray]]:
        """Yield (start, stop, features) blocks of noise-only trials."""
        for c, start, stop in chunk_bounds(int(trials)):
            rng = substream(seed, (*path, c))
            X = normal(rng, (stop - start, self.length), model.sigma_n)
            yield start, stop, self.steady_batch(X)

    def iter_obs_steady(
        self,
        pulse: SampledSignal,
        snr_db,
        model: NoiseModel,
        trials: int,
        seed: int,
        path: Sequence[int] = (),
    ) -> Iterator[tuple[int, int, np.ndarray]]:
        """Yield feature blocks of pulse-plus-noise trials.

        ``snr_db`` is a scalar applied to every trial or a length-``trials``
        vector giving each trial its own SNR.
        """
        if pulse.hypothesis is not Hypothesis.TEMPLATE:
            raise ValueError("expected a pulse template")
        snr = np.asarray(snr_db, dtype=np.float64)
        per_trial = snr.ndim == 1
        if per_trial and snr.shape[0] != trials:
            raise ValueError("per-trial snr vector length must equal trials")
        amps = amplitude(snr, model)
        for c, start, stop in chunk_bounds(int(trials)):
            rng = substream(seed, (*path, c))
            X = normal(rng, (stop - start, self.length), model.sigma_n)
            a = amps[start:stop, None] if per_trial else float(amps)
            X += a * pulse.samples
            yield start, stop, self.steady_batch(X)

    def noise_steady(
        self, model: NoiseModel, trials: int, seed: int, path: Sequence[int] = ()
    ) -> np.ndarray:
        blocks = [F for _, _, F in self.iter_noise_steady(model, trials, seed, path)]
        if not blocks:
            return np.empty((0, self.steady_dim))
        return np.concatenate(blocks, axis=0)

    def obs_steady(
        self,
        pulse: SampledSignal,
        snr_db,
        model: NoiseModel,
        trials: int,
        seed: int,
        path: Sequence[int] = (),
    ) -> np.ndarray:
        blocks = [F for _, _, F in self.iter_obs_steady(pulse, snr_db, model, trials, seed, path)]
        if not blocks:
            return np.empty((0, self.steady_dim))
        return np.concatenate(blocks, axis=0)
