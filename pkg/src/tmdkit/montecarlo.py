"""Shot-by-shot simulation of a twin-beam source read out by click detectors.

Every shot draws a pair number from the source, thins each arm with an
independent binomial loss, scatters the surviving photons over the
detector bins, and records which bins clicked.  Sampling is chunked and
each chunk gets its own counter-based stream, so a run is reproducible
for a given seed no matter how the chunks are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .detector import TMDConfig
from .errors import DomainError
from .reconstruct import CalibrationRecord, klyshko_efficiency
from .sources import SourceModel
from .stats import ClickStatistics

CHUNK_SIZE = 1 << 16

# Detector arity per measurement layout: two threshold detectors for
# calibration (A), threshold plus TMD for one marginal (B), one shared
# TMD fed by both arms (C), one TMD per arm (D).
SETUPS = ("A", "B", "C", "D")


@dataclass(frozen=True)
class ShotRecord:
    """Full record of a single simulated shot."""

    shot_id: int
    pairs: int
    signal_detected: int
    idler_detected: int
    signal_mask: int
    idler_mask: int
    signal_clicks: int
    idler_clicks: int


@dataclass(frozen=True)
class ExperimentConfig:
    """Source, measurement layout, detectors, and run length.

    For the shared-detector layout ("C") both arm configs must describe
    the same bin structure; only their efficiencies may differ.  The
    ``sigma_eta_*`` fields carry calibration uncertainties through to
    error propagation and do not affect the simulation itself.
    """

    source: SourceModel
    setup: str
    tmd_signal: TMDConfig
    tmd_idler: TMDConfig
    shots: int
    seed: int
    sigma_eta_signal: float = 0.0
    sigma_eta_idler: float = 0.0

    def __post_init__(self) -> None:
        if self.setup not in SETUPS:
            raise DomainError(f"setup must be one of {SETUPS}, got {self.setup!r}")
        bins_s = self.tmd_signal.bins
        bins_i = self.tmd_idler.bins
        if self.setup == "A" and not (bins_s == 1 and bins_i == 1):
            raise DomainError("setup A uses a threshold detector (1 bin) on each arm")
        if self.setup == "B" and (bins_s == 1) == (bins_i == 1):
            raise DomainError("setup B pairs one threshold detector with one multi-bin TMD")
        if self.setup == "C" and not np.array_equal(
            self.tmd_signal.bin_probs, self.tmd_idler.bin_probs
        ):
            raise DomainError("setup C feeds both arms into one TMD; bin structures must match")
        if self.setup == "D" and (bins_s < 2 or bins_i < 2):
            raise DomainError("setup D uses a multi-bin TMD on each arm")
        if self.shots <= 0:
            raise DomainError("shots must be positive")
        if self.seed < 0:
            raise DomainError("seed must be non-negative")
        for sigma in (self.sigma_eta_signal, self.sigma_eta_idler):
            if not 0.0 <= sigma < 1.0:
                raise DomainError("efficiency uncertainties must lie in [0, 1)")


@dataclass(frozen=True)
class ExperimentResult:
    """Accumulated click histograms and coincidence counters for a run."""

    config: ExperimentConfig
    signal_clicks: ClickStatistics
    idler_clicks: ClickStatistics
    joint_clicks: ClickStatistics
    signal_singles: int
    idler_singles: int
    coincidences: int
    signal_masks: np.ndarray | None = None
    idler_masks: np.ndarray | None = None

    def signal_calibration(self) -> CalibrationRecord:
        """Klyshko estimate of the signal-arm efficiency."""
        return klyshko_efficiency(self.coincidences, self.idler_singles)

    def idler_calibration(self) -> CalibrationRecord:
        """Klyshko estimate of the idler-arm efficiency."""
        return klyshko_efficiency(self.coincidences, self.signal_singles)


@dataclass(frozen=True)
class CollectiveResult:
    """Click histogram of a run with both arms merged into one detector."""

    config: ExperimentConfig
    clicks: ClickStatistics
    masks: np.ndarray | None = None


def iter_shot_chunks(shots: int, chunk_size: int = CHUNK_SIZE) -> Iterator[tuple[int, int]]:
    """Yield (chunk_index, chunk_shots) covering ``shots`` in order."""
    if shots <= 0:
        raise DomainError("shots must be positive")
    if chunk_size <= 0:
        raise DomainError("chunk_size must be positive")
    index = 0
    remaining = shots
    while remaining > 0:
        size = min(chunk_size, remaining)
        yield index, size
        index += 1
        remaining -= size


def _chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    # one independent counter block per chunk keeps runs reproducible
    # regardless of how chunks are interleaved
    return np.random.Generator(np.random.Philox(key=seed).jumped(chunk_index))


def _pair_cdf(source: SourceModel) -> np.ndarray:
    cdf = np.cumsum(source.pair_dist.probs)
    cdf[-1] = 1.0
    return cdf


def _sample_pairs(rng: np.random.Generator, cdf: np.ndarray, size: int) -> np.ndarray:
    draws = rng.random(size)
    return np.searchsorted(cdf, draws, side="right").clip(0, cdf.size - 1)


def _detect_arm(
    rng: np.random.Generator, photons: np.ndarray, tmd: TMDConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin, scatter over bins, and read out one arm for a batch of shots.

    Returns (detected photons, click masks, click counts).
    """
    detected = rng.binomial(photons, tmd.efficiency)
    if tmd.bins == 1:
        masks = (detected > 0).astype(np.uint32)
        return detected, masks, masks.astype(np.int64)
    occupancy = rng.multinomial(detected, tmd.bin_probs)
    bits = np.uint32(1) << np.arange(tmd.bins, dtype=np.uint32)
    masks = ((occupancy > 0) @ bits).astype(np.uint32)
    clicks = np.bitwise_count(masks).astype(np.int64)
    return detected, masks, clicks


def sample_shot(
    source: SourceModel,
    tmd_signal: TMDConfig,
    tmd_idler: TMDConfig,
    rng: np.random.Generator,
    shot_id: int = 0,
) -> ShotRecord:
    """Draw one complete shot; useful for inspection and tests."""
    pairs = _sample_pairs(rng, _pair_cdf(source), 1)
    s_det, s_mask, s_clicks = _detect_arm(rng, pairs, tmd_signal)
    i_det, i_mask, i_clicks = _detect_arm(rng, pairs, tmd_idler)
    return ShotRecord(
        shot_id=shot_id,
        pairs=int(pairs[0]),
        signal_detected=int(s_det[0]),
        idler_detected=int(i_det[0]),
        signal_mask=int(s_mask[0]),
        idler_mask=int(i_mask[0]),
        signal_clicks=int(s_clicks[0]),
        idler_clicks=int(i_clicks[0]),
    )


def run_experiment(config: ExperimentConfig, keep_shots: bool = False) -> ExperimentResult:
    """Simulate the configured number of shots and histogram the clicks.

    Handles the two-detector layouts; the shared-detector layout has its
    own entry point, :func:`run_collective_experiment`.  ``keep_shots``
    additionally retains the per-shot click masks of both arms, at eight
    bytes per shot, for export or re-analysis.
    """
    if config.setup == "C":
        raise DomainError("setup C merges the arms; use run_collective_experiment")
    bins_s = config.tmd_signal.bins
    bins_i = config.tmd_idler.bins
    cdf = _pair_cdf(config.source)
    joint = np.zeros((bins_s + 1) * (bins_i + 1), dtype=np.int64)
    signal_singles = 0
    idler_singles = 0
    coincidences = 0
    masks_s = np.empty(config.shots, dtype=np.uint32) if keep_shots else None
    masks_i = np.empty(config.shots, dtype=np.uint32) if keep_shots else None

    offset = 0
    for chunk_index, size in iter_shot_chunks(config.shots):
        rng = _chunk_rng(config.seed, chunk_index)
        pairs = _sample_pairs(rng, cdf, size)
        _, s_mask, s_clicks = _detect_arm(rng, pairs, config.tmd_signal)
        _, i_mask, i_clicks = _detect_arm(rng, pairs, config.tmd_idler)
        joint += np.bincount(
            s_clicks * (bins_i + 1) + i_clicks, minlength=joint.size
        )
        s_hit = s_clicks > 0
        i_hit = i_clicks > 0
        signal_singles += int(s_hit.sum())
        idler_singles += int(i_hit.sum())
        coincidences += int((s_hit & i_hit).sum())
        if keep_shots:
            masks_s[offset : offset + size] = s_mask
            masks_i[offset : offset + size] = i_mask
        offset += size

    joint = joint.reshape(bins_s + 1, bins_i + 1)
    if keep_shots:
        masks_s.flags.writeable = False
        masks_i.flags.writeable = False
    return ExperimentResult(
        config=config,
        signal_clicks=ClickStatistics(joint.sum(axis=1), config.shots),
        idler_clicks=ClickStatistics(joint.sum(axis=0), config.shots),
        joint_clicks=ClickStatistics(joint, config.shots),
        signal_singles=signal_singles,
        idler_singles=idler_singles,
        coincidences=coincidences,
        signal_masks=masks_s,
        idler_masks=masks_i,
    )


def run_collective_experiment(
    config: ExperimentConfig, keep_shots: bool = False
) -> CollectiveResult:
    """Simulate both arms feeding the same detector bins.

    Each arm is thinned with its own efficiency, then all survivors are
    scattered together over the shared bins, so one photon pair tends to
    produce click-number parity rather than per-arm coincidences.
    """
    if config.setup != "C":
        raise DomainError("run_collective_experiment requires the shared-detector setup")
    tmd = config.tmd_signal
    cdf = _pair_cdf(config.source)
    histogram = np.zeros(tmd.bins + 1, dtype=np.int64)
    masks = np.empty(config.shots, dtype=np.uint32) if keep_shots else None

    offset = 0
    for chunk_index, size in iter_shot_chunks(config.shots):
        rng = _chunk_rng(config.seed, chunk_index)
        pairs = _sample_pairs(rng, cdf, size)
        survivors = rng.binomial(pairs, config.tmd_signal.efficiency)
        survivors = survivors + rng.binomial(pairs, config.tmd_idler.efficiency)
        if tmd.bins == 1:
            mask = (survivors > 0).astype(np.uint32)
            clicks = mask.astype(np.int64)
        else:
            occupancy = rng.multinomial(survivors, tmd.bin_probs)
            bits = np.uint32(1) << np.arange(tmd.bins, dtype=np.uint32)
            mask = ((occupancy > 0) @ bits).astype(np.uint32)
            clicks = np.bitwise_count(mask).astype(np.int64)
        histogram += np.bincount(clicks, minlength=histogram.size)
        if keep_shots:
            masks[offset : offset + size] = mask
        offset += size

    if keep_shots:
        masks.flags.writeable = False
    return CollectiveResult(
        config=config,
        clicks=ClickStatistics(histogram, config.shots),
        masks=masks,
    )


def simulate_klyshko(
    source: SourceModel,
    eta_signal: float,
    eta_idler: float,
    shots: int,
    seed: int,
) -> tuple[CalibrationRecord, CalibrationRecord]:
    """Calibrate both arms from a threshold-detector coincidence run.

    Returns the (signal, idler) efficiency records.  The estimate is
    exact only in the low-gain limit; multi-pair emission biases the
    ratio upward because either photon of a multi-pair shot can fire the
    heralding detector.
    """
    config = ExperimentConfig(
        source=source,
        setup="A",
        tmd_signal=TMDConfig.uniform(bins=1, efficiency=eta_signal),
        tmd_idler=TMDConfig.uniform(bins=1, efficiency=eta_idler),
        shots=shots,
        seed=seed,
    )
    result = run_experiment(config)
    return result.signal_calibration(), result.idler_calibration()
