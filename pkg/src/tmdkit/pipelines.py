"""End-to-end analysis chains: simulate, calibrate, reconstruct, report.

Each runner writes deterministic JSON documents (plus CSV tables of the
distributions) into an output directory and returns its primary
document.  The ``replicate`` runner chains the full measurement
sequence for one of the four layouts with its stock configuration:

  A  threshold detectors on both arms, coincidence calibration
  B  threshold signal arm heralding a multi-bin idler measurement
  C  both arms merged into one detector, pair-parity statistics
  D  one multi-bin detector per arm, joint statistics

Simulated count rates are reported per shot; multiply by the pulse
repetition rate for rates per second.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import io as tmdio
from .detector import TMDConfig
from .errors import ConfigError, DataFormatError, DomainError
from .montecarlo import (
    CollectiveResult,
    ExperimentConfig,
    ExperimentResult,
    run_collective_experiment,
    run_experiment,
)
from .reconstruct import ReconstructionResult, invert_joint, invert_single, propagate_errors
from .sources import SourceModel
from .stats import (
    ClickStatistics,
    JointPhotonDistribution,
    PhotonDistribution,
    correlation,
    fit_poisson,
    fit_thermal,
    marginals,
    moment,
    number_squeezing_db,
)

DEFAULT_SHOTS = 1_000_000
DEFAULT_SEED = 20260817


@dataclass(frozen=True)
class RunOutput:
    """Primary document of a runner plus every file it wrote."""

    primary: dict
    paths: tuple[str, ...]


def default_config(setup: str, shots: int | None = None, seed: int | None = None) -> ExperimentConfig:
    """Stock configuration of each measurement layout.

    Sources and efficiencies follow the reference twin-beam experiment
    the layouts are modeled on; override any of it via a config file.
    """
    shots = DEFAULT_SHOTS if shots is None else shots
    seed = DEFAULT_SEED if seed is None else seed
    if setup == "A":
        return ExperimentConfig(
            source=SourceModel.fock_pairs(1),
            setup="A",
            tmd_signal=TMDConfig.uniform(bins=1, efficiency=0.117),
            tmd_idler=TMDConfig.uniform(bins=1, efficiency=0.137),
            shots=shots,
            seed=seed,
            sigma_eta_signal=0.009,
            sigma_eta_idler=0.009,
        )
    if setup == "B":
        return ExperimentConfig(
            source=SourceModel.single_mode_squeezer(0.5),
            setup="B",
            tmd_signal=TMDConfig.uniform(bins=1, efficiency=0.117),
            tmd_idler=TMDConfig.uniform(bins=8, efficiency=0.113),
            shots=shots,
            seed=seed,
            sigma_eta_signal=0.009,
            sigma_eta_idler=0.009,
        )
    if setup == "C":
        return ExperimentConfig(
            source=SourceModel.single_mode_squeezer(0.05),
            setup="C",
            tmd_signal=TMDConfig.uniform(bins=8, efficiency=0.117),
            tmd_idler=TMDConfig.uniform(bins=8, efficiency=0.117),
            shots=shots,
            seed=seed,
            sigma_eta_signal=0.009,
            sigma_eta_idler=0.009,
        )
    if setup == "D":
        return ExperimentConfig(
            source=SourceModel.poissonian_pairs(0.2),
            setup="D",
            tmd_signal=TMDConfig.uniform(bins=8, efficiency=0.0274),
            tmd_idler=TMDConfig.uniform(bins=8, efficiency=0.111),
            shots=shots,
            seed=seed,
            sigma_eta_signal=0.009,
            sigma_eta_idler=0.009,
        )
    raise DomainError(f"unknown setup {setup!r}")


def apply_overrides(
    config: ExperimentConfig, shots: int | None = None, seed: int | None = None
) -> ExperimentConfig:
    if shots is not None:
        config = replace(config, shots=shots)
    if seed is not None:
        config = replace(config, seed=seed)
    return config


def _clicks_doc(clicks: ClickStatistics) -> dict:
    return {"counts": clicks.counts, "total_shots": clicks.total_shots}


def _simulation_doc(config: ExperimentConfig, result: ExperimentResult | CollectiveResult) -> dict:
    doc = {
        "format_version": tmdio.FORMAT_VERSION,
        "kind": "simulation",
        "setup": config.setup,
        "config": tmdio.serialize_config(config),
        "clicks": {},
        "rates_per_shot": {},
    }
    if isinstance(result, CollectiveResult):
        doc["clicks"]["collective"] = _clicks_doc(result.clicks)
        clicked = int(result.clicks.counts[1:].sum())
        doc["rates_per_shot"]["collective_singles"] = clicked / config.shots
    else:
        doc["clicks"]["signal"] = _clicks_doc(result.signal_clicks)
        doc["clicks"]["idler"] = _clicks_doc(result.idler_clicks)
        doc["clicks"]["joint"] = _clicks_doc(result.joint_clicks)
        doc["rates_per_shot"] = {
            "signal_singles": result.signal_singles / config.shots,
            "idler_singles": result.idler_singles / config.shots,
            "coincidences": result.coincidences / config.shots,
        }
    return doc


def _calibration_doc(config: ExperimentConfig, result: ExperimentResult) -> dict:
    signal = result.signal_calibration()
    idler = result.idler_calibration()
    return {
        "format_version": tmdio.FORMAT_VERSION,
        "kind": "calibration",
        "setup": config.setup,
        "signal": {
            "efficiency": signal.eta,
            "uncertainty": signal.eta_uncertainty,
            "coincidences": signal.coincidences,
            "singles": signal.singles,
            "configured_efficiency": config.tmd_signal.efficiency,
        },
        "idler": {
            "efficiency": idler.eta,
            "uncertainty": idler.eta_uncertainty,
            "coincidences": idler.coincidences,
            "singles": idler.singles,
            "configured_efficiency": config.tmd_idler.efficiency,
        },
    }


def _arm_doc(
    tmd: TMDConfig, clicks: ClickStatistics, sigma_eta: float, constrained: bool
) -> dict:
    recon = invert_single(tmd, clicks, constrained=constrained)
    doc = {
        "probabilities": recon.dist.probs,
        "mean": recon.dist.mean,
        "is_physical": recon.dist.is_physical,
        "condition_number": recon.condition_number,
        "residual": recon.residual,
        "method": recon.method,
        "efficiency": tmd.efficiency,
    }
    if not constrained:
        cov = propagate_errors(tmd, clicks, sigma_eta)
        doc["sigma"] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        doc["covariance"] = cov
    return doc


def _collective_tmd(config: ExperimentConfig) -> TMDConfig:
    # one shared detector; a single effective efficiency is exact when
    # the arms are balanced and a documented approximation otherwise
    eta = (config.tmd_signal.efficiency + config.tmd_idler.efficiency) / 2.0
    return TMDConfig(config.tmd_signal.bin_probs, eta, config.tmd_signal.n_max)


def _reconstruction_doc(
    config: ExperimentConfig,
    result: ExperimentResult | CollectiveResult,
    constrained: bool,
) -> dict:
    doc = {
        "format_version": tmdio.FORMAT_VERSION,
        "kind": "reconstruction",
        "setup": config.setup,
        "config": tmdio.serialize_config(config),
        "method": "constrained" if constrained else "direct",
    }
    if isinstance(result, CollectiveResult):
        tmd = _collective_tmd(config)
        sigma_eta = (config.sigma_eta_signal + config.sigma_eta_idler) / 2.0
        doc["collective"] = _arm_doc(tmd, result.clicks, sigma_eta, constrained)
        doc["collective"]["efficiency_note"] = (
            "arm efficiencies averaged; exact only for balanced arms"
        )
        return doc
    if config.setup == "D":
        joint = invert_joint(config.tmd_signal, config.tmd_idler, result.joint_clicks, constrained)
        doc["joint"] = {
            "probabilities": joint.dist.probs,
            "is_physical": joint.dist.is_physical,
            "condition_number": joint.condition_number,
            "residual": joint.residual,
            "method": joint.method,
        }
    doc["signal"] = _arm_doc(
        config.tmd_signal, result.signal_clicks, config.sigma_eta_signal, constrained
    )
    doc["idler"] = _arm_doc(
        config.tmd_idler, result.idler_clicks, config.sigma_eta_idler, constrained
    )
    return doc


def _joint_metrics(joint: JointPhotonDistribution) -> dict:
    sig, idl = marginals(joint)
    return {
        "correlation": correlation(joint),
        "squeezing_db": number_squeezing_db(joint),
        "signal_mean": sig.mean,
        "idler_mean": idl.mean,
    }


def _vector_metrics(dist: PhotonDistribution) -> dict:
    return {
        "mean": dist.mean,
        "moments": {str(m): moment(dist, m) for m in (1, 2, 3, 4)},
        "is_physical": dist.is_physical,
    }


def _fit_doc(dist: PhotonDistribution) -> dict:
    poisson = fit_poisson(dist)
    thermal = fit_thermal(dist)
    return {
        "format_version": tmdio.FORMAT_VERSION,
        "kind": "fit",
        "poisson": {
            "mean": poisson.mean,
            "residual_l2": poisson.residual_l2,
            "per_bin_deviation": poisson.per_bin_deviation,
        },
        "thermal": {
            "mean": thermal.mean,
            "residual_l2": thermal.residual_l2,
            "per_bin_deviation": thermal.per_bin_deviation,
        },
        "preferred": "poisson" if poisson.residual_l2 <= thermal.residual_l2 else "thermal",
    }


def _write(out_dir: Path, name: str, doc: dict, paths: list[str]) -> None:
    path = out_dir / name
    tmdio.write_json_doc(path, doc)
    paths.append(str(path))


def _write_click_tables(
    out_dir: Path, result: ExperimentResult | CollectiveResult, paths: list[str]
) -> None:
    if isinstance(result, CollectiveResult):
        path = out_dir / "clicks_collective.csv"
        tmdio.write_clicks_csv(path, result.clicks)
        paths.append(str(path))
        return
    for name, clicks in (
        ("clicks_signal.csv", result.signal_clicks),
        ("clicks_idler.csv", result.idler_clicks),
        ("clicks_joint.csv", result.joint_clicks),
    ):
        path = out_dir / name
        tmdio.write_clicks_csv(path, clicks)
        paths.append(str(path))


def _write_distribution_tables(out_dir: Path, recon_doc: dict, paths: list[str]) -> None:
    for arm in ("signal", "idler", "collective"):
        if arm not in recon_doc:
            continue
        fragment = recon_doc[arm]
        dist = PhotonDistribution(np.asarray(fragment["probabilities"]))
        sigma = fragment.get("sigma")
        path = out_dir / f"distribution_{arm}.csv"
        tmdio.write_distribution_csv(path, dist, None if sigma is None else np.asarray(sigma))
        paths.append(str(path))
    if "joint" in recon_doc:
        joint = JointPhotonDistribution(np.asarray(recon_doc["joint"]["probabilities"]))
        path = out_dir / "distribution_joint.csv"
        tmdio.write_distribution_csv(path, joint)
        paths.append(str(path))


def _run(config: ExperimentConfig, keep_shots: bool = False):
    if config.setup == "C":
        return run_collective_experiment(config, keep_shots=keep_shots)
    return run_experiment(config, keep_shots=keep_shots)


def _emit_shots(out_dir: Path, result, paths: list[str]) -> None:
    path = out_dir / "shots.csv"
    if isinstance(result, CollectiveResult):
        tmdio.write_shots(path, signal_masks=result.masks)
    else:
        tmdio.write_shots(path, signal_masks=result.signal_masks, idler_masks=result.idler_masks)
    paths.append(str(path))


def run_simulate(config: ExperimentConfig, out_dir: str | Path, emit_shots: bool = False) -> RunOutput:
    """Simulate one run and persist its click statistics."""
    out_dir = Path(out_dir)
    result = _run(config, keep_shots=emit_shots)
    doc = _simulation_doc(config, result)
    paths: list[str] = []
    _write(out_dir, "simulation.json", doc, paths)
    _write_click_tables(out_dir, result, paths)
    if emit_shots:
        _emit_shots(out_dir, result, paths)
    return RunOutput(doc, tuple(paths))


def run_calibrate(config: ExperimentConfig, out_dir: str | Path) -> RunOutput:
    """Simulate one run and estimate both arm efficiencies from it."""
    if config.setup == "C":
        raise DomainError("the merged-arm layout cannot measure coincidences; calibrate with A, B, or D")
    out_dir = Path(out_dir)
    result = run_experiment(config)
    doc = _calibration_doc(config, result)
    paths: list[str] = []
    _write(out_dir, "calibration.json", doc, paths)
    return RunOutput(doc, tuple(paths))


def run_reconstruct(
    config: ExperimentConfig, out_dir: str | Path, constrained: bool = False
) -> RunOutput:
    """Simulate one run and reconstruct its photon statistics."""
    out_dir = Path(out_dir)
    result = _run(config)
    doc = _reconstruction_doc(config, result, constrained)
    paths: list[str] = []
    _write(out_dir, "reconstruction.json", doc, paths)
    _write_distribution_tables(out_dir, doc, paths)
    return RunOutput(doc, tuple(paths))


def _extract_joint(doc: dict) -> JointPhotonDistribution | None:
    fragment = doc.get("joint")
    if fragment is None:
        return None
    probs = fragment.get("probabilities") if isinstance(fragment, dict) else fragment
    try:
        return JointPhotonDistribution(np.asarray(probs, dtype=float))
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"joint entry is not a probability matrix: {exc}") from exc


def _extract_vector(doc: dict) -> PhotonDistribution | None:
    for key in ("distribution", "collective", "signal", "idler"):
        fragment = doc.get(key)
        if fragment is None:
            continue
        probs = fragment.get("probabilities") if isinstance(fragment, dict) else fragment
        try:
            return PhotonDistribution(np.asarray(probs, dtype=float))
        except (TypeError, ValueError) as exc:
            raise DataFormatError(f"{key} entry is not a probability vector: {exc}") from exc
    return None


def run_metrics_file(in_path: str | Path, out_dir: str | Path) -> RunOutput:
    """Figures of merit for a stored distribution document.

    Accepts a reconstruction document or a bare document carrying
    ``joint`` (matrix) or ``distribution`` (vector) probabilities.
    """
    out_dir = Path(out_dir)
    source_doc = tmdio.read_json_doc(in_path)
    doc: dict = {"format_version": tmdio.FORMAT_VERSION, "kind": "metrics"}
    joint = _extract_joint(source_doc)
    vector = _extract_vector(source_doc)
    if joint is not None:
        doc["joint"] = _joint_metrics(joint)
    if vector is not None:
        doc["distribution"] = _vector_metrics(vector)
    if joint is None and vector is None:
        raise DataFormatError("document carries neither a joint matrix nor a distribution vector")
    paths: list[str] = []
    _write(out_dir, "metrics.json", doc, paths)
    return RunOutput(doc, tuple(paths))


def run_fit_file(in_path: str | Path, out_dir: str | Path) -> RunOutput:
    """Fit the one-parameter families to a stored distribution document."""
    out_dir = Path(out_dir)
    source_doc = tmdio.read_json_doc(in_path)
    vector = _extract_vector(source_doc)
    if vector is None:
        joint = _extract_joint(source_doc)
        if joint is None:
            raise DataFormatError("document carries no distribution vector to fit")
        vector = marginals(joint)[0]
    doc = _fit_doc(vector)
    paths: list[str] = []
    _write(out_dir, "fit.json", doc, paths)
    return RunOutput(doc, tuple(paths))


def _summary_a(config: ExperimentConfig, calibration: dict) -> dict:
    return {
        "klyshko_signal": calibration["signal"]["efficiency"],
        "klyshko_idler": calibration["idler"]["efficiency"],
        "klyshko_signal_uncertainty": calibration["signal"]["uncertainty"],
        "klyshko_idler_uncertainty": calibration["idler"]["uncertainty"],
        "true_signal_efficiency": config.tmd_signal.efficiency,
        "true_idler_efficiency": config.tmd_idler.efficiency,
    }


def _summary_b(recon: dict, fit: dict, calibration: dict) -> dict:
    return {
        "idler_mean": recon["idler"]["mean"],
        "idler_probabilities": recon["idler"]["probabilities"],
        "idler_sigma": recon["idler"].get("sigma"),
        "klyshko_idler": calibration["idler"]["efficiency"],
        "fit_poisson_residual": fit["poisson"]["residual_l2"],
        "fit_thermal_residual": fit["thermal"]["residual_l2"],
        "preferred_family": fit["preferred"],
    }


def _summary_c(recon: dict) -> dict:
    probs = np.asarray(recon["collective"]["probabilities"], dtype=float)
    odd = probs[1::2]
    even = probs[0::2]
    even_mass = float(even.sum())
    odd_mass = float(odd.sum())
    return {
        "collective_probabilities": probs,
        "collective_mean": recon["collective"]["mean"],
        "odd_mass": odd_mass,
        "even_mass": even_mass,
        "max_odd_entry": float(odd.max()),
        "odd_to_even_ratio": odd_mass / even_mass if even_mass > 0 else "inf",
    }


def _summary_d(metrics: dict) -> dict:
    return {
        "correlation": metrics["joint"]["correlation"],
        "raw_correlation": metrics["raw"]["correlation"],
        "squeezing_db": metrics["joint"]["squeezing_db"],
        "raw_squeezing_db": metrics["raw"]["squeezing_db"],
        "signal_mean": metrics["joint"]["signal_mean"],
        "idler_mean": metrics["joint"]["idler_mean"],
    }


def run_replicate(
    setup: str,
    out_dir: str | Path,
    config: ExperimentConfig | None = None,
    shots: int | None = None,
    seed: int | None = None,
    constrained: bool = False,
    emit_shots: bool = False,
) -> RunOutput:
    """Chain simulate, calibrate, reconstruct, and metrics for one layout.

    A single simulation feeds every stage so the emitted documents are
    mutually consistent.  The summary repeats only numbers that already
    appear in the stage documents.
    """
    if config is None:
        config = default_config(setup, shots=shots, seed=seed)
    else:
        if config.setup != setup:
            raise ConfigError(f"config is for setup {config.setup!r}, requested {setup!r}")
        config = apply_overrides(config, shots=shots, seed=seed)
    out_dir = Path(out_dir)
    paths: list[str] = []

    _write(out_dir, "config.json", tmdio.serialize_config(config), paths)
    result = _run(config, keep_shots=emit_shots)
    sim_doc = _simulation_doc(config, result)
    _write(out_dir, "simulation.json", sim_doc, paths)
    _write_click_tables(out_dir, result, paths)
    if emit_shots:
        _emit_shots(out_dir, result, paths)

    summary: dict = {
        "format_version": tmdio.FORMAT_VERSION,
        "kind": "summary",
        "setup": config.setup,
        "shots": config.shots,
        "seed": config.seed,
    }

    if config.setup == "A":
        calibration = _calibration_doc(config, result)
        _write(out_dir, "calibration.json", calibration, paths)
        summary.update(_summary_a(config, calibration))
    elif config.setup == "B":
        calibration = _calibration_doc(config, result)
        _write(out_dir, "calibration.json", calibration, paths)
        recon = _reconstruction_doc(config, result, constrained)
        _write(out_dir, "reconstruction.json", recon, paths)
        _write_distribution_tables(out_dir, recon, paths)
        fit = _fit_doc(PhotonDistribution(np.asarray(recon["idler"]["probabilities"])))
        _write(out_dir, "fit.json", fit, paths)
        summary.update(_summary_b(recon, fit, calibration))
    elif config.setup == "C":
        recon = _reconstruction_doc(config, result, constrained)
        _write(out_dir, "reconstruction.json", recon, paths)
        _write_distribution_tables(out_dir, recon, paths)
        summary.update(_summary_c(recon))
    else:
        calibration = _calibration_doc(config, result)
        _write(out_dir, "calibration.json", calibration, paths)
        recon = _reconstruction_doc(config, result, constrained)
        _write(out_dir, "reconstruction.json", recon, paths)
        _write_distribution_tables(out_dir, recon, paths)
        joint = JointPhotonDistribution(np.asarray(recon["joint"]["probabilities"]))
        raw = JointPhotonDistribution(result.joint_clicks.frequencies)
        metrics = {
            "format_version": tmdio.FORMAT_VERSION,
            "kind": "metrics",
            "joint": _joint_metrics(joint),
            "raw": _joint_metrics(raw),
        }
        _write(out_dir, "metrics.json", metrics, paths)
        summary.update(_summary_d(metrics))

    _write(out_dir, "summary.json", summary, paths)
    return RunOutput(summary, tuple(paths))
