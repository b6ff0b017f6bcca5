"""
Separation pipeline shared by the command line and the web app:
stft -> per-bin whitening -> per-bin ICA -> minimal-distortion scaling ->
permutation alignment -> inverse STFT, with per-stage timing and logging.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .align import (AlignOptions, DemixingSet, align_all, apply_alignment, composite_demixing,
                    minimal_distortion_rescale)
from .config import PipelineConfig
from .errors import BssError, InvalidArgumentError, StageError
from .ica_core import IcaOptions, demix_bin
from .metrics import evaluate_separation
from .mixsim import convolve_mix, gen_rir, synth_speech_like
from .signal_io import MultichannelWave, SeparationReport
from .tf import Spectrogram, istft, stft
from .whiten import BinData, whiten_bin

pipeline_logger = logging.getLogger('separation_pipeline')

STAGES = ('stft', 'whiten', 'ica', 'scaling', 'permutation', 'synthesis')


def log_stage(stage: str, details: str = "") -> None:
    """Log pipeline stage progress for debugging"""
    timestamp = datetime.now().strftime('%Y-%m-%d %H:%M:%S')
    pipeline_logger.info(f"[{timestamp}] {stage}: {details}")


class StageTimer:
    """Runs stages with logging, wall-clock timing and stage-tagged errors"""

    def __init__(self) -> None:
        self.times_ms: Dict[str, float] = {}

    def run(self, stage: str, fn: Callable, *args, **kwargs):
        log_stage(stage, "start")
        start = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except StageError:
            raise
        except (BssError, ValueError, np.linalg.LinAlgError) as e:
            log_stage(stage, f"failed: {e}")
            raise StageError(stage, e) from e
        elapsed = (time.perf_counter() - start) * 1000.0
        self.times_ms[stage] = self.times_ms.get(stage, 0.0) + elapsed
        log_stage(stage, f"done in {elapsed:.1f} ms")
        return result


@dataclass
class SeparationResult:
    estimates: MultichannelWave
    demixing: DemixingSet
    composite: np.ndarray
    whiteners: np.ndarray
    spectrogram: Spectrogram
    stage_times_ms: Dict[str, float]
    report: SeparationReport
    stalled_bins: List[int] = field(default_factory=list)
    silent_bins: List[int] = field(default_factory=list)


def _per_bin(stage: str, fn: Callable[[int], Any], bins: int, threads: int) -> List[Any]:
    """Map fn over bins on a worker pool; results come back in bin order"""
    def guarded(w: int):
        try:
            return fn(w)
        except (BssError, ValueError, np.linalg.LinAlgError) as e:
            raise StageError(stage, e, bin_index=w) from e

    if threads <= 1:
        return [guarded(w) for w in range(bins)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(guarded, range(bins)))


def _whiten_stage(X: np.ndarray, reg_m: float, threads: int):
    """Whiten every bin of X (bins, M, Q); exactly silent bins are flagged and left at zero"""
    bins, M, Q = X.shape
    Z = np.zeros_like(X)
    whiteners = np.zeros((bins, M, M), dtype=np.complex128)
    silent: List[int] = []

    def one(w: int):
        if not np.any(X[w]):
            return None
        return whiten_bin(BinData(X=X[w], bin_index=w), reg_m)

    for w, bundle in enumerate(_per_bin('whiten', one, bins, threads)):
        if bundle is None:
            silent.append(w)
            continue
        Z[w], whiteners[w] = bundle.Z, bundle.whitener
    return Z, whiteners, silent


def _ica_stage(Z: np.ndarray, silent: Sequence[int], opts: IcaOptions, threads: int):
    bins, N, _ = Z.shape
    skip = set(silent)

    def one(w: int):
        if w in skip:
            return None
        return demix_bin(Z[w], replace(opts, seed=opts.seed + w))

    U = np.tile(np.eye(N, dtype=np.complex128), (bins, 1, 1))
    stalled: List[int] = []
    for w, outcome in enumerate(_per_bin('ica', one, bins, threads)):
        if outcome is None:
            continue
        U[w] = outcome.U
        if outcome.partial:
            stalled.append(w)
    return U, stalled


def _scaling_stage(X: np.ndarray, Y: np.ndarray, threads: int):
    bins = X.shape[0]
    outcomes = _per_bin('scaling', lambda w: minimal_distortion_rescale(X[w], Y[w]), bins, threads)
    D = np.stack([d for d, _ in outcomes])
    Y_rescaled = np.stack([y for _, y in outcomes])
    return D, Y_rescaled


def separate(wave: MultichannelWave, config: PipelineConfig, threads: int = 1,
             references: Optional[MultichannelWave] = None) -> SeparationResult:
    timer = StageTimer()
    window = config.window
    log_stage("separate", f"{wave.num_channels} channels, {wave.num_samples} samples, "
                          f"T={window.length}, {window.kind}, overlap={window.overlap}, {config.perm_method}")

    spec = timer.run('stft', stft, wave, window, workers=threads)
    # (bins, channels, frames)
    X = np.transpose(spec.data, (2, 0, 1))
    bins, N, Q = X.shape
    if Q < N:
        raise StageError('stft', InvalidArgumentError(f"{Q} frames for {N} channels; the signal is too short"))

    Z, whiteners, silent = timer.run('whiten', _whiten_stage, X, config.reg_m, threads)
    if silent:
        log_stage('whiten', f"{len(silent)} silent bins passed through")

    ica_opts = IcaOptions(max_iter=config.max_iter, conv_tol=config.conv_tol,
                          init=config.ica_init, seed=config.seed)
    U, stalled = timer.run('ica', _ica_stage, Z, silent, ica_opts, threads)
    if stalled:
        log_stage('ica', f"{len(stalled)} bins with a non-converged extraction")

    # y = Uᴴ z per bin
    Y = np.conj(np.swapaxes(U, 1, 2)) @ Z
    D, Y_rescaled = timer.run('scaling', _scaling_stage, X, Y, threads)

    profile_tf = None if config.profile_tf == 'all' else int(config.profile_tf)
    base = DemixingSet(U=U, D=D, Gamma=np.tile(np.arange(N), (bins, 1)), window=window)
    demixing = timer.run('permutation', align_all, Y_rescaled, config.perm_method,
                         AlignOptions(profile_tf=profile_tf, seed=config.seed), base)

    def synthesize() -> MultichannelWave:
        aligned = apply_alignment(Y, demixing)
        out_spec = replace(spec, data=np.transpose(aligned, (1, 2, 0)))
        return istft(out_spec, workers=threads)

    estimates = timer.run('synthesis', synthesize)
    composite = composite_demixing(demixing, whiteners)

    sir: List[float] = []
    sdr: List[float] = []
    if references is not None:
        sir, sdr = timer.run('evaluation', _score, estimates, references, config.filter_len_eval)

    report = SeparationReport(
        per_source_sir_db=sir,
        per_source_sdr_db=sdr,
        stage_times_ms=dict(timer.times_ms) if config.record_timing else {},
        config_snapshot=config.to_dict(),
        num_sources=N,
    )
    return SeparationResult(estimates=estimates, demixing=demixing, composite=composite,
                            whiteners=whiteners, spectrogram=spec, stage_times_ms=dict(timer.times_ms),
                            report=report, stalled_bins=stalled, silent_bins=silent)


def _score(estimates: MultichannelWave, references: MultichannelWave, filter_len: int):
    if estimates.num_samples != references.num_samples:
        raise InvalidArgumentError(
            f"estimates have {estimates.num_samples} samples, references {references.num_samples}")
    if estimates.num_channels != references.num_channels:
        raise InvalidArgumentError(
            f"{estimates.num_channels} estimates for {references.num_channels} references")
    sir, sdr, _ = evaluate_separation(estimates.samples, references.samples, filter_len)
    return sir, sdr


def evaluate(estimates: MultichannelWave, references: MultichannelWave, config: PipelineConfig) -> SeparationReport:
    timer = StageTimer()
    sir, sdr = timer.run('evaluation', _score, estimates, references, config.filter_len_eval)
    return SeparationReport(per_source_sir_db=sir, per_source_sdr_db=sdr,
                            stage_times_ms=dict(timer.times_ms) if config.record_timing else {},
                            config_snapshot=config.to_dict(), num_sources=references.num_channels)


# Sweep axes of the benchmark and the PipelineConfig field each one drives
BENCH_AXES = {
    'perm_method': 'perm_method',
    'window': 'window_kind',
    'overlap': 'overlap',
    'fft_size': 'fft_size',
    'signal_length': None,
}
BENCH_HEADER = ['axis', 'value', 'source', 'sir_db', 'sdr_db',
                'cpu_stft_ms', 'cpu_ica_ms', 'cpu_perm_ms', 'cpu_total_ms']


@dataclass(frozen=True)
class Scenario:
    """Synthetic convolutive test case: speech-like sources through random room responses"""
    num_sources: int = 2
    seconds: float = 9.0
    sample_rate_hz: int = 16000
    taps: int = 256
    t60_ms: float = 160.0
    seed: int = 0

    def sources(self, seconds: Optional[float] = None) -> MultichannelWave:
        K = int(round((seconds or self.seconds) * self.sample_rate_hz))
        samples = np.stack([synth_speech_like(self.seed * 1000 + i, K, self.sample_rate_hz)
                            for i in range(self.num_sources)])
        return MultichannelWave(samples=samples, sample_rate_hz=self.sample_rate_hz)

    def mixture(self, sources: MultichannelWave) -> MultichannelWave:
        system = gen_rir(self.seed, self.num_sources, self.num_sources, self.taps, self.t60_ms, self.sample_rate_hz)
        return convolve_mix(sources, system)


def parse_axis_value(axis: str, raw: str):
    if axis not in BENCH_AXES:
        raise InvalidArgumentError(f"unknown sweep axis {axis!r}; expected one of {tuple(BENCH_AXES)}")
    if axis in ('perm_method', 'window'):
        return raw
    if axis == 'fft_size':
        return int(raw)
    return float(raw)


def bench(axis: str, values: Sequence[Any], scenario: Scenario, base: PipelineConfig,
          threads: int = 1) -> List[List[Any]]:
    """One row per sweep point: axis, value, per-source SIR/SDR (';'-joined) and stage CPU times"""
    if axis not in BENCH_AXES:
        raise InvalidArgumentError(f"unknown sweep axis {axis!r}; expected one of {tuple(BENCH_AXES)}")
    rows: List[List[Any]] = []
    fixed_sources = scenario.sources()
    fixed_mixture = scenario.mixture(fixed_sources)
    for value in values:
        if axis == 'signal_length':
            sources = scenario.sources(seconds=float(value))
            mixture = scenario.mixture(sources)
            config = base
        else:
            sources, mixture = fixed_sources, fixed_mixture
            config = base.with_overrides({BENCH_AXES[axis]: value})
        result = separate(mixture, config, threads=threads, references=sources)
        times = result.stage_times_ms
        log_stage('bench', f"{axis}={value}: {result.spectrogram.num_frames} frames, "
                           f"SIR {np.round(result.report.per_source_sir_db, 2).tolist()} dB")
        rows.append([
            axis, value,
            ';'.join(str(n) for n in range(scenario.num_sources)),
            ';'.join(f"{v:.3f}" for v in result.report.per_source_sir_db),
            ';'.join(f"{v:.3f}" for v in result.report.per_source_sdr_db),
            f"{times.get('stft', 0.0):.3f}",
            f"{times.get('whiten', 0.0) + times.get('ica', 0.0):.3f}",
            f"{times.get('scaling', 0.0) + times.get('permutation', 0.0):.3f}",
            f"{sum(v for k, v in times.items() if k != 'evaluation'):.3f}",
        ])
    return rows
