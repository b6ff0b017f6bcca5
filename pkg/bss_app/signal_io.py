"""
Audio and report I/O: multichannel WAV files, run reports (JSON) and the
binary sidecar holding per-bin demixing matrices.
"""
import json
import logging
import struct
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Tuple

import numpy as np
import soundfile as sf
from scipy.io import wavfile

from .errors import InvalidArgumentError, SignalIOError, UnsupportedFormatError, WavParseError

io_logger = logging.getLogger('bss_io')

SUPPORTED_SUBTYPES = {'PCM_16': 'pcm16', 'PCM_24': 'pcm24', 'FLOAT': 'float32'}
_WRITE_SUBTYPES = {'pcm16': 'PCM_16', 'float32': 'FLOAT'}

DEMIXING_MAGIC = b'FDBSSDMX'
_DEMIXING_HEADER = struct.Struct('<8sIII')


def log_io_operation(operation: str, path: str, details: str = "") -> None:
    """Log file operations for debugging"""
    timestamp = datetime.now().strftime('%Y-%m-%d %H:%M:%S')
    io_logger.info(f"[{timestamp}] {operation} {path}: {details}")


@dataclass(frozen=True)
class MultichannelWave:
    samples: np.ndarray         # (channels, samples), float64
    sample_rate_hz: int

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[np.newaxis, :]
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise InvalidArgumentError(f"wave must hold at least one channel of at least one sample, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InvalidArgumentError("wave contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise InvalidArgumentError(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, 'samples', samples)
        object.__setattr__(self, 'sample_rate_hz', int(self.sample_rate_hz))

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    def channel(self, index: int) -> 'MultichannelWave':
        return MultichannelWave(self.samples[index:index + 1], self.sample_rate_hz)


@dataclass
class SeparationReport:
    per_source_sir_db: List[float]
    per_source_sdr_db: List[float]
    stage_times_ms: Dict[str, float] = field(default_factory=dict)
    config_snapshot: Dict[str, Any] = field(default_factory=dict)
    num_sources: int = 0

    def __post_init__(self) -> None:
        if len(self.per_source_sir_db) != len(self.per_source_sdr_db):
            raise InvalidArgumentError("SIR and SDR vectors differ in length")
        if not self.num_sources:
            self.num_sources = len(self.per_source_sir_db)
        if self.per_source_sir_db and len(self.per_source_sir_db) != self.num_sources:
            raise InvalidArgumentError(
                f"report holds {len(self.per_source_sir_db)} metric entries for {self.num_sources} sources")
        if any(v < 0 for v in self.stage_times_ms.values()):
            raise InvalidArgumentError("stage times must be non-negative")


def _check_riff_layout(path: str) -> None:
    """Walk the RIFF chunks and reject files whose data chunk runs past the end of the file"""
    try:
        with open(path, 'rb') as fh:
            payload = fh.read()
    except OSError as exc:
        raise SignalIOError(f"cannot read {path}: {exc}") from exc
    if len(payload) < 12:
        raise WavParseError(f"{path} is truncated: {len(payload)} bytes, no RIFF header")
    if payload[:4] != b'RIFF' or payload[8:12] != b'WAVE':
        raise UnsupportedFormatError(f"{path} is not a RIFF/WAVE file")
    offset = 12
    while offset + 8 <= len(payload):
        chunk_id, size = struct.unpack_from('<4sI', payload, offset)
        offset += 8
        if chunk_id == b'data':
            if offset + size > len(payload):
                raise WavParseError(
                    f"{path} is truncated: data chunk announces {size} bytes, {len(payload) - offset} present")
            return
        offset += size + (size & 1)
    raise WavParseError(f"{path} has no data chunk")


def read_wav(path: str) -> MultichannelWave:
    _check_riff_layout(path)
    try:
        info = sf.info(path)
    except RuntimeError as exc:
        raise WavParseError(f"cannot parse {path}: {exc}") from exc
    if info.subtype not in SUPPORTED_SUBTYPES:
        raise UnsupportedFormatError(f"{path} uses {info.subtype} encoding; supported: PCM_16, PCM_24, FLOAT")
    try:
        # soundfile scales integer PCM by 2**(bits-1)
        data, rate = sf.read(path, dtype='float64', always_2d=True)
    except RuntimeError as exc:
        raise WavParseError(f"cannot parse {path}: {exc}") from exc
    log_io_operation("READ", path, f"{info.channels} ch, {rate} Hz, {info.frames} frames, {info.subtype}")
    return MultichannelWave(samples=data.T, sample_rate_hz=rate)


def write_wav(path: str, wave: MultichannelWave, encoding: str = 'float32') -> None:
    if encoding not in _WRITE_SUBTYPES:
        raise InvalidArgumentError(f"unsupported output encoding {encoding!r}; expected pcm16 or float32")
    if encoding == 'pcm16':
        # Quantize with the same 2**15 scale read_wav divides by
        scaled = np.round(np.clip(wave.samples, -1.0, 1.0) * 32768.0)
        samples = np.clip(scaled, -32768, 32767).astype(np.int16)
    else:
        samples = wave.samples.astype(np.float32)
    try:
        if encoding == 'float32':
            # No PEAK chunk: libsndfile's carries the write time
            wavfile.write(path, wave.sample_rate_hz, samples.T)
        else:
            sf.write(path, samples.T, wave.sample_rate_hz, subtype=_WRITE_SUBTYPES[encoding], format='WAV')
    except (OSError, RuntimeError, ValueError) as exc:
        raise SignalIOError(f"cannot write {path}: {exc}") from exc
    log_io_operation("WRITE", path, f"{wave.num_channels} ch, {wave.sample_rate_hz} Hz, {encoding}")


def report_to_dict(report: SeparationReport) -> Dict[str, Any]:
    return {
        "sources": report.num_sources,
        "sir_db": [float(v) for v in report.per_source_sir_db],
        "sdr_db": [float(v) for v in report.per_source_sdr_db],
        "stages": {name: float(ms) for name, ms in sorted(report.stage_times_ms.items())},
        "config": dict(sorted(report.config_snapshot.items())),
    }


def report_to_json(report: SeparationReport) -> str:
    return json.dumps(report_to_dict(report), indent=2) + "\n"


def parse_report(text: str) -> SeparationReport:
    try:
        data = json.loads(text)
        return SeparationReport(
            per_source_sir_db=list(data["sir_db"]),
            per_source_sdr_db=list(data["sdr_db"]),
            stage_times_ms=dict(data["stages"]),
            config_snapshot=dict(data["config"]),
            num_sources=int(data["sources"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"not a separation report: {exc}") from exc


def write_report(path: str, report: SeparationReport) -> None:
    try:
        with open(path, 'w', encoding='utf-8') as fh:
            fh.write(report_to_json(report))
    except OSError as exc:
        raise SignalIOError(f"cannot write report {path}: {exc}") from exc
    log_io_operation("WRITE", path, f"report for {report.num_sources} sources")


def demixing_to_bytes(W: np.ndarray, fft_size: int) -> bytes:
    """Header (magic, T, N, M) then per-bin row-major complex128, little-endian"""
    W = np.asarray(W, dtype=np.complex128)
    if W.ndim != 3 or W.shape[0] != fft_size // 2 + 1:
        raise InvalidArgumentError(f"expected {fft_size // 2 + 1} per-bin matrices, got shape {W.shape}")
    _, n_out, n_in = W.shape
    header = _DEMIXING_HEADER.pack(DEMIXING_MAGIC, fft_size, n_out, n_in)
    return header + np.ascontiguousarray(W).astype('<c16').tobytes()


def demixing_from_bytes(payload: bytes) -> Tuple[np.ndarray, int]:
    if len(payload) < _DEMIXING_HEADER.size:
        raise WavParseError("demixing sidecar is shorter than its header")
    magic, fft_size, n_out, n_in = _DEMIXING_HEADER.unpack_from(payload)
    if magic != DEMIXING_MAGIC:
        raise UnsupportedFormatError("not a demixing sidecar (bad magic)")
    bins = fft_size // 2 + 1
    body = payload[_DEMIXING_HEADER.size:]
    if len(body) != bins * n_out * n_in * 16:
        raise WavParseError(f"demixing sidecar body has {len(body)} bytes, expected {bins * n_out * n_in * 16}")
    W = np.frombuffer(body, dtype='<c16').reshape(bins, n_out, n_in).astype(np.complex128)
    return W, fft_size


def write_demixing(path: str, W: np.ndarray, fft_size: int) -> None:
    try:
        with open(path, 'wb') as fh:
            fh.write(demixing_to_bytes(W, fft_size))
    except OSError as exc:
        raise SignalIOError(f"cannot write demixing sidecar {path}: {exc}") from exc
    log_io_operation("WRITE", path, f"{W.shape[0]} bins of {W.shape[1]}x{W.shape[2]} demixing matrices")


def read_demixing(path: str) -> Tuple[np.ndarray, int]:
    try:
        with open(path, 'rb') as fh:
            payload = fh.read()
    except OSError as exc:
        raise SignalIOError(f"cannot read demixing sidecar {path}: {exc}") from exc
    return demixing_from_bytes(payload)
