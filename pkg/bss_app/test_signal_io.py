import json

import numpy as np
import pytest
import soundfile as sf

from .errors import InvalidArgumentError, SignalIOError, UnsupportedFormatError, WavParseError
from .signal_io import (MultichannelWave, SeparationReport, demixing_from_bytes, demixing_to_bytes,
                        parse_report, read_demixing, read_wav, report_to_dict, report_to_json,
                        write_demixing, write_report, write_wav)


@pytest.fixture
def wave():
    rng = np.random.default_rng(7)
    return MultichannelWave(samples=rng.uniform(-0.9, 0.9, size=(2, 4000)), sample_rate_hz=16000)


def test_float32_round_trip(tmp_path, wave):
    path = str(tmp_path / 'x.wav')
    write_wav(path, wave, 'float32')
    back = read_wav(path)
    assert back.sample_rate_hz == 16000
    assert back.samples.shape == (2, 4000)
    np.testing.assert_allclose(back.samples, wave.samples.astype(np.float32), atol=0, rtol=0)


def test_float32_files_are_byte_identical(tmp_path, wave):
    first, second = tmp_path / 'a.wav', tmp_path / 'b.wav'
    write_wav(str(first), wave, 'float32')
    write_wav(str(second), wave, 'float32')
    payload = first.read_bytes()
    assert b'PEAK' not in payload
    assert payload == second.read_bytes()
    assert sf.info(str(first)).subtype == 'FLOAT'


def test_pcm16_round_trip_within_quantization(tmp_path):
    rng = np.random.default_rng(3)
    w = MultichannelWave(samples=rng.uniform(-1.0, 1.0, size=(3, 5000)), sample_rate_hz=8000)
    path = str(tmp_path / 'x16.wav')
    write_wav(path, w, 'pcm16')
    back = read_wav(path)
    assert np.max(np.abs(back.samples - w.samples)) <= 2.0 ** -15


def test_pcm24_is_readable(tmp_path, wave):
    path = str(tmp_path / 'x24.wav')
    sf.write(path, wave.samples.T, 16000, subtype='PCM_24', format='WAV')
    back = read_wav(path)
    assert np.max(np.abs(back.samples - wave.samples)) <= 2.0 ** -23


def test_one_dimensional_samples_become_one_channel():
    w = MultichannelWave(samples=np.zeros(10), sample_rate_hz=8000)
    assert w.num_channels == 1
    assert w.num_samples == 10


def test_non_finite_samples_rejected():
    with pytest.raises(InvalidArgumentError):
        MultichannelWave(samples=np.array([[0.0, np.nan]]), sample_rate_hz=8000)


def test_not_riff_is_unsupported(tmp_path):
    path = tmp_path / 'junk.wav'
    path.write_bytes(b'ID3\x03' + b'\x00' * 64)
    with pytest.raises(UnsupportedFormatError):
        read_wav(str(path))


def test_unsupported_encoding(tmp_path, wave):
    path = str(tmp_path / 'x32.wav')
    sf.write(path, wave.samples.T, 16000, subtype='PCM_32', format='WAV')
    with pytest.raises(UnsupportedFormatError):
        read_wav(path)


def test_truncated_file_is_parse_error(tmp_path, wave):
    path = tmp_path / 'cut.wav'
    write_wav(str(path), wave, 'pcm16')
    payload = path.read_bytes()
    path.write_bytes(payload[:len(payload) - 100])
    with pytest.raises(WavParseError):
        read_wav(str(path))


def test_header_only_is_parse_error(tmp_path):
    path = tmp_path / 'short.wav'
    path.write_bytes(b'RIFF')
    with pytest.raises(WavParseError):
        read_wav(str(path))


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(SignalIOError):
        read_wav(str(tmp_path / 'nope.wav'))


def test_write_into_missing_directory(tmp_path, wave):
    with pytest.raises(SignalIOError):
        write_wav(str(tmp_path / 'missing' / 'x.wav'), wave)


def test_write_rejects_unknown_encoding(tmp_path, wave):
    with pytest.raises(InvalidArgumentError):
        write_wav(str(tmp_path / 'x.wav'), wave, 'pcm24')


def test_report_json_schema():
    report = SeparationReport(per_source_sir_db=[12.5, 9.0], per_source_sdr_db=[8.0, 6.5],
                              stage_times_ms={'stft': 3.0, 'ica': 40.0}, config_snapshot={'seed': 0, 'fft_size': 1024})
    data = json.loads(report_to_json(report))
    assert list(data) == ['sources', 'sir_db', 'sdr_db', 'stages', 'config']
    assert data['sources'] == 2
    assert data['sir_db'] == [12.5, 9.0]
    assert list(data['stages']) == ['ica', 'stft']
    assert list(data['config']) == ['fft_size', 'seed']


def test_report_parse_back(tmp_path):
    report = SeparationReport(per_source_sir_db=[1.0], per_source_sdr_db=[0.5],
                              stage_times_ms={'stft': 1.25}, config_snapshot={'seed': 4})
    path = tmp_path / 'report.json'
    write_report(str(path), report)
    parsed = parse_report(path.read_text())
    assert report_to_dict(parsed) == report_to_dict(report)


def test_report_without_references_has_empty_metrics():
    report = SeparationReport(per_source_sir_db=[], per_source_sdr_db=[], num_sources=3)
    data = report_to_dict(report)
    assert data['sources'] == 3
    assert data['sir_db'] == []


def test_report_rejects_negative_times_and_mismatched_vectors():
    with pytest.raises(InvalidArgumentError):
        SeparationReport(per_source_sir_db=[1.0], per_source_sdr_db=[1.0], stage_times_ms={'ica': -1.0})
    with pytest.raises(InvalidArgumentError):
        SeparationReport(per_source_sir_db=[1.0, 2.0], per_source_sdr_db=[1.0])


def test_parse_report_rejects_other_json():
    with pytest.raises(InvalidArgumentError):
        parse_report('{"hello": 1}')


def test_demixing_sidecar_exact_reload(tmp_path):
    rng = np.random.default_rng(1)
    W = rng.standard_normal((33, 2, 3)) + 1j * rng.standard_normal((33, 2, 3))
    path = str(tmp_path / 'demixing.bin')
    write_demixing(path, W, 64)
    back, T = read_demixing(path)
    assert T == 64
    assert np.array_equal(back, W)


def test_demixing_sidecar_header():
    W = np.zeros((5, 2, 2), dtype=complex)
    payload = demixing_to_bytes(W, 8)
    assert payload[:8] == b'FDBSSDMX'
    assert len(payload) == 20 + 5 * 4 * 16


def test_demixing_sidecar_rejects_bad_payloads():
    W = np.zeros((5, 2, 2), dtype=complex)
    payload = demixing_to_bytes(W, 8)
    with pytest.raises(UnsupportedFormatError):
        demixing_from_bytes(b'NOTMAGIC' + payload[8:])
    with pytest.raises(WavParseError):
        demixing_from_bytes(payload[:-16])
    with pytest.raises(InvalidArgumentError):
        demixing_to_bytes(W, 16)
