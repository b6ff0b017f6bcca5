from .report_generator import generate_report_html, generate_report_pdf
from .signal_io import SeparationReport


def _report(with_metrics=True):
    return SeparationReport(per_source_sir_db=[14.25, 11.5] if with_metrics else [],
                            per_source_sdr_db=[9.75, 7.0] if with_metrics else [],
                            stage_times_ms={'ica': 120.0, 'stft': 4.5},
                            config_snapshot={'fft_size': 1024, 'perm_method': 'method5'},
                            num_sources=2)


def test_html_lists_metrics_stages_and_config():
    html = generate_report_html(_report())
    assert '14.25' in html and '7.00' in html
    assert 'ica: 120.0 ms' in html
    assert 'perm_method = method5' in html


def test_html_without_references():
    assert 'not computed' in generate_report_html(_report(with_metrics=False))


def test_pdf_is_generated():
    buf = generate_report_pdf(_report())
    data = buf.getvalue()
    assert data.startswith(b'%PDF')
    assert len(data) > 500
    assert generate_report_pdf(_report(with_metrics=False)).getvalue().startswith(b'%PDF')
