import logging
import os
import tempfile
import zipfile
from datetime import datetime
from io import BytesIO
from typing import Dict, Optional

import numpy as np
from flask import Flask, jsonify, render_template, request, send_file
from werkzeug.exceptions import RequestEntityTooLarge

from .align import demixing_filters
from .cli import cli
from .config import DEFAULT_THREADS, ICA_INITS, MAX_UPLOAD_MB, PERM_METHODS, PipelineConfig, load_config
from .errors import BssError, InvalidArgumentError, StageError
from .pipeline import evaluate, separate
from .report_generator import generate_report_html, generate_report_pdf
from .signal_io import MultichannelWave, demixing_to_bytes, read_wav, report_to_dict, report_to_json, write_wav
from .tf import WINDOW_KINDS

logging.basicConfig(level=logging.INFO)
web_logger = logging.getLogger('bss_web')

# Form fields forwarded to PipelineConfig
CONFIG_FIELDS = ('fft_size', 'window_kind', 'overlap', 'reg_m', 'max_iter', 'conv_tol',
                 'perm_method', 'profile_tf', 'seed', 'filter_len_eval', 'ica_init', 'record_timing')


def log_request(operation: str, details: str = "") -> None:
    timestamp = datetime.now().strftime('%Y-%m-%d %H:%M:%S')
    web_logger.info(f"[{timestamp}] {operation}: {details}")


def _form_overrides() -> Dict[str, str]:
    return {k: v for k, v in request.form.items() if k in CONFIG_FIELDS and v != ''}


def _read_upload(field: str, workdir: str, required: bool = True) -> Optional[MultichannelWave]:
    upload = request.files.get(field)
    if upload is None or not upload.filename:
        if required:
            raise InvalidArgumentError(f"missing upload field {field!r}")
        return None
    path = os.path.join(workdir, f'{field}.wav')
    upload.save(path)
    return read_wav(path)


def create_app() -> Flask:
    template_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'templates')
    app = Flask(__name__, template_folder=template_dir)
    app.secret_key = os.environ.get('SECRET_KEY', 'change-this-secret')
    app.config['MAX_CONTENT_LENGTH'] = MAX_UPLOAD_MB * 1024 * 1024
    app.config['BSS_THREADS'] = DEFAULT_THREADS
    app.cli.add_command(cli, name='bss')

    @app.errorhandler(BssError)
    def handle_bss_error(error: BssError):
        payload = {'error': type(error).__name__, 'message': str(error)}
        if isinstance(error, StageError):
            payload['stage'] = error.stage
            if error.bin_index is not None:
                payload['bin'] = error.bin_index
        log_request('rejected', f"{payload['error']}: {payload['message']}")
        return jsonify(payload), 400

    @app.errorhandler(RequestEntityTooLarge)
    def handle_too_large(error):
        return jsonify({'error': 'RequestEntityTooLarge',
                        'message': f'uploads are limited to {MAX_UPLOAD_MB} MB'}), 413

    register_routes(app)
    return app


def register_routes(app: Flask) -> None:
    @app.route('/')
    def index():
        return render_template('index.html', defaults=PipelineConfig().to_dict(),
                               methods=PERM_METHODS, windows=WINDOW_KINDS, inits=ICA_INITS)

    @app.route('/health')
    def health():
        return jsonify({'status': 'ok'})

    @app.route('/separate', methods=['POST'])
    def separate_upload():
        config = load_config(overrides=_form_overrides())
        with tempfile.TemporaryDirectory() as workdir:
            mixture = _read_upload('mixture', workdir)
            references = _read_upload('reference', workdir, required=False)
            log_request('separate', f"{mixture.num_channels}x{mixture.num_samples} upload, {config.perm_method}")
            result = separate(mixture, config, threads=app.config['BSS_THREADS'], references=references)

            zip_buffer = BytesIO()
            with zipfile.ZipFile(zip_buffer, 'w') as zip_file:
                for n in range(result.estimates.num_channels):
                    path = os.path.join(workdir, f'source_{n}.wav')
                    write_wav(path, result.estimates.channel(n), 'float32')
                    zip_file.write(path, os.path.basename(path))
                zip_file.writestr('report.json', report_to_json(result.report))
                zip_file.writestr('report.pdf', generate_report_pdf(result.report).getvalue())
                zip_file.writestr('report.html', generate_report_html(result.report))
                zip_file.writestr('demixing.bin', demixing_to_bytes(result.composite, config.fft_size))
                filters = BytesIO()
                np.save(filters, demixing_filters(result.composite))
                zip_file.writestr('filters.npy', filters.getvalue())
        zip_buffer.seek(0)
        return send_file(
            zip_buffer,
            mimetype='application/zip',
            as_attachment=True,
            download_name=f"separation_{datetime.now().strftime('%Y%m%d_%H%M%S')}.zip",
        )

    @app.route('/evaluate', methods=['POST'])
    def evaluate_upload():
        config = load_config(overrides=_form_overrides())
        with tempfile.TemporaryDirectory() as workdir:
            estimates = _read_upload('estimate', workdir)
            references = _read_upload('reference', workdir)
        report = evaluate(estimates, references, config)
        log_request('evaluate', f"{report.num_sources} sources")
        return jsonify(report_to_dict(report))
