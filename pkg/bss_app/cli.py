"""
Command line interface: mix, separate, evaluate and bench.
"""
import csv
import functools
import json
import logging
import os
from typing import Any, Dict, Optional

import click
import numpy as np

from .align import METHODS, demixing_filters
from .config import DEFAULT_OUT_DIR, DEFAULT_THREADS, PipelineConfig, load_config
from .errors import BssError
from .mixsim import convolve_mix, gen_rir, identity_system, stack_sources, synth_speech_like
from .pipeline import BENCH_AXES, BENCH_HEADER, Scenario, bench, evaluate, log_stage, parse_axis_value, separate
from .report_generator import generate_report_pdf
from .signal_io import (MultichannelWave, read_wav, report_to_json, write_demixing, write_report,
                        write_wav)
from .tf import WINDOW_KINDS

DEFAULT_SWEEPS = {
    'perm_method': ','.join(METHODS),
    'window': ','.join(WINDOW_KINDS),
    'overlap': '0.5,0.65,0.75',
    'fft_size': '256,512,1024,2048',
    'signal_length': '1,3,5,9',
}


def common_options(fn):
    @click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
                  help='JSON file with PipelineConfig keys.')
    @click.option('--seed', type=int, default=None, help='Random seed (overrides the config file).')
    @click.option('--threads', type=click.IntRange(min=1), default=DEFAULT_THREADS, show_default=True,
                  help='Worker threads for per-bin stages.')
    @click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=DEFAULT_OUT_DIR,
                  show_default=True, help='Output directory.')
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        return fn(*args, **kwargs)
    return wrapper


def handle_errors(fn):
    """Report toolkit errors as a clean CLI failure instead of a traceback"""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except BssError as e:
            raise click.ClickException(str(e)) from e
    return wrapper


def _resolve_config(config_path: Optional[str], overrides: Dict[str, Any]) -> PipelineConfig:
    return load_config(config_path, overrides)


def _prepare_out(out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


@click.group()
@click.option('--log-level', default='INFO', show_default=True,
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False))
def cli(log_level: str) -> None:
    """Frequency-domain blind source separation of convolutive mixtures."""
    logging.basicConfig(level=getattr(logging, log_level.upper()))


@cli.command()
@common_options
@click.option('--source', 'source_paths', multiple=True, type=click.Path(exists=True, dir_okay=False),
              help='Source WAV file (repeatable); channels are stacked in order.')
@click.option('--synthetic-seconds', type=float, default=None,
              help='Generate speech-like sources of this duration instead of reading files.')
@click.option('--num-sources', type=click.IntRange(min=1), default=2, show_default=True)
@click.option('--fs', type=click.IntRange(min=1), default=16000, show_default=True,
              help='Sample rate of synthetic sources.')
@click.option('--mics', type=click.IntRange(min=1), default=None, help='Number of sensors (default: one per source).')
@click.option('--taps', type=click.IntRange(min=1), default=256, show_default=True, help='Room response length L.')
@click.option('--t60-ms', type=float, default=160.0, show_default=True, help='Reverberation time in ms.')
@click.option('--identity', is_flag=True, help='Use the identity system (x = s).')
@handle_errors
def mix(config_path, seed, threads, out_dir, source_paths, synthetic_seconds, num_sources, fs,
        mics, taps, t60_ms, identity):
    """Generate a synthetic convolutive mixture."""
    if not source_paths and synthetic_seconds is None:
        raise click.UsageError('give --source files or --synthetic-seconds')
    if source_paths and synthetic_seconds is not None:
        raise click.UsageError('--source and --synthetic-seconds are mutually exclusive')
    seed = seed if seed is not None else _resolve_config(config_path, {}).seed
    out_dir = _prepare_out(out_dir)

    if source_paths:
        sources = stack_sources([read_wav(p) for p in source_paths])
    else:
        K = int(round(synthetic_seconds * fs))
        sources = MultichannelWave(
            samples=np.stack([synth_speech_like(seed * 1000 + i, K, fs) for i in range(num_sources)]),
            sample_rate_hz=fs)
    N = sources.num_channels
    M = mics or N

    if identity:
        if M != N:
            raise click.BadParameter('the identity system needs as many sensors as sources', param_hint='--mics')
        system, taps = identity_system(N, sources.sample_rate_hz), 1
    else:
        system = gen_rir(seed, M, N, taps, t60_ms, sources.sample_rate_hz)
    mixture = convolve_mix(sources, system)

    taps_path = os.path.join(out_dir, 'taps.npy')
    np.save(taps_path, system.taps)
    write_wav(os.path.join(out_dir, 'sources.wav'), sources, 'float32')
    write_wav(os.path.join(out_dir, 'mixture.wav'), mixture, 'float32')
    sidecar = {
        'seed': seed,
        'taps': taps,
        't60_ms': t60_ms,
        'identity': identity,
        'mics': M,
        'sources': N,
        'sample_rate_hz': sources.sample_rate_hz,
        'taps_path': taps_path,
    }
    with open(os.path.join(out_dir, 'mixture.json'), 'w', encoding='utf-8') as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    click.echo(f"mixture of {N} sources on {M} sensors written to {out_dir}")


@cli.command(name='separate')
@common_options
@click.argument('mixture_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--fft-size', type=int, default=None)
@click.option('--window', 'window_kind', type=click.Choice(WINDOW_KINDS), default=None)
@click.option('--overlap', type=float, default=None)
@click.option('--reg-m', type=float, default=None, help='Tikhonov constant m (c = m·tr R).')
@click.option('--max-iter', type=int, default=None)
@click.option('--conv-tol', type=float, default=None)
@click.option('--method', 'perm_method', type=click.Choice(list(METHODS)), default=None)
@click.option('--profile-tf', type=str, default=None, help="Profile length T_f or 'all'.")
@click.option('--ica-init', type=click.Choice(['canonical', 'random']), default=None)
@click.option('--filter-len-eval', type=int, default=None)
@click.option('--reference', 'reference_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Multichannel WAV of the true sources, for SIR/SDR.')
@click.option('--no-timing', is_flag=True, help='Leave stage times out of the report.')
@click.option('--pdf', is_flag=True, help='Also write report.pdf.')
@handle_errors
def separate_cmd(config_path, seed, threads, out_dir, mixture_path, reference_path, no_timing, pdf, **flags):
    """Separate a multichannel mixture into its sources."""
    overrides = dict(flags, seed=seed)
    if no_timing:
        overrides['record_timing'] = False
    config = _resolve_config(config_path, overrides)
    out_dir = _prepare_out(out_dir)

    mixture = read_wav(mixture_path)
    references = read_wav(reference_path) if reference_path else None
    result = separate(mixture, config, threads=threads, references=references)

    for n in range(result.estimates.num_channels):
        write_wav(os.path.join(out_dir, f'source_{n}.wav'), result.estimates.channel(n), 'float32')
    write_demixing(os.path.join(out_dir, 'demixing.bin'), result.composite, config.fft_size)
    # Causal FIR demixing filters, (sources, mics, taps)
    np.save(os.path.join(out_dir, 'filters.npy'), demixing_filters(result.composite))
    write_report(os.path.join(out_dir, 'report.json'), result.report)
    if pdf:
        with open(os.path.join(out_dir, 'report.pdf'), 'wb') as fh:
            fh.write(generate_report_pdf(result.report).getvalue())
    click.echo(report_to_json(result.report), nl=False)


@cli.command(name='evaluate')
@common_options
@click.option('--estimate', 'estimate_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='Multichannel WAV of estimated sources.')
@click.option('--reference', 'reference_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='Multichannel WAV of the true sources.')
@click.option('--filter-len-eval', type=int, default=None)
@click.option('--no-timing', is_flag=True)
@handle_errors
def evaluate_cmd(config_path, seed, threads, out_dir, estimate_path, reference_path, filter_len_eval, no_timing):
    """Score estimated sources against references (SIR/SDR)."""
    overrides = {'seed': seed, 'filter_len_eval': filter_len_eval}
    if no_timing:
        overrides['record_timing'] = False
    config = _resolve_config(config_path, overrides)
    out_dir = _prepare_out(out_dir)
    report = evaluate(read_wav(estimate_path), read_wav(reference_path), config)
    write_report(os.path.join(out_dir, 'report.json'), report)
    click.echo(report_to_json(report), nl=False)


@cli.command(name='bench')
@common_options
@click.option('--axis', required=True, type=click.Choice(list(BENCH_AXES)))
@click.option('--values', 'raw_values', default=None, help='Comma-separated sweep points.')
@click.option('--sources', 'num_sources', type=click.IntRange(min=1), default=2, show_default=True)
@click.option('--seconds', type=float, default=9.0, show_default=True)
@click.option('--taps', type=click.IntRange(min=1), default=256, show_default=True)
@click.option('--t60-ms', type=float, default=160.0, show_default=True)
@click.option('--fs', type=click.IntRange(min=1), default=16000, show_default=True)
@handle_errors
def bench_cmd(config_path, seed, threads, out_dir, axis, raw_values, num_sources, seconds, taps, t60_ms, fs):
    """Sweep one parameter over a synthetic scenario and write CSV."""
    config = _resolve_config(config_path, {'seed': seed})
    raw_values = raw_values or DEFAULT_SWEEPS[axis]
    values = [parse_axis_value(axis, v.strip()) for v in raw_values.split(',') if v.strip()]
    scenario = Scenario(num_sources=num_sources, seconds=seconds, sample_rate_hz=fs,
                        taps=taps, t60_ms=t60_ms, seed=config.seed)
    log_stage('bench', f"sweeping {axis} over {values}")
    rows = bench(axis, values, scenario, config, threads=threads)

    out_dir = _prepare_out(out_dir)
    path = os.path.join(out_dir, f'bench_{axis}.csv')
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCH_HEADER)
        writer.writerows(rows)
    with open(path, 'r', encoding='utf-8') as fh:
        click.echo(fh.read(), nl=False)


def main() -> None:
    cli()
