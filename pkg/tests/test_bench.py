import importlib.util
import json
import logging
import os

import numpy as np
import pytest
import yaml

from bench.report import FIELDNAMES, emit_report, write_report, write_trace
from bench.runner import BenchConfig, BenchRow, run_bench
from core.problems import fts_problem, generate_fts
from utils.errors import ConfigurationError, ReportError
from utils.logger import set_default_level, setup_logger

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
TABLE_EPS = (0.5, 0.25, 0.125, 0.0625, 0.03125)


def _load_main():
    spec = importlib.util.spec_from_file_location('bench_main', os.path.join(ROOT, 'main.py'))
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def _write_config(tmp_path, **bench):
    path = tmp_path / 'config.yaml'
    settings = {'n': 5, 'r': 4, 'm': 3, 'eps': ['1/2'], 'out': str(tmp_path / 'report.csv')}
    settings.update(bench)
    with open(path, 'w') as f:
        yaml.safe_dump({'bench': settings, 'logging': {'level': 'WARNING', 'log_dir': str(tmp_path / 'logs')}}, f)
    return str(path)


# -- Runner ------------------------------------------------------------------

def test_alg2_iteration_counts_follow_the_bound():
    rows = run_bench(BenchConfig(algorithm='alg2', eps=TABLE_EPS, n=50, r=20, m=20, seed=0))
    assert [row.iterations for row in rows] == [16, 64, 256, 1024, 4096]
    assert [row.inv_eps for row in rows] == [2.0, 4.0, 8.0, 16.0, 32.0]
    for row in rows:
        assert row.error is None
        assert row.productive + row.nonproductive == row.iterations
        assert row.productive >= 1


@pytest.mark.slow
def test_constraint_guarantees_of_both_versions():
    common = dict(eps=TABLE_EPS, n=50, r=20, m=20, seed=0)
    M_g = fts_problem(generate_fts(50, 20, 20, seed=0)).M_g
    v1 = run_bench(BenchConfig(algorithm='alg2', **common))
    v2 = run_bench(BenchConfig(algorithm='alg2mod', **common))
    for eps, a, b in zip(TABLE_EPS, v1, v2):
        assert a.g_out <= M_g * eps + 1e-9
        assert b.g_out <= eps + 1e-9
        assert b.g_out < a.g_out


def test_empty_epsilon_list_gives_no_rows():
    assert run_bench(BenchConfig(eps=(), n=5, r=4, m=3)) == []


def test_unsupported_pair_becomes_error_row():
    rows = run_bench(BenchConfig(algorithm='alg2', eps=(0.5, 0.25), n=5, r=4, m=3, geometry='entropy'))
    assert len(rows) == 2
    assert all(row.error and row.error.startswith('ConfigurationError') for row in rows)
    assert rows[1].inv_eps == pytest.approx(4.0)


@pytest.mark.parametrize('algorithm', ['alg1', 'alg2mod', 'multi-v1', 'multi-v2'])
def test_every_deterministic_algorithm_fills_a_row(algorithm):
    rows = run_bench(BenchConfig(algorithm=algorithm, eps=(0.5,), n=6, r=5, m=4, seed=1))
    assert rows[0].error is None
    assert rows[0].productive + rows[0].nonproductive == rows[0].iterations


def test_stochastic_row_sums_trials():
    rows = run_bench(BenchConfig(algorithm='stochastic', eps=(0.5,), n=4, r=3, m=2, trials=3, noise=0.05))
    row = rows[0]
    assert row.error is None
    assert row.productive + row.nonproductive == row.iterations
    assert row.g_out <= 0.5 + 1e-12


def test_online_row_counts_rounds():
    rows = run_bench(BenchConfig(algorithm='online', eps=(0.5,), n=4, r=3, m=2, rounds=12))
    row = rows[0]
    assert row.error is None
    assert row.productive == 12
    assert row.iterations == 12 + row.nonproductive


def test_start_point_flag_is_used(tmp_path):
    trace = tmp_path / 'trace.txt'
    rows = run_bench(BenchConfig(algorithm='alg2', eps=(0.5,), n=4, r=3, m=2, paper_start=True, trace=str(trace)))
    assert rows[0].error is None
    assert trace.exists()


def test_trace_has_one_line_per_step(tmp_path):
    trace = tmp_path / 'trace.txt'
    rows = run_bench(BenchConfig(algorithm='alg2', eps=(0.25,), n=5, r=4, m=3, trace=str(trace)))
    lines = trace.read_text().splitlines()
    assert len(lines) == rows[0].iterations == 64
    k, kind, h, g = lines[-1].split(',')
    assert k == '63'
    assert kind in ('P', 'N')
    assert float(h) > 0
    float(g)


def test_trace_split_per_epsilon(tmp_path):
    trace = tmp_path / 'trace.txt'
    run_bench(BenchConfig(algorithm='alg2', eps=(0.5, 0.25), n=5, r=4, m=3, trace=str(trace)))
    assert len((tmp_path / 'trace_inv2.txt').read_text().splitlines()) == 16
    assert len((tmp_path / 'trace_inv4.txt').read_text().splitlines()) == 64


def test_bench_config_rejects_bad_values():
    with pytest.raises(ConfigurationError):
        BenchConfig(algorithm='alg9')
    with pytest.raises(ConfigurationError):
        BenchConfig(eps=(0.5, 0.0))
    with pytest.raises(ConfigurationError):
        BenchConfig(algorithm='stochastic', trials=1)


# -- Report ------------------------------------------------------------------

def test_csv_row_formatting():
    row = BenchRow(inv_eps=2.0, iterations=16, wall_time=5.138, f_best=22.327427, g_out=2.210041,
                   productive=10, nonproductive=6)
    text = emit_report([row], 'csv')
    assert text == ','.join(FIELDNAMES) + '\n' + '2,16,5.138000,22.327427,2.210041,10,6\n'


def test_csv_without_rows_is_header_only():
    assert emit_report([], 'csv') == 'inv_eps,iter,time_sec,f_best,g_out,productive,nonproductive\n'


def test_csv_error_row():
    text = emit_report([BenchRow.failed(0.25, 'BudgetExceededError: cap')], 'csv')
    assert text.splitlines()[1] == '4,error,,,,,'


def test_json_round_trip():
    rows = [BenchRow(inv_eps=4.0, iterations=64, wall_time=0.0123456789, f_best=1.23456789012, g_out=-0.5,
                     productive=40, nonproductive=24),
            BenchRow.failed(0.5, 'NoProductiveStepsError: none')]
    data = json.loads(emit_report(rows, 'json'))
    assert data[0]['f_best'] == 1.23456789012
    assert data[1]['error'] == 'NoProductiveStepsError: none'
    assert data[1]['iter'] is None
    assert [BenchRow.from_dict(item) for item in data] == rows


def test_unknown_format_rejected():
    with pytest.raises(ReportError):
        emit_report([], 'xml')


def test_write_report_to_stdout(capsys):
    write_report([BenchRow(inv_eps=8.0, iterations=256, wall_time=1.0, f_best=2.0, g_out=0.1,
                           productive=200, nonproductive=56)], 'csv')
    assert capsys.readouterr().out.splitlines()[1] == '8,256,1.000000,2.000000,0.100000,200,56'


def test_write_trace_unwritable_path(tmp_path):
    blocker = tmp_path / 'file'
    blocker.write_text('x')
    with pytest.raises(ReportError):
        write_trace(['0,P,0.5,0.0'], str(blocker / 'trace.txt'))


# -- Entry point -------------------------------------------------------------

def test_main_writes_report(tmp_path):
    main = _load_main().main
    assert main(['--config', _write_config(tmp_path), '--eps', '1/4']) == 0
    lines = (tmp_path / 'report.csv').read_text().splitlines()
    assert lines[0] == ','.join(FIELDNAMES)
    assert lines[1].startswith('4,64,')
    assert (tmp_path / 'logs' / 'bench_alg2.log').exists()


def test_main_json_to_stdout(tmp_path, capsys):
    main = _load_main().main
    assert main(['--config', _write_config(tmp_path, out=None), '--format', 'json']) == 0
    data = json.loads(capsys.readouterr().out)
    assert data[0]['iter'] == 16


def test_main_reports_failed_rows(tmp_path):
    main = _load_main().main
    assert main(['--config', _write_config(tmp_path), '--geometry', 'entropy']) == 1
    assert 'error' in (tmp_path / 'report.csv').read_text()


def test_main_aborts_on_missing_config(tmp_path):
    assert _load_main().main(['--config', str(tmp_path / 'missing.yaml')]) == 2


def test_main_aborts_on_bad_epsilon(tmp_path):
    assert _load_main().main(['--config', _write_config(tmp_path), '--eps', 'half']) == 2


def test_main_paper_start_flag(tmp_path):
    main = _load_main().main
    trace = tmp_path / 'trace.txt'
    assert main(['--config', _write_config(tmp_path), '--paper-start', '--trace', str(trace)]) == 0
    instance = generate_fts(5, 4, 3, seed=0)
    g_start = float(np.max(instance.rows @ np.full(5, 1.0 / np.sqrt(5))))
    assert float(trace.read_text().splitlines()[0].split(',')[3]) == pytest.approx(g_start)


def test_main_applies_configured_log_level(tmp_path):
    main = _load_main().main
    try:
        assert main(['--config', _write_config(tmp_path)]) == 0
        assert logging.getLogger('mirror_descent').level == logging.WARNING
        assert setup_logger('RelativeMirrorDescentV1').level == logging.WARNING
    finally:
        set_default_level('INFO')
