import pytest
import yaml

from bench.runner import BenchConfig
from utils.config import BENCH_DEFAULTS, load_config, merge_cli_overrides, parse_epsilon, validate_config
from utils.errors import ConfigurationError


@pytest.fixture
def config_file(tmp_path):
    def write(data):
        path = tmp_path / 'config.yaml'
        path.write_text(yaml.safe_dump(data))
        return str(path)
    return write


def test_missing_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / 'absent.yaml'))


def test_defaults_fill_missing_keys(config_file):
    config = load_config(config_file({'bench': {'algorithm': 'alg1'}}))
    assert config['bench']['algorithm'] == 'alg1'
    assert config['bench']['n'] == BENCH_DEFAULTS['n']
    assert config['logging'] == {'level': 'INFO', 'log_dir': 'logs'}


def test_empty_file_gives_defaults(config_file):
    config = load_config(config_file(None))
    assert config['bench'] == BENCH_DEFAULTS
    assert validate_config(config)


@pytest.mark.parametrize('text,expected', [('1/8', 0.125), ('0.25', 0.25), (0.5, 0.5), (' 1/32 ', 0.03125)])
def test_parse_epsilon(text, expected):
    assert parse_epsilon(text) == expected


@pytest.mark.parametrize('text', ['half', '1/0', '0', '-1/4'])
def test_parse_epsilon_rejects(text):
    with pytest.raises(ConfigurationError):
        parse_epsilon(text)


def test_cli_overrides_skip_unset_values(config_file):
    config = load_config(config_file({'bench': {'n': 7, 'seed': 3}}))
    merged = merge_cli_overrides(config, {'n': 9, 'seed': None, 'eps': ['1/4']})
    assert merged['bench']['n'] == 9
    assert merged['bench']['seed'] == 3
    assert merged['bench']['eps'] == ['1/4']
    assert config['bench']['n'] == 7


def test_validate_parses_epsilon_list(config_file):
    config = load_config(config_file({'bench': {'eps': ['1/2', '0.25']}}))
    validate_config(config)
    assert config['bench']['eps'] == [0.5, 0.25]


@pytest.mark.parametrize('override', [
    {'algorithm': 'alg4'},
    {'geometry': 'hyperbolic'},
    {'set': 'polytope'},
    {'format': 'xml'},
    {'n': 0},
    {'delta': -0.1},
    {'theta0_sq': 0.0},
    {'noise': -1.0},
    {'algorithm': 'stochastic', 'trials': 1},
])
def test_validate_rejects(config_file, override):
    config = merge_cli_overrides(load_config(config_file({})), override)
    with pytest.raises(ConfigurationError):
        validate_config(config)


def test_validate_requires_bench_section():
    with pytest.raises(ConfigurationError):
        validate_config({'logging': {}})


def test_bench_config_from_config(config_file):
    config = load_config(config_file({'bench': {'algorithm': 'online', 'eps': ['1/4'], 'rounds': 30,
                                                 'set': 'box', 'paper_start': True},
                                      'logging': {'level': 'DEBUG', 'log_dir': 'runs'}}))
    validate_config(config)
    bench = BenchConfig.from_config(config)
    assert bench.algorithm == 'online'
    assert bench.eps == (0.25,)
    assert bench.rounds == 30
    assert bench.feasible_set == 'box'
    assert bench.paper_start is True
    assert (bench.log_dir, bench.log_level) == ('runs', 'DEBUG')
