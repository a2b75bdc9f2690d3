import os
from fractions import Fraction

import yaml

from utils.errors import ConfigurationError

ALGORITHMS = ('alg1', 'alg2', 'alg2mod', 'multi-v1', 'multi-v2', 'stochastic', 'online')
GEOMETRIES = ('euclidean', 'entropy')
FEASIBLE_SETS = ('unit-ball', 'whole-space', 'box', 'simplex')
FORMATS = ('csv', 'json')

BENCH_DEFAULTS = {
    'algorithm': 'alg2',
    'eps': [0.5, 0.25, 0.125, 0.0625, 0.03125],
    'delta': 0.0,
    'n': 50,
    'r': 20,
    'm': 20,
    'seed': 0,
    'theta0_sq': 2.0,
    'geometry': 'euclidean',
    'set': 'unit-ball',
    'paper_start': False,
    'trials': 20,
    'noise': 0.1,
    'rounds': 200,
    'format': 'csv',
    'out': None,
    'trace': None,
}

def load_config(config_path='config.yaml'):
    """Loads the configuration from a YAML file."""
    if not os.path.exists(config_path):
        raise FileNotFoundError(f"Configuration file not found at {config_path}")

    with open(config_path, 'r') as f:
        config = yaml.safe_load(f) or {}

    bench = dict(BENCH_DEFAULTS)
    bench.update(config.get('bench') or {})
    config['bench'] = bench
    config.setdefault('logging', {'level': 'INFO', 'log_dir': 'logs'})
    return config

def parse_epsilon(text):
    """Parses an accuracy given as a decimal ('0.125') or a fraction ('1/8')."""
    try:
        value = float(Fraction(str(text).strip()))
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigurationError(f"Cannot parse epsilon value '{text}': {e}")
    if value <= 0:
        raise ConfigurationError(f"Epsilon must be positive, got {text}")
    return value

def merge_cli_overrides(config, overrides):
    """Applies every non-None CLI value over the YAML bench defaults."""
    bench = dict(config['bench'])
    for key, value in overrides.items():
        if value is not None:
            bench[key] = value
    merged = dict(config)
    merged['bench'] = bench
    return merged

def validate_config(config):
    """Validates that all required fields are present in the config."""
    if 'bench' not in config:
        raise ConfigurationError("Missing 'bench' section in configuration")

    bench = config['bench']
    for field in BENCH_DEFAULTS:
        if field not in bench:
            raise ConfigurationError(f"Missing required bench field: {field}")

    if bench['algorithm'] not in ALGORITHMS:
        raise ConfigurationError(f"Unknown algorithm '{bench['algorithm']}', expected one of {ALGORITHMS}")
    if bench['geometry'] not in GEOMETRIES:
        raise ConfigurationError(f"Unknown geometry '{bench['geometry']}', expected one of {GEOMETRIES}")
    if bench['set'] not in FEASIBLE_SETS:
        raise ConfigurationError(f"Unknown feasible set '{bench['set']}', expected one of {FEASIBLE_SETS}")
    if bench['format'] not in FORMATS:
        raise ConfigurationError(f"Unknown output format '{bench['format']}', expected one of {FORMATS}")

    bench['eps'] = [parse_epsilon(e) for e in (bench['eps'] or [])]
    for field in ('n', 'r', 'm', 'trials', 'rounds'):
        if int(bench[field]) < 1:
            raise ConfigurationError(f"Bench field '{field}' must be a positive integer")
    if float(bench['delta']) < 0:
        raise ConfigurationError("Bench field 'delta' must be non-negative")
    if float(bench['theta0_sq']) <= 0:
        raise ConfigurationError("Bench field 'theta0_sq' must be positive")
    if float(bench['noise']) < 0:
        raise ConfigurationError("Bench field 'noise' must be non-negative")
    if bench['algorithm'] == 'stochastic' and int(bench['trials']) < 2:
        raise ConfigurationError("Stochastic runs need at least 2 trials")

    return True
