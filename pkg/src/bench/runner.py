import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from bench.report import write_trace
from core.geometry import get_feasible_set, get_geometry
from core.problems import fts_problem, generate_fts, norm_distance
from solvers.base import SolverConfig
from solvers.deterministic import (solve_model_general, solve_multi_v1, solve_multi_v2, solve_relative_v1,
                                   solve_relative_v2)
from solvers.online import OnlineStream, solve_online
from solvers.stochastic import CONSTRAINT_ORACLE, OBJECTIVE_ORACLE, BoundedNoise, StochasticOracle, solve_stochastic
from utils.config import ALGORITHMS, FEASIBLE_SETS, FORMATS, GEOMETRIES
from utils.errors import ConfigurationError, MirrorDescentError
from utils.logger import setup_logger

DETERMINISTIC = {
    'alg1': solve_model_general,
    'alg2': solve_relative_v1,
    'alg2mod': solve_relative_v2,
    'multi-v1': solve_multi_v1,
    'multi-v2': solve_multi_v2,
}


@dataclass(frozen=True)
class BenchConfig:
    algorithm: str = 'alg2'
    eps: tuple = (0.5, 0.25, 0.125, 0.0625, 0.03125)
    delta: float = 0.0
    n: int = 50
    r: int = 20
    m: int = 20
    seed: int = 0
    theta0_sq: float = 2.0
    geometry: str = 'euclidean'
    feasible_set: str = 'unit-ball'
    paper_start: bool = False
    trials: int = 20
    noise: float = 0.1
    rounds: int = 200
    format: str = 'csv'
    out: Optional[str] = None
    trace: Optional[str] = None
    log_dir: Optional[str] = None
    log_level: str = 'INFO'

    def __post_init__(self):
        object.__setattr__(self, 'eps', tuple(float(e) for e in self.eps))
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"Unknown algorithm '{self.algorithm}'")
        if self.geometry not in GEOMETRIES:
            raise ConfigurationError(f"Unknown geometry '{self.geometry}'")
        if self.feasible_set not in FEASIBLE_SETS:
            raise ConfigurationError(f"Unknown feasible set '{self.feasible_set}'")
        if self.format not in FORMATS:
            raise ConfigurationError(f"Unknown output format '{self.format}'")
        if any(not e > 0 for e in self.eps):
            raise ConfigurationError(f"Every epsilon must be positive, got {self.eps}")
        if min(self.n, self.r, self.m, self.rounds) < 1:
            raise ConfigurationError("n, r, m and rounds must be positive integers")
        if self.algorithm == 'stochastic' and self.trials < 2:
            raise ConfigurationError("Stochastic runs need at least 2 trials")

    @classmethod
    def from_config(cls, config: dict) -> 'BenchConfig':
        """Builds the run configuration from a validated YAML/CLI config dict."""
        bench = config['bench']
        logging_cfg = config.get('logging') or {}
        return cls(
            algorithm=bench['algorithm'], eps=tuple(bench['eps']), delta=float(bench['delta']),
            n=int(bench['n']), r=int(bench['r']), m=int(bench['m']), seed=int(bench['seed']),
            theta0_sq=float(bench['theta0_sq']), geometry=bench['geometry'], feasible_set=bench['set'],
            paper_start=bool(bench['paper_start']), trials=int(bench['trials']), noise=float(bench['noise']),
            rounds=int(bench['rounds']), format=bench['format'], out=bench['out'], trace=bench['trace'],
            log_dir=logging_cfg.get('log_dir'), log_level=logging_cfg.get('level', 'INFO'),
        )


@dataclass(frozen=True)
class BenchRow:
    inv_eps: float
    iterations: int = 0
    wall_time: float = 0.0
    f_best: float = float('nan')
    g_out: float = float('nan')
    productive: int = 0
    nonproductive: int = 0
    error: Optional[str] = field(default=None)

    @classmethod
    def failed(cls, epsilon: float, error: str) -> 'BenchRow':
        return cls(inv_eps=1.0 / epsilon, error=error)

    def to_dict(self) -> dict:
        record = {
            'inv_eps': self.inv_eps,
            'iter': self.iterations,
            'time_sec': self.wall_time,
            'f_best': self.f_best,
            'g_out': self.g_out,
            'productive': self.productive,
            'nonproductive': self.nonproductive,
        }
        if self.error:
            record = {key: (record['inv_eps'] if key == 'inv_eps' else None) for key in record}
            record['error'] = self.error
        return record

    @classmethod
    def from_dict(cls, data: dict) -> 'BenchRow':
        if data.get('error'):
            return cls(inv_eps=float(data['inv_eps']), error=data['error'])
        return cls(inv_eps=float(data['inv_eps']), iterations=int(data['iter']), wall_time=float(data['time_sec']),
                   f_best=float(data['f_best']), g_out=float(data['g_out']), productive=int(data['productive']),
                   nonproductive=int(data['nonproductive']))


class BenchRunner:
    """Runs the selected solver on one seeded FTS instance for every epsilon."""

    def __init__(self, config: BenchConfig):
        self.config = config
        log_file = None
        if config.log_dir:
            log_file = os.path.join(config.log_dir, f"bench_{config.algorithm}.log")
        self.logger = setup_logger(self.__class__.__name__, log_file=log_file, level=config.log_level)

    def _trace_path(self, epsilon):
        if self.config.trace is None:
            return None
        if len(self.config.eps) == 1:
            return self.config.trace
        root, ext = os.path.splitext(self.config.trace)
        return f"{root}_inv{1.0 / epsilon:g}{ext or '.txt'}"

    def _solver_config(self, epsilon, problem, x0, **overrides):
        cfg = dict(epsilon=epsilon, delta=self.config.delta, M_f=problem.M_f, M_g=problem.M_g,
                   theta0_sq=self.config.theta0_sq, x0=x0, trace=self.config.trace is not None)
        cfg.update(overrides)
        return SolverConfig(**cfg)

    def run(self):
        config = self.config
        self.logger.info(f"[BENCH] algorithm={config.algorithm}, n={config.n}, r={config.r}, m={config.m}, "
                         f"seed={config.seed}, eps={list(config.eps)}")
        if not config.eps:
            return []

        instance = generate_fts(config.n, config.r, config.m, config.seed)
        geom = get_geometry(config.geometry)
        Q = get_feasible_set(config.feasible_set, config.n)
        problem = fts_problem(instance, geom, config.delta)
        x0 = np.full(config.n, 1.0 / math.sqrt(config.n)) if config.paper_start else None

        rows = []
        for epsilon in config.eps:
            try:
                row, trace_lines = self._run_one(epsilon, instance, problem, geom, Q, x0)
                path = self._trace_path(epsilon)
                if path is not None:
                    write_trace(trace_lines, path)
                self.logger.info(f"[BENCH] 1/eps={row.inv_eps:g}: iter={row.iterations}, f_best={row.f_best:.6f}, "
                                 f"g_out={row.g_out:.6f}, time={row.wall_time:.3f}s")
            except MirrorDescentError as e:
                self.logger.error(f"[BENCH] eps={epsilon:g} failed: {e}")
                row = BenchRow.failed(epsilon, f"{type(e).__name__}: {e}")
            except Exception as e:
                self.logger.exception(f"[BENCH] eps={epsilon:g} crashed: {e}")
                row = BenchRow.failed(epsilon, f"{type(e).__name__}: {e}")
            rows.append(row)
        return rows

    def _run_one(self, epsilon, instance, problem, geom, Q, x0):
        algorithm = self.config.algorithm
        if algorithm in ('multi-v1', 'multi-v2'):
            cfg = self._solver_config(epsilon, problem, x0, M_g=problem.constraints.constants)
            report = DETERMINISTIC[algorithm](problem.objective, problem.constraints, geom, Q, cfg)
        elif algorithm in DETERMINISTIC:
            cfg = self._solver_config(epsilon, problem, x0)
            report = DETERMINISTIC[algorithm](problem.objective, problem.constraint, geom, Q, cfg)
        elif algorithm == 'stochastic':
            return self._run_stochastic(epsilon, problem, geom, Q, x0)
        else:
            return self._run_online(epsilon, instance, problem, geom, Q, x0)

        row = BenchRow(inv_eps=1.0 / epsilon, iterations=report.total_iterations, wall_time=report.wall_time,
                       f_best=report.objective_value, g_out=report.constraint_value,
                       productive=report.productive_count, nonproductive=report.nonproductive_count)
        return row, report.ledger.trace_lines()

    def _run_stochastic(self, epsilon, problem, geom, Q, x0):
        config = self.config
        noise = BoundedNoise(config.noise)
        f_oracle = StochasticOracle.from_function(problem.objective, noise, config.n, config.seed, OBJECTIVE_ORACLE)
        g_oracle = StochasticOracle.from_function(problem.constraint, noise, config.n, config.seed, CONSTRAINT_ORACLE)
        cfg = self._solver_config(epsilon, problem, x0, M_f=f_oracle.M, M_g=g_oracle.M)

        reports = [solve_stochastic(f_oracle, g_oracle, geom, Q, cfg, trial=t) for t in range(config.trials)]
        trace_lines = []
        for report in reports:
            trace_lines.extend(report.ledger.trace_lines())
        row = BenchRow(
            inv_eps=1.0 / epsilon,
            iterations=sum(r.total_iterations for r in reports),
            wall_time=sum(r.wall_time for r in reports),
            f_best=float(np.mean([r.objective_value for r in reports])),
            g_out=max(r.constraint_value for r in reports),
            productive=sum(r.productive_count for r in reports),
            nonproductive=sum(r.nonproductive_count for r in reports),
        )
        return row, trace_lines

    def _run_online(self, epsilon, instance, problem, geom, Q, x0):
        objectives = [norm_distance(instance.points[i % instance.r]) for i in range(self.config.rounds)]
        stream = OnlineStream.from_functions(objectives)
        cfg = self._solver_config(epsilon, problem, x0)
        report = solve_online(stream, problem.constraint, geom, Q, cfg)
        row = BenchRow(inv_eps=1.0 / epsilon, iterations=report.total_iterations, wall_time=report.wall_time,
                       f_best=report.average_loss, g_out=problem.constraint_value(report.mean_iterate),
                       productive=report.rounds, nonproductive=report.nonproductive_count)
        return row, report.ledger.trace_lines()


def run_bench(config: BenchConfig):
    return BenchRunner(config).run()
