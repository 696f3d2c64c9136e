"""
Command-Line Entry Point

Subcommands:
1. fit: pooled logistic coefficients and their sandwich covariance
2. gcomp: risk curves and risk differences under treat-all / treat-none
3. simulate: Monte Carlo study of the time specifications
4. benchmark: wall-clock and memory of the estimating-equation and long-data paths
"""

import argparse
import json
import logging
import sys
import time
import tracemalloc
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from survival_ee import __version__
from survival_ee.config import RunConfig
from survival_ee.core.estimating_functions import estimate_elements
from survival_ee.core.gcomp import GComputationEstimator, fit_pooled_logistic
from survival_ee.data.loaders import load_csv
from survival_ee.models.design import CovariateDesign
from survival_ee.models.results import RiskCurve
from survival_ee.simulation.monte_carlo import SimConfig, run_experiment
from survival_ee.standard.bootstrap import BootstrapResult, EEGComputation, StandardGComputation, bootstrap
from survival_ee.utils.constants import ARM_STRATEGIES, BYTES_PER_ELEMENT, KERNEL_MODES
from survival_ee.utils.exceptions import SurvivalEEError
from survival_ee.utils.helpers import timed

logger = logging.getLogger(__name__)


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group('data')
    group.add_argument('--input', required=True, help='CSV file with one row per unit')
    group.add_argument('--id-col')
    group.add_argument('--time-col', required=True)
    group.add_argument('--event-col', required=True)
    group.add_argument('--covariate-cols', default='', help='comma separated covariate columns')
    group.add_argument('--treatment-col')
    group.add_argument('--weight-col')
    group.add_argument('--resolution', type=float, default=1.0, help='interval width on the file time scale')
    group.add_argument('--tau', type=float, help='end of follow-up on the file time scale')

    model = parser.add_argument_group('model')
    model.add_argument('--time-model', default='linear',
                       help='intercept, linear, loglinear, spline[:k1,k2,...] or disjoint')
    model.add_argument('--knots', default='', help='spline knots in grid units')
    model.add_argument('--target-times', default='', help='comma separated grid times')
    model.add_argument('--arm-strategy', default=ARM_STRATEGIES[0], choices=ARM_STRATEGIES)
    model.add_argument('--interact-treatment', action='store_true')
    model.add_argument('--ci-level', type=float, default=0.95)
    model.add_argument('--tol', type=float)
    model.add_argument('--max-iter', type=int)
    model.add_argument('--jac-step', type=float, help='central-difference step for the Jacobian')
    model.add_argument('--memory-budget', default=None, help="e.g. 2GiB or 500MB")
    model.add_argument('--mode', default='auto', choices=KERNEL_MODES)


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--seed', type=int)
    parser.add_argument('--jobs', type=int, default=1, help='worker processes (-1 for all cores)')
    parser.add_argument('--output-dir', default='.')
    parser.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='survival-ee', description=__doc__.split('\n')[1])
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest='subcommand', required=True)

    fit = subparsers.add_parser('fit', help='fit a pooled logistic model')
    _add_data_flags(fit)
    _add_run_flags(fit)

    gcomp = subparsers.add_parser('gcomp', help='g-computation risk curves')
    _add_data_flags(gcomp)
    _add_run_flags(gcomp)
    gcomp.add_argument('--variance', default='sandwich', help='sandwich or bootstrap:B')
    gcomp.add_argument('--repeat', type=int, default=1, help='report the median wall-clock of N runs')
    gcomp.add_argument('--dump-covariance', action='store_true')

    simulate = subparsers.add_parser('simulate', help='Monte Carlo study')
    _add_run_flags(simulate)
    simulate.add_argument('--config', help='JSON file with SimConfig fields')
    simulate.add_argument('--n', default='', help='comma separated cohort sizes')
    simulate.add_argument('--iters', type=int)
    simulate.add_argument('--truth-draws', type=int)

    benchmark = subparsers.add_parser('benchmark', help='time and memory per implementation')
    _add_data_flags(benchmark)
    _add_run_flags(benchmark)
    benchmark.add_argument('--replicates', type=int, default=0, help='bootstrap replicates to time')
    benchmark.add_argument('--repeat', type=int, default=1)
    return parser


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def _write_json(path: Path, payload: dict) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(_jsonable(payload), f, indent=2, sort_keys=True)
    logger.info(f"Wrote {path}")


def _write_csv(path: Path, frame: pd.DataFrame) -> None:
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {path}")


def _covariance_frame(covariance: np.ndarray, names: Sequence[str]) -> pd.DataFrame:
    frame = pd.DataFrame(covariance, columns=list(names))
    frame.insert(0, 'parameter', list(names))
    return frame


def _bootstrap_curve(curve: RiskCurve, boot: BootstrapResult) -> RiskCurve:
    r = len(curve.times)
    se, wald = boot.se, boot.wald
    return replace(
        curve,
        se1=se[:r], se0=se[r:2 * r], se_rd=se[2 * r:],
        ci1=wald[:r], ci0=wald[r:2 * r], ci_rd=wald[2 * r:],
        covariance=None,
    )


def _run_fit(config: RunConfig, out: Path, stages: Dict[str, float]) -> None:
    start = time.perf_counter()
    dataset = load_csv(config.input, config.schema(), config.resolution, config.tau)
    stages['load'] = time.perf_counter() - start

    design = CovariateDesign(treatment_term=config.treatment_col is not None)
    start = time.perf_counter()
    fit = fit_pooled_logistic(dataset, design, config.time_spec(), config.solver_options(),
                              mode=config.mode, memory_budget=config.memory_budget)
    stages['fit'] = time.perf_counter() - start

    _write_csv(out / 'coefficients.csv', fit.to_frame())
    _write_csv(out / 'covariance.csv', _covariance_frame(fit.covariance, fit.parameter_names))
    _write_json(out / 'fit.json', {
        'version': __version__,
        'config': config.to_dict(),
        'diagnostics': fit.diagnostics.to_dict(),
        'fixed_parameters': fit.fixed_parameters,
        'hazard_ratios': fit.hazard_ratios,
        'wall_clock': stages,
    })


def _run_gcomp(config: RunConfig, out: Path, stages: Dict[str, float]) -> None:
    start = time.perf_counter()
    dataset = load_csv(config.input, config.schema(), config.resolution, config.tau)
    stages['load'] = time.perf_counter() - start

    spec = config.gcomp_spec().with_target_times(dataset)
    curve, stages['gcomp'] = timed(lambda: GComputationEstimator(spec).fit(dataset), config.repeat)

    summary = {}
    if config.variance == 'bootstrap':
        start = time.perf_counter()
        boot = bootstrap(dataset, EEGComputation(spec), config.replicates, config.seed, config.jobs,
                         config.ci_level)
        stages['bootstrap'] = time.perf_counter() - start
        sandwich_curve, curve = curve, _bootstrap_curve(curve, boot)
        r = len(curve.times)
        summary['bootstrap'] = {
            'replicates': boot.replicates,
            'failures': boot.failures,
            'percentile_rd': boot.percentile[2 * r:],
            'sandwich_se_rd': sandwich_curve.se_rd,
        }

    _write_csv(out / 'risk_curve.csv', curve.to_frame())
    if config.dump_covariance and curve.covariance is not None:
        _write_csv(out / 'covariance.csv', _covariance_frame(curve.covariance, curve.parameter_names))
    last = len(curve.times) - 1
    summary.update({
        'version': __version__,
        'config': config.to_dict(),
        'variance': config.variance,
        'time': curve.times[last],
        'rd': curve.rd[last],
        'se_rd': curve.se_rd[last],
        'ci_rd': curve.ci_rd[last],
        'diagnostics': {label: fit.diagnostics.to_dict() for label, fit in curve.fits.items()},
        'fixed_parameters': {label: fit.fixed_parameters for label, fit in curve.fits.items()},
        'wall_clock': stages,
    })
    _write_json(out / 'summary.json', summary)


def _run_simulate(config: RunConfig, out: Path, stages: Dict[str, float]) -> None:
    sim = SimConfig.from_json(config.sim_config) if config.sim_config else SimConfig()
    overrides = {'seed': config.seed, 'jobs': config.jobs}
    if config.sample_sizes:
        overrides['sample_sizes'] = config.sample_sizes
    if config.iterations is not None:
        overrides['iterations'] = config.iterations
    if config.truth_draws is not None:
        overrides['truth_draws'] = config.truth_draws
    sim = replace(sim, **overrides)

    start = time.perf_counter()
    metrics = run_experiment(sim)
    stages['simulate'] = time.perf_counter() - start
    _write_csv(out / 'metrics.csv', metrics)
    _write_json(out / 'simulate.json', {
        'version': __version__,
        'config': config.to_dict(),
        'simulation': sim.to_dict(),
        'wall_clock': stages,
    })


def _peak_bytes(func: Callable[[], object]) -> int:
    tracemalloc.start()
    try:
        func()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return peak


def _run_benchmark(config: RunConfig, out: Path, stages: Dict[str, float]) -> None:
    dataset = load_csv(config.input, config.schema(), config.resolution, config.tau)
    spec = config.gcomp_spec().with_target_times(dataset)
    vectorized = replace(spec, mode='vectorized')
    loop = replace(spec, mode='loop')

    reference = GComputationEstimator(vectorized).fit(dataset)
    fit = next(iter(reference.fits.values()))
    p, q = len(fit.covariate_names), fit.time_design.q
    n, K, K_star = dataset.n, dataset.K, dataset.unique_event_times.size
    vectorized_mode = 'vectorized_disjoint' if fit.time_design.rows_are_unique_event_times else 'vectorized'

    methods: List[tuple] = [
        ('ee_vectorized', lambda: GComputationEstimator(vectorized).fit(dataset), vectorized_mode),
        ('ee_loop', lambda: GComputationEstimator(loop).fit(dataset), 'loop'),
        ('standard_point', lambda: StandardGComputation(spec)(dataset), 'standard'),
    ]
    if config.replicates > 0:
        estimator = StandardGComputation(spec)
        methods.append(('standard_bootstrap_sequence',
                        lambda: bootstrap(dataset, estimator, config.replicates, config.seed, 1), None))
        if config.jobs != 1:
            methods.append(('standard_bootstrap_parallel',
                            lambda: bootstrap(dataset, estimator, config.replicates, config.seed, config.jobs),
                            None))

    rows = []
    for name, func, element_mode in methods:
        _, seconds = timed(func, config.repeat)
        row = {'method': name, 'seconds': seconds, 'predicted_elements': np.nan,
               'predicted_bytes': np.nan, 'peak_bytes': np.nan}
        if element_mode is not None:
            elements = estimate_elements(n, K, K_star, p, q, element_mode)
            row.update(predicted_elements=elements, predicted_bytes=elements * BYTES_PER_ELEMENT,
                       peak_bytes=_peak_bytes(func))
        logger.info(f"{name}: {seconds:.3f}s")
        rows.append(row)
        stages[name] = seconds

    _write_csv(out / 'benchmark.csv', pd.DataFrame(rows))
    _write_json(out / 'benchmark.json', {
        'version': __version__,
        'config': config.to_dict(),
        'problem': {'n': n, 'K': K, 'K_star': K_star, 'p': p, 'q': q},
        'rd': reference.rd,
        'wall_clock': stages,
    })


_HANDLERS = {
    'fit': _run_fit,
    'gcomp': _run_gcomp,
    'simulate': _run_simulate,
    'benchmark': _run_benchmark,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse argv, run one subcommand and write its artifacts.

    Returns:
        0 on success, 1 on a computational failure, 2 on a usage error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = RunConfig.from_args(args)
    except SystemExit as e:
        return int(e.code or 0)
    except ValueError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return 2

    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _HANDLERS[config.subcommand](config, out, {})
    except SurvivalEEError as e:
        logger.error(f"{config.subcommand} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        logger.error(f"{config.subcommand} failed with a numerical error: {e}")
        print(f"error: {config.subcommand} failed: {e}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == '__main__':
    main()
