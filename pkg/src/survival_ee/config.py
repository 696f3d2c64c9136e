"""
Run Configuration

Resolves command-line flags into one RunConfig that knows how to build the
loader schema, solver options and g-computation spec for a run
"""

import argparse
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

from survival_ee.core.gcomp import GComputationSpec
from survival_ee.core.solver import SolverOptions
from survival_ee.data.loaders import CsvSchema
from survival_ee.models.design import CovariateDesign, TimeDesignSpec
from survival_ee.utils.constants import (
    ARM_STRATEGIES,
    DEFAULT_CI_LEVEL,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_MEMORY_BUDGET,
    DEFAULT_TOLERANCE,
    SINGLE_MODEL,
)
from survival_ee.utils.exceptions import DesignError
from survival_ee.utils.helpers import parse_memory_budget, parse_number_list

SUBCOMMANDS = ('fit', 'gcomp', 'simulate', 'benchmark')


@dataclass
class RunConfig:
    """Fully resolved settings of one CLI invocation"""
    subcommand: str
    output_dir: str = '.'
    input: Optional[str] = None
    id_col: Optional[str] = None
    time_col: Optional[str] = None
    event_col: Optional[str] = None
    covariate_cols: Tuple[str, ...] = ()
    treatment_col: Optional[str] = None
    weight_col: Optional[str] = None
    resolution: float = 1.0
    tau: Optional[float] = None
    time_model: str = 'linear'
    knots: Tuple[float, ...] = ()
    target_times: Optional[Tuple[int, ...]] = None
    arm_strategy: str = 'separate_models_per_arm'
    interact_treatment: bool = False
    variance: str = 'sandwich'
    replicates: int = 0
    ci_level: float = DEFAULT_CI_LEVEL
    seed: Optional[int] = None
    jobs: int = 1
    tol: float = DEFAULT_TOLERANCE
    max_iter: int = DEFAULT_MAX_ITERATIONS
    jac_step: Optional[float] = None
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    mode: str = 'auto'
    repeat: int = 1
    dump_covariance: bool = False
    sim_config: Optional[str] = None
    sample_sizes: Tuple[int, ...] = ()
    iterations: Optional[int] = None
    truth_draws: Optional[int] = None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> 'RunConfig':
        """
        Build a RunConfig from parsed CLI arguments.

        Raises:
            ValueError: For flag values argparse cannot check on its own
        """
        values = vars(args)
        subcommand = values.get('subcommand')
        if subcommand not in SUBCOMMANDS:
            raise ValueError(f"exactly one subcommand of {SUBCOMMANDS} is required")

        variance, replicates = 'sandwich', values.get('replicates') or 0
        spec = values.get('variance') or 'sandwich'
        if spec.startswith('bootstrap'):
            _, _, count = spec.partition(':')
            try:
                replicates = int(count) if count else replicates
            except ValueError:
                raise ValueError(f"--variance expects sandwich or bootstrap:B, got {spec}")
            if replicates < 1:
                raise ValueError("bootstrap needs at least one replicate (bootstrap:B with B >= 1)")
            variance = 'bootstrap'
        elif spec != 'sandwich':
            raise ValueError(f"--variance expects sandwich or bootstrap:B, got {spec}")

        needs_seed = variance == 'bootstrap' or subcommand == 'simulate' or (
            subcommand == 'benchmark' and replicates > 0)
        if needs_seed and values.get('seed') is None:
            raise ValueError(f"--seed is required for {'bootstrap' if variance == 'bootstrap' else subcommand}")
        if subcommand in ('fit', 'gcomp', 'benchmark') and not values.get('input'):
            raise ValueError(f"{subcommand} requires --input")
        if subcommand in ('gcomp', 'benchmark') and not values.get('treatment_col'):
            raise ValueError(f"{subcommand} requires --treatment-col")
        if values.get('arm_strategy', ARM_STRATEGIES[0]) not in ARM_STRATEGIES:
            raise ValueError(f"--arm-strategy must be one of {ARM_STRATEGIES}")
        if values.get('interact_treatment') and values.get('arm_strategy') != SINGLE_MODEL:
            raise ValueError(f"--interact-treatment needs --arm-strategy {SINGLE_MODEL}")

        try:
            knots = tuple(parse_number_list(values.get('knots') or ''))
            targets = parse_number_list(values.get('target_times') or '', int)
            covariates = tuple(parse_number_list(values.get('covariate_cols') or '', str))
            sizes = tuple(parse_number_list(values.get('n') or '', int))
            budget = parse_memory_budget(values.get('memory_budget') or DEFAULT_MEMORY_BUDGET)
        except ValueError as e:
            raise ValueError(f"invalid list or size flag: {e}")

        config = cls(
            subcommand=subcommand,
            output_dir=values.get('output_dir') or '.',
            input=values.get('input'),
            id_col=values.get('id_col'),
            time_col=values.get('time_col'),
            event_col=values.get('event_col'),
            covariate_cols=covariates,
            treatment_col=values.get('treatment_col'),
            weight_col=values.get('weight_col'),
            resolution=values.get('resolution') or 1.0,
            tau=values.get('tau'),
            time_model=values.get('time_model') or 'linear',
            knots=knots,
            target_times=tuple(targets) or None,
            arm_strategy=values.get('arm_strategy') or ARM_STRATEGIES[0],
            interact_treatment=bool(values.get('interact_treatment')),
            variance=variance,
            replicates=replicates,
            ci_level=values.get('ci_level') or DEFAULT_CI_LEVEL,
            seed=values.get('seed'),
            jobs=values.get('jobs') or 1,
            tol=DEFAULT_TOLERANCE if values.get('tol') is None else values['tol'],
            max_iter=DEFAULT_MAX_ITERATIONS if values.get('max_iter') is None else values['max_iter'],
            jac_step=values.get('jac_step'),
            memory_budget=budget,
            mode=values.get('mode') or 'auto',
            repeat=values.get('repeat') or 1,
            dump_covariance=bool(values.get('dump_covariance')),
            sim_config=values.get('config'),
            sample_sizes=sizes,
            iterations=values.get('iters'),
            truth_draws=values.get('truth_draws'),
        )
        config.solver_options()
        if subcommand != 'simulate':
            try:
                config.time_spec()
            except DesignError as e:
                raise ValueError(str(e))
        return config

    def schema(self) -> CsvSchema:
        return CsvSchema(
            time_col=self.time_col,
            event_col=self.event_col,
            id_col=self.id_col,
            covariate_cols=self.covariate_cols,
            treatment_col=self.treatment_col,
            weight_col=self.weight_col,
        )

    def solver_options(self) -> SolverOptions:
        return SolverOptions(max_iterations=self.max_iter, tolerance=self.tol, jacobian_step=self.jac_step)

    def time_spec(self) -> TimeDesignSpec:
        return TimeDesignSpec.parse(self.time_model, self.knots)

    def gcomp_spec(self) -> GComputationSpec:
        return GComputationSpec(
            time_spec=self.time_spec(),
            covariate_design=CovariateDesign(),
            arm_strategy=self.arm_strategy,
            interact_treatment=self.interact_treatment,
            target_times=self.target_times,
            ci_level=self.ci_level,
            treatment_column=self.treatment_col or 'A',
            solver_options=self.solver_options(),
            mode=self.mode,
            memory_budget=self.memory_budget,
        )

    def to_dict(self) -> dict:
        return asdict(self)
