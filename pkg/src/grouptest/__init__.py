"""Pooled infection testing: optimal parameters, designs and simulations."""
from .adaptive import DncSchedule, DncTrace, make_schedule, run_divide_and_conquer
from .groupcode import (
    DecodeResult,
    DesignInfeasible,
    PoolingDesign,
    build_design,
    decode,
    decode_bruteforce_oracle,
    first_pass,
    retest_pass,
    run_group_coding,
)
from .harness import AggregateResult, ExperimentSpec, run_experiment, table1_report
from .testbed import PERFECT, PopulationState, TestLedger, TestModel, generate_population, pooled_test
from .theory import (
    TheoryParams,
    entropy_bound,
    expected_total_tests,
    optimal_k,
    optimal_pool_size,
    theory_params,
    verify_k_optimality,
)

__version__ = "0.1.0"
