"""
FTAP Command Line

Single entry point for the tree engine, the closed-form pricers and the
batch harnesses:

    python scripts/cli/run_cli.py check-arbitrage configs/examples/binomial.json
    python scripts/cli/run_cli.py bs --spot 100 --strike 100 --rate 0.05 --vol 0.2 --tau 1
    python scripts/cli/run_cli.py fuzz --seed 7 --count 1000 --format json

Exit codes: 0 affirmative verdict, 2 negative but valid verdict (arbitrage,
incomplete, unattainable), 1 input or internal error.
"""

import argparse
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import jsonschema
import numpy as np
import pandas as pd

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '..'))

from engine.core.exceptions import ArbitrageMarketError, FtapError, NotAnEMMError
from engine.core.measures import Measure
from engine.core.risk_manager import is_admissible
from engine.data.tree_loader import LoadedTree, load_claim, load_measure, load_tree, write_measure
from engine.optimization.arbitrage_engine import (
    fftap_verdict,
    find_emm,
    is_martingale_measure,
    martingale_system,
)
from engine.optimization.completeness import (
    completeness_report,
    price,
    price_interval,
    replicate,
    second_measure,
)
from engine.optimization.exact import certify_exact
from engine.optimization.measure_selection import (
    marginal_indifference_price,
    minimal_divergence_measure,
)
from engine.optimization.preferences import DIVERGENCES, UTILITIES, DivergenceSpec, UtilitySpec
from engine.pricing.binomial_bridge import binomial_bridge
from engine.pricing.black_scholes import (
    ClosedFormParams,
    bachelier_call,
    bachelier_call_quadrature,
    bs_call,
    bs_put,
    no_arbitrage_bounds,
)
from engine.pricing.monte_carlo import MAX_SEED, feynman_kac_mc
from engine.pricing.pde_solver import GridSpec, bs_pde_solve
from engine.utils.config_parser import ConfigParser
from engine.utils.logging_config import setup_logging
from engine.utils.report_writer import FORMATS, ReportWriter, RunReport, mapping_table
from engine.utils.validators import TreeValidator

from cli.convergence import run_convergence
from cli.fuzz_harness import FuzzHarness, FuzzSettings

EXIT_OK, EXIT_ERROR, EXIT_NEGATIVE = 0, 1, 2

logger = setup_logging(__name__)


class UsageError(ValueError):
    """Command line could not be parsed."""


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so usage errors map to exit 1."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    """
    One parsed invocation.

    Args:
        verb: Subcommand
        inputs: Input paths and explicit flags, echoed in the report
        settings: Merged configuration (base config + --config overlay)
        seed: Seed of a stochastic verb
        fmt: 'text' or 'json'
        output: Report file (stdout when None)
        exact: Rational re-verification requested
        args: The argparse namespace
    """
    verb: str
    inputs: Dict[str, Any]
    settings: Dict[str, Any]
    seed: Optional[int] = None
    fmt: str = "text"
    output: Optional[str] = None
    exact: bool = False
    args: argparse.Namespace = field(default_factory=argparse.Namespace)


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = (lambda value: argparse.SUPPRESS) if suppress else (lambda value: value)
    parser.add_argument('--config', default=default(None), help='Configuration overlay (JSON or YAML)')
    parser.add_argument('--log-level', default=default(None),
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='Log level for stderr')
    parser.add_argument('--format', dest='fmt', default=default('text'), choices=FORMATS,
                        help='Report format')
    parser.add_argument('--output', default=default(None), help='Write the report to a file')


def _closed_form_flags(parser: argparse.ArgumentParser) -> None:
    for name in ('spot', 'strike', 'rate', 'vol', 'tau'):
        parser.add_argument(f'--{name}', type=float, default=None,
                            help=f'{name} (default: reference_params.{name})')


def build_parser() -> CliArgumentParser:
    parser = CliArgumentParser(prog='run_cli.py',
                               description='Executable asset-pricing theorems on finite scenario trees')
    _global_flags(parser, suppress=False)
    verbs = parser.add_subparsers(dest='verb', required=True, parser_class=CliArgumentParser)

    def verb(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = verbs.add_parser(name, help=help_text)
        _global_flags(sub, suppress=True)
        return sub

    sub = verb('check-arbitrage', 'EMM or admissible arbitrage for a tree')
    sub.add_argument('tree')
    sub.add_argument('--exact', action='store_true', help='Re-verify the certificate in rationals')
    sub.add_argument('--save-measure', help='Write the EMM to a measure file')

    sub = verb('complete', 'Completeness verdict and EMM-set dimension')
    sub.add_argument('tree')

    sub = verb('replicate', 'Replicating strategy of a claim')
    sub.add_argument('tree')
    sub.add_argument('claim')

    sub = verb('price', 'Arbitrage price process of a claim')
    sub.add_argument('tree')
    sub.add_argument('claim')
    sub.add_argument('--measure', help='EMM to price under (default: the LP EMM)')

    sub = verb('second-measure', 'A second EMM on an incomplete tree')
    sub.add_argument('tree')
    sub.add_argument('--measure', help='Base EMM (default: the LP EMM)')
    sub.add_argument('--sign', type=int, choices=[1, -1], default=1)
    sub.add_argument('--save-measure', help='Write the second measure to a measure file')

    sub = verb('select-measure', 'Divergence-minimizing EMM')
    sub.add_argument('tree')
    sub.add_argument('--divergence', choices=DIVERGENCES, default='entropy')
    sub.add_argument('--save-measure', help='Write the selected measure to a measure file')

    sub = verb('indifference', 'Marginal utility indifference price')
    sub.add_argument('tree')
    sub.add_argument('claim')
    sub.add_argument('--utility', choices=UTILITIES, default='exp')
    sub.add_argument('--wealth', type=float, required=True)
    sub.add_argument('--risk-aversion', type=float, default=1.0)
    sub.add_argument('--bliss', type=float, default=None,
                     help='Bliss point of quadratic utility (default: wealth + 1)')

    sub = verb('bs', 'Black-Scholes call and put')
    _closed_form_flags(sub)

    sub = verb('bachelier', 'Bachelier call, closed form and quadrature')
    sub.add_argument('--spot', type=float, default=None)
    sub.add_argument('--strike', type=float, default=None)
    sub.add_argument('--sigma-abs', type=float, required=True)
    sub.add_argument('--maturity', type=float, default=None)

    sub = verb('pde', 'Finite-difference solution of the Black-Scholes PDE')
    _closed_form_flags(sub)
    sub.add_argument('--n-space', type=int, default=None)
    sub.add_argument('--n-time', type=int, default=None)
    sub.add_argument('--no-richardson', action='store_true')

    sub = verb('mc', 'Feynman-Kac Monte Carlo price')
    _closed_form_flags(sub)
    sub.add_argument('--seed', type=_seed, required=True)
    sub.add_argument('--paths', type=int, default=None)
    sub.add_argument('--substreams', type=int, default=None)
    sub.add_argument('--jobs', type=int, default=None)

    sub = verb('bridge', 'N-step binomial tree price')
    _closed_form_flags(sub)
    sub.add_argument('--steps', type=int, required=True)
    sub.add_argument('--phys-up', type=float, default=0.5)

    sub = verb('fuzz', 'Property suites over random trees')
    sub.add_argument('--seed', type=_seed, required=True)
    sub.add_argument('--count', type=int, default=None)
    sub.add_argument('--max-horizon', type=int, default=None)
    sub.add_argument('--max-assets', type=int, default=None)
    sub.add_argument('--max-children', type=int, default=None)
    sub.add_argument('--jobs', type=int, default=None)
    sub.add_argument('--selection', action='store_true',
                     help='Also run the measure-selection and duality suite')

    sub = verb('converge', 'Binomial-to-Black-Scholes error table')
    _closed_form_flags(sub)
    sub.add_argument('--steps', type=int, nargs='+', default=None)

    return parser


def parse_run_config(argv: Optional[List[str]] = None,
                     config_parser: Optional[ConfigParser] = None) -> RunConfig:
    """
    Parse argv into a RunConfig.

    Raises:
        UsageError: Unknown verb or flag, missing argument, bad value
    """
    args = build_parser().parse_args(argv)
    settings = (config_parser or ConfigParser()).parse_config(args.config)
    skip = {'verb', 'config', 'log_level', 'fmt', 'output'}
    inputs = {k: v for k, v in sorted(vars(args).items())
              if k not in skip and v is not None and v is not False}
    return RunConfig(
        verb=args.verb,
        inputs=inputs,
        settings=settings,
        seed=getattr(args, 'seed', None),
        fmt=args.fmt,
        output=args.output,
        exact=bool(getattr(args, 'exact', False)),
        args=args,
    )


# ----------------------------------------------------------------------------
# Tree verbs
# ----------------------------------------------------------------------------

def _load(path: str) -> LoadedTree:
    loaded = load_tree(path)
    TreeValidator().require_valid(loaded.tree)
    return loaded


def _base_measure(config: RunConfig, tree) -> Measure:
    """--measure file if given (must be an EMM), else the LP EMM."""
    tolerance = config.settings['tolerances']['martingale']
    path = getattr(config.args, 'measure', None)
    if path:
        measure = load_measure(path, tree)
        check = is_martingale_measure(tree, measure, tolerance)
        if not check:
            raise NotAnEMMError(f"{path}: not a martingale measure (residual "
                                f"{check.worst_residual:.3e} at node {check.worst_node})")
        return measure
    emm = find_emm(tree, floor=config.settings['tolerances']['positivity_floor'])
    if emm is None:
        raise ArbitrageMarketError(f"{config.args.tree}: the market admits arbitrage (no EMM)")
    return emm


def _save_measure(config: RunConfig, tree, measure: Optional[Measure]) -> None:
    path = getattr(config.args, 'save_measure', None)
    if path and measure is not None:
        write_measure(path, tree, measure)


def cmd_check_arbitrage(config: RunConfig) -> RunReport:
    loaded = _load(config.args.tree)
    tree = loaded.tree
    certificate = fftap_verdict(tree)
    artifacts = certificate.to_dict(tree)
    residuals: Dict[str, Any] = {}
    tables: Dict[str, pd.DataFrame] = {}

    if certificate.emm is not None:
        verdict, code = 'emm', EXIT_OK
        residuals['max_residual'] = certificate.max_residual
        residuals['min_leaf_prob'] = certificate.min_leaf_prob
        tables['leaf probabilities'] = mapping_table(artifacts['leaf_prob'], 'leaf', 'probability')
        _save_measure(config, tree, certificate.emm)
    else:
        verdict, code = 'arbitrage', EXIT_NEGATIVE
        tables['arbitrage strategy'] = pd.DataFrame(artifacts['strategy'])
        tables['terminal values'] = mapping_table(artifacts['terminal_values'], 'leaf', 'value')

    if config.exact:
        exact = certify_exact(tree, certificate, loaded.exact_prices)
        artifacts['exact'] = exact.to_dict()
        residuals['exact_verified'] = exact.verified
        if not exact.verified:
            logger.warning(f"Exact re-verification failed: {exact.message}")
    return RunReport('check-arbitrage', verdict, config.inputs, artifacts, residuals,
                     tables=tables, exit_code=code)


def cmd_complete(config: RunConfig) -> RunReport:
    tree = _load(config.args.tree).tree
    report = completeness_report(tree, _base_measure(config, tree))
    artifacts = report.to_dict()
    artifacts['emm'] = report.emm.to_mapping(tree)
    verdict, code = ('complete', EXIT_OK) if report.complete else ('incomplete', EXIT_NEGATIVE)
    return RunReport('complete', verdict, config.inputs, artifacts,
                     tables={'emm': mapping_table(artifacts['emm'], 'leaf', 'probability')},
                     exit_code=code)


def cmd_replicate(config: RunConfig) -> RunReport:
    tree = _load(config.args.tree).tree
    claim = load_claim(config.args.claim, tree)
    result = replicate(tree, claim)
    artifacts = result.to_dict(tree)
    artifacts['admissible'] = is_admissible(tree, result.strategy,
                                            config.settings['tolerances']['value'])
    if result.attainable and not artifacts['admissible']:
        logger.warning("Nonnegative claim replicated by a non-admissible strategy")
    verdict, code = ('attainable', EXIT_OK) if result.attainable else ('unattainable', EXIT_NEGATIVE)
    return RunReport('replicate', verdict, config.inputs, artifacts,
                     residuals={'residual': result.residual},
                     tables={'strategy': pd.DataFrame(artifacts['strategy'])}, exit_code=code)


def cmd_price(config: RunConfig) -> RunReport:
    tree = _load(config.args.tree).tree
    claim = load_claim(config.args.claim, tree)
    measure = _base_measure(config, tree)
    values = price(tree, claim, measure)
    interval = price_interval(tree, claim)
    prices = {node: float(v) for node, v in zip(tree.node_ids, values.value)}
    artifacts = {
        'price': values.initial(tree),
        'price_process': prices,
        'interval_low': interval.low,
        'interval_high': interval.high,
    }
    check = is_martingale_measure(tree, measure, config.settings['tolerances']['martingale'])
    return RunReport('price', 'priced', config.inputs, artifacts,
                     residuals={'measure_residual': check.worst_residual},
                     tables={'price process': mapping_table(prices, 'node', 'value')})


def cmd_second_measure(config: RunConfig) -> RunReport:
    tree = _load(config.args.tree).tree
    base = _base_measure(config, tree)
    other = second_measure(tree, base, sign=config.args.sign)
    if other is None:
        return RunReport('second-measure', 'complete', config.inputs,
                         {'base': base.to_mapping(tree)}, exit_code=EXIT_NEGATIVE)
    check = is_martingale_measure(tree, other, config.settings['tolerances']['martingale'])
    _save_measure(config, tree, other)
    artifacts = {'measure': other.to_mapping(tree), 'base': base.to_mapping(tree)}
    return RunReport('second-measure', 'found', config.inputs, artifacts,
                     residuals={'max_residual': check.worst_residual,
                                'distance': other.total_variation(base),
                                'min_leaf_prob': float(other.leaf_prob.min())},
                     tables={'second measure': mapping_table(artifacts['measure'], 'leaf', 'probability')})


def cmd_select_measure(config: RunConfig) -> RunReport:
    tree = _load(config.args.tree).tree
    base = _base_measure(config, tree)
    selection = minimal_divergence_measure(tree, DivergenceSpec.from_name(config.args.divergence), base)
    artifacts = selection.to_dict(tree)
    system, rhs = martingale_system(tree)
    residual = float(np.max(np.abs(system @ selection.leaf_prob - rhs)))
    _save_measure(config, tree, selection.measure)
    verdict = 'boundary' if selection.on_boundary else 'interior'
    return RunReport('select-measure', verdict, config.inputs, artifacts,
                     residuals={'max_residual': residual,
                                'gradient_norm': selection.gradient_norm},
                     tables={'selected measure': mapping_table(artifacts['leaf_prob'], 'leaf', 'probability')})


def cmd_indifference(config: RunConfig) -> RunReport:
    args = config.args
    tree = _load(args.tree).tree
    claim = load_claim(args.claim, tree)
    bliss = args.bliss if args.bliss is not None else args.wealth + 1.0
    utility = UtilitySpec.from_name(args.utility, risk_aversion=args.risk_aversion, bliss=bliss)
    result = marginal_indifference_price(tree, utility, args.wealth, claim)
    artifacts = result.to_dict(tree)
    measure = artifacts.pop('measure')
    residuals = {
        'duality_residual': abs(result.price - result.duality_price),
        'foc_residual': result.foc_residual,
        'fd_disagreement': result.fd_disagreement,
    }
    return RunReport('indifference', 'flagged' if result.flagged else 'priced', config.inputs,
                     {**artifacts, 'measure': measure}, residuals,
                     tables={'duality measure': mapping_table(measure, 'leaf', 'probability')})


# ----------------------------------------------------------------------------
# Closed-form verbs
# ----------------------------------------------------------------------------

def _params(config: RunConfig) -> ClosedFormParams:
    values = dict(config.settings['reference_params'])
    for name in ('spot', 'strike', 'rate', 'vol', 'tau'):
        given = getattr(config.args, name, None)
        if given is not None:
            values[name] = given
    return ClosedFormParams.from_dict(values)


def cmd_bs(config: RunConfig) -> RunReport:
    params = _params(config)
    low, high = no_arbitrage_bounds(params)
    artifacts = {'price': bs_call(params), 'put': bs_put(params),
                 'lower_bound': low, 'upper_bound': high, 'params': params.to_dict()}
    return RunReport('bs', 'priced', config.inputs, artifacts)


def cmd_bachelier(config: RunConfig) -> RunReport:
    reference = config.settings['reference_params']
    args = config.args
    spot = args.spot if args.spot is not None else reference['spot']
    strike = args.strike if args.strike is not None else reference['strike']
    maturity = args.maturity if args.maturity is not None else reference['tau']
    closed = bachelier_call(spot, strike, args.sigma_abs, maturity)
    quadrature = bachelier_call_quadrature(spot, strike, args.sigma_abs, maturity)
    return RunReport('bachelier', 'priced', config.inputs,
                     {'price': closed, 'quadrature': quadrature},
                     residuals={'quadrature_error': abs(closed - quadrature)})


def cmd_pde(config: RunConfig) -> RunReport:
    params = _params(config)
    section = dict(config.settings['pde'])
    if config.args.n_space is not None:
        section['n_space'] = config.args.n_space
    if config.args.n_time is not None:
        section['n_time'] = config.args.n_time
    if config.args.no_richardson:
        section['richardson'] = False
    solution = bs_pde_solve(params, GridSpec.from_config(section))
    reference = bs_call(params)
    return RunReport('pde', 'priced', config.inputs, solution.to_dict(),
                     residuals={'bs_difference': abs(solution.price - reference)})


def cmd_mc(config: RunConfig) -> RunReport:
    params = _params(config)
    section = config.settings['monte_carlo']
    args = config.args
    estimate = feynman_kac_mc(
        params,
        n_paths=args.paths if args.paths is not None else section['n_paths'],
        seed=config.seed,
        substreams=args.substreams if args.substreams is not None else section['substreams'],
        n_jobs=args.jobs if args.jobs is not None else section['n_jobs'],
    )
    artifacts = estimate.to_dict()
    artifacts.pop('seed')
    return RunReport('mc', 'estimated', config.inputs, artifacts,
                     residuals={'stderr': estimate.stderr}, seed=config.seed)


def cmd_bridge(config: RunConfig) -> RunReport:
    params = _params(config)
    result = binomial_bridge(params, config.args.steps, phys_up=config.args.phys_up,
                             max_tree_steps=config.settings['bridge']['max_tree_steps'])
    return RunReport('bridge', 'priced', config.inputs, result.to_dict(),
                     residuals={'bs_difference': abs(result.price - bs_call(params))})


# ----------------------------------------------------------------------------
# Harness verbs
# ----------------------------------------------------------------------------

def cmd_fuzz(config: RunConfig) -> RunReport:
    args = config.args
    settings = FuzzSettings.from_config(
        config.settings['fuzz'], config.seed,
        count=args.count, max_horizon=args.max_horizon, max_assets=args.max_assets,
        max_children=args.max_children, n_jobs=args.jobs, selection=args.selection or None)
    if settings.count < 0:
        raise ValueError("count must be nonnegative")
    summary = FuzzHarness(settings).run()
    suites = pd.DataFrame([{'suite': name, **counts} for name, counts in summary.suites.items()])
    tables = {'suites': suites}
    if summary.failures:
        tables['failures'] = pd.DataFrame(summary.failures)
    artifacts = summary.to_dict()
    artifacts.pop('seed')
    return RunReport('fuzz', 'pass' if summary.ok else 'fail', config.inputs, artifacts,
                     seed=config.seed, tables=tables,
                     exit_code=EXIT_OK if summary.ok else EXIT_ERROR)


def cmd_converge(config: RunConfig) -> RunReport:
    params = _params(config)
    steps = config.args.steps or config.settings['converge']['steps']
    result = run_convergence(params, steps, config.settings['bridge']['max_tree_steps'])
    artifacts = {'table': result.table, 'bs_call': result.reference}
    return RunReport('converge', 'converged' if result.converged else 'not-converged',
                     config.inputs, artifacts, residuals={'final_error': result.final_error},
                     tables={'convergence': result.table},
                     exit_code=EXIT_OK if result.converged else EXIT_NEGATIVE)


VERBS: Dict[str, Callable[[RunConfig], RunReport]] = {
    'check-arbitrage': cmd_check_arbitrage,
    'complete': cmd_complete,
    'replicate': cmd_replicate,
    'price': cmd_price,
    'second-measure': cmd_second_measure,
    'select-measure': cmd_select_measure,
    'indifference': cmd_indifference,
    'bs': cmd_bs,
    'bachelier': cmd_bachelier,
    'pde': cmd_pde,
    'mc': cmd_mc,
    'bridge': cmd_bridge,
    'fuzz': cmd_fuzz,
    'converge': cmd_converge,
}


def run(config: RunConfig) -> RunReport:
    """Dispatch to the verb handler and write its report."""
    report = VERBS[config.verb](config)
    ReportWriter(config.fmt).write(report, config.output)
    return report


def main(argv: Optional[List[str]] = None) -> int:
    """Main execution function; returns the process exit code."""
    try:
        config = parse_run_config(argv)
        if config.args.log_level:
            setup_logging(level=config.args.log_level)
        return run(config).exit_code
    except jsonschema.ValidationError as exc:
        print(f"error: report failed schema validation: {exc.message}", file=sys.stderr)
        return EXIT_ERROR
    except (FtapError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
