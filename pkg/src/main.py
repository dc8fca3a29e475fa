#!/usr/bin/env python3
"""
bohmflow runner

Runs catalog scenarios, the acceptance suite, Lyapunov sweeps and trajectory
batches from a YAML config, writing self-describing CSV and field dumps.
"""

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from .bohm import force_balance_report, trajectory_batch, validate_snapshot_stride
from .config import LOG_FILE, OUTPUT_DIR
from .dynamics import EvolutionRecord, PairRecord
from .errors import ConfigError, NumericalAbort
from .field_core import RealField
from .flow import CoefficientState, LyapunovResult, lyapunov_spectrum, lyapunov_sweep, toy_nonlinear_generator
from .models import RunConfig, config_hash, dump_config, load_config
from .scenarios import CATALOG, AcceptanceReport, Scenario, build, run_acceptance
from .storage import OutputStore, inspect_file

logger = logging.getLogger(__name__)

HISTORY_POINTS = 50


def configure_logging(verbose: bool = False) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if LOG_FILE:
        handlers.append(logging.FileHandler(LOG_FILE))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


class BohmflowRunner:
    """Orchestrates scenarios and writes their artifacts."""

    def __init__(self, config: RunConfig, out_dir: Optional[str] = None, workers: Optional[int] = None):
        self.config = config
        self.workers = workers or config.workers
        directory = out_dir or config.output.directory or OUTPUT_DIR
        self.store = OutputStore(directory, config_hash(config))

    def scenario(self, name: Optional[str] = None) -> Scenario:
        """Catalog scenario with config params and evolver overrides layered on top."""
        name = name or self.config.scenario
        params = dict(self.config.params) if name == self.config.scenario else {}
        if 'workers' not in params:
            params['workers'] = self.workers
        scenario = build(name, params)
        if scenario.evolver is None or name != self.config.scenario:
            return scenario
        settings = self.config.evolver
        update = {'evolver': settings.apply(scenario.evolver)}
        if settings.steps is not None:
            update['steps'] = settings.steps
        if settings.flow is not None:
            update['flow'] = settings.flow
        return scenario.model_copy(update=update)

    def _write_record(self, record: EvolutionRecord, prefix: str, hbar: float) -> None:
        columns = ['step', 't', 'norm', 'energy', 'mask_fraction']
        rows = zip(record.steps, record.times, record.norms, record.energies, record.mask_fractions)
        self.store.write_csv(f'{prefix}_record.csv', columns, rows)
        if not self.config.output.write_snapshots:
            return
        stride = self.config.output.snapshot_stride
        for k, (step, t, psi) in enumerate(zip(record.steps, record.times, record.snapshots)):
            if k % stride == 0 or k == len(record.snapshots) - 1:
                self.store.write_field(f'{prefix}_{step:06d}', psi, t=t, hbar=hbar)

    def run(self) -> int:
        """Execute the configured scenario's evolution."""
        scenario = self.scenario()
        if scenario.grid is None:
            logger.info(f"Scenario {scenario.name} has no grid evolution; running the Lyapunov sweep")
            return self.lyapunov()
        self.store.write_text('config.yaml', dump_config(self.config))
        logger.info(f"Running {scenario.name} ({scenario.flow.value}, {scenario.steps} steps)")
        result = scenario.evolve()
        hbar = scenario.system.hbar
        if isinstance(result, PairRecord):
            self._write_record(result.psi, 'psi', hbar)
            self._write_record(result.phi, 'phi', hbar)
            columns = ['step', 't', 'divergence', 'overlap_re', 'overlap_im', 'rate_re', 'rate_im',
                       'predicted_re', 'predicted_im']
            rows = [
                (step, t, d, o.real, o.imag, r.real, r.imag, q.real, q.imag)
                for step, t, d, o, r, q in zip(result.psi.steps, result.psi.times, result.divergence,
                                               result.overlaps, result.overlap_rate, result.predicted_rate)
            ]
            self.store.write_csv('pair.csv', columns, rows)
            logger.info(f"Divergence changed by {result.divergence_change():.6e}; "
                        f"max norm drift {result.norm_drift():.3e}")
        else:
            self._write_record(result, 'psi', hbar)
            logger.info(f"Norm drift {result.norm_drift():.3e}")
        return 0

    def accept(self, names: Sequence[str]) -> bool:
        """Run the acceptance suite; reports are written in catalog order."""
        reports: Dict[str, AcceptanceReport] = {}
        scenarios = {name: self.scenario(name) for name in names}
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            future_to_name = {executor.submit(run_acceptance, s): name for name, s in scenarios.items()}
            for future in as_completed(future_to_name):
                reports[future_to_name[future]] = future.result()

        columns = ['scenario', 'check', 'measured', 'threshold', 'relation', 'passed', 'detail']
        summary_rows = []
        lines = []
        for name in names:
            report = reports[name]
            scenario = scenarios[name]
            rows = [(c.scenario, c.check, c.measured, c.threshold, c.relation, c.passed, c.detail)
                    for c in report.checks]
            self.store.write_csv(f'acceptance_{name}.csv', columns, rows)
            if scenario.initial is not None:
                self.store.write_field(f'{name}_initial', scenario.initial_state(), t=0.0,
                                       hbar=scenario.system.hbar)
            summary_rows.append((name, len(report.checks), len(report.failures()), report.passed))
            lines.append(f"{'PASS' if report.passed else 'FAIL'}  {name}  ({report.runtime:.1f}s)")
            for c in report.checks:
                mark = 'ok  ' if c.passed else 'FAIL'
                bound = '' if c.threshold is None else f" {c.relation} {c.threshold:g}"
                lines.append(f"    {mark} {c.check}: {c.measured:.6g}{bound}")
        self.store.write_csv('acceptance_summary.csv', ['scenario', 'checks', 'failures', 'passed'], summary_rows)
        passed = all(r.passed for r in reports.values())
        text = "\n".join(["=" * 50, "ACCEPTANCE SUMMARY", "=" * 50, *lines, "=" * 50,
                          f"{'ALL PASSED' if passed else 'FAILURES PRESENT'}"]) + "\n"
        self.store.write_text('acceptance_summary.txt', text)
        print(text, end='')
        return passed

    def _write_spectrum(self, name: str, result: LyapunovResult) -> None:
        picks = np.unique(np.linspace(0, len(result.history) - 1, HISTORY_POINTS).astype(int))
        rows = [(k, result.spectrum[k], result.history_times[j], result.history[j, k])
                for k in range(len(result.spectrum)) for j in picks]
        self.store.write_csv(name, ['index', 'final', 't', 'running'], rows)

    def lyapunov(self) -> int:
        """Toy-generator sweep with refinement flags, plus per-coupling spectra."""
        settings = self.config.lyapunov
        energies = settings.resolved_energies()
        a0 = np.asarray(settings.initial_coefficients())
        a0 = CoefficientState(a=a0 / np.linalg.norm(a0))

        def make(g):
            return toy_nonlinear_generator(settings.N, g, energies)

        entries = lyapunov_sweep(make, settings.g_values, a0, settings.dt, settings.steps,
                                 settings.renorm_stride, settings.transient_fraction, workers=self.workers)
        self.store.write_csv(
            'lyapunov_sweep.csv',
            ['parameter', 'largest', 'largest_half_dt', 'largest_double_steps', 'consistent', 'chaotic'],
            [(e.parameter, e.largest, e.largest_half_dt, e.largest_double_steps, e.consistent, e.chaotic)
             for e in entries],
        )
        for g in settings.g_values:
            result = lyapunov_spectrum(make(g), a0, settings.dt, settings.steps, settings.renorm_stride,
                                       settings.transient_fraction)
            self._write_spectrum(f'lyapunov_g{g:g}.csv', result)
        for e in entries:
            print(f"g={e.parameter:g}  largest={e.largest:.6f}  consistent={e.consistent}  chaotic={e.chaotic}")
        return 0

    def trajectories(self) -> int:
        """Trajectory batch over the configured scenario, with force diagnostics."""
        scenario = self.scenario()
        if scenario.grid is None:
            raise ValueError(f'scenario {scenario.name!r} has no grid to integrate trajectories on')
        record = scenario.evolve()
        if isinstance(record, PairRecord):
            record = record.psi
        sys_ = scenario.system
        validate_snapshot_stride(record, sys_)
        settings = self.config.trajectories
        trajectories = trajectory_batch(record, sys_, starts=settings.starts, count=settings.count,
                                        seed=settings.seed, workers=self.workers, substeps=settings.substeps)
        d = record.grid.total_dim
        columns = ['t'] + [f'x{k}' for k in range(d)] + [f'P{k}' for k in range(d)] + ['node_flag']
        for k, traj in enumerate(trajectories):
            rows = [(t, *x, *p, flag) for t, x, p, flag in
                    zip(traj.times, traj.positions, traj.momenta, traj.node_flags)]
            self.store.write_csv(f'traj_{k:03d}.csv', columns, rows)

        summary = []
        for psi, t in ((record.snapshots[0], record.times[0]), (record.final, record.times[-1])):
            report = force_balance_report(psi, sys_, t)
            for i, force in enumerate(report.quantum):
                for axis, component in zip(force.axes, force.components):
                    self.store.write_field(f'quantum_force_p{i}_a{axis}_t{t:g}',
                                           RealField(grid=psi.grid, values=component, name=f'F{i}_{axis}'), t=t)
            summary.append((t, report.max_net_force, report.mask_fraction,
                            report.pair_max if report.pair_max is not None else float('nan'),
                            *[v for avg in report.ensemble_average for v in avg]))
        avg_columns = [f'avg_force_p{i}_a{a}' for i in range(sys_.n) for a in sys_.axes(i)]
        self.store.write_csv('forces_summary.csv', ['t', 'max_net_force', 'mask_fraction', 'pair_max', *avg_columns],
                             summary)
        logger.info(f"Wrote {len(trajectories)} trajectories "
                    f"({sum(t.truncated for t in trajectories)} truncated)")
        return 0


def _error_line(kind: str, key: Optional[str], message: str) -> None:
    escaped = str(message).replace('"', "'")
    print(f'error kind={kind} key={key or "-"} message="{escaped}"', file=sys.stderr)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML run configuration')
    common.add_argument('--out', help='Output directory (default: $BOHMFLOW_OUT or ./out)')
    common.add_argument('--workers', type=int, help='Concurrent jobs (default: from config)')
    common.add_argument('--override', action='append', default=[], metavar='KEY=VALUE',
                        help='Override a config value; repeatable (e.g. evolver.dt=0.001)')
    mode = common.add_mutually_exclusive_group()
    mode.add_argument('--strict', dest='strict', action='store_true', default=True,
                      help='Reject unknown config keys (default)')
    mode.add_argument('--lenient', dest='strict', action='store_false',
                      help='Ignore unknown config keys with a warning')
    common.add_argument('--verbose', action='store_true', help='Debug logging')

    parser = argparse.ArgumentParser(prog='bohmflow', description='Causal-interpretation quantum dynamics runner')
    sub = parser.add_subparsers(dest='command', required=True)
    for name, help_text in (('run', 'Execute a scenario'), ('lyapunov', 'Flow spectrum sweep'),
                            ('traj', 'Trajectory batch')):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument('config_path', nargs='?', help='YAML run configuration')
    p = sub.add_parser('accept', parents=[common], help='Run the acceptance suite')
    p.add_argument('target', nargs='?', default='all', help="Scenario name or 'all'")
    p = sub.add_parser('inspect', parents=[common], help='Echo the header and summary of an artifact')
    p.add_argument('file', help='.cfield, .rfield or .csv file')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = _build_parser().parse_args(argv)
    configure_logging(args.verbose)

    try:
        if args.command == 'inspect':
            print(inspect_file(args.file), end='')
            return 0

        config_path = getattr(args, 'config_path', None) or args.config
        config = load_config(config_path, args.override, strict=args.strict)
        runner = BohmflowRunner(config, out_dir=args.out, workers=args.workers)

        if args.command == 'run':
            return runner.run()
        if args.command == 'lyapunov':
            return runner.lyapunov()
        if args.command == 'traj':
            return runner.trajectories()
        names = list(CATALOG) if args.target == 'all' else [args.target]
        if args.target != 'all' and args.target not in CATALOG:
            raise ConfigError(f"unknown scenario {args.target!r}", key='scenario')
        return 0 if runner.accept(names) else 1

    except ConfigError as e:
        _error_line('validation', e.key, str(e))
        return 1
    except NumericalAbort as e:
        _error_line('numerical', f'step={e.step}' if e.step is not None else None, str(e))
        return 2
    except ValidationError as e:
        first = e.errors()[0]
        _error_line('validation', '.'.join(str(p) for p in first['loc']), first['msg'])
        return 1
    except (ValueError, FileNotFoundError) as e:
        _error_line('validation', None, str(e))
        return 1
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return 1


if __name__ == "__main__":
    sys.exit(main())
