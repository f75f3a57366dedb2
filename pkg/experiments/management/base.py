"""
Shared plumbing for the experiment management commands.

Every command accepts ``--seed``, ``--config``, ``--out`` and ``--workers``,
records itself in the ExperimentRun ledger and exits with status 1 when its
suite fails. Usage and config errors exit with status 2.
"""
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError

from core.exceptions import ConfigError, KernelAttentionError
from experiments.config import load_config
from experiments.export import ResultWriter
from experiments.models import ExperimentRun

logger = logging.getLogger(__name__)

USAGE_ERROR = 2
SUITE_FAILURE = 1


class ExperimentCommand(BaseCommand):
    """Resolve config and seed, run one suite, write its files."""

    @property
    def name(self):
        return type(self).__module__.rsplit('.', 1)[-1]

    def add_arguments(self, parser):
        parser.add_argument('--seed', type=int, default=None, help='Root seed (default: config or settings)')
        parser.add_argument('--config', type=str, default=None, help='Experiment config file (key = value lines)')
        parser.add_argument('--out', type=str, default=None, help='Output directory')
        parser.add_argument('--workers', type=int, default=None, help='Worker processes for seed-parallel runs')
        self.add_experiment_arguments(parser)

    def add_experiment_arguments(self, parser):
        pass

    def config_overrides(self, options):
        """Config keys set from command-line options."""
        return {}

    def run_experiment(self, config, seed, writer):
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            config = load_config(options['config'])
        except ConfigError as e:
            raise CommandError(str(e), returncode=USAGE_ERROR)

        overrides = {key: value for key, value in self.config_overrides(options).items() if value is not None}
        if options['workers'] is not None:
            overrides['workers'] = options['workers']
        seed = options['seed']
        if seed is None:
            seed = config['seed'] if config['seed'] is not None else settings.KERNEL_ATTENTION_DEFAULT_SEED
        config = config.with_values(seed=seed, **overrides)

        out_dir = Path(options['out']) if options['out'] else Path(settings.KERNEL_ATTENTION_OUTPUT_DIR) / self.name
        writer = ResultWriter(out_dir, self.name, seed, config.hash)
        run = self._open_run(config, seed, out_dir)
        self.stdout.write(f'{self.name}: seed {seed}, config {config.hash[:12]}, output {out_dir}')

        try:
            report = self.run_experiment(config, seed, writer)
        except KernelAttentionError as e:
            logger.error(f"{self.name} stopped: {e}")
            self._close_run(run, 'error', message=str(e))
            raise CommandError(f'{self.name} failed: {e}', returncode=SUITE_FAILURE)

        writer.write_json('summary.json', {
            'command': self.name, 'seed': seed, 'config_sha256': config.hash,
            'passed': report.passed, 'summary': report.summary,
        })
        status = 'passed' if report.passed else 'failed'
        self._close_run(run, status, summary={'passed': report.passed, 'files': [p.name for p in writer.written]})

        for path in writer.written:
            self.stdout.write(f'  wrote {path}')
        if not report.passed:
            raise CommandError(f'{self.name}: suite failed', returncode=SUITE_FAILURE)
        self.stdout.write(self.style.SUCCESS(f'{self.name}: passed'))

    def _open_run(self, config, seed, out_dir):
        try:
            return ExperimentRun.objects.create(
                command=self.name, seed=seed, config_hash=config.hash,
                config_source=config.source or '', output_dir=str(out_dir),
            )
        except DatabaseError as e:
            logger.warning(f"Run ledger unavailable, continuing without it: {e}")
            return None

    def _close_run(self, run, status, summary=None, message=''):
        if run is None:
            return
        try:
            run.finish(status, summary, message)
        except DatabaseError as e:
            logger.warning(f"Could not update run {run.pk}: {e}")
