from pathlib import Path

from attention.export import WEIGHT_COLUMNS
from experiments.config import task_from_config, training_options
from experiments.management.base import ExperimentCommand
from experiments.services import ExperimentSuiteService, SuiteReport
from training.trainer import LOG_COLUMNS

DIAGNOSTIC_COLUMNS = (
    'variant', 'seed', 'stage', 'epoch', 'max_similarity', 'mean_row_max_similarity',
    'mean_log_magnitude', 'mean_entropy', 'cross_head_std',
)


class Command(ExperimentCommand):
    help = 'Train attention variants on a synthetic task over several seeds'

    def add_experiment_arguments(self, parser):
        parser.add_argument('--task', choices=['seq', 'graph', 'regression'], default=None, help='Synthetic task')
        parser.add_argument('--variant', action='append', default=None, help='Variant to train (repeatable)')
        parser.add_argument('--epochs', type=int, default=None, help='Training epochs')

    def config_overrides(self, options):
        return {
            'train.task': options['task'],
            'train.variants': options['variant'],
            'train.epochs': options['epochs'],
        }

    def run_experiment(self, config, seed, writer):
        task = task_from_config(config)
        seeds = [seed + i for i in range(config['train.seed_count'])]
        report = ExperimentSuiteService.run_task(
            task, config['train.variants'], seeds,
            attention=config.section('attention'), training=training_options(config),
            eval_samples=config['train.eval_samples'], workers=config['workers'],
            checkpoint_dir=writer.out_dir / 'checkpoints',
        )
        summary_rows = report.summary_rows()
        writer.write_csv('metrics.csv', summary_rows)
        writer.write_csv('seeds.csv', report.seed_rows())
        writer.write_csv('diagnostics.csv', report.diagnostics_rows(), DIAGNOSTIC_COLUMNS)
        writer.write_csv('training_log.csv', report.training_log_rows(), ('variant', 'seed') + LOG_COLUMNS)
        writer.write_csv('attention_weights.csv', report.attention_weight_rows(), ('variant', 'seed') + WEIGHT_COLUMNS)
        spectral = report.spectral_rows()
        if spectral:
            writer.write_csv('spectral_points.csv', spectral)
        copula = report.copula_rows()
        if copula:
            writer.write_csv('copula.csv', copula)
        summary = {
            'task': task.name,
            'metrics': summary_rows,
            'head_spread_wins': report.head_spread_wins(),
            'spectral_checkpoints': [Path(f).name for r in report.results for f in r.spectral_files],
        }
        return SuiteReport('train', summary_rows, report.passed, summary)
