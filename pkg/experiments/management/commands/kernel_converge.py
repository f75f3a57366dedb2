from experiments.management.base import ExperimentCommand
from experiments.services import ExperimentSuiteService
from numerics.rng import Rng


class Command(ExperimentCommand):
    help = 'Random Fourier kernel convergence against closed forms and the uniform error bound'

    def add_experiment_arguments(self, parser):
        parser.add_argument('--pairs', type=int, default=None, help='Random (q, k) pairs per R')
        parser.add_argument('--trials', type=int, default=None, help='Independent spectral samples per R')

    def config_overrides(self, options):
        return {'convergence.pairs': options['pairs'], 'convergence.trials': options['trials']}

    def run_experiment(self, config, seed, writer):
        report = ExperimentSuiteService.run_kernel_convergence(Rng(seed), **config.section('convergence'))
        writer.write_csv('convergence.csv', report.rows)
        return report
