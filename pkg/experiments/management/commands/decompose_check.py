from experiments.management.base import ExperimentCommand
from experiments.services import ExperimentSuiteService
from numerics.rng import Rng


class Command(ExperimentCommand):
    help = 'Verify the similarity x magnitude factorizations of dot-product and GAT attention'

    def add_experiment_arguments(self, parser):
        parser.add_argument('--trials', type=int, default=None, help='Random trials per dimension (at least 100)')

    def config_overrides(self, options):
        return {'decomposition.trials': options['trials']}

    def run_experiment(self, config, seed, writer):
        settings = config.section('decomposition')
        report = ExperimentSuiteService.run_decomposition_suite(Rng(seed), **settings)
        writer.write_csv('decomposition.csv', report.rows)
        return report
