from experiments.management.base import ExperimentCommand
from experiments.services import ExperimentSuiteService
from numerics.rng import Rng


class Command(ExperimentCommand):
    help = 'Check reverse-mode gradients of every variant against central finite differences'

    def add_experiment_arguments(self, parser):
        parser.add_argument('--variant', action='append', default=None, help='Variant to check (repeatable)')

    def config_overrides(self, options):
        return {'gradcheck.variants': options['variant']}

    def run_experiment(self, config, seed, writer):
        settings = config.section('gradcheck')
        report = ExperimentSuiteService.run_gradcheck(Rng(seed), settings['variants'], settings['tolerance'])
        writer.write_csv('gradcheck.csv', report.rows)
        return report
