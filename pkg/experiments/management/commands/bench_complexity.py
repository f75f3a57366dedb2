from experiments.management.base import ExperimentCommand
from experiments.services import ExperimentSuiteService
from numerics.rng import Rng

POINT_COLUMNS = (
    'variant', 'T', 'd', 'R', 'M', 'total',
    'projection', 'scores', 'features', 'kernel', 'magnitude', 'normalization', 'context', 'copula',
)


class Command(ExperimentCommand):
    help = 'Fit operation counts of every variant to its asymptotic complexity'

    def run_experiment(self, config, seed, writer):
        settings = config.section('complexity')
        report = ExperimentSuiteService.verify_complexity(
            Rng(seed), settings['variants'], settings['t_grid'], settings['d'], settings['R'], settings['M'],
            settings['tolerance'],
        )
        writer.write_csv('complexity.csv', report.rows, ('variant', 'term', 'coefficient'))
        writer.write_csv('complexity_points.csv', report.extra['points'], POINT_COLUMNS)
        return report
