from experiments.config import training_options
from experiments.management.base import ExperimentCommand
from experiments.services import ExperimentSuiteService
from experiments.tasks import ToyRegressionTask


class Command(ExperimentCommand):
    help = 'Toy regression RMSE across magnitude exponents p'

    def run_experiment(self, config, seed, writer):
        settings = config.section('p_sensitivity')
        seeds = [seed + i for i in range(config['train.seed_count'])]
        report = ExperimentSuiteService.run_p_sensitivity(
            settings['p_grid'], seeds, variant=settings['variant'],
            task=ToyRegressionTask(**config.section('regression')),
            attention=config.section('attention'), training=training_options(config),
            eval_samples=config['train.eval_samples'], workers=config['workers'],
        )
        writer.write_csv('p_sensitivity.csv', report.rows)
        return report
