from experiments.management.base import ExperimentCommand
from experiments.services import ExperimentSuiteService
from numerics.rng import Rng


class Command(ExperimentCommand):
    help = 'Attention weight histograms and entropy as the magnitude exponent p shrinks'

    def run_experiment(self, config, seed, writer):
        report = ExperimentSuiteService.run_sparsity_sweep(Rng(seed), **config.section('sparsity'))
        writer.write_csv('sparsity.csv', report.rows)
        return report
