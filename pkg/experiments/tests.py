import io
import json
import sys
import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.core.management import call_command, load_command_class
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, tag
from numpy.testing import assert_allclose

from core.exceptions import ConfigError, DomainError
from experiments.complexity import OpCounter, copula_operations, verify_complexity
from experiments.config import load_config, task_from_config, training_options
from experiments.export import csv_text, read_csv
from experiments.models import ExperimentRun
from experiments.services import ExperimentSuiteService
from experiments.tasks import SyntheticGraphTask, SyntheticSeqTask, ToyRegressionTask, is_connected
from numerics.rng import Rng

SMALL_ATTENTION = {'M': 2, 'R': 4, 'd_k': 4, 'hidden': 8}
SMALL_TRAINING = {'epochs': 3, 'lr': 0.05, 'momentum': 0.9}
SMALL_SEQ = SyntheticSeqTask(n_train=24, n_test=16, min_length=4, max_length=8, d_model=8)


def write_config(directory, lines):
    path = Path(directory) / 'experiment.conf'
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return path


class TaskTests(SimpleTestCase):

    def test_sequence_labels_follow_marker(self):
        task = SyntheticSeqTask(n_train=40, n_test=20)
        train, test = task.generate(Rng(0))
        for batch in (train, test):
            balance = np.mean(batch.labels)
            self.assertTrue(0.4 <= balance <= 0.6)
            has_marker = ((batch.tokens == task.marker) & batch.mask).any(axis=1)
            np.testing.assert_array_equal(has_marker, batch.labels == 1)
            lengths = batch.mask.sum(axis=1)
            self.assertTrue(np.all((lengths >= task.min_length) & (lengths <= task.max_length)))
        positions = task.marker_positions(train)
        self.assertTrue(np.all((positions >= 0) == (train.labels == 1)))

    def test_sequence_generation_is_deterministic(self):
        a, _ = SMALL_SEQ.generate(Rng(5))
        b, _ = SMALL_SEQ.generate(Rng(5))
        np.testing.assert_array_equal(a.tokens, b.tokens)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_graph_is_connected_and_split(self):
        train, test = SyntheticGraphTask().generate(Rng(1))
        self.assertTrue(is_connected(train.mask.adjacency))
        self.assertTrue(np.all(np.diag(train.mask.adjacency)))
        self.assertEqual(len(set(train.index) & set(test.index)), 0)
        self.assertEqual(len(train) + len(test), 60)
        self.assertEqual(int(np.sum(train.labels == 0)), 30)

    def test_regression_split_is_disjoint(self):
        train, test = ToyRegressionTask(n_points=40).generate(Rng(2))
        self.assertEqual(len(set(train.x_query) & set(test.x_query)), 0)
        self.assertFalse(np.any(np.diag(train.mask)))
        self.assertIsNone(test.mask)
        self.assertLess(np.max(np.abs(train.y_query - np.sinc(train.x_query / np.pi))), 0.3)


class ComplexityTests(SimpleTestCase):

    def test_counter_rejects_bad_input(self):
        counter = OpCounter()
        counter.add('kernel', 10)
        self.assertEqual(counter.total(), 10)
        with self.assertRaises(DomainError):
            counter.add('sorting', 1)
        with self.assertRaises(DomainError):
            counter.add('kernel', -1)

    def test_dot_product_fit_is_exact(self):
        report = verify_complexity('dot', (8, 16, 32, 64), 4, 4, 2, Rng(0))
        self.assertLessEqual(report.residual, 1e-9)
        # two heads: scores, three projections, normalization and L2 norms
        assert_allclose(
            [report.coefficients[name] for name in ('T^2 d', 'T d^2', 'T^2', 'T d')], [2.0, 6.0, 2.0, 4.0],
            rtol=1e-6,
        )
        for _, ratio in report.doubling:
            self.assertAlmostEqual(ratio, 4.0, places=9)
        self.assertTrue(report.passed())

    def test_kernel_variants(self):
        stationary = verify_complexity('ika-s', (8, 16, 32, 64), 4, 4, 2, Rng(1))
        self.assertAlmostEqual(stationary.coefficients['T^2 R'], 8.0, places=6)
        self.assertAlmostEqual(stationary.coefficients['T d R'], 8.0, places=6)
        paired = verify_complexity('ika-ns', (8, 16, 32, 64), 4, 4, 2, Rng(1))
        self.assertAlmostEqual(paired.coefficients['T d R'], 16.0, places=6)
        self.assertTrue(stationary.passed() and paired.passed())

    def test_copula_adds_t_independent_terms(self):
        report = verify_complexity('mikan', (8, 16, 32, 64), 4, 4, 2, Rng(2))
        self.assertAlmostEqual(report.coefficients['d M^3'], 1.0, places=6)
        self.assertAlmostEqual(report.coefficients['d R'], 4.0, places=6)
        self.assertTrue(report.passed())
        self.assertEqual(copula_operations(2, 4, 4), 4 * 8 + 4 * 4 * 4)

    def test_grid_needs_three_doublings(self):
        with self.assertRaises(DomainError):
            verify_complexity('dot', (8, 16, 32), 4, 4, 2, Rng(0))


class ConfigTests(SimpleTestCase):

    def test_defaults(self):
        config = load_config()
        self.assertIsNone(config['seed'])
        self.assertEqual(config['decomposition.dims'], [1, 2, 8, 32])
        self.assertEqual(config['sparsity.p_grid'], [2.0, 1.0, 0.5, 0.1, 0.05])
        self.assertIs(config['train.analytic_kl'], False)

    def test_file_values_are_cast(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_config(tmp, [
                '# desk run', '', 'decomposition.trials = 200', 'train.variants = dot, mikan',
                'train.analytic_kl = true', 'seed = 4',
            ])
            config = load_config(path)
        self.assertEqual(config['decomposition.trials'], 200)
        self.assertEqual(config['train.variants'], ['dot', 'mikan'])
        self.assertIs(config['train.analytic_kl'], True)
        self.assertEqual(config['seed'], 4)
        self.assertEqual(config.section('decomposition')['trials'], 200)

    def test_errors(self):
        with tempfile.TemporaryDirectory() as tmp:
            for lines in (['decomposition.trails = 200'], ['decomposition.trials'], ['decomposition.trials = many']):
                with self.assertRaises(ConfigError, msg=lines):
                    load_config(write_config(tmp, lines))
            with self.assertRaises(ConfigError):
                load_config(Path(tmp) / 'missing.conf')

    def test_hash_tracks_values(self):
        base = load_config()
        self.assertEqual(base.hash, load_config().hash)
        self.assertNotEqual(base.hash, base.with_values(seed=1).hash)
        self.assertEqual(len(base.hash), 64)

    def test_task_from_config(self):
        config = load_config().with_values(**{'train.task': 'graph'})
        self.assertIsInstance(task_from_config(config), SyntheticGraphTask)
        with self.assertRaises(ConfigError):
            task_from_config(config.with_values(**{'train.task': 'vision'}))


class ExportTests(SimpleTestCase):

    def test_provenance_then_header(self):
        text = csv_text([{'R': 10, 'median': 0.5}], provenance='# kernel-attention command=x seed=1 config_sha256=ab\n')
        lines = text.splitlines()
        self.assertTrue(lines[0].startswith('# kernel-attention'))
        self.assertEqual(lines[1], 'R,median')
        self.assertEqual(lines[2], '10,0.5')
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'out.csv'
            path.write_text(text, encoding='utf-8')
            self.assertEqual(read_csv(path), [{'R': '10', 'median': '0.5'}])


class SuiteTests(SimpleTestCase):

    def test_decomposition_suite(self):
        report = ExperimentSuiteService.run_decomposition_suite(Rng(0), trials=100)
        self.assertTrue(report.passed)
        self.assertLessEqual(report.summary['max_error'], 1e-10)
        self.assertEqual(len(report.rows), 12)
        with self.assertRaises(DomainError):
            ExperimentSuiteService.run_decomposition_suite(Rng(0), trials=50)

    def test_kernel_convergence_rate_and_exceedance(self):
        report = ExperimentSuiteService.run_kernel_convergence(
            Rng(3), r_grid=(100, 1000, 10_000), pairs=50, trials=3, exceedance_trials=20, grid_points=20,
        )
        self.assertAlmostEqual(report.summary['slopes']['stationary'], -0.5, delta=0.15)
        self.assertAlmostEqual(report.summary['slopes']['nonstationary'], -0.5, delta=0.2)
        exceedance = report.summary['exceedance']
        self.assertLessEqual(exceedance['bound'], 0.05)
        self.assertEqual(exceedance['frequency'], 0.0)
        self.assertEqual(len(report.rows), 6)
        with self.assertRaises(DomainError):
            ExperimentSuiteService.run_kernel_convergence(Rng(3), r_grid=(1000, 100))

    def test_sparsity_sweep(self):
        report = ExperimentSuiteService.run_sparsity_sweep(Rng(4))
        self.assertTrue(report.passed, msg=report.summary)
        by_p = {row['p']: row for row in report.rows}
        self.assertGreater(by_p[0.05]['mean_max_weight'], 0.99)
        self.assertLess(by_p[0.05]['mean_entropy'], by_p[2.0]['mean_entropy'])
        self.assertEqual(sum(by_p[2.0][f'bin{i}'] for i in range(10)), 64 * 8)

    def test_task_run_is_deterministic(self):
        runs = [
            ExperimentSuiteService.run_task(SMALL_SEQ, ['dot', 'mikan'], [0, 1, 2], SMALL_ATTENTION, SMALL_TRAINING,
                                            eval_samples=2)
            for _ in range(2)
        ]
        report = runs[0]
        self.assertTrue(report.passed)
        self.assertEqual([(r.variant, r.seed) for r in report.results],
                         [('dot', 0), ('dot', 1), ('dot', 2), ('mikan', 0), ('mikan', 1), ('mikan', 2)])
        self.assertEqual(report.seed_rows(), runs[1].seed_rows())
        self.assertEqual(len(report.summary_rows()), 2)
        self.assertTrue(report.spectral_rows())
        sigma = [row['sigma'] for row in report.copula_rows() if row['i'] == row['j']]
        assert_allclose(sigma, 1.0, rtol=0, atol=1e-10)
        self.assertIsNotNone(report.results[0].marker_fraction)
        self.assertEqual(len(report.training_log_rows()), 3 * 6)
        self.assertEqual([row['epoch'] for row in report.results[0].log], [1, 2, 3])
        self.assertTrue(report.attention_weight_rows())
        self.assertEqual(report.results[3].spectral_files, [])

    def test_task_preconditions(self):
        with self.assertRaises(DomainError):
            ExperimentSuiteService.run_task(SMALL_SEQ, ['dot'], [0, 1], SMALL_ATTENTION, SMALL_TRAINING)
        with self.assertRaises(DomainError):
            ExperimentSuiteService.run_task(SyntheticGraphTask(), ['expsin'], [0, 1, 2], SMALL_ATTENTION, SMALL_TRAINING)
        with self.assertRaises(DomainError):
            ExperimentSuiteService.run_task(SMALL_SEQ, ['softmax'], [0, 1, 2], SMALL_ATTENTION, SMALL_TRAINING)

    def test_graph_and_regression_tasks(self):
        graph = ExperimentSuiteService.run_task(
            SyntheticGraphTask(), ['dot', 'ikan-direct'], [0, 1, 2], SMALL_ATTENTION, SMALL_TRAINING,
        )
        self.assertTrue(graph.passed)
        self.assertEqual(graph.metric_name, 'accuracy')
        regression = ExperimentSuiteService.run_p_sensitivity(
            [2.0, 1.0], [0, 1, 2], task=ToyRegressionTask(n_points=40), attention=SMALL_ATTENTION,
            training=SMALL_TRAINING,
        )
        self.assertTrue(regression.passed)
        self.assertEqual([row['p'] for row in regression.rows], [2.0, 1.0])
        self.assertTrue(all(np.isfinite(row['rmse_mean']) for row in regression.rows))
        with self.assertRaises(DomainError):
            ExperimentSuiteService.run_p_sensitivity([1.0], [0, 1, 2], variant='dot')

    def test_complexity_and_gradcheck_suites(self):
        complexity = ExperimentSuiteService.verify_complexity(Rng(5), ['dot', 'mikan'], (8, 16, 32, 64), d=4, R=4)
        self.assertTrue(complexity.passed)
        gradients = ExperimentSuiteService.run_gradcheck(Rng(6), ['dot', 'ikan-direct'])
        self.assertTrue(gradients.passed, msg=gradients.rows)
        self.assertEqual([row['model'] for row in gradients.rows], ['linear-regression', 'dot', 'ikan-direct'])


class CommandTests(TestCase):

    def call(self, *args):
        out = io.StringIO()
        call_command(*args, stdout=out)
        return out.getvalue()

    def test_decompose_check_writes_ledger_and_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.call('decompose_check', '--seed', '1', '--trials', '100', '--out', tmp)
            lines = (Path(tmp) / 'decomposition.csv').read_text(encoding='utf-8').splitlines()
            self.assertTrue(lines[0].startswith('# kernel-attention command=decompose_check seed=1 config_sha256='))
            self.assertEqual(lines[1], 'identity,d,trials,max_error,negative_branch')
            summary = json.loads((Path(tmp) / 'summary.json').read_text(encoding='utf-8'))
            self.assertTrue(summary['passed'])
        run = ExperimentRun.objects.get()
        self.assertEqual((run.command, run.seed, run.status), ('decompose_check', 1, 'passed'))

    def test_repeated_runs_are_byte_identical(self):
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            for out in (first, second):
                self.call('sparsity_sweep', '--seed', '7', '--out', out)
            for name in ('sparsity.csv', 'summary.json'):
                self.assertEqual((Path(first) / name).read_bytes(), (Path(second) / name).read_bytes())

    def test_domain_errors_exit_with_one(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as caught:
                self.call('decompose_check', '--trials', '10', '--out', tmp)
        self.assertEqual(caught.exception.returncode, 1)
        self.assertEqual(ExperimentRun.objects.get().status, 'error')

    def test_config_errors_exit_with_two(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_config(tmp, ['decomposition.trails = 100'])
            with self.assertRaises(CommandError) as caught:
                self.call('decompose_check', '--config', str(path), '--out', tmp)
        self.assertEqual(caught.exception.returncode, 2)

    def test_unknown_flag_exits_with_two(self):
        command = load_command_class('experiments', 'decompose_check')
        with mock.patch('sys.stderr', io.StringIO()):
            with self.assertRaises(SystemExit) as caught:
                command.run_from_argv(['manage.py', 'decompose_check', '--bogus'])
        self.assertEqual(caught.exception.code, 2)

    def test_no_arguments_prints_usage(self):
        import manage

        stderr = io.StringIO()
        with mock.patch.object(sys, 'argv', ['manage.py']), mock.patch('sys.stderr', stderr):
            with self.assertRaises(SystemExit) as caught:
                manage.main()
        self.assertEqual(caught.exception.code, 2)
        self.assertIn('decompose-check', stderr.getvalue())

    def test_hyphenated_subcommand(self):
        import manage

        with tempfile.TemporaryDirectory() as tmp:
            argv = ['manage.py', 'decompose-check', '--seed', '1', '--trials', '100', '--out', tmp]
            with mock.patch.object(sys, 'argv', argv), mock.patch('sys.stdout', io.StringIO()):
                manage.main()
            self.assertTrue((Path(tmp) / 'decomposition.csv').is_file())
        run = ExperimentRun.objects.get()
        self.assertEqual((run.command, run.status), ('decompose_check', 'passed'))

    def test_unknown_subcommand_exits_with_two(self):
        import manage

        stderr = io.StringIO()
        with mock.patch.object(sys, 'argv', ['manage.py', 'nosuchcmd']), mock.patch('sys.stderr', stderr):
            with self.assertRaises(SystemExit) as caught:
                manage.main()
        self.assertEqual(caught.exception.code, 2)
        self.assertIn("'nosuchcmd'", stderr.getvalue())
        commands = {'decompose_check': 'experiments', 'bench_complexity': 'experiments'}
        self.assertEqual(manage.resolve_subcommand('bench-complexity', commands), 'bench_complexity')
        self.assertEqual(manage.resolve_subcommand('--help', commands), '--help')
        self.assertIsNone(manage.resolve_subcommand('kernel-converge', commands))

    def test_train_writes_metrics(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_config(tmp, [
                'seq.n_train = 16', 'seq.n_test = 8', 'seq.min_length = 4', 'seq.max_length = 6', 'seq.d_model = 4',
                'attention.R = 4', 'attention.d_k = 2', 'attention.hidden = 4', 'attention.copula_rho = 0.3',
                'train.epochs = 2', 'train.eval_samples = 2',
            ])
            out = Path(tmp) / 'out'
            self.call('train', '--task', 'seq', '--variant', 'mikan', '--seed', '3', '--config', str(path),
                      '--out', str(out))
            metrics = read_csv(out / 'metrics.csv')
            self.assertEqual([row['variant'] for row in metrics], ['mikan'])
            self.assertEqual(metrics[0]['failed'], '0')
            seeds = [row['seed'] for row in read_csv(out / 'seeds.csv')]
            self.assertEqual(seeds, ['3', '4', '5'])
            for name in ('diagnostics.csv', 'spectral_points.csv', 'copula.csv'):
                self.assertTrue((out / name).is_file(), name)
            self.assertTrue(list((out / 'checkpoints').glob('seq-mikan-seed3-epoch*.json')))
            log = read_csv(out / 'training_log.csv')
            self.assertEqual(len(log), 2 * 3)
            self.assertEqual([(row['seed'], row['epoch']) for row in log[:2]], [('3', '1'), ('3', '2')])
            self.assertTrue(all(row['elbo'] and row['log_lik'] for row in log))
            weights = read_csv(out / 'attention_weights.csv')
            self.assertEqual({row['batch'] for row in weights}, {'0'})
            spectral = out / 'checkpoints' / 'spectral'
            self.assertTrue((spectral / 'seq-mikan-seed3-density-head1.json').is_file())
            self.assertTrue((spectral / 'seq-mikan-seed5-copula.json').is_file())
        self.assertEqual(ExperimentRun.objects.get().status, 'passed')

    def test_bench_complexity_and_gradcheck(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_config(tmp, [
                'complexity.t_grid = 8,16,32,64', 'complexity.d = 4', 'complexity.R = 4',
                'complexity.variants = dot,ika-s',
            ])
            self.call('bench_complexity', '--config', str(path), '--out', tmp)
            self.assertEqual(len(read_csv(Path(tmp) / 'complexity_points.csv')), 2 * 16)
            self.call('gradcheck', '--variant', 'dot', '--out', tmp)
            self.assertEqual(len(read_csv(Path(tmp) / 'gradcheck.csv')), 2)
        self.assertEqual(ExperimentRun.objects.filter(status='passed').count(), 2)


@tag('slow')
class DeskScaleLearningTests(SimpleTestCase):
    """Default-config training runs; ``manage.py test --exclude-tag slow`` skips them."""

    def run_default(self, task_name, variants):
        config = load_config().with_values(**{'train.task': task_name})
        return ExperimentSuiteService.run_task(
            task_from_config(config), variants, [0, 1, 2], attention=config.section('attention'),
            training=training_options(config), eval_samples=config['train.eval_samples'],
        )

    def test_marker_sequences(self):
        report = self.run_default('seq', ['dot', 'ikan-direct'])
        self.assertTrue(report.passed)
        for row in report.summary_rows():
            self.assertGreaterEqual(row['mean'], 0.95, msg=row)
            self.assertGreaterEqual(row['marker_fraction'], 0.9, msg=row)

    def test_graph_nodes(self):
        report = self.run_default('graph', ['dot', 'ikan-direct'])
        self.assertTrue(report.passed)
        for row in report.summary_rows():
            self.assertGreaterEqual(row['mean'], 0.9, msg=row)
