import json
import math
import tempfile
from pathlib import Path
from unittest import mock

import pandas as pd
from django.core.management import CommandError, call_command
from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

from nonsqueeze import services
from nonsqueeze.cli import cli
from nonsqueeze.exceptions import EXIT_ASSERTION, EXIT_DOMAIN, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE
from nonsqueeze.markov_affine import MarkovTriple
from nonsqueeze.serializers import MarkovFitConfig, MarkovTripleField, RationalField, TubeBoundConfig, config_hash


class CliTestCase(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.out = Path(self._tmp.name)
        self.addCleanup(self._tmp.cleanup)

    def run_cli(self, *argv, out=None):
        return cli([*argv, '--output-dir', str(out or self.out)])

    def report(self, name, out=None):
        return json.loads((Path(out or self.out) / f"{name}.json").read_text())


class ExitCodeTests(CliTestCase):
    def test_usage_errors(self):
        self.assertEqual(cli([]), EXIT_USAGE)
        self.assertEqual(cli(['fold']), EXIT_USAGE)
        self.assertEqual(cli(['fold', 'build', '--R', '1']), EXIT_USAGE)
        self.assertEqual(cli(['markov', 'fit', '--alpha', '1/2', '--colour']), EXIT_USAGE)
        self.assertEqual(cli(['fold', 'build', '--R', 'one', '--L', '8']), EXIT_USAGE)

    def test_invalid_input(self):
        self.assertEqual(self.run_cli('markov', 'fit', '--alpha', 'abc'), EXIT_DOMAIN)
        self.assertEqual(self.run_cli('markov', 'fit', '--alpha=-1'), EXIT_DOMAIN)
        self.assertEqual(self.run_cli('fold', 'build', '--R=-1', '--L', '8'), EXIT_DOMAIN)
        self.assertEqual(self.run_cli('fold', 'build', '--R', '1', '--L', '1'), EXIT_DOMAIN)
        self.assertEqual(self.run_cli('markov', 'triangle', '--triple', '1,2,3', '--alpha', '1'), EXIT_DOMAIN)
        self.assertEqual(self.run_cli('model', 'toric-contain', '--alpha', '3'), EXIT_DOMAIN)
        self.assertEqual(self.run_cli('mink', 'check-thm31', '--R', '1', '--r', '1'), EXIT_DOMAIN)
        self.assertEqual(self.run_cli('mink', 'tube-bound', '--R', '1', '--r', '1'), EXIT_DOMAIN)

    def test_failed_gate_only_fails_with_assert(self):
        argv = ('fold', 'verify', '--R', '1', '--L', '8', '--samples', '50',
                '--mode', 'finite-difference', '--tolerance', '1e-300')
        self.assertEqual(self.run_cli(*argv), EXIT_OK)
        self.assertEqual(self.run_cli(*argv, '--assert'), EXIT_ASSERTION)

    def test_internal_error(self):
        with mock.patch.object(services.MarkovTreeService, 'run', side_effect=RuntimeError('boom')):
            self.assertEqual(self.run_cli('markov', 'tree', '--max-entry', '10'), EXIT_INTERNAL)


class ReportTests(CliTestCase):
    def test_fit_report(self):
        self.assertEqual(self.run_cli('markov', 'fit', '--alpha', '29/10', '--assert'), EXIT_OK)
        report = self.report('markov_fit')
        self.assertEqual(report['schema'], 'v1')
        self.assertEqual(report['task'], 'markov fit')
        self.assertEqual(report['config']['alpha'], '29/10')
        self.assertEqual(report['config_hash'], config_hash(report['config']))
        self.assertEqual(report['result']['triple'], ['5', '29', '433'])
        self.assertEqual(report['result']['fit']['height'], '841/866')
        self.assertEqual(report['result']['branch_index'], 4)
        for step in report['result']['walked']:
            self.assertEqual(len(step['triple']), 3)
            self.assertTrue(all(isinstance(entry, str) and entry.isdigit() for entry in step['triple']))

    def test_no_fit_report(self):
        self.assertEqual(self.run_cli('markov', 'fit', '--alpha', '3'), EXIT_OK)
        result = self.report('markov_fit')['result']
        self.assertFalse(result['fits'])
        self.assertEqual(result['certificate']['height_lower_bound'], '1/1')

    def test_reports_are_reproducible(self):
        second = self.out / 'again'
        argv = ('fold', 'defect', '--R', '1', '--L', '8', '--samples', '5000', '--seed', '3')
        self.assertEqual(self.run_cli(*argv), EXIT_OK)
        self.assertEqual(self.run_cli(*argv, out=second), EXIT_OK)
        first, again = self.report('fold_defect'), self.report('fold_defect', second)
        self.assertNotEqual(first.pop('created_at'), None)
        again.pop('created_at')
        self.assertEqual(first, again)

    def test_workers_do_not_change_results(self):
        argv = ('fold', 'defect', '--R', '1', '--L', '8', '--samples', '5000')
        self.assertEqual(self.run_cli(*argv, '--workers', '1'), EXIT_OK)
        one = self.report('fold_defect')
        self.assertEqual(self.run_cli(*argv, '--workers', '3', out=self.out / 'w3'), EXIT_OK)
        three = self.report('fold_defect', self.out / 'w3')
        self.assertEqual(one['result'], three['result'])
        self.assertEqual(one['config_hash'], three['config_hash'])

    def test_seed_changes_the_hash(self):
        self.run_cli('markov', 'tree', '--max-entry', '50', '--seed', '1')
        first = self.report('markov_tree')['config_hash']
        self.run_cli('markov', 'tree', '--max-entry', '50', '--seed', '2')
        self.assertNotEqual(first, self.report('markov_tree')['config_hash'])

    def test_verify_dumps_points(self):
        self.assertEqual(self.run_cli('fold', 'verify', '--R', '1', '--L', '8', '--samples', '200', '--assert'), EXIT_OK)
        points = pd.read_csv(self.out / 'fold_verify_points.csv')
        self.assertEqual(list(points.columns), ['x1', 'y1', 'x2', 'y2', 'X1', 'Y1', 'X2', 'Y2'])
        self.assertEqual(len(points), 200)
        self.assertLessEqual((points['X1'] ** 2 + points['Y1'] ** 2).max(), 0.5 + 1e-10)
        blocks = self.report('fold_verify')['result']['blocks']
        self.assertEqual(blocks, {'outside_box': 0, 'overlapping_pairs': 0, 'count': 16})

    def test_curve_csv(self):
        argv = ('mink', 'curve', '--samples', '20000', '--assert')
        self.assertEqual(self.run_cli(*argv), EXIT_OK)
        rows = pd.read_csv(self.out / 'mink_curve.csv')
        self.assertEqual(list(rows.columns), ['t', 'volume', 'std_error'])
        self.assertEqual(rows['t'].tolist(), [0.05, 0.02, 0.01, 0.005])

    def test_fold_build_reports_the_slope_bound(self):
        self.assertEqual(self.run_cli('fold', 'build', '--R', '1.1', '--L', '8', '--assert'), EXIT_OK)
        result = self.report('fold_build')['result']
        self.assertLess(result['sup_slope'], result['slope_bound'])
        self.assertEqual(result['M'], 5)
        self.assertAlmostEqual(result['wall_volume'], 4.84 ** 2 - 4.34 ** 2, places=9)

    def test_check_thm31_and_its_alias(self):
        argv = ('--t-values', '0.05', '--samples', '2000', '--assert')
        self.assertEqual(self.run_cli('mink', 'check-thm31', *argv), EXIT_OK)
        report = self.report('mink_check-thm31')
        self.assertEqual(report['task'], 'mink check-thm31')
        self.assertTrue(report['result']['passed'])
        self.assertAlmostEqual(report['result']['content_bound'], math.pi, places=12)
        self.assertIs(services.SERVICES['mink tube-bound'], services.SERVICES['mink check-thm31'])

        with tempfile.TemporaryDirectory() as other:
            self.assertEqual(self.run_cli('mink', 'tube-bound', *argv, out=other), EXIT_OK)
            alias = self.report('mink_check-thm31', out=other)
        self.assertEqual(alias['config_hash'], report['config_hash'])
        self.assertEqual(alias['result'], report['result'])

    def test_report_all_gates_error_halving(self):
        tiny_suite = [(services.MarkovTreeService, {'max_entry': 100}, None)]
        with mock.patch.object(services.ReportAllService, 'suite', return_value=iter(tiny_suite)):
            self.assertEqual(self.run_cli('report', 'all', '--assert'), EXIT_OK)
        result = self.report('report_all')['result']
        self.assertTrue(result['passed'])
        self.assertEqual([task['name'] for task in result['tasks']], ['markov_tree'])
        halving = result['error_halving']
        self.assertAlmostEqual(halving['ratio'], 0.5, delta=0.05)
        self.assertEqual(halving['fine']['n_samples'], 4 * halving['coarse']['n_samples'])

    def test_report_all_checks_toric_containment_at_both_fits(self):
        suite = services.ReportAllService({}, writer=None).suite()
        alphas = [options['alpha'] for service, options, _ in suite if service is services.ToricContainService]
        self.assertEqual(alphas, ['2', '29/10'])

    def test_ou_check(self):
        self.assertEqual(self.run_cli('model', 'ou-check', '--samples', '20', '--assert'), EXIT_OK)
        result = self.report('model_ou-check')['result']
        self.assertLessEqual(result['pullback_residual_max'], 1e-6)


class ManagementCommandTests(CliTestCase):
    def test_squeeze_writes_report_and_csv(self):
        call_command('squeeze', 'markov', 'tree', '--max-entry', '100', '--output-dir', str(self.out))
        triples = pd.read_csv(self.out / 'markov_tree.csv')
        self.assertEqual(list(triples.columns), ['a', 'b', 'c'])
        self.assertEqual(triples.iloc[0].tolist(), [1, 1, 1])
        self.assertEqual(self.report('markov_tree')['result']['count'], len(triples))
        self.assertEqual(self.report('markov_tree')['result']['triples'][:3], [['1', '1', '1'], ['1', '1', '2'], ['1', '2', '5']])

    def test_squeeze_reports_exit_status(self):
        with self.assertRaises(CommandError) as raised:
            call_command('squeeze', 'markov', 'fit', '--alpha', 'abc', '--output-dir', str(self.out))
        self.assertEqual(raised.exception.returncode, EXIT_DOMAIN)


class ConfigSerializerTests(SimpleTestCase):
    def test_rational_field(self):
        field = RationalField()
        self.assertEqual(field.to_representation(2), '2/1')
        self.assertEqual(str(field.to_internal_value('6/4')), '3/2')

    def test_triple_field(self):
        field = MarkovTripleField()
        self.assertEqual(field.to_representation(MarkovTriple(433, 5, 29)), ['5', '29', '433'])
        self.assertEqual(field.to_representation((1, 1, 2)), ['1', '1', '2'])
        big = 2 ** 80 + 1
        self.assertEqual(field.to_representation((1, 2, big)), ['1', '2', str(big)])
        self.assertEqual(field.run_validation(['5', '29', '433']), [5, 29, 433])
        with self.assertRaises(ValidationError):
            field.run_validation(['5', '29'])

    def test_hash_ignores_key_order(self):
        a = MarkovFitConfig(data={'seed': 1, 'alpha': '1/2', 'iteration_cap': 64})
        b = MarkovFitConfig(data={'iteration_cap': 64, 'alpha': '2/4', 'seed': 1})
        self.assertTrue(a.is_valid() and b.is_valid())
        self.assertEqual(a.config_hash, b.config_hash)

    def test_cylinder_must_be_narrower(self):
        data = {'seed': 1, 'R': 1.0, 'r': 1.5, 't_values': [], 'samples': 10, 'slack': 0.15}
        serializer = TubeBoundConfig(data=data)
        self.assertFalse(serializer.is_valid())
