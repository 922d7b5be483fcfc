"""
Command-line front end: ``cli(argv) -> exit code``.

    0  ok
    1  usage error
    2  invalid input (domain or config validation)
    3  acceptance gate failed (only with --assert)
    4  internal or numerical failure
"""
import argparse
import logging
import os
import sys

from rest_framework.exceptions import ValidationError

from .exceptions import (
    EXIT_DOMAIN, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, AcceptanceError, DomainError, NonsqueezeError,
)

logger = logging.getLogger('nonsqueeze')

COMMON_OPTIONS = {'group', 'task', 'output_dir', 'workers', 'assert_gates'}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _float_list(text):
    try:
        return [float(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not a comma-separated list of numbers")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _common(parser):
    parser.add_argument('--seed', type=int, default=None)
    parser.add_argument('--output-dir', default=None)
    parser.add_argument('--workers', type=_positive_int, default=1)
    parser.add_argument('--assert', dest='assert_gates', action='store_true',
                        help='exit 3 when an acceptance gate fails')


def _task(groups, name, help_text, aliases=()):
    parser = groups.add_parser(name, help=help_text, aliases=list(aliases), allow_abbrev=False)
    _common(parser)
    return parser


def build_parser():
    parser = Parser(prog='squeeze', description='Quantified symplectic non-squeezing toolkit.', allow_abbrev=False)
    groups = parser.add_subparsers(dest='group', required=True, parser_class=Parser)

    markov = groups.add_parser('markov', help='Markov triples and triangles').add_subparsers(dest='task', required=True)
    tree = _task(markov, 'tree', 'enumerate the Markov tree')
    tree.add_argument('--max-entry', type=int)
    fit = _task(markov, 'fit', 'find the fitting triangle for alpha')
    fit.add_argument('--alpha', required=True)
    fit.add_argument('--iteration-cap', type=int)
    triangle = _task(markov, 'triangle', 'build one Markov triangle')
    triangle.add_argument('--triple', required=True)
    triangle.add_argument('--alpha', required=True)
    triangle.add_argument('--vertex', choices=['a', 'b', 'c'], default='a')

    fold = groups.add_parser('fold', help='symplectic folding').add_subparsers(dest='task', required=True)
    for name, help_text in (
        ('build', 'solve C and compose the plan'),
        ('verify', 'symplecticity and block containment'),
        ('defect', 'Monte-Carlo volume defect'),
        ('lipschitz', 'Lipschitz estimates'),
    ):
        sub = _task(fold, name, help_text)
        sub.add_argument('--R', type=float, required=True)
        sub.add_argument('--L', type=float, required=True)
        if name != 'build':
            sub.add_argument('--samples', type=int)
        if name == 'verify':
            sub.add_argument('--mode', choices=['analytic', 'finite-difference'], default='analytic')
            sub.add_argument('--tolerance', type=float)
        if name == 'defect':
            sub.add_argument('--r', type=float)
    scaling = _task(fold, 'scaling', 'defect and Lipschitz scaling over an (R, L) grid')
    scaling.add_argument('--R-values', type=_float_list, required=True)
    scaling.add_argument('--L-values', type=_float_list, required=True)
    scaling.add_argument('--samples', type=int)
    scaling.add_argument('--lipschitz-samples', type=int)

    model = groups.add_parser('model', help='model symplectomorphisms').add_subparsers(dest='task', required=True)
    ou = _task(model, 'ou-check', 'check the Oakley-Usher map')
    ou.add_argument('--samples', type=int)
    ou.add_argument('--h', type=float)
    toric = _task(model, 'toric-contain', 'toric containment of the fitted triangle')
    toric.add_argument('--alpha', required=True)
    toric.add_argument('--samples', type=int)

    mink = groups.add_parser('mink', help='Minkowski content').add_subparsers(dest='task', required=True)
    curve = _task(mink, 'curve', 'tube volumes and Minkowski fit of the Lagrangian disk')
    curve.add_argument('--R', type=float)
    curve.add_argument('--t-values', type=_float_list)
    curve.add_argument('--samples', type=int)
    thm = _task(mink, 'check-thm31', 'tube volume lower bound for the removed disk', aliases=['tube-bound'])
    thm.add_argument('--R', type=float)
    thm.add_argument('--r', type=float)
    thm.add_argument('--t-values', type=_float_list)
    thm.add_argument('--samples', type=int)
    thm.add_argument('--slack', type=float)

    report = groups.add_parser('report', help='acceptance suite').add_subparsers(dest='task', required=True)
    _task(report, 'all', 'run every task at desk scale')
    return parser


def cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    from .services import SERVICES, ReportWriter

    task = f"{args.group} {args.task}"
    service_class = SERVICES[task]
    options = {key: value for key, value in vars(args).items() if key not in COMMON_OPTIONS}

    try:
        writer = ReportWriter(args.output_dir)
        outcome = service_class(options, writer, workers=args.workers).process()
    except ValidationError as e:
        logger.warning(f"{task}: invalid configuration: {e.detail}")
        print(f"{task}: invalid configuration: {e.detail}", file=sys.stderr)
        return EXIT_DOMAIN
    except DomainError as e:
        logger.warning(f"{task}: {e}")
        print(f"{task}: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except NonsqueezeError as e:
        logger.error(f"{task} failed: {e}", exc_info=True)
        print(f"{task}: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error in {task}: {e}", exc_info=True)
        print(f"{task}: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL

    status = 'ok' if outcome.passed else f"{len(outcome.failures)} gate(s) failed"
    print(f"{outcome.name}: {outcome.summary} [{status}]")
    if args.assert_gates and outcome.failures:
        error = AcceptanceError(f"{task}: {'; '.join(outcome.failures)}", outcome.failures)
        print(error, file=sys.stderr)
        return error.exit_code
    return EXIT_OK


def main():
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'nonsqueeze_project.settings')
    import django
    django.setup()
    sys.exit(cli())


if __name__ == '__main__':
    main()
