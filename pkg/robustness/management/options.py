"""Arguments shared by the experiment commands (rq1, sweep)"""
from robustness.experiment import load_config, parse_override
from robustness.reports import ReportFormat


def add_experiment_arguments(parser):
    parser.add_argument('config', help='Path to the YAML experiment configuration')
    parser.add_argument('--name', help='Experiment name (defaults to the config file name)')
    parser.add_argument('--model', dest='model_kind', help='Override model.kind')
    parser.add_argument('--seeds', type=int, nargs='+', help='Override the training seeds')
    parser.add_argument('--eval-seed', type=int, help='Override the negative-sampling seed')
    parser.add_argument('--workers', type=int, help='Number of worker processes for grid cells')
    parser.add_argument('--output-dir', help='Directory for reports (default RESULTS_ROOT/<name>)')
    parser.add_argument(
        '--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
        help='Override any configuration key, e.g. --set model.lr=0.001 (repeatable)',
    )
    parser.add_argument(
        '--format', dest='formats', action='append', choices=ReportFormat.values,
        help='Report format(s) to emit (default csv)',
    )


def experiment_config(options):
    overrides = dict(parse_override(text) for text in options['overrides'])
    overrides.update({
        'name': options['name'],
        'model.kind': options['model_kind'],
        'seeds': options['seeds'],
        'eval_seed': options['eval_seed'],
        'workers': options['workers'],
        'output_dir': options['output_dir'],
    })
    return load_config(options['config'], overrides)
