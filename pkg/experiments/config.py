"""
Experiment config files.

A config file holds ``dotted.key = value`` lines read through
python-decouple; comments start with ``#``. Every key must appear in
SCHEMA, and every line must contain ``=``. docs/config_schema.md mirrors
the table below.
"""
import hashlib
import json
import logging
from pathlib import Path

from decouple import Config, Csv, RepositoryEmpty, RepositoryEnv, UndefinedValueError

from core.exceptions import ConfigError
from experiments.tasks import SyntheticGraphTask, SyntheticSeqTask, ToyRegressionTask

logger = logging.getLogger(__name__)

INT_LIST = Csv(cast=int)
FLOAT_LIST = Csv(cast=float)
NAME_LIST = Csv()

# key -> (default, cast)
SCHEMA = {
    'seed': (None, int),
    'workers': (1, int),

    'decomposition.trials': (1000, int),
    'decomposition.dims': ('1,2,8,32', INT_LIST),
    'decomposition.tolerance': (1e-10, float),
    'decomposition.adversarial_norm': (30.0, float),
    'decomposition.c': (0.2, float),

    'convergence.r_grid': ('100,1000,10000,100000', INT_LIST),
    'convergence.pairs': (200, int),
    'convergence.trials': (5, int),
    'convergence.d_k': (4, int),
    'convergence.tolerance': (0.02, float),
    'convergence.exceedance_trials': (100, int),
    'convergence.grid_points': (50, int),
    'convergence.epsilon': (0.5, float),
    'convergence.delta': (0.05, float),

    'sparsity.p_grid': ('2,1,0.5,0.1,0.05', FLOAT_LIST),
    'sparsity.rows': (64, int),
    'sparsity.keys': (8, int),
    'sparsity.d_k': (8, int),
    'sparsity.gap': (0.1, float),

    'attention.M': (2, int),
    'attention.R': (16, int),
    'attention.d_k': (8, int),
    'attention.p': (2.0, float),
    'attention.c': (0.2, float),
    'attention.hidden': (32, int),
    'attention.copula_rho': (0.0, float),

    'train.task': ('seq', str),
    'train.variants': ('dot,ikan-direct', NAME_LIST),
    'train.seed_count': (3, int),
    'train.epochs': (200, int),
    'train.lr': (0.05, float),
    'train.momentum': (0.9, float),
    'train.analytic_kl': (False, bool),
    'train.eval_samples': (16, int),

    'seq.n_train': (200, int),
    'seq.n_test': (200, int),
    'seq.min_length': (8, int),
    'seq.max_length': (32, int),
    'seq.d_model': (16, int),
    'graph.n_nodes': (60, int),
    'graph.p_in': (0.3, float),
    'graph.p_out': (0.02, float),
    'graph.n_features': (8, int),
    'graph.n_train': (30, int),
    'regression.n_points': (120, int),
    'regression.noise': (0.05, float),

    'complexity.t_grid': ('16,32,64,128', INT_LIST),
    'complexity.d': (8, int),
    'complexity.R': (16, int),
    'complexity.M': (2, int),
    'complexity.variants': ('dot,ika-s,ika-ns,ikan,ikan-direct,mikan', NAME_LIST),
    'complexity.tolerance': (0.01, float),

    'gradcheck.variants': ('dot,ika-s,ika-ns,ikan,ikan-direct,mikan', NAME_LIST),
    'gradcheck.tolerance': (1e-4, float),

    'p_sensitivity.p_grid': ('2,1.5,1,0.5', FLOAT_LIST),
    'p_sensitivity.variant': ('ikan-direct', str),
}


class ExperimentConfig:
    """Resolved, cast config values with a stable provenance hash."""

    def __init__(self, values, source=None):
        self.values = dict(values)
        self.source = source

    def __repr__(self):
        return f"ExperimentConfig(source={self.source!r}, hash={self.hash[:12]})"

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def section(self, prefix):
        """Keys under ``prefix.`` with the prefix stripped."""
        start = f'{prefix}.'
        return {key[len(start):]: value for key, value in self.values.items() if key.startswith(start)}

    def with_values(self, **overrides):
        values = dict(self.values)
        values.update(overrides)
        return ExperimentConfig(values, self.source)

    def canonical(self):
        return json.dumps(self.values, sort_keys=True, separators=(',', ':'))

    @property
    def hash(self):
        return hashlib.sha256(self.canonical().encode('utf-8')).hexdigest()


def _check_lines(path):
    for number, raw in enumerate(path.read_text(encoding='utf-8').splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError(f"{path}:{number}: expected 'key = value', got {line!r}")


def load_config(path=None):
    """
    Read ``path`` (or nothing) against SCHEMA. Unknown keys, malformed lines
    and values that fail their cast raise ConfigError.
    """
    if path is None:
        repository = RepositoryEmpty()
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file {path} does not exist")
        _check_lines(path)
        repository = RepositoryEnv(str(path))
        unknown = sorted(set(repository.data) - set(SCHEMA))
        if unknown:
            raise ConfigError(f"Unknown config keys in {path}: {', '.join(unknown)}")

    present = getattr(repository, 'data', {})
    reader = Config(repository)
    values = {}
    for key, (default, cast) in SCHEMA.items():
        if default is None and key not in present:
            values[key] = None
            continue
        try:
            values[key] = reader(key, default=default, cast=cast)
        except (ValueError, UndefinedValueError) as e:
            raise ConfigError(f"Bad value for {key}: {e}")
    config = ExperimentConfig(values, str(path) if path is not None else None)
    logger.info(f"Loaded {config!r}")
    return config


def task_from_config(config):
    """The synthetic task named by ``train.task`` with its section's sizes."""
    name = config['train.task']
    if name == SyntheticSeqTask.name:
        return SyntheticSeqTask(**config.section('seq'))
    if name == SyntheticGraphTask.name:
        return SyntheticGraphTask(**config.section('graph'))
    if name == ToyRegressionTask.name:
        return ToyRegressionTask(**config.section('regression'))
    raise ConfigError(f"Unknown task {name!r}; expected seq, graph or regression")


def training_options(config):
    section = config.section('train')
    return {key: section[key] for key in ('epochs', 'lr', 'momentum', 'analytic_kl')}
