"""
Versioned JSON checkpoints.

A checkpoint is a JSON object with ``format``, ``version`` and an ordered
``fields`` list of ``{name, shape, data}``; ``data`` is the row-major
flattening of the array. Floats are written with ``repr`` precision so a
save/load round trip is exact.
"""
import json
import logging
from pathlib import Path

import numpy as np

from core.exceptions import CheckpointError
from spectral.densities import DENSITY_FIELDS, CopulaSpec, ImplicitDensity

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'kernel-attention-checkpoint'
CHECKPOINT_VERSION = 1


def to_document(fields, metadata=None):
    return {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'metadata': metadata or {},
        'fields': [
            {'name': name, 'shape': list(np.shape(value)), 'data': np.asarray(value, dtype=np.float64).ravel().tolist()}
            for name, value in fields
        ],
    }


def from_document(document):
    """Ordered list of (name, array) pairs from a parsed checkpoint."""
    if document.get('format') != CHECKPOINT_FORMAT:
        raise CheckpointError(f"Not a checkpoint: format {document.get('format')!r}")
    if document.get('version') != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {document.get('version')!r}")
    fields = []
    for entry in document.get('fields', []):
        data = np.asarray(entry['data'], dtype=np.float64)
        shape = tuple(entry['shape'])
        if data.size != int(np.prod(shape)):
            raise CheckpointError(f"Field {entry['name']} holds {data.size} values for shape {shape}")
        fields.append((entry['name'], data.reshape(shape)))
    return fields


def save_checkpoint(path, fields, metadata=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_document(fields, metadata), indent=1) + '\n', encoding='utf-8')
    logger.info(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path):
    try:
        document = json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, ValueError) as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}")
    return from_document(document)


def _expect(fields, names):
    found = [name for name, _ in fields]
    if found != list(names):
        raise CheckpointError(f"Expected fields {list(names)}, found {found}")
    return dict(fields)


def density_fields(density):
    return density.ordered_params()


def density_from_fields(fields, hidden=None):
    params = _expect(fields, DENSITY_FIELDS)
    input_dim, width = params['encoder_w1'].shape
    output_dim = params['generator_b2'].shape[0]
    return ImplicitDensity(input_dim, output_dim, rng=None, hidden=hidden or width, params=params)


def copula_fields(spec):
    return [('raw_factor', spec.raw_factor)]


def copula_from_fields(fields):
    return CopulaSpec(_expect(fields, ('raw_factor',))['raw_factor'])


def spectral_components(fields):
    """
    Per-head implicit densities and the copula stored in a model checkpoint,
    read from its ``spectral.head<m>.*`` and ``spectral.copula.*`` fields.
    Models without implicit heads give ([], None).
    """
    heads, copula = {}, None
    for name, value in fields:
        parts = name.split('.')
        if len(parts) != 3 or parts[0] != 'spectral':
            continue
        if parts[1] == 'copula':
            copula = copula_from_fields([(parts[2], value)])
        elif parts[1].startswith('head'):
            heads.setdefault(int(parts[1][len('head'):]), []).append((parts[2], value))
    if sorted(heads) != list(range(len(heads))):
        raise CheckpointError(f"Spectral heads {sorted(heads)} are not numbered 0..{len(heads) - 1}")
    return [density_from_fields(heads[m]) for m in range(len(heads))], copula


def export_spectral_components(checkpoint_path, out_dir, name):
    """Write each learned head density and the copula as standalone checkpoints."""
    densities, copula = spectral_components(load_checkpoint(checkpoint_path))
    out_dir = Path(out_dir)
    paths = [
        save_checkpoint(out_dir / f'{name}-density-head{m}.json', density_fields(density), {'head': m})
        for m, density in enumerate(densities)
    ]
    if copula is not None:
        paths.append(save_checkpoint(out_dir / f'{name}-copula.json', copula_fields(copula)))
    return paths
