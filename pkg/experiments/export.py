"""
CSV and JSON result files.

Every CSV starts with a provenance comment line naming the command, seed
and config hash, followed by a header row. Nothing time dependent is
written, so repeated runs produce identical bytes.
"""
import csv
import io
import json
import logging
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


def provenance_line(command, seed, config_hash):
    return f"# kernel-attention command={command} seed={seed} config_sha256={config_hash}\n"


def _plain(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ''
    return value


def csv_text(rows, columns=None, provenance=''):
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    buffer = io.StringIO()
    buffer.write(provenance)
    writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator='\n', extrasaction='ignore')
    writer.writeheader()
    for row in rows:
        writer.writerow({key: _plain(value) for key, value in row.items()})
    return buffer.getvalue()


class ResultWriter:
    """Writes the files of one command invocation under ``out_dir``."""

    def __init__(self, out_dir, command, seed, config_hash):
        self.out_dir = Path(out_dir)
        self.command = command
        self.seed = seed
        self.config_hash = config_hash
        self.written = []

    @property
    def provenance(self):
        return provenance_line(self.command, self.seed, self.config_hash)

    def _path(self, name):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        self.written.append(path)
        return path

    def write_csv(self, name, rows, columns=None):
        path = self._path(name)
        path.write_text(csv_text(rows, columns, self.provenance), encoding='utf-8')
        logger.info(f"Wrote {path}")
        return path

    def write_json(self, name, payload):
        path = self._path(name)
        document = {'provenance': self.provenance.strip('# \n'), **payload}
        path.write_text(json.dumps(document, indent=2, sort_keys=True, default=_plain) + '\n', encoding='utf-8')
        logger.info(f"Wrote {path}")
        return path

    def write_text(self, name, text):
        path = self._path(name)
        path.write_text(text, encoding='utf-8')
        return path


def read_csv(path):
    """Rows of a result CSV, skipping the provenance line."""
    lines = [line for line in Path(path).read_text(encoding='utf-8').splitlines() if not line.startswith('#')]
    return list(csv.DictReader(lines))
