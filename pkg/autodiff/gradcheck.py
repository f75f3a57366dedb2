"""
Central finite-difference check of tape gradients.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from autodiff.tape import Tape

logger = logging.getLogger(__name__)

FD_STEP = 1e-5
MAGNITUDE_LIMIT = 1e3
DENOMINATOR_FLOOR = 1e-8


def relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), DENOMINATOR_FLOOR
    )


@dataclass
class GradcheckReport:
    max_relative_error: float = 0.0
    per_parameter: dict = field(default_factory=dict)
    worst: tuple = None
    skipped: list = field(default_factory=list)
    checked: int = 0

    def passed(self, tolerance):
        return self.max_relative_error <= tolerance

    def as_rows(self):
        return [
            {'parameter': name, 'max_relative_error': err}
            for name, err in self.per_parameter.items()
        ]


def gradcheck(loss_fn, params, step=FD_STEP, magnitude_limit=MAGNITUDE_LIMIT):
    """
    Compare reverse-mode gradients of ``loss_fn`` with central differences.

    ``loss_fn`` maps a dict of parameters (Nodes or arrays) to a scalar and
    must be deterministic; it is evaluated once on a tape and twice per
    scalar entry on plain arrays. Entries with magnitude above
    ``magnitude_limit`` are skipped with a warning.
    """
    params = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
    tape = Tape()
    nodes = {name: tape.variable(value, name) for name, value in params.items()}
    analytic = tape.backward(loss_fn(nodes))

    report = GradcheckReport()
    for name, value in params.items():
        worst = 0.0
        for index in np.ndindex(value.shape):
            if abs(value[index]) > magnitude_limit:
                logger.warning(f"gradcheck skipped {name}{list(index)}: |value| = {abs(value[index]):.3e}")
                report.skipped.append((name, index))
                continue
            shifted = dict(params)
            plus = value.copy()
            plus[index] += step
            shifted[name] = plus
            f_plus = float(loss_fn(shifted))
            minus = value.copy()
            minus[index] -= step
            shifted[name] = minus
            f_minus = float(loss_fn(shifted))
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = float(relative_error(analytic[name][index], numeric))
            report.checked += 1
            if err > worst:
                worst = err
            if err > report.max_relative_error:
                report.max_relative_error = err
                report.worst = (name, index, float(analytic[name][index]), numeric)
        report.per_parameter[name] = worst

    logger.info(
        f"gradcheck over {report.checked} entries: max relative error {report.max_relative_error:.3e}"
    )
    return report
