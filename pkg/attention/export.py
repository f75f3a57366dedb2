import numpy as np

from autodiff.tape import value_of

WEIGHT_COLUMNS = ('batch', 'head', 'row', 'col', 'value')


def weight_rows(output, include_masked=False, batch_index=None):
    """
    Long-format (batch, head, row, col, value) rows of the weight tensor.
    ``batch_index`` keeps a single leading-batch element.
    """
    weights = np.asarray(value_of(output.weights))
    mask = np.broadcast_to(output.mask, weights.shape)
    flat = weights.reshape(-1, *weights.shape[-3:])
    flat_mask = mask.reshape(-1, *weights.shape[-3:])
    rows = []
    for b, (block, admissible) in enumerate(zip(flat, flat_mask)):
        if batch_index is not None and b != batch_index:
            continue
        for head, row, col in zip(*np.nonzero(np.ones_like(admissible) if include_masked else admissible)):
            rows.append({
                'batch': b, 'head': int(head), 'row': int(row), 'col': int(col),
                'value': float(block[head, row, col]),
            })
    return rows
