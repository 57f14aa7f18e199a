"""Zero-forcing precoding with equal-transmit-power column normalisation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import column_norms, right_pseudo_inverse


@dataclass(frozen=True)
class Precoder:
    matrix: np.ndarray  # (n_tx, n_streams), unit-norm columns
    stream_index: dict = field(default_factory=dict)  # reception point -> column

    def column(self, key) -> np.ndarray:
        return self.matrix[:, self.stream_index[key]]


def zf_precoder(h_stack: np.ndarray, labels=None) -> Precoder:
    """ZF precoder for the rows of ``h_stack`` with unit-norm columns.

    ``labels`` names the reception point of each row; defaults to row numbers.
    """
    h_stack = np.atleast_2d(np.asarray(h_stack, dtype=complex))
    raw = right_pseudo_inverse(h_stack)
    v = raw / column_norms(raw)
    if labels is None:
        labels = range(h_stack.shape[0])
    return Precoder(v, {lab: i for i, lab in enumerate(labels)})


def effective_gain(h, v) -> float:
    """``|h v|^2`` for a row channel and a precoding column."""
    h = np.asarray(h).reshape(-1)
    v = np.asarray(v).reshape(-1)
    if h.shape != v.shape:
        raise ValueError(f"dimension mismatch {h.shape} vs {v.shape}")
    return float(np.abs(h @ v) ** 2)
