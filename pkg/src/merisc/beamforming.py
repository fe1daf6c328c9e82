"""Zero-forcing beam weights from the cascaded channel."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RTOL = 1e-10


@dataclass(frozen=True)
class BeamWeights:
    A: np.ndarray  # (M, B) complex, column b excites beam b
    total_power: float
    zf_degenerate: bool = False
    rank: int = 0


def pinv_rank(upsilon: np.ndarray, rtol: float = DEFAULT_RTOL):
    """Moore-Penrose pseudo-inverse and numerical rank.

    Works on a single (L, M) matrix or a stack (..., L, M).  Singular values
    below ``rtol * sigma_max`` are treated as zero.
    """
    u, sv, vh = np.linalg.svd(upsilon, full_matrices=False)
    cutoff = rtol * sv[..., :1]
    keep = sv > cutoff
    inv = np.where(keep, 1.0 / np.where(keep, sv, 1.0), 0.0)
    pinv = np.conj(np.swapaxes(vh, -1, -2)) @ (inv[..., :, None] * np.conj(np.swapaxes(u, -1, -2)))
    return pinv, keep.sum(axis=-1)


def normalize_columns(A: np.ndarray, total_power: float) -> np.ndarray:
    """Scale every column to squared norm ``total_power / B``; zero columns stay zero."""
    B = A.shape[-1]
    norms = np.linalg.norm(A, axis=-2, keepdims=True)
    scale = np.where(norms > 0, np.sqrt(total_power / B) / np.where(norms > 0, norms, 1.0), 0.0)
    return A * scale


def zf_weights(upsilon: np.ndarray, total_power: float, rtol: float = DEFAULT_RTOL) -> BeamWeights:
    upsilon = np.asarray(upsilon)
    L, M = upsilon.shape
    if M < L:
        raise ValueError(f"zero forcing needs M >= L (got L={L}, M={M})")
    a_raw, rank = pinv_rank(upsilon, rtol)
    return BeamWeights(normalize_columns(a_raw, total_power), float(total_power),
                       bool(rank < L), int(rank))
