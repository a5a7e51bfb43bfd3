"""Unitary 2-D FFT services and frequency symbols of the difference operators.

Every linear operator in the reconstruction (periodic finite differences,
shearlet subband masks) is circulant on the n-by-n torus, so it acts
diagonally in the 2-D DFT domain.  This module fixes the transform
convention once: the DFT is unitary (``norm="ortho"``), which makes energy
preservation exact, the sampling adjoint a plain zero-filled inverse
transform, and the least-squares image update a pointwise division.
"""

from dataclasses import dataclass

import numpy as np

HORIZONTAL = "horizontal"  # differences along array axis 1 (columns)
VERTICAL = "vertical"      # differences along array axis 0 (rows)
AXES = (HORIZONTAL, VERTICAL)


def _require_square(x):
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1] or x.shape[0] == 0:
        raise ValueError(f"expected a non-empty square 2-D array, got shape {x.shape}")
    return x


def _axis_index(axis):
    if axis == HORIZONTAL:
        return 1
    if axis == VERTICAL:
        return 0
    raise ValueError(f"axis must be {HORIZONTAL!r} or {VERTICAL!r}, got {axis!r}")


def forward_fft(img):
    """Unitary 2-D DFT of a square grid (real or complex).

    Preserves the l2 norm exactly: ``norm(forward_fft(x)) == norm(x)``.
    """
    return np.fft.fft2(_require_square(img), norm="ortho")


def inverse_fft(field):
    """Unitary inverse 2-D DFT; exact inverse of :func:`forward_fft`."""
    return np.fft.ifft2(_require_square(field), norm="ortho")


def diff_apply(img, axis):
    """First-order forward difference with periodic wrap: ``u[i+1] - u[i]``.

    ``axis="horizontal"`` differences along columns, ``"vertical"`` along
    rows; the last entry wraps around to the first.
    """
    img = _require_square(img)
    return np.roll(img, -1, axis=_axis_index(axis)) - img


def diff_adjoint(img, axis):
    """Transpose of :func:`diff_apply`: ``p[i-1] - p[i]`` with periodic wrap."""
    img = _require_square(img)
    return np.roll(img, 1, axis=_axis_index(axis)) - img


@dataclass(frozen=True)
class DiffSymbol:
    """DFT eigenvalues of a periodic first-difference operator.

    ``fft(diff_apply(u, axis)) == symbol * fft(u)`` for every u.  The symbol
    vanishes at the zero frequency and satisfies ``|symbol|^2 = 4 sin^2(pi k / n)``
    along its axis.
    """

    axis: str
    symbol: np.ndarray

    @property
    def n(self):
        return self.symbol.shape[0]


def diff_symbol(n, axis):
    """Frequency symbol of the forward difference on an n-by-n grid."""
    if n < 2:
        raise ValueError(f"grid side must be at least 2, got {n}")
    line = np.exp(2j * np.pi * np.fft.fftfreq(n)) - 1.0
    if _axis_index(axis) == 1:
        grid = np.tile(line[None, :], (n, 1))
    else:
        grid = np.tile(line[:, None], (1, n))
    return DiffSymbol(axis=axis, symbol=grid)
