"""Cone-adapted discrete shearlet system as a bank of frequency masks.

The frequency square is tiled into a low-pass square plus, per scale, a ring
of directional wedges: a horizontal cone (|wy| <= |wx|) and a vertical cone
carry Meyer-windowed shear-indexed windows, with the windows that straddle
the diagonals glued across the cone seam.  All windows are built from
crossfade pairs (cos/sin of the Meyer auxiliary polynomial) so the squared
masks sum to one at every frequency; the bank is a Parseval frame and the
analysis operator is inverted by its adjoint.

Masks are stored real, nonnegative, in the fftshift-free layout of the FFT
used everywhere else, and symmetrized under frequency negation so that
subbands of real images come out real.
"""

from dataclasses import dataclass

import numpy as np

from .spectral import forward_fft, inverse_fft


def meyer_ramp(x):
    """Meyer auxiliary polynomial on [0, 1]: 0 -> 0, 1 -> 1, nu(x) + nu(1-x) = 1."""
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (35.0 - 84.0 * x + 70.0 * x**2 - 20.0 * x**3)


def _fall(x):
    # smooth 1 -> 0 transition; _fall(x)**2 + _rise(x)**2 == 1
    return np.cos(0.5 * np.pi * meyer_ramp(x))


def _rise(x):
    return np.sin(0.5 * np.pi * meyer_ramp(x))


@dataclass(frozen=True)
class ShearletSystem:
    """Bank of frequency masks forming a Parseval partition of unity.

    masks[0] is the low-pass square; the remaining masks come in groups of
    ``directions_per_scale`` per scale, coarse to fine.  Invariant enforced
    at construction: sum_i masks[i]**2 == 1 pointwise (tight frame).
    """

    n: int
    scales: int
    directions_per_scale: int
    masks: np.ndarray
    labels: tuple

    @property
    def nbands(self):
        return self.masks.shape[0]


@dataclass(frozen=True)
class SubbandStack:
    """Subband coefficient grids, one per mask, same order as the system."""

    bands: np.ndarray

    @property
    def nbands(self):
        return self.bands.shape[0]


def _radial_windows(rho, n, scales):
    """Low-pass window plus one ring window per scale on the square radius."""
    bounds = [(n / 2.0) * 2.0 ** -(scales - 1 - j) for j in range(scales)]
    lo = bounds[0] / 2.0
    low = np.where(rho <= lo, 1.0, _fall((rho - lo) / (bounds[0] - lo)))
    low = np.where(rho >= bounds[0], 0.0, low)
    rings = []
    for j in range(scales):
        lo = bounds[j] / 2.0
        ring = np.where(rho <= lo, 0.0, _rise((rho - lo) / (bounds[j] - lo)))
        ring = np.where(rho >= bounds[j], 1.0, ring)
        if j < scales - 1:
            hi = bounds[j + 1]
            falling = np.where(rho >= hi, 0.0, _fall((rho - bounds[j]) / (hi - bounds[j])))
            ring = np.where(rho > bounds[j], falling, ring)
        rings.append(ring)
    return low, rings


def _shear_window(s, k):
    """Angular window centred on integer shear index k, support |s - k| < 1."""
    d = np.abs(s - k)
    return np.where(d < 1.0, _fall(d), 0.0)


def _point_reflect(grid):
    idx = (-np.arange(grid.shape[-1])) % grid.shape[-1]
    return grid[..., idx, :][..., :, idx]


def build_system(n, scales=3, directions_per_scale=4):
    """Build the mask bank for an n-by-n grid.

    Parameters
    ----------
    n : int
        Grid side; must be a power of two, at least 16, and large enough to
        hold `scales` dyadic rings (n >= 2**(scales+1)).
    scales : int
        Number of high-frequency rings.  The default 3, with 4 directions
        per scale, yields 13 subbands (12 directional + 1 low-pass).
    directions_per_scale : int
        Positive multiple of 4: per cone there are m = directions/4 shear
        steps on each side of the axis, and the two windows meeting at each
        diagonal are glued into a single seam mask.
    """
    if n < 16 or (n & (n - 1)) != 0:
        raise ValueError(f"grid side must be a power of two >= 16, got {n}")
    if scales < 1:
        raise ValueError(f"scales must be >= 1, got {scales}")
    if n < 2 ** (scales + 1):
        raise ValueError(f"grid side {n} too small for {scales} scales")
    if directions_per_scale < 4 or directions_per_scale % 4 != 0:
        raise ValueError(
            f"directions_per_scale must be a positive multiple of 4, got {directions_per_scale}"
        )
    m = directions_per_scale // 4

    freqs = np.fft.fftfreq(n) * n
    wy, wx = np.meshgrid(freqs, freqs, indexing="ij")
    rho = np.maximum(np.abs(wx), np.abs(wy))
    low, rings = _radial_windows(rho, n, scales)

    # Scaled shear coordinate per cone: s in [-m, m], integer values on the
    # shear centres, +-m exactly on the diagonals.
    horiz = np.abs(wy) <= np.abs(wx)
    sh = m * np.where(horiz, wy / np.where(wx == 0, 1.0, wx), 0.0)
    sv = m * np.where(~horiz, wx / np.where(wy == 0, 1.0, wy), 0.0)

    masks = [low]
    labels = ["low"]
    for j, ring in enumerate(rings):
        for k in range(-(m - 1), m):
            masks.append(ring * np.where(horiz, _shear_window(sh, k), 0.0))
            labels.append(f"scale{j}-horiz{k:+d}")
        for k in range(-(m - 1), m):
            masks.append(ring * np.where(~horiz, _shear_window(sv, k), 0.0))
            labels.append(f"scale{j}-vert{k:+d}")
        for k in (m, -m):
            seam = np.where(horiz, _shear_window(sh, k), _shear_window(sv, k))
            masks.append(ring * seam)
            labels.append(f"scale{j}-diag{k // m:+d}")
    stack = np.stack(masks)

    # The Nyquist row/column is its own image under frequency negation, which
    # skews the shear coordinate there; symmetrizing the mask energies keeps
    # the Parseval partition exact and makes subbands of real images real.
    stack = np.sqrt(0.5 * (stack**2 + _point_reflect(stack) ** 2))

    deviation = np.abs((stack**2).sum(axis=0) - 1.0).max()
    if deviation > 1e-10:
        raise AssertionError(f"mask bank is not a Parseval partition (dev {deviation:.3e})")
    return ShearletSystem(
        n=n,
        scales=scales,
        directions_per_scale=directions_per_scale,
        masks=stack,
        labels=tuple(labels),
    )


def analyze(system, img):
    """Subband decomposition: band_i = ifft(H_i * fft(u))."""
    img = np.asarray(img)
    if img.shape != (system.n, system.n):
        raise ValueError(f"image shape {img.shape} does not match system size {system.n}")
    spectrum = forward_fft(img)
    bands = np.fft.ifft2(system.masks * spectrum[None], norm="ortho", axes=(-2, -1))
    if np.isrealobj(img):
        bands = bands.real
    return SubbandStack(bands=bands)


def adjoint(system, stack):
    """Adjoint of :func:`analyze`; because the masks are real it is also the
    inverse: ``adjoint(system, analyze(system, u)) == u`` (tight frame)."""
    bands = stack.bands if isinstance(stack, SubbandStack) else np.asarray(stack)
    if bands.shape != (system.nbands, system.n, system.n):
        raise ValueError(
            f"expected {system.nbands} bands of size {system.n}, got shape {bands.shape}"
        )
    spectra = np.fft.fft2(bands, norm="ortho", axes=(-2, -1))
    out = inverse_fft((system.masks * spectra).sum(axis=0))
    if np.isrealobj(bands):
        out = out.real
    return out
