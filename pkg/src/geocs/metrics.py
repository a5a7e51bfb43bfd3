"""Reconstruction quality metrics and analytic test phantoms.

Two relative-error conventions circulate for the same tables (squared and
unsquared norm ratios); both are computed and reported side by side so no
number needs reinterpreting.  Phantoms are evaluated per pixel from closed
forms, so any grid size is exact and no bitmaps ship with the package.
"""

import math
from dataclasses import dataclass

import numpy as np

PHANTOM_KINDS = ("shepp_logan", "smooth_bumps", "textured")

QUALITY_CSV_HEADER = (
    "config_id,n,lines,rate,sigma,beta,lambda,stage,"
    "relerr_sq,relerr,snr_db,iters,seconds"
)


def _check_pair(u, u_true):
    u = np.asarray(u)
    u_true = np.asarray(u_true)
    if u.shape != u_true.shape:
        raise ValueError(f"shapes differ: {u.shape} vs {u_true.shape}")
    return u, u_true


def relerr(u, u_true):
    """Squared-norm relative error: ||u - u_true||^2 / ||u_true||^2."""
    u, u_true = _check_pair(u, u_true)
    denom = np.linalg.norm(u_true) ** 2
    if denom == 0:
        raise ValueError("reference image is identically zero")
    return float(np.linalg.norm(u - u_true) ** 2 / denom)


def relerr_ratio(u, u_true):
    """Unsquared relative error ||u - u_true|| / ||u_true|| (the convention
    behind percentage tables); equals sqrt of :func:`relerr`."""
    return math.sqrt(relerr(u, u_true))


def snr(u, u_true):
    """Signal-to-noise ratio in dB: 10 log10(||u.^2 + u_true.^2||^2 / ||u - u_true||^2),
    with componentwise squaring; +inf when the images coincide."""
    u, u_true = _check_pair(u, u_true)
    noise = np.linalg.norm(u - u_true) ** 2
    if noise == 0:
        return math.inf
    signal = np.linalg.norm(u**2 + u_true**2) ** 2
    return float(10.0 * np.log10(signal / noise))


@dataclass(frozen=True)
class QualityReport:
    """One reconstruction's metrics; appended as a CSV row by the harness."""

    relerr_sq: float
    relerr: float
    snr_db: float
    wall_time: float
    iters_stage1: int
    iters_stage2: int = 0


def quality_report(u, u_true, wall_time=0.0, iters_stage1=0, iters_stage2=0):
    return QualityReport(
        relerr_sq=relerr(u, u_true),
        relerr=relerr_ratio(u, u_true),
        snr_db=snr(u, u_true),
        wall_time=wall_time,
        iters_stage1=iters_stage1,
        iters_stage2=iters_stage2,
    )


# ---------------------------------------------------------------------------
# Phantoms.  Coordinates: x right, y up, both in [-1, 1], pixel (0, 0) at the
# top-left corner; the usual image orientation for the classic head phantom.

def _grid(n):
    x = np.linspace(-1.0, 1.0, n)
    X, Y = np.meshgrid(x, x, indexing="xy")
    return X, -Y


# (value, semi-axis a, b, centre x0, y0, rotation deg); modified-contrast
# variant of the classic ten-ellipse head phantom; summed values stay in [0, 1].
_HEAD_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.605, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


def _shepp_logan(n):
    X, Y = _grid(n)
    img = np.zeros((n, n))
    for value, a, b, x0, y0, deg in _HEAD_ELLIPSES:
        phi = np.radians(deg)
        xr = (X - x0) * np.cos(phi) + (Y - y0) * np.sin(phi)
        yr = -(X - x0) * np.sin(phi) + (Y - y0) * np.cos(phi)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += value
    return img


# Gaussian bump inside a disk: centre, disk radius, amplitude, 2 sigma^2, base
BUMP_DISKS = (
    ((-0.35, -0.30), 0.38, 0.45, 0.18, 0.0),
    ((0.55, -0.55), 0.30, 0.30, 0.04, 0.10),
)
BUMP_ELLIPSE = ((0.40, 0.45), (0.45, 0.25), 0.12, 0.25)  # centre, semi-axes, base, dome
BUMP_BACKGROUND = ((-0.30, 0.20), 0.50, 0.20, 0.15)      # centre, tau (=2 sigma^2), base, amplitude


def smooth_bump_value(x, y):
    """Scalar closed form of the smooth_bumps phantom (before clipping).

    Kept separate so tests can differentiate the pieces analytically.
    """
    (bx, by), btau, bbase, bamp = BUMP_BACKGROUND
    value = bbase + bamp * math.exp(-((x - bx) ** 2 + (y - by) ** 2) / btau)
    for (cx, cy), radius, amp, tau, base in BUMP_DISKS:
        rsq = (x - cx) ** 2 + (y - cy) ** 2
        if rsq <= radius**2:
            value += base + amp * math.exp(-rsq / tau)
    (ex, ey), (ea, eb), ebase, edome = BUMP_ELLIPSE
    q = ((x - ex) / ea) ** 2 + ((y - ey) / eb) ** 2
    if q <= 1.0:
        value += ebase + edome * (1.0 - q)
    return value


def _smooth_bumps(n):
    X, Y = _grid(n)
    (bx, by), btau, bbase, bamp = BUMP_BACKGROUND
    img = bbase + bamp * np.exp(-((X - bx) ** 2 + (Y - by) ** 2) / btau)
    for (cx, cy), radius, amp, tau, base in BUMP_DISKS:
        rsq = (X - cx) ** 2 + (Y - cy) ** 2
        img += np.where(rsq <= radius**2, base + amp * np.exp(-rsq / tau), 0.0)
    (ex, ey), (ea, eb), ebase, edome = BUMP_ELLIPSE
    q = ((X - ex) / ea) ** 2 + ((Y - ey) / eb) ** 2
    img += np.where(q <= 1.0, ebase + edome * (1.0 - q), 0.0)
    return img


# Oriented sinusoidal patches over a smooth dome: each patch carries its own
# plateau offset so the region boundary is a genuine intensity edge.
_TEXTURE_PATCHES = (
    ("rect", (-0.75, -0.10, -0.60, 0.10), 0.12, 0.15, 4.0, 30.0),
    ("disk", (0.45, -0.35, 0.30), -0.15, 0.15, 5.0, 115.0),
    ("rect", (0.15, 0.80, 0.30, 0.80), 0.10, 0.12, 3.5, 75.0),
)


def _textured(n):
    X, Y = _grid(n)
    img = 0.35 + 0.2 * np.exp(-(X**2 + Y**2) / 0.8)
    for kind, geom, offset, amp, cycles, deg in _TEXTURE_PATCHES:
        if kind == "rect":
            x0, x1, y0, y1 = geom
            inside = (X > x0) & (X < x1) & (Y > y0) & (Y < y1)
        else:
            cx, cy, radius = geom
            inside = (X - cx) ** 2 + (Y - cy) ** 2 < radius**2
        angle = np.radians(deg)
        wave = np.sin(2.0 * np.pi * cycles * (X * np.cos(angle) + Y * np.sin(angle)))
        img += np.where(inside, offset + amp * wave, 0.0)
    return img


def phantom(kind, n):
    """Deterministic [0, 1] test image of the requested kind and size (n >= 32)."""
    if kind not in PHANTOM_KINDS:
        raise ValueError(f"unknown phantom kind {kind!r}; choose from {PHANTOM_KINDS}")
    if n < 32:
        raise ValueError(f"phantom size must be at least 32, got {n}")
    builder = {"shepp_logan": _shepp_logan, "smooth_bumps": _smooth_bumps, "textured": _textured}
    return np.clip(builder[kind](n), 0.0, 1.0)
