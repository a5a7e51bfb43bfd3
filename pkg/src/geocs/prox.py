"""Shrinkage (soft thresholding) and the geometric weight machinery.

The weights turn gradient magnitude into a per-pixel TV attenuation through
an edge-stopping function g: [0, inf) -> [0, 1], nonincreasing with g(0) = 1.
Four standard choices are provided; Tukey's bi-weight is the default used by
the reconstruction harness because it degrades gently over the whole range
of intensity variations instead of switching off abruptly.
"""

from dataclasses import dataclass

import numpy as np

from .spectral import HORIZONTAL, VERTICAL, diff_apply

EDGE_STOP_KINDS = ("lorentzian", "leclerc", "tukey", "weickert")


def shrink(v, delta):
    """Soft threshold: the exact minimizer of delta*|x| + (1/2)(x - v)^2.

    Works elementwise for real or complex `v` (for complex inputs the
    magnitude is shrunk and the phase kept); `delta` is a nonnegative scalar
    or grid broadcastable against `v`.
    """
    v = np.asarray(v)
    delta = np.asarray(delta)
    if np.any(delta < 0):
        raise ValueError("shrink threshold must be nonnegative")
    if np.isrealobj(v):
        return np.sign(v) * np.maximum(np.abs(v) - delta, 0.0)
    mag = np.abs(v)
    keep = np.maximum(mag - delta, 0.0)
    return v * np.divide(keep, mag, out=np.zeros_like(mag), where=mag > 0)


@dataclass(frozen=True)
class EdgeStopFn:
    """Edge-stopping function of a given kind with scale parameter h > 0."""

    kind: str
    h: float = 0.5

    def __post_init__(self):
        if self.kind not in EDGE_STOP_KINDS:
            raise ValueError(f"unknown edge-stop kind {self.kind!r}; choose from {EDGE_STOP_KINDS}")
        if not self.h > 0:
            raise ValueError(f"edge-stop scale h must be positive, got {self.h}")


def edge_stop_eval(fn, x):
    """Evaluate the edge-stopping function elementwise on x >= 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("edge-stop argument must be nonnegative")
    h = fn.h
    if fn.kind == "lorentzian":
        return 1.0 / (1.0 + x**2 / h**2)
    if fn.kind == "leclerc":
        return np.exp(-(x**2) / h**2)
    if fn.kind == "tukey":
        cutoff = np.sqrt(5.0) * h
        return np.where(x < cutoff, (1.0 - x**2 / (5.0 * h**2)) ** 2, 0.0)
    # weickert: 1 - exp(-3.31488 h^8 / x^8), extended by 1 at x = 0
    with np.errstate(divide="ignore"):
        ratio = np.divide(h**8, x**8, out=np.full_like(x, np.inf), where=x > 0)
    return np.where(x > 0, 1.0 - np.exp(-3.31488 * ratio), 1.0)


@dataclass(frozen=True)
class WeightField:
    """Per-axis TV weights in [0, 1]; 1 wherever the reference gradient vanishes."""

    w1: np.ndarray
    w2: np.ndarray


def build_weights(u_ref, fn):
    """Weights from the reference image: w_i = g(|D_i u_ref|) per axis.

    `u_ref` may be complex (a solver iterate); the modulus of the complex
    difference is used.
    """
    w1 = edge_stop_eval(fn, np.abs(diff_apply(u_ref, HORIZONTAL)))
    w2 = edge_stop_eval(fn, np.abs(diff_apply(u_ref, VERTICAL)))
    return WeightField(w1=w1, w2=w2)
