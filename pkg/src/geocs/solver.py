"""Two-stage split-Bregman reconstruction from partial Fourier data.

Stage I solves the TV + subband-l1 + least-squares model by alternating
shrinkage on the split variables, a closed-form Fourier-domain image update,
and dual (Bregman multiplier) ascent.  Stage II restarts from the Stage I
state with per-pixel TV weights built from the current gradient and
re-derives the weights after every converged inner solve.

Conventions fixed here (documented because the literature is ambiguous):

* Dual steps are the scaled form ``v <- v + gamma (D u - r)``; the
  multipliers enter shrink inputs and the image-update numerator unscaled.
* The iterate stays complex all the way through; the real part is clamped to
  [0, 1] only when an image is finally handed back (:func:`realize`).
* The stopping rule is relative: ``norm(u_new - u) / max(norm(u), 1) <= tol``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .prox import WeightField, build_weights, shrink
from .sampling import zero_filled_spectrum
from .shearlet import ShearletSystem
from .spectral import HORIZONTAL, VERTICAL, diff_symbol, forward_fft, inverse_fft

GAMMA_MAX = (np.sqrt(5.0) + 1.0) / 2.0


class DivergenceError(RuntimeError):
    """An iterate became non-finite; carries the name of the offending array."""

    def __init__(self, iterate, iteration):
        super().__init__(f"non-finite values in iterate {iterate!r} at iteration {iteration}")
        self.iterate = iterate
        self.iteration = iteration


@dataclass
class SolverParams:
    """Model and iteration parameters.

    beta / lam weight the TV and subband terms; mu / tau are the quadratic
    penalty parameters entering the shrink thresholds (1/mu, 1/tau); gamma is
    the dual step, convergent for 0 < gamma < (sqrt(5)+1)/2.
    """

    beta: float = 1e-5
    lam: float = 1e-5
    mu: float = 100.0
    tau: float = 100.0
    gamma: float = 1.0
    tol_inner: float = 1e-5
    tol_outer: float = 1e-4
    max_iter_stage1: int = 1000
    max_iter_stage2_inner: int = 10
    max_iter_stage2_outer: int = 10

    def __post_init__(self):
        validate_params(self)

    @property
    def stage2_budget(self):
        # total inner iterations allowed across all reweighting passes
        return self.max_iter_stage2_inner * self.max_iter_stage2_outer


def validate_params(params):
    """Reject parameters outside the convergence conditions.

    Requires mu, tau > 0 and 0 < gamma < (sqrt(5)+1)/2; beta, lam >= 0;
    positive tolerances and iteration caps.  Emits a non-fatal warning for
    gamma below 1, which converges but is empirically slower.
    """
    if params.beta < 0 or params.lam < 0:
        raise ValueError(f"beta and lam must be nonnegative, got {params.beta}, {params.lam}")
    if params.mu <= 0 or params.tau <= 0:
        raise ValueError(f"mu and tau must be positive, got {params.mu}, {params.tau}")
    if not 0 < params.gamma < GAMMA_MAX:
        raise ValueError(
            f"gamma must lie in (0, {GAMMA_MAX:.6f}) for convergence, got {params.gamma}"
        )
    if params.gamma < 1:
        warnings.warn(
            f"gamma={params.gamma} is below the empirically fast range [1, {GAMMA_MAX:.3f}]",
            stacklevel=2,
        )
    if params.tol_inner <= 0 or params.tol_outer <= 0:
        raise ValueError("tolerances must be positive")
    if min(params.max_iter_stage1, params.max_iter_stage2_inner, params.max_iter_stage2_outer) < 1:
        raise ValueError("iteration caps must be at least 1")
    return params


@dataclass
class SolverState:
    """Full iterate: image, split variables and their multipliers.

    The two TV splits and the N subband splits are stacked along the first
    axis of `splits` / `duals` in the order [r1, r2, s_1 ... s_N]; the named
    views below unpack them.
    """

    u: np.ndarray
    splits: np.ndarray
    duals: np.ndarray
    iterations: int = 0
    last_delta: float = field(default=np.inf)

    @property
    def r1(self):
        return self.splits[0]

    @property
    def r2(self):
        return self.splits[1]

    @property
    def s(self):
        return self.splits[2:]

    @property
    def v1(self):
        return self.duals[0]

    @property
    def v2(self):
        return self.duals[1]

    @property
    def t(self):
        return self.duals[2:]


def zero_state(n, nbands):
    """All-zero Stage I initialization."""
    return SolverState(
        u=np.zeros((n, n), dtype=complex),
        splits=np.zeros((nbands + 2, n, n), dtype=complex),
        duals=np.zeros((nbands + 2, n, n), dtype=complex),
    )


@dataclass(frozen=True)
class Precomputed:
    """Frequency-domain tables fixed for a (mask bank, sampling mask, params) triple.

    `symbols` stacks the forward symbols [d1, d2, H_1 ... H_N]; `adjoints`
    the penalty-weighted adjoint symbols [beta mu conj(d1), beta mu conj(d2),
    lam tau H_i]; `denom` is the image-update denominator
    beta mu sum|d_i|^2 + lam tau sum H_i^2 + P on the frequency grid.
    """

    symbols: np.ndarray
    adjoints: np.ndarray
    denom: np.ndarray
    keep: np.ndarray

    @property
    def n(self):
        return self.denom.shape[0]

    @property
    def nbands(self):
        return self.symbols.shape[0] - 2


def precompute(masks, keep, params):
    """Build the frequency tables; `masks` is a ShearletSystem or an (N, n, n)
    array of real nonnegative frequency masks."""
    if isinstance(masks, ShearletSystem):
        masks = masks.masks
    masks = np.asarray(masks, dtype=float)
    n = masks.shape[-1]
    if masks.ndim != 3 or masks.shape[1] != n:
        raise ValueError(f"expected an (N, n, n) mask stack, got shape {masks.shape}")
    if keep.shape != (n, n):
        raise ValueError(f"sampling mask shape {keep.shape} does not match grid size {n}")
    d1 = diff_symbol(n, HORIZONTAL).symbol
    d2 = diff_symbol(n, VERTICAL).symbol
    symbols = np.concatenate([d1[None], d2[None], masks.astype(complex)])
    adjoints = np.concatenate(
        [
            params.beta * params.mu * np.conj(d1)[None],
            params.beta * params.mu * np.conj(d2)[None],
            params.lam * params.tau * masks.astype(complex),
        ]
    )
    denom = (
        params.beta * params.mu * (np.abs(d1) ** 2 + np.abs(d2) ** 2)
        + params.lam * params.tau * (masks**2).sum(axis=0)
        + keep
    )
    if np.any(denom < 0):
        raise AssertionError("image-update denominator has negative entries")
    return Precomputed(symbols=symbols, adjoints=adjoints, denom=denom, keep=keep)


def u_update(state, pre, params, b_spec, debug=False):
    """Closed-form minimizer of the quadratic subproblem in the image.

    Solves the normal equation
    ``beta mu sum_i D_i^T(D_i u - r_i + v_i) + lam tau sum_i M_i^*(M_i u - s_i + t_i)
    + (PF)^*(PF u - b) = 0``
    by one pointwise division in the frequency domain (0/0 treated as 0).
    With ``debug`` the solve is verified against its own normal equation.
    """
    split_spectra = np.fft.fft2(state.splits - state.duals, norm="ortho", axes=(-2, -1))
    numerator = (pre.adjoints * split_spectra).sum(axis=0) + b_spec
    positive = pre.denom > 0
    quotient = np.divide(numerator, pre.denom, out=np.zeros_like(numerator), where=positive)
    if debug:
        residual = np.abs(numerator - pre.denom * quotient).max()
        scale = max(float(np.abs(numerator).max()), 1.0)
        if residual > 1e-8 * scale:
            raise AssertionError(f"image update failed its normal equation ({residual:.3e})")
    return inverse_fft(quotient)


def _transforms(u, pre):
    """Apply all split operators to u at once: returns ([D1 u, D2 u, SH(u)...], fft(u))."""
    spectrum = forward_fft(u)
    stack = np.fft.ifft2(pre.symbols * spectrum[None], norm="ortho", axes=(-2, -1))
    return stack, spectrum


def _objective(transformed, spectrum, thresholds, params, b_spec, keep):
    # beta sum w.|D_i u|_1 + lam sum |SH_i u|_1 + 1/2 |PFu - b|^2;
    # thresholds encode the TV weights as w_i / mu.
    tv = params.beta * params.mu * float(
        (thresholds[0] * np.abs(transformed[0])).sum()
        + (thresholds[1] * np.abs(transformed[1])).sum()
    )
    sub = params.lam * float(np.abs(transformed[2:]).sum())
    data = 0.5 * float(np.sum(np.abs(spectrum[keep] - b_spec[keep]) ** 2))
    return tv + sub + data


def _check_finite(state, transformed, iteration):
    for name, arr in (("u", state.u), ("splits", state.splits),
                      ("duals", state.duals), ("transforms", transformed)):
        if not np.all(np.isfinite(arr)):
            raise DivergenceError(name, iteration)


def _iterate(state, pre, b_spec, thresholds, params, tol, max_iter, callback=None,
             debug=False):
    """Run the shared split-Bregman loop in place on `state`.

    `thresholds` is an (N+2, ...) stack of shrink thresholds broadcastable
    against the split stack (TV entries may be full per-pixel weight grids).
    With `debug`, every 50th image update is checked against its normal
    equation.  Returns the number of iterations performed.
    """
    transformed, _ = _transforms(state.u, pre)
    done = 0
    for iteration in range(1, max_iter + 1):
        state.splits = shrink(transformed + state.duals, thresholds)
        u_new = u_update(state, pre, params, b_spec,
                         debug=debug and iteration % 50 == 0)
        transformed, spectrum = _transforms(u_new, pre)
        state.duals = state.duals + params.gamma * (transformed - state.splits)
        delta = np.linalg.norm(u_new - state.u) / max(np.linalg.norm(state.u), 1.0)
        state.u = u_new
        state.iterations += 1
        state.last_delta = delta
        done = iteration
        if not np.isfinite(delta) or not np.all(np.isfinite(u_new)):
            _check_finite(state, transformed, state.iterations)
            raise DivergenceError("u", state.iterations)
        if callback is not None:
            callback(
                state.iterations,
                delta,
                _objective(transformed, spectrum, thresholds, params, b_spec, pre.keep),
            )
        if delta <= tol:
            break
    return done


def _threshold_stack(params, nbands, weights=None):
    if weights is None:
        tv1 = tv2 = np.full((1, 1), 1.0 / params.mu)
    else:
        tv1 = np.asarray(weights.w1) / params.mu
        tv2 = np.asarray(weights.w2) / params.mu
    shape = np.broadcast_shapes(tv1.shape, tv2.shape, (1, 1))
    tv1 = np.broadcast_to(tv1, shape)
    tv2 = np.broadcast_to(tv2, shape)
    sub = np.broadcast_to(np.full((1, 1), 1.0 / params.tau), shape)
    return np.concatenate([tv1[None], tv2[None], np.repeat(sub[None], nbands, axis=0)])


def realize(u):
    """Final image realization: real part clamped to [0, 1]."""
    return np.clip(np.real(u), 0.0, 1.0)


def stage1(meas, params, system, state=None, callback=None, debug=False):
    """Unweighted first-stage solve from a zero (or supplied) start.

    Iterates TV-shrink (threshold 1/mu), subband-shrink (1/tau), the
    closed-form image update, and dual ascent with step gamma until the
    relative image change drops below `tol_inner` or `max_iter_stage1` is
    hit.  Returns (realized image, state); the state warm-starts Stage II.
    """
    pre = precompute(system, meas.mask.keep, params)
    if state is None:
        state = zero_state(pre.n, pre.nbands)
    b_spec = zero_filled_spectrum(meas)
    thresholds = _threshold_stack(params, pre.nbands)
    _iterate(state, pre, b_spec, thresholds, params, params.tol_inner,
             params.max_iter_stage1, callback, debug)
    return realize(state.u), state


def stage2_inner(state, weights, meas, params, system, max_iter=None, callback=None,
                 debug=False):
    """One weighted pass: identical loop to stage1 except the TV shrink
    threshold is the per-pixel field w_i / mu.  Mutates and returns `state`."""
    pre = precompute(system, meas.mask.keep, params)
    b_spec = zero_filled_spectrum(meas)
    thresholds = _threshold_stack(params, pre.nbands, weights)
    if max_iter is None:
        max_iter = params.max_iter_stage2_inner
    _iterate(state, pre, b_spec, thresholds, params, params.tol_inner, max_iter, callback,
             debug)
    return realize(state.u), state


def stage2(state, meas, params, system, edge_stop, callback=None):
    """Reweighting loop: alternate weight construction from the current
    iterate with weighted inner solves, warm-starting from the Stage I state.

    Stops when the relative change between consecutive outer iterates falls
    below `tol_outer`, after `max_iter_stage2_outer` passes, or when the
    total inner-iteration budget (inner cap times outer cap) is exhausted.
    """
    budget = params.stage2_budget
    start_iterations = state.iterations
    for _ in range(params.max_iter_stage2_outer):
        weights = build_weights(state.u, edge_stop)
        u_prev = state.u
        _, state = stage2_inner(
            state, weights, meas, params, system,
            max_iter=min(params.max_iter_stage2_inner, budget), callback=callback,
        )
        budget = params.stage2_budget - (state.iterations - start_iterations)
        outer_delta = np.linalg.norm(state.u - u_prev) / max(np.linalg.norm(u_prev), 1.0)
        if outer_delta <= params.tol_outer or budget <= 0:
            break
    return realize(state.u), state
