"""Measurement simulation: radial k-space masks, the partial Fourier operator
and its adjoint, complex Gaussian noise, and the on-disk formats for masks
(PBM + text sidecar) and k-space measurements (GEOCS-KSP).

The sampling mask lives in the same fftshift-free layout as every spectrum in
this package (DC at index [0, 0]); on disk it is stored centred so the radial
pattern is visible in an image viewer.
"""

import os
from dataclasses import dataclass, replace

import numpy as np

from .spectral import forward_fft, inverse_fft

KSP_MAGIC = "GEOCS-KSP"
KSP_HEADER_LEN = 64


class FormatError(Exception):
    """A data file does not conform to its declared format."""


@dataclass(frozen=True)
class SamplingMask:
    """Boolean k-space selection pattern; True = sampled.

    ``keep`` uses the fft layout (DC at [0, 0]) and always samples DC -
    without it the mean intensity would be unobservable.
    """

    keep: np.ndarray
    lines: int | None = None
    seed: int | None = None

    @property
    def n(self):
        return self.keep.shape[0]

    @property
    def count(self):
        return int(self.keep.sum())

    @property
    def rate(self):
        return self.count / self.keep.size


@dataclass(frozen=True)
class Measurement:
    """Sampled k-space values (row-major order of the kept grid entries)."""

    values: np.ndarray
    mask: SamplingMask
    sigma: float = 0.0
    seed: int | None = None

    @property
    def k(self):
        return self.values.shape[0]


def radial_mask(n, lines, seed=0):
    """Rasterize `lines` equispaced rays through DC onto the n-by-n grid.

    A frequency is kept when its perpendicular distance to some ray is below
    half a pixel.  Angles are theta_j = (j + offset) * pi / lines where the
    offset is a deterministic function of `seed` (zero for seed 0), so the
    fan stays equispaced and the canonical seed reproduces the reference
    sampling rates.
    """
    if n < 2:
        raise ValueError(f"grid side must be at least 2, got {n}")
    if not 1 <= lines <= 2 * n:
        raise ValueError(f"lines must be in [1, {2 * n}], got {lines}")
    offset = 0.0
    if seed:
        offset = float(np.random.default_rng(seed).uniform(0.0, 1.0))
    centre = n // 2
    coords = np.arange(n) - centre
    x = coords[None, :]
    y = coords[:, None]
    keep = np.zeros((n, n), dtype=bool)
    for j in range(lines):
        theta = (j + offset) * np.pi / lines
        keep |= np.abs(x * np.sin(theta) - y * np.cos(theta)) < 0.5
    keep = np.fft.ifftshift(keep)
    keep[0, 0] = True
    return SamplingMask(keep=keep, lines=lines, seed=seed)


def sample(img, mask):
    """Partial Fourier measurement: the unitary spectrum restricted to the mask."""
    img = np.asarray(img)
    if img.shape != mask.keep.shape:
        raise ValueError(f"image shape {img.shape} does not match mask {mask.keep.shape}")
    values = forward_fft(img)[mask.keep]
    return Measurement(values=values, mask=mask, sigma=0.0, seed=None)


def add_noise(meas, sigma, seed=0):
    """Add zero-mean complex Gaussian noise of standard deviation `sigma`.

    Each sample receives sigma * (g1 + i g2) / sqrt(2) with g1, g2 iid
    standard normal drawn from a generator seeded by `seed`, so E|noise|^2
    equals sigma^2 and the same seed reproduces the same measurement.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return replace(meas, sigma=0.0, seed=seed)
    rng = np.random.default_rng(seed)
    noise = (rng.standard_normal(meas.k) + 1j * rng.standard_normal(meas.k)) / np.sqrt(2.0)
    return replace(meas, values=meas.values + sigma * noise, sigma=float(sigma), seed=seed)


def zero_filled_spectrum(meas):
    """The measurement embedded on the full grid, zeros where unsampled."""
    grid = np.zeros(meas.mask.keep.shape, dtype=complex)
    grid[meas.mask.keep] = meas.values
    return grid


def adjoint_sample(meas):
    """Adjoint of :func:`sample`: zero-fill, then inverse unitary DFT.

    Returns a complex image; with a full mask it inverts `sample` exactly.
    """
    return inverse_fft(zero_filled_spectrum(meas))


# ---------------------------------------------------------------------------
# Mask files: binary PBM (sampled = 1) in centred layout + text sidecar.

def save_mask(mask, path):
    """Write a P4 bitmap of the centred mask plus a `<path>.txt` sidecar."""
    centred = np.fft.fftshift(mask.keep)
    n = mask.n
    with open(path, "wb") as fh:
        fh.write(f"P4\n{n} {n}\n".encode("ascii"))
        fh.write(np.packbits(centred.astype(np.uint8), axis=1).tobytes())
    with open(str(path) + ".txt", "w", encoding="ascii") as fh:
        fh.write(f"n = {n}\n")
        fh.write(f"lines = {mask.lines if mask.lines is not None else ''}\n")
        fh.write(f"rate = {mask.rate:.6f}\n")
        fh.write(f"seed = {mask.seed if mask.seed is not None else ''}\n")


def _read_pbm_tokens(data, count):
    # PBM headers are whitespace-separated tokens with '#' comments.
    tokens = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(data):
            raise FormatError("truncated PBM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    return tokens, pos + 1  # consume the single whitespace after the last token


def load_mask(path):
    """Read a mask written by :func:`save_mask` (P4 or P1 bitmaps accepted)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] not in (b"P4", b"P1"):
        raise FormatError(f"{path}: not a PBM bitmap")
    (magic, w, h), offset = _read_pbm_tokens(data, 3)
    try:
        w, h = int(w), int(h)
    except ValueError as exc:
        raise FormatError(f"{path}: bad PBM dimensions") from exc
    if w != h or w < 2:
        raise FormatError(f"{path}: mask must be square, got {w}x{h}")
    if magic == b"P4":
        row_bytes = (w + 7) // 8
        raw = np.frombuffer(data[offset : offset + h * row_bytes], dtype=np.uint8)
        if raw.size != h * row_bytes:
            raise FormatError(f"{path}: truncated PBM payload")
        bits = np.unpackbits(raw.reshape(h, row_bytes), axis=1)[:, :w]
    else:
        digits = [b for token in data[offset:].split() for b in token]
        if len(digits) < w * h:
            raise FormatError(f"{path}: truncated PBM payload")
        bits = np.array(digits[: w * h], dtype=np.uint8).reshape(h, w) - ord("0")
    keep = np.fft.ifftshift(bits.astype(bool))
    keep[0, 0] = True
    lines = seed = None
    sidecar = str(path) + ".txt"
    if os.path.exists(sidecar):
        meta = _parse_keyvalues(sidecar)
        lines = _maybe_int(meta.get("lines"))
        seed = _maybe_int(meta.get("seed"))
    return SamplingMask(keep=keep, lines=lines, seed=seed)


def _parse_keyvalues(path):
    out = {}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line and "=" in line:
                key, value = line.split("=", 1)
                out[key.strip()] = value.strip()
    return out


def _maybe_int(text):
    try:
        return int(text)
    except (TypeError, ValueError):
        return None


# ---------------------------------------------------------------------------
# Measurement files: 64-byte ASCII header + little-endian float32 (re, im).

def _ksp_header(n, k, sigma, seed):
    text = f"{KSP_MAGIC} n={n:05d} k={k:08d} sigma={sigma:.6e} seed={seed:010d}"
    if len(text) >= KSP_HEADER_LEN:
        raise ValueError("measurement header overflow")
    return text.ljust(KSP_HEADER_LEN - 1).encode("ascii") + b"\n"


def save_measurement(meas, path, write_mask=True):
    """Write a GEOCS-KSP file; by default also drops `<path>.mask.pbm`.

    The 64-byte header is followed by k interleaved (re, im) float32 pairs,
    little-endian, in row-major order of the kept grid entries.
    """
    seed = meas.seed if meas.seed is not None else 0
    payload = np.empty((meas.k, 2), dtype="<f4")
    payload[:, 0] = meas.values.real
    payload[:, 1] = meas.values.imag
    with open(path, "wb") as fh:
        fh.write(_ksp_header(meas.mask.n, meas.k, meas.sigma, seed))
        fh.write(payload.tobytes())
    if write_mask:
        save_mask(meas.mask, str(path) + ".mask.pbm")


def load_measurement(path, mask=None):
    """Read a GEOCS-KSP file; the mask comes from `mask` (a SamplingMask or a
    path) or from the `<path>.mask.pbm` sidecar written by save_measurement."""
    with open(path, "rb") as fh:
        header = fh.read(KSP_HEADER_LEN)
        body = fh.read()
    if len(header) < KSP_HEADER_LEN or not header.startswith(KSP_MAGIC.encode("ascii")):
        raise FormatError(f"{path}: missing {KSP_MAGIC} header")
    fields = {}
    try:
        for token in header.decode("ascii").split()[1:]:
            key, value = token.split("=", 1)
            fields[key] = value
        n = int(fields["n"])
        k = int(fields["k"])
        sigma = float(fields["sigma"])
        seed = int(fields["seed"])
    except (KeyError, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: malformed {KSP_MAGIC} header") from exc
    if len(body) != 8 * k:
        raise FormatError(f"{path}: expected {8 * k} payload bytes, found {len(body)}")
    pairs = np.frombuffer(body, dtype="<f4").reshape(k, 2).astype(np.float64)
    values = pairs[:, 0] + 1j * pairs[:, 1]
    if mask is None:
        sidecar = str(path) + ".mask.pbm"
        if not os.path.exists(sidecar):
            raise FormatError(f"{path}: no mask given and {sidecar} not found")
        mask = load_mask(sidecar)
    elif not isinstance(mask, SamplingMask):
        mask = load_mask(mask)
    if mask.n != n:
        raise FormatError(f"{path}: header n={n} does not match mask size {mask.n}")
    if mask.count != k:
        raise FormatError(f"{path}: header k={k} does not match mask count {mask.count}")
    return Measurement(values=values, mask=mask, sigma=sigma, seed=seed)
