"""Batch experiment harness: simulate partial Fourier sampling, reconstruct,
evaluate, and sweep parameter grids from the command line.

Subcommands: mask, simulate, reconstruct, sweep, shearlet-dump, metrics.
Configuration comes from a flat ``key = value`` text file plus ``--set``
overrides on the command line.  Exit codes: 0 ok, 2 usage, 3 data format,
4 divergence.

Noise convention: ``sigma`` values are nominal (unnormalized-DFT scale) and
are divided by the grid side before being added on the unitary grid; the
resulting measurement SNR is printed so runs are self-describing.
"""

import argparse
import concurrent.futures
import hashlib
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import imageio
from .metrics import (
    PHANTOM_KINDS,
    QUALITY_CSV_HEADER,
    phantom,
    quality_report,
    relerr,
    relerr_ratio,
    snr,
)
from .prox import EDGE_STOP_KINDS, EdgeStopFn, build_weights
from .sampling import (
    FormatError,
    add_noise,
    load_mask,
    load_measurement,
    radial_mask,
    sample,
    save_mask,
    save_measurement,
)
from .shearlet import analyze, build_system
from .solver import DivergenceError, SolverParams, stage1, stage2

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_DIVERGED = 4

CONFIG_DEFAULTS = {
    "phantom": "shepp_logan",
    "image": "",
    "n": "128",
    "lines": "10",
    "sigma": "0",
    "seed": "0",
    "beta": "1e-5",
    "lambda": "1e-5",
    "mu": "100",
    "tau": "100",
    "gamma": "1",
    "tol_inner": "1e-5",
    "tol_outer": "1e-4",
    "max_iter_stage1": "1000",
    "max_iter_stage2_inner": "10",
    "max_iter_stage2_outer": "10",
    "scales": "3",
    "directions": "4",
    "edge_stop": "tukey",
    "h": "0.5",
    "stages": "2",
    "outdir": ".",
}


class UsageError(Exception):
    """Invalid arguments or configuration (exit code 2)."""


@dataclass
class ExperimentConfig:
    """Validated harness configuration for reconstruct/sweep runs."""

    phantom: str
    image: str
    n: int
    lines: tuple
    sigma: tuple
    seed: int
    params: SolverParams
    scales: int
    directions: int
    edge_stop: EdgeStopFn
    stages: int
    outdir: str


def parse_config_file(path):
    """Flat key = value lines; '#' starts a comment; unknown keys rejected."""
    mapping = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key = value, got {raw!r}")
                key, value = (part.strip() for part in line.split("=", 1))
                mapping[key] = value
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    return mapping


def build_config(config_path=None, overrides=()):
    mapping = dict(CONFIG_DEFAULTS)
    if config_path:
        mapping.update(parse_config_file(config_path))
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        mapping[key.strip()] = value.strip()
    unknown = set(mapping) - set(CONFIG_DEFAULTS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        params = SolverParams(
            beta=float(mapping["beta"]),
            lam=float(mapping["lambda"]),
            mu=float(mapping["mu"]),
            tau=float(mapping["tau"]),
            gamma=float(mapping["gamma"]),
            tol_inner=float(mapping["tol_inner"]),
            tol_outer=float(mapping["tol_outer"]),
            max_iter_stage1=int(mapping["max_iter_stage1"]),
            max_iter_stage2_inner=int(mapping["max_iter_stage2_inner"]),
            max_iter_stage2_outer=int(mapping["max_iter_stage2_outer"]),
        )
        cfg = ExperimentConfig(
            phantom=mapping["phantom"],
            image=mapping["image"],
            n=int(mapping["n"]),
            lines=tuple(int(v) for v in str(mapping["lines"]).split(",") if v.strip()),
            sigma=tuple(float(v) for v in str(mapping["sigma"]).split(",") if v.strip()),
            seed=int(mapping["seed"]),
            params=params,
            scales=int(mapping["scales"]),
            directions=int(mapping["directions"]),
            edge_stop=EdgeStopFn(kind=mapping["edge_stop"], h=float(mapping["h"])),
            stages=int(mapping["stages"]),
            outdir=mapping["outdir"],
        )
    except ValueError as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    if cfg.stages not in (1, 2):
        raise UsageError(f"stages must be 1 or 2, got {cfg.stages}")
    if not cfg.image and cfg.phantom not in PHANTOM_KINDS:
        raise UsageError(f"phantom must be one of {PHANTOM_KINDS}, got {cfg.phantom!r}")
    if cfg.image and not os.path.exists(cfg.image):
        raise UsageError(f"image file does not exist: {cfg.image}")
    return cfg


def ground_truth(cfg):
    if cfg.image:
        img = imageio.load_image(cfg.image)
        if img.shape[0] != img.shape[1]:
            raise UsageError(f"{cfg.image}: reconstruction needs a square image")
        return img
    return phantom(cfg.phantom, cfg.n)


def effective_sigma(nominal, n):
    # nominal sigma follows the unnormalized-DFT scale; the unitary grid used
    # internally is smaller by a factor n
    return float(nominal) / float(n)


def _truth_from_spec(spec, n=None):
    if spec.startswith("phantom:"):
        kind = spec.split(":", 1)[1]
        if n is None:
            raise UsageError("--truth phantom:<kind> needs a known grid size")
        return phantom(kind, n)
    return imageio.load_image(spec)


# ---------------------------------------------------------------------------
# Subcommands.

def cmd_mask(args):
    mask = radial_mask(args.n, args.lines, args.seed)
    if args.out:
        save_mask(mask, args.out)
    print(f"mask n={mask.n} lines={args.lines} seed={args.seed} "
          f"rate={mask.rate:.6f} ({100 * mask.rate:.4f}%)")
    return EXIT_OK


def cmd_simulate(args):
    if (args.image is None) == (args.phantom is None):
        raise UsageError("give exactly one of --image or --phantom")
    mask = load_mask(args.mask)
    if args.image:
        img = imageio.load_image(args.image)
    else:
        img = phantom(args.phantom, mask.n)
    meas = sample(img, mask)
    clean = meas.values.copy()
    sig = effective_sigma(args.sigma, mask.n)
    meas = add_noise(meas, sig, args.seed)
    save_measurement(meas, args.out)
    line = (f"simulate n={mask.n} k={meas.k} sigma={args.sigma:g} "
            f"sigma_effective={sig:.6g} seed={args.seed}")
    if sig > 0:
        noise_power = float(np.sum(np.abs(meas.values - clean) ** 2))
        signal_power = float(np.sum(np.abs(clean) ** 2))
        line += f" measurement_snr_db={10 * np.log10(signal_power / noise_power):.2f}"
    print(line)
    print(f"wrote {args.out}")
    return EXIT_OK


def _reconstruct(meas, cfg, iter_rows=None):
    """Run stage 1 (+2) on a measurement; returns (image, state, iters1, iters2)."""
    system = build_system(meas.mask.n, cfg.scales, cfg.directions)

    def make_callback(stage_label):
        if iter_rows is None:
            return None
        return lambda it, delta, obj: iter_rows.append((stage_label, it, delta, obj))

    img, state = stage1(meas, cfg.params, system, callback=make_callback("1"))
    iters1 = state.iterations
    iters2 = 0
    if cfg.stages == 2:
        img, state = stage2(state, meas, cfg.params, system, cfg.edge_stop,
                            callback=make_callback("2"))
        iters2 = state.iterations - iters1
    return img, state, iters1, iters2


def cmd_reconstruct(args):
    cfg = build_config(args.config, args.set or [])
    if args.stages:
        cfg.stages = args.stages
    meas = load_measurement(args.measurement, args.mask)
    iter_rows = [] if args.iter_csv else None
    started = time.perf_counter()
    img, state, iters1, iters2 = _reconstruct(meas, cfg, iter_rows)
    elapsed = time.perf_counter() - started
    imageio.save_image(img, args.out)
    print(f"wrote {args.out} (stage1 iters={iters1}, stage2 iters={iters2}, "
          f"seconds={elapsed:.3f})")
    if args.iter_csv:
        with open(args.iter_csv, "w", encoding="ascii", newline="\n") as fh:
            fh.write("stage,iter,delta,objective\n")
            for stage_label, it, delta, obj in iter_rows:
                fh.write(f"{stage_label},{it},{delta:.8e},{obj:.8e}\n")
        print(f"wrote {args.iter_csv}")
    if args.dump_weights:
        os.makedirs(args.dump_weights, exist_ok=True)
        weights = build_weights(state.u, cfg.edge_stop)
        imageio.save_image(weights.w1, os.path.join(args.dump_weights, "w1.png"))
        imageio.save_image(weights.w2, os.path.join(args.dump_weights, "w2.png"))
        print(f"wrote weight fields to {args.dump_weights}")
    if args.truth:
        truth = _truth_from_spec(args.truth, meas.mask.n)
        report = quality_report(img, truth, elapsed, iters1, iters2)
        print(f"relerr_sq={report.relerr_sq:.8e} relerr={report.relerr:.8e} "
              f"snr_db={report.snr_db:.4f}")
    return EXIT_OK


def _entry_descriptor(cfg, lines, sigma):
    parts = [
        "v1",
        f"phantom={cfg.phantom if not cfg.image else ''}",
        f"image={cfg.image}",
        f"n={cfg.n}",
        f"lines={lines}",
        f"sigma={sigma:g}",
        f"seed={cfg.seed}",
        f"beta={cfg.params.beta:g}",
        f"lambda={cfg.params.lam:g}",
        f"mu={cfg.params.mu:g}",
        f"tau={cfg.params.tau:g}",
        f"gamma={cfg.params.gamma:g}",
        f"tol_inner={cfg.params.tol_inner:g}",
        f"tol_outer={cfg.params.tol_outer:g}",
        f"it1={cfg.params.max_iter_stage1}",
        f"it2i={cfg.params.max_iter_stage2_inner}",
        f"it2o={cfg.params.max_iter_stage2_outer}",
        f"scales={cfg.scales}",
        f"directions={cfg.directions}",
        f"edge_stop={cfg.edge_stop.kind}",
        f"h={cfg.edge_stop.h:g}",
        f"stages={cfg.stages}",
    ]
    return "|".join(parts)


def _run_sweep_entry(payload):
    """One sweep cell: mask, simulate, reconstruct, metric rows.

    Top-level so process pools can pickle it; `payload` holds only plain
    values.  Returns the finished CSV rows for this entry.
    """
    cfg = build_config(payload["config_path"], payload["overrides"])
    lines = payload["lines"]
    sigma = payload["sigma"]
    truth = ground_truth(cfg)
    n = truth.shape[0]
    mask = radial_mask(n, lines, cfg.seed)
    meas = add_noise(sample(truth, mask), effective_sigma(sigma, n), cfg.seed)

    started = time.perf_counter()
    system = build_system(n, cfg.scales, cfg.directions)
    img1, state = stage1(meas, cfg.params, system)
    iters1 = state.iterations
    stage_results = [("1", img1, iters1)]
    if cfg.stages == 2:
        img2, state = stage2(state, meas, cfg.params, system, cfg.edge_stop)
        stage_results.append(("2", img2, state.iterations - iters1))
    elapsed = time.perf_counter() - started

    config_id = payload["config_id"]
    seconds = elapsed if payload["timing"] else 0.0
    rows = []
    for stage_label, img, iters in stage_results:
        rows.append(
            f"{config_id},{n},{lines},{mask.rate:.6f},{sigma:g},"
            f"{cfg.params.beta:g},{cfg.params.lam:g},{stage_label},"
            f"{relerr(img, truth):.8e},{relerr_ratio(img, truth):.8e},"
            f"{snr(img, truth):.4f},{iters},{seconds:.3f}"
        )
    return rows


def _existing_config_ids(path):
    ids = set()
    if os.path.exists(path):
        with open(path, "r", encoding="ascii") as fh:
            header = fh.readline().strip()
            if header and header != QUALITY_CSV_HEADER:
                raise FormatError(f"{path}: unexpected CSV header")
            for line in fh:
                if line.strip():
                    ids.add(line.split(",", 1)[0])
    return ids


def _print_trends(path):
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        fh.readline()
        for line in fh:
            if line.strip():
                parts = line.strip().split(",")
                rows.append(
                    {
                        "lines": int(parts[2]),
                        "sigma": float(parts[4]),
                        "stage": parts[7],
                        "relerr": float(parts[9]),
                        "snr": float(parts[10]),
                    }
                )
    if not rows:
        return
    last_stage = max(row["stage"] for row in rows)
    rows = [row for row in rows if row["stage"] == last_stage]
    by_sigma = {}
    by_lines = {}
    for row in rows:
        by_sigma.setdefault(row["sigma"], []).append(row)
        by_lines.setdefault(row["lines"], []).append(row)
    for sigma, group in sorted(by_sigma.items()):
        if len(group) > 1:
            group.sort(key=lambda row: row["lines"])
            mono_err = all(a["relerr"] >= b["relerr"] - 1e-12 for a, b in zip(group, group[1:]))
            mono_snr = all(a["snr"] <= b["snr"] + 1e-12 for a, b in zip(group, group[1:]))
            print(f"trend sigma={sigma:g} stage={last_stage}: "
                  f"relerr_nonincreasing={mono_err} snr_nondecreasing={mono_snr}")
    for lines, group in sorted(by_lines.items()):
        if len(group) > 1:
            group.sort(key=lambda row: row["sigma"])
            mono = all(a["relerr"] <= b["relerr"] + 1e-12 for a, b in zip(group, group[1:]))
            print(f"trend lines={lines} stage={last_stage}: relerr_nondecreasing={mono}")


def cmd_sweep(args):
    cfg = build_config(args.config, args.set or [])
    if not cfg.lines or not cfg.sigma:
        raise UsageError("sweep needs non-empty lines and sigma lists")
    out_path = args.out or os.path.join(cfg.outdir, "sweep.csv")
    os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)

    entries = []
    for lines in cfg.lines:
        for sigma in cfg.sigma:
            descriptor = _entry_descriptor(cfg, lines, sigma)
            entries.append(
                {
                    "config_path": args.config,
                    "overrides": list(args.set or []),
                    "lines": lines,
                    "sigma": sigma,
                    "timing": bool(args.timing),
                    "config_id": hashlib.sha256(descriptor.encode()).hexdigest()[:12],
                }
            )

    done = _existing_config_ids(out_path)
    pending = [entry for entry in entries if entry["config_id"] not in done]
    skipped = len(entries) - len(pending)
    if skipped:
        print(f"skipping {skipped} already-computed entries")

    fresh = not os.path.exists(out_path) or os.path.getsize(out_path) == 0
    workers = max(1, int(os.environ.get("GEOCS_THREADS", "1")))
    workers = min(workers, max(1, len(pending)))
    with open(out_path, "a", encoding="ascii", newline="\n") as fh:
        if fresh:
            fh.write(QUALITY_CSV_HEADER + "\n")
        if workers == 1:
            for entry in pending:
                for row in _run_sweep_entry(entry):
                    fh.write(row + "\n")
                fh.flush()
        else:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_run_sweep_entry, entry) for entry in pending]
                for future in futures:  # submission order keeps the file deterministic
                    for row in future.result():
                        fh.write(row + "\n")
                    fh.flush()
    print(f"wrote {out_path} ({len(pending)} new entries, {skipped} skipped)")
    _print_trends(out_path)
    return EXIT_OK


def cmd_shearlet_dump(args):
    system = build_system(args.n, args.scales, args.directions)
    os.makedirs(args.outdir, exist_ok=True)
    for i, label in enumerate(system.labels):
        viewable = np.fft.fftshift(system.masks[i])
        imageio.save_image(viewable, os.path.join(args.outdir, f"mask_{i:02d}_{label}.png"))
    if args.image or args.phantom:
        img = imageio.load_image(args.image) if args.image else phantom(args.phantom, args.n)
        stack = analyze(system, img)
        for i, label in enumerate(system.labels):
            band = np.abs(stack.bands[i])
            peak = band.max()
            if peak > 0:
                band = band / peak
            imageio.save_image(band, os.path.join(args.outdir, f"band_{i:02d}_{label}.png"))
    deviation = np.abs((system.masks**2).sum(axis=0) - 1.0).max()
    print(f"wrote {system.nbands} masks to {args.outdir} "
          f"(partition deviation {deviation:.3e})")
    return EXIT_OK


def cmd_metrics(args):
    img = imageio.load_image(args.image)
    truth = _truth_from_spec(args.truth, img.shape[0])
    print(f"relerr_sq={relerr(img, truth):.8e} relerr={relerr_ratio(img, truth):.8e} "
          f"snr_db={snr(img, truth):.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing.

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="geocs",
        description="Two-stage shearlet + weighted-TV reconstruction from "
                    "partial radial Fourier samples.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mask", help="generate a radial sampling mask")
    p.add_argument("--n", type=int, required=True, help="grid side")
    p.add_argument("--lines", type=int, required=True, help="number of radial lines")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write PBM mask here (with .txt sidecar)")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("simulate", help="sample an image's spectrum through a mask")
    p.add_argument("--image", help="grayscale PNG/PGM ground truth")
    p.add_argument("--phantom", choices=PHANTOM_KINDS, help="analytic ground truth")
    p.add_argument("--mask", required=True, help="PBM mask from the mask subcommand")
    p.add_argument("--sigma", type=float, default=0.0, help="nominal noise std (scaled by 1/n)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output GEOCS-KSP measurement file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="run the two-stage reconstruction")
    p.add_argument("--measurement", required=True, help="GEOCS-KSP file")
    p.add_argument("--mask", help="mask file (default: <measurement>.mask.pbm)")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--stages", type=int, choices=(1, 2), help="stop after stage 1 or run both")
    p.add_argument("--out", required=True, help="output image (PNG/PGM)")
    p.add_argument("--truth", help="ground truth image path or phantom:<kind>")
    p.add_argument("--iter-csv", help="write per-iteration (stage,iter,delta,objective) rows")
    p.add_argument("--dump-weights", metavar="DIR", help="dump final weight fields as images")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("sweep", help="Cartesian lines x sigma sweep into a CSV")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--out", help="CSV path (default <outdir>/sweep.csv)")
    p.add_argument("--timing", action="store_true",
                   help="record wall time per row (breaks byte-reproducibility)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("shearlet-dump", help="dump frequency masks (and subbands) as images")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--scales", type=int, default=3)
    p.add_argument("--directions", type=int, default=4)
    p.add_argument("--image", help="optional image whose subbands to dump")
    p.add_argument("--phantom", choices=PHANTOM_KINDS, help="or an analytic phantom")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_shearlet_dump)

    p = sub.add_parser("metrics", help="compare an image against a reference")
    p.add_argument("--image", required=True)
    p.add_argument("--truth", required=True, help="image path or phantom:<kind>")
    p.set_defaults(func=cmd_metrics)

    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
