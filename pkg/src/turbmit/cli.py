"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import ConfigurationError, NumericalError

log = logging.getLogger("turbmit")


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v]


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v]


def _write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _cfg(args) -> dict:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.defaults()
    if args.seed is not None:
        cfg["pipeline"]["seed"] = args.seed
    return cfg


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> None:
    from .imageio import read_image, write_image, write_stack
    from .pipeline import load_scene, simulate_frames

    cfg = _cfg(args)
    if args.frames is not None:
        cfg["pipeline"]["frames"] = args.frames
    if args.d_over_r0 is not None:
        cfg["turbulence"]["d_over_r0"] = args.d_over_r0
    x = read_image(args.image) if args.image else load_scene(cfg)
    frames = simulate_frames(x, cfg, cfg["pipeline"]["seed"])
    write_stack(args.out, frames)
    write_image(Path(args.out) / "truth.png", x)
    log.info("wrote %d frames to %s", len(frames), args.out)


def cmd_reference(args) -> None:
    from .imageio import read_stack, write_image
    from .reference import NlConfig, build_reference

    frames = read_stack(args.input)
    T = args.frames or len(frames)
    ref = build_reference(frames, NlConfig(args.patch, args.window, T, args.beta))
    write_image(args.out, ref)
    np.save(Path(args.out).with_suffix(".npy"), ref)


def cmd_fuse(args) -> None:
    from .fusion import block_flow, lucky_fuse
    from .imageio import read_image, read_stack, write_image

    frames = read_stack(args.input)
    ref_path = Path(args.ref)
    ref = np.load(ref_path.with_suffix(".npy")) if ref_path.with_suffix(".npy").exists() else read_image(ref_path)
    warped = np.stack([block_flow(f, ref, args.block, args.radius)[0] for f in frames])
    fused = lucky_fuse(warped, ref, args.tile, args.temperature)
    write_image(args.out, fused)
    np.save(Path(args.out).with_suffix(".npy"), fused)


def cmd_train_basis(args) -> None:
    from .deconv import estimate_prior, generate_psf_corpus, save_basis, train_basis
    from .pipeline import optical_config, turbulence_params

    cfg = _cfg(args)
    if args.corpus:
        src = Path(args.corpus)
        if src.is_dir():
            src = src / "corpus.npy"
        if not src.exists():
            raise ConfigurationError(f"{src}: corpus not found")
        psfs = np.load(src)
    else:
        tp = turbulence_params(cfg, cfg["pipeline"]["seed"])
        corpus = generate_psf_corpus(args.generate, (args.cn2_lo, args.cn2_hi), tp, optical_config(cfg),
                                     seed=cfg["pipeline"]["seed"])
        psfs = corpus.psfs
        if args.save_corpus:
            Path(args.save_corpus).parent.mkdir(parents=True, exist_ok=True)
            np.save(args.save_corpus, psfs)
    basis = train_basis(psfs, args.m)
    prior = estimate_prior(psfs, basis, args.tau, min(len(psfs), args.trials) if args.trials else None)
    save_basis(args.out, basis.with_scales(prior.d))
    log.info("explained variance %s", np.round(basis.explained, 4).tolist())


def cmd_deconv(args) -> None:
    from .deconv import DeconvConfig, blind_deconv, load_basis
    from .imageio import read_image, write_image

    y = read_image(args.input)
    basis = load_basis(args.basis)
    res = blind_deconv(y, basis, DeconvConfig(lam=args.lam, gamma=args.gamma, iters=args.iters,
                                              scales=args.scales))
    write_image(args.out, res.z)
    stem = Path(args.out).with_suffix("")
    np.save(f"{stem}.npy", res.z)
    np.save(f"{stem}_psf.npy", res.h)


def cmd_pipeline(args) -> None:
    from .pipeline import run_pipeline

    if not args.config:
        raise ConfigurationError("pipeline needs --config")
    cfg = cfgmod.load(args.config)
    res = run_pipeline(cfg, args.out, seed=args.seed, verify=args.verify)
    for k, v in sorted(res.metrics["psnr"].items()):
        print(f"{k:>18s}  {v:8.3f} dB")


def cmd_theory(args) -> None:
    from . import theory as th

    if args.what == "scan-variance":
        k = th.SmoothingKernel.gaussian() if args.kernel == "gaussian" else th.SmoothingKernel.boxcar()
        h = th.ShortPsf1D(k, args.nu)
        sig = np.logspace(math.log10(args.sigma_min), math.log10(args.sigma_max), args.points)
        c = th.variance_peak_scan(h, sig)
        _write_csv(args.out, ["sigma", "sup_v", "argmax_x"], zip(c.sigma, c.sup_v, c.argmax_x))
        print(f"peak sigma {c.peak_sigma:.6g}  sup V {c.sup_v.max():.6g}  unimodal {c.unimodal}")
    elif args.what == "bernstein":
        h = th.ShortPsf1D(th.SmoothingKernel.gaussian(), args.nu)
        s = th.ShiftModel(args.sigma)
        sup_v, _ = th.sup_variance(h, s)
        rows = []
        for T in args.T:
            emp = th.monte_carlo_deviation(h, s, T, args.eps, args.x, args.trials, args.seed or 0)
            rows.append((T, emp, th.bernstein_bound(args.eps, T, sup_v, h.kernel.M, args.nu)))
        _write_csv(args.out, ["T", "empirical", "bound"], rows)
    elif args.what == "boxcar":
        chk = th.boxcar_increasing_check(args.nu)
        sig = np.linspace(0.0, args.sigma_max if args.sigma_max != 20.0 else 3 * args.nu, args.points)
        _write_csv(args.out, ["sigma", "v0"], zip(sig, th.boxcar_v0(args.nu, sig)))
        print(f"boundary {chk.boundary:.10g}  increasing below it: {chk.increasing}")
    elif args.what == "calibrate-beta":
        setup = th.CalibrationSetup(base_seed=args.seed or 0)
        rows = []
        for r in args.ratios:
            c = th.calibrate_beta(r, args.eps, args.trials, setup)
            rows.append((r, c.beta, c.std))
        _write_csv(args.out, ["d_over_r0", "beta_mean", "beta_std"], rows)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", default=None, help="INI configuration file")
    common.add_argument("--out", required=True)
    common.add_argument("--verify", action="store_true", help="check stage invariants")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="turbmit", description="Turbulence simulation and restoration.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a turbulent frame sequence")
    p.add_argument("--image", default=None, help="ground-truth image (default: [pipeline] image)")
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--d-over-r0", type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reference", parents=[common], help="non-local reference frame")
    p.add_argument("--in", dest="input", required=True, help="frame directory")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--window", type=int, default=5, help="spatial search side L")
    p.add_argument("--frames", type=int, default=0, help="temporal window T (0 = all)")
    p.add_argument("--patch", type=int, default=7)
    p.set_defaults(func=cmd_reference)

    p = sub.add_parser("fuse", parents=[common], help="register frames and fuse lucky regions")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--block", type=int, default=16)
    p.add_argument("--radius", type=int, default=3)
    p.add_argument("--tile", type=int, default=16)
    p.add_argument("--temperature", type=float, default=0.25)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("train-basis", parents=[common], help="PCA basis and prior scales")
    p.add_argument("--corpus", default=None, help="corpus .npy (or a directory holding corpus.npy)")
    p.add_argument("--generate", type=int, default=2000, help="simulate this many PSFs if no --corpus")
    p.add_argument("--save-corpus", default=None)
    p.add_argument("--cn2-lo", type=float, default=5e-17)
    p.add_argument("--cn2-hi", type=float, default=5e-16)
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--tau", type=float, default=1e-6)
    p.add_argument("--trials", type=int, default=0, help="PSFs used for the prior (0 = all)")
    p.set_defaults(func=cmd_train_basis)

    p = sub.add_parser("deconv", parents=[common], help="blind deconvolution of one image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--lam", type=float, default=0.05)
    p.add_argument("--gamma", type=float, default=1e-4)
    p.add_argument("--iters", type=int, default=8)
    p.add_argument("--scales", type=int, default=3)
    p.set_defaults(func=cmd_deconv)

    p = sub.add_parser("pipeline", parents=[common], help="run every stage from a config")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("theory", parents=[common], help="shift-model experiments (CSV output)")
    p.add_argument("what", choices=["scan-variance", "bernstein", "boxcar", "calibrate-beta"])
    p.add_argument("--kernel", choices=["gaussian", "boxcar"], default="gaussian")
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--sigma-min", type=float, default=0.01)
    p.add_argument("--sigma-max", type=float, default=20.0)
    p.add_argument("--points", type=int, default=60)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--x", type=float, default=0.0)
    p.add_argument("--T", type=_ints, default=[10, 100, 1000, 10000])
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--ratios", type=_floats, default=[0.25, 0.5, 1, 2, 3, 4])
    p.set_defaults(func=cmd_theory)
    return ap


_THEORY_DEFAULTS = {"bernstein": {"eps": 0.05, "trials": 10000}, "calibrate-beta": {"eps": 0.5, "trials": 10}}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "theory":
        for k, v in _THEORY_DEFAULTS.get(args.what, {}).items():
            if getattr(args, k) is None:
                setattr(args, k, v)
    try:
        args.func(args)
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
