"""simulate -> reference -> registration + lucky fusion -> blind deconvolution."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import charts, config as cfgmod
from .deconv import (BasisSet, DeconvConfig, blind_deconv, estimate_prior, generate_psf_corpus,
                     load_basis, train_basis)
from .errors import ConfigurationError, NumericalError
from .fusion import block_flow, lucky_fuse
from .imageio import read_image, write_image, write_stack
from .optics import ApertureSpec, OpticalConfig
from .phase_screen import TurbulenceParams, derive_seed
from .reference import NlConfig, build_reference, temporal_average
from .sim import simulate_sequence

log = logging.getLogger(__name__)


def psnr(x: np.ndarray, ref: np.ndarray, peak: float = 1.0) -> float:
    mse = float(np.mean((np.asarray(x, dtype=float) - ref) ** 2))
    return float("inf") if mse == 0 else 10.0 * np.log10(peak * peak / mse)


def turbulence_params(cfg: dict, seed: int) -> TurbulenceParams:
    t = cfg["turbulence"]
    common = dict(l0=t["l0"], L0=t["L0"], wavelength=t["wavelength"], path_length=t["path_length"],
                  n_screens=t["n_screens"], crop_n=t["crop_n"], seed=seed,
                  subharmonics=t["subharmonics"])
    if t["d_over_r0"] is not None:
        return TurbulenceParams(r0=cfg["optics"]["diameter"] / t["d_over_r0"], **common)
    if t["cn2"] is None:
        raise ConfigurationError("[turbulence] needs cn2 or d_over_r0")
    return TurbulenceParams(cn2=t["cn2"], **common)


def optical_config(cfg: dict) -> OpticalConfig:
    o = cfg["optics"]
    return OpticalConfig(ApertureSpec("circle", o["diameter"]), psf_size=o["psf_size"])


def load_scene(cfg: dict) -> np.ndarray:
    p = cfg["pipeline"]
    if p["image"] == "chart":
        return charts.resolution_chart(p["size"])
    path = Path(p["image"])
    if not path.exists():
        raise ConfigurationError(f"[simulate] input image {path} does not exist")
    return read_image(path)


def simulate_frames(x: np.ndarray, cfg: dict, seed: int) -> np.ndarray:
    p = cfg["pipeline"]
    if p["frames"] < 1:
        raise ConfigurationError("[pipeline] frames must be >= 1")
    if cfg["turbulence"]["enabled"]:
        tp = turbulence_params(cfg, seed)
        seq = simulate_sequence(x, tp, optical_config(cfg), p["frames"],
                                cfg["turbulence"]["correlation"], cfg["turbulence"]["stride"])
        frames = seq.frames
    else:
        frames = np.repeat(x[None], p["frames"], axis=0)
    if p["noise"] > 0:
        rng = np.random.default_rng(derive_seed(seed, 17))
        frames = frames + p["noise"] * rng.standard_normal(frames.shape)
    return frames


def reference_config(cfg: dict, n_frames: int) -> NlConfig:
    r = cfg["reference"]
    T = n_frames if r["T"] == 0 else r["T"]
    return NlConfig(r["patch_d"], r["L"], T, r["beta"])


def fuse_frames(frames: np.ndarray, ref: np.ndarray, cfg: dict) -> np.ndarray:
    f = cfg["fusion"]
    if not f["enabled"]:
        return temporal_average(frames)
    warped = np.stack([block_flow(fr, ref, f["block"], f["radius"])[0] for fr in frames])
    return lucky_fuse(warped, ref, f["tile"], f["temperature"])


def obtain_basis(cfg: dict, seed: int) -> BasisSet:
    dc = cfg["deconv"]
    if dc["basis"]:
        return load_basis(dc["basis"])
    tp = turbulence_params(cfg, seed)
    corpus = generate_psf_corpus(dc["corpus_size"], (dc["cn2_lo"], dc["cn2_hi"]), tp,
                                 optical_config(cfg), seed=derive_seed(seed, 23))
    basis = train_basis(corpus, dc["m"])
    prior = estimate_prior(corpus, basis, dc["tau"])
    return basis.with_scales(prior.d)


def deconv_enabled(cfg: dict) -> bool:
    e = cfg["deconv"]["enabled"]
    return cfg["turbulence"]["enabled"] if e == "auto" else bool(e)


@dataclass
class PipelineResult:
    metrics: dict
    out_dir: Path
    restored: np.ndarray


def _check(cond: bool, stage: str, what: str, failures: list):
    if not cond:
        failures.append(f"{stage}: {what}")


def run_pipeline(config, out_dir, seed: int | None = None, verify: bool = False) -> PipelineResult:
    """Run every stage and write images plus ``metrics.json`` to ``out_dir``.

    ``config`` is a path or an already parsed dict. ``metrics.json`` holds
    only quantities determined by the config and seed.
    """
    cfg = cfgmod.load(config) if isinstance(config, (str, Path)) else config
    seed = cfg["pipeline"]["seed"] if seed is None else seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failures: list[str] = []

    x = load_scene(cfg)
    write_image(out / "truth.png", x)
    log.info("simulate: %d frames", cfg["pipeline"]["frames"])
    frames = simulate_frames(x, cfg, seed)
    write_stack(out / "frames", frames, png=False)
    _check(bool(np.all(np.isfinite(frames))), "simulate", "non-finite frame values", failures)

    log.info("reference")
    ref = build_reference(frames, reference_config(cfg, len(frames)))
    np.save(out / "reference.npy", ref)
    write_image(out / "reference.png", ref)
    _check(bool(np.all(ref >= frames.min(0) - 1e-12) and np.all(ref <= frames.max(0) + 1e-12)),
           "reference", "output leaves the per-pixel temporal envelope", failures)

    log.info("fuse")
    fused = fuse_frames(frames, ref, cfg)
    np.save(out / "fused.npy", fused)
    write_image(out / "fused.png", fused)
    _check(bool(np.all(np.isfinite(fused))), "fuse", "non-finite output", failures)

    metrics: dict = {"seed": seed, "frames": int(len(frames))}
    if deconv_enabled(cfg):
        log.info("deconv")
        basis = obtain_basis(cfg, seed)
        dc = cfg["deconv"]
        res = blind_deconv(fused, basis, DeconvConfig(lam=dc["lam"], gamma=dc["gamma"],
                                                       iters=dc["iters"], scales=dc["scales"]))
        restored = res.z
        np.save(out / "psf.npy", res.h)
        metrics["psf_weights"] = [float(v) for v in res.w]
        metrics["objective"] = [float(t[-1]) for t in res.trace]
        _check(bool(np.all(res.h >= 0) and abs(res.h.sum() - 1) < 1e-12), "deconv",
               "PSF not nonnegative unit-sum", failures)
        _check(all(np.all(np.diff(t) <= 1e-6 * max(1.0, abs(t[0]))) for t in res.trace), "deconv",
               "objective increased", failures)
    else:
        restored = fused.copy()
    np.save(out / "restored.npy", restored)
    write_image(out / "restored.png", restored)

    metrics["psnr"] = {
        "frame0": psnr(frames[0], x),
        "temporal_average": psnr(temporal_average(frames), x),
        "reference": psnr(ref, x),
        "fused": psnr(fused, x),
        "restored": psnr(restored, x),
    }
    if verify:
        metrics["verify"] = {"passed": not failures, "failures": failures}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    if verify and failures:
        raise NumericalError("verification failed: " + "; ".join(failures))
    return PipelineResult(metrics, out, restored)
