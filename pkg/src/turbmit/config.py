"""INI configuration with a fixed schema.

Every key has a type and a default; unknown sections or keys are errors so
that typos fail loudly instead of silently using defaults.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .errors import ConfigurationError


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _auto_bool(s: str):
    return "auto" if s.strip().lower() == "auto" else _bool(s)


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


SCHEMA: dict[str, dict[str, tuple]] = {
    "pipeline": {
        "image": (str, "chart"),  # "chart" or a path
        "size": (int, 128),
        "frames": (int, 10),
        "seed": (int, 0),
        "noise": (float, 0.0),  # std of additive Gaussian noise on frames
    },
    "turbulence": {
        "enabled": (_bool, True),
        "cn2": (_opt_float, 2.5e-16),
        "d_over_r0": (_opt_float, None),  # overrides cn2 when set
        "l0": (float, 0.01),
        "L0": (float, 100.0),
        "wavelength": (float, 0.525e-6),
        "path_length": (float, 7000.0),
        "n_screens": (int, 4),
        "crop_n": (int, 128),
        "subharmonics": (_bool, False),
        "correlation": (float, 0.0),
        "stride": (int, 32),
    },
    "optics": {
        "diameter": (float, 0.2),
        "psf_size": (int, 15),
    },
    "reference": {
        "patch_d": (int, 7),
        "L": (int, 5),
        "T": (int, 0),  # 0 = all frames
        "beta": (float, 1.0),
    },
    "fusion": {
        "enabled": (_bool, True),
        "block": (int, 16),
        "radius": (int, 3),
        "tile": (int, 16),
        "temperature": (float, 0.25),
    },
    "deconv": {
        "enabled": (_auto_bool, "auto"),
        "basis": (str, ""),  # empty: train one from a simulated corpus
        "corpus_size": (int, 300),
        "m": (int, 8),
        "tau": (float, 1e-6),
        "cn2_lo": (float, 5e-17),
        "cn2_hi": (float, 5e-16),
        "lam": (float, 0.05),
        "gamma": (float, 1e-4),
        "iters": (int, 8),
        "scales": (int, 3),
    },
}


def defaults() -> dict:
    return {sec: {k: v[1] for k, v in keys.items()} for sec, keys in SCHEMA.items()}


def parse(text: str, source: str = "<string>") -> dict:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case-sensitive (L vs l0)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc
    cfg = defaults()
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigurationError(f"{source}: unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigurationError(f"{source}: unknown key {key!r} in [{sec}]")
            conv = SCHEMA[sec][key][0]
            try:
                cfg[sec][key] = conv(raw)
            except ValueError as exc:
                raise ConfigurationError(f"{source}: [{sec}] {key} = {raw!r}: {exc}") from exc
    return cfg


def load(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"{path}: config file not found")
    return parse(path.read_text(), str(path))


def dump(cfg: dict) -> str:
    lines = []
    for sec, keys in cfg.items():
        lines.append(f"[{sec}]")
        lines += [f"{k} = {'' if v is None else v}" for k, v in keys.items()]
        lines.append("")
    return "\n".join(lines)
