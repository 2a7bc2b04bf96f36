"""PCA-constrained blind deconvolution.

The PSF is modelled as ``h = P(h0 + sum_i w_i u_i)`` where ``h0`` is the
corpus mean (or a caller-supplied initial kernel), ``u_i`` are principal
components of simulated short-exposure PSFs and ``P`` clips to nonnegative
values and rescales to unit sum. Coefficients carry a Laplacian prior with
per-component scale ``d_i``. Restoration alternates a TV-regularised image
step with a weighted-l1 coefficient step on gradient images, coarse to fine.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import signal, stats

from .errors import ConfigurationError, DivergenceError, ParameterError
from .grid import area_resample_matrix
from .optics import OpticalConfig, centroid_align, simulate_psf
from .phase_screen import TurbulenceParams, derive_seed, generate_screen

SCALE_FLOOR = 1e-8
MIN_COARSE_KERNEL = 5


# ---------------------------------------------------------------------------
# corpus and basis


@dataclass
class PsfCorpus:
    psfs: np.ndarray  # (count, k, k)
    cn2: np.ndarray
    seed: int

    def __len__(self):
        return self.psfs.shape[0]


def generate_psf_corpus(count: int, cn2_range=(5e-17, 5e-16), p: TurbulenceParams | None = None,
                        optics: OpticalConfig | None = None, seed: int = 0, size: int = 15,
                        margin: int = 8, start: int = 0) -> PsfCorpus:
    """Simulate ``count`` on-axis short-exposure PSFs with log-uniform Cn2.

    Each PSF is formed on a ``size + 2 * margin`` crop, centroid-aligned by a
    whole-pixel shift and cut to ``size x size`` at unit sum. PSF ``i`` is
    seeded from ``(seed, start + i)``, so a corpus can be extended in pieces.
    """
    if count < 1:
        raise ParameterError("count must be >= 1")
    lo, hi = cn2_range
    if not 0 < lo <= hi:
        raise ParameterError("need 0 < cn2_lo <= cn2_hi")
    p = p or TurbulenceParams(cn2=lo, crop_n=128)
    optics = optics or OpticalConfig()
    pitch = optics.grid_pitch(p)
    big = size + 2 * margin
    psfs = np.empty((count, size, size))
    cn2 = np.empty(count)
    for i in range(count):
        j = start + i
        rng = np.random.default_rng(derive_seed(seed, j))
        cn2[i] = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        pi = replace(p, cn2=float(cn2[i]), r0=None, seed=derive_seed(seed, j, 1))
        screens = [generate_screen(lp, pitch=pitch, n=p.crop_n) for lp in pi.layer_params()]
        psfs[i] = centroid_align(simulate_psf(pi, optics, screens, psf_size=big), size)
    return PsfCorpus(psfs, cn2, seed)


@dataclass
class BasisSet:
    """Mean kernel, ``m`` orthonormal components and their prior scales ``d``."""

    mean: np.ndarray
    bases: np.ndarray  # (m, k, k)
    d: np.ndarray
    explained: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.bases = np.asarray(self.bases, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        if self.bases.ndim != 3 or self.bases.shape[1:] != self.mean.shape:
            raise ConfigurationError("bases must be (m, k, k) matching the mean kernel")
        if self.d.shape != (self.m,) or np.any(self.d <= 0):
            raise ConfigurationError("need one positive scale per component")

    @property
    def m(self) -> int:
        return self.bases.shape[0]

    @property
    def size(self) -> int:
        return self.mean.shape[0]

    def gram(self) -> np.ndarray:
        b = self.bases.reshape(self.m, -1)
        return b @ b.T

    def compose(self, w, offset: np.ndarray | None = None) -> np.ndarray:
        """``offset + sum_i w_i u_i`` without projection (``offset`` defaults to the mean)."""
        base = self.mean if offset is None else offset
        return base + np.tensordot(np.asarray(w, dtype=float), self.bases, 1)

    def with_scales(self, d) -> "BasisSet":
        return BasisSet(self.mean, self.bases, np.asarray(d, dtype=float), self.explained)


def train_basis(corpus, m: int = 8) -> BasisSet:
    """Top-``m`` principal components of the mean-subtracted corpus.

    ``m`` is reduced, with a warning, when the corpus has lower rank.
    """
    psfs = np.asarray(getattr(corpus, "psfs", corpus), dtype=float)
    n, k = psfs.shape[0], psfs.shape[-1]
    if m < 1:
        raise ParameterError("m must be >= 1")
    if n <= m:
        raise ConfigurationError(f"corpus of {n} PSFs is too small for m={m}")
    x = psfs.reshape(n, -1)
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    total = float(np.sum(s**2))
    tol = s[0] * max(x.shape) * np.finfo(float).eps if s.size and s[0] > 0 else 0.0
    rank = int(np.sum(s > tol))
    if rank < m:
        warnings.warn(f"corpus rank {rank} < m={m}; keeping {max(rank, 1)} components", RuntimeWarning)
        m = max(rank, 1)
    vt = vt[:m]
    # deterministic sign: largest-magnitude entry positive
    idx = np.argmax(np.abs(vt), axis=1)
    vt = vt * np.sign(vt[np.arange(m), idx])[:, None]
    explained = s[:m] ** 2 / total if total > 0 else np.zeros(m)
    return BasisSet(mean.reshape(k, k), vt.reshape(m, k, k), np.ones(m), explained)


@dataclass
class L0Fit:
    weights: np.ndarray
    support: list
    residual: float
    reached: bool
    history: list


def fit_weights_l0(h_sim: np.ndarray, basis: BasisSet, tau: float, offset: np.ndarray | None = None) -> L0Fit:
    """Orthogonal matching pursuit until ``||h - offset - U w||^2 <= tau``.

    ``reached`` is false when every component was used and the residual is
    still above ``tau``; the weights are then the dense least-squares fit.
    """
    if not tau > 0:
        raise ParameterError("tau must be positive")
    U = basis.bases.reshape(basis.m, -1).T  # (k^2, m)
    r0 = (np.asarray(h_sim, dtype=float) - (basis.mean if offset is None else offset)).ravel()
    w = np.zeros(basis.m)
    support: list[int] = []
    r = r0.copy()
    res = float(r @ r)
    history = [res]
    while res > tau and len(support) < basis.m:
        corr = np.abs(U.T @ r)
        corr[support] = -1.0
        support.append(int(np.argmax(corr)))
        coef, *_ = np.linalg.lstsq(U[:, support], r0, rcond=None)
        w[:] = 0.0
        w[support] = coef
        r = r0 - U[:, support] @ coef
        res = float(r @ r)
        history.append(res)
    return L0Fit(w, support, res, res <= tau, history)


@dataclass
class PriorEstimate:
    d: np.ndarray
    excess_kurtosis: np.ndarray
    weights: np.ndarray  # (trials, m)

    @property
    def heavy_tailed(self) -> int:
        return int(np.sum(self.excess_kurtosis > 0))


def laplace_scales(weights: np.ndarray, floor: float = SCALE_FLOOR) -> np.ndarray:
    """Maximum-likelihood scale of a zero-mean Laplacian per column: mean ``|w|``.

    Sums run over sorted magnitudes so the result does not depend on row order.
    """
    a = np.sort(np.abs(np.asarray(weights, dtype=float)), axis=0)
    return np.maximum(a.sum(axis=0) / a.shape[0], floor)


def estimate_prior(corpus, basis: BasisSet, tau: float, trials: int | None = None) -> PriorEstimate:
    """Fit ``trials`` corpus PSFs by OMP and set ``d_i = mean |w_i|``."""
    psfs = np.asarray(getattr(corpus, "psfs", corpus), dtype=float)
    trials = psfs.shape[0] if trials is None else trials
    if trials < 100:
        raise ParameterError("estimate_prior needs at least 100 trials")
    if trials > psfs.shape[0]:
        raise ConfigurationError(f"{trials} trials requested from a corpus of {psfs.shape[0]}")
    w = np.stack([fit_weights_l0(h, basis, tau).weights for h in psfs[:trials]])
    with np.errstate(invalid="ignore", divide="ignore"):
        kurt = stats.kurtosis(w, axis=0, fisher=True, bias=True)
    return PriorEstimate(laplace_scales(w), np.nan_to_num(kurt, nan=0.0), w)


_HEADER = struct.Struct("<dd")


def save_basis(path, basis: BasisSet) -> None:
    """Little-endian float64: ``m``, ``side``, mean kernel, ``m`` kernels, ``m`` scales."""
    with open(path, "wb") as f:
        f.write(_HEADER.pack(float(basis.m), float(basis.size)))
        f.write(np.ascontiguousarray(basis.mean, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(basis.bases, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(basis.d, dtype="<f8").tobytes())


def load_basis(path) -> BasisSet:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ConfigurationError(f"{path}: truncated basis file")
    m_f, k_f = _HEADER.unpack_from(raw)
    m, k = int(m_f), int(k_f)
    if m != m_f or k != k_f or m < 1 or k < 1:
        raise ConfigurationError(f"{path}: bad basis header ({m_f}, {k_f})")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != k * k * (m + 1) + m:
        raise ConfigurationError(f"{path}: payload size does not match header")
    mean = body[: k * k].reshape(k, k)
    bases = body[k * k : k * k * (m + 1)].reshape(m, k, k)
    return BasisSet(mean.copy(), bases.copy(), body[k * k * (m + 1) :].copy())


# ---------------------------------------------------------------------------
# operators


def project_psf(h: np.ndarray) -> np.ndarray:
    """Clip to nonnegative and rescale to unit sum; a delta if nothing survives."""
    h = np.maximum(np.asarray(h, dtype=float), 0.0)
    s = h.sum()
    if not s > 0:
        h = np.zeros_like(h)
        h[h.shape[0] // 2, h.shape[1] // 2] = 1.0
        return h
    return h / s


def _fold_matrix(n: int, r: int) -> np.ndarray:
    """``(n + 2r, n)`` 0/1 matrix of symmetric padding along one axis."""
    idx = np.arange(-r, n + r)
    idx = np.where(idx < 0, -idx - 1, idx)
    idx = np.where(idx >= n, 2 * n - idx - 1, idx)
    M = np.zeros((n + 2 * r, n))
    M[np.arange(n + 2 * r), idx] = 1.0
    return M


class BlurOperator:
    """Same-size convolution with symmetric boundary extension, and its exact adjoint."""

    def __init__(self, h: np.ndarray, shape: tuple[int, int]):
        h = np.asarray(h, dtype=float)
        if h.shape[0] % 2 == 0 or h.shape[0] != h.shape[1]:
            raise ConfigurationError("kernel must be square with odd side")
        r = h.shape[0] // 2
        if r >= min(shape):
            raise ConfigurationError("kernel larger than image")
        self.h, self.r, self.shape = h, r, tuple(shape)
        self._Mr, self._Mc = _fold_matrix(shape[0], r), _fold_matrix(shape[1], r)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        zp = np.pad(z, self.r, mode="symmetric")
        return signal.fftconvolve(zp, self.h, mode="valid")

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        full = signal.fftconvolve(y, self.h[::-1, ::-1], mode="full")
        return self._Mr.T @ full @ self._Mc


def grad(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences with a zero last row/column."""
    gy = np.zeros_like(z)
    gx = np.zeros_like(z)
    gy[:-1] = z[1:] - z[:-1]
    gx[:, :-1] = z[:, 1:] - z[:, :-1]
    return gy, gx


def div(py: np.ndarray, px: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`grad`."""
    out = np.zeros_like(py)
    out[0] += py[0]
    out[1:-1] += py[1:-1] - py[:-2]
    out[-1] -= py[-2]
    out[:, 0] += px[:, 0]
    out[:, 1:-1] += px[:, 1:-1] - px[:, :-2]
    out[:, -1] -= px[:, -2]
    return out


def total_variation(z: np.ndarray) -> float:
    gy, gx = grad(z)
    return float(np.sum(np.sqrt(gy * gy + gx * gx)))


def tv_prox(v: np.ndarray, weight: float, iters: int = 40, dual=None):
    """``argmin_z 0.5 ||z - v||^2 + weight * TV(z)`` by Chambolle's dual projection.

    Returns ``(z, dual)``; pass ``dual`` back in to warm-start the next call.
    """
    if weight <= 0:
        return v.copy(), dual
    py, px = (np.zeros_like(v), np.zeros_like(v)) if dual is None else dual
    tau = 0.125
    for _ in range(iters):
        gy, gx = grad(div(py, px) - v / weight)
        norm = 1.0 + tau * np.sqrt(gy * gy + gx * gx)
        py = (py + tau * gy) / norm
        px = (px + tau * gx) / norm
    return v - weight * div(py, px), (py, px)


# ---------------------------------------------------------------------------
# alternating minimisation


@dataclass(frozen=True)
class DeconvConfig:
    lam: float = 0.05
    gamma: float = 1e-4
    iters: int = 8
    z_iters: int = 25
    w_iters: int = 200
    tv_iters: int = 30
    scales: int = 3
    slack: float = 1e-6

    def __post_init__(self):
        if not (self.lam > 0 and self.gamma > 0):
            raise ParameterError("lam and gamma must be positive")
        if self.iters < 1 or self.scales < 1:
            raise ParameterError("iters and scales must be >= 1")


@dataclass
class DeconvResult:
    z: np.ndarray
    h: np.ndarray
    w: np.ndarray
    trace: list  # objective after each outer iteration, per scale (list of lists)

    def __iter__(self):
        return iter((self.z, self.h, self.w))


def objective(y, z, h, w, d, cfg: DeconvConfig) -> float:
    r = BlurOperator(h, y.shape)(z) - y
    return float(np.sum(r * r) + cfg.lam * total_variation(z) + cfg.gamma * np.sum(np.abs(w) / d))


def _z_step(y, z0, A: BlurOperator, cfg: DeconvConfig) -> np.ndarray:
    """Monotone FISTA on ``||A z - y||^2 + lam TV(z)``."""
    L = 4.0 * float(np.sum(np.abs(A.h))) ** 2  # 2 * ||pad||^2 * ||h||_1^2

    def J(z):
        r = A(z) - y
        return float(np.sum(r * r)) + cfg.lam * total_variation(z)

    z, jz = z0.copy(), J(z0)
    v, t, dual = z0.copy(), 1.0, None
    for _ in range(cfg.z_iters):
        g = 2.0 * A.adjoint(A(v) - y)
        x, dual = tv_prox(v - g / L, cfg.lam / L, cfg.tv_iters, dual)
        jx = J(x)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z_prev = z
        if jx <= jz:
            z, jz = x, jx
        v = z + (t / t_next) * (x - z) + ((t - 1.0) / t_next) * (z - z_prev)
        t = t_next
    return z


def _w_step(y, z, basis_s: BasisSet, offset, w0, d, cfg: DeconvConfig) -> np.ndarray:
    """Weighted-l1 least squares on gradient images, by ISTA."""
    gyy, gyx = grad(y)
    gzy, gzx = grad(z)
    shape = y.shape
    cols = []
    for u in basis_s.bases:
        A = BlurOperator(u, shape)
        cols.append(np.concatenate([A(gzy).ravel(), A(gzx).ravel()]))
    G = np.stack(cols, 1)
    A0 = BlurOperator(offset, shape)
    b = np.concatenate([(gyy - A0(gzy)).ravel(), (gyx - A0(gzx)).ravel()])
    Q, c = G.T @ G, G.T @ b
    L = 2.0 * float(np.linalg.eigvalsh(Q).max())
    if not L > 0:
        return w0.copy()
    thr = cfg.gamma / d / L
    w = w0.copy()
    for _ in range(cfg.w_iters):
        v = w - 2.0 * (Q @ w - c) / L
        w = np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)
    return w


def _resample_kernel(k: np.ndarray, size: int, factor: float) -> np.ndarray:
    W = area_resample_matrix(k.shape[0], 1.0, size, factor)
    return W @ k @ W.T


def _downsample(img: np.ndarray, s: int) -> np.ndarray:
    if s == 1:
        return img.copy()
    H, W = (img.shape[0] // s) * s, (img.shape[1] // s) * s
    return img[:H, :W].reshape(H // s, s, W // s, s).mean(axis=(1, 3))


def _upsample(img: np.ndarray, shape) -> np.ndarray:
    from scipy import ndimage

    zoom = (shape[0] / img.shape[0], shape[1] / img.shape[1])
    out = ndimage.zoom(img, zoom, order=1, mode="nearest", grid_mode=True)
    return out[: shape[0], : shape[1]]


def blind_deconv(y: np.ndarray, basis: BasisSet, cfg: DeconvConfig | None = None,
                 h_init: np.ndarray | None = None) -> DeconvResult:
    """Estimate a latent image and a basis-constrained PSF from one blurred image.

    ``h_init`` replaces the corpus mean as the affine offset of the PSF model.
    The outer loop alternates the image step, the coefficient step and the PSF
    projection; a coefficient update is shortened (halved up to ten times, or
    rejected) whenever it would raise the objective, so the recorded
    objective never increases.
    """
    cfg = cfg or DeconvConfig()
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise ConfigurationError("expected a grayscale image")
    offset_full = basis.mean if h_init is None else np.asarray(h_init, dtype=float)
    if offset_full.shape != basis.mean.shape:
        raise ConfigurationError("h_init must match the basis kernel size")
    d = basis.d
    w = np.zeros(basis.m)
    z = None
    trace: list[list[float]] = []
    for level in reversed(range(cfg.scales)):
        s = 2**level
        size = basis.size if s == 1 else int(basis.size // s) | 1
        ys = _downsample(y, s)
        # a kernel this small carries no shape information worth estimating
        if s > 1 and (size < MIN_COARSE_KERNEL or min(ys.shape) <= size):
            continue
        if s == 1:
            bs, off = basis, offset_full
        else:
            bs = BasisSet(_resample_kernel(basis.mean, size, s),
                          np.stack([_resample_kernel(u, size, s) for u in basis.bases]), d)
            off = _resample_kernel(offset_full, size, s)
        z = ys.copy() if z is None else _upsample(z, ys.shape)
        h = project_psf(bs.compose(w, off))
        j = objective(ys, z, h, w, d, cfg)
        scale_trace = [j]
        bad = 0
        for _ in range(cfg.iters):
            z = _z_step(ys, z, BlurOperator(h, ys.shape), cfg)
            j_z = objective(ys, z, h, w, d, cfg)
            w_new = _w_step(ys, z, bs, off, w, d, cfg)
            step, accepted = 1.0, False
            for _ in range(11):
                w_try = w + step * (w_new - w)
                h_try = project_psf(bs.compose(w_try, off))
                j_try = objective(ys, z, h_try, w_try, d, cfg)
                if j_try <= j_z:
                    w, h, j_new, accepted = w_try, h_try, j_try, True
                    break
                step *= 0.5
            if not accepted:
                j_new = j_z
            bad = bad + 1 if j_new > scale_trace[-1] + cfg.slack * max(1.0, abs(scale_trace[-1])) else 0
            scale_trace.append(j_new)
            if bad >= 3:
                raise DivergenceError("objective increased for 3 consecutive iterations", scale_trace)
        trace.append(scale_trace)
    if z is None:
        raise ConfigurationError("image too small for the kernel at every scale")
    return DeconvResult(z, h, w, trace)
