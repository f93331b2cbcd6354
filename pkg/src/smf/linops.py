"""Measurement operators for the factorization loss.

Each operator exposes ``apply`` (forward), ``adjoint`` (exact transpose),
and ``op_norm`` (largest singular value, cached).  Operators are
immutable once constructed and any randomness is derived from an explicit
seed, so a serialized description regenerates the operator bit for bit
without storing masks or kernels.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "LinearOperator",
    "IdentityOp",
    "TemporalConvOp",
    "RandomPhaseConvOp",
    "OuterOnesOp",
    "operator_from_config",
]


class LinearOperator:
    """Base interface: forward map, exact adjoint, cached operator norm."""

    _probe_shape: Optional[tuple[int, ...]] = None

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def domain_shape(self, y_shape: tuple[int, ...]) -> tuple[int, ...]:
        """Input shape whose image has shape ``y_shape``."""
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError

    def op_norm(self, iters: int = 200, seed: int = 0, tol: float = 1e-12) -> float:
        """Largest singular value by power iteration on ``A^T A``.

        The estimate is nondecreasing across iterations and approaches the
        true norm from below, so it never overstates the Lipschitz
        constants derived from it.  The converged value is cached.
        """
        cached = getattr(self, "_norm_cache", None)
        if cached is not None:
            return cached
        if self._probe_shape is None:
            raise NotImplementedError("operator has no probe shape for power iteration")
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self._probe_shape)
        nv = np.linalg.norm(v)
        if nv == 0:
            raise RuntimeError("degenerate probe")
        v /= nv
        est = 0.0
        for _ in range(iters):
            w = self.apply(v)
            s = float(np.linalg.norm(w))
            if s == 0.0:
                est = 0.0
                break
            v = self.adjoint(w)
            nv = float(np.linalg.norm(v))
            v /= nv
            if abs(s - est) <= tol * max(1.0, s):
                est = s
                break
            est = s
        object.__setattr__(self, "_norm_cache", est)
        return est


class IdentityOp(LinearOperator):
    """Identity map; accepts any array shape."""

    def apply(self, x):
        return np.asarray(x, dtype=float)

    def adjoint(self, r):
        return np.asarray(r, dtype=float)

    def op_norm(self, iters: int = 200, seed: int = 0, tol: float = 1e-12) -> float:
        return 1.0

    def domain_shape(self, y_shape):
        return tuple(y_shape)

    def to_config(self):
        return {"variant": "identity"}

    def __repr__(self):
        return "IdentityOp()"


class TemporalConvOp(LinearOperator):
    """Causal convolution with an exponential-decay kernel along axis 0.

    Acting columnwise on a ``(frames, k)`` array, this is multiplication by
    the lower-triangular Toeplitz matrix whose first column is
    ``exp(-k * dt / tau)``.  Implemented as a first-order recursive filter,
    which is exact for this kernel; the adjoint runs the same filter in
    reversed time.
    """

    def __init__(self, frames: int, tau: float = 1.3333, dt: float = 0.1):
        if frames < 1:
            raise ValueError("frames must be positive")
        if not (tau > 0 and dt > 0):
            raise ValueError("tau and dt must be positive")
        self.frames = int(frames)
        self.tau = float(tau)
        self.dt = float(dt)
        self.decay = math.exp(-self.dt / self.tau)
        self._probe_shape = (self.frames, 1)

    def kernel(self) -> np.ndarray:
        """First column of the Toeplitz matrix."""
        return np.exp(-np.arange(self.frames) * self.dt / self.tau)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.frames:
            raise ValueError(f"axis 0 has length {x.shape[0]}, expected {self.frames}")
        return x

    def apply(self, x):
        x = self._check(x)
        return lfilter([1.0], [1.0, -self.decay], x, axis=0)

    def adjoint(self, r):
        r = self._check(r)
        rev = np.flip(r, axis=0)
        out = lfilter([1.0], [1.0, -self.decay], rev, axis=0)
        return np.flip(out, axis=0)

    def domain_shape(self, y_shape):
        if len(y_shape) != 2 or y_shape[0] != self.frames:
            raise ValueError(f"incompatible data shape {y_shape}")
        return tuple(y_shape)

    def to_config(self):
        return {
            "variant": "temporal_conv",
            "frames": self.frames,
            "tau": self.tau,
            "dt": self.dt,
        }

    def __repr__(self):
        return f"TemporalConvOp(frames={self.frames}, tau={self.tau}, dt={self.dt})"


class RandomPhaseConvOp(LinearOperator):
    """Random-phase 2-D circular convolution followed by pixel subsampling.

    The frequency response has unit modulus with conjugate-symmetric random
    phases, so the unmasked convolution is a real orthogonal map; keeping
    ``keep_count`` of the ``height * width`` pixels (the same subset in
    every row) makes it a flat random measurement operator.  Rows of the
    input are treated as vectorized ``height x width`` images.
    """

    def __init__(self, height: int, width: int, keep_count: int, seed: int = 0):
        if height < 1 or width < 1:
            raise ValueError("height and width must be positive")
        p = height * width
        if not (1 <= keep_count <= p):
            raise ValueError(f"keep_count must be in [1, {p}], got {keep_count}")
        self.height = int(height)
        self.width = int(width)
        self.keep_count = int(keep_count)
        self.seed = int(seed)
        self.pixels = p
        rng = np.random.default_rng(seed)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(height, width))
        mirrored = np.roll(np.flip(phases, axis=(0, 1)), shift=(1, 1), axis=(0, 1))
        anti = 0.5 * (phases - mirrored)
        self._kernel_hat = np.exp(1j * anti)
        self.keep_idx = np.sort(rng.choice(p, size=keep_count, replace=False))
        self._probe_shape = (1, p)

    def _as_rows(self, x, expected_cols, name):
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != expected_cols:
            raise ValueError(f"{name} must have {expected_cols} columns, got shape {x.shape}")
        return x, squeeze

    def apply(self, x):
        x, squeeze = self._as_rows(x, self.pixels, "input")
        imgs = x.reshape(-1, self.height, self.width)
        conv = np.fft.ifft2(np.fft.fft2(imgs) * self._kernel_hat).real
        out = conv.reshape(-1, self.pixels)[:, self.keep_idx]
        return out[0] if squeeze else out

    def adjoint(self, r):
        r, squeeze = self._as_rows(r, self.keep_count, "input")
        full = np.zeros((r.shape[0], self.pixels))
        full[:, self.keep_idx] = r
        imgs = full.reshape(-1, self.height, self.width)
        out = np.fft.ifft2(np.fft.fft2(imgs) * np.conj(self._kernel_hat)).real
        out = out.reshape(-1, self.pixels)
        return out[0] if squeeze else out

    def domain_shape(self, y_shape):
        if len(y_shape) != 2 or y_shape[1] != self.keep_count:
            raise ValueError(f"incompatible data shape {y_shape}")
        return (y_shape[0], self.pixels)

    def to_config(self):
        return {
            "variant": "random_phase_conv",
            "height": self.height,
            "width": self.width,
            "keep_count": self.keep_count,
            "seed": self.seed,
        }

    def __repr__(self):
        return (
            f"RandomPhaseConvOp(height={self.height}, width={self.width}, "
            f"keep_count={self.keep_count}, seed={self.seed})"
        )


class OuterOnesOp(LinearOperator):
    """Background map: a length-p vector becomes the rank-1 frame stack 1 q^T."""

    def __init__(self, frames: int):
        if frames < 1:
            raise ValueError("frames must be positive")
        self.frames = int(frames)

    def apply(self, q):
        q = np.asarray(q, dtype=float).ravel()
        return np.tile(q, (self.frames, 1))

    def adjoint(self, r):
        r = np.asarray(r, dtype=float)
        if r.ndim != 2 or r.shape[0] != self.frames:
            raise ValueError(f"expected (frames, p) input, got shape {r.shape}")
        return r.sum(axis=0)

    def op_norm(self, iters: int = 200, seed: int = 0, tol: float = 1e-12) -> float:
        # ||1 q^T||_F = sqrt(frames) * ||q||, attained for every q
        return math.sqrt(self.frames)

    def domain_shape(self, y_shape):
        if len(y_shape) != 2 or y_shape[0] != self.frames:
            raise ValueError(f"incompatible data shape {y_shape}")
        return (y_shape[1],)

    def to_config(self):
        return {"variant": "outer_ones", "frames": self.frames}

    def __repr__(self):
        return f"OuterOnesOp(frames={self.frames})"


def operator_from_config(cfg: dict) -> LinearOperator:
    """Rebuild an operator from its serialized description."""
    if not isinstance(cfg, dict) or "variant" not in cfg:
        raise ValueError("operator config must be a dict with a 'variant' key")
    variant = cfg["variant"]
    if variant == "identity":
        return IdentityOp()
    if variant == "temporal_conv":
        return TemporalConvOp(
            frames=cfg["frames"],
            tau=cfg.get("tau", 1.3333),
            dt=cfg.get("dt", 0.1),
        )
    if variant == "random_phase_conv":
        return RandomPhaseConvOp(
            height=cfg["height"],
            width=cfg["width"],
            keep_count=cfg["keep_count"],
            seed=cfg.get("seed", 0),
        )
    if variant == "outer_ones":
        return OuterOnesOp(frames=cfg["frames"])
    raise ValueError(f"unknown operator variant: {variant!r}")
