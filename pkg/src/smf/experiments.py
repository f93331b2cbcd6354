"""Simulation drivers: spiking imaging phantom and hyperspectral recovery.

The phantom stacks rectangular regions that fire sparse unit spikes; the
observed movie is the spike trains passed through a causal exponential
kernel, multiplied by the region shapes, plus Gaussian noise at a target
SNR.  The hyperspectral setup draws a low-rank cube of smooth nonnegative
abundance maps times nonnegative spectra and measures it through a
random-phase convolution with pixel subsampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linops import RandomPhaseConvOp, TemporalConvOp
from .regularizers import GaugeSpec, Rank1Regularizer, ThetaForm, lattice_graph
from .solver import FactorModel, ProblemSpec

__all__ = [
    "PhantomSpec",
    "PhantomData",
    "gen_phantom",
    "phantom_condition",
    "benchmark_condition",
    "phantom_problem",
    "HsiSpec",
    "HsiData",
    "hsi_simulate",
    "hsi_problem",
    "hsi_init",
    "recovery_error",
]


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry, spiking, kernel, and noise settings for the phantom."""

    height: int = 32
    width: int = 32
    frames: int = 60
    n_regions: int = 6
    spikes_per_region: int = 3
    tau: float = 1.3333
    dt: float = 0.1
    snr_db: float = -16.0
    seed: int = 0


@dataclass(frozen=True)
class PhantomData:
    """Simulated movie with its ground truth.

    ``u_true`` holds the spike trains (frames x regions), ``v_true`` the
    region indicator shapes (pixels x regions), and ``labels`` the region
    id per pixel (0 = background).  ``y`` equals the kernel-filtered
    spikes times the shapes plus noise of standard deviation
    ``noise_sigma``.
    """

    spec: PhantomSpec
    y: np.ndarray
    u_true: np.ndarray
    v_true: np.ndarray
    labels: np.ndarray
    noise_sigma: float
    op: TemporalConvOp


def _pack_regions(spec: PhantomSpec, rng: np.random.Generator):
    """Disjoint rectangles, one per grid cell with a 1-pixel margin."""
    n = spec.n_regions
    grid_rows = max(int(math.floor(math.sqrt(n))), 1)
    grid_cols = int(math.ceil(n / grid_rows))
    cell_h = spec.height // grid_rows
    cell_w = spec.width // grid_cols
    if cell_h < 4 or cell_w < 4:
        raise ValueError(
            f"cannot pack {n} regions into a {spec.height}x{spec.width} grid; "
            f"cells would be {cell_h}x{cell_w}"
        )
    rects = []
    for k in range(n):
        gr, gc = divmod(k, grid_cols)
        inner_h = cell_h - 2
        inner_w = cell_w - 2
        rh = int(rng.integers(max(2, int(0.4 * inner_h)), max(3, int(0.7 * inner_h)) + 1))
        rw = int(rng.integers(max(2, int(0.4 * inner_w)), max(3, int(0.7 * inner_w)) + 1))
        r0 = gr * cell_h + 1 + int(rng.integers(0, inner_h - rh + 1))
        c0 = gc * cell_w + 1 + int(rng.integers(0, inner_w - rw + 1))
        rects.append((r0, c0, rh, rw))
    return rects


def gen_phantom(spec: PhantomSpec) -> PhantomData:
    """Simulate the phantom movie; fully reproducible from ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    p = spec.height * spec.width
    rects = _pack_regions(spec, rng)

    labels = np.zeros((spec.height, spec.width), dtype=int)
    v_true = np.zeros((p, spec.n_regions))
    for k, (r0, c0, rh, rw) in enumerate(rects):
        labels[r0 : r0 + rh, c0 : c0 + rw] = k + 1
        mask = np.zeros((spec.height, spec.width))
        mask[r0 : r0 + rh, c0 : c0 + rw] = 1.0
        v_true[:, k] = mask.ravel()

    u_true = np.zeros((spec.frames, spec.n_regions))
    for k in range(spec.n_regions):
        times = rng.choice(spec.frames, size=spec.spikes_per_region, replace=False)
        u_true[times, k] = 1.0

    op = TemporalConvOp(spec.frames, tau=spec.tau, dt=spec.dt)
    clean = op.apply(u_true) @ v_true.T
    if math.isinf(spec.snr_db):
        sigma = 0.0
        y = clean
    else:
        power = float(np.mean(clean**2))
        sigma = math.sqrt(power * 10.0 ** (-spec.snr_db / 10.0))
        y = clean + sigma * rng.standard_normal(clean.shape)
    return PhantomData(
        spec=spec,
        y=y,
        u_true=u_true,
        v_true=v_true,
        labels=labels,
        noise_sigma=sigma,
        op=op,
    )


def phantom_condition(
    name: str, sigma: float, height: int, width: int, connectivity: int = 8
) -> tuple[Rank1Regularizer, float]:
    """Standard penalty settings for the simulated phantom.

    ``sparse_lowrank`` pairs l1+l2 gauges on both factors at
    ``lam = 1.5 * sigma``; ``slrtv`` adds total variation over the pixel
    lattice on the spatial factor at ``lam = 0.4 * sigma``.  ``sigma`` is
    the noise standard deviation of the simulation.
    """
    if name == "sparse_lowrank":
        reg = Rank1Regularizer(
            ThetaForm.PRODUCT,
            GaugeSpec(nu1=1.0, nu2=1.0),
            GaugeSpec(nu1=1.0, nu2=1.0),
        )
        return reg, 1.5 * sigma
    if name == "slrtv":
        graph = lattice_graph(height, width, connectivity)
        reg = Rank1Regularizer(
            ThetaForm.PRODUCT,
            GaugeSpec(nu1=1.0, nu2=1.0),
            GaugeSpec(nu1=1.0, nu_tv=1.0, nu2=1.0, graph=graph),
        )
        return reg, 0.4 * sigma
    raise ValueError(f"unknown phantom condition: {name!r}")


def benchmark_condition(
    name: str, data_std: float, height: int, width: int, connectivity: int = 8
) -> tuple[Rank1Regularizer, float]:
    """Penalty settings used on recorded movies, scaled by the data std.

    ``sparse``: plain l1/l1 at ``2.0 * std``; ``sparse_lowrank``: l1+l2 at
    ``1.75 * std``; ``slrtv``: l1 + 2.5*l2 on the temporal factor against
    l1 + 0.5*TV + l2 on the spatial one at ``0.5 * std``.
    """
    if name == "sparse":
        reg = Rank1Regularizer(
            ThetaForm.PRODUCT, GaugeSpec(nu1=1.0), GaugeSpec(nu1=1.0)
        )
        return reg, 2.0 * data_std
    if name == "sparse_lowrank":
        reg = Rank1Regularizer(
            ThetaForm.PRODUCT,
            GaugeSpec(nu1=1.0, nu2=1.0),
            GaugeSpec(nu1=1.0, nu2=1.0),
        )
        return reg, 1.75 * data_std
    if name == "slrtv":
        graph = lattice_graph(height, width, connectivity)
        reg = Rank1Regularizer(
            ThetaForm.PRODUCT,
            GaugeSpec(nu1=1.0, nu2=2.5),
            GaugeSpec(nu1=1.0, nu_tv=0.5, nu2=1.0, graph=graph),
        )
        return reg, 0.5 * data_std
    raise ValueError(f"unknown benchmark condition: {name!r}")


def phantom_problem(data: PhantomData, condition: str = "slrtv") -> ProblemSpec:
    """Assemble the factorization problem for a simulated phantom.

    The penalty weight scales with the simulation noise level; for a
    noiseless phantom the data standard deviation stands in so the weight
    stays positive.
    """
    sigma = data.noise_sigma if data.noise_sigma > 0 else float(data.y.std())
    reg, lam = phantom_condition(
        condition, sigma, data.spec.height, data.spec.width
    )
    return ProblemSpec(y=data.y, op=data.op, reg=reg, lam=lam)


@dataclass(frozen=True)
class HsiSpec:
    """Geometry and sampling settings for the hyperspectral simulation."""

    height: int = 32
    width: int = 32
    bands: int = 20
    true_rank: int = 5
    sample_ratio: float = 4.0
    snr_db: Optional[float] = None
    blobs_per_map: int = 3
    seed: int = 0


@dataclass(frozen=True)
class HsiData:
    """Low-rank cube, measurement operator, and compressed measurements."""

    spec: HsiSpec
    x_true: np.ndarray
    spectra: np.ndarray
    maps: np.ndarray
    op: RandomPhaseConvOp
    y: np.ndarray
    noise_sigma: float


def _smooth_maps(spec: HsiSpec, rng: np.random.Generator) -> np.ndarray:
    rows, cols = np.mgrid[0 : spec.height, 0 : spec.width]
    maps = np.zeros((spec.height * spec.width, spec.true_rank))
    for k in range(spec.true_rank):
        img = np.zeros((spec.height, spec.width))
        for _ in range(spec.blobs_per_map):
            cy = rng.uniform(0, spec.height)
            cx = rng.uniform(0, spec.width)
            s = rng.uniform(spec.height / 8.0, spec.height / 4.0)
            amp = rng.uniform(0.5, 1.0)
            img += amp * np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2.0 * s * s))
        img /= img.max()
        maps[:, k] = img.ravel()
    return maps


def hsi_simulate(spec: HsiSpec) -> HsiData:
    """Draw a rank-``true_rank`` cube and measure it; seeded end to end."""
    if spec.true_rank < 1 or spec.true_rank > min(spec.bands, spec.height * spec.width):
        raise ValueError("true_rank out of range")
    rng = np.random.default_rng(spec.seed)
    maps = _smooth_maps(spec, rng)
    spectra = rng.uniform(0.2, 1.0, size=(spec.bands, spec.true_rank))
    # mild smoothing along the band axis keeps spectra plausible
    kernel = np.array([0.25, 0.5, 0.25])
    spectra = np.apply_along_axis(
        lambda s: np.convolve(np.pad(s, 1, mode="edge"), kernel, mode="valid"),
        0,
        spectra,
    )
    x_true = spectra @ maps.T

    pixels = spec.height * spec.width
    keep = max(1, int(round(pixels / spec.sample_ratio)))
    op = RandomPhaseConvOp(spec.height, spec.width, keep, seed=spec.seed + 101)
    y = op.apply(x_true)
    sigma = 0.0
    if spec.snr_db is not None:
        rms = float(np.sqrt(np.mean(y**2)))
        sigma = rms * 10.0 ** (-spec.snr_db / 20.0)
        y = y + sigma * rng.standard_normal(y.shape)
    return HsiData(
        spec=spec,
        x_true=x_true,
        spectra=spectra,
        maps=maps,
        op=op,
        y=y,
        noise_sigma=sigma,
    )


def hsi_problem(
    data: HsiData,
    lam: float,
    nu_tv: float = 1.0,
    nu2_v: float = 1.0,
    nonneg: bool = True,
) -> ProblemSpec:
    """Recovery problem: pure-l2 spectral gauge, TV+l2 spatial gauge."""
    graph = lattice_graph(data.spec.height, data.spec.width, 4)
    reg = Rank1Regularizer(
        ThetaForm.PRODUCT,
        GaugeSpec(nu2=1.0, nonneg=nonneg),
        GaugeSpec(nu_tv=nu_tv, nu2=nu2_v, graph=graph, nonneg=nonneg),
    )
    return ProblemSpec(y=data.y, op=data.op, reg=reg, lam=lam)


def hsi_init(p: ProblemSpec, columns: int, seed: int = 0) -> FactorModel:
    """Zero spectra with one distinct active pixel per spatial column."""
    d, n = p.factor_shape()
    rng = np.random.default_rng(seed)
    pix = rng.choice(n, size=columns, replace=False)
    u = np.zeros((d, columns))
    v = np.zeros((n, columns))
    v[pix, np.arange(columns)] = 1.0
    return FactorModel(u, v)


def recovery_error(x_true: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """Relative Frobenius error of ``U V^T`` against the true cube."""
    x_true = np.asarray(x_true, dtype=float)
    diff = x_true - np.asarray(u) @ np.asarray(v).T
    denom = float(np.linalg.norm(x_true))
    if denom == 0.0:
        return float(np.linalg.norm(diff))
    return float(np.linalg.norm(diff)) / denom
