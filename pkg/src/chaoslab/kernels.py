"""Interaction kernels and confinement drifts on the periodic unit box.

Every built-in kernel is a finite, zero-mean Fourier sum

    K(x) = sum_k  c_k  exp(2*pi*i k.x),      c_k in C^d,  c_0 = 0,

which keeps all of them bounded (the vortex kernel is truncated at
``m_trunc``) and makes mollification, convolution against grid densities and
the divergence-form primitive matrix exact spectral operations.

Families
--------
zero
    K = 0.
smooth_trig
    d=1: K(x) = A sin(2*pi*m*x).  d=2: K(x) = A (sin(2*pi*m*x2), sin(2*pi*m*x1)),
    which is odd and divergence-free.
biot_savart_2d
    Truncated vortex kernel, defined spectrally by c_k = A * i*(-k2, k1) / (2*pi*|k|^2)
    for 0 < |k|_inf <= m_trunc.  Near the origin it approaches the free-space
    vortex field with circulation A.
gradient_of_potential
    K = -grad U for U(x) = A * sum_j cos(2*pi*m*x_j), i.e. a curl-free sine field.

Mollification convolves with the periodized Gaussian of width delta
(heat kernel at time delta^2/2), a pure Fourier multiplier exp(-2*pi^2*delta^2*|k|^2).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
import math

import numpy as np

FAMILIES = ("zero", "smooth_trig", "biot_savart_2d", "gradient_of_potential")

# chunk size (points x modes) for dense mode-sum evaluation, ~64 MB complex128
_EVAL_CHUNK = 1 << 22


@dataclass(frozen=True)
class KernelSpec:
    """Descriptor of an interaction kernel.

    Parameters
    ----------
    family : str
        One of ``FAMILIES``.
    dim : int
        Spatial dimension, 1 or 2 (``biot_savart_2d`` requires 2).
    amplitude : float
        Overall multiplicative constant (circulation for the vortex kernel).
    mode : int
        Harmonic index of the trigonometric families.
    m_trunc : int
        Fourier truncation level of ``biot_savart_2d``.
    delta : float
        Mollification width; 0 means unmollified.
    """

    family: str
    dim: int
    amplitude: float = 1.0
    mode: int = 1
    m_trunc: int = 64
    delta: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.family == "biot_savart_2d" and self.dim != 2:
            raise ValueError("biot_savart_2d is only defined in dimension 2")
        if not math.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")
        if self.mode < 1:
            raise ValueError("mode must be >= 1")
        if self.m_trunc < 1:
            raise ValueError("m_trunc must be >= 1")
        if self.delta < 0 or not math.isfinite(self.delta):
            raise ValueError("delta must be a finite nonnegative real")

    @property
    def max_mode(self) -> int:
        """Largest |k|_inf carried by this kernel's spectrum."""
        if self.family == "zero":
            return 0
        if self.family == "biot_savart_2d":
            return self.m_trunc
        return self.mode


def zero_kernel(dim: int) -> KernelSpec:
    return KernelSpec(family="zero", dim=dim)


def mollify(spec: KernelSpec, delta: float) -> KernelSpec:
    """Return the kernel convolved with the built-in mollifier of width delta.

    Mollifying twice composes the Gaussian widths in quadrature.
    """
    if delta <= 0:
        raise ValueError("mollification width must be positive")
    return replace(spec, delta=math.hypot(spec.delta, delta))


def _mollifier_multiplier(modes: np.ndarray, delta: float) -> np.ndarray:
    k2 = np.sum(modes.astype(float) ** 2, axis=1)
    return np.exp(-2.0 * np.pi**2 * delta**2 * k2)


@lru_cache(maxsize=64)
def kernel_modes(spec: KernelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Fourier representation of the kernel.

    Returns
    -------
    modes : (M, dim) int array
        Integer frequency vectors, k = 0 excluded.
    coeffs : (M, dim) complex array
        Coefficient vectors c_k, mollifier already applied.
    """
    d = spec.dim
    A = spec.amplitude
    m = spec.mode
    if spec.family == "zero":
        modes = np.zeros((0, d), dtype=int)
        coeffs = np.zeros((0, d), dtype=complex)
    elif spec.family == "smooth_trig":
        # sin(2*pi*m*u) = (exp(2*pi*i*m*u) - exp(-2*pi*i*m*u)) / (2i)
        if d == 1:
            modes = np.array([[m], [-m]])
            coeffs = np.array([[-0.5j * A], [0.5j * A]])
        else:
            modes = np.array([[0, m], [0, -m], [m, 0], [-m, 0]])
            coeffs = np.array(
                [
                    [-0.5j * A, 0.0],
                    [0.5j * A, 0.0],
                    [0.0, -0.5j * A],
                    [0.0, 0.5j * A],
                ]
            )
    elif spec.family == "gradient_of_potential":
        # -grad of A * sum_j cos(2*pi*m*x_j): component j is 2*pi*A*m*sin(2*pi*m*x_j)
        amp = 2.0 * np.pi * A * m
        modes = np.zeros((2 * d, d), dtype=int)
        coeffs = np.zeros((2 * d, d), dtype=complex)
        for j in range(d):
            modes[2 * j, j] = m
            modes[2 * j + 1, j] = -m
            coeffs[2 * j, j] = -0.5j * amp
            coeffs[2 * j + 1, j] = 0.5j * amp
    else:  # biot_savart_2d
        M = spec.m_trunc
        ks = np.arange(-M, M + 1)
        k1, k2 = np.meshgrid(ks, ks, indexing="ij")
        k1 = k1.ravel()
        k2 = k2.ravel()
        keep = (k1 != 0) | (k2 != 0)
        k1, k2 = k1[keep], k2[keep]
        modes = np.stack([k1, k2], axis=1)
        norm2 = (k1.astype(float) ** 2 + k2**2) * 2.0 * np.pi
        coeffs = np.stack([-k2 / norm2, k1 / norm2], axis=1) * (1j * A)
    if spec.delta > 0 and len(modes):
        coeffs = coeffs * _mollifier_multiplier(modes, spec.delta)[:, None]
    modes.setflags(write=False)
    coeffs.setflags(write=False)
    return modes, coeffs


def _as_points(x, dim: int) -> tuple[np.ndarray, tuple, bool]:
    """Normalize input to a (P, dim) float array; remember the original shape."""
    x = np.asarray(x, dtype=float)
    squeezed = False
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
        squeezed = True
    if x.shape[-1] != dim:
        raise ValueError(f"points must have last axis of length {dim}")
    lead = x.shape[:-1]
    return x.reshape(-1, dim), lead, squeezed


def eval_kernel(spec: KernelSpec, x) -> np.ndarray:
    """Evaluate K at one or many points by direct (exact) Fourier summation.

    ``x`` broadcasts: shape (..., dim), or bare scalars/arrays when dim == 1.
    Built-in kernels are truncated or mollified, so there is no singularity
    to hit; the sum is exact up to rounding.
    """
    pts, lead, squeezed = _as_points(x, spec.dim)
    modes, coeffs = kernel_modes(spec)
    out = np.zeros((len(pts), spec.dim))
    if len(modes):
        step = max(1, _EVAL_CHUNK // len(modes))
        for lo in range(0, len(pts), step):
            phase = np.exp(2j * np.pi * (pts[lo : lo + step] @ modes.T.astype(float)))
            out[lo : lo + step] = (phase @ coeffs).real
    out = out.reshape(lead + (spec.dim,))
    return out[..., 0] if squeezed else out


def eval_kernel_grid(spec: KernelSpec, n: int) -> np.ndarray:
    """Evaluate K on the uniform n^d grid via inverse FFT.

    Exact (no aliasing) when n >= 2*max_mode + 2; raises otherwise.
    Returns an array of shape (n,)*d + (d,).
    """
    if n < 2 * spec.max_mode + 2:
        raise ValueError(
            f"grid n={n} too coarse for kernel modes up to {spec.max_mode}"
            f" (need n >= {2 * spec.max_mode + 2})"
        )
    coeff_grid = spectral_coeff_grid(spec, n)
    shape = (n,) * spec.dim
    out = np.empty(shape + (spec.dim,))
    for j in range(spec.dim):
        out[..., j] = np.fft.ifftn(coeff_grid[..., j]).real * n**spec.dim
    return out


def spectral_coeff_grid(spec: KernelSpec, n: int) -> np.ndarray:
    """Kernel Fourier coefficients placed on the n^d FFT lattice, shape (n,)*d + (d,)."""
    modes, coeffs = kernel_modes(spec)
    shape = (n,) * spec.dim
    grid = np.zeros(shape + (spec.dim,), dtype=complex)
    if len(modes):
        idx = tuple(modes[:, j] % n for j in range(spec.dim))
        for j in range(spec.dim):
            np.add.at(grid[..., j], idx, coeffs[:, j])
    return grid


def kernel_sup_norm_grid(spec: KernelSpec, n: int) -> float:
    """max |K| (Euclidean norm of the vector value) over the uniform n^d grid."""
    vals = eval_kernel_grid(spec, n)
    return float(np.max(np.sqrt(np.sum(vals**2, axis=-1))))


def kernel_l1_norm_grid(spec: KernelSpec, n: int) -> float:
    """Grid quadrature of |K| over the torus (diagnostic for the kernel's L1 size)."""
    vals = eval_kernel_grid(spec, n)
    return float(np.mean(np.sqrt(np.sum(vals**2, axis=-1))))


def single_sine_form(spec: KernelSpec) -> tuple[float, int] | None:
    """(amplitude, m) if the d=1 kernel is exactly amp*sin(2*pi*m*x), else None.

    Used by the fast simulation path; the amplitude includes the mollifier factor.
    """
    if spec.dim != 1:
        return None
    if spec.family == "zero":
        return 0.0, 1
    if spec.family in ("smooth_trig", "gradient_of_potential"):
        amp = spec.amplitude
        if spec.family == "gradient_of_potential":
            amp *= 2.0 * np.pi * spec.mode
        if spec.delta > 0:
            amp *= float(
                np.exp(-2.0 * np.pi**2 * spec.delta**2 * spec.mode**2)
            )
        return float(amp), spec.mode
    return None


# ---------------------------------------------------------------------------
# Primitive matrices: K = div V with V bounded
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrimitiveMatrix:
    """Matrix field V with K_i = sum_j d_j V_ij, stored spectrally.

    ``modes`` is (M, dim) int, ``coeffs`` is (M, dim, dim) complex.
    """

    dim: int
    modes: np.ndarray
    coeffs: np.ndarray

    def __call__(self, x) -> np.ndarray:
        """Evaluate V at points of shape (..., dim); returns (..., dim, dim)."""
        pts, lead, _ = _as_points(x, self.dim)
        out = np.zeros((len(pts), self.dim, self.dim))
        if len(self.modes):
            step = max(1, _EVAL_CHUNK // max(1, len(self.modes)))
            flat = self.coeffs.reshape(len(self.modes), -1)
            for lo in range(0, len(pts), step):
                phase = np.exp(
                    2j * np.pi * (pts[lo : lo + step] @ self.modes.T.astype(float))
                )
                out[lo : lo + step] = (phase @ flat).real.reshape(
                    -1, self.dim, self.dim
                )
        return out.reshape(lead + (self.dim, self.dim))


def primitive_matrix(spec: KernelSpec) -> PrimitiveMatrix:
    """Spectral primitive V-hat(k) = K-hat(k) (x) (-2*pi*i*k) / |2*pi*k|^2, V-hat(0) = 0.

    Satisfies the row-contraction identity K-hat_i(k) = 2*pi*i sum_j k_j V-hat_ij(k)
    on every retained mode.
    """
    modes, kcoeffs = kernel_modes(spec)
    k = modes.astype(float)
    k2 = np.sum(k**2, axis=1)
    if len(modes):
        # outer product c_k (x) (-i k) / (2*pi*|k|^2)
        vcoeffs = kcoeffs[:, :, None] * (-1j * k[:, None, :]) / (
            2.0 * np.pi * k2[:, None, None]
        )
    else:
        vcoeffs = np.zeros((0, spec.dim, spec.dim), dtype=complex)
    vcoeffs.setflags(write=False)
    return PrimitiveMatrix(dim=spec.dim, modes=modes, coeffs=vcoeffs)


def primitive_divergence_residual(spec: KernelSpec) -> float:
    """max_k |K-hat(k) - 2*pi*i k . V-hat(k)| over retained modes (spectral round trip)."""
    modes, kcoeffs = kernel_modes(spec)
    if not len(modes):
        return 0.0
    V = primitive_matrix(spec)
    recon = 2j * np.pi * np.einsum("mj,mij->mi", modes.astype(float), V.coeffs)
    return float(np.max(np.abs(recon - kcoeffs)))


def wminus_norm_surrogate(V: PrimitiveMatrix, grid_resolution: int) -> float:
    """max Frobenius norm of V over the uniform grid (upper-bound surrogate).

    Not the infimum over all primitives; it upper-bounds the divergence-form
    norm, which is the useful direction for the estimates it feeds.
    """
    if grid_resolution < 16:
        raise ValueError("grid_resolution must be >= 16")
    axes = [np.arange(grid_resolution) / grid_resolution] * V.dim
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, V.dim)
    vals = V(pts)
    frob = np.sqrt(np.sum(vals**2, axis=(-2, -1)))
    return float(np.max(frob)) if len(frob) else 0.0


# ---------------------------------------------------------------------------
# Confinement drifts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftSpec:
    """Confinement drift F.  kind='zero' or kind='gradient' (F = -grad of a
    single trigonometric potential A * sum_j cos(2*pi*m*x_j))."""

    kind: str = "zero"
    amplitude: float = 1.0
    mode: int = 1

    def __post_init__(self):
        if self.kind not in ("zero", "gradient"):
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if self.mode < 1:
            raise ValueError("mode must be >= 1")


def eval_drift(drift, x, dim: int) -> np.ndarray:
    """Evaluate a DriftSpec, a plain callable, or None (= no drift) at points x."""
    if callable(drift) and not isinstance(drift, DriftSpec):
        return np.asarray(drift(x), dtype=float)
    pts, lead, squeezed = _as_points(x, dim)
    if drift is None or drift.kind == "zero":
        out = np.zeros_like(pts)
    else:
        amp = 2.0 * np.pi * drift.amplitude * drift.mode
        out = amp * np.sin(2.0 * np.pi * drift.mode * pts)
    out = out.reshape(lead + (dim,))
    return out[..., 0] if squeezed else out


def drift_single_sine_form(drift) -> tuple[float, int] | None:
    """(amplitude, m) if the d=1 drift is exactly amp*sin(2*pi*m*x), else None."""
    if drift is None:
        return 0.0, 1
    if not isinstance(drift, DriftSpec):
        return None
    if drift.kind == "zero":
        return 0.0, 1
    return float(2.0 * np.pi * drift.amplitude * drift.mode), drift.mode
