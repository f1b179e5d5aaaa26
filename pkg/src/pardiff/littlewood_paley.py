"""Dyadic frequency decomposition and hybrid Besov norms on periodic boxes.

Fields live on the torus of period ``2 pi L`` per axis and are stored as
Fourier coefficients ``c_k`` with ``u(x) = sum_k c_k exp(i k.x / L)``, so the
physical frequency of index ``k`` is ``xi = k / L``. ``L^2`` norms follow from
Plancherel: ``||u||^2 = (2 pi L)^d sum_k |c_k|^2``.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import BlockOutOfRange, FieldFormatError

logger = logging.getLogger(__name__)

INNER, OUTER = 3.0 / 4.0, 4.0 / 3.0


def _g(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t, dtype=float)
    pos = t > 0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t) -> np.ndarray:
    """``g(t) / (g(t) + g(1 - t))`` with ``g(t) = exp(-1/t)`` for ``t > 0``."""
    t = np.asarray(t, dtype=float)
    a, b = _g(t), _g(1.0 - t)
    return a / (a + b)


@dataclass(frozen=True)
class CutoffPair:
    """Radial cutoffs ``chi`` and ``phi(xi) = chi(xi/2) - chi(xi)``.

    Both callables take radii ``|xi|`` (any array shape).
    """

    chi: Callable[[np.ndarray], np.ndarray]
    phi: Callable[[np.ndarray], np.ndarray]


def _chi(r) -> np.ndarray:
    r = np.abs(np.asarray(r, dtype=float))
    return smooth_step((OUTER - r) / (OUTER - INNER))


def _phi(r) -> np.ndarray:
    r = np.abs(np.asarray(r, dtype=float))
    return _chi(r / 2.0) - _chi(r)


def build_cutoffs() -> CutoffPair:
    """The pinned cutoff pair: ``chi = 1`` on ``[0, 3/4]`` and ``0`` beyond ``4/3``."""
    return CutoffPair(_chi, _phi)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Multi-component periodic field stored by Fourier coefficients.

    Attributes:
        d: Spatial dimension.
        n_comp: Number of components.
        box_length: ``L``; the period is ``2 pi L`` per axis.
        grid: Points per axis (powers of two).
        coeffs: Complex array of shape ``(n_comp, *grid)`` in FFT order.
        real: Whether the field is real-valued in physical space.
    """

    d: int
    n_comp: int
    box_length: float
    grid: tuple
    coeffs: np.ndarray
    real: bool = True

    def __post_init__(self):
        grid = tuple(int(g) for g in self.grid)
        object.__setattr__(self, "grid", grid)
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if len(grid) != self.d:
            raise ValueError(f"grid has {len(grid)} axes, expected {self.d}")
        if any(g < 2 or g & (g - 1) for g in grid):
            raise ValueError(f"grid sizes must be powers of two, got {grid}")
        if coeffs.shape != (self.n_comp, *grid):
            raise ValueError(f"coeffs have shape {coeffs.shape}, expected {(self.n_comp, *grid)}")
        if self.box_length <= 0:
            raise ValueError("box length must be positive")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def from_physical(cls, values: np.ndarray, box_length: float) -> "SpectralField":
        """Build from samples of shape ``(n_comp, *grid)`` on the uniform grid."""
        values = np.asarray(values)
        d = values.ndim - 1
        axes = tuple(range(1, d + 1))
        coeffs = np.fft.fftn(values, axes=axes) / np.prod(values.shape[1:])
        return cls(d, values.shape[0], float(box_length), values.shape[1:], coeffs, bool(np.isrealobj(values)))

    @classmethod
    def zeros(cls, d: int, n_comp: int, box_length: float, grid) -> "SpectralField":
        grid = (grid,) * d if isinstance(grid, (int, np.integer)) else tuple(grid)
        return cls(d, n_comp, box_length, grid, np.zeros((n_comp, *grid), dtype=complex))

    def with_coeffs(self, coeffs: np.ndarray, real: bool | None = None) -> "SpectralField":
        return SpectralField(self.d, coeffs.shape[0], self.box_length, self.grid, coeffs,
                             self.real if real is None else real)

    def to_physical(self) -> np.ndarray:
        axes = tuple(range(1, self.d + 1))
        vals = np.fft.ifftn(self.coeffs, axes=axes) * np.prod(self.grid)
        return vals.real if self.real else vals

    def physical_points(self) -> list[np.ndarray]:
        """Meshgrid of physical coordinates in ``[0, 2 pi L)``."""
        axes = [2 * np.pi * self.box_length * np.arange(g) / g for g in self.grid]
        return np.meshgrid(*axes, indexing="ij")

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavevectors, shape ``(*grid, d)``."""
        axes = [np.fft.fftfreq(g, 1.0 / g) for g in self.grid]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    @cached_property
    def xi(self) -> np.ndarray:
        """Physical frequencies ``k / L``, shape ``(*grid, d)``."""
        return self.wavenumbers / self.box_length

    @cached_property
    def radius(self) -> np.ndarray:
        return np.linalg.norm(self.xi, axis=-1)

    @property
    def measure(self) -> float:
        return (2 * np.pi * self.box_length) ** self.d

    def l2_norm(self) -> float:
        return float(np.sqrt(self.measure * np.sum(np.abs(self.coeffs) ** 2)))

    def gradient_norm(self) -> float:
        """``||grad u||_{L^2}`` summed over components."""
        return float(np.sqrt(self.measure * np.sum(self.radius**2 * np.abs(self.coeffs) ** 2)))

    def hermitian_defect(self) -> float:
        """``max |c(-k) - conj(c(k))|``; zero for real fields."""
        flipped = self.coeffs
        for ax in range(1, self.d + 1):
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        return float(np.max(np.abs(flipped - self.coeffs.conj()))) if self.coeffs.size else 0.0

    def scaled(self, factor: float) -> "SpectralField":
        real = self.real and np.isrealobj(factor)
        return self.with_coeffs(self.coeffs * factor, real)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return self.with_coeffs(self.coeffs + other.coeffs, self.real and other.real)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self.with_coeffs(self.coeffs - other.coeffs, self.real and other.real)


def j_min(box_length: float) -> int:
    """Lowest resolvable block index ``floor(log2(3 / (4 L)))``.

    ``S_{j_min}`` then vanishes on every nonzero lattice frequency, so the
    sub-resolvable residual is exactly the mean mode.
    """
    return int(math.floor(math.log2(INNER / box_length) + 1e-12))


def j_max(field: SpectralField) -> int:
    """Smallest ``J`` with ``chi(2^-(J+1) xi) = 1`` on the whole grid."""
    rmax = float(field.radius.max())
    if rmax == 0:
        return j_min(field.box_length)
    return max(int(math.ceil(math.log2(rmax / INNER) - 1e-12)) - 1, j_min(field.box_length))


def block_range(field: SpectralField) -> range:
    return range(j_min(field.box_length), j_max(field) + 1)


def block_multiplier(field: SpectralField, j: int) -> np.ndarray:
    return _phi(field.radius / 2.0**j)


def dyadic_block(field: SpectralField, j: int) -> SpectralField:
    """``Delta_j u``: multiply coefficients by ``phi(2^-j xi)``.

    Raises:
        BlockOutOfRange: ``j`` is outside the resolvable range.
    """
    rng = block_range(field)
    if j not in rng:
        raise BlockOutOfRange(f"block {j} outside [{rng.start}, {rng.stop - 1}]")
    return field.with_coeffs(field.coeffs * block_multiplier(field, j))


def low_pass(field: SpectralField, j: int) -> SpectralField:
    """``S_j u``: multiply coefficients by ``chi(2^-j xi)``."""
    return field.with_coeffs(field.coeffs * _chi(field.radius / 2.0**j))


def block_norms(field: SpectralField) -> dict[int, float]:
    """``||Delta_j u||_{L^2}`` for every resolvable ``j``."""
    power = np.sum(np.abs(field.coeffs) ** 2, axis=0)
    return {j: float(np.sqrt(field.measure * np.sum(block_multiplier(field, j) ** 2 * power)))
            for j in block_range(field)}


def residual_norm(field: SpectralField) -> float:
    """``L^2`` norm of the sub-resolvable part ``S_{j_min} u``."""
    power = np.sum(np.abs(field.coeffs) ** 2, axis=0)
    mult = _chi(field.radius / 2.0 ** j_min(field.box_length))
    return float(np.sqrt(field.measure * np.sum(mult**2 * power)))


@dataclass(frozen=True)
class HybridNorm:
    """Low- and high-frequency parts of a hybrid Besov norm."""

    low: float
    high: float

    @property
    def total(self) -> float:
        return self.low + self.high

    def __iter__(self):
        return iter((self.low, self.high, self.total))


def combine_blocks(norms: dict[int, float], s: float, r: float, blocks) -> float:
    vals = [2.0 ** (j * s) * norms[j] for j in blocks]
    if not vals:
        return 0.0
    if r == 1:
        return float(math.fsum(vals))
    if math.isinf(r):
        return float(max(vals))
    raise ValueError(f"r must be 1 or inf, got {r}")


def besov_norm_hybrid(field: SpectralField, s_low: float, s_high: float, r: float = 1,
                      split_j: int = 0, norms: dict[int, float] | None = None) -> HybridNorm:
    """Hybrid Besov semi-norm with threshold block ``split_j``.

    ``low`` sums (or takes the sup of) ``2^(j s_low) ||Delta_j u||`` over
    resolvable ``j <= split_j``; ``high`` does the same with ``s_high`` over
    ``j > split_j``. The sub-resolvable residual is excluded.
    """
    norms = block_norms(field) if norms is None else norms
    lows = [j for j in norms if j <= split_j]
    highs = [j for j in norms if j > split_j]
    return HybridNorm(combine_blocks(norms, s_low, r, lows), combine_blocks(norms, s_high, r, highs))


@dataclass(frozen=True)
class Split:
    """Result of :func:`low_high_split`."""

    low: SpectralField
    high: SpectralField
    residual: SpectralField

    @property
    def residual_norm(self) -> float:
        return self.residual.l2_norm()

    def __iter__(self):
        return iter((self.low, self.high))


def low_high_split(field: SpectralField, split_j: int = 0) -> Split:
    """Split into ``sum_{j_min <= j <= N0} Delta_j u``, ``sum_{j > N0} Delta_j u`` and residual."""
    r = field.radius
    jm = j_min(field.box_length)
    top = max(split_j + 1, jm)
    residual = _chi(r / 2.0**jm)
    below = _chi(r / 2.0**top)
    low = field.with_coeffs(field.coeffs * (below - residual))
    high = field.with_coeffs(field.coeffs * (1.0 - below))
    return Split(low, high, field.with_coeffs(field.coeffs * residual))


_MAGIC = b"PDSF"


def write_field(path: str | Path, field: SpectralField) -> None:
    """Binary layout: magic, ``d``, ``n_comp``, grid, ``L``, reality flag, coefficients.

    Integers are little-endian ``uint32``, ``L`` is ``float64`` and the
    coefficients follow as row-major little-endian ``complex128``.
    """
    header = struct.pack("<4sII", _MAGIC, field.d, field.n_comp)
    header += struct.pack(f"<{field.d}I", *field.grid)
    header += struct.pack("<dI", field.box_length, int(field.real))
    data = np.ascontiguousarray(field.coeffs, dtype="<c16").tobytes()
    Path(path).write_bytes(header + data)


def read_field(path: str | Path) -> SpectralField:
    """Inverse of :func:`write_field`.

    Raises:
        FieldFormatError: the file is truncated or has a bad magic number.
    """
    raw = Path(path).read_bytes()
    try:
        magic, d, n_comp = struct.unpack_from("<4sII", raw, 0)
        if magic != _MAGIC:
            raise FieldFormatError(f"bad magic {magic!r}")
        off = 12
        grid = struct.unpack_from(f"<{d}I", raw, off)
        off += 4 * d
        box, real = struct.unpack_from("<dI", raw, off)
        off += 12
    except struct.error as exc:
        raise FieldFormatError(f"truncated header: {exc}") from exc
    count = n_comp * int(np.prod(grid))
    if len(raw) - off != 16 * count:
        raise FieldFormatError(f"expected {16 * count} payload bytes, got {len(raw) - off}")
    coeffs = np.frombuffer(raw, dtype="<c16", offset=off, count=count).reshape((n_comp, *grid))
    return SpectralField(d, n_comp, box, tuple(grid), coeffs.astype(complex), bool(real))
