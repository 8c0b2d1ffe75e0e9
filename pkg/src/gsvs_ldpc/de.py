"""Discretized density evolution for min-sum decoders with scaling schedules.

Message densities live on a symmetric uniform grid ``k * step`` for
``k = -K..K`` (``K * step = llr_max``). Probability mass that would fall
outside the grid is folded into the end bins, mirroring LLR saturation in
the decoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .channel import LLR_MAX, bits_per_symbol, ebn0_to_sigma, pam_bit_llrs, pam_table, parse_modulation
from .code import DegreeDistributions
from .decoder import NoScaling, ScalingSchedule, TwoDim, schedule_alpha

DEFAULT_STEP = 0.05
DEFAULT_TARGET_BER = 1e-6
DEFAULT_MAX_ITER = 40


class GridMismatch(ValueError):
    pass


class ThresholdNotFound(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    llr_max: float = LLR_MAX
    step: float = DEFAULT_STEP

    def __post_init__(self):
        k = self.llr_max / self.step
        if abs(k - round(k)) > 1e-9 or k < 1:
            raise ValueError("llr_max must be a positive multiple of step")

    @property
    def half(self) -> int:
        return int(round(self.llr_max / self.step))

    @property
    def size(self) -> int:
        return 2 * self.half + 1

    @property
    def values(self) -> np.ndarray:
        return np.arange(-self.half, self.half + 1) * self.step


DEFAULT_GRID = Grid()


@dataclass(frozen=True, eq=False)
class QuantizedPmf:
    """Probability mass per grid bin; ``mass[grid.half]`` is the zero bin."""

    grid: Grid
    mass: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.mass.shape != (self.grid.size,):
            raise ValueError(f"mass must have {self.grid.size} bins")

    @classmethod
    def point(cls, value: float, grid: Grid = DEFAULT_GRID) -> "QuantizedPmf":
        mass = np.zeros(grid.size)
        mass[grid.half + int(round(value / grid.step))] = 1.0
        return cls(grid, mass)

    def total(self) -> float:
        return float(self.mass.sum())

    def mean(self) -> float:
        return float(self.mass @ self.grid.values)

    def var(self) -> float:
        v = self.grid.values
        return float(self.mass @ v**2 - (self.mass @ v) ** 2)

    def error_probability(self) -> float:
        """P(value < 0) + P(value == 0) / 2."""
        K = self.grid.half
        return float(self.mass[:K].sum() + 0.5 * self.mass[K])

    def mirrored(self) -> "QuantizedPmf":
        return QuantizedPmf(self.grid, self.mass[::-1].copy())


def _check_grid(*pmfs: QuantizedPmf) -> Grid:
    grid = pmfs[0].grid
    for p in pmfs[1:]:
        if p.grid != grid:
            raise GridMismatch("PMFs live on different grids")
    return grid


def _normalized(grid: Grid, mass: np.ndarray) -> QuantizedPmf:
    mass = np.clip(mass, 0.0, None)
    return QuantizedPmf(grid, mass / mass.sum())


# ---------------------------------------------------------------------------
# Channel densities
# ---------------------------------------------------------------------------

def _gaussian_bins(grid: Grid, mean: float, std: float) -> np.ndarray:
    """Gaussian mass per bin with both tails folded into the end bins."""
    K = grid.half
    edges = (np.arange(-K, K) + 0.5) * grid.step  # inner bin boundaries
    z = (edges - mean) / std
    lower = ndtr(z)           # P(X <= edge)
    upper = ndtr(-z)          # P(X > edge), accurate in the right tail
    mass = np.empty(grid.size)
    mass[0] = lower[0]
    mass[-1] = upper[-1]
    inner = np.where(edges[1:] <= mean, lower[1:] - lower[:-1], upper[:-1] - upper[1:])
    mass[1:-1] = inner
    return mass


def init_pmf_bpsk(ebn0_db: float, rate: float, grid: Grid = DEFAULT_GRID) -> QuantizedPmf:
    """Density of 2y/sigma^2 for an all-zero BPSK codeword: N(2/sigma^2, 4/sigma^2)."""
    sigma = ebn0_to_sigma(ebn0_db, rate, 1)
    return _normalized(grid, _gaussian_bins(grid, 2.0 / sigma**2, 2.0 / sigma))


def init_pmf_qam(ebn0_db: float, rate: float, order: int, grid: Grid = DEFAULT_GRID,
                 refine: int = 10, span: float = 8.0) -> QuantizedPmf:
    """Averaged density of the 'same-as-transmitted' LLR U+ = U (1 - 2 bit) for Gray QAM.

    Averages over the per-axis bit positions and the PAM levels. For every
    level the Gaussian noise is integrated on a fine quadrature grid (each
    cell carries its exact Gaussian probability), the exact bit LLR is
    evaluated at the cell centre, sign-flipped for one-bits and binned. The
    cell width keeps the LLR change per cell below ``step / refine``.
    """
    if order not in (4, 16, 64, 256):
        raise ValueError(f"unsupported QAM order {order}")
    sigma = ebn0_to_sigma(ebn0_db, rate, bits_per_symbol(order))
    levels, labels = pam_table(order)
    amax = float(np.abs(levels).max())
    # |dLLR/dy| <= 2 * amax / sigma^2 for every bit
    dz = grid.step * sigma**2 / (2.0 * amax * refine)
    ncell = int(math.ceil(2 * span * sigma / dz)) | 1
    edges = np.linspace(-span * sigma, span * sigma, ncell + 1)
    cdf = ndtr(edges / sigma)
    w = np.diff(cdf)
    centres = 0.5 * (edges[1:] + edges[:-1])
    K = grid.half
    acc = np.zeros(grid.size)
    nb = labels.shape[1]
    for t, level in enumerate(levels):
        llr = pam_bit_llrs(level + centres, sigma, order)  # (cells, nb)
        for b in range(nb):
            u = llr[:, b] * (1.0 - 2.0 * labels[t, b])
            idx = np.clip(np.rint(u / grid.step), -K, K).astype(np.int64) + K
            acc += np.bincount(idx, weights=w, minlength=grid.size)
    # eta: renormalize the average to unit area
    return _normalized(grid, acc)


def init_pmf(modulation: str | int, ebn0_db: float, rate: float, grid: Grid = DEFAULT_GRID) -> QuantizedPmf:
    order = parse_modulation(modulation) if isinstance(modulation, str) else int(modulation)
    if order == 2:
        return init_pmf_bpsk(ebn0_db, rate, grid)
    return init_pmf_qam(ebn0_db, rate, order, grid)


@lru_cache(maxsize=4096)
def _cached_channel(order: int, ebn0_centi: int, rate: float, grid: Grid) -> QuantizedPmf:
    pmf = init_pmf(order, ebn0_centi / 100.0, rate, grid)
    pmf.mass.setflags(write=False)
    return pmf


# ---------------------------------------------------------------------------
# Check-node side
# ---------------------------------------------------------------------------

def _sign_magnitude(mass: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Split into (positive-or-zero, negative) mass indexed by magnitude 0..K."""
    pos = mass[K:].copy()
    neg = np.zeros(K + 1)
    neg[1:] = mass[:K][::-1]
    return pos, neg


def _tail(x: np.ndarray) -> np.ndarray:
    """tail[m] = sum_{m' >= m} x[m'], with one trailing zero for m = K + 1."""
    out = np.zeros(x.size + 1)
    out[:-1] = np.cumsum(x[::-1])[::-1]
    return out


def pairwise_min_combine(p: QuantizedPmf, q: QuantizedPmf) -> QuantizedPmf:
    """Density of sign(X) sign(Y) min(|X|, |Y|) for independent X ~ p, Y ~ q.

    Zero counts as positive. Linear in the number of bins: for each magnitude
    m the probability that the minimum equals m with given signs is
    f_X(m) P(|Y| >= m) + f_Y(m) P(|X| > m).
    """
    grid = _check_grid(p, q)
    K = grid.half
    xp, xn = _sign_magnitude(p.mass, K)
    yp, yn = _sign_magnitude(q.mass, K)
    gxp, gxn, gyp, gyn = _tail(xp), _tail(xn), _tail(yp), _tail(yn)
    zpos = xp * gyp[:-1] + yp * gxp[1:] + xn * gyn[:-1] + yn * gxn[1:]
    zneg = xp * gyn[:-1] + yn * gxp[1:] + xn * gyp[:-1] + yp * gxn[1:]
    mass = np.empty(grid.size)
    mass[K:] = zpos
    mass[:K] = zneg[1:][::-1]
    mass[K] += zneg[0]
    return QuantizedPmf(grid, mass)


def pairwise_min_combine_bruteforce(p: QuantizedPmf, q: QuantizedPmf) -> QuantizedPmf:
    """O(bins^2) reference for :func:`pairwise_min_combine`."""
    grid = _check_grid(p, q)
    K = grid.half
    mass = np.zeros(grid.size)
    for i in np.flatnonzero(p.mass):
        for j in np.flatnonzero(q.mass):
            a, b = i - K, j - K
            sign = (1 if a >= 0 else -1) * (1 if b >= 0 else -1)
            mass[K + sign * min(abs(a), abs(b))] += p.mass[i] * q.mass[j]
    return QuantizedPmf(grid, mass)


def scale_pmf(pmf: QuantizedPmf, factor: float) -> QuantizedPmf:
    """Density of ``factor * X``: each bin's mass is split linearly between the two nearest bins."""
    if factor == 1.0:
        return pmf
    if not 0 <= factor <= 1:
        raise ValueError("scale factor must be in [0, 1]")
    grid = pmf.grid
    K = grid.half
    k = np.arange(-K, K + 1)
    target = factor * np.abs(k)
    lo = np.floor(target).astype(np.int64)
    frac = target - lo
    sign = np.where(k < 0, -1, 1)
    mass = np.bincount(K + sign * lo, weights=pmf.mass * (1.0 - frac), minlength=grid.size)
    hi = np.minimum(lo + 1, K)
    mass += np.bincount(K + sign * hi, weights=pmf.mass * frac, minlength=grid.size)
    return QuantizedPmf(grid, mass)


def _check_fold(msg: QuantizedPmf, degrees: Sequence[int]) -> dict[int, QuantizedPmf]:
    """Min-combination of d - 1 copies of ``msg`` for each requested check degree d."""
    out: dict[int, QuantizedPmf] = {}
    acc = msg
    for d in range(2, max(degrees) + 1):
        if d > 2:
            acc = pairwise_min_combine(acc, msg)
        if d in degrees:
            out[d] = acc
    return out


def check_pmf(msg: QuantizedPmf, dc: int, alpha: float = 1.0) -> QuantizedPmf:
    """Scaled min-sum check output density for check degree ``dc``."""
    if dc < 2:
        raise ValueError("check degree must be >= 2")
    return scale_pmf(_check_fold(msg, [dc])[dc], alpha)


# ---------------------------------------------------------------------------
# Variable-node side
# ---------------------------------------------------------------------------

def _fold_wide(wide: np.ndarray, offset: int, K: int) -> np.ndarray:
    """Fold a wide density (zero bin at ``offset``) onto the -K..K grid."""
    out = wide[offset - K: offset + K + 1].copy()
    out[0] += wide[: offset - K].sum()
    out[-1] += wide[offset + K + 1:].sum()
    return np.clip(out, 0.0, None)


def _var_family(channel: QuantizedPmf, check: QuantizedPmf, counts: Sequence[int]) -> dict[int, np.ndarray]:
    """Densities of channel + sum of c check messages, folded, for each c in ``counts``.

    The full sum is formed before saturating, as the decoder clips only the
    finished variable-node sum.
    """
    grid = _check_grid(channel, check)
    K = grid.half
    cmax = max(counts)
    width = 2 * K * (cmax + 1) + 1
    nfft = 1 << (width - 1).bit_length()
    C = np.fft.rfft(channel.mass, nfft)
    U = np.fft.rfft(check.mass, nfft)
    out: dict[int, np.ndarray] = {}
    acc = C
    for c in range(cmax + 1):
        if c > 0:
            acc = acc * U
        if c in counts:
            wide = np.fft.irfft(acc, nfft)[:width]
            out[c] = _fold_wide(wide, K * (c + 1), K)
    return out


def var_pmf(channel: QuantizedPmf, check_msg: QuantizedPmf, dv: int) -> QuantizedPmf:
    """Variable-to-check density for a degree-``dv`` variable: channel plus dv - 1 check messages."""
    if dv < 1:
        raise ValueError("variable degree must be >= 1")
    if dv == 1:
        return channel
    return _normalized(channel.grid, _var_family(channel, check_msg, [dv - 1])[dv - 1])


# ---------------------------------------------------------------------------
# Density evolution and thresholds
# ---------------------------------------------------------------------------

@dataclass
class DensityTrace:
    ber: np.ndarray                 # ber[0] is the channel-only error rate
    final_message: QuantizedPmf

    def reached(self, target: float) -> int | None:
        """First iteration with BER <= target, or None."""
        hits = np.flatnonzero(self.ber <= target)
        return int(hits[0]) if hits.size else None


def _check_factor(schedule: ScalingSchedule, it: int, dc: int) -> float:
    if isinstance(schedule, NoScaling):
        return 1.0
    if isinstance(schedule, TwoDim):
        return schedule.check_factors.get(dc, 1.0)
    return schedule_alpha(schedule, it)


def de_ber(dists: DegreeDistributions, channel: QuantizedPmf, schedule: ScalingSchedule = NoScaling(),
           max_iter: int = DEFAULT_MAX_ITER, stop_at: float | None = None) -> DensityTrace:
    """Evolve message densities through ``max_iter`` flooding iterations.

    Check outputs are averaged over the edge-perspective check degrees and
    variable outputs over the edge-perspective variable degrees; the bit
    error rate after each iteration uses the node-perspective decision
    density (channel plus all dv incoming check messages). Stops early once
    the BER drops to ``stop_at``.
    """
    grid = channel.grid
    check_degs = sorted(dists.check_edge)
    var_degs = sorted(set(dists.var_edge) | set(dists.var_node))
    two_dim = isinstance(schedule, TwoDim)
    ber = [channel.error_probability()]
    v = channel
    for it in range(1, max_iter + 1):
        folds = _check_fold(v, check_degs)
        u_mass = np.zeros(grid.size)
        for dc in check_degs:
            u_mass += dists.check_edge[dc] * scale_pmf(folds[dc], _check_factor(schedule, it, dc)).mass
        u = QuantizedPmf(grid, u_mass)

        v_mass = np.zeros(grid.size)
        err = 0.0
        if two_dim:
            groups: dict[float, list[int]] = {}
            for d in var_degs:
                groups.setdefault(schedule.var_factors.get(d, 1.0), []).append(d)
        else:
            groups = {1.0: var_degs}
        for factor, degs in groups.items():
            uf = scale_pmf(u, factor)
            counts = {d for d in degs} | {d - 1 for d in degs}
            fam = _var_family(channel, uf, sorted(counts))
            for d in degs:
                if d in dists.var_edge:
                    v_mass += dists.var_edge[d] * fam[d - 1]
                if d in dists.var_node:
                    dec = QuantizedPmf(grid, fam[d])
                    err += dists.var_node[d] * dec.error_probability() / dec.total()
        v = _normalized(grid, v_mass)
        ber.append(err)
        if stop_at is not None and err <= stop_at:
            break
    return DensityTrace(np.array(ber), v)


@dataclass
class ThresholdResult:
    ebn0_min_db: float
    ber_trajectory: np.ndarray
    converged_iteration: int
    search_bracket: tuple[float, float]
    evaluations: int
    schedule: str = ""
    modulation: str = "bpsk"


def threshold_search(dists: DegreeDistributions, modulation: str = "bpsk", schedule: ScalingSchedule = NoScaling(),
                     target_ber: float = DEFAULT_TARGET_BER, max_iter: int = DEFAULT_MAX_ITER,
                     rate: float | None = None, grid: Grid = DEFAULT_GRID, initial_db: float = 2.0,
                     resolution_db: float = 0.01, bounds: tuple[float, float] = (-2.0, 20.0),
                     check_monotone: bool = True) -> ThresholdResult:
    """Smallest Eb/N0 (on a ``resolution_db`` lattice) at which DE reaches ``target_ber``.

    Brackets by outward doubling from ``initial_db`` and then bisects. With
    ``check_monotone`` the predicate is also asserted at the upper end plus
    1 dB, since a better channel must never make DE fail.
    """
    if not 0 < target_ber < 0.5:
        raise ValueError("target_ber must be in (0, 0.5)")
    order = parse_modulation(modulation)
    rate = dists.design_rate if rate is None else rate
    unit = resolution_db
    lo_b, hi_b = int(math.ceil(bounds[0] / unit - 1e-9)), int(math.floor(bounds[1] / unit + 1e-9))
    traces: dict[int, DensityTrace] = {}

    def ok(x: int) -> bool:
        if x not in traces:
            if abs(unit - 0.01) < 1e-12:
                ch = _cached_channel(order, x, rate, grid)
            else:
                ch = init_pmf(order, x * unit, rate, grid)
            traces[x] = de_ber(dists, ch, schedule, max_iter, stop_at=target_ber)
        return traces[x].reached(target_ber) is not None

    x0 = min(max(int(round(initial_db / unit)), lo_b), hi_b)
    step = max(1, int(round(0.5 / unit)))
    if ok(x0):
        hi = x0
        lo = x0 - step
        while lo >= lo_b and ok(lo):
            hi, step = lo, step * 2
            lo = hi - step
        if lo < lo_b:
            if ok(lo_b):
                raise ThresholdNotFound(f"DE already succeeds at the lower bound {bounds[0]} dB")
            lo = lo_b
    else:
        lo = x0
        hi = x0 + step
        while hi <= hi_b and not ok(hi):
            lo, step = hi, step * 2
            hi = lo + step
        if hi > hi_b:
            if not ok(hi_b):
                raise ThresholdNotFound(f"DE does not reach BER {target_ber:g} below {bounds[1]} dB")
            hi = hi_b
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    if check_monotone:
        up = hi + int(round(1.0 / unit))
        if up <= hi_b and not ok(up):
            raise AssertionError(f"DE predicate not monotone: success at {hi * unit:.2f} dB, failure at {up * unit:.2f} dB")
    tr = traces[hi]
    return ThresholdResult(round(hi * unit, 10), tr.ber, tr.reached(target_ber), (lo * unit, hi * unit), len(traces),
                           str(schedule), "bpsk" if order == 2 else f"qam{order}")


__all__ = [
    "Grid", "DEFAULT_GRID", "QuantizedPmf", "GridMismatch", "ThresholdNotFound",
    "init_pmf_bpsk", "init_pmf_qam", "init_pmf", "pairwise_min_combine", "pairwise_min_combine_bruteforce",
    "scale_pmf", "check_pmf", "var_pmf", "DensityTrace", "de_ber", "ThresholdResult", "threshold_search",
    "DEFAULT_TARGET_BER", "DEFAULT_MAX_ITER",
]
