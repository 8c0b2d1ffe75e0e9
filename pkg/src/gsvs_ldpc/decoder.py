"""Flooding message-passing LDPC decoding with per-iteration scaling schedules.

Check-node rules are sum-product (tanh rule) and min-sum. Min-sum outputs are
scaled by a factor taken from a :class:`ScalingSchedule`:

* ``NoScaling``  -- plain min-sum, alpha = 1
* ``Constant``   -- alpha fixed
* ``SVS``        -- alpha_i = 1 - 2^-ceil(i/S)
* ``GSVS``       -- alpha_i = 1 - (1 - alpha0) * 2^-(ceil(i/S) - 1)
* ``TwoDim``     -- per check-degree and per variable-degree factors

A batch of words is decoded together as a (batch, edges) message array;
words leave the batch as soon as their syndrome is satisfied.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

import numpy as np

from .channel import LLR_MAX
from .code import ParityCheckMatrix


# ---------------------------------------------------------------------------
# Scaling schedules
# ---------------------------------------------------------------------------

def _block(i: int, step: int) -> int:
    """ceil(i / step) for positive integers."""
    if i < 1:
        raise ValueError("iteration index starts at 1")
    return -(-i // step)


@dataclass(frozen=True)
class NoScaling:
    def alpha(self, i: int) -> float:
        return 1.0

    def __str__(self):
        return "none"


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        if not 0 < self.value <= 1:
            raise ValueError("constant alpha must be in (0, 1]")

    def alpha(self, i: int) -> float:
        return self.value

    def __str__(self):
        return f"const:{self.value:g}"


@dataclass(frozen=True)
class SVS:
    step: int

    def __post_init__(self):
        if int(self.step) != self.step or self.step < 1:
            raise ValueError("SVS step must be an integer >= 1")

    def alpha(self, i: int) -> float:
        return 1.0 - math.ldexp(1.0, -_block(i, self.step))

    def __str__(self):
        return f"svs:{self.step}"


@dataclass(frozen=True)
class GSVS:
    alpha0: float
    step: int

    def __post_init__(self):
        if not 0 < self.alpha0 <= 1:
            raise ValueError("alpha0 must be in (0, 1]")
        if int(self.step) != self.step or self.step < 1:
            raise ValueError("GSVS step must be an integer >= 1")

    def alpha(self, i: int) -> float:
        shifts = _block(i, self.step) - 1
        if shifts == 0:
            return self.alpha0
        return 1.0 - math.ldexp(1.0 - self.alpha0, -shifts)

    def __str__(self):
        return f"gsvs:{self.alpha0:g},{self.step}"


# Baseline factor tables for the (16200, 7200) code: check degree -> factor,
# variable degree -> factor.
TWO_DIM_CHECK_FACTORS = {4: 0.94, 5: 0.92, 6: 0.88, 7: 0.86}
TWO_DIM_VAR_FACTORS = {1: 1.00, 2: 1.00, 3: 0.91, 8: 0.83}


@dataclass(frozen=True)
class TwoDim:
    check_factors: Mapping[int, float] = field(default_factory=lambda: dict(TWO_DIM_CHECK_FACTORS))
    var_factors: Mapping[int, float] = field(default_factory=lambda: dict(TWO_DIM_VAR_FACTORS))

    def alpha(self, i: int) -> float:
        raise TypeError("TwoDim scaling is degree dependent; it has no single alpha")

    def __str__(self):
        return "2d"

    def __hash__(self):
        return hash((tuple(sorted(self.check_factors.items())), tuple(sorted(self.var_factors.items()))))


ScalingSchedule = Union[NoScaling, Constant, SVS, GSVS, TwoDim]


def schedule_alpha(schedule: ScalingSchedule, i: int) -> float:
    """Scaling factor applied to check outputs in iteration ``i`` (1-based)."""
    if i < 1:
        raise ValueError("iteration index starts at 1")
    if isinstance(schedule, (NoScaling, TwoDim)):
        raise TypeError(f"{type(schedule).__name__} has no per-iteration alpha")
    return schedule.alpha(i)


def parse_schedule(text: str) -> tuple[str, ScalingSchedule]:
    """Parse ``spa | none | const:<a> | svs:<S> | gsvs:<a0>,<S> | 2d`` into (rule, schedule)."""
    text = text.strip().lower()
    kind, _, arg = text.partition(":")
    try:
        if kind == "spa" and not arg:
            return "spa", NoScaling()
        if kind in ("none", "minsum") and not arg:
            return "minsum", NoScaling()
        if kind == "const":
            return "minsum", Constant(float(arg))
        if kind == "svs":
            return "minsum", SVS(int(arg))
        if kind == "gsvs":
            a0, s = arg.split(",")
            return "minsum", GSVS(float(a0), int(s))
        if kind == "2d" and not arg:
            return "minsum", TwoDim()
    except ValueError as exc:
        raise ValueError(f"bad schedule {text!r}: {exc}") from None
    raise ValueError(f"bad schedule {text!r}; expected spa | none | const:<a> | svs:<S> | gsvs:<a0>,<S> | 2d")


# ---------------------------------------------------------------------------
# Check-node kernels on (..., degree, checks) blocks: axis -2 runs over the
# edges of one check, so reductions are element-wise across long rows.
# ---------------------------------------------------------------------------

def _minsum_magnitudes(v: np.ndarray):
    """Extrinsic sign flag and min magnitude per edge of each check."""
    mag = np.abs(v)
    neg = v < 0
    min1 = mag.min(axis=-2, keepdims=True)
    is_min = mag == min1
    min2 = np.where(is_min, np.inf, mag).min(axis=-2, keepdims=True)
    # tied minima: every edge sees the same min
    min2 = np.where(is_min.sum(axis=-2, keepdims=True, dtype=np.int8) >= 2, min1, min2)
    out_mag = np.where(is_min, min2, min1)
    parity = (neg.sum(axis=-2, keepdims=True, dtype=np.int8) & 1).astype(bool)
    return neg ^ parity, out_mag


def _minsum_kernel(v, scale):
    out_neg, out_mag = _minsum_magnitudes(v)
    out = np.where(out_neg, -out_mag, out_mag)
    if not (np.isscalar(scale) and scale == 1.0):
        out = out * scale
    return out


def _phi(x: np.ndarray) -> np.ndarray:
    """phi(x) = -log tanh(x/2), an involution on (0, inf)."""
    with np.errstate(divide="ignore"):
        return np.log1p(np.exp(-x)) - np.log(-np.expm1(-x))


def _spa_kernel(v, llr_max):
    out_neg, min_mag = _minsum_magnitudes(v)
    p = _phi(np.clip(np.abs(v), 1e-300, None))
    ext = np.maximum(p.sum(axis=-2, keepdims=True) - p, 0.0)
    mag = np.where(ext > 0, _phi(np.maximum(ext, 1e-300)), llr_max)
    # the tanh rule never exceeds the smallest other magnitude
    mag = np.minimum(np.minimum(mag, min_mag), llr_max)
    return np.where(out_neg, -mag, mag)


def _single_check(incoming):
    v = np.asarray(incoming, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ValueError("a check update needs at least two incoming messages")
    return v[:, None]


def check_update_minsum(incoming, alpha: float = 1.0) -> np.ndarray:
    """Scaled min-sum outputs for one check: alpha * prod(sign others) * min|others|."""
    return _minsum_kernel(_single_check(incoming), float(alpha))[:, 0]


def check_update_spa(incoming, llr_max: float = LLR_MAX) -> np.ndarray:
    """Sum-product outputs 2 atanh(prod tanh(v_other / 2)) for one check, clipped to llr_max."""
    return _spa_kernel(_single_check(incoming), llr_max)[:, 0]


def check_update_2d(incoming, check_degree: int | None = None, factors: Mapping[int, float] = TWO_DIM_CHECK_FACTORS,
                    fallbacks: dict | None = None) -> np.ndarray:
    """Min-sum output scaled by the factor of this check's degree.

    Missing degrees fall back to 1.0 and bump ``fallbacks["check"]`` when a
    counter dict is supplied.
    """
    v = np.asarray(incoming, dtype=float)
    degree = v.size if check_degree is None else check_degree
    factor = factors.get(degree)
    if factor is None:
        factor = 1.0
        if fallbacks is not None:
            fallbacks["check"] = fallbacks.get("check", 0) + 1
    return check_update_minsum(v, factor)


# ---------------------------------------------------------------------------
# Decoder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecoderConfig:
    rule: str = "minsum"
    schedule: ScalingSchedule = field(default_factory=NoScaling)
    max_iterations: int = 40
    llr_max: float = LLR_MAX

    def __post_init__(self):
        if self.rule not in ("minsum", "spa"):
            raise ValueError(f"unknown check rule {self.rule!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.rule == "spa" and isinstance(self.schedule, TwoDim):
            raise ValueError("TwoDim scaling requires the min-sum rule")

    @classmethod
    def from_string(cls, text: str, max_iterations: int = 40, llr_max: float = LLR_MAX) -> "DecoderConfig":
        rule, schedule = parse_schedule(text)
        return cls(rule, schedule, max_iterations, llr_max)

    def describe(self) -> str:
        return "spa" if self.rule == "spa" else str(self.schedule)


@dataclass
class DecodeResult:
    bits: np.ndarray
    success: bool
    iterations_used: int
    final_llrs: np.ndarray


@dataclass
class BatchDecodeResult:
    bits: np.ndarray          # (batch, n) uint8
    success: np.ndarray       # (batch,) bool
    iterations_used: np.ndarray  # (batch,) int
    final_llrs: np.ndarray    # (batch, n)

    def __len__(self):
        return self.success.size

    def __getitem__(self, b: int) -> DecodeResult:
        return DecodeResult(self.bits[b], bool(self.success[b]), int(self.iterations_used[b]), self.final_llrs[b])


@dataclass
class IterationState:
    """Snapshot handed to trace callbacks; arrays are (active_batch, ...)."""

    iteration: int
    active: np.ndarray
    check_msgs: np.ndarray
    var_msgs: np.ndarray
    llrs: np.ndarray
    bits: np.ndarray
    satisfied: np.ndarray


class Decoder:
    """Flooding decoder bound to one parity-check matrix and configuration.

    Internally checks and variables are renumbered so that nodes of equal
    degree are contiguous, and the edges of each degree class are stored
    slot-major (edge slot, then node) so the class updates as one
    (batch, degree, nodes) block. Messages reported through :meth:`trace`
    use that internal edge order.

    The object holds only read-only index arrays, so one instance may serve
    any number of concurrent :meth:`decode` calls.
    """

    def __init__(self, H: ParityCheckMatrix, config: DecoderConfig = DecoderConfig()):
        if (H.check_degrees < 2).any():
            raise ValueError("degree-1 checks are not supported by the check-node update")
        self.H = H
        self.config = config
        n, m = H.n, H.m

        # variables sorted by degree; var_perm[new] = old
        self.var_perm = np.argsort(H.var_degrees, kind="stable")
        var_new = np.empty(n, dtype=np.int64)
        var_new[self.var_perm] = np.arange(n)
        check_perm = np.argsort(H.check_degrees, kind="stable")
        cdeg = H.check_degrees[check_perm]
        self.check_blocks = self._blocks(cdeg)
        parts = []
        for d, c0, count, _ in self.check_blocks:
            rows = np.array([H.rows[i] for i in check_perm[c0:c0 + count]], dtype=np.int64)
            parts.append(var_new[rows].T.ravel())
        self.edge_var = np.concatenate(parts)
        self.edge_check_deg = np.concatenate([np.full(d * count, d) for d, _, count, _ in self.check_blocks])
        vdeg = H.var_degrees[self.var_perm]
        self.var_blocks = self._blocks(vdeg)
        # var_order[p] = edge sitting at slot-major position p of the variable-side layout
        by_var = np.argsort(self.edge_var, kind="stable")
        var_sorted = self.edge_var[by_var]
        first = np.searchsorted(var_sorted, np.arange(n))
        slot = np.arange(by_var.size) - first[var_sorted]
        block_of = np.repeat(np.arange(len(self.var_blocks)), [c for _, _, c, _ in self.var_blocks])
        b = block_of[var_sorted]
        node0 = np.array([nd for _, nd, _, _ in self.var_blocks])[b]
        count = np.array([c for _, _, c, _ in self.var_blocks])[b]
        e0 = np.array([e for _, _, _, e in self.var_blocks])[b]
        pos = e0 + slot * count + (var_sorted - node0)
        self.var_order = np.empty_like(by_var)
        self.var_order[pos] = by_var

        self.fallbacks = {"check": 0, "var": 0}
        self.check_scale = None
        self.var_scale = None
        sched = config.schedule
        if isinstance(sched, TwoDim):
            missing_c = [d for d in cdeg.tolist() if d not in sched.check_factors]
            missing_v = [d for d in vdeg.tolist() if d not in sched.var_factors]
            self.fallbacks = {"check": len(missing_c), "var": len(missing_v)}
            if missing_c or missing_v:
                warnings.warn(f"2D scaling: no factor for {len(missing_c)} checks and "
                              f"{len(missing_v)} variables; using 1.0", stacklevel=2)
            self.check_scale = np.array([sched.check_factors.get(d, 1.0) for d in self.edge_check_deg.tolist()])
            var_factor = np.array([sched.var_factors.get(d, 1.0) for d in vdeg.tolist()])
            self.var_scale = var_factor[self.edge_var]

    @staticmethod
    def _blocks(sorted_degrees: np.ndarray) -> list[tuple[int, int, int, int]]:
        """(degree, first node, node count, first edge) per run of equal degree."""
        blocks = []
        node = edge = 0
        for d in np.unique(sorted_degrees).tolist():
            count = int(np.count_nonzero(sorted_degrees == d))
            blocks.append((int(d), node, count, edge))
            node += count
            edge += d * count
        return blocks

    # -- helpers -------------------------------------------------------------

    def _alpha(self, it: int):
        sched = self.config.schedule
        if isinstance(sched, NoScaling):
            return 1.0
        return sched.alpha(it)

    def _check_update(self, v: np.ndarray, it: int) -> np.ndarray:
        B = v.shape[0]
        out = np.empty_like(v)
        if self.config.rule == "minsum" and self.check_scale is None:
            alpha = self._alpha(it)
        for d, _, count, e0 in self.check_blocks:
            e1 = e0 + d * count
            blk = v[:, e0:e1].reshape(B, d, count)
            if self.config.rule == "spa":
                res = _spa_kernel(blk, self.config.llr_max)
            elif self.check_scale is not None:
                res = _minsum_kernel(blk, self.check_scale[e0])
            else:
                res = _minsum_kernel(blk, alpha)
            out[:, e0:e1] = res.reshape(B, -1)
        return out

    def _var_sums(self, u: np.ndarray) -> np.ndarray:
        B = u.shape[0]
        ordered = u[:, self.var_order]
        return np.concatenate([ordered[:, e0:e0 + d * count].reshape(B, d, count).sum(axis=1)
                               for d, _, count, e0 in self.var_blocks], axis=1)

    def _syndrome_ok(self, bits: np.ndarray) -> np.ndarray:
        eb = bits[:, self.edge_var]
        B = bits.shape[0]
        ok = np.ones(B, dtype=bool)
        for d, _, count, e0 in self.check_blocks:
            par = eb[:, e0:e0 + d * count].reshape(B, d, count).sum(axis=1, dtype=np.int8) & 1
            ok &= ~par.any(axis=1)
        return ok

    # -- decoding ------------------------------------------------------------

    def decode_batch(self, channel_llrs, on_iteration: Callable[[IterationState], None] | None = None) -> BatchDecodeResult:
        L = np.atleast_2d(np.asarray(channel_llrs, dtype=float))
        if L.shape[1] != self.H.n:
            raise ValueError(f"expected {self.H.n} LLRs per word, got {L.shape[1]}")
        lmax = self.config.llr_max
        L = np.clip(L, -lmax, lmax)
        B = L.shape[0]
        bits_out = (L < 0).astype(np.uint8)
        llr_out = L.copy()
        iters = np.full(B, self.config.max_iterations, dtype=np.int64)
        success = np.zeros(B, dtype=bool)
        perm = self.var_perm

        active = np.arange(B)
        La = L[:, perm]
        v = La[:, self.edge_var]
        for it in range(1, self.config.max_iterations + 1):
            u = np.clip(self._check_update(v, it), -lmax, lmax)
            if self.var_scale is not None:
                u = u * self.var_scale
            total = La + self._var_sums(u)
            v = np.clip(total[:, self.edge_var] - u, -lmax, lmax)
            post = np.clip(total, -lmax, lmax)
            bits = (post < 0).astype(np.uint8)
            ok = self._syndrome_ok(bits)
            if on_iteration is not None:
                on_iteration(IterationState(it, active.copy(), u.copy(), v.copy(), post[:, np.argsort(perm)],
                                            bits[:, np.argsort(perm)], ok.copy()))
            bits_out[active[:, None], perm] = bits
            llr_out[active[:, None], perm] = post
            if ok.any():
                done = active[ok]
                success[done] = True
                iters[done] = it
                keep = ~ok
                active, La, v = active[keep], La[keep], v[keep]
                if active.size == 0:
                    break
        return BatchDecodeResult(bits_out, success, iters, llr_out)

    def decode(self, channel_llrs) -> DecodeResult:
        llrs = np.asarray(channel_llrs, dtype=float)
        if llrs.ndim != 1:
            raise ValueError("decode takes a single word; use decode_batch for batches")
        return self.decode_batch(llrs[None, :])[0]

    def trace(self, channel_llrs) -> list[IterationState]:
        """Per-iteration states for a single word (stops where decode stops)."""
        states: list[IterationState] = []
        self.decode_batch(np.asarray(channel_llrs, dtype=float)[None, :], states.append)
        return states


def decode(H: ParityCheckMatrix, channel_llrs, config: DecoderConfig = DecoderConfig()) -> DecodeResult:
    return Decoder(H, config).decode(channel_llrs)


__all__ = [
    "NoScaling", "Constant", "SVS", "GSVS", "TwoDim", "ScalingSchedule",
    "TWO_DIM_CHECK_FACTORS", "TWO_DIM_VAR_FACTORS",
    "schedule_alpha", "parse_schedule", "check_update_minsum", "check_update_spa",
    "check_update_2d", "DecoderConfig", "DecodeResult", "BatchDecodeResult",
    "IterationState", "Decoder", "decode",
]
