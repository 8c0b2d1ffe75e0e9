"""BPSK / Gray square-QAM over AWGN with exact LLR demapping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

#: Saturation magnitude shared by the demapper, the decoder and the DE grid.
LLR_MAX = 25.0

SUPPORTED_QAM = (4, 16, 64, 256)


@dataclass(frozen=True)
class ChannelModel:
    """``order`` is 2 for BPSK or M for square M-QAM; ``sigma`` is per real dimension."""

    order: int
    sigma: float
    code_rate: float = 1.0

    def __post_init__(self):
        if self.order != 2 and self.order not in SUPPORTED_QAM:
            raise ValueError(f"unsupported modulation order {self.order}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0 < self.code_rate <= 1:
            raise ValueError("code_rate must be in (0, 1]")

    @classmethod
    def from_name(cls, name: str, sigma: float = 1.0, code_rate: float = 1.0) -> "ChannelModel":
        return cls(parse_modulation(name), sigma, code_rate)

    @classmethod
    def at_ebn0(cls, name: str, ebn0_db: float, code_rate: float) -> "ChannelModel":
        order = parse_modulation(name)
        return cls(order, ebn0_to_sigma(ebn0_db, code_rate, bits_per_symbol(order)), code_rate)

    @property
    def is_bpsk(self) -> bool:
        return self.order == 2

    @property
    def bits_per_symbol(self) -> int:
        return bits_per_symbol(self.order)

    @property
    def name(self) -> str:
        return "bpsk" if self.is_bpsk else f"qam{self.order}"


def parse_modulation(name: str) -> int:
    name = name.strip().lower()
    if name == "bpsk":
        return 2
    if name in ("qpsk", "4qam"):
        return 4
    if name.startswith("qam") and name[3:].isdigit():
        order = int(name[3:])
        if order in SUPPORTED_QAM:
            return order
    raise ValueError(f"unknown modulation {name!r} (use bpsk, qam16, qam64, qam256)")


def bits_per_symbol(order: int) -> int:
    return 1 if order == 2 else int(math.log2(order))


def ebn0_to_sigma(ebn0_db: float, rate: float, bits_per_symbol: int) -> float:
    """Noise std per real dimension for a unit-energy constellation."""
    if not rate > 0 or rate > 1:
        raise ValueError("rate must be in (0, 1]")
    if bits_per_symbol < 1:
        raise ValueError("bits_per_symbol must be >= 1")
    return math.sqrt(1.0 / (2.0 * rate * bits_per_symbol * 10.0 ** (ebn0_db / 10.0)))


def sigma_to_ebn0(sigma: float, rate: float, bits_per_symbol: int) -> float:
    return 10.0 * math.log10(1.0 / (2.0 * rate * bits_per_symbol * sigma**2))


# ---------------------------------------------------------------------------
# Gray PAM per axis
# ---------------------------------------------------------------------------

def pam_table(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis levels and their bit labels for square ``order``-QAM.

    Level index ``t`` (from the most positive level down) carries the
    binary-reflected Gray code of ``t``, MSB first, so the all-zero label sits
    on the positive corner. Levels are scaled for unit average symbol energy.
    """
    L = math.isqrt(order)
    if L * L != order or L < 2:
        raise ValueError(f"order {order} is not a square QAM size")
    nb = int(math.log2(L))
    t = np.arange(L)
    levels = (L - 1 - 2 * t) / math.sqrt(2.0 * (order - 1) / 3.0)
    gray = t ^ (t >> 1)
    labels = ((gray[:, None] >> np.arange(nb - 1, -1, -1)[None, :]) & 1).astype(np.uint8)
    return levels, labels


def modulate(bits, model: ChannelModel) -> np.ndarray:
    """Bits -> symbols. BPSK gives a real vector; QAM gives an (..., symbols, 2) I/Q array."""
    bits = np.asarray(bits, dtype=np.uint8)
    if model.is_bpsk:
        return 1.0 - 2.0 * bits
    bps = model.bits_per_symbol
    if bits.shape[-1] % bps:
        raise ValueError(f"bit count {bits.shape[-1]} is not a multiple of {bps}")
    levels, _ = pam_table(model.order)
    half = bps // 2
    grouped = bits.reshape(bits.shape[:-1] + (-1, 2, half))
    weights = 1 << np.arange(half - 1, -1, -1)
    gray = (grouped * weights).sum(axis=-1)
    # inverse Gray: t = g ^ (g >> 1) ^ (g >> 2) ...
    t = gray.copy()
    shift = gray >> 1
    while shift.any():
        t ^= shift
        shift >>= 1
    return levels[t]


def awgn(symbols, sigma: float, seed=None) -> np.ndarray:
    """Add N(0, sigma^2) to every real dimension. ``seed`` may be a Generator."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    symbols = np.asarray(symbols, dtype=float)
    return symbols + sigma * rng.standard_normal(symbols.shape)


def pam_bit_llrs(y, sigma: float, order: int) -> np.ndarray:
    """Exact per-axis LLRs: input (...,) received amplitudes, output (..., bits_per_axis)."""
    levels, labels = pam_table(order)
    y = np.asarray(y, dtype=float)
    metric = -((y[..., None] - levels) ** 2) / (2.0 * sigma**2)
    out = np.empty(y.shape + (labels.shape[1],))
    for b in range(labels.shape[1]):
        zero = labels[:, b] == 0
        out[..., b] = logsumexp(metric[..., zero], axis=-1) - logsumexp(metric[..., ~zero], axis=-1)
    return out


def demap_llr(received, model: ChannelModel, llr_max: float = LLR_MAX) -> np.ndarray:
    """Channel LLRs (positive favours 0), saturated to +-llr_max."""
    received = np.asarray(received, dtype=float)
    if model.is_bpsk:
        llr = 2.0 * received / model.sigma**2
    else:
        per_axis = pam_bit_llrs(received, model.sigma, model.order)
        llr = per_axis.reshape(per_axis.shape[:-3] + (-1,))
    return np.clip(llr, -llr_max, llr_max)


def demap_llr_2d(received, model: ChannelModel, llr_max: float = LLR_MAX) -> np.ndarray:
    """Full-constellation exact demapper; slow reference for :func:`demap_llr`."""
    levels, labels = pam_table(model.order)
    L = levels.size
    nb = labels.shape[1]
    pts_i, pts_q = np.meshgrid(levels, levels, indexing="ij")
    pt_labels = np.concatenate([np.repeat(labels, L, axis=0), np.tile(labels, (L, 1))], axis=1)
    r = np.asarray(received, dtype=float)
    d2 = (r[..., 0, None] - pts_i.ravel()) ** 2 + (r[..., 1, None] - pts_q.ravel()) ** 2
    metric = -d2 / (2.0 * model.sigma**2)
    out = np.empty(r.shape[:-1] + (2 * nb,))
    for b in range(2 * nb):
        zero = pt_labels[:, b] == 0
        out[..., b] = logsumexp(metric[..., zero], axis=-1) - logsumexp(metric[..., ~zero], axis=-1)
    out = out.reshape(out.shape[:-2] + (-1,))
    return np.clip(out, -llr_max, llr_max)


def hard_slice(llrs) -> np.ndarray:
    return (np.asarray(llrs) < 0).astype(np.uint8)


__all__ = [
    "LLR_MAX", "ChannelModel", "parse_modulation", "bits_per_symbol", "ebn0_to_sigma",
    "sigma_to_ebn0", "pam_table", "modulate", "awgn", "pam_bit_llrs", "demap_llr",
    "demap_llr_2d", "hard_slice",
]
