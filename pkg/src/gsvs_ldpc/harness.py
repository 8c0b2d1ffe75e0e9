"""Monte-Carlo word/bit error rate and iteration-count measurement.

Each simulated word ``w`` draws its information bits and noise from its own
generator seeded by ``(base_seed, decoder name, Eb/N0, w)``, and blocks of
words are folded strictly in index order. A point's result therefore depends
only on the configuration, never on how many workers computed it.
"""

from __future__ import annotations

import configparser
import csv
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Iterator

import numpy as np

from .channel import ChannelModel, awgn, demap_llr, ebn0_to_sigma, modulate, parse_modulation
from .code import (Encoder, ParityCheckMatrix, build_encoder, dvbt2_short_half_profile, encode, generate_ira_code,
                   generate_regular_code, load_alist)
from .decoder import Decoder, DecoderConfig

CSV_COLUMNS = ["config", "ebn0_db", "words", "word_errors", "bit_errors", "wer", "ber", "avg_iters", "seconds"]
INF_PROXY_SIGMA = 1e-6


class ConfigError(ValueError):
    pass


def default_workers() -> int:
    env = os.environ.get("LDPC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"LDPC_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def load_code(spec: str) -> ParityCheckMatrix:
    """An alist path, ``regular:<n>,<dv>,<dc>[,<seed>]`` or ``dvbt2-half[:<scale>[,<seed>]]``."""
    kind, _, arg = spec.partition(":")
    if kind == "regular":
        parts = [int(x) for x in arg.split(",")]
        if len(parts) not in (3, 4):
            raise ConfigError("regular code spec is regular:<n>,<dv>,<dc>[,<seed>]")
        n, dv, dc = parts[:3]
        return generate_regular_code(n, dv, dc, parts[3] if len(parts) == 4 else 0)
    if kind == "dvbt2-half":
        parts = [int(x) for x in arg.split(",")] if arg else []
        scale = parts[0] if parts else 1
        seed = parts[1] if len(parts) > 1 else 0
        info, m = dvbt2_short_half_profile(scale)
        return generate_ira_code(info, m, seed)
    with open(spec) as fh:
        return load_alist(fh)


@dataclass
class SimConfig:
    code: str
    decoders: dict[str, str]
    modulation: str = "bpsk"
    ebn0_start: float = 1.0
    ebn0_stop: float = 1.0
    ebn0_step: float = 0.25
    min_word_errors: int = 100
    max_words: int = 1_000_000
    seed: int = 0
    workers: int | None = None
    max_iterations: int = 40
    fail_iters: str = "max"
    batch: int = 64

    def __post_init__(self):
        if not self.ebn0_step > 0:
            raise ConfigError("Eb/N0 step must be positive")
        if self.ebn0_stop < self.ebn0_start:
            raise ConfigError("Eb/N0 stop is below start")
        if self.min_word_errors < 1 or self.max_words < 1 or self.batch < 1:
            raise ConfigError("min_word_errors, max_words and batch must be >= 1")
        if self.fail_iters not in ("max", "exclude"):
            raise ConfigError("fail_iters is 'max' or 'exclude'")
        if not self.decoders:
            raise ConfigError("no decoders configured")
        parse_modulation(self.modulation)
        for name, text in self.decoders.items():
            try:
                DecoderConfig.from_string(text, self.max_iterations)
            except ValueError as exc:
                raise ConfigError(f"decoder {name!r}: {exc}") from None

    @property
    def ebn0_points(self) -> list[float]:
        count = int(math.floor((self.ebn0_stop - self.ebn0_start) / self.ebn0_step + 1e-9)) + 1
        return [round(self.ebn0_start + i * self.ebn0_step, 10) for i in range(count)]

    def decoder_config(self, name: str) -> DecoderConfig:
        return DecoderConfig.from_string(self.decoders[name], self.max_iterations)


def read_config(path_or_text: str) -> SimConfig:
    """Read the ``[section]`` key/value config described in the README.

    The argument is a file path, or the config text itself when it spans lines.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        if "\n" in path_or_text:
            cp.read_string(path_or_text)
        else:
            with open(path_or_text) as fh:
                cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        code = cp.get("code", "alist", fallback=None) or cp.get("code", "generator")
    except (configparser.NoSectionError, configparser.NoOptionError):
        raise ConfigError("[code] needs 'alist' or 'generator'") from None
    if not cp.has_section("decoders"):
        raise ConfigError("missing [decoders] section")
    run = cp["run"] if cp.has_section("run") else {}
    sweep = cp["sweep"] if cp.has_section("sweep") else {}
    stop = cp["stop"] if cp.has_section("stop") else {}
    chan = cp["channel"] if cp.has_section("channel") else {}
    try:
        start = float(sweep.get("start", 1.0))
        workers = run.get("workers")
        return SimConfig(
            code=code,
            decoders=dict(cp["decoders"]),
            modulation=chan.get("modulation", "bpsk"),
            ebn0_start=start,
            ebn0_stop=float(sweep.get("stop", start)),
            ebn0_step=float(sweep.get("step", 0.25)),
            min_word_errors=int(stop.get("min_word_errors", 100)),
            max_words=int(float(stop.get("max_words", 1_000_000))),
            seed=int(run.get("seed", 0)),
            workers=int(workers) if workers else None,
            max_iterations=int(run.get("max_iterations", 40)),
            fail_iters=run.get("fail_iters", "max"),
            batch=int(run.get("batch", 64)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class SimPoint:
    config: str
    ebn0_db: float
    words: int
    word_errors: int
    bit_errors: int
    info_bits_per_word: int
    iterations_total: int
    iterations_counted: int
    seconds: float
    raw_bit_errors: int = 0
    code_bits_per_word: int = 0

    @property
    def wer(self) -> float:
        return self.word_errors / self.words if self.words else math.nan

    @property
    def ber(self) -> float:
        return self.bit_errors / (self.words * self.info_bits_per_word) if self.words else math.nan

    @property
    def raw_ber(self) -> float:
        """Hard-decision error rate of the channel LLRs before decoding."""
        return self.raw_bit_errors / (self.words * self.code_bits_per_word) if self.words else math.nan

    @property
    def avg_iterations(self) -> float:
        return self.iterations_total / self.iterations_counted if self.iterations_counted else math.nan

    def wer_interval(self, confidence: float = 0.95) -> tuple[float, float]:
        return binomial_interval(self.word_errors, self.words, confidence)

    def csv_row(self) -> list:
        return [self.config, f"{self.ebn0_db:g}", self.words, self.word_errors, self.bit_errors,
                f"{self.wer:.6e}", f"{self.ber:.6e}", f"{self.avg_iterations:.4f}", f"{self.seconds:.3f}"]


def binomial_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Clopper-Pearson interval for k successes in n trials."""
    from scipy.stats import beta

    a = 1.0 - confidence
    lo = 0.0 if k == 0 else float(beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


# ---------------------------------------------------------------------------
# Work units
# ---------------------------------------------------------------------------

def word_rng(base_seed: int, name: str, ebn0_db: float, word: int) -> np.random.Generator:
    """Counter-based generator for one simulated word (Philox keyed by a SeedSequence)."""
    ebn0_key = int(round(ebn0_db * 1000)) if math.isfinite(ebn0_db) else 2**31 - 1
    ss = np.random.SeedSequence([base_seed & 0xFFFFFFFF, zlib.crc32(name.encode()), ebn0_key & 0xFFFFFFFF, word])
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class _Context:
    H: ParityCheckMatrix
    encoder: Encoder
    modulation: str
    decoders: dict[str, Decoder] = field(default_factory=dict)

    @property
    def rate(self) -> float:
        return self.encoder.k / self.H.n

    def decoder(self, name: str, cfg: DecoderConfig) -> Decoder:
        if name not in self.decoders:
            self.decoders[name] = Decoder(self.H, cfg)
        return self.decoders[name]


def _simulate_block(ctx: _Context, name: str, dcfg: DecoderConfig, seed: int, ebn0_db: float, sigma: float,
                    first: int, count: int) -> dict[str, np.ndarray]:
    enc, n = ctx.encoder, ctx.H.n
    model = ChannelModel(parse_modulation(ctx.modulation), sigma, min(1.0, max(ctx.rate, 1e-9)))
    bps = model.bits_per_symbol
    pad = (-n) % bps
    info = np.empty((count, enc.k), dtype=np.uint8)
    noise_shape = (n + pad,) if model.is_bpsk else ((n + pad) // bps, 2)
    noise = np.empty((count,) + noise_shape)
    pad_bits = np.empty((count, pad), dtype=np.uint8)
    for t in range(count):
        rng = word_rng(seed, name, ebn0_db, first + t)
        info[t] = rng.integers(0, 2, enc.k, dtype=np.uint8)
        pad_bits[t] = rng.integers(0, 2, pad, dtype=np.uint8)
        noise[t] = rng.standard_normal(noise_shape)
    code = encode(enc, info)
    tx = modulate(np.concatenate([code, pad_bits], axis=1), model)
    llr = demap_llr(tx + sigma * noise, model)[:, :n]
    res = ctx.decoder(name, dcfg).decode_batch(llr)
    info_err = (enc.extract_info(res.bits) != info).sum(axis=1)
    word_err = (res.bits != code).any(axis=1)
    return {"word_err": word_err, "bit_err": info_err, "iters": res.iterations_used, "success": res.success,
            "raw_err": ((llr < 0) != code.astype(bool)).sum(axis=1)}


_WORKER_CTX: _Context | None = None


def _init_worker(H, encoder, modulation):
    global _WORKER_CTX
    _WORKER_CTX = _Context(H, encoder, modulation)


def _worker_block(args):
    return _simulate_block(_WORKER_CTX, *args)


class Simulator:
    """Holds the code, its encoder and decoders for the points of one configuration."""

    def __init__(self, config: SimConfig, H: ParityCheckMatrix | None = None, encoder: Encoder | None = None):
        self.config = config
        H = H if H is not None else load_code(config.code)
        encoder = encoder if encoder is not None else build_encoder(H)
        self.ctx = _Context(H, encoder, config.modulation)
        self.workers = config.workers or default_workers()

    @property
    def rate(self) -> float:
        return self.ctx.rate

    def _blocks(self, name, dcfg, ebn0_db, sigma) -> Iterator[dict]:
        cfg = self.config
        starts = range(0, cfg.max_words, cfg.batch)
        args = ((name, dcfg, cfg.seed, ebn0_db, sigma, s, min(cfg.batch, cfg.max_words - s)) for s in starts)
        if self.workers <= 1:
            for a in args:
                yield _simulate_block(self.ctx, *a)
            return
        with ProcessPoolExecutor(self.workers, initializer=_init_worker,
                                 initargs=(self.ctx.H, self.ctx.encoder, self.ctx.modulation)) as pool:
            pending = []
            for a in args:
                pending.append(pool.submit(_worker_block, a))
                if len(pending) >= 2 * self.workers:
                    yield pending.pop(0).result()
            while pending:
                yield pending.pop(0).result()

    def run_point(self, decoder_name: str, ebn0_db: float, sigma: float | None = None) -> SimPoint:
        cfg = self.config
        dcfg = cfg.decoder_config(decoder_name)
        if sigma is None:
            if math.isinf(ebn0_db):
                sigma = INF_PROXY_SIGMA
            else:
                sigma = ebn0_to_sigma(ebn0_db, self.rate, ChannelModel.from_name(cfg.modulation).bits_per_symbol)
        t0 = time.perf_counter()
        words = word_errors = bit_errors = iters_total = iters_counted = raw = 0
        blocks = self._blocks(decoder_name, dcfg, ebn0_db, sigma)
        try:
            for blk in blocks:
                we = blk["word_err"]
                cut = we.size
                need = cfg.min_word_errors - word_errors
                if we.sum() >= need:
                    cut = int(np.flatnonzero(np.cumsum(we) >= need)[0]) + 1
                sl = slice(0, cut)
                words += cut
                word_errors += int(we[sl].sum())
                bit_errors += int(blk["bit_err"][sl].sum())
                raw += int(blk["raw_err"][sl].sum())
                if cfg.fail_iters == "max":
                    iters_total += int(blk["iters"][sl].sum())
                    iters_counted += cut
                else:
                    ok = blk["success"][sl]
                    iters_total += int(blk["iters"][sl][ok].sum())
                    iters_counted += int(ok.sum())
                if word_errors >= cfg.min_word_errors or words >= cfg.max_words:
                    break
        finally:
            if hasattr(blocks, "close"):
                blocks.close()
        return SimPoint(decoder_name, ebn0_db, words, word_errors, bit_errors, self.ctx.encoder.k, iters_total,
                        iters_counted, time.perf_counter() - t0, raw, self.ctx.H.n)

    def run_curve(self, out: IO[str] | None = None) -> list[SimPoint]:
        """Every (decoder, Eb/N0) point; each row is written and flushed as soon as it completes."""
        writer = None
        if out is not None:
            out.write(f"# avg_iters counts failed words as {'max_iterations' if self.config.fail_iters == 'max' else 'excluded'}; "
                      f"ber over information bits; code={self.config.code} modulation={self.config.modulation}\n")
            writer = csv.writer(out, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            out.flush()
        points = []
        for name in self.config.decoders:
            for e in self.config.ebn0_points:
                pt = self.run_point(name, e)
                points.append(pt)
                if writer is not None:
                    writer.writerow(pt.csv_row())
                    out.flush()
        return points


def run_point(config: SimConfig, decoder_name: str, ebn0_db: float) -> SimPoint:
    return Simulator(config).run_point(decoder_name, ebn0_db)


def run_curve(config: SimConfig, out: IO[str] | None = None) -> list[SimPoint]:
    return Simulator(config).run_curve(out)


def ber_crossing(points: list[SimPoint], target: float) -> float:
    """Eb/N0 where BER first falls to ``target``, interpolating log10(BER) linearly in dB.

    Points are sorted by Eb/N0; a zero-BER point counts as below any target.
    Raises ValueError when the curve does not cross ``target``.
    """
    pts = sorted(points, key=lambda p: p.ebn0_db)
    for a, b in zip(pts, pts[1:]):
        if a.ber > target >= b.ber:
            if b.ber == 0:
                return b.ebn0_db
            la, lb, lt = math.log10(a.ber), math.log10(b.ber), math.log10(target)
            return a.ebn0_db + (la - lt) / (la - lb) * (b.ebn0_db - a.ebn0_db)
    raise ValueError(f"BER curve does not cross {target:g} in the simulated range")


def read_csv(path_or_stream) -> list[dict]:
    """Rows of a result CSV (comment lines skipped), numeric columns converted."""
    fh = open(path_or_stream) if isinstance(path_or_stream, (str, os.PathLike)) else path_or_stream
    try:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    finally:
        if fh is not path_or_stream:
            fh.close()
    for r in rows:
        for k in CSV_COLUMNS[1:]:
            r[k] = float(r[k]) if k in ("ebn0_db", "wer", "ber", "avg_iters", "seconds") else int(r[k])
    return rows


__all__ = [
    "CSV_COLUMNS", "ConfigError", "SimConfig", "SimPoint", "Simulator", "read_config", "load_code",
    "run_point", "run_curve", "read_csv", "ber_crossing", "binomial_interval", "word_rng", "default_workers",
]
