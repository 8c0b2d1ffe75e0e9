"""Parity-check matrices, Tanner-graph adjacency, degree statistics and GF(2) encoding."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np


class AlistError(ValueError):
    """Malformed alist input. ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class ParityCheckMatrix:
    """Sparse binary H stored as per-check and per-variable adjacency lists.

    ``rows[i]`` lists the variables attached to check ``i`` and ``cols[j]``
    the checks attached to variable ``j``; both are sorted, 0-based tuples.
    """

    n: int
    m: int
    rows: tuple[tuple[int, ...], ...]
    cols: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.rows) != self.m or len(self.cols) != self.n:
            raise ValueError("rows/cols lengths do not match (m, n)")
        for i, row in enumerate(self.rows):
            if not row:
                raise ValueError(f"check {i} has no variables")
            if len(set(row)) != len(row):
                raise ValueError(f"check {i} lists a variable twice")
            if min(row) < 0 or max(row) >= self.n:
                raise ValueError(f"check {i} has an index out of range")
        for j, col in enumerate(self.cols):
            if not col:
                raise ValueError(f"variable {j} has no checks")
            if len(set(col)) != len(col):
                raise ValueError(f"variable {j} lists a check twice")
            if min(col) < 0 or max(col) >= self.m:
                raise ValueError(f"variable {j} has an index out of range")
        from_rows = {(i, j) for i, row in enumerate(self.rows) for j in row}
        from_cols = {(i, j) for j, col in enumerate(self.cols) for i in col}
        if from_rows != from_cols:
            raise ValueError("row lists and column lists are inconsistent")

    @classmethod
    def from_rows(cls, n: int, rows: Iterable[Iterable[int]]) -> "ParityCheckMatrix":
        rows_t = tuple(tuple(sorted(int(j) for j in row)) for row in rows)
        cols: list[list[int]] = [[] for _ in range(n)]
        for i, row in enumerate(rows_t):
            for j in row:
                if not 0 <= j < n:
                    raise ValueError(f"check {i} has an index out of range")
                cols[j].append(i)
        return cls(n, len(rows_t), rows_t, tuple(tuple(c) for c in cols))

    @classmethod
    def from_dense(cls, H) -> "ParityCheckMatrix":
        H = np.asarray(H)
        if H.ndim != 2 or not np.isin(H, (0, 1)).all():
            raise ValueError("H must be a 2-D 0/1 array")
        return cls.from_rows(H.shape[1], (np.flatnonzero(r) for r in H))

    def to_dense(self) -> np.ndarray:
        H = np.zeros((self.m, self.n), dtype=np.uint8)
        H[self.edge_check, self.edge_var] = 1
        return H

    @property
    def k_nominal(self) -> int:
        return self.n - self.m

    @property
    def num_edges(self) -> int:
        return int(self.edge_var.size)

    @cached_property
    def edge_check(self) -> np.ndarray:
        """Check index of every edge; edges are ordered check-major."""
        return np.repeat(np.arange(self.m), [len(r) for r in self.rows])

    @cached_property
    def edge_var(self) -> np.ndarray:
        return np.fromiter((j for row in self.rows for j in row), dtype=np.int64, count=sum(map(len, self.rows)))

    @cached_property
    def check_degrees(self) -> np.ndarray:
        return np.array([len(r) for r in self.rows], dtype=np.int64)

    @cached_property
    def var_degrees(self) -> np.ndarray:
        return np.array([len(c) for c in self.cols], dtype=np.int64)


def load_alist(stream: TextIO | str) -> ParityCheckMatrix:
    """Parse MacKay's alist format (1-based indices, zero padding allowed)."""
    text = stream if isinstance(stream, str) else stream.read()
    lines = [(no, ln.split()) for no, ln in enumerate(text.splitlines(), start=1)]
    lines = [(no, toks) for no, toks in lines if toks]
    pos = 0

    def take(expected: int | None = None, what: str = "") -> tuple[int, list[int]]:
        nonlocal pos
        if pos >= len(lines):
            raise AlistError(f"unexpected end of input while reading {what}", lines[-1][0] + 1 if lines else 1)
        no, toks = lines[pos]
        pos += 1
        try:
            vals = [int(t) for t in toks]
        except ValueError:
            raise AlistError(f"non-integer token in {what}", no) from None
        if expected is not None and len(vals) != expected:
            raise AlistError(f"expected {expected} values in {what}, got {len(vals)}", no)
        return no, vals

    no, (n, m) = take(2, "header")
    if n <= 0 or m <= 0:
        raise AlistError("n and m must be positive", no)
    take(2, "max degrees")
    no_cdeg, col_deg = take(n, "column degrees")
    no_rdeg, row_deg = take(m, "row degrees")

    cols: list[list[int]] = []
    for j in range(n):
        no, vals = take(None, f"column {j + 1}")
        idx = [v for v in vals if v != 0]
        if any(v < 0 or v > m for v in idx):
            raise AlistError(f"check index out of range in column {j + 1}", no)
        if len(idx) != col_deg[j]:
            raise AlistError(f"column {j + 1} has {len(idx)} entries, degree line says {col_deg[j]}", no)
        cols.append(sorted(v - 1 for v in idx))
    rows: list[list[int]] = []
    row_lines: list[int] = []
    for i in range(m):
        no, vals = take(None, f"row {i + 1}")
        idx = [v for v in vals if v != 0]
        if any(v < 0 or v > n for v in idx):
            raise AlistError(f"variable index out of range in row {i + 1}", no)
        if len(idx) != row_deg[i]:
            raise AlistError(f"row {i + 1} has {len(idx)} entries, degree line says {row_deg[i]}", no)
        rows.append(sorted(v - 1 for v in idx))
        row_lines.append(no)

    from_cols = {(i, j) for j, c in enumerate(cols) for i in c}
    for i, row in enumerate(rows):
        for j in row:
            if (i, j) not in from_cols:
                raise AlistError(f"row {i + 1} lists variable {j + 1} but column {j + 1} does not list the row", row_lines[i])
    if len(from_cols) != sum(map(len, rows)):
        raise AlistError("column lists contain entries missing from row lists", no_cdeg)
    try:
        return ParityCheckMatrix(n, m, tuple(map(tuple, rows)), tuple(map(tuple, cols)))
    except ValueError as exc:
        raise AlistError(str(exc)) from None


def dump_alist(H: ParityCheckMatrix) -> str:
    """Canonical alist text: lists padded with zeros to the max degree."""
    max_c = int(H.var_degrees.max())
    max_r = int(H.check_degrees.max())
    out = [f"{H.n} {H.m}", f"{max_c} {max_r}",
           " ".join(map(str, H.var_degrees)), " ".join(map(str, H.check_degrees))]
    for col in H.cols:
        out.append(" ".join(str(i + 1) for i in col) + " 0" * (max_c - len(col)))
    for row in H.rows:
        out.append(" ".join(str(j + 1) for j in row) + " 0" * (max_r - len(row)))
    return "\n".join(out) + "\n"


def save_alist(H: ParityCheckMatrix, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_alist(H))


@dataclass(frozen=True)
class DegreeDistributions:
    """Node- and edge-perspective degree distributions of a Tanner graph or ensemble."""

    check_node: dict[int, float]
    var_node: dict[int, float]
    check_edge: dict[int, float]
    var_edge: dict[int, float]

    @classmethod
    def from_node_counts(cls, var_counts: Mapping[int, float], check_counts: Mapping[int, float]) -> "DegreeDistributions":
        def node(counts):
            total = float(sum(counts.values()))
            return {int(d): c / total for d, c in sorted(counts.items()) if c > 0}

        def edge(counts):
            total = float(sum(d * c for d, c in counts.items()))
            return {int(d): d * c / total for d, c in sorted(counts.items()) if c > 0}

        return cls(node(check_counts), node(var_counts), edge(check_counts), edge(var_counts))

    @property
    def design_rate(self) -> float:
        # m/n = avg_var_degree / avg_check_degree
        dv = sum(d * f for d, f in self.var_node.items())
        dc = sum(d * f for d, f in self.check_node.items())
        return 1.0 - dv / dc


def degree_distributions(H: ParityCheckMatrix) -> DegreeDistributions:
    return DegreeDistributions.from_node_counts(Counter(H.var_degrees.tolist()), Counter(H.check_degrees.tolist()))


def syndrome(H: ParityCheckMatrix, bits) -> np.ndarray:
    """Parity of each check over ``bits``; works on a word or a (batch, n) array."""
    bits = np.asarray(bits)
    if bits.shape[-1] != H.n:
        raise ValueError(f"expected {H.n} bits, got {bits.shape[-1]}")
    b = (bits[..., H.edge_var] & 1).astype(np.uint8)
    starts = np.concatenate(([0], np.cumsum(H.check_degrees)[:-1]))
    return (np.add.reduceat(b, starts, axis=-1) & 1).astype(np.uint8)


# ---------------------------------------------------------------------------
# GF(2) encoding
# ---------------------------------------------------------------------------

def _pack(bits: np.ndarray) -> np.ndarray:
    """Pack the last axis of a 0/1 array into little-endian uint64 words."""
    bits = np.asarray(bits, dtype=np.uint8)
    pad = (-bits.shape[-1]) % 64
    if pad:
        bits = np.concatenate([bits, np.zeros(bits.shape[:-1] + (pad,), np.uint8)], axis=-1)
    return np.packbits(bits, axis=-1, bitorder="little").view(np.uint64)


@dataclass(frozen=True)
class Encoder:
    """Systematic encoder from the reduced row echelon form of H.

    ``info_cols`` are the free columns carrying the information bits and
    ``parity_cols`` the pivot columns; parity bit ``p`` is the XOR of the info
    bits selected by row ``p`` of the packed combination table.
    """

    n: int
    rank: int
    info_cols: np.ndarray
    parity_cols: np.ndarray
    table: np.ndarray = field(repr=False)  # (rank, words) uint64, bit t = info bit t

    @property
    def k(self) -> int:
        return self.n - self.rank

    @property
    def permutation(self) -> np.ndarray:
        """Column order putting information bits first, then parity bits."""
        return np.concatenate([self.info_cols, self.parity_cols])

    def encode(self, info) -> np.ndarray:
        return encode(self, info)

    def extract_info(self, codeword) -> np.ndarray:
        return np.asarray(codeword)[..., self.info_cols]


def build_encoder(H: ParityCheckMatrix) -> Encoder:
    """Gauss-Jordan elimination over GF(2) with column pivoting.

    Redundant rows are tolerated: they only lower the rank, so ``k = n - rank``.
    """
    n, m = H.n, H.m
    A = _pack(H.to_dense())
    pivots: list[int] = []
    r = 0
    for c in range(n):
        if r == m:
            break
        word, bit = divmod(c, 64)
        colbits = (A[r:, word] >> np.uint64(bit)) & np.uint64(1)
        hits = np.flatnonzero(colbits)
        if hits.size == 0:
            continue
        p = r + int(hits[0])
        if p != r:
            A[[r, p]] = A[[p, r]]
        mask = ((A[:, word] >> np.uint64(bit)) & np.uint64(1)).astype(bool)
        mask[r] = False
        if mask.any():
            A[mask] ^= A[r]
        pivots.append(c)
        r += 1
    rank = r
    parity_cols = np.array(pivots, dtype=np.int64)
    is_pivot = np.zeros(n, bool)
    is_pivot[parity_cols] = True
    info_cols = np.flatnonzero(~is_pivot)
    dense = np.unpackbits(A[:rank].view(np.uint8), axis=-1, bitorder="little")[:, :n]
    table = _pack(dense[:, info_cols])
    return Encoder(n, rank, info_cols, parity_cols, table)


def encode(enc: Encoder, info) -> np.ndarray:
    """Map ``k`` information bits (or a (batch, k) array) to codewords."""
    info = np.asarray(info, dtype=np.uint8)
    if info.shape[-1] != enc.k:
        raise ValueError(f"expected {enc.k} information bits, got {info.shape[-1]}")
    single = info.ndim == 1
    batch = np.atleast_2d(info)
    out = np.zeros((batch.shape[0], enc.n), dtype=np.uint8)
    out[:, enc.info_cols] = batch
    if enc.rank:
        packed = _pack(batch)
        # keep each chunk's (chunk, rank, words) intermediate below ~32 MB
        step = max(1, (4 << 20) // max(1, enc.table.size))
        for s in range(0, batch.shape[0], step):
            anded = packed[s:s + step, None, :] & enc.table[None, :, :]
            out[s:s + step, enc.parity_cols] = np.bitwise_count(anded).sum(axis=-1) & 1
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Synthetic codes
# ---------------------------------------------------------------------------

def _repair_duplicates(sock_var: np.ndarray, sock_check: np.ndarray, rng: np.random.Generator, rounds: int = 100) -> np.ndarray:
    """Swap check sockets until no (check, var) pair repeats; returns the fixed ``sock_check``."""
    sock_check = sock_check.copy()
    for _ in range(rounds):
        key = sock_check.astype(np.int64) * (int(sock_var.max()) + 1) + sock_var
        _, first = np.unique(key, return_index=True)
        dup = np.setdiff1d(np.arange(key.size), first)
        if dup.size == 0:
            return sock_check
        partners = rng.integers(0, key.size, size=dup.size)
        for a, b in zip(dup, partners):
            sock_check[a], sock_check[b] = sock_check[b], sock_check[a]
    raise RuntimeError(f"could not remove duplicate edges after {rounds} re-permutations")


def _from_sockets(n: int, m: int, sock_var: np.ndarray, sock_check: np.ndarray) -> ParityCheckMatrix:
    rows: list[list[int]] = [[] for _ in range(m)]
    for j, i in zip(sock_var.tolist(), sock_check.tolist()):
        rows[i].append(j)
    return ParityCheckMatrix.from_rows(n, rows)


def generate_regular_code(n: int, dv: int, dc: int, seed: int) -> ParityCheckMatrix:
    """Random (dv, dc)-regular code, deterministic in ``seed``.

    When ``dc`` divides ``n`` this is Gallager's construction: ``dv`` bands,
    each a random column permutation of a block-diagonal row partition, so no
    edge can repeat. Otherwise sockets are matched at random and duplicate
    edges are re-permuted.
    """
    if n <= 0 or dv < 1 or dc < 2:
        raise ValueError("need n > 0, dv >= 1, dc >= 2")
    if (n * dv) % dc:
        raise ValueError(f"n*dv = {n * dv} is not divisible by dc = {dc}")
    m = n * dv // dc
    rng = np.random.default_rng(seed)
    if n % dc == 0:
        per_band = n // dc
        rows = []
        for band in range(dv):
            perm = np.arange(n) if band == 0 else rng.permutation(n)
            rows.extend(perm.reshape(per_band, dc).tolist())
        return ParityCheckMatrix.from_rows(n, rows)
    sock_var = np.repeat(np.arange(n), dv)
    sock_check = rng.permutation(np.repeat(np.arange(m), dc))
    return _from_sockets(n, m, sock_var, _repair_duplicates(sock_var, sock_check, rng))


def generate_ira_code(info_degrees: Mapping[int, int], m: int, seed: int) -> ParityCheckMatrix:
    """Irregular repeat-accumulate code: random information part plus a dual-diagonal parity part.

    ``info_degrees`` maps column degree to the number of information columns of
    that degree. Parity column ``t`` touches checks ``t`` and ``t + 1`` (the
    last one only check ``m - 1``), giving the degree-2/degree-1 parity
    profile of eIRA codes. Information edges are spread as evenly as possible
    over the checks.
    """
    rng = np.random.default_rng(seed)
    degs = [d for d, c in sorted(info_degrees.items()) for _ in range(c)]
    k = len(degs)
    if k == 0 or m < 2:
        raise ValueError("need at least one information column and two checks")
    if max(degs) > m:
        raise ValueError("column degree exceeds the number of checks")
    sock_var = np.repeat(np.arange(k), degs)
    e = sock_var.size
    sock_check = rng.permutation(np.arange(e) % m)
    sock_check = _repair_duplicates(sock_var, sock_check, rng)
    rows: list[list[int]] = [[] for _ in range(m)]
    for j, i in zip(sock_var.tolist(), sock_check.tolist()):
        rows[i].append(j)
    for t in range(m):
        rows[t].append(k + t)
        if t + 1 < m:
            rows[t + 1].append(k + t)
    return ParityCheckMatrix.from_rows(k + m, rows)


def dvbt2_short_half_profile(scale: int = 1) -> tuple[dict[int, int], int]:
    """Column-degree profile of the DVB-T2 short rate-1/2 code, optionally shrunk.

    Returns ``(info_degrees, m)`` for :func:`generate_ira_code`: 1800 degree-8
    and 5400 degree-3 information columns with 9000 checks at ``scale=1``.
    """
    if 1800 % scale or 5400 % scale or 9000 % scale:
        raise ValueError("scale must divide 1800")
    return {8: 1800 // scale, 3: 5400 // scale}, 9000 // scale


def ira_degree_distributions(info_degrees: Mapping[int, int], m: int) -> DegreeDistributions:
    """Degree distributions of :func:`generate_ira_code` without building a matrix."""
    var_counts: Counter = Counter()
    for d, c in info_degrees.items():
        var_counts[d] += c
    var_counts[2] += m - 1
    var_counts[1] += 1
    e_info = sum(d * c for d, c in info_degrees.items())
    lo, extra = divmod(e_info, m)
    t = np.arange(m)
    deg = lo + (t < extra) + np.where(t == 0, 1, 2)
    return DegreeDistributions.from_node_counts(var_counts, Counter(deg.tolist()))


__all__ = [
    "AlistError", "ParityCheckMatrix", "DegreeDistributions", "Encoder",
    "load_alist", "dump_alist", "save_alist", "degree_distributions", "syndrome",
    "build_encoder", "encode", "generate_regular_code", "generate_ira_code",
    "dvbt2_short_half_profile", "ira_degree_distributions",
]
