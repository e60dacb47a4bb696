"""Binary tensor files, sample ingestion, reports and the external evaluator protocol.

TT file layout (all integers little-endian)::

    b"STT1"  magic
    u16      format version (1)
    u32      N
    u32 * N      dims
    u32 * (N+1)  ranks
    f64 * ...    cores, each in (left rank, mode, right rank) row-major order
    u32      CRC32 of everything above

A Sobol file wraps two TT blobs (the Sobol tensor and the variance tensor)
plus the scalars needed to interpret them::

    b"SSB1", u16 version, u8 flags (bit 0: corner zeroed),
    f64 total variance, f64 mean,
    u32 length + UTF-8 JSON metadata,
    u64 length + TT blob (S), u64 length + TT blob (D),
    u32 CRC32 of everything above
"""

from __future__ import annotations

import csv
import io
import json
import math
import shlex
import struct
import subprocess
import time
import zlib
from itertools import combinations
from math import comb
from pathlib import Path

import numpy as np

from .aggregate import to_total
from .errors import CapacityError, ChecksumError, DataError, DomainError, FileAccessError, FormatError
from .grid import SPLITS, SampleSet, split_samples
from .query import EXHAUSTIVE_CAP, FEASIBLE_CAP, hamming_mask, order_contribution, top_k
from .sobol import SobolTT, binary_index
from .tt import TTTensor, tt_eval_batch

__all__ = [
    "TT_MAGIC",
    "SOBOL_MAGIC",
    "tt_to_bytes",
    "tt_from_bytes",
    "save_tt",
    "load_tt",
    "sobol_to_bytes",
    "sobol_from_bytes",
    "save_sobol",
    "load_sobol",
    "load_any",
    "ingest_samples",
    "build_report",
    "write_report",
    "report_to_csv",
    "ExternalEvaluator",
]

TT_MAGIC = b"STT1"
SOBOL_MAGIC = b"SSB1"
FORMAT_VERSION = 1
REPORT_CAP = 10**6


# ----------------------------------------------------------------------
# Raw file access
# ----------------------------------------------------------------------


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise FileAccessError(f"cannot read {path}: {e.strerror or e}", path=str(path)) from None


def _write(path, data: bytes | str) -> None:
    try:
        if isinstance(data, str):
            Path(path).write_text(data, encoding="utf-8")
        else:
            Path(path).write_bytes(data)
    except OSError as e:
        raise FileAccessError(f"cannot write {path}: {e.strerror or e}", path=str(path)) from None


def _check_envelope(data: bytes, magic: bytes, what: str) -> bytes:
    """Verify magic and trailing CRC; return the payload without the CRC."""
    if data[:4] != magic:
        if len(data) < 4 and magic.startswith(data):
            raise ChecksumError(f"{what} truncated to {len(data)} bytes")
        raise FormatError(f"not a {what}: magic {data[:4]!r}, expected {magic!r}")
    if len(data) < 8:
        raise ChecksumError(f"{what} truncated to {len(data)} bytes")
    payload, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) != crc:
        raise ChecksumError(f"{what} checksum mismatch (truncated or corrupted)")
    (version,) = struct.unpack_from("<H", payload, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported {what} version {version}")
    return payload


# ----------------------------------------------------------------------
# TT files
# ----------------------------------------------------------------------


def tt_to_bytes(t: TTTensor) -> bytes:
    N = t.ndim
    head = TT_MAGIC + struct.pack(f"<HI{N}I{N + 1}I", FORMAT_VERSION, N, *t.dims, *t.ranks)
    body = b"".join(np.ascontiguousarray(c, dtype="<f8").tobytes() for c in t.cores)
    payload = head + body
    return payload + struct.pack("<I", zlib.crc32(payload))


def tt_from_bytes(data: bytes) -> TTTensor:
    payload = _check_envelope(data, TT_MAGIC, "TT file")
    try:
        (N,) = struct.unpack_from("<I", payload, 6)
        off = 10
        dims = struct.unpack_from(f"<{N}I", payload, off)
        off += 4 * N
        ranks = struct.unpack_from(f"<{N + 1}I", payload, off)
        off += 4 * (N + 1)
    except struct.error:
        raise FormatError("TT file header is inconsistent") from None
    if N < 1 or ranks[0] != 1 or ranks[-1] != 1 or min(dims) < 1 or min(ranks) < 1:
        raise FormatError(f"invalid TT structure: dims={dims}, ranks={ranks}")
    sizes = [ranks[n] * dims[n] * ranks[n + 1] for n in range(N)]
    if off + 8 * sum(sizes) != len(payload):
        raise FormatError("TT file length does not match its rank chain")
    cores = []
    for n, size in enumerate(sizes):
        c = np.frombuffer(payload, dtype="<f8", count=size, offset=off)
        cores.append(c.astype(np.float64).reshape(ranks[n], dims[n], ranks[n + 1]))
        off += 8 * size
    return TTTensor(cores)


def save_tt(t: TTTensor, path) -> None:
    """Write ``t`` in the STT1 format."""
    _write(path, tt_to_bytes(t))


def load_tt(path) -> TTTensor:
    """Read an STT1 file.

    Raises
    ------
    FileAccessError
        The file cannot be read.
    FormatError
        Wrong magic, version or structure.
    ChecksumError
        CRC mismatch, including truncated files.
    """
    return tt_from_bytes(_read(path))


# ----------------------------------------------------------------------
# Sobol files
# ----------------------------------------------------------------------


def sobol_to_bytes(s: SobolTT, meta: dict | None = None) -> bytes:
    m = json.dumps(meta or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    sb, db = tt_to_bytes(s.S), tt_to_bytes(s.D_tensor)
    payload = b"".join(
        [
            SOBOL_MAGIC,
            struct.pack("<HBdd", FORMAT_VERSION, int(bool(s.corner_zeroed)), s.total_variance, s.mean),
            struct.pack("<I", len(m)),
            m,
            struct.pack("<Q", len(sb)),
            sb,
            struct.pack("<Q", len(db)),
            db,
        ]
    )
    return payload + struct.pack("<I", zlib.crc32(payload))


def sobol_from_bytes(data: bytes) -> tuple[SobolTT, dict]:
    payload = _check_envelope(data, SOBOL_MAGIC, "Sobol file")
    try:
        _, flags, D, mean = struct.unpack_from("<HBdd", payload, 4)
        off = 4 + struct.calcsize("<HBdd")
        (ml,) = struct.unpack_from("<I", payload, off)
        meta = json.loads(payload[off + 4 : off + 4 + ml].decode("utf-8"))
        off += 4 + ml
        blobs = []
        for _ in range(2):
            (bl,) = struct.unpack_from("<Q", payload, off)
            blobs.append(payload[off + 8 : off + 8 + bl])
            off += 8 + bl
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError):
        raise FormatError("Sobol file structure is inconsistent") from None
    if off != len(payload):
        raise FormatError("Sobol file has trailing data")
    S, Dt = (tt_from_bytes(b) for b in blobs)
    return SobolTT(S, Dt, D, mean, bool(flags & 1)), meta


def save_sobol(s: SobolTT, path, meta: dict | None = None) -> None:
    _write(path, sobol_to_bytes(s, meta))


def load_sobol(path) -> tuple[SobolTT, dict]:
    return sobol_from_bytes(_read(path))


def load_any(path) -> TTTensor | tuple[SobolTT, dict]:
    """Load a TT file or a Sobol file, dispatching on the magic bytes."""
    data = _read(path)
    if data[:4] == SOBOL_MAGIC:
        return sobol_from_bytes(data)
    return tt_from_bytes(data)


# ----------------------------------------------------------------------
# Sample CSV
# ----------------------------------------------------------------------


def ingest_samples(
    path,
    seed: int = 0,
    fractions=(0.7, 0.15, 0.15),
    levels: str = "index",
) -> SampleSet:
    """Read scattered samples from CSV.

    The header must name columns ``x1..xN`` and ``value``, plus an
    optional ``split`` column holding ``train``, ``valid`` or ``test``.
    Without a split column the rows are split at random with
    ``fractions``, seeded by ``seed``.

    With ``levels="index"`` the ``x`` columns are 0-based grid indices.
    With ``levels="auto"`` they are arbitrary numeric settings (e.g.
    measured configurations); the sorted distinct values of each column
    become its grid levels and are kept in ``SampleSet.levels``.

    Raises
    ------
    DataError
        Bad header, malformed row (with its line number) or a repeated
        multi-index within one split (naming both lines).
    """
    if levels not in ("index", "auto"):
        raise DomainError(f"unknown levels mode {levels!r}")
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise FileAccessError(f"cannot read {path}: {e.strerror or e}", path=str(path)) from None
    except UnicodeDecodeError:
        raise DataError(f"{path} is not UTF-8 text", path=str(path)) from None
    if not rows:
        raise DataError(f"{path} is empty", path=str(path))
    header = [h.strip() for h in rows[0]]
    xcols = sorted((h for h in header if h.startswith("x")), key=lambda h: int(h[1:]) if h[1:].isdigit() else -1)
    N = len(xcols)
    expected = {f"x{n + 1}" for n in range(N)} | {"value"}
    extra = set(header) - expected - {"split"}
    if N == 0 or set(xcols) != expected - {"value"} or "value" not in header or extra or len(set(header)) != len(header):
        raise DataError(
            f"bad header {header}; expected x1..xN, value and optionally split", path=str(path), line=1
        )
    pos = [header.index(f"x{n + 1}") for n in range(N)]
    vpos = header.index("value")
    spos = header.index("split") if "split" in header else None

    raw, values, tags, lines = [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}", line=lineno)
        try:
            x = [float(row[p]) for p in pos]
            v = float(row[vpos])
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric field", line=lineno) from None
        if not (all(math.isfinite(c) for c in x) and math.isfinite(v)):
            raise DataError(f"line {lineno}: non-finite field", line=lineno)
        if levels == "index" and any(c < 0 or c != int(c) for c in x):
            raise DataError(f"line {lineno}: indices must be nonnegative integers", line=lineno)
        if spos is not None:
            tag = row[spos].strip()
            if tag not in SPLITS:
                raise DataError(f"line {lineno}: unknown split {tag!r}", line=lineno)
            tags.append(tag)
        raw.append(x)
        values.append(v)
        lines.append(lineno)
    if not raw:
        raise DataError(f"{path} has no data rows", path=str(path))

    X = np.array(raw)
    lv = None
    if levels == "auto":
        lv = tuple(np.unique(X[:, n]) for n in range(N))
        idx = np.stack([np.searchsorted(lv[n], X[:, n]) for n in range(N)], axis=1)
    else:
        idx = X.astype(np.intp)

    seen: dict[tuple, int] = {}
    for i, row in enumerate(idx):
        key = (tags[i] if tags else None, *row.tolist())
        if key in seen:
            where = f" in split {tags[i]!r}" if tags else ""
            raise DataError(
                f"line {lines[i]}: duplicate multi-index{where}, first seen on line {seen[key]}",
                line=lines[i],
                first_line=seen[key],
            )
        seen[key] = lines[i]

    s = SampleSet(idx, np.array(values), np.array(tags, dtype=object) if tags else None, lv)
    if s.split is None:
        s = split_samples(s, fractions, seed)
    return s


# ----------------------------------------------------------------------
# Reports
# ----------------------------------------------------------------------


def _clamp(v: float) -> float:
    return min(1.0, max(0.0, v))


def _entry(alpha, raw: float) -> dict:
    return {"variables": [a + 1 for a in alpha], "raw": raw, "value": _clamp(raw)}


def build_report(
    s: SobolTT,
    orders,
    meta: dict | None = None,
    top: int = 5,
    timing: bool = False,
) -> dict:
    """Assemble the report document.

    Lists every Sobol index of the requested orders, the total index of
    each variable, the variance share of every order (all orders, so the
    shares sum to one) and the ``top`` largest indices per requested
    order. Values are given raw and clamped to [0, 1]. Wall-clock timings
    are included only with ``timing=True`` so that reports are otherwise
    reproducible byte for byte.
    """
    N = s.S.ndim
    orders = sorted({int(k) for k in orders})
    if not orders or orders[0] < 1 or orders[-1] > N:
        raise DomainError(f"orders must lie in 1..{N}")
    count = sum(comb(N, k) for k in orders)
    if count > REPORT_CAP:
        raise CapacityError(f"report would list {count} indices (cap {REPORT_CAP})", count=count)

    indices = []
    for k in orders:
        alphas = list(combinations(range(N), k))
        bits = np.array([binary_index(a, N) for a in alphas])
        for a, v in zip(alphas, tt_eval_batch(s.S, bits)):
            indices.append({"order": k, **_entry(a, float(v))})

    st = to_total(s.S)
    singles = np.eye(N, dtype=np.intp)
    totals = [_entry((n,), float(v)) for n, v in enumerate(tt_eval_batch(st, singles))]
    contrib = {str(k): order_contribution(s.S, k) for k in range(1, N + 1)}

    queries = []
    for k in orders:
        t0 = time.perf_counter()
        method = "exhaustive" if N <= EXHAUSTIVE_CAP or comb(N, k) <= FEASIBLE_CAP else "heuristic"
        best = top_k(s.S, hamming_mask(N, k), min(top, comb(N, k)), method=method)
        q = {"order": k, "mode": "max", "method": method, "results": [_entry(a, v) for a, v in best]}
        if timing:
            q["seconds"] = time.perf_counter() - t0
        queries.append(q)

    return {
        "format": "ttsobol-report",
        "version": 1,
        "metadata": meta or {},
        "N": N,
        "total_variance": s.total_variance,
        "mean": s.mean,
        "orders": orders,
        "indices": indices,
        "total_indices": totals,
        "order_contributions": contrib,
        "order_contribution_sum": float(sum(contrib.values())),
        "queries": queries,
    }


def report_to_csv(doc: dict) -> str:
    """Flatten a report into rows ``section,order,variables,raw,value``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["section", "order", "variables", "raw", "value"])
    for e in doc["indices"]:
        w.writerow(["index", e["order"], " ".join(map(str, e["variables"])), repr(e["raw"]), repr(e["value"])])
    for e in doc["total_indices"]:
        w.writerow(["total", 1, " ".join(map(str, e["variables"])), repr(e["raw"]), repr(e["value"])])
    for k, v in doc["order_contributions"].items():
        w.writerow(["order_contribution", k, "", repr(v), repr(_clamp(v))])
    for q in doc["queries"]:
        for e in q["results"]:
            w.writerow(["top", q["order"], " ".join(map(str, e["variables"])), repr(e["raw"]), repr(e["value"])])
    return buf.getvalue()


def write_report(doc: dict, path, fmt: str = "json") -> None:
    if fmt == "json":
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    elif fmt == "csv":
        text = report_to_csv(doc)
    else:
        raise DomainError(f"unknown report format {fmt!r}")
    _write(path, text)


# ----------------------------------------------------------------------
# External evaluator
# ----------------------------------------------------------------------


class ExternalEvaluator:
    """Evaluate grid indices by running an external command.

    Each batch starts the command once, writes one line per multi-index
    (space-separated 0-based integers) to its stdin and reads one value
    per line from its stdout. Batches larger than ``batch_size`` are
    split across several runs.
    """

    def __init__(self, command: str, batch_size: int = 100_000, timeout: float | None = None):
        self.argv = shlex.split(command)
        if not self.argv:
            raise DomainError("empty evaluator command")
        self.batch_size = batch_size
        self.timeout = timeout
        self.calls = 0

    def _run(self, idx: np.ndarray) -> np.ndarray:
        text = "".join(" ".join(map(str, row)) + "\n" for row in idx.tolist())
        try:
            proc = subprocess.run(
                self.argv, input=text, capture_output=True, text=True, timeout=self.timeout, check=False
            )
        except (OSError, subprocess.TimeoutExpired) as e:
            raise DataError(f"evaluator {self.argv[0]!r} failed to run: {e}") from None
        self.calls += 1
        if proc.returncode != 0:
            raise DataError(
                f"evaluator exited with status {proc.returncode}",
                stderr=proc.stderr.strip()[-2000:],
            )
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if len(lines) != idx.shape[0]:
            raise DataError(f"evaluator returned {len(lines)} values for {idx.shape[0]} indices")
        try:
            return np.array([float(ln) for ln in lines])
        except ValueError:
            raise DataError("evaluator output is not one number per line") from None

    def __call__(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        parts = [self._run(idx[i : i + self.batch_size]) for i in range(0, idx.shape[0], self.batch_size)]
        return np.concatenate(parts) if parts else np.zeros(0)

