"""MatrixMarket reading and writing.

Matrices use the ``coordinate`` format (``general`` or ``symmetric``),
vectors the ``array`` format.  Values are written with 17 significant digits
so that a write/read roundtrip is bit-exact.  Only the ``real`` field is
accepted (``integer`` is promoted to real).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParseError, UnsupportedField
from .sparse import SparseMatrix, build_csr

_OBJECTS = ("matrix", "vector")
_FORMATS = ("coordinate", "array")
_FIELDS = ("real", "integer")
_SYMMETRIES = ("general", "symmetric")


@dataclass(frozen=True)
class MtxHeader:
    object: str
    format: str
    field: str
    symmetry: str


def _parse_header(line, lineno=1):
    parts = line.strip().split()
    if len(parts) != 5 or parts[0].lower() != "%%matrixmarket":
        raise ParseError("missing %%MatrixMarket banner", lineno)
    obj, fmt, field, sym = (p.lower() for p in parts[1:])
    if obj not in _OBJECTS:
        raise ParseError(f"unsupported object {obj!r}", lineno)
    if fmt not in _FORMATS:
        raise ParseError(f"unsupported format {fmt!r}", lineno)
    if field not in _FIELDS:
        raise UnsupportedField(f"unsupported field {field!r}", lineno)
    if sym not in _SYMMETRIES:
        raise ParseError(f"unsupported symmetry {sym!r}", lineno)
    return MtxHeader(obj, fmt, field, sym)


def _data_lines(lines):
    """Yield (lineno, tokens) for non-comment, non-blank lines after the header."""
    for lineno, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        yield lineno, s.split()


def _number(tok, lineno, integer=False):
    try:
        v = int(tok) if integer else float(tok)
    except ValueError:
        raise ParseError(f"cannot parse {tok!r}", lineno) from None
    if not integer and not np.isfinite(v):
        raise ParseError(f"non-finite value {tok!r}", lineno)
    return v


def _read_lines(path):
    try:
        with open(path, "r", encoding="ascii", errors="strict") as fh:
            lines = fh.read().splitlines()
    except UnicodeDecodeError as e:
        raise ParseError(f"non-ascii content: {e}") from None
    if not lines:
        raise ParseError("empty file", 1)
    return lines


def read_matrix(path) -> SparseMatrix:
    lines = _read_lines(path)
    hdr = _parse_header(lines[0])
    if hdr.format != "coordinate":
        raise ParseError("matrices must use the coordinate format", 1)
    body = _data_lines(lines)
    try:
        lineno, toks = next(body)
    except StopIteration:
        raise ParseError("missing size line", len(lines)) from None
    if len(toks) != 3:
        raise ParseError("size line must hold rows, cols, nnz", lineno)
    n, m, nnz = (_number(t, lineno, integer=True) for t in toks)
    if n <= 0 or m <= 0 or nnz < 0:
        raise ParseError("dimensions must be positive", lineno)
    if hdr.symmetry == "symmetric" and n != m:
        raise ParseError("symmetric matrix must be square", lineno)
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    k = 0
    for lineno, toks in body:
        if k >= nnz:
            raise ParseError("more entries than declared", lineno)
        if len(toks) != 3:
            raise ParseError("entry must hold row, col, value", lineno)
        i = _number(toks[0], lineno, integer=True)
        j = _number(toks[1], lineno, integer=True)
        if not (1 <= i <= n and 1 <= j <= m):
            raise ParseError(f"index ({i}, {j}) out of range", lineno)
        if hdr.symmetry == "symmetric" and j > i:
            raise ParseError("symmetric storage must be lower triangular", lineno)
        rows[k], cols[k], vals[k] = i - 1, j - 1, _number(toks[2], lineno)
        k += 1
    if k != nnz:
        raise ParseError(f"expected {nnz} entries, found {k}", len(lines))
    if hdr.symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate((rows, cols[off])),
            np.concatenate((cols, rows[off])),
            np.concatenate((vals, vals[off])),
        )
    return build_csr(n, m, (rows, cols, vals))


def write_matrix(path, A: SparseMatrix) -> None:
    from .sparse import to_scalar

    A = to_scalar(A)
    rows = A.row_index()
    n, m = A.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{n} {m} {A.nnz}\n")
        for i, j, v in zip(rows.tolist(), A.col.tolist(), np.asarray(A.val, dtype=np.float64).tolist()):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def read_vector(path) -> np.ndarray:
    lines = _read_lines(path)
    hdr = _parse_header(lines[0])
    if hdr.format != "array" or hdr.symmetry != "general":
        raise ParseError("vectors must use the general array format", 1)
    body = _data_lines(lines)
    try:
        lineno, toks = next(body)
    except StopIteration:
        raise ParseError("missing size line", len(lines)) from None
    if len(toks) != 2:
        raise ParseError("size line must hold rows, cols", lineno)
    n, m = (_number(t, lineno, integer=True) for t in toks)
    if n <= 0 or m != 1:
        raise ParseError(f"expected an n x 1 array with n > 0, got {n} x {m}", lineno)
    out = np.empty(n)
    k = 0
    for lineno, toks in body:
        if len(toks) != 1:
            raise ParseError("array entry must be a single value", lineno)
        if k >= n:
            raise ParseError("more entries than declared", lineno)
        out[k] = _number(toks[0], lineno)
        k += 1
    if k != n:
        raise ParseError(f"expected {n} entries, found {k}", len(lines))
    return out


def write_vector(path, v) -> None:
    v = np.asarray(v, dtype=np.float64).ravel()
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        fh.write(f"{v.size} 1\n")
        for x in v.tolist():
            fh.write(f"{x:.17g}\n")
