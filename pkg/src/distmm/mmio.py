"""Matrix Market coordinate I/O.

Supports ``real`` and ``integer`` fields with ``general`` or ``symmetric``
symmetry.  Symmetric files are expanded to both triangles on read.  The
writer emits ``real general`` with ``%.17g`` values, which round-trips
float64 exactly.
"""

from __future__ import annotations

from . import sparse
from .sparse import SparseMatrix


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input; message carries the offending line."""


_BANNER = "%%matrixmarket"


def read_matrix_market(source) -> SparseMatrix:
    """Parse a Matrix Market coordinate file (path or open text file)."""
    if hasattr(source, "read"):
        return _read(source)
    with open(source, "r", encoding="ascii") as fh:
        return _read(fh)


def _read(fh) -> SparseMatrix:
    lines = enumerate(fh, start=1)
    try:
        lineno, banner = next(lines)
    except StopIteration:
        raise MatrixMarketError("empty file") from None
    parts = banner.strip().lower().split()
    if len(parts) != 5 or parts[0] != _BANNER:
        raise MatrixMarketError(f"line {lineno}: bad banner {banner.strip()!r}")
    _, obj, fmt, field, symmetry = parts
    if obj != "matrix":
        raise MatrixMarketError(f"line {lineno}: unsupported object {obj!r}")
    if fmt != "coordinate":
        raise MatrixMarketError(
            f"line {lineno}: only coordinate format is supported, got {fmt!r}"
        )
    if field not in ("real", "integer"):
        raise MatrixMarketError(f"line {lineno}: unsupported field {field!r}")
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(f"line {lineno}: unsupported symmetry {symmetry!r}")

    size = None
    for lineno, raw in lines:
        text = raw.strip()
        if not text or text.startswith("%"):
            continue
        toks = text.split()
        if len(toks) != 3:
            raise MatrixMarketError(f"line {lineno}: bad size line {text!r}")
        try:
            n_rows, n_cols, nnz = (int(t) for t in toks)
        except ValueError:
            raise MatrixMarketError(f"line {lineno}: bad size line {text!r}") from None
        if n_rows < 0 or n_cols < 0 or nnz < 0:
            raise MatrixMarketError(f"line {lineno}: negative size {text!r}")
        size = (n_rows, n_cols, nnz)
        break
    if size is None:
        raise MatrixMarketError("missing size line")
    n_rows, n_cols, nnz = size

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    n_read = 0
    for lineno, raw in lines:
        text = raw.strip()
        if not text or text.startswith("%"):
            continue
        if n_read >= nnz:
            raise MatrixMarketError(f"line {lineno}: more entries than declared")
        toks = text.split()
        if len(toks) != 3:
            raise MatrixMarketError(f"line {lineno}: bad entry {text!r}")
        try:
            i, j, v = int(toks[0]), int(toks[1]), float(toks[2])
        except ValueError:
            raise MatrixMarketError(f"line {lineno}: bad entry {text!r}") from None
        if not (1 <= i <= n_rows and 1 <= j <= n_cols):
            raise MatrixMarketError(f"line {lineno}: index out of range {text!r}")
        n_read += 1
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
        if symmetry == "symmetric" and i != j:
            rows.append(j - 1)
            cols.append(i - 1)
            vals.append(v)

    if n_read != nnz:
        raise MatrixMarketError(f"expected {nnz} entries, got {n_read}")
    try:
        return sparse.from_coo(n_rows, n_cols, rows, cols, vals)
    except sparse.DimensionMismatchError as exc:
        raise MatrixMarketError(str(exc)) from None


def write_matrix_market(path, s: SparseMatrix, comment: str | None = None) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{s.n_rows} {s.n_cols} {s.nnz}\n")
        for i, j, v in zip(s.rows, s.cols, s.vals):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")
