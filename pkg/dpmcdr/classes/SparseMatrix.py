import numpy as np
from scipy import sparse


class SparseMatrix:
    """
    Immutable sparse matrix with strictly positive entries, stored as a canonical
    scipy CSR matrix (row-sorted, no duplicate coordinates).

    :param rows: Number of rows.
    :param cols: Number of columns.
    :param row_idx: Row index of every entry.
    :param col_idx: Column index of every entry.
    :param values: Entry values, all > 0.
    """

    def __init__(self, rows: int, cols: int, row_idx, col_idx, values):
        rows, cols = int(rows), int(cols)
        if rows <= 0 or cols <= 0:
            raise ValueError(f"extents must be > 0, got ({rows}, {cols})")
        row_idx = np.asarray(row_idx, dtype=np.int64)
        col_idx = np.asarray(col_idx, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not (row_idx.shape == col_idx.shape == values.shape) or row_idx.ndim != 1:
            raise ValueError("row_idx, col_idx and values must be 1D arrays of equal length")
        if row_idx.size:
            if row_idx.min() < 0 or row_idx.max() >= rows or col_idx.min() < 0 or col_idx.max() >= cols:
                raise ValueError(f"entry index out of range for a {rows}x{cols} matrix")
            if np.any(values <= 0) or not np.all(np.isfinite(values)):
                raise ValueError("entries must be finite and > 0")
            codes = row_idx * cols + col_idx
            if np.unique(codes).size != codes.size:
                raise ValueError("duplicate (row, col) entries")
        csr = sparse.csr_matrix((values, (row_idx, col_idx)), shape=(rows, cols))
        csr.sort_indices()
        self._csr = csr

    @classmethod
    def from_csr(cls, csr) -> "SparseMatrix":
        coo = sparse.coo_matrix(csr)
        return cls(coo.shape[0], coo.shape[1], coo.row, coo.col, coo.data)

    @classmethod
    def from_entries(cls, rows: int, cols: int, entries) -> "SparseMatrix":
        entries = list(entries)
        if not entries:
            return cls(rows, cols, [], [], [])
        r, c, v = zip(*entries)
        return cls(rows, cols, r, c, v)

    @property
    def csr(self) -> sparse.csr_matrix:
        return self._csr

    @property
    def rows(self) -> int:
        return self._csr.shape[0]

    @property
    def cols(self) -> int:
        return self._csr.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._csr.shape

    @property
    def nnz(self) -> int:
        return int(self._csr.nnz)

    def entries(self) -> list[tuple[int, int, float]]:
        csr = self._csr
        rows = np.repeat(np.arange(self.rows), np.diff(csr.indptr))
        return [(int(r), int(c), float(v)) for r, c, v in zip(rows, csr.indices, csr.data)]

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        csr = self._csr
        rows = np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(csr.indptr))
        return rows, csr.indices.astype(np.int64), csr.data.copy()

    def row(self, i: int) -> np.ndarray:
        csr = self._csr
        return csr.indices[csr.indptr[i]:csr.indptr[i + 1]].astype(np.int64)

    def row_degrees(self) -> np.ndarray:
        return np.diff(self._csr.indptr).astype(np.int64)

    def col_degrees(self) -> np.ndarray:
        return np.bincount(self._csr.indices, minlength=self.cols).astype(np.int64)

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_csr(self._csr.T)

    def with_values(self, values: np.ndarray) -> "SparseMatrix":
        """Same sparsity pattern, new values in entries() order."""
        rows, cols, _ = self.coordinates()
        return SparseMatrix(self.rows, self.cols, rows, cols, values)

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return self.shape == other.shape and self.entries() == other.entries()

    def __repr__(self):
        return f"SparseMatrix({self.rows}x{self.cols}, nnz={self.nnz})"
