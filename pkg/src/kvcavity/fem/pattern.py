"""Precomputed scatter of element matrices into CSR storage."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class ScatterPattern:
    """Fixed sparsity pattern for repeated assembly of ``sum_T w_T K_T``.

    ``dofs`` is the (nt, k) element-to-global map.  Only entries whose row
    and column both lie in ``keep_rows``/``keep_cols`` (global indices,
    renumbered in the given order) are stored; ``None`` keeps everything.
    """

    def __init__(self, dofs: np.ndarray, n: int, keep_rows=None, keep_cols=None):
        dofs = np.asarray(dofs, dtype=np.int64)
        nt, k = dofs.shape
        row_map = self._renumber(keep_rows, n)
        col_map = self._renumber(keep_cols, n)
        rows = row_map[np.repeat(dofs, k, axis=1).ravel()]
        cols = col_map[np.tile(dofs, (1, k)).ravel()]
        valid = (rows >= 0) & (cols >= 0)
        self.n_rows = int(n if keep_rows is None else len(keep_rows))
        self.n_cols = int(n if keep_cols is None else len(keep_cols))
        self.entries = np.flatnonzero(valid)
        keys = rows[valid] * self.n_cols + cols[valid]
        uniq, self.slot = np.unique(keys, return_inverse=True)
        self.nnz = len(uniq)
        self.indices = (uniq % self.n_cols).astype(np.int32)
        urow = uniq // self.n_cols
        self.indptr = np.searchsorted(urow, np.arange(self.n_rows + 1)).astype(np.int32)
        self.k = k

    @staticmethod
    def _renumber(keep, n):
        if keep is None:
            return np.arange(n)
        out = np.full(n, -1, dtype=np.int64)
        out[np.asarray(keep, dtype=np.int64)] = np.arange(len(keep))
        return out

    def assemble(self, element_values: np.ndarray) -> sp.csr_matrix:
        """``element_values`` has shape (nt, k, k) or (nt*k*k,)."""
        flat = np.asarray(element_values, dtype=float).reshape(-1)[self.entries]
        data = np.bincount(self.slot, weights=flat, minlength=self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n_rows, self.n_cols))
