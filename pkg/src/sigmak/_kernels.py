"""Batched elementary-symmetric-polynomial kernels.

These inner loops run once per grid point inside the operator assembly and
the structure-condition sweeps, so they carry numba-jitted versions with a
pure-numpy fallback.  Set ``SIGMAK_NO_NUMBA=1`` to force the fallback (both
paths are importable directly for benchmarking).

All kernels take a batch ``lam`` of shape (m, n) and use the product
recurrence on characteristic-polynomial coefficients: inserting an entry x
updates e_j += x * e_{j-1} from high j down.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("SIGMAK_NO_NUMBA", "0").lower() not in ("1", "true", "yes")


def esp_table_numpy(lam):
    """Table of e_0..e_n for each row of lam; shape (m, n+1)."""
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    m, n = lam.shape
    e = np.zeros((m, n + 1))
    e[:, 0] = 1.0
    for i in range(n):
        x = lam[:, i]
        for j in range(min(i + 1, n), 0, -1):
            e[:, j] += x * e[:, j - 1]
    return e


def esp_deleted_table_numpy(lam):
    """Tables e_j(lam with entry i removed); shape (m, n, n+1).

    Column n is identically zero (a deleted vector has only n-1 entries).
    """
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    m, n = lam.shape
    out = np.zeros((m, n, n + 1))
    keep = np.arange(n)
    for i in range(n):
        sub = lam[:, keep != i]
        out[:, i, :n] = esp_table_numpy(sub)
    return out


if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

if USE_NUMBA:

    @njit(cache=True)
    def _esp_table_inner(lam, out):
        m, n = lam.shape
        for r in range(m):
            out[r, 0] = 1.0
            for j in range(1, n + 1):
                out[r, j] = 0.0
            for i in range(n):
                x = lam[r, i]
                top = i + 1 if i + 1 < n else n
                for j in range(top, 0, -1):
                    out[r, j] += x * out[r, j - 1]

    @njit(cache=True)
    def _esp_deleted_inner(lam, out):
        m, n = lam.shape
        for r in range(m):
            for skip in range(n):
                out[r, skip, 0] = 1.0
                for j in range(1, n + 1):
                    out[r, skip, j] = 0.0
                cnt = 0
                for i in range(n):
                    if i == skip:
                        continue
                    x = lam[r, i]
                    cnt += 1
                    top = cnt if cnt < n else n
                    for j in range(top, 0, -1):
                        out[r, skip, j] += x * out[r, skip, j - 1]

    def esp_table_numba(lam):
        lam = np.ascontiguousarray(lam, dtype=np.float64)
        out = np.empty((lam.shape[0], lam.shape[1] + 1))
        _esp_table_inner(lam, out)
        return out

    def esp_deleted_table_numba(lam):
        lam = np.ascontiguousarray(lam, dtype=np.float64)
        out = np.empty((lam.shape[0], lam.shape[1], lam.shape[1] + 1))
        _esp_deleted_inner(lam, out)
        return out

    esp_table = esp_table_numba
    esp_deleted_table = esp_deleted_table_numba
else:
    esp_table_numba = None
    esp_deleted_table_numba = None
    esp_table = esp_table_numpy
    esp_deleted_table = esp_deleted_table_numpy
