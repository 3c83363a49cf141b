"""Two-phase sparse matrix and a phased direct-solver session.

A :class:`SparseMatrix` goes through an explicit life cycle: a profile phase
where the nonzero pattern is declared cell by cell, a finalize step that
freezes the pattern into CSR storage, and a value phase where entries are
accumulated.  Writing to an undeclared position is an error, never a silent
widening of the pattern.

:class:`SolverSession` wraps the direct solve in four phases (symbolic
analysis, numeric factorization, back substitution, release).  The symbolic
phase depends only on the frozen pattern; sessions fingerprint the pattern
and skip the symbolic phase whenever it provably has not changed, which is
the common case across the iterations of a substep.
"""

from __future__ import annotations

import threading
import zlib

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu


class ProfileError(RuntimeError):
    """Operation issued in the wrong matrix phase or outside the pattern."""


class SolveError(RuntimeError):
    """Direct solver failed even after a full-phase retry."""


class SparseMatrix:
    """Square-or-rectangular CSR matrix with a declared-then-frozen pattern."""

    def __init__(self, symmetric_flag=False):
        self.symmetric_flag = symmetric_flag
        self._nrows = 0
        self._ncols = 0
        self._profile = None     # list of per-row column sets during phase 1
        self._rowptr = None
        self._colidx = None
        self._values = None
        self._finalized = False
        self._lock = threading.Lock()

    # ---- profile phase ----------------------------------------------------

    def initialize_profile(self, nrows, ncols):
        self._nrows = int(nrows)
        self._ncols = int(ncols)
        self._profile = [set() for _ in range(self._nrows)]
        self._rowptr = None
        self._colidx = None
        self._values = None
        self._finalized = False

    def insert_nonzero(self, i, j):
        """Declare position (i, j); duplicate declarations collapse."""
        if self._profile is None or self._finalized:
            raise ProfileError("insert_nonzero outside the profile phase")
        if not (0 <= i < self._nrows and 0 <= j < self._ncols):
            raise ProfileError("position (%d, %d) outside %d x %d"
                               % (i, j, self._nrows, self._ncols))
        self._profile[i].add(j)

    def finalize_profile(self):
        if self._profile is None:
            raise ProfileError("finalize_profile before initialize_profile")
        if self._finalized:
            raise ProfileError("profile already finalized")
        counts = [len(s) for s in self._profile]
        self._rowptr = np.zeros(self._nrows + 1, dtype=np.int64)
        np.cumsum(counts, out=self._rowptr[1:])
        self._colidx = np.empty(self._rowptr[-1], dtype=np.int64)
        for i, cols in enumerate(self._profile):
            sorted_cols = sorted(cols)
            self._colidx[self._rowptr[i]:self._rowptr[i + 1]] = sorted_cols
        self._values = np.zeros(self._rowptr[-1], dtype=np.float64)
        self._profile = None
        self._finalized = True

    # ---- queries ------------------------------------------------------------

    @property
    def shape(self):
        return (self._nrows, self._ncols)

    @property
    def nnz(self):
        if not self._finalized:
            raise ProfileError("nnz undefined before finalize_profile")
        return int(self._rowptr[-1])

    @property
    def row_pointers(self):
        return self._rowptr

    @property
    def column_indices(self):
        return self._colidx

    def profile_fingerprint(self):
        """Cheap structural identity: dims, nnz and an index checksum."""
        if not self._finalized:
            raise ProfileError("fingerprint undefined before finalize_profile")
        crc = zlib.crc32(self._rowptr.tobytes())
        crc = zlib.crc32(self._colidx.tobytes(), crc)
        return (self._nrows, self._ncols, self.nnz, crc)

    # ---- value phase ------------------------------------------------------------

    def _flat_index(self, i, j):
        lo, hi = self._rowptr[i], self._rowptr[i + 1]
        k = lo + np.searchsorted(self._colidx[lo:hi], j)
        if k == hi or self._colidx[k] != j:
            raise ProfileError("entry (%d, %d) not in the declared profile" % (i, j))
        return k

    def accumulate(self, i, j, value):
        if not self._finalized:
            raise ProfileError("accumulate before finalize_profile")
        self._values[self._flat_index(i, j)] += value

    def accumulate_concurrent(self, rows, cols, values):
        """Thread-safe batched accumulation; no update may be lost."""
        if not self._finalized:
            raise ProfileError("accumulate before finalize_profile")
        flat = [self._flat_index(i, j) for i, j in zip(rows, cols)]
        with self._lock:
            for k, v in zip(flat, values):
                self._values[k] += v

    def entry(self, i, j):
        if not self._finalized:
            raise ProfileError("entry before finalize_profile")
        return float(self._values[self._flat_index(i, j)])

    def zero_values(self):
        if not self._finalized:
            raise ProfileError("zero_values before finalize_profile")
        self._values[:] = 0.0

    def times(self, x):
        """Matrix-vector product against the frozen pattern."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self._ncols:
            raise ValueError("times: vector of size %d against %d columns"
                             % (x.shape[0], self._ncols))
        prods = self._values * x[self._colidx]
        y = np.zeros(self._nrows)
        # reduceat misbehaves on empty rows, so guard with explicit segments
        np.add.at(y, np.repeat(np.arange(self._nrows),
                               np.diff(self._rowptr)), prods)
        return y

    def lump_rows(self):
        """Vector of row sums (used for lumped accumulation checks)."""
        y = np.zeros(self._nrows)
        np.add.at(y, np.repeat(np.arange(self._nrows),
                               np.diff(self._rowptr)), self._values)
        return y

    def print_to(self, stream):
        """Debug dump, one '<row> <col> <value>' line per stored entry,
        0-based indices, 17 significant digits."""
        for i in range(self._nrows):
            for k in range(self._rowptr[i], self._rowptr[i + 1]):
                stream.write("%d %d %s\n" % (i, self._colidx[k],
                                             format(self._values[k], ".17g")))

    def to_csr(self):
        return csr_matrix((self._values, self._colidx, self._rowptr),
                          shape=(self._nrows, self._ncols))

    def to_dense(self):
        return self.to_csr().toarray()


class SolverSession:
    """Four-phase direct solve with pattern-keyed symbolic reuse.

    Phases: (1) symbolic analysis computes a fill-reducing ordering from the
    pattern alone, (2) numeric factorization, (3) back substitution,
    (4) release.  Phase 1 is skipped whenever the matrix fingerprint matches
    the cached one; any structural change forces the full sequence.  On a
    numeric failure the session resets itself and retries once through all
    phases before giving up.
    """

    def __init__(self):
        self.symbolic_invocations = 0
        self.numeric_invocations = 0
        self.back_substitutions = 0
        self._fingerprint = None
        self._perm = None
        self._factors = None

    # ---- phases -------------------------------------------------------------

    def symbolic_factorization(self, matrix):
        """Structure-only analysis: a reverse Cuthill-McKee ordering of the
        symmetrised pattern.  Values play no part.

        Rows coupled to a large fraction of the matrix (instance-level
        unknowns such as section constants or mean-value multipliers)
        would drag every bandwidth ordering apart, so they are excluded
        from the ordering and pinned to the end, where their fill stays
        confined to the border."""
        n, m = matrix.shape
        if n != m:
            raise SolveError("direct solver requires a square matrix, got %s" % (matrix.shape,))
        pattern = csr_matrix(
            (np.ones(matrix.nnz), matrix.column_indices, matrix.row_pointers),
            shape=matrix.shape)
        sym = pattern + pattern.T
        degrees = np.diff(sym.indptr)
        dense = degrees > max(16, 0.1 * n)
        if dense.any() and not dense.all():
            keep = np.where(~dense)[0]
            order = np.asarray(reverse_cuthill_mckee(
                sym[keep][:, keep], symmetric_mode=True))
            self._perm = np.concatenate([keep[order], np.where(dense)[0]])
        else:
            self._perm = np.asarray(
                reverse_cuthill_mckee(sym, symmetric_mode=True))
        self._fingerprint = matrix.profile_fingerprint()
        self._factors = None
        self.symbolic_invocations += 1

    def numeric_factorization(self, matrix):
        if self._perm is None or self._fingerprint != matrix.profile_fingerprint():
            raise SolveError("numeric factorization without matching symbolic phase")
        a = matrix.to_csr()[self._perm][:, self._perm].tocsc()
        try:
            self._factors = splu(a, permc_spec="NATURAL",
                                 options=dict(SymmetricMode=False))
        except RuntimeError as err:
            self._factors = None
            raise SolveError(str(err)) from err
        self.numeric_invocations += 1

    def back_substitute(self, rhs):
        if self._factors is None:
            raise SolveError("back substitution without numeric factors")
        rhs = np.asarray(rhs, dtype=np.float64)
        z = self._factors.solve(rhs[self._perm])
        if not np.all(np.isfinite(z)):
            raise SolveError("non-finite solution from back substitution")
        x = np.empty_like(z)
        x[self._perm] = z
        self.back_substitutions += 1
        return x

    def release(self):
        """Drop factors and cached analysis; next solve redoes all phases."""
        self._fingerprint = None
        self._perm = None
        self._factors = None

    # ---- orchestration -----------------------------------------------------------

    def solve(self, matrix, rhs):
        """Full phased solve with symbolic reuse and a single-shot retry."""
        try:
            if (self._perm is None
                    or self._fingerprint != matrix.profile_fingerprint()):
                self.symbolic_factorization(matrix)
            self.numeric_factorization(matrix)
            return self.back_substitute(rhs)
        except SolveError:
            # reset and retry once through every phase
            self.release()
            self.symbolic_factorization(matrix)
            self.numeric_factorization(matrix)
            return self.back_substitute(rhs)
