"""Classical (Ruge-Stueben) algebraic multigrid.

Setup: classical strength of connection over negative off-diagonals,
Ruge-Stueben first-pass C/F splitting, standard interpolation (strong
F-neighbours are eliminated through their own equations before direct
interpolation), Galerkin coarse operators. Cycle: V(1,1) with a forward
Gauss-Seidel pre-sweep and a backward post-sweep, which makes the cycle a
symmetric operator.
"""

import heapq
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .krylov import pcg

U_NODE, F_NODE, C_NODE = -1, 0, 1


@dataclass
class AmgConfig:
    strength_threshold: float = 0.25
    max_coarse: int = 64
    max_levels: int = 20
    interpolation: str = "standard"  # or "direct"
    dense_coarse_limit: int = 1500


@dataclass
class Level:
    A: sp.csr_matrix
    P: sp.csr_matrix = None
    R: sp.csr_matrix = None
    splitting: np.ndarray = None


@dataclass
class AmgHierarchy:
    levels: list
    coarse_kind: str = "dense"
    coarse_factor: object = field(default=None, repr=False)
    config: AmgConfig = None

    @property
    def operator(self):
        return self.levels[0].A

    @property
    def sizes(self):
        return [lvl.A.shape[0] for lvl in self.levels]

    def coarse_solve(self, b):
        if self.coarse_kind == "dense":
            return sla.cho_solve(self.coarse_factor, b)
        return self.coarse_factor.solve(b)

    def aspreconditioner(self):
        return lambda r: amg_vcycle(self, r)


def strength_of_connection(A, theta):
    """Pattern of strong couplings: -a_ij >= theta * max_{k != i} (-a_ik), a_ij < 0.

    Row ``i`` of the result lists the points that ``i`` strongly depends on.
    """
    A = A.tocsr()
    n = A.shape[0]
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    offdiag = rows != A.indices
    neg = np.where(offdiag, -A.data, 0.0)
    neg[neg < 0] = 0.0
    rowmax = np.zeros(n)
    np.maximum.at(rowmax, rows, neg)
    strong = offdiag & (neg > 0) & (neg >= theta * rowmax[rows])
    S = sp.csr_matrix((np.ones(strong.sum()), (rows[strong], A.indices[strong])), shape=A.shape)
    S.sort_indices()
    return S


@numba.njit(cache=True)
def _rs_first_pass(n, s_ptr, s_idx, t_ptr, t_idx):
    state = np.full(n, U_NODE, dtype=np.int64)
    lam = np.zeros(n, dtype=np.int64)
    for i in range(n):
        lam[i] = t_ptr[i + 1] - t_ptr[i]
        if lam[i] == 0 and s_ptr[i + 1] == s_ptr[i]:
            state[i] = F_NODE  # no strong couplings at all
    heap = [(0, 0)]
    heap.pop()
    for i in range(n):
        if state[i] == U_NODE:
            heap.append((-lam[i], i))
    heapq.heapify(heap)
    while len(heap) > 0:
        negl, i = heapq.heappop(heap)
        if state[i] != U_NODE or -negl != lam[i]:
            continue
        state[i] = C_NODE
        for jj in range(t_ptr[i], t_ptr[i + 1]):
            j = t_idx[jj]
            if state[j] == U_NODE:
                state[j] = F_NODE
                for kk in range(s_ptr[j], s_ptr[j + 1]):
                    k = s_idx[kk]
                    if state[k] == U_NODE:
                        lam[k] += 1
                        heapq.heappush(heap, (-lam[k], k))
        for jj in range(s_ptr[i], s_ptr[i + 1]):
            j = s_idx[jj]
            if state[j] == U_NODE and lam[j] > 0:
                lam[j] -= 1
                heapq.heappush(heap, (-lam[j], j))
    return state


def rs_splitting(S):
    """Ruge-Stueben first-pass C/F splitting of the strength graph ``S``."""
    ST = S.T.tocsr()
    ST.sort_indices()
    n = S.shape[0]
    return _rs_first_pass(
        n, S.indptr.astype(np.int64), S.indices.astype(np.int64),
        ST.indptr.astype(np.int64), ST.indices.astype(np.int64),
    )


@numba.njit(cache=True)
def _interpolation(n, a_ptr, a_idx, a_val, s_ptr, s_idx, state, cidx, standard):
    nnz_est = 0
    for i in range(n):
        nnz_est += 1 + (s_ptr[i + 1] - s_ptr[i]) * 4
    rows = np.empty(nnz_est, dtype=np.int64)
    cols = np.empty(nnz_est, dtype=np.int64)
    vals = np.empty(nnz_est)
    acc = np.zeros(n)
    touched = np.zeros(n, dtype=np.bool_)
    in_p = np.zeros(n, dtype=np.bool_)
    tlist = np.empty(n, dtype=np.int64)
    plist = np.empty(n, dtype=np.int64)
    diag_of = np.zeros(n)
    for i in range(n):
        for kk in range(a_ptr[i], a_ptr[i + 1]):
            if a_idx[kk] == i:
                diag_of[i] += a_val[kk]
    pos = 0
    for i in range(n):
        if state[i] == C_NODE:
            rows[pos] = i
            cols[pos] = cidx[i]
            vals[pos] = 1.0
            pos += 1
            continue
        nt = 0
        npl = 0
        diag = diag_of[i]
        for kk in range(a_ptr[i], a_ptr[i + 1]):
            k = a_idx[kk]
            if k == i:
                continue
            if not touched[k]:
                touched[k] = True
                tlist[nt] = k
                nt += 1
            acc[k] += a_val[kk]
        for jj in range(s_ptr[i], s_ptr[i + 1]):
            j = s_idx[jj]
            if state[j] == C_NODE:
                if not in_p[j]:
                    in_p[j] = True
                    plist[npl] = j
                    npl += 1
            elif standard and diag_of[j] != 0.0:
                # eliminate strong F-neighbour j through its own equation
                aij = 0.0
                for kk in range(a_ptr[i], a_ptr[i + 1]):
                    if a_idx[kk] == j:
                        aij += a_val[kk]
                acc[j] -= aij
                scale = -aij / diag_of[j]
                for kk in range(a_ptr[j], a_ptr[j + 1]):
                    k = a_idx[kk]
                    if k == j:
                        continue
                    if k == i:
                        diag += scale * a_val[kk]
                        continue
                    if not touched[k]:
                        touched[k] = True
                        tlist[nt] = k
                        nt += 1
                    acc[k] += scale * a_val[kk]
                for kk in range(s_ptr[j], s_ptr[j + 1]):
                    k = s_idx[kk]
                    if state[k] == C_NODE and k != i and not in_p[k]:
                        in_p[k] = True
                        plist[npl] = k
                        npl += 1
        neg_all = 0.0
        pos_all = 0.0
        for t in range(nt):
            v = acc[tlist[t]]
            if v < 0:
                neg_all += v
            else:
                pos_all += v
        neg_p = 0.0
        pos_p = 0.0
        for t in range(npl):
            v = acc[plist[t]]
            if v < 0:
                neg_p += v
            else:
                pos_p += v
        if pos_p == 0.0:
            diag += pos_all
            beta = 0.0
        else:
            beta = pos_all / pos_p
        alpha = neg_all / neg_p if neg_p != 0.0 else 0.0
        if diag != 0.0:
            for t in range(npl):
                k = plist[t]
                v = acc[k]
                w = -(alpha if v < 0 else beta) * v / diag
                if w != 0.0:
                    if pos >= rows.shape[0]:
                        rows = _grow_i(rows)
                        cols = _grow_i(cols)
                        vals = _grow_f(vals)
                    rows[pos] = i
                    cols[pos] = cidx[k]
                    vals[pos] = w
                    pos += 1
        for t in range(nt):
            acc[tlist[t]] = 0.0
            touched[tlist[t]] = False
        for t in range(npl):
            in_p[plist[t]] = False
    return rows[:pos], cols[:pos], vals[:pos]


@numba.njit(cache=True)
def _grow_i(a):
    b = np.empty(2 * a.shape[0], dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@numba.njit(cache=True)
def _grow_f(a):
    b = np.empty(2 * a.shape[0])
    b[: a.shape[0]] = a
    return b


def interpolation(A, S, splitting, kind="standard"):
    """Prolongation from the C points of ``splitting``."""
    A = A.tocsr()
    n = A.shape[0]
    is_c = splitting == C_NODE
    cidx = np.cumsum(is_c) - 1
    nc = int(is_c.sum())
    rows, cols, vals = _interpolation(
        n, A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data,
        S.indptr.astype(np.int64), S.indices.astype(np.int64),
        splitting, cidx.astype(np.int64), kind == "standard",
    )
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, nc))


@numba.njit(cache=True)
def gauss_seidel_forward(ptr, idx, val, x, b):
    n = x.shape[0]
    for i in range(n):
        s = b[i]
        d = 0.0
        for kk in range(ptr[i], ptr[i + 1]):
            j = idx[kk]
            if j == i:
                d += val[kk]
            else:
                s -= val[kk] * x[j]
        x[i] = s / d


@numba.njit(cache=True)
def gauss_seidel_backward(ptr, idx, val, x, b):
    n = x.shape[0]
    for i in range(n - 1, -1, -1):
        s = b[i]
        d = 0.0
        for kk in range(ptr[i], ptr[i + 1]):
            j = idx[kk]
            if j == i:
                d += val[kk]
            else:
                s -= val[kk] * x[j]
        x[i] = s / d


def amg_setup(S, strength_threshold=0.25, config=None):
    """Build a Ruge-Stueben hierarchy for the SPD matrix ``S``.

    Coarsening stops at ``max_coarse`` unknowns, at ``max_levels`` levels, or
    when a level produces no (or no fewer) coarse points; the last level is
    solved directly.
    """
    config = config or AmgConfig(strength_threshold=strength_threshold)
    S = sp.csr_matrix(S, dtype=float)
    if S.shape[0] != S.shape[1]:
        raise ValueError("AMG needs a square matrix")
    S.sum_duplicates()
    S.sort_indices()
    levels = [Level(S)]
    while len(levels) < config.max_levels:
        A = levels[-1].A
        n = A.shape[0]
        if n <= config.max_coarse:
            break
        C = strength_of_connection(A, config.strength_threshold)
        split = rs_splitting(C)
        nc = int(np.sum(split == C_NODE))
        if nc == 0 or nc >= n:
            break
        P = interpolation(A, C, split, config.interpolation)
        R = P.T.tocsr()
        Ac = (R @ A @ P).tocsr()
        Ac.sum_duplicates()
        Ac.sort_indices()
        levels[-1].P, levels[-1].R, levels[-1].splitting = P, R, split
        levels.append(Level(Ac))
    coarse = levels[-1].A
    if coarse.shape[0] <= config.dense_coarse_limit:
        kind, factor = "dense", sla.cho_factor(coarse.toarray())
    else:
        kind, factor = "sparse", spla.splu(coarse.tocsc())
    return AmgHierarchy(levels, kind, factor, config)


def amg_vcycle(hier, rhs, x0=None):
    """One V(1,1) cycle for ``hier.operator x = rhs`` starting from ``x0``."""
    b = np.asarray(rhs, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    return _cycle(hier, 0, b, x)


def _cycle(hier, k, b, x):
    levels = hier.levels
    if k == len(levels) - 1:
        return hier.coarse_solve(b)
    L = levels[k]
    A = L.A
    gauss_seidel_forward(A.indptr, A.indices, A.data, x, b)
    r = b - A @ x
    xc = _cycle(hier, k + 1, L.R @ r, np.zeros(L.R.shape[0]))
    x += L.P @ xc
    gauss_seidel_backward(A.indptr, A.indices, A.data, x, b)
    return x


def inexact_middle_solve(hier, rhs, tol=1e-3, maxit=200):
    """PCG on ``hier.operator`` preconditioned by one V-cycle, zero initial guess.

    Returns ``(x, report)``; ``report.converged`` is False when ``maxit`` was hit.
    """
    return pcg(hier.operator, hier.aspreconditioner(), rhs, tol=tol, maxit=maxit)
