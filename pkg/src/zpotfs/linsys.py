"""
Dense reference matrices for desk-scale verification.

Everything here is built explicitly (NM x NM), so it is only meant for small
frames. The fast detectors never touch this module except in tests and
audits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .channel import DopplerSpreadSet
from .transforms import perfect_shuffle, time_to_dd

MAX_ORACLE_SIZE = 4096
EIG_DENSE_LIMIT = 256
SINGULAR_RTOL = 1e-10


def circulant(v: np.ndarray) -> np.ndarray:
    """circ[v(0), ..., v(N-1)]: first column v, each column shifted down by one."""
    return scipy.linalg.circulant(v)


@dataclass
class DenseChannelMatrices:
    """H (delay-Doppler), Ht (delay-time) and G (time) for one channel."""

    H: np.ndarray = field(repr=False)
    Ht: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    M: int
    N: int
    M_data: int
    perm: np.ndarray = field(repr=False)

    def block(self, n: int) -> np.ndarray:
        """G_n, the n-th M x M diagonal block of G."""
        sl = slice(n * self.M, (n + 1) * self.M)
        return self.G[sl, sl]

    def K(self, m: int, l: int) -> np.ndarray:
        N = self.N
        c = m - l
        return self.H[m * N:(m + 1) * N, c * N:(c + 1) * N]

    def Kt(self, m: int, l: int) -> np.ndarray:
        N = self.N
        c = m - l
        return self.Ht[m * N:(m + 1) * N, c * N:(c + 1) * N]


def assemble(spread: DopplerSpreadSet) -> DenseChannelMatrices:
    """Build H from circulant blocks K_{m,l}, Ht from diagonal blocks, G by index permutation."""
    dims = spread.dims
    M, N = dims.M, dims.N
    NM = M * N
    if NM > MAX_ORACLE_SIZE:
        raise ValueError(f"NM={NM} exceeds the dense oracle cap {MAX_ORACLE_SIZE}; "
                         "use the fast detectors in zpotfs.detect instead")
    H = np.zeros((NM, NM), dtype=complex, order="F")
    Ht = np.zeros((NM, NM), dtype=complex, order="F")
    # H from the Doppler-domain vectors, Ht independently from the delay-time gains;
    # the tests tie the two together through (I_M kron F^H) H (I_M kron F)
    for li, l in enumerate(spread.taps):
        for m in range(l, M):
            c = m - l
            H[m * N:(m + 1) * N, c * N:(c + 1) * N] = circulant(spread.nu[li, m])
            Ht[m * N:(m + 1) * N, c * N:(c + 1) * N] = np.diag(spread.nu_t[li, m])
    perm = perfect_shuffle(M, N)
    G = Ht[np.ix_(perm, perm)]
    return DenseChannelMatrices(H=H, Ht=Ht, G=G, M=M, N=N, M_data=dims.M_data, perm=perm)


@dataclass
class IterationMatrices:
    """Per-block normal equations R_n s_n = z_n and their splittings.

    Only the first M' columns of G_n enter: the zero-padded rows are known to
    be zero and are not unknowns of the detector.
    """

    Gd: list = field(repr=False)
    R: list = field(repr=False)
    D: list = field(repr=False)
    L: list = field(repr=False)
    M: int
    N: int
    M_data: int

    def z(self, r: np.ndarray) -> list:
        r = np.asarray(r).reshape(self.N, self.M)
        return [self.Gd[n].conj().T @ r[n] for n in range(self.N)]

    def T_jacobi(self, n: int) -> np.ndarray:
        Dinv = 1.0 / np.diag(self.D[n])[:, None]
        return Dinv * (self.L[n] + self.L[n].conj().T)

    def T_gs(self, n: int) -> np.ndarray:
        return scipy.linalg.solve_triangular(self.D[n] + self.L[n], self.L[n].conj().T, lower=True)

    def T_sor(self, n: int, omega: float) -> np.ndarray:
        A = self.D[n] + omega * self.L[n]
        B = (omega - 1.0) * self.D[n] + omega * self.L[n].conj().T
        return scipy.linalg.solve_triangular(A, B, lower=True)

    def Q_sor(self, n: int, omega: float) -> np.ndarray:
        """Input matrix of the relaxed sweep, s <- -T s + Q z."""
        A = self.D[n] + omega * self.L[n]
        return omega * scipy.linalg.solve_triangular(A, np.eye(self.M_data), lower=True)


def iteration_matrices(dense: DenseChannelMatrices) -> IterationMatrices:
    Gd, R, D, L = [], [], [], []
    for n in range(dense.N):
        g = dense.block(n)[:, : dense.M_data]
        Rn = g.conj().T @ g
        Gd.append(g)
        R.append(Rn)
        D.append(np.diag(np.diag(Rn)))
        L.append(np.tril(Rn, -1))
    return IterationMatrices(Gd=Gd, R=R, D=D, L=L, M=dense.M, N=dense.N, M_data=dense.M_data)


def spectral_radius(A) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got shape {A.shape}")
    if A.shape[0] == 0 or not np.any(A):
        return 0.0
    if A.shape[0] < EIG_DENSE_LIMIT:
        return float(np.max(np.abs(np.linalg.eigvals(A))))
    try:
        vals = scipy.sparse.linalg.eigs(A, k=1, which="LM", return_eigenvectors=False,
                                        tol=1e-9, maxiter=20 * A.shape[0])
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        raise RuntimeError("eigenvalue iteration did not converge") from exc
    return float(np.abs(vals[0]))


def is_singular(R: np.ndarray) -> bool:
    sv = np.linalg.svd(R, compute_uv=False)
    return bool(sv[-1] < SINGULAR_RTOL * sv[0]) if sv[0] > 0 else True


def direct_solve(matrices: IterationMatrices, r) -> np.ndarray:
    """Least-squares frame estimate by per-block Cholesky solves.

    Returns the M x N delay-Doppler estimate (zero-padded rows are zero).
    """
    M, N, Md = matrices.M, matrices.N, matrices.M_data
    S = np.zeros((N, M), dtype=complex)
    for n, zn in enumerate(matrices.z(r)):
        Rn = matrices.R[n]
        if is_singular(Rn):
            raise np.linalg.LinAlgError(f"R_n is singular for block n={n}")
        S[n, :Md] = scipy.linalg.cho_solve(scipy.linalg.cho_factor(Rn), zn)
    return time_to_dd(S.reshape(-1), M, N)


def block_residuals(matrices: IterationMatrices, r, X) -> np.ndarray:
    """Relative normal-equation residual ||z_n - R_n s_n|| / ||z_n|| per block."""
    from .transforms import dd_to_time

    s = dd_to_time(X).reshape(matrices.N, matrices.M)
    out = np.zeros(matrices.N)
    for n, zn in enumerate(matrices.z(r)):
        res = zn - matrices.R[n] @ s[n, : matrices.M_data]
        out[n] = np.linalg.norm(res) / max(np.linalg.norm(zn), 1e-300)
    return out


def dump_matrix(A, path) -> None:
    """Write ``rows cols`` then one line per row of ``re im`` pairs."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    rows = [f"{A.shape[0]} {A.shape[1]}"]
    for row in A:
        rows.append(" ".join(f"{v.real:.17g} {v.imag:.17g}" for v in row))
    Path(path).write_text("\n".join(rows) + "\n")


def load_matrix(path) -> np.ndarray:
    lines = Path(path).read_text().split("\n")
    nr, nc = (int(t) for t in lines[0].split())
    A = np.empty((nr, nc), dtype=complex)
    for i in range(nr):
        vals = np.array(lines[i + 1].split(), dtype=float)
        A[i] = vals[0::2] + 1j * vals[1::2]
    return A
