"""Faithful (4N+2)-dimensional matrix representation of the doubled-mode algebra.

The span of {1, b_mu, b_mu^dag, quadratics} over the 2N doubled modes closes
under commutation and admits a smallest faithful representation by matrices of
size 4N+2.  Rows and columns are laid out as

    position  0   | 1 .. 2N          | 2N+1 .. 4N            | 4N+1
    meaning   "0" | creation labels  | annihilation labels   | "-0"
                  | mu = 1 .. 2N     | mu = 2N .. 1 (flipped)|

The elementary images (M[i, j] denotes a single-entry matrix):

    b_mu^dag b_nu   ->  M[mu, nu] - M[-nu, -mu] + delta(mu, nu) M[-0, 0]
    b_mu^dag b_nu^dag -> M[mu, -nu] + M[nu, -mu]
    b_mu b_nu       -> -M[-mu, nu] - M[-nu, mu]
    b_mu^dag        ->  M[mu, 0] - M[-0, -mu]
    b_mu            -> -M[-mu, 0] - M[-0, mu]
    identity        -> -2 M[-0, 0]

where a negative label -mu sits at position 4N+1-mu.  Matrix exponentials,
logarithms and block manipulations of these images implement all operator
disentanglement and reordering used by the solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, logm

from .errors import LogBranchFailure, MatrixExpFailure, SingularBlock
from .parameterization import QuadraticForm, QuadraticGenerator, half_swap

_COND_LIMIT = 1e12


def flip(n_doubled: int) -> np.ndarray:
    """Anti-diagonal permutation on the 2N block indices."""
    return np.fliplr(np.eye(n_doubled))


@dataclass(frozen=True)
class RepMatrix:
    """A (4N+2) x (4N+2) image of an algebra element."""

    n_modes: int
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return 4 * self.n_modes + 2


def rep_of_qform(qf: QuadraticForm) -> RepMatrix:
    """Image of a general quadratic form, linear and scalar parts included."""
    n = qf.n
    m = 2 * n
    dim = 4 * n + 2
    J = flip(m)
    T = np.zeros((dim, dim), dtype=complex)
    R = (qf.R + qf.R.T) / 2.0
    L = (qf.L + qf.L.T) / 2.0
    T[1:m + 1, 1:m + 1] += qf.D
    T[m + 1:2 * m + 1, m + 1:2 * m + 1] += -J @ qf.D.T @ J
    T[1:m + 1, m + 1:2 * m + 1] += 2.0 * R @ J
    T[m + 1:2 * m + 1, 1:m + 1] += -2.0 * J @ L
    T[1:m + 1, 0] += qf.lin_r
    T[m + 1:2 * m + 1, 0] += -(J @ qf.lin_l)
    T[dim - 1, 1:m + 1] += -qf.lin_l
    T[dim - 1, m + 1:2 * m + 1] += -(J @ qf.lin_r)
    T[dim - 1, 0] += np.trace(qf.D) - 2.0 * qf.const
    return RepMatrix(n_modes=n, matrix=T)


def rep_of_generator(gen: QuadraticGenerator) -> RepMatrix:
    """Image of a deterministic generator (R, D, L, scalar)."""
    return rep_of_qform(QuadraticForm(n=gen.n_modes, const=gen.scalar,
                                      R=gen.R, D=gen.D, L=gen.L))


@dataclass(frozen=True)
class PropagatorBlocks:
    """Blocks of exp(rep * t), named by the (row, column) label ranges.

    N11/N1m1/Nm11/Nm1m1 are the 2N x 2N inner blocks; N10/Nm10 the first
    column, Nm01/Nm0m1 the last row, and c the lower-left scalar.
    """

    n_modes: int
    t: float
    N11: np.ndarray
    N1m1: np.ndarray
    Nm11: np.ndarray
    Nm1m1: np.ndarray
    N10: np.ndarray
    Nm10: np.ndarray
    Nm01: np.ndarray
    Nm0m1: np.ndarray
    c: complex

    @classmethod
    def from_matrix(cls, n_modes: int, t: float, T: np.ndarray) -> "PropagatorBlocks":
        m = 2 * n_modes
        return cls(
            n_modes=n_modes, t=t,
            N11=T[1:m + 1, 1:m + 1], N1m1=T[1:m + 1, m + 1:2 * m + 1],
            Nm11=T[m + 1:2 * m + 1, 1:m + 1], Nm1m1=T[m + 1:2 * m + 1, m + 1:2 * m + 1],
            N10=T[1:m + 1, 0], Nm10=T[m + 1:2 * m + 1, 0],
            Nm01=T[4 * n_modes + 1, 1:m + 1], Nm0m1=T[4 * n_modes + 1, m + 1:2 * m + 1],
            c=T[4 * n_modes + 1, 0],
        )

    def assemble(self) -> np.ndarray:
        """Rebuild the full (4N+2) matrix (inverse of from_matrix)."""
        m = 2 * self.n_modes
        dim = 4 * self.n_modes + 2
        T = np.eye(dim, dtype=complex)
        T[1:m + 1, 1:m + 1] = self.N11
        T[1:m + 1, m + 1:2 * m + 1] = self.N1m1
        T[m + 1:2 * m + 1, 1:m + 1] = self.Nm11
        T[m + 1:2 * m + 1, m + 1:2 * m + 1] = self.Nm1m1
        T[1:m + 1, 0] = self.N10
        T[m + 1:2 * m + 1, 0] = self.Nm10
        T[dim - 1, 1:m + 1] = self.Nm01
        T[dim - 1, m + 1:2 * m + 1] = self.Nm0m1
        T[dim - 1, 0] = self.c
        return T


def propagator_blocks(rep: RepMatrix, t: float) -> PropagatorBlocks:
    """Blocks of expm(rep.matrix * t).

    Scaling-and-squaring Pade exponential; an eigendecomposition fast path is
    unnecessary at this matrix size but the result is checked for finiteness.
    """
    if t < 0:
        raise ValueError("propagator time must be >= 0")
    T = expm(rep.matrix * t)
    if not np.all(np.isfinite(T)):
        raise MatrixExpFailure(f"non-finite entries in expm at t={t}")
    return PropagatorBlocks.from_matrix(rep.n_modes, t, T)


def propagator_grid(rep: RepMatrix, dt: float, steps: int) -> np.ndarray:
    """expm(rep * j * dt) for j = 1..steps, shape (steps, 4N+2, 4N+2).

    Uses the eigendecomposition when well conditioned, otherwise repeated
    multiplication by the single-step propagator.
    """
    dim = rep.dim
    A = rep.matrix
    try:
        w, V = np.linalg.eig(A)
        cond = np.linalg.cond(V)
    except np.linalg.LinAlgError:
        cond = np.inf
    ts = dt * np.arange(1, steps + 1)
    if cond < 1e8:
        Vinv = np.linalg.inv(V)
        phases = np.exp(np.outer(ts, w))  # (steps, dim)
        out = np.einsum("ij,tj,jk->tik", V, phases, Vinv)
    else:
        step = expm(A * dt)
        out = np.empty((steps, dim, dim), dtype=complex)
        acc = np.eye(dim, dtype=complex)
        for j in range(steps):
            acc = acc @ step
            out[j] = acc
    if not np.all(np.isfinite(out)):
        raise MatrixExpFailure("non-finite entries in propagator grid")
    return out


@dataclass(frozen=True)
class DisentangledQuadratic:
    """Parameters of exp(creation factor) exp(number factor) exp(annihilation
    factor) equal to a purely quadratic group element."""

    n_modes: int
    R_prime: np.ndarray
    L_prime: np.ndarray
    D_under: np.ndarray
    delta_prime: complex

    @property
    def D_prime(self) -> np.ndarray:
        """Normally ordered form of the number factor: expm(D_under) - 1."""
        return expm(self.D_under) - np.eye(2 * self.n_modes)


def _checked_inverse(block: np.ndarray, what: str) -> np.ndarray:
    cond = np.linalg.cond(block)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise SingularBlock(f"{what} is numerically singular (cond={cond:.2e})")
    return np.linalg.inv(block)


def _principal_log(block: np.ndarray, what: str) -> np.ndarray:
    w = np.linalg.eigvals(block)
    scale = np.abs(w).max(initial=1.0)
    on_cut = (w.real <= 0) & (np.abs(w.imag) <= 1e-13 * scale)
    if np.any(on_cut):
        raise LogBranchFailure(
            f"{what} has an eigenvalue on the closed negative real axis; "
            "principal logarithm undefined")
    return logm(block)


def disentangle_quadratic(blocks: PropagatorBlocks) -> DisentangledQuadratic:
    """Extract the three-factor parameters from propagator blocks.

    With J the index flip:  D_under^T = -J log(Nm1m1) J,
    2 R' = N1m1 Nm1m1^{-1} J,  2 L' = -J Nm1m1^{-1} Nm11, and the scalar
    follows from the lower-left entry once tr(D_under) is known.
    """
    m = 2 * blocks.n_modes
    J = flip(m)
    inv = _checked_inverse(blocks.Nm1m1, "Nm1m1")
    lg = _principal_log(blocks.Nm1m1, "Nm1m1")
    D_under = -(J @ lg @ J).T
    R_prime = 0.5 * blocks.N1m1 @ inv @ J
    L_prime = -0.5 * J @ inv @ blocks.Nm11
    R_prime = (R_prime + R_prime.T) / 2.0
    L_prime = (L_prime + L_prime.T) / 2.0
    delta_prime = (np.trace(D_under) - blocks.c) / 2.0
    return DisentangledQuadratic(n_modes=blocks.n_modes, R_prime=R_prime,
                                 L_prime=L_prime, D_under=D_under,
                                 delta_prime=delta_prime)


def reorder_linear_increment(blocks: PropagatorBlocks, dl: np.ndarray,
                             dr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Move a linear-exponent factor from the left of the propagator to the right.

    dl is a row (coefficients of b), dr a column (coefficients of b^dag); both
    length 2N.  The returned pair satisfies
    exp(b^dag dr + dl b) exp(Q t) = exp(Q t) exp(b^dag dr' + dl' b).
    """
    J = flip(2 * blocks.n_modes)
    dl_p = dl @ blocks.N11 + (J @ dr) @ blocks.Nm11
    dr_p = J @ (blocks.N1m1.T @ dl + blocks.Nm1m1.T @ (J @ dr))
    return dl_p, dr_p


def normal_order_linear(blocks: PropagatorBlocks, l_prime: np.ndarray,
                        r_prime: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve exp(b^dag r_u) exp(Q t) exp(l_u b) =
    exp(-sigma) exp(Q t) exp(b^dag r') exp(l' b) for (l_u, r_u).

    The reordering also spawns the scalar sigma = r'^T L' r' (see
    :func:`reordering_scalar`), which multiplies the evolution operator when
    the normal-ordered factor arrangement is used.
    """
    m = 2 * blocks.n_modes
    J = flip(m)
    inv_t = _checked_inverse(blocks.Nm1m1.T, "Nm1m1^T")
    inv = _checked_inverse(blocks.Nm1m1, "Nm1m1")
    r_under = J @ (inv_t @ (J @ r_prime))
    l_under = l_prime - (J @ r_prime) @ (inv @ blocks.Nm11)
    return l_under, r_under


def reordering_scalar(blocks: PropagatorBlocks, r_prime: np.ndarray) -> complex:
    """Scalar exponent spawned by normal-ordering the linear factors:
    sigma = r'^T L' r' with L' the annihilation-quadratic parameter."""
    m = 2 * blocks.n_modes
    J = flip(m)
    inv = _checked_inverse(blocks.Nm1m1, "Nm1m1")
    L_prime = -0.5 * J @ inv @ blocks.Nm11
    return r_prime @ L_prime @ r_prime


def povm_blocks(blocks: PropagatorBlocks) -> np.ndarray:
    """Full 2N x 2N matrix of effect-operator quadratic parameters.

    Obtained by disentangling the propagator left-multiplied by the
    partner-pairing factor; the pairing shifts the annihilation parameter by
    half the half-swap matrix, which is removed again at the end.  The [:N, :N]
    block is the squeezing-like parameter, [:N, N:] the thermal-like one.
    """
    n = blocks.n_modes
    m = 2 * n
    J = flip(m)
    JI = J @ half_swap(n)
    A = blocks.Nm1m1 - JI @ blocks.N1m1
    B = blocks.Nm11 - JI @ blocks.N11
    inv = _checked_inverse(A, "transformed Nm1m1")
    L_full = -0.5 * J @ inv @ B - 0.5 * half_swap(n)
    return (L_full + L_full.T) / 2.0


def rep_linear_factor(n_modes: int, l_row: np.ndarray | None = None,
                      r_col: np.ndarray | None = None) -> np.ndarray:
    """Exact image of exp(b^dag r + l b): the image of the exponent is
    nilpotent of index 2, so this is identity plus the exponent image."""
    qf = QuadraticForm(n=n_modes, lin_l=l_row, lin_r=r_col)
    X = rep_of_qform(qf).matrix
    return np.eye(4 * n_modes + 2, dtype=complex) + X


def reconstruct_from_factors(dis: DisentangledQuadratic,
                             t_unused: float | None = None) -> np.ndarray:
    """Image of the three-factor product; equals the propagator image when the
    disentanglement is consistent."""
    n = dis.n_modes
    f_r = expm(rep_of_qform(QuadraticForm(n=n, R=dis.R_prime)).matrix)
    f_d = expm(rep_of_qform(QuadraticForm(n=n, D=dis.D_under,
                                          const=dis.delta_prime)).matrix)
    f_l = expm(rep_of_qform(QuadraticForm(n=n, L=dis.L_prime)).matrix)
    return f_r @ f_d @ f_l


def inner_eigenvalues(rep: RepMatrix) -> np.ndarray:
    """Eigenvalues of the inner 4N x 4N block; they set the evolution timescales."""
    m = 2 * rep.n_modes
    return np.linalg.eigvals(rep.matrix[1:2 * m + 1, 1:2 * m + 1])


def blocks_to_json(blocks: PropagatorBlocks) -> dict:
    """Debug dump of the block decomposition."""
    def enc(a):
        a = np.asarray(a)
        return {"re": a.real.tolist(), "im": a.imag.tolist()}

    return {
        "n_modes": blocks.n_modes, "t": blocks.t,
        "N11": enc(blocks.N11), "N1m1": enc(blocks.N1m1),
        "Nm11": enc(blocks.Nm11), "Nm1m1": enc(blocks.Nm1m1),
        "N10": enc(blocks.N10), "Nm10": enc(blocks.Nm10),
        "Nm01": enc(blocks.Nm01), "Nm0m1": enc(blocks.Nm0m1),
        "c": enc(blocks.c),
    }
