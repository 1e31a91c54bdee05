"""Apply the composed evolution to arbitrary states in a truncated Fock basis.

The evolution operator factorizes as

    exp(h + delta' + sigma) *
    exp(creation factor: b^dag r_u + b^dag R' b^(dag.T)) *
    exp(number factor:   b^dag D_u b) *
    exp(annihilation factor: b^T L' b + l_u b)

where sigma = r'^T L' r' is the scalar spawned when the linear pieces are
normal ordered.  Partner-mode (right-multiplication) operators are realized by
Kronecker lifting onto column-stacked density matrices: A rho B maps to
(B^T kron A) vec(rho).

The three factor exponentials are applied as dense matrix exponentials for a
single mode and as sparse exponential actions for two modes.  The
trajectory-dependent linear factors commute with the quadratic factors of the
same species, so ensembles can share the quadratic exponentials.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm
from scipy.sparse.linalg import expm_multiply

from .errors import (
    DimensionMismatch,
    LogBranchFailure,
    NonHermitianResult,
    TruncationOverflow,
    ZeroTrace,
)
from .lie_rep import (
    DisentangledQuadratic,
    PropagatorBlocks,
    disentangle_quadratic,
    normal_order_linear,
    reordering_scalar,
)
from .trajectory import TrajectoryIntegrals

DEFAULT_TAIL_TOL = 1e-8
HERMITICITY_TOL = 1e-9


def fock_operators(dim: int):
    """(a, a_dag, n) ladder matrices on a dim-level truncation."""
    if dim < 2:
        raise ValueError("need dim >= 2")
    a = np.diag(np.sqrt(np.arange(1, dim)), k=1)
    return a, a.T.copy(), np.diag(np.arange(dim, dtype=float))


@lru_cache(maxsize=32)
def _mode_lowering(n_modes: int, dim: int) -> tuple:
    """Per-mode lowering operators on the D^N product space (sparse CSR)."""
    a1 = sp.csr_matrix(np.diag(np.sqrt(np.arange(1, dim)), k=1))
    eye = sp.identity(dim, format="csr")
    ops = []
    for i in range(n_modes):
        factors = [a1 if j == i else eye for j in range(n_modes)]
        acc = factors[0]
        for f in factors[1:]:
            acc = sp.kron(acc, f, format="csr")
        ops.append(acc)
    return tuple(ops)


@dataclass
class FockDensityMatrix:
    """Density matrix on an N-mode D-level truncation. May be unnormalized."""

    n_modes: int
    dim_per_mode: int
    rho: np.ndarray
    is_normalized: bool = True

    @property
    def dim(self) -> int:
        return self.dim_per_mode ** self.n_modes

    def trace(self) -> complex:
        return complex(np.trace(self.rho))

    def tail_mass(self) -> float:
        """Largest relative population of any mode's top Fock level."""
        pops = np.real(np.diag(self.rho)).reshape((self.dim_per_mode,) * self.n_modes)
        total = pops.sum()
        if total <= 0:
            return np.inf
        worst = 0.0
        for axis in range(self.n_modes):
            sl = [slice(None)] * self.n_modes
            sl[axis] = self.dim_per_mode - 1
            worst = max(worst, float(np.abs(pops[tuple(sl)].sum())) / abs(total))
        return worst

    def check_hermitian(self, tol: float = HERMITICITY_TOL) -> None:
        scale = max(1.0, float(np.abs(self.rho).max()))
        dev = float(np.abs(self.rho - self.rho.conj().T).max())
        if dev > tol * scale:
            raise NonHermitianResult(f"Hermiticity deviation {dev:.3e}")

    def purity(self) -> float:
        tr = self.trace().real
        return float(np.real(np.trace(self.rho @ self.rho)) / tr ** 2)


def vacuum_state(n_modes: int, dim: int) -> FockDensityMatrix:
    rho = np.zeros((dim ** n_modes, dim ** n_modes), dtype=complex)
    rho[0, 0] = 1.0
    return FockDensityMatrix(n_modes=n_modes, dim_per_mode=dim, rho=rho)


def fock_state(n_modes: int, dim: int, levels) -> FockDensityMatrix:
    levels = np.atleast_1d(levels)
    idx = 0
    for lv in levels:
        idx = idx * dim + int(lv)
    rho = np.zeros((dim ** n_modes, dim ** n_modes), dtype=complex)
    rho[idx, idx] = 1.0
    return FockDensityMatrix(n_modes=n_modes, dim_per_mode=dim, rho=rho)


def coherent_state(n_modes: int, dim: int, alpha) -> FockDensityMatrix:
    """Product coherent state, renormalized on the truncation."""
    from math import factorial

    alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
    psi = np.array([1.0], dtype=complex)
    for a in alpha:
        ns = np.arange(dim)
        coeff = np.exp(-abs(a) ** 2 / 2) * a ** ns / np.sqrt(
            np.array([float(factorial(n)) for n in ns]))
        psi = np.kron(psi, coeff)
    psi /= np.linalg.norm(psi)
    return FockDensityMatrix(n_modes=n_modes, dim_per_mode=dim,
                             rho=np.outer(psi, psi.conj()))


@dataclass(frozen=True)
class EvolutionFactors:
    """Physical-half parameters of the three-factor evolution at time t.

    r_under/l_under are the normal-ordered linear coefficients; log_scalar is
    delta' + sigma (everything except the record scalar h)."""

    n_modes: int
    t: float
    R_prime: np.ndarray
    R_breve: np.ndarray
    D_under: np.ndarray
    D_breve: np.ndarray
    L_prime: np.ndarray
    L_breve: np.ndarray
    r_under: np.ndarray
    l_under: np.ndarray
    delta_prime: complex
    sigma: complex

    @classmethod
    def from_blocks(cls, blocks: PropagatorBlocks,
                    integrals: TrajectoryIntegrals | None = None,
                    dis: DisentangledQuadratic | None = None) -> "EvolutionFactors":
        n = blocks.n_modes
        if dis is None:
            dis = disentangle_quadratic(blocks)
        if integrals is None:
            l_u = np.zeros(2 * n, dtype=complex)
            r_u = np.zeros(2 * n, dtype=complex)
            sigma = 0.0
        else:
            l_u, r_u = normal_order_linear(blocks, integrals.l_prime,
                                           integrals.r_prime)
            sigma = reordering_scalar(blocks, integrals.r_prime)
        return cls(
            n_modes=n, t=blocks.t,
            R_prime=dis.R_prime[:n, :n], R_breve=dis.R_prime[:n, n:],
            D_under=dis.D_under[:n, :n], D_breve=dis.D_under[:n, n:],
            L_prime=dis.L_prime[:n, :n], L_breve=dis.L_prime[:n, n:],
            r_under=r_u[:n], l_under=l_u[:n],
            delta_prime=dis.delta_prime, sigma=complex(sigma),
        )

    @property
    def log_scalar(self) -> complex:
        """Record-independent scalar exponent of the evolution operator."""
        return self.delta_prime + self.sigma


def _lift_left(X: sp.spmatrix, dim: int) -> sp.spmatrix:
    return sp.kron(sp.identity(dim, format="csr"), X, format="csr")


def _lift_right(X: sp.spmatrix, dim: int) -> sp.spmatrix:
    return sp.kron(X.T, sp.identity(dim, format="csr"), format="csr")


def _sandwich(left: sp.spmatrix, right: sp.spmatrix) -> sp.spmatrix:
    # A rho B -> (B^T kron A) vec(rho)
    return sp.kron(right.T, left, format="csr")


def evolution_superoperators(factors: EvolutionFactors, dim: int):
    """(S_ann, S_num, S_cre) sparse lifts; the evolution applies
    exp(S_cre) exp(S_num) exp(S_ann) together with the scalar exponents.

    Each lift combines left action, the Hermiticity-pairing right action, and
    the cross (sandwich) term of its species.
    """
    n = factors.n_modes
    a_ops = _mode_lowering(n, dim)
    ad_ops = [op.conj().T.tocsr() for op in a_ops]
    d = dim ** n

    x_ann = sp.csr_matrix((d, d), dtype=complex)
    for i in range(n):
        if factors.l_under[i] != 0:
            x_ann = x_ann + factors.l_under[i] * a_ops[i]
        for j in range(n):
            if factors.L_prime[i, j] != 0:
                x_ann = x_ann + factors.L_prime[i, j] * (a_ops[i] @ a_ops[j])
    s_ann = _lift_left(x_ann, d) + _lift_right(x_ann.conj().T.tocsr(), d)
    for i in range(n):
        for j in range(n):
            if factors.L_breve[i, j] != 0:
                s_ann = s_ann + 2.0 * factors.L_breve[i, j] * _sandwich(a_ops[i], ad_ops[j])

    x_num = sp.csr_matrix((d, d), dtype=complex)
    for i in range(n):
        for j in range(n):
            if factors.D_under[i, j] != 0:
                x_num = x_num + factors.D_under[i, j] * (ad_ops[i] @ a_ops[j])
    s_num = _lift_left(x_num, d) + _lift_right(x_num.conj().T.tocsr(), d)
    db_dag = factors.D_breve.conj().T
    for i in range(n):
        for j in range(n):
            if factors.D_breve[i, j] != 0:
                s_num = s_num + factors.D_breve[i, j] * _sandwich(ad_ops[i], ad_ops[j])
            if db_dag[i, j] != 0:
                s_num = s_num + db_dag[i, j] * _sandwich(a_ops[i], a_ops[j])

    x_cre = sp.csr_matrix((d, d), dtype=complex)
    for i in range(n):
        if factors.r_under[i] != 0:
            x_cre = x_cre + factors.r_under[i] * ad_ops[i]
        for j in range(n):
            if factors.R_prime[i, j] != 0:
                x_cre = x_cre + factors.R_prime[i, j] * (ad_ops[i] @ ad_ops[j])
    s_cre = _lift_left(x_cre, d) + _lift_right(x_cre.conj().T.tocsr(), d)
    for i in range(n):
        for j in range(n):
            if factors.R_breve[i, j] != 0:
                s_cre = s_cre + 2.0 * factors.R_breve[i, j] * _sandwich(ad_ops[i], a_ops[j])

    return s_ann, s_num, s_cre


def apply_evolution(rho0: FockDensityMatrix, factors: EvolutionFactors,
                    tail_tol: float = DEFAULT_TAIL_TOL,
                    include_scalar: bool = True) -> FockDensityMatrix:
    """Evolved, unnormalized state.

    The result carries the record-independent scalar exp(delta' + sigma) when
    ``include_scalar`` (default); multiplying by exp(h) then gives the full
    linear-evolution state whose trace weights the record probability.
    """
    if rho0.n_modes != factors.n_modes:
        raise DimensionMismatch("state and factors have different mode counts")
    dim = rho0.dim_per_mode
    d2 = rho0.dim ** 2
    s_ann, s_num, s_cre = evolution_superoperators(factors, dim)
    v = rho0.rho.reshape(-1, order="F").astype(complex)
    if factors.n_modes == 1:
        for s in (s_ann, s_num, s_cre):
            v = expm(s.toarray()) @ v
    else:
        for s in (s_ann, s_num, s_cre):
            v = expm_multiply(s.tocsc(), v)
    if include_scalar:
        v = v * np.exp(factors.log_scalar)
    rho = v.reshape((rho0.dim, rho0.dim), order="F")
    out = FockDensityMatrix(n_modes=rho0.n_modes, dim_per_mode=dim, rho=rho,
                            is_normalized=False)
    out.check_hermitian()
    tail = out.tail_mass()
    if tail > tail_tol:
        raise TruncationOverflow(f"tail population {tail:.3e} > {tail_tol:.1e}")
    return out


class EnsemblePropagator:
    """Shared quadratic factors plus cheap per-record linear factors.

    The annihilation-species linear factor commutes with its quadratic factor
    (and likewise for the creation species), so the three quadratic
    exponentials are precomputed once; per record only nilpotent linear lifts
    are exponentiated (their Taylor series terminates on the truncation).
    """

    def __init__(self, factors: EvolutionFactors, dim: int):
        base = EvolutionFactors(
            n_modes=factors.n_modes, t=factors.t,
            R_prime=factors.R_prime, R_breve=factors.R_breve,
            D_under=factors.D_under, D_breve=factors.D_breve,
            L_prime=factors.L_prime, L_breve=factors.L_breve,
            r_under=np.zeros(factors.n_modes, dtype=complex),
            l_under=np.zeros(factors.n_modes, dtype=complex),
            delta_prime=factors.delta_prime, sigma=0.0,
        )
        self.n_modes = factors.n_modes
        self.dim = dim
        s_ann, s_num, s_cre = evolution_superoperators(base, dim)
        u = expm(s_num.toarray()) @ expm(s_ann.toarray())
        self.core = expm(s_cre.toarray()) @ u
        d = dim ** factors.n_modes
        a_ops = _mode_lowering(factors.n_modes, dim)
        self._low_left = [_lift_left(op, d) for op in a_ops]
        self._low_right = [_lift_right(op.conj().T.tocsr(), d) for op in a_ops]
        self._raise_left = [_lift_left(op.conj().T.tocsr(), d) for op in a_ops]
        self._raise_right = [_lift_right(op, d) for op in a_ops]
        self.delta_prime = factors.delta_prime

    def _exp_apply(self, mats, coeffs, v):
        X = None
        for c, m in zip(coeffs, mats):
            if c != 0:
                X = c * m if X is None else X + c * m
        if X is None:
            return v
        out = v.copy()
        term = v
        for k in range(1, 4 * self.dim + 8):
            term = X @ term / k
            out = out + term
            if np.abs(term).max() < 1e-17 * max(1.0, np.abs(out).max()):
                break
        return out

    def propagate_vec(self, v0: np.ndarray, l_under: np.ndarray,
                      r_under: np.ndarray, sigma: complex) -> np.ndarray:
        """exp(S_cre) exp(S_num) exp(S_ann) on vec(rho0) for one record,
        including the scalar exp(delta' + sigma)."""
        coeffs_l = list(l_under) + list(np.conj(l_under))
        v = self._exp_apply(self._low_left + self._low_right, coeffs_l, v0)
        v = self.core @ v
        coeffs_r = list(r_under) + list(np.conj(r_under))
        v = self._exp_apply(self._raise_left + self._raise_right, coeffs_r, v)
        return v * np.exp(self.delta_prime + sigma)


def normalize_and_trace(state: FockDensityMatrix) -> tuple[FockDensityMatrix, float]:
    """(state / trace, trace).

    For a state evolved by :func:`apply_evolution` with its default scalar,
    trace * exp(Re h) * (reference record density) is the physical record
    probability density; with ``include_scalar=False`` the weight carries
    exp(h + delta' + sigma) instead.
    """
    tr = state.trace()
    if not np.isfinite(tr.real) or tr.real <= 0:
        raise ZeroTrace(f"trace {tr} is not positive")
    if abs(tr.imag) > 1e-9 * abs(tr.real):
        raise ZeroTrace(f"trace {tr} has a large imaginary part")
    rho = state.rho / tr.real
    return (FockDensityMatrix(n_modes=state.n_modes,
                              dim_per_mode=state.dim_per_mode, rho=rho,
                              is_normalized=True), tr.real)


def expectation(state: FockDensityMatrix, observable: np.ndarray) -> complex:
    if observable.shape != state.rho.shape:
        raise DimensionMismatch(
            f"observable {observable.shape} vs state {state.rho.shape}")
    return complex(np.trace(observable @ state.rho))


def apply_evolution_power_series(rho0: FockDensityMatrix,
                                 factors: EvolutionFactors,
                                 max_order: int | None = None) -> FockDensityMatrix:
    """Single-mode alternative route: expand the partner-mode couplings of the
    fully normal-ordered evolution as a quadruple power series.

    Independent of the Kronecker-lift route; used as a cross-check.  The sum
    is truncated at total order max_order (default 4 * dim), a purely
    numerical choice.
    """
    if rho0.n_modes != 1:
        raise DimensionMismatch("power-series route is single-mode only")
    dim = rho0.dim_per_mode
    if max_order is None:
        max_order = 4 * dim
    a, ad, _ = fock_operators(dim)
    d_full = np.block([[factors.D_under, factors.D_breve],
                       [factors.D_breve.conj(), factors.D_under.conj()]])
    e_d = expm(d_full)
    d_pr = e_d[0, 0] - 1.0
    d_breve_pr = e_d[0, 1]
    if (1.0 + d_pr).real <= 0 and abs((1.0 + d_pr).imag) < 1e-14:
        raise LogBranchFailure("normally ordered number factor undefined")
    r_p, rb_p = factors.R_prime[0, 0], factors.R_breve[0, 0]
    l_p, lb_p = factors.L_prime[0, 0], factors.L_breve[0, 0]
    r_u, l_u = factors.r_under[0], factors.l_under[0]

    e_cre = expm(r_u * ad + r_p * (ad @ ad))
    e_num = expm(np.log(1.0 + d_pr) * (ad @ a))
    e_ann = expm(l_p * (a @ a) + l_u * a)
    left_core = e_cre @ e_num
    right_core = e_num.conj() @ e_cre.conj().T

    ad_pow = [np.eye(dim, dtype=complex)]
    a_pow = [np.eye(dim, dtype=complex)]
    for _ in range(max_order + 1):
        ad_pow.append(ad_pow[-1] @ ad)
        a_pow.append(a_pow[-1] @ a)

    from math import factorial

    mid = e_ann @ rho0.rho @ e_ann.conj().T
    rho = np.zeros_like(mid)
    for j in range(max_order + 1):
        for k in range(max_order + 1 - j):
            for m in range(max_order + 1 - j - k):
                for n in range(max_order + 1 - j - k - m):
                    if n + k >= dim or j + m >= dim or j + k >= dim or n + m >= dim:
                        continue
                    coeff = ((2 * lb_p) ** j * d_breve_pr.conjugate() ** k
                             * d_breve_pr ** m * (2 * rb_p) ** n
                             / (factorial(j) * factorial(k)
                                * factorial(m) * factorial(n)))
                    if abs(coeff) < 1e-24:
                        continue
                    term = (ad_pow[n + k] @ left_core @ a_pow[j + m] @ mid
                            @ ad_pow[j + k] @ right_core @ a_pow[n + m])
                    rho += coeff * term
    rho = rho * np.exp(factors.log_scalar)
    return FockDensityMatrix(n_modes=1, dim_per_mode=dim, rho=rho,
                             is_normalized=False)


def state_to_json(state: FockDensityMatrix) -> dict:
    return {
        "n_modes": state.n_modes,
        "dim_per_mode": state.dim_per_mode,
        "dim": state.dim,
        "rho_re": state.rho.real.ravel().tolist(),
        "rho_im": state.rho.imag.ravel().tolist(),
    }


def trace_distance(rho1: np.ndarray, rho2: np.ndarray) -> float:
    w = np.linalg.eigvalsh(rho1 - rho2)
    return 0.5 * float(np.abs(w).sum())
