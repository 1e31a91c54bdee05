"""Backward (effect-operator) and forward (state) Kalman filters.

The Gaussian effect operator evolves backwards in time under the dual of the
conditioned dynamics.  Starting from a flat (infinite-covariance) effect, the
information pair ``(z, Lambda)`` with ``z = Lambda x`` integrates from zero and
stays finite, avoiding the infinite kicks the mean equation suffers at the
flat starting point.

All four coefficient matrices derive from the system spec:

    A = Sigma (G + Im C^dag C),   B = Re M^dag C,
    S = Im(M^dag C) Sigma^T,      E = Sigma Re(C^dag C) Sigma^T.

Forward conditioned moments use the same matrices with the measurement gain
``2 V B^T - S^T`` (the sign of S flips under time reversal).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import CrossCheckFailure, FilterDivergence, RiccatiBlowup
from .system import SystemSpec
from .trajectory import MeasurementRecord

INFO_FLOOR = 1e-12


@dataclass(frozen=True)
class KalmanMatrices:
    n_modes: int
    A: np.ndarray
    B: np.ndarray
    S: np.ndarray
    E: np.ndarray


@dataclass(frozen=True)
class EffectMoments:
    """Gaussian effect summary at the earliest time of the backward sweep.

    Directions with information below the floor carry infinite variance; they
    are masked out of x and V (reported as inf) but kept in (z, Lambda).
    """

    n_modes: int
    z: np.ndarray
    Lambda: np.ndarray
    x: np.ndarray
    V: np.ndarray
    informative: np.ndarray  # eigenvector basis mask

    def finite_projector(self) -> np.ndarray:
        """Orthogonal projector onto the informative subspace."""
        w, U = np.linalg.eigh((self.Lambda + self.Lambda.T) / 2)
        keep = w > INFO_FLOOR
        return U[:, keep] @ U[:, keep].T


def kalman_matrices(spec: SystemSpec) -> KalmanMatrices:
    sigma = spec.symplectic
    cdc = spec.C.conj().T @ spec.C
    mdc = spec.M.conj().T @ spec.C
    return KalmanMatrices(
        n_modes=spec.n_modes,
        A=sigma @ (spec.G + cdc.imag),
        B=mdc.real,
        S=mdc.imag @ sigma.T,
        E=sigma @ cdc.real @ sigma.T,
    )


def _riccati_flow_matrix(mats: KalmanMatrices) -> np.ndarray:
    """Linearization of the backward information Riccati.

    With A~ = A + 2 S^T B and Cm = E - S^T S, Lambda(s) = Y(s) X(s)^{-1} where
    d/ds [X; Y] = [[-A~, Cm], [4 B^T B, A~^T]] [X; Y], X(0) = 1, Y(0) = 0.
    """
    a_t = mats.A + 2.0 * mats.S.T @ mats.B
    cm = mats.E - mats.S.T @ mats.S
    q = 4.0 * mats.B.T @ mats.B
    n2 = a_t.shape[0]
    M = np.zeros((2 * n2, 2 * n2))
    M[:n2, :n2] = -a_t
    M[:n2, n2:] = cm
    M[n2:, :n2] = q
    M[n2:, n2:] = a_t.T
    return M


def _moments_from_information(n_modes: int, z: np.ndarray, lam: np.ndarray):
    """(x, V) views of the information pair.

    V is the limit of (Lambda + eps)^{-1}: the pseudo-inverse on the
    informative subspace, with inf exactly where the flat-direction projector
    has support (so an uncorrelated flat direction leaves its cross entries
    zero, not infinite).  x is inf along flat directions.
    """
    lam = (lam + lam.T) / 2
    w, U = np.linalg.eigh(lam)
    keep = w > INFO_FLOOR
    n2 = 2 * n_modes
    x = np.full(n2, np.inf)
    V = np.full((n2, n2), np.inf)
    if keep.any():
        Uk = U[:, keep]
        lam_inv = Uk @ np.diag(1.0 / w[keep]) @ Uk.T
        x = lam_inv @ z
        V = lam_inv.copy()
        if not keep.all():
            Un = U[:, ~keep]
            flat_proj = Un @ Un.T
            V[np.abs(flat_proj) > 1e-10] = np.inf
            x[np.abs(np.diag(flat_proj)) > 1e-10] = np.inf
    return x, V, keep


def integrate_backward(mats: KalmanMatrices, record: MeasurementRecord,
                       t_m: float | None = None,
                       method: str = "exact") -> EffectMoments:
    """Backward sweep of (z, Lambda) from a flat effect at t_m to tau = 0.

    method="exact" propagates Lambda through the linear Riccati flow and
    reduces z to an explicit quadrature, so the only discretization is the
    Ito sum over the record (kernels evaluated at the slice times j dt, the
    same convention as the forward integrals).  method="euler" is the plain
    explicit-Euler information filter, kept for convergence checks.
    """
    if t_m is None:
        t_m = record.t_final
    steps = record.steps
    dt = record.dt
    n2 = 2 * mats.n_modes
    if method == "euler":
        lam = np.zeros((n2, n2))
        z = np.zeros(n2)
        a_t = mats.A + 2.0 * mats.S.T @ mats.B
        cm = mats.E - mats.S.T @ mats.S
        q4 = 4.0 * mats.B.T @ mats.B
        for j in range(steps - 1, -1, -1):
            y = record.y[j]
            dz = (a_t - cm @ lam).T @ z * dt + (2.0 * mats.B.T + lam @ mats.S.T) @ y * dt
            dlam = (lam @ a_t + a_t.T @ lam - lam @ cm @ lam + q4) * dt
            z = z + dz
            lam = lam + dlam
            if not (np.all(np.isfinite(z)) and np.all(np.isfinite(lam))):
                raise RiccatiBlowup(f"backward filter diverged at slice {j}")
        x, V, keep = _moments_from_information(mats.n_modes, z, lam)
        return EffectMoments(n_modes=mats.n_modes, z=z, Lambda=lam, x=x, V=V,
                             informative=keep)

    M = _riccati_flow_matrix(mats)
    # slice j of the record sits at backward time s_j = t_m - j dt
    step = expm(M * dt)
    xy = np.empty((steps + 1, 2 * n2, n2))
    xy[0] = np.vstack([np.eye(n2), np.zeros((n2, n2))])
    for k in range(steps):
        xy[k + 1] = step @ xy[k]
    w = np.zeros(n2)
    for j in range(1, steps + 1):
        k = steps - j                      # backward index of slice time s_j
        X = xy[k][:n2]
        Y = xy[k][n2:]
        lam_s = Y @ np.linalg.inv(X)
        w += X.T @ ((2.0 * mats.B.T + lam_s @ mats.S.T) @ record.y[j - 1]) * dt
    Xf = xy[steps][:n2]
    Yf = xy[steps][n2:]
    lam = Yf @ np.linalg.inv(Xf)
    lam = (lam + lam.T) / 2
    z = np.linalg.solve(Xf.T, w)
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(lam))):
        raise RiccatiBlowup("backward flow produced non-finite moments")
    x, V, keep = _moments_from_information(mats.n_modes, z, lam)
    return EffectMoments(n_modes=mats.n_modes, z=z, Lambda=lam, x=x, V=V,
                         informative=keep)


def backward_moment_trajectory(mats: KalmanMatrices, record: MeasurementRecord,
                               n_samples: int = 50):
    """(taus, xs, Vs) of the effect moments over the backward sweep.

    tau is the earliest time the effect has been integrated back to; entry 0
    is tau = t_m (flat effect), the last entry tau = 0.  The covariance part
    is record-independent; the means reuse the partial record quadratures.
    """
    steps = record.steps
    dt = record.dt
    t_m = record.t_final
    n2 = 2 * mats.n_modes
    M = _riccati_flow_matrix(mats)
    step = expm(M * dt)
    xy = np.empty((steps + 1, 2 * n2, n2))
    xy[0] = np.vstack([np.eye(n2), np.zeros((n2, n2))])
    for k in range(steps):
        xy[k + 1] = step @ xy[k]
    # w(sigma) accumulates later slices first: slice j enters once the sweep
    # has passed backward time t_m - j dt
    sample_every = max(1, steps // max(1, n_samples - 1))
    taus, xs, Vs = [], [], []

    def emit(k_back, w):
        X = xy[k_back][:n2]
        Y = xy[k_back][n2:]
        lam = Y @ np.linalg.inv(X)
        z = np.linalg.solve(X.T, w)
        x, V, _ = _moments_from_information(mats.n_modes, z, (lam + lam.T) / 2)
        taus.append(t_m - k_back * dt)
        xs.append(x)
        Vs.append(V)

    w = np.zeros(n2)
    emit(0, w)
    for k_back in range(1, steps + 1):
        j = steps - k_back + 1             # record slice entering the sweep
        X = xy[k_back - 1][:n2]
        Y = xy[k_back - 1][n2:]
        lam_s = Y @ np.linalg.inv(X)
        w = w + X.T @ ((2.0 * mats.B.T + lam_s @ mats.S.T)
                       @ record.y[j - 1]) * dt
        if k_back % sample_every == 0 or k_back == steps:
            emit(k_back, w)
    return np.array(taus), np.array(xs), np.array(Vs)


def backward_covariance(mats: KalmanMatrices, sigma: float) -> np.ndarray:
    """Effect covariance after a backward span sigma, flat start (exact flow).

    Entries along uninformative directions are infinite.
    """
    n2 = 2 * mats.n_modes
    M = _riccati_flow_matrix(mats)
    prop = expm(M * sigma)
    X = prop[:n2, :n2]
    Y = prop[n2:, :n2]
    lam = Y @ np.linalg.inv(X)
    _, V, _ = _moments_from_information(mats.n_modes, np.zeros(n2), lam)
    return V


def forward_filter(mats: KalmanMatrices, mean: np.ndarray, cov: np.ndarray,
                   record: MeasurementRecord):
    """Conditioned Gaussian moments along a record (explicit Euler).

    Returns (means, covs) with shapes (steps+1, 2N) and (steps+1, 2N, 2N);
    entry 0 is the initial condition.  The covariance flow is deterministic.
    """
    dt = record.dt
    xbar = np.asarray(mean, dtype=float).copy()
    V = np.asarray(cov, dtype=float).copy()
    means = [xbar.copy()]
    covs = [V.copy()]
    for j in range(record.steps):
        gain = 2.0 * V @ mats.B.T - mats.S.T
        innovation = record.y[j] * dt - 2.0 * (mats.B @ xbar) * dt
        xbar = xbar + mats.A @ xbar * dt + gain @ innovation
        V = V + dt * (mats.A @ V + V @ mats.A.T + mats.E - gain @ gain.T)
        V = (V + V.T) / 2
        if not np.all(np.isfinite(V)):
            raise RiccatiBlowup(f"forward filter diverged at slice {j}")
        if np.linalg.eigvalsh(V).min() < -1e-8:
            raise FilterDivergence("conditioned covariance lost positivity")
        means.append(xbar.copy())
        covs.append(V.copy())
    return np.array(means), np.array(covs)


def crosscheck_against_povm(effect, moments: EffectMoments,
                            tol: float = 1e-8) -> dict:
    """Compare the effect-operator route with the backward-filter route.

    The Gaussian effect's coherent-amplitude mean maps to quadrature means via
    x = sqrt(2) (Re alpha, Im alpha); its alpha-space covariance is the
    Q-function covariance, half a vacuum unit above the Wigner covariance the
    backward filter reports.  Raises CrossCheckFailure beyond ``tol``.
    """
    n = moments.n_modes
    x_eff = np.empty(2 * n)
    x_eff[0::2] = np.sqrt(2.0) * np.real(effect.alpha_mean)
    x_eff[1::2] = np.sqrt(2.0) * np.imag(effect.alpha_mean)
    v_eff = effect.quadrature_covariance()          # Q-function covariance
    proj = moments.finite_projector()
    x_filter = np.where(np.isfinite(moments.x), moments.x, 0.0)
    mean_residual = float(np.abs(proj @ (x_eff - x_filter)).max(initial=0.0))
    v_filter = np.where(np.isfinite(moments.V), moments.V, 0.0)
    expected = proj @ (v_filter + 0.5 * np.eye(2 * n)) @ proj
    got = proj @ v_eff @ proj
    var_residual = float(np.abs(got - expected).max(initial=0.0))
    report = {
        "mean_residual": mean_residual,
        "variance_residual": var_residual,
        "informative_dims": int(moments.informative.sum()),
    }
    if mean_residual > tol or var_residual > tol:
        raise CrossCheckFailure(f"effect/filter mismatch: {report}")
    return report


def moments_to_csv(path: str, taus: np.ndarray, xs: np.ndarray, Vs: np.ndarray,
                   header_comment: str = "") -> None:
    """Moment trajectory dump: tau, x_1.., V_11, V_12, ...; inf spelled 'inf'."""
    n2 = xs.shape[1]
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        cols = ["tau"] + [f"x_{i + 1}" for i in range(n2)] + \
               [f"V_{i + 1}{j + 1}" for i in range(n2) for j in range(n2)]
        fh.write(",".join(cols) + "\n")
        for k in range(len(taus)):
            vals = [taus[k]] + list(xs[k]) + list(Vs[k].ravel())
            fh.write(",".join("inf" if not np.isfinite(v) else f"{v:.17g}"
                              for v in vals) + "\n")
