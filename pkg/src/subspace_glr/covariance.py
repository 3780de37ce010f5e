"""Sample covariance blocks and the reduced quadratic forms.

Everything downstream of the raw snapshots runs on the partitioned sample
covariance

    S = (1/N) [Y_s; Y_r] [Y_s; Y_r]^H = [[S_ss, S_sr], [S_sr^H, S_rr]]

and on a handful of scalars and reduced L x L matrices built from it. The
scalars eta_sr, eta_rr, alpha_sr take an arbitrary reference-channel
covariance argument because the exact likelihood maximization evaluates
them at candidate R_rr, while the closed-form detectors fix R_rr = S_rr.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._linalg import (
    check_hermitian,
    cho_factor_pd,
    hermitize,
    herm_inv_sqrt,
    min_eig_herm,
    pd_solve,
)
from .model import SnapshotData


@dataclass
class BlockSampleCov:
    """Partitioned sample covariance of the stacked two-channel snapshots.

    Attributes
    ----------
    s_ss, s_sr, s_rr : ndarray
        The L x L blocks. s_ss and s_rr are Hermitian; s_sr is the
        cross-channel block (surveillance rows, reference columns).
    n : int
        Number of snapshots averaged. With n >= 2L the full matrix is
        positive definite almost surely; below that it is singular and the
        likelihood-based detectors refuse to run.
    """

    s_ss: np.ndarray
    s_sr: np.ndarray
    s_rr: np.ndarray
    n: int

    def __post_init__(self) -> None:
        self.s_ss = np.asarray(self.s_ss, dtype=complex)
        self.s_sr = np.asarray(self.s_sr, dtype=complex)
        self.s_rr = np.asarray(self.s_rr, dtype=complex)
        if self.s_ss.shape != self.s_rr.shape or self.s_sr.shape != self.s_ss.shape:
            raise ValueError("covariance blocks must share one L x L shape")
        check_hermitian(self.s_ss, 1e-10, "s_ss")
        check_hermitian(self.s_rr, 1e-10, "s_rr")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")

    @property
    def num_sensors(self) -> int:
        return self.s_ss.shape[0]

    @property
    def maybe_singular(self) -> bool:
        return self.n < 2 * self.num_sensors

    def full(self) -> np.ndarray:
        """Assemble the 2L x 2L matrix."""
        top = np.hstack([self.s_ss, self.s_sr])
        bot = np.hstack([self.s_sr.conj().T, self.s_rr])
        return np.vstack([top, bot])

    def schur_rr(self) -> np.ndarray:
        """S_rr - S_sr^H S_ss^{-1} S_sr, the reference block conditioned on
        the surveillance block. Positive definite whenever the full matrix is."""
        t = pd_solve(self.s_ss, self.s_sr, name="s_ss")
        return hermitize(self.s_rr - self.s_sr.conj().T @ t)


def block_sample_cov(y_s: np.ndarray, y_r: np.ndarray) -> BlockSampleCov:
    """Partitioned sample covariance from raw L x N snapshot matrices."""
    y_s = np.asarray(y_s, dtype=complex)
    y_r = np.asarray(y_r, dtype=complex)
    if y_s.shape != y_r.shape or y_s.ndim != 2:
        raise ValueError("y_s and y_r must be L x N matrices of equal shape")
    n = y_s.shape[1]
    s_ss = hermitize(y_s @ y_s.conj().T / n)
    s_rr = hermitize(y_r @ y_r.conj().T / n)
    s_sr = y_s @ y_r.conj().T / n
    return BlockSampleCov(s_ss, s_sr, s_rr, n)


def sample_cov(data: SnapshotData) -> BlockSampleCov:
    """Partitioned sample covariance of a snapshot record."""
    return block_sample_cov(data.y_s, data.y_r)


def unitary_completion(u: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal completion of a unit vector.

    Parameters
    ----------
    u : ndarray
        Unit-norm vector of length L.

    Returns
    -------
    ndarray
        L x (L-1) matrix V with V^H V = I and V^H u = 0, so [u, V] is
        unitary. Built from the Householder reflector that maps u onto the
        first coordinate axis; the reflector uses the sign choice that
        avoids cancellation, so the completion is stable and repeatable.
        L = 1 returns an empty L x 0 matrix.
    """
    u = np.asarray(u, dtype=complex).reshape(-1)
    if abs(np.linalg.norm(u) - 1.0) > 1e-8:
        raise ValueError("completion requires a unit-norm vector")
    dim = u.size
    if dim == 1:
        return np.zeros((1, 0), dtype=complex)
    phase = u[0] / abs(u[0]) if abs(u[0]) > 0 else 1.0
    v = u.copy()
    v[0] += phase
    p = np.eye(dim, dtype=complex) - 2.0 * np.outer(v, v.conj()) / np.vdot(v, v).real
    # First column of p is proportional to u; the rest span its orthocomplement.
    return p[:, 1:]


def eta_sr(
    s: BlockSampleCov, u_s: np.ndarray, u_r: np.ndarray, r_rr: np.ndarray | None = None
) -> complex:
    """u_s^H S_ss^{-1} S_sr R_rr^{-1} u_r, the whitened cross-channel response.

    r_rr = None evaluates at R_rr = S_rr.
    """
    r_rr = s.s_rr if r_rr is None else r_rr
    t_s = pd_solve(s.s_ss, u_s, name="s_ss")
    t_r = pd_solve(r_rr, u_r, name="r_rr")
    return complex(t_s.conj() @ (s.s_sr @ t_r))


def eta_rr(s: BlockSampleCov, u_r: np.ndarray, r_rr: np.ndarray | None = None) -> float:
    """u_r^H R_rr^{-1} S_rr R_rr^{-1} u_r. Real and positive; at R_rr = S_rr it
    collapses to the Capon denominator u_r^H S_rr^{-1} u_r."""
    r_rr = s.s_rr if r_rr is None else r_rr
    t_r = pd_solve(r_rr, u_r, name="r_rr")
    val = complex(t_r.conj() @ (s.s_rr @ t_r))
    return float(val.real)


def alpha_sr(
    s: BlockSampleCov, u_s: np.ndarray, u_r: np.ndarray, r_rr: np.ndarray | None = None
) -> float:
    """u_r^H R_rr^{-1} S_sr^H S_ss^{-1} S_sr R_rr^{-1} u_r. Real, nonnegative,
    and strictly below eta_rr whenever the full sample covariance is positive
    definite (their difference is a Schur-complement quadratic form)."""
    r_rr = s.s_rr if r_rr is None else r_rr
    t_r = pd_solve(r_rr, u_r, name="r_rr")
    w = s.s_sr @ t_r
    val = complex(w.conj() @ pd_solve(s.s_ss, w, name="s_ss"))
    return float(val.real)


@dataclass
class ReducedForms:
    """The L x L quadratic-form matrices driving the exact likelihood ratio.

    In the orthonormal basis U_r = [u_r, V_r] of the reference channel:

        xi      = U_r^H S_rr U_r
        gamma_m = U_r^H (S_rr - S_sr^H S_ss^{-1} S_sr) U_r
        psi     = beta_s * gamma_m + g g^H,
                  g = U_r^H S_sr^H S_ss^{-1} u_s,  beta_s = u_s^H S_ss^{-1} u_s

    All three are Hermitian positive definite when n >= 2L. The likelihood
    surface depends only on these (plus the rank-one selector for the first
    coordinate), so the optimizer never touches the raw blocks.
    """

    u_r_full: np.ndarray
    xi: np.ndarray
    psi: np.ndarray
    gamma_m: np.ndarray

    def __post_init__(self) -> None:
        for name, m in (("xi", self.xi), ("psi", self.psi), ("gamma_m", self.gamma_m)):
            check_hermitian(m, 1e-10, name)
            if min_eig_herm(m) <= 0:
                raise ValueError(f"reduced form {name} is not positive definite")

    @property
    def num_sensors(self) -> int:
        return self.u_r_full.shape[0]


def build_reduced_forms(
    s: BlockSampleCov,
    u_s: np.ndarray,
    u_r: np.ndarray,
    v_r: np.ndarray | None = None,
) -> ReducedForms:
    """Assemble the reduced forms for one sample covariance.

    Parameters
    ----------
    s : BlockSampleCov
        Sample covariance with n >= 2L (rejected otherwise; the forms would
        be singular).
    u_s, u_r : ndarray
        Unit-norm steering vectors.
    v_r : ndarray, optional
        Orthonormal completion of u_r to use instead of the deterministic
        one. The detectors are invariant to this choice; the hook exists so
        that invariance can be exercised directly.
    """
    if s.maybe_singular:
        raise ValueError(f"need n >= 2L snapshots for invertible forms, got n={s.n}, L={s.num_sensors}")
    u_s = np.asarray(u_s, dtype=complex).reshape(-1)
    u_r = np.asarray(u_r, dtype=complex).reshape(-1)
    if v_r is None:
        v_r = unitary_completion(u_r)
    u_full = np.column_stack([u_r, v_r])
    dev = np.max(np.abs(u_full.conj().T @ u_full - np.eye(s.num_sensors)))
    if dev > 1e-10:
        raise ValueError(f"[u_r, v_r] is not unitary (deviation {dev:.3e})")
    xi = hermitize(u_full.conj().T @ s.s_rr @ u_full)
    schur = s.schur_rr()
    gamma_m = hermitize(u_full.conj().T @ schur @ u_full)
    t_s = pd_solve(s.s_ss, u_s, name="s_ss")
    beta_s = float((np.conj(u_s) @ t_s).real)
    g = u_full.conj().T @ (s.s_sr.conj().T @ t_s)
    psi = hermitize(beta_s * gamma_m + np.outer(g, g.conj()))
    return ReducedForms(u_full, xi, psi, gamma_m)


@dataclass
class BeamformerPair:
    """Minimum-power distortionless responses toward the two steering vectors.

    b_i = S_ii^{-1} u_i / (u_i^H S_ii^{-1} u_i) satisfies b_i^H u_i = 1.
    w_i = S_ii^{-1/2} u_i / sqrt(u_i^H S_ii^{-1} u_i) is the whitened version
    with unit Euclidean norm (Hermitian positive definite square root).
    """

    b_s: np.ndarray
    b_r: np.ndarray
    w_s: np.ndarray
    w_r: np.ndarray


def capon_pair(s: BlockSampleCov, u_s: np.ndarray, u_r: np.ndarray) -> BeamformerPair:
    """Build the distortionless beamformer pair from the diagonal blocks."""
    out = []
    for name, block, u in (("s_ss", s.s_ss, u_s), ("s_rr", s.s_rr, u_r)):
        u = np.asarray(u, dtype=complex).reshape(-1)
        t = pd_solve(block, u, name=name)
        beta = float((np.conj(u) @ t).real)
        if beta <= 0:
            raise ValueError(f"nonpositive Capon denominator for {name}")
        root = herm_inv_sqrt(block, name=name)
        out.append((t / beta, (root @ u) / np.sqrt(beta)))
    (b_s, w_s), (b_r, w_r) = out
    return BeamformerPair(b_s=b_s, b_r=b_r, w_s=w_s, w_r=w_r)


def coherence_matrix(s: BlockSampleCov) -> np.ndarray:
    """Whitened cross-channel block C = S_ss^{-1/2} S_sr S_rr^{-1/2}.

    Uses Hermitian positive definite square roots. Every singular value of C
    lies in [0, 1] when the full sample covariance is positive semidefinite.
    """
    left = herm_inv_sqrt(s.s_ss, name="s_ss")
    right = herm_inv_sqrt(s.s_rr, name="s_rr")
    return left @ s.s_sr @ right


def cross_capon_beta(s_block: np.ndarray, u: np.ndarray, name: str = "block") -> float:
    """u^H S^{-1} u for one Hermitian positive definite block."""
    u = np.asarray(u, dtype=complex).reshape(-1)
    t = pd_solve(s_block, u, name=name)
    return float((np.conj(u) @ t).real)
