"""Exact N-boson two-mode dynamics in the Dicke basis.

Amplitude index ``k = 0..N`` stores ``m = k - N/2``; ``m = +N/2`` is every
atom in the left well (imbalance z = 2m/N = 1). Internal helpers with a
leading underscore accept a batch of states as an ``(N+1, S)`` array with
one column per shot, and a per-column angle array.
"""
import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln, jv, xlogy

from . import rng

# rotate_x switches from dense diagonalization to a Chebyshev expansion above this N.
DENSE_MAX_N = 4096


@dataclass(frozen=True, eq=False)
class DickeState:
    n_atoms: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        a = np.array(self.amplitudes, dtype=complex)
        if a.shape != (self.n_atoms + 1,):
            raise ValueError(f"expected {self.n_atoms + 1} amplitudes, got shape {a.shape}")
        norm = np.vdot(a, a).real
        if abs(norm - 1) > 1e-12:
            raise ValueError(f"state not normalized: |psi|^2 = {norm!r}")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @property
    def m(self):
        return m_values(self.n_atoms)

    @property
    def probabilities(self):
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class SpinMoments:
    jx: float
    jy: float
    jz: float
    var_jz: float
    contrast: float


def m_values(n):
    return np.arange(n + 1) - n / 2


def _wrap(n, arr):
    return DickeState(n, arr)


def pole_state(n, left=True):
    a = np.zeros(n + 1, dtype=complex)
    a[-1 if left else 0] = 1.0
    return DickeState(n, a)


def _coherent_amplitudes(n, theta, phi):
    """Columns of spin-coherent amplitudes for arrays of (theta, phi)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    k = np.arange(n + 1)[:, None]
    c = np.cos(theta / 2)[None, :]
    s = np.sin(theta / 2)[None, :]
    log_binom = 0.5 * (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))
    mag = np.exp(log_binom + xlogy(k, np.abs(c)) + xlogy(n - k, np.abs(s)))
    sign = np.where(c < 0, (-1.0) ** k, 1.0) * np.where(s < 0, (-1.0) ** (n - k), 1.0)
    m = k - n / 2
    return mag * sign * np.exp(-1j * m * phi[None, :])


def coherent_state(n_atoms, theta, phi):
    """Spin coherent state with Bloch vector (sin t cos p, sin t sin p, cos t)."""
    return _wrap(n_atoms, _renorm(_coherent_amplitudes(n_atoms, theta, phi)[:, 0]))


def _jx_offdiag(n):
    m = m_values(n)[:-1]
    j = n / 2
    return 0.5 * np.sqrt(j * (j + 1) - m * (m + 1))


@lru_cache(maxsize=8)
def _jx_eigh(n):
    evals, evecs = eigh_tridiagonal(np.zeros(n + 1), _jx_offdiag(n))
    evecs.setflags(write=False)
    return evals, evecs


def _as_batch(psi, angles):
    psi = np.asarray(psi, dtype=complex)
    squeeze = psi.ndim == 1
    if squeeze:
        psi = psi[:, None]
    angles = np.broadcast_to(np.asarray(angles, dtype=float), (psi.shape[1],))
    return psi, angles, squeeze


def _real_matmul(a, z):
    # Strided .real/.imag views fall off the BLAS path; copy them first.
    return a @ np.ascontiguousarray(z.real) + 1j * (a @ np.ascontiguousarray(z.imag))


def _rotate_x_dense(psi, angles):
    psi, angles, squeeze = _as_batch(psi, angles)
    evals, v = _jx_eigh(psi.shape[0] - 1)
    coeff = _real_matmul(v.T, psi)
    coeff *= np.exp(-1j * np.outer(evals, angles))
    out = _real_matmul(v, coeff)
    return out[:, 0] if squeeze else out


def _rotate_x_chebyshev(psi, angles, tol=1e-16):
    """exp(-i a Jx) psi via the Chebyshev-Bessel expansion on spectrum [-J, J]."""
    psi, angles, squeeze = _as_batch(psi, angles)
    n = psi.shape[0] - 1
    j = n / 2
    off = _jx_offdiag(n) / j

    def h(v):
        out = np.zeros_like(v)
        out[:-1] += off[:, None] * v[1:]
        out[1:] += off[:, None] * v[:-1]
        return out

    a = angles * j
    amax = float(np.abs(a).max()) if a.size else 0.0
    n_terms = int(amax + 10 * max(amax, 1.0) ** (1 / 3) + 30)
    k = np.arange(n_terms)
    sgn = np.sign(a)
    bess = jv(k[:, None], np.abs(a)[None, :]) * np.where(sgn < 0, (-1.0) ** k[:, None], 1.0)
    coef = 2 * ((-1j) ** k)[:, None] * bess
    coef[0] *= 0.5
    t_prev, t_cur = psi, h(psi)
    out = coef[0] * t_prev + coef[1] * t_cur
    for kk in range(2, n_terms):
        t_prev, t_cur = t_cur, 2 * h(t_cur) - t_prev
        c = coef[kk]
        if np.all(np.abs(c) < tol):
            break
        out += c * t_cur
    return out[:, 0] if squeeze else out


def _rotate_x(psi, angles, method="auto"):
    n = np.shape(psi)[0] - 1
    if method == "auto" and np.all(np.asarray(angles) == np.pi):
        # exp(-i pi Jx)|m> = (-i)^N |-m>: the echo pulse is a reversal.
        return (-1j) ** n * np.asarray(psi)[::-1]
    if method == "auto":
        method = "dense" if n <= DENSE_MAX_N else "chebyshev"
    if method == "dense":
        return _rotate_x_dense(psi, angles)
    if method == "chebyshev":
        return _rotate_x_chebyshev(psi, angles)
    raise ValueError(f"unknown rotation method {method!r}")


def _rotate_z(psi, angles):
    psi, angles, squeeze = _as_batch(psi, angles)
    m = m_values(psi.shape[0] - 1)
    out = psi * np.exp(-1j * np.outer(m, angles))
    return out[:, 0] if squeeze else out


def _oat(psi, chi_t):
    psi, chi_t, squeeze = _as_batch(psi, chi_t)
    m = m_values(psi.shape[0] - 1)
    out = psi * np.exp(-1j * np.outer(m**2, chi_t))
    return out[:, 0] if squeeze else out


def _renorm(arr):
    return arr / np.linalg.norm(arr)


def rotate_x(state, angle, method="auto"):
    """Apply exp(-i angle Jx): a tunneling beam splitter / Rabi rotation."""
    return _wrap(state.n_atoms, _renorm(_rotate_x(state.amplitudes, angle, method)))


def rotate_z(state, angle):
    """Apply exp(-i angle Jz): relative phase accumulation."""
    return _wrap(state.n_atoms, _rotate_z(state.amplitudes, angle))


def oat_evolve(state, chi, t):
    """Apply exp(-i chi t Jz^2): one-axis twisting from on-site interactions."""
    return _wrap(state.n_atoms, _oat(state.amplitudes, chi * t))


def _sample_from_probs(probs, uniforms):
    """Inverse-CDF draw of index k per column; probs is (N+1, S), uniforms (S,)."""
    cdf = np.cumsum(probs, axis=0)
    target = uniforms * cdf[-1]
    idx = (cdf < target[None, :]).sum(axis=0)
    return np.minimum(idx, probs.shape[0] - 1)


def index_to_z(idx, n):
    return (2 * np.asarray(idx) - n) / n


def sample_z(state, n_shots, rng_seed):
    """i.i.d. imbalance measurements z = 2m/N drawn from |amplitude|^2."""
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    u = rng.stream(rng_seed, "sample_z").random(n_shots)
    cdf = np.cumsum(state.probabilities)
    idx = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="left"), state.n_atoms)
    return index_to_z(idx, state.n_atoms)


def _moments(psi):
    """Moments for a batch of states; returns dict of (S,) arrays."""
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim == 1:
        psi = psi[:, None]
    n = psi.shape[0] - 1
    m = m_values(n)[:, None]
    p = np.abs(psi) ** 2
    jz = (m * p).sum(axis=0)
    var = (m**2 * p).sum(axis=0) - jz**2
    jplus = (np.conj(psi[1:]) * psi[:-1] * (2 * _jx_offdiag(n))[:, None]).sum(axis=0)
    return dict(jx=jplus.real, jy=jplus.imag, jz=jz, var_jz=np.maximum(var, 0.0),
                contrast=np.abs(jplus) / (n / 2))


def moments(state):
    mo = _moments(state.amplitudes)
    return SpinMoments(**{k: float(v[0]) for k, v in mo.items()})


def mean_z(state):
    return 2 * moments(state).jz / state.n_atoms


def husimi_grid(state, n_theta, n_phi, theta_range=(0.0, np.pi), phi_range=None):
    """Husimi Q(theta, phi) = (N+1)/(4 pi) |<theta,phi|psi>|^2 on a uniform grid.

    By default ``theta`` spans [0, pi] inclusive and ``phi`` spans [0, 2 pi)
    without the endpoint. Passing ``phi_range`` (inclusive) and/or a narrower
    ``theta_range`` samples a patch, which large-N states need to be resolved.
    Returns ``(theta, phi, q)`` with ``q`` of shape (n_theta, n_phi).
    """
    n = state.n_atoms
    theta = np.linspace(theta_range[0], theta_range[1], n_theta)
    if phi_range is None:
        phi = 2 * np.pi * np.arange(n_phi) / n_phi
    else:
        phi = np.linspace(phi_range[0], phi_range[1], n_phi)
    # <theta,phi|psi> = sum_m b_m(theta) e^{+i m phi} psi_m with real b_m.
    b = _coherent_amplitudes(n, theta, np.zeros_like(theta)).real  # (N+1, n_theta)
    phase = np.exp(1j * np.outer(m_values(n), phi))  # (N+1, n_phi)
    overlap = (b * state.amplitudes[:, None]).T @ phase
    q = (n + 1) / (4 * np.pi) * np.abs(overlap) ** 2
    return theta, phi, q


def husimi_integral(theta, phi, q):
    """Integral of Q over the grid: Simpson in theta; periodic rule in phi on a
    full circle, Simpson on a patch."""
    periodic = len(phi) > 1 and np.isclose((phi[1] - phi[0]) * len(phi), 2 * np.pi)
    ring = q.mean(axis=1) * 2 * np.pi if periodic else simpson(q, x=phi, axis=1)
    return float(simpson(ring * np.sin(theta), x=theta))


def husimi_to_csv(path, theta, phi, q):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "phi", "q"])
        for i, t in enumerate(theta):
            for j, p in enumerate(phi):
                w.writerow([f"{t:.10g}", f"{p:.10g}", f"{q[i, j]:.10g}"])


def state_to_csv(path, state):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "re", "im"])
        for m, a in zip(state.m, state.amplitudes):
            w.writerow([f"{m:g}", f"{a.real:.17g}", f"{a.imag:.17g}"])
