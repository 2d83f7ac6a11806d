"""Mach-Zehnder gradiometer protocols built from the two-mode primitives.

Sign conventions: the first splitter is ``rotate_x(-pi/2)`` followed by a fixed
quarter-turn reference phase ``rotate_z(pi/2)`` (Bloch vector along -x), the
recombiner is ``rotate_x(-pi/2)``. A phase ``phi`` accumulated in between gives
``<z> = sin(phi)``, the fringe model ``z = V sin(phi_eps + phi_j) + C``.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from . import rng
from . import twomode as tm
from .lattice import CHI_CONTACT_PER_A0, CHI_DD
from .units import HBAR, MASS_K39

COMMON_PHASE_LAWS = ("uniform", "fixed", "normal")
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class FeshbachModel:
    """Linearized twisting rate near the interaction zero crossing.

    ``slope_a`` (a0/G) is not well constrained; 0.56 is only a default.
    """

    b_min: float = 350.45  # G
    slope_a: float = 0.56  # a0 / G
    chi_dd: float = CHI_DD  # s^-1, attractive
    chi_per_a0: float = CHI_CONTACT_PER_A0  # s^-1 per a0

    def __post_init__(self):
        if not self.slope_a > 0:
            raise ValueError("slope_a must be positive")

    @property
    def a_at_b_min(self):
        """Scattering length (a0) at which contact and dipolar terms cancel."""
        return -self.chi_dd / self.chi_per_a0

    def a_over_a0(self, b):
        return self.a_at_b_min + self.slope_a * (np.asarray(b) - self.b_min)


def chi_of_b(model, b):
    """Total twisting rate chi(B) = chi_el(B) + chi_dd in s^-1."""
    return model.chi_per_a0 * model.a_over_a0(b) + model.chi_dd


@dataclass(frozen=True)
class NoiseConfig:
    sigma_bs2: float = 0.0
    sigma_tech: float = 0.0  # rad, std of the differential technical phase
    common_phase_law: str = "uniform"
    common_phase_offset: float = 0.0  # rad
    common_phase_width: float = 0.0  # rad, std for the "normal" law
    n_atoms_jitter: float = 0.0  # relative std of a per-shot atom-number draw
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.sigma_bs2 < 0.5:
            raise ValueError("sigma_bs2 must lie in [0, 0.5)")
        if self.sigma_tech < 0:
            raise ValueError("sigma_tech must be >= 0")
        if self.common_phase_law not in COMMON_PHASE_LAWS:
            raise ValueError(f"common_phase_law must be one of {COMMON_PHASE_LAWS}")
        if self.common_phase_width < 0 or self.n_atoms_jitter < 0:
            raise ValueError("widths must be >= 0")

    @property
    def bs_angle_std(self):
        """Std of the splitter-angle error giving Var(sin eta) = sigma_bs2."""
        return math.sqrt(-0.5 * math.log1p(-2 * self.sigma_bs2))


@dataclass(frozen=True)
class SequenceConfig:
    n_atoms: int
    t_interrogation: float  # s
    epsilon: float = 0.0  # rad/s, common energy mismatch / hbar
    delta: float = 0.0  # rad/s, differential mismatch / hbar
    chi: float = 0.0  # rad/s
    echo: bool = False
    n_echo_pulses: int = 0

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        if self.t_interrogation < 0:
            raise ValueError("t_interrogation must be >= 0")
        if self.echo and self.n_echo_pulses == 0:
            object.__setattr__(self, "n_echo_pulses", 1)
        if not self.echo and self.n_echo_pulses != 0:
            raise ValueError("n_echo_pulses must be 0 when echo is off")
        if self.n_echo_pulses < 0:
            raise ValueError("n_echo_pulses must be >= 0")

    def segments(self):
        """Free-evolution durations between pi pulses (pulses at T(k - 1/2)/n)."""
        n = self.n_echo_pulses
        t = self.t_interrogation
        if n == 0:
            return [t]
        return [t / (2 * n)] + [t / n] * (n - 1) + [t / (2 * n)]


@dataclass(frozen=True)
class ShotPair:
    z1: float
    z2: float
    shot_id: int


@dataclass
class _ShotDraws:
    eta: np.ndarray  # (2, S) splitter angle errors
    tech: np.ndarray  # (2, S) technical phases
    common: np.ndarray  # (n_seg, S) common-mode phase per segment
    u: np.ndarray  # (2, S) sampling uniforms
    n_atoms: np.ndarray  # (2, S)


def _draw(seq, noise, shot_ids):
    n_seg = len(seq.segments())
    cols = []
    for sid in shot_ids:
        g = rng.stream(noise.seed, "shots", sid)
        normals = g.standard_normal(6)
        common_u = g.random(n_seg)
        common_n = g.standard_normal(n_seg)
        u = g.random(2)
        cols.append((normals, common_u, common_n, u))
    normals = np.array([c[0] for c in cols]).T
    common_u = np.array([c[1] for c in cols]).T
    common_n = np.array([c[2] for c in cols]).T
    u = np.array([c[3] for c in cols]).T

    law = noise.common_phase_law
    if law == "uniform":
        common = noise.common_phase_offset + 2 * np.pi * common_u
    elif law == "normal":
        common = noise.common_phase_offset + noise.common_phase_width * common_n
    else:
        common = np.full_like(common_u, noise.common_phase_offset)
    n_atoms = np.full((2, len(shot_ids)), seq.n_atoms, dtype=int)
    if noise.n_atoms_jitter > 0:
        jit = np.rint(seq.n_atoms * (1 + noise.n_atoms_jitter * normals[4:6]))
        n_atoms = np.maximum(jit, 1).astype(int)
    return _ShotDraws(
        eta=noise.bs_angle_std * normals[0:2],
        # Each arm gets sigma_tech/sqrt(2) so the difference has std sigma_tech.
        tech=noise.sigma_tech / math.sqrt(2) * normals[2:4],
        common=common,
        u=u,
        n_atoms=n_atoms,
    )


def _propagate(n, seq, detuning, eta, tech, common):
    """Evolve a batch of one interferometer's shots; returns (N+1, S) amplitudes.

    ``detuning`` is the total energy mismatch / hbar for this interferometer,
    ``eta``/``tech`` are per-shot arrays, ``common`` is (n_seg, S).
    """
    psi = tm._coherent_amplitudes(n, np.pi / 2 - eta, np.full_like(eta, np.pi))
    segs = seq.segments()
    t_total = seq.t_interrogation
    for k, tau in enumerate(segs):
        if k > 0:
            psi = tm._rotate_x(psi, np.full(psi.shape[1], np.pi))
        frac = tau / t_total if t_total > 0 else (1.0 if k == 0 else 0.0)
        phase = detuning * tau + tech * frac + common[k]
        psi = tm._rotate_z(psi, phase)
        if seq.chi:
            psi = tm._oat(psi, np.full(psi.shape[1], seq.chi * tau))
    return tm._rotate_x(psi, np.full(psi.shape[1], -np.pi / 2))


def _detunings(seq):
    # phi_1 = eps T, phi_2 = (eps + delta) T
    return seq.epsilon, seq.epsilon + seq.delta


def simulate(seq, noise, n_shots, first_shot=0):
    """Simulate ``n_shots`` gradiometer shots; returns arrays (z1, z2, shot_ids)."""
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    shot_ids = np.arange(first_shot, first_shot + n_shots)
    d = _draw(seq, noise, shot_ids)
    z = np.empty((2, n_shots))
    for j, det in enumerate(_detunings(seq)):
        for n in np.unique(d.n_atoms[j]):
            sel = np.flatnonzero(d.n_atoms[j] == n)
            n_chunks = math.ceil(len(sel) * (n + 1) / _CHUNK_ELEMENTS)
            for chunk in np.array_split(sel, n_chunks):
                psi = _propagate(int(n), seq, det, d.eta[j, chunk], d.tech[j, chunk],
                                 d.common[:, chunk])
                idx = tm._sample_from_probs(np.abs(psi) ** 2, d.u[j, chunk])
                z[j, chunk] = tm.index_to_z(idx, n)
    return z[0], z[1], shot_ids


def run_shot(seq, noise, shot_id):
    z1, z2, _ = simulate(seq, noise, 1, first_shot=shot_id)
    return ShotPair(float(z1[0]), float(z2[0]), int(shot_id))


def run_gradiometer(seq, noise, n_shots):
    z1, z2, ids = simulate(seq, noise, n_shots)
    return [ShotPair(float(a), float(b), int(i)) for a, b, i in zip(z1, z2, ids)]


def expected_imbalances(seq, common_phases=None, eta=(0.0, 0.0), tech=(0.0, 0.0)):
    """Noiseless <z1>, <z2> by exact state propagation (no sampling)."""
    n_seg = len(seq.segments())
    common = np.zeros((n_seg, 1)) if common_phases is None else \
        np.asarray(common_phases, dtype=float).reshape(n_seg, 1)
    out = []
    for j, det in enumerate(_detunings(seq)):
        psi = _propagate(seq.n_atoms, seq, det, np.array([eta[j]]), np.array([tech[j]]), common)
        out.append(float(2 * tm._moments(psi)["jz"][0] / seq.n_atoms))
    return tuple(out)


def predicted_sigma(n_atoms, sigma_bs2, chi, t, sigma_tech):
    """Uncorrelated phase noise for an initial coherent state (rad).

    sigma^2 = 2/N (1 + s_bs2) + 2N (1 + N s_bs2) (chi T)^2 + s_tech^2 with chi
    an angular rate, so chi*T is in radians.
    """
    if n_atoms < 1 or min(sigma_bs2, t, sigma_tech) < 0:
        raise ValueError("arguments must be non-negative and n_atoms >= 1")
    var = (2 / n_atoms) * (1 + sigma_bs2) \
        + 2 * n_atoms * (1 + n_atoms * sigma_bs2) * (chi * t) ** 2 \
        + sigma_tech**2
    return np.sqrt(var)


def delta_from_trap(omega, d, mass=MASS_K39):
    """Differential mismatch m w^2 d^2 / hbar (rad/s); d in metres."""
    return mass * omega**2 * d**2 / HBAR


def trap_omega_from_slope(slope, d, mass=MASS_K39):
    """Invert ``delta_from_trap``: angular trap frequency from dPhi/dT."""
    return math.sqrt(abs(slope) * HBAR / (mass * d**2))


@dataclass(frozen=True)
class RabiPoint:
    t: float
    z1: float
    z2: float


def rabi_scan(tunneling_hz, times, n_shots=0, n_atoms=100, seed=0, tunneling_hz_2=None):
    """Population imbalance vs tunneling time for two double wells.

    Full transfer happens at the Rabi frequency ``2 * tunneling_hz``. With
    ``n_shots == 0`` the exact expectation is returned, otherwise the mean of
    ``n_shots`` sampled imbalances per time and well.
    """
    if tunneling_hz <= 0 or (tunneling_hz_2 is not None and tunneling_hz_2 <= 0):
        raise ValueError("tunneling rate must be positive")
    rates = (tunneling_hz, tunneling_hz if tunneling_hz_2 is None else tunneling_hz_2)
    start = tm.pole_state(n_atoms)
    out = []
    for i, t in enumerate(times):
        zs = []
        for j, f in enumerate(rates):
            st = tm.rotate_x(start, 2 * np.pi * 2 * f * t)
            if n_shots:
                zs.append(float(tm.sample_z(st, n_shots, rng.derive_seed(seed, f"rabi{j}", i)).mean()))
            else:
                zs.append(tm.mean_z(st))
        out.append(RabiPoint(float(t), *zs))
    return out


def _cos_model(t, amp, freq, phase, offset):
    return amp * np.cos(2 * np.pi * freq * t + phase) + offset


def fit_rabi_frequency(times, z):
    """Least-squares sinusoid fit; returns the oscillation frequency in Hz."""
    times = np.asarray(times, dtype=float)
    z = np.asarray(z, dtype=float)
    span = times.max() - times.min()
    nyq = 0.5 / np.min(np.diff(np.sort(times)))
    freqs = np.linspace(0.25 / span, nyq, 2000)
    basis_err = []
    for f in freqs:
        a = np.column_stack([np.cos(2 * np.pi * f * times), np.sin(2 * np.pi * f * times),
                             np.ones_like(times)])
        coef, *_ = np.linalg.lstsq(a, z, rcond=None)
        basis_err.append(np.sum((a @ coef - z) ** 2))
    f0 = freqs[int(np.argmin(basis_err))]
    p, _ = curve_fit(_cos_model, times, z, p0=[1.0, f0, 0.0, 0.0])
    return abs(p[1])
