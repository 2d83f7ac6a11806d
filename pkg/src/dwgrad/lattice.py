"""Beat-note superlattice potentials and 1D double-well eigenmodes.

The potential is a sum of retro-reflected lattices
``V(x) = sum_i depth_i * sin^2(2 pi x / lambda_i + phase_i)`` (nK), optionally
plus a harmonic term. ``solve_modes`` diagonalizes the second-order
finite-difference Hamiltonian with hard walls at the two grid end points.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import EigensolveError
from .units import HBAR, H, MASS_K39, NK_TO_HZ

# Calibrated interaction constants (s^-1).
CHI_CONTACT_PREFACTOR = 1.4464
A0_OVER_X0 = 5.3e-5
CHI_CONTACT_PER_A0 = 0.072
CHI_DD = -0.01

DEFAULT_WAVELENGTHS_NM = (1013.0, 1064.0, 1120.0)
DEFAULT_DEPTHS_NK = (370.0, 400.0, 240.0)


@dataclass(frozen=True)
class LatticeSpec:
    wavelength: float  # nm
    depth: float  # nK
    phase: float = 0.0  # rad

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        if not self.depth >= 0:
            raise ValueError(f"depth must be non-negative, got {self.depth}")
        object.__setattr__(self, "phase", float(self.phase) % (2 * math.pi))


@dataclass(frozen=True)
class PotentialGrid:
    x: np.ndarray  # um
    v: np.ndarray  # nK
    mass: float = MASS_K39  # kg

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if x.shape != v.shape or x.ndim != 1:
            raise ValueError("x and v must be 1D arrays of equal length")
        if len(x) < 3:
            raise ValueError("grid needs at least 3 points")
        dx = np.diff(x)
        if np.any(dx <= 0) or not np.allclose(dx, dx[0], rtol=1e-9, atol=0):
            raise ValueError("x must be strictly increasing with uniform spacing")
        if not np.all(np.isfinite(v)):
            raise ValueError("potential must be finite everywhere")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def dx(self):
        return self.x[1] - self.x[0]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_um", "v_nK"])
            for xi, vi in zip(self.x, self.v):
                w.writerow([f"{xi:.10g}", f"{vi:.10g}"])


@dataclass(frozen=True)
class DoubleWellModes:
    x: np.ndarray
    e_gs: float  # Hz
    e_ex: float  # Hz
    psi_gs: np.ndarray
    psi_ex: np.ndarray
    psi_l: np.ndarray
    psi_r: np.ndarray
    tunneling_hz: float
    well_separation: float  # um
    barrier_x: float  # um, midpoint between the two localized modes
    energies_hz: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    warnings: tuple = ()

    @property
    def rabi_hz(self):
        """Frequency of full left-right population transfer, (E_ex - E_gs)/h."""
        return 2 * self.tunneling_hz

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_um", "psi_gs", "psi_ex", "psi_l", "psi_r"])
            for row in zip(self.x, self.psi_gs, self.psi_ex, self.psi_l, self.psi_r):
                w.writerow([f"{v:.10g}" for v in row])


def beat_period(lambda_a, lambda_b):
    """Spacing of the effective lattice formed by two lattices, 0.5*la*lb/|lb-la|."""
    if lambda_a <= 0 or lambda_b <= 0:
        raise ValueError("wavelengths must be positive")
    if lambda_a == lambda_b:
        raise ValueError("equal wavelengths: beat period is infinite")
    return 0.5 * lambda_a * lambda_b / abs(lambda_b - lambda_a)


def double_well_specs(depths=DEFAULT_DEPTHS_NK, wavelengths=DEFAULT_WAVELENGTHS_NM):
    """Three-lattice configuration with a double well centred at x = 0.

    The first two lattices share a potential minimum at the origin, which
    is the centre of a beat-note cell. The third is offset by a quarter
    period so it puts a barrier there, splitting the cell into two wells
    ``beat_period(l1, l3)`` apart.
    """
    phases = (0.0, 0.0, math.pi / 2)
    return [LatticeSpec(w, d, p) for w, d, p in zip(wavelengths, depths, phases)]


def lattice_potential(specs, x_um):
    x_nm = np.asarray(x_um, dtype=float) * 1e3
    v = np.zeros_like(x_nm)
    for s in specs:
        v += s.depth * np.sin(2 * np.pi * x_nm / s.wavelength + s.phase) ** 2
    return v


def build_potential(specs, x_min, x_max, n_points, mass=MASS_K39, harmonic_hz=0.0):
    """Sample the superposed lattices (plus optional harmonic trap) on a grid in um."""
    if not specs:
        raise ValueError("need at least one lattice spec")
    if n_points < 3:
        raise ValueError(f"point count must be >= 3, got {n_points}")
    if not x_max > x_min:
        raise ValueError("grid range has zero or negative width")
    x = np.linspace(x_min, x_max, int(n_points))
    v = lattice_potential(specs, x)
    if harmonic_hz:
        omega = 2 * np.pi * harmonic_hz
        v = v + 0.5 * mass * omega**2 * (x * 1e-6) ** 2 / (NK_TO_HZ * H)
    return PotentialGrid(x, v, mass)


def kinetic_hz(mass, dx_um):
    """hbar^2 / (2 m dx^2) expressed in Hz."""
    return HBAR**2 / (2 * mass * (dx_um * 1e-6) ** 2) / H


def solve_modes(pot, n_states=2, residual_tol=1e-6, min_points_per_wavelength=10):
    """Lowest eigenpairs of the finite-difference Hamiltonian on ``pot``.

    The first and last grid points are hard walls (psi = 0 there). Energies
    are returned in Hz. ``psi_l``/``psi_r`` are built from the two lowest
    states with signs fixed so that ``psi_l`` sits on the left.
    """
    if n_states < 2:
        raise ValueError("need at least two states for double-well modes")
    n_int = len(pot.x) - 2
    if n_states > n_int:
        raise ValueError("more states requested than interior grid points")
    dx = pot.dx
    t = kinetic_hz(pot.mass, dx)
    v_hz = pot.v[1:-1] * NK_TO_HZ
    diag = v_hz + 2 * t
    off = -t * np.ones(n_int - 1)
    evals, evecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, n_states - 1))

    hpsi = diag[:, None] * evecs
    hpsi[1:] += off[:, None] * evecs[:-1]
    hpsi[:-1] += off[:, None] * evecs[1:]
    residuals = np.linalg.norm(hpsi - evecs * evals, axis=0) / max(abs(evals).max(), 1.0)
    if residuals.max() > residual_tol:
        raise EigensolveError("eigensolve did not converge", residuals.max())

    states = np.zeros((len(pot.x), n_states))
    states[1:-1] = evecs / np.sqrt(dx)
    # Walls carry psi = 0 so trapezoid and rectangle norms coincide.
    states /= np.sqrt(np.trapezoid(states**2, pot.x, axis=0))

    gs, ex = states[:, 0].copy(), states[:, 1].copy()
    if gs.sum() < 0:
        gs = -gs
    if np.trapezoid(pot.x * gs * ex, pot.x) > 0:
        ex = -ex
    states[:, 0], states[:, 1] = gs, ex
    psi_l = (gs + ex) / math.sqrt(2)
    psi_r = (gs - ex) / math.sqrt(2)
    xl = np.trapezoid(pot.x * psi_l**2, pot.x)
    xr = np.trapezoid(pot.x * psi_r**2, pot.x)

    warnings = []
    k_max = math.sqrt(2 * pot.mass * max(evals[-1] - v_hz.min(), 0.0) * H) / HBAR
    if k_max > 0:
        pts = (2 * np.pi / k_max) / (dx * 1e-6)
        if pts < min_points_per_wavelength:
            warnings.append(
                f"grid too coarse: {pts:.1f} points per local de Broglie wavelength "
                f"(want >= {min_points_per_wavelength})"
            )

    return DoubleWellModes(
        x=pot.x,
        e_gs=float(evals[0]),
        e_ex=float(evals[1]),
        psi_gs=gs,
        psi_ex=ex,
        psi_l=psi_l,
        psi_r=psi_r,
        tunneling_hz=float(evals[1] - evals[0]) / 2,
        well_separation=float(abs(xr - xl)),
        barrier_x=float(0.5 * (xl + xr)),
        energies_hz=evals,
        states=states,
        residuals=residuals,
        warnings=tuple(warnings),
    )


def side_fractions(modes):
    """Probability of psi_l left of the barrier and of psi_r right of it."""
    left = modes.x < modes.barrier_x
    pl = np.trapezoid(np.where(left, modes.psi_l**2, 0.0), modes.x)
    pr = np.trapezoid(np.where(~left, modes.psi_r**2, 0.0), modes.x)
    return pl, pr


def central_double_well(depths=DEFAULT_DEPTHS_NK, n_points=20001, harmonic_hz=0.0,
                      wavelengths=DEFAULT_WAVELENGTHS_NM):
    """Solve the central double well of the three-lattice potential.

    Hard walls sit at the edges of the beat-note cell (+-half a period of the
    first two lattices), where the deep lattice already isolates neighbouring
    cells.
    """
    specs = double_well_specs(depths, wavelengths)
    half = 0.5 * beat_period(wavelengths[0], wavelengths[1]) * 1e-3
    pot = build_potential(specs, -half, half, n_points, harmonic_hz=harmonic_hz)
    return pot, solve_modes(pot)


def self_convergence(specs, x_min, x_max, n_points, **kwargs):
    """Relative change of (e_gs, e_ex) when the grid spacing is halved."""
    coarse = solve_modes(build_potential(specs, x_min, x_max, n_points, **kwargs))
    fine = solve_modes(build_potential(specs, x_min, x_max, 2 * n_points - 1, **kwargs))
    return (
        fine,
        abs(fine.e_gs - coarse.e_gs) / abs(fine.e_gs),
        abs(fine.e_ex - coarse.e_ex) / abs(fine.e_ex),
    )


def chi_contact(a_over_a0, omega_y, omega_z):
    """Contact one-axis-twisting rate 1.4464 (a/x0) sqrt(w_y w_z), x0 = 1 um."""
    if omega_y <= 0 or omega_z <= 0:
        raise ValueError("trap frequencies must be positive")
    return CHI_CONTACT_PREFACTOR * a_over_a0 * A0_OVER_X0 * math.sqrt(omega_y * omega_z)


def chi_total(a_over_a0, chi_dd=CHI_DD):
    """Calibrated total twisting rate 0.072 a/a0 + chi_dd (s^-1)."""
    return CHI_CONTACT_PER_A0 * a_over_a0 + chi_dd
