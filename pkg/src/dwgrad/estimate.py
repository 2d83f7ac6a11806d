"""Joint estimation of the differential phase and uncorrelated phase noise.

Data are pairs of imbalances ``(z1, z2)`` from two interferometers that share
a uniformly distributed common-mode phase. After rescaling with offsets and
visibilities, ``z~_j = sin(alpha_j)`` and the pair density is a sum of four
Gaussian branches in the arcsin coordinates.

The density is exactly even in the phase difference (and in swapping the two
channels), so only ``|dphi|`` is identifiable. Estimates are reported on the
branch ``[0, pi]``.
"""
import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares, minimize

from . import rng
from .errors import ConfigError

MIN_SAMPLES = 5
CLIP = 1 - 1e-9
LOG_NORM = 1.5 * math.log(2 * math.pi)


@dataclass(frozen=True, eq=False)
class JointSamples:
    z1: np.ndarray
    z2: np.ndarray
    shot_id: np.ndarray = None
    min_samples: int = MIN_SAMPLES

    def __post_init__(self):
        z1 = np.asarray(self.z1, dtype=float).ravel()
        z2 = np.asarray(self.z2, dtype=float).ravel()
        if z1.shape != z2.shape:
            raise ValueError("z1 and z2 must have equal length")
        if len(z1) < self.min_samples:
            raise ValueError(f"need at least {self.min_samples} samples, got {len(z1)}")
        if not (np.all(np.abs(z1) <= 1) and np.all(np.abs(z2) <= 1)):
            raise ValueError("imbalances must lie in [-1, 1]")
        ids = np.arange(len(z1)) if self.shot_id is None else np.asarray(self.shot_id, dtype=int)
        if len(np.unique(ids)) != len(ids):
            raise ValueError("shot_id values must be unique")
        object.__setattr__(self, "z1", z1)
        object.__setattr__(self, "z2", z2)
        object.__setattr__(self, "shot_id", ids)

    @property
    def m(self):
        return len(self.z1)

    @property
    def pairs(self):
        return list(zip(self.z1.tolist(), self.z2.tolist()))

    @classmethod
    def from_shots(cls, shots, **kw):
        return cls([s.z1 for s in shots], [s.z2 for s in shots], [s.shot_id for s in shots], **kw)


@dataclass(frozen=True)
class Calibration:
    c1: float = 0.0
    c2: float = 0.0
    v1: float = 1.0
    v2: float = 1.0

    def __post_init__(self):
        for c in (self.c1, self.c2):
            if not abs(c) < 1:
                raise ValueError(f"offset must satisfy |c| < 1, got {c}")
        for v in (self.v1, self.v2):
            if not 0 < v <= 2:
                raise ValueError(f"visibility must be positive, got {v}")

    def rescale(self, samples):
        return (samples.z1 - self.c1) / self.v1, (samples.z2 - self.c2) / self.v2


IDENTITY = Calibration()


@dataclass(frozen=True, eq=False)
class EstimateResult:
    delta_phi: float
    sigma_delta_phi: float
    log_likelihood_at_max: float
    m: int
    calibration: Calibration
    se_delta_phi: float = math.nan
    se_sigma: float = math.nan
    n_bootstrap: int = 0
    ambiguity_flag: bool = False
    converged: bool = True
    at_sigma_floor: bool = False
    diagnostic: str = ""
    n_failed: int = 0
    failure_flag: bool = False
    bootstrap_delta_phi: np.ndarray = field(default=None, repr=False)
    bootstrap_sigma: np.ndarray = field(default=None, repr=False)

    def to_document(self):
        def num(x):
            return None if x is None or (isinstance(x, float) and math.isnan(x)) else x

        c = self.calibration
        return {
            "delta_phi_rad": self.delta_phi,
            "sigma_rad": self.sigma_delta_phi,
            "se_delta_phi": num(self.se_delta_phi),
            "se_sigma": num(self.se_sigma),
            "c1": c.c1,
            "c2": c.c2,
            "v1": c.v1,
            "v2": c.v2,
            "m": self.m,
            "n_bootstrap": self.n_bootstrap,
            "ambiguity_flag": self.ambiguity_flag,
            "log_likelihood": self.log_likelihood_at_max,
            "converged": self.converged,
            "at_sigma_floor": self.at_sigma_floor,
            "n_failed": self.n_failed,
            "failure_flag": self.failure_flag,
            "diagnostic": self.diagnostic,
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_document(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def calibrate(samples):
    """Offsets as sample means, visibilities as max |z - C|."""
    if samples.m < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples")
    c1, c2 = float(samples.z1.mean()), float(samples.z2.mean())
    v1 = float(np.abs(samples.z1 - c1).max())
    v2 = float(np.abs(samples.z2 - c2).max())
    if v1 < 1e-12 or v2 < 1e-12:
        raise ValueError("degenerate data: zero visibility (all z equal)")
    return Calibration(c1, c2, v1, v2)


def ellipse_residual(z1_tilde, z2_tilde, delta_phi):
    z1, z2 = np.asarray(z1_tilde), np.asarray(z2_tilde)
    return z1**2 + z2**2 - 2 * z1 * z2 * np.cos(delta_phi) - np.sin(delta_phi) ** 2


def ellipse_points(delta_phi, calib=IDENTITY, n=200):
    """Noiseless fringe pairs over one common-mode period."""
    u = 2 * np.pi * np.arange(n) / n
    return (calib.c1 + calib.v1 * np.sin(u),
            calib.c2 + calib.v2 * np.sin(u + delta_phi))


def _coords(z1t, z2t):
    z1t = np.clip(np.asarray(z1t, dtype=float), -CLIP, CLIP)
    z2t = np.clip(np.asarray(z2t, dtype=float), -CLIP, CLIP)
    a, b = np.arcsin(z1t), np.arcsin(z2t)
    log_jac = -0.5 * (np.log1p(-z1t**2) + np.log1p(-z2t**2))
    return a - b, a + b - np.pi, log_jac


def _n_images(sigma):
    # 0 means: keep only the nearer neighbouring image, enough for sigma <= 1.
    return 0 if sigma <= 1 else int(math.ceil(3 * sigma / math.pi))


def _images(r, n_img):
    r = r - (2 * np.pi) * np.rint(r / (2 * np.pi))
    if n_img == 0:
        return np.concatenate([r, r - np.copysign(2 * np.pi, r)], axis=-1)
    shifts = 2 * np.pi * np.arange(-n_img, n_img + 1)
    return (r[..., None] + shifts).reshape(*r.shape[:-1], -1)


def _residuals(theta, d1, d2, wrap, n_img):
    """Branch offsets r = theta +- d, stacked on a trailing axis."""
    theta = np.asarray(theta)[..., None]
    r = np.stack([theta + d1, theta - d1, theta + d2, theta - d2], axis=-1)
    return _images(r, n_img) if wrap else r


def _logsumexp_last(e):
    emax = e.max(axis=-1, keepdims=True)
    e -= emax
    np.exp(e, out=e)
    return emax[..., 0] + np.log(e.sum(axis=-1))


def _loglik_core(theta, sigma, d1, d2, wrap):
    """Sum over the last data axis of log(mixture) - log sigma (no constants)."""
    r = _residuals(theta, d1, d2, wrap, _n_images(sigma))
    lse = _logsumexp_last(-0.5 * (r / sigma) ** 2)
    return lse.sum(axis=-1) - d1.shape[-1] * math.log(sigma)


def log_density(z1_tilde, z2_tilde, delta_phi, sigma, wrap=True):
    """Pointwise log P(z1~, z2~ | dphi, sigma)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    d1, d2, log_jac = _coords(z1_tilde, z2_tilde)
    shape = d1.shape
    r = _residuals(float(delta_phi), d1.ravel(), d2.ravel(), wrap, _n_images(sigma))
    lse = _logsumexp_last(-0.5 * (r / sigma) ** 2).reshape(shape)
    out = lse - math.log(sigma) - LOG_NORM + log_jac
    return float(out) if out.ndim == 0 else out


def log_likelihood(z1_tilde, z2_tilde, delta_phi, sigma, wrap=True):
    """Joint log-likelihood of rescaled pairs.

    ``wrap=True`` sums the Gaussian over 2 pi images, which makes the density
    normalized on (-1, 1)^2. ``wrap=False`` evaluates the four branches as
    written without images.
    """
    return float(np.sum(log_density(z1_tilde, z2_tilde, delta_phi, sigma, wrap)))


def fold_phase(theta):
    """Map a phase difference onto the identifiable branch [0, pi]."""
    return np.abs((np.asarray(theta) + np.pi) % (2 * np.pi) - np.pi)


def mle_fit(samples, calib, sigma_floor=1e-3, sigma_ceil=math.pi, n_grid=(61, 41),
            wrap=True, xatol=1e-6, grid_max_samples=250):
    """Maximum-likelihood (dphi, sigma): coarse grid, then Nelder-Mead polish.

    The grid only seeds the polish, so for large m it is evaluated on an evenly
    strided subset of at most ``grid_max_samples`` pairs.
    """
    if samples.m < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples")
    z1t, z2t = calib.rescale(samples)
    d1, d2, log_jac = _coords(z1t, z2t)
    n_th, n_sig = n_grid
    thetas = -np.pi + 2 * np.pi * np.arange(1, n_th + 1) / n_th
    sigmas = np.geomspace(sigma_floor, sigma_ceil, n_sig)
    stride = max(1, math.ceil(len(d1) / grid_max_samples))
    g1, g2 = d1[::stride], d2[::stride]
    grid = np.array([_loglik_core(thetas, s, g1, g2, wrap) for s in sigmas])
    i_s, i_t = np.unravel_index(np.argmax(grid), grid.shape)

    log_floor, log_ceil = math.log(sigma_floor), math.log(sigma_ceil)

    def neg(p):
        s = math.exp(min(max(p[1], log_floor), log_ceil))
        return -_loglik_core(p[0], s, d1, d2, wrap)

    step = 2 * np.pi / n_th
    x0 = np.array([thetas[i_t], math.log(sigmas[i_s])])
    simplex = np.array([x0, x0 + [step, 0], x0 + [0, 0.3]])
    res = minimize(neg, x0, method="Nelder-Mead",
                   options=dict(xatol=xatol, fatol=1e-10, initial_simplex=simplex, maxiter=4000))
    theta = float(res.x[0])
    sigma = math.exp(min(max(res.x[1], log_floor), log_ceil))
    ll_core = -float(res.fun)
    const = float(log_jac.sum()) - samples.m * LOG_NORM

    dphi = float(fold_phase(theta))
    distinct = min(dphi, math.pi - dphi) > 1e-6
    ll_mirror = _loglik_core(-theta, sigma, d1, d2, wrap)
    ambiguous = bool(distinct and abs(ll_core - ll_mirror) < 1.0)

    at_floor = sigma <= sigma_floor * (1 + 1e-6)
    at_ceil = sigma >= sigma_ceil * (1 - 1e-3)
    profile = _loglik_core(thetas, sigma, d1, d2, wrap)
    flat = bool(profile.max() - profile.min() < 1.0)
    diag = []
    if not res.success:
        diag.append(f"local refinement: {res.message}")
    if at_ceil:
        diag.append("sigma at search ceiling: likelihood flat, phase not determined")
    elif flat:
        diag.append("likelihood flat in phase (< 1 log-unit): phase not determined")
    if at_floor:
        diag.append("sigma at search floor")
    return EstimateResult(
        delta_phi=dphi,
        sigma_delta_phi=sigma,
        log_likelihood_at_max=ll_core + const,
        m=samples.m,
        calibration=calib,
        ambiguity_flag=ambiguous,
        converged=bool(res.success and not at_ceil and not flat),
        at_sigma_floor=bool(at_floor),
        diagnostic="; ".join(diag),
    )


def _newton_refine(d1, d2, theta0, sigma0, sigma_floor, wrap, max_iter=60, tol=1e-9):
    """Batched Newton ascent of the log-likelihood in (theta, log sigma).

    ``d1``/``d2`` are (B, m). Returns theta, sigma, converged arrays of length B.
    """
    n_b, m = d1.shape
    theta = np.full(n_b, float(theta0))
    s = np.full(n_b, math.log(max(sigma0, sigma_floor)))
    s_floor = math.log(sigma_floor)
    done = np.zeros(n_b, dtype=bool)

    def value(th, ss, rows):
        sig = np.exp(ss)
        r = _branch_offsets(th, d1[rows], d2[rows], wrap, _n_images(float(sig.max())))
        lse = _logsumexp_last(-0.5 * (r / sig[:, None, None]) ** 2)
        return lse.sum(-1) - m * ss

    def derivs(th, ss, rows):
        # Every term is a softmax-weighted moment of r, so reduce r^1..r^4 only.
        inv = np.exp(-2 * ss)[:, None]
        n_img = _n_images(float(np.exp(ss).max()))
        r = _branch_offsets(th, d1[rows], d2[rows], wrap, n_img)
        p = r * r
        p *= -0.5 * inv[..., None]
        p -= p.max(axis=-1, keepdims=True)
        np.exp(p, out=p)
        p /= p.sum(axis=-1, keepdims=True)
        p *= r
        m1 = p.sum(-1)
        p *= r
        m2 = p.sum(-1)
        p *= r
        m3 = p.sum(-1)
        p *= r
        m4 = p.sum(-1)
        i2 = inv**2
        g_t = -inv * m1
        g_s = inv * m2
        h_tt = -inv + i2 * (m2 - m1**2)
        h_ts = 2 * inv * m1 - i2 * (m3 - m1 * m2)
        h_ss = -2 * inv * m2 + i2 * (m4 - m2**2)
        return (g_t.sum(-1), g_s.sum(-1) - m,
                h_tt.sum(-1), h_ts.sum(-1), h_ss.sum(-1))

    current = value(theta, s, np.arange(n_b))
    for _ in range(max_iter):
        rows = np.flatnonzero(~done)
        if len(rows) == 0:
            break
        gt, gs, htt, hts, hss = derivs(theta[rows], s[rows], rows)
        det = htt * hss - hts**2
        negdef = (htt < 0) & (det > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            st = np.where(negdef, -(hss * gt - hts * gs) / det, 0.05 * gt / (1 + np.abs(gt)))
            ss_ = np.where(negdef, -(-hts * gt + htt * gs) / det, 0.05 * gs / (1 + np.abs(gs)))
        st = np.clip(st, -0.5, 0.5)
        ss_ = np.clip(ss_, -1.0, 1.0)
        at_floor = (s[rows] <= s_floor + 1e-12) & (ss_ < 0)
        ss_ = np.where(at_floor, 0.0, ss_)
        lam = np.ones(len(rows))
        accepted = np.zeros(len(rows), dtype=bool)
        for _ls in range(30):
            todo = ~accepted
            if not todo.any():
                break
            r_idx = rows[todo]
            th_new = theta[r_idx] + lam[todo] * st[todo]
            s_new = np.maximum(s[r_idx] + lam[todo] * ss_[todo], s_floor)
            v_new = value(th_new, s_new, r_idx)
            ok = v_new >= current[r_idx] - 1e-12
            sel = np.flatnonzero(todo)[ok]
            theta[rows[sel]] = th_new[ok]
            s[rows[sel]] = s_new[ok]
            gain = v_new[ok] - current[rows[sel]]
            current[rows[sel]] = v_new[ok]
            small = (np.abs(lam[sel] * st[sel]) < tol) & (np.abs(lam[sel] * ss_[sel]) < tol)
            done[rows[sel[small | (gain < 1e-12)]]] = True
            accepted[sel] = True
            lam[todo] *= 0.5
        done[rows[~accepted]] = True
    gt, gs, htt, hts, hss = derivs(theta, s, np.arange(n_b))
    grad_ok = (np.abs(gt) < 1e-4 * m) & ((np.abs(gs) < 1e-4 * m) | (s <= s_floor + 1e-12))
    return theta, np.exp(s), grad_ok & np.isfinite(theta) & np.isfinite(s)


def _branch_offsets(theta, d1, d2, wrap, n_img):
    """Per-row offsets for batched theta: theta (B,), d (B, m) -> (B, m, T)."""
    th = np.asarray(theta)[:, None, None]
    r = np.stack([d1, -d1, d2, -d2], axis=-1) + th
    return _images(r, n_img) if wrap else r


def sample_joint(delta_phi, sigma, calib=IDENTITY, m=30, seed=0, index=0):
    """Pairs drawn from the ellipse model with Gaussian uncorrelated phase noise.

    Channel 1 carries phase ``phi_eps + n1`` and channel 2 ``phi_eps + dphi + n2``
    with ``phi_eps`` uniform and ``n1, n2 ~ N(0, sigma^2 / 2)``.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    g = rng.stream(seed, "joint", index)
    u = g.random(m)
    n = g.standard_normal((2, m)) * (sigma / math.sqrt(2))
    phi = 2 * np.pi * u
    z1 = np.clip(calib.v1 * np.sin(phi + n[0]) + calib.c1, -1, 1)
    z2 = np.clip(calib.v2 * np.sin(phi + delta_phi + n[1]) + calib.c2, -1, 1)
    return JointSamples(z1, z2, min_samples=1)


def bootstrap(result, calib, m=None, n_resamples=200, seed=0, recalibrate=False,
              wrap=True, sigma_floor=1e-3):
    """Parametric bootstrap: resample from the fitted density, refit, take std.

    Refits start from the fitted values (batched Newton); any resample that
    fails to converge is refitted from scratch with ``mle_fit``. Resamples that
    still fail are counted in ``n_failed``.
    """
    if n_resamples < 100:
        raise ValueError("n_resamples must be >= 100")
    m = result.m if m is None else m
    sig0 = max(result.sigma_delta_phi, sigma_floor)
    sets = [sample_joint(result.delta_phi, sig0, calib, m, seed=seed, index=b)
            for b in range(n_resamples)]
    cals = [calibrate(s) if recalibrate else calib for s in sets]
    coords = [_coords(*c.rescale(s)) for s, c in zip(sets, cals)]
    d1 = np.array([c[0] for c in coords])
    d2 = np.array([c[1] for c in coords])
    theta, sigma, ok = _newton_refine(d1, d2, result.delta_phi, sig0, sigma_floor, wrap)
    n_failed = 0
    for b in np.flatnonzero(~ok):
        try:
            r = mle_fit(sets[b], cals[b], sigma_floor=sigma_floor, wrap=wrap)
        except (ValueError, FloatingPointError):
            r = None
        if r is None or not r.converged:
            n_failed += 1
            theta[b] = sigma[b] = np.nan
        else:
            theta[b], sigma[b] = r.delta_phi, r.sigma_delta_phi
    good = np.isfinite(theta)
    dphis = fold_phase(theta[good])
    sigmas = sigma[good]
    return replace(
        result,
        se_delta_phi=float(np.std(dphis, ddof=1)) if good.sum() > 1 else math.nan,
        se_sigma=float(np.std(sigmas, ddof=1)) if good.sum() > 1 else math.nan,
        n_bootstrap=int(n_resamples),
        n_failed=int(n_failed),
        failure_flag=bool(n_failed > 0.1 * n_resamples),
        bootstrap_delta_phi=dphis,
        bootstrap_sigma=sigmas,
    )


def analyze(samples, n_bootstrap=200, seed=0, **fit_kw):
    """Calibrate, fit and bootstrap in one call."""
    calib = calibrate(samples)
    res = mle_fit(samples, calib, **fit_kw)
    if n_bootstrap:
        res = bootstrap(res, calib, samples.m, n_bootstrap, seed,
                        wrap=fit_kw.get("wrap", True),
                        sigma_floor=fit_kw.get("sigma_floor", 1e-3))
    return res


def confidence_region(result, level=0.9, n_points=200):
    """Ellipse polylines at the fit and at the bootstrap ``level`` quantiles of dphi.

    Returns rows ``(curve, u, z1, z2)`` with curve in {fit, lower, upper}; the
    band between ``lower`` and ``upper`` is the confidence area.
    """
    if result.bootstrap_delta_phi is None or len(result.bootstrap_delta_phi) < 2:
        raise ValueError("confidence region needs bootstrap draws")
    lo, hi = np.quantile(result.bootstrap_delta_phi, [(1 - level) / 2, (1 + level) / 2])
    rows = []
    u = 2 * np.pi * np.arange(n_points + 1) / n_points
    cal = result.calibration
    for name, dphi in (("fit", result.delta_phi), ("lower", lo), ("upper", hi)):
        z1 = cal.c1 + cal.v1 * np.sin(u)
        z2 = cal.c2 + cal.v2 * np.sin(u + dphi)
        rows.extend((name, float(a), float(b), float(c)) for a, b, c in zip(u, z1, z2))
    return rows


def write_confidence_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["curve", "u", "z1", "z2"])
        for name, u, z1, z2 in rows:
            w.writerow([name, f"{u:.10g}", f"{z1:.10g}", f"{z2:.10g}"])


def write_samples_csv(path, z1, z2, shot_ids=None):
    ids = range(len(z1)) if shot_ids is None else shot_ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["shot_id", "z1", "z2"])
        for i, a, b in zip(ids, z1, z2):
            w.writerow([int(i), f"{a:.17g}", f"{b:.17g}"])


def read_samples_csv(path, min_samples=MIN_SAMPLES):
    """Read the ``shot_id, z1, z2`` schema (extra columns are ignored)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        missing = [c for c in ("shot_id", "z1", "z2") if c not in cols]
        if missing:
            raise ConfigError(f"{path}: missing column(s) {missing}; found {cols}")
        ids, z1, z2 = [], [], []
        for line, row in enumerate(reader, start=2):
            try:
                ids.append(int(row["shot_id"]))
                z1.append(float(row["z1"]))
                z2.append(float(row["z2"]))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}:{line}: bad value ({exc})") from None
    try:
        return JointSamples(z1, z2, ids, min_samples=min_samples)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def fit_folded_phase_slope(times, dphi, slope_max=None):
    """Slope of a linearly growing phase observed only through fold_phase.

    Fits ``fold_phase(slope * t + c)`` to the data: a periodogram-style scan on
    ``cos(dphi)`` seeds a least-squares refinement. Returns ``(|slope|, c)``.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(dphi, dtype=float)
    span = t.max() - t.min()
    if slope_max is None:
        slope_max = np.pi / np.min(np.diff(np.sort(t)))
    slopes = np.arange(0.05 / span, slope_max, 0.05 / span)
    best, best_err = None, np.inf
    cy = np.cos(y)
    for s in slopes:
        a = np.column_stack([np.cos(s * t), np.sin(s * t)])
        coef, *_ = np.linalg.lstsq(a, cy, rcond=None)
        c = math.atan2(-coef[1], coef[0])
        err = np.sum((np.cos(s * t + c) - cy) ** 2)
        if err < best_err:
            best, best_err = (s, c), err
    res = least_squares(lambda p: fold_phase(p[0] * t + p[1]) - y, x0=np.array(best))
    return abs(float(res.x[0])), float(res.x[1])
