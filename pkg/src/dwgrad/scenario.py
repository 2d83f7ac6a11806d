"""Scenario configs (INI) and the pipelines that turn them into CSV/SVG/JSON.

Grammar: standard INI (``configparser``), ``#`` or ``;`` comments, lists are
comma separated. Sections and keys:

``[scenario]``  name, kind, seed, n_shots, outputs (csv, svg, json)
``[sequence]``  n_atoms, t_interrogation (s), epsilon, delta (rad/s) or
                trap_hz + separation_um, chi (rad/s) or b_field (G), echo,
                n_echo_pulses
``[noise]``     sigma_bs2, sigma_tech, common_phase_law, common_phase_offset,
                common_phase_width, n_atoms_jitter
``[feshbach]``  b_min, slope_a, chi_dd, chi_per_a0
``[lattice]``   depths (nK), wavelengths (nm), n_points, harmonic_hz
``[sweep]``     parameter (section.key), values | linspace = start, stop, count
``[estimate]``  n_bootstrap, calibration (data | ideal), wrap
``[rabi]``      t_start, t_stop, n_times, tunneling_hz, tunneling_hz_2
``[slope]``     windows (s), half_width (s), points_per_window
``[histogram]`` n_bins
``[overlay]``   sigma_bs2_values, sigma_tech_values, n_points
``[husimi]``    b_field, n_theta, n_phi, theta_width, phi_width (rad)

Kinds: gradiometer, rabi, histogram, slope, echo_compare, decoherence, lattice.
"""
import configparser
import csv
import datetime
import hashlib
import json
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import estimate as est
from . import interferometer as ifo
from . import lattice as lat
from . import rng
from . import twomode as tm
from .errors import ConfigError
from .svg import render_svg

KINDS = ("gradiometer", "rabi", "histogram", "slope", "echo_compare", "decoherence", "lattice")
OUTPUTS = ("csv", "svg", "json")

# Physics the two-mode model does not contain; named explicitly so configs fail loudly.
OUT_OF_SCOPE = {
    "temperature", "finite_temperature", "thermal_fraction", "loss_rate", "atom_loss",
    "one_body_loss", "three_body_loss", "decay_rate", "heating_rate", "collision_rate",
}

_S, _F, _I, _B, _FL = "str", "float", "int", "bool", "floats"
SCHEMA = {
    "scenario": {"name": _S, "kind": _S, "seed": _I, "n_shots": _I, "outputs": "strs"},
    "sequence": {"n_atoms": _I, "t_interrogation": _F, "epsilon": _F, "delta": _F,
                 "trap_hz": _F, "separation_um": _F, "chi": _F, "b_field": _F,
                 "echo": _B, "n_echo_pulses": _I},
    "noise": {"sigma_bs2": _F, "sigma_tech": _F, "common_phase_law": _S,
              "common_phase_offset": _F, "common_phase_width": _F, "n_atoms_jitter": _F},
    "feshbach": {"b_min": _F, "slope_a": _F, "chi_dd": _F, "chi_per_a0": _F},
    "lattice": {"depths": _FL, "wavelengths": _FL, "n_points": _I, "harmonic_hz": _F},
    "sweep": {"parameter": _S, "values": _FL, "linspace": _FL},
    "estimate": {"n_bootstrap": _I, "calibration": _S, "wrap": _B},
    "rabi": {"t_start": _F, "t_stop": _F, "n_times": _I, "tunneling_hz": _F,
             "tunneling_hz_2": _F},
    "slope": {"windows": _FL, "half_width": _F, "points_per_window": _I},
    "histogram": {"n_bins": _I},
    "overlay": {"sigma_bs2_values": _FL, "sigma_tech_values": _FL, "n_points": _I},
    "husimi": {"b_field": _F, "n_theta": _I, "n_phi": _I, "theta_width": _F, "phi_width": _F},
}
SWEEPABLE = {"sequence": ("n_atoms", "t_interrogation", "epsilon", "delta", "chi", "b_field",
                          "n_echo_pulses"),
             "noise": ("sigma_bs2", "sigma_tech", "common_phase_offset")}


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    seed: int = 0
    n_shots: int = 100
    outputs: tuple = OUTPUTS
    sequence: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    feshbach: ifo.FeshbachModel = ifo.FeshbachModel()
    lattice: dict = None
    sweep: tuple = None  # (section, key, values)
    estimate: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)  # kind-specific sections

    def points(self):
        """(label, value) per sweep point, or a single unlabeled point."""
        if self.sweep is None:
            return [(None, None)]
        return [(f"{self.sweep[0]}.{self.sweep[1]}", v) for v in self.sweep[2]]

    def sequence_config(self, overrides=None):
        p = dict(self.sequence)
        p.update(overrides or {})
        delta = p.pop("delta", None)
        trap_hz = p.pop("trap_hz", None)
        sep = p.pop("separation_um", None)
        if delta is None and trap_hz is not None:
            if sep is None:
                raise ConfigError("sequence: trap_hz needs separation_um")
            delta = ifo.delta_from_trap(2 * math.pi * trap_hz, sep * 1e-6)
        b = p.pop("b_field", None)
        chi = p.pop("chi", None)
        if chi is None and b is not None:
            chi = float(ifo.chi_of_b(self.feshbach, b))
        p["n_atoms"] = int(p.get("n_atoms", 100))
        p.setdefault("t_interrogation", 0.0)
        try:
            return ifo.SequenceConfig(delta=delta or 0.0, chi=chi or 0.0, **p)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"sequence: {exc}") from None

    def noise_config(self, index, overrides=None):
        p = dict(self.noise)
        p.update(overrides or {})
        try:
            return ifo.NoiseConfig(seed=rng.derive_seed(self.seed, "noise", index), **p)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"noise: {exc}") from None


@dataclass(frozen=True)
class RunManifest:
    name: str
    seed: int
    version: str
    timestamp: str
    digest: str
    files: tuple
    out_dir: str = ""
    summary: dict = field(default_factory=dict)

    def to_json(self):
        d = {k: getattr(self, k) for k in ("name", "seed", "version", "timestamp", "digest")}
        d["files"] = list(self.files)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def _line_map(text):
    """(section, key) -> line number, plus section -> header line."""
    where, section = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
            where[(section, None)] = i
        elif section is not None:
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            where[(section, key)] = i
    return where


def _convert(kind, raw):
    if kind == _S:
        return raw.strip()
    if kind == "strs":
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    if kind == _F:
        return float(raw)
    if kind == _I:
        v = float(raw)
        if v != int(v):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(v)
    if kind == _B:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind == _FL:
        return tuple(float(v) for v in raw.split(",") if v.strip())
    raise AssertionError(kind)


def parse_scenario(text, source="<config>", seed=None):
    """Parse and validate INI text; errors name the file, line and field."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    lines = _line_map(text)

    def loc(section, key=None):
        n = lines.get((section, key)) or lines.get((section, None))
        return f"{source}:{n}" if n else source

    data = {}
    for section in cp.sections():
        for key in cp[section]:
            if key in OUT_OF_SCOPE:
                raise ConfigError(
                    f"{loc(section, key)}: [{section}] {key} is out of scope: the model has "
                    "no temperature, atom-loss or heating physics")
        if section not in SCHEMA:
            raise ConfigError(f"{loc(section)}: unknown section [{section}]; "
                              f"expected one of {sorted(SCHEMA)}")
        values = {}
        for key, raw in cp[section].items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"{loc(section, key)}: unknown field [{section}] {key}; "
                                  f"expected one of {sorted(SCHEMA[section])}")
            try:
                values[key] = _convert(SCHEMA[section][key], raw)
            except ValueError as exc:
                raise ConfigError(f"{loc(section, key)}: [{section}] {key}: {exc}") from None
        data[section] = values

    sc = data.get("scenario", {})
    for req in ("name", "kind"):
        if req not in sc:
            raise ConfigError(f"{loc('scenario')}: [scenario] {req} is required")
    if sc["kind"] not in KINDS:
        raise ConfigError(f"{loc('scenario', 'kind')}: unknown kind {sc['kind']!r}; "
                          f"expected one of {KINDS}")
    outputs = sc.get("outputs", OUTPUTS)
    bad = [o for o in outputs if o not in OUTPUTS]
    if bad:
        raise ConfigError(f"{loc('scenario', 'outputs')}: unknown output(s) {bad}; "
                          f"expected a subset of {OUTPUTS}")
    if sc.get("n_shots", 100) < 1:
        raise ConfigError(f"{loc('scenario', 'n_shots')}: n_shots must be >= 1")

    sweep = None
    if "sweep" in data:
        sw = data["sweep"]
        path = sw.get("parameter", "")
        parts = path.split(".")
        if len(parts) != 2 or parts[1] not in SWEEPABLE.get(parts[0], ()):
            raise ConfigError(f"{loc('sweep', 'parameter')}: cannot sweep {path!r}; "
                              f"sweepable: {[f'{s}.{k}' for s in SWEEPABLE for k in SWEEPABLE[s]]}")
        if "values" in sw and "linspace" in sw:
            raise ConfigError(f"{loc('sweep')}: give either values or linspace, not both")
        if "linspace" in sw:
            ls = sw["linspace"]
            if len(ls) != 3 or ls[2] < 1 or ls[2] != int(ls[2]):
                raise ConfigError(f"{loc('sweep', 'linspace')}: expected start, stop, count")
            vals = tuple(np.linspace(ls[0], ls[1], int(ls[2])).tolist())
        else:
            vals = sw.get("values", ())
        if not vals:
            raise ConfigError(f"{loc('sweep')}: sweep values must be nonempty")
        sweep = (parts[0], parts[1], vals)

    est_opts = data.get("estimate", {})
    if est_opts.get("calibration", "data") not in ("data", "ideal"):
        raise ConfigError(f"{loc('estimate', 'calibration')}: calibration must be data or ideal")
    if 0 < est_opts.get("n_bootstrap", 0) < 100:
        raise ConfigError(f"{loc('estimate', 'n_bootstrap')}: n_bootstrap must be 0 or >= 100")

    try:
        fesh = ifo.FeshbachModel(**data.get("feshbach", {}))
    except ValueError as exc:
        raise ConfigError(f"{loc('feshbach')}: {exc}") from None

    scenario = Scenario(
        name=sc["name"],
        kind=sc["kind"],
        seed=int(sc.get("seed", 0) if seed is None else seed),
        n_shots=sc.get("n_shots", 100),
        outputs=tuple(outputs),
        sequence=data.get("sequence", {}),
        noise=data.get("noise", {}),
        feshbach=fesh,
        lattice=data.get("lattice"),
        sweep=sweep,
        estimate=est_opts,
        extra={k: v for k, v in data.items() if k in ("rabi", "slope", "histogram", "overlay",
                                                      "husimi")},
    )
    # Fail on bad sequence/noise values now rather than mid-run.
    scenario.sequence_config()
    scenario.noise_config(0)
    if scenario.kind == "echo_compare" and (
            sweep is None or sweep[:2] != ("sequence", "t_interrogation")):
        raise ConfigError(f"{loc('sweep')}: echo_compare needs a sweep over "
                          "sequence.t_interrogation")
    if scenario.kind == "decoherence" and (sweep is None or sweep[:2] != ("sequence", "b_field")):
        raise ConfigError(f"{loc('sweep')}: decoherence needs a sweep over sequence.b_field")
    return scenario


def load_scenario(path, seed=None):
    with open(path, "rb") as fh:
        raw = fh.read()
    return parse_scenario(raw.decode(), source=str(path), seed=seed), raw


# --- output helpers ---------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.10g}"
    return str(v)


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if math.isnan(obj) else round(float(obj), 12)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class _Writer:
    """Collects emitted files for the manifest, honouring the outputs list."""

    def __init__(self, scenario, out_dir):
        self.sc = scenario
        self.out = out_dir
        self.files = []

    def path(self, name):
        return os.path.join(self.out, name)

    def table(self, name, header, rows):
        if "csv" in self.sc.outputs or "svg" in self.sc.outputs:
            write_table(self.path(name), header, rows)
            self.files.append(name)

    def svg(self, name, csv_name, spec):
        if "svg" in self.sc.outputs:
            render_svg(self.path(csv_name), spec, self.path(name))
            self.files.append(name)

    def json(self, name, doc):
        if "json" in self.sc.outputs:
            with open(self.path(name), "w") as fh:
                json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
                fh.write("\n")
            self.files.append(name)


# --- pipelines --------------------------------------------------------------------

def _overrides(sc, value):
    if sc.sweep is None:
        return {}, {}
    section, key, _ = sc.sweep
    return ({key: value}, {}) if section == "sequence" else ({}, {key: value})


def _fit(sc, z1, z2, ids, index):
    samples = est.JointSamples(z1, z2, ids)
    calib = est.calibrate(samples) if sc.estimate.get("calibration", "data") == "data" \
        else est.IDENTITY
    wrap = sc.estimate.get("wrap", True)
    res = est.mle_fit(samples, calib, wrap=wrap)
    n_boot = sc.estimate.get("n_bootstrap", 0)
    if n_boot:
        res = est.bootstrap(res, calib, samples.m, n_boot,
                            seed=rng.derive_seed(sc.seed, "bootstrap", index), wrap=wrap)
    return samples, res


def _simulate_point(sc, index, seq_over=None, noise_over=None):
    seq = sc.sequence_config(seq_over)
    noise = sc.noise_config(index, noise_over)
    z1, z2, ids = ifo.simulate(seq, noise, sc.n_shots)
    return seq, noise, z1, z2, ids


def _run_gradiometer(sc, w):
    rows, summary = [], {}
    for i, (label, value) in enumerate(sc.points()):
        so, no = _overrides(sc, value)
        seq, noise, z1, z2, ids = _simulate_point(sc, i, so, no)
        samples, res = _fit(sc, z1, z2, ids, i)
        true = float(est.fold_phase((seq.delta) * seq.t_interrogation)) if not seq.echo else 0.0
        pred = float(ifo.predicted_sigma(seq.n_atoms, noise.sigma_bs2, seq.chi,
                                         seq.t_interrogation, noise.sigma_tech))
        rows.append((value if label else 0, res.delta_phi, res.sigma_delta_phi, res.se_delta_phi,
                     res.se_sigma, true, pred, res.ambiguity_flag))
        if sc.sweep is None:
            w.table("samples.csv", ["shot_id", "z1", "z2"],
                    zip(samples.shot_id, samples.z1, samples.z2))
            doc = res.to_document()
            doc.update(true_delta_phi=true, predicted_sigma=pred)
            w.json("estimate.json", doc)
            summary = doc
            plot_rows = [("data", a, b) for a, b in zip(samples.z1, samples.z2)]
            u = 2 * np.pi * np.arange(201) / 200
            cal = res.calibration
            curves = [("fit", res.delta_phi)]
            if res.bootstrap_delta_phi is not None:
                lo, hi = np.quantile(res.bootstrap_delta_phi, [0.05, 0.95])
                curves += [("lower", lo), ("upper", hi)]
            for name, d in curves:
                plot_rows += [(name, a, b) for a, b in zip(cal.c1 + cal.v1 * np.sin(u),
                                                         cal.c2 + cal.v2 * np.sin(u + d))]
            w.table("ellipse.csv", ["curve", "z1", "z2"], plot_rows)
            layers = [{"type": "scatter", "x": "z1", "y": "z2", "where": {"curve": "data"},
                       "label": "shots"},
                      {"type": "line", "x": "z1", "y": "z2", "where": {"curve": "fit"},
                       "label": "max-likelihood ellipse"}]
            for name in ("lower", "upper"):
                layers.append({"type": "line", "x": "z1", "y": "z2", "where": {"curve": name},
                               "color": "#999999"})
            w.svg("ellipse.svg", "ellipse.csv",
                  {"title": f"{sc.name}: dphi = {res.delta_phi:.3f} rad",
                   "xlabel": "z1", "ylabel": "z2", "aspect": "equal",
                   "xlim": [-1.1, 1.1], "ylim": [-1.1, 1.1], "layers": layers})
    if sc.sweep is not None:
        header = [sc.sweep[1], "delta_phi", "sigma", "se_delta_phi", "se_sigma",
                  "true_delta_phi", "predicted_sigma", "ambiguity_flag"]
        w.table("sweep.csv", header, rows)
        w.svg("sweep.svg", "sweep.csv",
              {"title": sc.name, "xlabel": sc.sweep[1], "ylabel": "rad",
               "layers": [{"type": "errorbar", "x": sc.sweep[1], "y": "sigma",
                           "yerr": "se_sigma", "label": "fitted sigma"},
                          {"type": "line", "x": sc.sweep[1], "y": "predicted_sigma",
                           "label": "noise model"}]})
        summary = {"points": len(rows)}
        w.json("summary.json", summary)
    return summary


def _double_well(sc):
    la = sc.lattice or {}
    depths = la.get("depths", lat.DEFAULT_DEPTHS_NK)
    waves = la.get("wavelengths", lat.DEFAULT_WAVELENGTHS_NM)
    if len(depths) != 3 or len(waves) != 3:
        raise ConfigError("lattice: depths and wavelengths need three entries each")
    return lat.central_double_well(depths, int(la.get("n_points", 20001)),
                                   la.get("harmonic_hz", 0.0), waves)


def _run_rabi(sc, w):
    r = sc.extra.get("rabi", {})
    j1 = r.get("tunneling_hz")
    summary = {}
    if j1 is None:
        if sc.lattice is None:
            raise ConfigError("rabi: give [rabi] tunneling_hz or a [lattice] section")
        _, modes = _double_well(sc)
        j1 = modes.tunneling_hz
        summary["lattice_tunneling_hz"] = j1
    times = np.linspace(r.get("t_start", 0.0), r.get("t_stop", 0.3), int(r.get("n_times", 31)))
    n = int(sc.sequence.get("n_atoms", 100))
    pts = ifo.rabi_scan(j1, times, n_shots=sc.n_shots, n_atoms=n, seed=sc.seed,
                        tunneling_hz_2=r.get("tunneling_hz_2"))
    exact = ifo.rabi_scan(j1, times, 0, n_atoms=n)
    z1 = [p.z1 for p in pts]
    fitted = ifo.fit_rabi_frequency(times, z1)
    w.table("rabi.csv", ["t", "z1", "z2", "z_expect"],
            [(p.t, p.z1, p.z2, e.z1) for p, e in zip(pts, exact)])
    summary.update(tunneling_hz=j1, rabi_hz=2 * j1, fitted_rabi_hz=fitted, n_atoms=n,
                   n_shots=sc.n_shots)
    w.json("summary.json", summary)
    w.svg("rabi.svg", "rabi.csv",
          {"title": f"{sc.name}: fitted {fitted:.2f} Hz", "xlabel": "t (s)", "ylabel": "z",
           "ylim": [-1.1, 1.1],
           "layers": [{"type": "scatter", "x": "t", "y": "z1", "label": "well 1"},
                      {"type": "scatter", "x": "t", "y": "z2", "label": "well 2"},
                      {"type": "line", "x": "t", "y": "z_expect", "label": "exact"}]})
    return summary


def _run_histogram(sc, w):
    n = int(sc.sequence.get("n_atoms", 1000))
    noise = sc.noise_config(0)
    g = rng.stream(sc.seed, "histogram")
    eta = noise.bs_angle_std * g.standard_normal(sc.n_shots)
    u = g.random(sc.n_shots)
    amp = tm._coherent_amplitudes(n, np.pi / 2 - eta, np.full(sc.n_shots, np.pi))
    z = tm.index_to_z(tm._sample_from_probs(np.abs(amp) ** 2, u), n)
    n_bins = int(sc.extra.get("histogram", {}).get("n_bins", 30))
    counts, edges = np.histogram(z, bins=n_bins)
    centers = 0.5 * (edges[1:] + edges[:-1])
    mu, sd = float(z.mean()), float(z.std(ddof=1))
    gauss = len(z) * (edges[1] - edges[0]) * np.exp(-0.5 * ((centers - mu) / sd) ** 2) \
        / (sd * math.sqrt(2 * math.pi))
    w.table("z.csv", ["shot_id", "z"], enumerate(z))
    w.table("histogram.csv", ["z", "count", "gaussian"], zip(centers, counts, gauss))
    summary = {"n_atoms": n, "n_shots": sc.n_shots, "mean": mu, "std": sd,
               "expected_std": math.sqrt(1 / n + noise.sigma_bs2), "sigma_bs2": noise.sigma_bs2}
    w.json("summary.json", summary)
    w.svg("histogram.svg", "histogram.csv",
          {"title": f"{sc.name}: width {sd:.3f}", "xlabel": "z", "ylabel": "shots",
           "layers": [{"type": "scatter", "x": "z", "y": "count", "label": "counts"},
                      {"type": "line", "x": "z", "y": "gaussian", "label": "gaussian"}]})
    return summary


def _run_slope(sc, w):
    s = sc.extra.get("slope", {})
    windows = s.get("windows", (0.020, 0.045, 0.085))
    half = s.get("half_width", 0.004)
    k = int(s.get("points_per_window", 5))
    rows, ts, ph = [], [], []
    idx = 0
    for wi, c in enumerate(windows):
        for t in np.linspace(c - half, c + half, k):
            seq, noise, z1, z2, ids = _simulate_point(sc, idx, {"t_interrogation": float(t)})
            _, res = _fit(sc, z1, z2, ids, idx)
            rows.append(("data", wi, float(t), res.delta_phi, res.se_delta_phi))
            ts.append(float(t))
            ph.append(res.delta_phi)
            idx += 1
    slope, offset = est.fit_folded_phase_slope(ts, ph)
    seq = sc.sequence_config()
    for t in np.linspace(min(ts), max(ts), 400):
        rows.append(("model", -1, float(t), float(est.fold_phase(slope * t + offset)), 0.0))
    w.table("slope.csv", ["curve", "window", "t", "delta_phi", "se_delta_phi"], rows)
    sep = sc.sequence.get("separation_um")
    summary = {"slope_rad_per_s": slope, "offset_rad": offset, "true_slope_rad_per_s": seq.delta}
    if sep:
        omega = ifo.trap_omega_from_slope(slope, sep * 1e-6)
        summary["fitted_trap_hz"] = omega / (2 * math.pi)
        if "trap_hz" in sc.sequence:
            summary["configured_trap_hz"] = sc.sequence["trap_hz"]
            summary["relative_error"] = omega / (2 * math.pi) / sc.sequence["trap_hz"] - 1
    w.json("summary.json", summary)
    w.svg("slope.svg", "slope.csv",
          {"title": f"{sc.name}: slope {slope:.1f} rad/s", "xlabel": "T (s)",
           "ylabel": "|dphi| (rad)",
           "layers": [{"type": "errorbar", "x": "t", "y": "delta_phi", "yerr": "se_delta_phi",
                       "where": {"curve": "data"}, "label": "fitted"},
                      {"type": "line", "x": "t", "y": "delta_phi", "where": {"curve": "model"},
                       "label": "linear phase"}]})
    return summary


def _run_echo_compare(sc, w):
    rows = []
    idx = 0
    for _, t in sc.points():
        for echo in (False, True):
            pulses = max(1, int(sc.sequence.get("n_echo_pulses", 1))) if echo else 0
            _, _, z1, z2, ids = _simulate_point(
                sc, idx, {"t_interrogation": t, "echo": echo, "n_echo_pulses": pulses})
            _, res = _fit(sc, z1, z2, ids, idx)
            rows.append((t, "echo" if echo else "plain", res.sigma_delta_phi, res.se_sigma,
                         res.delta_phi))
            idx += 1
    w.table("echo.csv", ["t", "mode", "sigma", "se_sigma", "delta_phi"], rows)
    plain = [r[2] for r in rows if r[1] == "plain"]
    echo = [r[2] for r in rows if r[1] == "echo"]
    summary = {"t": [r[0] for r in rows if r[1] == "plain"], "sigma_plain": plain,
               "sigma_echo": echo, "echo_below_all": all(e < p for e, p in zip(echo, plain))}
    w.json("summary.json", summary)
    w.svg("echo.svg", "echo.csv",
          {"title": sc.name, "xlabel": "T (s)", "ylabel": "sigma (rad)",
           "layers": [{"type": "errorbar", "x": "t", "y": "sigma", "yerr": "se_sigma",
                       "where": {"mode": "plain"}, "label": "gradiometer"},
                      {"type": "errorbar", "x": "t", "y": "sigma", "yerr": "se_sigma",
                       "where": {"mode": "echo"}, "label": "spin echo"}]})
    return summary


def _run_decoherence(sc, w):
    rows = []
    for i, (_, b) in enumerate(sc.points()):
        seq, noise, z1, z2, ids = _simulate_point(sc, i, {"b_field": b})
        _, res = _fit(sc, z1, z2, ids, i)
        rows.append(("data", b, res.sigma_delta_phi, res.se_sigma))
    seq0 = sc.sequence_config()
    ov = sc.extra.get("overlay", {})
    bs = sc.sweep[2]
    grid = np.linspace(min(bs), max(bs), int(ov.get("n_points", 101)))
    for s2 in ov.get("sigma_bs2_values", (0.0, 0.004)):
        for st in ov.get("sigma_tech_values", (0.0, 0.15)):
            name = f"model bs2={s2:g} tech={st:g}"
            for b in grid:
                chi = float(ifo.chi_of_b(sc.feshbach, b))
                rows.append((name, float(b), float(ifo.predicted_sigma(
                    seq0.n_atoms, s2, chi, seq0.t_interrogation, st)), 0.0))
    w.table("decoherence.csv", ["curve", "b_field", "sigma", "se_sigma"], rows)
    layers = [{"type": "errorbar", "x": "b_field", "y": "sigma", "yerr": "se_sigma",
               "where": {"curve": "data"}, "label": "simulated"}]
    for name in dict.fromkeys(r[0] for r in rows if r[0] != "data"):
        layers.append({"type": "line", "x": "b_field", "y": "sigma", "where": {"curve": name},
                       "label": name[6:]})
    w.svg("decoherence.svg", "decoherence.csv",
          {"title": sc.name, "xlabel": "B (G)", "ylabel": "sigma (rad)", "layers": layers})

    h = sc.extra.get("husimi", {})
    hb = h.get("b_field", max(bs))
    chi = float(ifo.chi_of_b(sc.feshbach, hb))
    state = tm.oat_evolve(tm.coherent_state(seq0.n_atoms, np.pi / 2, np.pi), chi,
                          seq0.t_interrogation)
    # A patch around the initial direction; the full sphere is unresolvable at large N.
    w_th = min(np.pi / 2, h.get("theta_width", 0.25))
    w_phi = min(np.pi, h.get("phi_width", 0.5))
    th, phi, q = tm.husimi_grid(state, int(h.get("n_theta", 81)), int(h.get("n_phi", 121)),
                                theta_range=(np.pi / 2 - w_th, np.pi / 2 + w_th),
                                phi_range=(np.pi - w_phi, np.pi + w_phi))
    if "csv" in sc.outputs:
        tm.husimi_to_csv(w.path("husimi.csv"), th, phi, q)
        w.files.append("husimi.csv")
    summary = {"b_field": list(bs), "sigma": [r[2] for r in rows if r[0] == "data"],
               "husimi_b_field": hb, "husimi_integral": tm.husimi_integral(th, phi, q)}
    w.json("summary.json", summary)
    return summary


def _run_lattice(sc, w):
    pot, modes = _double_well(sc)
    pl, pr = lat.side_fractions(modes)
    waves = (sc.lattice or {}).get("wavelengths", lat.DEFAULT_WAVELENGTHS_NM)
    if "csv" in sc.outputs or "svg" in sc.outputs:
        pot.to_csv(w.path("potential.csv"))
        modes.to_csv(w.path("modes.csv"))
        w.files += ["potential.csv", "modes.csv"]
    summary = {"tunneling_hz": modes.tunneling_hz, "rabi_hz": modes.rabi_hz,
               "well_separation_um": modes.well_separation, "barrier_x_um": modes.barrier_x,
               "side_fraction_left": pl, "side_fraction_right": pr,
               "beat_period_12_nm": lat.beat_period(waves[0], waves[1]),
               "beat_period_13_nm": lat.beat_period(waves[0], waves[2]),
               "warnings": list(modes.warnings)}
    w.json("summary.json", summary)
    w.svg("potential.svg", "potential.csv",
          {"title": sc.name, "xlabel": "x (um)", "ylabel": "V (nK)",
           "layers": [{"type": "line", "x": "x_um", "y": "v_nK"}]})
    w.svg("modes.svg", "modes.csv",
          {"title": f"{sc.name}: J = {modes.tunneling_hz:.3g} Hz", "xlabel": "x (um)",
           "ylabel": "psi", "layers": [{"type": "line", "x": "x_um", "y": "psi_l", "label": "L"},
                                       {"type": "line", "x": "x_um", "y": "psi_r",
                                        "label": "R"}]})
    return summary


_PIPELINES = {
    "gradiometer": _run_gradiometer, "rabi": _run_rabi, "histogram": _run_histogram,
    "slope": _run_slope, "echo_compare": _run_echo_compare, "decoherence": _run_decoherence,
    "lattice": _run_lattice,
}


def default_out_dir(name):
    return os.path.join(os.environ.get("DWGRAD_OUT", "dwgrad_out"), name)


def execute(scenario, raw_bytes, out_dir=None):
    """Run a parsed scenario and write artifacts plus ``manifest.json``."""
    out_dir = out_dir or default_out_dir(scenario.name)
    os.makedirs(out_dir, exist_ok=True)
    w = _Writer(scenario, out_dir)
    summary = _PIPELINES[scenario.kind](scenario, w)
    manifest = RunManifest(
        name=scenario.name,
        seed=scenario.seed,
        version=__version__,
        timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        digest=hashlib.sha256(raw_bytes).hexdigest(),
        files=tuple(w.files),
        out_dir=out_dir,
        summary=summary,
    )
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        fh.write(manifest.to_json())
    return manifest


def run_scenario(config_path, out_dir=None, seed=None):
    scenario, raw = load_scenario(config_path, seed=seed)
    return execute(scenario, raw, out_dir)
