"""Acceptance criteria 1-10, one test each, each printing a PASS/FAIL line."""
import filecmp
import json
import math
import os

import numpy as np
import pytest
from scipy import integrate

from conftest import ACCEPTANCE_LINES
from dwgrad import estimate as E
from dwgrad import interferometer as I
from dwgrad import lattice as L
from dwgrad import twomode as T
from dwgrad.presets import preset_text, presets
from dwgrad.scenario import execute, parse_scenario


def report(n, title, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def preset_runs(tmp_path_factory):
    """Every preset run twice with its default seed."""
    root = tmp_path_factory.mktemp("presets")
    runs = {}
    for name in presets():
        text = preset_text(name)
        dirs = []
        for rep in ("a", "b"):
            out = root / rep / name
            execute(parse_scenario(text, source=name), text.encode(), str(out))
            dirs.append(out)
        runs[name] = dirs
    return runs


def test_criterion_1_noise_formula():
    got = I.predicted_sigma(3000, 0.004, 0.0, 0.07, 0.15)
    floor = I.predicted_sigma(3000, 0.004, 0.0, 0.07, 0.0)
    hand = math.sqrt(2 / 3000 * (1 + 0.004))
    ok = abs(got - 0.152) <= 1e-3 and abs(floor - hand) <= 1e-12
    report(1, "noise formula plug-in", ok, f"sigma={got:.5f}, floor err={abs(floor - hand):.1e}")


def test_criterion_2_monte_carlo_vs_formula():
    t = 0.02
    worst, rows = 0.0, []
    for n in (100, 300):
        for s2 in (0.0, 0.004):
            for c in (0.0, 0.2, 0.5):
                for tech in (0.0, 0.15):
                    chi = c / n / t
                    seq = I.SequenceConfig(n, t, delta=0.8 / t, chi=chi)
                    noise = I.NoiseConfig(sigma_bs2=s2, sigma_tech=tech,
                                          seed=1000 + len(rows))
                    z1, z2, ids = I.simulate(seq, noise, 10_000)
                    fit = E.mle_fit(E.JointSamples(z1, z2, ids), E.IDENTITY)
                    pred = I.predicted_sigma(n, s2, chi, t, tech)
                    rel = fit.sigma_delta_phi / pred - 1
                    rows.append((n, s2, c, tech, rel))
                    worst = max(worst, abs(rel))
    for r in rows:
        print("  N=%d s_bs2=%.3f chiT*N=%.1f s_tech=%.2f rel=%+.3f" % r)
    report(2, "Monte Carlo sigma vs noise formula", worst <= 0.10,
           f"{len(rows)} configs, worst relative deviation {worst:.3f}")


def test_criterion_3_ellipse_identity():
    dphis = np.linspace(-math.pi, math.pi, 22)[1:-1]
    worst_res, worst_fit = 0.0, 0.0
    for d in dphis:
        z1, z2 = E.ellipse_points(d, n=200)
        worst_res = max(worst_res, np.abs(E.ellipse_residual(z1, z2, d)).max())
        fit = E.mle_fit(E.JointSamples(z1, z2), E.IDENTITY)
        worst_fit = max(worst_fit, abs(fit.delta_phi - float(E.fold_phase(d))))
    ok = worst_res < 1e-12 and worst_fit <= 1e-3
    report(3, "ellipse identity and noiseless fit", ok,
           f"max residual {worst_res:.1e}, max |dphi| error {worst_fit:.1e}")


def test_criterion_4_round_trip():
    lines, ok_all = [], True
    for d in (0.5, 1.0, 2.5):
        for s in (0.1, 0.3):
            hits = 0
            for rep in range(100):
                data = E.sample_joint(d, s, m=1000, seed=4000 + int(10 * d) + int(100 * s),
                                      index=rep)
                r = E.bootstrap(E.mle_fit(data, E.IDENTITY), E.IDENTITY, n_resamples=100,
                                seed=rep)
                hits += (abs(r.delta_phi - d) <= 3 * r.se_delta_phi
                         and abs(r.sigma_delta_phi - s) <= 3 * r.se_sigma)
            ok_all &= hits >= 95
            lines.append(f"({d},{s}):{hits}")
    report(4, "estimator round trip within 3 bootstrap SE", ok_all, " ".join(lines))


def test_criterion_5_normalization():
    worst = 0.0
    for sigma in (0.1, 0.3):
        for d in (0.3, 1.5, 2.8):
            def f(b, a):
                return math.exp(E.log_density(math.sin(a), math.sin(b), d, sigma)) \
                    * math.cos(a) * math.cos(b)

            val, _ = integrate.dblquad(f, -math.pi / 2, math.pi / 2, -math.pi / 2, math.pi / 2,
                                       epsabs=1e-8, epsrel=1e-8)
            worst = max(worst, abs(val - 1))
    report(5, "likelihood normalization", worst <= 1e-3, f"max |integral - 1| = {worst:.1e}")


def test_criterion_6_rotation_oracles():
    err_rot = 0.0
    for a in np.linspace(-3, 3, 13):
        c, s = math.cos(a), math.sin(a)
        r = -1j * s / math.sqrt(2)
        oracle = np.array([[(1 + c) / 2, r, (c - 1) / 2], [r, c, r], [(c - 1) / 2, r, (1 + c) / 2]])
        got = np.column_stack([T.rotate_x(T.DickeState(2, e), a).amplitudes for e in np.eye(3)])
        err_rot = max(err_rot, np.abs(got - oracle).max())
    omega = 2 * math.pi * 13.4
    times = np.linspace(0, 0.3, 31)
    err_rabi = max(abs(T.mean_z(T.rotate_x(T.pole_state(100), omega * t)) - math.cos(omega * t))
                   for t in times)
    err_oat = 0.0
    for chit in (0.0, 0.005, 0.02, 0.05, 0.1):
        st = T.oat_evolve(T.coherent_state(100, math.pi / 2, 0.0), chit, 1.0)
        err_oat = max(err_oat, abs(T.moments(st).contrast - math.cos(chit) ** 99))
    ok = err_rot <= 1e-12 and err_rabi <= 1e-8 and err_oat <= 1e-6
    report(6, "rotation, Rabi and twisting oracles", ok,
           f"j=1 {err_rot:.1e}, Rabi {err_rabi:.1e}, contrast {err_oat:.1e}")


def test_criterion_7_spin_echo(preset_runs):
    worst = 0.0
    for eps in (0.0, 13.0, -71.0):
        for delta in (0.0, 40.0, 233.07):
            for t in (0.02, 0.2):
                seq = I.SequenceConfig(300, t, epsilon=eps, delta=delta, echo=True)
                worst = max(worst, *map(abs, I.expected_imbalances(seq)))
    summary = json.loads((preset_runs["fig5_echo"][0] / "summary.json").read_text())
    below = summary["echo_below_all"]
    pairs = ", ".join(f"{e:.3f}<{p:.3f}" for e, p in zip(summary["sigma_echo"],
                                                        summary["sigma_plain"]))
    report(7, "spin echo cancellation", worst <= 1e-10 and below,
           f"max |<z>| {worst:.1e}; echo vs plain sigma {pairs}")


def test_criterion_8_gradiometer_slope(preset_runs):
    summary = json.loads((preset_runs["fig3_slope"][0] / "summary.json").read_text())
    rel = summary["relative_error"]
    report(8, "trap frequency from the phase slope", abs(rel) <= 0.05,
           f"fitted {summary['fitted_trap_hz']:.3f} Hz vs {summary['configured_trap_hz']} Hz, "
           f"rel {rel:+.4f}")


def test_criterion_9_eigensolver():
    pot = L.build_potential([L.LatticeSpec(1064.0, 0.0)], -15, 15, 30001, harmonic_hz=100.0)
    e = L.solve_modes(pot, n_states=6).energies_hz
    err_h = np.abs(e / ((np.arange(6) + 0.5) * 100.0) - 1).max()
    _, modes = L.central_double_well()
    gs, ex = modes.psi_gs, modes.psi_ex
    parity = max(abs(np.trapezoid(gs * gs[::-1], modes.x) - 1),
                 abs(np.trapezoid(ex * ex[::-1], modes.x) + 1))
    js = [L.central_double_well((370, 400, d), n_points=4001)[1].tunneling_hz
          for d in np.linspace(150, 330, 10)]
    mono = bool(np.all(np.diff(js) < 0))
    beat = L.beat_period(1013, 1064)
    ok = err_h <= 1e-6 and parity < 1e-8 and mono and round(beat) == 10567
    report(9, "eigensolver oracles", ok,
           f"harmonic {err_h:.1e}, parity {parity:.1e}, monotone {mono}, beat {beat:.1f} nm")


def test_criterion_10_determinism(preset_runs):
    bad, n = [], 0
    for name, (a, b) in preset_runs.items():
        files = sorted(f for f in os.listdir(a) if f.endswith((".csv", ".svg")))
        n += len(files)
        _, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
        bad += [f"{name}/{f}" for f in mismatch + errors]
    report(10, "byte-identical preset artifacts", n > 0 and not bad,
           f"{n} CSV/SVG files compared, mismatches: {bad or 'none'}")
