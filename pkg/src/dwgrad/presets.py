"""Built-in scenarios reproducing the figure protocols at desk scale."""
from .errors import ConfigError

_FESHBACH = """
[feshbach]
b_min = 350.45
slope_a = 0.56
"""

PRESETS = {
    "fig2_rabi": """
[scenario]
name = fig2_rabi
kind = rabi
seed = 1
n_shots = 3

[sequence]
n_atoms = 3000

[lattice]
# Barrier depth chosen so the Rabi frequency 2J is close to 13.4 Hz.
depths = 370, 400, 151.5
wavelengths = 1013, 1064, 1120
n_points = 8001

[rabi]
t_start = 0
t_stop = 0.25
n_times = 26
""",
    "fig2_histogram": """
[scenario]
name = fig2_histogram
kind = histogram
seed = 1
n_shots = 400

[sequence]
n_atoms = 3000

[noise]
# Width sqrt(1/N + sigma_bs2) = 0.078 at N = 3000.
sigma_bs2 = 0.0058

[histogram]
n_bins = 25
""",
    "fig3_ellipse": """
[scenario]
name = fig3_ellipse
kind = gradiometer
seed = 1
n_shots = 30

[sequence]
n_atoms = 3000
t_interrogation = 0.045
trap_hz = 18.5
separation_um = 5.3
b_field = 350.45

[noise]
sigma_bs2 = 0.004
sigma_tech = 0.15

[estimate]
n_bootstrap = 200
""" + _FESHBACH,
    "fig3_slope": """
[scenario]
name = fig3_slope
kind = slope
seed = 1
n_shots = 30

[sequence]
n_atoms = 1000
trap_hz = 18.5
separation_um = 5.3
b_field = 350.45

[noise]
sigma_bs2 = 0.004
sigma_tech = 0.15

[slope]
windows = 0.020, 0.045, 0.085
half_width = 0.004
points_per_window = 5

[estimate]
n_bootstrap = 100
""" + _FESHBACH,
    "fig4_decoherence": """
[scenario]
name = fig4_decoherence
kind = decoherence
seed = 1
n_shots = 30

[sequence]
n_atoms = 3000
t_interrogation = 0.070
trap_hz = 18.5
separation_um = 5.3

[noise]
sigma_bs2 = 0.004
sigma_tech = 0.15

[sweep]
parameter = sequence.b_field
linspace = 350.05, 350.85, 9

[estimate]
n_bootstrap = 100

[overlay]
sigma_bs2_values = 0, 0.004
sigma_tech_values = 0, 0.15

[husimi]
b_field = 350.65
""" + _FESHBACH,
    "fig5_echo": """
[scenario]
name = fig5_echo
kind = echo_compare
seed = 1
n_shots = 10000

[sequence]
n_atoms = 300
trap_hz = 18.5
separation_um = 5.3
b_field = 350.45

[noise]
sigma_bs2 = 0.004
sigma_tech = 0.15

[sweep]
parameter = sequence.t_interrogation
values = 0.1, 0.2, 0.4, 0.6, 0.8
""" + _FESHBACH,
    "lattice_double_well": """
[scenario]
name = lattice_double_well
kind = lattice
seed = 0

[lattice]
depths = 370, 400, 240
wavelengths = 1013, 1064, 1120
n_points = 20001
""",
}


def presets():
    return sorted(PRESETS)


def preset_text(name):
    try:
        return PRESETS[name].lstrip()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {presets()}") from None
