"""Physical constants and unit helpers.

Positions are in micrometres and energies in Hz (E/h) or nK (E/k_B)
unless a function says otherwise.
"""
import numpy as np

H = 6.62607015e-34
HBAR = H / (2 * np.pi)
KB = 1.380649e-23
AMU = 1.66054e-27
MASS_K39 = 39 * AMU

NK_TO_HZ = KB * 1e-9 / H


def nk_to_hz(e_nk):
    return np.asarray(e_nk) * NK_TO_HZ


def hz_to_nk(e_hz):
    return np.asarray(e_hz) / NK_TO_HZ
