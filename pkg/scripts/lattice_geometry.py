#!/usr/bin/env python3
"""Beat-note geometry, double-well modes and tunneling versus barrier depth."""
import argparse

import numpy as np

from dwgrad import lattice as L


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--depths", type=float, nargs=3, default=L.DEFAULT_DEPTHS_NK)
    p.add_argument("--barrier-scan", type=float, nargs=3, default=(120, 330, 8),
                   metavar=("START", "STOP", "COUNT"))
    p.add_argument("--points", type=int, default=20001)
    args = p.parse_args()

    l1, l2, l3 = L.DEFAULT_WAVELENGTHS_NM
    print(f"beat period ({l1:.0f}, {l2:.0f}) nm: {L.beat_period(l1, l2):.1f} nm")
    print(f"beat period ({l1:.0f}, {l3:.0f}) nm: {L.beat_period(l1, l3):.1f} nm")

    _, modes = L.central_double_well(tuple(args.depths), n_points=args.points)
    pl, pr = L.side_fractions(modes)
    print(f"depths {args.depths} nK: E_gs={modes.e_gs:.2f} Hz E_ex={modes.e_ex:.2f} Hz "
          f"J={modes.tunneling_hz:.3f} Hz Rabi={modes.rabi_hz:.3f} Hz")
    print(f"well separation {modes.well_separation:.3f} um, localization {pl:.4f}/{pr:.4f}")
    for w in modes.warnings:
        print("warning:", w)

    start, stop, count = args.barrier_scan
    print("barrier_nK  rabi_Hz")
    for v3 in np.linspace(start, stop, int(count)):
        _, m = L.central_double_well((args.depths[0], args.depths[1], v3), n_points=args.points)
        print(f"{v3:10.1f}  {m.rabi_hz:.4f}")


if __name__ == "__main__":
    main()
