"""Bulk structure of the Zeno cycle in momentum space.

Run with ``python3 demos/bloch_structure.py``.  At perfect switching the bulk
cycle is a permutation of period five; away from it the spectrum stays
inside the unit disk except for the conserved uniform mode.
"""

import numpy as np

from zenochiral import zeno


def main():
    worst = 0.0
    for kx in np.linspace(-np.pi, np.pi, 9):
        for ky in np.linspace(-np.pi, np.pi, 9):
            r = zeno.bloch_cycle(np.array([kx, ky]), 0.3, 1.0)
            worst = max(worst, np.abs(np.linalg.matrix_power(r, 5) - np.eye(6)).max())
    print(f"p = 1: max |R^5 - I| over a 9 x 9 k grid = {worst:.1e}")
    print("\n    p   largest |eigenvalue| away from the uniform mode")
    for p in (0.1, 0.3, 0.5, 0.7, 0.9):
        rep = zeno.spectral_gap_check(p, m=16)
        print(f"{p:5.2f}   {rep.max_radius:.5f}")


if __name__ == "__main__":
    main()
