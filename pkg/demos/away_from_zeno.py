"""Charge transport with a finite number of measurements per step.

Run with ``python3 demos/away_from_zeno.py``.  For the perfect-switching
cycle ``T = 4 pi`` the exact correlation-matrix engine is compared with the
first-order near-Zeno transition matrix and with the Zeno limit, and the
share of the charge carried by each crossing step is listed.
"""

import numpy as np

from zenochiral import nearzeno, quantum, zeno
from zenochiral.lattice import LatticeSpec, build_lattice, build_schedule, default_cut, flow_cut
from zenochiral.quantum import ExactEngine, ProtocolParams

CYCLES = 6


def main():
    lat = build_lattice(LatticeSpec("lieb", 4, 8, "open"))
    sched = build_schedule(lat)
    g0 = quantum.lower_half_fill(lat)
    cut = flow_cut(lat, default_cut(lat), sched)
    s1, s2 = (s - 1 for s in cut.steps)
    zeno_flow = zeno.cut_flow(lat, sched, cut, 1.0, CYCLES, g0).sum() / CYCLES
    print(f"{lat.n_sites} sites, cut at x = {cut.x_cut}, Zeno-limit flow {zeno_flow:.4f} per cycle")
    print("    n    exact  near-Zeno  share(step %d)  share(step %d)" % cut.steps)
    for n in (8, 16, 32, 64, 128, 256, 512):
        prm = ProtocolParams(4 * np.pi, n)
        per_step = np.zeros(sched.period)
        state = {"prev": g0}

        def record(step, dens):
            per_step[step - 1] += quantum.flow_sim(state["prev"], dens, cut)
            state["prev"] = dens

        ExactEngine(lat, sched, prm).run(quantum.diagonal_state(g0), CYCLES, on_step=record)
        exact = per_step.sum() / CYCLES
        nz = nearzeno.nz_flow(lat, sched, prm, CYCLES, g0, left=cut.left) if n >= 64 else float("nan")
        share = per_step / per_step.sum()
        print(f"{n:5d}  {exact:7.4f}  {nz:9.4f}  {share[s1]:13.3f}  {share[s2]:13.3f}")


if __name__ == "__main__":
    main()
