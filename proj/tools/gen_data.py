"""Regenerates the bundled OCP tables and the synthetic drive cycle in data/.

OCP fits are the NMC811 / graphite correlations published with the LG M50
parameter set (Chen et al., J. Electrochem. Soc. 167, 080534, 2020).
"""
import math
import pathlib
import random

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


def u_graphite(x):
    return (1.9793 * math.exp(-39.3631 * x) + 0.2482
            - 0.0909 * math.tanh(29.8538 * (x - 0.1234))
            - 0.04478 * math.tanh(14.9159 * (x - 0.2769))
            - 0.0205 * math.tanh(30.4444 * (x - 0.6103)))


def u_nmc(x):
    return (-0.8090 * x + 4.4875
            - 0.0428 * math.tanh(18.5138 * (x - 0.5542))
            - 17.7326 * math.tanh(15.7890 * (x - 0.3117))
            + 17.5842 * math.tanh(15.9308 * (x - 0.3120)))


def write_ocp(name, fn, n=201):
    with open(DATA / name, "w") as f:
        f.write("stoichiometry,ocp_V\n")
        for i in range(n):
            x = i / (n - 1)
            f.write(f"{x:.6f},{fn(x):.15f}\n")


def write_drive_cycle(length=1530, seed=7):
    # Piecewise segments of accelerate / cruise / regen / idle; net discharge.
    rng = random.Random(seed)
    currents = []
    while len(currents) < length:
        kind = rng.choices(["accel", "cruise", "regen", "idle"], [3, 4, 2, 1])[0]
        dur = rng.randint(5, 40)
        if kind == "accel":
            peak = rng.uniform(40.0, 120.0)
            seg = [peak * (k + 1) / dur for k in range(dur)]
        elif kind == "cruise":
            level = rng.uniform(10.0, 45.0)
            seg = [level + rng.uniform(-3.0, 3.0) for _ in range(dur)]
        elif kind == "regen":
            peak = rng.uniform(-80.0, -20.0)
            seg = [peak * (1.0 - k / dur) for k in range(dur)]
        else:
            seg = [0.0] * dur
        currents.extend(seg)
    currents = currents[:length]
    with open(DATA / "drive_cycle_synthetic.csv", "w") as f:
        f.write("t_s,current_A\n")
        for k, c in enumerate(currents):
            f.write(f"{k},{c:.3f}\n")


if __name__ == "__main__":
    write_ocp("ocp_nmc811.csv", u_nmc)
    write_ocp("ocp_graphite.csv", u_graphite)
    write_drive_cycle()
