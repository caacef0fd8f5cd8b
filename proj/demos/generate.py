#!/usr/bin/env python3
"""Writes the sample inputs in this directory. Run from anywhere."""

import json
import math
import os

HERE = os.path.dirname(os.path.abspath(__file__))
TAU = 2.0 * math.pi


def write(name, data):
    with open(os.path.join(HERE, name), "w") as f:
        json.dump(data, f, indent=1)
        f.write("\n")


def grid(n, t0, t1):
    return [t0 + (t1 - t0) * i / (n - 1) for i in range(n)]


def curve(f, d1, d2, t):
    return {"t": t, "points": [f(s) for s in t], "d1": [d1(s) for s in t], "d2": [d2(s) for s in t]}


def moved(c, p, theta):
    """Image of a curve under rotation by theta followed by left translation by p."""
    ca, sa = math.cos(theta), math.sin(theta)
    rot = lambda v: [ca * v[0] - sa * v[1], sa * v[0] + ca * v[1], v[2]]
    pts, d1, d2 = [], [], []
    for q, v, a in zip(c["points"], c["d1"], c["d2"]):
        q, v, a = rot(q), rot(v), rot(a)
        pts.append([p[0] + q[0], p[1] + q[1], p[2] + q[2] + p[1] * q[0] - p[0] * q[1]])
        d1.append([v[0], v[1], v[2] + p[1] * v[0] - p[0] * v[1]])
        d2.append([a[0], a[1], a[2] + p[1] * a[0] - p[0] * a[1]])
    return {"t": c["t"], "points": pts, "d1": d1, "d2": d2}


def patch(n, h, jet):
    pts, fu, fv, fuu, fuv = [], [], [], [], []
    for j in range(n):
        for i in range(n):
            f = jet(i * h, j * h)
            for dst, val in zip((pts, fu, fv, fuu, fuv), f):
                dst.append(val)
    return {"u0": 0.0, "du": h, "nu": n, "v0": 0.0, "dv": h, "nv": n, "points": pts,
            "partials": {"Fu": fu, "Fv": fv, "Fuu": fuu, "Fuv": fuv}}


def grid_header(n, h):
    return {"u0": 0.0, "du": h, "nu": n, "v0": 0.0, "dv": h, "nv": n}


def main():
    t = grid(401, 0.0, TAU)
    circle = curve(lambda s: [math.cos(s), math.sin(s), 0.0],
                   lambda s: [-math.sin(s), math.cos(s), 0.0],
                   lambda s: [-math.cos(s), -math.sin(s), 0.0], t)
    write("circle.json", circle)
    write("circle_moved.json", moved(circle, [1.0, -2.0, 0.5], 1.1))
    write("line.json", curve(lambda s: [s, 0.0, 0.0], lambda s: [1.0, 0.0, 0.0], lambda s: [0.0, 0.0, 0.0], t))
    write("vertical.json", curve(lambda s: [0.0, 0.0, s], lambda s: [0.0, 0.0, 1.0],
                                 lambda s: [0.0, 0.0, 0.0], grid(51, 0.0, 1.0)))
    write("frame.json", {"p": [1.0, -2.0, 0.5], "theta": 1.1})

    n = 1001
    with open(os.path.join(HERE, "signature_sincos.csv"), "w") as f:
        f.write("s,k,tau\n")
        for s in grid(n, 0.0, TAU):
            f.write("%r,%r,%r\n" % (s, math.sin(s), math.cos(s)))

    write("geodesic_closed.json", {"closed_form": {"c3": -1.0, "a1": 1.0}, "t0": 0.0, "t1": TAU, "n": 1001})
    write("geodesic_hamiltonian.json",
          {"hamiltonian": {"x": [0.0, 1.0, 0.0], "xi": [0.5, 0.0, 0.5]}, "t_end": 1.0, "steps": 1000})

    m, h = 41, 0.05
    write("plane_patch.json", patch(m, h, lambda u, v: (
        [u, 0.0, v], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0])))
    write("cylinder_patch.json", patch(m, h, lambda u, v: (
        [math.cos(u), math.sin(u), v - u], [-math.sin(u), math.cos(u), -1.0], [0.0, 0.0, 1.0],
        [-math.cos(u), -math.sin(u), 0.0], [0.0, 0.0, 0.0])))
    write("cylinder_raw_patch.json", patch(m, h, lambda u, v: (
        [math.cos(u), math.sin(u), v], [-math.sin(u), math.cos(u), 0.0], [0.0, 0.0, 1.0],
        [-math.cos(u), -math.sin(u), 0.0], [0.0, 0.0, 0.0])))

    size = m * m
    cyl = dict(grid_header(m, h), a=[0.0] * size, b=[0.0] * size, c=[1.0] * size, l=[1.0] * size, m=[0.0] * size)
    write("cylinder_coefficients.json", cyl)
    tampered = dict(cyl)
    tampered["b"] = list(cyl["b"])
    tampered["b"][20 * m + 20] += 0.1
    write("tampered_coefficients.json", tampered)

    flat = dict(grid_header(m, h), P1=[1.0] * size, Q1=[0.0] * size, P2=[0.0] * size, Q2=[1.0] * size,
                alpha=[0.0] * size, l=[1.0] * size)
    write("flat_invariants.json", flat)
    broken = dict(flat)
    broken["l"] = [(k // m) * h for k in range(size)]
    write("broken_invariants.json", broken)

    with open(os.path.join(HERE, "malformed.json"), "w") as f:
        f.write('{"t": [0, 1, 2], "points": [[0, 0, 0], [1, 0\n')


if __name__ == "__main__":
    main()
