#!/usr/bin/env python3
"""Offline synthesis of the shipped case-study observer certificate.

Solves the circle-criterion observer design LMI at the four vertex pairs of
[1, 50]^2 with kappa_x fixed at 0.1, minimising kappa_v + 5 kappa_w. Gains are
affine in the parameter estimate: L(p) = L0 + p L1, K(p) = K0 + p K1. The
change of variables Y = P L, Z = M K keeps every block linear.

A strict margin `--margin` is imposed on both P and the design matrix so the
committed certificate passes the Rust checker with room to spare.

Usage: python3 tools/synthesize_certificate.py > crates/core/data/case_study_certificate.json
"""
import argparse
import json

import cvxpy as cp
import numpy as np

TS = 0.01
LIPSCHITZ = 2.0
VERTICES = (1.0, 50.0)
KAPPA_X = 0.1


def a_mat(p):
    return np.array([[1.0, TS], [0.0, 1.0]]) - p * np.array([[0.5, 0.5], [1.0, 1.0]]) * TS


def g_mat(p):
    return p * np.array([[TS / 2.0], [TS]])


def b_mat(p):
    return np.array([[TS], [TS]]) + p * np.array([[TS], [-TS]])


H = np.array([[1.0, 1.0]])
C = np.eye(2)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--margin", type=float, default=1e-3)
    args = parser.parse_args()
    eps = args.margin

    p_var = cp.Variable((2, 2), symmetric=True)
    y0, y1 = cp.Variable((2, 2)), cp.Variable((2, 2))
    z0, z1 = cp.Variable((1, 2)), cp.Variable((1, 2))
    m = cp.Variable()
    kv, kw = cp.Variable(), cp.Variable()

    cons = [p_var >> eps * np.eye(2), m >= eps]
    for p in VERTICES:
        for ph in VERTICES:
            y = y0 + ph * y1
            z = z0 + ph * z1
            at_p = a_mat(ph).T @ p_var + C.T @ y.T
            mh = m * H + z @ C
            lower = [
                [-p_var],
                [-at_p, KAPPA_X / 2.0 * np.eye(2) - p_var / 2.0],
                [-g_mat(ph).T @ p_var, 0.5 * mh, -(m / LIPSCHITZ) * np.eye(1)],
                [b_mat(p).T @ p_var, np.zeros((1, 2)), np.zeros((1, 1)), -kv / 2.0 * np.eye(1)],
                [y.T, np.zeros((2, 2)), -0.5 * z.T, np.zeros((2, 1)), -kw / 2.0 * np.eye(2)],
            ]
            rows = []
            for i in range(5):
                rows.append([lower[i][j] if j <= i else lower[j][i].T for j in range(5)])
            s = cp.bmat(rows)
            cons.append((s + s.T) / 2.0 << -eps * np.eye(8))

    prob = cp.Problem(cp.Minimize(kv + 5.0 * kw), cons)
    prob.solve(solver="CLARABEL")

    pv = p_var.value
    pv = (pv + pv.T) / 2.0
    p_inv = np.linalg.inv(pv)
    mv = float(m.value)
    cert = {
        "P": pv.tolist(),
        "M": [[mv]],
        "kappa_x": KAPPA_X,
        "kappa_v": float(kv.value),
        "kappa_w": float(kw.value),
        "L0": (p_inv @ y0.value).tolist(),
        "L1": (p_inv @ y1.value).tolist(),
        "K0": (z0.value / mv).tolist(),
        "K1": (z1.value / mv).tolist(),
        "objective": float(kv.value) + 5.0 * float(kw.value),
        "solver_status": prob.status,
    }
    print(json.dumps(cert, indent=2))


if __name__ == "__main__":
    main()
