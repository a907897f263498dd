"""Regenerate the frozen value tables with policy iteration on an independently built model.

Run from the repository root: ``python3 tests/data/make_golden.py``. Nothing here
imports the package, so the tables check it against a separate implementation.
"""
import json
from pathlib import Path

import numpy as np

LAYOUT = ["SFFF", "FHFH", "FFFH", "HFFG"]
GAMMA = 0.95
DIRS = [(-1, 0), (1, 0), (0, -1), (0, 1)]  # up, down, left, right
SIDES = {0: (2, 3), 1: (2, 3), 2: (0, 1), 3: (0, 1)}


def model(p):
    h, w = len(LAYOUT), len(LAYOUT[0])
    n = h * w
    P = np.zeros((n, 4, n))
    R = np.zeros((n, 4))
    for r in range(h):
        for c in range(w):
            s = r * w + c
            if LAYOUT[r][c] in "GH":
                P[s, :, s] = 1.0
                continue
            for a in range(4):
                for d, q in ((a, p), (SIDES[a][0], (1 - p) / 2), (SIDES[a][1], (1 - p) / 2)):
                    nr, nc = r + DIRS[d][0], c + DIRS[d][1]
                    if not (0 <= nr < h and 0 <= nc < w):
                        nr, nc = r, c
                    t = nr * w + nc
                    P[s, a, t] += q
                    R[s, a] += q * {"G": 1.0, "H": -1.0}.get(LAYOUT[nr][nc], 0.0)
    return P, R


def policy_iteration(P, R, gamma):
    n = P.shape[0]
    pi = np.zeros(n, dtype=int)
    while True:
        Ppi = P[np.arange(n), pi]
        V = np.linalg.solve(np.eye(n) - gamma * Ppi, R[np.arange(n), pi])
        Q = R + gamma * P @ V
        new = Q.argmax(axis=1)
        # keep the current action unless another is strictly better
        keep = Q[np.arange(n), pi] >= Q.max(axis=1) - 1e-14
        new[keep] = pi[keep]
        if np.array_equal(new, pi):
            return V, Q
        pi = new


if __name__ == "__main__":
    out = {}
    for p in (0.7, 1.0):
        P, R = model(p)
        V, Q = policy_iteration(P, R, GAMMA)
        out[f"{p:g}"] = {"V": V.tolist(), "Q": Q.tolist()}
    doc = {"layout": LAYOUT, "gamma": GAMMA, "rewards": {"goal": 1.0, "hole": -1.0, "step": 0.0}, "values": out}
    Path(__file__).with_name("frozen_lake_values.json").write_text(json.dumps(doc, indent=1) + "\n")
