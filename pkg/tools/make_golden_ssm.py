"""Regenerate tests/data/ssm_golden_seed42.json.

Deliberately independent of ``ambi360.prediction``: scalar SplitMix64,
per-position loops for the convolutions, math.exp for the sigmoid. Only the
seed-derivation constants are shared. Run it once and commit the output;
the test compares the package against the frozen file.

    python tools/make_golden_ssm.py
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

SEED = 42
SSM_STREAM = 0x55D4_0000_0005_6647
MASK = (1 << 64) - 1
CHANNELS = (640, 128, 64, 1)
OUT = Path(__file__).resolve().parent.parent / "tests" / "data" / "ssm_golden_seed42.json"


def splitmix(state):
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


class Stream:
    def __init__(self, seed):
        self.state = seed

    def uniform(self):
        self.state, z = splitmix(self.state)
        return -0.05 + 0.1 * ((z >> 11) / 2.0 ** 53)


def blob_input():
    """Channel 0 carries a bright cell at (2, 4) with dimmer 4-neighbours."""
    x = np.zeros((7, 7, 640))
    x[2, 4, 0] = 1.0
    for r, c in ((1, 4), (3, 4), (2, 3), (2, 5)):
        x[r, c, 0] = 0.25
    return x


def conv(x, w):
    h, wd, _ = x.shape
    out = np.zeros((h, wd, len(w)))
    for i in range(h):
        for j in range(wd):
            for o in range(len(w)):
                acc = 0.0
                for di in range(3):
                    for dj in range(3):
                        ii, jj = i + di - 1, j + dj - 1
                        if 0 <= ii < h and 0 <= jj < wd:
                            acc += float(np.dot(x[ii, jj], w[o][:, di, dj]))
                out[i, j, o] = acc
    return out


def main() -> None:
    _, sub = splitmix((SEED ^ SSM_STREAM) & MASK)
    rng = Stream(sub)
    weights = []
    for c_in, c_out in zip(CHANNELS[:-1], CHANNELS[1:]):
        w = np.array([rng.uniform() for _ in range(c_out * c_in * 9)]).reshape(c_out, c_in, 3, 3)
        weights.append(w)
    gain = rng.uniform()
    x = blob_input()
    for k, w in enumerate(weights):
        x = conv(x, w)
        if k < len(weights) - 1:
            x = np.maximum(x, 0.0)
    act = gain * x[:, :, 0]
    probs = [[1.0 / (1.0 + math.exp(-a)) for a in row] for row in act]
    doc = {
        "seed": SEED,
        "input_channel0": blob_input()[:, :, 0].tolist(),
        "activation": act.tolist(),
        "map": probs,
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
