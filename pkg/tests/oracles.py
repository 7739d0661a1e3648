"""Independent brute-force references shared by the unit and acceptance tests."""

import numpy as np

from ambi360.volume import ball_mask


def brute_centroids(data):
    """Connected components by flood fill, centroids by a plain running sum."""
    res = data.shape[0]
    seen = np.zeros(data.shape, bool)
    out = []
    for start in zip(*np.nonzero(data)):
        if seen[start]:
            continue
        stack, members = [start], []
        seen[start] = True
        while stack:
            z, y, x = stack.pop()
            members.append(z * res * res + y * res + x)
            for dz in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        q = (z + dz, y + dy, x + dx)
                        if all(0 <= c < res for c in q) and data[q] != 0 and not seen[q]:
                            seen[q] = True
                            stack.append(q)
        mass = sx = sy = sz = 0.0
        for i in sorted(members):
            z, rem = divmod(i, res * res)
            y, x = divmod(rem, res)
            p = float(data[z, y, x])
            mass += p
            sx += p * (-0.5 + (x + 0.5) / res)
            sy += p * (-0.5 + (y + 0.5) / res)
            sz += p * (-0.5 + (z + 0.5) / res)
        out.append((mass, min(members), (sx / mass, sy / mass, sz / mass)))
    out.sort(key=lambda t: (-t[0], t[1]))
    return out


def random_sparse_volume(rng, res=32, blobs=4):
    data = np.zeros((res,) * 3, np.float32)
    for _ in range(blobs):
        c = rng.integers(2, res - 4, 3)
        size = rng.integers(1, 4, 3)
        data[c[0]:c[0] + size[0], c[1]:c[1] + size[1], c[2]:c[2] + size[2]] = rng.uniform(0.05, 1.0, size)
    return data * ball_mask(res)
