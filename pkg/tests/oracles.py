"""Deliberately naive reference implementations used only by the tests.

None of these import the package internals they check; they are loops over
pixels written straight from the stated rules.
"""

from collections import deque
import math

import numpy as np

NEIGHBOURS = {
    4: [(-1, 0), (1, 0), (0, -1), (0, 1)],
    8: [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)],
}


def flood_fill(grid, connectivity=8, background=0):
    """Components of equal non-background value, numbered in raster order of first pixel."""
    grid = np.asarray(grid)
    h, w = grid.shape
    out = np.zeros((h, w), dtype=np.int64)
    n = 0
    for r in range(h):
        for c in range(w):
            if grid[r, c] == background or out[r, c]:
                continue
            n += 1
            val = grid[r, c]
            out[r, c] = n
            todo = deque([(r, c)])
            while todo:
                y, x = todo.popleft()
                for dy, dx in NEIGHBOURS[connectivity]:
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w and not out[yy, xx] and grid[yy, xx] == val:
                        out[yy, xx] = n
                        todo.append((yy, xx))
    return out, n


def seed_rule(scores, labels, tau, restrict=True):
    """Per-pixel seed rule: background if every considered score is below tau, else first argmax."""
    n_ch, h, w = scores.shape
    considered = [c for c in range(n_ch) if not restrict or (c + 1) in labels]
    out = np.zeros((h, w), dtype=np.uint8)
    for r in range(h):
        for col in range(w):
            vals = [(float(scores[c, r, col]), c) for c in considered]
            if not vals or all(v < tau for v, _ in vals):
                continue
            best_v, best_c = vals[0]
            for v, c in vals[1:]:
                if v > best_v:
                    best_v, best_c = v, c
            out[r, col] = best_c + 1
    return out


def count_confusion(gt, pred, n_classes):
    k = n_classes + 1
    counts = [[0] * k for _ in range(k)]
    ignored = [0] * k
    for g, p in zip(np.ravel(gt).tolist(), np.ravel(pred).tolist()):
        if g == 255:
            continue
        if p == 255:
            ignored[g] += 1
        else:
            counts[g][p] += 1
    return np.array(counts), np.array(ignored)


def kernel_entry(pi, pj, ci, cj, w1, ta, tb, w2, tg):
    d2 = (pi[0] - pj[0]) ** 2 + (pi[1] - pj[1]) ** 2
    c2 = sum((int(a) - int(b)) ** 2 for a, b in zip(ci, cj))
    return w1 * math.exp(-d2 / (2 * ta * ta) - c2 / (2 * tb * tb)) + w2 * math.exp(-d2 / (2 * tg * tg))


def potts_mean_field(unary, k, iterations):
    """Mean field written with the Potts penalty on disagreeing labels.

    q_i(l) is proportional to exp(-u_i(l) - sum_j k_ij * (1 - q_j(l))).
    """
    n, n_labels = len(unary), len(unary[0])
    q = []
    for i in range(n):
        e = [math.exp(-u) for u in unary[i]]
        s = sum(e)
        q.append([v / s for v in e])
    for _ in range(iterations):
        new = []
        for i in range(n):
            energy = []
            for lab in range(n_labels):
                pen = sum(k[i][j] * (1.0 - q[j][lab]) for j in range(n) if j != i)
                energy.append(-unary[i][lab] - pen)
            m = max(energy)
            e = [math.exp(v - m) for v in energy]
            s = sum(e)
            new.append([v / s for v in e])
        q = new
    return q


def interp_precision(points, target):
    """points: (recall, precision) pairs; piecewise-linear with flat extension."""
    pts = sorted(points)
    for r, p in pts:
        if r == target:
            return p
    if target <= pts[0][0]:
        return pts[0][1]
    if target >= pts[-1][0]:
        return pts[-1][1]
    for (r0, p0), (r1, p1) in zip(pts, pts[1:]):
        if r0 < target < r1:
            return p0 + (p1 - p0) * (target - r0) / (r1 - r0)
    raise AssertionError("unreachable")
