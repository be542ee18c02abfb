"""Numba kernels on padded spin arrays.

A padded array has one extra layer of cells on every side carrying the
Dobrushin values (+1 below L0, -1 above). Padded cell (i, j, k) sits at doubled
grid index (2i+1, 2j+1, 2k+1); faces between padded cells land on the grid
points with exactly one even index.
"""
import numpy as np
from numba import njit

from .lattice import STAR_FACE_OFFSETS

STAR_OFFS = np.array(STAR_FACE_OFFSETS, dtype=np.int64)  # (3, 32, 3)

EV_NONE = 0
EV_A_H = 1
EV_HGT_GE = 2
EV_CUTS_GE = 3


@njit(cache=True)
def pad(spins, k0):
    nx, ny, nz = spins.shape
    P = np.empty((nx + 2, ny + 2, nz + 2), dtype=np.int8)
    for i in range(nx + 2):
        for j in range(ny + 2):
            for k in range(nz + 2):
                P[i, j, k] = 1 if k <= k0 else -1
    P[1:nx + 1, 1:ny + 1, 1:nz + 1] = spins
    return P


@njit(cache=True)
def plus_neighbours(P, i, j, k):
    p = 0
    if P[i - 1, j, k] > 0:
        p += 1
    if P[i + 1, j, k] > 0:
        p += 1
    if P[i, j - 1, k] > 0:
        p += 1
    if P[i, j + 1, k] > 0:
        p += 1
    if P[i, j, k - 1] > 0:
        p += 1
    if P[i, j, k + 1] > 0:
        p += 1
    return p


@njit(cache=True)
def propose(P, i, j, k, u, tab, metropolis):
    """New spin for one site update; tab is the 7-entry table for the dynamics."""
    p = plus_neighbours(P, i, j, k)
    s = P[i, j, k]
    if not metropolis:
        return 1 if u < tab[p] else -1
    # metropolis: tab[p] = acceptance of - -> + ; tab[6 - p] = acceptance of + -> -
    if s < 0:
        return 1 if u < tab[p] else -1
    return -1 if u < tab[6 - p] else 1


@njit(cache=True)
def sweep(P, u, tab, metropolis):
    nx, ny, nz = P.shape[0] - 2, P.shape[1] - 2, P.shape[2] - 2
    t = 0
    for i in range(1, nx + 1):
        for j in range(1, ny + 1):
            for k in range(1, nz + 1):
                P[i, j, k] = propose(P, i, j, k, u[t], tab, metropolis)
                t += 1


@njit(cache=True)
def hamiltonian(P):
    """Disagreeing adjacent pairs with at least one cell in the box."""
    nx, ny, nz = P.shape[0] - 2, P.shape[1] - 2, P.shape[2] - 2
    H = 0
    for i in range(nx + 1):
        for j in range(1, ny + 1):
            for k in range(1, nz + 1):
                if P[i, j, k] != P[i + 1, j, k]:
                    H += 1
    for i in range(1, nx + 1):
        for j in range(ny + 1):
            for k in range(1, nz + 1):
                if P[i, j, k] != P[i, j + 1, k]:
                    H += 1
    for i in range(1, nx + 1):
        for j in range(1, ny + 1):
            for k in range(nz + 1):
                if P[i, j, k] != P[i, j, k + 1]:
                    H += 1
    return H


@njit(cache=True)
def separating_grid(P):
    a, b, c = P.shape
    G = np.zeros((2 * a + 1, 2 * b + 1, 2 * c + 1), dtype=np.uint8)
    for i in range(a):
        for j in range(b):
            for k in range(c):
                s = P[i, j, k]
                if i + 1 < a and P[i + 1, j, k] != s:
                    G[2 * i + 2, 2 * j + 1, 2 * k + 1] = 1
                if j + 1 < b and P[i, j + 1, k] != s:
                    G[2 * i + 1, 2 * j + 2, 2 * k + 1] = 1
                if k + 1 < c and P[i, j, k + 1] != s:
                    G[2 * i + 1, 2 * j + 1, 2 * k + 2] = 1
    return G


@njit(cache=True)
def interface_grid(P, k0):
    """Mask of the interface on the doubled grid, restricted to faces of the box.

    Flood fill over *-adjacent separating faces seeded by the ring of L0 faces
    lying just outside the box.
    """
    G = separating_grid(P)
    gx, gy, gz = G.shape
    a, b = P.shape[0], P.shape[1]
    z0 = 2 * (k0 + 1)
    total = 0
    for v in G.ravel():
        total += v
    q = np.empty((total + 1, 3), dtype=np.int64)
    head = 0
    tail = 0
    M = np.zeros_like(G)
    for i in range(a):
        for j in range(b):
            if i == 0 or j == 0 or i == a - 1 or j == b - 1:
                x, y = 2 * i + 1, 2 * j + 1
                if G[x, y, z0] and not M[x, y, z0]:
                    M[x, y, z0] = 1
                    q[tail, 0] = x
                    q[tail, 1] = y
                    q[tail, 2] = z0
                    tail += 1
    while head < tail:
        x, y, z = q[head, 0], q[head, 1], q[head, 2]
        head += 1
        ax = 0
        if y % 2 == 0:
            ax = 1
        elif z % 2 == 0:
            ax = 2
        for d in range(STAR_OFFS.shape[1]):
            x2 = x + STAR_OFFS[ax, d, 0]
            y2 = y + STAR_OFFS[ax, d, 1]
            z2 = z + STAR_OFFS[ax, d, 2]
            if x2 < 0 or y2 < 0 or z2 < 0 or x2 >= gx or y2 >= gy or z2 >= gz:
                continue
            if G[x2, y2, z2] and not M[x2, y2, z2]:
                M[x2, y2, z2] = 1
                q[tail, 0] = x2
                q[tail, 1] = y2
                q[tail, 2] = z2
                tail += 1
    # keep faces of the box only: doubled indices 2..gx-3
    for x in range(gx):
        for y in range(gy):
            for z in range(gz):
                if M[x, y, z] and (x < 2 or y < 2 or z < 2 or x > gx - 3 or y > gy - 3 or z > gz - 3):
                    M[x, y, z] = 0
    return M


@njit(cache=True)
def two_phase(M, shape, k0):
    """Bubble-free padded configuration determined by an interface mask."""
    nx, ny, nz = shape
    a, b, c = nx + 2, ny + 2, nz + 2
    S = np.zeros((a, b, c), dtype=np.int8)
    q = np.empty((a * b * c, 3), dtype=np.int64)
    tail = 0
    for i in range(a):
        for j in range(b):
            for k in range(c):
                if i == 0 or j == 0 or k == 0 or i == a - 1 or j == b - 1 or k == c - 1:
                    S[i, j, k] = 1 if k <= k0 else -1
                    q[tail, 0] = i
                    q[tail, 1] = j
                    q[tail, 2] = k
                    tail += 1
    head = 0
    while head < tail:
        i, j, k = q[head, 0], q[head, 1], q[head, 2]
        head += 1
        for d in range(6):
            di = 0
            dj = 0
            dk = 0
            if d == 0:
                di = 1
            elif d == 1:
                di = -1
            elif d == 2:
                dj = 1
            elif d == 3:
                dj = -1
            elif d == 4:
                dk = 1
            else:
                dk = -1
            i2, j2, k2 = i + di, j + dj, k + dk
            if i2 < 1 or j2 < 1 or k2 < 1 or i2 > nx or j2 > ny or k2 > nz:
                continue
            if S[i2, j2, k2] != 0:
                continue
            f = M[2 * i + 1 + di, 2 * j + 1 + dj, 2 * k + 1 + dk]
            S[i2, j2, k2] = -S[i, j, k] if f else S[i, j, k]
            q[tail, 0] = i2
            q[tail, 1] = j2
            q[tail, 2] = k2
            tail += 1
    return S


@njit(cache=True)
def plus_cluster(S, pi, pj, k_lo, k_hi):
    """*-connected plus cells of S containing (pi, pj, k_lo), within layers [k_lo, k_hi)."""
    a, b, c = S.shape
    mask = np.zeros((a, b, c), dtype=np.uint8)
    if S[pi, pj, k_lo] <= 0:
        return mask
    q = np.empty((a * b * (k_hi - k_lo) + 1, 3), dtype=np.int64)
    q[0, 0] = pi
    q[0, 1] = pj
    q[0, 2] = k_lo
    mask[pi, pj, k_lo] = 1
    head = 0
    tail = 1
    while head < tail:
        i, j, k = q[head, 0], q[head, 1], q[head, 2]
        head += 1
        for di in range(-1, 2):
            for dj in range(-1, 2):
                for dk in range(-1, 2):
                    i2, j2, k2 = i + di, j + dj, k + dk
                    if i2 < 0 or j2 < 0 or i2 >= a or j2 >= b or k2 < k_lo or k2 >= k_hi:
                        continue
                    if mask[i2, j2, k2] or S[i2, j2, k2] <= 0:
                        continue
                    mask[i2, j2, k2] = 1
                    q[tail, 0] = i2
                    q[tail, 1] = j2
                    q[tail, 2] = k2
                    tail += 1
    return mask


@njit(cache=True)
def pillar_mask(P, pi, pj, k0):
    nx, ny, nz = P.shape[0] - 2, P.shape[1] - 2, P.shape[2] - 2
    M = interface_grid(P, k0)
    S = two_phase(M, (nx, ny, nz), k0)
    return plus_cluster(S, pi, pj, k0 + 1, nz + 2), S


@njit(cache=True)
def slab_counts(mask, k0):
    """Cells per layer above L0 (index 0 is height 1/2)."""
    a, b, c = mask.shape
    out = np.zeros(c - k0 - 1, dtype=np.int64)
    for i in range(a):
        for j in range(b):
            for k in range(k0 + 1, c):
                if mask[i, j, k]:
                    out[k - k0 - 1] += 1
    return out


@njit(cache=True)
def count_cuts(counts):
    n = 0
    for v in counts:
        if v == 1:
            n += 1
    return n


@njit(cache=True)
def pillar_top(counts):
    """Number of nonempty layers counted from the bottom; the pillar height."""
    top = 0
    for t in range(counts.shape[0]):
        if counts[t] > 0:
            top = t + 1
    return top


@njit(cache=True)
def event_a_h(P, pi, pj, k0, h):
    mask = plus_cluster(P, pi, pj, k0 + 1, k0 + 1 + h)
    a, b = P.shape[0], P.shape[1]
    hit = False
    for i in range(a):
        for j in range(b):
            if mask[i, j, k0 + h]:
                hit = True
    return hit, mask


@njit(cache=True)
def dilate26(mask):
    a, b, c = mask.shape
    out = np.zeros_like(mask)
    for i in range(a):
        for j in range(b):
            for k in range(c):
                if mask[i, j, k]:
                    for di in range(-1, 2):
                        for dj in range(-1, 2):
                            for dk in range(-1, 2):
                                i2, j2, k2 = i + di, j + dj, k + dk
                                if 0 <= i2 < a and 0 <= j2 < b and 0 <= k2 < c:
                                    out[i2, j2, k2] = 1
    return out


@njit(cache=True)
def evaluate_event(P, kind, pi, pj, k0, level):
    """Return (holds, zone). The zone marks cells whose update may change the event."""
    if kind == EV_A_H:
        ok, mask = event_a_h(P, pi, pj, k0, level)
        return ok, mask
    mask, S = pillar_mask(P, pi, pj, k0)
    counts = slab_counts(mask, k0)
    if kind == EV_HGT_GE:
        ok = pillar_top(counts) >= level
    else:
        ok = count_cuts(counts) - 1 >= level
    return ok, dilate26(mask)


@njit(cache=True)
def _touches(zone, i, j, k):
    for di in range(-1, 2):
        for dj in range(-1, 2):
            for dk in range(-1, 2):
                if zone[i + di, j + dj, k + dk]:
                    return True
    return False


@njit(cache=True)
def sweep_restricted(P, u, tab, metropolis, kind, pi, pj, k0, level, zone, stats):
    """One systematic sweep restricted to the event; stats = [checks, rejections].

    Only updates at zone cells can change the event. A_h is increasing, so a
    - -> + update never breaks it and only refreshes the cluster.
    """
    nx, ny, nz = P.shape[0] - 2, P.shape[1] - 2, P.shape[2] - 2
    t = 0
    for i in range(1, nx + 1):
        for j in range(1, ny + 1):
            for k in range(1, nz + 1):
                s = P[i, j, k]
                new = propose(P, i, j, k, u[t], tab, metropolis)
                t += 1
                if new == s:
                    continue
                P[i, j, k] = new
                if kind == EV_NONE:
                    continue
                if kind == EV_A_H and new > 0:
                    if k0 + 1 <= k < k0 + 1 + level and _touches(zone, i, j, k):
                        ok, z2 = evaluate_event(P, kind, pi, pj, k0, level)
                        zone[:, :, :] = z2
                    continue
                if not zone[i, j, k]:
                    continue
                stats[0] += 1
                ok, z2 = evaluate_event(P, kind, pi, pj, k0, level)
                if ok:
                    zone[:, :, :] = z2
                else:
                    P[i, j, k] = s
                    stats[1] += 1
