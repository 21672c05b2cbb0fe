"""Compiled inner loops: network evaluation and the sequential tile sweep.

Both run without the GIL so generations of different genomes can share a
thread pool. Grids reach the sweep as 3D ``[x, y, z]`` arrays; 2D levels
have a single z layer and a zero context along z.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def network_forward(values, order, indptr, src, weights, out_slots, out):
    # values[:n_inputs] and the bias slot are filled by the caller
    for k in range(order.shape[0]):
        s = 0.0
        for j in range(indptr[k], indptr[k + 1]):
            s += weights[j] * values[src[j]]
        values[order[k]] = math.tanh(s)
    for o in range(out_slots.shape[0]):
        out[o] = values[out_slots[o]]


@njit(cache=True, nogil=True)
def _encode(values, p, tile, one_hot, n_tiles):
    if one_hot:
        for i in range(n_tiles):
            if tile < 0:
                values[p + i] = -1.0
            elif i == tile:
                values[p + i] = 1.0
            else:
                values[p + i] = 0.0
        return p + n_tiles
    if tile < 0:
        values[p] = -1.0
    elif n_tiles > 1:
        values[p] = 2.0 * tile / (n_tiles - 1) - 1.0
    else:
        values[p] = 0.0
    return p + 1


@njit(cache=True, nogil=True)
def sweep(tiles, ndim, context, one_hot, n_tiles, center, rand, noise, has_noise,
          n_inputs, n_slots, order, indptr, src, weights, out_slots):
    """One in-place pass over ``tiles``, cells visited x fastest"""
    W, H, D = tiles.shape
    cz = context if ndim == 3 else 0
    values = np.zeros(n_slots)
    out = np.zeros(out_slots.shape[0])
    cell = 0
    for z in range(D):
        for y in range(H):
            for x in range(W):
                p = 0
                for dz in range(-cz, cz + 1):
                    for dy in range(-context, context + 1):
                        for dx in range(-context, context + 1):
                            if dx == 0 and dy == 0 and dz == 0:
                                continue
                            xx = x + dx
                            yy = y + dy
                            zz = z + dz
                            tile = -1
                            if 0 <= xx < W and 0 <= yy < H and 0 <= zz < D:
                                tile = tiles[xx, yy, zz]
                            p = _encode(values, p, tile, one_hot, n_tiles)
                if center:
                    p = _encode(values, p, tiles[x, y, z], one_hot, n_tiles)
                if has_noise:
                    for i in range(p):
                        values[i] += noise[cell, i]
                for r in range(rand.shape[1]):
                    values[p] = rand[cell, r]
                    p += 1
                values[n_inputs] = 1.0
                network_forward(values, order, indptr, src, weights, out_slots, out)
                best = 0
                for o in range(1, out.shape[0]):
                    if out[o] > out[best]:
                        best = o
                tiles[x, y, z] = best
                cell += 1
