"""Shared fixtures and binding helpers for the test suite."""

import math

from fdlab import expr as ex

HALO_OFFSETS = [
    (i, j, k)
    for i in range(-ex.MAX_OFFSET, ex.MAX_OFFSET + 1)
    for j in range(-ex.MAX_OFFSET, ex.MAX_OFFSET + 1)
    for k in range(-ex.MAX_OFFSET, ex.MAX_OFFSET + 1)
]


def bind_arrays(h, point, fields):
    """Sample callables onto every halo offset around one grid point.

    ``fields`` maps array names to functions of (x0, x1, x2). The result
    binds ("arr", name, offset) keys for all offsets in the halo cube.
    """
    out = {}
    x0, x1, x2 = point
    for name, func in fields.items():
        for o in HALO_OFFSETS:
            out[ex.array_key(name, o)] = func(
                x0 + o[0] * h, x1 + o[1] * h, x2 + o[2] * h
            )
    return out


def bind_solution(h, point, comps):
    """Same as bind_arrays for solution components keyed by index."""
    out = {}
    x0, x1, x2 = point
    for comp, func in comps.items():
        for o in HALO_OFFSETS:
            out[ex.solution_key(comp, o)] = func(
                x0 + o[0] * h, x1 + o[1] * h, x2 + o[2] * h
            )
    return out


def spacing(n):
    return 2.0 * math.pi / n


class GridBindings(dict):
    """Lazy point bindings backed by periodic numpy fields.

    ``solutions`` maps component index to an (N,N,N) array and ``arrays``
    maps array name to the same. Lookups wrap around the boundary.
    """

    def __init__(self, point, n, solutions=None, arrays=None, locals_=None):
        super().__init__()
        self.point = point
        self.n = n
        self.solutions = solutions or {}
        self.arrays = arrays or {}
        if locals_:
            for name, value in locals_.items():
                self[ex.local_key(name)] = value

    def __missing__(self, key):
        kind, ident, off = key
        if kind == "sol":
            field = self.solutions[ident]
        else:
            field = self.arrays[ident]
        i, j, k = self.point
        value = field[
            (i + off[0]) % self.n, (j + off[1]) % self.n, (k + off[2]) % self.n
        ]
        self[key] = value
        return value
