"""Periodic hypercubic lattices and their translation automorphisms.

Sites are indexed row-major over cell coordinates (last coordinate fastest).
A lattice may carry several sites per unit cell; the toric-code bond lattice
uses two (sublattice 0 = bond along axis 0, sublattice 1 = bond along axis 1),
so ``site = cell_index * sites_per_cell + sublattice``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np

from .errors import LatticeError

__all__ = [
    "TorusLattice",
    "build_torus",
    "build_bond_lattice",
    "translate_site",
    "cells",
]


@dataclass(frozen=True)
class TorusLattice:
    """A ``nu``-dimensional torus with ``prod(extents)`` unit cells.

    ``registry`` maps a cell family name (``"bond"``, ``"star"``,
    ``"plaquette"``) to tuples of site indices.
    """

    nu: int
    extents: tuple[int, ...]
    sites_per_cell: int = 1
    registry: dict[str, tuple[tuple[int, ...], ...]] = field(
        default_factory=dict, compare=False, repr=False
    )

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.extents))

    @property
    def site_count(self) -> int:
        return self.cell_count * self.sites_per_cell

    @property
    def is_bond_lattice(self) -> bool:
        return self.sites_per_cell == 2 and "star" in self.registry

    def cell_coords(self, cell: int) -> tuple[int, ...]:
        if not 0 <= cell < self.cell_count:
            raise LatticeError(f"cell {cell} out of range [0, {self.cell_count})")
        return tuple(int(c) for c in np.unravel_index(cell, self.extents))

    def cell_index(self, coords: Sequence[int]) -> int:
        if len(coords) != self.nu:
            raise LatticeError(f"expected {self.nu} coordinates, got {len(coords)}")
        wrapped = [int(c) % L for c, L in zip(coords, self.extents)]
        return int(np.ravel_multi_index(wrapped, self.extents))

    def coords(self, site: int) -> tuple[int, ...]:
        """Cell coordinates of ``site`` (sublattice dropped)."""
        if not 0 <= site < self.site_count:
            raise LatticeError(f"site {site} out of range [0, {self.site_count})")
        return self.cell_coords(site // self.sites_per_cell)

    def site(self, coords: Sequence[int], sublattice: int = 0) -> int:
        if not 0 <= sublattice < self.sites_per_cell:
            raise LatticeError(f"sublattice {sublattice} out of range")
        return self.cell_index(coords) * self.sites_per_cell + sublattice

    def translations(self) -> list[tuple[int, ...]]:
        """One translation vector per unit cell, in cell-index order."""
        return [self.cell_coords(c) for c in range(self.cell_count)]

    def site_permutation(self, v: Sequence[int]) -> np.ndarray:
        """``perm[s] = translate_site(self, s, v)`` for every site."""
        return np.array(
            [translate_site(self, s, v) for s in range(self.site_count)], dtype=np.int64
        )


def _bonds(extents: tuple[int, ...]) -> tuple[tuple[int, int], ...]:
    # (s, s + e_i) for every cell s and axis i; nu * |Lambda| bonds
    out = []
    for c in product(*(range(L) for L in extents)):
        s = int(np.ravel_multi_index(c, extents))
        for axis in range(len(extents)):
            nb = list(c)
            nb[axis] = (nb[axis] + 1) % extents[axis]
            out.append((s, int(np.ravel_multi_index(nb, extents))))
    return tuple(out)


def _check_extents(nu: int, extents: Sequence[int]) -> tuple[int, ...]:
    if nu < 1:
        raise LatticeError(f"nu must be >= 1, got {nu}")
    extents = tuple(int(L) for L in extents)
    if len(extents) != nu:
        raise LatticeError(f"expected {nu} extents, got {len(extents)}")
    if any(L < 2 for L in extents):
        raise LatticeError(f"all extents must be >= 2, got {list(extents)}")
    return extents


def build_torus(nu: int, extents: Sequence[int]) -> TorusLattice:
    """Site lattice with the nearest-neighbour bond registry.

    >>> lat = build_torus(2, [3, 3])
    >>> lat.site_count, len(cells(lat, "bond"))
    (9, 18)
    """
    extents = _check_extents(nu, extents)
    return TorusLattice(nu, extents, 1, {"bond": _bonds(extents)})


def build_bond_lattice(L: int) -> TorusLattice:
    """L x L torus with one spin per bond (2 L^2 spins).

    Star ``s`` holds the four bonds touching vertex ``s``; plaquette ``p``
    holds the four bonds around the face whose lower-left corner is ``p``.
    Both families are listed in vertex order.
    """
    extents = _check_extents(2, [L, L])
    lat = TorusLattice(2, extents, 2)
    stars, plaquettes = [], []
    for x, y in product(range(L), repeat=2):
        stars.append((
            lat.site((x, y), 0),
            lat.site((x - 1, y), 0),
            lat.site((x, y), 1),
            lat.site((x, y - 1), 1),
        ))
        plaquettes.append((
            lat.site((x, y), 0),
            lat.site((x, y + 1), 0),
            lat.site((x, y), 1),
            lat.site((x + 1, y), 1),
        ))
    lat.registry.update(
        star=tuple(stars),
        plaquette=tuple(plaquettes),
        bond=tuple((b,) for b in range(lat.site_count)),
    )
    return lat


def translate_site(lat: TorusLattice, site: int, v: Sequence[int]) -> int:
    if len(v) != lat.nu:
        raise LatticeError(f"translation has {len(v)} components, lattice has nu={lat.nu}")
    c = lat.coords(site)
    sub = site % lat.sites_per_cell
    return lat.site([a + int(b) for a, b in zip(c, v)], sub)


def cells(lat: TorusLattice, kind: str) -> list[tuple[int, ...]]:
    """Site-sets of one registered cell family.

    On a site lattice ``"bond"`` gives nearest-neighbour pairs; on the bond
    lattice it gives singletons (one per spin) alongside ``"star"`` and
    ``"plaquette"``.
    """
    if kind not in ("bond", "star", "plaquette"):
        raise LatticeError(f"unknown cell kind {kind!r}")
    if kind not in lat.registry:
        raise LatticeError(f"cell kind {kind!r} not available for nu={lat.nu} lattice")
    return list(lat.registry[kind])
