"""The 8 flip/rotation symmetries of the square.

A transform is indexed 0..7 as ``index = rotations + 4 * flip``: apply an
optional horizontal mirror first, then ``rotations`` counterclockwise
quarter turns. Index 0 is the identity. Composition and inverse are exact
on integer pixel grids, which the tests check directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .errors import ShapeError


@dataclass(frozen=True)
class DihedralTransform:
    index: int

    def __post_init__(self):
        if not 0 <= self.index < 8:
            raise ValueError(f"dihedral index must be 0..7, got {self.index}")

    @property
    def rotations(self) -> int:
        return self.index % 4

    @property
    def flipped(self) -> bool:
        return self.index >= 4

    def apply(self, x):
        """Transform an array or tensor over its last two axes."""
        if isinstance(x, ag.Tensor):
            out = ag.flip_w(x) if self.flipped else x
            if self.rotations:
                out = ag.rot90_hw(out, self.rotations)
            return out
        arr = np.asarray(x)
        if arr.ndim < 2:
            raise ShapeError("dihedral transforms need at least 2 dims")
        if self.flipped:
            arr = np.flip(arr, axis=-1)
        if self.rotations:
            arr = np.rot90(arr, self.rotations, axes=(-2, -1))
        return np.ascontiguousarray(arr)

    def inverse(self) -> "DihedralTransform":
        if not self.flipped:
            return DihedralTransform((-self.rotations) % 4)
        # reflections are involutions
        return self

    def compose(self, other: "DihedralTransform") -> "DihedralTransform":
        """self after other: apply ``other`` first, then ``self``."""
        sign = -1 if self.flipped else 1
        rot = (self.rotations + sign * other.rotations) % 4
        flip = self.flipped != other.flipped
        return DihedralTransform(rot + 4 * flip)

    def preserves_shape(self, h: int, w: int) -> bool:
        return h == w or self.rotations % 2 == 0


IDENTITY = DihedralTransform(0)
ALL_TRANSFORMS = tuple(DihedralTransform(i) for i in range(8))
