"""Truncated momentum-mode Hilbert space: ordering, occupation caps, charges.

A layout fixes the chain of modes ``k = -k_max, ..., +k_max`` (one MPS site
per mode), the per-mode occupation cap ``n(k) = floor(n_max / |k|)`` and the
zero-mode truncation.  Level ``n`` of mode ``k`` carries charge ``k*n``, so
the total charge of a basis state is the total momentum in units of 2*pi/L.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .graded import OUT, GradedSpace


class ModelKind(enum.Enum):
    SINE_GORDON = "sine-gordon"
    MASSIVE_SCHWINGER = "massive-schwinger"


def occupation_profile(k_max: int, n_max: int) -> dict[int, int]:
    """Occupation cap per nonzero mode, ``n(k) = floor(n_max/|k|)``."""
    if k_max < 1 or n_max < 1:
        raise ValueError("k_max and n_max must be positive")
    return {k: n_max // abs(k)
            for k in range(-k_max, k_max + 1) if k != 0}


@dataclass(frozen=True)
class ModeLayout:
    """Truncation parameters of one run; immutable and freely shareable."""

    model: ModelKind
    k_max: int
    n_max: int
    n_zm: int
    length_L: float

    def __post_init__(self):
        if self.k_max < 1 or self.n_max < 1:
            raise ValueError("k_max and n_max must be positive")
        if self.n_zm < 0:
            raise ValueError("n_zm must be non-negative")
        if self.length_L <= 0:
            raise ValueError("length_L must be positive")

    @property
    def modes(self) -> tuple[int, ...]:
        return tuple(range(-self.k_max, self.k_max + 1))

    @property
    def n_sites(self) -> int:
        return 2 * self.k_max + 1

    def site(self, k: int) -> int:
        return k + self.k_max

    def occupation(self, k: int) -> int:
        if k == 0:
            raise ValueError("the zero mode has its own truncation n_zm")
        return self.n_max // abs(k)

    @property
    def zero_mode_dim(self) -> int:
        if self.model is ModelKind.SINE_GORDON:
            return 2 * self.n_zm + 1
        return self.n_zm + 1

    def phys_dim(self, k: int) -> int:
        return self.zero_mode_dim if k == 0 else self.occupation(k) + 1

    def level_charge(self, k: int, n: int) -> int:
        return 0 if k == 0 else k * n

    def mode_space(self, k: int, sign: int = OUT) -> GradedSpace:
        """Graded physical space of mode ``k``.

        Nonzero modes have one charge sector ``k*n`` per level; the zero
        mode is a single charge-0 sector whose degeneracy slots are the
        zero-mode levels in order (sG: l = -n_zm..+n_zm; mS: n = 0..n_zm).
        """
        if k == 0:
            return GradedSpace.make({0: self.zero_mode_dim}, sign)
        return GradedSpace.make({k * n: 1 for n in range(self.occupation(k) + 1)}, sign)

    def mode_spaces(self, sign: int = OUT) -> list[GradedSpace]:
        return [self.mode_space(k, sign) for k in self.modes]

    @property
    def total_dim(self) -> int:
        dim = self.zero_mode_dim
        for k in self.modes:
            if k != 0:
                dim *= self.occupation(k) + 1
        return dim

    def charge_bounds(self) -> tuple[int, int]:
        """Smallest and largest total charge reachable in the layout."""
        lo = sum(k * self.occupation(k) for k in self.modes if k < 0)
        hi = sum(k * self.occupation(k) for k in self.modes if k > 0)
        return lo, hi

    def to_dict(self) -> dict:
        return {
            "model": self.model.value,
            "k_max": self.k_max,
            "n_max": self.n_max,
            "n_zm": self.n_zm,
            "length_L": self.length_L,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModeLayout":
        return ModeLayout(ModelKind(d["model"]), int(d["k_max"]), int(d["n_max"]),
                          int(d["n_zm"]), float(d["length_L"]))
