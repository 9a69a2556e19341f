"""Single-mode matrix elements of normal-ordered exponential operators.

For one harmonic mode the normal-ordered exponential of the field reduces
to ``<n'| exp(z' A^dag) exp(z A) |n>``.  The finite double-ladder series is
exact and serves as the ground truth; the associated-Laguerre closed form
evaluates the same element from ``rho = alpha^2 / (2 omega_k L)`` and is
what the MPO builders use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graded import OUT, BlockTensor, GradedSpace


def laguerre(n: int, a: int, x: float) -> float:
    """Associated Laguerre polynomial L_n^(a)(x) by the stable recurrence."""
    if n < 0 or a < 0:
        raise ValueError("laguerre requires n >= 0 and a >= 0")
    if n == 0:
        return 1.0
    prev, cur = 1.0, 1.0 + a - x
    for i in range(1, n):
        prev, cur = cur, ((2 * i + 1 + a - x) * cur - (i + a) * prev) / (i + 1)
    return cur


def exp_ladder_series(n_bra: int, n_ket: int, z_bra: complex, z_ket: complex) -> complex:
    """Exact finite series for ``<n_bra| exp(z_bra A^dag) exp(z_ket A) |n_ket>``.

    Summed in extended precision; this is the oracle the closed form is
    held to.
    """
    if n_bra < 0 or n_ket < 0:
        raise ValueError("levels must be non-negative")
    zb = np.clongdouble(z_bra)
    zk = np.clongdouble(z_ket)
    pref = np.sqrt(np.longdouble(math.factorial(n_bra)) * np.longdouble(math.factorial(n_ket)))
    acc = np.clongdouble(0.0)
    for m in range(max(0, n_ket - n_bra), n_ket + 1):
        mp = m + n_bra - n_ket
        denom = (np.longdouble(math.factorial(mp)) * np.longdouble(math.factorial(m))
                 * np.longdouble(math.factorial(n_ket - m)))
        acc += zb ** mp * zk ** m / denom
    return complex(pref * acc)


def vertex_element(n_bra: int, n_ket: int, rho: float) -> complex:
    """Closed form of the series at ``z_bra = z_ket = i*sqrt(rho)``.

    Equal to ``sqrt(min!/max!) * i^|dn| * rho^(|dn|/2) * L_min^(|dn|)(rho)``
    with ``dn = n_bra - n_ket``; factorial ratios go through log space.
    """
    if rho < 0:
        raise ValueError("rho must be non-negative")
    lo, hi = sorted((n_bra, n_ket))
    d = hi - lo
    ratio = math.exp(0.5 * (math.lgamma(lo + 1) - math.lgamma(hi + 1)))
    mag = ratio * (rho ** (d / 2.0)) * laguerre(lo, d, rho)
    return (1j) ** d * mag


@dataclass(frozen=True)
class VertexArg:
    """Exponent coefficient and mode frequency entering one mode factor."""

    alpha: float
    omega_k: float
    length_L: float

    def __post_init__(self):
        if self.omega_k <= 0 or self.length_L <= 0:
            raise ValueError("omega_k and length_L must be positive")

    @property
    def rho(self) -> float:
        return self.alpha ** 2 / (2.0 * self.omega_k * self.length_L)


def transfer_space(k: int, n_cap: int, sign: int = OUT) -> GradedSpace:
    """Momentum-transfer alphabet of mode k: multiples of k up to k*n_cap."""
    if k == 0:
        return GradedSpace.make({0: 1}, sign)
    return GradedSpace.make({k * m: 1 for m in range(-n_cap, n_cap + 1)}, sign)


def mode_vertex_tensor(k: int, arg: VertexArg, n_cap: int) -> BlockTensor:
    """Three-index vertex tensor of one mode: (bra out, ket in, transfer out).

    The (n_bra, n_ket) element sits at transfer charge k*(n_ket - n_bra).
    For ``alpha < 0`` every element is the complex conjugate of the
    ``+alpha`` one, which realizes the Hermitian pairing between the two
    exponentials of the cosine.
    """
    rho = arg.rho
    conj = arg.alpha < 0
    if k == 0:
        # harmonic zero mode: a single dense block at zero transfer
        d = n_cap + 1
        mat = np.empty((d, d), dtype=np.complex128)
        for nb in range(d):
            for nk in range(d):
                v = vertex_element(nb, nk, rho)
                mat[nb, nk] = v.conjugate() if conj else v
        space = GradedSpace.make({0: d}, OUT)
        t = BlockTensor((space, space.flipped(), transfer_space(0, n_cap, OUT)))
        t.set_block((0, 0, 0), mat.reshape(d, d, 1))
        return t

    row = GradedSpace.make({k * n: 1 for n in range(n_cap + 1)}, OUT)
    col = row.flipped()
    t = BlockTensor((row, col, transfer_space(k, n_cap, OUT)))
    for nb in range(n_cap + 1):
        for nk in range(n_cap + 1):
            v = vertex_element(nb, nk, rho)
            if conj:
                v = v.conjugate()
            if v != 0:
                t.set_block((k * nb, k * nk, k * (nk - nb)),
                            np.array(v, dtype=np.complex128).reshape(1, 1, 1))
    return t


def zero_mode_shift(sign: int, n_zm: int) -> np.ndarray:
    """Truncated shift on the compact-boson zero-mode ladder, |l> -> |l+sign>.

    Shifts leaving the truncated range are dropped, so the edge row/column
    is zero; transposing swaps the two shift directions.
    """
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    if n_zm < 0:
        raise ValueError("n_zm must be non-negative")
    d = 2 * n_zm + 1
    m = np.zeros((d, d), dtype=np.complex128)
    for i in range(d):
        j = i + sign
        if 0 <= j < d:
            m[j, i] = 1.0
    return m
