"""Exact tensor-train projector onto a fixed total momentum transfer.

Each mode contributes a local transfer from a symmetric alphabet; the
chain of 0/1 addition tensors evaluates to one exactly when the transfers
sum to the target and to zero otherwise.  The virtual label is the
accumulated transfer, so storing only reachable-and-completable charges
("charge pruning") keeps every block a single unit entry while remaining
element-for-element identical to the full cyclic-group construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graded import IN, OUT, BlockTensor, GradedSpace
from .layout import ModeLayout


def capacity(layout: ModeLayout) -> tuple[int, int]:
    """Bookkeeping dimension K of the transfer ledger and its closed bound.

    ``K - 1 = 2 * sum_j |k_j * n(k_j)|`` counts every total transfer the
    chain can produce; the bound ``4*k_max*n_max + 1`` follows from
    ``n(k) <= n_max / |k|``.
    """
    span = sum(abs(k) * layout.occupation(k) for k in layout.modes if k != 0)
    return 2 * span + 1, 4 * layout.k_max * layout.n_max + 1


def plus_tensor(b_values, K: int) -> np.ndarray:
    """Dense addition tensor: slice i is the shift-by-i permutation on Z_K.

    Shape (K, len(b_values), K) with entries ``[alpha, i, beta] =
    delta(alpha + b_values[i] mod K, beta)``.  The transfer alphabet must
    fit the centered embedding, ``|i| <= (K-1)/2``.
    """
    b_values = [int(i) for i in b_values]
    if any(2 * abs(i) > K - 1 for i in b_values):
        raise ValueError("transfer alphabet exceeds the capacity K")
    t = np.zeros((K, len(b_values), K), dtype=np.float64)
    for ix, i in enumerate(b_values):
        for a in range(K):
            t[a, ix, (a + i) % K] = 1.0
    return t


def transfer_alphabet(layout: ModeLayout, k: int) -> tuple[int, ...]:
    """Allowed local transfers of mode k: multiples of k up to k*n(k)."""
    if k == 0:
        return (0,)
    n = layout.occupation(k)
    return tuple(sorted(k * m for m in range(-n, n + 1)))


@dataclass
class DeltaMps:
    """Charge-pruned unit-entry tensor train selecting a fixed total transfer."""

    tensors: list[BlockTensor]
    alphabets: list[tuple[int, ...]]
    capacity: int
    target: int

    def bond_dims(self) -> list[int]:
        """Virtual dimension after each site (last one is the boundary)."""
        return [t.spaces[2].dim for t in self.tensors]


def build_sum_projector(alphabets, target: int) -> DeltaMps:
    """Projector onto configurations with ``sum_j delta_j == target``.

    Works for any per-site integer alphabets; the virtual charges are the
    accumulated sums, pruned to values that are both reachable from the
    left and completable to the target from the right.
    """
    alphabets = [tuple(sorted(int(v) for v in a)) for a in alphabets]
    span = sum(max(abs(v) for v in a) for a in alphabets)
    K = 2 * span + 1
    if abs(target) > span:
        raise ValueError(f"target transfer {target} is unreachable (|target| > {span})")

    n = len(alphabets)
    reach = [{0}]
    for a in alphabets:
        reach.append({c + v for c in reach[-1] for v in a})
    comp = [None] * (n + 1)
    comp[n] = {target}
    for j in range(n - 1, -1, -1):
        comp[j] = {c - v for c in comp[j + 1] for v in alphabets[j]}
    virt = [sorted(reach[j] & comp[j]) for j in range(n + 1)]
    if not virt[0] or not virt[n]:
        raise ValueError(f"target transfer {target} is unreachable in this alphabet")

    one = np.ones((1, 1, 1), dtype=np.complex128)
    tensors = []
    for j, a in enumerate(alphabets):
        left = GradedSpace.make({c: 1 for c in virt[j]}, IN)
        phys = GradedSpace.make({v: 1 for v in a}, IN)
        right = GradedSpace.make({c: 1 for c in virt[j + 1]}, OUT)
        t = BlockTensor((left, phys, right))
        rset = set(virt[j + 1])
        for c in virt[j]:
            for v in a:
                if c + v in rset:
                    t.set_block((c, v, c + v), one)
        tensors.append(t)
    return DeltaMps(tensors, alphabets, K, target)


def build_delta_mps(layout: ModeLayout, target_transfer: int = 0) -> DeltaMps:
    """Momentum-transfer projector for a layout, modes in chain order."""
    return build_sum_projector(
        [transfer_alphabet(layout, k) for k in layout.modes], target_transfer)


def delta_amplitude(d: DeltaMps, config) -> int:
    """Evaluate the chain on one transfer configuration; exactly 0 or 1."""
    if len(config) != len(d.alphabets):
        raise ValueError("configuration length does not match the chain")
    c = 0
    for j, v in enumerate(config):
        v = int(v)
        if v not in d.alphabets[j]:
            raise ValueError(f"transfer {v} not in the alphabet of site {j}")
        if (c, v, c + v) not in d.tensors[j].blocks:
            return 0
        c = c + v
    return 1 if c == d.target else 0
