"""Charge-graded block-sparse complex tensors.

Every tensor index is a :class:`GradedSpace`: an ordered list of integer
charge sectors with degeneracies, plus a direction sign (+1 outgoing,
-1 incoming).  A dense block is stored only for charge assignments with
zero net flux, i.e. ``sum(sign_i * charge_i) == 0``; absent blocks are
exactly zero.  With charges chosen as momentum quantum numbers this
enforces momentum conservation through every contraction.

All scalars are complex double precision.  Operations are pure: inputs
are never mutated, so values can be shared freely between threads.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

OUT = +1
IN = -1

# multiply-add counter for the contraction kernel; used by the cost-scaling
# diagnostics, not by any numerical result
_flops = 0


def flop_count() -> int:
    return _flops


def reset_flop_count() -> None:
    global _flops
    _flops = 0


@dataclass(frozen=True)
class GradedSpace:
    """Ordered charge sectors ``((charge, degeneracy), ...)`` with a direction.

    Sectors are kept sorted by charge and charges are distinct; the total
    dimension is the sum of the degeneracies.
    """

    sectors: tuple[tuple[int, int], ...]
    sign: int = OUT

    def __post_init__(self):
        if self.sign not in (OUT, IN):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        charges = [q for q, _ in self.sectors]
        if any(d <= 0 for _, d in self.sectors):
            raise ValueError("sector degeneracies must be positive")
        if charges != sorted(charges) or len(set(charges)) != len(charges):
            raise ValueError("sector charges must be sorted and distinct")

    @staticmethod
    def make(sectors, sign: int = OUT) -> "GradedSpace":
        """Build a space from a ``{charge: degeneracy}`` map or pair iterable."""
        if isinstance(sectors, dict):
            items = sectors.items()
        else:
            items = list(sectors)
        return GradedSpace(tuple(sorted((int(q), int(d)) for q, d in items)), sign)

    @property
    def dim(self) -> int:
        return sum(d for _, d in self.sectors)

    @property
    def charges(self) -> tuple[int, ...]:
        return tuple(q for q, _ in self.sectors)

    def degeneracy(self, charge: int) -> int:
        for q, d in self.sectors:
            if q == charge:
                return d
        return 0

    def offsets(self) -> dict[int, int]:
        """Dense-layout offset of each charge sector (sorted-charge order)."""
        out, pos = {}, 0
        for q, d in self.sectors:
            out[q] = pos
            pos += d
        return out

    def flipped(self) -> "GradedSpace":
        return GradedSpace(self.sectors, -self.sign)

    def is_dual_of(self, other: "GradedSpace") -> bool:
        return self.sectors == other.sectors and self.sign == -other.sign


def fuse(a: GradedSpace, b: GradedSpace, strip_degeneracy: bool = False) -> GradedSpace:
    """Fuse two equally-directed spaces: charges add, degeneracies multiply.

    With ``strip_degeneracy`` every fused sector is forced to degeneracy one
    (the bracket-subscript-one operation used for transfer alphabets).
    """
    if a.sign != b.sign:
        raise ValueError("fusion requires equal index directions")
    acc: dict[int, int] = {}
    for qa, da in a.sectors:
        for qb, db in b.sectors:
            acc[qa + qb] = acc.get(qa + qb, 0) + da * db
    if strip_degeneracy:
        acc = {q: 1 for q in acc}
    return GradedSpace.make(acc, a.sign)


def fuse_all(spaces: Sequence[GradedSpace], strip_degeneracy: bool = False) -> GradedSpace:
    out = spaces[0]
    for s in spaces[1:]:
        out = fuse(out, s, strip_degeneracy)
    if strip_degeneracy:
        out = GradedSpace.make({q: 1 for q in out.charges}, out.sign)
    return out


def _flux(spaces: Sequence[GradedSpace], key: Sequence[int]) -> int:
    return sum(s.sign * q for s, q in zip(spaces, key))


def block_shape(spaces: Sequence[GradedSpace], key: Sequence[int]) -> tuple[int, ...]:
    return tuple(s.degeneracy(q) for s, q in zip(spaces, key))


class BlockTensor:
    """Block-sparse tensor over graded index spaces.

    ``blocks`` maps a per-index charge assignment to a dense complex array
    whose shape matches the sector degeneracies.  Only zero-flux keys may be
    stored.  Iteration over blocks is canonical (lexicographic in the key).
    """

    __slots__ = ("spaces", "blocks")

    def __init__(self, spaces: Sequence[GradedSpace], blocks: dict | None = None):
        self.spaces = tuple(spaces)
        self.blocks: dict[tuple[int, ...], np.ndarray] = dict(blocks) if blocks else {}

    @property
    def ndim(self) -> int:
        return len(self.spaces)

    def set_block(self, key: Sequence[int], arr: np.ndarray) -> None:
        key = tuple(int(q) for q in key)
        if _flux(self.spaces, key) != 0:
            raise ValueError(f"block {key} violates zero-flux")
        shape = block_shape(self.spaces, key)
        arr = np.ascontiguousarray(arr, dtype=np.complex128)
        if arr.shape != shape:
            raise ValueError(f"block {key} has shape {arr.shape}, expected {shape}")
        self.blocks[key] = arr

    def items(self):
        return sorted(self.blocks.items())

    def norm(self) -> float:
        return float(np.sqrt(sum(np.vdot(b, b).real for b in self.blocks.values())))

    def copy(self) -> "BlockTensor":
        return BlockTensor(self.spaces, {k: b.copy() for k, b in self.blocks.items()})

    def validate(self) -> None:
        for key, arr in self.blocks.items():
            if _flux(self.spaces, key) != 0:
                raise AssertionError(f"stored block {key} has nonzero flux")
            if arr.shape != block_shape(self.spaces, key):
                raise AssertionError(f"block {key} shape mismatch")
            if arr.dtype != np.complex128:
                raise AssertionError(f"block {key} has dtype {arr.dtype}")

    def __repr__(self):
        dims = "x".join(str(s.dim) for s in self.spaces)
        return f"BlockTensor({dims}, {len(self.blocks)} blocks)"


def zeros(spaces: Sequence[GradedSpace]) -> BlockTensor:
    return BlockTensor(spaces)


def allowed_keys(spaces: Sequence[GradedSpace]):
    """All zero-flux charge assignments (combinatorial; small spaces only)."""
    for key in itertools.product(*(s.charges for s in spaces)):
        if _flux(spaces, key) == 0:
            yield key


def random_tensor(spaces: Sequence[GradedSpace], rng: np.random.Generator) -> BlockTensor:
    t = BlockTensor(spaces)
    for key in allowed_keys(spaces):
        shape = block_shape(spaces, key)
        t.set_block(key, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return t


def adjoint(t: BlockTensor) -> BlockTensor:
    """Complex conjugate with all index directions flipped (antilinear)."""
    spaces = tuple(s.flipped() for s in t.spaces)
    return BlockTensor(spaces, {k: np.conj(b) for k, b in t.blocks.items()})


def transpose(t: BlockTensor, perm: Sequence[int]) -> BlockTensor:
    perm = tuple(perm)
    spaces = tuple(t.spaces[p] for p in perm)
    blocks = {tuple(k[p] for p in perm): np.ascontiguousarray(np.transpose(b, perm))
              for k, b in t.blocks.items()}
    return BlockTensor(spaces, blocks)


def scale(t: BlockTensor, c: complex) -> BlockTensor:
    return BlockTensor(t.spaces, {k: c * b for k, b in t.blocks.items()})


def add(a: BlockTensor, b: BlockTensor, alpha: complex = 1.0, beta: complex = 1.0) -> BlockTensor:
    """alpha*a + beta*b for tensors over identical spaces."""
    if a.spaces != b.spaces:
        raise ValueError("add requires identical index spaces")
    out: dict[tuple[int, ...], np.ndarray] = {k: alpha * v for k, v in a.blocks.items()}
    for k, v in b.blocks.items():
        if k in out:
            out[k] = out[k] + beta * v
        else:
            out[k] = beta * v
    return BlockTensor(a.spaces, out)


def vdot(a: BlockTensor, b: BlockTensor) -> complex:
    """Flat inner product ``sum(conj(a) * b)`` over matching blocks."""
    if a.spaces != b.spaces:
        raise ValueError("vdot requires identical index spaces")
    acc = 0.0 + 0.0j
    for k, v in a.blocks.items():
        w = b.blocks.get(k)
        if w is not None:
            acc += np.vdot(v, w)
    return complex(acc)


def contract(t1: BlockTensor, t2: BlockTensor, pairs: Sequence[tuple[int, int]]) -> BlockTensor:
    """Contract paired indices; result indices are t1-free then t2-free.

    Paired indices must carry identical sector lists and opposite
    directions.  Blocks are matched on the contracted charges and summed,
    which preserves zero flux automatically.
    """
    global _flops
    axes1 = tuple(i for i, _ in pairs)
    axes2 = tuple(j for _, j in pairs)
    for i, j in pairs:
        s1, s2 = t1.spaces[i], t2.spaces[j]
        if not s1.is_dual_of(s2):
            raise ValueError(f"index pair ({i},{j}) is not contractible: "
                             f"need equal sectors and opposite directions")
    free1 = tuple(i for i in range(t1.ndim) if i not in axes1)
    free2 = tuple(j for j in range(t2.ndim) if j not in axes2)
    out_spaces = tuple(t1.spaces[i] for i in free1) + tuple(t2.spaces[j] for j in free2)

    groups: dict[tuple[int, ...], list] = {}
    for k2, b2 in t2.blocks.items():
        ck = tuple(k2[j] for j in axes2)
        groups.setdefault(ck, []).append((tuple(k2[j] for j in free2), b2))

    out_blocks: dict[tuple[int, ...], np.ndarray] = {}
    for k1, b1 in t1.blocks.items():
        ck = tuple(k1[i] for i in axes1)
        matches = groups.get(ck)
        if not matches:
            continue
        fk1 = tuple(k1[i] for i in free1)
        csize = 1
        for i in axes1:
            csize *= b1.shape[i]
        n1 = b1.size // csize
        for fk2, b2 in matches:
            r = np.tensordot(b1, b2, axes=(axes1, axes2))
            _flops += n1 * (b2.size // csize) * csize
            okey = fk1 + fk2
            if okey in out_blocks:
                out_blocks[okey] += r
            else:
                out_blocks[okey] = r
    return BlockTensor(out_spaces, out_blocks)


@dataclass(frozen=True)
class TruncationPolicy:
    """Discarded-weight bound and hard bond-dimension cap for splittings.

    ``eps`` bounds the 2-norm of the discarded singular values; ``chi_max``
    (None = unbounded) caps the retained count.  Both act together.
    """

    eps: float = 0.0
    chi_max: int | None = None

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if self.chi_max is not None and self.chi_max < 1:
            raise ValueError("chi_max must be positive")


EXACT = TruncationPolicy(eps=0.0, chi_max=None)

# relative cut below which singular values are treated as numerical rank noise
_RANK_TOL = 1e-15
# relative window for the deterministic tie-break at the truncation boundary
_TIE_TOL = 1e-14


def _split_groups(t: BlockTensor, left_axes: Sequence[int]):
    """Group blocks into per-bond-charge matrices for SVD/QR splittings.

    Returns (left_axes, right_axes, sectors) where sectors maps the bond
    charge c to (row_keys, col_keys, row_offsets, col_offsets, matrix).
    The bond charge is the accumulated left flux, so a split of an MPS
    chain tensor reproduces the usual charge bookkeeping.
    """
    left_axes = tuple(left_axes)
    right_axes = tuple(i for i in range(t.ndim) if i not in left_axes)
    if len(left_axes) + len(right_axes) != t.ndim or len(set(left_axes)) != len(left_axes):
        raise ValueError("left_axes must be a subset of the tensor's indices")
    if not t.blocks:
        raise ValueError("cannot split an empty tensor")

    lspaces = [t.spaces[i] for i in left_axes]
    rspaces = [t.spaces[i] for i in right_axes]
    # bond charge: c = sum of signed left charges (equals minus the right flux)
    sectors: dict[int, dict] = {}
    for key, arr in t.blocks.items():
        lkey = tuple(key[i] for i in left_axes)
        rkey = tuple(key[i] for i in right_axes)
        c = _flux(lspaces, lkey)
        sec = sectors.setdefault(c, {"rows": {}, "cols": {}, "blocks": []})
        if lkey not in sec["rows"]:
            sec["rows"][lkey] = int(np.prod(block_shape(lspaces, lkey), dtype=np.int64))
        if rkey not in sec["cols"]:
            sec["cols"][rkey] = int(np.prod(block_shape(rspaces, rkey), dtype=np.int64))
        sec["blocks"].append((lkey, rkey, arr))

    out = {}
    for c, sec in sectors.items():
        row_keys = sorted(sec["rows"])
        col_keys = sorted(sec["cols"])
        row_off, pos = {}, 0
        for kk in row_keys:
            row_off[kk] = pos
            pos += sec["rows"][kk]
        nrows = pos
        col_off, pos = {}, 0
        for kk in col_keys:
            col_off[kk] = pos
            pos += sec["cols"][kk]
        ncols = pos
        m = np.zeros((nrows, ncols), dtype=np.complex128)
        perm = left_axes + right_axes
        for lkey, rkey, arr in sec["blocks"]:
            a = np.transpose(arr, perm)
            r0, c0 = row_off[lkey], col_off[rkey]
            m[r0:r0 + sec["rows"][lkey], c0:c0 + sec["cols"][rkey]] = \
                a.reshape(sec["rows"][lkey], sec["cols"][rkey])
        out[c] = (row_keys, col_keys, row_off, col_off, sec["rows"], sec["cols"], m)
    return left_axes, right_axes, out


def _assemble_split(t, left_axes, right_axes, c, rows_info, cols_info, bond_deg,
                    u_mat, v_mat):
    """Scatter the per-sector factor matrices back into block tensors."""
    row_keys, row_off, row_sizes = rows_info
    col_keys, col_off, col_sizes = cols_info
    lspaces = [t.spaces[i] for i in left_axes]
    rspaces = [t.spaces[i] for i in right_axes]
    u_blocks = {}
    for lkey in row_keys:
        r0 = row_off[lkey]
        blk = u_mat[r0:r0 + row_sizes[lkey], :]
        shape = block_shape(lspaces, lkey) + (bond_deg,)
        u_blocks[lkey + (c,)] = np.ascontiguousarray(blk.reshape(shape))
    v_blocks = {}
    for rkey in col_keys:
        c0 = col_off[rkey]
        blk = v_mat[:, c0:c0 + col_sizes[rkey]]
        shape = (bond_deg,) + block_shape(rspaces, rkey)
        v_blocks[(c,) + rkey] = np.ascontiguousarray(blk.reshape(shape))
    return u_blocks, v_blocks


def svd_truncate(t: BlockTensor, left_axes: Sequence[int],
                 policy: TruncationPolicy = EXACT):
    """Split ``t = U * S * V`` across ``left_axes`` | rest with truncation.

    Singular values are ranked globally across all charge sectors and
    discarded from the tail until the squared discarded weight is within
    ``policy.eps**2`` and at most ``policy.chi_max`` values remain; values
    tied (within 1e-14 relative) with the last retained one are kept even
    if that slightly exceeds ``chi_max``, making the cut deterministic.

    Returns ``(U, S, V, discarded_weight)``.  U carries the left indices
    plus an incoming bond index, S is the diagonal bond matrix (outgoing,
    incoming), V the outgoing bond index plus the right indices, and
    ``discarded_weight = sqrt(sum of discarded squared singular values)``.
    """
    left_axes, right_axes, sectors = _split_groups(t, left_axes)

    svd = {}
    all_vals = []
    for c in sorted(sectors):
        row_keys, col_keys, row_off, col_off, row_sizes, col_sizes, m = sectors[c]
        try:
            u, s, vh = np.linalg.svd(m, full_matrices=False)
        except np.linalg.LinAlgError:
            u, s, vh = np.linalg.svd(m + 0.0, full_matrices=False,
                                     compute_uv=True, hermitian=False)
        svd[c] = (u, s, vh)
        for i, val in enumerate(s):
            all_vals.append((float(val), c, i))

    # global descending ranking with a deterministic tie order
    all_vals.sort(key=lambda x: (-x[0], x[1], x[2]))
    vals = np.array([v for v, _, _ in all_vals])
    total = vals.size
    smax = vals[0] if total else 0.0

    keep = int(np.sum(vals > smax * _RANK_TOL)) if smax > 0 else 0
    if policy.eps > 0 and keep > 0:
        tail = np.cumsum(vals[::-1] ** 2)[::-1]  # tail[i] = sum_{j>=i} s_j^2
        budget = policy.eps ** 2
        k = keep
        while k > 0 and tail[k - 1] <= budget:
            k -= 1
        keep = k
    if policy.chi_max is not None and keep > policy.chi_max:
        cut = policy.chi_max
        edge = vals[cut - 1]
        while cut < keep and vals[cut] >= edge * (1.0 - _TIE_TOL):
            cut += 1
        keep = cut
    if keep == 0 and total > 0:
        keep = 1  # never return an empty factorization of a nonzero tensor

    kept = all_vals[:keep]
    discarded_weight = float(np.sqrt(np.sum(vals[keep:] ** 2)))
    per_sector: dict[int, list[int]] = {}
    for _, c, i in kept:
        per_sector.setdefault(c, []).append(i)

    bond_sectors = tuple(sorted((c, len(ix)) for c, ix in per_sector.items()))
    bond_in = GradedSpace(bond_sectors, IN)
    bond_out = GradedSpace(bond_sectors, OUT)

    u_spaces = tuple(t.spaces[i] for i in left_axes) + (bond_in,)
    v_spaces = (bond_out,) + tuple(t.spaces[i] for i in right_axes)
    U = BlockTensor(u_spaces)
    V = BlockTensor(v_spaces)
    S = BlockTensor((bond_out, bond_in))
    for c, ix in per_sector.items():
        ix = sorted(ix)
        row_keys, col_keys, row_off, col_off, row_sizes, col_sizes, _ = sectors[c]
        u, s, vh = svd[c]
        ub, vb = _assemble_split(
            t, left_axes, right_axes, c,
            (row_keys, row_off, row_sizes), (col_keys, col_off, col_sizes),
            len(ix), u[:, ix], vh[ix, :])
        U.blocks.update(ub)
        V.blocks.update(vb)
        S.set_block((c, c), np.diag(s[ix]).astype(np.complex128))
    return U, S, V, discarded_weight


def qr_split(t: BlockTensor, left_axes: Sequence[int], side: str = "left"):
    """Rank-preserving orthogonal split (no truncation).

    ``side="left"``: ``t = Q * R`` with Q a left isometry over the left
    indices; ``side="right"``: ``t = R * Q`` with Q a right isometry.
    The bond dimension per sector is min(rows, cols), so deliberately
    padded zero directions survive (unlike an SVD split).
    """
    left_axes, right_axes, sectors = _split_groups(t, left_axes)
    bond_secs = []
    parts = {}
    for c in sorted(sectors):
        row_keys, col_keys, row_off, col_off, row_sizes, col_sizes, m = sectors[c]
        if side == "left":
            q, r = np.linalg.qr(m, mode="reduced")
            k = q.shape[1]
        elif side == "right":
            q2, r2 = np.linalg.qr(m.conj().T, mode="reduced")
            r, q = r2.conj().T, q2.conj().T
            k = q.shape[0]
        else:
            raise ValueError("side must be 'left' or 'right'")
        bond_secs.append((c, k))
        parts[c] = (q, r)

    bond_sectors = tuple(sorted(bond_secs))
    bond_in = GradedSpace(bond_sectors, IN)
    bond_out = GradedSpace(bond_sectors, OUT)
    Q = BlockTensor(tuple(t.spaces[i] for i in left_axes) + (bond_in,)) \
        if side == "left" else BlockTensor((bond_out,) + tuple(t.spaces[i] for i in right_axes))
    R = BlockTensor((bond_out,) + tuple(t.spaces[i] for i in right_axes)) \
        if side == "left" else BlockTensor(tuple(t.spaces[i] for i in left_axes) + (bond_in,))
    for c, (q, r) in parts.items():
        row_keys, col_keys, row_off, col_off, row_sizes, col_sizes, _ = sectors[c]
        k = q.shape[1] if side == "left" else q.shape[0]
        if side == "left":
            ub, vb = _assemble_split(
                t, left_axes, right_axes, c,
                (row_keys, row_off, row_sizes), (col_keys, col_off, col_sizes),
                k, q, r)
            Q.blocks.update(ub)
            R.blocks.update(vb)
        else:
            ub, vb = _assemble_split(
                t, left_axes, right_axes, c,
                (row_keys, row_off, row_sizes), (col_keys, col_off, col_sizes),
                k, r, q)
            R.blocks.update(ub)
            Q.blocks.update(vb)
    return (Q, R) if side == "left" else (R, Q)


def to_dense(t: BlockTensor) -> np.ndarray:
    """Embed into a dense array, sectors laid out in sorted-charge order."""
    out = np.zeros(tuple(s.dim for s in t.spaces), dtype=np.complex128)
    offs = [s.offsets() for s in t.spaces]
    for key, arr in t.blocks.items():
        sl = tuple(slice(offs[i][q], offs[i][q] + arr.shape[i]) for i, q in enumerate(key))
        out[sl] = arr
    return out


def from_dense(arr: np.ndarray, spaces: Sequence[GradedSpace]) -> BlockTensor:
    """Project a dense array onto the zero-flux blocks of ``spaces``."""
    t = BlockTensor(spaces)
    offs = [s.offsets() for s in spaces]
    for key in allowed_keys(spaces):
        shape = block_shape(spaces, key)
        sl = tuple(slice(offs[i][q], offs[i][q] + shape[i]) for i, q in enumerate(key))
        blk = np.asarray(arr[sl], dtype=np.complex128)
        t.set_block(key, blk)
    return t
