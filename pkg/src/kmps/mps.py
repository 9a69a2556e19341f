"""MPS states over the mode chain: canonical forms, application, measurement.

Chain tensors carry indices (left virtual OUT, physical OUT, right virtual
IN), so the right bond charge accumulates the physical charges and the
right boundary pins the total momentum sector.  The orthogonality center
is tracked explicitly; moves use rank-preserving QR so deliberately padded
zero directions survive, while compression goes through the truncating SVD.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .graded import (EXACT, IN, OUT, BlockTensor, GradedSpace, TruncationPolicy,
                     adjoint, add, contract, qr_split, svd_truncate, transpose)
from .hamiltonian import MpoOperator
from .layout import ModeLayout


@dataclass
class MpsState:
    """Variational state in a fixed total-momentum sector."""

    layout: ModeLayout
    sector: int
    tensors: list[BlockTensor]
    center: int

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    def bond_dims(self) -> list[int]:
        return [t.spaces[2].dim for t in self.tensors]

    def max_bond(self) -> int:
        return max(self.bond_dims()[:-1], default=1)

    def bond_sectors(self, j: int) -> tuple[int, ...]:
        """Charges present on the bond right of site j."""
        return self.tensors[j].spaces[2].charges

    def copy(self) -> "MpsState":
        return MpsState(self.layout, self.sector,
                        [t.copy() for t in self.tensors], self.center)


def _charge_dp(layout: ModeLayout, sector: int):
    """Forward-reachable and target-completable charge sets per cut."""
    charge_lists = [[layout.level_charge(k, n) for n in range(layout.phys_dim(k))]
                    for k in layout.modes]
    n = len(charge_lists)
    reach = [{0}]
    for cl in charge_lists:
        reach.append({c + v for c in reach[-1] for v in set(cl)})
    comp = [None] * (n + 1)
    comp[n] = {sector}
    for j in range(n - 1, -1, -1):
        comp[j] = {c - v for c in comp[j + 1] for v in set(charge_lists[j])}
    return charge_lists, reach, comp


def product_state_mps(layout: ModeLayout, levels) -> MpsState:
    """Bond-dimension-one state with the given level on every site."""
    levels = list(levels)
    if len(levels) != layout.n_sites:
        raise ValueError("one level per mode required")
    q = 0
    tensors = []
    for j, k in enumerate(layout.modes):
        phys = layout.mode_space(k, OUT)
        lq = layout.level_charge(k, levels[j])
        left = GradedSpace.make({q: 1}, OUT)
        right = GradedSpace.make({q + lq: 1}, IN)
        t = BlockTensor((left, phys, right))
        d = phys.degeneracy(lq)
        vec = np.zeros((1, d, 1), dtype=np.complex128)
        slot = levels[j] if k == 0 else 0
        vec[0, slot, 0] = 1.0
        t.set_block((q, lq, q + lq), vec)
        q += lq
        tensors.append(t)
    return MpsState(layout, q, tensors, layout.n_sites - 1)


def vacuum_mps(layout: ModeLayout) -> MpsState:
    zm_slot = layout.n_zm if layout.model.value == "sine-gordon" else 0
    return product_state_mps(
        layout, [zm_slot if k == 0 else 0 for k in layout.modes])


def random_sector_mps(layout: ModeLayout, sector: int, chi0: int,
                      rng: np.random.Generator) -> MpsState:
    """Normalized random state with the given total charge, bond dim <= chi0.

    Bond charges follow the reachable-and-completable sets, always keeping
    a guaranteed product-state path so the state cannot vanish.
    """
    charge_lists, reach, comp = _charge_dp(layout, sector)
    n = layout.n_sites
    if sector not in reach[n]:
        raise ValueError(f"no basis state carries total charge {sector}")

    # reference path guaranteeing support
    path = [0]
    q = 0
    for j in range(n):
        for v in sorted(set(charge_lists[j]), key=abs):
            if q + v in (reach[j + 1] & comp[j + 1]):
                q += v
                break
        path.append(q)

    bonds = []
    for j in range(n + 1):
        allowed = sorted(reach[j] & comp[j])
        ideal = sector * j / n
        allowed.sort(key=lambda c: (abs(c - ideal), c))
        pick = set(allowed[:max(1, chi0)])
        pick.add(path[j])
        bonds.append(GradedSpace.make({c: 1 for c in sorted(pick)}, OUT))
    bonds[0] = GradedSpace.make({0: 1}, OUT)
    bonds[n] = GradedSpace.make({sector: 1}, OUT)

    tensors = []
    for j, k in enumerate(layout.modes):
        phys = layout.mode_space(k, OUT)
        left, right = bonds[j], bonds[j + 1].flipped()
        t = BlockTensor((left, phys, right))
        for ql, _ in left.sectors:
            for qp, dp in phys.sectors:
                qr = ql + qp
                if right.degeneracy(qr):
                    shape = (1, dp, 1)
                    t.set_block((ql, qp, qr),
                                rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        tensors.append(t)
    psi = MpsState(layout, sector, tensors, n - 1)
    canonicalize(psi, 0)
    nrm = psi.tensors[0].norm()
    if nrm == 0:
        raise RuntimeError("random state vanished; layout/sector inconsistent")
    normalize(psi)
    return psi


def _push_right(psi: MpsState, j: int, policy: TruncationPolicy | None) -> float:
    t = psi.tensors[j]
    if policy is None:
        q_fac, r_fac = qr_split(t, (0, 1), side="left")
        disc = 0.0
    else:
        q_fac, s, v, disc = svd_truncate(t, (0, 1), policy)
        r_fac = contract(s, v, [(1, 0)])
    psi.tensors[j] = q_fac
    psi.tensors[j + 1] = contract(r_fac, psi.tensors[j + 1], [(1, 0)])
    return disc


def _push_left(psi: MpsState, j: int, policy: TruncationPolicy | None) -> float:
    t = psi.tensors[j]
    if policy is None:
        r_fac, q_fac = qr_split(t, (0,), side="right")
        disc = 0.0
    else:
        u, s, q_fac, disc = svd_truncate(t, (0,), policy)
        r_fac = contract(u, s, [(1, 0)])
    psi.tensors[j] = q_fac
    left = contract(psi.tensors[j - 1], r_fac, [(2, 0)])
    psi.tensors[j - 1] = left
    return disc


def canonicalize(psi: MpsState, center: int, policy: TruncationPolicy | None = None) -> float:
    """Move the orthogonality center, QR-exact or SVD-truncating."""
    disc2 = 0.0
    while psi.center < center:
        disc2 += _push_right(psi, psi.center, policy) ** 2
        psi.center += 1
    while psi.center > center:
        disc2 += _push_left(psi, psi.center, policy) ** 2
        psi.center -= 1
    return float(np.sqrt(disc2))


def norm(psi: MpsState) -> float:
    return psi.tensors[psi.center].norm()


def normalize(psi: MpsState) -> float:
    nrm = norm(psi)
    if nrm == 0:
        raise ZeroDivisionError("cannot normalize a vanishing state")
    c = psi.tensors[psi.center]
    psi.tensors[psi.center] = BlockTensor(
        c.spaces, {k: b / nrm for k, b in c.blocks.items()})
    return nrm


def compress(psi: MpsState, policy: TruncationPolicy) -> float:
    """Two-pass sweep bringing the center to 0 with truncation on the way back."""
    canonicalize(psi, psi.n_sites - 1, None)
    return canonicalize(psi, 0, policy)


def overlap(a: MpsState, b: MpsState) -> complex:
    """<a|b> by the zipper contraction; zero if the sectors differ."""
    if a.sector != b.sector:
        return 0.0
    env = None
    for j in range(a.n_sites):
        bra = adjoint(a.tensors[j])
        if env is None:
            env = contract(bra, b.tensors[j], [(0, 0), (1, 1)])
        else:
            tmp = contract(env, bra, [(0, 0)])
            env = contract(tmp, b.tensors[j], [(0, 0), (1, 1)])
    blk = env.blocks.get((a.sector, a.sector))
    return complex(blk[0, 0]) if blk is not None else 0.0


def left_env_start(psi: MpsState, op: MpoOperator) -> BlockTensor:
    e = BlockTensor((GradedSpace.make({0: 1}, OUT),
                     GradedSpace.make({0: 1}, OUT),
                     GradedSpace.make({0: 1}, IN)))
    e.set_block((0, 0, 0), np.ones((1, 1, 1), dtype=np.complex128))
    return e


def right_env_start(psi: MpsState, op: MpoOperator) -> BlockTensor:
    q = psi.sector
    e = BlockTensor((GradedSpace.make({q: 1}, IN),
                     GradedSpace.make({0: 1}, IN),
                     GradedSpace.make({q: 1}, OUT)))
    e.set_block((q, 0, q), np.ones((1, 1, 1), dtype=np.complex128))
    return e


def env_absorb_left(env: BlockTensor, bra_t: BlockTensor, w: BlockTensor,
                    ket_t: BlockTensor) -> BlockTensor:
    """Extend a left environment by one site: legs (bra OUT, mpo OUT, ket IN)."""
    tmp = contract(env, ket_t, [(2, 0)])            # (bra, w, p_ket, vR)
    tmp = contract(tmp, w, [(1, 0), (2, 2)])        # (bra, vR, row, wR)
    tmp = contract(tmp, adjoint(bra_t), [(0, 0), (2, 1)])  # (vR, wR, bra_vR)
    return transpose(tmp, (2, 1, 0))


def env_absorb_right(env: BlockTensor, bra_t: BlockTensor, w: BlockTensor,
                     ket_t: BlockTensor) -> BlockTensor:
    """Extend a right environment by one site: legs (bra IN, mpo IN, ket OUT)."""
    tmp = contract(ket_t, env, [(2, 2)])            # (vL, p, bra, w)
    tmp = contract(w, tmp, [(3, 3), (2, 1)])        # (wL, row, vL, bra)
    tmp = contract(adjoint(bra_t), tmp, [(2, 3), (1, 1)])  # (bra_vL, wL, vL)
    return tmp


def expectation(psi: MpsState, op: MpoOperator) -> complex:
    """<psi|O|psi> by the sandwich contraction (psi assumed normalized)."""
    env = left_env_start(psi, op)
    for j in range(psi.n_sites):
        env = env_absorb_left(env, psi.tensors[j], op.tensors[j], psi.tensors[j])
    blk = env.blocks.get((psi.sector, 0, psi.sector))
    return complex(blk[0, 0, 0]) if blk is not None else 0.0


def apply_mpo(op: MpoOperator, psi: MpsState, policy: TruncationPolicy = EXACT):
    """Zip-up contraction of O|psi> with per-bond truncation.

    Returns ``(result, discarded_weight)``; the result is unnormalized
    with its center at site 0 after the closing compression sweep.
    """
    if op.layout != psi.layout:
        raise ValueError("operator and state live on different layouts")
    n = psi.n_sites
    c = BlockTensor((GradedSpace.make({0: 1}, OUT),
                     GradedSpace.make({0: 1}, OUT),
                     GradedSpace.make({0: 1}, IN)))
    c.set_block((0, 0, 0), np.ones((1, 1, 1), dtype=np.complex128))
    disc2 = 0.0
    tensors = []
    for j in range(n):
        theta = contract(c, psi.tensors[j], [(2, 0)])          # (nb, w, p, vR)
        theta = contract(theta, op.tensors[j], [(1, 0), (2, 2)])  # (nb, vR, row, wR)
        if j < n - 1:
            u, s, v, d = svd_truncate(theta, (0, 2), policy)
            disc2 += d * d
            tensors.append(u)                                   # (nb, row, bond)
            c = contract(s, transpose(v, (0, 2, 1)), [(1, 0)])  # (bond, wR, vR)
        else:
            # both remaining legs are one-dimensional boundaries
            spaces = (theta.spaces[0], theta.spaces[2], theta.spaces[1])
            last = BlockTensor(spaces)
            for key, blk in theta.blocks.items():
                nb, vr, row, wr = key
                last.blocks[(nb, row, vr)] = np.ascontiguousarray(
                    blk.transpose(0, 2, 1, 3).reshape(blk.shape[0], blk.shape[2],
                                                      blk.shape[1]))
            tensors.append(last)
    out = MpsState(psi.layout, psi.sector, tensors, n - 1)
    disc2 += canonicalize(out, 0, policy) ** 2
    return out, float(np.sqrt(disc2))


def variance(psi: MpsState, h: MpoOperator, eps: float = 1e-10,
             chi_max: int | None = None) -> float:
    """<(H - E)^2> from one tight MPO application; non-negative up to noise."""
    e = expectation(psi, h).real
    hpsi, _ = apply_mpo(h, psi, TruncationPolicy(eps=eps, chi_max=chi_max))
    h2 = norm(hpsi) ** 2
    return float(h2 - e * e)


def bond_entropy(psi: MpsState, bond_index: int) -> float:
    """Von Neumann entropy (natural log) of the cut right of site bond_index."""
    work = psi if psi.center == bond_index else psi.copy()
    if work.center != bond_index:
        canonicalize(work, bond_index)
    _, s, _, _ = svd_truncate(work.tensors[bond_index], (0, 1), EXACT)
    lam = np.concatenate([np.diag(b).real for _, b in s.items()])
    p = lam ** 2
    p = p / p.sum()
    p = p[p > 1e-300]
    return float(-(p * np.log(p)).sum())


def single_mode_rdm(psi: MpsState, mode_k: int) -> np.ndarray:
    """Reduced density matrix of one mode, level-ordered, trace one."""
    j = psi.layout.site(mode_k)
    work = psi if psi.center == j else psi.copy()
    if work.center != j:
        canonicalize(work, j)
    t = work.tensors[j]
    rho = contract(t, adjoint(t), [(0, 0), (2, 2)])   # (p OUT, p' IN)
    d = psi.layout.phys_dim(mode_k)
    out = np.zeros((d, d), dtype=np.complex128)
    if mode_k == 0:
        blk = rho.blocks.get((0, 0))
        if blk is not None:
            out[:, :] = blk
    else:
        for n in range(d):
            blk = rho.blocks.get((mode_k * n, mode_k * n))
            if blk is not None:
                out[n, n] = blk[0, 0]
    tr = np.trace(out).real
    if abs(tr - 1.0) > 1e-8:
        out = out / tr
    return out


def add_mps(a: MpsState, b: MpsState, ca: complex = 1.0, cb: complex = 1.0) -> MpsState:
    """ca*|a> + cb*|b> by bond direct sums (boundaries shared)."""
    if a.layout != b.layout or a.sector != b.sector:
        raise ValueError("states must share layout and sector")
    n = a.n_sites
    tensors = []
    for j in range(n):
        ta, tb = a.tensors[j], b.tensors[j]
        if j == 0:
            left = ta.spaces[0]
            offl = {q: 0 for q in left.charges}
        else:
            left, offl = _dsum(ta.spaces[0], tb.spaces[0])
        if j == n - 1:
            right = ta.spaces[2]
            offr = {q: 0 for q in right.charges}
        else:
            right, offr = _dsum(ta.spaces[2], tb.spaces[2])
        t = BlockTensor((left, ta.spaces[1], right))
        fa = ca if j == 0 else 1.0
        fb = cb if j == 0 else 1.0
        for key, blk in ta.blocks.items():
            ql, qp, qr = key
            shape = (left.degeneracy(ql), blk.shape[1], right.degeneracy(qr))
            tgt = t.blocks.setdefault(key, np.zeros(shape, dtype=np.complex128))
            tgt[:blk.shape[0], :, :blk.shape[2]] += fa * blk
        for key, blk in tb.blocks.items():
            ql, qp, qr = key
            shape = (left.degeneracy(ql), blk.shape[1], right.degeneracy(qr))
            tgt = t.blocks.setdefault(key, np.zeros(shape, dtype=np.complex128))
            ol, orr = offl.get(ql, 0), offr.get(qr, 0)
            tgt[ol:ol + blk.shape[0], :, orr:orr + blk.shape[2]] += fb * blk
        tensors.append(t)
    out = MpsState(a.layout, a.sector, tensors, n - 1)
    canonicalize(out, 0)
    return out


def _dsum(sa: GradedSpace, sb: GradedSpace):
    if sa.sign != sb.sign:
        raise ValueError("direct sum needs equal directions")
    degs = dict(sa.sectors)
    off = {}
    for q, d in sb.sectors:
        off[q] = degs.get(q, 0)
        degs[q] = degs.get(q, 0) + d
    return GradedSpace.make(degs, sa.sign), off


def mps_dense_vector(psi: MpsState, basis) -> np.ndarray:
    """Expand into the ordering of a DenseBasis (small layouts only)."""
    layout = psi.layout
    rows = {0: [()]}
    acc = {0: np.ones((1, 1), dtype=np.complex128)}
    for j, k in enumerate(layout.modes):
        t = psi.tensors[j]
        phys = t.spaces[1]
        levels_of = {q: ([q // k] if k != 0 else list(range(phys.degeneracy(0))))
                     for q in phys.charges}
        new_rows, offsets = {}, {}
        for qp in phys.charges:
            for qr in sorted(rows):
                q2 = qr + qp
                seg = [r + (lv,) for r in rows[qr] for lv in levels_of[qp]]
                offsets[(q2, qp)] = len(new_rows.setdefault(q2, []))
                new_rows[q2].extend(seg)
        new_acc = {}
        for key, blk in t.blocks.items():
            ql, qp, qr = key
            if ql not in acc:
                continue
            arr = acc[ql]
            out = np.tensordot(arr, blk, axes=([1], [0]))  # (n, d, chiR)
            out = out.reshape(arr.shape[0] * blk.shape[1], blk.shape[2])
            tgt = new_acc.get(qr)
            if tgt is None:
                tgt = np.zeros((len(new_rows[qr]), t.spaces[2].degeneracy(qr)),
                               dtype=np.complex128)
                new_acc[qr] = tgt
            o = offsets[(qr, qp)]
            tgt[o:o + out.shape[0], :] += out
        rows, acc = new_rows, new_acc
    vec = np.zeros(len(basis), dtype=np.complex128)
    if psi.sector in acc:
        for state, amp in zip(rows[psi.sector], acc[psi.sector][:, 0]):
            vec[basis.index[state]] = amp
    return vec


# ---------------------------------------------------------------------------
# binary checkpoint format (little-endian):
#   magic "KMPS1\n" | u32 len + layout JSON | u32 len + sha256 hex of that
#   JSON | i64 sector | i64 center | i64 n_tensors | per tensor:
#   i64 n_spaces | per space: i8 sign, i64 n_sectors, (i64 charge, i64 deg)* |
#   i64 n_blocks | per block (canonical key order): i64 key values, raw
#   complex128 block data (shape implied by spaces and key).
# ---------------------------------------------------------------------------

_MAGIC = b"KMPS1\n"


def layout_hash(layout: ModeLayout) -> str:
    js = json.dumps(layout.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(js).hexdigest()


def save_mps(psi: MpsState, path) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        js = json.dumps(psi.layout.to_dict(), sort_keys=True).encode()
        f.write(struct.pack("<I", len(js)))
        f.write(js)
        hx = hashlib.sha256(js).hexdigest().encode()
        f.write(struct.pack("<I", len(hx)))
        f.write(hx)
        f.write(struct.pack("<qqq", psi.sector, psi.center, len(psi.tensors)))
        for t in psi.tensors:
            f.write(struct.pack("<q", len(t.spaces)))
            for s in t.spaces:
                f.write(struct.pack("<bq", s.sign, len(s.sectors)))
                for q, d in s.sectors:
                    f.write(struct.pack("<qq", q, d))
            items = t.items()
            f.write(struct.pack("<q", len(items)))
            for key, blk in items:
                f.write(struct.pack(f"<{len(key)}q", *key))
                f.write(np.ascontiguousarray(blk, dtype="<c16").tobytes())


def load_mps(path) -> MpsState:
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise ValueError("not a kmps checkpoint")
        (jlen,) = struct.unpack("<I", f.read(4))
        js = f.read(jlen)
        (hlen,) = struct.unpack("<I", f.read(4))
        hx = f.read(hlen).decode()
        if hashlib.sha256(js).hexdigest() != hx:
            raise ValueError("layout hash mismatch; corrupt checkpoint")
        layout = ModeLayout.from_dict(json.loads(js))
        sector, center, ntens = struct.unpack("<qqq", f.read(24))
        tensors = []
        for _ in range(ntens):
            (nsp,) = struct.unpack("<q", f.read(8))
            spaces = []
            for _ in range(nsp):
                sign, nsec = struct.unpack("<bq", f.read(9))
                secs = [struct.unpack("<qq", f.read(16)) for _ in range(nsec)]
                spaces.append(GradedSpace(tuple((int(q), int(d)) for q, d in secs),
                                          int(sign)))
            t = BlockTensor(tuple(spaces))
            (nblk,) = struct.unpack("<q", f.read(8))
            for _ in range(nblk):
                key = struct.unpack(f"<{nsp}q", f.read(8 * nsp))
                shape = tuple(spaces[i].degeneracy(q) for i, q in enumerate(key))
                count = int(np.prod(shape, dtype=np.int64))
                data = np.frombuffer(f.read(16 * count), dtype="<c16")
                t.set_block(key, data.reshape(shape))
            tensors.append(t)
    return MpsState(layout, int(sector), tensors, int(center))
