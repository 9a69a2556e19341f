"""Dense Hamiltonian truncation on tiny layouts: the ground-truth oracle.

The basis is the full occupation-number enumeration of a layout; matrix
elements of the interaction are evaluated directly from the exact ladder
series, with the momentum Kronecker delta imposed state by state.  This
path is deliberately dense and simple: it shares no code with the MPO
assembly it is used to check (the single-mode elements come from the
series, not the Laguerre closed form).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .hamiltonian import MpoOperator, dispersion
from .layout import ModeLayout, ModelKind
from .vertex import exp_ladder_series

DEFAULT_DIM_CAP = 200_000


@dataclass
class DenseBasis:
    """Exhaustive occupation basis with per-state energy and momentum charge."""

    layout: ModeLayout
    states: list[tuple[int, ...]]
    charges: np.ndarray
    energies: np.ndarray
    index: dict

    def __len__(self):
        return len(self.states)


def _site_tables(layout: ModeLayout, params):
    """Per-site (charges, free energies) indexed by level slot."""
    tables = []
    for k in layout.modes:
        if k == 0:
            if layout.model is ModelKind.SINE_GORDON:
                ells = np.arange(-layout.n_zm, layout.n_zm + 1)
                e = ells.astype(np.float64) ** 2 / (2.0 * params.length_L * params.radius ** 2)
                q = np.zeros_like(ells)
            else:
                n = np.arange(layout.n_zm + 1)
                e = params.boson_mass * n.astype(np.float64)
                q = np.zeros_like(n)
        else:
            n = np.arange(layout.occupation(k) + 1)
            e = dispersion(layout.model, k, params) * n.astype(np.float64)
            q = k * n
        tables.append((q, e))
    return tables


def enumerate_basis(layout: ModeLayout, params, sector_P: int | None = None,
                    cap: int = DEFAULT_DIM_CAP) -> DenseBasis:
    """All basis states of the layout, optionally one momentum sector.

    States are level tuples in chain order (zero-mode slot included);
    ordering is lexicographic with the rightmost mode fastest.
    """
    if layout.total_dim > cap:
        raise ValueError(f"layout dimension {layout.total_dim} exceeds cap {cap}")
    tables = _site_tables(layout, params)
    dims = [layout.phys_dim(k) for k in layout.modes]
    states, charges, energies = [], [], []
    for levels in itertools.product(*(range(d) for d in dims)):
        q = sum(int(tables[j][0][lv]) for j, lv in enumerate(levels))
        if sector_P is not None and q != sector_P:
            continue
        states.append(levels)
        charges.append(q)
        energies.append(sum(float(tables[j][1][lv]) for j, lv in enumerate(levels)))
    if sector_P is not None and not states:
        raise ValueError(f"no basis state carries total charge {sector_P}")
    return DenseBasis(layout, states, np.array(charges, dtype=np.int64),
                      np.array(energies, dtype=np.float64),
                      {s: i for i, s in enumerate(states)})


def _series_vertex_matrix(dim: int, alpha: float, omega: float, length_L: float) -> np.ndarray:
    """Single-mode vertex factors straight from the exact ladder series."""
    z = 1j * alpha / math.sqrt(2.0 * omega * length_L)
    g = np.empty((dim, dim), dtype=np.complex128)
    for nb in range(dim):
        for nk in range(dim):
            g[nb, nk] = exp_ladder_series(nb, nk, z, z)
    return g


def _zero_mode_vertex(layout: ModeLayout, params, sign: int) -> np.ndarray:
    if layout.model is ModelKind.SINE_GORDON:
        d = 2 * layout.n_zm + 1
        m = np.zeros((d, d), dtype=np.complex128)
        for i in range(d):
            if 0 <= i + sign < d:
                m[i + sign, i] = 1.0
        return m
    alpha = sign * math.sqrt(4.0 * math.pi)
    return _series_vertex_matrix(layout.n_zm + 1, alpha, params.boson_mass,
                                 params.length_L)


def build_dense_h(basis: DenseBasis, params) -> np.ndarray:
    """Dense Hamiltonian matrix over the basis; Hermitian by construction.

    The interaction couples only equal-momentum states; within a sector
    the element is the product of single-mode series factors times the
    zero-mode factor and the +/- phases, with the overall system-size
    factor from the space integration.
    """
    layout = basis.layout
    sg = layout.model is ModelKind.SINE_GORDON
    alpha = params.beta if sg else math.sqrt(4.0 * math.pi)
    lam = params.coupling
    L = params.length_L

    h = np.diag(basis.energies.astype(np.complex128))
    if lam == 0.0:
        return h

    gmats = {}
    for j, k in enumerate(layout.modes):
        if k == 0:
            gmats[j] = _zero_mode_vertex(layout, params, +1)
        else:
            gmats[j] = _series_vertex_matrix(layout.phys_dim(k), alpha,
                                             dispersion(layout.model, k, params), L)
    zm_minus = _zero_mode_vertex(layout, params, -1)

    if sg:
        c_plus = c_minus = lam * (-0.5) * L
    else:
        c_plus = lam * 0.5 * L * np.exp(-1j * params.theta)
        c_minus = lam * 0.5 * L * np.exp(+1j * params.theta)

    levels = np.array(basis.states, dtype=np.int64)
    zm_site = layout.site(0)
    for q in np.unique(basis.charges):
        idx = np.nonzero(basis.charges == q)[0]
        v_plus = np.ones((idx.size, idx.size), dtype=np.complex128)
        v_minus = np.ones_like(v_plus)
        for j, k in enumerate(layout.modes):
            rows = levels[idx, j]
            if j == zm_site:
                v_plus *= gmats[j][np.ix_(rows, rows)]
                v_minus *= zm_minus[np.ix_(rows, rows)]
            else:
                gp = gmats[j][np.ix_(rows, rows)]
                v_plus *= gp
                v_minus *= np.conj(gp)
        block = c_plus * v_plus + c_minus * v_minus
        h[np.ix_(idx, idx)] += block

    herm = np.max(np.abs(h - h.conj().T))
    if herm > 1e-10 * max(1.0, np.max(np.abs(h))):
        raise AssertionError(f"dense Hamiltonian is not Hermitian ({herm:.2e})")
    return h


def dense_spectrum(h_dense: np.ndarray, n_lowest: int):
    """Lowest eigenpairs of a Hermitian matrix, residual-checked."""
    vals, vecs = np.linalg.eigh(h_dense)
    n = min(n_lowest, vals.size)
    for i in range(n):
        res = np.linalg.norm(h_dense @ vecs[:, i] - vals[i] * vecs[:, i])
        if res > 1e-9 * max(1.0, abs(vals[i])):
            raise AssertionError(f"eigenpair {i} residual {res:.2e}")
    return vals[:n], vecs[:, :n]


def _charge_sets(layout: ModeLayout):
    return [sorted({layout.level_charge(k, n) for n in range(layout.phys_dim(k))})
            for k in layout.modes]


def _completable(layout: ModeLayout, target: int):
    """comp[j] = partial charges after j sites that can still reach target."""
    sets = _charge_sets(layout)
    n = len(sets)
    comp = [None] * (n + 1)
    comp[n] = {target}
    for j in range(n - 1, -1, -1):
        comp[j] = {c - v for c in comp[j + 1] for v in sets[j]}
    return comp


def mpo_dense_matrix(op: MpoOperator, sector_P: int | None = None):
    """Contract an MPO chain into dense per-sector matrices.

    Returns ``(mats, states)`` where ``mats[q]`` is the dense matrix of the
    total-charge-q block and ``states[q]`` the corresponding level tuples
    (same ordering for rows and columns).  The contraction carries charge-
    resolved partial row/column enumerations, so only momentum-conserving
    entries are ever materialized.
    """
    layout = op.layout
    comp = _completable(layout, sector_P) if sector_P is not None else None

    rows: dict[int, list[tuple]] = {0: [()]}
    acc: dict[tuple[int, int], np.ndarray] = {(0, 0): np.ones((1, 1, 1), dtype=np.complex128)}

    for j, k in enumerate(layout.modes):
        t = op.tensors[j]
        phys = t.spaces[1]
        levels_of = {q: ([q // k] if k != 0 else list(range(phys.degeneracy(0))))
                     for q in phys.charges}

        new_rows: dict[int, list[tuple]] = {}
        offsets: dict[tuple[int, int], int] = {}
        for qp in phys.charges:
            for qr in sorted(rows):
                q2 = qr + qp
                if comp is not None and q2 not in comp[j + 1]:
                    continue
                seg = [r + (lv,) for r in rows[qr] for lv in levels_of[qp]]
                offsets[(q2, qp)] = len(new_rows.setdefault(q2, []))
                new_rows[q2].extend(seg)

        new_acc: dict[tuple[int, int], np.ndarray] = {}
        for key, blk in t.blocks.items():
            cl, qrp, qcp, cr = key
            d_r, d_c = blk.shape[1], blk.shape[2]
            for (Qr, Qc), arr in acc.items():
                if Qc - Qr != cl:
                    continue
                Qr2, Qc2 = Qr + qrp, Qc + qcp
                if (Qr2, qrp) not in offsets or (Qc2, qcp) not in offsets:
                    continue
                out = np.tensordot(arr, blk, axes=([2], [0]))  # (nr, nc, d_r, d_c, dcr)
                nr, nc = arr.shape[0], arr.shape[1]
                out = out.transpose(0, 2, 1, 3, 4).reshape(nr * d_r, nc * d_c, blk.shape[3])
                tgt = new_acc.get((Qr2, Qc2))
                if tgt is None:
                    tgt = np.zeros((len(new_rows[Qr2]), len(new_rows[Qc2]), blk.shape[3]),
                                   dtype=np.complex128)
                    new_acc[(Qr2, Qc2)] = tgt
                orr = offsets[(Qr2, qrp)]
                occ = offsets[(Qc2, qcp)]
                tgt[orr:orr + nr * d_r, occ:occ + nc * d_c, :] += out
        rows, acc = new_rows, new_acc

    mats, states = {}, {}
    for (Qr, Qc), arr in acc.items():
        if Qr != Qc:
            raise AssertionError("operator is not momentum conserving")
        mats[Qr] = arr[:, :, 0]
        states[Qr] = rows[Qr]
    return mats, states


def mpo_dense_full(op: MpoOperator, basis: DenseBasis) -> np.ndarray:
    """Dense matrix of an MPO in the ordering of ``basis`` (small layouts)."""
    mats, states = mpo_dense_matrix(op)
    n = len(basis)
    h = np.zeros((n, n), dtype=np.complex128)
    for q, m in mats.items():
        ids = [basis.index[s] for s in states[q]]
        h[np.ix_(ids, ids)] = m
    return h
