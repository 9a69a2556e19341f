"""Free and interacting Hamiltonian MPOs for the two boson models.

The free part is a bond-dimension-two ladder of mode number operators plus
a zero-mode term.  The interaction is the space-integrated cosine: per-mode
vertex tensors contracted with the momentum-transfer projector chain, then
direct-summed with the free part, giving a total MPO bond dimension of
``2 * D_delta + 2`` at every internal bond.

Index convention for MPO chain tensors: (left virtual IN, bra/row OUT,
ket/col IN, right virtual OUT); outer virtual spaces are one-dimensional
and charge zero for momentum-conserving operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .deltamps import DeltaMps, build_delta_mps
from .graded import IN, OUT, BlockTensor, GradedSpace, transpose, contract
from .layout import ModeLayout, ModelKind
from .vertex import VertexArg, mode_vertex_tensor, zero_mode_shift


def kappa(delta_dim: float) -> float:
    """Dimensionless coupling prefactor of the compact-boson cosine.

    ``kappa = 2 Gamma(D) / (pi Gamma(1-D)) * [sqrt(pi) Gamma(1/(2-2D)) /
    (2 Gamma(D/(2-2D)))]^(2-2D)`` for 0 < D < 1; at D = 1/2 this is 1/pi.
    """
    d = delta_dim
    if not 0.0 < d < 1.0:
        raise ValueError("delta_dim must lie in (0, 1)")
    try:
        bracket = (math.sqrt(math.pi) * math.gamma(1.0 / (2 - 2 * d))
                   / (2.0 * math.gamma(d / (2 - 2 * d))))
        return (2.0 * math.gamma(d) / (math.pi * math.gamma(1.0 - d))
                * bracket ** (2 - 2 * d))
    except OverflowError as exc:
        raise ValueError(f"gamma overflow evaluating kappa({d})") from exc


@dataclass(frozen=True)
class SineGordonParams:
    """Compact massless boson with cosine interaction; soliton mass is the unit."""

    delta_dim: float
    length_L: float
    soliton_mass: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.delta_dim < 1.0:
            raise ValueError("delta_dim must lie in (0, 1)")
        if self.length_L <= 0 or self.soliton_mass <= 0:
            raise ValueError("length_L and soliton_mass must be positive")

    @property
    def beta(self) -> float:
        return math.sqrt(8.0 * math.pi * self.delta_dim)

    @property
    def radius(self) -> float:
        return 1.0 / self.beta

    @property
    def coupling(self) -> float:
        ms = self.soliton_mass
        return ms * ms * (2.0 * math.pi / (ms * self.length_L)) ** (2 * self.delta_dim) \
            * kappa(self.delta_dim)

    @property
    def model(self) -> ModelKind:
        return ModelKind.SINE_GORDON


@dataclass(frozen=True)
class SchwingerParams:
    """Bosonized massive fermion model; the fermion charge e is the unit."""

    fermion_mass: float
    length_L: float
    theta: float = 0.0
    charge_e: float = 1.0

    def __post_init__(self):
        if self.fermion_mass < 0:
            raise ValueError("fermion_mass must be non-negative")
        if self.length_L <= 0 or self.charge_e <= 0:
            raise ValueError("length_L and charge_e must be positive")

    @property
    def boson_mass(self) -> float:
        return self.charge_e / math.sqrt(math.pi)

    @property
    def coupling(self) -> float:
        # cosine coefficient fixed by the massless-model condensate:
        # first order in m, the vacuum energy density shifts by
        # -(exp(gamma)/2pi) M m cos(theta)
        return -(self.fermion_mass * self.boson_mass / (2.0 * math.pi)) \
            * math.exp(np.euler_gamma)

    @property
    def model(self) -> ModelKind:
        return ModelKind.MASSIVE_SCHWINGER


def first_breather_mass(delta_dim: float, soliton_mass: float = 1.0) -> float:
    """Lightest bound-state mass, ``2 M_s sin(pi*D/2 / (1-D))``, for D < 1/2."""
    return 2.0 * soliton_mass * math.sin(math.pi * delta_dim / 2.0 / (1.0 - delta_dim))


def dispersion(model: ModelKind, k: int, params) -> float:
    """Mode frequency: ``2 pi |k| / L`` (massless) or the relativistic branch."""
    if model is ModelKind.SINE_GORDON:
        if k == 0:
            raise ValueError("the compact zero mode has no harmonic frequency")
        return 2.0 * math.pi * abs(k) / params.length_L
    p = 2.0 * math.pi * k / params.length_L
    return math.sqrt(p * p + params.boson_mass ** 2)


@dataclass
class MpoOperator:
    """Chain of 4-index block tensors with one-dimensional outer bonds."""

    tensors: list[BlockTensor]
    layout: ModeLayout

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    def bond_dims(self) -> list[int]:
        """Dimensions of the virtual bonds, outer boundaries included."""
        dims = [self.tensors[0].spaces[0].dim]
        dims += [t.spaces[3].dim for t in self.tensors]
        return dims


def mpo_scale(op: MpoOperator, c: complex) -> MpoOperator:
    tensors = [BlockTensor(t.spaces, {k: c * b for k, b in t.blocks.items()})
               if i == 0 else t for i, t in enumerate(op.tensors)]
    return MpoOperator(tensors, op.layout)


def _sum_space(sa: GradedSpace, sb: GradedSpace):
    """Direct sum of two equally-directed spaces plus b's slot offsets."""
    if sa.sign != sb.sign:
        raise ValueError("direct sum requires equal directions")
    degs = dict(sa.sectors)
    off_b = {}
    for q, d in sb.sectors:
        off_b[q] = degs.get(q, 0)
        degs[q] = degs.get(q, 0) + d
    return GradedSpace.make(degs, sa.sign), off_b


def mpo_add(a: MpoOperator, b: MpoOperator) -> MpoOperator:
    """Structural sum: virtual direct sum on internal bonds, shared boundaries."""
    if a.layout != b.layout or a.n_sites != b.n_sites:
        raise ValueError("operands act on different layouts")
    n = a.n_sites
    tensors = []
    for j in range(n):
        ta, tb = a.tensors[j], b.tensors[j]
        if ta.spaces[1] != tb.spaces[1] or ta.spaces[2] != tb.spaces[2]:
            raise ValueError("physical spaces differ")
        if j == 0:
            if ta.spaces[0] != tb.spaces[0]:
                raise ValueError("left boundary spaces differ")
            left, off_b_left = ta.spaces[0], {q: 0 for q in ta.spaces[0].charges}
        else:
            left, off_b_left = _sum_space(ta.spaces[0], tb.spaces[0])
        if j == n - 1:
            if ta.spaces[3] != tb.spaces[3]:
                raise ValueError("right boundary spaces differ")
            right, off_b_right = ta.spaces[3], {q: 0 for q in ta.spaces[3].charges}
        else:
            right, off_b_right = _sum_space(ta.spaces[3], tb.spaces[3])

        out = BlockTensor((left, ta.spaces[1], ta.spaces[2], right))

        def put(t, offsets_l, offsets_r):
            for key, blk in t.blocks.items():
                cl, qr, qc, cr = key
                shape = (left.degeneracy(cl), blk.shape[1], blk.shape[2],
                         right.degeneracy(cr))
                tgt = out.blocks.get(key)
                if tgt is None:
                    tgt = np.zeros(shape, dtype=np.complex128)
                    out.blocks[key] = tgt
                ol = offsets_l.get(cl, 0)
                orr = offsets_r.get(cr, 0)
                tgt[ol:ol + blk.shape[0], :, :, orr:orr + blk.shape[3]] += blk

        put(ta, {q: 0 for q, _ in ta.spaces[0].sectors}, {q: 0 for q, _ in ta.spaces[3].sectors})
        put(tb, off_b_left, off_b_right)
        tensors.append(out)
    return MpoOperator(tensors, a.layout)


def mpo_sum(ops) -> MpoOperator:
    out = ops[0]
    for op in ops[1:]:
        out = mpo_add(out, op)
    return out


def identity_mpo(layout: ModeLayout) -> MpoOperator:
    bond = GradedSpace.make({0: 1}, OUT)
    tensors = []
    for k in layout.modes:
        phys = layout.mode_space(k, OUT)
        t = BlockTensor((bond.flipped(), phys, phys.flipped(), bond))
        for q, d in phys.sectors:
            t.set_block((0, q, q, 0), np.eye(d, dtype=np.complex128).reshape(1, d, d, 1))
        tensors.append(t)
    return MpoOperator(tensors, layout)


def _zero_mode_energy(layout: ModeLayout, params) -> np.ndarray:
    """Diagonal zero-mode energies in slot order."""
    if layout.model is ModelKind.SINE_GORDON:
        r2 = params.radius ** 2
        ells = np.arange(-layout.n_zm, layout.n_zm + 1, dtype=np.float64)
        return ells ** 2 / (2.0 * params.length_L * r2)
    return params.boson_mass * np.arange(layout.n_zm + 1, dtype=np.float64)


def free_mpo(layout: ModeLayout, params) -> MpoOperator:
    """Sum of per-mode number operators; exactly bond dimension two."""
    trivial = GradedSpace.make({0: 1}, OUT)
    wide = GradedSpace.make({0: 2}, OUT)
    n = layout.n_sites
    tensors = []
    for j, k in enumerate(layout.modes):
        phys = layout.mode_space(k, OUT)
        if k == 0:
            diag = {0: np.diag(_zero_mode_energy(layout, params)).astype(np.complex128)}
        else:
            ek = dispersion(layout.model, k, params)
            diag = {q: np.array([[ek * (q // k)]], dtype=np.complex128)
                    for q in phys.charges}
        left = trivial if j == 0 else wide
        right = trivial if j == n - 1 else wide
        t = BlockTensor((left.flipped(), phys, phys.flipped(), right))
        for q, d in phys.sectors:
            eye = np.eye(d, dtype=np.complex128)
            blk = np.zeros((left.dim, d, d, right.dim), dtype=np.complex128)
            if j == 0:
                blk[0, :, :, 0] = eye
                blk[0, :, :, 1] = diag[q]
            elif j == n - 1:
                blk[0, :, :, 0] = diag[q]
                blk[1, :, :, 0] = eye
            else:
                blk[0, :, :, 0] = eye
                blk[0, :, :, 1] = diag[q]
                blk[1, :, :, 1] = eye
            t.set_block((0, q, q, 0), blk)
        tensors.append(t)
    return MpoOperator(tensors, layout)


def _sg_shift_matrix(n_units: int, n_zm: int) -> np.ndarray:
    """Zero-mode ladder shift by an integer number of charge units."""
    d = 2 * n_zm + 1
    if abs(n_units) == 1:
        return zero_mode_shift(n_units, n_zm)
    m = np.zeros((d, d), dtype=np.complex128)
    for i in range(d):
        if 0 <= i + n_units < d:
            m[i + n_units, i] = 1.0
    return m


def vertex_mpo(layout: ModeLayout, alpha: float, params,
               delta: DeltaMps | None = None) -> MpoOperator:
    """Space-integrated normal-ordered exponential ``int dx :exp(i alpha Phi):``.

    Per-mode vertex tensors are contracted with the transfer projector
    chain over the transfer index; the overall factor L from the space
    integration is absorbed into the first site.  For the compact model
    ``alpha`` must be an integer multiple of the inverse radius, and the
    zero mode contributes the corresponding ladder shift.
    """
    if delta is None:
        delta = build_delta_mps(layout, 0)
    sg = layout.model is ModelKind.SINE_GORDON
    if sg:
        units = alpha * params.radius
        n_units = round(units)
        if abs(units - n_units) > 1e-9:
            raise ValueError("compact model: alpha must be an integer multiple of 1/R")

    tensors = []
    for j, k in enumerate(layout.modes):
        dproj = delta.tensors[j]
        if k == 0 and sg:
            shift = _sg_shift_matrix(n_units, layout.n_zm)
            d0 = shift.shape[0]
            space = layout.mode_space(0, OUT)
            vt = BlockTensor((space, space.flipped(),
                              GradedSpace.make({0: 1}, OUT)))
            vt.set_block((0, 0, 0), shift.reshape(d0, d0, 1))
        else:
            omega = dispersion(layout.model, k, params)
            cap = layout.n_zm if k == 0 else layout.occupation(k)
            vt = mode_vertex_tensor(k, VertexArg(alpha, omega, params.length_L), cap)
        t = contract(vt, dproj, [(2, 1)])        # (row, col, vL, vR)
        t = transpose(t, (2, 0, 1, 3))            # (vL, row, col, vR)
        if j == 0:
            t = BlockTensor(t.spaces, {key: params.length_L * b
                                       for key, b in t.blocks.items()})
        tensors.append(t)
    return MpoOperator(tensors, layout)


def _charged_site_mpo(layout: ModeLayout, site_ops: dict) -> MpoOperator:
    """MPO acting nontrivially on a few sites, identities elsewhere.

    ``site_ops`` maps mode k to a level-basis matrix; the virtual bond
    carries the accumulated charge the operators have added so far, so a
    compensating pair of ladder operators is momentum conserving overall.
    """
    shifts = {}
    for k, mat in site_ops.items():
        nz = np.argwhere(np.abs(mat) > 0)
        if nz.size == 0:
            raise ValueError(f"site operator at mode {k} is zero")
        deltas = {layout.level_charge(k, int(r)) - layout.level_charge(k, int(c))
                  for r, c in nz}
        if len(deltas) != 1:
            raise ValueError("site operator must shift the mode charge uniformly")
        shifts[k] = deltas.pop()

    tensors = []
    c = 0
    for k in layout.modes:
        phys = layout.mode_space(k, OUT)
        shift = shifts.get(k, 0)
        c_next = c - shift
        left = GradedSpace.make({c: 1}, IN)
        right = GradedSpace.make({c_next: 1}, OUT)
        t = BlockTensor((left, phys, phys.flipped(), right))
        if k in site_ops:
            mat = np.asarray(site_ops[k], dtype=np.complex128)
            if k == 0:
                t.set_block((c, 0, 0, c_next),
                            mat.reshape(1, mat.shape[0], mat.shape[1], 1))
            else:
                for nr in range(mat.shape[0]):
                    for nc in range(mat.shape[1]):
                        if mat[nr, nc] != 0:
                            t.set_block((c, k * nr, k * nc, c_next),
                                        mat[nr, nc] * np.ones((1, 1, 1, 1), complex))
        else:
            for q, d in phys.sectors:
                t.set_block((c, q, q, c_next),
                            np.eye(d, dtype=np.complex128).reshape(1, d, d, 1))
        c = c_next
        tensors.append(t)
    if c != 0:
        raise ValueError("site operators do not conserve total momentum")
    return MpoOperator(tensors, layout)


def _raise_matrix(dim: int) -> np.ndarray:
    m = np.zeros((dim, dim), dtype=np.complex128)
    for n in range(dim - 1):
        m[n + 1, n] = math.sqrt(n + 1.0)
    return m


def excitation_mpos(layout: ModeLayout) -> list[MpoOperator]:
    """Charge-neutral low-lying excitation generators for seeding searches.

    Zero-mode raise/shift plus opposite-momentum pair creations; applying
    these to a ground state spans the candidate one-particle basins of the
    momentum-zero sector.
    """
    ops = []
    d0 = layout.zero_mode_dim
    if layout.model is ModelKind.SINE_GORDON:
        if layout.n_zm > 0:
            ops.append(_charged_site_mpo(layout, {0: zero_mode_shift(+1, layout.n_zm)}))
            ops.append(_charged_site_mpo(layout, {0: zero_mode_shift(-1, layout.n_zm)}))
    else:
        if d0 > 1:
            ops.append(_charged_site_mpo(layout, {0: _raise_matrix(d0)}))
    for k in range(1, min(2, layout.k_max) + 1):
        dk = layout.occupation(k) + 1
        if dk < 2:
            continue
        ops.append(_charged_site_mpo(
            layout, {k: _raise_matrix(dk), -k: _raise_matrix(dk)}))
    return ops


def assemble_hamiltonian(layout: ModeLayout, params,
                         delta: DeltaMps | None = None) -> MpoOperator:
    """Full Hamiltonian MPO: free part plus the phased pair of exponentials."""
    if delta is None:
        delta = build_delta_mps(layout, 0)
    h0 = free_mpo(layout, params)
    lam = params.coupling
    if layout.model is ModelKind.SINE_GORDON:
        alpha = params.beta
        c_plus = c_minus = -0.5 * lam
    else:
        alpha = math.sqrt(4.0 * math.pi)
        c_plus = 0.5 * lam * np.exp(-1j * params.theta)
        c_minus = 0.5 * lam * np.exp(+1j * params.theta)
    if lam == 0.0:
        return h0
    v_plus = mpo_scale(vertex_mpo(layout, +alpha, params, delta), c_plus)
    v_minus = mpo_scale(vertex_mpo(layout, -alpha, params, delta), c_minus)
    return mpo_sum([h0, v_plus, v_minus])
