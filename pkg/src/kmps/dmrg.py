"""Two-site DMRG in a fixed momentum sector.

The local problem on each neighboring pair is an extremal Hermitian
eigenproblem solved by Lanczos with full reorthogonalization and thick
restarts, seeded with the current two-site tensor.  Excited states are
obtained by projecting the local problem against the environments of
already-converged lower states.  Because the mode Hilbert spaces are
non-uniform, a fresh random state is first enriched by one global
Hamiltonian application so all relevant charge sectors are present.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .graded import (BlockTensor, TruncationPolicy, add, adjoint,
                     contract, scale, svd_truncate, transpose, vdot)
from .hamiltonian import MpoOperator
from .mps import (MpsState, add_mps, apply_mpo, canonicalize, env_absorb_left,
                  env_absorb_right, expectation, left_env_start, normalize,
                  norm, right_env_start, variance)

DEFAULT_POLICY = TruncationPolicy(eps=1e-6, chi_max=2500)


@dataclass
class DmrgSettings:
    policy: TruncationPolicy = DEFAULT_POLICY
    max_sweeps: int = 40
    energy_tol: float = 1e-9
    solver_tol: float = 1e-10
    solver_max_iter: int = 200
    progress: object = None  # callable(dict) for JSON-line progress records


@dataclass
class DmrgReport:
    energies: list = field(default_factory=list)
    variance: float = float("nan")
    bond_profile: list = field(default_factory=list)
    discarded_weight: float = 0.0
    converged: bool = False
    sweeps: int = 0
    wall_time: float = 0.0


def _lanczos_ground(matvec, v0, tol: float, max_iter: int, min_iter: int = 2):
    """Lowest Ritz pair of a Hermitian operator on block-tensor vectors.

    The seed gets a deterministic relative-1e-9 noise admixture so every
    block direction has nonzero Krylov overlap; together with a minimum
    iteration count this guards against premature convergence onto a
    higher eigenvalue when the operator is (nearly) diagonal.
    """
    nrm = v0.norm()
    if nrm == 0:
        raise ValueError("Lanczos seed vanishes")
    v = add(v0, _random_like(v0), 1.0 / nrm, 1e-9)
    v = scale(v, 1.0 / v.norm())
    total_iters = 0
    theta, y = None, None
    for _restart in range(8):
        basis = [v]
        alphas, betas = [], []
        m_cap = min(40, max_iter - total_iters)
        if m_cap <= 0:
            break
        for m in range(m_cap):
            w = matvec(basis[-1])
            total_iters += 1
            a = vdot(basis[-1], w).real
            alphas.append(a)
            w = add(w, basis[-1], 1.0, -a)
            if len(basis) > 1:
                w = add(w, basis[-2], 1.0, -betas[-1])
            # full reorthogonalization keeps the basis clean
            for b in basis:
                w = add(w, b, 1.0, -vdot(b, w))
            bnorm = w.norm()
            tri = np.diag(alphas).astype(float)
            if betas:
                off = np.array(betas)
                tri += np.diag(off, 1) + np.diag(off, -1)
            evals, evecs = np.linalg.eigh(tri)
            theta, y = evals[0], evecs[:, 0]
            resid = abs(bnorm * y[-1])
            if bnorm < 1e-14 or (resid <= tol * max(1.0, abs(theta))
                                 and total_iters >= min_iter):
                v = _ritz_vector(basis, y)
                return theta, v, total_iters
            if total_iters >= max_iter:
                break
            betas.append(bnorm)
            basis.append(scale(w, 1.0 / bnorm))
        v = _ritz_vector(basis[:len(y)], y)
        if total_iters >= max_iter:
            break
    return theta, v, total_iters


def _ritz_vector(basis, y):
    out = scale(basis[0], y[0])
    for b, c in zip(basis[1:], y[1:]):
        out = add(out, b, 1.0, c)
    n = out.norm()
    return scale(out, 1.0 / n)


def _two_site_matvec(lenv, w1, w2, renv):
    def mv(theta):
        tmp = contract(lenv, theta, [(2, 0)])            # (bra, w, p1, p2, vR)
        tmp = contract(tmp, w1, [(1, 0), (2, 2)])        # (bra, p2, vR, r1, w)
        tmp = contract(tmp, w2, [(4, 0), (1, 2)])        # (bra, vR, r1, r2, w')
        tmp = contract(tmp, renv, [(1, 2), (4, 1)])      # (bra, r1, r2, braR)
        return tmp
    return mv


class _OrthoProjector:
    """Projects the local two-site problem against lower states."""

    def __init__(self, psi: MpsState, lowers: list[MpsState]):
        self.lowers = [low.copy() for low in lowers]
        for low in self.lowers:
            canonicalize(low, 0)
        self.psi = psi
        n = psi.n_sites
        self.lenvs = [[self._l0()] for _ in self.lowers]
        self.renvs = [[None] * (n + 1) for _ in self.lowers]

    @staticmethod
    def _l0():
        from .graded import GradedSpace, IN, OUT
        e = BlockTensor((GradedSpace.make({0: 1}, OUT), GradedSpace.make({0: 1}, IN)))
        e.set_block((0, 0), np.ones((1, 1), dtype=np.complex128))
        return e

    def _r0(self):
        from .graded import GradedSpace, IN, OUT
        q = self.psi.sector
        e = BlockTensor((GradedSpace.make({q: 1}, IN), GradedSpace.make({q: 1}, OUT)))
        e.set_block((q, q), np.ones((1, 1), dtype=np.complex128))
        return e

    def reset_right(self):
        n = self.psi.n_sites
        for i, low in enumerate(self.lowers):
            self.renvs[i][n] = self._r0()
            for j in range(n - 1, 1, -1):
                env = self.renvs[i][j + 1]
                tmp = contract(adjoint(low.tensors[j]), env, [(2, 0)])
                self.renvs[i][j] = contract(tmp, self.psi.tensors[j], [(1, 1), (2, 2)])

    def grow_left(self, j):
        for i, low in enumerate(self.lowers):
            env = self.lenvs[i][j]
            tmp = contract(env, adjoint(low.tensors[j]), [(0, 0)])
            env2 = contract(tmp, self.psi.tensors[j], [(0, 0), (1, 1)])
            if len(self.lenvs[i]) == j + 1:
                self.lenvs[i].append(env2)
            else:
                self.lenvs[i][j + 1] = env2

    def local_vectors(self, j):
        """Lower states mapped into the current two-site tensor space."""
        out = []
        for i, low in enumerate(self.lowers):
            ol = self.lenvs[i][j]
            orr = self.renvs[i][j + 2]
            th = contract(low.tensors[j], low.tensors[j + 1], [(2, 0)])
            b = contract(ol, adjoint(th), [(0, 0)])     # (psi_b, p1, p2, phi_vR)
            b = contract(b, orr, [(3, 0)])              # (psi_b, p1, p2, psi_b')
            g = adjoint(b)
            n = g.norm()
            if n > 1e-12:
                out.append(scale(g, 1.0 / n))
        # orthonormalize among themselves
        ortho = []
        for g in out:
            for h in ortho:
                g = add(g, h, 1.0, -vdot(h, g))
            n = g.norm()
            if n > 1e-8:
                ortho.append(scale(g, 1.0 / n))
        return ortho

    def update_right(self, j):
        """Recompute right environments at cut j after a right-to-left step."""
        for i, low in enumerate(self.lowers):
            env = self.renvs[i][j + 1]
            t = adjoint(low.tensors[j])
            tmp = contract(t, env, [(2, 0)])            # (vL, p, psi_b)
            self.renvs[i][j] = contract(tmp, self.psi.tensors[j], [(1, 1), (2, 2)])


def _project_out(vec, gs):
    for g in gs:
        vec = add(vec, g, 1.0, -vdot(g, vec))
    return vec


def _penalized_mv(raw_mv, gvecs, penalty: float):
    """P H P plus a shift pushing the projected-out directions to +penalty.

    Without the shift those directions sit at eigenvalue zero, below any
    positive excitation energy, and an extremal solver would fall into
    them through numerical leakage.
    """
    def mv(v):
        pv = _project_out(v, gvecs)
        out = _project_out(raw_mv(pv), gvecs)
        leak = add(v, pv, 1.0, -1.0)
        return add(out, leak, 1.0, penalty)
    return mv


def ground_state(h: MpoOperator, psi0: MpsState, settings: DmrgSettings = DmrgSettings(),
                 lower_states: list[MpsState] | None = None):
    """Variational minimization; returns ``(energy, state, report)``.

    With ``lower_states`` the optimization is confined to their orthogonal
    complement, which yields excited states level by level.
    """
    t_start = time.time()
    psi = psi0.copy()
    canonicalize(psi, 0)
    normalize(psi)
    n = psi.n_sites
    report = DmrgReport()

    ortho = _OrthoProjector(psi, lower_states) if lower_states else None

    lenvs = [None] * (n + 1)
    renvs = [None] * (n + 1)
    lenvs[0] = left_env_start(psi, h)
    renvs[n] = right_env_start(psi, h)
    for j in range(n - 1, 1, -1):
        renvs[j] = env_absorb_right(renvs[j + 1], psi.tensors[j], h.tensors[j],
                                    psi.tensors[j])
    if ortho:
        ortho.reset_right()

    energy = expectation(psi, h).real
    prev_energy = np.inf
    disc2 = 0.0

    for sweep in range(1, settings.max_sweeps + 1):
        sweep_disc2 = 0.0
        # left to right
        for j in range(n - 1):
            theta = contract(psi.tensors[j], psi.tensors[j + 1], [(2, 0)])
            mv = _two_site_matvec(lenvs[j], h.tensors[j], h.tensors[j + 1], renvs[j + 2])
            gs = ortho.local_vectors(j) if ortho else []
            if gs:
                penalty = 10.0 * (1.0 + abs(energy))
                mv = _penalized_mv(mv, gs, penalty)
                theta = _project_out(theta, gs)
                if theta.norm() < 1e-12:
                    theta = _project_out(_random_like(theta), gs)
            energy, theta, _ = _lanczos_ground(mv, theta, settings.solver_tol,
                                               settings.solver_max_iter)
            u, s, v, disc = svd_truncate(theta, (0, 1), settings.policy)
            sweep_disc2 += disc * disc
            psi.tensors[j] = u
            psi.tensors[j + 1] = contract(s, v, [(1, 0)])
            psi.center = j + 1
            lenvs[j + 1] = env_absorb_left(lenvs[j], u, h.tensors[j], u)
            if ortho:
                ortho.grow_left(j)
        # right to left
        for j in range(n - 2, -1, -1):
            theta = contract(psi.tensors[j], psi.tensors[j + 1], [(2, 0)])
            mv = _two_site_matvec(lenvs[j], h.tensors[j], h.tensors[j + 1], renvs[j + 2])
            gs = ortho.local_vectors(j) if ortho else []
            if gs:
                penalty = 10.0 * (1.0 + abs(energy))
                mv = _penalized_mv(mv, gs, penalty)
                theta = _project_out(theta, gs)
                if theta.norm() < 1e-12:
                    theta = _project_out(_random_like(theta), gs)
            energy, theta, _ = _lanczos_ground(mv, theta, settings.solver_tol,
                                               settings.solver_max_iter)
            u, s, v, disc = svd_truncate(theta, (0, 1), settings.policy)
            sweep_disc2 += disc * disc
            psi.tensors[j] = contract(u, s, [(2, 0)])
            psi.tensors[j + 1] = v
            psi.center = j
            renvs[j + 1] = env_absorb_right(renvs[j + 2], v, h.tensors[j + 1], v)
            if ortho:
                ortho.update_right(j + 1)

        disc2 += sweep_disc2
        report.energies.append(float(energy))
        report.sweeps = sweep
        if settings.progress is not None:
            settings.progress({"sweep": sweep, "energy": float(energy),
                               "variance": None, "max_bond": psi.max_bond(),
                               "discarded_weight": float(np.sqrt(sweep_disc2))})
        if abs(energy - prev_energy) < settings.energy_tol:
            report.converged = True
            break
        prev_energy = energy

    normalize(psi)
    report.bond_profile = psi.bond_dims()[:-1]
    report.discarded_weight = float(np.sqrt(disc2))
    report.variance = variance(psi, h)
    report.wall_time = time.time() - t_start
    if settings.progress is not None:
        settings.progress({"sweep": report.sweeps, "energy": float(energy),
                           "variance": report.variance, "max_bond": psi.max_bond(),
                           "discarded_weight": report.discarded_weight})
    return float(energy), psi, report


def excited_state(h: MpoOperator, lower_states: list[MpsState], psi0: MpsState,
                  settings: DmrgSettings = DmrgSettings()):
    """Lowest state orthogonal to the given (mutually orthogonal) states."""
    return ground_state(h, psi0, settings, lower_states=lower_states)


def _random_like(t: BlockTensor) -> BlockTensor:
    rng = np.random.default_rng(0)
    out = BlockTensor(t.spaces)
    for k, b in t.blocks.items():
        out.blocks[k] = rng.standard_normal(b.shape) + 1j * rng.standard_normal(b.shape)
    return out


def global_subspace_expansion(h: MpoOperator, psi: MpsState,
                              moderate_policy: TruncationPolicy | None = None,
                              mix: float = 1e-5) -> MpsState:
    """Enrich bond charge sectors by one Hamiltonian application.

    A small admixture of the compressed ``H|psi>`` is added so the new
    sectors carry enough weight to survive subsequent truncations while
    the physical state is essentially unchanged; the result is normalized.
    Needed once at the start because two-site updates alone cannot create
    quantum numbers absent from the neighboring bonds.
    """
    if moderate_policy is None:
        moderate_policy = TruncationPolicy(eps=1e-8, chi_max=4 * max(psi.max_bond(), 8))
    phi, _ = apply_mpo(h, psi, moderate_policy)
    nrm = norm(phi)
    if nrm < 1e-13:
        out = psi.copy()
        normalize(out)
        return out
    out = add_mps(psi, phi, 1.0, mix / nrm)
    canonicalize(out, psi.n_sites - 1)
    canonicalize(out, 0, moderate_policy)
    normalize(out)
    return out
