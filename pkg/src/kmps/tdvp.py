"""Two-site TDVP time evolution with global Krylov subspace enrichment.

One time step is a symmetric left-right-left sweep: each neighboring pair
is evolved forward by dt/2 with the local effective Hamiltonian, split by
a truncating SVD, and the freshly formed center site is evolved backward
to restore its time, which gives a second-order integrator.  Because the
mode spaces are non-uniform, bond charge sectors that the dynamics will
need are injected beforehand by mixing in compressed global Krylov
vectors ``H|psi>, H^2|psi>, ...``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graded import TruncationPolicy, add, contract, scale, svd_truncate, vdot
from .hamiltonian import MpoOperator
from .mps import (MpsState, add_mps, apply_mpo, canonicalize, env_absorb_left,
                  env_absorb_right, expectation, left_env_start, norm,
                  normalize, right_env_start)


@dataclass
class TdvpSettings:
    dt: float = 2e-2
    eps_t: float = 1e-4
    chi_max: int = 2500
    krylov_count: int = 2
    eps_k: float = 1e-8
    eps_m: float = 1e-10
    krylov_chi_max: int = 3000
    expm_tol: float = 1e-10
    expm_max_iter: int = 60
    expand_every_step: bool = True
    # admixture only needs to keep new sectors alive through compressions;
    # the local exponentials repopulate them with physical weight, and a
    # small value keeps the first-order energy injection negligible
    krylov_mix: float = 1e-7

    @property
    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(eps=self.eps_t, chi_max=self.chi_max)


@dataclass
class QuenchTrajectory:
    times: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    cos_values: list = field(default_factory=list)
    entropies: list = field(default_factory=list)   # per-time array over bonds
    max_bond: list = field(default_factory=list)
    discarded: list = field(default_factory=list)   # per-step discarded weight
    norm_dev: list = field(default_factory=list)    # |norm - 1| before renormalizing
    renormalizations: int = 0
    rdm_snapshots: dict = field(default_factory=dict)  # (time, mode) -> matrix


def _expm_apply(mv, v, coeff: complex, tol: float, max_m: int):
    """Krylov evaluation of ``exp(coeff * H) v`` for Hermitian H."""
    beta0 = v.norm()
    if beta0 == 0:
        return v, 0
    basis = [scale(v, 1.0 / beta0)]
    alphas, betas = [], []
    prev_w = None
    for m in range(1, max_m + 1):
        w = mv(basis[-1])
        a = vdot(basis[-1], w).real
        alphas.append(a)
        w = add(w, basis[-1], 1.0, -a)
        if len(basis) > 1:
            w = add(w, basis[-2], 1.0, -betas[-1])
        for b in basis:
            w = add(w, b, 1.0, -vdot(b, w))
        bnorm = w.norm()
        tri = np.diag(alphas).astype(float)
        if betas:
            tri += np.diag(betas, 1) + np.diag(betas, -1)
        evals, evecs = np.linalg.eigh(tri)
        coeffs = evecs @ (np.exp(coeff * evals) * evecs[0, :].conj()) * beta0
        if prev_w is not None and (
                np.linalg.norm(coeffs[:-1] - prev_w) + abs(coeffs[-1])
                <= tol * beta0) or bnorm < 1e-14:
            out = scale(basis[0], coeffs[0])
            for b, c in zip(basis[1:], coeffs[1:]):
                out = add(out, b, 1.0, c)
            return out, m
        prev_w = coeffs
        if m < max_m:
            betas.append(bnorm)
            basis.append(scale(w, 1.0 / bnorm))
    out = scale(basis[0], coeffs[0])
    for b, c in zip(basis[1:], coeffs[1:]):
        out = add(out, b, 1.0, c)
    return out, max_m


def _two_site_mv(lenv, w1, w2, renv):
    def mv(theta):
        tmp = contract(lenv, theta, [(2, 0)])
        tmp = contract(tmp, w1, [(1, 0), (2, 2)])
        tmp = contract(tmp, w2, [(4, 0), (1, 2)])
        return contract(tmp, renv, [(1, 2), (4, 1)])
    return mv


def _one_site_mv(lenv, w, renv):
    def mv(m):
        tmp = contract(lenv, m, [(2, 0)])             # (bra, w, p, vR)
        tmp = contract(tmp, w, [(1, 0), (2, 2)])      # (bra, vR, row, wR)
        return contract(tmp, renv, [(1, 2), (3, 1)])  # (bra, row, braR)
    return mv


def krylov_expand(h: MpoOperator, psi: MpsState, s: TdvpSettings = TdvpSettings()) -> MpsState:
    """Enrich bond sectors with global Krylov directions of H.

    The Krylov vectors are compressed at ``eps_k`` (bond cap
    ``krylov_chi_max``) and mixed in with a small amplitude before a final
    ``eps_m`` compression, so the returned state overlaps the input to
    better than 1 - 1e-8 while carrying the new quantum numbers.
    """
    pol_k = TruncationPolicy(eps=s.eps_k, chi_max=s.krylov_chi_max)
    vecs = []
    cur = psi
    for _ in range(s.krylov_count):
        nxt, _ = apply_mpo(h, cur, pol_k)
        nrm = norm(nxt)
        if nrm < 1e-13:
            break
        normalize(nxt)
        vecs.append(nxt)
        cur = nxt
    if not vecs:
        out = psi.copy()
        normalize(out)
        return out
    out = psi
    for v in vecs:
        out = add_mps(out, v, 1.0, s.krylov_mix)
    canonicalize(out, out.n_sites - 1)
    canonicalize(out, 0, TruncationPolicy(eps=s.eps_m, chi_max=s.krylov_chi_max))
    normalize(out)
    return out


def tdvp_step(h: MpoOperator, psi: MpsState, s: TdvpSettings = TdvpSettings()):
    """Advance by one step dt in place; returns ``(psi, info)``.

    info carries the accumulated discarded weight of the step and the norm
    deviation before the final renormalization.
    """
    n = psi.n_sites
    tau = 0.5 * s.dt
    policy = s.policy
    canonicalize(psi, 0)

    lenvs = [None] * (n + 1)
    renvs = [None] * (n + 1)
    lenvs[0] = left_env_start(psi, h)
    renvs[n] = right_env_start(psi, h)
    for j in range(n - 1, 1, -1):
        renvs[j] = env_absorb_right(renvs[j + 1], psi.tensors[j], h.tensors[j],
                                    psi.tensors[j])
    disc2 = 0.0

    # left-to-right half sweep
    for j in range(n - 1):
        theta = contract(psi.tensors[j], psi.tensors[j + 1], [(2, 0)])
        mv2 = _two_site_mv(lenvs[j], h.tensors[j], h.tensors[j + 1], renvs[j + 2])
        theta, _ = _expm_apply(mv2, theta, -1j * tau, s.expm_tol, s.expm_max_iter)
        u, sv, v, disc = svd_truncate(theta, (0, 1), policy)
        disc2 += disc * disc
        psi.tensors[j] = u
        center = contract(sv, v, [(1, 0)])
        lenvs[j + 1] = env_absorb_left(lenvs[j], u, h.tensors[j], u)
        if j < n - 2:
            mv1 = _one_site_mv(lenvs[j + 1], h.tensors[j + 1], renvs[j + 2])
            center, _ = _expm_apply(mv1, center, +1j * tau, s.expm_tol, s.expm_max_iter)
        psi.tensors[j + 1] = center
        psi.center = j + 1

    # right-to-left half sweep
    for j in range(n - 2, -1, -1):
        theta = contract(psi.tensors[j], psi.tensors[j + 1], [(2, 0)])
        mv2 = _two_site_mv(lenvs[j], h.tensors[j], h.tensors[j + 1], renvs[j + 2])
        theta, _ = _expm_apply(mv2, theta, -1j * tau, s.expm_tol, s.expm_max_iter)
        u, sv, v, disc = svd_truncate(theta, (0, 1), policy)
        disc2 += disc * disc
        psi.tensors[j + 1] = v
        center = contract(u, sv, [(2, 0)])
        renvs[j + 1] = env_absorb_right(renvs[j + 2], v, h.tensors[j + 1], v)
        if j > 0:
            mv1 = _one_site_mv(lenvs[j], h.tensors[j], renvs[j + 1])
            center, _ = _expm_apply(mv1, center, +1j * tau, s.expm_tol, s.expm_max_iter)
        psi.tensors[j] = center
        psi.center = j

    nrm = norm(psi)
    dev = abs(nrm - 1.0)
    normalize(psi)
    return psi, {"discarded": float(np.sqrt(disc2)), "norm_dev": float(dev)}


@dataclass
class ObservablesSpec:
    """What to record along a quench trajectory."""

    measure_every: int = 1
    rdm_modes: tuple = ()
    rdm_times: tuple = ()
    cos_mpo: MpoOperator | None = None   # space-integrated vertex pair for <:cos:>
    theta: float = 0.0


def quench_run(h_pre, h_post: MpoOperator, t_total: float,
               s: TdvpSettings = TdvpSettings(),
               observables: ObservablesSpec = ObservablesSpec(),
               psi0: MpsState | None = None) -> QuenchTrajectory:
    """Evolve the pre-quench ground state under the post-quench Hamiltonian.

    ``h_pre`` may be an ``MpsState`` (used directly as the initial state),
    or None, in which case the free vacuum product state of ``h_post``'s
    layout is used (the exact pre-quench ground state when the pre-quench
    coupling vanishes).
    """
    from .mps import vacuum_mps
    from .observables import local_trig_expectation_from_mpo

    if psi0 is not None:
        psi = psi0.copy()
    elif isinstance(h_pre, MpsState):
        psi = h_pre.copy()
    else:
        psi = vacuum_mps(h_post.layout)
    normalize(psi)

    n_steps = int(round(t_total / s.dt))
    traj = QuenchTrajectory()
    rdm_targets = sorted(observables.rdm_times)

    def measure(t, disc, dev):
        traj.times.append(t)
        traj.energies.append(expectation(psi, h_post).real)
        if observables.cos_mpo is not None:
            traj.cos_values.append(local_trig_expectation_from_mpo(
                psi, observables.cos_mpo, observables.theta, "cos"))
        ent = [_entropy_at(psi, b) for b in range(psi.n_sites - 1)]
        traj.entropies.append(ent)
        traj.max_bond.append(psi.max_bond())
        traj.discarded.append(disc)
        traj.norm_dev.append(dev)
        while rdm_targets and t >= rdm_targets[0] - 0.5 * s.dt:
            t_snap = rdm_targets.pop(0)
            for k in observables.rdm_modes:
                from .mps import single_mode_rdm
                traj.rdm_snapshots[(t_snap, k)] = single_mode_rdm(psi, k)

    measure(0.0, 0.0, 0.0)
    for step in range(1, n_steps + 1):
        if s.expand_every_step or step == 1:
            psi = krylov_expand(h_post, psi, s)
        _, info = tdvp_step(h_post, psi, s)
        if info["norm_dev"] > 1e-6:
            traj.renormalizations += 1
        if step % observables.measure_every == 0 or step == n_steps:
            measure(step * s.dt, info["discarded"], info["norm_dev"])
    return traj


def _entropy_at(psi: MpsState, bond: int) -> float:
    from .mps import bond_entropy
    return bond_entropy(psi, bond)
