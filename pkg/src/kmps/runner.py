"""Task orchestration: builds operators, runs solvers, writes reports.

Every task writes CSV data (full double precision), rendered figures, a
JSON manifest carrying the config hash and environment versions, and MPS
checkpoints where a state is the product.  Runs are deterministic for a
fixed seed; file writes are atomic (temp file + rename).
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, plots
from .analysis import extrapolate_gap, locate_critical_mass
from .config import RunConfig
from .deltamps import build_delta_mps
from .dmrg import DmrgSettings, global_subspace_expansion, ground_state, excited_state
from .graded import TruncationPolicy
from .hamiltonian import (assemble_hamiltonian,
                          excitation_mpos, vertex_mpo)
from .layout import ModeLayout, ModelKind
from .mps import (add_mps, apply_mpo, bond_entropy, canonicalize, normalize,
                  random_sector_mps, save_mps, single_mode_rdm, vacuum_mps)
from .observables import (fcs_field, field_variance_truncated,
                          local_trig_expectation, wigner_single_mode)
from .tdvp import ObservablesSpec, TdvpSettings, quench_run


class ConvergenceFailure(RuntimeError):
    """A solver did not converge; partial outputs were written (exit 3)."""


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(path: str, header: list[str], rows) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(",".join(header) + "\n")
            for row in rows:
                f.write(",".join(_fmt(v) for v in row) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dmrg_settings(cfg: RunConfig, progress=None) -> DmrgSettings:
    return DmrgSettings(policy=cfg.solver.policy(),
                        max_sweeps=cfg.solver.max_sweeps,
                        energy_tol=cfg.energy_tol(),
                        solver_tol=cfg.solver.solver_tol,
                        progress=progress)


def _tdvp_settings(cfg: RunConfig) -> TdvpSettings:
    s = cfg.solver
    return TdvpSettings(dt=s.dt, eps_t=s.eps_t, chi_max=s.tdvp_chi_max,
                        krylov_count=s.krylov_count, eps_k=s.eps_k, eps_m=s.eps_m,
                        krylov_chi_max=s.krylov_chi_max,
                        expand_every_step=s.expand_every_step)


def _progress_writer(path):
    fh = open(path, "w")

    def write(record: dict):
        fh.write(json.dumps(record) + "\n")
        fh.flush()
    write.close = fh.close
    return write


def _excitation_pieces(layout, gs):
    """Candidate one-particle excitations of the ground state, normalized."""
    pieces = []
    for op in excitation_mpos(layout):
        cand, _ = apply_mpo(op, gs, TruncationPolicy(eps=1e-10, chi_max=256))
        try:
            normalize(cand)
        except ZeroDivisionError:
            continue
        pieces.append(cand)
    return pieces


def _excited_seed(layout, gs, rng, sector, pieces):
    """Superposition of candidate excitations of the ground state.

    Keeping several one-particle basins alive in the same start lets the
    variational sweeps resolve their competition; a pure random start can
    lock into whichever basin it touches first when the interaction is
    weak (the charge structure then blocks local moves between basins).
    """
    seed = random_sector_mps(layout, sector, 4, rng)
    if sector == 0 and pieces:
        for p in pieces:
            seed = add_mps(seed, p, 0.2, 1.0)
        canonicalize(seed, 0, TruncationPolicy(eps=1e-12, chi_max=1024))
        normalize(seed)
    return seed


def _solve_ground(cfg: RunConfig, layout: ModeLayout, params, seed: int,
                  sector: int = 0, n_states: int = 1, progress=None):
    """Ground (and optionally first excited) state for one parameter point."""
    delta = build_delta_mps(layout, 0)
    h = assemble_hamiltonian(layout, params, delta)
    rng = np.random.default_rng(seed)
    settings = _dmrg_settings(cfg, progress)
    psi0 = random_sector_mps(layout, sector, 6, rng)
    psi0 = global_subspace_expansion(h, psi0)
    e0, gs, rep0 = ground_state(h, psi0, settings)
    out = [(e0, gs, rep0)]
    if n_states > 1:
        from .mps import expectation
        pieces = _excitation_pieces(layout, gs) if sector == 0 else []
        seed1 = _excited_seed(layout, gs, rng, sector, pieces)
        e1, ex, rep1 = excited_state(h, [gs], seed1, settings)
        # variational multi-start: if a pure candidate lies below the found
        # state, the sweep locked into a higher basin; rerun from it
        for p in pieces:
            ep = expectation(p, h).real
            if ep < e1 - 1e-9:
                e_try, ex_try, rep_try = excited_state(h, [gs], p, settings)
                if e_try < e1:
                    e1, ex, rep1 = e_try, ex_try, rep_try
        out.append((e1, ex, rep1))
    return h, out


def run(cfg: RunConfig) -> dict:
    os.makedirs(cfg.out_dir, exist_ok=True)
    t0 = time.time()
    outputs: list[str] = []
    summary: dict = {"task": cfg.task}
    ok = True

    task_fn = {
        "ground": _task_ground,
        "gap": _task_gap,
        "sweep": _task_sweep,
        "quench": _task_quench,
        "wigner": _task_wigner,
        "fcs": _task_fcs,
        "extrapolate": _task_extrapolate,
        "critical-mass": _task_critical_mass,
    }[cfg.task]
    try:
        ok = task_fn(cfg, outputs, summary)
    finally:
        manifest = {
            "config_hash": cfg.config_hash(),
            "config": cfg.canonical_dict(),
            "versions": {"kmps": __version__, "numpy": np.__version__},
            "seed": cfg.seed,
            "wall_time_s": time.time() - t0,
            "outputs": outputs,
            "summary": summary,
            "converged": ok,
        }
        _write_json(os.path.join(cfg.out_dir, "manifest.json"), manifest)
    summary["ok"] = ok
    if not ok:
        raise ConvergenceFailure(json.dumps(summary))
    return summary


def _write_json(path, obj):
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    with os.fdopen(fd, "w") as f:
        json.dump(obj, f, indent=1, default=str)
    os.replace(tmp, path)


def _out(cfg, name, outputs):
    path = os.path.join(cfg.out_dir, name)
    outputs.append(name)
    return path


def _task_ground(cfg: RunConfig, outputs, summary) -> bool:
    sector = cfg.task_options.get("sector", 0)
    prog = _progress_writer(_out(cfg, "dmrg_progress.jsonl", outputs))
    try:
        h, states = _solve_ground(cfg, cfg.layout, cfg.params, cfg.seed, sector,
                                  progress=prog)
    finally:
        prog.close()
    e0, gs, rep = states[0]
    _write_csv(_out(cfg, "ground.csv", outputs),
               ["energy", "variance", "max_bond", "discarded_weight",
                "sweeps", "converged"],
               [(e0, rep.variance, max(rep.bond_profile), rep.discarded_weight,
                 rep.sweeps, rep.converged)])
    ents = [(b, bond_entropy(gs, b)) for b in range(gs.n_sites - 1)]
    _write_csv(_out(cfg, "entropy.csv", outputs), ["bond", "entropy"], ents)
    save_mps(gs, _out(cfg, "ground.kmps", outputs))
    plots.plot_convergence(rep.energies, _out(cfg, "convergence.png", outputs))
    plots.plot_entropy_profile([b for b, _ in ents], [s for _, s in ents],
                               _out(cfg, "entropy.png", outputs))
    summary["energy"] = e0
    summary["variance"] = rep.variance
    return rep.converged


def _task_gap(cfg: RunConfig, outputs, summary) -> bool:
    sector = cfg.task_options.get("sector", 0)
    prog = _progress_writer(_out(cfg, "dmrg_progress.jsonl", outputs))
    try:
        h, states = _solve_ground(cfg, cfg.layout, cfg.params, cfg.seed, sector,
                                  n_states=2, progress=prog)
    finally:
        prog.close()
    (e0, gs, rep0), (e1, ex, rep1) = states
    _write_csv(_out(cfg, "gap.csv", outputs),
               ["e0", "e1", "gap", "variance0", "variance1", "max_bond",
                "sweeps0", "sweeps1", "converged"],
               [(e0, e1, e1 - e0, rep0.variance, rep1.variance,
                 max(max(rep0.bond_profile), max(rep1.bond_profile)),
                 rep0.sweeps, rep1.sweeps, rep0.converged and rep1.converged)])
    save_mps(gs, _out(cfg, "ground.kmps", outputs))
    save_mps(ex, _out(cfg, "excited.kmps", outputs))
    plots.plot_convergence(rep0.energies, _out(cfg, "convergence.png", outputs))
    summary["e0"], summary["e1"], summary["gap"] = e0, e1, e1 - e0
    return rep0.converged and rep1.converged


def _with_param(params, name: str, value: float):
    return dataclasses.replace(params, **{name: value})


def _task_sweep(cfg: RunConfig, outputs, summary) -> bool:
    pname = cfg.task_options["sweep_parameter"]
    values = cfg.task_options["sweep_values"]
    if not hasattr(cfg.params, pname):
        raise ValueError(f"unknown sweep parameter {pname!r}")
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(values))

    def one(iv):
        i, v = iv
        params = _with_param(cfg.params, pname, v)
        layout = dataclasses.replace(cfg.layout, length_L=params.length_L)
        _, states = _solve_ground(cfg, layout, params,
                                  int(seeds[i].generate_state(1)[0]), 0,
                                  n_states=2)
        (e0, gs, rep0), (e1, _, rep1) = states
        cosv = local_trig_expectation(gs, layout, params, "cos")
        sinv = local_trig_expectation(gs, layout, params, "sin")
        return (v, e0, e1, e1 - e0, cosv, sinv, rep0.converged and rep1.converged)

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        rows = list(pool.map(one, enumerate(values)))
    _write_csv(_out(cfg, "sweep.csv", outputs),
               [pname, "e0", "e1", "gap", "cos", "sin", "converged"], rows)
    plots.plot_sweep(values, {"gap": [r[3] for r in rows],
                              "cos": [r[4] for r in rows],
                              "sin": [r[5] for r in rows]},
                     pname, _out(cfg, "sweep.png", outputs))
    summary["points"] = len(rows)
    return all(r[6] for r in rows)


def _task_quench(cfg: RunConfig, outputs, summary) -> bool:
    if cfg.model_kind is not ModelKind.MASSIVE_SCHWINGER:
        raise ValueError("quench task requires the massive Schwinger model")
    m_post = cfg.task_options["quench_mass"]
    theta = cfg.task_options.get("quench_theta", cfg.params.theta)
    t_total = cfg.task_options["t_total"]
    params_post = dataclasses.replace(cfg.params, fermion_mass=m_post, theta=theta)
    layout = cfg.layout
    h_post = assemble_hamiltonian(layout, params_post)

    if cfg.params.fermion_mass == 0.0:
        psi0 = vacuum_mps(layout)
    else:
        _, states = _solve_ground(cfg, layout, cfg.params, cfg.seed, 0)
        psi0 = states[0][1]

    v_plus = vertex_mpo(layout, math.sqrt(4 * math.pi), params_post)
    obs = ObservablesSpec(measure_every=cfg.task_options.get("measure_every", 1),
                          rdm_modes=tuple(cfg.task_options.get("wigner_modes", ())),
                          rdm_times=tuple(cfg.task_options.get("wigner_times", ())),
                          cos_mpo=v_plus, theta=theta)
    traj = quench_run(psi0, h_post, t_total, _tdvp_settings(cfg), obs)

    nb = layout.n_sites - 1
    header = (["t", "energy", "cos"]
              + [f"S_{b}" for b in range(nb)] + ["max_chi", "discarded", "norm_dev"])
    rows = []
    for i, t in enumerate(traj.times):
        rows.append((t, traj.energies[i], traj.cos_values[i],
                     *traj.entropies[i], traj.max_bond[i], traj.discarded[i],
                     traj.norm_dev[i]))
    _write_csv(_out(cfg, "quench.csv", outputs), header, rows)
    plots.plot_quench(traj.times, traj.energies, traj.cos_values, traj.entropies,
                      _out(cfg, "quench.png", outputs))
    for (t_snap, k), rdm in sorted(traj.rdm_snapshots.items()):
        tag = f"t{t_snap:g}_k{k}".replace(".", "p").replace("-", "m")
        omega = math.sqrt((2 * math.pi * k / layout.length_L) ** 2
                          + params_post.boson_mass ** 2)
        grid = wigner_single_mode(rdm, omega)
        _write_wigner(cfg, outputs, grid, f"wigner_{tag}")
    summary["steps"] = len(traj.times) - 1
    summary["renormalizations"] = traj.renormalizations
    summary["final_energy"] = traj.energies[-1]
    return True


def _write_wigner(cfg, outputs, grid, stem):
    rows = [(phi, *grid.values[i, :]) for i, phi in enumerate(grid.phi)]
    header = ["phi\\pi"] + [_fmt(p) for p in grid.pi]
    _write_csv(_out(cfg, f"{stem}.csv", outputs), header, rows)
    plots.plot_wigner(grid, _out(cfg, f"{stem}.png", outputs))


def _task_wigner(cfg: RunConfig, outputs, summary) -> bool:
    sector = cfg.task_options.get("sector", 0)
    modes = cfg.task_options.get("wigner_modes", [0])
    _, states = _solve_ground(cfg, cfg.layout, cfg.params, cfg.seed, sector)
    e0, gs, rep = states[0]
    for k in modes:
        rdm = single_mode_rdm(gs, k)
        if cfg.model_kind is ModelKind.MASSIVE_SCHWINGER:
            omega = math.sqrt((2 * math.pi * k / cfg.layout.length_L) ** 2
                              + cfg.params.boson_mass ** 2)
        else:
            if k == 0:
                raise ValueError("the compact zero mode has no oscillator frequency; "
                                 "choose a nonzero mode for the sine-Gordon model")
            omega = 2 * math.pi * abs(k) / cfg.layout.length_L
        grid = wigner_single_mode(rdm, omega)
        _write_wigner(cfg, outputs, grid, f"wigner_k{k}".replace("-", "m"))
        summary[f"wigner_norm_k{k}"] = grid.normalization()
    summary["energy"] = e0
    return rep.converged


def _task_fcs(cfg: RunConfig, outputs, summary) -> bool:
    _, states = _solve_ground(cfg, cfg.layout, cfg.params, cfg.seed, 0)
    e0, gs, rep = states[0]
    var_t = field_variance_truncated(cfg.layout, cfg.params)
    s_max = cfg.task_options.get("s_max", 6.5 / math.sqrt(var_t))
    n_s = cfg.task_options.get("s_points", 129)
    s_grid = np.linspace(-s_max, s_max, n_s)
    res = fcs_field(gs, cfg.layout, s_grid, cfg.params)
    _write_csv(_out(cfg, "fcs_char.csv", outputs), ["s", "re_chi", "im_chi"],
               [(s, c.real, c.imag) for s, c in zip(res.s_grid, res.char_values)])
    _write_csv(_out(cfg, "fcs_dist.csv", outputs), ["phi", "p"],
               list(zip(res.x_grid, res.distribution)))
    plots.plot_fcs(res, _out(cfg, "fcs.png", outputs))
    summary["energy"] = e0
    summary["p_integral"] = float(np.trapezoid(res.distribution, res.x_grid))
    return rep.converged


def _gap_at(cfg: RunConfig, layout: ModeLayout, params, seed: int):
    _, states = _solve_ground(cfg, layout, params, seed, 0, n_states=2)
    (e0, _, rep0), (e1, _, rep1) = states
    return e1 - e0, rep0.converged and rep1.converged


def _task_extrapolate(cfg: RunConfig, outputs, summary) -> bool:
    k_list = cfg.task_options["k_max_list"]
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(k_list))

    def one(ik):
        i, k = ik
        layout = dataclasses.replace(cfg.layout, k_max=int(k))
        gap, conv = _gap_at(cfg, layout, cfg.params,
                            int(seeds[i].generate_state(1)[0]))
        return k, gap, conv

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        rows = list(pool.map(one, enumerate(k_list)))
    fit = extrapolate_gap([(k, g) for k, g, _ in rows])
    _write_csv(_out(cfg, "extrapolate.csv", outputs),
               ["k_max", "gap", "converged"], rows)
    _write_csv(_out(cfg, "extrapolate_fit.csv", outputs),
               ["a", "b", "stderr_a", "stderr_b"],
               [(fit.a, fit.b, fit.stderr_a, fit.stderr_b)])
    plots.plot_extrapolation([k for k, _, _ in rows], [g for _, g, _ in rows],
                             fit.a, fit.b, _out(cfg, "extrapolate.png", outputs))
    summary["gap_extrapolated"] = fit.a
    summary["stderr"] = fit.stderr_a
    return all(c for _, _, c in rows)


def _task_critical_mass(cfg: RunConfig, outputs, summary) -> bool:
    m_list = cfg.task_options["m_list"]
    k_list = cfg.task_options.get("k_max_list", [cfg.layout.k_max])
    window = (cfg.task_options.get("fit_lo", 0.1), cfg.task_options.get("fit_hi", 0.25))
    jobs = [(k, m) for k in k_list for m in m_list]
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(jobs))

    def one(ij):
        i, (k, m) = ij
        layout = dataclasses.replace(cfg.layout, k_max=int(k))
        params = dataclasses.replace(cfg.params, fermion_mass=float(m))
        gap, conv = _gap_at(cfg, layout, params,
                            int(seeds[i].generate_state(1)[0]))
        return int(k), float(m), gap, conv

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        rows = list(pool.map(one, enumerate(jobs)))
    _write_csv(_out(cfg, "critical_gaps.csv", outputs),
               ["k_max", "m", "gap", "converged"], rows)

    roots = []
    for k in k_list:
        curve = [(m, g) for kk, m, g, _ in rows if kk == k]
        mc, err = locate_critical_mass(curve, window)
        roots.append((int(k), mc, err))
    _write_csv(_out(cfg, "critical_roots.csv", outputs),
               ["k_max", "m_c", "err"], roots)
    if len(roots) >= 3:
        fit = extrapolate_gap([(k, mc) for k, mc, _ in roots])
        m_c = fit.a
        err = math.sqrt(fit.stderr_a ** 2 + float(np.mean([e for _, _, e in roots])) ** 2)
    else:
        m_c, err = roots[-1][1], roots[-1][2]
    _write_csv(_out(cfg, "critical_result.csv", outputs),
               ["m_c", "err"], [(m_c, err)])
    ks = [k for k, _, _ in roots]
    plots.plot_extrapolation(ks, [mc for _, mc, _ in roots],
                             m_c if len(roots) >= 3 else roots[-1][1],
                             fit.b if len(roots) >= 3 else 0.0,
                             _out(cfg, "critical_extrapolation.png", outputs))
    summary["m_c"] = m_c
    summary["m_c_err"] = err
    return all(c for _, _, _, c in rows)
