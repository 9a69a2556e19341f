"""Declarative run configuration: INI-style sections, strict schema.

Sections: ``[model]`` physical parameters, ``[layout]`` truncation,
``[solver]`` optimization/evolution knobs, ``[task]`` what to compute,
``[output]`` destination, ``[run]`` seed and threads.  Unknown keys are
hard errors.  Environment overrides: ``KMPS_SEED``, ``KMPS_OUT``,
``KMPS_THREADS`` take precedence over the file but not over command-line
flags.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

from .graded import TruncationPolicy
from .hamiltonian import SchwingerParams, SineGordonParams
from .layout import ModeLayout, ModelKind


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps this to exit code 2."""


TASKS = ("ground", "gap", "sweep", "quench", "wigner", "fcs",
         "extrapolate", "critical-mass")

_SCHEMA = {
    "model": {"kind", "delta", "soliton_mass", "fermion_mass", "charge",
              "theta", "length"},
    "layout": {"k_max", "n_max", "n_zm"},
    "solver": {"eps", "chi_max", "max_sweeps", "energy_tol", "solver_tol",
               "dt", "eps_t", "tdvp_chi_max", "krylov_count", "eps_k",
               "eps_m", "krylov_chi_max", "expand_every_step"},
    "task": {"name", "sector", "k_max_list", "m_list", "sweep_parameter",
             "sweep_values", "t_total", "quench_mass", "quench_theta",
             "measure_every", "wigner_modes", "wigner_times", "s_max",
             "s_points", "fit_lo", "fit_hi"},
    "output": {"dir"},
    "run": {"seed", "threads"},
}


def _parse_float(s: str, key: str) -> float:
    s = s.strip()
    try:
        if s == "pi":
            return math.pi
        if s.endswith("*pi"):
            return float(s[:-3]) * math.pi
        return float(s)
    except ValueError as exc:
        raise ConfigError(f"cannot parse number for '{key}': {s!r}") from exc


def _parse_list(s: str, key: str, cast=float) -> list:
    try:
        return [cast(tok) for tok in s.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse list for '{key}': {s!r}") from exc


@dataclass
class SolverConfig:
    eps: float = 1e-6
    chi_max: int = 2500
    max_sweeps: int = 40
    energy_tol: float | None = None   # model-dependent default
    solver_tol: float = 1e-10
    dt: float = 2e-2
    eps_t: float = 1e-4
    tdvp_chi_max: int = 2500
    krylov_count: int = 2
    eps_k: float = 1e-8
    eps_m: float = 1e-10
    krylov_chi_max: int = 3000
    expand_every_step: bool = True

    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(eps=self.eps, chi_max=self.chi_max)


@dataclass
class RunConfig:
    """Fully resolved description of one experiment."""

    model_kind: ModelKind
    params: object                 # SineGordonParams | SchwingerParams
    layout: ModeLayout
    solver: SolverConfig
    task: str
    task_options: dict
    out_dir: str
    seed: int
    threads: int
    raw: dict = field(default_factory=dict)

    def energy_tol(self) -> float:
        if self.solver.energy_tol is not None:
            return self.solver.energy_tol
        return 1e-9 if self.model_kind is ModelKind.SINE_GORDON else 1e-8

    def canonical_dict(self) -> dict:
        return {
            "model": {"kind": self.model_kind.value,
                      **{k: v for k, v in sorted(self.raw.get("model", {}).items())}},
            "layout": self.layout.to_dict(),
            "solver": {k: v for k, v in sorted(vars(self.solver).items())},
            "task": {"name": self.task,
                     **{k: (list(v) if isinstance(v, (list, tuple)) else v)
                        for k, v in sorted(self.task_options.items())}},
            "seed": self.seed,
        }

    def config_hash(self) -> str:
        js = json.dumps(self.canonical_dict(), sort_keys=True).encode()
        return hashlib.sha256(js).hexdigest()


def _check_schema(cp: configparser.ConfigParser) -> None:
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")


def load_config(path: str, out_override: str | None = None,
                seed_override: int | None = None,
                threads_override: int | None = None) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        read = cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if not read:
        raise ConfigError(f"config file not found: {path}")
    _check_schema(cp)

    if not cp.has_section("model"):
        raise ConfigError("missing [model] section")
    model = cp["model"]
    kind_s = model.get("kind", "").strip()
    try:
        kind = ModelKind(kind_s)
    except ValueError:
        raise ConfigError(f"model kind must be one of "
                          f"{[m.value for m in ModelKind]}, got {kind_s!r}")
    length = _parse_float(model.get("length", "15.0" if kind is ModelKind.SINE_GORDON
                                    else "100.0"), "length")

    if kind is ModelKind.SINE_GORDON:
        for bad in ("fermion_mass", "charge", "theta"):
            if bad in model:
                raise ConfigError(f"'{bad}' is not a sine-Gordon parameter")
        if "delta" not in model:
            raise ConfigError("sine-Gordon needs 'delta' in [model]")
        params = SineGordonParams(
            delta_dim=_parse_float(model["delta"], "delta"),
            length_L=length,
            soliton_mass=_parse_float(model.get("soliton_mass", "1.0"), "soliton_mass"))
    else:
        if "delta" in model or "soliton_mass" in model:
            raise ConfigError("'delta'/'soliton_mass' are not Schwinger parameters")
        params = SchwingerParams(
            fermion_mass=_parse_float(model.get("fermion_mass", "0.0"), "fermion_mass"),
            length_L=length,
            theta=_parse_float(model.get("theta", "0.0"), "theta"),
            charge_e=_parse_float(model.get("charge", "1.0"), "charge"))

    if not cp.has_section("layout"):
        raise ConfigError("missing [layout] section")
    lay_s = cp["layout"]
    try:
        k_max = lay_s.getint("k_max")
        n_max = lay_s.getint("n_max")
        n_zm = lay_s.getint("n_zm", fallback=n_max)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [layout] values: {exc}") from exc
    if k_max is None or n_max is None:
        raise ConfigError("[layout] requires k_max and n_max")
    try:
        layout = ModeLayout(kind, k_max, n_max, n_zm, length)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    solver = SolverConfig()
    if cp.has_section("solver"):
        s = cp["solver"]
        for key in s:
            if key in ("chi_max", "max_sweeps", "tdvp_chi_max", "krylov_count",
                       "krylov_chi_max"):
                setattr(solver, key, s.getint(key))
            elif key == "expand_every_step":
                setattr(solver, key, s.getboolean(key))
            else:
                setattr(solver, key, _parse_float(s[key], key))

    if not cp.has_section("task") or "name" not in cp["task"]:
        raise ConfigError("missing [task] section with 'name'")
    task = cp["task"]["name"].strip()
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
    t = cp["task"]
    opts: dict = {}
    if "sector" in t:
        opts["sector"] = t.getint("sector")
    if "k_max_list" in t:
        opts["k_max_list"] = _parse_list(t["k_max_list"], "k_max_list", int)
    if "m_list" in t:
        opts["m_list"] = _parse_list(t["m_list"], "m_list")
    if "sweep_parameter" in t:
        opts["sweep_parameter"] = t["sweep_parameter"].strip()
    if "sweep_values" in t:
        opts["sweep_values"] = _parse_list(t["sweep_values"], "sweep_values")
    if "t_total" in t:
        opts["t_total"] = _parse_float(t["t_total"], "t_total")
    if "quench_mass" in t:
        opts["quench_mass"] = _parse_float(t["quench_mass"], "quench_mass")
    if "quench_theta" in t:
        opts["quench_theta"] = _parse_float(t["quench_theta"], "quench_theta")
    if "measure_every" in t:
        opts["measure_every"] = t.getint("measure_every")
    if "wigner_modes" in t:
        opts["wigner_modes"] = _parse_list(t["wigner_modes"], "wigner_modes", int)
    if "wigner_times" in t:
        opts["wigner_times"] = _parse_list(t["wigner_times"], "wigner_times")
    if "s_max" in t:
        opts["s_max"] = _parse_float(t["s_max"], "s_max")
    if "s_points" in t:
        opts["s_points"] = t.getint("s_points")
    if "fit_lo" in t:
        opts["fit_lo"] = _parse_float(t["fit_lo"], "fit_lo")
    if "fit_hi" in t:
        opts["fit_hi"] = _parse_float(t["fit_hi"], "fit_hi")

    _validate_task(task, opts, kind)

    out_dir = cp.get("output", "dir", fallback="runs/out")
    seed = cp.getint("run", "seed", fallback=12345) if cp.has_section("run") else 12345
    threads = cp.getint("run", "threads", fallback=1) if cp.has_section("run") else 1

    env_out = os.environ.get("KMPS_OUT")
    env_seed = os.environ.get("KMPS_SEED")
    env_threads = os.environ.get("KMPS_THREADS")
    if env_out:
        out_dir = env_out
    if env_seed:
        seed = int(env_seed)
    if env_threads:
        threads = int(env_threads)
    if out_override is not None:
        out_dir = out_override
    if seed_override is not None:
        seed = seed_override
    if threads_override is not None:
        threads = threads_override

    raw = {sec: dict(cp[sec]) for sec in cp.sections()}
    return RunConfig(model_kind=kind, params=params, layout=layout, solver=solver,
                     task=task, task_options=opts, out_dir=out_dir, seed=seed,
                     threads=max(1, threads), raw=raw)


def _validate_task(task: str, opts: dict, kind: ModelKind) -> None:
    if task == "extrapolate" and "k_max_list" not in opts:
        raise ConfigError("extrapolate needs k_max_list")
    if task == "critical-mass":
        if kind is not ModelKind.MASSIVE_SCHWINGER:
            raise ConfigError("critical-mass is a massive-Schwinger task")
        if "m_list" not in opts:
            raise ConfigError("critical-mass needs m_list")
    if task == "sweep":
        if "sweep_parameter" not in opts or "sweep_values" not in opts:
            raise ConfigError("sweep needs sweep_parameter and sweep_values")
    if task == "quench":
        if kind is not ModelKind.MASSIVE_SCHWINGER:
            raise ConfigError("quench is a massive-Schwinger task")
        if "t_total" not in opts or "quench_mass" not in opts:
            raise ConfigError("quench needs t_total and quench_mass")
    if task == "fcs" and kind is not ModelKind.MASSIVE_SCHWINGER:
        raise ConfigError("fcs is a massive-Schwinger task")
