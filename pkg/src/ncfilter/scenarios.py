"""Scenario configuration, built-in presets, and the CLI work functions.

Configs are JSON with ``//`` line comments allowed.  Operator entries
are flat row-major lists of ``[re, im]`` pairs.  Schema (unknown keys
are rejected with their path):

    {
      "system": {"preset": "two-level-decay", "kappa": 1.0}
                | {"dim": d, "H": [[re,im]...], "L": [...], "S": [...]},
      "field": {"variant": "photon_combo",
                "gamma": {"g00": .., "g11": .., "g01": [re, im]},
                "xi": {"kind": "gaussian", "omega": .., "t_c": ..}
                      | {"kind": "tabulated", "grid": [..], "values": [[re,im]..]}}
             | {"variant": "coherent_mixture", "weights": [..],
                "alphas": [envelope, ...]},
      "initial_state": "ground" | "excited" | [[re,im]...],
      "measurement": "none" | "counting" | "homodyne",
      "grid": {"dt": .., "T": ..},          // optional
      "ensemble": {"M": .., "master_seed": ..},  // optional
      "output": {"path": "out", "format": "csv"} // optional
    }

The config hash covers every semantic field (system, field, initial
state, measurement, grid, ensemble) and ignores the output block.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .engine import (
    TimeGrid,
    flux_curve,
    integrate_compiled,
    master_excitation,
    quadrature_curve,
    run_counting,
    run_ensemble,
    run_homodyne,
    survival_curve,
    _Collector,
    _rng,
    derive_seed,
)
from .envelopes import (
    CoherentMixtureField,
    GammaMatrix,
    GaussianEnvelope,
    PhotonComboField,
    TabulatedEnvelope,
)
from .errors import ConfigError
from .extended import (
    compile_extended_process,
    extended_initial,
    reduce_extended_coherent,
    reduce_extended_photon,
    source_generator_for,
)
from .generators import (
    compile_fock_generator,
    compile_reduced_process,
    initial_reduced_vec,
)
from .hierarchy import initial_fock_state
from .operators import SystemModel, partial_trace_ancilla, two_level_decay

_ALLOWED_TOP = {"system", "field", "initial_state", "measurement", "grid", "ensemble", "output"}
_REQUIRED_TOP = {"system", "field", "initial_state", "measurement"}


@dataclass(frozen=True)
class ScenarioConfig:
    system: tuple
    field_spec: tuple
    initial_state: object
    measurement: str
    dt: float
    horizon: float
    n_traj: int = 2000
    master_seed: int = 0
    out_path: str = "out"
    out_format: str = "csv"

    def to_dict(self) -> dict:
        return {
            "system": _untuple(self.system),
            "field": _untuple(self.field_spec),
            "initial_state": _untuple(self.initial_state),
            "measurement": self.measurement,
            "grid": {"dt": self.dt, "T": self.horizon},
            "ensemble": {"M": self.n_traj, "master_seed": self.master_seed},
            "output": {"path": self.out_path, "format": self.out_format},
        }


def _tupled(obj):
    """Lists to tuples, dicts to sorted key-value tuples (hashable, eq-able)."""
    if isinstance(obj, dict):
        return tuple(sorted((k, _tupled(v)) for k, v in obj.items()))
    if isinstance(obj, (list, tuple)):
        return tuple(_tupled(v) for v in obj)
    return obj


def _untuple(obj):
    if isinstance(obj, tuple):
        if obj and all(
            isinstance(kv, tuple) and len(kv) == 2 and isinstance(kv[0], str)
            for kv in obj
        ):
            return {k: _untuple(v) for k, v in obj}
        return [_untuple(v) for v in obj]
    return obj


def _strip_comments(text: str) -> str:
    out = []
    for line in text.splitlines():
        in_str = False
        cut = len(line)
        for i, ch in enumerate(line):
            if ch == '"' and (i == 0 or line[i - 1] != "\\"):
                in_str = not in_str
            elif not in_str and ch == "/" and line[i : i + 2] == "//":
                cut = i
                break
        out.append(line[:cut])
    return "\n".join(out)


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing required key '{key}'")
    return d[key]


def _pairs_to_array(entries, dim: int, where: str) -> np.ndarray:
    if not isinstance(entries, (list, tuple)) or len(entries) != dim * dim:
        raise ConfigError(f"{where}: need {dim * dim} [re, im] pairs (row-major)")
    flat = []
    for k, pair in enumerate(entries):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError(f"{where}[{k}]: entries must be [re, im] pairs")
        flat.append(complex(float(pair[0]), float(pair[1])))
    return np.array(flat, dtype=complex).reshape(dim, dim)


def _complex_pair(value, where: str) -> complex:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{where}: expected an [re, im] pair")
    return complex(float(value[0]), float(value[1]))


def _validate_envelope(spec: dict, where: str, default_mode: str) -> dict:
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: envelope must be an object")
    kind = _need(spec, "kind", where)
    if kind == "gaussian":
        _reject_unknown(spec, {"kind", "omega", "t_c", "mode"}, where)
        omega = float(_need(spec, "omega", where))
        if omega <= 0:
            raise ConfigError(f"{where}.omega: must be positive")
        mode = spec.get("mode", default_mode)
        if mode not in ("unit-norm", "coherent"):
            raise ConfigError(f"{where}.mode: must be 'unit-norm' or 'coherent'")
        return {
            "kind": "gaussian",
            "omega": omega,
            "t_c": float(_need(spec, "t_c", where)),
            "mode": mode,
        }
    if kind == "tabulated":
        _reject_unknown(spec, {"kind", "grid", "values"}, where)
        grid = [float(g) for g in _need(spec, "grid", where)]
        values = _need(spec, "values", where)
        if len(grid) != len(values):
            raise ConfigError(f"{where}: grid and values must have equal length")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError(f"{where}.grid: must be strictly increasing")
        vals = [
            [float(_complex_pair(v, f"{where}.values[{k}]").real),
             float(_complex_pair(v, f"{where}.values[{k}]").imag)]
            for k, v in enumerate(values)
        ]
        return {"kind": "tabulated", "grid": grid, "values": vals}
    raise ConfigError(f"{where}.kind: unknown envelope kind {kind!r}")


def _default_horizon(field_spec: dict) -> float:
    """Pulse center plus nine inverse bandwidths, rounded up."""
    envs = (
        [field_spec["xi"]]
        if field_spec["variant"] == "photon_combo"
        else field_spec["alphas"]
    )
    t_end = 1.0
    for env in envs:
        if env["kind"] == "gaussian":
            t_end = max(t_end, env["t_c"] + 9.0 / env["omega"])
        else:
            t_end = max(t_end, env["grid"][-1] + 9.0)
    return float(math.ceil(t_end))


def parse_config(text: str) -> ScenarioConfig:
    """Validate config text; raises ConfigError naming the bad field."""
    try:
        raw = json.loads(_strip_comments(text))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(raw, _ALLOWED_TOP, "config")
    missing = sorted(_REQUIRED_TOP - set(raw))
    if missing:
        raise ConfigError(f"config: missing required keys {missing}")

    system = _need(raw, "system", "config")
    if not isinstance(system, dict):
        raise ConfigError("system: must be an object")
    if "preset" in system:
        _reject_unknown(system, {"preset", "kappa"}, "system")
        if system["preset"] != "two-level-decay":
            raise ConfigError(f"system.preset: unknown preset {system['preset']!r}")
        kappa = float(system.get("kappa", 1.0))
        if kappa <= 0:
            raise ConfigError("system.kappa: must be positive")
        system_norm = {"preset": "two-level-decay", "kappa": kappa}
        dim = 2
    else:
        _reject_unknown(system, {"dim", "H", "L", "S"}, "system")
        dim = int(_need(system, "dim", "system"))
        if dim < 1:
            raise ConfigError("system.dim: must be >= 1")
        h = _pairs_to_array(_need(system, "H", "system"), dim, "system.H")
        l_op = _pairs_to_array(_need(system, "L", "system"), dim, "system.L")
        s = _pairs_to_array(_need(system, "S", "system"), dim, "system.S")
        try:
            SystemModel(H=h, L=l_op, S=s)
        except ValueError as exc:
            raise ConfigError(f"system: {exc}") from exc
        system_norm = {
            "dim": dim,
            "H": [[z.real, z.imag] for z in h.reshape(-1)],
            "L": [[z.real, z.imag] for z in l_op.reshape(-1)],
            "S": [[z.real, z.imag] for z in s.reshape(-1)],
        }

    fld = _need(raw, "field", "config")
    if not isinstance(fld, dict):
        raise ConfigError("field: must be an object")
    variant = _need(fld, "variant", "field")
    if variant == "photon_combo":
        _reject_unknown(fld, {"variant", "gamma", "xi"}, "field")
        gamma = _need(fld, "gamma", "field")
        if not isinstance(gamma, dict):
            raise ConfigError("field.gamma: must be an object")
        _reject_unknown(gamma, {"g00", "g11", "g01"}, "field.gamma")
        g00 = float(_need(gamma, "g00", "field.gamma"))
        g11 = float(_need(gamma, "g11", "field.gamma"))
        g01 = _complex_pair(gamma.get("g01", [0.0, 0.0]), "field.gamma.g01")
        try:
            GammaMatrix(g00, g11, g01)
        except ValueError as exc:
            raise ConfigError(f"field.gamma: {exc}") from exc
        xi = _validate_envelope(_need(fld, "xi", "field"), "field.xi", "unit-norm")
        if xi["kind"] == "gaussian" and xi["mode"] != "unit-norm":
            raise ConfigError("field.xi.mode: photon_combo requires 'unit-norm'")
        field_norm = {
            "variant": "photon_combo",
            "gamma": {"g00": g00, "g11": g11, "g01": [g01.real, g01.imag]},
            "xi": xi,
        }
    elif variant == "coherent_mixture":
        _reject_unknown(fld, {"variant", "weights", "alphas"}, "field")
        weights = [float(w) for w in _need(fld, "weights", "field")]
        alphas = _need(fld, "alphas", "field")
        if len(weights) != len(alphas) or not weights:
            raise ConfigError("field: weights and alphas must be non-empty, equal length")
        if any(w < 0 for w in weights):
            raise ConfigError("field.weights: must be non-negative")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise ConfigError("field.weights: must sum to 1")
        field_norm = {
            "variant": "coherent_mixture",
            "weights": weights,
            "alphas": [
                _validate_envelope(a, f"field.alphas[{i}]", "coherent")
                for i, a in enumerate(alphas)
            ],
        }
    else:
        raise ConfigError(f"field.variant: unknown variant {variant!r}")

    init = _need(raw, "initial_state", "config")
    if isinstance(init, str):
        if init not in ("ground", "excited"):
            raise ConfigError("initial_state: must be 'ground', 'excited', or entries")
        init_norm = init
    else:
        rho0 = _pairs_to_array(init, dim, "initial_state")
        if abs(np.trace(rho0) - 1.0) > 1e-10:
            raise ConfigError("initial_state: trace must be 1")
        if np.max(np.abs(rho0 - rho0.conj().T)) > 1e-10:
            raise ConfigError("initial_state: must be Hermitian")
        if np.min(np.linalg.eigvalsh(0.5 * (rho0 + rho0.conj().T))) < -1e-12:
            raise ConfigError("initial_state: must be positive semidefinite")
        init_norm = [[z.real, z.imag] for z in rho0.reshape(-1)]

    measurement = _need(raw, "measurement", "config")
    if measurement not in ("none", "counting", "homodyne"):
        raise ConfigError("measurement: must be 'none', 'counting', or 'homodyne'")

    grid = raw.get("grid", {})
    if not isinstance(grid, dict):
        raise ConfigError("grid: must be an object")
    _reject_unknown(grid, {"dt", "T"}, "grid")
    dt = float(grid.get("dt", 1e-3))
    horizon = float(grid.get("T", _default_horizon(field_norm)))
    if dt <= 0:
        raise ConfigError("grid.dt: must be positive")
    if horizon <= 0:
        raise ConfigError("grid.T: must be positive")

    ens = raw.get("ensemble", {})
    if not isinstance(ens, dict):
        raise ConfigError("ensemble: must be an object")
    _reject_unknown(ens, {"M", "master_seed"}, "ensemble")
    n_traj = int(ens.get("M", 2000))
    if n_traj < 1:
        raise ConfigError("ensemble.M: must be >= 1")
    master_seed = int(ens.get("master_seed", 0))

    out = raw.get("output", {})
    if not isinstance(out, dict):
        raise ConfigError("output: must be an object")
    _reject_unknown(out, {"path", "format"}, "output")
    out_format = out.get("format", "csv")
    if out_format not in ("csv", "json"):
        raise ConfigError("output.format: must be 'csv' or 'json'")

    return ScenarioConfig(
        system=_tupled(system_norm),
        field_spec=_tupled(field_norm),
        initial_state=_tupled(init_norm),
        measurement=measurement,
        dt=dt,
        horizon=horizon,
        n_traj=n_traj,
        master_seed=master_seed,
        out_path=out.get("path", "out"),
        out_format=out_format,
    )


def print_config(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def config_hash(cfg: ScenarioConfig) -> str:
    semantic = cfg.to_dict()
    semantic.pop("output")
    text = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Building runtime objects from a validated config.
# ---------------------------------------------------------------------------


def build_model(cfg: ScenarioConfig) -> SystemModel:
    system = _untuple(cfg.system)
    if "preset" in system:
        return two_level_decay(system["kappa"])
    dim = system["dim"]
    return SystemModel(
        H=_pairs_to_array(system["H"], dim, "system.H"),
        L=_pairs_to_array(system["L"], dim, "system.L"),
        S=_pairs_to_array(system["S"], dim, "system.S"),
    )


def _build_envelope(spec: dict):
    if spec["kind"] == "gaussian":
        return GaussianEnvelope(spec["omega"], spec["t_c"], spec["mode"])
    values = np.array([complex(re, im) for re, im in spec["values"]])
    return TabulatedEnvelope(np.array(spec["grid"]), values)


def build_field(cfg: ScenarioConfig):
    fld = _untuple(cfg.field_spec)
    if fld["variant"] == "photon_combo":
        g = fld["gamma"]
        return PhotonComboField(
            gamma=GammaMatrix(g["g00"], g["g11"], complex(g["g01"][0], g["g01"][1])),
            xi=_build_envelope(fld["xi"]),
        )
    return CoherentMixtureField(
        weights=tuple(fld["weights"]),
        alphas=tuple(_build_envelope(a) for a in fld["alphas"]),
    )


def build_initial_state(cfg: ScenarioConfig, dim: int) -> np.ndarray:
    init = _untuple(cfg.initial_state)
    if init == "ground":
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        return rho
    if init == "excited":
        rho = np.zeros((dim, dim), dtype=complex)
        rho[dim - 1, dim - 1] = 1.0
        return rho
    return _pairs_to_array(init, dim, "initial_state")


def build_grid(cfg: ScenarioConfig) -> TimeGrid:
    return TimeGrid.from_horizon(cfg.dt, cfg.horizon)


# ---------------------------------------------------------------------------
# Built-in scenario presets.
# ---------------------------------------------------------------------------


def _fig1(initial: str) -> dict:
    return {
        "system": {"preset": "two-level-decay", "kappa": 1.0},
        "field": {
            "variant": "photon_combo",
            "gamma": {"g00": 0.2, "g11": 0.8, "g01": [0.0, 0.0]},
            "xi": {"kind": "gaussian", "omega": 1.46, "t_c": 3.0, "mode": "unit-norm"},
        },
        "initial_state": initial,
        "measurement": "counting",
        "grid": {"dt": 1e-3, "T": 12.0},
        "ensemble": {"M": 2000, "master_seed": 20260808},
    }


def _fig2(initial: str) -> dict:
    return {
        "system": {"preset": "two-level-decay", "kappa": 1.0},
        "field": {
            "variant": "coherent_mixture",
            "weights": [0.5, 0.5],
            "alphas": [
                {"kind": "gaussian", "omega": 2.4, "t_c": 3.0, "mode": "coherent"},
                {"kind": "gaussian", "omega": 2.4, "t_c": 5.0, "mode": "coherent"},
            ],
        },
        "initial_state": initial,
        "measurement": "counting",
        "grid": {"dt": 1e-3, "T": 12.0},
        "ensemble": {"M": 2000, "master_seed": 20260808},
    }


PRESETS = {
    "fig1-ground": _fig1("ground"),
    "fig1-excited": _fig1("excited"),
    "fig2-ground": _fig2("ground"),
    "fig2-excited": _fig2("excited"),
}


def load_scenario(name_or_path: str) -> tuple:
    """Resolve a preset name or config path to (name, ScenarioConfig)."""
    if name_or_path in PRESETS:
        return name_or_path, parse_config(json.dumps(PRESETS[name_or_path]))
    path = Path(name_or_path)
    if not path.exists():
        raise ConfigError(
            f"{name_or_path!r} is neither a preset ({', '.join(sorted(PRESETS))}) "
            "nor an existing config file"
        )
    return path.stem, parse_config(path.read_text())


# ---------------------------------------------------------------------------
# Scenario execution.
# ---------------------------------------------------------------------------


def _format_number(x: float) -> str:
    return f"{x:.17g}"


def _write_table(path: Path, header: list, columns: list, fmt: str) -> None:
    if fmt == "csv":
        with path.open("w") as fh:
            fh.write(",".join(header) + "\n")
            for row in zip(*columns):
                fh.write(",".join(_format_number(x) for x in row) + "\n")
    else:
        payload = {name: [float(x) for x in col] for name, col in zip(header, columns)}
        path.write_text(json.dumps(payload))


def _write_sidecar(path: Path, cfg: ScenarioConfig, extra: dict | None = None) -> None:
    doc = {
        "config": cfg.to_dict(),
        "hash": config_hash(cfg),
        "seed": cfg.master_seed,
        "tool_version": __version__,
    }
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))


def run_scenario(
    cfg: ScenarioConfig, name: str = "scenario", out_dir: str | None = None
) -> dict:
    """Deterministic run: master-equation curves plus count statistics.

    Writes ``<name>.csv`` (or ``.json``) and a ``<name>.json`` sidecar in
    the output directory and returns a summary with the final column
    values and output paths.
    """
    model = build_model(cfg)
    fs = build_field(cfg)
    rho0 = build_initial_state(cfg, model.dim)
    grid = build_grid(cfg)

    times = grid.times
    header = ["t", "flux", "P_exc"]
    columns = [times, flux_curve(fs, grid), master_excitation(model, fs, rho0, grid)]
    if cfg.measurement == "counting":
        survival = survival_curve(model, fs, rho0, grid)
        header.append("P_atleast_one_count")
        columns.append(1.0 - survival)
    elif cfg.measurement == "homodyne":
        header.append("quadrature_rate")
        columns.append(quadrature_curve(model, fs, rho0, grid))

    out = Path(out_dir if out_dir is not None else cfg.out_path)
    out.mkdir(parents=True, exist_ok=True)
    table_path = out / (f"{name}.csv" if cfg.out_format == "csv" else f"{name}.data.json")
    _write_table(table_path, header, columns, cfg.out_format)
    sidecar_path = out / f"{name}.json"
    _write_sidecar(sidecar_path, cfg)

    return {
        "table": str(table_path),
        "sidecar": str(sidecar_path),
        "header": header,
        "final": {name: float(col[-1]) for name, col in zip(header, columns)},
    }


def run_trajectories(
    cfg: ScenarioConfig,
    name: str = "scenario",
    out_dir: str | None = None,
    n_traj: int | None = None,
    master_seed: int | None = None,
) -> dict:
    """Ensemble run: deterministic columns plus per-node mean/stderr."""
    if cfg.measurement not in ("counting", "homodyne"):
        raise ConfigError("trajectories need measurement 'counting' or 'homodyne'")
    model = build_model(cfg)
    fs = build_field(cfg)
    rho0 = build_initial_state(cfg, model.dim)
    grid = build_grid(cfg)
    m = n_traj if n_traj is not None else cfg.n_traj
    seed = master_seed if master_seed is not None else cfg.master_seed

    result = run_ensemble(model, fs, rho0, grid, m, seed, scheme=cfg.measurement)

    times = grid.times
    header = ["t", "flux", "P_exc"]
    columns = [times, flux_curve(fs, grid), master_excitation(model, fs, rho0, grid)]
    if cfg.measurement == "counting":
        header.append("P_atleast_one_count")
        columns.append(1.0 - survival_curve(model, fs, rho0, grid))
        rate_name = "intensity"
    else:
        rate_name = "quadrature_rate"
    header += ["mean_P_exc", "stderr_P_exc", f"mean_{rate_name}", f"stderr_{rate_name}"]
    columns += [
        result.mean_excitation,
        result.stderr_excitation,
        result.mean_rate,
        result.stderr_rate,
    ]

    out = Path(out_dir if out_dir is not None else cfg.out_path)
    out.mkdir(parents=True, exist_ok=True)
    table_path = out / (
        f"{name}.trajectories.csv" if cfg.out_format == "csv" else f"{name}.trajectories.data.json"
    )
    _write_table(table_path, header, columns, cfg.out_format)

    extra = {"M": m, "scheme": cfg.measurement}
    if cfg.measurement == "counting":
        extra["zero_count_fraction"] = result.zero_count_fraction
        extra["mean_count"] = float(np.mean(result.counts))
    sidecar_path = out / f"{name}.trajectories.json"
    run_cfg = replace(cfg, n_traj=m, master_seed=seed)
    _write_sidecar(sidecar_path, run_cfg, extra)

    return {
        "table": str(table_path),
        "sidecar": str(sidecar_path),
        "result": result,
    }


# ---------------------------------------------------------------------------
# Oracle comparison (joint-space differential checks).
# ---------------------------------------------------------------------------


@dataclass
class OracleCheck:
    name: str
    max_deviation: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_deviation <= self.tolerance


@dataclass
class OracleReport:
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def text(self) -> str:
        lines = []
        for c in self.checks:
            status = "ok" if c.ok else "FAIL"
            lines.append(
                f"{c.name:32s} max dev {c.max_deviation:10.3e}  tol {c.tolerance:.0e}  {status}"
            )
        return "\n".join(lines)


def _reduced_from_extended_states(states, fs, times):
    if fs.variant == "photon_combo":
        dx = int(round(math.sqrt(states.shape[-1])))
        mats = states.reshape(states.shape[:-1] + (dx, dx))
        tails = fs.xi.tail_integral(times)
        fams = np.stack(
            [reduce_extended_photon(mats[i], tails[i]) for i in range(len(times))]
        )
        return fams
    dx = int(round(math.sqrt(states.shape[-1])))
    mats = states.reshape(states.shape[:-1] + (dx, dx))
    return np.stack([reduce_extended_coherent(mats[i]) for i in range(len(times))])


def compare_oracle(cfg: ScenarioConfig, seeds: int = 3, corrupt: bool = False) -> OracleReport:
    """Differential tests between the reduced and joint-space dynamics.

    ``corrupt`` perturbs one joint-space coupling coefficient and is only
    used as a negative control: the report must then fail.
    """
    model = build_model(cfg)
    fs = build_field(cfg)
    rho0 = build_initial_state(cfg, model.dim)
    grid = build_grid(cfg)
    times = grid.times
    gen = source_generator_for(fs)

    red = compile_reduced_process(model, fs)
    ext = compile_extended_process(model, gen)
    if corrupt:
        ext.drift.mats[1] *= 1.001
        ext.drift.mats_T[1] *= 1.001
        ext.nojump.mats[1] *= 1.001
        ext.nojump.mats_T[1] *= 1.001
    y0_red = initial_reduced_vec(rho0, fs)
    y0_ext = extended_initial(rho0, fs).reshape(-1)

    checks = []

    # deterministic: partial trace of the joint master equation vs rho_S
    red_states = integrate_compiled(red.drift, grid, y0_red)
    ext_states = integrate_compiled(ext.drift, grid, y0_ext)
    d = model.dim
    rho_red = red_states[:, : d * d].copy()
    for b in red.rho_block[1:]:
        rho_red += red_states[:, b * d * d : (b + 1) * d * d]
    dx = 2 * d
    tr_a = partial_trace_ancilla(ext_states.reshape(-1, dx, dx), d).reshape(-1, d * d)
    checks.append(
        OracleCheck("deterministic_partial_trace", float(np.max(np.abs(tr_a - rho_red))), 1e-8)
    )

    if fs.variant == "photon_combo":
        # the ladder form must combine to the same physical state
        g = fs.gamma
        fock_states = integrate_compiled(
            compile_fock_generator(model, fs.xi),
            grid,
            initial_fock_state(rho0).mats.reshape(-1),
        ).reshape(-1, 4, d * d)
        combined = (
            g.g00 * fock_states[:, 0] + g.g01 * fock_states[:, 1]
            + g.g10 * fock_states[:, 2] + g.g11 * fock_states[:, 3]
        )
        checks.append(
            OracleCheck(
                "hierarchy_equivalence", float(np.max(np.abs(combined - rho_red))), 1e-8
            )
        )

    # stochastic: same-record trajectories at both levels
    n = grid.n_steps
    seed_list = [derive_seed(cfg.master_seed, 1_000_000 + i) for i in range(seeds)]
    uniforms = np.stack([_rng(s).random(n) for s in seed_list])
    coll_r = _Collector(red, n + 1, full=True, store_states=True)
    _, coll_r, stats_r = run_counting(red, grid, np.broadcast_to(y0_red, (seeds, y0_red.size)).copy(), uniforms=uniforms, collector=coll_r)
    decisions = np.zeros((seeds, n), dtype=bool)
    for i, steps in enumerate(stats_r.jump_steps):
        decisions[i, steps] = True
    coll_e = _Collector(ext, n + 1, full=True, store_states=True)
    _, coll_e, _ = run_counting(ext, grid, np.broadcast_to(y0_ext, (seeds, y0_ext.size)).copy(), decisions=decisions, collector=coll_e)

    red_fams = coll_r.states.reshape(n + 1, seeds, -1, d, d)
    ext_fams = _reduced_from_extended_states(coll_e.states, fs, times)
    checks.append(
        OracleCheck(
            "counting_same_record",
            float(np.max(np.abs(red_fams - ext_fams))),
            1e-6,
        )
    )
    checks.append(
        OracleCheck(
            "counting_intensity_match",
            float(np.max(np.abs(coll_r.rate - coll_e.rate))),
            1e-8,
        )
    )

    dws = np.sqrt(grid.dt) * np.stack([_rng(s ^ 0xABCDEF).standard_normal(n) for s in seed_list])
    coll_rh = _Collector(red, n + 1, full=True, store_states=True)
    _, coll_rh, _ = run_homodyne(red, grid, np.broadcast_to(y0_red, (seeds, y0_red.size)).copy(), dws, collector=coll_rh)
    coll_eh = _Collector(ext, n + 1, full=True, store_states=True)
    _, coll_eh, _ = run_homodyne(ext, grid, np.broadcast_to(y0_ext, (seeds, y0_ext.size)).copy(), dws, collector=coll_eh)
    red_fams_h = coll_rh.states.reshape(n + 1, seeds, -1, d, d)
    ext_fams_h = _reduced_from_extended_states(coll_eh.states, fs, times)
    checks.append(
        OracleCheck(
            "homodyne_same_record",
            float(np.max(np.abs(red_fams_h - ext_fams_h))),
            1e-6,
        )
    )
    checks.append(
        OracleCheck(
            "quadrature_rate_match",
            float(np.max(np.abs(coll_rh.rate - coll_eh.rate))),
            1e-8,
        )
    )

    return OracleReport(checks)
