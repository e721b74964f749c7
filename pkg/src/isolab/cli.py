"""isolab command-line workbench.

Subcommands: fn, pvi, schlesinger, elliptic, limit, plot.

Every run writes ``manifest.json`` into ``--out`` (default ``isolab-out/<command>``),
even when a stage fails. Exit codes: 0 all checks pass, 1 numeric check or
stage failure, 2 configuration/usage error. Complex numbers are ``re,im`` on the
command line and ``[re, im]`` in JSON config files; paths are
``"re,im -> re,im -> ..."`` on the command line and lists of pairs in files.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CollisionError, IsolabError, PoleError
from .integrate import PathSpec

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    def __init__(self, msg, field=None):
        super().__init__(msg)
        self.field = field


# ---------------------------------------------------------------- value parsing


def parse_complex(value, field="value"):
    """Accept a number, [re, im], or the CLI string 're,im'; finite values only."""
    z = _parse_complex(value, field)
    if not np.isfinite(z):
        raise ConfigError(f"field '{field}': {value!r} is not finite", field)
    return z


def _parse_complex(value, field):
    if isinstance(value, bool):
        raise ConfigError(f"field '{field}': expected a complex number, got a boolean", field)
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, complex):
        return value
    if isinstance(value, (list, tuple)):
        if len(value) != 2 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
            raise ConfigError(f"field '{field}': expected [re, im], got {value!r}", field)
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(",")]
        try:
            if len(parts) == 1:
                return complex(float(parts[0]))
            if len(parts) == 2:
                return complex(float(parts[0]), float(parts[1]))
        except ValueError:
            pass
        raise ConfigError(f"field '{field}': cannot parse {value!r} as 're,im'", field)
    raise ConfigError(f"field '{field}': expected a complex number, got {type(value).__name__}", field)


def parse_real(value, field, positive=False):
    if isinstance(value, bool):
        raise ConfigError(f"field '{field}': expected a number", field)
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"field '{field}': expected a number, got {value!r}", field) from None
    if not math.isfinite(x):
        raise ConfigError(f"field '{field}': must be finite", field)
    if positive and not x > 0:
        raise ConfigError(f"field '{field}': must be > 0, got {x}", field)
    return x


def parse_int(value, field, minimum=None):
    if isinstance(value, bool):
        raise ConfigError(f"field '{field}': expected an integer", field)
    try:
        x = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"field '{field}': expected an integer, got {value!r}", field) from None
    if isinstance(value, float) and value != x:
        raise ConfigError(f"field '{field}': expected an integer, got {value!r}", field)
    if minimum is not None and x < minimum:
        raise ConfigError(f"field '{field}': must be >= {minimum}, got {x}", field)
    return x


def parse_bool(value, field):
    if isinstance(value, bool):
        return value
    raise ConfigError(f"field '{field}': expected true or false, got {value!r}", field)


def parse_waypoints(value, field):
    if isinstance(value, str):
        items = [p for p in value.split("->")]
        if len(items) < 2:
            raise ConfigError(f"field '{field}': a path needs 're,im -> re,im'", field)
        return [parse_complex(p.strip(), field) for p in items]
    if isinstance(value, (list, tuple)):
        return [parse_complex(p, field) for p in value]
    raise ConfigError(f"field '{field}': expected a path", field)


def parse_real_list(value, field):
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"field '{field}': expected a non-empty list of numbers", field)
    return [parse_real(v, field) for v in value]


def parse_complex_list(value, field):
    if isinstance(value, str):
        return [parse_complex(v.strip(), field) for v in value.split(";") if v.strip()]
    if isinstance(value, (list, tuple)):
        if len(value) == 2 and all(isinstance(x, (int, float)) for x in value):
            return [parse_complex(value, field)]
        return [parse_complex(v, field) for v in value]
    return [parse_complex(value, field)]


def make_path(waypoints, samples, field):
    try:
        return PathSpec(tuple(waypoints), samples)
    except ValueError as exc:
        raise ConfigError(f"field '{field}': {exc}", field) from None


# ---------------------------------------------------------------- serialization


def to_jsonable(obj):
    if isinstance(obj, (bool, str)) or obj is None:
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(obj.real), to_jsonable(obj.imag)]
    if isinstance(obj, PathSpec):
        return {"waypoints": [to_jsonable(w) for w in obj.waypoints],
                "samples_per_segment": obj.samples_per_segment}
    if isinstance(obj, np.ndarray):
        return [to_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dump_json(obj):
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def format_number(x):
    return repr(float(x))


def csv_text(columns):
    """Columns as (name, values); complex columns split into name_re, name_im."""
    header, cols = [], []
    n = None
    for name, values in columns:
        arr = np.asarray(values)
        if n is None:
            n = len(arr)
        elif len(arr) != n:
            raise ValueError(f"column {name} has {len(arr)} rows, expected {n}")
        if np.iscomplexobj(arr):
            header += [f"{name}_re", f"{name}_im"]
            cols += [arr.real, arr.imag]
        else:
            header.append(name)
            cols.append(arr)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in zip(*cols):
        writer.writerow([str(x) if isinstance(x, (int, np.integer)) else format_number(x) for x in row])
    return buf.getvalue()


# ---------------------------------------------------------------- run bookkeeping


class Run:
    def __init__(self, command, out_dir, config, record_timing=False):
        self.command = command
        self.out_dir = Path(out_dir)
        self.config = config
        self.record_timing = record_timing
        self.stage = "setup"
        self.checks = []
        self.calibration = {}
        self.measurements = {}
        self.outputs = []
        self.error = None
        self.started = time.perf_counter()

    def check(self, name, value, threshold, mode="lt"):
        from .identities import make_check

        c = make_check(name, value, threshold, mode)
        rec = c.to_dict()
        rec["stage"] = self.stage
        self.checks.append(rec)
        return c.passed

    def _write(self, name, text):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with open(self.out_dir / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        if name not in self.outputs and name != "manifest.json":
            self.outputs.append(name)

    def write_csv(self, name, columns):
        self._write(name, csv_text(columns))

    def write_json(self, name, obj):
        self._write(name, dump_json(obj))

    def fail(self, exc):
        info = {"type": type(exc).__name__, "message": str(exc)}
        for attr in ("pair", "param", "point"):
            val = getattr(exc, attr, None)
            if val is not None:
                info[attr] = val
        self.error = info

    def finish(self, config_error=None):
        failing = [c for c in self.checks if not c["passed"]]
        if config_error is not None:
            status, failed_stage, code = "config-error", "config", EXIT_CONFIG
        elif self.error is not None:
            status, failed_stage, code = "error", self.stage, EXIT_CHECK
        elif failing:
            status, failed_stage, code = "fail", failing[0]["stage"], EXIT_CHECK
        else:
            status, failed_stage, code = "pass", None, EXIT_OK
        manifest = {
            "tool": "isolab",
            "version": __version__,
            "command": self.command,
            "config": self.config,
            "status": status,
            "exit_code": code,
            "failed_stage": failed_stage,
            "checks": self.checks,
            "calibration": self.calibration,
            "measurements": self.measurements,
            "outputs": sorted(self.outputs),
            "error": config_error if config_error is not None else self.error,
        }
        if self.record_timing:
            manifest["wall_time_s"] = round(time.perf_counter() - self.started, 3)
        try:
            self._write("manifest.json", dump_json(manifest))
        except OSError as exc:
            print(f"isolab: cannot write manifest: {exc}", file=sys.stderr)
        return code


# ---------------------------------------------------------------- config resolution

# field -> (kind, default); kinds are parsed by ``resolve_config``
SCHEMAS = {
    "fn": {
        "tau": ("complex", None),
        "eval": ("str", None),
        "z": ("complexlist", None),
        "grid": ("int", 0),
        "u": ("complex", 0.3 + 0.1j),
        "check": ("bool", False),
    },
    "pvi": {
        "nu": ("complex", None),
        "params": ("complexlist", None),
        "kappa": ("complex", 1.0),
        "tau_path": ("path", [1j, 1.2j]),
        "samples": ("int", 257),
        "u0": ("complex", 0.3 + 0.1j),
        "v0": ("complex", 0.2 - 0.1j),
        "tol": ("posreal", 1e-11),
        "cross_check": ("bool", False),
        "order_check": ("bool", False),
    },
    "schlesinger": {
        "system": ("system", None),
        "random": ("int", None),
        "rank": ("int", 2),
        "scale": ("posreal", 0.3),
        "kappa": ("complex", 1.0),
        "moving": ("int", 0),
        "path": ("path", None),
        "samples": ("int", 65),
        "tol": ("posreal", 1e-11),
        "monodromy": ("bool", False),
        "negative_control": ("bool", False),
        "tau": ("bool", False),
        "whitham": ("bool", False),
        "fd_step": ("posreal", 1e-5),
    },
    "elliptic": {
        "nu": ("complex", 1.0),
        "kappa": ("complex", 1.0),
        "tau0": ("complex", 1j),
        "tau_path": ("path", None),
        "samples": ("int", 33),
        "u0": ("complex", 0.23 + 0.05j),
        "v0": ("complex", 0.1),
        "tol": ("posreal", 1e-11),
        "check_17_6": ("bool", False),
        "check_periodicity": ("bool", False),
        "fit_pvi": ("bool", False),
        "check_lattice": ("bool", False),
        "check_hamiltonian_flow": ("bool", False),
    },
    "limit": {
        "nu": ("complex", 1.0),
        "kappas": ("reallist", [0.2, 0.1, 0.05, 0.025]),
        "tau0": ("complex", 1j),
        "horizon": ("posreal", 1.0),
        "samples": ("int", 65),
        "initial": ("int", 3),
        "u0": ("complex", None),
        "v0": ("complex", None),
        "tol": ("posreal", 1e-11),
        "calogero_check": ("bool", False),
    },
    "plot": {
        "csv": ("str", None),
        "pairs": ("str", None),
        "title": ("str", None),
        "svg": ("str", "plot.svg"),
    },
}
COMMON = {"seed": ("int", 0)}


def _parse_field(kind, value, field):
    if value is None:
        return None
    if kind == "complex":
        return parse_complex(value, field)
    if kind == "real":
        return parse_real(value, field)
    if kind == "posreal":
        return parse_real(value, field, positive=True)
    if kind == "int":
        return parse_int(value, field)
    if kind == "bool":
        return parse_bool(value, field)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"field '{field}': expected a string", field)
        return value
    if kind == "path":
        return parse_waypoints(value, field)
    if kind == "reallist":
        return parse_real_list(value, field)
    if kind == "complexlist":
        return parse_complex_list(value, field)
    if kind == "system":
        return parse_system(value, field)
    raise AssertionError(kind)


def parse_system(value, field="system"):
    from .schlesinger import PoleSystem

    if not isinstance(value, dict):
        raise ConfigError(f"field '{field}': expected an object with positions/residues", field)
    for key in ("positions", "residues"):
        if key not in value:
            raise ConfigError(f"field '{field}.{key}' is required", f"{field}.{key}")
    pos = [parse_complex(x, f"{field}.positions") for x in value["positions"]]
    try:
        res = [[[parse_complex(z, f"{field}.residues") for z in row] for row in p] for p in value["residues"]]
        arr = np.array(res, dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{field}.residues': {exc}", f"{field}.residues") from None
    kappa = parse_complex(value.get("kappa", 1.0), f"{field}.kappa")
    try:
        return PoleSystem(tuple(pos), arr, kappa)
    except ValueError as exc:
        raise ConfigError(f"field '{field}': {exc}", field) from None


def load_config_file(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def resolve_config(command, file_data, flags):
    schema = dict(COMMON, **SCHEMAS[command])
    raw = {k: v[1] for k, v in schema.items()}
    for key, value in (file_data or {}).items():
        if key in ("out", "record_timing"):
            continue
        if key not in schema:
            raise ConfigError(f"unknown field '{key}' for command '{command}'", key)
        raw[key] = value
    for key, value in flags.items():
        if key in schema:
            raw[key] = value
    return {k: _parse_field(schema[k][0], v, k) for k, v in raw.items()}


def echo_config(cfg):
    out = {}
    for k, v in cfg.items():
        if k == "system" and v is not None:
            out[k] = v.to_dict()
        else:
            out[k] = v
    return out


# ---------------------------------------------------------------- commands

FN_NAMES = ("theta", "theta1", "theta2", "theta3", "e1", "e2", "wp", "wpp", "phi")


def _eval_fn(name, z, tau, u):
    from . import elliptic as ell

    if name == "theta":
        return ell.theta(z, tau)
    if name.startswith("theta") and name[5:].isdigit():
        return ell.theta_derivatives(z, tau, int(name[5:]))
    table = {
        "e1": ell.eisenstein_e1,
        "e2": ell.eisenstein_e2,
        "wp": ell.weierstrass_p,
        "wpp": ell.weierstrass_p_prime,
    }
    if name in table:
        return table[name](z, tau)
    if name == "phi":
        return ell.phi_kernel(u, z, tau)
    raise AssertionError(name)


def cmd_fn(cfg, run):
    from .identities import DEFAULT_TAUS, cell_grid, elliptic_identity_suite

    names = []
    if cfg["eval"]:
        names = [n.strip() for n in cfg["eval"].split(",") if n.strip()]
        bad = [n for n in names if n not in FN_NAMES]
        if bad:
            raise ConfigError(f"field 'eval': unknown function(s) {bad}; choose from {list(FN_NAMES)}", "eval")
    if not names and not cfg["check"]:
        raise ConfigError("nothing to do: give --eval and/or --check")
    tau = cfg["tau"]
    if tau is not None and not tau.imag > 0:
        raise ConfigError(f"field 'tau': Im(tau) must be > 0, got {tau}", "tau")
    if names:
        if tau is None:
            raise ConfigError("field 'tau' is required with --eval", "tau")
        zs = list(cfg["z"] or [])
        if cfg["grid"]:
            zs += list(cell_grid(tau, parse_int(cfg["grid"], "grid", 1)))
        if not zs:
            raise ConfigError("give --z points or --grid N with --eval", "z")
        run.stage = "eval"
        zs = np.array(zs, dtype=complex)
        cols = [("z", zs)]
        for name in names:
            vals = np.array([_eval_fn(name, z, tau, cfg["u"]) for z in zs], dtype=complex)
            cols.append((name, vals))
        run.write_csv("values.csv", cols)
    if cfg["check"]:
        run.stage = "identities"
        taus = [tau] if tau is not None else list(DEFAULT_TAUS)
        for t in taus:
            for c in elliptic_identity_suite(t):
                label = f"{c.name}@tau={t.real:g},{t.imag:g}"
                run.check(label, c.value, c.threshold, c.mode)


def _pvi_params(cfg):
    from .pvi import PviParams, family_params

    if cfg["params"] is not None:
        if cfg["nu"] is not None:
            raise ConfigError("give either 'nu' or 'params', not both", "params")
        if len(cfg["params"]) != 4:
            raise ConfigError("field 'params': expected 4 values (alpha, beta, gamma, delta)", "params")
        return PviParams(*cfg["params"])
    return family_params(cfg["nu"] if cfg["nu"] is not None else 1.0)


def _arc_length(params):
    p = np.asarray(params, dtype=complex)
    return np.concatenate([[0.0], np.cumsum(np.abs(np.diff(p)))])


def _resample(path, samples):
    """Path with ``samples`` points per segment."""
    return PathSpec(path.waypoints, samples)


def cmd_pvi(cfg, run):
    from .pvi import PhaseState, cross_form_details, elliptic_to_rational, solve_pvi_elliptic

    params = _pvi_params(cfg)
    if cfg["kappa"] == 0:
        raise ConfigError("field 'kappa' must be nonzero", "kappa")
    samples = parse_int(cfg["samples"], "samples", 2)
    path = make_path(cfg["tau_path"], samples, "tau_path")
    if any(w.imag <= 0 for w in path.waypoints):
        raise ConfigError("field 'tau_path': the path leaves the upper half plane (Im tau must stay > 0)", "tau_path")
    run.stage = "integrate"
    state0 = PhaseState(cfg["v0"], cfg["u0"], path.start)
    traj = solve_pvi_elliptic(state0, path, params, cfg["kappa"], cfg["tol"])
    us, vs = traj.states[:, 0], traj.states[:, 1]
    ts, xs = [], []
    for u, tau in zip(us, traj.params):
        try:
            t, x = elliptic_to_rational((u, tau))
        except (PoleError, ValueError):
            t, x = complex("nan"), complex("nan")
        ts.append(t)
        xs.append(x)
    run.write_csv("trajectory.csv", [
        ("s", _arc_length(traj.params)), ("tau", traj.params), ("u", us), ("v", vs),
        ("t", np.array(ts)), ("X", np.array(xs)),
    ])
    run.measurements["accepted_steps"] = traj.accepted_steps
    run.measurements["rejected_steps"] = traj.rejected_steps
    if cfg["cross_check"] or cfg["order_check"]:
        run.stage = "cross-check"
        det = cross_form_details(traj, params)
        run.measurements["cross_form_coverage"] = det.coverage
        run.check("cross_form_residual", det.residual, 1e-5)
    if cfg["order_check"]:
        # doubling from quarter to half density, below the rounding floor of the FD stencils
        run.stage = "order-check"
        segs = len(path.waypoints) - 1
        quarter = (samples - 1) // 4 + 1
        half = (samples - 1) // 2 + 1
        if (quarter - 1) * segs + 1 < 64:
            raise ConfigError("order check needs samples >= 253 so the quarter-density run has >= 64 samples", "samples")
        res = []
        for n in (quarter, half):
            tr = solve_pvi_elliptic(state0, _resample(path, n), params, cfg["kappa"], cfg["tol"])
            res.append(cross_form_details(tr, params).residual)
        run.measurements["order_check_samples"] = [quarter, half]
        run.measurements["order_check_residuals"] = res
        ratio = res[0] / res[1] if res[1] > 0 else float("inf")
        run.check("cross_form_fd_order_ratio", ratio, 4.0, mode="ge")


def _schlesinger_system(cfg):
    from .schlesinger import random_pole_system

    if cfg["system"] is not None and cfg["random"] is not None:
        raise ConfigError("give either 'system' or 'random', not both", "system")
    if cfg["system"] is not None:
        return cfg["system"]
    if cfg["random"] is None:
        raise ConfigError("a pole system is required: 'system' in the config or --random N", "system")
    n = parse_int(cfg["random"], "random", 2)
    rank = parse_int(cfg["rank"], "rank", 2)
    if cfg["kappa"] == 0:
        raise ConfigError("field 'kappa' must be nonzero", "kappa")
    return random_pole_system(n, rank, seed=cfg["seed"], scale=cfg["scale"], kappa=cfg["kappa"])


def default_loops(sys0, moving, margin=0.25):
    """Loops around single static poles and around each pair of static poles.

    A loop is kept only if every other pole stays at least ``margin`` outside it.
    """
    from .schlesinger import loop_around

    static = [a for a in range(sys0.n) if a != moving]
    pos = np.array(sys0.positions)
    groups = [[a] for a in static] + [[a, b] for i, a in enumerate(static) for b in static[i + 1:]]
    loops = []
    for g in groups:
        loop = loop_around(pos[g], margin)
        center = complex(pos[g].mean())
        radius = abs(loop.waypoints[0] - center)
        others = [a for a in range(sys0.n) if a not in g]
        if all(abs(pos[a] - center) > radius + margin for a in others):
            loops.append((g, loop))
    return loops


def _moving_clear(loops, traj_params, margin):
    out = []
    for g, loop in loops:
        center = complex(np.mean([loop.waypoints[k] for k in range(len(loop.waypoints) - 1)]))
        radius = abs(loop.waypoints[0] - center)
        if np.all(np.abs(np.asarray(traj_params) - center) > radius + margin):
            out.append((g, loop))
    return out


def cmd_schlesinger(cfg, run):
    from .schlesinger import (
        casimir_spectrum,
        integrate_schlesinger,
        isomonodromy_check,
        tau_log_increment,
        trajectory_systems,
        whitham_residual,
        zero_curvature_residual,
    )

    sys0 = _schlesinger_system(cfg)
    m = parse_int(cfg["moving"], "moving", 0)
    if m >= sys0.n:
        raise ConfigError(f"field 'moving': index {m} out of range for {sys0.n} poles", "moving")
    samples = parse_int(cfg["samples"], "samples", 2)
    x0 = sys0.positions[m]
    if cfg["path"] is None:
        wp = [x0, x0 + 0.5 * x0 / abs(x0) if x0 != 0 else x0 + 0.5]
    else:
        wp = cfg["path"]
        if abs(wp[0] - x0) > 1e-12:
            raise ConfigError(f"field 'path': must start at x_{m} = {x0}", "path")
    path = make_path(wp, samples, "path")
    run.measurements["system"] = sys0.to_dict()

    run.stage = "flow"
    traj = integrate_schlesinger(sys0, m, path, cfg["tol"])
    systems = trajectory_systems(traj)
    cols = [("s", _arc_length(traj.params)), ("x_moving", traj.params)]
    N = sys0.rank
    for a in range(sys0.n):
        for i in range(N):
            for j in range(N):
                cols.append((f"p{a}_{i}{j}", traj.states[:, (a * N + i) * N + j]))
    run.write_csv("trajectory.csv", cols)

    run.stage = "invariants"
    moment = max(float(np.abs(s.residues.sum(axis=0)).max()) for s in systems)
    run.check("moment_drift", moment, 1e-10)
    c0 = np.array(casimir_spectrum(systems[0]))
    cas = max(float(np.abs(np.array(casimir_spectrum(s)) - c0).max()) for s in systems)
    run.check("casimir_drift", cas, 1e-9)
    radius = 2.0 * max(abs(x) for s in (systems[0], systems[-1]) for x in s.positions) + 1.0
    ws = radius * np.exp(2j * np.pi * (np.arange(8) + 0.5) / 8)
    zc = max(zero_curvature_residual(s, m, ws) for s in systems[:: max(1, len(systems) // 8)])
    run.check("zero_curvature_residual", zc, 1e-10)

    if cfg["monodromy"] or cfg["negative_control"]:
        run.stage = "monodromy"
        loops = _moving_clear(default_loops(sys0, m), traj.params, 0.25)
        if not loops:
            raise ConfigError("no admissible monodromy loop: the static poles are too crowded", "system")
        run.measurements["loops"] = [{"encloses": g, "loop": loop} for g, loop in loops]
        if cfg["monodromy"]:
            rep = isomonodromy_check(sys0, m, path, [l for _, l in loops], cfg["tol"])
            run.write_json("monodromy.json", {"loops": [g for g, _ in loops], "report": rep})
            run.check("monodromy_eigenvalue_drift", rep.drift, 1e-6)
        if cfg["negative_control"]:
            run.stage = "negative-control"
            ctl = isomonodromy_check(sys0, m, path, [l for _, l in loops], cfg["tol"], freeze_residues=True)
            run.write_json("monodromy_frozen.json", {"loops": [g for g, _ in loops], "report": ctl})
            run.check("frozen_residue_drift", ctl.drift, 1e-3, mode="ge")

    if cfg["tau"]:
        run.stage = "tau"
        run.measurements["delta_log_tau"] = tau_log_increment(traj)
        run.measurements["delta_log_tau_trapezoid"] = tau_log_increment(traj, richardson=False)

    if cfg["whitham"]:
        run.stage = "whitham"
        h = cfg["fd_step"]
        worst = 0.0
        for a in range(sys0.n):
            for b in range(a + 1, sys0.n):
                worst = max(worst, abs(whitham_residual(sys0, a, b, h)))
        run.check("whitham_residual", worst, 1e-6)


def _elliptic_path(cfg):
    tau0 = cfg["tau0"]
    if not tau0.imag > 0:
        raise ConfigError(f"field 'tau0': Im must be > 0, got {tau0}", "tau0")
    wp = cfg["tau_path"] if cfg["tau_path"] is not None else [tau0, tau0 + 0.1 + 0.2j]
    path = make_path(wp, parse_int(cfg["samples"], "samples", 2), "tau_path")
    if any(w.imag <= 0 for w in path.waypoints):
        raise ConfigError("field 'tau_path': the path leaves the upper half plane", "tau_path")
    return path


def cmd_elliptic(cfg, run):
    from .torus import (
        TorusTimes,
        sl2_lax_transcription,
        fit_pvi_proportionality,
        integrate_torus_flow,
        calibrated_hamiltonian_flow,
        lax_l_elliptic,
        rank_one_orbit,
        sl2_state,
    )

    nu, kappa, tau0 = cfg["nu"], cfg["kappa"], cfg["tau0"]
    if kappa == 0:
        raise ConfigError("field 'kappa' must be nonzero", "kappa")
    path = _elliptic_path(cfg)
    u0, v0 = cfg["u0"], cfg["v0"]
    du0 = 2 * v0 / kappa
    run.stage = "flow"
    traj = integrate_torus_flow((u0, du0), nu, path, kappa, cfg["tol"])
    run.write_csv("trajectory.csv", [
        ("s", _arc_length(traj.params)), ("tau", traj.params),
        ("u", traj.states[:, 0]), ("du", traj.states[:, 1]),
    ])
    residues = [rank_one_orbit(nu)]
    rng = np.random.default_rng(cfg["seed"])

    if cfg["check_17_6"]:
        run.stage = "lax-transcription"
        times = TorusTimes(tau0, tau0)
        state = sl2_state(u0, v0)
        ws = 0.1 + 0.8 * rng.random(10) + 1j * (0.1 + 0.8 * rng.random(10)) * tau0.imag
        rows, worst = [], 0.0
        for w in ws:
            a = lax_l_elliptic(w, w.conjugate(), state, residues, times, kappa)
            b = sl2_lax_transcription(w, w.conjugate(), u0, v0, nu, times, kappa)
            d = float(np.abs(a - b).max() / max(1.0, np.abs(b).max()))
            worst = max(worst, d)
            rows.append({"w": w, "max_entry_difference": d})
        run.write_json("lax_transcription.json", {"samples": rows, "max": worst})
        run.check("lax_vs_transcription", worst, 1e-12)

    if cfg["check_periodicity"]:
        run.stage = "periodicity"
        tau = path.end
        times = TorusTimes(tau0, tau)
        state = sl2_state(u0, v0)
        worst1 = worst_t = 0.0
        for w in 0.2 + 0.5 * rng.random(4) + 1j * (0.2 + 0.5 * rng.random(4)) * tau.imag:
            base = lax_l_elliptic(w, w.conjugate(), state, residues, times, kappa)
            s1 = lax_l_elliptic(w + 1, w.conjugate() + 1, state, residues, times, kappa)
            st = lax_l_elliptic(w + tau, w.conjugate() + tau0.conjugate(), state, residues, times, kappa)
            scale = max(1.0, np.abs(base).max())
            worst1 = max(worst1, float(np.abs(s1 - base).max() / scale))
            worst_t = max(worst_t, float(np.abs(st - base).max() / scale))
        run.measurements["periodicity_reading"] = "wbar shifted by conj(tau0)"
        run.check("lax_period_1", worst1, 1e-10)
        run.check("lax_period_tau", worst_t, 1e-10)

    if cfg["fit_pvi"]:
        run.stage = "fit-pvi"
        us = [0.13 + 0.05j, 0.21 + 0.11j, 0.29 - 0.04j, 0.37 + 0.08j, 0.17 + 0.19j]
        taus = [tau0, tau0 + 0.05 + 0.1j, tau0 - 0.1 + 0.2j]
        c, spread, nu_prime = fit_pvi_proportionality(nu, us, taus, kappa)
        run.calibration["pvi_proportionality_c"] = c
        run.calibration["pvi_equivalent_nu"] = nu_prime
        run.check("pvi_proportionality_spread", spread, 1e-8)

    if cfg["check_lattice"]:
        run.stage = "lattice"
        worst = 0.0
        for mm, nn in ((1, 0), (0, 1), (1, -1), (2, 1)):
            shifted = integrate_torus_flow((u0 + mm - nn * path.start, du0 - nn), nu, path, kappa, cfg["tol"])
            expect_u = traj.states[:, 0] + mm - nn * traj.params
            expect_du = traj.states[:, 1] - nn
            worst = max(worst, float(np.abs(shifted.states[:, 0] - expect_u).max()),
                        float(np.abs(shifted.states[:, 1] - expect_du).max()))
        run.check("lattice_equivariance", worst, 1e-8)

    if cfg["check_hamiltonian_flow"]:
        run.stage = "hamiltonian-flow"
        times = TorusTimes(tau0, tau0)
        scale = -2.0
        run.calibration["literal_potential_scale"] = scale
        ham = calibrated_hamiltonian_flow(u0, v0, residues, times, path, kappa, scale, cfg["tol"])
        run.check("literal_hamiltonian_flow_vs_torus_flow", float(np.abs(ham.end_state[0] - traj.end_state[0])), 1e-7)


def _limit_initial_conditions(cfg):
    if (cfg["u0"] is None) != (cfg["v0"] is None):
        raise ConfigError("give both 'u0' and 'v0' or neither", "u0")
    if cfg["u0"] is not None:
        return [(cfg["u0"], cfg["v0"])]
    count = parse_int(cfg["initial"], "initial", 1)
    out = []
    for k in range(count):
        rng = np.random.default_rng([cfg["seed"], k])
        r = rng.random(4)
        out.append((0.25 + 0.1j + 0.05 * (r[0] + 1j * r[1]), 0.2 * (r[2] - 0.5) + 0.2j * (r[3] - 0.5)))
    return out


def cmd_limit(cfg, run):
    from .calogero import (
        ROUNDING_FLOOR,
        CalogeroState,
        calogero_flow,
        citv_coupling_for_calogero,
        citv_flow,
        scaling_limit_fit,
    )
    from .integrate import straight_path
    from .pvi import family_params

    kappas = cfg["kappas"]
    if any(k <= 0 for k in kappas) or any(b >= a for a, b in zip(kappas, kappas[1:])) or min(kappas) < 1e-3:
        raise ConfigError("field 'kappas': must be positive, strictly decreasing, smallest >= 1e-3", "kappas")
    tau0 = cfg["tau0"]
    if not tau0.imag > 0:
        raise ConfigError(f"field 'tau0': Im must be > 0, got {tau0}", "tau0")
    samples = parse_int(cfg["samples"], "samples", 2)
    ics = _limit_initial_conditions(cfg)
    run.stage = "sweep"
    rows_ic, rows_k, rows_d = [], [], []
    fits = []
    for i, (u0, v0) in enumerate(ics):
        fit = scaling_limit_fit(u0, v0, cfg["nu"], tau0, kappas, cfg["horizon"], cfg["tol"], samples)
        fits.append({"u0": u0, "v0": v0, **fit.to_dict()})
        for k, d in zip(fit.kappas, fit.distances):
            rows_ic.append(i)
            rows_k.append(k)
            rows_d.append(d)
    run.write_csv("sweep.csv", [("initial", np.array(rows_ic)), ("kappa", rows_k), ("distance", rows_d)])
    run.measurements["fits"] = fits
    run.stage = "fit"
    for i, f in enumerate(fits):
        order = f["fitted_order"]
        if not math.isfinite(order) and max(f["distances"]) < ROUNDING_FLOOR:
            run.check(f"distances_at_rounding_floor_ic{i}", max(f["distances"]), ROUNDING_FLOOR)
            continue
        run.check(f"fitted_order_ic{i}_min", order, 0.8, mode="ge")
        run.check(f"fitted_order_ic{i}_max", order, 1.2, mode="le")

    if cfg["calogero_check"]:
        run.stage = "calogero-n2"
        nu = cfg["nu"]
        u0, v0 = ics[0]
        st = CalogeroState((u0, -u0), (v0, -v0), tau0, nu)
        tp = straight_path(0.0, cfg["horizon"], samples)
        cal = calogero_flow(st, tp, cfg["tol"])
        nf = citv_coupling_for_calogero(nu)
        red = citv_flow(u0, v0, tau0, family_params(nf), tp, cfg["tol"])
        r = cal.states[:, 0] - cal.states[:, 1]
        vr = cal.states[:, 2] - cal.states[:, 3]
        diff = max(float(np.abs(r - 2 * red.states[:, 0]).max()), float(np.abs(vr - 2 * red.states[:, 1]).max()))
        run.calibration["citv_coupling_for_calogero_nu"] = nf
        run.check("calogero_n2_vs_citv", diff, 1e-8)


# ---------------------------------------------------------------- plotting

SVG_W, SVG_H = 960, 640
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


def read_csv_columns(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read CSV {path}: {exc}", "csv") from None
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 2:
        raise ConfigError(f"CSV {path} is empty (needs a header and at least one row)", "csv")
    header = rows[0]
    cols = {h: [] for h in header}
    for ln, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ConfigError(f"CSV {path} line {ln}: expected {len(header)} fields", "csv")
        for h, x in zip(header, row):
            try:
                cols[h].append(float(x))
            except ValueError:
                raise ConfigError(f"CSV {path} line {ln}: column '{h}' is not numeric", "csv") from None
    return header, {h: np.array(v) for h, v in cols.items()}


def default_pairs(header):
    cplx = [h[:-3] for h in header if h.endswith("_re") and h[:-3] + "_im" in header]
    if cplx:
        return [(f"{cplx[-1]}_re", f"{cplx[-1]}_im")]
    if len(header) >= 2:
        return [(header[0], h) for h in header[1:]]
    raise ConfigError("CSV needs at least two columns to plot", "csv")


def _fmt(x):
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def _tick(x):
    return f"{x:.4g}"


def render_svg(series, title=""):
    """Deterministic SVG: one polyline per (label, xs, ys) series."""
    ml, mr, mt, mb = 90, 30, 50, 70
    pw, ph = SVG_W - ml - mr, SVG_H - mt - mb
    xs_all = np.concatenate([s[1] for s in series])
    ys_all = np.concatenate([s[2] for s in series])
    finite = np.isfinite(xs_all) & np.isfinite(ys_all)
    if not finite.any():
        raise ConfigError("selected columns contain no finite values", "pairs")
    x0, x1 = float(xs_all[finite].min()), float(xs_all[finite].max())
    y0, y1 = float(ys_all[finite].min()), float(ys_all[finite].max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">',
        f'<rect x="0" y="0" width="{SVG_W}" height="{SVG_H}" fill="#ffffff"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#000000" stroke-width="1"/>',
    ]
    if title:
        out.append(f'<text x="{SVG_W // 2}" y="30" font-family="sans-serif" font-size="18" text-anchor="middle">{_escape(title)}</text>')
    for k in range(5):
        fx = x0 + (x1 - x0) * k / 4
        fy = y0 + (y1 - y0) * k / 4
        out.append(f'<line x1="{_fmt(px(fx))}" y1="{mt + ph}" x2="{_fmt(px(fx))}" y2="{mt + ph + 6}" stroke="#000000"/>')
        out.append(f'<text x="{_fmt(px(fx))}" y="{mt + ph + 22}" font-family="sans-serif" font-size="12" text-anchor="middle">{_tick(fx)}</text>')
        out.append(f'<line x1="{ml - 6}" y1="{_fmt(py(fy))}" x2="{ml}" y2="{_fmt(py(fy))}" stroke="#000000"/>')
        out.append(f'<text x="{ml - 10}" y="{_fmt(py(fy) + 4)}" font-family="sans-serif" font-size="12" text-anchor="end">{_tick(fy)}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        ok = np.isfinite(xs) & np.isfinite(ys)
        pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs[ok], ys[ok]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{ml + 10}" y="{mt + 18 + 16 * i}" font-family="sans-serif" font-size="12" fill="{color}">{_escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s):
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def cmd_plot(cfg, run):
    if not cfg["csv"]:
        raise ConfigError("field 'csv' (the input CSV) is required", "csv")
    header, cols = read_csv_columns(cfg["csv"])
    if cfg["pairs"]:
        pairs = []
        for item in cfg["pairs"].split(","):
            parts = item.split(":")
            if len(parts) != 2:
                raise ConfigError(f"field 'pairs': expected 'xcol:ycol', got {item!r}", "pairs")
            pairs.append((parts[0].strip(), parts[1].strip()))
    else:
        pairs = default_pairs(header)
    missing = sorted({c for p in pairs for c in p if c not in cols})
    if missing:
        raise ConfigError(f"CSV {cfg['csv']} lacks column(s) {missing}; available: {header}", "pairs")
    run.stage = "render"
    series = [(f"{y} vs {x}", cols[x], cols[y]) for x, y in pairs]
    svg = render_svg(series, cfg["title"] or Path(cfg["csv"]).name)
    name = Path(cfg["svg"]).name
    if name != cfg["svg"]:
        raise ConfigError("field 'svg': give a file name; it is written into --out", "svg")
    run._write(name, svg)


COMMANDS = {
    "fn": cmd_fn,
    "pvi": cmd_pvi,
    "schlesinger": cmd_schlesinger,
    "elliptic": cmd_elliptic,
    "limit": cmd_limit,
    "plot": cmd_plot,
}


# ---------------------------------------------------------------- argparse

S = argparse.SUPPRESS


def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags given on the command line override it")
    p.add_argument("--out", help="output directory (default isolab-out/<command>)")
    p.add_argument("--seed", default=S, help="RNG seed (default 0)")
    p.add_argument("--record-timing", action="store_true",
                   help="add wall time to the manifest (makes manifests differ between runs)")


def build_parser():
    parser = argparse.ArgumentParser(prog="isolab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"isolab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fn", help="evaluate theta/Eisenstein/Weierstrass functions; identity suite")
    _add_common(p)
    p.add_argument("--tau", default=S, help="modulus 're,im'")
    p.add_argument("--eval", default=S, help=f"comma list from {','.join(FN_NAMES)}")
    p.add_argument("--z", default=S, help="points 're,im;re,im;...'")
    p.add_argument("--grid", default=S, help="add an N x N grid over the fundamental cell")
    p.add_argument("--u", default=S, help="first argument of phi")
    p.add_argument("--check", action="store_true", default=S, help="run the identity suite")

    p = sub.add_parser("pvi", help="integrate elliptic Painleve VI; cross-form check")
    _add_common(p)
    p.add_argument("--nu", default=S, help="family coupling")
    p.add_argument("--params", default=S, help="alpha;beta;gamma;delta (each re or re,im)")
    p.add_argument("--kappa", default=S)
    p.add_argument("--tau-path", dest="tau_path", default=S, help="'re,im -> re,im'")
    p.add_argument("--samples", default=S, help="samples per path segment (default 257)")
    p.add_argument("--u0", default=S)
    p.add_argument("--v0", default=S)
    p.add_argument("--tol", default=S)
    p.add_argument("--cross-check", dest="cross_check", action="store_true", default=S)
    p.add_argument("--order-check", dest="order_check", action="store_true", default=S,
                   help="also rerun at half the sample density; residual must drop >= 4x")

    p = sub.add_parser("schlesinger", help="Schlesinger flow with invariant monitors")
    _add_common(p)
    p.add_argument("--random", default=S, help="seeded random system with N poles")
    p.add_argument("--rank", default=S)
    p.add_argument("--scale", default=S)
    p.add_argument("--kappa", default=S)
    p.add_argument("--moving", default=S, help="index of the moving pole (default 0)")
    p.add_argument("--path", default=S, help="path of the moving pole 're,im -> re,im'")
    p.add_argument("--samples", default=S)
    p.add_argument("--tol", default=S)
    p.add_argument("--monodromy", action="store_true", default=S)
    p.add_argument("--negative-control", dest="negative_control", action="store_true", default=S,
                   help="frozen-residue run; its drift must be >= 1e-3")
    p.add_argument("--tau", action="store_true", default=S, help="report the log tau increment")
    p.add_argument("--whitham", action="store_true", default=S)
    p.add_argument("--fd-step", dest="fd_step", default=S)

    p = sub.add_parser("elliptic", help="genus-one sl2 torus flow and checks")
    _add_common(p)
    for name in ("nu", "kappa", "tau0", "u0", "v0", "tol", "samples"):
        p.add_argument(f"--{name}", default=S)
    p.add_argument("--tau-path", dest="tau_path", default=S)
    for flag in ("check-17-6", "check-periodicity", "fit-pvi", "check-lattice", "check-hamiltonian-flow"):
        p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), action="store_true", default=S)

    p = sub.add_parser("limit", help="kappa -> 0 sweep against the CITV flow")
    _add_common(p)
    for name in ("nu", "tau0", "horizon", "samples", "initial", "u0", "v0", "tol"):
        p.add_argument(f"--{name}", default=S)
    p.add_argument("--kappas", default=S, help="comma list, strictly decreasing")
    p.add_argument("--calogero-check", dest="calogero_check", action="store_true", default=S)

    p = sub.add_parser("plot", help="deterministic SVG from a CSV")
    _add_common(p)
    p.add_argument("csv", nargs="?", default=S)
    p.add_argument("--pairs", default=S, help="'xcol:ycol,xcol:ycol'")
    p.add_argument("--title", default=S)
    p.add_argument("--svg", default=S, help="output file name inside --out (default plot.svg)")
    return parser


def _flags_from_namespace(ns):
    skip = {"command", "config", "out", "record_timing"}
    flags = {k: v for k, v in vars(ns).items() if k not in skip}
    if "params" in flags and isinstance(flags["params"], str):
        flags["params"] = [p.strip() for p in flags["params"].split(";")]
    return flags


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    command = ns.command
    file_data = {}
    out = ns.out
    run = Run(command, out or os.path.join("isolab-out", command), {}, ns.record_timing)
    try:
        if ns.config:
            file_data = load_config_file(ns.config)
            if out is None and "out" in file_data:
                run.out_dir = Path(str(file_data["out"]))
            if "record_timing" in file_data and not ns.record_timing:
                run.record_timing = bool(file_data["record_timing"])
        cfg = resolve_config(command, file_data, _flags_from_namespace(ns))
        run.config = echo_config(cfg)
        COMMANDS[command](cfg, run)
    except ConfigError as exc:
        print(f"isolab {command}: config error: {exc}", file=sys.stderr)
        return run.finish(config_error={"message": str(exc), "field": exc.field})
    except (IsolabError, ArithmeticError) as exc:
        run.fail(exc)
        print(f"isolab {command}: stage '{run.stage}' failed: {exc}", file=sys.stderr)
        return run.finish()
    except ValueError as exc:
        # library-level input validation (e.g. a modulus outside the upper half plane)
        print(f"isolab {command}: invalid input: {exc}", file=sys.stderr)
        return run.finish(config_error={"message": str(exc), "field": None})
    code = run.finish()
    for c in run.checks:
        mark = "PASS" if c["passed"] else "FAIL"
        op = {"lt": "<", "ge": ">=", "le": "<="}[c["mode"]]
        print(f"{mark} {c['name']}: {c['value']!r} ({op} {c['threshold']!r})")
    print(f"manifest: {run.out_dir / 'manifest.json'}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
