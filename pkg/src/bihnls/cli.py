"""Command-line front end: ``bihnls <task> [options]``.

Configuration comes from an optional TOML or JSON file (``--config``) with
command-line flags taking precedence. Every run writes its outputs plus a
``manifest.json`` into ``--out``.

Exit status: 0 success, 2 validation error, 3 numerical failure or
non-converged minimization, 4 partially failed sweep.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import re
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from . import __version__
from .asymptotics import (
    DEFAULT_LADDER,
    fit_exponent,
    lemma_integral,
    read_csv,
    run_sweep,
    write_csv,
)
from .errors import BihnlsError, NumericalFailure, ValidationError
from .optimizer import (
    MinimizeOptions,
    minimize_mass_constrained,
    minimize_quotient,
    minimize_quotient_radial,
)
from .spectral import default_grid, save_field
from .symbol import SymbolParams, rayleigh_quotient
from .trialfields import (
    AnnulusParams,
    KnappParams,
    annulus_field,
    cst_rad,
    knapp_field,
    rho_epsilon,
)

TASKS = ("minimize", "minimize-radial", "mass", "sweep", "knapp", "annulus", "cst-rad", "lemma", "fit")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 2, 3, 4

# key -> (type, description); shared by flags and config files
KEYS: dict[str, tuple[Any, str]] = {
    "N": (int, "spatial dimension"),
    "p": (float, "Lebesgue exponent"),
    "epsilon": (float, "symbol gap eps (a = 1, b = 1 + eps)"),
    "ladder": (str, "'default' or comma-separated decreasing eps values"),
    "m": (float, "mass for the constrained problem"),
    "epsilon_guess": (float, "eps used to build the starting field of a mass run"),
    "L": (float, "box half-width override"),
    "M": (int, "points-per-axis override"),
    "seed": (int, "random seed"),
    "max_iterations": (int, "iteration cap"),
    "tolerance": (float, "Euler-Lagrange residual tolerance"),
    "restarts": (int, "number of starts"),
    "step_rule": (str, "backtracking or fixed"),
    "step": (float, "initial step"),
    "precondition": (bool, "symbol-preconditioned descent"),
    "cap_weight": (float, "weight of the cap part of the starting field"),
    "s": (float, "annulus exponent"),
    "delta": (float, "lemma window bound"),
    "tau": (str, "lemma half-width: a number, 'constant' or 'eps^s'"),
    "fit": (str, "comma-separated columns to fit"),
    "columns": (str, "comma-separated sweep columns to compute"),
    "csv": (str, "input CSV for the fit task"),
    "out": (str, "output directory"),
    "dump_field": (bool, "write the minimizer as a BFLD1 file"),
    "jobs": (int, "worker processes for sweeps"),
}
SECTIONS = ("grid", "optimizer", "output", "params")


class ConfigError(ValidationError):
    pass


# ------------------------------------------------------------ config


def _key_line(text: str, key: str) -> int | None:
    pat = re.compile(rf'^[ \t]*"?({re.escape(key)})"?[ \t]*[=:]', re.M)
    m = pat.search(text)
    if m is None:
        pat = re.compile(rf'"({re.escape(key)})"\s*:')
        m = pat.search(text)
    return text.count("\n", 0, m.start(1)) + 1 if m else None


def load_config(path: str | os.PathLike) -> dict[str, Any]:
    """Read a TOML or JSON config into a flat dict, rejecting unknown keys."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from exc
    if path.suffix.lower() == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    else:
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib

        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a table/object")
    flat: dict[str, Any] = {}
    for k, v in raw.items():
        if k in SECTIONS and isinstance(v, dict):
            items = v.items()
        else:
            items = [(k, v)]
        for kk, vv in items:
            if kk != "task" and kk not in KEYS:
                line = _key_line(text, kk)
                where = f"{path}:{line}" if line else str(path)
                raise ConfigError(f"{where}: unknown key {kk!r}")
            try:
                flat[kk] = _coerce(kk, vv)
            except (TypeError, ValueError) as exc:
                line = _key_line(text, kk)
                where = f"{path}:{line}" if line else str(path)
                raise ConfigError(f"{where}: bad value for {kk!r}: {exc}") from exc
    return flat


def _coerce(key: str, value):
    if key == "task":
        if value not in TASKS:
            raise ValueError(f"task must be one of {', '.join(TASKS)}")
        return value
    typ = KEYS[key][0]
    if typ is bool:
        if not isinstance(value, bool):
            raise TypeError("expected a boolean")
        return value
    if typ is str and isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if typ is int and isinstance(value, float) and not value.is_integer():
        raise ValueError("expected an integer")
    return typ(value)


def _bool_flag(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bihnls",
        description="Ground states and quotient asymptotics for the biharmonic NLS on a periodic box.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="task", metavar="task")
    for task in TASKS:
        sp = sub.add_parser(task, help=_TASK_HELP[task])
        sp.add_argument("--config", help="TOML or JSON config file")
        for key, (typ, desc) in KEYS.items():
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                sp.add_argument(flag, type=_bool_flag, default=None, metavar="BOOL", help=desc)
            else:
                sp.add_argument(flag, type=typ, default=None, help=desc)
    return parser


_TASK_HELP = {
    "minimize": "minimize the quotient over all fields",
    "minimize-radial": "minimize the quotient over radial fields",
    "mass": "minimize the energy at fixed L^2 mass",
    "sweep": "run an epsilon sweep and fit exponents",
    "knapp": "quotient of the Knapp trial field",
    "annulus": "quotient of the annulus trial field",
    "cst-rad": "radial Stein-Tomas constant",
    "lemma": "sqrt(eps) times the integral of 1/g_eps near r = 1",
    "fit": "fit exponents to an existing sweep CSV",
}

DEFAULTS: dict[str, Any] = {
    "N": 2,
    "seed": 0,
    "out": "bihnls-out",
    "delta": 0.5,
    "s": None,
    "dump_field": False,
    "ladder": "default",
    "fit": "r,r_rad",
    "columns": "r,r_rad,knapp_upper,annulus_upper",
}


def resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    cfg: dict[str, Any] = dict(DEFAULTS)
    if args.config:
        file_cfg = load_config(args.config)
        ftask = file_cfg.pop("task", None)
        if ftask is not None and ftask != args.task:
            raise ConfigError(f"{args.config}: task {ftask!r} conflicts with command {args.task!r}")
        cfg.update(file_cfg)
    for key in KEYS:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if cfg.get("jobs") is None:
        env = os.environ.get("BIHNLS_JOBS")
        try:
            cfg["jobs"] = int(env) if env else 1
        except ValueError as exc:
            raise ConfigError(f"BIHNLS_JOBS must be an integer, got {env!r}") from exc
    cfg["task"] = args.task
    _validate(cfg)
    return cfg


def _need(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"task {cfg['task']!r} needs " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _validate(cfg):
    task = cfg["task"]
    if cfg.get("jobs", 1) < 1:
        raise ConfigError("jobs must be >= 1")
    if task in ("minimize", "minimize-radial", "knapp", "annulus"):
        _need(cfg, "p", "epsilon")
        SymbolParams.from_epsilon(cfg["epsilon"])
    elif task == "mass":
        _need(cfg, "p", "m")
    elif task == "sweep":
        _need(cfg, "p")
        cfg["ladder_values"] = parse_ladder(cfg["ladder"])
    elif task == "cst-rad":
        _need(cfg, "p")
    elif task == "lemma":
        _need(cfg, "epsilon")
    elif task == "fit":
        _need(cfg, "csv")
    if task not in ("lemma", "fit", "cst-rad"):
        _options(cfg)


def parse_ladder(text: str) -> list[float]:
    if text.strip() == "default":
        return list(DEFAULT_LADDER)
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad ladder {text!r}") from exc
    if not vals:
        raise ConfigError("empty ladder")
    return vals


def _options(cfg) -> MinimizeOptions:
    kw = {}
    for k in ("max_iterations", "tolerance", "restarts", "step_rule", "step", "precondition", "cap_weight", "seed"):
        if cfg.get(k) is not None:
            kw[k] = cfg[k]
    return MinimizeOptions(**kw)


def _grid(cfg, eps):
    return default_grid(eps, cfg["N"], half_width=cfg.get("L"), points=cfg.get("M"))


# ------------------------------------------------------------ output


def _jsonify(obj) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonify(obj.item())
    return obj


def dumps(obj) -> str:
    """JSON with every float written to 17 significant digits."""

    def enc(o, ind):
        pad = "  " * (ind + 1)
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, float):
            return format(o, ".17g") if math.isfinite(o) else "null"
        if isinstance(o, int):
            return str(o)
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            body = ",\n".join(f"{pad}{json.dumps(k)}: {enc(v, ind + 1)}" for k, v in o.items())
            return "{\n" + body + "\n" + "  " * ind + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            return "[" + ", ".join(enc(v, ind + 1) for v in o) + "]"
        return json.dumps(str(o))

    return enc(_jsonify(obj), 0) + "\n"


def config_hash(cfg: dict) -> str:
    keep = {k: v for k, v in cfg.items() if k not in ("jobs", "ladder_values")}
    return hashlib.sha256(json.dumps(_jsonify(keep), sort_keys=True).encode()).hexdigest()


class _Writer:
    """Collects all file writes of a run."""

    def __init__(self, out: Path, chash: str):
        self.out = out
        self.hash = chash
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, payload: dict):
        payload = {"configHash": self.hash, **payload}
        (self.out / name).write_text(dumps(payload))
        self.files.append(name)

    def text(self, name: str, text: str):
        with open(self.out / name, "w", newline="") as fh:
            fh.write(text)
        self.files.append(name)

    def field(self, name: str, field, creation: dict):
        save_field(field, self.out / name, {**creation, "configHash": self.hash})
        self.files.append(name)

    def manifest(self, cfg: dict, wall: float, status: int):
        digests = {}
        for f in self.files:
            digests[f] = hashlib.sha256((self.out / f).read_bytes()).hexdigest()
        man = {
            "configHash": self.hash,
            "config": {k: v for k, v in cfg.items() if k != "ladder_values"},
            "versions": {
                "bihnls": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "seed": cfg.get("seed"),
            "exitStatus": status,
            "outputs": digests,
            "wallTime": wall,
        }
        (self.out / "manifest.json").write_text(dumps(man))


# ------------------------------------------------------------ tasks


def _run_minimize(cfg, w: _Writer) -> int:
    eps, p = cfg["epsilon"], cfg["p"]
    params = SymbolParams.from_epsilon(eps)
    grid = _grid(cfg, eps)
    opts = _options(cfg)
    fn = minimize_quotient_radial if cfg["task"] == "minimize-radial" else minimize_quotient
    res = fn(params, p, grid, opts)
    d = res.to_dict()
    d.pop("wallTime")
    w.json("result.json", {"task": cfg["task"], **d})
    if cfg.get("dump_field"):
        w.field("minimizer.bfld", res.field, {"epsilon": eps, "p": p, "task": cfg["task"]})
    print(f"quotient {res.quotient:.17g}  residual {res.residual:.3e}  iterations {res.iterations}")
    print(
        f"nonradiality {res.symmetry.nonradiality_index:.6g}  evenness {res.symmetry.evenness_defect:.3e}"
        f"  flags {','.join(res.flags) or '-'}"
    )
    return EXIT_OK if res.converged else EXIT_NUMERICAL


def _run_mass(cfg, w: _Writer) -> int:
    p, m = cfg["p"], cfg["m"]
    guess = cfg.get("epsilon_guess") or 0.01
    grid = _grid(cfg, cfg.get("epsilon") or guess)
    res = minimize_mass_constrained(m, p, grid, _options(cfg), epsilon_guess=guess)
    d = res.to_dict()
    d.pop("wallTime")
    w.json("result.json", {"task": "mass", **d})
    if cfg.get("dump_field"):
        w.field("minimizer.bfld", res.field, {"mass": m, "p": p, "task": "mass"})
    print(f"energy {res.mass.energy:.17g}  eps(m) {res.mass.epsilon:.17g}  residual {res.residual:.3e}")
    return EXIT_OK if res.converged else EXIT_NUMERICAL


def _run_sweep(cfg, w: _Writer) -> int:
    ladder = cfg["ladder_values"]
    N, p = cfg["N"], cfg["p"]
    cols = [c.strip() for c in cfg["columns"].split(",") if c.strip()]
    policy = lambda e, n: default_grid(e, n, half_width=cfg.get("L"), points=cfg.get("M"))
    kw = {"annulus_s": cfg["s"]} if cfg.get("s") is not None else {}
    recs = run_sweep(ladder, p, N, policy, _options(cfg), cols, jobs=cfg["jobs"], **kw)
    w.text("sweep.csv", write_csv(recs))
    status = EXIT_OK
    if any(r.flags for r in recs):
        status = EXIT_PARTIAL
    for col in [c.strip() for c in cfg["fit"].split(",") if c.strip()]:
        try:
            rep = fit_exponent(recs, col)
        except BihnlsError as exc:
            print(f"fit {col}: {exc}", file=sys.stderr)
            status = EXIT_PARTIAL
            continue
        w.json(f"fit_{rep.column}.json", rep.to_dict())
        print(f"fit {rep.column}: slope {rep.slope:.6f}  r2 {rep.r2:.6f}  theory {rep.theory_slope or rep.theory_band}")
    print(f"{len(recs)} rows -> {w.out / 'sweep.csv'}")
    return status


def _run_trial(cfg, w: _Writer) -> int:
    eps, p, N = cfg["epsilon"], cfg["p"], cfg["N"]
    grid = _grid(cfg, eps)
    params = SymbolParams.from_epsilon(eps)
    if cfg["task"] == "knapp":
        f = knapp_field(grid, KnappParams(eps, N))
        extra = {}
    else:
        ap = AnnulusParams(eps, cfg["s"]) if cfg.get("s") is not None else AnnulusParams(eps)
        f = annulus_field(grid, ap)
        extra = {"s": ap.s, "rho": rho_epsilon(eps, ap.s, N)}
    R = rayleigh_quotient(f, params, p)
    w.json(
        f"{cfg['task']}.json",
        {"task": cfg["task"], "epsilon": eps, "p": p, "N": N, "quotient": R, "grid": grid.to_dict(), **extra},
    )
    if cfg.get("dump_field"):
        w.field(f"{cfg['task']}.bfld", f, {"epsilon": eps, "task": cfg["task"]})
    print(f"quotient {R:.17g}  quotient/sqrt(eps) {R / math.sqrt(eps):.17g}")
    return EXIT_OK


def _run_cst(cfg, w: _Writer) -> int:
    res = cst_rad(cfg["p"], cfg["N"])
    w.json("cst_rad.json", {"p": cfg["p"], "N": cfg["N"], **res.to_dict()})
    print(dumps({"value": res.value, "quadError": res.quad_error}), end="")
    return EXIT_OK


def _run_lemma(cfg, w: _Writer) -> int:
    eps = cfg["epsilon"]
    tau = cfg.get("tau")
    if tau not in (None, "constant", "eps^s"):
        try:
            tau = float(tau)
        except ValueError as exc:
            raise ConfigError(f"bad tau {tau!r}") from exc
    s = cfg["s"] if cfg.get("s") is not None else 0.25
    val = lemma_integral(eps, cfg["delta"], tau, s)
    dev = val / (math.pi / 2) - 1
    w.json("lemma.json", {"epsilon": eps, "delta": cfg["delta"], "tau": tau, "s": s, "value": val, "relativeDeviation": dev})
    print(f"value {val:.17g}  relative deviation from pi/2 {dev:.3e}")
    return EXIT_OK


def _run_fit(cfg, w: _Writer) -> int:
    recs = read_csv(cfg["csv"])
    status = EXIT_OK
    for col in [c.strip() for c in cfg["fit"].split(",") if c.strip()]:
        rep = fit_exponent(recs, col)
        w.json(f"fit_{rep.column}.json", rep.to_dict())
        print(f"fit {rep.column}: slope {rep.slope:.6f}  r2 {rep.r2:.6f}")
    return status


_RUNNERS = {
    "minimize": _run_minimize,
    "minimize-radial": _run_minimize,
    "mass": _run_mass,
    "sweep": _run_sweep,
    "knapp": _run_trial,
    "annulus": _run_trial,
    "cst-rad": _run_cst,
    "lemma": _run_lemma,
    "fit": _run_fit,
}


def run(argv: list[str] | None = None) -> int:
    """Parse arguments, run the task and return the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_VALIDATION
    if args.task is None:
        parser.print_help()
        return EXIT_VALIDATION
    t0 = time.perf_counter()
    try:
        cfg = resolve_config(args)
        writer = _Writer(Path(cfg["out"]), config_hash(cfg))
        status = _RUNNERS[args.task](cfg, writer)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BihnlsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL if args.task == "sweep" else EXIT_NUMERICAL
    writer.manifest(cfg, time.perf_counter() - t0, status)
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
