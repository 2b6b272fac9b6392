"""Command-line front end: named experiments writing CSV or JSON artifacts."""

from __future__ import annotations

import argparse
import json
import math
import sys as _sys
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Any, Sequence

import jsonschema
import numpy as np

from .dynamics import FlowOptions, fmt, trajectory
from .errors import DynkitError, SchemaViolation
from .systems import SystemDef, build_builtin
from .util import atomic_write

COMMANDS = ("simulate", "equilibria", "lyapunov", "bifurcate", "diagram", "cascade", "poincare",
            "floquet", "hill-chart", "manifold", "normalform", "dimension", "symbolic", "attractor")

DEFAULT_FORMAT = {"simulate": "csv", "diagram": "csv", "cascade": "csv", "poincare": "csv",
                  "hill-chart": "csv", "attractor": "csv"}


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    command: str
    system: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0

    def to_json(self) -> dict:
        return {"command": self.command, "system": self.system, "options": self.options,
                "output": self.output, "seed": self.seed}


def _schema() -> dict:
    text = resources.files("dynkit").joinpath("schemas/config.schema.json").read_text()
    return json.loads(text)


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def schema_errors(doc: Any) -> list[dict]:
    """Schema violations as {path, message}, sorted for stable output."""
    v = jsonschema.Draft202012Validator(_schema())
    errs = [{"path": _pointer(e.absolute_path), "message": e.message} for e in v.iter_errors(doc)]
    return sorted(errs, key=lambda e: (e["path"], e["message"]))


def validate_config(text: str | dict) -> RunConfig:
    """Parse and schema-check a config; fill defaults."""
    if isinstance(text, str):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise SchemaViolation(f"invalid JSON: {e.msg}", errors=[{"path": "/", "message": e.msg}])
    else:
        doc = text
    errs = schema_errors(doc)
    if errs:
        first = errs[0]
        raise SchemaViolation(f"{first['path']}: {first['message']}", errors=errs)
    cmd = doc["command"]
    out = {"path": "-", "format": DEFAULT_FORMAT.get(cmd, "json")}
    out.update(doc.get("output", {}))
    system = dict(doc.get("system", {}))
    if system:
        system.setdefault("params", {})
    return RunConfig(cmd, system, dict(doc.get("options", {})), out, int(doc.get("seed", 0)))


# ---------------------------------------------------------------------------
# serialization


def _num(v) -> str:
    v = float(v)
    if math.isnan(v):
        return '"nan"'
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    return fmt(v)


def dump_json(obj) -> str:
    """Deterministic JSON: sorted keys, 17-significant-digit floats."""

    def enc(o) -> str:
        if isinstance(o, dict):
            return "{" + ",".join(json.dumps(str(k)) + ":" + enc(v) for k, v in sorted(o.items())) + "}"
        if isinstance(o, (list, tuple)):
            return "[" + ",".join(enc(v) for v in o) + "]"
        if isinstance(o, np.ndarray):
            return enc(o.tolist())
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if o is None:
            return "null"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return _num(o)
        if isinstance(o, complex):
            return enc({"re": o.real, "im": o.imag})
        if isinstance(o, Fraction):
            return json.dumps(str(o))
        return json.dumps(str(o))

    return enc(obj) + "\n"


def _csv(header: Sequence[str], rows) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(v if isinstance(v, str) else str(v) if isinstance(v, (int, np.integer))
                              else fmt(v) for v in r))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# helpers


def _param_value(v):
    if isinstance(v, str):
        return Fraction(v)
    return v


def _eig_value(v):
    # rationals stay exact; strings such as "2j" or "1-3j" give complex values
    if isinstance(v, str):
        try:
            return Fraction(v)
        except ValueError:
            return complex(v)
    return v


def _system(cfg: RunConfig, default: str | None = None) -> SystemDef:
    name = cfg.system.get("name") or default
    if name is None:
        raise SchemaViolation("/system/name: a system is required for this command",
                              errors=[{"path": "/system/name", "message": "required"}])
    params = {k: _param_value(v) for k, v in cfg.system.get("params", {}).items()}
    return build_builtin(name, params)


def _flow_opts(o: dict, default: FlowOptions | None = None) -> FlowOptions:
    base = default or FlowOptions()
    return FlowOptions(method=o.get("method", base.method), dt=o.get("dt", base.dt),
                       abs_tol=o.get("abs_tol", base.abs_tol), rel_tol=o.get("rel_tol", base.rel_tol))


def _x0(sys: SystemDef, o: dict, default=None) -> np.ndarray:
    x0 = o.get("x0", default)
    if x0 is None:
        x0 = [0.1] * sys.dim
    return np.asarray(x0, dtype=float)


def _first_param(sys: SystemDef, o: dict) -> str:
    if "param" in o:
        return o["param"]
    if not sys.params:
        raise SchemaViolation("/options/param: system has no parameters",
                              errors=[{"path": "/options/param", "message": "required"}])
    return next(iter(sys.params))


# ---------------------------------------------------------------------------
# commands; each returns (format -> text) producers


def cmd_simulate(cfg: RunConfig):
    s = _system(cfg)
    o = cfg.options
    x0 = _x0(s, o)
    if s.kind == "map":
        tr = trajectory(s, x0, n_iter=int(o.get("n_iter", 100)), sample_every=int(o.get("sample_every", 1)))
    else:
        tr = trajectory(s, x0, t_end=float(o.get("t_end", 10.0)), sample_every=float(o.get("sample_every", 0.1)),
                        opts=_flow_opts(o))
    return {"csv": tr.to_csv,
            "json": lambda: dump_json({"times": tr.times, "states": tr.states, "kind": tr.kind})}


def cmd_equilibria(cfg: RunConfig):
    from .equilibria import find_equilibria
    s = _system(cfg)
    o = cfg.options
    seeds = o.get("seeds")
    if seeds is None:
        g = np.linspace(-10.0, 10.0, 5)
        seeds = [list(p) for p in np.array(np.meshgrid(*([g] * s.dim))).reshape(s.dim, -1).T]
    reps = find_equilibria(s, seeds, seed=cfg.seed)
    return {"json": lambda: dump_json({"system": s.name, "equilibria": [r.to_json() for r in reps]})}


def cmd_lyapunov(cfg: RunConfig):
    from .chaos.lyapunov import SPECTRUM_OPTS, lyapunov_spectrum
    s = _system(cfg)
    o = cfg.options
    x0 = _x0(s, o)
    if s.kind == "map":
        res = lyapunov_spectrum(s, x0, N=int(o.get("N", 10000)), renorm_interval=o.get("renorm_interval"),
                                transient=int(o.get("transient", 0)))
    else:
        res = lyapunov_spectrum(s, x0, T=float(o.get("T", 200.0)), renorm_interval=o.get("renorm_interval"),
                                opts=_flow_opts(o, SPECTRUM_OPTS), transient=float(o.get("transient", 0)))
    return {"json": lambda: dump_json(res.to_json())}


def cmd_bifurcate(cfg: RunConfig):
    from .bifurcation import continue_branch, detect_bifurcations
    s = _system(cfg)
    o = cfg.options
    param = _first_param(s, o)
    lam0 = float(o.get("lam_start", s.params[param]))
    lam1 = float(o.get("lam_end", lam0 + 1.0))
    branches = continue_branch(s, param, _x0(s, o), lam0, lam1, step=float(o.get("step", 0.05)))
    events = [e for b in branches for e in detect_bifurcations(b)]
    doc = {
        "param": param,
        "branches": [{"points": [{"lambda": p.lam, "x": p.x, "stability": p.stability,
                                  "eigenvalues": list(p.eigenvalues)} for p in b.points]}
                     for b in branches],
        "events": [e.to_json() for e in events],
    }

    def csv():
        rows = [[bi, p.lam, *p.x, p.stability] for bi, b in enumerate(branches) for p in b.points]
        return _csv(["branch", "lambda"] + [f"x{i + 1}" for i in range(s.dim)] + ["stability"], rows)

    return {"json": lambda: dump_json(doc), "csv": csv}


def cmd_diagram(cfg: RunConfig):
    from .bifurcation import bifurcation_diagram, diagram_csv
    s = _system(cfg, "logistic")
    o = cfg.options
    param = _first_param(s, o)
    a, b = o.get("range", [2.5, 4.0])
    grid = np.linspace(float(a), float(b), int(o.get("samples", 1500)))
    x0 = o.get("x0", [0.5])
    rows = bifurcation_diagram(s, param, grid, transient=int(o.get("transient", 1000)),
                               keep=int(o.get("keep", 100)), x0=float(x0[0]))
    return {"csv": lambda: diagram_csv(rows),
            "json": lambda: dump_json({"param": param, "rows": rows})}


def cmd_cascade(cfg: RunConfig):
    from .periodic import period_doubling_cascade
    s = _system(cfg, "logistic")
    o = cfg.options
    param = _first_param(s, o)
    # the period-1 superstable parameter must lie inside the range
    a, b = o.get("range", [1.5, 4.0])
    res = period_doubling_cascade(s, param, (float(a), float(b)), n_max=int(o.get("max_n", 6)))
    return {"csv": res.to_csv,
            "json": lambda: dump_json({"lambdas": res.lambdas, "deltas": res.deltas,
                                       "accumulation_estimate": res.accumulation_estimate,
                                       "superstable": res.superstable})}


def cmd_poincare(cfg: RunConfig):
    from .periodic import SectionDef, poincare_map
    s = _system(cfg, "duffing_forced")
    o = cfg.options
    if "normal" in o:
        normal = np.asarray(o["normal"], dtype=float)
    elif s.name == "duffing_forced":
        normal = np.array([0.0, 0.0, 1.0])
    else:
        normal = np.eye(s.dim)[0]
    anchor = np.asarray(o.get("anchor", [0.0] * s.dim), dtype=float)
    sec = SectionDef(anchor, normal)
    x = _x0(s, o)
    opts = _flow_opts(o, FlowOptions(abs_tol=1e-10, rel_tol=1e-10))
    rows = []
    t = 0.0
    for k in range(int(o.get("n_returns", 100))):
        x, tau = poincare_map(s, sec, x, opts)
        t += tau
        rows.append([k + 1, t, *x])
    header = ["k", "t"] + [f"x{i + 1}" for i in range(s.dim)]
    return {"csv": lambda: _csv(header, rows), "json": lambda: dump_json({"returns": rows})}


def cmd_floquet(cfg: RunConfig):
    from .periodic import find_periodic_orbit, hill_monodromy, monodromy
    s = _system(cfg, "van_der_pol")
    o = cfg.options
    if s.name == "hill":
        T, Om = s.params["T"], s.params["Omega"]
        closed = hill_monodromy(T, Om)
        num = monodromy(s, np.array([0.0, 0.0]), T)
        doc = {"closed_form": closed.to_json(), "numeric": num.to_json(),
               "max_entry_diff": float(np.max(np.abs(closed.U_T - num.U_T)))}
        return {"json": lambda: dump_json(doc)}
    orbit = find_periodic_orbit(s, _x0(s, o, [2.0, 0.0]), float(o.get("T_guess", 6.6)))
    res = monodromy(s, orbit.x0, orbit.T)
    doc = {"orbit": {"x0": orbit.x0, "T": orbit.T, "residual": orbit.residual}, "monodromy": res.to_json()}
    return {"json": lambda: dump_json(doc)}


def cmd_hill_chart(cfg: RunConfig):
    from .periodic import hill_chart, hill_chart_csv
    o = cfg.options
    a, b = o.get("range", [0.1, 4.0])
    rows = hill_chart(float(o.get("T", math.pi)), np.linspace(float(a), float(b), int(o.get("samples", 79))))
    return {"csv": lambda: hill_chart_csv(rows), "json": lambda: dump_json({"rows": rows})}


def cmd_manifold(cfg: RunConfig):
    from .manifolds import local_manifold_taylor, reduced_dynamics
    s = _system(cfg)
    o = cfg.options
    eq = _x0(s, o, [0.0] * s.dim)
    which = o.get("which", "center")
    order = int(o.get("order", 3))
    hm = local_manifold_taylor(s, eq, which, order)
    doc = {"which": which, "order": order, "graph": hm.to_json()}
    if which == "center":
        doc["reduced"] = reduced_dynamics(s, eq, hm, order).to_json()
    return {"json": lambda: dump_json(doc)}


def cmd_normalform(cfg: RunConfig):
    from .normalform import normal_form_step, resonances, standard_map_conjugacy_o1
    o = cfg.options
    mode = o.get("mode", "resonances" if "eigs" in o else "step")
    if mode == "resonances":
        eigs = [_eig_value(e) for e in o.get("eigs", [1, 2])]
        ks = [int(o["k"])] if "k" in o else [2, 3, 4]
        doc = {"eigs": [str(e) for e in eigs], "reports": [resonances(eigs, k).to_json() for k in ks]}
    elif mode == "conjugacy":
        w = float(o.get("omega", 1.0))
        c = standard_map_conjugacy_o1(w)
        phi = np.linspace(0, 2 * math.pi, 64, endpoint=False)
        doc = {"omega": w, "a": {str(k): v for k, v in c.a.items()}, "b": {str(k): v for k, v in c.b.items()},
               "residual": c.residual(phi)}
    elif mode == "step":
        from .manifolds import taylor_polys
        from .poly import TaylorMapPoly
        s = _system(cfg)
        eq = _x0(s, o, [0.0] * s.dim)
        k = int(o.get("k", 2))
        polys, _ = taylor_polys(s, eq, k)
        step = normal_form_step(TaylorMapPoly(s.dim, tuple(polys)), k)
        doc = {"k": k, "resonant": step.resonant.to_json(), "h": step.h.to_json(), "field": step.field.to_json()}
    else:
        raise SchemaViolation(f"/options/mode: {mode!r} is not a normalform mode",
                              errors=[{"path": "/options/mode", "message": "bad mode"}])
    return {"json": lambda: dump_json(doc)}


def _read_points(path: str) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def cmd_dimension(cfg: RunConfig):
    from .chaos.dimension import box_dimension, cantor_endpoints
    from .chaos.experiments import henon_attractor_experiment
    o = cfg.options
    src = o.get("source", "file" if "points" in o else "cantor")
    if src == "cantor":
        pts = cantor_endpoints(int(o.get("depth", 10)))
        eps = o.get("eps", [3.0 ** -k for k in range(2, 8)])
    elif src == "henon":
        pts = henon_attractor_experiment(N=int(o.get("N", 100000))).points
        eps = o.get("eps", [2.0 ** -k for k in range(3, 9)])
    else:
        pts = _read_points(o["points"])
        eps = o["eps"]
    d = box_dimension(pts, eps)
    doc = {"eps_ladder": d.eps_ladder, "counts": d.counts, "mean_counts": d.mean_counts,
           "slope": d.slope, "r2": d.r2, "source": src}
    return {"json": lambda: dump_json(doc)}


def _signs(text: str) -> tuple[int, ...]:
    out = []
    for ch in text:
        if ch not in "+-":
            from .errors import InvalidWord
            raise InvalidWord(f"symbol {ch!r} not in {{+,-}}", word=text)
        out.append(1 if ch == "+" else -1)
    return tuple(out)


def cmd_symbolic(cfg: RunConfig):
    from .chaos import symbolic as sy
    o = cfg.options
    mode = o.get("mode", "itinerary")
    if mode == "itinerary":
        x = sy._as_fraction(o.get("x", "1/3"))
        seq = sy.tent_itinerary(x, int(o.get("n", 20)))
        doc = {"x": str(x), "itinerary": str(seq), "symbols": seq.symbols}
    elif mode == "point":
        word = o.get("word", "+-")
        seq = sy.SymbolSequence(_signs(word), periodic=bool(o.get("periodic", True)))
        pt = sy.itinerary_to_point(seq)
        doc = {"word": word, "periodic": seq.periodic,
               "point": str(pt) if seq.periodic else [str(pt[0]), str(pt[1])]}
    elif mode == "periodic":
        p = int(o.get("p", 3))
        doc = {"p": p, "orbits": [{"word": str(s), "x": str(x)} for s, x in sy.enumerate_periodic_tent(p)]}
    elif mode == "cantor":
        x = sy._as_fraction(o.get("x", "1/4"))
        m = sy.cantor_membership(x, int(o.get("depth", 20)))
        doc = {"x": str(x), "verdict": m.verdict, "digits": m.digits, "preperiod": m.preperiod,
               "period": m.period, "boundary_resolved": m.boundary_resolved}
    elif mode == "horseshoe":
        word = o.get("word", "+,-")
        lam, mu = o.get("lam", "1/3"), o.get("mu", "3")
        r = sy.horseshoe_geometry(word, sy._as_fraction(lam), sy._as_fraction(mu))
        doc = {"word": word, "lam": str(lam), "mu": str(mu), "rectangle": r.to_json()}
    else:
        raise SchemaViolation(f"/options/mode: {mode!r} is not a symbolic mode",
                              errors=[{"path": "/options/mode", "message": "bad mode"}])
    return {"json": lambda: dump_json(doc)}


def cmd_attractor(cfg: RunConfig):
    from .chaos.dimension import cloud_csv
    from .chaos.experiments import henon_attractor_experiment
    o = cfg.options
    name = cfg.system.get("name", "lorenz")
    if name == "henon":
        p = {k: float(_param_value(v)) for k, v in cfg.system.get("params", {}).items()}
        e = henon_attractor_experiment(p.get("lam", 1.4), p.get("b", 0.3), N=int(o.get("N", 10000)),
                                       transient=int(o.get("transient", 1000)), x0=o.get("x0", [0.0, 0.0]))
        doc = {"spectrum": {"exponents": e.spectrum.exponents, "sum": e.spectrum.sum},
               "log_b": e.log_b, "bbox": e.bbox, "n_points": len(e.points)}
        return {"csv": lambda: cloud_csv(e.points), "json": lambda: dump_json(doc)}
    s = _system(cfg, "lorenz")
    x0 = _x0(s, o, [1.0, 1.0, 1.0])
    tr = trajectory(s, x0, t_end=float(o.get("t_end", 50.0)), sample_every=float(o.get("sample_every", 0.01)),
                    opts=_flow_opts(o))
    return {"csv": tr.to_csv,
            "json": lambda: dump_json({"times": tr.times, "states": tr.states})}


HANDLERS = {
    "simulate": cmd_simulate, "equilibria": cmd_equilibria, "lyapunov": cmd_lyapunov,
    "bifurcate": cmd_bifurcate, "diagram": cmd_diagram, "cascade": cmd_cascade,
    "poincare": cmd_poincare, "floquet": cmd_floquet, "hill-chart": cmd_hill_chart,
    "manifold": cmd_manifold, "normalform": cmd_normalform, "dimension": cmd_dimension,
    "symbolic": cmd_symbolic, "attractor": cmd_attractor,
}


# ---------------------------------------------------------------------------
# argument parsing


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _range(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("range must look like a:b")
    return [float(parts[0]), float(parts[1])]


def _seeds(text: str) -> list[list[float]]:
    return [_floats(s) for s in text.split(";") if s.strip()]


def _scalar(text: str):
    try:
        return int(text)
    except ValueError:
        try:
            return float(text)
        except ValueError:
            return text


# (flag, option key, type)
OPTION_FLAGS = [
    ("--x0", "x0", _floats), ("--t-end", "t_end", float), ("--n-iter", "n_iter", int),
    ("--sample-every", "sample_every", float), ("--method", "method", str), ("--dt", "dt", float),
    ("--abs-tol", "abs_tol", float), ("--rel-tol", "rel_tol", float), ("--seeds", "seeds", _seeds),
    ("--T", "T", float), ("--N", "N", int), ("--renorm-interval", "renorm_interval", float),
    ("--transient", "transient", int), ("--param", "param", str), ("--lam-start", "lam_start", float),
    ("--lam-end", "lam_end", float), ("--step", "step", float), ("--range", "range", _range),
    ("--samples", "samples", int), ("--keep", "keep", int), ("--max-n", "max_n", int),
    ("--anchor", "anchor", _floats), ("--normal", "normal", _floats), ("--n-returns", "n_returns", int),
    ("--T-guess", "T_guess", float), ("--which", "which", str), ("--order", "order", int),
    ("--mode", "mode", str), ("--eigs", "eigs", lambda t: [_scalar(v) for v in t.split(",")]),
    ("--k", "k", int), ("--omega", "omega", float), ("--source", "source", str),
    ("--points", "points", str), ("--eps", "eps", _floats), ("--depth", "depth", int),
    ("--x", "x", str), ("--n", "n", int), ("--p", "p", int), ("--word", "word", str),
    ("--lam", "lam", str), ("--mu", "mu", str),
]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dynkit", description="Dynamical-systems experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp_ = sub.add_parser(name)
        sp_.add_argument("--config", help="JSON run configuration; flags override it")
        sp_.add_argument("--system", help="builtin system name")
        sp_.add_argument("--set", dest="params", action="append", metavar="NAME=VALUE",
                         help="parameter override (repeatable)")
        sp_.add_argument("--out", help="output path, '-' for stdout")
        sp_.add_argument("--format", choices=("csv", "json"))
        sp_.add_argument("--seed", type=int)
        for flag, key, typ in OPTION_FLAGS:
            sp_.add_argument(flag, dest=f"opt_{key}", type=typ, default=None)
    return ap


def _merge(args: argparse.Namespace) -> dict:
    doc: dict = {"command": args.command}
    if args.config:
        with open(args.config) as fh:
            try:
                loaded = json.load(fh)
            except json.JSONDecodeError as e:
                raise SchemaViolation(f"invalid JSON in config: {e.msg}",
                                      errors=[{"path": "/", "message": e.msg}])
        if isinstance(loaded, dict):
            doc.update(loaded)
            doc["command"] = args.command
        else:
            doc = loaded
    if not isinstance(doc, dict):
        return doc
    if args.system:
        sysd = dict(doc.get("system", {}))
        if sysd.get("name") != args.system:
            sysd = {"name": args.system, "params": {}}
        doc["system"] = sysd
    if args.params:
        sysd = dict(doc.get("system", {"name": None}))
        params = dict(sysd.get("params", {}))
        for item in args.params:
            if "=" not in item:
                raise SchemaViolation(f"--set expects NAME=VALUE, got {item!r}",
                                      errors=[{"path": "/system/params", "message": "bad --set"}])
            k, v = item.split("=", 1)
            params[k] = _scalar(v)
        sysd["params"] = params
        if sysd.get("name") is None:
            sysd.pop("name")
        doc["system"] = sysd
    opts = dict(doc.get("options", {}))
    for _, key, _ in OPTION_FLAGS:
        v = getattr(args, f"opt_{key}")
        if v is not None:
            opts[key] = v
    if opts:
        doc["options"] = opts
    out = dict(doc.get("output", {}))
    if args.out is not None:
        out["path"] = args.out
    if args.format is not None:
        out["format"] = args.format
    if out:
        doc["output"] = out
    if args.seed is not None:
        doc["seed"] = args.seed
    return doc


def _fail(err: dict, code: int) -> int:
    _sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = validate_config(_merge(args))
        producers = HANDLERS[cfg.command](cfg)
        fmt_ = cfg.output["format"]
        if fmt_ not in producers:
            raise SchemaViolation(f"/output/format: {cfg.command} does not write {fmt_}",
                                  errors=[{"path": "/output/format", "message": "unsupported format"}])
        text = producers[fmt_]()
        path = cfg.output["path"]
        if path == "-":
            _sys.stdout.write(text)
        else:
            atomic_write(path, text)
    except DynkitError as e:
        return _fail(e.to_dict(), 2 if e.usage else 3)
    except (ValueError, KeyError, TypeError, OSError) as e:
        return _fail({"error": "UsageError", "message": str(e)}, 2)
    return 0


run = main

if __name__ == "__main__":
    raise SystemExit(main())
