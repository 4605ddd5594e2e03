"""Command-line runner: ``qsh <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 declared contract violated,
4 spectral gap closed.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import dynamics, neass, spectral, transport
from .mesh import BZMesh
from .model import ModelError, _complex_array, builtin_model, check_rotation_symmetry, load_model, rotation_operator

SCHEMA_VERSION = 1
REPORT_KEYS = ("sigma_conv", "sigma_rot", "sigma_prop", "chern", "s_chern", "tau_R", "torque", "extra_terms",
               "persistent_current", "kubo", "mesh", "normalization", "residuals")

EXIT_OK, EXIT_CONFIG, EXIT_CONTRACT, EXIT_GAP = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def to_jsonable(x):
    """Complex numbers become ``[re, im]``; non-finite floats become ``null``."""
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [to_jsonable(float(x.real)), to_jsonable(float(x.imag))]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dumps(obj):
    # json writes floats with repr, which round-trips exactly
    return json.dumps(to_jsonable(obj), indent=2, allow_nan=False) + "\n"


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".qsh-", dir=folder)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def rows_to_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def flatten(obj, prefix=""):
    """``(key, value)`` pairs with dotted keys; complex values split into ``.re``/``.im``."""
    obj = to_jsonable(obj)
    out = []
    if isinstance(obj, dict):
        for k, v in obj.items():
            out += flatten(v, f"{prefix}{k}.")
    elif isinstance(obj, list):
        for n, v in enumerate(obj):
            out += flatten(v, f"{prefix}{n}.")
    else:
        out.append((prefix[:-1], obj))
    return out


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _floats(text, name):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--{name}: {exc}") from None


def _params(items):
    fixed, free = {}, []
    for item in items or []:
        if "=" in item:
            key, val = item.split("=", 1)
            try:
                fixed[key.strip()] = float(val)
            except ValueError:
                raise ConfigError(f"--param {item!r}: value is not a number") from None
        else:
            free.append(item.strip())
    return fixed, free


def _parse_contract(text):
    for op in ("<=", ">="):
        if op in text:
            name, val = text.split(op, 1)
            return name.strip(), op, float(val)
    if "=" in text:
        name, val = text.split("=", 1)
        return name.strip(), "abs<=", float(val)
    raise ConfigError(f"--tol {text!r}: expected name=value, name<=value or name>=value")


def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def resolve_config(args):
    """Merge the optional ``--config`` file with command-line flags into a plain dict."""
    cfg = load_config_file(args.config) if getattr(args, "config", None) else {}
    known = {"model", "builtin", "params", "mesh", "mu", "i", "j", "S", "out", "seed", "tol", "normalization",
             "workers", "eta", "eps", "shift", "values", "sweep_param", "epsilon", "profile", "observable",
             "t_grid", "quantity", "meshes", "sharpness", "eta_value"}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise ConfigError(f"{args.config}: unknown field(s) {unknown}")
    fixed, free = _params(getattr(args, "param", None))
    params = {**cfg.get("params", {}), **fixed}
    out = {
        "subcommand": args.command,
        "model": args.model or cfg.get("model"),
        "builtin": args.builtin or cfg.get("builtin"),
        "params": params,
        "mesh": args.mesh if args.mesh is not None else cfg.get("mesh", 24),
        "mu": args.mu if args.mu is not None else cfg.get("mu"),
        "i": args.i if args.i is not None else cfg.get("i"),
        "j": args.j if args.j is not None else cfg.get("j"),
        "S": args.S or cfg.get("S", "sz"),
        "out": args.out or cfg.get("out", "json"),
        "seed": args.seed if args.seed is not None else cfg.get("seed", 0),
        "normalization": "counting" if args.counting_measure else cfg.get("normalization", "geometric"),
        "workers": args.workers if args.workers is not None else cfg.get("workers"),  # not serialized
        "tol": list(cfg.get("tol", [])) + list(args.tol or []),
    }
    if out["model"] and out["builtin"]:
        raise ConfigError("give either --model or --builtin, not both")
    if not out["model"] and not out["builtin"]:
        raise ConfigError("a model is required: --model FILE or --builtin NAME")
    if out["out"] not in ("json", "csv"):
        raise ConfigError("--out must be json or csv")
    for axis in ("i", "j"):
        if out[axis] is not None and int(out[axis]) < 1:
            raise ConfigError(f"--{axis} must be a positive axis index")
    for name in ("eta", "eps", "shift", "values", "epsilon", "profile", "observable", "t_grid", "quantity",
                 "meshes", "sharpness", "eta_value"):
        if hasattr(args, name):
            val = getattr(args, name)
            out[name] = val if val is not None else cfg.get(name)
    if free:
        out["sweep_param"] = free[0]
    elif "sweep_param" in cfg:
        out["sweep_param"] = cfg["sweep_param"]
    return out


def build_model(cfg):
    try:
        if cfg["model"]:
            model = load_model(cfg["model"])
            if cfg["params"]:
                raise ConfigError("--param applies to builtin models only")
        else:
            params = {k: v for k, v in cfg["params"].items() if k != cfg.get("sweep_param")}
            model = builtin_model(cfg["builtin"], params)
    except ModelError as exc:
        raise ConfigError(str(exc)) from None
    if cfg["mu"] is not None:
        model = model.with_mu(float(cfg["mu"]))
    d = model.dimension
    # unset axes default to (1, 2), or (1, 1) in one dimension
    cfg["i"] = 1 if cfg["i"] is None else cfg["i"]
    cfg["j"] = min(2, d) if cfg["j"] is None else cfg["j"]
    if int(cfg["i"]) > d or int(cfg["j"]) > d:
        raise ConfigError(f"axis index exceeds the model dimension {d}")
    return model


def build_mesh(model, cfg):
    m = cfg["mesh"]
    try:
        sizes = [int(v) for v in str(m).split(",")] if isinstance(m, str) else m
        if np.ndim(sizes) and len(sizes) == 1:
            sizes = sizes[0]
        return BZMesh.for_model(model, sizes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def spin_selector(model, text):
    """``sz``, ``id`` or a JSON file whose ``matrix`` uses the model-file complex format."""
    if text in ("sz", "id"):
        return text
    n = model.orbitals[0].internal_dim
    try:
        return _complex_array(load_config_file(text)["matrix"], (n, n), "matrix")
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"--S {text}: expected sz, id or a JSON file with a {n}x{n} 'matrix' ({exc})") from None


# ---------------------------------------------------------------------------
# Contracts
# ---------------------------------------------------------------------------

def check_contracts(declared, quantities):
    """Evaluate ``--tol`` declarations against a flat dict of named quantities."""
    results = []
    for text in declared:
        name, op, bound = _parse_contract(text)
        if name not in quantities:
            raise ConfigError(f"--tol {name!r}: unknown quantity; available: {sorted(quantities)}")
        val = quantities[name]
        mag = abs(val) if op == "abs<=" else (val.real if isinstance(val, complex) else val)
        ok = mag <= bound if op in ("abs<=", "<=") else mag >= bound
        ok = bool(ok) and math.isfinite(mag)
        results.append({"quantity": name, "op": op, "bound": bound, "value": mag, "ok": ok})
    return results


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(cfg, model, mesh):
    rep = spectral.verify_gap(model, mesh)
    out = {"gap": rep.as_dict(), "fiber_dim": model.fiber_dim, "n_sites": model.n_sites, "name": model.name,
           "measure": {"geometric": model.lattice.cell_volume, "counting": float(model.n_sites)}}
    q = {"min_gap": rep.min_gap, "min_mu_distance": rep.min_mu_distance}
    if model.symmetry is not None:
        sym = model.symmetry
        srep = check_rotation_symmetry(model, sym.n, sym.plane, rotation_operator(model), seed=int(cfg["seed"]))
        out["symmetry"] = {"n": sym.n, "plane": list(sym.plane), "residual": srep.residual,
                           "spin_invariant": srep.spin_invariant, "sites_mapped": srep.sites_mapped,
                           "symmetric": srep.symmetric}
        q["symmetry_residual"] = srep.residual
    return out, q, None


def transport_document(cfg, rep):
    doc = {"schema_version": SCHEMA_VERSION, "config": cfg}
    for key in REPORT_KEYS:
        doc[key] = getattr(rep, key)
    return doc


def cmd_transport(cfg, model, mesh):
    eta = _floats(cfg.get("eta") or "0.1,0.01,0.001", "eta")
    S = spin_selector(model, cfg["S"])
    rep = transport.sigma_prop(model, mesh, int(cfg["i"]), int(cfg["j"]), S, eta_list=eta,
                               workers=cfg["workers"], normalization=cfg["normalization"])
    doc = transport_document(cfg, rep)
    q = {k: getattr(rep, k) for k in ("sigma_conv", "sigma_rot", "sigma_prop", "chern", "s_chern", "tau_R",
                                       "persistent_current")}
    q.update(rep.residuals)
    q.update({f"E{n}": rep.extra_terms[f"E{n}"] for n in range(1, 5)})
    q.update({f"torque_{n}": t for n, t in enumerate(rep.torque)})
    return doc, q, None


def cmd_chern(cfg, model, mesh):
    i, j = int(cfg["i"]), int(cfg["j"])
    fhs = transport.chern_number(model, mesh, method="fhs", i=i, j=j)
    integ = transport.chern_number(model, mesh, method="integral", i=i, j=j)
    out = {"chern": fhs.value, "chern_integral": integ.value, "integral_imag": integ.imag_residual,
           "mesh": mesh.metadata()}
    return out, {"chern": fhs.value, "integral_deviation": abs(integ.value - fhs.value)}, None


def cmd_spin_chern(cfg, model, mesh):
    rep = transport.spin_chern(model, mesh, i=int(cfg["i"]), j=int(cfg["j"]))
    out = {"s_chern": rep.value, "blocks": [{"spin": s, "chern": c} for s, c in zip(rep.spins, rep.blocks)],
           "mesh": mesh.metadata()}
    return out, {"s_chern": rep.value}, None


def cmd_kubo(cfg, model, mesh):
    eta = _floats(cfg.get("eta") or "0.1,0.01,0.001", "eta")
    S = spin_selector(model, cfg["S"])
    f = transport.TransportFibers(model, mesh, None, int(cfg["i"]), int(cfg["j"]), S, workers=cfg["workers"],
                                  normalization=cfg["normalization"])
    conv = transport.sigma_conv(model, mesh, fibers=f).sigma
    vals = transport.kubo_sigma(model, mesh, int(cfg["i"]), int(cfg["j"]), eta, fibers=f)
    rows = [{"eta": e, "sigma": v, "deviation": abs(v - conv)} for e, v in zip(eta, vals)]
    out = {"sigma_conv": conv, "kubo": rows, "mesh": mesh.metadata()}
    table = ("eta", "sigma", "deviation"), [(r["eta"], r["sigma"], r["deviation"]) for r in rows]
    return out, {"final_deviation": rows[-1]["deviation"] if rows else 0.0}, table


def _shift(text, model):
    if not text:
        raise ConfigError("--shift is required, e.g. '0,0;1,0' (one lattice vector per site)")
    try:
        rows = [[int(v) for v in part.split(",")] for part in text.split(";")]
    except ValueError:
        raise ConfigError(f"--shift {text!r}: integers expected") from None
    if len(rows) != model.n_sites or any(len(r) != model.dimension for r in rows):
        raise ConfigError(f"--shift needs {model.n_sites} entries of {model.dimension} integers")
    return rows


def cmd_ucc(cfg, model, mesh):
    shift = _shift(cfg.get("shift"), model)
    S = spin_selector(model, cfg["S"])
    rep = transport.ucc_check(model, mesh, shift, int(cfg["i"]), int(cfg["j"]), S)
    out = {"shift": shift, "delta_conv": rep.delta_conv, "delta_rot": rep.delta_rot,
           "predicted_delta_rot": rep.predicted_delta_rot, "base": list(rep.base), "shifted": list(rep.shifted),
           "mesh": mesh.metadata()}
    q = {"delta_conv": rep.delta_conv, "delta_rot": rep.delta_rot,
         "delta_rot_vs_predicted": abs(rep.delta_rot - rep.predicted_delta_rot)}
    return out, q, None


def cmd_sweep(cfg, model, mesh):
    name = cfg.get("sweep_param")
    if not name:
        raise ConfigError("sweep needs --param NAME (without '=') naming the swept parameter")
    if not cfg.get("builtin"):
        raise ConfigError("sweep works on builtin models")
    values = _floats(cfg.get("values") or "", "values")
    if not values:
        raise ConfigError("sweep needs --values v1,v2,...")
    base = {k: v for k, v in cfg["params"].items()}
    S = spin_selector(model, cfg["S"])

    def family(lam):
        m = builtin_model(cfg["builtin"], {**base, name: lam})
        return m if cfg["mu"] is None else m.with_mu(float(cfg["mu"]))

    try:
        table = transport.robustness_sweep(family, mesh, values, int(cfg["i"]), int(cfg["j"]), S)
    except ModelError as exc:
        raise ConfigError(str(exc)) from None
    out = {"param": name, "rows": table.rows, "slope": table.slope, "intercept": table.intercept,
           "bound_constant": table.bound_constant, "diagnostic": table.diagnostic, "mesh": mesh.metadata()}
    rows = [(r["lambda"], r["sigma_prop"], r["s_chern"], r["deviation"]) for r in table.rows]
    q = {"intercept": table.intercept, "bound_constant": table.bound_constant,
         "max_deviation": max((r["deviation"] for r in table.rows), default=0.0)}
    return out, q, ((name, "sigma_prop", "s_chern", "deviation"), rows)


def cmd_neass_check(cfg, model, mesh):
    eps = _floats(cfg.get("eps") or "0.1,0.03,0.01", "eps")
    j = int(cfg["j"])
    sb = spectral.spectral_batch(model, mesh.kpts, workers=cfg["workers"])
    pi1, _ = neass.pi1_and_generator(sb.energies, sb.vectors, sb.n_occ, sb.dP[:, j - 1])
    syl = float(np.abs(sb.H @ pi1 - pi1 @ sb.H - 1j * sb.dP[:, j - 1]).max())
    rep = neass.neass_residual_sweep(model, mesh, j=j, eps_list=eps)
    out = {"sylvester_residual": syl, "residual_sweep": rep.as_dict(), "mesh": mesh.metadata()}
    return out, {"sylvester": syl, "slope": rep.slope}, None


def cmd_dynamics(cfg, model, mesh):
    eps = float(cfg.get("epsilon") or 0.05)
    eta = cfg.get("eta_value")
    eta = float(eta) if eta is not None else math.sqrt(eps)
    kind = cfg.get("profile") or "smooth_bump"
    obs = cfg.get("observable") or "charge_current"
    try:
        prof = dynamics.switching_profile(kind, eta, float(cfg.get("sharpness") or 1.0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    grid = _floats(cfg.get("t_grid") or "0", "t-grid")
    if grid and grid[0] < prof.t0:
        raise ConfigError(f"--t-grid must start at or after the switch-on time {prof.t0!r}")
    S = spin_selector(model, cfg["S"])
    try:
        res = dynamics.evolve(model, mesh, eps, prof, (obs,), grid, int(cfg["i"]), int(cfg["j"]), S,
                              workers=cfg["workers"])
    except ValueError as exc:
        if isinstance(exc, spectral.GapError):
            raise
        raise ConfigError(str(exc)) from None
    out = {"epsilon": eps, "eta": eta, "profile": kind, "observable": obs, "t0": prof.t0,
           "times": res.times, "values": res.values[obs], "neass_distance": res.neass_distance,
           "projector_defect": res.projector_defect, "final_deviation": res.final_deviation.get(obs),
           "n_steps": res.n_steps, "mesh": mesh.metadata()}
    q = {"projector_defect": res.projector_defect}
    if obs in res.final_deviation:
        q["final_deviation"] = res.final_deviation[obs]
    table = ("t", "value"), list(zip(res.times.tolist(), res.values[obs].tolist()))
    return out, q, table


CONVERGENCE_QUANTITIES = ("sigma_conv", "sigma_rot", "sigma_prop", "chern_integral", "sum_torque")


def convergence_values(model, n, quantity, cfg):
    mesh = BZMesh.for_model(model, n)
    if quantity == "chern_integral":
        return transport.chern_number(model, mesh, method="integral", i=int(cfg["i"]), j=int(cfg["j"])).value
    S = spin_selector(model, cfg["S"])
    rep = transport.sigma_prop(model, mesh, int(cfg["i"]), int(cfg["j"]), S, eta_list=(), with_topology=False,
                               workers=cfg["workers"], normalization=cfg["normalization"])
    if quantity == "sum_torque":
        return rep.residuals["sum_torque"]
    return getattr(rep, quantity)


def emit_convergence_table(model, quantity, mesh_list, cfg=None):
    """CSV text with one row per mesh size and the difference to the finest mesh."""
    cfg = cfg or {"i": 1, "j": 2, "S": "sz", "workers": None, "normalization": "geometric"}
    if quantity not in CONVERGENCE_QUANTITIES:
        raise ConfigError(f"unknown quantity {quantity!r}; choose from {CONVERGENCE_QUANTITIES}")
    vals = [float(np.real(convergence_values(model, int(n), quantity, cfg))) for n in mesh_list]
    ref = vals[int(np.argmax(mesh_list))]
    rows = [(int(n), v, abs(v - ref)) for n, v in zip(mesh_list, vals)]
    return rows_to_csv(("mesh", quantity, "diff_to_finest"), rows), rows


def cmd_convergence(cfg, model, mesh):
    meshes = [int(v) for v in _floats(cfg.get("meshes") or "12,24,48", "meshes")]
    quantity = cfg.get("quantity") or "sigma_prop"
    _, rows = emit_convergence_table(model, quantity, meshes, cfg)
    out = {"quantity": quantity, "rows": [{"mesh": n, "value": v, "diff_to_finest": d} for n, v, d in rows]}
    return out, {}, (("mesh", quantity, "diff_to_finest"), rows)


COMMANDS = {
    "validate": cmd_validate, "transport": cmd_transport, "chern": cmd_chern, "spin-chern": cmd_spin_chern,
    "kubo": cmd_kubo, "ucc": cmd_ucc, "sweep": cmd_sweep, "neass-check": cmd_neass_check,
    "dynamics": cmd_dynamics, "convergence": cmd_convergence,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="JSON file with run options (flags override it)")
    p.add_argument("--model", help="model JSON file")
    p.add_argument("--builtin", help="builtin model name")
    p.add_argument("--param", action="append", help="builtin parameter NAME=VALUE (repeatable)")
    p.add_argument("--mesh", help="mesh points per axis, or comma-separated sizes")
    p.add_argument("--mu", type=float, help="Fermi level (defaults to the model's)")
    p.add_argument("--i", type=int, help="response axis (1-based)")
    p.add_argument("--j", type=int, help="field axis (1-based)")
    p.add_argument("--S", help="spin selector: sz, id or a JSON file with a 'matrix' field")
    p.add_argument("--out", choices=("json", "csv"), help="output format")
    p.add_argument("--output", help="write the report here (atomically) instead of stdout")
    p.add_argument("--seed", type=int, help="seed for randomized checks")
    p.add_argument("--tol", action="append",
                   help="contract NAME=BOUND (|value| <= bound), NAME<=BOUND or NAME>=BOUND (repeatable)")
    p.add_argument("--counting-measure", action="store_true", help="normalize by sites per cell")
    p.add_argument("--workers", type=int, help="worker threads (capped by QSH_THREADS)")


def build_parser():
    parser = argparse.ArgumentParser(prog="qsh", description="Spin and charge conductivity of gapped lattice models")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        _common(p)
        if name in ("transport", "kubo"):
            p.add_argument("--eta", help="comma-separated Kubo regularizations")
        if name == "ucc":
            p.add_argument("--shift", help="per-site lattice shifts, e.g. '0,0;1,0'")
        if name == "sweep":
            p.add_argument("--values", help="comma-separated parameter values")
        if name == "neass-check":
            p.add_argument("--eps", help="comma-separated field strengths")
        if name == "dynamics":
            p.add_argument("--epsilon", type=float)
            p.add_argument("--eta", dest="eta_value", type=float, help="switching rate (default sqrt(epsilon))")
            p.add_argument("--profile", choices=("smooth_bump", "exponential"))
            p.add_argument("--sharpness", type=float)
            p.add_argument("--observable", choices=("charge_current", "spin_current", "spin_torque"))
            p.add_argument("--t-grid", dest="t_grid", help="comma-separated output times")
        if name == "convergence":
            p.add_argument("--quantity", choices=CONVERGENCE_QUANTITIES)
            p.add_argument("--meshes", help="comma-separated mesh sizes")
    return parser


def render(cfg, doc, table):
    if cfg["out"] == "csv":
        if table is not None:
            return rows_to_csv(*table)
        return rows_to_csv(("key", "value"), flatten({k: v for k, v in doc.items() if k != "config"}))
    return dumps(doc)


def run(argv=None, stdout=None, stderr=None):
    """Parse ``argv``, run the subcommand and return the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = resolve_config(args)
        model = build_model(cfg)
        mesh = build_mesh(model, cfg)
        cfg["mesh"] = list(mesh.sizes)
        result, quantities, table = COMMANDS[args.command](cfg, model, mesh)
        contracts = check_contracts(cfg["tol"], quantities)
    except ConfigError as exc:
        print(f"qsh: configuration error: {exc}", file=stderr)
        return EXIT_CONFIG
    except spectral.GapError as exc:
        print(f"qsh: gap violation: {exc}", file=stderr)
        return EXIT_GAP

    if args.command == "transport":
        doc = result
    else:
        doc = {"schema_version": SCHEMA_VERSION, "config": cfg, **result}
    # the worker count does not change any number, so reports stay byte-identical across it
    doc["config"] = {k: v for k, v in cfg.items() if k != "workers"}
    doc["contracts"] = contracts
    text = render(cfg, doc, table)
    if args.output:
        atomic_write(args.output, text)
        if args.command == "dynamics" and cfg["out"] == "csv":
            atomic_write(args.output + ".json", dumps(doc))
    else:
        stdout.write(text)
    failed = [c for c in contracts if not c["ok"]]
    for c in failed:
        print(f"qsh: contract violated: {c['quantity']} = {c['value']!r} ({c['op']} {c['bound']!r})", file=stderr)
    return EXIT_CONTRACT if failed else EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
