"""``subtk`` command line: index | exponents | eigen | clr | solve | morse.

Every run writes ``<task>.json`` (the deterministic payload) and
``<task>.report.json`` (timestamps, input hash, status) into ``--out``.
Exit codes: 0 success, 2 invalid config, 3 numerical failure, 4 partial result.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .discrete_operator import GridSpec, assemble_laplacian, mask_from_expression, sample_expression
from .errors import ConvergenceError, HormanderError, SubtkError
from .exponents import ProblemParams, exponent_report, sup_p_A1, sup_p_A2
from .field_algebra import generalized_metivier_index, parse_fields
from .io import (read_vector, sha256_of, write_csv, write_json, write_matrix_market,
                 write_vector)
from .spectral import (Spectrum, clr_count, clr_scaling_fit, smallest_eigenpairs,
                       verify_poincare, weyl_fit)
from .variational import (NonlinearitySpec, SearchOptions, annotate, fit_A0, growth_constants,
                          hessian_Ip, morse_indices, multi_solution_search)

log = logging.getLogger("subtk")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4
TASKS = ("index", "exponents", "eigen", "clr", "solve", "morse")

DEFAULTS = {
    "seed": 0,
    "domain": {"mask": None, "resolution": 64, "scheme": "forward"},
    "index": {"samples_per_axis": 41, "extra_points": [], "rank_tol": 1e-9, "max_len_cap": 6},
    "nonlinearity": {"B": 1.0, "p": 4.0, "beta": 0.0, "sigma": 0.0, "alpha": 0.0, "R0": 1.0},
    "eigen": {"k": 50, "tol": 1e-8, "method": "auto", "model": "power-only", "window": None,
              "saturation": 0.3, "export_matrix": False},
    "clr": {"depth": -1.0, "t": {"start": 10.0, "stop": 1e4, "num": 16}, "saturation": 0.1,
            "min_count": 4},
    "solve": {"K": 3, "tol": 1e-8, "max_iter": 2000, "deflation_c": 1.0, "sep": 1e-3,
              "A0_factor": 2.0},
    "morse": {"vector": "solution-1.vec", "epsilon": 1e-6},
}


# sections with required user input: defaults fill them in, never create them
USER_SECTIONS = ("domain", "clr")


class ConfigError(SubtkError):
    code = "config_invalid"

    def __init__(self, message, code=None):
        super().__init__(message)
        if code:
            self.code = code


class PartialResult(Exception):
    def __init__(self, payload, warnings):
        super().__init__("; ".join(warnings))
        self.payload = payload
        self.warnings = warnings


# ---------------------------------------------------------------------------
# configuration


def packaged_configs() -> list[str]:
    root = resources.files("subtk") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _schema():
    return json.loads((resources.files("subtk") / "config.schema.json").read_text())


def _line_of(text: str, needle: str) -> int | None:
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def load_config(ref: str) -> tuple[dict, str, Path | None]:
    """Read a config by path or packaged name; return ``(config, raw text, base dir)``."""
    path = Path(ref)
    if path.is_file():
        text, base = path.read_text(), path.parent
    else:
        name = ref[:-5] if ref.endswith(".json") else ref
        res = resources.files("subtk") / "configs" / (name + ".json")
        if not res.is_file():
            raise ConfigError("config %r not found (packaged: %s)" % (ref, ", ".join(packaged_configs())),
                              "config_not_found")
        text, base = res.read_text(), None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("line %d, column %d: %s" % (exc.lineno, exc.colno, exc.msg), "json_syntax")
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        key = str(e.absolute_path[-1]) if e.absolute_path else None
        line = _line_of(text, '"%s"' % key) if isinstance(key, str) and not key.isdigit() else None
        prefix = "line %d: " % line if line else ""
        raise ConfigError("%s%s: %s" % (prefix, where, e.message), "schema_invalid")
    return cfg, text, base


def with_defaults(cfg: dict) -> dict:
    out = json.loads(json.dumps(cfg))
    for key, dflt in DEFAULTS.items():
        if key in USER_SECTIONS and key not in out:
            continue
        if isinstance(dflt, dict):
            merged = dict(dflt)
            merged.update(out.get(key, {}))
            out[key] = merged
        else:
            out.setdefault(key, dflt)
    return out


def _require(cfg, key, task):
    if key not in cfg:
        raise ConfigError("task %r needs a %r section" % (task, key), "missing_section")


def _fields(cfg, text):
    _require(cfg, "fields", "fields")
    try:
        return parse_fields(cfg["fields"])
    except SubtkError as exc:
        spec = None
        for f in cfg["fields"]:
            try:
                parse_fields([f])
            except SubtkError:
                spec = f
                break
        needle = spec if isinstance(spec, str) else (spec[0] if spec else "fields")
        line = _line_of(text, str(needle)) if needle else None
        raise ConfigError(("line %d: " % line if line else "") + "fields: %s" % exc, exc.code)


def _grid(cfg) -> GridSpec:
    _require(cfg, "domain", "grid")
    d = cfg["domain"]
    box = [tuple(b) for b in d["box"]]
    res = d["resolution"]
    res = [res] * len(box) if isinstance(res, int) else res
    return GridSpec(tuple(box), tuple(res), mask_expr=d.get("mask"))


def _operator(cfg, text):
    fields = _fields(cfg, text)
    grid = _grid(cfg)
    if fields[0].dim != grid.dim:
        raise ConfigError("fields act in dimension %d, domain has %d" % (fields[0].dim, grid.dim),
                          "dimension_mismatch")
    return assemble_laplacian(fields, grid, cfg["domain"].get("scheme", "forward"))


def _nonlinearity(cfg, grid) -> NonlinearitySpec:
    nl = dict(cfg["nonlinearity"])
    alpha = nl.pop("alpha", 0.0)
    if isinstance(alpha, str):
        alpha = sample_expression(alpha, grid.points)
    elif alpha == 0:
        alpha = None
    return NonlinearitySpec(alpha=alpha, **nl)


def _semantic(cfg, task):
    """The parts of the config a task's output depends on (the input hash covers these)."""
    keys = {
        "index": ("fields", "domain", "index"),
        "exponents": ("params",),
        "eigen": ("fields", "domain", "eigen", "seed"),
        "clr": ("fields", "domain", "clr", "params", "seed"),
        "solve": ("fields", "domain", "eigen", "nonlinearity", "solve", "seed"),
        "morse": ("fields", "domain", "nonlinearity", "morse"),
    }[task]
    return {"task": task, "version": __version__, **{k: cfg.get(k) for k in keys}}


# ---------------------------------------------------------------------------
# tasks


def run_index(cfg, text, ctx):
    fields = _fields(cfg, text)
    _require(cfg, "domain", "index")
    d = cfg["domain"]
    opt = cfg["index"]
    m = opt["samples_per_axis"]
    axes = [np.linspace(a, b, m) for a, b in d["box"]]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    pred = mask_from_expression(d.get("mask"), len(axes))
    if pred is not None:
        pts = pts[pred(pts)]
    extra = np.asarray(opt["extra_points"], float).reshape(-1, len(axes)) if opt["extra_points"] else ()
    if fields[0].dim != len(axes):
        raise ConfigError("fields act in dimension %d, domain has %d" % (fields[0].dim, len(axes)),
                          "dimension_mismatch")
    rep = generalized_metivier_index(fields, pts, extra, rank_tol=opt["rank_tol"],
                                     max_len_cap=opt["max_len_cap"])
    out = rep.to_dict()
    out["fields"] = [str(f) for f in fields]
    if rep.nu_tilde > 2:
        out["critical_exponent"] = 2 * rep.nu_tilde / (rep.nu_tilde - 2)
    return out


def _fractionize(params: dict) -> dict:
    return {k: (Fraction(str(v)) if isinstance(v, (int, float)) and k not in ("n", "d") else v)
            for k, v in params.items()}


def run_exponents(cfg, text, ctx):
    _require(cfg, "params", "exponents")
    prm = ProblemParams.from_dict(cfg["params"])
    out = exponent_report(prm)
    exact = ProblemParams.from_dict(_fractionize(cfg["params"]))
    out["exact"] = {"sup_p_A1": str(sup_p_A1(exact)), "sup_p_A2": str(sup_p_A2(exact))}
    out["params"] = {k: (float(v) if isinstance(v, (int, float, Fraction)) and k not in ("n", "d") else v)
                     for k, v in out["params"].items()}
    return out


def _eigen_key(cfg):
    e = cfg["eigen"]
    return sha256_of({"fields": cfg["fields"], "domain": cfg["domain"], "k": e["k"], "tol": e["tol"],
                      "method": e["method"], "seed": cfg["seed"], "version": __version__})[:16]


def _spectrum(cfg, op, ctx, k=None) -> Spectrum:
    e = cfg["eigen"]
    k = max(int(k or 0), int(e["k"]))
    cache = ctx["out"] / "cache" / ("eigen-%s.npz" % _eigen_key({**cfg, "eigen": {**e, "k": k}}))
    if cache.is_file():
        with np.load(cache) as z:
            ctx["cache"] = "hit"
            return Spectrum(z["eigenvalues"], z["eigenvectors"], z["residuals"], float(z["weight"]),
                            {"method": str(z["method"]), "n": op.size, "k": k, "seed": cfg["seed"]})
    s = smallest_eigenpairs(op, k, tol=e["tol"], seed=cfg["seed"], method=e["method"])
    cache.parent.mkdir(parents=True, exist_ok=True)
    tmp = cache.with_name(cache.name + ".tmp.npz")
    np.savez(tmp, eigenvalues=s.eigenvalues, eigenvectors=s.eigenvectors, residuals=s.residuals,
             weight=s.weight, method=s.provenance["method"])
    os.replace(tmp, cache)
    ctx["cache"] = "miss"
    return s


def run_eigen(cfg, text, ctx):
    op = _operator(cfg, text)
    e = cfg["eigen"]
    if not e["k"] < op.size:
        raise ConfigError("k=%d must be below the number of unknowns %d" % (e["k"], op.size),
                          "k_too_large")
    s = _spectrum(cfg, op, ctx)
    write_csv(ctx["out"] / "eigen.csv", ["k", "lambda_k", "residual"], s.to_rows())
    if e["export_matrix"]:
        write_matrix_market(ctx["out"] / "operator.mtx", op.scaled(), comment="A/W, standard form")
    ok, lam1 = verify_poincare(s, op, seed=cfg["seed"])
    out = {
        "grid": op.grid.describe(),
        "k": s.k,
        "lambda_1": lam1,
        "poincare_holds": ok,
        "max_residual": float(np.max(s.residuals)),
        "method": s.provenance["method"],
        "eigenvalues_csv": "eigen.csv",
    }
    try:
        fit = weyl_fit(s, e["model"], e["window"], e["saturation"])
        out["weyl_fit"] = fit.to_dict()
    except ValueError as exc:
        out["weyl_fit"] = {"error": str(exc)}
    return out


def _t_values(spec):
    if isinstance(spec, dict):
        return np.geomspace(spec["start"], spec["stop"], spec["num"])
    return np.asarray(spec, float)


def run_clr(cfg, text, ctx):
    _require(cfg, "clr", "clr")
    op = _operator(cfg, text)
    c = cfg["clr"]
    pred = mask_from_expression(c["region"], op.grid.dim)
    region = pred(op.grid.points) if pred is not None else np.ones(op.size, bool)
    if not region.any():
        raise ConfigError("clr region contains no unknowns", "empty_region")
    V = np.where(region, float(c["depth"]), 0.0)
    t = _t_values(c["t"])
    if np.any(np.diff(t) <= 0):
        raise ConfigError("clr t values must increase", "t_not_increasing")
    counts = np.array([clr_count(op, ti * V) for ti in t])
    write_csv(ctx["out"] / "clr.csv", ["t", "count"], [(float(a), int(b)) for a, b in zip(t, counts)])
    nu = c.get("nu_tilde", (cfg.get("params") or {}).get("nu_tilde"))
    fit = clr_scaling_fit(op, V, t, nu_tilde=nu, saturation=c["saturation"],
                          min_count=c["min_count"], counts=counts)
    out = fit.to_dict()
    out["region"] = c["region"]
    out["counts_csv"] = "clr.csv"
    return out


def run_solve(cfg, text, ctx):
    op = _operator(cfg, text)
    so = cfg["solve"]
    spec = _nonlinearity(cfg, op.grid)
    K = so["K"]
    s = _spectrum(cfg, op, ctx, k=K)
    opts = SearchOptions(tol=so["tol"], max_iter=so["max_iter"], deflation_c=so["deflation_c"],
                         sep=so["sep"], seed=cfg["seed"])
    nu = so.get("nu_tilde", float(op.grid.dim))
    recs, warnings = multi_solution_search(spec, op, s, K, opts, nu_tilde=nu)
    consts = growth_constants(spec)
    if recs:
        consts = consts.with_A0(fit_A0([r.u for r in recs], spec, op, so["A0_factor"]))
    rows = []
    for r in recs:
        annotate(r, spec, consts, op)
        name = "solution-%d.vec" % r.k
        write_vector(ctx["out"] / name, op.grid.to_full(r.u))
        row = r.summary()
        row["vector_file"] = name
        rows.append(row)
    payload = {
        "grid": op.grid.describe(),
        "nonlinearity": spec.to_dict(),
        "constants": consts.to_dict(),
        "records": rows,
        "warnings": warnings,
        "energies": [r.energy for r in recs],
    }
    if len(recs) < K:
        raise PartialResult(payload, warnings)
    return payload


def run_morse(cfg, text, ctx):
    op = _operator(cfg, text)
    m = cfg["morse"]
    path = Path(m["vector"])
    if not path.is_absolute():
        candidates = [ctx["out"] / path]
        if ctx.get("base") is not None:
            candidates.insert(0, ctx["base"] / path)
        found = [c for c in candidates if c.is_file()]
        if not found:
            raise ConfigError("vector file %s not found" % m["vector"], "vector_not_found")
        path = found[0]
    full = read_vector(path)
    try:
        u = op.grid.from_full(full)
    except SubtkError as exc:
        raise ConfigError(str(exc), "vector_shape_mismatch")
    spec = _nonlinearity(cfg, op.grid)
    H = hessian_Ip(u, spec, op)
    mi = morse_indices(H, m.get("tol"))
    V = -spec.df(u)
    eps = float(m["epsilon"])
    n_eps = clr_count(op, V - eps)
    return {
        "vector": path.name,
        "m": mi["m"],
        "m_star": mi["m_star"],
        "tol": mi["tol"],
        "clr_count_V_minus_eps": int(n_eps),
        "epsilon": eps,
        "chain_holds": bool(n_eps >= mi["m_star"]),
    }


RUNNERS = {
    "index": run_index,
    "exponents": run_exponents,
    "eigen": run_eigen,
    "clr": run_clr,
    "solve": run_solve,
    "morse": run_morse,
}


# ---------------------------------------------------------------------------
# entry point


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def _threads(args):
    n = args.threads
    if n is None:
        env = os.environ.get("SUBTK_THREADS")
        if env:
            try:
                n = int(env)
            except ValueError:
                raise ConfigError("SUBTK_THREADS must be an integer, got %r" % env, "bad_threads")
    if n is not None and n < 1:
        raise ConfigError("--threads must be positive", "bad_threads")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subtk", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version="subtk " + __version__)
    sub = p.add_subparsers(dest="task", required=True)
    for task in TASKS:
        s = sub.add_parser(task)
        s.add_argument("--config", required=True,
                       help="config path or packaged name (%s)" % ", ".join(packaged_configs()))
        s.add_argument("--out", default="subtk-out", help="output directory")
        s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        s.add_argument("--threads", type=int, default=None, help="BLAS threads (env SUBTK_THREADS)")
        s.add_argument("--verbose", "-v", action="store_true")
    return p


def run(task: str, config: str, out, seed=None, threads=None) -> tuple[int, dict]:
    """Run one task; returns ``(exit code, report)``.  Used by :func:`main` and tests."""
    from threadpoolctl import threadpool_limits

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"task": task, "started": _now(), "version": __version__}
    code = EXIT_OK
    payload = None
    try:
        raw, text, base = load_config(config)
        cfg = with_defaults(raw)
        if seed is not None:
            cfg["seed"] = int(seed)
        report["config"] = raw.get("name", config)
        report["seed"] = cfg["seed"]
        report["input_hash"] = sha256_of(_semantic(cfg, task))
        ctx = {"out": out, "base": base}
        with threadpool_limits(limits=threads):
            try:
                payload = RUNNERS[task](cfg, text, ctx)
                report["status"] = "ok"
            except PartialResult as pr:
                payload = pr.payload
                report["status"] = "partial"
                report["warnings"] = pr.warnings
                code = EXIT_PARTIAL
        if "cache" in ctx:
            report["eigen_cache"] = ctx["cache"]
    except (ConvergenceError, HormanderError) as exc:
        code = EXIT_NUMERIC
        report["status"] = "error"
        report["error"] = {"code": exc.code, "message": str(exc)}
    except (SubtkError, ValueError) as exc:
        code = EXIT_CONFIG
        report["status"] = "error"
        report["error"] = {"code": getattr(exc, "code", "config_invalid"), "message": str(exc)}
    if payload is not None:
        path = write_json(out / ("%s.json" % task), payload)
        report["payload_file"] = path.name
        report["payload_sha256"] = sha256_of(payload)
    report["exit_code"] = code
    report["finished"] = _now()
    write_json(out / ("%s.report.json" % task), report)
    return code, report


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = _threads(args)
    except ConfigError as exc:
        print("error [%s]: %s" % (exc.code, exc), file=sys.stderr)
        return EXIT_CONFIG
    code, report = run(args.task, args.config, args.out, args.seed, threads)
    if code in (EXIT_OK, EXIT_PARTIAL):
        print(Path(args.out) / report["payload_file"])
        if code == EXIT_PARTIAL:
            print("partial result: %s" % "; ".join(report.get("warnings", [])), file=sys.stderr)
    else:
        err = report["error"]
        print("error [%s]: %s" % (err["code"], err["message"]), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
