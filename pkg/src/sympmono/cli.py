"""Command-line experiment runner.

Each subcommand reads an optional JSON config, applies flag overrides,
validates the keys, runs, and prints line-delimited JSON rows followed by a
summary object. Timings are left out of reports unless ``--timings`` is
given, so identical config and seed give byte-identical output.

Exit codes: 0 success, 1 property failure (``verify``), 2 usage or config
error, 3 numerical nonconvergence, 4 indeterminate spectral gap.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NONCONV, EXIT_GAP = 0, 1, 2, 3, 4

log = logging.getLogger("sympmono")


class ConfigError(ValueError):
    """Invalid or unknown configuration entries."""


def _twists(v):
    if isinstance(v, str):
        v = [p for p in v.split(",") if p.strip()]
    out = tuple(int(k) for k in v)
    if not 1 <= len(out) <= 3:
        raise ConfigError(f"need 1 to 3 twists, got {len(out)}")
    return out


def _seed(v):
    v = int(v)
    if not 0 <= v < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {v}")
    return v


def _positive(v):
    v = float(v)
    if not v > 0:
        raise ConfigError(f"expected a positive number, got {v}")
    return v


def _grid(v):
    v = int(v)
    if v < 4 or v % 2:
        raise ConfigError(f"grid must be an even integer >= 4, got {v}")
    return v


def _bool(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("true", "false"):
        return v.lower() == "true"
    raise ConfigError(f"expected a boolean, got {v!r}")


def _holonomy(v):
    return None if v is None else [float(x) for x in v]


def _rational(v):
    from .chern import to_fraction

    return to_fraction(v)


def _choice(*opts):
    def f(v):
        if v not in opts:
            raise ConfigError(f"expected one of {opts}, got {v!r}")
        return v
    return f


# key -> (parser, default); ``None`` default means "inferred"
SCHEMAS = {
    "index": {
        "c1c2": (_rational, 0), "c1sq_l": (_rational, 0), "c2_l": (_rational, 0),
        "l2_c1": (_rational, 0), "l3": (_rational, 0), "has_reducibles": (_bool, False),
        "c1xi_omega2": (float, 0.0),
    },
    "solve-kw": {
        "problem": (_choice("constant", "manufactured"), "constant"), "grid": (_grid, 64),
        "n": (int, 1), "w": (float, 1.0), "g": (float, 1.0), "s": (_positive, 1.0),
        "kappa": (_positive, 1.0), "tol": (_positive, 1e-10), "seed": (_seed, 0),
    },
    "solve-monopole": {
        "twists": (_twists, (0, 0, 0)), "grid": (_grid, 6), "s": (_positive, 1.0),
        "tol": (_positive, 1e-8), "seed": (_seed, 0), "amplitude": (float, 0.3),
        "link_noise": (float, 0.05), "max_iter": (int, 60), "budget": (_positive, None),
    },
    "spectrum": {
        "twists": (_twists, (1,)), "grid": (_grid, 32), "holonomy": (_holonomy, None),
        "tol_gap": (_positive, 1e3), "cohomology": (_bool, True),
    },
    "verify": {
        "seed": (_seed, 0),
    },
    "trichotomy": {
        "twists": (_twists, (0, 0, 0)), "grid": (_grid, 6), "runs": (int, 10),
        "s": (_positive, 1.0), "tol": (_positive, 1e-8), "seed": (_seed, 0),
        "budget": (_positive, None), "amplitude": (float, 0.3),
    },
}


@dataclass
class ExperimentConfig:
    """Validated parameters of one command."""

    command: str
    params: dict

    @classmethod
    def build(cls, command: str, file_params: dict | None = None, overrides: dict | None = None):
        schema = SCHEMAS[command]
        raw = dict(file_params or {})
        raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
        unknown = sorted(set(raw) - set(schema))
        if unknown:
            raise ConfigError(f"unknown keys for {command}: {unknown}")
        params = {}
        for key, (parse, default) in schema.items():
            if key in raw and raw[key] is not None:
                try:
                    params[key] = parse(raw[key])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{key}: {exc}") from exc
            else:
                params[key] = default
        return cls(command, params)


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        d = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    return d


class Reporter:
    """Line-delimited JSON rows, a final summary, and optional CSV/out files."""

    def __init__(self, stream, out: Path | None, csv_path: Path | None, timings: bool):
        self.stream = stream
        self.out = out
        self.csv_path = csv_path
        self.timings = timings
        self.rows: list[dict] = []

    def _clean(self, obj):
        from .suites import _jsonable, _strip_timings

        return _strip_timings(_jsonable(obj), self.timings)

    def row(self, obj: dict):
        obj = self._clean(obj)
        self.rows.append(obj)
        self.stream.write(json.dumps(obj, sort_keys=True) + "\n")

    def summary(self, obj: dict):
        obj = self._clean(obj)
        text = json.dumps(obj, sort_keys=True)
        self.stream.write(text + "\n")
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
            body = "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.rows)
            (self.out / "report.jsonl").write_text(body + text + "\n")
        if self.csv_path is not None and self.rows:
            keys = sorted({k for r in self.rows for k in r})
            with open(self.csv_path, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=keys)
                w.writeheader()
                for r in self.rows:
                    w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v
                                for k, v in r.items()})


# --- commands -----------------------------------------------------------------

def cmd_index(p: dict, rep: Reporter) -> int:
    from .chern import ChernData, DegreeData, _fmt, degree, invariant_branch, virtual_dimension

    d = ChernData(**{k: p[k] for k in ("c1c2", "c1sq_l", "c2_l", "l2_c1", "l3")})
    vdim = virtual_dimension(d)
    # the complex index is minus the moduli dimension
    branch = invariant_branch(-vdim, p["has_reducibles"])
    rep.summary({"command": "index", "data": d.as_dict(), "virtual_dimension": _fmt(vdim),
                 "degree": degree(DegreeData(p["c1xi_omega2"])), "branch": str(branch)})
    return EXIT_OK


def cmd_solve_kw(p: dict, rep: Reporter) -> int:
    from .lattice import TorusGeometry, write_field
    from .vortex import KWProblem, NoSolutionError, NonConvergenceError, manufactured_problem
    from .vortex import solve_kazdan_warner

    geom = TorusGeometry(p["n"], p["grid"])
    exact = None
    if p["problem"] == "constant":
        prob = KWProblem(np.full(geom.shape, p["w"]), p["g"], p["s"], geom, p["kappa"])
    else:
        prob, exact = manufactured_problem(geom, p["s"], p["kappa"], np.random.default_rng(p["seed"]))
    summary = {"command": "solve-kw", "config": p}
    try:
        sol = solve_kazdan_warner(prob, tol=p["tol"])
    except NoSolutionError as exc:
        rep.summary({**summary, "converged": False, "reason": "no-solution", "message": str(exc)})
        return EXIT_NONCONV
    except NonConvergenceError as exc:
        rep.summary({**summary, "converged": False, "reason": "nonconvergence",
                     "message": str(exc), "trace": exc.args[1] if len(exc.args) > 1 else None})
        return EXIT_NONCONV
    summary.update(converged=True, trace=sol.trace())
    if exact is not None:
        summary["linf_error"] = float(np.max(np.abs(sol.u - exact)))
    if rep.out is not None:
        rep.out.mkdir(parents=True, exist_ok=True)
        write_field(rep.out / "u.smf", sol.u, geom, None, (), double=True)
        summary["files"] = ["u.smf"]
    rep.summary(summary)
    return EXIT_OK


def cmd_solve_monopole(p: dict, rep: Reporter) -> int:
    from .fields import bound_report, random_configuration, save_configuration
    from .flow import solve_monopole
    from .lattice import TorusGeometry

    geom = TorusGeometry(len(p["twists"]), p["grid"])
    rng = np.random.default_rng(p["seed"])
    cfg0 = random_configuration(geom, rng, p["twists"], amplitude=p["amplitude"],
                                link_noise=p["link_noise"], link_modes=1)
    res = solve_monopole(cfg0, s=p["s"], tol=p["tol"], max_iter=p["max_iter"], budget=p["budget"])
    for i, r in enumerate(res.history):
        rep.row({"iteration": i, "residual": r})
    summary = {"command": "solve-monopole", "config": p, **res.trace(),
               "bounds": bound_report(res.configuration, p["s"])}
    if rep.out is not None:
        save_configuration(res.configuration, rep.out / "configuration", s=p["s"])
    rep.summary(summary)
    return EXIT_OK if res.converged else EXIT_NONCONV


def cmd_spectrum(p: dict, rep: Reporter) -> int:
    from .lattice import TorusGeometry, constant_curvature_bundle
    from .linearize import dolbeault_cohomology_dims
    from .vortex import section_spectrum

    geom = TorusGeometry(len(p["twists"]), p["grid"])
    bundle = constant_curvature_bundle(geom, p["twists"], p["holonomy"])
    sec = section_spectrum(bundle, p["tol_gap"])
    summary = {"command": "spectrum", "config": p, "sections": sec.to_dict()}
    if p["cohomology"]:
        summary["dolbeault"] = dolbeault_cohomology_dims(bundle, tol_gap=p["tol_gap"]).to_dict()
    rep.summary(summary)
    return EXIT_OK


def cmd_verify(p: dict, rep: Reporter, suite: str, extra: dict) -> int:
    from .suites import SUITES, run_suite

    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    res = run_suite(suite, p["seed"], **extra)
    for c in res.checks:
        rep.row({"suite": suite, **c.to_dict(rep.timings)})
    rep.summary({"command": "verify", **res.to_dict(rep.timings)})
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_trichotomy(p: dict, rep: Reporter) -> int:
    from .vortex import trichotomy_experiment

    out = trichotomy_experiment(p["twists"], s=p["s"], runs=p["runs"], grid=p["grid"],
                                seed=p["seed"], budget=p["budget"], tol=p["tol"],
                                amplitude=p["amplitude"])
    for r in out.pop("runs"):
        rep.row(r)
    rep.summary({"command": "trichotomy", **out})
    return EXIT_NONCONV if out["partial"] else EXIT_OK


# --- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sympmono", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of command parameters")
    common.add_argument("--out", type=Path, help="directory for reports and fields")
    common.add_argument("--csv", type=Path, help="write report rows as CSV")
    common.add_argument("--timings", action="store_true", help="include wall-clock timings")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, *flags):
        sp = sub.add_parser(name, parents=[common])
        for f in flags:
            sp.add_argument(f"--{f}", dest=f.replace("-", "_"), default=None)
        return sp

    add("index")
    add("solve-kw", "seed", "grid", "s", "tol")
    add("solve-monopole", "seed", "grid", "twists", "s", "tol")
    add("spectrum", "grid", "twists")
    v = add("verify", "seed", "grid", "twists", "s", "tol")
    v.add_argument("suite")
    add("trichotomy", "seed", "grid", "twists", "s", "tol")
    return ap


def _thread_limit():
    n = os.environ.get("SYMPMONO_THREADS")
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    from .spectral import IndeterminateGapError

    flags = {k: getattr(args, k, None) for k in ("seed", "grid", "twists", "s", "tol")}
    rep = Reporter(sys.stdout, args.out, args.csv, args.timings)
    try:
        with _thread_limit():
            if args.command == "verify":
                # suite-specific flags pass through to the suite runner
                extra = {k: v for k, v in flags.items() if k != "seed" and v is not None}
                cfg = ExperimentConfig.build("verify", _read_config(args.config),
                                             {"seed": flags["seed"]})
                if extra and args.suite != "trichotomy":
                    raise ConfigError(f"suite {args.suite!r} takes only --seed")
                if "twists" in extra:
                    extra["twists"] = (_twists(extra["twists"]),)
                for k, f in (("grid", _grid), ("tol", _positive)):
                    if k in extra:
                        extra[k] = f(extra[k])
                if "s" in extra:
                    raise ConfigError("suite 'trichotomy' has no --s")
                return cmd_verify(cfg.params, rep, args.suite, extra)
            cfg = ExperimentConfig.build(args.command, _read_config(args.config), flags)
            handler = {"index": cmd_index, "solve-kw": cmd_solve_kw,
                       "solve-monopole": cmd_solve_monopole, "spectrum": cmd_spectrum,
                       "trichotomy": cmd_trichotomy}[args.command]
            return handler(cfg.params, rep)
    except IndeterminateGapError as exc:
        rep.summary({"command": args.command, "error": "indeterminate-gap", "message": str(exc),
                     "singular_values": exc.singular_values})
        return EXIT_GAP
    except (ConfigError, ValueError) as exc:
        print(f"sympmono: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
