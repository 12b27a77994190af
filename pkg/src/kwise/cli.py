"""``kwise`` command-line front end.

Exit codes: 0 ok, 1 a single test answered No (or selftest failed),
2 usage or input error, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .closeness import (
    ClosenessError,
    WitnessError,
    closeness_exact,
    epsilon_k,
    mend_1wise,
    mend_min_weight,
    fourier_distance_bound,
)
from .constructions import (
    PairwiseShiftParams,
    chi2_bruteforce,
    chi2_geometric_bound,
    chi2_tuple_vs_uniform,
    epsilon_perturbed_family,
    lower_bound_density,
    LowerBoundParams,
)
from .cube_fourier import Density, DensityError, fourier_transform
from .experiments import (
    SCHEMA,
    ConfigError,
    ExperimentConfig,
    TrialError,
    build_density,
    rows_to_csv,
    run_config,
)
from .lp_solver import LpError
from .selftest import format_report, run_selftest
from .testers import ParameterError

EXIT_OK, EXIT_NO, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3

# errors caused by bad input rather than by a fault in the package
USER_ERRORS = (ConfigError, DensityError, ParameterError, WitnessError, LpError, ValueError, KeyError, OSError)


class CliError(Exception):
    """Usage error raised by the front end itself."""


# --------------------------------------------------------------------------
# argument helpers

def _value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _pairs(items, what):
    out = {}
    for item in items or []:
        name, sep, val = item.partition("=")
        if not sep or not name:
            raise CliError(f"{what} {item!r} must look like NAME=VALUE")
        out[name] = _value(val)
    return out


def _overrides(args):
    out = _pairs(args.override, "--override")
    for name, val in out.items():
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise CliError(f"--override {name} needs a number, got {val!r}")
    return out


def _read_json(path):
    with open(path) as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines()
        line = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {line}") from None


def _construction_spec(args):
    if getattr(args, "input", None):
        if args.construction:
            raise CliError("give either an input file or --construction, not both")
        return {"name": "file", "params": {"path": args.input}}
    if not args.construction:
        raise CliError("need an input density file or --construction NAME")
    return {"name": args.construction, "params": _pairs(args.param, "--param")}


def _density(args) -> Density:
    spec = _construction_spec(args)
    if spec["name"] == "file":
        path = spec["params"]["path"]
        obj = _read_json(path)
        try:
            return Density.from_json(obj)
        except DensityError as exc:
            raise type(exc)(f"{path}: {exc}") from None
    return build_density(spec)


def _write(args, text):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _table_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _json_default(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return repr(v)


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=1, default=_json_default) + "\n"


def _emit_table(args, header, rows):
    if args.format == "json":
        _write(args, _dumps([dict(zip(header, r)) for r in rows]))
    else:
        _write(args, _table_csv(header, rows))


def _finite(v):
    return v if math.isfinite(v) else repr(v)


# --------------------------------------------------------------------------
# commands

def _subset_label(mask, n):
    return "{" + ",".join(str(i + 1) for i in range(n) if mask >> i & 1) + "}"


def cmd_fourier(args):
    d = _density(args)
    spec = fourier_transform(d, args.max_level)
    W = spec.level_weights()
    top = spec.max_level
    per_level = [spec.max_abs(j, j) for j in range(top + 1)]
    eps = [max(per_level[1: j + 1]) for j in range(1, top + 1)]
    if args.format == "csv":
        rows = [(j, float(W[j]), float(per_level[j]), float(eps[j - 1]) if j else 0.0) for j in range(top + 1)]
        _emit_table(args, ("level", "weight", "max_abs", "epsilon_k"), rows)
        return EXIT_OK
    out = {"n": d.n, "mode": d.mode, "spectrum": json.loads(spec.to_json()),
           "level_weights": [float(w) for w in W],
           "epsilon": {str(j): float(eps[j - 1]) for j in range(1, top + 1)}}
    if spec.mode == "explicit" and d.n <= 12:
        nz = np.flatnonzero(np.abs(spec.coeffs) > 1e-12)
        out["support"] = {_subset_label(int(S), d.n): float(spec.coeffs[S]) for S in nz}
    _write(args, _dumps(out))
    return EXIT_OK


def _closeness_rows(d, k, exact=False):
    if d.mode != "explicit":
        d = d.to_explicit()
    res = closeness_exact(d, k, exact=exact)
    mend = mend_min_weight(d, k)
    rows = [("distance", res.distance), ("mend_weight", mend.w),
            ("dual_value", res.dual_certificate.value), ("fourier_bound", fourier_distance_bound(d, k))]
    if k == 1:
        rows += [("epsilon_1", epsilon_k(d, 1)), ("mend_1wise_weight", mend_1wise(d).w)]
    return rows, res


def cmd_closeness(args):
    d = _density(args)
    rows, res = _closeness_rows(d, args.k, args.exact)
    if args.witness:
        with open(args.witness, "w") as fh:
            fh.write(_dumps(res.dual_certificate.to_json()))
    if args.exact and res.exact_distance is not None:
        rows.append(("distance_exact", str(res.exact_distance)))
    _emit_table(args, ("quantity", "value"), rows)
    return EXIT_OK


def cmd_mend(args):
    d = _density(args)
    if d.mode != "explicit":
        d = d.to_explicit()
    res = mend_1wise(d) if args.closed_form else mend_min_weight(d, args.k)
    out = {"w": res.w, "psi": json.loads(res.psi.to_json()), "mixed": json.loads(res.mixed.to_json())}
    _write(args, _dumps(out))
    return EXIT_OK


def _apply_cli(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    cfg.overrides.update(_overrides(args))
    cfg.validate()
    return cfg


def _run_and_emit(cfg: ExperimentConfig, args, single: bool):
    rec = run_config(cfg)
    if getattr(args, "record", None):
        with open(args.record, "w") as fh:
            fh.write(rec.to_json() + "\n")
    if args.format == "json":
        _write(args, rec.to_json() + "\n")
    else:
        _write(args, rows_to_csv(rec.rows))
    if single and len(rec.verdicts) == 1 and len(rec.verdicts[0]["decisions"]) == 1:
        return EXIT_NO if rec.verdicts[0]["decisions"][0] in ("reject", "high") else EXIT_OK
    return EXIT_OK


def cmd_test(args):
    if args.config:
        cfg = ExperimentConfig.from_dict(_read_json(args.config))
    else:
        if not args.tester:
            raise CliError("need --config FILE or --tester NAME")
        cfg = ExperimentConfig.from_dict({
            "schema": SCHEMA, "command": "test", "construction": _construction_spec(args),
            "tester": {"name": args.tester, "params": _pairs(args.tparam, "--tparam")}})
    return _run_and_emit(_apply_cli(cfg, args), args, single=True)


def _single(args, tester, params):
    cfg = ExperimentConfig.from_dict({
        "schema": SCHEMA, "command": tester, "construction": _construction_spec(args),
        "tester": {"name": tester, "params": params}})
    return _run_and_emit(_apply_cli(cfg, args), args, single=True)


def cmd_filter(args):
    return _single(args, "filter_test", {"t": args.t, "m1": args.m1})


def cmd_overall(args):
    params = {"k": args.k, "delta": args.delta, "alpha": args.alpha, "mode": args.mode,
              "max_samples": args.max_samples}
    return _single(args, "overall", params)


def _chi2_rows(ns, deltas, ms, brute=False):
    rows = []
    for n in ns:
        for delta in deltas:
            for m in ms:
                p = PairwiseShiftParams(n, delta, m)
                bf = chi2_bruteforce(n, delta, m) if brute and n <= 8 else ""
                rows.append((n, delta, m, p.regime, _finite(chi2_tuple_vs_uniform(p)),
                             _finite(chi2_geometric_bound(n, delta, m)), bf))
    return rows


CHI2_HEADER = ("n", "delta", "m", "regime", "chi2", "geometric_bound", "bruteforce")


def cmd_chi2(args):
    _emit_table(args, CHI2_HEADER, _chi2_rows(args.n, args.delta, args.m, args.bruteforce))
    return EXIT_OK


def cmd_selftest(args):
    results = run_selftest()
    _write(args, format_report(results))
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NO


def _table1_rows(seed):
    """Closeness quantities next to the Fourier bounds for k = 1, 2 at desk scale."""
    cases = []
    for n in (6, 8):
        cases.append(("lower_bound", lower_bound_density(LowerBoundParams(n, 2, 4.0)).to_explicit()))
        for shape in ("single-set", "random-signs-level-k", "planted-mixture"):
            cases.append((shape, epsilon_perturbed_family(n, 2, 0.05, shape, seed)))
        rng = np.random.Generator(np.random.PCG64(seed + n))
        cases.append(("random", Density.from_weights(rng.random(1 << n) ** 4)))
    rows = []
    for name, d in cases:
        for k in (1, 2):
            vals = dict(_closeness_rows(d, k)[0])
            eps = epsilon_k(d, k)
            rows.append((name, d.n, k, eps, vals["distance"], vals["mend_weight"], vals["fourier_bound"],
                         vals.get("mend_1wise_weight", "")))
    return rows


TABLE1_HEADER = ("construction", "n", "k", "epsilon_k", "distance", "mend_weight", "fourier_bound",
                 "mend_1wise_weight")


def cmd_experiment(args):
    if args.config:
        cfg = ExperimentConfig.from_dict(_read_json(args.config))
        return _run_and_emit(_apply_cli(cfg, args), args, single=False)
    seed = 0 if args.seed is None else args.seed
    if args.preset == "table1":
        _emit_table(args, TABLE1_HEADER, _table1_rows(seed))
    elif args.preset == "indistinguishability":
        rows = []
        for n in (64, 256, 1024, 4096, 10000):
            ms = sorted({max(1, int(f * n / 0.25)) for f in (0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0)})
            rows += _chi2_rows([n], [0.5], ms)
        _emit_table(args, CHI2_HEADER, rows)
    else:
        raise CliError("need a preset (table1, indistinguishability) or --config FILE")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def _common(p, trials=True):
    p.add_argument("--seed", type=int, default=None, help="base seed (trial i uses a fixed odd stride)")
    if trials:
        p.add_argument("--trials", type=int, default=None, help="number of seeded trials")
    p.add_argument("--override", action="append", metavar="NAME=VAL", help="override a tester constant")
    p.add_argument("--out", metavar="PATH", help="write output here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default=None)


def _source(p, positional=True):
    if positional:
        p.add_argument("input", nargs="?", help="density JSON file")
    p.add_argument("--construction", metavar="NAME", help="build the input by name instead")
    p.add_argument("--param", action="append", metavar="KEY=VAL", help="construction parameter")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kwise", description="Testing k-wise uniformity on the Boolean cube.")
    ap.add_argument("--version", action="version", version=f"kwise {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fourier", help="spectrum, weight per level and epsilon_k of a density")
    _source(p)
    p.add_argument("--max-level", type=int, default=None)
    _common(p, trials=False)
    p.set_defaults(func=cmd_fourier, default_format="json")

    p = sub.add_parser("closeness", help="distance, mend weight, dual value and bounds (n <= 10)")
    _source(p)
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--exact", action="store_true", help="solve the LP in rational arithmetic")
    p.add_argument("--witness", metavar="PATH", help="write the dual witness {p, q} as JSON")
    _common(p, trials=False)
    p.set_defaults(func=cmd_closeness, default_format="csv")

    p = sub.add_parser("mend", help="smallest mixing weight and mending density")
    _source(p)
    p.add_argument("-k", type=int, default=1)
    p.add_argument("--closed-form", action="store_true", help="use the explicit k=1 construction")
    _common(p, trials=False)
    p.set_defaults(func=cmd_mend, default_format="json")

    p = sub.add_parser("test", help="run a tester on a construction for seeded trials")
    _source(p, positional=False)
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--tester", metavar="NAME")
    p.add_argument("--tparam", action="append", metavar="KEY=VAL", help="tester parameter")
    p.add_argument("--record", metavar="PATH", help="also write the run record JSON")
    _common(p)
    p.set_defaults(func=cmd_test, default_format="csv")

    p = sub.add_parser("filter", help="Filter Test on m1 samples")
    _source(p, positional=False)
    p.add_argument("-t", type=float, required=True)
    p.add_argument("--m1", type=int, required=True)
    p.add_argument("--record", metavar="PATH")
    _common(p)
    p.set_defaults(func=cmd_filter, default_format="csv")

    p = sub.add_parser("overall", help="Filter Test followed by the estimation test")
    _source(p, positional=False)
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--alpha", type=float, default=4)
    p.add_argument("--mode", choices=("alpha-k-wise", "fully-uniform"), default="alpha-k-wise")
    p.add_argument("--max-samples", type=float, default=1e8)
    p.add_argument("--record", metavar="PATH")
    _common(p)
    p.set_defaults(func=cmd_overall, default_format="csv")

    p = sub.add_parser("chi2", help="chi-square distance of shifted pairwise tuples from uniform")
    p.add_argument("-n", type=int, nargs="+", required=True)
    p.add_argument("--delta", type=float, nargs="+", required=True)
    p.add_argument("-m", type=int, nargs="+", required=True)
    p.add_argument("--bruteforce", action="store_true", help="also enumerate all shifts (n <= 8)")
    _common(p, trials=False)
    p.set_defaults(func=cmd_chi2, default_format="csv")

    p = sub.add_parser("selftest", help="brute-force equivalence checks")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_selftest, default_format="csv", format="csv")

    p = sub.add_parser("experiment", help="named desk-scale experiments or a config file")
    p.add_argument("preset", nargs="?", choices=("table1", "indistinguishability"))
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--record", metavar="PATH")
    _common(p)
    p.set_defaults(func=cmd_experiment, default_format="csv")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "format", None) is None:
        args.format = args.default_format
    try:
        return args.func(args)
    except CliError as exc:
        ap.error(str(exc))
    except TrialError as exc:
        print(f"kwise: error: TrialError: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc.cause, USER_ERRORS) and not isinstance(exc.cause, ClosenessError) else EXIT_INTERNAL
    except ClosenessError as exc:
        print(f"kwise: internal error: ClosenessError: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except USER_ERRORS as exc:
        print(f"kwise: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"kwise: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
