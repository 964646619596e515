"""Command-line front end.

Exit codes: 0 success, 2 usage error (bad flags, inconsistent dimensions,
unsupported measure/operation pairs), 3 numerical failure.  Errors are
reported on stderr as a one-line JSON object.
"""

import argparse
import json
import sys

from . import __version__
from .bounds import BoundInputs, lr_bound, uniform_bound
from .errors import InvalidArgument, NumericFailure, ParseError, Unreachable
from .features import approx_derivative
from .harness import (
    SCHEMA_VERSION,
    THREADS_ENV,
    GridSpec,
    atomic_write,
    diameter_study,
    dumps,
    rate_study,
    resolve_K,
    to_csv,
    validate_bound,
)
from .oracle import KernelOracle
from .spectral import (
    SpectralMeasure,
    appendix_K,
    as_multi_index,
    bernstein_check,
    c_pq,
    sample,
    sigma_pq,
)

EXIT_USAGE = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fail(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message)}) + "\n")
    return code


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------


def _float_list(text):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def _int_list(text):
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _measure(args):
    if args.measure_file:
        try:
            with open(args.measure_file, encoding="utf-8") as fh:
                measure = SpectralMeasure.from_json(fh.read())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read measure file: {exc}")
        if args.d is not None and args.d != measure.d:
            raise UsageError(f"--d {args.d} disagrees with measure file (d={measure.d})")
        return measure
    d = 1 if args.d is None else args.d
    if d < 1:
        raise UsageError(f"--d must be >= 1, got {d}")
    if args.measure == "gaussian":
        return SpectralMeasure.gaussian(args.sigma, d)
    return SpectralMeasure.gengauss(args.ell, d)


def _index(text, d, flag):
    try:
        if text.strip() == "0":
            return (0,) * d
        return as_multi_index(text, d)
    except (InvalidArgument, ValueError) as exc:
        raise UsageError(f"{flag}: {exc}")


def _point(values, d, flag):
    if values is None:
        return [0.0] * d
    if len(values) != d:
        raise UsageError(f"{flag} has {len(values)} coordinates, expected {d}")
    return values


def _write_outputs(args, record_text=None, csv_text=None, plot_text=None):
    # only called after every computation succeeded
    if getattr(args, "output", None) and record_text is not None:
        atomic_write(args.output, record_text)
    if getattr(args, "csv", None) and csv_text is not None:
        atomic_write(args.csv, csv_text)
    if getattr(args, "plot", None) and plot_text is not None:
        atomic_write(args.plot, plot_text)


def _record_json(obj):
    obj = dict(obj, schema_version=SCHEMA_VERSION)
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _print_table(rows, out):
    width = max(len(str(k)) for k, _ in rows)
    for k, v in rows:
        out.write(f"{str(k).ljust(width)}  {_fmt(v)}\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_approx(args, out):
    measure = _measure(args)
    p = _index(args.p, measure.d, "--p")
    q = _index(args.q, measure.d, "--q")
    x = _point(args.x, measure.d, "--x")
    y = _point(args.y, measure.d, "--y")
    smp = sample(measure, args.m, args.seed)
    est = approx_derivative(smp, p, q, x, y)
    rows = [("estimate", est)]
    try:
        exact = KernelOracle(measure).exact_derivative(p, q, x, y)
    except NumericFailure:
        rows.append(("oracle", "unavailable"))
    else:
        rows += [("oracle", exact), ("abs_error", abs(est - exact))]
    _print_table(rows, out)
    _write_outputs(args, _record_json(dict(rows)))


def cmd_exact(args, out):
    measure = _measure(args)
    p = _index(args.p, measure.d, "--p")
    q = _index(args.q, measure.d, "--q")
    x = _point(args.x, measure.d, "--x")
    y = _point(args.y, measure.d, "--y")
    try:
        oracle = KernelOracle(measure, args.method)
    except InvalidArgument as exc:
        raise UsageError(str(exc))
    rows = [("method", oracle.method), ("value", oracle.exact_derivative(p, q, x, y))]
    _print_table(rows, out)
    _write_outputs(args, _record_json(dict(rows)))


def cmd_bernstein(args, out):
    measure = _measure(args)
    report = bernstein_check(measure, args.r, args.K, args.n_max)
    rows = [("r", report.r), ("K", report.K), ("n_max", report.n_max), ("verdict", report.verdict)]
    if not report.passed:
        rows += [("first_violating_n", report.first_violating_n),
                 ("violation_ratio", report.violation_ratio)]
    _print_table(rows, out)
    _write_outputs(args, _record_json(report.to_dict()))


def cmd_appendix_k(args, out):
    res = appendix_K(args.ell, args.r)
    rows = [("ell", args.ell), ("r", args.r), ("K", res.K), ("n_s", res.n_s), ("c_r", res.c_r)]
    _print_table(rows, out)
    _write_outputs(args, _record_json(dict(rows)))


def cmd_bound(args, out):
    measure = _measure(args)
    p = _index(args.p, measure.d, "--p")
    q = _index(args.q, measure.d, "--q")
    K = resolve_K(measure, p, q, args.K)
    inputs = BoundInputs(
        m=args.m, diameter=args.diam, d=measure.d, sigma_pq=sigma_pq(measure, p, q),
        c_pq=c_pq(measure, p, q), K=K, t=args.t,
    )
    report = lr_bound(inputs, args.lr) if args.lr is not None else uniform_bound(inputs)
    rows = [("sigma_pq", inputs.sigma_pq), ("C_pq", inputs.c_pq), ("K", K)]
    rows += list(report.constants.items())
    rows += list(report.terms.items())
    if args.lr is not None:
        rows += [("r", args.lr), ("volume_factor", report.volume_factor)]
    rows += [("total", report.total), ("failure_probability", report.failure_probability)]
    _print_table(rows, out)
    _write_outputs(args, _record_json(report.to_dict()))


def _plot_columns(header, rows):
    lines = ["# " + " ".join(header)]
    lines += [" ".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def cmd_rate_study(args, out):
    measure = _measure(args)
    p = _index(args.p, measure.d, "--p")
    q = _index(args.q, measure.d, "--q")
    grid = GridSpec(args.diam, args.points, measure.d)
    study = rate_study(measure, p, q, grid, args.m_values, args.trials, args.seed,
                       threads=args.threads, bootstrap=args.bootstrap)
    out.write("m        median                  q25                     q75\n")
    for s in study.summary:
        out.write(f"{s['m']:<8d} {_fmt(s['median']):<23} {_fmt(s['q25']):<23} {_fmt(s['q75'])}\n")
    out.write(f"fitted_rate {_fmt(study.fitted_rate)}\n")
    if study.rate_interval:
        out.write(f"rate_interval {_fmt(study.rate_interval[0])} {_fmt(study.rate_interval[1])}\n")
    plot = _plot_columns(["m", "median", "q25", "q75"],
                         [(s["m"], s["median"], s["q25"], s["q75"]) for s in study.summary])
    _write_outputs(args, dumps(study), to_csv(study), plot)


def cmd_diameter_study(args, out):
    measure = _measure(args)
    p = _index(args.p, measure.d, "--p")
    q = _index(args.q, measure.d, "--q")
    study = diameter_study(measure, p, q, args.m, args.diameters, args.trials, args.seed,
                           points_per_axis=args.points, threads=args.threads)
    out.write("diameter  median\n")
    for dm, med in zip(study.diameters, study.medians):
        out.write(f"{_fmt(dm):<9} {_fmt(med)}\n")
    if study.regression:
        out.write(f"regression_slope {_fmt(study.regression['slope'])}\n")
        out.write(f"regression_intercept {_fmt(study.regression['intercept'])}\n")
    plot = _plot_columns(["diameter", "median"], list(zip(study.diameters, study.medians)))
    _write_outputs(args, dumps(study), to_csv(study), plot)


def cmd_validate(args, out):
    measure = _measure(args)
    p = _index(args.p, measure.d, "--p")
    q = _index(args.q, measure.d, "--q")
    grid = GridSpec(args.diam, args.points, measure.d)
    rec = validate_bound(measure, p, q, grid, args.m, args.t, args.trials, K=args.K,
                         base_seed=args.seed, threads=args.threads)
    rows = [
        ("K", rec.K),
        ("bound", rec.bound.total),
        ("max_sup_error", max(rec.sup_errors)),
        ("violations", rec.violations),
        ("violation_fraction", rec.violation_fraction),
        ("allowed_fraction", rec.allowed_fraction),
        ("verdict", "pass" if rec.passed else "fail"),
    ]
    _print_table(rows, out)
    _write_outputs(args, dumps(rec), to_csv(rec))


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    measure = argparse.ArgumentParser(add_help=False)
    g = measure.add_argument_group("measure")
    g.add_argument("--measure", choices=("gaussian", "gengauss"), default="gaussian",
                   help="spectral family (default: gaussian)")
    g.add_argument("--sigma", type=float, default=1.0, help="Gaussian scale (default: 1)")
    g.add_argument("--ell", type=int, default=1, help="generalized-Gaussian order (default: 1)")
    g.add_argument("--measure-file", help="JSON measure descriptor; overrides --measure")
    g.add_argument("--d", type=int, default=None,
                   help="dimension; the inline marginal is replicated d times (default: 1)")

    deriv = argparse.ArgumentParser(add_help=False)
    deriv.add_argument("--p", default="0", help="multi-index in x, comma list (default: 0)")
    deriv.add_argument("--q", default="0", help="multi-index in y, comma list (default: 0)")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="(base) random seed (default: 0)")
    common.add_argument("--output", "-o", help="write the JSON record here")

    study = argparse.ArgumentParser(add_help=False)
    study.add_argument("--trials", type=int, default=50, help="independent trials (default: 50; validate: 200)")
    study.add_argument("--points", type=int, default=None,
                       help="grid points per axis, odd (default: 2001 for d=1, 101 for d=2)")
    study.add_argument("--threads", type=int, default=None,
                       help=f"worker threads; results do not depend on it (default: ${THREADS_ENV} or 1)")
    study.add_argument("--csv", help="write the per-trial CSV export here")

    parser = _Parser(prog="rffderiv", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("approx", parents=[measure, deriv, common],
                       help="RFF estimate of a kernel derivative with the exact value")
    p.add_argument("--x", type=_float_list, help="point x, comma list (default: origin)")
    p.add_argument("--y", type=_float_list, help="point y, comma list (default: origin)")
    p.add_argument("--m", type=int, default=100, help="number of frequencies (default: 100)")
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("exact", parents=[measure, deriv, common], help="exact kernel derivative")
    p.add_argument("--x", type=_float_list, help="point x, comma list (default: origin)")
    p.add_argument("--y", type=_float_list, help="point y, comma list (default: origin)")
    p.add_argument("--method", choices=("closed_form", "quadrature"), default=None,
                   help="oracle method (default: closed_form when available)")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("bernstein", parents=[measure, common],
                       help="check the Bernstein moment condition (d = 1)")
    p.add_argument("--r", type=int, required=True, help="derivative order |p+q|")
    p.add_argument("--K", type=float, required=True, help="candidate constant, >= 1")
    p.add_argument("--n-max", type=int, default=30, help="largest n tested (default: 30)")
    p.set_defaults(func=cmd_bernstein)

    p = sub.add_parser("appendix-k", parents=[common],
                       help="Bernstein constant for the generalized Gaussian family")
    p.add_argument("--ell", type=int, required=True, help="order of exp(-w^(2 ell))")
    p.add_argument("--r", type=int, required=True, help="derivative order, 1 <= r <= 2 ell")
    p.set_defaults(func=cmd_appendix_k)

    p = sub.add_parser("bound", parents=[measure, deriv, common],
                       help="evaluate the uniform (or L^r) error bound")
    p.add_argument("--m", type=int, required=True, help="number of frequencies")
    p.add_argument("--diam", type=float, required=True, help="diameter |S|")
    p.add_argument("--t", type=float, required=True, help="confidence parameter t > 0")
    p.add_argument("--K", type=float, default=None,
                   help="Bernstein constant (default: certified value for the order)")
    p.add_argument("--lr", type=float, default=None, help="evaluate the L^r bound for this r")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("rate-study", parents=[measure, deriv, common, study],
                       help="median sup error versus m")
    p.add_argument("--m-values", type=_int_list, default=[100, 400, 1600, 6400],
                   help="comma list (default: 100,400,1600,6400)")
    p.add_argument("--diam", type=float, default=1.0, help="diameter |S| (default: 1)")
    p.add_argument("--bootstrap", type=int, default=200,
                   help="bootstrap resamples for the slope interval (default: 200)")
    p.add_argument("--plot", help="write gnuplot-style columns here")
    p.set_defaults(func=cmd_rate_study)

    p = sub.add_parser("diameter-study", parents=[measure, deriv, common, study],
                       help="median sup error versus |S|")
    p.add_argument("--m", type=int, default=10000, help="number of frequencies (default: 10000)")
    p.add_argument("--diameters", type=_float_list, default=[1.0, 10.0, 100.0, 1000.0],
                   help="increasing comma list (default: 1,10,100,1000)")
    p.add_argument("--plot", help="write gnuplot-style columns here")
    p.set_defaults(func=cmd_diameter_study)

    p = sub.add_parser("validate", parents=[measure, deriv, common, study],
                       help="empirical violation rate of the uniform bound")
    p.add_argument("--m", type=int, default=10000, help="number of frequencies (default: 10000)")
    p.add_argument("--t", type=float, default=3.0, help="confidence parameter (default: 3)")
    p.add_argument("--diam", type=float, default=1.0, help="diameter |S| (default: 1)")
    p.add_argument("--K", type=float, default=None,
                   help="Bernstein constant (default: certified value for the order)")
    p.set_defaults(func=cmd_validate, trials=200)

    return parser


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args, out)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except (NumericFailure, Unreachable) as exc:
        return _fail("numeric", exc, EXIT_NUMERIC)
    except (InvalidArgument, ParseError) as exc:
        return _fail("usage", exc, EXIT_USAGE)
    return 0


if __name__ == "__main__":
    sys.exit(main())
