"""Sup-norm error experiments for RFF kernel-derivative estimates.

The error over ``S x S`` only depends on ``z = x - y``, so every experiment
evaluates it on a uniform grid over the difference cube
``[-|S|, |S|]^d``.  A grid maximum is a lower approximation of the true
supremum.

Every trial draws its frequencies from its own seed (``base_seed + i`` for
trial ``i``), so records are pure functions of the configuration and do not
depend on how trials are scheduled across threads.
"""

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundInputs, BoundReport, uniform_bound
from .errors import InvalidArgument, ParseError, PreconditionFailure
from .features import cosine_estimate
from .oracle import KernelOracle
from .spectral import (
    SpectralMeasure,
    as_multi_index,
    bernstein_check,
    c_pq,
    certified_K,
    order,
    sample,
    sigma_pq,
)

SCHEMA_VERSION = 1
THREADS_ENV = "RFFDERIV_THREADS"

_DEFAULT_POINTS = {1: 2001, 2: 101}
# cap on the size of one (points x frequencies) block in sup_error
_BLOCK = 1 << 22


def default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid over ``[-diameter, diameter]^d``.

    ``points_per_axis`` must be odd so that ``z = 0`` is a grid point; it is
    ignored (one point) when ``diameter == 0``.
    """

    diameter: float
    points_per_axis: int | None = None
    d: int = 1

    def __post_init__(self):
        if not self.diameter >= 0:
            raise InvalidArgument(f"diameter must be non-negative, got {self.diameter}")
        if self.d < 1:
            raise InvalidArgument(f"d must be >= 1, got {self.d}")
        n = self.points_per_axis
        if n is None:
            n = _DEFAULT_POINTS.get(self.d, 21)
        n = int(n)
        if self.diameter > 0 and (n < 3 or n % 2 == 0):
            raise InvalidArgument(f"points_per_axis must be odd and >= 3, got {n}")
        object.__setattr__(self, "points_per_axis", n)
        object.__setattr__(self, "diameter", float(self.diameter))

    def axis(self):
        if self.diameter == 0:
            return np.zeros(1)
        return np.linspace(-self.diameter, self.diameter, self.points_per_axis)

    def points(self):
        axes = np.meshgrid(*([self.axis()] * self.d), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)

    def refine(self):
        """Nested grid with every gap halved."""
        return GridSpec(self.diameter, 2 * self.points_per_axis - 1, self.d)

    def to_dict(self):
        return {"diameter": self.diameter, "points_per_axis": self.points_per_axis, "d": self.d}


def sup_error(sample, p, q, grid, oracle, exact=None):
    """Largest ``|d^{p,q}k(z) - estimate(z)|`` over the grid points ``z``.

    ``exact`` may carry precomputed oracle values on ``grid.points()``.
    """
    if grid.d != sample.d:
        raise InvalidArgument(f"grid has d={grid.d}, sample has d={sample.d}")
    zs = grid.points()
    if exact is None:
        exact = oracle.derivative_at(p, q, zs)
    return _max_abs_error(sample, p, q, zs, exact)


def _max_abs_error(sample, p, q, zs, exact):
    step = max(1, _BLOCK // sample.m)
    worst = 0.0
    for lo in range(0, zs.shape[0], step):
        est = cosine_estimate(sample, p, q, zs[lo:lo + step])
        worst = max(worst, float(np.max(np.abs(exact[lo:lo + step] - est))))
    return worst


def _run_trials(fn, n, threads):
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def _least_squares_slope(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------


@dataclass
class ErrorStudy:
    measure: SpectralMeasure
    p: tuple
    q: tuple
    grid: GridSpec
    m_values: list
    trials: int
    base_seed: int
    results: list = field(default_factory=list)  # results[i][k]: m_values[i], trial k
    summary: list = field(default_factory=list)
    fitted_rate: float | None = None
    fitted_intercept: float | None = None
    rate_interval: list | None = None
    bootstrap_resamples: int = 0

    kind = "rate_study"


@dataclass
class DiameterStudy:
    measure: SpectralMeasure
    p: tuple
    q: tuple
    m: int
    diameters: list
    points_per_axis: int
    trials: int
    base_seed: int
    results: list = field(default_factory=list)  # results[i][k]: diameters[i], trial k
    medians: list = field(default_factory=list)
    regression: dict | None = None

    kind = "diameter_study"


@dataclass
class BoundValidation:
    measure: SpectralMeasure
    p: tuple
    q: tuple
    grid: GridSpec
    m: int
    t: float
    K: float
    trials: int
    base_seed: int
    bound: BoundReport | None = None
    sup_errors: list = field(default_factory=list)
    violations: int = 0
    violation_fraction: float = 0.0
    allowed_fraction: float = 0.0
    passed: bool = True

    kind = "validation"


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------


def rate_study(measure, p, q, grid, m_values, trials, base_seed=0, threads=None,
               bootstrap=200):
    """Median sup error versus ``m`` and its log-log slope.

    Parameters
    ----------
    measure : SpectralMeasure
    p, q : multi-index
    grid : GridSpec
        Difference grid; ``grid.d`` must equal ``measure.d``.
    m_values : list of int
        At least three distinct feature counts.
    trials : int
        At least 10; trial ``k`` uses seed ``base_seed + k`` for every ``m``.
    base_seed : int
    threads : int, optional
        Worker threads; results do not depend on it.
    bootstrap : int
        Trial-bootstrap resamples for the slope interval.

    Returns
    -------
    ErrorStudy
    """
    p = as_multi_index(p, measure.d)
    q = as_multi_index(q, measure.d)
    m_values = [int(m) for m in m_values]
    if len(set(m_values)) < 3 or min(m_values) < 1:
        raise InvalidArgument(f"need at least three distinct positive m values, got {m_values}")
    if trials < 10:
        raise InvalidArgument(f"need at least 10 trials, got {trials}")
    if grid.d != measure.d:
        raise InvalidArgument(f"grid has d={grid.d}, measure has d={measure.d}")

    zs = grid.points()
    exact = KernelOracle(measure).derivative_at(p, q, zs)

    def one(k):
        seed = base_seed + k
        return [_max_abs_error(sample(measure, m, seed), p, q, zs, exact) for m in m_values]

    per_trial = _run_trials(one, trials, threads)
    errors = np.array(per_trial).T  # (len(m_values), trials)

    summary = []
    for m, row in zip(m_values, errors):
        q25, med, q75 = np.quantile(row, [0.25, 0.5, 0.75])
        summary.append({
            "m": m,
            "median": float(med),
            "q25": float(q25),
            "q75": float(q75),
            "min": float(row.min()),
            "max": float(row.max()),
        })
    log_m = np.log(m_values)
    slope, intercept = _least_squares_slope(log_m, np.log(np.median(errors, axis=1)))

    interval = None
    if bootstrap:
        rng = np.random.default_rng(base_seed)
        slopes = []
        for _ in range(bootstrap):
            idx = rng.integers(0, trials, trials)
            med = np.median(errors[:, idx], axis=1)
            slopes.append(_least_squares_slope(log_m, np.log(med))[0])
        interval = [float(v) for v in np.quantile(slopes, [0.025, 0.975])]

    return ErrorStudy(
        measure=measure, p=p, q=q, grid=grid, m_values=m_values, trials=int(trials),
        base_seed=int(base_seed), results=errors.tolist(), summary=summary,
        fitted_rate=slope, fitted_intercept=intercept, rate_interval=interval,
        bootstrap_resamples=int(bootstrap),
    )


def diameter_study(measure, p, q, m, diameters, trials, base_seed=0, points_per_axis=None,
                   threads=None):
    """Median sup error versus the diameter ``|S|`` at fixed ``m``.

    The error for ``diameters[i]`` is the maximum over the union of the
    grids of ``diameters[0..i]``, so per sample it never decreases with
    ``|S|`` (the sets are nested).  ``regression`` fits
    ``median^2 * m = slope * ln|S| + intercept`` over the diameters above 1.
    """
    p = as_multi_index(p, measure.d)
    q = as_multi_index(q, measure.d)
    diameters = [float(v) for v in diameters]
    if not diameters or any(b <= a for a, b in zip(diameters, diameters[1:])):
        raise InvalidArgument(f"diameters must be strictly increasing, got {diameters}")
    grids = [GridSpec(dm, points_per_axis, measure.d) for dm in diameters]
    oracle = KernelOracle(measure)
    pts = [g.points() for g in grids]
    exact = [oracle.derivative_at(p, q, z) for z in pts]

    def one(k):
        smp = sample(measure, m, base_seed + k)
        own = [_max_abs_error(smp, p, q, z, ex) for z, ex in zip(pts, exact)]
        return np.maximum.accumulate(own).tolist()

    errors = np.array(_run_trials(one, trials, threads)).T
    medians = [float(v) for v in np.median(errors, axis=1)]

    regression = None
    large = [(math.log(dm), med * med * m) for dm, med in zip(diameters, medians) if dm > 1]
    if len(large) >= 2:
        slope, intercept = _least_squares_slope(*zip(*large))
        regression = {"slope": slope, "intercept": intercept, "n_points": len(large)}

    return DiameterStudy(
        measure=measure, p=p, q=q, m=int(m), diameters=diameters,
        points_per_axis=grids[-1].points_per_axis, trials=int(trials),
        base_seed=int(base_seed), results=errors.tolist(), medians=medians,
        regression=regression,
    )


def resolve_K(measure, p, q, K=None, n_max=50):
    """Bernstein constant for ``(p, q)``: check a supplied one or look one up.

    Raises :class:`PreconditionFailure` when no constant can be certified.
    """
    p = as_multi_index(p, measure.d)
    q = as_multi_index(q, measure.d)
    r = order(p) + order(q)
    if K is None:
        K = certified_K(measure, p, q, n_max)
        if K is None:
            raise PreconditionFailure(
                f"no certified Bernstein constant for order {r} under {measure.to_json()}"
            )
        return K
    if not K >= 1:
        raise InvalidArgument(f"K must be >= 1, got {K}")
    if r == 0:
        return float(K)
    if measure.d != 1:
        raise PreconditionFailure("Bernstein certification is only available for d = 1")
    report = bernstein_check(measure, r, K, n_max)
    if not report.passed:
        raise PreconditionFailure(
            f"K={K} violates the Bernstein condition for order {r} at n={report.first_violating_n}"
        )
    return float(K)


def validate_bound(measure, p, q, grid, m, t, trials, K=None, base_seed=0, threads=None):
    """Fraction of trials whose sup error exceeds the uniform bound.

    The bound is evaluated for the set ``[0, |S|]^d``, whose difference set
    is the grid cube; its diameter is ``sqrt(d) * |S|``.  The check passes
    when the violation fraction is at most ``2 e^-t`` plus three binomial
    standard deviations.
    """
    p = as_multi_index(p, measure.d)
    q = as_multi_index(q, measure.d)
    if trials < 50:
        raise InvalidArgument(f"need at least 50 trials, got {trials}")
    if grid.d != measure.d:
        raise InvalidArgument(f"grid has d={grid.d}, measure has d={measure.d}")
    K = resolve_K(measure, p, q, K)
    inputs = BoundInputs(
        m=int(m),
        diameter=math.sqrt(grid.d) * grid.diameter,
        d=grid.d,
        sigma_pq=sigma_pq(measure, p, q),
        c_pq=c_pq(measure, p, q),
        K=K,
        t=float(t),
    )
    report = uniform_bound(inputs)

    zs = grid.points()
    exact = KernelOracle(measure).derivative_at(p, q, zs)

    def one(k):
        return _max_abs_error(sample(measure, m, base_seed + k), p, q, zs, exact)

    errs = _run_trials(one, trials, threads)
    violations = sum(e > report.total for e in errs)
    nominal = report.failure_probability
    allowed = nominal + 3.0 * math.sqrt(nominal * (1.0 - nominal) / trials)
    fraction = violations / trials
    return BoundValidation(
        measure=measure, p=p, q=q, grid=grid, m=int(m), t=float(t), K=float(K),
        trials=int(trials), base_seed=int(base_seed), bound=report, sup_errors=errs,
        violations=int(violations), violation_fraction=fraction,
        allowed_fraction=allowed, passed=fraction <= allowed,
    )


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

_RECORD_TYPES = {cls.kind: cls for cls in (ErrorStudy, DiameterStudy, BoundValidation)}


def record_to_dict(record):
    out = {"schema_version": SCHEMA_VERSION, "kind": record.kind}
    for name in record.__dataclass_fields__:
        value = getattr(record, name)
        if isinstance(value, (SpectralMeasure, GridSpec, BoundReport)):
            value = value.to_dict()
        elif isinstance(value, tuple):
            value = list(value)
        out[name] = value
    return out


def dumps(record):
    return json.dumps(record_to_dict(record), sort_keys=True, indent=2) + "\n"


def record_from_dict(obj):
    if not isinstance(obj, dict):
        raise ParseError("record must be a JSON object")
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}",
                         field="schema_version")
    kind = obj.get("kind")
    cls = _RECORD_TYPES.get(kind)
    if cls is None:
        raise ParseError(f"unknown record kind {kind!r}", field="kind")
    kwargs = {}
    for name, fld in cls.__dataclass_fields__.items():
        if name not in obj:
            raise ParseError("missing field", field=name)
        value = obj[name]
        try:
            if name == "measure":
                value = SpectralMeasure.from_dict(value)
            elif name == "grid":
                value = GridSpec(**value)
            elif name == "bound" and value is not None:
                value = BoundReport(**value)
            elif name in ("p", "q"):
                value = tuple(int(v) for v in value)
        except (TypeError, ValueError, KeyError) as exc:
            raise ParseError(f"invalid value: {exc}", field=name) from exc
        kwargs[name] = value
    return cls(**kwargs)


def loads(text):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc.msg}", line=exc.lineno) from exc
    return record_from_dict(obj)


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def persist(record, path):
    atomic_write(path, dumps(record))


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def to_csv(record):
    """Flat per-trial export of a study record."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if isinstance(record, ErrorStudy):
        writer.writerow(["m", "trial", "seed", "sup_error"])
        for m, row in zip(record.m_values, record.results):
            for k, err in enumerate(row):
                writer.writerow([m, k, record.base_seed + k, repr(float(err))])
    elif isinstance(record, DiameterStudy):
        writer.writerow(["diameter", "m", "trial", "sup_error"])
        for dm, row in zip(record.diameters, record.results):
            for k, err in enumerate(row):
                writer.writerow([repr(dm), record.m, k, repr(float(err))])
    elif isinstance(record, BoundValidation):
        writer.writerow(["trial", "sup_error", "bound", "violated"])
        for k, err in enumerate(record.sup_errors):
            writer.writerow([k, repr(float(err)), repr(record.bound.total),
                             int(err > record.bound.total)])
    else:
        raise InvalidArgument(f"no CSV layout for {type(record).__name__}")
    return buf.getvalue()


__all__ = [
    "SCHEMA_VERSION",
    "GridSpec",
    "ErrorStudy",
    "DiameterStudy",
    "BoundValidation",
    "sup_error",
    "rate_study",
    "diameter_study",
    "resolve_K",
    "validate_bound",
    "record_to_dict",
    "record_from_dict",
    "dumps",
    "loads",
    "persist",
    "load",
    "to_csv",
    "atomic_write",
    "default_threads",
]
