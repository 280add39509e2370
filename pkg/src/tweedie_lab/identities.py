"""Verification suite for the conditional-expectation identities.

Each :class:`IdentityKind` pairs two computation routes that never share
code: one side is a finite-difference derivative of a posterior functional,
the other a covariance, a quadrature or a recursion.  :func:`verify`
evaluates both sides on a grid and returns an :class:`IdentityReport`.
"""

import csv
import io
import json
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .calculus import FdPolicy, antiderivative_weighted, d_operator, hessian_fd, jacobian_fd
from .engine import (
    conditional_cgf,
    conditional_cumulant,
    conditional_expectation,
    conditional_moment,
    mmse,
    posterior_mean,
    posterior_variance,
    tilted_cumulant,
)
from .errors import NearSingularStatistic, ShapeMismatch, TweedieLabError
from .measures import cov, expect, log_marginal_density, posterior
from .models import conditional_score

__all__ = [
    "KIND_NAMES",
    "IdentityKind",
    "IdentityReport",
    "default_suite",
    "default_tolerance",
    "verify",
    "verify_all",
    "thread_count",
]

KIND_NAMES = (
    "JacobianGeneral",
    "JacobianExpFam",
    "Variance",
    "MmseRepresentation",
    "Tweedie",
    "MomentRecursion",
    "SolvedRecursion",
    "HigherOrderTweedie",
    "CumulantPde",
    "CumulantFromCE",
    "CumulantRecursion",
    "CumulantFromMarginal",
    "ScoreTower",
    "LogPartitionMeanVar",
)

_ORDERED = {
    "MomentRecursion",
    "SolvedRecursion",
    "HigherOrderTweedie",
    "CumulantFromCE",
    "CumulantRecursion",
    "CumulantFromMarginal",
    "CumulantPde",
}
_SCALAR_ONLY = _ORDERED
_ELL_MIN = {"CumulantFromCE": 1, "CumulantFromMarginal": 1, "CumulantPde": 1}
_ELL_MAX = 5

# t-values and number of grid points for the cumulant PDE check
PDE_T_VALUES = (-0.5, 0.0, 0.5)
PDE_GRID_POINTS = 5
# parameter points for the log-partition check
LOG_PARTITION_POINTS = 5


@dataclass(frozen=True)
class IdentityKind:
    """An identity, optionally indexed by an order ``ell`` (and an anchor)."""

    name: str
    ell: int | None = None
    anchor: float | None = None

    def __post_init__(self):
        if self.name not in KIND_NAMES:
            raise ValueError(f"unknown identity {self.name!r}; choose from {KIND_NAMES}")
        if self.name in _ORDERED:
            ell = 1 if self.ell is None and self.name == "CumulantPde" else self.ell
            if ell is None:
                raise ValueError(f"{self.name} needs an order, e.g. {self.name}(1)")
            lo = _ELL_MIN.get(self.name, 1)
            if not lo <= int(ell) <= _ELL_MAX:
                raise ValueError(f"{self.name} order must be in [{lo}, {_ELL_MAX}]")
            object.__setattr__(self, "ell", int(ell))
        elif self.ell is not None:
            raise ValueError(f"{self.name} takes no order")
        if self.anchor is not None and self.name != "SolvedRecursion":
            raise ValueError("only SolvedRecursion takes an anchor")

    @property
    def label(self):
        if self.ell is None:
            return self.name
        if self.anchor is not None:
            return f"{self.name}({self.ell}, a={self.anchor!r})"
        return f"{self.name}({self.ell})"

    def __str__(self):
        return self.label

    @classmethod
    def parse(cls, text):
        """Parse ``"Variance"``, ``"MomentRecursion(2)"`` or ``"SolvedRecursion(1, 0.5)"``."""
        m = re.fullmatch(r"\s*(\w+)\s*(?:\(\s*([^,()]+?)\s*(?:,\s*(?:a\s*=\s*)?([^()]+?)\s*)?\))?\s*", text)
        if not m:
            raise ValueError(f"cannot parse identity {text!r}")
        name, ell, anchor = m.groups()
        return cls(name, int(ell) if ell is not None else None, float(anchor) if anchor is not None else None)

    @property
    def fd_depth(self):
        """Number of stacked finite-difference derivatives in the check."""
        n = self.name
        if n in ("SolvedRecursion", "HigherOrderTweedie"):
            return self.ell + 1
        if n == "CumulantFromCE":
            return self.ell - 1
        if n == "CumulantFromMarginal":
            return self.ell
        if n == "LogPartitionMeanVar":
            return 2
        return 1


# identities whose residual carries more than one source of numerical error
_FLOOR_1E4 = {"MomentRecursion", "CumulantRecursion", "CumulantPde", "MmseRepresentation"}


def default_tolerance(kind):
    """``1e-6`` for one derivative, ``1e-4`` for two, ``1e-3`` for three or more."""
    depth = kind.fd_depth
    tol = 1e-6 if depth <= 1 else 1e-4 if depth == 2 else 1e-3
    if kind.name in _FLOOR_1E4:
        tol = max(tol, 1e-4)
    return tol


def default_suite():
    """Identity kinds run by :func:`verify_all`, in report order."""
    kinds = [IdentityKind(n) for n in ("JacobianGeneral", "JacobianExpFam", "Variance", "MmseRepresentation", "Tweedie", "ScoreTower", "LogPartitionMeanVar")]
    kinds += [IdentityKind("MomentRecursion", ell) for ell in (1, 2, 3)]
    kinds += [IdentityKind("SolvedRecursion", ell) for ell in (1, 2)]
    kinds += [IdentityKind("HigherOrderTweedie", ell) for ell in (1, 2)]
    kinds += [IdentityKind("CumulantPde", 1)]
    kinds += [IdentityKind("CumulantFromCE", ell) for ell in (2, 3)]
    kinds += [IdentityKind("CumulantRecursion", ell) for ell in (1, 2, 3)]
    kinds += [IdentityKind("CumulantFromMarginal", ell) for ell in (1, 2, 3)]
    return kinds


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


def _clean(v):
    if v is None:
        return None
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(a) for a in np.asarray(v, dtype=float).ravel()]
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass
class IdentityReport:
    """Per-point sides and residuals of one identity on one scenario."""

    kind: str
    scenario: str
    tolerance: float
    points: list = field(default_factory=list)
    lhs: list = field(default_factory=list)
    rhs: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    excluded: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    fd_error: list = field(default_factory=list)
    policy: dict = field(default_factory=dict)
    skipped: str | None = None

    @property
    def max_residual(self):
        vals = [r for r in self.residual if r is not None]
        return max(vals) if vals else math.nan

    @property
    def passed(self):
        """True iff every non-excluded point has a finite residual within tolerance."""
        if self.skipped is not None:
            return None
        if self.errors or not self.residual:
            return False
        return all(r is not None and r <= self.tolerance for r in self.residual)

    @property
    def status(self):
        return "skipped" if self.skipped is not None else ("pass" if self.passed else "fail")

    def summary(self):
        if self.skipped is not None:
            return f"SKIP {self.kind} [{self.scenario}]: {self.skipped}"
        return (
            f"{self.status.upper()} {self.kind} [{self.scenario}]: max residual {self.max_residual:.3e} "
            f"(tol {self.tolerance:.0e}, {len(self.residual)} points, {len(self.excluded)} excluded, {len(self.errors)} errors)"
        )

    def to_dict(self):
        return {
            "kind": self.kind,
            "scenario": self.scenario,
            "tolerance": self.tolerance,
            "points": [_clean(p) for p in self.points],
            "lhs": [_clean(v) for v in self.lhs],
            "rhs": [_clean(v) for v in self.rhs],
            "residual": [_clean(r) for r in self.residual],
            "excluded": [_clean(p) for p in self.excluded],
            "errors": list(self.errors),
            "fd_error": [_clean(e) for e in self.fd_error],
            "policy": dict(self.policy),
            "skipped": self.skipped,
            "pass": self.passed,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=False)

    def csv_rows(self):
        """Flat rows ``kind, scenario, point, component, lhs, rhs, residual, tolerance, pass``."""
        rows = []
        for p, lv, rv, res in zip(self.points, self.lhs, self.rhs, self.residual):
            pt = " ".join(repr(float(a)) for a in np.ravel(p))
            for j, (a, b) in enumerate(zip(np.ravel(lv), np.ravel(rv))):
                rows.append([self.kind, self.scenario, pt, j, repr(float(a)), repr(float(b)), repr(res), self.tolerance, self.status])
        for p in self.excluded:
            rows.append([self.kind, self.scenario, " ".join(repr(float(a)) for a in np.ravel(p)), "", "", "", "", self.tolerance, "excluded"])
        if self.skipped is not None:
            rows.append([self.kind, self.scenario, "", "", "", "", "", self.tolerance, "skipped"])
        return rows


CSV_HEADER = ["kind", "scenario", "point", "component", "lhs", "rhs", "residual", "tolerance", "status"]


def reports_to_csv(reports):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in reports:
        writer.writerows(r.csv_rows())
    return buf.getvalue()


def reports_to_json(reports):
    return json.dumps([r.to_dict() for r in reports], indent=2)


# --------------------------------------------------------------------------
# parallel map
# --------------------------------------------------------------------------


def thread_count():
    """Worker count from ``TWEEDIE_LAB_THREADS`` (default 1)."""
    raw = os.environ.get("TWEEDIE_LAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map(fn, items):
    n = thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# routes
# --------------------------------------------------------------------------


class _Ctx:
    def __init__(self, scenario, policy, kind, grid):
        self.s = scenario
        self.m = scenario.model
        self.policy = policy
        self.kind = kind
        self.inside = self.m.support_predicate()
        self.anchor = kind.anchor
        if kind.name == "SolvedRecursion" and self.anchor is None:
            pts = grid.points[:, 0]
            self.anchor = float(0.5 * (pts[0] + pts[-1]))

    def jac(self, f, y):
        jac, err = jacobian_fd(f, y, self.policy, support=self.inside, return_error=True)
        return jac, err

    def log_ratio(self, y0):
        # log(f_Y / h), shifted to vanish at y0 to keep exp() well scaled
        m, s = self.m, self.s
        c = log_marginal_density(s, y0) - m.log_base_measure(m.as_obs(y0))
        return lambda z: log_marginal_density(s, z) - m.log_base_measure(m.as_obs(z)) - c

    def d(self, f, ell, y):
        return d_operator(f, self.m, ell, float(y[0]), self.policy)

    def moment(self, ell):
        return lambda z: conditional_moment(self.s, ell, z)


def _route_jacobian_general(c, y):
    lhs, err = c.jac(lambda z: conditional_expectation(c.s, z), y)
    post = posterior(c.s, y)
    rhs = cov(post, lambda xs: conditional_score(c.m, xs, y), c.s.u_map)
    return lhs, rhs, err


def _route_jacobian_expfam(c, y):
    lhs, err = c.jac(lambda z: conditional_expectation(c.s, z), y)
    post = posterior(c.s, y)
    rhs = c.m.stat_jacobian(y) @ cov(post, lambda xs: xs, c.s.u_map)
    return lhs, rhs, err


def _route_variance(c, y):
    lhs, err = c.jac(lambda z: posterior_mean(c.s, z), y)
    rhs = c.m.stat_jacobian(y) @ posterior_variance(c.s, y)
    return lhs, rhs, err


def _route_tweedie(c, y):
    lhs = c.m.stat_jacobian(y) @ posterior_mean(c.s, y)
    ratio = c.log_ratio(y)
    rhs, err = c.jac(lambda z: np.array([ratio(z)]), y)
    return lhs, rhs[:, 0], err[:, 0]


def _route_score_tower(c, y):
    lhs, err = c.jac(lambda z: np.array([log_marginal_density(c.s, z)]), y)
    rhs = expect(posterior(c.s, y), lambda xs: conditional_score(c.m, xs, y))
    return lhs[:, 0], rhs, err[:, 0]


def _route_moment_recursion(c, y):
    ell = c.kind.ell
    lhs = conditional_moment(c.s, ell + 1, y)
    rhs = c.d(c.moment(ell), 1, y) + conditional_moment(c.s, 1, y) * conditional_moment(c.s, ell, y)
    return lhs, rhs, None


def _route_solved_recursion(c, y):
    ell, a, m = c.kind.ell, c.anchor, c.m
    mean = lambda u: posterior_mean(c.s, u)[0]  # noqa: E731
    base = antiderivative_weighted(mean, a, float(y[0]), m)
    # e^{-I(y)} D^{(ell+1)} e^{I}: evaluate e^{I(z) - I(y)} so the prefactor is 1
    g = lambda z: math.exp(antiderivative_weighted(mean, a, z, m) - base)  # noqa: E731
    lhs = conditional_moment(c.s, ell + 1, y)
    rhs = c.d(g, ell + 1, y)
    return lhs, rhs, None


def _route_higher_order_tweedie(c, y):
    ell = c.kind.ell
    ratio = c.log_ratio(y)
    lhs = conditional_moment(c.s, ell + 1, y)
    rhs = c.d(lambda z: math.exp(ratio(z)), ell + 1, y)
    return lhs, rhs, None


def _route_cumulant_from_ce(c, y):
    ell = c.kind.ell
    lhs = conditional_cumulant(c.s, ell, y)
    rhs = c.d(lambda z: posterior_mean(c.s, z)[0], ell - 1, y)
    return lhs, rhs, None


def _route_cumulant_recursion(c, y):
    ell = c.kind.ell
    lhs = conditional_cumulant(c.s, ell + 1, y)
    rhs = c.d(lambda z: conditional_cumulant(c.s, ell, z), 1, y)
    return lhs, rhs, None


def _route_cumulant_from_marginal(c, y):
    ell = c.kind.ell
    lhs = conditional_cumulant(c.s, ell, y)
    rhs = c.d(c.log_ratio(y), ell, y)
    return lhs, rhs, None


def _route_cumulant_pde(c, point):
    y, t = point[:1], float(point[1])
    ell = c.kind.ell
    lhs = tilted_cumulant(c.s, ell, t, y)
    rhs = c.d(lambda z: conditional_cgf(c.s, t, z), ell, y) + c.d(lambda z: posterior_mean(c.s, z)[0], ell - 1, y)
    return lhs, rhs, None


_GRID_ROUTES = {
    "JacobianGeneral": _route_jacobian_general,
    "JacobianExpFam": _route_jacobian_expfam,
    "Variance": _route_variance,
    "Tweedie": _route_tweedie,
    "ScoreTower": _route_score_tower,
    "MomentRecursion": _route_moment_recursion,
    "SolvedRecursion": _route_solved_recursion,
    "HigherOrderTweedie": _route_higher_order_tweedie,
    "CumulantFromCE": _route_cumulant_from_ce,
    "CumulantRecursion": _route_cumulant_recursion,
    "CumulantFromMarginal": _route_cumulant_from_marginal,
    "CumulantPde": _route_cumulant_pde,
}


def _log_partition_points(scenario):
    measure = scenario.prior_measure
    atoms, w = measure.atoms, measure.weights
    if len(atoms) <= LOG_PARTITION_POINTS:
        return atoms
    if atoms.shape[1] == 1:
        order = np.argsort(atoms[:, 0], kind="stable")
        cdf = np.cumsum(w[order])
        qs = np.linspace(0.1, 0.9, LOG_PARTITION_POINTS)
        idx = order[np.minimum(np.searchsorted(cdf, qs), len(order) - 1)]
        return atoms[np.unique(idx)]
    idx = np.argsort(-w, kind="stable")[:LOG_PARTITION_POINTS]
    return atoms[np.sort(idx)]


def _route_log_partition(c, x):
    m = c.m
    ys, ws = m.obs_rule(x)
    lik = np.exp(np.array([m.log_likelihood(x, yy)[()] for yy in ys]))
    p = ws * lik
    stats_ = np.array([m.sufficient_stat(yy) for yy in ys])
    mean_t = p @ stats_
    centered = stats_ - mean_t
    var_t = (centered * p[:, None]).T @ centered
    dom = lambda z: bool(np.all(m.param_in_domain(z)))  # noqa: E731
    phi = lambda z: np.array([float(m.log_partition(z))])  # noqa: E731
    grad, err = jacobian_fd(phi, x, c.policy, support=dom, return_error=True)
    hess = hessian_fd(lambda z: float(m.log_partition(z)), x, c.policy)
    lhs = np.concatenate([mean_t, var_t.ravel()])
    rhs = np.concatenate([grad[:, 0], hess.ravel()])
    return lhs, rhs, np.concatenate([err[:, 0], np.full(hess.size, np.nan)])


def _check_shape(kind, scenario):
    m = scenario.model
    if kind.name in _SCALAR_ONLY and not m.is_scalar:
        return f"{kind.name} needs a scalar parameter, a scalar observation and T' derivatives"
    if kind.name == "MmseRepresentation" and m.dim_obs != m.dim_param:
        return f"MmseRepresentation needs dim(Y) = dim(X), got {m.dim_obs} and {m.dim_param}"
    return None


def _points_for(kind, grid):
    if kind.name == "CumulantPde":
        idx = np.unique(np.round(np.linspace(0, len(grid) - 1, min(PDE_GRID_POINTS, len(grid)))).astype(int))
        return [np.array([grid.points[i, 0], t]) for i in idx for t in PDE_T_VALUES]
    return list(grid.points)


def verify(kind, scenario, grid, policy=None, tol=None):
    """Check one identity on every grid point.

    Parameters
    ----------
    kind : IdentityKind or str
    scenario : Scenario
    grid : Grid
    policy : FdPolicy, optional
    tol : float, optional
        Defaults to :func:`default_tolerance`.

    Returns
    -------
    IdentityReport
        Points where ``|T'|`` falls below the singularity margin are listed as
        excluded.  Other numerical errors are recorded per point and make the
        report fail.

    Raises
    ------
    ShapeMismatch
        If the scenario does not fit the identity or the grid dimension
        differs from the observation dimension.
    """
    if isinstance(kind, str):
        kind = IdentityKind.parse(kind)
    policy = policy or FdPolicy()
    tol = default_tolerance(kind) if tol is None else float(tol)
    reason = _check_shape(kind, scenario)
    if reason is not None:
        raise ShapeMismatch(reason)
    if grid.dim != scenario.model.dim_obs:
        raise ShapeMismatch(f"grid points have dimension {grid.dim}, observations of {scenario.model.name} have {scenario.model.dim_obs}")
    report = IdentityReport(kind.label, scenario.name, tol, policy=policy.to_dict())

    if kind.name == "MmseRepresentation":
        try:
            res = mmse(scenario, policy=policy)
        except TweedieLabError as exc:
            report.errors.append({"point": None, "error": f"{type(exc).__name__}: {exc}"})
            return report
        report.points.append([])
        report.lhs.append(res.posterior_variance.ravel())
        report.rhs.append(res.jacobian_form.ravel())
        report.residual.append(float(np.max(np.abs(res.difference))))
        return report

    if kind.name == "LogPartitionMeanVar":
        route, points = _route_log_partition, list(_log_partition_points(scenario))
    else:
        route, points = _GRID_ROUTES[kind.name], _points_for(kind, grid)
    ctx = _Ctx(scenario, policy, kind, grid)

    def run(point):
        try:
            lhs, rhs, err = route(ctx, np.asarray(point, dtype=float))
        except NearSingularStatistic:
            return "excluded", None
        except (TweedieLabError, ArithmeticError, ValueError) as exc:
            return "error", f"{type(exc).__name__}: {exc}"
        return "ok", (np.atleast_1d(np.asarray(lhs, dtype=float)), np.atleast_1d(np.asarray(rhs, dtype=float)), err)

    for point, (status, payload) in zip(points, _map(run, points)):
        point = np.asarray(point, dtype=float)
        if status == "excluded":
            report.excluded.append(point)
        elif status == "error":
            report.errors.append({"point": _clean(point), "error": payload})
        else:
            lhs, rhs, err = payload
            diff = np.abs(lhs - rhs).ravel()
            report.points.append(point)
            report.lhs.append(lhs.ravel())
            report.rhs.append(rhs.ravel())
            report.residual.append(float(np.max(diff)) if np.all(np.isfinite(diff)) else None)
            report.fd_error.append(None if err is None else np.asarray(err, dtype=float).ravel())
    return report


def verify_all(scenario, grid, policy=None, kinds=None, tolerances=None):
    """Run every compatible identity; incompatible ones become skipped reports.

    ``tolerances`` optionally maps identity labels or names to tolerances.
    """
    tolerances = tolerances or {}
    reports = []
    for kind in kinds or default_suite():
        tol = tolerances.get(kind.label, tolerances.get(kind.name))
        reason = _check_shape(kind, scenario)
        if reason is not None:
            t = default_tolerance(kind) if tol is None else float(tol)
            reports.append(IdentityReport(kind.label, scenario.name, t, skipped=reason))
            continue
        reports.append(verify(kind, scenario, grid, policy, tol))
    return reports
