"""JSON scenario configuration.

Schema (defaults in brackets)::

    {
      "name": str                               [file stem]
      "model": {"name": catalog name, "params": {...} [{}]},
      "prior": {"type": "discrete",
                "atoms": [[x...], ...] | [{classical params}, ...],
                "weights": [...]                [uniform]}
             | {"type": "continuous", "density": normal|gamma|uniform|lognormal|mvnormal,
                "params": {...}, "nodes": int [64], "box": [[lo, hi], ...] [tail 1e-12]},
      "u_map": "identity" | {"type": power|component|affine|outer_power, ...}   ["identity"],
      "grid": {"min": a, "max": b, "count": n} | {"min", "max", "step"} | {"points": [...]},
      "fd_policy": {"scheme": central-2|central-4|richardson ["richardson"],
                    "h0": float [scheme default], "sing_margin": float [1e-4]},
      "tolerances": {identity label or name: float}   [by derivative depth],
      "identities": ["Variance", "MomentRecursion(2)", ...]   [full suite],
      "eb": {"n": int [100000], "seed": int [1], "ell_max": int [1],
             "bandwidth": "silverman" | float ["silverman"],
             "grid": grid spec [top-level grid],
             "thresholds": {"mae_kde": {"1": 0.05}, "mae_exact_marginal": {...}}}
    }

Classical atoms are mapped through the model's ``to_natural``.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calculus import FdPolicy
from .engine import Grid
from .errors import ConfigError
from .identities import IdentityKind
from .measures import DiscretePrior, Scenario, WeightedMeasure, continuous_prior, make_u_map
from .models import CATALOG, make_model

__all__ = ["RunConfig", "load_config", "parse_config", "EB_DEFAULTS"]

EB_DEFAULTS = {"n": 100000, "seed": 1, "ell_max": 1, "bandwidth": "silverman"}

_TOP_KEYS = {"name", "model", "prior", "u_map", "grid", "fd_policy", "tolerances", "identities", "eb", "description"}


@dataclass
class RunConfig:
    """A parsed configuration document."""

    name: str
    model_spec: dict
    prior_spec: dict
    u_map_spec: object
    grid: Grid
    policy: FdPolicy
    policy_spec: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    identities: list | None = None
    eb: dict = field(default_factory=dict)
    source: str = "<config>"

    def scenario(self, paper_erratum=False):
        """Build the scenario, optionally with the printed Wishart Jacobian."""
        params = dict(self.model_spec.get("params", {}))
        if paper_erratum:
            if self.model_spec["name"] not in ("Wishart", "GammaShapeRate"):
                raise ConfigError(f"{self.source}: --paper-erratum-mode applies only to Wishart and GammaShapeRate models")
            params["paper_erratum"] = True
        model = _build(self.source, "model.params", lambda: make_model(self.model_spec["name"], **params))
        prior = _prior(self.source, self.prior_spec, model)
        u_map = _build(self.source, "u_map", lambda: make_u_map(self.u_map_spec))
        scenario = Scenario(model, prior, u_map, self.name)
        _build(self.source, "prior", lambda: scenario.prior_measure)
        _build(self.source, "grid", lambda: self.grid.check_support(model))
        return scenario

    def eb_grid(self):
        spec = self.eb.get("grid")
        return self.grid if spec is None else _grid(self.source, spec, "eb.grid")


def _fail(source, where, msg):
    raise ConfigError(f"{source}: field '{where}': {msg}")


def _build(source, where, thunk):
    try:
        return thunk()
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError, np.linalg.LinAlgError) as exc:
        _fail(source, where, f"{type(exc).__name__}: {exc}")


def _require(source, obj, key, where, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        _fail(source, f"{where}.{key}" if where else key, "missing required field")
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        _fail(source, f"{where}.{key}" if where else key, f"expected {getattr(kind, '__name__', kind)}, got {type(val).__name__}")
    return val


def _check_keys(source, obj, allowed, where):
    if not isinstance(obj, dict):
        _fail(source, where, f"expected an object, got {type(obj).__name__}")
    extra = sorted(set(obj) - set(allowed))
    if extra:
        _fail(source, f"{where}.{extra[0]}" if where else extra[0], f"unknown field; allowed: {sorted(allowed)}")


def _grid(source, spec, where="grid"):
    _check_keys(source, spec, {"min", "max", "count", "step", "points"}, where)
    if "points" in spec:
        return _build(source, f"{where}.points", lambda: Grid(np.asarray(spec["points"], dtype=float)))
    lo = _require(source, spec, "min", where, (int, float))
    hi = _require(source, spec, "max", where, (int, float))
    if not hi > lo:
        _fail(source, f"{where}.max", "must exceed min")
    if "count" in spec:
        count = _require(source, spec, "count", where, int)
        if count < 1:
            _fail(source, f"{where}.count", "must be positive")
        return Grid.uniform(lo, hi, count)
    step = _require(source, spec, "step", where, (int, float))
    if not step > 0:
        _fail(source, f"{where}.step", "must be positive")
    return Grid.stepped(lo, hi, step)


def _prior(source, spec, model):
    kind = _require(source, spec, "type", "prior", str)
    if kind == "discrete":
        _check_keys(source, spec, {"type", "atoms", "weights", "description"}, "prior")
        atoms_raw = _require(source, spec, "atoms", "prior", list)
        if not atoms_raw:
            _fail(source, "prior.atoms", "needs at least one atom")
        atoms = []
        for i, a in enumerate(atoms_raw):
            where = f"prior.atoms[{i}]"
            if isinstance(a, dict):
                atoms.append(_build(source, where, lambda a=a: np.asarray(model.to_natural(**a), dtype=float)))
            else:
                atoms.append(_build(source, where, lambda a=a: np.atleast_1d(np.asarray(a, dtype=float))))
            if atoms[-1].shape != (model.dim_param,):
                _fail(source, where, f"natural parameter must have length {model.dim_param}, got {atoms[-1].shape}")
        weights = spec.get("weights", [1.0] * len(atoms))
        if len(weights) != len(atoms):
            _fail(source, "prior.weights", f"expected {len(atoms)} weights, got {len(weights)}")
        measure = _build(source, "prior.weights", lambda: WeightedMeasure.from_unnormalized(np.array(atoms), weights))
        return DiscretePrior(measure, {"type": "discrete"})
    if kind == "continuous":
        _check_keys(source, spec, {"type", "density", "params", "nodes", "box", "description"}, "prior")
        density = _require(source, spec, "density", "prior", str)
        nodes = spec.get("nodes", 64)
        if not isinstance(nodes, int) or nodes < 2:
            _fail(source, "prior.nodes", "must be an integer >= 2")
        return _build(source, "prior", lambda: continuous_prior(density, spec.get("params", {}), nodes, spec.get("box")))
    _fail(source, "prior.type", f"expected 'discrete' or 'continuous', got {kind!r}")


def _policy(source, spec):
    _check_keys(source, spec, {"scheme", "h0", "sing_margin", "shrink"}, "fd_policy")
    return _build(source, "fd_policy", lambda: FdPolicy(**spec))


def parse_config(doc, source="<config>", name=None):
    """Validate a decoded JSON document and return a :class:`RunConfig`."""
    _check_keys(source, doc, _TOP_KEYS, "")
    model_spec = _require(source, doc, "model", "", dict)
    _check_keys(source, model_spec, {"name", "params"}, "model")
    model_name = _require(source, model_spec, "name", "model", str)
    if model_name not in CATALOG:
        _fail(source, "model.name", f"unknown model {model_name!r}; catalog: {sorted(CATALOG)}")
    if not isinstance(model_spec.get("params", {}), dict):
        _fail(source, "model.params", "expected an object")
    prior_spec = _require(source, doc, "prior", "", dict)
    grid = _grid(source, _require(source, doc, "grid", "", dict))
    policy = _policy(source, doc.get("fd_policy", {}))
    tolerances = doc.get("tolerances", {})
    if not isinstance(tolerances, dict) or not all(isinstance(v, (int, float)) and v > 0 for v in tolerances.values()):
        _fail(source, "tolerances", "expected an object of positive numbers")
    identities = doc.get("identities")
    if identities is not None:
        if not isinstance(identities, list):
            _fail(source, "identities", "expected a list of identity labels")
        identities = [_build(source, f"identities[{i}]", lambda t=t: IdentityKind.parse(t)) for i, t in enumerate(identities)]
    eb = doc.get("eb", {})
    _check_keys(source, eb, {"n", "seed", "ell_max", "bandwidth", "grid", "thresholds"}, "eb")
    eb = {**EB_DEFAULTS, **eb}
    cfg = RunConfig(
        name=doc.get("name", name or "scenario"),
        model_spec={"name": model_name, "params": dict(model_spec.get("params", {}))},
        prior_spec=prior_spec,
        u_map_spec=doc.get("u_map", "identity"),
        grid=grid,
        policy=policy,
        policy_spec=dict(doc.get("fd_policy", {})),
        tolerances=dict(tolerances),
        identities=identities,
        eb=eb,
        source=source,
    )
    # build once so that prior/u_map/grid errors surface at load time
    cfg.scenario()
    if "grid" in doc.get("eb", {}):
        cfg.eb_grid()
    return cfg


def load_config(path):
    """Read and validate a configuration file.

    Raises
    ------
    ConfigError
        With the path, and the line and column for JSON syntax errors or the
        dotted field name for schema errors.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    return parse_config(doc, str(path), path.stem)
