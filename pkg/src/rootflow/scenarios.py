"""Declarative scenarios: configuration, the built-in registry and the runner.

A scenario names a manifold, a target map, where its root system comes from,
the grid to check on, tolerances and the checks to run. Configs are TOML
files; the built-ins are the same structure as Python dictionaries.
"""
import copy
import math
import platform
import re
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import tomli

from . import __version__
from . import quaternion as quat
from .diffeo import (
    CircleReflection,
    CircleRotation,
    FlowTime,
    Identity,
    QuatConjugation,
    QuatLeftMult,
    TorusTranslation,
    orientation_class,
    sup_distance,
)
from .fields import CircleFourier, ConstantCircle, LeftInvariantS3, TorusConstant, recognize_field
from .flow import (
    ConvergenceError,
    FlowApprox,
    RoundTripSettings,
    export_field_csv,
    export_trajectory_csv,
    extract_field,
    extract_field_grid,
    extraction_grid,
    round_trip_check,
    trajectory,
    verify_eval_real,
    verify_flow_axioms,
)
from .functional_root import RootSolveError, SqrtSettings
from .manifold import Circle, CutLocusError, Sphere3, manifold_from_name
from .report import ReportEntry, failed_entry, to_jsonable
from .rootsystem import (
    quat_sqrt_chain,
    identity_family,
    roots_from_field,
    rotation_family,
    solve_sqrt_chain,
    verify_root_system,
)
from .symmetry import (
    IntertwineCase,
    check_intertwine,
    conjugating_rotor,
    flow_conjugacy_check,
    intertwine_defect,
    left_multiplication_candidate,
    probe_group,
    rotor_family_cases,
)

CONDITION_CHECKS = ("1", "2", "3", "4", "5", "lemma")
FLOW_CHECKS = ("flow-axioms", "eval-real")
EXTRACT_CHECKS = ("extract", "extract-order")
SYMMETRY_CHECKS = ("intertwine", "flow-conjugacy", "distinctness", "chain-agreement", "group-probe")
KNOWN_CHECKS = CONDITION_CHECKS + FLOW_CHECKS + EXTRACT_CHECKS + ("round-trip",) + SYMMETRY_CHECKS

DEFAULT_TOLERANCES = {
    "conditions": 1e-12,
    "slope": 0.05,
    "lemma": 1e-11,
    "flow": 1e-10,
    "real": 1e-10,
    "extract": 1e-12,
    "round_trip": 1e-10,
    "intertwine": 1e-12,
    "conjugacy": 1e-10,
    "group": 1e-12,
    "agreement": 1e-6,
    "distinct": 1.0,
}


class ConfigError(ValueError):
    """A scenario configuration is malformed or refers to unknown names."""


_PI_RE = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)?)\s*\*?\s*pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


def parse_real(value):
    """Number, or a string such as ``"pi"``, ``"-pi"``, ``"2*pi"`` or ``"pi/4"``."""
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _PI_RE.match(value)
        if m:
            coeff = m.group(1)
            if coeff in ("", "+"):
                c = 1.0
            elif coeff == "-":
                c = -1.0
            else:
                c = float(coeff)
            d = float(m.group(2)) if m.group(2) else 1.0
            return c * math.pi / d
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(f"cannot read {value!r} as a real number")


def _vector(values, size=None):
    out = np.array([parse_real(v) for v in values], dtype=float)
    if size is not None and out.shape != (size,):
        raise ConfigError(f"expected {size} components, got {len(values)}")
    return out


_QUAT_NAMES = {"1": quat.ONE, "i": quat.I, "j": quat.J, "k": quat.K}


def parse_quaternion(value):
    """Four components, or one of ``"1"``, ``"i"``, ``"j"``, ``"k"`` with an optional sign."""
    if isinstance(value, str):
        sign = -1.0 if value.startswith("-") else 1.0
        key = value.lstrip("+-")
        if key not in _QUAT_NAMES:
            raise ConfigError(f"unknown quaternion name {value!r}")
        return sign * _QUAT_NAMES[key]
    return _vector(value, 4)


def build_field(desc, manifold):
    kind = desc.get("kind")
    if kind == "constant-circle":
        return ConstantCircle(parse_real(desc["k"]))
    if kind == "circle-fourier":
        return CircleFourier(
            parse_real(desc.get("constant", 0.0)),
            tuple(parse_real(c) for c in desc.get("cos", [])),
            tuple(parse_real(s) for s in desc.get("sin", [])),
        )
    if kind == "left-invariant":
        return LeftInvariantS3(parse_real(desc.get("scale", 1.0)) * parse_quaternion(desc["omega"]))
    if kind == "torus-constant":
        return TorusConstant(_vector(desc["v"]))
    if kind == "zero":
        if isinstance(manifold, Circle):
            return ConstantCircle(0.0)
        if isinstance(manifold, Sphere3):
            return LeftInvariantS3(np.zeros(4))
        return TorusConstant(np.zeros(manifold.n))
    raise ConfigError(f"unknown field kind {kind!r}")


def build_diffeo(desc, manifold):
    kind = desc.get("kind")
    if kind == "identity":
        return Identity(manifold)
    if kind == "rotation":
        return CircleRotation(parse_real(desc["alpha"]))
    if kind == "reflection":
        return CircleReflection()
    if kind == "quat-left":
        return QuatLeftMult(parse_quaternion(desc["q"]))
    if kind == "quat-conjugation":
        return QuatConjugation(parse_quaternion(desc["r"]))
    if kind == "torus-translation":
        return TorusTranslation(_vector(desc["v"]))
    if kind == "flow-time":
        return FlowTime(
            build_field(desc["field"], manifold),
            parse_real(desc.get("t", 1.0)),
            parse_real(desc.get("h", 1e-3)),
        )
    raise ConfigError(f"unknown diffeomorphism kind {kind!r}")


@dataclass
class ScenarioConfig:
    """Validated scenario description. ``raw`` keeps the normalized dictionary."""

    name: str
    description: str
    manifold: object
    target: dict
    source: dict
    resolution: int
    seed: int
    tolerances: dict
    checks: tuple
    extract: dict = field(default_factory=dict)
    symmetry: dict = field(default_factory=dict)
    group: dict = field(default_factory=dict)
    integrate: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data):
        data = copy.deepcopy(data)
        for key in ("name", "manifold", "source"):
            if key not in data:
                raise ConfigError(f"missing required key {key!r}")
        try:
            m = manifold_from_name(data["manifold"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        checks = tuple(str(c) for c in data.get("checks", CONDITION_CHECKS))
        unknown = [c for c in checks if c not in KNOWN_CHECKS]
        if unknown:
            raise ConfigError(f"unknown checks {unknown}; known: {list(KNOWN_CHECKS)}")
        tolerances = dict(DEFAULT_TOLERANCES)
        for k, v in data.get("tolerances", {}).items():
            if k not in DEFAULT_TOLERANCES:
                raise ConfigError(f"unknown tolerance {k!r}")
            tolerances[k] = parse_real(v)
        if any(not v > 0 for v in tolerances.values()):
            raise ConfigError("tolerances must be positive")
        source = data["source"]
        if source.get("kind") not in ("analytic", "quat-chain", "from-field", "solve-chain"):
            raise ConfigError(f"unknown root-system source {source.get('kind')!r}")
        if int(source.get("depth", 1)) < 1:
            raise ConfigError("depth must be at least 1")
        grid = data.get("grid", {})
        return cls(
            name=str(data["name"]),
            description=str(data.get("description", "")),
            manifold=m,
            target=data.get("target", {}),
            source=source,
            resolution=int(grid.get("resolution", 256)),
            seed=int(grid.get("seed", 0)),
            tolerances=tolerances,
            checks=checks,
            extract=data.get("extract", {}),
            symmetry=data.get("symmetry", {}),
            group=data.get("group", {}),
            integrate=data.get("integrate", {}),
            outputs=data.get("outputs", {}),
            raw=data,
        )

    def with_overrides(self, grid=None, seed=None, depth=None, tol=None):
        """Copy with command-line overrides; ``tol`` replaces every tolerance."""
        data = copy.deepcopy(self.raw)
        if grid is not None:
            data.setdefault("grid", {})["resolution"] = int(grid)
        if seed is not None:
            data.setdefault("grid", {})["seed"] = int(seed)
        if depth is not None:
            data["source"]["depth"] = int(depth)
        if tol is not None:
            data["tolerances"] = {k: float(tol) for k in DEFAULT_TOLERANCES}
        return ScenarioConfig.from_dict(data)

    def normalized(self):
        """Deterministic dictionary used in reports."""
        out = copy.deepcopy(self.raw)
        out["grid"] = {"resolution": self.resolution, "seed": self.seed}
        out["tolerances"] = dict(sorted(self.tolerances.items()))
        out["checks"] = list(self.checks)
        return out


def load_config(path):
    with open(path, "rb") as fh:
        return ScenarioConfig.from_dict(tomli.load(fh))


# ---------------------------------------------------------------- built-ins

_FIELD_PERTURBED = {"kind": "circle-fourier", "constant": "pi", "sin": [0.3]}

BUILTINS = {
    "circle-antipodal": {
        "description": "antipodal map of the circle: rotation roots for +pi and -pi and the reflection between them",
        "manifold": "circle",
        "target": {"kind": "rotation", "alpha": "pi"},
        "source": {"kind": "analytic", "depth": 20},
        "grid": {"resolution": 256, "seed": 0},
        "checks": ["1", "2", "3", "4", "5", "lemma", "flow-axioms", "extract", "round-trip",
                   "intertwine", "flow-conjugacy", "group-probe"],
        "extract": {"depth": 12, "richardson": 2, "resolution": 256,
                    "reference": {"kind": "constant-circle", "k": "pi"}},
        "symmetry": {"kind": "circle-reflection", "mirror_alpha": "-pi"},
        "group": {"kind": "circle-reflection"},
    },
    "s3-antipodal-i": {
        "description": "antipodal map of S^3 through square roots of left multiplication by i",
        "manifold": "sphere3",
        "target": {"kind": "quat-left", "q": "-1"},
        "source": {"kind": "quat-chain", "q": "i", "depth": 20},
        "grid": {"resolution": 256, "seed": 0},
        "tolerances": {"extract": 1e-6, "round_trip": 1e-6, "conjugacy": 1e-8},
        "checks": ["1", "2", "3", "4", "5", "lemma", "flow-axioms", "extract", "round-trip",
                   "intertwine", "flow-conjugacy", "distinctness"],
        "extract": {"depth": 12, "richardson": 2, "resolution": 8,
                    "reference": {"kind": "left-invariant", "omega": "i", "scale": "pi"}},
        "symmetry": {"kind": "quat-axes", "partner": "j"},
    },
    "s3-antipodal-j": {
        "description": "antipodal map of S^3 through square roots of left multiplication by j",
        "manifold": "sphere3",
        "target": {"kind": "quat-left", "q": "-1"},
        "source": {"kind": "quat-chain", "q": "j", "depth": 20},
        "grid": {"resolution": 256, "seed": 0},
        "tolerances": {"extract": 1e-6, "round_trip": 1e-6, "conjugacy": 1e-8},
        "checks": ["1", "2", "3", "4", "5", "lemma", "flow-axioms", "extract", "round-trip",
                   "intertwine", "flow-conjugacy", "distinctness"],
        "extract": {"depth": 12, "richardson": 2, "resolution": 8,
                    "reference": {"kind": "left-invariant", "omega": "j", "scale": "pi"}},
        "symmetry": {"kind": "quat-axes", "partner": "i"},
    },
    "circle-perturbed-rotation": {
        "description": "time-1 map of pi + 0.3 sin(theta): roots from the flow, field recovered end to end",
        "manifold": "circle",
        "target": {"kind": "flow-time", "field": _FIELD_PERTURBED, "t": 1.0, "h": 1e-3},
        "source": {"kind": "from-field", "field": _FIELD_PERTURBED, "depth": 12, "h": 1e-3},
        "grid": {"resolution": 256, "seed": 0},
        "tolerances": {"conditions": 1e-8, "extract": 1e-6, "round_trip": 1e-5},
        "checks": ["1", "2", "3", "4", "5", "lemma", "flow-axioms", "extract", "extract-order",
                   "round-trip"],
        "extract": {"depth": 12, "richardson": 2, "resolution": 128, "order_depths": [10, 11],
                    "reference": _FIELD_PERTURBED},
    },
    "solved-sqrt-chain": {
        "description": "root chain of the time-1 map of pi + 0.3 sin(theta) by repeated numerical square roots",
        "manifold": "circle",
        "target": {"kind": "flow-time", "field": _FIELD_PERTURBED, "t": 1.0, "h": 1e-3},
        "source": {"kind": "solve-chain", "depth": 8, "n": 1024, "solver_tol": 1e-7,
                   "reference_field": _FIELD_PERTURBED},
        "grid": {"resolution": 256, "seed": 0},
        "tolerances": {"conditions": 1e-7, "lemma": 1e-7, "extract": 1e-5, "round_trip": 1e-5},
        "checks": ["1", "2", "3", "4", "5", "lemma", "chain-agreement", "extract", "round-trip"],
        "extract": {"depth": 4, "richardson": 3, "resolution": 128, "reference": _FIELD_PERTURBED},
    },
    "negative-reflection": {
        "description": "expected failure: the reflection of the circle reverses orientation and has no root chain",
        "manifold": "circle",
        "target": {"kind": "reflection"},
        "source": {"kind": "solve-chain", "depth": 3},
        "grid": {"resolution": 256, "seed": 0},
        "checks": ["1", "2", "3", "4", "5"],
    },
    "broken-coherency": {
        "description": "expected failure",
        "manifold": "circle",
        "target": {"kind": "rotation", "alpha": "pi"},
        "source": {"kind": "analytic", "depth": 20, "perturb": {"4": 0.05}},
        "grid": {"resolution": 256, "seed": 0},
        "checks": ["2", "3", "4", "eval-real"],
    },
    "group-probe-circle": {
        "description": "closure of {identity, reflection} relating the rotation fields +pi and -pi",
        "manifold": "circle",
        "target": {"kind": "rotation", "alpha": "pi"},
        "source": {"kind": "analytic", "depth": 20},
        "grid": {"resolution": 256, "seed": 0},
        "checks": ["group-probe"],
        "group": {"kind": "circle-reflection"},
    },
    "group-probe-s3": {
        "description": "closure of the quarter-turn rotor conjugations about k acting on the field pi i p",
        "manifold": "sphere3",
        "target": {"kind": "quat-left", "q": "-1"},
        "source": {"kind": "quat-chain", "q": "i", "depth": 20},
        "grid": {"resolution": 256, "seed": 0},
        "checks": ["group-probe"],
        "group": {"kind": "s3-rotor", "axis": "k", "base": "i"},
    },
    "zero-field": {
        "description": "identity map with identity roots; the extracted field vanishes",
        "manifold": "circle",
        "target": {"kind": "identity"},
        "source": {"kind": "analytic", "depth": 8},
        "grid": {"resolution": 256, "seed": 0},
        "checks": ["1", "2", "3", "4", "5", "lemma", "flow-axioms", "extract", "round-trip"],
        "extract": {"depth": 4, "richardson": 2, "resolution": 256,
                    "reference": {"kind": "zero"}},
    },
}


def list_scenarios():
    """``(name, description)`` for every built-in scenario."""
    return [(name, entry["description"]) for name, entry in BUILTINS.items()]


def builtin_config(name):
    if name not in BUILTINS:
        raise ConfigError(f"unknown built-in scenario {name!r}; see 'list'")
    return ScenarioConfig.from_dict({"name": name, **BUILTINS[name]})


def resolve_config(ref):
    """Built-in name or path to a TOML file."""
    if ref in BUILTINS:
        return builtin_config(ref)
    return load_config(ref)


# ---------------------------------------------------------------- construction


def build_target(config):
    m = config.manifold
    if config.source["kind"] == "quat-chain" and not config.target:
        return QuatLeftMult(-quat.ONE)
    if config.source["kind"] == "from-field" and not config.target:
        src = config.source
        return FlowTime(build_field(src["field"], m), 1.0, parse_real(src.get("h", 1e-3)))
    return build_diffeo(config.target, m)


def build_root_system(config, target):
    """Root system per the config source; solver failures raise ``RootSolveError``."""
    src = config.source
    m = config.manifold
    depth = int(src.get("depth", 12))
    kind = src["kind"]
    if kind == "analytic":
        if isinstance(target, CircleRotation):
            perturb = {int(k): parse_real(v) for k, v in src.get("perturb", {}).items()}
            return rotation_family(target.alpha, depth, perturb or None)
        if isinstance(target, Identity):
            return identity_family(m, depth)
        raise ConfigError(f"no analytic root family for {target!r}")
    if kind == "quat-chain":
        return quat_sqrt_chain(parse_quaternion(src["q"]), depth)
    if kind == "from-field":
        return roots_from_field(build_field(src["field"], m), depth, parse_real(src.get("h", 1e-3)))
    settings = SqrtSettings(n=int(src.get("n", 1024)), tol=parse_real(src.get("solver_tol", 1e-7)))
    return solve_sqrt_chain(target, depth, settings, verify=False)


def mirror_family(config, rs):
    """Rotation family for ``symmetry.mirror_alpha`` matching the depth of ``rs``."""
    alpha = parse_real(config.symmetry.get("mirror_alpha", "-pi"))
    return rotation_family(alpha, int(config.source.get("depth", 20)))


# ---------------------------------------------------------------- running


@dataclass
class RunReport:
    scenario: str
    description: str
    config: dict
    entries: list
    failed_stage: str = ""
    timing: dict = field(default_factory=dict)
    environment: dict = field(default_factory=dict)
    artifact_version: str = __version__

    @property
    def overall_pass(self):
        return not self.failed_stage and all(e.passed for e in self.entries)

    def entry(self, check):
        for e in self.entries:
            if e.check == check:
                return e
        raise KeyError(check)

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "description": self.description,
            "artifact_version": self.artifact_version,
            "config": to_jsonable(self.config),
            "environment": self.environment,
            "entries": [e.to_dict() for e in self.entries],
            "overall_pass": self.overall_pass,
            "failed_stage": self.failed_stage or None,
            "timing": self.timing,
        }

    def summary_lines(self):
        lines = [f"scenario {self.scenario}: {'PASS' if self.overall_pass else 'FAIL'}"]
        if self.failed_stage:
            lines.append(f"  failed stage: {self.failed_stage}")
        for e in self.entries:
            status = "pass" if e.passed else "FAIL"
            label = f" [{e.label}]" if e.label else ""
            extra = f" error: {e.error}" if e.error else ""
            lines.append(f"  {status}  {e.check}{label}: residual {e.residual:.3e} <= {e.tolerance:.3e}{extra}")
        return lines


class _Runner:
    def __init__(self, config, stages):
        self.config = config
        self.stages = stages
        self.m = config.manifold
        self.tol = config.tolerances
        self.entries = []
        self.timing = {}
        self.failed_stage = ""
        self.grid = self.m.sample_grid(config.resolution, config.seed)
        self.rs = None
        self.fa = None
        self.field = None

    def wants(self, check):
        return check in self.config.checks and self._stage_of(check) in self.stages

    @staticmethod
    def _stage_of(check):
        if check in CONDITION_CHECKS:
            return "verify"
        if check in FLOW_CHECKS:
            return "flow"
        if check in EXTRACT_CHECKS or check == "round-trip":
            return "extract"
        return "symmetry"

    def timed(self, name, fn):
        start = time.perf_counter()
        try:
            return fn()
        finally:
            self.timing[name] = round(time.perf_counter() - start, 6)

    def add(self, entry, label=None):
        if label:
            entry.label = label
        self.entries.append(entry)
        return entry

    # -- stages

    def construct(self):
        cfg = self.config
        target = build_target(cfg)
        self.target = target
        if cfg.source["kind"] == "solve-chain":
            oc = orientation_class(target, self.grid)
            if not oc.preserving:
                self.add(ReportEntry("condition-1-isotopy", 1.0, 0.0, label="surrogate",
                                     witness={"index": 1, "reason": oc.detail},
                                     details={"kind": oc.kind.value}))
                self.failed_stage = "isotopy"
                return False
        try:
            self.rs = build_root_system(cfg, target)
        except RootSolveError as exc:
            self.add(failed_entry("construction", str(exc), history=exc.history))
            self.failed_stage = "construction"
            return False
        self.fa = FlowApprox(self.rs)
        return True

    def verify(self):
        wanted = tuple(c for c in CONDITION_CHECKS if self.wants(c))
        if not wanted:
            return
        report = verify_root_system(self.rs, self.grid, self.tol["conditions"], self.tol["slope"], wanted)
        for e in report.entries:
            if e.check == "lemma-commute-power":
                e.tolerance = max(e.tolerance, self.tol["lemma"])
            self.add(e)
        if self.wants("1") and not report["condition-1-isotopy"].passed:
            self.failed_stage = self.failed_stage or "isotopy"

    def flow(self):
        if self.wants("flow-axioms"):
            self.add(verify_flow_axioms(self.fa, self.grid, tol=self.tol["flow"], real_tol=self.tol["real"]))
        if self.wants("eval-real"):
            self.add(verify_eval_real(self.fa, self.grid, tol=self.tol["real"]))

    def _extract_settings(self):
        ex = self.config.extract
        return (int(ex.get("depth", 12)), int(ex.get("richardson", 2)), int(ex.get("resolution", 256)))

    def extract(self):
        depth, r, res = self._extract_settings()
        ex = self.config.extract
        reference = None
        if "reference" in ex:
            reference = build_field(ex["reference"], self.m)
        elif self.config.source["kind"] == "from-field":
            reference = build_field(self.config.source["field"], self.m)
        xgrid = extraction_grid(self.m, res, self.config.seed)
        try:
            sampled = extract_field_grid(self.fa, xgrid, depth, r)
        except (CutLocusError, ValueError) as exc:
            self.add(failed_entry("extract", str(exc)))
            self.failed_stage = self.failed_stage or "extract"
            return
        self.sampled = sampled
        self.field = recognize_field(sampled)
        if self.wants("extract"):
            if reference is not None:
                err = self.m.tangent_norm(xgrid, sampled.values - reference(xgrid))
                i = int(np.argmax(err))
                self.add(ReportEntry("extract", float(err[i]), self.tol["extract"],
                                     witness={"point": np.asarray(xgrid)[i].tolist()},
                                     counts={"points": self.m.batch_size(xgrid)},
                                     details={"depth": depth, "richardson": r, "field": repr(self.field)}))
            else:
                self.add(ReportEntry("extract", 0.0, self.tol["extract"], label="no reference field",
                                     untestable=["accuracy"], details={"field": repr(self.field)}))
        if self.wants("extract-order") and reference is not None:
            self.add(self._order_check(xgrid, reference, r))
        if self.wants("round-trip"):
            settings = RoundTripSettings(depth=depth, richardson=r, resolution=res, seed=self.config.seed,
                                         tol=self.tol["round_trip"])
            self.add(round_trip_check(self.target, self.rs, settings, field=self.field))

    def _order_check(self, xgrid, reference, r):
        c1, c2 = (int(c) for c in self.config.extract.get("order_depths", [10, 11]))
        errors = [float(np.max(self.m.tangent_norm(xgrid, extract_field(self.fa, xgrid, c, r) - reference(xgrid))))
                  for c in (c1, c2)]
        lo, hi = 1.8 ** ((r + 1) * (c2 - c1)), 2.2 ** ((r + 1) * (c2 - c1))
        ratio = errors[0] / errors[1] if errors[1] > 0 else math.inf
        residual = max(0.0, lo - ratio, ratio - hi)
        return ReportEntry("extract-order", residual, 0.0, label=f"ratio in [{lo:.4g}, {hi:.4g}]",
                           details={"depths": [c1, c2], "errors": errors, "ratio": ratio})

    def symmetry(self):
        sym = self.config.symmetry
        kind = sym.get("kind")
        if kind == "circle-reflection" and any(self.wants(c) for c in ("intertwine", "flow-conjugacy")):
            self._circle_reflection()
        elif kind == "quat-axes" and any(self.wants(c) for c in ("intertwine", "flow-conjugacy", "distinctness")):
            self._quat_axes(parse_quaternion(sym["partner"]))
        if self.wants("chain-agreement"):
            self._chain_agreement()
        if self.wants("group-probe"):
            self._group_probe()

    def _own_field(self, fa):
        depth, r, res = self._extract_settings()
        xgrid = extraction_grid(self.m, res, self.config.seed)
        return recognize_field(extract_field_grid(fa, xgrid, depth, r))

    def _circle_reflection(self):
        mirror = mirror_family(self.config, self.rs)
        mirror_report = verify_root_system(mirror, self.grid, self.tol["conditions"], self.tol["slope"],
                                           ("1", "2", "3", "4", "5"))
        for e in mirror_report.entries:
            self.add(e, label="mirror system")
        fa2 = FlowApprox(mirror)
        P = CircleReflection()
        xi1 = self.field if self.field is not None else self._own_field(self.fa)
        case = IntertwineCase(P, xi1, self._own_field(fa2), 1.0, "reflection")
        if self.wants("intertwine"):
            self.add(check_intertwine(case, self.grid, self.tol["intertwine"]), label="reflection")
        if self.wants("flow-conjugacy"):
            self.add(flow_conjugacy_check(P, self.fa, fa2, 1, grid=self.grid, tol=self.tol["conjugacy"]),
                     label="reflection")

    def _quat_axes(self, q2):
        q1 = parse_quaternion(self.config.source["q"])
        depth = int(self.config.source.get("depth", 20))
        partner = quat_sqrt_chain(q2, depth)
        fa2 = FlowApprox(partner)
        xi1 = self.field if self.field is not None else self._own_field(self.fa)
        xi2 = self._own_field(fa2)
        conj = QuatConjugation(conjugating_rotor(q1, q2))
        left = left_multiplication_candidate(q1, q2)
        if self.wants("intertwine"):
            entry = check_intertwine(IntertwineCase(conj, xi1, xi2, 1.0, "conjugation"), self.grid,
                                     self.tol["intertwine"])
            left_res = float(np.max(intertwine_defect(IntertwineCase(left, xi1, xi2, 1.0), self.grid)))
            entry.details["left_multiplication"] = {"P": repr(left), "residual": left_res,
                                                    "asserted": False}
            self.add(entry, label="conjugation")
        if self.wants("flow-conjugacy"):
            entry = flow_conjugacy_check(conj, self.fa, fa2, 1, grid=self.grid, tol=self.tol["conjugacy"])
            left_entry = flow_conjugacy_check(left, self.fa, fa2, 1, grid=self.grid, tol=self.tol["conjugacy"])
            entry.details["left_multiplication"] = {"residual": left_entry.residual, "asserted": False}
            self.add(entry, label="conjugation")
        if self.wants("distinctness"):
            d = sup_distance(self.rs.root(2), partner.root(2), self.grid)
            need = self.tol["distinct"]
            self.add(ReportEntry("distinctness", max(0.0, need - d), 0.0,
                                 label=f"sup distance of g_2 roots >= {need:g}",
                                 details={"sup_distance": d}))

    def _chain_agreement(self):
        desc = self.config.source.get("reference_field")
        if desc is None:
            self.add(failed_entry("chain-agreement", "source has no reference_field"))
            return
        ref = roots_from_field(build_field(desc, self.m), max(c.bit_length() - 1 for c in self.rs.index_set))
        check = self.m.verification_grid(997, self.config.seed)
        per_level = {str(b): sup_distance(self.rs.root(b), ref.root(b), check) for b in self.rs.index_set}
        worst = max(per_level.values())
        self.add(ReportEntry("chain-agreement", worst, self.tol["agreement"],
                             counts={"levels": len(per_level), "points": self.m.batch_size(check)},
                             details={"per_level": per_level}))

    def _group_probe(self):
        grp = self.config.group
        if grp.get("kind") == "circle-reflection":
            base = ConstantCircle(math.pi)
            cases = [
                IntertwineCase(Identity(self.m), base, base, 1.0, "identity"),
                IntertwineCase(CircleReflection(), base, ConstantCircle(-math.pi), 1.0, "reflection"),
            ]
        elif grp.get("kind") == "s3-rotor":
            cases = rotor_family_cases(parse_quaternion(grp.get("axis", "k")), parse_quaternion(grp.get("base", "i")))
        else:
            self.add(failed_entry("group-probe", f"unknown group kind {grp.get('kind')!r}"))
            return
        self.add(probe_group(cases, self.grid, self.tol["group"]).entry("group-probe"))

    def run(self):
        if not self.timed("construction", self.construct):
            return
        for stage in ("verify", "flow", "extract", "symmetry"):
            if stage not in self.stages:
                continue
            if stage == "extract" and not any(self.wants(c) for c in EXTRACT_CHECKS + ("round-trip",)):
                continue
            self.timed(stage, getattr(self, stage))


ALL_STAGES = ("verify", "flow", "extract", "symmetry")


def run_scenario(config, stages=ALL_STAGES):
    """Build the root system and run the requested checks in dependency order."""
    runner = _Runner(config, stages)
    start = time.perf_counter()
    try:
        runner.run()
    except ConvergenceError as exc:
        runner.add(failed_entry("runtime", str(exc), table=exc.table))
        runner.failed_stage = runner.failed_stage or "runtime"
    runner.timing["total"] = round(time.perf_counter() - start, 6)
    return RunReport(
        scenario=config.name,
        description=config.description,
        config=config.normalized(),
        entries=runner.entries,
        failed_stage=runner.failed_stage,
        timing=runner.timing,
        environment={"precision": "float64", "seed": config.seed, "grid_points": config.manifold.batch_size(runner.grid),
                     "python": platform.python_version(), "numpy": np.__version__},
    )


def export_field(config, path):
    """Extract the scenario's field on its extraction grid and write it as CSV."""
    if "extract" not in config.checks:
        raise ConfigError(f"scenario {config.name!r} does not enable the extract check")
    runner = _Runner(config, ())
    if not runner.construct():
        raise RuntimeError(f"construction failed at stage {runner.failed_stage}")
    depth, r, res = runner._extract_settings()
    xgrid = extraction_grid(runner.m, res, config.seed)
    values = extract_field(runner.fa, xgrid, depth, r)
    return export_field_csv(runner.m, xgrid, values, path)


def export_trajectories(config, path, times=None, points=None):
    """Flow trajectories ``Psi_t(p)`` from the root system, as a time-series CSV."""
    runner = _Runner(config, ())
    if not runner.construct():
        raise RuntimeError(f"construction failed at stage {runner.failed_stage}")
    steps = int(config.integrate.get("steps", 8))
    times = times or [Fraction(k, steps) for k in range(steps + 1)]
    n = points or int(config.integrate.get("points", 8))
    start = runner.m.sample_grid(n, config.seed)
    return export_trajectory_csv(runner.m, times, trajectory(runner.fa, start, times), path)
