"""Experiment configuration: YAML text in, a validated ExperimentConfig out.

Validation never stops at the first problem; every issue is collected
with a dotted path so a config can be fixed in one pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import yaml

from ..geometry import Cone
from ..wavepacket import GaussianComponent, WavePacket, canonical_packet, normalize

KINDS = ("fas-scan", "sict", "bohm", "remainder", "window")

_TOP_KEYS = {"experiment", "packet", "cone", "R_list", "T", "R_over_T", "times", "window",
             "tolerances", "ensemble", "quadrature"}
_PACKET_KEYS = {"canonical", "components", "normalize"}
_COMPONENT_KEYS = {"amplitude", "center", "wavevector", "width"}
_CONE_KEYS = {"axis", "half_angle_deg"}
_TOL_KEYS = {"epsilon_tail", "time_tol", "ode_tol"}
_ENSEMBLE_KEYS = {"n", "seed", "t_budget"}
_QUAD_KEYS = {"angular_order"}


@dataclass(frozen=True)
class ConfigIssue:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


@dataclass(frozen=True)
class Tolerances:
    epsilon_tail: float = 1e-8
    time_tol: float = 1e-9
    ode_tol: float = 1e-8


@dataclass(frozen=True)
class Ensemble:
    n: int = 1000
    seed: int = 0
    t_budget: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    packet: WavePacket
    packet_spec: dict
    cone: Cone
    cone_spec: dict
    R_list: tuple = ()
    T: float = 0.0
    R_over_T: float | None = None
    times: tuple = ()
    window: tuple = (0.0, 1.0)
    tolerances: Tolerances = field(default_factory=Tolerances)
    ensemble: Ensemble = field(default_factory=Ensemble)
    angular_order: int = 64

    def with_seed(self, seed):
        from dataclasses import replace
        return replace(self, ensemble=replace(self.ensemble, seed=int(seed)))

    def as_dict(self):
        return {
            "experiment": self.experiment,
            "packet": self.packet_spec,
            "cone": self.cone_spec,
            "R_list": list(self.R_list),
            "T": self.T,
            "R_over_T": self.R_over_T,
            "times": list(self.times),
            "window": list(self.window),
            "tolerances": vars(self.tolerances).copy(),
            "ensemble": vars(self.ensemble).copy(),
            "quadrature": {"angular_order": self.angular_order},
        }


class _Checker:
    def __init__(self):
        self.issues = []

    def fail(self, path, message):
        self.issues.append(ConfigIssue(path, message))

    def mapping(self, value, path, allowed):
        if value is None:
            return {}
        if not isinstance(value, dict):
            self.fail(path, "expected a mapping")
            return {}
        for key in value:
            if key not in allowed:
                self.fail(f"{path}.{key}" if path else str(key), "unknown key")
        return value

    def number(self, value, path, *, lo=None, hi=None, lo_open=False, hi_open=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            self.fail(path, "expected a finite number")
            return None
        ok = True
        if lo is not None and (value <= lo if lo_open else value < lo):
            ok = False
        if hi is not None and (value >= hi if hi_open else value > hi):
            ok = False
        if not ok:
            left = "(" if lo_open else "["
            right = ")" if hi_open else "]"
            self.fail(path, f"must lie in {left}{'-inf' if lo is None else lo}, "
                            f"{'inf' if hi is None else hi}{right}, got {value}")
            return None
        return float(value)

    def integer(self, value, path, lo):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, "expected an integer")
            return None
        if value < lo:
            self.fail(path, f"must be >= {lo}, got {value}")
            return None
        return value

    def vector(self, value, path, nonzero=False):
        if not isinstance(value, (list, tuple)) or len(value) != 3:
            self.fail(path, "expected a list of 3 numbers")
            return None
        out = [self.number(v, f"{path}[{i}]") for i, v in enumerate(value)]
        if any(v is None for v in out):
            return None
        if nonzero and not any(out):
            self.fail(path, "must be nonzero")
            return None
        return tuple(out)

    def number_list(self, value, path, **bounds):
        if not isinstance(value, (list, tuple)) or not value:
            self.fail(path, "expected a nonempty list of numbers")
            return None
        out = [self.number(v, f"{path}[{i}]", **bounds) for i, v in enumerate(value)]
        return None if any(v is None for v in out) else tuple(out)


def _amplitude(check, value, path):
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            check.fail(path, "complex amplitude must be [re, im]")
            return None
        re, im = (check.number(v, f"{path}[{i}]") for i, v in enumerate(value))
        return None if re is None or im is None else complex(re, im)
    x = check.number(value, path)
    return None if x is None else complex(x)


def _packet(check, raw):
    spec = check.mapping(raw, "packet", _PACKET_KEYS)
    if raw is None:
        check.fail("packet", "required")
        return None
    has_canon, has_comps = "canonical" in spec, "components" in spec
    if has_canon == has_comps:
        check.fail("packet", "give exactly one of 'canonical' or 'components'")
        return None
    if has_canon:
        name = spec["canonical"]
        if name not in ("G1", "G2"):
            check.fail("packet.canonical", f"must be G1 or G2, got {name!r}")
            return None
        return canonical_packet(name)
    comps_raw = spec["components"]
    if not isinstance(comps_raw, list) or not comps_raw:
        check.fail("packet.components", "expected a nonempty list")
        return None
    comps = []
    for i, c in enumerate(comps_raw):
        p = f"packet.components[{i}]"
        c = check.mapping(c, p, _COMPONENT_KEYS)
        missing = [k for k in ("center", "wavevector", "width") if k not in c]
        for k in missing:
            check.fail(f"{p}.{k}", "required")
        if missing:
            continue
        amp = _amplitude(check, c.get("amplitude", 1.0), f"{p}.amplitude")
        center = check.vector(c["center"], f"{p}.center")
        k = check.vector(c["wavevector"], f"{p}.wavevector")
        width = check.number(c["width"], f"{p}.width", lo=0.0, lo_open=True)
        if None not in (amp, center, k, width):
            comps.append(GaussianComponent(amp, center, k, width))
    if len(comps) != len(comps_raw):
        return None
    norm = spec.get("normalize", True)
    if not isinstance(norm, bool):
        check.fail("packet.normalize", "expected true or false")
        return None
    try:
        packet = WavePacket(tuple(comps))
        return normalize(packet) if norm else packet
    except ValueError as exc:
        check.fail("packet", str(exc))
        return None


def _cone(check, raw):
    if raw is None:
        return Cone.from_degrees((0, 0, 1), 30.0), {"axis": [0, 0, 1], "half_angle_deg": 30.0}
    spec = check.mapping(raw, "cone", _CONE_KEYS)
    axis = check.vector(spec.get("axis", [0, 0, 1]), "cone.axis", nonzero=True)
    deg = check.number(spec.get("half_angle_deg", 30.0), "cone.half_angle_deg",
                       lo=0.0, hi=180.0, lo_open=True)
    if axis is None or deg is None:
        return None, None
    return Cone.from_degrees(axis, deg), {"axis": list(axis), "half_angle_deg": deg}


def parse_config(text, experiment=None):
    """Parse and validate a YAML experiment description.

    ``experiment`` supplies the kind when the document omits it (the CLI
    passes its subcommand); a conflicting value is reported as an error.

    Raises
    ------
    ConfigError
        Carrying every problem found, each with its path.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([ConfigIssue("<document>", f"syntax error: {exc}")]) from None
    check = _Checker()
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError([ConfigIssue("<document>", "top level must be a mapping")])
    check.mapping(raw, "", _TOP_KEYS)

    kind = raw.get("experiment", experiment)
    if kind is None:
        check.fail("experiment", "required")
    elif kind not in KINDS:
        check.fail("experiment", f"must be one of {', '.join(KINDS)}, got {kind!r}")
    elif experiment is not None and kind != experiment:
        check.fail("experiment", f"config is for {kind!r} but {experiment!r} was requested")

    packet = _packet(check, raw.get("packet"))
    cone, cone_spec = _cone(check, raw.get("cone"))

    needs_radii = kind in ("fas-scan", "bohm", "remainder", "window")
    R_list = ()
    if "R_list" in raw or needs_radii:
        R_list = check.number_list(raw.get("R_list"), "R_list", lo=0.0, lo_open=True) or ()
    times = ()
    if "times" in raw or kind == "sict":
        times = check.number_list(raw.get("times"), "times", lo=0.0) or ()

    T = raw.get("T", 1.0 if kind == "remainder" else 0.0)
    T = check.number(T, "T", lo=0.0, lo_open=(kind == "remainder"))
    R_over_T = raw.get("R_over_T")
    if R_over_T is not None:
        R_over_T = check.number(R_over_T, "R_over_T", lo=0.0, lo_open=True)
        if "T" in raw:
            check.fail("R_over_T", "give either T or R_over_T, not both")

    window = raw.get("window", [0.0, 1.0])
    if not isinstance(window, (list, tuple)) or len(window) != 2:
        check.fail("window", "expected [T1, T2]")
        window = None
    else:
        window = tuple(check.number(w, f"window[{i}]") for i, w in enumerate(window))
        if None in window:
            window = None
        elif not window[0] < window[1]:
            check.fail("window", "needs T1 < T2")

    tol_raw = check.mapping(raw.get("tolerances"), "tolerances", _TOL_KEYS)
    tol = Tolerances(
        epsilon_tail=check.number(tol_raw.get("epsilon_tail", 1e-8), "tolerances.epsilon_tail",
                                  lo=0.0, hi=1.0, lo_open=True, hi_open=True),
        time_tol=check.number(tol_raw.get("time_tol", 1e-9), "tolerances.time_tol",
                              lo=0.0, lo_open=True),
        ode_tol=check.number(tol_raw.get("ode_tol", 1e-8), "tolerances.ode_tol",
                             lo=0.0, lo_open=True),
    )

    ens_raw = check.mapping(raw.get("ensemble"), "ensemble", _ENSEMBLE_KEYS)
    t_budget = ens_raw.get("t_budget")
    if t_budget is not None:
        t_budget = check.number(t_budget, "ensemble.t_budget", lo=0.0, lo_open=True)
    ens = Ensemble(
        n=check.integer(ens_raw.get("n", 1000), "ensemble.n", 100),
        seed=check.integer(ens_raw.get("seed", 0), "ensemble.seed", 0),
        t_budget=t_budget,
    )

    quad_raw = check.mapping(raw.get("quadrature"), "quadrature", _QUAD_KEYS)
    order = check.integer(quad_raw.get("angular_order", 64), "quadrature.angular_order", 2)
    if order is not None and order > 512:
        check.fail("quadrature.angular_order", f"must be <= 512, got {order}")

    if check.issues:
        raise ConfigError(check.issues)
    return ExperimentConfig(
        experiment=kind, packet=packet, packet_spec=raw["packet"], cone=cone,
        cone_spec=cone_spec, R_list=tuple(R_list), T=T, R_over_T=R_over_T,
        times=tuple(times), window=window, tolerances=tol, ensemble=ens, angular_order=order)
