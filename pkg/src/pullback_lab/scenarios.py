"""Built-in scenarios and the JSON scenario format.

A scenario document is a JSON object with exactly these sections (all optional
except ``domain``; unknown keys anywhere are an error):

    domain           {"length": float, "modes": int}
    epsilon          {"kind": "constant"|"decreasing-tanh"|"increasing-tanh"|"custom-sampled",
                      "amplitude": float, "level": float, "bound": float,
                      "eps_min": float, "times": [...], "values": [...]}
    diffusion        {"base": float, "amplitude": float, "scale": float,
                      "lower": float, "upper": float}
    nonlocal         {"weights": [...]}
    nonlinearity     {"kind": "cubic"|"zero", "linear": float, "cubic": float,
                      "p": float, "C0": float, "C1": float, "C2": float, "eta_tilde": float}
    delay            {"kind": "none"|"discrete"|"variable"|"distributed", "window": float,
                      "lag": float, "gain": float, "lag_swing": float,
                      "lag_frequency": float, "kernel": [...], "lipschitz_bound": float}
    forcing          {"terms": [{"mode", "constant", "amplitude", "frequency", "phase"}],
                      "tail": {"start", "amplitude", "exponent"}}
    initial_history  {"terms": [{"mode", "value", "rate"}]}
    solver           {"dt", "grid_size", "record_every", "tau", "t_end"}
"""

import json
import math
from dataclasses import asdict, dataclass, fields

from .errors import ScenarioFormatError, UnknownScenario
from .problem import (DelayKernel, DiffusionLaw, DomainSpec, Forcing, ForcingTail,
                      ForcingTerm, HistoryTerm, InitialHistory, NonlocalFunctional,
                      Nonlinearity, ProblemSpec, TimeProfile, cubic_nonlinearity,
                      zero_nonlinearity)

SCENARIOS = (
    "linear-single-mode",
    "cubic-delayed",
    "increasing-eps",
    "decreasing-eps",
    "h-minus-one-tail",
)


@dataclass(frozen=True)
class SolverSettings:
    dt: float = 1e-2
    grid_size: int = 0
    record_every: int = 1
    tau: float = 0.0
    t_end: float = 2.0


def _cubic_base(modes=16, epsilon=None, forcing=None, name="cubic-delayed"):
    if forcing is None:
        forcing = Forcing(terms=(
            ForcingTerm(mode=1, constant=0.5, amplitude=0.25, frequency=1.0),
            ForcingTerm(mode=2, amplitude=0.2, frequency=2.0, phase=0.5),
            ForcingTerm(mode=3, constant=0.1),
        ))
    return ProblemSpec(
        domain=DomainSpec(length=math.pi, mode_count=modes),
        epsilon=epsilon or TimeProfile(kind="constant", level=1.0),
        diffusion=DiffusionLaw(base=3.0, amplitude=0.5),
        nonlocal_=NonlocalFunctional(weights=(1.0, 0.5)),
        nonlinearity=cubic_nonlinearity(1.0, 1.0),
        delay=DelayKernel(kind="discrete", window=1.0, lag=1.0, gain=0.5),
        forcing=forcing,
        initial_history=InitialHistory(terms=(
            HistoryTerm(mode=1, value=1.0, rate=0.5),
            HistoryTerm(mode=2, value=-0.5),
            HistoryTerm(mode=3, value=0.25, rate=1.0),
        )),
        name=name,
    )


def default_scenario(name):
    """Return one of the shipped, audit-clean scenarios."""
    if name == "linear-single-mode":
        return ProblemSpec(
            domain=DomainSpec(length=math.pi, mode_count=1),
            epsilon=TimeProfile(kind="constant", level=1.0),
            diffusion=DiffusionLaw(base=3.0),
            nonlocal_=NonlocalFunctional(weights=(1.0,)),
            nonlinearity=zero_nonlinearity(),
            delay=DelayKernel(kind="none", window=1.0),
            forcing=Forcing(),
            initial_history=InitialHistory(terms=(HistoryTerm(mode=1, value=1.0),)),
            name=name,
        )
    if name == "cubic-delayed":
        return _cubic_base()
    if name == "increasing-eps":
        return _cubic_base(epsilon=TimeProfile(kind="increasing-tanh", amplitude=0.5),
                           name=name)
    if name == "decreasing-eps":
        return _cubic_base(epsilon=TimeProfile(kind="decreasing-tanh", amplitude=0.5),
                           name=name)
    if name == "h-minus-one-tail":
        forcing = Forcing(terms=(ForcingTerm(mode=1, constant=0.5, amplitude=0.25,
                                             frequency=1.0),),
                          tail=ForcingTail(start=2, amplitude=0.5, exponent=0.0))
        return _cubic_base(modes=32, forcing=forcing, name=name)
    raise UnknownScenario(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")


def default_settings(name):
    if name == "linear-single-mode":
        return SolverSettings(dt=1e-3, t_end=1.0)
    return SolverSettings(dt=1e-2, t_end=2.0)


# --------------------------------------------------------------------------- JSON

_SECTIONS = ("domain", "epsilon", "diffusion", "nonlocal", "nonlinearity", "delay",
             "forcing", "initial_history", "solver")


def _strict(section, data, allowed):
    if not isinstance(data, dict):
        raise ScenarioFormatError(f"section {section!r} must be an object")
    extra = set(data) - set(allowed)
    if extra:
        raise ScenarioFormatError(f"unknown keys in {section!r}: {sorted(extra)}")
    return data


def _names(cls):
    return [f.name for f in fields(cls)]


def spec_from_dict(doc):
    """Build (ProblemSpec, SolverSettings) from a scenario document."""
    _strict("scenario", doc, _SECTIONS + ("name",))
    if "domain" not in doc:
        raise ScenarioFormatError("missing required section 'domain'")
    try:
        dom = _strict("domain", doc["domain"], ("length", "modes"))
        domain = DomainSpec(length=float(dom.get("length", math.pi)),
                            mode_count=int(dom.get("modes", 1)))

        eps = dict(_strict("epsilon", doc.get("epsilon", {}), _names(TimeProfile)))
        for key in ("times", "values"):
            if key in eps:
                eps[key] = tuple(float(x) for x in eps[key])
        epsilon = TimeProfile(**eps)

        diffusion = DiffusionLaw(**_strict("diffusion", doc.get("diffusion", {"base": 3.0}),
                                           _names(DiffusionLaw)))

        nl = _strict("nonlocal", doc.get("nonlocal", {}), ("weights",))
        nonlocal_ = NonlocalFunctional(weights=tuple(float(x) for x in nl.get("weights", (1.0,))))

        f = dict(_strict("nonlinearity", doc.get("nonlinearity", {"kind": "cubic"}),
                         _names(Nonlinearity)))
        kind = f.pop("kind", "cubic")
        if kind == "zero":
            f.pop("linear", None)
            f.pop("cubic", None)
            nonlinearity = zero_nonlinearity(**f)
        elif kind == "cubic":
            if "p" in f and float(f.pop("p")) != 4.0:
                raise ScenarioFormatError("cubic nonlinearity has growth exponent p = 4")
            nonlinearity = cubic_nonlinearity(**f)
        else:
            raise ScenarioFormatError(f"unknown nonlinearity kind {kind!r}")

        d = dict(_strict("delay", doc.get("delay", {"kind": "none"}), _names(DelayKernel)))
        if "kernel" in d:
            d["kernel"] = tuple(float(x) for x in d["kernel"])
        delay = DelayKernel(**d)

        fo = _strict("forcing", doc.get("forcing", {}), ("terms", "tail"))
        terms = tuple(ForcingTerm(**_strict("forcing.terms", t, _names(ForcingTerm)))
                      for t in fo.get("terms", ()))
        tail = None
        if fo.get("tail") is not None:
            tail = ForcingTail(**_strict("forcing.tail", fo["tail"], _names(ForcingTail)))
        forcing = Forcing(terms=terms, tail=tail)

        ih = _strict("initial_history", doc.get("initial_history", {}), ("terms",))
        history = InitialHistory(terms=tuple(
            HistoryTerm(**_strict("initial_history.terms", t, _names(HistoryTerm)))
            for t in ih.get("terms", ())))

        settings = SolverSettings(**_strict("solver", doc.get("solver", {}),
                                            _names(SolverSettings)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioFormatError):
            raise
        raise ScenarioFormatError(str(exc)) from exc

    spec = ProblemSpec(domain=domain, epsilon=epsilon, diffusion=diffusion,
                       nonlocal_=nonlocal_, nonlinearity=nonlinearity, delay=delay,
                       forcing=forcing, initial_history=history,
                       name=str(doc.get("name", "custom")))
    return spec, settings


def spec_to_dict(spec, settings=None):
    eps = {k: v for k, v in asdict(spec.epsilon).items()}
    eps["times"] = list(eps["times"])
    eps["values"] = list(eps["values"])
    delay = asdict(spec.delay)
    delay["kernel"] = list(delay["kernel"])
    doc = {
        "name": spec.name,
        "domain": {"length": spec.domain.length, "modes": spec.domain.mode_count},
        "epsilon": eps,
        "diffusion": asdict(spec.diffusion),
        "nonlocal": {"weights": list(spec.nonlocal_.weights)},
        "nonlinearity": asdict(spec.nonlinearity),
        "delay": delay,
        "forcing": {
            "terms": [asdict(t) for t in spec.forcing.terms],
            "tail": asdict(spec.forcing.tail) if spec.forcing.tail else None,
        },
        "initial_history": {"terms": [asdict(t) for t in spec.initial_history.terms]},
    }
    if settings is not None:
        doc["solver"] = asdict(settings)
    return doc


def load_scenario(uri):
    """Resolve ``default:<name>`` to a built-in, otherwise read a JSON file."""
    if uri.startswith("default:"):
        name = uri.split(":", 1)[1]
        return default_scenario(name), default_settings(name)
    try:
        with open(uri) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise UnknownScenario(f"no scenario file {uri!r}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{uri}: {exc}") from exc
    return spec_from_dict(doc)
