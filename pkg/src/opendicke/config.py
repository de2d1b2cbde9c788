"""Run configuration: flat dotted-key text files, JSON input, hashing.

The canonical on-disk form is diff-friendly flat text::

    model.g = 0.2
    model.N = 10
    bath.kind = ohmic
    integrator.dt = 0.02
    sweep.theta = 0.2, 1.0, 2.0, 3.0

JSON is accepted as an alternative input encoding (either flat keys or
nested objects).  Serialization is canonical — fixed key order, floats
printed with repr precision — so identical configurations hash
identically, and ``parse(serialize(cfg)) == cfg`` holds exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

from .bath import SpectralDensity
from .model import DickeParams, InitialState, MarkovianDephasing

__all__ = ["RunConfig", "ConfigError", "parse_config", "parse_overrides"]


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


# ---------------------------------------------------------------------------
# value codecs


def _fmt_float(v):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def _parse_float(s):
    try:
        return float(s)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {s!r}") from exc


def _parse_float_list(s):
    s = s.strip()
    if not s:
        return []
    return [_parse_float(p) for p in s.split(",")]


def _fmt_float_list(vs):
    return ", ".join(_fmt_float(v) for v in vs)


def _parse_int_list(s):
    s = s.strip()
    if not s:
        return []
    return [int(p) for p in s.split(",")]


def _parse_opt_float(s):
    return None if s.strip() in ("auto", "none", "") else _parse_float(s)


def _fmt_opt_float(v):
    return "auto" if v is None else _fmt_float(v)


# ---------------------------------------------------------------------------
# sections


@dataclass
class IntegratorConfig:
    dt: float = 0.02
    t_max: float = 100.0
    t_mem: float | None = None  # None = choose from the memory tolerance
    eps_mem: float = 1e-8
    scheme: str = "accumulator"
    record_every: int = 1
    embedding_profile: str = "compact"


@dataclass
class BathFitConfig:
    n_terms: int = 3
    fock_cutoff: list = field(default_factory=lambda: [6, 6, 6])
    residual_threshold: float = 0.02


@dataclass
class SweepConfig:
    g: list = field(default_factory=list)
    N: list = field(default_factory=list)
    theta: list = field(default_factory=list)


@dataclass
class FitConfig:
    g_c_hint: float = 0.15811388300841897
    level_fraction: float = 0.5
    window_lo: float = 10.0
    window_hi: float = 50.0
    t_star: float = 10.0
    tail_start: float | None = None


@dataclass
class BathConfig:
    kind: str = "none"  # none | ohmic | tanh | markovian
    alpha: float = 0.3
    s: float = 1.0
    omega_c: float = 1.0
    gamma_phi: float = 0.0
    beta_T: float = math.inf

    def to_backend(self):
        if self.kind == "none":
            return None
        if self.kind == "ohmic":
            return SpectralDensity(form="ohmic-exp-cutoff", alpha=self.alpha,
                                   s=self.s, omega_c=self.omega_c,
                                   beta_T=self.beta_T)
        if self.kind == "tanh":
            return SpectralDensity(form="tanh-lindblad",
                                   gamma_phi=self.gamma_phi,
                                   beta_T=self.beta_T)
        if self.kind == "markovian":
            return MarkovianDephasing(gamma_phi=self.gamma_phi)
        raise ConfigError(f"unknown bath kind {self.kind!r}")


@dataclass
class RunConfig:
    """Complete, serializable description of one experiment."""

    model_Omega: float = 1.0
    model_kappa: float = 1.0
    model_omega_z: float = 0.025
    model_g: float = 0.1
    model_N: float = math.inf
    bath: BathConfig = field(default_factory=BathConfig)
    init_theta: float = math.pi
    init_q0: float = 0.0
    init_p0: float = 0.0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    bath_fit: BathFitConfig = field(default_factory=BathFitConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    output_dir: str = ""

    # -- typed views ---------------------------------------------------

    def params(self):
        return DickeParams(
            Omega=self.model_Omega, kappa=self.model_kappa,
            omega_z=self.model_omega_z, g=self.model_g, N=self.model_N,
            bath=self.bath.to_backend(),
        )

    def initial_state(self, theta=None):
        return InitialState(
            theta=self.init_theta if theta is None else theta,
            q0=self.init_q0, p0=self.init_p0,
        )

    def validate(self):
        """Construct all typed objects, raising ConfigError on bad input."""
        try:
            params = self.params()
            self.initial_state()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        itg = self.integrator
        if itg.dt <= 0 or itg.t_max <= 0:
            raise ConfigError("integrator.dt and integrator.t_max must be > 0")
        if itg.record_every < 1:
            raise ConfigError("integrator.record_every must be >= 1")
        if itg.scheme not in ("accumulator", "window", "auto"):
            raise ConfigError(f"unknown integrator.scheme {itg.scheme!r}")
        if self.bath_fit.n_terms < 0:
            raise ConfigError("bath_fit.n_terms must be >= 0")
        return params

    # -- flat key serialization ---------------------------------------

    def to_flat(self):
        itg, bf, sw, ft, ba = (self.integrator, self.bath_fit, self.sweep,
                               self.fit, self.bath)
        return {
            "model.Omega": _fmt_float(self.model_Omega),
            "model.kappa": _fmt_float(self.model_kappa),
            "model.omega_z": _fmt_float(self.model_omega_z),
            "model.g": _fmt_float(self.model_g),
            "model.N": _fmt_float(self.model_N),
            "bath.kind": ba.kind,
            "bath.alpha": _fmt_float(ba.alpha),
            "bath.s": _fmt_float(ba.s),
            "bath.omega_c": _fmt_float(ba.omega_c),
            "bath.gamma_phi": _fmt_float(ba.gamma_phi),
            "bath.beta_T": _fmt_float(ba.beta_T),
            "init.theta": _fmt_float(self.init_theta),
            "init.q0": _fmt_float(self.init_q0),
            "init.p0": _fmt_float(self.init_p0),
            "integrator.dt": _fmt_float(itg.dt),
            "integrator.t_max": _fmt_float(itg.t_max),
            "integrator.t_mem": _fmt_opt_float(itg.t_mem),
            "integrator.eps_mem": _fmt_float(itg.eps_mem),
            "integrator.scheme": itg.scheme,
            "integrator.record_every": str(itg.record_every),
            "integrator.embedding_profile": itg.embedding_profile,
            "bath_fit.n_terms": str(bf.n_terms),
            "bath_fit.fock_cutoff": ", ".join(str(c) for c in bf.fock_cutoff),
            "bath_fit.residual_threshold": _fmt_float(bf.residual_threshold),
            "sweep.g": _fmt_float_list(sw.g),
            "sweep.N": _fmt_float_list(sw.N),
            "sweep.theta": _fmt_float_list(sw.theta),
            "fit.g_c_hint": _fmt_float(ft.g_c_hint),
            "fit.level_fraction": _fmt_float(ft.level_fraction),
            "fit.window_lo": _fmt_float(ft.window_lo),
            "fit.window_hi": _fmt_float(ft.window_hi),
            "fit.t_star": _fmt_float(ft.t_star),
            "fit.tail_start": _fmt_opt_float(ft.tail_start),
            "output.dir": self.output_dir,
        }

    def to_text(self):
        return "".join(f"{k} = {v}\n" for k, v in self.to_flat().items())

    def config_hash(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    @classmethod
    def from_flat(cls, flat):
        known = set(cls().to_flat())
        unknown = set(flat) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()

        def get(key, parse, default):
            return parse(flat[key]) if key in flat else default

        cfg.model_Omega = get("model.Omega", _parse_float, cfg.model_Omega)
        cfg.model_kappa = get("model.kappa", _parse_float, cfg.model_kappa)
        cfg.model_omega_z = get("model.omega_z", _parse_float,
                                cfg.model_omega_z)
        cfg.model_g = get("model.g", _parse_float, cfg.model_g)
        cfg.model_N = get("model.N", _parse_float, cfg.model_N)
        cfg.bath = BathConfig(
            kind=get("bath.kind", str.strip, "none"),
            alpha=get("bath.alpha", _parse_float, 0.3),
            s=get("bath.s", _parse_float, 1.0),
            omega_c=get("bath.omega_c", _parse_float, 1.0),
            gamma_phi=get("bath.gamma_phi", _parse_float, 0.0),
            beta_T=get("bath.beta_T", _parse_float, math.inf),
        )
        cfg.init_theta = get("init.theta", _parse_float, cfg.init_theta)
        cfg.init_q0 = get("init.q0", _parse_float, cfg.init_q0)
        cfg.init_p0 = get("init.p0", _parse_float, cfg.init_p0)
        cfg.integrator = IntegratorConfig(
            dt=get("integrator.dt", _parse_float, 0.02),
            t_max=get("integrator.t_max", _parse_float, 100.0),
            t_mem=get("integrator.t_mem", _parse_opt_float, None),
            eps_mem=get("integrator.eps_mem", _parse_float, 1e-8),
            scheme=get("integrator.scheme", str.strip, "accumulator"),
            record_every=get("integrator.record_every",
                             lambda s: int(s), 1),
            embedding_profile=get("integrator.embedding_profile",
                                  str.strip, "compact"),
        )
        cfg.bath_fit = BathFitConfig(
            n_terms=get("bath_fit.n_terms", lambda s: int(s), 3),
            fock_cutoff=get("bath_fit.fock_cutoff", _parse_int_list,
                            [6, 6, 6]),
            residual_threshold=get("bath_fit.residual_threshold",
                                   _parse_float, 0.02),
        )
        cfg.sweep = SweepConfig(
            g=get("sweep.g", _parse_float_list, []),
            N=get("sweep.N", _parse_float_list, []),
            theta=get("sweep.theta", _parse_float_list, []),
        )
        cfg.fit = FitConfig(
            g_c_hint=get("fit.g_c_hint", _parse_float,
                         0.15811388300841897),
            level_fraction=get("fit.level_fraction", _parse_float, 0.5),
            window_lo=get("fit.window_lo", _parse_float, 10.0),
            window_hi=get("fit.window_hi", _parse_float, 50.0),
            t_star=get("fit.t_star", _parse_float, 10.0),
            tail_start=get("fit.tail_start", _parse_opt_float, None),
        )
        cfg.output_dir = flat.get("output.dir", "")
        return cfg


# ---------------------------------------------------------------------------
# parsing entry points


def _flatten_json(obj, prefix=""):
    flat = {}
    for key, val in obj.items():
        full = f"{prefix}{key}"
        if isinstance(val, dict):
            flat.update(_flatten_json(val, f"{full}."))
        elif isinstance(val, list):
            flat[full] = ", ".join(
                _fmt_float(v) if isinstance(v, float) else str(v)
                for v in val)
        elif isinstance(val, bool):
            flat[full] = str(val).lower()
        elif isinstance(val, float):
            flat[full] = _fmt_float(val)
        elif val is None:
            flat[full] = "auto"
        else:
            flat[full] = str(val)
    return flat


def parse_config(text):
    """Parse flat key-value text or JSON into a RunConfig."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad JSON config: {exc}") from exc
        return RunConfig.from_flat(_flatten_json(obj))
    flat = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = line.split("=", 1)
        flat[key.strip()] = val.strip()
    return RunConfig.from_flat(flat)


def parse_overrides(cfg, overrides):
    """Apply repeatable ``key=value`` overrides on top of a RunConfig."""
    flat = dict(cfg.to_flat())
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, val = item.split("=", 1)
        flat[key.strip()] = val.strip()
    return RunConfig.from_flat(flat)
