"""Strict flat ``key = value`` run configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError
from .experiments import DEFAULT_COUPLING_SEED, DEFAULT_SEED, PROTOCOLS, Protocol, preset
from .hamiltonian import QE_AXES
from .propagator import PropagatorConfig


class ConfigParseError(ConfigurationError):
    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.key = key


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _float_list(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _int_list(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _positive(v):
    if not v > 0:
        raise ValueError("must be > 0")
    return v


def _nonneg(v):
    if v < 0:
        raise ValueError("must be >= 0")
    return v


def _ab_positive(v):
    if not v > 0:
        raise ValueError("double-well coefficients require a, b > 0")
    return v


def _choice(options):
    def check(v):
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v
    return check


# key -> (parser, post-check, section)
SCHEMA = {
    "protocol": (str, _choice(PROTOCOLS), "run"),
    "seed": (int, _nonneg, "run"),
    "output_dir": (str, None, "run"),
    "emit_svg": (_bool, None, "run"),
    "checkpoint_interval": (int, _nonneg, "run"),
    "n_env": (int, _nonneg, "model"),
    "coupling_seed": (int, _nonneg, "model"),
    "qubit_alpha": (complex, None, "model"),
    "qubit_beta": (complex, None, "model"),
    "fragment_sizes": (_int_list, None, "model"),
    "fragment_samples": (int, _positive, "model"),
    "omega0": (float, None, "physics"),
    "omega_env": (_float_list, None, "physics"),
    "g_env": (_float_list, None, "physics"),
    "kappa_eo": (_float_list, None, "physics"),
    "lambda_qo": (float, None, "physics"),
    "mass": (float, _positive, "physics"),
    "a_well": (float, _ab_positive, "physics"),
    "b_well": (float, _ab_positive, "physics"),
    "grid_points": (int, None, "physics"),
    "grid_half_width": (float, _positive, "physics"),
    "qe_axis": (str, _choice(QE_AXES), "physics"),
    "dt": (float, _positive, "prop"),
    "krylov_dim": (int, None, "prop"),
    "tolerance": (float, None, "prop"),
    "t_final": (float, _nonneg, "prop"),
    "record_stride": (int, _positive, "prop"),
}


@dataclass
class RunConfig:
    protocol: str = "full_model"
    seed: int = DEFAULT_SEED
    output_dir: str = "unilab_out"
    emit_svg: bool = True
    checkpoint_interval: int = 0
    n_env: int | None = None
    coupling_seed: int = DEFAULT_COUPLING_SEED
    qubit_alpha: complex | None = None
    qubit_beta: complex | None = None
    fragment_sizes: tuple[int, ...] | None = None
    fragment_samples: int = 50
    physics: dict = field(default_factory=dict)
    prop: dict = field(default_factory=dict)
    source: str | None = None
    lines: dict = field(default_factory=dict)

    def to_protocol(self) -> Protocol:
        """Resolve presets and overrides into a validated :class:`Protocol`."""
        physics = dict(self.physics)
        n_env = self.n_env
        explicit = [k for k in ("omega_env", "g_env", "kappa_eo") if k in physics]
        if explicit:
            lengths = {k: len(physics[k]) for k in explicit}
            n = next(iter(lengths.values()))
            if n_env is not None and any(v != n_env for v in lengths.values()):
                raise ConfigParseError(f"list lengths {lengths} disagree with n_env = {n_env}",
                                       self.lines.get(explicit[0]), explicit[0])
            n_env = n if n_env is None else n_env
        qubit = None
        if self.qubit_alpha is not None or self.qubit_beta is not None:
            a = self.qubit_alpha if self.qubit_alpha is not None else 0.0
            b = self.qubit_beta if self.qubit_beta is not None else 0.0
            if self.qubit_alpha is None:
                a = math.sqrt(max(0.0, 1.0 - abs(b) ** 2))
            if self.qubit_beta is None:
                b = math.sqrt(max(0.0, 1.0 - abs(a) ** 2))
            qubit = (a, b)
        try:
            base = preset(self.protocol, self.seed, qubit_init=qubit, n_env=n_env,
                          coupling_seed=self.coupling_seed)
            params = base.params.replace(**physics) if physics else base.params
            prop = dict(vars(base.prop))
            prop.update(self.prop)
            protocol = base.replace(params=params, prop=PropagatorConfig(**prop),
                                    fragment_sizes=self.fragment_sizes,
                                    fragment_samples=self.fragment_samples)
        except ConfigurationError as exc:
            key = _guess_key(str(exc), self.lines)
            raise ConfigParseError(str(exc), self.lines.get(key), key) from exc
        return protocol

    def echo(self) -> dict:
        out = {k: getattr(self, k) for k in ("protocol", "seed", "output_dir", "emit_svg",
                                             "checkpoint_interval", "n_env", "coupling_seed",
                                             "fragment_sizes", "fragment_samples")}
        for k in ("qubit_alpha", "qubit_beta"):
            v = getattr(self, k)
            out[k] = None if v is None else [v.real, v.imag]
        out.update(self.physics)
        out.update(self.prop)
        out["source"] = self.source
        return out


def _guess_key(message: str, lines: dict) -> str | None:
    for key in sorted(lines, key=len, reverse=True):
        if key in message:
            return key
    for key, hint in (("a_well", "a, b"), ("grid_points", "grid"), ("krylov_dim", "krylov"),
                      ("tolerance", "tolerance"), ("qubit_alpha", "qubit")):
        if hint in message and key in lines:
            return key
    return None


def parse_config_text(text: str, source: str | None = None) -> RunConfig:
    cfg = RunConfig(source=source)
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError("expected 'key = value'", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigParseError("unknown key", lineno, key)
        if key in seen:
            raise ConfigParseError(f"duplicate key (first set on line {seen[key]})", lineno, key)
        seen[key] = lineno
        parser, check, section = SCHEMA[key]
        try:
            parsed = parser(value)
            if check is not None:
                parsed = check(parsed)
        except ValueError as exc:
            raise ConfigParseError(f"invalid value {value!r}: {exc}", lineno, key) from None
        if section == "physics":
            cfg.physics[key] = parsed
        elif section == "prop":
            cfg.prop[key] = parsed
        else:
            setattr(cfg, key, parsed)
    cfg.lines = seen
    cfg.to_protocol()  # full validation up front
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigParseError(f"config file not found: {path}") from None
    except UnicodeDecodeError as exc:
        raise ConfigParseError(f"config file is not UTF-8: {exc}") from None
    return parse_config_text(text, str(path))
