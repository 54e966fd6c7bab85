"""Flat ``key = value`` configuration files.

One assignment per line, ``#`` starts a comment, blank lines are ignored.
Parameter keys are the field names of :class:`~mlpurcell.models.DimerParams`
or :class:`~mlpurcell.models.JCParams` (energies and rates in cm^-1,
temperature in K, times in ps). Run keys select the command and its sweep.
Unknown keys produce warnings so older tools can read newer files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .errors import ConfigError
from .models import DimerParams, JCParams

RUN_KEYS = {
    "command": str,
    "sweep": str,
    "output": str,
    "format": str,
    "jobs": int,
    "window": str,
    "duration": float,
    "dt": float,
    "g_values": str,
    "vib_modes": str,
    "com_levels": int,
}

COMMANDS = ("jc-spectrum", "dimer-spectrum", "dynamics", "fit-purcell", "sweep-deloc", "reduced-compare")


@dataclass(frozen=True)
class Diagnostic:
    line: int | None
    key: str | None
    message: str
    severity: str = "error"

    def __str__(self):
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{self.severity}: {where}{self.message}"


@dataclass
class ConfigFile:
    """Parsed assignments with their source lines."""

    values: dict
    lines: dict
    diagnostics: list

    @property
    def errors(self):
        return [d for d in self.diagnostics if d.severity == "error"]

    @property
    def warnings(self):
        return [d for d in self.diagnostics if d.severity == "warning"]


def _field_types(cls):
    hints = {"float": float, "int": int, "bool": bool, "float | None": float}
    return {f.name: hints.get(str(f.type), float) for f in fields(cls)}


DIMER_KEYS = _field_types(DimerParams)
JC_KEYS = _field_types(JCParams)


def convert(raw, kind):
    """Convert the text of a value to ``kind``; ``none``/``auto`` map to None for floats."""
    text = raw.strip()
    if kind is str:
        return text
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind is int:
        return int(text)
    if text.lower() in ("none", "auto"):
        return None
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {text!r}")
    return v


def parse_text(text, known=None):
    """Parse configuration text.

    ``known`` maps accepted keys to value types; keys outside it are kept as
    raw strings and reported as warnings.
    """
    known = {**RUN_KEYS, **JC_KEYS, **DIMER_KEYS} if known is None else known
    values, where, diags = {}, {}, []
    for n, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            diags.append(Diagnostic(n, None, f"expected 'key = value', got {body!r}"))
            continue
        key, raw = (s.strip() for s in body.split("=", 1))
        if not key:
            diags.append(Diagnostic(n, None, "missing key"))
            continue
        if key in values:
            diags.append(Diagnostic(n, key, f"duplicate key {key!r} (first set on line {where[key]})"))
            continue
        if key not in known:
            diags.append(Diagnostic(n, key, f"unknown key {key!r} ignored", "warning"))
            continue
        try:
            values[key] = convert(raw, known[key])
        except ValueError as exc:
            diags.append(Diagnostic(n, key, f"{key}: {exc}"))
            continue
        where[key] = n
    return ConfigFile(values, where, diags)


def read_config(path):
    """Parse a UTF-8 configuration file; unreadable files raise :class:`ConfigError`."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_text(text)


def model_kind(command):
    return JCParams if command == "jc-spectrum" else DimerParams


def params_from(cfg, cls=DimerParams, overrides=None):
    """Build a parameter record from parsed values.

    Raises
    ------
    ConfigError
        With the line of the first offending key.
    """
    keys = DIMER_KEYS if cls is DimerParams else JC_KEYS
    kw = {k: v for k, v in cfg.values.items() if k in keys}
    kw.update(overrides or {})
    problems = param_problems(cls, kw)
    if problems:
        key, msg = problems[0]
        raise ConfigError(msg, cfg.lines.get(key))
    return cls(**kw)


def param_problems(cls, kw):
    """``(key, message)`` violations of the record's invariants, without raising."""
    if cls is DimerParams:
        try:
            base = DimerParams.__new__(DimerParams)
            for f in fields(DimerParams):
                default = f.default_factory() if callable(f.default_factory) else f.default
                object.__setattr__(base, f.name, kw.get(f.name, default))
            return base.problems()
        except TypeError as exc:
            return [(None, str(exc))]
    try:
        cls(**kw)
    except ValueError as exc:
        msg = str(exc)
        key = next((k for k in kw if k in msg), None)
        return [(key, msg)]
    return []


def validate(path):
    """All diagnostics for a configuration file, without running anything."""
    cfg = read_config(path)
    diags = list(cfg.diagnostics)
    command = cfg.values.get("command")
    if command is not None and command not in COMMANDS:
        diags.append(Diagnostic(cfg.lines.get("command"), "command", f"unknown command {command!r}"))
    cls = model_kind(command)
    own = DIMER_KEYS if cls is DimerParams else JC_KEYS
    other = JC_KEYS if cls is DimerParams else DIMER_KEYS
    for k in cfg.values:
        if k in other and k not in own and k not in RUN_KEYS:
            diags.append(Diagnostic(cfg.lines[k], k, f"key {k!r} does not apply to {cls.__name__}", "warning"))
    kw = {k: v for k, v in cfg.values.items() if k in own}
    for key, msg in param_problems(cls, kw):
        diags.append(Diagnostic(cfg.lines.get(key), key, msg))
    for key in ("jobs", "com_levels"):
        if key in cfg.values and cfg.values[key] < 1:
            diags.append(Diagnostic(cfg.lines[key], key, f"{key} must be >= 1"))
    for key in ("duration", "dt"):
        if key in cfg.values and not cfg.values[key] > 0:
            diags.append(Diagnostic(cfg.lines[key], key, f"{key} must be positive"))
    for key, parse in (("sweep", parse_sweep), ("window", parse_window)):
        if key in cfg.values:
            try:
                parse(cfg.values[key])
            except ValueError as exc:
                diags.append(Diagnostic(cfg.lines[key], key, str(exc)))
    return sorted(diags, key=lambda d: (d.line is None, d.line or 0))


def parse_sweep(spec):
    """``var=start:stop:steps`` to ``(var, start, stop, steps)``."""
    if "=" not in spec:
        raise ValueError(f"sweep must look like var=start:stop:steps, got {spec!r}")
    var, rng = (s.strip() for s in spec.split("=", 1))
    parts = rng.split(":")
    if not var or len(parts) != 3:
        raise ValueError(f"sweep must look like var=start:stop:steps, got {spec!r}")
    start, stop, steps = float(parts[0]), float(parts[1]), int(parts[2])
    if steps < 1:
        raise ValueError("sweep needs at least one step")
    if steps > 1 and start == stop:
        raise ValueError("sweep start and stop coincide")
    return var, start, stop, steps


def parse_window(spec):
    """``t0:t1`` (either side may be empty for the trajectory bounds)."""
    parts = spec.split(":")
    if len(parts) != 2:
        raise ValueError(f"window must look like t0:t1, got {spec!r}")
    t0 = float(parts[0]) if parts[0].strip() else None
    t1 = float(parts[1]) if parts[1].strip() else None
    if t0 is not None and t1 is not None and not t1 > t0:
        raise ValueError(f"window end {t1} must exceed start {t0}")
    return t0, t1


def dumps(params, extra=None):
    """Serialise a parameter record (and optional run keys) as config text."""
    out = []
    for k, v in (extra or {}).items():
        out.append(f"{k} = {v}")
    for f in fields(params):
        v = getattr(params, f.name)
        if v is None:
            text = "none"
        elif isinstance(v, bool):
            text = "true" if v else "false"
        elif isinstance(v, float):
            text = repr(v)
        else:
            text = str(v)
        out.append(f"{f.name} = {text}")
    return "\n".join(out) + "\n"


def loads(text, cls=DimerParams):
    """Inverse of :func:`dumps` for the parameter part."""
    cfg = parse_text(text)
    if cfg.errors:
        d = cfg.errors[0]
        raise ConfigError(d.message, d.line)
    return params_from(cfg, cls)
