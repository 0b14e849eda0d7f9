"""Run configuration: a flat key-value text file plus flag overrides.

Format: one `key = value` per line, `#` comments.  Keys prefixed
`model.` configure the denoiser; the rest configure data, schedule,
training and sampling.  Unknown keys are rejected so typos fail loudly.

The full-scale reference training budget is 3000 epochs; the desk-scale
default is a step budget (`steps`), with `epochs` available to switch.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .denoiser import DenoiserConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    t_diff: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    ddim_steps: int = 50
    cfg_scale: float = 4.0
    uncond_dropout: float = 0.10
    lr: float = 1e-4
    batch: int = 32
    steps: int = 2000
    epochs: int = 0            # 0 = use the step budget
    seed: int = 0
    workers: int = 1
    model: DenoiserConfig = field(default_factory=DenoiserConfig)

    def to_text(self):
        lines = []
        for f in fields(self):
            if f.name == "model":
                continue
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        for key, value in self.model.to_dict().items():
            lines.append(f"model.{key} = {value}")
        return "\n".join(lines) + "\n"


def parse_kv(text):
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(name, raw, default):
    try:
        if isinstance(default, bool):
            return str(raw).lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as e:
        raise ConfigError(f"bad value for {name!r}: {raw!r}") from e
    return raw


def load_config(path=None, overrides=None):
    """Build a RunConfig from an optional file and a {key: value} override
    mapping (same key syntax as the file)."""
    raw = {}
    if path is not None:
        with open(path) as fh:
            raw.update(parse_kv(fh.read()))
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[str(key)] = value
    run_fields = {f.name: f for f in fields(RunConfig) if f.name != "model"}
    run_kwargs = {}
    model_kwargs = {}
    for key, value in raw.items():
        if key.startswith("model."):
            model_kwargs[key[len("model."):]] = value
        elif key in run_fields:
            run_kwargs[key] = _coerce(key, value, run_fields[key].default)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        model = DenoiserConfig.from_dict(model_kwargs) if model_kwargs else DenoiserConfig()
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e
    return RunConfig(model=model, **run_kwargs)
