"""Experiment configuration: presets, INI files, and flag overrides.

Precedence, lowest to highest: preset defaults, config file, command-line
flags. Files use a flat INI dialect (section headers, ``key = value`` lines,
full-line ``#``/``;`` comments); lists are whitespace-separated. Unknown
sections or keys are hard errors that name the offending line, so a typo
silently reverting a knob to its default cannot happen.
"""

from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass
from typing import Callable

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "KINDS",
    "PRESETS",
    "load_config",
    "parse_ini",
    "render_config",
]

KINDS = (
    "gamma-sweep",
    "fd-compare",
    "train",
    "eval",
    "verify-diss",
    "dagger",
    "dart",
)


class ConfigError(ValueError):
    """Raised for malformed files, unknown keys, or invalid values."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment run.

    Field names carry a section prefix where the bare name would be ambiguous
    (fd_radius vs. the rollout horizon, say); the section/key mapping used in
    files lives in _SCHEMA below.
    """

    kind: str = "gamma-sweep"
    preset: str = "desk"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    threads: int = 1
    plots: bool = True

    # system
    dim: int = 4
    contraction: float = 0.95
    gain_scale: float = 5.0
    nu: float = 1.0
    nu_grid: tuple[float, ...] = (0.3, 0.5, 1.0, 1.5, 2.0)
    expert_width: int = 16
    expert_depth: int = 2
    clip: float = 10.0

    # data
    train_trajectories: int = 20
    horizon: int = 100
    test_trajectories: int = 50

    # loss
    p: int = 1
    p_grid: tuple[int, ...] = (0, 1, 2)
    lambda0: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 10.0

    # train
    iterations: int = 2000
    batch_size: int = 100
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-4
    weight_decay: float = 0.01
    learner_width: int = 32
    learner_depth: int = 3

    # fd
    fd_count_grid: tuple[int, ...] = (1, 2, 4)
    fd_radius: float = 0.01
    fd_scheme: str = "sphere"
    fd_weight: float = 1.0

    # dagger
    dagger_budget: int = 30
    beta_decay: float = 0.5
    dagger_update_points: tuple[int, ...] = (1, 5, 20, 30)

    # dart
    dart_budget: int = 30
    dart_update_points: tuple[int, ...] = (1, 5, 20, 30)
    noise_trajectories: int = 5
    initial_noise: float = 1e-4

    # eval
    checkpoint: str = ""
    certify: bool = True
    verify_trials: int = 100
    perturbation_bound: float = 1.0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {self.preset!r}; expected one of {', '.join(PRESETS)}"
            )
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        positive = (
            ("dim", self.dim),
            ("gain_scale", self.gain_scale),
            ("nu", self.nu),
            ("expert_width", self.expert_width),
            ("expert_depth", self.expert_depth),
            ("clip", self.clip),
            ("train_trajectories", self.train_trajectories),
            ("horizon", self.horizon),
            ("test_trajectories", self.test_trajectories),
            ("iterations", self.iterations),
            ("batch_size", self.batch_size),
            ("learning_rate", self.learning_rate),
            ("learner_width", self.learner_width),
            ("learner_depth", self.learner_depth),
            ("fd_radius", self.fd_radius),
            ("dagger_budget", self.dagger_budget),
            ("dart_budget", self.dart_budget),
            ("noise_trajectories", self.noise_trajectories),
            ("initial_noise", self.initial_noise),
            ("verify_trials", self.verify_trials),
            ("perturbation_bound", self.perturbation_bound),
        )
        for name, value in positive:
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if not 0.0 < self.contraction < 1.0:
            raise ConfigError(f"contraction must lie in (0, 1), got {self.contraction}")
        # empty grids are legal: a sweep over nothing emits a header-only CSV
        if any(v <= 0 for v in self.nu_grid):
            raise ConfigError("nu_grid entries must be positive")
        if self.p not in (0, 1, 2):
            raise ConfigError(f"p must be 0, 1, or 2, got {self.p}")
        if any(q not in (0, 1, 2) for q in self.p_grid):
            raise ConfigError("p_grid entries must be 0, 1, or 2")
        for name, value in (("lambda0", self.lambda0), ("lambda1", self.lambda1),
                            ("lambda2", self.lambda2), ("fd_weight", self.fd_weight),
                            ("weight_decay", self.weight_decay)):
            if value < 0:
                raise ConfigError(f"{name} must be non-negative, got {value}")
        for name, value in (("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)):
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {value}")
        if self.adam_eps <= 0:
            raise ConfigError(f"adam_eps must be positive, got {self.adam_eps}")
        if any(n < 0 for n in self.fd_count_grid):
            raise ConfigError("count_grid entries must be non-negative")
        if self.fd_scheme not in ("sphere", "basis"):
            raise ConfigError(f"scheme must be 'sphere' or 'basis', got {self.fd_scheme!r}")
        if not 0.0 < self.beta_decay <= 1.0:
            raise ConfigError(f"beta_decay must lie in (0, 1], got {self.beta_decay}")
        for name, points, budget in (
            ("dagger update_points", self.dagger_update_points, self.dagger_budget),
            ("dart update_points", self.dart_update_points, self.dart_budget),
        ):
            if any(k < 1 or k > budget for k in points):
                raise ConfigError(f"{name} must lie in [1, budget], got {points}")
            if list(points) != sorted(set(points)):
                raise ConfigError(f"{name} must be strictly increasing, got {points}")
        if self.kind == "eval" and not self.checkpoint:
            raise ConfigError("eval needs a checkpoint path ([eval] checkpoint = ...)")


# Preset deltas relative to the dataclass defaults. The defaults above ARE the
# desk preset; paper scales the problem to publication size.
PRESETS: dict[str, dict[str, object]] = {
    "desk": {},
    "paper": {
        "seeds": tuple(range(10)),
        "dim": 10,
        "expert_width": 32,
        "learner_width": 64,
        "iterations": 4500,
        "nu_grid": (0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0),
        "fd_count_grid": (1, 2, 5, 10),
    },
}


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split())


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split())


# section -> key -> (config field, parser)
_SCHEMA: dict[str, dict[str, tuple[str, Callable[[str], object]]]] = {
    "experiment": {
        "kind": ("kind", str),
        "preset": ("preset", str),
        "seeds": ("seeds", _parse_int_list),
        "threads": ("threads", int),
        "plots": ("plots", _parse_bool),
    },
    "system": {
        "dim": ("dim", int),
        "contraction": ("contraction", float),
        "gain_scale": ("gain_scale", float),
        "nu": ("nu", float),
        "nu_grid": ("nu_grid", _parse_float_list),
        "expert_width": ("expert_width", int),
        "expert_depth": ("expert_depth", int),
        "clip": ("clip", float),
    },
    "data": {
        "train_trajectories": ("train_trajectories", int),
        "horizon": ("horizon", int),
        "test_trajectories": ("test_trajectories", int),
    },
    "loss": {
        "p": ("p", int),
        "p_grid": ("p_grid", _parse_int_list),
        "lambda0": ("lambda0", float),
        "lambda1": ("lambda1", float),
        "lambda2": ("lambda2", float),
    },
    "train": {
        "iterations": ("iterations", int),
        "batch_size": ("batch_size", int),
        "learning_rate": ("learning_rate", float),
        "adam_beta1": ("adam_beta1", float),
        "adam_beta2": ("adam_beta2", float),
        "adam_eps": ("adam_eps", float),
        "weight_decay": ("weight_decay", float),
        "learner_width": ("learner_width", int),
        "learner_depth": ("learner_depth", int),
    },
    "fd": {
        "count_grid": ("fd_count_grid", _parse_int_list),
        "radius": ("fd_radius", float),
        "scheme": ("fd_scheme", str),
        "weight": ("fd_weight", float),
    },
    "dagger": {
        "budget": ("dagger_budget", int),
        "beta_decay": ("beta_decay", float),
        "update_points": ("dagger_update_points", _parse_int_list),
    },
    "dart": {
        "budget": ("dart_budget", int),
        "update_points": ("dart_update_points", _parse_int_list),
        "noise_trajectories": ("noise_trajectories", int),
        "initial_noise": ("initial_noise", float),
    },
    "eval": {
        "checkpoint": ("checkpoint", str),
        "certify": ("certify", _parse_bool),
        "verify_trials": ("verify_trials", int),
        "perturbation_bound": ("perturbation_bound", float),
    },
}

# Inverse map used when echoing the effective configuration back out.
_FIELD_TO_SECTION_KEY = {
    field: (section, key)
    for section, keys in _SCHEMA.items()
    for key, (field, _) in keys.items()
}


def parse_ini(text: str, source: str = "<config>") -> dict[str, object]:
    """Parse INI text into a {field: value} dict, rejecting anything unknown.

    Every diagnostic names the source and 1-based line number. Duplicate keys
    within a section are errors too: the second assignment is almost always a
    stale leftover, and last-wins semantics would hide it.
    """
    values: dict[str, object] = {}
    seen: set[tuple[str, str]] = set()
    section: str | None = None
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(
                    f"{source}:{lineno}: unknown section [{section}]; "
                    f"expected one of {', '.join(sorted(_SCHEMA))}"
                )
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        if section is None:
            raise ConfigError(f"{source}:{lineno}: key outside any [section]")
        key, _, value_text = line.partition("=")
        key = key.strip()
        value_text = value_text.strip()
        if key not in _SCHEMA[section]:
            raise ConfigError(
                f"{source}:{lineno}: unknown key {key!r} in [{section}]; "
                f"expected one of {', '.join(sorted(_SCHEMA[section]))}"
            )
        if (section, key) in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} in [{section}]")
        seen.add((section, key))
        field, parser = _SCHEMA[section][key]
        try:
            values[field] = parser(value_text)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    return values


def load_config(
    path: str | None = None,
    *,
    kind: str | None = None,
    preset: str | None = None,
    seeds: tuple[int, ...] | None = None,
    threads: int | None = None,
) -> ExperimentConfig:
    """Merge preset defaults, an optional config file, and flag overrides."""
    file_values: dict[str, object] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
        file_values = parse_ini(text, source=path)

    effective_preset = preset or file_values.get("preset", "desk")
    if effective_preset not in PRESETS:
        raise ConfigError(
            f"unknown preset {effective_preset!r}; expected one of {', '.join(PRESETS)}"
        )

    merged: dict[str, object] = dict(PRESETS[effective_preset])
    merged.update(file_values)
    merged["preset"] = effective_preset
    if kind is not None:
        file_kind = file_values.get("kind")
        if file_kind is not None and file_kind != kind:
            raise ConfigError(
                f"config file sets kind = {file_kind} but the command line asked for {kind}"
            )
        merged["kind"] = kind
    if preset is not None:
        merged["preset"] = preset
    if seeds is not None:
        merged["seeds"] = tuple(seeds)
    if threads is not None:
        merged["threads"] = threads

    cfg = ExperimentConfig(**merged)  # type: ignore[arg-type]
    cfg.validate()
    return cfg


def _render_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return " ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(cfg: ExperimentConfig) -> str:
    """Serialize the effective configuration as a reloadable INI document."""
    per_section: dict[str, list[tuple[str, str]]] = {name: [] for name in _SCHEMA}
    for field in dataclasses.fields(cfg):
        section, key = _FIELD_TO_SECTION_KEY[field.name]
        per_section[section].append((key, _render_value(getattr(cfg, field.name))))
    lines = ["# effective configuration (reloadable)"]
    for section, pairs in per_section.items():
        if not pairs:
            continue
        lines.append("")
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {value}" for key, value in pairs)
    return "\n".join(lines) + "\n"
