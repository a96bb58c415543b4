"""JSON configuration with module-namespaced keys."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace

from .clustering import ClusterConfig
from .detector import DetectorConfig
from .imm import ImmConfig
from .tracking import TrackerConfig


class ConfigError(ValueError):
    pass


# file key -> dataclass field, per section
_KEYS = {
    "clustering": (ClusterConfig, {"cell_size": "cell_size", "thre_starter": "thre_starter",
                                   "thre_final": "thre_final", "beta_gap": "beta_gap"}),
    "tracker": (TrackerConfig, {"v_min": "v_min", "v_max": "v_max", "m_confirm": "m_confirm",
                                "n_window": "n_window", "m_delete": "m_delete",
                                "delete_window": "delete_window",
                                "gate_probability": "gate_probability",
                                "process_noise": "process_noise",
                                "measurement_noise": "measurement_noise"}),
    "imm": (ImmConfig, {"gamma_matrix": "transition", "q_cv": "q_cv", "q_ca": "q_ca", "r": "r",
                        "u_fit_window": "u_fit_window", "mu_init": "mu_init"}),
    "detector": (DetectorConfig, {"v_thre": "v_thre", "a_thre": "a_thre", "p_thre": "p_thre",
                                  "window": "window", "refractory": "refractory"}),
}


def _freeze(v):
    if isinstance(v, list):
        return tuple(_freeze(x) for x in v)
    return v


@dataclass(frozen=True)
class PipelineConfig:
    clustering: ClusterConfig = field(default_factory=ClusterConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    imm: ImmConfig = field(default_factory=ImmConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        sections: dict[str, dict] = {name: {} for name in _KEYS}
        for key, value in d.items():
            if key in _KEYS:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be an object")
                for sub, v in value.items():
                    sections[key][sub] = v
            elif "." in key and key.split(".", 1)[0] in _KEYS:
                sec, sub = key.split(".", 1)
                sections[sec][sub] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        built = {}
        for name, (klass, mapping) in _KEYS.items():
            kwargs = {}
            for sub, v in sections[name].items():
                if sub not in mapping:
                    raise ConfigError(f"unknown config key {name}.{sub}")
                kwargs[mapping[sub]] = _freeze(v)
            try:
                built[name] = klass(**kwargs)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid {name} settings: {exc}") from None
        return cls(**built)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def with_frame_period(self, t_frame: float) -> "PipelineConfig":
        return replace(self, tracker=replace(self.tracker, t_s=t_frame),
                       imm=replace(self.imm, t=t_frame))

    def to_dict(self) -> dict:
        out = {}
        for name, (_, mapping) in _KEYS.items():
            obj = getattr(self, name)
            out[name] = {k: _jsonable(getattr(obj, f)) for k, f in mapping.items()}
        return out


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


__all__ = ["PipelineConfig", "ConfigError"]
