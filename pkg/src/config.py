import json
import math
import os
import logging

from .errors import ConfigError


class Config:
    """Application settings: defaults, then config/settings.json, then BMOD_* environment variables."""
    DEFAULTS = {
        "output_dir": "runs",
        "workers": 0,
        "log_level": "INFO",
        "record_stride": 10,
        "mod_points": 256,
        "mod_length": 40.0 * math.pi,
    }
    ENVIRONMENT = {
        "BMOD_OUTPUT_DIR": ("output_dir", str),
        "BMOD_WORKERS": ("workers", int),
        "BMOD_LOG_LEVEL": ("log_level", str),
        "BMOD_RECORD_STRIDE": ("record_stride", int),
    }

    def __init__(self, config_path="config/settings.json"):
        self.config = self.DEFAULTS.copy()

        # Determine the absolute path for the config file
        base_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        self.config_path = os.path.join(base_dir, config_path)

        self.load_from_file()
        self.load_from_env()

    def load_from_file(self):
        if os.path.exists(self.config_path):
            try:
                with open(self.config_path, 'r') as f:
                    data = json.load(f)
                    if data:
                        self.config.update(data)
            except Exception as e:
                logging.warning(f"Failed to load config file: {e}")
        else:
            logging.info(f"Config file not found at {self.config_path}, using defaults.")

    def load_from_env(self):
        for variable, (key, kind) in self.ENVIRONMENT.items():
            value = os.environ.get(variable)
            if not value:
                continue
            try:
                self.config[key] = kind(value)
            except ValueError:
                logging.warning(f"Ignoring {variable}={value!r}: expected {kind.__name__}")

    def get(self, key):
        return self.config.get(key)


def _float_list(values):
    return [float(v) for v in values]


# section -> key -> default; the default's type is the key's type
SCHEMA = {
    "experiment": {
        "kind": "simulate",
        "name": "",
        "seed": 0,
        "output_dir": "",
        "level": "physical",
        "initial": "random",
        "amplitude": 1e-3,
        "mu0": -0.05,
        "eps": 1e-3,
    },
    "model": {
        "id": "m1",
        "a": 1.0,
        "d1": 1.0,
        "d2": 0.5,
        "dimension": 1,
    },
    "grid": {
        "points": 256,
        "length": 0.0,
        "cross_points": 32,
        "mod_points": 0,
        "mod_length": 0.0,
    },
    "solver": {
        "dt": 0.0,
        "scheme": "etdrk4",
        "dealias": True,
        "nonlinear": True,
        "record_stride": 0,
        "t_end": 10.0,
    },
    "geometry": {
        "beta": 0,
        "chart": "k2",
        "r": 0.1,
        "slow": -1.0,
        "frame": "lab",
        "k1_to_k2": 1.0,
        "k2_to_k3": 1.0,
    },
    "sweep": {
        "deltas": [0.1, 0.2],
        "eps": [1e-3, 1e-4],
        "workers": 0,
    },
    "validate": {
        "deltas": [0.2, 0.1, 0.05],
        "mod_points": 64,
        "threshold": 1e-2,
        "amp0": 1e-6,
        "slope_min": 1.7,
        "slope_max": 2.3,
        "check": True,
        "dynamic": False,
        "dynamic_eps": 1e-4,
        "dynamic_mu0": -0.04,
    },
    "spectra": {
        "mu": 0.01,
        "xi_min": 0.0,
        "xi_max": 2.0,
        "xi_points": 201,
        "method": "series",
    },
}

CHOICES = {
    ("experiment", "kind"): ("spectra", "simulate", "derive", "validate", "sweep"),
    ("experiment", "level"): ("physical", "modulation"),
    ("experiment", "initial"): ("zero", "mode", "homogeneous", "random"),
    ("solver", "scheme"): ("etdrk4", "imex-bdf2"),
    ("geometry", "chart"): ("k1", "k2", "k3", "static"),
    ("geometry", "frame"): ("lab", "comoving"),
    ("spectra", "method"): ("series", "numeric"),
}


def coerce(section, key, value):
    """Converts a raw string or Python value to the type of the schema default."""
    default = SCHEMA[section][key]
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                result = value
            elif str(value).strip().lower() in ("true", "false"):
                result = str(value).strip().lower() == "true"
            else:
                raise ValueError(f"expected true or false, got {value!r}")
        elif isinstance(default, int):
            result = int(value)
        elif isinstance(default, float):
            result = float(value)
        elif isinstance(default, list):
            items = value if isinstance(value, (list, tuple)) else [v for v in str(value).split(",") if v.strip()]
            result = _float_list(items)
        else:
            result = str(value).strip()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{section}] {key}: {e}") from e
    choices = CHOICES.get((section, key))
    if choices and result.lower() not in choices:
        raise ConfigError(f"[{section}] {key} must be one of {', '.join(choices)}, got {result!r}")
    return result.lower() if choices else result


def _render(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


class ExperimentConfig:
    """
    Experiment description in `key = value` lines under `[section]`
    headers; `#` starts a comment. Every key has a typed default and unknown
    sections or keys are rejected with their line number.
    """

    def __init__(self, values=None):
        self.values = {section: dict(keys) for section, keys in SCHEMA.items()}
        for section, keys in (values or {}).items():
            for key, value in keys.items():
                self.set(section, key, value)

    @classmethod
    def parse(cls, text):
        config = cls()
        section = None
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip().lower()
                if section not in SCHEMA:
                    raise ConfigError(f"Unknown section [{section}]", line=number)
                continue
            if "=" not in line:
                raise ConfigError(f"Expected 'key = value', got {raw.strip()!r}", line=number)
            if section is None:
                raise ConfigError("Key outside of any [section]", line=number)
            key, value = (part.strip() for part in line.split("=", 1))
            try:
                config.set(section, key.lower(), value)
            except ConfigError as e:
                raise ConfigError(str(e), line=number) from e
        return config

    @classmethod
    def load(cls, path):
        try:
            with open(path, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(f"Cannot read config {path}: {e}") from e
        logging.info(f"Loaded experiment config {path}")
        return cls.parse(text)

    def set(self, section, key, value):
        if section not in SCHEMA:
            raise ConfigError(f"Unknown section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"Unknown key '{key}' in [{section}]")
        self.values[section][key] = coerce(section, key, value)

    def get(self, section, key):
        return self.values[section][key]

    def section(self, section):
        return dict(self.values[section])

    def dumps(self):
        """Canonical rendering; parse(dumps()) == self."""
        lines = []
        for section, keys in self.values.items():
            lines.append(f"[{section}]")
            lines.extend(f"{key} = {_render(value)}" for key, value in keys.items())
            lines.append("")
        return "\n".join(lines)

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.values == other.values
