"""Run configuration: an INI-style ``key = value`` file with sections.

``DEFAULTS`` is the single table of default values.  Values from a config
file override it, command-line flags override both.
"""

import configparser

from .data import SynthConfig
from .linalg import InvalidInput
from .trainer import TrainConfig
from .weights import LossConfig

DEFAULTS = {
    "run": {"seed": ""},
    "paths": {"dataset": "", "checkpoint": "", "features": "", "out": "out"},
    "synth": {
        "identities": "32",
        "per_view": "4",
        "dim": "16",
        "center_scale": "1.0",
        "noise_scale": "0.35",
        "view_offset_scale": "0.7",
    },
    "train": {
        "epochs": "40",
        "batch_size": "64",
        "learning_rate": "0.01",
        "lr_decay": "0.1",
        "lr_step": "25",
        "momentum": "0.9",
        "mode": "joint",
        "scale_by_batch": "true",
        "hidden": "32",
        "embed_dim": "8",
        "test_identities": "16",
    },
    "loss": {"alpha": "1.0", "tau": "1.0", "beta": "0.1", "lambda": "0.6", "normalize_rows": "true", "normalize_order": "before"},
    "eval": {"trials": "20", "ranks": "1,5,10,20", "seed": "0"},
}


class ConfigError(InvalidInput):
    pass


def load(path=None, overrides=()):
    """Build the resolved config.  ``overrides`` holds ``(section, key, value)`` triples."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_dict(DEFAULTS)
    if path:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"bad config {path}: {exc}") from None
    for section, key, value in overrides:
        if value is None:
            continue
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, str(value))
    for section in cp.sections():
        unknown = set(cp[section]) - set(DEFAULTS.get(section, {}))
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return cp


def dumps(cp):
    lines = []
    for section in cp.sections():
        lines.append(f"[{section}]")
        lines += [f"{k} = {v}" for k, v in cp[section].items()]
        lines.append("")
    return "\n".join(lines)


def _get(cp, section, key, kind):
    raw = cp.get(section, key)
    try:
        if kind is bool:
            return cp.getboolean(section, key)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None


def seed(cp, required=True):
    raw = cp.get("run", "seed").strip()
    if not raw:
        if required:
            raise ConfigError("a seed is required: set [run] seed or pass --seed")
        return 0
    return _get(cp, "run", "seed", int)


def synth_config(cp):
    s = "synth"
    return SynthConfig(
        identities=_get(cp, s, "identities", int),
        per_view=_get(cp, s, "per_view", int),
        dim=_get(cp, s, "dim", int),
        center_scale=_get(cp, s, "center_scale", float),
        noise_scale=_get(cp, s, "noise_scale", float),
        view_offset_scale=_get(cp, s, "view_offset_scale", float),
        seed=seed(cp),
    )


def loss_config(cp):
    s = "loss"
    return LossConfig(
        alpha=_get(cp, s, "alpha", float),
        tau=_get(cp, s, "tau", float),
        beta=_get(cp, s, "beta", float),
        lam=_get(cp, s, "lambda", float),
        normalize_rows=_get(cp, s, "normalize_rows", bool),
        normalize_order=_get(cp, s, "normalize_order", str),
    )


def train_config(cp):
    s = "train"
    hidden = cp.get(s, "hidden").strip()
    try:
        hidden = tuple(int(h) for h in hidden.split(",") if h.strip())
    except ValueError:
        raise ConfigError(f"[train] hidden = {hidden!r} must be a comma list of ints") from None
    return TrainConfig(
        epochs=_get(cp, s, "epochs", int),
        batch_size=_get(cp, s, "batch_size", int),
        learning_rate=_get(cp, s, "learning_rate", float),
        lr_decay=_get(cp, s, "lr_decay", float),
        lr_step=_get(cp, s, "lr_step", int),
        momentum=_get(cp, s, "momentum", float),
        seed=seed(cp),
        mode=cp.get(s, "mode"),
        scale_by_batch=_get(cp, s, "scale_by_batch", bool),
        hidden=hidden,
        embed_dim=_get(cp, s, "embed_dim", int),
        loss=loss_config(cp),
    )


def n_test_identities(cp):
    return _get(cp, "train", "test_identities", int)


def eval_options(cp):
    ranks = cp.get("eval", "ranks")
    try:
        ranks = tuple(int(r) for r in ranks.split(",") if r.strip())
    except ValueError:
        raise ConfigError(f"[eval] ranks = {ranks!r} must be a comma list of ints") from None
    if not ranks or min(ranks) < 1:
        raise ConfigError("[eval] ranks must be positive")
    return {"trials": _get(cp, "eval", "trials", int), "ranks": ranks, "seed": _get(cp, "eval", "seed", int)}
