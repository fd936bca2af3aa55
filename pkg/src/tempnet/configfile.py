"""Plain-text run configuration: `key = value` lines with `#` comments.

Every key is optional and falls back to the stock default; unknown keys
are an error so typos cannot silently change a run.  The preprocessing
target sizes are derived from the network input shape: the wavelet path
renders at doubled extents so its Haar step lands exactly on the
configured input size.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .network import TempNetConfig
from .preproc import PreprocConfig
from .training import TrainConfig

__all__ = ["ConfigError", "Configs", "parse_kv", "config_from_text", "config_to_text", "load_config_file"]


class ConfigError(ValueError):
    """A config file failed to parse or validate."""


@dataclass
class Configs:
    network: TempNetConfig
    preproc: PreprocConfig
    training: TrainConfig


def _parse_bool(value: str) -> bool:
    if value == "true":
        return True
    if value == "false":
        return False
    raise ConfigError(f"expected 'true' or 'false', got {value!r}")


def _parse_shape(value: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in value.split("x"))
    except ValueError:
        raise ConfigError(f"expected extents like 20x150x200x1, got {value!r}") from None


_SCHEMA: dict[str, type | str] = {
    "input_shape": "shape",
    "channels": int,
    "spatial_blocks": int,
    "temporal_blocks": int,
    "attention": "bool",
    "attention_reduction": int,
    "target_fps": float,
    "use_wavelet": "bool",
    "difference_frames": "bool",
    "optimizer": str,
    "learning_rate": float,
    "momentum": float,
    "batch_size": int,
    "epochs": int,
    "patience": int,
    "seed": int,
}


def parse_kv(text: str) -> dict[str, str]:
    """Raw key -> value strings, rejecting malformed or duplicate lines."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw.strip()!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def config_from_text(text: str) -> Configs:
    raw = parse_kv(text)
    values: dict[str, object] = {}
    for key, value in raw.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        kind = _SCHEMA[key]
        try:
            if kind == "bool":
                values[key] = _parse_bool(value)
            elif kind == "shape":
                values[key] = _parse_shape(value)
            elif kind is int:
                values[key] = int(value)
            elif kind is float:
                values[key] = float(value)
            else:
                values[key] = value
        except ConfigError as err:
            raise ConfigError(f"key {key!r}: {err}") from None
        except ValueError:
            raise ConfigError(f"key {key!r}: cannot parse {value!r} as {kind.__name__}") from None

    net_keys = (
        "input_shape",
        "channels",
        "spatial_blocks",
        "temporal_blocks",
        "attention",
        "attention_reduction",
    )
    try:
        net_cfg = TempNetConfig(**{k: values[k] for k in net_keys if k in values})
    except ValueError as err:
        raise ConfigError(str(err)) from None

    t, h, w, c = net_cfg.input_shape
    use_wavelet = bool(values.get("use_wavelet", False))
    expected_c = 4 if use_wavelet else 1
    if c != expected_c:
        raise ConfigError(
            f"input_shape channels must be {expected_c} when use_wavelet={str(use_wavelet).lower()}, got {c}"
        )
    try:
        pre_cfg = PreprocConfig(
            target_fps=float(values.get("target_fps", 5.0)),
            size_wavelet=(2 * h, 2 * w),
            size_plain=(h, w),
            use_wavelet=use_wavelet,
            difference_frames=bool(values.get("difference_frames", True)),
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None

    train_keys = ("optimizer", "learning_rate", "momentum", "batch_size", "epochs", "patience", "seed")
    try:
        train_cfg = TrainConfig(**{k: values[k] for k in train_keys if k in values})
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return Configs(net_cfg, pre_cfg, train_cfg)


def config_to_text(configs: Configs) -> str:
    """Canonical text form; parsing it back reproduces the same configs."""
    n, p, t = configs.network, configs.preproc, configs.training
    lines = [
        "# network",
        f"input_shape = {'x'.join(str(v) for v in n.input_shape)}",
        f"channels = {n.channels}",
        f"spatial_blocks = {n.spatial_blocks}",
        f"temporal_blocks = {n.temporal_blocks}",
        f"attention = {str(n.attention).lower()}",
        f"attention_reduction = {n.attention_reduction}",
        "# preprocessing",
        f"target_fps = {p.target_fps:g}",
        f"use_wavelet = {str(p.use_wavelet).lower()}",
        f"difference_frames = {str(p.difference_frames).lower()}",
        "# training",
        f"optimizer = {t.optimizer}",
        f"learning_rate = {t.learning_rate:g}",
        f"momentum = {t.momentum:g}",
        f"batch_size = {t.batch_size}",
        f"epochs = {t.epochs}",
        f"patience = {t.patience}",
        f"seed = {t.seed}",
    ]
    return "\n".join(lines) + "\n"


def load_config_file(path) -> Configs:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        return config_from_text(path.read_text(encoding="utf-8"))
    except ConfigError as err:
        raise ConfigError(f"{path}: {err}") from None
