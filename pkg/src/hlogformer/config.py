"""Run configuration: an INI file with ``[run]``, ``[data]``, ``[model]``, ``[train]`` and ``[detect]`` sections.

Example::

    [run]
    seed = 0
    out = runs/hlog

    [data]
    corpus = data/logs.jsonl
    min_freq = 1

    [model]
    d_model = 64
    n_heads = 4
    d_ff = 128
    n_blocks = 1
    flat_blocks = 2
    max_window = 128
    summary_slots = 10

    [train]
    epochs = 50
    lr = 0.001
    vhm_weight = 0.1

    [detect]
    p = 0.2
    t_values = 1,5,10,20,50
    classify_t = 10
    alpha_grid = 0.05,0.1,0.15

Every key can be overridden on the command line with
``--set section.key=value``. Relative paths resolve against the directory
of the config file.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

from .model_core import EncoderConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


_MODEL_KEYS = {f.name for f in dataclasses.fields(EncoderConfig)} - {"vocab_size", "seed"}
_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} - {"mode", "seed"}
_DEFAULT_ALPHAS = tuple(round(0.05 * i, 2) for i in range(21))


@dataclass(frozen=True)
class DetectSettings:
    p: float = 0.2
    fake_seed: int = 0
    mask_seed: int = 1234
    mask_rate: float = 0.2
    t_values: tuple[int, ...] = (1, 5, 10, 20, 50)
    classify_t: int = 10
    alpha_grid: tuple[float, ...] = _DEFAULT_ALPHAS


@dataclass(frozen=True)
class RunConfig:
    seed: int
    out: Path | None = None
    corpus: Path | None = None
    min_freq: int = 1
    model: dict = field(default_factory=dict)
    flat_blocks: int = 2
    train: dict = field(default_factory=dict)
    detect: DetectSettings = DetectSettings()
    source: str = ""                  # effective INI text

    def encoder_config(self, vocab_size: int, mode: str = "bidirectional") -> EncoderConfig:
        kw = dict(self.model, vocab_size=vocab_size, seed=self.seed)
        if mode == "flat":
            kw["n_blocks"] = self.flat_blocks
        try:
            return EncoderConfig(**kw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"[model]: {e}") from e

    def train_config(self, mode: str) -> TrainConfig:
        try:
            return TrainConfig(**self.train, mode=mode, seed=self.seed)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"[train]: {e}") from e


def _parse_value(raw: str, like):
    if isinstance(like, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    return raw


def _defaults(cls) -> dict:
    return {f.name: f.default for f in dataclasses.fields(cls) if f.default is not dataclasses.MISSING}


def load_config(path: str | Path | None, overrides: list[str] = ()) -> RunConfig:
    parser = configparser.ConfigParser()
    base = Path(".")
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as e:
            raise ConfigError(str(e)) from e
        base = path.parent
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name, value.strip())

    allowed = {"run": {"seed", "out"}, "data": {"corpus", "min_freq"},
               "model": _MODEL_KEYS | {"flat_blocks"}, "train": _TRAIN_KEYS,
               "detect": {f.name for f in dataclasses.fields(DetectSettings)}}
    for section in parser.sections():
        if section not in allowed:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(parser[section]) - allowed[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")

    get = lambda s, k: parser.get(s, k, fallback=None)  # noqa: E731
    try:
        if get("run", "seed") is None:
            raise ConfigError("[run] seed is mandatory")
        seed = int(get("run", "seed"))
        out = Path(get("run", "out")) if get("run", "out") else None
        corpus = get("data", "corpus")
        corpus = (base / corpus) if corpus else None
        if corpus is not None and not corpus.is_file():
            raise ConfigError(f"corpus not found: {corpus}")
        min_freq = int(get("data", "min_freq") or 1)

        enc_defaults = _defaults(EncoderConfig)
        model = {k: _parse_value(v, enc_defaults[k]) for k, v in parser["model"].items()
                 if k != "flat_blocks"} if parser.has_section("model") else {}
        flat_blocks = int(get("model", "flat_blocks") or 2)
        tr_defaults = _defaults(TrainConfig)
        train = {k: _parse_value(v, tr_defaults[k]) for k, v in parser["train"].items()} \
            if parser.has_section("train") else {}

        det = {}
        if parser.has_section("detect"):
            d_defaults = _defaults(DetectSettings)
            for k, v in parser["detect"].items():
                if k == "t_values":
                    det[k] = tuple(int(x) for x in v.split(","))
                elif k == "alpha_grid":
                    det[k] = tuple(float(x) for x in v.split(","))
                else:
                    det[k] = _parse_value(v, d_defaults[k])
        detect = DetectSettings(**det)
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e

    if out is not None and not out.is_absolute():
        out = base / out
    cfg = RunConfig(seed, out, corpus, min_freq, model, flat_blocks, train, detect)
    return dataclasses.replace(cfg, source=render_config(cfg))


def render_config(cfg: RunConfig) -> str:
    """Effective configuration (defaults filled in) as INI text."""
    parser = configparser.ConfigParser()
    parser["run"] = {"seed": str(cfg.seed)}
    if cfg.out is not None:
        parser["run"]["out"] = str(cfg.out)
    parser["data"] = {"min_freq": str(cfg.min_freq)}
    if cfg.corpus is not None:
        parser["data"]["corpus"] = str(cfg.corpus)
    model = {k: v for k, v in _defaults(EncoderConfig).items() if k in _MODEL_KEYS}
    model.update(cfg.model)
    parser["model"] = {k: str(v) for k, v in sorted(model.items())}
    parser["model"]["flat_blocks"] = str(cfg.flat_blocks)
    train = {k: v for k, v in _defaults(TrainConfig).items() if k in _TRAIN_KEYS}
    train.update(cfg.train)
    parser["train"] = {k: str(v) for k, v in sorted(train.items())}
    det = dataclasses.asdict(cfg.detect)
    parser["detect"] = {k: ",".join(map(str, v)) if isinstance(v, tuple) else str(v) for k, v in det.items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
