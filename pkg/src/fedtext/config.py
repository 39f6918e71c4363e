"""Experiment configuration: flat key=value sections, validation, hashing.

Config files use INI-style sections ([experiment], [data], [model],
[federation]) holding flat key=value pairs.  Parsing is strict: unknown keys,
bad values, and inconsistent scheme/mu combinations are all rejected with the
offending field named.  The config hash covers every semantically meaningful
field (everything except the output directory) and is stable across machines.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

SCHEMES = ("centralized", "single", "fedavg", "fedprox")
PARTITION_MODES = ("iid", "by_source")
DEFAULT_MU_GRID = (1.0, 0.5, 0.1, 0.01, 0.001)


class ConfigError(ValueError):
    """Raised for malformed or inconsistent experiment configs."""


@dataclass(frozen=True)
class DataConfig:
    # file-backed corpora (one path per source) or a synthetic profile
    files: tuple[str, ...] = ()
    synthetic: bool = False
    types: tuple[str, ...] = ("GENE", "DIS")
    lexicon_size: int = 50
    sentences: tuple[int, ...] = (500,)
    sources: int = 1
    heterogeneity: float = 0.0
    cue_rate: float = 0.5
    data_seed: int = 13
    partition: str = "iid"
    max_tokens: int = 512


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "rnn_crf_tagger"
    embed_dim: int = 16
    hidden_dim: int = 24
    window_radius: int = 0


@dataclass(frozen=True)
class FederationSection:
    clients: int = 2
    rounds: int = 5
    local_epochs: int = 1
    batch_size: int = 16
    mu: float = 0.0
    optimizer: str = "adam"
    base_lr: float = 1e-3
    warmup_frac: float = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "ner"
    scheme: str = "fedavg"
    repeats: int = 3
    base_seed: int = 0
    output_dir: str = "runs/out"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    federation: FederationSection = field(default_factory=FederationSection)


_SECTIONS = {
    "experiment": ("task", "scheme", "repeats", "base_seed", "output_dir"),
    "data": (
        "files", "synthetic", "types", "lexicon_size", "sentences", "sources",
        "heterogeneity", "cue_rate", "data_seed", "partition", "max_tokens",
    ),
    "model": ("kind", "embed_dim", "hidden_dim", "window_radius"),
    "federation": (
        "clients", "rounds", "local_epochs", "batch_size", "mu", "optimizer",
        "base_lr", "warmup_frac",
    ),
}


def _convert(section: str, key: str, raw: str):
    raw = raw.strip()
    where = f"[{section}] {key}"
    try:
        if key in ("files", "types"):
            return tuple(part.strip() for part in raw.split(",") if part.strip())
        if key == "sentences":
            return tuple(int(part) for part in raw.split(","))
        if key == "synthetic":
            if raw.lower() not in ("true", "false", "0", "1", "yes", "no"):
                raise ValueError("expected a boolean")
            return raw.lower() in ("true", "1", "yes")
        if key in ("heterogeneity", "cue_rate", "mu", "base_lr", "warmup_frac"):
            return float(raw)
        if key in (
            "repeats", "base_seed", "lexicon_size", "sources", "data_seed",
            "max_tokens", "embed_dim", "hidden_dim", "window_radius", "clients",
            "rounds", "local_epochs", "batch_size",
        ):
            return int(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None

    values: dict[str, dict] = {name: {} for name in _SECTIONS}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[section][key] = _convert(section, key, raw)

    exp = values["experiment"]
    cfg = ExperimentConfig(
        task=exp.get("task", "ner"),
        scheme=exp.get("scheme", "fedavg"),
        repeats=exp.get("repeats", 3),
        base_seed=exp.get("base_seed", 0),
        output_dir=exp.get("output_dir", "runs/out"),
        data=DataConfig(**values["data"]),
        model=ModelConfig(**values["model"]),
        federation=FederationSection(**values["federation"]),
    )
    validate_config(cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def validate_config(cfg: ExperimentConfig) -> None:
    def bad(msg: str) -> None:
        raise ConfigError(msg)

    if cfg.task not in ("ner", "re"):
        bad(f"[experiment] task must be ner or re, got {cfg.task!r}")
    if cfg.scheme not in SCHEMES:
        bad(f"[experiment] scheme must be one of {SCHEMES}, got {cfg.scheme!r}")
    if cfg.repeats < 1:
        bad("[experiment] repeats must be >= 1")
    if cfg.scheme == "fedprox" and cfg.federation.mu <= 0:
        bad("[federation] fedprox requires mu > 0")
    if cfg.scheme == "fedavg" and cfg.federation.mu != 0:
        bad("[federation] fedavg runs with mu = 0; use scheme = fedprox for mu > 0")
    if cfg.scheme in ("centralized",) and cfg.federation.mu != 0:
        bad("[federation] centralized training has no proximal term; set mu = 0")
    if cfg.data.synthetic:
        if cfg.data.sources < 1:
            bad("[data] sources must be >= 1")
        counts = cfg.data.sentences
        if len(counts) not in (1, cfg.data.sources):
            bad("[data] sentences must be one count or one per source")
    else:
        if not cfg.data.files:
            bad("[data] either files or synthetic = true is required")
    if cfg.data.partition not in PARTITION_MODES:
        bad(f"[data] partition must be one of {PARTITION_MODES}")
    if cfg.data.partition == "by_source":
        n_src = len(cfg.data.files) if cfg.data.files else cfg.data.sources
        if n_src < 2:
            bad("[data] by_source partitioning needs at least two sources")
        if cfg.scheme in ("fedavg", "fedprox") and cfg.federation.clients != n_src:
            bad("[federation] clients must equal the number of sources for by_source")
    if cfg.model.kind == "window_tagger" and cfg.model.window_radius < 0:
        bad("[model] window_radius must be >= 0")
    if cfg.task == "re" and cfg.model.kind != "relation_classifier":
        bad("[model] task = re requires kind = relation_classifier")
    if cfg.task == "ner" and cfg.model.kind == "relation_classifier":
        bad("[model] task = ner requires a tagger model kind")
    fed = cfg.federation
    for name in ("clients", "rounds", "local_epochs", "batch_size"):
        if getattr(fed, name) < 1:
            bad(f"[federation] {name} must be >= 1")
    if fed.mu < 0:
        bad("[federation] mu must be >= 0")
    if fed.optimizer not in ("sgd", "adam"):
        bad("[federation] optimizer must be sgd or adam")
    if not 0 < fed.base_lr:
        bad("[federation] base_lr must be positive")
    if not 0 <= fed.warmup_frac < 1:
        bad("[federation] warmup_frac must lie in [0, 1)")


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 over the canonical config with the output path masked out."""
    payload = asdict(cfg)
    payload["output_dir"] = ""
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    """Everything needed to trace one cmd-run invocation; wall times live
    here so the metric files themselves stay byte-stable."""

    config_hash: str
    seeds: list[int]
    package_version: str
    scheme: str
    task: str
    repeat_files: list[str]
    summary_file: str
    wall_times: list[float]
    created_unix: float = field(default_factory=time.time)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        data = json.loads(Path(path).read_text())
        return cls(**data)
