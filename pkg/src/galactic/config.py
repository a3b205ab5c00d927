"""Run configuration: a strict, versioned JSON file for end-to-end pipeline runs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError, GalacticError
from .globalcf.mdl import DEFAULT_PSZ
from .globalcf.selection import ALGORITHMS, DEFAULT_CAP
from .local import LocalConfig
from .surrogate import TrainConfig

CONFIG_VERSION = "galactic-config-v1"
DEFAULT_SAMPLE_FRAC = 0.30
DEFAULT_MU = 5


@dataclass
class DatasetConfig:
    path: str = ""
    normalize: bool = True
    train_frac: float = 0.8


@dataclass
class SegmentationConfig:
    window: int | None = None
    step: int | None = None


@dataclass
class ImportanceConfig:
    q: float = 0.75
    B: int = 5


@dataclass
class GlobalConfig:
    p_sz: int = DEFAULT_PSZ
    mu: int = DEFAULT_MU
    mu_per_cluster: dict[int, int] = field(default_factory=dict)
    n_proto: int = 5
    n_crit: int = 3
    algorithm: str = "greedy"
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.p_sz < 1:
            raise ConfigError("p_sz must be at least 1", p_sz=self.p_sz)
        if self.mu < 1 or any(v < 1 for v in self.mu_per_cluster.values()):
            raise ConfigError("every budget mu must be at least 1")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError("unknown selection algorithm", algorithm=self.algorithm)
        if self.n_proto < 0 or self.n_crit < 0 or self.cap < 1:
            raise ConfigError("n_proto, n_crit must be >= 0 and cap >= 1")

    def mu_for(self, cluster_id: int) -> int:
        return self.mu_per_cluster.get(int(cluster_id), self.mu)


@dataclass
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    seed: int = 0
    surrogate: TrainConfig = field(default_factory=TrainConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    importance: ImportanceConfig = field(default_factory=ImportanceConfig)
    local: LocalConfig = field(default_factory=LocalConfig)
    global_: GlobalConfig = field(default_factory=GlobalConfig)
    sample_frac: float = DEFAULT_SAMPLE_FRAC
    out_dir: str = "out"

    def __post_init__(self):
        if not 0.0 <= self.sample_frac <= 1.0:
            raise ConfigError("sample_frac must lie in [0, 1]", sample_frac=self.sample_frac)
        if self.local.q != self.importance.q:
            # the mask quantile lives in one place only
            self.local = _replace(self.local, q=self.importance.q)

    def to_dict(self) -> dict:
        local = asdict(self.local)
        local.pop("q")
        glob = asdict(self.global_)
        glob["mu_per_cluster"] = {str(k): v for k, v in sorted(self.global_.mu_per_cluster.items())}
        return {
            "version": CONFIG_VERSION,
            "dataset": asdict(self.dataset),
            "seed": self.seed,
            "surrogate": asdict(self.surrogate),
            "segmentation": asdict(self.segmentation),
            "importance": asdict(self.importance),
            "local": local,
            "global": glob,
            "sample_frac": self.sample_frac,
            "out_dir": self.out_dir,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        d = dict(d)
        version = d.pop("version", None)
        if version != CONFIG_VERSION:
            raise ConfigError("unsupported config version", version=version, expected=CONFIG_VERSION)
        allowed = {"dataset", "seed", "surrogate", "segmentation", "importance", "local", "global",
                   "sample_frac", "out_dir"}
        _reject_unknown(d, allowed, "config")
        try:
            imp = _section(ImportanceConfig, d.get("importance", {}), "importance")
            local = dict(d.get("local", {}))
            if "q" in local:
                raise ConfigError("unknown key in local: q (set importance.q instead)")
            local["q"] = imp.q
            glob = dict(d.get("global", {}))
            if "mu_per_cluster" in glob:
                mpc = glob["mu_per_cluster"]
                if not isinstance(mpc, dict):
                    raise ConfigError("global.mu_per_cluster must be an object")
                glob["mu_per_cluster"] = {int(k): v for k, v in mpc.items()}
            return cls(
                dataset=_section(DatasetConfig, d.get("dataset", {}), "dataset"),
                seed=d.get("seed", 0),
                surrogate=_section(TrainConfig, d.get("surrogate", {}), "surrogate"),
                segmentation=_section(SegmentationConfig, d.get("segmentation", {}), "segmentation"),
                importance=imp,
                local=_section(LocalConfig, local, "local"),
                global_=_section(GlobalConfig, glob, "global"),
                sample_frac=d.get("sample_frac", DEFAULT_SAMPLE_FRAC),
                out_dir=d.get("out_dir", "out"),
            )
        except ConfigError:
            raise
        except (GalacticError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config value: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc.msg}", line=exc.lineno, col=exc.colno) from exc
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except FileNotFoundError as exc:
            raise ConfigError("config file not found", path=str(path)) from exc
        try:
            return cls.from_json(text)
        except ConfigError as exc:
            exc.context.setdefault("path", str(path))
            raise

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())


def _reject_unknown(d: dict, allowed, where: str):
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _section(klass, d, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    _reject_unknown(d, [f.name for f in fields(klass)], where)
    return klass(**d)


def _replace(obj, **kw):
    vals = asdict(obj)
    vals.update(kw)
    return type(obj)(**vals)
