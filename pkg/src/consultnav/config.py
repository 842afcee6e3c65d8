"""Application configuration: one strict JSON document drives every command.

Unknown keys anywhere in the document are rejected, value invariants are
enforced at load time, and relative paths are resolved against the config
file's directory. The packaged 83-symptom vocabulary is used when the config
does not name one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path

from .engine import HARD_TURN_LIMIT, RemoteCoreConfig, ScriptedCoreConfig
from .errors import ConfigError
from .policy import PolicyConfig
from .training import TrainingConfig
from .transitions import RewardConfig

DEFAULT_VOCABULARY = Path(str(files("consultnav") / "data" / "vocab83.jsonl"))


class _Section:
    """Dict wrapper that tracks consumed keys and rejects leftovers."""

    def __init__(self, data: dict, name: str):
        if not isinstance(data, dict):
            raise ConfigError(f"section {name!r} must be an object")
        self._data = dict(data)
        self._name = name

    def take(self, key, default=None):
        return self._data.pop(key, default)

    def subsection(self, key) -> "_Section":
        return _Section(self._data.pop(key, {}), f"{self._name}.{key}" if self._name else key)

    def finish(self) -> None:
        if self._data:
            raise ConfigError(f"unknown key(s) in {self._name or 'config'}: {sorted(self._data)}")


@dataclass(frozen=True)
class PolicySettings:
    """Architecture knobs without the vocabulary size, which comes from data."""

    embed_dim: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ff_dim: int = 128
    max_window: int = 8
    seed: int = 0

    def to_policy_config(self, n_symbols: int) -> PolicyConfig:
        return PolicyConfig(
            n_symbols=n_symbols,
            embed_dim=self.embed_dim,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            ff_dim=self.ff_dim,
            max_window=self.max_window,
            seed=self.seed,
        )


@dataclass
class AppConfig:
    seed: int = 0
    vocabulary: Path = DEFAULT_VOCABULARY
    corpus_train: Path | None = None
    corpus_eval: Path | None = None

    transition_model_path: Path = Path("artifacts/transitions.json")
    checkpoint_path: Path = Path("artifacts/policy.ckpt")
    report_path: Path = Path("artifacts/training_report.json")
    pairs_path: Path = Path("artifacts/pairs.jsonl")
    transcripts_dir: Path = Path("artifacts/transcripts")
    metrics_path: Path = Path("artifacts/metrics.json")
    bench_report_path: Path = Path("artifacts/bench_report.json")

    alpha: float = 1.0
    reward: RewardConfig = field(default_factory=RewardConfig)
    policy: PolicySettings = field(default_factory=PolicySettings)
    training: TrainingConfig = field(default_factory=TrainingConfig)

    engine_window: int = 8
    turn_limit: int = HARD_TURN_LIMIT
    navigator_mode: str = "auto"  # "auto" | "on" | "off"

    core_kind: str = "scripted"
    scripted: ScriptedCoreConfig = field(default_factory=ScriptedCoreConfig)
    remote: RemoteCoreConfig | None = None

    service_host: str = "127.0.0.1"
    service_port: int = 8000
    idle_eviction_minutes: float = 30.0
    static_dir: Path | None = None


def _resolve(base: Path, value) -> Path:
    path = Path(value)
    return path if path.is_absolute() else (base / path)


def load_app_config(path: str | Path) -> AppConfig:
    config_path = Path(path)
    try:
        with open(config_path, encoding="utf-8") as handle:
            raw = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    base = config_path.parent.resolve()
    root = _Section(raw, "")

    cfg = AppConfig()
    cfg.seed = int(root.take("seed", 0))

    vocabulary = root.take("vocabulary")
    if vocabulary is not None:
        cfg.vocabulary = _resolve(base, vocabulary)

    corpus = root.subsection("corpus")
    train_path = corpus.take("train")
    eval_path = corpus.take("eval")
    corpus.finish()
    cfg.corpus_train = _resolve(base, train_path) if train_path else None
    cfg.corpus_eval = _resolve(base, eval_path) if eval_path else None

    paths = root.subsection("paths")
    for attr, key in (
        ("transition_model_path", "transition_model"),
        ("checkpoint_path", "checkpoint"),
        ("report_path", "report"),
        ("pairs_path", "pairs"),
        ("transcripts_dir", "transcripts"),
        ("metrics_path", "metrics"),
        ("bench_report_path", "bench_report"),
    ):
        value = paths.take(key)
        setattr(cfg, attr, _resolve(base, value) if value else _resolve(base, getattr(cfg, attr)))
    paths.finish()

    transitions = root.subsection("transitions")
    alpha = float(transitions.take("alpha", 1.0))
    transitions.finish()
    if alpha <= 0:
        raise ConfigError(f"transitions.alpha must be > 0, got {alpha}")
    cfg.alpha = alpha

    reward = root.subsection("reward")
    try:
        cfg.reward = RewardConfig(
            k=float(reward.take("k", 1.0)),
            lambda_repeat_last=float(reward.take("lambda_repeat_last", 0.3)),
            lambda_revisit=float(reward.take("lambda_revisit", 1.5)),
            lambda_default=float(reward.take("lambda_default", 1.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"reward: {exc}") from exc
    reward.finish()

    policy = root.subsection("policy")
    cfg.policy = PolicySettings(
        embed_dim=int(policy.take("embed_dim", 64)),
        n_layers=int(policy.take("n_layers", 2)),
        n_heads=int(policy.take("n_heads", 4)),
        ff_dim=int(policy.take("ff_dim", 128)),
        max_window=int(policy.take("max_window", 8)),
        seed=int(policy.take("seed", cfg.seed)),
    )
    policy.finish()

    training = root.subsection("training")
    cfg.training = TrainingConfig(
        objective=str(training.take("objective", "BC")),
        batch_size=int(training.take("batch_size", 32)),
        epochs=int(training.take("epochs", 30)),
        learning_rate=float(training.take("learning_rate", 1e-2)),
        momentum=float(training.take("momentum", 0.9)),
        beta1=float(training.take("beta1", 1.0)),
        beta2=float(training.take("beta2", 0.5)),
        eta=float(training.take("eta", 0.01)),
        entropy_sign=str(training.take("entropy_sign", "bonus")),
        seed=int(training.take("seed", cfg.seed)),
        shuffle=bool(training.take("shuffle", True)),
        holdout_fraction=float(training.take("holdout_fraction", 0.1)),
        reward=cfg.reward,
    )
    training.finish()

    engine = root.subsection("engine")
    cfg.engine_window = int(engine.take("window", 8))
    cfg.turn_limit = int(engine.take("turn_limit", HARD_TURN_LIMIT))
    cfg.navigator_mode = str(engine.take("navigator", "auto"))
    engine.finish()
    if cfg.engine_window < 1:
        raise ConfigError(f"engine.window must be >= 1, got {cfg.engine_window}")
    if not 1 <= cfg.turn_limit <= HARD_TURN_LIMIT:
        raise ConfigError(
            f"engine.turn_limit must be in [1, {HARD_TURN_LIMIT}], got {cfg.turn_limit}"
        )
    if cfg.navigator_mode not in ("auto", "on", "off"):
        raise ConfigError(f"engine.navigator must be auto/on/off, got {cfg.navigator_mode!r}")

    core = root.subsection("core")
    cfg.core_kind = str(core.take("kind", "scripted"))
    if cfg.core_kind not in ("scripted", "remote"):
        raise ConfigError(f"core.kind must be 'scripted' or 'remote', got {cfg.core_kind!r}")
    scripted = core.subsection("scripted")
    cfg.scripted = ScriptedCoreConfig(
        known_fraction=float(scripted.take("known_fraction", 1.0)),
        divergence_period=int(scripted.take("divergence_period", 0)),
        offscript_period=int(scripted.take("offscript_period", 0)),
        selection=str(scripted.take("selection", "prefer-gold")),
        coverage_threshold=float(scripted.take("coverage_threshold", 1.0)),
        seed=int(scripted.take("seed", cfg.seed)),
    )
    scripted.finish()
    remote = core.subsection("remote")
    base_url = remote.take("base_url")
    if base_url is not None:
        cfg.remote = RemoteCoreConfig(
            base_url=str(base_url),
            model=str(remote.take("model", "core-model")),
            timeout_seconds=float(remote.take("timeout_seconds", 30.0)),
            api_key_env=str(remote.take("api_key_env", "CORE_API_KEY")),
        )
    remote.finish()
    core.finish()
    if cfg.core_kind == "remote" and cfg.remote is None:
        raise ConfigError("core.kind is 'remote' but core.remote.base_url is missing")

    service = root.subsection("service")
    cfg.service_host = str(service.take("host", "127.0.0.1"))
    cfg.service_port = int(service.take("port", 8000))
    cfg.idle_eviction_minutes = float(service.take("idle_eviction_minutes", 30.0))
    static_dir = service.take("static_dir")
    cfg.static_dir = _resolve(base, static_dir) if static_dir else None
    service.finish()
    if cfg.idle_eviction_minutes <= 0:
        raise ConfigError(
            f"service.idle_eviction_minutes must be > 0, got {cfg.idle_eviction_minutes}"
        )

    root.finish()

    if not cfg.vocabulary.exists():
        raise ConfigError(f"vocabulary file does not exist: {cfg.vocabulary}")
    return cfg


def require_file(path: Path | None, what: str) -> Path:
    """Commands call this for each input they actually read."""
    if path is None:
        raise ConfigError(f"config does not name a {what}")
    if not path.exists():
        raise FileNotFoundError(f"{what} does not exist: {path}")
    return path
