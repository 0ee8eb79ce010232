"""Run configuration: flat key=value text files, environment overrides with
the DNA_ prefix, validation, and the config hash stamped into every output."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

ENV_PREFIX = "DNA_"


class ConfigError(ValueError):
    """Bad key, bad value or unreadable config file."""


@dataclass(frozen=True)
class RunConfig:
    # random walk / ego networks
    xi: float = 0.5
    omega: int = 3
    ego_width: int = 32
    include_restart_term: bool = False
    consistency: str = "laplacian"  # or "rwr": RWR-affinity weighted regularizer
    # snapshotting / ingestion
    snapshots: int = 5
    directed: bool = False
    interval_scoped: bool = False  # snapshots as per-interval deltas instead of cumulative
    t_start: float = float("nan")  # NaN = infer window from data
    t_end: float = float("nan")
    # embeddings / training
    d_u: int = 128
    d_c: int = 128
    alpha: float = 0.1
    beta: float = 1.0
    gamma: float = 10.0
    learning_rate: float = 1e-3
    keep_prob: float = 0.8
    l2: float = 1e-4
    batch_size: int = 0  # 0 = full batch
    epochs_per_round: int = 2
    pretrain_epochs: int = 10
    max_rounds: int = 2
    tol: float = 1e-5
    # evaluation
    k_list: tuple[int, ...] = (1, 3, 5, 15)
    distance: str = "euclidean"
    exclude_train_targets: bool = False
    symmetric_eval: bool = False
    # synthetic instances (sweepable fields take value lists)
    n_base: int = 300
    growth: int = 2
    churn: float = 0.02
    lambda_overlap: tuple[float, ...] = (0.5,)
    edge_noise: float = 0.05
    eta: tuple[float, ...] = (0.1,)
    activity_decay: float = 8.0
    activity_sigma: float = 1.0
    weight_noise: float = 0.2
    snapshot_sweep: tuple[int, ...] = ()  # overrides `snapshots` per sweep point when set
    # run control
    seed: int = 0
    static_ablation: bool = False

    def validate(self) -> "RunConfig":
        def check(cond: bool, msg: str) -> None:
            if not cond:
                raise ConfigError(msg)

        check(0.0 <= self.xi < 1.0, "xi must be in [0, 1)")
        check(self.omega >= 1, "omega must be >= 1")
        check(self.ego_width >= 1, "ego_width must be >= 1")
        check(self.snapshots >= 1, "snapshots must be >= 1")
        check(self.d_u >= 1 and self.d_c >= 1, "embedding dims must be >= 1")
        check(min(self.alpha, self.beta, self.gamma, self.l2) >= 0,
              "weights must be nonnegative")
        check(0.0 < self.keep_prob <= 1.0, "keep_prob must be in (0, 1]")
        check(self.learning_rate > 0, "learning_rate must be positive")
        check(self.tol > 0, "tol must be positive")
        check(self.max_rounds >= 0 and self.epochs_per_round >= 0
              and self.pretrain_epochs >= 0, "counts must be nonnegative")
        check(all(k >= 1 for k in self.k_list), "k values must be >= 1")
        check(self.distance in ("euclidean", "cosine"), "distance must be euclidean or cosine")
        check(self.consistency in ("laplacian", "rwr"), "consistency must be laplacian or rwr")
        check(all(0.0 < lam <= 1.0 for lam in self.lambda_overlap),
              "lambda_overlap values must be in (0, 1]")
        check(all(0.0 < e < 1.0 for e in self.eta), "eta values must be in (0, 1)")
        check(0.0 <= self.edge_noise < 1.0, "edge_noise must be in [0, 1)")
        check(0.0 <= self.churn <= 1.0, "churn must be in [0, 1]")
        check(self.n_base >= self.growth + 1, "n_base must exceed growth")
        check(min(self.activity_decay, self.activity_sigma, self.weight_noise) >= 0,
              "activity/weight parameters must be nonnegative")
        return self

    def config_hash(self) -> str:
        payload = "\n".join(f"{k}={v}" for k, v in sorted(self.as_flat_dict().items()))
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    def as_flat_dict(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                out[f.name] = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, bool):
                out[f.name] = "true" if value else "false"
            elif isinstance(value, float):
                out[f.name] = repr(value)
            else:
                out[f.name] = str(value)
        return out

    def sweep_points(self) -> list["RunConfig"]:
        """Cartesian product over the sweepable list fields, each point a
        plain single-valued config."""
        snaps = self.snapshot_sweep or (self.snapshots,)
        points = []
        for lam in self.lambda_overlap:
            for eta in self.eta:
                for m in snaps:
                    points.append(replace(
                        self, lambda_overlap=(lam,), eta=(eta,),
                        snapshots=m, snapshot_sweep=(),
                    ))
        return points


def _parse_value(name: str, raw: str, current) -> object:
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
        if isinstance(current, tuple):
            if not raw:
                return ()
            elem = float if current and isinstance(current[0], float) else int
            if name in ("lambda_overlap", "eta"):
                elem = float
            if name in ("k_list", "snapshot_sweep"):
                elem = int
            return tuple(elem(tok) for tok in raw.split(","))
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r} ({exc})") from exc


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Build a RunConfig from defaults, then the config file, then DNA_*
    environment variables, then explicit overrides. Unknown keys are fatal."""
    cfg = RunConfig()
    known = {f.name for f in fields(cfg)}
    updates: dict[str, object] = {}

    def apply(name: str, raw: str, origin: str) -> None:
        if name not in known:
            raise ConfigError(f"unknown config key {name!r} ({origin})")
        updates[name] = _parse_value(name, raw, getattr(cfg, name))

    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            apply(key.strip(), value, f"{path}:{lineno}")
    for env_key, value in sorted(os.environ.items()):
        if env_key.startswith(ENV_PREFIX):
            apply(env_key[len(ENV_PREFIX):].lower(), value, f"env {env_key}")
    for key, value in (overrides or {}).items():
        apply(key, value, "command line")

    return replace(cfg, **updates).validate()


def write_config(cfg: RunConfig, path: str | Path) -> None:
    lines = [f"{k} = {v}" for k, v in cfg.as_flat_dict().items()]
    Path(path).write_text("\n".join(lines) + "\n")
