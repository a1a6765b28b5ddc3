"""Run configuration, key-value config files, and metric records."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..graph import FAMILIES
from ..model import MODEL_KINDS

TASKS = ("link", "density", "classify", "check-theorem")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    task: str = "link"
    model: str = "graphite_vae"
    # architecture
    encoder_hidden: tuple = (32, 32)
    latent_dim: int = 16
    decoder_hidden: tuple = (32,)
    out_dim: int = 16
    rounds: int = 1
    pre_decoder: tuple = ()
    skip_mode: str = "convex"
    norm_mode: str = "row"
    self_loops: bool = False
    use_features: bool = True
    # grids, picked on validation AUC (link) / accuracy (classify)
    lambda_grid: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    dropout_grid: tuple = (0.0, 0.25, 0.5)
    gamma_grid: tuple = (0.1, 0.5, 1.0)
    tune_splits: int = 1  # splits on which the grid is searched; later splits reuse the winner
    # optimization
    lr: float = 0.01
    iters: int = 500
    eval_every: int = 5
    seed: int = 0
    runs: int = 10
    jobs: int = 1
    # data
    dataset: str = ""
    family: str = "erdos_renyi"
    families: tuple = FAMILIES
    n_graphs: int = 300
    n_min: int = 10
    n_max: int = 20
    n_nodes: int = 30  # synthetic graph size when no dataset is given
    val_frac: float = 0.05
    test_frac: float = 0.10
    subsample_count: int = 0  # 0 = dense objective; -1 = |E| entries per iteration
    pos_weight: bool = True
    eval_samples: int = 1
    # node classification
    labels_per_class: int = 20
    n_val: int = 500
    n_test: int = 1000
    patience: int = 10
    weight_decay: float = 5e-4
    input_dropout: float = 0.5

    def __post_init__(self):
        for name in ("encoder_hidden", "decoder_hidden", "pre_decoder", "lambda_grid", "dropout_grid",
                     "gamma_grid", "families"):
            v = getattr(self, name)
            setattr(self, name, tuple(v) if isinstance(v, (list, tuple)) else (v,))
        self.validate()

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        for name in ("lambda_grid", "dropout_grid", "gamma_grid", "families"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be non-empty")
        if self.iters <= 0 or self.runs <= 0:
            raise ConfigError("iters and runs must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if any(not 0.0 <= d < 1.0 for d in self.dropout_grid):
            raise ConfigError("dropout rates must be in [0, 1)")
        if self.skip_mode == "convex" and any(not 0.0 <= lam <= 1.0 for lam in self.lambda_grid):
            raise ConfigError("convex skip needs lambda values in [0, 1]")
        if self.family not in FAMILIES or any(f not in FAMILIES for f in self.families):
            raise ConfigError(f"families must come from {FAMILIES}")
        if not 0.0 <= self.val_frac + self.test_frac < 1.0:
            raise ConfigError("val_frac + test_frac must be in [0, 1)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        pass
    if "," in raw:
        return [_parse_value(p) for p in raw.split(",") if p.strip()]
    return raw


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """Parse ``key = value`` lines (``#`` comments) into a validated RunConfig.

    Lists may be JSON (``[0, 0.5]``) or comma-separated (``0, 0.5``).
    """
    known = {f.name: f for f in dataclasses.fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        val = _parse_value(raw)
        default = known[key].default
        if isinstance(default, tuple) and not isinstance(val, list):
            val = [val]
        elif isinstance(default, bool) and not isinstance(val, bool):
            raise ConfigError(f"{source}:{lineno}: {key} expects true/false")
        elif isinstance(default, (int, float)) and not isinstance(default, bool):
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ConfigError(f"{source}:{lineno}: {key} expects a number")
            if isinstance(default, int) and not isinstance(default, bool) and val != int(val):
                raise ConfigError(f"{source}:{lineno}: {key} expects an integer")
            val = type(default)(val)
        elif isinstance(default, str) and not isinstance(val, str):
            val = str(val)
        values[key] = val
    try:
        return RunConfig(**values)
    except ConfigError as e:
        raise ConfigError(f"{source}: {e}") from None


def load_config(path) -> RunConfig:
    return parse_config_text(Path(path).read_text(), str(path))


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        if isinstance(v, (list, tuple)):
            v = json.dumps(list(v))
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------- metrics

METRIC_NAMES = ("auc", "ap", "accuracy", "neg_elbo", "recon_error")


@dataclass
class Metrics:
    """Per-run records plus mean and standard error of every metric present."""

    records: list = field(default_factory=list)
    label: str = ""

    def add(self, **rec) -> None:
        self.records.append(rec)

    def values(self, name: str) -> list:
        return [r[name] for r in self.records if r.get(name) is not None]

    def summary(self) -> dict:
        from ..metrics import mean_and_stderr

        out = {}
        for name in METRIC_NAMES:
            vals = self.values(name)
            if vals:
                m, se = mean_and_stderr(vals)
                out[name] = {"mean": m, "stderr": se, "n": len(vals)}
        return out

    def mean(self, name: str) -> float:
        return self.summary()[name]["mean"]

    def to_json(self) -> dict:
        return {"label": self.label, "summary": self.summary(), "runs": self.records}


def write_metrics(metrics: list[Metrics], cfg: RunConfig, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jpath, cpath = out / "metrics.json", out / "metrics.csv"
    payload = {"config_hash": cfg.config_hash(), "results": [m.to_json() for m in metrics]}
    jpath.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
    cols = ["config_hash", "label", "seed"] + list(METRIC_NAMES)
    with open(cpath, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for m in metrics:
            for r in m.records:
                row = [cfg.config_hash(), m.label, r.get("seed", "")]
                row += ["" if r.get(k) is None else repr(float(r[k])) for k in METRIC_NAMES]
                w.writerow(row)
    return jpath, cpath


def _jsonable(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    return str(o)
