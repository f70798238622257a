"""Toy MLP training with TopoLoss, evaluation, checkpoints and sweeps.

The default task is Gaussian-cluster classification: each class has a random
centre in input space and samples are centre plus isotropic noise.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import stats

from . import autograd as ag
from .autograd import Tensor
from ._fileio import atomic_open
from .errors import CheckpointError, ConfigError, DimensionError, NumericError, TopoNetError, TrainingError
from .metrics import effective_dimensionality, grid_positions, selectivity_map, smoothness, structural_similarity
from .sheet import Linear, factorize_near_square, project_linear
from .topoloss import TopoConfig, topo_loss, total_loss

log = logging.getLogger(__name__)

DEFAULT_TAUS = (0.0, 0.5, 1.0, 5.0, 10.0, 50.0)
ACTIVATIONS = ("relu", "none")


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: Linear
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"layer {self.name}: unknown activation {self.activation!r}")
        if not isinstance(self.kind, Linear):
            raise ConfigError(f"layer {self.name}: only linear layers are trainable")


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple[LayerSpec, ...]
    penalized: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "penalized", tuple(self.penalized))
        if not self.layers:
            raise ConfigError("model needs at least one layer")
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise ConfigError("layer names must be unique")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.kind.o != nxt.kind.i:
                raise ConfigError(f"{prev.name} emits {prev.kind.o} units but {nxt.name} expects {nxt.kind.i}")
        unknown = set(self.penalized) - set(names)
        if unknown:
            raise ConfigError(f"penalized layers not in model: {sorted(unknown)}")

    def kind(self, name: str) -> Linear:
        for l in self.layers:
            if l.name == name:
                return l.kind
        raise KeyError(name)

    @property
    def input_dim(self) -> int:
        return self.layers[0].kind.i

    @property
    def output_dim(self) -> int:
        return self.layers[-1].kind.o

    @classmethod
    def mlp(cls, input_dim: int = 32, hidden: Sequence[int] = (64,), n_classes: int = 8) -> "ModelSpec":
        """ReLU MLP whose hidden layers are all penalized."""
        dims = [input_dim, *hidden, n_classes]
        layers = []
        for k, (i, o) in enumerate(zip(dims, dims[1:])):
            last = k == len(dims) - 2
            layers.append(LayerSpec(f"fc{k + 1}", Linear(o, i), "none" if last else "relu"))
        return cls(tuple(layers), tuple(l.name for l in layers[:-1]))


@dataclass(frozen=True)
class OptimizerConfig:
    name: str = "adam"
    lr: float = 1e-3
    steps: int = 1500
    batch_size: int = 64

    def __post_init__(self):
        object.__setattr__(self, "lr", float(self.lr))
        for name in ("steps", "batch_size"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.name not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.name!r}")
        if not self.lr > 0:
            raise ConfigError("learning rate must be positive")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be >= 1")


@dataclass(frozen=True)
class EvalTask:
    """Gaussian-cluster classification, deterministic given ``seed``."""

    n_classes: int = 8
    input_dim: int = 32
    spread: float = 1.5
    seed: int = 1234
    n_train: int = 2048
    n_eval: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "spread", float(self.spread))
        for name in ("n_classes", "input_dim", "seed", "n_train", "n_eval"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.n_classes < 2 or self.input_dim < 1:
            raise ConfigError("task needs >= 2 classes and a positive input dimension")
        if self.spread < 0 or self.n_train < self.n_classes or self.n_eval < self.n_classes:
            raise ConfigError("invalid task sizes")

    def _sample(self, rng: np.random.Generator, centers: np.ndarray, n: int):
        y = np.arange(n) % self.n_classes
        y = rng.permutation(y)
        X = centers[y] + self.spread * rng.standard_normal((n, self.input_dim))
        return X, y

    def splits(self) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
        rng = np.random.default_rng(self.seed)
        centers = rng.standard_normal((self.n_classes, self.input_dim))
        train = self._sample(rng, centers, self.n_train)
        evaluation = self._sample(rng, centers, self.n_eval)
        return train, evaluation

    def eval_split(self) -> tuple[np.ndarray, np.ndarray]:
        return self.splits()[1]


@dataclass(frozen=True)
class TrainConfig:
    model: ModelSpec = field(default_factory=ModelSpec.mlp)
    topo: TopoConfig = field(default_factory=TopoConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    dataset: EvalTask = field(default_factory=EvalTask)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        targets = self.topo.target_layers
        if not targets:
            object.__setattr__(self, "topo", replace(self.topo, target_layers=self.model.penalized))
        elif set(targets) != set(self.model.penalized):
            raise ConfigError("topo.target_layers must match model.penalized")
        if self.model.input_dim != self.dataset.input_dim or self.model.output_dim != self.dataset.n_classes:
            raise ConfigError("model extents do not match the dataset")

    def with_tau(self, tau: float) -> "TrainConfig":
        return replace(self, topo=replace(self.topo, tau=float(tau)))

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": {
                "layers": [
                    {"name": l.name, "o": l.kind.o, "i": l.kind.i, "activation": l.activation}
                    for l in self.model.layers
                ],
                "penalized": list(self.model.penalized),
            },
            "topo": {
                "phi_h": self.topo.phi_h,
                "phi_w": self.topo.phi_w,
                "tau": self.topo.tau,
                "target_layers": list(self.topo.target_layers),
            },
            "optimizer": asdict(self.optimizer),
            "seed": self.seed,
            "dataset": asdict(self.dataset),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TrainConfig":
        known = {"model", "topo", "optimizer", "seed", "dataset"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            kw: dict[str, Any] = {}
            if "model" in d:
                m = d["model"]
                layers = tuple(
                    LayerSpec(l["name"], Linear(int(l["o"]), int(l["i"])), l.get("activation", "relu"))
                    for l in m["layers"]
                )
                kw["model"] = ModelSpec(layers, tuple(m.get("penalized", ())))
            if "topo" in d:
                kw["topo"] = TopoConfig(**d["topo"])
            if "optimizer" in d:
                kw["optimizer"] = OptimizerConfig(**d["optimizer"])
            if "seed" in d:
                kw["seed"] = int(d["seed"])
            if "dataset" in d:
                kw["dataset"] = EvalTask(**d["dataset"])
            return cls(**kw)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid config: {e}") from e


def load_config(path) -> TrainConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise CheckpointError(f"cannot read config {path}: {e}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return TrainConfig.from_dict(raw)


# --------------------------------------------------------------------------
# model


@dataclass
class Model:
    spec: ModelSpec
    weights: dict[str, np.ndarray]
    biases: dict[str, np.ndarray]

    @classmethod
    def init(cls, spec: ModelSpec, rng: np.random.Generator) -> "Model":
        weights, biases = {}, {}
        for l in spec.layers:
            bound = math.sqrt(6.0 / l.kind.i)
            weights[l.name] = rng.uniform(-bound, bound, size=l.kind.weight_shape)
            biases[l.name] = np.zeros(l.kind.o)
        return cls(spec, weights, biases)

    def with_weights(self, weights: Mapping[str, np.ndarray]) -> "Model":
        return Model(self.spec, {k: np.array(v, dtype=np.float64) for k, v in weights.items()}, dict(self.biases))

    def forward(self, X, params: Mapping[str, tuple[Tensor, Tensor]] | None = None, upto: str | None = None) -> Tensor:
        """Logits for ``X[batch, input_dim]``; ``upto`` stops after that layer's activation."""
        h = X if isinstance(X, Tensor) else Tensor(X)
        for l in self.spec.layers:
            W, b = params[l.name] if params else (Tensor(self.weights[l.name]), Tensor(self.biases[l.name]))
            h = ag.matmul(h, ag.transpose(W)) + b
            if l.activation == "relu":
                h = ag.relu(h)
            if l.name == upto:
                break
        return h

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.forward(X).data, axis=1)

    def responses(self, X, layer: str) -> np.ndarray:
        return self.forward(X, upto=layer).numpy()

    def sheet_shape(self, layer: str) -> tuple[int, int]:
        return factorize_near_square(self.spec.kind(layer).o)


def evaluate(model: Model, task: EvalTask) -> float:
    """Accuracy on the task's fixed evaluation split."""
    if model.spec.input_dim != task.input_dim or model.spec.output_dim != task.n_classes:
        raise DimensionError("model extents do not match the task")
    X, y = task.eval_split()
    return float(np.mean(model.predict(X) == y))


# --------------------------------------------------------------------------
# optimisers


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        for k, g in grads.items():
            m = self.m.get(k, 0.0) * self.beta1 + (1 - self.beta1) * g
            v = self.v.get(k, 0.0) * self.beta2 + (1 - self.beta2) * g * g
            self.m[k], self.v[k] = m, v
            mhat = m / (1 - self.beta1**self.t)
            vhat = v / (1 - self.beta2**self.t)
            params[k] = params[k] - self.lr * mhat / (np.sqrt(vhat) + self.eps)


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        for k, g in grads.items():
            params[k] = params[k] - self.lr * g


# --------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: Model
    config: TrainConfig
    log: list[dict[str, float]]

    @property
    def checkpoint(self) -> "Checkpoint":
        return Checkpoint(self.config, self.model, {"accuracy": evaluate(self.model, self.config.dataset)})


def _loss(model: Model, params, X, y, cfg: TrainConfig, topo_enabled: bool) -> Tensor:
    logits = model.forward(X, params)
    loss = ag.softmax_cross_entropy(logits, y)
    if topo_enabled:
        sheets = [project_linear(params[n][0]) for n in cfg.topo.target_layers]
        loss = total_loss(loss, sheets, cfg.topo)
    return loss


def train(config: TrainConfig, topo_enabled: bool = True, log_every: int = 50) -> TrainResult:
    """Minimise cross-entropy plus ``tau`` times the mean TopoLoss of penalized layers."""
    rng = np.random.default_rng(config.seed)
    model = Model.init(config.model, rng)
    (Xtr, ytr), _ = config.dataset.splits()
    opt_cfg = config.optimizer
    opt = Adam(opt_cfg.lr) if opt_cfg.name == "adam" else SGD(opt_cfg.lr)
    flat: dict[str, np.ndarray] = {}
    for name in model.weights:
        flat[f"{name}.weight"] = model.weights[name]
        flat[f"{name}.bias"] = model.biases[name]

    history: list[dict[str, float]] = []
    n = Xtr.shape[0]
    bs = min(opt_cfg.batch_size, n)
    for step in range(opt_cfg.steps):
        idx = rng.choice(n, size=bs, replace=False)
        params = {
            name: (Tensor(flat[f"{name}.weight"], True), Tensor(flat[f"{name}.bias"], True))
            for name in model.weights
        }
        try:
            loss = _loss(model, params, Xtr[idx], ytr[idx], config, topo_enabled)
            loss.backward()
        except NumericError as e:
            raise TrainingError(f"training diverged at step {step}: {e}", step) from e
        grads = {}
        for name, (W, b) in params.items():
            grads[f"{name}.weight"] = W.grad if W.grad is not None else np.zeros_like(W.data)
            grads[f"{name}.bias"] = b.grad if b.grad is not None else np.zeros_like(b.data)
        opt.step(flat, grads)
        if not all(np.isfinite(v).all() for v in flat.values()):
            raise TrainingError(f"training diverged at step {step}: non-finite parameters", step)
        if step % log_every == 0 or step == opt_cfg.steps - 1:
            entry = {"step": float(step), "loss": loss.item()}
            for name in config.topo.target_layers:
                entry[f"topo_{name}"] = _topo_value(flat[f"{name}.weight"], config.topo)
            history.append(entry)

    for name in model.weights:
        model.weights[name] = flat[f"{name}.weight"]
        model.biases[name] = flat[f"{name}.bias"]
    return TrainResult(model, config, history)


def _topo_value(W: np.ndarray, cfg: TopoConfig) -> float:
    try:
        return topo_loss(project_linear(W), cfg).item()
    except NumericError:
        return float("nan")


def write_log_csv(path, history: Sequence[Mapping[str, float]]) -> None:
    if not history:
        return
    keys = list(history[0])
    with atomic_open(path, "w") as f:
        w = csv.writer(f)
        w.writerow(keys)
        for row in history:
            w.writerow([int(row[k]) if k == "step" else repr(row[k]) for k in keys])


# --------------------------------------------------------------------------
# metrics of a trained model


def layer_smoothness(model: Model, task: EvalTask, layer: str, n_bins: int = 10) -> float:
    X, _ = task.eval_split()
    h, w = model.sheet_shape(layer)
    return smoothness(grid_positions(h, w), model.responses(X, layer), n_bins)


def layer_effective_dimensionality(model: Model, task: EvalTask, layer: str) -> float:
    X, _ = task.eval_split()
    return effective_dimensionality(model.responses(X, layer))


@dataclass(frozen=True)
class SweepRow:
    tau: float
    accuracy: float
    smoothness: float
    effective_dimensionality: float
    status: str = "ok"


SWEEP_HEADER = ("tau", "accuracy", "smoothness", "effective_dimensionality", "status")


def sweep(base: TrainConfig, taus: Sequence[float] = DEFAULT_TAUS, n_bins: int = 10) -> list[SweepRow]:
    """Train once per ``tau`` with the shared seed; failures become ``status`` rows."""
    if len(taus) < 3 or 0 not in taus:
        raise ConfigError("a sweep needs at least 3 tau values including 0")
    rows = []
    for tau in taus:
        cfg = base.with_tau(tau)
        try:
            model = train(cfg).model
            layer = cfg.model.penalized[0] if cfg.model.penalized else cfg.model.layers[0].name
            rows.append(
                SweepRow(
                    float(tau),
                    evaluate(model, cfg.dataset),
                    layer_smoothness(model, cfg.dataset, layer, n_bins),
                    layer_effective_dimensionality(model, cfg.dataset, layer),
                )
            )
        except TopoNetError as e:
            log.warning("sweep run tau=%s failed: %s", tau, e)
            nan = float("nan")
            rows.append(SweepRow(float(tau), nan, nan, nan, f"failed: {e}"))
    return rows


def write_sweep_csv(path, rows: Sequence[SweepRow]) -> None:
    with atomic_open(path, "w") as f:
        w = csv.writer(f)
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([repr(r.tau), repr(r.accuracy), repr(r.smoothness), repr(r.effective_dimensionality), r.status])


def spearman(x, y) -> float:
    return float(stats.spearmanr(x, y).statistic)


# --------------------------------------------------------------------------
# selectivity maps


@dataclass
class LayerMaps:
    layer: str
    t_maps: dict[str, np.ndarray]
    ssim: np.ndarray
    smoothness: dict[str, float]


def report_maps(model: Model, groups: Mapping[str, np.ndarray], n_bins: int = 10) -> list[LayerMaps]:
    """Selectivity t-map of each group against the rest, per penalized layer.

    ``groups`` maps a group name to its stimuli ``[n, input_dim]``.  Also
    returns the pairwise SSIM matrix of the maps (NaN where both maps are the
    same constant) and the response smoothness of the layer for each group.
    """
    if len(groups) < 2:
        raise ValueError("need at least 2 stimulus groups")
    names = list(groups)
    out = []
    for layer in model.spec.penalized:
        h, w = model.sheet_shape(layer)
        resp = {g: model.responses(np.asarray(groups[g], dtype=np.float64), layer) for g in names}
        t_maps = {}
        for g in names:
            rest = np.concatenate([resp[o] for o in names if o != g], axis=0)
            t_maps[g] = selectivity_map(resp[g], rest, (h, w))
        k = len(names)
        ssim = np.eye(k)
        for i in range(k):
            for j in range(i + 1, k):
                try:
                    v = structural_similarity(t_maps[names[i]], t_maps[names[j]])
                except NumericError:
                    log.warning("SSIM undefined for constant maps %s/%s", names[i], names[j])
                    v = float("nan")
                ssim[i, j] = ssim[j, i] = v
        sm = {}
        for g in names:
            try:
                sm[g] = smoothness(grid_positions(h, w), resp[g], n_bins)
            except TopoNetError:
                sm[g] = float("nan")
        out.append(LayerMaps(layer, t_maps, ssim, sm))
    return out


def write_grid_csv(path, grid: np.ndarray) -> None:
    with atomic_open(path, "w") as f:
        w = csv.writer(f)
        for row in np.asarray(grid):
            w.writerow([repr(float(v)) for v in row])


def read_grid_csv(path) -> np.ndarray:
    with open(path, newline="") as f:
        return np.array([[float(v) for v in row] for row in csv.reader(f)])


# --------------------------------------------------------------------------
# checkpoints


MANIFEST = "manifest.json"
MANIFEST_HASH = "manifest.sha256"


@dataclass
class Checkpoint:
    config: TrainConfig
    model: Model
    metrics: dict[str, float] = field(default_factory=dict)


def _blob_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def save_checkpoint(ckpt: Checkpoint, directory) -> Path:
    """Write ``manifest.json``, its sha256, and one little-endian f64 blob per array."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    blobs = []
    for l in ckpt.config.model.layers:
        for part, arr in (("weight", ckpt.model.weights[l.name]), ("bias", ckpt.model.biases[l.name])):
            fname = f"{l.name}.{part}.f64"
            data = _blob_bytes(arr)
            with atomic_open(d / fname, "wb") as f:
                f.write(data)
            blobs.append(
                {
                    "layer": l.name,
                    "part": part,
                    "file": fname,
                    "shape": list(arr.shape),
                    "sha256": hashlib.sha256(data).hexdigest(),
                }
            )
    manifest = {
        "format": "toponet-checkpoint/1",
        "config": ckpt.config.to_dict(),
        "blobs": blobs,
        "metrics": {k: float(v) for k, v in sorted(ckpt.metrics.items())},
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    with atomic_open(d / MANIFEST, "w") as f:
        f.write(text)
    with atomic_open(d / MANIFEST_HASH, "w") as f:
        f.write(hashlib.sha256(text.encode()).hexdigest() + "\n")
    return d


def load_checkpoint(directory) -> Checkpoint:
    d = Path(directory)
    try:
        text = (d / MANIFEST).read_text()
        recorded = (d / MANIFEST_HASH).read_text().strip()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint at {d}: {e}") from e
    if hashlib.sha256(text.encode()).hexdigest() != recorded:
        raise CheckpointError(f"{d / MANIFEST}: hash mismatch")
    manifest = json.loads(text)
    config = TrainConfig.from_dict(manifest["config"])
    weights, biases = {}, {}
    for b in manifest["blobs"]:
        try:
            data = (d / b["file"]).read_bytes()
        except OSError as e:
            raise CheckpointError(f"missing blob {b['file']}: {e}") from e
        shape = tuple(b["shape"])
        if len(data) != 8 * int(np.prod(shape)):
            raise CheckpointError(f"{b['file']}: expected {8 * int(np.prod(shape))} bytes, got {len(data)}")
        if hashlib.sha256(data).hexdigest() != b["sha256"]:
            raise CheckpointError(f"{b['file']}: hash mismatch")
        arr = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(shape)
        (weights if b["part"] == "weight" else biases)[b["layer"]] = arr
    return Checkpoint(config, Model(config.model, weights, biases), manifest.get("metrics", {}))
