"""Training and evaluation harness.

Batches are plain python loops over clips: each clip runs its own tape,
per-parameter gradients are accumulated in iteration order and averaged,
then one optimizer step is applied.  With `deterministic` set (the
default) the shuffle stream is seeded, so two runs from the same seed
produce bit-identical histories and parameters.

Early stopping watches validation BCE with a patience budget and restores
the best parameters before returning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tape, bce_loss
from .clipio import SPLITS, load_split
from .network import Network
from .preproc import PreprocConfig, RawClip, preprocess
from .store import ParamStore

__all__ = [
    "TrainConfig",
    "ClipRecord",
    "EpochStats",
    "TrainResult",
    "Metrics",
    "EvalReport",
    "Adam",
    "MomentumSGD",
    "train",
    "evaluate",
    "metric_math",
    "compare_runs",
    "load_dataset",
    "synthesize_dataset",
    "write_history",
    "read_history",
    "write_report",
    "read_report",
]

THRESHOLD = 0.5  # p >= 0.5 counts as a positive call

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    optimizer: str = "adam"  # "adam" or "sgd"
    learning_rate: float = 1e-3
    momentum: float = 0.9  # sgd only
    batch_size: int = 8
    epochs: int = 30
    patience: int = 10
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        for name in ("batch_size", "epochs", "patience"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
            setattr(self, name, int(getattr(self, name)))
        self.seed = int(self.seed)


@dataclass
class ClipRecord:
    """One ready-to-forward clip: id, preprocessed tensor, binary label."""

    clip_id: str
    x: np.ndarray
    label: int


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_bce: float
    val_bce: float
    val_accuracy: float


@dataclass
class TrainResult:
    history: list[EpochStats]
    best_epoch: int
    best_val_bce: float
    stopped_early: bool


class Adam:
    """Adam with bias correction; state arrays match parameter dtype."""

    def __init__(self, store: ParamStore, learning_rate: float):
        self.lr = learning_rate
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in store.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in store.items()}
        self._store = store

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - ADAM_BETA1**self.t
        c2 = 1.0 - ADAM_BETA2**self.t
        for name, p in self._store.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * np.square(g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


class MomentumSGD:
    def __init__(self, store: ParamStore, learning_rate: float, momentum: float):
        self.lr = learning_rate
        self.mu = momentum
        self.vel = {name: np.zeros_like(p.data) for name, p in store.items()}
        self._store = store

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, p in self._store.items():
            vel = self.vel[name]
            vel *= self.mu
            vel += grads[name]
            p.data -= self.lr * vel


def make_optimizer(cfg: TrainConfig, store: ParamStore):
    if cfg.optimizer == "adam":
        return Adam(store, cfg.learning_rate)
    return MomentumSGD(store, cfg.learning_rate, cfg.momentum)


def _clip_loss_and_grads(net: Network, rec: ClipRecord):
    with Tape() as tape:
        prob, _ = net.forward(rec.x)
        loss = bce_loss(prob, np.array([rec.label], dtype=np.float64))
    grads = tape.backward(loss)
    return loss.item(), {t.name: g for t, g in grads.items()}


def train(
    net: Network,
    dataset: dict[str, list[ClipRecord]],
    cfg: TrainConfig,
    log=None,
    stop_fn=None,
) -> TrainResult:
    """Fit `net` on dataset["train"], early-stopping on dataset["val"].

    `stop_fn(history)` is an optional external stop hook checked after
    each epoch.  On return the network holds the parameters of the best
    validation epoch.
    """
    train_clips = dataset.get("train", [])
    val_clips = dataset.get("val", [])
    if not train_clips:
        raise ValueError("dataset has no train clips")
    if not val_clips:
        raise ValueError("dataset has no val clips")
    rng = np.random.default_rng(cfg.seed)
    opt = make_optimizer(cfg, net.store)
    names = net.store.names()
    history: list[EpochStats] = []
    best_bce = math.inf
    best_epoch = 0
    best_snap = net.store.snapshot()
    since_best = 0
    stopped_early = False
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_clips))
        loss_sum = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grad_sum = {name: np.zeros_like(net.store[name].data) for name in names}
            for idx in batch:
                loss, grads = _clip_loss_and_grads(net, train_clips[int(idx)])
                loss_sum += loss
                for name in names:
                    grad_sum[name] += grads[name]
            inv = 1.0 / len(batch)
            opt.step({name: g * inv for name, g in grad_sum.items()})
        train_bce = loss_sum / len(train_clips)
        val_report = evaluate(net, val_clips)
        stats = EpochStats(epoch, train_bce, val_report.bce, val_report.metrics.accuracy)
        history.append(stats)
        if log is not None:
            log(
                f"epoch {epoch:3d}  train_bce {stats.train_bce:.4f}  "
                f"val_bce {stats.val_bce:.4f}  val_acc {stats.val_accuracy:.4f}"
            )
        if stats.val_bce < best_bce:
            best_bce = stats.val_bce
            best_epoch = epoch
            best_snap = net.store.snapshot()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                stopped_early = True
                break
        if stop_fn is not None and stop_fn(history):
            stopped_early = True
            break
    net.store.restore(best_snap)
    return TrainResult(history, best_epoch, best_bce, stopped_early)


# ---------------------------------------------------------------------------
# metrics and evaluation


@dataclass(frozen=True)
class Metrics:
    """Confusion-derived scores; undefined ratios are NaN and listed in
    `undefined` instead of raising."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    undefined: frozenset[str] = frozenset()


def metric_math(tp: int, tn: int, fp: int, fn: int) -> Metrics:
    """Scores from confusion counts; division-by-zero cases are flagged."""
    for name, v in (("tp", tp), ("tn", tn), ("fp", fp), ("fn", fn)):
        if v < 0:
            raise ValueError(f"{name} must be >= 0, got {v}")
    n = tp + tn + fp + fn
    if n == 0:
        raise ValueError("empty confusion: all counts are zero")
    undefined = set()
    accuracy = (tp + tn) / n
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = math.nan
        undefined.add("precision")
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = math.nan
        undefined.add("recall")
    if 2 * tp + fp + fn > 0:
        f1 = 2 * tp / (2 * tp + fp + fn)
    else:
        f1 = math.nan
        undefined.add("f1")
    return Metrics(accuracy, precision, recall, f1, frozenset(undefined))


@dataclass
class EvalReport:
    n: int
    tp: int
    tn: int
    fp: int
    fn: int
    metrics: Metrics
    bce: float
    threshold: float
    records: list[tuple[str, int, float]]  # (clip_id, label, probability)


def evaluate(net: Network, clips: list[ClipRecord], threshold: float = THRESHOLD) -> EvalReport:
    """Forward every clip and score the hard calls at `threshold`."""
    if not clips:
        raise ValueError("no clips to evaluate")
    records = []
    for rec in clips:
        records.append((rec.clip_id, int(rec.label), net.predict(rec.x)))
    return report_from_records(records, threshold)


def report_from_records(records: list[tuple[str, int, float]], threshold: float = THRESHOLD) -> EvalReport:
    tp = tn = fp = fn = 0
    probs = np.array([p for _, _, p in records], dtype=np.float64)
    labels = np.array([label for _, label, _ in records], dtype=np.float64)
    for label, p in zip(labels, probs):
        positive = p >= threshold
        if label == 1:
            tp, fn = (tp + 1, fn) if positive else (tp, fn + 1)
        else:
            fp, tn = (fp + 1, tn) if positive else (fp, tn + 1)
    bce = bce_loss(probs, labels).item()
    return EvalReport(
        n=len(records),
        tp=tp,
        tn=tn,
        fp=fp,
        fn=fn,
        metrics=metric_math(tp, tn, fp, fn),
        bce=bce,
        threshold=threshold,
        records=records,
    )


# column -> (attribute getter, True if larger is better)
_COMPARE_COLUMNS = {
    "accuracy": (lambda r: r.metrics.accuracy, True),
    "precision": (lambda r: r.metrics.precision, True),
    "recall": (lambda r: r.metrics.recall, True),
    "f1": (lambda r: r.metrics.f1, True),
    "bce": (lambda r: r.bce, False),
    "false_negatives": (lambda r: r.fn, False),
    "false_positives": (lambda r: r.fp, False),
}


@dataclass
class Comparison:
    names: list[str]
    table: dict[str, list[float]]  # column -> per-run values
    best: dict[str, str]  # column -> run name that wins it

    def __str__(self) -> str:
        cols = list(_COMPARE_COLUMNS)
        name_w = max(len(n) for n in self.names + ["run"])
        head = f"{'run':<{name_w}}" + "".join(f"  {c:>15}" for c in cols)
        lines = [head]
        for i, name in enumerate(self.names):
            cells = []
            for c in cols:
                v = self.table[c][i]
                mark = "*" if self.best.get(c) == name else " "
                cells.append(f"  {v:>14.4f}{mark}")
            lines.append(f"{name:<{name_w}}" + "".join(cells))
        return "\n".join(lines)


def compare_runs(named_reports: list[tuple[str, EvalReport]]) -> Comparison:
    """Rank runs per column; NaN (undefined) never wins a column."""
    if not named_reports:
        raise ValueError("no reports to compare")
    names = [name for name, _ in named_reports]
    if len(set(names)) != len(names):
        raise ValueError("duplicate run names")
    table: dict[str, list[float]] = {}
    best: dict[str, str] = {}
    for col, (getter, larger) in _COMPARE_COLUMNS.items():
        vals = [float(getter(r)) for _, r in named_reports]
        table[col] = vals
        defined = [(v, i) for i, v in enumerate(vals) if not math.isnan(v)]
        if defined:
            pick = max(defined) if larger else min(defined)
            # max/min on (value, index) ties break to the later/earlier
            # index; normalize ties to the first run listed
            target = pick[0]
            idx = next(i for v, i in defined if v == target)
            best[col] = names[idx]
    return Comparison(names, table, best)


# ---------------------------------------------------------------------------
# dataset loading


def load_dataset(data_dir, pre_cfg: PreprocConfig) -> dict[str, list[ClipRecord]]:
    """Load and preprocess every split under a generated data directory.

    Stored clips are already at the pipeline's target frame rate, so the
    rate-reduction stage is an identity here.
    """
    dataset: dict[str, list[ClipRecord]] = {}
    for split in SPLITS:
        records = []
        for clip_id, frames, label in load_split(data_dir, split):
            clip = RawClip(frames, fps=pre_cfg.target_fps)
            records.append(ClipRecord(clip_id, preprocess(clip, pre_cfg), label))
        dataset[split] = records
    return dataset


def synthesize_dataset(n, positive_ratio, seed, scene, pre_cfg: PreprocConfig) -> dict[str, list[ClipRecord]]:
    """Generate and preprocess a dataset fully in memory.

    Uses the same per-clip RNG streams and split plan as the on-disk
    generator, so (n, ratio, seed, scene) names the same dataset either way.
    """
    from .synth import generate, plan_split

    plan = plan_split(n, positive_ratio, np.random.default_rng(np.random.SeedSequence((seed, 1))))
    dataset: dict[str, list[ClipRecord]] = {split: [] for split in SPLITS}
    for idx, (label, split) in enumerate(plan):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0, idx)))
        clip = generate(scene, bool(label), rng)
        x = preprocess(RawClip(clip.frames, fps=scene.fps), pre_cfg)
        dataset[split].append(ClipRecord(f"clip{idx:05d}", x, label))
    return dataset


# ---------------------------------------------------------------------------
# history and report files


def write_history(path, history: list[EpochStats]) -> None:
    """One epoch per line: epoch, train_bce, val_bce, val_accuracy."""
    lines = ["# epoch\ttrain_bce\tval_bce\tval_accuracy"]
    for s in history:
        lines.append(f"{s.epoch}\t{s.train_bce:.6f}\t{s.val_bce:.6f}\t{s.val_accuracy:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_history(path) -> list[EpochStats]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        epoch, train_bce, val_bce, val_acc = line.split("\t")
        out.append(EpochStats(int(epoch), float(train_bce), float(val_bce), float(val_acc)))
    return out


def write_report(path, report: EvalReport) -> None:
    """key=value header with every score, then one TSV record per clip."""
    m = report.metrics
    head = [
        f"n = {report.n}",
        f"threshold = {report.threshold:g}",
        f"true_positives = {report.tp}",
        f"true_negatives = {report.tn}",
        f"false_positives = {report.fp}",
        f"false_negatives = {report.fn}",
        f"accuracy = {m.accuracy:.6f}",
        f"precision = {m.precision:.6f}",
        f"recall = {m.recall:.6f}",
        f"f1 = {m.f1:.6f}",
        f"bce = {report.bce:.6f}",
        "",
        "# clip\tlabel\tprobability",
    ]
    rows = [f"{cid}\t{label}\t{p:.6f}" for cid, label, p in report.records]
    Path(path).write_text("\n".join(head + rows) + "\n", encoding="utf-8")


def read_report(path) -> EvalReport:
    header: dict[str, str] = {}
    records: list[tuple[str, int, float]] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line and "\t" not in line:
            key, _, value = line.partition("=")
            header[key.strip()] = value.strip()
        else:
            cid, label, prob = line.split("\t")
            records.append((cid, int(label), float(prob)))
    report = report_from_records(records, float(header.get("threshold", THRESHOLD)))
    # counts in the file must agree with the records themselves
    for key, value in (
        ("n", report.n),
        ("true_positives", report.tp),
        ("true_negatives", report.tn),
        ("false_positives", report.fp),
        ("false_negatives", report.fn),
    ):
        if key in header and int(header[key]) != value:
            raise ValueError(f"{path}: header {key}={header[key]} disagrees with records ({value})")
    return report
