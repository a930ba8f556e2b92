"""
Joint training of the guidance network and the classifier.

The guidance network reads the (shift invariant) magnitude spectrum and emits
one raw angle per sample; the sample is canonized to that angle and fed to the
classifier.  The classifier is updated from the cross-entropy alone and the
guidance network from cross-entropy (through the analytic derivative of the
canonization) plus the angle-spread term of the selected variant.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..baselines import augment_batch
from ..canon import canonize_array, canonize_grad_array
from ..data import Dataset
from ..errors import NonFiniteLoss
from ..signal import TimeSeries, magnitude_spectrum, wrap_angle
from .losses import VARIANTS, loss_classifier, loss_guidance
from .network import Network, adam_step, blurpool, conv, dense, global_avg_pool, maxpool, relu

log = logging.getLogger(__name__)

MODES = ("plain", "fixed", "guided")


@dataclass
class TrainConfig:
    lr: float = 1e-3
    lr_guidance: float | None = None
    batch_size: int = 64
    max_epochs: int = 40
    lr_patience: int = 15
    stop_patience: int = 90
    seed: int = 0
    variant: str = "ours"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        for name in ("lr", "batch_size", "max_epochs", "lr_patience", "stop_patience"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def classifier_specs(n_classes: int, pool: str = "max", filters=(8, 16), kernel: int = 5,
                     padding: str = "zeros", blur_taps: int = 5):
    """conv -> relu -> pool(2) -> conv -> relu -> global average -> dense.

    ``pool='blur'`` swaps the strided max-pool for a dense max followed by a
    binomial blur-pool of stride 2.
    """
    if pool == "max":
        down = [maxpool(2)]
    elif pool == "blur":
        down = [maxpool(2, stride=1, padding="circular"), blurpool(blur_taps, 2)]
    else:
        raise ValueError(f"unknown pool {pool!r}")
    return [conv(filters[0], kernel, padding=padding), relu(), *down,
            conv(filters[1], kernel, padding=padding), relu(), global_avg_pool(), dense(n_classes)]


def guidance_specs(hidden: int = 16):
    return [dense(hidden), relu(), dense(1)]


def guidance_features(values: np.ndarray) -> np.ndarray:
    """Flattened magnitude spectrum divided by the length, shape ``(N, C * bins)``."""
    values = np.asarray(values, dtype=float)
    mag = magnitude_spectrum(values) / values.shape[-1]
    return mag.reshape(len(values), -1)


def guidance_input_size(channels: int, length: int) -> int:
    return channels * (length // 2 + 1)


def guidance_raw(fG: Network, values: np.ndarray) -> np.ndarray:
    return fG(guidance_features(values))[:, 0]


def guidance_angle(fG: Network, x) -> float:
    """Wrapped guidance angle for one sample (``TimeSeries`` or ``(C, L)`` array)."""
    values = x.values if isinstance(x, TimeSeries) else np.asarray(x, dtype=float)
    return float(wrap_angle(guidance_raw(fG, values[None])[0]))


class Pipeline:
    """Prediction composite: optional canonization followed by the classifier.

    ``mode`` is ``plain`` (no transform), ``fixed`` (canonize to ``phi``) or
    ``guided`` (canonize to the guidance angle).
    """

    def __init__(self, fC: Network, fG: Network | None = None, mode: str = "plain", phi: float = 0.0):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode == "guided" and fG is None:
            raise ValueError("guided mode needs a guidance network")
        self.fC, self.fG, self.mode, self.phi = fC, fG, mode, float(phi)

    def angles(self, X):
        if self.mode == "guided":
            return guidance_raw(self.fG, X)
        return np.full(len(X), self.phi)

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        if self.mode == "plain":
            return X
        return canonize_array(X, self.angles(X))[0]

    def logits(self, X, batch: int = 512):
        X = np.asarray(X, dtype=float)
        return np.concatenate([self.fC(self.transform(X[i:i + batch]))
                               for i in range(0, len(X), batch)] or [np.zeros((0, 1))])

    def predict(self, X):
        # argmax breaks ties toward the lowest class index
        return np.argmax(self.logits(X), axis=1)

    def to_dict(self):
        return {"mode": self.mode, "phi": self.phi, "fC": self.fC.to_dict(),
                "fG": self.fG.to_dict() if self.fG is not None else None}

    @classmethod
    def from_dict(cls, d):
        fG = Network.from_dict(d["fG"]) if d.get("fG") else None
        return cls(Network.from_dict(d["fC"]), fG, d["mode"], d.get("phi", 0.0))


@dataclass
class TrainResult:
    pipeline: Pipeline
    history: list = field(default_factory=list)          # one dict per epoch
    batch_angle_std: list = field(default_factory=list)  # one value per guided batch
    best_epoch: int = -1
    config: dict = field(default_factory=dict)


def _check(loss):
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss became {loss}")


def _val_loss(pipe: Pipeline, ds: Dataset):
    logits = pipe.logits(ds.X)
    loss, _ = loss_classifier(logits, ds.y)
    acc = float(np.mean(np.argmax(logits, axis=1) == ds.y))
    return loss, acc


def _fit(pipe: Pipeline, train: Dataset, val: Dataset, cfg: TrainConfig, step, nets):
    rng = np.random.default_rng(cfg.seed)
    lr = cfg.lr
    lr_g = cfg.lr_guidance if cfg.lr_guidance is not None else cfg.lr
    best = (np.inf, -1, [n.copy() for n in nets])
    history, stds = [], []
    bad_epochs = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if len(idx) < 2:
                continue
            loss, std = step(train.X[idx], train.y[idx], lr, lr_g, rng)
            _check(loss)
            losses.append(loss)
            if std is not None:
                stds.append(std)
        v_loss, v_acc = _val_loss(pipe, val)
        _check(v_loss)
        history.append({"epoch": epoch, "lr": lr, "train_loss": float(np.mean(losses)),
                        "val_loss": v_loss, "val_acc": v_acc,
                        "angle_std": stds[-1] if stds else float("nan")})
        log.info("epoch %d lr %.2e train %.4f val %.4f acc %.3f", epoch, lr,
                 history[-1]["train_loss"], v_loss, v_acc)
        if v_loss < best[0]:
            best = (v_loss, epoch, [n.copy() for n in nets])
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs % cfg.lr_patience == 0:
                lr, lr_g = lr / 2, lr_g / 2
            if epoch - best[1] >= cfg.stop_patience:
                break
    for net, snap in zip(nets, best[2]):
        net.load_params(snap)
    return TrainResult(pipe, history, stds, best[1], asdict(cfg))


def train_joint(fG: Network | None, fC: Network, train: Dataset, val: Dataset,
                cfg: TrainConfig) -> TrainResult:
    """Train classifier and guidance network on canonized samples.

    The ``fixed_phi`` variant canonizes every sample to angle 0 and never
    touches ``fG``.  The returned networks hold the lowest-validation-loss
    parameters.
    """
    if cfg.variant == "fixed_phi":
        pipe = Pipeline(fC, None, "fixed", 0.0)

        def step(X, y, lr, lr_g, rng):
            xt, _ = canonize_array(X, 0.0)
            logits, cache = fC.forward(xt)
            loss, d = loss_classifier(logits, y)
            fC.zero_grad()
            fC.backward(cache, d)
            adam_step(fC, lr=lr)
            return loss, None

        return _fit(pipe, train, val, cfg, step, [fC])

    pipe = Pipeline(fC, fG, "guided")

    def step(X, y, lr, lr_g, rng):
        feats = guidance_features(X)
        raw, g_cache = fG.forward(feats)
        a = raw[:, 0]
        xt, dxt, _ = canonize_grad_array(X, a)
        logits, c_cache = fC.forward(xt)
        l_c, d_logits = loss_classifier(logits, y)
        fC.zero_grad()
        d_xt = fC.backward(c_cache, d_logits)
        _, d_extra = loss_guidance(l_c, a, cfg.variant)
        d_a = np.sum(d_xt * dxt, axis=(1, 2)) + d_extra
        fG.zero_grad()
        fG.backward(g_cache, d_a[:, None])
        adam_step(fC, lr=lr)
        adam_step(fG, lr=lr_g)
        return l_c, float(a.std())

    return _fit(pipe, train, val, cfg, step, [fG, fC])


def train_classifier(fC: Network, train: Dataset, val: Dataset, cfg: TrainConfig,
                     augment: bool = False) -> TrainResult:
    """Plain classifier without canonization, optionally with random-shift augmentation."""
    pipe = Pipeline(fC, None, "plain")

    def step(X, y, lr, lr_g, rng):
        if augment:
            X = augment_batch(X, rng)
        logits, cache = fC.forward(X)
        loss, d = loss_classifier(logits, y)
        fC.zero_grad()
        fC.backward(cache, d)
        adam_step(fC, lr=lr)
        return loss, None

    return _fit(pipe, train, val, cfg, step, [fC])


def build_pipeline_nets(kind: str, n_classes: int, channels: int, length: int, seed: int = 0,
                        **clf_kwargs):
    """Fresh ``(fG, fC)`` for ``kind`` in ``{'guided', 'fixed', 'plain', 'blur'}``."""
    pool = "blur" if kind == "blur" else "max"
    fC = Network(classifier_specs(n_classes, pool=pool, **clf_kwargs), (channels, length), seed)
    fG = None
    if kind == "guided":
        fG = Network(guidance_specs(), (guidance_input_size(channels, length),), seed + 1)
    return fG, fC
