"""
End-to-end comparison on the two-tone synthetic task.

Three classifiers share the data, split and training schedule:

``baseline``  conv / strided max-pool classifier on raw samples
``blurpool``  same classifier with max-pool followed by a binomial blur-pool
``ours``      guidance network + canonization in front of the baseline classifier

Each is scored on the held-out test split for accuracy and shift consistency.
For the guided pipeline the mean intra/inter-class distances of training
samples before and after canonization, and the batch angle spread during
training, are reported as well.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from .data import SyntheticSpec, generate_sinusoid_task, split
from .evaluate import class_distance_summary, classification_metrics, shift_consistency
from .nn import TrainConfig, build_pipeline_nets, train_classifier, train_joint

# Pinned from pilot runs of the default configuration (seeds 0-2): the
# unprotected classifiers scored 0.970-1.000 over 500 pairs, the guided
# pipeline 1.000 every time.  The baseline must stay strictly below this.
BASELINE_SCONS_THRESHOLD = 0.99


@dataclass
class ExperimentConfig:
    per_class: int = 1000
    noise_var: float = 0.1
    data_seed: int = 0
    split_seed: int = 0
    seed: int = 0
    epochs: int = 50
    lr: float = 3e-3
    batch_size: int = 64
    lr_patience: int = 3
    stop_patience: int = 10
    n_pairs: int = 500
    # a finer shift-consistency estimate used to compare the two unprotected models
    n_pairs_fine: int = 4000
    pair_seed: int = 1
    padding: str = "zeros"
    baseline_scons_threshold: float = BASELINE_SCONS_THRESHOLD


def _score(pipe, test, cfg):
    acc, f1 = classification_metrics(pipe.predict(test.X), test.y, test.n_classes)
    rate, pairs = shift_consistency(pipe.predict, test, cfg.n_pairs, np.random.default_rng(cfg.pair_seed))
    fine, fine_pairs = shift_consistency(pipe.predict, test, cfg.n_pairs_fine,
                                         np.random.default_rng(cfg.pair_seed + 1))
    return {"accuracy": acc, "macro_f1": f1, "shift_consistency": rate, "n_pairs": pairs,
            "shift_consistency_fine": fine, "n_pairs_fine": fine_pairs}


def run_synthetic_experiment(cfg: ExperimentConfig | None = None) -> dict:
    """Train the three conditions and return a JSON-serialisable summary."""
    cfg = cfg or ExperimentConfig()
    t_start = time.perf_counter()
    ds = generate_sinusoid_task(SyntheticSpec(per_class=cfg.per_class, noise_var=cfg.noise_var,
                                              seed=cfg.data_seed))
    train, val, test = split(ds, (0.6, 0.2, 0.2), cfg.split_seed)
    C, L = ds.X.shape[1:]
    tcfg = TrainConfig(lr=cfg.lr, batch_size=cfg.batch_size, max_epochs=cfg.epochs,
                       lr_patience=cfg.lr_patience, stop_patience=cfg.stop_patience,
                       seed=cfg.seed, variant="ours")

    conditions, guidance = {}, {}
    for name, kind in (("baseline", "plain"), ("blurpool", "blur"), ("ours", "guided")):
        t0 = time.perf_counter()
        fG, fC = build_pipeline_nets(kind, ds.n_classes, C, L, cfg.seed, padding=cfg.padding)
        if kind == "guided":
            res = train_joint(fG, fC, train, val, tcfg)
        else:
            res = train_classifier(fC, train, val, tcfg)
        scores = _score(res.pipeline, test, cfg)
        scores.update(best_epoch=res.best_epoch, epochs_run=len(res.history),
                      seconds=time.perf_counter() - t0)
        conditions[name] = scores
        if kind == "guided":
            stds = res.batch_angle_std
            guidance = {
                "raw": class_distance_summary(train.X, train.y),
                "canonized": class_distance_summary(train.X, train.y, res.pipeline.transform),
                "angle_std_initial": stds[0],
                "angle_std_final": stds[-1],
            }
    return {"config": asdict(cfg), "conditions": conditions, "guidance": guidance,
            "sizes": {"train": len(train), "val": len(val), "test": len(test)},
            "seconds": time.perf_counter() - t_start}
