"""
Randomised property checks for the canonization (used by ``shiftcanon verify``).

Each check draws its own inputs from a seeded generator and reports the worst
residual seen against a fixed tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import canon
from .canon import canonize_array, canonize_grad_array, extract_shift, reference_angles
from .nn import build_pipeline_nets, guidance_features, loss_classifier, loss_guidance
from .evaluate import pairwise_distance_report, shift_consistency
from .signal import circular_shift, magnitude_spectrum, wrap_angle

LENGTHS = (64, 300, 301)


@dataclass
class PropertyResult:
    name: str
    worst: float
    tol: float
    trials: int
    passed: bool = False
    # "max" means worst <= tol passes, "min" means worst > tol passes
    kind: str = "max"

    def __post_init__(self):
        self.passed = bool(self.worst <= self.tol if self.kind == "max" else self.worst > self.tol)

    def line(self) -> str:
        op = "<=" if self.kind == "max" else ">"
        return (f"{'PASS' if self.passed else 'FAIL'}  {self.name:<32} worst={self.worst:.3e} "
                f"{op} {self.tol:.0e}  (n={self.trials})")


def _canonize(X, phi, fault=False):
    if not fault:
        return canonize_array(X, phi)[0]
    # deliberately wrong direction of the phase ramp
    L = X.shape[-1]
    delta = canon._delta(canon._theta(reference_angles(X), phi), L)
    return circular_shift(X, -float(delta))


def _sample(rng, lengths=LENGTHS, max_channels=3):
    L = int(rng.choice(lengths))
    C = int(rng.integers(1, max_channels + 1))
    return rng.normal(size=(C, L)), L


def _drop_nyquist(x):
    """Zero the even-length Nyquist bin, which a real fractional shift can only scale by cos(pi t)."""
    L = x.shape[-1]
    if L % 2:
        return x
    X = np.fft.rfft(x, axis=-1)
    X[..., -1] = 0.0
    return np.fft.irfft(X, n=L, axis=-1)


def _circ(a, b):
    return abs(float(wrap_angle(a - b)))


def check_shift_invariance(rng, trials=1000, fault=False):
    worst = 0.0
    for _ in range(trials):
        x, L = _sample(rng)
        t = int(rng.integers(-2 * L, 2 * L))
        phi = float(rng.uniform(-np.pi, np.pi))
        a = _canonize(x, phi, fault)
        b = _canonize(circular_shift(x, t), phi, fault)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return PropertyResult("shift_invariance", worst, 1e-9, trials)


def _recovery_error(x, t):
    L = x.shape[-1]
    got = extract_shift(x, circular_shift(x, t))
    return abs((got - t + L / 2) % L - L / 2)


def check_shift_recovery(rng, trials=1000, fault=False):
    worst_int = worst_frac = 0.0
    for _ in range(trials):
        x, L = _sample(rng)
        t_int = int(rng.integers(0, L))
        t_frac = float(rng.uniform(-L / 2, L / 2))
        if fault:
            t_int, t_frac = t_int + 0.25, t_frac + 0.25
        worst_int = max(worst_int, _recovery_error(x, t_int))
        worst_frac = max(worst_frac, _recovery_error(x, t_frac))
    return [PropertyResult("recover_integer_shift", worst_int, 1e-9, trials),
            PropertyResult("recover_fractional_shift", worst_frac, 1e-6, trials)]


def check_group_axioms(rng, trials=200, fault=False):
    """Shift-induced addition of fundamental-bin angles forms an abelian group."""
    res = {k: 0.0 for k in ("closure", "associativity", "identity", "inverse", "commutativity", "action")}

    def ph(v):
        return float(reference_angles(v))

    for _ in range(trials):
        x, L = _sample(rng)
        w0 = 2 * np.pi / L
        a, b, c = rng.uniform(-L, L, size=3)
        p0 = ph(x)
        ab = ph(circular_shift(circular_shift(x, a), b))
        res["closure"] = max(res["closure"], _circ(ab, p0 - w0 * (a + b)),
                             0.0 if -np.pi < ab <= np.pi else np.inf)
        left = ph(circular_shift(circular_shift(circular_shift(x, a), b), c))
        right = ph(circular_shift(circular_shift(x, a), b + c))
        res["associativity"] = max(res["associativity"], _circ(left, right))
        res["identity"] = max(res["identity"], _circ(ph(circular_shift(x, 0.0)), p0))
        res["inverse"] = max(res["inverse"], _circ(ph(circular_shift(circular_shift(x, a), -a)), p0))
        ba = ph(circular_shift(circular_shift(x, b), a))
        res["commutativity"] = max(res["commutativity"], _circ(ab, ba))
        phi = float(rng.uniform(-np.pi, np.pi))
        s = int(rng.integers(-L, L))
        y = circular_shift(_canonize(x, phi, fault), s)
        res["action"] = max(res["action"], _circ(ph(y), phi - w0 * s))
    return [PropertyResult(f"group_{k}", v, 1e-8, trials) for k, v in res.items()]


def check_periodicity(rng, trials=200, fault=False):
    worst = 0.0
    for _ in range(trials):
        x, L = _sample(rng)
        m = int(rng.integers(-5, 6))
        y = circular_shift(x, m * L + (1 if fault else 0))
        worst = max(worst, float(np.max(np.abs(y - x))))
    return PropertyResult("shift_periodic_in_length", worst, 0.0, trials)


def check_canon_properties(rng, trials=200, fault=False):
    mag = idem = target = 0.0
    inj = np.inf
    surj = 0.0
    for _ in range(trials):
        x, L = _sample(rng)
        phi = float(rng.uniform(-np.pi, np.pi))
        y = _canonize(x, phi, fault)
        xn = _drop_nyquist(x)
        yn = _canonize(xn, phi, fault)
        mag = max(mag, float(np.max(np.abs(magnitude_spectrum(yn) - magnitude_spectrum(xn)))))
        idem = max(idem, float(np.max(np.abs(_canonize(y, phi, fault) - y))))
        target = max(target, _circ(float(reference_angles(y)), phi))
        phi_b = float(wrap_angle(phi + rng.uniform(1e-3, 2 * np.pi - 1e-3)))
        inj = min(inj, float(np.max(np.abs(_canonize(x, phi_b, fault) - y))) / np.max(np.abs(x)))
        t = float(rng.integers(0, 2 * L)) / 2
        phi_t = canon.angle_for_shift(x, t)
        surj = max(surj, float(np.max(np.abs(_canonize(x, phi_t, fault) - circular_shift(x, t)))))
    return [PropertyResult("canon_reaches_target_angle", target, 1e-8, trials),
            PropertyResult("canon_magnitude_preserved", mag, 1e-9, trials),
            PropertyResult("canon_idempotent", idem, 1e-9, trials),
            PropertyResult("canon_injective_in_phi", inj, 1e-9, trials, kind="min"),
            PropertyResult("canon_reaches_every_shift", surj, 1e-8, trials)]


def _rel(a, fd, dominant_frac):
    dom = np.abs(fd) >= dominant_frac * np.max(np.abs(fd))
    return float(np.max(np.abs(a - fd)[dom] / (np.abs(fd)[dom] + 1e-12)))


def _kink_aware_diff(f, a, i, h, min_h=1e-11):
    """Central difference of ``f`` along coordinate ``i`` that avoids ReLU / max-pool kinks.

    The network is piecewise smooth.  When the forward and backward one-sided
    slopes disagree a kink lies inside the stencil, so the step shrinks until
    both sides see the same smooth piece.
    """
    f0 = f(a)
    while True:
        ap, am = a.copy(), a.copy()
        ap[i] += h
        am[i] -= h
        fp, fm = f(ap), f(am)
        fwd, bwd = (fp - f0) / h, (f0 - fm) / h
        if abs(fwd - bwd) <= 1e-3 * max(abs(fwd), abs(bwd), 1e-6) or h <= min_h:
            return (fp - fm) / (2 * h)
        h /= 10


def check_gradients(rng, trials=100, fault=False, h=1e-5):
    """Analytic d(canonize)/d(phi) and the guidance chain vs central differences."""
    worst_canon = worst_chain = 0.0
    for trial in range(trials):
        x, L = _sample(rng, lengths=(64, 300, 301))
        current = float(reference_angles(x))
        phi = float(wrap_angle(current + rng.choice([-1, 1]) * rng.uniform(1e-3, np.pi - 1e-3)))
        _, g, _ = canonize_grad_array(x, phi)
        if fault:
            g = -g
        fd = (canonize_array(x, phi + h)[0] - canonize_array(x, phi - h)[0]) / (2 * h)
        worst_canon = max(worst_canon, _rel(g, fd, 0.1))

        # guidance chain: L_G w.r.t. every raw angle of a small batch
        X = rng.normal(size=(4, 1, 64))
        y = rng.integers(0, 2, size=4)
        fG, fC = build_pipeline_nets("guided", 2, 1, 64, seed=trial)
        a = fG(guidance_features(X))[:, 0]
        xt, dxt, _ = canonize_grad_array(X, a)
        logits, cache = fC.forward(xt)
        l_c, d_logits = loss_classifier(logits, y)
        d_xt = fC.backward(cache, d_logits)
        analytic = np.sum(d_xt * dxt, axis=(1, 2)) + loss_guidance(l_c, a, "ours")[1]
        if fault:
            analytic = -analytic

        def total(ang):
            lc = loss_classifier(fC(canonize_array(X, ang)[0]), y)[0]
            return loss_guidance(lc, ang, "ours")[0]

        fd_a = np.array([_kink_aware_diff(total, a, i, h / 100) for i in range(4)])
        worst_chain = max(worst_chain, _rel(analytic, fd_a, 0.01))
    return [PropertyResult("grad_canonize_phi", worst_canon, 1e-5, trials),
            PropertyResult("grad_guidance_chain", worst_chain, 1e-4, trials)]


def check_distance_collapse(rng, trials=5, fault=False):
    worst = 0.0
    for _ in range(trials):
        x, L = _sample(rng)
        shifts = rng.integers(0, L, size=50)
        A = np.stack([circular_shift(x, int(t)) for t in shifts])
        phi = float(rng.uniform(-np.pi, np.pi))
        rep = pairwise_distance_report(A, transform=lambda b: _canonize_batch(b, phi, fault))
        worst = max(worst, rep["max"])
    return PropertyResult("distance_collapse_50_shifts", worst, 1e-6, trials)


def _canonize_batch(X, phi, fault):
    return np.stack([_canonize(x, phi, fault) for x in X])


def check_loss_algebra(rng, trials=200, fault=False):
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 65))
        l_c = float(rng.uniform(0, 5))
        a = rng.normal(scale=3, size=n)
        ours = loss_guidance(l_c, a, "ours")[0]
        neg = loss_guidance(l_c, a, "neg_var")[0]
        worst = max(worst, abs(ours + neg - 2 * l_c) + (1e-6 if fault else 0))
    rate, _ = shift_consistency(lambda X: (X[:, 0, 0] > 0).astype(int), np.array([[[1.0, -1.0]]]), 1)
    return [PropertyResult("loss_variant_algebra", worst, 1e-12, trials),
            PropertyResult("scons_toy_enumeration", abs(rate - 0.5), 0.0, 1)]


def run_all(seed: int = 0, trials: int = 1000, fault: bool = False):
    """Run every property.  ``trials`` scales the random checks (1000 is the default suite)."""
    rng = np.random.default_rng(seed)
    scale = trials / 1000
    n = lambda base: max(1, int(round(base * scale)))  # noqa: E731
    results = [check_shift_invariance(rng, n(1000), fault)]
    results += check_shift_recovery(rng, n(1000), fault)
    results += check_group_axioms(rng, n(200), fault)
    results.append(check_periodicity(rng, n(200), fault))
    results += check_canon_properties(rng, n(200), fault)
    results += check_gradients(rng, n(100), fault)
    results.append(check_distance_collapse(rng, n(5), fault))
    results += check_loss_algebra(rng, n(200), fault)
    return results
