"""Finite-difference gradient suite over every primitive and the composite losses.

All checks run in 64-bit. Each case is a ``(name, params, loss)`` triple where
``loss`` rebuilds a scalar from the current parameter values.
"""

from __future__ import annotations

import contextlib
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor, default_dtype, finite_difference_check, inject_gradient_fault
from .model import (
    AstnConfig,
    AstnParams,
    classify,
    discriminate,
    generate,
    generator_adversarial_loss,
    gru_step,
    loss_jc,
    loss_jd,
    pair_features,
)

Case = tuple[str, list[Tensor], Callable[[], Tensor]]
TOLERANCE = 1e-6


def primitive_cases(rng: np.random.Generator) -> list[Case]:
    """One case per differentiable primitive; losses are nonlinear so every input matters."""
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    c = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    w = Tensor(rng.standard_normal((3, 4)))
    img = Tensor(rng.standard_normal((2, 2, 5, 6)), requires_grad=True)
    k2 = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True)
    b2 = Tensor(rng.standard_normal(3), requires_grad=True)
    seq = Tensor(rng.standard_normal((2, 3, 8)), requires_grad=True)
    k1 = Tensor(rng.standard_normal((4, 3, 3)), requires_grad=True)
    b1 = Tensor(rng.standard_normal(4), requires_grad=True)
    # distinct values keep max-pool away from ties
    pool_in = Tensor(rng.permutation(96).reshape(2, 3, 4, 4) * 0.1, requires_grad=True)
    pool1_in = Tensor(rng.permutation(48).reshape(2, 3, 8) * 0.1, requires_grad=True)
    # bounded away from 0 so the kink of abs / leaky_relu is never crossed
    kinked = Tensor(rng.uniform(0.1, 1.0, (3, 4)) * rng.choice([-1, 1], (3, 4)), requires_grad=True)
    probs = Tensor(rng.uniform(0.05, 0.95, 6), requires_grad=True)
    labels = rng.integers(0, 2, 6)
    weighted = lambda t: (t * w).sum()
    return [
        ("add", [a, c], lambda: weighted(ag.add(a, c) * a)),
        ("sub", [a, c], lambda: weighted(ag.sub(a, c) * c)),
        ("mul", [a, c], lambda: weighted(ag.mul(a, c))),
        ("square", [a], lambda: weighted(ag.square(a))),
        ("abs", [kinked], lambda: weighted(ag.abs(kinked) * kinked)),
        ("matmul", [a, b], lambda: ag.square(ag.matmul(a, b)).sum()),
        ("sigmoid", [a], lambda: weighted(ag.sigmoid(a))),
        ("tanh", [a], lambda: weighted(ag.tanh(a))),
        ("leaky_relu", [kinked], lambda: weighted(ag.leaky_relu(kinked, 0.1) * kinked)),
        ("mean", [a], lambda: ag.square(ag.mean(a * a, axis=0)).sum() + ag.mean(a) * ag.mean(a)),
        ("concat", [a, c], lambda: ag.square(ag.concat([a * a, c], axis=1)).mean()),
        ("stack", [a, c], lambda: ag.square(ag.stack([a, c * a], axis=1)).sum()),
        ("take", [a], lambda: ag.square(ag.take(a * a, [2, 0, 2], axis=0)).sum()),
        ("getitem", [a], lambda: ag.square(a[1:, ::2] * a[:2, 1::2]).sum()),
        ("transpose", [a], lambda: ag.square(a.transpose() @ c.detach()).sum()),
        ("conv2d", [img, k2, b2], lambda: ag.square(ag.conv2d(img, k2, b2, stride=1, padding=1)).sum()),
        ("conv2d_strided", [img, k2], lambda: ag.square(ag.conv2d(img, k2, stride=2, padding=1)).sum()),
        ("conv1d", [seq, k1, b1], lambda: ag.square(ag.conv1d(seq, k1, b1, padding=1)).sum()),
        ("max_pool2d", [pool_in], lambda: ag.square(ag.max_pool2d(pool_in, 2)).sum()),
        ("max_pool1d", [pool1_in], lambda: ag.square(ag.max_pool1d(pool1_in, 2)).sum()),
        ("bce", [probs], lambda: ag.bce(probs, labels, np.linspace(0.5, 1.5, 6))),
    ]


PRIMITIVES = tuple(name for name, _, _ in primitive_cases(np.random.default_rng(0)))


def toy_config(bidirectional: bool = True, **overrides) -> AstnConfig:
    """A model small enough to probe coordinate by coordinate."""
    base = dict(width=6, height=4, sample_rate=4, spatial_channels=(2, 3), spatial_pool_after=(0,),
                spatial_dim=3, intrinsic_channels=(3,), intrinsic_pool_after=(0,), intrinsic_dim=3,
                hidden_dim=3, bidirectional=bidirectional, classifier_hidden=(3,))
    base.update(overrides)
    return AstnConfig(**base)


def _toy_trials(rng: np.random.Generator, config: AstnConfig, seconds: Sequence[int]) -> list[np.ndarray]:
    p, w, h = config.sample_rate, config.width, config.height
    return [rng.uniform(0.0, 1.0, (t * p, w, h)) for t in seconds]


def _randomized(params: AstnParams, rng: np.random.Generator) -> AstnParams:
    # nonzero biases so every bias coordinate is exercised
    for name, t in params.items():
        if name.endswith("bias") or name.split(".")[-1].startswith("b_"):
            t.values = rng.uniform(-0.3, 0.3, t.shape)
    return params


def composite_cases(rng: np.random.Generator, config: AstnConfig | None = None,
                    adversarial_scale: float = 0.7) -> list[Case]:
    """J_C, J_D and both scaled adversarial objectives on a four-trial toy batch.

    Built under the active default dtype, so wrap in ``default_dtype`` for 64-bit.
    """
    config = config or toy_config()
    dtype = ag.get_default_dtype()
    params = _randomized(AstnParams.init(config, seed=int(rng.integers(1 << 30)), dtype=dtype), rng)
    frames = [f.astype(dtype) for f in _toy_trials(rng, config, (3, 2, 2, 3))]
    labels = rng.integers(0, 2, 10)
    g, c, d = params.partition("G"), params.partition("C"), params.partition("D")

    def jc():
        rep = generate(frames[:2], params, config)
        return loss_jc(classify(rep.g_ddot, params, config), labels[:5], rep.lengths)

    def jd():
        rep = generate(frames, params, config)
        feats = pair_features(rep, [(0, 1), (2, 3)], config)
        out = discriminate(feats, params)
        return loss_jd(out[1:], out[:1], config.same_subject_target)

    def adversarial(objective):
        def loss():
            rep = generate(frames[2:], params, config)
            d_same = discriminate(pair_features(rep, [(0, 1)], config), params)
            return generator_adversarial_loss(d_same, adversarial_scale, objective, config.same_subject_target)
        return loss

    return [("J_C", g + c, jc), ("J_D", g + d, jd), ("lambda*J_A", g + d, adversarial("ascent")),
            ("lambda*confusion", g + d, adversarial("confusion"))]


COMPOSITES = ("J_C", "J_D", "lambda*J_A", "lambda*confusion")


def gru_case(rng: np.random.Generator) -> Case:
    config = toy_config(bidirectional=False)
    params = _randomized(AstnParams.init(config, seed=int(rng.integers(1 << 30)), dtype=ag.get_default_dtype()), rng)
    x = Tensor(rng.standard_normal(config.intrinsic_dim), requires_grad=True)
    h = Tensor(rng.standard_normal(config.hidden_dim), requires_grad=True)
    weights = rng.standard_normal(config.hidden_dim)
    gru = [t for n, t in params.items() if n.startswith("gru.")]
    return "gru_step", gru + [x, h], lambda: (gru_step(x, h, params) * Tensor(weights)).sum()


@dataclass
class CheckResult:
    name: str
    max_error: float
    seeds: int
    seconds: float

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def _run(name: str, build: Callable[[np.random.Generator], list[Case]], seeds: Sequence[int], eps: float,
         max_coords: int | None) -> CheckResult:
    start = time.perf_counter()
    worst = 0.0
    with default_dtype(np.float64):
        for seed in seeds:
            cases = {n: (p, f) for n, p, f in build(np.random.default_rng(seed))}
            params, f = cases[name]
            worst = max(worst, finite_difference_check(f, params, eps=eps, max_coords=max_coords, seed=seed))
    return CheckResult(name, worst, len(seeds), time.perf_counter() - start)


def run_suite(seeds: Sequence[int] = range(10), eps: float = 1e-5, composite_coords: int = 3,
              fault: str | None = None, names: Sequence[str] | None = None) -> list[CheckResult]:
    """Check every primitive, the GRU step and the composite losses.

    ``fault`` names an op whose backward rule is deliberately corrupted while
    the suite runs; the affected checks must then fail.
    """
    seeds = list(seeds)
    plan = [(n, primitive_cases, None) for n in PRIMITIVES]
    plan.append(("gru_step", lambda rng: [gru_case(rng)], None))
    plan += [(n, composite_cases, composite_coords) for n in COMPOSITES]
    if names is not None:
        unknown = set(names) - {n for n, _, _ in plan}
        if unknown:
            raise ValueError(f"unknown checks: {sorted(unknown)}")
        plan = [p for p in plan if p[0] in names]
    results = []
    with inject_gradient_fault(fault) if fault else contextlib.nullcontext():
        for name, build, coords in plan:
            results.append(_run(name, build, seeds, eps, coords))
    return results


def eps_sweep(eps_values: Sequence[float] = (1e-3, 1e-4, 1e-5), seeds: Sequence[int] = range(3),
              names: Sequence[str] = ("sigmoid", "tanh", "conv2d", "gru_step", "J_C")) -> dict[float, float]:
    """Worst error over ``names`` for each step size."""
    return {eps: max(r.max_error for r in run_suite(seeds, eps=eps, names=names)) for eps in eps_values}

