"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Criteria 5-7 train toy networks end to end; the whole module takes
roughly 25 minutes on one CPU core.  Run it with

    pytest tests/test_acceptance.py -v -s

Every toy workload is pinned (seeds, step counts, architectures) so the
suite is deterministic on a given machine.
"""

import time

import numpy as np
import pytest

from param_inventory import apbsn_inventory, mmbsn_inventory, smmbsn_inventory

from mmbsn.masks import (
    MASK_TAGS,
    combined_exclusion,
    empirical_exclusion,
    exclusion_set,
    render_mask,
)
from mmbsn.metrics import psnr
from mmbsn.models import (
    ArchitectureConfig,
    build_apbsn,
    build_mmbsn,
    build_probe_stack,
    build_smmbsn,
)
from mmbsn.noise import NoiseSpec, analyze_regions, gen_clean, gen_correlated_noise
from mmbsn.ops import ConvParams, conv2d, conv2d_backward, l1_loss_and_grad
from mmbsn.pd import pd, pd_inv
from mmbsn.train import TrainingConfig, denoise, train


def report(criterion, ok, detail):
    line = f"[criterion {criterion}] {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    assert ok, line


# ---- shared toy data ------------------------------------------------------

PATTERNS = ("disks", "stripes", "gradient", "checker")


def blob_noise_set(n, seed0, size=64):
    """Clean images in [0.2, 0.8] plus 5x5-blob-correlated noise, sigma 0.2."""
    cleans, noisys = [], []
    for i in range(n):
        c = 0.2 + 0.6 * gen_clean(PATTERNS[i % 4], size, seed=seed0 + i)
        nz = gen_correlated_noise(NoiseSpec(0.2, "iso", 5, seed=seed0 + 500 + i), size)
        cleans.append(c)
        noisys.append(np.clip(c + nz, 0, 1))
    return cleans, noisys


def diagonal_noise_set(n, seed0, size=64):
    """Same, with '/'- or '\\'-streaked noise, one direction per image."""
    cleans, noisys = [], []
    for i in range(n):
        c = 0.2 + 0.6 * gen_clean(PATTERNS[i % 4], size, seed=seed0 + i)
        kernel = "slash" if i % 2 == 0 else "backslash"
        nz = gen_correlated_noise(NoiseSpec(0.2, kernel, 5, seed=seed0 + 500 + i), size)
        cleans.append(c)
        noisys.append(np.clip(c + nz, 0, 1))
    return cleans, noisys


def mean_psnr(model, noisys, cleans, refine=False):
    return float(
        np.mean(
            [
                psnr(denoise(model, n, s_test=2, refine=refine, seed=3), c)
                for n, c in zip(noisys, cleans)
            ]
        )
    )


# ---- criteria -------------------------------------------------------------


def test_criterion_1_blind_spot_exactness():
    """Every mask shape x kernel size x dilation: measured exclusion equals
    the structural analysis bit-exactly, over 3 independent weight draws."""
    t0 = time.perf_counter()
    mismatches = []
    for tag in MASK_TAGS:
        for k in (3, 5):
            for d in (2, 3):
                model = build_probe_stack(tag, k, d, channels=4, depth=4)
                theoretical = exclusion_set(render_mask(tag, k), d, 6)
                empirical = empirical_exclusion(model, 6, trials=3, probes=5, seed=7)
                if empirical != theoretical:
                    mismatches.append((tag, k, d))
    elapsed = time.perf_counter() - t0
    report(
        1,
        not mismatches and elapsed < 120,
        f"40/40 mask-kernel-dilation combos exact (radius 6, 3 draws) "
        f"in {elapsed:.1f}s; mismatches: {mismatches or 'none'}",
    )


def test_criterion_2_parameter_budgets():
    """count_params matches the closed-form inventory exactly and the
    reference budgets 3.7M / 5.3M / 7.3M within 10 percent."""
    t0 = time.perf_counter()
    cfg = ArchitectureConfig()  # 128 channels, slash+backslash, depths 2/7
    rows = []
    ok = True
    for name, builder, inventory, target in (
        ("apbsn", build_apbsn, apbsn_inventory, 3.7e6),
        ("mmbsn", build_mmbsn, mmbsn_inventory, 5.3e6),
        ("smmbsn", build_smmbsn, smmbsn_inventory, 7.3e6),
    ):
        total = builder(cfg).count_params()
        rel = total / target - 1.0
        ok &= total == inventory(cfg) and abs(rel) <= 0.10
        rows.append(f"{name}={total} ({rel:+.1%} vs {target:.1e})")
    elapsed = time.perf_counter() - t0
    report(2, ok and elapsed < 1.0, f"{'; '.join(rows)}; {elapsed:.2f}s")


def test_criterion_3_pd_round_trip():
    """pd_inv(pd(x, s), s) == x exactly for s in {1, 2, 5}, 100 images."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    checked = 0
    ok = True
    for i in range(100):
        h = 10 * int(rng.integers(2, 6))
        w = 10 * int(rng.integers(2, 6))
        x = rng.uniform(0, 1, (1, 3, h, w))
        for s in (1, 2, 5):
            ok &= np.array_equal(pd_inv(pd(x, s), s), x)
            checked += 1
    elapsed = time.perf_counter() - t0
    report(3, ok and elapsed < 5.0, f"{checked} exact round trips in {elapsed:.2f}s")


def test_criterion_4_gradient_correctness():
    """Central finite differences agree with every analytic gradient to
    relative error < 1e-4: each layer type, then a full toy network."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    worst = 0.0
    checked = 0

    def fd(loss, arr, analytic, n, h=1e-6):
        nonlocal worst, checked
        flat = arr.ravel()
        for i in rng.choice(flat.size, size=min(n, flat.size), replace=False):
            old = flat[i]
            flat[i] = old + h
            fp = loss()
            flat[i] = old - h
            fm = loss()
            flat[i] = old
            num = (fp - fm) / (2 * h)
            ref = analytic.ravel()[i]
            worst = max(worst, abs(num - ref) / max(abs(num), abs(ref), 1e-8))
            checked += 1

    # conv layers (plain, dilated, masked) driven through a linear readout
    for dilation, mask in ((1, None), (2, None), (3, render_mask("plus", 3).multiplier())):
        x = rng.uniform(-1, 1, (2, 2, 6, 6))
        p = ConvParams.create(2, 3, 3, dilation=dilation, kernel_mask=mask, rng=rng)
        g = rng.uniform(-1, 1, (2, 3, 6, 6))
        loss = lambda: float(np.sum(g * conv2d(x, p)))
        gx, gw, gb = conv2d_backward(g, x, p)
        fd(loss, x, gx, 8)
        fd(loss, p.weight, gw, 8)
        fd(loss, p.bias, gb, 3)

    # relu via its gated gradient, away from the kink
    xr = rng.uniform(-1, 1, (1, 2, 5, 5))
    gr = rng.uniform(-1, 1, (1, 2, 5, 5))
    loss_r = lambda: float(np.sum(gr * np.maximum(xr, 0.0)))
    fd(loss_r, xr, gr * (xr > 0), 15)

    # l1 loss
    a = rng.uniform(-1, 1, (1, 2, 5, 5))
    b = rng.uniform(-1, 1, (1, 2, 5, 5))
    _, gl = l1_loss_and_grad(a, b)
    fd(lambda: l1_loss_and_grad(a, b)[0], a, gl, 15)

    # full toy network: all layer types composed, >= 100 components
    model = build_mmbsn(
        ArchitectureConfig(base_channels=4, masks=("slash", "backslash"),
                           cdcl_depth=1, trunk_depth=2, kernel_sizes=(3,),
                           dilations=(2,))
    )
    model.init_params(rng)
    for _, p in model.param_items():
        p.bias[...] = rng.uniform(0.02, 0.2, size=p.bias.shape)  # off the kinks
    xin = rng.uniform(0, 1, (1, 3, 10, 10))
    gout = rng.uniform(-1, 1, (1, 3, 10, 10))
    loss_m = lambda: float(np.sum(gout * model.forward(xin)))
    loss_m()
    gin, grads = model.backward(gout)
    model_checked = -checked
    for arr, ga in zip(model.param_arrays(), grads):
        fd(loss_m, arr, ga, 4)
    fd(loss_m, xin, gin, 20)
    model_checked += checked

    elapsed = time.perf_counter() - t0
    report(
        4,
        worst < 1e-4 and checked >= 200 and model_checked >= 100 and elapsed < 120,
        f"{checked} components ({model_checked} on the full network), "
        f"worst relative error {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_5_square_mask_beats_dot_at_stride_2():
    """Same toy network, pd_train=2, blob noise: the square mask must beat
    the center dot by at least 1 dB held-out PSNR after 500 steps."""
    t0 = time.perf_counter()
    _, train_noisy = blob_noise_set(8, seed0=0)
    test_clean, test_noisy = blob_noise_set(6, seed0=9000)

    scores = {}
    for tag in ("o", "square"):
        cfg = TrainingConfig(
            architecture=ArchitectureConfig(
                base_channels=16, masks=(tag,), kernel_sizes=(5,), dilations=(3,),
                cdcl_depth=1, trunk_depth=3,
            ),
            epochs=1, steps_per_epoch=500, batch=4, crop=48,
            pd_train=2, pd_test=2, lr=1e-3, seed=11,
        )
        ck, _ = train(cfg, train_noisy)
        scores[tag] = mean_psnr(ck.model, test_noisy, test_clean)
    gap = scores["square"] - scores["o"]
    elapsed = time.perf_counter() - t0
    report(
        5,
        gap >= 1.0 and elapsed < 1200,
        f"square {scores['square']:.2f} dB vs o {scores['o']:.2f} dB "
        f"(gap {gap:+.2f} dB, need >= 1.0) in {elapsed:.0f}s",
    )


@pytest.fixture(scope="module")
def diagonal_experiment():
    """Shared by criteria 6 and 7: toy multi-mask net vs center-dot baseline
    on diagonally streaked noise, reference asymmetric protocol
    (pd_train 5, pd_test 2), identical budgets, refined inference."""
    t0 = time.perf_counter()
    _, train_noisy = diagonal_noise_set(12, seed0=0)
    test_clean, test_noisy = diagonal_noise_set(6, seed0=9000)

    def run(arch, masks):
        cfg = TrainingConfig(
            architecture=ArchitectureConfig(
                base_channels=16, masks=masks, kernel_sizes=(3, 5), dilations=(2, 3),
                cdcl_depth=1, trunk_depth=2,
            ),
            arch=arch, epochs=2, steps_per_epoch=400, batch=4, crop=48,
            pd_train=5, pd_test=2, lr=1e-3, lr_decay_every=1, seed=11,
        )
        ck, _ = train(cfg, train_noisy)
        return mean_psnr(ck.model, test_noisy, test_clean, refine=True)

    results = {
        "noisy": float(np.mean([psnr(n, c) for n, c in zip(test_noisy, test_clean)])),
        "apbsn": run("apbsn", ("o",)),
        "mmbsn": run("mmbsn", ("slash", "backslash")),
        "elapsed": time.perf_counter() - t0,
    }
    return results


def test_criterion_6_multi_mask_beats_baseline(diagonal_experiment):
    r = diagonal_experiment
    gap = r["mmbsn"] - r["apbsn"]
    report(
        6,
        gap >= 0.5 and r["elapsed"] < 1800,
        f"mmbsn {r['mmbsn']:.2f} dB vs apbsn {r['apbsn']:.2f} dB "
        f"(gap {gap:+.2f} dB, need >= 0.5) in {r['elapsed']:.0f}s",
    )


def test_criterion_7_denoising_improves_noisy_input(diagonal_experiment):
    r = diagonal_experiment
    gain = r["mmbsn"] - r["noisy"]
    report(
        7,
        gain >= 2.0,
        f"mmbsn {r['mmbsn']:.2f} dB vs noisy input {r['noisy']:.2f} dB "
        f"(gain {gain:+.2f} dB, need >= 2.0)",
    )


def test_criterion_8_noise_analyzer_exactness():
    """Hand-built residual maps give exact areas, bucket proportions and
    large fractions.  (No dataset-bound proportion is asserted.)"""
    t0 = time.perf_counter()
    r = np.zeros((1, 1, 32, 32))
    r[0, 0, 2:5, 2:5] = 1.0  # 3x3 = 9 pixels
    r[0, 0, 12:18, 12:18] = 1.0  # 6x6 = 36 pixels
    stats = analyze_regions(r, threshold=0.5)
    ok = (
        stats.areas == [9, 36]
        and stats.large_fraction == 36 / 45
        and stats.proportions == (9 / 45, 0.0, 36 / 45, 0.0)
        and abs(sum(stats.proportions) - 1.0) < 1e-9
    )
    single = analyze_regions(np.pad(r, 0), threshold=1.5)  # nothing above 1.5
    ok &= single.areas == [] and single.large_fraction == 0.0
    elapsed = time.perf_counter() - t0
    report(
        8,
        ok,
        f"areas {stats.areas}, large_fraction {stats.large_fraction:.4f} "
        f"== 36/45, buckets exact, {elapsed:.2f}s",
    )


def test_criterion_9_deterministic_training(tmp_path):
    """Two full toy runs with equal seeds: byte-identical checkpoints and
    identical loss traces."""
    t0 = time.perf_counter()
    _, noisy = blob_noise_set(4, seed0=77, size=48)
    cfg = TrainingConfig(
        architecture=ArchitectureConfig(base_channels=8, masks=("slash", "backslash"),
                                        cdcl_depth=1, trunk_depth=1,
                                        kernel_sizes=(3,), dilations=(2,)),
        epochs=2, steps_per_epoch=10, batch=2, crop=32,
        pd_train=2, pd_test=2, lr=1e-3, seed=21,
    )
    ck1, losses1 = train(cfg, noisy)
    ck2, losses2 = train(cfg, noisy)
    p1, p2 = tmp_path / "run1.mmbsn", tmp_path / "run2.mmbsn"
    ck1.save(p1)
    ck2.save(p2)
    identical = losses1 == losses2 and p1.read_bytes() == p2.read_bytes()
    elapsed = time.perf_counter() - t0
    report(
        9,
        identical,
        f"{len(losses1)}-step traces equal and checkpoints byte-identical "
        f"({p1.stat().st_size} bytes), {elapsed:.0f}s",
    )
