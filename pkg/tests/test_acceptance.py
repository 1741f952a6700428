"""Acceptance suite: one test per criterion, each at its stated tolerance.

Runs take roughly ten minutes on one core. The toy experiments use the
procedural scenes from ``rednet.synthetic``; see the README for the
protocol behind each number.
"""

import numpy as np
import pytest

from rednet import layers, synthetic
from rednet.ablation import bottleneck_pair, final_loss, run_all, variant_runs
from rednet.data import CorruptionSpec, corrupt_gaussian, make_dataset
from rednet.infer import DIHEDRAL, inverse_transform, restore_ensemble, transform
from rednet.layers import ConvSpec
from rednet.metrics import evaluate, psnr, ssim
from rednet.network import REDNetConfig, build, from_bytes, layer_specs, preset, to_bytes
from rednet.optim import TrainConfig, train_loop, write_trace
from rednet.tensor import dot

from oracles import kink_free_draw, numeric_grad, rel_err

criterion = pytest.mark.criterion
SEEDS = range(5)

# toy denoiser protocol shared by the training, gain and ensemble criteria
TOY_MODEL = REDNetConfig(3, feature_width=16, skip_style="mirrored")
TOY_TRAIN = TrainConfig(iterations=2000, batch_size=8, lr=1e-4, seed=0)
PATCH, PATCHES, SIGMA = 32, 1000, 30


def train_images():
    return synthetic.scenes(20, 96, 96, seed=1)


def held_out_images():
    return synthetic.scenes(5, 64, 64, seed=2)


@pytest.fixture(scope="module")
def toy_run():
    ds = make_dataset(train_images(), CorruptionSpec("gaussian", [SIGMA]), PATCH, PATCHES, np.random.default_rng(0))
    net, trace = train_loop(build(TOY_MODEL, seed=0), ds, TOY_TRAIN)
    return net, [loss for _, loss in trace]


# ------------------------------------------------------------------ gradients


def _layer_fd(fwd, bwd, x, w, b, spec, rng):
    g = rng.standard_normal(fwd(x, w, b, spec).shape)

    def objective():
        return float(np.sum(g * fwd(x, w, b, spec)))

    grads = bwd(x, w, spec, g)
    return max(
        rel_err(grads.grad_input, numeric_grad(objective, x)),
        rel_err(grads.grad_weight, numeric_grad(objective, w)),
        rel_err(grads.grad_bias, numeric_grad(objective, b)),
    )


def _net_fd(cfg, seed):
    net, x, rng = kink_free_draw(cfg, seed)
    g = rng.standard_normal(x.shape)

    def objective():
        return float(np.sum(g * net.forward(x)))

    grads = net.backward(x, g)
    return max(rel_err(gp, numeric_grad(objective, p)) for p, gp in zip(net.parameters(), grads))


@criterion("Gradient correctness")
def test_gradient_correctness(record_property):
    worst = {}
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        for stride, pad in ((1, 1), (2, 0), (3, 0)):
            spec = ConvSpec(2, 3, 3, stride, pad)
            x = rng.standard_normal((2, 2, 7, 7))
            w, b = rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3)
            e = _layer_fd(layers.conv2d_forward, layers.conv2d_backward, x, w, b, spec, rng)
            worst["conv"] = max(worst.get("conv", 0), e)
            x = rng.standard_normal((2, 2, 4, 4))
            w = rng.standard_normal((2, 3, 3, 3))
            e = _layer_fd(layers.deconv2d_forward, layers.deconv2d_backward, x, w, b, spec, rng)
            worst["deconv"] = max(worst.get("deconv", 0), e)

        # ReLU away from the kink, where the derivative exists
        z = rng.standard_normal((2, 3, 5, 5))
        z[np.abs(z) < 1e-3] = 0.5
        g = rng.standard_normal(z.shape)
        num = numeric_grad(lambda: float(np.sum(g * layers.relu_forward(z))), z)
        worst["relu"] = max(worst.get("relu", 0), rel_err(layers.relu_backward(z, g), num))

        a, c = rng.standard_normal((2, 3, 5, 5)), rng.standard_normal((2, 3, 5, 5))
        g = rng.standard_normal(a.shape)
        ga, gc = layers.skip_add_backward(g)
        obj = lambda: float(np.sum(g * layers.skip_add_forward(a, c)))  # noqa: E731
        worst["skip-add"] = max(worst.get("skip-add", 0), rel_err(ga, numeric_grad(obj, a)), rel_err(gc, numeric_grad(obj, c)))

        worst["network"] = max(worst.get("network", 0), _net_fd(REDNetConfig(2, feature_width=2), seed))
    record_property("detail", "max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert max(worst.values()) <= 1e-5, worst


# ------------------------------------------------------------------ adjointness


@criterion("Adjointness")
def test_adjointness(record_property):
    worst, cases = 0.0, 0
    rng = np.random.default_rng(0)
    for k in range(1, 6):
        for s in (1, 2, 3):
            for p in range(k):
                # non-square: output 6 x 5, input sized so the two ops match exactly
                spec_c, spec_d = ConvSpec(2, 3, k, s, p), ConvSpec(3, 2, k, s, p)
                hb, wb = spec_d.deconv_out_size(6), spec_d.deconv_out_size(5)
                assert (spec_c.conv_out_size(hb), spec_c.conv_out_size(wb)) == (6, 5)
                w = rng.standard_normal((3, 2, k, k))
                x = rng.standard_normal((2, 2, hb, wb))
                y = rng.standard_normal((2, 3, 6, 5))
                lhs = dot(layers.conv2d_forward(x, w, None, spec_c), y)
                rhs = dot(x, layers.deconv2d_forward(y, w, None, spec_d))
                worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
                cases += 1
    record_property("detail", f"{cases} (k, stride, pad) cases, max rel err {worst:.1e}")
    assert worst <= 1e-10


# ------------------------------------------------------------------ geometry


@criterion("Geometry")
def test_geometry(record_property):
    # stride-3 bottleneck
    cfg = bottleneck_pair(REDNetConfig(5, feature_width=2))[0][1]
    net = build(cfg)
    _, acts, _ = net._trace(np.zeros((1, 1, 243, 243), np.float32))
    sizes = [a.shape[2:] for a in acts]
    assert sizes[5] == (1, 1), sizes
    assert sizes[-1] == (243, 243)

    # default presets: size arithmetic over every (h, w) in 8..128 squared
    names = ("RED10", "RED20", "RED30")
    for name in names:
        specs = layer_specs(preset(name))
        conv, deconv = specs[: len(specs) // 2], specs[len(specs) // 2 :]
        for h in range(8, 129):
            size = h
            for s in conv:
                size = s.conv_out_size(size)
            for s in deconv:
                size = s.deconv_out_size(size)
            assert size == h, (name, h)
        # real forwards: every size on each axis with a thin twin, corners at full width
        thin = build(preset(name, feature_width=2))
        for h in range(8, 129):
            w = 136 - h
            assert thin.forward(np.zeros((1, 1, h, w), np.float32)).shape == (1, 1, h, w)
        full = build(preset(name))
        for h, w in ((8, 8), (8, 128), (128, 8)):
            assert full.forward(np.zeros((1, 1, h, w), np.float32)).shape == (1, 1, h, w)
    record_property("detail", f"bottleneck sizes {[s[0] for s in sizes]}; {', '.join(names)} preserve 8..128")


# ------------------------------------------------------------------ metrics


@criterion("Metric oracles")
def test_metric_oracles(record_property):
    zeros, ones = np.zeros((16, 16)), np.ones((16, 16))
    p0 = psnr(zeros, ones)
    p20 = psnr(zeros, np.full((16, 16), 0.1))
    s1 = ssim(synthetic.scene(32, 32, seed=0), synthetic.scene(32, 32, seed=0))
    sc = ssim(np.full((32, 32), 0.25), np.full((32, 32), 0.75))
    closed = (2 * 0.1875 + 1e-4) / (0.625 + 1e-4)
    record_property("detail", f"PSNR {p0:.6f} / {p20:.6f} dB, SSIM {s1:.6f} / {sc:.6f}")
    assert abs(p0 - 0.0) <= 1e-6
    assert abs(p20 - 20.0) <= 1e-6
    assert abs(s1 - 1.0) <= 1e-6
    assert abs(sc - closed) <= 1e-6
    assert round(closed, 4) == 0.6001


# ------------------------------------------------------------------ toy training


@criterion("Training sanity")
def test_training_sanity(toy_run, record_property):
    _, losses = toy_run
    first, last = np.mean(losses[:100]), np.mean(losses[-100:])
    record_property("detail", f"first-100 mean {first:.2f}, last-100 mean {last:.2f} ({last / first:.1%})")
    assert last <= 0.5 * first


@criterion("Denoising gain")
def test_denoising_gain(toy_run, record_property):
    net, _ = toy_run
    clean = held_out_images()
    report = evaluate(net, clean, CorruptionSpec("gaussian", [SIGMA]), seed=0)
    restored = report.summary()[SIGMA][0]
    # same noise draws as evaluate: generator (seed, image, level index)
    noisy = np.mean(
        [psnr(np.clip(corrupt_gaussian(c, SIGMA, np.random.default_rng([0, i, 0])), 0, 1), c) for i, c in enumerate(clean)]
    )
    record_property("detail", f"restored {restored:.2f} dB vs noisy {noisy:.2f} dB (+{restored - noisy:.2f})")
    assert restored - noisy >= 2.0


@criterion("Ensemble")
def test_ensemble(toy_run, record_property):
    net, _ = toy_run
    clean = held_out_images()
    spec = CorruptionSpec("gaussian", [SIGMA])
    single = evaluate(net, clean, spec, seed=0).summary()[SIGMA][0]
    ens = evaluate(net, clean, spec, seed=0, ensemble=True).summary()[SIGMA][0]

    # equivariance: ensemble(T x) == T ensemble(x), bit for bit, all 8 transforms
    x = np.clip(corrupt_gaussian(clean[0][:40, :37], SIGMA, np.random.default_rng(9)), 0, 1)
    base = restore_ensemble(net, x)
    for k, m in DIHEDRAL:
        assert np.array_equal(restore_ensemble(net, transform(x, k, m)), transform(base, k, m)), (k, m)
        assert np.array_equal(inverse_transform(transform(x, k, m), k, m), x)
    record_property("detail", f"ensemble {ens:.2f} dB vs single {single:.2f} dB; 8/8 transforms bit-exact")
    assert ens >= single


# ------------------------------------------------------------------ skip studies


def _wins(traces, a, b):
    return final_loss(traces[a], len(traces[a]) // 10) < final_loss(traces[b], len(traces[b]) // 10)


@criterion("Deep net: mirrored skips vs none")
def test_depth_skip_vs_noskip(record_property):
    ds = make_dataset(train_images(), CorruptionSpec("gaussian", [SIGMA]), 24, 500, np.random.default_rng(0))
    base = REDNetConfig(10, feature_width=8)
    runs = [r for r in variant_runs("depth", base) if r[0] in ("skip-20", "noskip-20")]
    outcome = []
    for seed in range(3):
        cfg = TrainConfig(iterations=1000, batch_size=8, lr=1e-4, seed=seed, init="xavier")
        traces = run_all(runs, ds, cfg)
        outcome.append(
            (_wins(traces, "skip-20", "noskip-20"), final_loss(traces["skip-20"], 100), final_loss(traces["noskip-20"], 100))
        )
    wins = sum(w for w, _, _ in outcome)
    record_property("detail", f"skip wins {wins}/3; final losses " + ", ".join(f"{a:.2f} vs {b:.2f}" for _, a, b in outcome))
    assert wins >= 2


@criterion("Stride-3 bottleneck: skips vs none")
def test_bottleneck_skip_vs_noskip(record_property):
    imgs = synthetic.scenes(8, 256, 256, seed=3)
    ds = make_dataset(imgs, CorruptionSpec("gaussian", [SIGMA]), 243, 100, np.random.default_rng(0))
    runs = bottleneck_pair(REDNetConfig(5, feature_width=16))
    outcome = []
    for seed in range(3):
        traces = run_all(runs, ds, TrainConfig(iterations=300, batch_size=4, lr=1e-4, seed=seed))
        outcome.append(
            (
                _wins(traces, "bottleneck-skip", "bottleneck-noskip"),
                final_loss(traces["bottleneck-skip"], 30),
                final_loss(traces["bottleneck-noskip"], 30),
            )
        )
    wins = sum(w for w, _, _ in outcome)
    record_property("detail", f"skip wins {wins}/3; final losses " + ", ".join(f"{a:.0f} vs {b:.0f}" for _, a, b in outcome))
    assert wins >= 2


# ------------------------------------------------------------------ multi-level


@criterion("Single-model multi-level")
def test_multi_level(record_property):
    imgs, clean = train_images(), held_out_images()
    scores = {}
    for label, levels in (("mixed", [10, 30, 50]), ("sigma10", [10])):
        ds = make_dataset(imgs, CorruptionSpec("gaussian", levels), PATCH, PATCHES, np.random.default_rng(0))
        net, _ = train_loop(build(TOY_MODEL, seed=0), ds, TrainConfig(iterations=1000, batch_size=8, lr=1e-4, seed=0))
        scores[label] = evaluate(net, clean, CorruptionSpec("gaussian", [50]), seed=0).summary()[50][0]
    record_property("detail", f"at sigma 50: mixed {scores['mixed']:.2f} dB vs sigma-10-only {scores['sigma10']:.2f} dB")
    assert scores["mixed"] > scores["sigma10"]


# ------------------------------------------------------------------ determinism


@criterion("Determinism & persistence")
def test_determinism_and_persistence(tmp_path, record_property):
    ds = make_dataset(synthetic.scenes(3, 40, 40, seed=4), CorruptionSpec("gaussian", [25]), 16, 40, np.random.default_rng(1))
    cfg = TrainConfig(iterations=20, batch_size=4, lr=1e-3, seed=5)
    blobs, csvs, reports = [], [], []
    for run in range(2):
        net, trace = train_loop(build(REDNetConfig(2, feature_width=4), seed=5), ds, cfg)
        blobs.append(to_bytes(net))
        write_trace(trace, tmp_path / f"loss{run}.csv")
        csvs.append((tmp_path / f"loss{run}.csv").read_bytes())
        reports.append(evaluate(net, synthetic.scenes(2, 24, 24, seed=6), CorruptionSpec("gaussian", [10, 50]), seed=3).to_csv())
    assert blobs[0] == blobs[1]
    assert csvs[0] == csvs[1]
    assert reports[0] == reports[1]

    x = np.random.default_rng(2).random((2, 1, 19, 23)).astype(np.float32)
    restored = from_bytes(blobs[0])
    assert to_bytes(restored) == blobs[0]
    assert np.array_equal(net.forward(x), restored.forward(x))
    record_property("detail", f"checkpoint {len(blobs[0])} B identical; CSVs identical; round-trip forward bit-exact")
