"""Grid probe for the overfit smoke configuration (throwaway tuning script)."""
import math
import numpy as np
from bridgepan.raster import Raster, degrade, make_wald_pair, upsample_bicubic
from bridgepan.pipeline import FusionModel, TrainConfig, train, sample, SampleConfig
from bridgepan.bridge import build_schedule
from bridgepan.synth import band_names_for
from bridgepan.metrics import reference_metrics
from bridgepan.tensor import Prng
import bridgepan.interact as I


def scene_v2(bands=4, pan_size=128, ratio=4, seed=0):
    rng = np.random.default_rng(seed)
    n = pan_size
    y, x = np.mgrid[0:n, 0:n] / n
    s = 0.5 + 0.1 * np.sin(2 * np.pi * (x + rng.uniform(0, 1)))
    s += 0.08 * np.cos(2 * np.pi * (2 * y + rng.uniform(0, 1)))
    s += 0.16 * (((x > 0.5) ^ (y > 0.5)).astype(float) - 0.5)
    s += 0.12 * (((x - 0.5) ** 2 + (y - 0.5) ** 2) < 0.05)
    s = np.clip(s, 0.05, 0.95)
    gains = np.linspace(0.85, 1.1, bands) * rng.uniform(0.97, 1.03, bands)
    stack = np.stack([np.clip(s * g, 0, 1) for g in gains]).astype(np.float32)
    pan = Raster(stack.mean(axis=0, keepdims=True), ["PAN"])
    ms = degrade(Raster(stack, band_names_for(bands)), ratio)
    return ms, pan


ds = [make_wald_pair(*scene_v2(seed=i), 4) for i in range(8)]
sched = build_schedule(1000)


def run(alpha, idi_gain, seed):
    I.DenoiserModel._SKIP_ALPHA = alpha
    model = FusionModel("micro", seed=seed)
    prng = Prng(4242)
    for name, p in model.named_parameters().items():
        if ".idi.out.w" in name:
            cout, cin, kh, kw = p.data.shape
            lim = idi_gain * math.sqrt(6.0 / ((cin + cout) * kh * kw))
            p.data = ((prng.uniform(p.data.shape) * 2 - 1) * lim).astype(np.float32)
    hist = train(ds, model, TrainConfig(steps=500, batch=8, seed=seed))
    first = hist[0]["loss_ref"]
    last = np.mean([h["loss_ref"] for h in hist[-10:]])
    g = []
    for pair in ds:
        fused = sample(pair.ms_reduced, pair.pan_reduced, model, SampleConfig(nfe=3), sched)
        bic = upsample_bicubic(pair.ms_reduced, 4)
        g.append(
            reference_metrics(fused, pair.reference, 4).psnr
            - reference_metrics(bic, pair.reference, 4).psnr
        )
    print(
        f"alpha={alpha} idi={idi_gain} seed={seed}: ratio={last/first:.4f} "
        f"psnr {np.mean(g):+.2f} (min {min(g):+.2f})",
        flush=True,
    )


if __name__ == "__main__":
    import sys
    alpha = float(sys.argv[1]); idi = float(sys.argv[2])
    for seed in [int(s) for s in sys.argv[3:]]:
        run(alpha, idi, seed)
