"""Miniature end-to-end run: synthesize scenes, train briefly, fuse, evaluate.

This is a fast demonstration (about a minute); the acceptance-grade overfit
run lives in tests/test_acceptance.py.

Run: python3 demos/05_train_and_fuse.py
"""

import numpy as np

from bridgepan import (
    FusionModel,
    SampleConfig,
    TrainConfig,
    build_schedule,
    classical_pansharpen,
    reference_metrics,
    sample,
    train,
    upsample_bicubic,
)
from bridgepan.synth import synthetic_wald_dataset

dataset = synthetic_wald_dataset(count=4, bands=4, pan_size=64, ratio=4, seed=0)
model = FusionModel("micro", seed=0)
history = train(dataset, model, TrainConfig(steps=60, batch=4, seed=0))
print(f"trained 60 steps: loss_ref {history[0]['loss_ref']:.4f} -> "
      f"{history[-1]['loss_ref']:.4f}")

sched = build_schedule(1000)
pair = dataset[0]
fused = sample(pair.ms_reduced, pair.pan_reduced, model, SampleConfig(nfe=3), sched)
bicubic = upsample_bicubic(pair.ms_reduced, pair.ratio)

print("\nreduced-scale comparison on the first training scene:")
for name, raster in [("bicubic", bicubic), ("fused", fused)] + [
    (m, classical_pansharpen(pair.ms_reduced, pair.pan_reduced, pair.ratio, m))
    for m in ("sfim", "ihs", "gs", "brovey")
]:
    rep = reference_metrics(raster, pair.reference, pair.ratio)
    print(f"  {name:8s} PSNR {rep.psnr:6.2f} dB  SSIM {rep.ssim:.4f}  "
          f"ERGAS {rep.ergas:6.3f}  SAM {rep.sam:5.3f} deg")

print("\n(the fused line improves with longer training; see the acceptance suite)")
