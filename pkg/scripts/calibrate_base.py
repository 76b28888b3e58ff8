"""Calibration run for the base policy: train at the acceptance scale and
report validation loss ratio, on-road rate, and throughput.

Usage: python scripts/calibrate_base.py [n_scenarios] [epochs] [dim]
"""

import sys
import time
from pathlib import Path

import numpy as np

from diffdrive.world import synth_scenarios, SynthConfig, WorldParams
from diffdrive.world.predicates import check_offroad
from diffdrive.diffusion import DenoiserModel, DenoiserConfig, cosine_schedule, sample_scene
from diffdrive.diffusion.train import TrainConfig, train_base
from diffdrive.nn.io import save_params
from diffdrive.rng import make_rng


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
    epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 20
    dim = int(sys.argv[3]) if len(sys.argv) > 3 else 64
    wp = WorldParams()
    sched = cosine_schedule(10)

    t0 = time.time()
    logs = synth_scenarios(SynthConfig(n_scenarios=n, future_len=10, params=wp), seed=1000)
    print(f"synth {n} scenarios: {time.time()-t0:.0f}s", flush=True)

    model = DenoiserModel(wp, DenoiserConfig(dim=dim, heads=2, enc_layers=2, dec_layers=2),
                          make_rng(2000, 0))
    n_val = max(1, int(0.1 * n))
    t0 = time.time()
    hist = train_base(model, sched, logs, TrainConfig(epochs=epochs), seed=2000)
    print(f"train {epochs} epochs: {(time.time()-t0)/60:.1f} min", flush=True)
    for h in hist:
        print(f"  epoch {h['epoch']}: train {h['train_loss']:.4f} val {h.get('val_loss'):.4f}")
    ratio = hist[-1]["val_loss"] / hist[0]["val_loss"]
    print(f"val ratio epoch{epochs}/epoch1: {ratio:.3f} (need < 0.5)")

    # on-road rate of single samples on the val split (same split as train_base)
    order = make_rng(2000, 100).permutation(len(logs))
    val_logs = [logs[i] for i in order[:n_val]]
    t0 = time.time()
    onroad = 0
    for i, log in enumerate(val_logs):
        scene, _ = log.training_example(wp)
        res = sample_scene(model, scene, sched, 1, [make_rng(3000, i)])[0]
        flags, _ = check_offroad(scene, res.states[0], wp)
        onroad += not flags.any()
    rate = onroad / len(val_logs)
    print(f"on-road rate on {len(val_logs)} held-out scenes: {rate:.3f} "
          f"({(time.time()-t0):.0f}s) (need >= 0.8)")
    out = Path("scripts/_calib")
    out.mkdir(exist_ok=True, parents=True)
    save_params(model.store, out / f"base_n{n}_e{epochs}_d{dim}.params")
    print("saved checkpoint")


if __name__ == "__main__":
    main()
