"""Closed-form cycle counts next to the cycle-level model, plus a FIFO sweep.

    python3 scripts/cycle_model.py
    python3 scripts/cycle_model.py --sweep 1,2,4,16,4096 --size 320x240
"""

import argparse
import time

from streamlabel.hwsim import TimingModel, estimate_cycles, run_frame
from streamlabel.imaging import make_pattern
from streamlabel.labeling import LabelerConfig

RESOLUTIONS = [(4, 1), (1920, 1), (640, 480), (1280, 720), (1920, 1080)]


def closed_form(model):
    print(f"{'size':>10}  {'cycles':>10}  {'frame ms':>9}")
    for w, h in RESOLUTIONS:
        c = estimate_cycles(w, h, model)
        print(f"{w:>5}x{h:<4}  {c:>10}  {c * model.clock_period_ns / 1e6:>9.4f}")


def sweep(capacities, size, density, seed, model):
    w, h = size.split("x")
    img = make_pattern(f"random:{w}x{h}:{density}:{seed}")
    cfg = LabelerConfig(label_bits=32)
    print(f"\nrandom {size} density={density} seed={seed}")
    print(f"{'fifo':>6}  {'compute':>9}  {'transfer':>9}  {'stall':>8}  {'total':>9}  {'sim s':>6}")
    reference = None
    for cap in capacities:
        t = time.perf_counter()
        fp, r = run_frame(img, cfg, model, fifo_capacity=cap)
        dt = time.perf_counter() - t
        reference = reference or fp.labels
        same = "" if fp.labels == reference else "  LABELS DIFFER"
        print(f"{cap:>6}  {r.compute_cycles:>9}  {r.transfer_cycles:>9}  {r.stall_cycles:>8}  "
              f"{r.total_cycles:>9}  {dt:>6.2f}{same}")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sweep", default="1,2,4,16,4096", help="comma-separated FIFO capacities")
    ap.add_argument("--size", default="256x128")
    ap.add_argument("--density", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--dma-rate", default="1", help="words per clock, e.g. 1/2")
    args = ap.parse_args()
    model = TimingModel(dma_words_per_cycle=args.dma_rate)
    closed_form(model)
    sweep([int(c) for c in args.sweep.split(",")], args.size, args.density, args.seed, model)


if __name__ == "__main__":
    main()
