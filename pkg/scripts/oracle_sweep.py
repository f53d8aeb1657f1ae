"""Check streaming first pass + resolution against flood fill over a seeded corpus.

    python3 scripts/oracle_sweep.py --count 1000 --max-side 256
"""

import argparse
import math
import random
import time

from streamlabel.imaging import random_binary
from streamlabel.labeling import CONNECTIVITY, LabelerConfig, canonicalize, first_pass, flood_fill_oracle, resolve


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--max-side", type=int, default=256)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    modes = list(CONNECTIVITY)
    bad = 0
    pixels = 0
    t = time.perf_counter()
    for i in range(args.count):
        w, h = (max(1, int(math.exp(rng.uniform(0, math.log(args.max_side))))) for _ in range(2))
        img = random_binary(w, h, rng.uniform(0.1, 0.9), rng.randrange(2**32))
        mode = modes[i % len(modes)]
        fp = first_pass(img, LabelerConfig.from_mode(mode, label_bits=32))
        if canonicalize(resolve(fp)) != flood_fill_oracle(img, CONNECTIVITY[mode]):
            bad += 1
            print(f"mismatch: image {i} {w}x{h} {mode}")
        pixels += w * h
    dt = time.perf_counter() - t
    print(f"images={args.count} pixels={pixels} mismatches={bad} seconds={dt:.2f}")
    raise SystemExit(1 if bad else 0)


if __name__ == "__main__":
    main()
