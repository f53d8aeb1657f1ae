"""Per-segment latency table for both engines, as text and key=value records.

    python3 scripts/latency_breakdown.py --source pattern:blobs:640x480 --iterations 10
    python3 scripts/latency_breakdown.py --records bench.kv   # for external plotting
"""

import argparse
from pathlib import Path

from streamlabel.labeling import LabelerConfig
from streamlabel.pipeline import PipelineConfig, bench


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--source", default="pattern:blobs:640x480", help="image path or pattern:<spec>")
    ap.add_argument("--iterations", type=int, default=10)
    ap.add_argument("--engines", default="sw,sim")
    ap.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    ap.add_argument("--registry", help="host:port, tcp only")
    ap.add_argument("--records", type=Path, help="also write key=value records here")
    args = ap.parse_args()

    cfg = PipelineConfig(labeler=LabelerConfig(label_bits=32))
    records = []
    for engine in args.engines.split(","):
        stats = bench(args.source, engine, args.iterations, cfg, args.transport, args.registry)
        print(stats.format_table(), end="\n\n")
        records += stats.to_records()
    if args.records:
        args.records.write_text("\n".join(records) + "\n")
        print(f"wrote {len(records)} records to {args.records}")


if __name__ == "__main__":
    main()
