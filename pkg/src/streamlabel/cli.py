"""``streamlabel`` command line.

Exit codes: 0 ok, 1 usage, 2 I/O or transport, 3 data or label overflow.
"""

from __future__ import annotations

import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path

from . import hwsim
from .imaging import ImageFormatError, binarize, make_pattern, read_image, render_labels
from .labeling import LabelerConfig, LabelOverflowError, first_pass, resolve
from .msgbus.registry import REGISTRY_ENV, RegistryServer, parse_endpoint, registry_address
from .pipeline import PipelineConfig, PipelineError, bench, run_pipeline

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DATA = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _number(text: str) -> int | float:
    v = float(text)
    return int(v) if v.is_integer() else v


def _labeler_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="PGM (P5) or BMP file, or pattern:<kind>:<W>x<H>[:...]")
    p.add_argument("--threshold", type=int, default=128, help="binarization threshold, 0..255 (default 128)")
    p.add_argument("--connectivity", choices=("paper3", "conn4", "conn8"), default="paper3",
                   help="reference neighbors: paper3 = left, up, up-right (default)")
    p.add_argument("--label-bits", type=int, choices=(8, 16, 32), default=8, help="label register width (default 8)")
    p.add_argument("--overflow", choices=("error", "saturate"), default="error",
                   help="what to do when labels run out (default error)")
    p.add_argument("--out", type=Path, help="write resolved labels as a PPM (P6) image")


def _sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fifo-capacity", type=int, default=hwsim.DEFAULT_FIFO_CAPACITY,
                   help="words per FIFO (default 4096)")
    p.add_argument("--line-capacity", type=int, default=hwsim.DEFAULT_LINE_CAPACITY,
                   help="line buffer words (default 1920)")
    p.add_argument("--clock-ns", type=_number, default=10, help="clock period in ns (default 10 = 100 MHz)")
    p.add_argument("--dma-rate", type=Fraction, default=Fraction(1),
                   help="host<->FIFO words per clock, e.g. 1/2 (default 1)")


def _transport_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--engine", choices=("sim", "sw"), default="sim", help="labeling engine (default sim)")
    p.add_argument("--tcp", action="store_true", help="use the TCP transport instead of in-process")
    p.add_argument("--registry", help=f"registry host:port (default ${REGISTRY_ENV} or 127.0.0.1:11411)")
    p.add_argument("--spawn-registry", action="store_true", help="with --tcp, serve a registry in-process")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="streamlabel", description="Streaming image labeling component and simulator.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("label", help="two-pass label an image in software")
    _labeler_flags(p)

    p = sub.add_parser("simulate", help="run the cycle-level hardware model on one frame")
    _labeler_flags(p)
    _sim_flags(p)

    p = sub.add_parser("pipeline", help="run one frame through the node graph")
    _labeler_flags(p)
    _sim_flags(p)
    _transport_flags(p)
    p.add_argument("--raw", action="store_true", help="also print every resolved label, row by row")

    p = sub.add_parser("bench", help="repeat the pipeline and report latency segments")
    _labeler_flags(p)
    _sim_flags(p)
    _transport_flags(p)
    p.add_argument("--iterations", type=int, default=10, help="runs to aggregate (default 10)")
    p.add_argument("--format", choices=("text", "kv"), default="text", help="table or key=value records")

    p = sub.add_parser("registry", help="serve the topic registry until interrupted")
    p.add_argument("--host", default=None, help="bind address (default from registry endpoint)")
    p.add_argument("--port", type=int, default=None, help="port (default 11411)")
    return parser


def _config(args) -> LabelerConfig:
    return LabelerConfig.from_mode(args.connectivity, label_bits=args.label_bits,
                                   overflow_policy=args.overflow)


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        labeler=_config(args),
        timing=hwsim.TimingModel(clock_period_ns=args.clock_ns, dma_words_per_cycle=args.dma_rate),
        fifo_capacity=args.fifo_capacity,
        line_capacity=args.line_capacity,
        threshold=args.threshold,
    )


def _validate(args) -> None:
    if hasattr(args, "threshold") and not 0 <= args.threshold <= 255:
        raise UsageError("--threshold must be within 0..255")
    for flag in ("fifo_capacity", "line_capacity", "iterations"):
        if getattr(args, flag, 1) < 1:
            raise UsageError(f"--{flag.replace('_', '-')} must be >= 1")
    if getattr(args, "dma_rate", 1) <= 0 or getattr(args, "clock_ns", 1) <= 0:
        raise UsageError("--dma-rate and --clock-ns must be positive")
    if getattr(args, "spawn_registry", False) and not args.tcp:
        raise UsageError("--spawn-registry requires --tcp")


def _load(args):
    if args.input.startswith("pattern:"):
        return make_pattern(args.input[len("pattern:"):])
    path = Path(args.input)
    try:
        gray = read_image(path)
    except FileNotFoundError:
        raise FileNotFoundError(f"no such file: {path}") from None
    except ImageFormatError as exc:
        raise ImageFormatError(f"{path}: {exc}") from None
    return binarize(gray, args.threshold)


def _write(path: Path | None, data: bytes) -> None:
    if path is not None:
        path.write_bytes(data)


def cmd_label(args) -> int:
    img = _load(args)
    labels = resolve(first_pass(img, _config(args)))
    _write(args.out, render_labels(labels))
    print(f"components: {labels.component_count()}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    img = _load(args)
    cfg = _pipeline_config(args)
    fp, report = hwsim.run_frame(img, cfg.labeler, cfg.timing, cfg.fifo_capacity, cfg.line_capacity)
    labels = resolve(fp)
    _write(args.out, render_labels(labels))
    print(report.format_text())
    print(f"components: {labels.component_count()}")
    print(report.to_record())
    return EXIT_OK


def _registry_for(args):
    if not args.tcp:
        return None, None
    endpoint = args.registry
    server = None
    if args.spawn_registry:
        host, port = parse_endpoint(endpoint) if endpoint else ("127.0.0.1", 0)
        server = RegistryServer(host, port).start()
        endpoint = server.endpoint
    return (endpoint or "%s:%d" % registry_address()), server


def cmd_pipeline(args) -> int:
    endpoint, server = _registry_for(args)
    try:
        result = run_pipeline(_load(args), args.engine, _pipeline_config(args),
                              "tcp" if args.tcp else "inproc", endpoint)
    finally:
        if server:
            server.stop()
    _write(args.out, render_labels(result.labels))
    print(result.summary.format())
    if args.raw:
        for row in result.labels.rows():
            print(" ".join(map(str, row)))
    if result.sim_report is not None:
        print(result.sim_report.to_record())
    print(f"frame_id={result.frame_id} width={result.output.width} height={result.output.height} "
          f"{result.breakdown.to_record()}")
    return EXIT_OK


def cmd_bench(args) -> int:
    endpoint, server = _registry_for(args)
    try:
        stats = bench(_load(args), args.engine, args.iterations, _pipeline_config(args),
                      "tcp" if args.tcp else "inproc", endpoint)
    finally:
        if server:
            server.stop()
    if args.format == "kv":
        print("\n".join(stats.to_records()))
    else:
        print(stats.format_table())
    return EXIT_OK


def cmd_registry(args) -> int:
    host, port = registry_address()
    server = RegistryServer(args.host or host, port if args.port is None else args.port)
    print(f"registry listening on {server.endpoint}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


COMMANDS = {
    "label": cmd_label,
    "simulate": cmd_simulate,
    "pipeline": cmd_pipeline,
    "bench": cmd_bench,
    "registry": cmd_registry,
}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, PipelineError) and exc.__cause__ is not None:
        return _exit_code(exc.__cause__)
    if isinstance(exc, (LabelOverflowError, ImageFormatError)):
        return EXIT_DATA
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, PipelineError):
        text = str(exc)
        if "label capacity exceeded" in text:
            return EXIT_DATA
        return EXIT_IO if ("unreachable" in text or "timed out" in text) else EXIT_DATA
    return EXIT_DATA


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _validate(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"streamlabel: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"streamlabel: error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
