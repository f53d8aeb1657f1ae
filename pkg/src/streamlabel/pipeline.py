"""The labeling component as a node graph.

    input_image --data_input--> write2fpga => fpga_sim => read4fpga --data_output--> display_result

``write2fpga``, the labeling engine and ``read4fpga`` form the component:
a subscribe interface, the accelerated part, and a publish interface. The
engine is either the cycle-level hardware model or the plain software first
pass; both publish the same provisional labels. ``display_result`` runs
the second labeling step on what it receives.

Every frame is stamped at six points on a monotonic clock, which split the
end-to-end latency into five contiguous segments:

    seg1_pub_sub_in   publish at input_image -> dequeued at write2fpga
    seg2_pre_label    dequeued -> word stream handed to the device FIFO
    seg3_label        engine run
    seg4_post_label   label words picked up -> publish call at read4fpga
    seg5_pub_sub_out  publish -> dequeued at display_result

Message encoding and decoding sit inside seg1 and seg5.
"""

from __future__ import annotations

import logging
import queue
import statistics
import threading
import time
from array import array
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .hwsim import (
    DEFAULT_FIFO_CAPACITY,
    DEFAULT_LINE_CAPACITY,
    DEFAULT_TIMING,
    SimReport,
    TimingModel,
    run_words,
)
from .imaging import BinaryImage, GrayImage, LabelImage, binarize, make_pattern, read_image
from .labeling import DEFAULT_CONFIG, LabelerConfig, first_pass, resolve_image
from .msgbus import CodecError, FrameMessage, LocalBus, Node, TcpBus

log = logging.getLogger(__name__)

clock = time.perf_counter  # monotonic

DATA_INPUT = "data_input"
DATA_OUTPUT = "data_output"

SIMULATED_HW = "simulated_hw"
SOFTWARE_LABELER = "software_labeler"
_ENGINE_ALIASES = {"sim": SIMULATED_HW, "sw": SOFTWARE_LABELER,
                   SIMULATED_HW: SIMULATED_HW, SOFTWARE_LABELER: SOFTWARE_LABELER}

SEGMENTS = ("seg1_pub_sub_in", "seg2_pre_label", "seg3_label", "seg4_post_label", "seg5_pub_sub_out")


def engine_name(engine: str) -> str:
    try:
        return _ENGINE_ALIASES[engine]
    except KeyError:
        raise ValueError(f"unknown engine {engine!r}; choose sim or sw") from None


class PipelineError(RuntimeError):
    def __init__(self, node: str, message: str):
        super().__init__(f"{node}: {message}")
        self.node = node


@dataclass(frozen=True)
class PipelineConfig:
    labeler: LabelerConfig = DEFAULT_CONFIG
    timing: TimingModel = DEFAULT_TIMING
    fifo_capacity: int = DEFAULT_FIFO_CAPACITY
    line_capacity: int = DEFAULT_LINE_CAPACITY
    threshold: int = 128
    queue_capacity: int = 10


@dataclass(frozen=True)
class LatencyBreakdown:
    seg1_pub_sub_in: float
    seg2_pre_label: float
    seg3_label: float
    seg4_post_label: float
    seg5_pub_sub_out: float
    total: float

    @classmethod
    def from_stamps(cls, t: list[float]) -> "LatencyBreakdown":
        segs = [t[i + 1] - t[i] for i in range(5)]
        return cls(*segs, total=t[5] - t[0])

    def segments(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in SEGMENTS}

    @property
    def segment_sum(self) -> float:
        return sum(self.segments().values())

    def to_record(self) -> str:
        items = [f"{k}_ms={v * 1e3:.3f}" for k, v in self.segments().items()]
        items.append(f"total_ms={self.total * 1e3:.3f}")
        return " ".join(items)


@dataclass
class DisplaySummary:
    components: int
    histogram: dict[int, int]

    def format(self, top: int = 10) -> str:
        lines = [f"components: {self.components}"]
        biggest = sorted(self.histogram.items(), key=lambda kv: (-kv[1], kv[0]))[:top]
        for label, count in biggest:
            lines.append(f"  label {label}: {count} px")
        return "\n".join(lines)


@dataclass
class PipelineResult:
    frame_id: int
    output: FrameMessage
    provisional: LabelImage
    labels: LabelImage
    breakdown: LatencyBreakdown
    summary: DisplaySummary
    sim_report: SimReport | None = None


def load_source(source, threshold: int = 128) -> BinaryImage:
    """Accept a BinaryImage, GrayImage, ``pattern:<spec>`` string or a file path."""
    if isinstance(source, BinaryImage):
        return source
    if isinstance(source, GrayImage):
        return binarize(source, threshold)
    if isinstance(source, str) and source.startswith("pattern:"):
        return make_pattern(source[len("pattern:"):])
    return binarize(read_image(Path(source)), threshold)


@dataclass
class _Frame:
    stamps: list = field(default_factory=lambda: [None] * 6)
    done: threading.Event = field(default_factory=threading.Event)
    result: PipelineResult | None = None
    error: PipelineError | None = None
    sim_report: SimReport | None = None


class LabelingPipeline:
    """Runs the node graph on background threads until :meth:`close`."""

    def __init__(self, engine: str = SIMULATED_HW, config: PipelineConfig = PipelineConfig(), bus=None):
        self.engine = engine_name(engine)
        self.config = config
        self.bus = bus if bus is not None else LocalBus()
        self.decode_errors = 0
        self._frames: dict[int, _Frame] = {}
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._to_fpga: queue.Queue = queue.Queue()
        self._from_fpga: queue.Queue = queue.Queue()

        qcap = config.queue_capacity
        # publishers first, so TCP subscribers find them on their first lookup
        self.input_pub = Node("input_image", self.bus).advertise(DATA_INPUT)
        self.output_pub = Node("read4fpga", self.bus).advertise(DATA_OUTPUT)
        self._in_sub = Node("write2fpga", self.bus).subscribe(DATA_INPUT, qcap)
        self._out_sub = Node("display_result", self.bus).subscribe(DATA_OUTPUT, qcap)
        if not (self.input_pub.wait_for_subscribers(1) and self.output_pub.wait_for_subscribers(1)):
            self.bus.close()
            raise PipelineError("pipeline", "subscribers did not attach to publishers")

        self._threads = [
            threading.Thread(target=fn, name=name, daemon=True)
            for name, fn in (
                ("write2fpga", self._write2fpga),
                ("fpga", self._engine),
                ("read4fpga", self._read4fpga),
                ("display_result", self._display_result),
            )
        ]
        for t in self._threads:
            t.start()

    # -- nodes ---------------------------------------------------------------

    def _frame(self, frame_id: int) -> _Frame | None:
        with self._lock:
            return self._frames.get(frame_id)

    def _fail(self, frame_id: int, node: str, exc: Exception) -> None:
        log.error("%s failed on frame %d: %s", node, frame_id, exc)
        fr = self._frame(frame_id)
        if fr is not None:
            fr.error = PipelineError(node, str(exc))
            fr.done.set()

    def _write2fpga(self):
        while not self._stop.is_set():
            try:
                msg = self._in_sub.take(timeout=0.05)
            except CodecError as exc:
                self.decode_errors += 1
                log.error("write2fpga: dropping malformed message: %s", exc)
                continue
            if msg is None:
                continue
            t1 = clock()
            fr = self._frame(msg.frame_id)
            if fr is None:
                log.warning("write2fpga: unknown frame %d", msg.frame_id)
                continue
            fr.stamps[1] = t1
            words = array("i", msg.pixels)
            self._to_fpga.put((msg.frame_id, msg.width, msg.height, words))
            fr.stamps[2] = clock()

    def _engine(self):
        cfg = self.config
        node = "fpga_sim" if self.engine == SIMULATED_HW else "software_labeler"
        while not self._stop.is_set():
            try:
                item = self._to_fpga.get(timeout=0.05)
            except queue.Empty:
                continue
            frame_id, w, h, words = item
            fr = self._frame(frame_id)
            try:
                if self.engine == SIMULATED_HW:
                    fp, report = run_words(w, h, words, cfg.labeler, cfg.timing,
                                           cfg.fifo_capacity, cfg.line_capacity)
                    fr.sim_report = report
                else:
                    img = BinaryImage(w, h, bytes(255 if v else 0 for v in words))
                    fp = first_pass(img, cfg.labeler)
            except Exception as exc:
                self._fail(frame_id, node, exc)
                continue
            fr.stamps[3] = clock()
            self._from_fpga.put((frame_id, w, h, fp.labels.labels))

    def _read4fpga(self):
        while not self._stop.is_set():
            try:
                frame_id, w, h, labels = self._from_fpga.get(timeout=0.05)
            except queue.Empty:
                continue
            fr = self._frame(frame_id)
            try:
                out = FrameMessage(frame_id, w, h, labels)
                fr.stamps[4] = clock()
                self.output_pub.publish(out)
            except Exception as exc:
                self._fail(frame_id, "read4fpga", exc)

    def _display_result(self):
        ref_set = self.config.labeler.ref_set
        while not self._stop.is_set():
            try:
                msg = self._out_sub.take(timeout=0.05)
            except CodecError as exc:
                log.error("display_result: dropping malformed message: %s", exc)
                continue
            if msg is None:
                continue
            t5 = clock()
            fr = self._frame(msg.frame_id)
            if fr is None:
                continue
            fr.stamps[5] = t5
            try:
                provisional = LabelImage(msg.width, msg.height, msg.pixels)
                labels = resolve_image(provisional, ref_set)
            except Exception as exc:
                self._fail(msg.frame_id, "display_result", exc)
                continue
            hist = Counter(v for v in labels.labels if v)
            fr.result = PipelineResult(
                frame_id=msg.frame_id,
                output=msg,
                provisional=provisional,
                labels=labels,
                breakdown=LatencyBreakdown.from_stamps(fr.stamps),
                summary=DisplaySummary(len(hist), dict(sorted(hist.items()))),
                sim_report=fr.sim_report,
            )
            fr.done.set()

    # -- driver --------------------------------------------------------------

    def submit(self, img: BinaryImage, frame_id: int) -> None:
        """Act as input_image: publish one frame on data_input."""
        msg = FrameMessage(frame_id, img.width, img.height, tuple(img.pixels))
        with self._lock:
            if frame_id in self._frames:
                raise ValueError(f"frame {frame_id} already submitted")
            fr = self._frames[frame_id] = _Frame()
        fr.stamps[0] = clock()
        self.input_pub.publish(msg)

    def wait(self, frame_id: int, timeout: float | None = None) -> PipelineResult:
        fr = self._frame(frame_id)
        if fr is None:
            raise KeyError(frame_id)
        if not fr.done.wait(timeout):
            raise PipelineError("pipeline", f"frame {frame_id} timed out")
        with self._lock:
            del self._frames[frame_id]
        if fr.error is not None:
            raise fr.error
        return fr.result

    def process(self, img: BinaryImage, frame_id: int = 0, timeout: float | None = None) -> PipelineResult:
        self.submit(img, frame_id)
        return self.wait(frame_id, timeout)

    def close(self) -> None:
        self._stop.set()
        for t in self._threads:
            t.join(timeout=2)
        self._in_sub.close()
        self._out_sub.close()
        self.input_pub.close()
        self.output_pub.close()
        self.bus.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_bus(transport: str = "inproc", registry=None):
    if transport == "inproc":
        return LocalBus()
    if transport == "tcp":
        return TcpBus(registry)
    raise ValueError(f"unknown transport {transport!r}")


def run_pipeline(
    source,
    engine: str = SIMULATED_HW,
    config: PipelineConfig = PipelineConfig(),
    transport: str = "inproc",
    registry=None,
    frame_id: int = 0,
    timeout: float | None = None,
) -> PipelineResult:
    try:
        img = load_source(source, config.threshold)
    except (OSError, ValueError) as exc:
        raise PipelineError("input_image", str(exc)) from exc
    with LabelingPipeline(engine, config, make_bus(transport, registry)) as pipe:
        return pipe.process(img, frame_id, timeout)


# -- benchmarking ------------------------------------------------------------

@dataclass
class SegmentStats:
    mean: float
    min: float
    max: float


@dataclass
class BenchStats:
    engine: str
    iterations: int
    runs: list[LatencyBreakdown]
    segments: dict[str, SegmentStats]
    total: SegmentStats

    @classmethod
    def from_runs(cls, engine: str, runs: list[LatencyBreakdown]) -> "BenchStats":
        def agg(values):
            return SegmentStats(statistics.fmean(values), min(values), max(values))

        segs = {name: agg([getattr(r, name) for r in runs]) for name in SEGMENTS}
        return cls(engine, len(runs), runs, segs, agg([r.total for r in runs]))

    def format_table(self) -> str:
        """Aligned per-segment table with a stacked (cumulative) mean column."""
        header = ("segment", "mean ms", "min ms", "max ms", "share", "stacked ms")
        rows = []
        stacked = 0.0
        total_mean = self.total.mean or 1.0
        for name in SEGMENTS:
            s = self.segments[name]
            stacked += s.mean
            rows.append((name, f"{s.mean * 1e3:.3f}", f"{s.min * 1e3:.3f}", f"{s.max * 1e3:.3f}",
                         f"{100 * s.mean / total_mean:.1f}%", f"{stacked * 1e3:.3f}"))
        t = self.total
        rows.append(("total", f"{t.mean * 1e3:.3f}", f"{t.min * 1e3:.3f}", f"{t.max * 1e3:.3f}",
                     "100.0%", f"{stacked * 1e3:.3f}"))
        widths = [max(len(r[i]) for r in rows + [header]) for i in range(len(header))]
        fmt = lambda r: "  ".join(  # noqa: E731
            c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))
        )
        title = f"engine={self.engine} iterations={self.iterations}"
        return "\n".join([title, fmt(header), *(fmt(r) for r in rows)])

    def to_records(self) -> list[str]:
        out = []
        for name in (*SEGMENTS, "total"):
            s = self.total if name == "total" else self.segments[name]
            out.append(f"engine={self.engine} segment={name} iterations={self.iterations} "
                       f"mean_ms={s.mean * 1e3:.6f} min_ms={s.min * 1e3:.6f} max_ms={s.max * 1e3:.6f}")
        for i, r in enumerate(self.runs, 1):
            out.append(f"engine={self.engine} run={i} {r.to_record()}")
        return out


def bench(
    source,
    engine: str = SIMULATED_HW,
    iterations: int = 10,
    config: PipelineConfig = PipelineConfig(),
    transport: str = "inproc",
    registry=None,
) -> BenchStats:
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    img = load_source(source, config.threshold)
    runs = [
        run_pipeline(img, engine, config, transport, registry, frame_id=i).breakdown
        for i in range(iterations)
    ]
    return BenchStats.from_runs(engine_name(engine), runs)
