"""Cycle-level behavioral model of the labeling datapath.

Host -> input FIFO -> memory_img -> label generator -> output FIFO -> host.

Each line is first copied word by word from the input FIFO into
``memory_img``; the label generator then walks it in groups of
``pixels_per_group`` pixels, spending ``cycles_per_group`` clocks on each
group and emitting one label per pixel slot. Labels of the previous line
come from one of two ping-pong buffers while the current line is written to
the other; same-line references come from a small output register file.

FIFOs are registered: within a cycle both sides see the occupancy latched
at the start of the cycle, so a 1-entry FIFO sustains one word every two
cycles.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Sequence

from .imaging import BinaryImage, LabelImage
from .labeling import (
    DEFAULT_CONFIG,
    EquivalenceSet,
    FirstPassResult,
    LabelerConfig,
    LabelGeneratorState,
    label_pixel,
)

DEFAULT_LINE_CAPACITY = 1920
DEFAULT_FIFO_CAPACITY = 4096

LOAD, LABEL, DRAIN, DONE = "load", "label", "drain", "done"


class LineBufferOverflow(ValueError):
    pass


@dataclass(frozen=True)
class TimingModel:
    pixels_per_group: int = 4
    cycles_per_group: int = 5
    clock_period_ns: int | float = 10
    # host<->FIFO throughput; not calibrated against any real bus
    dma_words_per_cycle: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "dma_words_per_cycle", Fraction(self.dma_words_per_cycle))
        if self.pixels_per_group < 1 or self.cycles_per_group < 1:
            raise ValueError("group sizes must be positive")
        if self.cycles_per_group < self.pixels_per_group:
            # one output label per clock
            raise ValueError("cycles_per_group must be >= pixels_per_group")
        if self.clock_period_ns <= 0 or self.dma_words_per_cycle <= 0:
            raise ValueError("clock period and DMA rate must be positive")


DEFAULT_TIMING = TimingModel()


def estimate_cycles(width: int, height: int, model: TimingModel = DEFAULT_TIMING) -> int:
    """Labeling clocks for a frame: whole groups per line, times lines."""
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    return math.ceil(width / model.pixels_per_group) * model.cycles_per_group * height


def _ms(ns) -> str:
    d = Decimal(str(ns)) / Decimal(1_000_000)
    s = format(d, "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return s


class Fifo:
    """Bounded word queue with transfer counters."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("FIFO capacity must be >= 1")
        self.capacity = capacity
        self.q: deque[int] = deque()
        self.words_in = 0
        self.words_out = 0
        self.stalls = 0

    def __len__(self):
        return len(self.q)

    def push(self, word: int) -> None:
        if len(self.q) >= self.capacity:
            raise OverflowError("push to full FIFO")
        self.q.append(word)
        self.words_in += 1

    def pop(self) -> int:
        self.words_out += 1
        return self.q.popleft()

    def conserved(self) -> bool:
        return self.words_in == self.words_out + len(self.q)


@dataclass(frozen=True)
class SimReport:
    width: int
    height: int
    compute_cycles: int
    transfer_cycles: int
    stall_cycles: int
    total_cycles: int
    clock_period_ns: int | float
    compute_cycles_per_line: int
    line_cycles: tuple[int, ...] = field(repr=False)
    fifo_capacity: int
    in_words: int
    out_words: int
    in_fifo_stalls: int
    out_fifo_stalls: int

    @property
    def frame_time_ns(self):
        """Time spent labeling (FIFO transfer excluded)."""
        return self.compute_cycles * self.clock_period_ns

    @property
    def total_time_ns(self):
        return self.total_cycles * self.clock_period_ns

    def to_record(self) -> str:
        pairs = [
            ("compute_cycles", self.compute_cycles),
            ("frame_time_ms", _ms(self.frame_time_ns)),
            ("transfer_cycles", self.transfer_cycles),
            ("stall_cycles", self.stall_cycles),
            ("total_cycles", self.total_cycles),
            ("total_time_ms", _ms(self.total_time_ns)),
            ("cycles_per_line", self.compute_cycles_per_line),
            ("width", self.width),
            ("height", self.height),
            ("fifo_capacity", self.fifo_capacity),
            ("in_words", self.in_words),
            ("out_words", self.out_words),
            ("in_fifo_stalls", self.in_fifo_stalls),
            ("out_fifo_stalls", self.out_fifo_stalls),
        ]
        return " ".join(f"{k}={v}" for k, v in pairs)

    def format_text(self) -> str:
        rows = [
            ("frame", f"{self.width}x{self.height}"),
            ("labeling cycles / line", f"{self.compute_cycles_per_line:,}"),
            ("labeling cycles", f"{self.compute_cycles:,}"),
            ("transfer cycles", f"{self.transfer_cycles:,}"),
            ("stall cycles", f"{self.stall_cycles:,}"),
            ("total cycles", f"{self.total_cycles:,}"),
            ("labeling time", f"{_ms(self.frame_time_ns)} ms"),
            ("total time", f"{_ms(self.total_time_ns)} ms"),
            ("clock period", f"{self.clock_period_ns} ns"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


class FrameSim:
    """Clock-by-clock simulation of one frame. Advance with :meth:`step`."""

    def __init__(
        self,
        width: int,
        height: int,
        words: Sequence[int],
        cfg: LabelerConfig = DEFAULT_CONFIG,
        model: TimingModel = DEFAULT_TIMING,
        fifo_capacity: int = DEFAULT_FIFO_CAPACITY,
        line_capacity: int = DEFAULT_LINE_CAPACITY,
        trace: bool = False,
    ):
        if width > line_capacity:
            raise LineBufferOverflow(
                f"line buffer capacity exceeded: width {width} > {line_capacity}"
            )
        if len(words) != width * height:
            raise ValueError(f"expected {width * height} input words, got {len(words)}")
        self.width = width
        self.height = height
        self.cfg = cfg
        self.model = model
        self.words = words
        self.total_words = width * height
        self.line_capacity = line_capacity

        self.in_fifo = Fifo(fifo_capacity)
        self.out_fifo = Fifo(fifo_capacity)
        self.memory_img = [0] * line_capacity
        self.label_data = [[0] * line_capacity, [0] * line_capacity]
        self.parity = 0  # index of the buffer written on the current line

        self.gen_state = LabelGeneratorState()
        self.equivalences = EquivalenceSet()
        self.pairs: list[tuple[int, int]] = []
        self.ref_plan = [(dy, dx) for dx, dy in cfg.ref_set]
        self.hist_len = max([-dx for dx, dy in cfg.ref_set if dy == 0], default=0)
        self.hist = [0] * self.hist_len  # hist[0] is the label just emitted

        self.ngroups = math.ceil(width / model.pixels_per_group)
        rate = model.dma_words_per_cycle
        self._rate_num, self._rate_den = rate.numerator, rate.denominator
        self._credit_cap = max(rate.numerator, rate.denominator)
        self.in_credit = 0
        self.out_credit = 0

        self.phase = LOAD
        self.cycle = 0
        self.y = 0
        self.load_idx = 0
        self.group = 0
        self.slot = 0
        self.line_start = 0
        self.line_cycles: list[int] = []
        self.host_sent = 0
        self.host_received: list[int] = []

        self.compute_cycles = 0
        self.load_cycles = 0
        self.stall_cycles = 0
        self.drain_cycles = 0

        self.trace = trace
        self.access_log: list[tuple[int, str, int]] = []  # (line, "r"/"w", buffer)

    @property
    def done(self) -> bool:
        return self.phase == DONE

    def _generate(self, x: int) -> int:
        if self.trace:
            self.access_log.append((self.y, "r", self.parity ^ 1))
            self.access_log.append((self.y, "w", self.parity))
        pixel = self.memory_img[x]
        if not pixel:
            # black in, 0 out: no reference or counter activity
            self.label_data[self.parity][x] = 0
            if self.hist_len:
                self.hist.insert(0, 0)
                self.hist.pop()
            return 0
        w = self.width
        read_buf = self.label_data[self.parity ^ 1]
        hist = self.hist
        refs = []
        for dy, dx in self.ref_plan:
            nx = x + dx
            if dy == 0:
                refs.append(hist[-dx - 1] if nx >= 0 else 0)
            else:
                refs.append(read_buf[nx] if 0 <= nx < w else 0)
        state = self.gen_state
        lab, new_state, pairs = label_pixel(pixel, refs, state, self.cfg)
        if new_state.current_label != state.current_label:
            self.equivalences.add(new_state.current_label)
        self.gen_state = new_state
        for a, b in pairs:
            self.equivalences.union(a, b)
            self.pairs.append((a, b))
        self.label_data[self.parity][x] = lab
        if self.hist_len:
            self.hist.insert(0, lab)
            self.hist.pop()
        return lab

    def _end_line(self) -> None:
        self.line_cycles.append(self.cycle - self.line_start)
        self.line_start = self.cycle
        self.parity ^= 1
        self.y += 1
        if self.hist_len:
            self.hist = [0] * self.hist_len
        self.group = 0
        self.slot = 0
        if self.y == self.height:
            self.phase = DRAIN
        else:
            self.phase = LOAD
            self.load_idx = 0

    def step(self) -> "FrameSim":
        """Advance exactly one clock. A finished simulation is left as is."""
        phase = self.phase
        if phase == DONE:
            return self
        self.cycle += 1
        fin, fout = self.in_fifo, self.out_fifo
        inq, outq = fin.q, fout.q
        occ_in = len(inq)
        occ_out = len(outq)

        # datapath side
        if phase == LOAD:
            if occ_in:
                i = self.load_idx
                self.memory_img[i] = inq.popleft()
                fin.words_out += 1
                i += 1
                self.load_idx = i
                if i == self.width:
                    self.phase = LABEL
            self.load_cycles += 1
        elif phase == LABEL:
            slot = self.slot
            ppg = self.model.pixels_per_group
            x = self.group * ppg + slot
            if slot < ppg and x < self.width:
                if occ_out < fout.capacity:
                    outq.append(self._generate(x))
                    fout.words_in += 1
                    advance = True
                else:
                    advance = False
            else:
                advance = True
            if advance:
                self.compute_cycles += 1
                slot += 1
                if slot == self.model.cycles_per_group:
                    slot = 0
                    self.group += 1
                self.slot = slot
                if self.group == self.ngroups:
                    self._end_line()
            else:
                self.stall_cycles += 1
                fout.stalls += 1
        else:
            self.drain_cycles += 1

        # host side: feed the input FIFO, drain the output FIFO
        sent = self.host_sent
        if self._rate_num == self._rate_den:
            if sent < self.total_words:
                if occ_in < fin.capacity:
                    inq.append(self.words[sent])
                    fin.words_in += 1
                    self.host_sent = sent + 1
                else:
                    fin.stalls += 1
            if occ_out:
                self.host_received.append(outq.popleft())
                fout.words_out += 1
        else:
            num, den, cap = self._rate_num, self._rate_den, self._credit_cap
            pending = self.total_words - sent
            if pending:
                self.in_credit = min(self.in_credit + num, cap)
                allowed = self.in_credit // den
                space = fin.capacity - occ_in
                n = min(allowed, space, pending)
                if n:
                    inq.extend(self.words[sent:sent + n])
                    fin.words_in += n
                    self.host_sent = sent + n
                    self.in_credit -= n * den
                elif allowed and not space:
                    fin.stalls += 1
            if occ_out:
                self.out_credit = min(self.out_credit + num, cap)
                n = min(self.out_credit // den, occ_out)
                if n:
                    recv = self.host_received
                    for _ in range(n):
                        recv.append(outq.popleft())
                    fout.words_out += n
                    self.out_credit -= n * den

        if self.phase == DRAIN and len(self.host_received) == self.total_words:
            self.phase = DONE
        return self

    def advance(self, cycles: int) -> "FrameSim":
        for _ in range(cycles):
            self.step()
        return self

    def run(self, max_cycles: int | None = None) -> "FrameSim":
        if max_cycles is None:
            # generous bound; a correct model never gets close
            max_cycles = 64 + 8 * (estimate_cycles(self.width, self.height, self.model)
                                   + 2 * self.total_words * self._credit_cap)
        step = self.step
        while self.phase != DONE:
            for _ in range(1024):
                step()
            if self.cycle > max_cycles:
                raise RuntimeError(f"simulation did not finish within {max_cycles} cycles")
        return self

    def snapshot(self) -> tuple:
        """Hashable view of the full machine state, for comparisons."""
        return (
            self.phase, self.cycle, self.y, self.load_idx, self.group, self.slot,
            self.parity, tuple(self.in_fifo.q), tuple(self.out_fifo.q),
            self.in_fifo.words_in, self.in_fifo.words_out, self.in_fifo.stalls,
            self.out_fifo.words_in, self.out_fifo.words_out, self.out_fifo.stalls,
            tuple(self.memory_img), tuple(self.label_data[0]), tuple(self.label_data[1]),
            tuple(self.hist), self.gen_state, tuple(self.pairs),
            self.host_sent, tuple(self.host_received), self.in_credit, self.out_credit,
            self.compute_cycles, self.load_cycles, self.stall_cycles, self.drain_cycles,
            tuple(self.line_cycles),
        )

    def result(self) -> FirstPassResult:
        if not self.done:
            raise RuntimeError("simulation not finished")
        return FirstPassResult(
            labels=LabelImage(self.width, self.height, tuple(self.host_received)),
            equivalences=self.equivalences,
            labels_issued=self.gen_state.current_label,
            overflowed=self.gen_state.overflowed,
            pairs=tuple(self.pairs),
        )

    def report(self) -> SimReport:
        return SimReport(
            width=self.width,
            height=self.height,
            compute_cycles=self.compute_cycles,
            transfer_cycles=self.load_cycles + self.drain_cycles,
            stall_cycles=self.stall_cycles,
            total_cycles=self.cycle,
            clock_period_ns=self.model.clock_period_ns,
            compute_cycles_per_line=self.ngroups * self.model.cycles_per_group,
            line_cycles=tuple(self.line_cycles),
            fifo_capacity=self.in_fifo.capacity,
            in_words=self.in_fifo.words_in,
            out_words=self.out_fifo.words_out,
            in_fifo_stalls=self.in_fifo.stalls,
            out_fifo_stalls=self.out_fifo.stalls,
        )


def step_cycle(sim: FrameSim) -> FrameSim:
    return sim.step()


def run_words(
    width: int,
    height: int,
    words: Sequence[int],
    cfg: LabelerConfig = DEFAULT_CONFIG,
    model: TimingModel = DEFAULT_TIMING,
    fifo_capacity: int = DEFAULT_FIFO_CAPACITY,
    line_capacity: int = DEFAULT_LINE_CAPACITY,
) -> tuple[FirstPassResult, SimReport]:
    sim = FrameSim(width, height, words, cfg, model, fifo_capacity, line_capacity).run()
    return sim.result(), sim.report()


def run_frame(
    img: BinaryImage,
    cfg: LabelerConfig = DEFAULT_CONFIG,
    model: TimingModel = DEFAULT_TIMING,
    fifo_capacity: int = DEFAULT_FIFO_CAPACITY,
    line_capacity: int = DEFAULT_LINE_CAPACITY,
) -> tuple[FirstPassResult, SimReport]:
    return run_words(img.width, img.height, img.pixels, cfg, model, fifo_capacity, line_capacity)
