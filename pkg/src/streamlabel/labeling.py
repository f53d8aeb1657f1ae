"""Streaming connected-component labeling.

``label_pixel`` is the per-pixel rule of the label generator circuit: a new
pixel plus a fixed number of reference labels taken from already-scanned
neighbors. ``first_pass`` applies it in raster order and records label
equivalences; ``resolve`` is the second step that merges them.
``flood_fill_oracle`` is an unrelated breadth-first implementation used to
check the other two.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .imaging import BinaryImage, LabelImage

Offset = tuple[int, int]

# left, up, up-right: one previous-pixel reference plus two previous-line ones
PAPER3: tuple[Offset, ...] = ((-1, 0), (0, -1), (1, -1))
CONN4: tuple[Offset, ...] = ((-1, 0), (0, -1))
CONN8: tuple[Offset, ...] = ((-1, 0), (-1, -1), (0, -1), (1, -1))

CONNECTIVITY = {"paper3": PAPER3, "conn4": CONN4, "conn8": CONN8}

OVERFLOW_POLICIES = ("error", "saturate")


class LabelOverflowError(RuntimeError):
    pass


def validate_ref_set(ref_set: Sequence[Offset]) -> tuple[Offset, ...]:
    """Return ``ref_set`` as a tuple, raising if an offset is not causal."""
    out = tuple((int(dx), int(dy)) for dx, dy in ref_set)
    if len(set(out)) != len(out):
        raise ValueError(f"duplicate offsets in ref_set {out}")
    for dx, dy in out:
        if dy not in (-1, 0) or (dy == 0 and dx >= 0):
            raise ValueError(f"offset ({dx}, {dy}) does not precede the pixel in raster order")
    return out


@dataclass(frozen=True)
class LabelerConfig:
    ref_set: tuple[Offset, ...] = PAPER3
    label_bits: int = 8
    overflow_policy: str = "error"

    def __post_init__(self):
        object.__setattr__(self, "ref_set", validate_ref_set(self.ref_set))
        if self.label_bits not in (8, 16, 32):
            raise ValueError(f"label_bits must be 8, 16 or 32, got {self.label_bits}")
        if self.overflow_policy not in OVERFLOW_POLICIES:
            raise ValueError(f"unknown overflow policy {self.overflow_policy!r}")

    @property
    def max_label(self) -> int:
        return (1 << self.label_bits) - 1

    @classmethod
    def from_mode(cls, mode: str = "paper3", **kw) -> "LabelerConfig":
        try:
            return cls(ref_set=CONNECTIVITY[mode], **kw)
        except KeyError:
            raise ValueError(f"unknown connectivity mode {mode!r}") from None


DEFAULT_CONFIG = LabelerConfig()


@dataclass(frozen=True)
class LabelGeneratorState:
    current_label: int = 0
    overflowed: bool = False


def label_pixel(
    new_pixel: int,
    refs: Sequence[int],
    state: LabelGeneratorState,
    cfg: LabelerConfig = DEFAULT_CONFIG,
) -> tuple[int, LabelGeneratorState, list[tuple[int, int]]]:
    """One clock of the label generator.

    Returns ``(out_label, state, pairs)``. ``state`` is the same object when
    nothing changed. ``pairs`` lists every distinct pair of nonzero reference
    labels, in reference order.
    """
    if new_pixel == 0:
        return 0, state, []
    nz = []
    for r in refs:
        if r and r not in nz:
            nz.append(r)
    if not nz:
        if state.current_label >= cfg.max_label:
            if cfg.overflow_policy == "error":
                raise LabelOverflowError(
                    f"label capacity exceeded (2^{cfg.label_bits} - 1 = {cfg.max_label})"
                )
            if state.overflowed:
                return cfg.max_label, state, []
            return cfg.max_label, LabelGeneratorState(state.current_label, True), []
        fresh = state.current_label + 1
        return fresh, LabelGeneratorState(fresh, state.overflowed), []
    if len(nz) == 1:
        return nz[0], state, []
    pairs = [(nz[i], nz[j]) for i in range(len(nz)) for j in range(i + 1, len(nz))]
    return min(nz), state, pairs


class EquivalenceSet:
    """Union-find over provisional labels 1..n; the root of a class is its
    smallest member."""

    def __init__(self, n: int = 0):
        self._parent = list(range(n + 1))

    def __len__(self) -> int:
        return len(self._parent) - 1

    def add(self, label: int) -> None:
        if label <= 0:
            raise ValueError("background label 0 cannot enter the equivalence set")
        while len(self._parent) <= label:
            self._parent.append(len(self._parent))

    def find(self, label: int) -> int:
        if label <= 0 or label >= len(self._parent):
            raise KeyError(label)
        parent = self._parent
        while parent[label] != label:
            parent[label] = parent[parent[label]]
            label = parent[label]
        return label

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if rb < ra:
            ra, rb = rb, ra
        self._parent[rb] = ra
        return ra

    def same(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)

    def representatives(self) -> list[int]:
        """``rep[k]`` is the class root of label k (``rep[0] == 0``)."""
        return [0] + [self.find(k) for k in range(1, len(self._parent))]

    def classes(self) -> list[list[int]]:
        groups: dict[int, list[int]] = {}
        for k in range(1, len(self._parent)):
            groups.setdefault(self.find(k), []).append(k)
        return sorted(groups.values())

    def __eq__(self, other):
        if not isinstance(other, EquivalenceSet):
            return NotImplemented
        return self.representatives() == other.representatives()

    def __repr__(self):
        return f"EquivalenceSet({self.classes()})"


@dataclass
class FirstPassResult:
    labels: LabelImage
    equivalences: EquivalenceSet
    labels_issued: int
    overflowed: bool
    pairs: tuple[tuple[int, int], ...] = field(default=())


def gather_refs(labels: Sequence[int], width: int, x: int, y: int, ref_set: Sequence[Offset]) -> list[int]:
    refs = []
    for dx, dy in ref_set:
        nx, ny = x + dx, y + dy
        refs.append(labels[ny * width + nx] if 0 <= nx < width and ny >= 0 else 0)
    return refs


def first_pass(img: BinaryImage, cfg: LabelerConfig = DEFAULT_CONFIG) -> FirstPassResult:
    w, h = img.width, img.height
    pix = img.pixels
    out = [0] * (w * h)
    ref_set = cfg.ref_set
    state = LabelGeneratorState()
    eq = EquivalenceSet()
    recorded = []
    i = 0
    for y in range(h):
        for x in range(w):
            refs = gather_refs(out, w, x, y, ref_set)
            lab, new_state, pairs = label_pixel(pix[i], refs, state, cfg)
            if new_state.current_label != state.current_label:
                eq.add(new_state.current_label)
            state = new_state
            for a, b in pairs:
                eq.union(a, b)
                recorded.append((a, b))
            out[i] = lab
            i += 1
    return FirstPassResult(
        labels=LabelImage(w, h, tuple(out)),
        equivalences=eq,
        labels_issued=state.current_label,
        overflowed=state.overflowed,
        pairs=tuple(recorded),
    )


def canonicalize(lbl: LabelImage) -> LabelImage:
    """Renumber labels 1..K in order of first raster appearance."""
    mapping = {0: 0}
    out = []
    for lab in lbl.labels:
        m = mapping.get(lab)
        if m is None:
            m = mapping[lab] = len(mapping)
        out.append(m)
    return LabelImage(lbl.width, lbl.height, tuple(out))


def resolve(fp: FirstPassResult) -> LabelImage:
    """Second step: collapse every provisional label onto its class root,
    then renumber compactly."""
    rep = fp.equivalences.representatives()
    merged = tuple(rep[lab] for lab in fp.labels.labels)
    return canonicalize(LabelImage(fp.labels.width, fp.labels.height, merged))


def resolve_image(lbl: LabelImage, ref_set: Sequence[Offset] = PAPER3) -> LabelImage:
    """Second step driven only by a provisional label image.

    Used on the subscriber side, where the equivalence table never crossed
    the wire: labels of white neighbors under ``ref_set`` are merged.
    """
    ref_set = validate_ref_set(ref_set)
    w, h = lbl.width, lbl.height
    labs = lbl.labels
    eq = EquivalenceSet(max(labs, default=0))
    for y in range(h):
        row = y * w
        for x in range(w):
            a = labs[row + x]
            if not a:
                continue
            for b in gather_refs(labs, w, x, y, ref_set):
                if b and b != a:
                    eq.union(a, b)
    rep = eq.representatives()
    return canonicalize(LabelImage(w, h, tuple(rep[lab] for lab in labs)))


def flood_fill_oracle(img: BinaryImage, ref_set: Iterable[Offset] = PAPER3) -> LabelImage:
    """Connected components under the symmetrized neighbor set, via BFS."""
    w, h = img.width, img.height
    pix = img.pixels
    steps = set()
    for dx, dy in ref_set:
        steps.add((dx, dy))
        steps.add((-dx, -dy))
    steps = sorted(steps)
    out = [0] * (w * h)
    k = 0
    for start in range(w * h):
        if pix[start] == 0 or out[start]:
            continue
        k += 1
        out[start] = k
        q = deque([start])
        while q:
            cur = q.popleft()
            cy, cx = divmod(cur, w)
            for dx, dy in steps:
                nx, ny = cx + dx, cy + dy
                if 0 <= nx < w and 0 <= ny < h:
                    j = ny * w + nx
                    if pix[j] and not out[j]:
                        out[j] = k
                        q.append(j)
    return LabelImage(w, h, tuple(out))
