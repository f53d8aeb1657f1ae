"""Streaming connected-component labeling component: a cycle-level model of
the line-buffered labeling circuit behind a small publish/subscribe bus."""

from .hwsim import SimReport, TimingModel, estimate_cycles, run_frame
from .imaging import BinaryImage, GrayImage, LabelImage, binarize, load_bmp, load_pgm, render_labels
from .labeling import (
    CONN4,
    CONN8,
    PAPER3,
    LabelerConfig,
    canonicalize,
    first_pass,
    flood_fill_oracle,
    label_pixel,
    resolve,
)

__version__ = "0.1.0"
