"""Continual-learning keyword spotting on a tiny dual-feature CNN."""

__version__ = "0.1.0"

SAMPLE_RATE = 16000
CLIP_SAMPLES = 16000

# binary head: sigmoid output > 0.5 means "yes"
YES = 1
NO = 0
CLASS_NAMES = {YES: "yes", NO: "no"}
