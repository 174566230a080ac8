"""Conversational text-to-speech with word-level emphasis rendering.

The package covers the full desk-scale pipeline: an emphasis-annotated
dialogue corpus (data model, aggregation, splits), pluggable text/audio
frontends with deterministic toy implementations, multi-scale dialogue
context encoders, multi-modal fusion with a word-level emphasis intensity
predictor, a miniature FastSpeech2-style synthesizer with an emphasis
regulator, evaluation metrics, an experiment runner CLI, and an HTTP
annotation service.
"""

__version__ = "0.1.0"

SAMPLE_RATE = 22050
