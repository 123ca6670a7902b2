"""Acoustic mosquito wingbeat classification toolkit.

Pipeline: WAV -> standardize (low-pass + 8 kHz resample) -> overlapping
segments -> normalized STFT spectrograms -> residual CNN, with balanced
k-fold cross-validation, Grad-CAM explanations, and int8 dynamic-range
quantization.  A synthetic wingbeat generator makes every experiment
reproducible at desk scale.
"""

__version__ = "0.1.0"
