"""Speech emotion recognition toolkit, python face.

The heavy lifting (training, autodiff, checkpoints) lives in the C++
library and its command-line tool; this module exposes the feature
pipeline, SpecAugment geometry, metrics and the dataset split for
inspection and downstream analysis.
"""

from serkit._core import (
    LABEL_NAMES,
    aggregate,
    apply_masks,
    confusion,
    f1_scores,
    hz_to_mel,
    log_mel_gram,
    mel_filterbank,
    mel_to_hz,
    mfcc_gram,
    read_wav,
    resample,
    sample_masks,
    stft_power,
    stratified_split,
    warmup_lr,
)

__all__ = [
    "LABEL_NAMES",
    "aggregate",
    "apply_masks",
    "confusion",
    "f1_scores",
    "hz_to_mel",
    "log_mel_gram",
    "mel_filterbank",
    "mel_to_hz",
    "mfcc_gram",
    "read_wav",
    "resample",
    "sample_masks",
    "stft_power",
    "stratified_split",
    "warmup_lr",
]
