"""The eight octave bands used throughout the package."""

import numpy as np

OCTAVE_CENTERS = np.array([62.5, 125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0])
N_BANDS = len(OCTAVE_CENTERS)
BAND_LABELS = tuple(f"{c:g}" for c in OCTAVE_CENTERS)


def band_edges(center):
    return center / np.sqrt(2.0), center * np.sqrt(2.0)
