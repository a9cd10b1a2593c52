"""Built-in 2-D electrode coordinates of the 10-10 system.

Azimuthal projection seen from above: x to the right ear, y towards the nose,
Cz at the origin and the Fpz-T7-Oz-T8 ring on the unit circle.
"""

from typing import Dict, List, Sequence, Tuple

import numpy as np

from ...domain.errors import ChannelNotFoundError


MONTAGE_2D: Dict[str, Tuple[float, float]] = {
    "Fpz": (0.0, 1.0), "Fp1": (-0.31, 0.95), "Fp2": (0.31, 0.95),
    "AFz": (0.0, 0.75), "AF3": (-0.28, 0.72), "AF4": (0.28, 0.72), "AF7": (-0.59, 0.81), "AF8": (0.59, 0.81),
    "Fz": (0.0, 0.5), "F1": (-0.16, 0.51), "F2": (0.16, 0.51), "F3": (-0.33, 0.53), "F4": (0.33, 0.53),
    "F5": (-0.5, 0.58), "F6": (0.5, 0.58), "F7": (-0.81, 0.59), "F8": (0.81, 0.59),
    "FCz": (0.0, 0.25), "FC1": (-0.2, 0.25), "FC2": (0.2, 0.25), "FC3": (-0.4, 0.27), "FC4": (0.4, 0.27),
    "FC5": (-0.6, 0.29), "FC6": (0.6, 0.29), "FT7": (-0.95, 0.31), "FT8": (0.95, 0.31),
    "Cz": (0.0, 0.0), "C1": (-0.25, 0.0), "C2": (0.25, 0.0), "C3": (-0.5, 0.0), "C4": (0.5, 0.0),
    "C5": (-0.75, 0.0), "C6": (0.75, 0.0), "T7": (-1.0, 0.0), "T8": (1.0, 0.0),
    "CPz": (0.0, -0.25), "CP1": (-0.2, -0.25), "CP2": (0.2, -0.25), "CP3": (-0.4, -0.27), "CP4": (0.4, -0.27),
    "CP5": (-0.6, -0.29), "CP6": (0.6, -0.29), "TP7": (-0.95, -0.31), "TP8": (0.95, -0.31),
    "Pz": (0.0, -0.5), "P1": (-0.16, -0.51), "P2": (0.16, -0.51), "P3": (-0.33, -0.53), "P4": (0.33, -0.53),
    "P5": (-0.5, -0.58), "P6": (0.5, -0.58), "P7": (-0.81, -0.59), "P8": (0.81, -0.59),
    "P9": (-0.95, -0.7), "P10": (0.95, -0.7),
    "POz": (0.0, -0.75), "PO3": (-0.28, -0.72), "PO4": (0.28, -0.72), "PO7": (-0.59, -0.81), "PO8": (0.59, -0.81),
    "Oz": (0.0, -1.0), "O1": (-0.31, -0.95), "O2": (0.31, -0.95), "Iz": (0.0, -1.2),
}


def electrode_positions(channel_names: Sequence[str]) -> np.ndarray:
    """[n x 2] coordinates in channel order."""
    missing = [name for name in channel_names if name not in MONTAGE_2D]
    if missing:
        raise ChannelNotFoundError(missing)
    return np.asarray([MONTAGE_2D[name] for name in channel_names], dtype=np.float64)


def known_channels() -> List[str]:
    return list(MONTAGE_2D)
