"""
Plottable time-of-day densities.

``density_table`` bins a label's times of day into 288 five-minute bins and
puts the fitted mixture next to the histogram, so an external plotting
tool can draw the histogram-plus-density picture of a label.

Example usage:

    table = density_table(angles, model)
    table.to_csv("bedroom_door.csv", index=False)
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .circstats import TWO_PI, as_angles
from .mixture import VonMisesMixture

BINS = 288


def density_table(sample, model: VonMisesMixture, bins: int = BINS) -> pd.DataFrame:
    """Histogram counts and fitted density per bin.

    Args:
        sample: Angles in radians (or a ``CircularSample``).
        model: The mixture fitted to the sample.
        bins: Number of equal bins over the day.

    Returns:
        A frame with columns ``hour`` (bin start), ``count``, ``density``
        (mixture pdf per radian at the bin centre) and ``expected_count``
        (sample size times the mixture mass of the bin).
    """
    angles = as_angles(sample)
    edges = np.linspace(0.0, TWO_PI, bins + 1)
    counts, _ = np.histogram(angles, bins=edges)
    centres = 0.5 * (edges[:-1] + edges[1:])
    cdf = np.asarray(model.cdf(edges[:-1]))
    mass = np.diff(np.append(cdf, 1.0))
    return pd.DataFrame({
        "hour": np.round(edges[:-1] * 24.0 / TWO_PI, 6),
        "count": counts.astype(int),
        "density": np.asarray(model.pdf(centres)),
        "expected_count": angles.size * np.clip(mass, 0.0, None),
    })


def write_density_csv(table: pd.DataFrame) -> bytes:
    return table.to_csv(index=False, lineterminator="\n", float_format="%.10g").encode("utf-8")
