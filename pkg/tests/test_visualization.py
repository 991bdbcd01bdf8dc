import io

import numpy as np
import pandas as pd

from src.matching.correspondence import CorrespondenceSet
from src.utils.visualization import plot_correspondences, plot_error_profiles

PNG_SIGNATURE = b"\x89PNG"


def profile(scale):
    return pd.DataFrame({
        "bin_lo_m": [0.0, 10.0, 20.0],
        "bin_hi_m": [10.0, 20.0, 30.0],
        "count": [10, 10, 10],
        "mean_error_mm": [scale, 2 * scale, 3 * scale],
    })


def test_error_profiles_to_file(tmp_path):
    path = tmp_path / "profiles.png"
    result = plot_error_profiles({"cart": profile(96.0), "cyl": profile(150.0)}, path)
    assert result == path
    assert path.read_bytes().startswith(PNG_SIGNATURE)


def test_correspondences_to_buffer():
    corr = CorrespondenceSet([0, 1, 2], [10.0, 50.0, 90.0], [10.0, 40.0, 70.0], [-1, 3, 25], 0.0, 0.0, 100, 80)
    buf = plot_correspondences(corr)
    assert isinstance(buf, io.BytesIO)
    assert buf.getvalue().startswith(PNG_SIGNATURE)


def test_correspondences_without_superpixels(tmp_path):
    corr = CorrespondenceSet(np.arange(3), [1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [-1, -1, -1], 0.0, 0.0, 10, 10)
    path = plot_correspondences(corr, tmp_path / "corr.png")
    assert path.exists()
