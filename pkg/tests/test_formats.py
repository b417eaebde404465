import csv

import numpy as np
import pytest

from cfarkit.engine import Roi
from cfarkit.errors import FormatError, SizeMismatch
from cfarkit.formats import read_config, read_mask, write_mask, write_rois_csv


def test_mask_round_trip(tmp_path):
    m = np.zeros((3, 5), dtype=bool)
    m[1, 2] = m[2, 4] = True
    write_mask(m, tmp_path / "m.mask")
    raw = (tmp_path / "m.mask").read_bytes()
    assert raw.startswith(b"MASK\n5 3\n") and len(raw) == len(b"MASK\n5 3\n") + 15
    np.testing.assert_array_equal(read_mask(tmp_path / "m.mask"), m)


def test_mask_errors(tmp_path):
    p = tmp_path / "bad.mask"
    p.write_bytes(b"MASX\n1 1\n\x00")
    with pytest.raises(FormatError):
        read_mask(p)
    p.write_bytes(b"MASK\n2 2\n\x00")
    with pytest.raises(SizeMismatch):
        read_mask(p)
    p.write_bytes(b"MASK\n1 1\n\x07")
    with pytest.raises(FormatError):
        read_mask(p)


def test_roi_csv(tmp_path):
    write_rois_csv([Roi(0, 1.5, 2.25, 3, (1, 2, 2, 3), 9.0, 7.5)], tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["id", "row", "col", "pixel_count", "peak", "mean"]
    assert rows[1] == ["0", "1.500", "2.250", "3", "9", "7.5"]


def test_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\npfa = 1e-3\n\nout-mask=m.mask  # trailing\n")
    assert read_config(p) == {"pfa": "1e-3", "out_mask": "m.mask"}
    p.write_text("novalue\n")
    with pytest.raises(FormatError):
        read_config(p)
