import numpy as np
import pytest

from compmem.rasters import disc_raster, read_pbm, read_pgm, to_gray8, write_pbm, write_pgm


@pytest.mark.parametrize("binary", [True, False])
def test_pbm_roundtrip(tmp_path, binary):
    img = (np.random.default_rng(0).random((13, 21)) < 0.3).astype(np.uint8)
    path = write_pbm(tmp_path / "a.pbm", img, binary=binary)
    np.testing.assert_array_equal(read_pbm(path), img)


def test_pbm_text_with_comments(tmp_path):
    # PBM stores 1 = black; whiteness is inverted
    (tmp_path / "c.pbm").write_text("P1\n# a comment\n2 2\n0 1 # row one\n1 0\n")
    np.testing.assert_array_equal(read_pbm(tmp_path / "c.pbm"), [[1, 0], [0, 1]])


def test_pbm_rejects_garbage(tmp_path):
    (tmp_path / "bad.pbm").write_text("P1\n2 2\n0 1 2 0\n")
    with pytest.raises(ValueError):
        read_pbm(tmp_path / "bad.pbm")
    (tmp_path / "short.pbm").write_text("P1\n2 2\n0 1\n")
    with pytest.raises(ValueError):
        read_pbm(tmp_path / "short.pbm")
    (tmp_path / "x.pbm").write_text("P2\n2 2\n")
    with pytest.raises(ValueError):
        read_pbm(tmp_path / "x.pbm")
    with pytest.raises(ValueError):
        write_pbm(tmp_path / "y.pbm", np.array([[0, 2]]))


def test_pgm_roundtrip_and_scaling(tmp_path):
    vals = np.array([[0.0, 2.5, 5.0], [-1.0, 6.0, 1.0]])
    path = write_pgm(tmp_path / "m.pgm", vals, 0.0, 5.0)
    assert path.read_bytes().startswith(b"P5\n3 2\n255\n")
    np.testing.assert_array_equal(read_pgm(path), [[0, 128, 255], [0, 255, 51]])
    with pytest.raises(ValueError):
        to_gray8(vals, 1.0, 1.0)


@pytest.mark.parametrize("rows, cols, n", [(10, 10, 0), (10, 10, 37), (25, 40, 955), (4, 4, 16)])
def test_disc_raster_exact_count(rows, cols, n):
    img = disc_raster(rows, cols, n)
    assert img.shape == (rows, cols) and int(img.sum()) == n


def test_disc_raster_is_centered():
    img = disc_raster(11, 11, 1)
    assert img[5, 5] == 1
