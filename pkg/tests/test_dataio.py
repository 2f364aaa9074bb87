import numpy as np
import pytest

from tempnmf.dataio import DataError, load_count_matrix, load_mask


def write(tmp_path, text, name="v.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_dense(tmp_path):
    V = load_count_matrix(write(tmp_path, "1,2,3\n0,4,5\n"))
    np.testing.assert_array_equal(V, [[1, 2, 3], [0, 4, 5]])


def test_dense_header_and_blank_lines(tmp_path):
    V = load_count_matrix(write(tmp_path, "a,b\n1,2\n\n3,4\n"), header=True)
    assert V.shape == (2, 2)


@pytest.mark.parametrize("text,msg", [("1,2\n3\n", "expected 2 fields"), ("1,x\n", "cannot parse"),
                                      ("1,-2\n", "negative"), ("1,nan\n", "non-finite"), ("", "no data")])
def test_dense_errors(tmp_path, text, msg):
    with pytest.raises(DataError, match=msg):
        load_count_matrix(write(tmp_path, text))


def test_error_names_line(tmp_path):
    with pytest.raises(DataError, match=r"v\.csv:3"):
        load_count_matrix(write(tmp_path, "1,2\n3,4\n5,oops\n"))


def test_triplets(tmp_path):
    p = write(tmp_path, "# 2 3\n0 0 1\n1 2 4\n# comment\n1 2 1\n", "v.txt")
    V = load_count_matrix(p, "sparse-triplet")
    np.testing.assert_array_equal(V, [[1, 0, 0], [0, 0, 5]])


@pytest.mark.parametrize("text", ["0 0 1\n", "# 2 2\n2 0 1\n", "# 2 2\n0 0\n", "# 0 2\n"])
def test_triplet_errors(tmp_path, text):
    with pytest.raises(DataError):
        load_count_matrix(write(tmp_path, text, "v.txt"), "sparse-triplet")


def test_unknown_format(tmp_path):
    with pytest.raises(DataError, match="unknown format"):
        load_count_matrix(write(tmp_path, "1\n"), "parquet")


def test_mask(tmp_path):
    m = load_mask(write(tmp_path, "1,0\n1,1\n", "m.csv"), shape=(2, 2))
    np.testing.assert_array_equal(m, [[1, 0], [1, 1]])
    with pytest.raises(DataError, match="0 or 1"):
        load_mask(write(tmp_path, "1,2\n", "m2.csv"))
    with pytest.raises(DataError, match="does not match"):
        load_mask(write(tmp_path, "1,0\n", "m3.csv"), shape=(2, 2))
