import numpy as np
import pytest

from astralora.data import DataFormatError, Dataset, generate, load_csv, split, write_csv


@pytest.mark.parametrize("kind", ["spirals", "blobs", "xor-grid"])
def test_balanced_and_finite(kind):
    ds = generate(kind, 1000, 0.1, 0)
    assert np.bincount(ds.labels).tolist() == [500, 500]
    assert np.all(np.isfinite(ds.features))


def test_blobs_multiclass():
    ds = generate("blobs", 300, 0.1, 0, classes=3)
    assert np.bincount(ds.labels).tolist() == [100, 100, 100]


def test_noiseless_blobs_linearly_separable():
    ds = generate("blobs", 400, 0.0, 1)
    # least-squares linear probe on [x, 1] against +-1 targets
    a = np.c_[ds.features, np.ones(len(ds))]
    t = 2.0 * ds.labels - 1
    coef = np.linalg.lstsq(a, t, rcond=None)[0]
    assert np.all(np.sign(a @ coef) == t)


def test_same_seed_same_bytes(tmp_path):
    for name in ("a.csv", "b.csv"):
        write_csv(generate("spirals", 100, 0.2, 5), tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_roundtrip_exact(tmp_path):
    ds = generate("xor-grid", 120, 0.3, 2)
    write_csv(ds, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv")
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert back.dim == 2


def test_header_and_width(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("label,f1,f2,f3\n0,1,2,3\n1,4,5,6\n")
    assert load_csv(p).dim == 3


@pytest.mark.parametrize("text,line", [
    ("", None),
    ("lbl,f1\n0,1\n", ":1"),
    ("label,f1\n0,1\n1,abc\n", ":3"),
    ("label,f1,f2\n0,1,2\n1,2\n", ":3"),
    ("label,f1\n0,nan\n", ":2"),
])
def test_malformed(tmp_path, text, line):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DataFormatError) as info:
        load_csv(p)
    if line:
        assert line in str(info.value)


def test_split_stratified():
    train, test = split(generate("spirals", 400, 0.1, 0), 0.25, 0)
    assert len(test) == 100 and np.bincount(test.labels).tolist() == [50, 50]
    assert train.split == "train" and test.split == "test"


def test_small_n_rejected():
    with pytest.raises(ValueError):
        generate("spirals", 5, 0.1, 0)


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), np.array([0]))
