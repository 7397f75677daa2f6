import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmmcnn.data import (Dataset, ParseError, SynthConfig, generate_synthetic, parse_attribute_file,
                         parse_landmark_file, read_pnm, read_split, shuffled_order,
                         template_decode, write_attribute_file, write_landmark_file, write_pnm,
                         write_split)

VALID_ATTR = "2\nSmiling Bald\nimg1.pgm 1 -1\nimg2.pgm -1 1\n"


def test_parse_attribute_file_example(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text(VALID_ATTR)
    names, files, labels = parse_attribute_file(p)
    assert names == ["Smiling", "Bald"] and files == ["img1.pgm", "img2.pgm"]
    np.testing.assert_array_equal(labels, [[1, -1], [-1, 1]])


def test_zero_label_reports_line(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("2\nSmiling Bald\nimg1.pgm 1 -1\nimg2.pgm 0 1\n")
    with pytest.raises(ParseError) as err:
        parse_attribute_file(p)
    assert err.value.line == 4


def test_count_mismatch_and_bad_header(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("3\nSmiling Bald\nimg1.pgm 1 -1\n")
    with pytest.raises(ParseError):
        parse_attribute_file(p)
    p.write_text("x\nSmiling\n")
    with pytest.raises(ParseError):
        parse_attribute_file(p)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_token_count_mutations_are_rejected(tmp_path_factory, data):
    lines = VALID_ATTR.splitlines()
    row = data.draw(st.integers(2, len(lines) - 1))
    tokens = lines[row].split()
    if data.draw(st.booleans()):
        tokens.insert(data.draw(st.integers(0, len(tokens))), "1")
    else:
        del tokens[data.draw(st.integers(0, len(tokens) - 1))]
    lines[row] = " ".join(tokens)
    p = tmp_path_factory.mktemp("fuzz") / "a.txt"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError):
        parse_attribute_file(p)


def test_attribute_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    names = [f"n{j}" for j in range(5)]
    files = [f"f{i}.pgm" for i in range(30)]
    labels = rng.choice([-1.0, 1.0], size=(30, 5))
    write_attribute_file(tmp_path / "a.txt", names, files, labels)
    n2, f2, l2 = parse_attribute_file(tmp_path / "a.txt")
    assert n2 == names and f2 == files and np.array_equal(l2, labels)


def test_landmark_examples(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("a.pgm 1.0 2.0 16.0 8.0\n")
    files, coords = parse_landmark_file(p)
    assert files == ["a.pgm"] and coords.shape == (1, 4)
    _, norm = parse_landmark_file(p, (16, 8))
    np.testing.assert_array_equal(norm, [[1 / 16, 2 / 8, 1.0, 1.0]])


def test_landmark_wrong_count_names_file(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("a.pgm 1 2 3 4\nbad.pgm 1 2\n")
    with pytest.raises(ParseError, match="bad.pgm"):
        parse_landmark_file(p)
    with pytest.raises(ParseError, match="a.pgm"):
        parse_landmark_file(p, n_values=6)


def test_landmark_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    files = [f"f{i}" for i in range(20)]
    coords = rng.random((20, 8)) * 100
    write_landmark_file(tmp_path / "m.txt", files, coords)
    f2, c2 = parse_landmark_file(tmp_path / "m.txt")
    assert f2 == files and c2.tobytes() == coords.tobytes()


@pytest.mark.parametrize("channels", [1, 3])
def test_pnm_roundtrip(tmp_path, channels):
    img = np.random.default_rng(2).integers(0, 256, size=(channels, 5, 7)) / 255.0
    write_pnm(tmp_path / "x.pnm", img)
    assert read_pnm(tmp_path / "x.pnm").tobytes() == img.tobytes()


def test_pnm_rejects_garbage(tmp_path):
    (tmp_path / "x.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
    with pytest.raises(ParseError):
        read_pnm(tmp_path / "x.pgm")


def test_dataset_validates_labels():
    with pytest.raises(ValueError):
        Dataset(np.zeros((1, 1, 4, 4)), np.zeros((1, 2)), np.zeros((1, 2)), ["a"])


SMALL = SynthConfig(n_train=60, n_val=20, n_test=20, seed=7)


def test_generator_deterministic_and_consistent():
    a, b = generate_synthetic(SMALL), generate_synthetic(SMALL)
    for part in ("train", "val", "test"):
        pa, pb = a.parts()[part], b.parts()[part]
        assert pa.images.tobytes() == pb.images.tobytes()
        assert pa.labels.tobytes() == pb.labels.tobytes()
        assert pa.landmarks.tobytes() == pb.landmarks.tobytes()
    tr = a.train
    assert tr.images.shape == (60, 1, 16, 16)
    assert tr.images.min() >= 0 and tr.images.max() <= 1
    assert tr.landmarks.shape == (60, 8)
    assert tr.landmarks.min() >= 0 and tr.landmarks.max() <= 1
    assert set(np.unique(tr.labels)) <= {-1.0, 1.0}
    assert min(SMALL.rates) <= 0.1
    assert not set(a.train.files) & set(a.val.files)


def test_positive_count_within_binomial_bound():
    cfg = SynthConfig(rates=(0.5, 0.5), difficulty=(0.0, 0.5), groups=("objective", "subjective"),
                      n_train=1000, n_val=1, n_test=1, seed=3)
    pos = (generate_synthetic(cfg).train.labels[:, 0] > 0).sum()
    assert abs(pos - 500) <= 3 * np.sqrt(1000 * 0.25)


def test_template_decoder_recovers_clean_attributes():
    cfg = SynthConfig(n_train=400, n_val=1, n_test=1, seed=11)
    ds = generate_synthetic(cfg).train
    decoded = template_decode(ds, cfg)
    clean = [j for j, d in enumerate(cfg.difficulty) if d == 0]
    acc = (decoded[:, clean] == ds.labels[:, clean]).mean()
    assert acc >= 0.99


def test_split_roundtrip_is_lossless(tmp_path):
    split = generate_synthetic(SMALL)
    write_split(split, tmp_path)
    back = read_split(tmp_path)
    assert back.spec == split.spec
    for part in ("train", "val", "test"):
        a, b = split.parts()[part], back.parts()[part]
        assert a.files == b.files
        assert a.images.tobytes() == b.images.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()
        np.testing.assert_allclose(b.landmarks, a.landmarks, rtol=1e-15, atol=1e-15)


def test_shuffled_order_is_pure():
    assert np.array_equal(shuffled_order(50, 3, 2), shuffled_order(50, 3, 2))
    assert not np.array_equal(shuffled_order(50, 3, 2), shuffled_order(50, 3, 3))
    assert sorted(shuffled_order(50, 3, 2)) == list(range(50))


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(rates=(0.5, 1.0), difficulty=(0, 0), groups=("objective", "subjective"))
    with pytest.raises(ValueError):
        SynthConfig(rates=(0.5,), difficulty=(0, 1), groups=("objective",))
