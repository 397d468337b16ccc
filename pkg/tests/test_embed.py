import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from votestack.embed import OOV, PAD, encode_sequence, load_embeddings, suggest_max_len, write_embeddings
from votestack.errors import ArgumentError, FormatError


def vec_file(tmp_path, body):
    p = tmp_path / "e.vec"
    p.write_text(body, encoding="utf-8")
    return p


def test_load_basic(tmp_path):
    t = load_embeddings(vec_file(tmp_path, "3 4\ntốt 1 2 3 4\nquá 0 0 0 1\nbuồn -1 0.5 2 0\n"))
    assert t.matrix.shape == (5, 4) and t.dim == 4
    assert t.vocab == {"tốt": 2, "quá": 3, "buồn": 4}
    assert np.array_equal(t.matrix[PAD], np.zeros(4))
    assert np.allclose(t.matrix[OOV], [0, 2.5 / 3, 5 / 3, 5 / 3])


def test_oov_mean_of_identical(tmp_path):
    t = load_embeddings(vec_file(tmp_path, "2 4\na 1 1 1 1\nb 1 1 1 1\n"))
    assert np.array_equal(t.matrix[OOV], np.ones(4))


def test_fasttext_trailing_space_and_extra_rows(tmp_path):
    t = load_embeddings(vec_file(tmp_path, "2 2\na 1 2 \nb 3 4 \nc 5 6 \n"))
    assert list(t.vocab) == ["a", "b"]


def test_duplicate_keeps_first(tmp_path):
    t = load_embeddings(vec_file(tmp_path, "3 2\na 1 2\na 9 9\nb 3 4\n"))
    assert t.vocab == {"a": 2, "b": 3}
    assert np.array_equal(t.matrix[2], [1, 2])


def test_wrong_width_cites_line(tmp_path):
    with pytest.raises(FormatError) as info:
        load_embeddings(vec_file(tmp_path, "2 4\na 1 2 3 4\nb 1 2 3\n"))
    assert info.value.line == 3


@pytest.mark.parametrize("header", ["4\n", "x 4\n", "2 4 1\n"])
def test_bad_header(tmp_path, header):
    with pytest.raises(FormatError):
        load_embeddings(vec_file(tmp_path, header))


def test_zero_dim(tmp_path):
    with pytest.raises(ArgumentError):
        load_embeddings(vec_file(tmp_path, "0 0\n"))


def test_uniform_oov_is_seeded(tmp_path):
    p = vec_file(tmp_path, "1 3\na 1 2 3\n")
    a = load_embeddings(p, oov="uniform", seed=4)
    b = load_embeddings(p, oov="uniform", seed=4)
    assert np.array_equal(a.matrix, b.matrix)
    assert np.all(np.abs(a.matrix[OOV]) <= 0.25)


@given(st.dictionaries(st.text("abcđêơ", min_size=1, max_size=6), st.lists(st.floats(-5, 5), min_size=3, max_size=3),
                       min_size=1, max_size=20))
def test_loader_total_over_format(tmp_path_factory, vectors):
    p = tmp_path_factory.mktemp("h") / "e.vec"
    write_embeddings(p, vectors)
    t = load_embeddings(p)
    assert t.matrix.shape == (len(vectors) + 2, 3)
    for tok, vec in vectors.items():
        assert np.array_equal(t.matrix[t.vocab[tok]], vec)


@pytest.fixture
def small(tmp_path):
    return load_embeddings(vec_file(tmp_path, "2 2\ntốt 1 0\nquá 0 1\n"))


def test_encode_basic(small):
    seq = encode_sequence(["tốt", "quá"], small, 4)
    assert seq.indices == (2, 3, PAD, PAD) and seq.true_length == 2


def test_encode_oov(small):
    assert encode_sequence(["zzzz"], small, 3).indices == (OOV, PAD, PAD)


def test_encode_truncates_tail(small):
    seq = encode_sequence(["tốt"] * 6 + ["quá"] * 4, small, 4)
    assert seq.indices == (2, 2, 2, 2) and seq.true_length == 4


def test_encode_never_out_of_range(small):
    seq = encode_sequence(["a", "tốt", "b", "quá"], small, 8)
    assert max(seq.indices) < small.matrix.shape[0]


def test_encode_bad_max_len(small):
    with pytest.raises(ArgumentError):
        encode_sequence(["tốt"], small, 0)


def lengths_to_tokens(lengths):
    return [["w"] * n for n in lengths]


def test_suggest_max_len_examples():
    assert suggest_max_len(lengths_to_tokens([2, 2, 2, 2]), 0.3) == 2
    assert suggest_max_len(lengths_to_tokens([1, 2, 3, 4, 100]), 0.8) == 4
    assert suggest_max_len(lengths_to_tokens([3, 7]), 1.0) == 7
    assert suggest_max_len(lengths_to_tokens([0, 0]), 0.5) == 1


@given(st.lists(st.integers(0, 50), min_size=1, max_size=40), st.floats(0.01, 1.0))
def test_suggest_max_len_is_smallest_cover(lengths, p):
    L = suggest_max_len(lengths_to_tokens(lengths), p)
    covered = lambda x: sum(n <= x for n in lengths) >= p * len(lengths) - 1e-9
    assert covered(L)
    assert L == 1 or not covered(L - 1)


@pytest.mark.parametrize("data,p", [([], 0.5), ([["a"]], 0.0), ([["a"]], 1.5)])
def test_suggest_max_len_errors(data, p):
    with pytest.raises(ArgumentError):
        suggest_max_len(data, p)
