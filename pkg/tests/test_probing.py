import numpy as np
import pytest

from ssfeedback.channel import dirichlet_gain
from ssfeedback.errors import DatasetFormatError, DegenerateChannelError, DimensionMismatchError
from ssfeedback.probing import (
    FLOOR_DB,
    Codebook,
    NoiseModel,
    dft_codebook,
    dft_sweep,
    dumps_codebook,
    load_codebook,
    loads_codebook,
    normalize_fingerprint,
    random_codebook,
    read_codebook,
    rsrp_fingerprint,
    save_codebook,
)

QUIET = NoiseModel(enabled=False)


def test_dft_codebook_small():
    book = dft_codebook(2, 1)
    assert book.size == 2
    assert abs(np.vdot(book.beams[:, 0], book.beams[:, 1])) < 1e-15


def test_dft_codebook_norms_and_coherence():
    book = dft_codebook(4, 2)
    assert np.max(np.abs(np.linalg.norm(book.beams, axis=0) - 1)) < 1e-12
    for m in range(book.size - 1):
        c = abs(np.vdot(book.beams[:, m], book.beams[:, m + 1])) ** 2
        assert abs(c - dirichlet_gain(1 / 8, 4)) < 1e-12


def test_codebook_validation():
    with pytest.raises(ValueError):
        Codebook(np.ones((3, 2)))
    with pytest.raises(ValueError):
        Codebook(np.eye(3), "nope")
    with pytest.raises(ValueError):
        dft_codebook(0, 1)


def test_random_codebook_deterministic():
    a, b = random_codebook(8, 5, 3), random_codebook(8, 5, 3)
    assert np.array_equal(a.beams, b.beams) and a.kind == "random"


def test_fingerprint_on_beam_and_orthogonal():
    book = dft_codebook(8, 1)
    fp = rsrp_fingerprint(book.beams[:, 1], book, QUIET)
    assert abs(fp.values_db[1]) < 1e-12
    assert fp.values_db[0] == FLOOR_DB  # exactly orthogonal DFT beams
    fp2 = rsrp_fingerprint(book.beams[:, 1], book, NoiseModel(p_ssb=10.0, enabled=False))
    assert abs(fp2.values_db[1] - 10.0) < 1e-12


def test_fingerprint_noise_statistics():
    book = dft_sweep(8, 4)
    h = np.exp(2j * np.pi * 0.1 * np.arange(8))
    noise = NoiseModel(sigma_b=1.0)
    d = np.array([(lambda f: f.values_db - f.noise_free_db)(rsrp_fingerprint(h, book, noise, s))
                  for s in range(10_000)])
    assert np.all(np.abs(d.std(axis=0) - 1) < 0.05)
    assert np.all(np.abs(d.mean(axis=0)) < 0.05)


def test_fingerprint_phase_blind_and_scaling(rng):
    book = random_codebook(8, 6, 1)
    h = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    base = rsrp_fingerprint(h, book, QUIET).values_db
    np.testing.assert_array_equal(rsrp_fingerprint(np.exp(1.3j) * h, book, QUIET).values_db
                                  .round(12), base.round(12))
    c = 0.37 - 0.2j
    diff = rsrp_fingerprint(c * h, book, QUIET).values_db - base
    np.testing.assert_allclose(diff, 20 * np.log10(abs(c)), atol=1e-10)


def test_fingerprint_seed_independent_without_noise(rng):
    book = random_codebook(8, 6, 1)
    h = rng.standard_normal(8) + 0j
    a = rsrp_fingerprint(h, book, QUIET, 1).values_db
    b = rsrp_fingerprint(h, book, QUIET, 2).values_db
    assert np.array_equal(a, b)


def test_fingerprint_errors():
    book = dft_codebook(4, 1)
    with pytest.raises(DegenerateChannelError):
        rsrp_fingerprint(np.zeros(4), book)
    with pytest.raises(DimensionMismatchError):
        rsrp_fingerprint(np.ones(5), book)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(sigma_b=-1)
    with pytest.raises(ValueError):
        NoiseModel(p_ssb=0)


def test_normalize_fingerprint(rng):
    assert np.all(normalize_fingerprint(np.full(5, 3.0)) == 0)
    r = rng.standard_normal(9) * 7 - 80
    z = normalize_fingerprint(r)
    assert abs(z.mean()) < 1e-12 and abs(z.std() - 1) < 1e-6
    np.testing.assert_allclose(normalize_fingerprint(2.5 * r + 13), z, atol=1e-6)


def test_codebook_roundtrip(tmp_path):
    book = random_codebook(5, 3, 2)
    p = tmp_path / "b.blcb"
    save_codebook(book, p)
    back = load_codebook(p)
    assert np.array_equal(back.beams, book.beams) and back.kind == "random"
    # column-major payload: first complex value after the header is beams[0, 0]
    raw = dumps_codebook(book)
    first = np.frombuffer(raw[14:30], "<f8")
    assert first[0] == book.beams[0, 0].real and first[1] == book.beams[0, 0].imag
    second = np.frombuffer(raw[30:46], "<f8")
    assert second[0] == book.beams[1, 0].real


def test_codebook_format_errors():
    raw = dumps_codebook(dft_codebook(4, 1))
    with pytest.raises(DatasetFormatError):
        loads_codebook(b"BLCX1" + raw[5:])
    with pytest.raises(DatasetFormatError):
        loads_codebook(raw[:-1])
    with pytest.raises(DatasetFormatError):
        loads_codebook(raw + b"\0")
    book, end = read_codebook(b"junk" + raw, 4)
    assert end == 4 + len(raw) and book.size == 4
