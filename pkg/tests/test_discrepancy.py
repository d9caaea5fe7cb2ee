"""Discrepancy: closed form vs brute force, filter behavior, calibration."""

import random
from fractions import Fraction

import pytest

from fsdim.base_arith import DigitWord
from fsdim.blockstats import occurrence_count
from fsdim.discrepancy import (
    DiscrepancyParams,
    FilterGiveUp,
    WordTooShortError,
    calibrate,
    discrepancy_statistic,
    low_discrepancy_test,
    sample_good_string,
    star_discrepancy,
    star_discrepancy_brute,
)


def params_for_tests() -> DiscrepancyParams:
    return DiscrepancyParams.default()


# ---------------------------------------------------------------------------
# Star discrepancy


def test_star_discrepancy_frozen_examples():
    assert star_discrepancy([Fraction(0)]) == 1.0
    assert star_discrepancy([Fraction(0), Fraction(1, 2)]) == 0.5
    # Perfectly centered grid {1/2n, 3/2n, ...} attains the lower bound 1/2n.
    n = 10
    grid = [Fraction(2 * i + 1, 2 * n) for i in range(n)]
    assert star_discrepancy(grid) == pytest.approx(1 / (2 * n), abs=1e-15)


def test_star_discrepancy_validation():
    with pytest.raises(ValueError):
        star_discrepancy([])
    with pytest.raises(ValueError):
        star_discrepancy([1.5])
    with pytest.raises(ValueError):
        star_discrepancy([-0.1])


def test_star_discrepancy_equals_brute_force():
    rng = random.Random(77)
    for _ in range(150):
        n = rng.randrange(1, 60)
        pts = [rng.random() for _ in range(n)]
        assert star_discrepancy(pts) == pytest.approx(
            star_discrepancy_brute(pts), abs=1e-12
        )
    # Ties and endpoint values
    for pts in ([0.0, 0.0, 1.0], [0.25] * 5, [0.0], [1.0], [0.5, 0.5, 0.25]):
        assert star_discrepancy(pts) == pytest.approx(
            star_discrepancy_brute(pts), abs=1e-12
        )


# ---------------------------------------------------------------------------
# Low-discrepancy filter


def test_constant_word_fails():
    word = DigitWord(2, (0,) * 400)
    assert not low_discrepancy_test(word, params_for_tests())


def test_word_too_short_raises():
    with pytest.raises(WordTooShortError):
        low_discrepancy_test(DigitWord(2, (0, 1) * 25), params_for_tests())


def test_filter_deviations_match_occurrence_count():
    # The streaming scan sees exactly the counts occurrence_count reports.
    rng = random.Random(5)
    word = DigitWord(2, tuple(rng.randrange(2) for _ in range(120)))
    params = params_for_tests()
    c = params.c_for(2)
    import math

    violated = False
    for l in (1, 2, 3):
        blocks = [
            DigitWord(2, tuple((k >> i) & 1 for i in reversed(range(l))))
            for k in range(2**l)
        ]
        for n in range(50, len(word) - l + 1):
            threshold = c * math.sqrt(math.log(math.log(n))) / math.sqrt(n)
            for z in blocks:
                dev = abs(occurrence_count(z, word.prefix(n)) / n - 2**-l)
                if dev >= threshold:
                    violated = True
    assert low_discrepancy_test(word, params) == (not violated)


def test_statistic_is_exact_pass_boundary():
    rng = random.Random(21)
    word = DigitWord(2, tuple(rng.randrange(2) for _ in range(300)))
    stat = discrepancy_statistic(word, 50, 6)
    below = DiscrepancyParams({2: stat * 0.999}, {2: 50})
    above = DiscrepancyParams({2: stat * 1.001}, {2: 50})
    assert not low_discrepancy_test(word, below)
    assert low_discrepancy_test(word, above)


def test_sample_good_string_deterministic_and_passing():
    params = params_for_tests()
    w1 = sample_good_string(2, 200, 123, params)
    w2 = sample_good_string(2, 200, 123, params)
    assert w1 == w2
    assert low_discrepancy_test(w1, params)


def test_sample_good_string_gives_up():
    # An absurdly small C admits no word at all.
    params = DiscrepancyParams({2: 1e-9}, {2: 50})
    with pytest.raises(FilterGiveUp):
        sample_good_string(2, 100, 0, params, max_attempts=5)


# ---------------------------------------------------------------------------
# Calibration and config persistence


def test_calibration_density_band():
    # Small but honest recalibration: pass rate on fresh words in [0.5, 0.95].
    c = calibrate(2, length=500, samples=60, seed=1)
    params = DiscrepancyParams({2: c}, {2: 50})
    rng = random.Random(999)
    passed = sum(
        low_discrepancy_test(
            DigitWord(2, tuple(rng.randrange(2) for _ in range(500))), params
        )
        for _ in range(100)
    )
    assert 0.5 <= passed / 100 <= 0.95


def test_config_roundtrip(tmp_path):
    params = DiscrepancyParams({2: 0.97, 4: 0.87}, {2: 50, 4: 60}, z_len_cap=5)
    path = tmp_path / "filter.cfg"
    params.write_config(path)
    text = path.read_text()
    assert "[discrepancy]" in text and "C_2" in text and "N_4" in text
    back = DiscrepancyParams.read_config(path)
    assert back.c == {2: 0.97, 4: 0.87}
    assert back.n_min == {2: 50, 4: 60}
    assert back.z_len_cap == 5


def test_config_rejects_garbage(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[discrepancy]\nQ_2 = 1\n")
    with pytest.raises(ValueError):
        DiscrepancyParams.read_config(path)
    path.write_text("[other]\nC_2 = 1\n")
    with pytest.raises(ValueError):
        DiscrepancyParams.read_config(path)


def test_missing_base_is_an_error():
    params = DiscrepancyParams({2: 1.0}, {2: 50})
    with pytest.raises(ValueError):
        params.c_for(7)
