"""Exact arithmetic on [0, 1) and positional digit expansions.

Every point that matters downstream is an exact rational, represented by
``fractions.Fraction``. Digit extraction uses the floor convention
``digit_i(x) = floor(x * b^i) mod b``, which selects the terminating
expansion for base-b rationals (1/2 in base 2 is ``1 0 0 ...``, never
``0 1 1 ...``). All mod-1 reductions happen in integer arithmetic before
any float conversion.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

__all__ = [
    "CylinderInterval",
    "DigitWord",
    "as_unit",
    "digit_at",
    "digits_prefix",
    "frac_of_scaled",
    "in_cylinder",
    "read_digit_file",
    "value_of_word",
    "write_digit_file",
]

Rational = Union[Fraction, int]


def as_unit(x: Rational) -> Fraction:
    """Coerce ``x`` to an exact point of [0, 1), rejecting anything outside."""
    f = Fraction(x)
    if not 0 <= f < 1:
        raise ValueError(f"point {f} lies outside [0, 1)")
    return f


@dataclass(frozen=True)
class DigitWord:
    """Finite word over the digit alphabet {0, ..., base-1}."""

    base: int
    digits: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.base < 2:
            raise ValueError(f"base must be at least 2, got {self.base}")
        for d in self.digits:
            if not 0 <= d < self.base:
                raise ValueError(f"digit {d} out of range for base {self.base}")

    @classmethod
    def from_digits(cls, base: int, digits: Iterable[int]) -> "DigitWord":
        return cls(base, tuple(int(d) for d in digits))

    @classmethod
    def from_string(cls, text: str, base: int) -> "DigitWord":
        """Parse a compact digit string like ``"0211"`` (bases up to 10)."""
        if base > 10:
            raise ValueError("compact strings only support bases up to 10")
        return cls(base, tuple(int(ch) for ch in text))

    def __len__(self) -> int:
        return len(self.digits)

    def __iter__(self) -> Iterator[int]:
        return iter(self.digits)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return DigitWord(self.base, self.digits[item])
        return self.digits[item]

    def prefix(self, n: int) -> "DigitWord":
        return DigitWord(self.base, self.digits[:n])

    def concat(self, other: "DigitWord") -> "DigitWord":
        if other.base != self.base:
            raise ValueError("cannot concatenate words over different bases")
        return DigitWord(self.base, self.digits + other.digits)

    def as_int(self) -> int:
        """The word read as a base-``base`` integer (empty word is 0)."""
        value = 0
        for d in self.digits:
            value = value * self.base + d
        return value


def value_of_word(w: DigitWord) -> Fraction:
    """Exact value sum_i w_i * base^-i of the word's cylinder left endpoint."""
    return Fraction(w.as_int(), w.base ** len(w))


def digit_at(x: Rational, base: int, i: int) -> int:
    """The i-th digit (1-indexed) of x in the given base."""
    f = as_unit(x)
    if base < 2:
        raise ValueError(f"base must be at least 2, got {base}")
    if i < 1:
        raise ValueError(f"digit index must be positive, got {i}")
    return (f.numerator * base**i // f.denominator) % base


def digits_prefix(x: Rational, base: int, n: int) -> DigitWord:
    """The first n digits of x in the given base, by exact long division."""
    f = as_unit(x)
    if base < 2:
        raise ValueError(f"base must be at least 2, got {base}")
    if n < 0:
        raise ValueError(f"prefix length must be nonnegative, got {n}")
    num, den = f.numerator, f.denominator
    if n >= 4096 and den < (1 << 31) and base < (1 << 31):
        return DigitWord(base, tuple(_digits_prefix_fast(num, den, base, n)))
    digits = []
    r = num
    for _ in range(n):
        r *= base
        d, r = divmod(r, den)
        digits.append(d)
    return DigitWord(base, tuple(digits))


def _digits_prefix_fast(num: int, den: int, base: int, n: int) -> list[int]:
    # Vectorized long division: remainders r_i = num * base^(i-1) mod den are
    # computed per chunk from one running remainder; den^2 must fit in int64.
    chunk = 4096
    pow_vec = np.array([pow(base, j, den) for j in range(chunk)], dtype=np.int64)
    out = np.empty(n, dtype=np.int64)
    step = pow(base, chunk, den)
    r = num % den
    i = 0
    while i < n:
        c = min(chunk, n - i)
        rems = (r * pow_vec[:c]) % den
        out[i : i + c] = (rems * base) // den
        r = (r * step) % den
        i += c
    return out.tolist()


@dataclass(frozen=True)
class CylinderInterval:
    """Half-open interval [low, low + width) of reals sharing a digit prefix."""

    word: DigitWord
    low: Fraction
    width: Fraction

    @classmethod
    def of(cls, word: DigitWord) -> "CylinderInterval":
        return cls(word, value_of_word(word), Fraction(1, word.base ** len(word)))


def in_cylinder(x: Rational, w: DigitWord) -> bool:
    """Whether x's expansion starts with w (exact interval membership)."""
    f = as_unit(x)
    cyl = CylinderInterval.of(w)
    return cyl.low <= f < cyl.low + cyl.width


def frac_of_scaled(x: Rational, t: int, u: int, j: int) -> float:
    """Fractional part of t * u^j * x, reduced exactly before the final division.

    The reduction (t * u^j * num) mod den runs in integer arithmetic with a
    modular power, so only the closing division rounds.
    """
    f = as_unit(x)
    if u < 2:
        raise ValueError(f"scale base must be at least 2, got {u}")
    if j < 0:
        raise ValueError(f"exponent must be nonnegative, got {j}")
    den = f.denominator
    r = (t * pow(u, j, den) * f.numerator) % den
    return r / den


_TOKENS_PER_LINE = 64


def write_digit_file(path: Union[str, os.PathLike], word: DigitWord) -> None:
    """Write a digit file: ``base=<b>`` then whitespace-separated digit tokens."""
    lines = [f"base={word.base}"]
    toks = [str(d) for d in word.digits]
    for i in range(0, len(toks), _TOKENS_PER_LINE):
        lines.append(" ".join(toks[i : i + _TOKENS_PER_LINE]))
    payload = "\n".join(lines) + "\n"
    # Atomic replace: readers never observe a half-written file.
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_digit_file(path: Union[str, os.PathLike]) -> DigitWord:
    """Parse a digit file written by :func:`write_digit_file`."""
    with open(path, "r") as fh:
        header = fh.readline().strip()
        if not header.startswith("base="):
            raise ValueError(f"{path}: first line must be 'base=<b>', got {header!r}")
        try:
            base = int(header[len("base=") :])
        except ValueError:
            raise ValueError(f"{path}: malformed base declaration {header!r}") from None
        try:
            digits = tuple(int(tok) for tok in fh.read().split())
        except ValueError:
            raise ValueError(f"{path}: non-integer digit token") from None
    return DigitWord(base, digits)
