import pytest

from spheregate.exceptions import ModelError
from spheregate.utils import bits_label, parse_digits


def test_parse_digits_accepts_label_forms():
    assert parse_digits("220") == (2, 2, 0)
    assert parse_digits("2 2 0") == (2, 2, 0)
    assert parse_digits("|011⟩") == (0, 1, 1)
    assert parse_digits("|011>") == (0, 1, 1)
    assert parse_digits([1, 0, 2]) == (1, 0, 2)


def test_parse_digits_rejects_bad_labels():
    with pytest.raises(ModelError):
        parse_digits("013")
    with pytest.raises(ModelError):
        parse_digits("abc")
    with pytest.raises(ModelError):
        parse_digits("")


def test_labels():
    assert bits_label((1, 1, 0)) == "110"
    assert bits_label([2, 0]) == "20"
