import numpy as np
import pytest

from rrpo import keyvalue
from rrpo.errors import InvalidInputError


def test_parse_comments_and_blanks():
    kv = keyvalue.parse("# header\n\na = 1\nb.c = x y z  # trailing\n")
    assert kv == {"a": "1", "b.c": "x y z"}


def test_duplicate_and_malformed():
    with pytest.raises(InvalidInputError):
        keyvalue.parse("a = 1\na = 2\n")
    with pytest.raises(InvalidInputError):
        keyvalue.parse("no equals sign\n")


def test_dump_round_trip():
    arr = np.array([0.1, 1 / 3, -2.5e-9])
    text = keyvalue.dump({"x": arr, "flag": True, "n": 3, "g": 0.99}, header="demo")
    kv = keyvalue.parse(text)
    assert np.array_equal(keyvalue.as_float_array(kv["x"], 3), arr)
    assert keyvalue.as_bool(kv["flag"]) is True
    assert float(kv["g"]) == 0.99


def test_array_size_check():
    with pytest.raises(InvalidInputError):
        keyvalue.as_float_array("1 2", 3, "x")
    with pytest.raises(InvalidInputError):
        keyvalue.as_bool("maybe", "flag")
