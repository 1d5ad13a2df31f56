from __future__ import annotations

import re
from typing import Sequence, Tuple, Union

from .exceptions import ModelError

# Accepts "220", "2 2 0", "|011>", "|011⟩"
_KET_RE = re.compile(r"^\|?\s*([0-9](?:[\s,]*[0-9])*)\s*(?:>|⟩)?$")


def parse_digits(label: Union[str, Sequence[int]]) -> Tuple[int, ...]:
    """Turn a per-atom label like '2 0 1' or '|201⟩' into a digit tuple.

    Digits must be 0, 1 or 2 (2 is the atom's Rydberg level).
    """
    if isinstance(label, str):
        m = _KET_RE.match(label.strip())
        if not m:
            raise ModelError(f"cannot parse basis label {label!r}")
        digits = tuple(int(ch) for ch in m.group(1) if ch.isdigit())
    else:
        digits = tuple(int(d) for d in label)
    if not digits:
        raise ModelError("empty basis label")
    bad = [d for d in digits if d not in (0, 1, 2)]
    if bad:
        raise ModelError(f"invalid digit(s) {bad} in basis label {label!r}")
    return digits


def bits_label(digits: Sequence[int]) -> str:
    return "".join(str(d) for d in digits)
