import random

import numpy as np
import pytest

from qrsl.codec import ALNUM, EcLevel, MicroQrVersion, Mode, Payload, max_length
from qrsl.codec.microqr import EC_TABLE

COMBOS = sorted(EC_TABLE, key=lambda k: EC_TABLE[k][3])  # (version, ec) by symbol number

_ALPHABETS = {
    Mode.Numeric: "0123456789",
    Mode.Alphanumeric: ALNUM,
    Mode.Byte: "".join(chr(c) for c in range(256)),
}


def random_payload(rng, version, ec):
    """A random payload that fits (version, ec), any allowed mode."""
    modes = [m for m in Mode if max_length(m, version, ec) > 0]
    mode = modes[rng.randrange(len(modes))]
    n = rng.randint(1, max_length(mode, version, ec))
    text = "".join(rng.choice(_ALPHABETS[mode]) for _ in range(n))
    return Payload(mode, text.encode("latin-1"))


@pytest.fixture
def pyrng():
    return random.Random(1234)


@pytest.fixture
def nprng():
    return np.random.default_rng(1234)
