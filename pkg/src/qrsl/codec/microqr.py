"""Micro QR (M1-M4) symbol encoding and decoding at module-grid level.

Symbology constants follow ISO/IEC 18004 (Micro QR clauses). Kanji mode,
ECI and structured append are not supported.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .rs import TooManyErrors, rs_correct, rs_parity


class MicroQrError(ValueError):
    pass


class CapacityExceeded(MicroQrError):
    pass


class InvalidCombination(MicroQrError):
    pass


class InvalidPayload(MicroQrError):
    pass


class FormatInfoUnreadable(MicroQrError):
    pass


class UncorrectableCodeword(MicroQrError):
    pass


class ChecksumMismatch(MicroQrError):
    pass


class MicroQrVersion(enum.Enum):
    M1 = 1
    M2 = 2
    M3 = 3
    M4 = 4

    @property
    def side(self):
        return 9 + 2 * self.value

    @classmethod
    def from_side(cls, side):
        for v in cls:
            if v.side == side:
                return v
        raise ValueError(f"no Micro QR version has side {side}")


class EcLevel(enum.Enum):
    DetectOnly = "DetectOnly"
    L = "L"
    M = "M"
    Q = "Q"


class Mode(enum.Enum):
    Numeric = 0
    Alphanumeric = 1
    Byte = 2


ALNUM = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ $%*+-./:"
_ALNUM_INDEX = {c: i for i, c in enumerate(ALNUM)}

V = MicroQrVersion
E = EcLevel

# (version, ec) -> (data bits, ec codewords, correctable codewords, symbol number)
EC_TABLE = {
    (V.M1, E.DetectOnly): (20, 2, 0, 0),
    (V.M2, E.L): (40, 5, 2, 1),
    (V.M2, E.M): (32, 6, 3, 2),
    (V.M3, E.L): (84, 6, 2, 3),
    (V.M3, E.M): (68, 8, 4, 4),
    (V.M4, E.L): (128, 8, 3, 5),
    (V.M4, E.M): (112, 10, 5, 6),
    (V.M4, E.Q): (80, 14, 7, 7),
}
_BY_SYMBOL_NUMBER = {row[3]: key for key, row in EC_TABLE.items()}

_COUNT_BITS = {
    Mode.Numeric: (3, 4, 5, 6),
    Mode.Alphanumeric: (None, 3, 4, 5),
    Mode.Byte: (None, None, 4, 5),
}
_KANJI_COUNT_BITS = (None, None, 3, 4)

FORMAT_MASK = 0x4445
FORMAT_GENERATOR = 0x537


def ec_capacity(version, ec):
    """Number of codeword errors the symbol is specified to correct."""
    return _lookup(version, ec)[2]


def _lookup(version, ec):
    version = MicroQrVersion[version] if isinstance(version, str) else version
    ec = EcLevel[ec] if isinstance(ec, str) else ec
    try:
        return EC_TABLE[(version, ec)]
    except KeyError:
        raise InvalidCombination(f"{ec.name} not allowed for {version.name}") from None


def _coerce(version, ec):
    version = MicroQrVersion[version] if isinstance(version, str) else version
    ec = EcLevel[ec] if isinstance(ec, str) else ec
    return version, ec


@dataclass(frozen=True)
class Payload:
    mode: Mode
    data: bytes

    def __post_init__(self):
        if not self.data:
            raise InvalidPayload("payload is empty")
        if self.mode is Mode.Numeric and not all(48 <= b <= 57 for b in self.data):
            raise InvalidPayload("numeric payload must contain digits only")
        if self.mode is Mode.Alphanumeric and not all(chr(b) in _ALNUM_INDEX for b in self.data):
            raise InvalidPayload("payload has characters outside the alphanumeric set")

    @classmethod
    def auto(cls, text):
        """Pick the most compact mode that can represent ``text``."""
        data = text.encode("utf-8") if isinstance(text, str) else bytes(text)
        if data and all(48 <= b <= 57 for b in data):
            return cls(Mode.Numeric, data)
        if data and all(chr(b) in _ALNUM_INDEX for b in data):
            return cls(Mode.Alphanumeric, data)
        return cls(Mode.Byte, data)

    @property
    def text(self):
        return self.data.decode("latin-1")


@dataclass(frozen=True, eq=False)
class SymbolMatrix:
    modules: np.ndarray
    side: int = field(init=False)

    def __post_init__(self):
        m = np.array(self.modules, dtype=bool)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (11, 13, 15, 17):
            raise ValueError(f"bad symbol shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "modules", m)
        object.__setattr__(self, "side", m.shape[0])

    def __eq__(self, other):
        return isinstance(other, SymbolMatrix) and np.array_equal(self.modules, other.modules)

    def __hash__(self):
        return hash(self.modules.tobytes())

    @property
    def version(self):
        return MicroQrVersion.from_side(self.side)

    def to_text(self):
        rows = ["".join("1" if v else "0" for v in row) for row in self.modules]
        return f"{self.side}\n" + "\n".join(rows) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = [ln.strip() for ln in text.strip().splitlines()]
        side = int(lines[0])
        rows = lines[1:]
        if len(rows) != side or any(len(r) != side or set(r) - {"0", "1"} for r in rows):
            raise ValueError("malformed symbol text")
        return cls(np.array([[c == "1" for c in r] for r in rows]))


@dataclass(frozen=True)
class DecodedPayload:
    text: bytes
    version: MicroQrVersion
    ec: EcLevel
    mask: int
    corrected_errors: int
    mode: Mode | None = None

    def __str__(self):
        return self.text.decode("latin-1")


# --- bit helpers -------------------------------------------------------------

class _BitWriter:
    def __init__(self):
        self.bits = []

    def put(self, value, n):
        for i in range(n - 1, -1, -1):
            self.bits.append((value >> i) & 1)

    def __len__(self):
        return len(self.bits)


def _segment_bits(payload, version):
    vi = version.value
    count_bits = _COUNT_BITS[payload.mode][vi - 1]
    if count_bits is None:
        raise InvalidCombination(f"{payload.mode.name} mode unavailable in {version.name}")
    w = _BitWriter()
    w.put(payload.mode.value, vi - 1)
    n = len(payload.data)
    if n >= 1 << count_bits:
        raise CapacityExceeded(f"{n} characters exceed the count field of {version.name}")
    w.put(n, count_bits)
    data = payload.data
    if payload.mode is Mode.Numeric:
        for i in range(0, n, 3):
            chunk = data[i:i + 3]
            w.put(int(chunk), {3: 10, 2: 7, 1: 4}[len(chunk)])
    elif payload.mode is Mode.Alphanumeric:
        for i in range(0, n - 1, 2):
            w.put(45 * _ALNUM_INDEX[chr(data[i])] + _ALNUM_INDEX[chr(data[i + 1])], 11)
        if n % 2:
            w.put(_ALNUM_INDEX[chr(data[-1])], 6)
    else:
        for b in data:
            w.put(b, 8)
    return w.bits


def segment_length(payload, version):
    """Bits used by ``payload`` as one segment in ``version`` (no terminator)."""
    return len(_segment_bits(payload, version))


def fits(payload, version, ec):
    version, ec = _coerce(version, ec)
    data_bits = _lookup(version, ec)[0]
    try:
        return segment_length(payload, version) <= data_bits
    except MicroQrError:
        return False


def _data_codewords(bits, version, ec):
    data_bits = _lookup(version, ec)[0]
    if len(bits) > data_bits:
        raise CapacityExceeded(f"{len(bits)} data bits exceed {data_bits} for {version.name}-{ec.name}")
    bits = list(bits)
    term = 3 + 2 * (version.value - 1)
    bits += [0] * min(term, data_bits - len(bits))
    half = data_bits % 8 == 4
    full_bits = data_bits - 4 if half else data_bits
    if len(bits) < full_bits:
        bits += [0] * ((-len(bits)) % 8)
    pad = (0xEC, 0x11)
    i = 0
    while len(bits) + 8 <= full_bits:
        bits += [(pad[i % 2] >> k) & 1 for k in range(7, -1, -1)]
        i += 1
    bits += [0] * (data_bits - len(bits))
    words = []
    for j in range(0, full_bits, 8):
        words.append(int("".join(map(str, bits[j:j + 8])), 2))
    if half:
        words.append(int("".join(map(str, bits[full_bits:])), 2) << 4)
    return words


# --- matrix layout -----------------------------------------------------------

def _function_mask(side):
    f = np.zeros((side, side), dtype=bool)
    f[:8, :8] = True  # finder + separator
    f[0, :] = True  # timing row
    f[:, 0] = True  # timing column
    f[8, 1:9] = True  # format info
    f[1:9, 8] = True
    return f


def _function_patterns(side):
    m = np.zeros((side, side), dtype=bool)
    m[0:7, 0:7] = True
    m[1:6, 1:6] = False
    m[2:5, 2:5] = True
    for k in range(8, side):
        m[0, k] = k % 2 == 0
        m[k, 0] = k % 2 == 0
    return m


def _placement_order(side):
    """Module coordinates in codeword-bit placement order."""
    func = _function_mask(side)
    order = []
    upward = True
    right = side - 1
    while right >= 1:
        rows = range(side - 1, -1, -1) if upward else range(side)
        for r in rows:
            for c in (right, right - 1):
                if not func[r, c]:
                    order.append((r, c))
        upward = not upward
        right -= 2
    return order


_ORDER_CACHE = {}


def placement_order(side):
    if side not in _ORDER_CACHE:
        _ORDER_CACHE[side] = _placement_order(side)
    return _ORDER_CACHE[side]


def mask_grid(mask, side):
    i, j = np.indices((side, side))
    if mask == 0:
        g = i % 2 == 0
    elif mask == 1:
        g = (i // 2 + j // 3) % 2 == 0
    elif mask == 2:
        g = ((i * j) % 2 + (i * j) % 3) % 2 == 0
    elif mask == 3:
        g = ((i + j) % 2 + (i * j) % 3) % 2 == 0
    else:
        raise ValueError(f"mask must be 0..3, got {mask}")
    return g & ~_function_mask(side)


def format_bits(symbol_number, mask):
    data = (symbol_number << 2) | mask
    rem = data << 10
    for shift in range(4, -1, -1):
        if rem & (1 << (shift + 10)):
            rem ^= FORMAT_GENERATOR << shift
    return ((data << 10) | rem) ^ FORMAT_MASK


_FORMAT_CODES = {format_bits(s, m): (s, m) for s in range(8) for m in range(4)}


def _format_positions():
    """(row, col) for format bits 0..14."""
    pos = [None] * 15
    for i in range(8):
        pos[i] = (i + 1, 8)  # column 8, rows 1..8
    for i in range(7):
        pos[14 - i] = (8, i + 1)  # row 8, columns 1..7
    return pos


FORMAT_POSITIONS = _format_positions()


def mask_score(m):
    """Micro QR mask evaluation score; higher is better."""
    sum1 = int(m[1:, -1].sum())
    sum2 = int(m[-1, 1:].sum())
    if sum1 <= sum2:
        return sum1 * 16 + sum2
    return sum2 * 16 + sum1


def _bits_of(words, version, ec):
    data_bits, ec_words = _lookup(version, ec)[:2]
    n_data = len(words) - ec_words
    bits = []
    for idx, w in enumerate(words):
        width = 4 if (idx == n_data - 1 and data_bits % 8 == 4) else 8
        top = 7
        for k in range(width):
            bits.append((w >> (top - k)) & 1)
    return bits


def encode(payload, version, ec, mask=None):
    """Encode ``payload`` into a Micro QR symbol.

    ``payload`` may be a :class:`Payload` or a string (mode chosen
    automatically). With ``mask=None`` the best-scoring mask is used,
    lowest index on ties.
    """
    version, ec = _coerce(version, ec)
    data_bits, ec_words, _, symbol_number = _lookup(version, ec)
    if not isinstance(payload, Payload):
        payload = Payload.auto(payload)
    if mask is not None and mask not in range(4):
        raise ValueError(f"mask must be 0..3, got {mask}")

    bits = _segment_bits(payload, version)
    data = _data_codewords(bits, version, ec)
    words = data + rs_parity(data, ec_words)
    stream = _bits_of(words, version, ec)

    side = version.side
    order = placement_order(side)
    assert len(order) == len(stream), (len(order), len(stream))
    base = _function_patterns(side)
    for (r, c), b in zip(order, stream):
        base[r, c] = bool(b)

    candidates = [mask] if mask is not None else range(4)
    best = None
    for mk in candidates:
        m = base ^ mask_grid(mk, side)
        fmt = format_bits(symbol_number, mk)
        for k, (r, c) in enumerate(FORMAT_POSITIONS):
            m[r, c] = bool((fmt >> k) & 1)
        score = mask_score(m)
        if best is None or score > best[0]:
            best = (score, m)
    return SymbolMatrix(best[1])


# --- decoding ----------------------------------------------------------------

def read_format(modules):
    raw = 0
    for k, (r, c) in enumerate(FORMAT_POSITIONS):
        if modules[r, c]:
            raw |= 1 << k
    best = None
    for code, info in _FORMAT_CODES.items():
        d = bin(code ^ raw).count("1")
        if best is None or d < best[0]:
            best = (d, info)
    if best[0] > 3:
        raise FormatInfoUnreadable(f"format bits {raw:015b} too far from any valid code")
    return best[1]


class _BitReader:
    def __init__(self, bits):
        self.bits = bits
        self.pos = 0

    def remaining(self):
        return len(self.bits) - self.pos

    def get(self, n):
        if n > self.remaining():
            raise ChecksumMismatch("bit stream ended inside a segment")
        v = 0
        for b in self.bits[self.pos:self.pos + n]:
            v = (v << 1) | b
        self.pos += n
        return v


def _parse_segments(bits, version):
    vi = version.value
    term = 3 + 2 * (vi - 1)
    rd = _BitReader(bits)
    out = bytearray()
    modes = []
    while rd.remaining() > 0:
        look = bits[rd.pos:rd.pos + term]
        if not any(look):
            break
        mode_val = rd.get(vi - 1)
        if mode_val == 3:
            raise ChecksumMismatch("kanji segments are not supported")
        try:
            mode = Mode(mode_val)
        except ValueError:
            raise ChecksumMismatch(f"invalid mode indicator {mode_val}") from None
        cbits = _COUNT_BITS[mode][vi - 1]
        if cbits is None:
            raise ChecksumMismatch(f"{mode.name} not valid in {version.name}")
        n = rd.get(cbits)
        if n == 0:
            raise ChecksumMismatch("empty segment")
        if mode is Mode.Numeric:
            left = n
            while left > 0:
                take = min(3, left)
                v = rd.get({3: 10, 2: 7, 1: 4}[take])
                if v >= 10 ** take:
                    raise ChecksumMismatch("numeric group out of range")
                out += str(v).zfill(take).encode()
                left -= take
        elif mode is Mode.Alphanumeric:
            for _ in range(n // 2):
                v = rd.get(11)
                if v >= 45 * 45:
                    raise ChecksumMismatch("alphanumeric pair out of range")
                out += (ALNUM[v // 45] + ALNUM[v % 45]).encode()
            if n % 2:
                v = rd.get(6)
                if v >= 45:
                    raise ChecksumMismatch("alphanumeric char out of range")
                out += ALNUM[v].encode()
        else:
            for _ in range(n):
                out.append(rd.get(8))
        modes.append(mode)
    if not out:
        raise ChecksumMismatch("symbol carries no data")
    return bytes(out), (modes[0] if len(set(modes)) == 1 else None)


def decode(symbol):
    """Decode a :class:`SymbolMatrix` (or boolean array).

    Raises FormatInfoUnreadable, UncorrectableCodeword or ChecksumMismatch.
    """
    if not isinstance(symbol, SymbolMatrix):
        symbol = SymbolMatrix(symbol)
    m = symbol.modules
    version = symbol.version
    symbol_number, mask = read_format(m)
    fmt_version, ec = _BY_SYMBOL_NUMBER[symbol_number]
    if fmt_version is not version:
        raise FormatInfoUnreadable(
            f"format says {fmt_version.name} but symbol side is {symbol.side}")
    data_bits, ec_words, capacity, _ = _lookup(version, ec)

    unmasked = m ^ mask_grid(mask, symbol.side)
    stream = [int(unmasked[r, c]) for r, c in placement_order(symbol.side)]
    half = data_bits % 8 == 4
    n_data = (data_bits + 4) // 8 if half else data_bits // 8
    words = []
    pos = 0
    for idx in range(n_data + ec_words):
        width = 4 if (half and idx == n_data - 1) else 8
        v = 0
        for b in stream[pos:pos + width]:
            v = (v << 1) | b
        pos += width
        words.append(v << 4 if width == 4 else v)

    try:
        corrected, positions = rs_correct(words, ec_words, max_errors=capacity)
    except TooManyErrors as exc:
        raise UncorrectableCodeword(str(exc)) from None
    if half and corrected[n_data - 1] & 0x0F:
        raise ChecksumMismatch("correction touched the unused half codeword")

    data = corrected[:n_data]
    bits = []
    for idx, w in enumerate(data):
        width = 4 if (half and idx == n_data - 1) else 8
        bits.extend((w >> (7 - k)) & 1 for k in range(width))
    text, mode = _parse_segments(bits, version)
    return DecodedPayload(text, version, ec, mask, len(positions), mode)


def codeword_modules(side, ec=None):
    """Module coordinates grouped per codeword, in codeword order.

    Needs the EC level because M1/M3 have a 4-bit final data codeword.
    """
    version = MicroQrVersion.from_side(side)
    if ec is None:
        ec = EcLevel.DetectOnly if version is V.M1 else EcLevel.L
    data_bits, ec_words = _lookup(version, ec)[:2]
    half = data_bits % 8 == 4
    n_data = (data_bits + 4) // 8 if half else data_bits // 8
    order = placement_order(side)
    groups = []
    pos = 0
    for idx in range(n_data + ec_words):
        width = 4 if (half and idx == n_data - 1) else 8
        groups.append(order[pos:pos + width])
        pos += width
    return groups


def max_length(mode, version, ec):
    """Largest character count of ``mode`` that fits (version, ec)."""
    version, ec = _coerce(version, ec)
    data_bits = _lookup(version, ec)[0]
    if _COUNT_BITS[mode][version.value - 1] is None:
        return 0
    sample = {Mode.Numeric: b"1", Mode.Alphanumeric: b"A", Mode.Byte: b"a"}[mode]
    n = 0
    while True:
        p = Payload(mode, sample * (n + 1))
        try:
            if segment_length(p, version) > data_bits:
                return n
        except CapacityExceeded:
            return n
        n += 1


def auto_version(payload, ec=EcLevel.L):
    """Smallest of M2..M4 that holds ``payload`` at level ``ec``."""
    if not isinstance(payload, Payload):
        payload = Payload.auto(payload)
    ec = EcLevel[ec] if isinstance(ec, str) else ec
    for version in (V.M2, V.M3, V.M4):
        if (version, ec) in EC_TABLE and fits(payload, version, ec):
            return version
    raise CapacityExceeded("payload does not fit any Micro QR version at this level")
