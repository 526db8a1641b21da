from .microqr import (
    ALNUM, CapacityExceeded, ChecksumMismatch, DecodedPayload, EcLevel,
    FormatInfoUnreadable, InvalidCombination, InvalidPayload, MicroQrError,
    MicroQrVersion, Mode, Payload, SymbolMatrix, UncorrectableCodeword,
    auto_version, codeword_modules, decode, ec_capacity, encode, fits,
    max_length,
)
from .rs import TooManyErrors, rs_correct, rs_decode, rs_encode
