"""Reed-Solomon coding over GF(256) with the QR field polynomial 0x11D.

Codewords are sequences of ints, first element = highest-degree coefficient.
The generator polynomial has consecutive roots alpha^0 .. alpha^(nsym-1).
"""

PRIM = 0x11D

EXP = [0] * 512
LOG = [0] * 256


def _init_tables():
    x = 1
    for i in range(255):
        EXP[i] = x
        LOG[x] = i
        x <<= 1
        if x & 0x100:
            x ^= PRIM
    for i in range(255, 512):
        EXP[i] = EXP[i - 255]


_init_tables()


class TooManyErrors(ValueError):
    """The codeword has more errors than the decoder may correct."""


def gf_mul(a, b):
    if a == 0 or b == 0:
        return 0
    return EXP[LOG[a] + LOG[b]]


def gf_div(a, b):
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(256)")
    if a == 0:
        return 0
    return EXP[(LOG[a] - LOG[b]) % 255]


def gf_inv(a):
    return gf_div(1, a)


def gf_pow(a, n):
    if a == 0:
        return 0
    return EXP[(LOG[a] * n) % 255]


def poly_eval(poly, x):
    """Horner evaluation; ``poly`` is highest-degree first."""
    y = 0
    for c in poly:
        y = gf_mul(y, x) ^ c
    return y


def poly_mul(p, q):
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            out[i + j] ^= gf_mul(a, b)
    return out


_GENERATORS = {}


def generator_poly(nsym):
    g = _GENERATORS.get(nsym)
    if g is None:
        g = [1]
        for i in range(nsym):
            g = poly_mul(g, [1, EXP[i]])
        _GENERATORS[nsym] = g
    return g


def rs_parity(data, nsym):
    """Return the ``nsym`` parity bytes for ``data``."""
    gen = generator_poly(nsym)
    rem = list(data) + [0] * nsym
    for i in range(len(data)):
        coef = rem[i]
        if coef:
            for j in range(1, len(gen)):
                rem[i + j] ^= gf_mul(gen[j], coef)
    return rem[len(data):]


def rs_encode(data, parity_len):
    """Systematic encoding: returns ``data`` followed by its parity bytes."""
    data = list(data)
    if parity_len < 1:
        raise ValueError("parity_len must be >= 1")
    if len(data) + parity_len > 255:
        raise ValueError("codeword longer than 255 symbols")
    if any(not 0 <= b < 256 for b in data):
        raise ValueError("data values must be bytes")
    return data + rs_parity(data, parity_len)


def syndromes(codeword, nsym):
    return [poly_eval(codeword, EXP[j]) for j in range(nsym)]


def _berlekamp_massey(synd):
    # Connection polynomial, lowest-degree coefficient first.
    C = [1]
    B = [1]
    L = 0
    m = 1
    b = 1
    for n in range(len(synd)):
        d = synd[n]
        for i in range(1, L + 1):
            d ^= gf_mul(C[i], synd[n - i])
        if d == 0:
            m += 1
            continue
        coef = gf_div(d, b)
        T = list(C)
        need = len(B) + m
        if len(C) < need:
            C = C + [0] * (need - len(C))
        for i, bi in enumerate(B):
            C[i + m] ^= gf_mul(coef, bi)
        if 2 * L <= n:
            L = n + 1 - L
            B = T
            b = d
            m = 1
        else:
            m += 1
    while len(C) > 1 and C[-1] == 0:
        C.pop()
    return C, L


def _eval_low(poly, x):
    y = 0
    for c in reversed(poly):
        y = gf_mul(y, x) ^ c
    return y


def rs_correct(codeword, parity_len, max_errors=None):
    """Correct ``codeword`` in place of a copy.

    Returns ``(corrected, positions)`` where ``positions`` are indices into
    the codeword that were changed. ``max_errors`` caps the number of errors
    the decoder will accept (defaults to ``parity_len // 2``).
    """
    cw = list(codeword)
    n = len(cw)
    if parity_len < 1 or n > 255 or n <= parity_len:
        raise ValueError("invalid codeword/parity length")
    limit = parity_len // 2 if max_errors is None else min(max_errors, parity_len // 2)
    synd = syndromes(cw, parity_len)
    if not any(synd):
        return cw, []
    if limit == 0:
        raise TooManyErrors("errors detected, correction disabled")

    lam, L = _berlekamp_massey(synd)
    if L > limit or len(lam) - 1 != L:
        raise TooManyErrors(f"error locator degree {L} exceeds capacity {limit}")

    # Chien search over the powers actually present in the codeword.
    powers = []
    for p in range(n):
        if _eval_low(lam, EXP[(255 - p) % 255]) == 0:
            powers.append(p)
    if len(powers) != L:
        raise TooManyErrors("error locator roots do not match its degree")

    # Omega(x) = S(x) * Lambda(x) mod x^nsym
    omega = [0] * parity_len
    for i, s in enumerate(synd):
        if s == 0:
            continue
        for j, l in enumerate(lam):
            if i + j < parity_len:
                omega[i + j] ^= gf_mul(s, l)
    dlam = [lam[i] if i % 2 == 1 else 0 for i in range(1, len(lam))]

    positions = []
    for p in powers:
        X = EXP[p]
        Xinv = EXP[(255 - p) % 255]
        denom = _eval_low(dlam, Xinv)
        if denom == 0:
            raise TooManyErrors("singular Forney denominator")
        mag = gf_mul(X, gf_div(_eval_low(omega, Xinv), denom))
        idx = n - 1 - p
        cw[idx] ^= mag
        positions.append(idx)

    if any(syndromes(cw, parity_len)):
        raise TooManyErrors("residual syndrome after correction")
    return cw, sorted(positions)


def rs_decode(codeword, parity_len, max_errors=None):
    """Return the corrected data part of ``codeword``."""
    cw, _ = rs_correct(codeword, parity_len, max_errors)
    return cw[:-parity_len]
