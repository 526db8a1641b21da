"""Encode a few object names as Micro QR symbols, damage them, read them back."""
import random

import numpy as np

from qrsl.codec import EcLevel, auto_version, codeword_modules, decode, ec_capacity, encode

# %% smallest symbol that holds each name at level L
for name in ["7", "GP1", "tube", "incubator", "centrifuge-2"]:
    v = auto_version(name, EcLevel.L)
    sym = encode(name, v, EcLevel.L)
    print(f"{name!r:16} -> {v.name}-L, {sym.side}x{sym.side} modules")

# %% what the grid looks like
print()
print(encode("GP1", "M2", "L").to_text())

# %% flip whole codewords until the decoder gives up
rng = random.Random(0)
sym = encode("incubator", "M4", "M")
t = ec_capacity("M4", "M")
groups = codeword_modules(sym.side, "M")
for n_bad in range(t + 3):
    m = sym.modules.copy()
    for w in rng.sample(range(len(groups)), n_bad):
        r, c = groups[w][0]
        m[r, c] = ~m[r, c]
    try:
        out = decode(m)
        msg = f"read {out.text.decode()!r}, corrected {out.corrected_errors}"
    except Exception as e:
        msg = f"rejected ({type(e).__name__})"
    print(f"{n_bad} bad codewords (capacity {t}): {msg}")

# %% mask choice
masks = [decode(encode("incubator", "M3", "L", mask=k)).mask for k in range(4)]
print("\nexplicit masks survive the round trip:", masks)
print("automatic mask:", decode(encode("incubator", "M3", "L")).mask)
