# Keyed PRF units for tests/covert.rs, computed from the byte layout.
import hashlib
import struct


def unit(key, hyp, t, speaker, j):
    msg = b"covert-lab/prf/v1" + struct.pack(">I", len(key)) + key + bytes([hyp])
    msg += struct.pack(">QBQ", t, speaker, j)
    top = int.from_bytes(hashlib.sha256(msg).digest()[:8], "big") >> 11
    return (top + 0.5) / 2**53


key = bytes(range(16))
for hyp, t, s, j in [(0xFF, 0, 0, 0), (0, 3, 1, 7), (1, 3, 1, 7), (0xFF, 2**40, 1, 5)]:
    print(hyp, t, s, j, repr(unit(key, hyp, t, s, j)))
