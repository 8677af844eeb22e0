"""Derivation of independent 64-bit generator seeds per (task, site, block)."""
import numpy as np

BLOCK = 10_000


def stream_seed(master: int, tag: int, site: int, block: int) -> np.uint64:
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=(int(tag), int(site), int(block)))
    return ss.generate_state(1, dtype=np.uint64)[0]


def blocks(n: int, size: int = BLOCK):
    """Split n samples into fixed-size blocks; the split never depends on workers."""
    out = []
    start = 0
    b = 0
    while start < n:
        m = min(size, n - start)
        out.append((b, m))
        start += m
        b += 1
    return out
