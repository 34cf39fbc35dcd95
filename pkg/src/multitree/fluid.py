"""Fixed-point fluid amounts.

Real traffic is tracked in integer quanta of 2**-24 chunk so that queue
accounting is exact: sums, splits and the closed-form backlog formula agree
to the last unit regardless of run length.
"""

QBITS = 24
QUANTUM = 1 << QBITS


def to_quanta(chunks: float) -> int:
    return int(round(chunks * QUANTUM))


def to_chunks(quanta):
    """Works on ints and numpy integer arrays alike."""
    return quanta / QUANTUM
