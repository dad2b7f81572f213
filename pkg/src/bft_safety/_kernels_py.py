"""Pure-Python versions of the subset kernels. Same signatures and results as
the compiled ``_kernels`` module; used when the extension is unavailable."""

from array import array


def subset_weights(powers):
    """Total voting power of every member subset, indexed by bitmask."""
    n = len(powers)
    out = array("q", bytes(8 * (1 << n)))
    for mask in range(1, 1 << n):
        low = mask & -mask
        out[mask] = out[mask ^ low] + powers[low.bit_length() - 1]
    return out


def find_bft_violation(quorums, byz_sets):
    """Search quorum pairs (i <= j) and admissible byzantine sets for an
    intersection with no honest member. Returns ``(i, j, k)`` indices of the
    first violation or ``None``."""
    nq = len(quorums)
    nb = len(byz_sets)
    for i in range(nq):
        qi = quorums[i]
        for j in range(i, nq):
            inter = qi & quorums[j]
            for k in range(nb):
                if inter & ~byz_sets[k] == 0:
                    return (i, j, k)
    return None
