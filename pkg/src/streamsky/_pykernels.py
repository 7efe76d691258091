"""Pure-Python implementations of the numeric kernels.

Every function here has a twin with the same signature in ``_ckernels``.
These versions work for any modulus; the compiled ones require p < 2**64.
"""

BACKEND = "python"

LEAF = 0
GATE = 1
MARKER_BASE = 128


def mulmod(a, b, p):
    return a * b % p


def powmod(base, e, p):
    return pow(base, e, p)


def invmod(a, p):
    a %= p
    if a == 0:
        raise ZeroDivisionError("0 has no inverse mod p")
    return pow(a, -1, p)


def scale_mod(values, s, p):
    return [v * s % p for v in values]


def sum_mod(values, p):
    return sum(values) % p


def dot_mod(a, b, p):
    if len(a) != len(b):
        raise ValueError("length mismatch")
    acc = 0
    for x, y in zip(a, b):
        acc += x * y
    return acc % p


def lagrange_at_zero(indices, p):
    """Coefficients c_i with sum(c_i * q(i)) == q(0) for deg q < len(indices)."""
    out = []
    for i in indices:
        num = 1
        den = 1
        for j in indices:
            if j == i:
                continue
            num = num * (-j) % p
            den = den * (i - j) % p
        out.append(num * pow(den, -1, p) % p)
    return out


def window_blinds(r, beta, start, count, p):
    """Blind factors 2**ceil(k/beta) * r[k % beta] mod p for k in [start, start+count)."""
    out = []
    for k in range(start, start + count):
        ce = -(-k // beta)
        out.append(pow(2, ce, p) * r[k % beta] % p)
    return out


def _has_attr(code, k, width):
    if code < MARKER_BASE:
        pos = code >> 1
        if pos >= width:
            return False
        return ((k >> pos) & 1) == (code & 1)
    m = 4 << (code - MARKER_BASE)
    if m >= width:
        return False
    return k >> m != 0


def accepts_batch(flat, keys, width):
    """Evaluate a post-order flattened threshold tree against each key.

    ``flat`` is ``(kinds, args, firsts, counts, children)``; for a leaf
    ``args`` holds the attribute code, for a gate the threshold and the
    slice ``children[firsts:firsts+counts]`` lists its child node ids.
    """
    kinds, args, firsts, counts, children = flat
    n = len(kinds)
    out = bytearray(len(keys))
    sat = [False] * n
    for idx, k in enumerate(keys):
        for node in range(n):
            if kinds[node] == LEAF:
                sat[node] = _has_attr(args[node], k, width)
            else:
                need = args[node]
                got = 0
                first = firsts[node]
                for c in range(first, first + counts[node]):
                    if sat[children[c]]:
                        got += 1
                        if got >= need:
                            break
                sat[node] = got >= need
        out[idx] = sat[n - 1]
    return out
