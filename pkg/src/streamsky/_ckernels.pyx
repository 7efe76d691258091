# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numeric kernels for moduli below 2**64.

Same signatures as ``_pykernels``. Callers must route p >= 2**64 to the
Python versions; ``streamsky.kernels`` does that.
"""

from cpython cimport array
import array

ctypedef unsigned long long u64

cdef extern from *:
    """
    typedef unsigned __int128 ss_u128;
    static inline unsigned long long ss_mulmod(unsigned long long a, unsigned long long b,
                                               unsigned long long p) {
        return (unsigned long long)(((ss_u128)a * b) % p);
    }
    static inline unsigned long long ss_addmod(unsigned long long a, unsigned long long b,
                                               unsigned long long p) {
        ss_u128 s = (ss_u128)a + b;
        return (unsigned long long)(s >= p ? s - p : s);
    }
    """
    u64 ss_mulmod(u64 a, u64 b, u64 p) nogil
    u64 ss_addmod(u64 a, u64 b, u64 p) nogil

BACKEND = "cython"

cdef enum:
    LEAF = 0
    MARKER_BASE = 128


cdef inline u64 _powmod(u64 base, u64 e, u64 p) nogil:
    cdef u64 result = 1 % p
    base %= p
    while e:
        if e & 1:
            result = ss_mulmod(result, base, p)
        base = ss_mulmod(base, base, p)
        e >>= 1
    return result


cdef u64 _invmod(u64 a, u64 p) except? 0:
    # extended Euclid on Python ints; any modulus coprime to a
    t0, t1, r0, r1 = 0, 1, p, a % p
    if r1 == 0:
        raise ZeroDivisionError("0 has no inverse mod p")
    while r1 != 0:
        qq = r0 // r1
        r0, r1 = r1, r0 - qq * r1
        t0, t1 = t1, t0 - qq * t1
    if r0 != 1:
        raise ZeroDivisionError("value not invertible mod p")
    return <u64>(t0 % p)


def mulmod(u64 a, u64 b, u64 p):
    return ss_mulmod(a % p, b % p, p)


def powmod(u64 base, u64 e, u64 p):
    return _powmod(base, e, p)


def invmod(a, u64 p):
    return _invmod(<u64>(a % p), p)


def scale_mod(values, u64 s, u64 p):
    cdef array.array src = array.array('Q', values)
    cdef u64[:] v = src
    cdef Py_ssize_t i, n = v.shape[0]
    s %= p
    with nogil:
        for i in range(n):
            v[i] = ss_mulmod(v[i] % p, s, p)
    return src.tolist()


def sum_mod(values, u64 p):
    cdef u64 acc = 0
    cdef u64 x
    for item in values:
        x = item
        acc = ss_addmod(acc, x % p, p)
    return acc


def dot_mod(a, b, u64 p):
    if len(a) != len(b):
        raise ValueError("length mismatch")
    cdef array.array aa = array.array('Q', a)
    cdef array.array bb = array.array('Q', b)
    cdef u64[:] av = aa
    cdef u64[:] bv = bb
    cdef u64 acc = 0
    cdef Py_ssize_t i
    with nogil:
        for i in range(av.shape[0]):
            acc = ss_addmod(acc, ss_mulmod(av[i] % p, bv[i] % p, p), p)
    return acc


def lagrange_at_zero(indices, u64 p):
    cdef array.array idx = array.array('Q', indices)
    cdef u64[:] iv = idx
    cdef Py_ssize_t n = iv.shape[0], a, b
    cdef u64 num, den, i, j
    out = []
    for a in range(n):
        i = iv[a] % p
        num = 1
        den = 1
        for b in range(n):
            if b == a:
                continue
            j = iv[b] % p
            num = ss_mulmod(num, (p - j) % p, p)
            den = ss_mulmod(den, ss_addmod(i, (p - j) % p, p), p)
        out.append(ss_mulmod(num, _invmod(den, p), p))
    return out


def window_blinds(r, u64 beta, u64 start, Py_ssize_t count, u64 p):
    if beta == 0:
        raise ZeroDivisionError("beta must be positive")
    cdef array.array rr = array.array('Q', [x % p for x in r])
    cdef u64[:] rv = rr
    cdef array.array res = array.array('Q', bytes(8 * count))
    cdef u64[:] out = res
    cdef Py_ssize_t t
    cdef u64 k, ce, prev_ce, pw
    if count == 0:
        return []
    ce = start // beta + (1 if start % beta else 0)
    pw = _powmod(2, ce, p)
    prev_ce = ce
    with nogil:
        for t in range(count):
            k = start + <u64>t
            ce = k // beta + (1 if k % beta else 0)
            while prev_ce < ce:
                pw = ss_mulmod(pw, 2, p)
                prev_ce += 1
            out[t] = ss_mulmod(pw, rv[k % beta], p)
    return res.tolist()


cdef inline bint _has_attr(unsigned int code, u64 k, unsigned int width) nogil:
    cdef unsigned int pos, m
    if code < MARKER_BASE:
        pos = code >> 1
        if pos >= width:
            return False
        return ((k >> pos) & 1) == (code & 1)
    m = 4u << (code - MARKER_BASE)
    if m >= width or m >= 64:
        return False
    return (k >> m) != 0


def accepts_batch(flat, keys, unsigned int width):
    kinds, args, firsts, counts, children = flat
    cdef array.array ka = array.array('B', kinds)
    cdef array.array aa = array.array('I', args)
    cdef array.array fa = array.array('I', firsts)
    cdef array.array ca = array.array('I', counts)
    cdef array.array cha = array.array('I', children) if len(children) else array.array('I', [0])
    cdef array.array keyarr = array.array('Q', keys)
    cdef unsigned char[:] kv = ka
    cdef unsigned int[:] av = aa
    cdef unsigned int[:] fv = fa
    cdef unsigned int[:] cv = ca
    cdef unsigned int[:] chv = cha
    cdef u64[:] keyv = keyarr
    cdef Py_ssize_t n = kv.shape[0], nk = keyv.shape[0]
    cdef array.array sat_arr = array.array('B', bytes(n if n else 1))
    cdef unsigned char[:] sat = sat_arr
    out_arr = array.array('B', bytes(nk))
    cdef unsigned char[:] out = out_arr
    cdef Py_ssize_t idx, node, c
    cdef unsigned int need, got
    cdef u64 k
    if n == 0:
        raise ValueError("empty tree")
    with nogil:
        for idx in range(nk):
            k = keyv[idx]
            for node in range(n):
                if kv[node] == LEAF:
                    sat[node] = _has_attr(av[node], k, width)
                else:
                    need = av[node]
                    got = 0
                    for c in range(fv[node], fv[node] + cv[node]):
                        if sat[chv[c]]:
                            got += 1
                            if got >= need:
                                break
                    sat[node] = got >= need
            out[idx] = sat[n - 1]
    return bytearray(out_arr.tobytes())
