# cython: boundscheck=False, wraparound=False
"""Compiled nonce search over a fixed pre-image layout ``prefix + str(nonce) + suffix``."""

from libc.string cimport memcpy

cdef extern from "openssl/sha.h":
    ctypedef struct SHA256_CTX:
        pass
    int SHA256_Init(SHA256_CTX *c) nogil
    int SHA256_Update(SHA256_CTX *c, const void *data, size_t len) nogil
    int SHA256_Final(unsigned char *md, SHA256_CTX *c) nogil


cdef inline int format_u64(unsigned long long v, char *out) nogil:
    cdef char tmp[24]
    cdef int n = 0
    cdef int i
    if v == 0:
        out[0] = 48
        return 1
    while v:
        tmp[n] = <char>(48 + v % 10)
        v //= 10
        n += 1
    for i in range(n):
        out[i] = tmp[n - 1 - i]
    return n


cdef inline bint meets_target(const unsigned char *md, int zeros) nogil:
    cdef int full = zeros >> 1
    cdef int i
    for i in range(full):
        if md[i] != 0:
            return False
    if zeros & 1:
        return md[full] < 16
    return True


def search(bytes prefix, bytes suffix, int difficulty,
           unsigned long long start, unsigned long long count):
    """Return the first nonce in ``[start, start + count)`` meeting the target, or -1."""
    cdef SHA256_CTX base
    cdef SHA256_CTX ctx
    cdef unsigned char md[32]
    cdef char digits[24]
    cdef int ndig
    cdef unsigned long long nonce = start
    cdef unsigned long long end = start + count
    cdef const char *sfx = suffix
    cdef size_t sfx_len = len(suffix)
    cdef const char *pfx = prefix
    cdef size_t pfx_len = len(prefix)
    cdef long long found = -1

    if difficulty < 0 or difficulty > 64:
        raise ValueError("difficulty out of range")
    SHA256_Init(&base)
    SHA256_Update(&base, pfx, pfx_len)
    with nogil:
        while nonce < end:
            memcpy(&ctx, &base, sizeof(SHA256_CTX))
            ndig = format_u64(nonce, digits)
            SHA256_Update(&ctx, digits, ndig)
            SHA256_Update(&ctx, sfx, sfx_len)
            SHA256_Final(md, &ctx)
            if meets_target(md, difficulty):
                found = <long long>nonce
                break
            nonce += 1
    return found
