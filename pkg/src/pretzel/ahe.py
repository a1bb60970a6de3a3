"""Additively homomorphic encryption: Paillier and a BV-style Ring-LWE scheme.

Both backends sit behind one interface supporting slot-wise addition and
small-constant multiplication; the Ring-LWE backend additionally supports
slot rotation (multiplication by a monomial), which is what enables
across-row packing.

Ring arithmetic notes. The Ring-LWE backend works in Z_q[x]/(x^n + 1)
with q a power of two, so coefficient arithmetic is exact uint64
wraparound followed by a mask. Full ring products (needed in keygen,
enc, dec) are computed by packing each polynomial into one big integer
with wide lanes and doing a single big-integer multiplication; this is
bit-exact schoolbook multiplication, just evaluated through GMP. The
plaintext modulus t = 2^b_slot divides q, which makes decryption a
single mask after the inner product.

Security caveat: the power-of-two q and desk-scale parameter choices
favor exactness and testability over conservative security margins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np

from .errors import CapabilityError, DecodeError, ParameterError
from .rng import StreamRng

BACKEND_PAILLIER = "paillier"
BACKEND_BV = "bv_rlwe"

_Q_BITS = 62
_Q = 1 << _Q_BITS
_MASK = np.uint64(_Q - 1)


@dataclass(frozen=True)
class AheParams:
    backend: str
    slot_width_b_slot: int
    modulus_bits: int = 1024  # Paillier
    ring_degree_n: int = 1024  # BV
    error_stddev: float = 3.2  # BV

    def __post_init__(self):
        if self.backend == BACKEND_PAILLIER:
            if self.modulus_bits < 64 or self.modulus_bits % 2:
                raise ParameterError("Paillier modulus_bits must be even and >= 64")
            if self.slots_p < 1:
                raise ParameterError("b_slot too wide for the Paillier modulus")
        elif self.backend == BACKEND_BV:
            n = self.ring_degree_n
            if n < 2 or n & (n - 1):
                raise ParameterError("ring degree must be a power of two >= 2")
            if not 1 <= self.slot_width_b_slot <= 60:
                raise ParameterError("BV slot width must be in [1, 60] bits")
        else:
            raise ParameterError(f"unknown backend {self.backend!r}")

    @property
    def slots_p(self) -> int:
        if self.backend == BACKEND_PAILLIER:
            return (self.modulus_bits - 1) // self.slot_width_b_slot
        return self.ring_degree_n

    @property
    def plaintext_modulus_t(self) -> int:
        return 1 << self.slot_width_b_slot

    @property
    def coeff_modulus_q(self) -> int:
        return _Q

    @property
    def supports_rotation(self) -> bool:
        return self.backend == BACKEND_BV

    @property
    def noise_clamp(self) -> int:
        return math.ceil(6 * self.error_stddev)


@dataclass(frozen=True)
class PackedPlaintext:
    slots: tuple[int, ...]


def _check_plaintext(params: AheParams, pt: PackedPlaintext) -> None:
    if len(pt.slots) != params.slots_p:
        raise ParameterError(
            f"expected {params.slots_p} slots, got {len(pt.slots)}"
        )
    t = params.plaintext_modulus_t
    if any(not 0 <= v < t for v in pt.slots):
        raise ParameterError("slot value out of [0, 2^b_slot)")


# --- Kronecker-packed negacyclic multiplication -------------------------


def _lane_bytes(n: int) -> int:
    # Lane must hold a full cross-product column: n terms of < 2^124 each.
    return (2 * _Q_BITS + n.bit_length() + 7) // 8 + 1


def _pack_poly(poly: np.ndarray, lane_bytes: int) -> int:
    n = len(poly)
    buf = np.zeros((n, lane_bytes), dtype=np.uint8)
    buf[:, :8] = poly.astype("<u8").view(np.uint8).reshape(n, 8)
    return int.from_bytes(buf.tobytes(), "little")


def _negacyclic_mul(a: np.ndarray, b_packed: int, n: int, lane_bytes: int) -> np.ndarray:
    prod = int(gmpy2.mpz(_pack_poly(a, lane_bytes)) * gmpy2.mpz(b_packed))
    raw = prod.to_bytes(2 * n * lane_bytes, "little")
    lanes = (
        np.frombuffer(raw, dtype=np.uint8)
        .reshape(2 * n, lane_bytes)[:, :8]
        .copy()
        .view("<u8")
        .reshape(2 * n)
    )
    # lane mod 2^62 equals the low-64-bit view mod 2^62; fold x^n = -1.
    return (lanes[:n] - lanes[n:]) & _MASK


# --- keys ----------------------------------------------------------------


@dataclass
class PaillierPublicKey:
    params: AheParams
    n: int
    n2: int = field(init=False)

    def __post_init__(self):
        self.n2 = self.n * self.n


@dataclass
class PaillierSecretKey:
    params: AheParams
    n: int
    lam: int
    mu: int

    @property
    def n2(self) -> int:
        return self.n * self.n


@dataclass
class BvPublicKey:
    params: AheParams
    a: np.ndarray
    b: np.ndarray  # b = a*s + t*e


@dataclass
class BvSecretKey:
    params: AheParams
    s: np.ndarray
    s_packed: int = field(init=False)

    def __post_init__(self):
        self.s_packed = _pack_poly(self.s, _lane_bytes(self.params.ring_degree_n))


@dataclass
class KeyPair:
    pk: object
    sk: object

    @property
    def params(self) -> AheParams:
        return self.pk.params


@dataclass
class Ciphertext:
    params: AheParams
    payload: object  # Paillier: int mod n^2; BV: (c0, c1) uint64 arrays


# --- sampling ------------------------------------------------------------


def _sample_uniform_poly(rng: StreamRng, n: int) -> np.ndarray:
    return np.frombuffer(rng.randbytes(8 * n), dtype="<u8").copy() & _MASK


def _sample_ternary_poly(rng: StreamRng, n: int) -> np.ndarray:
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        v = rng.randrange(3) - 1
        out[i] = v if v >= 0 else _Q - 1
    return out


def _sample_gauss_poly(rng: StreamRng, n: int, sigma: float, clamp: int) -> np.ndarray:
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        while True:
            v = round(rng.gauss(sigma))
            if abs(v) <= clamp:
                break
        out[i] = v if v >= 0 else _Q + v
    return out


# --- key generation ------------------------------------------------------


def _gen_prime(rng: StreamRng, bits: int) -> int:
    while True:
        cand = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        p = int(gmpy2.next_prime(cand))
        if p.bit_length() == bits:
            return p


def keygen(params: AheParams, seed: bytes) -> KeyPair:
    """Deterministic key generation from a 32-byte seed."""
    rng = StreamRng(seed)
    if params.backend == BACKEND_PAILLIER:
        half = params.modulus_bits // 2
        while True:
            p = _gen_prime(rng.spawn(b"p" + bytes([rng.getrandbits(8)])), half)
            q = _gen_prime(rng.spawn(b"q" + bytes([rng.getrandbits(8)])), half)
            n = p * q
            if p != q and n.bit_length() == params.modulus_bits:
                break
        lam = int(gmpy2.lcm(p - 1, q - 1))
        mu = int(gmpy2.invert(lam, n))
        return KeyPair(PaillierPublicKey(params, n), PaillierSecretKey(params, n, lam, mu))

    n = params.ring_degree_n
    t = params.plaintext_modulus_t
    s = _sample_ternary_poly(rng, n)
    a = _sample_uniform_poly(rng, n)
    e = _sample_gauss_poly(rng, n, params.error_stddev, params.noise_clamp)
    sk = BvSecretKey(params, s)
    lb = _lane_bytes(n)
    b = (_negacyclic_mul(a, sk.s_packed, n, lb) + np.uint64(t) * e) & _MASK
    return KeyPair(BvPublicKey(params, a, b), sk)


# --- core operations ------------------------------------------------------


def _pack_int(params: AheParams, slots: tuple[int, ...]) -> int:
    value = 0
    for i, v in enumerate(reversed(slots)):
        value = (value << params.slot_width_b_slot) | v
    return value


def _unpack_int(params: AheParams, value: int) -> tuple[int, ...]:
    t = params.plaintext_modulus_t
    return tuple((value >> (i * params.slot_width_b_slot)) & (t - 1) for i in range(params.slots_p))


def enc(pk, pt: PackedPlaintext, rng: StreamRng | None = None) -> Ciphertext:
    """Public-key encryption (randomized)."""
    params = pk.params
    _check_plaintext(params, pt)
    if rng is None:
        rng = StreamRng()
    if params.backend == BACKEND_PAILLIER:
        m = _pack_int(params, pt.slots)
        r = rng.randrange(pk.n - 1) + 1
        c = (1 + m * pk.n) * int(gmpy2.powmod(r, pk.n, pk.n2)) % pk.n2
        return Ciphertext(params, c)

    n = params.ring_degree_n
    t = np.uint64(params.plaintext_modulus_t)
    lb = _lane_bytes(n)
    u = _sample_ternary_poly(rng, n)
    f = _sample_gauss_poly(rng, n, params.error_stddev, params.noise_clamp)
    g = _sample_gauss_poly(rng, n, params.error_stddev, params.noise_clamp)
    u_packed = _pack_poly(u, lb)
    m = np.array(pt.slots, dtype=np.uint64)
    c0 = (_negacyclic_mul(pk.b, u_packed, n, lb) + t * g + m) & _MASK
    c1 = (np.uint64(0) - ((_negacyclic_mul(pk.a, u_packed, n, lb) + t * f) & _MASK)) & _MASK
    return Ciphertext(params, (c0, c1))


def enc_low_noise(kp: KeyPair, pt: PackedPlaintext, rng: StreamRng | None = None) -> Ciphertext:
    """Encryption by the key holder with a single fresh error term (BV only).

    Used by the model owner: the resulting ciphertexts tolerate the full
    sum of L constant multiplications within the noise budget, which
    public-key encryption noise would not.
    """
    params = kp.params
    if params.backend != BACKEND_BV:
        return enc(kp.pk, pt, rng)
    _check_plaintext(params, pt)
    if rng is None:
        rng = StreamRng()
    n = params.ring_degree_n
    t = np.uint64(params.plaintext_modulus_t)
    lb = _lane_bytes(n)
    c1 = _sample_uniform_poly(rng, n)
    e = _sample_gauss_poly(rng, n, params.error_stddev, params.noise_clamp)
    m = np.array(pt.slots, dtype=np.uint64)
    c0 = (m + t * e - _negacyclic_mul(c1, kp.sk.s_packed, n, lb)) & _MASK
    return Ciphertext(params, (c0, c1))


def dec(sk, ct: Ciphertext) -> PackedPlaintext:
    params = sk.params
    if ct.params.backend != params.backend:
        raise ParameterError("ciphertext/key backend mismatch")
    if params.backend == BACKEND_PAILLIER:
        u = int(gmpy2.powmod(ct.payload, sk.lam, sk.n2))
        m = ((u - 1) // sk.n) * sk.mu % sk.n
        return PackedPlaintext(_unpack_int(params, m))
    n = params.ring_degree_n
    c0, c1 = ct.payload
    v = (c0 + _negacyclic_mul(c1, sk.s_packed, n, _lane_bytes(n))) & _MASK
    # t divides q, so centered reduction mod q then mod t is a plain mask.
    m = v & np.uint64(params.plaintext_modulus_t - 1)
    return PackedPlaintext(tuple(int(x) for x in m))


def add(pk, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    params = pk.params
    if a.params.backend != b.params.backend or a.params.backend != params.backend:
        raise ParameterError("ciphertext backend mismatch")
    if params.backend == BACKEND_PAILLIER:
        return Ciphertext(params, a.payload * b.payload % pk.n2)
    a0, a1 = a.payload
    b0, b1 = b.payload
    return Ciphertext(params, ((a0 + b0) & _MASK, (a1 + b1) & _MASK))


def scalar_mul(pk, a: Ciphertext, m: int) -> Ciphertext:
    params = pk.params
    if m < 0:
        raise ParameterError("scalar must be non-negative")
    if params.backend == BACKEND_PAILLIER:
        return Ciphertext(params, int(gmpy2.powmod(a.payload, m, pk.n2)))
    if m >= _Q:
        raise ParameterError("scalar exceeds the coefficient modulus")
    c0, c1 = a.payload
    mm = np.uint64(m)
    return Ciphertext(params, ((c0 * mm) & _MASK, (c1 * mm) & _MASK))


def rotate_left(pk, a: Ciphertext, k: int) -> Ciphertext:
    """Shift slot i+k into slot i (BV only).

    Implemented as multiplication by the ring constant -x^(n-k). The k
    slots that wrap past the end come back negated mod t and are defined
    as garbage; callers must only read the first p-k slots.
    """
    params = pk.params
    if params.backend != BACKEND_BV:
        raise CapabilityError("rotation requires the bv_rlwe backend")
    n = params.ring_degree_n
    if not 0 <= k < n:
        raise ParameterError("rotation amount out of range")
    if k == 0:
        return Ciphertext(params, (a.payload[0].copy(), a.payload[1].copy()))

    def rot(poly: np.ndarray) -> np.ndarray:
        rolled = np.roll(poly, -k)
        rolled[n - k :] = (np.uint64(_Q) - rolled[n - k :]) & _MASK
        return rolled

    return Ciphertext(params, (rot(a.payload[0]), rot(a.payload[1])))


def ciphertext_size(params: AheParams) -> int:
    if params.backend == BACKEND_PAILLIER:
        return 2 * params.modulus_bits // 8
    return 2 * params.ring_degree_n * 8


def noise_budget_ok(params: AheParams, L: int, f_in: int, adds_extra: int) -> bool:
    """Worst-case noise bound for L constant-mul-then-add steps on
    low-noise ciphertexts plus adds_extra additions of public-key
    encryptions, against the decryption margin q/(2t)."""
    if params.backend != BACKEND_BV:
        raise CapabilityError("noise accounting applies to the bv_rlwe backend")
    e_fresh = params.noise_clamp
    e_public = (2 * params.ring_degree_n + 1) * e_fresh
    total = L * ((1 << f_in) - 1) * e_fresh + adds_extra * e_public
    budget = _Q // (2 * params.plaintext_modulus_t) - 1
    return total <= budget


# --- serialization --------------------------------------------------------


def _encode_bigint(v: int) -> bytes:
    raw = v.to_bytes((v.bit_length() + 7) // 8 or 1, "little")
    return len(raw).to_bytes(4, "little") + raw


def _decode_bigint(data: bytes, offset: int) -> tuple[int, int]:
    if offset + 4 > len(data):
        raise DecodeError("truncated big integer length")
    length = int.from_bytes(data[offset : offset + 4], "little")
    end = offset + 4 + length
    if end > len(data):
        raise DecodeError("truncated big integer body")
    return int.from_bytes(data[offset + 4 : end], "little"), end


def serialize_ciphertext(ct: Ciphertext) -> bytes:
    params = ct.params
    if params.backend == BACKEND_PAILLIER:
        return ct.payload.to_bytes(ciphertext_size(params), "little")
    c0, c1 = ct.payload
    return c0.astype("<u8").tobytes() + c1.astype("<u8").tobytes()


def deserialize_ciphertext(params: AheParams, data: bytes) -> Ciphertext:
    if len(data) != ciphertext_size(params):
        raise DecodeError(
            f"ciphertext must be {ciphertext_size(params)} bytes, got {len(data)}"
        )
    if params.backend == BACKEND_PAILLIER:
        return Ciphertext(params, int.from_bytes(data, "little"))
    n = params.ring_degree_n
    c0 = np.frombuffer(data[: 8 * n], dtype="<u8").copy()
    c1 = np.frombuffer(data[8 * n :], dtype="<u8").copy()
    return Ciphertext(params, (c0, c1))


def serialize_public_key(pk) -> bytes:
    if pk.params.backend == BACKEND_PAILLIER:
        return _encode_bigint(pk.n)
    return pk.a.astype("<u8").tobytes() + pk.b.astype("<u8").tobytes()


def deserialize_public_key(params: AheParams, data: bytes):
    if params.backend == BACKEND_PAILLIER:
        n, end = _decode_bigint(data, 0)
        if end != len(data):
            raise DecodeError("trailing bytes after Paillier public key")
        return PaillierPublicKey(params, n)
    n = params.ring_degree_n
    if len(data) != 16 * n:
        raise DecodeError("BV public key must be 16*n bytes")
    a = np.frombuffer(data[: 8 * n], dtype="<u8").copy()
    b = np.frombuffer(data[8 * n :], dtype="<u8").copy()
    return BvPublicKey(params, a, b)
