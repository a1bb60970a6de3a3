"""Slot layouts and packed encrypted dot products.

Two packing modes over the AHE slot structure:

* within_row: each matrix row (one feature, all categories) is packed
  into ceil(B/p) ciphertexts; rows never share a ciphertext.
* across_row: category columns are split into floor(B/p) full groups of
  p (packed within-row) plus one residual group of k = B mod p columns
  whose rows are packed row-major, floor(p/k) rows per ciphertext, never
  splitting a row across ciphertexts. Rows sharing a ciphertext are
  realigned during the dot product with slot rotations, so this mode
  needs a rotation-capable backend.

The priors vector is treated as one extra virtual row multiplied by the
constant 1.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

from . import ahe
from .errors import DecodeError, ModelError, ParameterError
from .model import FeatureVector, QuantizedModel
from .rng import StreamRng

MODE_WITHIN_ROW = "within_row"
MODE_ACROSS_ROW = "across_row"


def slot_width_for(b_in: int, f_in: int, L_max: int, lambda_blind: int) -> int:
    """Slot width: dot-product semantic bits plus blinding headroom."""
    if min(b_in, f_in, L_max, lambda_blind) < 1:
        raise ParameterError("layout parameters must be positive")
    b = math.ceil(math.log2(L_max)) + b_in + f_in if L_max > 1 else b_in + f_in
    return b + lambda_blind + 1


@dataclass(frozen=True)
class PackingLayout:
    b_in: int
    f_in: int
    L_max: int
    lambda_blind: int
    p: int
    mode: str
    backend: str

    @property
    def b(self) -> int:
        """Semantic bits of one dot-product slot."""
        return (
            (math.ceil(math.log2(self.L_max)) if self.L_max > 1 else 0)
            + self.b_in
            + self.f_in
        )

    @property
    def b_slot(self) -> int:
        return self.b + self.lambda_blind + 1


def make_layout(
    ahe_params: ahe.AheParams,
    b_in: int = 12,
    f_in: int = 6,
    L_max: int = 692,
    lambda_blind: int = 12,
    mode: str = MODE_WITHIN_ROW,
) -> PackingLayout:
    needed = slot_width_for(b_in, f_in, L_max, lambda_blind)
    if ahe_params.slot_width_b_slot != needed:
        raise ParameterError(
            f"AHE slot width {ahe_params.slot_width_b_slot} != required b_slot {needed}"
        )
    if mode == MODE_ACROSS_ROW and not ahe_params.supports_rotation:
        raise ParameterError("across_row packing requires a rotation-capable backend")
    if mode not in (MODE_WITHIN_ROW, MODE_ACROSS_ROW):
        raise ParameterError(f"unknown packing mode {mode!r}")
    return PackingLayout(
        b_in, f_in, L_max, lambda_blind, ahe_params.slots_p, mode, ahe_params.backend
    )


@dataclass(frozen=True)
class GridShape:
    """Derived ciphertext-grid geometry for one (layout, N, B)."""

    n_rows: int  # N, weights only
    n_categories: int  # B
    p: int
    mode: str

    @property
    def full_groups(self) -> int:
        if self.mode == MODE_WITHIN_ROW:
            return math.ceil(self.n_categories / self.p)
        return self.n_categories // self.p

    @property
    def residual_k(self) -> int:
        if self.mode == MODE_WITHIN_ROW:
            return 0
        return self.n_categories % self.p

    @property
    def rows_per_residual_ct(self) -> int:
        k = self.residual_k
        return self.p // k if k else 0

    @property
    def residual_weight_cts(self) -> int:
        k = self.residual_k
        return math.ceil(self.n_rows / self.rows_per_residual_ct) if k else 0

    @property
    def weight_ct_count(self) -> int:
        return self.n_rows * self.full_groups + self.residual_weight_cts

    @property
    def prior_ct_count(self) -> int:
        return self.full_groups + (1 if self.residual_k else 0)

    @property
    def result_ct_count(self) -> int:
        return self.full_groups + (1 if self.residual_k else 0)

    def slot_map(self) -> dict[int, tuple[int, int]]:
        """Category (0-based) -> (result ciphertext index, slot index)."""
        out = {}
        for j in range(self.n_categories):
            g = j // self.p
            if g < self.full_groups:
                out[j] = (g, j % self.p)
            else:
                out[j] = (self.full_groups, j - self.full_groups * self.p)
        return out


def _grid(layout: PackingLayout, n: int, b: int) -> GridShape:
    return GridShape(n, b, layout.p, layout.mode)


@dataclass
class PackedModel:
    layout: PackingLayout
    num_features: int
    num_categories: int
    weight_cts: list  # grid order: per full group all N rows, then residual cts
    prior_cts: list  # per full group, then residual priors ct

    @property
    def shape(self) -> GridShape:
        return _grid(self.layout, self.num_features, self.num_categories)


@dataclass
class EncryptedModel:
    layout: PackingLayout
    num_features: int
    num_categories: int
    weight_cts: list[ahe.Ciphertext]
    prior_cts: list[ahe.Ciphertext]

    @property
    def shape(self) -> GridShape:
        return _grid(self.layout, self.num_features, self.num_categories)


@dataclass
class PackedDotResult:
    ciphertexts: list[ahe.Ciphertext]
    slot_map: dict[int, tuple[int, int]]


def pack_model(qmodel: QuantizedModel, layout: PackingLayout) -> PackedModel:
    n, b = qmodel.num_features, qmodel.num_categories
    if qmodel.b_in > layout.b_in:
        raise ParameterError("quantized width exceeds the layout's b_in")
    shape = _grid(layout, n, b)
    p = layout.p
    zeros = (0,) * p

    def row_plaintexts(values: list[int]) -> list[tuple]:
        """values: length B; split per full/within group of p slots."""
        out = []
        for g in range(shape.full_groups):
            chunk = values[g * p : (g + 1) * p]
            out.append(tuple(chunk) + zeros[len(chunk) :])
        return out

    columns = lambda r: [qmodel.qweights[j][r] for j in range(b)]

    weight_pts: list[ahe.PackedPlaintext] = []
    # Full (within-row) groups, grid order: group-major, then rows.
    per_row_groups = [row_plaintexts(columns(r)) for r in range(n)]
    for g in range(shape.full_groups):
        for r in range(n):
            weight_pts.append(ahe.PackedPlaintext(per_row_groups[r][g]))
    # Residual group: k trailing columns, row-major across rows.
    k = shape.residual_k
    if k:
        rpc = shape.rows_per_residual_ct
        base = shape.full_groups * p
        for c0 in range(0, n, rpc):
            slots = [0] * p
            for off, r in enumerate(range(c0, min(c0 + rpc, n))):
                for c in range(k):
                    slots[off * k + c] = qmodel.qweights[base + c][r]
            weight_pts.append(ahe.PackedPlaintext(tuple(slots)))

    prior_pts = [ahe.PackedPlaintext(pt) for pt in row_plaintexts(list(qmodel.qpriors))]
    if k:
        slots = [0] * p
        for c in range(k):
            slots[c] = qmodel.qpriors[shape.full_groups * p + c]
        prior_pts.append(ahe.PackedPlaintext(tuple(slots)))

    assert len(weight_pts) == shape.weight_ct_count
    assert len(prior_pts) == shape.prior_ct_count
    return PackedModel(layout, n, b, weight_pts, prior_pts)


def encrypt_model(
    key, packed: PackedModel, rng: StreamRng | None = None
) -> EncryptedModel:
    """Encrypt every packed plaintext. `key` may be a KeyPair (the model
    owner's, enabling the low-noise path on BV) or a bare public key."""
    if rng is None:
        rng = StreamRng()
    if isinstance(key, ahe.KeyPair):
        encrypt = lambda pt: ahe.enc_low_noise(key, pt, rng)
    else:
        encrypt = lambda pt: ahe.enc(key, pt, rng)
    return EncryptedModel(
        packed.layout,
        packed.num_features,
        packed.num_categories,
        [encrypt(pt) for pt in packed.weight_cts],
        [encrypt(pt) for pt in packed.prior_cts],
    )


def packed_dot(
    pk, emodel: EncryptedModel, fv: FeatureVector, layout: PackingLayout
) -> PackedDotResult:
    """Homomorphic per-category dot products plus priors.

    The decrypted slot_map(j) value equals sum_i x_i * qw[j][i] + qp[j]
    exactly. Residual-group accumulation rotates each feature's row to
    slot 0 before scaling, so only the first k slots of the residual
    accumulator are meaningful.
    """
    if fv.num_features > layout.L_max:
        raise ModelError(f"email has {fv.num_features} features, layout caps {layout.L_max}")
    if fv.entries and fv.entries[-1][0] >= emodel.num_features:
        raise ModelError("feature id out of range for the encrypted model")
    if any(freq >= (1 << layout.f_in) for _, freq in fv.entries):
        raise ModelError("frequency exceeds 2^f_in - 1")
    shape = emodel.shape
    n = emodel.num_features
    accs = []
    for g in range(shape.full_groups):
        acc = emodel.prior_cts[g]
        for fid, freq in fv.entries:
            acc = ahe.add(pk, acc, ahe.scalar_mul(pk, emodel.weight_cts[g * n + fid], freq))
        accs.append(acc)
    k = shape.residual_k
    if k:
        rpc = shape.rows_per_residual_ct
        base = shape.full_groups * n
        acc = emodel.prior_cts[shape.full_groups]
        for fid, freq in fv.entries:
            ct = emodel.weight_cts[base + fid // rpc]
            aligned = ahe.rotate_left(pk, ct, (fid % rpc) * k)
            acc = ahe.add(pk, acc, ahe.scalar_mul(pk, aligned, freq))
        accs.append(acc)
    return PackedDotResult(accs, shape.slot_map())


def extract_slot(
    pk, result: PackedDotResult, category_index: int, layout: PackingLayout
) -> ahe.Ciphertext:
    """Copy the packed ciphertext holding category_index (1-based) and
    rotate that category's dot product into slot 0."""
    if not 1 <= category_index <= len(result.slot_map):
        raise ParameterError("category index out of range")
    ct_idx, slot = result.slot_map[category_index - 1]
    if layout.mode == MODE_WITHIN_ROW:
        # Quotient/remainder view of the same lookup.
        assert ct_idx == math.ceil(category_index / layout.p) - 1
        assert slot == (category_index - 1) % layout.p
    if slot == 0:
        return result.ciphertexts[ct_idx]
    return ahe.rotate_left(pk, result.ciphertexts[ct_idx], slot)


# --- encrypted model file / stream format --------------------------------

_MAGIC = b"PRTZLEM1"
_MODES = {MODE_WITHIN_ROW: 0, MODE_ACROSS_ROW: 1}
_BACKENDS = {ahe.BACKEND_PAILLIER: 0, ahe.BACKEND_BV: 1}


def serialize_encrypted_model(
    emodel: EncryptedModel, params: ahe.AheParams, pk
) -> bytes:
    lay = emodel.layout
    head = _MAGIC + struct.pack(
        "<BBIIIIIIIId",
        _BACKENDS[lay.backend],
        _MODES[lay.mode],
        lay.b_in,
        lay.f_in,
        lay.L_max,
        lay.lambda_blind,
        emodel.num_features,
        emodel.num_categories,
        params.modulus_bits,
        params.ring_degree_n,
        params.error_stddev,
    )
    pk_bytes = ahe.serialize_public_key(pk)
    body = [head, struct.pack("<I", len(pk_bytes)), pk_bytes]
    body.append(struct.pack("<II", len(emodel.weight_cts), len(emodel.prior_cts)))
    for ct in emodel.weight_cts + emodel.prior_cts:
        body.append(ahe.serialize_ciphertext(ct))
    return b"".join(body)


def deserialize_encrypted_model(data: bytes):
    """Returns (emodel, params, pk)."""
    if data[: len(_MAGIC)] != _MAGIC:
        raise DecodeError("bad encrypted-model magic")
    fixed = struct.Struct("<BBIIIIIIIId")
    off = len(_MAGIC)
    try:
        (
            backend_id,
            mode_id,
            b_in,
            f_in,
            l_max,
            lam,
            n,
            b,
            modulus_bits,
            ring_n,
            sigma,
        ) = fixed.unpack_from(data, off)
        off += fixed.size
        (pk_len,) = struct.unpack_from("<I", data, off)
        off += 4
        pk_bytes = data[off : off + pk_len]
        if len(pk_bytes) != pk_len:
            raise DecodeError("truncated public key")
        off += pk_len
        n_weights, n_priors = struct.unpack_from("<II", data, off)
        off += 8
    except struct.error as e:
        raise DecodeError(f"truncated encrypted-model header: {e}") from e
    backend = {v: k for k, v in _BACKENDS.items()}[backend_id]
    mode = {v: k for k, v in _MODES.items()}[mode_id]
    params = ahe.AheParams(
        backend,
        slot_width_for(b_in, f_in, l_max, lam),
        modulus_bits=modulus_bits,
        ring_degree_n=ring_n,
        error_stddev=sigma,
    )
    pk = ahe.deserialize_public_key(params, pk_bytes)
    layout = make_layout(params, b_in, f_in, l_max, lam, mode)
    size = ahe.ciphertext_size(params)
    cts = []
    for _ in range(n_weights + n_priors):
        chunk = data[off : off + size]
        if len(chunk) != size:
            raise DecodeError("truncated ciphertext block")
        cts.append(ahe.deserialize_ciphertext(params, chunk))
        off += size
    if off != len(data):
        raise DecodeError("trailing bytes after encrypted model")
    emodel = EncryptedModel(layout, n, b, cts[:n_weights], cts[n_weights:])
    return emodel, params, pk
