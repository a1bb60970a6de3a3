"""Semi-honest Yao garbled circuits with base 1-of-2 oblivious transfer.

Circuits are built from XOR and AND over wire references; NOT is an
inversion flag folded into the reference, so only AND gates cost a
garbled table (free-XOR with a global offset, point-and-permute row
ordering, 128-bit labels). Builders cover the two unblinding circuits
used by the protocols (threshold comparison and argmax-with-index) plus
a bare less-than comparator.

Wire references encode `2*wire_id + inverted`; the constants TRUE and
FALSE are the negative sentinels below. The builder folds constants and
trivial identities, so garbled gates never see constant operands.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import gmpy2

from .errors import ParameterError, ProtocolError
from .rng import StreamRng
from .transport import TAG_GC_TABLES, TAG_OT_MSG, TAG_OUTPUT, Channel

LABEL_BYTES = 16

CONST0 = -2
CONST1 = -1

OP_XOR = 0
OP_AND = 1

OUTPUT_TO_GARBLER = "garbler"
OUTPUT_TO_EVALUATOR = "evaluator"
OUTPUT_TO_BOTH = "both"


def _inv(ref: int) -> int:
    if ref == CONST0:
        return CONST1
    if ref == CONST1:
        return CONST0
    return ref ^ 1


@dataclass(frozen=True)
class Circuit:
    num_wires: int
    gates: tuple[tuple[int, int, int, int], ...]  # (op, out_wire, ref_a, ref_b)
    garbler_inputs: tuple[int, ...]  # wire ids, allocation order
    evaluator_inputs: tuple[int, ...]
    outputs: tuple[int, ...]  # refs; may include CONST0/CONST1

    @property
    def and_count(self) -> int:
        return sum(1 for op, *_ in self.gates if op == OP_AND)


def circuit_hash(circuit: Circuit) -> bytes:
    h = hashlib.sha256(b"pretzel-circuit-v1")
    h.update(struct.pack("<I", circuit.num_wires))
    for gate in circuit.gates:
        h.update(struct.pack("<Bqqq", *gate))
    for wires in (circuit.garbler_inputs, circuit.evaluator_inputs, circuit.outputs):
        h.update(struct.pack("<I", len(wires)))
        h.update(struct.pack(f"<{len(wires)}q", *wires))
    return h.digest()


class CircuitBuilder:
    def __init__(self):
        self.num_wires = 0
        self.gates: list[tuple[int, int, int, int]] = []
        self.garbler_inputs: list[int] = []
        self.evaluator_inputs: list[int] = []

    def _new_wire(self) -> int:
        w = self.num_wires
        self.num_wires += 1
        return w

    def garbler_input(self) -> int:
        w = self._new_wire()
        self.garbler_inputs.append(w)
        return 2 * w

    def evaluator_input(self) -> int:
        w = self._new_wire()
        self.evaluator_inputs.append(w)
        return 2 * w

    def garbler_word(self, width: int) -> list[int]:
        """Little-endian bit word (bit 0 first)."""
        return [self.garbler_input() for _ in range(width)]

    def evaluator_word(self, width: int) -> list[int]:
        return [self.evaluator_input() for _ in range(width)]

    @staticmethod
    def const_word(value: int, width: int) -> list[int]:
        return [CONST1 if (value >> i) & 1 else CONST0 for i in range(width)]

    def xor(self, a: int, b: int) -> int:
        if a == CONST0:
            return b
        if b == CONST0:
            return a
        if a == CONST1:
            return _inv(b)
        if b == CONST1:
            return _inv(a)
        if a == b:
            return CONST0
        if a == _inv(b):
            return CONST1
        out = self._new_wire()
        # Emit over non-inverted refs; inversion commutes out of XOR.
        self.gates.append((OP_XOR, out, a & ~1, b & ~1))
        return 2 * out | ((a ^ b) & 1)

    def and_(self, a: int, b: int) -> int:
        if CONST0 in (a, b):
            return CONST0
        if a == CONST1:
            return b
        if b == CONST1:
            return a
        if a == b:
            return a
        if a == _inv(b):
            return CONST0
        out = self._new_wire()
        self.gates.append((OP_AND, out, a, b))
        return 2 * out

    def not_(self, a: int) -> int:
        return _inv(a)

    def mux(self, sel: int, a: list[int], b: list[int]) -> list[int]:
        """Per-bit sel ? a : b."""
        return [self.xor(bi, self.and_(sel, self.xor(ai, bi))) for ai, bi in zip(a, b)]

    def sub(self, a: list[int], b: list[int]) -> list[int]:
        """(a - b) mod 2^width via a + ~b + 1; one AND per bit."""
        carry = CONST1
        out = []
        for ai, bi in zip(a, b):
            nbi = _inv(bi)
            out.append(self.xor(self.xor(ai, nbi), carry))
            # majority(ai, nbi, carry) with a single AND
            t = self.and_(self.xor(ai, carry), self.xor(nbi, carry))
            carry = self.xor(carry, t)
        return out

    def less_than(self, a: list[int], b: list[int]) -> int:
        """Unsigned a < b: the final borrow of a - b."""
        carry = CONST1
        for ai, bi in zip(a, b):
            nbi = _inv(bi)
            t = self.and_(self.xor(ai, carry), self.xor(nbi, carry))
            carry = self.xor(carry, t)
        return _inv(carry)

    def signed_less_than(self, a: list[int], b: list[int]) -> int:
        """Two's-complement a < b: flip sign bits, compare unsigned."""
        return self.less_than(a[:-1] + [_inv(a[-1])], b[:-1] + [_inv(b[-1])])

    def build(self, outputs: list[int]) -> Circuit:
        return Circuit(
            self.num_wires,
            tuple(self.gates),
            tuple(self.garbler_inputs),
            tuple(self.evaluator_inputs),
            tuple(outputs),
        )


def int_to_bits(value: int, width: int) -> list[int]:
    if not 0 <= value < (1 << width):
        raise ParameterError(f"value {value} does not fit in {width} bits")
    return [(value >> i) & 1 for i in range(width)]


def bits_to_int(bits: list[int]) -> int:
    return sum(b << i for i, b in enumerate(bits))


# --- circuit builders -----------------------------------------------------


def _check_width(width_w: int) -> None:
    if not 1 <= width_w <= 64:
        raise ParameterError("circuit word width must be in [1, 64]")


def build_unblind_threshold(width_w: int, tau_q: int) -> Circuit:
    """Spam unblinding: garbler holds blinded scores z1 = d1+n1 and
    z2 = d2+n2; evaluator holds the noises n1, n2. The single output bit
    is 1 iff (d2 - d1) < tau_q over width-w two's complement."""
    _check_width(width_w)
    bld = CircuitBuilder()
    z1 = bld.garbler_word(width_w)
    z2 = bld.garbler_word(width_w)
    n1 = bld.evaluator_word(width_w)
    n2 = bld.evaluator_word(width_w)
    d = bld.sub(bld.sub(z2, n2), bld.sub(z1, n1))
    tau = CircuitBuilder.const_word(tau_q & ((1 << width_w) - 1), width_w)
    return bld.build([bld.signed_less_than(d, tau)])


def build_unblind_argmax(count: int, width_w: int, index_width: int) -> Circuit:
    """Topic unblinding: evaluator holds count blinded scores; garbler
    holds the matching noises and an index payload per position. Outputs
    the payload of the maximum unblinded score; ties go to the lowest
    position. Scores are non-negative, so the compare is unsigned."""
    _check_width(width_w)
    if count < 1 or index_width < 1:
        raise ParameterError("argmax needs count >= 1 and index_width >= 1")
    bld = CircuitBuilder()
    z = [bld.evaluator_word(width_w) for _ in range(count)]
    n = [bld.garbler_word(width_w) for _ in range(count)]
    idx = [bld.garbler_word(index_width) for _ in range(count)]
    best = bld.sub(z[0], n[0])
    best_idx = idx[0]
    for j in range(1, count):
        yj = bld.sub(z[j], n[j])
        gt = bld.less_than(best, yj)  # strictly greater than the running best
        best = bld.mux(gt, yj, best)
        best_idx = bld.mux(gt, idx[j], best_idx)
    return bld.build(best_idx)


def build_less_than(width_w: int) -> Circuit:
    """Millionaires: 1 iff the garbler's word < the evaluator's word."""
    _check_width(width_w)
    bld = CircuitBuilder()
    a = bld.garbler_word(width_w)
    b = bld.evaluator_word(width_w)
    return bld.build([bld.less_than(a, b)])


_BUILDERS = {
    "unblind_threshold": build_unblind_threshold,
    "unblind_argmax": build_unblind_argmax,
    "less_than": build_less_than,
}


def build_circuit(name: str, *args, **kwargs) -> Circuit:
    if name not in _BUILDERS:
        raise ParameterError(f"unknown circuit spec {name!r}")
    return _BUILDERS[name](*args, **kwargs)


def eval_plain(circuit: Circuit, garbler_bits: list[int], evaluator_bits: list[int]) -> list[int]:
    """Plaintext circuit simulator; the oracle for garbled evaluation."""
    if len(garbler_bits) != len(circuit.garbler_inputs):
        raise ParameterError("garbler input length mismatch")
    if len(evaluator_bits) != len(circuit.evaluator_inputs):
        raise ParameterError("evaluator input length mismatch")
    values = [0] * circuit.num_wires
    for w, b in zip(circuit.garbler_inputs, garbler_bits):
        values[w] = b & 1
    for w, b in zip(circuit.evaluator_inputs, evaluator_bits):
        values[w] = b & 1

    def ref(r: int) -> int:
        if r == CONST0:
            return 0
        if r == CONST1:
            return 1
        return values[r >> 1] ^ (r & 1)

    for op, out, a, b in circuit.gates:
        values[out] = ref(a) ^ ref(b) if op == OP_XOR else ref(a) & ref(b)
    return [ref(r) for r in circuit.outputs]


# --- garbling -------------------------------------------------------------


def _prf(la: bytes, lb: bytes, gid: int) -> bytes:
    return hashlib.sha256(la + lb + gid.to_bytes(8, "little")).digest()[:LABEL_BYTES]


def _bxor(a: bytes, b: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(a, b))


def _color(label: bytes) -> int:
    return label[0] & 1


@dataclass
class Garbling:
    circuit: Circuit
    offset_r: bytes
    label0: list[bytes]  # per wire, the label of semantic 0
    tables: bytes  # concatenated 4 x LABEL_BYTES per AND gate

    def label(self, ref: int, value: int) -> bytes:
        base = self.label0[ref >> 1]
        if (value ^ ref) & 1:
            return _bxor(base, self.offset_r)
        return base


def garble(circuit: Circuit, rng: StreamRng | None = None) -> Garbling:
    if rng is None:
        rng = StreamRng()
    offset = bytearray(rng.randbytes(LABEL_BYTES))
    offset[0] |= 1  # color bits of a label pair must differ
    offset = bytes(offset)
    label0: list[bytes | None] = [None] * circuit.num_wires
    for w in circuit.garbler_inputs + circuit.evaluator_inputs:
        label0[w] = rng.randbytes(LABEL_BYTES)
    g = Garbling(circuit, offset, label0, b"")
    tables = []
    gid = 0
    for op, out, a, b in circuit.gates:
        if op == OP_XOR:
            label0[out] = _bxor(g.label(a, 0), g.label(b, 0))
            continue
        label0[out] = rng.randbytes(LABEL_BYTES)
        rows = [b""] * 4
        for va in (0, 1):
            for vb in (0, 1):
                la, lb = g.label(a, va), g.label(b, vb)
                row = 2 * _color(la) + _color(lb)
                rows[row] = _bxor(_prf(la, lb, gid), g.label(2 * out, va & vb))
        tables.append(b"".join(rows))
        gid += 1
    g.tables = b"".join(tables)
    return g


def evaluate(circuit: Circuit, tables: bytes, input_labels: dict[int, bytes]) -> list[bytes | None]:
    """Run the garbled circuit with one label per input wire. Returns one
    output label per output ref; constant outputs yield None."""
    if len(tables) != 4 * LABEL_BYTES * circuit.and_count:
        raise ProtocolError("garbled table size mismatch")
    labels: list[bytes | None] = [None] * circuit.num_wires
    for w in circuit.garbler_inputs + circuit.evaluator_inputs:
        labels[w] = input_labels[w]
    gid = 0
    for op, out, a, b in circuit.gates:
        la, lb = labels[a >> 1], labels[b >> 1]
        if op == OP_XOR:
            labels[out] = _bxor(la, lb)
            continue
        row = 2 * _color(la) + _color(lb)
        base = (4 * gid + row) * LABEL_BYTES
        labels[out] = _bxor(_prf(la, lb, gid), tables[base : base + LABEL_BYTES])
        gid += 1
    return [None if r in (CONST0, CONST1) else labels[r >> 1] for r in circuit.outputs]


def decode_table(g: Garbling) -> list[tuple[str, int]]:
    """Per output: ("const", v) or ("bit", point-and-permute decode bit)."""
    out = []
    for r in g.circuit.outputs:
        if r == CONST0:
            out.append(("const", 0))
        elif r == CONST1:
            out.append(("const", 1))
        else:
            out.append(("bit", _color(g.label(r, 0))))
    return out


def decode_outputs(decode: list[tuple[str, int]], out_labels: list[bytes | None]) -> list[int]:
    bits = []
    for (kind, v), label in zip(decode, out_labels):
        if kind == "const":
            bits.append(v)
        else:
            bits.append(_color(label) ^ v)
    return bits


def garbler_decode(g: Garbling, out_labels: list[bytes | None]) -> list[int]:
    bits = []
    for r, label in zip(g.circuit.outputs, out_labels):
        if r == CONST0:
            bits.append(0)
        elif r == CONST1:
            bits.append(1)
        elif label == g.label(r, 0):
            bits.append(0)
        elif label == g.label(r, 1):
            bits.append(1)
        else:
            raise ProtocolError("output label matches neither wire label")
    return bits


# --- 1-of-2 oblivious transfer ---------------------------------------------

# RFC 3526 2048-bit MODP group; generator 2. Receiver choices are hidden
# computationally (CDH-style); short 256-bit exponents for speed.
_OT_P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)
_OT_G = 2
_OT_EXP_BITS = 256
_OT_POINT_BYTES = 256


def _ot_key(point: int) -> bytes:
    raw = point.to_bytes(_OT_POINT_BYTES, "little")
    return hashlib.sha256(b"pretzel-ot" + raw).digest()[:LABEL_BYTES]


def ot_send(channel: Channel, pairs: list[tuple[bytes, bytes]], rng: StreamRng | None = None) -> None:
    """Sender side: transfers pairs[i][c_i] for the receiver's hidden c_i."""
    if not pairs:
        return
    if rng is None:
        rng = StreamRng()
    a = rng.getrandbits(_OT_EXP_BITS) | 1
    big_a = int(gmpy2.powmod(_OT_G, a, _OT_P))
    inv_a_a = int(gmpy2.invert(gmpy2.powmod(big_a, a, _OT_P), _OT_P))
    channel.send_frame(TAG_OT_MSG, big_a.to_bytes(_OT_POINT_BYTES, "little"))
    frame = channel.recv_frame()
    if frame.tag != TAG_OT_MSG or len(frame.payload) != _OT_POINT_BYTES * len(pairs):
        raise ProtocolError("OT receiver message malformed")
    blob = []
    for i, (m0, m1) in enumerate(pairs):
        if len(m0) != LABEL_BYTES or len(m1) != LABEL_BYTES:
            raise ParameterError("OT messages must be label-sized")
        b_i = int.from_bytes(
            frame.payload[i * _OT_POINT_BYTES : (i + 1) * _OT_POINT_BYTES], "little"
        )
        b_a = int(gmpy2.powmod(b_i, a, _OT_P))
        k0 = _ot_key(b_a)
        k1 = _ot_key(b_a * inv_a_a % _OT_P)
        blob.append(_bxor(k0, m0) + _bxor(k1, m1))
    channel.send_frame(TAG_OT_MSG, b"".join(blob))


def ot_receive(channel: Channel, choices: list[int], rng: StreamRng | None = None) -> list[bytes]:
    if not choices:
        return []
    if rng is None:
        rng = StreamRng()
    frame = channel.recv_frame()
    if frame.tag != TAG_OT_MSG or len(frame.payload) != _OT_POINT_BYTES:
        raise ProtocolError("OT sender setup message malformed")
    big_a = int.from_bytes(frame.payload, "little")
    keys = []
    points = []
    for c in choices:
        b = rng.getrandbits(_OT_EXP_BITS) | 1
        point = int(gmpy2.powmod(_OT_G, b, _OT_P))
        if c & 1:
            point = point * big_a % _OT_P
        points.append(point.to_bytes(_OT_POINT_BYTES, "little"))
        keys.append(_ot_key(int(gmpy2.powmod(big_a, b, _OT_P))))
    channel.send_frame(TAG_OT_MSG, b"".join(points))
    frame = channel.recv_frame()
    if frame.tag != TAG_OT_MSG or len(frame.payload) != 2 * LABEL_BYTES * len(choices):
        raise ProtocolError("OT sender transfer message malformed")
    out = []
    for i, (c, k) in enumerate(zip(choices, keys)):
        base = (2 * i + (c & 1)) * LABEL_BYTES
        out.append(_bxor(k, frame.payload[base : base + LABEL_BYTES]))
    return out


# --- one garbled execution over a channel ----------------------------------


def _encode_decode_table(decode: list[tuple[str, int]]) -> bytes:
    return b"".join(bytes([0 if kind == "const" else 1, v]) for kind, v in decode)


def _parse_decode_table(blob: bytes, count: int) -> list[tuple[str, int]]:
    if len(blob) != 2 * count:
        raise ProtocolError("decode table size mismatch")
    return [
        ("const" if blob[2 * i] == 0 else "bit", blob[2 * i + 1]) for i in range(count)
    ]


def run_yao(
    channel: Channel,
    role: str,
    circuit: Circuit,
    my_inputs: list[int],
    output_to: str,
    rng: StreamRng | None = None,
) -> list[int] | None:
    """One garbled execution. Returns decoded output bits for the parties
    named by output_to; None for the other party."""
    if output_to not in (OUTPUT_TO_GARBLER, OUTPUT_TO_EVALUATOR, OUTPUT_TO_BOTH):
        raise ParameterError(f"bad output_to {output_to!r}")
    if rng is None:
        rng = StreamRng()
    chash = circuit_hash(circuit)
    n_out = len(circuit.outputs)

    if role == "garbler":
        if len(my_inputs) != len(circuit.garbler_inputs):
            raise ParameterError("garbler input length mismatch")
        g = garble(circuit, rng)
        my_labels = b"".join(
            g.label(2 * w, v) for w, v in zip(circuit.garbler_inputs, my_inputs)
        )
        decode_blob = b""
        if output_to in (OUTPUT_TO_EVALUATOR, OUTPUT_TO_BOTH):
            decode_blob = _encode_decode_table(decode_table(g))
        channel.send_frame(
            TAG_GC_TABLES,
            chash
            + struct.pack("<II", len(g.tables), len(decode_blob))
            + g.tables
            + my_labels
            + decode_blob,
        )
        pairs = [
            (g.label(2 * w, 0), g.label(2 * w, 1)) for w in circuit.evaluator_inputs
        ]
        ot_send(channel, pairs, rng.spawn(b"ot"))
        frame = channel.recv_frame()
        if frame.tag != TAG_OUTPUT:
            raise ProtocolError("expected OUTPUT frame from evaluator")
        if output_to == OUTPUT_TO_EVALUATOR:
            if frame.payload != b"":
                raise ProtocolError("expected empty OUTPUT acknowledgement")
            return None
        if len(frame.payload) != n_out * LABEL_BYTES:
            raise ProtocolError("output label blob size mismatch")
        out_labels = [
            None
            if r in (CONST0, CONST1)
            else frame.payload[i * LABEL_BYTES : (i + 1) * LABEL_BYTES]
            for i, r in enumerate(circuit.outputs)
        ]
        return garbler_decode(g, out_labels)

    if role != "evaluator":
        raise ParameterError(f"bad role {role!r}")
    if len(my_inputs) != len(circuit.evaluator_inputs):
        raise ParameterError("evaluator input length mismatch")
    frame = channel.recv_frame()
    if frame.tag != TAG_GC_TABLES:
        raise ProtocolError("expected GC_TABLES frame")
    if frame.payload[:32] != chash:
        raise ProtocolError("circuit hash mismatch between parties")
    tables_len, decode_len = struct.unpack_from("<II", frame.payload, 32)
    off = 40
    tables = frame.payload[off : off + tables_len]
    off += tables_len
    n_g = len(circuit.garbler_inputs)
    garbler_labels = frame.payload[off : off + n_g * LABEL_BYTES]
    off += n_g * LABEL_BYTES
    decode_blob = frame.payload[off : off + decode_len]
    if len(garbler_labels) != n_g * LABEL_BYTES or len(decode_blob) != decode_len:
        raise ProtocolError("truncated GC_TABLES payload")
    my_labels = ot_receive(channel, my_inputs, rng.spawn(b"ot"))
    input_labels = {
        w: garbler_labels[i * LABEL_BYTES : (i + 1) * LABEL_BYTES]
        for i, w in enumerate(circuit.garbler_inputs)
    }
    input_labels.update(zip(circuit.evaluator_inputs, my_labels))
    out_labels = evaluate(circuit, tables, input_labels)
    if output_to in (OUTPUT_TO_GARBLER, OUTPUT_TO_BOTH):
        channel.send_frame(
            TAG_OUTPUT,
            b"".join(l if l is not None else bytes(LABEL_BYTES) for l in out_labels),
        )
    else:
        channel.send_frame(TAG_OUTPUT, b"")
    if output_to in (OUTPUT_TO_EVALUATOR, OUTPUT_TO_BOTH):
        if decode_len == 0:
            raise ProtocolError("garbler withheld the decode table")
        return decode_outputs(_parse_decode_table(decode_blob, n_out), out_labels)
    return None
