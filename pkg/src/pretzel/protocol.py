"""Two-party protocol flows: setup, spam, and topic extraction.

Roles. The provider owns the model and the AHE secret key; the client
holds the encrypted model after setup and runs the homomorphic dot
products on its own emails. Each classification blinds the packed dot
result, ships it to the provider for decryption, and finishes inside a
garbled circuit that removes the blinding, so the provider sees only
blinded sums and the designated party sees only the final answer:

* spam: provider garbles, client evaluates, client learns the verdict.
* topics: client garbles, provider evaluates, provider learns the topic.

Every run_* call starts with a HELLO handshake carrying a version byte
and a hash of the shared session config; any disagreement or mid-flow
error sends ABORT and raises, leaving no partial output on either side.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from . import ahe, gc, packing
from .errors import (
    CapabilityError,
    ModelError,
    ParameterError,
    PretzelError,
    ProtocolError,
    TransportError,
)
from .model import FeatureVector, LinearModel, QuantizedModel, score_categories
from .packing import EncryptedModel, PackingLayout
from .rng import StreamRng
from .transport import (
    TAG_ABORT,
    TAG_DOT_BLINDED,
    TAG_HELLO,
    TAG_MODEL_CHUNK,
    Channel,
)

PROTOCOL_VERSION = 1
_CHUNK = 1 << 20

FUNCTION_SPAM = "spam"
FUNCTION_TOPIC_FULL = "topic_full"
FUNCTION_TOPIC_DECOMPOSED = "topic_decomposed"
FUNCTIONS = (FUNCTION_SPAM, FUNCTION_TOPIC_FULL, FUNCTION_TOPIC_DECOMPOSED)

ROLE_PROVIDER = "provider"
ROLE_CLIENT = "client"


@dataclass(frozen=True)
class SessionConfig:
    function: str
    layout: PackingLayout
    ahe_params: ahe.AheParams
    num_features: int
    num_categories: int
    threshold_tau_q: int = 0
    b_prime: int = 0

    def __post_init__(self):
        if self.function not in FUNCTIONS:
            raise ParameterError(f"unknown function {self.function!r}")
        if self.num_features < 1 or self.num_categories < 1:
            raise ParameterError("model dimensions must be positive")
        if self.function == FUNCTION_SPAM and self.num_categories != 2:
            raise ParameterError("spam requires exactly 2 categories")
        if self.function == FUNCTION_TOPIC_DECOMPOSED:
            if not 1 <= self.b_prime <= self.num_categories:
                raise ParameterError("b_prime must be in [1, B]")
        if self.layout.b_slot > 64:
            raise ParameterError("b_slot > 64 cannot feed the unblinding circuit")


def config_hash(cfg: SessionConfig) -> bytes:
    canon = repr(
        (
            PROTOCOL_VERSION,
            cfg.function,
            cfg.layout,
            cfg.ahe_params,
            cfg.num_features,
            cfg.num_categories,
            cfg.threshold_tau_q,
            cfg.b_prime,
        )
    )
    return hashlib.sha256(canon.encode()).digest()


@dataclass
class ProviderState:
    cfg: SessionConfig
    keypair: ahe.KeyPair


@dataclass
class ClientState:
    cfg: SessionConfig
    emodel: EncryptedModel
    pk: object


@dataclass(frozen=True)
class CandidateSet:
    """B' distinct 1-based category indexes, ascending."""

    indexes: tuple[int, ...]

    def __post_init__(self):
        if not self.indexes:
            raise ParameterError("candidate set must be non-empty")
        prev = 0
        for idx in self.indexes:
            if idx <= prev:
                raise ParameterError("candidate indexes must be ascending and distinct")
            prev = idx


@dataclass(frozen=True)
class BlindingVector:
    noises: tuple[int, ...]  # one per blinded (readable) slot


def _abort(channel: Channel, message: str) -> None:
    try:
        channel.send_frame(TAG_ABORT, message.encode()[:1024])
    except TransportError:
        pass


def _recv(channel: Channel, expected_tag: int):
    frame = channel.recv_frame()
    if frame.tag == TAG_ABORT:
        raise ProtocolError(f"peer aborted: {frame.payload.decode(errors='replace')}")
    if frame.tag != expected_tag:
        raise ProtocolError(f"expected tag {expected_tag:#x}, got {frame.tag:#x}")
    return frame


def handshake(channel: Channel, cfg: SessionConfig) -> None:
    """Exchange version + config hash; abort before any crypto on mismatch."""
    mine = bytes([PROTOCOL_VERSION]) + config_hash(cfg)
    channel.send_frame(TAG_HELLO, mine)
    theirs = _recv(channel, TAG_HELLO).payload
    if theirs != mine:
        _abort(channel, "config hash mismatch")
        raise ProtocolError("session config hash mismatch with peer")


def _session(channel: Channel, cfg: SessionConfig, body):
    """Handshake, run, and convert any failure into a clean abort."""
    handshake(channel, cfg)
    try:
        return body()
    except TransportError:
        raise
    except PretzelError as e:
        _abort(channel, str(e))
        raise


# --- setup -----------------------------------------------------------------


def run_setup(
    channel: Channel,
    role: str,
    cfg: SessionConfig,
    qmodel: QuantizedModel | None = None,
    keypair: ahe.KeyPair | None = None,
    rng: StreamRng | None = None,
):
    """Provider encrypts and streams the model; client stores it.

    Returns ProviderState or ClientState according to role.
    """
    if role == ROLE_PROVIDER:
        if qmodel is None or keypair is None:
            raise ParameterError("provider setup needs a quantized model and keypair")
        if qmodel.num_features < 1:
            raise ModelError("cannot set up a zero-feature model")
        if (qmodel.num_features, qmodel.num_categories) != (
            cfg.num_features,
            cfg.num_categories,
        ):
            raise ParameterError("model dimensions disagree with session config")

        def body():
            packed = packing.pack_model(qmodel, cfg.layout)
            emodel = packing.encrypt_model(keypair, packed, rng)
            blob = packing.serialize_encrypted_model(emodel, cfg.ahe_params, keypair.pk)
            for off in range(0, len(blob), _CHUNK):
                channel.send_frame(TAG_MODEL_CHUNK, blob[off : off + _CHUNK])
            channel.send_frame(TAG_MODEL_CHUNK, b"")
            return ProviderState(cfg, keypair)

    elif role == ROLE_CLIENT:

        def body():
            parts = []
            while True:
                payload = _recv(channel, TAG_MODEL_CHUNK).payload
                if not payload:
                    break
                parts.append(payload)
            emodel, params, pk = packing.deserialize_encrypted_model(b"".join(parts))
            if params != cfg.ahe_params or emodel.layout != cfg.layout:
                raise ProtocolError("streamed model disagrees with session config")
            if (emodel.num_features, emodel.num_categories) != (
                cfg.num_features,
                cfg.num_categories,
            ):
                raise ProtocolError("streamed model dimensions disagree with config")
            return ClientState(cfg, emodel, pk)

    else:
        raise ParameterError(f"bad role {role!r}")
    return _session(channel, cfg, body)


# --- blinding ---------------------------------------------------------------


def blind(
    pk,
    ct: ahe.Ciphertext,
    slot_count: int,
    layout: PackingLayout,
    rng: StreamRng,
    noises: tuple[int, ...] | None = None,
) -> tuple[ahe.Ciphertext, BlindingVector]:
    """Add encrypted noise so the decrypter sees only blinded sums.

    The first slot_count slots get uniform noise in [0, 2^(b+lambda)),
    which the slot width b+lambda+1 absorbs without wrapping (statistical
    hiding gap 2^-lambda). Remaining slots are padded too: full-range
    mod-t on the rotating backend (they may hold rotation garbage),
    [0, 2^(b+lambda)) on Paillier where a wider pad could carry into the
    neighbouring slot's bit field.
    """
    params = pk.params
    p = layout.p
    if not 1 <= slot_count <= p:
        raise ParameterError("slot_count out of range")
    read_bound = 1 << (layout.b + layout.lambda_blind)
    pad_bound = params.plaintext_modulus_t if params.supports_rotation else read_bound
    if noises is not None:
        if len(noises) != slot_count or any(not 0 <= n < read_bound for n in noises):
            raise ParameterError("explicit noises malformed")
        read = list(noises)
    else:
        read = [rng.randrange(read_bound) for _ in range(slot_count)]
    slots = tuple(read) + tuple(rng.randrange(pad_bound) for _ in range(p - slot_count))
    blinded = ahe.add(pk, ct, ahe.enc(pk, ahe.PackedPlaintext(slots), rng))
    return blinded, BlindingVector(tuple(read))


# --- classification sessions -------------------------------------------------


def _serialize_cts(cts: list[ahe.Ciphertext]) -> bytes:
    return struct.pack("<I", len(cts)) + b"".join(
        ahe.serialize_ciphertext(ct) for ct in cts
    )


def _deserialize_cts(params: ahe.AheParams, payload: bytes) -> list[ahe.Ciphertext]:
    (count,) = struct.unpack_from("<I", payload, 0)
    size = ahe.ciphertext_size(params)
    if len(payload) != 4 + count * size:
        raise ProtocolError("blinded ciphertext payload size mismatch")
    return [
        ahe.deserialize_ciphertext(params, payload[4 + i * size : 4 + (i + 1) * size])
        for i in range(count)
    ]


def _noise_bits(noises: list[int], w: int) -> list[int]:
    out = []
    for n in noises:
        out.extend(gc.int_to_bits(n, w))
    return out


def run_spam(
    channel: Channel,
    role: str,
    state,
    fv: FeatureVector | None = None,
    rng: StreamRng | None = None,
):
    """One private spam classification. The client learns the category
    (0 = spam, 1 = not spam), exactly classify_quantized's answer; the
    provider learns nothing and returns None."""
    cfg = state.cfg
    if cfg.function != FUNCTION_SPAM:
        raise ParameterError("session config is not a spam config")
    w = cfg.layout.b_slot
    circuit = gc.build_unblind_threshold(w, cfg.threshold_tau_q)
    if rng is None:
        rng = StreamRng()

    if role == ROLE_CLIENT:
        if fv is None:
            raise ParameterError("client needs a feature vector")

        def body():
            result = packing.packed_dot(state.pk, state.emodel, fv, cfg.layout)
            assert len(result.ciphertexts) == 1  # B = 2 always fits one ciphertext
            blinded, bv = blind(state.pk, result.ciphertexts[0], 2, cfg.layout, rng)
            channel.send_frame(TAG_DOT_BLINDED, _serialize_cts([blinded]))
            bits = gc.run_yao(
                channel,
                "evaluator",
                circuit,
                _noise_bits(list(bv.noises), w),
                gc.OUTPUT_TO_EVALUATOR,
                rng.spawn(b"yao"),
            )
            return 0 if bits[0] else 1

    elif role == ROLE_PROVIDER:

        def body():
            payload = _recv(channel, TAG_DOT_BLINDED).payload
            (ct,) = _deserialize_cts(cfg.ahe_params, payload)
            slots = ahe.dec(state.keypair.sk, ct).slots
            gin = gc.int_to_bits(slots[0], w) + gc.int_to_bits(slots[1], w)
            gc.run_yao(
                channel,
                "garbler",
                circuit,
                gin,
                gc.OUTPUT_TO_EVALUATOR,
                rng.spawn(b"yao"),
            )
            return None

    else:
        raise ParameterError(f"bad role {role!r}")
    return _session(channel, cfg, body)


def _argmax_circuit(cfg: SessionConfig, count: int) -> gc.Circuit:
    index_width = cfg.num_categories.bit_length()
    return gc.build_unblind_argmax(count, cfg.layout.b_slot, index_width)


def run_topic_full(
    channel: Channel,
    role: str,
    state,
    fv: FeatureVector | None = None,
    rng: StreamRng | None = None,
):
    """Full topic extraction over all B categories. The provider learns
    the winning 1-based category index; the client returns None."""
    cfg = state.cfg
    if cfg.function != FUNCTION_TOPIC_FULL:
        raise ParameterError("session config is not a topic_full config")
    b = cfg.num_categories
    w = cfg.layout.b_slot
    circuit = _argmax_circuit(cfg, b)
    index_width = cfg.num_categories.bit_length()
    if rng is None:
        rng = StreamRng()

    if role == ROLE_CLIENT:
        if fv is None:
            raise ParameterError("client needs a feature vector")

        def body():
            result = packing.packed_dot(state.pk, state.emodel, fv, cfg.layout)
            blinded_cts = []
            noises: list[int] = []
            for ci, ct in enumerate(result.ciphertexts):
                readable = sum(1 for c, _ in result.slot_map.values() if c == ci)
                bct, bv = blind(state.pk, ct, readable, cfg.layout, rng)
                blinded_cts.append(bct)
                noises.extend(bv.noises)
            channel.send_frame(TAG_DOT_BLINDED, _serialize_cts(blinded_cts))
            gin = _noise_bits(noises, w)
            for j in range(b):  # index payloads, 1-based
                gin.extend(gc.int_to_bits(j + 1, index_width))
            gc.run_yao(
                channel, "garbler", circuit, gin, gc.OUTPUT_TO_EVALUATOR, rng.spawn(b"yao")
            )
            return None

    elif role == ROLE_PROVIDER:

        def body():
            payload = _recv(channel, TAG_DOT_BLINDED).payload
            cts = _deserialize_cts(cfg.ahe_params, payload)
            shape = packing.GridShape(cfg.num_features, b, cfg.layout.p, cfg.layout.mode)
            if len(cts) != shape.result_ct_count:
                raise ProtocolError("wrong blinded ciphertext count")
            slot_map = shape.slot_map()
            decrypted = [ahe.dec(state.keypair.sk, ct).slots for ct in cts]
            ein = []
            for j in range(b):
                ci, slot = slot_map[j]
                ein.extend(gc.int_to_bits(decrypted[ci][slot], w))
            bits = gc.run_yao(
                channel, "evaluator", circuit, ein, gc.OUTPUT_TO_EVALUATOR, rng.spawn(b"yao")
            )
            return gc.bits_to_int(bits)

    else:
        raise ParameterError(f"bad role {role!r}")
    return _session(channel, cfg, body)


def select_candidates(
    client_model: LinearModel, fv: FeatureVector, b_prime: int
) -> CandidateSet:
    """Client-side pruning: the b_prime highest-scoring categories under
    the client's own (possibly weaker) model, as ascending 1-based ids."""
    b = client_model.num_categories
    if b_prime > b:
        raise ParameterError("b_prime exceeds the category count")
    scores = score_categories(client_model, fv)
    ranked = sorted(range(b), key=lambda j: (-scores[j], j))
    return CandidateSet(tuple(sorted(j + 1 for j in ranked[:b_prime])))


def run_topic_decomposed(
    channel: Channel,
    role: str,
    state,
    fv: FeatureVector | None = None,
    candidates: CandidateSet | None = None,
    rng: StreamRng | None = None,
):
    """Candidate-pruned topic extraction: only B' extracted, blinded
    category slots cross the wire. The provider learns the winning
    candidate's 1-based category index; the client returns None."""
    cfg = state.cfg
    if cfg.function != FUNCTION_TOPIC_DECOMPOSED:
        raise ParameterError("session config is not a topic_decomposed config")
    if not cfg.ahe_params.supports_rotation:
        raise CapabilityError("topic_decomposed requires a rotation-capable backend")
    w = cfg.layout.b_slot
    circuit = _argmax_circuit(cfg, cfg.b_prime)
    index_width = cfg.num_categories.bit_length()
    if rng is None:
        rng = StreamRng()

    if role == ROLE_CLIENT:
        if fv is None or candidates is None:
            raise ParameterError("client needs a feature vector and candidate set")
        if len(candidates.indexes) != cfg.b_prime:
            raise ParameterError("candidate set size disagrees with config b_prime")
        if candidates.indexes[-1] > cfg.num_categories:
            raise ParameterError("candidate index exceeds B")

        def body():
            result = packing.packed_dot(state.pk, state.emodel, fv, cfg.layout)
            blinded_cts = []
            noises = []
            for idx in candidates.indexes:
                ct = packing.extract_slot(state.pk, result, idx, cfg.layout)
                bct, bv = blind(state.pk, ct, 1, cfg.layout, rng)
                blinded_cts.append(bct)
                noises.append(bv.noises[0])
            channel.send_frame(TAG_DOT_BLINDED, _serialize_cts(blinded_cts))
            gin = _noise_bits(noises, w)
            for idx in candidates.indexes:
                gin.extend(gc.int_to_bits(idx, index_width))
            gc.run_yao(
                channel, "garbler", circuit, gin, gc.OUTPUT_TO_EVALUATOR, rng.spawn(b"yao")
            )
            return None

    elif role == ROLE_PROVIDER:

        def body():
            payload = _recv(channel, TAG_DOT_BLINDED).payload
            cts = _deserialize_cts(cfg.ahe_params, payload)
            if len(cts) != cfg.b_prime:
                raise ProtocolError("expected exactly b_prime blinded ciphertexts")
            ein = []
            for ct in cts:
                # extract_slot rotated each candidate into coefficient 0
                ein.extend(gc.int_to_bits(ahe.dec(state.keypair.sk, ct).slots[0], w))
            bits = gc.run_yao(
                channel, "evaluator", circuit, ein, gc.OUTPUT_TO_EVALUATOR, rng.spawn(b"yao")
            )
            return gc.bits_to_int(bits)

    else:
        raise ParameterError(f"bad role {role!r}")
    return _session(channel, cfg, body)
