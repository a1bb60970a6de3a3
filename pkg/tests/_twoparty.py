"""Shared two-party test harness: runs provider and client over an
in-memory channel pair on two threads and reports both results."""

from __future__ import annotations

import random
import threading

from pretzel import ahe, model, packing, protocol
from pretzel.rng import StreamRng
from pretzel.transport import pair_inmemory


def run_pair(provider_fn, client_fn):
    """provider_fn/client_fn: channel -> result. Exceptions propagate."""
    ch_p, ch_c = pair_inmemory()
    out = {}
    errors = {}

    def provider():
        try:
            out["provider"] = provider_fn(ch_p)
        except BaseException as e:  # re-raised on the main thread below
            errors["provider"] = e

    t = threading.Thread(target=provider)
    t.start()
    try:
        out["client"] = client_fn(ch_c)
    except BaseException as e:
        errors["client"] = e
    finally:
        ch_c.close()
        t.join()
        ch_p.close()
    out["channels"] = (ch_p, ch_c)
    out["errors"] = errors
    return out


def toy_qmodel(rnd: random.Random, n: int, b: int, kind="multinomial_nb", bits=5):
    qw = [[rnd.randrange(1 << bits) for _ in range(n)] for _ in range(b)]
    qp = [rnd.randrange(1 << bits) for _ in range(b)]
    return model.QuantizedModel(
        kind, {f"t{i:03d}": i for i in range(n)}, qw, qp, 0.0, 4, bits,
        [f"c{j}" for j in range(b)],
    )


def rand_fv(rnd: random.Random, n: int, f_in: int, max_terms=6):
    count = rnd.randrange(1, min(n, max_terms) + 1)
    ids = sorted(rnd.sample(range(n), count))
    return model.FeatureVector(tuple((i, rnd.randrange(1, 1 << f_in)) for i in ids))


def make_session(function, n, b, *, backend=ahe.BACKEND_BV, ring_n=8,
                 mode=packing.MODE_WITHIN_ROW, b_in=5, f_in=3, l_max=8,
                 lam=6, tau_q=0, b_prime=0, key_seed=b"K" * 32):
    """Session config + keypair for toy two-party runs."""
    b_slot = packing.slot_width_for(b_in, f_in, l_max, lam)
    if backend == ahe.BACKEND_BV:
        params = ahe.AheParams(backend, b_slot, ring_degree_n=ring_n)
    else:
        params = ahe.AheParams(backend, b_slot, modulus_bits=128)
    layout = packing.make_layout(params, b_in, f_in, l_max, lam, mode)
    cfg = protocol.SessionConfig(
        function, layout, params, n, b, threshold_tau_q=tau_q, b_prime=b_prime
    )
    return cfg, ahe.keygen(params, key_seed)


def do_setup(cfg, kp, qmodel, seed=b"setup"):
    out = run_pair(
        lambda ch: protocol.run_setup(ch, "provider", cfg, qmodel, kp, StreamRng(seed)),
        lambda ch: protocol.run_setup(ch, "client", cfg),
    )
    assert not out["errors"], out["errors"]
    return out["provider"], out["client"]
