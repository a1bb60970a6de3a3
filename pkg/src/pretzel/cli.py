"""Command-line driver.

Subcommands map 1:1 to module operations: train/quantize/select-features
(model), setup/classify/extract (protocol, over TCP), bench (micro
constants in CostModel form), estimate (the analytical cost table), and
search (the client-side index).

Corpus files are TSV: one document per line, "label<TAB>text". Shared
session parameters can come from a --config file of key=value lines
(same keys as the long flags, underscores for dashes); explicit flags
win. Exit codes: 0 ok, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import threading
import time

from . import ahe, costs, gc, model, packing, protocol, search as search_mod, transport
from .errors import PretzelError
from .rng import StreamRng

_BACKENDS = {"paillier": ahe.BACKEND_PAILLIER, "xpir-bv": ahe.BACKEND_BV}


def _read_corpus(path: str) -> model.Corpus:
    docs = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise PretzelError(f"{path}:{lineno}: expected 'label<TAB>text'")
            label, text = line.split("\t", 1)
            docs.append((text, label))
    return model.Corpus(tuple(docs))


def _read_config(path: str) -> dict[str, str]:
    out = {}
    with open(path) as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise PretzelError(f"bad config line {line!r}")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def _addr(spec: str) -> tuple[str, int]:
    host, _, port = spec.rpartition(":")
    return host or "127.0.0.1", int(port)


def _crypto_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=sorted(_BACKENDS), default="xpir-bv")
    p.add_argument("--modulus-bits", type=int, default=1024)
    p.add_argument("--ring-n", type=int, default=1024)
    p.add_argument("--sigma", type=float, default=3.2)
    p.add_argument("--f-in", type=int, default=6)
    p.add_argument("--l-max", type=int, default=692)
    p.add_argument("--lambda", dest="lambda_blind", type=int, default=12)
    p.add_argument("--mode", choices=(packing.MODE_WITHIN_ROW, packing.MODE_ACROSS_ROW),
                   default=packing.MODE_WITHIN_ROW)


def _session_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-q", type=int, default=0)
    p.add_argument("--b-prime", type=int, default=0)
    p.add_argument("--seed", default=None, help="hex rng seed for reproducible runs")


def _make_params(args, b_in: int) -> tuple[ahe.AheParams, packing.PackingLayout]:
    b_slot = packing.slot_width_for(b_in, args.f_in, args.l_max, args.lambda_blind)
    params = ahe.AheParams(
        _BACKENDS[args.backend],
        b_slot,
        modulus_bits=args.modulus_bits,
        ring_degree_n=args.ring_n,
        error_stddev=args.sigma,
    )
    layout = packing.make_layout(
        params, b_in, args.f_in, args.l_max, args.lambda_blind, args.mode
    )
    return params, layout


def _make_cfg(args, function: str, b_in: int, n: int, b: int) -> protocol.SessionConfig:
    params, layout = _make_params(args, b_in)
    return protocol.SessionConfig(
        function, layout, params, n, b,
        threshold_tau_q=args.tau_q, b_prime=args.b_prime,
    )


def _rng(args, label: bytes) -> StreamRng:
    if args.seed is None:
        return StreamRng()
    return StreamRng(bytes.fromhex(args.seed)).spawn(label)


def _load_quantized(path: str) -> model.QuantizedModel:
    m = model.load_model(path)
    if not isinstance(m, model.QuantizedModel):
        raise PretzelError(f"{path} is not a quantized model (run quantize first)")
    return m


def _load_plain(path: str) -> model.LinearModel:
    m = model.load_model(path)
    if not isinstance(m, model.LinearModel):
        raise PretzelError(f"{path} is a quantized model; expected a plain one")
    return m


def _read_vocab(path: str) -> dict[str, int]:
    with open(path) as f:
        return {tok: i for i, tok in enumerate(line.strip() for line in f) if tok}


def _email_fv(args) -> model.FeatureVector:
    with open(args.email) as f:
        text = f.read()
    return model.extract_features(text, _read_vocab(args.vocab), args.f_in)


# --- offline model commands -------------------------------------------------


def _cmd_train(args) -> int:
    corpus = _read_corpus(args.corpus)
    m = model.train_nb(corpus, args.kind, spam_label=args.spam_label)
    model.save_model(m, args.output)
    if args.vocab_out:
        id_to_token = sorted(m.vocab, key=m.vocab.get)
        with open(args.vocab_out, "w") as f:
            f.write("\n".join(id_to_token) + "\n")
    print(f"trained {args.kind}: N={m.num_features} B={m.num_categories}")
    return 0


def _cmd_quantize(args) -> int:
    m = _load_plain(args.model)
    qm = model.quantize(m, args.b_in, args.scale)
    model.save_model(qm, args.output)
    if args.tau is not None:
        print(f"tau_q={model.quantize_threshold(args.tau, args.scale)}")
    print(f"quantized: b_in={qm.b_in} scale={qm.scale_s} offset={qm.offset_m:.6f}")
    return 0


def _cmd_select_features(args) -> int:
    m = _load_plain(args.model)
    corpus = _read_corpus(args.corpus)
    reduced = model.select_features(m, corpus, args.n_prime)
    model.save_model(reduced, args.output)
    print(f"kept {reduced.num_features} of {m.num_features} features")
    return 0


# --- two-party commands -------------------------------------------------------


def _serve(args, handler) -> int:
    """Accept args.sessions connections, one protocol session each."""
    host, port = _addr(args.listen)
    listener = transport.listen(host, port)
    if args.port_file:
        with open(args.port_file, "w") as f:
            f.write(f"{listener.address[0]} {listener.address[1]}\n")
    try:
        threads = []
        for _ in range(args.sessions):
            ch = listener.accept()
            t = threading.Thread(target=handler, args=(ch,))
            t.start()
            threads.append(t)
        for t in threads:
            t.join()
    finally:
        listener.close()
    return 0


def _cmd_setup(args) -> int:
    if args.role == "provider":
        qm = _load_quantized(args.model)
        cfg = _make_cfg(args, args.function, qm.b_in, qm.num_features, qm.num_categories)
        kp = ahe.keygen(cfg.ahe_params, bytes.fromhex(args.key_seed))

        def handler(ch):
            try:
                protocol.run_setup(ch, "provider", cfg, qm, kp, _rng(args, b"enc"))
            finally:
                ch.close()

        return _serve(args, handler)

    cfg = _make_cfg(args, args.function, args.b_in, args.n_features, args.categories)
    ch = transport.connect(*_addr(args.connect))
    try:
        st = protocol.run_setup(ch, "client", cfg)
    finally:
        ch.close()
    blob = packing.serialize_encrypted_model(st.emodel, cfg.ahe_params, st.pk)
    with open(args.store, "wb") as f:
        f.write(blob)
    print(f"stored encrypted model: {len(blob)} bytes, "
          f"{len(st.emodel.weight_cts)} weight + {len(st.emodel.prior_cts)} prior cts")
    return 0


def _client_state(args, function: str) -> protocol.ClientState:
    with open(args.store, "rb") as f:
        emodel, params, pk = packing.deserialize_encrypted_model(f.read())
    cfg = protocol.SessionConfig(
        function, emodel.layout, params, emodel.num_features, emodel.num_categories,
        threshold_tau_q=args.tau_q, b_prime=args.b_prime,
    )
    return protocol.ClientState(cfg, emodel, pk)


def _cmd_classify(args) -> int:
    if args.role == "noprivacy":
        qm = _load_quantized(args.model)
        fv = model.extract_features(open(args.email).read(), qm.vocab, args.f_in)
        verdict = model.classify_quantized(qm, fv, args.tau_q)
        print(f"category={verdict} label={qm.category_labels[verdict]}")
        return 0

    if args.role == "provider":
        qm = _load_quantized(args.model)
        cfg = _make_cfg(args, "spam", qm.b_in, qm.num_features, qm.num_categories)
        kp = ahe.keygen(cfg.ahe_params, bytes.fromhex(args.key_seed))
        pst = protocol.ProviderState(cfg, kp)

        def handler(ch):
            try:
                protocol.run_spam(ch, "provider", pst, rng=_rng(args, b"spam"))
            finally:
                ch.close()

        return _serve(args, handler)

    st = _client_state(args, "spam")
    fv = _email_fv(args)
    ch = transport.connect(*_addr(args.connect))
    try:
        verdict = protocol.run_spam(ch, "client", st, fv, _rng(args, b"spam"))
    finally:
        ch.close()
    print(f"category={verdict} ({'spam' if verdict == 0 else 'not spam'})")
    return 0


def _cmd_extract(args) -> int:
    function = "topic_full" if args.function == "full" else "topic_decomposed"
    if args.role == "provider":
        qm = _load_quantized(args.model)
        cfg = _make_cfg(args, function, qm.b_in, qm.num_features, qm.num_categories)
        kp = ahe.keygen(cfg.ahe_params, bytes.fromhex(args.key_seed))
        pst = protocol.ProviderState(cfg, kp)
        results = []

        def handler(ch):
            try:
                run = (protocol.run_topic_full if function == "topic_full"
                       else protocol.run_topic_decomposed)
                results.append(run(ch, "provider", pst, rng=_rng(args, b"topic")))
            finally:
                ch.close()

        rc = _serve(args, handler)
        for topic in results:
            print(f"topic={topic}")
        return rc

    st = _client_state(args, function)
    fv = _email_fv(args)
    ch = transport.connect(*_addr(args.connect))
    try:
        if function == "topic_full":
            protocol.run_topic_full(ch, "client", st, fv, _rng(args, b"topic"))
        else:
            if args.candidates:
                cand = protocol.CandidateSet(
                    tuple(sorted(int(v) for v in args.candidates.split(","))))
            elif args.candidate_model:
                cm = _load_plain(args.candidate_model)
                cand = protocol.select_candidates(cm, fv, args.b_prime)
            else:
                raise PretzelError("decomposed extract needs --candidates or "
                                   "--candidate-model")
            protocol.run_topic_decomposed(ch, "client", st, fv, cand, _rng(args, b"topic"))
    finally:
        ch.close()
    print("extraction done (provider learns the topic)")
    return 0


# --- bench / estimate ---------------------------------------------------------


def _median_time(fn, iters: int) -> float:
    samples = []
    for _ in range(iters):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def _bench_backend(backend: str, args) -> dict[str, float]:
    b_slot = 41
    if backend == ahe.BACKEND_PAILLIER:
        params = ahe.AheParams(backend, b_slot, modulus_bits=args.modulus_bits)
        tag = "pail"
    else:
        params = ahe.AheParams(backend, b_slot, ring_degree_n=args.ring_n,
                               error_stddev=args.sigma)
        tag = "xpir"
    rng = StreamRng(b"bench")
    kp = ahe.keygen(params, b"B" * 32)
    pt = ahe.PackedPlaintext(
        tuple(rng.randrange(1 << 20) for _ in range(params.slots_p)))
    ct = ahe.enc(kp.pk, pt, rng)
    out = {
        f"e_{tag}": _median_time(lambda: ahe.enc(kp.pk, pt, rng), args.iters),
        f"d_{tag}": _median_time(lambda: ahe.dec(kp.sk, ct), args.iters),
        f"a_{tag}": _median_time(lambda: ahe.add(kp.pk, ct, ct), args.iters),
        f"c_{tag}": float(ahe.ciphertext_size(params)),
    }
    if params.supports_rotation:
        out["s"] = _median_time(lambda: ahe.rotate_left(kp.pk, ct, 7), args.iters)
    return out


def _bench_yao(args) -> dict[str, float]:
    circuit = gc.build_less_than(32)
    words = 2  # one garbler + one evaluator input word
    times, sizes = [], []
    for i in range(args.iters):
        ch_g, ch_e = transport.pair_inmemory()
        seed = StreamRng(i.to_bytes(4, "little"))
        t = threading.Thread(
            target=gc.run_yao,
            args=(ch_g, "garbler", circuit, [0] * 32, gc.OUTPUT_TO_EVALUATOR,
                  seed.spawn(b"g")),
        )
        t0 = time.perf_counter()
        t.start()
        gc.run_yao(ch_e, "evaluator", circuit, [1] * 32, gc.OUTPUT_TO_EVALUATOR,
                   seed.spawn(b"e"))
        t.join()
        times.append(time.perf_counter() - t0)
        c = ch_e.counters
        sizes.append((c.bytes_sent + c.bytes_received) / words)
    return {
        "y_per_in": statistics.median(times) / words,
        "sz_per_in": statistics.median(sizes),
    }


def _bench_plain(args) -> dict[str, float]:
    text = " ".join(f"token{i % 97}" for i in range(500))
    vocab = {f"token{i}": i for i in range(97)}

    def lookup():
        model.extract_features(text, vocab, 6)

    h = _median_time(lookup, max(10, args.iters // 10)) / 500
    acc = [0.0]

    def add_many():
        x = 0.0
        for _ in range(1000):
            x += 1e-9
        acc[0] = x

    s_add = _median_time(add_many, args.iters) / 1000
    return {"h": h, "s_add": s_add}


def _cmd_bench(args) -> int:
    out: dict[str, float] = {}
    if args.backend in ("paillier", "both"):
        out.update(_bench_backend(ahe.BACKEND_PAILLIER, args))
    if args.backend in ("xpir-bv", "both"):
        out.update(_bench_backend(ahe.BACKEND_BV, args))
    out.update(_bench_plain(args))
    out.update(_bench_yao(args))
    if args.json:
        print(json.dumps(out, indent=2, sort_keys=True))
    else:
        for k in sorted(out):
            print(f"{k}={out[k]:.9g}")
    return 0


def _cmd_estimate(args) -> int:
    values: dict[str, float] = {}
    if args.constants:
        for k, v in _read_config(args.constants).items():
            values[k] = float(v)
    values.pop("s_add", None)  # bench emits both names; the table uses s
    cm = costs.CostModel(
        N=args.n, N_prime=args.n_prime or args.n, B=args.b,
        B_prime=args.b_prime or args.b, L=args.l,
        p_pail=args.p_pail, p_xpir=args.p_xpir, **values,
    )
    table = costs.full_table(cm, args.function)
    if args.json:
        print(json.dumps(
            {f"{sys_}/{phase}": {k: (None if v is None else float(v))
                                 for k, v in cell.items()}
             for (sys_, phase), cell in table.items()},
            indent=2, sort_keys=True))
        return 0
    print("phase\tsystem\tmetric\tvalue")
    for (sys_, phase), cell in table.items():
        for metric, v in cell.items():
            shown = "n/a" if v is None else f"{float(v):.9g}"
            print(f"{phase}\t{sys_}\t{metric}\t{shown}")
    return 0


# --- search -------------------------------------------------------------------


def _cmd_search(args) -> int:
    if args.action == "index":
        try:
            idx = search_mod.load_index(args.index)
        except FileNotFoundError:
            idx = search_mod.SearchIndex()
        text = open(args.file).read() if args.file else args.text
        if text is None:
            raise PretzelError("search index needs --text or --file")
        search_mod.index_add(idx, args.doc_id, text)
        search_mod.save_index(idx, args.index)
        print(f"indexed doc {args.doc_id} ({idx.doc_count} total)")
        return 0
    idx = search_mod.load_index(args.index)
    hits = search_mod.search(idx, args.query)
    print(" ".join(str(d) for d in hits))
    return 0


# --- parser -------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="pretzel", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a naive-Bayes model from a TSV corpus")
    p.add_argument("corpus")
    p.add_argument("--kind", choices=model.NB_KINDS, required=True)
    p.add_argument("--spam-label", default="spam")
    p.add_argument("--output", required=True)
    p.add_argument("--vocab-out")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("quantize", help="fixed-point quantize a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--b-in", type=int, required=True)
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--tau", type=float, help="also print the quantized threshold")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_quantize)

    p = sub.add_parser("select-features", help="chi-square feature selection")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--n-prime", type=int, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_select_features)

    def two_party(name, help_):
        q = sub.add_parser(name, help=help_)
        q.add_argument("--role", required=True)
        q.add_argument("--listen", default="127.0.0.1:0")
        q.add_argument("--connect")
        q.add_argument("--port-file")
        q.add_argument("--sessions", type=int, default=1)
        q.add_argument("--config", help="key=value file of defaults")
        _crypto_flags(q)
        _session_flags(q)
        return q

    p = two_party("setup", "transfer the encrypted model provider -> client")
    p.add_argument("--function", choices=protocol.FUNCTIONS, default="spam")
    p.add_argument("--model")
    p.add_argument("--key-seed")
    p.add_argument("--store")
    p.add_argument("--b-in", type=int, default=12)
    p.add_argument("--n-features", type=int)
    p.add_argument("--categories", type=int)
    p.set_defaults(func=_cmd_setup)

    p = two_party("classify", "private spam classification")
    p.add_argument("--model")
    p.add_argument("--key-seed")
    p.add_argument("--store")
    p.add_argument("--email")
    p.add_argument("--vocab")
    p.set_defaults(func=_cmd_classify)

    p = two_party("extract", "private topic extraction")
    p.add_argument("--function", choices=("full", "decomposed"), default="full")
    p.add_argument("--model")
    p.add_argument("--key-seed")
    p.add_argument("--store")
    p.add_argument("--email")
    p.add_argument("--vocab")
    p.add_argument("--candidates", help="explicit 1-based ids, comma separated")
    p.add_argument("--candidate-model")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("bench", help="measure the CostModel micro constants")
    p.add_argument("--backend", choices=("paillier", "xpir-bv", "both"), default="both")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--modulus-bits", type=int, default=1024)
    p.add_argument("--ring-n", type=int, default=1024)
    p.add_argument("--sigma", type=float, default=3.2)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("estimate", help="evaluate the analytical cost table")
    p.add_argument("--constants", help="key=value file (bench output)")
    p.add_argument("--function", choices=costs.FUNCTIONS, default="spam")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--n-prime", type=int, default=0)
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--b-prime", type=int, default=0)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--p-pail", type=int, default=24)
    p.add_argument("--p-xpir", type=int, default=1024)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("search", help="client-side keyword index")
    p.add_argument("action", choices=("index", "query"))
    p.add_argument("--index", required=True)
    p.add_argument("--doc-id", type=int)
    p.add_argument("--text")
    p.add_argument("--file")
    p.add_argument("--query", default="")
    p.set_defaults(func=_cmd_search)

    return top


def _apply_config(argv: list[str]) -> list[str]:
    """Expand --config key=value defaults ahead of the explicit flags."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    pairs = _read_config(argv[i + 1])
    extra = []
    for k, v in pairs.items():
        extra.extend([f"--{k.replace('_', '-')}", v])
    # insert right after the subcommand so later explicit flags override
    return argv[:1] + extra + argv[1:]


def cli_main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = _build_parser()
    try:
        args = parser.parse_args(_apply_config(list(argv)))
        return args.func(args)
    except SystemExit as e:
        return int(e.code or 0)
    except (PretzelError, OSError, ValueError) as e:
        print(f"pretzel: error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())
