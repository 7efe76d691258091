"""Command-line entry points: ``streamsky <command> ...``.

Typical multi-process run::

    streamsky keygen --seed demo --stream s1 --window-sizes 5 --out owner.json
    streamsky grant --owner owner.json --user alice --policy window:9,5 \\
        --cloud-out alice.cloud --user-out alice.key
    streamsky cloud run --seed demo --listen 127.0.0.1:7700
    streamsky user run --seed demo --key alice.key --connect 127.0.0.1:7700 --count 3
    streamsky owner run --owner owner.json --grants alice.cloud --connect 127.0.0.1:7700 --count 30

Group parameters are derived from ``--seed`` and ``--backend``; every
process of one deployment must use the same pair.
"""

import argparse
import base64
import json
import logging
import random
import select
import sys
import threading
import time

from . import abe, bench, group, serialize
from .errors import ConfigError, ProtocolError, StreamSkyError
from .policies import TriggerPolicy, parse_policy_spec
from .roles import E_PROTOCOL, OwnerSession, UserClient
from .wire import Codec, Error, KeyMaterial

log = logging.getLogger("streamsky")


def _ctx(args):
    return group.setup(args.backend, seed=args.seed.encode())


def _hostport(text):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host, int(port)


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _policy(text):
    try:
        return parse_policy_spec(text)
    except StreamSkyError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# -- owner state files ---------------------------------------------------------------

def _b64(data):
    return base64.b64encode(data).decode("ascii")


def save_owner(path, owner, seed, backend):
    doc = {
        "seed": seed,
        "backend": backend,
        "stream": owner.stream_id,
        "v_max": owner.v_max,
        "width": owner.width,
        "master_key": _b64(serialize.dumps(owner.master_key)),
        "public_key": _b64(serialize.dumps(owner.public_key)),
        "window_secrets": {str(b): _b64(serialize.dumps(ws)) for b, ws in owner.window_secrets.items()},
        "policies": {pid: str(p) for pid, p in owner.policies.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)


def load_owner(path, rng_label="owner"):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        ctx = group.setup(doc["backend"], seed=doc["seed"].encode())
        keys = (
            serialize.from_text(doc["master_key"], ctx),
            serialize.from_text(doc["public_key"], ctx),
            {int(b): serialize.from_text(t, ctx) for b, t in doc["window_secrets"].items()},
        )
        rng = random.Random(f"{rng_label}:{time.time_ns()}")
        owner = OwnerSession(ctx, doc["stream"], (), doc["v_max"], doc["width"], rng=rng, keys=keys)
        owner.policies = {pid: parse_policy_spec(p) for pid, p in doc.get("policies", {}).items()}
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load owner state {path!r}: {exc}") from None
    return owner, doc


def _read_frames(path, codec):
    with open(path, "rb") as fh:
        return list(codec.iter_frames(fh))


# -- commands -----------------------------------------------------------------------------

def cmd_keygen(args):
    ctx = _ctx(args)
    owner = OwnerSession(ctx, args.stream, args.window_sizes, args.vmax, rng=random.Random(f"keygen:{time.time_ns()}"))
    save_owner(args.out, owner, args.seed, args.backend)
    print(f"wrote owner state for stream {args.stream!r} (window sizes {list(owner.window_sizes)}) to {args.out}")
    return 0


def cmd_grant(args):
    owner, doc = load_owner(args.owner, "grant")
    codec = Codec(owner.ctx)
    pid = args.policy_id or owner.policy_id_for(args.policy)
    known = owner.policies.pop(pid, None)
    if known is not None and known != args.policy:
        raise ConfigError(f"policy id {pid!r} already bound to {known}")
    to_cloud, km = owner.negotiate(args.user, args.policy, pid)
    with open(args.cloud_out, "wb") as fh:
        for m in to_cloud:
            fh.write(codec.frame(m))
    with open(args.user_out, "wb") as fh:
        fh.write(codec.frame(km))
    save_owner(args.owner, owner, doc["seed"], doc["backend"])
    print(f"granted {args.policy} as {pid!r} to {args.user!r}: cloud -> {args.cloud_out}, user -> {args.user_out}")
    return 0


def cmd_cloud_run(args):
    from .net import CloudServer
    from .roles import CloudService

    ctx = _ctx(args)
    cloud = CloudService(ctx, stall_timeout=args.stall_timeout)
    server = CloudServer(cloud, Codec(ctx), *args.listen).start()
    print(f"cloud listening on {server.address[0]}:{server.address[1]}", flush=True)
    try:
        if args.max_seconds:
            time.sleep(args.max_seconds)
        else:
            threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
        c = cloud.counter
        print(f"cloud stopped: {c.transforms} transforms, {c.pairings} pairings, {cloud.denied} denied", flush=True)
    return 0


def cmd_owner_run(args):
    from .net import Connection

    owner, _ = load_owner(args.owner, "owner-run")
    codec = Codec(owner.ctx)
    conn = Connection.connect(*args.connect, codec)
    failures = []

    def drain():
        while (msg := conn.recv()) is not None:
            if isinstance(msg, Error):
                failures.append(msg)
                print(f"cloud error {msg.code}: {msg.text}", file=sys.stderr, flush=True)

    reader = threading.Thread(target=drain, daemon=True)
    reader.start()
    conn.send(owner.register_message())
    for path in args.grants or ():
        for m in _read_frames(path, codec):
            conn.send(m)
    # deliveries are live only: give users time to subscribe to fresh grants
    time.sleep(args.start_delay)
    vrng = random.Random(f"values:{args.seed_values}")
    step = args.rate_ms / 1e3
    start = time.perf_counter()
    for j in range(args.count):
        due = start + j * step
        now = time.perf_counter()
        if due > now:
            time.sleep(due - now)
        v = args.value if args.value is not None else vrng.randint(0, owner.v_max)
        conn.send(owner.publish(args.start + j, v))
        if args.verbose:
            print(f"sent k={args.start + j}", flush=True)
    conn.shutdown_write()
    reader.join()
    conn.close()
    print(f"published {args.count} tuples on stream {owner.stream_id!r}", flush=True)
    return 1 if failures else 0


def cmd_user_run(args):
    from .net import Connection

    ctx = _ctx(args)
    codec = Codec(ctx)
    with open(args.key, "rb") as fh:
        kms = list(codec.iter_frames(fh))
    if not kms or not all(isinstance(m, KeyMaterial) for m in kms):
        raise ConfigError(f"{args.key!r} holds no key material")
    user = UserClient(ctx, kms[0].user_id, args.vmax, sink=lambda ev: print(_format_event(ev), flush=True))
    conn = Connection.connect(*args.connect, codec)
    for km in kms:
        sub = user.add_key(km)
        for attempt in range(args.retries + 1):
            conn.send(sub)
            # the cloud only answers a subscription when it fails
            ready, _, _ = select.select([conn.sock], [], [], 0.3)
            reply = conn.recv() if ready else None
            if isinstance(reply, Error) and reply.code == E_PROTOCOL and attempt < args.retries:
                time.sleep(0.1)
                continue
            if isinstance(reply, Error):
                raise ProtocolError(reply.text)
            if reply is not None:
                user.receive(reply)
            break
    print(f"user {user.user_id!r} subscribed to {sorted(user.keys)}", flush=True)
    try:
        while args.count is None or len(user.outputs) < args.count:
            msg = conn.recv()
            if msg is None:
                break
            user.receive(msg)
    except KeyboardInterrupt:
        pass
    conn.close()
    return 0


def _format_event(ev):
    kind = type(ev).__name__
    if kind == "TriggerValue":
        return f"{ev.user_id} {ev.policy_id} k={ev.k} v={ev.v}"
    if kind == "WindowValue":
        return f"{ev.user_id} {ev.policy_id} window={ev.i} sum={ev.total} average={ev.average}"
    return f"{ev.user_id} {ev.policy_id} DENIED index={ev.index}: {ev.reason}"


def _emit(report, args):
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(bench.to_csv(report))
    print(bench.render_table(report), end="")


def _report_checks(checks):
    ok = True
    for name, passed, detail in checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        ok &= bool(passed)
    return 0 if ok else 1


def cmd_bench_crypto(args):
    ctx = _ctx(args)
    report = bench.bench_crypto(ctx, args.policy, args.vmax, args.reps, args.seed, large_keys=args.large_keys)
    _emit(report, args)
    return _report_checks(bench.crypto_checks(report, args.policy))


def cmd_bench_rate(args):
    ctx = _ctx(args)
    enc = bench.calibrate_encrypt(ctx, v_max=args.vmax)
    intervals = args.rate_ms
    if intervals is None:
        base = enc * 1e3
        intervals = [0.0, base / 4, base / 2, base, 2 * base, 8 * base]
    report, summaries = bench.bench_rate(ctx, intervals, args.count, args.policy, args.vmax, args.seed)
    _emit(report, args)
    print(f"calibrated encryption latency: {enc * 1e3:.4f} ms")
    print(f"{'interval ms':>12} {'encrypt ms':>11} {'inter-arrival ms':>17} {'violations':>11}")
    checks = []
    for s in summaries:
        print(f"{s.interval_ms:>12.4f} {s.encrypt_median * 1e3:>11.4f} {s.inter_arrival_median * 1e3:>17.4f} "
              f"{s.violations:>5}/{s.samples:<5}")
        if s.interval_ms / 1e3 < s.encrypt_median:
            checks.append((f"inter-arrival >= encryption cost at {s.interval_ms:g} ms",
                           s.violation_rate <= 0.01, f"{s.violation_rate:.2%} of samples below 95% of the bound"))
    return _report_checks(checks)


def cmd_bench_policies(args):
    counts = args.policies or [1, 10, 100, 1000]
    report = bench.bench_policies(counts, args.requests, args.seed, args.backend)
    _emit(report, args)
    curve = bench.policy_curve(report)
    for n, sec in curve:
        print(f"policies={n:<8} median evaluate {sec * 1e3:.4f} ms")
    return 0


def cmd_bench_kernels(args):
    _emit(bench.bench_kernels(args.reps, args.seed), args)
    return 0


def cmd_simulate(args):
    from .simulation import compare_with_oracle, load_scenario, run_simulation

    sc = load_scenario(args.scenario)
    result = run_simulation(sc, args.transport)
    tr = result.transcript
    if args.verbose:
        for ev in tr.outputs:
            print(_format_event(ev))
    missing, extra = compare_with_oracle(result)
    c = result.cloud.counter
    print(f"frames={len(tr.frames)} outputs={len(tr.outputs)} errors={len(tr.errors)} "
          f"transforms={c.transforms} pairings={c.pairings} elapsed={result.elapsed:.3f}s")
    print(f"transcript sha256 {tr.digest()}")
    print(f"oracle: {len(missing)} missing, {len(extra)} extra")
    return 0 if not missing and not extra and not tr.errors else 1


# -- parser ---------------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--backend", choices=("transparent", "external"), default="transparent")
    common.add_argument("--seed", default="streamsky", help="group parameter seed (shared by all roles)")
    common.add_argument("--vmax", type=int, default=abe.DEFAULT_V_MAX, help="largest plaintext value")
    common.add_argument("-v", "--verbose", action="store_true")

    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--csv", metavar="PATH", help="also write samples as CSV")

    p = argparse.ArgumentParser(prog="streamsky", description="Access control for outsourced data streams.")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keygen", parents=[common], help="create owner keys for one stream")
    k.add_argument("--stream", required=True)
    k.add_argument("--window-sizes", type=_int_list, default=[], help="e.g. 5,12")
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_keygen)

    g = sub.add_parser("grant", help="issue a transform key and user key for one policy")
    g.add_argument("--owner", required=True, help="owner state file from keygen")
    g.add_argument("--user", required=True)
    g.add_argument("--policy", type=_policy, required=True, help="eq:THETA, ge:ALPHA, ... or window:ALPHA,BETA")
    g.add_argument("--policy-id")
    g.add_argument("--cloud-out", required=True)
    g.add_argument("--user-out", required=True)
    g.set_defaults(func=cmd_grant)

    for role in ("owner", "cloud", "user"):
        rp = sub.add_parser(role, help=f"{role} process")
        rsub = rp.add_subparsers(dest="action", required=True)
        run = rsub.add_parser("run", parents=[common])
        if role == "cloud":
            run.add_argument("--listen", type=_hostport, default=("127.0.0.1", 7700))
            run.add_argument("--stall-timeout", type=float)
            run.add_argument("--max-seconds", type=float)
            run.set_defaults(func=cmd_cloud_run)
        elif role == "owner":
            run.add_argument("--owner", required=True)
            run.add_argument("--connect", type=_hostport, default=("127.0.0.1", 7700))
            run.add_argument("--grants", nargs="*", help="cloud files written by grant")
            run.add_argument("--count", type=int, default=100)
            run.add_argument("--start", type=int, default=0)
            run.add_argument("--rate-ms", type=float, default=0.0)
            run.add_argument("--value", type=int, help="constant value (default: random)")
            run.add_argument("--seed-values", default="values")
            run.add_argument("--start-delay", type=float, default=1.0, help="seconds between grants and first tuple")
            run.set_defaults(func=cmd_owner_run)
        else:
            run.add_argument("--key", required=True, help="user file written by grant")
            run.add_argument("--connect", type=_hostport, default=("127.0.0.1", 7700))
            run.add_argument("--count", type=int, help="exit after this many outputs")
            run.add_argument("--retries", type=int, default=100, help="subscription attempts, 0.1 s apart")
            run.set_defaults(func=cmd_user_run)

    b = sub.add_parser("bench", help="microbenchmarks")
    bsub = b.add_subparsers(dest="bench", required=True)
    bc = bsub.add_parser("crypto", parents=[common, out])
    bc.add_argument("--policy", type=_policy, default=TriggerPolicy(42, "eq"))
    bc.add_argument("--reps", type=int, default=20)
    bc.add_argument("--large-keys", action="store_true", help="encrypt keys >= 2**32 (ge/gt policies)")
    bc.set_defaults(func=cmd_bench_crypto)
    br = bsub.add_parser("rate", parents=[common, out])
    br.add_argument("--policy", type=_policy, default=TriggerPolicy(0, "ge"))
    br.add_argument("--rate-ms", type=_float_list, help="send intervals to sweep (default: around encryption cost)")
    br.add_argument("--count", type=int, default=300)
    br.set_defaults(func=cmd_bench_rate)
    bp = bsub.add_parser("policies", parents=[common, out])
    bp.add_argument("--policies", type=_int_list, help="policy counts to sweep, e.g. 1,10,100,1000")
    bp.add_argument("--requests", type=int, default=200)
    bp.set_defaults(func=cmd_bench_policies)
    bk = bsub.add_parser("kernels", parents=[common, out])
    bk.add_argument("--reps", type=int, default=5)
    bk.set_defaults(func=cmd_bench_kernels)

    s = sub.add_parser("simulate", parents=[common], help="run a scenario file end to end")
    s.add_argument("--scenario", required=True)
    s.add_argument("--transport", choices=("memory", "tcp"))
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (StreamSkyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
