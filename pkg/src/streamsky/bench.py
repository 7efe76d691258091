"""Microbenchmarks: operation latencies, send-rate sweep, policy matching, kernels.

Every sample is one CSV row::

    backend,kernels,operation,policy,params,seq,seconds,pairings

Rows are grouped by backend (in order of first appearance) and keep their
measurement order inside a group. ``pairings`` is empty where it does not
apply. Absolute times depend on the host and are never asserted; checks are
on counts and orderings only.
"""

import csv
import io
import random
import statistics
import time
from dataclasses import dataclass, field

from . import abe, kernels, xacml
from .policies import TriggerPolicy, WindowPolicy
from .roles import CloudService, OwnerSession, UserClient
from .tree import build_access_tree
from .wire import Codec

COLUMNS = ("backend", "kernels", "operation", "policy", "params", "seq", "seconds", "pairings")

# Latencies reported for the original 2009-era deployment; shown, never checked.
REFERENCE_MS = {"encrypt": 179.0, "transform": 120.0}


@dataclass(frozen=True)
class Sample:
    backend: str
    kernels: str
    operation: str
    policy: str
    params: str
    seq: int
    seconds: float
    pairings: int = None


@dataclass
class BenchReport:
    samples: list = field(default_factory=list)

    def add(self, *args, **kw):
        self.samples.append(Sample(*args, **kw))

    def extend(self, other):
        self.samples.extend(other.samples)
        return self

    def grouped(self):
        order = []
        groups = {}
        for s in self.samples:
            if s.backend not in groups:
                order.append(s.backend)
                groups[s.backend] = []
            groups[s.backend].append(s)
        return [(b, groups[b]) for b in order]

    def select(self, operation, **match):
        return [s for s in self.samples if s.operation == operation
                and all(getattr(s, k) == v for k, v in match.items())]

    def seconds(self, operation, **match):
        return [s.seconds for s in self.select(operation, **match)]

    def __eq__(self, other):
        return isinstance(other, BenchReport) and self.samples == other.samples


def to_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for _, rows in report.grouped():
        for s in rows:
            w.writerow([s.backend, s.kernels, s.operation, s.policy, s.params, s.seq,
                        repr(float(s.seconds)), "" if s.pairings is None else s.pairings])
    return buf.getvalue()


def from_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ValueError("not a benchmark CSV (header mismatch)")
    report = BenchReport()
    for r in rows[1:]:
        if len(r) != len(COLUMNS):
            raise ValueError(f"row has {len(r)} fields, expected {len(COLUMNS)}")
        report.add(r[0], r[1], r[2], r[3], r[4], int(r[5]), float(r[6]), int(r[7]) if r[7] else None)
    return report


def render_table(report):
    """Median/min/max per (operation, policy, params), one block per backend."""
    lines = []
    for backend, rows in report.grouped():
        lines.append(f"[{backend}]")
        keys = []
        stats = {}
        for s in rows:
            key = (s.kernels, s.operation, s.policy, s.params)
            if key not in stats:
                keys.append(key)
                stats[key] = ([], set())
            stats[key][0].append(s.seconds)
            if s.pairings is not None:
                stats[key][1].add(s.pairings)
        head = f"  {'kernels':<8} {'operation':<24} {'policy':<16} {'params':<22} {'n':>6} {'median ms':>11} {'min ms':>10} {'max ms':>10} {'pairings':>9}"
        lines.append(head)
        for key in keys:
            secs, pairs = stats[key]
            pcol = ",".join(str(p) for p in sorted(pairs)) if pairs else "-"
            lines.append(
                f"  {key[0]:<8} {key[1]:<24} {key[2]:<16} {key[3]:<22} {len(secs):>6} "
                f"{statistics.median(secs) * 1e3:>11.4f} {min(secs) * 1e3:>10.4f} {max(secs) * 1e3:>10.4f} {pcol:>9}"
            )
    if any(s.operation in REFERENCE_MS for s in report.samples):
        refs = ", ".join(f"{op} ~{ms:g} ms" for op, ms in REFERENCE_MS.items())
        lines.append(f"reference (2009-era hardware, not comparable): {refs}")
    return "\n".join(lines) + ("\n" if lines else "")


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def _backend_name(ctx):
    return ctx.backend or type(ctx).__name__


def _key_for(policy, rng, large=False):
    """A key accepted by ``policy``; ``large`` picks one >= 2**32 for ge."""
    if isinstance(policy, WindowPolicy):
        return policy.alpha
    theta, op = policy.theta, policy.op
    if op == "eq":
        return theta
    if op in ("ge", "gt"):
        lo = theta + (op == "gt")
        return max(lo, 1 << 32) if large else lo
    hi = theta - (op == "lt")
    return rng.randint(0, hi)


# -- bench crypto ------------------------------------------------------------------

def bench_crypto(ctx, policy, v_max=abe.DEFAULT_V_MAX, reps=20, seed="bench", width=64, large_keys=False):
    """Latency of every protocol operation under one policy.

    Transform samples carry the pairing count of that call. ``large_keys``
    encrypts keys >= 2**32 for ge/gt policies (the cheap transform path).
    """
    report = BenchReport()
    rng = ctx.rng(f"bench-crypto:{seed}")
    backend, kimpl = _backend_name(ctx), kernels.BACKEND
    pol = str(policy)
    params = f"v_max={v_max},width={width}" + (",large_keys" if large_keys else "")

    def add(op, seq, secs, pairings=None):
        report.add(backend, kimpl, op, pol, params, seq, secs, pairings)

    sizes = (policy.beta,) if isinstance(policy, WindowPolicy) else ()
    for j in range(reps):
        (mk, pk), dt = _timed(abe.master_keygen, ctx, rng)
        add("setup", j, dt)
    window_secrets = {b: abe.make_window_secrets(ctx, b, rng) for b in sizes}
    for j in range(reps):
        (tk, uk), dt = _timed(abe.user_keygen, ctx, mk, policy, rng, window_secrets, width)
        add("keygen", j, dt)

    M = v_max * policy.beta if isinstance(policy, WindowPolicy) else v_max
    for j in range(max(1, reps // 5)):
        table, dt = _timed(abe.build_dlog_table, ctx, M)
        add("dlog_table", j, dt)

    counter = abe.PairingCounter()
    k0 = _key_for(policy, rng, large_keys)
    span = policy.beta if isinstance(policy, WindowPolicy) else 1
    for j in range(reps):
        keys = [k0 + d for d in range(span)]
        vals = [rng.randint(0, v_max) for _ in keys]
        transformed = []
        for k, v in zip(keys, vals):
            c, dt = _timed(abe.encrypt, ctx, pk, window_secrets, k, v, rng, v_max, width)
            add("encrypt", j, dt)
            counter.reset()
            t, dt = _timed(abe.transform, tk, c, counter)
            add("transform", j, dt, counter.pairings)
            transformed.append(t)
        if isinstance(policy, WindowPolicy):
            (E1, E2), dt = _timed(abe.compute_sum, transformed, policy.alpha, policy.beta)
            add("compute_sum", j, dt)
            s, dt = _timed(abe.decrypt_window, uk, 0, E1, E2, table)
            assert s.total == sum(vals)
        else:
            v, dt = _timed(abe.decrypt_trigger, uk, transformed[0], table)
            assert v == vals[0]
        add("decrypt", j, dt)
    return report


def crypto_checks(report, policy, width=64):
    """Host-independent invariants of a crypto report: ``[(name, ok, detail)]``."""
    out = []
    pairs = {s.pairings for s in report.select("transform")}
    if isinstance(policy, TriggerPolicy) and policy.op == "eq":
        out.append(("eq transform pairings == width", pairs == {width}, f"observed {sorted(pairs)}"))
        dec = statistics.median(report.seconds("decrypt"))
        tr = statistics.median(report.seconds("transform"))
        out.append(("decrypt faster than transform (eq)", dec < tr,
                    f"decrypt {dec * 1e3:.4f} ms vs transform {tr * 1e3:.4f} ms"))
    else:
        expected = {len(build_access_tree(*_tree_args(policy), width=width).leaves())}
        out.append(("transform pairings bounded by tree leaves",
                    all(p <= next(iter(expected)) for p in pairs), f"observed {sorted(pairs)}"))
    return out


def _tree_args(policy):
    if isinstance(policy, WindowPolicy):
        return policy.alpha, "ge"
    return policy.theta, policy.op


# -- bench rate ----------------------------------------------------------------------

@dataclass
class RateSummary:
    interval_ms: float
    encrypt_median: float
    inter_arrival_median: float
    violations: int
    samples: int

    @property
    def violation_rate(self):
        return self.violations / self.samples if self.samples else 0.0


def bench_rate(ctx, intervals_ms, n=200, policy=None, v_max=abe.DEFAULT_V_MAX, seed="bench", tolerance=0.05,
               clock=time.perf_counter, sleep=time.sleep):
    """Send-rate sweep through one owner, the cloud and one user.

    The three roles run as one synchronous pipeline on this thread: each
    tuple is encrypted, framed, ingested, transformed, framed again and
    decrypted before the next one starts, and sends are paced to
    ``interval_ms``. The user-side inter-arrival time is recorded per
    tuple, together with that tuple's encryption time. Returns the report
    and one :class:`RateSummary` per interval; a violation is an
    inter-arrival below ``(1 - tolerance)`` times the median encryption
    latency of the same run.
    """
    policy = policy or TriggerPolicy(0, "ge")
    report = BenchReport()
    backend, kimpl = _backend_name(ctx), kernels.BACKEND
    codec = Codec(ctx)
    sizes = (policy.beta,) if isinstance(policy, WindowPolicy) else ()
    owner = OwnerSession(ctx, "rate", sizes, v_max, rng=ctx.rng(f"bench-rate:{seed}"))
    cloud = CloudService(ctx)
    user = UserClient(ctx, "u", v_max)
    wrap = lambda m: codec.decode(codec.frame(m)[4:])  # noqa: E731
    cloud.handle(wrap(owner.register_message()))
    to_cloud, km = owner.negotiate("u", policy)
    for m in to_cloud:
        cloud.handle(wrap(m))
    cloud.handle(wrap(user.add_key(wrap(km))))
    vrng = random.Random(f"bench-rate-values:{seed}")

    summaries = []
    k = _key_for(policy, vrng)
    for interval in intervals_ms:
        params = f"interval_ms={interval:g}"
        step = interval / 1e3
        arrivals, enc = [], []
        start = clock()
        for j in range(n):
            due = start + j * step
            now = clock()
            if due > now:
                sleep(due - now)
            t0 = clock()
            msg = owner.publish(k, vrng.randint(0, v_max))
            enc.append(clock() - t0)
            k += 1
            for _, delivery in cloud.ingest(wrap(msg)):
                ev = user.receive(wrap(delivery))
                if ev is not None:
                    arrivals.append(clock())
            report.add(backend, kimpl, "encrypt", str(policy), params, j, enc[-1])
        gaps = [b - a for a, b in zip(arrivals, arrivals[1:])]
        for j, g in enumerate(gaps):
            report.add(backend, kimpl, "inter_arrival", str(policy), params, j, g)
        med = statistics.median(enc)
        bound = (1 - tolerance) * med
        summaries.append(RateSummary(interval, med, statistics.median(gaps) if gaps else 0.0,
                                     sum(g < bound for g in gaps), len(gaps)))
    return report, summaries


def calibrate_encrypt(ctx, reps=30, v_max=abe.DEFAULT_V_MAX, seed="calibrate"):
    """Median per-tuple encryption latency (seconds) on this host."""
    rng = ctx.rng(seed)
    _, pk = abe.master_keygen(ctx, rng)
    times = []
    for j in range(reps):
        _, dt = _timed(abe.encrypt, ctx, pk, {}, (1 << 63) + j, j % (v_max + 1), rng, v_max)
        times.append(dt)
    return statistics.median(times)


# -- bench policies ------------------------------------------------------------------

def random_policy(rng, policy_id, stream, theta_bits=16):
    op = rng.choice(("eq", "ge", "gt", "le", "lt", "window"))
    hi = (1 << theta_bits) - 1
    if op == "window":
        return xacml.XacmlPolicy(policy_id, stream, "ge", rng.randint(0, hi), rng.randint(1, 16))
    lo = 1 if op == "lt" else 0
    top = hi - 1 if op == "gt" else hi
    return xacml.XacmlPolicy(policy_id, stream, op, rng.randint(lo, top))


def bench_policies(counts, requests=200, seed="bench", backend="transparent"):
    """evaluate() latency for a store of N policies on one stream, per N."""
    report = BenchReport()
    rng = random.Random(f"bench-policies:{seed}")
    for n in counts:
        store = xacml.PolicyStore()
        for j in range(n):
            store.register_policy(random_policy(rng, f"p{j:06d}", "s"))
        reqs = [xacml.emit_request("s", rng.randint(0, 1 << 16)) for _ in range(requests)]
        for j, r in enumerate(reqs):
            _, dt = _timed(store.evaluate, r)
            report.add(backend, kernels.BACKEND, "evaluate", "", f"policies={n}", j, dt)
    return report


def policy_curve(report):
    """``[(N, median seconds)]`` sorted by N."""
    by_n = {}
    for s in report.select("evaluate"):
        by_n.setdefault(int(s.params.split("=")[1]), []).append(s.seconds)
    return sorted((n, statistics.median(v)) for n, v in by_n.items())


# -- bench kernels -------------------------------------------------------------------

def bench_kernels(reps=5, seed="bench", order=None):
    """Compiled vs pure-Python kernels on the hot paths of the protocol."""
    from . import _pykernels

    order = order or (2**64 - 59)
    impls = [("python", _pykernels)]
    if kernels.native is not None:
        impls.insert(0, (kernels.native.BACKEND, kernels.native))
    rng = random.Random(f"bench-kernels:{seed}")
    values = [rng.randrange(order) for _ in range(132)]
    R = [rng.randrange(1, order) for _ in range(12)]
    tree = build_access_tree(0x5A5A5A5A, "ge", 64)
    keys = [rng.getrandbits(64) for _ in range(2000)]
    idx = list(range(1, 65))
    cases = [
        ("scale_mod", lambda m: m.scale_mod(values, 0x1234567890ABCDEF, order), "n=132"),
        ("lagrange_at_zero", lambda m: m.lagrange_at_zero(idx, order), "n=64"),
        ("window_blinds", lambda m: m.window_blinds(R, 12, 3, 1200, order), "beta=12,count=1200"),
        ("accepts_batch", lambda m: m.accepts_batch(tree.flat, keys, 64), "keys=2000"),
    ]
    report = BenchReport()
    for name, impl in impls:
        for op, fn, params in cases:
            for j in range(reps):
                _, dt = _timed(fn, impl)
                report.add(name, name, f"kernel:{op}", "", params, j, dt)
    return report
