"""Scenario runner: one cloud, one owner per stream, any number of users.

Scenario documents are JSON::

    {
      "seed": "demo",                       # required; drives every random choice
      "backend": "transparent",             # optional
      "transport": "memory",                # "memory" (deterministic) or "tcp"
      "v_max": 1000,                        # optional, default 1000
      "width": 64,                          # key bits, optional
      "stall_timeout": null,                # seconds, optional
      "streams": [
        {"id": "s1", "window_sizes": [5], "start": 0, "count": 100,
         "values": {"kind": "random"}}      # or constant/list/cycle, see below
      ],
      "policies": [{"id": "p1", "stream": "s1", "policy": "window:9,5"}],
      "users": [{"id": "alice", "policies": ["p1"]}]
    }

Value generators: ``{"kind": "random"}`` draws uniformly from [0, v_max];
``{"kind": "constant", "value": c}``; ``{"kind": "list", "values": [...]}``
(length must equal count); ``{"kind": "cycle", "values": [...]}``.
Streams are published round-robin, one tuple per stream per step.
"""

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field

from . import abe, group
from .errors import ConfigError, PolicyError, ProtocolError, StreamSkyError
from .policies import WindowPolicy, parse_policy_spec
from .roles import E_PROTOCOL, CloudService, OwnerSession, UserClient, TriggerValue, WindowValue
from .wire import Codec, Error

TRANSPORTS = ("memory", "tcp")


@dataclass
class StreamSpec:
    id: str
    window_sizes: tuple
    start: int
    count: int
    values: dict


@dataclass
class Scenario:
    seed: str
    streams: list
    policies: dict  # policy id -> (stream id, descriptor)
    users: dict  # user id -> [policy ids]
    backend: str = "transparent"
    transport: str = "memory"
    v_max: int = abe.DEFAULT_V_MAX
    width: int = 64
    stall_timeout: float = None

    def context(self):
        return group.setup(self.backend, seed=self.seed.encode())

    def values(self, ctx, stream):
        """Plaintext values of one stream, in key order."""
        spec = stream.values
        kind = spec.get("kind", "random")
        n = stream.count
        if kind == "random":
            rng = ctx.rng(f"values:{stream.id}")
            return [rng.randint(0, self.v_max) for _ in range(n)]
        if kind == "constant":
            return [spec["value"]] * n
        if kind == "list":
            vals = list(spec["values"])
            if len(vals) != n:
                raise ConfigError(f"stream {stream.id!r}: list has {len(vals)} values, count is {n}")
            return vals
        if kind == "cycle":
            vals = list(spec["values"])
            return [vals[j % len(vals)] for j in range(n)]
        raise ConfigError(f"stream {stream.id!r}: unknown value generator {kind!r}")

    def tuples(self, ctx):
        """Publication order: ``[(stream id, k, v)]``, round-robin over streams."""
        per = [[(s.id, s.start + j, v) for j, v in enumerate(self.values(ctx, s))] for s in self.streams]
        out = []
        for step in range(max((len(p) for p in per), default=0)):
            out.extend(p[step] for p in per if step < len(p))
        return out


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def load_scenario(source):
    """Validate a scenario given as a dict, JSON text or a path to a JSON file."""
    if isinstance(source, str):
        if source.lstrip().startswith("{"):
            text = source
        else:
            try:
                with open(source, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read scenario: {exc}") from None
        try:
            source = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scenario is not valid JSON: {exc}") from None
    _require(isinstance(source, dict), "scenario must be a JSON object")
    unknown = set(source) - {"seed", "backend", "transport", "v_max", "width", "stall_timeout",
                             "streams", "policies", "users", "description"}
    _require(not unknown, f"unknown scenario keys: {sorted(unknown)}")
    seed = source.get("seed")
    _require(isinstance(seed, str) and seed, "scenario needs a non-empty string seed")
    transport = source.get("transport", "memory")
    _require(transport in TRANSPORTS, f"transport must be one of {TRANSPORTS}")
    v_max = source.get("v_max", abe.DEFAULT_V_MAX)
    _require(isinstance(v_max, int) and v_max >= 0, "v_max must be a non-negative integer")
    width = source.get("width", 64)
    _require(isinstance(width, int) and 1 <= width <= 64, "width must be in [1, 64]")
    timeout = source.get("stall_timeout")
    _require(timeout is None or isinstance(timeout, (int, float)) and timeout > 0, "stall_timeout must be positive")

    streams = []
    for s in source.get("streams", []):
        _require(isinstance(s, dict) and isinstance(s.get("id"), str) and s["id"], "each stream needs an id")
        sizes = tuple(sorted(set(s.get("window_sizes", []))))
        _require(all(isinstance(b, int) and b >= 1 for b in sizes), f"stream {s['id']!r}: bad window sizes")
        start, count = s.get("start", 0), s.get("count", 0)
        _require(isinstance(start, int) and isinstance(count, int) and start >= 0 and count >= 0,
                 f"stream {s['id']!r}: start and count must be non-negative integers")
        _require(start + count <= 1 << width, f"stream {s['id']!r}: keys exceed {width} bits")
        streams.append(StreamSpec(s["id"], sizes, start, count, dict(s.get("values", {"kind": "random"}))))
    _require(streams, "scenario needs at least one stream")
    ids = [s.id for s in streams]
    _require(len(set(ids)) == len(ids), "duplicate stream ids")
    by_id = {s.id: s for s in streams}

    policies = {}
    for p in source.get("policies", []):
        pid, sid = p.get("id"), p.get("stream")
        _require(isinstance(pid, str) and pid, "each policy needs an id")
        _require(pid not in policies, f"duplicate policy id {pid!r}")
        _require(sid in by_id, f"policy {pid!r}: unknown stream {sid!r}")
        try:
            desc = parse_policy_spec(p.get("policy", ""))
        except PolicyError as exc:
            raise ConfigError(f"policy {pid!r}: {exc}") from None
        if isinstance(desc, WindowPolicy):
            _require(desc.beta in by_id[sid].window_sizes,
                     f"policy {pid!r}: stream {sid!r} does not support window size {desc.beta}")
        policies[pid] = (sid, desc)

    users = {}
    for u in source.get("users", []):
        uid = u.get("id")
        _require(isinstance(uid, str) and uid, "each user needs an id")
        _require(uid not in users, f"duplicate user id {uid!r}")
        grants = list(u.get("policies", []))
        for pid in grants:
            _require(pid in policies, f"user {uid!r}: unknown policy {pid!r}")
        users[uid] = grants

    sc = Scenario(seed, streams, policies, users, source.get("backend", "transparent"), transport,
                  v_max, width, timeout)
    for s in streams:
        if s.values.get("kind", "random") != "random":
            ctx_free = Scenario.values(sc, None, s)
            _require(all(isinstance(v, int) and 0 <= v <= v_max for v in ctx_free),
                     f"stream {s.id!r}: values must be integers in [0, {v_max}]")
    return sc


# -- transcript ------------------------------------------------------------------

@dataclass
class Transcript:
    """Every frame moved between roles, plus every value the users emitted."""

    frames: list = field(default_factory=list)  # (src, dst, frame bytes)
    outputs: list = field(default_factory=list)  # user events, in emission order
    errors: list = field(default_factory=list)  # (src, dst, wire.Error)

    def record(self, src, dst, frame):
        self.frames.append((src, dst, frame))

    def digest(self):
        h = hashlib.sha256()
        for src, dst, frame in self.frames:
            h.update(f"{src}>{dst}:".encode())
            h.update(frame)
        for ev in self.outputs:
            h.update(repr(ev).encode())
        return h.hexdigest()

    def frames_from(self, src):
        return [f for s, _, f in self.frames if s == src]

    def frames_touching(self, party):
        return [f for s, d, f in self.frames if party in (s, d)]


@dataclass
class SimulationResult:
    scenario: Scenario
    transcript: Transcript
    cloud: CloudService
    owners: dict
    users: dict
    elapsed: float = 0.0


def plaintext_oracle(scenario, ctx=None):
    """What each user is entitled to, computed on plaintexts only."""
    ctx = ctx or scenario.context()
    streams = {s.id: (s, scenario.values(ctx, s)) for s in scenario.streams}
    expected = []
    for uid, grants in scenario.users.items():
        for pid in grants:
            sid, desc = scenario.policies[pid]
            s, vals = streams[sid]
            data = dict(zip(range(s.start, s.start + s.count), vals))
            if isinstance(desc, WindowPolicy):
                i = 0
                while True:
                    lo = desc.window_start(i)
                    keys = range(lo, lo + desc.beta)
                    if keys[-1] >= s.start + s.count:
                        break
                    if all(k in data for k in keys):
                        expected.append(WindowValue(uid, pid, i, sum(data[k] for k in keys), desc.beta))
                    i += 1
            else:
                expected.extend(TriggerValue(uid, pid, k, v) for k, v in data.items() if desc.holds(k))
    return expected


def _event_key(ev):
    return (type(ev).__name__, ev.user_id, ev.policy_id, getattr(ev, "k", getattr(ev, "i", -1)))


def compare_with_oracle(result):
    """``(missing, extra)`` between delivered outputs and the oracle."""
    got = sorted(result.transcript.outputs, key=_event_key)
    want = sorted(plaintext_oracle(result.scenario), key=_event_key)
    got_set, want_set = set(got), set(want)
    return [e for e in want if e not in got_set], [e for e in got if e not in want_set]


# -- drivers -----------------------------------------------------------------------

def _setup_roles(sc, ctx):
    cloud = CloudService(ctx, stall_timeout=sc.stall_timeout)
    owners = {s.id: OwnerSession(ctx, s.id, s.window_sizes, sc.v_max, sc.width, rng=ctx.rng(f"owner:{s.id}"))
              for s in sc.streams}
    users = {uid: UserClient(ctx, uid, sc.v_max) for uid in sc.users}
    return cloud, owners, users


def _negotiations(sc, owners):
    """``([(stream id, message for the cloud)], [(user id, key material)])``."""
    to_cloud = [(s.id, owners[s.id].register_message()) for s in sc.streams]
    keys = []
    for uid, grants in sc.users.items():
        for pid in grants:
            sid, desc = sc.policies[pid]
            msgs, km = owners[sid].negotiate(uid, desc, pid)
            to_cloud.extend((sid, m) for m in msgs)
            keys.append((uid, km))
    return to_cloud, keys


def run_simulation(source, transport=None):
    """Run a scenario end to end and return a :class:`SimulationResult`."""
    sc = source if isinstance(source, Scenario) else load_scenario(source)
    transport = transport or sc.transport
    if transport not in TRANSPORTS:
        raise ConfigError(f"transport must be one of {TRANSPORTS}")
    ctx = sc.context()
    t0 = time.perf_counter()
    if transport == "memory":
        result = _run_memory(sc, ctx)
    else:
        result = _run_tcp(sc, ctx)
    result.elapsed = time.perf_counter() - t0
    return result


def _run_memory(sc, ctx):
    codec = Codec(ctx)
    cloud, owners, users = _setup_roles(sc, ctx)
    tr = Transcript()

    def send(src, dst, msg):
        frame = codec.frame(msg)
        tr.record(src, dst, frame)
        return codec.decode(frame[4:])

    def to_cloud(src, msg):
        try:
            out = cloud.handle(send(src, "cloud", msg))
        except StreamSkyError as exc:
            err = Error(E_PROTOCOL, str(exc))
            tr.errors.append(("cloud", src, err))
            send("cloud", src, err)
            return
        for uid, delivery in out:
            ev = users[uid].receive(send("cloud", uid, delivery))
            if ev is not None:
                tr.outputs.append(ev)

    msgs, keys = _negotiations(sc, owners)
    for sid, m in msgs:
        to_cloud(f"owner:{sid}", m)
    for uid, km in keys:
        sub = users[uid].add_key(send(f"owner:{km.stream_id}", uid, km))
        to_cloud(uid, sub)
    for sid, k, v in sc.tuples(ctx):
        to_cloud(f"owner:{sid}", owners[sid].publish(k, v))
    return SimulationResult(sc, tr, cloud, owners, users)


def _wait_for(cond, timeout=10.0):
    end = time.monotonic() + timeout
    while not cond():
        if time.monotonic() > end:
            raise ProtocolError("timed out waiting for the cloud")
        time.sleep(0.002)


def _run_tcp(sc, ctx, host="127.0.0.1"):
    from .net import CloudServer, Connection

    codec = Codec(ctx)
    cloud, owners, users = _setup_roles(sc, ctx)
    tr = Transcript()
    lock = threading.Lock()

    def record(src, dst, frame):
        with lock:
            tr.record(src, dst, frame)

    server = CloudServer(cloud, codec, host, 0, on_frame=record).start()
    conns = {}
    readers = []
    try:
        owner_conn = Connection.connect(*server.address, codec)
        msgs, keys = _negotiations(sc, owners)
        for sid, m in msgs:
            record(f"owner:{sid}", "cloud", owner_conn.send(m))
        _wait_for(lambda: len(cloud.transform_keys) >= sum(len(g) for g in sc.users.values()))

        def read_loop(uid, conn):
            while True:
                msg = conn.recv()
                if msg is None:
                    conn.shutdown_write()
                    return
                if isinstance(msg, Error):
                    with lock:
                        tr.errors.append(("cloud", uid, msg))
                    continue
                ev = users[uid].receive(msg)
                if ev is not None:
                    with lock:
                        tr.outputs.append(ev)

        for uid, km in keys:
            record(f"owner:{km.stream_id}", uid, codec.frame(km))
            sub = users[uid].add_key(km)
            conn = conns.get(uid)
            if conn is None:
                conn = conns[uid] = Connection.connect(*server.address, codec)
            record(uid, "cloud", conn.send(sub))
        want = sum(len(g) for g in sc.users.values())
        _wait_for(lambda: sum(len(s) for s in cloud.subscribers.values()) >= want)
        for uid, conn in conns.items():
            t = threading.Thread(target=read_loop, args=(uid, conn), daemon=True)
            t.start()
            readers.append(t)

        for sid, k, v in sc.tuples(ctx):
            record(f"owner:{sid}", "cloud", owner_conn.send(owners[sid].publish(k, v)))
        # the server closes its side once every owner frame has been handled
        owner_conn.shutdown_write()
        while (msg := owner_conn.recv()) is not None:
            tr.errors.append(("cloud", "owner", msg))
        owner_conn.close()
    finally:
        server.close()
        for t in readers:
            t.join(timeout=10)
        for conn in conns.values():
            conn.close()
    return SimulationResult(sc, tr, cloud, owners, users)
