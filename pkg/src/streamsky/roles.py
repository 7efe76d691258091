"""Owner, cloud and user as message-driven state machines.

Each role consumes and produces :mod:`streamsky.wire` messages and never
touches another role's secrets; the drivers in :mod:`streamsky.simulation`
and :mod:`streamsky.net` only move messages between them.
"""

import logging
import threading
import time
from dataclasses import dataclass
from fractions import Fraction

from . import abe, serialize, xacml
from .errors import PolicyError, ProtocolError, StoreError, TableMiss
from .policies import TriggerPolicy, WindowPolicy
from .wire import (
    CiphertextMsg,
    Error,
    Grant,
    KeyMaterial,
    RegisterStream,
    Subscribe,
    TriggerDelivery,
    UploadPolicy,
    WindowDelivery,
)

log = logging.getLogger(__name__)

# Error codes carried by wire.Error
E_PROTOCOL = 1
E_POLICY = 2
E_UNKNOWN = 3


# -- owner ---------------------------------------------------------------------

class OwnerSession:
    """Data owner of one stream: keys, window secrets, grants, encryption."""

    def __init__(self, ctx, stream_id, window_sizes=(), v_max=abe.DEFAULT_V_MAX, width=64, rng=None, keys=None):
        self.ctx = ctx
        self.stream_id = stream_id
        self.v_max = v_max
        self.width = width
        self.rng = rng or ctx.rng(f"owner:{stream_id}")
        if keys is None:
            self.master_key, self.public_key = abe.master_keygen(ctx, self.rng)
            # window secrets exist before any grant or ciphertext can reference them
            self.window_secrets = {b: abe.make_window_secrets(ctx, b, self.rng) for b in sorted(set(window_sizes))}
        else:
            self.master_key, self.public_key, self.window_secrets = keys
        self.policies = {}  # policy id -> descriptor
        self.grants = []  # (policy id, user id)

    @property
    def window_sizes(self):
        return tuple(sorted(self.window_secrets))

    def register_message(self):
        return RegisterStream(self.stream_id, self.public_key, self.window_sizes)

    def policy_id_for(self, policy):
        return f"{self.stream_id}/{policy}"

    def negotiate(self, user_id, policy, policy_id=None):
        """Issue keys for ``user_id`` under ``policy``.

        Returns ``(to_cloud, to_user)``: the messages for the cloud (the
        policy upload the first time an id is used, then the grant) and the
        key material for the user.
        """
        if isinstance(policy, WindowPolicy) and policy.beta not in self.window_secrets:
            raise PolicyError(f"window size {policy.beta} not supported by stream {self.stream_id!r}")
        if not isinstance(policy, (TriggerPolicy, WindowPolicy)):
            raise PolicyError(f"unsupported policy {policy!r}")
        policy_id = policy_id or self.policy_id_for(policy)
        to_cloud = []
        known = self.policies.get(policy_id)
        if known is None:
            self.policies[policy_id] = policy
            xp = xacml.XacmlPolicy.for_policy(policy_id, self.stream_id, policy)
            to_cloud.append(UploadPolicy(xacml.emit_policy(xp)))
        elif known != policy:
            raise PolicyError(f"policy id {policy_id!r} already bound to {known}")
        tk, uk = abe.user_keygen(self.ctx, self.master_key, policy, self.rng, self.window_secrets, self.width)
        self.grants.append((policy_id, user_id))
        to_cloud.append(Grant(policy_id, user_id, tk))
        return to_cloud, KeyMaterial(user_id, policy_id, self.stream_id, uk)

    def publish(self, k, v):
        record = abe.encrypt(self.ctx, self.public_key, self.window_secrets, k, v, self.rng, self.v_max, self.width)
        return CiphertextMsg(self.stream_id, record, xacml.emit_request(self.stream_id, k))


# -- cloud ---------------------------------------------------------------------

class WindowAccumulator:
    """Collects transformed ciphertexts of one window policy until a window is full.

    Entries are keyed by k, so arrival order inside a window does not matter;
    the window after the oldest open one may also fill early. A tuple more
    than one window behind the newest seen is a protocol error. Incomplete
    windows are never emitted; with ``stall_timeout`` set they are dropped
    after that many seconds without completing.
    """

    def __init__(self, alpha, beta, stall_timeout=None, clock=time.monotonic):
        self.alpha = alpha
        self.beta = beta
        self.stall_timeout = stall_timeout
        self.clock = clock
        self.next_index = 0  # lowest window index still accepting tuples
        self.newest = -1
        self.open = {}  # window index -> {k: {user: TransformedCiphertext}}
        self.opened_at = {}
        self.dropped = []  # indices of windows dropped by the timeout
        self._closed = set()  # completed or dropped indices not yet out of reach
        self._lock = threading.Lock()

    def window_of(self, k):
        if k < self.alpha:
            return None
        return (k - self.alpha) // self.beta

    def insert(self, k, entries):
        """Add one tuple's per-user transforms.

        Returns ``(i, [entries by k])`` when this insertion completes window
        i, else None. Keys before alpha are ignored.
        """
        i = self.window_of(k)
        if i is None:
            return None
        with self._lock:
            self._expire()
            if i < self.newest - 1 or i in self._closed or i < self.next_index and i not in self.open:
                raise ProtocolError(f"key {k} arrived after window {i} was closed")
            slot = self.open.get(i)
            if slot is None:
                slot = self.open[i] = {}
                self.opened_at[i] = self.clock()
            if k in slot:
                raise ProtocolError(f"duplicate key {k} in window {i}")
            slot[k] = entries
            self.newest = max(self.newest, i)
            if len(slot) < self.beta:
                return None
            del self.open[i]
            del self.opened_at[i]
            self._closed.add(i)
            self._advance()
            return i, [slot[k] for k in sorted(slot)]

    def _advance(self):
        self._closed = {j for j in self._closed if j >= self.newest - 1}
        if self.open:
            self.next_index = max(self.next_index, min(self.open))
        else:
            self.next_index = max(self.next_index, self.newest + 1)

    def _expire(self):
        if self.stall_timeout is None:
            return
        now = self.clock()
        for i in [i for i, t0 in self.opened_at.items() if now - t0 >= self.stall_timeout]:
            del self.open[i]
            del self.opened_at[i]
            self.dropped.append(i)
            self._closed.add(i)
        self._advance()

    def stalled(self):
        return sorted(self.open)

    def buffered(self):
        return sum(len(s) for s in self.open.values())


class CloudService:
    """Policy pre-filter, proxy transform, window assembly and dispatch.

    Holds public keys, XACML policies, transform keys and transformed
    ciphertexts only. ``handle`` returns ``[(user_id, message)]`` to push.
    """

    def __init__(self, ctx, counter=None, stall_timeout=None, clock=time.monotonic):
        self.ctx = ctx
        self.counter = counter or abe.PairingCounter()
        self.stall_timeout = stall_timeout
        self.clock = clock
        self.store = xacml.PolicyStore()
        self.streams = {}  # stream id -> RegisterStream
        self.transform_keys = {}  # (policy id, user id) -> TransformKey
        self.subscribers = {}  # policy id -> set of user ids
        self.accumulators = {}  # (stream id, policy id) -> WindowAccumulator
        self.inconsistencies = 0
        self.denied = 0  # (tuple, policy) pairs filtered out before any transform
        self._lock = threading.Lock()

    def handle(self, msg):
        if isinstance(msg, CiphertextMsg):
            return self.ingest(msg)
        with self._lock:
            if isinstance(msg, RegisterStream):
                self._register_stream(msg)
            elif isinstance(msg, UploadPolicy):
                self._upload_policy(msg)
            elif isinstance(msg, Grant):
                self._grant(msg)
            elif isinstance(msg, Subscribe):
                self._subscribe(msg)
            else:
                raise ProtocolError(f"cloud does not accept {type(msg).__name__}")
        return []

    def _register_stream(self, msg):
        known = self.streams.get(msg.stream_id)
        if known is not None and known != msg:
            raise ProtocolError(f"stream {msg.stream_id!r} already registered with other keys")
        self.streams[msg.stream_id] = msg

    def _upload_policy(self, msg):
        policy = xacml.parse_policy(msg.policy_xml)
        try:
            if self.store.get(policy.policy_id) == policy:
                return  # re-upload of the same policy
        except StoreError:
            pass
        reg = self.streams.get(policy.stream)
        if reg is None:
            raise ProtocolError(f"policy for unregistered stream {policy.stream!r}")
        if policy.window_size is not None and policy.window_size not in reg.window_sizes:
            raise ProtocolError(f"stream {policy.stream!r} has no window size {policy.window_size}")
        self.store.register_policy(policy)
        if policy.window_size is not None:
            self.accumulators[(policy.stream, policy.policy_id)] = WindowAccumulator(
                policy.threshold, policy.window_size, self.stall_timeout, self.clock
            )

    def _grant(self, msg):
        try:
            policy = self.store.get(msg.policy_id)
        except StoreError:
            raise ProtocolError(f"grant for unknown policy {msg.policy_id!r}") from None
        if msg.transform_key.policy != policy.descriptor:
            raise ProtocolError(f"transform key does not match policy {msg.policy_id!r}")
        self.transform_keys[(msg.policy_id, msg.user_id)] = msg.transform_key
        self.store.register_grant(msg.policy_id, msg.user_id, msg.policy_id)

    def _subscribe(self, msg):
        if (msg.policy_id, msg.user_id) not in self.transform_keys:
            raise ProtocolError(f"user {msg.user_id!r} holds no grant for {msg.policy_id!r}")
        self.subscribers.setdefault(msg.policy_id, set()).add(msg.user_id)

    def ingest(self, msg):
        reg = self.streams.get(msg.stream_id)
        if reg is None:
            raise ProtocolError(f"ciphertext for unregistered stream {msg.stream_id!r}")
        req = xacml.parse_request(msg.request_xml)
        record = msg.record
        if req.stream != msg.stream_id or req.k != record.k:
            raise ProtocolError("request does not describe its ciphertext")
        out = []
        permitted = {}
        for d in self.store.evaluate(req):
            if d.verdict is xacml.Verdict.PERMIT:
                permitted[d.policy_id] = d.users
            else:
                self.denied += 1
        for policy_id, users in permitted.items():
            subs = self.subscribers.get(policy_id, ())
            results = {}
            for user in users:
                if user not in subs:
                    continue
                t = abe.transform(self.transform_keys[(policy_id, user)], record, self.counter)
                if t is None:
                    self.inconsistencies += 1
                    log.error("transform failed despite Permit: policy %s, user %s, k=%d", policy_id, user, record.k)
                    continue
                results[user] = t
            acc = self.accumulators.get((msg.stream_id, policy_id))
            if acc is None:
                for user, t in results.items():
                    out.append((user, TriggerDelivery(policy_id, t.k, t.body, t.proof_part)))
                continue
            full = acc.insert(record.k, results)
            if full is None:
                continue
            i, window = full
            for user in sorted(set.intersection(*(set(e) for e in window))):
                E1, E2 = abe.compute_sum([e[user] for e in window], acc.alpha, acc.beta)
                out.append((user, WindowDelivery(policy_id, i, E1, E2)))
        return out

    def dump_state(self):
        """Everything the cloud holds, as plain builtins (for inspection)."""
        return {
            "streams": {
                s: {"public_key": serialize.dumps(r.public_key), "window_sizes": list(r.window_sizes)}
                for s, r in self.streams.items()
            },
            "policies": [
                {"id": p.policy_id, "stream": p.stream, "op": p.op, "threshold": p.threshold,
                 "window_size": p.window_size, "xml": xacml.emit_policy(p)}
                for p in self.store.policies()
            ],
            "grants": {pid: sorted(self.store.grants(pid)) for pid in (p.policy_id for p in self.store.policies())},
            "transform_keys": {f"{pid}|{uid}": serialize.dumps(tk) for (pid, uid), tk in self.transform_keys.items()},
            "subscribers": {pid: sorted(u) for pid, u in self.subscribers.items()},
            "accumulators": {
                f"{s}|{pid}": {
                    "alpha": a.alpha, "beta": a.beta, "next_index": a.next_index,
                    "buffer": {
                        k: {u: serialize.dumps(t) for u, t in entries.items()}
                        for slot in a.open.values() for k, entries in slot.items()
                    },
                }
                for (s, pid), a in self.accumulators.items()
            },
            "counters": {"pairings": self.counter.pairings, "transforms": self.counter.transforms,
                         "denied": self.denied, "inconsistencies": self.inconsistencies},
        }


# -- user ----------------------------------------------------------------------

@dataclass(frozen=True)
class TriggerValue:
    user_id: str
    policy_id: str
    k: int
    v: int


@dataclass(frozen=True)
class WindowValue:
    user_id: str
    policy_id: str
    i: int
    total: int
    beta: int

    @property
    def average(self):
        return Fraction(self.total, self.beta)


@dataclass(frozen=True)
class AuthorizationFailure:
    user_id: str
    policy_id: str
    index: int
    reason: str


_TABLES = {}
_TABLES_LOCK = threading.Lock()


def shared_table(ctx, M):
    """Discrete-log table for [0, M], cached per context."""
    key = (ctx.tag, ctx.order, M)
    with _TABLES_LOCK:
        table = _TABLES.get(key)
        if table is None:
            table = _TABLES[key] = abe.build_dlog_table(ctx, M)
        return table


class UserClient:
    """Decrypts deliveries for the policies whose key material it holds."""

    def __init__(self, ctx, user_id, v_max=abe.DEFAULT_V_MAX, sink=None):
        self.ctx = ctx
        self.user_id = user_id
        self.v_max = v_max
        self.sink = sink
        self.keys = {}  # policy id -> UserKey
        self.tables = {}
        self.outputs = []

    def add_key(self, km):
        if km.user_id != self.user_id:
            raise ProtocolError(f"key material for {km.user_id!r} delivered to {self.user_id!r}")
        uk = km.user_key
        self.keys[km.policy_id] = uk
        M = self.v_max * uk.beta if uk.sigma is not None else self.v_max
        self.tables[km.policy_id] = shared_table(self.ctx, M)
        return Subscribe(self.user_id, km.policy_id)

    def receive(self, msg):
        if isinstance(msg, Error):
            log.warning("cloud error %d: %s", msg.code, msg.text)
            return None
        uk = self.keys.get(msg.policy_id)
        if uk is None:
            raise ProtocolError(f"delivery for unknown policy {msg.policy_id!r}")
        table = self.tables[msg.policy_id]
        try:
            if isinstance(msg, TriggerDelivery):
                t = abe.TransformedCiphertext(msg.k, msg.body, msg.proof_part)
                event = TriggerValue(self.user_id, msg.policy_id, msg.k, abe.decrypt_trigger(uk, t, table))
            elif isinstance(msg, WindowDelivery):
                s = abe.decrypt_window(uk, msg.i, msg.E1, msg.E2, table)
                event = WindowValue(self.user_id, msg.policy_id, msg.i, s.total, s.beta)
            else:
                raise ProtocolError(f"user does not accept {type(msg).__name__}")
        except (TableMiss, PolicyError) as exc:
            index = msg.k if isinstance(msg, TriggerDelivery) else msg.i
            event = AuthorizationFailure(self.user_id, msg.policy_id, index, str(exc))
        self.outputs.append(event)
        if self.sink is not None:
            self.sink(event)
        return event
