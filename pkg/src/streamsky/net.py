"""TCP binding: a threaded cloud server and a framed client connection."""

import logging
import socket
import threading

from .errors import ConnectionClosed, FrameTooLarge, ProtocolError, StreamSkyError
from .roles import E_PROTOCOL, E_UNKNOWN
from .wire import Error, Subscribe

log = logging.getLogger(__name__)


class Connection:
    """One socket; one reader and one writer (writes are serialized)."""

    def __init__(self, sock, codec):
        self.sock = sock
        self.codec = codec
        self.rfile = sock.makefile("rb")
        self._wlock = threading.Lock()

    @classmethod
    def connect(cls, host, port, codec, timeout=10.0):
        sock = socket.create_connection((host, port), timeout=timeout)
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return cls(sock, codec)

    def send(self, msg):
        frame = self.codec.frame(msg)
        with self._wlock:
            self.sock.sendall(frame)
        return frame

    def recv(self):
        return self.codec.read_frame(self.rfile)

    def shutdown_write(self):
        try:
            self.sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass

    def close(self):
        try:
            self.rfile.close()
        finally:
            self.sock.close()


class CloudServer:
    """Serves a :class:`~streamsky.roles.CloudService` over TCP.

    Every connection gets a reader thread. A connection that sends
    ``Subscribe`` becomes that user's push channel; deliveries produced while
    handling any connection's messages are written to the matching channel.
    ``on_frame(src, dst, frame)`` observes every frame the server sends.
    """

    def __init__(self, cloud, codec, host="127.0.0.1", port=0, on_frame=None):
        self.cloud = cloud
        self.codec = codec
        self.on_frame = on_frame
        self._listener = socket.create_server((host, port))
        self.address = self._listener.getsockname()[:2]
        self._users = {}  # user id -> Connection
        self._conns = []
        self._threads = []
        self._lock = threading.Lock()
        self._closing = False
        self._accept_thread = None

    def start(self):
        self._accept_thread = threading.Thread(target=self._accept_loop, name="cloud-accept", daemon=True)
        self._accept_thread.start()
        return self

    def _accept_loop(self):
        while True:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = Connection(sock, self.codec)
            t = threading.Thread(target=self._serve, args=(conn,), daemon=True)
            with self._lock:
                if self._closing:
                    conn.close()
                    return
                self._conns.append(conn)
                self._threads.append(t)
            t.start()

    def _push(self, user, msg, conn=None):
        conn = conn or self._users.get(user)
        if conn is None:
            log.warning("no channel for user %s; dropping %s", user, type(msg).__name__)
            return
        try:
            frame = conn.send(msg)
        except OSError as exc:
            log.warning("push to %s failed: %s", user, exc)
            return
        if self.on_frame is not None:
            self.on_frame("cloud", user, frame)

    def _serve(self, conn):
        peer = "peer"
        try:
            while True:
                try:
                    msg = conn.recv()
                except (ConnectionClosed, FrameTooLarge) as exc:
                    log.warning("%s: %s", peer, exc)
                    return
                except StreamSkyError as exc:
                    # payload was consumed whole, so framing is intact
                    self._push(peer, Error(E_PROTOCOL, str(exc)), conn)
                    continue
                except OSError:
                    return
                if msg is None:
                    return
                if isinstance(msg, Subscribe):
                    peer = msg.user_id
                try:
                    out = self.cloud.handle(msg)
                except StreamSkyError as exc:
                    code = E_PROTOCOL if isinstance(exc, ProtocolError) else E_UNKNOWN
                    self._push(peer, Error(code, str(exc)), conn)
                    continue
                if isinstance(msg, Subscribe):
                    with self._lock:
                        self._users[msg.user_id] = conn
                for user, delivery in out:
                    self._push(user, delivery)
        finally:
            if not any(c is conn for c in self._users.values()):
                conn.shutdown_write()

    def close(self):
        """Stop accepting, end every push channel and wait for readers."""
        with self._lock:
            self._closing = True
            conns = list(self._conns)
            threads = list(self._threads)
        try:
            self._listener.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._listener.close()
        for c in conns:
            c.shutdown_write()
        for t in threads:
            t.join(timeout=10)
        for c in conns:
            c.close()
