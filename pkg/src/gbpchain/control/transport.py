"""Datagram transports for the Map Server: in-process (tests) and UDP."""
from __future__ import annotations

import logging
import socket
import threading

from .mapserver import DEFAULT_PORT

log = logging.getLogger(__name__)


class InProcessTransport:
    """Records every datagram the server emits; nothing leaves the process."""

    def __init__(self):
        self.sent: list[tuple[bytes, object]] = []

    def send(self, data: bytes, addr=None) -> None:
        self.sent.append((data, addr))

    @property
    def bytes_sent(self) -> int:
        return sum(len(d) for d, _ in self.sent)


class UdpTransport:
    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind((host, port))
        self.address = self.sock.getsockname()

    def send(self, data: bytes, addr) -> None:
        self.sock.sendto(data, addr)

    def close(self) -> None:
        self.sock.close()


def serve_udp(server, host: str = "127.0.0.1", port: int = DEFAULT_PORT) -> tuple[UdpTransport, threading.Thread, threading.Event]:
    """Run `server.handle_datagram` on a UDP socket in a daemon thread.

    Returns (transport, thread, stop_event); set the event and close the
    transport to stop.
    """
    transport = UdpTransport(host, port)
    server.transport = transport
    stop = threading.Event()
    transport.sock.settimeout(0.2)

    def loop():
        while not stop.is_set():
            try:
                data, addr = transport.sock.recvfrom(65535)
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                server.handle_datagram(data, addr)
            except Exception:
                log.exception("map server failed on datagram from %s", addr)

    thread = threading.Thread(target=loop, name="map-server", daemon=True)
    thread.start()
    return transport, thread, stop
