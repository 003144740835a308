"""Mutually authenticated encrypted channels via TLS.

A private CA issues one certificate per identity (broker, server, each
cart). Both sides require and verify the peer certificate against the CA,
then check the peer's common name explicitly, so the application layer
always knows who it is talking to. Credential files are plain PEM in a
directory generated by `bedwatch keygen`.
"""

from __future__ import annotations

import datetime
import socket
import ssl
from pathlib import Path

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.x509.oid import NameOID

from ..core.types import BedwatchError

CERT_DAYS = 3650


class ChannelAuthError(BedwatchError):
    """Handshake failed or the peer is not who it claims to be."""


def _name(common_name: str) -> x509.Name:
    return x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, common_name)])


def _write_key(path: Path, key) -> None:
    path.write_bytes(
        key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )
    )


def generate_credentials(creds_dir: str | Path, identities: list[str]) -> None:
    """Create a CA plus one signed certificate per identity."""
    creds = Path(creds_dir)
    creds.mkdir(parents=True, exist_ok=True)
    now = datetime.datetime.now(datetime.timezone.utc)
    ca_key = ec.generate_private_key(ec.SECP256R1())
    ca_cert = (
        x509.CertificateBuilder()
        .subject_name(_name("bedwatch-ca"))
        .issuer_name(_name("bedwatch-ca"))
        .public_key(ca_key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(now - datetime.timedelta(minutes=5))
        .not_valid_after(now + datetime.timedelta(days=CERT_DAYS))
        .add_extension(x509.BasicConstraints(ca=True, path_length=0), critical=True)
        .sign(ca_key, hashes.SHA256())
    )
    (creds / "ca.pem").write_bytes(ca_cert.public_bytes(serialization.Encoding.PEM))
    _write_key(creds / "ca.key", ca_key)
    for identity in identities:
        key = ec.generate_private_key(ec.SECP256R1())
        cert = (
            x509.CertificateBuilder()
            .subject_name(_name(identity))
            .issuer_name(_name("bedwatch-ca"))
            .public_key(key.public_key())
            .serial_number(x509.random_serial_number())
            .not_valid_before(now - datetime.timedelta(minutes=5))
            .not_valid_after(now + datetime.timedelta(days=CERT_DAYS))
            .add_extension(
                x509.SubjectAlternativeName([x509.DNSName(identity)]), critical=False
            )
            .sign(ca_key, hashes.SHA256())
        )
        (creds / f"{identity}.pem").write_bytes(cert.public_bytes(serialization.Encoding.PEM))
        _write_key(creds / f"{identity}.key", key)


def _context(creds_dir: Path, identity: str, server_side: bool) -> ssl.SSLContext:
    purpose = ssl.Purpose.CLIENT_AUTH if server_side else ssl.Purpose.SERVER_AUTH
    ctx = ssl.create_default_context(purpose, cafile=str(creds_dir / "ca.pem"))
    cert = creds_dir / f"{identity}.pem"
    key = creds_dir / f"{identity}.key"
    if not cert.exists() or not key.exists():
        raise ChannelAuthError(f"no credential material for identity {identity!r}")
    ctx.load_cert_chain(certfile=str(cert), keyfile=str(key))
    ctx.verify_mode = ssl.CERT_REQUIRED
    ctx.check_hostname = False  # identity is checked explicitly via the peer CN
    return ctx


def peer_identity(tls_sock: ssl.SSLSocket) -> str:
    cert = tls_sock.getpeercert()
    if not cert:
        raise ChannelAuthError("peer presented no certificate")
    for rdn in cert.get("subject", ()):
        for oid, value in rdn:
            if oid == "commonName":
                return value
    raise ChannelAuthError("peer certificate has no common name")


def connect(
    host: str, port: int, creds_dir: str | Path, identity: str,
    expect_peer: str | None = None, timeout: float = 10.0,
) -> ssl.SSLSocket:
    """Dial and authenticate; returns the established channel."""
    ctx = _context(Path(creds_dir), identity, server_side=False)
    raw = socket.create_connection((host, port), timeout=timeout)
    try:
        tls = ctx.wrap_socket(raw, server_hostname=host)
    except (ssl.SSLError, ConnectionError, OSError) as exc:
        raw.close()
        raise ChannelAuthError(f"handshake with {host}:{port} failed: {exc}") from None
    if expect_peer is not None:
        actual = peer_identity(tls)
        if actual != expect_peer:
            tls.close()
            raise ChannelAuthError(f"expected peer {expect_peer!r}, got {actual!r}")
    return tls


def server_context(creds_dir: str | Path, identity: str) -> ssl.SSLContext:
    return _context(Path(creds_dir), identity, server_side=True)
