"""Signature, key-transport and symmetric primitives used by the protocol.

Two interchangeable suites are provided. ``EcSuite`` uses ECDSA/ECDH over
P-256 with AES-256-GCM. ``NullSuite`` is a fast test double with the same
byte sizes and the same failure behaviour (wrong key, altered message), used
for large simulation sweeps. Neither suite offers any protection beyond what
is needed to drive the protocol; NullSuite is not cryptographically secure.

Keys are plain bytes: 32-byte private scalars and 33-byte compressed points.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

PRIVATE_KEY_SIZE = 32
PUBLIC_KEY_SIZE = 33
SIGNATURE_SIZE = 64
SESSION_KEY_SIZE = 32
NONCE_SIZE = 12
TAG_SIZE = 16
DIGEST_SIZE = 32

_P256_ORDER = int("FFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551", 16)


class DecryptFailure(Exception):
    """Ciphertext did not authenticate under the supplied key."""


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def random_bytes(rng, n: int) -> bytes:
    """Draw ``n`` bytes from a numpy Generator (keeps runs reproducible)."""
    return rng.bytes(n)


class EcSuite:
    name = "ec"

    def keypair(self, rng) -> tuple[bytes, bytes]:
        scalar = int.from_bytes(random_bytes(rng, 32), "big") % (_P256_ORDER - 1) + 1
        priv = scalar.to_bytes(PRIVATE_KEY_SIZE, "big")
        return priv, self.public_key(priv)

    def public_key(self, private_key: bytes) -> bytes:
        return _ec_pub_bytes(_ec_private(private_key))

    def sign(self, msg: bytes, private_key: bytes) -> bytes:
        der = _ec_private(private_key).sign(msg, ec.ECDSA(hashes.SHA256()))
        r, s = decode_dss_signature(der)
        return r.to_bytes(32, "big") + s.to_bytes(32, "big")

    def verify(self, msg: bytes, signature: bytes, public_key: bytes) -> bool:
        if len(signature) != SIGNATURE_SIZE:
            return False
        try:
            pub = _ec_public(bytes(public_key))
        except ValueError:
            return False
        r = int.from_bytes(signature[:32], "big")
        s = int.from_bytes(signature[32:], "big")
        if not (0 < r < _P256_ORDER and 0 < s < _P256_ORDER):
            return False
        try:
            pub.verify(encode_dss_signature(r, s), msg, ec.ECDSA(hashes.SHA256()))
        except InvalidSignature:
            return False
        return True

    def seal(self, key: bytes, plaintext: bytes, rng) -> bytes:
        nonce = random_bytes(rng, NONCE_SIZE)
        return nonce + AESGCM(key).encrypt(nonce, plaintext, None)

    def open(self, key: bytes, ciphertext: bytes) -> bytes:
        if len(ciphertext) < NONCE_SIZE + TAG_SIZE:
            raise DecryptFailure("ciphertext too short")
        try:
            return AESGCM(key).decrypt(ciphertext[:NONCE_SIZE], ciphertext[NONCE_SIZE:], None)
        except InvalidTag as exc:
            raise DecryptFailure("authentication tag mismatch") from exc

    def wrap_key(self, session_key: bytes, recipient_pub: bytes, rng) -> bytes:
        eph_priv, eph_pub = self.keypair(rng)
        shared = _ec_private(eph_priv).exchange(ec.ECDH(), _ec_public(recipient_pub))
        kek = _hkdf(shared, eph_pub)
        return eph_pub + self.seal(kek, session_key, rng)

    def unwrap_key(self, wrapped: bytes, recipient_priv: bytes) -> bytes:
        eph_pub = wrapped[:PUBLIC_KEY_SIZE]
        try:
            shared = _ec_private(recipient_priv).exchange(ec.ECDH(), _ec_public(eph_pub))
        except ValueError as exc:
            raise DecryptFailure("bad ephemeral key") from exc
        return self.open(_hkdf(shared, eph_pub), wrapped[PUBLIC_KEY_SIZE:])


def _hkdf(shared: bytes, eph_pub: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(), length=SESSION_KEY_SIZE, salt=None,
        info=b"peerlbs-ecies" + eph_pub,
    ).derive(shared)


@lru_cache(maxsize=4096)
def _ec_private(priv: bytes):
    return ec.derive_private_key(int.from_bytes(priv, "big"), ec.SECP256R1())


@lru_cache(maxsize=4096)
def _ec_public(pub: bytes):
    return ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256R1(), pub)


def _ec_pub_bytes(key) -> bytes:
    from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

    return key.public_key().public_bytes(Encoding.X962, PublicFormat.CompressedPoint)


class NullSuite:
    """Size-faithful stand-in for EcSuite. Hash based, not secure."""

    name = "null"

    def keypair(self, rng) -> tuple[bytes, bytes]:
        priv = random_bytes(rng, PRIVATE_KEY_SIZE)
        return priv, self.public_key(priv)

    def public_key(self, private_key: bytes) -> bytes:
        return _null_pub(private_key)

    def sign(self, msg: bytes, private_key: bytes) -> bytes:
        return hashlib.sha512(b"sig" + _null_pub(private_key) + msg).digest()

    def verify(self, msg: bytes, signature: bytes, public_key: bytes) -> bool:
        return hashlib.sha512(b"sig" + bytes(public_key) + msg).digest() == signature

    def seal(self, key: bytes, plaintext: bytes, rng) -> bytes:
        nonce = random_bytes(rng, NONCE_SIZE)
        return nonce + _xor_stream(key, nonce, plaintext) + _null_tag(key, nonce, plaintext)

    def open(self, key: bytes, ciphertext: bytes) -> bytes:
        if len(ciphertext) < NONCE_SIZE + TAG_SIZE:
            raise DecryptFailure("ciphertext too short")
        nonce, body, tag = ciphertext[:NONCE_SIZE], ciphertext[NONCE_SIZE:-TAG_SIZE], ciphertext[-TAG_SIZE:]
        plaintext = _xor_stream(key, nonce, body)
        if _null_tag(key, nonce, plaintext) != tag:
            raise DecryptFailure("authentication tag mismatch")
        return plaintext

    def wrap_key(self, session_key: bytes, recipient_pub: bytes, rng) -> bytes:
        eph = random_bytes(rng, PUBLIC_KEY_SIZE)
        return eph + self.seal(digest(bytes(recipient_pub) + eph), session_key, rng)

    def unwrap_key(self, wrapped: bytes, recipient_priv: bytes) -> bytes:
        eph = wrapped[:PUBLIC_KEY_SIZE]
        return self.open(digest(_null_pub(recipient_priv) + eph), wrapped[PUBLIC_KEY_SIZE:])


@lru_cache(maxsize=65536)
def _null_pub(priv: bytes) -> bytes:
    return b"\x02" + digest(b"pub" + priv)


def _xor_stream(key: bytes, nonce: bytes, data: bytes) -> bytes:
    if not data:
        return b""
    stream = hashlib.shake_256(key + nonce).digest(len(data))
    return (int.from_bytes(data, "little") ^ int.from_bytes(stream, "little")).to_bytes(len(data), "little")


def _null_tag(key: bytes, nonce: bytes, plaintext: bytes) -> bytes:
    return digest(b"tag" + key + nonce + plaintext)[:TAG_SIZE]


SUITES = {"ec": EcSuite, "null": NullSuite}


def get_suite(name: str):
    try:
        return SUITES[name]()
    except KeyError:
        raise ValueError(f"unknown crypto suite {name!r}") from None


# Module-level convenience wrappers over the default (real) suite.
_default = EcSuite()


def sign(msg_bytes: bytes, private_key: bytes) -> bytes:
    return _default.sign(msg_bytes, private_key)


def verify(msg_bytes: bytes, signature: bytes, public_key: bytes) -> bool:
    return _default.verify(msg_bytes, signature, public_key)
