"""Packet protection: Initial key schedule, AEAD sealing, handshake boundary."""

from .packet import (
    AEAD_TAG_LEN,
    INITIAL_SALT_V1,
    LEVEL_FOR_PACKET_TYPE,
    PACKET_TYPE_FOR_LEVEL,
    QUIC_V1,
    DecryptError,
    EncryptionLevel,
    KeyMaterial,
    ProtectionError,
    UnsupportedVersionError,
    cleartext_packet_bytes,
    decode_packet_number,
    derive_initial_keys,
    hkdf_expand_label,
    hkdf_extract,
    key_material_from_secret,
    packet_number_length,
    protect,
    unprotect,
)
from .provider import HandshakeProvider, NullHandshakeProvider, ProviderError, ticket_for_seed

__all__ = [
    "AEAD_TAG_LEN",
    "DecryptError",
    "EncryptionLevel",
    "HandshakeProvider",
    "INITIAL_SALT_V1",
    "KeyMaterial",
    "LEVEL_FOR_PACKET_TYPE",
    "NullHandshakeProvider",
    "PACKET_TYPE_FOR_LEVEL",
    "ProtectionError",
    "ProviderError",
    "QUIC_V1",
    "UnsupportedVersionError",
    "cleartext_packet_bytes",
    "decode_packet_number",
    "derive_initial_keys",
    "hkdf_expand_label",
    "hkdf_extract",
    "key_material_from_secret",
    "packet_number_length",
    "protect",
    "ticket_for_seed",
    "unprotect",
]
