"""Blocks, parameters, fragment sets, padding and the on-disk formats.

Everything here is immutable once constructed. Fragment contents live in a
read-only ``numpy`` array of shape ``(k, blocks_per_fragment, block_size)``;
fragment ``j`` owns stream blocks ``j*#f .. (j+1)*#f - 1``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import FragmentFormatError, MissingFragmentError, ParamError

FORMAT_VERSION = 1
MAGIC = b"PEA1"
DIGEST_SIZE = 32


class CipherId(str, enum.Enum):
    AES_128 = "AES-128"
    NULL_TEST = "NULL-TEST"

    @classmethod
    def parse(cls, value: "str | CipherId") -> "CipherId":
        if isinstance(value, CipherId):
            return value
        norm = str(value).strip().upper().replace("_", "-")
        for member in cls:
            if member.value == norm:
                return member
        raise ParamError(f"unknown cipher {value!r}")


# native block width in bytes
CIPHER_WIDTH = {CipherId.AES_128: 16, CipherId.NULL_TEST: 16}


class SchemeId(str, enum.Enum):
    PE_AONT = "PE-AONT"
    ENC_SPLIT = "ENC_SPLIT"
    BASTION = "BASTION"
    SFD = "SFD"

    @property
    def code(self) -> int:
        return _SCHEME_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "SchemeId":
        for scheme, c in _SCHEME_CODES.items():
            if c == code:
                return scheme
        raise FragmentFormatError(f"unknown scheme id {code}")

    @classmethod
    def parse(cls, value: "str | SchemeId") -> "SchemeId":
        if isinstance(value, SchemeId):
            return value
        norm = str(value).strip().upper().replace("-", "_")
        for member in cls:
            if member.value.replace("-", "_") == norm:
                return member
        raise ParamError(f"unknown scheme {value!r}")


_SCHEME_CODES = {
    SchemeId.PE_AONT: 1,
    SchemeId.ENC_SPLIT: 2,
    SchemeId.BASTION: 3,
    SchemeId.SFD: 4,
}


class SecurityLevel(str, enum.Enum):
    FULL = "FULL"
    SINGLE_SITE = "SINGLE_SITE"
    PERFORMANCE_ONLY = "PERFORMANCE_ONLY"


class FragmentState(str, enum.Enum):
    RAW = "RAW"
    PARTIALLY_ENCRYPTED = "PARTIALLY_ENCRYPTED"
    TRANSFORMED = "TRANSFORMED"


class Block(bytes):
    """A fixed-width byte block; ``^`` refuses operands of different width."""

    def __xor__(self, other):
        if not isinstance(other, (bytes, bytearray, memoryview)):
            return NotImplemented
        other = bytes(other)
        if len(other) != len(self):
            raise ValueError(
                f"cannot xor blocks of different width ({len(self)} vs {len(other)})"
            )
        n = int.from_bytes(self, "little") ^ int.from_bytes(other, "little")
        return Block(n.to_bytes(len(self), "little"))

    __rxor__ = __xor__

    @classmethod
    def zero(cls, width: int = 16) -> "Block":
        return cls(bytes(width))

    def __repr__(self) -> str:
        return f"Block({self.hex()})"


@dataclass(frozen=True)
class Params:
    k: int
    e: int
    block_size: int = 16
    cipher_id: CipherId = CipherId.AES_128

    def __post_init__(self):
        object.__setattr__(self, "cipher_id", CipherId.parse(self.cipher_id))
        if isinstance(self.k, bool) or not isinstance(self.k, int) or self.k < 2:
            raise ParamError(f"k must be an integer >= 2, got {self.k!r}")
        if isinstance(self.e, bool) or not isinstance(self.e, int) or self.e < 1:
            raise ParamError(f"e must be an integer >= 1, got {self.e!r}")
        if self.e >= self.k:
            raise ParamError(f"e must be < k (got e={self.e}, k={self.k})")
        width = CIPHER_WIDTH[self.cipher_id]
        if self.block_size <= 0 or self.block_size % width:
            raise ParamError(
                f"block_size must be a positive multiple of {width} for {self.cipher_id.value}"
            )
        if self.block_size != width:
            raise ParamError(
                f"only the native block width {width} is supported for {self.cipher_id.value}"
            )

    @property
    def security_level(self) -> SecurityLevel:
        k, e = self.k, self.e
        if k % 2 == 0 and k >= 4 and e >= 3:
            if e == k - 1:
                return SecurityLevel.FULL
            if e <= k - 2:
                return SecurityLevel.SINGLE_SITE
        return SecurityLevel.PERFORMANCE_ONLY

    @property
    def protects_key_exposure(self) -> bool:
        return self.security_level is not SecurityLevel.PERFORMANCE_ONLY

    def total_blocks(self, plain_blocks: int) -> int:
        """l = m + 1 (the IV block is added to the plaintext stream)."""
        return plain_blocks + 1

    def blocks_per_fragment(self, plain_blocks: int) -> int:
        l = plain_blocks + 1
        if l % self.k:
            raise ParamError(f"(m + 1) = {l} is not divisible by k = {self.k}")
        return l // self.k


def validate_params(k: int, e: int, block_size: int = 16,
                    cipher_id: "CipherId | str" = CipherId.AES_128) -> Params:
    return Params(k=k, e=e, block_size=block_size, cipher_id=CipherId.parse(cipher_id))


def padded_block_count(length: int, k: int, block_size: int) -> int:
    """Smallest m' with m'*block_size >= length and (m' + 1) divisible by k."""
    if length <= 0:
        raise ParamError("data must be non-empty")
    m = -(-length // block_size)
    return m + (-(m + 1)) % k


def pad_and_blockify(data: bytes, params: Params) -> tuple[np.ndarray, int]:
    """Zero-pad ``data`` to m' whole blocks; returns an ``(m', block_size)`` array and m'."""
    m = padded_block_count(len(data), params.k, params.block_size)
    out = np.zeros(m * params.block_size, dtype=np.uint8)
    out[: len(data)] = np.frombuffer(data, dtype=np.uint8)
    out.flags.writeable = False
    return out.reshape(m, params.block_size), m


def as_blocks(blocks, block_size: int) -> np.ndarray:
    """Coerce bytes / a sequence of blocks / an array into an ``(n, block_size)`` uint8 array."""
    if isinstance(blocks, np.ndarray):
        arr = blocks.astype(np.uint8, copy=False)
    elif isinstance(blocks, (bytes, bytearray, memoryview)):
        arr = np.frombuffer(blocks, dtype=np.uint8)
    else:
        seq = list(blocks)
        for b in seq:
            if len(b) != block_size:
                raise ValueError(f"block of width {len(b)}, expected {block_size}")
        arr = np.frombuffer(b"".join(bytes(b) for b in seq), dtype=np.uint8)
    if arr.size % block_size:
        raise ValueError(f"{arr.size} bytes is not a whole number of {block_size}-byte blocks")
    return arr.reshape(-1, block_size)


@dataclass(frozen=True)
class RowView:
    """The k blocks sharing in-fragment offset ``row_index``, one per fragment."""

    row_index: int
    blocks: tuple[Block, ...]


@dataclass(frozen=True, eq=False)
class FragmentSet:
    params: Params
    blocks: np.ndarray
    state: FragmentState = FragmentState.RAW

    def __post_init__(self):
        arr = np.asarray(self.blocks, dtype=np.uint8)
        k, bs = self.params.k, self.params.block_size
        if arr.ndim == 2:
            arr = arr.reshape(k, -1, bs)
        if arr.ndim != 3 or arr.shape[0] != k or arr.shape[2] != bs or arr.shape[1] < 1:
            raise ValueError(f"fragment array shape {arr.shape} does not fit k={k}, block_size={bs}")
        if arr.flags.writeable:
            arr = arr.view()
            arr.flags.writeable = False
        object.__setattr__(self, "blocks", arr)
        object.__setattr__(self, "state", FragmentState(self.state))

    @classmethod
    def from_fragments(cls, params: Params, fragments: Sequence["bytes | None"],
                       state: FragmentState = FragmentState.TRANSFORMED) -> "FragmentSet":
        """Assemble from k payloads; ``None`` marks a withheld fragment."""
        if len(fragments) != params.k:
            missing = range(len(fragments), params.k)
            if len(fragments) < params.k:
                raise MissingFragmentError(missing)
            raise ValueError(f"{len(fragments)} fragments given, k = {params.k}")
        missing = [i for i, f in enumerate(fragments) if f is None]
        if missing:
            raise MissingFragmentError(missing)
        sizes = {len(f) for f in fragments}
        if len(sizes) != 1:
            raise FragmentFormatError("fragments have unequal sizes")
        buf = np.frombuffer(b"".join(bytes(f) for f in fragments), dtype=np.uint8)
        return cls(params, buf.reshape(params.k, -1, params.block_size), state)

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def blocks_per_fragment(self) -> int:
        return self.blocks.shape[1]

    @property
    def total_blocks(self) -> int:
        return self.blocks.shape[0] * self.blocks.shape[1]

    @property
    def fragments(self) -> list[bytes]:
        return [self.blocks[j].tobytes() for j in range(self.k)]

    def fragment(self, j: int) -> bytes:
        return self.blocks[j].tobytes()

    def block(self, j: int, i: int) -> Block:
        return Block(self.blocks[j, i].tobytes())

    def row(self, i: int) -> RowView:
        return RowView(i, tuple(self.block(j, i) for j in range(self.k)))

    def stream(self) -> bytes:
        """All l blocks in stream order (fragment-major)."""
        return self.blocks.tobytes()

    def with_state(self, state: FragmentState) -> "FragmentSet":
        return replace(self, state=state)

    def __eq__(self, other):
        if not isinstance(other, FragmentSet):
            return NotImplemented
        return (self.params == other.params and self.state == other.state
                and np.array_equal(self.blocks, other.blocks))


def fragment_digest(payload) -> str:
    return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class Manifest:
    """Recovery metadata. Carries no key material and no plaintext."""

    params: Params
    scheme: SchemeId
    original_length: int
    padded_blocks: int
    fragment_digests: tuple[str, ...]
    placement: tuple[str, ...] = ()
    plaintext_mac: str | None = None
    version: int = FORMAT_VERSION

    def __post_init__(self):
        object.__setattr__(self, "scheme", SchemeId.parse(self.scheme))
        object.__setattr__(self, "fragment_digests", tuple(self.fragment_digests))
        object.__setattr__(self, "placement", tuple(self.placement))
        k, bs = self.params.k, self.params.block_size
        if len(self.fragment_digests) != k:
            raise FragmentFormatError(
                f"manifest lists {len(self.fragment_digests)} digests, expected k = {k}"
            )
        if self.placement and len(self.placement) != k:
            raise FragmentFormatError("placement must name one site per fragment")
        padded = self.padded_blocks * bs
        if not (self.original_length <= padded < self.original_length + k * bs):
            raise FragmentFormatError(
                f"inconsistent lengths: original {self.original_length}, padded blocks {self.padded_blocks}"
            )

    def to_dict(self, include_placement: bool = True) -> dict:
        d = {
            "version": self.version,
            "scheme": self.scheme.value,
            "cipher": self.params.cipher_id.value,
            "k": self.params.k,
            "e": self.params.e,
            "block_size": self.params.block_size,
            "original_length": self.original_length,
            "padded_blocks": self.padded_blocks,
            "fragment_digests": list(self.fragment_digests),
        }
        if self.plaintext_mac is not None:
            d["plaintext_mac"] = self.plaintext_mac
        if include_placement:
            d["placement"] = list(self.placement)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        try:
            version = int(d["version"])
            if version != FORMAT_VERSION:
                raise FragmentFormatError(f"unsupported manifest version {version}")
            params = Params(int(d["k"]), int(d["e"]), int(d["block_size"]),
                            CipherId.parse(d.get("cipher", CipherId.AES_128.value)))
            return cls(
                params=params,
                scheme=SchemeId.parse(d["scheme"]),
                original_length=int(d["original_length"]),
                padded_blocks=int(d["padded_blocks"]),
                fragment_digests=tuple(d["fragment_digests"]),
                placement=tuple(d.get("placement") or ()),
                plaintext_mac=d.get("plaintext_mac"),
                version=version,
            )
        except (KeyError, TypeError) as exc:
            raise FragmentFormatError(f"malformed manifest: {exc}") from exc

    @classmethod
    def from_json(cls, text: "str | bytes") -> "Manifest":
        try:
            d = json.loads(text)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise FragmentFormatError(f"manifest is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise FragmentFormatError("manifest must be a JSON object")
        return cls.from_dict(d)

    def digest(self) -> bytes:
        """SHA-256 over the canonical manifest without placement.

        Placement is excluded so a data object keeps its identity when re-planned.
        """
        canon = json.dumps(self.to_dict(include_placement=False), sort_keys=True,
                           separators=(",", ":"))
        return hashlib.sha256(canon.encode()).digest()

    def digest_hex(self) -> str:
        return self.digest().hex()

    def with_placement(self, placement: Iterable[str]) -> "Manifest":
        return replace(self, placement=tuple(placement))


def build_manifest(scheme: SchemeId, fs: FragmentSet, original_length: int,
                   padded_blocks: int, plaintext_mac: str | None = None) -> Manifest:
    digests = tuple(fragment_digest(fs.blocks[j]) for j in range(fs.k))
    return Manifest(fs.params, scheme, original_length, padded_blocks, digests,
                    plaintext_mac=plaintext_mac)


# magic | version u16 | scheme u8 | k u16 | e u16 | index u16 | block_size u16
# | blocks_per_fragment u64 | manifest digest (32 bytes)
_HEADER = struct.Struct("<4sHBHHHHQ32s")
HEADER_SIZE = _HEADER.size


@dataclass(frozen=True)
class FragmentHeader:
    scheme: SchemeId
    k: int
    e: int
    fragment_index: int
    block_size: int
    blocks_per_fragment: int
    manifest_digest: bytes
    version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "magic": MAGIC.decode(),
            "version": self.version,
            "scheme": self.scheme.value,
            "k": self.k,
            "e": self.e,
            "fragment_index": self.fragment_index,
            "block_size": self.block_size,
            "blocks_per_fragment": self.blocks_per_fragment,
            "manifest_digest": self.manifest_digest.hex(),
            "payload_bytes": self.blocks_per_fragment * self.block_size,
        }


@dataclass(frozen=True)
class Fragment:
    header: FragmentHeader
    payload: bytes = field(repr=False)


def serialize_fragment(fragment_index: int, blocks, manifest_digest: bytes, *,
                       params: Params, scheme: SchemeId = SchemeId.PE_AONT) -> bytes:
    payload = as_blocks(blocks, params.block_size)
    if payload.shape[0] == 0:
        raise ValueError("a fragment needs at least one block")
    if len(manifest_digest) != DIGEST_SIZE:
        raise ValueError("manifest digest must be 32 bytes")
    if not 0 <= fragment_index < params.k:
        raise ValueError(f"fragment index {fragment_index} out of range for k={params.k}")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, SchemeId.parse(scheme).code, params.k,
                          params.e, fragment_index, params.block_size, payload.shape[0],
                          bytes(manifest_digest))
    return header + payload.tobytes()


def read_fragment_header(data: bytes) -> FragmentHeader:
    if len(data) < HEADER_SIZE:
        raise FragmentFormatError(f"fragment too short for header ({len(data)} bytes)")
    magic, version, code, k, e, index, bs, nblocks, digest = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FragmentFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FragmentFormatError(f"unsupported fragment format version {version}")
    return FragmentHeader(SchemeId.from_code(code), k, e, index, bs, nblocks, digest, version)


def deserialize_fragment(data: bytes) -> Fragment:
    header = read_fragment_header(data)
    want = header.blocks_per_fragment * header.block_size
    got = len(data) - HEADER_SIZE
    if got < want:
        raise FragmentFormatError(f"truncated payload: {got} of {want} bytes")
    if got > want:
        raise FragmentFormatError(f"{got - want} trailing bytes after payload")
    return Fragment(header, bytes(data[HEADER_SIZE:]))
