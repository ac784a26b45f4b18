"""Block ciphers, CBC chaining and operation counting.

AES-128 is backed by OpenSSL through ``cryptography``; bulk CBC goes through
its CBC mode so large streams run at native speed. ``NULL-TEST`` is the
identity permutation, which turns CBC into a running XOR and makes every
pipeline hand-checkable. It is refused unless the caller opts in.
"""

from __future__ import annotations

import os
import secrets
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .block_model import Block, CipherId, as_blocks
from .errors import CipherKeyError, EntropyError, InsecureCipherError

KEY_FILE_ENV = "PEAONT_KEY_FILE"


@dataclass
class OpCounters:
    """Block-cipher invocations and block-wide XORs performed during one run."""

    block_cipher_ops: int = 0
    xor_ops: int = 0

    def add(self, cipher_ops: int = 0, xor_ops: int = 0) -> None:
        if cipher_ops < 0 or xor_ops < 0:
            raise ValueError("counters only move forward")
        self.block_cipher_ops += cipher_ops
        self.xor_ops += xor_ops

    def reset(self) -> None:
        self.block_cipher_ops = 0
        self.xor_ops = 0

    def snapshot(self) -> tuple[int, int]:
        return self.block_cipher_ops, self.xor_ops


class BlockCipher(ABC):
    cipher_id: CipherId
    block_width: int = 16
    key_length: int = 16

    def check_key(self, key: bytes) -> bytes:
        key = bytes(key)
        if len(key) != self.key_length:
            raise CipherKeyError(
                f"{self.cipher_id.value} needs a {self.key_length}-byte key, got {len(key)} bytes"
            )
        return key

    def check_iv(self, iv: bytes) -> bytes:
        iv = bytes(iv)
        if len(iv) != self.block_width:
            raise ValueError(f"IV must be {self.block_width} bytes, got {len(iv)}")
        return iv

    @abstractmethod
    def encrypt_block(self, block: bytes, key: bytes) -> Block: ...

    @abstractmethod
    def decrypt_block(self, block: bytes, key: bytes) -> Block: ...

    def cbc_stream(self, key: bytes, iv: bytes, decrypt: bool = False) -> "CbcStream":
        return _GenericCbc(self, self.check_key(key), self.check_iv(iv), decrypt)


class CbcStream(ABC):
    """Stateful CBC over whole blocks; successive calls continue the chain."""

    @abstractmethod
    def update_into(self, src, dst) -> int:
        """Process ``src`` and write exactly ``len(src)`` bytes to the start of ``dst``."""


class _GenericCbc(CbcStream):
    def __init__(self, cipher: BlockCipher, key: bytes, iv: bytes, decrypt: bool):
        self.cipher, self.key, self.prev, self.decrypt = cipher, key, Block(iv), decrypt

    def update_into(self, src, dst) -> int:
        src = memoryview(src).cast("B")
        out = memoryview(dst).cast("B")
        w = self.cipher.block_width
        if len(src) % w:
            raise ValueError("CBC input must be whole blocks")
        for off in range(0, len(src), w):
            blk = Block(src[off:off + w])
            if self.decrypt:
                res = self.cipher.decrypt_block(blk, self.key) ^ self.prev
                self.prev = blk
            else:
                res = self.cipher.encrypt_block(blk ^ self.prev, self.key)
                self.prev = res
            out[off:off + w] = res
        return len(src)


class Aes128(BlockCipher):
    cipher_id = CipherId.AES_128

    def encrypt_block(self, block, key):
        enc = Cipher(algorithms.AES(self.check_key(key)), modes.ECB()).encryptor()
        return Block(enc.update(bytes(block)) + enc.finalize())

    def decrypt_block(self, block, key):
        dec = Cipher(algorithms.AES(self.check_key(key)), modes.ECB()).decryptor()
        return Block(dec.update(bytes(block)) + dec.finalize())

    def cbc_stream(self, key, iv, decrypt=False):
        return _OpenSslCbc(self.check_key(key), self.check_iv(iv), decrypt)


class _OpenSslCbc(CbcStream):
    def __init__(self, key: bytes, iv: bytes, decrypt: bool):
        c = Cipher(algorithms.AES(key), modes.CBC(iv))
        self._ctx = c.decryptor() if decrypt else c.encryptor()

    def update_into(self, src, dst) -> int:
        n = len(memoryview(src).cast("B"))
        if n % 16:
            raise ValueError("CBC input must be whole blocks")
        out = memoryview(dst).cast("B")
        # cryptography wants len(dst) >= len(src) + 15 even though CBC emits exactly len(src)
        if len(out) >= n + 15:
            self._ctx.update_into(src, out)
        else:
            out[:n] = self._ctx.update(src)
        return n


class NullTestCipher(BlockCipher):
    """Identity permutation. Never use for real data."""

    cipher_id = CipherId.NULL_TEST

    def encrypt_block(self, block, key):
        self.check_key(key)
        return Block(block)

    def decrypt_block(self, block, key):
        self.check_key(key)
        return Block(block)

    def cbc_stream(self, key, iv, decrypt=False):
        self.check_key(key)
        return _RunningXorCbc(self.check_iv(iv), decrypt)


class _RunningXorCbc(CbcStream):
    def __init__(self, iv: bytes, decrypt: bool):
        self.prev = np.frombuffer(iv, dtype=np.uint8).copy()
        self.decrypt = decrypt

    def update_into(self, src, dst) -> int:
        w = self.prev.size
        blocks = np.frombuffer(src, dtype=np.uint8).reshape(-1, w)
        n = blocks.size
        if n == 0:
            return 0
        if self.decrypt:
            res = blocks.copy()
            res[0] ^= self.prev
            res[1:] ^= blocks[:-1]
            self.prev = blocks[-1].copy()
        else:
            res = blocks.copy()
            res[0] ^= self.prev
            np.bitwise_xor.accumulate(res, axis=0, out=res)
            self.prev = res[-1].copy()
        np.frombuffer(dst, dtype=np.uint8, count=n)[:] = res.reshape(-1)
        return n


_CIPHERS = {CipherId.AES_128: Aes128, CipherId.NULL_TEST: NullTestCipher}


def get_cipher(cipher_id: "CipherId | str", allow_insecure: bool = False) -> BlockCipher:
    cid = CipherId.parse(cipher_id)
    if cid is CipherId.NULL_TEST and not allow_insecure:
        raise InsecureCipherError(
            "NULL-TEST is an identity cipher for tests and benchmarks; pass allow_insecure"
        )
    return _CIPHERS[cid]()


def _run(cipher: BlockCipher, blocks: Sequence, key: bytes, iv: bytes,
         counters: OpCounters | None, decrypt: bool) -> list[Block]:
    arr = as_blocks(blocks, cipher.block_width)
    if arr.shape[0] == 0:
        raise ValueError("CBC needs at least one block")
    out = bytearray(arr.size)
    cipher.cbc_stream(key, iv, decrypt).update_into(arr.tobytes(), out)
    if counters is not None:
        counters.add(arr.shape[0], arr.shape[0])
    w = cipher.block_width
    return [Block(out[i:i + w]) for i in range(0, len(out), w)]


def cbc_encrypt(plain_blocks: Sequence, key: bytes, iv: bytes,
                counters: OpCounters | None = None,
                cipher: BlockCipher | None = None) -> list[Block]:
    """C_i = E_K(P_i xor C_{i-1}) with C_0 = iv; the IV is not part of the result.

    Charges one cipher op and one XOR per block.
    """
    return _run(cipher or Aes128(), plain_blocks, key, iv, counters, decrypt=False)


def cbc_decrypt(cipher_blocks: Sequence, key: bytes, iv: bytes,
                counters: OpCounters | None = None,
                cipher: BlockCipher | None = None) -> list[Block]:
    return _run(cipher or Aes128(), cipher_blocks, key, iv, counters, decrypt=True)


def random_iv(entropy_source: Callable[[int], bytes] | None = None,
              block_size: int = 16) -> Block:
    source = entropy_source or secrets.token_bytes
    try:
        raw = source(block_size)
    except Exception as exc:
        raise EntropyError(f"entropy source failed: {exc}") from exc
    if raw is None or len(raw) != block_size:
        raise EntropyError(f"entropy source returned {0 if raw is None else len(raw)} bytes, "
                           f"wanted {block_size}")
    return Block(raw)


def load_key(path: "str | os.PathLike | None" = None, key_length: int = 16) -> bytes:
    """Read a raw binary key file; falls back to ``$PEAONT_KEY_FILE``."""
    if path is None:
        path = os.environ.get(KEY_FILE_ENV)
        if not path:
            raise CipherKeyError(f"no key file given and ${KEY_FILE_ENV} is not set")
    try:
        with open(path, "rb") as fh:
            key = fh.read()
    except OSError as exc:
        raise CipherKeyError(f"cannot read key file {path}: {exc}") from exc
    if len(key) != key_length:
        raise CipherKeyError(f"key file {path} holds {len(key)} bytes, expected {key_length}")
    return key
