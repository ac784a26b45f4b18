"""Comparison schemes: encrypt-then-split, Bastion, and a simplified SFD.

All three CBC-encrypt the whole padded stream [IV, C_1..C_m] and differ only
in what happens to it afterwards:

* ENC_SPLIT cuts it into k contiguous fragments.
* BASTION multiplies the whole l-block ciphertext by the GF(2) matrix with a
  zero diagonal and ones elsewhere (each block becomes the XOR of all others),
  then cuts it contiguously. It is realised as one global sum plus a per-block
  XOR, never materialising the matrix.
* SFD (simplified) deals block i to fragment i mod k, then within each round of
  k blocks sends bit b of the block at round position p to fragment
  (p + b) mod k, keeping the bit position. This is our own concretisation;
  the original bit permutation is not reproduced.
"""

from __future__ import annotations

import numpy as np

from .block_model import (
    Block,
    FragmentSet,
    FragmentState,
    Params,
    SchemeId,
    as_blocks,
    padded_block_count,
)
from .cipher import Aes128, BlockCipher, OpCounters
from .core import CHUNK_WORDS, FragmentationScheme, PeAont, data_range, words
from .errors import ParamError


def _encrypt_stream(data: bytes, params: Params, key: bytes, iv: bytes,
                    cipher: BlockCipher, counters: OpCounters) -> tuple[np.ndarray, int]:
    """CBC-encrypt the padded input; returns ([IV, C_1..C_m] with one slack block, l)."""
    bs = params.block_size
    m = padded_block_count(len(data), params.k, bs)
    src = np.frombuffer(data, dtype=np.uint8)
    out = np.empty((m + 2) * bs, dtype=np.uint8)
    out[:bs] = np.frombuffer(iv, dtype=np.uint8)
    full = len(data) // bs * bs
    stream = cipher.cbc_stream(key, iv)
    if full:
        stream.update_into(src[:full], out[bs:])
    if full < m * bs:
        stream.update_into(data_range(src, full, m * bs), out[bs + full:])
    counters.add(m, m)
    return out, m + 1


def _decrypt_stream(stream: np.ndarray, l: int, bs: int, original_length: int, key: bytes,
                    cipher: BlockCipher, counters: OpCounters) -> bytes:
    """Inverse of ``_encrypt_stream`` on an l-block buffer."""
    iv = stream[:bs].tobytes()
    out = np.empty(l * bs, dtype=np.uint8)
    cipher.cbc_stream(key, iv, decrypt=True).update_into(stream[bs: l * bs], out)
    counters.add(l - 1, l - 1)
    return out[:original_length].tobytes()


class EncSplit(FragmentationScheme):
    scheme_id = SchemeId.ENC_SPLIT

    def encode(self, data, params, key, iv, counters, cipher):
        out, l = _encrypt_stream(data, params, key, iv, cipher, counters)
        bs = params.block_size
        return FragmentSet(params, out[: l * bs].reshape(params.k, -1, bs),
                           FragmentState.TRANSFORMED)

    def decode(self, fs, original_length, key, counters, cipher):
        return _decrypt_stream(fs.blocks.reshape(-1), fs.total_blocks, fs.params.block_size,
                               original_length, key, cipher, counters)


def _bastion_inplace(buf: np.ndarray, nblocks: int, bs: int,
                     counters: OpCounters | None) -> None:
    if nblocks % 2:
        raise ParamError(f"Bastion's transform needs an even block count, got l={nblocks}")
    w = bs // 8
    flat = words(buf[: nblocks * bs])
    step = CHUNK_WORDS - CHUNK_WORDS % w
    acc = np.zeros(step, dtype=np.uint64)
    for a in range(0, flat.size, step):
        chunk = flat[a:a + step]
        np.bitwise_xor(acc[: chunk.size], chunk, out=acc[: chunk.size])
    total = np.bitwise_xor.reduce(acc.reshape(-1, w), axis=0)
    tiled = np.tile(total, step // w)
    for a in range(0, flat.size, step):
        chunk = flat[a:a + step]
        np.bitwise_xor(chunk, tiled[: chunk.size], out=chunk)
    if counters is not None:
        counters.add(xor_ops=2 * nblocks)


def bastion_transform(blocks, counters: OpCounters | None = None,
                      block_size: int = 16) -> np.ndarray:
    """x' = A x over GF(2) with A = J - I: each block becomes the XOR of all the others.

    ``blocks`` is bytes, a sequence of blocks or an ``(l, block_size)`` array;
    returns a new ``(l, block_size)`` array. Self-inverse for even l.
    """
    arr = np.array(as_blocks(blocks, block_size), dtype=np.uint8, copy=True)
    _bastion_inplace(arr.reshape(-1), arr.shape[0], block_size, counters)
    return arr


class Bastion(FragmentationScheme):
    scheme_id = SchemeId.BASTION

    def encode(self, data, params, key, iv, counters, cipher):
        out, l = _encrypt_stream(data, params, key, iv, cipher, counters)
        bs = params.block_size
        _bastion_inplace(out, l, bs, counters)
        return FragmentSet(params, out[: l * bs].reshape(params.k, -1, bs),
                           FragmentState.TRANSFORMED)

    def decode(self, fs, original_length, key, counters, cipher):
        bs = fs.params.block_size
        l = fs.total_blocks
        buf = fs.blocks.reshape(-1).copy()
        _bastion_inplace(buf, l, bs, counters)
        return _decrypt_stream(buf, l, bs, original_length, key, cipher, counters)


def sfd_masks(k: int, block_size: int = 16) -> np.ndarray:
    """masks[s] selects the bits b of a block with b mod k == s, as little-endian words."""
    nbits = block_size * 8
    out = np.zeros((k, block_size // 8), dtype="<u8")
    for s in range(k):
        val = sum(1 << b for b in range(s, nbits, k))
        out[s] = np.frombuffer(val.to_bytes(block_size, "little"), dtype="<u8")
    return out


def _sfd_rounds(stream_words: np.ndarray, k: int, w: int, rows: int, forward: bool) -> np.ndarray:
    """Bit dispersal between a stream of rounds and k fragments of ``rows`` blocks.

    forward:  frag[q][r] = OR_s stream[r][(q - s) % k] & mask_s
    backward: stream[r][p] = OR_s frag[(p + s) % k][r] & mask_s
    """
    masks = sfd_masks(k, w * 8).view(np.uint64)
    chunk_rows = max(1, CHUNK_WORDS // (k * w))
    tiles = [np.tile(masks[s], chunk_rows).reshape(chunk_rows, w) for s in range(k)]
    tmp = np.empty((chunk_rows, w), dtype=np.uint64)
    if forward:
        src = stream_words.reshape(rows, k, w)
        dst = np.empty((k, rows, w), dtype=np.uint64)
    else:
        src = stream_words.reshape(k, rows, w)
        dst = np.empty((rows, k, w), dtype=np.uint64)
    for a in range(0, rows, chunk_rows):
        b = min(a + chunk_rows, rows)
        n = b - a
        t = tmp[:n]
        if forward:
            lanes = np.ascontiguousarray(src[a:b].transpose(1, 0, 2))
            for q in range(k):
                acc = dst[q, a:b]
                np.bitwise_and(lanes[q], tiles[0][:n], out=acc)
                for s in range(1, k):
                    np.bitwise_and(lanes[(q - s) % k], tiles[s][:n], out=t)
                    np.bitwise_or(acc, t, out=acc)
        else:
            lanes = src[:, a:b]
            block = np.empty((k, n, w), dtype=np.uint64)
            for p in range(k):
                acc = block[p]
                np.bitwise_and(lanes[p], tiles[0][:n], out=acc)
                for s in range(1, k):
                    np.bitwise_and(lanes[(p + s) % k], tiles[s][:n], out=t)
                    np.bitwise_or(acc, t, out=acc)
            dst[a:b] = block.transpose(1, 0, 2)
    return dst


def sfd_disperse(stream, k: int, block_size: int = 16) -> np.ndarray:
    """Stream of l blocks -> ``(k, l/k, block_size)`` fragment array."""
    buf = np.ascontiguousarray(np.asarray(stream, dtype=np.uint8).reshape(-1))
    l = buf.size // block_size
    if l % k:
        raise ParamError(f"l={l} is not a multiple of k={k}")
    out = _sfd_rounds(words(buf), k, block_size // 8, l // k, forward=True)
    return out.view(np.uint8).reshape(k, l // k, block_size)


def sfd_gather(fragments, k: int, block_size: int = 16) -> np.ndarray:
    """Inverse of ``sfd_disperse``: ``(k, l/k, block_size)`` -> ``(l, block_size)``."""
    buf = np.ascontiguousarray(np.asarray(fragments, dtype=np.uint8).reshape(-1))
    l = buf.size // block_size
    out = _sfd_rounds(words(buf), k, block_size // 8, l // k, forward=False)
    return out.view(np.uint8).reshape(l, block_size)


class Sfd(FragmentationScheme):
    """Simplified secure fragmentation and dispersal."""

    scheme_id = SchemeId.SFD

    def encode(self, data, params, key, iv, counters, cipher):
        out, l = _encrypt_stream(data, params, key, iv, cipher, counters)
        bs = params.block_size
        frags = sfd_disperse(out[: l * bs], params.k, bs)
        return FragmentSet(params, frags, FragmentState.TRANSFORMED)

    def decode(self, fs, original_length, key, counters, cipher):
        bs = fs.params.block_size
        stream = sfd_gather(fs.blocks, fs.k, bs).reshape(-1)
        return _decrypt_stream(stream, fs.total_blocks, bs, original_length, key, cipher, counters)


SCHEMES: dict[SchemeId, type[FragmentationScheme]] = {
    SchemeId.PE_AONT: PeAont,
    SchemeId.ENC_SPLIT: EncSplit,
    SchemeId.BASTION: Bastion,
    SchemeId.SFD: Sfd,
}


def get_scheme(scheme_id: "SchemeId | str", allow_insecure: bool = False) -> FragmentationScheme:
    return SCHEMES[SchemeId.parse(scheme_id)](allow_insecure=allow_insecure)


def enc_split_protect(data, params, key, counters=None, **kw):
    return EncSplit(**kw).protect(data, params, key, counters)


def bastion_protect(data, params, key, counters=None, **kw):
    return Bastion(**kw).protect(data, params, key, counters)


def sfd_protect(data, params, key, counters=None, **kw):
    return Sfd(**kw).protect(data, params, key, counters)


def expected_ops(scheme_id: "SchemeId | str", l: int, k: int, e: int) -> tuple[int, int]:
    """(cipher ops, XOR ops) for one forward run over l total blocks."""
    scheme = SchemeId.parse(scheme_id)
    if scheme is SchemeId.PE_AONT:
        if l % k:
            raise ValueError("l must be a multiple of k")
        enc = e * l // k
        return enc, enc + 2 * l
    if scheme is SchemeId.BASTION:
        return l - 1, 3 * l - 1
    return l - 1, l - 1


def exposed_fragment_plaintext(fragment: bytes, key: bytes, cipher: BlockCipher | None = None,
                               block_size: int = 16) -> list[Block]:
    """What a key holder reads from a single CBC fragment on its own.

    Block i of the fragment decrypts to D(C_i) xor C_{i-1} for i >= 1; the
    first block needs the previous fragment's last block and is skipped.
    """
    cipher = cipher or Aes128()
    blocks = [Block(fragment[i:i + block_size]) for i in range(0, len(fragment), block_size)]
    return [cipher.decrypt_block(blocks[i], key) ^ blocks[i - 1] for i in range(1, len(blocks))]
