"""PE-AONT: partial encryption of e of k fragments plus a per-row XOR transform.

Stream layout (l = m + 1 blocks, #f = l / k blocks per fragment)::

    block 0            IV
    blocks 1..e*#f-1   CBC ciphertext of P_1..P_{e*#f-1}, one chain
    blocks e*#f..l-1   plaintext P_{e*#f}..P_m, untouched by the cipher

Fragment j holds stream blocks j*#f .. (j+1)*#f-1. The transform then replaces
every block of row i (offset i in each fragment) with the XOR of the other
k-1 blocks of that row, which is its own inverse when k is even.

Counting convention: one XOR op is one block-wide XOR. Encrypting the region
charges e*#f cipher ops and e*#f XORs (e*#f - 1 real blocks plus the IV
slot); the transform charges 2k per row (k folds into a zero accumulator and
k applications), 2l in total.
"""

from __future__ import annotations

import hashlib
import hmac
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .block_model import (
    CipherId,
    FragmentSet,
    FragmentState,
    Manifest,
    Params,
    SchemeId,
    as_blocks,
    build_manifest,
    fragment_digest,
    padded_block_count,
)
from .cipher import BlockCipher, NullTestCipher, OpCounters, get_cipher, random_iv
from .errors import (
    DigestMismatchError,
    IntegrityError,
    ParamError,
    SchemeMismatchError,
)

# words per fragment processed per pass; keeps k slices plus the row sum in L2
CHUNK_WORDS = 16384

Source = Callable[[int, int], np.ndarray]


def words(buf: np.ndarray) -> np.ndarray:
    """Flat uint64 view of a uint8 buffer (block widths are multiples of 8)."""
    return buf.reshape(-1).view(np.uint64)


def data_source(data_u8: np.ndarray, start: int) -> Source:
    """Word slices of ``data_u8`` starting at byte ``start``, zero beyond its end."""
    size = data_u8.size

    def get(a: int, b: int) -> np.ndarray:
        lo, hi = start + 8 * a, start + 8 * b
        if hi <= size:
            return data_u8[lo:hi].view(np.uint64)
        tmp = np.zeros(hi - lo, dtype=np.uint8)
        if lo < size:
            tmp[: size - lo] = data_u8[lo:]
        return tmp.view(np.uint64)

    return get


def array_source(arr: np.ndarray) -> Source:
    return lambda a, b: arr[a:b]


def data_range(data_u8: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Bytes ``[start, stop)`` of the zero-padded input, as a view when possible."""
    if stop <= data_u8.size:
        return data_u8[start:stop]
    tmp = np.zeros(stop - start, dtype=np.uint8)
    if start < data_u8.size:
        tmp[: data_u8.size - start] = data_u8[start:]
    return tmp


def xor_rows(sources: list[Source], dests: list[np.ndarray], nwords: int,
             start: int = 0) -> None:
    """dest_j = source_j ^ (source_0 ^ ... ^ source_{k-1}) over words [start, nwords).

    Runs in cache-sized chunks; a destination may alias its own source.
    """
    acc_buf = np.empty(min(CHUNK_WORDS, max(nwords - start, 1)), dtype=np.uint64)
    for a in range(start, nwords, CHUNK_WORDS):
        b = min(a + CHUNK_WORDS, nwords)
        views = [src(a, b) for src in sources]
        acc = acc_buf[: b - a]
        np.bitwise_xor(views[0], views[1], out=acc)
        for v in views[2:]:
            np.bitwise_xor(acc, v, out=acc)
        for v, d in zip(views, dests):
            np.bitwise_xor(v, acc, out=d[a:b])


def _require_even(k: int) -> None:
    if k % 2:
        raise ParamError(
            f"the row transform needs an even number of fragments (k={k}); "
            "with odd k it is not invertible"
        )


def _region_blocks(params: Params, nf: int) -> int:
    """Stream blocks in the encrypted fragments, IV included; must be >= 2."""
    n = params.e * nf
    if n < 2:
        raise ParamError(
            f"e x #f must exceed 1 (e={params.e}, #f={nf}): no room for the IV and a ciphertext block"
        )
    return n


def resolve_cipher(params: Params, cipher: BlockCipher | None,
                   allow_insecure: bool = False) -> BlockCipher:
    if cipher is None:
        return get_cipher(params.cipher_id, allow_insecure=allow_insecure)
    if cipher.cipher_id is not params.cipher_id:
        raise ParamError(f"cipher {cipher.cipher_id.value} does not match params {params.cipher_id.value}")
    return cipher


def fragment_and_encrypt(plain_blocks, params: Params, key: bytes, iv: bytes,
                         counters: OpCounters | None = None,
                         cipher: BlockCipher | None = None) -> FragmentSet:
    """Step 1: lay out [IV, P_1..P_m] over k fragments and CBC-encrypt the first e."""
    cipher = resolve_cipher(params, cipher)
    bs = params.block_size
    arr = as_blocks(plain_blocks, bs)
    m = arr.shape[0]
    nf = params.blocks_per_fragment(m)
    region = _region_blocks(params, nf)
    l = m + 1
    iv = cipher.check_iv(iv)

    out = np.empty((l + 1) * bs, dtype=np.uint8)
    out[:bs] = np.frombuffer(iv, dtype=np.uint8)
    flat = arr.reshape(-1)
    cipher.cbc_stream(key, iv).update_into(flat[: (region - 1) * bs], out[bs:])
    out[region * bs: l * bs] = flat[(region - 1) * bs:]
    if counters is not None:
        counters.add(region, region)
    return FragmentSet(params, out[: l * bs].reshape(params.k, nf, bs),
                       FragmentState.PARTIALLY_ENCRYPTED)


def aont_transform(fs: FragmentSet, counters: OpCounters | None = None) -> FragmentSet:
    """Step 2, and its own inverse: each block becomes the XOR of the rest of its row."""
    _require_even(fs.k)
    if fs.state is FragmentState.PARTIALLY_ENCRYPTED:
        new_state = FragmentState.TRANSFORMED
    elif fs.state is FragmentState.TRANSFORMED:
        new_state = FragmentState.PARTIALLY_ENCRYPTED
    else:
        raise ValueError(f"cannot transform a fragment set in state {fs.state.value}")
    k, nf, bs = fs.blocks.shape
    src = fs.blocks.reshape(k, -1)
    out = np.empty((k, nf * bs), dtype=np.uint8)
    nwords = nf * bs // 8
    xor_rows([array_source(words(src[j])) for j in range(k)],
             [words(out[j]) for j in range(k)], nwords)
    if counters is not None:
        counters.add(xor_ops=2 * k * nf)
    return FragmentSet(fs.params, out.reshape(k, nf, bs), new_state)


def plaintext_mac(key: bytes, data: bytes) -> str:
    return hmac.new(bytes(key), data, hashlib.sha256).hexdigest()


def verify_fragments(fs: FragmentSet, manifest: Manifest, scheme: SchemeId) -> None:
    if manifest.scheme is not scheme:
        raise SchemeMismatchError(
            f"manifest belongs to scheme {manifest.scheme.value}, not {scheme.value}"
        )
    if fs.params != manifest.params:
        raise ParamError("fragment set parameters differ from the manifest")
    if fs.total_blocks != manifest.padded_blocks + 1:
        raise ParamError(
            f"fragment set holds {fs.total_blocks} blocks, manifest expects {manifest.padded_blocks + 1}"
        )
    for j in range(fs.k):
        if fragment_digest(fs.blocks[j]) != manifest.fragment_digests[j]:
            raise DigestMismatchError(j)


class FragmentationScheme(ABC):
    """Common surface of PE-AONT and the baselines.

    ``encode``/``decode`` are the bare data paths (what the benchmark times);
    ``protect``/``recover`` add the manifest, digests and the keyed plaintext check.
    """

    scheme_id: SchemeId

    def __init__(self, allow_insecure: bool = False):
        self.allow_insecure = allow_insecure

    @property
    def name(self) -> str:
        return self.scheme_id.value

    def cipher_for(self, params: Params) -> BlockCipher:
        return get_cipher(params.cipher_id, allow_insecure=self.allow_insecure)

    def check_params(self, params: Params) -> None:
        """Scheme-specific parameter constraints; raises ParamError."""

    @abstractmethod
    def encode(self, data: bytes, params: Params, key: bytes, iv: bytes,
               counters: OpCounters, cipher: BlockCipher) -> FragmentSet: ...

    @abstractmethod
    def decode(self, fs: FragmentSet, original_length: int, key: bytes,
               counters: OpCounters, cipher: BlockCipher) -> bytes: ...

    def fragment(self, data: bytes, params: Params, key: bytes,
                 counters: OpCounters | None = None, iv: bytes | None = None) -> FragmentSet:
        if not data:
            raise ParamError("data must be non-empty")
        self.check_params(params)
        cipher = self.cipher_for(params)
        key = cipher.check_key(key)
        iv = cipher.check_iv(iv) if iv is not None else random_iv(block_size=params.block_size)
        return self.encode(data, params, key, iv, counters if counters is not None else OpCounters(),
                           cipher)

    def protect(self, data: bytes, params: Params, key: bytes,
                counters: OpCounters | None = None, iv: bytes | None = None,
                mac: bool = True) -> tuple[FragmentSet, Manifest]:
        fs = self.fragment(data, params, key, counters, iv)
        m = padded_block_count(len(data), params.k, params.block_size)
        tag = plaintext_mac(key, data) if mac else None
        return fs, build_manifest(self.scheme_id, fs, len(data), m, tag)

    def recover(self, fs: FragmentSet, manifest: Manifest, key: bytes,
                counters: OpCounters | None = None) -> bytes:
        verify_fragments(fs, manifest, self.scheme_id)
        self.check_params(fs.params)
        cipher = self.cipher_for(fs.params)
        key = cipher.check_key(key)
        data = self.decode(fs, manifest.original_length, key,
                           counters if counters is not None else OpCounters(), cipher)
        if manifest.plaintext_mac is not None and not hmac.compare_digest(
                plaintext_mac(key, data), manifest.plaintext_mac):
            raise IntegrityError("recovered data fails the manifest check (wrong key or tampered fragments)")
        return data


class PeAont(FragmentationScheme):
    scheme_id = SchemeId.PE_AONT

    def check_params(self, params):
        _require_even(params.k)

    def encode(self, data, params, key, iv, counters, cipher):
        bs, k = params.block_size, params.k
        m = padded_block_count(len(data), k, bs)
        l = m + 1
        nf = l // k
        region = _region_blocks(params, nf)
        src = np.frombuffer(data, dtype=np.uint8)

        out = np.empty((l + 1) * bs, dtype=np.uint8)
        out[:bs] = np.frombuffer(iv, dtype=np.uint8)
        frag = out[: l * bs].reshape(k, nf * bs)
        # plaintext fragments are read straight from the input inside the row pass
        sources = [array_source(words(frag[j])) for j in range(params.e)]
        sources += [data_source(src, (j * nf - 1) * bs) for j in range(params.e, k)]
        dests = [words(frag[j]) for j in range(k)]
        nwords = nf * bs // 8

        # Encrypt fragments 0..e-2 in one go, then interleave the last encrypted
        # fragment's CBC with the row pass so its ciphertext is still cached.
        stream = cipher.cbc_stream(key, iv)
        last = (params.e - 1) * nf * bs
        if last > bs:
            stream.update_into(data_range(src, 0, last - bs), out[bs:])
        for a in range(0, nwords, CHUNK_WORDS):
            b = min(a + CHUNK_WORDS, nwords)
            lo, hi = max(last + 8 * a, bs), last + 8 * b
            if hi > lo:
                stream.update_into(data_range(src, lo - bs, hi - bs), out[lo:])
            xor_rows(sources, dests, b, start=a)
        counters.add(region, region)
        counters.add(xor_ops=2 * l)
        return FragmentSet(params, frag.reshape(k, nf, bs), FragmentState.TRANSFORMED)

    def decode(self, fs, original_length, key, counters, cipher):
        params = fs.params
        k, nf, bs = fs.blocks.shape
        l = k * nf
        region = _region_blocks(params, nf)
        out = np.empty((l + 1) * bs, dtype=np.uint8)
        frag = out[: l * bs].reshape(k, nf * bs)
        src = fs.blocks.reshape(k, -1)
        xor_rows([array_source(words(src[j])) for j in range(k)],
                 [words(frag[j]) for j in range(k)], nf * bs // 8)
        counters.add(xor_ops=2 * l)
        iv = out[:bs].tobytes()
        cipher.cbc_stream(key, iv, decrypt=True).update_into(out[bs: region * bs], out[bs:])
        counters.add(region, region)
        return out[bs: bs + original_length].tobytes()


def defragment(fs: FragmentSet, manifest: Manifest, key: bytes,
               counters: OpCounters | None = None,
               cipher: BlockCipher | None = None,
               allow_insecure: bool = False) -> bytes:
    """Inverse pipeline: verify digests, undo the row transform, decrypt, trim.

    Passing an explicit ``cipher`` counts as opting in to it.
    """
    if fs.state is not FragmentState.TRANSFORMED:
        raise ValueError(f"expected a TRANSFORMED fragment set, got {fs.state.value}")
    if cipher is not None:
        resolve_cipher(fs.params, cipher)
    scheme = PeAont(allow_insecure=allow_insecure or cipher is not None)
    return scheme.recover(fs, manifest, key, counters)


@dataclass(frozen=True)
class ExposureProfile:
    """Which Step-1 blocks feed each transformed block.

    ``sources[(j, i)]`` is the set of (fragment, offset) pairs of the
    partially-encrypted set whose XOR equals transformed block (j, i).
    """

    params: Params
    blocks_per_fragment: int
    sources: dict

    def encrypted_fragments(self, j: int, i: int) -> set[int]:
        return {fj for fj, _ in self.sources[(j, i)] if fj < self.params.e}

    def ciphertext_blocks(self, j: int, i: int) -> set[tuple[int, int]]:
        return {(fj, fi) for fj, fi in self.sources[(j, i)] if fj < self.params.e}

    def plaintext_fragment_blocks(self):
        return [(j, i) for j in range(self.params.e, self.params.k)
                for i in range(self.blocks_per_fragment)]

    def min_encrypted_fragments(self) -> int:
        return min(len(self.encrypted_fragments(j, i)) for j, i in self.plaintext_fragment_blocks())

    def min_ciphertext_blocks(self) -> int:
        return min(len(self.ciphertext_blocks(j, i)) for j, i in self.plaintext_fragment_blocks())


def _gf2_decompose(basis: list[int], targets: list[int]) -> list[int]:
    """Express each target as an XOR of basis vectors; returns bitmasks over basis indices."""
    pivots: dict[int, tuple[int, int]] = {}
    for idx, vec in enumerate(basis):
        tag = 1 << idx
        while vec:
            top = vec.bit_length() - 1
            if top not in pivots:
                pivots[top] = (vec, tag)
                break
            pv, pt = pivots[top]
            vec ^= pv
            tag ^= pt
        else:
            raise ValueError("basis is linearly dependent")
    out = []
    for vec in targets:
        tag = 0
        while vec:
            top = vec.bit_length() - 1
            if top not in pivots:
                raise ValueError("target outside the span of the basis")
            pv, pt = pivots[top]
            vec ^= pv
            tag ^= pt
        out.append(tag)
    return out


def exposure_profile(k: int, e: int, blocks_per_fragment: int = 2) -> ExposureProfile:
    """Bit-provenance of the NULL-TEST pipeline.

    Input block t (IV for t = 0) carries the single bit t, so every block of
    the run is a bitset over inputs. Transformed blocks are then rewritten in
    terms of the Step-1 blocks, treating each ciphertext block as an atom.
    """
    params = Params(k, e, 16, CipherId.NULL_TEST)
    nf = blocks_per_fragment
    l = k * nf
    width_bits = params.block_size * 8
    if l > width_bits:
        raise ParamError(f"provenance tracing supports at most {width_bits} blocks, got l={l}")

    def unit(t: int) -> bytes:
        return (1 << t).to_bytes(params.block_size, "little")

    cipher = NullTestCipher()
    plain = [unit(t) for t in range(1, l)]
    step1 = fragment_and_encrypt(plain, params, bytes(16), unit(0), cipher=cipher)
    step2 = aont_transform(step1)

    as_int = lambda fs, j, i: int.from_bytes(fs.blocks[j, i].tobytes(), "little")
    coords = [(j, i) for j in range(k) for i in range(nf)]
    basis = [as_int(step1, j, i) for j, i in coords]
    masks = _gf2_decompose(basis, [as_int(step2, j, i) for j, i in coords])
    sources = {
        c: frozenset(coords[b] for b in range(len(coords)) if mask >> b & 1)
        for c, mask in zip(coords, masks)
    }
    return ExposureProfile(params, nf, sources)
