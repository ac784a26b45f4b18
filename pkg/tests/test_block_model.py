import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracle import padded_blocks
from peaont.block_model import (
    HEADER_SIZE,
    Block,
    CipherId,
    FragmentSet,
    FragmentState,
    Manifest,
    Params,
    SchemeId,
    SecurityLevel,
    build_manifest,
    deserialize_fragment,
    pad_and_blockify,
    read_fragment_header,
    serialize_fragment,
    validate_params,
)
from peaont.errors import FragmentFormatError, MissingFragmentError, ParamError


@pytest.mark.parametrize("k,e,level", [
    (4, 3, SecurityLevel.FULL),
    (6, 3, SecurityLevel.SINGLE_SITE),
    (3, 2, SecurityLevel.PERFORMANCE_ONLY),
    (8, 7, SecurityLevel.FULL),
    (8, 4, SecurityLevel.SINGLE_SITE),
    (4, 2, SecurityLevel.PERFORMANCE_ONLY),
    (4, 1, SecurityLevel.PERFORMANCE_ONLY),
    (5, 4, SecurityLevel.PERFORMANCE_ONLY),
    (2, 1, SecurityLevel.PERFORMANCE_ONLY),
])
def test_security_level(k, e, level):
    assert validate_params(k, e, 16, "AES-128").security_level is level


@pytest.mark.parametrize("k,e,bs", [(4, 4, 16), (4, 0, 16), (1, 1, 16), (4, 3, 0), (4, 3, 24), (4, 3, 32)])
def test_validate_params_rejects(k, e, bs):
    with pytest.raises(ParamError):
        validate_params(k, e, bs)


def test_unknown_cipher():
    with pytest.raises(ParamError):
        validate_params(4, 3, 16, "DES")


@pytest.mark.parametrize("length,k,m,nf", [(100, 4, 7, 2), (16, 4, 3, 1), (112, 4, 7, 2)])
def test_padding_examples(length, k, m, nf):
    params = Params(k, 3)
    blocks, got = pad_and_blockify(bytes(length), params)
    assert got == m
    assert blocks.shape == (m, 16)
    assert (got + 1) // k == nf


def test_padding_aligned_has_no_pad():
    data = bytes(range(112))
    blocks, m = pad_and_blockify(data, Params(4, 3))
    assert blocks.tobytes() == data


@given(st.integers(1, 5000), st.sampled_from([2, 4, 6, 8, 10, 16]))
def test_padding_matches_oracle(length, k):
    data = bytes(length)
    blocks, m = pad_and_blockify(data, Params(k, 1))
    assert m == padded_blocks(length, k)
    assert (m + 1) % k == 0 and m * 16 >= length
    assert (m - k) * 16 < length  # no whole wasted round


def test_pad_rejects_empty():
    with pytest.raises(ParamError):
        pad_and_blockify(b"", Params(4, 3))


def test_block_xor():
    a, b = Block(b"\x01" * 16), Block(b"\x03" * 16)
    assert a ^ b == Block(b"\x02" * 16)
    with pytest.raises(ValueError):
        a ^ Block(b"\x00" * 8)


def _fs(k=4, nf=2, state=FragmentState.TRANSFORMED, seed=0):
    rng = np.random.default_rng(seed)
    return FragmentSet(Params(k, k - 1), rng.integers(0, 256, (k, nf, 16), dtype=np.uint8), state)


def test_fragment_set_accessors():
    fs = _fs()
    assert fs.k == 4 and fs.blocks_per_fragment == 2 and fs.total_blocks == 8
    assert fs.fragment(1) == fs.blocks[1].tobytes()
    assert fs.row(1).blocks[3] == fs.block(3, 1)
    assert fs.stream() == b"".join(fs.fragments)
    with pytest.raises((ValueError, TypeError)):
        fs.blocks[0, 0, 0] = 1


def test_fragment_set_missing():
    fs = _fs()
    frags = fs.fragments
    frags[2] = None
    with pytest.raises(MissingFragmentError, match="2"):
        FragmentSet.from_fragments(fs.params, frags)


def test_fragment_set_unequal_sizes():
    with pytest.raises(FragmentFormatError):
        FragmentSet.from_fragments(Params(4, 3), [bytes(32), bytes(32), bytes(16), bytes(32)])


def _manifest(fs=None):
    fs = fs or _fs()
    return build_manifest(SchemeId.PE_AONT, fs, 100, 7)


def test_manifest_round_trip():
    man = _manifest().with_placement(["A", "A", "B", "B"])
    back = Manifest.from_json(man.to_json())
    assert back == man
    assert back.digest() == man.digest()


def test_manifest_digest_ignores_placement():
    man = _manifest()
    assert man.with_placement(["A", "B", "C", "D"]).digest() == man.digest()


def test_manifest_carries_no_key_material():
    d = json.loads(_manifest().to_json())
    assert set(d) <= {"version", "scheme", "cipher", "k", "e", "block_size", "original_length",
                      "padded_blocks", "fragment_digests", "placement", "plaintext_mac"}


@pytest.mark.parametrize("text", ["{", "[]", '{"version": 1}'])
def test_manifest_parse_errors(text):
    with pytest.raises(FragmentFormatError):
        Manifest.from_json(text)


def test_manifest_length_invariant():
    d = _manifest().to_dict()
    d["original_length"] = 10_000
    with pytest.raises((FragmentFormatError, ParamError)):
        Manifest.from_dict(d)


def test_serialize_round_trip():
    fs = _fs()
    man = _manifest(fs)
    blob = serialize_fragment(2, fs.blocks[2], man.digest(), params=fs.params, scheme=SchemeId.PE_AONT)
    assert len(blob) == HEADER_SIZE + 32
    frag = deserialize_fragment(blob)
    h = frag.header
    assert (h.fragment_index, h.k, h.e, h.block_size, h.blocks_per_fragment) == (2, 4, 3, 16, 2)
    assert h.scheme is SchemeId.PE_AONT and h.manifest_digest == man.digest()
    assert frag.payload == fs.fragment(2)
    assert read_fragment_header(blob[:HEADER_SIZE]) == h


def test_serialize_guards():
    fs = _fs()
    blob = serialize_fragment(0, fs.blocks[0], bytes(32), params=fs.params, scheme=SchemeId.PE_AONT)
    with pytest.raises(FragmentFormatError, match="magic"):
        deserialize_fragment(b"XXXX" + blob[4:])
    with pytest.raises(FragmentFormatError):
        deserialize_fragment(blob[:-1])
    with pytest.raises(FragmentFormatError):
        deserialize_fragment(blob + b"\x00")
    with pytest.raises(FragmentFormatError):
        deserialize_fragment(blob[:10])


@settings(max_examples=50)
@given(st.integers(0, 3), st.integers(1, 20), st.sampled_from(list(SchemeId)))
def test_serialize_property(idx, nf, scheme):
    params = Params(4, 3)
    payload = np.random.default_rng(nf).integers(0, 256, (nf, 16), dtype=np.uint8)
    frag = deserialize_fragment(serialize_fragment(idx, payload, b"\x07" * 32, params=params, scheme=scheme))
    assert frag.payload == payload.tobytes() and frag.header.scheme is scheme


def test_cipher_id_parse():
    assert CipherId.parse("aes-128") is CipherId.AES_128
    assert CipherId.parse("NULL-TEST") is CipherId.NULL_TEST
