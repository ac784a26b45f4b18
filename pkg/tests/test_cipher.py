import json
import os
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from peaont.block_model import Block, CipherId
from peaont.cipher import (
    KEY_FILE_ENV,
    Aes128,
    NullTestCipher,
    OpCounters,
    _GenericCbc,
    cbc_decrypt,
    cbc_encrypt,
    get_cipher,
    load_key,
    random_iv,
)
from peaont.errors import CipherKeyError, EntropyError, InsecureCipherError

KAT = json.loads((Path(__file__).parent / "data" / "aes128_cbc_kat.json").read_text())["vectors"]
NULL = NullTestCipher()
ZERO = bytes(16)


@pytest.mark.parametrize("vec", KAT, ids=[v["name"] for v in KAT])
def test_aes_cbc_known_answer(vec):
    key, iv = bytes.fromhex(vec["key"]), bytes.fromhex(vec["iv"])
    plain = [bytes.fromhex(p) for p in vec["plaintext"]]
    want = [bytes.fromhex(c) for c in vec["ciphertext"]]
    counters = OpCounters()
    assert cbc_encrypt(plain, key, iv, counters) == want
    assert counters.snapshot() == (len(plain), len(plain))
    assert cbc_decrypt(want, key, iv) == plain


def test_null_cbc_is_running_xor():
    a, b = Block(b"\x11" * 16), Block(b"\x2c" * 16)
    assert cbc_encrypt([a, b], ZERO, ZERO, cipher=NULL) == [a, a ^ b]
    assert cbc_decrypt([a, a ^ b], ZERO, ZERO, cipher=NULL) == [a, b]


def test_null_single_block_decrypt():
    v, c = Block(b"\x5a" * 16), Block(bytes(range(16)))
    assert cbc_decrypt([c], ZERO, v, cipher=NULL) == [c ^ v]


def test_wrong_iv_only_breaks_first_block():
    key = bytes(range(16))
    plain = [bytes([i]) * 16 for i in range(5)]
    ct = cbc_encrypt(plain, key, ZERO)
    back = cbc_decrypt(ct, key, b"\x01" * 16)
    assert back[0] != plain[0] and back[1:] == plain[1:]


@settings(max_examples=40)
@given(st.binary(min_size=16, max_size=16), st.binary(min_size=16, max_size=16),
       st.lists(st.binary(min_size=16, max_size=16), min_size=1, max_size=40))
def test_aes_cbc_matches_oracle(key, iv, plain):
    assert cbc_encrypt(plain, key, iv) == oracle.cbc(plain, key, iv)
    assert cbc_decrypt(oracle.cbc(plain, key, iv), key, iv) == plain


@settings(max_examples=40)
@given(st.binary(min_size=16, max_size=16),
       st.lists(st.binary(min_size=16, max_size=16), min_size=1, max_size=20),
       st.integers(1, 6))
def test_streaming_split_points(iv, plain, cut):
    """Feeding a stream in pieces equals one call, and the generic path agrees."""
    key = bytes(16)
    data = b"".join(plain)
    for cipher in (Aes128(), NULL):
        whole = bytearray(len(data))
        cipher.cbc_stream(key, iv).update_into(data, whole)
        parts = bytearray(len(data))
        s = cipher.cbc_stream(key, iv)
        off = min(cut, len(plain)) * 16
        s.update_into(data[:off], memoryview(parts)[:off])
        s.update_into(data[off:], memoryview(parts)[off:])
        generic = bytearray(len(data))
        _GenericCbc(cipher, key, iv, False).update_into(data, generic)
        assert whole == parts == generic


def test_counters_accumulate():
    c = OpCounters()
    cbc_encrypt([ZERO] * 3, ZERO, ZERO, c)
    cbc_decrypt([ZERO] * 2, ZERO, ZERO, c)
    assert c.snapshot() == (5, 5)
    c.reset()
    assert c.snapshot() == (0, 0)


def test_bad_key_and_iv():
    with pytest.raises(CipherKeyError):
        cbc_encrypt([ZERO], bytes(15), ZERO)
    with pytest.raises(ValueError):
        cbc_encrypt([ZERO], bytes(16), bytes(8))


def test_insecure_cipher_gated():
    with pytest.raises(InsecureCipherError):
        get_cipher(CipherId.NULL_TEST)
    assert isinstance(get_cipher("NULL-TEST", allow_insecure=True), NullTestCipher)
    assert isinstance(get_cipher("AES-128"), Aes128)


def test_random_iv_distinct():
    ivs = {random_iv() for _ in range(1000)}
    assert len(ivs) == 1000


def test_random_iv_injected():
    assert random_iv(lambda n: b"\x01" * n) == Block(b"\x01" * 16)


@pytest.mark.parametrize("source", [lambda n: b"", lambda n: None, lambda n: 1 / 0])
def test_random_iv_entropy_failure(source):
    with pytest.raises(EntropyError):
        random_iv(source)


def test_load_key(tmp_path, monkeypatch):
    p = tmp_path / "k.bin"
    p.write_bytes(bytes(range(16)))
    assert load_key(p) == bytes(range(16))
    monkeypatch.setenv(KEY_FILE_ENV, str(p))
    assert load_key() == bytes(range(16))
    monkeypatch.delenv(KEY_FILE_ENV)
    with pytest.raises(CipherKeyError):
        load_key()
    p.write_bytes(bytes(10))
    with pytest.raises(CipherKeyError):
        load_key(p)
    with pytest.raises(CipherKeyError):
        load_key(os.path.join(tmp_path, "nope"))
