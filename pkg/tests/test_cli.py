import json
import os
import subprocess
import sys

import pytest

from peaont.cli import main


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "f").write_bytes(os.urandom(50_000))
    (tmp_path / "k.bin").write_bytes(os.urandom(16))
    (tmp_path / "sites.txt").write_text("A a\nB b\nC c\nD d\n")
    return tmp_path


def split(*extra):
    return main(["split", "--in", "f", "--sites", "sites.txt", "--key", "k.bin", *extra])


def test_split_merge(workspace, capsys):
    assert split("--k", "4", "--e", "3") == 0
    digest = capsys.readouterr().out.strip()
    assert len(digest) == 64
    pea = [p for d in "abcd" if (workspace / d).is_dir() for p in os.listdir(workspace / d) if p.endswith(".pea")]
    assert len(pea) == 4
    assert main(["merge", "--manifest", digest, "--sites", "sites.txt", "--key", "k.bin", "--out", "g"]) == 0
    assert (workspace / "g").read_bytes() == (workspace / "f").read_bytes()


def test_odd_k(workspace, capsys):
    assert split("--k", "5", "--e", "4") == 2
    assert "even" in capsys.readouterr().err


def test_weak_needs_flag(workspace, capsys):
    assert split("--k", "4", "--e", "1") == 2
    assert "--allow-weak" in capsys.readouterr().err
    assert split("--k", "4", "--e", "1", "--allow-weak") == 0


def test_insufficient_sites(workspace):
    (workspace / "two.txt").write_text("A a\nB b\n")
    assert main(["split", "--in", "f", "--sites", "two.txt", "--key", "k.bin", "--k", "4", "--e", "2",
                 "--allow-weak"]) == 5


def test_key_errors(workspace, monkeypatch):
    monkeypatch.delenv("PEAONT_KEY_FILE", raising=False)
    assert main(["split", "--in", "f", "--sites", "sites.txt", "--k", "4", "--e", "3"]) == 3
    monkeypatch.setenv("PEAONT_KEY_FILE", "k.bin")
    assert main(["split", "--in", "f", "--sites", "sites.txt", "--k", "4", "--e", "3"]) == 0


def test_null_cipher_gate(workspace):
    assert split("--k", "4", "--e", "3", "--cipher", "NULL-TEST") == 2
    assert split("--k", "4", "--e", "3", "--cipher", "NULL-TEST", "--allow-insecure") == 0


def test_merge_missing_fragment(workspace, capsys):
    assert split("--k", "4", "--e", "3") == 0
    digest = capsys.readouterr().out.strip()
    (workspace / "c" / f"{digest}.2.pea").unlink()
    assert main(["merge", "--manifest", digest, "--sites", "sites.txt", "--key", "k.bin", "--out", "g"]) == 4
    assert "missing fragment 2" in capsys.readouterr().err
    assert not (workspace / "g").exists()


def test_merge_wrong_key(workspace, capsys):
    assert split("--k", "4", "--e", "3") == 0
    (workspace / "other.bin").write_bytes(bytes(16))
    assert main(["merge", "--sites", "sites.txt", "--key", "other.bin", "--out", "g"]) == 3
    assert "integrity" in capsys.readouterr().err


def test_merge_corrupt(workspace, capsys):
    assert split("--k", "4", "--e", "3") == 0
    p = next((workspace / "a").glob("*.0.pea"))
    raw = bytearray(p.read_bytes())
    raw[-3] ^= 1
    p.write_bytes(bytes(raw))
    assert main(["merge", "--sites", "sites.txt", "--key", "k.bin", "--out", "g"]) == 4
    assert "digest mismatch in fragment 0" in capsys.readouterr().err


def test_plan(workspace, capsys):
    assert main(["plan", "--k", "4", "--e", "3", "--sites", "sites.txt", "--strategy", "PACK_MAX", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["assignments"] == {"0": "A", "1": "A", "2": "B", "3": "B"}
    assert main(["plan", "--k", "8", "--e", "3", "--sites", "sites.txt"]) == 5


def test_inspect(workspace, capsys):
    assert split("--k", "4", "--e", "3") == 0
    digest = capsys.readouterr().out.strip()
    frag = workspace / "b" / f"{digest}.1.pea"
    assert main(["inspect", "--json", str(frag)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert (doc["magic"], doc["k"], doc["e"], doc["fragment_index"], doc["block_size"]) == ("PEA1", 4, 3, 1, 16)
    assert doc["manifest_digest"] == digest
    assert main(["inspect", "--json", str(workspace / "a" / f"{digest}.manifest")]) == 0
    man = json.loads(capsys.readouterr().out)
    assert man["manifest_digest"] == digest and man["k"] == 4
    bad = workspace / "bad.pea"
    bad.write_bytes(b"NOPE" + frag.read_bytes()[4:])
    assert main(["inspect", str(bad)]) == 4


def test_bench_cli(workspace, capsys):
    assert main(["bench", "--schemes", "PE-AONT(4,3)", "ENC_SPLIT", "--sizes", "64KiB", "--reps", "2",
                 "--csv", "out.csv"]) == 0
    lines = (workspace / "out.csv").read_text().splitlines()
    assert lines[0] == "scheme,k,e,size_bytes,rep,seconds,mb_per_s,cipher_ops,xor_ops"
    assert len(lines) == 1 + 4


def test_module_entry_point(workspace):
    out = subprocess.run([sys.executable, "-m", "peaont", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "split" in out.stdout
