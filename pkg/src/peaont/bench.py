"""Throughput and operation-count benchmark over PE-AONT and the baselines.

Each measurement encodes freshly generated random data; only the data path
(``FragmentationScheme.encode``) is timed, never data generation, digests or
manifest building. Schemes are interleaved within each repetition so slow
drift of the machine affects all of them alike.
"""

from __future__ import annotations

import csv
import gc
import io
import platform
import re
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import expected_ops, get_scheme
from .block_model import CipherId, Params, SchemeId, padded_block_count
from .cipher import OpCounters
from .errors import InsecureCipherError, ParamError

MB = 1_000_000

CSV_COLUMNS = ["scheme", "k", "e", "size_bytes", "rep", "seconds", "mb_per_s", "cipher_ops", "xor_ops"]


@dataclass(frozen=True)
class SchemeSpec:
    scheme: SchemeId
    k: int = 4
    e: int = 3

    @property
    def label(self) -> str:
        if self.scheme is SchemeId.PE_AONT:
            return f"PE-AONT({self.k},{self.e})"
        return self.scheme.value

    def params(self, cipher_id: CipherId) -> Params:
        # baselines encrypt everything; e only has to be valid
        e = self.e if self.scheme is SchemeId.PE_AONT else min(self.e, self.k - 1)
        return Params(self.k, e, 16, cipher_id)


# two configurations with e = k-1, two with e <= k-2
PE_AONT_CONFIGS = [SchemeSpec(SchemeId.PE_AONT, 4, 3), SchemeSpec(SchemeId.PE_AONT, 8, 7),
                 SchemeSpec(SchemeId.PE_AONT, 8, 3), SchemeSpec(SchemeId.PE_AONT, 16, 4)]
BASELINES = [SchemeSpec(SchemeId.ENC_SPLIT), SchemeSpec(SchemeId.BASTION), SchemeSpec(SchemeId.SFD)]


def parse_scheme_spec(text: str, default_k: int = 4, default_e: int = 3) -> SchemeSpec:
    """Accepts ``PE-AONT(4,3)``, ``pe-aont:4:3``, ``enc_split``, ``sfd:6`` and similar."""
    m = re.fullmatch(r"\s*([A-Za-z_-]+)\s*(?:[(:]\s*(\d+)\s*(?:[,:]\s*(\d+))?\s*\)?)?\s*", text)
    if not m:
        raise ParamError(f"cannot parse scheme spec {text!r}")
    scheme = SchemeId.parse(m.group(1))
    k = int(m.group(2)) if m.group(2) else default_k
    e = int(m.group(3)) if m.group(3) else (default_e if scheme is SchemeId.PE_AONT else k - 1)
    return SchemeSpec(scheme, k, e)


def parse_size(text: str) -> int:
    m = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*([KMG]i?B?|B)?\s*", text, re.IGNORECASE)
    if not m:
        raise ParamError(f"cannot parse size {text!r}")
    value = float(m.group(1))
    unit = (m.group(2) or "B").upper().rstrip("B")
    mult = {"": 1, "K": 1000, "M": MB, "G": 1000 * MB,
            "KI": 1 << 10, "MI": 1 << 20, "GI": 1 << 30}[unit]
    return int(value * mult)


@dataclass
class BenchConfig:
    schemes: list[SchemeSpec] = field(default_factory=lambda: PE_AONT_CONFIGS + BASELINES)
    data_sizes: list[int] = field(default_factory=lambda: [100 << 20])
    repetitions: int = 30
    warmup_runs: int = 1
    cipher_id: CipherId = CipherId.AES_128
    seed: int | None = None
    direction: str = "protect"
    allow_insecure: bool = False

    def __post_init__(self):
        if self.repetitions < 1:
            raise ParamError("repetitions must be >= 1")
        if self.warmup_runs < 0:
            raise ParamError("warmup_runs must be >= 0")
        if self.direction not in ("protect", "both"):
            raise ParamError("direction must be 'protect' or 'both'")
        if not self.schemes or not self.data_sizes:
            raise ParamError("need at least one scheme and one data size")
        self.cipher_id = CipherId.parse(self.cipher_id)


@dataclass(frozen=True)
class Measurement:
    spec: SchemeSpec
    direction: str
    size_bytes: int
    rep: int
    seconds: float
    cipher_ops: int
    xor_ops: int

    @property
    def mb_per_s(self) -> float:
        return self.size_bytes / MB / self.seconds if self.seconds > 0 else float("inf")


@dataclass(frozen=True)
class Summary:
    label: str
    direction: str
    size_bytes: int
    mean_mb_per_s: float
    std_mb_per_s: float
    mean_seconds: float
    cipher_ops: int
    xor_ops: int


def environment() -> dict:
    env = {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "numpy": np.__version__,
        "cpu": platform.processor() or platform.machine(),
        "aes_acceleration": None,
    }
    try:
        with open("/proc/cpuinfo") as fh:
            info = fh.read()
        model = re.search(r"^model name\s*:\s*(.+)$", info, re.MULTILINE)
        if model:
            env["cpu"] = model.group(1).strip()
        flags = re.search(r"^(?:flags|Features)\s*:\s*(.+)$", info, re.MULTILINE)
        if flags:
            env["aes_acceleration"] = "aes" in flags.group(1).split()
    except OSError:
        pass
    try:
        from cryptography.hazmat.backends.openssl.backend import backend
        env["openssl"] = backend.openssl_version_text()
    except Exception:  # informational only
        env["openssl"] = "unknown"
    return env


@dataclass
class BenchReport:
    config: BenchConfig
    measurements: list[Measurement]
    environment: dict

    def summaries(self) -> list[Summary]:
        groups: dict[tuple, list[Measurement]] = {}
        for m in self.measurements:
            groups.setdefault((m.spec, m.direction, m.size_bytes), []).append(m)
        out = []
        for (spec, direction, size), ms in groups.items():
            rates = [m.mb_per_s for m in ms]
            out.append(Summary(
                label=spec.label, direction=direction, size_bytes=size,
                mean_mb_per_s=statistics.fmean(rates),
                std_mb_per_s=statistics.stdev(rates) if len(rates) > 1 else 0.0,
                mean_seconds=statistics.fmean(m.seconds for m in ms),
                cipher_ops=ms[0].cipher_ops, xor_ops=ms[0].xor_ops,
            ))
        return out

    def mean_throughput(self, label: str, size_bytes: int | None = None,
                        direction: str = "protect") -> float:
        for s in self.summaries():
            if s.label == label and s.direction == direction and (size_bytes is None or s.size_bytes == size_bytes):
                return s.mean_mb_per_s
        raise KeyError(label)

    def counter_violations(self) -> list[str]:
        """Measurements whose op counts differ from the scheme's closed-form law."""
        bad = []
        for m in self.measurements:
            params = m.spec.params(self.config.cipher_id)
            l = padded_block_count(m.size_bytes, params.k, params.block_size) + 1
            want = expected_ops(m.spec.scheme, l, params.k, params.e)
            if (m.cipher_ops, m.xor_ops) != want:
                bad.append(f"{m.spec.label} {m.direction} size={m.size_bytes} rep={m.rep}: "
                           f"got {(m.cipher_ops, m.xor_ops)}, want {want}")
        return bad

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for m in self.measurements:
            name = m.spec.scheme.value if m.direction == "protect" else f"{m.spec.scheme.value}+recover"
            params = m.spec.params(self.config.cipher_id)
            w.writerow([name, params.k, params.e, m.size_bytes, m.rep, f"{m.seconds:.6f}",
                        f"{m.mb_per_s:.2f}", m.cipher_ops, m.xor_ops])
        return buf.getvalue()

    def format_table(self) -> str:
        rows = [("scheme", "direction", "size", "MB/s", "std", "cipher ops", "xor ops")]
        for s in sorted(self.summaries(), key=lambda s: (s.size_bytes, s.direction, -s.mean_mb_per_s)):
            rows.append((s.label, s.direction, str(s.size_bytes), f"{s.mean_mb_per_s:.1f}",
                         f"{s.std_mb_per_s:.1f}", str(s.cipher_ops), str(s.xor_ops)))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        env = ", ".join(f"{k}={v}" for k, v in self.environment.items())
        return "\n".join(lines) + f"\n\nenvironment: {env}\n"


def run_bench(config: BenchConfig, progress=None) -> BenchReport:
    rng = np.random.default_rng(config.seed)
    key = rng.bytes(16)
    schemes = []
    for spec in config.schemes:
        try:
            scheme = get_scheme(spec.scheme, allow_insecure=config.allow_insecure)
            params = spec.params(config.cipher_id)
            cipher = scheme.cipher_for(params)
        except (ParamError, InsecureCipherError) as exc:
            raise type(exc)(f"{spec.label}: {exc}") from exc
        schemes.append((spec, scheme, params, cipher))

    measurements: list[Measurement] = []
    gc_was_enabled = gc.isenabled()
    try:
        for size in config.data_sizes:
            for spec, scheme, params, cipher in schemes:
                try:
                    scheme.check_params(params)
                    for _ in range(config.warmup_runs):
                        scheme.encode(rng.bytes(size), params, key, rng.bytes(16), OpCounters(), cipher)
                except ParamError as exc:
                    raise ParamError(f"{spec.label}: {exc}") from exc
            for rep in range(config.repetitions):
                for spec, scheme, params, cipher in schemes:
                    data = rng.bytes(size)
                    iv = rng.bytes(16)
                    counters = OpCounters()
                    gc.disable()
                    t0 = time.perf_counter()
                    fs = scheme.encode(data, params, key, iv, counters, cipher)
                    t1 = time.perf_counter()
                    if gc_was_enabled:
                        gc.enable()
                    measurements.append(Measurement(spec, "protect", size, rep, t1 - t0,
                                                    counters.block_cipher_ops, counters.xor_ops))
                    if config.direction == "both":
                        back = OpCounters()
                        gc.disable()
                        t0 = time.perf_counter()
                        out = scheme.decode(fs, size, key, back, cipher)
                        t1 = time.perf_counter()
                        if gc_was_enabled:
                            gc.enable()
                        if out != data:
                            raise AssertionError(f"{spec.label}: recovery mismatch")
                        measurements.append(Measurement(spec, "recover", size, rep, t1 - t0,
                                                        back.block_cipher_ops, back.xor_ops))
                    del fs
                    if progress is not None:
                        progress(spec, size, rep)
    finally:
        if gc_was_enabled:
            gc.enable()
    return BenchReport(config, measurements, environment())
