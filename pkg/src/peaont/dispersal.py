"""Placement of fragments over storage sites, and a directory-backed store.

Placement rules by security level:

* FULL (e = k-1): at most k-2 fragments on any one site, so at least
  ceil(k / (k-2)) sites.
* SINGLE_SITE and PERFORMANCE_ONLY: every fragment on its own site (k sites).
"""

from __future__ import annotations

import enum
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlparse

from .block_model import (
    FragmentSet,
    FragmentState,
    Manifest,
    Params,
    SecurityLevel,
    deserialize_fragment,
    fragment_digest,
    serialize_fragment,
)
from .errors import (
    DigestMismatchError,
    FragmentFormatError,
    InsufficientSitesError,
    MissingFragmentError,
    ParamError,
    SchemeMismatchError,
    SiteWriteError,
)


class Strategy(str, enum.Enum):
    ROUND_ROBIN = "ROUND_ROBIN"
    PACK_MAX = "PACK_MAX"

    @classmethod
    def parse(cls, value: "str | Strategy") -> "Strategy":
        if isinstance(value, Strategy):
            return value
        try:
            return cls(str(value).strip().upper().replace("-", "_"))
        except ValueError:
            raise ParamError(f"unknown placement strategy {value!r}") from None


@dataclass(frozen=True)
class StorageSite:
    """A storage location: a local directory (or ``file://`` URI)."""

    site_id: str
    root: str
    capacity_fragments: int | None = None

    @property
    def path(self) -> Path:
        parsed = urlparse(self.root)
        if parsed.scheme in ("", "file"):
            return Path(parsed.path if parsed.scheme else self.root)
        raise ParamError(f"site {self.site_id}: unsupported storage URI {self.root!r}")

    def write(self, name: str, data: bytes) -> Path:
        """Atomic write: temp file in the same directory, then rename."""
        root = self.path
        root.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=root)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, root / name)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise
        return root / name

    def read(self, name: str) -> bytes:
        return (self.path / name).read_bytes()

    def exists(self, name: str) -> bool:
        return (self.path / name).is_file()

    def list(self) -> list[str]:
        root = self.path
        if not root.is_dir():
            return []
        return sorted(p.name for p in root.iterdir() if p.is_file() and not p.name.startswith(".tmp-"))


@dataclass(frozen=True)
class PlacementPlan:
    assignments: dict
    params: Params
    sites: tuple = field(default=())

    def site_of(self, index: int) -> str:
        return self.assignments[index]

    def placement(self) -> tuple[str, ...]:
        return tuple(self.assignments[i] for i in range(self.params.k))

    def load(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for sid in self.assignments.values():
            counts[sid] = counts.get(sid, 0) + 1
        return counts

    def site(self, site_id: str) -> StorageSite:
        for s in self.sites:
            if s.site_id == site_id:
                return s
        raise KeyError(site_id)


def max_fragments_per_site(params: Params) -> int:
    if params.security_level is SecurityLevel.FULL:
        return params.k - 2
    return 1


def minimum_sites(params: Params) -> int:
    return math.ceil(params.k / max_fragments_per_site(params))


def check_plan(plan: PlacementPlan) -> None:
    """Raise ParamError if the plan breaks its security level's placement rule."""
    cap = max_fragments_per_site(plan.params)
    if sorted(plan.assignments) != list(range(plan.params.k)):
        raise ParamError("plan must place every fragment exactly once")
    for sid, n in plan.load().items():
        if n > cap:
            raise ParamError(f"site {sid} holds {n} fragments, limit is {cap}")


def plan_placement(params: Params, sites: list[StorageSite],
                   strategy: "Strategy | str" = Strategy.ROUND_ROBIN) -> PlacementPlan:
    strategy = Strategy.parse(strategy)
    ids = [s.site_id for s in sites]
    if len(set(ids)) != len(ids):
        raise ParamError("site ids must be unique")
    k = params.k
    cap = max_fragments_per_site(params)
    need = minimum_sites(params)
    if len(sites) < need:
        raise InsufficientSitesError(need, len(sites), f"{params.security_level.value} allows {cap} per site")
    caps = [cap if s.capacity_fragments is None else min(cap, s.capacity_fragments) for s in sites]
    if sum(caps) < k:
        raise InsufficientSitesError(need, len(sites), "site capacities cannot hold all fragments")

    assignments: dict[int, str] = {}
    load = [0] * len(sites)
    if strategy is Strategy.PACK_MAX:
        pos = 0
        for idx in range(k):
            while load[pos] >= caps[pos]:
                pos += 1
            assignments[idx] = ids[pos]
            load[pos] += 1
    else:
        pos = 0
        for idx in range(k):
            while load[pos % len(sites)] >= caps[pos % len(sites)]:
                pos += 1
            assignments[idx] = ids[pos % len(sites)]
            load[pos % len(sites)] += 1
            pos += 1
    plan = PlacementPlan(assignments, params, tuple(sites))
    check_plan(plan)
    return plan


def fragment_name(manifest_digest_hex: str, index: int) -> str:
    return f"{manifest_digest_hex}.{index}.pea"


def manifest_name(manifest_digest_hex: str) -> str:
    return f"{manifest_digest_hex}.manifest"


def store(fs: FragmentSet, manifest: Manifest, plan: PlacementPlan) -> list[Path]:
    """Write each fragment to its site and the manifest to every site.

    Returns the written paths. On failure raises SiteWriteError carrying the
    paths already written.
    """
    if plan.params != fs.params or manifest.params != fs.params:
        raise ParamError("plan, manifest and fragment set disagree on parameters")
    check_plan(plan)
    digest = manifest.digest()
    hexd = digest.hex()
    final = manifest.with_placement(plan.placement())
    written: list[Path] = []
    for idx in range(fs.k):
        site = plan.site(plan.site_of(idx))
        blob = serialize_fragment(idx, fs.blocks[idx], digest, params=fs.params, scheme=manifest.scheme)
        try:
            written.append(site.write(fragment_name(hexd, idx), blob))
        except OSError as exc:
            raise SiteWriteError(site.site_id, written, exc) from exc
    text = final.to_json().encode()
    for site in plan.sites:
        try:
            written.append(site.write(manifest_name(hexd), text))
        except OSError as exc:
            raise SiteWriteError(site.site_id, written, exc) from exc
    return written


def find_manifest(sites: list[StorageSite], digest_hex: str | None = None) -> Manifest:
    """Load a manifest by digest (or the only one present) from the first site that has it."""
    for site in sites:
        try:
            names = site.list()
        except (OSError, ParamError):
            continue
        cands = [n for n in names if n.endswith(".manifest")]
        if digest_hex is not None:
            cands = [n for n in cands if n == manifest_name(digest_hex)]
        if len(cands) == 1:
            return Manifest.from_json(site.read(cands[0]))
        if len(cands) > 1:
            raise FragmentFormatError("several manifests found; name one by digest")
    raise FileNotFoundError("no manifest found at any site")


def fetch(manifest: Manifest, sites: list[StorageSite]) -> FragmentSet:
    """Gather and verify all k fragments; the placement recorded in the manifest is tried first."""
    hexd = manifest.digest_hex()
    digest = manifest.digest()
    by_id = {s.site_id: s for s in sites}
    k = manifest.params.k
    payloads: list[bytes | None] = [None] * k
    last_known = {}
    for idx in range(k):
        name = fragment_name(hexd, idx)
        order = list(sites)
        if manifest.placement:
            sid = manifest.placement[idx]
            last_known[idx] = sid
            if sid in by_id:
                order = [by_id[sid]] + [s for s in sites if s.site_id != sid]
        for site in order:
            try:
                blob = site.read(name)
            except (OSError, ParamError):
                continue
            frag = deserialize_fragment(blob)
            h = frag.header
            if h.scheme is not manifest.scheme:
                raise SchemeMismatchError(
                    f"fragment {idx} was produced by {h.scheme.value}, manifest says {manifest.scheme.value}"
                )
            if (h.manifest_digest != digest or h.fragment_index != idx or h.k != k
                    or h.e != manifest.params.e or h.block_size != manifest.params.block_size):
                raise FragmentFormatError(f"fragment {idx} header does not match the manifest")
            if fragment_digest(frag.payload) != manifest.fragment_digests[idx]:
                raise DigestMismatchError(idx)
            payloads[idx] = frag.payload
            break
    missing = [i for i, p in enumerate(payloads) if p is None]
    if missing:
        raise MissingFragmentError(missing, last_known)
    return FragmentSet.from_fragments(manifest.params, payloads, FragmentState.TRANSFORMED)


def load_sites(path: "str | os.PathLike") -> list[StorageSite]:
    """Read a site list.

    JSON: ``[{"site_id": ..., "root": ..., "capacity_fragments": ...}, ...]``.
    Plain text: one ``site_id root [capacity]`` per line, ``#`` comments.
    Relative roots resolve against the list file's directory.
    """
    path = Path(path)
    text = path.read_text()
    base = path.parent
    entries: list[dict] = []
    stripped = text.lstrip()
    if stripped.startswith("[") or stripped.startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParamError(f"bad site list {path}: {exc}") from exc
        if isinstance(raw, dict):
            raw = raw.get("sites", [])
        entries = list(raw)
    else:
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ParamError(f"{path}:{lineno}: expected 'site_id root [capacity]'")
            entry = {"site_id": parts[0], "root": parts[1]}
            if len(parts) == 3:
                entry["capacity_fragments"] = int(parts[2])
            entries.append(entry)
    sites = []
    for entry in entries:
        try:
            root = str(entry["root"])
            sid = str(entry["site_id"])
        except (KeyError, TypeError) as exc:
            raise ParamError(f"bad site entry {entry!r}") from exc
        if "://" not in root and not os.path.isabs(root):
            root = str(base / root)
        cap = entry.get("capacity_fragments")
        sites.append(StorageSite(sid, root, None if cap is None else int(cap)))
    return sites


def dump_sites(sites: list[StorageSite]) -> str:
    return json.dumps(
        [{"site_id": s.site_id, "root": s.root,
          **({"capacity_fragments": s.capacity_fragments} if s.capacity_fragments is not None else {})}
         for s in sites],
        indent=2,
    ) + "\n"
