"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class PeaontError(Exception):
    """Base class for all package errors."""


class ParamError(PeaontError, ValueError):
    """Invalid (k, e, block_size, cipher) combination or layout precondition."""


class CipherKeyError(PeaontError, ValueError):
    """Key has the wrong length, cannot be read, or failed an integrity check."""


class InsecureCipherError(PeaontError):
    """The NULL-TEST cipher was requested without an explicit opt-in."""


class EntropyError(PeaontError):
    """The entropy source did not deliver the requested number of bytes."""


class FragmentFormatError(PeaontError, ValueError):
    """A serialized fragment or manifest could not be parsed."""


class MissingFragmentError(PeaontError):
    """One or more of the k fragments are unavailable."""

    def __init__(self, indices, sites=None):
        self.indices = sorted(indices)
        self.sites = dict(sites or {})
        where = ""
        if self.sites:
            where = " (last known: " + ", ".join(
                f"{i}@{self.sites[i]}" for i in self.indices if i in self.sites
            ) + ")"
        noun = "fragment" if len(self.indices) == 1 else "fragments"
        super().__init__(
            f"missing {noun} {', '.join(map(str, self.indices))}{where}"
        )


class DigestMismatchError(PeaontError):
    """A fragment's payload does not match the digest recorded in the manifest."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"digest mismatch in fragment {index}")


class SchemeMismatchError(PeaontError):
    """Fragments produced by one scheme were offered to another."""


class IntegrityError(PeaontError):
    """Recovered plaintext failed the manifest's keyed check (wrong key or tampering)."""


class InsufficientSitesError(PeaontError):
    """Not enough storage sites to satisfy the placement constraint."""

    def __init__(self, required: int, available: int, detail: str = ""):
        self.required = required
        self.available = available
        msg = f"insufficient storage sites: need at least {required}, got {available}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class SiteWriteError(PeaontError, OSError):
    """Writing to a storage site failed; ``written`` lists what already landed."""

    def __init__(self, site_id: str, written, cause: BaseException | None = None):
        self.site_id = site_id
        self.written = list(written)
        super().__init__(
            f"cannot write to site {site_id!r}: {cause}; "
            f"{len(self.written)} file(s) written before the failure"
        )
