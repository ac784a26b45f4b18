"""PE-AONT: fast data fragmentation by partial encryption and an all-or-nothing transform."""

from .baselines import Bastion, EncSplit, Sfd, get_scheme
from .block_model import (
    Block,
    CipherId,
    FragmentSet,
    FragmentState,
    Manifest,
    Params,
    SchemeId,
    SecurityLevel,
    pad_and_blockify,
    validate_params,
)
from .cipher import OpCounters, cbc_decrypt, cbc_encrypt, get_cipher, random_iv
from .core import PeAont, aont_transform, defragment, fragment_and_encrypt

__all__ = [
    "Bastion", "Block", "CipherId", "EncSplit", "FragmentSet", "FragmentState", "Manifest",
    "OpCounters", "Params", "PeAont", "SchemeId", "SecurityLevel", "Sfd", "aont_transform",
    "cbc_decrypt", "cbc_encrypt", "defragment", "fragment_and_encrypt", "get_cipher",
    "get_scheme", "pad_and_blockify", "random_iv", "validate_params",
]

__version__ = "0.1.0"
