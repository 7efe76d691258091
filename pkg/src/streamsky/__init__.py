"""Attribute-based access control for outsourced data streams."""

from .abe import (
    CiphertextRecord,
    DlogTable,
    MasterKey,
    PairingCounter,
    PublicKey,
    TransformedCiphertext,
    TransformKey,
    UserKey,
    WindowSecrets,
    WindowSum,
    build_dlog_table,
    compute_sum,
    decrypt_trigger,
    decrypt_window,
    encrypt,
    make_window_secrets,
    master_keygen,
    transform,
    user_keygen,
)
from .attributes import Attribute, encode_attributes
from .group import register_backend, setup
from .kernels import BACKEND as KERNEL_BACKEND
from .policies import TriggerPolicy, WindowPolicy, parse_policy_spec
from .tree import AccessTree, build_access_tree

__version__ = "0.1.0"
