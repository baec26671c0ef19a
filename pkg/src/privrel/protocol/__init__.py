"""The privacy-preserving reliability protocol: tables, messages, parties."""

from privrel.protocol.parties import DESIGNER, Designer, Manufacturer, PartyConfig, manufacturer_name
from privrel.protocol.runner import ProtocolRun, build_configs, run_parties, run_protocol
from privrel.protocol.tables import (
    EncryptedSignatureTable,
    LevelTable,
    ResultVector,
    TableLayout,
    decrypt_result,
    designer_finalize,
    designer_setup,
    error_envelope,
    final_column_sums,
    manufacturer_update,
    plaintext_column_sums,
)

__all__ = [
    "DESIGNER",
    "Designer",
    "EncryptedSignatureTable",
    "LevelTable",
    "Manufacturer",
    "PartyConfig",
    "ProtocolRun",
    "ResultVector",
    "TableLayout",
    "build_configs",
    "decrypt_result",
    "designer_finalize",
    "designer_setup",
    "error_envelope",
    "final_column_sums",
    "manufacturer_name",
    "manufacturer_update",
    "plaintext_column_sums",
    "run_parties",
    "run_protocol",
]
