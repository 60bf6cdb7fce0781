from goodcase.protocols.machines import (
    MACHINES,
    BAfpMachine,
    BAspMachine,
    BBfpMachine,
    BBspMachine,
    BBupMachine,
    CorruptDrive,
    FallbackHandle,
    ProtocolMachine,
    SyncBA1Machine,
    make_machine,
    select_fallback_input,
    step,
)
from goodcase.protocols.predicates import (
    MalformedBundle,
    Tally,
    basp_validate_decided,
    bbfp_early_decide,
    bbup_early_decide,
    compute_majority_forward_set,
    late_decide_by_fraction,
    syncba1_certificate_check,
)

__all__ = [
    "MACHINES", "BAfpMachine", "BAspMachine", "BBfpMachine", "BBspMachine", "BBupMachine",
    "CorruptDrive", "FallbackHandle", "ProtocolMachine", "SyncBA1Machine", "make_machine",
    "select_fallback_input", "step", "MalformedBundle", "Tally", "basp_validate_decided",
    "bbfp_early_decide", "bbup_early_decide", "compute_majority_forward_set",
    "late_decide_by_fraction", "syncba1_certificate_check",
]
