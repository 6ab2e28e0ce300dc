"""Fair-exchange micropayments for outsourced enclave computation.

A library plus deterministic simulator: cycle-partitioned workloads run
inside a simulated enclave that attests encrypted results, a requester
pays per round through an off-chain channel, and settlement on a
simulated ledger releases the decryption key against the payment.
"""

__version__ = "0.1.0"

from .crypto import (
    AuthFailure,
    Ciphertext,
    Digest,
    Signature,
    SigningIdentity,
    SymmetricKey,
    check_sig,
    decrypt,
    encrypt,
    generate_key,
    hash_bytes,
    sign,
)
from .exec_model import (
    BaseMismatch,
    MState,
    OutBuffer,
    SchemaMismatch,
    StateDiff,
    StepResult,
    Workload,
    apply_diff,
    compose_check,
    gen_diff,
    step,
)
from .ledger import ChannelUpdate, FeeSchedule, Ledger, PaymentChannel, state_hash
from .tee import (
    AttestationRecord,
    EnclaveHandle,
    WrappedResult,
    enclave_load,
    reveal_key,
    verify_attested,
    wrapper_execute,
)

__all__ = [name for name in dir() if not name.startswith("_")]
