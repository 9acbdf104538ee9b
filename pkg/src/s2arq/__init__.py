"""Self-stabilizing automatic repeat request over bounded, lossy, non-FIFO channels."""

from .codec import CodecParams, decode_batch, encode_batch
from .protocol import EFFICIENT, FIRST_ATTEMPT, AckPacket, Packet
from .channel import AdversaryPolicy, Channel
from .faults import Configuration, arbitrary_configuration, safe_configuration
from .engine import (
    ExecutionTrace,
    StopRule,
    check_legal_suffix,
    count_alpha_beta,
    hb_chain_weight,
    is_safe,
    run,
    run_scripted,
)

__version__ = "0.1.0"
