"""Simulator and key-distillation toolkit for detector-device-independent QKD.

Layers, bottom up: exact Bell statistics and discrimination bounds
(`quantum`), the stochastic physical layer (`channel`), the protocol state
machine and estimators (`protocol`), finite-key bounds (`finitekey`),
classical distillation (`postproc`), attack models and the statistical
countermeasure (`adversary`), closed-form expected rates for sweeps
(`ratemodel`), and the command-line front end (`cli`).
"""

from .quantum import (
    Basis,
    BellOutcome,
    PolarizationQubit,
    ProtocolState,
    alice_bit,
    bell_outcome_distribution,
    decode_bit,
    transformed_bob_state,
    usd_success_lower_bound,
)
from .channel import (
    ChannelParams,
    DetectionEvent,
    DetectorMode,
    DetectorModel,
    SourceParams,
    default_detectors,
    detect,
    detect_linear,
    draw_photon_number,
    transmit,
)
from .protocol import (
    AliceStateSet,
    KeyBlock,
    KeyRole,
    Party,
    ProtocolConfig,
    TallyMatrix,
    Transcript,
    phase_error_threestate,
    qber_x_fourstate,
    qber_z,
    run_session,
    sift,
    tallies_from_transcript,
)
from .finitekey import (
    FiniteKeyInput,
    FiniteKeyResult,
    binary_entropy,
    evaluate,
    multiphoton_correction,
    optimize_mu,
    phase_error_ub,
    secret_key_length,
    single_photon_lb,
)
from .postproc import (
    HashSpec,
    ReconciliationResult,
    cascade_reconcile,
    privacy_amplify,
    toeplitz_hash,
    verify_keys,
)
from .adversary import (
    BlindingConfig,
    SiphoningConfig,
    attack_detection_rate,
    countermeasure_statistics,
    run_blinding_attack,
    run_intercept_resend,
    run_siphoning_attack,
)

__version__ = "0.1.0"
