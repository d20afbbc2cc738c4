"""Cluster-property damping of CHSH correlators for receding wave packets."""

from .spin_chsh import (
    ChshSetting,
    LhvModel,
    SpinDirection,
    TwoQubitState,
    chsh_value,
    lhv_chsh_value,
    lhv_extremal_scan,
    tsirelson_setting,
    pauli_observable,
    singlet_state,
    spin_correlator,
)
from .wavepacket import (
    DetectorWindow,
    GaussianPacket,
    GridSpec,
    detection_probability_closed,
    detection_probability_numeric,
    evolve,
    l_t,
)
from .cluster_field import FieldParams, bessel_k1, decay_rate_fit, two_point, two_point_asymptotic
from .experiment import (
    Adaptive,
    ExperimentConfig,
    Schedule,
    Static,
    damped_chsh,
    damped_correlator,
    estimate_chsh,
    joint_detection_probability,
    sample_run,
    trials_for_significance,
)

__version__ = "0.1.0"
