"""Pin-target characterisation of ultrasound transducer arrays.

Drive synthesis, a pulse-echo scanner simulator, correlation reception,
delay-and-sum beamforming and the resolution/bandwidth/beamwidth metrics
built on them.
"""

from .acquisition import (
    ArrayGeometry,
    ChannelData,
    ReceiveConfig,
    SaturationWarning,
    TxScheme,
    dw_delays,
    golay_transmit_pair,
    simulate,
    sta_acquisition,
    two_way_chip,
)
from .metrics import (
    BeamwidthProfile,
    BoundaryPeakError,
    PsdEstimate,
    ResolutionReport,
    beamwidth_profile,
    fractional_bandwidth,
    lsf_extract,
    periodogram,
    range_resolution_extract,
    resolution_report,
    snr_gain,
)
from .processing import (
    BeamformedImage,
    Raster,
    ReferenceSignal,
    correlate,
    das_beamform,
    golay_combine,
    make_golay_references,
    make_reference,
    sta_full_beamform,
)
from .propagation import Medium, Phantom, PinTarget, Plate, pin_grating_phantom, attenuation_filter, water_tank
from .transducer import ElementModel, TransferFunction, apply_transfer, estimate_two_way_tf, synth_two_way_response
from .waveforms import (
    AliasingWarning,
    CodeSequence,
    PwmSpec,
    SampledWaveform,
    UnitMismatchError,
    bpsk_modulate,
    golay_pair,
    resample,
    signal_energy,
    synth_pwm_pulse,
)

__version__ = "0.1.0"
