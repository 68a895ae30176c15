"""Simulation and signal-processing toolkit for an NV-diamond AC/DC current comparator."""

__version__ = "0.1.0"

from .series import TimeSeries, ValidationError  # noqa: E402
from .magcore import (  # noqa: E402
    CoreGeometry,
    CoreMaterial,
    WindingConfig,
    conversion_coefficient,
    gap_flux_density,
    gap_sweep,
    ratio_error_model,
    total_reluctance,
    transfer_attenuation,
)
from .noise import NoiseModel, psd_estimate, synthesize_noise  # noqa: E402
from .nvsensor import (  # noqa: E402
    SensorPhysics,
    TrackerConfig,
    fm_error_signal,
    odmr_spectrum,
    shot_noise_limit,
    track_field,
    zeeman_resonances,
)
from .dsp import (  # noqa: E402
    AllanCurve,
    SquareWaveProtocol,
    allan_deviation,
    dft_bin_amplitude,
    flux_to_current,
    noise_slope_id,
    required_integration_time,
    square_wave_extract,
)
from .fitting import ConvergenceError, FitResult, fit_frequency_response, fit_line  # noqa: E402
from .report import CampaignReport, emit_plotdata, read_report, write_report  # noqa: E402
from .simulation import (  # noqa: E402
    ACDrive,
    ComparatorConfig,
    DCDrive,
    DriftModel,
    LockLossError,
    run_ac_campaign,
    run_allan_campaign,
    run_dc_campaign,
    simulate_measurement,
)
