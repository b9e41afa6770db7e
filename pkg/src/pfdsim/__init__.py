"""Transistor-level transient simulator and characterization harness for a
precharge-style phase frequency detector."""

from pfdsim.devices import (
    DEFAULT_CONFIG,
    CornerSet,
    ModelConfig,
    MosfetParams,
    apply_corner,
    load_config,
    mosfet_conductances,
    mosfet_current,
)
from pfdsim.engine import (
    SimOptions,
    SolverError,
    TransientResult,
    Waveform,
    dc_operating_point,
    supply_current,
    transient,
)
from pfdsim.experiments import (
    DesignPoint,
    ExperimentError,
    ExperimentReport,
    corner_sweep,
    frequency_mismatch_test,
    generate_report,
    half_period_test,
    measure_dead_zone,
    measure_fmax,
    run_offset_experiment,
    width_sweep,
)
from pfdsim.measure import (
    Decision,
    MeasurementError,
    PulseEvent,
    average_power,
    classify_decision,
    detect_pulses,
    fall_time,
    mutual_exclusion_overlap,
    rise_time,
)
from pfdsim.netlist import Netlist, NetlistError, PulseSpec, build_nor2, build_pfd

__all__ = [
    "DEFAULT_CONFIG",
    "CornerSet",
    "Decision",
    "DesignPoint",
    "ExperimentError",
    "ExperimentReport",
    "MeasurementError",
    "ModelConfig",
    "MosfetParams",
    "Netlist",
    "NetlistError",
    "PulseEvent",
    "PulseSpec",
    "SimOptions",
    "SolverError",
    "TransientResult",
    "Waveform",
    "apply_corner",
    "average_power",
    "build_nor2",
    "build_pfd",
    "classify_decision",
    "corner_sweep",
    "dc_operating_point",
    "detect_pulses",
    "fall_time",
    "frequency_mismatch_test",
    "generate_report",
    "half_period_test",
    "load_config",
    "measure_dead_zone",
    "measure_fmax",
    "mosfet_conductances",
    "mosfet_current",
    "mutual_exclusion_overlap",
    "rise_time",
    "run_offset_experiment",
    "supply_current",
    "transient",
    "width_sweep",
]

__version__ = "0.1.0"
