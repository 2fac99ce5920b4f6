"""kerrtpa: Kerr and two-photon absorption characterisation of silicon waveguides."""

from .core import (LaserSpec, NonlinearCoeffs, PulseEnvelope, TemporalGrid, WaveguideSpec,
                   beta_from_cm_per_gw, beta_to_cm_per_gw, convert_loss, peak_from_average,
                   pulse_energy, sech2_pulse)
from .errors import *  # noqa: F401,F403
from .fitting import (BidirectionalResult, Direction, PowerScan, TransmissionFit,
                      aggregate_series, combine_apparent, combine_bidirectional, fit_bidirectional,
                      fit_inverse_transmission, fit_phase_profile, simulate_scan)
from .materials import (FcaTable, KerrModelParams, PairSourceScenario, TpaModelParams, TpaVariant,
                        fca_lookup, kerr_coefficient, nonlinear_fom, pair_source_metrics,
                        tpa_coefficient)
from .propagation import (PropagationResult, SolverConfig, STTable, propagate, propagate_many,
                          st_tables, transmission_curve)
from .retrieval import (RetrievalConfig, RetrievedPhase, SpectrumRecord, baseline_correct,
                        gerchberg_saxton, resample_spectrum)

__version__ = "0.1.0"
