"""Coordinated precoding with discrete rate selection for multicell MIMO downlinks."""
from .rate_model import (DomainError, QosDomain, RateSet, build_envelope, discrete_rate,
                         parse_rate_set, preset_rate_set, qos_map)
from .network_model import (NetworkRealization, ScenarioParams, draw_channels, load_realization,
                            place_scenario, save_realization)
from .link_metrics import RateEvaluation, evaluate_rates, mmse_receivers, stream_mses, stream_sinrs
from .envelope_bcd import BcdConfig, BcdState, regularizer_kappa, run
from .baselines import BaselineConfig, maxsinr_run, tdma_run, waterfill, wmmse_run
from .harness import ExperimentConfig, load_config, run_experiment, write_outputs

__version__ = "0.1.0"
