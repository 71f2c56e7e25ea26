"""Stochastic visual attention: predict where people look in video.

The pipeline layers a deterministic saliency front-end, a per-pixel Gaussian
(Kalman) belief over perceived saliency, a probability-of-maximum readout,
and a particle filter over eye-focusing states whose weighted samples yield
eye-focusing density maps.  Parameters are learned offline: the two saliency
noise scales by EM, the movement model from gaze traces by Viterbi learning.
"""

__version__ = "0.1.0"

from .attention import RunConfig, iter_attention, run_attention
from .evaluation import NssReport, default_radius, evaluate_run, nss_frame
from .kalman import (FilterHistory, GaussianMap, SaliencyParams, SmootherOutput,
                     em_fit_saliency, initial_belief, kalman_filter, kalman_predict,
                     kalman_smooth, kalman_update, riccati_fixed_point)
from .maxprob import (MaxProbMap, QuadratureConfig, max_probability_map,
                      max_probability_map_reference, sequential_log_sum, tree_log_sum)
from .particles import (AttentionParams, EyeState, ParticleSet, bilinear_lookup,
                        density_map, metropolis_ring_move, propagate_pattern,
                        propagate_position, step_particle_filter, systematic_resample)
from .saliency import (PyramidConfig, RetinalConfig, build_feature_channels,
                       center_surround, compute_saliency_map, gaussian_pyramid,
                       normalize_map, resize_bilinear)
from .traces import (EyeTrace, PatternSequence, init_patterns, load_trace_csv,
                     save_trace_csv, update_params, viterbi_decode, viterbi_learn)

__all__ = [name for name in dir() if not name.startswith("_")]
