"""Bandit-scheduled parallel MCMC with kernel Stein discrepancy rewards and
entropy-based reweighting of multimodal samples."""

from .bandit import (BanditState, eps_greedy_select, init_bandit,
                     normalize_and_update, ucb1_select, uniform_select)
from .baselines import TEMPERATURE_LADDER, run_pt, run_smc, systematic_resample, temper
from .clustering import ChainGrouping, FinalPartition, group_chains, kmeans, reweight
from .ksd import (KernelConfig, WeightedSample, block_ksd, imq_kernel, ksd,
                  stein_kernel, stein_kernel_matrix, stein_kernel_pair)
from .orchestrator import (Checkpoint, RunConfig, RunTrace, estimate_mean, mse,
                           run_bandit_pool, run_clustered_bandit,
                           run_region_bandit, select_region)
from .samplers import (Batch, Chain, MALAChain, MHChain, NUTSChain,
                       find_reasonable_step_size, leapfrog, make_sampler_pool)
from .targets import (EvalCounter, GaussianMixtureSpec, SensorModel,
                      TargetDensity, default_anchor_positions,
                      localization_error, make_diagonal_gaussian,
                      make_gaussian, make_gaussian_mixture,
                      make_sensor_posterior, random_mixture_spec,
                      simulate_sensor_world)
from .weighting import (GammaCache, GammaConstant, RegionWeights,
                        calibrate_gamma, gaussian_fit_log_mass,
                        importance_log_mass, knn_graph_length,
                        log_region_mass, region_weights,
                        renyi_entropy_estimate)

__version__ = "0.1.0"
