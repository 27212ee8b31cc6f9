from .additive import (MmcarModel, MmcarState, MmMvModel, MmMvState, mmcar_module_conditional,
                       mmmv_module_conditional, tau_gamma_conditional, update_clients_dp,
                       update_module_effects_mmcar, update_module_effects_mmmv)
from .common import (FIXED_NAMES, Q_DIM, KronDesign, ModelData, fixed_effects_conditional,
                     kron_cluster_step, lambda_conditional, new_cluster_log_marginal, tau_eps_conditional,
                     update_fixed_effects)
from .ddp import DdpModel, DdpState, rho_log_weights, update_clusters_ddp, update_rho
from .sampler import ChainOutput, make_model, merge_chains, run_chain, successive_conditional

PRECISION_STEPS = ("tau_eps", "tau_gamma", "Lambda")


def update_precisions(state, model, rng):
    """τ_ε, then τ_γ (MMCAR), then Λ, in sweep order."""
    for name, fn in model.steps():
        if name in PRECISION_STEPS:
            fn(state, model, rng)
    return state
