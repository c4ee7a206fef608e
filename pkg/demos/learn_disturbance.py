"""Measure a synthetic campaign, learn the steady-state z effort, compare kernels.

Runs at a coarse 5 mm grid and takes about two minutes on one core:

    python demos/learn_disturbance.py [seed]
"""

import sys

from maglev_gp.campaign import (
    CampaignConfig,
    assemble_dataset,
    initial_hyperparameters,
    period_from_sets,
    run_grid_campaign,
    train_model,
    validate_model,
)
from maglev_gp.gp import OptimizerConfig
from maglev_gp.kernels import KernelSpec
from maglev_gp.sparse import sr_compress

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1

# six runs over the plane, each with its own coil-to-metrology offset
sets = run_grid_campaign(CampaignConfig(spacing=0.005, seed=seed))
train = assemble_dataset(sets[:5], seed=seed)
valid = sets[5].to_dataset()
period = period_from_sets(sets)
print(f"{len(train)} training points, dominant wavelength {period * 1e3:.1f} mm")

init = initial_hyperparameters(train, period)
models = {}
for spec in KernelSpec:
    post, rep = train_model(train, spec, init, OptimizerConfig(max_iter=100, restarts=2, seed=seed), seed=seed)
    models[spec] = post
    print(f"{spec.value:<11} NLL {rep.initial_nll:9.1f} -> {rep.final_nll:9.1f}   held-out BFR {validate_model(post, valid):6.2f}%")

# compress the composite model to 100 regressors, scored on the last training run
full = models[KernelSpec.FULL]
sr = sr_compress(train, KernelSpec.FULL, full.hp, 100, 50, sets[4].to_dataset(), seed=seed)
print(f"SR m=100 (best of 50) held-out BFR {validate_model(sr, valid):6.2f}%")
