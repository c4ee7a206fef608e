"""Track the y / diagonal / y / return trajectory with and without learned feedforward.

Uses the ground-truth field as a stand-in for a trained model unless a model
file from ``maglev-gp train`` or ``maglev-gp compress`` is given:

    python demos/tracking_comparison.py [model.json]
"""

import sys

from maglev_gp import io
from maglev_gp.campaign import TrackingConfig, gravity_model, run_tracking_comparison
from maglev_gp.cli import comparison_table
from maglev_gp.motor_sim import GroundTruthEffort

cfg = TrackingConfig(seed=1)
if len(sys.argv) > 1:
    model = io.load_model(sys.argv[1])
else:
    model = GroundTruthEffort(cfg.scenario().field, cfg.params)

before, after = run_tracking_comparison(cfg, model)
print(comparison_table(before, after))

# the gravity term alone is what plain rigid-body feedforward already provides
_, same = run_tracking_comparison(cfg, gravity_model(cfg.params))
print(f"\ngravity-only augmentation: l2 {same.l2:.3e} m vs baseline {before.l2:.3e} m")
