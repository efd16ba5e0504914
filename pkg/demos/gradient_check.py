"""
Checking the hand-written gradients
===================================

Every operation in ``milqt.diffcore`` carries its own backward rule. Here we
compare the analytic gradient of the full multi-task loss with central
finite differences.
"""

import numpy as np

from milqt import TrainConfig, gen_synthetic
from milqt.diffcore import check_gradients
from milqt.model import make_batch
from milqt.trainer import init_model

bundle = gen_synthetic(seed=5, Q=4, P=3, A=5, K=4, D_v=3)
config = TrainConfig(seed=1, d_w=3, d_h=4, d_f=6, rank=3, hypotheses=("topdown", "stacked2"))
model = init_model(config, bundle)

# Jitter away from the initial point so no gradient is trivially zero.
rng = np.random.default_rng(0)
for p in model.parameters().values():
    p._assign(p.values + rng.normal(0, 0.3, size=p.shape))

batch = make_batch(bundle, range(len(bundle)))
result = check_gradients(lambda: model.loss(batch)[0].total, model.parameters())

for name, err in result.per_param.items():
    print(f"{name:22s} {err:.2e}")
print("worst:", result.worst, f"{result.max_rel_error:.2e}", "ok" if result.ok(1e-4) else "FAILED")
