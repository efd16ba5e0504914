"""
Which hypothesis does each question type trust?
===============================================

Two hypotheses look at disjoint halves of the region features. Type 1 plants
its answer in the second half, types 0 and 2 in the first. After training,
the learned interaction weights show the split.
"""

from milqt import SynthRule, TrainConfig, gen_synthetic
from milqt.interaction import readout_csv
from milqt.trainer import evaluate, readout, train

rule = SynthRule(dim_offsets=(0, 4, 0))
train_set = gen_synthetic(seed=100, Q=900, P=3, A=6, K=4, D_v=8, rule=rule)
test_set = gen_synthetic(seed=200, Q=600, P=3, A=6, K=4, D_v=8, rule=rule, split="test")

config = TrainConfig(seed=0, epochs=15, hypotheses=("topdown", "bilinear_lowrank"),
                     hypothesis_views=((0, 1, 2, 3), (4, 5, 6, 7)), log_every=10_000)
model = train(config, train_set).model
print(readout_csv(readout(model)))

###############################################################################
# Plain averaging of the two hypotheses, for comparison.

baseline = train(config.replace(interaction="averaging"), train_set).model
print("learned  ", evaluate(model, test_set).overall_accuracy)
print("averaging", evaluate(baseline, test_set).overall_accuracy)
