"""
Training on synthetic questions
===============================

Each question type owns a block of answers and the right answer is planted
in one image region. We train with the type prior switched on and off, on
blocks that overlap across types, and compare held-out accuracy.
"""

from milqt import SynthRule, TrainConfig, gen_synthetic
from milqt.trainer import evaluate, train

rule = SynthRule(overlap=True)
train_set = gen_synthetic(seed=7, Q=1000, P=3, A=6, K=4, D_v=8, rule=rule)
test_set = gen_synthetic(seed=8, Q=500, P=3, A=6, K=4, D_v=8, rule=rule, split="test")

for prior in (True, False):
    config = TrainConfig(seed=0, epochs=8, prior=prior, log_every=50)
    result = train(config, train_set)
    report = evaluate(result.model, test_set)
    print(f"prior={'on ' if prior else 'off'} last log: {result.log_lines[-1]}")
    print(report.by_type_table())
