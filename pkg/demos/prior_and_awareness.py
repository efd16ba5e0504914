"""
Question-type prior and the awareness vector
============================================

Count which answers each question type produces in a training set, then use
the type distribution of one question to reweight the answer space.
"""

import numpy as np

from milqt import awareness, compute_prior, gen_synthetic
from milqt.diffcore import Tensor

# A small synthetic training set: 3 question types, 6 answers.
bundle = gen_synthetic(seed=0, Q=300, P=3, A=6, K=4, D_v=8)
prior = compute_prior(bundle)

# Each column is a distribution over types for one answer.
print("prior (rows: types, cols: answers)")
print(np.round(prior.m, 3))
print("column sums:", prior.m.sum(axis=0))

###############################################################################
# A confident type prediction selects that type's answers.

h = Tensor([0.9, 0.05, 0.05])
print("m_awn for a mostly type0 question:", np.round(awareness(h, prior).values, 3))

# A flat type prediction spreads weight evenly.
h = Tensor(np.full(3, 1 / 3))
print("m_awn for an unsure question:    ", np.round(awareness(h, prior).values, 3))

###############################################################################
# The prior round-trips through a plain CSV.

from milqt.prior import prior_from_csv, prior_to_csv

text = prior_to_csv(prior)
print(text)
assert prior_from_csv(text).equals(prior)
