"""A close look at one counterfactual.

Take the rating-4 point (0.6019, -0.4742, 0.0827, -0.0595, 0.0588), which
sits in the fourth quadrant, and ask for rating 3.  Gradient descent
returns a change in every coordinate; the sparsity algorithm ranks those
changes by size relative to the point and keeps the fewest that still
work.
"""

import numpy as np

from counterfact import SolverConfig, SparsityConfig, SynthConfig, TrainConfig, generate, train
from counterfact.model import forward_probs
from counterfact.solver import make_problem
from counterfact.sparsity import relative_change, run_gradient_descent, run_sparsity

X, y = generate(SynthConfig(n_points=4000, seed=7))
model = train(TrainConfig(hidden_layer_sizes=(64, 64), epochs=100, seed=1), X, y)

x = np.array([0.6019, -0.4742, 0.0827, -0.0595, 0.0588])
problem = make_problem(model, x)
print(f"predicted rating {problem.original_ordinal}, target {problem.target_ordinal}")

gd = run_gradient_descent(problem, SolverConfig(), SparsityConfig())
sp = run_sparsity(problem, SolverConfig(), SparsityConfig())

np.set_printoptions(precision=4, suppress=True)
print(f"\ngradient descent (lambda {gd.lambda_used:g}):   delta = {gd.chosen.delta}")
print(f"relative change |delta / x|:            {relative_change(gd.chosen.delta, x)}")
print(f"sparsity algorithm (lambda {sp.lambda_used:g}): delta = {sp.chosen.delta}")

for name, res in (("gradient descent", gd), ("sparsity", sp)):
    c = res.chosen
    print(f"\n{name}: L0 {c.l0}, L2 {c.l2:.4f}, new rating {c.predicted_ordinal}")
    print(f"  class probabilities {forward_probs(model, x + c.delta)}")

print("\nEach round of the sparsity algorithm tries the top-1, top-2, ... changes:")
for rnd in sp.trace:
    print(f"  lambda {rnd.lam:g}: dense L0 {rnd.dense_l0}, qualifying candidates {rnd.n_qualifying}")
