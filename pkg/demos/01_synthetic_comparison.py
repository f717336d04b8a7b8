"""Dense gradient descent versus the sparsity algorithm on four clusters.

The data are four Gaussian clusters in (x1, x2) plus three pure-noise
columns.  Rating 1 is the first quadrant and ratings increase
counterclockwise.  For every point the model does not already put in
rating 1 we ask for a one-notch improvement, once with plain gradient
descent and once with the sparsity algorithm, then compare how many
features each method changes and by how much.

Runs in about a minute.
"""

import numpy as np

from counterfact import SolverConfig, SparsityConfig, SynthConfig, TrainConfig, generate, predict_class, train
from counterfact.evaluation import paired_t_one_sided
from counterfact.solver import make_problem
from counterfact.sparsity import run_gradient_descent_batch, run_sparsity_batch

X, y = generate(SynthConfig(n_points=4000, seed=7))
perm = np.random.default_rng(0).permutation(len(y))
train_idx, test_idx = perm[:3200], perm[3200:]

model = train(TrainConfig(hidden_layer_sizes=(64, 64), epochs=100, seed=1), X[train_idx], y[train_idx])
print(f"held-out accuracy: {np.mean(predict_class(model, X[test_idx]) == y[test_idx]):.4f}")
print("(the clusters overlap; no classifier does much better than 0.93 here)\n")

pred = predict_class(model, X)
rows = np.flatnonzero(pred > 1)
problems = [make_problem(model, X[i]) for i in rows]   # target: one notch better

sparse = run_sparsity_batch(problems, SolverConfig(), SparsityConfig())
dense = run_gradient_descent_batch(problems, SolverConfig(), SparsityConfig())

print(f"{'transition':<12}{'n':>6}{'L0 sparse':>11}{'L0 GD':>8}{'L2 sparse':>11}{'L2 GD':>9}{'p(L2)':>10}")
for c in (4, 3, 2):
    pick = [j for j, i in enumerate(rows) if pred[i] == c and sparse[j].solved and dense[j].solved]
    s_l0 = np.array([sparse[j].chosen.l0 for j in pick], float)
    g_l0 = np.array([dense[j].chosen.l0 for j in pick], float)
    s_l2 = np.array([sparse[j].chosen.l2 for j in pick])
    g_l2 = np.array([dense[j].chosen.l2 for j in pick])
    p = paired_t_one_sided(g_l2, s_l2, "greater").p_value
    print(f"{c} to {c - 1:<7}{len(pick):>6}{s_l0.mean():>11.3f}{g_l0.mean():>8.2f}"
          f"{s_l2.mean():>11.4f}{g_l2.mean():>9.4f}{p:>10.2g}")

print("\nGradient descent nudges all five coordinates, noise included.  The sparsity")
print("algorithm keeps only the largest relative changes, usually a single one, and")
print("still reaches the target rating with a slightly smaller overall move.")
