"""Acceptance criteria, one test per criterion (criterion 1 in sub-checks).

Each test records a PASS/FAIL line; the lines are printed together at the
end of the run (see ``conftest.pytest_terminal_summary``) and also as the
tests go when run with ``-s``.  Run on its own with::

    pytest tests/test_acceptance.py
"""

import math

import numpy as np
import pytest
from scipy import integrate

from counterfact import reports
from counterfact.cli import main as cli_main
from counterfact.evaluation import lambda_table, match_rate, mean_match_rate, paired_t_one_sided, real_change_stats
from counterfact.export import read_results
from counterfact.ingest import DEFAULT_SCALE, load_table, ordinal_to_rating, rating_to_ordinal
from counterfact.model import (
    MlpModel, TrainConfig, cross_entropy, forward_probs, input_gradient, load_model, models_equal, one_hot,
    predict_class, save_model, train,
)
from counterfact.solver import SolverConfig, make_problem
from counterfact.sparsity import (
    SparsityConfig, build_candidates, relative_change, run_gradient_descent_batch, run_sparsity,
    run_sparsity_batch,
)
from counterfact.synth import SynthConfig, generate

RESULTS = []


def record(criterion, ok, detail):
    line = f"[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


FOURTH_QUADRANT_POINT = np.array([0.6019, -0.4742, 0.0827, -0.0595, 0.0588])


# criterion 1 ---------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def synthetic_run():
    X, y = generate(SynthConfig(n_points=4000, seed=7))
    perm = np.random.default_rng(0).permutation(len(y))
    tr, te = perm[:3200], perm[3200:]
    model = train(TrainConfig(hidden_layer_sizes=(64, 64), learning_rate=0.05, epochs=100, seed=1), X[tr], y[tr])
    accuracy = float(np.mean(predict_class(model, X[te]) == y[te]))

    pred = predict_class(model, X)
    idx = np.flatnonzero(pred > 1)
    problems = [make_problem(model, X[i]) for i in idx]
    sp = run_sparsity_batch(problems, SolverConfig(), SparsityConfig())
    gd = run_gradient_descent_batch(problems, SolverConfig(), SparsityConfig())
    groups = {}
    for c in (2, 3, 4):
        sel = [j for j, i in enumerate(idx) if pred[i] == c and sp[j].solved and gd[j].solved]
        groups[c] = {
            "n": len(sel),
            "sp_l0": np.array([sp[j].chosen.l0 for j in sel], float),
            "gd_l0": np.array([gd[j].chosen.l0 for j in sel], float),
            "sp_l2": np.array([sp[j].chosen.l2 for j in sel]),
            "gd_l2": np.array([gd[j].chosen.l2 for j in sel]),
        }
    return {"model": model, "accuracy": accuracy, "groups": groups}


def test_criterion_1a_heldout_accuracy(synthetic_run):
    acc = synthetic_run["accuracy"]
    ok = record("1a", acc >= 0.98, f"held-out accuracy {acc:.4f} (required >= 0.98)")
    assert ok


def test_criterion_1b_gd_l0_is_five(synthetic_run):
    means = {c: g["gd_l0"].mean() for c, g in synthetic_run["groups"].items()}
    ok = all(m == 5.0 for m in means.values())
    record("1b", ok, "mean GD L0 per transition " + ", ".join(f"{c}->{c - 1}: {m:.5f}" for c, m in means.items()))
    assert ok


def test_criterion_1c_sparsity_l0_range(synthetic_run):
    means = {c: g["sp_l0"].mean() for c, g in synthetic_run["groups"].items()}
    ok = all(1.0 <= m <= 1.5 for m in means.values())
    record("1c", ok, "mean sparsity L0 " + ", ".join(f"{c}->{c - 1}: {m:.5f}" for c, m in means.items())
           + " (required in [1.0, 1.5])")
    assert ok


def test_criterion_1d_l0_test(synthetic_run):
    ps = {c: paired_t_one_sided(g["sp_l0"], g["gd_l0"], "less").p_value for c, g in synthetic_run["groups"].items()}
    ok = all(p < 0.01 for p in ps.values())
    record("1d", ok, "L0 test (sparsity - GD < 0) p " + ", ".join(f"{c}->{c - 1}: {p:.2g}" for c, p in ps.items()))
    assert ok


def test_criterion_1e_l2_test(synthetic_run):
    parts, ok = [], True
    for c, g in synthetic_run["groups"].items():
        t = paired_t_one_sided(g["gd_l2"], g["sp_l2"], "greater")
        ok &= t.mean_diff > 0 and t.p_value < 0.05
        parts.append(f"{c}->{c - 1}: diff {t.mean_diff:.5f} p {t.p_value:.2g}")
    record("1e", ok, "L2 difference (GD - sparsity) " + ", ".join(parts))
    assert ok


# criterion 2 ----------------------------------------------------------------------------------


def test_criterion_2_fourth_quadrant_point(synthetic_run):
    model = synthetic_run["model"]
    p = make_problem(model, FOURTH_QUADRANT_POINT)
    r = run_sparsity(p, SolverConfig(), SparsityConfig())
    sup = set(np.flatnonzero(np.abs(r.chosen.delta) > 1e-8)) if r.solved else set()
    ok = (p.original_ordinal == 4 and r.solved and r.chosen.predicted_ordinal == 3
          and r.chosen.l0 == 1 and sup <= {0, 1})
    record(2, ok, f"start class {p.original_ordinal}, outcome {r.outcome}, "
                  f"class after {r.chosen.predicted_ordinal if r.solved else '-'}, "
                  f"L0 {r.chosen.l0 if r.solved else '-'}, support {sorted(f'x{j + 1}' for j in sup)}")
    assert ok


# criterion 3 ---------------------------------------------------------------------------------


def test_criterion_3_oracle_equivalence():
    a = 200.0
    W = np.array([[a, 0.0], [0.3 * a, 0.0]])
    model = MlpModel(((W, np.zeros(2)),))
    x = np.array([-1.2, 0.5])
    grid = np.round(np.arange(-2000, 2001) * 0.001, 3)
    best = math.inf
    for j in range(2):
        for d in grid:
            e = np.zeros(2)
            e[j] = d
            if predict_class(model, x + e) == 1:
                best = min(best, abs(d))
    r = run_sparsity(make_problem(model, x), SolverConfig(), SparsityConfig())
    found = float(np.abs(r.chosen.delta).max())
    rel = abs(found - best) / best
    ok = r.chosen.l0 == 1 and rel <= 0.05
    record(3, ok, f"sparsity |delta| {found:.4f} vs grid oracle {best:.3f} (relative gap {rel:.2%}, limit 5%)")
    assert ok


# criterion 4 ---------------------------------------------------------------------------------


def test_criterion_4_gradient_vs_finite_differences():
    rng = np.random.default_rng(4)
    worst = 0.0
    for case in range(100):
        n_in, n_cls = int(rng.integers(2, 8)), int(rng.integers(2, 6))
        hidden = tuple(int(h) for h in rng.integers(3, 10, size=int(rng.integers(1, 3))))
        sizes = (n_in, *hidden, n_cls)
        act = "tanh" if case % 2 else "relu"
        model = MlpModel(tuple((rng.normal(0, 1 / np.sqrt(a), (a, b)), rng.normal(0, 0.2, b))
                               for a, b in zip(sizes[:-1], sizes[1:])), hidden_activation=act)
        x = rng.normal(size=n_in)
        t = rng.dirichlet(np.ones(n_cls)) if case % 3 == 0 else one_hot(int(rng.integers(1, n_cls + 1)), n_cls)
        g = input_gradient(model, x, t)
        h = 1e-5
        for i in range(n_in):
            e = np.zeros(n_in)
            e[i] = h
            fd = (cross_entropy(forward_probs(model, x + e), t) - cross_entropy(forward_probs(model, x - e), t)) / (2 * h)
            err = abs(g[i] - fd) / max(abs(g[i]), abs(fd), 1e-8)
            worst = max(worst, err)
    ok = worst < 1e-4
    record(4, ok, f"worst relative error over 100 random cases {worst:.2e} (limit 1e-4)")
    assert ok


# criterion 5 ---------------------------------------------------------------------------------


def _t_sf_quad(t, df):
    c = math.exp(math.lgamma((df + 1) / 2) - math.lgamma(df / 2)) / math.sqrt(df * math.pi)
    return integrate.quad(lambda u: c * (1 + u * u / df) ** (-(df + 1) / 2), t, np.inf,
                          epsabs=1e-13, epsrel=1e-12)[0]


def test_criterion_5_property_suites(synthetic_run, tmp_path):
    model = synthetic_run["model"]
    rng = np.random.default_rng(5)
    checks = {}

    X, _ = generate(SynthConfig(n_points=300, seed=99))
    problems = []
    for x in X:
        if predict_class(model, x) > 1:
            w = (rng.random(5) < 0.7).astype(float)
            w[rng.integers(0, 2)] = 1.0
            problems.append(make_problem(model, x, w))
        if len(problems) == 40:
            break
    results = run_sparsity_batch(problems, SolverConfig(), SparsityConfig(k=4))
    mask_ok, nest_ok, sound_ok = True, True, True
    for p, r in zip(problems, results):
        for rnd in r.trace:
            mask_ok &= bool(np.all(rnd.dense_delta[p.w == 0] == 0))
            ratios = relative_change(rnd.dense_delta * p.unit_scale, p.x_reference)
            cands = build_candidates(rnd.dense_delta, ratios, 4)
            sups = [set(np.flatnonzero(c)) for c in cands]
            nest_ok &= all(a <= b for a, b in zip(sups, sups[1:]))
            nest_ok &= all(len(s) <= i for i, s in enumerate(sups, start=1))
        if r.solved:
            mask_ok &= bool(np.all(r.chosen.delta[p.w == 0] == 0))
            sound_ok &= predict_class(model, p.x + p.w * r.chosen.delta) <= p.target_ordinal
    checks["mask respect"] = mask_ok
    checks["candidate nesting"] = nest_ok
    checks["qualification soundness"] = sound_ok and any(r.solved for r in results)

    a = 0.05
    lp = make_problem(MlpModel(((np.array([[a, 0.0], [0.0, 0.0]]), np.zeros(2)),)), np.array([-1.0, 0.3]))
    ladder = (0.1, 5.0, 10.0, 50.0)
    cfg = SolverConfig(step_size=0.05)
    single = [run_sparsity(lp, cfg, SparsityConfig(lambda_ladder=(v,))).solved for v in ladder]
    full = run_sparsity(lp, cfg, SparsityConfig(lambda_ladder=ladder))
    checks["lambda-ladder minimality"] = (single == [False, False, False, True] and full.lambda_used == 50.0
                                         and len(full.trace) == 4)

    worst = 0.0
    for df in (2, 5, 30):
        for _ in range(5):
            d = rng.normal(0.3, 1.0, size=df + 1)
            r = paired_t_one_sided(d, np.zeros_like(d), "greater")
            worst = max(worst, abs(r.p_value - _t_sf_quad(r.statistic, df)))
    checks["t-test vs integration"] = worst < 1e-6

    checks["rating-scale round trip"] = all(
        rating_to_ordinal(DEFAULT_SCALE, ordinal_to_rating(DEFAULT_SCALE, k)) == k for k in range(1, 23))

    save_model(model, tmp_path / "m.json")
    checks["model serialization round trip"] = models_equal(load_model(tmp_path / "m.json"), model)

    Xb, yb = generate(SynthConfig(n_points=100_000, seed=31))
    x1 = Xb[yb == 1, 0]
    checks["synth distribution"] = (abs(x1.mean() - 1) < 0.02 and abs(x1.var() - 0.3) < 0.02
                                    and all(abs(np.mean(yb == c) - 0.25) < 0.01 for c in range(1, 5)))

    ok = all(checks.values())
    record(5, ok, "; ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert ok


# criterion 6 ---------------------------------------------------------------------------------


def test_criterion_6_statement_fixture(tmp_path, capsys):
    d = tmp_path
    steps = [
        ["fixture", "--entities", "120", "--seed", "0", "--out", str(d / "panel")],
        ["train", "--data", str(d / "panel/panel.csv"), "--scale", str(d / "panel/scale.txt"),
         "--hidden", "32", "--epochs", "60", "--out", str(d / "model.json")],
    ]
    common = ["--model", str(d / "model.json"), "--data", str(d / "panel/panel.csv"),
              "--mask", str(d / "panel/mask.txt"), "--period", "2020Q1"]
    steps += [
        ["batch", *common, "--out", str(d / "sp.csv")],
        ["batch", *common, "--method", "gd", "--out", str(d / "gd.csv")],
        ["report", "--results", str(d / "sp.csv"), "--gd-results", str(d / "gd.csv"),
         "--data", str(d / "panel/panel.csv"), "--mask", str(d / "panel/mask.txt"),
         "--scale", str(d / "panel/scale.txt"), "--out", str(d / "rep")],
    ]
    codes = [cli_main(s) for s in steps]
    capsys.readouterr()
    checks = {"pipeline exit codes": codes == [0] * len(steps)}

    ds = load_table(d / "panel/panel.csv", scale=load_model(d / "model.json").rating_scale)
    mask_names = {l.strip() for l in (d / "panel/mask.txt").read_text().splitlines() if l and not l.startswith("#")}
    checks["300 features / 86 modifiable"] = ds.n_features == 300 and ds.n_features - len(mask_names) == 86
    checks["four report schemas"] = all((d / "rep" / f).stat().st_size > 0 for f in reports.REPORT_FILES.values()) \
        if codes == [0] * len(steps) else False

    pairs = [({"cash"}, {"cash", "debt"}), ({"cash", "inventory"}, {"inventory"}),
             ({"a", "b", "c", "d"}, {"a", "b", "c"}), ({"p", "q", "r", "s"}, {"q", "r", "s", "t"})]
    checks["match rate hand count (0.75)"] = mean_match_rate(pairs) == 0.75 and match_rate({"a", "b"}, {"a"}) == 0.5

    rc = real_change_stats([100.0, 0.0, 12.5, -3.0, 7.0, 40.0], [103.0, 4.0, 12.5, -3.0, 7.01, 40.0],
                           [1, 1, 1, 0, 0, 1])
    checks["real change hand arithmetic"] = (rc.l0_full, rc.l0_relevant, rc.l2_relevant) == (3, 2, 5.0) \
        and rc.l2_full == math.sqrt(25.0 + (7.01 - 7.0) ** 2)

    if (d / "sp.csv").exists():
        sp = read_results(d / "sp.csv")
        table = lambda_table(sp, SparsityConfig().lambda_ladder)
        checks["lambda table sums = solved"] = table.total == sum(r.solved for r in sp) and table.total > 0
    else:
        checks["lambda table sums = solved"] = False

    ok = all(checks.values())
    record(6, ok, "; ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
