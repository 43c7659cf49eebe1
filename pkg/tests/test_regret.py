import numpy as np
import pytest

from dpre.dynamic_stage import regret_bound_drp, regret_bound_exp3
from dpre.regret import (
    ASSIGNMENT_KINDS,
    RegretCase,
    default_cases,
    evaluate_case,
    make_assignment,
    results_to_csv,
    run_batch,
)


def test_assignments_in_unit_interval():
    for kind in ASSIGNMENT_KINDS:
        r = make_assignment(kind, 4, 300, seed=3)
        assert r.shape == (300, 4)
        assert (r >= 0).all() and (r <= 1).all()


def test_assignment_deterministic():
    a = make_assignment("switching", 4, 100, seed=5)
    b = make_assignment("switching", 4, 100, seed=5)
    assert (a == b).all()


def test_run_batch_reproducible():
    r = make_assignment("iid", 4, 200, seed=2)
    a = run_batch(r, 0.3, n_seeds=8, seed=9)
    b = run_batch(r, 0.3, n_seeds=8, seed=9)
    assert (a == b).all()


def test_drp_learns_constant_best_arm():
    rewards = np.zeros((400, 4))
    rewards[:, 2] = 1.0
    gains = run_batch(rewards, 0.3, n_seeds=20, seed=0)
    # uniform play earns ~100; learning should at least double that
    assert gains.mean() > 200


def test_exp3_only_updates_chosen_arm():
    rewards = np.zeros((300, 4))
    rewards[:, 1] = 1.0
    drp = run_batch(rewards, 0.3, 30, seed=1, algo="drp")
    exp3 = run_batch(rewards, 0.3, 30, seed=1, algo="exp3")
    # on a single-good-arm table, the informed estimates cannot hurt
    assert drp.mean() >= exp3.mean() - 5.0


def test_evaluate_case_respects_bound():
    case = RegretCase(seed=0, n_arms=4, n_trials=300, gamma=0.3, kind="best_constant")
    for res in evaluate_case(case, n_seeds=30):
        assert res.regret <= res.bound
        assert res.gain_best >= res.gain - 1e-9


def test_default_cases_cover_grid():
    cases = default_cases()
    assert len(cases) >= 100
    assert {c.n_arms for c in cases} == {2, 4, 8}
    assert {c.n_trials for c in cases} == {200, 1000}


def test_results_csv_schema(tmp_path):
    case = RegretCase(seed=1, n_arms=2, n_trials=100, gamma=0.5, kind="iid")
    results = evaluate_case(case, n_seeds=5)
    path = tmp_path / "regret.csv"
    results_to_csv(results, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "seed,K,S,gamma,algo,G_alg,G_max,regret,bound"
    assert len(lines) == 3
