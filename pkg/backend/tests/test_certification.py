import math

import pytest

from app.models.enums import Player, ReportStatus
from app.services.certification import CHECKS, certify_assumption2
from app.services.strategy import soner_params


def test_separated_game_certifies(bundled):
    problem, spec = bundled("decoupled_pursuit")
    sp = soner_params(problem, Player.X, spec.verify.t_star)
    report = certify_assumption2(problem, trials=100, sp=sp, dt=0.01, horizon=1.0, delta=0.05, seed=3)

    assert report.status == ReportStatus.PASS
    assert [c.name for c in report.checks] == list(CHECKS)
    for name in CHECKS:
        check = report.check(name)
        assert check.certified
        assert check.trials == 100
        assert check.passed == 100, f"{name}: worst margin {check.worst_margin}"

    lines = report.to_key_values("certification")
    assert any(line.startswith("certification.max_delay_x=") for line in lines)
    assert report.max_delay_x >= 0.0


def test_coupled_cost_is_not_certified(bundled):
    problem, _ = bundled("coupled_ab")
    sp = soner_params(problem, Player.X, 0.5)
    report = certify_assumption2(problem, trials=20, sp=sp, dt=0.025, horizon=1.0, delta=0.05, seed=1)

    assert report.status == ReportStatus.WARN
    running = report.check("running_cost")
    assert not running.certified
    assert running.passed == 0
    assert running.note
    assert report.check("prefix").passed == 20


def test_certification_is_reproducible(bundled):
    problem, _ = bundled("decoupled_pursuit")
    sp = soner_params(problem, Player.X, 0.5)
    first = certify_assumption2(problem, trials=10, sp=sp, dt=0.02, horizon=0.5, seed=9)
    second = certify_assumption2(problem, trials=10, sp=sp, dt=0.02, horizon=0.5, seed=9)
    assert first.to_key_values("certification") == second.to_key_values("certification")
    assert "certification.status=PASS" in first.to_key_values("certification")


def test_unknown_check_name(bundled):
    problem, _ = bundled("decoupled_pursuit")
    report = certify_assumption2(problem, trials=1, sp=soner_params(problem, Player.X, 0.5), dt=0.05, horizon=0.2)
    with pytest.raises(KeyError):
        report.check("missing")


def test_identical_starts_pass_with_zero_deviation(bundled):
    problem, _ = bundled("decoupled_pursuit")
    sp = soner_params(problem, Player.X, 0.5)
    report = certify_assumption2(problem, trials=10, sp=sp, dt=0.02, horizon=0.5, delta=0.0)
    assert report.status == ReportStatus.PASS
    assert report.max_delay_x == report.max_delay_y == 0.0
    for name in ("deviation_x", "deviation_y"):
        # envelopes reduce to the 2 dt M slack
        assert report.check(name).worst_margin == pytest.approx(2 * 0.02 * problem.dynamics.bound_m)


def test_deviation_envelope_leaves_out_the_inserted_delay(bundled):
    problem, spec = bundled("decoupled_pursuit")
    sp = soner_params(problem, Player.X, spec.verify.t_star)
    dt, horizon, delta = 0.01, 1.0, 0.05
    report = certify_assumption2(problem, trials=100, sp=sp, dt=dt, horizon=horizon, delta=delta, seed=3)

    # the envelope is exp(L T) |x1 - x2| + 2 dt M whatever the tuning inserted
    slack = 2 * dt * problem.dynamics.bound_m
    widest = math.exp(problem.dynamics.lipschitz_l * horizon) * delta
    for name in ("deviation_x", "deviation_y"):
        assert report.check(name).worst_margin <= widest + slack
    assert report.check("deviation_x").passed == 100
