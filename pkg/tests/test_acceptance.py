"""Acceptance gate: one test per criterion, at pinned tolerances.

Each test runs its preset (heavy solves are computed once and shared
through the preset cache) and prints a single PASS/FAIL line; run with
``pytest -s tests/test_acceptance.py`` to see the lines as they complete.
"""

import pytest

from voract.presets import run_preset

CRITERIA = {
    1: ("example1-c1",
        "two-site crossing: one nondegenerate non-effective shock, refinement-stable, <30s"),
    2: ("example1-c02",
        "two-site waiting: t0=0.2231+/-0.02, action 0.72+/-0.01, within 3% of DP oracle, <2min"),
    3: ("example2",
        "triangle scenario: axis confinement <=1e-4, degenerate arrival"),
    4: ("energy-constancy",
        "interval-energy std away from shocks <= max(1e-3, 5dt) on every preset"),
    5: ("jump-identity",
        "effective-shock velocity-jump identity within max(1e-2, 10dt); jump_sq >= 0.99"),
    6: ("regularity-bound",
        "second differences within h'(s)sqrt(s) + 20dt away from nondegenerate shocks"),
    7: ("minnorm-oracle",
        "200 random hull projections match the grid oracle within 1e-6"),
    8: ("slope-oracle",
        "sampled slope in [|grad|-5e-3, |grad|+1e-6] on 500 probes per point set"),
    9: ("zones",
        "balancedness: true for the two-site set and the 3x3 grid, witnessed false for the triangle"),
    10: ("stability",
         "site-set convergence: monotone actions, final gap <= 1e-2; vanishing endpoints within 10%"),
    11: ("mag-exchange",
         "two-particle exchange: effective shock, energy and projected momentum conserved, window certified"),
    12: ("ratio-corner",
         "corner polytope pair: empirical ratio sqrt(2)+/-0.05, stable under sample doubling"),
}


def _run(criterion: int):
    preset, description = CRITERIA[criterion]
    outcome = run_preset(preset)
    status = "PASS" if outcome.passed else "FAIL"
    print(f"\n[{status}] criterion {criterion}: {description} "
          f"(preset {preset}, {outcome.runtime:.1f}s)")
    for check in outcome.checks:
        mark = "ok" if check.passed else "FAILED"
        val = "" if check.value is None else f" value={check.value:.6g}"
        print(f"    {mark:>6}  {check.name}{val}  [{check.tolerance}]")
    assert outcome.converged, f"{preset}: solver did not converge"
    failed = [c.name for c in outcome.checks if not c.passed]
    assert not failed, f"{preset}: failed checks: {failed}"


@pytest.mark.parametrize("criterion", sorted(CRITERIA), ids=lambda c: f"criterion-{c:02d}")
def test_acceptance(criterion):
    _run(criterion)
