import math

import numpy as np
import pytest

from obstaclelab.heleshaw import (
    GraphViolation,
    annulus_mask,
    bisect_time,
    cleaning_audit,
    contact_inclusion,
    detect_singular_times,
    heleshaw_family,
    pinch_problem,
    solve_times,
    times_after,
    uniform_monotonicity_constant,
)
from obstaclelab.obstacle import GridField, MonotoneFamily


def _bowl(n=64):
    return GridField.on_box([-1, -1], [1, 1], n).sample(lambda x: 0.5 * (x[..., 0] ** 2 + x[..., 1] ** 2))


def test_positive_family_has_no_singular_points():
    g = GridField.on_box([-1, -1], [1, 1], 64)
    fam = MonotoneFamily([0.0, 1.0], [g.like(1.0), g.like(2.0)])
    st = detect_singular_times(fam, kappa=0.0)
    assert st.records == [] and st.pi_t() == []


def test_frozen_family_is_a_graph_violation():
    u = _bowl()
    fam = MonotoneFamily([0.0, 1.0], [u, u])
    with pytest.raises(GraphViolation):
        detect_singular_times(fam, kappa=0.0)
    st = detect_singular_times(fam, kappa=0.0, strict=False)
    assert st.violations


def test_frozen_family_has_zero_monotonicity_constant():
    u = _bowl()
    fam = MonotoneFamily([0.0, 1.0], [u, u])
    K = annulus_mask(u, 0.3, 0.5)
    assert uniform_monotonicity_constant(fam, K) == 0.0
    with pytest.raises(ValueError):
        uniform_monotonicity_constant(fam, annulus_mask(u, 0.0, 0.5))


def test_cleaning_vacuous_and_injected():
    g = GridField.on_box([-1, -1], [1, 1], 32)
    pos = MonotoneFamily([0.0, 0.5], [g.like(0.0), g.like(1.0)])
    audit = cleaning_audit(pos, (0, 0), 0.0, 2)
    assert audit.C0 == 0 and audit.passed
    vals = np.ones(g.shape)
    vals[g.index_of((0.25, 0.0))] = 0.0
    bad = MonotoneFamily([0.0, 0.5], [g.like(0.0), g.with_values(vals)])
    audit = cleaning_audit(bad, (0, 0), 0.0, 2, C0=1.0)
    assert audit.violations and not audit.passed


def test_pinch_family_small_grid():
    mk = lambda t: pinch_problem(t, 32)
    t0, _ = bisect_time(mk, lambda u: u.values[u.index_of((0, 0))] <= 0, 0.15, 0.35, 1e-5)
    ts = times_after(t0, 1e-3, 0.05, 6)
    fam = solve_times([t0 - 0.01] + ts, mk)
    assert contact_inclusion(fam)
    st = detect_singular_times(fam, kappa=0.0, radii_cells=(4, 8), strict=False)
    assert not st.violations
    near = [r.t for r in st.records if math.hypot(*r.x) < 0.1]
    assert near and min(abs(t - t0) for t in near) <= 0.011
    audit = cleaning_audit(fam, (0, 0), t0, 2)
    assert math.isfinite(audit.C0)


def test_heleshaw_family_positive_constant():
    fam = heleshaw_family([0.05, 0.1], n_cells=64)
    K = annulus_mask(fam.fields[0], 0.25, 0.3)
    assert uniform_monotonicity_constant(fam, K) > 0
    assert contact_inclusion(fam)
