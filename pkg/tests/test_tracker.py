import json
import math

import numpy as np
import pytest

from rdroot.ba_core import ba_fixed_point, encoder_from_marginal
from rdroot.oracles import binary_hamming_marginal
from rdroot.problem import SupportSet, berger_problem, fig3_problem, hamming_problem
from rdroot.tracker import (
    CLUSTER_VANISHING,
    EVENT_REFRESH,
    NONE,
    SUPPORT_SWITCHING,
    TrackConfig,
    TrackingError,
    TrackTrace,
    ba_independent,
    ba_reverse_anneal,
    classify_bifurcation,
    extrapolate,
    growth_factors,
    handle_bifurcation,
    locate_sweep_events,
    root_track,
    spectra,
    track_to_bifurcation,
)

P = 0.3
BETA_C = math.log(7 / 3)
HAMMING = hamming_problem(P)


def oracle(beta):
    return binary_hamming_marginal(P, beta)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(step=0.1),
        dict(step=-0.1, delta=0.0),
        dict(step=-0.1, delta=1.0),
        dict(step=-0.1, order=0),
        dict(step=-0.1, beta_min=5.0),
        dict(step=-0.1, log_grid=True),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrackConfig(beta0=4.0, **kwargs)


def test_grid_beta_linear_and_log():
    lin = TrackConfig(beta0=4.0, step=-0.5)
    assert lin.grid_beta(4.0, 3) == 2.5
    log = TrackConfig(beta0=4.0, step=-1.0, beta_min=0.5, log_grid=True)
    assert log.grid_beta(4.0, 2) == 1.0


def test_segment_follows_oracle_and_stops_at_threshold():
    config = TrackConfig(beta0=8.0, step=-0.05, order=3, delta=0.01)
    seg = track_to_bifurcation(HAMMING, oracle(8.0), 8.0, config)
    assert seg.stop == "threshold"
    assert min(seg.last_r) <= config.delta
    assert all(pt.r_tilde.min() > config.delta for pt in seg.points)
    err = max(np.max(np.abs(pt.r_tilde - oracle(pt.beta))) for pt in seg.points)
    assert err < 5e-4  # linear grid; the error peaks next to beta_c
    # the stop lies within one step below the true bifurcation
    assert seg.points[-1].beta >= BETA_C - 1e-12
    assert seg.last_beta <= BETA_C + 0.05


def test_segment_stops_at_beta_min_exactly():
    config = TrackConfig(beta0=8.0, step=-0.3, order=2, beta_min=6.0)
    seg = track_to_bifurcation(HAMMING, oracle(8.0), 8.0, config)
    assert seg.stop == "beta_min"
    assert seg.points[-1].beta == 6.0
    np.testing.assert_allclose(seg.points[-1].r_tilde, oracle(6.0), atol=1e-4)


def test_unnormalised_iterates_are_not_renormalised():
    config = TrackConfig(beta0=8.0, step=-0.5, order=1, beta_min=4.0)
    seg = track_to_bifurcation(HAMMING, oracle(8.0), 8.0, config)
    # the Hamming derivatives sum to zero, so the sum is preserved exactly only up to rounding
    sums = [pt.r_tilde.sum() for pt in seg.points]
    np.testing.assert_allclose(sums, 1.0, atol=1e-12)


def test_handle_bifurcation_reduces_support():
    config = TrackConfig(beta0=8.0, step=-0.05, delta=0.01)
    last = np.array([0.004, 0.996])
    out = handle_bifurcation(HAMMING, SupportSet.full(2), last, 0.84, config, beta_previous=0.89)
    assert out.support.indices == (1,)
    assert out.terminal
    assert out.record.report is not None
    assert out.record.report.classification == CLUSTER_VANISHING
    assert abs(out.record.report.beta - BETA_C) < 1e-8


def test_handle_bifurcation_raises_when_ba_stalls():
    prob = fig3_problem()
    config = TrackConfig(beta0=8.0, step=-0.05, ba_max_iter=1, ba_tol=1e-300)
    last = np.array([0.005, 0.4, 0.3, 0.295])
    with pytest.raises(TrackingError):
        handle_bifurcation(prob, SupportSet.full(4), last, 3.0, config)


def test_root_track_hamming_end_to_end():
    config = TrackConfig(beta0=8.0, step=-0.02, order=3, delta=0.01, beta_min=0.3, ba_tol=1e-14)
    trace = root_track(HAMMING, config)
    assert len(trace.bifurcations) == 1
    rec = trace.bifurcations[0]
    assert abs(rec.report.beta - BETA_C) < 1e-8
    assert trace.ba_invocations == 2
    assert trace.supports()[0] == (0, 1) and trace.supports()[-1] == (1,)
    marg = trace.marginals()
    assert np.all(marg >= 0)
    np.testing.assert_allclose(marg[-1], [0.0, 1.0])
    heur = [i for i in trace.heuristic_indices() if i > 0]
    assert len(heur) == 1
    for i, pt in enumerate(trace.points):
        if i not in heur:
            assert np.max(np.abs(pt.embedded() - oracle(pt.beta))) < 1e-4


def test_root_track_fig3_three_vanishing_clusters():
    config = TrackConfig(beta0=20.0, step=-0.1, order=4, beta_min=0.5)
    trace = root_track(fig3_problem(), config)
    labels = [rec.report.classification for rec in trace.bifurcations]
    assert labels == [CLUSTER_VANISHING] * 3
    sizes = [len(s) for s in trace.supports()]
    assert sizes == sorted(sizes, reverse=True)
    assert sizes[-1] == 1
    assert trace.points[-1].event == EVENT_REFRESH


def test_trace_json_round_trip():
    config = TrackConfig(beta0=4.0, step=-0.25, order=2, beta_min=0.5)
    trace = root_track(HAMMING, config)
    data = json.loads(json.dumps(trace.to_json({"command": "test"})))
    back = TrackTrace.from_json(data)
    np.testing.assert_array_equal(back.betas, trace.betas)
    np.testing.assert_array_equal(back.marginals(), trace.marginals())
    assert back.supports() == trace.supports()
    assert [b.to_dict() for b in back.bifurcations] == [b.to_dict() for b in trace.bifurcations]
    assert back.ba_iterations == trace.ba_iterations


def test_trace_csv_columns():
    config = TrackConfig(beta0=4.0, step=-0.25, order=2, beta_min=2.0, ba_tol=1e-14)
    text = root_track(HAMMING, config).to_csv({"command": "test"})
    rows = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert rows[0].split(",") == ["beta", "r1", "r2", "D", "R", "min_marginal", "event"]
    beta, r1 = (float(v) for v in rows[1].split(",")[:2])
    assert beta == 4.0
    assert abs(r1 - oracle(4.0)[0]) < 1e-10


def test_extrapolate_between_grid_points():
    config = TrackConfig(beta0=8.0, step=-0.1, order=4, beta_min=2.0, ba_tol=1e-14)
    trace = root_track(HAMMING, config)
    for beta in [7.93, 5.55, 2.01]:
        np.testing.assert_allclose(extrapolate(trace, beta), oracle(beta), atol=1e-6)
    with pytest.raises(ValueError):
        extrapolate(trace, 9.0)


def test_growth_factors_are_one_on_support(rng):
    prob = fig3_problem()
    r = ba_fixed_point(prob, np.full(4, 0.25), 6.0, tol=1e-14).marginal
    np.testing.assert_allclose(growth_factors(prob, r, 6.0), 1.0, atol=1e-10)


def test_classification_flowchart():
    prob = berger_problem()
    beta = 3.0
    r = ba_fixed_point(prob, np.full(3, 1 / 3), beta, tol=1e-14).marginal
    q = encoder_from_marginal(prob, r, beta)
    on_support = (0, 1)  # the third letter has decayed to ~1e-14
    assert classify_bifurcation(prob, q, r, beta, support=on_support).classification == NONE
    label = classify_bifurcation(prob, q, r, beta, eig_threshold=10.0, support=on_support).classification
    assert label == SUPPORT_SWITCHING
    small = r.copy()
    small[np.argmin(small)] = 1e-3
    assert classify_bifurcation(prob, q, small, beta, eig_threshold=10.0).classification == CLUSTER_VANISHING


def test_reverse_anneal_requires_decreasing_grid():
    with pytest.raises(ValueError):
        ba_reverse_anneal(HAMMING, [1.0, 2.0])


def test_anneal_and_independent_agree_off_bifurcation():
    betas = [6.0, 4.0, 2.0]
    a = ba_reverse_anneal(HAMMING, betas, tol=1e-13)
    b = ba_independent(HAMMING, betas, tol=1e-13)
    for x, y, beta in zip(a, b, betas):
        np.testing.assert_allclose(x.marginal, oracle(beta), atol=1e-10)
        np.testing.assert_allclose(y.marginal, oracle(beta), atol=1e-10)


def test_spectra_shapes():
    prob = berger_problem()
    res = ba_fixed_point(prob, np.full(3, 1 / 3), 2.5, tol=1e-13)
    out = spectra(prob, res.encoder, res.marginal, 2.5)
    assert out["encoder"].shape == (6,)
    assert len(out["marginal"]) == len(out["support"])
    assert np.all(np.diff(out["encoder"]) >= 0)


def test_sweep_events_on_hamming():
    betas = np.linspace(0.5, 2.0, 16)
    results = ba_independent(HAMMING, betas, tol=1e-13, max_iter=100_000)
    events = locate_sweep_events(HAMMING, betas, results)
    assert len(events) == 1
    assert abs(events[0].beta - BETA_C) < 1e-8
    assert events[0].report.classification == CLUSTER_VANISHING
