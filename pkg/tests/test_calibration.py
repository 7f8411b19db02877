import dataclasses

import pytest

from ferrosim.calibration import VC_TOL, CalibrationError, calibrate_nls, simulated_vc

ANCHOR_TARGETS = [(1.1e4, 2.5), (5.5e5, 4.0)]


def test_anchor_targets(stack_a):
    res = calibrate_nls(ANCHOR_TARGETS, stack_a)
    assert max(abs(r) for r in res.residuals) <= VC_TOL
    st = dataclasses.replace(stack_a, nls=res.nls)
    for slew, vc in ANCHOR_TARGETS:
        assert simulated_vc(st, slew) == pytest.approx(vc, abs=VC_TOL)


def test_round_trip_from_known_params(stack_a):
    truth = dataclasses.replace(stack_a, nls=dataclasses.replace(stack_a.nls, tau0=2e-8,
                                                                   ea_mean=1.1e7))
    targets = [(s, simulated_vc(truth, s)) for s in (2e4, 1e6)]
    res = calibrate_nls(targets, stack_a)
    st = dataclasses.replace(stack_a, nls=res.nls)
    for slew, vc in targets:
        assert simulated_vc(st, slew) == pytest.approx(vc, abs=VC_TOL)


def test_single_target_fits_ea_only(stack_a):
    res = calibrate_nls([(1.1e4, 2.8)], stack_a)
    assert res.nls.tau0 == stack_a.nls.tau0
    assert res.nls.ea_mean > stack_a.nls.ea_mean
    assert abs(res.residuals[0]) <= VC_TOL


def test_bad_targets(stack_a):
    with pytest.raises(ValueError):
        calibrate_nls([], stack_a)
    with pytest.raises(ValueError):
        calibrate_nls([(1e4, 2.5), (1e4, 3.0)], stack_a)
    with pytest.raises(ValueError):
        calibrate_nls([(-1e4, 2.5)], stack_a)


def test_unreachable_target_reports_residuals(stack_a):
    # a peak above the sweep amplitude cannot be produced
    with pytest.raises(CalibrationError) as exc:
        calibrate_nls([(1.1e4, 7.0)], stack_a, max_evals=4)
    assert exc.value.residuals
