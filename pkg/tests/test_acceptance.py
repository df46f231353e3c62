"""Acceptance criteria, one test per check.

Each check prints a PASS/FAIL line with its measured quantities and stated
tolerance; the assertions repeat the check outcome so pytest reports them
individually.  ``python -m dopplermap verify`` runs the same functions.
"""

import pytest

from dopplermap import verification as ver


def _run(name, fn):
    passed, detail, _ = fn()
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    assert passed, f"{name}: {detail}"


def test_01_forward_consistency():
    _run("forward_consistency", ver.check_forward_consistency)


def test_02_doppler_band():
    _run("doppler_band", ver.check_doppler_band)


def test_03_localization_across_seeds():
    _run("localization", ver.check_localization)


def test_04_regular_bin_periodicity():
    _run("periodicity", ver.check_periodicity)


def test_05_infinite_window_lemma():
    _run("infinite_window_lemma", ver.check_infinite_window_lemma)


def test_06_tikhonov_filter_factors():
    _run("tikhonov", ver.check_tikhonov)


def test_07_lcurve_against_discrepancy_principle():
    _run("lcurve", ver.check_lcurve)


def test_08_special_functions():
    _run("special_functions", ver.check_special_functions)


def test_09_window_model():
    _run("window_model", ver.check_window_model)


def test_10_beamwidth_trends():
    _run("beamwidth_trends", ver.check_beamwidth_trends)


def test_11_half_plane():
    _run("half_plane", ver.check_half_plane)


def test_12_determinism():
    _run("determinism", ver.check_determinism)


def test_verify_runner_reports_all_checks():
    results = ver.run_checks(names=["doppler_band", "tikhonov"], printer=lambda s: None)
    assert [r.name for r in results] == ["doppler_band", "tikhonov"]
    assert all(r.passed for r in results)
    summary = ver.summary_lines(results)
    assert summary.splitlines()[0] == "check,status,detail"
    assert len(summary.splitlines()) == 3


def test_verify_summary_is_deterministic():
    names = ["doppler_band", "tikhonov", "lcurve"]
    a = ver.summary_lines(ver.run_checks(names=names, printer=lambda s: None))
    b = ver.summary_lines(ver.run_checks(names=names, printer=lambda s: None))
    assert a == b


def test_unknown_check_rejected():
    with pytest.raises(ValueError):
        ver.run_checks(names=["no_such_check"])
