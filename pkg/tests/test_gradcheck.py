"""Finite-difference verification of the full network gradient."""

from __future__ import annotations

import pytest

from tempnet.gradcheck import REDUCED_CONFIG, run_gradcheck


@pytest.mark.slow
def test_reduced_network_passes_at_default_tolerance():
    result = run_gradcheck(tolerance=1e-4, seed=0)
    assert result.passed
    assert result.max_rel_error < 1e-6
    assert len(result.per_param) == 28  # every trainable tensor covered
    assert result.worst_param in dict(result.per_param)
    assert result.summary().startswith("PASS:")


@pytest.mark.slow
def test_corrupted_conv_backward_is_caught():
    result = run_gradcheck(tolerance=1e-4, seed=0, corrupt=True)
    assert not result.passed
    assert result.max_rel_error > 1e-2
    assert result.summary().startswith("FAIL:")
    assert "conv" in result.worst_param


@pytest.mark.slow
def test_zero_tolerance_always_fails_and_reports_magnitude():
    result = run_gradcheck(tolerance=0.0, seed=0)
    assert not result.passed
    assert result.max_rel_error > 0.0
    assert "tolerance 0," in result.summary()
    assert "e-" in result.summary()  # the achieved error is still reported


def test_reduced_config_is_small():
    # keeps the finite-difference sweep tractable on one core
    assert REDUCED_CONFIG.input_shape == (8, 8, 8, 1)
    assert REDUCED_CONFIG.channels == 2
    assert REDUCED_CONFIG.attention is True
