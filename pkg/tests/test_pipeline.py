import random

import pytest

from renderbench.costs import Dist
from renderbench.errors import NonConstantCosts
from renderbench.pipeline import (
    PipelineVariant,
    copy_time_ns,
    steady_state_period,
    steady_state_period_from_dists,
)

MS = 1_000_000


class TestClosedForm:
    def test_canonical_costs(self):
        a, q, x, r = 10 * MS, 7 * MS, 5 * MS, 8 * MS
        assert steady_state_period(a, q, x, r, PipelineVariant.BASELINE) == 22 * MS
        assert steady_state_period(a, q, x, r, PipelineVariant.OPT_MEMO) == 15 * MS
        assert steady_state_period(a, q, x, r, PipelineVariant.OPT_TWOSTEP) == 17 * MS
        assert steady_state_period(a, q, x, r, PipelineVariant.OPT_FULL) == 10 * MS

    def test_gpu_bound(self):
        assert steady_state_period(10 * MS, 7 * MS, 5 * MS, 40 * MS,
                                   PipelineVariant.BASELINE) == 40 * MS

    def test_copy_bound_twostep(self):
        assert steady_state_period(10 * MS, 0, 12 * MS, 8 * MS,
                                   PipelineVariant.OPT_FULL) == 12 * MS

    def test_degenerate_zero(self):
        for variant in PipelineVariant:
            assert steady_state_period(0, 0, 0, 0, variant) == 0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            steady_state_period(-1, 0, 0, 0, PipelineVariant.BASELINE)

    def test_no_regression_full_vs_baseline(self):
        # OPT_FULL server FPS >= BASELINE for any non-negative cost vector
        rng = random.Random(42)
        for _ in range(100):
            a, q, x, r = (rng.randint(0, 40 * MS) for _ in range(4))
            base = steady_state_period(a, q, x, r, PipelineVariant.BASELINE)
            full = steady_state_period(a, q, x, r, PipelineVariant.OPT_FULL)
            assert full <= base

    def test_memo_removes_exactly_q(self):
        rng = random.Random(43)
        for _ in range(100):
            a, q, x = (rng.randint(0, 40 * MS) for _ in range(3))
            r = 0  # CPU-bound so the difference is purely q
            base = steady_state_period(a, q, x, r, PipelineVariant.BASELINE)
            memo = steady_state_period(a, q, x, r, PipelineVariant.OPT_MEMO)
            assert base - memo == q


def test_dist_wrapper_rejects_non_constant():
    with pytest.raises(NonConstantCosts):
        steady_state_period_from_dists(Dist.uniform(1, 2), Dist.constant(0), 0,
                                       Dist.constant(0), PipelineVariant.BASELINE)
    period = steady_state_period_from_dists(
        Dist.constant(10 * MS), Dist.constant(7 * MS), 5 * MS,
        Dist.constant(8 * MS), PipelineVariant.BASELINE,
    )
    assert period == 22 * MS


class TestCopyTime:
    def test_exact_division(self):
        # 8 MB at 4 GB/s alone = 2 ms
        assert copy_time_ns(8_000_000, 4_000_000_000, 0) == 2 * MS

    def test_shared_doubles(self):
        assert copy_time_ns(8_000_000, 4_000_000_000, 0, concurrency=2) == 4 * MS

    def test_latency_added(self):
        assert copy_time_ns(1_000, 1_000_000_000, 500) == 500 + 1_000
