import pytest

from renderbench.costs import Dist, Sampler, StageCostModel, derive_rng, derive_seed
from renderbench.errors import ConfigError


def test_derived_streams_independent_and_reproducible():
    assert derive_seed(1, "al", 0) == derive_seed(1, "al", 0)
    assert derive_seed(1, "al", 0) != derive_seed(1, "al", 1)
    assert derive_seed(1, "al", 0) != derive_seed(2, "al", 0)
    a = derive_rng(5, "x").random()
    assert a == derive_rng(5, "x").random()


def test_constant():
    d = Dist.constant(10.0)
    assert d.is_constant and d.constant_value == 10
    assert d.sample(derive_rng(1)) == 10


def test_uniform_bounds_and_range():
    d = Dist.uniform(6, 9)
    rng = derive_rng(1, "u")
    samples = [d.sample(rng) for _ in range(500)]
    assert all(6 <= s <= 9 for s in samples)
    with pytest.raises(ConfigError):
        Dist.uniform(9, 6)


def test_normal_truncated_at_zero():
    d = Dist.normal(1, 50)
    rng = derive_rng(1, "n")
    samples = [d.sample(rng) for _ in range(500)]
    assert min(samples) == 0  # heavy left tail clamps
    assert all(s >= 0 for s in samples)


def test_sampler_reproducible():
    s1 = Sampler(Dist.normal(100, 10), 7, "al", 0)
    s2 = Sampler(Dist.normal(100, 10), 7, "al", 0)
    assert [s1() for _ in range(20)] == [s2() for _ in range(20)]


def test_cost_model_validation():
    with pytest.raises(ConfigError):
        StageCostModel(al=Dist.constant(-1), rd=Dist.constant(0),
                       frame_bytes=Dist.constant(1))
    model = StageCostModel(al=Dist.constant(1), rd=Dist.constant(2),
                           frame_bytes=Dist.constant(3))
    assert model.is_constant
    assert not StageCostModel(al=Dist.uniform(0, 1), rd=Dist.constant(2),
                              frame_bytes=Dist.constant(3)).is_constant
