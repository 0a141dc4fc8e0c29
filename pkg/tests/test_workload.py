import pytest

from renderbench.errors import ConfigError
from renderbench.workload import FrameSource, WorkloadConfig


CFG_RANDOM = WorkloadConfig(width=64, height=48, object_count=3,
                            class_ids=(1, 2, 3, 4), placement="random",
                            object_size=8)
CFG_FIXED = WorkloadConfig(width=64, height=48, object_count=3,
                           class_ids=(1, 2, 3, 4), placement="fixed",
                           object_size=8)


def test_deterministic_per_seed():
    a = FrameSource(CFG_RANDOM, 7, 0).frame(3, [])
    b = FrameSource(CFG_RANDOM, 7, 0).frame(3, [])
    assert a.pixels == b.pixels and a.annotation == b.annotation
    c = FrameSource(CFG_RANDOM, 8, 0).frame(3, [])
    assert c.pixels != a.pixels


def test_random_placement_varies_fixed_does_not():
    src_r = FrameSource(CFG_RANDOM, 1, 0)
    src_f = FrameSource(CFG_FIXED, 1, 0)
    frames_r = [src_r.frame(s, []) for s in range(5)]
    frames_f = [src_f.frame(s, []) for s in range(5)]
    assert len({f.pixels for f in frames_r}) > 1
    assert len({f.pixels for f in frames_f}) == 1


def test_objects_within_bounds_and_sized():
    src = FrameSource(CFG_RANDOM, 3, 1)
    for s in range(50):
        frame = src.frame(s, [], with_pixels=False)
        assert len(frame.annotation) == 3
        for obj in frame.annotation:
            assert 0 <= obj.x <= CFG_RANDOM.width - CFG_RANDOM.object_size
            assert 0 <= obj.y <= CFG_RANDOM.height - CFG_RANDOM.object_size
            assert obj.class_id in CFG_RANDOM.class_ids


def test_pixel_buffer_shape():
    frame = FrameSource(CFG_RANDOM, 1, 0).frame(0, [5])
    assert len(frame.pixels) == 64 * 48 * 4
    assert frame.tags == [5]


def test_objects_change_pixels():
    src = FrameSource(CFG_RANDOM, 9, 0)
    bare = src.pixels_for([])
    ann = src.annotation_for(0)
    drawn = src.pixels_for(ann)
    assert bare != drawn


def test_config_validation():
    with pytest.raises(ConfigError):
        WorkloadConfig(placement="sometimes")
    with pytest.raises(ConfigError):
        WorkloadConfig(width=8, height=8, object_size=16)
