"""Synthetic frame content: seeded object placement and pixel rendering.

Stands in for real game scenes. Each frame gets a small set of annotated
objects (class, position, per-frame instance id); pixels are a solid
per-instance background with one filled square per object, so object
placement directly determines pixel content. `fixed` placement produces a
byte-identical frame for every sequence number (2D-desktop-like), `random`
reshuffles positions (and classes) per frame (3D-game-like).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from renderbench.core import AnnotationObject, Frame
from renderbench.costs import derive_rng
from renderbench.errors import ConfigError


@dataclass(frozen=True)
class WorkloadConfig:
    width: int = 192
    height: int = 108
    object_count: int = 3
    class_ids: tuple[int, ...] = (1, 2, 3, 4, 5)
    placement: str = "random"  # random | fixed
    object_size: int = 16

    def __post_init__(self):
        if self.placement not in ("random", "fixed"):
            raise ConfigError(f"placement must be random|fixed, got {self.placement!r}")
        if self.object_size > min(self.width, self.height):
            raise ConfigError("object_size larger than the frame")
        if self.object_count and not self.class_ids:
            raise ConfigError("object_count > 0 requires class_ids")


def _class_color(class_id: int) -> tuple[int, int, int, int]:
    return ((37 * class_id + 11) % 256, (91 * class_id + 23) % 256,
            (53 * class_id + 7) % 256, 255)


class FrameSource:
    """Deterministic per-instance frame generator."""

    def __init__(self, config: WorkloadConfig, root_seed: int, instance: int):
        self.config = config
        self.root_seed = root_seed
        self.instance = instance
        bg_rng = derive_rng(root_seed, "workload-bg", instance)
        self._background = tuple(bg_rng.randrange(0, 200) for _ in range(3)) + (255,)

    def annotation_for(self, seq: int) -> list[AnnotationObject]:
        cfg = self.config
        if cfg.placement == "fixed":
            rng = derive_rng(self.root_seed, "workload", self.instance, "fixed")
        else:
            rng = derive_rng(self.root_seed, "workload", self.instance, seq)
        objects = []
        for i in range(cfg.object_count):
            if cfg.placement == "fixed":
                class_id = cfg.class_ids[i % len(cfg.class_ids)]
            else:
                class_id = rng.choice(cfg.class_ids)
            x = rng.randrange(0, cfg.width - cfg.object_size + 1)
            y = rng.randrange(0, cfg.height - cfg.object_size + 1)
            objects.append(AnnotationObject(class_id=class_id, x=x, y=y, instance=i))
        return objects

    def pixels_for(self, annotation: list[AnnotationObject]) -> bytes:
        cfg = self.config
        arr = np.empty((cfg.height, cfg.width, 4), dtype=np.uint8)
        arr[:, :] = self._background
        s = cfg.object_size
        for obj in annotation:
            arr[obj.y : obj.y + s, obj.x : obj.x + s] = _class_color(obj.class_id)
        return arr.tobytes()

    def frame(self, seq: int, tags: list[int], with_pixels: bool = True) -> Frame:
        annotation = self.annotation_for(seq)
        pixels = self.pixels_for(annotation) if with_pixels else b""
        return Frame(
            seq=seq,
            width=self.config.width,
            height=self.config.height,
            pixels=pixels,
            tags=list(tags),
            annotation=annotation,
        )
