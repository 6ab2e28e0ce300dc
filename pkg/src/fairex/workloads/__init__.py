"""Workload catalog: instantiate conforming workloads by name."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from ..exec_model import MState, Workload
from . import life, ocr


class UnknownWorkload(Exception):
    pass


@dataclass(frozen=True)
class WorkloadInfo:
    schema_tag: str
    make_workload: Callable[[], Workload]
    make_state: Callable[[dict, random.Random], MState]
    defaults: dict = field(default_factory=dict)


def _life_state(params: dict, rng: random.Random) -> MState:
    grid = int(params.get("grid", 50))
    width = int(params.get("width", grid))
    height = int(params.get("height", grid))
    return life.random_state(rng, width, height,
                             density=float(params.get("density", 0.35)),
                             packed=bool(params.get("packed", False)))


def _ocr_state(params: dict, rng: random.Random) -> MState:
    return ocr.initial_state(int(params.get("images", 1000)), rng,
                             noise=float(params.get("noise", 0.03)))


_REGISTRY: dict[str, WorkloadInfo] = {
    "life": WorkloadInfo(
        schema_tag=life.LIFE_TAG,
        make_workload=life.LifeWorkload,
        make_state=_life_state,
        defaults={"grid": 50, "density": 0.35, "packed": False},
    ),
    "ocr": WorkloadInfo(
        schema_tag=ocr.OCR_TAG,
        make_workload=ocr.OcrWorkload,
        make_state=_ocr_state,
        defaults={"images": 1000, "noise": 0.03},
    ),
}


def registry() -> dict[str, WorkloadInfo]:
    return dict(_REGISTRY)


def create_workload(name: str, params: dict | None,
                    rng: random.Random) -> tuple[Workload, MState]:
    """Instantiate a workload and its initial state from config parameters."""
    try:
        info = _REGISTRY[name]
    except KeyError:
        raise UnknownWorkload(f"no workload named {name!r}; "
                              f"available: {sorted(_REGISTRY)}") from None
    merged = dict(info.defaults)
    merged.update(params or {})
    return info.make_workload(), info.make_state(merged, rng)
