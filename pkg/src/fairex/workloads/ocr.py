"""Template-matching character recognition as a pure (state-consuming) workload.

The state holds a fixed set of glyph templates plus a queue of input
images.  One cycle classifies the next image (per-pixel Hamming distance
to each template, smallest wins, ties broken in alphabet order), appends
the letter to the output buffer, and removes the image from the state.
The state only ever shrinks, so state diffs are removal-only.

Glyph templates are synthetic: a deterministic hash-derived black/white
pattern per letter.  Recognition quality is irrelevant here; what
matters is that classifying an unmodified template returns its own
letter, and that images are ~1 kB each.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..exec_model import MState, OutBuffer, StepResult
from ..wire import Reader, pack_u32

OCR_TAG = "ocr"
ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
IMG_WIDTH = 32
IMG_HEIGHT = 32

_HEADER_BYTES = 16  # img width, img height, template count, total images


def render_glyph(letter: str, width: int = IMG_WIDTH, height: int = IMG_HEIGHT) -> np.ndarray:
    """Deterministic black/white pattern standing in for a rendered letter."""
    if letter not in ALPHABET:
        raise ValueError(f"letter {letter!r} not in alphabet")
    needed = width * height
    stream = bytearray()
    counter = 0
    while len(stream) < needed:
        stream.extend(hashlib.sha256(f"glyph:{letter}:{counter}".encode()).digest())
        counter += 1
    raw = np.frombuffer(bytes(stream[:needed]), dtype=np.uint8)
    return np.where(raw >= 128, 255, 0).astype(np.uint8).reshape(height, width)


def glyph_templates(width: int = IMG_WIDTH, height: int = IMG_HEIGHT) -> np.ndarray:
    return np.stack([render_glyph(ch, width, height) for ch in ALPHABET])


def make_image(letter: str, rng: random.Random, noise: float = 0.0,
               width: int = IMG_WIDTH, height: int = IMG_HEIGHT) -> np.ndarray:
    """Template image with an optional fraction of inverted pixels."""
    img = render_glyph(letter, width, height).copy()
    flips = int(noise * width * height)
    if flips:
        flat = img.reshape(-1)
        for pos in rng.sample(range(flat.size), flips):
            flat[pos] = 255 - flat[pos]
    return img


def classify(image: np.ndarray, templates: np.ndarray) -> int:
    """Index of the nearest template by per-pixel Hamming distance."""
    distances = np.count_nonzero(templates != image[None, :, :], axis=(1, 2))
    return int(np.argmin(distances))  # argmin takes the first = alphabet order


@dataclass(eq=False)
class OcrState:
    img_width: int
    img_height: int
    templates: np.ndarray
    queue: list[np.ndarray]  # consumption order: queue[0] is next
    total_images: int

    @property
    def consumed_count(self) -> int:
        return self.total_images - len(self.queue)

    def to_mstate(self) -> MState:
        # Images are stored in reverse consumption order so that consuming
        # the next image truncates the blob tail: diffs stay removal-only.
        parts = [
            pack_u32(self.img_width),
            pack_u32(self.img_height),
            pack_u32(len(self.templates)),
            pack_u32(self.total_images),
            self.templates.astype(np.uint8).tobytes(),
        ]
        parts.extend(img.astype(np.uint8).tobytes() for img in reversed(self.queue))
        return MState(blob=b"".join(parts), schema_tag=OCR_TAG)

    @classmethod
    def from_mstate(cls, state: MState) -> "OcrState":
        reader = Reader(state.blob)
        img_w, img_h = reader.u32(), reader.u32()
        n_templates, total = reader.u32(), reader.u32()
        img_size = img_w * img_h
        templates = np.frombuffer(
            reader.raw(n_templates * img_size), dtype=np.uint8
        ).reshape(n_templates, img_h, img_w)
        remaining = reader.remaining // img_size
        if reader.remaining != remaining * img_size:
            raise ValueError("image queue is not a whole number of images")
        blocks = [
            np.frombuffer(reader.raw(img_size), dtype=np.uint8).reshape(img_h, img_w)
            for _ in range(remaining)
        ]
        return cls(img_width=img_w, img_height=img_h, templates=templates,
                   queue=list(reversed(blocks)), total_images=total)


def ocr_cycle(state: OcrState) -> tuple[OcrState, bytes]:
    """Consume one image; returns the shrunk state and the detected letter."""
    if not state.queue:
        raise ValueError("image queue is empty")
    image = state.queue[0]
    letter = ALPHABET[classify(image, state.templates)].encode()
    shrunk = OcrState(img_width=state.img_width, img_height=state.img_height,
                      templates=state.templates, queue=state.queue[1:],
                      total_images=state.total_images)
    return shrunk, letter


class OcrWorkload:
    schema_tag = OCR_TAG
    code_identity = "ocr-template-matcher-v1"

    def run(self, state: MState, cycles: int) -> StepResult:
        parsed = OcrState.from_mstate(state)
        if cycles == 0:
            return StepResult(new_state=state, out=OutBuffer(),
                              cycles_done=0, terminal=not parsed.queue)
        letters = []
        done = 0
        while done < cycles and parsed.queue:
            parsed, letter = ocr_cycle(parsed)
            letters.append(letter)
            done += 1
        if done == 0:
            return StepResult(new_state=state, out=OutBuffer(),
                              cycles_done=0, terminal=True)
        return StepResult(new_state=parsed.to_mstate(), out=OutBuffer(tuple(letters)),
                          cycles_done=done, terminal=not parsed.queue)

    def working_set(self, state: MState) -> int:
        return len(state.blob)


def state_from_images(images: list[np.ndarray],
                      width: int = IMG_WIDTH, height: int = IMG_HEIGHT) -> MState:
    return OcrState(img_width=width, img_height=height,
                    templates=glyph_templates(width, height),
                    queue=list(images), total_images=len(images)).to_mstate()


def initial_state(n_images: int, rng: random.Random, noise: float = 0.03,
                  width: int = IMG_WIDTH, height: int = IMG_HEIGHT) -> MState:
    images = [
        make_image(ALPHABET[rng.randrange(len(ALPHABET))], rng, noise, width, height)
        for _ in range(n_images)
    ]
    return state_from_images(images, width, height)


def save_bitmap(path: str | Path, image: np.ndarray) -> None:
    """Raw 8-bit grayscale with an 8-byte width/height header."""
    height, width = image.shape
    Path(path).write_bytes(pack_u32(width) + pack_u32(height)
                           + image.astype(np.uint8).tobytes())


def load_bitmap(path: str | Path) -> np.ndarray:
    reader = Reader(Path(path).read_bytes())
    width, height = reader.u32(), reader.u32()
    pixels = np.frombuffer(reader.raw(width * height), dtype=np.uint8)
    reader.expect_end()
    return pixels.reshape(height, width)
