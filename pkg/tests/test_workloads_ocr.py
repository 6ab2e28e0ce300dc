"""OCR workload: classification, shrink-only state, registry."""

import random

import pytest

from fairex.exec_model import gen_diff, step
from fairex.workloads import UnknownWorkload, create_workload, registry
from fairex.workloads.life import LifeState
from fairex.workloads.ocr import (
    ALPHABET,
    OcrState,
    OcrWorkload,
    classify,
    glyph_templates,
    load_bitmap,
    make_image,
    ocr_cycle,
    render_glyph,
    save_bitmap,
    state_from_images,
)


class TestClassification:
    def test_every_template_classifies_as_itself(self):
        templates = glyph_templates()
        for i, letter in enumerate(ALPHABET):
            assert classify(render_glyph(letter), templates) == i

    def test_noised_template_still_recognized(self):
        templates = glyph_templates()
        rng = random.Random(0)
        for letter in "AKZ":
            image = make_image(letter, rng, noise=0.1)
            assert ALPHABET[classify(image, templates)] == letter

    def test_image_is_about_1kb(self):
        assert render_glyph("A").nbytes == 1024


class TestCycle:
    def test_cycle_consumes_one_image_and_outputs_its_letter(self):
        rng = random.Random(1)
        state = OcrState.from_mstate(state_from_images([make_image("G", rng)]))
        shrunk, letter = ocr_cycle(state)
        assert letter == b"G"
        assert len(shrunk.queue) == 0
        assert shrunk.consumed_count == 1

    def test_letters_come_out_in_queue_order(self):
        rng = random.Random(1)
        images = [make_image(ch, rng, noise=0.02) for ch in "FAIR"]
        result = step(OcrWorkload(), state_from_images(images), 4)
        assert result.out.messages == (b"F", b"A", b"I", b"R")
        assert result.terminal

    def test_empty_queue_is_terminal(self):
        result = step(OcrWorkload(), state_from_images([]), 5)
        assert result.cycles_done == 0
        assert result.terminal

    def test_budget_larger_than_queue_stops_early(self):
        rng = random.Random(1)
        state = state_from_images([make_image("B", rng) for _ in range(3)])
        result = step(OcrWorkload(), state, 10)
        assert result.cycles_done == 3
        assert result.terminal


class TestShrinkingState:
    def test_state_size_never_increases(self):
        rng = random.Random(2)
        state = state_from_images([make_image("C", rng) for _ in range(5)])
        p = OcrWorkload()
        sizes = [state.size()]
        for _ in range(5):
            state = step(p, state, 1).new_state
            sizes.append(state.size())
        assert sizes == sorted(sizes, reverse=True)

    def test_diffs_are_removal_only(self):
        rng = random.Random(2)
        state = state_from_images([make_image("D", rng) for _ in range(4)])
        p = OcrWorkload()
        for _ in range(4):
            after = step(p, state, 1).new_state
            diff = gen_diff(state, after)
            assert diff.removal_only()
            assert len(diff.ops) == 1
            state = after

    def test_serialization_round_trip(self):
        rng = random.Random(3)
        state = state_from_images([make_image("E", rng) for _ in range(3)])
        assert OcrState.from_mstate(state).to_mstate() == state

    def test_consumed_count_derived_from_totals(self):
        rng = random.Random(3)
        state = state_from_images([make_image("F", rng) for _ in range(4)])
        after = step(OcrWorkload(), state, 3).new_state
        assert OcrState.from_mstate(after).consumed_count == 3


class TestBitmapFiles:
    def test_save_load_round_trip(self, tmp_path):
        image = make_image("H", random.Random(0), noise=0.05)
        path = tmp_path / "h.gray"
        save_bitmap(path, image)
        assert (load_bitmap(path) == image).all()


class TestRegistry:
    def test_life_factory_builds_requested_grid(self):
        p, state = create_workload("life", {"grid": 50}, random.Random(0))
        parsed = LifeState.from_mstate(state)
        assert (parsed.width, parsed.height) == (50, 50)
        assert p.schema_tag == "life"

    def test_ocr_factory_builds_requested_queue(self):
        p, state = create_workload("ocr", {"images": 40}, random.Random(0))
        assert len(OcrState.from_mstate(state).queue) == 40

    def test_unknown_workload_rejected(self):
        with pytest.raises(UnknownWorkload, match="bogus"):
            create_workload("bogus", {}, random.Random(0))

    def test_life_factory_honours_packed_option(self):
        _, state = create_workload("life", {"grid": 16, "packed": True},
                                   random.Random(0))
        assert LifeState.from_mstate(state).packed
        assert state.size() < 16 * 16  # bit-packed cells

    def test_registry_lists_both_workloads(self):
        assert set(registry()) == {"life", "ocr"}
