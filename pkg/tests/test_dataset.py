import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mitodet.dataset import (
    Annotation,
    Label,
    SlideRecord,
    Tile,
    sample_training_tiles,
    split_leave_one_scanner_out,
    split_random,
    tile_count,
    tile_slide,
)
from mitodet.geometry import Box


def slides(n, scanners=("A", "B", "C")):
    return [SlideRecord(f"s{i:03d}", scanners[i % len(scanners)], 6000, 6000) for i in range(n)]


def ceil_div(a, b):
    return -(-a // b)


class TestSlideRecord:
    def test_rejects_annotation_outside(self):
        with pytest.raises(ValueError, match="exceeds"):
            SlideRecord("s", "A", 100, 100, [Annotation(Box(60, 0, 50, 50))])

    def test_rejects_empty_extent(self):
        with pytest.raises(ValueError):
            SlideRecord("s", "A", 0, 100)

    def test_box_size_check(self):
        s = SlideRecord("s", "A", 100, 100, [Annotation(Box(0, 0, 40, 50))])
        with pytest.raises(ValueError, match="expected 50x50"):
            s.check_box_size(50)


class TestSplitRandom:
    def test_default_counts(self):
        plan = split_random(slides(150), 105, 15, 30, seed=3)
        assert (len(plan.train), len(plan.validation), len(plan.test)) == (105, 15, 30)
        parts = [set(plan.train), set(plan.validation), set(plan.test)]
        assert not (parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2])
        assert set.union(*parts) == {s.slide_id for s in slides(150)}

    def test_degenerate(self):
        plan = split_random(slides(3), 3, 0, 0, seed=0)
        assert plan.train == ["s000", "s001", "s002"]
        assert plan.validation == [] and plan.test == []

    def test_deterministic(self):
        a = split_random(slides(150), 105, 15, 30, seed=7)
        b = split_random(slides(150), 105, 15, 30, seed=7)
        assert a.as_dict() == b.as_dict()

    def test_seed_changes_plan(self):
        a = split_random(slides(150), 105, 15, 30, seed=7)
        b = split_random(slides(150), 105, 15, 30, seed=8)
        assert a.train != b.train

    def test_count_mismatch_names_totals(self):
        with pytest.raises(ValueError, match="105\\+15\\+31=151 .* 150 slides"):
            split_random(slides(150), 105, 15, 31, seed=0)

    def test_negative_count(self):
        with pytest.raises(ValueError):
            split_random(slides(3), 4, -1, 0, seed=0)

    def test_duplicate_ids(self):
        dup = slides(2) + [SlideRecord("s000", "A", 10, 10)]
        with pytest.raises(ValueError, match="duplicate"):
            split_random(dup, 3, 0, 0, seed=0)

    def test_membership_is_uniform(self):
        # each slide lands in test with probability 30/150 over seeds
        hits = np.zeros(150)
        ids = [s.slide_id for s in slides(150)]
        for seed in range(2000):
            test = set(split_random(slides(150), 105, 15, 30, seed).test)
            hits += [i in test for i in ids]
        freq = hits / 2000
        # 5-sigma band per slide, sigma = sqrt(0.2*0.8/2000)
        assert np.all(np.abs(freq - 0.2) < 5 * np.sqrt(0.16 / 2000))


class TestLeaveOneScannerOut:
    def test_three_scanners(self):
        s = slides(9)
        plans = split_leave_one_scanner_out(s)
        assert [p.held_out for p in plans] == ["A", "B", "C"]
        c = plans[2]
        assert c.test == [x.slide_id for x in s if x.scanner_id == "C"]
        assert c.train == [x.slide_id for x in s if x.scanner_id in "AB"]
        assert c.validation == []

    def test_minimal(self):
        plans = split_leave_one_scanner_out(slides(2, ("A", "B")))
        assert [(len(p.train), len(p.test)) for p in plans] == [(1, 1), (1, 1)]

    def test_single_scanner_rejected(self):
        with pytest.raises(ValueError, match="at least 2 scanners"):
            split_leave_one_scanner_out(slides(4, ("A",)))


class TestTileSlide:
    def test_exact_grid(self):
        assert len(tile_slide(SlideRecord("s", "A", 6144, 6144), 1024)) == 36

    def test_ceiling_grid(self):
        tiles = tile_slide(SlideRecord("s", "A", 5000, 7000), 1024)
        assert len(tiles) == ceil_div(5000, 1024) * ceil_div(7000, 1024) == 35
        assert tile_count(5000, 7000) == 35

    def test_origins_are_stride_multiples(self):
        for t in tile_slide(SlideRecord("s", "A", 5000, 3000), 1024):
            assert t.origin_x % 1024 == 0 and t.origin_y % 1024 == 0
            assert t.size == 1024

    def test_border_annotation_reassigned_and_clipped(self):
        slide = SlideRecord("s", "A", 4096, 4096, [Annotation(Box(1000, 10, 50, 50))])
        tiles = {(t.origin_x, t.origin_y): t for t in tile_slide(slide, 1024)}
        # center (1025, 35) -> tile (1024, 0); box (-24, 10) clipped to (0, 10, 26, 50)
        assert tiles[(1024, 0)].annotations == [Annotation(Box(0, 10, 26, 50))]
        assert sum(len(t.annotations) for t in tiles.values()) == 1

    def test_center_on_boundary_goes_right(self):
        slide = SlideRecord("s", "A", 4096, 4096, [Annotation(Box(999, 999, 50, 50))])
        (owner,) = [t for t in tile_slide(slide, 1024) if t.annotations]
        assert (owner.origin_x, owner.origin_y) == (1024, 1024)
        assert owner.annotations[0].box == Box(0, 0, 25, 25)
        assert not owner.annotations[0].truncated

    def test_labels_kept(self):
        slide = SlideRecord(
            "s", "A", 2048, 2048,
            [Annotation(Box(10, 10, 50, 50), Label.NON_MITOTIC), Annotation(Box(1500, 10, 50, 50))],
        )
        labels = sorted(a.label.value for t in tile_slide(slide) for a in t.annotations)
        assert labels == ["mitotic", "non_mitotic"]

    def test_edge_annotation_clipped_to_slide_extent(self):
        # slide 1100 wide: second tile only spans 76 px of real tissue
        slide = SlideRecord("s", "A", 1100, 1024, [Annotation(Box(1050, 0, 50, 50))])
        (owner,) = [t for t in tile_slide(slide) if t.annotations]
        assert owner.origin_x == 1024
        assert owner.annotations[0].box == Box(26, 0, 50, 50)

    def test_pixels_padded(self):
        pixels = np.arange(5 * 3 * 3, dtype=np.uint8).reshape(3, 5, 3)
        tiles = tile_slide(SlideRecord("s", "A", 5, 3), 2, pixels=pixels)
        assert len(tiles) == 3 * 2
        canvas = np.zeros((4, 6, 3), dtype=np.uint8)
        for t in tiles:
            assert t.pixels.shape == (2, 2, 3)
            canvas[t.origin_y : t.origin_y + 2, t.origin_x : t.origin_x + 2] = t.pixels
        np.testing.assert_array_equal(canvas[:3, :5], pixels)
        assert not canvas[3:].any() and not canvas[:, 5:].any()

    def test_pixel_shape_mismatch(self):
        with pytest.raises(ValueError, match="does not match"):
            tile_slide(SlideRecord("s", "A", 5, 3), 2, pixels=np.zeros((5, 3, 3), np.uint8))

    def test_without_center_rule_every_overlap_gets_a_copy(self):
        slide = SlideRecord("s", "A", 2048, 2048, [Annotation(Box(1000, 1000, 50, 50))])
        tiles = tile_slide(slide, 1024, center_rule=False)
        assert sum(len(t.annotations) for t in tiles) == 4

    def test_bad_tile_size(self):
        with pytest.raises(ValueError):
            tile_slide(SlideRecord("s", "A", 10, 10), 0)

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(1, 3000),
        st.integers(1, 3000),
        st.sampled_from([256, 500, 1024]),
        st.data(),
    )
    def test_partition_and_conservation(self, width, height, tile_size, data):
        n_ann = data.draw(st.integers(0, 20))
        anns = []
        for _ in range(n_ann):
            w = data.draw(st.integers(1, min(50, width)))
            h = data.draw(st.integers(1, min(50, height)))
            x = data.draw(st.integers(0, width - w))
            y = data.draw(st.integers(0, height - h))
            anns.append(Annotation(Box(x, y, w, h)))
        slide = SlideRecord("s", "A", width, height, anns)
        tiles = tile_slide(slide, tile_size)
        assert len(tiles) == ceil_div(width, tile_size) * ceil_div(height, tile_size)

        # every sampled pixel lies in exactly one tile extent
        px = np.linspace(0, width - 1, 7).astype(int)
        py = np.linspace(0, height - 1, 7).astype(int)
        for x in px:
            for y in py:
                owners = [
                    t for t in tiles
                    if t.origin_x <= x < t.origin_x + t.size and t.origin_y <= y < t.origin_y + t.size
                ]
                assert len(owners) == 1

        assert sum(len(t.annotations) for t in tiles) == n_ann
        for t in tiles:
            for a in t.annotations:
                assert a.box.inside(t.size, t.size)
                # center rule keeps at least half of each axis
                assert not a.truncated


class TestSampleTrainingTiles:
    def _tiles(self, n_empty, n_full):
        out = [Tile("s", 1024 * i, 0) for i in range(n_empty)]
        out += [Tile("s", 1024 * i, 1024, annotations=[Annotation(Box(0, 0, 50, 50))]) for i in range(n_full)]
        return out

    def test_non_empty_always_kept(self, rng):
        tiles = self._tiles(0, 50)
        assert sample_training_tiles(tiles, 0.8, rng) == tiles

    def test_drop_all_empty(self, rng):
        tiles = self._tiles(30, 20)
        assert sample_training_tiles(tiles, 1.0, rng) == tiles[30:]

    def test_keep_all(self, rng):
        tiles = self._tiles(30, 20)
        assert sample_training_tiles(tiles, 0.0, rng) == tiles

    def test_order_preserved(self, rng):
        tiles = self._tiles(200, 5)
        rng.shuffle(tiles)
        kept = sample_training_tiles(tiles, 0.5, rng)
        pos = [tiles.index(t) for t in kept]
        assert pos == sorted(pos)

    def test_deterministic(self):
        tiles = self._tiles(500, 10)
        a = sample_training_tiles(tiles, 0.8, np.random.default_rng(4))
        b = sample_training_tiles(tiles, 0.8, np.random.default_rng(4))
        assert a == b

    def test_bad_prob(self, rng):
        with pytest.raises(ValueError):
            sample_training_tiles([], 1.5, rng)
