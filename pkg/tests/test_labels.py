import numpy as np
import pytest

from exceptions import LabelMappingError
from labels import (
    DESK,
    FULL,
    NUM_CLASSES,
    PALETTE,
    SHARED_CLASSES,
    ClassSubset,
    class_id,
    colorize,
    map_cityscapes,
    map_semantickitti,
    one_hot,
    palette_inverse,
    to_semantickitti,
)


def test_shared_taxonomy_order():
    assert NUM_CLASSES == 15
    assert SHARED_CLASSES[0] == "Unlabeled"
    assert SHARED_CLASSES[1:] == (
        "Car",
        "Bicycle",
        "Motorcycle",
        "Truck",
        "Other-Vehicle",
        "Person",
        "Road",
        "Sidewalk",
        "Building",
        "Fence",
        "Vegetation",
        "Terrain",
        "Pole",
        "Traffic-Sign",
    )


@pytest.mark.parametrize(
    "raw, name",
    [(10, "Car"), (40, "Road"), (48, "Sidewalk"), (50, "Building"), (70, "Vegetation"), (0, "Unlabeled")],
)
def test_semantickitti_mapping(raw, name):
    assert map_semantickitti(raw) == class_id(name)


@pytest.mark.parametrize("raw, name", [(26, "Car"), (7, "Road"), (24, "Person"), (23, "Unlabeled")])
def test_cityscapes_mapping(raw, name):
    assert map_cityscapes(raw) == class_id(name)


def test_unmapped_label_raises():
    with pytest.raises(LabelMappingError, match="unmapped label"):
        map_semantickitti(9999)
    with pytest.raises(LabelMappingError, match="unmapped label"):
        map_cityscapes(np.array([7, 500]))


def test_array_mapping_matches_scalar():
    raw = np.array([[10, 40], [50, 72]])
    mapped = map_semantickitti(raw)
    assert mapped.shape == raw.shape
    assert mapped.tolist() == [[map_semantickitti(r) for r in row] for row in raw.tolist()]


def test_inverse_semantickitti_round_trips():
    shared = np.arange(NUM_CLASSES)
    assert np.array_equal(map_semantickitti(to_semantickitti(shared)), shared)


def test_one_hot_shapes_and_unlabeled_channel():
    grid = np.array([[0, 1], [2, 14]])
    encoded = one_hot(grid).data
    assert encoded.shape == (15, 2, 2)
    assert np.array_equal(encoded.argmax(axis=0), grid)
    dropped = one_hot(grid, include_unlabeled=False).data
    assert dropped.shape == (14, 2, 2)
    assert dropped[:, 0, 0].sum() == 0


def test_one_hot_batched():
    grid = np.zeros((3, 4, 5), dtype=np.int64)
    assert one_hot(grid, num_classes=6).shape == (3, 6, 4, 5)


def test_one_hot_rejects_out_of_range_ids():
    with pytest.raises(LabelMappingError):
        one_hot(np.array([[15]]))


def test_colorize_round_trip(rng):
    grid = rng.integers(0, NUM_CLASSES, size=(8, 9))
    image = colorize(grid)
    assert image.dtype == np.uint8 and image.shape == (8, 9, 3)
    assert np.array_equal(palette_inverse(image), grid)


def test_palette_colours_are_distinct():
    assert len({tuple(colour) for colour in PALETTE}) == NUM_CLASSES


def test_palette_inverse_rejects_foreign_colours():
    with pytest.raises(LabelMappingError):
        palette_inverse(np.array([[[1, 2, 3]]], dtype=np.uint8))


def test_desk_subset_compacts_and_expands():
    assert DESK.names == ["Unlabeled", "Car", "Road", "Sidewalk", "Building", "Vegetation"]
    grid = np.array([[class_id("Road"), class_id("Terrain")], [class_id("Car"), class_id("Vegetation")]])
    compact = DESK.compact(grid)
    assert compact.tolist() == [[2, 0], [1, 5]]
    assert DESK.expand(compact).tolist() == [[class_id("Road"), 0], [class_id("Car"), class_id("Vegetation")]]


def test_subset_lookup():
    assert ClassSubset.by_name("FULL") is FULL
    with pytest.raises(LabelMappingError):
        ClassSubset.by_name("tiny")
    with pytest.raises(LabelMappingError):
        ClassSubset("bad", (1, 2))
