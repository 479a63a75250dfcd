# labels.py

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from autodiff import Tensor
from config import Config
from exceptions import LabelMappingError

UNLABELED = 0

SHARED_CLASSES = (
    "Unlabeled",
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
NUM_CLASSES = len(SHARED_CLASSES)

# Cityscapes colours of the matching classes.
PALETTE = np.array(
    [
        (0, 0, 0),
        (0, 0, 142),
        (119, 11, 32),
        (0, 0, 230),
        (0, 0, 70),
        (0, 60, 100),
        (220, 20, 60),
        (128, 64, 128),
        (244, 35, 232),
        (70, 70, 70),
        (190, 153, 153),
        (107, 142, 35),
        (152, 251, 152),
        (153, 153, 153),
        (220, 220, 0),
    ],
    dtype=np.uint8,
)

SEMANTICKITTI = "semantickitti"
CITYSCAPES = "cityscapes"


def class_id(name):
    lowered = name.lower()
    for index, candidate in enumerate(SHARED_CLASSES):
        if candidate.lower() == lowered:
            return index
    raise LabelMappingError(f"unknown shared class name '{name}'")


@lru_cache(maxsize=None)
def load_label_mapping(path=None):
    """
    Read the taxonomy table into {taxonomy: {source_id: shared_id}}.

    :param path: CSV file with taxonomy, source_id, source_name, shared_id rows; '#' lines are comments
    """
    path = path or Config.LABEL_MAPPING_FILE
    mapping = {}
    try:
        with open(path, newline="") as f:
            rows = csv.reader(line for line in f if line.strip() and not line.startswith("#"))
            for taxonomy, source_id, _name, shared_id in rows:
                shared = int(shared_id)
                if not 0 <= shared < NUM_CLASSES:
                    raise LabelMappingError(f"shared id {shared} out of range in {path}")
                mapping.setdefault(taxonomy.strip(), {})[int(source_id)] = shared
    except (OSError, ValueError) as e:
        raise LabelMappingError(f"cannot read label mapping {path}: {e}")
    return mapping


@lru_cache(maxsize=None)
def _lookup_table(taxonomy):
    table = load_label_mapping()[taxonomy]
    lut = np.full(max(table) + 1, -1, dtype=np.int64)
    for source_id, shared in table.items():
        lut[source_id] = shared
    return lut


def _map_one(taxonomy, raw_id):
    table = load_label_mapping()[taxonomy]
    try:
        return table[int(raw_id)]
    except KeyError:
        raise LabelMappingError(f"unmapped label {raw_id} in {taxonomy} taxonomy")


def _map_many(taxonomy, raw_ids):
    raw_ids = np.asarray(raw_ids, dtype=np.int64)
    lut = _lookup_table(taxonomy)
    known = (raw_ids >= 0) & (raw_ids < len(lut))
    mapped = np.full(raw_ids.shape, -1, dtype=np.int64)
    mapped[known] = lut[raw_ids[known]]
    if np.any(mapped < 0):
        bad = np.unique(raw_ids[mapped < 0])
        raise LabelMappingError(f"unmapped label(s) {bad.tolist()} in {taxonomy} taxonomy")
    return mapped


def map_semantickitti(raw_id):
    """SemanticKITTI semantic id (scalar or array) to shared id."""
    if np.ndim(raw_id) == 0:
        return _map_one(SEMANTICKITTI, raw_id)
    return _map_many(SEMANTICKITTI, raw_id)


def map_cityscapes(raw_id):
    """Cityscapes label id (scalar or array) to shared id."""
    if np.ndim(raw_id) == 0:
        return _map_one(CITYSCAPES, raw_id)
    return _map_many(CITYSCAPES, raw_id)


def check_segment_map(grid, num_classes=NUM_CLASSES):
    """Validate a grid of shared ids and return it as int64."""
    grid = np.asarray(grid)
    if not np.issubdtype(grid.dtype, np.integer):
        raise LabelMappingError(f"segment map must hold integer ids, got {grid.dtype}")
    if grid.size and (grid.min() < 0 or grid.max() >= num_classes):
        raise LabelMappingError(
            f"segment map ids must be in [0, {num_classes - 1}], got [{grid.min()}, {grid.max()}]"
        )
    return grid.astype(np.int64, copy=False)


@dataclass(frozen=True)
class ClassSubset:
    """
    Ordered shared ids a model predicts; channel k stands for ``ids[k]``.

    ``ids[0]`` is always Unlabeled. Shared ids outside the subset compact to channel 0.
    """

    name: str
    ids: tuple

    def __post_init__(self):
        if not self.ids or self.ids[0] != UNLABELED:
            raise LabelMappingError("class subset must start with Unlabeled (id 0)")
        if len(set(self.ids)) != len(self.ids):
            raise LabelMappingError(f"class subset {self.name} repeats ids")

    @property
    def num_channels(self):
        return len(self.ids)

    @property
    def names(self):
        return [SHARED_CLASSES[i] for i in self.ids]

    def compact(self, grid):
        """Shared-id grid to channel-index grid."""
        lut = np.zeros(NUM_CLASSES, dtype=np.int64)
        lut[list(self.ids)] = np.arange(len(self.ids))
        return lut[check_segment_map(grid)]

    def expand(self, indices):
        """Channel-index grid back to shared ids."""
        return np.asarray(self.ids, dtype=np.int64)[np.asarray(indices, dtype=np.int64)]

    @classmethod
    def by_name(cls, name):
        subsets = {subset.name: subset for subset in (FULL, DESK)}
        try:
            return subsets[name.lower()]
        except KeyError:
            raise LabelMappingError(f"unknown class subset '{name}', expected one of {sorted(subsets)}")


FULL = ClassSubset("full", tuple(range(NUM_CLASSES)))
DESK = ClassSubset(
    "desk",
    tuple(class_id(name) for name in ("Unlabeled", "Car", "Road", "Sidewalk", "Building", "Vegetation")),
)


def one_hot(grid, num_classes=NUM_CLASSES, include_unlabeled=True, dtype=np.float64):
    """
    One-hot encode an (h, w) or batched (N, h, w) id grid.

    :param grid: Integer ids in [0, num_classes)
    :param num_classes: Size of the id space, including Unlabeled
    :param include_unlabeled: When false, channel 0 is dropped and Unlabeled pixels are all-zero
    :return: Tensor of shape (C, h, w) or (N, C, h, w)
    """
    grid = check_segment_map(grid, num_classes)
    encoded = np.eye(num_classes, dtype=dtype)[grid]
    encoded = np.moveaxis(encoded, -1, -3)
    if not include_unlabeled:
        encoded = encoded[..., 1:, :, :]
    return Tensor(np.ascontiguousarray(encoded))


def colorize(grid, palette=PALETTE):
    """Shared-id grid to an 8-bit RGB image of shape (h, w, 3)."""
    return palette[check_segment_map(grid, len(palette))]


def palette_inverse(image, palette=PALETTE):
    """RGB image back to shared ids; every pixel must carry a palette colour."""
    image = np.asarray(image, dtype=np.uint8)
    codes = (image[..., 0].astype(np.int64) << 16) | (image[..., 1].astype(np.int64) << 8) | image[..., 2]
    palette_codes = (
        (palette[:, 0].astype(np.int64) << 16) | (palette[:, 1].astype(np.int64) << 8) | palette[:, 2]
    )
    order = np.argsort(palette_codes)
    position = np.searchsorted(palette_codes[order], codes)
    position = np.clip(position, 0, len(order) - 1)
    ids = order[position]
    if np.any(palette_codes[ids] != codes):
        raise LabelMappingError("image holds colours outside the label palette")
    return ids.astype(np.int64)


@lru_cache(maxsize=None)
def _semantickitti_inverse():
    inverse = np.full(NUM_CLASSES, -1, dtype=np.int64)
    for source_id, shared in sorted(load_label_mapping()[SEMANTICKITTI].items(), reverse=True):
        inverse[shared] = source_id
    return inverse


def to_semantickitti(shared_ids):
    """Shared ids to the lowest SemanticKITTI id that maps onto each of them."""
    raw = _semantickitti_inverse()[check_segment_map(shared_ids)]
    if np.any(raw < 0):
        raise LabelMappingError("shared class without a SemanticKITTI counterpart")
    return raw
