import struct

import numpy as np
import pytest

from exceptions import DataFormatError
from labels import class_id
from pipeline.kitti import (
    load_labelled_scan,
    read_kitti_instances,
    read_kitti_labels,
    read_kitti_scan,
    write_kitti_labels,
    write_kitti_scan,
)


@pytest.fixture
def one_point_scan(tmp_path):
    path = tmp_path / "000000.bin"
    path.write_bytes(struct.pack("<4f", 10.0, -2.0, 0.5, 0.25))
    return path


def test_reads_a_single_point(one_point_scan):
    cloud = read_kitti_scan(one_point_scan)
    assert cloud.points.dtype == np.float32
    assert cloud.points.tolist() == [[10.0, -2.0, 0.5, 0.25]]
    assert cloud.labels is None


def test_malformed_scan(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x00" * 15)
    with pytest.raises(DataFormatError, match="malformed scan"):
        read_kitti_scan(path)


def test_empty_scan(tmp_path):
    path = tmp_path / "empty.bin"
    path.write_bytes(b"")
    with pytest.raises(DataFormatError, match="empty scan"):
        read_kitti_scan(path)


def test_missing_scan(tmp_path):
    with pytest.raises(DataFormatError, match="cannot read"):
        read_kitti_scan(tmp_path / "nope.bin")


def test_label_word_splits_into_semantic_and_instance(tmp_path):
    path = tmp_path / "000000.label"
    path.write_bytes(struct.pack("<I", 0x00010001))
    assert read_kitti_labels(path, 1).tolist() == [1]
    assert read_kitti_instances(path).tolist() == [1]


def test_label_count_must_match_the_scan(tmp_path):
    path = tmp_path / "000000.label"
    path.write_bytes(struct.pack("<3I", 10, 40, 50))
    with pytest.raises(DataFormatError, match="label/scan mismatch"):
        read_kitti_labels(path, 2)
    path.write_bytes(b"\x01\x02\x03")
    with pytest.raises(DataFormatError, match="label/scan mismatch"):
        read_kitti_labels(path, 1)


def test_scan_and_labels_round_trip(tmp_path, rng):
    points = np.column_stack([rng.uniform(1, 50, size=(100, 3)), rng.random(100)]).astype(np.float32)
    semantic = rng.choice([10, 40, 48, 50, 70], size=100)
    instance = rng.integers(0, 5, size=100)
    write_kitti_scan(tmp_path / "velodyne" / "scan.bin", points)
    write_kitti_labels(tmp_path / "labels" / "scan.label", semantic, instance)

    assert np.array_equal(read_kitti_scan(tmp_path / "velodyne" / "scan.bin").points, points)
    assert np.array_equal(read_kitti_labels(tmp_path / "labels" / "scan.label", 100), semantic)
    assert np.array_equal(read_kitti_instances(tmp_path / "labels" / "scan.label"), instance)


def test_labelled_scan_maps_to_shared_ids(tmp_path, one_point_scan):
    label_path = tmp_path / "000000.label"
    write_kitti_labels(label_path, [10])
    cloud = load_labelled_scan(one_point_scan, label_path)
    assert cloud.labels.tolist() == [class_id("Car")]


def test_writers_reject_bad_input(tmp_path):
    with pytest.raises(DataFormatError, match="16 bits"):
        write_kitti_labels(tmp_path / "x.label", [70000])
    with pytest.raises(DataFormatError, match="shape"):
        write_kitti_scan(tmp_path / "x.bin", np.zeros((3, 3)))
