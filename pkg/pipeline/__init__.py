from .dataset import PairedSample, batch_source, load_dataset, load_sample, make_batch, save_sample, split_seeds
from .evaluation import evaluate, generator_predictor
from .inference import Panorama, render_panorama, translate
from .kitti import load_labelled_scan, read_kitti_labels, read_kitti_scan, write_kitti_labels, write_kitti_scan
from .synth import SyntheticSceneConfig, generate_split, render_sample, synth_scene
