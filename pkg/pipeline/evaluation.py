# pipeline/evaluation.py

import numpy as np

from exceptions import MetricError
from labels import NUM_CLASSES, check_segment_map, colorize
from logger import logger
from metrics import (
    MetricReport,
    confusion_matrix,
    frechet_from_images,
    iou_from_confusion,
    named_classes,
    sliced_wasserstein_pyramid,
    ssim,
)
from titan.generator import Generator
from utils import philox, progress_bar

from .inference import translate

EVAL_SWD_RESOLUTION = 128
EVAL_SWD_PROJECTIONS = 128


def generator_predictor(generator):
    """Callable (sample) -> predicted camera segment map."""

    def predict(sample):
        return translate(generator, sample.range_crop, sample.lidar_labels)

    return predict


def evaluate(
    dataset,
    model,
    seed=0,
    swd_resolution=EVAL_SWD_RESOLUTION,
    n_projections=EVAL_SWD_PROJECTIONS,
    quiet=False,
) -> MetricReport:
    """
    Score predicted camera segment maps against the ground truth of every sample.

    IoU comes from confusion counts accumulated over the whole dataset; SSIM, SWD
    and the Fréchet distance compare colorized segment maps.

    :param dataset: Non-empty list of PairedSample
    :param model: Generator, or a callable (sample) -> segment map of shared ids
    :param seed: Seed of the SWD patch and projection draws
    :return: MetricReport
    """
    if not dataset:
        raise MetricError("cannot evaluate an empty dataset")
    predict = generator_predictor(model) if isinstance(model, Generator) else model

    confusion = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    predicted_images, real_images, ssim_values = [], [], []
    for sample in progress_bar(dataset, desc="Evaluating", total=len(dataset), disable=quiet):
        pred = check_segment_map(predict(sample))
        gt = sample.camera_labels
        if pred.shape != gt.shape:
            raise MetricError(f"prediction {pred.shape} does not match camera labels {gt.shape}")
        confusion += confusion_matrix(pred, gt)
        fake_image = colorize(pred) / 255.0
        real_image = colorize(gt) / 255.0
        ssim_values.append(ssim(fake_image, real_image))
        predicted_images.append(fake_image)
        real_images.append(real_image)

    per_class, mean_iou = iou_from_confusion(confusion)
    swd_levels = sliced_wasserstein_pyramid(
        predicted_images, real_images, philox(seed), swd_resolution, n_projections
    )
    frechet = None
    if len(dataset) >= 2:
        frechet = frechet_from_images(predicted_images, real_images)
    else:
        logger.warning("Fréchet distance needs at least two samples; skipped")

    report = MetricReport(
        class_names=named_classes(),
        per_class_iou=per_class[1:],
        miou=mean_iou,
        ssim=float(np.mean(ssim_values)),
        swd_per_level=swd_levels,
        frechet=frechet,
    )
    logger.info(f"Evaluated {len(dataset)} samples: mIoU={report.miou:.4f} SSIM={report.ssim:.4f}")
    return report
