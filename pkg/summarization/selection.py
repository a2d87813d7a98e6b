"""
Выбор модели без разметки.

Для каждой эпохи селектора строится жёсткое резюме валидационных видео,
эталонный реконструктор rNet_0 восстанавливает по нему видео, и потери
реконструкции и разреженности нормируются min-max по эпохам. Выбирается
эпоха с максимальной разностью нормированных потерь.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from .dataset_io import FrameFeatureSequence
from .exceptions import InputError
from .losses import recon_loss, spar_loss
from .networks import MaskVector, ReconstructorNet, SelectorNet, hard_summary, reconstructor_forward, selector_forward
from .segmentation import ShotSegmentation
from .summarizer import summarize

logger = logging.getLogger(__name__)

SELECTION_COLUMNS = ['iteration', 'epoch', 'l_recon', 'l_spar', 'recon_norm', 'spar_norm',
                     'difference', 'selected_epoch', 'selected_iteration']


@dataclass
class ValidationRecord:
    """Потери по эпохам (строки) и валидационным видео (столбцы)"""
    epochs: List[int]
    recon_raw: np.ndarray
    spar_raw: np.ndarray
    video_ids: List[str] = field(default_factory=list)

    @classmethod
    def from_means(cls, recon_means: Sequence[float], spar_means: Sequence[float],
                   epochs: Optional[Sequence[int]] = None) -> 'ValidationRecord':
        recon = np.asarray(recon_means, dtype=np.float64).reshape(-1, 1)
        spar = np.asarray(spar_means, dtype=np.float64).reshape(-1, 1)
        epochs = list(epochs) if epochs is not None else list(range(1, len(recon) + 1))
        return cls(epochs=epochs, recon_raw=recon, spar_raw=spar)

    @property
    def recon_mean(self) -> np.ndarray:
        return self.recon_raw.mean(axis=1)

    @property
    def spar_mean(self) -> np.ndarray:
        return self.spar_raw.mean(axis=1)

    @property
    def recon_norm(self) -> np.ndarray:
        return normalize_losses(self.recon_mean)

    @property
    def spar_norm(self) -> np.ndarray:
        return normalize_losses(self.spar_mean)


@torch.no_grad()
def validation_losses_for(selector: SelectorNet, reconstructor: ReconstructorNet, mask: MaskVector,
                          video: FrameFeatureSequence, segmentation: ShotSegmentation,
                          alpha: float, sigma: float) -> Tuple[float, float]:
    """(L_recon, L_spar) одного видео через жёсткое резюме"""
    scores = selector_forward(selector, video.features)
    selection = summarize(video, scores, segmentation, alpha)
    summary = hard_summary(video.features, selection.frame_mask, mask)
    reconstructed = reconstructor_forward(reconstructor, summary)
    l_recon = recon_loss(torch.as_tensor(video.features), reconstructed)
    return float(l_recon), float(spar_loss(scores, sigma))


def epoch_validation_losses(selectors: Iterable[SelectorNet], reconstructor: ReconstructorNet,
                            mask: MaskVector, val_videos: Sequence[FrameFeatureSequence],
                            segmentations: Sequence[ShotSegmentation], alpha: float, sigma: float,
                            epochs: Optional[Sequence[int]] = None) -> ValidationRecord:
    """
    selectors - селекторы эпох 1..E в порядке эпох (можно генератор,
    загружающий чекпоинты по одному)
    """
    if len(val_videos) != len(segmentations):
        raise InputError('Для каждого валидационного видео нужна сегментация')
    recon_rows, spar_rows = [], []
    for selector in selectors:
        pairs = [validation_losses_for(selector, reconstructor, mask, video, seg, alpha, sigma)
                 for video, seg in zip(val_videos, segmentations)]
        recon_rows.append([p[0] for p in pairs])
        spar_rows.append([p[1] for p in pairs])
    if not recon_rows:
        raise InputError('Нет чекпоинтов селектора для выбора эпохи')
    epochs = list(epochs) if epochs is not None else list(range(1, len(recon_rows) + 1))
    return ValidationRecord(epochs=epochs, recon_raw=np.array(recon_rows), spar_raw=np.array(spar_rows),
                            video_ids=[v.video_id for v in val_videos])


def normalize_losses(values: Sequence[float]) -> np.ndarray:
    """Min-max нормирование в [0, 1]; постоянный массив даёт нули"""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise InputError('Нужна хотя бы одна эпоха')
    low, high = values.min(), values.max()
    if high == low:
        return np.zeros_like(values)
    return (values - low) / (high - low)


def select_epoch(record: ValidationRecord) -> int:
    """argmax_i (recon_norm_i − spar_norm_i); при равенстве - меньшая эпоха"""
    if not record.epochs:
        raise InputError('Пустая запись валидации')
    difference = record.recon_norm - record.spar_norm
    return int(record.epochs[int(np.argmax(difference))])


def select_reconstructor_joint(recon_means: Sequence[float]) -> int:
    """β = argmin средней валидационной потери реконструкции rNet_i; эпохи с 1"""
    recon_means = np.asarray(recon_means, dtype=np.float64)
    if recon_means.size == 0:
        raise InputError('Нет чекпоинтов для выбора реконструктора')
    return int(np.argmin(recon_means)) + 1


def joint_recon_means(pairs: Iterable[Tuple[SelectorNet, ReconstructorNet]], mask: MaskVector,
                      val_videos: Sequence[FrameFeatureSequence], segmentations: Sequence[ShotSegmentation],
                      alpha: float, sigma: float) -> List[float]:
    """Средняя потеря реконструкции каждой пары (sNet_i, rNet_i) на её собственных жёстких резюме"""
    means = []
    for selector, reconstructor in pairs:
        losses = [validation_losses_for(selector, reconstructor, mask, video, seg, alpha, sigma)[0]
                  for video, seg in zip(val_videos, segmentations)]
        means.append(float(np.mean(losses)))
    return means


@dataclass
class IterationCandidate:
    iteration: int
    epoch: int
    val_recon: float
    checkpoint: str = ''


def select_iteration(candidates: Sequence[IterationCandidate]) -> IterationCandidate:
    """Модель итерации с наименьшей валидационной потерей реконструкции; при равенстве - более ранняя"""
    if not candidates:
        raise InputError('Нет ни одной итерации для выбора')
    losses = np.array([c.val_recon for c in candidates], dtype=np.float64)
    return candidates[int(np.argmin(losses))]


def selection_diagnostics(record: ValidationRecord) -> List[Dict[str, float]]:
    """Таблица кривых: epoch, recon_norm, spar_norm, difference"""
    recon_norm = record.recon_norm
    spar_norm = record.spar_norm
    return [
        {
            'epoch': int(epoch),
            'l_recon': float(record.recon_mean[i]),
            'l_spar': float(record.spar_mean[i]),
            'recon_norm': float(recon_norm[i]),
            'spar_norm': float(spar_norm[i]),
            'difference': float(recon_norm[i] - spar_norm[i]),
        }
        for i, epoch in enumerate(record.epochs)
    ]


def write_selection_csv(path: Union[str, Path], blocks: Sequence[Tuple[int, ValidationRecord, int]],
                        selected_iteration: Optional[int]) -> Path:
    """
    blocks - (итерация, запись валидации, выбранная эпоха); отмечаются
    выбранная эпоха каждой итерации и итоговая итерация
    """
    path = Path(path)
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(SELECTION_COLUMNS)
        for iteration, record, chosen in blocks:
            for row in selection_diagnostics(record):
                writer.writerow([
                    iteration, row['epoch'], repr(row['l_recon']), repr(row['l_spar']),
                    repr(row['recon_norm']), repr(row['spar_norm']), repr(row['difference']),
                    int(row['epoch'] == chosen), int(iteration == selected_iteration),
                ])
    return path


def read_selection_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, newline='', encoding='utf-8') as fh:
        return list(csv.DictReader(fh))
