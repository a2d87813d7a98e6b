"""
Непараметрическая функция f(V, S): оценки шотов и выбор шотов в пределах
бюджета α·L как задача о рюкзаке 0/1.
"""

import json
import logging
import math
from dataclasses import dataclass
from decimal import Decimal
from typing import Any, Dict, Sequence

import numpy as np
import torch

from .dataset_io import FrameFeatureSequence, expand_to_native, mask_to_spans
from .exceptions import InputError
from .segmentation import ShotSegmentation

logger = logging.getLogger(__name__)

# относительный допуск сравнения сумм оценок в ДП
VALUE_TOLERANCE = 1e-12


@dataclass
class ShotSelection:
    shot_scores: np.ndarray
    selected: np.ndarray
    frame_mask: np.ndarray
    native_mask: np.ndarray
    total_value: float
    total_length: int
    budget: int

    def to_export(self, video_id: str, change_points: Sequence[int]) -> Dict[str, Any]:
        """JSON-описание резюме для внешних инструментов нарезки"""
        return {
            'video_id': video_id,
            'change_points': [int(cp) for cp in change_points],
            'shot_scores': [float(v) for v in self.shot_scores],
            'selected': [int(v) for v in self.selected],
            'native_spans': mask_to_spans(self.native_mask),
            'budget': int(self.budget),
            'total_length': int(self.total_length),
            'total_value': float(self.total_value),
        }

    def to_json(self, video_id: str, change_points: Sequence[int]) -> str:
        return json.dumps(self.to_export(video_id, change_points), ensure_ascii=False, sort_keys=True)


def _as_numpy(scores) -> np.ndarray:
    if isinstance(scores, torch.Tensor):
        scores = scores.detach().cpu().double().numpy()
    return np.asarray(scores, dtype=np.float64)


def shot_scores(scores, segmentation: ShotSegmentation) -> np.ndarray:
    """p̂_j - среднее оценок кадров шота j"""
    scores = _as_numpy(scores)
    if scores.ndim != 1 or int(sum(segmentation.shot_lengths)) != scores.shape[0]:
        raise InputError(f'Сегментация на {sum(segmentation.shot_lengths)} кадров не согласуется '
                         f'с {scores.shape[0]} оценками')
    edges = np.concatenate([[0], np.cumsum(segmentation.shot_lengths)])
    return np.array([scores[edges[j]:edges[j + 1]].mean() for j in range(segmentation.n_shots)])


def knapsack_select(values: Sequence[float], lengths: Sequence[int], budget: int) -> np.ndarray:
    """
    Точный рюкзак 0/1 динамическим программированием по (шот, ёмкость).
    Среди оптимумов выбирается меньшая суммарная длина, затем
    лексикографически наименьший вектор Â.
    """
    values = np.asarray(values, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if values.shape != lengths.shape or values.ndim != 1:
        raise InputError('Оценки и длины шотов должны быть векторами одной длины')
    if budget < 0:
        raise InputError(f'Бюджет должен быть неотрицательным, получено {budget}')
    if (lengths <= 0).any():
        raise InputError('Длины шотов должны быть положительными')

    n_items = len(values)
    budget = int(budget)
    # суффиксные таблицы: лучшее (значение, длина) для шотов i..N-1 при ёмкости c
    best_value = np.zeros((n_items + 1, budget + 1))
    best_length = np.zeros((n_items + 1, budget + 1), dtype=np.int64)
    take = np.zeros((n_items, budget + 1), dtype=bool)

    for i in range(n_items - 1, -1, -1):
        skip_value = best_value[i + 1]
        skip_length = best_length[i + 1]
        best_value[i] = skip_value
        best_length[i] = skip_length
        length = int(lengths[i])
        if length > budget:
            continue
        take_value = values[i] + skip_value[:budget + 1 - length]
        take_length = length + skip_length[:budget + 1 - length]
        rest_value = skip_value[length:]
        rest_length = skip_length[length:]
        tol = VALUE_TOLERANCE * np.maximum(1.0, np.abs(rest_value))
        better = (take_value > rest_value + tol) | (
            (np.abs(take_value - rest_value) <= tol) & (take_length < rest_length))
        cols = np.flatnonzero(better) + length
        take[i, cols] = True
        best_value[i, cols] = take_value[better]
        best_length[i, cols] = take_length[better]

    # прямой проход: пропуск предпочитается при равенстве
    selected = np.zeros(n_items, dtype=np.int8)
    capacity = budget
    for i in range(n_items):
        if take[i, capacity]:
            selected[i] = 1
            capacity -= int(lengths[i])
    return selected


def summary_budget(alpha: float, n_frames_original: int) -> int:
    """floor(α·L) без ошибок двоичного представления α"""
    return int(math.floor(Decimal(repr(float(alpha))) * int(n_frames_original)))


def summarize(video: FrameFeatureSequence, scores, segmentation: ShotSegmentation,
              alpha: float) -> ShotSelection:
    if not 0 < alpha < 1:
        raise InputError(f'α должно лежать в (0, 1), получено {alpha}')
    budget = summary_budget(alpha, video.n_frames_original)
    p_hat = shot_scores(scores, segmentation)
    native_lengths = np.asarray(segmentation.shot_lengths_native, dtype=np.int64)
    selected = knapsack_select(p_hat, native_lengths, budget)

    frame_mask = np.repeat(selected, segmentation.shot_lengths).astype(np.int8)
    native_mask = expand_to_native(frame_mask, video.picks, video.n_frames_original).astype(np.int8)
    total_length = int((selected * native_lengths).sum())
    total_value = float(p_hat[selected.astype(bool)].sum())
    logger.debug(f'Видео {video.video_id}: выбрано шотов {int(selected.sum())} из {len(selected)}, '
                 f'длина {total_length}/{budget}')
    return ShotSelection(shot_scores=p_hat, selected=selected, frame_mask=frame_mask,
                         native_mask=native_mask, total_value=total_value,
                         total_length=total_length, budget=budget)
