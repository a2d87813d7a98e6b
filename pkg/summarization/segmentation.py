"""
Kernel Temporal Segmentation (KTS) с линейным ядром: разбиение видео на шоты
точным динамическим программированием по кумулятивной матрице Грама.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dataset_io import native_bounds
from .exceptions import InputError

logger = logging.getLogger(__name__)


@dataclass
class ShotSegmentation:
    change_points: List[int]
    shot_lengths: List[int]
    shot_lengths_native: List[int]

    @property
    def n_shots(self) -> int:
        return len(self.shot_lengths)

    def boundaries(self) -> List[Tuple[int, int]]:
        """Полуоткрытые интервалы шотов в прореженных кадрах"""
        edges = [0] + list(self.change_points) + [sum(self.shot_lengths)]
        return [(edges[j], edges[j + 1]) for j in range(len(edges) - 1)]

    def frame_to_shot(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_shots), self.shot_lengths)


def calc_scatters(K: np.ndarray) -> np.ndarray:
    """
    scatters[i, j] - внутрисегментный разброс Σ‖x_t − μ‖² отрезка кадров i..j
    (включительно), вычисленный через кумулятивные суммы матрицы ядра
    """
    n = K.shape[0]
    K1 = np.concatenate([[0.0], np.cumsum(np.diag(K))])
    K2 = np.zeros((n + 1, n + 1))
    K2[1:, 1:] = np.cumsum(np.cumsum(K, 0), 1)

    diagK2 = np.diag(K2)
    i = np.arange(n).reshape((-1, 1))
    j = np.arange(n).reshape((1, -1))
    lengths = (j - i + 1).astype(float)
    lengths[lengths <= 0] = 1.0
    scatters = (K1[1:].reshape((1, -1)) - K1[:-1].reshape((-1, 1))
                - (diagK2[1:].reshape((1, -1)) + diagK2[:-1].reshape((-1, 1))
                   - K2[1:, :-1].T - K2[:-1, 1:]) / lengths)
    scatters[j < i] = 0.0
    # Ошибки округления не должны давать отрицательный разброс
    np.maximum(scatters, 0.0, out=scatters)
    return scatters


def segment_costs(scatters: np.ndarray, max_change_points: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    I[k, l] - минимальный суммарный разброс первых l кадров при k точках смены,
    prev[k, l] - позиция последней точки смены в оптимуме
    """
    n = scatters.shape[0]
    m = int(max_change_points)
    I = np.full((m + 1, n + 1), np.inf)
    I[0, 1:] = scatters[0, :]
    prev = np.zeros((m + 1, n + 1), dtype=np.int64)

    for k in range(1, m + 1):
        for l in range(k + 1, n + 1):
            # последний сегмент [t, l), t ∈ [k, l-1]
            c = scatters[k:l, l - 1] + I[k - 1, k:l]
            best = int(np.argmin(c))
            I[k, l] = c[best]
            prev[k, l] = best + k
    return I, prev


def _backtrack(prev: np.ndarray, k: int, n: int) -> List[int]:
    cps = [0] * k
    cur = n
    for j in range(k, 0, -1):
        cps[j - 1] = int(prev[j, cur])
        cur = cps[j - 1]
    return cps


def segmentation_from_change_points(change_points: Sequence[int], picks: Sequence[int],
                                    n_frames_original: int) -> ShotSegmentation:
    n = len(picks)
    cps = [int(cp) for cp in change_points]
    if any(cp <= 0 or cp >= n for cp in cps):
        raise InputError(f'Точки смены должны лежать в (0, {n}), получено {cps}')
    if any(b <= a for a, b in zip(cps, cps[1:])):
        raise InputError(f'Точки смены должны строго возрастать: {cps}')

    edges = [0] + cps + [n]
    shot_lengths = [edges[j + 1] - edges[j] for j in range(len(edges) - 1)]
    bounds = native_bounds(picks, n_frames_original)
    native_edges = bounds[edges]
    shot_lengths_native = [int(native_edges[j + 1] - native_edges[j]) for j in range(len(edges) - 1)]
    if any(length <= 0 for length in shot_lengths_native):
        raise InputError('Шот нулевой длины в исходной частоте кадров')
    return ShotSegmentation(change_points=cps, shot_lengths=shot_lengths,
                            shot_lengths_native=shot_lengths_native)


def segmentation_from_annotation(change_points: Sequence[int], picks: Sequence[int],
                                 n_frames_original: int) -> ShotSegmentation:
    """Оборачивает точки смены из разметки датасета"""
    return segmentation_from_change_points(change_points, picks, n_frames_original)


def penalized_objective(costs: np.ndarray, n: int, penalty_weight: float) -> np.ndarray:
    """J(k) + w·k·(log(n/k) + 1); для k = 0 штраф нулевой"""
    k = np.arange(len(costs), dtype=float)
    penalty = np.zeros_like(k)
    positive = k > 0
    penalty[positive] = penalty_weight * k[positive] * (np.log(n / k[positive]) + 1.0)
    return costs + penalty


def kts_segment(features: np.ndarray, max_change_points: Optional[int] = None,
                penalty_weight: float = 1.0, picks: Optional[Sequence[int]] = None,
                n_frames_original: Optional[int] = None) -> ShotSegmentation:
    """
    KTS с автоматическим выбором числа точек смены: k минимизирует
    J(k) + penalty_weight·k·(log(n/k)+1), при равенстве выбирается меньшее k
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise InputError('Для KTS нужно не менее двух кадров')
    n = features.shape[0]
    if max_change_points is None:
        max_change_points = n // 10
    if max_change_points < 0 or penalty_weight < 0:
        raise InputError('max_change_points и penalty_weight должны быть неотрицательными')
    if picks is None:
        picks = list(range(n))
        n_frames_original = n
    elif n_frames_original is None:
        raise InputError('Вместе с picks нужно передать n_frames_original')

    max_change_points = min(int(max_change_points), n - 1)
    if n == 2:
        max_change_points = 0

    K = features @ features.T
    scatters = calc_scatters(K)
    I, prev = segment_costs(scatters, max_change_points)
    costs = I[:, n]
    objective = penalized_objective(costs, n, penalty_weight)
    # argmin возвращает первый минимум - меньшее число точек смены
    k = int(np.argmin(objective))
    change_points = _backtrack(prev, k, n)
    logger.debug(f'KTS: n={n}, выбрано точек смены {k} из {max_change_points}')
    return segmentation_from_change_points(change_points, picks, n_frames_original)


def segment_video(video, max_change_points: Optional[int] = None, penalty_weight: float = 1.0) -> ShotSegmentation:
    """Сегментация видео: точки смены из разметки, если есть, иначе KTS"""
    if video.change_points is not None:
        return segmentation_from_annotation(video.change_points, video.picks, video.n_frames_original)
    return kts_segment(video.features, max_change_points, penalty_weight,
                       picks=video.picks, n_frames_original=video.n_frames_original)
