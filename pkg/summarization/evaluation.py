"""
Оценка резюме по F-мере ключевых шотов (шкала 0-100) и агрегация по
разбиениям и seed'ам.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from .dataset_io import FrameFeatureSequence, ReferenceSummaries, SplitSpec
from .exceptions import DataError, InputError
from .networks import SumSRModel, selector_forward
from .segmentation import ShotSegmentation, segment_video
from .summarizer import summarize

logger = logging.getLogger(__name__)

EVAL_COLUMNS = ['dataset', 'variant', 'sigma', 'split', 'seed', 'video_id', 'fscore']
MODE_ALIASES = {'max': 'max_over_users', 'mean': 'mean_over_users', 'single': 'single'}
ORACLE_COLUMNS = ['dataset', 'variant', 'sigma', 'split', 'seed', 'selected_iteration', 'selected_epoch',
                  'selected_fscore', 'best_iteration', 'best_epoch', 'best_fscore']


@dataclass
class EvalResult:
    per_video_f: Dict[str, float] = field(default_factory=dict)
    split_mean: float = 0.0
    per_seed_means: List[float] = field(default_factory=list)
    seed_std: float = 0.0


def fscore(pred, ref) -> float:
    """F-мера пересечения масок в исходных кадрах, 0 при пустой маске или пустом пересечении"""
    pred = np.asarray(pred).astype(bool)
    ref = np.asarray(ref).astype(bool)
    if pred.shape != ref.shape:
        raise InputError(f'Длины масок различаются: {pred.shape[0]} и {ref.shape[0]}')
    overlap = int(np.logical_and(pred, ref).sum())
    if overlap == 0:
        return 0.0
    precision = overlap / pred.sum()
    recall = overlap / ref.sum()
    return float(2 * precision * recall / (precision + recall) * 100)


def video_fscore(pred, refs: ReferenceSummaries, mode: Optional[str] = None) -> float:
    mode = MODE_ALIASES.get(mode, mode) if mode else refs.aggregation_mode
    if not refs.per_user_masks:
        raise DataError('Нет эталонных резюме для оценки')
    scores = [fscore(pred, mask) for mask in refs.per_user_masks]
    if mode == 'max_over_users':
        return float(max(scores))
    if mode == 'mean_over_users':
        return float(np.mean(scores))
    if mode == 'single':
        if len(scores) != 1:
            raise DataError(f'Режим single требует ровно одно эталонное резюме, получено {len(scores)}')
        return scores[0]
    raise InputError(f'Неизвестный режим агрегации {mode!r}')


@torch.no_grad()
def predict_selection(model: SumSRModel, video: FrameFeatureSequence, segmentation: ShotSegmentation,
                      alpha: float):
    scores = selector_forward(model.selector, video.features)
    return summarize(video, scores, segmentation, alpha)


def evaluate_split(model: SumSRModel, dataset: Sequence[Tuple[FrameFeatureSequence, ReferenceSummaries]],
                   split: SplitSpec, alpha: float, mode: Optional[str] = None,
                   kts_max_change_points: Optional[int] = None, kts_penalty_weight: float = 1.0) -> EvalResult:
    """селектор -> резюме -> маска в исходных кадрах -> F-мера для каждого тестового видео"""
    lookup = {video.video_id: (video, refs) for video, refs in dataset}
    per_video = {}
    for video_id in split.test_ids:
        if video_id not in lookup:
            raise DataError(f'Тестовое видео {video_id} отсутствует в датасете')
        video, refs = lookup[video_id]
        if refs is None or not refs.per_user_masks:
            raise DataError(f'Видео {video_id}: нет эталонных резюме')
        segmentation = segment_video(video, kts_max_change_points, kts_penalty_weight)
        selection = predict_selection(model, video, segmentation, alpha)
        per_video[video_id] = video_fscore(selection.native_mask, refs, mode)
    split_mean = float(np.mean(list(per_video.values())))
    logger.info(f'Разбиение {split.split_id}: средняя F-мера {split_mean:.2f} по {len(per_video)} видео')
    return EvalResult(per_video_f=per_video, split_mean=split_mean)


def combine_splits(results: Sequence[EvalResult]) -> EvalResult:
    """Результаты одного seed'а по нескольким разбиениям: среднее по разбиениям"""
    per_video = {}
    for result in results:
        per_video.update(result.per_video_f)
    return EvalResult(per_video_f=per_video, split_mean=float(np.mean([r.split_mean for r in results])))


def aggregate_seeds(results: Sequence[EvalResult]) -> EvalResult:
    """Среднее средних по seed'ам и популяционное стандартное отклонение"""
    if not results:
        raise InputError('Нет результатов для агрегации')
    means = [float(r.split_mean) for r in results]
    return EvalResult(split_mean=float(np.mean(means)), per_seed_means=means, seed_std=float(np.std(means)))


def random_baseline(video: FrameFeatureSequence, segmentation: ShotSegmentation, references: ReferenceSummaries,
                    alpha: float, draws: int = 1000, seed: int = 0, mode: Optional[str] = None) -> float:
    """Средняя F-мера резюме из равномерно случайных оценок кадров при том же бюджете"""
    rng = np.random.default_rng(seed)
    values = [video_fscore(summarize(video, rng.random(video.n), segmentation, alpha).native_mask, references, mode)
              for _ in range(draws)]
    return float(np.mean(values))


def iteration_table(fscores: Sequence[float]) -> List[Dict[str, float]]:
    """Строка на итерацию: F-мера и лучшее значение к этой итерации"""
    rows = []
    best = -np.inf
    for k, value in enumerate(fscores, start=1):
        best = max(best, float(value))
        rows.append({'iteration': k, 'fscore': float(value), 'best_so_far': best})
    return rows


def results_table(rows: Sequence[Dict]) -> Tuple[List[str], List[List[str]]]:
    """
    Таблица результатов: строка на вариант, столбец на датасет,
    ячейка «среднее ± std» по seed'ам. rows - словари variant, dataset, mean, std;
    если есть best_mean/best_std, добавляются столбцы «<dataset> (best)».
    """
    datasets = sorted({row['dataset'] for row in rows})
    variants = []
    for row in rows:
        if row['variant'] not in variants:
            variants.append(row['variant'])
    cells = {(row['variant'], row['dataset']): f"{row['mean']:.2f} ± {row['std']:.2f}" for row in rows}
    best = {(row['variant'], row['dataset']): f"{row['best_mean']:.2f} ± {row['best_std']:.2f}"
            for row in rows if 'best_mean' in row}
    columns = [(ds, cells) for ds in datasets]
    if best:
        columns += [(ds, best) for ds in datasets]
    header = ['variant'] + datasets + ([f'{ds} (best)' for ds in datasets] if best else [])
    body = [[variant] + [table.get((variant, ds), '-') for ds, table in columns] for variant in variants]
    return header, body


def format_table(header: Sequence[str], body: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(x)) for x in column) for column in zip(header, *body)]
    lines = ['  '.join(str(cell).ljust(width) for cell, width in zip(line, widths)) for line in [header, *body]]
    return '\n'.join(lines)


def write_eval_csv(path: Union[str, Path], rows: Sequence[Dict]) -> Path:
    """eval.csv: строки по видео и агрегатные строки (video_id = __split_mean__ / __seed_mean__ / __mean__ / __std__)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.DictWriter(fh, fieldnames=EVAL_COLUMNS, lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if k == 'fscore' else v) for k, v in row.items()})
    return path


def write_iteration_csv(path: Union[str, Path], rows: Sequence[Dict]) -> Path:
    """Таблица по итерациям: variant, sigma, iteration, fscore, best_so_far"""
    path = Path(path)
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(['variant', 'sigma', 'iteration', 'fscore', 'best_so_far'])
        for row in rows:
            writer.writerow([row['variant'], row['sigma'], row['iteration'],
                             repr(float(row['fscore'])), repr(float(row['best_so_far']))])
    return path


@dataclass
class OracleResult:
    """Выбранный без учителя чекпоинт против лучшего по тестовой F-мере"""
    selected_iteration: int
    selected_epoch: int
    selected_fscore: float
    best_iteration: int
    best_epoch: int
    best_fscore: float
    per_checkpoint: List[Tuple[int, int, float]] = field(default_factory=list)


def oracle_checkpoints(checkpoints: Sequence[Tuple[int, int, SumSRModel]], selected: Tuple[int, int],
                       dataset: Sequence[Tuple[FrameFeatureSequence, ReferenceSummaries]], split: SplitSpec,
                       alpha: float, mode: Optional[str] = None, kts_max_change_points: Optional[int] = None,
                       kts_penalty_weight: float = 1.0) -> OracleResult:
    """
    Оценивает на тестовых видео каждый чекпоинт селектора (iteration, epoch, model).
    Лучший - с максимальной средней F-мерой, при равенстве более ранний.
    Модели можно отдавать генератором: каждая используется один раз.
    """
    scores = []
    for iteration, epoch, model in checkpoints:
        result = evaluate_split(model, dataset, split, alpha, mode, kts_max_change_points, kts_penalty_weight)
        scores.append((int(iteration), int(epoch), result.split_mean))
    if not scores:
        raise InputError('Нет чекпоинтов для оценки')
    lookup = {(k, e): f for k, e, f in scores}
    if tuple(selected) not in lookup:
        raise InputError(f'Выбранный чекпоинт {tuple(selected)} отсутствует среди оценённых')
    best = max(scores, key=lambda item: item[2])
    return OracleResult(selected_iteration=int(selected[0]), selected_epoch=int(selected[1]),
                        selected_fscore=lookup[tuple(selected)], best_iteration=best[0], best_epoch=best[1],
                        best_fscore=best[2], per_checkpoint=scores)


def write_oracle_csv(path: Union[str, Path], rows: Sequence[Dict]) -> Path:
    """Выбранный и лучший чекпоинт каждого запуска"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.DictWriter(fh, fieldnames=ORACLE_COLUMNS, lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if k.endswith('_fscore') else v) for k, v in row.items()})
    return path
