"""
Поэтапное итеративное обучение SUM-SR.

Этапы: mask (отдельное обучение вектора маски с одноразовым
реконструктором), reconstructor (реконструкция по случайно замаскированному
видео), selector (селектор при замороженных реконструкторе и маске),
joint (селектор и реконструктор вместе, m = 0). Варианты задают
последовательность этапов; после каждой итерации выбирается эпоха
селектора, после всех итераций - итоговая модель.
"""

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from django.conf import settings

from .checkpoints import CheckpointStore
from .dataset_io import FrameFeatureSequence, ReferenceSummaries, SplitSpec
from .exceptions import ContractError, InputError, SumSRError, TrainingError
from .losses import mask_loss, model_loss, recon_loss, spar_loss
from .networks import (MaskVector, ReconstructorNet, SumSRModel, blend_summary,
                       new_reconstructor, parameter_counts, random_mask, reconstructor_forward,
                       selector_forward)
from .run_config import TrainingConfig, kts_settings
from .segmentation import segment_video
from .selection import (IterationCandidate, ValidationRecord, epoch_validation_losses, joint_recon_means,
                        select_epoch, select_iteration, select_reconstructor_joint, write_selection_csv)

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ['iteration', 'stage', 'epoch', 'l_recon', 'l_spar', 'l_model', 'l_mask', 'val_l_recon']
# время эпох пишется отдельно: metrics.csv должен совпадать побайтно при повторном запуске
TIMING_COLUMNS = ['iteration', 'stage', 'epoch', 'seconds']
STAGE_CODES = {'mask': 0, 'reconstructor': 1, 'selector': 2, 'joint': 3}
MAX_MASK_RESAMPLES = 100

# последовательность этапов первой итерации для каждого варианта
VARIANT_SCHEDULES = {
    'joint': ['joint'],
    'sep': ['reconstructor', 'selector'],
    'sepMa': ['reconstructor', 'selector'],
    'sep-Ma': ['mask', 'reconstructor', 'selector'],
    'iter': ['reconstructor', 'selector'],
}


def stage_schedule(variant: str, iterations: int) -> List[Tuple[int, str]]:
    """Полная последовательность (итерация, этап) варианта"""
    if variant not in VARIANT_SCHEDULES:
        raise InputError(f'Неизвестный вариант {variant!r}')
    schedule = [(1, stage) for stage in VARIANT_SCHEDULES[variant]]
    if variant == 'iter':
        for k in range(2, iterations + 1):
            schedule += [(k, 'reconstructor'), (k, 'selector')]
    return schedule


def stage_rng(seed: int, iteration: int, stage: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(iteration), STAGE_CODES[stage]])


def configure_determinism(seed: int) -> None:
    torch.manual_seed(int(seed))
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(int(getattr(settings, 'SUMSR_NUM_THREADS', 1)))


class MetricsLog:
    """metrics.csv (или timing.csv): одна строка на эпоху этапа; числа записываются через repr"""

    def __init__(self, path: Optional[Union[str, Path]] = None, columns: Sequence[str] = METRICS_COLUMNS):
        self.path = Path(path) if path is not None else None
        self.columns = list(columns)
        self.rows: List[Dict[str, object]] = []
        if self.path is not None:
            with open(self.path, 'w', newline='', encoding='utf-8') as fh:
                csv.writer(fh, lineterminator='\n').writerow(self.columns)

    def append(self, iteration: int, stage: str, epoch: int, **values: Optional[float]) -> None:
        row = {'iteration': iteration, 'stage': stage, 'epoch': epoch}
        for column in self.columns[3:]:
            row[column] = values.get(column)
        self.rows.append(row)
        if self.path is not None:
            with open(self.path, 'a', newline='', encoding='utf-8') as fh:
                csv.writer(fh, lineterminator='\n').writerow(
                    [row[c] if c in ('iteration', 'stage', 'epoch') else ('' if row[c] is None else repr(float(row[c])))
                     for c in self.columns])

    def stages(self) -> List[Tuple[int, str]]:
        """Выполненные этапы в порядке выполнения"""
        seen = []
        for row in self.rows:
            key = (row['iteration'], row['stage'])
            if not seen or seen[-1] != key:
                seen.append(key)
        return seen


@dataclass
class StageContext:
    """Общие параметры этапа: куда писать чекпоинты и метрики"""
    iteration: int = 1
    store: Optional[CheckpointStore] = None
    metrics: Optional[MetricsLog] = None
    timing: Optional[MetricsLog] = None


@dataclass
class ReconstructorStageResult:
    epochs: List[int]
    train_losses: List[float]
    val_losses: List[float]
    best_epoch: int


@dataclass
class SelectorStageResult:
    epochs: List[int]
    losses: List[Dict[str, float]]


@dataclass
class TrainingRunRecord:
    variant: str
    run_dir: Optional[Path]
    schedule: List[Tuple[int, str]] = field(default_factory=list)
    reference_epochs: Dict[int, int] = field(default_factory=dict)
    iteration_selections: List[IterationCandidate] = field(default_factory=list)
    final: Optional[IterationCandidate] = None
    records: List[Tuple[int, ValidationRecord, int]] = field(default_factory=list)
    model: Optional[SumSRModel] = None
    parameters: Dict[str, int] = field(default_factory=dict)
    training_seconds: float = 0.0


# === Шаг оптимизации ===

def _check_finite(loss: torch.Tensor, what: str, epoch: int) -> None:
    if not torch.isfinite(loss.detach()).all():
        raise TrainingError(f'Потеря {what} расходится: {float(loss.detach())}', epoch=epoch)


def optimization_step(optimizer: torch.optim.Optimizer, params: Sequence[torch.nn.Parameter],
                      loss: torch.Tensor, clip_value: float) -> None:
    """backward, поэлементное ограничение градиента в [−clip, clip], шаг Adam"""
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    torch.nn.utils.clip_grad_value_(params, clip_value)
    for param in params:
        if param.grad is not None and float(param.grad.abs().max()) > clip_value:
            raise ContractError(f'Градиент превышает {clip_value} после ограничения')
    optimizer.step()


def make_optimizer(params: Sequence[torch.nn.Parameter], config: TrainingConfig) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=config.learning_rate, betas=(0.9, 0.999), eps=1e-8)


def _features(video: FrameFeatureSequence, model: SumSRModel) -> torch.Tensor:
    return torch.as_tensor(video.features).to(dtype=model.dtype, device=model.device)


def _random_mask_nonempty(features: torch.Tensor, mask: MaskVector, alpha: float,
                          rng: np.random.Generator, video_id: str, epoch: int):
    for _ in range(MAX_MASK_RESAMPLES):
        masked, masked_indices = random_mask(features, mask, alpha, rng)
        if masked_indices.size:
            return masked, masked_indices
        logger.warning(f'Видео {video_id}: случайная маска не закрыла ни одного кадра, перевыбираем')
    raise TrainingError(f'Видео {video_id}: не удалось получить непустую маску', epoch=epoch)


def _set_trainable(module: torch.nn.Module, flag: bool) -> None:
    for param in module.parameters():
        param.requires_grad_(flag)


def _order(rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.permutation(count)


def _log_epoch(ctx: StageContext, stage: str, epoch: int, started: float, **losses) -> None:
    seconds = time.perf_counter() - started
    text = ', '.join(f'{k}={v:.6f}' for k, v in losses.items() if v is not None)
    logger.info(f'Итерация {ctx.iteration}, этап {stage}, эпоха {epoch} ({seconds:.2f} с): {text}')
    if ctx.metrics is not None:
        ctx.metrics.append(ctx.iteration, stage, epoch, **losses)
    if ctx.timing is not None:
        ctx.timing.append(ctx.iteration, stage, epoch, seconds=seconds)


# === Этапы ===

def train_mask_stage(config: TrainingConfig, train_videos: Sequence[FrameFeatureSequence],
                     model: SumSRModel, rng: np.random.Generator,
                     ctx: Optional[StageContext] = None) -> Tuple[MaskVector, ReconstructorNet]:
    """Обучает m вместе с одноразовым реконструктором R на L_mask; после этапа m заморожен"""
    if config.variant != 'sep-Ma':
        raise ContractError(f'Отдельный этап обучения маски есть только у варианта sep-Ma, а не {config.variant}')
    ctx = ctx or StageContext()
    dtype = model.dtype
    mask = model.mask
    with torch.no_grad():
        mask.m.zero_()
    mask.trainable = True
    throwaway = new_reconstructor(config.d, config.d_h, seed=int(rng.integers(2 ** 31)), dtype=dtype).to(model.device)
    params = list(throwaway.parameters()) + [mask.m]
    optimizer = make_optimizer(params, config)
    tensors = [_features(v, model) for v in train_videos]

    for epoch in range(1, config.mask_stage_epochs + 1):
        started = time.perf_counter()
        losses = []
        for idx in _order(rng, len(train_videos)):
            masked, masked_indices = _random_mask_nonempty(tensors[idx], mask, config.alpha, rng,
                                                           train_videos[idx].video_id, epoch)
            reconstructed = reconstructor_forward(throwaway, masked)
            loss = mask_loss(masked, reconstructed, masked_indices)
            _check_finite(loss, 'L_mask', epoch)
            optimization_step(optimizer, params, loss, config.clip_value)
            losses.append(float(loss.detach()))
        _log_epoch(ctx, 'mask', epoch, started, l_mask=float(np.mean(losses)))
        if ctx.store is not None:
            ctx.store.save(model, ctx.iteration, 'mask', epoch, {'l_mask': float(np.mean(losses))})

    mask.trainable = False
    return mask, throwaway


@torch.no_grad()
def validation_reconstruction(reconstructor: ReconstructorNet, mask: MaskVector,
                              val_videos: Sequence[FrameFeatureSequence], alpha: float,
                              validation_mask_seed: int) -> float:
    """Средняя L_recon на фиксированных по seed масках валидационных видео"""
    m = mask.m
    losses = []
    for j, video in enumerate(val_videos):
        features = torch.as_tensor(video.features).to(dtype=m.dtype, device=m.device)
        masked, _ = random_mask(features, mask, alpha, np.random.default_rng([int(validation_mask_seed), j]))
        losses.append(float(recon_loss(features, reconstructor_forward(reconstructor, masked))))
    return float(np.mean(losses))


def train_reconstructor_stage(config: TrainingConfig, train_videos: Sequence[FrameFeatureSequence],
                              model: SumSRModel, mask_trainable: bool, rng: np.random.Generator,
                              val_videos: Sequence[FrameFeatureSequence],
                              ctx: Optional[StageContext] = None) -> ReconstructorStageResult:
    """
    E эпох L_recon = ‖V − rNet(V′)‖² по случайно замаскированным видео.
    После этапа в модель загружается эпоха с минимальной валидационной
    потерей (rNet_0), если чекпоинты пишутся на диск.
    """
    if not val_videos:
        raise InputError('Для выбора rNet_0 нужны валидационные видео')
    ctx = ctx or StageContext()
    reconstructor, mask = model.reconstructor, model.mask
    mask.trainable = bool(mask_trainable)
    _set_trainable(reconstructor, True)
    params = list(reconstructor.parameters()) + ([mask.m] if mask_trainable else [])
    optimizer = make_optimizer(params, config)
    tensors = [_features(v, model) for v in train_videos]

    train_losses, val_losses, epochs = [], [], []
    for epoch in range(1, config.epochs_per_stage + 1):
        started = time.perf_counter()
        losses = []
        for idx in _order(rng, len(train_videos)):
            masked, _ = random_mask(tensors[idx], mask, config.alpha, rng)
            reconstructed = reconstructor_forward(reconstructor, masked)
            loss = recon_loss(tensors[idx], reconstructed)
            _check_finite(loss, 'L_recon', epoch)
            optimization_step(optimizer, params, loss, config.clip_value)
            losses.append(float(loss.detach()))
        val_loss = validation_reconstruction(reconstructor, mask, val_videos, config.alpha,
                                             config.validation_mask_seed)
        epochs.append(epoch)
        train_losses.append(float(np.mean(losses)))
        val_losses.append(val_loss)
        _log_epoch(ctx, 'reconstructor', epoch, started, l_recon=train_losses[-1], val_l_recon=val_loss)
        if ctx.store is not None:
            ctx.store.save(model, ctx.iteration, 'reconstructor', epoch,
                           {'l_recon': train_losses[-1], 'val_l_recon': val_loss})

    mask.trainable = False
    best_epoch = int(np.argmin(val_losses)) + 1
    if ctx.store is not None:
        ctx.store.load_into(model, ctx.iteration, 'reconstructor', best_epoch)
    logger.info(f'Итерация {ctx.iteration}: rNet_0 - эпоха {best_epoch} '
                f'(валидационная L_recon {val_losses[best_epoch - 1]:.6f})')
    return ReconstructorStageResult(epochs=epochs, train_losses=train_losses, val_losses=val_losses,
                                    best_epoch=best_epoch)


def _blended_losses(model: SumSRModel, features: torch.Tensor, sigma: float):
    scores = selector_forward(model.selector, features)
    blended = blend_summary(features, scores, model.mask)
    reconstructed = reconstructor_forward(model.reconstructor, blended)
    l_recon = recon_loss(features, reconstructed)
    l_spar = spar_loss(scores, sigma)
    return l_recon, l_spar, model_loss(l_recon, l_spar)


def _train_blended(config: TrainingConfig, train_videos: Sequence[FrameFeatureSequence], model: SumSRModel,
                   params: List[torch.nn.Parameter], stage: str, rng: np.random.Generator,
                   ctx: StageContext) -> SelectorStageResult:
    optimizer = make_optimizer(params, config)
    tensors = [_features(v, model) for v in train_videos]
    epochs, history = [], []
    for epoch in range(1, config.epochs_per_stage + 1):
        started = time.perf_counter()
        sums = {'l_recon': [], 'l_spar': [], 'l_model': []}
        for idx in _order(rng, len(train_videos)):
            l_recon, l_spar, l_model = _blended_losses(model, tensors[idx], config.sigma)
            _check_finite(l_model, 'L_model', epoch)
            optimization_step(optimizer, params, l_model, config.clip_value)
            sums['l_recon'].append(float(l_recon.detach()))
            sums['l_spar'].append(float(l_spar.detach()))
            sums['l_model'].append(float(l_model.detach()))
        means = {k: float(np.mean(v)) for k, v in sums.items()}
        epochs.append(epoch)
        history.append(means)
        _log_epoch(ctx, stage, epoch, started, **means)
        if ctx.store is not None:
            ctx.store.save(model, ctx.iteration, stage, epoch, means)
    return SelectorStageResult(epochs=epochs, losses=history)


def train_selector_stage(config: TrainingConfig, train_videos: Sequence[FrameFeatureSequence],
                         model: SumSRModel, rng: np.random.Generator,
                         ctx: Optional[StageContext] = None) -> SelectorStageResult:
    """Только селектор на L_model через смешанное резюме; реконструктор и m заморожены"""
    ctx = ctx or StageContext()
    model.mask.trainable = False
    _set_trainable(model.reconstructor, False)
    _set_trainable(model.selector, True)
    try:
        return _train_blended(config, train_videos, model, list(model.selector.parameters()),
                              'selector', rng, ctx)
    finally:
        _set_trainable(model.reconstructor, True)


def train_joint(config: TrainingConfig, train_videos: Sequence[FrameFeatureSequence],
                model: SumSRModel, rng: np.random.Generator,
                ctx: Optional[StageContext] = None) -> SelectorStageResult:
    """Селектор и реконструктор совместно на L_model; m остаётся нулевым"""
    if config.variant != 'joint':
        raise ContractError(f'Совместное обучение относится к варианту joint, а не {config.variant}')
    ctx = ctx or StageContext()
    with torch.no_grad():
        model.mask.m.zero_()
    model.mask.trainable = False
    _set_trainable(model.selector, True)
    _set_trainable(model.reconstructor, True)
    params = list(model.selector.parameters()) + list(model.reconstructor.parameters())
    return _train_blended(config, train_videos, model, params, 'joint', rng, ctx)


# === Выбор модели итерации ===

def _checkpoint_models(store: CheckpointStore, template: SumSRModel, iteration: int,
                       stage: str) -> Iterator[SumSRModel]:
    """Загружает чекпоинты этапа по одному в отдельную модель-шаблон"""
    for epoch in store.epochs(iteration, stage):
        store.load_into(template, iteration, stage, epoch)
        yield template


def _scratch_model(config: TrainingConfig, like: SumSRModel) -> SumSRModel:
    return SumSRModel(config.d, config.d_h, config.tau, seed=0, dtype=like.dtype).to(like.device)


def select_within_iteration(config: TrainingConfig, store: CheckpointStore, model: SumSRModel,
                            iteration: int, stage: str, val_videos, segmentations) -> Tuple[ValidationRecord, int, int]:
    """
    Возвращает (запись валидации, выбранная эпоха, эпоха эталонного
    реконструктора). Для этапа selector эталон - rNet_0 из model; для joint
    эталоном становится rNet_β.
    """
    scratch = _scratch_model(config, model)
    reference = model
    reference_epoch = 0
    if stage == 'joint':
        pairs = ((m.selector, m.reconstructor) for m in _checkpoint_models(store, scratch, iteration, stage))
        means = joint_recon_means(pairs, model.mask, val_videos, segmentations, config.alpha, config.sigma)
        reference_epoch = select_reconstructor_joint(means)
        reference = _scratch_model(config, model)
        store.load_into(reference, iteration, stage, reference_epoch)
        logger.info(f'Итерация {iteration}: эталонный реконструктор rNet_β - эпоха {reference_epoch}')

    selectors = (m.selector for m in _checkpoint_models(store, scratch, iteration, stage))
    record = epoch_validation_losses(selectors, reference.reconstructor, model.mask, val_videos,
                                     segmentations, config.alpha, config.sigma,
                                     epochs=store.epochs(iteration, stage))
    epoch = select_epoch(record)
    logger.info(f'Итерация {iteration}: выбрана эпоха селектора {epoch}')
    return record, epoch, reference_epoch


# === Варианты ===

def _videos_by_id(dataset: Sequence[Tuple[FrameFeatureSequence, ReferenceSummaries]],
                  ids: Sequence[str]) -> List[FrameFeatureSequence]:
    lookup = {video.video_id: video for video, _ in dataset}
    return [lookup[video_id] for video_id in ids]


def run_variant(config: TrainingConfig, dataset: Sequence[Tuple[FrameFeatureSequence, ReferenceSummaries]],
                split: SplitSpec, run_dir: Union[str, Path]) -> TrainingRunRecord:
    """Выполняет последовательность этапов варианта, выбор эпох и итоговой итерации"""
    split.validate([video.video_id for video, _ in dataset])
    dims = {video.d for video, _ in dataset}
    if dims != {config.d}:
        raise InputError(f'Размерность признаков датасета {sorted(dims)} не совпадает с d={config.d}')

    configure_determinism(config.seed)
    run_dir = Path(run_dir)
    kts = kts_settings(config)
    store = CheckpointStore(run_dir, config.variant, segmentation=kts)
    store.write_run_json({'config': config.to_dict(), 'seed': config.seed, 'split': split.to_dict()})
    metrics = MetricsLog(store.metrics_path)
    timing = MetricsLog(store.timing_path, TIMING_COLUMNS)

    train_videos = _videos_by_id(dataset, split.train_ids)
    val_videos = _videos_by_id(dataset, split.val_ids)
    segmentations = [segment_video(v, kts['kts_max_change_points'], kts['kts_penalty_weight'])
                     for v in val_videos]

    dtype = config.torch_dtype
    model = SumSRModel(config.d, config.d_h, config.tau, seed=config.seed, dtype=dtype).to(settings.SUMSR_DEVICE)
    record = TrainingRunRecord(variant=config.variant, run_dir=run_dir, model=model,
                               parameters=parameter_counts(model))
    started = time.monotonic()
    logger.info(f'Запуск варианта {config.variant}: итераций {config.iterations}, '
                f'эпох на этап {config.epochs_per_stage}, seed {config.seed}, разбиение {split.split_id}, '
                f'параметров {record.parameters["total"]}')

    schedule = stage_schedule(config.variant, config.iterations)
    for iteration in range(1, config.iterations + 1):
        ctx = StageContext(iteration=iteration, store=store, metrics=metrics, timing=timing)
        stage = None
        try:
            if iteration > 1:
                previous = record.iteration_selections[-1]
                store.load_into(model, previous.iteration, 'selector', previous.epoch)
                logger.info(f'Итерация {iteration}: инициализация моделью итерации {previous.iteration}, '
                            f'эпоха {previous.epoch}')

            for stage in [s for k, s in schedule if k == iteration]:
                rng = stage_rng(config.seed, iteration, stage)
                logger.info(f'Итерация {iteration}: начало этапа {stage}')
                record.schedule.append((iteration, stage))
                if stage == 'mask':
                    train_mask_stage(config, train_videos, model, rng, ctx)
                elif stage == 'reconstructor':
                    mask_trainable = config.variant in ('sepMa', 'iter') and iteration == 1
                    result = train_reconstructor_stage(config, train_videos, model, mask_trainable, rng,
                                                       val_videos, ctx)
                    record.reference_epochs[iteration] = result.best_epoch
                elif stage == 'selector':
                    train_selector_stage(config, train_videos, model, rng, ctx)
                else:
                    train_joint(config, train_videos, model, rng, ctx)

            stage = 'joint' if config.variant == 'joint' else 'selector'
            validation, epoch, reference_epoch = select_within_iteration(
                config, store, model, iteration, stage, val_videos, segmentations)
            if config.variant == 'joint':
                record.reference_epochs[iteration] = reference_epoch
        except SumSRError as e:
            if isinstance(e, TrainingError):
                e.annotate(iteration, stage)
            logger.error(f'Ошибка обучения: {e.message}')
            raise

        checkpoint = store.checkpoint_path(iteration, stage, epoch).relative_to(run_dir)
        candidate = IterationCandidate(iteration=iteration, epoch=epoch,
                                       val_recon=float(validation.recon_mean[validation.epochs.index(epoch)]),
                                       checkpoint=str(checkpoint))
        record.iteration_selections.append(candidate)
        record.records.append((iteration, validation, epoch))

    record.final = select_iteration(record.iteration_selections)
    record.training_seconds = time.monotonic() - started
    epoch_seconds = [float(row['seconds']) for row in timing.rows]
    write_selection_csv(store.selection_path, record.records, record.final.iteration)
    store.write_final({
        'variant': config.variant,
        'seed': config.seed,
        'split_id': split.split_id,
        'iteration': record.final.iteration,
        'epoch': record.final.epoch,
        'checkpoint': record.final.checkpoint,
        'schedule': [[k, s] for k, s in record.schedule],
        'reference_epochs': {str(k): v for k, v in record.reference_epochs.items()},
        'iterations': [vars(c) for c in record.iteration_selections],
        'parameters': record.parameters,
        'training_seconds': record.training_seconds,
        'mean_epoch_seconds': float(np.mean(epoch_seconds)) if epoch_seconds else 0.0,
    })
    logger.info(f'Вариант {config.variant} обучен за {record.training_seconds:.1f} с: '
                f'итоговая итерация {record.final.iteration}, эпоха {record.final.epoch}')
    return record
