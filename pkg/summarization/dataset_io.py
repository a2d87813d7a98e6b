"""
Контейнер датасета SUM-SR: загрузка и сохранение видео и разметки,
генерация разбиений train/val/test и синтетические датасеты с
заложенными событиями для проверки на малых масштабах.

Формат каталога:
    manifest.json                 - UTF-8 JSON (container_version, d, notes, videos)
    features/<video_id>.bin       - 16 байт заголовка (b"SUMSRF1\\0", n, d как uint32 LE)
                                    и n*d float32 LE построчно
    annotations/<video_id>.json   - picks, n_frames_original, aggregation_mode,
                                    user_summaries (RLE-отрезки [start, end)),
                                    необязательные change_points
"""

import json
import logging
import math
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import h5py
import numpy as np

from .exceptions import ConfigurationError, DataError, DataLoadError, SchemaError

logger = logging.getLogger(__name__)

CONTAINER_VERSION = '1'
SUPPORTED_VERSIONS = ('1',)
FEATURE_MAGIC = b'SUMSRF1\x00'
HEADER = struct.Struct('<8sII')
AGGREGATION_MODES = ('max_over_users', 'mean_over_users', 'single')


@dataclass
class FrameFeatureSequence:
    """Видео как последовательность n эмбеддингов кадров размерности d"""
    video_id: str
    features: np.ndarray
    n_frames_original: int
    picks: List[int]
    change_points: Optional[List[int]] = None

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    def validate(self) -> None:
        if self.features.ndim != 2:
            raise SchemaError(f'Видео {self.video_id}: признаки должны быть матрицей n×d')
        n, d = self.features.shape
        if n < 2 or d < 1:
            raise SchemaError(f'Видео {self.video_id}: требуется n ≥ 2 и d ≥ 1, получено n={n}, d={d}')
        if not np.all(np.isfinite(self.features)):
            raise DataError(f'Видео {self.video_id}: признаки содержат нечисловые значения')
        if len(self.picks) != n:
            raise SchemaError(f'Видео {self.video_id}: длина picks {len(self.picks)} не равна n={n}')
        picks = np.asarray(self.picks, dtype=np.int64)
        if picks[0] < 0 or np.any(np.diff(picks) <= 0):
            raise SchemaError(f'Видео {self.video_id}: picks должны строго возрастать и быть неотрицательными')
        if picks[-1] >= self.n_frames_original:
            raise SchemaError(f'Видео {self.video_id}: picks выходят за n_frames_original={self.n_frames_original}')


@dataclass
class ReferenceSummaries:
    """Пользовательские (или эталонные) маски ключевых кадров в исходной частоте"""
    per_user_masks: List[np.ndarray]
    aggregation_mode: str = 'single'

    def validate(self, video_id: str = '') -> None:
        if self.aggregation_mode not in AGGREGATION_MODES:
            raise SchemaError(f'Видео {video_id}: неизвестный режим агрегации {self.aggregation_mode!r}')
        if not self.per_user_masks:
            raise SchemaError(f'Видео {video_id}: нет ни одной эталонной маски')
        length = len(self.per_user_masks[0])
        for mask in self.per_user_masks:
            if len(mask) != length:
                raise SchemaError(f'Видео {video_id}: эталонные маски разной длины')
            if not np.all((mask == 0) | (mask == 1)):
                raise SchemaError(f'Видео {video_id}: эталонные маски должны быть бинарными')


@dataclass
class DatasetManifest:
    container_version: str
    videos: List[Dict[str, str]]
    d: int
    notes: str = ''

    def to_dict(self) -> Dict[str, Any]:
        return {
            'container_version': self.container_version,
            'd': self.d,
            'notes': self.notes,
            'videos': self.videos,
        }


@dataclass
class SplitSpec:
    split_id: int
    train_ids: List[str]
    val_ids: List[str]
    test_ids: List[str]
    seed: int

    def validate(self, known_ids: Optional[Sequence[str]] = None) -> None:
        parts = (set(self.train_ids), set(self.val_ids), set(self.test_ids))
        if not all(parts):
            raise SchemaError(f'Разбиение {self.split_id}: все части должны быть непустыми')
        if parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2]:
            raise SchemaError(f'Разбиение {self.split_id}: части train/val/test пересекаются')
        if known_ids is not None:
            unknown = (parts[0] | parts[1] | parts[2]) - set(known_ids)
            if unknown:
                raise SchemaError(f'Разбиение {self.split_id}: неизвестные видео {sorted(unknown)}')

    def to_dict(self) -> Dict[str, Any]:
        return {
            'split_id': self.split_id,
            'seed': self.seed,
            'train_ids': list(self.train_ids),
            'val_ids': list(self.val_ids),
            'test_ids': list(self.test_ids),
        }


@dataclass
class SyntheticDataset:
    """Синтетический датасет вместе с заложенными центроидами (для оракулов)"""
    videos: List[FrameFeatureSequence]
    references: List[ReferenceSummaries]
    base_centroids: List[np.ndarray] = field(default_factory=list)
    event_centroids: List[np.ndarray] = field(default_factory=list)
    event_length: int = 0

    def pairs(self) -> List[Tuple[FrameFeatureSequence, ReferenceSummaries]]:
        return list(zip(self.videos, self.references))


# === RLE и расширение в исходную частоту кадров ===

def mask_to_spans(mask: np.ndarray) -> List[List[int]]:
    """Бинарная маска -> список полуоткрытых отрезков [start, end)"""
    mask = np.asarray(mask).astype(np.int8)
    padded = np.concatenate([[0], mask, [0]])
    edges = np.flatnonzero(np.diff(padded))
    return [[int(s), int(e)] for s, e in zip(edges[0::2], edges[1::2])]


def spans_to_mask(spans: Sequence[Sequence[int]], length: int) -> np.ndarray:
    mask = np.zeros(length, dtype=np.int8)
    for start, end in spans:
        if not (0 <= start < end <= length):
            raise SchemaError(f'Некорректный отрезок [{start}, {end}) для длины {length}')
        mask[start:end] = 1
    return mask


def native_bounds(picks: Sequence[int], n_frames_original: int) -> np.ndarray:
    """
    Границы владения кадров: прореженный кадр t владеет исходными кадрами
    [bounds[t], bounds[t+1]). Первый кадр начинается с 0, последний
    доходит до n_frames_original - 1.
    """
    picks = np.asarray(picks, dtype=np.int64)
    bounds = np.empty(len(picks) + 1, dtype=np.int64)
    bounds[0] = 0
    bounds[1:-1] = picks[1:]
    bounds[-1] = n_frames_original
    return bounds


def expand_to_native(frame_values: np.ndarray, picks: Sequence[int], n_frames_original: int) -> np.ndarray:
    """Разворачивает значения по прореженным кадрам в исходную частоту"""
    frame_values = np.asarray(frame_values)
    if len(frame_values) != len(picks):
        raise SchemaError(f'Длина вектора {len(frame_values)} не совпадает с числом picks {len(picks)}')
    bounds = native_bounds(picks, n_frames_original)
    return np.repeat(frame_values, np.diff(bounds))


# === Файлы признаков ===

def write_feature_blob(path: Path, features: np.ndarray) -> None:
    features = np.ascontiguousarray(features, dtype='<f4')
    n, d = features.shape
    with open(path, 'wb') as fh:
        fh.write(HEADER.pack(FEATURE_MAGIC, n, d))
        fh.write(features.tobytes(order='C'))


def read_feature_blob(path: Path, video_id: str = '') -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise DataLoadError(f'Видео {video_id}: не удалось прочитать файл признаков {path}: {e}', video_id)
    if len(raw) < HEADER.size:
        raise SchemaError(f'Видео {video_id}: файл признаков короче заголовка')
    magic, n, d = HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise SchemaError(f'Видео {video_id}: неверная сигнатура файла признаков {magic!r}')
    expected = HEADER.size + 4 * n * d
    if len(raw) != expected:
        raise SchemaError(f'Видео {video_id}: ожидалось {expected} байт, получено {len(raw)}')
    features = np.frombuffer(raw, dtype='<f4', offset=HEADER.size, count=n * d)
    return features.reshape(n, d).astype(np.float32)


# === Загрузка и сохранение датасета ===

def read_manifest(manifest_path: Union[str, Path]) -> DatasetManifest:
    manifest_path = Path(manifest_path)
    try:
        payload = json.loads(manifest_path.read_text(encoding='utf-8'))
    except OSError as e:
        raise DataLoadError(f'Не удалось прочитать манифест {manifest_path}: {e}')
    except json.JSONDecodeError as e:
        raise SchemaError(f'Манифест {manifest_path} не является корректным JSON: строка {e.lineno}: {e.msg}')

    version = str(payload.get('container_version', ''))
    if version not in SUPPORTED_VERSIONS:
        raise SchemaError(f'Неподдерживаемая версия контейнера {version!r}')

    videos = payload.get('videos')
    if not isinstance(videos, list):
        raise SchemaError('В манифесте отсутствует список videos')
    ids = [entry.get('video_id') for entry in videos]
    if len(set(ids)) != len(ids) or any(not vid for vid in ids):
        raise SchemaError('video_id в манифесте должны быть непустыми и уникальными')

    try:
        d = int(payload['d'])
    except (KeyError, TypeError, ValueError):
        raise SchemaError('В манифесте отсутствует целое поле d')

    return DatasetManifest(
        container_version=version,
        videos=videos,
        d=d,
        notes=payload.get('notes', ''),
    )


def _load_annotation(path: Path, video_id: str) -> Dict[str, Any]:
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except OSError as e:
        raise DataLoadError(f'Видео {video_id}: не удалось прочитать разметку {path}: {e}', video_id)
    except json.JSONDecodeError as e:
        raise SchemaError(f'Видео {video_id}: разметка не является корректным JSON: строка {e.lineno}: {e.msg}')


def load_dataset(manifest_path: Union[str, Path]) -> List[Tuple[FrameFeatureSequence, ReferenceSummaries]]:
    """Загружает все видео манифеста в порядке манифеста"""
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    root = manifest_path.parent
    dataset = []

    for entry in manifest.videos:
        video_id = entry['video_id']
        feature_path = root / entry.get('features', '')
        annotation_path = root / entry.get('annotation', '')
        if not feature_path.is_file():
            raise DataLoadError(f'Видео {video_id}: файл признаков {feature_path} не найден', video_id)
        if not annotation_path.is_file():
            raise DataLoadError(f'Видео {video_id}: файл разметки {annotation_path} не найден', video_id)

        features = read_feature_blob(feature_path, video_id)
        if features.shape[1] != manifest.d:
            raise SchemaError(
                f'Видео {video_id}: размерность признаков {features.shape[1]} не совпадает с d={manifest.d} манифеста'
            )
        if not np.all(np.isfinite(features)):
            raise DataError(f'Видео {video_id}: признаки содержат нечисловые значения')

        annotation = _load_annotation(annotation_path, video_id)
        try:
            n_frames_original = int(annotation['n_frames_original'])
            picks = [int(p) for p in annotation['picks']]
            user_spans = annotation['user_summaries']
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f'Видео {video_id}: в разметке не хватает поля {e}')

        video = FrameFeatureSequence(
            video_id=video_id,
            features=features,
            n_frames_original=n_frames_original,
            picks=picks,
            change_points=annotation.get('change_points'),
        )
        video.validate()

        references = ReferenceSummaries(
            per_user_masks=[spans_to_mask(spans, n_frames_original) for spans in user_spans],
            aggregation_mode=annotation.get('aggregation_mode', 'single'),
        )
        references.validate(video_id)
        dataset.append((video, references))

    logger.info(f'Загружено видео: {len(dataset)} из {manifest_path}')
    return dataset


def save_dataset(directory: Union[str, Path],
                 dataset: Sequence[Tuple[FrameFeatureSequence, ReferenceSummaries]],
                 notes: str = '') -> Path:
    """Записывает датасет в формате контейнера; существующий манифест не перезаписывается"""
    directory = Path(directory)
    manifest_path = directory / 'manifest.json'
    if manifest_path.exists():
        raise ConfigurationError(f'Манифест {manifest_path} уже существует, перезапись запрещена')
    if not dataset:
        raise ConfigurationError('Нельзя сохранить пустой датасет')

    d = dataset[0][0].d
    (directory / 'features').mkdir(parents=True, exist_ok=True)
    (directory / 'annotations').mkdir(parents=True, exist_ok=True)

    entries = []
    for video, references in dataset:
        video.validate()
        references.validate(video.video_id)
        if video.d != d:
            raise SchemaError(f'Видео {video.video_id}: размерность {video.d} отличается от {d}')

        feature_rel = f'features/{video.video_id}.bin'
        annotation_rel = f'annotations/{video.video_id}.json'
        write_feature_blob(directory / feature_rel, video.features)

        annotation = {
            'video_id': video.video_id,
            'n_frames_original': int(video.n_frames_original),
            'picks': [int(p) for p in video.picks],
            'aggregation_mode': references.aggregation_mode,
            'user_summaries': [mask_to_spans(mask) for mask in references.per_user_masks],
        }
        if video.change_points is not None:
            annotation['change_points'] = [int(cp) for cp in video.change_points]
        (directory / annotation_rel).write_text(json.dumps(annotation, indent=1), encoding='utf-8')

        entries.append({'video_id': video.video_id, 'features': feature_rel, 'annotation': annotation_rel})

    manifest = DatasetManifest(container_version=CONTAINER_VERSION, videos=entries, d=d, notes=notes)
    manifest_path.write_text(json.dumps(manifest.to_dict(), indent=2, ensure_ascii=False), encoding='utf-8')
    logger.info(f'Сохранено видео: {len(entries)} в {directory}')
    return manifest_path


# === Разбиения ===

def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def make_splits(ids: Sequence[str], n_splits: int = 5, test_fraction: float = 0.2,
                val_fraction: float = 0.2, seed: int = 0) -> List[SplitSpec]:
    """
    Случайные разбиения train/val/test. Валидация вырезается из обучающей
    части каждого разбиения: |val| = round(val_fraction · |train ∪ val|).
    """
    if not (0 < test_fraction < 1 and 0 < val_fraction < 1):
        raise ConfigurationError('test_fraction и val_fraction должны лежать в (0, 1)')
    if test_fraction + val_fraction >= 1:
        raise ConfigurationError('Сумма test_fraction и val_fraction должна быть меньше 1')
    if n_splits < 1:
        raise ConfigurationError(f'n_splits должно быть положительным, получено {n_splits}')
    ids = list(ids)
    if len(set(ids)) != len(ids):
        raise ConfigurationError('Идентификаторы видео повторяются')

    n_test = _round_half_up(test_fraction * len(ids))
    n_val = _round_half_up(val_fraction * (len(ids) - n_test))
    n_train = len(ids) - n_test - n_val
    if min(n_test, n_val, n_train) < 1:
        raise ConfigurationError(
            f'Слишком мало видео ({len(ids)}) для непустых частей: train={n_train}, val={n_val}, test={n_test}'
        )

    rng = random.Random(seed)
    splits = []
    for split_id in range(n_splits):
        shuffled = ids[:]
        rng.shuffle(shuffled)
        test_ids = shuffled[:n_test]
        val_ids = shuffled[n_test:n_test + n_val]
        train_ids = shuffled[n_test + n_val:]
        splits.append(SplitSpec(split_id=split_id, train_ids=train_ids, val_ids=val_ids,
                                test_ids=test_ids, seed=seed))
    return splits


def save_splits(path: Union[str, Path], splits: Sequence[SplitSpec]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps([split.to_dict() for split in splits], indent=2), encoding='utf-8')
    return path


def load_splits(path: Union[str, Path], known_ids: Optional[Sequence[str]] = None) -> List[SplitSpec]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding='utf-8'))
    except OSError as e:
        raise DataLoadError(f'Не удалось прочитать файл разбиений {path}: {e}')
    except json.JSONDecodeError as e:
        raise SchemaError(f'Файл разбиений {path}: строка {e.lineno}: {e.msg}')

    splits = []
    for item in payload:
        try:
            split = SplitSpec(
                split_id=int(item['split_id']),
                train_ids=list(item['train_ids']),
                val_ids=list(item['val_ids']),
                test_ids=list(item['test_ids']),
                seed=int(item.get('seed', 0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f'Файл разбиений {path}: некорректная запись ({e})')
        split.validate(known_ids)
        splits.append(split)
    return splits


# === Синтетические датасеты ===

def _event_starts(rng: np.random.Generator, n: int, n_events: int, event_length: int) -> List[int]:
    """Случайные начала событий с зазором не менее одного базового кадра"""
    free = n - n_events * event_length - (n_events - 1)
    gaps = rng.multinomial(free, np.full(n_events + 1, 1.0 / (n_events + 1)))
    starts = []
    position = int(gaps[0])
    for k in range(n_events):
        starts.append(position)
        position += event_length + 1 + int(gaps[k + 1])
    return starts


def synth_generate(n_videos: int = 20, n: int = 120, d: int = 32, n_events: int = 3,
                   noise_scale: float = 0.1, seed: int = 0, event_length: Optional[int] = None,
                   n_base_segments: int = 4, event_distance: Optional[float] = None) -> SyntheticDataset:
    """
    Синтетические видео: кусочно-постоянные базовые эмбеддинги плюс изотропный
    шум масштаба noise_scale. Базовые центроиды лежат в первых d-1 координатах,
    событие сдвигает базовый эмбеддинг своего участка на event_distance по
    последней координате, поэтому без шума кадры события отстоят от базовых
    ровно на event_distance. Эталонная маска отмечает ровно кадры событий.
    """
    if d < 2:
        raise ConfigurationError(f'Для синтетики нужно d ≥ 2, получено {d}')
    if n < 2 or n_videos < 1 or n_events < 1:
        raise ConfigurationError('n_videos, n_events должны быть положительными, n ≥ 2')
    if noise_scale < 0:
        raise ConfigurationError('noise_scale не может быть отрицательным')
    if event_length is None:
        event_length = max(1, int(0.15 * n) // n_events)
    if event_distance is None:
        event_distance = max(10.0 * noise_scale, 1.0)
    if event_distance < 10.0 * noise_scale:
        raise ConfigurationError('event_distance должен быть не меньше 10 · noise_scale')
    if n_events * event_length + (n_events - 1) >= n or n_events * event_length >= n:
        raise ConfigurationError(
            f'Невыполнимая геометрия: {n_events} событий длины {event_length} не помещаются в {n} кадров'
        )
    n_base_segments = max(1, min(n_base_segments, n))

    rng = np.random.default_rng(seed)
    videos, references, base_centroids, event_centroids = [], [], [], []

    for index in range(n_videos):
        base = np.zeros((n_base_segments, d))
        directions = rng.standard_normal((n_base_segments, d - 1))
        base[:, :d - 1] = directions / np.linalg.norm(directions, axis=1, keepdims=True)

        cuts = np.sort(rng.choice(np.arange(1, n), size=n_base_segments - 1, replace=False)) \
            if n_base_segments > 1 else np.array([], dtype=np.int64)
        segment_of_frame = np.searchsorted(cuts, np.arange(n), side='right')

        planted = base[segment_of_frame].copy()
        truth = np.zeros(n, dtype=np.int8)
        events = []
        for start in _event_starts(rng, n, n_events, event_length):
            truth[start:start + event_length] = 1
            segment = segment_of_frame[start]
            event = base[segment].copy()
            event[d - 1] = event_distance
            planted[start:start + event_length] = event
            events.append(event)

        features = planted + noise_scale * rng.standard_normal((n, d))
        video = FrameFeatureSequence(
            video_id=f'synth_{index:03d}',
            features=features.astype(np.float32),
            n_frames_original=n,
            picks=list(range(n)),
        )
        videos.append(video)
        references.append(ReferenceSummaries(per_user_masks=[truth], aggregation_mode='single'))
        base_centroids.append(base.astype(np.float32))
        event_centroids.append(np.asarray(events, dtype=np.float32))

    logger.info(f'Сгенерировано синтетических видео: {n_videos} (n={n}, d={d}, событий={n_events})')
    return SyntheticDataset(videos=videos, references=references, base_centroids=base_centroids,
                            event_centroids=event_centroids, event_length=event_length)


# === Импорт иерархических датасетов (HDF5) ===

def _change_points_from_segments(segments: np.ndarray, picks: np.ndarray) -> List[int]:
    """Границы шотов [start, end] в исходных кадрах -> точки смены в прореженных кадрах"""
    points = set()
    for start, _end in np.asarray(segments, dtype=np.int64)[1:]:
        t = int(np.searchsorted(picks, start, side='left'))
        if 0 < t < len(picks):
            points.add(t)
    return sorted(points)


def import_hdf5(h5_path: Union[str, Path], out_dir: Union[str, Path],
                aggregation_mode: str = 'mean_over_users') -> Path:
    """Импорт датасета формата «одна группа на видео» (features, picks, n_frames, user_summary)"""
    h5_path = Path(h5_path)
    if not h5_path.is_file():
        raise DataLoadError(f'Файл HDF5 {h5_path} не найден')
    if aggregation_mode not in AGGREGATION_MODES:
        raise ConfigurationError(f'Неизвестный режим агрегации {aggregation_mode!r}')

    dataset = []
    with h5py.File(h5_path, 'r') as h5:
        for key in sorted(h5.keys()):
            group = h5[key]
            try:
                features = np.asarray(group['features'], dtype=np.float32)
                picks = np.asarray(group['picks'], dtype=np.int64)
                n_frames = int(np.asarray(group['n_frames']))
                user_summary = np.asarray(group['user_summary'])
            except KeyError as e:
                raise SchemaError(f'Видео {key}: в группе HDF5 нет набора {e}')

            user_summary = np.atleast_2d(user_summary)[:, :n_frames]
            masks = [(row > 0).astype(np.int8) for row in user_summary]
            change_points = None
            if 'change_points' in group:
                change_points = _change_points_from_segments(np.asarray(group['change_points']), picks)

            video = FrameFeatureSequence(
                video_id=key,
                features=features,
                n_frames_original=n_frames,
                picks=[int(p) for p in picks],
                change_points=change_points,
            )
            dataset.append((video, ReferenceSummaries(per_user_masks=masks, aggregation_mode=aggregation_mode)))

    logger.info(f'Импортировано видео из {h5_path}: {len(dataset)}')
    return save_dataset(out_dir, dataset, notes=f'imported from {h5_path.name}')
