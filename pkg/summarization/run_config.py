"""
Конфигурация обучения и запуска.

TrainingConfig - гиперпараметры обучения (значения по умолчанию из
экспериментальной постановки SUM-SR). RunConfig дополняет их путями к
датасету и разбиениям, каталогом вывода и режимом агрегации оценок.
Файл конфигурации - JSON в UTF-8; неизвестные ключи запрещены.
"""

import json
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import torch
from django.conf import settings

from .dataset_io import AGGREGATION_MODES
from .exceptions import ConfigurationError

VARIANTS = ('joint', 'sep', 'sepMa', 'sep-Ma', 'iter')
DTYPES = ('float32', 'float64')


@dataclass
class TrainingConfig:
    variant: str = 'iter'
    iterations: Optional[int] = None
    epochs_per_stage: int = 100
    learning_rate: float = 1e-4
    grad_clip: List[float] = field(default_factory=lambda: [-5.0, 5.0])
    sigma: float = 0.7
    tau: float = 0.5
    alpha: float = 0.15
    d: int = 1024
    d_h: int = 512
    seed: int = 0
    mask_stage_epochs: Optional[int] = None
    validation_mask_seed: int = 20220
    kts_max_change_points: Optional[int] = None
    kts_penalty_weight: float = 1.0
    dtype: str = 'float32'

    def __post_init__(self):
        if self.iterations is None:
            self.iterations = 5 if self.variant == 'iter' else 1
        if self.mask_stage_epochs is None:
            self.mask_stage_epochs = self.epochs_per_stage
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigurationError(f'Неизвестный вариант variant={self.variant!r}, допустимы: {", ".join(VARIANTS)}')
        if self.iterations < 1:
            raise ConfigurationError('iterations должно быть положительным')
        if self.variant != 'iter' and self.iterations != 1:
            raise ConfigurationError(f'Вариант {self.variant} выполняет ровно одну итерацию, получено {self.iterations}')
        if self.epochs_per_stage < 1 or self.mask_stage_epochs < 1:
            raise ConfigurationError('Число эпох этапа должно быть положительным')
        if self.learning_rate <= 0:
            raise ConfigurationError('learning_rate должен быть положительным')
        if len(self.grad_clip) != 2 or not self.grad_clip[0] < 0 < self.grad_clip[1]:
            raise ConfigurationError(f'grad_clip должен быть парой [низ, верх] вокруг нуля, получено {self.grad_clip}')
        if -self.grad_clip[0] != self.grad_clip[1]:
            raise ConfigurationError('Поддерживается только симметричный диапазон grad_clip')
        if not 0 < self.sigma < 1:
            raise ConfigurationError(f'sigma должна лежать в (0, 1), получено {self.sigma}')
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f'alpha должна лежать в (0, 1), получено {self.alpha}')
        if self.tau <= 0:
            raise ConfigurationError(f'tau должна быть положительной, получено {self.tau}')
        if self.d < 1 or self.d_h < 2 or self.d_h % 2:
            raise ConfigurationError(f'Некорректные размерности d={self.d}, d_h={self.d_h} (d_h должно быть чётным)')
        if self.kts_max_change_points is not None and self.kts_max_change_points < 0:
            raise ConfigurationError('kts_max_change_points не может быть отрицательным')
        if self.kts_penalty_weight < 0:
            raise ConfigurationError('kts_penalty_weight не может быть отрицательным')
        if self.dtype not in DTYPES:
            raise ConfigurationError(f'dtype должен быть одним из {DTYPES}, получено {self.dtype!r}')

    @property
    def clip_value(self) -> float:
        return float(self.grad_clip[1])

    @property
    def torch_dtype(self):
        return torch.float64 if self.dtype == 'float64' else torch.float32

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def kts_settings(config: Union[TrainingConfig, Dict[str, Any]]) -> Dict[str, Any]:
    """Параметры KTS из конфигурации или из словаря config в run.json / заголовке чекпоинта"""
    if not isinstance(config, dict):
        config = config.to_dict()
    return {
        'kts_max_change_points': config.get('kts_max_change_points'),
        'kts_penalty_weight': float(config.get('kts_penalty_weight', 1.0)),
    }


@dataclass
class RunConfig(TrainingConfig):
    manifest: str = ''
    split_file: str = ''
    split_indices: Optional[List[int]] = None
    output_dir: str = ''
    aggregation_mode: str = 'max_over_users'

    def validate(self) -> None:
        super().validate()
        if not self.manifest:
            raise ConfigurationError('Не указан путь к манифесту датасета (manifest)')
        if not self.split_file:
            raise ConfigurationError('Не указан файл разбиений (split_file)')
        if self.aggregation_mode not in AGGREGATION_MODES:
            raise ConfigurationError(f'aggregation_mode должен быть одним из {AGGREGATION_MODES}')
        if not self.output_dir:
            self.output_dir = str(settings.SUMSR_OUT)


# ожидаемые типы значений JSON для каждого ключа
FIELD_TYPES = {
    'variant': (str,),
    'iterations': (int, type(None)),
    'epochs_per_stage': (int,),
    'learning_rate': (int, float),
    'grad_clip': (list,),
    'sigma': (int, float),
    'tau': (int, float),
    'alpha': (int, float),
    'd': (int,),
    'd_h': (int,),
    'seed': (int,),
    'mask_stage_epochs': (int, type(None)),
    'validation_mask_seed': (int,),
    'kts_max_change_points': (int, type(None)),
    'kts_penalty_weight': (int, float),
    'dtype': (str,),
    'manifest': (str,),
    'split_file': (str,),
    'split_indices': (list, type(None)),
    'output_dir': (str,),
    'aggregation_mode': (str,),
}


def _line_of(text: str, key: str) -> int:
    match = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    if not match:
        return 0
    return text.count('\n', 0, match.start()) + 1


def _check_value(key: str, value: Any, text: str) -> None:
    expected = FIELD_TYPES[key]
    # bool является подклассом int в Python, но в конфигурации это ошибка
    if isinstance(value, bool) or not isinstance(value, expected):
        names = '/'.join('null' if t is type(None) else t.__name__ for t in expected)
        raise ConfigurationError(f'Ключ {key!r} (строка {_line_of(text, key)}): ожидался тип {names}, '
                                 f'получено {value!r}')


def parse_run_config(text: str, base_dir: Optional[Path] = None,
                     overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f'Конфигурация не является корректным JSON: строка {e.lineno}, столбец {e.colno}: {e.msg}')
    if not isinstance(payload, dict):
        raise ConfigurationError('Конфигурация должна быть JSON-объектом (строка 1)')

    known = {f.name for f in fields(RunConfig)}
    for key, value in payload.items():
        if key not in known:
            raise ConfigurationError(f'Неизвестный ключ {key!r} (строка {_line_of(text, key)})')
        _check_value(key, value, text)

    for key, value in (overrides or {}).items():
        if value is not None:
            payload[key] = value

    if base_dir is not None:
        for key in ('manifest', 'split_file', 'output_dir'):
            if payload.get(key) and not Path(payload[key]).is_absolute():
                payload[key] = str((base_dir / payload[key]).resolve())

    try:
        return RunConfig(**payload)
    except ConfigurationError as e:
        keys = [k for k in payload if re.search(r'\b' + re.escape(k) + r'\b', e.message)]
        if keys and _line_of(text, keys[0]):
            e.message = f'{e.message} (строка {_line_of(text, keys[0])})'
            e.args = (e.message,)
        raise


def load_run_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigurationError(f'Не удалось прочитать конфигурацию {path}: {e}')
    return parse_run_config(text, base_dir=path.parent, overrides=overrides)
