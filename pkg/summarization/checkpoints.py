"""
Чекпоинты моделей и раскладка каталога запуска.

Формат файла .bin: 4 байта длины заголовка (uint32 LE), JSON-заголовок в UTF-8
(variant, iteration, stage, epoch, model_config, losses, список тензоров с
формами и смещениями), затем тензоры подряд как float32 LE.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import torch

from .exceptions import LookupFailure, SchemaError
from .networks import SumSRModel

logger = logging.getLogger(__name__)

HEADER_LENGTH = struct.Struct('<I')
STAGES = ('mask', 'reconstructor', 'selector', 'joint')


def _dumps(data: Dict[str, Any]) -> str:
    return json.dumps(data, ensure_ascii=False, sort_keys=True, separators=(',', ':'))


def encode_checkpoint(state: Dict[str, torch.Tensor], header: Dict[str, Any]) -> bytes:
    tensors = []
    payloads = []
    offset = 0
    for name, tensor in state.items():
        array = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype='<f4')
        tensors.append({'name': name, 'shape': list(array.shape), 'offset': offset, 'count': int(array.size)})
        payloads.append(array.tobytes(order='C'))
        offset += 4 * array.size
    header = dict(header, tensors=tensors)
    header_bytes = _dumps(header).encode('utf-8')
    return HEADER_LENGTH.pack(len(header_bytes)) + header_bytes + b''.join(payloads)


def decode_checkpoint(raw: bytes, source: str = '') -> Tuple[Dict[str, Any], Dict[str, torch.Tensor]]:
    if len(raw) < HEADER_LENGTH.size:
        raise SchemaError(f'Чекпоинт {source}: файл короче заголовка')
    (header_length,) = HEADER_LENGTH.unpack_from(raw)
    start = HEADER_LENGTH.size + header_length
    try:
        header = json.loads(raw[HEADER_LENGTH.size:start].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise SchemaError(f'Чекпоинт {source}: повреждён JSON-заголовок: {e}')

    state = {}
    for entry in header.get('tensors', []):
        begin = start + entry['offset']
        end = begin + 4 * entry['count']
        if end > len(raw):
            raise SchemaError(f"Чекпоинт {source}: тензор {entry['name']} выходит за конец файла")
        array = np.frombuffer(raw, dtype='<f4', offset=begin, count=entry['count'])
        state[entry['name']] = torch.from_numpy(array.reshape(entry['shape']).astype(np.float32))
    return header, state


def model_config_of(model: SumSRModel) -> Dict[str, Any]:
    return {'d': model.selector.d, 'd_h': model.selector.d_h, 'tau': model.selector.tau}


def model_from_checkpoint(header: Dict[str, Any], state: Dict[str, torch.Tensor],
                          dtype: torch.dtype = torch.float32) -> SumSRModel:
    config = header.get('model_config') or {}
    try:
        model = SumSRModel(int(config['d']), int(config['d_h']), float(config['tau']), dtype=dtype)
    except KeyError as e:
        raise SchemaError(f'В заголовке чекпоинта нет поля model_config.{e.args[0]}')
    load_state(model, state)
    return model


def load_state(model: torch.nn.Module, state: Dict[str, torch.Tensor]) -> None:
    """Загружает тензоры в модель с приведением к её dtype; requires_grad не меняется"""
    own = model.state_dict()
    missing = sorted(set(own) - set(state))
    if missing:
        raise SchemaError(f'В чекпоинте отсутствуют тензоры: {missing}')
    with torch.no_grad():
        for name, target in own.items():
            source = state[name]
            if tuple(source.shape) != tuple(target.shape):
                raise SchemaError(f'Тензор {name}: форма {tuple(source.shape)} вместо {tuple(target.shape)}')
            target.copy_(source.to(dtype=target.dtype))


def read_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, Any], Dict[str, torch.Tensor]]:
    path = Path(path)
    if not path.is_file():
        raise LookupFailure(f'Чекпоинт не найден: {path}')
    return decode_checkpoint(path.read_bytes(), str(path))


class CheckpointStore:
    """Каталог запуска: run.json, ckpt/iter<k>/<stage>/<epoch>.bin, metrics.csv, timing.csv, selection.csv, final.json"""

    def __init__(self, run_dir: Union[str, Path], variant: str = '',
                 segmentation: Optional[Dict[str, Any]] = None):
        self.run_dir = Path(run_dir)
        self.variant = variant
        # параметры KTS запуска: summarize сегментирует видео так же, как валидация и оценка
        self.segmentation = dict(segmentation or {})

    @property
    def metrics_path(self) -> Path:
        return self.run_dir / 'metrics.csv'

    @property
    def selection_path(self) -> Path:
        return self.run_dir / 'selection.csv'

    @property
    def final_path(self) -> Path:
        return self.run_dir / 'final.json'

    @property
    def run_json_path(self) -> Path:
        return self.run_dir / 'run.json'

    @property
    def timing_path(self) -> Path:
        return self.run_dir / 'timing.csv'

    def checkpoint_path(self, iteration: int, stage: str, epoch: int) -> Path:
        if stage not in STAGES:
            raise SchemaError(f'Неизвестный этап {stage}')
        return self.run_dir / 'ckpt' / f'iter{iteration}' / stage / f'{epoch}.bin'

    def save(self, model: SumSRModel, iteration: int, stage: str, epoch: int,
             losses: Optional[Dict[str, Any]] = None) -> Path:
        path = self.checkpoint_path(iteration, stage, epoch)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = {
            'variant': self.variant,
            'iteration': int(iteration),
            'stage': stage,
            'epoch': int(epoch),
            'model_config': model_config_of(model),
            'segmentation': self.segmentation,
            'losses': losses or {},
        }
        path.write_bytes(encode_checkpoint(model.state_dict(), header))
        return path

    def load_into(self, model: SumSRModel, iteration: int, stage: str, epoch: int) -> Dict[str, Any]:
        header, state = read_checkpoint(self.checkpoint_path(iteration, stage, epoch))
        load_state(model, state)
        return header

    def epochs(self, iteration: int, stage: str) -> List[int]:
        directory = self.run_dir / 'ckpt' / f'iter{iteration}' / stage
        if not directory.is_dir():
            return []
        return sorted(int(p.stem) for p in directory.glob('*.bin'))

    def write_run_json(self, payload: Dict[str, Any]) -> None:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.run_json_path.write_text(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + '\n',
                                      encoding='utf-8')

    def write_final(self, payload: Dict[str, Any]) -> None:
        self.final_path.write_text(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + '\n',
                                   encoding='utf-8')

    def read_final(self) -> Dict[str, Any]:
        if not self.final_path.is_file():
            raise LookupFailure(f'В каталоге {self.run_dir} нет final.json: обучение не завершено')
        return json.loads(self.final_path.read_text(encoding='utf-8'))

    def read_run_json(self) -> Dict[str, Any]:
        if not self.run_json_path.is_file():
            raise LookupFailure(f'В каталоге {self.run_dir} нет run.json')
        return json.loads(self.run_json_path.read_text(encoding='utf-8'))

    def final_checkpoint(self) -> Path:
        final = self.read_final()
        return self.run_dir / final['checkpoint']
