"""Функции потерь SUM-SR: реконструкция, разреженность, маска и их сумма"""

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import torch

from .exceptions import InputError, NumericError


@dataclass
class LossValues:
    """Значения потерь одного шага или эпохи; l_model = l_recon + l_spar"""
    l_recon: Optional[float] = None
    l_spar: Optional[float] = None
    l_mask: Optional[float] = None
    sigma: float = 0.7
    alpha: float = 0.15

    @property
    def l_model(self) -> Optional[float]:
        if self.l_recon is None or self.l_spar is None:
            return None
        return model_loss(self.l_recon, self.l_spar)

    def to_dict(self):
        data = asdict(self)
        data['l_model'] = self.l_model
        return data


def recon_loss(original: torch.Tensor, reconstructed: torch.Tensor) -> torch.Tensor:
    """‖V − V̂‖²: сумма квадратов разностей по всем n·d элементам"""
    original = torch.as_tensor(original)
    if original.shape != reconstructed.shape:
        raise InputError(f'Размеры не совпадают: {tuple(original.shape)} и {tuple(reconstructed.shape)}')
    original = original.to(dtype=reconstructed.dtype, device=reconstructed.device)
    return ((original - reconstructed) ** 2).sum()


def spar_loss(scores: torch.Tensor, sigma: float) -> torch.Tensor:
    """|mean(p) − σ|"""
    return torch.abs(scores.mean() - sigma)


def mask_loss(masked_input: torch.Tensor, reconstructed: torch.Tensor,
              masked_indices: Sequence[int]) -> torch.Tensor:
    """Средний квадрат расстояния только по замаскированным строкам 𝒟"""
    if masked_input.shape != reconstructed.shape:
        raise InputError('Размеры V′ и V̂′ не совпадают')
    indices = np.asarray(masked_indices, dtype=np.int64).reshape(-1)
    if indices.size == 0:
        raise InputError('Множество замаскированных кадров пусто, маску нужно перевыбрать')
    n = masked_input.shape[0]
    if indices.min() < 0 or indices.max() >= n:
        raise InputError(f'Индексы маски вне диапазона [0, {n})')
    idx = torch.as_tensor(indices, device=reconstructed.device)
    diff = masked_input.index_select(0, idx) - reconstructed.index_select(0, idx)
    return (diff ** 2).sum() / indices.size


def model_loss(l_recon, l_spar):
    """L_model = L_recon + L_spar"""
    for name, value in (('l_recon', l_recon), ('l_spar', l_spar)):
        finite = torch.isfinite(value).all() if isinstance(value, torch.Tensor) else np.isfinite(value)
        if not finite:
            raise NumericError(f'{name} не является конечным числом')
    return l_recon + l_spar
