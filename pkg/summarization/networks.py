"""
Сети SUM-SR: селектор (sNet), реконструктор с вниманием (rNet) и вектор маски m.

Все двунаправленные LSTM имеют по два слоя и ширину d_h/2 на направление,
выходы направлений конкатенируются до d_h.
"""

import logging
import math
from typing import Dict, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .exceptions import ContractError, InputError, NumericError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, torch.Tensor]


def _check_dims(d: int, d_h: int) -> None:
    if d < 1:
        raise InputError(f'd должно быть положительным, получено {d}')
    if d_h < 2 or d_h % 2:
        raise InputError(f'd_h должно быть чётным и не меньше 2, получено {d_h}')


def _bilstm(input_size: int, d_h: int) -> nn.LSTM:
    return nn.LSTM(input_size, d_h // 2, num_layers=2, bidirectional=True)


def init_uniform_fan_in(module: nn.Module, generator: torch.Generator) -> None:
    """Равномерная инициализация U(−1/√fan_in, 1/√fan_in) для каждого тензора"""
    params = dict(module.named_parameters())
    with torch.no_grad():
        for name, param in params.items():
            if param.dim() >= 2:
                fan_in = param.shape[1]
            else:
                # bias_ih_l0 -> weight_ih_l0, proj.bias -> proj.weight
                weight_name = name.replace('bias', 'weight')
                if weight_name not in params:
                    continue
                fan_in = params[weight_name].shape[1]
            bound = 1.0 / math.sqrt(fan_in)
            param.uniform_(-bound, bound, generator=generator)


def _as_tensor(values: ArrayLike, like: torch.Tensor) -> torch.Tensor:
    tensor = torch.as_tensor(values)
    return tensor.to(dtype=like.dtype, device=like.device)


def _require_finite(tensor: torch.Tensor, what: str) -> None:
    if not torch.isfinite(tensor).all():
        raise NumericError(f'{what} содержит нечисловые значения')


class MaskVector(nn.Module):
    """Обучаемый d-мерный заменитель невыбранных кадров; инициализируется нулём"""

    def __init__(self, d: int, trainable: bool = False):
        super().__init__()
        self.m = nn.Parameter(torch.zeros(d))
        self.trainable = trainable

    @property
    def trainable(self) -> bool:
        return self.m.requires_grad

    @trainable.setter
    def trainable(self, flag: bool) -> None:
        self.m.requires_grad_(bool(flag))

    def forward(self) -> torch.Tensor:
        return self.m


class SelectorNet(nn.Module):
    """sNet: Lin(d→d_h) -> biLSTM -> Lin(d_h→2) -> softmax(ĥ/τ)[0]"""

    def __init__(self, d: int, d_h: int, tau: float = 0.5):
        super().__init__()
        _check_dims(d, d_h)
        if tau <= 0:
            raise InputError(f'Температура τ должна быть положительной, получено {tau}')
        self.d = d
        self.d_h = d_h
        self.tau = float(tau)
        self.input_projection = nn.Linear(d, d_h)
        self.lstm = _bilstm(d_h, d_h)
        self.head = nn.Linear(d_h, 2)

    def logits(self, features: torch.Tensor) -> torch.Tensor:
        projected = self.input_projection(features)
        hidden, _ = self.lstm(projected.unsqueeze(1))
        return self.head(hidden.squeeze(1))

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return F.softmax(self.logits(features) / self.tau, dim=-1)[:, 0]


class ReconstructorNet(nn.Module):
    """
    rNet: biLSTM-энкодер и biLSTM-декодер с билинейным вниманием
    e_i = Yᵀ W_b z_{i−1}; на первом шаге вместо z_0 берётся h_e
    """

    def __init__(self, d: int, d_h: int):
        super().__init__()
        _check_dims(d, d_h)
        self.d = d
        self.d_h = d_h
        self.encoder = _bilstm(d, d_h)
        self.attention_matrix = nn.Parameter(torch.empty(d_h, d_h))
        self.decoder = _bilstm(2 * d_h, d_h)
        self.output_projection = nn.Linear(d_h, d)

    def encode(self, summary: torch.Tensor):
        Y, (h_n, c_n) = self.encoder(summary.unsqueeze(1))
        Y = Y.squeeze(1)
        # финальные состояния верхнего слоя в обоих направлениях
        h_e = torch.cat([h_n[-2, 0], h_n[-1, 0]])
        return Y, h_e, (h_n, c_n)

    def forward(self, summary: torch.Tensor, return_attention: bool = False):
        Y, h_e, state = self.encode(summary)
        n = Y.shape[0]
        query = h_e
        previous = torch.zeros(self.d_h, dtype=Y.dtype, device=Y.device)
        outputs = []
        weights = []

        for _ in range(n):
            energy = Y @ (self.attention_matrix @ query)
            w = F.softmax(energy, dim=0)
            context = w @ Y
            step_input = torch.cat([context, previous]).view(1, 1, 2 * self.d_h)
            out, state = self.decoder(step_input, state)
            z = out.view(self.d_h)
            outputs.append(z)
            weights.append(w)
            query = z
            previous = z

        reconstructed = self.output_projection(torch.stack(outputs))
        if return_attention:
            return reconstructed, torch.stack(weights)
        return reconstructed


class SumSRModel(nn.Module):
    """Связка селектора, реконструктора и вектора маски одного варианта"""

    def __init__(self, d: int, d_h: int, tau: float = 0.5, seed: Optional[int] = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.selector = SelectorNet(d, d_h, tau)
        self.reconstructor = ReconstructorNet(d, d_h)
        self.mask = MaskVector(d)
        generator = torch.Generator().manual_seed(0 if seed is None else int(seed))
        init_uniform_fan_in(self.selector, generator)
        init_uniform_fan_in(self.reconstructor, generator)
        self.to(dtype)

    @property
    def dtype(self) -> torch.dtype:
        return self.mask.m.dtype

    @property
    def device(self) -> torch.device:
        return self.mask.m.device


def new_reconstructor(d: int, d_h: int, seed: int, dtype: torch.dtype = torch.float32) -> ReconstructorNet:
    generator = torch.Generator().manual_seed(int(seed))
    reconstructor = ReconstructorNet(d, d_h)
    init_uniform_fan_in(reconstructor, generator)
    return reconstructor.to(dtype)


# === Операции над последовательностями ===

def selector_forward(selector: SelectorNet, features: ArrayLike) -> torch.Tensor:
    """Оценки важности p_i ∈ (0, 1) для каждого кадра"""
    weight = selector.head.weight
    features = _as_tensor(features, weight)
    _require_finite(features, 'Вход селектора')
    if features.dim() != 2 or features.shape[1] != selector.d:
        raise InputError(f'Ожидались признаки n×{selector.d}, получено {tuple(features.shape)}')
    return selector(features)


def blend_summary(features: ArrayLike, scores: torch.Tensor, mask: MaskVector) -> torch.Tensor:
    """Дифференцируемое резюме s̄_i = p_i·x_i + (1 − p_i)·m"""
    m = mask.m
    features = _as_tensor(features, m)
    scores = _as_tensor(scores, m) if not isinstance(scores, torch.Tensor) else scores
    if features.shape[0] != scores.shape[0] or features.shape[1] != m.shape[0]:
        raise InputError('Размерности признаков, оценок и маски не согласованы')
    if bool(((scores < 0) | (scores > 1)).any()):
        raise ContractError('Оценки важности должны лежать в [0, 1]')
    p = scores.unsqueeze(1)
    return p * features + (1 - p) * m.unsqueeze(0)


def hard_summary(features: ArrayLike, frame_mask: ArrayLike, mask: MaskVector) -> torch.Tensor:
    """Жёсткое резюме: строка i равна x_i при a_i = 1, иначе m"""
    m = mask.m
    features = _as_tensor(features, m)
    selected = torch.as_tensor(np.asarray(frame_mask) if not isinstance(frame_mask, torch.Tensor) else frame_mask)
    if selected.dim() != 1 or selected.shape[0] != features.shape[0] or features.shape[1] != m.shape[0]:
        raise InputError('Маска кадров и признаки не согласованы по размерам')
    if not bool(((selected == 0) | (selected == 1)).all()):
        raise InputError('Маска кадров A должна быть бинарной')
    keep = selected.to(device=features.device).bool().unsqueeze(1)
    return torch.where(keep, features, m.unsqueeze(0).expand_as(features))


def random_mask(features: ArrayLike, mask: MaskVector, alpha: float,
                rng_seed: Union[int, np.random.Generator, None] = None) -> Tuple[torch.Tensor, np.ndarray]:
    """
    Случайная замена кадров на m: кадр сохраняется с вероятностью α.
    Возвращает V′ и множество индексов замаскированных кадров 𝒟.
    """
    if not 0 < alpha < 1:
        raise InputError(f'α должно лежать в (0, 1), получено {alpha}')
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    m = mask.m
    features = _as_tensor(features, m)
    keep = rng.random(features.shape[0]) < alpha
    masked_indices = np.flatnonzero(~keep)
    keep_t = torch.as_tensor(keep, device=features.device).unsqueeze(1)
    masked = torch.where(keep_t, features, m.unsqueeze(0).expand_as(features))
    return masked, masked_indices


def reconstructor_forward(reconstructor: ReconstructorNet, summary: ArrayLike,
                          return_attention: bool = False):
    """Восстановленная последовательность V̂ (n×d)"""
    weight = reconstructor.output_projection.weight
    summary = summary if isinstance(summary, torch.Tensor) and summary.dtype == weight.dtype \
        else _as_tensor(summary, weight)
    _require_finite(summary.detach(), 'Вход реконструктора')
    if summary.dim() != 2 or summary.shape[1] != reconstructor.d:
        raise InputError(f'Ожидалось резюме n×{reconstructor.d}, получено {tuple(summary.shape)}')
    return reconstructor(summary, return_attention=return_attention)


def parameter_counts(model: SumSRModel) -> Dict[str, int]:
    """Число скалярных параметров по частям модели и всего"""
    counts = {name: sum(p.numel() for p in getattr(model, name).parameters())
              for name in ('selector', 'reconstructor', 'mask')}
    counts['total'] = sum(counts.values())
    return counts
