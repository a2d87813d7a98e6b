"""Исключения SUM-SR с машинно-читаемыми кодами ошибок"""

from typing import Optional


class SumSRError(Exception):
    """Базовое исключение пакета. `code` попадает в однострочный вывод команд."""
    code = 'E_SUMSR'

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def as_line(self) -> str:
        text = ' '.join(self.message.split())
        return f'[{self.code}] {text}'


class ConfigurationError(SumSRError):
    code = 'E_CONFIG'


class SchemaError(SumSRError):
    code = 'E_SCHEMA'


class DataLoadError(SumSRError):
    code = 'E_LOAD'

    def __init__(self, message: str, video_id: Optional[str] = None):
        super().__init__(message)
        self.video_id = video_id


class DataError(SumSRError):
    code = 'E_DATA'


class InputError(SumSRError):
    code = 'E_INPUT'


class NumericError(SumSRError):
    code = 'E_NUMERIC'


class ContractError(SumSRError):
    code = 'E_CONTRACT'


class LookupFailure(SumSRError):
    code = 'E_LOOKUP'


class TrainingError(SumSRError):
    code = 'E_TRAINING'

    def __init__(self, message: str, iteration: Optional[int] = None,
                 stage: Optional[str] = None, epoch: Optional[int] = None):
        self.iteration = iteration
        self.stage = stage
        self.epoch = epoch
        self.base_message = message
        super().__init__(message)
        self.annotate()

    def annotate(self, iteration: Optional[int] = None, stage: Optional[str] = None) -> 'TrainingError':
        """Дополняет ошибку номером итерации и этапа при всплытии из run_variant"""
        if iteration is not None and self.iteration is None:
            self.iteration = iteration
        if stage is not None and self.stage is None:
            self.stage = stage
        where = []
        if self.iteration is not None:
            where.append(f'итерация {self.iteration}')
        if self.stage is not None:
            where.append(f'этап {self.stage}')
        if self.epoch is not None:
            where.append(f'эпоха {self.epoch}')
        base = self.base_message
        self.message = f"{base} ({', '.join(where)})" if where else base
        self.args = (self.message,)
        return self
