"""Кривые выбора модели: CSV и SVG-график по selection.csv каталога запуска"""

import csv
import logging
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Tuple, Union

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from .exceptions import LookupFailure  # noqa: E402
from .selection import read_selection_csv  # noqa: E402

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ['iteration', 'epoch', 'recon_norm', 'spar_norm', 'difference']


def load_curves(run_dir: Union[str, Path]) -> 'OrderedDict[int, List[Dict[str, float]]]':
    path = Path(run_dir) / 'selection.csv'
    if not path.is_file():
        raise LookupFailure(f'Файл {path} не найден')
    curves: 'OrderedDict[int, List[Dict[str, float]]]' = OrderedDict()
    for row in read_selection_csv(path):
        curves.setdefault(int(row['iteration']), []).append({
            'epoch': int(row['epoch']),
            'recon_norm': float(row['recon_norm']),
            'spar_norm': float(row['spar_norm']),
            'difference': float(row['difference']),
        })
    return curves


def plot_curves(rows: List[Dict[str, float]], path: Path, title: str) -> Path:
    """Три ряда против эпохи; SVG без даты и со стабильными id, чтобы повторная генерация давала те же байты"""
    epochs = [r['epoch'] for r in rows]
    with plt.rc_context({'svg.hashsalt': 'sumsr-curves', 'svg.fonttype': 'none'}):
        fig, ax = plt.subplots(figsize=(8, 4.5))
        ax.plot(epochs, [r['recon_norm'] for r in rows], label='recon_norm')
        ax.plot(epochs, [r['spar_norm'] for r in rows], label='spar_norm')
        ax.plot(epochs, [r['difference'] for r in rows], label='difference')
        ax.set_xlabel('epoch')
        ax.set_ylabel('normalized loss')
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format='svg', metadata={'Date': None})
        plt.close(fig)
    return path


def write_curves(run_dir: Union[str, Path]) -> Tuple[Path, List[Path]]:
    """curves/curves.csv и по графику curves/iter<k>.svg на итерацию"""
    run_dir = Path(run_dir)
    curves = load_curves(run_dir)
    out_dir = run_dir / 'curves'
    out_dir.mkdir(parents=True, exist_ok=True)

    csv_path = out_dir / 'curves.csv'
    with open(csv_path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(CURVE_COLUMNS)
        for iteration, rows in curves.items():
            for r in rows:
                writer.writerow([iteration, r['epoch'], repr(r['recon_norm']), repr(r['spar_norm']),
                                 repr(r['difference'])])

    charts = [plot_curves(rows, out_dir / f'iter{iteration}.svg', f'iteration {iteration}')
              for iteration, rows in curves.items()]
    logger.info(f'Кривые записаны: {csv_path} и {len(charts)} графиков')
    return csv_path, charts
