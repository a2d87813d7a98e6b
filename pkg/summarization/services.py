import logging
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from django.conf import settings
from django.utils import timezone

from .checkpoints import CheckpointStore, model_from_checkpoint, read_checkpoint
from .dataset_io import (SplitSpec, import_hdf5, load_dataset, load_splits, make_splits, read_manifest,
                         save_dataset, save_splits, synth_generate)
from .evaluation import (MODE_ALIASES, EvalResult, OracleResult, aggregate_seeds, combine_splits, evaluate_split,
                         format_table, iteration_table, oracle_checkpoints, predict_selection, results_table,
                         write_eval_csv, write_iteration_csv, write_oracle_csv)
from .exceptions import ConfigurationError, LookupFailure, SumSRError
from .models import EvaluationLog, TrainingRun
from .reporting import write_curves
from .run_config import RunConfig, kts_settings
from .segmentation import segment_video
from .training import run_variant

logger = logging.getLogger(__name__)


def _failure(error: Exception) -> Dict[str, Any]:
    if isinstance(error, SumSRError):
        return {'success': False, 'error': ' '.join(error.message.split()), 'error_code': error.code}
    return {'success': False, 'error': ' '.join(str(error).split()), 'error_code': 'E_INTERNAL'}


def run_name(config: RunConfig, split: SplitSpec) -> str:
    return f'{config.variant}_sigma{config.sigma:g}_seed{config.seed}_split{split.split_id}'


def expand_run_dirs(paths: Sequence[str]) -> List[Path]:
    """Каталог запуска (с final.json) или каталог с несколькими запусками"""
    run_dirs = []
    for path in map(Path, paths):
        if (path / 'final.json').is_file():
            run_dirs.append(path)
            continue
        children = sorted(p.parent for p in path.glob('*/final.json'))
        if not children:
            raise LookupFailure(f'Завершённые запуски не найдены в {path}')
        run_dirs.extend(children)
    return run_dirs


class SummarizationService:
    """Сервис для обучения, применения и оценки моделей SUM-SR"""

    def __init__(self):
        self.output_root = Path(settings.SUMSR_OUT)

    # === Обучение ===

    def train(self, config: RunConfig) -> Dict[str, Any]:
        """Обучает вариант на всех (или выбранных) разбиениях последовательно"""
        try:
            dataset = load_dataset(config.manifest)
            splits = load_splits(config.split_file, [video.video_id for video, _ in dataset])
            indices = config.split_indices if config.split_indices is not None else list(range(len(splits)))
            for idx in indices:
                if not 0 <= idx < len(splits):
                    raise ConfigurationError(f'Разбиения с индексом {idx} нет, всего разбиений {len(splits)}')
        except Exception as e:
            logger.error(f'Подготовка обучения не удалась: {str(e)}')
            return _failure(e)

        logger.info(f'Начинаем обучение {config.variant} на {len(indices)} разбиениях')
        runs = []
        for idx in indices:
            result = self._train_split(config, dataset, splits[idx])
            if not result['success']:
                result['runs'] = runs
                return result
            runs.append(result)
        return {'success': True, 'runs': runs}

    def _train_split(self, config: RunConfig, dataset, split: SplitSpec) -> Dict[str, Any]:
        run_dir = Path(config.output_dir) / run_name(config, split)
        log = TrainingRun.objects.create(variant=config.variant, seed=config.seed, split_id=split.split_id,
                                         run_dir=str(run_dir), config=config.to_dict())
        try:
            if run_dir.exists() and any(run_dir.iterdir()):
                raise ConfigurationError(f'Каталог запуска {run_dir} уже существует и не пуст')
            record = run_variant(config, dataset, split, run_dir)
        except Exception as e:
            logger.error(f'Обучение {run_dir.name} завершилось ошибкой: {str(e)}')
            log.status = 'error'
            log.error_details = str(e)
            log.completed_at = timezone.now()
            log.save()
            return _failure(e)

        log.status = 'success'
        log.selected_iteration = record.final.iteration
        log.selected_epoch = record.final.epoch
        log.parameter_count = record.parameters.get('total')
        log.training_seconds = record.training_seconds
        log.completed_at = timezone.now()
        log.save()
        return {
            'success': True,
            'run_dir': str(run_dir),
            'split_id': split.split_id,
            'iteration': record.final.iteration,
            'epoch': record.final.epoch,
            'training_run_id': log.id,
        }

    # === Применение ===

    def summarize(self, model_path: str, manifest: str, video_id: str, alpha: float) -> Dict[str, Any]:
        try:
            header, state = read_checkpoint(model_path)
            model = model_from_checkpoint(header, state)
            dataset = {video.video_id: video for video, _ in load_dataset(manifest)}
            if video_id not in dataset:
                raise LookupFailure(f'Видео {video_id} нет в манифесте {manifest}')
            video = dataset[video_id]
            kts = kts_settings(header.get('segmentation') or {})
            segmentation = segment_video(video, kts['kts_max_change_points'], kts['kts_penalty_weight'])
            selection = predict_selection(model, video, segmentation, alpha)
            return {'success': True, 'summary': selection.to_export(video_id, segmentation.change_points)}
        except Exception as e:
            logger.error(f'Резюме видео {video_id} не построено: {str(e)}')
            return _failure(e)

    # === Оценка ===

    def evaluate(self, run_paths: Sequence[str], manifest: str, mode: Optional[str] = None,
                 out: Optional[str] = None, oracle: bool = False) -> Dict[str, Any]:
        """
        Оценивает итоговые модели запусков. Без mode каждый запуск оценивается
        в режиме aggregation_mode из своей конфигурации. oracle=True
        дополнительно оценивает на тесте все чекпоинты селектора.
        """
        log = EvaluationLog.objects.create(mode=mode or 'config', runs=[str(p) for p in run_paths])
        try:
            if mode is not None and mode not in MODE_ALIASES:
                raise ConfigurationError(f'Неизвестный режим {mode!r}, допустимы max|mean|single')
            run_dirs = expand_run_dirs(run_paths)
            log.total_runs = len(run_dirs)
            dataset = load_dataset(manifest)
            dataset_name = Path(manifest).resolve().parent.name
            result = self._evaluate_runs(run_dirs, dataset, dataset_name, mode, log, oracle)
            out_path = Path(out) if out else self.output_root / 'eval.csv'
            write_eval_csv(out_path, result['rows'])
            if result['iteration_rows']:
                write_iteration_csv(out_path.with_name(out_path.stem + '_iterations.csv'), result['iteration_rows'])
            if oracle:
                result['oracle_csv'] = str(write_oracle_csv(out_path.with_name(out_path.stem + '_oracle.csv'),
                                                            result['oracle_rows']))
        except Exception as e:
            logger.error(f'Оценка не выполнена: {str(e)}')
            log.status = 'error'
            log.error_details = str(e)
            log.completed_at = timezone.now()
            log.save()
            return _failure(e)

        log.status = 'success'
        log.n_rows = len(result['rows'])
        log.mean_fscore = result['groups'][0]['mean'] if result['groups'] else None
        log.seed_std = result['groups'][0]['std'] if result['groups'] else None
        log.results = {'groups': result['groups'], 'iterations': result['iteration_rows'],
                       'oracle': result['oracle_rows']}
        log.completed_at = timezone.now()
        log.save()
        result.update({'success': True, 'eval_csv': str(out_path), 'evaluation_log_id': log.id})
        return result

    def _oracle(self, store: CheckpointStore, final: Dict[str, Any], dataset, split: SplitSpec,
                alpha: float, mode: Optional[str], kts: Dict[str, Any]) -> OracleResult:
        stage = 'joint' if final['variant'] == 'joint' else 'selector'
        iterations = [int(candidate['iteration']) for candidate in final['iterations']]

        def checkpoints():
            for k in iterations:
                for epoch in store.epochs(k, stage):
                    yield k, epoch, model_from_checkpoint(*read_checkpoint(store.checkpoint_path(k, stage, epoch)))

        return oracle_checkpoints(checkpoints(), (final['iteration'], final['epoch']), dataset, split,
                                  alpha, mode, **kts)

    def _evaluate_runs(self, run_dirs: List[Path], dataset, dataset_name: str, mode: Optional[str],
                       log: EvaluationLog, oracle: bool = False) -> Dict[str, Any]:
        rows = []
        oracle_rows = []
        # (variant, sigma) -> seed -> список результатов по разбиениям
        grouped: 'OrderedDict[tuple, OrderedDict[int, list]]' = OrderedDict()
        best_grouped: 'OrderedDict[tuple, OrderedDict[int, list]]' = OrderedDict()
        iteration_scores: 'OrderedDict[tuple, list]' = OrderedDict()

        for run_dir in run_dirs:
            store = CheckpointStore(run_dir)
            run = store.read_run_json()
            final = store.read_final()
            config = run['config']
            split = SplitSpec(**run['split'])
            variant, sigma, seed = config['variant'], config['sigma'], int(run['seed'])
            run_mode = mode or config.get('aggregation_mode')
            kts = kts_settings(config)

            model = model_from_checkpoint(*read_checkpoint(store.final_checkpoint()))
            result = evaluate_split(model, dataset, split, config['alpha'], run_mode, **kts)
            base = {'dataset': dataset_name, 'variant': variant, 'sigma': sigma, 'split': split.split_id, 'seed': seed}
            rows += [dict(base, video_id=vid, fscore=f) for vid, f in result.per_video_f.items()]
            rows.append(dict(base, video_id='__split_mean__', fscore=result.split_mean))
            grouped.setdefault((variant, sigma), OrderedDict()).setdefault(seed, []).append(result)
            log.evaluated_runs += 1

            if oracle:
                best = self._oracle(store, final, dataset, split, config['alpha'], run_mode, kts)
                oracle_rows.append(dict(base, **{k: v for k, v in vars(best).items() if k != 'per_checkpoint'}))
                best_grouped.setdefault((variant, sigma), OrderedDict()).setdefault(seed, []).append(
                    EvalResult(split_mean=best.best_fscore))
                logger.info(f'{run_dir.name}: выбранный чекпоинт {best.selected_fscore:.2f}, '
                            f'лучший на тесте {best.best_fscore:.2f} (итерация {best.best_iteration}, '
                            f'эпоха {best.best_epoch})')

            iterations = final.get('iterations', [])
            if len(iterations) > 1:
                scores = []
                for candidate in iterations:
                    it_model = model_from_checkpoint(*read_checkpoint(run_dir / candidate['checkpoint']))
                    scores.append(evaluate_split(it_model, dataset, split, config['alpha'], run_mode,
                                                 **kts).split_mean)
                iteration_scores.setdefault((variant, sigma), []).append(scores)

        groups = []
        sigmas = {key[1] for key in grouped}
        for (variant, sigma), per_seed in grouped.items():
            seed_results = []
            for seed, split_results in per_seed.items():
                combined = combine_splits(split_results)
                seed_results.append(combined)
                rows.append({'dataset': dataset_name, 'variant': variant, 'sigma': sigma, 'split': 'all',
                             'seed': seed, 'video_id': '__seed_mean__', 'fscore': combined.split_mean})
            aggregate = aggregate_seeds(seed_results)
            for name, value in (('__mean__', aggregate.split_mean), ('__std__', aggregate.seed_std)):
                rows.append({'dataset': dataset_name, 'variant': variant, 'sigma': sigma, 'split': 'all',
                             'seed': 'all', 'video_id': name, 'fscore': value})
            label = variant if len(sigmas) == 1 else f'{variant} σ={sigma:g}'
            group = {'variant': label, 'dataset': dataset_name, 'mean': aggregate.split_mean,
                     'std': aggregate.seed_std, 'seeds': aggregate.per_seed_means}
            if (variant, sigma) in best_grouped:
                best = aggregate_seeds([combine_splits(results)
                                        for results in best_grouped[(variant, sigma)].values()])
                group.update({'best_mean': best.split_mean, 'best_std': best.seed_std})
            groups.append(group)

        header, body = results_table(groups)
        iteration_rows = []
        tables = [format_table(header, body)]
        for (variant, sigma), per_run in iteration_scores.items():
            depth = min(len(scores) for scores in per_run)
            means = [float(np.mean([scores[k] for scores in per_run])) for k in range(depth)]
            table = iteration_table(means)
            iteration_rows += [dict(row, variant=variant, sigma=sigma) for row in table]
            tables.append(format_table(
                ['iteration', 'fscore', 'best_so_far'],
                [[str(r['iteration']), f"{r['fscore']:.2f}", f"{r['best_so_far']:.2f}"] for r in table]))
        return {'rows': rows, 'groups': groups, 'iteration_rows': iteration_rows, 'oracle_rows': oracle_rows,
                'table': '\n\n'.join(tables)}

    # === Кривые ===

    def curves(self, run_dir: str) -> Dict[str, Any]:
        try:
            csv_path, charts = write_curves(run_dir)
            return {'success': True, 'csv': str(csv_path), 'charts': [str(c) for c in charts]}
        except Exception as e:
            logger.error(f'Кривые для {run_dir} не построены: {str(e)}')
            return _failure(e)

    # === Данные ===

    def make_splits(self, manifest: str, out: str, n_splits: int = 5, test_fraction: float = 0.2,
                    val_fraction: float = 0.2, seed: int = 0) -> Dict[str, Any]:
        try:
            ids = [entry['video_id'] for entry in read_manifest(manifest).videos]
            splits = make_splits(ids, n_splits, test_fraction, val_fraction, seed)
            path = save_splits(out, splits)
            return {'success': True, 'path': str(path), 'n_splits': len(splits)}
        except Exception as e:
            logger.error(f'Разбиения не созданы: {str(e)}')
            return _failure(e)

    def synth_dataset(self, out: str, **params) -> Dict[str, Any]:
        try:
            synthetic = synth_generate(**params)
            path = save_dataset(out, synthetic.pairs(), notes=f'synthetic: {params}')
            return {'success': True, 'manifest': str(path), 'n_videos': len(synthetic.videos)}
        except Exception as e:
            logger.error(f'Синтетический датасет не создан: {str(e)}')
            return _failure(e)

    def import_h5(self, h5_path: str, out: str, mode: str) -> Dict[str, Any]:
        try:
            path = import_hdf5(h5_path, out, MODE_ALIASES.get(mode, mode))
            return {'success': True, 'manifest': str(path)}
        except Exception as e:
            logger.error(f'Импорт {h5_path} не выполнен: {str(e)}')
            return _failure(e)
