"""Общие фикстуры тестов: игрушечные датасеты, разбиения и конфигурации"""

import numpy as np

from summarization.dataset_io import SplitSpec, synth_generate
from summarization.run_config import TrainingConfig

TOY_D = 6
TOY_D_H = 4


def toy_dataset(n_videos=6, n=24, seed=0):
    return synth_generate(n_videos=n_videos, n=n, d=TOY_D, n_events=2, noise_scale=0.1, seed=seed)


def toy_split(dataset, n_val=2, n_test=1):
    ids = [video.video_id for video in dataset.videos]
    return SplitSpec(
        split_id=0,
        train_ids=ids[:len(ids) - n_val - n_test],
        val_ids=ids[len(ids) - n_val - n_test:len(ids) - n_test],
        test_ids=ids[len(ids) - n_test:],
        seed=0,
    )


def toy_config(variant='sep', **overrides):
    params = dict(variant=variant, epochs_per_stage=2, d=TOY_D, d_h=TOY_D_H, seed=0,
                  kts_max_change_points=2)
    params.update(overrides)
    return TrainingConfig(**params)


def random_features(n, d, seed=0):
    return np.random.default_rng(seed).standard_normal((n, d))
