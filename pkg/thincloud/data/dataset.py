'''
Paired datasets: synthetic generation, on-disk layout and the 80/20 split.

```
<root>/cloud/<id>.png
<root>/label/<id>.png
<root>/manifest.csv      id,split
```
'''

import csv
import dataclasses
import logging
import os
import shutil
from typing import (List, Tuple)
import numpy as np
from ..autodiff.tensor import DEFAULT_DTYPE
from ..common.exception import (ConfigError, DataError, DimensionError)
from .image import (ImagePair, load_image, save_image)
from .synth import (CloudParams, apply_cloud, synth_clear_image, synth_cloud_field)


TEST_FRACTION = 0.2
MIN_PAIRS = 5
IMAGE_SUFFIXES = ('.png', '.jpg', '.jpeg', '.bmp', '.tif', '.tiff')
MANIFEST = 'manifest.csv'


def split_indices(n:int, seed:int) -> Tuple[List[int], List[int]]:
    '''Seeded shuffle, then the first ``n - floor(0.2n)`` indices train, the rest test.
    Each part is returned in ascending order.'''
    order = np.random.default_rng(seed).permutation(n)
    n_train = n - int(np.floor(TEST_FRACTION * n))
    return sorted(order[:n_train].tolist()), sorted(order[n_train:].tolist())


def make_pair(index:int, side:int, seed:int, params:CloudParams=None,
              dtype=DEFAULT_DTYPE) -> ImagePair:
    '''Synthetic pair `index`, generated from its own seed stream ``(seed, index)``. A fixed
    ``params.tint`` replaces the drawn one.'''
    params = params or CloudParams()
    rng = np.random.default_rng((seed, index))
    clear_seed, cloud_seed = (int(s) for s in rng.integers(0, 2**32, size=2))
    tint = tuple(float(c) for c in rng.uniform(0.9, 1.0, size=3))
    if params.tint is not None: tint = tuple(params.tint)
    clear = synth_clear_image(side, clear_seed, dtype)
    alpha = synth_cloud_field(side, dataclasses.replace(params, seed=cloud_seed))
    return ImagePair(apply_cloud(clear, alpha, tint), clear, f'{index:05d}')


def make_dataset(n:int, side:int=32, seed:int=7, params:CloudParams=None,
                 dtype=DEFAULT_DTYPE) -> Tuple[List[ImagePair], List[ImagePair]]:
    '''Synthetic thin-cloud pairs split into train and test.

    Args:
        n (int): Number of pairs, at least 5.
        side (int, optional): Image side. Defaults to 32.
        seed (int, optional): Dataset seed. Defaults to 7.
        params (CloudParams, optional): Cloud parameters; the seed, and the tint unless fixed, are
            drawn per image from the dataset seed.
        dtype (optional): Tensor precision.
    '''
    if n<MIN_PAIRS:
        raise ConfigError(f'Dataset needs at least {MIN_PAIRS} pairs, got {n}.')
    pairs = [make_pair(i, side, seed, params, dtype) for i in range(n)]
    train, test = split_indices(n, seed)
    logging.info('Generated %d synthetic pairs (%d train, %d test), side %d, seed %d.',
                 n, len(train), len(test), side, seed)
    return [pairs[i] for i in train], [pairs[i] for i in test]


def write_dataset(root:str, train:List[ImagePair], test:List[ImagePair]):
    '''Write pairs and manifest into a temporary directory, then rename it to `root`. An
    existing `root` is replaced only if it is a dataset itself (has a manifest).'''
    if os.path.exists(root) and not os.path.isfile(os.path.join(root, MANIFEST)):
        raise DataError(f'Refuse to overwrite {root}: not a dataset directory.')

    tmp = f'{root.rstrip(os.sep)}.tmp-{os.getpid()}'
    if os.path.exists(tmp): shutil.rmtree(tmp)
    try:
        for sub in ('cloud', 'label'): os.makedirs(os.path.join(tmp, sub))
        rows = []
        for split, pairs in (('train', train), ('test', test)):
            for pair in pairs:
                save_image(pair.cloudy, os.path.join(tmp, 'cloud', f'{pair.id}.png'))
                save_image(pair.clear, os.path.join(tmp, 'label', f'{pair.id}.png'))
                rows.append((pair.id, split))
        with open(os.path.join(tmp, MANIFEST), 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['id', 'split'])
            writer.writerows(rows)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise

    if os.path.exists(root): shutil.rmtree(root)
    os.replace(tmp, root)
    logging.info('Saved %d pairs to %s.', len(rows), root)


def load_dataset(root:str, dtype=DEFAULT_DTYPE) -> Tuple[List[ImagePair], List[ImagePair]]:
    '''Read a dataset written by ``write_dataset``; splits follow its manifest.'''
    path = os.path.join(root, MANIFEST)
    if not os.path.isfile(path):
        raise DataError(f'No {MANIFEST} in {root}.')
    res = {'train': [], 'test': []}
    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)
        if reader.fieldnames!=['id', 'split']:
            raise DataError(f'Invalid manifest header in {path}: {reader.fieldnames}.')
        for row in reader:
            if row['split'] not in res:
                raise DataError(f'Invalid split "{row["split"]}" for {row["id"]}.')
            cloudy = load_image(os.path.join(root, 'cloud', f'{row["id"]}.png'), dtype)
            clear = load_image(os.path.join(root, 'label', f'{row["id"]}.png'), dtype)
            res[row['split']].append(ImagePair(cloudy, clear, row['id']))
    if not res['train'] and not res['test']:
        raise DataError(f'Empty dataset: {root}.')
    return res['train'], res['test']


def _image_files(folder:str) -> dict:
    if not os.path.isdir(folder): raise DataError(f'Not a directory: {folder}.')
    return {name: os.path.join(folder, name) for name in sorted(os.listdir(folder)) \
                if name.lower().endswith(IMAGE_SUFFIXES)}


def load_paired_dir(cloud_dir:str, label_dir:str, allow_skip:bool=False, seed:int=7,
                    dtype=DEFAULT_DTYPE) -> Tuple[List[ImagePair], List[ImagePair]]:
    '''Pair images of two folders by file name, e.g. the cloud/label layout of RICE.

    Args:
        cloud_dir (str): Cloudy images.
        label_dir (str): Clear images with the same file names.
        allow_skip (bool, optional): Skip unpaired or unreadable files with a warning
            instead of failing. Defaults to False.
        seed (int, optional): Split seed. Defaults to 7.
        dtype (optional): Tensor precision.
    '''
    clouds, labels = _image_files(cloud_dir), _image_files(label_dir)
    problems = [f'unpaired: {name}' for name in sorted(set(clouds) ^ set(labels))]

    pairs = []
    for name in sorted(set(clouds) & set(labels)):
        try:
            pairs.append(ImagePair(load_image(clouds[name], dtype), load_image(labels[name], dtype),
                                   os.path.splitext(name)[0]))
        except (DataError, DimensionError) as e:
            problems.append(f'{name}: {e}')

    if problems:
        if not allow_skip:
            raise DataError(f'{len(problems)} problem(s) in paired directories:\n' + '\n'.join(problems))
        for p in problems: logging.warning('Skipped %s', p)
    if not pairs:
        raise DataError(f'No image pairs in {cloud_dir} and {label_dir}.')

    train, test = split_indices(len(pairs), seed)
    return [pairs[i] for i in train], [pairs[i] for i in test]
