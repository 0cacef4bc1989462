'''JSON configuration file with optional sections:

```json
{
    "generator": {"base_channels": 16, "levels": 3, "heads": 4, "side": 32},
    "discriminator": {"widths": [16, 32, 1], "strides": [2, 2, 2]},
    "loss": {"lambda_c": 100.0, "saturating": false},
    "train": {"steps": 2000, "batch_size": 4, "seed": 7}
}
```
'''

import dataclasses
import json
from .exception import ConfigError


SECTIONS = ('generator', 'discriminator', 'loss', 'train')


def _section_types() -> dict:
    from ..gan.loss import GanLossParams
    from ..gan.trainer import TrainConfig
    from ..model.network import (DiscriminatorConfig, GeneratorConfig)
    return {'generator': GeneratorConfig, 'discriminator': DiscriminatorConfig,
            'loss': GanLossParams, 'train': TrainConfig}


def build_config(cls, values:dict=None, **overrides):
    '''Instance of dataclass `cls` from `values`, then non-None `overrides`; validated.'''
    values = dict(values or {})
    values.update({k: v for k, v in overrides.items() if v is not None})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f'Unknown {cls.__name__} field(s): {", ".join(unknown)}.')
    for k, v in values.items():
        if isinstance(v, list): values[k] = tuple(v)
    cfg = cls(**values)
    cfg.validate()
    return cfg


def load_config(path:str=None) -> dict:
    '''Section name -> validated config. Missing sections and a None path give defaults.'''
    data = {}
    if path:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f'Invalid JSON in {path}: {e}') from e
        if not isinstance(data, dict):
            raise ConfigError(f'Expect a JSON object in {path}.')
        unknown = sorted(set(data) - set(SECTIONS))
        if unknown: raise ConfigError(f'Unknown section(s) in {path}: {", ".join(unknown)}.')
    return {name: build_config(cls, data.get(name)) for name, cls in _section_types().items()}
