'''
Checkpoint file: a plain-text manifest followed by raw little-endian blobs in manifest order.

```
thincloud-checkpoint
version 1
step 2000
seed 7
config {"generator": {...}, "discriminator": {...}}
params 3
stem.w float32 16,3,3,3
stem.b float32 16
adam.G.t float64 1
end
<blob stem.w><blob stem.b><blob adam.G.t>
```
'''

from dataclasses import (dataclass, field)
from typing import (Dict, Iterable)
import json
import logging
import os
import numpy as np
from ..autodiff.tensor import Param
from ..common.exception import CheckpointError


MAGIC = 'thincloud-checkpoint'
FORMAT_VERSION = 1
DTYPES = {'float32': np.dtype('<f4'), 'float64': np.dtype('<f8')}


@dataclass
class Checkpoint:
    '''Named arrays plus training metadata.'''
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    seed: int = 0
    config: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @classmethod
    def from_params(cls, params:Iterable[Param], step:int=0, seed:int=0,
                    config:dict=None) -> "Checkpoint":
        '''Snapshot of param values.'''
        arrays = {p.name: p.value.copy() for p in params}
        return cls(arrays, step, seed, dict(config or {}))

    def add(self, name:str, value):
        '''Store an extra array, e.g. optimizer state.'''
        self.arrays[name] = np.array(value)

    def restore_params(self, params:Iterable[Param], strict:bool=True):
        '''Assign stored values to params with the same names.

        Args:
            params (Iterable[Param]): Target params.
            strict (bool, optional): Missing names are errors. Defaults to True.
        '''
        for p in params:
            value = self.arrays.get(p.name)
            if value is None:
                if strict: raise CheckpointError(f'Parameter {p.name} not found in checkpoint.')
                continue
            if value.shape!=p.shape:
                raise CheckpointError(f'Shape mismatch for {p.name}: checkpoint {value.shape}, '
                                      f'model {p.shape}.')
            p.value = value


def save_checkpoint(ckpt:Checkpoint, path:str):
    '''Write `ckpt` to `path` atomically (temporary file, then rename).'''
    lines = [MAGIC, f'version {ckpt.version}', f'step {int(ckpt.step)}', f'seed {int(ckpt.seed)}',
             f'config {json.dumps(ckpt.config, sort_keys=True)}', f'params {len(ckpt.arrays)}']
    blobs = []
    for name, value in ckpt.arrays.items():
        if not name or any(c.isspace() for c in name):
            raise CheckpointError(f'Invalid array name: "{name}".')
        tag = np.dtype(value.dtype).name
        if tag not in DTYPES:
            raise CheckpointError(f'Unsupported dtype {tag} for {name}.')
        shape = value.shape or (1,)
        lines.append(f'{name} {tag} {",".join(map(str, shape))}')
        blobs.append(np.ascontiguousarray(value, dtype=DTYPES[tag]).tobytes())
    lines.append('end')

    tmp = f'{path}.tmp'
    with open(tmp, 'wb') as f:
        f.write(('\n'.join(lines) + '\n').encode('utf-8'))
        for blob in blobs: f.write(blob)
    os.replace(tmp, path)
    logging.info('Saved checkpoint of %d arrays at step %d to %s.', len(blobs), ckpt.step, path)


def _parse_header(lines:list) -> dict:
    '''Key-value header lines, in fixed order.'''
    if not lines or lines[0]!=MAGIC:
        raise CheckpointError('Not a thincloud checkpoint.')
    res = {}
    for line, key in zip(lines[1:6], ('version', 'step', 'seed', 'config', 'params')):
        k, _, v = line.partition(' ')
        if k!=key: raise CheckpointError(f'Corrupt manifest: expect "{key}", got "{line}".')
        res[key] = v
    if len(res)<5: raise CheckpointError('Corrupt manifest: incomplete header.')
    return res


def load_checkpoint(path:str) -> Checkpoint:
    '''Read a checkpoint, validating version, manifest and blob sizes.'''
    with open(path, 'rb') as f:
        raw = f.read()
    end = raw.find(b'\nend\n')
    if end<0: raise CheckpointError(f'Corrupt manifest in {path}: missing "end" line.')
    try:
        lines = raw[:end].decode('utf-8').split('\n')
    except UnicodeDecodeError as e:
        raise CheckpointError(f'Corrupt manifest in {path}.') from e

    header = _parse_header(lines)
    try:
        version = int(header['version'])
    except ValueError as e:
        raise CheckpointError(f'Corrupt manifest: version "{header["version"]}".') from e
    if version!=FORMAT_VERSION:
        raise CheckpointError(f'Unsupported checkpoint version {version}, expect {FORMAT_VERSION}.')

    try:
        step, seed, count = int(header['step']), int(header['seed']), int(header['params'])
        config = json.loads(header['config'])
    except ValueError as e:
        raise CheckpointError(f'Corrupt manifest: {e}') from e

    entries = lines[6:]
    if len(entries)!=count:
        raise CheckpointError(f'Corrupt manifest: {count} arrays declared, {len(entries)} listed.')

    arrays, offset = {}, end + len(b'\nend\n')
    for line in entries:
        parts = line.split(' ')
        if len(parts)!=3 or parts[1] not in DTYPES:
            raise CheckpointError(f'Corrupt manifest entry: "{line}".')
        name, tag, dims = parts
        try:
            shape = tuple(int(d) for d in dims.split(','))
        except ValueError as e:
            raise CheckpointError(f'Corrupt shape for {name}: "{dims}".') from e
        if any(d<=0 for d in shape):
            raise CheckpointError(f'Corrupt shape for {name}: "{dims}".')
        dtype = DTYPES[tag]
        nbytes = int(np.prod(shape)) * dtype.itemsize
        if offset + nbytes > len(raw):
            raise CheckpointError(f'Truncated checkpoint: blob of {name} incomplete.')
        value = np.frombuffer(raw, dtype=dtype, count=int(np.prod(shape)), offset=offset)
        arrays[name] = value.reshape(shape).astype(dtype.newbyteorder('='))
        offset += nbytes

    if offset!=len(raw):
        raise CheckpointError(f'Checkpoint size mismatch: {len(raw)-offset} unexpected trailing bytes.')
    return Checkpoint(arrays, step, seed, config, version)
