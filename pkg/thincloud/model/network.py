'''
Generator and conditional patch discriminator.

Generator, ``L`` levels, channels ``C_l = base * 2^l``:

```
x --stem(3x3)--> E0 --down(4x4/2)--> E1 --> ... --> E(L-1)
                 |                   |                 |
                 +--concat--fuse <---+--concat--fuse <-+ up(4x4/2, transposed)
                       |
                  head(3x3) --> sigmoid --> y
```

Each encoder level ends with a residual ``attention_block``, or with a residual 3x3 conv block
for the convolutional ablation arm; both keep the tensor shape. Discriminator: condition and
candidate concatenated on channels, strided 4x4 convs, sigmoid patch map. A layer whose strided
output extent would not be integral (odd input side) runs at stride 1 instead.
'''

from dataclasses import (asdict, dataclass)
from typing import (Dict, List, Tuple)
import logging
import numpy as np
from ..autodiff import ops
from ..autodiff.tape import (Tape, bind)
from ..autodiff.tensor import (DEFAULT_DTYPE, Param, Tensor)
from ..common.exception import (ConfigError, DimensionError)
from .attention import (AttentionConfig, AttentionWeights, attention_block)


LEAKY_ALPHA = 0.2
ENCODERS = ('attention', 'conv')


def _positive_int(owner:str, name:str, value):
    if not isinstance(value, (int, np.integer)) or value<=0:
        raise ConfigError(f'{owner}.{name} must be a positive int, got {value}.')


@dataclass(frozen=True)
class GeneratorConfig:
    '''Generator hyper-parameters.'''
    in_channels: int = 3
    base_channels: int = 16
    levels: int = 3
    heads: int = 4
    side: int = 32
    encoder: str = 'attention'
    eps: float = 1e-6

    def validate(self):
        for name in ('in_channels', 'base_channels', 'levels', 'heads', 'side'):
            _positive_int('GeneratorConfig', name, getattr(self, name))
        if self.side % 2**(self.levels-1):
            raise ConfigError(f'Image side {self.side} not divisible by 2^{self.levels-1}.')
        if self.encoder not in ENCODERS:
            raise ConfigError(f'Invalid encoder {self.encoder}, expect one of {ENCODERS}.')
        if not self.eps>0:
            raise ConfigError('GeneratorConfig.eps must be positive.')

    def channels(self, level:int) -> int:
        return self.base_channels * 2**level

    def attention(self, level:int) -> AttentionConfig:
        '''Attention dimensions at encoder `level`.'''
        return AttentionConfig.for_width(self.channels(level), self.heads, self.eps)


@dataclass(frozen=True)
class DiscriminatorConfig:
    '''Patch discriminator: one strided conv per width, the last width is the patch map.'''
    in_channels: int = 6
    widths: Tuple[int, ...] = (16, 32, 1)
    strides: Tuple[int, ...] = (2, 2, 2)
    kernel: int = 4

    def validate(self):
        _positive_int('DiscriminatorConfig', 'in_channels', self.in_channels)
        _positive_int('DiscriminatorConfig', 'kernel', self.kernel)
        if self.in_channels % 2:
            raise ConfigError('Discriminator input concatenates two images, channels must be even.')
        if not self.widths or len(self.widths)!=len(self.strides):
            raise ConfigError('Discriminator needs one stride per layer width.')
        for w in self.widths: _positive_int('DiscriminatorConfig', 'widths', w)
        for s in self.strides: _positive_int('DiscriminatorConfig', 'strides', s)


class Network:
    '''Ordered collection of named params.'''

    def __init__(self, cfg, dtype=DEFAULT_DTYPE) -> None:
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.__params = {} # type: Dict[str, Param]

    @property
    def params(self) -> List[Param]:
        '''Parameters in creation order.'''
        return list(self.__params.values())

    @property
    def param_count(self) -> int:
        return sum(p.size for p in self.__params.values())

    def param(self, name:str) -> Param:
        return self.__params[name]

    def config_dict(self) -> dict:
        return asdict(self.cfg)

    def zero_grad(self):
        for p in self.__params.values(): p.zero_grad()

    def _add(self, name:str, value) -> Param:
        return self._register(Param(name, value, dtype=self.dtype))

    def _register(self, param:Param) -> Param:
        if param.name in self.__params:
            raise ConfigError(f'Duplicated parameter name: {param.name}.')
        self.__params[param.name] = param
        return param

    def _conv(self, rng, name:str, c_out:int, c_in:int, k:int, transpose:bool=False):
        '''He-normal kernel and zero bias. Transposed kernels are stored ``C_in x C_out x k x k``.'''
        shape = (c_in, c_out, k, k) if transpose else (c_out, c_in, k, k)
        self._add(f'{name}.w', rng.normal(0.0, np.sqrt(2.0/(c_in*k*k)), size=shape))
        self._add(f'{name}.b', np.zeros(c_out))

    def _apply_conv(self, x:Tensor, name:str, tape:Tape, stride:int=1, pad:int=1,
                    transpose:bool=False, activation:bool=True) -> Tensor:
        w, b = bind(self.param(f'{name}.w'), tape), bind(self.param(f'{name}.b'), tape)
        fun = ops.conv2d_transpose if transpose else ops.conv2d
        y = ops.bias_add(fun(x, w, stride, pad), b)
        return ops.leaky_relu(y, LEAKY_ALPHA) if activation else y


class Generator(Network):
    '''Encoder-decoder with skip connections and attention encoder blocks.'''

    def __init__(self, cfg:GeneratorConfig, seed:int=0, dtype=DEFAULT_DTYPE) -> None:
        '''Build and initialize all params from `seed`.

        Args:
            cfg (GeneratorConfig): Architecture.
            seed (int, optional): Initialization seed. Defaults to 0.
            dtype (optional): Parameter precision. Defaults to 32-bit.
        '''
        cfg.validate()
        super().__init__(cfg, dtype)
        self.__attention = {} # type: Dict[int, AttentionWeights]
        rng = np.random.default_rng(seed)

        L, C = cfg.levels, cfg.channels
        self._conv(rng, 'stem', C(0), cfg.in_channels, 3)
        for l in range(L):
            if l>0: self._conv(rng, f'enc{l}.down', C(l), C(l-1), 4)
            if cfg.encoder=='attention':
                weights = AttentionWeights.init(cfg.attention(l), rng, f'enc{l}.attn', self.dtype)
                for p in weights.params: self._register(p)
                self.__attention[l] = weights
            else:
                self._conv(rng, f'enc{l}.conv', C(l), C(l), 3)
        for l in range(L-1, 0, -1):
            self._conv(rng, f'dec{l}.up', C(l-1), C(l), 4, transpose=True)
            self._conv(rng, f'dec{l}.fuse', C(l-1), 2*C(l-1), 3)
        self._conv(rng, 'head', cfg.in_channels, C(0), 3)
        logging.info('Generator (%s encoder, %d level(s), %d head(s)): %d parameters.',
                     cfg.encoder, L, cfg.heads, self.param_count)


    def check_input(self, x:Tensor):
        cfg = self.cfg
        if x.ndim!=3 or x.shape[0]!=cfg.in_channels:
            raise DimensionError(f'Expect {cfg.in_channels} x H x W input, got shape {x.shape}.')
        step = 2**(cfg.levels-1)
        if x.shape[1]%step or x.shape[2]%step:
            raise DimensionError(f'Spatial extents {x.shape[1:]} not divisible by {step}.')


    def encode_block(self, h:Tensor, level:int, tape:Tape=None) -> Tensor:
        '''Shape-preserving residual block at the end of encoder `level`.'''
        if self.cfg.encoder=='attention':
            return attention_block(h, self.__attention[level], self.cfg.attention(level), tape)
        return ops.add(h, self._apply_conv(h, f'enc{level}.conv', tape))


    def forward(self, cloudy, tape:Tape=None, stages:list=None) -> Tensor:
        '''Restore one image.

        Args:
            cloudy (Tensor): ``C x H x W`` image in [0, 1].
            tape (Tape, optional): Record for backward. Defaults to None.
            stages (list, optional): Collect ``(stage name, shape)`` of intermediate maps.
        '''
        x = ops.as_tensor(cloudy)
        self.check_input(x)
        L = self.cfg.levels
        record = (lambda name, t: stages.append((name, t.shape))) if stages is not None \
                 else (lambda name, t: None)

        # encoder
        h = self._apply_conv(x, 'stem', tape)
        skips = []
        for l in range(L):
            if l>0: h = self._apply_conv(h, f'enc{l}.down', tape, stride=2)
            h = self.encode_block(h, l, tape)
            record(f'enc{l}', h)
            skips.append(h)

        # decoder
        for l in range(L-1, 0, -1):
            u = self._apply_conv(h, f'dec{l}.up', tape, stride=2, transpose=True)
            h = self._apply_conv(ops.concat([u, skips[l-1]], axis=0), f'dec{l}.fuse', tape)
            record(f'dec{l}', h)

        y = ops.sigmoid(self._apply_conv(h, 'head', tape, activation=False))
        record('out', y)
        return y


    def stage_shapes(self, side:int=None) -> List[Tuple[str, tuple]]:
        '''Shapes of the intermediate maps for a zero input of the given side.'''
        side = side or self.cfg.side
        stages = []
        self.forward(Tensor(np.zeros((self.cfg.in_channels, side, side)), dtype=self.dtype),
                     stages=stages)
        return stages


class Discriminator(Network):
    '''Conditional patch discriminator ``D(x, y)``.'''

    def __init__(self, cfg:DiscriminatorConfig=None, seed:int=0, dtype=DEFAULT_DTYPE) -> None:
        cfg = cfg or DiscriminatorConfig()
        cfg.validate()
        super().__init__(cfg, dtype)
        rng = np.random.default_rng(seed)
        c_in = cfg.in_channels
        for i, width in enumerate(cfg.widths):
            self._conv(rng, f'd{i}', width, c_in, cfg.kernel)
            c_in = width
        logging.info('Discriminator: %d parameters.', self.param_count)


    def forward(self, x, y, tape:Tape=None) -> Tensor:
        '''Patch probabilities in (0, 1) that `y` is the clear version of `x`.'''
        x, y = ops.as_tensor(x), ops.as_tensor(y)
        if x.shape!=y.shape:
            raise DimensionError(f'Condition {x.shape} and candidate {y.shape} differ.')
        h = ops.concat([x, y], axis=0)
        if h.shape[0]!=self.cfg.in_channels:
            raise DimensionError(f'Expect {self.cfg.in_channels} stacked channels, got {h.shape[0]}.')
        last = len(self.cfg.widths) - 1
        for i, stride in enumerate(self.cfg.strides):
            stride, pad = patch_geometry(h.shape[1:], self.cfg.kernel, stride)
            h = self._apply_conv(h, f'd{i}', tape, stride=stride, pad=pad, activation=i<last)
        return ops.sigmoid(h)


    def patch_shape(self, height:int, width:int=None) -> Tuple[int, int]:
        '''Extent of the patch map for `height` x `width` inputs.'''
        shape = (height, width or height)
        for stride in self.cfg.strides:
            stride, pad = patch_geometry(shape, self.cfg.kernel, stride)
            shape = tuple(ops.conv_extent(n, self.cfg.kernel, stride, pad) for n in shape)
        return shape


def patch_geometry(shape:Tuple[int, int], kernel:int, stride:int) -> Tuple[int, int]:
    '''Stride and padding of one discriminator layer on a `shape` input: the configured stride
    with ``(k-2)//2`` padding when both output extents are integral, otherwise stride 1.'''
    candidates = ((stride, (kernel-2)//2), (1, (kernel-1)//2), (1, kernel//2))
    for s, pad in candidates:
        try:
            for n in shape: ops.conv_extent(n, kernel, s, pad)
        except DimensionError:
            continue
        return s, pad
    raise DimensionError(f'No valid {kernel}x{kernel} patch layer on a {shape} input.')


def build_generator(cfg:GeneratorConfig=None, seed:int=0, dtype=DEFAULT_DTYPE) -> Generator:
    return Generator(cfg or GeneratorConfig(), seed, dtype)


def generator_forward(gen:Generator, cloudy, tape:Tape=None) -> Tensor:
    return gen.forward(cloudy, tape)


def build_discriminator(cfg:DiscriminatorConfig=None, seed:int=0,
                        dtype=DEFAULT_DTYPE) -> Discriminator:
    return Discriminator(cfg, seed, dtype)


def discriminator_forward(disc:Discriminator, x, y, tape:Tape=None) -> Tensor:
    return disc.forward(x, y, tape)
