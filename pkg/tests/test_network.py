import numpy as np
import numpy.testing as npt
import pytest
from thincloud.autodiff import ops
from thincloud.autodiff.gradcheck import (COMPOSITE_TOLERANCE, GradCheckCase, check_case)
from thincloud.autodiff.tensor import Tensor
from thincloud.common.exception import (ConfigError, DimensionError)
from thincloud.model.network import (Discriminator, DiscriminatorConfig, Generator, GeneratorConfig,
                                     build_discriminator, build_generator, discriminator_forward,
                                     generator_forward, patch_geometry)


def expected_param_count(cfg:GeneratorConfig) -> int:
    conv = lambda c_out, c_in, k: c_out*c_in*k*k + c_out
    C = cfg.channels
    total = conv(C(0), cfg.in_channels, 3) + conv(cfg.in_channels, C(0), 3)
    for l in range(cfg.levels):
        if l>0: total += conv(C(l), C(l-1), 4)
        d = max(C(l)//cfg.heads, 1)
        total += 3 * cfg.heads * C(l) * d + cfg.heads * d * C(l)
    for l in range(1, cfg.levels):
        total += C(l)*C(l-1)*16 + C(l-1)     # transposed up-sampling
        total += conv(C(l-1), 2*C(l-1), 3)   # fuse with skip
    return total


def test_default_config():
    cfg = GeneratorConfig()
    assert (cfg.in_channels, cfg.base_channels, cfg.levels, cfg.heads, cfg.side)==(3, 16, 3, 4, 32)
    gen = build_generator(cfg, seed=1)
    assert gen.param_count==expected_param_count(cfg)
    assert [p.name for p in gen.params][:2]==['stem.w', 'stem.b']


def test_same_seed_same_params():
    cfg = GeneratorConfig(base_channels=4, levels=2, heads=2, side=8)
    a, b = Generator(cfg, seed=3), Generator(cfg, seed=3)
    for p, q in zip(a.params, b.params):
        assert p.name==q.name
        assert p.value.tobytes()==q.value.tobytes()
    c = Generator(cfg, seed=4)
    assert any(not np.array_equal(p.value, q.value) for p, q in zip(a.params, c.params))


@pytest.mark.parametrize('side', [16, 32, 64])
def test_output_shape_and_range(side):
    gen = Generator(GeneratorConfig(side=side), seed=0)
    x = Tensor(np.random.default_rng(side).uniform(0, 1, (3, side, side)))
    y = generator_forward(gen, x)
    assert y.shape==(3, side, side)
    assert np.all(y.data>0) and np.all(y.data<1)


def test_invalid_config_and_input():
    with pytest.raises(ConfigError):
        Generator(GeneratorConfig(side=30))
    with pytest.raises(ConfigError):
        Generator(GeneratorConfig(encoder='mlp'))
    with pytest.raises(ConfigError):
        DiscriminatorConfig(widths=(16, 1), strides=(2,)).validate()
    gen = Generator(GeneratorConfig(base_channels=4, levels=3, heads=2, side=8))
    with pytest.raises(DimensionError):
        gen.forward(Tensor(np.zeros((3, 10, 10))))
    with pytest.raises(DimensionError):
        gen.forward(Tensor(np.zeros((1, 8, 8))))


def test_conv_encoder_keeps_stage_shapes():
    attention = Generator(GeneratorConfig(base_channels=4, side=16), seed=0)
    conv = Generator(GeneratorConfig(base_channels=4, side=16, encoder='conv'), seed=0)
    stages = attention.stage_shapes()
    assert [s for s, _ in stages]==['enc0', 'enc1', 'enc2', 'dec2', 'dec1', 'out']
    assert stages==conv.stage_shapes()
    assert dict(stages)['enc2']==(16, 4, 4)


def test_forward_is_stateless(tiny_gen_cfg):
    gen = Generator(tiny_gen_cfg, seed=0)
    rng = np.random.default_rng(0)
    a, b = (Tensor(rng.uniform(0, 1, (3, 8, 8))) for _ in range(2))
    ya, yb = gen.forward(a).data, gen.forward(b).data
    assert gen.forward(b).data.tobytes()==yb.tobytes()
    assert gen.forward(a).data.tobytes()==ya.tobytes()


def test_generator_gradient():
    cfg = GeneratorConfig(base_channels=4, levels=2, heads=2, side=8)
    gen = Generator(cfg, seed=5, dtype=np.float64)
    rng = np.random.default_rng(5)
    for p in gen.params:
        if p.name.endswith('.b'): p.value = rng.normal(0.0, 0.1, p.shape)
    image = Tensor(rng.uniform(0.1, 0.9, (3, 8, 8)), dtype=np.float64)
    case = GradCheckCase('generator', gen.params, lambda tape: ops.mean_all(gen.forward(image, tape)),
                         tolerance=COMPOSITE_TOLERANCE, max_coords=4)
    res = check_case(case, rng=rng)
    assert res.passed, res


def test_discriminator():
    disc = build_discriminator(seed=2)
    rng = np.random.default_rng(2)
    x, y, y2 = (Tensor(rng.uniform(0, 1, (3, 32, 32))) for _ in range(3))
    out = discriminator_forward(disc, x, y)
    assert out.shape==(1, 4, 4)
    assert np.all(out.data>0) and np.all(out.data<1)
    assert not np.array_equal(out.data, disc.forward(x, y2).data)
    assert build_discriminator(seed=2).forward(x, y).data.tobytes()==out.data.tobytes()
    with pytest.raises(DimensionError):
        disc.forward(x, Tensor(np.zeros((3, 16, 16))))


@pytest.mark.parametrize('side, patch', [(8, 1), (10, 2), (12, 2), (32, 4)])
def test_discriminator_accepts_odd_intermediate_sides(side, patch):
    disc = build_discriminator(seed=1)
    x = Tensor(np.full((3, side, side), 0.5))
    out = disc.forward(x, x)
    assert out.shape==(1, patch, patch)
    assert disc.patch_shape(side)==(patch, patch)


def test_patch_geometry():
    assert patch_geometry((12, 12), 4, 2)==(2, 1)
    assert patch_geometry((3, 3), 4, 2)==(1, 1)
    assert patch_geometry((4, 3), 4, 2)==(1, 1)
    assert patch_geometry((1, 1), 4, 2)==(1, 2)


def test_discriminator_config():
    disc = Discriminator(DiscriminatorConfig(widths=(8, 1), strides=(2, 1), kernel=3), seed=0)
    assert [p.name for p in disc.params]==['d0.w', 'd0.b', 'd1.w', 'd1.b']
    assert disc.param('d0.w').shape==(8, 6, 3, 3)
    assert disc.config_dict()['widths']==(8, 1)
