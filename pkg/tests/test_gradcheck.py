import numpy as np
import pytest
from thincloud.autodiff import ops
from thincloud.autodiff.gradcheck import (COMPOSITE_TOLERANCE, GradCheckCase, GradCheckSuite,
                                          check_case, default_suite, finite_diff_check, weighted_sum)
from thincloud.autodiff.tape import (bind, record_op)
from thincloud.autodiff.tensor import (Param, Tensor)
from thincloud.common.exception import (NumericalError, UsageError)
from thincloud.model.attention import (AttentionConfig, AttentionWeights, attention_block)


def test_quadratic_and_linear(rng):
    x = rng.normal(size=(3, 4))
    assert finite_diff_check(lambda t: ops.sum_all(ops.mul(t, t)), x) < 1e-8
    c = rng.normal(size=(3, 4))
    assert finite_diff_check(lambda t: weighted_sum(t, c), x) < 1e-10


def test_attention_block_composite(rng):
    cfg = AttentionConfig.for_width(4, heads=2)
    w = AttentionWeights.init(cfg, rng, 'blk', np.float64)
    R = rng.normal(size=(4, 3, 2))
    err = finite_diff_check(lambda t: weighted_sum(attention_block(t, w, cfg), R),
                            rng.normal(size=(4, 3, 2)))
    assert err < COMPOSITE_TOLERANCE


@pytest.mark.filterwarnings('ignore::RuntimeWarning')
def test_non_finite_function():
    with pytest.raises(NumericalError):
        finite_diff_check(lambda t: ops.sum_all(ops.scale(t, 1e308)), np.array([1e10]))


def test_invalid_step():
    with pytest.raises(UsageError):
        finite_diff_check(lambda t: ops.sum_all(t), np.ones(2), h=0.0)


def bad_square(x:Tensor) -> Tensor:
    '''x*x with a backward rule missing its factor 2.'''
    X = x.data
    return record_op('bad_square', (x,), X * X, lambda g: (g * X,))


def test_corrupted_backward_is_detected(rng):
    x = Param('x', rng.uniform(0.5, 1.5, size=(2, 3)), dtype=np.float64)
    suite = GradCheckSuite()
    suite.add(GradCheckCase('bad_square', [x], lambda tape: ops.sum_all(bad_square(bind(x, tape)))))
    suite.add(GradCheckCase('square', [x], lambda tape: ops.sum_all(ops.mul(bind(x, tape), bind(x, tape)))))
    suite.run(show_info=False)

    assert not suite.passed
    failures = suite.failures()
    assert [r.name for r in failures]==['bad_square']
    assert failures[0].max_rel_err==pytest.approx(0.5, rel=1e-6)
    assert failures[0].worst_index.startswith('x[')
    assert 'bad_square' in suite.summary().get_string()


def test_sampled_coordinates(rng):
    w = Param('w', rng.normal(size=(10, 10)), dtype=np.float64)
    R = rng.normal(size=(10, 10))
    case = GradCheckCase('tanh', [w], lambda tape: weighted_sum(ops.tanh(bind(w, tape)), R), max_coords=5)
    res = check_case(case)
    assert res.passed and res.max_rel_err < 1e-6
    assert not np.any(w.grad)


def test_primitive_suite_passes():
    suite = default_suite(seed=0, networks=False)
    suite.run(show_info=False)
    names = {r.name for r in suite.results}
    assert {'matmul', 'conv2d', 'conv2d_transpose', 'softmax_rows', 'l2_normalize_rows',
            'multi_head_linear_attention', 'attention_block', 'linear_attention'} <= names
    assert suite.passed, suite.summary().get_string()
    for r in suite.results:
        assert r.max_rel_err < r.tolerance


def test_full_suite_passes():
    suite = default_suite(seed=0, max_coords=4)
    suite.run(show_info=False)
    assert {'generator', 'discriminator', 'l1_loss'} <= {r.name for r in suite.results}
    assert suite.passed, suite.summary().get_string()
