import networkx as nx
import numpy as np
import numpy.testing as npt
import pytest
from thincloud.autodiff import ops
from thincloud.autodiff.gradcheck import finite_diff_check
from thincloud.autodiff.tape import (Tape, backward, bind)
from thincloud.autodiff.tensor import (Param, Tensor)
from thincloud.common.exception import (DimensionError, UsageError)
from thincloud.common.plot import plot_tape_graph


def test_linear_loss_gradient():
    W = Param('W', np.arange(6.0).reshape(2, 3), dtype=np.float64)
    x = np.array([[0.5], [-1.0], [2.0]])
    tape = Tape()
    loss = ops.sum_all(ops.matmul(tape.watch(W), Tensor(x)))
    grads = backward(tape, loss)
    npt.assert_array_equal(grads['W'], np.outer(np.ones(2), x.ravel()))


def test_unused_param_has_zero_gradient():
    W = Param('W', np.ones((2, 2)), dtype=np.float64)
    b = Param('b', np.ones(2), dtype=np.float64)
    tape = Tape()
    tape.watch(b)
    grads = tape.backward(ops.sum_all(bind(W, tape)))
    npt.assert_array_equal(grads['b'], np.zeros(2))
    npt.assert_array_equal(grads['W'], np.ones((2, 2)))


def test_two_uses_of_a_param_add_up():
    w = Param('w', [1.5, -2.0], dtype=np.float64)
    tape = Tape()
    loss = ops.sum_all(ops.add(bind(w, tape), bind(w, tape)))
    npt.assert_array_equal(tape.backward(loss)['w'], [2.0, 2.0])

    err = finite_diff_check(lambda x: ops.sum_all(ops.mul(x, x)), np.array([1.5, -2.0, 0.3]))
    assert err<1e-8


def test_constants_do_not_require_grad():
    tape = Tape()
    leaf = tape.watch(Param('p', [1.0]))
    assert leaf.requires_grad
    assert not Tensor([1.0]).requires_grad
    assert not ops.add(Tensor([1.0]), Tensor([2.0])).requires_grad
    assert len(tape)==0
    ops.scale(leaf, 2.0)
    assert len(tape)==1


def test_backward_errors():
    p = Param('p', np.ones(3), dtype=np.float64)
    tape = Tape()
    y = ops.scale(bind(p, tape), 2.0)
    with pytest.raises(UsageError):
        tape.backward(y)

    loss = ops.sum_all(y)
    tape.backward(loss)
    with pytest.raises(UsageError):
        tape.backward(loss)
    with pytest.raises(UsageError):
        ops.scale(y, 1.0)

    other = Tape('other')
    with pytest.raises(UsageError):
        other.backward(ops.sum_all(bind(p, Tape())))


def test_inputs_from_two_tapes():
    p, q = Param('p', [1.0]), Param('q', [2.0])
    with pytest.raises(UsageError):
        ops.add(Tape().watch(p), Tape().watch(q))


def test_gradients_accumulate_until_zeroed():
    p = Param('p', [1.0, 2.0], dtype=np.float64)
    for _ in range(2):
        tape = Tape()
        tape.backward(ops.sum_all(bind(p, tape)))
    npt.assert_array_equal(p.grad, [2.0, 2.0])
    p.zero_grad()
    npt.assert_array_equal(p.grad, [0.0, 0.0])


def test_param_value_keeps_shape():
    p = Param('p', np.zeros((2, 3)))
    p.value = np.ones((2, 3))
    assert p.dtype==np.float32 and p.value.sum()==6
    with pytest.raises(DimensionError):
        p.value = np.ones(6)


def test_graph_export(tmp_path):
    W = Param('W', np.ones((2, 2)))
    tape = Tape()
    h = ops.sigmoid(ops.matmul(bind(W, tape), Tensor(np.ones((2, 1)))))
    ops.sum_all(h)
    G = tape.to_networkx()
    assert nx.is_directed_acyclic_graph(G)
    assert G.nodes['W']['kind']=='param'
    assert sorted(d['op'] for _, d in G.nodes(data=True) if d['kind']=='op')==['matmul', 'sigmoid', 'sum']
    assert [repr(n) for n in tape.graph().sort()]==['matmul#0', 'sigmoid#1', 'sum#2']

    path = tmp_path / 'tape.png'
    plot_tape_graph(tape, str(path))
    assert path.stat().st_size>0
