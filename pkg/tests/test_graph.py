import pytest
from thincloud.common.exception import ThinCloudException
from thincloud.common.graph import DirectedGraph


def chain():
    g = DirectedGraph()
    g.add_edge('a', 'b')
    g.add_edge('b', 'c')
    g.add_edge('d', 'c')
    g.add_node('e')
    return g


def test_sort_respects_edges():
    order = chain().sort()
    assert sorted(order)==['a', 'b', 'c', 'd', 'e']
    assert order.index('a') < order.index('b') < order.index('c')
    assert order.index('d') < order.index('c')


def test_sort_ties_keep_insertion_order():
    g = DirectedGraph()
    for node in ('x', 'y', 'z'): g.add_node(node)
    assert g.sort()==['x', 'y', 'z']


def test_sort_of_cycle_is_empty():
    g = DirectedGraph()
    g.add_edge(1, 2)
    g.add_edge(2, 3)
    g.add_edge(3, 1)
    assert g.sort()==[]


def test_ancestors():
    g = chain()
    assert g.ancestors('c')=={'a', 'b', 'c', 'd'}
    assert g.ancestors('e')=={'e'}
    with pytest.raises(ThinCloudException):
        g.ancestors('missing')


def test_size_membership_successors():
    g = chain()
    assert len(g)==5
    assert 'd' in g and 'q' not in g
    assert g.successors('b')==['c']
    assert g.successors('c')==[]
