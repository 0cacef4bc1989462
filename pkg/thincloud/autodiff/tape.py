'''
Tape for reverse-mode differentiation.

Every primitive goes through ``record_op``: the forward value is checked for NaN/Inf, reported
to active ``OpMonitor`` instances and, when any input lives on a tape, a ``GradNode`` is
appended to that tape.

```
 watch(param) --> leaf --> [matmul] --> t1 --> [sigmoid] --> t2 --> [reduce] --> loss
                             ^
 constant -------------------+
```

``Tape.backward`` walks the nodes in reverse topological order (``DirectedGraph.sort``),
restricted to the ancestors of the loss, and accumulates gradients into the watched ``Param``s.
A tape belongs to one thread and supports one backward pass.
'''

from typing import (Callable, Dict, List, Sequence)
import numpy as np
from ..common.exception import (NumericalError, UsageError)
from ..common.graph import DirectedGraph
from .monitor import observe_buffer
from .tensor import (Param, Tensor)


class GradNode:
    '''One recorded primitive.'''

    __slots__ = ('op', 'inputs', 'output', 'backward', 'index')

    def __init__(self, op:str, inputs:Sequence[Tensor], output:Tensor,
                 backward:Callable, index:int) -> None:
        '''Recorded op.

        Args:
            op (str): Primitive name.
            inputs (Sequence[Tensor]): Input tensors, constants included.
            output (Tensor): Produced tensor.
            backward (Callable): ``backward(g) -> tuple`` mapping the output gradient to one
                gradient (or None) per input; values saved for backward live in its closure.
            index (int): Position on the tape.
        '''
        self.op = op
        self.inputs = tuple(inputs)
        self.output = output
        self.backward = backward
        self.index = index

    def __repr__(self) -> str:
        return f'{self.op}#{self.index}'


class Tape:
    '''Ordered record of differentiable ops.'''

    def __init__(self, name:str=None) -> None:
        self.name = name or self.__class__.__name__
        self.__nodes = []       # type: List[GradNode]
        self.__producers = {}   # id(output tensor) -> GradNode
        self.__leaves = {}      # id(leaf tensor) -> (leaf, Param)
        self.__watched = {}     # id(Param) -> leaf tensor
        self.__consumed = False

    def __len__(self) -> int:
        return len(self.__nodes)

    @property
    def nodes(self) -> List[GradNode]:
        '''Recorded nodes in execution order.'''
        return self.__nodes

    @property
    def params(self) -> List[Param]:
        '''Watched parameters.'''
        return [param for _, param in self.__leaves.values()]


    def watch(self, param:Param) -> Tensor:
        '''Leaf tensor of `param` on this tape. Watching a param twice returns the same leaf,
        so every use of it accumulates into one gradient.'''
        leaf = self.__watched.get(id(param))
        if leaf is None:
            leaf = Tensor.wrap(param.value.copy(), tape=self)
            self.__watched[id(param)] = leaf
            self.__leaves[id(leaf)] = (leaf, param)
        return leaf


    def record(self, op:str, inputs:Sequence[Tensor], output:Tensor, backward:Callable):
        '''Append a node producing `output`.'''
        if self.__consumed:
            raise UsageError(f'{self.name} was already used for a backward pass.')
        node = GradNode(op, inputs, output, backward, len(self.__nodes))
        self.__nodes.append(node)
        self.__producers[id(output)] = node


    def graph(self) -> DirectedGraph:
        '''Dependency graph between recorded nodes: producer -> consumer.'''
        graph = DirectedGraph()
        for node in self.__nodes:
            graph.add_node(node)
            for t in node.inputs:
                producer = self.__producers.get(id(t))
                if producer is not None: graph.add_edge(producer, node)
        return graph


    def backward(self, loss:Tensor) -> Dict[str, np.ndarray]:
        '''Reverse-mode accumulation from a scalar loss into the watched params.

        Args:
            loss (Tensor): Single-element tensor recorded on this tape.

        Returns:
            dict: Param name -> accumulated gradient.
        '''
        if loss.size!=1:
            raise UsageError(f'Loss must be scalar, got shape {loss.shape}.')
        if loss.tape is not self:
            raise UsageError('Loss is not recorded on this tape.')
        if self.__consumed:
            raise UsageError(f'{self.name} was already used for a backward pass.')
        self.__consumed = True

        grads = {id(loss): np.ones_like(loss.data)}

        # reverse topological order restricted to nodes the loss depends on
        producer = self.__producers.get(id(loss))
        if producer is not None:
            graph = self.graph()
            relevant = graph.ancestors(producer)
            for node in reversed(graph.sort()):
                if node not in relevant: continue
                g = grads.pop(id(node.output), None)
                if g is None: continue
                for t, g_in in zip(node.inputs, node.backward(g)):
                    if g_in is None or t.tape is not self: continue
                    key = id(t)
                    grads[key] = grads[key] + g_in if key in grads else g_in

        # leaves
        res = {}
        for key, (leaf, param) in self.__leaves.items():
            g = grads.get(key)
            if g is not None: param.accumulate(np.reshape(g, leaf.shape))
            res[param.name] = param.grad
        return res


    def to_networkx(self):
        '''Export as ``networkx.DiGraph``: one vertex per node, plus one per watched param.'''
        import networkx as nx
        graph = nx.DiGraph()
        for _, param in self.__leaves.values():
            graph.add_node(param.name, kind='param')
        for node in self.__nodes:
            graph.add_node(repr(node), kind='op', op=node.op)
            for t in node.inputs:
                producer = self.__producers.get(id(t))
                if producer is not None:
                    graph.add_edge(repr(producer), repr(node))
                elif id(t) in self.__leaves:
                    graph.add_edge(self.__leaves[id(t)][1].name, repr(node))
        return graph


def common_tape(inputs:Sequence[Tensor]):
    '''The single tape shared by the taped inputs, or None.'''
    tape = None
    for t in inputs:
        if t.tape is None: continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise UsageError('Inputs are recorded on different tapes.')
    return tape


def record_op(op:str, inputs:Sequence[Tensor], data:np.ndarray, backward:Callable) -> Tensor:
    '''Wrap the forward value of a primitive and record it.

    Args:
        op (str): Primitive name, shown in errors and graph exports.
        inputs (Sequence[Tensor]): Inputs of the primitive.
        data (np.ndarray): Forward value, owned by the new tensor afterwards.
        backward (Callable): See ``GradNode``.
    '''
    if not np.all(np.isfinite(data)):
        raise NumericalError(f'{op} produced non-finite values.')
    observe_buffer(data.size)
    tape = common_tape(inputs)
    out = Tensor.wrap(data, tape)
    if tape is not None: tape.record(op, inputs, out, backward)
    return out


def bind(param:Param, tape:Tape=None) -> Tensor:
    '''Tensor of `param`: a leaf on `tape` when training, a constant otherwise.'''
    return tape.watch(param) if tape is not None else param.tensor()


def backward(tape:Tape, loss:Tensor) -> Dict[str, np.ndarray]:
    '''Gradients of `loss` for all params watched by `tape`.'''
    return tape.backward(loss)
