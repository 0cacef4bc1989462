'''Dense tensors with reverse-mode differentiation.'''

from .tensor import (Tensor, Param, default_eps)
from .tape import (Tape, GradNode, record_op, bind, backward)
from .monitor import OpMonitor
