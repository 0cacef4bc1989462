'''Instrumentation of primitive ops: transient buffer sizes and clamp events.

Monitors are context-local (``contextvars``), so two threads measuring different kernels
never see each other's counts and there is no module level mutable state.

```python
with OpMonitor() as m:
    linear_attention(q, k, v)
print(m.peak_elements, m.clamp_events)
```
'''

import contextvars


_ACTIVE = contextvars.ContextVar('thincloud_op_monitors', default=())


class OpMonitor:
    '''Collect statistics of the primitive ops executed inside a ``with`` block.'''

    def __init__(self) -> None:
        self.peak_elements = 0   # largest single buffer produced by a primitive
        self.total_elements = 0  # sum over all produced buffers
        self.op_count = 0
        self.clamp_events = 0    # elements raised to a floor by `clamp_min`
        self.__tokens = []

    def __repr__(self) -> str:
        return f'{self.__class__.__name__}(ops={self.op_count}, peak={self.peak_elements}, ' \
               f'clamps={self.clamp_events})'

    def __enter__(self):
        self.__tokens.append(_ACTIVE.set(_ACTIVE.get() + (self,)))
        return self

    def __exit__(self, *exc):
        _ACTIVE.reset(self.__tokens.pop())
        return False

    def reset(self):
        '''Clear collected statistics.'''
        self.peak_elements = 0
        self.total_elements = 0
        self.op_count = 0
        self.clamp_events = 0


def observe_buffer(elements:int):
    '''Report a buffer produced by a primitive to all active monitors.'''
    for monitor in _ACTIVE.get():
        monitor.op_count += 1
        monitor.total_elements += elements
        if elements > monitor.peak_elements: monitor.peak_elements = elements


def observe_clamp(count:int):
    '''Report clamped elements to all active monitors.'''
    for monitor in _ACTIVE.get():
        monitor.clamp_events += count
