"""Minimal module system: named parameters, gradients, and buffers.

Layers register parameter arrays once at construction; optimizers mutate
them in place, so references held by the layer stay valid.  Child modules
are picked up automatically on attribute assignment, which gives every
tensor a dotted path name for the weights container.
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np


class Module:
    def __init__(self):
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_grads", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def param(self, name: str, value: np.ndarray) -> np.ndarray:
        """Register a trainable tensor and its zero-filled gradient slot."""
        self._params[name] = value
        self._grads[name] = np.zeros_like(value)
        return value

    def buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        """Register a non-trainable state tensor (e.g. running statistics)."""
        self._buffers[name] = value
        return value

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, value in self._params.items():
            yield prefix + name, value
        for child_name, child in self._modules.items():
            yield from child.named_parameters(f"{prefix}{child_name}.")

    def named_gradients(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, value in self._grads.items():
            yield prefix + name, value
        for child_name, child in self._modules.items():
            yield from child.named_gradients(f"{prefix}{child_name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, value in self._buffers.items():
            yield prefix + name, value
        for child_name, child in self._modules.items():
            yield from child.named_buffers(f"{prefix}{child_name}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for child in self._modules.values():
            yield from child.modules()

    def zero_grad(self) -> None:
        for _, g in self.named_gradients():
            g.fill(0.0)

    def parameter_count(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def state_tensors(self) -> "OrderedDict[str, np.ndarray]":
        """All named tensors (parameters then buffers) for serialization."""
        state = OrderedDict(self.named_parameters())
        state.update(self.named_buffers())
        return state

    def load_state_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        """Copy values into registered tensors in place, casting dtype."""
        state = self.state_tensors()
        missing = sorted(set(state) - set(tensors))
        if missing:
            raise ValueError(f"weights missing tensors: {', '.join(missing[:5])}")
        for name, target in state.items():
            value = np.asarray(tensors[name])
            if value.shape != target.shape:
                raise ValueError(f"tensor {name!r}: shape {value.shape} != expected {target.shape}")
            target[...] = value.astype(target.dtype)


class ModuleList(Module):
    """An indexable sequence of child modules."""

    def __init__(self, items=()):
        super().__init__()
        self._items: list[Module] = []
        for item in items:
            self.append(item)

    def append(self, item: Module) -> None:
        self._modules[str(len(self._items))] = item
        self._items.append(item)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, index):
        return self._items[index]
