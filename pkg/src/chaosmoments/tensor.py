"""Dense order-d tensors, block unfoldings and contractions.

Storage is row-major (last index fastest). Axis and index labels are
0-based in code and 1-based in every piece of user-facing text; the
conversion happens in the parsers (:func:`load_tensor`,
:func:`chaosmoments.partitions.parse_partition`).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

MAX_ORDER = 8
MAX_SIZE = 10**8


class TensorError(ValueError):
    """Raised for malformed tensors, files, or index arguments."""


class Tensor:
    """Immutable dense real tensor of order ``d``.

    Parameters
    ----------
    shape : sequence of int
        Axis lengths ``(n_1, ..., n_d)``, each at least 1.
    data : array_like
        Either ``prod(shape)`` values in row-major order or an array that
        already has the given shape.
    """

    __slots__ = ("_array",)

    def __init__(self, shape: Sequence[int], data) -> None:
        shape = tuple(int(n) for n in shape)
        if len(shape) == 0:
            raise TensorError("shape must have at least one axis")
        if len(shape) > MAX_ORDER:
            raise TensorError(f"order {len(shape)} exceeds the maximum {MAX_ORDER}")
        if any(n < 1 for n in shape):
            raise TensorError(f"every axis length must be >= 1, got {shape}")
        size = math.prod(shape)
        if size > MAX_SIZE:
            raise TensorError(f"tensor has {size} entries, limit is {MAX_SIZE}")
        arr = np.array(data, dtype=float, copy=True)
        if arr.size != size:
            raise TensorError(
                f"length mismatch: shape {shape} needs {size} values, got {arr.size}"
            )
        if not np.all(np.isfinite(arr)):
            raise TensorError("tensor entries must be finite")
        arr = arr.reshape(shape)
        arr.setflags(write=False)
        self._array = arr

    @classmethod
    def from_array(cls, array) -> "Tensor":
        array = np.asarray(array, dtype=float)
        if array.ndim == 0:
            array = array.reshape(1)
        return cls(array.shape, array)

    @property
    def array(self) -> np.ndarray:
        """Read-only ndarray view with the tensor's shape."""
        return self._array

    @property
    def order(self) -> int:
        return self._array.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def size(self) -> int:
        return self._array.size

    @property
    def data(self) -> list[float]:
        return self._array.ravel().tolist()

    def __getitem__(self, index):
        return float(self._array[index])

    def frobenius(self) -> float:
        return float(np.linalg.norm(self._array.ravel()))

    def scaled(self, factor: float) -> "Tensor":
        return Tensor(self.shape, factor * self._array)

    def transpose(self, perm: Sequence[int]) -> "Tensor":
        return Tensor.from_array(np.transpose(self._array, perm))

    def is_zero(self) -> bool:
        return not np.any(self._array)

    def to_dict(self) -> dict:
        return {"order": self.order, "shape": list(self.shape), "data": self.data}

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._array, other._array)

    def __hash__(self) -> int:
        return hash((self.shape, self._array.tobytes()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def make_tensor(shape: Sequence[int], data) -> Tensor:
    return Tensor(shape, data)


def tensor_from_dict(obj: dict) -> Tensor:
    try:
        shape = obj["shape"]
        data = obj["data"]
    except (KeyError, TypeError) as exc:
        raise TensorError("tensor JSON needs 'shape' and 'data' keys") from exc
    if not isinstance(shape, list) or not isinstance(data, list):
        raise TensorError("'shape' and 'data' must be JSON arrays")
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in data):
        raise TensorError("'data' must contain only numbers")
    if "order" in obj and obj["order"] != len(shape):
        raise TensorError(f"order {obj['order']} does not match shape {shape}")
    return Tensor(shape, data)


def load_tensor(path) -> Tensor:
    """Read a tensor from the JSON format ``{"order", "shape", "data"}``.

    Non-finite literals (``NaN``, ``Infinity``) are rejected.
    """
    def _reject(token):
        raise TensorError(f"non-finite number {token!r} in tensor file")

    text = Path(path).read_text()
    try:
        obj = json.loads(text, parse_constant=_reject)
    except json.JSONDecodeError as exc:
        raise TensorError(f"invalid JSON in {path}: {exc}") from exc
    return tensor_from_dict(obj)


def save_tensor(tensor: Tensor, path) -> None:
    Path(path).write_text(json.dumps(tensor.to_dict()))


@dataclass(frozen=True)
class BlockUnfolding:
    """Bookkeeping for an unfolding of a tensor along a partition.

    ``blocks`` are 0-based sorted axis tuples. Grouped axis ``l`` enumerates
    the multi-indices of ``blocks[l]`` in row-major order.
    """

    source_shape: tuple[int, ...]
    blocks: tuple[tuple[int, ...], ...]
    grouped_shape: tuple[int, ...]

    def block_dims(self, l: int) -> tuple[int, ...]:
        return tuple(self.source_shape[j] for j in self.blocks[l])

    def to_grouped(self, index: Sequence[int]) -> tuple[int, ...]:
        """Map a source multi-index to its grouped multi-index."""
        return tuple(
            int(np.ravel_multi_index([index[j] for j in block], self.block_dims(l)))
            for l, block in enumerate(self.blocks)
        )

    def to_source(self, grouped: Sequence[int]) -> tuple[int, ...]:
        """Inverse of :meth:`to_grouped`."""
        index = [0] * len(self.source_shape)
        for l, block in enumerate(self.blocks):
            sub = np.unravel_index(int(grouped[l]), self.block_dims(l))
            for j, i in zip(block, sub):
                index[j] = int(i)
        return tuple(index)


def _blocks_of(partition, order: int) -> tuple[tuple[int, ...], ...]:
    blocks = getattr(partition, "blocks", partition)
    blocks = tuple(tuple(sorted(int(j) for j in b)) for b in blocks)
    flat = sorted(j for b in blocks for j in b)
    if any(len(b) == 0 for b in blocks) or flat != list(range(order)):
        raise TensorError(f"{blocks} is not a partition of {order} axes")
    return blocks


def unfold_array(array: np.ndarray, blocks) -> np.ndarray:
    """Reshape ``array`` so that axis ``l`` enumerates ``blocks[l]``."""
    perm = [j for b in blocks for j in b]
    grouped = [math.prod(array.shape[j] for j in b) for b in blocks]
    return np.transpose(array, perm).reshape(grouped)


def unfold(A: Tensor, partition) -> tuple[Tensor, BlockUnfolding]:
    """Group the axes of ``A`` along ``partition``.

    Returns the order-k tensor together with its :class:`BlockUnfolding`.
    """
    blocks = _blocks_of(partition, A.order)
    arr = unfold_array(A.array, blocks)
    info = BlockUnfolding(A.shape, blocks, arr.shape)
    return Tensor.from_array(arr), info


def fold(B: Tensor, info: BlockUnfolding) -> Tensor:
    """Inverse of :func:`unfold`."""
    perm = [j for b in info.blocks for j in b]
    permuted_shape = [info.source_shape[j] for j in perm]
    arr = B.array.reshape(permuted_shape)
    return Tensor.from_array(np.transpose(arr, np.argsort(perm)))


def contract_array(array: np.ndarray, axes: Sequence[int], vectors) -> np.ndarray:
    """Contract ``array`` with one vector per listed axis.

    The remaining axes keep their relative order.
    """
    axes = [int(a) for a in axes]
    if len(set(axes)) != len(axes):
        raise TensorError(f"repeated axis in {axes}")
    if len(vectors) != len(axes):
        raise TensorError("need exactly one vector per contracted axis")
    out = array
    # contract from the highest axis down so lower axis numbers stay valid
    for a, v in sorted(zip(axes, vectors), key=lambda t: -t[0]):
        if not 0 <= a < array.ndim:
            raise TensorError(f"axis {a + 1} out of range for order {array.ndim}")
        v = np.asarray(v, dtype=float)
        if v.shape != (array.shape[a],):
            raise TensorError(
                f"dimension mismatch on axis {a + 1}: expected {array.shape[a]}, got {v.shape}"
            )
        out = np.tensordot(out, v, axes=([a], [0]))
    return out


def contract_block(A: Tensor, axes: Sequence[int], vectors):
    """Contract the 0-based ``axes`` of ``A`` with ``vectors``.

    Returns a :class:`Tensor` over the remaining axes, or a float when every
    axis is contracted.
    """
    out = contract_array(A.array, axes, vectors)
    if out.ndim == 0:
        return float(out)
    return Tensor.from_array(out)
