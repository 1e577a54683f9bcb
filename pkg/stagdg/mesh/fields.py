"""
Nodal DG fields attached to the main mesh or to a dual mesh.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..basis import build_basis, mass_weights


@dataclass
class DofField:
    """
    One block of (N+1)^d nodal values per element of its attachment mesh.

    ``attachment`` is ``"main"`` or ``"dual-<k>"``. Blocks hold values at the
    tensor Gauss-Legendre points of each element and have shape
    ``(n_elements, N+1, ..., N+1)``.
    """

    name: str
    attachment: str
    degree: int
    blocks: np.ndarray

    def __post_init__(self) -> None:
        n = self.degree + 1
        if self.blocks.ndim < 2 or any(s != n for s in self.blocks.shape[1:]):
            raise ValueError(f"Field {self.name!r}: block shape {self.blocks.shape[1:]} does not match degree {self.degree}")

    @property
    def dim(self) -> int:
        return self.blocks.ndim - 1

    @property
    def n_elements(self) -> int:
        return self.blocks.shape[0]

    def copy(self, name: Optional[str] = None) -> "DofField":
        return DofField(name or self.name, self.attachment, self.degree, self.blocks.copy())

    def means(self) -> np.ndarray:
        """Element means (the blocks integrated with the unit-cube quadrature)."""
        return cell_means(self.blocks, self.degree)


def cell_means(blocks: np.ndarray, degree: int) -> np.ndarray:
    dim = blocks.ndim - 1
    w = mass_weights(build_basis(degree), dim)
    return np.tensordot(blocks, w, axes=dim)


def dual_attachment(axis: int) -> str:
    return f"dual-{axis}"


def broken_derivative(blocks: np.ndarray, widths: np.ndarray, degree: int, axis: int) -> np.ndarray:
    """
    Element-wise derivative along ``axis`` of nodal blocks (no inter-element coupling).

    ``widths`` has shape (n_elements, d) in physical units.
    """
    dim = blocks.ndim - 1
    diff = build_basis(degree).diff
    out = np.moveaxis(np.tensordot(blocks, diff, axes=([axis + 1], [1])), -1, axis + 1)
    return out / widths[:, axis].reshape((-1,) + (1,) * dim)


def element_nodes(lo: np.ndarray, widths: np.ndarray, degree: int) -> np.ndarray:
    """
    Physical coordinates of the tensor Gauss-Legendre nodes of boxes.

    Returns shape (n_elements, N+1, ..., N+1, d), matching the block layout.
    """
    nodes = build_basis(degree).nodes
    dim = lo.shape[1]
    grids = np.meshgrid(*([nodes] * dim), indexing="ij")
    ref = np.stack(grids, axis=-1)
    shape = (lo.shape[0],) + (1,) * dim + (dim,)
    return lo.reshape(shape) + widths.reshape(shape) * ref


def interpolate(fn: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, widths: np.ndarray, degree: int) -> np.ndarray:
    """Nodal interpolant of ``fn`` (points (m, d) -> values (m,)) on every box."""
    pts = element_nodes(lo, widths, degree)
    flat = pts.reshape(-1, pts.shape[-1])
    return np.asarray(fn(flat), dtype=float).reshape(pts.shape[:-1])
