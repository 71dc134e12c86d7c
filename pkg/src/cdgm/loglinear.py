"""Covariate-dependent hierarchical log-linear models on contingency tables.

A model is described by a level space (the number of levels of each of the
p classification criteria, level 0 being the baseline) and one generating
class per covariate slot.  Slot 0 is the covariate-free baseline structure;
slot h >= 1 is multiplied by the h-th covariate.  Writing x^0 = 1, cell
probabilities satisfy

    log(p(i | x) / p(0 | x)) = sum_h x^h <theta_h, f_{h,i}>,

where f_{h,i} is the binary design vector over the slot's interaction cells
(entry 1 exactly when the interaction cell sits "to the left of" i).

All types are immutable values after construction; every operation in this
module is a pure function of its inputs and safe to call concurrently on
shared instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, ValidationError

Cell = tuple[int, ...]

# Hard bound on the number of cells the exact (full-enumeration) path will
# materialize.  Larger models must go through the pseudo-likelihood path.
EXACT_CELL_LIMIT = 2**20


def support(cell: Sequence[int]) -> frozenset[int]:
    """Vertices of ``cell`` at a non-baseline level."""
    return frozenset(v for v, level in enumerate(cell) if level != 0)


def left_of(j: Sequence[int], i: Sequence[int]) -> bool:
    """True iff ``j`` agrees with ``i`` on the whole support of ``j``.

    Equivalently: S(j) is contained in S(i) and the two cells coincide on
    S(j).  The zero cell is to the left of every cell.
    """
    if len(j) != len(i):
        raise ValidationError(
            f"cells have different vertex counts: {len(j)} vs {len(i)}"
        )
    return all(jv == 0 or jv == iv for jv, iv in zip(j, i))


def cell_string(cell: Sequence[int]) -> str:
    """Compact display form of a cell: '101' when all levels fit one digit."""
    if all(0 <= v <= 9 for v in cell):
        return "".join(str(v) for v in cell)
    return "(" + ",".join(str(v) for v in cell) + ")"


@dataclass(frozen=True)
class LevelSpace:
    """Per-vertex level counts; level 0 of each vertex is its baseline."""

    levels: tuple[int, ...]

    def __post_init__(self) -> None:
        levels = tuple(int(k) for k in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 1:
            raise ValidationError("a model needs at least one vertex")
        if any(k < 2 for k in levels):
            raise ValidationError(f"every vertex needs >= 2 levels, got {levels}")

    @property
    def vertex_count(self) -> int:
        return len(self.levels)

    @property
    def cell_count(self) -> int:
        return math.prod(self.levels)

    def validate_cell(self, cell: Sequence[int]) -> Cell:
        cell = tuple(int(v) for v in cell)
        if len(cell) != self.vertex_count:
            raise ValidationError(
                f"cell {cell} has {len(cell)} entries, expected {self.vertex_count}"
            )
        for v, (value, k) in enumerate(zip(cell, self.levels)):
            if not 0 <= value < k:
                raise ValidationError(
                    f"cell {cell}: level {value} at vertex {v} out of range [0, {k})"
                )
        return cell

    def check_exact_capacity(self) -> None:
        if self.cell_count > EXACT_CELL_LIMIT:
            raise CapacityError(
                f"{self.cell_count} cells exceed the exact-path limit "
                f"of {EXACT_CELL_LIMIT}"
            )

    def cells(self) -> np.ndarray:
        """All cells as an (|I|, p) integer array, zero cell first.

        Cells are enumerated in lexicographic order of their tuples (the last
        vertex varies fastest), which is the canonical cell order everywhere
        in this package.
        """
        self.check_exact_capacity()
        grid = np.indices(self.levels).reshape(self.vertex_count, -1).T
        return np.ascontiguousarray(grid)

    def cell_index(self, cell: Sequence[int]) -> int:
        """Position of ``cell`` in the canonical enumeration."""
        cell = self.validate_cell(cell)
        idx = 0
        for value, k in zip(cell, self.levels):
            idx = idx * k + value
        return idx

    def cell_indices(self, cells: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`cell_index` for an (n, p) array of valid cells."""
        idx = np.zeros(len(cells), dtype=np.int64)
        for v, k in enumerate(self.levels):
            idx = idx * k + cells[:, v]
        return idx


@dataclass(frozen=True)
class GeneratingClass:
    """A collection of interaction sets closed under nonempty subsets.

    The constructor rejects collections that are not hierarchically closed;
    use :meth:`from_maximal` to close a collection of maximal sets.
    """

    sets: frozenset[frozenset[int]]

    def __post_init__(self) -> None:
        sets = frozenset(frozenset(int(v) for v in d) for d in self.sets)
        object.__setattr__(self, "sets", sets)
        for d in sets:
            if not d:
                raise ValidationError("generating classes contain nonempty sets only")
            if any(v < 0 for v in d):
                raise ValidationError(f"negative vertex index in {sorted(d)}")
        missing = self._closure(sets) - sets
        if missing:
            example = sorted(next(iter(missing)))
            raise ValidationError(
                f"collection is not hierarchically closed: missing subset {example}"
            )

    @staticmethod
    def _closure(sets: Iterable[frozenset[int]]) -> frozenset[frozenset[int]]:
        closed: set[frozenset[int]] = set()
        for d in sets:
            members = sorted(d)
            for r in range(1, len(members) + 1):
                closed.update(frozenset(c) for c in itertools.combinations(members, r))
        return frozenset(closed)

    @classmethod
    def from_maximal(cls, maximal: Iterable[Iterable[int]]) -> "GeneratingClass":
        """Build the hierarchical closure of a collection of (maximal) sets."""
        seed = [frozenset(int(v) for v in d) for d in maximal]
        if any(not d for d in seed):
            raise ValidationError("generating classes contain nonempty sets only")
        return cls(cls._closure(seed))

    @property
    def max_vertex(self) -> int:
        return max((max(d) for d in self.sets), default=-1)

    def __contains__(self, item: Iterable[int]) -> bool:
        return frozenset(item) in self.sets


@dataclass(frozen=True)
class InteractionIndexSet:
    """The ordered interaction cells of one slot.

    Cells are ordered by interaction order |S(j)|, then by the sorted support
    vertices, then by the level pattern, so parameter vectors line up
    reproducibly across runs and serializations.
    """

    cells: tuple[Cell, ...]

    @classmethod
    def build(cls, levels: LevelSpace, gclass: GeneratingClass) -> "InteractionIndexSet":
        if gclass.max_vertex >= levels.vertex_count:
            raise ValidationError(
                f"generating class references vertex {gclass.max_vertex}, "
                f"but the model has {levels.vertex_count} vertices"
            )
        items: list[Cell] = []
        for d in gclass.sets:
            vs = sorted(d)
            for combo in itertools.product(*(range(1, levels.levels[v]) for v in vs)):
                cell = [0] * levels.vertex_count
                for v, value in zip(vs, combo):
                    cell[v] = value
                items.append(tuple(cell))
        items.sort(key=lambda c: (len(support(c)), tuple(sorted(support(c))), c))
        return cls(tuple(items))

    def __len__(self) -> int:
        return len(self.cells)

    def position(self, cell: Sequence[int]) -> int:
        cell = tuple(int(v) for v in cell)
        try:
            return self.cells.index(cell)
        except ValueError:
            raise ValidationError(
                f"cell {cell_string(cell)} is not an interaction cell of this slot"
            ) from None


@dataclass(frozen=True)
class ModelSpec:
    """Level space plus one generating class (and index set) per slot."""

    levels: LevelSpace
    classes: tuple[GeneratingClass, ...]
    index_sets: tuple[InteractionIndexSet, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        classes = tuple(self.classes)
        object.__setattr__(self, "classes", classes)
        if not classes:
            raise ValidationError("a model needs at least the baseline slot")
        index_sets = tuple(
            InteractionIndexSet.build(self.levels, g) for g in classes
        )
        object.__setattr__(self, "index_sets", index_sets)
        object.__setattr__(self, "_design_cache", {})

    @classmethod
    def from_maximal_sets(
        cls,
        levels: Sequence[int] | LevelSpace,
        slot_sets: Sequence[Iterable[Iterable[int]]],
        auto_close: bool = True,
    ) -> "ModelSpec":
        """Build a spec from per-slot collections of vertex-index sets.

        With ``auto_close`` the collections may list only maximal sets and
        the hierarchical closure is computed; otherwise a non-closed
        collection is rejected.
        """
        if not isinstance(levels, LevelSpace):
            levels = LevelSpace(tuple(levels))
        classes = []
        for sets in slot_sets:
            sets = list(sets)
            if auto_close:
                classes.append(GeneratingClass.from_maximal(sets))
            else:
                classes.append(GeneratingClass(frozenset(frozenset(d) for d in sets)))
        return cls(levels, tuple(classes))

    @property
    def covariate_count(self) -> int:
        return len(self.classes) - 1

    @property
    def block_dims(self) -> tuple[int, ...]:
        return tuple(len(js) for js in self.index_sets)

    @property
    def total_dim(self) -> int:
        return sum(self.block_dims)

    def slot_cells(self, h: int) -> tuple[Cell, ...]:
        self._check_slot(h)
        return self.index_sets[h].cells

    def _check_slot(self, h: int) -> None:
        if not 0 <= h <= self.covariate_count:
            raise ValidationError(
                f"slot {h} out of range [0, {self.covariate_count}]"
            )

    def design_matrix(self, h: int) -> np.ndarray:
        """The (|I|, |J_h|) binary design matrix of slot ``h``.

        Row i holds the design vector f_{h,i}.  Built lazily and cached;
        rebuilding concurrently is harmless because the result is
        deterministic.
        """
        self._check_slot(h)
        cache: dict[int, np.ndarray] = self.__dict__["_design_cache"]
        got = cache.get(h)
        if got is not None:
            return got
        cells = self.levels.cells()
        js = self.index_sets[h].cells
        mat = np.zeros((len(cells), len(js)), dtype=np.float64)
        for pos, j in enumerate(js):
            mask = np.ones(len(cells), dtype=bool)
            for v in support(j):
                mask &= cells[:, v] == j[v]
            mat[mask, pos] = 1.0
        mat.setflags(write=False)
        cache[h] = mat
        return mat

    def parameter_labels(self) -> tuple[str, ...]:
        """Flat labels 'h{slot}:{cell}' matching the canonical ordering."""
        labels = []
        for h, js in enumerate(self.index_sets):
            labels.extend(f"h{h}:{cell_string(j)}" for j in js.cells)
        return tuple(labels)


@dataclass(frozen=True)
class ParameterSet:
    """Per-slot parameter blocks aligned with the canonical cell ordering."""

    blocks: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        blocks = []
        for b in self.blocks:
            arr = np.array(b, dtype=np.float64).reshape(-1)
            if not np.all(np.isfinite(arr)):
                raise ValidationError("parameter blocks must be finite")
            arr.setflags(write=False)
            blocks.append(arr)
        object.__setattr__(self, "blocks", tuple(blocks))

    @classmethod
    def zeros(cls, spec: ModelSpec) -> "ParameterSet":
        return cls(tuple(np.zeros(d) for d in spec.block_dims))

    @classmethod
    def from_flat(cls, spec: ModelSpec, flat: Sequence[float]) -> "ParameterSet":
        flat = np.asarray(flat, dtype=np.float64).reshape(-1)
        if flat.shape[0] != spec.total_dim:
            raise ValidationError(
                f"flat vector has length {flat.shape[0]}, expected {spec.total_dim}"
            )
        blocks = []
        start = 0
        for d in spec.block_dims:
            blocks.append(flat[start : start + d].copy())
            start += d
        return cls(tuple(blocks))

    def flat(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate(self.blocks)

    @property
    def dimension(self) -> int:
        return sum(b.shape[0] for b in self.blocks)

    def validate_for(self, spec: ModelSpec) -> None:
        dims = tuple(b.shape[0] for b in self.blocks)
        if dims != spec.block_dims:
            raise ValidationError(
                f"parameter block dims {dims} do not match the model's {spec.block_dims}"
            )


@dataclass(frozen=True)
class ObservationSet:
    """n rows of (cell, covariate vector); the implicit x^0 = 1 is not stored."""

    cells: np.ndarray
    covariates: np.ndarray

    def __post_init__(self) -> None:
        cells = np.asarray(self.cells, dtype=np.int64)
        if cells.ndim != 2:
            raise ValidationError("cells must be an (n, p) array")
        covs = np.asarray(self.covariates, dtype=np.float64)
        if covs.ndim != 2 or covs.shape[0] != cells.shape[0]:
            raise ValidationError(
                f"covariates shape {covs.shape} does not match {cells.shape[0]} rows"
            )
        if covs.size and not np.all(np.isfinite(covs)):
            raise ValidationError("covariates must be finite")
        if cells.size and cells.min() < 0:
            raise ValidationError("cell levels must be nonnegative")
        cells = cells.copy()
        covs = covs.copy()
        cells.setflags(write=False)
        covs.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "covariates", covs)

    @classmethod
    def create(
        cls,
        cells: Sequence[Sequence[int]],
        covariates: Sequence[Sequence[float]],
        levels: LevelSpace | None = None,
    ) -> "ObservationSet":
        cells_arr = np.asarray(cells, dtype=np.int64)
        if cells_arr.ndim == 1:
            cells_arr = cells_arr.reshape(len(cells_arr), 1)
        covs_arr = np.asarray(covariates, dtype=np.float64)
        if covs_arr.ndim == 1:
            covs_arr = covs_arr.reshape(-1, 1)
        if covs_arr.size == 0:
            covs_arr = covs_arr.reshape(cells_arr.shape[0], -1)
        data = cls(cells_arr, covs_arr)
        if levels is not None:
            data.validate_levels(levels)
        return data

    @property
    def n(self) -> int:
        return self.cells.shape[0]

    @property
    def vertex_count(self) -> int:
        return self.cells.shape[1]

    @property
    def covariate_count(self) -> int:
        return self.covariates.shape[1]

    def validate_levels(self, levels: LevelSpace) -> None:
        if self.vertex_count != levels.vertex_count:
            raise ValidationError(
                f"data has {self.vertex_count} response columns, "
                f"model has {levels.vertex_count} vertices"
            )
        bound = np.asarray(levels.levels, dtype=np.int64)
        if self.n and np.any(self.cells >= bound):
            row, col = np.argwhere(self.cells >= bound)[0]
            raise ValidationError(
                f"row {row + 1}, vertex {col}: level {self.cells[row, col]} "
                f"out of range [0, {bound[col]})"
            )

    def to_contingency(self) -> list[tuple[Cell, tuple[float, ...], int]]:
        """Collapse to (cell, covariate value, multiplicity) triples.

        The triples are sorted, so the representation is canonical; expanding
        it back with :meth:`from_contingency` preserves sufficient statistics
        exactly (row order is not preserved).
        """
        counter: dict[tuple[Cell, tuple[float, ...]], int] = {}
        for row in range(self.n):
            key = (tuple(self.cells[row]), tuple(self.covariates[row]))
            counter[key] = counter.get(key, 0) + 1
        return [
            (cell, cov, count) for (cell, cov), count in sorted(counter.items())
        ]

    @classmethod
    def from_contingency(
        cls, triples: Iterable[tuple[Sequence[int], Sequence[float], int]]
    ) -> "ObservationSet":
        cells: list[Sequence[int]] = []
        covs: list[Sequence[float]] = []
        for cell, cov, count in triples:
            if count < 0:
                raise ValidationError(f"negative multiplicity for cell {tuple(cell)}")
            cells.extend([cell] * count)
            covs.extend([cov] * count)
        if not cells:
            raise ValidationError("cannot rebuild an observation set without any rows")
        return cls.create(cells, covs)


def _covariate_powers(covariates: np.ndarray) -> np.ndarray:
    """The (n, H+1) matrix of x_m^h values with the implicit x^0 = 1 column."""
    n = covariates.shape[0]
    return np.hstack([np.ones((n, 1)), covariates])


def _unique_covariate_rows(covariates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique covariate rows and their multiplicities (order is canonical)."""
    if covariates.shape[0] == 0:
        return covariates.reshape(0, covariates.shape[1]), np.zeros(0, dtype=np.int64)
    if covariates.shape[1] == 0:
        return covariates[:1], np.array([covariates.shape[0]], dtype=np.int64)
    uniq, counts = np.unique(covariates, axis=0, return_counts=True)
    return uniq, counts


def _check_conformance(
    spec: ModelSpec, theta: ParameterSet | None = None, x: Sequence[float] | None = None
) -> np.ndarray | None:
    if theta is not None:
        theta.validate_for(spec)
    if x is None:
        return None
    x_arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if x_arr.shape[0] != spec.covariate_count:
        raise ValidationError(
            f"covariate vector has length {x_arr.shape[0]}, "
            f"expected {spec.covariate_count}"
        )
    if x_arr.size and not np.all(np.isfinite(x_arr)):
        raise ValidationError("covariates must be finite")
    return x_arr


def design_vector(spec: ModelSpec, h: int, cell: Sequence[int]) -> np.ndarray:
    """Binary vector over J_h with ones exactly at the cells left of ``cell``."""
    spec._check_slot(h)
    cell = spec.levels.validate_cell(cell)
    js = spec.slot_cells(h)
    return np.array([1.0 if left_of(j, cell) else 0.0 for j in js])


def cell_log_weights(
    spec: ModelSpec, theta: ParameterSet, x: Sequence[float]
) -> np.ndarray:
    """Unnormalized log probabilities z_i over all cells, canonical order.

    z at the zero cell is exactly 0 for every (theta, x).
    """
    x_arr = _check_conformance(spec, theta, x)
    spec.levels.check_exact_capacity()
    z = np.zeros(spec.levels.cell_count)
    powers = np.concatenate([[1.0], x_arr])
    for h, block in enumerate(theta.blocks):
        if block.shape[0]:
            z += powers[h] * (spec.design_matrix(h) @ block)
    return z


def cell_probabilities(
    spec: ModelSpec, theta: ParameterSet, x: Sequence[float]
) -> np.ndarray:
    """p(i | x) over all cells; computed with max-subtraction, sums to 1."""
    z = cell_log_weights(spec, theta, x)
    w = np.exp(z - z.max())
    return w / w.sum()


def sufficient_statistics(spec: ModelSpec, data: ObservationSet) -> list[np.ndarray]:
    """Per-slot sufficient statistics t_h = sum_m x_m^h f_{h, cell(m)}.

    Summation runs over the unique (cell, covariate) combinations with their
    integer multiplicities in a canonical order, so the result is bit-stable
    under row permutation and scales exactly under dataset duplication.
    """
    data.validate_levels(spec.levels)
    if data.covariate_count != spec.covariate_count:
        raise ValidationError(
            f"data has {data.covariate_count} covariates, "
            f"model expects {spec.covariate_count}"
        )
    idx = spec.levels.cell_indices(data.cells)
    if data.n:
        combined = np.column_stack([idx.astype(np.float64), data.covariates])
        uniq, counts = np.unique(combined, axis=0, return_counts=True)
        uniq_idx = uniq[:, 0].astype(np.int64)
        uniq_powers = _covariate_powers(uniq[:, 1:])
    else:
        uniq_idx = np.zeros(0, dtype=np.int64)
        counts = np.zeros(0)
        uniq_powers = np.zeros((0, spec.covariate_count + 1))
    stats = []
    for h in range(spec.covariate_count + 1):
        dim = spec.block_dims[h]
        if dim == 0 or data.n == 0:
            stats.append(np.zeros(dim))
            continue
        rows = spec.design_matrix(h)[uniq_idx]
        stats.append(rows.T @ (counts * uniq_powers[:, h]))
    return stats


def log_likelihood(spec: ModelSpec, theta: ParameterSet, data: ObservationSet) -> float:
    """Joint log-likelihood: sum_h <theta_h, t_h> minus the per-row normalizers."""
    stats = sufficient_statistics(spec, data)
    _check_conformance(spec, theta)
    linear = sum(float(b @ t) for b, t in zip(theta.blocks, stats))
    uniq, counts = _unique_covariate_rows(data.covariates)
    total = 0.0
    for row, count in zip(uniq, counts):
        z = cell_log_weights(spec, theta, row)
        m = z.max()
        total += count * (m + math.log(np.exp(z - m).sum()))
    return linear - total
