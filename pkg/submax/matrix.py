from __future__ import annotations

import json
import math
import typing as t
from collections import abc
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import polars as pl

from submax import CapacityError, DomainError, NumericError
from submax.theory import b_n, normal_quantile_array

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# Capacity guard for dense storage, 16 GiB of float64 entries
MAX_ENTRIES = 1 << 31
GEN_CHUNK_ENTRIES = 1 << 22

# Top 52 bits of each draw, centered in its bucket, map exactly into [2^-53, 1 - 2^-53]
_U52_SCALE = 2.0**-52


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # Mixes in place; uint64 array arithmetic wraps modulo 2^64
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MIX1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MIX2)
    z ^= z >> np.uint64(31)
    return z


def golden_mix(index: int) -> int:  # noqa: D103
    return ((index + 1) * GOLDEN_GAMMA) & MASK64


@dataclass(slots=True)
class Rng64:
    """
    SplitMix64 generator.

    The `i`-th output (0-based) of a stream seeded with `s` is `mix(s + (i + 1) * gamma)`, so any
    window of the stream can be generated directly; see `gen_uniform_u64`.
    """

    state: int

    def __post_init__(self) -> None:
        self.state &= MASK64

    def next_u64(self) -> int:  # noqa: D102
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return _mix64(self.state)

    def derive(self, index: int) -> Rng64:
        """Build an independent child stream for the given index without advancing this one."""
        return Rng64(derive_seed(self.state, index))


def derive_seed(master: int, index: int) -> int:
    """
    Derive the seed of child stream `index` from `master`.

    The map is injective in `index` for a fixed master, so per-trial seeds never collide.
    """
    if index < 0:
        raise DomainError(f"Stream index must be non-negative, received: {index}")

    return Rng64((master & MASK64) ^ golden_mix(index)).next_u64()


def gen_uniform_u64(seed: int, start: int, count: int) -> np.ndarray:
    """Generate outputs `start` through `start + count - 1` of the stream seeded by `seed`."""
    states = np.arange(start + 1, start + 1 + count, dtype=np.uint64)
    states *= np.uint64(GOLDEN_GAMMA)
    states += np.uint64(seed & MASK64)
    return _mix64_array(states)


def u64_to_uniform(x: np.ndarray) -> np.ndarray:  # noqa: D103
    u = (x >> np.uint64(12)).astype(np.float64)
    u += 0.5
    u *= _U52_SCALE
    return u


def gaussian_stream(seed: int, start: int, count: int) -> np.ndarray:
    """Map a window of the uniform stream through the AS241 quantile."""
    return normal_quantile_array(u64_to_uniform(gen_uniform_u64(seed, start, count)))


def gaussian_stream_max(seed: int, count: int, chunk: int = GEN_CHUNK_ENTRIES) -> float:
    """
    Return the maximum of the first `count` normals of the stream seeded by `seed`.

    The uniform-to-normal map is monotone, so the maximum is taken over the raw draws and only the
    winner is transformed. The result equals `gaussian_stream(seed, 0, count).max()`.
    """
    if count < 1:
        raise DomainError(f"Need at least one draw, received: {count}")

    best = np.uint64(0)
    for start in range(0, count, chunk):
        block = gen_uniform_u64(seed, start, min(chunk, count - start))
        best = max(best, block.max())

    return float(normal_quantile_array(u64_to_uniform(np.array([best], dtype=np.uint64)))[0])


@dataclass(frozen=True, slots=True)
class GaussianMatrix:
    """
    Immutable dense `n x m` matrix of standard normal entries.

    `seed` is `None` for matrices loaded from external data; otherwise the entries are exactly
    reproducible from the regeneration descriptor `{"n", "m", "seed"}`.
    """

    n: int
    m: int
    entries: np.ndarray = field(repr=False)
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.entries.shape != (self.n, self.m):
            raise DomainError(
                f"Entry array shape {self.entries.shape} does not match ({self.n}, {self.m})"
            )
        if not np.isfinite(self.entries).all():
            raise DomainError("Matrix entries must all be finite.")

        self.entries.flags.writeable = False

    @classmethod
    def from_array(
        cls, values: abc.Sequence | np.ndarray, seed: int | None = None
    ) -> GaussianMatrix:
        """Wrap the provided 2D values, copying them into a read-only float64 array."""
        arr = np.array(values, dtype=np.float64, order="C")
        if arr.ndim != 2 or 0 in arr.shape:
            raise DomainError(f"Expected a non-empty 2D array, received shape: {arr.shape}")

        return cls(n=arr.shape[0], m=arr.shape[1], entries=arr, seed=seed)

    @property
    def flat(self) -> np.ndarray:
        """Row-major view of the entries."""
        return self.entries.reshape(-1)

    def to_descriptor(self) -> dict[str, int]:
        """Dump the regeneration descriptor, only available for generated matrices."""
        if self.seed is None:
            raise DomainError("Externally loaded matrices have no regeneration descriptor.")

        return {"n": self.n, "m": self.m, "seed": self.seed}

    @classmethod
    def from_descriptor(cls, descriptor: dict[str, int]) -> GaussianMatrix:  # noqa: D102
        return gen_gaussian(descriptor["n"], descriptor["m"], descriptor["seed"])

    @classmethod
    def from_descriptor_json(cls, in_json: str) -> GaussianMatrix:  # noqa: D102
        return cls.from_descriptor(json.loads(in_json))

    def to_csv(self, out_filepath: Path) -> None:
        """Dump the entries as headerless CSV, one matrix row per line."""
        df = pl.DataFrame(self.entries, schema=[f"c{j}" for j in range(self.m)], orient="row")
        df.write_csv(out_filepath, include_header=False, line_terminator="\n")

    @classmethod
    def from_csv(cls, in_filepath: Path) -> GaussianMatrix:
        """
        Load a matrix from a headerless CSV of decimal values.

        NOTE: Loaded matrices are not assumed to be Gaussian; they carry no seed.
        """
        df = pl.read_csv(in_filepath, has_header=False)
        df = df.select(pl.all().cast(pl.Float64))
        return cls.from_array(df.to_numpy())


def gen_gaussian(n: int, m: int, seed: int, chunk: int = GEN_CHUNK_ENTRIES) -> GaussianMatrix:
    """
    Generate an `n x m` matrix of i.i.d. standard normal entries.

    Entry `(i, j)` is the `(i * m + j)`-th draw of the SplitMix64 stream seeded by `seed`, mapped
    through the AS241 quantile. Generation is chunked by rows to bound temporary memory.
    """
    if n < 1 or m < 1:
        raise DomainError(f"Matrix dimensions must be positive, received: ({n}, {m})")
    if n * m > MAX_ENTRIES:
        raise CapacityError(f"Matrix of {n * m} entries exceeds the capacity of {MAX_ENTRIES}")

    seed &= MASK64
    entries = np.empty((n, m), dtype=np.float64)
    rows_per_chunk = max(1, chunk // m)
    for row in range(0, n, rows_per_chunk):
        stop = min(n, row + rows_per_chunk)
        uniform = u64_to_uniform(gen_uniform_u64(seed, row * m, (stop - row) * m))
        normal_quantile_array(uniform.reshape(stop - row, m), out=entries[row:stop])

    return GaussianMatrix(n=n, m=m, entries=entries, seed=seed)


@dataclass(frozen=True, slots=True)
class Selection:
    """Row and column index sets naming a submatrix, each strictly increasing."""

    rows: tuple[int, ...]
    cols: tuple[int, ...]

    def __post_init__(self) -> None:
        for name, idx in (("rows", self.rows), ("cols", self.cols)):
            if any(b <= a for a, b in zip(idx, idx[1:])):
                raise DomainError(f"Selection {name} must be strictly increasing, received: {idx}")
            if idx and idx[0] < 0:
                raise DomainError(f"Selection {name} must be non-negative, received: {idx}")

    @classmethod
    def of(cls, rows: abc.Iterable[int], cols: abc.Iterable[int]) -> Selection:
        """Build a selection from unordered indices."""
        return cls(
            rows=tuple(sorted(int(i) for i in rows)), cols=tuple(sorted(int(j) for j in cols))
        )

    @property
    def shape(self) -> tuple[int, int]:  # noqa: D102
        return len(self.rows), len(self.cols)

    @property
    def is_empty(self) -> bool:  # noqa: D102
        return not self.rows or not self.cols

    def validate_for(self, matrix: GaussianMatrix) -> None:
        """Raise if the selection is empty or indexes outside of the provided matrix."""
        if self.is_empty:
            raise DomainError("Selection must contain at least one row and one column.")
        if self.rows[-1] >= matrix.n or self.cols[-1] >= matrix.m:
            raise DomainError(
                f"Selection out of range for ({matrix.n}, {matrix.m}) matrix: "
                f"max row {self.rows[-1]}, max col {self.cols[-1]}"
            )

    def to_dict(self) -> dict[str, list[int]]:  # noqa: D102
        return {"rows": list(self.rows), "cols": list(self.cols)}

    @classmethod
    def from_dict(cls, tmp_dict: dict[str, list[int]]) -> Selection:  # noqa: D102
        return cls(rows=tuple(tmp_dict["rows"]), cols=tuple(tmp_dict["cols"]))


def submatrix(matrix: GaussianMatrix, selection: Selection) -> np.ndarray:
    """Return a copy of the selected submatrix."""
    selection.validate_for(matrix)
    return matrix.entries[np.ix_(selection.rows, selection.cols)]


def ave(matrix: GaussianMatrix, selection: Selection) -> float:
    """Calculate the average value of the selected submatrix."""
    return float(submatrix(matrix, selection).mean())


@dataclass(frozen=True, slots=True)
class AnovaParts:  # noqa: D101
    grand_mean: float
    row_effects: np.ndarray
    col_effects: np.ndarray
    residual: np.ndarray

    @property
    def k(self) -> int:  # noqa: D102
        return self.residual.shape[0]


def _check_square(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DomainError(f"Expected a non-empty square matrix, received shape: {arr.shape}")

    return arr


def anova(block: np.ndarray) -> AnovaParts:
    """
    Split a square matrix into its grand mean, row and column effects, and centered residual.

    `B = avg(B) 11' + Row(B) + Col(B) + ANOVA(B)`, where row `i` of `Row(B)` is `B_i. - B..`,
    column `j` of `Col(B)` is `B_.j - B..`, and `ANOVA(B)_ij = B_ij - B_i. - B_.j + B..`.
    """
    block = _check_square(block)
    grand = float(block.mean())
    row_means = block.mean(axis=1)
    col_means = block.mean(axis=0)
    residual = block - row_means[:, None] - col_means[None, :] + grand

    return AnovaParts(
        grand_mean=grand,
        row_effects=row_means - grand,
        col_effects=col_means - grand,
        residual=residual,
    )


def reconstruct(parts: AnovaParts) -> np.ndarray:
    """Invert `anova`, summing the four components back into the original matrix."""
    k = parts.residual.shape[0]
    shapes = (parts.residual.shape, parts.row_effects.shape, parts.col_effects.shape)
    if shapes != ((k, k), (k,), (k,)):
        raise DomainError(
            "Inconsistent ANOVA component dimensions: "
            f"residual {parts.residual.shape}, rows {parts.row_effects.shape}, "
            f"cols {parts.col_effects.shape}"
        )

    effects = parts.row_effects[:, None] + parts.col_effects[None, :]
    return parts.grand_mean + effects + parts.residual


class PsiVariant(t.NamedTuple):  # noqa: D101
    name: t.Literal["row", "col"]


ROW = PsiVariant("row")
COL = PsiVariant("col")


@dataclass(frozen=True, slots=True)
class PsiParts:
    """
    Extreme-value rescaling of a `k x k` matrix's ANOVA components.

    `psi1 = sqrt(2 log n) (sqrt(k) ave(A) - b_n)`. The row version scales `Row(A)` by
    `sqrt(2k log n)` and leaves `Col(A)`, `ANOVA(A)` unscaled; the column version scales `Col(A)`.
    """

    psi1: float
    psi2: np.ndarray
    psi3: np.ndarray
    psi4: np.ndarray
    variant: PsiVariant
    n_context: float


def _psi(block: np.ndarray, n: float, variant: PsiVariant) -> PsiParts:
    if n < 3:
        raise DomainError(f"Psi rescaling requires n >= 3, received: {n}")

    block = _check_square(block)
    k = block.shape[0]
    parts = anova(block)
    log_n = math.log(n)
    stretch = math.sqrt(2 * k * log_n)

    row_mat = np.broadcast_to(parts.row_effects[:, None], (k, k)).copy()
    col_mat = np.broadcast_to(parts.col_effects[None, :], (k, k)).copy()
    if variant is ROW:
        row_mat *= stretch
    else:
        col_mat *= stretch

    return PsiParts(
        psi1=math.sqrt(2 * log_n) * (math.sqrt(k) * parts.grand_mean - b_n(n)),
        psi2=row_mat,
        psi3=col_mat,
        psi4=parts.residual,
        variant=variant,
        n_context=n,
    )


def psi_row(block: np.ndarray, n: float) -> PsiParts:  # noqa: D103
    return _psi(block, n, ROW)


def psi_col(block: np.ndarray, n: float) -> PsiParts:  # noqa: D103
    return _psi(block, n, COL)


def psi_reconstruct(parts: PsiParts) -> np.ndarray:
    """Rebuild the original matrix from its Psi components."""
    k = parts.psi4.shape[0]
    log_n = math.log(parts.n_context)
    stretch = math.sqrt(2 * k * log_n)
    level = parts.psi1 / stretch + b_n(parts.n_context) / math.sqrt(k)

    if parts.variant is ROW:
        return level + parts.psi2 / stretch + parts.psi3 + parts.psi4
    else:
        return level + parts.psi2 + parts.psi3 / stretch + parts.psi4


def _dominates(line_sums: np.ndarray, chosen: tuple[int, ...]) -> bool:
    mask = np.zeros(line_sums.shape[0], dtype=bool)
    mask[list(chosen)] = True
    competitors = line_sums[~mask]
    if competitors.size == 0:
        # Max over an empty competitor set is -inf
        return True

    return bool(line_sums[mask].min() >= competitors.max())


def is_row_dominant(matrix: GaussianMatrix, selection: Selection) -> bool:
    """Check that each selected row's sum over the selected columns beats every other row's."""
    selection.validate_for(matrix)
    row_sums = matrix.entries[:, selection.cols].sum(axis=1)
    return _dominates(row_sums, selection.rows)


def is_column_dominant(matrix: GaussianMatrix, selection: Selection) -> bool:
    """Check that each selected column's sum over the selected rows beats every other column's."""
    selection.validate_for(matrix)
    col_sums = matrix.entries[selection.rows, :].sum(axis=0)
    return _dominates(col_sums, selection.cols)


def is_local_max(matrix: GaussianMatrix, selection: Selection) -> bool:  # noqa: D103
    return is_row_dominant(matrix, selection) and is_column_dominant(matrix, selection)


def overlap(s1: Selection, s2: Selection, k: int) -> tuple[float, float]:
    """Return the shared row and column fractions `(y1, y2)` of two `k x k` selections."""
    if s1.shape != (k, k) or s2.shape != (k, k):
        raise DomainError(f"Both selections must be {k} x {k}, received: {s1.shape}, {s2.shape}")

    y1 = len(set(s1.rows) & set(s2.rows)) / k
    y2 = len(set(s1.cols) & set(s2.cols)) / k
    return y1, y2


def overlap_cholesky(index_sets: abc.Sequence[abc.Collection[int]]) -> np.ndarray:
    """
    Factor the overlap covariance of a family of distinct `k`-subsets.

    `Sigma_ab = |I_a & I_b| / k` is the covariance of the normalized sums of a common Gaussian
    vector over each subset. The lower triangular factor `L` with `L L' = Sigma` has unit row norms
    and depends only on the pairwise intersection sizes.
    """
    if not index_sets:
        raise DomainError("At least one index set is required.")

    sets = [frozenset(s) for s in index_sets]
    k = len(sets[0])
    if k == 0 or any(len(s) != k for s in sets):
        sizes = [len(s) for s in sets]
        raise DomainError(f"All index sets must share a positive size, received: {sizes}")
    if len(set(sets)) != len(sets):
        raise NumericError("Duplicate index sets make the overlap covariance singular.")

    r = len(sets)
    sigma = np.empty((r, r), dtype=np.float64)
    for a in range(r):
        for b in range(a, r):
            sigma[a, b] = sigma[b, a] = len(sets[a] & sets[b]) / k

    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"Overlap covariance is not positive definite: {e}") from e
