"""DPP distribution layer: plain, fixed-size, and partition-constrained
models over an ensemble matrix, with exact counting, marginals, and
conditioning.

count(model, T) returns the unnormalized mass of {S : T subseteq S}, so
ratios of counts are conditional probabilities directly.  Conditioning uses
the Schur complement of the ensemble matrix and decrements constraints;
blocks whose quota reaches zero drop out of the residual ground set.
"""
from __future__ import annotations

import functools
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidModel,
    ProbabilityViolation,
    SingularBlock,
    ZeroConditional,
    ZeroMass,
    ZeroMassCondition,
)
from .numerics import (
    CLAMP_TOL,
    INTERP_TOL,
    KIND_SYMMETRIC,
    SINGULAR_TOL,
    EnsembleMatrix,
    MarginalKernel,
    char_poly_coeffs,
    det,
    kernel_from_ensemble,
    schur_complement,
)

R_MAX = 4  # partition constraints kept O(1)

_GRID_CHUNK = 4096


@dataclass(frozen=True)
class Cardinality:
    """Condition the sample size to exactly k."""

    k: int


@dataclass(frozen=True)
class Partition:
    """Exact per-block element counts: |S ∩ blocks[i]| = quotas[i]."""

    blocks: tuple[tuple[int, ...], ...]
    quotas: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "blocks", tuple(tuple(int(v) for v in b) for b in self.blocks)
        )
        object.__setattr__(self, "quotas", tuple(int(q) for q in self.quotas))

    @property
    def r(self) -> int:
        return len(self.blocks)

    def block_of(self, n: int) -> np.ndarray:
        """Element -> block index lookup; validates the blocks partition [n]."""
        owner = np.full(n, -1, dtype=np.int64)
        for b, members in enumerate(self.blocks):
            for v in members:
                if not 0 <= v < n:
                    raise InvalidModel(f"block element {v} out of range for n={n}")
                if owner[v] != -1:
                    raise InvalidModel(f"element {v} appears in two blocks")
                owner[v] = b
        if n and (owner == -1).any():
            missing = int(np.flatnonzero(owner == -1)[0])
            raise InvalidModel(f"element {missing} belongs to no block")
        return owner


Constraint = Cardinality | Partition | None


def _validate_constraint(constraint: Constraint, n: int) -> None:
    if constraint is None:
        return
    if isinstance(constraint, Cardinality):
        if not 0 <= constraint.k <= n:
            raise InvalidModel(f"cardinality {constraint.k} outside 0..{n}")
        return
    if isinstance(constraint, Partition):
        if constraint.r > R_MAX:
            raise InvalidModel(f"at most {R_MAX} partition blocks supported")
        if len(constraint.quotas) != constraint.r:
            raise InvalidModel("need one quota per block")
        constraint.block_of(n)
        for members, quota in zip(constraint.blocks, constraint.quotas):
            if not 0 <= quota <= len(members):
                raise InvalidModel(
                    f"quota {quota} impossible for a block of {len(members)}"
                )
        return
    raise InvalidModel(f"unknown constraint {constraint!r}")


@dataclass(frozen=True)
class DppModel:
    """Immutable model; the marginal kernel and the partition function are
    computed once at construction (no lazy mutation afterwards)."""

    ensemble: EnsembleMatrix
    constraint: Constraint = None
    kernel: MarginalKernel = field(init=False, compare=False, repr=False)
    z: float = field(init=False, compare=False)

    def __post_init__(self):
        _validate_constraint(self.constraint, self.ensemble.n)
        object.__setattr__(self, "kernel", kernel_from_ensemble(self.ensemble))
        object.__setattr__(self, "z", _total_mass(self))
        if self.z <= 0.0:
            raise ZeroMass("model puts no mass on any admissible set")

    @property
    def n(self) -> int:
        return self.ensemble.n


def partition_function(model: DppModel) -> float:
    return model.z


def _normalize_subset(t, n: int) -> tuple[int, ...]:
    t = tuple(sorted(int(i) for i in t))
    if len(set(t)) != len(t):
        raise InvalidModel(f"repeated elements in {t}")
    if t and (t[0] < 0 or t[-1] >= n):
        raise InvalidModel(f"subset {t} out of range for n={n}")
    return t


@functools.lru_cache(maxsize=512)
def _charpoly_from_bytes(data: bytes, n: int, kind: str) -> tuple[float, ...]:
    arr = np.frombuffer(data, dtype=np.float64).reshape(n, n)
    ens = EnsembleMatrix._trusted(arr.copy(), kind)
    return tuple(char_poly_coeffs(ens))


def _charpoly_of(ensemble: EnsembleMatrix) -> np.ndarray:
    """char_poly_coeffs memoized on the matrix bytes.

    Samplers hit the same conditioned matrices over and over (every proposal
    of a batch, every trial of an acceptance measurement); the cache turns
    those repeats into lookups.
    """
    return np.array(
        _charpoly_from_bytes(
            ensemble.entries.tobytes(), ensemble.n, ensemble.kind
        )
    )


def _partition_residual_count(
    entries: np.ndarray, owner: np.ndarray, quotas: tuple[int, ...]
) -> float:
    """Sum of det(M_S) over subsets S meeting every block quota exactly.

    Coefficient of prod_i z_i^{quota_i} in det(I + M diag(z_{owner})),
    recovered from evaluations on the integer grid prod_i {0..d_i} by
    per-variable divided differences.
    """
    r = len(quotas)
    m = entries.shape[0]
    degrees = [int((owner == b).sum()) for b in range(r)]
    if any(not 0 <= q <= d for q, d in zip(quotas, degrees)):
        return 0.0
    if m == 0:
        return 1.0
    shape = tuple(d + 1 for d in degrees)
    grids = np.meshgrid(
        *[np.arange(d + 1, dtype=np.float64) for d in degrees], indexing="ij"
    )
    points = np.stack([g.reshape(-1) for g in grids], axis=1)  # (G, r)
    diags = points[:, owner]  # (G, m)
    eye = np.eye(m)
    values = np.empty(points.shape[0])
    for lo in range(0, points.shape[0], _GRID_CHUNK):
        hi = min(lo + _GRID_CHUNK, points.shape[0])
        mats = eye[None, :, :] + entries[None, :, :] * diags[lo:hi, None, :]
        values[lo:hi] = np.linalg.det(mats)
    tensor = values.reshape(shape)

    coeffs = tensor
    for axis, d in enumerate(degrees):
        nodes = np.arange(d + 1, dtype=np.float64)
        work = np.moveaxis(coeffs, axis, 0)
        flat = work.reshape(d + 1, -1).copy()
        for j in range(1, d + 1):
            flat[j:] = (flat[j:] - flat[j - 1:-1]) / (
                nodes[j:, None] - nodes[: d + 1 - j, None]
            )
        mono = np.zeros_like(flat)
        basis = np.zeros(d + 1)
        basis[0] = 1.0
        for j in range(d + 1):
            mono += basis[:, None] * flat[j][None, :]
            if j < d:
                shifted = np.empty(d + 1)
                shifted[0] = 0.0
                shifted[1:] = basis[:-1]
                basis = shifted - nodes[j] * basis
        coeffs = np.moveaxis(mono.reshape(work.shape), 0, axis)

    recon = coeffs
    for axis, d in enumerate(degrees):
        nodes = np.arange(d + 1, dtype=np.float64)
        vand = nodes[:, None] ** np.arange(d + 1)[None, :]
        work = np.moveaxis(recon, axis, 0)
        work = vand @ work.reshape(d + 1, -1)
        recon = np.moveaxis(work.reshape((d + 1,) + recon.shape[:axis] + recon.shape[axis + 1:]), 0, axis)
    scale = max(1.0, float(np.abs(values).max()))
    if np.abs(recon.reshape(-1) - values).max() > INTERP_TOL * scale:
        raise ProbabilityViolation("block-count coefficient recovery lost accuracy")
    return float(coeffs[tuple(quotas)])


def _residual_count(model: DppModel, t: tuple[int, ...]) -> float:
    """count with the det(L_TT) factor, no feasibility shortcuts."""
    arr = model.ensemble.entries
    if t:
        base = det(arr[np.ix_(t, t)])
        if abs(base) <= SINGULAR_TOL:
            return 0.0
        cond = schur_complement(model.ensemble, t)
    else:
        base = 1.0
        cond = model.ensemble
    if model.constraint is None:
        return base * det(np.eye(cond.n) + cond.entries)
    if isinstance(model.constraint, Cardinality):
        j = model.constraint.k - len(t)
        if j < 0 or j > cond.n:
            return 0.0
        e = _charpoly_of(cond)
        return base * float(e[j])
    part = model.constraint
    owner_full = part.block_of(model.n)
    rest = np.array([i for i in range(model.n) if i not in set(t)], dtype=np.int64)
    used = np.bincount(owner_full[np.array(t, dtype=np.int64)], minlength=part.r) if t else np.zeros(part.r, dtype=np.int64)
    residual_quotas = tuple(int(q) - int(u) for q, u in zip(part.quotas, used))
    if any(q < 0 for q in residual_quotas):
        return 0.0
    return base * _partition_residual_count(
        cond.entries, owner_full[rest], residual_quotas
    )


def _total_mass(model: DppModel) -> float:
    try:
        return _residual_count(model, ())
    except SingularBlock:  # pragma: no cover - empty T has no block
        return 0.0


def count(model: DppModel, t=()) -> float:
    """Unnormalized mass of {S : T ⊆ S}; 0 when conditioning is impossible."""
    t = _normalize_subset(t, model.n)
    try:
        value = _residual_count(model, t)
    except SingularBlock:
        return 0.0
    if value < 0.0:
        if value >= -CLAMP_TOL * max(1.0, model.z):
            return 0.0
        raise ProbabilityViolation(f"negative mass {value!r} for T={t}")
    return value


def marginal(model: DppModel, i: int, given=()) -> float:
    """P[i ∈ S | given ⊆ S], a ratio of counts clamped into [0, 1]."""
    given = _normalize_subset(given, model.n)
    i = int(i)
    if i in given:
        raise ZeroConditional(f"element {i} is already conditioned on")
    denom = count(model, given)
    if denom <= 0.0:
        raise ZeroConditional(f"conditioning event {given} has zero mass")
    ratio = count(model, given + (i,)) / denom
    if ratio < 0.0:
        if ratio < -CLAMP_TOL:
            raise ProbabilityViolation(f"marginal {ratio!r} below zero")
        return 0.0
    if ratio > 1.0:
        if ratio > 1.0 + CLAMP_TOL:
            raise ProbabilityViolation(f"marginal {ratio!r} above one")
        return 1.0
    return ratio


@dataclass(frozen=True)
class ConditionedState:
    """A model conditioned on containing `chosen`, presented as a fresh DPP
    on the remaining ground set.

    index_map takes residual indices back to the original ground set.
    """

    chosen: tuple[int, ...]
    residual: DppModel
    index_map: tuple[int, ...]

    def extend(self, i_res: int) -> "ConditionedState":
        """Condition further on residual element i_res (a residual index)."""
        return self.extend_many((int(i_res),))

    def extend_many(self, residual_indices) -> "ConditionedState":
        """Condition on several residual elements with one Schur step."""
        picked = tuple(sorted(int(i) for i in residual_indices))
        sub = condition(self.residual, picked)
        return ConditionedState(
            chosen=self.chosen + tuple(self.index_map[i] for i in picked),
            residual=sub.residual,
            index_map=tuple(self.index_map[j] for j in sub.index_map),
        )


def initial_state(model: DppModel) -> ConditionedState:
    return ConditionedState(
        chosen=(), residual=model, index_map=tuple(range(model.n))
    )


_CONDITION_CACHE: dict = {}


def condition(model: DppModel, t) -> ConditionedState:
    """Condition on T ⊆ S; raises ZeroMassCondition when that event has no
    mass (unlike count, which just reports 0)."""
    t = _normalize_subset(t, model.n)
    if not t:
        return initial_state(model)
    key = (
        model.ensemble.entries.tobytes(),
        model.ensemble.kind,
        model.constraint,
        t,
    )
    hit = _CONDITION_CACHE.get(key)
    if hit is None:
        hit = _condition_parts(model, t)
        if len(_CONDITION_CACHE) >= 4096:
            _CONDITION_CACHE.clear()
        _CONDITION_CACHE[key] = hit
    residual, index_map = hit
    return ConditionedState(chosen=t, residual=residual, index_map=index_map)


def _condition_parts(model: DppModel, t: tuple[int, ...]):
    if count(model, t) <= 0.0:
        raise ZeroMassCondition(f"conditioning set {t} has zero mass")
    cond = schur_complement(model.ensemble, t)
    rest = [i for i in range(model.n) if i not in set(t)]
    constraint = model.constraint
    if constraint is None:
        new_constraint: Constraint = None
        keep = list(range(len(rest)))
    elif isinstance(constraint, Cardinality):
        new_constraint = Cardinality(constraint.k - len(t))
        keep = list(range(len(rest)))
    else:
        owner = constraint.block_of(model.n)
        used = np.bincount(owner[np.array(t)], minlength=constraint.r)
        new_quotas = [int(q) - int(u) for q, u in zip(constraint.quotas, used)]
        # Blocks with exhausted quotas leave the residual ground set.
        live = [b for b in range(constraint.r) if new_quotas[b] > 0]
        keep = [j for j, i in enumerate(rest) if owner[i] in live]
        kept_orig = [rest[j] for j in keep]
        pos = {orig: j for j, orig in enumerate(kept_orig)}
        new_blocks = tuple(
            tuple(pos[v] for v in constraint.blocks[b] if v in pos) for b in live
        )
        new_constraint = Partition(
            blocks=new_blocks, quotas=tuple(new_quotas[b] for b in live)
        )
    sub_entries = cond.entries[np.ix_(keep, keep)]
    residual = DppModel(
        ensemble=EnsembleMatrix._trusted(sub_entries, cond.kind),
        constraint=new_constraint,
    )
    return residual, tuple(rest[j] for j in keep)


def size_distribution(model: DppModel) -> np.ndarray:
    """P[|S| = j] for plain models: minor sums over det(I + L)."""
    if model.constraint is not None:
        raise InvalidModel("size distribution applies to unconstrained models")
    e = char_poly_coeffs(model.ensemble)
    probs = e / model.z
    probs = np.where((probs < 0) & (probs >= -CLAMP_TOL), 0.0, probs)
    if probs.min() < 0.0:
        raise ProbabilityViolation("negative size probability")
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ProbabilityViolation(f"size distribution sums to {probs.sum()!r}")
    return probs


def _cardinality_marginal_vector_sym(entries: np.ndarray, j: int) -> np.ndarray:
    """All P[i ∈ S] for a symmetric fixed-size model in one eigendecomposition.

    count_j({i}) = Σ_t λ_t e_{j-1}(λ without t) v_{t,i}², with the leave-one-out
    elementary symmetric values built from prefix/suffix tables.
    """
    m = entries.shape[0]
    lam, vec = np.linalg.eigh(entries)
    lam = np.clip(lam, 0.0, None)
    # Marginals are scale-invariant in L at fixed size; normalizing keeps the
    # e-poly tables within float range even for large spectra.
    top = float(lam.max())
    if top > 0.0:
        lam = lam / top
    # prefix[t] = e-poly coefficients (degrees 0..j-1) of lam[:t]
    prefix = np.zeros((m + 1, j))
    suffix = np.zeros((m + 1, j))
    prefix[0, 0] = 1.0
    for t in range(m):
        row = prefix[t].copy()
        row[1:] += lam[t] * prefix[t, :-1]
        prefix[t + 1] = row
    suffix[m, 0] = 1.0
    for t in range(m - 1, -1, -1):
        row = suffix[t + 1].copy()
        row[1:] += lam[t] * suffix[t + 1, :-1]
        suffix[t] = row
    # e_{j-1} of all eigenvalues but t: convolve prefix[t] with suffix[t+1]
    weights = lam * np.einsum("ta,ta->t", prefix[:m, :j], suffix[1:, j - 1::-1])
    counts = (vec**2) @ weights
    e = np.zeros(m + 1)
    e[0] = 1.0
    for x in lam:
        e[1:] = e[1:] + x * e[:-1]
    total = e[j]
    if total <= 0.0:
        raise ZeroConditional("fixed-size model has zero mass at this size")
    return np.clip(counts / total, 0.0, 1.0)


def marginal_vector(model: DppModel) -> np.ndarray:
    """P[i ∈ S] for every element of the ground set."""
    n = model.n
    if n == 0:
        return np.zeros(0)
    if model.constraint is None:
        return np.clip(np.diag(model.kernel.entries).copy(), 0.0, 1.0)
    if isinstance(model.constraint, Cardinality):
        j = model.constraint.k
        if j == 0:
            return np.zeros(n)
        if model.ensemble.kind == KIND_SYMMETRIC:
            return _cardinality_marginal_vector_sym(model.ensemble.entries, j)
        # Deletion identity: count_j({i}) = e_j(L) - e_j(L with i removed).
        e_full = char_poly_coeffs(model.ensemble)
        total = float(e_full[j])
        if total <= 0.0:
            raise ZeroConditional("fixed-size model has zero mass at this size")
        out = np.empty(n)
        idx = np.arange(n)
        for i in range(n):
            keep = idx[idx != i]
            sub = model.ensemble.entries[np.ix_(keep, keep)]
            e_sub = char_poly_coeffs(sub)
            drop = float(e_sub[j]) if j <= n - 1 else 0.0
            out[i] = (total - drop) / total
        return np.clip(out, 0.0, 1.0)
    return np.array([marginal(model, i) for i in range(n)])


_MARGINAL_CACHE: dict = {}


def marginal_vector_cached(model: DppModel) -> np.ndarray:
    """marginal_vector memoized on the model content.

    Sampler loops revisit the same residual models constantly (identical
    conditioning chains across runs); the vector is read-only shared.
    """
    key = (model.ensemble.entries.tobytes(), model.ensemble.kind, model.constraint)
    hit = _MARGINAL_CACHE.get(key)
    if hit is None:
        if len(_MARGINAL_CACHE) >= 512:
            _MARGINAL_CACHE.clear()
        hit = marginal_vector(model)
        hit.flags.writeable = False
        _MARGINAL_CACHE[key] = hit
    return hit


def model_digest(model: DppModel) -> str:
    """Stable hex digest of the model inputs for run records."""
    h = hashlib.sha256()
    h.update(model.ensemble.kind.encode())
    h.update(str(model.n).encode())
    h.update(model.ensemble.entries.tobytes())
    if model.constraint is None:
        h.update(b"none")
    elif isinstance(model.constraint, Cardinality):
        h.update(f"cardinality:{model.constraint.k}".encode())
    else:
        h.update(
            json.dumps(
                {
                    "blocks": [list(b) for b in model.constraint.blocks],
                    "quotas": list(model.constraint.quotas),
                },
                sort_keys=True,
            ).encode()
        )
    return h.hexdigest()


def constraint_from_dict(spec: dict, n: int) -> Constraint:
    kind = spec.get("type", "none")
    if kind == "none":
        return None
    if kind == "cardinality":
        if "k" not in spec:
            raise InvalidModel("cardinality constraint needs k")
        return Cardinality(k=int(spec["k"]))
    if kind == "partition":
        if "blocks" not in spec or "quotas" not in spec:
            raise InvalidModel("partition constraint needs blocks and quotas")
        return Partition(
            blocks=tuple(tuple(int(v) for v in b) for b in spec["blocks"]),
            quotas=tuple(int(q) for q in spec["quotas"]),
        )
    raise InvalidModel(f"unknown constraint type {kind!r}")


def load_model(path) -> DppModel:
    """Model description file: {"matrix": <path>, "constraint": {...}}.

    A relative matrix path is resolved against the description file's
    directory.
    """
    from .numerics import read_matrix

    with open(path, "r", encoding="utf-8") as fh:
        try:
            desc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidModel(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(desc, dict) or "matrix" not in desc:
        raise InvalidModel(f"{path}: expected an object with a 'matrix' entry")
    matrix_path = desc["matrix"]
    if not os.path.isabs(matrix_path):
        matrix_path = os.path.join(os.path.dirname(os.path.abspath(path)), matrix_path)
    entries = read_matrix(matrix_path)
    constraint = constraint_from_dict(desc.get("constraint", {"type": "none"}), entries.shape[0])
    return DppModel(ensemble=EnsembleMatrix.from_array(entries), constraint=constraint)
