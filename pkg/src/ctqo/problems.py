"""Combinatorial optimisation instances as diagonal Ising Hamiltonians.

Bit convention used everywhere in the package: bit ``i`` of the integer ``z``
is the state of qubit ``i`` and bit value 0 maps to spin ``s_i = +1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any

import numpy as np

from . import kernels

N_MAX = 13


class SizeCapError(ValueError):
    """Requested system is larger than the dense-representation cap."""


def check_size(n: int, cap: int = N_MAX) -> None:
    if n > cap:
        raise SizeCapError(f"n={n} exceeds the dense size cap of {cap} qubits")


def instance_seed(campaign_seed: int, index: int) -> np.random.SeedSequence:
    """Seed stream for instance ``index`` of a campaign.

    Derived from the pair (campaign seed, index) so results do not depend on
    the order in which parallel workers pick up instances.
    """
    return np.random.SeedSequence([int(campaign_seed), int(index)])


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _seed_repr(seed) -> Any:
    if isinstance(seed, np.random.SeedSequence):
        ent = seed.entropy
        return {"entropy": ent, "spawn_key": list(seed.spawn_key)} if seed.spawn_key else ent
    if isinstance(seed, (list, tuple)):
        return [int(s) for s in seed]
    if seed is None or isinstance(seed, (int, np.integer)):
        return None if seed is None else int(seed)
    return None


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on vertices ``0..n-1``.

    ``edges`` is stored as a sorted tuple of ``(i, j)`` pairs with ``i < j``.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    seed: Any = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        norm = set()
        for e in self.edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise ValueError(f"self-loop on vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge {e} has a vertex outside [0, {self.n})")
            key = (min(i, j), max(i, j))
            if key in norm:
                raise ValueError(f"duplicate edge {key}")
            norm.add(key)
        object.__setattr__(self, "edges", tuple(sorted(norm)))

    @property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.int64)
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1
        return a

    def triangle_count(self) -> int:
        """Number of triangles, ``trace(A^3) / 6``."""
        a = self.adjacency
        return int(np.trace(a @ a @ a) // 6)


def triangle_count_naive(graph: Graph) -> int:
    """Triple-loop triangle count, kept as an independent check."""
    es = set(graph.edges)
    return sum(
        1
        for i, j, k in combinations(range(graph.n), 3)
        if (i, j) in es and (j, k) in es and (i, k) in es
    )


def gen_binomial_graph(n: int, p: float, seed=None) -> Graph:
    """Erdos-Renyi graph: each of the ``n(n-1)/2`` pairs kept with probability ``p``.

    Candidate pairs are visited in lexicographic ``(i, j), i < j`` order, one
    uniform draw each, so the graph is a deterministic function of the seed.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    pairs = list(combinations(range(n), 2))
    draws = _rng(seed).random(len(pairs))
    edges = tuple(pq for pq, u in zip(pairs, draws) if u < p)
    return Graph(n=n, edges=edges, seed=_seed_repr(seed))


@dataclass(frozen=True, eq=False)
class IsingProblem:
    """Diagonal problem Hamiltonian ``sum J_ij Z_i Z_j + sum h_i Z_i``.

    Attributes
    ----------
    energies : ndarray
        Read-only table of the ``2**n`` energies indexed by bitstring.
    kappa2 : float
        Edge count for MAX-CUT; for other families the normalised second
        moment ``Tr' H_p^2`` of the table.
    kappa3 : int or None
        Triangle count (MAX-CUT only).
    """

    n: int
    energies: np.ndarray = field(repr=False)
    kappa2: float
    kappa3: int | None
    couplings: tuple[tuple[int, int, float], ...]
    fields: tuple[tuple[int, float], ...]
    family: str = "ising"
    seed: Any = None

    @classmethod
    def from_couplings(cls, n, couplings, fields=(), *, family="ising", kappa3=None,
                       kappa2=None, seed=None, cap=N_MAX) -> "IsingProblem":
        check_size(n, cap)
        couplings = tuple((int(i), int(j), float(w)) for i, j, w in couplings)
        fields = tuple((int(i), float(h)) for i, h in fields)
        ci = [c[0] for c in couplings]
        cj = [c[1] for c in couplings]
        cw = [c[2] for c in couplings]
        fi = [f[0] for f in fields]
        fv = [f[1] for f in fields]
        e = kernels.ising_energies(n, ci, cj, cw, fi, fv)
        e.setflags(write=False)
        if kappa2 is None:
            kappa2 = float(np.mean(e * e))
        return cls(n=n, energies=e, kappa2=kappa2, kappa3=kappa3, couplings=couplings,
                   fields=fields, family=family, seed=seed)

    @property
    def dim(self) -> int:
        return 1 << self.n

    @property
    def has_fields(self) -> bool:
        return any(h != 0.0 for _, h in self.fields)

    def energy_of(self, z: int) -> float:
        """Symbolic evaluation of the coupling list at bitstring ``z``."""
        s = [1 - 2 * ((z >> i) & 1) for i in range(self.n)]
        return float(sum(w * s[i] * s[j] for i, j, w in self.couplings)
                     + sum(h * s[i] for i, h in self.fields))

    def to_dict(self) -> dict:
        d = {"family": self.family, "n": self.n, "seed": self.seed,
             "kappa2": self.kappa2, "kappa3": self.kappa3}
        if self.family == "maxcut":
            d["edges"] = [[i, j] for i, j, _ in self.couplings]
        else:
            d["couplings"] = [[i, j, w] for i, j, w in self.couplings]
            d["fields"] = [[i, h] for i, h in self.fields]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "IsingProblem":
        if d.get("family") == "maxcut":
            g = Graph(n=d["n"], edges=tuple(tuple(e) for e in d["edges"]), seed=d.get("seed"))
            return maxcut_problem(g)
        return cls.from_couplings(d["n"], d.get("couplings", []), d.get("fields", []),
                                  family=d.get("family", "ising"), kappa3=d.get("kappa3"),
                                  seed=d.get("seed"))

    @classmethod
    def from_json(cls, text: str) -> "IsingProblem":
        return cls.from_dict(json.loads(text))


def maxcut_problem(graph: Graph, cap: int = N_MAX) -> IsingProblem:
    """MAX-CUT Ising Hamiltonian ``sum_{(i,j) in E} Z_i Z_j``."""
    check_size(graph.n, cap)
    return IsingProblem.from_couplings(
        graph.n, [(i, j, 1.0) for i, j in graph.edges], (), family="maxcut",
        kappa2=float(len(graph.edges)), kappa3=graph.triangle_count(), seed=graph.seed,
        cap=cap)


def sk_problem(n: int, seed=None, cap: int = N_MAX) -> IsingProblem:
    """Sherrington-Kirkpatrick-type instance with standard-normal ``J_ij`` and ``h_i``.

    Couplings are drawn first for pairs ``i > j`` in order ``(1,0), (2,0), (2,1), ...``,
    then the ``n`` fields. ``seed`` may also be any object with a
    ``standard_normal(size)`` method.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    check_size(n, cap)
    rng = seed if hasattr(seed, "standard_normal") else _rng(seed)
    pairs = [(i, j) for i in range(n) for j in range(i)]
    J = np.asarray(rng.standard_normal(len(pairs)), dtype=float).reshape(-1)
    h = np.asarray(rng.standard_normal(n), dtype=float).reshape(-1)
    return IsingProblem.from_couplings(
        n, [(i, j, w) for (i, j), w in zip(pairs, J)], list(enumerate(h)),
        family="sk", seed=_seed_repr(seed), cap=cap)


def ground_state_energy(problem: IsingProblem) -> float:
    return float(np.min(problem.energies))


def make_problem(family: str, n: int, seed, p: float = 2.0 / 3.0) -> IsingProblem:
    """Build one instance of a named family (``"maxcut"`` or ``"sk"``)."""
    if family == "maxcut":
        return maxcut_problem(gen_binomial_graph(n, p, seed))
    if family == "sk":
        return sk_problem(n, seed)
    raise ValueError(f"unknown problem family {family!r}")
