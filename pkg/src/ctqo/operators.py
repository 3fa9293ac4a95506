"""Driver, problem and bias Hamiltonians: matrix-free action, dense matrices,
cached eigendecompositions and normalised trace moments.

All operators here are real symmetric in the computational basis. States are
complex vectors of length ``2**n`` (or ``(2**n, m)`` blocks).
"""

from __future__ import annotations

import hashlib
import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from . import kernels
from .problems import N_MAX, IsingProblem, check_size

TRANSVERSE_FIELD = "transverse_field"
BIASED_LOCAL = "biased_local"
PROJECTOR_BIAS = "projector_bias"
DRIVER_KINDS = (TRANSVERSE_FIELD, BIASED_LOCAL, PROJECTOR_BIAS)


class SpectrumError(RuntimeError):
    """The symmetric eigensolver failed."""


def spins(n: int) -> np.ndarray:
    """``(2**n, n)`` table of spin values, +1 for bit 0 and -1 for bit 1."""
    z = np.arange(1 << n, dtype=np.int64)
    return 1.0 - 2.0 * ((z[:, None] >> np.arange(n)) & 1)


@dataclass(frozen=True)
class DriverSpec:
    """One of the three driver or bias operators.

    ``transverse_field`` is ``-sum_i X_i``. ``biased_local`` is the diagonal
    ``-alpha sum_i (-1)^{z*[i]} Z_i`` whose ground state is ``|z*>``.
    ``projector_bias`` is ``-alpha |z*><z*|``.
    """

    kind: str
    n: int
    sign_pattern: int | None = None
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in DRIVER_KINDS:
            raise ValueError(f"unknown driver kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("driver needs n >= 1")
        if self.kind != TRANSVERSE_FIELD:
            if self.sign_pattern is None or not 0 <= self.sign_pattern < (1 << self.n):
                raise ValueError("bias drivers need a sign_pattern bitstring in [0, 2**n)")
            if self.alpha < 0:
                raise ValueError("alpha must be non-negative")

    @classmethod
    def transverse_field(cls, n: int) -> "DriverSpec":
        return cls(TRANSVERSE_FIELD, n)

    @classmethod
    def biased_local(cls, n: int, z_star: int, alpha: float) -> "DriverSpec":
        return cls(BIASED_LOCAL, n, int(z_star), float(alpha))

    @classmethod
    def projector_bias(cls, n: int, z_star: int, alpha: float) -> "DriverSpec":
        return cls(PROJECTOR_BIAS, n, int(z_star), float(alpha))

    @property
    def is_diagonal(self) -> bool:
        return self.kind != TRANSVERSE_FIELD

    @cached_property
    def diagonal(self) -> np.ndarray | None:
        """Energy table of a diagonal driver, ``None`` for the transverse field."""
        if self.kind == TRANSVERSE_FIELD:
            return None
        if self.kind == BIASED_LOCAL:
            zs = np.array([1 - 2 * ((self.sign_pattern >> i) & 1) for i in range(self.n)], float)
            d = -self.alpha * (spins(self.n) @ zs)
        else:
            d = np.zeros(1 << self.n)
            d[self.sign_pattern] = -self.alpha
        d.setflags(write=False)
        return d

    def key(self) -> tuple:
        return (self.kind, self.n, self.sign_pattern, self.alpha)


def _problem_key(problem: IsingProblem | None) -> str:
    if problem is None:
        return "none"
    cached = problem.__dict__.get("_content_key")
    if cached is None:
        cached = hashlib.sha1(np.ascontiguousarray(problem.energies).tobytes()).hexdigest()
        object.__setattr__(problem, "_content_key", cached)
    return cached


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """``a * H_d + b * H_p (+ H_b)``.

    Parameters
    ----------
    a, b : float
        Coefficients on the driver and the problem.
    driver : DriverSpec
    problem : IsingProblem
    bias : DriverSpec, optional
        Diagonal bias added with unit coefficient.
    """

    a: float
    b: float
    driver: DriverSpec
    problem: IsingProblem
    bias: DriverSpec | None = None

    def __post_init__(self):
        if self.driver.n != self.problem.n:
            raise ValueError("driver and problem act on different qubit counts")
        if self.bias is not None:
            if self.bias.n != self.problem.n:
                raise ValueError("bias acts on a different qubit count")
            if not self.bias.is_diagonal:
                raise ValueError("bias must be a diagonal operator")

    @property
    def n(self) -> int:
        return self.problem.n

    @property
    def dim(self) -> int:
        return 1 << self.problem.n

    def with_coefficients(self, a: float, b: float) -> "HamiltonianSpec":
        return HamiltonianSpec(float(a), float(b), self.driver, self.problem, self.bias)

    def with_bias(self, bias: DriverSpec | None) -> "HamiltonianSpec":
        return HamiltonianSpec(self.a, self.b, self.driver, self.problem, bias)

    def components(self) -> tuple[bool, np.ndarray, np.ndarray, np.ndarray]:
        """``(has_tf, d_a, d_b, d_c)`` with ``H = a (TF?) + diag(a d_a + b d_b + d_c)``."""
        zero = np.zeros(self.dim)
        has_tf = not self.driver.is_diagonal
        d_a = zero if has_tf else np.asarray(self.driver.diagonal)
        d_c = zero if self.bias is None else np.asarray(self.bias.diagonal)
        return has_tf, d_a, np.asarray(self.problem.energies), d_c

    @property
    def tf_coefficient(self) -> float:
        return 0.0 if self.driver.is_diagonal else self.a

    @cached_property
    def diag(self) -> np.ndarray:
        _, d_a, d_b, d_c = self.components()
        d = self.a * d_a + self.b * d_b + d_c
        d.setflags(write=False)
        return d

    @property
    def is_diagonal(self) -> bool:
        return self.tf_coefficient == 0.0

    def key(self) -> tuple:
        return (_problem_key(self.problem), self.driver.key(),
                None if self.bias is None else self.bias.key(), float(self.a), float(self.b))

    @property
    def parity_symmetric(self) -> bool:
        """True when H commutes with the global spin flip ``prod_i X_i``."""
        return (not self.driver.is_diagonal and self.bias is None
                and not self.problem.has_fields
                and bool(np.array_equal(self.problem.energies, self.problem.energies[::-1])))


def apply(h: HamiltonianSpec, psi: np.ndarray) -> np.ndarray:
    """``H psi`` without forming a matrix; ``psi`` is a vector or a ``(2**n, m)`` block."""
    psi = np.asarray(psi)
    if psi.shape[0] != h.dim:
        raise ValueError(f"state has leading dimension {psi.shape[0]}, expected {h.dim}")
    return kernels.hamiltonian_apply(psi, h.n, h.tf_coefficient, h.diag)


def dense(h: HamiltonianSpec, cap: int = N_MAX) -> np.ndarray:
    """Real symmetric ``2**n x 2**n`` matrix of ``h``."""
    check_size(h.n, cap)
    d = h.dim
    m = np.zeros((d, d))
    idx = np.arange(d)
    m[idx, idx] = h.diag
    tf = h.tf_coefficient
    if tf != 0.0:
        for i in range(h.n):
            m[idx, idx ^ (1 << i)] -= tf
    return m


def _parity_blocks(h: HamiltonianSpec) -> tuple[np.ndarray, np.ndarray]:
    """Even and odd blocks of a flip-symmetric ``h`` in the basis
    ``(|z> +- |~z>)/sqrt(2)``, ``z < 2**(n-1)``."""
    d = h.dim
    half = d // 2
    z = np.arange(half)
    tt = np.zeros((half, half))
    tf_blk = np.zeros((half, half))
    tt[z, z] = h.diag[:half]
    a = h.tf_coefficient
    for i in range(h.n):
        nb = z ^ (1 << i)
        low = nb < half
        tt[z[low], nb[low]] -= a
        tf_blk[z[~low], d - 1 - nb[~low]] -= a
    return tt + tf_blk, tt - tf_blk


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Ascending eigenvalues and orthonormal eigenvectors (columns).

    ``parity`` holds +1/-1 sector labels when the parity-block solver was used.
    """

    values: np.ndarray
    vectors: np.ndarray
    parity: np.ndarray | None = None

    @property
    def nbytes(self) -> int:
        return self.values.nbytes + self.vectors.nbytes

    def populations(self, psi: np.ndarray) -> np.ndarray:
        c = self.vectors.T @ psi
        return (c.real ** 2 + c.imag ** 2) if np.iscomplexobj(c) else c * c

    def diag_expectations(self, table: np.ndarray) -> np.ndarray:
        """``<E_k| diag(table) |E_k>`` for every eigenvector."""
        return np.einsum("zk,z,zk->k", self.vectors, table, self.vectors, optimize=True)


def _eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        return scipy.linalg.eigh(m, driver="evd", check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise SpectrumError(f"symmetric eigensolver failed on a {m.shape[0]}-dim matrix: {exc}") from exc


def _diagonalise(h: HamiltonianSpec, cap: int) -> EigenSystem:
    check_size(h.n, cap)
    d = h.dim
    if h.is_diagonal:
        order = np.argsort(h.diag, kind="stable")
        vecs = np.zeros((d, d))
        vecs[order, np.arange(d)] = 1.0
        return EigenSystem(h.diag[order].copy(), vecs)
    if h.parity_symmetric and h.n >= 2:
        plus, minus = _parity_blocks(h)
        wp, up = _eigh(plus)
        wm, um = _eigh(minus)
        half = d // 2
        s = 1.0 / np.sqrt(2.0)
        vp = np.vstack([up * s, up[::-1] * s])
        vm = np.vstack([um * s, -um[::-1] * s])
        values = np.concatenate([wp, wm])
        order = np.argsort(values, kind="stable")
        vecs = np.hstack([vp, vm])[:, order]
        parity = np.concatenate([np.ones(half), -np.ones(half)])[order]
        return EigenSystem(values[order], np.ascontiguousarray(vecs), parity)
    w, v = _eigh(dense(h, cap))
    return EigenSystem(w, v)


class EigCache:
    """Byte-limited LRU cache of eigendecompositions keyed on Hamiltonian content.

    Lookups and insertions hold a lock, so concurrent readers are safe; the
    factorisation itself runs outside the lock.
    """

    def __init__(self, max_bytes: int = 1 << 30):
        self.max_bytes = int(max_bytes)
        self._data: OrderedDict = OrderedDict()
        self._bytes = 0
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key):
        with self._lock:
            val = self._data.get(key)
            if val is not None:
                self._data.move_to_end(key)
                self.hits += 1
            else:
                self.misses += 1
            return val

    def put(self, key, value, nbytes: int) -> None:
        with self._lock:
            if key in self._data:
                return
            if nbytes > self.max_bytes:
                return
            self._data[key] = (value, nbytes)
            self._bytes += nbytes
            while self._bytes > self.max_bytes:
                _, (_, nb) = self._data.popitem(last=False)
                self._bytes -= nb

    def clear(self) -> None:
        with self._lock:
            self._data.clear()
            self._bytes = 0


EIG_CACHE = EigCache()


def eig(h: HamiltonianSpec, cap: int = N_MAX, cache: EigCache | None = EIG_CACHE) -> EigenSystem:
    """Eigendecomposition of ``h`` (ascending), memoised in ``cache``."""
    key = ("eig",) + h.key()
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit[0]
    es = _diagonalise(h, cap)
    if cache is not None:
        cache.put(key, es, es.nbytes)
    return es


# ---------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class Moments:
    """Normalised-trace moments of ``a H_d + b H_p`` (plus any bias).

    ``delta`` is the signed cube root of half the central third moment, so
    ``delta**3 = m3 / 2``.
    """

    mu: float
    sigma2: float
    delta: float
    trp2: float
    trd2: float
    trdp: float
    trp_mean: float
    trd_mean: float
    m3: float = 0.0


class DiagonalMoments:
    """Moments and their (a, b) partial derivatives for a transverse-field or
    diagonal driver plus a diagonal problem and optional diagonal bias.

    With a transverse-field driver every cross term between the driver and a
    diagonal operator has zero normalised trace, so the moments reduce to
    ``mu = mean(D)``, ``sigma2 = a^2 n + var(D)`` and ``m3 = mean((D - mean D)^3)``
    with ``D = b e + c`` the diagonal part. A diagonal driver just joins ``D``.
    """

    def __init__(self, driver: DriverSpec, problem: IsingProblem, bias: DriverSpec | None = None):
        self.n = problem.n
        self.tf = not driver.is_diagonal
        zero = np.zeros(problem.dim)
        da = zero if self.tf else np.asarray(driver.diagonal, dtype=float)
        db = np.asarray(problem.energies, dtype=float)
        dc = zero if bias is None else np.asarray(bias.diagonal, dtype=float)
        self.mean = np.array([da.mean(), db.mean(), dc.mean()])
        self._cen = np.vstack([da - da.mean(), db - db.mean(), dc - dc.mean()])
        self.tr_d2 = float(self.n) if self.tf else float(np.mean(self._cen[0] ** 2))
        self.tr_p2 = float(np.mean(self._cen[1] ** 2))
        self.tr_dp = 0.0 if self.tf else float(np.mean(self._cen[0] * self._cen[1]))

    def _x(self, a, b):
        return a * self._cen[0] + b * self._cen[1] + self._cen[2]

    def moments(self, a: float, b: float) -> Moments:
        x = self._x(a, b)
        s2 = float((a * a * self.n if self.tf else 0.0) + np.mean(x * x))
        m3 = float(np.mean(x ** 3))
        return Moments(
            mu=float(a * self.mean[0] + b * self.mean[1] + self.mean[2]),
            sigma2=s2, delta=float(np.cbrt(m3 / 2.0)), trp2=self.tr_p2, trd2=self.tr_d2,
            trdp=self.tr_dp, trp_mean=float(self.mean[1]),
            trd_mean=float(self.mean[0]), m3=m3)

    def with_partials(self, a: float, b: float) -> dict:
        """``mu, sigma2, m3`` and their partial derivatives in ``a`` and ``b``."""
        x = self._x(a, b)
        x2 = x * x
        ca, cb = self._cen[0], self._cen[1]
        tfn = self.n if self.tf else 0.0
        return {
            "mu": float(a * self.mean[0] + b * self.mean[1] + self.mean[2]),
            "mu_a": float(self.mean[0]), "mu_b": float(self.mean[1]),
            "sigma2": float(a * a * tfn + np.mean(x2)),
            "sigma2_a": float(2 * a * tfn + 2 * np.mean(x * ca)),
            "sigma2_b": float(2 * np.mean(x * cb)),
            "m3": float(np.mean(x2 * x)),
            "m3_a": float(3 * np.mean(x2 * ca)), "m3_b": float(3 * np.mean(x2 * cb)),
        }


class MaxCutMoments:
    """Closed-form moments for MAX-CUT with a transverse-field driver:
    ``mu = 0``, ``sigma2 = a^2 n + b^2 kappa2``, ``m3 = 6 kappa3 b^3``.

    Cost is independent of the Hilbert-space dimension.
    """

    def __init__(self, n: int, kappa2: float, kappa3: float):
        self.n = int(n)
        self.kappa2 = float(kappa2)
        self.kappa3 = float(kappa3)

    @classmethod
    def from_problem(cls, problem: IsingProblem) -> "MaxCutMoments":
        if problem.family != "maxcut" or problem.kappa3 is None:
            raise ValueError("closed-form moments need a MAX-CUT instance")
        return cls(problem.n, problem.kappa2, problem.kappa3)

    def moments(self, a: float, b: float) -> Moments:
        m3 = 6.0 * self.kappa3 * b ** 3
        return Moments(mu=0.0, sigma2=a * a * self.n + b * b * self.kappa2,
                       delta=float(np.cbrt(m3 / 2.0)), trp2=self.kappa2, trd2=float(self.n),
                       trdp=0.0, trp_mean=0.0, trd_mean=0.0, m3=m3)

    def with_partials(self, a: float, b: float) -> dict:
        return {
            "mu": 0.0, "mu_a": 0.0, "mu_b": 0.0,
            "sigma2": a * a * self.n + b * b * self.kappa2,
            "sigma2_a": 2 * a * self.n, "sigma2_b": 2 * b * self.kappa2,
            "m3": 6.0 * self.kappa3 * b ** 3, "m3_a": 0.0, "m3_b": 18.0 * self.kappa3 * b * b,
            # Delta = cbrt(3 kappa3) b is linear in b, smooth even at b = 0
            "delta": float(np.cbrt(3.0 * self.kappa3)) * b, "delta_a": 0.0,
            "delta_b": float(np.cbrt(3.0 * self.kappa3)),
        }


def moments(driver: DriverSpec, problem: IsingProblem, a: float, b: float,
            bias: DriverSpec | None = None) -> Moments:
    """Normalised trace moments of ``a H_d + b H_p (+ H_b)`` from the energy tables.

    No dense matrices are formed for any supported driver or bias kind.
    """
    return DiagonalMoments(driver, problem, bias).moments(a, b)


def dense_moments(h: HamiltonianSpec) -> Moments:
    """Moments from the dense matrix; an independent check for ``moments``."""
    m = dense(h)
    d = h.dim
    mu = np.trace(m) / d
    c = m - mu * np.eye(d)
    c2 = c @ c
    s2 = np.trace(c2) / d
    m3 = np.sum(c2 * c) / d
    hd = dense(HamiltonianSpec(1.0, 0.0, h.driver, h.problem))
    hp = np.diag(np.asarray(h.problem.energies, dtype=float))
    hdt = hd - np.trace(hd) / d * np.eye(d)
    hpt = hp - np.trace(hp) / d * np.eye(d)
    return Moments(mu=float(mu), sigma2=float(s2), delta=float(np.cbrt(m3 / 2)),
                   trp2=float(np.sum(hpt * hpt) / d), trd2=float(np.sum(hdt * hdt) / d),
                   trdp=float(np.sum(hdt * hpt) / d), trp_mean=float(np.trace(hp) / d),
                   trd_mean=float(np.trace(hd) / d), m3=float(m3))


def gcond_threshold(m: Moments) -> float:
    """Coupling threshold ``-Tr'(H~_d H~_p) / Tr'(H~_p^2)``.

    Above it, lowering the problem coupling lowers the spectral variance.
    """
    if m.trp2 <= 0.0:
        raise ValueError("Tr' H~_p^2 is zero: the problem Hamiltonian is proportional to identity")
    return -m.trdp / m.trp2


def expectation_diag(table: np.ndarray, psi: np.ndarray) -> np.ndarray | float:
    """``<psi| diag(table) |psi>`` for a vector or each column of a block."""
    p = psi.real ** 2 + psi.imag ** 2
    return table @ p if psi.ndim == 1 else table @ p


def expectation_tf(n: int, psi: np.ndarray):
    """``<psi| -sum_i X_i |psi>`` for a vector or each column of a block."""
    hpsi = kernels.hamiltonian_apply(psi, n, 1.0, np.zeros(psi.shape[0]))
    v = np.sum(np.conj(psi) * hpsi, axis=0).real
    return float(v) if psi.ndim == 1 else v


def driver_expectation(driver: DriverSpec, psi: np.ndarray):
    if driver.is_diagonal:
        return expectation_diag(np.asarray(driver.diagonal), psi)
    return expectation_tf(driver.n, psi)


def warn_fallback(msg: str) -> None:
    warnings.warn(msg, RuntimeWarning, stacklevel=3)
