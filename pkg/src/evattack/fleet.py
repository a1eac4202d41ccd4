"""
EV population and the per-EV feasible set.

Charging rates are normalised to ``[0, 1]`` of each charger's maximum power.
An EV's feasible set is the capped simplex

    { c in [0, 1]^T : sum(c) = K }

where ``K = E_req / (eta * dt * p_max)`` is the number of full-power steps
needed to deliver the required energy.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionMismatch, InfeasibleTarget

PRNG_NAME = "numpy-pcg64"

_SUM_TOL = 1e-10
_MAX_BISECT = 200


@dataclass(frozen=True)
class EvSpec:
    id: int
    node: int
    p_max: float       # kW
    capacity: float    # kWh
    soc_ini: float
    soc_des: float
    eta: float = 1.0

    def __post_init__(self):
        if self.p_max <= 0:
            raise ValueError(f"EV {self.id}: p_max must be positive")
        if self.capacity <= 0:
            raise ValueError(f"EV {self.id}: capacity must be positive")
        if not (0.0 <= self.soc_ini <= self.soc_des <= 1.0):
            raise ValueError(f"EV {self.id}: need 0 <= soc_ini <= soc_des <= 1")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"EV {self.id}: eta must lie in (0, 1]")


def required_energy(ev: EvSpec) -> float:
    """Energy the battery must receive over the horizon (kWh)."""
    return ev.capacity * (ev.soc_des - ev.soc_ini)


@dataclass(frozen=True)
class Fleet:
    evs: tuple[EvSpec, ...]
    dt: float  # hours
    T: int

    def __post_init__(self):
        object.__setattr__(self, "evs", tuple(self.evs))
        nodes = [ev.node for ev in self.evs]
        if nodes != sorted(nodes):
            raise ValueError("EVs must be ordered by ascending node")
        if self.dt <= 0 or self.T < 1:
            raise ValueError("dt must be positive and T at least 1")

    @classmethod
    def from_specs(cls, evs, dt: float, T: int) -> "Fleet":
        """Sort stably by node and renumber ids to positions."""
        ordered = sorted(evs, key=lambda ev: ev.node)
        evs = [EvSpec(**{**asdict(ev), "id": i}) for i, ev in enumerate(ordered)]
        return cls(evs=tuple(evs), dt=dt, T=T)

    @property
    def s(self) -> int:
        return len(self.evs)

    @property
    def nodes(self) -> np.ndarray:
        return np.array([ev.node for ev in self.evs], dtype=int)

    @property
    def p_max(self) -> np.ndarray:
        return np.array([ev.p_max for ev in self.evs], dtype=float)

    @property
    def eta(self) -> np.ndarray:
        return np.array([ev.eta for ev in self.evs], dtype=float)

    @property
    def energy_required(self) -> np.ndarray:
        return np.array([required_energy(ev) for ev in self.evs], dtype=float)

    @property
    def targets(self) -> np.ndarray:
        """Required sums ``K_i`` of the normalised charging profiles."""
        return self.energy_required / (self.eta * self.dt * self.p_max)

    def delivered_energy(self, profiles: np.ndarray) -> np.ndarray:
        """Energy (kWh) stored by each EV for the given profiles."""
        return self.eta * self.dt * self.p_max * np.asarray(profiles).sum(axis=1)

    def infeasible(self) -> list[int]:
        """Indices of EVs whose requirement cannot fit in the horizon."""
        K = self.targets
        return [i for i, k in enumerate(K) if not 0.0 <= k <= self.T + 1e-12]

    def to_list(self) -> list[dict]:
        return [asdict(ev) for ev in self.evs]


def load_fleet(path, dt: float, T: int) -> Fleet:
    with open(path) as fh:
        data = json.load(fh)
    evs = [EvSpec(**{"id": d.get("id", i), **{k: v for k, v in d.items() if k != "id"}})
           for i, d in enumerate(data)]
    return Fleet.from_specs(evs, dt, T)


def generate_fleet(per_node: dict, seed: int, dt: float, T: int, *, p_max: float = 6.6,
                   capacity=(18.0, 20.0), soc_ini=(0.3, 0.5), soc_des=(0.7, 0.9),
                   eta: float = 1.0, prng: str = PRNG_NAME) -> Fleet:
    """Draw a reproducible fleet.

    ``per_node`` maps bus index to EV count.  Draws come from numpy's PCG64
    bit generator in three vectorised blocks (capacities, initial SOCs,
    desired SOCs), EVs ordered by ascending node.
    """
    if prng != PRNG_NAME:
        raise ValueError(f"unsupported PRNG {prng!r}; only {PRNG_NAME!r} is pinned")
    rng = np.random.Generator(np.random.PCG64(seed))
    nodes = [int(b) for b in sorted(per_node, key=int) for _ in range(int(per_node[b]))]
    s = len(nodes)
    cap = rng.uniform(capacity[0], capacity[1], s)
    ini = rng.uniform(soc_ini[0], soc_ini[1], s)
    des = rng.uniform(soc_des[0], soc_des[1], s)
    evs = [EvSpec(id=i, node=nodes[i], p_max=float(p_max), capacity=float(cap[i]),
                  soc_ini=float(ini[i]), soc_des=float(des[i]), eta=float(eta))
           for i in range(s)]
    return Fleet(evs=tuple(evs), dt=dt, T=T)


# -- projection onto the capped simplex ---------------------------------------

def project_feasible(c, K) -> np.ndarray:
    """Euclidean projection onto ``{z in [0,1]^T : sum(z) = K}``.

    Works row-wise on the last axis, so ``c`` may be a single profile or an
    s x T stack with ``K`` broadcast per row.  The multiplier ``mu`` of
    ``z = clip(c + mu, 0, 1)`` is found by bisection; each row stops as soon
    as its own sum is within 1e-10, which keeps the result of a row
    independent of the rows it is batched with.
    """
    c = np.asarray(c, dtype=float)
    squeeze = c.ndim == 1
    C = np.atleast_2d(c)
    T = C.shape[-1]
    K = np.broadcast_to(np.asarray(K, dtype=float), C.shape[:-1]).copy()
    if np.any(K < 0) or np.any(K > T):
        raise InfeasibleTarget(f"target sum outside [0, {T}]: {K[(K < 0) | (K > T)]}")

    lo = -1.0 - C.max(axis=-1)
    hi = 1.0 - C.min(axis=-1)
    mu = 0.5 * (lo + hi)
    active = np.ones(K.shape, dtype=bool)
    for _ in range(_MAX_BISECT):
        mu = np.where(active, 0.5 * (lo + hi), mu)
        gap = np.clip(C + mu[:, None], 0.0, 1.0).sum(axis=-1) - K
        done = np.abs(gap) <= _SUM_TOL
        active &= ~done
        if not active.any():
            break
        lo = np.where(active & (gap < 0), mu, lo)
        hi = np.where(active & (gap > 0), mu, hi)

    # Solve for mu exactly on the detected active set when it is consistent.
    Z = np.clip(C + mu[:, None], 0.0, 1.0)
    free = (Z > 0.0) & (Z < 1.0)
    n_free = free.sum(axis=-1)
    ones = (Z >= 1.0).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mu_exact = (K - ones - np.where(free, C, 0.0).sum(axis=-1)) / n_free
    Z_exact = np.clip(C + mu_exact[:, None], 0.0, 1.0)
    same = (n_free > 0) & np.all(((Z_exact > 0.0) & (Z_exact < 1.0)) == free, axis=-1) \
        & np.all((Z_exact >= 1.0) == (Z >= 1.0), axis=-1)
    Z = np.where(same[:, None], Z_exact, Z)
    Z[K == 0.0] = 0.0
    Z[K == T] = 1.0
    return Z[0] if squeeze else Z.reshape(c.shape)


def shrink_project(x, tau: float, K) -> np.ndarray:
    """Scale-then-project composition ``P((1/tau) P(tau * x))`` on the capped simplex."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"shrink factor must lie in (0, 1], got {tau}")
    if tau == 1.0:
        # P(P(x)) = P(x); skip the second pass so rounding does not drift
        return project_feasible(x, K)
    inner = project_feasible(tau * np.asarray(x, dtype=float), K)
    return project_feasible(inner / tau, K)


def check_profile_shape(profiles: np.ndarray, s: int, T: int) -> None:
    if np.shape(profiles) != (s, T):
        raise DimensionMismatch(f"profiles have shape {np.shape(profiles)}, expected {(s, T)}")
