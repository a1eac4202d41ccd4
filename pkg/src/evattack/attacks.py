"""
For-purpose attack vectors injected by participating agents.

An attacker keeps following the solver but adds ``omega1 * grad G(c_i)`` to
its own primal gradient, which steers the fixed point towards the minimiser
of ``F + omega1 * G``.  Two self-interest functions are provided, both of the
form ``G(c) = sum_t w_t c_t^2``:

* smooth charging, ``w = 1``;
* rush charging, ``w = a^2`` with ``a = m`` up to the desired completion step
  and ``M`` afterwards.

The stealthy variant stays dormant until its own step-to-step change drops
below ``eps_att``, captures the transmitted profiles at that iteration and
from then on also pulls its profile back towards the captured one with
weight ``omega2``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundViolated, ConfigError, DimensionMismatch, NotArmed

VARIANTS = ("none", "smooth", "rush", "stealthy-smooth", "stealthy-rush")


@dataclass(frozen=True)
class AttackSpec:
    attackers: tuple[int, ...]
    variant: str = "smooth"
    omega1: float = 1.0
    omega2: float = 0.0
    t_d: int | None = None
    m: float = 0.2
    M: float = 1e5
    eps_att: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "attackers", tuple(int(a) for a in self.attackers))

    @property
    def stealthy(self) -> bool:
        return self.variant.startswith("stealthy")

    @property
    def rush(self) -> bool:
        return self.variant.endswith("rush")

    def problems(self, solver_eps: float | None = None, T: int | None = None,
                 s: int | None = None) -> list[str]:
        """Human-readable list of invariant violations (empty when valid)."""
        out = []
        if self.variant not in VARIANTS:
            out.append(f"unknown attack variant {self.variant!r}")
            return out
        if self.variant == "none":
            return out
        if not self.omega1 > 0:
            out.append(f"omega1 must be positive, got {self.omega1}")
        if self.omega2 < 0:
            out.append(f"omega2 must be non-negative, got {self.omega2}")
        if len(set(self.attackers)) != len(self.attackers):
            out.append("duplicate attacker ids")
        if s is not None:
            bad = [a for a in self.attackers if not 0 <= a < s]
            if bad:
                out.append(f"attacker ids {bad} outside 0..{s - 1}")
        if self.rush:
            if self.t_d is None:
                out.append("rush variants need t_d")
            elif T is not None and not 0 < self.t_d <= T:
                out.append(f"t_d={self.t_d} outside 1..{T}")
            if not 0 < self.m < self.M:
                out.append(f"rush weights need 0 < m < M, got m={self.m}, M={self.M}")
        if self.stealthy:
            if self.eps_att is None or self.eps_att <= 0:
                out.append("stealthy variants need eps_att > 0")
            elif solver_eps is not None and self.eps_att <= solver_eps:
                out.append(f"eps_att={self.eps_att} must exceed the solver tolerance "
                           f"{solver_eps}, or the run stops before the attack starts")
        return out

    def to_dict(self) -> dict:
        return {"attackers": list(self.attackers), "variant": self.variant,
                "omega1": self.omega1, "omega2": self.omega2, "t_d": self.t_d,
                "m": self.m, "M": self.M, "eps_att": self.eps_att}

    @classmethod
    def from_dict(cls, data: dict) -> "AttackSpec":
        data = dict(data)
        att = data.pop("attackers")
        if isinstance(att, dict):
            att = range(int(att["start"]), int(att["stop"]))
        known = {k: data[k] for k in ("variant", "omega1", "omega2", "t_d", "m", "M", "eps_att")
                 if k in data}
        return cls(attackers=tuple(att), **known)


# -- self-interest terms ---------------------------------------------------------

@dataclass(frozen=True)
class RushMatrix:
    """Diagonal of the rush weighting matrix (never stored densely)."""

    diag: np.ndarray

    @classmethod
    def build(cls, T: int, t_d: int, m: float, M: float) -> "RushMatrix":
        diag = np.full(T, float(M))
        diag[:t_d] = m
        return cls(diag=diag)


def smooth_injection(c, omega1: float) -> np.ndarray:
    """Gradient of ``omega1 * ||c||^2``."""
    return 2.0 * omega1 * np.asarray(c, dtype=float)


def rush_injection(c, rush: RushMatrix, omega1: float) -> np.ndarray:
    """Gradient of ``omega1 * ||A c||^2`` with diagonal ``A``."""
    c = np.asarray(c, dtype=float)
    if c.shape != rush.diag.shape:
        raise DimensionMismatch(f"profile length {c.shape} vs rush horizon {rush.diag.shape}")
    return 2.0 * omega1 * rush.diag ** 2 * c


def interest_weights(spec: AttackSpec, T: int) -> np.ndarray:
    """Per-step weights ``w`` of the self-interest term ``sum_t w_t c_t^2``."""
    if spec.rush:
        return RushMatrix.build(T, spec.t_d, spec.m, spec.M).diag ** 2
    return np.ones(T)


@dataclass(frozen=True)
class QuadraticPenalty:
    """``sum_t weights_t * (c_t - center_t)^2`` on one agent's profile."""

    weights: np.ndarray
    center: np.ndarray | None = None

    def value(self, c) -> float:
        d = np.asarray(c, dtype=float) - (0.0 if self.center is None else self.center)
        return float(np.sum(self.weights * d * d))

    def gradient(self, c) -> np.ndarray:
        d = np.asarray(c, dtype=float) - (0.0 if self.center is None else self.center)
        return 2.0 * self.weights * d


def equivalent_penalties(specs, T: int, snapshots: dict | None = None) -> dict[int, list]:
    """Objective terms that an attacked run is equivalent to, keyed by agent.

    For stealthy attackers the pull-back term needs the captured profile from
    ``snapshots``; it is omitted when no snapshot is given.
    """
    out: dict[int, list] = {}
    for spec in specs:
        if spec.variant == "none":
            continue
        w = spec.omega1 * interest_weights(spec, T)
        for a in spec.attackers:
            terms = [QuadraticPenalty(weights=w)]
            if spec.stealthy and spec.omega2 > 0 and snapshots and a in snapshots:
                terms.append(QuadraticPenalty(weights=np.full(T, float(spec.omega2)),
                                              center=np.asarray(snapshots[a])))
            out.setdefault(a, []).extend(terms)
    return out


# -- stealth mechanism -------------------------------------------------------------

class Phase(enum.Enum):
    DORMANT = "dormant"
    ARMED = "armed"


@dataclass(frozen=True)
class StealthState:
    phase: Phase = Phase.DORMANT
    snapshot: np.ndarray | None = None
    trigger_iteration: int | None = None

    @property
    def armed(self) -> bool:
        return self.phase is Phase.ARMED


def stealth_update(state: StealthState, own_residual: float, k: int, wiretap,
                   eps_att: float, agent: int = -1) -> StealthState:
    """Arm once the attacker's own change ``||c^{k+1} - c^k||`` falls below ``eps_att``.

    On arming the full profile matrix ``C^k`` is captured from ``wiretap``.
    An armed state is returned unchanged.
    """
    if state.armed or not own_residual < eps_att:
        return state
    snap = wiretap.snapshot(agent, k)
    return StealthState(phase=Phase.ARMED, snapshot=snap, trigger_iteration=k)


def stealthy_injection(c, snapshot_i, base, omega2: float, armed: bool = True) -> np.ndarray:
    """``base + 2 omega2 (c - snapshot_i)`` once armed, zero before."""
    c = np.asarray(c, dtype=float)
    if not armed:
        if snapshot_i is not None:
            raise NotArmed("dormant attacker cannot hold a snapshot")
        return np.zeros_like(c)
    if snapshot_i is None:
        raise NotArmed("armed attacker has no snapshot")
    return np.asarray(base, dtype=float) + 2.0 * omega2 * (c - np.asarray(snapshot_i))


@dataclass
class AttackerHook:
    """Per-agent hook plugged into the solver's primal step."""

    agent: int
    spec: AttackSpec
    weights: np.ndarray
    stealth: StealthState = field(default_factory=StealthState)
    injections: int = 0

    def _base(self, profile: np.ndarray) -> np.ndarray:
        return 2.0 * self.spec.omega1 * self.weights * profile

    def inject(self, k: int, profile: np.ndarray) -> np.ndarray | None:
        if not self.spec.stealthy:
            self.injections += 1
            return self._base(profile)
        if not self.stealth.armed:
            return None
        self.injections += 1
        own = self.stealth.snapshot[self.agent]
        return stealthy_injection(profile, own, self._base(profile), self.spec.omega2)

    def observe(self, k: int, residual: float, wiretap) -> None:
        if self.spec.stealthy:
            self.stealth = stealth_update(self.stealth, residual, k, wiretap,
                                          self.spec.eps_att, self.agent)

    def audit(self) -> dict:
        return {"agent": self.agent, "variant": self.spec.variant,
                "armed": self.stealth.armed,
                "trigger_iteration": self.stealth.trigger_iteration,
                "injections": self.injections}


def make_hooks(specs, T: int) -> dict[int, AttackerHook]:
    hooks: dict[int, AttackerHook] = {}
    for spec in specs:
        if spec.variant == "none":
            continue
        w = interest_weights(spec, T)
        for a in spec.attackers:
            if a in hooks:
                raise ConfigError([f"agent {a} appears in more than one attack spec"])
            hooks[a] = AttackerHook(agent=a, spec=spec, weights=w)
    return hooks


# -- deviation bound --------------------------------------------------------------

def max_quadratic_on_capped_simplex(weights, K: float, center=None) -> float:
    """Maximum of ``sum_t w_t (c_t - b_t)^2`` over ``{c in [0,1]^T : sum c = K}``.

    The function is convex, so the maximum sits on a vertex: ``floor(K)``
    coordinates at one, at most one coordinate at ``frac(K)``, the rest zero.
    The best vertex is found exactly by ranking per-coordinate gains.
    """
    w = np.asarray(weights, dtype=float)
    b = np.zeros_like(w) if center is None else np.asarray(center, dtype=float)
    T = w.size
    if not 0 <= K <= T + 1e-12:
        raise ValueError(f"K={K} outside [0, {T}]")
    K = min(float(K), float(T))
    ones = int(np.floor(K + 1e-12))
    f = K - ones
    if f < 1e-12:
        f = 0.0
    base = float(np.sum(w * b * b))
    g1 = w * (1.0 - 2.0 * b)            # gain of setting c_t = 1
    g2 = w * (f * f - 2.0 * f * b)      # gain of setting c_t = f
    order = np.argsort(-g1, kind="stable")
    if f == 0.0 or ones == T:
        return base + float(np.sum(g1[order[:ones]]))
    rank = np.empty(T, dtype=int)
    rank[order] = np.arange(T)
    top = float(np.sum(g1[order[:ones]]))
    top_plus = top + float(g1[order[ones]])
    # fractional slot j; the unit slots are the best `ones` coordinates other than j
    gains = np.where(rank < ones, top_plus - g1, top) + g2
    best = float(gains.max())
    return base + best


def deviation_bound_audit(attacked_profiles, attacked_objective: float,
                          reference_objective: float, specs, targets, T: int,
                          snapshots: dict | None = None, slack: float = 1e-6,
                          raise_on_violation: bool = True) -> dict:
    """Check that an attack costs at least nothing and at most ``omega1 * max G``.

    Verifies

        F(C*) <= F(C_hat) <= F(C_hat) + omega1 * G(C_hat_i)
        F(C_hat) - F(C*) <= omega1 * max G

    with ``G`` summed over all attackers.  For stealthy attackers with a
    snapshot, the pull-back weight ``omega2`` enters both ``G`` and its
    maximum.
    """
    penalties = equivalent_penalties(specs, T, snapshots)
    interest = 0.0
    worst = 0.0
    for a, terms in sorted(penalties.items()):
        for term in terms:
            interest += term.value(attacked_profiles[a])
            worst += max_quadratic_on_capped_simplex(term.weights, float(targets[a]), term.center)
    gap = attacked_objective - reference_objective
    record = {
        "reference_objective": reference_objective,
        "attacked_objective": attacked_objective,
        "weighted_interest": interest,
        "objective_gap": gap,
        "bound": worst,
        "lower_ok": gap >= -slack,
        "upper_ok": interest >= -slack,
        "bound_ok": gap <= worst + slack,
    }
    record["holds"] = record["lower_ok"] and record["upper_ok"] and record["bound_ok"]
    if raise_on_violation and not record["holds"]:
        raise BoundViolated(f"deviation bound violated: {record}")
    return record
