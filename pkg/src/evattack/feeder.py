"""
Radial feeder model for the linearised branch-flow (LinDistFlow) equations.

Buses are numbered ``1..n`` with ``0`` reserved for the feeder head.  All
matrices returned here are indexed by ``bus - 1``.  Impedances are per-unit,
powers are in kW and converted with ``s_base``; voltages are carried as
squared magnitudes in p.u.^2 until they are reported.
"""

from __future__ import annotations

import csv
import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    BadNodeIndex,
    DimensionMismatch,
    DisconnectedBus,
    IndexOutOfRange,
    NonRadialTopology,
)


@dataclass(frozen=True)
class Line:
    source: int
    target: int
    r: float
    x: float


@dataclass(frozen=True)
class FeederModel:
    """Radial network: ``n`` buses below the head and exactly ``n`` lines."""

    n: int
    lines: tuple[Line, ...]
    v0: float = 1.0
    s_base: float = 1000.0
    names: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))
        if self.n < 1:
            raise ValueError("feeder needs at least one bus")
        if self.v0 <= 0:
            raise ValueError(f"v0 must be positive, got {self.v0}")
        if self.s_base <= 0:
            raise ValueError(f"s_base must be positive, got {self.s_base}")
        for ln in self.lines:
            if ln.r < 0 or ln.x < 0:
                raise ValueError(f"negative impedance on line {ln.source}-{ln.target}")

    @classmethod
    def from_dict(cls, data: dict) -> "FeederModel":
        lines = [Line(int(d["from"]), int(d["to"]), float(d["r"]), float(d["x"]))
                 for d in data["lines"]]
        n = int(data.get("n", len({b for ln in lines for b in (ln.source, ln.target)} - {0})))
        return cls(n=n, lines=tuple(lines), v0=float(data.get("v0", 1.0)),
                   s_base=float(data.get("s_base", 1000.0)),
                   names=tuple(data.get("names", ())))

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "v0": self.v0,
            "s_base": self.s_base,
            "lines": [{"from": ln.source, "to": ln.target, "r": ln.r, "x": ln.x}
                      for ln in self.lines],
        }
        if self.names:
            out["names"] = list(self.names)
        return out


@dataclass(frozen=True)
class AdjacencyMatrices:
    R: np.ndarray
    X: np.ndarray
    parent: np.ndarray  # parent[b-1] is the upstream bus of b (0 = head)


@dataclass(frozen=True)
class BaselineLoad:
    """Per-bus baseline demand, ``p`` in kW and ``q`` in kvar, both n x T."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.ndim != 2 or p.shape != q.shape:
            raise DimensionMismatch(f"p {p.shape} and q {q.shape} must be equal n x T arrays")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ValueError("baseline contains non-finite entries")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @property
    def T(self) -> int:
        return self.p.shape[1]

    @property
    def aggregate(self) -> np.ndarray:
        """Aggregate real baseline ``P_b`` (kW), summed over buses in index order."""
        return np.add.reduce(self.p, axis=0)


def _path_incidence(feeder: FeederModel) -> tuple[np.ndarray, np.ndarray]:
    """Return (paths, parent) where paths[b-1, e] = 1 iff line e lies on head->b."""
    n = feeder.n
    if len(feeder.lines) > n:
        raise NonRadialTopology(f"{len(feeder.lines)} lines for {n} buses: graph has a cycle")

    adj: dict[int, list[tuple[int, int]]] = {b: [] for b in range(n + 1)}
    for e, ln in enumerate(feeder.lines):
        for b in (ln.source, ln.target):
            if not 0 <= b <= n:
                raise BadNodeIndex(f"line {e} references bus {b} outside 0..{n}")
        if ln.source == ln.target:
            raise NonRadialTopology(f"line {e} is a self-loop at bus {ln.source}")
        adj[ln.source].append((ln.target, e))
        adj[ln.target].append((ln.source, e))

    parent = np.full(n + 1, -1, dtype=int)
    via = np.full(n + 1, -1, dtype=int)
    parent[0] = 0
    order = []
    queue = deque([0])
    while queue:
        b = queue.popleft()
        order.append(b)
        for nb, e in adj[b]:
            if e == via[b]:
                continue
            if parent[nb] != -1:
                raise NonRadialTopology(f"line {e} closes a loop at bus {nb}")
            parent[nb] = b
            via[nb] = e
            queue.append(nb)

    missing = [b for b in range(1, n + 1) if parent[b] == -1]
    if missing:
        raise DisconnectedBus(f"buses {missing} are not reachable from the head")

    paths = np.zeros((n, len(feeder.lines)))
    for b in order[1:]:
        paths[b - 1] = paths[parent[b] - 1] if parent[b] else 0.0
        paths[b - 1, via[b]] = 1.0
    return paths, parent[1:]


def build_adjacency(feeder: FeederModel) -> AdjacencyMatrices:
    """Shared-path resistance and reactance matrices of a radial feeder.

    ``R[a, b]`` is the total resistance of the lines common to the head->a and
    head->b paths (likewise ``X``).
    """
    paths, parent = _path_incidence(feeder)
    r = np.array([ln.r for ln in feeder.lines])
    x = np.array([ln.x for ln in feeder.lines])
    R = (paths * r) @ paths.T
    X = (paths * x) @ paths.T
    return AdjacencyMatrices(R=R, X=X, parent=parent)


def aggregation_matrix(nodes, n: int) -> np.ndarray:
    """n x s 0/1 matrix with a one at (node-1, ev) for every EV."""
    nodes = np.asarray(nodes, dtype=int)
    bad = nodes[(nodes < 1) | (nodes > n)]
    if bad.size:
        raise BadNodeIndex(f"EV node indices {sorted(set(bad.tolist()))} outside 1..{n}")
    G = np.zeros((n, nodes.size))
    G[nodes - 1, np.arange(nodes.size)] = 1.0
    return G


def build_sensitivity(adj: AdjacencyMatrices, nodes, p_max, s_base: float) -> np.ndarray:
    """Map from normalised charging rates to squared-voltage change.

    Returns ``D = -2 R G diag(p_max / s_base)`` with shape n x s.
    """
    p_max = np.asarray(p_max, dtype=float)
    G = aggregation_matrix(nodes, adj.R.shape[0])
    if p_max.shape != (G.shape[1],):
        raise DimensionMismatch(f"p_max has shape {p_max.shape}, expected ({G.shape[1]},)")
    return -2.0 * (adj.R @ G) * (p_max / s_base)


def baseline_voltage(adj: AdjacencyMatrices, baseline: BaselineLoad, v0: float,
                     s_base: float, t: int | None = None) -> np.ndarray:
    """Squared voltages under baseline load only (``y_d``).

    With ``t=None`` the whole n x T array is returned.
    """
    if baseline.n != adj.R.shape[0]:
        raise DimensionMismatch(f"baseline has {baseline.n} buses, feeder has {adj.R.shape[0]}")
    if t is None:
        p, q = baseline.p, baseline.q
    else:
        if not 0 <= t < baseline.T:
            raise IndexOutOfRange(f"t={t} outside 0..{baseline.T - 1}")
        p, q = baseline.p[:, t], baseline.q[:, t]
    drop = 2.0 * (adj.R @ p + adj.X @ q) / s_base
    return v0 ** 2 - drop


def nodal_voltages(D: np.ndarray, y_d: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Squared nodal voltages ``y_d + D C`` for one step (vector C) or a horizon (s x T)."""
    D = np.asarray(D)
    C = np.asarray(C, dtype=float)
    y_d = np.asarray(y_d, dtype=float)
    if C.shape[0] != D.shape[1] or y_d.shape[0] != D.shape[0] or y_d.shape[1:] != C.shape[1:]:
        raise DimensionMismatch(f"D {D.shape}, y_d {y_d.shape}, C {C.shape} are inconsistent")
    return y_d + D @ C


# -- files -------------------------------------------------------------------

def bundled_path(name: str) -> Path:
    """Path of a data file shipped with the package (feeders, scenarios)."""
    return Path(str(resources.files("evattack") / "data" / name))


def load_feeder(path) -> FeederModel:
    with open(path) as fh:
        return FeederModel.from_dict(json.load(fh))


def save_feeder(feeder: FeederModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(feeder.to_dict(), fh, indent=2)
        fh.write("\n")


def write_baseline_csv(baseline: BaselineLoad, path) -> None:
    """Write ``bus,kind,t0,...`` rows: one ``p`` and one ``q`` row per bus."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bus", "kind"] + [f"t{t}" for t in range(baseline.T)])
        for b in range(baseline.n):
            w.writerow([b + 1, "p"] + [repr(float(v)) for v in baseline.p[b]])
            w.writerow([b + 1, "q"] + [repr(float(v)) for v in baseline.q[b]])


def read_baseline_csv(path, n: int | None = None) -> BaselineLoad:
    """Read a baseline CSV.

    The ``kind`` column is optional; without it every row is real power and
    reactive power is zero.  Buses missing from the file get zero load.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    has_kind = len(header) > 1 and header[1].strip().lower() == "kind"
    offset = 2 if has_kind else 1
    T = len(header) - offset
    buses = [int(r[0]) for r in body]
    n = n if n is not None else max(buses)
    p = np.zeros((n, T))
    q = np.zeros((n, T))
    for r in body:
        b = int(r[0])
        if not 1 <= b <= n:
            raise BadNodeIndex(f"baseline row for bus {b} outside 1..{n}")
        kind = r[1].strip().lower() if has_kind else "p"
        vals = np.array([float(v) for v in r[offset:]])
        if vals.size != T:
            raise DimensionMismatch(f"row for bus {b} has {vals.size} values, header has {T}")
        (p if kind == "p" else q)[b - 1] = vals
    return BaselineLoad(p=p, q=q)
