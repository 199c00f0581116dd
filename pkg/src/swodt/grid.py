"""DC network model: PTDF/LODF construction, N-1 screening, base ED LP."""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import GridError
from .lp import EQ, GE, LE, LinearProgram

GEN_KINDS = ("thermal", "wind", "pv", "hydro")
RENEWABLE_KINDS = ("wind", "pv")
DEFAULT_EMERGENCY_FACTOR = 1.1
BRIDGE_TOL = 1e-9


@dataclass(frozen=True)
class Bus:
    id: int
    load_MW: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    reactance_pu: float
    rating_MW: float
    emergency_rating_MW: float
    name: str = ""
    outage_eligible: bool = True


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min_MW: float
    p_max_MW: float
    marginal_cost: float
    kind: str = "thermal"
    name: str = ""

    @property
    def renewable(self):
        return self.kind in RENEWABLE_KINDS


@dataclass(frozen=True)
class GridSpec:
    """Physical system: buses, branches, generators and the slack bus.

    Generators of kind ``wind``/``pv`` are renewable (their availability is
    a scenario input and they can only be curtailed); ``thermal`` and
    ``hydro`` units are dispatchable.
    """

    buses: tuple
    branches: tuple
    generators: tuple
    slack_bus_id: int
    name: str = ""

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise GridError("duplicate bus ids")
        if self.slack_bus_id not in ids:
            raise GridError("slack bus {} is not a bus".format(self.slack_bus_id))
        known = set(ids)
        for k, br in enumerate(self.branches):
            if br.from_bus not in known or br.to_bus not in known:
                raise GridError("branch {} references an unknown bus".format(k))
            if br.from_bus == br.to_bus:
                raise GridError("branch {} is a self-loop".format(k))
            if not br.reactance_pu > 0:
                raise GridError("branch {} has non-positive reactance".format(k))
            if br.rating_MW <= 0 or br.emergency_rating_MW <= 0:
                raise GridError("branch {} has a non-positive rating".format(k))
        for k, g in enumerate(self.generators):
            if g.bus not in known:
                raise GridError("generator {} references an unknown bus".format(k))
            if g.kind not in GEN_KINDS:
                raise GridError("generator {} has unknown kind {!r}".format(k, g.kind))
            if g.p_min_MW > g.p_max_MW:
                raise GridError("generator {}: p_min > p_max".format(k))
        for b in self.buses:
            if b.load_MW < 0:
                raise GridError("bus {} has negative load".format(b.id))

    # index helpers ---------------------------------------------------------
    @property
    def n_buses(self):
        return len(self.buses)

    @property
    def n_branches(self):
        return len(self.branches)

    def bus_index(self):
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def dispatchable(self):
        return [g for g in self.generators if not g.renewable]

    @property
    def renewables(self):
        return [g for g in self.generators if g.renewable]

    @property
    def load_buses(self):
        """Buses with a nonzero nominal load; these carry the load features."""
        return [b for b in self.buses if b.load_MW > 0]

    def nominal_loads(self):
        return np.array([b.load_MW for b in self.buses], dtype=float)

    def ratings(self):
        return np.array([br.rating_MW for br in self.branches], dtype=float)

    def emergency_ratings(self):
        return np.array([br.emergency_rating_MW for br in self.branches], dtype=float)

    def incidence(self, which):
        """Bus-incidence matrix [n_buses x n_units] for ``dispatchable``,
        ``renewable`` or ``load`` units."""
        idx = self.bus_index()
        if which == "dispatchable":
            units = [g.bus for g in self.dispatchable]
        elif which == "renewable":
            units = [g.bus for g in self.renewables]
        elif which == "load":
            units = [b.id for b in self.load_buses]
        else:
            raise ValueError(which)
        C = np.zeros((self.n_buses, len(units)))
        for k, bus in enumerate(units):
            C[idx[bus], k] = 1.0
        return C

    def to_dict(self):
        return {
            "name": self.name,
            "slack_bus": self.slack_bus_id,
            "buses": [{"id": b.id, "load_MW": b.load_MW} for b in self.buses],
            "branches": [
                {
                    "name": br.name,
                    "from": br.from_bus,
                    "to": br.to_bus,
                    "reactance_pu": br.reactance_pu,
                    "rating_MW": br.rating_MW,
                    "emergency_rating_MW": br.emergency_rating_MW,
                    "outage_eligible": br.outage_eligible,
                }
                for br in self.branches
            ],
            "generators": [
                {
                    "name": g.name,
                    "bus": g.bus,
                    "p_min_MW": g.p_min_MW,
                    "p_max_MW": g.p_max_MW,
                    "marginal_cost": g.marginal_cost,
                    "kind": g.kind,
                }
                for g in self.generators
            ],
        }

    def content_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def grid_from_dict(data):
    try:
        factor = float(data.get("emergency_factor", DEFAULT_EMERGENCY_FACTOR))
        buses = tuple(Bus(int(b["id"]), float(b.get("load_MW", 0.0))) for b in data["buses"])
        branches = []
        for k, br in enumerate(data["branches"]):
            rating = float(br["rating_MW"])
            emerg = br.get("emergency_rating_MW")
            branches.append(
                Branch(
                    int(br["from"]),
                    int(br["to"]),
                    float(br["reactance_pu"]),
                    rating,
                    float(emerg) if emerg is not None else factor * rating,
                    str(br.get("name") or "L{}".format(k + 1)),
                    bool(br.get("outage_eligible", True)),
                )
            )
        gens = []
        for k, g in enumerate(data["generators"]):
            gens.append(
                Generator(
                    int(g["bus"]),
                    float(g.get("p_min_MW", 0.0)),
                    float(g["p_max_MW"]),
                    float(g.get("marginal_cost", 0.0)),
                    str(g.get("kind", "thermal")),
                    str(g.get("name") or "G{}".format(k + 1)),
                )
            )
        slack = int(data["slack_bus"])
    except (KeyError, TypeError, ValueError) as exc:
        raise GridError("malformed grid specification: {}".format(exc)) from exc
    return GridSpec(buses, tuple(branches), tuple(gens), slack, str(data.get("name", "")))


def load_grid(path):
    """Read a grid from a JSON file, or a bundled case by name (``case6``,
    ``ieee30``)."""
    path = str(path)
    if path in bundled_grids():
        text = resources.files("swodt.data").joinpath(path + ".json").read_text()
    else:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise GridError("cannot read grid file {}: {}".format(path, exc)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GridError("grid file is not valid JSON: {}".format(exc)) from exc
    return grid_from_dict(data)


def bundled_grids():
    return ("case6", "ieee30")


@dataclass(frozen=True, eq=False)
class DcNetwork:
    """Linear sensitivities of a grid.

    ``ptdf[m, n]`` is the MW flow on branch m per MW injected at bus n and
    withdrawn at the slack. ``lodf[m, k]`` is the fraction of branch k's
    pre-outage flow that appears on branch m after k trips.
    """

    ptdf: np.ndarray
    lodf: np.ndarray
    outage_eligible: np.ndarray
    bridges: np.ndarray
    from_idx: np.ndarray
    to_idx: np.ndarray
    slack_idx: int
    ratings: np.ndarray = field(repr=False)
    emergency_ratings: np.ndarray = field(repr=False)

    @property
    def n_branches(self):
        return self.ptdf.shape[0]

    @property
    def n_buses(self):
        return self.ptdf.shape[1]


def _connected(n, edges):
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == n


def compute_ptdf(n_buses, from_idx, to_idx, reactance, slack_idx):
    """Slack-referenced PTDF matrix [branches x buses]."""
    if not _connected(n_buses, zip(from_idx, to_idx)):
        raise GridError("network graph is disconnected; reduced admittance is singular")
    nb = len(from_idx)
    A = np.zeros((nb, n_buses))
    A[np.arange(nb), from_idx] = 1.0
    A[np.arange(nb), to_idx] = -1.0
    b = 1.0 / np.asarray(reactance, dtype=float)
    keep = np.array([i for i in range(n_buses) if i != slack_idx], dtype=int)
    Ar = A[:, keep]
    Bred = Ar.T @ (b[:, None] * Ar)
    try:
        X = np.linalg.solve(Bred, np.eye(len(keep)))
    except np.linalg.LinAlgError as exc:
        raise GridError("reduced bus admittance matrix is singular") from exc
    ptdf = np.zeros((nb, n_buses))
    ptdf[:, keep] = (b[:, None] * Ar) @ X
    return ptdf


def build_dc_network(spec):
    """Build PTDF and LODF matrices for ``spec``.

    Branches whose outage would island part of the system (bridges, where
    the self-transfer factor is 1) are flagged and excluded from the N-1
    outage set.
    """
    idx = spec.bus_index()
    from_idx = np.array([idx[br.from_bus] for br in spec.branches], dtype=int)
    to_idx = np.array([idx[br.to_bus] for br in spec.branches], dtype=int)
    x = np.array([br.reactance_pu for br in spec.branches], dtype=float)
    slack = idx[spec.slack_bus_id]
    ptdf = compute_ptdf(spec.n_buses, from_idx, to_idx, x, slack)

    # Column k: flows caused by a 1 MW transfer from from(k) to to(k).
    transfer = ptdf[:, from_idx] - ptdf[:, to_idx]
    self_factor = np.diag(transfer).copy()
    denom = 1.0 - self_factor
    bridges = np.abs(denom) < BRIDGE_TOL
    lodf = np.zeros_like(transfer)
    ok = ~bridges
    lodf[:, ok] = transfer[:, ok] / denom[ok]
    np.fill_diagonal(lodf, -1.0)
    declared = np.array([br.outage_eligible for br in spec.branches], dtype=bool)
    for arr in (ptdf, lodf, bridges):
        arr.setflags(write=False)
    eligible = declared & ~bridges
    eligible.setflags(write=False)
    return DcNetwork(
        ptdf=ptdf,
        lodf=lodf,
        outage_eligible=eligible,
        bridges=bridges,
        from_idx=from_idx,
        to_idx=to_idx,
        slack_idx=slack,
        ratings=spec.ratings(),
        emergency_ratings=spec.emergency_ratings(),
    )


def remove_branch(spec, k):
    """Return a copy of ``spec`` without branch ``k`` (N-1 re-solve oracle)."""
    branches = tuple(br for i, br in enumerate(spec.branches) if i != k)
    return GridSpec(spec.buses, branches, spec.generators, spec.slack_bus_id, spec.name)


def base_flows(net, injections):
    """Branch flows (MW) for a vector of bus injections (MW)."""
    injections = np.asarray(injections, dtype=float)
    if injections.shape[-1] != net.n_buses:
        raise GridError("injection vector has {} entries, network has {} buses".format(
            injections.shape[-1], net.n_buses))
    return injections @ net.ptdf.T


@dataclass
class Violation:
    outage: int
    branch: int
    loading_pct: float


def post_contingency_flows(net, flows):
    """Matrix [m, k] of flow on branch m after outage of branch k."""
    flows = np.asarray(flows, dtype=float)
    return flows[:, None] + net.lodf * flows[None, :]


def n1_secure(net, flows, emergency_ratings=None, islanding_insecure=False, tol=1e-9):
    """N-1 screening of a base-case flow vector.

    Returns ``(secure, violations)``; ``violations`` lists one
    :class:`Violation` per (outage, overloaded branch) pair. With
    ``islanding_insecure`` a declared-eligible bridge carrying flow counts
    as an insecure outage (reported with ``branch = -1``).
    """
    flows = np.asarray(flows, dtype=float)
    if flows.shape != (net.n_branches,):
        raise GridError("flow vector has wrong length")
    emerg = net.emergency_ratings if emergency_ratings is None else np.asarray(emergency_ratings, dtype=float)
    post = post_contingency_flows(net, flows)
    loading = np.abs(post) / emerg[:, None]
    mask = np.zeros_like(loading, dtype=bool)
    mask[:, net.outage_eligible] = True
    np.fill_diagonal(mask, False)
    bad = mask & (loading > 1.0 + tol)
    violations = [Violation(int(k), int(m), float(100.0 * loading[m, k]))
                  for k, m in sorted(zip(*np.nonzero(bad.T)))]
    if islanding_insecure:
        for k in np.flatnonzero(net.bridges):
            if abs(flows[k]) > 1e-6:
                violations.append(Violation(int(k), -1, float("inf")))
    return not violations, violations


def n1_secure_batch(net, flows, tol=1e-9):
    """Vectorized security labels for many flow vectors [n_states x n_branches]."""
    flows = np.atleast_2d(np.asarray(flows, dtype=float))
    elig = np.flatnonzero(net.outage_eligible)
    # post[s, m, k] for eligible k only
    post = flows[:, :, None] + net.lodf[None, :, elig] * flows[:, None, elig]
    loading = np.abs(post) / net.emergency_ratings[None, :, None]
    loading[:, elig, np.arange(elig.size)] = 0.0
    return ~(loading > 1.0 + tol).any(axis=(1, 2))


def bus_injections(spec, dispatch_MW, renewable_MW, load_MW):
    """Net injection per bus from dispatchable output, delivered renewable
    output and per-bus load."""
    return (spec.incidence("dispatchable") @ np.asarray(dispatch_MW, dtype=float)
            + spec.incidence("renewable") @ np.asarray(renewable_MW, dtype=float)
            - np.asarray(load_MW, dtype=float))


@dataclass
class EdLayout:
    """Variable layout of an ED LP: dispatchable outputs then curtailments."""

    n_dispatch: int
    n_renewable: int

    @property
    def dispatch(self):
        return slice(0, self.n_dispatch)

    @property
    def curtail(self):
        return slice(self.n_dispatch, self.n_dispatch + self.n_renewable)


def build_ed_lp(spec, net, renewable_MW, load_MW, cost_scale=None):
    """Single-period DC economic dispatch.

    Variables are dispatchable outputs ``g`` and renewable curtailments
    ``r_cur``; the objective is ``sum(cost * g)``. ``load_MW`` is per bus
    (all buses, spec order); ``renewable_MW`` is the available output per
    renewable unit. ``cost_scale`` optionally multiplies each dispatchable
    unit's marginal cost.
    """
    r = np.asarray(renewable_MW, dtype=float)
    d = np.asarray(load_MW, dtype=float)
    disp, ren = spec.dispatchable, spec.renewables
    if r.shape != (len(ren),) or d.shape != (spec.n_buses,):
        raise GridError("scenario dimensions do not match the grid")
    if (r < 0).any() or (d < 0).any():
        raise GridError("renewable availability and loads must be nonnegative")
    scale = np.ones(len(disp)) if cost_scale is None else np.asarray(cost_scale, dtype=float)
    if scale.shape != (len(disp),):
        raise GridError("cost_scale needs one entry per dispatchable unit")
    lp = LinearProgram()
    for g, k in zip(disp, scale):
        lp.add_variable("g_" + g.name, g.p_min_MW, g.p_max_MW, g.marginal_cost * float(k))
    for g, avail in zip(ren, r):
        lp.add_variable("rcur_" + g.name, 0.0, float(avail), 0.0)
    nd, nr = len(disp), len(ren)
    lp.add_constraint(np.r_[np.ones(nd), -np.ones(nr)], EQ, float(d.sum() - r.sum()), "balance")

    Cg = spec.incidence("dispatchable")
    Cr = spec.incidence("renewable")
    # flows = F x + f0
    F = np.hstack([net.ptdf @ Cg, -(net.ptdf @ Cr)])
    f0 = net.ptdf @ (Cr @ r - d)
    for m, br in enumerate(spec.branches):
        lp.add_constraint(F[m], LE, br.rating_MW - f0[m], "fmax_" + br.name)
        lp.add_constraint(F[m], GE, -br.rating_MW - f0[m], "fmin_" + br.name)
    return lp, EdLayout(nd, nr)
