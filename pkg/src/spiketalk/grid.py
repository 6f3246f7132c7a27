"""DC microgrid model: droop-sourced RC nodes coupled by resistive tie lines.

Each node k carries a bus capacitance C_k, an optional constant-resistance
load and (while active) a droop converter modelled as a virtual resistance
R_d,k behind the reference voltage V_ref.  Node voltages obey

    C_k dv_k/dt = (V_ref - v_k)/R_d,k - v_k/R_load,k - (Y v)_k

where Y is the line Laplacian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class TopologyError(ValueError):
    """Invalid or disconnected network description."""


class SingularSystemError(RuntimeError):
    """The steady-state conductance matrix cannot be inverted."""


class IntegrationError(RuntimeError):
    """A time step produced a non-finite node voltage."""

    def __init__(self, node: int, time: float):
        self.node = node
        self.time = time
        super().__init__(f"integration blow-up at node {node}, t = {time!r} s")


@dataclass(frozen=True)
class NodeParams:
    id: int
    capacitance: float
    load_resistance: Optional[float] = None
    rating: float = 1.0

    def __post_init__(self):
        if not self.capacitance > 0:
            raise TopologyError(f"node {self.id}: capacitance must be > 0")
        if self.load_resistance is not None and not self.load_resistance > 0:
            raise TopologyError(f"node {self.id}: load_resistance must be > 0")
        if not self.rating > 0:
            raise TopologyError(f"node {self.id}: rating must be > 0")


@dataclass(frozen=True)
class LineParams:
    a: int
    b: int
    resistance: float

    def __post_init__(self):
        if self.a == self.b:
            raise TopologyError(f"line {self.a}-{self.b}: endpoints must differ")
        if not self.resistance > 0:
            raise TopologyError(f"line {self.a}-{self.b}: resistance must be > 0")

    @property
    def endpoints(self) -> frozenset:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class NetworkTopology:
    """Nodes (ids 1..n, in order) and the tie lines between them."""

    nodes: tuple
    lines: tuple

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "lines", tuple(self.lines))
        ids = [nd.id for nd in self.nodes]
        if not ids:
            raise TopologyError("topology has no nodes")
        if ids != list(range(1, len(ids) + 1)):
            raise TopologyError(f"node ids must be 1..{len(ids)} in order, got {ids}")
        seen = set()
        for ln in self.lines:
            for end in (ln.a, ln.b):
                if not 1 <= end <= len(ids):
                    raise TopologyError(
                        f"line {ln.a}-{ln.b} references node {end} of {len(ids)}")
            if ln.endpoints in seen:
                raise TopologyError(f"duplicate line between nodes {ln.a} and {ln.b}")
            seen.add(ln.endpoints)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def capacitances(self) -> np.ndarray:
        return np.array([nd.capacitance for nd in self.nodes], dtype=float)

    @property
    def load_conductances(self) -> np.ndarray:
        return np.array([0.0 if nd.load_resistance is None else 1.0 / nd.load_resistance
                         for nd in self.nodes])

    @property
    def ratings(self) -> np.ndarray:
        return np.array([nd.rating for nd in self.nodes], dtype=float)

    def components(self) -> list:
        """Connected components as sorted lists of node ids."""
        adj = {nd.id: set() for nd in self.nodes}
        for ln in self.lines:
            adj[ln.a].add(ln.b)
            adj[ln.b].add(ln.a)
        comps, unseen = [], set(adj)
        while unseen:
            stack = [min(unseen)]
            comp = set()
            while stack:
                k = stack.pop()
                if k in comp:
                    continue
                comp.add(k)
                stack.extend(adj[k] - comp)
            unseen -= comp
            comps.append(sorted(comp))
        return sorted(comps)

    def with_load(self, node_id: int, load_resistance: Optional[float]) -> "NetworkTopology":
        nodes = list(self.nodes)
        nodes[node_id - 1] = replace(nodes[node_id - 1], load_resistance=load_resistance)
        return replace(self, nodes=tuple(nodes))


def ring_topology(capacitances: Sequence[float], resistances: Sequence[float],
                  load_resistance: Optional[float] = None,
                  ratings: Optional[Sequence[float]] = None) -> NetworkTopology:
    """Ring 1-2, 2-3, ..., n-1 with ``resistances[k]`` on the line leaving node k+1."""
    n = len(capacitances)
    if len(resistances) != n:
        raise TopologyError("a ring needs as many lines as nodes")
    ratings = [1.0] * n if ratings is None else list(ratings)
    nodes = [NodeParams(k + 1, float(c), load_resistance, float(ratings[k]))
             for k, c in enumerate(capacitances)]
    lines = [LineParams(k + 1, (k + 1) % n + 1, float(r)) for k, r in enumerate(resistances)]
    return NetworkTopology(tuple(nodes), tuple(lines))


def build_admittance(topology: NetworkTopology) -> np.ndarray:
    """Line Laplacian in siemens.

    Raises
    ------
    TopologyError
        If the line graph does not connect every node; the message lists
        each component.
    """
    comps = topology.components()
    if len(comps) > 1:
        raise TopologyError(f"topology is disconnected; components: {comps}")
    n = topology.n
    Y = np.zeros((n, n))
    for ln in topology.lines:
        i, j = ln.a - 1, ln.b - 1
        g = 1.0 / ln.resistance
        Y[i, j] -= g
        Y[j, i] -= g
        Y[i, i] += g
        Y[j, j] += g
    return Y


@dataclass(frozen=True)
class GridState:
    time: float
    voltages: np.ndarray
    source_currents: np.ndarray
    active: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.array(self.voltages, dtype=float)
        i = np.array(self.source_currents, dtype=float)
        act = np.ones(v.shape, dtype=bool) if self.active is None \
            else np.array(self.active, dtype=bool)
        i[~act] = 0.0
        for arr in (v, i, act):
            arr.setflags(write=False)
        object.__setattr__(self, "voltages", v)
        object.__setattr__(self, "source_currents", i)
        object.__setattr__(self, "active", act)

    @property
    def n(self) -> int:
        return self.voltages.size


def _gain_array(gains) -> np.ndarray:
    return np.asarray(getattr(gains, "gains", gains), dtype=float)


def droop_currents(voltages, gains, active, v_ref: float) -> np.ndarray:
    """Virtual-resistance droop injection, zero for inactive sources."""
    i = (v_ref - np.asarray(voltages, dtype=float)) / _gain_array(gains)
    return np.where(active, i, 0.0)


def make_state(time: float, voltages, gains, active, v_ref: float) -> GridState:
    return GridState(time, voltages, droop_currents(voltages, gains, active, v_ref), active)


def grid_derivatives(state: GridState, gains, topology: NetworkTopology, Y: np.ndarray,
                     v_ref: float) -> np.ndarray:
    """dv/dt in V/s for every node."""
    v = state.voltages
    src = droop_currents(v, gains, state.active, v_ref)
    net = src - topology.load_conductances * v - Y @ v
    return net / topology.capacitances


def step(state: GridState, gains, dt: float, topology: NetworkTopology, Y: np.ndarray,
         v_ref: float) -> GridState:
    """One classical RK4 step of ``grid_derivatives``."""
    if not dt > 0:
        raise ValueError("dt must be > 0")

    def f(v):
        return grid_derivatives(GridState(state.time, v, np.zeros_like(v), state.active),
                                gains, topology, Y, v_ref)

    v0 = state.voltages
    k1 = f(v0)
    k2 = f(v0 + 0.5 * dt * k1)
    k3 = f(v0 + 0.5 * dt * k2)
    k4 = f(v0 + dt * k3)
    v1 = v0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    t1 = state.time + dt
    _check_finite(v1, t1)
    return make_state(t1, v1, gains, state.active, v_ref)


def _check_finite(v: np.ndarray, t: float) -> None:
    bad = ~np.isfinite(v)
    if bad.any():
        raise IntegrationError(int(np.argmax(bad)) + 1, t)


class LinearRK4:
    """RK4 specialised to the affine grid ODE dv/dt = A v + b.

    One RK4 step of an affine system is itself affine, v' = P v + q, so the
    four stage evaluations collapse into one matrix-vector product.  The
    propagator must be rebuilt whenever gains, loads, V_ref or the active
    set change.
    """

    def __init__(self, topology: NetworkTopology, Y: np.ndarray, gains, active,
                 v_ref: float, dt: float):
        if not dt > 0:
            raise ValueError("dt must be > 0")
        g_src = np.where(active, 1.0 / _gain_array(gains), 0.0)
        cinv = 1.0 / topology.capacitances
        A = -cinv[:, None] * (np.diag(g_src + topology.load_conductances) + Y)
        b = cinv * g_src * v_ref
        n = A.shape[0]
        hA = dt * A
        eye = np.eye(n)
        hA2 = hA @ hA
        hA3 = hA2 @ hA
        self.P = eye + hA + hA2 / 2.0 + hA3 / 6.0 + hA3 @ hA / 24.0
        self.q = dt * (eye + hA / 2.0 + hA2 / 6.0 + hA3 / 24.0) @ b

    def advance(self, v: np.ndarray) -> np.ndarray:
        return self.P @ v + self.q


def conductance_matrix(topology: NetworkTopology, Y: np.ndarray, gains, active) -> np.ndarray:
    g_src = np.where(active, 1.0 / _gain_array(gains), 0.0)
    return np.diag(g_src + topology.load_conductances) + Y


def steady_state_solve(topology: NetworkTopology, gains, v_ref: float, active=None,
                       Y: Optional[np.ndarray] = None) -> GridState:
    """Equilibrium voltages from the nodal conductance equations.

    Raises
    ------
    SingularSystemError
        When no active source and no load ties the network to ground.
    """
    n = topology.n
    active = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    Y = build_admittance(topology) if Y is None else Y
    G = conductance_matrix(topology, Y, gains, active)
    g_src = np.where(active, 1.0 / _gain_array(gains), 0.0)
    if not (g_src.any() or topology.load_conductances.any()):
        raise SingularSystemError("no active source and no load: nodal matrix is singular")
    if np.linalg.cond(G) > 1e14:
        raise SingularSystemError("nodal conductance matrix is singular")
    v = np.linalg.solve(G, g_src * v_ref)
    return make_state(0.0, v, gains, active, v_ref)


def kcl_residual(state: GridState, topology: NetworkTopology, Y: np.ndarray) -> np.ndarray:
    """Net current (A) into each node; zero at equilibrium."""
    v = state.voltages
    return state.source_currents - topology.load_conductances * v - Y @ v


def apply_outage(state: GridState, node_id: int, gains, v_ref: float) -> GridState:
    """Disconnect the droop source at ``node_id``; bus C and load stay."""
    idx = node_id - 1
    if not 0 <= idx < state.n:
        raise KeyError(f"unknown node {node_id}")
    if not state.active[idx]:
        logger.warning("node %d already out; outage ignored", node_id)
        return state
    active = state.active.copy()
    active[idx] = False
    return make_state(state.time, state.voltages, gains, active, v_ref)
