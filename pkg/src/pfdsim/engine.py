"""Modified nodal analysis engine: DC operating point and fixed-step
transient integration.

Unknowns are the non-ground node voltages plus one branch current per
voltage source. Capacitors (including the lumped MOSFET gate
capacitances) enter through backward-Euler or trapezoidal companion
models; MOSFETs are linearized each Newton iteration. Solves use dense
LU (numpy.linalg.solve) -- the targeted circuits have tens of unknowns.

A step is accepted when every node's Kirchhoff current residual is
within abstol_i + reltol * (largest branch current at that node) and
every source branch satisfies its voltage constraint to abstol_v. The
residual test runs before the first Newton update, so quiescent stretches
where the previous solution still satisfies the tolerance advance
without refactoring.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pfdsim.netlist import (
    Capacitor,
    DcSource,
    Mosfet,
    Netlist,
    PulseSource,
    Resistor,
)

BACKWARD_EULER = "backward_euler"
TRAPEZOIDAL = "trapezoidal"

_GMIN_LADDER_START = 1e-3
_MAX_STEP_HALVINGS = 8
_NEWTON_DAMP_V = 0.3  # max node-voltage move per iteration, volts


class SolverError(Exception):
    """Newton failed to converge; carries the failure location."""

    def __init__(self, message: str, time: float | None = None, node: str | None = None):
        super().__init__(message)
        self.time = time
        self.node = node


@dataclass
class SimOptions:
    reltol: float = 1e-3
    abstol_v: float = 1e-6
    abstol_i: float = 1e-9
    dt: float | None = None  # None -> min(0.5 ps, fastest period / 2000)
    t_stop: float | None = None
    integrator: str = TRAPEZOIDAL
    max_newton_iters: int = 50
    gmin: float = 1e-12

    def validate(self) -> None:
        if self.reltol <= 0:
            raise ValueError("reltol must be > 0")
        if self.abstol_v <= 0 or self.abstol_i <= 0:
            raise ValueError("absolute tolerances must be > 0")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.t_stop is not None and self.dt is not None and self.t_stop <= self.dt:
            raise ValueError("t_stop must exceed dt")
        if self.integrator not in (BACKWARD_EULER, TRAPEZOIDAL):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")
        if self.gmin < 0:
            raise ValueError("gmin must be >= 0")


@dataclass
class Waveform:
    """One scalar signal sampled on a shared, strictly increasing time axis."""

    t: np.ndarray
    v: np.ndarray

    def at(self, time: float) -> float:
        return float(np.interp(time, self.t, self.v))


@dataclass
class TransientResult:
    time: np.ndarray
    node_names: list[str]
    voltages: np.ndarray  # (n_points, n_nodes)
    source_names: list[str]
    branch_currents: np.ndarray  # (n_points, n_sources), current p->m through source
    probes: dict[str, str]
    supply_source: str | None

    def voltage(self, name: str) -> Waveform:
        node = self.probes.get(name, name)
        try:
            col = self.node_names.index(node)
        except ValueError:
            raise KeyError(f"unknown node or probe {name!r}") from None
        return Waveform(self.time, self.voltages[:, col])

    def supply_current(self) -> Waveform:
        if self.supply_source is None:
            raise SolverError("no supply source present")
        col = self.source_names.index(self.supply_source)
        # positive = current delivered into the circuit
        return Waveform(self.time, -self.branch_currents[:, col])

    def to_csv(self, target) -> None:
        """Write `t,<probes...>,i_vdd` rows at full double precision."""
        if isinstance(target, (str, Path)):
            with open(target, "w") as fh:
                self.to_csv(fh)
            return
        names = list(self.probes)
        cols = [self.voltage(n).v for n in names]
        i_vdd = self.supply_current().v if self.supply_source else None
        header = ",".join(["t"] + names + (["i_vdd"] if i_vdd is not None else []))
        target.write(header + "\n")
        for k in range(len(self.time)):
            row = [repr(float(self.time[k]))]
            row += [repr(float(c[k])) for c in cols]
            if i_vdd is not None:
                row.append(repr(float(i_vdd[k])))
            target.write(",".join(row) + "\n")

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def supply_current(result: TransientResult) -> Waveform:
    """Current delivered by the supply source (positive into the circuit)."""
    return result.supply_current()


# --------------------------------------------------------------------------
# Compilation: netlist -> index arrays
# --------------------------------------------------------------------------

@dataclass
class _Compiled:
    n_nodes: int
    naug: int
    gnd: int  # augmented index of the ground slot
    node_names: list[str]
    keep: np.ndarray  # indices kept in the reduced system
    node_rows: np.ndarray  # augmented indices of node equations
    branch_rows: np.ndarray  # augmented indices of source rows
    g_static: np.ndarray  # resistor + gmin + source-pattern stamps
    cap_pattern: np.ndarray  # capacitance stamps, scaled by a0 per step
    # capacitors
    c_a: np.ndarray
    c_b: np.ndarray
    c_val: np.ndarray
    # resistors
    r_a: np.ndarray
    r_b: np.ndarray
    r_g: np.ndarray
    # mosfets
    m_d: np.ndarray
    m_g: np.ndarray
    m_s: np.ndarray
    m_beta: np.ndarray
    m_vth: np.ndarray
    m_lam: np.ndarray
    m_sign: np.ndarray
    m_jflat: np.ndarray  # flat matrix indices (6 * n_mos)
    sources: list[DcSource | PulseSource]
    s_p: np.ndarray
    s_m: np.ndarray
    diag: np.ndarray  # flat indices of node diagonal entries (for gmin)
    supply: str | None = None


def _compile(net: Netlist, gmin: float) -> _Compiled:
    violations = net.validate()
    if violations:
        raise SolverError("invalid netlist: " + "; ".join(violations))

    node_names = [n for n in net.nodes if n != net.ground]
    n_nodes = len(node_names)
    gnd = n_nodes
    index = {name: i for i, name in enumerate(node_names)}
    index[net.ground] = gnd

    sources = net.sources()
    n_src = len(sources)
    naug = n_nodes + 1 + n_src

    g_static = np.zeros((naug, naug))
    cap_pattern = np.zeros((naug, naug))

    def quad(mat, a, b, val):
        mat[a, a] += val
        mat[b, b] += val
        mat[a, b] -= val
        mat[b, a] -= val

    r_a, r_b, r_g = [], [], []
    c_a, c_b, c_val = [], [], []
    m_list: list[Mosfet] = []
    for d in net.devices:
        if isinstance(d, Resistor):
            a, b = index[d.a], index[d.b]
            quad(g_static, a, b, 1.0 / d.ohms)
            r_a.append(a)
            r_b.append(b)
            r_g.append(1.0 / d.ohms)
        elif isinstance(d, Capacitor):
            a, b = index[d.a], index[d.b]
            quad(cap_pattern, a, b, d.farads)
            c_a.append(a)
            c_b.append(b)
            c_val.append(d.farads)
        elif isinstance(d, Mosfet):
            m_list.append(d)
            # lumped gate capacitances become ordinary capacitors
            for cval, other in ((d.params.cgs, d.source), (d.params.cgd, d.drain)):
                if cval > 0:
                    a, b = index[d.gate], index[other]
                    quad(cap_pattern, a, b, cval)
                    c_a.append(a)
                    c_b.append(b)
                    c_val.append(cval)

    supply = None
    s_p, s_m = [], []
    for j, src in enumerate(sources):
        row = n_nodes + 1 + j
        p, m = index[src.plus], index[src.minus]
        g_static[p, row] += 1.0
        g_static[m, row] -= 1.0
        g_static[row, p] += 1.0
        g_static[row, m] -= 1.0
        s_p.append(p)
        s_m.append(m)
        if supply is None and isinstance(src, DcSource):
            supply = src.name

    node_rows = np.arange(n_nodes)
    g_static[node_rows, node_rows] += gmin

    m_d = np.array([index[m.drain] for m in m_list], dtype=np.intp)
    m_g = np.array([index[m.gate] for m in m_list], dtype=np.intp)
    m_s = np.array([index[m.source] for m in m_list], dtype=np.intp)
    jrows = np.concatenate([m_d, m_d, m_d, m_s, m_s, m_s]) if m_list else np.zeros(0, np.intp)
    jcols = np.concatenate([m_g, m_d, m_s, m_g, m_d, m_s]) if m_list else np.zeros(0, np.intp)

    keep = np.array([i for i in range(naug) if i != gnd], dtype=np.intp)
    return _Compiled(
        n_nodes=n_nodes,
        naug=naug,
        gnd=gnd,
        node_names=node_names,
        keep=keep,
        node_rows=node_rows,
        branch_rows=np.arange(n_nodes + 1, naug, dtype=np.intp),
        g_static=g_static,
        cap_pattern=cap_pattern,
        c_a=np.array(c_a, dtype=np.intp),
        c_b=np.array(c_b, dtype=np.intp),
        c_val=np.array(c_val),
        r_a=np.array(r_a, dtype=np.intp),
        r_b=np.array(r_b, dtype=np.intp),
        r_g=np.array(r_g),
        m_d=m_d,
        m_g=m_g,
        m_s=m_s,
        m_beta=np.array([m.params.beta for m in m_list]),
        m_vth=np.array([abs(m.params.vth0) for m in m_list]),
        m_lam=np.array([m.params.lam for m in m_list]),
        m_sign=np.array([1.0 if m.params.polarity == "nmos" else -1.0 for m in m_list]),
        m_jflat=(jrows * naug + jcols),
        sources=sources,
        s_p=np.array(s_p, dtype=np.intp),
        s_m=np.array(s_m, dtype=np.intp),
        diag=node_rows * naug + node_rows,
        supply=supply,
    )


def _mosfet_eval(c: _Compiled, x: np.ndarray):
    """Vectorized level-1 evaluation: currents and conductances at x.

    With vov clamped at zero and vmin = min(vds, vov), one polynomial
    covers cutoff, triode and saturation:
        i   = beta * vmin * (vov - vmin/2) * clm
        gm  = beta * vmin * clm
        gds = beta * (max(vov - vds, 0) * clm + poly * lambda)
    which reduces to the familiar per-region forms.
    """
    vg = x[c.m_g]
    vd = x[c.m_d]
    vs = x[c.m_s]
    vgs = c.m_sign * (vg - vs)
    vds = c.m_sign * (vd - vs)
    swap = vds < 0.0
    vds_c = np.abs(vds)
    vov = np.where(swap, vgs - vds, vgs) - c.m_vth
    np.maximum(vov, 0.0, out=vov)
    vmin = np.minimum(vds_c, vov)
    poly = vmin * (vov - 0.5 * vmin)
    clm = 1.0 + c.m_lam * vds_c
    bclm = c.m_beta * clm
    i_core = bclm * poly
    gm_core = bclm * vmin
    gds_core = bclm * np.maximum(vov - vds_c, 0.0) + c.m_beta * c.m_lam * poly
    flip = np.where(swap, -1.0, 1.0)
    ids = (c.m_sign * flip) * i_core
    gm = flip * gm_core
    gds = np.where(swap, gm_core + gds_core, gds_core)
    return ids, gm, gds


def _source_values(c: _Compiled, t: float) -> np.ndarray:
    return np.array([
        src.volts if isinstance(src, DcSource) else src.spec.value(t)
        for src in c.sources
    ])


class _System:
    """One linearized time point: base matrix plus companion/source rhs."""

    def __init__(self, c: _Compiled, a_lin: np.ndarray, rhs: np.ndarray,
                 cap_geq: np.ndarray | None, cap_ieq: np.ndarray | None):
        self.c = c
        self.a_lin = a_lin
        self.rhs = rhs
        self.cap_geq = cap_geq
        self.cap_ieq = cap_ieq
        self._mos = None  # (ids, gm, gds) at the last residual point

    def residual(self, x: np.ndarray):
        c = self.c
        f = self.a_lin @ x - self.rhs
        scale = np.zeros(c.naug)
        self._mos = None
        if len(c.m_d):
            self._mos = _mosfet_eval(c, x)
            ids = self._mos[0]
            np.add.at(f, c.m_d, ids)
            np.add.at(f, c.m_s, -ids)
            aids = np.abs(ids)
            np.maximum.at(scale, c.m_d, aids)
            np.maximum.at(scale, c.m_s, aids)
        if len(c.r_a):
            ir = np.abs(c.r_g * (x[c.r_a] - x[c.r_b]))
            np.maximum.at(scale, c.r_a, ir)
            np.maximum.at(scale, c.r_b, ir)
        if self.cap_geq is not None and len(c.c_a):
            icap = np.abs(self.cap_geq * (x[c.c_a] - x[c.c_b]) - self.cap_ieq)
            np.maximum.at(scale, c.c_a, icap)
            np.maximum.at(scale, c.c_b, icap)
        if len(c.branch_rows):
            ib = np.abs(x[c.branch_rows])
            np.maximum.at(scale, c.s_p, ib)
            np.maximum.at(scale, c.s_m, ib)
        return f, scale

    def converged(self, f: np.ndarray, scale: np.ndarray, opt: SimOptions) -> bool:
        c = self.c
        tol = opt.abstol_i + opt.reltol * scale[c.node_rows]
        if np.any(np.abs(f[c.node_rows]) > tol):
            return False
        return not np.any(np.abs(f[c.branch_rows]) > opt.abstol_v)

    def worst_node(self, f: np.ndarray, scale: np.ndarray, opt: SimOptions) -> str:
        c = self.c
        ratios = np.abs(f[c.node_rows]) / (opt.abstol_i + opt.reltol * scale[c.node_rows])
        return c.node_names[int(np.argmax(ratios))]

    def solve(self, x0: np.ndarray, opt: SimOptions):
        """Newton iteration with per-node voltage damping.

        Returns (x, converged, f, scale); f/scale evaluated at x.
        """
        c = self.c
        x = x0.copy()
        f, scale = self.residual(x)
        for _ in range(opt.max_newton_iters):
            if self.converged(f, scale, opt):
                return x, True, f, scale
            jac = self.a_lin.copy()
            if len(c.m_d):
                _, gm, gds = self._mos  # evaluated at x by the last residual()
                vals = np.concatenate([gm, gds, -(gm + gds), -gm, -gds, gm + gds])
                np.add.at(jac.reshape(-1), c.m_jflat, vals)
            jr = jac[np.ix_(c.keep, c.keep)]
            try:
                dx = np.linalg.solve(jr, -f[c.keep])
            except np.linalg.LinAlgError:
                return x, False, f, scale
            vmax = np.max(np.abs(dx[: c.n_nodes])) if c.n_nodes else 0.0
            if vmax > _NEWTON_DAMP_V:
                dx *= _NEWTON_DAMP_V / vmax
            x[c.keep] += dx
            f, scale = self.residual(x)
        return x, self.converged(f, scale, opt), f, scale


def _dc_system(c: _Compiled, t: float, extra_gmin: float = 0.0) -> _System:
    a_lin = c.g_static.copy()
    if extra_gmin:
        a_lin.reshape(-1)[c.diag] += extra_gmin
    rhs = np.zeros(c.naug)
    rhs[c.branch_rows] = _source_values(c, t)
    return _System(c, a_lin, rhs, None, None)


def _dc_solve(c: _Compiled, opt: SimOptions, t: float = 0.0) -> np.ndarray:
    x0 = np.zeros(c.naug)
    sys0 = _dc_system(c, t)
    x, ok, f, scale = sys0.solve(x0, opt)
    if ok:
        return x
    # gmin stepping: heavy extra shunt first, relaxed by a decade per pass,
    # finishing with a pass at the bare target gmin (already in g_static)
    ladder = []
    g = _GMIN_LADDER_START
    while g > max(opt.gmin, 1e-15):
        ladder.append(g)
        g /= 10.0
    ladder.append(0.0)
    x = np.zeros(c.naug)
    for g in ladder:
        sys_g = _dc_system(c, t, extra_gmin=g)
        x, ok, f, scale = sys_g.solve(x, opt)
        if not ok:
            worst = sys_g.worst_node(f, scale, opt)
            raise SolverError(
                "DC operating point did not converge "
                f"(gmin step {g:g} S, worst node {worst!r})",
                time=t,
                node=worst,
            )
    return x


def dc_operating_point(netlist: Netlist, options: SimOptions | None = None) -> dict[str, float]:
    """Newton DC solve; returns node-name -> voltage (ground included)."""
    opt = options or SimOptions()
    opt.validate()
    c = _compile(netlist, opt.gmin)
    x = _dc_solve(c, opt)
    out = {name: float(x[i]) for i, name in enumerate(c.node_names)}
    out[netlist.ground] = 0.0
    return out


def _resolve_dt(net: Netlist, opt: SimOptions) -> float:
    if opt.dt is not None:
        return opt.dt
    periods = [d.spec.period for d in net.devices if isinstance(d, PulseSource)]
    if periods:
        return min(0.5e-12, min(periods) / 2000.0)
    if opt.t_stop is None:
        raise ValueError("t_stop is required")
    return opt.t_stop / 1000.0


def _time_axis(net: Netlist, dt: float, t_stop: float) -> np.ndarray:
    n = int(np.floor(t_stop / dt + 1e-9))
    points = [np.arange(n + 1) * dt, np.array([t_stop])]
    for d in net.devices:
        if isinstance(d, PulseSource):
            points.append(np.array(d.spec.breakpoints(t_stop)))
    t = np.unique(np.concatenate(points))
    t = t[(t >= 0.0) & (t <= t_stop)]
    # merge points closer than dt * 1e-6 (keeps companion steps well scaled)
    eps = dt * 1e-6
    mask = np.concatenate([[True], np.diff(t) > eps])
    t = t[mask]
    if t[-1] < t_stop - eps:
        t = np.append(t, t_stop)
    return t


def transient(
    netlist: Netlist,
    options: SimOptions,
    initial_voltages: dict[str, float] | None = None,
) -> TransientResult:
    """Integrate from the DC operating point (or explicit initial node
    voltages) to t_stop. Pulse-source corner times are exact time points;
    a non-convergent step is bisected up to 8 times before raising."""
    opt = options
    opt.validate()
    if opt.t_stop is None:
        raise ValueError("t_stop is required")
    c = _compile(netlist, opt.gmin)
    dt = _resolve_dt(netlist, opt)
    if opt.t_stop <= dt:
        raise ValueError("t_stop must exceed dt")
    axis = _time_axis(netlist, dt, opt.t_stop)

    if initial_voltages is None:
        x = _dc_solve(c, opt, t=float(axis[0]))
    else:
        x = np.zeros(c.naug)
        for name, v in initial_voltages.items():
            if name == netlist.ground:
                continue
            x[c.node_names.index(name)] = v

    times = [float(axis[0])]
    rows = [x.copy()]
    i_cap = np.zeros(len(c.c_a))
    a0_of = (lambda h: 1.0 / h) if opt.integrator == BACKWARD_EULER else (lambda h: 2.0 / h)
    trap = opt.integrator == TRAPEZOIDAL

    lin_cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def attempt(x_prev, i_prev, t0, t1):
        h = t1 - t0
        cached = lin_cache.get(h)
        if cached is None:
            a0 = a0_of(h)
            cached = (c.g_static + a0 * c.cap_pattern, a0 * c.c_val)
            lin_cache[h] = cached
        a_lin, geq = cached
        rhs = np.zeros(c.naug)
        rhs[c.branch_rows] = _source_values(c, t1)
        if len(c.c_a):
            ieq = geq * (x_prev[c.c_a] - x_prev[c.c_b])
            if trap:
                ieq = ieq + i_prev
            np.add.at(rhs, c.c_a, ieq)
            np.add.at(rhs, c.c_b, -ieq)
        else:
            ieq = np.zeros(0)
        sys_t = _System(c, a_lin, rhs, geq, ieq)
        x_new, ok, f, scale = sys_t.solve(x_prev, opt)
        if not ok:
            return None, sys_t.worst_node(f, scale, opt)
        i_new = geq * (x_new[c.c_a] - x_new[c.c_b]) - ieq if len(c.c_a) else i_prev
        return (x_new, i_new), None

    def advance(x_prev, i_prev, t0, t1, depth):
        state, worst = attempt(x_prev, i_prev, t0, t1)
        if state is not None:
            times.append(t1)
            rows.append(state[0].copy())
            return state
        if depth >= _MAX_STEP_HALVINGS:
            raise SolverError(
                f"transient Newton failed at t = {t1:.6e} s (worst node {worst!r})",
                time=t1,
                node=worst,
            )
        tm = 0.5 * (t0 + t1)
        mid = advance(x_prev, i_prev, t0, tm, depth + 1)
        return advance(mid[0], mid[1], tm, t1, depth + 1)

    state = (x, i_cap)
    for k in range(1, len(axis)):
        state = advance(state[0], state[1], float(axis[k - 1]), float(axis[k]), 0)

    data = np.array(rows)
    return TransientResult(
        time=np.array(times),
        node_names=c.node_names,
        voltages=data[:, : c.n_nodes],
        source_names=[s.name for s in c.sources],
        branch_currents=data[:, c.n_nodes + 1 :],
        probes=dict(netlist.probes),
        supply_source=c.supply,
    )


def kcl_residual_ratio(netlist: Netlist, result: TransientResult,
                       options: SimOptions) -> float:
    """Re-evaluate KCL at every accepted point of a DC-started run.

    Returns the worst ratio |residual| / tolerance over all nodes and
    points (<= 1 means the whole run is within tolerance). Capacitor
    companion state is replayed from the stored solution.
    """
    opt = options
    c = _compile(netlist, opt.gmin)
    n_pts = len(result.time)
    x_all = np.hstack([
        result.voltages,
        np.zeros((n_pts, 1)),
        result.branch_currents,
    ])
    worst = 0.0
    sys0 = _dc_system(c, float(result.time[0]))
    f, scale = sys0.residual(x_all[0])
    tol = opt.abstol_i + opt.reltol * scale[c.node_rows]
    worst = max(worst, float(np.max(np.abs(f[c.node_rows]) / tol)))
    i_prev = np.zeros(len(c.c_a))
    trap = opt.integrator == TRAPEZOIDAL
    for k in range(1, n_pts):
        h = float(result.time[k] - result.time[k - 1])
        a0 = (1.0 / h) if opt.integrator == BACKWARD_EULER else (2.0 / h)
        a_lin = c.g_static + a0 * c.cap_pattern
        rhs = np.zeros(c.naug)
        rhs[c.branch_rows] = _source_values(c, float(result.time[k]))
        geq = a0 * c.c_val
        ieq = geq * (x_all[k - 1][c.c_a] - x_all[k - 1][c.c_b])
        if trap:
            ieq = ieq + i_prev
        if len(c.c_a):
            np.add.at(rhs, c.c_a, ieq)
            np.add.at(rhs, c.c_b, -ieq)
        sys_t = _System(c, a_lin, rhs, geq, ieq)
        f, scale = sys_t.residual(x_all[k])
        tol = opt.abstol_i + opt.reltol * scale[c.node_rows]
        worst = max(worst, float(np.max(np.abs(f[c.node_rows]) / tol)))
        i_prev = geq * (x_all[k][c.c_a] - x_all[k][c.c_b]) - ieq
    return worst
