"""Circuit graph, stimulus definitions, and the canonical PFD builder.

A netlist is a named node set with an ordered device list. Builders
mutate while assembling; once handed to the engine a netlist is treated
as immutable, so one template can back any number of concurrent runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from pfdsim.devices import DEFAULT_CONFIG, CornerSet, ModelConfig, MosfetParams, NMOS, PMOS, apply_corner

GROUND = "0"


class NetlistError(Exception):
    """Raised on malformed netlist construction (duplicate id, unknown node)."""


@dataclass(frozen=True)
class PulseSpec:
    """Trapezoidal periodic stimulus, SPICE PULSE conventions."""

    v_low: float
    v_high: float
    delay: float
    rise: float
    fall: float
    width: float
    period: float

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be > 0")
        if self.rise <= 0 or self.fall <= 0:
            raise ValueError("rise and fall must be > 0")
        if self.period <= self.rise + self.width + self.fall:
            raise ValueError("period must exceed rise + width + fall")

    def value(self, t: float) -> float:
        if t < self.delay:
            return self.v_low
        tau = (t - self.delay) % self.period
        if tau < self.rise:
            return self.v_low + (self.v_high - self.v_low) * tau / self.rise
        tau -= self.rise
        if tau < self.width:
            return self.v_high
        tau -= self.width
        if tau < self.fall:
            return self.v_high + (self.v_low - self.v_high) * tau / self.fall
        return self.v_low

    def breakpoints(self, t_stop: float) -> list[float]:
        """Waveform corner times in [0, t_stop]."""
        out = []
        k = 0
        while True:
            base = self.delay + k * self.period
            if base > t_stop:
                break
            for c in (0.0, self.rise, self.rise + self.width, self.rise + self.width + self.fall):
                t = base + c
                if 0.0 <= t <= t_stop:
                    out.append(t)
            k += 1
        return out


@dataclass(frozen=True)
class Mosfet:
    name: str
    drain: str
    gate: str
    source: str
    params: MosfetParams

    @property
    def nodes(self) -> tuple[str, ...]:
        return (self.drain, self.gate, self.source)


@dataclass(frozen=True)
class Resistor:
    name: str
    a: str
    b: str
    ohms: float

    @property
    def nodes(self) -> tuple[str, ...]:
        return (self.a, self.b)


@dataclass(frozen=True)
class Capacitor:
    name: str
    a: str
    b: str
    farads: float

    @property
    def nodes(self) -> tuple[str, ...]:
        return (self.a, self.b)


@dataclass(frozen=True)
class DcSource:
    name: str
    plus: str
    minus: str
    volts: float

    @property
    def nodes(self) -> tuple[str, ...]:
        return (self.plus, self.minus)


@dataclass(frozen=True)
class PulseSource:
    name: str
    plus: str
    minus: str
    spec: PulseSpec

    @property
    def nodes(self) -> tuple[str, ...]:
        return (self.plus, self.minus)


Device = Mosfet | Resistor | Capacitor | DcSource | PulseSource


@dataclass
class Subcircuit:
    """A device group plus the internal nodes it introduces."""

    nodes: list[str]
    devices: list[Device]


@dataclass
class Netlist:
    ground: str = GROUND
    nodes: list[str] = field(default_factory=list)
    devices: list[Device] = field(default_factory=list)
    probes: dict[str, str] = field(default_factory=dict)  # alias -> node

    def add_node(self, name: str) -> str:
        if name in self.nodes:
            raise NetlistError(f"duplicate identifier: node {name!r}")
        self.nodes.append(name)
        return name

    def add(self, device: Device) -> Device:
        if any(d.name == device.name for d in self.devices):
            raise NetlistError(f"duplicate identifier: device {device.name!r}")
        for n in device.nodes:
            if n not in self.nodes:
                raise NetlistError(f"unknown node {n!r} referenced by {device.name!r}")
        self.devices.append(device)
        return device

    def add_subcircuit(self, sub: Subcircuit) -> None:
        for n in sub.nodes:
            self.add_node(n)
        for d in sub.devices:
            self.add(d)

    def add_probe(self, alias: str, node: str) -> None:
        if node not in self.nodes:
            raise NetlistError(f"unknown node {node!r} for probe {alias!r}")
        self.probes[alias] = node

    def mosfets(self) -> list[Mosfet]:
        return [d for d in self.devices if isinstance(d, Mosfet)]

    def sources(self) -> list[DcSource | PulseSource]:
        return [d for d in self.devices if isinstance(d, (DcSource, PulseSource))]

    def validate(self) -> list[str]:
        """Return every invariant violation (empty list means valid)."""
        violations = []
        if self.ground not in self.nodes:
            violations.append("no ground node")
        seen: set[str] = set()
        for n in self.nodes:
            if n in seen:
                violations.append(f"duplicate node {n!r}")
            seen.add(n)
        for d in self.devices:
            for n in d.nodes:
                if n not in seen:
                    violations.append(f"device {d.name!r} references unknown node {n!r}")
        for d in self.devices:
            if isinstance(d, Resistor) and d.ohms <= 0:
                violations.append(f"resistor {d.name!r} must have ohms > 0")
            if isinstance(d, Capacitor) and d.farads <= 0:
                violations.append(f"capacitor {d.name!r} must have farads > 0")

        # connectivity: every non-ground node reachable from ground through
        # device terminals (each device links all of its terminals)
        if self.ground in seen:
            reach = {self.ground}
            frontier = [self.ground]
            adjacency: dict[str, set[str]] = {n: set() for n in self.nodes}
            for d in self.devices:
                ns = [n for n in d.nodes if n in adjacency]
                for n in ns:
                    adjacency[n].update(ns)
            while frontier:
                cur = frontier.pop()
                for nxt in adjacency[cur]:
                    if nxt not in reach:
                        reach.add(nxt)
                        frontier.append(nxt)
            for n in self.nodes:
                if n not in reach:
                    violations.append(f"node {n!r} not reachable from ground")

        # every gate must be tied to something that can set its voltage:
        # a source terminal, a resistor terminal, a FET drain/source, or ground
        driven: set[str] = {self.ground}
        for d in self.devices:
            if isinstance(d, (DcSource, PulseSource, Resistor)):
                driven.update(d.nodes)
            elif isinstance(d, Mosfet):
                driven.update((d.drain, d.source))
        for d in self.devices:
            if isinstance(d, Mosfet) and d.gate not in driven:
                violations.append(f"floating gate node {d.gate!r} on device {d.name!r}")
        return violations


# --------------------------------------------------------------------------
# Builders
# --------------------------------------------------------------------------

def build_nor2(
    name: str,
    out: str,
    in1: str,
    in2: str,
    p_params: MosfetParams,
    n_params: MosfetParams,
    vdd: str = "VDD",
    ground: str = GROUND,
) -> Subcircuit:
    """Static CMOS 2-input NOR: series PMOS from vdd, parallel NMOS to ground.

    The in1 PMOS sits at the supply side of the stack.
    """
    mid = f"{name}.m"
    devices = [
        Mosfet(f"{name}.p1", drain=mid, gate=in1, source=vdd, params=p_params),
        Mosfet(f"{name}.p2", drain=out, gate=in2, source=mid, params=p_params),
        Mosfet(f"{name}.n1", drain=out, gate=in1, source=ground, params=n_params),
        Mosfet(f"{name}.n2", drain=out, gate=in2, source=ground, params=n_params),
    ]
    return Subcircuit(nodes=[mid], devices=devices)


def default_pulse(frequency: float, vdd: float, delay: float) -> PulseSpec:
    """Stimulus used for PFD inputs: 50% duty, edges 1% of the period."""
    period = 1.0 / frequency
    edge = 0.01 * period
    return PulseSpec(
        v_low=0.0, v_high=vdd, delay=delay,
        rise=edge, fall=edge, width=0.5 * period - edge, period=period,
    )


def build_pfd(
    width: float = 260e-9,
    length: float = 100e-9,
    corner: CornerSet | None = None,
    load_cap: float = 1e-15,
    *,
    frequency: float = 1e9,
    offset: float = 0.0,
    frequency_b: float | None = None,
    models: ModelConfig = DEFAULT_CONFIG,
    internal_cap: float = 0.5e-15,
) -> Netlist:
    """Canonical 16-FET precharge PFD with stimulus attached.

    Inputs A and B are pulse sources; a positive offset delays B, so A
    leads. Internal sense nodes X and Y are active-low; the output stage
    is a pair of cross-coupled NOR gates (UP = NOR(X, DN), DN = NOR(Y, UP)).
    frequency_b drives B at a different rate for mismatch experiments.
    """
    if width <= 0 or length <= 0:
        raise ValueError("width and length must be > 0")
    period = 1.0 / frequency
    if frequency_b is None and abs(offset) >= period:
        raise ValueError("offset magnitude must be below one period")

    corner = corner if corner is not None else CornerSet(name="TT")
    pp = apply_corner(models.mosfet(PMOS, width, length), corner)
    np_ = apply_corner(models.mosfet(NMOS, width, length), corner)

    net = Netlist()
    net.add_node(GROUND)
    for n in ("VDD", "A", "B", "X", "Y", "UP", "DN", "X.m", "X.n", "Y.m", "Y.n"):
        net.add_node(n)

    base_delay = 0.25 * period
    delay_a = base_delay + max(0.0, -offset)
    delay_b = base_delay + max(0.0, offset)
    spec_a = default_pulse(frequency, models.vdd, delay_a)
    spec_b = default_pulse(frequency_b if frequency_b is not None else frequency,
                           models.vdd, delay_b)

    net.add(DcSource("VSUP", plus="VDD", minus=GROUND, volts=models.vdd))
    net.add(PulseSource("VA", plus="A", minus=GROUND, spec=spec_a))
    net.add(PulseSource("VB", plus="B", minus=GROUND, spec=spec_b))

    # detection core: X discharges when A rises while Y is still high,
    # Y discharges when B rises while X is still high; both precharge
    # through the series PMOS pairs whenever A and B are low together
    net.add(Mosfet("PM1", drain="X.m", gate="A", source="VDD", params=pp))
    net.add(Mosfet("PM2", drain="X", gate="B", source="X.m", params=pp))
    net.add(Mosfet("NM1", drain="X", gate="A", source="X.n", params=np_))
    net.add(Mosfet("NM2", drain="X.n", gate="Y", source=GROUND, params=np_))
    net.add(Mosfet("PM3", drain="Y.m", gate="A", source="VDD", params=pp))
    net.add(Mosfet("PM4", drain="Y", gate="B", source="Y.m", params=pp))
    net.add(Mosfet("NM3", drain="Y", gate="B", source="Y.n", params=np_))
    net.add(Mosfet("NM4", drain="Y.n", gate="X", source=GROUND, params=np_))

    # output restore stage, mutually exclusive by cross-coupling
    net.add_subcircuit(build_nor2("NORU", out="UP", in1="X", in2="DN", p_params=pp, n_params=np_))
    net.add_subcircuit(build_nor2("NORD", out="DN", in1="Y", in2="UP", p_params=pp, n_params=np_))

    # dynamic-node storage and output loading
    net.add(Capacitor("CX", a="X", b=GROUND, farads=internal_cap))
    net.add(Capacitor("CY", a="Y", b=GROUND, farads=internal_cap))
    net.add(Capacitor("CUP", a="UP", b=GROUND, farads=load_cap))
    net.add(Capacitor("CDN", a="DN", b=GROUND, farads=load_cap))

    for alias in ("A", "B", "X", "Y", "UP", "DN"):
        net.add_probe(alias, alias)
    return net


# --------------------------------------------------------------------------
# Text serialization (one device per line)
# --------------------------------------------------------------------------

def to_lines(net: Netlist) -> str:
    """Render a netlist in the line-oriented text format (see README)."""
    out = [f"ground {net.ground}"]
    for n in net.nodes:
        if n != net.ground:
            out.append(f"node {n}")
    for alias, node in net.probes.items():
        out.append(f"probe {alias} {node}")
    for d in net.devices:
        if isinstance(d, Resistor):
            out.append(f"res {d.name} {d.a} {d.b} {d.ohms!r}")
        elif isinstance(d, Capacitor):
            out.append(f"cap {d.name} {d.a} {d.b} {d.farads!r}")
        elif isinstance(d, DcSource):
            out.append(f"vdc {d.name} {d.plus} {d.minus} {d.volts!r}")
        elif isinstance(d, PulseSource):
            s = d.spec
            out.append(
                f"vpulse {d.name} {d.plus} {d.minus} "
                f"v_low={s.v_low!r} v_high={s.v_high!r} delay={s.delay!r} "
                f"rise={s.rise!r} fall={s.fall!r} width={s.width!r} period={s.period!r}"
            )
        elif isinstance(d, Mosfet):
            p = d.params
            out.append(
                f"mosfet {d.name} {d.drain} {d.gate} {d.source} "
                f"polarity={p.polarity} vth0={p.vth0!r} kprime={p.kprime!r} "
                f"lambda={p.lam!r} w={p.w!r} l={p.l!r} cgs={p.cgs!r} cgd={p.cgd!r}"
            )
        else:
            raise NetlistError(f"unserializable device {d!r}")
    return "\n".join(out) + "\n"


def _kv(fields: list[str], rename: dict[str, str] | None = None) -> dict[str, str]:
    out = {}
    for f in fields:
        k, _, v = f.partition("=")
        if not v:
            raise NetlistError(f"expected key=value, got {f!r}")
        k = (rename or {}).get(k, k)
        out[k] = v
    return out


def from_lines(text: str) -> Netlist:
    """Parse the text format produced by to_lines."""
    net = Netlist(ground="")
    probes: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *rest = line.split()
        try:
            if kind == "ground":
                net.ground = rest[0]
                net.add_node(rest[0])
            elif kind == "node":
                net.add_node(rest[0])
            elif kind == "probe":
                probes.append((rest[0], rest[1]))
            elif kind == "res":
                net.add(Resistor(rest[0], rest[1], rest[2], float(rest[3])))
            elif kind == "cap":
                net.add(Capacitor(rest[0], rest[1], rest[2], float(rest[3])))
            elif kind == "vdc":
                net.add(DcSource(rest[0], rest[1], rest[2], float(rest[3])))
            elif kind == "vpulse":
                kv = {k: float(v) for k, v in _kv(rest[3:]).items()}
                net.add(PulseSource(rest[0], rest[1], rest[2], PulseSpec(**kv)))
            elif kind == "mosfet":
                kv = _kv(rest[4:], rename={"lambda": "lam"})
                params = MosfetParams(
                    polarity=kv.pop("polarity"),
                    **{k: float(v) for k, v in kv.items()},
                )
                net.add(Mosfet(rest[0], drain=rest[1], gate=rest[2], source=rest[3],
                               params=params))
            else:
                raise NetlistError(f"unknown record kind {kind!r}")
        except (IndexError, ValueError, TypeError) as exc:
            raise NetlistError(f"line {lineno}: {exc}") from exc
    for alias, node in probes:
        net.add_probe(alias, node)
    return net


def save(net: Netlist, path: str | Path) -> None:
    Path(path).write_text(to_lines(net))


def load(path: str | Path) -> Netlist:
    return from_lines(Path(path).read_text())
