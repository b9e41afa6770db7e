"""Square-law (level-1) MOSFET model with process-corner scaling.

The model covers cutoff, triode and saturation with channel-length
modulation, and supplies the analytic small-signal conductances the
Newton solver needs.  Source/drain are treated symmetrically: a negative
vds is evaluated with the terminals exchanged, which keeps the drain
current a continuous (C1) function of the terminal voltages.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

NMOS = "nmos"
PMOS = "pmos"

# Gate width at which the calibration's cgs/cgd values apply; instantiated
# devices scale gate capacitance linearly with width, as a real process does.
CAP_REF_WIDTH = 260e-9


@dataclass(frozen=True)
class MosfetParams:
    """Device parameters for one transistor instance (SI units)."""

    polarity: str  # "nmos" | "pmos"
    vth0: float  # threshold voltage, V (negative for pmos)
    kprime: float  # transconductance parameter mu*Cox, A/V^2
    lam: float  # channel-length modulation, 1/V
    w: float  # gate width, m
    l: float  # gate length, m
    cgs: float = 0.0  # lumped gate-source capacitance, F
    cgd: float = 0.0  # lumped gate-drain capacitance, F

    def __post_init__(self):
        if self.polarity not in (NMOS, PMOS):
            raise ValueError(f"unknown polarity {self.polarity!r}")
        if self.w <= 0 or self.l <= 0:
            raise ValueError("w and l must be > 0")
        if self.kprime <= 0:
            raise ValueError("kprime must be > 0")
        if self.lam < 0 or self.cgs < 0 or self.cgd < 0:
            raise ValueError("lam, cgs, cgd must be >= 0")
        if self.polarity == NMOS and self.vth0 <= 0:
            raise ValueError("nmos vth0 must be > 0")
        if self.polarity == PMOS and self.vth0 >= 0:
            raise ValueError("pmos vth0 must be < 0")

    @property
    def beta(self) -> float:
        """kprime * w / l, the square-law current prefactor."""
        return self.kprime * self.w / self.l


@dataclass(frozen=True)
class CornerSet:
    """Multiplicative process-corner modifiers per polarity."""

    name: str  # TT | FF | SS | FS | SF
    vth_scale_n: float = 1.0
    vth_scale_p: float = 1.0
    k_scale_n: float = 1.0
    k_scale_p: float = 1.0

    def __post_init__(self):
        for s in (self.vth_scale_n, self.vth_scale_p, self.k_scale_n, self.k_scale_p):
            if s <= 0:
                raise ValueError("corner scale factors must be > 0")


def _core_current(beta: float, vth: float, lam: float, vgs: float, vds: float) -> float:
    """NMOS-convention drain current for vds >= 0 (vth > 0)."""
    vov = vgs - vth
    if vov <= 0.0:
        return 0.0
    if vds < vov:
        return beta * (vov * vds - 0.5 * vds * vds) * (1.0 + lam * vds)
    return 0.5 * beta * vov * vov * (1.0 + lam * vds)


def _core_conductances(
    beta: float, vth: float, lam: float, vgs: float, vds: float
) -> tuple[float, float]:
    """(d/dvgs, d/dvds) of _core_current for vds >= 0."""
    vov = vgs - vth
    if vov <= 0.0:
        return 0.0, 0.0
    clm = 1.0 + lam * vds
    if vds < vov:
        gm = beta * vds * clm
        gds = beta * ((vov - vds) * clm + (vov * vds - 0.5 * vds * vds) * lam)
    else:
        gm = beta * vov * clm
        gds = 0.5 * beta * vov * vov * lam
    return gm, gds


def mosfet_current(p: MosfetParams, vgs: float, vds: float) -> float:
    """Drain current in amperes for the given gate-source/drain-source bias.

    PMOS devices are computed by sign reflection; a reversed channel
    (vds < 0 after reflection) is evaluated with drain and source
    exchanged, so the result is defined and continuous for all finite
    inputs.
    """
    sign = 1.0 if p.polarity == NMOS else -1.0
    vth = abs(p.vth0)
    vgs_c = sign * vgs
    vds_c = sign * vds
    if vds_c >= 0.0:
        return sign * _core_current(p.beta, vth, p.lam, vgs_c, vds_c)
    # channel reversed: the nominal drain acts as source
    return -sign * _core_current(p.beta, vth, p.lam, vgs_c - vds_c, -vds_c)


def mosfet_conductances(p: MosfetParams, vgs: float, vds: float) -> tuple[float, float]:
    """Analytic (gm, gds) = (dI/dvgs, dI/dvds), region-consistent with
    mosfet_current. The double sign flip makes the expressions identical
    for both polarities."""
    vth = abs(p.vth0)
    sign = 1.0 if p.polarity == NMOS else -1.0
    vgs_c = sign * vgs
    vds_c = sign * vds
    if vds_c >= 0.0:
        return _core_conductances(p.beta, vth, p.lam, vgs_c, vds_c)
    gm_r, gds_r = _core_conductances(p.beta, vth, p.lam, vgs_c - vds_c, -vds_c)
    return -gm_r, gm_r + gds_r


def apply_corner(p: MosfetParams, c: CornerSet) -> MosfetParams:
    """Return a copy of p with vth0 and kprime scaled for the corner."""
    if p.polarity == NMOS:
        vth_scale, k_scale = c.vth_scale_n, c.k_scale_n
    else:
        vth_scale, k_scale = c.vth_scale_p, c.k_scale_p
    return replace(p, vth0=p.vth0 * vth_scale, kprime=p.kprime * k_scale)


# --------------------------------------------------------------------------
# Calibration: process defaults and corner table
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ProcessParams:
    """Per-polarity process parameters, independent of device geometry."""

    vth0: float
    kprime: float
    lam: float
    cgs: float
    cgd: float


@dataclass(frozen=True)
class ModelConfig:
    """Full device calibration: supply, both polarities, corner scales."""

    vdd: float = 1.2
    nmos: ProcessParams = ProcessParams(vth0=0.35, kprime=200e-6, lam=0.1, cgs=1e-16, cgd=1e-16)
    pmos: ProcessParams = ProcessParams(vth0=-0.35, kprime=80e-6, lam=0.1, cgs=1e-16, cgd=1e-16)
    fast_vth_scale: float = 0.9
    fast_k_scale: float = 1.15
    slow_vth_scale: float = 1.1
    slow_k_scale: float = 0.85

    def mosfet(self, polarity: str, w: float, l: float) -> MosfetParams:
        """Instantiate device parameters for the given geometry.

        The calibration's cgs/cgd are the values at CAP_REF_WIDTH; the
        instance capacitances scale linearly with the actual width.
        """
        proc = self.nmos if polarity == NMOS else self.pmos
        cap_scale = w / CAP_REF_WIDTH
        return MosfetParams(
            polarity=polarity,
            vth0=proc.vth0,
            kprime=proc.kprime,
            lam=proc.lam,
            w=w,
            l=l,
            cgs=proc.cgs * cap_scale,
            cgd=proc.cgd * cap_scale,
        )

    def corner(self, name: str) -> CornerSet:
        """Build one of the five standard corners from the fast/slow scales."""
        name = name.upper()
        if name not in ("TT", "FF", "SS", "FS", "SF"):
            raise ValueError(f"unknown corner {name!r}")
        scales = {}
        for letter, polarity in zip(name, "np"):
            if letter == "T":
                vth, k = 1.0, 1.0
            elif letter == "F":
                vth, k = self.fast_vth_scale, self.fast_k_scale
            else:
                vth, k = self.slow_vth_scale, self.slow_k_scale
            scales[f"vth_scale_{polarity}"] = vth
            scales[f"k_scale_{polarity}"] = k
        return CornerSet(name=name, **scales)

    def corners(self) -> dict[str, CornerSet]:
        return {n: self.corner(n) for n in ("TT", "FF", "FS", "SF", "SS")}


DEFAULT_CONFIG = ModelConfig()

_CONFIG_KEYS = {
    "vdd": ("vdd",),
    "nmos.vth0": ("nmos", "vth0"),
    "nmos.kprime": ("nmos", "kprime"),
    "nmos.lambda": ("nmos", "lam"),
    "nmos.cgs": ("nmos", "cgs"),
    "nmos.cgd": ("nmos", "cgd"),
    "pmos.vth0": ("pmos", "vth0"),
    "pmos.kprime": ("pmos", "kprime"),
    "pmos.lambda": ("pmos", "lam"),
    "pmos.cgs": ("pmos", "cgs"),
    "pmos.cgd": ("pmos", "cgd"),
    "corner.fast.vth_scale": ("fast_vth_scale",),
    "corner.fast.k_scale": ("fast_k_scale",),
    "corner.slow.vth_scale": ("slow_vth_scale",),
    "corner.slow.k_scale": ("slow_k_scale",),
}


def load_config(path: str | Path, base: ModelConfig | None = None) -> ModelConfig:
    """Read a `key = value` calibration file (SI units, # comments).

    Unspecified keys keep their value from `base` (compiled-in defaults
    when base is None). Unknown keys are rejected.
    """
    cfg = base if base is not None else DEFAULT_CONFIG
    top: dict[str, float] = {}
    proc: dict[str, dict[str, float]] = {"nmos": {}, "pmos": {}}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            num = float(value.strip())
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: bad number {value.strip()!r}") from exc
        dest = _CONFIG_KEYS[key]
        if len(dest) == 1:
            top[dest[0]] = num
        else:
            proc[dest[0]][dest[1]] = num
    nmos = replace(cfg.nmos, **proc["nmos"]) if proc["nmos"] else cfg.nmos
    pmos = replace(cfg.pmos, **proc["pmos"]) if proc["pmos"] else cfg.pmos
    return replace(cfg, nmos=nmos, pmos=pmos, **top)


def dump_config(cfg: ModelConfig) -> str:
    """Render a ModelConfig in the calibration-file format."""
    lines = [f"vdd = {cfg.vdd!r}"]
    for pol in ("nmos", "pmos"):
        proc: ProcessParams = getattr(cfg, pol)
        lines += [
            f"{pol}.vth0 = {proc.vth0!r}",
            f"{pol}.kprime = {proc.kprime!r}",
            f"{pol}.lambda = {proc.lam!r}",
            f"{pol}.cgs = {proc.cgs!r}",
            f"{pol}.cgd = {proc.cgd!r}",
        ]
    lines += [
        f"corner.fast.vth_scale = {cfg.fast_vth_scale!r}",
        f"corner.fast.k_scale = {cfg.fast_k_scale!r}",
        f"corner.slow.vth_scale = {cfg.slow_vth_scale!r}",
        f"corner.slow.k_scale = {cfg.slow_k_scale!r}",
    ]
    return "\n".join(lines) + "\n"
