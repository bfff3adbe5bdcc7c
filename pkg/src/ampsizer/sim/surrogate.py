"""Closed-form stand-in for a three-stage nested-Miller amplifier.

The model is deliberately simple but physically shaped: bias currents are
mirrored from a reference by device size ratios, transconductance follows a
smooth weak-to-strong inversion interpolation, and every performance metric
is a twice-differentiable function of the sizing parameters. Corner effects
are multiplicative per metric, so a corner result is always the nominal
result times a published modifier.

Roles are inferred from device tags:

========  ===========================================================
gm1       input pair (one side)
gm2       second gain stage
gm3       output stage
bias_p    PMOS bias mirror (reference for gm1 and gm2 currents)
bias_n    NMOS bias mirror (reference for gm3 current)
load1     first-stage active load (any ``LOAD*`` tag)
cm1       outer Miller capacitor (``CAPACITOR_0``)
cm2       inner Miller capacitor (``CAPACITOR_1``)
rz        nulling resistor (``RESISTOR_0``)
ib        reference bias current (``CURRENT_*``)
========  ===========================================================
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

from ..errors import RoleUnassigned
from ..metrics import MetricVector, active_area, fom_l, fom_s, geometry_from_params
from ..space import Process, PvtCorner
from ..testbench import DeviceKind, parse_device_name

SURROGATE_VERSION = "nmc-v1"

MOS_ROLES = ("gm1", "gm2", "gm3", "bias_p", "bias_n", "load1")
PASSIVE_ROLES = ("cm1", "cm2", "rz", "ib")
ROLES = MOS_ROLES + PASSIVE_ROLES


@dataclass(frozen=True)
class SurrogateConstants:
    ut: float = 0.025852          # thermal voltage at 27 C, V
    n_slope: float = 1.3          # subthreshold slope factor
    kp_n: float = 280e-6          # NMOS mobility * Cox, A/V^2
    kp_p: float = 70e-6           # PMOS mobility * Cox, A/V^2
    lambda_n: float = 0.06        # channel-length modulation, um/V
    lambda_p: float = 0.08
    vdd: float = 1.2              # nominal supply, V
    v_step: float = 0.1           # settling step, V
    settle_eps: float = 1e-3      # settling accuracy
    pm_target: float = 65.0       # ringing-free phase margin, deg
    pm_width: float = 25.0        # how quickly settling degrades away from it, deg
    rz_parasitic: float = 0.4     # parasitic fraction that places the nulling pole
    psrr_offset_db: float = 0.0
    cmrr_offset_db: float = 0.0
    kt: float = 4.14e-21          # Boltzmann energy at 27 C, J
    noise_excess: float = 3.0     # thermal excess factor on kT/C
    flicker_k: float = 1e-6       # flicker coefficient, V^2 um^2
    flicker_fmin: float = 1.0     # Hz
    avt_p: float = 2.0            # threshold mismatch, mV um
    avt_n: float = 1.5
    tc_floor: float = 5.0         # ppm/C
    tc_curv: float = 8.0          # ppm/C per ln(IC)^2
    tc_ic0: float = 0.05          # inversion coefficient of minimum drift
    sr_pnorm: float = 4.0
    mirror_1: float = 4.0         # input-pair current gain over the bias ratio
    mirror_2: float = 4.0
    mirror_3: float = 20.0


# Process factors per metric: (TT, FF, SS, FS, SF).
_PROC = {
    "gbw_mhz":     (1.0, 1.12, 0.88, 1.03, 0.97),
    "sr_v_per_us": (1.0, 1.08, 0.92, 1.02, 0.98),
    "gain_db":     (1.0, 0.97, 1.02, 0.99, 1.0),
    "pm_deg":      (1.0, 0.96, 1.03, 0.98, 1.01),
    "ts_us":       (1.0, 0.92, 1.10, 0.98, 1.03),
    "psrr_db":     (1.0, 0.97, 1.01, 0.98, 0.99),
    "cmrr_db":     (1.0, 0.98, 1.0, 0.97, 0.98),
    "vn_mvrms":    (1.0, 0.97, 1.04, 1.02, 1.01),
    "vos_mv":      (1.0, 1.05, 1.08, 1.15, 1.12),
    "tc_ppm":      (1.0, 1.10, 1.12, 1.18, 1.15),
    "power_mw":    (1.0, 1.10, 0.92, 1.02, 0.99),
}
_PROC_ORDER = (Process.TT, Process.FF, Process.SS, Process.FS, Process.SF)

# Sensitivity to relative supply deviation and to temperature (per 100 C).
_VOLT = {
    "gbw_mhz": 0.3, "sr_v_per_us": 0.4, "gain_db": -0.1, "pm_deg": -0.05,
    "ts_us": -0.3, "psrr_db": -0.1, "cmrr_db": 0.0, "vn_mvrms": 0.0,
    "vos_mv": 0.1, "tc_ppm": 0.2, "power_mw": 1.1,
}
_TEMP = {
    "gbw_mhz": -0.12, "sr_v_per_us": -0.08, "gain_db": -0.03, "pm_deg": 0.02,
    "ts_us": 0.12, "psrr_db": -0.04, "cmrr_db": -0.03, "vn_mvrms": 0.15,
    "vos_mv": 0.10, "tc_ppm": 0.25, "power_mw": 0.05,
}


@dataclass(frozen=True)
class CornerModel:
    """Multiplicative per-metric corner shifts, nominal at (TT, vnom, 27 C)."""
    process: Mapping[str, tuple[float, ...]] = field(default_factory=lambda: dict(_PROC))
    voltage: Mapping[str, float] = field(default_factory=lambda: dict(_VOLT))
    temperature: Mapping[str, float] = field(default_factory=lambda: dict(_TEMP))
    v_nominal: float = 1.2
    t_nominal: float = 27.0

    def modifier(self, metric: str, corner: PvtCorner) -> float:
        p = self.process[metric][_PROC_ORDER.index(corner.process)]
        v = 1.0 + self.voltage[metric] * (corner.voltage / self.v_nominal - 1.0)
        t = 1.0 + self.temperature[metric] * (corner.temperature - self.t_nominal) / 100.0
        return p * v * t

    def modifiers(self, corner: PvtCorner) -> dict[str, float]:
        mods = {k: self.modifier(k, corner) for k in self.process}
        # composite figures follow from their parts
        mods["foms"] = mods["gbw_mhz"] / mods["power_mw"]
        mods["foml"] = mods["sr_v_per_us"] / mods["power_mw"]
        mods["area_um2"] = 1.0
        return mods


def corner_modifiers(corner: PvtCorner, model: CornerModel | None = None) -> dict[str, float]:
    return (model or CornerModel()).modifiers(corner)


@dataclass(frozen=True)
class SurrogateConfig:
    roles: Mapping[str, str]                  # parameter name -> role
    parallel: Mapping[str, int]               # MOSFET parameter name -> parallel count
    cload: float = 100e-12                    # F
    constants: SurrogateConstants = SurrogateConstants()
    corners: CornerModel = CornerModel()
    version: str = SURROGATE_VERSION

    def __post_init__(self):
        object.__setattr__(self, "roles", MappingProxyType(dict(self.roles)))
        object.__setattr__(self, "parallel", MappingProxyType(dict(self.parallel)))

    @classmethod
    def for_names(cls, names: Iterable[str], **kw) -> "SurrogateConfig":
        """Infer roles from parameter names; every name must get a role."""
        roles, parallel = {}, {}
        for name in names:
            try:
                dev = parse_device_name(name)
            except ValueError:
                raise RoleUnassigned(f"{name}: not a device parameter") from None
            role = _role_of(dev)
            if role is None:
                raise RoleUnassigned(f"{name}: no surrogate role for this device")
            roles[name] = role
            if dev.kind is DeviceKind.MOSFET:
                parallel[name] = dev.parallel_count
        _check_complete(roles)
        return cls(roles, parallel, **kw)

    @classmethod
    def for_space(cls, space, **kw) -> "SurrogateConfig":
        return cls.for_names(space.names, **kw)


def _role_of(dev) -> str | None:
    if dev.kind is DeviceKind.MOSFET:
        tag = dev.function_tag.lower()
        if tag in ("gm1", "gm2", "gm3"):
            return tag
        if tag.startswith("biascm"):
            return "bias_p" if dev.device_type == "PMOS" else "bias_n"
        if tag.startswith("load"):
            return "load1"
        return None
    if dev.kind is DeviceKind.CAPACITOR:
        return {0: "cm1", 1: "cm2"}.get(dev.index)
    if dev.kind is DeviceKind.RESISTOR:
        return "rz" if dev.index == 0 else None
    if dev.kind is DeviceKind.CURRENT:
        return "ib" if dev.index == 0 else None
    return None


def _check_complete(roles: Mapping[str, str]) -> None:
    have = set()
    for name, role in roles.items():
        if role in MOS_ROLES:
            have.add((role, name.split("_")[3]))
        else:
            have.add((role, None))
    missing = [f"{r}.{a}" for r in MOS_ROLES for a in "WLM" if (r, a) not in have]
    missing += [r for r in PASSIVE_ROLES if (r, None) not in have]
    if missing:
        raise RoleUnassigned("no parameter for role(s): " + ", ".join(missing))


@dataclass
class _Mos:
    w: float
    l: float
    m: float
    p: int

    @property
    def s(self) -> float:
        return self.w / self.l * self.m * self.p

    @property
    def area(self) -> float:
        return self.w * self.l * self.m * self.p


def _gather(point: Mapping[str, float], cfg: SurrogateConfig):
    mos: dict[str, dict[str, float]] = {r: {} for r in MOS_ROLES}
    par: dict[str, int] = {}
    other: dict[str, float] = {}
    for name, role in cfg.roles.items():
        if name not in point:
            raise RoleUnassigned(f"point lacks {name} (role {role})")
        v = float(point[name])
        if role in MOS_ROLES:
            mos[role][name.split("_")[3]] = v
            par[role] = cfg.parallel[name]
        else:
            other[role] = v
    for name in point:
        if name not in cfg.roles:
            raise RoleUnassigned(f"{name}: no surrogate role for this parameter")
    devs = {r: _Mos(a["W"], a["L"], a["M"], par[r]) for r, a in mos.items()}
    return devs, other


def nominal_metrics(point: Mapping[str, float], cfg: SurrogateConfig,
                    cload: float | None = None) -> dict[str, float]:
    """Metrics at the nominal corner (TT, nominal supply, 27 C)."""
    c = cfg.constants
    cl = cfg.cload if cload is None else cload
    d, o = _gather(point, cfg)
    ib, cm1, cm2, rz = o["ib"], o["cm1"], o["cm2"], o["rz"]

    i1 = c.mirror_1 * ib * d["gm1"].s / d["bias_p"].s
    i2 = c.mirror_2 * ib * d["gm2"].s / d["bias_p"].s
    i3 = c.mirror_3 * ib * d["gm3"].s / d["bias_n"].s

    def ispec(kp):
        return 2.0 * c.n_slope * kp * c.ut ** 2

    def gm(i, dev, kp):
        ic = i / (ispec(kp) * dev.s)
        return i / (c.n_slope * c.ut) / (0.5 + math.sqrt(0.25 + ic)), ic

    gm1, ic1 = gm(i1, d["gm1"], c.kp_p)
    gm2, _ = gm(i2, d["gm2"], c.kp_p)
    gm3, _ = gm(i3, d["gm3"], c.kp_n)
    gml, _ = gm(i1, d["load1"], c.kp_n)

    g1 = i1 * (c.lambda_p / d["gm1"].l + c.lambda_n / d["load1"].l)
    g2 = i2 * (c.lambda_p / d["gm2"].l + c.lambda_n / d["bias_n"].l)
    g3 = i3 * (c.lambda_n / d["gm3"].l + c.lambda_p / d["bias_p"].l)
    a1, a2, a3 = gm1 / g1, gm2 / g2, gm3 / g3
    gain_db = 20.0 * math.log10(a1 * a2 * a3)

    wu = gm1 / cm1
    wp2 = gm3 / cl
    wp3 = gm2 / cm2
    tz = rz * cm2
    deg = 180.0 / math.pi
    pm = 90.0 - deg * (math.atan(2.0 * wu / wp2) + math.atan(wu / wp3)) \
        + deg * (math.atan(wu * tz) - math.atan(wu * tz * c.rz_parasitic))

    p = c.sr_pnorm
    sr_a, sr_b = 2.0 * i1 / cm1, i3 / cl
    sr = (sr_a ** -p + sr_b ** -p) ** (-1.0 / p) / 1e6        # V/us
    ts = c.v_step / sr + math.log(1.0 / c.settle_eps) / wu * 1e6 \
        * (1.0 + ((pm - c.pm_target) / c.pm_width) ** 2)

    r_tail = d["bias_p"].l / (c.lambda_p * 2.0 * i1)
    psrr = c.psrr_offset_db - 20.0 * math.log10(a1 * a2)
    cmrr = c.cmrr_offset_db - 20.0 * math.log10(a1 * gm1 * r_tail)

    gbw_hz = wu / (2.0 * math.pi)
    thermal = c.noise_excess * c.kt / cm1
    flicker = c.flicker_k / d["gm1"].area * math.log1p(gbw_hz / c.flicker_fmin)
    vn = math.sqrt(thermal + flicker) * 1e3

    vos = math.sqrt(c.avt_p ** 2 / d["gm1"].area
                    + (c.avt_n * gml / gm1) ** 2 / d["load1"].area)
    tc = c.tc_floor + c.tc_curv * math.log(ic1 / c.tc_ic0) ** 2

    power = c.vdd * (ib + 2.0 * i1 + i2 + i3) * 1e3          # mW
    gbw_mhz = gbw_hz / 1e6
    area = active_area(geometry_from_params(point))
    cl_pf = cl * 1e12
    return {
        "gain_db": gain_db,
        "sr_v_per_us": sr,
        "gbw_mhz": gbw_mhz,
        "vos_mv": vos,
        "ts_us": ts,
        "vn_mvrms": vn,
        "cmrr_db": cmrr,
        "tc_ppm": tc,
        "power_mw": power,
        "psrr_db": psrr,
        "area_um2": area,
        "pm_deg": pm,
        "foms": fom_s(gbw_mhz, cl_pf, power),
        "foml": fom_l(sr, cl_pf, power),
    }


def apply_corner(nominal: Mapping[str, float], corner: PvtCorner,
                 model: CornerModel) -> dict[str, float]:
    mods = model.modifiers(corner)
    return {k: v * mods[k] for k, v in nominal.items()}


def surrogate_eval(point: Mapping[str, float], corner: PvtCorner, cfg: SurrogateConfig,
                   cload: float | None = None) -> MetricVector:
    nom = nominal_metrics(point, cfg, cload)
    return MetricVector(apply_corner(nom, corner, cfg.corners))


def surrogate_sweep(point: Mapping[str, float], corners: Iterable[PvtCorner],
                    cfg: SurrogateConfig, cload: float | None = None) -> list[MetricVector]:
    """Evaluate several corners sharing one nominal computation."""
    nom = nominal_metrics(point, cfg, cload)
    return [MetricVector(apply_corner(nom, c, cfg.corners)) for c in corners]
