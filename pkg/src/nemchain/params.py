"""Device-level parameters of a capacitively coupled nanoresonator array.

Everything here is SI internally and every frequency is an angular frequency
(rad/s).  Human-facing input and output use ``nu / 2 pi`` in Hz.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, fields, replace
from typing import Any, Mapping

from .errors import ConfigurationError, DomainError

# CODATA 2018
HBAR = 1.054571817e-34  # J s
EPSILON_0 = 8.8541878128e-12  # F/m

ALUMINUM_DENSITY = 2700.0  # kg/m^3
MODE_MASS_FACTOR = 0.52  # effective mass of the third in-plane flexural mode

TRANSDUCTIONS = ("parallel_plate", "capacitance_gradient")


class ValidityWarning(UserWarning):
    """A small-parameter assumption of the model is not well satisfied."""


def _positive(**values: float) -> None:
    for name, value in values.items():
        if not value > 0:
            raise DomainError(f"{name} must be strictly positive, got {value!r}")


@dataclass(frozen=True)
class DeviceParams:
    """Physical description of one resonator and its coupling electrodes.

    ``plate_area`` is only needed by the parallel-plate formulas and has no
    default; ``capacitance_gradient``, ``coupling_capacitance`` and
    ``transmon_shunt`` are only needed by the gradient/transmon formulas.
    """

    length: float
    width: float
    thickness: float
    material_density: float
    bare_frequency: float  # rad/s
    gap: float
    voltage_difference: float
    plate_area: float | None = None
    coupling_capacitance: float | None = None
    capacitance_gradient: float | None = None
    transmon_shunt: float | None = None

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if f.name == "voltage_difference":
                # zero bias is a legitimate (uncoupled) configuration
                if value < 0:
                    raise DomainError("voltage_difference must be non-negative")
                continue
            _positive(**{f.name: value})

    @property
    def effective_mass(self) -> float:
        return effective_mass(self.material_density, self.width, self.thickness, self.length)

    @property
    def x_zpf(self) -> float:
        return zero_point_fluctuation(self.effective_mass, self.bare_frequency)

    def with_voltage(self, voltage: float) -> "DeviceParams":
        return replace(self, voltage_difference=voltage)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "DeviceParams":
        """Build from a config section.

        Values are SI floats or strings with a unit (``"45 nm"``, ``"20 aF"``).
        The frequency is given as ``frequency_hz`` (nu / 2 pi) or as
        ``frequency`` with a Hz-type unit; it is stored as rad/s.
        """
        data = dict(data)
        kwargs: dict[str, Any] = {}
        freq = data.pop("frequency_hz", None)
        if freq is None:
            freq = data.pop("frequency", None)
        if freq is None:
            raise ConfigurationError("device section needs 'frequency_hz'")
        kwargs["bare_frequency"] = 2 * math.pi * parse_quantity(freq, "Hz")
        units = {
            "length": "m",
            "width": "m",
            "thickness": "m",
            "gap": "m",
            "material_density": "kg/m^3",
            "plate_area": "m^2",
            "voltage_difference": "V",
            "coupling_capacitance": "F",
            "capacitance_gradient": "F/m",
            "transmon_shunt": "F",
        }
        for key, value in data.items():
            if key not in units:
                raise ConfigurationError(f"unknown device key {key!r}")
            kwargs[key] = parse_quantity(value, units[key])
        missing = {"length", "width", "thickness", "material_density", "gap", "voltage_difference"} - set(kwargs)
        if missing:
            raise ConfigurationError(f"device section missing {sorted(missing)}")
        return cls(**kwargs)


@dataclass(frozen=True)
class DerivedRates:
    effective_mass: float
    x_zpf: float
    coupling_g: float | None
    rescaled_frequency: float | None
    transmon_lambda: float | None
    rabi_time: float | None


_PREFIXES = {
    "": 1.0, "k": 1e3, "M": 1e6, "G": 1e9, "T": 1e12,
    "m": 1e-3, "u": 1e-6, "µ": 1e-6, "n": 1e-9, "p": 1e-12, "f": 1e-15, "a": 1e-18,
}
_QUANTITY = re.compile(r"^\s*([-+0-9.eE]+)\s*([a-zA-Zµ/^0-9]*)\s*$")


def parse_quantity(value: Any, unit: str) -> float:
    """Convert ``value`` to a float in the SI base ``unit``.

    Plain numbers are taken as already SI.  Strings may carry an SI prefix on
    the unit's leading symbol, e.g. ``"0.7 um"``, ``"2.5 GHz"``, ``"6e-11 F/m"``.
    Compound units with powers (``m^2``) scale the prefix accordingly.
    """
    if isinstance(value, (int, float)):
        return float(value)
    m = _QUANTITY.match(str(value))
    if not m:
        raise ConfigurationError(f"cannot parse quantity {value!r}")
    number, given = float(m.group(1)), m.group(2)
    if not given or given == unit:
        return number
    if unit == "kg/m^3":
        if given == "g/cm^3":
            return number * 1e3
        raise ConfigurationError(f"unsupported unit {given!r} for {unit}")
    if not given.endswith(unit):
        raise ConfigurationError(f"unit {given!r} incompatible with {unit!r}")
    prefix = given[: len(given) - len(unit)]
    if prefix not in _PREFIXES:
        raise ConfigurationError(f"unknown SI prefix {prefix!r} in {given!r}")
    power = 2 if unit == "m^2" else 1
    return number * _PREFIXES[prefix] ** power


def effective_mass(density: float, width: float, thickness: float, length: float) -> float:
    """Effective mass ``0.52 rho w t L`` of the third flexural mode (kg)."""
    _positive(density=density, width=width, thickness=thickness, length=length)
    return MODE_MASS_FACTOR * density * width * thickness * length


def zero_point_fluctuation(mass: float, omega: float) -> float:
    """Ground-state position spread ``sqrt(hbar / (2 m omega))`` in metres."""
    _positive(mass=mass, omega=omega)
    return math.sqrt(HBAR / (2.0 * mass * omega))


def coupling_rate(dev_j: DeviceParams, dev_j1: DeviceParams, transduction: str) -> float:
    """Nearest-neighbour phonon tunnelling rate g (rad/s).

    ``parallel_plate`` evaluates ``eps0 A dV^2 x_j x_j1 / (2 d^3 hbar)`` exactly
    as written for an ideal plate capacitor.  ``capacitance_gradient`` uses
    ``dC/dx dV^2 x_j x_j1 / (d hbar)``, which is the form that matches the
    tabulated device estimates.
    """
    if transduction not in TRANSDUCTIONS:
        raise ConfigurationError(f"transduction must be one of {TRANSDUCTIONS}, got {transduction!r}")
    if dev_j.gap != dev_j1.gap or dev_j.voltage_difference != dev_j1.voltage_difference:
        raise ConfigurationError("gap and voltage_difference must be shared by the coupled pair")
    d = dev_j.gap
    dv2 = dev_j.voltage_difference ** 2
    xx = dev_j.x_zpf * dev_j1.x_zpf
    if transduction == "parallel_plate":
        if dev_j.plate_area is None:
            raise ConfigurationError("parallel_plate transduction needs plate_area")
        return EPSILON_0 * dev_j.plate_area * dv2 * xx / (2.0 * d ** 3 * HBAR)
    if dev_j.capacitance_gradient is None:
        raise ConfigurationError("capacitance_gradient transduction needs capacitance_gradient (dC/dx)")
    return dev_j.capacitance_gradient * dv2 * xx / (d * HBAR)


def rescaled_frequency(dev: DeviceParams) -> float:
    """Mode frequency shifted by the electrostatic spring, ``nu + eps0 A dV^2 / (2 d^3 m nu)``."""
    if dev.plate_area is None:
        raise ConfigurationError("rescaled_frequency needs plate_area")
    nu = dev.bare_frequency
    shift = EPSILON_0 * dev.plate_area * dev.voltage_difference ** 2 / (
        2.0 * dev.gap ** 3 * dev.effective_mass * nu
    )
    if shift > 1e-2 * nu:
        warnings.warn(
            f"electrostatic frequency shift is {shift / nu:.2e} of the bare frequency",
            ValidityWarning,
            stacklevel=2,
        )
    return nu + shift


def transmon_coupling(dev: DeviceParams) -> float:
    """Resonant transmon-resonator coupling lambda (rad/s) from circuit theory."""
    if None in (dev.capacitance_gradient, dev.coupling_capacitance, dev.transmon_shunt):
        raise ConfigurationError(
            "transmon_coupling needs capacitance_gradient, coupling_capacitance and transmon_shunt"
        )
    w = dev.bare_frequency
    ratio = (
        dev.capacitance_gradient
        * dev.coupling_capacitance
        * dev.voltage_difference ** 2
        / (dev.effective_mass * w ** 2 * dev.gap * dev.transmon_shunt)
    )
    return w * math.sqrt(ratio)


def rabi_transfer_time(lam: float) -> float:
    """Duration ``pi / (2 lambda)`` of the half Rabi cycle that swaps one excitation."""
    _positive(lam=lam)
    return math.pi / (2.0 * lam)


def derive_rates(
    dev: DeviceParams,
    neighbor: DeviceParams | None = None,
    transduction: str = "capacitance_gradient",
) -> DerivedRates:
    """Collect every rate obtainable from ``dev``; unavailable ones are ``None``.

    Emits :class:`ValidityWarning` when ``x_zpf / d > 1e-3`` or when the
    coupling is not much smaller than the mode frequency.
    """
    neighbor = dev if neighbor is None else neighbor
    m = dev.effective_mass
    x = zero_point_fluctuation(m, dev.bare_frequency)
    if x / dev.gap > 1e-3:
        warnings.warn(f"x_zpf/d = {x / dev.gap:.2e} violates the small-oscillation premise", ValidityWarning, stacklevel=2)
    try:
        g = coupling_rate(dev, neighbor, transduction)
    except ConfigurationError:
        g = None
    omega = rescaled_frequency(dev) if dev.plate_area is not None else None
    try:
        lam = transmon_coupling(dev)
    except ConfigurationError:
        lam = None
    t_rabi = rabi_transfer_time(lam) if lam else None
    if g is not None and g > 1e-2 * (omega or dev.bare_frequency):
        warnings.warn("coupling g is not much smaller than the mode frequency", ValidityWarning, stacklevel=2)
    return DerivedRates(m, x, g, omega, lam, t_rabi)


def table1_device(frequency_ghz: float, voltage: float) -> DeviceParams:
    """Aluminium beam with the dimensions quoted for the 2.5 and 3.5 GHz designs."""
    lengths = {2.5: 0.7e-6, 3.5: 0.6e-6}
    if frequency_ghz not in lengths:
        raise ConfigurationError("tabulated designs exist for 2.5 and 3.5 GHz only")
    return DeviceParams(
        length=lengths[frequency_ghz],
        width=45e-9,
        thickness=50e-9,
        material_density=ALUMINUM_DENSITY,
        bare_frequency=2 * math.pi * frequency_ghz * 1e9,
        gap=20e-9,
        voltage_difference=voltage,
        coupling_capacitance=20e-18,
        capacitance_gradient=6e-11,
        transmon_shunt=50e-15,
    )


TABLE1_ROWS = ((2.5, 10.0), (2.5, 20.0), (3.5, 10.0), (3.5, 20.0))

# printed values, MHz: (lambda/2pi, J/2pi)
TABLE1_PUBLISHED = {
    (2.5, 10.0): (1.2, 0.7),
    (2.5, 20.0): (2.3, 2.7),
    (3.5, 10.0): (1.2, 0.6),
    (3.5, 20.0): (2.5, 2.3),
}


def table1(devices: list[DeviceParams] | None = None, transduction: str = "capacitance_gradient") -> list[dict]:
    """Rows of (omega/2pi [GHz], dV [V], lambda/2pi [MHz], J/2pi [MHz])."""
    if devices is None:
        devices = [table1_device(f, v) for f, v in TABLE1_ROWS]
    rows = []
    for dev in devices:
        rows.append(
            {
                "omega_over_2pi_GHz": dev.bare_frequency / (2 * math.pi) / 1e9,
                "dV_V": dev.voltage_difference,
                "lambda_over_2pi_MHz": transmon_coupling(dev) / (2 * math.pi) / 1e6,
                "J_over_2pi_MHz": coupling_rate(dev, dev, transduction) / (2 * math.pi) / 1e6,
            }
        )
    return rows
