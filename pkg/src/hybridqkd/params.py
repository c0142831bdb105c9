"""Shared physical constants, protocol parameter sets and scenario files.

Everything here is an immutable dataclass. Scenario files are INI-style
key/value text with four optional sections::

    [scenario]
    preset = sns-241km

    [system]
    dark_count_rate = 1.5e-8

    [protocol]
    mu = 0.5

    [fiber]
    total_length = 241

Fields left out fall back to the preset (if one is named) and then to the
system defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import math
from dataclasses import dataclass, field


class ScenarioError(ValueError):
    """A scenario could not be parsed or violates a parameter invariant."""

    def __init__(self, message: str, field_name: str | None = None) -> None:
        super().__init__(message)
        self.field_name = field_name


class ProtocolKind(str, enum.Enum):
    SNS = "SNS"
    MDI = "MDI"


class Side(str, enum.Enum):
    ALICE = "alice"
    BOB = "bob"


def _check_probability(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ScenarioError(f"{name}={value!r} is not a probability", name)


@dataclass(frozen=True)
class SystemParams:
    """Device constants shared by every scenario."""

    detection_efficiency: float = 0.64
    error_correction_inefficiency: float = 1.1
    misalignment_phase_slice: float = 0.0410
    misalignment_x_mdi: float = 0.0097
    misalignment_z: float = 0.0011
    failure_probability: float = 1e-10
    dark_count_rate: float = 1.5e-8
    repetition_rate: float = 5e7
    pulse_pattern_length: int = 2000
    phase_slice_count: int = 16
    opll_residual_phase_variance: float = 5.6e-3

    def __post_init__(self) -> None:
        for name in (
            "detection_efficiency",
            "misalignment_phase_slice",
            "misalignment_x_mdi",
            "misalignment_z",
            "failure_probability",
            "dark_count_rate",
        ):
            _check_probability(name, getattr(self, name))
        if not self.error_correction_inefficiency >= 1.0:
            raise ScenarioError(
                "error_correction_inefficiency must be >= 1",
                "error_correction_inefficiency",
            )
        if self.phase_slice_count < 2:
            raise ScenarioError("phase_slice_count must be >= 2", "phase_slice_count")
        if not self.repetition_rate > 0:
            raise ScenarioError("repetition_rate must be positive", "repetition_rate")
        if self.pulse_pattern_length < 1:
            raise ScenarioError(
                "pulse_pattern_length must be >= 1", "pulse_pattern_length"
            )
        if not self.opll_residual_phase_variance >= 0:
            raise ScenarioError(
                "opll_residual_phase_variance must be >= 0",
                "opll_residual_phase_variance",
            )


@dataclass(frozen=True)
class ProtocolParams:
    """Source intensities and window probabilities for one scenario.

    ``vac`` is the weakest ("vacuum") intensity; it is simulated as a real
    weak pulse. ``epsilon`` is the SNS sending probability inside a signal
    window and must be ``None`` for MDI.
    """

    kind: ProtocolKind
    mu: float
    nu: float
    omega: float
    vac: float
    p_mu: float
    p_nu: float
    p_omega: float
    p_vac: float
    epsilon: float | None = None
    total_pulses: float = 1e12

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ProtocolKind(self.kind))
        names = ("mu", "nu", "omega", "vac")
        values = [getattr(self, n) for n in names]
        for n, v in zip(names, values):
            if not v >= 0 or math.isinf(v):
                raise ScenarioError(f"intensity {n}={v!r} must be >= 0", n)
        if self.kind is ProtocolKind.SNS:
            ok = self.mu >= self.nu >= self.omega >= self.vac
        else:
            ok = self.mu > self.nu > self.omega > self.vac
        if not ok:
            rel = ">=" if self.kind is ProtocolKind.SNS else ">"
            raise ScenarioError(
                f"intensities must satisfy mu {rel} nu {rel} omega {rel} vac", "mu"
            )
        for n in ("p_mu", "p_nu", "p_omega", "p_vac"):
            _check_probability(n, getattr(self, n))
        total = self.p_mu + self.p_nu + self.p_omega + self.p_vac
        if abs(total - 1.0) > 1e-3:
            raise ScenarioError(
                f"window probabilities sum to {total:.6g}, expected 1", "p_mu"
            )
        if self.kind is ProtocolKind.SNS:
            if self.epsilon is None:
                raise ScenarioError("SNS scenarios need epsilon", "epsilon")
            _check_probability("epsilon", self.epsilon)
        elif self.epsilon is not None:
            raise ScenarioError("epsilon is only defined for SNS", "epsilon")
        if not self.total_pulses >= 1:
            raise ScenarioError("total_pulses must be >= 1", "total_pulses")

    @property
    def intensities(self) -> dict[str, float]:
        return {"mu": self.mu, "nu": self.nu, "omega": self.omega, "vac": self.vac}

    @property
    def probabilities(self) -> dict[str, float]:
        return {
            "mu": self.p_mu,
            "nu": self.p_nu,
            "omega": self.p_omega,
            "vac": self.p_vac,
        }


@dataclass(frozen=True)
class FiberSpec:
    """Symmetric (by default) fiber link between Alice, Charlie and Bob."""

    total_length: float
    attenuation: float = 0.17
    arm_split: float = 0.5

    def __post_init__(self) -> None:
        if not self.total_length >= 0:
            raise ScenarioError("total_length must be >= 0", "total_length")
        if not self.attenuation >= 0:
            raise ScenarioError("attenuation must be >= 0", "attenuation")
        if not 0.0 < self.arm_split < 1.0:
            raise ScenarioError("arm_split must lie in (0, 1)", "arm_split")

    @classmethod
    def from_loss(cls, total_length: float, loss_db: float, **kw) -> FiberSpec:
        """Build a link whose attenuation reproduces a measured total loss."""
        if total_length <= 0:
            raise ScenarioError("total_length must be > 0 to derive attenuation")
        return cls(total_length=total_length, attenuation=loss_db / total_length, **kw)

    @property
    def total_loss_db(self) -> float:
        return self.total_length * self.attenuation


def arm_transmittance(
    fiber: FiberSpec, side: Side | str, sys: SystemParams
) -> float:
    """Transmittance of one arm including detector efficiency.

    >>> round(arm_transmittance(FiberSpec(0.0), "alice", SystemParams(detection_efficiency=1.0)), 12)
    1.0
    """
    side = Side(side)
    share = fiber.arm_split if side is Side.ALICE else 1.0 - fiber.arm_split
    loss_db = fiber.total_loss_db * share
    return 10.0 ** (-loss_db / 10.0) * sys.detection_efficiency


def channel_transmittance(fiber: FiberSpec, detection_efficiency: float = 1.0) -> float:
    """End-to-end Alice-to-Bob transmittance (the PLOB input uses efficiency 1)."""
    return 10.0 ** (-fiber.total_loss_db / 10.0) * detection_efficiency


# -- presets -----------------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    name: str
    protocol: ProtocolParams
    fiber: FiberSpec


def _sns(mu, nu, omega, p_mu, p_nu, p_omega, p_vac, eps, n):
    return ProtocolParams(
        ProtocolKind.SNS, mu, nu, omega, 0.001, p_mu, p_nu, p_omega, p_vac, eps, n
    )


def _mdi(mu, nu, omega, p_mu, p_nu, p_omega, p_vac, n):
    return ProtocolParams(
        ProtocolKind.MDI, mu, nu, omega, 0.001, p_mu, p_nu, p_omega, p_vac, None, n
    )


PRESETS: dict[str, Preset] = {
    p.name: p
    for p in [
        Preset(
            "mdi-150km",
            _mdi(0.7681, 0.2601, 0.0730, 0.6041, 0.1028, 0.2745, 0.01866, 1e11),
            FiberSpec.from_loss(150.0, 25.50),
        ),
        Preset(
            "mdi-241km",
            _mdi(0.6853, 0.3136, 0.0742, 0.4453, 0.1372, 0.3994, 0.01818, 1e12),
            FiberSpec.from_loss(241.0, 40.95),
        ),
        Preset(
            "sns-241km",
            _sns(0.5012, 0.4917, 0.0187, 0.9452, 0.0011, 0.0331, 0.0206, 0.2809, 1e12),
            FiberSpec.from_loss(241.0, 40.95),
        ),
        Preset(
            "sns-310km",
            _sns(0.4995, 0.4920, 0.0238, 0.9221, 0.0026, 0.0467, 0.0286, 0.2808, 1e12),
            FiberSpec.from_loss(310.0, 52.77),
        ),
        Preset(
            "sns-351km",
            _sns(0.4973, 0.4972, 0.0459, 0.8136, 0.0077, 0.1241, 0.0545, 0.2808, 1e11),
            FiberSpec.from_loss(351.0, 59.68),
        ),
        Preset(
            "sns-400km",
            _sns(0.4908, 0.4907, 0.0518, 0.7575, 0.0103, 0.1583, 0.0739, 0.2807, 1e11),
            FiberSpec.from_loss(400.0, 68.02),
        ),
        Preset(
            "sns-431km",
            _sns(0.4890, 0.4889, 0.0359, 0.8583, 0.0052, 0.0776, 0.0588, 0.2808, 1e12),
            FiberSpec.from_loss(431.0, 73.29),
        ),
    ]
}

DEFAULT_PRESET = "sns-241km"


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise ScenarioError(f"unknown scenario {name!r} (known: {known})", "preset")


# -- scenario text -----------------------------------------------------------

_SECTION_TYPES = {"system": SystemParams, "protocol": ProtocolParams, "fiber": FiberSpec}


def _coerce(cls, name: str, raw: str):
    ftypes = {f.name: f.type for f in dataclasses.fields(cls)}
    if name not in ftypes:
        raise ScenarioError(f"unknown field {name!r} for {cls.__name__}", name)
    text = raw.strip()
    ftype = str(ftypes[name])
    if name == "kind":
        return ProtocolKind(text.upper())
    if text.lower() in ("none", ""):
        return None
    try:
        if ftype == "int":
            return int(float(text))
        return float(text)
    except ValueError:
        raise ScenarioError(f"cannot parse {name}={raw!r}", name) from None


@dataclass(frozen=True)
class Scenario:
    system: SystemParams
    protocol: ProtocolParams
    fiber: FiberSpec
    name: str = field(default=DEFAULT_PRESET)

    def as_tuple(self) -> tuple[SystemParams, ProtocolParams, FiberSpec]:
        return self.system, self.protocol, self.fiber


def parse_scenario(config_text: str) -> Scenario:
    """Parse scenario text into a validated :class:`Scenario`."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(config_text)
    except configparser.Error as exc:
        raise ScenarioError(f"cannot parse scenario: {exc}") from exc

    name = DEFAULT_PRESET
    if parser.has_section("scenario"):
        name = parser["scenario"].get("preset", DEFAULT_PRESET).strip()
    for section in parser.sections():
        if section not in _SECTION_TYPES and section != "scenario":
            raise ScenarioError(f"unknown section [{section}]", section)

    preset = get_preset(name)
    base = {
        "system": SystemParams(),
        "protocol": preset.protocol,
        "fiber": preset.fiber,
    }
    built = {}
    for section, cls in _SECTION_TYPES.items():
        overrides = {}
        if parser.has_section(section):
            for key, raw in parser[section].items():
                overrides[key] = _coerce(cls, key, raw)
        built[section] = dataclasses.replace(base[section], **overrides)
    return Scenario(built["system"], built["protocol"], built["fiber"], name)


def load_scenario(config_text: str) -> tuple[SystemParams, ProtocolParams, FiberSpec]:
    return parse_scenario(config_text).as_tuple()


def dump_scenario(scenario: Scenario) -> str:
    """Serialize every field so that :func:`parse_scenario` round-trips exactly."""
    lines = ["[scenario]", f"preset = {scenario.name}", ""]
    for section, obj in (
        ("system", scenario.system),
        ("protocol", scenario.protocol),
        ("fiber", scenario.fiber),
    ):
        lines.append(f"[{section}]")
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            if isinstance(value, enum.Enum):
                value = value.value
            lines.append(f"{f.name} = {value!r}" if isinstance(value, float) else f"{f.name} = {value}")
        lines.append("")
    return "\n".join(lines)


def scenario_from_preset(name: str, system: SystemParams | None = None) -> Scenario:
    preset = get_preset(name)
    return Scenario(system or SystemParams(), preset.protocol, preset.fiber, name)
