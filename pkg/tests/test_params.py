import dataclasses

import pytest

from hybridqkd.params import (
    PRESETS,
    FiberSpec,
    ProtocolKind,
    ProtocolParams,
    ScenarioError,
    Side,
    SystemParams,
    arm_transmittance,
    channel_transmittance,
    dump_scenario,
    load_scenario,
    parse_scenario,
)


def test_system_defaults():
    s = SystemParams()
    assert s.detection_efficiency == 0.64
    assert s.error_correction_inefficiency == 1.1
    assert s.misalignment_phase_slice == 0.0410
    assert s.misalignment_x_mdi == 0.0097
    assert s.misalignment_z == 0.0011
    assert s.failure_probability == 1e-10
    assert s.dark_count_rate == 1.5e-8
    assert s.repetition_rate == 5e7
    assert s.phase_slice_count == 16
    assert s.pulse_pattern_length == 2000
    assert s.opll_residual_phase_variance == 5.6e-3


@pytest.mark.parametrize(
    "field,value",
    [("detection_efficiency", 1.2), ("error_correction_inefficiency", 0.9),
     ("phase_slice_count", 1), ("repetition_rate", 0.0), ("dark_count_rate", -1e-9)],
)
def test_system_rejects(field, value):
    with pytest.raises(ScenarioError):
        SystemParams(**{field: value})


def test_preset_sns_241():
    sys_, proto, fiber = load_scenario("[scenario]\npreset = sns-241km\n")
    assert proto.kind is ProtocolKind.SNS
    assert (proto.mu, proto.p_mu, proto.epsilon, proto.total_pulses) == (0.5012, 0.9452, 0.2809, 1e12)
    assert fiber.total_loss_db == pytest.approx(40.95)


def test_empty_config_defaults():
    sys_, proto, _ = load_scenario("")
    assert sys_.detection_efficiency == 0.64
    assert sys_.dark_count_rate == 1.5e-8
    assert proto.kind is ProtocolKind.SNS


def test_probability_sum_violation_names_field():
    with pytest.raises(ScenarioError) as err:
        load_scenario("[protocol]\np_mu = 0.5\np_nu = 0.6\n")
    assert err.value.field_name == "p_mu"


def test_intensity_order():
    base = PRESETS["mdi-150km"].protocol
    with pytest.raises(ScenarioError):
        dataclasses.replace(base, nu=base.omega)
    sns = PRESETS["sns-351km"].protocol
    dataclasses.replace(sns, nu=sns.mu)  # SNS allows equality


def test_epsilon_only_for_sns():
    with pytest.raises(ScenarioError):
        dataclasses.replace(PRESETS["mdi-150km"].protocol, epsilon=0.3)
    with pytest.raises(ScenarioError):
        dataclasses.replace(PRESETS["sns-241km"].protocol, epsilon=None)


def test_unknown_section_and_field():
    with pytest.raises(ScenarioError):
        parse_scenario("[bogus]\nx = 1\n")
    with pytest.raises(ScenarioError):
        parse_scenario("[system]\nwavelength = 1550\n")
    with pytest.raises(ScenarioError):
        parse_scenario("[scenario]\npreset = sns-999km\n")


def test_arm_transmittance_values():
    lossless = SystemParams(detection_efficiency=1.0)
    assert arm_transmittance(FiberSpec(0.0), Side.ALICE, lossless) == 1.0
    fiber = FiberSpec.from_loss(241.0, 40.95)
    assert arm_transmittance(fiber, "alice", SystemParams()) == pytest.approx(10**-2.0475 * 0.64, abs=1e-6)
    assert arm_transmittance(fiber, "alice", SystemParams()) == pytest.approx(5.737e-3, abs=1e-6)
    assert channel_transmittance(fiber) == pytest.approx(8.035e-5, rel=1e-3)


def test_arm_split():
    fiber = FiberSpec(100.0, 0.2, arm_split=0.25)
    s = SystemParams(detection_efficiency=1.0)
    a = arm_transmittance(fiber, Side.ALICE, s)
    b = arm_transmittance(fiber, Side.BOB, s)
    assert a * b == pytest.approx(channel_transmittance(fiber))
    assert a > b


def test_transmittance_monotone_and_multiplicative():
    s = SystemParams(detection_efficiency=1.0)
    etas = [channel_transmittance(FiberSpec(L)) for L in (0, 50, 100, 200)]
    assert all(x > y for x, y in zip(etas, etas[1:]))
    assert channel_transmittance(FiberSpec(150.0)) == pytest.approx(
        channel_transmittance(FiberSpec(100.0)) * channel_transmittance(FiberSpec(50.0))
    )
    assert arm_transmittance(FiberSpec(0.0, 0.5), Side.BOB, s) == 1.0


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_roundtrip(name):
    text = "[scenario]\npreset = %s\n[system]\ndark_count_rate = 2.5e-8\n" % name
    sc = parse_scenario(text)
    again = parse_scenario(dump_scenario(sc))
    assert again == sc
    assert dump_scenario(again) == dump_scenario(sc)


def test_presets_normalised():
    for p in PRESETS.values():
        q = p.protocol
        assert abs(q.p_mu + q.p_nu + q.p_omega + q.p_vac - 1) <= 1e-3
        assert q.vac == 0.001
