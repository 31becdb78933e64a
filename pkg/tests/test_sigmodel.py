import math
from decimal import Decimal, getcontext
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faultwave import sigmodel as sm
from faultwave.errors import ConfigurationError, DomainError
from faultwave.sigmodel import FaultCondition as F
from faultwave.sigmodel import SParamKind as K

C = 299_792_458


def decimal_radius(length_m: str, carrier_hz: str) -> float:
    # independent high-precision evaluation of 0.62*sqrt(L^3*f/c)
    getcontext().prec = 50
    L, f = Decimal(length_m), Decimal(carrier_hz)
    return float(Decimal("0.62") * (L**3 * f / Decimal(C)).sqrt())


@pytest.mark.parametrize(
    "length, carrier, cm",
    [("0.106", "2.4e9", 6.0), ("0.172", "5.8e9", 19.0), ("0.115", "433e6", 2.9)],
)
def test_near_field_radius_known_antennas(length, carrier, cm):
    r = sm.reactive_near_field_radius(sm.AntennaConfig(float(carrier), float(length)))
    assert r == pytest.approx(decimal_radius(length, carrier), rel=1e-12)
    assert abs(r * 100 - cm) < 0.5


def test_default_antennas():
    assert sm.ANTENNA_2G4.length_m == 0.106
    assert sm.ANTENNA_5G8.length_m == 0.172
    assert sm.ANTENNA_433MHZ.length_m == 0.115


@pytest.mark.parametrize("length", ["0.01", "0.05", "0.2", "1.3"])
@pytest.mark.parametrize("carrier", ["1e6", "433e6", "2.4e9", "60e9"])
def test_radius_grid_against_decimal(length, carrier):
    r = sm.reactive_near_field_radius(sm.AntennaConfig(float(carrier), float(length)))
    assert r == pytest.approx(decimal_radius(length, carrier), rel=1e-12)


@given(
    st.floats(1e-3, 2.0), st.floats(1e6, 1e11), st.floats(1.01, 3.0)
)
def test_radius_monotone_in_length_and_carrier(length, carrier, factor):
    r = sm.reactive_near_field_radius(sm.AntennaConfig(carrier, length))
    assert r > 0
    assert sm.reactive_near_field_radius(sm.AntennaConfig(carrier, length * factor)) > r
    assert sm.reactive_near_field_radius(sm.AntennaConfig(carrier * factor, length)) > r


@pytest.mark.parametrize("carrier, length", [(0, 0.1), (-1, 0.1), (1e9, 0), (math.nan, 0.1), (1e9, math.inf)])
def test_antenna_rejects_bad_values(carrier, length):
    with pytest.raises(DomainError):
        sm.AntennaConfig(carrier, length)


def test_fault_frequencies_default_motor():
    f = sm.fault_frequencies(sm.MotorConfig())
    fr, ratio = Fraction("24.67"), Fraction("0.0079") / Fraction("0.0395")
    assert ratio == Fraction(1, 5)
    assert f["shaft_hz"] == 24.67
    assert f["bpfo_hz"] == pytest.approx(float(4 * fr * (1 - ratio)), rel=1e-12)
    assert f["bpfi_hz"] == pytest.approx(float(4 * fr * (1 + ratio)), rel=1e-12)
    assert round(f["bpfo_hz"], 1) == 78.9 and round(f["bpfi_hz"], 1) == 118.4


def test_fault_frequencies_zero_speed():
    f = sm.fault_frequencies(sm.MotorConfig(shaft_speed_hz=0.0))
    assert f["bpfo_hz"] == 0 and f["bpfi_hz"] == 0


@given(st.floats(0.1, 200), st.integers(1, 30), st.floats(0, 1.5))
def test_fault_frequencies_homogeneous_and_ordered(speed, n, angle):
    m = sm.MotorConfig(speed, n, 0.008, 0.04, angle)
    f1, f2 = sm.fault_frequencies(m), sm.fault_frequencies(sm.MotorConfig(2 * speed, n, 0.008, 0.04, angle))
    assert f1["bpfi_hz"] > f1["bpfo_hz"] > 0
    for k in f1:
        assert f2[k] == pytest.approx(2 * f1[k], rel=1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [dict(shaft_speed_hz=-1), dict(n_elements=0), dict(ball_diameter_m=0.05), dict(contact_angle_rad=math.pi / 2)],
)
def test_motor_config_invariants(kwargs):
    with pytest.raises(ConfigurationError):
        sm.MotorConfig(**kwargs)


def test_waveform_length_and_peak():
    for fault in F:
        x = sm.vibration_waveform(fault, sm.MotorConfig(), 5.0, 1000.0, seed=3)
        assert x.shape == (5000,)
        assert np.max(np.abs(x)) == pytest.approx(1.0)
        assert np.all(np.isfinite(x))


def test_waveform_deterministic_per_seed():
    a = sm.vibration_waveform(F.INNER_RACE, sm.MotorConfig(), 2.0, 1000.0, seed=11)
    b = sm.vibration_waveform(F.INNER_RACE, sm.MotorConfig(), 2.0, 1000.0, seed=11)
    c = sm.vibration_waveform(F.INNER_RACE, sm.MotorConfig(), 2.0, 1000.0, seed=12)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_imbalance_peak_at_shaft_bin():
    x = sm.vibration_waveform(F.IMBALANCE, sm.MotorConfig(), 5.0, 1000.0, seed=0, noise=False)
    spectrum = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(x.size, 1 / 1000.0)
    assert abs(freqs[np.argmax(spectrum)] - 24.67) <= 0.2


def test_imbalance_power_concentrated_near_shaft():
    x = sm.vibration_waveform(F.IMBALANCE, sm.MotorConfig(), 5.0, 1000.0, seed=4, noise=False)
    # a Hann taper keeps the off-bin tone's leakage inside the neighbouring bins
    power = np.abs(np.fft.rfft(x * np.hanning(x.size))) ** 2
    k = int(round(24.67 * x.size / 1000.0))
    nearest = np.argsort(np.abs(np.arange(power.size) - 24.67 * x.size / 1000.0))[:3]
    assert k in nearest
    assert power[nearest].sum() / power.sum() >= 0.90


def count_impulses(x, threshold=0.7, refractory=5):
    # threshold crossings of the envelope, ignoring re-triggers inside the ring-down
    above = np.flatnonzero(np.abs(x) >= threshold)
    count, last = 0, -(10**9)
    for i in above:
        if i - last > refractory:
            count += 1
        last = i
    return count


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_outer_race_impulse_count(seed):
    motor = sm.MotorConfig()
    x = sm.vibration_waveform(F.OUTER_RACE, motor, 5.0, 1000.0, seed, noise=False)
    expected = round(5.0 * sm.fault_frequencies(motor)["bpfo_hz"])
    assert abs(count_impulses(x) - expected) <= 1


def test_inner_race_amplitude_modulated_at_shaft_rate():
    x = sm.vibration_waveform(F.INNER_RACE, sm.MotorConfig(), 5.0, 1000.0, seed=2, noise=False)
    env = np.abs(np.fft.rfft(np.abs(x) - np.abs(x).mean()))
    freqs = np.fft.rfftfreq(x.size, 1e-3)
    band = (freqs > 5) & (freqs < 60)
    assert abs(freqs[band][np.argmax(env[band])] - 24.67) < 0.5


def test_noise_free_signatures_are_distinct():
    motor = sm.MotorConfig()
    waves = [sm.vibration_waveform(f, motor, 5.0, 1000.0, seed=9, noise=False) for f in F]
    for i in range(4):
        for j in range(i + 1, 4):
            a, b = waves[i] - waves[i].mean(), waves[j] - waves[j].mean()
            xc = np.correlate(a, b, mode="full") / (np.linalg.norm(a) * np.linalg.norm(b))
            assert np.max(np.abs(xc)) < 0.9, (F(i), F(j))


def test_nyquist_violation_names_frequency():
    with pytest.raises(ConfigurationError, match="bpfi_hz"):
        sm.vibration_waveform(F.INNER_RACE, sm.MotorConfig(), 1.0, 200.0, seed=0)


def test_zero_vibration_zero_noise_is_baseline():
    ch = sm.ChannelConfig(K.S11, 0.0, -12.0, 2.0, 0.0)
    tr = sm.modulate_sparam(np.zeros(100), sm.ANTENNA_2G4, ch, seed=0)
    assert np.all(tr.samples == -12.0)


@pytest.mark.parametrize("antenna", sm.DEFAULT_ANTENNAS)
def test_s11_cut_off_beyond_three_radii(antenna):
    r = sm.reactive_near_field_radius(antenna)
    ch = sm.ChannelConfig(K.S11, 3 * r, -12.0, 2.0, 0.0)
    vib = sm.vibration_waveform(F.OUTER_RACE, sm.MotorConfig(), 1.0, 1000.0, seed=0)
    tr = sm.modulate_sparam(vib, antenna, ch, seed=0)
    assert np.max(np.abs(tr.samples + 12.0)) < 0.01 * 2.0


def test_s11_full_coupling_at_contact():
    ch = sm.ChannelConfig(K.S11, 0.0)
    assert sm.coupling_depth(sm.ANTENNA_5G8, ch) > 0.999


def test_s21_depth_quarter_at_reference_distance():
    d0 = sm.coupling_depth(sm.ANTENNA_2G4, sm.ChannelConfig(K.S21, 0.0))
    d5 = sm.coupling_depth(sm.ANTENNA_2G4, sm.ChannelConfig(K.S21, 0.05))
    assert d0 == 1.0
    assert d5 == pytest.approx(d0 / 4, rel=1e-15)


@given(st.floats(0, 1.0), st.floats(0, 1.0))
def test_coupling_non_increasing_in_distance(a, b):
    lo, hi = sorted((a, b))
    for kind in K:
        for ant in sm.DEFAULT_ANTENNAS:
            assert sm.coupling_depth(ant, sm.ChannelConfig(kind, hi)) <= sm.coupling_depth(ant, sm.ChannelConfig(kind, lo))


def test_s11_empirical_snr_non_increasing_in_distance():
    vib = sm.vibration_waveform(F.OUTER_RACE, sm.MotorConfig(), 5.0, 1000.0, seed=5)
    snrs = []
    for d in (0.0, 0.02, 0.05, 0.1, 0.3):
        ch = sm.default_channel(K.S11, d)
        tr = sm.modulate_sparam(vib, sm.ANTENNA_2G4, ch, seed=6)
        signal = tr.samples - ch.baseline_db
        snrs.append(np.var(signal) / ch.noise_std_db**2)
    assert all(b <= a + 1e-9 for a, b in zip(snrs, snrs[1:]))


def test_default_noise_s11_above_s21():
    assert sm.default_channel(K.S11).noise_std_db > sm.default_channel(K.S21).noise_std_db


def test_trace_invariants():
    meta = sm.TraceMetadata(F.NORMAL, K.S11, 2.4e9, 0.0, 1, 0)
    with pytest.raises(DomainError):
        sm.SParamTrace(np.array([]), 1000.0, meta)
    with pytest.raises(DomainError):
        sm.SParamTrace(np.array([1.0, np.nan]), 1000.0, meta)
    with pytest.raises(DomainError):
        sm.SParamTrace(np.ones(3), 0.0, meta)
    tr = sm.SParamTrace(np.arange(5000.0), 1000.0, meta)
    assert tr.duration_s == 5.0
    part = tr.truncated(2.0, 1.0)
    assert part.samples[0] == 1000.0 and part.samples.size == 2000


def test_splitmix64_reference_vector():
    # first outputs of the reference splitmix64 generator seeded with 0
    assert sm.splitmix64(0) == 0xE220A8397B1DCDAF
    assert sm.splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


def test_derive_seed_separates_streams():
    seeds = {sm.derive_seed(7, i, j) for i in range(20) for j in range(20)}
    assert len(seeds) == 400
    assert sm.derive_seed(7, 1, 2) != sm.derive_seed(7, 2, 1)


def test_full_plan_trace_count():
    plan = sm.DatasetPlan()
    assert plan.n_traces == 2880
    kinds = [cell[4] for cell in plan.cells()]
    assert kinds.count(0) == kinds.count(1) == 1440


def test_single_cell_plan():
    plan = sm.DatasetPlan(
        conditions=(F.OUTER_RACE,), antennas=(sm.ANTENNA_2G4,), distances_m=(0.0,), trials=1, kinds=(K.S21,)
    )
    traces = sm.generate_dataset(plan)
    assert len(traces) == 1
    assert traces[0].metadata.sparam_kind is K.S21


def test_dataset_reproducible_and_finite():
    plan = sm.DatasetPlan(antennas=(sm.ANTENNA_433MHZ,), distances_m=(0.05,), trials=2, duration_s=1.0, base_seed=42)
    a, b = sm.generate_dataset(plan), sm.generate_dataset(plan)
    assert len(a) == 4 * 2 * 2
    assert a == b
    assert all(np.all(np.isfinite(t.samples)) for t in a)


def test_trace_seed_independent_of_plan_shape():
    small = sm.DatasetPlan(antennas=(sm.ANTENNA_5G8,), distances_m=(0.1,), trials=1, duration_s=1.0)
    big = sm.DatasetPlan(trials=1, duration_s=1.0)
    t_small = sm.generate_dataset(small)[0]
    match = [t for t in sm.generate_dataset(big) if t.metadata == t_small.metadata]
    assert len(match) == 1 and match[0] == t_small


def test_distance_cells_share_random_draws():
    # same trial at two antenna positions: only the channel coupling differs
    plan = sm.DatasetPlan(antennas=(sm.ANTENNA_5G8,), distances_m=(0.0, 0.1), trials=1, duration_s=1.0)
    near, far = {}, {}
    for t in sm.generate_dataset(plan):
        (near if t.metadata.distance_m == 0.0 else far)[(t.metadata.fault, t.metadata.sparam_kind)] = t
    for key, t in near.items():
        assert t.metadata.seed == far[key].metadata.seed
        if key[1] == K.S11:
            # both positions sit well inside the 19 cm near field
            np.testing.assert_allclose(t.samples, far[key].samples, atol=1e-6)


def test_plan_nyquist_failure():
    plan = sm.DatasetPlan(trials=1, sample_rate_hz=150.0, duration_s=1.0)
    with pytest.raises(ConfigurationError):
        sm.generate_dataset(plan)


def test_fault_labels_and_codes():
    assert [int(f) for f in F] == [0, 1, 2, 3]
    assert F.parse("inner race") is F.INNER_RACE
    assert F.parse("3") is F.OUTER_RACE
    with pytest.raises(ConfigurationError):
        F.parse("broken rotor bar")
