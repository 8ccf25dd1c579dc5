import math

import numpy as np
import pytest

from dascap.capacity import CsiMode, PowerAllocation, Strategy, capacity_csir, capacity_csit
from dascap.channel import ChannelParams, InterferenceParams
from dascap.ergodic import (CellInstance, McConfig, McEstimate, PowerCase, area_spectral_efficiency,
                            calibrate_edge_power, cell_average_rate, equivalent_noise_variance,
                            expected_nearest_path_loss, jensen_lower_bound, link_sinr, outage_probability,
                            power_gain, rates_from_samples, sample_rates, scaled_cell_instance,
                            simulate_link_samples)
from dascap.exceptions import ChannelError
from dascap.geometry import PortLayout, Region, circular_layout, colocated_layout, random_layout
from dascap.placement import lloyd_multistart


@pytest.fixture
def paper_hexagon():
    return Region.hexagon(1000.0, "apothem")


class TestMcConfig:
    def test_defaults(self):
        mc = McConfig()
        assert mc.n_samples == 200_000
        assert not mc.include_fading and mc.include_shadowing

    @pytest.mark.parametrize("kwargs", [{"n_samples": 0}, {"seed": -1}, {"seed": 2 ** 64}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            McConfig(**kwargs)

    def test_estimate_from_terms(self):
        est = McEstimate.from_terms(np.array([1.0, 2.0, 3.0, 4.0]))
        assert est.mean == 2.5
        assert est.std_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2.0)
        assert McEstimate.from_terms(np.array([5.0])).std_error == 0.0


class TestCellAverageRate:
    def test_single_center_port_matches_adaptive_quadrature(self, unit_hexagon, region_mean):
        params = ChannelParams(alpha=3.0, r0=0.05, sigma_sh_db=8.0)
        layout = PortLayout(np.zeros((1, 2)), unit_hexagon)
        mc = McConfig(n_samples=100_000, seed=5, include_shadowing=False)
        est = cell_average_rate(layout, 10.0, CsiMode.CSIR, Strategy.ALL, params, None, mc)

        def rate(x, y):
            r = max(math.hypot(x, y), 0.05)
            return math.log2(1.0 + 10.0 / r ** 3)

        oracle = region_mean(unit_hexagon, rate, epsabs=1e-9, epsrel=1e-7)
        assert abs(est.mean - oracle) < 4.0 * est.std_error + 1e-6

    def test_same_seed_same_numbers_for_any_worker_count(self, paper_hexagon):
        params = ChannelParams(alpha=3.0)
        layout = circular_layout(3, 500.0, paper_hexagon)
        mc = McConfig(n_samples=20_000, seed=42, include_fading=True)
        power = calibrate_edge_power(1000.0, params, 10.0)
        one = cell_average_rate(layout, power, CsiMode.CSIT, Strategy.ALL, params, None, mc, n_workers=1)
        many = cell_average_rate(layout, power, CsiMode.CSIT, Strategy.ALL, params, None, mc, n_workers=4)
        assert one == many

    def test_different_seeds_differ(self, paper_hexagon):
        params = ChannelParams(alpha=3.0)
        layout = circular_layout(3, 500.0, paper_hexagon)
        power = calibrate_edge_power(1000.0, params, 10.0)
        a = cell_average_rate(layout, power, "csir", "all", params, None, McConfig(n_samples=5000, seed=1))
        b = cell_average_rate(layout, power, "csir", "all", params, None, McConfig(n_samples=5000, seed=2))
        assert a.mean != b.mean

    def test_std_error_halves_with_four_times_the_samples(self, paper_hexagon):
        params = ChannelParams(alpha=4.0)
        layout = circular_layout(3, 575.0, paper_hexagon)
        power = calibrate_edge_power(1000.0, params, 10.0)
        small = cell_average_rate(layout, power, "csir", "all", params, None, McConfig(n_samples=20_000, seed=9))
        large = cell_average_rate(layout, power, "csir", "all", params, None, McConfig(n_samples=80_000, seed=9))
        assert small.std_error / large.std_error == pytest.approx(2.0, rel=0.2)

    def test_antithetic_estimate_agrees(self, paper_hexagon):
        params = ChannelParams(alpha=4.0)
        layout = circular_layout(3, 575.0, paper_hexagon)
        power = calibrate_edge_power(1000.0, params, 10.0)
        plain = cell_average_rate(layout, power, "csir", "all", params, None, McConfig(n_samples=40_000, seed=3))
        paired = cell_average_rate(layout, power, "csir", "all", params, None,
                                   McConfig(n_samples=40_000, seed=3, antithetic=True))
        assert paired.n == 20_000
        assert abs(plain.mean - paired.mean) < 4.0 * math.hypot(plain.std_error, paired.std_error)

    def test_csit_at_least_csir(self, paper_hexagon):
        params = ChannelParams(alpha=3.0)
        layout = circular_layout(3, 500.0, paper_hexagon)
        power = calibrate_edge_power(1000.0, params, 10.0)
        samples = simulate_link_samples(layout, params, McConfig(n_samples=10_000, seed=4, include_fading=True))
        csir = sample_rates(samples, power, CsiMode.CSIR, Strategy.ALL)
        csit = sample_rates(samples, power, CsiMode.CSIT, Strategy.ALL)
        assert np.all(csit >= csir - 1e-12)

    def test_samples_agree_with_closed_forms(self, paper_hexagon):
        params = ChannelParams(alpha=3.0)
        layout = circular_layout(3, 500.0, paper_hexagon)
        samples = simulate_link_samples(layout, params, McConfig(n_samples=50, seed=8, include_fading=True),
                                        n_antennas=2)
        s = np.array([2e6, 1e6, 3e6])
        csir = sample_rates(samples, s, "csir", "all")
        csit = sample_rates(samples, s, "csit", "all")
        for k in range(5):
            # With per-port norms fixed, the closed forms only see ||h_n||^2.
            h = np.sqrt(samples.gains[k, 0])[:, None] * np.array([[1.0, 0.0]] * 3)
            assert csir[k, 0] == pytest.approx(capacity_csir(h, s, 1.0, n_antennas=2))
            assert csit[k, 0] == pytest.approx(capacity_csit(h, s, 1.0))

    def test_zero_gamma_equals_no_interference(self, paper_hexagon):
        params = ChannelParams(alpha=4.0)
        layout = circular_layout(7, 500.0, paper_hexagon, center_port=True)
        power = calibrate_edge_power(1000.0, params, 10.0)
        mc = McConfig(n_samples=5000, seed=6)
        off = cell_average_rate(layout, power, "csir", "all", params, None, mc)
        zero = cell_average_rate(layout, power, "csir", "all", params, InterferenceParams(0.0), mc)
        assert off == zero

    def test_interference_lowers_the_rate(self, paper_hexagon):
        params = ChannelParams(alpha=4.0)
        layout = circular_layout(7, 500.0, paper_hexagon, center_port=True)
        power = calibrate_edge_power(1000.0, params, 10.0)
        mc = McConfig(n_samples=5000, seed=6)
        rates = [cell_average_rate(layout, power, "csit", "all", params, InterferenceParams(g), mc).mean
                 for g in (0.0, 0.5, 1.0)]
        assert rates[0] > rates[1] > rates[2]

    def test_interference_can_be_switched_off_in_the_sampler(self, paper_hexagon):
        params = ChannelParams(alpha=4.0)
        layout = circular_layout(3, 500.0, paper_hexagon)
        mc = McConfig(n_samples=2000, seed=6, include_interference=False)
        samples = simulate_link_samples(layout, params, mc, InterferenceParams(1.0))
        assert samples.interference is None

    def test_single_transmission_is_below_all_ports(self, paper_hexagon):
        params = ChannelParams(alpha=4.0)
        layout = circular_layout(3, 575.0, paper_hexagon)
        samples = simulate_link_samples(layout, params, McConfig(n_samples=5000, seed=7))
        power = calibrate_edge_power(1000.0, params, 10.0)
        single = rates_from_samples(samples, power, "csir", "single")
        every = rates_from_samples(samples, power, "csir", "all")
        assert np.all(single <= every + 1e-12)

    def test_zero_noise_without_interference_is_rejected(self, unit_hexagon):
        params = ChannelParams(sigma_n_sq=0.0, r0=0.01)
        layout = PortLayout(np.zeros((1, 2)), unit_hexagon)
        with pytest.raises(ChannelError):
            cell_average_rate(layout, 1.0, "csir", "all", params, None, McConfig(n_samples=100, seed=0))

    def test_outage_probability(self, paper_hexagon):
        params = ChannelParams(alpha=4.0)
        layout = circular_layout(3, 575.0, paper_hexagon)
        power = calibrate_edge_power(1000.0, params, 10.0)
        mc = McConfig(n_samples=10_000, seed=10)
        assert outage_probability(layout, power, "csir", "all", params, None, mc, rate_threshold=1e-9).mean == 0.0
        assert outage_probability(layout, power, "csir", "all", params, None, mc, rate_threshold=1e9).mean == 1.0
        mid = outage_probability(layout, power, "csir", "all", params, None, mc, rate_threshold=4.0)
        assert 0.0 < mid.mean < 1.0


class TestJensenBound:
    def test_expected_path_loss_of_center_port(self, unit_hexagon):
        params = ChannelParams(alpha=2.0, r0=1e-9)
        layout = PortLayout(np.zeros((1, 2)), unit_hexagon)
        assert expected_nearest_path_loss(layout, params) == pytest.approx(5.0 / 12.0, rel=1e-3)

    def test_expected_path_loss_matches_adaptive_quadrature(self, unit_hexagon, region_mean):
        params = ChannelParams(alpha=4.0, r0=0.02)
        layout = circular_layout(3, 0.5, unit_hexagon, phase=0.2)

        def nearest_loss(x, y):
            d = min(math.hypot(x - px, y - py) for px, py in layout.ports)
            return max(d, 0.02) ** 4

        assert expected_nearest_path_loss(layout, params, levels=64) == pytest.approx(
            region_mean(unit_hexagon, nearest_loss, epsabs=1e-8, epsrel=1e-6), rel=2e-3)

    @pytest.mark.parametrize("alpha", [2.0, 4.0, 6.0])
    def test_bound_holds_on_random_layouts(self, paper_hexagon, alpha):
        params = ChannelParams(alpha=alpha)
        power = calibrate_edge_power(1000.0, params, 10.0)
        rng = np.random.default_rng(int(alpha))
        for _ in range(4):
            layout = random_layout(int(rng.integers(1, 7)), paper_hexagon, rng)
            est = cell_average_rate(layout, power, "csir", "all", params, None,
                                    McConfig(n_samples=20_000, seed=int(rng.integers(1000))))
            assert jensen_lower_bound(layout, power, params) <= est.mean + 3.0 * est.std_error

    def test_gap_narrows_with_path_loss_exponent(self, paper_hexagon):
        layout = circular_layout(3, 577.0, paper_hexagon, phase=math.pi / 6.0)
        power = calibrate_edge_power(1000.0, ChannelParams(alpha=2.0), 10.0)
        mc = McConfig(n_samples=20_000, seed=13)
        gaps = []
        for alpha in (2.0, 6.0):
            params = ChannelParams(alpha=alpha)
            est = cell_average_rate(layout, power, "csir", "all", params, None, mc)
            gaps.append(est.mean - jensen_lower_bound(layout, power, params))
        assert gaps[1] < gaps[0]

    def test_zero_noise_has_no_bound(self, unit_hexagon):
        layout = PortLayout(np.zeros((1, 2)), unit_hexagon)
        with pytest.raises(ChannelError):
            jensen_lower_bound(layout, 1.0, ChannelParams(sigma_n_sq=0.0, r0=0.01))


class TestCalibrationAndAse:
    def test_edge_power(self):
        params = ChannelParams(alpha=3.0, beta=2.0, sigma_n_sq=0.5)
        power = calibrate_edge_power(10.0, params, 20.0)
        assert power / (params.sigma_n_sq * params.beta * 10.0 ** 3) == pytest.approx(100.0)

    def test_edge_power_needs_noise(self):
        with pytest.raises(ChannelError):
            calibrate_edge_power(10.0, ChannelParams(sigma_n_sq=0.0), 10.0)

    def test_area_spectral_efficiency(self):
        assert area_spectral_efficiency(3.0, 2.0) == pytest.approx(3.0 / (4.0 * math.pi))
        assert area_spectral_efficiency(3.0, 2.0, "hex_area") == pytest.approx(3.0 / (6.0 * math.sqrt(3.0)))
        with pytest.raises(ValueError):
            area_spectral_efficiency(1.0, 1.0, "square")
        with pytest.raises(ValueError):
            area_spectral_efficiency(1.0, 0.0)


class TestScaling:
    def _instance(self, sigma_n_sq=1.0, intf=None):
        region = Region.hexagon(1000.0, "apothem")
        layout = circular_layout(4, 400.0, region, center_port=True, phase=0.3)
        params = ChannelParams(alpha=3.5, r0=0.0, sigma_n_sq=sigma_n_sq)
        return CellInstance(layout, PowerAllocation(np.array([1e9, 2e9, 3e9, 4e9])), params, intf)

    @pytest.mark.parametrize("K", [0.5, 2.0, 10.0])
    def test_link_snr_scales_as_k_to_alpha_minus_two(self, K):
        base = self._instance()
        small = scaled_cell_instance(base, K)
        for u in ([100.0, -50.0], [700.0, 200.0], [-300.0, 600.0]):
            u = np.array(u)
            ratio = link_sinr(small, u / K) / link_sinr(base, u)
            np.testing.assert_allclose(ratio, K ** (base.params.alpha - 2.0), rtol=1e-12)

    def test_equivalent_noise_variance(self):
        base = self._instance()
        K = 4.0
        small = scaled_cell_instance(base, K)
        quiet = CellInstance(base.layout, base.powers,
                             ChannelParams(alpha=3.5, r0=0.0, sigma_n_sq=equivalent_noise_variance(base.params, K)))
        u = np.array([250.0, 125.0])
        np.testing.assert_allclose(link_sinr(small, u / K), link_sinr(quiet, u), rtol=1e-12)

    @pytest.mark.parametrize("neighbor_power", [None, 5e9])
    def test_interference_limited_sir_is_scale_invariant(self, neighbor_power):
        base = self._instance(sigma_n_sq=0.0, intf=InterferenceParams(0.5, neighbor_power=neighbor_power))
        u = np.array([200.0, -400.0])
        for K in (0.1, 3.0, 50.0):
            small = scaled_cell_instance(base, K)
            np.testing.assert_allclose(link_sinr(small, u / K), link_sinr(base, u), rtol=1e-12)

    def test_scaling_needs_unclamped_distances(self):
        base = self._instance()
        clamped = CellInstance(base.layout, base.powers, ChannelParams(alpha=3.5, r0=1.0))
        with pytest.raises(ChannelError):
            scaled_cell_instance(clamped, 2.0)
        with pytest.raises(ValueError):
            scaled_cell_instance(base, 0.0)


class TestPowerGain:
    def test_coherent_combining_gain_of_colocated_ports(self, paper_hexagon):
        params = ChannelParams(alpha=4.0, sigma_sh_db=0.0)
        layout = colocated_layout(6, paper_hexagon)
        mc = McConfig(n_samples=5000, seed=21, include_shadowing=False)
        reference = PowerCase(layout, CsiMode.CSIR, Strategy.ALL, params)
        optimized = PowerCase(layout, CsiMode.CSIT, Strategy.ALL, params)
        target = cell_average_rate(layout, calibrate_edge_power(1000.0, params, 10.0), "csir", "all", params,
                                   None, mc).mean
        assert power_gain(reference, optimized, target, mc) == pytest.approx(10.0 * math.log10(6.0), abs=1e-3)

    def test_distributed_ports_need_less_power(self, paper_hexagon):
        params = ChannelParams(alpha=4.0)
        mc = McConfig(n_samples=5000, seed=22)
        reference = PowerCase(colocated_layout(3, paper_hexagon), CsiMode.CSIR, Strategy.ALL, params)
        optimized = PowerCase(circular_layout(3, 577.0, paper_hexagon), CsiMode.CSIR, Strategy.ALL, params)
        assert power_gain(reference, optimized, 3.0, mc) > 0.0


@pytest.mark.slow
def test_power_gain_of_placed_ports_grows_with_path_loss_exponent(paper_hexagon):
    mc = McConfig(n_samples=20_000, seed=23)
    gains = []
    for alpha in (3.0, 4.0, 5.0, 6.0):
        params = ChannelParams(alpha=alpha)
        placed, _ = lloyd_multistart(6, paper_hexagon, alpha, restarts=4, seed=24, r0=params.r0, levels=32)
        reference = PowerCase(colocated_layout(6, paper_hexagon), CsiMode.CSIR, Strategy.ALL, params)
        optimized = PowerCase(placed.layout, CsiMode.CSIR, Strategy.ALL, params)
        target = cell_average_rate(reference.layout, calibrate_edge_power(1000.0, params, 10.0), "csir", "all",
                                   params, None, mc).mean
        gains.append(power_gain(reference, optimized, target, mc))
    assert gains[0] > 0.0
    assert np.all(np.diff(gains) > 0.0)


# At alpha = 2 shadowing moves the best radius by about a quarter; from alpha = 4 up it is within a grid step or two.
@pytest.mark.slow
@pytest.mark.parametrize("alpha", [4.0, 6.0])
def test_best_radius_barely_moves_with_shadowing(paper_hexagon, circular_sweep, alpha):
    grid = np.arange(400.0, 701.0, 20.0)
    radii = []
    for sigma_sh_db in (0.0, 8.0):
        params = ChannelParams(alpha=alpha, sigma_sh_db=sigma_sh_db)
        power = calibrate_edge_power(1000.0, params, 10.0)
        mc = McConfig(n_samples=100_000, seed=25, include_shadowing=sigma_sh_db > 0)
        radii.append(circular_sweep(paper_hexagon, 3, power, "csir", params, mc, grid))
    assert abs(radii[0] - radii[1]) <= 40.0
