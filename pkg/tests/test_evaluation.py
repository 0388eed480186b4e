import numpy as np
import pytest

from loren import evaluation as ev
from loren.link import Link, LinkConfig
from loren.receiver import AdapterRegistry, BaseWeights, ModelConfig, UnknownCodeRateError
from loren.training import init_registry

F = 16


@pytest.fixture(scope="module")
def small_link():
    return Link(LinkConfig(num_subcarriers=F))


@pytest.fixture(scope="module")
def link():
    return Link()


@pytest.fixture(scope="module")
def baseline_sweep(small_link):
    cfg = ev.EvalConfig(receivers=(ev.PERFECT_CSI, ev.LS), cr_list=(0.5, 0.75), ebno_points_db=(0.0, 4.0, 8.0),
                        stopping=ev.Stopping(20, 120), seed=3)
    return cfg, ev.sweep(cfg, small_link)


def small_weights():
    cfg = ModelConfig(channels=4, num_res_blocks=2, num_subcarriers=F)
    return cfg, BaseWeights.init(cfg, np.random.default_rng(0))


class TestWilson:
    def test_contains_estimate(self):
        for k, n in [(0, 10), (10, 10), (3, 7), (100, 20000)]:
            lo, hi = ev.wilson_interval(k, n)
            assert 0 <= lo <= k / n <= hi <= 1

    def test_known_value(self):
        lo, hi = ev.wilson_interval(10, 100)
        assert lo == pytest.approx(0.05523, abs=1e-4)
        assert hi == pytest.approx(0.17437, abs=1e-4)

    def test_coverage(self):
        rng = np.random.default_rng(2024)
        hits = 0
        for _ in range(1000):
            k = int(np.sum(rng.random(500) < 0.1))
            lo, hi = ev.wilson_interval(k, 500)
            hits += lo <= 0.1 <= hi
        assert 0.93 <= hits / 1000 <= 0.97


class TestStopping:
    def test_validation(self):
        with pytest.raises(ValueError):
            ev.Stopping(0, 10)
        with pytest.raises(ValueError):
            ev.Stopping(10, 5)

    def test_unknown_receiver(self):
        with pytest.raises(ValueError):
            ev.EvalConfig(receivers=("mmse",))


class TestBlerPoint:
    def test_noiseless_limit(self, link):
        p = ev.run_bler_point(ev.PERFECT_CSI, 0.5, 40.0, ev.Stopping(100, 200), 0, link)
        assert p.blocks == 200 and p.errors == 0 and p.bler == 0.0

    def test_noise_dominated_limit(self, link):
        p = ev.run_bler_point(ev.PERFECT_CSI, 0.75, -20.0, ev.Stopping(200, 200), 0, link, max_decoder_iters=10)
        assert p.blocks == 200 and p.bler >= 0.99

    def test_deterministic(self, small_link):
        a = ev.run_bler_point(ev.LS, 0.5, 4.0, ev.Stopping(5, 60), 9, small_link)
        b = ev.run_bler_point(ev.LS, 0.5, 4.0, ev.Stopping(5, 60), 9, small_link)
        assert a == b

    def test_worker_count_independent(self, small_link):
        s = ev.Stopping(7, 100)
        one = ev.run_bler_point(ev.LS, 0.5, 3.0, s, 1, small_link, workers=1)
        three = ev.run_bler_point(ev.LS, 0.5, 3.0, s, 1, small_link, workers=3)
        assert one == three

    def test_stops_exactly_at_min_errors(self, small_link):
        p = ev.run_bler_point(ev.LS, 0.75, 0.0, ev.Stopping(5, 1000), 0, small_link)
        assert p.errors == 5 and p.blocks >= 5

    def test_paired_blocks(self, small_link):
        a = small_link.generate_block(0.5, 2.0, ev.block_rng(4, 0.5, 2.0, 17))
        b = small_link.generate_block(0.5, 2.0, ev.block_rng(4, 0.5, 2.0, 17))
        assert np.array_equal(a.rx, b.rx) and np.array_equal(a.info_bits, b.info_bits)
        c = small_link.generate_block(0.5, 2.0, ev.block_rng(4, 0.5, 2.0, 18))
        assert not np.array_equal(a.rx, c.rx)

    def test_neural_receivers(self, small_link):
        cfg, w = small_weights()
        reg = init_registry(cfg, (0.5,), 0)
        base = ev.run_bler_point(ev.NEURAL_BASE, 0.5, 6.0, ev.Stopping(3, 10), 0, small_link, w)
        lor = ev.run_bler_point(ev.LOREN, 0.5, 6.0, ev.Stopping(3, 10), 0, small_link, w, reg)
        # zero-initialized adapters reproduce the base receiver
        assert (base.blocks, base.errors) == (lor.blocks, lor.errors)

    def test_missing_weights(self, small_link):
        with pytest.raises(ev.MissingWeightsError):
            ev.run_bler_point(ev.NEURAL_BASE, 0.5, 6.0, ev.Stopping(1, 1), 0, small_link)
        _, w = small_weights()
        with pytest.raises(ev.MissingWeightsError):
            ev.run_bler_point(ev.LOREN, 0.5, 6.0, ev.Stopping(1, 1), 0, small_link, w)

    def test_unregistered_rate(self, small_link):
        cfg, w = small_weights()
        reg = init_registry(cfg, (0.5,), 0)
        with pytest.raises(UnknownCodeRateError):
            ev.run_bler_point(ev.LOREN, 0.75, 6.0, ev.Stopping(1, 1), 0, small_link, w, reg)
        with pytest.raises(UnknownCodeRateError):
            ev.make_receivers([ev.LOREN], [0.5], w, AdapterRegistry(cfg))


class TestSweep:
    def test_row_count(self, baseline_sweep):
        cfg, points = baseline_sweep
        assert len(points) == len(cfg.receivers) * len(cfg.cr_list) * len(cfg.ebno_points_db)

    def test_monotone(self, baseline_sweep):
        _, points = baseline_sweep
        for curve in ev.curves(points).values():
            assert ev.monotone_violations(curve) == []

    def test_csv_roundtrip(self, baseline_sweep, tmp_path):
        _, points = baseline_sweep
        ev.write_csv(tmp_path / "b.csv", points)
        header = (tmp_path / "b.csv").read_text().splitlines()[0]
        assert header == "receiver,cr,ebno_db,blocks,errors,bler,ci_lo,ci_hi,seed"
        back = ev.read_csv(tmp_path / "b.csv")
        assert back == points
        assert [p.ci for p in back] == [p.ci for p in points]

    def test_bad_csv(self, tmp_path):
        (tmp_path / "x.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="columns"):
            ev.read_csv(tmp_path / "x.csv")

    def test_perfect_csi_best_or_tied(self, baseline_sweep):
        _, points = baseline_sweep
        for row in ev.compare_report(points):
            assert ev.PERFECT_CSI in row.best_or_tied


class TestCompare:
    def test_identical_curves_tie(self, baseline_sweep):
        _, points = baseline_sweep
        clone = [ev.BlerPoint("loren", p.cr, p.ebno_db, p.blocks, p.errors, p.seed)
                 for p in points if p.receiver == ev.LS]
        report = ev.compare_report([p for p in points if p.receiver == ev.LS] + clone)
        for row in report:
            assert set(row.outcomes.values()) == {"tie"}
            assert row.loren_le_ls is True

    def test_mismatched_grids(self):
        pts = [ev.BlerPoint(ev.LS, 0.5, 1.0, 10, 1, 0), ev.BlerPoint(ev.PERFECT_CSI, 0.5, 2.0, 10, 1, 0)]
        with pytest.raises(ValueError, match="grids"):
            ev.compare_report(pts)

    def test_paired_wins(self):
        pts = [ev.BlerPoint("neural-base", 0.5, e, 100, k, 0) for e, k in [(0, 100), (2, 60), (4, 20), (6, 0)]]
        pts += [ev.BlerPoint("loren", 0.5, e, 100, k, 0) for e, k in [(0, 100), (2, 50), (4, 25), (6, 0)]]
        assert ev.paired_wins(pts, "loren", "neural-base", 0.5) == (1, 2)

    def test_format(self):
        pts = [ev.BlerPoint(ev.LS, 0.5, 1.0, 10, 5, 0), ev.BlerPoint(ev.PERFECT_CSI, 0.5, 1.0, 10, 1, 0)]
        text = ev.format_report(ev.compare_report(pts))
        assert text.splitlines()[1].startswith("0.5,1,baseline-perfect-csi < baseline-ls")


def test_plots_are_deterministic(baseline_sweep, tmp_path):
    _, points = baseline_sweep
    a = ev.plot_bler(points, tmp_path / "a")
    b = ev.plot_bler(points, tmp_path / "b")
    assert [p.name for p in a] == ["bler_cr500.svg", "bler_cr750.svg"]
    for x, y in zip(a, b):
        assert x.read_bytes() == y.read_bytes()
        assert b"<svg" in x.read_bytes()
    loss = ev.plot_loss(range(100), np.linspace(0.7, 0.3, 100), tmp_path / "loss.svg")
    assert loss.read_bytes() == ev.plot_loss(range(100), np.linspace(0.7, 0.3, 100), tmp_path / "l2.svg").read_bytes()
