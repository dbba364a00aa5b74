import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from stockssm.config import ConfigError, RegimeConfig
from stockssm.panel import (CLOSE, FEATURES, InsufficientHistoryError, PanelError, PanelParseError,
                            Scaler, StockPanel, chronological_split, gen_synthetic, load_panel,
                            make_windows, market_index, write_panel)


def test_synthetic_is_valid_and_deterministic():
    a, ia = gen_synthetic(7, 20, 120)
    b, ib = gen_synthetic(7, 20, 120)
    assert a.values.shape == (20, 120, len(FEATURES))
    np.testing.assert_array_equal(a.values, b.values)
    assert ia.assignments == ib.assignments
    assert not np.array_equal(a.values, gen_synthetic(8, 20, 120)[0].values)


def test_values_are_read_only(small_panel):
    panel, _ = small_panel
    with pytest.raises(ValueError):
        panel.values[0, 0, 0] = 1.0


def test_roundtrip_csv(tmp_path, small_panel):
    panel, industry = small_panel
    write_panel(panel, industry, tmp_path / "p.csv", tmp_path / "i.csv")
    back, ind = load_panel(tmp_path / "p.csv", tmp_path / "i.csv")
    assert back.tickers == panel.tickers and back.calendar == panel.calendar
    np.testing.assert_array_equal(back.values, panel.values)
    assert ind.assignments == industry.assignments


def _write(path, rows):
    path.write_text("date,ticker,close,open,high,low,turnover,volume\n" + "\n".join(rows) + "\n")


def _industry(path, tickers=("A", "B")):
    path.write_text("ticker,primary,secondary\n" + "".join(f"{t},P,S\n" for t in tickers))


def _row(day, tk, c=10.0):
    return f"2021-01-{day:02d},{tk},{c},{c},{c * 1.01},{c * 0.99},1,100"


def test_missing_cell_rejected_and_ffilled(tmp_path):
    rows = [_row(d, t) for d in range(1, 6) for t in "AB" if not (d == 3 and t == "B")]
    _write(tmp_path / "p.csv", rows)
    _industry(tmp_path / "i.csv")
    with pytest.raises(PanelError, match="missing"):
        load_panel(tmp_path / "p.csv", tmp_path / "i.csv")
    panel, _ = load_panel(tmp_path / "p.csv", tmp_path / "i.csv", missing="ffill")
    np.testing.assert_array_equal(panel.values[1, 2], panel.values[1, 1])


def test_ffill_limit(tmp_path):
    rows = [_row(d, t) for d in range(1, 9) for t in "AB" if not (2 <= d <= 5 and t == "B")]
    _write(tmp_path / "p.csv", rows)
    _industry(tmp_path / "i.csv")
    with pytest.raises(PanelError, match="forward-fill"):
        load_panel(tmp_path / "p.csv", tmp_path / "i.csv", missing="ffill")


def test_parse_error_reports_line(tmp_path):
    rows = [_row(1, "A"), _row(1, "B"), "2021-01-02,A,abc,1,1,1,1,1"]
    _write(tmp_path / "p.csv", rows)
    _industry(tmp_path / "i.csv")
    with pytest.raises(PanelParseError) as info:
        load_panel(tmp_path / "p.csv", tmp_path / "i.csv")
    assert info.value.lineno == 4


@pytest.mark.parametrize("bad", ["2021-13-01,A,1,1,1,1,1,1", "2021-01-02,A,-1,1,1,1,1,1"])
def test_bad_rows(tmp_path, bad):
    _write(tmp_path / "p.csv", [_row(1, "A"), _row(1, "B"), bad])
    _industry(tmp_path / "i.csv")
    with pytest.raises(PanelError):
        load_panel(tmp_path / "p.csv", tmp_path / "i.csv")


def test_missing_industry(tmp_path):
    _write(tmp_path / "p.csv", [_row(d, t) for d in range(1, 4) for t in "AB"])
    _industry(tmp_path / "i.csv", tickers=("A",))
    with pytest.raises(PanelError, match="industry"):
        load_panel(tmp_path / "p.csv", tmp_path / "i.csv")


def test_envelope_validation():
    v = np.ones((2, 3, 6))
    v[0, 1, 2] = 0.5  # high below close
    with pytest.raises(PanelError, match="envelope"):
        StockPanel(("A", "B"), ("d1", "d2", "d3"), v)


def test_windows_and_labels(small_panel):
    panel, _ = small_panel
    ws = make_windows(panel, 10)
    assert len(ws) == panel.n_days - 10
    assert ws[0].t == 9 and ws[-1].t == panel.n_days - 2
    w = ws[5]
    np.testing.assert_array_equal(w.features, panel.values[:, w.t - 9: w.t + 1])
    c = panel.close
    np.testing.assert_allclose(w.returns, c[:, w.t + 1] / c[:, w.t] - 1, rtol=1e-12)
    with pytest.raises(InsufficientHistoryError):
        make_windows(panel, panel.n_days)


def test_market_index_is_cross_sectional_mean(small_panel):
    w = make_windows(small_panel[0], 10)[0]
    m = market_index(w)
    assert m.shape == (1, 10, len(FEATURES))
    np.testing.assert_allclose(m[0], w.features.mean(axis=0))


def test_scaler_uses_only_fit_range(small_panel):
    panel, _ = small_panel
    sc = Scaler.fit(panel, 29)
    np.testing.assert_allclose(sc.mean[:, 0], panel.values[:, :30].mean(axis=1))
    z = sc.transform(panel.values[:, :30])
    np.testing.assert_allclose(z.mean(axis=1), 0, atol=1e-9)


@given(st.integers(3, 400), st.floats(0.1, 0.9), st.floats(0.0, 0.3))
def test_split_is_chronological_partition(n, tf, vf):
    assume(tf + vf <= 1 and int(n * tf) >= 1)
    s = chronological_split(n, tf, vf)
    assert s.train + s.val + s.test == list(range(n))


def test_regime_validation():
    with pytest.raises(ConfigError):
        RegimeConfig(segments=((0, 50, "rising"), (40, 60, "falling"))).resolved_segments(100)
    with pytest.raises(ConfigError):
        RegimeConfig(segments=((0, 50, "sideways"),)).resolved_segments(100)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_generator_prices_valid(seed):
    panel, _ = gen_synthetic(seed, 5, 40)
    assert np.all(panel.values > 0)
    assert panel.values[:, 0, CLOSE].shape == (5,)


def test_common_factor_only_gives_unit_correlation():
    cfg = RegimeConfig(industry_vol=0.0, idio_vol=0.0, signal=0.0)
    panel, _ = gen_synthetic(1, 5, 60, cfg)
    c = panel.close
    r = c[:, 1:] / c[:, :-1] - 1
    np.testing.assert_allclose(np.corrcoef(r[:, 1:]), 1.0, atol=1e-9)


def _mean_offdiag_spearman(panel, start, end, lookback=20):
    from stockssm.dyngraph import spearman_from_series
    n = panel.n_stocks
    vals = []
    for t in range(start + lookback - 1, end):
        q, _ = spearman_from_series(panel.close[:, t - lookback + 1: t + 1])
        vals.append((q.sum() - n) / (n * (n - 1)))
    return float(np.mean(vals))


@pytest.mark.parametrize("seed", [7, 11, 23])
def test_falling_segment_is_more_correlated(seed):
    panel, _ = gen_synthetic(seed, 20, 120)
    (r0, r1, _), (f0, f1, _), (s0, s1, _) = RegimeConfig().resolved_segments(120)
    falling = _mean_offdiag_spearman(panel, f0, f1)
    assert falling > _mean_offdiag_spearman(panel, r0, r1)
    assert falling > _mean_offdiag_spearman(panel, s0, s1)


def test_window_boundaries():
    panel, _ = gen_synthetic(0, 3, 100)
    ws = make_windows(panel, 20)
    assert len(ws) == 80
    assert [w.t + 1 for w in ws] == list(range(20, 100))  # labels tile days 21..100 (1-based)
    short = StockPanel(panel.tickers, panel.calendar[:21], panel.values[:, :21])
    assert len(make_windows(short, 20)) == 1


def test_return_definition():
    v = np.ones((2, 2, 6))
    v[0, :, :4] = [[100.0] * 4, [103.0] * 4]
    p = StockPanel(("A", "B"), ("2021-01-01", "2021-01-02"), v)
    assert make_windows(p, 1)[0].returns[0] == pytest.approx(0.03, abs=1e-15)


def test_market_index_cases(rng):
    x = rng.standard_normal((1, 20, 6))
    np.testing.assert_array_equal(market_index(x), x)
    assert not np.any(market_index(np.concatenate([x, -x])))
    y = rng.standard_normal((5, 20, 6))
    oracle = np.zeros((1, 20, 6))
    for l in range(20):
        for f in range(6):
            oracle[0, l, f] = sum(y[i, l, f] for i in range(5)) / 5
    np.testing.assert_allclose(market_index(y), oracle, atol=1e-12)
    np.testing.assert_allclose(market_index(2.5 * y), 2.5 * market_index(y), rtol=1e-14)


def test_scaler_preserves_order(small_panel):
    panel, _ = small_panel
    z = Scaler.fit(panel, 29).transform(panel.values)
    np.testing.assert_array_equal(np.argsort(z, axis=1, kind="stable"),
                                  np.argsort(panel.values, axis=1, kind="stable"))


def test_windowing_is_pure(small_panel):
    a = make_windows(small_panel[0], 10)
    b = make_windows(small_panel[0], 10)
    assert all(np.array_equal(x.features, y.features) for x, y in zip(a, b))


def test_generator_rejects_bad_sizes():
    with pytest.raises(ConfigError):
        gen_synthetic(0, 1, 60)
    with pytest.raises(ConfigError):
        gen_synthetic(0, 5, 10)
