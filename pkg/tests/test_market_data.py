import math
from datetime import date

import numpy as np
import pytest

from ddqn_trader.errors import DataError
from ddqn_trader.market_data import (
    ModelId,
    PriceSeries,
    ReturnSeries,
    SplitSpec,
    VolSeries,
    build_features,
    ewma_vol,
    load_csv,
    log_returns,
    normalize,
    read_frame_csv,
    split,
    synth_generate,
    write_frame_csv,
)

from conftest import weekdays


def write_csv(tmp_path, text, name="prices.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def make_prices(closes, asset_id="spx", start=date(2020, 1, 6)):
    return PriceSeries(asset_id, weekdays(start, len(closes)), np.asarray(closes, dtype=float))


# ---------------------------------------------------------------- load_csv

def test_load_csv_two_rows(tmp_path):
    path = write_csv(tmp_path, "date,close\n2020-01-02,100.0\n2020-01-03,101.0\n")
    series = load_csv(path)
    assert len(series) == 2
    assert series.dates == (date(2020, 1, 2), date(2020, 1, 3))
    assert series.closes.tolist() == [100.0, 101.0]
    assert series.drop_count == 0


def test_load_csv_drops_missing_close(tmp_path):
    path = write_csv(tmp_path, "date,close\n2020-01-02,100.0\n2020-01-03,\n2020-01-06,102.0\n")
    series = load_csv(path)
    assert len(series) == 2
    assert series.drop_count == 1


def test_load_csv_sorts_out_of_order_dates(tmp_path):
    rows = ["2020-01-08,103.0", "2020-01-02,100.0", "2020-01-06,101.0"]
    path = write_csv(tmp_path, "date,close\n" + "\n".join(rows) + "\n")
    series = load_csv(path)
    # independent sort oracle over the raw rows
    expected = sorted((date.fromisoformat(r.split(",")[0]), float(r.split(",")[1])) for r in rows)
    assert series.dates == tuple(d for d, _ in expected)
    assert series.closes.tolist() == [c for _, c in expected]


def test_load_csv_duplicate_date_rejected(tmp_path):
    path = write_csv(tmp_path, "date,close\n2020-01-02,100.0\n2020-01-02,101.0\n")
    with pytest.raises(DataError, match="2020-01-02"):
        load_csv(path)


def test_load_csv_zero_valid_rows(tmp_path):
    path = write_csv(tmp_path, "date,close\nnot-a-date,oops\n")
    with pytest.raises(DataError, match="no valid rows"):
        load_csv(path)


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DataError, match="cannot read"):
        load_csv(tmp_path / "nope.csv")


def test_load_csv_requires_named_header(tmp_path):
    path = write_csv(tmp_path, "day,price\n2020-01-02,100.0\n")
    with pytest.raises(DataError, match="header"):
        load_csv(path)


def test_load_csv_extra_columns_ok(tmp_path):
    path = write_csv(tmp_path, "Close,volume,Date\n100.0,5,2020-01-02\n101.0,9,2020-01-03\n")
    series = load_csv(path)
    assert series.closes.tolist() == [100.0, 101.0]


def test_price_series_rejects_nonpositive_close():
    with pytest.raises(DataError, match="non-positive"):
        make_prices([100.0, 0.0, 101.0])


# ------------------------------------------------------------- log_returns

def test_log_returns_constant_price():
    series = make_prices([100.0, 100.0])
    out = log_returns(series, 1)
    assert out.values.tolist() == [0.0]
    assert out.dates == series.dates[1:]


def test_log_returns_inverse_of_exp():
    series = make_prices([100.0, 100.0 * math.exp(0.01)])
    out = log_returns(series, 1)
    assert out.values[0] == pytest.approx(0.01, abs=1e-15)


def test_log_returns_geometric_closed_form():
    closes = 100.0 * 1.001 ** np.arange(30)
    out = log_returns(make_prices(closes), 5)
    # closed form: every 5-day log return of a ratio-r geometric series is 5*ln(r)
    assert np.allclose(out.values, 5 * math.log(1.001), atol=1e-12)
    assert len(out) == 25


def test_log_returns_bad_horizon():
    with pytest.raises(ValueError, match="horizon"):
        log_returns(make_prices([1.0, 2.0, 3.0]), 2)


def test_log_returns_series_too_short():
    with pytest.raises(DataError, match="need more than 5"):
        log_returns(make_prices([1.0] * 5), 5)


def test_log_returns_recover_price_ratio():
    rng = np.random.default_rng(3)
    closes = 100.0 * np.exp(np.cumsum(rng.normal(0, 0.02, size=200)))
    series = make_prices(closes)
    r1 = log_returns(series, 1)
    recovered = np.exp(np.cumsum(r1.values))
    assert np.allclose(recovered, closes[1:] / closes[0], rtol=1e-12)


# ---------------------------------------------------------------- ewma_vol

def _returns(values, start=date(2020, 1, 6)):
    return ReturnSeries("spx", 1, weekdays(start, len(values)), np.asarray(values, dtype=float))


def test_ewma_all_zero_returns():
    out = ewma_vol(_returns([0.0] * 30), decay=0.94)
    assert np.all(out.sigma == 0.0)


def test_ewma_constant_returns_fixed_point():
    # seed equals c^2, and c^2 is the exact fixed point of the recursion
    c = 0.02
    out = ewma_vol(_returns([c] * 50), decay=0.94)
    assert np.allclose(out.sigma, abs(c), atol=1e-15)


def test_ewma_hand_recursion():
    out = ewma_vol(_returns([0.02, 0.0]), decay=0.5, seed_var=0.0004)
    # var_1 = .5*4e-4 + .5*4e-4 = 4e-4 ; var_2 = .5*4e-4 + .5*0 = 2e-4
    assert out.sigma[0] == pytest.approx(math.sqrt(4e-4), abs=1e-15)
    assert out.sigma[1] == pytest.approx(math.sqrt(2e-4), abs=1e-15)


def test_ewma_seed_uses_first_twenty():
    rng = np.random.default_rng(5)
    values = rng.normal(0, 0.01, size=60)
    out = ewma_vol(_returns(values), decay=0.9)
    # independent recursion oracle
    var = float(np.mean(values[:20] ** 2))
    for t in range(60):
        var = 0.9 * var + 0.1 * values[t] ** 2
        assert out.sigma[t] == pytest.approx(math.sqrt(var), rel=1e-12)


@pytest.mark.parametrize("decay", [0.0, 1.0, -0.5, 1.5])
def test_ewma_decay_out_of_range(decay):
    with pytest.raises(ValueError, match="decay"):
        ewma_vol(_returns([0.01]), decay=decay)


# --------------------------------------------------------------- normalize

def _vol(sigmas, start=date(2020, 1, 6), decay=0.94):
    return VolSeries("spx", weekdays(start, len(sigmas)), np.asarray(sigmas, dtype=float), decay)


def test_normalize_zero_return():
    out = normalize(_returns([0.0]), _vol([0.01]))
    assert out.values[0] == 0.0


def test_normalize_direct_arithmetic():
    out = normalize(_returns([0.01]), _vol([0.01]))
    expected = 0.01 / (0.01 * math.sqrt(252.0))  # = 1/sqrt(252) ~ 0.0629940788349
    assert out.values[0] == pytest.approx(expected, abs=1e-15)
    assert out.values[0] == pytest.approx(0.06299407883487121, abs=1e-15)


def test_normalize_sign_symmetry():
    out = normalize(_returns([-0.02]), _vol([0.02]))
    assert out.values[0] == pytest.approx(-1.0 / math.sqrt(252.0), abs=1e-15)


def test_normalize_zero_sigma_with_return_names_date():
    with pytest.raises(DataError, match="2020-01-07"):
        normalize(_returns([0.0, 0.01]), _vol([0.01, 0.0]))


def test_normalize_zero_sigma_zero_return_passes():
    out = normalize(_returns([0.0, 0.01]), _vol([0.0, 0.01]))
    assert out.values.tolist()[0] == 0.0


def test_normalize_misaligned_dates():
    with pytest.raises(DataError, match="date indices"):
        normalize(_returns([0.01]), _vol([0.01], start=date(2021, 1, 4)))


# ----------------------------------------------------------- build_features

def synth_map(seed=11, n=120):
    return {
        role: synth_generate(0.0003, 0.01, n, seed + i, regime="trend", asset_id=role)
        for i, role in enumerate(("spx", "russell", "wti", "gold"))
    }


def test_build_features_m0_has_two_columns():
    frame = build_features(ModelId.M0, synth_map())
    assert frame.n_features == 2
    assert frame.columns == (("spx", 1), ("spx", 5))


def test_build_features_m3_has_eight_columns():
    frame = build_features(ModelId.M3, synth_map())
    assert frame.n_features == 8


@pytest.mark.parametrize("model", list(ModelId))
def test_build_features_column_count_rule(model):
    frame = build_features(model, synth_map())
    assert frame.n_features == 2 * (int(model) + 1)
    assert np.all(np.isfinite(frame.values))


def test_build_features_inner_join_drops_missing_date():
    series = synth_map()
    russell = series["russell"]
    missing = russell.dates[60]
    keep = [i for i in range(len(russell)) if i != 60]
    series["russell"] = PriceSeries(
        "russell", tuple(russell.dates[i] for i in keep), russell.closes[keep]
    )
    frame = build_features(ModelId.M1, series)
    assert missing not in frame.dates
    full = build_features(ModelId.M1, synth_map())
    assert missing in full.dates


def test_build_features_missing_asset_named():
    series = synth_map()
    del series["gold"]
    with pytest.raises(DataError, match="gold"):
        build_features(ModelId.M3, series)


def test_build_features_target_is_raw_traded_return():
    series = synth_map()
    frame = build_features(ModelId.M1, series)
    spx = series["spx"]
    raw = dict(zip(spx.dates[1:], np.log(spx.closes[1:] / spx.closes[:-1])))
    for d, target in zip(frame.dates, frame.target_returns):
        assert target == pytest.approx(raw[d], abs=1e-15)


def test_build_features_invariant_under_price_scaling():
    series = synth_map()
    scaled = {
        role: PriceSeries(role, s.dates, s.closes * 3.0) for role, s in series.items()
    }
    a = build_features(ModelId.M2, series)
    b = build_features(ModelId.M2, scaled)
    assert np.allclose(a.values, b.values, atol=1e-12)
    assert np.allclose(a.target_returns, b.target_returns, atol=1e-12)


def test_build_features_horizon_scaled_option():
    series = synth_map()
    default = build_features(ModelId.M0, series)
    scaled = build_features(ModelId.M0, series, horizon_scaled=True)
    # 1-day column identical, 5-day column rescaled by sqrt(252)/sqrt(252/5)
    assert np.allclose(default.values[:, 0], scaled.values[:, 0], atol=1e-15)
    ratio = math.sqrt(252.0) / math.sqrt(252.0 / 5.0)
    assert np.allclose(scaled.values[:, 1], default.values[:, 1] * ratio, rtol=1e-12)


# ------------------------------------------------------------------- split

def test_split_partitions_by_count():
    frame = build_features(ModelId.M0, synth_map(n=120))
    boundary = frame.dates[69]
    spec = SplitSpec(frame.dates[0], boundary, frame.dates[-1])
    train, test = split(frame, spec)
    assert len(train) == 70
    assert len(test) == len(frame) - 70
    assert train.dates[-1] <= boundary < test.dates[0]


def test_split_boundary_between_trading_days_loses_nothing():
    frame = build_features(ModelId.M0, synth_map(n=120))
    friday = next(d for d in frame.dates[40:] if d.weekday() == 4)
    from datetime import timedelta

    saturday = friday + timedelta(days=1)
    train, test = split(frame, SplitSpec(frame.dates[0], saturday, frame.dates[-1]))
    assert len(train) + len(test) == len(frame)
    assert train.dates[-1] == friday


def test_split_train_end_after_last_date_errors():
    frame = build_features(ModelId.M0, synth_map(n=120))
    from datetime import timedelta

    with pytest.raises(DataError, match="train_end"):
        split(frame, SplitSpec(frame.dates[0], frame.dates[-1] + timedelta(days=5),
                               frame.dates[-1] + timedelta(days=10)))


def test_split_empty_test_partition_errors():
    frame = build_features(ModelId.M0, synth_map(n=120))
    from datetime import timedelta

    # train_end on a Friday, test_end on the following Saturday: the test
    # partition covers no trading day
    friday_idx = next(i for i in range(40, len(frame)) if frame.dates[i].weekday() == 4)
    friday = frame.dates[friday_idx]
    with pytest.raises(DataError, match="empty"):
        split(frame, SplitSpec(frame.dates[0], friday, friday + timedelta(days=1)))


def test_split_spec_ordering_validated():
    with pytest.raises(DataError, match="train_start"):
        SplitSpec(date(2021, 1, 4), date(2021, 1, 4), date(2021, 2, 1))


# ----------------------------------------------------------- synth_generate

def test_synth_noiseless_trend_is_geometric():
    series = synth_generate(mu=0.001, sigma=0.0, n_days=10, seed=0)
    ratios = series.closes[1:] / series.closes[:-1]
    assert np.allclose(ratios, math.exp(0.001), rtol=1e-12)


def test_synth_same_seed_identical():
    a = synth_generate(0.0005, 0.01, 50, seed=9)
    b = synth_generate(0.0005, 0.01, 50, seed=9)
    assert a.dates == b.dates
    assert np.array_equal(a.closes, b.closes)


def test_synth_meanrevert_alternates_exactly():
    a = 0.01
    series = synth_generate(mu=a, sigma=0.0, n_days=12, seed=4, regime="meanrevert")
    returns = np.diff(np.log(series.closes))
    expected = a * (-1.0) ** np.arange(11)  # construction oracle: +a, -a, +a, ...
    assert np.allclose(returns, expected, atol=1e-12)


def test_synth_flat_ignores_mu():
    a = synth_generate(mu=0.5, sigma=0.01, n_days=30, seed=2, regime="flat")
    b = synth_generate(mu=0.0, sigma=0.01, n_days=30, seed=2, regime="flat")
    assert np.array_equal(a.closes, b.closes)


def test_synth_validation():
    with pytest.raises(ValueError, match="sigma"):
        synth_generate(0.0, -1.0, 20, 0)
    with pytest.raises(ValueError, match="n_days"):
        synth_generate(0.0, 0.01, 5, 0)
    with pytest.raises(ValueError, match="regime"):
        synth_generate(0.0, 0.01, 20, 0, regime="chaotic")


# ------------------------------------------------------------ frame CSV io

def test_frame_csv_round_trip(tmp_path):
    frame = build_features(ModelId.M1, synth_map())
    path = tmp_path / "frame.csv"
    write_frame_csv(frame, path)
    loaded = read_frame_csv(path, ModelId.M1)
    assert loaded.dates == frame.dates
    assert loaded.columns == frame.columns
    assert np.array_equal(loaded.values, frame.values)  # repr round-trip is exact
    assert np.array_equal(loaded.target_returns, frame.target_returns)


def test_frame_csv_rereads_deterministically(tmp_path):
    frame = build_features(ModelId.M0, synth_map())
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_frame_csv(frame, p1)
    write_frame_csv(frame, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_read_frame_csv_width_mismatch(tmp_path):
    frame = build_features(ModelId.M0, synth_map())
    path = tmp_path / "frame.csv"
    write_frame_csv(frame, path)
    with pytest.raises(DataError, match="expects 4"):
        read_frame_csv(path, ModelId.M1)
