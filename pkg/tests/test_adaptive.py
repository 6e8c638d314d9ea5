import numpy as np
import pytest

from src.core.adaptive import (
    DEFAULT_ETA_GRID, AdaptiveCdf, AdaptiveProvider, EmaEstimator, cdf_update, ema_update,
    eta_from_half_life, eta_to_rate, half_life, rate_to_eta, scan_blocks, search_half_life
)
from src.core.context_model import OrderMapper, PositionMapper
from src.core.errors import StatsError
from src.core.rans import decode, encode


def switching_source(rng, length=20000, period=500):
    first = [0.85, 0.05, 0.05, 0.05]
    second = [0.05, 0.05, 0.05, 0.85]
    blocks = [rng.choice(4, size=period, p=first if index % 2 == 0 else second)
              for index in range(length // period)]
    return np.concatenate(blocks)


def test_half_life_conversions():
    assert half_life(0.5) == pytest.approx(1.0)
    assert half_life(eta_from_half_life(37.0)) == pytest.approx(37.0)
    assert rate_to_eta(4) == pytest.approx(1 - 1 / 16)
    assert eta_to_rate(rate_to_eta(5)) == pytest.approx(5.0)
    assert half_life(rate_to_eta(1)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        half_life(1.0)
    with pytest.raises(ValueError):
        half_life(0.0)


def test_default_grid():
    assert len(DEFAULT_ETA_GRID) == 14
    assert DEFAULT_ETA_GRID[0] == 0.5
    assert DEFAULT_ETA_GRID[-1] == pytest.approx(1 - 2 ** -14)


def test_ema_update():
    est = EmaEstimator(0.5)
    est = ema_update(est, 1.0)
    assert est.value == pytest.approx(0.5)
    est = est.update(1.0)
    assert est.value == pytest.approx(0.75)
    assert est.half_life == pytest.approx(1.0)


def test_short_block_raises(rng):
    with pytest.raises(StatsError):
        search_half_life(rng.integers(0, 4, 999))
    with pytest.raises(ValueError):
        search_half_life(rng.integers(0, 4, 2000), order=2)


def test_stationary_source_prefers_long_memory(rng):
    result = search_half_life(rng.choice(4, size=20000, p=[0.4, 0.3, 0.2, 0.1]), alphabet_size=4)

    assert result.half_life > 100
    assert len(result.bpv_by_eta) == len(DEFAULT_ETA_GRID)
    assert result.bpv_best == min(result.bpv_by_eta)


def test_switching_source_prefers_short_memory(rng):
    result = search_half_life(switching_source(rng), alphabet_size=4)

    assert not result.flat
    assert 2 < result.half_life < 500
    assert result.bpv_best < result.bpv_by_eta[-1] - 0.2


def test_order1_search(rng):
    result = search_half_life(switching_source(rng), alphabet_size=4, order=1)
    assert not result.flat


def test_scan_blocks_skips_short_tail(rng):
    symbols = rng.integers(0, 4, 4900)
    scans = scan_blocks(symbols, 2000, alphabet_size=4)

    assert [scan.block_index for scan in scans] == [0, 1]
    assert [scan.start for scan in scans] == [0, 2000]
    assert scan_blocks(symbols, 2000, alphabet_size=4)[0].length == 2000
    assert scan_blocks(np.zeros(0, dtype=np.int64), 2000) == []


@pytest.mark.parametrize("update_period", [1, 16])
def test_adaptive_tables_stay_valid(rng, update_period):
    model = AdaptiveCdf.uniform(2, 8, rate=4, update_period=update_period)
    for symbol in rng.choice(8, size=500, p=[0.9] + [0.1 / 7] * 7):
        cdf_update(model, 1, int(symbol))
        table = model.freq_table(1)
        assert sum(table.freqs) == 4096
        assert min(table.freqs) >= 1

    assert model.freqs(1)[0] > 2048
    assert model.freqs(0).tolist() == [512] * 8


def test_shift_toward_moves_by_rate():
    model = AdaptiveCdf.uniform(1, 2, rate=1)
    model.shift_toward(0, np.array([0, 4000, 4096]))
    assert model.cdf[0].tolist() == [0, 3024, 4096]


@pytest.mark.parametrize("update_period", [1, 16])
def test_adaptive_provider_roundtrip(rng, update_period):
    lengths = [0, 1, 7, 120, 3, 60]
    symbols = rng.integers(0, 4, sum(lengths)).tolist()
    mapper = OrderMapper(4, 2)

    payload = encode(symbols, AdaptiveProvider(mapper, lengths, update_period=update_period))
    decoded = decode(payload, len(symbols), AdaptiveProvider(mapper, lengths, update_period=update_period))
    assert decoded == symbols


def test_adaptive_provider_learns():
    symbols = [2] * 2000
    adaptive = encode(symbols, AdaptiveProvider(PositionMapper(4, 1), [2000], update_period=1))
    assert len(adaptive) < 2000 * 2 / 8 / 4
