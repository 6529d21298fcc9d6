import math
import warnings

import pytest

from varchart.calibrate import CalibrationTarget, bracket_limit, calibrate_limit, limit_cache_key
from varchart.charts import ChartConfig
from varchart.errors import CalibrationError, ConfigError
from varchart.process import ChangeSpec, ProcessSpec
from varchart.runlength import CensoringWarning, estimate_arl
from varchart.store import MemoryCache, ResultsStore

WHITE = ProcessSpec.ar1(0.0)


def arl_at(cfg, c, target, seed=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CensoringWarning)
        return estimate_arl(cfg.with_limit(c), WHITE if cfg.scheme != "sr" else ProcessSpec.ar1(0.3),
                            ChangeSpec(), target.reps, target.seed if seed is None else seed, target.cap)


@pytest.mark.parametrize("bad", [dict(xi=1.0), dict(rel_tol=0.0), dict(rel_tol=0.2), dict(reps=1), dict(cap=0)])
def test_target_validation(bad):
    with pytest.raises(ConfigError):
        CalibrationTarget(**bad)


def test_target_default_cap():
    assert CalibrationTarget(xi=200).cap == 20000


def test_bracket_straddles_target():
    cfg = ChartConfig("cusum_iid", 1.5)
    target = CalibrationTarget(reps=20000, seed=3)
    lo, hi = bracket_limit(cfg, WHITE, target)
    assert lo < hi
    assert arl_at(cfg, lo, target).mean < 500 < arl_at(cfg, hi, target).mean
    fresh_lo, fresh_hi = arl_at(cfg, lo, target, seed=99), arl_at(cfg, hi, target, seed=99)
    assert fresh_lo.mean < 500 + 3 * fresh_lo.std_err
    assert fresh_hi.mean > 500 - 3 * fresh_hi.std_err


def test_calibration_hits_target_and_is_reproducible():
    cfg = ChartConfig("sprt", 1.5)
    target = CalibrationTarget(reps=20000, seed=5)
    res = calibrate_limit(cfg, WHITE, target)
    assert res.within_tolerance
    assert abs(res.achieved_arl.mean - 500) <= max(0.005 * 500, 3 * res.achieved_arl.std_err)
    assert res.achieved_arl == arl_at(cfg, res.c, target)
    again = calibrate_limit(cfg, WHITE, target)
    assert again.c.hex() == res.c.hex()
    fresh = arl_at(cfg, res.c, target, seed=1234)
    joint = math.hypot(fresh.std_err, res.achieved_arl.std_err)
    assert abs(fresh.mean - 500) <= max(0.005 * 500, 3 * joint)


def test_log_scale_for_sr():
    cfg = ChartConfig("sr", 1.5)
    target = CalibrationTarget(xi=3.0, reps=5000, seed=0)
    res = calibrate_limit(cfg, ProcessSpec.ar1(0.3), target)
    assert res.within_tolerance
    big = calibrate_limit(cfg, ProcessSpec.ar1(0.3), CalibrationTarget(xi=500, reps=5000, seed=0))
    assert big.c > res.c and big.within_tolerance


def test_tiny_target_gives_small_limit():
    # at c = 0 the sprt alarms once a squared residual exceeds K(1.5), an ARL of about 4.4
    cfg = ChartConfig("sprt", 1.5)
    res = calibrate_limit(cfg, WHITE, CalibrationTarget(xi=5.0, reps=5000, seed=0, rel_tol=0.01))
    assert res.within_tolerance
    assert 0.0 <= res.c < 0.5
    with pytest.raises(CalibrationError):
        calibrate_limit(cfg, WHITE, CalibrationTarget(xi=2.0, reps=5000, seed=0))


def test_unreachable_target_reports_history():
    # the gsprt statistic is positive as soon as T_n > n, whose first time has a heavy tail
    target = CalibrationTarget(xi=50.0, reps=2000, seed=0, cap=5000)
    with pytest.raises(CalibrationError) as info:
        calibrate_limit(ChartConfig("gsprt"), WHITE, target)
    assert info.value.history and "no limit attains" in str(info.value)


def test_cache_round_trip(tmp_path):
    cfg = ChartConfig("gsr")
    target = CalibrationTarget(xi=100, reps=3000, seed=2)
    mem = MemoryCache()
    res = calibrate_limit(cfg, WHITE, target, cache=mem)
    assert len(mem) == 1 and calibrate_limit(cfg, WHITE, target, cache=mem) is res
    store = ResultsStore(tmp_path)
    first = calibrate_limit(cfg, WHITE, target, cache=store)
    hit = ResultsStore(tmp_path).get(limit_cache_key(cfg, WHITE, target))
    assert hit.c.hex() == first.c.hex() == res.c.hex()
    assert hit.achieved_arl.mean == first.achieved_arl.mean


def test_cache_key_separates_settings():
    t = CalibrationTarget(reps=1000)
    keys = {
        limit_cache_key(ChartConfig("sprt", 1.5), WHITE, t),
        limit_cache_key(ChartConfig("sprt", 1.75), WHITE, t),
        limit_cache_key(ChartConfig("sprt", 1.5), ProcessSpec.ar1(0.4), t),
        limit_cache_key(ChartConfig("sprt", 1.5), WHITE, CalibrationTarget(reps=1000, seed=1)),
        limit_cache_key(ChartConfig("sprt", 1.5), WHITE, CalibrationTarget(reps=2000)),
        limit_cache_key(ChartConfig("sprt", 1.5), WHITE, CalibrationTarget(reps=1000, cap=900)),
        limit_cache_key(ChartConfig("gsr", gsr_paper_half=True), WHITE, t),
        limit_cache_key(ChartConfig("gsr"), WHITE, t),
    }
    assert len(keys) == 8
