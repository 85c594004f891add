"""
analysis/decay 的單元測試：evolve_density、gaussian_bump、fit_decay_rate、decay_report。

以古典 OU 為解析基準：E[r²] 以速率 2 趨近 d，ℓ = 0 扇區的 L² 距離以速率 2 衰減；
另驗證常數密度不動、質量守恆、TV ≤ L²、ROUP 的衰減不慢於 ℓ = 0 譜隙且落在 Poincaré 上界內。
"""
from unittest import mock

import numpy as np
import pytest
from scipy.linalg import solveh_banded as real_solveh_banded

from analysis.decay import decay_report, evolve_density, fit_decay_rate, gaussian_bump
from analysis.generator import discretize_generator, smallest_eigenvalues, spectral_gap
from analysis.lyapunov import lyapunov_certificate
from analysis.poincare import poincare_constant
from equilibrium.measure import build_measure
from models.builtin_models import builtin_model
from models.radial_grid import RadialGrid
from utils.errors import ModelValidationError, NumericalConvergenceError

GRID = RadialGrid(r_max=50.0, n_nodes=4096)


@pytest.fixture(scope="module")
def ou3():
    coeffs = builtin_model("classical_ou", 3, 1.0)
    measure = build_measure(coeffs, GRID)
    return measure, discretize_generator(coeffs, measure, 0)


def test_equilibrium_is_fixed_point(ou3):
    """
    驗證 h₀ ≡ 1 時每個檢查點都維持 1。

    實務：K 的列和為 0，ν 本身必須是離散演化的不動點。
    """
    _, op = ou3
    evolution = evolve_density(op, np.ones(op.size), t_end=1.0, dt=0.1)

    np.testing.assert_allclose(evolution.densities, 1.0, atol=1e-12)
    assert evolution.times.size == 21


def test_ou_second_moment_relaxes(ou3):
    """
    驗證 E_t[r²] = 3 + (E₀ − 3)e^{−2t}（d=3），誤差在初始偏差的 1% 內，且質量守恆到 1e−8。

    實務：𝓛r² = 2d − 2r²，二階矩的時間演化有閉式，可檢查時間推進與空間離散兩者。
    """
    _, op = ou3
    h0 = gaussian_bump(op, center=2.0, width=0.5)
    times = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0]
    evolution = evolve_density(op, h0, t_end=2.0, dt=0.01, checkpoints=times)

    second = evolution.densities @ (op.masses * op.nodes**2)
    excess0 = second[0] - 3.0
    expected = 3.0 + excess0 * np.exp(-2.0 * evolution.times)
    np.testing.assert_allclose(second, expected, atol=0.01 * abs(excess0))
    np.testing.assert_allclose(evolution.masses, 1.0, atol=1e-8)


def test_ou_decay_rate(ou3):
    """
    驗證古典 OU 的 L² 與 TV 擬合衰減率約為 ℓ = 0 譜隙 2（2% 內），且 L² 距離單調遞減、TV ≤ L²。

    實務：旋轉對稱的初始密度只激發 ℓ = 0 扇區，衰減率由該扇區的第一個非零特徵值決定。
    """
    measure, op = ou3
    h0 = gaussian_bump(op, center=2.0, width=0.5)
    evolution = evolve_density(op, h0, t_end=8.0, dt=0.01, checkpoints=np.linspace(0.0, 8.0, 81))
    report = decay_report(evolution, measure, window=(1e-6, 1e-2))

    assert not report.flagged
    assert report.fitted_rate_l2 == pytest.approx(2.0, rel=2e-2)
    assert report.fitted_rate_tv == pytest.approx(2.0, rel=2e-2)
    assert report.monotone
    assert np.all(report.tv_distances <= report.l2_distances + 1e-15)
    assert report.c2 is None and report.rate_ok is None
    assert list(report.to_frame().columns) == ["t", "l2", "tv"]


def test_fit_decay_rate_exact_exponential():
    """
    驗證純指數 3e^{−0.7t} 的擬合率為 0.7，區段外的點不計入。

    實務：擬合只用相對初值落在 [1e−6, 1e−1] 的點，避開初期暫態與末端捨入。
    """
    times = np.linspace(0.0, 10.0, 51)
    rate, count = fit_decay_rate(times, 3.0 * np.exp(-0.7 * times))

    assert rate == pytest.approx(0.7, rel=1e-10)
    expected = np.sum((np.exp(-0.7 * times) >= 1e-6) & (np.exp(-0.7 * times) <= 1e-1))
    assert count == expected

    slow, slow_count = fit_decay_rate(times, 3.0 * np.exp(-0.01 * times))
    assert np.isnan(slow) and slow_count == 0


def test_roup_decay_within_poincare_bound():
    """
    驗證 ROUP（β=1, d=3）的 L² 衰減率不慢於 ℓ = 0 扇區的第一個非零特徵值（5% 內），
    且 L²、TV 距離都在 e^{−t/(2c₂)}‖h₀ − 1‖ 之下。

    實務：log ‖h_t − 1‖ 是凸函數，任何區段的斜率都不慢於最慢的本徵模。
    """
    coeffs = builtin_model("roup", 3, 1.0)
    measure = build_measure(coeffs, GRID)
    op = discretize_generator(coeffs, measure, 0)
    radial_gap = float(smallest_eigenvalues(op, 2)[1])
    bound = poincare_constant(
        lyapunov_certificate(coeffs), coeffs, measure, gap=spectral_gap(coeffs, measure, refine=False)
    )

    h0 = gaussian_bump(op, center=3.0, width=1.0)
    evolution = evolve_density(op, h0, t_end=60.0, dt=0.05, checkpoints=np.linspace(0.0, 60.0, 61))
    report = decay_report(evolution, measure, bound=bound)

    assert not report.flagged
    assert report.fitted_rate_l2 >= 0.95 * radial_gap
    assert report.l2_bound_ok and report.tv_bound_ok
    assert report.rate_ok
    assert report.summary()["c2"] == pytest.approx(bound.c2)


def test_negative_density_is_rejected(ou3):
    """
    驗證 Crank–Nicolson 步出現低於 −1e−10 的值時拋出 NumericalConvergenceError，訊息建議 dt/4。

    實務：Rannacher 起步後實際資料很難出現負值，這裡以 mock 讓求解器在第一個 CN 步回傳負值，
    確認檢查路徑與 CLI 的 exit 2 對應。
    """
    _, op = ou3
    calls = {"n": 0}

    def shifted(ab, rhs):
        calls["n"] += 1
        out = real_solveh_banded(ab, rhs)
        return out - 10.0 if calls["n"] > 2 else out

    with mock.patch("analysis.decay.solveh_banded", side_effect=shifted):
        with pytest.raises(NumericalConvergenceError) as exc:
            evolve_density(op, np.ones(op.size), t_end=1.0, dt=0.2)
    assert exc.value.achieved_tol > 1e-10
    assert "0.05" in str(exc.value)


def test_short_run_is_flagged(ou3):
    """
    驗證距離從未降到初值 10% 以下時標記 flagged，rate_ok 為 None。

    實務：演化時間太短時不判定衰減率，而不是回傳不可靠的擬合值。
    """
    measure, op = ou3
    evolution = evolve_density(op, gaussian_bump(op, 2.0, 0.5), t_end=0.3, dt=0.01,
                               checkpoints=np.linspace(0.0, 0.3, 6))
    report = decay_report(evolution, measure)

    assert report.flagged
    assert np.isnan(report.fitted_rate_l2)


def test_invalid_inputs_are_rejected(ou3):
    """
    驗證 ℓ ≠ 0、h₀ 為負、質量不為 1、檢查點少於 5 個都被拒絕。

    實務：輸入錯誤以 ModelValidationError 回報，與數值失敗（exit 2）區分。
    """
    measure, op = ou3
    coeffs = op.coeffs
    with pytest.raises(ModelValidationError):
        evolve_density(discretize_generator(coeffs, measure, 1), np.ones(op.size - 1), 1.0, 0.1)
    with pytest.raises(ModelValidationError):
        evolve_density(op, -np.ones(op.size), 1.0, 0.1)
    with pytest.raises(ModelValidationError):
        evolve_density(op, 2.0 * np.ones(op.size), 1.0, 0.1)

    short = evolve_density(op, np.ones(op.size), 1.0, 0.1, checkpoints=[0.0, 0.5, 1.0])
    with pytest.raises(ModelValidationError):
        decay_report(short, measure)
