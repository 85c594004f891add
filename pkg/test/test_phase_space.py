"""
kinematics/phase_space 的單元測試：lift、球座標、PhasePoint 的偽範數檢查。

驗證 p⁰ = √(1+‖p‖²)、‖v‖ < 1、p = 0 的退化方向、違反偽範數關係時拒絕建立。
"""
import numpy as np
import pytest

from kinematics.phase_space import (
    PhasePoint,
    from_spherical,
    lift,
    lorentz_factor,
    phase_point_from_momentum,
    to_spherical,
)
from utils.errors import ModelValidationError


def test_lift_rest_and_moving():
    """
    驗證靜止粒子 p⁰ = 1、v = 0；p = (3, 4) 時 p⁰ = √26 且 ‖v‖ < 1。

    實務：p⁰ 一律由 p 重算，確保偽範數關係不因積分誤差漂移。
    """
    rest = lift(np.zeros(3))
    assert rest.p0 == 1.0
    np.testing.assert_array_equal(rest.velocity, np.zeros(3))

    moving = lift(np.array([3.0, 4.0]))
    assert moving.p0 == pytest.approx(np.sqrt(26.0))
    assert np.linalg.norm(moving.velocity) < 1.0


def test_lorentz_factor_batch():
    """
    驗證 lorentz_factor 沿最後一軸批次計算。

    實務：系綜輸出的能量欄位直接由 (n, d) 動量矩陣算出。
    """
    p = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 4.0]])
    np.testing.assert_allclose(lorentz_factor(p), [1.0, np.sqrt(2.0), np.sqrt(26.0)])


def test_spherical_round_trip_and_degenerate():
    """
    驗證 p → (r, θ) → p 還原，且 p = 0 時 θ 取 e₁ 並標記 degenerate。

    實務：原點方向未定義，EM 的 η θ dw 項需要固定的慣例。
    """
    p = np.array([1.0, -2.0, 2.0])
    sph = to_spherical(p)
    assert sph.r == pytest.approx(3.0)
    assert not sph.degenerate
    np.testing.assert_allclose(from_spherical(sph.r, sph.theta), p)

    zero = to_spherical(np.zeros(3))
    assert zero.degenerate
    np.testing.assert_array_equal(zero.theta, [1.0, 0.0, 0.0])


def test_phase_point_pseudo_norm():
    """
    驗證 phase_point_from_momentum 的殘差在容許值內，且手動給錯 p⁰ 會被拒絕。

    實務：所有輸出到 CSV 的狀態都必須滿足 (p⁰)² − ‖p‖² = 1。
    """
    point = phase_point_from_momentum(np.array([10.0, 0.0, 0.0]))
    assert abs(point.pseudo_norm_residual) <= 1e-10 * point.p0**2
    assert point.r == pytest.approx(10.0)
    assert point.as_row().shape == (2 + 3 + 1 + 3,)

    with pytest.raises(ModelValidationError):
        PhasePoint(t=0.0, x=np.zeros(3), p0=1.0, p=np.array([1.0, 0.0, 0.0]))


def test_phase_point_rejects_bad_input():
    """
    驗證維度不符、非有限值、負時間都被拒絕。

    實務：錯誤在建立狀態時就擋下，避免模擬途中才爆掉。
    """
    with pytest.raises(ModelValidationError):
        phase_point_from_momentum(np.zeros(3), x=np.zeros(2))
    with pytest.raises(ModelValidationError):
        phase_point_from_momentum(np.array([np.nan, 0.0]))
    with pytest.raises(ModelValidationError):
        phase_point_from_momentum(np.zeros(2), t=-1.0)
