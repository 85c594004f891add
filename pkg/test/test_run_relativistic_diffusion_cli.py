"""
scripts/run_relativistic_diffusion 的整合測試：exit code 對應、run.json 寫入、小型端到端命令。

數值命令以 mock 取代，只驗證主流程：參數錯誤 64、驗證失敗 1、數值失敗 2、成功時 run.json 列出輸出。
model-check 與 equilibrium 以小網格實際執行。
"""
import json
from unittest import mock

import pytest

from conftest import require_module

require_module("dotenv", "pip install -r requirements.txt")

import scripts.run_relativistic_diffusion as runner  # noqa: E402
from utils.errors import (  # noqa: E402
    CertificationError,
    ModelValidationError,
    NumericalConvergenceError,
    StepRejectedError,
)


def _fake_handler(outputs, code=0):
    def handler(coeffs, params, out_dir):
        for name in outputs:
            (out_dir / name).write_text("{}", encoding="utf-8")
        return list(outputs), code

    return handler


def test_usage_error_returns_64():
    """
    驗證未知子命令時 main 回傳 64 而不是拋出 SystemExit。

    實務：腳本以 sys.exit(main()) 結束，exit code 由 main 的回傳值決定。
    """
    assert runner.main(["teleport"]) == 64


def test_success_writes_manifest(tmp_path):
    """
    驗證命令成功時回傳 0，run.json 列出輸出檔、生效參數與係數描述。

    實務：run.json 是重現一次執行所需的全部資訊。
    """
    handler = _fake_handler(["gap.json"])
    with mock.patch.dict(runner.COMMAND_HANDLERS, {"gap": handler}):
        code = runner.main(["gap", "--builtin", "classical_ou", "--d", "2", "--out", str(tmp_path)])

    assert code == 0
    record = json.loads((tmp_path / "gap" / "run.json").read_text(encoding="utf-8"))
    assert record["command"] == "gap"
    assert record["model"] == "classical_ou"
    assert record["outputs"] == ["gap.json"]
    assert record["parameters"]["d"] == 2
    assert record["parameters"]["coefficients"]["name"] == "classical_ou"


@pytest.mark.parametrize(
    "error, expected",
    [
        (ModelValidationError("bad model"), 1),
        (CertificationError("no certificate"), 1),
        (NumericalConvergenceError("not converged", achieved_tol=1e-3), 2),
        (StepRejectedError("blow-up"), 2),
    ],
)
def test_errors_map_to_exit_codes(tmp_path, error, expected):
    """
    驗證領域例外對應的 exit code，且失敗時不寫 run.json。

    實務：呼叫端依 exit code 區分「模型或證書錯」與「數值需要調整」。
    """
    handler = mock.Mock(side_effect=error)
    with mock.patch.dict(runner.COMMAND_HANDLERS, {"certify": handler}):
        with mock.patch("scripts.run_relativistic_diffusion.logger") as mock_logger:
            code = runner.main(["certify", "--builtin", "roup", "--out", str(tmp_path)])

    assert code == expected
    mock_logger.error.assert_called()
    assert not (tmp_path / "certify" / "run.json").exists()


def test_handler_exit_code_is_propagated(tmp_path):
    """
    驗證 handler 回傳的非零 exit code（如譜隙未收斂的 2）原樣傳回，輸出與 run.json 仍寫入。

    實務：未收斂仍輸出結果供檢查，但以 exit 2 提醒。
    """
    handler = _fake_handler(["gap.json"], code=2)
    with mock.patch.dict(runner.COMMAND_HANDLERS, {"gap": handler}):
        code = runner.main(["gap", "--builtin", "roup", "--out", str(tmp_path)])

    assert code == 2
    assert (tmp_path / "gap" / "run.json").exists()


def test_model_check_end_to_end(tmp_path):
    """
    驗證 model-check 對 ROUP 回傳 0 並寫出 hypotheses.json，對缺檔的模型回傳 1 且 run.log 記下原因。

    實務：model-check 是最便宜的命令，適合在長時間模擬前先跑。
    """
    code = runner.main(["model-check", "--builtin", "roup", "--d", "1", "--grid", "1024", "--out", str(tmp_path)])
    assert code == 0
    record = json.loads((tmp_path / "model-check" / "hypotheses.json").read_text(encoding="utf-8"))
    assert record["report"]["passed"] is True

    missing = runner.main(["model-check", "--model", str(tmp_path / "none.json"), "--out", str(tmp_path)])
    assert missing == 1
    run_log = (tmp_path / "model-check" / "run.log").read_text(encoding="utf-8")
    assert "model-check 失敗（驗證）" in run_log


def test_equilibrium_end_to_end_is_reproducible(tmp_path):
    """
    驗證 equilibrium 兩次執行的 equilibrium.csv 逐位元組相同。

    實務：無隨機性的命令輸出完全由參數決定。
    """
    argv = ["equilibrium", "--builtin", "roup", "--d", "3", "--grid", "512"]
    assert runner.main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert runner.main(argv + ["--out", str(tmp_path / "b")]) == 0

    first = (tmp_path / "a" / "equilibrium" / "equilibrium.csv").read_bytes()
    second = (tmp_path / "b" / "equilibrium" / "equilibrium.csv").read_bytes()
    assert first == second


def test_bad_config_returns_validation_exit(tmp_path):
    """
    驗證 --config 指向不存在或語法錯誤的檔案時 main 回傳 1，不拋出例外。

    實務：設定檔錯誤和模型錯誤一樣屬於輸入問題，用同一個 exit code。
    """
    broken = tmp_path / "broken.yaml"
    broken.write_text("model: [roup", encoding="utf-8")

    with mock.patch("scripts.run_relativistic_diffusion.logger") as mock_logger:
        missing = runner.main(["gap", "--config", str(tmp_path / "none.yaml"), "--out", str(tmp_path)])
        invalid = runner.main(["gap", "--config", str(broken), "--out", str(tmp_path)])

    assert missing == 1 and invalid == 1
    assert mock_logger.error.call_count == 2
    assert not (tmp_path / "gap").exists()


def test_unused_run_flag_is_warned_not_rejected(tmp_path):
    """
    驗證 model-check 帶 --seed 時照常執行並回傳 0，只記錄一筆忽略旗標的警告。

    實務：共用旗標對不需要它的命令沒有作用，但不該讓整批執行失敗。
    """
    handler = _fake_handler(["hypotheses.json"])
    with mock.patch.dict(runner.COMMAND_HANDLERS, {"model-check": handler}):
        with mock.patch("scripts.run_relativistic_diffusion.logger") as mock_logger:
            code = runner.main(["model-check", "--builtin", "roup", "--seed", "1", "--out", str(tmp_path)])

    assert code == 0
    warnings = [call.args[0] for call in mock_logger.warning.call_args_list]
    assert any("--seed" in message for message in warnings)


def _run_outputs(argv, out_dir, names, command):
    assert runner.main(argv + ["--out", str(out_dir)]) == 0
    return {name: (out_dir / command / name).read_bytes() for name in names}


def test_simulate_seeded_outputs_are_reproducible(tmp_path):
    """
    驗證 simulate --seed 7 兩次執行、以及 --workers 1 與 --workers 4 的 snapshots.csv、trajectory.csv 逐位元組相同。

    實務：每條路徑的雜訊由 (seed, 路徑編號) 決定，與執行緒數與執行次數無關。
    """
    argv = ["simulate", "--builtin", "roup", "--d", "2", "--seed", "7", "--dt", "0.01", "--t-end", "0.5",
            "--paths", "20", "--checkpoints", "5"]
    names = ["snapshots.csv", "trajectory.csv"]

    first = _run_outputs(argv + ["--workers", "1"], tmp_path / "a", names, "simulate")
    second = _run_outputs(argv + ["--workers", "1"], tmp_path / "b", names, "simulate")
    threaded = _run_outputs(argv + ["--workers", "4"], tmp_path / "c", names, "simulate")

    assert first == second
    assert first == threaded


def test_sample_seeded_outputs_are_reproducible(tmp_path):
    """
    驗證 sample --seed 7 兩次執行、以及 --workers 1 與 --workers 4 的 samples.csv 逐位元組相同。

    實務：抽樣按固定大小的區塊分配子串流，分給幾個執行緒不影響結果。
    """
    argv = ["sample", "--builtin", "roup", "--d", "3", "--grid", "512", "--seed", "7", "--samples", "500"]
    names = ["samples.csv"]

    first = _run_outputs(argv + ["--workers", "1"], tmp_path / "a", names, "sample")
    second = _run_outputs(argv + ["--workers", "1"], tmp_path / "b", names, "sample")
    threaded = _run_outputs(argv + ["--workers", "4"], tmp_path / "c", names, "sample")

    assert first == second
    assert first == threaded
