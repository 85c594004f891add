"""
utils/cli 的單元測試：parse_args、resolve_params、load_config。

驗證子命令與旗標解析、參數錯誤以 exit 64 結束、設定檔與 CLI 參數合併（CLI 優先）、
各子命令的專屬參數取自各自的設定區塊。
"""
import argparse

import pytest

from utils.cli import USAGE_EXIT_CODE, ignored_flags, load_config, parse_args, resolve_params
from utils.errors import ModelValidationError


def test_parse_args_subcommand_and_flags():
    """
    驗證子命令與共用模型參數、simulate 專屬參數可正確解析，未傳的參數為 None。

    實務：None 代表交給設定檔決定，resolve_params 才知道哪些值是 CLI 明確指定的。
    """
    args = parse_args(["simulate", "--builtin", "roup", "--beta", "2", "--d", "3", "--seed", "7", "--t-end", "5"])

    assert args.command == "simulate"
    assert args.builtin == "roup"
    assert args.beta == 2.0 and args.d == 3
    assert args.seed == 7 and args.t_end == 5.0
    assert args.dt is None and args.paths is None and args.model is None


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["fly"],
        ["gap", "--beta", "hot"],
        ["gap", "--builtin", "roup", "--model", "m.json"],
        ["gap", "--workers", "2"],
    ],
)
def test_usage_errors_exit_64(argv):
    """
    驗證缺子命令、未知子命令、型別錯誤、互斥旗標與子命令專屬旗標（gap --workers）都以 64 結束。

    實務：argparse 預設的 2 與「數值不收斂」衝突，參數錯誤改用 64。
    """
    with pytest.raises(SystemExit) as exc:
        parse_args(argv)
    assert exc.value.code == USAGE_EXIT_CODE


def _namespace(command, **overrides):
    base = dict(
        command=command, builtin=None, model=None, beta=None, d=None, b=None, sigma=None,
        tail_start=None, grid=None, rmax=None, out=None, config=None,
    )
    base.update(overrides)
    return argparse.Namespace(**base)


def test_resolve_params_cli_overrides_config():
    """
    驗證 CLI 有傳入的值覆寫設定檔，未傳入的沿用設定檔，grid_explicit 反映是否有指定網格。

    實務：預設全部來自 config/settings.yaml，CLI 只做局部覆寫。
    """
    config = {
        "model": {"builtin": "dunkel_hanggi", "beta": 1.0, "d": 3},
        "grid": {"nodes": 2048, "r_max": 40.0},
        "output": {"dir": "results"},
    }
    params = resolve_params(config, _namespace("gap", beta=2.0, rmax=60.0))

    assert params["builtin"] == "dunkel_hanggi"
    assert params["beta"] == 2.0 and params["d"] == 3
    assert params["grid_nodes"] == 2048 and params["r_max"] == 60.0
    assert params["grid_explicit"] is True
    assert params["out"] == "results"
    assert "seed" not in params


def test_resolve_params_model_file_ignores_builtin():
    """
    驗證 --model 有給時 builtin 為 None，即使設定檔指定了內建模型。

    實務：模型來源只能有一個，run.json 的 model 欄位記錄實際使用的來源。
    """
    params = resolve_params({"model": {"builtin": "roup"}}, _namespace("equilibrium", model="m.json"))

    assert params["builtin"] is None
    assert params["model_file"] == "m.json"
    assert params["grid_explicit"] is False


def test_resolve_params_command_sections():
    """
    驗證 simulate 與 decay 的 dt / t_end / checkpoints 各自取自 simulation 與 decay 區塊。

    實務：兩種時間推進的合理步長差了一個數量級，不能共用同一組預設值。
    """
    config = {
        "simulation": {"dt": 1e-3, "t_end": 50.0, "checkpoints": 5, "paths": 100, "seed": 3},
        "decay": {"dt": 0.01, "t_end": 20.0, "checkpoints": 81, "window": [1e-5, 1e-2], "certify": False},
    }
    sim = resolve_params(config, _namespace("simulate", seed=None, workers=None, dt=None, t_end=None,
                                            checkpoints=None, paths=50))
    decay = resolve_params(config, _namespace("decay", dt=0.05, t_end=None, checkpoints=None))

    assert sim["dt"] == 1e-3 and sim["paths"] == 50 and sim["seed"] == 3
    assert sim["block_size"] == 2048
    assert decay["dt"] == 0.05 and decay["t_end"] == 20.0
    assert decay["window"] == (1e-5, 1e-2)
    assert decay["certify"] is False


def test_load_config_default_and_explicit(tmp_path):
    """
    驗證預設設定檔可讀取且含各區塊；指定路徑時讀取該檔，空檔回傳空 dict。

    實務：yaml.safe_load 對空檔回傳 None，需轉成 {} 讓 resolve_params 全部走預設。
    """
    from pathlib import Path

    root = Path(__file__).resolve().parents[1]
    config = load_config(root)
    assert {"model", "grid", "simulation", "decay"} <= set(config)

    empty = tmp_path / "empty.yaml"
    empty.write_text("", encoding="utf-8")
    assert load_config(root, str(empty)) == {}


def test_run_flags_accepted_on_every_command():
    """
    驗證 --seed / --dt / --t-end / --paths 在每個子命令都能解析，用不到的由 ignored_flags 列出，
    且不會進入該子命令的參數。

    實務：批次腳本常對所有子命令帶同一組旗標，不該因此以 64 結束。
    """
    args = parse_args(["model-check", "--seed", "1", "--dt", "0.1", "--t-end", "2", "--paths", "10"])
    assert args.seed == 1 and args.paths == 10
    assert ignored_flags(args) == ["--seed", "--dt", "--t-end", "--paths"]

    params = resolve_params({}, _namespace("gap", seed=1, dt=0.1))
    assert "seed" not in params and "dt" not in params

    assert ignored_flags(parse_args(["simulate", "--seed", "1", "--dt", "0.1"])) == []
    assert ignored_flags(parse_args(["decay", "--seed", "1", "--dt", "0.1"])) == ["--seed"]


@pytest.mark.parametrize(
    "content",
    [None, "a: [1, 2", "- 1\n- 2\n"],
    ids=["missing_file", "invalid_yaml", "list_top_level"],
)
def test_load_config_errors_raise_model_validation_error(tmp_path, content):
    """
    驗證設定檔不存在、YAML 語法錯誤、頂層不是 mapping 時拋出 ModelValidationError。

    實務：主流程把它對應到 exit 1，而不是讓 FileNotFoundError 或 YAMLError 直接冒出去。
    """
    path = tmp_path / "settings.yaml"
    if content is not None:
        path.write_text(content, encoding="utf-8")

    with pytest.raises(ModelValidationError):
        load_config(tmp_path, str(path))
