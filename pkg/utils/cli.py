"""
CLI 參數解析與設定檔合併工具。

預設全部使用 config/settings.yaml；僅在 CLI 有加參數時才覆寫該項。
子命令：model-check、simulate、equilibrium、sample、gap、lyapunov、certify、decay。
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from utils.errors import ModelValidationError

COMMANDS = ("model-check", "simulate", "equilibrium", "sample", "gap", "lyapunov", "certify", "decay")
USAGE_EXIT_CODE = 64

# 所有子命令都接受的執行旗標與實際使用它們的子命令；其餘子命令收到時只記錄警告
RUN_FLAG_USERS = {
    "seed": ("simulate", "sample"),
    "dt": ("simulate", "decay"),
    "t_end": ("simulate", "decay"),
    "paths": ("simulate",),
}


class UsageArgumentParser(argparse.ArgumentParser):
    """參數錯誤時印出 usage 並以 64 結束（argparse 預設為 2，與數值失敗的 2 衝突）。"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT_CODE, f"{self.prog}: error: {message}\n")


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--builtin", default=None, help="內建模型：classical_ou / roup / dunkel_hanggi；未指定時用 config.model.builtin")
    source.add_argument("--model", default=None, help="模型檔（JSON）路徑")
    parser.add_argument("--beta", type=float, default=None, help="逆溫度 β；未指定時用 config.model.beta")
    parser.add_argument("--d", type=int, default=None, help="維度 d；未指定時用 config.model.d")
    parser.add_argument("--b", type=float, default=None, help="classical_ou 的常數 b")
    parser.add_argument("--sigma", type=float, default=None, help="classical_ou 的常數 σ")
    parser.add_argument("--tail-start", type=float, default=None, help="係數條件尾段起點 r₀")
    parser.add_argument("--grid", type=int, default=None, help="徑向網格節點數；未指定時用 config.grid.nodes")
    parser.add_argument("--rmax", type=float, default=None, help="徑向網格右端點；未指定時用 config.grid.r_max")
    parser.add_argument("--out", default=None, help="輸出根目錄；結果寫入 <out>/<command>/")
    parser.add_argument("--config", default=None, help="設定檔路徑；未指定時用 config/settings.yaml")


def _add_run_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="主種子（64 位元整數）；simulate / sample 使用")
    parser.add_argument("--dt", type=float, default=None, help="時間步長；simulate / decay 使用")
    parser.add_argument("--t-end", type=float, default=None, help="終止時間；simulate / decay 使用")
    parser.add_argument("--paths", type=int, default=None, help="路徑數；simulate 使用")


def ignored_flags(args: argparse.Namespace) -> list:
    """回傳有給值、但目前子命令用不到的執行旗標（例如 model-check --seed）。"""
    return [
        "--" + name.replace("_", "-")
        for name, users in RUN_FLAG_USERS.items()
        if getattr(args, name, None) is not None and args.command not in users
    ]


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """
    解析命令列參數。

    Returns:
        argparse.Namespace；未傳的參數為 None（由 resolve_params 以 config 補齊）。

    Note:
        - --builtin 與 --model 互斥。
        - --seed、--dt、--t-end、--paths 每個子命令都接受，用不到的由 ignored_flags 回報。
        - 未知旗標或子命令以 exit code 64 結束。
    """
    parser = UsageArgumentParser(
        prog="run_relativistic_diffusion",
        description="徑向對稱相對論擴散：模擬、平衡測度、Lyapunov / Poincaré 證書與衰減量測。預設使用 config/settings.yaml。",
    )
    sub = parser.add_subparsers(dest="command", parser_class=UsageArgumentParser)
    sub.required = True

    for name in COMMANDS:
        cmd = sub.add_parser(name)
        _add_model_args(cmd)
        _add_run_args(cmd)
        if name in ("simulate", "sample"):
            cmd.add_argument("--workers", type=int, default=None, help="執行緒數；結果與 worker 數無關")
        if name in ("simulate", "decay"):
            cmd.add_argument("--checkpoints", type=int, default=None, help="輸出時間點數")
        if name == "sample":
            cmd.add_argument("--samples", type=int, default=None, help="樣本數")

    return parser.parse_args(argv)


def load_config(root_dir: Path, path: Optional[str] = None) -> dict:
    """
    讀取設定檔並回傳 dict。

    Args:
        root_dir: 專案根目錄，用於定位 config/settings.yaml。
        path: 指定的設定檔；None 時用預設位置。

    Raises:
        ModelValidationError: 檔案不存在、無法讀取、YAML 語法錯誤，或頂層不是 mapping。

    Note:
        使用 yaml.safe_load 避免執行任意程式碼。
    """
    config_path = Path(path) if path else root_dir / "config/settings.yaml"
    try:
        with open(config_path, encoding="utf-8") as fh:
            config = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ModelValidationError(f"無法讀取設定檔 {config_path}：{exc}") from exc
    except yaml.YAMLError as exc:
        raise ModelValidationError(f"設定檔 {config_path} 不是合法的 YAML：{exc}") from exc
    if not isinstance(config, dict):
        raise ModelValidationError(f"設定檔 {config_path} 的頂層須為 mapping，收到 {type(config).__name__}")
    return config


def _pick(args: argparse.Namespace, name: str, section: dict, key: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return section.get(key, default)


def resolve_params(config: dict, args: argparse.Namespace) -> dict:
    """
    合併設定檔與 CLI 參數：預設使用 config，僅在 CLI 有傳入該項時覆寫。

    Args:
        config: 設定檔 dict（來自 load_config）。
        args: CLI 參數（來自 parse_args）。

    Returns:
        合併後的參數 dict；simulate 與 decay 的 dt / t_end / checkpoints 各取自自己的區塊。

    Note:
        --model 有給時忽略 config.model.builtin。
    """
    model_cfg = config.get("model", {})
    grid_cfg = config.get("grid", {})
    sim_cfg = config.get("simulation", {})
    sample_cfg = config.get("sampling", {})
    decay_cfg = config.get("decay", {})
    lyap_cfg = config.get("lyapunov", {})
    out_cfg = config.get("output", {})
    command = args.command

    model_file = getattr(args, "model", None)
    builtin = None if model_file else _pick(args, "builtin", model_cfg, "builtin", "roup")

    params = {
        "command": command,
        "builtin": builtin,
        "model_file": model_file,
        "beta": float(_pick(args, "beta", model_cfg, "beta", 1.0)),
        "d": int(_pick(args, "d", model_cfg, "d", 3)),
        "b": _pick(args, "b", model_cfg, "b"),
        "sigma": _pick(args, "sigma", model_cfg, "sigma"),
        "tail_start": _pick(args, "tail_start", model_cfg, "tail_start"),
        "grid_nodes": int(_pick(args, "grid", grid_cfg, "nodes", 4096)),
        "r_max": float(_pick(args, "rmax", grid_cfg, "r_max", 50.0)),
        "grid_explicit": getattr(args, "grid", None) is not None or getattr(args, "rmax", None) is not None,
        "out": _pick(args, "out", out_cfg, "dir", "output"),
        "lyapunov_c_steps": int(lyap_cfg.get("c_steps", 50)),
        "lyapunov_r_steps": int(lyap_cfg.get("r_steps", 50)),
    }

    if command == "simulate":
        params.update(
            {
                "seed": int(_pick(args, "seed", sim_cfg, "seed", 0)),
                "workers": int(_pick(args, "workers", sim_cfg, "workers", 1)),
                "dt": float(_pick(args, "dt", sim_cfg, "dt", 1e-3)),
                "t_end": float(_pick(args, "t_end", sim_cfg, "t_end", 50.0)),
                "checkpoints": int(_pick(args, "checkpoints", sim_cfg, "checkpoints", 5)),
                "paths": int(_pick(args, "paths", sim_cfg, "paths", 1000)),
                "block_size": int(sim_cfg.get("block_size", 2048)),
            }
        )
    elif command == "sample":
        params.update(
            {
                "seed": int(_pick(args, "seed", sample_cfg, "seed", 0)),
                "workers": int(_pick(args, "workers", sample_cfg, "workers", 1)),
                "samples": int(_pick(args, "samples", sample_cfg, "samples", 100000)),
            }
        )
    elif command == "decay":
        params.update(
            {
                "dt": float(_pick(args, "dt", decay_cfg, "dt", 0.01)),
                "t_end": float(_pick(args, "t_end", decay_cfg, "t_end", 20.0)),
                "checkpoints": int(_pick(args, "checkpoints", decay_cfg, "checkpoints", 81)),
                "bump_center": float(decay_cfg.get("bump_center", 0.0)),
                "bump_width": float(decay_cfg.get("bump_width", 1.0)),
                "window": tuple(decay_cfg.get("window", [1e-6, 1e-1])),
                "certify": bool(decay_cfg.get("certify", True)),
            }
        )
    return params
