"""
輸出工具：CSV（pandas）、JSON（非有限浮點數轉成字串）、執行紀錄 run.json。

run.json 只在所有輸出檔都寫完後才寫入，存在即代表該次執行完整。
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Annotated, Any, Dict, List, Optional

import numpy as np
import pandas as pd

from utils.logger import logger

TOOL_VERSION = "0.1.0"
MANIFEST_NAME = "run.json"


def to_jsonable(value: Any) -> Any:
    """遞迴轉成可 JSON 序列化的型別；nan / inf 轉成字串 "nan" / "inf" / "-inf"。"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(data: Any, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_jsonable(data), fh, indent=2, ensure_ascii=False, allow_nan=False)
    logger.info(f"已寫入 {path}")
    return path


def write_csv(df: pd.DataFrame, path: Path, float_format: str = "%.17g") -> Path:
    """以固定浮點格式寫出，同樣的資料得到逐位元組相同的檔案。"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=float_format)
    logger.info(f"已寫入 {path}（{len(df)} 列）")
    return path


@dataclass
class RunManifest:
    """
    一次 CLI 執行的紀錄。

    Attributes:
        command: 子命令。
        model: 內建名稱或模型檔路徑。
        parameters: 所有生效的數值參數。
        seed: 主種子（無隨機性的命令為 None）。
        outputs: 輸出檔路徑（相對於輸出目錄）。
        wall_time: 牆鐘秒數；不寫入 run.json 以外的輸出。
    """

    command: str
    model: str
    parameters: Dict[str, Any]
    seed: Optional[int] = None
    outputs: List[str] = field(default_factory=list)
    wall_time: float = 0.0
    tool_version: str = TOOL_VERSION

    def write(self, out_dir: Annotated[Path, "命令輸出目錄"]) -> Path:
        """
        寫出 run.json。

        Raises:
            FileNotFoundError: outputs 中有檔案不存在。
        """
        out_dir = Path(out_dir)
        missing = [name for name in self.outputs if not (out_dir / name).exists()]
        if missing:
            raise FileNotFoundError(f"run.json 列出的輸出不存在：{missing}")
        return write_json(asdict(self), out_dir / MANIFEST_NAME)
