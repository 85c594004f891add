"""
日誌設定模組：console、輪替檔案與單次執行 log。

- 全域 logger（relativistic_diffusion）：console + logs/relativistic_diffusion.log 輪替，
  等級與目錄由環境變數 LOG_LEVEL / LOG_DIR 決定。
- run_log_file：命令執行期間額外把 log 寫到輸出目錄的 run.log，與 run.json 放在一起，
  事後可以對照某次模擬或特徵值計算的完整過程。
"""

import logging
import logging.handlers
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Union

LOGGER_NAME = "relativistic_diffusion"
LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(filename)s:%(lineno)d | %(message)s"
MAX_LOG_BYTES = 10 * 1024 * 1024
LOG_BACKUPS = 5
RUN_LOG_NAME = "run.log"


def _get_log_level() -> int:
    """從 LOG_LEVEL 取得等級，未設定或無效時為 INFO。"""
    level = os.getenv("LOG_LEVEL", "INFO").upper()
    return getattr(logging, level, logging.INFO)


def _get_log_dir() -> Path:
    """
    取得 log 目錄：LOG_DIR 優先，否則為專案根目錄下的 logs/。

    Returns:
        log 目錄 Path；不存在時自動建立。
    """
    log_dir_env = os.getenv("LOG_DIR")
    log_dir = Path(log_dir_env) if log_dir_env else Path(__file__).resolve().parents[1] / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    return log_dir


def configure_logger(name: Optional[str] = LOGGER_NAME) -> logging.Logger:
    """
    建立並回傳 logger，支援 console 與檔案（輪替）輸出。

    Args:
        name: logger 名稱；檔案 handler 寫入 {LOG_DIR}/{name}.log。

    Returns:
        配置完成的 logging.Logger；已設定過 handler 時直接回傳，避免重複輸出。

    Note:
        - Console handler 輸出到 stderr；檔案 handler 10 MB 輪替、保留 5 份、UTF-8。
        - propagate=False：不冒泡到 root，避免 pytest 或外部程式重複處理。
        - 檔案 handler 初始化失敗（例如唯讀環境）時僅記錄警告，fallback 到 console only。
    """
    logger = logging.getLogger(name)
    if logger.handlers:
        return logger

    level = _get_log_level()
    logger.setLevel(level)
    formatter = logging.Formatter(LOG_FORMAT)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    try:
        file_handler = logging.handlers.RotatingFileHandler(
            _get_log_dir() / f"{name}.log",
            maxBytes=MAX_LOG_BYTES,
            backupCount=LOG_BACKUPS,
            encoding="utf-8",
        )
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    except OSError:
        logger.warning("無法建立 log 檔，只輸出到 console。")

    logger.propagate = False
    return logger


@contextmanager
def run_log_file(out_dir: Union[str, Path], target: Optional[logging.Logger] = None) -> Iterator[Path]:
    """
    在 with 區塊內把 log 同步寫到 out_dir/run.log（每次執行覆寫）。

    Args:
        out_dir: 命令的輸出目錄（必須已存在）。
        target: 要附加 handler 的 logger，預設為全域 logger。

    Yields:
        run.log 的路徑。

    Note:
        離開區塊時（含例外）一定移除並關閉 handler，失敗的命令也留下完整 log。
    """
    target = target or logger
    path = Path(out_dir) / RUN_LOG_NAME
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setLevel(target.level)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    target.addHandler(handler)
    try:
        yield path
    finally:
        target.removeHandler(handler)
        handler.close()


logger = configure_logger()
