"""
相對論擴散主腳本：模型檢查、系綜模擬、平衡測度、抽樣、譜隙、Lyapunov / Poincaré 證書、衰減量測。

流程：
    1. 參數解析：CLI 優先，未指定則用 config/settings.yaml
    2. 建立模型：--builtin（內建，ε/ε′ 由假說檢查器填入）或 --model（JSON 模型檔）
    3. 執行子命令，輸出寫入 <out>/<command>/
    4. 所有輸出寫完後寫 run.json（生效參數、種子、版本、輸出清單、牆鐘時間）

Exit code：
    0 成功；1 模型驗證失敗 / 證書失敗 / 假說檢查未通過；2 數值不收斂、步進被拒或譜隙未收斂；64 參數錯誤

執行：
    python -m scripts.run_relativistic_diffusion certify --builtin roup --beta 1 --d 3
    python -m scripts.run_relativistic_diffusion decay --builtin classical_ou --beta 1 --d 3 --b 1
"""

import json
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dotenv import load_dotenv

# 專案根目錄，供後續讀取 config
ROOT_DIR = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT_DIR))

load_dotenv()  # 載入 .env（LOG_LEVEL、LOG_DIR）

from analysis.decay import decay_report, evolve_density, gaussian_bump
from analysis.generator import discretize_generator, spectral_gap
from analysis.lyapunov import SearchBox, lyapunov_certificate
from analysis.poincare import poincare_constant
from equilibrium.measure import build_measure, measure_bounds_report
from equilibrium.sampler import sample_equilibrium
from kinematics.phase_space import phase_point_from_momentum
from models.builtin_models import builtin_model
from models.coefficients import CoefficientSet
from models.hypotheses import check_hypotheses
from models.model_file import load_model_file
from models.radial_grid import RadialGrid
from simulation.euler_maruyama import SimConfig, simulate_ensemble, simulate_trajectory
from utils.cli import USAGE_EXIT_CODE, ignored_flags, load_config, parse_args, resolve_params
from utils.errors import CertificationError, ModelValidationError, NumericalConvergenceError, StepRejectedError
from utils.logger import logger, run_log_file
from utils.output_writer import RunManifest, write_csv, write_json

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

CommandResult = Tuple[List[str], int]


def build_model(params: dict) -> CoefficientSet:
    """依參數建立 CoefficientSet；--tail-start 覆寫模型記錄的 r₀。"""
    if params["model_file"]:
        coeffs = load_model_file(params["model_file"])
    else:
        overrides = {"b": params["b"], "sigma": params["sigma"]} if params["builtin"] == "classical_ou" else {}
        coeffs = builtin_model(params["builtin"], params["d"], params["beta"], **overrides)
    if params["tail_start"] is not None:
        coeffs = replace(coeffs, tail_start=float(params["tail_start"]))
    return coeffs


def _grid(params: dict) -> RadialGrid:
    return RadialGrid(r_max=params["r_max"], n_nodes=params["grid_nodes"])


def run_model_check(coeffs: CoefficientSet, params: dict, out_dir: Path) -> CommandResult:
    grid = _grid(params) if params["grid_explicit"] else None
    report = check_hypotheses(coeffs, grid)
    record = {"model": coeffs.describe(), "report": report.to_dict()}
    write_json(record, out_dir / "hypotheses.json")
    print(json.dumps(report.to_dict(), indent=2, ensure_ascii=False))
    if not report.passed:
        logger.error(f"係數條件檢查未通過：{', '.join(report.reasons)}")
        return ["hypotheses.json"], EXIT_VALIDATION
    return ["hypotheses.json"], EXIT_OK


def run_simulate(coeffs: CoefficientSet, params: dict, out_dir: Path) -> CommandResult:
    n_cp = params["checkpoints"]
    dt = params["dt"]
    # 等距輸出點取在 dt 的格點上，最後一點就是 t_end
    n_steps = round(params["t_end"] / dt)
    cfg = SimConfig(
        dt=dt,
        t_end=params["t_end"],
        seed=params["seed"],
        n_paths=params["paths"],
        checkpoint_times=tuple(dt * np.rint(n_steps * np.arange(1, n_cp + 1) / n_cp)),
    )
    init = phase_point_from_momentum(np.zeros(coeffs.d))
    snapshots = simulate_ensemble(
        [init], coeffs, cfg, block_size=params["block_size"], workers=params["workers"]
    )

    d = coeffs.d
    frames = []
    for snap in snapshots:
        frame = pd.DataFrame(snap.momenta, columns=[f"p{i + 1}" for i in range(d)])
        for i in range(d):
            frame[f"x{i + 1}"] = snap.positions[:, i]
        frame.insert(0, "path", np.arange(snap.n_paths))
        frame.insert(0, "time", snap.time)
        frames.append(frame)
    write_csv(pd.concat(frames, ignore_index=True), out_dir / "snapshots.csv")

    trajectory = simulate_trajectory(init, coeffs, cfg, stream_id=0)
    columns = ["t", "s"] + [f"x{i + 1}" for i in range(d)] + ["p0"] + [f"p{i + 1}" for i in range(d)]
    rows = [pt.as_row() for pt in trajectory.points]
    write_csv(pd.DataFrame(rows, columns=columns), out_dir / "trajectory.csv")

    summary = [
        {
            "time": snap.time,
            "mean_r": float(np.mean(snap.radii[~snap.failed])) if (~snap.failed).any() else float("nan"),
            "mean_energy": float(np.mean(snap.energies[~snap.failed])) if (~snap.failed).any() else float("nan"),
            "failed": int(snap.failed.sum()),
        }
        for snap in snapshots
    ]
    write_json({"config": cfg.describe(), "snapshots": summary}, out_dir / "simulation.json")
    return ["snapshots.csv", "trajectory.csv", "simulation.json"], EXIT_OK


def run_equilibrium(coeffs: CoefficientSet, params: dict, out_dir: Path) -> CommandResult:
    measure = build_measure(coeffs, _grid(params))
    write_csv(measure.to_frame(), out_dir / "equilibrium.csv")
    bounds = measure_bounds_report(measure)
    write_json({"measure": measure.describe(), "bounds": bounds.to_dict()}, out_dir / "equilibrium.json")
    return ["equilibrium.csv", "equilibrium.json"], EXIT_OK


def run_sample(coeffs: CoefficientSet, params: dict, out_dir: Path) -> CommandResult:
    measure = build_measure(coeffs, _grid(params))
    samples = sample_equilibrium(measure, params["samples"], params["seed"], workers=params["workers"])
    write_csv(pd.DataFrame(samples, columns=[f"p{i + 1}" for i in range(coeffs.d)]), out_dir / "samples.csv")
    return ["samples.csv"], EXIT_OK


def run_gap(coeffs: CoefficientSet, params: dict, out_dir: Path) -> CommandResult:
    measure = build_measure(coeffs, _grid(params))
    gap = spectral_gap(coeffs, measure)
    write_json({"model": coeffs.name, "beta": coeffs.beta, "d": coeffs.d, **gap.to_dict()}, out_dir / "gap.json")
    return ["gap.json"], EXIT_OK if gap.converged else EXIT_NUMERICAL


def _certificate(coeffs: CoefficientSet, params: dict):
    box = SearchBox(c_steps=params["lyapunov_c_steps"], R_steps=params["lyapunov_r_steps"])
    return lyapunov_certificate(coeffs, box, _grid(params))


def run_lyapunov(coeffs: CoefficientSet, params: dict, out_dir: Path) -> CommandResult:
    cert = _certificate(coeffs, params)
    record = {"model": coeffs.name, "beta": coeffs.beta, "d": coeffs.d, "epsilon": coeffs.epsilon, **cert.to_dict()}
    write_json(record, out_dir / "lyapunov.json")
    return ["lyapunov.json"], EXIT_OK


def run_certify(coeffs: CoefficientSet, params: dict, out_dir: Path) -> CommandResult:
    cert = _certificate(coeffs, params)
    measure = build_measure(coeffs, _grid(params))
    gap = spectral_gap(coeffs, measure)
    bound = poincare_constant(cert, coeffs, measure, gap)
    write_json({**bound.to_record(), "gap": gap.to_dict()}, out_dir / "certificate.json")
    return ["certificate.json"], EXIT_OK if gap.converged else EXIT_NUMERICAL


def run_decay(coeffs: CoefficientSet, params: dict, out_dir: Path) -> CommandResult:
    measure = build_measure(coeffs, _grid(params))
    bound = None
    if params["certify"]:
        cert = _certificate(coeffs, params)
        bound = poincare_constant(cert, coeffs, measure)
    op0 = discretize_generator(coeffs, measure, 0)
    h0 = gaussian_bump(op0, params["bump_center"], params["bump_width"])
    checkpoints = np.linspace(0.0, params["t_end"], params["checkpoints"])
    evolution = evolve_density(op0, h0, params["t_end"], params["dt"], checkpoints)
    report = decay_report(evolution, measure, bound, window=params["window"])

    write_csv(report.to_frame(), out_dir / "decay.csv")
    record = {"model": coeffs.name, "beta": coeffs.beta, "d": coeffs.d, **report.summary()}
    if bound is not None:
        record["certificate"] = bound.to_record()
    write_json(record, out_dir / "decay.json")
    failed = any(flag is False for flag in (report.l2_bound_ok, report.tv_bound_ok, report.rate_ok))
    return ["decay.csv", "decay.json"], EXIT_VALIDATION if failed else EXIT_OK


COMMAND_HANDLERS: Dict[str, Callable[[CoefficientSet, dict, Path], CommandResult]] = {
    "model-check": run_model_check,
    "simulate": run_simulate,
    "equilibrium": run_equilibrium,
    "sample": run_sample,
    "gap": run_gap,
    "lyapunov": run_lyapunov,
    "certify": run_certify,
    "decay": run_decay,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    主流程：解析參數 → 建立模型 → 執行子命令 → 寫 run.json。

    Returns:
        exit code（見模組說明）。

    Note:
        run.json 只在命令成功寫完所有輸出後才寫入；同參數同種子的輸出檔逐位元組相同，
        run.json 的 wall_time 除外。執行過程另寫一份 run.log 到輸出目錄。
    """
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return USAGE_EXIT_CODE if exc.code not in (0, None) else 0

    try:
        config = load_config(ROOT_DIR, args.config)
    except ModelValidationError as e:
        logger.error(f"設定檔錯誤：{e}")
        return EXIT_VALIDATION
    for flag in ignored_flags(args):
        logger.warning(f"{args.command} 不使用 {flag}，已忽略")
    params = resolve_params(config, args)
    command = params["command"]
    out_dir = Path(params["out"]) / command
    out_dir.mkdir(parents=True, exist_ok=True)

    with run_log_file(out_dir):
        logger.info(f"=== {command} 開始：{ {k: v for k, v in params.items() if k != 'command'} } ===")
        started = time.perf_counter()
        try:
            coeffs = build_model(params)
            outputs, code = COMMAND_HANDLERS[command](coeffs, params, out_dir)
        except (ModelValidationError, CertificationError) as e:
            logger.error(f"{command} 失敗（驗證）：{e}")
            return EXIT_VALIDATION
        except (NumericalConvergenceError, StepRejectedError) as e:
            logger.error(f"{command} 失敗（數值）：{e}")
            return EXIT_NUMERICAL

        manifest = RunManifest(
            command=command,
            model=params["model_file"] or params["builtin"],
            parameters={**{k: v for k, v in params.items() if k != "command"}, "coefficients": coeffs.describe()},
            seed=params.get("seed"),
            outputs=outputs,
            wall_time=time.perf_counter() - started,
        )
        manifest.write(out_dir)
        logger.info(f"=== {command} 結束：exit={code}, outputs={outputs} ===")
    return code


if __name__ == "__main__":
    sys.exit(main())
