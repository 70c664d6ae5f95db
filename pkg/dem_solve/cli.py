import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from . import data
from .config import ExperimentConfig, load_experiment
from .errors import ConfigError
from .pipeline import DEFAULT_REFINE_LOAD, demo1d_table, run_refine, run_single, run_sweep
from .utils import ensure_dir, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
BEAM_LOADS = (-2.5, -5.0, -7.5, -10.0, -15.0, -25.0)


class UsageError(ValueError):
    pass


def parse_loads(text: Optional[str]) -> List[float]:
    if text is None:
        return list(BEAM_LOADS)
    try:
        loads = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--loads must be comma-separated numbers, got '{text}'") from None
    if not loads:
        raise UsageError("--loads needs at least one load")
    return loads


def parse_dims(text: str) -> List[Tuple[int, int, int]]:
    """'37x10x10,44x13x13' -> [(37, 10, 10), (44, 13, 13)]."""
    out = []
    for item in (s.strip() for s in text.split(",")):
        if not item:
            continue
        parts = item.lower().split("x")
        if len(parts) != 3:
            raise UsageError(f"dims entry '{item}' must look like NXxNYxNZ")
        try:
            dims = tuple(int(p) for p in parts)
        except ValueError:
            raise UsageError(f"dims entry '{item}' must contain integers") from None
        if any(n < 2 for n in dims):
            raise UsageError(f"dims entry '{item}' needs at least 2 nodes per axis")
        out.append(dims)
    if not out:
        raise UsageError("--dims needs at least one triple")
    return out


def parse_seeds(text: Optional[str], default: int) -> List[int]:
    if text is None:
        return [default]
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--seeds must be comma-separated integers, got '{text}'") from None
    if not seeds:
        raise UsageError("--seeds needs at least one seed")
    return seeds


def _load(config_path: str, seed: Optional[int]) -> ExperimentConfig:
    cfg = load_experiment(config_path)
    setup_logging(cfg.logging_level)
    return cfg.with_seed(seed) if seed is not None else cfg


def _out_dir(cfg: ExperimentConfig, out: Optional[str]) -> Path:
    return ensure_dir(out or cfg.output_dir)


def cmd_run(config_path: str, out: Optional[str] = None, seed: Optional[int] = None) -> int:
    cfg = _load(config_path, seed)
    out_dir = _out_dir(cfg, out)
    report = run_single(cfg, out_dir)
    print(json.dumps(data.read_report(out_dir / "report.json")["summary"]))
    if report["summary"]["diverged"]:
        logger.warning("Run diverged (stop_reason=%s)", report["summary"]["stop_reason"])
    return EXIT_OK


def cmd_sweep(config_path: str, loads: Sequence[float], seeds: Optional[str] = None,
              out: Optional[str] = None, seed: Optional[int] = None) -> int:
    cfg = _load(config_path, seed)
    out_dir = _out_dir(cfg, out)
    table = run_sweep(cfg, loads, parse_seeds(seeds, cfg.train.seed), out_dir)
    print(json.dumps({
        "status": "swept",
        "runs": len(table),
        "diverged": int(table["diverged"].sum()),
        "table": str(out_dir / "table.csv"),
    }))
    return EXIT_OK


def cmd_demo1d(delta_u_max: float, steps: int, out: Optional[str] = None) -> int:
    setup_logging()
    if not delta_u_max > 0:
        raise UsageError(f"--delta-u-max must be > 0, got {delta_u_max}")
    if steps < 1:
        raise UsageError(f"--steps must be >= 1, got {steps}")
    out_dir = ensure_dir(out or "reports/demo1d")
    table = demo1d_table(delta_u_max, steps)
    path = data.write_csv(table, out_dir / "demo1d.csv")
    print(json.dumps({"status": "demo1d", "rows": len(table), "table": str(path)}))
    return EXIT_OK


def cmd_refine(config_path: str, dims_list: Sequence[Tuple[int, int, int]], seeds: Optional[str] = None,
               load: float = DEFAULT_REFINE_LOAD, out: Optional[str] = None, seed: Optional[int] = None) -> int:
    cfg = _load(config_path, seed)
    out_dir = _out_dir(cfg, out)
    table = run_refine(cfg, dims_list, parse_seeds(seeds, cfg.train.seed), out_dir, load=load)
    print(json.dumps({
        "status": "refined",
        "runs": len(table),
        "diverged": int(table["diverged"].sum()),
        "table": str(out_dir / "refine.csv"),
    }))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dem-solve", description="Deep energy method experiments")
    sub = p.add_subparsers(dest="command", required=True)

    sr = sub.add_parser("run", help="Train one configuration")
    sr.add_argument("--config", type=str, default="configs/base.json")
    sr.add_argument("--out", type=str, help="Output directory (overrides output_dir)")
    sr.add_argument("--seed", type=int, help="Network and training seed")

    ss = sub.add_parser("sweep", help="Load sweep over mlp/gcn x ad/sf")
    ss.add_argument("--config", type=str, default="configs/base.json")
    ss.add_argument("--loads", type=str, help="Comma-separated signed loads")
    ss.add_argument("--seeds", type=str, help="Comma-separated seeds")
    ss.add_argument("--out", type=str)
    ss.add_argument("--seed", type=int)

    sd = sub.add_parser("demo1d", help="1D bar potential under AD and SF integration")
    sd.add_argument("--delta-u-max", type=float, default=2.0)
    sd.add_argument("--steps", type=int, default=200)
    sd.add_argument("--out", type=str)

    sf = sub.add_parser("refine", help="Fixed-load study on a list of grids")
    sf.add_argument("--config", type=str, default="configs/neohookean.json")
    sf.add_argument("--dims", type=str, default="37x10x10,44x13x13,67x18x18",
                    help="Comma-separated NXxNYxNZ triples")
    sf.add_argument("--seeds", type=str)
    sf.add_argument("--load", type=float, default=DEFAULT_REFINE_LOAD)
    sf.add_argument("--out", type=str)
    sf.add_argument("--seed", type=int)

    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        if args.command == "run":
            return cmd_run(args.config, args.out, args.seed)
        elif args.command == "sweep":
            return cmd_sweep(args.config, parse_loads(args.loads), args.seeds, args.out, args.seed)
        elif args.command == "demo1d":
            return cmd_demo1d(args.delta_u_max, args.steps, args.out)
        elif args.command == "refine":
            return cmd_refine(args.config, parse_dims(args.dims), args.seeds, args.load, args.out, args.seed)
    except ConfigError as exc:
        for line in exc.diagnostics:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
