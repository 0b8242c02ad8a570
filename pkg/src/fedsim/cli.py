"""Command-line front end: single runs, parameter sweeps, and defense matrices.

Exit codes: 0 success, 1 runtime failure, 2 configuration error. The output
directory comes from --out, falling back to the FEDSIM_OUT_DIR environment
variable, then to the current directory.
"""

import argparse
import os
import re
import sys

from . import config as cfgmod
from . import sim as simmod
from .errors import ConfigError, FedsimError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

OUT_DIR_ENV = "FEDSIM_OUT_DIR"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsim",
        description="Deterministic federated-learning attack/defense simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", required=needs_config, help="path to a config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (dot-path); repeatable, last wins",
        )
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument(
            "--format",
            choices=("csv", "json", "both"),
            default="both",
            help="result file format(s) for run outputs",
        )

    run = sub.add_parser("run", help="run one simulation")
    common(run)
    sweep = sub.add_parser("sweep", help="run one simulation per axis value")
    common(sweep)
    sweep.add_argument(
        "--axis",
        required=True,
        metavar="KEY=V1,V2,...",
        help="config key and comma-separated values to sweep",
    )
    compare = sub.add_parser("compare", help="run an attack x defense matrix")
    common(compare)
    validate = sub.add_parser("validate-config", help="parse and validate a config")
    common(validate)
    return parser


def _out_dir(args) -> str:
    out = args.out if args.out is not None else os.environ.get(OUT_DIR_ENV, ".")
    os.makedirs(out, exist_ok=True)
    return out


def _load(args) -> cfgmod.ExperimentConfig:
    raw = cfgmod.load_config_file(args.config)
    raw = cfgmod.apply_overrides(raw, args.overrides)
    if args.seed is not None:
        raw["master_seed"] = str(args.seed)
    return cfgmod.build_config(raw)


def _atomic_write(path: str, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def _run_once(exp: cfgmod.ExperimentConfig, out_dir: str, fmt: str, stem: str = "results"):
    records = simmod.run_simulation(exp.sim)
    if fmt in ("csv", "both"):
        simmod.write_results(records, os.path.join(out_dir, f"{stem}.csv"), "csv")
    if fmt in ("json", "both"):
        simmod.write_results(
            records, os.path.join(out_dir, f"{stem}.json"), "json", config_echo=exp.raw
        )
    return records


def cmd_run(args) -> int:
    exp = _load(args)
    out_dir = _out_dir(args)
    records = _run_once(exp, out_dir, args.format)
    summary = simmod.summarize(records)
    print(f"final_acc={summary['final_acc']:.9g} final_asr={summary['final_asr']:.9g}")
    return EXIT_OK


def _safe_name(value: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", value)


def cmd_sweep(args) -> int:
    if "=" not in args.axis:
        raise ConfigError(f"sweep axis must look like key=v1,v2,..., got {args.axis!r}")
    key, values_text = args.axis.split("=", 1)
    key = key.strip()
    values = [v.strip() for v in values_text.split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep axis has no values")

    raw = cfgmod.load_config_file(args.config)
    raw = cfgmod.apply_overrides(raw, args.overrides)
    if args.seed is not None:
        raw["master_seed"] = str(args.seed)
    try:
        base_seed = int(raw.get("master_seed", "7"))
    except ValueError as e:
        raise ConfigError(f"bad value for 'master_seed': {e}") from e
    out_dir = _out_dir(args)

    rows, failures = [], []
    for idx, value in enumerate(values):
        per_run = cfgmod.apply_overrides(raw, [f"{key}={value}"])
        per_run["master_seed"] = str(base_seed + idx)
        try:
            exp = cfgmod.build_config(per_run)
            stem = f"sweep_{idx:03d}_{_safe_name(value)}"
            records = _run_once(exp, out_dir, args.format, stem=stem)
            summary = simmod.summarize(records)
            rows.append(
                f"{value},{summary['final_acc']:.9g},{summary['final_asr']:.9g}"
            )
            print(f"{key}={value}: final_acc={summary['final_acc']:.9g} "
                  f"final_asr={summary['final_asr']:.9g}")
        except FedsimError as e:
            failures.append((value, e))
            print(f"{key}={value}: FAILED ({e})", file=sys.stderr)

    _atomic_write(
        os.path.join(out_dir, "sweep_summary.csv"),
        "axis_value,final_acc,final_asr\n" + "".join(r + "\n" for r in rows),
    )
    if failures:
        first = failures[0][1]
        return EXIT_CONFIG if isinstance(first, ConfigError) else EXIT_RUNTIME
    return EXIT_OK


def cmd_compare(args) -> int:
    exp = _load(args)
    if not exp.compare_attacks or not exp.compare_defenses:
        raise ConfigError(
            "compare needs compare.attacks and compare.defenses in the config"
        )
    raw = dict(exp.raw)
    out_dir = _out_dir(args)

    rows = []
    for attack in sorted(exp.compare_attacks):
        for defense in sorted(exp.compare_defenses):
            cell = cfgmod.apply_overrides(
                raw, [f"attack.kind={attack}", f"defense.kind={defense}"]
            )
            cell_exp = cfgmod.build_config(cell)
            records = simmod.run_simulation(cell_exp.sim)
            summary = simmod.summarize(records)
            rows.append(
                f"{attack},{defense},{summary['final_acc']:.9g},"
                f"{summary['final_asr']:.9g}"
            )
            print(f"{attack} vs {defense}: acc={summary['final_acc']:.9g} "
                  f"asr={summary['final_asr']:.9g}")

    _atomic_write(
        os.path.join(out_dir, "compare_matrix.csv"),
        "attack,defense,final_acc,final_asr\n" + "".join(r + "\n" for r in rows),
    )
    return EXIT_OK


def cmd_validate_config(args) -> int:
    exp = _load(args)
    print(f"ok: {len(exp.raw)} keys, defense={exp.sim.defense.kind}, "
          f"attack={exp.sim.attack.kind}")
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "validate-config": cmd_validate_config,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FedsimError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
