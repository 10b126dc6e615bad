"""Command-line front end: run experiments, list them, validate configs.

Transmit power crosses this boundary in dBm and is converted to milliwatts
here; everything below the CLI works in linear units.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .channel import _SCENARIO_KEYS, scenario_config_from_dict
from .harness import (
    ExperimentSpec,
    dbm_to_mw,
    experiment_preset,
    list_experiments,
    rows_to_csv,
    run_experiment,
    write_csv,
)

_CONFIG_KEYS = {
    "experiment",
    "sweep_name",
    "grid",
    "trials",
    "seed",
    "methods",
    "scenario",
    "lorisma_bits",
    "single_ue_solver",
    "single_ue_distance",
    "tx_power_dbm",
    "power_distances",
    "power_betas",
    "power_tx_mw",
}

# keys only a bare scenario file can carry ("seed" is legal in both shapes);
# any of them at the top level routes the whole object to the scenario parser
_SCENARIO_ONLY_KEYS = _SCENARIO_KEYS - _CONFIG_KEYS


def _is_scenario_shaped(data: dict) -> bool:
    return isinstance(data, dict) and bool(set(data) & _SCENARIO_ONLY_KEYS)


def spec_from_config(data: dict, experiment: str | None = None) -> ExperimentSpec:
    """Build a run spec from JSON-style data; unknown keys fail loudly.

    Two layouts are accepted: a run description (trials, grid, methods, with
    the scenario nested under ``"scenario"``), or a bare scenario file such
    as the shipped ``params_table1`` preset, which configures the cell and
    leaves every run setting at its preset default.
    """
    if not isinstance(data, dict):
        raise ValueError("config root must be a JSON object")
    if _is_scenario_shaped(data):
        data = {"scenario": data}
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    name = experiment or data.get("experiment")
    if name is None:
        raise ValueError("no experiment selected; pass --experiment or set it in the config")
    preset = experiment_preset(name)
    scenario = preset.scenario
    if "scenario" in data:
        scenario = scenario_config_from_dict(data["scenario"])
    if "tx_power_dbm" in data:
        scenario = replace(scenario, tx_power=dbm_to_mw(float(data["tx_power_dbm"])))
    kwargs = dict(
        experiment=name,
        sweep_name=data.get("sweep_name", preset.sweep_name),
        grid=tuple(data.get("grid", preset.grid)),
        trials=int(data.get("trials", preset.trials)),
        seed=int(data.get("seed", preset.seed)),
        methods=tuple(data.get("methods", preset.methods)),
        scenario=scenario,
        lorisma_bits=int(data.get("lorisma_bits", preset.lorisma_bits)),
        single_ue_solver=data.get("single_ue_solver", preset.single_ue_solver),
    )
    if "single_ue_distance" in data:
        kwargs["single_ue_distance"] = float(data["single_ue_distance"])
    if "power_distances" in data:
        kwargs["power_distances"] = tuple(float(x) for x in data["power_distances"])
    if "power_betas" in data:
        kwargs["power_betas"] = tuple(float(x) for x in data["power_betas"])
    if "power_tx_mw" in data:
        kwargs["power_tx_mw"] = float(data["power_tx_mw"])
    return ExperimentSpec(**kwargs)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rismasim",
        description="Monte-Carlo simulator for surface-aided downlink precoding.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment and emit CSV")
    run_p.add_argument("--experiment", help="experiment id (see list-experiments)")
    run_p.add_argument("--trials", type=int, help="Monte-Carlo trials per grid point")
    run_p.add_argument("--seed", type=int, help="root seed of every RNG stream")
    run_p.add_argument("--config", help="JSON file with spec/scenario overrides")
    run_p.add_argument("--out", help="output CSV path (default: stdout)")
    run_p.add_argument("--workers", type=int, default=1, help="parallel trial processes")

    sub.add_parser("list-experiments", help="print the available experiment ids")

    val_p = sub.add_parser("validate-config", help="check a config file without running")
    val_p.add_argument("--config", required=True, help="JSON file to validate")
    val_p.add_argument("--experiment", help="experiment id if absent from the file")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "list-experiments":
        for name in list_experiments():
            print(name)
        return 0
    if args.command == "validate-config":
        try:
            data = _load_config(args.config)
            if _is_scenario_shaped(data) and args.experiment is None:
                cfg = scenario_config_from_dict(data)
                print(
                    f"ok: scenario with K={cfg.n_ues}, M={cfg.steering.m_antennas}, "
                    f"N={cfg.steering.n_x * cfg.steering.n_y}, "
                    f"R_N={cfg.cell_radius:g} m"
                )
                return 0
            spec = spec_from_config(data, args.experiment)
        except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return 2
        print(
            f"ok: {spec.experiment} sweeps {spec.sweep_name} over {len(spec.grid)} "
            f"points, {spec.trials} trials, methods {', '.join(spec.methods)}"
        )
        return 0
    # run
    try:
        data = _load_config(args.config)
        spec = spec_from_config(data, args.experiment)
        if args.trials is not None:
            spec = replace(spec, trials=args.trials)
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"invalid run request: {exc}", file=sys.stderr)
        return 2
    rows = run_experiment(spec, workers=args.workers)
    if args.out:
        write_csv(rows, args.out)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        sys.stdout.write(rows_to_csv(rows))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
