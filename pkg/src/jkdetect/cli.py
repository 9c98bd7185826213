"""Command-line entry points; thin wrappers over the core package."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .detector import DetectorConfig
from .harness import (BenchConfig, ScenarioGenConfig, WorldSimConfig,
                      bench_detectors, error_model_from_dict, gen_scenario,
                      load_scenario_csv, run_replay, run_world_sim,
                      save_scenario_csv, scenario_from_meta)
from .overbound import (EmpiricalSample, UniformModelBank, bank_to_dict,
                        comparison_table, fit_binned_bank,
                        fit_gaussian_overbound, fit_pgo, load_bank, save_bank)


def _load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _cmd_simulate(args) -> int:
    cfg = WorldSimConfig.from_dict(_load_json(args.config)) if args.config \
        else WorldSimConfig()
    result = run_world_sim(cfg)
    result.write_outputs(args.out)
    for pair, stats in result.summary()["pairs"].items():
        print(f"{pair}: median detection rate {stats['median_rate']:.4f} "
              f"over {stats['locations']} locations")
    print(f"outputs written to {args.out}")
    return 0


def _cmd_replay(args) -> int:
    records = load_scenario_csv(args.scenario)
    bank = load_bank(args.models)
    meta = None
    meta_path = Path(args.meta) if args.meta else Path(args.scenario).with_suffix(".meta.json")
    if meta_path.exists():
        meta = _load_json(meta_path)
    scenario = scenario_from_meta(records, bank, meta)
    cfg = DetectorConfig(tau=args.tau, detector=args.detector,
                         elevation_mask_deg=args.mask)
    result = run_replay(scenario, cfg)
    out = args.out or "timeline.csv"
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch_s", "state", "decision"])
        writer.writerows(result.timeline_rows())
    delay = result.first_detection_delay_s
    print(f"timeline written to {out}")
    print("first detection delay: "
          + (f"{delay:.1f} s" if delay is not None else "no detection"))
    return 0


def _read_sample_csv(path):
    """Single-column residual CSV, or two columns (elevation_deg, residual_m)."""
    values, elevations = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row:
                continue
            try:
                nums = [float(v) for v in row]
            except ValueError:
                continue  # header
            if len(nums) == 1:
                values.append(nums[0])
            else:
                elevations.append(nums[0])
                values.append(nums[1])
    vals = np.asarray(values)
    elevs = np.asarray(elevations) if elevations else None
    return vals, elevs


def _cmd_fit_overbound(args) -> int:
    values, elevations = _read_sample_csv(args.input)
    if args.bins:
        if elevations is None:
            print("binned fitting needs a two-column CSV: elevation_deg,residual_m",
                  file=sys.stderr)
            return 2
        bank = fit_binned_bank(values, elevations, method=args.method, seed=args.seed)
    else:
        sample = EmpiricalSample(values)
        model = (fit_gaussian_overbound(sample) if args.method == "gaussian"
                 else fit_pgo(sample, seed=args.seed))
        bank = UniformModelBank(model)
    save_bank(bank, args.out_model)
    print(f"model written to {args.out_model}")
    print(json.dumps(bank_to_dict(bank), indent=2))

    if args.out_table:
        sample = EmpiricalSample(values)
        gaussian = fit_gaussian_overbound(sample)
        pgo = fit_pgo(sample, seed=args.seed) if args.method == "pgo" else None
        header, rows = comparison_table(sample, gaussian, pgo)
        with open(args.out_table, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        print(f"CDF/CCDF table written to {args.out_table}")
    return 0


def _cmd_gen_scenario(args) -> int:
    cfg = ScenarioGenConfig(
        user_lat_deg=args.lat, user_lon_deg=args.lon, epoch_step_s=args.step,
        epoch_count=args.epochs, seed=args.seed,
        error=error_model_from_dict({"kind": "nig", "delta0": args.delta0}),
        fault_start_index=args.fault_start, fault_end_index=args.fault_end,
        fault_bias_m=args.bias,
        fault_sat_id=args.fault_sat)
    records, meta = gen_scenario(cfg)
    save_scenario_csv(records, args.out)
    meta_path = Path(args.out).with_suffix(".meta.json")
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2)
    print(f"scenario written to {args.out} (fault metadata in {meta_path})")
    return 0


def _cmd_bench(args) -> int:
    cfg = BenchConfig.from_dict(_load_json(args.config)) if args.config else BenchConfig()
    result = bench_detectors(cfg)
    if args.out:
        result.write_csv(args.out)
        print(f"timing CSV written to {args.out}")
    print(json.dumps(result.summary(), indent=2))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("jkdetect.service.app:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jkdetect",
                                     description="Pseudorange fault detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="worldwide fault-injection simulation")
    p.add_argument("--config", help="JSON config file (defaults are desk scale)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("replay", help="replay a scenario CSV through a detector")
    p.add_argument("--scenario", required=True, help="scenario CSV")
    p.add_argument("--models", required=True, help="overbound model JSON")
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--detector", default="jackknife",
                   choices=["jackknife", "solution-separation"])
    p.add_argument("--mask", type=float, default=5.0, help="elevation mask, degrees")
    p.add_argument("--meta", help="fault metadata JSON (default: sibling .meta.json)")
    p.add_argument("--out", help="timeline CSV path")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("fit-overbound", help="fit overbound models from residual CSV")
    p.add_argument("--input", required=True, help="residual CSV")
    p.add_argument("--method", default="pgo", choices=["gaussian", "pgo"])
    p.add_argument("--bins", action="store_true", help="fit per elevation bin")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-model", default="models.json")
    p.add_argument("--out-table", help="CDF/CCDF comparison CSV")
    p.set_defaults(func=_cmd_fit_overbound)

    p = sub.add_parser("gen-scenario", help="synthesize a replay scenario CSV")
    p.add_argument("--out", required=True, help="scenario CSV path")
    p.add_argument("--lat", type=float, default=45.0)
    p.add_argument("--lon", type=float, default=10.0)
    p.add_argument("--step", type=float, default=30.0, help="epoch spacing, seconds")
    p.add_argument("--epochs", type=int, default=120)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta0", type=float, default=0.65, help="NIG shape")
    p.add_argument("--bias", type=float, default=10.0, help="step fault, meters")
    p.add_argument("--fault-start", type=int, default=40, help="fault start epoch index")
    p.add_argument("--fault-end", type=int, default=90, help="fault end epoch index")
    p.add_argument("--fault-sat", type=int, default=None,
                   help="faulted satellite id (default: auto)")
    p.set_defaults(func=_cmd_gen_scenario)

    p = sub.add_parser("bench", help="jackknife vs solution-separation timing")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="timing CSV path")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
