"""Command-line orchestration of the analysis pipeline.

Every subcommand reads its inputs, writes artifacts into --out-dir and
embeds the run seed plus a hash of the resolved configuration into each
artifact, so identical configurations produce byte-identical outputs.

Exit codes: 0 success, 1 analysis-level failure, 2 input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import baseline as baseline_mod
from . import svgplots
from .errors import InputFormatError, LpmError, SelectionFailedError
from .histograms import (BinningConfig, bin_voxels, load_signal_csv,
                         load_voxel_csv, read_histogram_json,
                         write_histogram_json, write_voxel_csv)
from .inference import combine_cohort, fit_and_score
from .model import TrainOptions, read_model_json, train_control, \
    train_treatment, write_model_json
from .selection import select_components, write_selection_csv
from .synth import default_scenarios, generate, histogram_to_voxels
from .validation import leave_one_out, write_loo_csv

EXIT_OK = 0
EXIT_ANALYSIS = 1
EXIT_INPUT = 2


# arguments that name filesystem locations rather than computation
# parameters; excluded from the hash so reruns from or into different
# directories produce identical artifacts
_PATH_ARGS = ("func", "config", "out_dir", "histograms", "model", "response",
              "voxels", "signals")


def _config_hash(args) -> str:
    payload = {k: v for k, v in sorted(vars(args).items())
               if k not in _PATH_ARGS and not callable(v)}
    return hashlib.sha256(json.dumps(payload, sort_keys=True,
                                     default=str).encode()).hexdigest()[:16]


def _meta(args) -> dict:
    return {"seed": args.seed, "config_hash": _config_hash(args)}


def _prepend_comment(path: Path, meta: dict):
    line = f"# seed={meta['seed']} config_hash={meta['config_hash']}\n"
    text = path.read_text()
    path.write_text(line + text)


def _write_json(path: Path, payload: dict, meta: dict):
    payload = dict(payload)
    payload["run"] = meta
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_histograms(directory):
    paths = sorted(Path(directory).glob("*.json"))
    hists = []
    for p in paths:
        if p.name in ("ingest_summary.json", "ground_truth.json"):
            continue
        hists.append(read_histogram_json(p))
    if not hists:
        raise InputFormatError(f"no histogram JSON files in {directory}")
    return hists


def _binning_from_args(args) -> BinningConfig:
    return BinningConfig(adc_min=args.adc_min, adc_max=args.adc_max,
                         n_adc_bins=args.bins)


def _train_options(args) -> TrainOptions:
    return TrainOptions(seed=args.seed, restarts=args.restarts,
                        max_iter=args.max_iter, tol=args.tol)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    meta = _meta(args)
    if args.signals:
        loaded = load_signal_csv(args.signals)
    else:
        loaded = load_voxel_csv(args.voxels)
    if not loaded.records:
        print("error: no valid rows in input", file=sys.stderr)
        for line, msg in loaded.errors:
            print(f"  line {line}: {msg}", file=sys.stderr)
        return EXIT_INPUT
    config = _binning_from_args(args)
    hists = bin_voxels(loaded.records, config)
    hist_dir = out / "histograms"
    hist_dir.mkdir(exist_ok=True)
    summary = {"tumors": {}, "rejected_rows": [
        {"line": line, "message": msg} for line, msg in loaded.errors]}
    for tumor_id, h in hists.items():
        write_histogram_json(hist_dir / f"{tumor_id}.json", h)
        summary["tumors"][tumor_id] = {"voxels": h.total, "overflow": h.overflow,
                                       "warnings": list(h.warnings)}
    _write_json(out / "ingest_summary.json", summary, meta)
    print(f"ingested {len(hists)} tumors, {len(loaded.errors)} rejected rows")
    return EXIT_OK


def cmd_synth(args) -> int:
    out = _out_dir(args)
    meta = _meta(args)
    scenarios = default_scenarios(seed=args.seed)
    if args.preset not in scenarios:
        print(f"error: unknown preset {args.preset!r}; "
              f"choose from {sorted(scenarios)}", file=sys.stderr)
        return EXIT_INPUT
    spec = scenarios[args.preset]
    control, treated, truth = generate(spec)
    hist_dir = out / "histograms"
    hist_dir.mkdir(exist_ok=True)
    for h in control + treated:
        write_histogram_json(hist_dir / f"{h.tumor_id}.json", h)
    _write_json(out / "ground_truth.json", {
        "quantities": {k: v.tolist() for k, v in truth.quantities.items()},
        "effect_fractions": truth.effect_fractions,
        "n_control_components": truth.n_control_components,
        "n_treatment_components": truth.n_treatment_components,
    }, meta)
    if args.emit_voxels:
        records = []
        for h in control + treated:
            records.extend(histogram_to_voxels(h))
        write_voxel_csv(out / "voxels.csv", records)
    print(f"generated {len(control)} control + {len(treated)} treated tumors")
    return EXIT_OK


def cmd_train(args) -> int:
    out = _out_dir(args)
    meta = _meta(args)
    hists = _load_histograms(args.histograms)
    control = [h for h in hists if h.cohort == "control"]
    treated = [h for h in hists if h.cohort == "treated"]
    opts = _train_options(args)
    result = train_control(control, args.n_control, opts)
    model = result.model
    if args.n_treatment > 0:
        result = train_treatment(model, treated, args.n_treatment, opts)
        model = result.model
    model.training_meta["run"] = meta
    write_model_json(out / "model.json", model)
    print(f"trained model: {model.n_control} control + "
          f"{model.n_treatment} treatment components")
    return EXIT_OK


def cmd_select(args) -> int:
    out = _out_dir(args)
    meta = _meta(args)
    hists = _load_histograms(args.histograms)
    control = [h for h in hists if h.cohort == "control"]
    treated = [h for h in hists if h.cohort == "treated"]
    opts = _train_options(args)
    curve_c, best_c = select_components(control, "control", None,
                                        args.k_min, args.k_max, opts,
                                        jobs=args.jobs)
    write_selection_csv(out / "selection_control.csv", curve_c)
    _prepend_comment(out / "selection_control.csv", meta)
    (out / "selection_control.svg").write_text(svgplots.selection_curve_svg(curve_c))
    model = best_c.model
    if treated:
        k_min_t = args.k_min_treatment or model.n_control + 1
        k_max_t = args.k_max_treatment or model.n_control + (args.k_max - args.k_min) + 1
        curve_t, best_t = select_components(treated, "treatment", model,
                                            k_min_t, k_max_t, opts,
                                            jobs=args.jobs)
        write_selection_csv(out / "selection_treatment.csv", curve_t)
        _prepend_comment(out / "selection_treatment.csv", meta)
        (out / "selection_treatment.svg").write_text(
            svgplots.selection_curve_svg(curve_t))
        model = best_t.model
    model.training_meta["run"] = meta
    write_model_json(out / "model.json", model)
    print(f"selected {model.n_control} control + "
          f"{model.n_treatment} treatment components")
    return EXIT_OK


def _write_response_csv(path: Path, results, combined):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tumor_id", "z", "p_two_tailed", "effect_fraction",
                         "effect_fraction_sigma", "q_treatment_total",
                         "sigma_treatment"])
        for r in results:
            writer.writerow([r.tumor_id, repr(r.z), repr(r.p_two_tailed),
                             repr(r.effect_fraction),
                             repr(r.effect_fraction_sigma),
                             repr(r.q_treatment_total), repr(r.sigma_treatment)])
        writer.writerow(["combined", repr(combined.combined_z),
                         repr(combined.combined_p), "", "", "", ""])


def cmd_fit(args) -> int:
    out = _out_dir(args)
    meta = _meta(args)
    model = read_model_json(args.model)
    hists = _load_histograms(args.histograms)
    cohort = [h for h in hists if h.cohort == args.cohort]
    if not cohort:
        print(f"error: no {args.cohort} histograms found", file=sys.stderr)
        return EXIT_INPUT
    results = [fit_and_score(model, h) for h in cohort]
    combined = combine_cohort(results)
    path = out / f"response_{args.cohort}.csv"
    _write_response_csv(path, results, combined)
    _prepend_comment(path, meta)
    print(f"scored {len(results)} {args.cohort} tumors, "
          f"combined z = {combined.combined_z:.2f}")
    return EXIT_OK


def cmd_validate(args) -> int:
    out = _out_dir(args)
    meta = _meta(args)
    hists = _load_histograms(args.histograms)
    control = [h for h in hists if h.cohort == "control"]
    treated = [h for h in hists if h.cohort == "treated"]
    report = leave_one_out(control, treated, args.n_control, args.n_treatment,
                           _train_options(args), jobs=args.jobs)
    write_loo_csv(out / "loo_report.csv", report)
    _prepend_comment(out / "loo_report.csv", meta)
    print(f"built {report.models_built} models, "
          f"{len(report.outlier_flags)} outlier flags")
    for tumor_id, reason in report.outlier_flags:
        print(f"  outlier {tumor_id}: {reason}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    out = _out_dir(args)
    meta = _meta(args)
    hists = _load_histograms(args.histograms)
    tests, combined = baseline_mod.cohort_baseline(hists)
    baseline_mod.write_baseline_csv(out / "baseline.csv", tests, combined)
    _prepend_comment(out / "baseline.csv", meta)
    print(f"baseline combined z = {combined:.2f}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = _out_dir(args)
    model_path = Path(args.model)
    response_path = Path(args.response)
    if not model_path.exists():
        print(f"error: model file {model_path} not found", file=sys.stderr)
        return EXIT_INPUT
    if not response_path.exists():
        print(f"error: response file {response_path} not found", file=sys.stderr)
        return EXIT_INPUT
    model = read_model_json(model_path)

    import csv as _csv

    from .inference import ResponseResult

    results = []
    combined_z = None
    with open(response_path, newline="") as fh:
        rows = [r for r in fh if not r.startswith("#")]
    for row in _csv.DictReader(rows):
        if row["tumor_id"] == "combined":
            combined_z = float(row["z"])
            continue
        results.append(ResponseResult(
            tumor_id=row["tumor_id"], z=float(row["z"]),
            p_two_tailed=float(row["p_two_tailed"]),
            effect_fraction=float(row["effect_fraction"]),
            effect_fraction_sigma=float(row["effect_fraction_sigma"]),
            q_treatment_total=float(row["q_treatment_total"]),
            sigma_treatment=float(row["sigma_treatment"])))
    (out / "effect_bars.svg").write_text(
        svgplots.effect_bar_svg(results, "Treatment volume per tumor"))
    (out / "components.svg").write_text(svgplots.pmf_heatstrip_svg(model))
    lines = [f"Model: {model.n_control} control + {model.n_treatment} "
             f"treatment components",
             f"Tumors scored: {len(results)}"]
    if combined_z is not None:
        lines.append(f"Combined cohort z: {combined_z:.2f}")
    for r in results:
        lines.append(f"  {r.tumor_id}: z={r.z:.2f} p={r.p_two_tailed:.3g} "
                     f"effect={100 * r.effect_fraction:.2f}% "
                     f"+/- {100 * r.effect_fraction_sigma:.2f}%")
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def _apply_config_file(parser, args, argv):
    if not getattr(args, "config", None):
        return args
    if argv is None:
        argv = sys.argv[1:]
    # flags named explicitly on the command line win over config values
    explicit = {tok[2:].split("=", 1)[0].replace("-", "_")
                for tok in argv if isinstance(tok, str) and tok.startswith("--")}
    overrides = {}
    with open(args.config) as fh:
        for raw in fh:
            raw = raw.strip()
            if not raw or raw.startswith("#"):
                continue
            if "=" not in raw:
                raise InputFormatError(f"bad config line: {raw!r}")
            key, value = raw.split("=", 1)
            overrides[key.strip().replace("-", "_")] = value.strip()
    # defaults live on the subcommand parsers, not just the top-level one
    actions = list(parser._actions)
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sp in action.choices.values():
                actions.extend(sp._actions)
    defaults = {a.dest: a.default for a in actions}
    for key, value in overrides.items():
        if not hasattr(args, key) or key in explicit:
            continue
        current = defaults.get(key)
        if isinstance(current, bool):
            value = value.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            value = int(value)
        elif isinstance(current, float):
            value = float(value)
        setattr(args, key, value)
    return args


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpm",
        description="Treatment-response analysis of paired-timepoint ADC histograms")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--out-dir", default=".")

    def training(p):
        p.add_argument("--restarts", type=int, default=5)
        p.add_argument("--max-iter", type=int, default=10000)
        p.add_argument("--tol", type=float, default=1e-9)

    p = sub.add_parser("ingest", help="bin voxel or signal CSV into histograms")
    common(p)
    p.add_argument("--voxels", help="voxel CSV (tumor_id,cohort,timepoint,adc)")
    p.add_argument("--signals", help="signal CSV, ADC fitted per voxel")
    p.add_argument("--adc-min", type=float, default=0.0)
    p.add_argument("--adc-max", type=float, default=3.0e-3)
    p.add_argument("--bins", type=int, default=32)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic cohort with ground truth")
    common(p)
    p.add_argument("--preset", default="lovo_like")
    p.add_argument("--emit-voxels", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model at fixed component counts")
    common(p)
    training(p)
    p.add_argument("--histograms", required=True)
    p.add_argument("--n-control", type=int, required=True)
    p.add_argument("--n-treatment", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select", help="sweep component counts and pick the best")
    common(p)
    training(p)
    p.add_argument("--histograms", required=True)
    p.add_argument("--k-min", type=int, default=1)
    p.add_argument("--k-max", type=int, default=6)
    p.add_argument("--k-min-treatment", type=int, default=0)
    p.add_argument("--k-max-treatment", type=int, default=0)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("fit", help="fit a trained model and score responses")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--histograms", required=True)
    p.add_argument("--cohort", default="treated", choices=["control", "treated"])
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("validate", help="leave-one-out control validation")
    common(p)
    training(p)
    p.add_argument("--histograms", required=True)
    p.add_argument("--n-control", type=int, required=True)
    p.add_argument("--n-treatment", type=int, required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("baseline", help="conventional t-test benchmark")
    common(p)
    p.add_argument("--histograms", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("report", help="render reports from prior outputs")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--response", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(parser, args, argv)
        return args.func(args)
    except SelectionFailedError as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except (InputFormatError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except LpmError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
