"""Command-line entry point: train, explain, safety, serve, report, synth.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 blocking safety failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import synth
from .anchors import PerturbationSpace, ScaledClassifier, export_rules, induce_anchor
from .attribution import global_summary
from .data import (
    DataError,
    Dataset,
    apply_scaler,
    impute_group_mean,
    load_csv,
)
from .dependence import pd_curve
from .models import load_model, save_model
from .neighbors import find_counterfactual, select_prototypes
from .pipeline import load_config, report_dict, report_text, run_training
from .safety import analyze_errors, default_suite, load_suite, run_suite

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SAFETY = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _load_scaled_pool(data_path: str, bundle) -> Dataset:
    raw = load_csv(data_path, bundle.schema)
    imputed = impute_group_mean(raw)
    return apply_scaler(imputed, bundle.scaler)


def cmd_train(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.smote_k is not None:
        config["smote"]["k_neighbors"] = args.smote_k
    if args.smote_ratio is not None:
        config["smote"]["target_ratio"] = args.smote_ratio
    if args.threshold_policy is not None:
        if args.threshold_policy.startswith("fixed:"):
            config["threshold_policy"] = {
                "name": "fixed",
                "floor": None,
                "value": float(args.threshold_policy.split(":", 1)[1]),
            }
        else:
            config["threshold_policy"] = {
                "name": "max_sensitivity_with_specificity_floor",
                "floor": float(args.threshold_policy),
                "value": None,
            }
    result = run_training(args.data, config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "model.json", result.bundle)
    _write_atomic(out / "report.json", _json(report_dict(result)))
    _write_atomic(out / "report.txt", report_text(result))
    _write_atomic(out / "manifest.json", _json(result.manifest.to_dict()))
    if args.format == "json":
        print(_json(report_dict(result)), end="")
    else:
        print(report_text(result), end="")
    return EXIT_OK


def cmd_explain(args) -> int:
    bundle = load_model(args.model)
    pool = _load_scaled_pool(args.data, bundle)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mode = args.mode

    if mode == "global":
        summary = global_summary(bundle.model, pool, pool, seed=args.seed)
        _write_atomic(
            out / "shap_ranking.json",
            _json({"model_digest": bundle.manifest_digest, "rows": summary.ranking_rows()}),
        )
        _write_atomic(
            out / "shap_long.json",
            _json({"model_digest": bundle.manifest_digest, "rows": summary.long_rows()}),
        )
        lines = [f"{'rank':<5} {'feature':<18} mean|phi|"]
        for row in summary.ranking_rows():
            lines.append(f"{row['rank']:<5} {row['feature']:<18} {row['mean_abs_phi']:.6f}")
        _write_atomic(out / "shap_ranking.txt", "\n".join(lines) + "\n")
        print("\n".join(lines))
        return EXIT_OK

    if mode == "prototypes":
        protos = select_prototypes(
            pool, bundle.model, m=args.count, threshold=bundle.threshold, seed=args.seed
        )
        from .data import unscale_row

        cols = []
        for member in protos.members:
            raw = unscale_row(member.values, bundle.schema, bundle.scaler)
            cols.append(
                {
                    "index": member.index,
                    "predicted_class": member.predicted_class,
                    "covered": member.covered_new,
                    "values": {n: float(v) for n, v in zip(bundle.schema.names, raw)},
                }
            )
        doc = {
            "model_digest": bundle.manifest_digest,
            "epsilon": protos.epsilon,
            "prototypes": cols,
        }
        _write_atomic(out / "prototypes.json", _json(doc))
        lines = [f"{'feature':<18}" + "".join(f"p{i+1:<11}" for i in range(len(cols)))]
        for n in bundle.schema.names:
            lines.append(f"{n:<18}" + "".join(f"{c['values'][n]:<12.4g}" for c in cols))
        _write_atomic(out / "prototypes.txt", "\n".join(lines) + "\n")
        print(f"selected {len(cols)} prototypes (epsilon={protos.epsilon:.4f})")
        return EXIT_OK

    if mode == "counterfactual":
        row = _check_row(args.row, pool)
        pair = find_counterfactual(
            pool.X[row], pool, bundle.model, bundle.threshold
        )
        if pair is None:
            _write_atomic(
                out / "counterfactual.json",
                _json({"model_digest": bundle.manifest_digest, "found": False}),
            )
            print("no opposite-prediction record in pool")
            return EXIT_OK
        from .data import unscale_row

        ref_raw = unscale_row(pair.reference, bundle.schema, bundle.scaler)
        cf_raw = unscale_row(pair.counterfactual, bundle.schema, bundle.scaler)
        doc = {
            "model_digest": bundle.manifest_digest,
            "found": True,
            "distance": pair.distance,
            "reference_prediction": pair.reference_prediction,
            "counterfactual_prediction": pair.counterfactual_prediction,
            "reference": {n: float(v) for n, v in zip(bundle.schema.names, ref_raw)},
            "counterfactual": {n: float(v) for n, v in zip(bundle.schema.names, cf_raw)},
            "changed_features": [n for n, _, _ in pair.changed_features],
        }
        _write_atomic(out / "counterfactual.json", _json(doc))
        lines = [f"{'type':<18} {'Reference':<14} Counterfactual"]
        for n in bundle.schema.names:
            mark = " *" if n in doc["changed_features"] else ""
            lines.append(
                f"{n:<18} {doc['reference'][n]:<14.6g} {doc['counterfactual'][n]:.6g}{mark}"
            )
        lines.append(
            f"{'Prediction':<18} {pair.reference_prediction:<14} {pair.counterfactual_prediction}"
        )
        _write_atomic(out / "counterfactual.txt", "\n".join(lines) + "\n")
        print("\n".join(lines))
        return EXIT_OK

    if mode == "pdp":
        feature = args.feature
        curve = pd_curve(bundle.model, pool, feature)
        _write_atomic(
            out / f"pdp_{feature}.json",
            _json({"model_digest": bundle.manifest_digest, "rows": curve.rows()}),
        )
        lines = [f"{'raw':<12} {'scaled':<12} pd"]
        for r in curve.rows():
            lines.append(
                f"{r['feature_value_raw']:<12.5g} {r['feature_value_scaled']:<12.5g} {r['pd']:.5f}"
            )
        _write_atomic(out / f"pdp_{feature}.txt", "\n".join(lines) + "\n")
        print("\n".join(lines))
        return EXIT_OK

    if mode == "anchor":
        row = _check_row(args.row, pool)
        raw_pool = impute_group_mean(load_csv(args.data, bundle.schema))
        space = PerturbationSpace.from_dataset(raw_pool, seed=args.seed)
        classifier = ScaledClassifier(
            bundle.model, bundle.schema, bundle.scaler, bundle.threshold
        )
        rule = induce_anchor(
            classifier, raw_pool.X[row], space, tau=args.tau, coverage_ds=raw_pool
        )
        text = export_rules([rule], bundle.schema)
        _write_atomic(out / "anchor.txt", text)
        _write_atomic(
            out / "anchor.json",
            _json(
                {
                    "model_digest": bundle.manifest_digest,
                    "rule": text.strip(),
                    "precision": rule.precision,
                    "precision_lower": rule.precision_lower,
                    "coverage": rule.coverage,
                    "reached_target": rule.reached_target,
                }
            ),
        )
        print(text, end="")
        return EXIT_OK

    raise DataError(f"unknown explain mode {mode!r}")


def _check_row(row: int, ds: Dataset) -> int:
    if not 0 <= row < ds.n_records:
        raise DataError(f"row {row} out of range (0..{ds.n_records - 1})")
    return row


def cmd_safety(args) -> int:
    bundle = load_model(args.model)
    suite = load_suite(args.suite) if args.suite else default_suite()
    report = run_suite(suite, bundle)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_doc = {"model_digest": bundle.manifest_digest, **report.to_dict()}
    _write_atomic(out / "safety_report.json", _json(report_doc))
    _write_atomic(out / "safety_report.txt", report.summary_table() + "\n")
    if args.format == "json":
        print(_json(report_doc), end="")
    else:
        print(report.summary_table())
    if args.errors_data:
        pool = _load_scaled_pool(args.errors_data, bundle)
        entries = analyze_errors(bundle, pool, seed=args.seed)
        _write_atomic(
            out / "error_analysis.json", _json([e.to_dict() for e in entries])
        )
        print(f"error analysis: {len(entries)} misprediction(s)")
    return EXIT_SAFETY if report.blocking_failure else EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        model_path=args.model, pool_path=args.pool, ui_dir=args.serve_ui
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out_dir)
    pieces = []
    for name in ("report.txt", "safety_report.txt"):
        p = out / name
        if p.exists():
            pieces.append(p.read_text())
    if not pieces:
        raise DataError(f"no report artifacts found in {out}")
    combined = ("\n" + "=" * 70 + "\n").join(pieces)
    _write_atomic(out / "summary.txt", combined)
    print(combined)
    return EXIT_OK


def cmd_synth(args) -> int:
    ds = synth.generate(n=args.n, seed=args.seed)
    synth.write_csv(args.out, ds)
    neg, pos = ds.class_counts()
    print(f"wrote {args.out}: {ds.n_records} records ({pos} CKD / {neg} no CKD)")
    return EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="nephroscope", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the full training pipeline")
    t.add_argument("--data", required=True)
    t.add_argument("--config", default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out-dir", default="out")
    t.add_argument("--format", choices=("json", "text"), default="text")
    t.add_argument("--threshold-policy", default=None, metavar="FLOOR|fixed:T")
    t.add_argument("--smote-k", type=int, default=None)
    t.add_argument("--smote-ratio", type=float, default=None)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("explain", help="emit explanation artifacts")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out-dir", default="out")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument(
        "mode", choices=("global", "prototypes", "counterfactual", "pdp", "anchor")
    )
    e.add_argument("--row", type=int, default=0)
    e.add_argument("--feature", default="eGFR")
    e.add_argument("--count", type=int, default=10)
    e.add_argument("--tau", type=float, default=0.95)
    e.set_defaults(fn=cmd_explain)

    s = sub.add_parser("safety", help="run an edge-case suite")
    s.add_argument("--model", required=True)
    s.add_argument("--suite", default=None)
    s.add_argument("--out-dir", default="out")
    s.add_argument("--format", choices=("json", "text"), default="text")
    s.add_argument("--errors-data", default=None, help="labeled CSV for misprediction analysis")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_safety)

    v = sub.add_parser("serve", help="start the HTTP service")
    v.add_argument("--model", required=True)
    v.add_argument("--pool", default=None, help="raw CSV used as counterfactual pool")
    v.add_argument("--port", type=int, default=8750)
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--serve-ui", default=None, help="directory of built UI assets")
    v.set_defaults(fn=cmd_serve)

    r = sub.add_parser("report", help="combine emitted artifacts into one summary")
    r.add_argument("--out-dir", default="out")
    r.set_defaults(fn=cmd_report)

    g = sub.add_parser("synth", help="generate the bundled synthetic cohort")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=491)
    g.add_argument("--seed", type=int, default=7)
    g.set_defaults(fn=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
