"""Report and plot-data emission.

All files are byte-stable for identical inputs: JSON uses sorted keys and
CSV floats use shortest round-trip formatting. report.json carries every
metric, chosen config, and ranking; the CSV side-files are shaped for the
standard plots (selection curve, importance bars, interaction heatmap,
main-effect scatter).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .entropy import FEATURE_NAMES
from .errors import InvalidArgumentError
from .evaluate import CvReport, Dataset, FoldResult, MetricSummary
from .explain import ImportanceRanking, SelectionResult, SelectionRow, ShapExplanation
from .gbdt import TrainConfig
from .pipeline import ExplainedRun, PredictionRow


def _json_dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1)


def _config_dict(cfg: TrainConfig | None):
    return dataclasses.asdict(cfg) if cfg is not None else None


def _fold_dict(f: FoldResult) -> dict:
    return {
        "subject_id": f.subject_id,
        "n_test": f.n_test,
        "accuracy": f.accuracy,
        "f1": f.f1,
        "best_iteration": f.best_iteration,
        "failed": f.failed,
        "reason": f.reason,
        "config": _config_dict(f.config),
    }


def cv_report_to_dict(report: CvReport) -> dict:
    return {
        "target": report.target,
        "folds": [_fold_dict(f) for f in report.folds],
        "summary": dataclasses.asdict(report.summary),
        "failed_subjects": list(report.failed_subjects),
    }


def _fold_from_dict(d: dict) -> FoldResult:
    cfg = TrainConfig(**d["config"]) if d["config"] is not None else None
    return FoldResult(
        subject_id=d["subject_id"],
        n_test=d["n_test"],
        accuracy=d["accuracy"],
        f1=d["f1"],
        config=cfg,
        best_iteration=d["best_iteration"],
        failed=d["failed"],
        reason=d["reason"],
    )


def cv_report_from_dict(d: dict) -> CvReport:
    return CvReport(
        target=d["target"],
        folds=tuple(_fold_from_dict(f) for f in d["folds"]),
        summary=MetricSummary(**d["summary"]),
        failed_subjects=tuple(d["failed_subjects"]),
    )


def explained_run_to_dict(run: ExplainedRun) -> dict:
    return {
        "report": cv_report_to_dict(run.report),
        "importance": [[name, score] for name, score in run.importance.entries],
        "row_ids": list(run.row_ids),
        "base_values": [e.base_value for e in run.explanations],
        "shap_values": [e.values.tolist() for e in run.explanations],
        "feature_names": list(run.explanations[0].feature_names) if run.explanations else [],
        "predictions": [dataclasses.asdict(p) for p in run.predictions],
    }


def explained_run_from_dict(d: dict) -> ExplainedRun:
    names = tuple(d["feature_names"])
    explanations = tuple(
        ShapExplanation(np.array(vals), base, names)
        for vals, base in zip(d["shap_values"], d["base_values"])
    )
    return ExplainedRun(
        report=cv_report_from_dict(d["report"]),
        explanations=explanations,
        row_ids=tuple(d["row_ids"]),
        importance=ImportanceRanking(tuple((n, s) for n, s in d["importance"])),
        predictions=tuple(PredictionRow(**p) for p in d["predictions"]),
    )


def selection_to_dict(sel: SelectionResult) -> dict:
    return {
        "rows": [dataclasses.asdict(r) for r in sel.rows],
        "best_k_accuracy": sel.best_k_accuracy,
        "best_k_f1": sel.best_k_f1,
    }


def selection_from_dict(d: dict) -> SelectionResult:
    return SelectionResult(
        rows=tuple(SelectionRow(**r) for r in d["rows"]),
        best_k_accuracy=d["best_k_accuracy"],
        best_k_f1=d["best_k_f1"],
    )


def save_json(doc, path) -> None:
    Path(path).write_text(_json_dumps(doc))


def load_json(path):
    return json.loads(Path(path).read_text())


def write_explanations_csv(run: ExplainedRun, dataset: Dataset, path) -> None:
    """Sample x feature attribution table for the pooled test explanations."""
    rows_by_id = {r.row_id: r for r in dataset.rows}
    names = run.explanations[0].feature_names if run.explanations else FEATURE_NAMES
    with Path(path).open("w", newline="") as fh:
        fh.write("subject,trial,base_value," + ",".join(names) + "\n")
        for row_id, exp in zip(run.row_ids, run.explanations):
            r = rows_by_id[row_id]
            cells = [str(r.subject_id), str(r.trial_id), repr(float(exp.base_value))]
            cells += [repr(float(v)) for v in exp.values]
            fh.write(",".join(cells) + "\n")


@dataclass(frozen=True)
class TargetArtifacts:
    """Everything the final report needs for one prediction target."""

    target: str
    run: ExplainedRun
    selection: SelectionResult | None = None
    interaction_mean_abs: np.ndarray | None = None
    interaction_names: tuple[str, ...] | None = None


def _strongest_interactor(mat: np.ndarray, names: Sequence[str], feature: str) -> str:
    i = list(names).index(feature)
    off = mat[i].copy()
    off[i] = -np.inf
    return names[int(np.argmax(off))]


def emit_report(artifacts: Sequence[TargetArtifacts], dataset: Dataset, out_dir) -> list[Path]:
    """Write report.json plus the plot-data CSVs; returns the written paths.

    Refuses to write anything when the artifact list is empty or a target
    has no successful folds.
    """
    if not artifacts:
        raise InvalidArgumentError("emit_report called with no results")
    for art in artifacts:
        ok = [f for f in art.run.report.folds if not f.failed]
        if not ok:
            raise InvalidArgumentError(f"target {art.target}: no successful folds to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    report_doc: dict = {"targets": {}}
    for art in artifacts:
        doc = {
            "cv": cv_report_to_dict(art.run.report),
            "importance": [[n, s] for n, s in art.run.importance.entries],
        }
        if art.selection is not None:
            doc["selection"] = selection_to_dict(art.selection)
        report_doc["targets"][art.target] = doc
    path = out / "report.json"
    path.write_text(_json_dumps(report_doc))
    written.append(path)

    path = out / "importance.csv"
    with path.open("w", newline="") as fh:
        fh.write("target,rank,feature,mean_abs_shap\n")
        for art in artifacts:
            for rank, (name, score) in enumerate(art.run.importance.entries, start=1):
                fh.write(f"{art.target},{rank},{name},{repr(float(score))}\n")
    written.append(path)

    if any(art.selection is not None for art in artifacts):
        path = out / "selection_curve.csv"
        with path.open("w", newline="") as fh:
            fh.write("target,k,accuracy,accuracy_se,f1,f1_se\n")
            for art in artifacts:
                if art.selection is None:
                    continue
                for r in art.selection.rows:
                    fh.write(
                        f"{art.target},{r.k},{repr(r.accuracy)},{repr(r.accuracy_se)},"
                        f"{repr(r.f1)},{repr(r.f1_se)}\n"
                    )
        written.append(path)

    if any(art.interaction_mean_abs is not None for art in artifacts):
        path = out / "interactions.csv"
        with path.open("w", newline="") as fh:
            fh.write("target,feature_i,feature_j,mean_abs_interaction\n")
            for art in artifacts:
                if art.interaction_mean_abs is None:
                    continue
                names = art.interaction_names or FEATURE_NAMES
                mat = art.interaction_mean_abs
                totals = mat.sum(axis=1) - np.diag(mat)
                order = sorted(range(len(names)), key=lambda i: (-totals[i], i))[:10]
                for i in order:
                    for j in order:
                        fh.write(f"{art.target},{names[i]},{names[j]},{repr(float(mat[i, j]))}\n")
        written.append(path)

    path = out / "predictions.csv"
    with path.open("w", newline="") as fh:
        fh.write("target,subject,trial,y_true,probability,y_pred\n")
        for art in artifacts:
            for p in art.run.predictions:
                fh.write(
                    f"{art.target},{p.subject_id},{p.trial_id},{p.y_true},"
                    f"{repr(p.probability)},{int(p.probability > 0.5)}\n"
                )
    written.append(path)

    # main-effect scatter data for each target's top-ranked feature
    rows_by_id = {r.row_id: r for r in dataset.rows}
    for art in artifacts:
        if not art.run.importance.entries:
            continue
        feature = art.run.importance.entries[0][0]
        names = art.run.explanations[0].feature_names
        fi = list(names).index(feature)
        interactor = None
        if art.interaction_mean_abs is not None:
            inames = art.interaction_names or FEATURE_NAMES
            if feature in inames:
                interactor = _strongest_interactor(art.interaction_mean_abs, inames, feature)
        path = out / f"effects_{feature}.csv"
        mode = "a" if path in written else "w"
        with path.open(mode, newline="") as fh:
            if mode == "w":
                fh.write("target,subject,trial,feature_value,shap_value,interactor,interactor_value\n")
            for row_id, exp in zip(art.run.row_ids, art.run.explanations):
                r = rows_by_id[row_id]
                ival = repr(float(r.features[interactor])) if interactor else ""
                fh.write(
                    f"{art.target},{r.subject_id},{r.trial_id},"
                    f"{repr(float(r.features[feature]))},{repr(float(exp.values[fi]))},"
                    f"{interactor or ''},{ival}\n"
                )
        if path not in written:
            written.append(path)
    return written
