"""
Compare trained models on one annotated corpus.

Usage:
    python manage.py eval --models svm.json,stump.json --annotations corpus/annotations.txt --fd 120,200 -o results/

Writes ``roc_<model>.csv`` per model, ``roc.svg`` with every curve, and the
error table as ``error_table.txt`` and ``error_table.csv``.
"""

from pathlib import Path

from django.conf import settings
from django.core.exceptions import ValidationError

from cascade import services as cascade_svc
from cli import services as cli_svc
from cli.base import HaarboostCommand, add_scan_arguments, float_list, int_list, scan_config
from evalkit import reports
from evalkit import services as eval_svc


class Command(HaarboostCommand):
    help = "Writes ROC curves, a combined plot and the error-rate table for several models"
    output_help = "Directory for the results (default: eval)"

    def add_arguments(self, parser):
        parser.add_argument("--models", required=True, help="Comma-separated model files; rows follow this order")
        parser.add_argument("--annotations", required=True, help="Annotation file of the test corpus")
        parser.add_argument("--fd", help="Comma-separated false-detection targets (default: settings)")
        parser.add_argument("--sweep", help="Comma-separated thresholds (default: every group score)")
        add_scan_arguments(parser)

    def run(self, **options):
        out_dir = Path(options["output"] or "eval")
        model_paths = [Path(p.strip()) for p in options["models"].split(",") if p.strip()]
        if not model_paths:
            raise ValidationError({"models": "name at least one model file"})
        names = [p.stem for p in model_paths]
        if len(set(names)) != len(names):
            raise ValidationError({"models": f"model file names must differ, got {', '.join(names)}"})
        fd_targets = int_list(options["fd"]) if options["fd"] is not None else settings.HAARBOOST["EVAL"]["FD_TARGETS"]
        if not fd_targets:
            raise ValidationError({"fd": "at least one false-detection target is needed"})
        sweep = float_list(options["sweep"]) if options["sweep"] is not None else None

        models = {p.stem: cascade_svc.load_model(p) for p in model_paths}
        corpus = eval_svc.load_annotations(options["annotations"])
        cfg = scan_config(options)

        curves = {name: eval_svc.roc_curve(model, corpus, cfg, sweep) for name, model in models.items()}
        table = eval_svc.error_table_from_curves(curves, fd_targets)

        out_dir.mkdir(parents=True, exist_ok=True)
        outputs = [reports.write_roc_csv(points, out_dir / f"roc_{name}.csv") for name, points in curves.items()]
        outputs.append(reports.write_roc_svg(curves, out_dir / "roc.svg"))
        text_path, csv_path = out_dir / "error_table.txt", out_dir / "error_table.csv"
        reports.write_error_table(table, text_path, csv_path)
        outputs += [text_path, csv_path]

        inputs = [*model_paths, options["annotations"], *cli_svc.corpus_files(corpus)]
        cli_svc.build_manifest("eval", options, inputs=inputs, outputs=outputs).write(out_dir / "eval.manifest.json")

        self.stdout.write(reports.error_table_text(table), ending="")
        self.done(f"Evaluated {len(models)} models on {len(corpus)} images; wrote {out_dir}")
