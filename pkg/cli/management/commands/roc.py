"""
Sweep a model's final-stage threshold over an annotated corpus.

Usage:
    python manage.py roc --model model.json --annotations corpus/annotations.txt -o roc.csv --svg roc.svg
"""

from pathlib import Path

from cascade import services as cascade_svc
from cli import services as cli_svc
from cli.base import HaarboostCommand, add_scan_arguments, float_list, scan_config
from evalkit import reports
from evalkit import services as eval_svc


class Command(HaarboostCommand):
    help = "Writes the ROC curve (threshold, false detections, detection rate) of one model"
    output_help = "CSV file to write (default: roc.csv)"

    def add_arguments(self, parser):
        parser.add_argument("--model", required=True, help="Model file written by train")
        parser.add_argument("--annotations", required=True, help="Annotation file of the test corpus")
        parser.add_argument("--svg", help="Also plot the curve to this SVG file")
        parser.add_argument("--sweep", help="Comma-separated thresholds (default: every group score)")
        parser.add_argument("--match-iou", type=float, help="IoU a detection needs to count as a face")
        add_scan_arguments(parser)

    def run(self, **options):
        output = Path(options["output"] or "roc.csv")
        sweep = float_list(options["sweep"]) if options["sweep"] is not None else None
        model = cascade_svc.load_model(options["model"])
        corpus = eval_svc.load_annotations(options["annotations"])

        points = eval_svc.roc_curve(model, corpus, scan_config(options), sweep, options["match_iou"])
        outputs = [reports.write_roc_csv(points, output)]
        if options["svg"]:
            outputs.append(reports.write_roc_svg({Path(options["model"]).stem: points}, options["svg"]))

        inputs = [options["model"], options["annotations"], *cli_svc.corpus_files(corpus)]
        cli_svc.build_manifest("roc", options, inputs=inputs, outputs=outputs).write(
            cli_svc.sidecar(output, ".manifest.json")
        )
        self.done(f"{len(points)} ROC points over {len(corpus)} images; wrote {', '.join(map(str, outputs))}")
