"""
Run a trained cascade over images and write the detections as CSV.

Usage:
    python manage.py detect --model model.json photos/ -o detections.csv --annotate boxed/
"""

from pathlib import Path

from cascade import services as cascade_svc
from cascade.detection import detect
from cli import services as cli_svc
from cli.base import HaarboostCommand, add_scan_arguments, scan_config
from imaging import services as imaging_svc


class Command(HaarboostCommand):
    help = "Detects faces with a trained cascade and writes path,x,y,w,h,score rows"
    output_help = "CSV file to write (default: detections.csv)"

    def add_arguments(self, parser):
        parser.add_argument("images", nargs="+", help="PGM/PPM images or directories of them")
        parser.add_argument("--model", required=True, help="Model file written by train")
        parser.add_argument("--annotate", help="Directory for PPM copies with the detections boxed")
        add_scan_arguments(parser)

    def run(self, **options):
        output = Path(options["output"] or "detections.csv")
        cfg = scan_config(options)
        model = cascade_svc.load_model(options["model"])
        paths = [p for source in options["images"] for p in cli_svc.image_paths(source)]

        annotate_dir = Path(options["annotate"]) if options["annotate"] else None
        if annotate_dir is not None:
            annotate_dir.mkdir(parents=True, exist_ok=True)

        rows = []
        for path in paths:
            img = imaging_svc.read_image(path)
            detections = detect(model, img, cfg)
            rows.extend((str(path), d) for d in detections)
            if annotate_dir is not None:
                (annotate_dir / f"{path.stem}.ppm").write_bytes(cascade_svc.annotate(img, detections))

        with output.open("w", newline="", encoding="utf-8") as handle:
            count = cascade_svc.write_detections(rows, handle)
        cli_svc.build_manifest(
            "detect", options, inputs=[options["model"], *paths], outputs=[output]
        ).write(cli_svc.sidecar(output, ".manifest.json"))

        self.done(f"{count} detections in {len(paths)} images; wrote {output}")
