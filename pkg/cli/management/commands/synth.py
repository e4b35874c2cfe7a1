"""
Generate synthetic corpora and datasets.

Usage:
    python manage.py synth cross --images 5 --targets 3 --seed 1 -o corpus/
    python manage.py synth faces --count 300 --base 32 -o faces/
    python manage.py synth backgrounds --count 20 -o bg/
    python manage.py synth gaussians --count 400 --ratio 10 -o data/
"""

from pathlib import Path

from cli import services as cli_svc
from cli.base import HaarboostCommand
from evalkit import reports
from evalkit import services as eval_svc
from evalkit import synthetic
from evalkit.models import SyntheticKind
from imaging import services as imaging_svc
from imaging.models import GrayImage


class Command(HaarboostCommand):
    help = "Writes a synthetic corpus (cross, faces, backgrounds) or dataset (gaussians, moons)"
    output_help = "Directory to write into (default: synthetic)"

    def add_arguments(self, parser):
        parser.add_argument("kind", choices=SyntheticKind.values, help="What to generate")
        parser.add_argument("--images", type=int, help="cross: number of images")
        parser.add_argument("--targets", type=int, help="cross: crosses planted per image")
        parser.add_argument("--width", type=int, help="cross, backgrounds: image width")
        parser.add_argument("--height", type=int, help="cross, backgrounds: image height")
        parser.add_argument("--distractors", type=int, help="cross, backgrounds: bars drawn per image")
        parser.add_argument("--count", type=int, help="faces, backgrounds, gaussians, moons: how many")
        parser.add_argument("--ratio", type=float, help="gaussians: majority to minority ratio")
        parser.add_argument("--gap", type=float, help="gaussians: distance between the class means")
        parser.add_argument("--noise", type=float, help="moons: noise standard deviation")

    def run(self, **options):
        kind = SyntheticKind(options["kind"])
        out_dir = Path(options["output"] or "synthetic")
        params = {
            SyntheticKind.CROSS: {
                "n_images": options["images"],
                "targets": options["targets"],
                "base": options["base"],
                "width": options["width"],
                "height": options["height"],
                "distractors": options["distractors"],
            },
            SyntheticKind.FACES: {"n": options["count"], "base": options["base"]},
            SyntheticKind.BACKGROUNDS: {
                "n": options["count"],
                "width": options["width"],
                "height": options["height"],
                "distractors": options["distractors"],
            },
            SyntheticKind.GAUSSIANS: {"n": options["count"], "ratio": options["ratio"], "gap": options["gap"]},
            SyntheticKind.MOONS: {"n": options["count"], "noise": options["noise"]},
        }[kind]
        result = synthetic.gen_synthetic(kind, options["seed"], **{k: v for k, v in params.items() if v is not None})

        out_dir.mkdir(parents=True, exist_ok=True)
        if kind == SyntheticKind.CROSS:
            annotations = eval_svc.write_corpus(result, out_dir)
            outputs = [*(out_dir / entry.path for entry in result.entries), annotations]
        elif kind == SyntheticKind.FACES:
            outputs = self._write_images([GrayImage.from_array(w) for w in result], out_dir, "face")
        elif kind == SyntheticKind.BACKGROUNDS:
            outputs = self._write_images(result, out_dir, "bg")
        else:
            outputs = [reports.write_dataset(result, out_dir / f"{kind.value}.csv")]

        cli_svc.build_manifest("synth", options, outputs=outputs).write(out_dir / "synth.manifest.json")
        self.done(f"Wrote {len(outputs)} files to {out_dir}")

    def _write_images(self, images, out_dir, prefix):
        paths = []
        for k, img in enumerate(images):
            path = out_dir / f"{prefix}_{k:04d}.pgm"
            path.write_bytes(imaging_svc.save_pgm(img))
            paths.append(path)
        return paths
