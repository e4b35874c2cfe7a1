"""
Train a detection cascade from a directory of face crops and a directory
of face-free images.

Usage:
    python manage.py train --faces faces/ --nonfaces bg/ --learner svm --base 32 --seed 7 -o model.json

Writes the model, ``<stem>.rounds.csv`` (one row per boosting round) and
``<stem>.manifest.json`` next to it.
"""

from pathlib import Path

from boosting.models import LearnerFamily
from cascade import services as cascade_svc
from cascade.models import CascadeTrainingConfig, ScanConfig
from cli import services as cli_svc
from cli.base import HaarboostCommand


class Command(HaarboostCommand):
    help = "Trains a detection cascade and writes the model, its round log and a manifest"
    output_help = "Model file to write (default: model.json)"

    def add_arguments(self, parser):
        parser.add_argument("--faces", required=True, help="Directory (or file) of face crops")
        parser.add_argument("--nonfaces", required=True, help="Directory (or file) of face-free images")
        parser.add_argument(
            "--learner",
            default=LearnerFamily.STUMP.value,
            choices=LearnerFamily.values,
            help="Weak learner family for every stage (default: stump)",
        )
        parser.add_argument("--d-min", type=float, help="Minimum face detection rate per stage")
        parser.add_argument("--f-max", type=float, help="Maximum false-positive rate per stage")
        parser.add_argument("--target-fpr", type=float, help="Overall false-positive goal")
        parser.add_argument("--max-stages", type=int, help="Stage limit")
        parser.add_argument("--max-rounds", type=int, help="Boosting round limit per stage")
        parser.add_argument("--max-features", type=int, help="Candidate features sampled from the pool")
        parser.add_argument("--negative-ratio", type=int, help="Negatives mined per face")
        parser.add_argument("--mining-budget", type=int, help="Windows examined per mining pass")

    def run(self, **options):
        output = Path(options["output"] or "model.json")
        cfg = CascadeTrainingConfig.from_settings(
            learner=options["learner"],
            d_min=options["d_min"],
            f_max=options["f_max"],
            target_fpr=options["target_fpr"],
            max_stages=options["max_stages"],
            max_rounds_per_stage=options["max_rounds"],
            max_candidate_features=options["max_features"],
            negative_ratio=options["negative_ratio"],
            mining_budget=options["mining_budget"],
            seed=options["seed"],
        )
        faces = cli_svc.read_windows(options["faces"], options["base"])
        nonfaces = cli_svc.read_images(options["nonfaces"])

        trainer = cascade_svc.CascadeTrainer(faces, nonfaces, cfg, scan=ScanConfig.from_settings())
        model = trainer.train()

        rounds = cli_svc.sidecar(output, ".rounds.csv")
        manifest = cli_svc.sidecar(output, ".manifest.json")
        cascade_svc.save_model(model, output)
        cascade_svc.write_round_log(trainer.round_log, rounds)
        cli_svc.build_manifest(
            "train", options, inputs=[options["faces"], options["nonfaces"]], outputs=[output, rounds]
        ).write(manifest)

        self.done(f"Trained {len(model)} stages ({trainer.stop_reason}); wrote {output}, {rounds} and {manifest}")
