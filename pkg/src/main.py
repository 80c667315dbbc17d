"""
mcrec - Multi-Criteria Recommendation
Main Application Entry Point

Commands:
- ingest / split / synth: prepare rating data
- train / eval / recommend: fit and use a model
- export-graph: write the expansion graph of a split as an edge list
- bench / diagnose / sweep / compare: experiments and diagnostics

Every command writes a manifest.json next to its outputs.
"""

import argparse
import difflib
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd

# Add current directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src import __version__
from src.config import APP_NAME, VARIANTS, ConfigManager, TrainConfig, setup_logging
from src.core import dataset as ds
from src.core.errors import CheckpointError, McRecError, UnknownUserError
from src.core.graph import export_graph
from src.core.model import load_checkpoint, save_checkpoint
from src.core.seeding import RngStreams
from src.services.artifacts import RunManifest, write_csv, write_json
from src.services.evaluation import evaluate_recommender, smoothness_report, top_k
from src.services.experiments import ModelSpec, bench_linear_scaling, compare, rows_frame, sweep
from src.services.recommender import Recommender
from src.services.synthetic import generate_synthetic
from src.services.training import MODEL_KINDS, get_recommender, train

logger = logging.getLogger(APP_NAME)

CHECKPOINT_FILE = "checkpoint.npz"


def _common_flags() -> argparse.ArgumentParser:
    """Flags shared by every command; each maps onto a config key"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file (default ~/.mcrec/config.json)")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--k", type=int, nargs="+", dest="k_values", help="ranking cutoffs")
    common.add_argument("--repeats", type=int, default=1)
    common.add_argument("--variant", choices=VARIANTS)
    common.add_argument("--pairnorm", choices=("on", "off"))
    common.add_argument("--alpha", type=float)
    common.add_argument("--layers", type=int)
    common.add_argument("--dim", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--epochs", type=int, dest="max_epochs")
    common.add_argument("--batch-size", type=int)
    common.add_argument("--max-batches", type=int, dest="max_batches_per_epoch",
                        help="cap on optimizer steps per epoch")
    common.add_argument("--patience", type=int)
    common.add_argument("--negatives", choices=("any", "overall"), dest="negative_mode")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog=APP_NAME, description="Multi-criteria recommendation toolkit")
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="binarize and filter a rating log")
    p.add_argument("--ratings", type=Path, required=True)
    p.add_argument("--criteria", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--min-interactions", type=int, default=5)

    p = sub.add_parser("split", parents=[common], help="per-user train/valid/test split")
    p.add_argument("--interactions", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--ratios", type=float, nargs=3, default=list(ds.DEFAULT_RATIOS))

    p = sub.add_parser("synth", parents=[common], help="generate a planted-preference rating log")
    p.add_argument("--users", type=int, default=2000)
    p.add_argument("--items", type=int, default=500)
    p.add_argument("--n-criteria", type=int, default=3)
    p.add_argument("--density", type=float, default=0.05)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", parents=[common], help="train a model on a split directory")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--kind", choices=sorted(MODEL_KINDS), default="cpa_lgc")

    p = sub.add_parser("eval", parents=[common], help="rank test items with a checkpoint")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--per-user", action="store_true")

    p = sub.add_parser("recommend", parents=[common], help="top-K items for one user")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("export-graph", parents=[common],
                       help="write the MC expansion graph of a split")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("bench", parents=[common], help="epoch time against edge count")
    p.add_argument("--sizes", type=int, nargs="+", default=[10_000, 100_000, 1_000_000])
    p.add_argument("--n-criteria", type=int, default=3)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("diagnose", parents=[common], help="per-layer pairwise distances")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--max-nodes", type=int, default=2000)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("sweep", parents=[common], help="one model per hyperparameter value")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--parameter", choices=("layers", "dim", "alpha", "n_criteria"), required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--kind", choices=sorted(MODEL_KINDS), default="cpa_lgc")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("compare", parents=[common], help="models side by side over repeated seeds")
    p.add_argument("--interactions", type=Path, required=True)
    p.add_argument("--models", nargs="+", default=["cpa_lgc:full", "lightgcn", "lightgcn_mc"],
                   help="kind[:variant] entries")
    p.add_argument("--ratios", type=float, nargs=3, default=list(ds.DEFAULT_RATIOS))
    p.add_argument("--out", type=Path, required=True)
    return parser


def _parse_model(entry: str) -> ModelSpec:
    kind, _, variant = entry.partition(":")
    if kind not in MODEL_KINDS:
        raise McRecError(f"unknown model kind '{kind}'")
    if variant and variant not in VARIANTS:
        raise McRecError(f"unknown variant '{variant}'")
    return ModelSpec(kind=kind, variant=variant or "full")


class McRecApplication:
    """
    Main application coordinator.

    Manages:
    - Configuration precedence (defaults < config file < flags)
    - Command dispatch and error reporting
    - Run manifests
    """

    def __init__(self):
        self.parser = build_parser()
        self.args: Optional[argparse.Namespace] = None
        self.config: Optional[TrainConfig] = None

    def _build_config(self, args: argparse.Namespace) -> TrainConfig:
        manager = ConfigManager(args.config)
        pairnorm = None if args.pairnorm is None else args.pairnorm == "on"
        manager.apply_overrides({
            "seed": args.seed,
            "threads": args.threads,
            "k_values": args.k_values,
            "variant": args.variant,
            "pairnorm": pairnorm,
            "alpha": args.alpha,
            "layers": args.layers,
            "dim": args.dim,
            "lr": args.lr,
            "max_epochs": args.max_epochs,
            "batch_size": args.batch_size,
            "max_batches_per_epoch": args.max_batches_per_epoch,
            "patience": args.patience,
            "negative_mode": args.negative_mode,
        })
        return manager.to_train_config()

    def _manifest(self, inputs: Sequence[Path] = ()) -> RunManifest:
        return RunManifest(
            command=self.args.command,
            config=self.config.to_dict(),
            seeds=[self.config.seed + r for r in range(max(1, self.args.repeats))],
            inputs=[str(p) for p in inputs],
        )

    def _load_model(self, splits: ds.DatasetSplits, checkpoint: Path) -> Recommender:
        header, tables = load_checkpoint(checkpoint)
        try:
            config = TrainConfig.from_dict(header["config"]).replace(threads=self.config.threads)
            kind = header["kind"]
        except KeyError as e:
            raise CheckpointError(f"checkpoint header lacks {e}") from e
        model = get_recommender(kind, splits.train, config, RngStreams(config.seed))
        if model.header()["layout"] != header.get("layout"):
            raise CheckpointError(
                f"checkpoint layout {header.get('layout')} does not match the data "
                f"{model.header()['layout']}"
            )
        model.load_tables(tables)
        return model

    # Commands

    def cmd_ingest(self, args) -> None:
        specs = ds.load_criterion_specs(args.criteria)
        log = ds.ingest(args.ratings, specs)
        iset = ds.filter_min_interactions(ds.binarize(log, specs), args.min_interactions)
        manifest = self._manifest([args.ratings, args.criteria])
        args.out.mkdir(parents=True, exist_ok=True)
        ds.write_interactions(iset, args.out / "interactions.tsv")
        ds.write_criterion_specs(specs, args.out / "criteria.json")
        ds.write_stats(ds.stats(iset), args.out / "stats.json")
        for name in ("interactions.tsv", "criteria.json", "stats.json"):
            manifest.add_output(args.out / name)
        manifest.finish(args.out)
        print(json.dumps(ds.stats(iset).to_dict(), indent=2))

    def _read_interactions(self, path: Path) -> ds.InteractionSet:
        specs_path = path.parent / "criteria.json"
        n_criteria_plus1 = len(ds.load_criterion_specs(specs_path)) if specs_path.exists() else None
        return ds.read_interactions(path, n_criteria_plus1=n_criteria_plus1)

    def cmd_split(self, args) -> None:
        iset = self._read_interactions(args.interactions)
        splits = ds.split(iset, args.ratios, seed=self.config.seed)
        manifest = self._manifest([args.interactions])
        for path in ds.save_splits(splits, args.out):
            manifest.add_output(path)
        ds.write_stats(ds.stats(splits.train), args.out / "stats.json")
        manifest.add_output(args.out / "stats.json")
        manifest.finish(args.out)
        print(f"train {len(splits.train)}  valid {len(splits.valid)}  test {len(splits.test)}")

    def cmd_synth(self, args) -> None:
        log = generate_synthetic(args.users, args.items, args.n_criteria, args.density,
                                 args.noise, seed=self.config.seed)
        manifest = self._manifest()
        args.out.mkdir(parents=True, exist_ok=True)
        log.write_tsv(args.out / "ratings.tsv")
        ds.write_criterion_specs(log.specs, args.out / "criteria.json")
        manifest.add_output(args.out / "ratings.tsv")
        manifest.add_output(args.out / "criteria.json")
        manifest.finish(args.out)
        print(f"{len(log)} ratings written to {args.out}")

    def cmd_train(self, args) -> None:
        splits = ds.load_splits(args.data)
        result = train(splits, self.config, args.kind, RngStreams(self.config.seed),
                       progress=sys.stderr.isatty())
        manifest = self._manifest([args.data])
        model = result.model
        outputs = [
            save_checkpoint(args.out / CHECKPOINT_FILE, model.checkpoint_tables(), model.header()),
            write_json(args.out / "summary.json", result.summary()),
            write_json(args.out / "config.json", self.config.to_dict()),
            write_csv(args.out / "training_log.csv", result.log_frame()),
        ]
        for path in outputs:
            manifest.add_output(path)
        manifest.finish(args.out)
        print(json.dumps(result.summary(), indent=2))

    def cmd_eval(self, args) -> None:
        splits = ds.load_splits(args.data)
        model = self._load_model(splits, args.checkpoint)
        extra = (splits.valid,) if self.config.exclude_valid else ()
        metrics = evaluate_recommender(model, splits.train, splits.test, self.config.k_values,
                                       extra, per_user=args.per_user)
        manifest = self._manifest([args.data, args.checkpoint])
        args.out.mkdir(parents=True, exist_ok=True)
        metrics.write_json(args.out / "metrics.json")
        metrics.write_csv(args.out / "metrics.csv")
        manifest.add_output(args.out / "metrics.json")
        manifest.add_output(args.out / "metrics.csv")
        manifest.finish(args.out)
        print(metrics.to_frame().to_string(index=False))

    def cmd_recommend(self, args) -> None:
        splits = ds.load_splits(args.data)
        index = splits.train.user_index()
        if args.user not in index:
            suggestions = difflib.get_close_matches(args.user, splits.train.user_ids, n=5, cutoff=0.3)
            raise UnknownUserError(args.user, suggestions)
        model = self._load_model(splits, args.checkpoint)
        k = self.config.k_values[-1] if args.k_values is None else args.k_values[0]
        ranked = top_k(model, splits.train, index[args.user], k)
        rows = [{"rank": r + 1, "item": splits.train.item_ids[i], "score": s}
                for r, (i, s) in enumerate(ranked)]
        for row in rows:
            print(f"{row['rank']}\t{row['item']}\t{row['score']:.6f}")
        if args.out is not None:
            manifest = self._manifest([args.data, args.checkpoint])
            manifest.add_output(write_csv(args.out / "recommendations.csv",
                                          pd.DataFrame(rows, columns=["rank", "item", "score"])))
            manifest.finish(args.out)

    def cmd_export_graph(self, args) -> None:
        splits = ds.load_splits(args.data)
        graph = get_recommender("cpa_lgc", splits.train, self.config,
                                RngStreams(self.config.seed)).sampling_graph
        manifest = self._manifest([args.data])
        for path in export_graph(graph, args.out):
            manifest.add_output(path)
        manifest.finish(args.out)
        print(f"{graph.node_count} nodes, {graph.n_edges} edges written to {args.out}")

    def cmd_bench(self, args) -> None:
        report = bench_linear_scaling(args.sizes, self.config,
                                      n_criteria_plus1=args.n_criteria + 1,
                                      repeats=max(3, args.repeats))
        manifest = self._manifest()
        manifest.add_output(write_csv(args.out / "bench.csv", report.to_frame()))
        manifest.add_output(write_json(args.out / "bench.json", report.summary()))
        manifest.finish(args.out)
        print(report.to_frame().to_string(index=False))
        print(f"R^2 = {report.r_squared:.4f}")

    def cmd_diagnose(self, args) -> None:
        splits = ds.load_splits(args.data)
        streams = RngStreams(self.config.seed)
        if args.checkpoint is not None:
            model = self._load_model(splits, args.checkpoint)
        else:
            model = get_recommender("cpa_lgc", splits.train, self.config, streams)
        if not hasattr(model, "adj"):
            raise McRecError(f"{model.label} has no single propagation stack to diagnose")
        report = smoothness_report(model.forward(training=False), bins=args.bins,
                                   max_nodes=args.max_nodes, rng=streams.get("smoothness"))
        inputs = [args.data] + ([args.checkpoint] if args.checkpoint else [])
        manifest = self._manifest(inputs)
        args.out.mkdir(parents=True, exist_ok=True)
        report.write_csv(args.out / "smoothness.csv")
        report.write_histogram_csv(args.out / "smoothness_hist.csv")
        manifest.add_output(args.out / "smoothness.csv")
        manifest.add_output(args.out / "smoothness_hist.csv")
        manifest.finish(args.out)
        print(report.to_frame().to_string(index=False))

    def cmd_sweep(self, args) -> None:
        splits = ds.load_splits(args.data)
        cast = float if args.parameter == "alpha" else int
        values = [cast(v) for v in args.values]
        rows = []
        for r in range(args.repeats):
            config = self.config.replace(seed=self.config.seed + r)
            rows.extend(sweep(config, args.parameter, values, splits, args.kind))
        frame = rows_frame(rows).rename(columns={"value": args.parameter})
        manifest = self._manifest([args.data])
        manifest.add_output(write_csv(args.out / "sweep.csv", frame))
        manifest.finish(args.out)
        print(frame.to_string(index=False))

    def cmd_compare(self, args) -> None:
        iset = self._read_interactions(args.interactions)
        models = [_parse_model(entry) for entry in args.models]
        rows, summary = compare(models, lambda seed: ds.split(iset, args.ratios, seed=seed),
                                self.config, repeats=args.repeats)
        manifest = self._manifest([args.interactions])
        manifest.add_output(write_csv(args.out / "compare.csv", rows_frame(rows)))
        manifest.add_output(write_csv(args.out / "compare_summary.csv", summary))
        manifest.finish(args.out)
        print(summary.to_string(index=False))

    def run(self, argv: Optional[List[str]] = None) -> int:
        """Parse flags and run one command; returns the exit code"""
        self.args = self.parser.parse_args(argv)
        setup_logging()
        handler = getattr(self, f"cmd_{self.args.command.replace('-', '_')}")
        try:
            if self.args.repeats < 1:
                raise McRecError("--repeats must be >= 1")
            self.config = self._build_config(self.args)
            handler(self.args)
        except McRecError as e:
            logger.error("%s", e)
            return 1
        except KeyboardInterrupt:
            logger.error("interrupted")
            return 1
        return 0


def main(argv: Optional[List[str]] = None) -> int:
    """Application entry point"""
    app = McRecApplication()
    return app.run(argv)


if __name__ == "__main__":
    sys.exit(main())
