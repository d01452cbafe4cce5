"""Command-line front end binding the pipeline stages.

Subcommands: train-codebook, train-pca, encode, import-features, match,
eval, bench, convert-gt. Every command that writes outputs also writes a
``manifest.json`` (argument echo + seed + versions) so runs can be
reproduced exactly; all randomness flows from ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .codebook import gmm_fit, kmeans_fit
from .encoders import Descriptor
from .errors import ConfigError, LoopCloseError
from .evaluation import write_ground_truth_csv
from .feature_io import (
    read_feature_file,
    read_local_features,
    write_feature_file,
)
from .gist import GistParams
from .imaging import load_grayscale
from .local_features import apply_pca, dense_descriptors, fit_pca
from .matching import DescriptorDatabase, detect_loops
from .model_io import load_model, save_model
from .protocol import (
    Models,
    benchmark_extraction,
    compute_descriptor_set,
    extract_descriptor,
    list_images,
    load_descriptor_dir,
    load_experiment_config,
    run_protocol,
    write_manifest,
)


def _add_gist_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--gist-scales", type=int, default=4)
    parser.add_argument("--gist-orientations", type=int, default=8)
    parser.add_argument("--gist-grid", type=int, default=4)
    parser.add_argument("--gist-size", type=int, default=256)


def _add_sift_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--sift-step", type=int, default=8)
    parser.add_argument("--sift-patch", type=int, default=16)


def _gist_params(args) -> GistParams:
    return GistParams(
        scales=args.gist_scales,
        orientations_per_scale=args.gist_orientations,
        grid=args.gist_grid,
        canonical_size=args.gist_size,
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loopclose",
        description="Whole-image descriptors and loop-closure evaluation.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "train-codebook", help="fit a visual-word vocabulary or a Gaussian mixture"
    )
    p.add_argument("--kind", choices=("vocab", "gmm"), required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--images", type=Path, help="train on dense descriptors of these images")
    p.add_argument("--local-features", type=Path, help="train on imported local<d> files")
    p.add_argument("--pca", type=Path, help="project descriptors before fitting")
    p.add_argument(
        "--max-descriptors",
        type=int,
        default=0,
        help="seeded subsample cap (0 = use all)",
    )
    p.add_argument("--out", type=Path, required=True)
    _add_sift_flags(p)
    p.set_defaults(func=_cmd_train_codebook)

    p = sub.add_parser("train-pca", help="fit the local-descriptor projection")
    p.add_argument("--images", type=Path)
    p.add_argument("--local-features", type=Path)
    p.add_argument("--out-dim", type=int, default=80)
    p.add_argument("--out", type=Path, required=True)
    _add_sift_flags(p)
    p.set_defaults(func=_cmd_train_pca)

    p = sub.add_parser("encode", help="compute whole-image descriptors to .lcdf files")
    p.add_argument("--desc", choices=("gist", "bovw", "fv", "vlad"), required=True)
    p.add_argument("--images", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--vocab", type=Path)
    p.add_argument("--gmm", type=Path)
    p.add_argument("--pca", type=Path)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--seed", type=int, default=0)
    _add_gist_flags(p)
    _add_sift_flags(p)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser(
        "import-features", help="validate external .lcdf files (optionally copy)"
    )
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, help="copy validated files here")
    p.set_defaults(func=_cmd_import_features)

    p = sub.add_parser("match", help="match query features against a reference map")
    p.add_argument("--query-features", type=Path, required=True)
    p.add_argument("--ref-features", type=Path, required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("eval", help="run a configured experiment end to end")
    p.add_argument("--config", type=Path, required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="time descriptor extraction")
    p.add_argument("--images", type=Path, required=True)
    p.add_argument("--desc", required=True, help="comma list of gist,bovw,fv,vlad")
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--vocab", type=Path)
    p.add_argument("--gmm", type=Path)
    p.add_argument("--pca", type=Path)
    p.add_argument("--out", type=Path, help="write the timing table CSV here")
    _add_gist_flags(p)
    _add_sift_flags(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser(
        "convert-gt", help="convert a 0/1 ground-truth matrix to the pair CSV"
    )
    p.add_argument("--matrix", type=Path, required=True, help=".mat, .npy, or text matrix")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--query-ids", type=Path, help="one id per line (default: row indices)")
    p.add_argument("--reference-ids", type=Path, help="one id per line (default: col indices)")
    p.set_defaults(func=_cmd_convert_gt)

    return parser


def _load_training_descriptors(args) -> np.ndarray:
    if (args.images is None) == (args.local_features is None):
        raise ConfigError("provide exactly one of --images / --local-features")
    sets = []
    if args.images is not None:
        for path in list_images(args.images):
            sets.append(
                dense_descriptors(
                    load_grayscale(path), step=args.sift_step, patch=args.sift_patch
                )
            )
    else:
        files = sorted(Path(args.local_features).glob("*.lcdf"))
        if not files:
            raise ConfigError(f"no .lcdf files in {args.local_features}")
        for path in files:
            sets.append(read_local_features(path)[1])
    pca = getattr(args, "pca", None)
    if pca is not None:
        model = load_model(pca)
        sets = [apply_pca(model, fs) for fs in sets]
    data = np.concatenate([fs.descriptors for fs in sets if fs.count], axis=0)
    return data


def _cmd_train_codebook(args) -> int:
    data = _load_training_descriptors(args)
    if args.max_descriptors and data.shape[0] > args.max_descriptors:
        rng = np.random.default_rng(args.seed)
        pick = rng.choice(data.shape[0], size=args.max_descriptors, replace=False)
        data = data[np.sort(pick)]
    if args.kind == "vocab":
        model = kmeans_fit(data, k=args.k, seed=args.seed, max_iter=args.max_iter)
    else:
        model = gmm_fit(data, k=args.k, seed=args.seed, max_iter=args.max_iter)
    save_model(args.out, model)
    write_manifest(
        args.out.with_suffix(".manifest.json"),
        command="train-codebook",
        parameters={
            "kind": args.kind,
            "k": args.k,
            "n_training_descriptors": int(data.shape[0]),
            "dim": int(data.shape[1]),
            "max_iter": args.max_iter,
            "source": str(args.images or args.local_features),
        },
        seed=args.seed,
    )
    print(f"wrote {args.kind} model ({args.k} x {data.shape[1]}) to {args.out}")
    return 0


def _cmd_train_pca(args) -> int:
    args.pca = None
    if (args.images is None) == (args.local_features is None):
        raise ConfigError("provide exactly one of --images / --local-features")
    sets = []
    if args.images is not None:
        for path in list_images(args.images):
            sets.append(
                dense_descriptors(
                    load_grayscale(path), step=args.sift_step, patch=args.sift_patch
                )
            )
    else:
        for path in sorted(Path(args.local_features).glob("*.lcdf")):
            sets.append(read_local_features(path)[1])
    model = fit_pca(sets, out_dim=args.out_dim)
    save_model(args.out, model)
    write_manifest(
        args.out.with_suffix(".manifest.json"),
        command="train-pca",
        parameters={
            "out_dim": args.out_dim,
            "in_dim": model.in_dim,
            "source": str(args.images or args.local_features),
        },
    )
    print(f"wrote projection {model.in_dim} -> {model.out_dim} to {args.out}")
    return 0


def _models_from_flags(args) -> Models:
    models = Models()
    if getattr(args, "vocab", None):
        models.vocab = load_model(args.vocab)
    if getattr(args, "gmm", None):
        models.gmm = load_model(args.gmm)
    if getattr(args, "pca", None):
        models.pca = load_model(args.pca)
    return models


def _cmd_encode(args) -> int:
    models = _models_from_flags(args)
    files = list_images(args.images)
    args.out.mkdir(parents=True, exist_ok=True)
    descriptors = compute_descriptor_set(
        args.desc, files, models, _gist_params(args),
        args.sift_step, args.sift_patch, jobs=args.jobs,
    )
    for desc in descriptors:
        write_feature_file(
            args.out / f"{desc.image_id}.lcdf", args.desc, desc.image_id, desc.values
        )
    write_manifest(
        args.out / "manifest.json",
        command="encode",
        parameters={
            "descriptor": args.desc,
            "images": str(args.images),
            "count": len(descriptors),
            "dim": descriptors[0].dim if descriptors else 0,
            "jobs": args.jobs,
        },
        seed=args.seed,
    )
    print(f"encoded {len(descriptors)} images -> {args.out}")
    return 0


def _cmd_import_features(args) -> int:
    files = sorted(Path(args.input).glob("*.lcdf"))
    if not files:
        raise ConfigError(f"no .lcdf files in {args.input}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    count = 0
    for path in files:
        layer, image_id, _ = read_feature_file(path)
        if args.out:
            (args.out / path.name).write_bytes(path.read_bytes())
        count += 1
    if args.out:
        write_manifest(
            args.out / "manifest.json",
            command="import-features",
            parameters={"input": str(args.input), "count": count},
        )
    print(f"validated {count} feature files")
    return 0


def _cmd_match(args) -> int:
    refs = load_descriptor_dir(args.ref_features)
    queries = load_descriptor_dir(args.query_features)
    db = DescriptorDatabase(refs)
    results = detect_loops(queries, db, threshold=args.threshold)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "matched_id", "distance", "accepted"])
        for match, accepted in results:
            writer.writerow(
                [match.query_id, match.matched_id, repr(match.distance), int(accepted)]
            )
    write_manifest(
        args.out.with_suffix(".manifest.json"),
        command="match",
        parameters={
            "query_features": str(args.query_features),
            "ref_features": str(args.ref_features),
            "threshold": args.threshold,
        },
    )
    accepted_n = sum(1 for _, a in results if a)
    print(f"matched {len(results)} queries, {accepted_n} accepted -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    cfg = load_experiment_config(args.config)
    report = run_protocol(cfg)
    for label in report.labels:
        for source in report.sources:
            print(f"vs{label} {source}: AP = {report.ap_table[label][source]:.5f}")
    print(f"report written to {cfg.output_dir}")
    return 0


def _cmd_bench(args) -> int:
    sources = [s.strip() for s in args.desc.split(",") if s.strip()]
    models = _models_from_flags(args)
    gist_params = _gist_params(args)
    images = [load_grayscale(p) for p in list_images(args.images)]

    extractors = {}
    for source in sources:
        def fn(img, _s=source):
            return extract_descriptor(
                _s, img, "", models, gist_params, args.sift_step, args.sift_patch
            )
        extractors[source] = fn
    report = benchmark_extraction(images, extractors, repetitions=args.repetitions)
    print(report.note)
    for name, seconds in report.mean_seconds.items():
        print(f"{name}: {seconds:.4f} s/image")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        lines = ["descriptor,mean_seconds_per_image"]
        lines += [f"{n},{s!r}" for n, s in report.mean_seconds.items()]
        args.out.write_text("\n".join(lines) + "\n", encoding="utf-8")
        write_manifest(
            args.out.with_suffix(".manifest.json"),
            command="bench",
            parameters={
                "descriptors": sources,
                "corpus_size": report.corpus_size,
                "repetitions": report.repetitions,
                "note": report.note,
            },
        )
    return 0


def _read_id_file(path: Path | None, count: int, prefix: str) -> list[str]:
    if path is None:
        return [f"{prefix}{i}" for i in range(count)]
    ids = [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if len(ids) != count:
        raise ConfigError(f"{path}: {len(ids)} ids for a matrix with {count} rows/cols")
    return ids


def _load_gt_matrix(path: Path) -> np.ndarray:
    suffix = path.suffix.lower()
    if suffix == ".mat":
        from scipy.io import loadmat

        mat = loadmat(path)
        arrays = [v for k, v in mat.items() if not k.startswith("__")]
        arrays = [np.asarray(a) for a in arrays if np.asarray(a).ndim == 2]
        if not arrays:
            raise ConfigError(f"{path}: no 2-D matrix found")
        return max(arrays, key=lambda a: a.size)
    if suffix == ".npy":
        return np.load(path)
    return np.loadtxt(path, delimiter="," if suffix == ".csv" else None)


def _cmd_convert_gt(args) -> int:
    matrix = np.asarray(_load_gt_matrix(args.matrix))
    if matrix.ndim != 2:
        raise ConfigError(f"{args.matrix}: expected a 2-D matrix, got {matrix.ndim}-D")
    query_ids = _read_id_file(args.query_ids, matrix.shape[0], "q")
    reference_ids = _read_id_file(args.reference_ids, matrix.shape[1], "r")
    rows, cols = np.nonzero(matrix)
    pairs = [(query_ids[i], reference_ids[j]) for i, j in zip(rows, cols)]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_ground_truth_csv(args.out, pairs)
    print(f"wrote {len(pairs)} pairs to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LoopCloseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
