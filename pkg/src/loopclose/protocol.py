"""End-to-end experiment runs: encode or load descriptor sets, match every
query against the reference map, sweep thresholds, and emit the report
(AP table, per-curve CSVs, SVG plots, and a reproducibility manifest)."""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import __version__
from ._backend import backend_name
from .codebook import GmmModel, Vocabulary
from .encoders import Descriptor, encode_bovw, encode_fv, encode_vlad
from .errors import ConfigError
from .evaluation import GroundTruth, PrCurve, load_ground_truth_csv, pr_curve
from .feature_io import read_feature_file
from .gist import GaborBank, GistParams, build_gabor_bank, compute_gist
from .imaging import GrayImage, load_grayscale
from .local_features import PcaModel, apply_pca, dense_descriptors
from .matching import DescriptorDatabase, nearest_neighbor
from .model_io import load_model

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")
COMPUTED_SOURCES = ("gist", "bovw", "fv", "vlad")

_CONFIG_KEYS = {
    "output_dir",
    "descriptors",
    "reference_images",
    "ground_truth",
    "vocab_model",
    "gmm_model",
    "pca_model",
    "seed",
    "exclusion_radius",
    "jobs",
    "gist_scales",
    "gist_orientations",
    "gist_grid",
    "gist_size",
    "sift_step",
    "sift_patch",
}
_CONFIG_PREFIXES = ("query_images", "features.", "ground_truth.")


@dataclass
class ExperimentConfig:
    """Parsed experiment description (see :func:`load_experiment_config`)."""

    output_dir: Path
    descriptors: tuple[str, ...]
    reference_images: Path | None = None
    query_images: dict[str, Path] = field(default_factory=dict)
    # source -> {"reference": dir, "query.<label>": dir}
    feature_dirs: dict[str, dict[str, Path]] = field(default_factory=dict)
    ground_truth: dict[str, Path] = field(default_factory=dict)  # label or "*"
    vocab_model: Path | None = None
    gmm_model: Path | None = None
    pca_model: Path | None = None
    seed: int = 0
    exclusion_radius: int = 0
    jobs: int = 1
    gist_params: GistParams = field(default_factory=GistParams)
    sift_step: int = 8
    sift_patch: int = 16


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """Parse a plain ``key = value`` experiment file.

    Recognized keys: output_dir, descriptors (comma list), reference_images,
    query_images[.<label>], features.<source>.reference,
    features.<source>.query[.<label>], ground_truth[.<label>], vocab_model,
    gmm_model, pca_model, seed, exclusion_radius, jobs, gist_scales,
    gist_orientations, gist_grid, gist_size, sift_step, sift_patch.
    Lines starting with ``#`` are comments.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    raw: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if key in raw:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        if key not in _CONFIG_KEYS and not key.startswith(_CONFIG_PREFIXES):
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        raw[key] = value

    def take_int(key: str, default: int) -> int:
        if key not in raw:
            return default
        try:
            return int(raw.pop(key))
        except ValueError:
            raise ConfigError(f"{path}: {key} must be an integer") from None

    if "descriptors" not in raw:
        raise ConfigError(f"{path}: 'descriptors' is required")
    if "output_dir" not in raw:
        raise ConfigError(f"{path}: 'output_dir' is required")
    base = path.parent

    def as_path(value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else base / p

    cfg = ExperimentConfig(
        output_dir=as_path(raw.pop("output_dir")),
        descriptors=tuple(
            s.strip() for s in raw.pop("descriptors").split(",") if s.strip()
        ),
        seed=take_int("seed", 0),
        exclusion_radius=take_int("exclusion_radius", 0),
        jobs=take_int("jobs", 1),
        gist_params=GistParams(
            scales=take_int("gist_scales", 4),
            orientations_per_scale=take_int("gist_orientations", 8),
            grid=take_int("gist_grid", 4),
            canonical_size=take_int("gist_size", 256),
        ),
        sift_step=take_int("sift_step", 8),
        sift_patch=take_int("sift_patch", 16),
    )
    if "reference_images" in raw:
        cfg.reference_images = as_path(raw.pop("reference_images"))
    for name in ("vocab_model", "gmm_model", "pca_model"):
        if name in raw:
            setattr(cfg, name, as_path(raw.pop(name)))
    for key in list(raw):
        if key == "query_images":
            cfg.query_images["query"] = as_path(raw.pop(key))
        elif key.startswith("query_images."):
            cfg.query_images[key.split(".", 1)[1]] = as_path(raw.pop(key))
        elif key == "ground_truth":
            cfg.ground_truth["*"] = as_path(raw.pop(key))
        elif key.startswith("ground_truth."):
            cfg.ground_truth[key.split(".", 1)[1]] = as_path(raw.pop(key))
        elif key.startswith("features."):
            parts = key.split(".")
            if len(parts) == 3 and parts[2] == "reference":
                slot = "reference"
            elif len(parts) == 3 and parts[2] == "query":
                slot = "query.query"
            elif len(parts) == 4 and parts[2] == "query":
                slot = f"query.{parts[3]}"
            else:
                raise ConfigError(f"{path}: malformed key {key!r}")
            cfg.feature_dirs.setdefault(parts[1], {})[slot] = as_path(raw.pop(key))
    if raw:
        raise ConfigError(f"{path}: unhandled keys {sorted(raw)}")
    if not cfg.query_images and not any(
        slot.startswith("query.") for d in cfg.feature_dirs.values() for slot in d
    ):
        raise ConfigError(f"{path}: no query set configured")
    if not cfg.ground_truth:
        raise ConfigError(f"{path}: no ground truth configured")
    return cfg


@dataclass
class Models:
    vocab: Vocabulary | None = None
    gmm: GmmModel | None = None
    pca: PcaModel | None = None


def _load_models(cfg: ExperimentConfig) -> Models:
    models = Models()
    need_vocab = "bovw" in cfg.descriptors
    need_gmm = "fv" in cfg.descriptors or "vlad" in cfg.descriptors
    if need_vocab:
        if cfg.vocab_model is None:
            raise ConfigError("'bovw' requires vocab_model")
        model = load_model(cfg.vocab_model)
        if not isinstance(model, Vocabulary):
            raise ConfigError(f"{cfg.vocab_model} is not a vocabulary model")
        models.vocab = model
    if need_gmm:
        if cfg.gmm_model is None:
            raise ConfigError("'fv'/'vlad' require gmm_model")
        model = load_model(cfg.gmm_model)
        if not isinstance(model, GmmModel):
            raise ConfigError(f"{cfg.gmm_model} is not a mixture model")
        models.gmm = model
    if cfg.pca_model is not None:
        model = load_model(cfg.pca_model)
        if not isinstance(model, PcaModel):
            raise ConfigError(f"{cfg.pca_model} is not a projection model")
        models.pca = model
    return models


def list_images(directory: str | Path) -> list[Path]:
    """Image files in a directory, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"no such image directory: {directory}")
    files = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
    )
    if not files:
        raise ConfigError(f"no images in {directory}")
    return files


_BANK_CACHE: dict[GistParams, GaborBank] = {}


def _bank_for(params: GistParams) -> GaborBank:
    bank = _BANK_CACHE.get(params)
    if bank is None:
        bank = _BANK_CACHE[params] = build_gabor_bank(params)
    return bank


def extract_descriptor(
    source: str,
    img: GrayImage,
    image_id: str,
    models: Models,
    gist_params: GistParams,
    sift_step: int,
    sift_patch: int,
) -> Descriptor:
    """Compute one whole-image descriptor of a built-in source kind."""
    if source == "gist":
        return compute_gist(img, _bank_for(gist_params), gist_params, image_id=image_id)
    features = dense_descriptors(img, step=sift_step, patch=sift_patch)
    if source == "bovw":
        if models.vocab is None:
            raise ConfigError("'bovw' requires a vocabulary model")
        return encode_bovw(features, models.vocab, image_id=image_id)
    if models.pca is not None:
        features = apply_pca(models.pca, features)
    if models.gmm is None:
        raise ConfigError(f"{source!r} requires a mixture model")
    if source == "fv":
        return encode_fv(features, models.gmm, image_id=image_id)
    if source == "vlad":
        return encode_vlad(features, models.gmm, image_id=image_id)
    raise ConfigError(f"unknown computed descriptor source {source!r}")


def _encode_job(args) -> Descriptor:
    path, source, models, gist_params, step, patch = args
    img = load_grayscale(path)
    return extract_descriptor(
        source, img, path.stem, models, gist_params, step, patch
    )


def compute_descriptor_set(
    source: str,
    image_files: Sequence[Path],
    models: Models,
    gist_params: GistParams,
    sift_step: int,
    sift_patch: int,
    jobs: int = 1,
) -> list[Descriptor]:
    """Descriptors for a list of image files, in input order."""
    tasks = [
        (Path(p), source, models, gist_params, sift_step, sift_patch)
        for p in image_files
    ]
    if jobs <= 1 or len(tasks) < 2:
        return [_encode_job(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_encode_job, tasks, chunksize=4))


def load_descriptor_dir(directory: str | Path) -> list[Descriptor]:
    """Read every ``*.lcdf`` file in a directory, sorted by file name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"no such feature directory: {directory}")
    files = sorted(directory.glob("*.lcdf"))
    if not files:
        raise ConfigError(f"no .lcdf files in {directory}")
    return [read_feature_file(p)[2] for p in files]


@dataclass
class ProtocolReport:
    """Curves and the AP table of one protocol run."""

    curves: dict[str, dict[str, PrCurve]]  # label -> source -> curve
    ap_table: dict[str, dict[str, float]]  # label -> source -> ap
    labels: tuple[str, ...]
    sources: tuple[str, ...]


def _query_labels(cfg: ExperimentConfig) -> list[str]:
    labels = set(cfg.query_images)
    for dirs in cfg.feature_dirs.values():
        labels.update(s.split(".", 1)[1] for s in dirs if s.startswith("query."))
    return sorted(labels)


def _gt_path(cfg: ExperimentConfig, label: str) -> Path:
    if label in cfg.ground_truth:
        return cfg.ground_truth[label]
    if "*" in cfg.ground_truth:
        return cfg.ground_truth["*"]
    raise ConfigError(f"no ground truth for query set {label!r}")


def _exclusion_sets(
    cfg: ExperimentConfig,
    queries: Sequence[Descriptor],
    db: DescriptorDatabase,
) -> list[set[str]] | None:
    if cfg.exclusion_radius <= 0:
        return None
    radius = cfg.exclusion_radius
    out = []
    for q in queries:
        pos = db.position(q.image_id)
        if pos is None:
            out.append(set())
        else:
            lo = max(0, pos - radius)
            hi = min(len(db), pos + radius + 1)
            out.append(set(db.ids[lo:hi]))
    return out


def run_protocol(cfg: ExperimentConfig) -> ProtocolReport:
    """Run every configured (query set, descriptor source) experiment.

    Reference and query descriptor sets are computed from images or loaded
    from feature directories, each query is matched to its exact nearest
    map entry, and the threshold sweep produces one curve per combination.
    Outputs land in ``cfg.output_dir``: ``pr_<label>_<source>.csv`` and
    ``.svg`` per curve, ``ap_table.csv``, and ``manifest.json``.
    """
    models = _load_models(cfg)
    labels = _query_labels(cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)

    ref_images = (
        list_images(cfg.reference_images) if cfg.reference_images is not None else None
    )
    query_images = {lab: list_images(d) for lab, d in cfg.query_images.items()}

    curves: dict[str, dict[str, PrCurve]] = {lab: {} for lab in labels}
    for source in cfg.descriptors:
        imported = source in cfg.feature_dirs
        if imported:
            dirs = cfg.feature_dirs[source]
            if "reference" not in dirs:
                raise ConfigError(f"features.{source}.reference is required")
            refs = load_descriptor_dir(dirs["reference"])
        else:
            if source not in COMPUTED_SOURCES:
                raise ConfigError(
                    f"source {source!r} has no feature directories and is not "
                    f"one of {COMPUTED_SOURCES}"
                )
            if ref_images is None:
                raise ConfigError("reference_images is required for computed sources")
            refs = compute_descriptor_set(
                source, ref_images, models, cfg.gist_params,
                cfg.sift_step, cfg.sift_patch, cfg.jobs,
            )
        db = DescriptorDatabase(refs)

        for label in labels:
            if imported:
                slot = f"query.{label}"
                if slot not in cfg.feature_dirs[source]:
                    raise ConfigError(f"features.{source}.{slot} is required")
                queries = load_descriptor_dir(cfg.feature_dirs[source][slot])
            else:
                if label not in query_images:
                    raise ConfigError(f"query_images.{label} is required")
                queries = compute_descriptor_set(
                    source, query_images[label], models, cfg.gist_params,
                    cfg.sift_step, cfg.sift_patch, cfg.jobs,
                )
            exclude = _exclusion_sets(cfg, queries, db)
            matches = [
                nearest_neighbor(q, db, exclude=exclude[i] if exclude else ())
                for i, q in enumerate(queries)
            ]
            gt = load_ground_truth_csv(
                _gt_path(cfg, label),
                query_ids=[q.image_id for q in queries],
                reference_ids=db.ids,
            )
            curve = pr_curve(matches, gt)
            curves[label][source] = curve
            _write_curve_csv(cfg.output_dir / f"pr_vs{label}_{source}.csv", curve)
            _write_curve_svg(
                cfg.output_dir / f"pr_vs{label}_{source}.svg",
                curve,
                title=f"vs{label} / {source}",
            )

    ap_table = {
        lab: {src: curves[lab][src].ap for src in cfg.descriptors} for lab in labels
    }
    _write_ap_table(cfg.output_dir / "ap_table.csv", ap_table, cfg.descriptors)
    write_manifest(
        cfg.output_dir / "manifest.json",
        command="eval",
        parameters={
            "descriptors": list(cfg.descriptors),
            "query_sets": labels,
            "exclusion_radius": cfg.exclusion_radius,
            "average_precision_rule": (
                "mean over distinct recall levels > 0 of the maximum "
                "precision at each level"
            ),
            "gist": {
                "scales": cfg.gist_params.scales,
                "orientations_per_scale": cfg.gist_params.orientations_per_scale,
                "grid": cfg.gist_params.grid,
                "canonical_size": cfg.gist_params.canonical_size,
            },
            "sift_step": cfg.sift_step,
            "sift_patch": cfg.sift_patch,
        },
        seed=cfg.seed,
    )
    return ProtocolReport(
        curves=curves,
        ap_table=ap_table,
        labels=tuple(labels),
        sources=tuple(cfg.descriptors),
    )


def _write_curve_csv(path: Path, curve: PrCurve) -> None:
    lines = ["threshold,precision,recall"]
    for t, p, r in curve.points:
        lines.append(f"{t!r},{p!r},{r!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_curve_svg(path: Path, curve: PrCurve, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg", force=False)
    matplotlib.rcParams["svg.hashsalt"] = "loopclose"  # deterministic ids
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    recalls = [r for _, _, r in curve.points]
    precisions = [p for _, p, _ in curve.points]
    ax.plot(recalls, precisions, marker=".", linewidth=1.2)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0.0, 1.02)
    ax.set_ylim(0.0, 1.02)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _write_ap_table(
    path: Path, ap_table: Mapping[str, Mapping[str, float]], sources: Sequence[str]
) -> None:
    lines = ["experiment," + ",".join(sources)]
    for label in sorted(ap_table):
        row = [f"vs{label}"] + [repr(ap_table[label][s]) for s in sources]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_manifest(
    path: str | Path,
    command: str,
    parameters: Mapping,
    seed: int | None = None,
) -> None:
    """Record everything needed to re-run a command identically."""
    manifest = {
        "command": command,
        "parameters": dict(parameters),
        "seed": seed,
        "versions": _versions(),
        "kernel_backend": backend_name(),
    }
    Path(path).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _versions() -> dict[str, str]:
    versions = {"loopclose": __version__, "numpy": np.__version__}
    try:
        import numba

        versions["numba"] = numba.__version__
    except ImportError:
        pass
    return versions


@dataclass
class BenchmarkReport:
    """Mean extraction seconds per image for each descriptor source."""

    mean_seconds: dict[str, float]
    corpus_size: int
    repetitions: int
    note: str


def benchmark_extraction(
    images: Sequence[GrayImage],
    extractors: Mapping[str, Callable[[GrayImage], Descriptor]],
    repetitions: int = 1,
) -> BenchmarkReport:
    """Time descriptor extraction only.

    Images arrive pre-decoded and extractors carry pre-loaded models, so
    neither decoding nor model loading is inside the timed region. Each
    extractor is warmed once (untimed) to exclude one-off compilation.
    """
    if not images:
        raise ConfigError("benchmark needs at least one image")
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    means = {}
    for name, fn in extractors.items():
        for img in images:  # untimed warm-up pass: JIT, allocator, caches
            fn(img)
        total = 0.0
        for _ in range(repetitions):
            for img in images:
                start = time.perf_counter()
                fn(img)
                total += time.perf_counter() - start
        means[name] = total / (repetitions * len(images))
    return BenchmarkReport(
        mean_seconds=means,
        corpus_size=len(images),
        repetitions=repetitions,
        note=(
            f"mean wall-clock seconds per image over {len(images)} images x "
            f"{repetitions} repetitions; image decode and model loading excluded"
        ),
    )
