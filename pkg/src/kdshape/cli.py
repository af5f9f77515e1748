"""Command line pipeline: synth, sample, sort, fit, optimize, train-gan, train-ppca,
generate, interpolate, evaluate.

Sub-seeds: per-shape randomness uses ``default_rng([seed, shape_index, tag])``;
GAN initialisation and training use ``[seed, tag]``. Every command writes a
``run.json`` next to its outputs holding the command, resolved config and seed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .basis import PcaBasis, ShapeMatrix, coefficients, fit_pca, singular_spectrum, spectrum_energy
from .errors import DataError, EmptyDataset, IoError, KdShapeError
from .evaluation import evaluate_models, report_csv, report_json
from .gan import (
    GanConfig,
    build_model,
    generate_coefficients,
    interpolation_codes,
    load_model,
    sample_z,
    save_model,
    train,
)
from .ordering import KINDS, SwapSchedule, optimize_ordering, sort_dataset
from .pointcloud import PointCloud, ShapeDataset, attr_slice, check_unit_normals, normalize_cloud, save_points
from .ppca import PpcaModel, fit_ppca, sample_ppca
from .sampling import SamplerConfig, load_mesh, sample_surface, save_obj
from .store import load_dataset, save_dataset, write_json
from .synth import (
    FAMILIES,
    TAG_SAMPLE,
    bimodal_coefficients,
    box_aspect_family,
    box_dims,
    box_mesh,
    two_cluster_chairs,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass
class PipelineConfig:
    n_points: int = 1000
    attr_mode: str = "xyz"
    ordering: str = "kd-alternating"
    basis_size: int = 100
    swaps_per_shape: int = 10_000
    outer_iterations: int = 1_000
    z_dim: int = 100
    hidden: int = 100
    n_hidden: int = 4
    disc_lr: float = 1e-4
    gen_lr: float = 0.0025
    disc_accuracy_gate: float = 0.8
    batch_size: int = 64
    epochs: int = 100
    seed: int = 0
    sampler_slack: float = 0.8
    sampler_relax: float = 0.95
    sampler_budget: int = 10

    def validate(self):
        if self.attr_mode not in ("xyz", "xyz+normal"):
            raise UsageError(f"attr_mode must be 'xyz' or 'xyz+normal', not {self.attr_mode!r}")
        if self.ordering not in KINDS:
            raise UsageError(f"ordering must be one of {KINDS}")
        if self.n_points < 4 or self.basis_size < 1:
            raise UsageError("n_points must be >= 4 and basis_size >= 1")
        return self

    def check_basis(self, dataset: ShapeDataset):
        dn = dataset.attr_dim * dataset.n_points
        if self.basis_size > dn:
            raise UsageError(f"basis_size {self.basis_size} exceeds D*N = {dn}")

    def gan_config(self) -> GanConfig:
        return GanConfig(z_dim=self.z_dim, hidden=self.hidden, n_hidden=self.n_hidden,
                         disc_lr=self.disc_lr, gen_lr=self.gen_lr,
                         disc_accuracy_gate=self.disc_accuracy_gate, batch_size=self.batch_size,
                         epochs=self.epochs, seed=self.seed)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(slack=self.sampler_slack, relax=self.sampler_relax, budget=self.sampler_budget)


class UsageError(KdShapeError):
    exit_code = EXIT_USAGE


def parse_config_text(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Flat ``key = value`` lines; '#' starts a comment."""
    cfg = dataclasses.replace(base or PipelineConfig())
    types = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":"
        if sep not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split(sep, 1))
        key = key.replace("-", "_")
        if key not in types:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _coerce(types[key], value, lineno))
    return cfg


def _coerce(kind, value, lineno=None):
    try:
        if kind in ("int", int):
            return int(float(value)) if "e" in value.lower() else int(value)
        if kind in ("float", float):
            return float(value)
    except ValueError:
        raise UsageError(f"config line {lineno}: bad value {value!r}") from None
    return value


def config_to_text(cfg: PipelineConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in dataclasses.asdict(cfg).items())


# ---------------------------------------------------------------------------
# helpers


def _out_dir(args) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    return out


def _record_run(out: Path, command: str, cfg: PipelineConfig, extra: dict | None = None):
    doc = {"command": command, "version": __version__, "seed": cfg.seed, "config": dataclasses.asdict(cfg)}
    if extra:
        doc.update(extra)
    write_json(out / "run.json", doc)


def _write_csv(path: Path, header, rows):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _fmt(x):
    return repr(float(x))


def _strip_normals(cloud: PointCloud) -> PointCloud:
    return PointCloud(cloud.xyz, ("position",))


def _sample_one(job):
    path, n_points, seed, index, sampler, keep_normals = job
    mesh = load_mesh(path)
    cloud = normalize_cloud(sample_surface(mesh, n_points, [seed, index, TAG_SAMPLE], sampler))
    return cloud if keep_normals else _strip_normals(cloud)


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args, cfg: PipelineConfig):
    out = _out_dir(args)
    family = args.family
    if args.n_shapes < 2:
        raise EmptyDataset(f"synthetic datasets need S >= 2, got {args.n_shapes}")
    extra = {"family": family, "n_shapes": args.n_shapes}
    if family == "bimodal-coeff":
        data, labels = bimodal_coefficients(args.n_shapes, cfg.seed, dim=args.dim, center=args.center,
                                            std=args.std, return_labels=True)
        _write_csv(out / "coefficients.csv", [f"c{k}" for k in range(data.shape[1])] + ["label"],
                   [[_fmt(v) for v in row] + [int(l)] for row, l in zip(data, labels)])
        extra.update(dim=args.dim, center=args.center, std=args.std)
    elif family == "box-aspect":
        modes = _parse_modes(args.modes)
        if args.meshes:
            rng_dims = box_dims(args.n_shapes, cfg.seed, modes, spread=args.spread)
            mesh_dir = out / "meshes"
            mesh_dir.mkdir(exist_ok=True)
            for s, dims in enumerate(rng_dims):
                save_obj(box_mesh(dims), mesh_dir / f"box_{s:05d}.obj")
        else:
            ds, labels = box_aspect_family(args.n_shapes, cfg.n_points, cfg.seed, modes=modes,
                                           spread=args.spread, return_labels=True)
            save_dataset(ds, out, ordering=None, meta={"labels": labels.tolist()})
        extra.update(modes=modes, spread=args.spread)
    else:
        ds, labels = two_cluster_chairs(args.n_shapes, cfg.n_points, cfg.seed, spread=args.spread,
                                        return_labels=True)
        save_dataset(ds, out, ordering=None, meta={"labels": labels.tolist()})
        extra.update(spread=args.spread)
    _record_run(out, "synth", cfg, extra)


def _parse_modes(text):
    modes = []
    for item in text.split(","):
        parts = [float(p) for p in item.split(":")]
        if len(parts) != 3:
            raise UsageError(f"mode {item!r} must look like a:b:c")
        modes.append(parts)
    return modes


def cmd_sample(args, cfg: PipelineConfig):
    src = Path(args.input)
    meshes = sorted(src.glob("*.obj")) if src.is_dir() else []
    if not meshes:
        raise EmptyDataset(f"{src}: no OBJ meshes found")
    out = _out_dir(args)
    keep = cfg.attr_mode == "xyz+normal"
    jobs = [(str(p), cfg.n_points, cfg.seed, k, cfg.sampler_config(), keep) for k, p in enumerate(meshes)]
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            clouds = list(pool.map(_sample_one, jobs))
    else:
        clouds = [_sample_one(j) for j in jobs]
    ds = ShapeDataset(clouds, [p.stem for p in meshes])
    save_dataset(ds, out, ordering=None)
    _record_run(out, "sample", cfg, {"input": [p.name for p in meshes]})


def _load_input(args):
    ds = load_dataset(args.input)
    for cloud in ds.clouds:
        check_unit_normals(cloud)
    return ds


def cmd_sort(args, cfg: PipelineConfig):
    ds = _load_input(args)
    out = _out_dir(args)
    save_dataset(sort_dataset(ds, cfg.ordering), out, ordering=cfg.ordering)
    _record_run(out, "sort", cfg)


def cmd_fit(args, cfg: PipelineConfig):
    ds = load_dataset(args.input)
    cfg.check_basis(ds)
    out = _out_dir(args)
    matrix = ShapeMatrix.from_dataset(ds)
    basis = fit_pca(matrix, cfg.basis_size)
    basis.save(out / "basis.kdsb")
    spectrum = singular_spectrum(matrix)[: args.spectrum_rows or None]
    energy = spectrum_energy(singular_spectrum(matrix))[: len(spectrum)]
    _write_csv(out / "spectrum.csv", ["index", "singular_value", "cumulative_energy"],
               [[k + 1, _fmt(s), _fmt(e)] for k, (s, e) in enumerate(zip(spectrum, energy))])
    errors = basis.reconstruction_error(matrix.data.T)
    _record_run(out, "fit", cfg, {"total_error": float(errors.sum()),
                                  "mean_error": float(errors.mean()),
                                  "basis_digest": basis.digest()})


def cmd_optimize(args, cfg: PipelineConfig):
    ds = load_dataset(args.input)
    cfg.check_basis(ds)
    out = _out_dir(args)
    schedule = SwapSchedule(cfg.swaps_per_shape, cfg.outer_iterations, cfg.seed)
    trace = []
    result = optimize_ordering(ds, cfg.basis_size, schedule, on_iteration=lambda it, e: trace.append((it, e)))
    save_dataset(result.dataset, out / "dataset", ordering="swap-optimized")
    result.basis.save(out / "basis.kdsb")
    rows = [[0, _fmt(result.initial_error)]] + [[it, _fmt(e)] for it, e in trace]
    _write_csv(out / "error_trace.csv", ["iteration", "mean_error"], rows)
    _record_run(out, "optimize", cfg, {"initial_error": result.initial_error,
                                       "final_error": float(result.error_trace[-1]),
                                       "basis_digest": result.basis.digest()})


def cmd_train_gan(args, cfg: PipelineConfig):
    ds = load_dataset(args.input)
    basis = PcaBasis.load(args.basis)
    if basis.n_points != ds.n_points or basis.attr_dim != ds.attr_dim:
        raise DataError("basis does not match the dataset's N and D")
    out = _out_dir(args)
    coeffs = coefficients(basis, ShapeMatrix.from_dataset(ds))
    gcfg = cfg.gan_config()
    model = build_model(basis.basis_size, gcfg, basis_digest=basis.digest())
    train(model, coeffs, gcfg)
    save_model(model, out / "model.kdsg")
    _write_csv(out / "history.csv", ["epoch", "d_objective", "g_loss", "disc_accuracy", "d_updates"],
               [[e, _fmt(d), _fmt(g), _fmt(a), u] for e, d, g, a, u in model.history.rows()])
    _record_run(out, "train-gan", cfg, {"basis_digest": basis.digest()})


def cmd_train_ppca(args, cfg: PipelineConfig):
    ds = load_dataset(args.input)
    cfg.check_basis(ds)
    out = _out_dir(args)
    model = fit_ppca(ShapeMatrix.from_dataset(ds), cfg.basis_size)
    model.save(out / "ppca.kdsp")
    _record_run(out, "train-ppca", cfg, {"sigma2": model.sigma2})


def _renormalize(cloud: PointCloud) -> PointCloud:
    if not cloud.has("normal"):
        return cloud
    pts = np.array(cloud.points)
    sl = attr_slice(cloud.attr_schema, "normal")
    length = np.linalg.norm(pts[:, sl], axis=1, keepdims=True)
    pts[:, sl] = np.divide(pts[:, sl], length, out=np.zeros_like(pts[:, sl]), where=length > 0)
    return PointCloud(pts, cloud.attr_schema)


def _write_clouds(out: Path, basis, vectors, prefix, fmt, renormalize):
    width = max(5, len(str(len(vectors))))
    for k, v in enumerate(vectors):
        cloud = basis.to_cloud(v)
        if renormalize:
            cloud = _renormalize(cloud)
        save_points(cloud, out / f"{prefix}_{k:0{width}d}.{fmt}", fmt)


def cmd_generate(args, cfg: PipelineConfig):
    basis = PcaBasis.load(args.basis)
    model = load_model(args.model, basis)
    out = _out_dir(args)
    z = sample_z(cfg.seed, args.count, model.z_dim)
    vectors = basis.reconstruct(generate_coefficients(model, z)) if args.count else []
    _write_clouds(out, basis, vectors, "shape", args.format, args.renormalize_normals)
    _write_csv(out / "codes.csv", [f"z{k}" for k in range(model.z_dim)], [[_fmt(v) for v in row] for row in z])
    _record_run(out, "generate", cfg, {"count": args.count})


def _read_code(path, z_dim):
    try:
        vals = [float(t) for t in Path(path).read_text(encoding="utf-8").replace(",", " ").split()]
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read code file {path}: {exc}") from exc
    if len(vals) != z_dim:
        raise DataError(f"{path}: expected {z_dim} values, got {len(vals)}")
    return np.array(vals)


def cmd_interpolate(args, cfg: PipelineConfig):
    basis = PcaBasis.load(args.basis)
    model = load_model(args.model, basis)
    if args.seeds:
        z1 = sample_z(args.seeds[0], 1, model.z_dim)[0]
        z2 = sample_z(args.seeds[1], 1, model.z_dim)[0]
    elif args.z1 and args.z2:
        z1, z2 = _read_code(args.z1, model.z_dim), _read_code(args.z2, model.z_dim)
    else:
        raise UsageError("interpolate needs --seeds S1 S2 or --z1 FILE --z2 FILE")
    out = _out_dir(args)
    z = interpolation_codes(z1, z2, args.steps)
    vectors = basis.reconstruct(generate_coefficients(model, z))
    _write_clouds(out, basis, vectors, "frame", args.format, args.renormalize_normals)
    _record_run(out, "interpolate", cfg, {"steps": args.steps,
                                          "seeds": list(args.seeds) if args.seeds else None})


def cmd_evaluate(args, cfg: PipelineConfig):
    ds = load_dataset(args.input)
    training = ShapeMatrix.from_dataset(ds).data.T
    generators = []
    for model_path, basis_path in args.gan or []:
        basis = PcaBasis.load(basis_path)
        model = load_model(model_path, basis)

        def gan_sampler(n, seed, model=model, basis=basis):
            return basis.reconstruct(generate_coefficients(model, sample_z(seed, n, model.z_dim)))

        generators.append((f"GAN({basis.basis_size}):{Path(model_path).parent.name or model_path}",
                           basis.basis_size, gan_sampler))
    for ppca_path in args.ppca or []:
        ppca = PpcaModel.load(ppca_path)

        def ppca_sampler(n, seed, ppca=ppca):
            return sample_ppca(ppca, n, seed)

        generators.append((f"PPCA({ppca.basis_size}):{Path(ppca_path).parent.name or ppca_path}",
                           ppca.basis_size, ppca_sampler))
    if not generators:
        raise UsageError("evaluate needs at least one --gan MODEL BASIS or --ppca FILE")
    out = _out_dir(args)
    rows = evaluate_models(training, generators, args.n_samples, cfg.seed)
    (out / "report.csv").write_text(report_csv(rows), encoding="utf-8")
    (out / "report.json").write_text(report_json(rows) + "\n", encoding="utf-8")
    _record_run(out, "evaluate", cfg)
    for r in rows:
        print(f"{r.model:40s} d={r.distance:.6f}  T->S={r.term_T_to_S:.6f}  S->T={r.term_S_to_T:.6f}")


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


OVERRIDES = {
    "n_points": int, "attr_mode": str, "ordering": str, "basis_size": int, "swaps_per_shape": int,
    "outer_iterations": int, "z_dim": int, "epochs": int, "batch_size": int, "disc_lr": float,
    "gen_lr": float, "disc_accuracy_gate": float,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--config", default=None, help="flat key = value config file")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default=None, help="output directory")
    for name, kind in OVERRIDES.items():
        common.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=None)

    parser = _Parser(prog="kdshape", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--n-shapes", type=int, default=200)
    p.add_argument("--modes", default="1:1:1,1:4:1")
    p.add_argument("--spread", type=float, default=0.05)
    p.add_argument("--meshes", action="store_true", help="box-aspect: emit OBJ meshes instead of clouds")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--center", type=float, default=3.0)
    p.add_argument("--std", type=float, default=0.5)

    p = sub.add_parser("sample", parents=[common], help="blue-noise sample a directory of OBJ meshes")
    p.add_argument("--input", required=True)

    for name, helptext in (("sort", "spatially order a dataset"), ("fit", "fit a PCA shape basis"),
                           ("optimize", "swap-optimize point orderings"),
                           ("train-ppca", "fit the PPCA baseline")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--input", required=True)
        if name == "fit":
            p.add_argument("--spectrum-rows", type=int, default=0, help="cap on spectrum.csv rows (0 = all)")

    p = sub.add_parser("train-gan", parents=[common], help="train the coefficient GAN")
    p.add_argument("--input", required=True)
    p.add_argument("--basis", required=True)

    for name in ("generate", "interpolate"):
        p = sub.add_parser(name, parents=[common], help=f"{name} shapes from a trained GAN")
        p.add_argument("--model", required=True)
        p.add_argument("--basis", required=True)
        p.add_argument("--format", choices=("ply", "xyz"), default="ply")
        p.add_argument("--renormalize-normals", action="store_true")
        if name == "generate":
            p.add_argument("--count", type=int, default=16)
        else:
            p.add_argument("--steps", type=int, default=8)
            p.add_argument("--seeds", type=int, nargs=2, default=None)
            p.add_argument("--z1", default=None)
            p.add_argument("--z2", default=None)

    p = sub.add_parser("evaluate", parents=[common], help="set-distance report against training shapes")
    p.add_argument("--input", required=True, help="training dataset directory")
    p.add_argument("--gan", nargs=2, action="append", metavar=("MODEL", "BASIS"))
    p.add_argument("--ppca", action="append")
    p.add_argument("--n-samples", type=int, default=500)
    return parser


COMMANDS = {
    "synth": cmd_synth, "sample": cmd_sample, "sort": cmd_sort, "fit": cmd_fit, "optimize": cmd_optimize,
    "train-gan": cmd_train_gan, "train-ppca": cmd_train_ppca, "generate": cmd_generate,
    "interpolate": cmd_interpolate, "evaluate": cmd_evaluate,
}


def resolve_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot read config {args.config}: {exc}") from exc
        cfg = parse_config_text(text, cfg)
    for name in OVERRIDES:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.out:
        parser.error(f"{args.command}: --out is required")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg)
    except KdShapeError as exc:
        print(f"kdshape {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"kdshape {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
