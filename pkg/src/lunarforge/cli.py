"""``lunarforge`` command line.

Exit codes: 0 success, 2 configuration error (including bad arguments),
3 pipeline error, 4 file or format error. Artifact names embed the seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .annotate import hillshade, rasterize_instances
from .artifacts import (
    save_grayscale_png,
    save_instance_raster,
    write_annotations,
    write_craters,
    write_manifest,
)
from .bench import DEFAULT_MAX_STAMP_SIDE, bench_craters, bench_randomize, format_report
from .config import ForgeConfig, config_schema, load_config
from .dem import PNG16, RAW_F32, save_dem
from .errors import ConfigError, FormatError, LunarForgeError, PipelineError
from .forge import StageError, forge_terrain, scatter_assets
from .mesh import collision_mesh, dem_to_mesh, export_mesh, triangulate

logger = logging.getLogger("lunarforge")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PIPELINE = 3
EXIT_IO = 4

HEIGHTMAP_SUFFIX = {RAW_F32: "f32", PNG16: "png"}


def seed_arg(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lunarforge", description="Seeded procedural lunar terrain.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", required=True, type=Path, help="forge config (YAML or JSON)")
    common.add_argument("-o", "--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("-s", "--seed", type=seed_arg, help="override the config's master_seed")

    p = sub.add_parser("generate", parents=[common], help="heightmap + crater list")
    p.add_argument("--format", choices=(RAW_F32, PNG16), default=RAW_F32)

    sub.add_parser("scatter", parents=[common], help="asset placement manifest")

    p = sub.add_parser("mesh", parents=[common], help="visual + collision meshes")
    p.add_argument("--format", choices=("obj", "ply"), default="obj")
    p.add_argument("--collision-factor", type=int, help="override mesh.collision_factor")

    sub.add_parser("annotate", parents=[common], help="instance raster + annotation records")

    p = sub.add_parser("preview", parents=[common], help="hillshade PNG")
    p.add_argument("--sun-azimuth", type=float, help="degrees clockwise from north")
    p.add_argument("--sun-elevation", type=float, help="degrees above the horizon")

    p = sub.add_parser("bench", help="timing report")
    p.add_argument("-c", "--config", type=Path, help="forge config for randomize cycles")
    p.add_argument("-o", "--out", type=Path, help="directory for the JSON report")
    p.add_argument("-s", "--seed", type=seed_arg, help="first seed (default: config master_seed)")
    p.add_argument("--cycles", type=int, default=10)
    p.add_argument("--craters", type=int, default=0, metavar="N",
                   help="also time N crater stamps (radii 0.5-10 m at 4 cm/px)")
    p.add_argument("--max-stamp-side", type=int, default=DEFAULT_MAX_STAMP_SIDE)

    sub.add_parser("schema", help="print the config JSON schema")
    return parser


def _config(args) -> ForgeConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _outdir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _footprints(config: ForgeConfig) -> dict[str, float]:
    out: dict[str, float] = {}
    for rule in config.assets:
        if out.setdefault(rule.asset_id, rule.footprint) != rule.footprint:
            raise ConfigError(f"asset {rule.asset_id!r} has conflicting footprints")
    return out


def cmd_generate(args) -> list[Path]:
    config = _config(args)
    out = _outdir(args.out)
    dem, craters = forge_terrain(config)
    seed = config.master_seed
    hm = out / f"terrain_{seed}.{HEIGHTMAP_SUFFIX[args.format]}"
    save_dem(dem, hm, args.format)
    cr = out / f"craters_{seed}.json"
    write_craters(cr, craters, seed)
    return [hm, cr]


def cmd_scatter(args) -> list[Path]:
    config = _config(args)
    out = _outdir(args.out)
    dem, _ = forge_terrain(config)
    path = out / f"manifest_{config.master_seed}.json"
    write_manifest(path, scatter_assets(config, dem))
    return [path]


def cmd_mesh(args) -> list[Path]:
    config = _config(args)
    out = _outdir(args.out)
    dem, _ = forge_terrain(config)
    seed = config.master_seed
    visual = dem_to_mesh(dem, config.mesh.uv_scale)
    if args.format == "ply":
        visual = triangulate(visual)
    factor = args.collision_factor or config.mesh.collision_factor
    collision = collision_mesh(dem, factor, config.mesh.uv_scale)
    paths = [out / f"terrain_{seed}.{args.format}", out / f"collision_{seed}.{args.format}"]
    export_mesh(visual, paths[0], args.format)
    export_mesh(collision, paths[1], args.format)
    return paths


def cmd_annotate(args) -> list[Path]:
    config = _config(args)
    out = _outdir(args.out)
    dem, _ = forge_terrain(config)
    manifest = scatter_assets(config, dem)
    raster, annotations = rasterize_instances(dem, manifest, _footprints(config))
    seed = config.master_seed
    paths = [out / f"instances_{seed}.u32", out / f"annotations_{seed}.json"]
    save_instance_raster(raster, paths[0])
    write_annotations(paths[1], annotations, raster, seed)
    return paths


def cmd_preview(args) -> list[Path]:
    config = _config(args)
    out = _outdir(args.out)
    dem, _ = forge_terrain(config)
    az = config.preview.sun_azimuth_deg if args.sun_azimuth is None else args.sun_azimuth
    el = config.preview.sun_elevation_deg if args.sun_elevation is None else args.sun_elevation
    if not 0.0 < el <= 90.0:
        raise ConfigError("sun elevation must be in (0, 90] degrees")
    path = out / f"hillshade_{config.master_seed}.png"
    save_grayscale_png(hillshade(dem, math.radians(az), math.radians(el)), path)
    return [path]


def cmd_bench(args) -> list[Path]:
    if args.config is None and not args.craters:
        raise ConfigError("bench needs --config and/or --craters N")
    if args.cycles < 1:
        raise ConfigError("--cycles must be >= 1")
    reports = []
    if args.config is not None:
        config = load_config(args.config)
        reports.append(bench_randomize(config, args.cycles, first_seed=args.seed))
    if args.craters:
        reports.append(bench_craters(args.craters, max_side=args.max_stamp_side or None))
    for rep in reports:
        print(format_report(rep))
    if args.out is None:
        return []
    tag = args.seed if args.seed is not None else (config.master_seed if args.config else 0)
    path = _outdir(args.out) / f"bench_{tag}.json"
    try:
        path.write_text(json.dumps({"reports": reports}, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc
    return [path]


COMMANDS = {
    "generate": cmd_generate,
    "scatter": cmd_scatter,
    "mesh": cmd_mesh,
    "annotate": cmd_annotate,
    "preview": cmd_preview,
    "bench": cmd_bench,
}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return exit_code(exc.cause)
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (FormatError, OSError)):
        return EXIT_IO
    if isinstance(exc, PipelineError):
        return EXIT_PIPELINE
    return EXIT_PIPELINE


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "schema":
        print(json.dumps(config_schema(), indent=1, sort_keys=True))
        return EXIT_OK
    try:
        for path in COMMANDS[args.command](args):
            print(path)
    except (LunarForgeError, OSError) as exc:
        print(f"lunarforge {args.command}: error: {exc}", file=sys.stderr)
        return exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
