"""Benchmark harness: randomisation cycles and raw crater throughput.

Numbers are reported, never asserted here; regression gates live in the
test suite.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import ForgeConfig
from .craters import TWO_PI, CraterSpec, draw_distortion, load_profiles, make_stamp
from .forge import STAGES, default_threads, randomize
from .rng import RngStream

# Stamps wider than this many cells are synthesised at a coarser per-stamp
# resolution (4 r / cap). Keeps a 10 m crater at 4 cm/px from costing 1e6 cells.
DEFAULT_MAX_STAMP_SIDE = 256


def _summary(values: list[float]) -> dict[str, float]:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "p95": float(np.percentile(arr, 95)),
            "min": float(arr.min()), "max": float(arr.max())}


def bench_randomize(config: ForgeConfig, cycles: int = 10, *, first_seed: int | None = None,
                    threads: int | None = None, warmup: bool = True) -> dict:
    """Run ``cycles`` randomisations with consecutive seeds and summarise
    per-stage wall times (mean, p95) in seconds."""
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    seed0 = config.master_seed if first_seed is None else first_seed
    if warmup:
        # first call pays JIT loading and profile parsing
        randomize(config, seed0, threads=threads)
    per_stage: dict[str, list[float]] = {k: [] for k in (*STAGES, "total")}
    counts = []
    for k in range(cycles):
        seed = (seed0 + k) % 2**64
        r = randomize(config, seed, threads=threads)
        for name in per_stage:
            per_stage[name].append(r.timings[name])
        counts.append({"seed": seed, "craters": len(r.craters), "instances": len(r.manifest)})
    return {
        "kind": "randomize",
        "cycles": cycles,
        "grid": [r.dem.width, r.dem.height],
        "resolution_m_per_px": r.dem.resolution,
        "threads": default_threads() if threads is None else threads,
        "stages": {name: _summary(v) for name, v in per_stage.items()},
        "runs": counts,
    }


def crater_bench_specs(count: int = 2000, radius_range: tuple[float, float] = (0.5, 10.0),
                       seed: int = 0, n_profiles: int = 16) -> list[CraterSpec]:
    gen = RngStream(seed, "bench/craters").generator()
    radii = gen.uniform(radius_range[0], radius_range[1], count)
    centers = gen.random((count, 2))
    rotations = np.minimum(TWO_PI * gen.random(count), math.nextafter(TWO_PI, 0.0))
    profiles = gen.integers(n_profiles, size=count)
    return [CraterSpec((float(c[0]), float(c[1])), float(r), float(rot), draw_distortion(gen), int(p))
            for c, r, rot, p in zip(centers, radii, rotations, profiles)]


def stamp_resolution(radius: float, resolution: float, max_side: int | None) -> float:
    """Per-stamp cell size under the stamp side cap."""
    if max_side is None:
        return resolution
    return max(resolution, 4.0 * radius / max_side)


def bench_craters(count: int = 2000, resolution: float = 0.04,
                  radius_range: tuple[float, float] = (0.5, 10.0), *,
                  max_side: int | None = DEFAULT_MAX_STAMP_SIDE, seed: int = 0,
                  threads: int | None = None) -> dict:
    """Synthesise ``count`` unique stamps and time it (stamp synthesis only)."""
    profiles = load_profiles()
    specs = crater_bench_specs(count, radius_range, seed, len(profiles))
    make_stamp(specs[0], profiles[0], 0.5)  # load the compiled kernel outside the timer

    def synth(spec: CraterSpec) -> int:
        res = stamp_resolution(spec.radius, resolution, max_side)
        return make_stamp(spec, profiles[spec.profile_index], res).dem.elevations.size

    threads = default_threads() if threads is None else threads
    t0 = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cells = sum(pool.map(synth, specs))
    else:
        cells = sum(map(synth, specs))
    wall = time.perf_counter() - t0
    return {
        "kind": "craters",
        "stamps": count,
        "resolution_m_per_px": resolution,
        "radius_range": list(radius_range),
        "max_stamp_side": max_side,
        "threads": threads,
        "cells": int(cells),
        "wall_s": wall,
        "stamps_per_s": count / wall if wall > 0 else math.inf,
    }


def format_report(report: dict) -> str:
    if report["kind"] == "craters":
        return (f"crater throughput: {report['stamps']} stamps, {report['cells']:,} cells "
                f"at {report['resolution_m_per_px']:g} m/px (stamp side cap {report['max_stamp_side']}), "
                f"{report['wall_s']:.3f} s, {report['stamps_per_s']:.0f} stamps/s, "
                f"{report['threads']} thread(s)")
    w, h = report["grid"]
    lines = [f"randomize: {report['cycles']} cycles on {w}x{h} @ {report['resolution_m_per_px']:g} m/px, "
             f"{report['threads']} thread(s)",
             f"  {'stage':<16}{'mean s':>10}{'p95 s':>10}"]
    for name, s in report["stages"].items():
        lines.append(f"  {name:<16}{s['mean']:>10.4f}{s['p95']:>10.4f}")
    return "\n".join(lines)
