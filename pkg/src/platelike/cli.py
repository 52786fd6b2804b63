"""Batch driver: parse TOML experiment configs, run minimize/verify pipelines,
persist artifacts (manifest, binary field, CSV tables, SVG plots)."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .energy import EnergyModel, EnergyReport, PeriodicField, set_threads
from .errors import ConfigError, PreconditionError
from .geometry import Direction, Strip, build_grid
from .media import CoeffField, KernelSpec, PotentialSpec, kernel_truncate
from .minimize import MinimizeOptions, default_seeds, minimal_minimizer
from .verify import (DivergenceReport, SweepResult, birkhoff_check,
                     divergence_probe, ef_relation_check, energy_growth_profile,
                     halfspace_check, integer_shifts, interface_center,
                     interface_width, local_minimality_test, oscillation_decay,
                     rational_sweep, smooth_bump)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_PRECONDITION = 3


@dataclass
class ExperimentConfig:
    """Validated experiment description (one TOML file)."""

    kernel: KernelSpec
    potential: PotentialSpec
    directions: list
    strip_A: float
    strip_M: float
    normalized_width: Optional[float]
    h: float
    L: float
    m: tuple
    r_cut: float
    opts: MinimizeOptions
    verify: dict
    growth: dict
    diverge: dict
    out_dir: str
    seed: int
    raw: dict = dc_field(default_factory=dict)

    def direction(self) -> Direction:
        return Direction.from_vector(self.directions[0])

    def effective_M(self, direction: Direction) -> float:
        if self.normalized_width is not None:
            return self.normalized_width * direction.norm
        return self.strip_M

    def strip_for(self, direction: Direction) -> Strip:
        return Strip(self.strip_A, self.strip_A + self.effective_M(direction),
                     direction)


def _build_coeff(data) -> CoeffField:
    if data is None:
        return CoeffField("constant", {"value": 1.0})
    return CoeffField(data["name"], dict(data.get("params", {})))


def _build_kernel(data: dict) -> KernelSpec:
    variant = data.get("variant", "homogeneous")
    s = float(data["s"])
    if variant == "homogeneous":
        k = KernelSpec.homogeneous(s)
    elif variant == "heterogeneous":
        k = KernelSpec.heterogeneous(
            s, float(data.get("lambda", 1.0)), float(data.get("Lambda", 1.0)),
            _build_coeff(data.get("coeff")), data.get("coeff_arg", "sum"))
    elif variant == "anisotropic":
        k = KernelSpec.anisotropic(s, np.asarray(data["matrix"], dtype=float))
    elif variant == "slow_tail":
        k = KernelSpec.slow_tail(s, float(data["beta"]),
                                 float(data.get("gamma_tail", 1.0)))
    else:
        raise ConfigError(f"unknown kernel variant {variant!r}")
    if data.get("R_trunc") is not None:
        k = kernel_truncate(k, float(data["R_trunc"]))
    return k


def _build_potential(data: dict) -> PotentialSpec:
    variant = data.get("variant", "quartic")
    coeff = _build_coeff(data.get("coeff"))
    wstar = data.get("Wstar")
    if variant == "quartic":
        return PotentialSpec.quartic(d=float(data.get("d", 2.0)), coeff=coeff,
                                     Wstar=wstar)
    if variant == "cosine":
        return PotentialSpec.cosine(coeff=coeff, Wstar=wstar)
    raise ConfigError(f"unknown potential variant {variant!r}")


def load_config(path: str, allow_narrow: bool = False) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)

    kernel = _build_kernel(raw.get("kernel", {"s": 0.75}))
    potential = _build_potential(raw.get("potential", {}))

    dsec = raw.get("direction", {})
    if "omegas" in dsec:
        directions = [tuple(int(c) for c in om) for om in dsec["omegas"]]
    else:
        directions = [tuple(int(c) for c in dsec.get("omega", (0, 1)))]

    ssec = raw.get("strip", {})
    A = float(ssec.get("A", 0.0))
    if "B" in ssec:
        M = float(ssec["B"]) - A
    else:
        M = float(ssec.get("M", 12.0))
    nw = ssec.get("normalized_width")
    nw = float(nw) if nw is not None else None
    gsec = raw.get("grid", {})
    h = float(gsec.get("h", 0.25))
    L = float(gsec.get("L", 2.0))
    m = tuple(int(c) for c in gsec.get("m", ()))

    osec = raw.get("optimizer", {})
    opts = MinimizeOptions(
        tol=float(osec.get("tol", 1e-8)),
        max_iters=int(osec.get("max_iters", 3000)),
        eps_min_rel=float(osec.get("eps_min", 1e-6)),
    )

    cfg = ExperimentConfig(
        kernel=kernel,
        potential=potential,
        directions=directions,
        strip_A=A,
        strip_M=M,
        normalized_width=nw,
        h=h,
        L=L,
        m=m,
        r_cut=float(raw.get("energy", {}).get("r_cut", 8.0)),
        opts=opts,
        verify=dict(raw.get("verify", {})),
        growth=dict(raw.get("growth", {})),
        diverge=dict(raw.get("diverge", {})),
        out_dir=raw.get("output", {}).get("dir", "out"),
        seed=int(raw.get("seed", 0)),
        raw=raw,
    )

    # precondition checks shared by every subcommand
    for om in cfg.directions:
        direction = Direction.from_vector(om)
        m_eff = cfg.effective_M(direction)
        if not allow_narrow and m_eff <= 10.0 * direction.norm:
            raise PreconditionError(
                f"strip width M={m_eff} must exceed 10|omega|="
                f"{10.0 * direction.norm:.4f} for omega={om}"
                " (pass --allow-narrow-strip to override)")
    mprime = round(1.0 / cfg.h)
    if mprime < 1 or abs(cfg.h * mprime - 1.0) > 1e-12:
        raise PreconditionError(
            f"grid spacing h={cfg.h} violates the h = 1/m constraint"
            " (m a positive integer)")
    if cfg.L < 2.0:
        raise PreconditionError(f"window buffer L={cfg.L} violates L >= 2")
    return cfg


# -- artifact writers ----------------------------------------------------------


def _write_field(path: Path, field: PeriodicField) -> None:
    path.write_bytes(field.values.astype("<f8").tobytes())


def _write_manifest(path: Path, cfg: ExperimentConfig, grid, extra: dict) -> None:
    doc = {
        "tool": "platelike",
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.raw,
        "grid": grid.manifest_dict(),
    }
    doc.update(extra)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True))


def _write_energy_csv(path: Path, rows: list[tuple[str, EnergyReport]]) -> None:
    lines = [EnergyReport.CSV_HEADER]
    lines += [rep.csv_row(label) for label, rep in rows]
    path.write_text("\n".join(lines) + "\n")


def _plot_width(path: Path, sweep: SweepResult) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [str(r.omega) for r in sweep.rows]
    widths = [r.width if r.width is not None else float("nan") for r in sweep.rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(range(len(labels)), widths)
    ax.set_xticks(range(len(labels)), labels, rotation=30)
    ax.set_ylabel("normalized interface width")
    if sweep.m0_estimate is not None:
        ax.axhline(sweep.m0_estimate, color="k", ls="--", lw=0.8,
                   label=f"max = {sweep.m0_estimate:.3f}")
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _plot_growth(path: Path, profile) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(profile.radii, profile.energies, "o-", label="E(u; B_R)")
    ax.loglog(profile.radii, profile.reference, "--",
              label="C R^(n-1) Psi_s(R)")
    ax.set_xlabel("R")
    ax.set_ylabel("energy")
    if profile.exponent is not None:
        ax.set_title(f"fitted exponent {profile.exponent:.3f}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# -- subcommands -----------------------------------------------------------------


def _prepare(cfg: ExperimentConfig):
    direction = cfg.direction()
    strip = cfg.strip_for(direction)
    m = cfg.m if cfg.m else None
    grid = build_grid(strip, cfg.h, cfg.L, m=m)
    model = EnergyModel(cfg.kernel, cfg.potential, r_cut=cfg.r_cut)
    return direction, strip, grid, model


def cmd_minimize(cfg: ExperimentConfig, out: Path) -> int:
    direction, strip, grid, model = _prepare(cfg)
    result = minimal_minimizer(model, strip, default_seeds(grid, strip), cfg.opts)
    _write_field(out / "field.bin", result.field)
    _write_manifest(out / "manifest.json", cfg, grid, {
        "energy_total": result.energy.total,
        "iterations": result.iterations,
        "projected_gradient_norm": result.final_projected_gradient_norm,
        "status": result.status,
        "field_file": "field.bin",
    })
    _write_energy_csv(out / "energy.csv", [("minimal_minimizer", result.energy)])
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, out: Path) -> int:
    direction, strip, grid, model = _prepare(cfg)
    result = minimal_minimizer(model, strip, default_seeds(grid, strip), cfg.opts)
    _write_field(out / "field.bin", result.field)
    _write_energy_csv(out / "energy.csv", [("minimal_minimizer", result.energy)])
    vdir = out / "verify"
    vdir.mkdir(exist_ok=True)
    vsec = cfg.verify
    reports = []
    u = result.field

    if vsec.get("width", True):
        width = interface_width(u, float(vsec.get("width_theta", 0.9)))
        (vdir / "width.csv").write_text(f"normalized_width,{width!r}\n")
    if vsec.get("birkhoff", True):
        ks = integer_shifts(grid.n, int(vsec.get("kmax", 2)))
        rep = birkhoff_check(u, tuple(vsec.get("thetas", (-0.5, 0.0, 0.5))), ks,
                             band=float(vsec.get("band", 1e-6)))
        reports.append(rep)
    if vsec.get("halfspace", True):
        reports.append(halfspace_check(u, float(vsec.get("halfspace_theta", 0.0))))
    if vsec.get("local_minimality", True):
        w = grid.omega_dot_sites
        margin = float(vsec.get("margin", 1.0))
        inside = np.nonzero((w > strip.A + margin) & (w < strip.B - margin))[0]
        reports.append(local_minimality_test(
            model, u, strip, inside, trials=int(vsec.get("trials", 200)),
            rng_seed=cfg.seed))
    if vsec.get("ef_relation", True):
        rng = np.random.default_rng(cfg.seed + 1)
        center = grid.site_xi[int(rng.choice(np.arange(grid.n_sites)))]
        bump = smooth_bump(grid, center, 3 * grid.h, 0.05)
        nu = grid.site_xi @ grid._reducer.r_mat.T
        bump[~np.all(nu != 0, axis=1)] = 0.0
        bump = np.clip(u.values + bump, -1, 1) - u.values
        phi = PeriodicField(grid, bump, clamp_below=0.0, clamp_above=0.0)
        reports.append(ef_relation_check(model, u, phi))
    if vsec.get("oscillation", False):
        center = interface_center(u)
        radii = list(vsec.get("osc_radii", (1.0, 2.0, 3.0)))
        reports.append(oscillation_decay(u, center, max(radii) + 1.0, radii))

    ok = True
    for rep in reports:
        (vdir / f"{rep.name}.csv").write_text("\n".join(rep.csv_rows()) + "\n")
        ok = ok and rep.passed
    _write_manifest(out / "manifest.json", cfg, grid, {
        "energy_total": result.energy.total,
        "checks": {r.name: r.passed for r in reports},
        "field_file": "field.bin",
    })
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


def cmd_sweep(cfg: ExperimentConfig, out: Path) -> int:
    nw = cfg.normalized_width
    if nw is None:
        nw = cfg.strip_M / cfg.direction().norm
    sweep = rational_sweep(
        cfg.kernel, cfg.potential, cfg.directions,
        normalized_width=nw, h=cfg.h, L=cfg.L, r_cut=cfg.r_cut,
        opts=cfg.opts, kmax=int(cfg.verify.get("kmax", 2)))
    lines = [SweepResult.CSV_HEADER] + [r.csv_row() for r in sweep.rows]
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    pdir = out / "plots"
    pdir.mkdir(exist_ok=True)
    _plot_width(pdir / "width_vs_direction.svg", sweep)
    manifest = {
        "m0_estimate": sweep.m0_estimate,
        "rows": [{"omega": list(r.omega), "width": r.width, "error": r.error}
                 for r in sweep.rows],
    }
    (out / "manifest.json").write_text(json.dumps(
        {"tool": "platelike", "version": __version__, "config": cfg.raw,
         "sweep": manifest}, indent=1, sort_keys=True))
    ok = all(r.error is None and r.birkhoff_passed for r in sweep.rows)
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


def cmd_growth(cfg: ExperimentConfig, out: Path) -> int:
    direction, strip, grid, model = _prepare(cfg)
    result = minimal_minimizer(model, strip, default_seeds(grid, strip), cfg.opts)
    gsec = cfg.growth
    radii = [float(r) for r in gsec.get("radii", (4.0, 6.0, 8.0, 10.0))]
    measure_rcut = float(gsec.get("r_cut", max(cfg.r_cut, 2 * max(radii) + 2)))
    measure = EnergyModel(cfg.kernel, cfg.potential, r_cut=measure_rcut)
    center = interface_center(result.field)
    profile = energy_growth_profile(measure, result.field, center, radii)
    lines = ["R,energy,reference"]
    for r, e, ref in zip(profile.radii, profile.energies, profile.reference):
        lines.append(f"{r!r},{e!r},{ref!r}")
    lines.append(f"exponent,{profile.exponent!r},")
    (out / "growth.csv").write_text("\n".join(lines) + "\n")
    pdir = out / "plots"
    pdir.mkdir(exist_ok=True)
    _plot_growth(pdir / "growth_loglog.svg", profile)
    _write_field(out / "field.bin", result.field)
    _write_manifest(out / "manifest.json", cfg, grid, {
        "growth_exponent": profile.exponent,
        "field_file": "field.bin",
    })
    return EXIT_OK


def cmd_diverge(cfg: ExperimentConfig, out: Path) -> int:
    direction = cfg.direction()
    strip = cfg.strip_for(direction)
    dsec = cfg.diverge
    lengths = [float(v) for v in dsec.get("lengths", (4.0, 8.0, 16.0, 32.0))]
    probe_h = float(dsec.get("h", 0.5))
    report = divergence_probe(cfg.kernel, strip, lengths, h=probe_h)
    lines = ["window_length,cross_sum,increment"]
    for l, s, inc in zip(report.window_lengths, report.sums, report.increments):
        lines.append(f"{l!r},{s!r},{inc!r}")
    lines.append(f"diverging,{int(report.diverging)},")
    (out / "diverge.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK if report.diverging else EXIT_VERIFY_FAILED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="platelike",
        description="plane-like minimizers of a nonlocal energy in a periodic medium")
    parser.add_argument("subcommand",
                        choices=["minimize", "verify", "sweep", "growth", "diverge"])
    parser.add_argument("--config", required=True, help="TOML experiment config")
    parser.add_argument("--out", default=None, help="artifact directory")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--allow-narrow-strip", action="store_true")
    args = parser.parse_args(argv)

    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("PLATELIKE_THREADS", "1"))
    set_threads(threads)

    try:
        cfg = load_config(args.config, allow_narrow=args.allow_narrow_strip)
    except (ConfigError, PreconditionError) as exc:
        print(f"precondition violation: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (OSError, tomllib.TOMLDecodeError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    handlers = {
        "minimize": cmd_minimize,
        "verify": cmd_verify,
        "sweep": cmd_sweep,
        "growth": cmd_growth,
        "diverge": cmd_diverge,
    }
    try:
        return handlers[args.subcommand](cfg, out)
    except (ConfigError, PreconditionError) as exc:
        print(f"precondition violation: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
