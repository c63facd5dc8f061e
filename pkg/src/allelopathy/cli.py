"""Command-line entry point.

Subcommands: simulate, couple, dual-check, meanfield, sweep, blocks.
Each mode reads an INI config (overridable with --set section.key=value),
echoes the resolved config into the output directory, writes its CSV /
JSON / PGM artifacts plus rendered figures, and finishes with a hashed
manifest.  Seeds default to 0 and are always recorded; no implicit
entropy is ever consulted.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import figures
from .blocks import BlockGeometry, blocking_experiment, estimate_occupancy
from .coupling import couple, coupled_density_sweep
from .dual import build_dual_tree, determine_color
from .forward import fold_states, make_initial, run
from .graphical import build_events
from .lattice import Lattice, Params
from .meanfield import (CORRECTED, boundary_fixed_point_blue,
                        boundary_fixed_point_red, integrate,
                        interior_fixed_point, phase_grid, stability_report)
from .outputs import (config_text, echo_config, parse_config, parse_floats,
                      parse_sides, resolve_outdir, write_csv, write_json,
                      write_manifest, write_pgm)
from .stats import permutation_trend_test, wilson_interval


def _params_from(cp) -> Params:
    sec = cp["params"] if cp.has_section("params") else {}
    gamma = str(sec.get("gamma", "1.0")).strip().lower()
    return Params(
        lambda1=float(sec.get("lambda1", 1.0)),
        lambda2=float(sec.get("lambda2", 1.0)),
        gamma=math.inf if gamma in ("inf", "infinity") else float(gamma),
        radius=float(sec.get("radius", 1.0)),
        norm=sec.get("norm", "l1"),
        dim=int(sec.get("dim", 2)),
    )


def _domain_from(cp, p: Params) -> Lattice:
    if cp.has_section("domain") and cp["domain"].get("sides"):
        sides = parse_sides(cp["domain"]["sides"])
    else:
        sides = (100,) * p.dim
    if len(sides) != p.dim:
        raise ValueError("domain sides do not match the dimension")
    return Lattice(sides)


def _run_section(cp):
    sec = cp["run"] if cp.has_section("run") else {}
    return {
        "horizon": float(sec.get("horizon", 50.0)),
        "seed": int(sec.get("seed", 0)),
        "init": sec.get("init", "product:0.0,0.5,0.5,0.0"),
        "samples": int(sec.get("samples", 21)),
        "snapshots": parse_floats(sec["snapshots"]) if sec.get("snapshots")
        else None,
    }


def _finish(cp, outdir: Path) -> None:
    echo_config(cp, outdir)
    write_manifest(outdir, config_text(cp))
    print(f"outputs written to {outdir}")


# ---------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------

def cmd_simulate(cp, outdir: Path) -> None:
    p = _params_from(cp)
    lattice = _domain_from(cp, p)
    rc = _run_section(cp)
    T = rc["horizon"]
    samples = np.linspace(0.0, T, rc["samples"])
    snaps = rc["snapshots"] if rc["snapshots"] is not None else [T]
    samples = np.unique(np.concatenate([samples, snaps]))
    print(f"simulate: {lattice.sides} horizon={T} seed={rc['seed']}")
    rep = build_events(rc["seed"], p, lattice, T)
    config0 = make_initial(rc["init"], rc["seed"], lattice)
    traj = fold_states(config0, rep, p, samples, snapshot_times=snaps)

    dens = traj.densities
    rows = [[f"{t:.10g}"] + [f"{dens[i, j]:.10g}" for j in range(4)]
            + [int(traj.counts[i, 1]), int(traj.counts[i, 2])]
            for i, t in enumerate(traj.times)]
    write_csv(outdir / "timeseries.csv",
              ["t", "density0", "density1", "density2", "density3",
               "count1", "count2"], rows)
    for ts in snaps:
        cfg = traj.snapshots[float(ts)]
        if lattice.dim == 2:
            write_pgm(cfg, lattice.sides, outdir / f"snapshot_t{ts:g}.pgm")
            figures.snapshot_figure(cfg, lattice.sides,
                                    outdir / f"snapshot_t{ts:g}.png",
                                    title=f"t = {ts:g}")
    figures.density_figure(traj.times, dens, outdir / "densities.png")
    _finish(cp, outdir)


# ---------------------------------------------------------------------
# couple
# ---------------------------------------------------------------------

def cmd_couple(cp, outdir: Path) -> None:
    p = _params_from(cp)
    lattice = _domain_from(cp, p)
    rc = _run_section(cp)
    sec = cp["couple"] if cp.has_section("couple") else {}
    vary = sec.get("vary", "gamma")
    raw = sec.get("values", "0.05,0.5")
    values = [math.inf if v.strip().lower() in ("inf", "infinity")
              else float(v) for v in raw.split(",")]
    variants = [p.with_(**{vary: v}) for v in values]
    samples = np.linspace(0.0, rc["horizon"], rc["samples"])
    print(f"couple: vary {vary} over {values}")
    result = couple(rc["seed"], variants, rc["init"], samples, lattice)
    write_json(outdir / "verdicts.json", result.report())
    for i, traj in enumerate(result.trajectories):
        dens = traj.densities
        rows = [[f"{t:.10g}"] + [f"{dens[k, j]:.10g}" for j in range(4)]
                + [int(traj.counts[k, 1]), int(traj.counts[k, 2])]
                for k, t in enumerate(traj.times)]
        write_csv(outdir / f"timeseries_variant{i}.csv",
                  ["t", "density0", "density1", "density2", "density3",
                   "count1", "count2"], rows)
    figures.variants_figure(
        samples, [tr.densities[:, 2] for tr in result.trajectories],
        [f"{vary}={v:g}" for v in values], outdir / "red_density.png")
    ok = all(bool(v.holds.all()) for v in result.verdicts)
    print(f"domination verdicts all hold: {ok}")
    _finish(cp, outdir)


# ---------------------------------------------------------------------
# dual-check
# ---------------------------------------------------------------------

def cmd_dual_check(cp, outdir: Path) -> None:
    sec = cp["dual"] if cp.has_section("dual") else {}
    n_inst = int(sec.get("instances", 50))
    n_sites = int(sec.get("sites", 20))
    T = float(sec.get("horizon", 5.0))
    lam_lo = float(sec.get("lambda_min", 0.3))
    lam_hi = float(sec.get("lambda_max", 2.5))
    g_lo = float(sec.get("gamma_min", 0.05))
    g_hi = float(sec.get("gamma_max", 5.0))
    rc = _run_section(cp)
    base_seed = rc["seed"]
    lattice = Lattice((n_sites,))
    gen = np.random.default_rng(base_seed)
    rows = []
    total = agree = 0
    for inst in range(n_inst):
        lam2 = gen.uniform(lam_lo, min(lam_hi, lam_lo + 1.9))
        lam1 = gen.uniform(lam2, lam_hi)
        gamma = float(np.exp(gen.uniform(np.log(g_lo), np.log(g_hi))))
        p = Params(lambda1=lam1, lambda2=lam2, gamma=gamma, dim=1)
        probs = gen.dirichlet(np.ones(4))
        probs = np.round(probs, 6)
        probs[0] = 1.0 - probs[1:].sum()
        init = "product:" + ",".join(repr(float(v)) for v in probs)
        rep = build_events(base_seed + inst, p, lattice, T)
        config0 = make_initial(init, base_seed + inst, lattice)
        traj, states = run(config0, rep, [T], record_transitions=True)
        hits = 0
        for x in range(n_sites):
            c = determine_color(rep, config0, x, T, states=states)
            hits += int(c == traj.final[x])
        agree += hits
        total += n_sites
        rows.append([inst, f"{lam1:.6g}", f"{lam2:.6g}", f"{gamma:.6g}",
                     n_sites, hits])
        if inst == 0 and sec.get("export_tree", "yes") != "no":
            tree = build_dual_tree(rep, 0, T)
            (outdir / "dual_tree_sample.txt").write_text(
                "\n".join(tree.export_lines()) + "\n")
    write_csv(outdir / "dualcheck.csv",
              ["instance", "lambda1", "lambda2", "gamma", "queries",
               "agreements"], rows)
    write_json(outdir / "summary.json",
               {"instances": n_inst, "queries": total, "agreements": agree,
                "agreement_rate": agree / total})
    figures.trend_figure(
        np.arange(n_inst) + 1.0, [r[5] / r[4] for r in rows],
        [r[5] / r[4] for r in rows], [r[5] / r[4] for r in rows],
        outdir / "agreement.png", xlabel="instance",
        ylabel="agreement rate", logx=False)
    print(f"dual-check agreement {agree}/{total}")
    _finish(cp, outdir)


# ---------------------------------------------------------------------
# meanfield
# ---------------------------------------------------------------------

def _parse_range(text: str, default):
    if not text:
        return default
    lo, hi, n = text.split(":")
    return np.linspace(float(lo), float(hi), int(n))


def cmd_meanfield(cp, outdir: Path) -> None:
    p = _params_from(cp)
    sec = cp["meanfield"] if cp.has_section("meanfield") else {}
    mode = sec.get("mode", "trajectory")
    form = sec.get("form", CORRECTED)
    if mode == "trajectory":
        u0 = parse_floats(sec.get("u0", "0.25,0.25,0.25,0.25"))
        dt = float(sec.get("dt", 0.01))
        T = float(sec.get("t_max", 100.0))
        traj = integrate(u0, p, form=form, dt=dt, T=T)
        rows = [[f"{t:.10g}"] + [f"{traj.states[i, j]:.12g}"
                                 for j in range(4)]
                for i, t in enumerate(traj.times)]
        write_csv(outdir / "trajectory.csv",
                  ["t", "u0", "u1", "u2", "u3"], rows)
        figures.meanfield_figure(traj.times, traj.states,
                                 outdir / "trajectory.png")
        info = {"step_halving_error": traj.step_halving_error,
                "final": [float(v) for v in traj.final]}
        for name, point in (("blue_boundary", boundary_fixed_point_blue(p)),
                            ("red_boundary", boundary_fixed_point_red(p))):
            if point is None:
                info[name] = None
                continue
            rec = stability_report(point, p, form)
            info[name] = {"point": [float(v) for v in point],
                          "classification": rec.classification}
        interior = interior_fixed_point(p, form)
        info["interior"] = (None if interior is None
                            else [float(v) for v in interior])
        write_json(outdir / "stability.json", info)
    elif mode == "grid":
        l1s = _parse_range(sec.get("lambda1_range", ""),
                           np.linspace(0.1, 5.0, 25))
        l2s = _parse_range(sec.get("lambda2_range", ""),
                           np.linspace(0.1, 5.0, 25))
        gammas = parse_floats(sec.get("gammas", "0.05,0.5,1,5"))
        rows = phase_grid(l1s, l2s, gammas, form=form)
        write_csv(outdir / "phase.csv",
                  ["lambda1", "lambda2", "gamma", "in_w1", "in_w2",
                   "coexist", "ubar_exists", "vbar_exists",
                   "interior_exists"],
                  [[f"{r['lambda1']:.10g}", f"{r['lambda2']:.10g}",
                    f"{r['gamma']:.10g}", r["in_w1"], r["in_w2"],
                    r["coexist"], r["ubar_exists"], r["vbar_exists"],
                    r["interior_exists"]] for r in rows])
        figures.phase_figure(rows, outdir / "phase.png")
    else:
        raise ValueError(f"unknown meanfield mode {mode!r}")
    _finish(cp, outdir)


# ---------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------

def cmd_sweep(cp, outdir: Path) -> None:
    p = _params_from(cp)
    lattice = _domain_from(cp, p)
    rc = _run_section(cp)
    sec = cp["sweep"] if cp.has_section("sweep") else {}
    gammas = parse_floats(sec.get("gammas", "0.1,1,10"))
    replicas = int(sec.get("replicas", 20))
    init = sec.get("init", rc["init"])
    mmr = float(sec.get("max_material_rate", 20.0))
    print(f"sweep: thaw rates {gammas}, {replicas} coupled replicas")
    gam, dens = coupled_density_sweep(p, gammas, lattice, rc["horizon"],
                                      replicas, init, base_seed=rc["seed"],
                                      max_material_rate=mmr)
    red = dens[:, :, 2]
    means = red.mean(axis=0)
    se = red.std(axis=0, ddof=1) / np.sqrt(replicas) if replicas > 1 \
        else np.zeros_like(means)
    _, pval = permutation_trend_test(red, alternative="increasing")
    rows = [[f"{g:.10g}", f"{means[i]:.10g}", f"{means[i] - 1.96 * se[i]:.10g}",
             f"{means[i] + 1.96 * se[i]:.10g}"] for i, g in enumerate(gam)]
    write_csv(outdir / "sweep.csv",
              ["gamma", "red_density_mean", "ci_lo", "ci_hi"], rows)
    write_json(outdir / "trend.json",
               {"gammas": list(map(float, gam)),
                "red_density_means": [float(m) for m in means],
                "increasing_trend_p": float(pval)})
    figures.trend_figure(gam, means, means - 1.96 * se, means + 1.96 * se,
                         outdir / "sweep.png", ylabel="red density at T")
    print(f"trend p-value (increasing): {pval:.2e}")
    _finish(cp, outdir)


# ---------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------

def cmd_blocks(cp, outdir: Path) -> None:
    p = _params_from(cp)
    rc = _run_section(cp)
    sec = cp["blocks"] if cp.has_section("blocks") else {}
    L = int(sec.get("l", 20))
    M = int(sec.get("m", 3))
    T = float(sec["t"]) if sec.get("t") else None
    tile = int(sec["tile_side"]) if sec.get("tile_side") else None
    g = BlockGeometry(L=L, M=M, T=T, tile_side=tile)
    gammas = parse_floats(sec.get("gammas", "0.1,1,10,100"))
    replicas = int(sec.get("replicas", 40))
    experiment = sec.get("experiment", "blocking")
    include_inf = sec.get("include_inf", "yes") != "no"
    rows = []
    gam_axis, blocked, occ = [], [], []
    gamma_list = list(gammas) + ([math.inf] if include_inf else [])
    for gamma in gamma_list:
        pv = p.with_(gamma=gamma)
        occupancy, ci = float("nan"), (float("nan"), float("nan"))
        frac = float("nan")
        if experiment in ("occupancy", "both"):
            rep = estimate_occupancy(pv, g, replicas, seed0=rc["seed"])
            occupancy = rep.occupancy
            ci = rep.intervals[int(np.argmin(rep.estimates))]
        if experiment in ("blocking", "both"):
            br = blocking_experiment(pv, g, replicas, seed0=rc["seed"])
            frac = br.blocked_fraction
        label = "inf" if math.isinf(gamma) else f"{gamma:.10g}"
        rows.append([label, g.L, f"{g.T:.10g}", g.M,
                     f"{occupancy:.10g}", f"{ci[0]:.10g}", f"{ci[1]:.10g}",
                     f"{frac:.10g}"])
        gam_axis.append(gamma)
        blocked.append(frac)
        occ.append(occupancy)
        print(f"gamma={label}: occupancy={occupancy} blocked={frac}")
    write_csv(outdir / "blocks.csv",
              ["gamma", "L", "T", "M", "occupancy", "ci_lo", "ci_hi",
               "blocked_fraction"], rows)
    finite = [i for i, ga in enumerate(gam_axis) if not math.isinf(ga)]
    if experiment in ("blocking", "both") and len(finite) > 1:
        xs = [gam_axis[i] for i in finite]
        ys = [blocked[i] for i in finite]
        figures.trend_figure(xs, ys, ys, ys, outdir / "blocking.png",
                             ylabel="blocked fraction")
    _finish(cp, outdir)


# ---------------------------------------------------------------------

_COMMANDS = {
    "simulate": cmd_simulate,
    "couple": cmd_couple,
    "dual-check": cmd_dual_check,
    "meanfield": cmd_meanfield,
    "sweep": cmd_sweep,
    "blocks": cmd_blocks,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="allelopathy",
        description="Simulator and analysis suite for the two-species "
                    "contact process with frozen sites.")
    parser.add_argument("mode", choices=sorted(_COMMANDS))
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--set", dest="overrides", action="append",
                        default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, help="shortcut for run.seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for replica-parallel modes")
    args = parser.parse_args(argv)

    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.threads != 1:
        overrides.append(f"run.threads={args.threads}")
    cp = parse_config(args.config, overrides)
    outdir = resolve_outdir(args.out)
    _COMMANDS[args.mode](cp, outdir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
