"""Batch CLI: generate ensembles, analyze graphs, evolve states, scan
equilibration times and max flows, fit and extrapolate.

Configuration comes from an INI file (one section per subcommand plus
[common]) with command-line flags overriding file values.  Exit codes:
0 ok, 1 domain error, 2 usage error.  The worker count is read from the
SPINFLOW_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .dynamics import (
    default_time_grid,
    evolve_series,
    max_magnetisation_state,
    propagate,
)
from .ensembles import (
    EnsembleSpec,
    build_banded_regular,
    fit_scalings,
    fit_weight_model,
    observable_for,
    reach_bandwidth,
    sample,
)
from .errors import SpinflowError, ValidationError
from .experiments import (
    REFERENCE_SAMPLES,
    REFERENCE_SIZES,
    check_failures,
    correlation_samples,
    extrapolation_samples,
    flow_fit_samples,
    reference_inputs,
    run_tasks,
    scan_tasks,
    summarize,
    teq_scan_samples,
)
from .flow import FlowFit, capacity_graph, extrapolate_teq, fit_teq_vs_fmax, max_flow
from .graph_analysis import (
    adjacency_of,
    band_violations,
    degree_formula,
    degrees,
    empirical_bandwidth,
    structural_adjacency,
)
from .spin_model import (
    LocalitySpec,
    build_observable,
    exact_hamiltonian,
    normalize,
)

SCAN_COLUMNS = ["variant", "L", "n", "d", "seed", "f_max", "T_eq",
                "extrapolated_teq"]


def parse_int_list(text: str) -> list[int]:
    """'4-9' or '4,6,8' or '7' -> list of ints."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def load_config(path: str | None, command: str) -> dict:
    """Merge the [common] and per-command sections of an INI config file."""
    if path is None:
        return {}
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ValidationError(f"cannot read config file {path}")
    merged = {}
    for section in ("common", command):
        if parser.has_section(section):
            merged.update(dict(parser[section]))
    return merged


def effective(args: argparse.Namespace, config: dict, key: str, default=None,
              cast=None):
    """Flag value if given, else config value, else default."""
    val = getattr(args, key.replace("-", "_"), None)
    if val is None:
        val = config.get(key, default)
    if val is None:
        return None
    return cast(val) if cast else val


def _resolve_reference(args, config, n, d, out_dir: Path):
    cache = effective(args, config, "fits", None)
    if cache is None:
        cache = out_dir / "fit_cache.ini"
    sizes = parse_int_list(effective(args, config, "fit-sizes",
                                     ",".join(map(str, REFERENCE_SIZES))))
    samples = effective(args, config, "fit-samples", REFERENCE_SAMPLES, int)
    seed = effective(args, config, "fit-seed", 0, int)
    weights, fits = reference_inputs(LocalitySpec(max(sizes), n, d), seed,
                                     sizes=tuple(sizes),
                                     samples_per_size=samples,
                                     cache_path=cache)
    return weights, fits


def _effective_config_dict(args, config, keys) -> dict:
    return {k: effective(args, config, k) for k in keys}


def cmd_generate(args, config) -> int:
    out_dir = Path(effective(args, config, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    variants = str(effective(args, config, "variant", "exh")).split(",")
    sizes = parse_int_list(effective(args, config, "l", "6"))
    n = effective(args, config, "n", 2, int)
    d = effective(args, config, "d", 1, int)
    seed0 = effective(args, config, "seed", 0, int)
    count = effective(args, config, "samples", 1, int)
    obs_mode = effective(args, config, "obs-mode", "randomised")
    conf = _effective_config_dict(args, config,
                                  ["variant", "l", "n", "d", "seed", "samples",
                                   "obs-mode"])
    for variant in variants:
        needs_ref = variant != "exh"
        for L in sizes:
            loc = LocalitySpec(L, n, d)
            weights = fits = None
            if needs_ref:
                weights, fits = _resolve_reference(args, config, n, d, out_dir)
            for i in range(count):
                seed = seed0 + i
                spec = EnsembleSpec(variant, loc, obs_mode, seed)
                H = sample(spec, weights, fits)
                name = f"{variant}_L{L}_n{n}_d{d}_s{seed}.mat"
                meta = {
                    "matrix": {"variant": variant, "L": L, "n": n, "d": d,
                               "seed": seed, "obs_mode": obs_mode},
                    "provenance": io.provenance(conf, seed),
                }
                io.write_matrix(out_dir / name, H, meta)
                print(f"wrote {out_dir / name}")
    return 0


def cmd_analyze(args, config) -> int:
    out_dir = Path(effective(args, config, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    what = effective(args, config, "what", "degrees")
    n = effective(args, config, "n", 2, int)
    d = effective(args, config, "d", 1, int)
    seed = effective(args, config, "seed", 0, int)
    obs_mode = effective(args, config, "obs-mode", "randomised")
    matrix_in = effective(args, config, "in", None)
    conf = _effective_config_dict(args, config,
                                  ["what", "l", "n", "d", "seed", "obs-mode", "in"])
    prov = io.provenance(conf, seed)
    if matrix_in is not None:
        H = io.read_matrix(matrix_in)
        g = adjacency_of(H)
        L = int(np.log2(H.dim))
    else:
        L = effective(args, config, "l", 6, int)
        obs = build_observable(L, obs_mode, seed)
        g = structural_adjacency(LocalitySpec(L, n, d), obs)
    stem = f"{what}_L{L}_n{n}_d{d}_s{seed}"
    if what == "degrees":
        rows = [{"node": j + 1, "degree": int(deg)}
                for j, deg in enumerate(degrees(g))]
        rows.append({"node": "formula", "degree": degree_formula(L, n, d)})
        io.write_scan_csv(out_dir / f"{stem}.csv", rows, ["node", "degree"], prov)
    elif what == "bandwidth":
        obs = build_observable(L, obs_mode, seed)
        prof = reach_bandwidth(obs, n, d)
        emp = empirical_bandwidth(g)
        rows = [{"node": j + 1, "b": int(prof.b[j]), "b_tilde": int(emp.b[j])}
                for j in range(g.dim)]
        io.write_scan_csv(out_dir / f"{stem}.csv", rows,
                          ["node", "b", "b_tilde"], prov)
    elif what == "mask":
        io.write_mask_pbm(out_dir / f"{stem}.pbm", g, prov)
    elif what == "edges":
        io.write_edge_list(out_dir / f"{stem}.edges", g, prov)
    else:
        raise ValidationError(f"unknown analyze target {what!r}")
    print(f"wrote {out_dir / stem}.*")
    return 0


def cmd_evolve(args, config) -> int:
    out_dir = Path(effective(args, config, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    L = effective(args, config, "l", 6, int)
    n = effective(args, config, "n", 2, int)
    d = effective(args, config, "d", 1, int)
    seed = effective(args, config, "seed", 0, int)
    obs_mode = effective(args, config, "obs-mode", "randomised")
    horizon = effective(args, config, "horizon", 10.0 * L, float)
    variant = effective(args, config, "variant", "exh")
    conf = _effective_config_dict(args, config,
                                  ["variant", "l", "n", "d", "seed", "horizon",
                                   "obs-mode"])
    loc = LocalitySpec(L, n, d)
    spec = EnsembleSpec(variant, loc, obs_mode, seed)
    weights = fits = None
    if variant != "exh":
        weights, fits = _resolve_reference(args, config, n, d, out_dir)
    H = sample(spec, weights, fits)
    obs = observable_for(spec)
    series = evolve_series(H, obs, max_magnetisation_state(obs),
                           default_time_grid(horizon),
                           initial_node=obs.dim - 1)
    path = out_dir / f"evolve_{variant}_L{L}_n{n}_d{d}_s{seed}.csv"
    io.write_trajectory_csv(path, series, io.provenance(conf, seed))
    print(f"wrote {path}")
    return 0


def _write_scan_outputs(out_dir, stem, records, summary_keys, conf, seed0):
    prov = io.provenance(conf, seed0)
    rows = []
    for rec in records:
        rows.append({"variant": rec["variant"], "L": rec["L"], "n": rec["n"],
                     "d": rec["d"], "seed": rec["seed"],
                     "f_max": rec.get("f_max"), "T_eq": rec.get("T_eq"),
                     "extrapolated_teq": rec.get("extrapolated_teq")})
    io.write_scan_csv(out_dir / f"{stem}.csv", rows, SCAN_COLUMNS, prov)
    io.write_records_jsonl(out_dir / f"{stem}.jsonl",
                           [dict(rec, **prov) for rec in records])
    means = summarize(records, summary_keys)
    io.write_scan_csv(out_dir / f"{stem}_means.csv", means,
                      list(means[0].keys()) if means else list(summary_keys), prov)
    print(f"wrote {out_dir / stem}.csv (+.jsonl, _means.csv)")


def cmd_teq_scan(args, config) -> int:
    out_dir = Path(effective(args, config, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    variants = str(effective(args, config, "variant", "exh")).split(",")
    sizes = parse_int_list(effective(args, config, "l", "4-8"))
    n = effective(args, config, "n", 2, int)
    d = effective(args, config, "d", 1, int)
    seed0 = effective(args, config, "seed", 0, int)
    margin = effective(args, config, "margin", 0.10, float)
    horizon = effective(args, config, "horizon", None,
                        lambda v: None if v in (None, "") else float(v))
    obs_mode = effective(args, config, "obs-mode", "randomised")
    samples = effective(args, config, "samples", None,
                        lambda v: None if v in (None, "") else int(v))
    samples_for = (lambda L: samples) if samples else teq_scan_samples
    conf = _effective_config_dict(args, config,
                                  ["variant", "l", "n", "d", "seed", "samples",
                                   "margin", "horizon", "obs-mode"])
    reference = None
    if any(v != "exh" for v in variants):
        weights, fits = _resolve_reference(args, config, n, d, out_dir)
        reference = {(n, d): (weights, fits)}
    tasks = scan_tasks(variants, sizes, n, d, samples_for, seed0,
                       obs_mode=obs_mode, measure_teq=True, measure_flow=False,
                       margin=margin, horizon=horizon, reference=reference)
    records = check_failures(run_tasks(tasks))
    _write_scan_outputs(out_dir, "teq_scan", records, ("variant", "L"),
                        conf, seed0)
    return 0


def cmd_flow_scan(args, config) -> int:
    out_dir = Path(effective(args, config, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    variants = str(effective(args, config, "variant", "exh")).split(",")
    n = effective(args, config, "n", 2, int)
    d = effective(args, config, "d", 1, int)
    seed0 = effective(args, config, "seed", 0, int)
    margin = effective(args, config, "margin", 0.10, float)
    obs_mode = effective(args, config, "obs-mode", "randomised")
    all_nd = effective(args, config, "all-nd", False,
                       lambda v: str(v).lower() in ("1", "true", "yes"))
    samples = effective(args, config, "samples", None,
                        lambda v: None if v in (None, "") else int(v))
    conf = _effective_config_dict(args, config,
                                  ["variant", "l", "n", "d", "seed", "samples",
                                   "margin", "obs-mode", "all-nd"])
    tasks = []
    if all_nd:
        L = effective(args, config, "l", 8, int)
        if variants != ["exh"]:
            raise ValidationError("the (n, d) grid scan supports only exh")
        for nn in range(2, L + 1):
            for dd in range(nn - 1, L):
                count = samples or correlation_samples(L, nn)
                tasks.extend(scan_tasks(["exh"], [L], nn, dd,
                                        lambda _: count, seed0,
                                        obs_mode=obs_mode, margin=margin))
        summary_keys = ("variant", "n", "d")
    else:
        sizes = parse_int_list(effective(args, config, "l", "4-8"))
        samples_for = (lambda L: samples) if samples else flow_fit_samples
        reference = None
        if any(v != "exh" for v in variants):
            weights, fits = _resolve_reference(args, config, n, d, out_dir)
            reference = {(n, d): (weights, fits)}
        tasks = scan_tasks(variants, sizes, n, d, samples_for, seed0,
                           obs_mode=obs_mode, margin=margin,
                           reference=reference)
        summary_keys = ("variant", "L")
    records = check_failures(run_tasks(tasks))
    _write_scan_outputs(out_dir, "flow_scan", records, summary_keys, conf, seed0)
    return 0


def cmd_fit(args, config) -> int:
    out_dir = Path(effective(args, config, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = effective(args, config, "kind", "flow")
    seed = effective(args, config, "seed", 0, int)
    if kind == "scalings":
        n = effective(args, config, "n", 2, int)
        d = effective(args, config, "d", 1, int)
        sizes = parse_int_list(effective(args, config, "fit-sizes", "4-8"))
        samples = effective(args, config, "fit-samples", REFERENCE_SAMPLES, int)
        conf = _effective_config_dict(args, config,
                                      ["kind", "n", "d", "fit-sizes",
                                       "fit-samples", "seed"])
        loc = LocalitySpec(max(sizes), n, d)
        fits = fit_scalings(loc, sizes, samples, seed)
        weights = fit_weight_model(loc, sizes, samples, seed)
        path = out_dir / f"scaling_fits_n{n}_d{d}.ini"
        io.write_fit_cache(path, {(n, d): (fits, weights)},
                           io.provenance(conf, seed))
    elif kind == "flow":
        scan_path = effective(args, config, "scan", None)
        if scan_path is None:
            raise ValidationError("fit --kind flow needs --scan CSV input")
        conf = _effective_config_dict(args, config, ["kind", "scan", "seed"])
        prov, rows = io.read_scan_csv(scan_path)
        by_L: dict[int, list[tuple[float, float]]] = {}
        for row in rows:
            if row.get("T_eq") and row.get("f_max"):
                by_L.setdefault(int(row["L"]), []).append(
                    (float(row["f_max"]), float(row["T_eq"])))
        sizes = sorted(by_L)
        fmax_means = [float(np.mean([p[0] for p in by_L[L]])) for L in sizes]
        teq_means = [float(np.mean([p[1] for p in by_L[L]])) for L in sizes]
        fit = fit_teq_vs_fmax(fmax_means, teq_means)
        path = out_dir / "flow_fit.ini"
        io.write_metadata(path, {
            "fit": {"slope": repr(fit.slope), "intercept": repr(fit.intercept),
                    "slope_se": repr(fit.slope_se),
                    "intercept_se": repr(fit.intercept_se),
                    "n_points": fit.n_points,
                    "sizes": " ".join(map(str, sizes)),
                    "fmax_means": " ".join(map(repr, fit.fmax_means)),
                    "teq_means": " ".join(map(repr, fit.teq_means)),
                    "residuals": " ".join(map(repr, fit.residuals))},
            "provenance": io.provenance(conf, seed),
        })
    else:
        raise ValidationError(f"unknown fit kind {kind!r}")
    print(f"wrote {path}")
    return 0


def load_flow_fit(path) -> FlowFit:
    meta = io.read_metadata(path)["fit"]
    return FlowFit(float(meta["slope"]), float(meta["intercept"]),
                   float(meta["slope_se"]), float(meta["intercept_se"]),
                   int(meta["n_points"]),
                   tuple(float(x) for x in meta["fmax_means"].split()),
                   tuple(float(x) for x in meta["teq_means"].split()),
                   tuple(float(x) for x in meta["residuals"].split()))


def cmd_extrapolate(args, config) -> int:
    out_dir = Path(effective(args, config, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    fit_path = effective(args, config, "fit", None)
    if fit_path is None:
        raise ValidationError("extrapolate needs --fit (flow fit file)")
    fit = load_flow_fit(fit_path)
    sizes = parse_int_list(effective(args, config, "l", "11-12"))
    n = effective(args, config, "n", 3, int)
    d = effective(args, config, "d", 2, int)
    seed0 = effective(args, config, "seed", 0, int)
    obs_mode = effective(args, config, "obs-mode", "randomised")
    samples = effective(args, config, "samples", None,
                        lambda v: None if v in (None, "") else int(v))
    conf = _effective_config_dict(args, config,
                                  ["fit", "l", "n", "d", "seed", "samples",
                                   "obs-mode"])
    weights, fits = _resolve_reference(args, config, n, d, out_dir)
    rows = []
    for L in sizes:
        loc = LocalitySpec(L, n, d)
        count = samples or extrapolation_samples(L)
        for i in range(count):
            spec = EnsembleSpec("brf", loc, obs_mode, seed0 + i)
            H = sample(spec, weights, fits)
            obs = observable_for(spec)
            sink = 0 if obs_mode == "homogeneous" else int(np.argmin(np.abs(obs.o)))
            fmax = max_flow(capacity_graph(H, obs.dim - 1, sink))
            teq, outside = extrapolate_teq(fit, fmax)
            rows.append({"variant": "brf", "L": L, "n": n, "d": d,
                         "seed": seed0 + i, "f_max": fmax, "T_eq": None,
                         "extrapolated_teq": teq,
                         "trust_warning": int(outside)})
    path = out_dir / "extrapolation.csv"
    io.write_scan_csv(path, rows, SCAN_COLUMNS + ["trust_warning"],
                      io.provenance(conf, seed0))
    print(f"wrote {path}")
    return 0


def cmd_validate(args, config) -> int:
    """Run the release-gate invariant suites and report pass/fail counts."""
    from .flow import CapacityGraph, brute_force_min_cut
    from .rng import stream

    matrix_in = effective(args, config, "in", None)
    checks: list[tuple[str, bool, str]] = []

    if matrix_in is not None:
        try:
            H = io.read_matrix(matrix_in)
            ok = bool(np.all(H.rows <= H.cols))
            diag = H.rows == H.cols
            ok = ok and bool(np.all(np.abs(H.vals[diag].imag) == 0.0))
            checks.append(("matrix file structure (Hermitian storage)", ok, ""))
        except SpinflowError as exc:
            checks.append(("matrix file structure (Hermitian storage)", False,
                           str(exc)))
    else:
        # degree formula vs brute-force adjacency, exhaustively at L = 6
        ok, detail = True, ""
        L = 6
        for n in range(1, L + 1):
            for d in range(max(n - 1, 1), L):
                obs = build_observable(L, "randomised", 11)
                g = structural_adjacency(LocalitySpec(L, n, d), obs)
                degs = degrees(g)
                want = degree_formula(L, n, d)
                if not (degs.min() == degs.max() == want):
                    ok, detail = False, f"(n={n}, d={d}): {degs.min()}..{degs.max()} != {want}"
        checks.append(("degree formula vs exhaustive adjacency (L=6)", ok, detail))

        # band containment of exact samples
        ok, detail = True, ""
        for (L, n, d) in ((6, 2, 1), (6, 3, 2), (7, 2, 1)):
            obs = build_observable(L, "randomised", 12)
            H = exact_hamiltonian(LocalitySpec(L, n, d), obs, 12)
            prof = reach_bandwidth(obs, n, d)
            bad = band_violations(adjacency_of(H), prof)
            if bad:
                ok, detail = False, f"(L={L}, n={n}, d={d}): {bad} violations"
        checks.append(("band containment of exact samples", ok, detail))

        # banded regular constructor validation
        ok, detail = True, ""
        obs = build_observable(6, "randomised", 13)
        band = reach_bandwidth(obs, 2, 1)
        rho = degree_formula(6, 2, 1)
        for s in range(100):
            g = build_banded_regular(64, rho, band, s)
            degs = degrees(g)
            if not (degs.min() == degs.max() == rho and band_violations(g, band) == 0):
                ok, detail = False, f"seed {s} invalid"
                break
        checks.append(("banded regular constructor (100 seeds)", ok, detail))

        # max flow vs exhaustive min cut
        ok, detail = True, ""
        rng = stream(14, "validate-flow")
        for trial in range(50):
            N = int(rng.integers(4, 11))
            pairs = [(i, j) for i in range(N) for j in range(i + 1, N)
                     if rng.random() < 0.5]
            if not pairs:
                continue
            u = np.array([a for a, _ in pairs])
            v = np.array([b for _, b in pairs])
            cap = rng.uniform(0.01, 3.0, len(pairs))
            g = CapacityGraph(N, u, v, cap, 0, N - 1)
            if abs(max_flow(g) - brute_force_min_cut(g)) > 1e-9:
                ok, detail = False, f"trial {trial}"
                break
        checks.append(("max flow vs exhaustive min cut (50 graphs)", ok, detail))

        # propagator vs dense eigendecomposition
        ok, detail = True, ""
        for s in range(5):
            obs = build_observable(5, "randomised", 15 + s)
            H = exact_hamiltonian(LocalitySpec(5, 2, 1), obs, 15 + s)
            psi0 = max_magnetisation_state(obs)
            w, V = np.linalg.eigh(H.to_dense())
            for t in (0.5, 5.0):
                mine = propagate(H, psi0, [t])[0]
                exact = V @ (np.exp(-1j * w * t) * (V.conj().T @ psi0))
                if np.abs(mine - exact).max() > 1e-8:
                    ok, detail = False, f"seed {s} t={t}"
        checks.append(("propagator vs dense evolution (5 instances)", ok, detail))

    failed = 0
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else ""))
        failed += 0 if ok else 1
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


COMMANDS = {
    "generate": cmd_generate,
    "analyze": cmd_analyze,
    "evolve": cmd_evolve,
    "teq-scan": cmd_teq_scan,
    "flow-scan": cmd_flow_scan,
    "fit": cmd_fit,
    "extrapolate": cmd_extrapolate,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinflow",
        description="Spin-chain graph ensembles, equilibration times and max-flow proxies",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI config file; flags override it")
        p.add_argument("--variant", help="comma list from exh,exa,brf,bvf,brc,reg")
        p.add_argument("--L", dest="l", help="system size(s): '8', '4-9' or '4,6,8'")
        p.add_argument("--n", type=int, help="sites per interaction term")
        p.add_argument("--d", type=int, help="maximum interaction diameter")
        p.add_argument("--seed", type=int, help="base seed")
        p.add_argument("--samples", help="samples per grid cell (default: schedule)")
        p.add_argument("--margin", type=float, help="equilibration margin (default 0.10)")
        p.add_argument("--horizon", help="evolution horizon (default 10*L)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--obs-mode", choices=["randomised", "homogeneous"],
                       help="observable weight mode")
        p.add_argument("--what", help="analyze target: degrees|bandwidth|mask|edges")
        p.add_argument("--in", dest="in_", help="input matrix file")
        p.add_argument("--kind", help="fit kind: scalings|flow")
        p.add_argument("--scan", help="scan CSV for the flow fit")
        p.add_argument("--fit", help="flow fit file for extrapolation")
        p.add_argument("--fits", help="scaling-fit cache path")
        p.add_argument("--fit-sizes", help="sizes for reference fits, e.g. 4-8")
        p.add_argument("--fit-samples", type=int, help="samples per size for fits")
        p.add_argument("--fit-seed", type=int, help="seed for reference fits")
        p.add_argument("--all-nd", action="store_const", const="true",
                       help="flow-scan over the full (n, d) grid at fixed L")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # argparse stores --in under in_; normalize for effective()
    if hasattr(args, "in_"):
        args.__dict__["in"] = args.in_
    try:
        config = load_config(args.config, args.command)
        return COMMANDS[args.command](args, config)
    except SpinflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
