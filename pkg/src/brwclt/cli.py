"""Command-line front end: ``brwclt <subcommand> [--config PATH | --profile NAME]``.

Output directory layout (all files carry ``config_hash`` and ``version``):

    config.json              normalized config
    kernel_report.json       analyze-kernel
    replicates_N<N>.jsonl    simulate: one record per replicate (resumable)
    summary_N<N>.json        simulate: EnsembleSummary with checksum
    verify_report.json       verify: comparison and trend reports
    limit_paths.csv          sample-limit: one row per path
    limit_provenance.json    sample-limit: model, jitter, representation check

Exit codes: 0 pass, 1 gate failure, 2 configuration or precondition error,
3 data integrity error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import PROFILES, ExperimentConfig, checksum_ok, stamp
from .errors import BRWError, DataIntegrityError
from .limits import limit_coefficient, sample_paths, subfbm_representation_check
from .moments import SigmaCurve
from .occupation import EnsembleSummary, _n_tag, ensemble_params, prelimit_cov_matrix, summarize_paths
from .simulate import estimate_sigma_curve, estimate_sigma_eq, run_replicates
from .stats import compare, convergence_trend
from .walk import clan_contribution, gaussian_approx, green_values, norming, return_probability

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_INTEGRITY = 0, 1, 2, 3
BLOCK = 256
REPRESENTATION_GRID = (0.5, 1.0, 2.0, 4.0)


def _n_label(N) -> str:
    return f"{float(N):g}"


def _write_json(path: Path, payload: dict, config: ExperimentConfig) -> dict:
    body = stamp(payload, config)
    path.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")
    return body


def _read_stamped(path: Path, config: ExperimentConfig) -> dict:
    try:
        body = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataIntegrityError(f"{path.name}: unreadable JSON ({exc})") from exc
    if not checksum_ok(body):
        raise DataIntegrityError(f"{path.name}: checksum mismatch")
    if body.get("config_hash") != config.hash:
        raise DataIntegrityError(f"{path.name}: config hash {body.get('config_hash')} != {config.hash}")
    return body


def _strip(body: dict) -> dict:
    return {k: v for k, v in body.items() if k not in ("config_hash", "version", "checksum")}


# ---------------------------------------------------------------------------
# analyze-kernel


def cmd_analyze_kernel(config: ExperimentConfig, out: Path) -> int:
    kernel = config.walk_kernel()
    Q = kernel.covariance
    d = kernel.dimension
    report = {"dimension": d, "kernel": kernel.to_spec(), "range": kernel.range,
              "Q": Q.entries.tolist(), "det_q": Q.det}
    if d >= 3 or config.init == "equilibrium":
        g = green_values(kernel, tol=1e-6)
        report["green_00"] = {"value": g.value, "error": g.error}
    ts = np.array([1.0, 10.0, 100.0, 400.0])
    a = return_probability(kernel, ts)
    report["local_clt"] = [{"t": float(t), "a_t": float(v), "gaussian": gaussian_approx(Q, t),
                            "ratio": float(v / gaussian_approx(Q, t))} for t, v in zip(ts, a)]
    if d >= 3:
        report["norming"] = [{"t": t, "h": norming(d, t)} for t in (2.0, 4.0, 16.0, 64.0)]
    report["clan_contribution"] = []
    for T in (1.0, 2.0, 4.0, 8.0, 16.0, 32.0):
        c = clan_contribution(kernel, T, config.init, tol=1e-6)
        report["clan_contribution"].append({"T": T, "value": c.value, "error": c.error})
    _write_json(out / "kernel_report.json", report, config)
    print(f"Q = {np.array2string(Q.entries, precision=6)}; det Q = {Q.det:.6g}")
    if "green_00" in report:
        print(f"g(0,0) = {report['green_00']['value']:.6f} +- {report['green_00']['error']:.1e}")
    for row in report["local_clt"]:
        print(f"t = {row['t']:6g}: a_t(0,0) / p_t(0) = {row['ratio']:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def _load_records(path: Path, config: ExperimentConfig) -> dict:
    records = {}
    if not path.exists():
        return records
    lines = path.read_text().splitlines()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            # an interrupted append leaves at most one partial final line
            if lineno == len(lines):
                break
            raise DataIntegrityError(f"{path.name}:{lineno}: corrupt record") from None
        if rec.get("config_hash") != config.hash:
            raise DataIntegrityError(f"{path.name}:{lineno}: record from config {rec.get('config_hash')}")
        records[int(rec["replicate"])] = rec
    return records


def simulate_N(config: ExperimentConfig, out: Path, N: float) -> dict:
    template = config.sim_params()
    safety = None if config.torus_side else config.torus_safety
    params = ensemble_params(template, N, config.grid, safety)
    path = out / f"replicates_N{_n_label(N)}.jsonl"
    records = _load_records(path, config)
    todo = [r for r in range(config.replicates) if r not in records]
    if path.exists() and todo:
        # drop a partial trailing line before appending
        text = path.read_text()
        if text and not text.endswith("\n"):
            path.write_text(text[:text.rfind("\n") + 1])
    for start in range(0, len(todo), BLOCK):
        block = todo[start:start + BLOCK]
        batch = run_replicates(params, block, tag=_n_tag(N), workers=config.workers)
        failed = dict(batch.failed)
        lines = []
        for i, rep in enumerate(batch.replicates):
            rep = int(rep)
            rec = {"config_hash": config.hash, "version": __version__, "N": float(N), "replicate": rep,
                   "seed": int(config.seed), "torus_side": params.torus_side}
            if rep in failed:
                rec["error"] = failed[rep]
            else:
                rec["occupation"] = batch.occupation[i].tolist()
                rec["events"] = int(batch.events[i])
            records[rep] = rec
            lines.append(json.dumps(rec, sort_keys=True))
        with path.open("a") as fh:
            fh.write("\n".join(lines) + "\n")
    ok = [records[r] for r in range(config.replicates) if "occupation" in records[r]]
    failures = [(r, records[r]["error"]) for r in range(config.replicates) if "error" in records[r]]
    grid = np.asarray(config.grid)
    raw = np.array([rec["occupation"] for rec in ok], dtype=float).reshape(len(ok), grid.size)
    X = (raw - config.theta * N * grid) / norming(config.dimension, N)
    summary = summarize_paths(X, params_hash=config.hash, N=N, init=config.init, dimension=config.dimension,
                              seed=int(config.seed), torus_side=params.torus_side, grid=grid,
                              replicates=config.replicates, failures=failures)
    _write_json(out / f"summary_N{_n_label(N)}.json", summary.to_dict(), config)
    return summary.to_dict()


def cmd_simulate(config: ExperimentConfig, out: Path) -> int:
    for N in config.N_ladder:
        s = simulate_N(config, out, N)
        flag = "" if s["valid"] else "  INVALID (>1% excluded)"
        print(f"N = {_n_label(N)}: {s['n_ok']}/{s['replicates']} replicates, side {s['torus_side']}, "
              f"Var X = {np.round(np.diag(np.asarray(s['cov'], float)), 5).tolist()}{flag}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _model_inputs(config: ExperimentConfig, N: float) -> dict:
    """Keyword inputs for the exact covariance, estimating sigma curves if needed."""
    kernel = config.walk_kernel()
    rate = config.rate()
    model = {"kernel": kernel, "theta": config.theta, "rate": rate}
    if rate.kind == "independent":
        return model
    safety = None if config.torus_side else config.torus_safety
    params = ensemble_params(config.sim_params(), N, config.grid, safety)
    if config.init == "poisson":
        pts = int(config.sigma_curve.get("points", 9))
        times = np.linspace(0.0, params.horizon, max(pts, 2))
        t, m, _ = estimate_sigma_curve(params, times, int(config.sigma_curve.get("replicates", 20)))
        model["sigma_curve"] = SigmaCurve(tuple(t.tolist()), tuple(m.tolist()))
    else:
        model["sigma_eq"] = _sigma_eq(config, params)[0]
    return model


def _sigma_eq(config: ExperimentConfig, params):
    spec = config.sigma_eq
    t_burn = spec.get("t_burn") or float(params.torus_side)
    return estimate_sigma_eq(params, t_burn, float(spec.get("t_avg", 20.0)), int(spec.get("replicates", 50)))


def cmd_verify(config: ExperimentConfig, out: Path) -> int:
    if config.dimension <= 2:
        limit_coefficient(config.dimension, config.theta, config.rate(), kernel=config.walk_kernel())
    summaries = {}
    for N in config.N_ladder:
        path = out / f"summary_N{_n_label(N)}.json"
        if not path.exists():
            simulate_N(config, out, N)
        summaries[N] = _strip(_read_stamped(path, config))
    comparisons, exact_var = [], []
    gate_ok = True
    t_last = config.grid[-1]
    for N, s in summaries.items():
        ens = EnsembleSummary.from_dict(s)
        model = _model_inputs(config, N)
        C, E = prelimit_cov_matrix(N, config.grid, config.init, **model)
        rep = compare(ens, C, target="prelimit_exact", reference_grid=config.grid,
                      threshold=config.gate, metadata={"N": N, "valid": ens.valid, "quad_error": E.tolist()})
        comparisons.append(rep.to_dict())
        gate_ok &= rep.passed and ens.valid
        exact_var.append(C[-1, -1])
        print(f"N = {_n_label(N)}  ({ens.n_ok} replicates)")
        print(rep.table())
    trend = None
    if config.dimension >= 3:
        rate = config.rate()
        sigma_eq = None
        if rate.kind != "independent":
            params = ensemble_params(config.sim_params(), config.N_ladder[-1], config.grid,
                                     None if config.torus_side else config.torus_safety)
            sigma_eq = _sigma_eq(config, params)[0]
        model = limit_coefficient(config.dimension, config.theta, rate, init=config.init, sigma_eq=sigma_eq,
                                  kernel=config.walk_kernel())
        limit_var = model.cov(t_last, t_last)
        trend = convergence_trend(config.N_ladder, exact_var, limit_var)
        print(f"exact Var(X^N_{t_last:g}) versus the {model.variant} limit")
        print(trend.table())
    payload = {"comparisons": comparisons, "trend": trend.to_dict() if trend else None, "passed": bool(gate_ok)}
    _write_json(out / "verify_report.json", payload, config)
    print("verify:", "PASS" if gate_ok else "FAIL")
    return EXIT_OK if gate_ok else EXIT_GATE


# ---------------------------------------------------------------------------
# sample-limit


def cmd_sample_limit(config: ExperimentConfig, out: Path) -> int:
    rate = config.rate()
    sigma_eq = None
    if rate.kind != "independent":
        params = ensemble_params(config.sim_params(), config.N_ladder[-1], config.grid,
                                 None if config.torus_side else config.torus_safety)
        sigma_eq = _sigma_eq(config, params)[0]
    model = limit_coefficient(config.dimension, config.theta, rate, init=config.init, sigma_eq=sigma_eq,
                              kernel=config.walk_kernel())
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(config.seed), spawn_key=(99,))))
    sample = sample_paths(model, config.grid, config.n_paths, rng)
    csv_path = out / "limit_paths.csv"
    with csv_path.open("w") as fh:
        fh.write(f"# config_hash={config.hash} version={__version__} variant={model.variant}\n")
        fh.write("path," + ",".join(f"t={t:g}" for t in config.grid) + "\n")
        for i, row in enumerate(sample.paths):
            fh.write(f"{i}," + ",".join(repr(float(v)) for v in row) + "\n")
    rep_grid = sorted(set(REPRESENTATION_GRID) | set(config.grid))
    disc = subfbm_representation_check(rep_grid, K=model.coefficient if model.variant == "SubFBM34" else 1.0)
    prov = {"model": model.to_dict(), "grid": config.grid, "n_paths": config.n_paths,
            "jitter": sample.jitter, "representation_grid": rep_grid, "representation_discrepancy": disc}
    _write_json(out / "limit_provenance.json", prov, config)
    print(f"{model.variant} coefficient {model.coefficient:.6g}; {config.n_paths} paths -> {csv_path}")
    print(f"sub-fBM representation discrepancy {disc:.2e}; jitter {sample.jitter:g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def cmd_report(config: ExperimentConfig, out: Path) -> int:
    found = False
    for path in sorted(out.glob("summary_N*.json")):
        found = True
        s = _read_stamped(path, config)
        cov = np.asarray(s["cov"], float)
        se = np.asarray(s["cov_se"], float)
        print(f"{path.name}: N={s['N']:g} replicates {s['n_ok']}/{s['replicates']} valid={s['valid']}")
        for i, t in enumerate(s["grid"]):
            print(f"  Var X_{t:g} = {cov[i, i]:.5f} +- {se[i, i]:.5f}   kurtosis {s['kurtosis'][i]}")
    vpath = out / "verify_report.json"
    if vpath.exists():
        found = True
        v = _read_stamped(vpath, config)
        print(f"verify: {'PASS' if v['passed'] else 'FAIL'}")
        for c in v["comparisons"]:
            print(f"  N={c['metadata']['N']:g}: max|z| = {c['max_abs_z']:.3f}")
        if v["trend"]:
            t = v["trend"]
            print(f"  trend monotone={t['monotone']} final gap={t['final_gap']:.4f}")
    for name in ("kernel_report.json", "limit_provenance.json"):
        p = out / name
        if p.exists():
            found = True
            _read_stamped(p, config)
            print(f"{name}: checksum ok")
    if not found:
        print(f"no outputs in {out}")
    return EXIT_OK


COMMANDS = {
    "analyze-kernel": cmd_analyze_kernel,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "sample-limit": cmd_sample_limit,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brwclt", description="Branching random walk occupation-time CLT toolkit")
    p.add_argument("--version", action="version", version=f"brwclt {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--config", type=Path, help="experiment config (JSON)")
        src.add_argument("--profile", choices=PROFILES, help="bundled experiment profile")
        sp.add_argument("--seed", type=int, help="master seed (overrides config)")
        sp.add_argument("--workers", type=int, help="worker processes (overrides config)")
        sp.add_argument("--out", type=Path, help="output directory (overrides config)")
    return p


def load_config(args) -> ExperimentConfig:
    if args.config:
        config = ExperimentConfig.load(args.config)
    else:
        config = ExperimentConfig.profile(args.profile or "d3-poisson")
    overrides = config.to_dict()
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.out is not None:
        overrides["output"] = str(args.out)
    return ExperimentConfig.from_dict(overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        out = Path(config.output)
        out.mkdir(parents=True, exist_ok=True)
        cfg_path = out / "config.json"
        if args.command != "report" or not cfg_path.exists():
            _write_json(cfg_path, {"config": config.to_dict()}, config)
        return COMMANDS[args.command](config, out)
    except DataIntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except BRWError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
