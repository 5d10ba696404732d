"""Command-line entry points: simulate, fit, compare, summarize, curves, basis."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .diagnostics import chain_diagnostics, split_rhat
from .errors import JointDispError
from .model import ModelSpec, VarianceModel, enumerate_models, read_spec, state_to_vector, write_spec
from .posterior import PosteriorChain, SamplerConfig, chain_seeds, run_chain
from .simulate import default_true_state, simulate_dataset
from .splines import build_basis, difference_matrix, penalty_matrix
from .waic import compute_waic, write_waic_table

log = logging.getLogger("jointdisp")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _grid(text: str) -> np.ndarray:
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        n = int(round((stop - start) / step))
        return start + step * np.arange(n + 1)
    return np.array(_floats(text))


def _config(args) -> SamplerConfig:
    return SamplerConfig(iterations=args.iters, burn_in=args.burnin, thin=args.thin, seed=args.seed)


def _fit_one(data, spec: ModelSpec, config: SamplerConfig, chains: int, out: Path, jobs: int = 1):
    out.mkdir(parents=True, exist_ok=True)
    write_spec(spec, out / "spec.ini")
    rngs = chain_seeds(config.seed, chains)
    if jobs > 1 and chains > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_chain, data, spec, config, None, c, rngs[c]) for c in range(chains)]
            results = [f.result() for f in futures]
    else:
        results = [run_chain(data, spec, config, chain_id=c, rng=rngs[c]) for c in range(chains)]
    io.write_draws(results, out / "draws.csv")
    io.write_loglik(results, data.ids, out / "loglik.csv")
    ll = np.concatenate([c.pointwise_loglik for c in results], axis=0)
    res = compute_waic(ll)
    write_waic_table([(spec.label, res)], out / "waic.csv")
    _write_diagnostics(results, out / "diagnostics.json")
    return res


def _population_columns(chain: PosteriorChain) -> list[int]:
    return [j for j, n in enumerate(chain.names) if not n.startswith(("b_", "log_sigma_"))]


def _write_diagnostics(chains, path: Path):
    report = {"chains": []}
    for ch in chains:
        if ch.S >= 10:
            rep = chain_diagnostics(ch, _population_columns(ch))
        else:
            rep = {"draws": ch.S, "acceptance": ch.acceptance, "clamp_count": ch.clamp_count}
        rep["chain"] = ch.chain_id
        report["chains"].append(rep)
    if len(chains) > 1 and chains[0].S >= 4:
        cols = _population_columns(chains[0])
        report["split_rhat"] = {
            chains[0].names[j]: split_rhat(np.stack([c.draws[:, j] for c in chains])) for j in cols
        }
    path.write_text(json.dumps(report, indent=2, sort_keys=True))


def cmd_simulate(args):
    spec = read_spec(args.spec)
    truth = default_true_state(spec)
    if args.truth:
        truth = io.read_chains(spec, args.truth)[0].state(0)
        if spec.variance_model is VarianceModel.EXCHANGEABLE and truth.log_sigma0 is None:
            truth.log_sigma0 = float(np.mean(truth.log_sigma))
    data, realized = simulate_dataset(
        truth, spec, args.n, _floats(args.schedule), args.censor, args.seed,
        jitter=args.jitter, log_sigma_sd=args.log_sigma_sd,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_dataset(data, out / "longitudinal.csv", out / "survival.csv")
    write_spec(spec, out / "spec.ini")
    truth_chain = PosteriorChain(spec=spec, N=data.N, draws=state_to_vector(realized, spec)[None, :],
                                 pointwise_loglik=np.zeros((1, data.N)), iterations=np.array([0]))
    io.write_draws([truth_chain], out / "truth.csv")
    print(f"simulated {data.N} subjects, {int(data.delta.sum())} events -> {out}")


def cmd_fit(args):
    spec = read_spec(args.spec)
    data = io.parse_dataset(args.long, args.surv)
    res = _fit_one(data, spec, _config(args), args.chains, Path(args.out), args.jobs)
    print(f"{spec.label}: WAIC={res.waic:.6f} lppd={res.lppd:.6f} p_waic={res.p_waic:.6f}")


def _compare_task(payload):
    data, spec, config, chains, out = payload
    return spec.label, _fit_one(data, spec, config, chains, out)


def cmd_compare(args):
    data = io.parse_dataset(args.long, args.surv)
    base = read_spec(args.spec) if args.spec else None
    kwargs = {}
    if base is not None:
        kwargs = dict(t_min=base.t_min, t_max=base.t_max, num_intervals=base.num_intervals,
                      piecewise_edges=base.piecewise_edges, priors=base.priors)
    models = enumerate_models(**kwargs)
    if args.models and args.models != "all":
        wanted = [m.strip() for m in args.models.split(",")]
        by_label = {m.label: m for m in models}
        missing = [w for w in wanted if w not in by_label]
        if missing:
            raise JointDispError(f"unknown model label(s): {', '.join(missing)}")
        models = [by_label[w] for w in wanted]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _config(args)
    payloads = [(data, m, config, args.chains, out / m.label) for m in models]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_compare_task, payloads))
    else:
        rows = [_compare_task(p) for p in payloads]
    write_waic_table(rows, out / "waic.csv")
    best = min(rows, key=lambda r: r[1].waic)
    print(f"fitted {len(rows)} models; lowest WAIC {best[1].waic:.3f} for {best[0]}")


def _load_run(run: Path):
    spec = read_spec(run / "spec.ini")
    return spec, io.read_chains(spec, run / "draws.csv", run / "loglik.csv")


def cmd_summarize(args):
    run = Path(args.run)
    _, chains = _load_run(run)
    rows = io.summarize(chains)
    out = Path(args.out) if args.out else run / "summary.csv"
    io.write_summary(rows, out)
    print(f"wrote {len(rows)} rows -> {out}")


def cmd_curves(args):
    run = Path(args.run)
    spec, chains = _load_run(run)
    grid = _grid(args.grid) if args.grid else np.linspace(spec.t_min, spec.t_max, 101)
    rows = io.export_curves(chains, spec, grid)
    out = Path(args.out) if args.out else run / "curves.csv"
    io.write_curves(rows, out)
    print(f"wrote {len(rows)} rows -> {out}")


def cmd_basis(args):
    basis = build_basis(args.tmin, args.tmax, args.s)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = _grid(args.grid) if args.grid else np.linspace(basis.t_min, basis.t_max, 101)
    io.write_basis(basis, grid, out / "basis.csv")
    D = difference_matrix(basis.Q)
    io.write_matrix(D, out / "difference.csv")
    io.write_matrix(penalty_matrix(D), out / "penalty.csv")
    print(f"Q={basis.Q} -> {out}")


def _sampler_flags(p):
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--iters", type=int, default=500_000)
    p.add_argument("--burnin", type=int, default=250_000)
    p.add_argument("--thin", type=int, default=25)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointdisp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a cohort")
    p.add_argument("--spec", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--schedule", default="0,0.8,1.6,2.4,3.2,4.0")
    p.add_argument("--censor", type=float, default=5.0)
    p.add_argument("--jitter", type=float, default=0.05)
    p.add_argument("--log-sigma-sd", type=float, default=0.0)
    p.add_argument("--truth", help="draw-format file with one row of true values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one model")
    p.add_argument("--spec", required=True)
    p.add_argument("--long", required=True)
    p.add_argument("--surv", required=True)
    _sampler_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="fit the model lattice and tabulate WAIC")
    p.add_argument("--spec", help="spec file supplying knots, grid and priors")
    p.add_argument("--long", required=True)
    p.add_argument("--surv", required=True)
    p.add_argument("--models", default="all", help="'all' or comma-separated model labels")
    _sampler_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("summarize", help="posterior summary table of a fit")
    p.add_argument("--run", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("curves", help="posterior curves of the spline functions")
    p.add_argument("--run", required=True)
    p.add_argument("--grid", help="start:stop:step or comma-separated times")
    p.add_argument("--out")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("basis", help="export basis, difference and penalty matrices")
    p.add_argument("--tmin", type=float, default=0.0)
    p.add_argument("--tmax", type=float, default=5.0)
    p.add_argument("--s", type=int, default=20)
    p.add_argument("--grid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_basis)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except JointDispError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
