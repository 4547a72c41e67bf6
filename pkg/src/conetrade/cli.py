"""Command-line entry points: benchmark batches, certificate tables, terminal
state certification, and the live session service."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bench
from .theory import (
    TheoryParams,
    angle_bound,
    epsilon_bounds,
    pareto_certify,
    smoothness_constant,
    solve_kappa,
)
from .trading import OfferLimits, QuadraticUtility


def _bench(args) -> int:
    algorithms = [a.strip() for a in args.algo.split(",") if a.strip()]
    for algo in algorithms:
        if algo not in bench.ALGORITHMS:
            print(f"unknown algorithm {algo!r}; choices: {', '.join(bench.ALGORITHMS)}", file=sys.stderr)
            return 2
    cfg = bench.ScenarioConfig(n=args.n, rho=args.rho, seed=args.seed, mode=args.mode)
    sink = None
    if args.save_transcripts:
        tdir = Path(args.out) / "transcripts"
        tdir.mkdir(parents=True, exist_ok=True)

        def sink(algo, index, transcript):
            (tdir / f"{algo}-{index:04d}.jsonl").write_text(transcript.to_jsonl())

    results = bench.run_batch(
        algorithms,
        cfg,
        n_scenarios=args.scenarios,
        budget=args.budget,
        gca_update_interval=args.gca_update_interval,
        transcript_sink=sink,
    )
    paths = bench.emit_results(results, args.out, fmt=args.format)
    for p in paths:
        print(p)
    return 0


def _kappa(args) -> int:
    rows = []
    k_values = range(args.k, (args.k_max or args.k) + 1)
    for k in k_values:
        if k < args.n:
            continue
        kappa = solve_kappa(args.n, k)
        row = {
            "n": args.n,
            "k": k,
            "kappa": kappa,
            "angle_bound": angle_bound(args.n, k),
        }
        params = TheoryParams(
            n=args.n, k=k, d=args.d, beta=args.beta, L=args.L, delta=args.delta, kappa=kappa
        )
        row["eps_case2"] = epsilon_bounds(params, 2)
        # Case 1 is vacuous at k = n (the angle bound is pi, its sine zero).
        row["eps_case1"] = epsilon_bounds(params, 1) if k > args.n else ""
        rows.append(row)
    writer = csv.DictWriter(sys.stdout, fieldnames=["n", "k", "kappa", "angle_bound", "eps_case1", "eps_case2"])
    writer.writeheader()
    writer.writerows(rows)
    return 0


def _certify(args) -> int:
    lines = [json.loads(line) for line in Path(args.transcript).read_text().splitlines() if line.strip()]
    header = next(r for r in lines if r.get("type") == "header")
    events = [r for r in lines if r.get("type") == "event"]
    if not events:
        print("transcript has no events", file=sys.stderr)
        return 2
    utils = header.get("utilities")
    if not utils:
        print("transcript header lacks utilities; rerun bench with --save-transcripts", file=sys.stderr)
        return 2
    f_A = QuadraticUtility.from_json(utils["f_A"])
    f_B = QuadraticUtility.from_json(utils["f_B"])
    last = events[-1]
    S_A = np.asarray(last["S_A"], dtype=float)
    S_B = np.asarray(last["S_B"], dtype=float)
    cfg = header.get("config", {})
    n = int(header.get("n", len(S_A)))
    d = float(header.get("offer_norm", 5.0 * math.sqrt(n)))
    limits = OfferLimits(d, cfg.get("per_category_cap"))
    if args.eps == "auto":
        runs = [e.get("cr_run") for e in events if e.get("cr_run") is not None]
        k = sum(1 for e in events if e.get("cr_run") == runs[-1]) if runs else n
        k = max(k, n)
        beta = smoothness_constant(f_B)
        kappa = solve_kappa(n, k)
        params = TheoryParams(n=n, k=k, d=d, beta=beta, L=0.0, delta=limits.norm_cap, kappa=kappa)
        eps = epsilon_bounds(params, 2)
        print(f"k={k} kappa={kappa:.6f} beta={beta:.6f} eps={eps:.6f}")
    else:
        eps = float(args.eps)
    certified, witness = pareto_certify(S_A, S_B, f_A, f_B, eps, limits, grid_step=args.grid_step)
    if certified:
        print(f"certified: no feasible grid trade improves both agents by more than {eps}")
        return 0
    print(f"NOT certified: witness trade {witness.tolist()}")
    return 1


def _serve(args) -> int:
    import uvicorn

    from .service import create_app
    from .session import SessionManager

    app = create_app(SessionManager(data_dir=args.data_dir))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="trade", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="run benchmark batches and emit offer-benefit curves")
    p.add_argument("--algo", required=True, help="comma-separated list: " + ",".join(bench.ALGORITHMS))
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--scenarios", type=int, default=100)
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--mode", choices=["continuous", "discrete"], default="discrete")
    p.add_argument("--seed", type=int, default=10)
    p.add_argument("--gca-update-interval", type=int, default=10)
    p.add_argument("--out", default="results")
    p.add_argument("--format", choices=["csv", "json", "both"], default="both")
    p.add_argument("--save-transcripts", action="store_true")
    p.set_defaults(func=_bench)

    p = sub.add_parser("kappa", help="emit kappa / epsilon tables as CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--d", type=float, default=5.0 * math.sqrt(3))
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=5.0 * math.sqrt(3))
    p.set_defaults(func=_kappa)

    p = sub.add_parser("certify", help="certify a transcript's terminal state on the trade grid")
    p.add_argument("--transcript", required=True)
    p.add_argument("--eps", default="auto")
    p.add_argument("--grid-step", type=float, default=1.0)
    p.set_defaults(func=_certify)

    p = sub.add_parser("serve", help="run the live negotiation HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--data-dir", default=None)
    p.set_defaults(func=_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
