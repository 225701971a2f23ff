"""Command-line front end.

Subcommands: ``run``, ``compare``, ``sweep``, ``validate-topology`` and
``theory``. Exit codes: 0 success, 1 usage or configuration error, 2
numerical divergence.
"""

from __future__ import annotations

import argparse
import difflib
import sys
from dataclasses import replace
from pathlib import Path

from . import harness, problems, theory
from .algorithms import ALGORITHMS, AlgoConfig
from .errors import ConfigParseError, DSpiderError, NonFiniteIterate
from .topology import build_complete, build_ring, load_matrix, validate

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2

DEFAULTS = {
    "algorithm": "dspider",
    "n": "8",
    "topology": "ring",
    "objective": "nonconvex-logistic",
    "dim": "20",
    "m": "4000",
    "reg_alpha": "0.1",
    "noise": "",
    "data_csv": "",
    "partition_mode": "shuffled",
    "eta": "0.05",
    "q": "16",
    "s1": "256",
    "s2": "16",
    "K": "1000",
    "seed": "0",
    "sampling": "replace",
    "eval_stride": "10",
    "timing": "false",
    "out_dir": "runs",
}

ALIASES = {
    "learning_rate": "eta",
    "lr": "eta",
    "step_size": "eta",
    "iterations": "K",
    "iters": "K",
    "batch_size": "s2",
    "workers": "n",
    "kind": "objective",
    "mode": "partition_mode",
}

THRESHOLDS = (1e-1, 3e-2, 1e-2)


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse flat ``key=value`` lines into a dict completed with defaults."""
    cfg = dict(DEFAULTS)
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            hint = ALIASES.get(key) or next(iter(difflib.get_close_matches(key, DEFAULTS, 1)), None)
            msg = f"{source}:{lineno}: unknown key {key!r}"
            if hint:
                msg += f"; did you mean {hint!r}?"
            raise ConfigParseError(msg)
        if key in seen:
            raise ConfigParseError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        cfg[key] = value
    return cfg


def format_config(cfg: dict) -> str:
    return "".join(f"{k}={cfg[k]}\n" for k in DEFAULTS)


def _typed(cfg, key, cast):
    try:
        return cast(cfg[key])
    except ValueError:
        raise ConfigParseError(f"key {key!r}: cannot parse {cfg[key]!r}") from None


def _bool(s):
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(s)


def build_experiment(cfg: dict):
    """Resolve a parsed config into ``(objective, shards, AlgoConfig)``."""
    n = _typed(cfg, "n", int)
    topo = cfg["topology"]
    if topo == "ring":
        W = build_ring(n)
    elif topo == "complete":
        W = build_complete(n)
    elif topo.startswith("file:"):
        W = validate(load_matrix(topo[5:]))
        if W.n != n:
            raise ConfigParseError(f"topology file has {W.n} workers but n={n}")
    else:
        raise ConfigParseError(f"key 'topology': expected ring, complete or file:<path>, got {topo!r}")
    seed = _typed(cfg, "seed", int)
    kind = cfg["objective"]
    if kind not in problems.KINDS:
        raise ConfigParseError(f"key 'objective': expected one of {problems.KINDS}, got {kind!r}")
    alpha = _typed(cfg, "reg_alpha", float)
    if cfg["data_csv"]:
        obj = problems.load_csv(cfg["data_csv"], kind, alpha)
    else:
        noise = _typed(cfg, "noise", float) if cfg["noise"] else None
        obj = problems.make_synthetic(
            kind, _typed(cfg, "dim", int), _typed(cfg, "m", int), seed, alpha, noise
        )
    shards = problems.partition(obj, n, cfg["partition_mode"], seed)
    if cfg["algorithm"] not in ALGORITHMS:
        raise ConfigParseError(
            f"key 'algorithm': expected one of {ALGORITHMS}, got {cfg['algorithm']!r}"
        )
    algo = AlgoConfig(
        algorithm=cfg["algorithm"],
        topology=W,
        eta=_typed(cfg, "eta", float),
        q=_typed(cfg, "q", int),
        s1=_typed(cfg, "s1", int),
        s2=_typed(cfg, "s2", int),
        seed=seed,
        sampling=cfg["sampling"],
    )
    return obj, shards, algo


def _outputs(out_dir: Path, stem: str, force: bool):
    csv_path, side = out_dir / f"{stem}.csv", out_dir / f"{stem}.config"
    if not force:
        for p in (csv_path, side):
            if p.exists():
                raise FileExistsError(f"{p} exists; pass --force to overwrite")
    return csv_path, side


def _run_one(obj, shards, algo, cfg, stem, force, threads):
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, side = _outputs(out_dir, stem, force)
    resolved = dict(cfg, algorithm=algo.algorithm, eta=repr(algo.eta), s1=str(algo.s1),
                    s2=str(algo.s2), q=str(algo.q))
    side.write_text(format_config(resolved))
    K = _typed(cfg, "K", int)
    stride = _typed(cfg, "eval_stride", int)
    timing = _typed(cfg, "timing", _bool)
    try:
        rec = harness.run(obj, shards, algo, None, K, stride, threads=threads, timing=timing)
    except NonFiniteIterate as exc:
        harness.write_csv(exc.record, csv_path)
        raise
    harness.write_csv(rec, csv_path)
    return rec, csv_path


def _load(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def _report(rec, csv_path, out):
    last = rec.rows[-1]
    n = rec.n
    print(f"{rec.config['algorithm']}: wrote {csv_path}", file=out)
    print(f"  final grad norm at mean iterate: {last.grad_norm_mean:.6g}", file=out)
    print(
        f"  gradient evaluations per worker: raw={last.cum_raw_evals / n:g} "
        f"paper={last.cum_paper_cost / n:g}",
        file=out,
    )


def cmd_run(args, out=None) -> int:
    out = out or sys.stdout
    cfg = _load(args.config)
    obj, shards, algo = build_experiment(cfg)
    rec, path = _run_one(obj, shards, algo, cfg, algo.algorithm, args.force, args.threads)
    _report(rec, path, out)
    return EXIT_OK


def summary_table(records, thresholds=THRESHOLDS):
    """Rows ``(threshold, algorithm, raw_per_worker, paper_per_worker)``; costs None if not reached."""
    rows = []
    for t in thresholds:
        for rec in records:
            hit = harness.cost_to_threshold(rec, t)
            n = rec.n
            if hit is None:
                rows.append((t, rec.config["algorithm"], None, None))
            else:
                rows.append((t, rec.config["algorithm"], hit[0] / n, hit[1] / n))
    return rows


def cmd_compare(args, out=None) -> int:
    out = out or sys.stdout
    algos = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    if len(algos) < 2:
        print("compare needs at least two algorithms", file=sys.stderr)
        return EXIT_CONFIG
    cfg = _load(args.config)
    summary = Path(cfg["out_dir"], "summary.csv")
    if summary.exists() and not args.force:
        raise FileExistsError(f"{summary} exists; pass --force to overwrite")
    obj, shards, base = build_experiment(cfg)
    records = []
    for a in algos:
        algo = replace(base, algorithm=a)
        rec, path = _run_one(obj, shards, algo, dict(cfg, algorithm=a), a, args.force, args.threads)
        records.append(rec)
        _report(rec, path, out)
    lines = ["threshold,algorithm,raw_evals_per_worker,paper_cost_per_worker"]
    print(f"{'threshold':>10}  {'algorithm':<9}  {'raw/worker':>12}  {'paper/worker':>12}", file=out)
    for t, a, raw, paper in summary_table(records):
        if raw is None:
            print(f"{t:>10g}  {a:<9}  {'NotReached':>12}  {'NotReached':>12}", file=out)
            lines.append(f"{t:g},{a},NotReached,NotReached")
        else:
            print(f"{t:>10g}  {a:<9}  {raw:>12g}  {paper:>12g}", file=out)
            lines.append(f"{t:g},{a},{raw:g},{paper:g}")
    summary.write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_sweep(args, out=None) -> int:
    out = out or sys.stdout
    cfg = _load(args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        print("sweep needs at least one value", file=sys.stderr)
        return EXIT_CONFIG
    sigma = args.sigma
    for v in values:
        c = dict(cfg)
        if args.axis == "epsilon":
            if sigma is None:
                obj, shards, _ = build_experiment(cfg)
                sigma = problems.heterogeneity(obj, shards).sigma_estimate
            s1, s2, q = theory.schedule(sigma, float(v))
            c.update(s1=str(s1), s2=str(s2), q=str(q))
        else:
            c[{"mode": "partition_mode"}.get(args.axis, args.axis)] = v
        obj, shards, algo = build_experiment(c)
        stem = f"{args.axis}_{v.replace(':', '_').replace('/', '_')}"
        rec, path = _run_one(obj, shards, algo, c, stem, args.force, args.threads)
        _report(rec, path, out)
    return EXIT_OK


def cmd_validate_topology(args, out=None) -> int:
    out = out or sys.stdout
    w = load_matrix(args.path)
    try:
        m = validate(w, require_admissible=False)
    except DSpiderError as exc:
        print(f"INADMISSIBLE ({exc})", file=out)
        return EXIT_CONFIG
    print(f"n        = {m.n}", file=out)
    print(f"lambda2  = {m.lambda2:.12g}", file=out)
    print(f"lambda_n = {m.lambda_n:.12g}", file=out)
    if m.admissible:
        print("ADMISSIBLE", file=out)
        return EXIT_OK
    reason = f"lambda2 = {m.lambda2:.6g}" if m.lambda2 >= 1 else f"lambda_n = {m.lambda_n:.6g}"
    print(f"INADMISSIBLE ({reason})", file=out)
    return EXIT_CONFIG


def cmd_theory(args, out=None) -> int:
    out = out or sys.stdout
    s1, s2, q = theory.schedule(args.sigma, args.epsilon)
    probe = theory.constants(args.lambda2, args.lambda_n, args.lipschitz, 1.0, q, s2, args.eta_variant)
    eta = theory.ETA_SAFETY * probe.eta_max
    tc = theory.constants(args.lambda2, args.lambda_n, args.lipschitz, eta, q, s2, args.eta_variant)
    rec = theory.recommend(
        args.epsilon, args.sigma, args.lipschitz, tc.c1, tc.c2, tc.d,
        args.f0_gap, args.zeta0, args.grad0_norm, args.eta_variant,
    )
    b = tc.b_n
    items = [
        ("lambda2", tc.lambda2),
        ("lambda_n", tc.lambda_n),
        ("L", tc.lipschitz),
        ("b_n", b.real if b.imag == 0 else b),
        ("|b_n|", tc.b_n_abs),
        ("C1", tc.c1),
        ("C2", tc.c2),
        ("D", tc.d),
        ("eta_max", tc.eta_max),
        ("epsilon", rec.epsilon),
        ("S1", rec.s1),
        ("S2", rec.s2),
        ("q", rec.q),
        ("eta", rec.eta),
        ("l", rec.l),
        ("K", rec.k_iterations),
        ("predicted_cost", rec.predicted_cost),
    ]
    if args.csv:
        print(",".join(k for k, _ in items), file=out)
        print(",".join(f"{v}" for _, v in items), file=out)
    else:
        width = max(len(k) for k, _ in items)
        for k, v in items:
            print(f"{k:<{width}} : {v}", file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dspider", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="flat key=value config file")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
        sp.add_argument("--threads", type=int, default=None,
                        help="intra-iteration threads (default: $DESPIDER_THREADS or all cores)")

    sp = sub.add_parser("run", help="run one algorithm")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="run several algorithms on the same problem")
    common(sp)
    sp.add_argument("--algorithms", default="dspider,dpsgd,d2")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", help="one run per value of a parameter")
    common(sp)
    sp.add_argument("--axis", required=True, choices=harness.SWEEP_AXES)
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.add_argument("--sigma", type=float, default=None, help="noise level for the epsilon axis")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("validate-topology", help="check a mixing-matrix file")
    sp.add_argument("path")
    sp.set_defaults(func=cmd_validate_topology)

    sp = sub.add_parser("theory", help="print constants and the parameter recommendation")
    sp.add_argument("--lambda2", type=float, required=True)
    sp.add_argument("--lambda-n", type=float, required=True)
    sp.add_argument("--lipschitz", type=float, required=True)
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--epsilon", type=float, required=True)
    sp.add_argument("--f0-gap", type=float, default=1.0)
    sp.add_argument("--zeta0", type=float, default=0.0)
    sp.add_argument("--grad0-norm", type=float, default=1.0)
    sp.add_argument("--eta-variant", choices=sorted(theory.ETA_VARIANTS), default=theory.DEFAULT_ETA_VARIANT)
    sp.add_argument("--csv", action="store_true")
    sp.set_defaults(func=cmd_theory)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if getattr(args, "threads", 1) is None:
        args.threads = harness.default_threads()
    try:
        return args.func(args)
    except NonFiniteIterate as exc:
        print(f"error: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DSpiderError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
