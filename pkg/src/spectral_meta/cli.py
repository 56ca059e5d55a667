"""Experiment runner: ``python3 -m spectral_meta <subcommand> [flags]``.

Every subcommand writes deterministic CSVs under ``<out>/<subcommand>/``.
Asserted checks that fail are printed as a JSON list, written to
``failures.json`` and turned into a nonzero exit code.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagnostics, encoder, gradcheck, linalg, maml, mtr_linear, training
from .config import ConfigError, MtrConfig, Prop1Config, Prop3Config, RunConfig
from .tasks import STREAM_MISC, build_prop3, colinear_thetas, kappa_hat_closed_form, rng_for

THREADS_ENV = "SPECTRAL_META_THREADS"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def workers(n_jobs: int) -> int:
    try:
        cap = int(os.environ.get(THREADS_ENV, "1"))
    except ValueError:
        cap = 1
    return max(1, min(cap, n_jobs))


def fan_out(fn, items) -> list:
    """Map ``fn`` over ``items``; results come back in input order."""
    items = list(items)
    n = workers(len(items))
    if n == 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


class Outcome:
    """Collects asserted checks for one subcommand."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.failures = []

    def check(self, name: str, ok: bool, detail: str = "") -> bool:
        ok = bool(ok)
        print(f"{'PASS' if ok else 'FAIL'} {name}{': ' + detail if detail else ''}")
        if not ok:
            self.failures.append({"check": name, "detail": detail})
        return ok

    def finish(self) -> int:
        path = self.out_dir / "failures.json"
        if self.failures:
            text = json.dumps(self.failures, indent=2, sort_keys=True)
            print(text)
            path.write_text(text + "\n")
            return 1
        if path.exists():
            path.unlink()
        return 0


def _out_dir(base, name: str) -> Path:
    p = Path(base) / name
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load(cls, args):
    overrides = list(args.override or [])
    for key in ("seed", "seeds", "out"):
        v = getattr(args, key, None)
        if v is not None:
            overrides.append(f"{key}={v}")
    return cls.load(args.config, overrides)


# train ------------------------------------------------------------------------

SUMMARY_HEADER = ("seed", "accuracy", "global_kappa", "final_kappa_wn", "max_kappa_wn", "final_frob_wn")


def save_params(params, run_dir: Path) -> None:
    if isinstance(params, maml.ModelParams):
        encoder.save_checkpoint(params.encoder, run_dir / "encoder.ckpt")
        linalg.write_matrix_csv(params.head_w, run_dir / "head_w.csv")
        linalg.write_matrix_csv(params.head_b[None, :], run_dir / "head_b.csv")
    else:
        encoder.save_checkpoint(params, run_dir / "encoder.ckpt")


def load_params(cfg: RunConfig, run_dir: Path):
    enc = encoder.load_checkpoint(run_dir / "encoder.ckpt")
    if cfg.method == "protonet":
        return enc
    return maml.ModelParams(enc, linalg.read_matrix_csv(run_dir / "head_w.csv"),
                            linalg.read_matrix_csv(run_dir / "head_b.csv")[0])


def write_archive(archive: diagnostics.EpisodeArchive, path: Path) -> None:
    write_csv(path, ("seed", "stream", "index", "digest"),
              [(*k, d) for k, d in zip(archive.keys, archive.digests)])


def read_archive(cfg: RunConfig, seed: int, path: Path) -> diagnostics.EpisodeArchive:
    archive = diagnostics.EpisodeArchive(training.train_sampler(cfg, seed))
    for row in read_csv(path):
        archive.keys.append((int(row["seed"]), int(row["stream"]), int(row["index"])))
        archive.digests.append(row["digest"])
    return archive


def _max_finite(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float(np.max(v)) if v.size else float("nan")


def run_seed(job) -> tuple:
    """Train one seed, write its files and return its summary row."""
    cfg, seed, run_dir = job
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    res = training.train(cfg, seed)
    diagnostics.export_csv(res.trace, run_dir / "trace.csv")
    save_params(res.params, run_dir)
    write_archive(res.archive, run_dir / "archive.csv")
    kappas = res.trace.column("kappa_wn")
    frobs = res.trace.column("frob_wn")
    return (seed, res.evaluate(), res.global_kappa(), float(kappas[-1]), _max_finite(kappas), float(frobs[-1]))


def _seed_list(cfg) -> list:
    return [cfg.seed + i for i in range(cfg.seeds)]


def train_runs(cfg: RunConfig, out: Path) -> list:
    jobs = [(cfg, s, str(out / f"seed_{s}")) for s in _seed_list(cfg)]
    return fan_out(run_seed, jobs)


def write_summary(rows, out: Path) -> dict:
    write_csv(out / "summary.csv", SUMMARY_HEADER, rows)
    agg = {}
    for j, name in enumerate(SUMMARY_HEADER[1:], 1):
        agg[name] = training.mean_ci([r[j] for r in rows])
    write_csv(out / "aggregate.csv", ("metric", "mean", "ci95"), [(k, *v) for k, v in agg.items()])
    return agg


def cmd_train(args) -> int:
    """Train ProtoNet or MAML over a seed range; write traces, checkpoints and archives."""
    cfg = _load(RunConfig, args)
    out = _out_dir(cfg.out, "train")
    (out / "config.txt").write_text(cfg.dumps())
    agg = write_summary(train_runs(cfg, out), out)
    acc, ci = agg["accuracy"]
    print(f"{cfg.method} seeds={cfg.seeds} accuracy={acc:.4f} +/- {ci:.4f} "
          f"global_kappa={agg['global_kappa'][0]:.4g} max_kappa_wn={agg['max_kappa_wn'][0]:.4g}")
    return Outcome(out).finish()


def cmd_diag_replay(args) -> int:
    """Rebuild global kappa from saved checkpoints and archives; compare to the summary."""
    base = Path(args.out or RunConfig().out) / "train"
    cfg = RunConfig.load(base / "config.txt", list(args.override or []))
    outcome = Outcome(base)
    summary = {int(r["seed"]): r for r in read_csv(base / "summary.csv")}
    rows = []
    for seed in sorted(summary):
        run_dir = base / f"seed_{seed}"
        result = training.RunResult(cfg, seed, diagnostics.Trace(),
                                    read_archive(cfg, seed, run_dir / "archive.csv"),
                                    load_params(cfg, run_dir))
        try:
            kappa = result.global_kappa()
        except diagnostics.IntegrityError as exc:
            outcome.check(f"replay_seed_{seed}", False, str(exc))
            continue
        stored = float(summary[seed]["global_kappa"])
        same = fmt(kappa) == fmt(stored)
        rows.append((seed, stored, kappa, same))
        outcome.check(f"replay_seed_{seed}", same, f"stored={fmt(stored)} replayed={fmt(kappa)}")
    write_csv(base / "replay.csv", ("seed", "stored_kappa", "replayed_kappa", "identical"), rows)
    return outcome.finish()


# theorem1 ---------------------------------------------------------------------

def theorem1_seed(job) -> tuple:
    cfg, seed = job
    runs = {}
    for norm in (True, False):
        res = training.train_protonet(replace(cfg, normalize=norm), seed)
        runs[norm] = res
    frobs = runs[True].trace.column("frob_wn")
    exact = training.frob_is_exact(frobs, cfg.n_way)
    return (seed, runs[True].global_kappa(), runs[False].global_kappa(), exact,
            runs[True].evaluate(), runs[False].evaluate())


THEOREM1_HEADER = ("seed", "kappa_normalized", "kappa_unnormalized", "frob_exact",
                   "acc_normalized", "acc_unnormalized")


def theorem1_rows(cfg: RunConfig) -> list:
    cfg = replace(cfg, method="protonet")
    return fan_out(theorem1_seed, [(cfg, s) for s in _seed_list(cfg)])


def theorem1_verdict(rows, n_way: int, outcome: Outcome, min_fraction: float = 0.8) -> None:
    wins = sum(r[1] <= r[2] for r in rows)
    outcome.check("normalized_kappa_le_unnormalized", wins >= min_fraction * len(rows),
                  f"{wins}/{len(rows)} seeds")
    outcome.check("normalized_frob_exact", all(r[3] for r in rows),
                  f"frob_wn == sqrt({n_way}) to rounding in {sum(bool(r[3]) for r in rows)}/{len(rows)} traces")


def cmd_theorem1(args) -> int:
    """Paired normalized/unnormalized ProtoNet runs; compare kappa and accuracy."""
    cfg = _load(RunConfig, args)
    out = _out_dir(cfg.out, "theorem1")
    rows = theorem1_rows(cfg)
    write_csv(out / "theorem1.csv", THEOREM1_HEADER, rows)
    outcome = Outcome(out)
    theorem1_verdict(rows, cfg.n_way, outcome)
    return outcome.finish()


# prop1 ------------------------------------------------------------------------

PROP1_HEADER = ("gamma", "d", "seed", "step", "kappa", "pair_rank_deficient")


def prop1_trace(cfg: Prop1Config, gi: int, d: int, seed: int) -> maml.Prop1Trace:
    thetas = colinear_thetas(rng_for(seed, STREAM_MISC, gi, d), d, cfg.gammas[gi], cfg.steps, cfg.prefix)
    return maml.simulate_prop1(thetas, cfg.alpha, cfg.beta)


def prop1_grid(cfg: Prop1Config):
    """Yield (gamma, d, seed, trace) over the full grid in a fixed order."""
    for gi, gamma in enumerate(cfg.gammas):
        for d in cfg.dims:
            for seed in _seed_list(cfg):
                yield gamma, d, seed, prop1_trace(cfg, gi, d, seed)


def cmd_prop1(args) -> int:
    """Condition number of consecutive linear-regression meta-predictors on colinear tasks."""
    cfg = _load(Prop1Config, args)
    out = _out_dir(cfg.out, "prop1")
    outcome = Outcome(out)
    rows, bad = [], []
    for gamma, d, seed, trace in prop1_grid(cfg):
        rows += [(gamma, d, seed, e.step, e.kappa, e.pair_rank_deficient) for e in trace.entries]
        if trace.violations():
            bad.append(f"gamma={fmt(gamma)},d={d},seed={seed}")
    write_csv(out / "prop1.csv", PROP1_HEADER, rows)
    detail = f"{len(bad)} sequences with a kappa decrease" + (f", first {bad[0]}" if bad else "")
    if cfg.prefix == 1:
        outcome.check("kappa_non_decreasing", not bad, detail)
    else:
        print(f"REPORT kappa_non_decreasing (prefix={cfg.prefix}, not asserted): {detail}")
    return outcome.finish()


# prop3 ------------------------------------------------------------------------

PROP3_HEADER = ("eps", "kappa_w_star", "kappa_w_hat", "kappa_w_hat_closed_form",
                "star_residual_verbatim", "hat_residual_verbatim",
                "star_residual_corrected", "hat_residual_corrected")


def prop3_rows(cfg: Prop3Config) -> list:
    rows = []
    for eps in cfg.eps_list:
        verb = build_prop3(eps, cfg.dim, cfg.k_val)
        corr = build_prop3(eps, cfg.dim, cfg.k_val, corrected=True)
        rows.append((eps, linalg.condition_number(verb.w_star), linalg.condition_number(verb.w_hat),
                     kappa_hat_closed_form(eps),
                     np.max(np.abs(verb.star_residuals)), np.max(np.abs(verb.hat_residuals)),
                     np.max(np.abs(corr.star_residuals)), np.max(np.abs(corr.hat_residuals))))
    return rows


def prop3_verdict(rows, outcome: Outcome, tol: float = 1e-9) -> None:
    star = max(abs(r[1] * r[0] - 1.0) for r in rows)
    outcome.check("kappa_w_star_is_inverse_eps", star <= tol, f"max |kappa*eps - 1| = {star:.3g}")
    hat = max(abs(r[2] - r[3]) / r[3] for r in rows)
    outcome.check("kappa_w_hat_matches_closed_form", hat <= tol, f"max relative gap = {hat:.3g}")
    by_eps = sorted(rows, key=lambda r: -r[0])
    dist = [r[2] - 1.0 for r in by_eps]
    outcome.check("kappa_w_hat_approaches_one", all(b < a for a, b in zip(dist, dist[1:])),
                  "kappa_w_hat - 1 = " + ", ".join(f"{x:.3g}" for x in dist))


def cmd_prop3(args) -> int:
    """Constructed two-task example: kappa of the planted and alternative heads over epsilon."""
    cfg = _load(Prop3Config, args)
    out = _out_dir(cfg.out, "prop3")
    rows = prop3_rows(cfg)
    write_csv(out / "prop3.csv", PROP3_HEADER, rows)
    outcome = Outcome(out)
    prop3_verdict(rows, outcome)
    return outcome.finish()


# gradcheck --------------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    """Finite-difference checks of every analytic gradient."""
    out = _out_dir(args.out or "runs", "gradcheck")
    results = gradcheck.run_all(args.seed or 0)
    write_csv(out / "gradcheck.csv", ("suite", "max_rel_err", "tol", "passed"),
              [(r.suite, r.max_rel_err, r.tol, r.passed) for r in results])
    outcome = Outcome(out)
    for r in results:
        outcome.check(r.suite, r.passed, f"max relative error {r.max_rel_err:.3g}")
    return outcome.finish()


# mtr --------------------------------------------------------------------------

def _mtr_trial(job) -> mtr_linear.SweepRow:
    cfg, n1, kappa, seed = job
    return mtr_linear.run_trial(cfg.d, cfg.k, cfg.T, n1, cfg.n2, kappa, cfg.noise, seed, cfg.n_mc)


def mtr_sweep(cfg: MtrConfig) -> tuple:
    """n1 sweep at the first kappa, then kappa sweep at ``n1_fixed``; shared cells run once."""
    seeds = _seed_list(cfg)
    cells = [(n1, cfg.kappa_list[0]) for n1 in cfg.n1_list]
    cells += [(cfg.n1_fixed, k) for k in cfg.kappa_list if (cfg.n1_fixed, k) not in cells]
    jobs = [(cfg, n1, k, s) for n1, k in cells for s in seeds]
    rows = fan_out(_mtr_trial, jobs)
    med = {}
    for (n1, k) in cells:
        med[(n1, k)] = float(np.median([r.er for r in rows if r.n1 == n1 and r.kappa_planted == k]))
    return rows, med


def mtr_verdict(cfg: MtrConfig, med: dict, outcome: Outcome) -> None:
    by_n1 = [med[(n1, cfg.kappa_list[0])] for n1 in cfg.n1_list]
    outcome.check("er_median_decreasing_in_n1", all(b < a for a, b in zip(by_n1, by_n1[1:])),
                  ", ".join(f"n1={n}: {v:.4g}" for n, v in zip(cfg.n1_list, by_n1)))
    by_k = [med[(cfg.n1_fixed, k)] for k in cfg.kappa_list]
    outcome.check("er_median_non_decreasing_in_kappa", all(b >= a for a, b in zip(by_k, by_k[1:])),
                  ", ".join(f"kappa={fmt(k)}: {v:.4g}" for k, v in zip(cfg.kappa_list, by_k)))


def cmd_mtr(args) -> int:
    """Linear multi-task representation sweep: excess risk over n1 and kappa."""
    cfg = _load(MtrConfig, args)
    out = _out_dir(cfg.out, "mtr")
    rows, med = mtr_sweep(cfg)
    mtr_linear.write_sweep_csv(rows, out / "mtr_sweep.csv")
    outcome = Outcome(out)
    mtr_verdict(cfg, med, outcome)
    return outcome.finish()


# entry point ------------------------------------------------------------------

COMMANDS = {
    "train": cmd_train,
    "prop1": cmd_prop1,
    "prop3": cmd_prop3,
    "theorem1": cmd_theorem1,
    "gradcheck": cmd_gradcheck,
    "mtr": cmd_mtr,
    "diag-replay": cmd_diag_replay,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectral_meta", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0] if fn.__doc__ else None)
        p.add_argument("--config", type=Path, help="flat key = value config file")
        p.add_argument("--seed", type=int, help="master seed (first of the seed range)")
        p.add_argument("--seeds", type=int, help="number of consecutive seeds")
        p.add_argument("--out", help="output directory")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(json.dumps([{"check": "config", "detail": str(exc)}]), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
