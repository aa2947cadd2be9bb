"""Command-line front end: simulate, fit, infer, experiment.

Every command is deterministic given its flags (seeds travel in flags),
and exit codes follow one stable contract: 0 success, 1 I/O failure,
2 usage error, 3 data or fitting error.  Models persist as small JSON
documents so a fitted object can be inspected with a pager and carried
between machines without pickling concerns.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .core import Scores
from .distributions import BBParams, GDParams, LatentModel, NoiseParams
from .errors import CounterliftError
from .fitting import FitConfig, ScoreSample, fit_model
from .inference import QuadratureConfig, population_estimate, posterior_mean, posterior_mean_noisy
from .simulation import (
    DGP_ALIASES,
    ESTIMATORS,
    LEVELS,
    ExperimentReport,
    SimConfig,
    gen_bb,
    gen_gaussian,
    run_experiment,
)
from .uplift import UpliftConfig, predict_scores_batch, train_tlearner_arrays

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_DATA = 3

MODEL_SCHEMA = 1

# Category names for the four joint outcomes, attached here so the core
# stays label-free.  Outcome 1 is the event being scored (e.g. churn):
# p00 means the event happens under neither arm.
CATEGORY_LABELS = {
    "p00": "Sure thing",
    "p10": "Persuadable",
    "p01": "Do-not-disturb",
    "p11": "Lost cause",
}

_PROB_COLUMNS = ("p00_sure_thing", "p10_persuadable", "p01_do_not_disturb", "p11_lost_cause")


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def write_model(path: str | Path, model: LatentModel, sample_size: int, cfg: FitConfig) -> None:
    """Persist a fitted model as versioned JSON (lossless round trip)."""
    if isinstance(model.params, BBParams):
        params = {"m": list(model.params.as_array())}
    else:
        g = model.params
        params = {"a": [g.a1, g.a2, g.a3], "b": [g.b1, g.b2, g.b3]}
    digest = hashlib.sha256(repr(cfg).encode()).hexdigest()[:16]
    doc = {
        "schema": MODEL_SCHEMA,
        "family": model.family,
        "params": params,
        "kappa": None if model.noise is None else model.noise.kappa,
        "provenance": {"sample_size": sample_size, "config_digest": digest},
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_model(path: str | Path) -> tuple[LatentModel, dict]:
    """Load a model written by write_model; returns (model, provenance)."""
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != MODEL_SCHEMA:
        raise ValueError(f"unsupported model schema {doc.get('schema')!r}")
    family = doc["family"]
    raw = doc["params"]
    if "m" in raw:
        params: BBParams | GDParams = BBParams(*raw["m"])
    else:
        params = GDParams(*raw["a"], *raw["b"])
    kappa = doc.get("kappa")
    noise = None if kappa is None else NoiseParams(float(kappa))
    return LatentModel(family, params, noise), doc.get("provenance", {})


def _read_scores(path: str | Path) -> ScoreSample:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["z0", "z1"]:
            raise ValueError(f"{path}: expected header 'z0,z1', got {header!r}")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    return ScoreSample.from_pairs(np.array(rows, dtype=float).reshape(-1, 2))


def _fmt(value: float) -> str:
    """Full-precision decimal text that parses back to the same float."""
    return repr(float(value))


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        cfg = _sim_config(args, dgp=args.dgp)
    except ValueError as exc:
        return _fail(str(exc), EXIT_USAGE)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        children = np.random.SeedSequence(cfg.master_seed).spawn(cfg.repetitions)
        for i, child in enumerate(children):
            data_seed, learner_seed = child.spawn(2)
            rng = np.random.default_rng(data_seed)
            if cfg.dgp == "gaussian":
                ds = gen_gaussian(cfg, rng)
                learner_cfg = UpliftConfig(seed=int(learner_seed.generate_state(1)[0] % 2**31))
                model = train_tlearner_arrays(ds.features, ds.treatment, ds.outcome, cfg=learner_cfg)
                scores = predict_scores_batch(model, ds.features)
            else:
                ds = gen_bb(cfg, rng)
                scores = ds.observed_scores
            stem = f"{args.prefix}_rep{i:03d}"
            x_cols = [f"x{j + 1}" for j in range(ds.features.shape[1])]
            _write_csv(
                out / f"{stem}_campaign.csv",
                ["t", "y", *x_cols],
                [
                    [str(int(ds.treatment[r])), str(int(ds.outcome[r])), *map(_fmt, ds.features[r])]
                    for r in range(ds.n)
                ],
            )
            _write_csv(
                out / f"{stem}_scores.csv",
                ["z0", "z1"],
                [[_fmt(scores[r, 0]), _fmt(scores[r, 1])] for r in range(ds.n)],
            )
            _write_csv(
                out / f"{stem}_truth.csv",
                ["z0", "z1", "p00", "p10", "p01", "p11"],
                [
                    [*map(_fmt, ds.true_scores[r]), *map(_fmt, ds.true_probs[r])]
                    for r in range(ds.n)
                ],
            )
        print(f"wrote {3 * cfg.repetitions} files to {out}")
        return EXIT_OK
    except CounterliftError as exc:
        return _fail(str(exc), EXIT_DATA)
    except OSError as exc:
        return _fail(str(exc), EXIT_IO)


def cmd_fit(args: argparse.Namespace) -> int:
    try:
        sample = _read_scores(args.scores)
    except OSError as exc:
        return _fail(str(exc), EXIT_IO)
    except ValueError as exc:
        return _fail(str(exc), EXIT_DATA)
    except CounterliftError as exc:
        return _fail(str(exc), EXIT_DATA)
    cfg = FitConfig(optimizer_budget=args.budget, kappa=args.kappa)
    try:
        model = fit_model(sample, args.family, cfg)
        pop = population_estimate(model)
    except CounterliftError as exc:
        return _fail(str(exc), EXIT_DATA)
    try:
        write_model(args.out, model, sample.n, cfg)
    except OSError as exc:
        return _fail(str(exc), EXIT_IO)
    print(f"family: {model.family}")
    if isinstance(model.params, BBParams):
        print(f"m: {tuple(model.params.as_array())}")
    else:
        g = model.params
        print(f"a: {(g.a1, g.a2, g.a3)}")
        print(f"b: {(g.b1, g.b2, g.b3)}")
    if model.noise is not None:
        print(f"kappa: {model.noise.kappa}")
    print(
        "population estimate (p00, p10, p01, p11): "
        f"({pop.p00:.6f}, {pop.p10:.6f}, {pop.p01:.6f}, {pop.p11:.6f})"
    )
    print(f"model written to {args.out}")
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    try:
        model, _ = read_model(args.model)
        sample = _read_scores(args.scores)
    except OSError as exc:
        return _fail(str(exc), EXIT_IO)
    except (ValueError, KeyError) as exc:
        return _fail(str(exc), EXIT_DATA)
    except CounterliftError as exc:
        return _fail(str(exc), EXIT_DATA)
    q = QuadratureConfig()
    header = [
        "z0",
        "z1",
        *_PROB_COLUMNS,
        "category",
        "error_estimate",
        "ess",
        "status",
    ]
    rows: list[list[str]] = []
    failures = 0
    for i in range(sample.n):
        s = Scores(float(sample.z0[i]), float(sample.z1[i]))
        base = [_fmt(s.z0), _fmt(s.z1)]
        try:
            res = posterior_mean_noisy(model, s, q) if model.noisy else posterior_mean(model, s, q)
        except CounterliftError as exc:
            failures += 1
            rows.append(base + [""] * 4 + ["", "", "", f"failed: {exc}"])
            continue
        p = res.mean
        values = {"p00": p.p00, "p10": p.p10, "p01": p.p01, "p11": p.p11}
        top = max(values, key=values.get)
        rows.append(
            base
            + [_fmt(values[k]) for k in ("p00", "p10", "p01", "p11")]
            + [
                CATEGORY_LABELS[top],
                f"{res.error_estimate:.3e}",
                "" if res.ess is None else f"{res.ess:.1f}",
                "ok",
            ]
        )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    try:
        if args.out:
            Path(args.out).write_text(buf.getvalue())
        else:
            sys.stdout.write(buf.getvalue())
    except OSError as exc:
        return _fail(str(exc), EXIT_IO)
    if failures:
        return _fail(f"{failures} of {sample.n} rows failed", EXIT_DATA)
    return EXIT_OK


def _mean_std_text(mean: float, std: float) -> str:
    """Scientific mean(std) with a shared exponent, e.g. 1.79(5.62)e-3."""
    if mean == 0.0:
        return "0.00(0.00)e+0"
    exp = int(math.floor(math.log10(abs(mean))))
    scale = 10.0**exp
    return f"{mean / scale:.2f}({std / scale:.2f})e{exp:+d}"


def _report_rows(reports: dict[str, ExperimentReport]) -> list[dict[str, str]]:
    rows = []
    for dgp, report in reports.items():
        for est in ESTIMATORS:
            for level in LEVELS:
                cell = report.cell(est, level)
                row = {
                    "dgp": dgp,
                    "estimator": est,
                    "level": level,
                    "status": cell.status,
                    "mean": "",
                    "std": "",
                    "reason": "",
                }
                if cell.status == "ok":
                    row["mean"] = f"{cell.mean:.2e}"
                    row["std"] = f"{cell.std:.2e}"
                elif cell.status == "skipped":
                    row["reason"] = "over cell budget"
                else:
                    row["reason"] = cell.message or "failed"
                rows.append(row)
    return rows


def _render_csv(reports: dict[str, ExperimentReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(
        buf,
        fieldnames=["dgp", "estimator", "level", "status", "mean", "std", "reason"],
        lineterminator="\n",
    )
    writer.writeheader()
    writer.writerows(_report_rows(reports))
    return buf.getvalue()


def _render_table(reports: dict[str, ExperimentReport]) -> str:
    dgps = list(reports)
    lines = []
    for level in LEVELS:
        lines.append(f"{level}-level squared error, mean(std) across repetitions")
        widths = [max(len("estimator"), *(len(e) for e in ESTIMATORS))]
        columns = []
        for dgp in dgps:
            col = []
            for est in ESTIMATORS:
                cell = reports[dgp].cell(est, level)
                col.append(_mean_std_text(cell.mean, cell.std) if cell.status == "ok" else "--")
            columns.append(col)
            widths.append(max(len(dgp), *(len(v) for v in col)))
        header = "  ".join(
            name.ljust(widths[j]) for j, name in enumerate(["estimator", *dgps])
        )
        lines.append(header)
        lines.append("-" * len(header))
        for i, est in enumerate(ESTIMATORS):
            cells = [est.ljust(widths[0])]
            cells += [columns[j][i].ljust(widths[j + 1]) for j in range(len(dgps))]
            lines.append("  ".join(cells).rstrip())
        lines.append("")
    return "\n".join(lines)


def _sim_config(args: argparse.Namespace, dgp: str) -> SimConfig:
    kwargs = dict(
        dgp=dgp,
        n_samples=args.n,
        repetitions=args.reps,
        master_seed=args.seed,
        copula=args.copula,
        rho=args.rho,
        noise_kappa=args.kappa,
        n_features=args.features,
    )
    if getattr(args, "threads", None) is not None:
        kwargs["threads"] = args.threads
    if getattr(args, "cell_budget", None) is not None:
        kwargs["cell_budget_s"] = args.cell_budget
    if getattr(args, "fit_budget", None) is not None:
        kwargs["fit_budget"] = args.fit_budget
    return SimConfig(**kwargs)


def cmd_experiment(args: argparse.Namespace) -> int:
    dgps = [args.dgp] if args.dgp else ["bivariate-beta", "gaussian"]
    reports: dict[str, ExperimentReport] = {}
    try:
        for dgp in dgps:
            cfg = _sim_config(args, dgp=dgp)
            reports[cfg.dgp] = run_experiment(cfg)
    except ValueError as exc:
        return _fail(str(exc), EXIT_USAGE)
    text = _render_csv(reports) if args.format == "csv" else _render_table(reports)
    try:
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        return _fail(str(exc), EXIT_IO)
    return EXIT_OK


def _add_sim_flags(p: argparse.ArgumentParser, n_default: int = 5000, reps_default: int = 1) -> None:
    p.add_argument("--n", type=int, default=n_default, help="records per repetition")
    p.add_argument("--reps", type=int, default=reps_default, help="number of repetitions")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--copula", default="comonotone", help="joint-outcome copula (gaussian process)")
    p.add_argument("--rho", type=float, default=0.5, help="gaussian-copula correlation")
    p.add_argument("--kappa", type=float, default=250.0, help="beta observation noise (bivariate-beta process)")
    p.add_argument("--features", type=int, default=3, help="feature dimension (gaussian process)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="counterlift",
        description="Counterfactual outcome probabilities from uplift scores.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate synthetic campaign data")
    p_sim.add_argument("--dgp", default="gaussian", help="gaussian or bivariate-beta (alias: bb, dirichlet)")
    _add_sim_flags(p_sim)
    p_sim.add_argument("--out", default=".", help="output directory")
    p_sim.add_argument("--prefix", default="sim", help="output file prefix")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="fit a latent model to a score file")
    p_fit.add_argument("--scores", required=True, help="CSV with header z0,z1")
    p_fit.add_argument("--family", required=True, choices=["bb", "nbb", "gbb", "ngbb"])
    p_fit.add_argument("--out", default="model.json", help="model file to write")
    p_fit.add_argument("--kappa", type=float, default=None, help="fixed observation-noise kappa")
    p_fit.add_argument("--budget", type=int, default=2000, help="likelihood evaluations for gbb/ngbb")
    p_fit.set_defaults(func=cmd_fit)

    p_inf = sub.add_parser("infer", help="posterior means for each score row")
    p_inf.add_argument("--model", required=True, help="model file from fit")
    p_inf.add_argument("--scores", required=True, help="CSV with header z0,z1")
    p_inf.add_argument("--out", default=None, help="output CSV (stdout when omitted)")
    p_inf.set_defaults(func=cmd_infer)

    p_exp = sub.add_parser("experiment", help="repeated-simulation error tables")
    p_exp.add_argument("--dgp", default=None, help="restrict to one process (default: both)")
    _add_sim_flags(p_exp, reps_default=30)
    p_exp.add_argument("--threads", type=int, default=None, help="worker threads for repetitions")
    p_exp.add_argument("--cell-budget", type=float, default=None, dest="cell_budget",
                       help="per-repetition cell budget in estimated seconds")
    p_exp.add_argument("--fit-budget", type=int, default=None, dest="fit_budget",
                       help="likelihood evaluations for gbb/ngbb fits")
    p_exp.add_argument("--format", choices=["table", "csv"], default="table")
    p_exp.add_argument("--out", default=None, help="write the report here instead of stdout")
    p_exp.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
