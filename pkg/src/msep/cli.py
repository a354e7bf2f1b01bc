"""``msep`` command line: seeded experiments with JSON or CSV reports.

Every subcommand is a pure function of its resolved config.  Wall-clock
fields live under ``meta`` so the rest of a report is reproducible.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, formats
from .learner import (DEFAULT_BUDGET, empirical_risk, gauss_attack, learn_amu,
                      learn_amu_streaming, lowweight_attack, xz_independence_probe)
from .protocol import (DecisionRule, LowWeightAdversary, adversary_harness, coin_flip_adversary,
                       random_learner, run_ba_session, run_ka)
from .reductions import (AgreementOracle, ConstantDistinguisher, GradedOracle,
                         LabelCheckingOracle, PlantedAwareCheatLearner, RandomHypothesisLearner,
                         ReductionBudget, build_dlpn_distinguisher, hybrid_advantage,
                         pmu_identity, pmu_trial)
from .rng import Rng
from .taskgen import (ParityToyTask, Pairs, TaskParams, project_yz, sample_dataset, sample_dlpn,
                      sample_zeta)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_CHECK = 0, 2, 3, 4
SCHEMA_PATH = Path(__file__).with_name("report_schema.json")

COMMON = {"n": 32, "theta": None, "k": None, "seed": None, "trials": 1, "tau": 0.25,
          "rule": "threshold", "out": None, "format": "json", "check": False,
          "strict_seed": False}

DEFAULTS = {
    "gen-data": {},
    "learn": {"data": None, "test_size": 10_000},
    "probe-hardness": {"grid": "12,48", "trials": 100, "max_weight": None,
                       "budget": DEFAULT_BUDGET, "pairs": 64, "isd_iters": 20,
                       "probe_count": 100_000},
    "ba": {"trials": 200, "sabotage": False, "adv_sessions": 200, "max_weight": None,
           "budget": DEFAULT_BUDGET},
    "ka": {"trials": 10, "m_sessions": 128, "key_len": 64},
    "reduce": {"n": 16, "trials": 200, "t_budget": 20, "m_train": None, "hybrid_k": 8,
               "hybrid_trials": 10_000, "toy_n": 32, "graded": "0.25,0.5"},
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config


def load_config_file(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad config file {path}: {exc}") from exc
    return {key.replace("-", "_"): value for key, value in raw.items()}


def resolve(cmd: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(COMMON) | DEFAULTS[cmd]
    given = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    if getattr(args, "config", None):
        file_cfg = load_config_file(args.config)
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg |= file_cfg
    cfg |= given
    if cfg["seed"] is None:
        if cfg["strict_seed"]:
            raise ConfigError("--strict-seed requires an explicit --seed")
        cfg["seed"] = 0
    if cfg["trials"] < 1:
        raise ConfigError("trials must be >= 1")
    if cfg["format"] not in ("json", "csv"):
        raise ConfigError(f"unknown format {cfg['format']!r}")
    return cfg


def task_params(cfg: dict) -> TaskParams:
    try:
        return TaskParams(cfg["n"], cfg["theta"], cfg["k"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def decision_rule(cfg: dict) -> DecisionRule:
    try:
        return DecisionRule.exact() if cfg["rule"] == "exact" else DecisionRule.threshold(cfg["tau"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def trial_rng(seed: int, trial: int) -> Rng:
    return Rng(seed).child("trial", trial)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(cfg: dict) -> dict:
    params = task_params(cfg)
    if not cfg["out"]:
        raise ConfigError("gen-data needs --out")
    rng = trial_rng(cfg["seed"], 0)
    secret = sample_zeta(params, rng.child("secret"))
    data = sample_dataset(params, secret, params.k, rng.child("train"))
    payload = formats.dataset_to_bytes(data, params.theta)
    out = Path(cfg["out"])
    out.write_bytes(payload)
    sidecar = {"params": params.echo(), "seed": cfg["seed"], "trial": 0,
               "secret_sha256": secret.digest(), "count": len(data),
               "file_sha256": hashlib.sha256(payload).hexdigest()}
    Path(str(out) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    reloaded, theta = formats.read_dataset(out)
    roundtrip = formats.dataset_to_bytes(reloaded, theta) == payload
    return {"path": str(out), "count": len(data), "bytes": len(payload),
            "secret_sha256": sidecar["secret_sha256"], "file_sha256": sidecar["file_sha256"],
            "checks": {"roundtrip_identical": roundtrip}}


def _learn_one(params: TaskParams, secret, hyp, stats, rng: Rng, test_size: int) -> dict:
    test = project_yz(sample_dataset(params, secret, test_size, rng.child("test")))
    return {"recovered": hyp.w_hat == secret.w, "wrong_bits": (hyp.w_hat ^ secret.w).weight(),
            "risk_l0": empirical_risk(hyp, test, "l0"), "risk_l01": empirical_risk(hyp, test, "l01"),
            "vote_stats": stats.summary()}


def cmd_learn(cfg: dict) -> dict:
    rows = []
    if cfg["data"]:
        path = Path(cfg["data"])
        data, theta = formats.read_dataset(path)
        side = json.loads(Path(str(path) + ".json").read_text())
        params = TaskParams(data.n, theta, len(data))
        rng = trial_rng(side["seed"], side["trial"])
        secret = sample_zeta(params, rng.child("secret"))
        if secret.digest() != side["secret_sha256"]:
            raise formats.FormatError("regenerated secret does not match the sidecar digest")
        hyp, stats = learn_amu(data, data.n)
        rows.append(_learn_one(params, secret, hyp, stats, rng, cfg["test_size"]))
    else:
        params = task_params(cfg)
        for t in range(cfg["trials"]):
            rng = trial_rng(cfg["seed"], t)
            secret = sample_zeta(params, rng.child("secret"))
            hyp, stats = learn_amu_streaming(params, secret, params.k, rng.child("train"))
            rows.append(_learn_one(params, secret, hyp, stats, rng, cfg["test_size"]))
    recovered = sum(r["recovered"] for r in rows)
    rec_risk = [r["risk_l0"] for r in rows if r["recovered"]]
    result = {"params": params.echo(), "trials": len(rows), "recovered": recovered,
              "recovery_rate": recovered / len(rows),
              "mean_risk_l0_recovered": float(np.mean(rec_risk)) if rec_risk else None,
              "per_trial": rows}
    result["checks"] = {"recovery_rate_ge_0.95": result["recovery_rate"] >= 0.95}
    return result


def cmd_probe_hardness(cfg: dict) -> dict:
    grid = []
    for n in _int_list(cfg["grid"]):
        params = TaskParams(n, cfg["theta"])
        max_weight = cfg["max_weight"] if cfg["max_weight"] is not None else n
        lw_ok = lw_exceeded = isd_ok = 0
        for t in range(cfg["trials"]):
            rng = Rng(cfg["seed"]).child("probe", n).child("trial", t)
            secret = sample_zeta(params, rng.child("secret"))
            pairs = project_yz(sample_dataset(params, secret, cfg["pairs"], rng.child("data")))
            lw = lowweight_attack(pairs, n, max_weight, cfg["budget"])
            lw_ok += int(lw.success and lw.secret == secret)
            lw_exceeded += int(lw.budget_exceeded)
            if cfg["isd_iters"]:
                isd = gauss_attack(pairs, n, cfg["isd_iters"], rng.child("isd"))
                isd_ok += int(isd.success and isd.secret == secret)
        probe = xz_independence_probe(params, cfg["probe_count"],
                                      Rng(cfg["seed"]).child("xz", n))
        grid.append({"n": n, "theta": params.theta, "trials": cfg["trials"],
                     "max_weight": max_weight, "budget": cfg["budget"], "pairs": cfg["pairs"],
                     "lowweight_success_rate": lw_ok / cfg["trials"],
                     "lowweight_budget_exceeded_rate": lw_exceeded / cfg["trials"],
                     "isd_iters": cfg["isd_iters"], "isd_success_rate": isd_ok / cfg["trials"],
                     "xz_probe": probe})
    checks = {}
    for row in grid:
        if row["n"] <= 12:
            checks[f"n{row['n']}_attack_success_ge_0.9"] = row["lowweight_success_rate"] >= 0.9
        if row["n"] >= 48:
            checks[f"n{row['n']}_attack_success_le_0.05"] = row["lowweight_success_rate"] <= 0.05
        checks[f"n{row['n']}_xz_corr_le_0.02"] = row["xz_probe"]["max_abs_corr"] <= 0.02
    return {"grid": grid, "checks": checks}


def _conditional(results, beta: int) -> float | None:
    sel = [r.b_A == r.b_B for r in results if r.b_B == beta]
    return sum(sel) / len(sel) if sel else None


def cmd_ba(cfg: dict) -> dict:
    params, rule = task_params(cfg), decision_rule(cfg)
    root = Rng(cfg["seed"])
    learner = random_learner(root.child("sabotage")) if cfg["sabotage"] else None
    results = []
    for s in range(cfg["trials"]):
        res, _ = run_ba_session(params, params.k, rule, root.child("session", s),
                                learner=learner, session_id=s)
        results.append(res)
    agree = sum(r.agree for r in results)
    n = params.n
    max_weight = cfg["max_weight"] if cfg["max_weight"] is not None else n
    adversaries = {
        "coin_flip": coin_flip_adversary(root.child("coin")),
        "lowweight": LowWeightAdversary(n, max_weight, cfg["budget"]),
    }
    adv = {name: adversary_harness(a, params, params.k, cfg["adv_sessions"],
                                   root.child("adversary", i)).to_dict()
           for i, (name, a) in enumerate(adversaries.items())}
    result = {"params": params.echo(), "rule": rule.name, "sessions": len(results),
              "agreement": agree / len(results),
              "pr_agree_given_bB_1": _conditional(results, 1),
              "pr_agree_given_bB_0": _conditional(results, 0),
              "b_B_rate": sum(r.b_B for r in results) / len(results),
              "mean_disagreement": float(np.mean([r.alice_disagreement for r in results])),
              "adversaries": adv}
    result["checks"] = {
        "agreement_ge_0.9": result["agreement"] >= 0.9,
        "conditional_rates_ge_0.9": all(v is not None and v >= 0.9 for v in (
            result["pr_agree_given_bB_1"], result["pr_agree_given_bB_0"])),
    }
    return result


def cmd_ka(cfg: dict) -> dict:
    params, rule = task_params(cfg), decision_rule(cfg)
    runs = []
    for t in range(cfg["trials"]):
        res, _ = run_ka(params, params.k, cfg["m_sessions"], cfg["key_len"], rule,
                        Rng(cfg["seed"]).child("run", t), keep_transcripts=False)
        runs.append({"keys_equal": res.keys_equal, "raw_errors": res.raw_errors,
                     "key_A": "".join(map(str, res.key_A)), "key_B": "".join(map(str, res.key_B))})
    equal = sum(r["keys_equal"] for r in runs)
    result = {"params": params.echo(), "rule": rule.name, "runs": len(runs),
              "m_sessions": cfg["m_sessions"], "key_len": cfg["key_len"],
              "key_equal_rate": equal / len(runs),
              "mean_raw_errors": float(np.mean([r["raw_errors"] for r in runs])),
              "per_run": runs}
    result["checks"] = {"key_equal_rate_ge_0.95": result["key_equal_rate"] >= 0.95}
    return result


def dlpn_advantage(params: TaskParams, budget: ReductionBudget, instances: int, rng: Rng,
                   make_learner) -> dict:
    """Acceptance rates of the learner-derived distinguisher in both worlds."""
    cols = budget.columns(params)
    rates = {}
    for world in ("planted", "uniform"):
        accepts = 0
        for i in range(instances):
            r = rng.child(world, i)
            inst = sample_dlpn(params.n, cols, params.theta, "bernoulli_secret", world,
                               r.child("instance"))
            learner = make_learner(inst, r.child("learner"))
            distinguish = build_dlpn_distinguisher(learner, params, budget, r.child("dist"))
            accepts += distinguish(inst.public())
        rates[world] = accepts / instances
    return {"pr1_planted": rates["planted"], "pr1_uniform": rates["uniform"],
            "advantage": abs(rates["planted"] - rates["uniform"]), "instances": instances}


def pmu_accuracy(task: ParityToyTask, make_oracle, k: int, trials: int, rng: Rng) -> dict:
    records, truths = [], []
    for t in range(trials):
        r = rng.child("trial", t)
        concept = task.sample_concept(r.child("concept"))
        _, ys = task.sample_unlabeled(None, k + 1, r.child("inputs"))
        labels = task.label(concept, ys, None)
        train = Pairs(ys[:k], labels[:k])
        oracle = make_oracle(concept, train, r.child("oracle"))
        records.append(pmu_trial(oracle, train, (None, ys[k:]), k, r.child("pmu")))
        truths.append(int(labels.bits[k]))
    return pmu_identity(records, truths) | {"trials": trials}


def cmd_reduce(cfg: dict) -> dict:
    params = task_params(cfg)
    root = Rng(cfg["seed"])
    budget = ReductionBudget(cfg["t_budget"], cfg["m_train"])
    cheat = dlpn_advantage(params, budget, cfg["trials"], root.child("cheat"),
                           lambda inst, r: PlantedAwareCheatLearner(inst.secret, params.theta, r))
    rand = dlpn_advantage(params, budget, cfg["trials"], root.child("random"),
                          lambda inst, r: RandomHypothesisLearner(r))
    toy = ParityToyTask(cfg["toy_n"])
    hk, ht = cfg["hybrid_k"], cfg["hybrid_trials"]
    concept = toy.sample_concept(root.child("hybrid-concept"))
    hybrids = {
        "agreement_oracle": hybrid_advantage(AgreementOracle(toy, concept), toy, concept, hk, ht,
                                             root.child("hybrid", 0)).to_dict(),
        "constant_oracle": hybrid_advantage(ConstantDistinguisher(0), toy, concept, hk, ht,
                                            root.child("hybrid", 1)).to_dict(),
    }
    pmu = {
        "label_checking": pmu_accuracy(
            toy, lambda c, tr, r: LabelCheckingOracle(toy, c, tr.inputs), hk, ht,
            root.child("pmu", 0)),
        "constant": pmu_accuracy(toy, lambda c, tr, r: ConstantDistinguisher(0), hk, ht,
                                 root.child("pmu", 1)),
    }
    for i, eps in enumerate(_float_list(cfg["graded"])):
        pmu[f"graded_{eps:g}"] = pmu_accuracy(
            toy, lambda c, tr, r, eps=eps: GradedOracle(LabelCheckingOracle(toy, c, tr.inputs),
                                                        eps, r),
            hk, ht, root.child("pmu-graded", i)) | {"eps": eps}
    result = {"params": params.echo(),
              "budget": {"t_budget": budget.t_budget, "m_train": budget.train_size(params),
                         "p_eval": budget.p_eval, "threshold": budget.threshold},
              "cheat_learner": cheat, "random_learner": rand, "hybrids": hybrids, "pmu": pmu}
    result["checks"] = {
        "cheat_advantage_ge_0.9": cheat["advantage"] >= 0.9,
        "random_advantage_le_0.05": rand["advantage"] <= 0.05,
        "telescoping_exact": all(h["telescoping_exact"] for h in hybrids.values()),
    }
    return result


COMMANDS = {"gen-data": cmd_gen_data, "learn": cmd_learn, "probe-hardness": cmd_probe_hardness,
            "ba": cmd_ba, "ka": cmd_ka, "reduce": cmd_reduce}


# ---------------------------------------------------------------------------
# output


def _flatten(obj, prefix: str = "") -> list[tuple[str, object]]:
    if isinstance(obj, dict):
        out = []
        for key in obj:
            out += _flatten(obj[key], f"{prefix}.{key}" if prefix else str(key))
        return out
    if isinstance(obj, list):
        out = []
        for i, item in enumerate(obj):
            out += _flatten(item, f"{prefix}[{i}]")
        return out
    return [(prefix, obj)]


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value"])
    writer.writerows(_flatten({k: v for k, v in report.items() if k != "meta"}))
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msep", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"msep {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML file of key = value defaults; flags win")
        p.add_argument("--n", type=int, default=S)
        p.add_argument("--theta", type=float, default=S)
        p.add_argument("--k", type=int, default=S)
        p.add_argument("--seed", type=int, default=S)
        p.add_argument("--trials", type=int, default=S)
        p.add_argument("--tau", type=float, default=S)
        p.add_argument("--rule", choices=["exact", "threshold"], default=S)
        p.add_argument("--out", default=S, help="report path (dataset path for gen-data)")
        p.add_argument("--format", choices=["json", "csv"], default=S)
        p.add_argument("--check", action="store_true", default=S,
                       help="exit 4 when acceptance thresholds are missed")
        p.add_argument("--strict-seed", action="store_true", default=S,
                       help="refuse to run without an explicit --seed")
        if name == "learn":
            p.add_argument("--data", default=S, help="dataset written by gen-data")
            p.add_argument("--test-size", type=int, default=S)
        if name == "probe-hardness":
            p.add_argument("--grid", default=S, help="comma-separated n values")
            p.add_argument("--max-weight", type=int, default=S)
            p.add_argument("--budget", type=int, default=S)
            p.add_argument("--pairs", type=int, default=S)
            p.add_argument("--isd-iters", type=int, default=S)
            p.add_argument("--probe-count", type=int, default=S)
        if name == "ba":
            p.add_argument("--sabotage", action="store_true", default=S)
            p.add_argument("--adv-sessions", type=int, default=S)
            p.add_argument("--max-weight", type=int, default=S)
            p.add_argument("--budget", type=int, default=S)
        if name == "ka":
            p.add_argument("--m-sessions", type=int, default=S)
            p.add_argument("--key-len", type=int, default=S)
        if name == "reduce":
            p.add_argument("--t-budget", type=int, default=S)
            p.add_argument("--m-train", type=int, default=S)
            p.add_argument("--hybrid-k", type=int, default=S)
            p.add_argument("--hybrid-trials", type=int, default=S)
            p.add_argument("--toy-n", type=int, default=S)
            p.add_argument("--graded", default=S, help="comma-separated oracle strengths")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cmd = args.command
    started = time.perf_counter()
    try:
        cfg = resolve(cmd, args)
        results = COMMANDS[cmd](cfg)
    except ConfigError as exc:
        print(f"msep: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, formats.FormatError) as exc:
        print(f"msep: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    failed = sorted(name for name, ok in results["checks"].items() if not ok)
    report = {"command": cmd, "config": {k: cfg[k] for k in sorted(cfg)},
              "results": results, "failed_checks": failed,
              "meta": {"timestamp": datetime.now(timezone.utc).isoformat(),
                       "runtime_s": time.perf_counter() - started, "version": __version__}}
    status = EXIT_OK
    if cfg["check"] and failed:
        print(f"msep: check failed: {', '.join(failed)}", file=sys.stderr)
        status = EXIT_CHECK
    text = render(report, cfg["format"])
    dest = cfg["out"] if cmd != "gen-data" else None
    try:
        if dest:
            Path(dest).write_text(text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"msep: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return status


if __name__ == "__main__":
    sys.exit(main())
