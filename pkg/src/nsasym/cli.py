"""Command-line driver: continue | expand | classify | construct.

Exit codes: 0 success, 1 numerical failure, 2 configuration or input error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from nsasym.cases import CaseError, classify_case
from nsasym.config import PRESETS, ConfigError, RunConfig, load_config, load_preset
from nsasym.expansion import ExpansionError, extract_expansion, read_expansion
from nsasym.field import SpectralField, write_field
from nsasym.forces import (ForceError, build_force_expansion, evaluate_plan, tail_bound, tail_norm,
                           truncated_pair, steady_residual, vanishing_limit_pair, zero_bs_subspace)
from nsasym.order import OrderError, build_sigma_table, ordinal_assign
from nsasym.solver import ContinuationRun, SolverError, continue_branch

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2

RATIOS = [("sigma1", "sigma0,1"), ("sigma1", "sigma0,2"), ("sigma1,1", "sigma0,2"),
          ("sigma2", "sigma1,1"), ("sigma1,2", "sigma2")]


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _config(args) -> RunConfig:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = load_preset(args.preset)
    else:
        raise ConfigError("a --config or --preset is required")
    return cfg.override(seed=args.seed)


# -- continue ------------------------------------------------------------------

def cmd_continue(args) -> int:
    cfg = _config(args)
    ms = cfg.mode_set()
    g, v_start = cfg.force(ms)
    a0 = cfg.positive("alpha_start")
    a1 = cfg.positive("alpha_end")
    if not a1 > a0:
        raise ConfigError("alpha_end must exceed alpha_start")
    policy = cfg.step_policy()
    run = continue_branch(g, a0, a1, policy, v_start if a0 == 1.0 else None)
    out = Path(args.out)
    run.write(out)
    print(f"{len(run.states)} states, alpha in [{run.alphas[0]:.6g}, {run.alphas[-1]:.6g}] -> {out}")
    if run.truncated:
        print(f"branch truncated: {run.diagnostic}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# -- expand --------------------------------------------------------------------

def cmd_expand(args) -> int:
    run = ContinuationRun.read(args.branch)
    if args.depth < 0:
        raise ConfigError("depth must be non-negative")
    exp = extract_expansion(run.fields, args.depth, alphas=run.alphas)
    out = Path(args.out)
    exp.write(out)
    print(f"expansion kind={exp.kind} depth={exp.depth} -> {out}")
    if exp.kind == "trivial":
        print("note: trivial expansion (the sequence is constant)")
    if exp.diagnostic:
        print(f"note: {exp.diagnostic}")
    return EXIT_OK


# -- classify ------------------------------------------------------------------

def write_sigma_csv(path, table) -> None:
    with open(path, "w", newline="") as fh:
        wr = _writer(fh)
        wr.writerow(["n", "alpha"] + table.labels)
        for r, n in enumerate(table.indices):
            wr.writerow([int(n), _fmt(table.alphas[r])] + [_fmt(s.values[r]) for s in table.sequences])


def write_ratios_csv(path, table) -> list[str]:
    pairs = [(a, b) for a, b in RATIOS if a in table and b in table]
    with open(path, "w", newline="") as fh:
        wr = _writer(fh)
        wr.writerow(["n", "alpha"] + [f"{a}/{b}" for a, b in pairs])
        for r, n in enumerate(table.indices):
            wr.writerow([int(n), _fmt(table.alphas[r])]
                        + [_fmt(table.get(a).values[r] / table.get(b).values[r]) for a, b in pairs])
    return [f"{a}/{b}" for a, b in pairs]


def cmd_classify(args) -> int:
    run = ContinuationRun.read(args.branch)
    exp = read_expansion(args.expansion, run.mode_set)
    policy = _config(args).compare_policy() if (args.config or args.preset) else None
    table = build_sigma_table(exp, k_max=args.k_max, policy=policy)
    report = classify_case(run, exp, table=table)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sigma_csv(out / "sigma.csv", table)
    write_ratios_csv(out / "ratios.csv", table)
    text = report.to_text()
    if table.decided:
        order = ordinal_assign(table)
        text += f"chain = {order.chain()}\n"
        for label, o in order.ordinals.items():
            text += f"ord[{label}] = {o}\n"
        for c in order.checks:
            text += f"check[{c.name}] = {'ok' if c.ok else 'FAILED'} ({c.detail})\n"
    else:
        for a, b in table.undecided_pairs():
            text += f"undecided = {a} vs {b}\n"
    (out / "case_report.txt").write_text(text)
    print(f"scenario {report.scenario} -> {out}")
    return EXIT_OK


# -- construct -----------------------------------------------------------------

def _construct_plan(cfg: RunConfig, out: Path) -> int:
    if cfg.text("space", "enumerate") == "zero-bs":
        ks = cfg.vectors("zero_bs_k")
        if len(ks) != 1:
            raise ConfigError("zero_bs_k must be a single wave vector")
        rep = zero_bs_subspace(ks[0], cfg.positive("zero_bs_M"), cfg.vectors("zero_bs_K3"))
        ms = rep.mode_set
        lines = [f"k = {' '.join(map(str, rep.k))}", f"modes = {len(ms)}",
                 f"max_defect = {rep.max_defect:.6e}", f"checks = {rep.n_checks}"]
        lines += [f"note = {n}" for n in rep.notes]
        out.mkdir(parents=True, exist_ok=True)
        (out / "zero_bs.txt").write_text("\n".join(lines) + "\n")
    else:
        ms = cfg.mode_set()
    w0 = cfg.field("w0", ms)
    plan = build_force_expansion(w0, cfg.number("M"), cfg.number("D0"), cfg.integer("K"), cfg.integer("seed", 0))
    plan.write(out / "plan")
    n = np.arange(0, cfg.integer("n_max", 20) + 1)
    alphas = cfg.positive("alpha_base", 10.0) * 2.0**n
    m_trunc = cfg.integer("m_trunc", plan.K)
    ev = evaluate_plan(plan, alphas, m_trunc, n_labels=n)
    ev.write_csv(out / "evaluation.csv")
    with open(out / "truncation.csv", "w", newline="") as fh:
        wr = _writer(fh)
        wr.writerow(["n", "alpha", "m", "residual", "tail", "tail_bound"])
        for k, a in zip(ev.n, ev.alphas):
            for m in range(plan.K + 1):
                v, g = truncated_pair(plan, a, m)
                wr.writerow([int(k), _fmt(a), m, _fmt(steady_residual(v, g, a)),
                             _fmt(tail_norm(plan, 1 / a, m)), _fmt(tail_bound(plan, 1 / a, m))])
    summary = [f"case = {plan.case_tag}", f"N0 = {ev.N0}",
               f"excluded = {','.join(map(str, ev.excluded))}",
               f"max_balance_residual = {plan.balance_residuals().max():.6e}"]
    (out / "evaluation.txt").write_text("\n".join(summary) + "\n")
    print(f"{plan.case_tag} plan K={plan.K} -> {out}")
    return EXIT_OK


def _construct_vanishing(cfg: RunConfig, out: Path) -> int:
    ms = cfg.mode_set()
    if cfg.text("u", "random") == "random":
        u = SpectralField.random(ms, np.random.default_rng(cfg.integer("seed", 0)))
    else:
        u = cfg.field("u", ms)
    n = np.arange(1, cfg.integer("n_max", 40) + 1)
    alphas = cfg.positive("alpha_base", 10.0) * 2.0**n
    vp = vanishing_limit_pair(u, cfg.positive("M"), alphas)
    out.mkdir(parents=True, exist_ok=True)
    write_field(out / "g.sf", vp.g)
    write_field(out / "w1.sf", vp.w1)
    write_field(out / "h1.sf", vp.h1)
    res = vp.residuals()
    with open(out / "pairs.csv", "w", newline="") as fh:
        wr = _writer(fh)
        wr.writerow(["n", "alpha", "residual", "v_hnorm", "g_hnorm"])
        for k, a, r in zip(n, alphas, res):
            wr.writerow([int(k), _fmt(a), _fmt(r), _fmt(vp.v(a).hnorm()), _fmt(vp.g_n(a).hnorm())])
    (out / "vanishing.txt").write_text(f"M = {cfg.positive('M')!r}\n|g| = {vp.g.hnorm()!r}\n"
                                       f"max_residual = {res.max():.6e}\n")
    print(f"|g| = {vp.g.hnorm():.17g} -> {out}")
    return EXIT_OK


def cmd_construct(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    task = cfg.text("task", "plan")
    if task == "plan":
        return _construct_plan(cfg, out)
    if task == "vanishing":
        return _construct_vanishing(cfg, out)
    raise ConfigError(f"unknown construct task {task!r}")


# -- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsasym", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key = value configuration file")
        sp.add_argument("--preset", choices=PRESETS, help="named configuration")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="override the configured seed")

    sp = sub.add_parser("continue", help="follow a steady branch in alpha")
    common(sp)
    sp.set_defaults(func=cmd_continue)

    sp = sub.add_parser("expand", help="extract the unitary expansion of a branch")
    sp.add_argument("branch", help="branch directory written by 'continue'")
    sp.add_argument("--depth", type=int, default=2)
    common(sp)
    sp.set_defaults(func=cmd_expand)

    sp = sub.add_parser("classify", help="order relations and limit scenario")
    sp.add_argument("branch")
    sp.add_argument("expansion")
    sp.add_argument("--k-max", type=int, default=2)
    common(sp)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("construct", help="force expansions and vanishing-limit pairs")
    common(sp)
    sp.set_defaults(func=cmd_construct)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ForceError, CaseError, ExpansionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, OrderError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
