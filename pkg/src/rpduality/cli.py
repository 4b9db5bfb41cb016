"""Command-line front end.

Exit status: 0 when every checked residual is within tolerance, 1 when a
check fails, 2 on usage or parse errors.
"""

from __future__ import annotations

import argparse
import io as _stdio
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import plq
from .io import ParseError, fmt, parse_document, problem_from_document
from .plq import PLQFunction, PLQParseError

SUMMARY_COLUMNS = [
    "instance", "primal_value", "dual_value", "gap", "kkt1", "kkt2", "kkt3", "kkt4", "iterations", "wall_ms",
]


@dataclass
class RunConfig:
    command: str
    paths: list
    tol_gap: float = 1e-5
    tol_kkt: float = 1e-5
    seed: int = 0
    out: Path | None = None
    parallel: int = 1
    timing: bool = False

    def __post_init__(self):
        if not (self.tol_gap > 0 and self.tol_kkt > 0):
            raise ValueError("tolerances must be positive")
        if self.parallel < 1:
            raise ValueError("--parallel needs a positive worker count")


class Report:
    """Collects output files and check lines; written in one pass at the end."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.files: dict[str, list[str]] = {}
        self.checks: list[tuple[str, bool, str]] = []
        self.text: list[str] = []

    def check(self, name: str, ok: bool, detail: str) -> None:
        self.checks.append((name, bool(ok), detail))

    def add_rows(self, filename: str, header: list[str], rows: list[list[str]]) -> None:
        lines = self.files.setdefault(filename, [",".join(header)])
        lines.extend(",".join(r) for r in rows)

    @property
    def ok(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def emit(self, stream) -> None:
        out = self.cfg.out
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        for name, lines in self.files.items():
            body = "\n".join(lines) + "\n"
            if out is not None:
                (out / name).write_text(body)
            else:
                stream.write(f"== {name}\n{body}")
        for line in self.text:
            stream.write(line + "\n")
        for name, ok, detail in self.checks:
            stream.write(f"{'PASS' if ok else 'FAIL'} {name} {detail}\n")
        stream.write(f"summary: {sum(ok for _, ok, _ in self.checks)}/{len(self.checks)} checks passed\n")


# ------------------------------------------------------------------ commands
def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        err = ParseError(f"cannot read file: {exc.strerror}")
        err.source = path
        raise err from None


def _load(path: str, parse):
    """Run ``parse`` on the file text, tagging parse errors with the path."""
    text = _read(path)
    try:
        return parse(text)
    except PLQParseError as exc:
        exc.source = path
        raise


def cmd_conjugate(cfg: RunConfig, rep: Report, at: list[float]) -> None:
    f = _load(cfg.paths[0], PLQFunction.from_text)
    if not f.is_proper:
        err = ParseError("the function is improper (empty domain)")
        err.source = cfg.paths[0]
        raise err
    fc, rec = plq.conjugate(f), plq.recession(f)
    rep.text += ["# function", f.to_text().rstrip(), "# conjugate", fc.to_text().rstrip(),
                 "# recession", rec.to_text().rstrip(), "# subdifferential"]
    points = at if at else (f.vertices() or [0.0])
    for x in points:
        sub = plq.subdifferential(f, x)
        shown = "empty" if sub.empty else f"[{fmt(sub.lo)}, {fmt(sub.hi)}]"
        rep.text.append(f"x={fmt(x)} value={fmt(f.value(x))} subdiff={shown}")
    err = plq.max_probe_difference(plq.conjugate(fc), f)
    rep.check("biconjugate", err <= 1e-9, f"max_diff={fmt(err)}")
    sig = plq.support_function(fc.domain_lo, fc.domain_hi)
    err = plq.max_probe_difference(rec, sig)
    rep.check("recession_is_support_of_conjugate_domain", err <= 1e-9, f"max_diff={fmt(err)}")


def cmd_norms(cfg: RunConfig, rep: Report) -> None:
    from .measures import m_inf_norm, norm_attaining_process, pairing
    from .tree import (
        MAX_ENUM_LEAVES, MAX_ENUM_PERIODS, is_adapted, optional_projection, r1_norm, r1_norm_enumerated,
    )

    doc = _load(cfg.paths[0], parse_document)
    tree = doc.tree
    if tree is None:
        raise ParseError("norms needs a tree section")
    small = tree.horizon <= MAX_ENUM_PERIODS and tree.n_leaves <= MAX_ENUM_LEAVES
    for name, v in doc.processes.items():
        if v.ndim == 3:
            if not is_adapted(tree, v):
                rep.text.append(f"process {name} is raw; using its optional projection")
            v = optional_projection(tree, v)
        val = r1_norm(tree, v)
        rep.text.append(f"r1_norm {name} = {fmt(val)}")
        if small:
            err = abs(val - r1_norm_enumerated(tree, v))
            rep.check(f"r1_norm_{name}_matches_enumeration", err <= 1e-12, f"diff={fmt(err)}")
    for name, theta in doc.measures.items():
        val = m_inf_norm(tree, theta)
        rep.text.append(f"m_inf_norm {name} = {fmt(val)}")
        if small:
            err = abs(pairing(tree, norm_attaining_process(tree, theta), theta) - val)
            rep.check(f"m_inf_norm_{name}_attained", err <= 1e-9, f"diff={fmt(err)}")


def cmd_verify(cfg: RunConfig, rep: Report) -> None:
    from .functionals import FunctionalInstance, conjugate_bruteforce, EJ, fenchel_gap, interchange_check
    from .io import assemble_integrands
    from .testing import break_inclusion, zero_gap_pair

    doc = _load(cfg.paths[0], parse_document)
    if doc.tree is None:
        raise ParseError("verify needs a tree section")
    inst = FunctionalInstance(doc.tree, assemble_integrands(doc, "h", range(doc.tree.n_nodes)))
    rng = np.random.default_rng(cfg.seed)
    worst_bi = worst_rec = 0.0
    for hn, hs in zip(inst.h, inst.h_star):
        for f, fc in zip(hn.coords, hs.coords):
            worst_bi = max(worst_bi, plq.max_probe_difference(plq.conjugate(fc), f))
            sig = plq.support_function(fc.domain_lo, fc.domain_hi)
            worst_rec = max(worst_rec, plq.max_probe_difference(plq.recession(f), sig))
    rep.check("biconjugacy", worst_bi <= 1e-9, f"max_diff={fmt(worst_bi)}")
    rep.check("recession_identity", worst_rec <= 1e-9, f"max_diff={fmt(worst_rec)}")

    fs, ws = [], []
    for n, hn in enumerate(inst.h):
        for f in hn.coords:
            if plq.minimize(f)[0] > -math.inf:
                fs.append(f)
                ws.append(inst.tree.prob[n] * inst.tree.mu[n])
    if fs:
        res = interchange_check(fs, ws)
        rep.check("interchange", res.residual <= 1e-12, f"residual={fmt(res.residual)}")

    v, theta = zero_gap_pair(inst, rng)
    gap = fenchel_gap(inst, v, theta)
    rep.check("zero_gap_pair_inclusions", abs(gap.gap) <= 1e-6 * (1 + abs(gap.gap)) and gap.inclusions_hold(1e-6),
              f"gap={fmt(gap.gap)} ac={fmt(gap.worst_ac)} sing={fmt(gap.worst_sing)}")
    worst = math.inf
    for _ in range(20):
        v2, th2 = break_inclusion(inst, v, theta, rng)
        worst = min(worst, fenchel_gap(inst, v2, th2).gap)
    rep.check("perturbed_pairs_positive_gap", worst > 0, f"min_gap={fmt(worst)}")

    if inst.tree.horizon <= 3 and inst.tree.n_leaves <= 8:
        coarse = conjugate_bruteforce(inst, theta, 200)
        fine = conjugate_bruteforce(inst, theta, 800)
        J = EJ(inst, theta)
        ok = coarse.value <= J + 1e-9 and J - fine.value <= fine.bound + 1e-9 and fine.bound * 4 <= coarse.bound * (1 + 1e-9)
        rep.check("bruteforce_conjugate", ok,
                  f"J={fmt(J)} grid={fmt(fine.value)} bound={fmt(fine.bound)} coarse_bound={fmt(coarse.bound)}")


def _solve_rows(prob, tol_gap: float, tol_kkt: float, timing: bool):
    import warnings

    from .control import SingularControlSolver

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = SingularControlSolver(tol_gap=tol_gap, tol_kkt=tol_kkt).fit(prob).result_
    k = res.kkt.maxima()
    summary = [prob.name, fmt(res.primal.value), fmt(res.dual.value), fmt(res.gap),
               *(fmt(x) for x in k), str(res.n_iter), fmt(round(res.wall_ms, 3)) if timing else "-"]
    tree = prob.tree
    nodes = []
    for n in range(tree.n_nodes):
        row = [prob.name, str(n), str(int(tree.time[n]))]
        for arr in (res.primal.u, res.primal.s, res.primal.z, res.primal.zdot, res.dual.op, res.dual.q):
            row += [fmt(x) for x in arr[n]]
        leaf_idx = np.flatnonzero(tree.leaves == n)
        term = res.kkt.terminal[leaf_idx[0]] if leaf_idx.size else 0.0
        row += [fmt(res.kkt.density[n]), fmt(res.kkt.atom[n]), fmt(res.kkt.running[n]), fmt(term)]
        nodes.append(row)
    return res, summary, nodes


def _node_header(d: int) -> list[str]:
    cols = ["instance", "node", "time"]
    for name in ("u", "s", "z", "zdot", "op", "Btop"):
        cols += [name] if d == 1 else [f"{name}_{j}" for j in range(d)]
    return cols + ["res1", "res2", "res3", "res4"]


def _record_solve(cfg: RunConfig, rep: Report, prob, res, summary, nodes) -> None:
    rep.add_rows("report.csv", SUMMARY_COLUMNS, [summary])
    rep.add_rows(f"nodes_{prob.name}.csv", _node_header(prob.d), nodes)
    rel = res.relative_gap
    rep.check(f"{prob.name}_duality_gap", rel <= cfg.tol_gap, f"relative_gap={fmt(rel)}")
    rep.check(f"{prob.name}_kkt", res.kkt.worst() <= cfg.tol_kkt, f"worst={fmt(res.kkt.worst())}")


def _solve_file(args):
    path, name, tol_gap, tol_kkt, timing = args
    prob = _load(path, lambda t: problem_from_document(parse_document(t), name=name))
    return prob, *_solve_rows(prob, tol_gap, tol_kkt, timing)


def cmd_solve(cfg: RunConfig, rep: Report) -> None:
    jobs = [(p, Path(p).stem, cfg.tol_gap, cfg.tol_kkt, cfg.timing) for p in cfg.paths]
    # parse everything up front so errors surface before any solving
    for p, *_ in jobs:
        _load(p, lambda t: problem_from_document(parse_document(t)))
    if cfg.parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallel) as pool:
            results = list(pool.map(_solve_file, jobs))
    else:
        results = [_solve_file(j) for j in jobs]
    for prob, res, summary, nodes in results:
        _record_solve(cfg, rep, prob, res, summary, nodes)


def cmd_demo(cfg: RunConfig, rep: Report, which: str) -> None:
    from .control import bk_conditions_check, build_ls_instance, default_bk_instance

    if which == "ls":
        prob = build_ls_instance(1.0, 2.0)
    else:
        prob = default_bk_instance()
    res, summary, nodes = _solve_rows(prob, cfg.tol_gap, cfg.tol_kkt, cfg.timing)
    _record_solve(cfg, rep, prob, res, summary, nodes)
    q = res.dual.q[:, 0]
    if which == "ls":
        k = 2.0
        rep.check("ls_dual_feasible", np.all(np.abs(q) <= k + 1e-8), f"max_abs_q={fmt(float(np.max(np.abs(q))))}")
        atoms = np.abs(res.primal.s[:, 0]) > 0
        ok = bool(np.all(np.abs(q[atoms]) >= k - 1e-5))
        rep.check("ls_atoms_on_boundary", ok, f"n_atoms={int(atoms.sum())}")
    else:
        c = bk_conditions_check(prob, res.primal, res.dual)
        rep.check("bk_feasibility", c["feasibility"] <= 1e-6, f"value={fmt(c['feasibility'])}")
        rep.check("bk_monotone", c["monotonicity"] <= 1e-12, f"value={fmt(c['monotonicity'])}")
        rep.check("bk_complementarity", c["complementarity"] <= 1e-6, f"value={fmt(c['complementarity'])}")
        rep.check("bk_representation", c["representation"] <= 1e-6, f"value={fmt(c['representation'])}")


# ------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol-gap", type=float, default=1e-5, help="relative duality gap tolerance")
    common.add_argument("--tol-kkt", type=float, default=1e-5, help="optimality residual tolerance")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    common.add_argument("--out", type=Path, default=None, help="directory for report files (default: stdout)")
    common.add_argument("--parallel", type=int, default=1, help="worker processes for multi-instance solves")
    common.add_argument("--timing", action="store_true", help="report wall-clock times (output is then not reproducible)")

    parser = argparse.ArgumentParser(prog="rpduality", description="Convex duality toolkit for integral functionals on scenario trees.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("conjugate", parents=[common], help="conjugate, recession and subdifferential of a PLQ file")
    p.add_argument("path")
    p.add_argument("--at", type=float, action="append", default=[], help="point for the subdifferential table")
    p = sub.add_parser("norms", parents=[common], help="R1 norms of processes and M-infinity norms of measures")
    p.add_argument("path")
    p = sub.add_parser("verify", parents=[common], help="conjugacy, subdifferential and interchange checks")
    p.add_argument("path")
    p = sub.add_parser("solve", parents=[common], help="solve control instances and report optimality residuals")
    p.add_argument("paths", nargs="+")
    p = sub.add_parser("demo", parents=[common], help="build, solve and check a worked example")
    p.add_argument("which", choices=["ls", "bk"])
    return parser


def main(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    paths = getattr(args, "paths", None) or ([args.path] if hasattr(args, "path") else [])
    try:
        cfg = RunConfig(args.command, paths, args.tol_gap, args.tol_kkt, args.seed, args.out, args.parallel, args.timing)
    except ValueError as exc:
        stderr.write(f"error: {exc}\n")
        return 2
    rep = Report(cfg)
    try:
        if args.command == "conjugate":
            cmd_conjugate(cfg, rep, args.at)
        elif args.command == "norms":
            cmd_norms(cfg, rep)
        elif args.command == "verify":
            cmd_verify(cfg, rep)
        elif args.command == "solve":
            cmd_solve(cfg, rep)
        else:
            cmd_demo(cfg, rep, args.which)
    except PLQParseError as exc:
        where = getattr(exc, "source", "input")
        if exc.lineno is not None:
            where += f":{exc.lineno}"
        stderr.write(f"error: {where}: {exc.reason}\n")
        return 2
    buf = _stdio.StringIO()
    rep.emit(buf)
    stdout.write(buf.getvalue())
    return 0 if rep.ok else 1


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_entry()
