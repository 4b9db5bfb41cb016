"""Line-oriented text formats for trees, processes, measures and problems.

A document is a sequence of sections; blank lines and ``#`` comments are
ignored.  Every section ends with a line ``end``.

``tree``
    ``node <id> <time_index> <parent_id|-> <branch_prob> <mu_weight>``
``dim <d>``
    one-line section (no ``end``) fixing the dimension, default 1
``matrix A`` / ``matrix B``
    ``d`` rows of ``d`` numbers
``process <name>``
    ``val <node_id> <v_1> ... <v_d>`` or ``val <path>:<time> <v_1> ... <v_d>``
``measure <name>``
    ``den <node_id> <v_1> ... <v_d>`` and ``atom <node_id> <v_1> ... <v_d>``
``integrand <g|e|h> <node_id|*> <coord|*>``
    a PLQ block: ``plq <lo> <hi>`` then ``<left_end> <a> <b> <c>`` lines.
    ``*`` applies the block to all nodes (leaves for ``e``) or coordinates;
    later blocks override earlier ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .measures import RandomMeasure
from .plq import PLQFunction, PLQParseError, _fmt
from .separable import SeparableIntegrand
from .tree import ScenarioTree, is_adapted, to_adapted


class ParseError(PLQParseError):
    """Malformed input, with the offending 1-based line number."""


def _num(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"not a number: {tok!r}", lineno) from None


def _int(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"not an integer: {tok!r}", lineno) from None


@dataclass
class Document:
    tree: ScenarioTree | None = None
    d: int = 1
    matrices: dict = field(default_factory=dict)
    processes: dict = field(default_factory=dict)
    measures: dict = field(default_factory=dict)
    integrands: dict = field(default_factory=lambda: {"g": [], "e": [], "h": []})


def _sections(text: str):
    """Yield ``(header_tokens, header_lineno, body)`` with body ``[(lineno, tokens)]``."""
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        toks = lines[i].split("#", 1)[0].split()
        i += 1
        if not toks:
            continue
        head, head_no = toks, i
        if head[0] == "dim":
            yield head, head_no, []
            continue
        body = []
        while True:
            if i >= len(lines):
                raise ParseError(f"section '{head[0]}' is missing its 'end'", head_no)
            raw = lines[i]
            i += 1
            t = raw.split("#", 1)[0].split()
            if not t:
                continue
            if t == ["end"]:
                break
            body.append((i, t))
        yield head, head_no, body


def _parse_tree(body, head_no: int) -> ScenarioTree:
    rows = []
    for n, t in body:
        if t[0] != "node" or len(t) != 6:
            raise ParseError("expected 'node <id> <time_index> <parent_id|-> <branch_prob> <mu_weight>'", n)
        nid, ti = _int(t[1], n), _int(t[2], n)
        par = -1 if t[3] == "-" else _int(t[3], n)
        rows.append((nid, ti, par, _num(t[4], n), _num(t[5], n), n))
    if not rows:
        raise ParseError("tree has no nodes", head_no)
    rows.sort()
    ids = [r[0] for r in rows]
    if ids != list(range(len(rows))):
        raise ParseError("node ids must be 0..n-1 without gaps", rows[-1][5])
    parent = [r[2] for r in rows]
    for nid, ti, par, _, _, n in rows:
        if (par == -1) != (ti == 0):
            raise ParseError("exactly the time-0 node has no parent", n)
        if par != -1 and rows[par][1] != ti - 1:
            raise ParseError("parent must sit one time index earlier", n)
    try:
        return ScenarioTree(parent, [r[3] if r[2] != -1 else 1.0 for r in rows], [r[4] for r in rows])
    except ValueError as exc:
        raise ParseError(str(exc), head_no) from None


def _parse_process(body, tree: ScenarioTree, d: int, head_no: int) -> np.ndarray:
    if tree is None:
        raise ParseError("a tree section must come before processes", head_no)
    raw = np.full((tree.n_leaves, tree.horizon + 1, d), np.nan)
    node_vals = np.full((tree.n_nodes, d), np.nan)
    pathwise = False
    for n, t in body:
        if t[0] != "val" or len(t) != 2 + d:
            raise ParseError(f"expected 'val <node|path:time>' and {d} values", n)
        vals = [_num(x, n) for x in t[2:]]
        if ":" in t[1]:
            pathwise = True
            a, b = t[1].split(":", 1)
            l, i = _int(a, n), _int(b, n)
            if not (0 <= l < tree.n_leaves and 0 <= i <= tree.horizon):
                raise ParseError("path/time index out of range", n)
            raw[l, i] = vals
        else:
            node = _int(t[1], n)
            if not 0 <= node < tree.n_nodes:
                raise ParseError("node id out of range", n)
            node_vals[node] = vals
    if pathwise:
        fill = node_vals[tree.paths]
        raw = np.where(np.isnan(raw), fill, raw)
        if np.isnan(raw).any():
            raise ParseError("process leaves some (path, time) entries unset", head_no)
        return raw
    if np.isnan(node_vals).any():
        raise ParseError("process leaves some nodes unset", head_no)
    return node_vals


def _parse_measure(body, tree: ScenarioTree, d: int, head_no: int) -> RandomMeasure:
    if tree is None:
        raise ParseError("a tree section must come before measures", head_no)
    den = np.zeros((tree.n_nodes, d))
    atom = np.zeros((tree.n_nodes, d))
    for n, t in body:
        if t[0] not in ("den", "atom") or len(t) != 2 + d:
            raise ParseError(f"expected 'den|atom <node>' and {d} values", n)
        node = _int(t[1], n)
        if not 0 <= node < tree.n_nodes:
            raise ParseError("node id out of range", n)
        (den if t[0] == "den" else atom)[node] = [_num(x, n) for x in t[2:]]
    return RandomMeasure(den, atom)


def _parse_plq_body(body, head_no: int) -> PLQFunction:
    if not body:
        raise ParseError("empty PLQ block", head_no)
    lines = [" ".join(t) for _, t in body]
    try:
        # line numbers of a compacted body are not contiguous; map errors back
        return PLQFunction.from_text(lines, first_lineno=0)
    except PLQParseError as exc:
        idx = min(max(exc.lineno or 0, 0), len(body) - 1)
        raise ParseError(exc.reason, body[idx][0]) from None


def parse_document(text: str) -> Document:
    doc = Document()
    for head, n, body in _sections(text):
        kind = head[0]
        if kind == "tree":
            doc.tree = _parse_tree(body, n)
        elif kind == "dim":
            if len(head) != 2:
                raise ParseError("expected 'dim <d>'", n)
            doc.d = _int(head[1], n)
            if doc.d < 1:
                raise ParseError("dimension must be positive", n)
        elif kind == "matrix":
            if len(head) != 2:
                raise ParseError("expected 'matrix <name>'", n)
            rows = [[_num(x, ln) for x in t] for ln, t in body]
            if len(rows) != doc.d or any(len(r) != doc.d for r in rows):
                raise ParseError(f"matrix {head[1]} must be {doc.d}x{doc.d}", n)
            doc.matrices[head[1]] = np.array(rows)
        elif kind == "process":
            name = head[1] if len(head) > 1 else "v"
            doc.processes[name] = _parse_process(body, doc.tree, doc.d, n)
        elif kind == "measure":
            name = head[1] if len(head) > 1 else "theta"
            doc.measures[name] = _parse_measure(body, doc.tree, doc.d, n)
        elif kind == "integrand":
            if len(head) != 4 or head[1] not in ("g", "e", "h"):
                raise ParseError("expected 'integrand <g|e|h> <node|*> <coord|*>'", n)
            node = None if head[2] == "*" else _int(head[2], n)
            coord = None if head[3] == "*" else _int(head[3], n)
            doc.integrands[head[1]].append((node, coord, _parse_plq_body(body, n), n))
        else:
            raise ParseError(f"unknown section {kind!r}", n)
    return doc


def assemble_integrands(doc: Document, which: str, nodes) -> list[SeparableIntegrand]:
    """Resolve the ``integrand`` blocks of one family over ``nodes``."""
    nodes = list(nodes)
    slots = {node: [None] * doc.d for node in nodes}
    for node, coord, f, n in doc.integrands[which]:
        if node is not None and node not in slots:
            raise ParseError(f"integrand {which} names node {node}, which is not allowed here", n)
        if coord is not None and not 0 <= coord < doc.d:
            raise ParseError("coordinate out of range", n)
        for nd in ([node] if node is not None else nodes):
            for j in ([coord] if coord is not None else range(doc.d)):
                slots[nd][j] = f
    out = []
    for node in nodes:
        if any(f is None for f in slots[node]):
            raise ParseError(f"integrand {which} is missing at node {node}")
        out.append(SeparableIntegrand(slots[node]))
    return out


def problem_from_document(doc: Document, name: str = "instance"):
    from .control import ControlProblem

    if doc.tree is None:
        raise ParseError("instance has no tree section")
    tree = doc.tree
    A = doc.matrices.get("A", np.zeros((doc.d, doc.d)))
    B = doc.matrices.get("B", np.eye(doc.d))
    W = doc.processes.get("W", np.zeros((tree.n_nodes, doc.d)))
    if W.ndim == 3:
        if not is_adapted(tree, W):
            raise ParseError("process W must be adapted")
        W = to_adapted(tree, W)
    g = assemble_integrands(doc, "g", range(tree.n_nodes))
    h = assemble_integrands(doc, "h", range(tree.n_nodes))
    if doc.integrands["e"]:
        e = assemble_integrands(doc, "e", tree.leaves)
    else:
        e = [SeparableIntegrand([PLQFunction.zero()] * doc.d)] * tree.n_leaves
    return ControlProblem(tree, A, B, W, g, e, h, name=name)


# ------------------------------------------------------------------ writers
def fmt(x: float) -> str:
    return _fmt(x) if not (isinstance(x, float) and math.isnan(x)) else "nan"


def tree_to_text(tree: ScenarioTree) -> str:
    lines = ["tree"]
    for n in range(tree.n_nodes):
        par = "-" if tree.parent[n] < 0 else str(int(tree.parent[n]))
        lines.append(f"node {n} {int(tree.time[n])} {par} {fmt(tree.cond_prob[n])} {fmt(tree.mu[n])}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def process_to_text(name: str, v: np.ndarray) -> str:
    v = np.asarray(v, dtype=float)
    v = v[:, None] if v.ndim == 1 else v
    lines = [f"process {name}"] + [f"val {n} " + " ".join(fmt(x) for x in row) for n, row in enumerate(v)]
    return "\n".join(lines + ["end"]) + "\n"


def measure_to_text(name: str, theta: RandomMeasure) -> str:
    lines = [f"measure {name}"]
    for n in range(theta.density.shape[0]):
        if np.any(theta.density[n]):
            lines.append(f"den {n} " + " ".join(fmt(x) for x in theta.density[n]))
        if np.any(theta.atoms[n]):
            lines.append(f"atom {n} " + " ".join(fmt(x) for x in theta.atoms[n]))
    return "\n".join(lines + ["end"]) + "\n"


def integrand_to_text(which: str, node, coord, f: PLQFunction) -> str:
    node_s = "*" if node is None else str(node)
    coord_s = "*" if coord is None else str(coord)
    return f"integrand {which} {node_s} {coord_s}\n{f.to_text()}end\n"


def problem_to_text(prob) -> str:
    """Serialize a control problem (integrands written per node)."""
    tree = prob.tree
    parts = [tree_to_text(prob.tree), f"dim {prob.d}\n"]
    for name, M in (("A", prob.A), ("B", prob.B)):
        parts.append(f"matrix {name}\n" + "\n".join(" ".join(fmt(x) for x in row) for row in M) + "\nend\n")
    parts.append(process_to_text("W", prob.W))
    for which, fam, ids in (("g", prob.g, range(tree.n_nodes)), ("e", prob.e, tree.leaves), ("h", prob.h, range(tree.n_nodes))):
        for node, f in zip(ids, fam):
            for j, fj in enumerate(f.coords):
                parts.append(integrand_to_text(which, int(node), j, fj))
    return "".join(parts)
