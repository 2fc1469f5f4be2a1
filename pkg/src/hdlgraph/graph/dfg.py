"""Lower module statements into the SIGNAL/TEMP dataflow view.

Lowering rules:

* ``lhs = x`` where ``x`` is a single term (identifier, constant bit/part
  select) gives ``x -FLOWS_TO-> lhs``.
* Any other right-hand side gets one TEMP node per assignment; every signal
  read by the expression flows into it and the TEMP flows into ``lhs``.
* ``c ? a : b`` and two-armed ``if`` become a TEMP with ``COND`` edges from
  the signals of ``c``, ``TRUE`` from the taken value and ``FALSE`` from the
  other one. An ``if`` without ``else`` uses the target's own value for the
  untaken branch. ``case`` lowers to one such TEMP per non-default arm,
  chained in source order.
* Blocking and non-blocking assignments are treated alike.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

from ..diagnostics import Diagnostic
from ..frontend.ast import (
    AstBlock,
    AstModule,
    Assignment,
    BlockKind,
    Case,
    Direction,
    Expr,
    Identifier,
    If,
    Select,
    SeqBlock,
    Statement,
    Ternary,
    expr_identifiers,
    iter_expr,
    lvalue_targets,
)
from .model import CodeGraph, EdgeKind, GraphNode, NodeKind, signal_id, temp_id

PortDirections = Mapping[str, Mapping[str, str]]


# -- symbolic values ---------------------------------------------------------


@dataclass(eq=False)
class _Term:
    names: tuple[str, ...]


@dataclass(eq=False)
class _Compound:
    names: tuple[str, ...]


@dataclass(eq=False)
class _Const:
    pass


@dataclass(eq=False)
class _Mux:
    cond: tuple[str, ...]
    if_true: "_Value"
    if_false: "_Value"


_Value = _Term | _Compound | _Const | _Mux


def _unique(names: list[str]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(names))


def _is_constant(expr: Expr | None) -> bool:
    return not any(isinstance(e, Identifier) for e in iter_expr(expr))


def value_of(expr: Expr) -> _Value:
    if isinstance(expr, Ternary):
        return _Mux(_unique(expr_identifiers(expr.cond)), value_of(expr.if_true),
                    value_of(expr.if_false))
    if isinstance(expr, Identifier):
        return _Term((expr.name,))
    if isinstance(expr, Select) and isinstance(expr.target, Identifier) \
            and _is_constant(expr.msb) and _is_constant(expr.lsb):
        return _Term((expr.target.name,))
    names = _unique(expr_identifiers(expr))
    if not names:
        return _Const()
    return _Compound(names)


# -- lowering ----------------------------------------------------------------


class _Lowerer:
    def __init__(self, module: AstModule, module_key: str,
                 port_directions: PortDirections | None) -> None:
        self.module = module
        self.file = module.span.file_path
        self.key = module_key
        self.port_directions = port_directions or {}
        self.declared = {s.name for s in module.signals}
        self.graph = CodeGraph()
        self.temp_count = 0
        # keyed by id(); the value is kept alive alongside its result
        self._memo: dict[int, tuple[_Value, list[str]]] = {}
        self.placeholders: dict[str, str] = {}  # name -> node id

    def signal(self, name: str) -> str:
        if name in self.declared:
            return signal_id(self.file, self.key, name)
        return self.placeholder(name, "undeclared")

    def placeholder(self, name: str, reason: str, direction: str = "INTERNAL") -> str:
        if name in self.placeholders:
            return self.placeholders[name]
        nid = signal_id(self.file, self.key, name)
        self.placeholders[name] = nid
        self.graph.add_node(GraphNode(
            nid, NodeKind.SIGNAL, name,
            {"module": self.module.name, "file": self.file, "direction": direction,
             "net_kind": "WIRE", "placeholder": reason},
        ))
        if reason == "undeclared":
            self.graph.diagnostics.append(Diagnostic(
                self.file, self.module.span.line_start, "UNDECLARED_SIGNAL",
                f"{name!r} used in module {self.module.name!r} without a declaration"))
        return nid

    def new_temp(self) -> str:
        nid = temp_id(self.file, self.key, self.temp_count)
        self.graph.add_node(GraphNode(nid, NodeKind.TEMP, f"{self.key}.temp{self.temp_count}",
                                      {"module": self.module.name, "file": self.file}))
        self.temp_count += 1
        return nid

    def lower(self, value: _Value) -> list[str]:
        """Create nodes for ``value``; return the ids that feed its consumer."""
        cached = self._memo.get(id(value))
        if cached is not None:
            return cached[1]
        if isinstance(value, _Term):
            out = [self.signal(n) for n in value.names]
        elif isinstance(value, _Const):
            out = []
        elif isinstance(value, _Compound):
            t = self.new_temp()
            for n in value.names:
                self.graph.add_edge(self.signal(n), t, EdgeKind.FLOWS_TO)
            out = [t]
        else:
            t = self.new_temp()
            for n in value.cond:
                self.graph.add_edge(self.signal(n), t, EdgeKind.COND)
            for src in self.lower(value.if_true):
                self.graph.add_edge(src, t, EdgeKind.TRUE)
            for src in self.lower(value.if_false):
                self.graph.add_edge(src, t, EdgeKind.FALSE)
            out = [t]
        self._memo[id(value)] = (value, out)
        return out

    def drive(self, target: str, value: _Value) -> None:
        dst = self.signal(target)
        for src in self.lower(value):
            self.graph.add_edge(src, dst, EdgeKind.FLOWS_TO)

    # procedural semantics ----------------------------------------------------

    def run(self, stmt: Statement | None, env: dict[str, _Value], order: list[str]) -> None:
        if stmt is None:
            return
        if isinstance(stmt, Assignment):
            value = value_of(stmt.value)
            for t in lvalue_targets(stmt.target):
                env[t] = value
                if t not in order:
                    order.append(t)
        elif isinstance(stmt, SeqBlock):
            for s in stmt.body:
                self.run(s, env, order)
        elif isinstance(stmt, If):
            then_env, else_env = dict(env), dict(env)
            self.run(stmt.then, then_env, order)
            self.run(stmt.otherwise, else_env, order)
            cond = _unique(expr_identifiers(stmt.cond))
            self._join(env, order, cond, [then_env], else_env)
        elif isinstance(stmt, Case):
            subject = expr_identifiers(stmt.subject)
            arm_envs, conds = [], []
            default_env = dict(env)
            for item in stmt.items:
                arm_env = dict(env)
                self.run(item.body, arm_env, order)
                if item.is_default:
                    default_env = arm_env
                else:
                    labels = [n for lab in item.labels for n in expr_identifiers(lab)]
                    arm_envs.append(arm_env)
                    conds.append(_unique(subject + labels))
            self._join_chain(env, order, conds, arm_envs, default_env)

    def _join(self, env: dict[str, _Value], order: list[str], cond: tuple[str, ...],
              arms: list[dict[str, _Value]], fallback: dict[str, _Value]) -> None:
        self._join_chain(env, order, [cond], arms, fallback)

    def _join_chain(self, env: dict[str, _Value], order: list[str],
                    conds: list[tuple[str, ...]], arms: list[dict[str, _Value]],
                    fallback: dict[str, _Value]) -> None:
        for t in order:
            base = env.get(t)
            if base is None:
                base = _Term((t,))
            value = fallback.get(t, base)
            for cond, arm in zip(reversed(conds), reversed(arms)):
                arm_value = arm.get(t, base)
                if arm_value is not value:
                    value = _Mux(cond, arm_value, value)
            if value is not base:
                env[t] = value

    def lower_block(self, block: AstBlock) -> None:
        if block.kind is BlockKind.INSTANCE:
            self._lower_instance(block)
            return
        if block.kind is BlockKind.ASSIGN:
            for stmt in block.statements:
                if isinstance(stmt, Assignment):
                    value = value_of(stmt.value)
                    for t in lvalue_targets(stmt.target):
                        self.drive(t, value)
            return
        env: dict[str, _Value] = {}
        order: list[str] = []
        for stmt in block.statements:
            self.run(stmt, env, order)
        for t in order:
            value = env.get(t)
            if value is None or (isinstance(value, _Term) and value.names == (t,)):
                continue
            self.drive(t, value)

    def _lower_instance(self, block: AstBlock) -> None:
        ports = self.port_directions.get(block.instance_of or "", {})
        port_order = list(ports)
        for port, expr in block.port_connections or ():
            if expr is None:
                continue
            if port.isdigit() and int(port) < len(port_order):
                port = port_order[int(port)]
            direction = ports.get(port, "")
            node = self.placeholder(f"{block.instance_name}.{port}", "instance_port",
                                    direction or "INTERNAL")
            if direction == Direction.OUTPUT.value:
                for t in lvalue_targets(expr):
                    self.graph.add_edge(node, self.signal(t), EdgeKind.FLOWS_TO)
            else:
                for src in self.lower(value_of(expr)):
                    self.graph.add_edge(src, node, EdgeKind.FLOWS_TO)


def build_dfg(
    module: AstModule,
    *,
    module_key: str | None = None,
    block_ids: list[str] | None = None,
    module_node_id: str | None = None,
    port_directions: PortDirections | None = None,
) -> CodeGraph:
    """Dataflow fragment for one module.

    The fragment holds TEMP nodes, placeholder SIGNAL nodes and the dataflow
    edges; declared SIGNAL nodes are referenced by id and come from the AST
    view. When ``block_ids``/``module_node_id`` are given, placeholders are
    attached with CONTAINS edges so the merged graph stays well formed.
    ``port_directions`` maps module name → port name → direction and lets
    instance outputs flow back into the parent's nets.
    """
    key = module_key or module.name
    low = _Lowerer(module, key, port_directions)
    for block in module.blocks:
        for name in sorted(block.referenced_signals - low.declared):
            low.signal(name)
    for block in module.blocks:
        low.lower_block(block)
    graph = low.graph
    if module_node_id is not None:
        for name in sorted(low.placeholders):
            graph.add_edge(module_node_id, low.placeholders[name], EdgeKind.CONTAINS)
    if block_ids is not None:
        for bid, block in zip(block_ids, module.blocks):
            names = set(block.referenced_signals)
            if block.kind is BlockKind.INSTANCE:
                names.update(f"{block.instance_name}.{p}" for p in _instance_ports(
                    block, port_directions))
            for name in sorted(names & set(low.placeholders)):
                graph.add_edge(bid, low.placeholders[name], EdgeKind.CONTAINS)
    return graph


def _instance_ports(block: AstBlock, port_directions: PortDirections | None) -> list[str]:
    ports = (port_directions or {}).get(block.instance_of or "", {})
    order = list(ports)
    out = []
    for port, expr in block.port_connections or ():
        if expr is None:
            continue
        if port.isdigit() and int(port) < len(order):
            port = order[int(port)]
        out.append(port)
    return out
