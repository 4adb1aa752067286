"""Textual model format: a line-oriented, diffable `.bdmp` dialect.

One statement per line, terminated by `;`, `#` comments, identifiers
``[A-Za-z_][A-Za-z0-9_]*``.  Statement forms::

    group <name> capacity=<int>;
    leaf <KIND> <name> [lambda=<num>] [lambda_standby=<num>] [gamma=<num>]
                       [mu=<num>] [phases=<int>] [group=<id>];
    gate <KIND> <name> [k=<int>] inputs=<id>,<id>,...;
    trigger <name> origin=<id> target=<id>;
    order before=<id> after=<id>;
    top <gate-id>;
    target <boolean expression over ids with AND/OR/NOT and parens>;

Numbers accept scientific notation and fraction literals such as ``1/200``.
The serializer emits a canonical form (sorted sections, shortest round-trip
float formatting) so serialized models are byte-stable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .model import (
    GateDef,
    GateKind,
    LeafDef,
    LeafKind,
    Model,
    OrderConstraintDef,
    RepairGroupDef,
    TriggerDef,
    parse_target,
    TargetParseError,
)

__all__ = [
    "ParseError",
    "ModelDocument",
    "parse",
    "parse_model",
    "serialize",
    "load_model",
    "save_model",
]

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<comment>\#[^\n]*)
      | (?P<num>-?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<punct>[=;,/()])
    """,
    re.VERBOSE,
)

_LEAF_KEYS = {"lambda", "lambda_standby", "gamma", "mu", "phases", "group"}
_RESERVED = {"AND", "OR", "NOT", "leaf", "gate", "trigger", "order", "group", "top", "target"}


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | punct
    text: str
    line: int
    col: int


@dataclass(frozen=True)
class ParseError:
    message: str
    line: int
    col: int

    def __str__(self):
        return f"{self.line}:{self.col}: {self.message}"


@dataclass(frozen=True)
class Statement:
    keyword: str
    tokens: tuple[Token, ...]
    line: int
    col: int


@dataclass
class ModelDocument:
    """Parsed statements with source spans, convertible to a Model."""

    statements: list[Statement] = field(default_factory=list)
    errors: list[ParseError] = field(default_factory=list)

    def to_model(self) -> Model:
        return _build_model(self)


def _tokenize(text: str, errors: list[ParseError]) -> list[Token]:
    tokens: list[Token] = []
    line, col, i = 1, 1, 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            errors.append(ParseError(f"unexpected character {text[i]!r}", line, col))
            i += 1
            col += 1
            continue
        kind = m.lastgroup
        tok = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, tok, line, col))
        nl = tok.count("\n")
        if nl:
            line += nl
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)
        i = m.end()
    return tokens


def parse(text: str) -> ModelDocument:
    """Parse source text; recovers at each `;` so multiple errors are reported."""
    doc = ModelDocument()
    tokens = _tokenize(text, doc.errors)
    i = 0
    n = len(tokens)
    while i < n:
        start = tokens[i]
        j = i
        while j < n and not (tokens[j].kind == "punct" and tokens[j].text == ";"):
            j += 1
        body = tokens[i:j]
        if j == n:
            doc.errors.append(ParseError("missing ';' at end of statement",
                                         start.line, start.col))
        i = j + 1
        if not body:
            continue
        head = body[0]
        if head.kind != "ident" or head.text not in ("leaf", "gate", "trigger",
                                                     "order", "group", "top", "target"):
            doc.errors.append(ParseError(
                f"expected statement keyword (leaf/gate/trigger/order/group/top/target), "
                f"got {head.text!r}", head.line, head.col))
            continue
        doc.statements.append(Statement(head.text, tuple(body[1:]), head.line, head.col))

    _check_statements(doc)
    return doc


def _parse_number(tokens: list[Token], pos: int, errors: list[ParseError]) -> tuple[float | None, int]:
    """Parse <num> or the fraction <num>/<num>."""
    if pos >= len(tokens) or tokens[pos].kind != "num":
        t = tokens[pos] if pos < len(tokens) else tokens[-1]
        errors.append(ParseError(f"expected a number, got {t.text!r}", t.line, t.col))
        return None, pos
    value = float(tokens[pos].text)
    pos += 1
    if pos + 1 < len(tokens) and tokens[pos].kind == "punct" and tokens[pos].text == "/" \
            and tokens[pos + 1].kind == "num":
        denom = float(tokens[pos + 1].text)
        if denom == 0:
            errors.append(ParseError("division by zero in fraction literal",
                                     tokens[pos + 1].line, tokens[pos + 1].col))
            return None, pos + 2
        value /= denom
        pos += 2
    return value, pos


def _parse_keyvals(body: tuple[Token, ...], pos: int, errors: list[ParseError],
                   list_keys: set[str] = frozenset()) -> dict:
    """Parse key=value pairs; values are numbers, identifiers, or id lists."""
    out: dict = {}
    n = len(body)
    while pos < n:
        key_tok = body[pos]
        if key_tok.kind != "ident":
            errors.append(ParseError(f"expected key=value, got {key_tok.text!r}",
                                     key_tok.line, key_tok.col))
            return out
        if pos + 1 >= n or body[pos + 1].text != "=":
            errors.append(ParseError(f"expected '=' after {key_tok.text!r}",
                                     key_tok.line, key_tok.col))
            return out
        pos += 2
        key = key_tok.text
        if key in out:
            errors.append(ParseError(f"duplicate key {key!r}", key_tok.line, key_tok.col))
        if key in list_keys:
            items = []
            while pos < n and body[pos].kind == "ident":
                items.append(body[pos].text)
                pos += 1
                if pos < n and body[pos].text == ",":
                    pos += 1
                else:
                    break
            if not items:
                errors.append(ParseError(f"expected identifier list for {key!r}",
                                         key_tok.line, key_tok.col))
            out[key] = tuple(items)
        elif pos < n and body[pos].kind == "ident":
            out[key] = body[pos].text
            pos += 1
        else:
            value, pos = _parse_number(list(body), pos, errors)
            out[key] = value
    return out


def _check_statements(doc: ModelDocument) -> None:
    """Statement-level checks: shapes, number sanity, duplicate identifiers."""
    seen: dict[str, Statement] = {}
    for st in doc.statements:
        body = st.tokens
        err = doc.errors.append
        if st.keyword == "leaf":
            if len(body) < 2 or body[0].kind != "ident" or body[1].kind != "ident":
                err(ParseError("expected 'leaf <KIND> <name> ...'", st.line, st.col))
                continue
            kind, name = body[0].text, body[1].text
            if kind not in LeafKind.ALL:
                err(ParseError(f"unknown leaf kind {kind!r}", body[0].line, body[0].col))
            if name in _RESERVED:
                err(ParseError(f"identifier {name!r} is reserved", body[1].line, body[1].col))
            kv = _parse_keyvals(body, 2, doc.errors)
            for key, value in kv.items():
                if key not in _LEAF_KEYS:
                    err(ParseError(f"unknown leaf key {key!r}", st.line, st.col))
                elif key != "group" and isinstance(value, float) and value < 0:
                    span = next((t for t in body if t.kind == "num" and float(t.text) < 0), st)
                    err(ParseError("rate must be >= 0", span.line, span.col))
            gamma = kv.get("gamma")
            if isinstance(gamma, float) and not (0 <= gamma <= 1):
                err(ParseError("gamma must lie in [0, 1]", st.line, st.col))
            _note_duplicate(name, st, seen, doc)
        elif st.keyword == "gate":
            if len(body) < 2 or body[0].kind != "ident" or body[1].kind != "ident":
                err(ParseError("expected 'gate <KIND> <name> inputs=...'", st.line, st.col))
                continue
            kind, name = body[0].text, body[1].text
            if kind not in GateKind.ALL:
                err(ParseError(f"unknown gate kind {kind!r}", body[0].line, body[0].col))
            kv = _parse_keyvals(body, 2, doc.errors, list_keys={"inputs"})
            if "inputs" not in kv:
                err(ParseError("gate requires inputs=<id,...>", st.line, st.col))
            for key in kv:
                if key not in ("inputs", "k"):
                    err(ParseError(f"unknown gate key {key!r}", st.line, st.col))
            _note_duplicate(name, st, seen, doc)
        elif st.keyword == "trigger":
            if len(body) < 1 or body[0].kind != "ident":
                err(ParseError("expected 'trigger <name> origin=<id> target=<id>'",
                               st.line, st.col))
                continue
            kv = _parse_keyvals(body, 1, doc.errors)
            for key in ("origin", "target"):
                if not isinstance(kv.get(key), str):
                    err(ParseError(f"trigger requires {key}=<id>", st.line, st.col))
            _note_duplicate(body[0].text, st, seen, doc)
        elif st.keyword == "order":
            kv = _parse_keyvals(body, 0, doc.errors)
            for key in ("before", "after"):
                if not isinstance(kv.get(key), str):
                    err(ParseError(f"order requires {key}=<id>", st.line, st.col))
        elif st.keyword == "group":
            if len(body) < 1 or body[0].kind != "ident":
                err(ParseError("expected 'group <name> capacity=<int>'", st.line, st.col))
                continue
            kv = _parse_keyvals(body, 1, doc.errors)
            cap = kv.get("capacity", 1.0)
            if isinstance(cap, float) and (cap < 1 or cap != int(cap)):
                err(ParseError("capacity must be a positive integer", st.line, st.col))
            _note_duplicate(body[0].text, st, seen, doc)
        elif st.keyword == "top":
            if len(body) != 1 or body[0].kind != "ident":
                err(ParseError("expected 'top <gate-id>'", st.line, st.col))
        elif st.keyword == "target":
            text = _expr_text(body)
            try:
                parse_target(text)
            except TargetParseError as exc:
                err(ParseError(f"bad target expression: {exc}", st.line, st.col))


def _note_duplicate(name: str, st: Statement, seen: dict, doc: ModelDocument) -> None:
    if name in seen:
        doc.errors.append(ParseError(f"duplicate identifier {name!r}", st.line, st.col))
    else:
        seen[name] = st


def _expr_text(body: tuple[Token, ...]) -> str:
    return " ".join(t.text for t in body)


def _build_model(doc: ModelDocument) -> Model:
    leaves: list[LeafDef] = []
    gates: list[GateDef] = []
    triggers: list[TriggerDef] = []
    orders: list[OrderConstraintDef] = []
    groups: list[RepairGroupDef] = []
    main_top = ""
    target = None
    errors: list[ParseError] = []
    trig_auto = 0
    for st in doc.statements:
        body = st.tokens
        if st.keyword == "leaf" and len(body) >= 2:
            kv = _parse_keyvals(body, 2, errors)
            leaves.append(LeafDef(
                id=body[1].text, kind=body[0].text,
                lambda_required=float(kv.get("lambda") or 0.0),
                lambda_standby=float(kv.get("lambda_standby") or 0.0),
                gamma=float(kv.get("gamma") or 0.0),
                mu=float(kv.get("mu") or 0.0),
                phase_count=int(kv.get("phases") or 1),
                repair_group=kv.get("group")))
        elif st.keyword == "gate" and len(body) >= 2:
            kv = _parse_keyvals(body, 2, errors, list_keys={"inputs"})
            gates.append(GateDef(id=body[1].text, kind=body[0].text,
                                 inputs=tuple(kv.get("inputs") or ()),
                                 k=int(kv.get("k") or 1)))
        elif st.keyword == "trigger" and len(body) >= 1:
            kv = _parse_keyvals(body, 1, errors)
            trig_auto += 1
            triggers.append(TriggerDef(id=body[0].text,
                                       origin=str(kv.get("origin") or ""),
                                       target=str(kv.get("target") or "")))
        elif st.keyword == "order":
            kv = _parse_keyvals(body, 0, errors)
            orders.append(OrderConstraintDef(before=str(kv.get("before") or ""),
                                             after=str(kv.get("after") or "")))
        elif st.keyword == "group" and len(body) >= 1:
            kv = _parse_keyvals(body, 1, errors)
            groups.append(RepairGroupDef(id=body[0].text,
                                         capacity=int(kv.get("capacity") or 1)))
        elif st.keyword == "top" and body:
            main_top = body[0].text
        elif st.keyword == "target" and body:
            try:
                target = parse_target(_expr_text(body))
            except TargetParseError:
                pass
    return Model(leaves=tuple(leaves), gates=tuple(gates), triggers=tuple(triggers),
                 order_constraints=tuple(orders), repair_groups=tuple(groups),
                 main_top=main_top, target_expression=target)


def parse_model(text: str) -> tuple[Model | None, list[ParseError]]:
    """Parse and build in one step; returns (model, errors) with model None on errors."""
    doc = parse(text)
    if doc.errors:
        return None, doc.errors
    return doc.to_model(), []


def _fmt(x: float) -> str:
    return repr(float(x))


def serialize(model: Model) -> str:
    """Canonical text form: fixed section order, ids sorted, full float precision."""
    lines = ["# bdmp model (canonical form)"]
    for r in sorted(model.repair_groups, key=lambda r: r.id):
        lines.append(f"group {r.id} capacity={r.capacity};")
    for l in sorted(model.leaves, key=lambda l: l.id):
        parts = [f"leaf {l.kind} {l.id}"]
        if l.lambda_required:
            parts.append(f"lambda={_fmt(l.lambda_required)}")
        if l.lambda_standby:
            parts.append(f"lambda_standby={_fmt(l.lambda_standby)}")
        if l.gamma:
            parts.append(f"gamma={_fmt(l.gamma)}")
        if l.mu:
            parts.append(f"mu={_fmt(l.mu)}")
        if l.kind == LeafKind.PHASE or l.phase_count != 1:
            parts.append(f"phases={l.phase_count}")
        if l.repair_group is not None:
            parts.append(f"group={l.repair_group}")
        lines.append(" ".join(parts) + ";")
    for g in sorted(model.gates, key=lambda g: g.id):
        inputs = g.inputs if g.kind == GateKind.EDGE_AND else tuple(sorted(g.inputs))
        k = f" k={g.k}" if g.kind == GateKind.KOON else ""
        lines.append(f"gate {g.kind} {g.id}{k} inputs={','.join(inputs)};")
    for t in sorted(model.triggers, key=lambda t: (t.origin, t.target)):
        lines.append(f"trigger {t.id} origin={t.origin} target={t.target};")
    for c in sorted(model.order_constraints, key=lambda c: (c.before, c.after)):
        lines.append(f"order before={c.before} after={c.after};")
    if model.main_top:
        lines.append(f"top {model.main_top};")
    if model.target_expression is not None:
        lines.append(f"target {model.target_expression};")
    return "\n".join(lines) + "\n"


def load_model(path) -> tuple[Model | None, list[ParseError]]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())


def save_model(model: Model, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize(model))
