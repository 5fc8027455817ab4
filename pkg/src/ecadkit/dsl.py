"""Concrete text syntax for CAD programs.

Grammar (one statement per line; newlines inside brackets are ignored)::

    statement := [NAME "="] call
               | NAME "=" list
               | NAME ".append(" NAME ")"
               | "#" comment text
    call      := NAME "(" [arg ("," arg)* [","]] ")"
    arg       := [NAME "="] value
    value     := number | "(" value "," value ["," value] ")" | list
               | NAME | NAME "." NAME
    list      := "[" [value ("," value)*] "]"

Full-line comments become the annotation of the next statement.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .curves import Arc, Circle, Line
from .model import (
    Angle,
    CADProgram,
    Coincident,
    ConstraintDef,
    CurveDef,
    ExtentType,
    ExtrudeDef,
    FixSize,
    Horizontal,
    LoopDef,
    Mirror,
    Operation,
    Parallel,
    Perpendicular,
    PlaneDef,
    PointRef,
    ProfileDef,
    SketchDef,
    Tangent,
    Vertical,
)


class ErrorKind(str, Enum):
    LEXICAL = "Lexical"
    SYNTAX = "Syntax"
    UNKNOWN_COMMAND = "UnknownCommand"
    ARITY_MISMATCH = "ArityMismatch"
    UNDEFINED_IDENTIFIER = "UndefinedIdentifier"
    TYPE_MISMATCH = "TypeMismatch"


@dataclass(frozen=True)
class SourceSpan:
    statement: int
    start: int  # byte offsets into the UTF-8 source
    end: int
    line: int
    column: int


@dataclass(frozen=True)
class ParseError:
    kind: ErrorKind
    message: str
    span: SourceSpan
    truncated: bool = False

    def __str__(self) -> str:
        return f"{self.span.line}:{self.span.column}: {self.kind.value}: {self.message}"


class DSLParseError(ValueError):
    def __init__(self, errors: list[ParseError]):
        self.errors = errors
        head = "; ".join(str(e) for e in errors[:3])
        more = f" (+{len(errors) - 3} more)" if len(errors) > 3 else ""
        super().__init__(head + more)

    @property
    def truncated(self) -> bool:
        return any(e.truncated for e in self.errors)


# ---------------------------------------------------------------------------
# lexer

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\f]+)
  | (?P<newline>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[()\[\],=.+-])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # name | number | op | newline | comment | error | eof
    text: str
    start: int
    end: int
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start, depth = 0, 1, 0, 0
    at_line_start = True
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            tokens.append(Token("error", text[pos], pos, pos + 1, line, col))
            pos += 1
            at_line_start = False
            continue
        kind = m.lastgroup
        val = m.group()
        end = m.end()
        if kind == "newline":
            if depth == 0:
                tokens.append(Token("newline", val, pos, end, line, col))
            line += 1
            line_start = end
            at_line_start = True
        elif kind == "comment":
            # only full-line comments at statement level are kept
            if at_line_start and depth == 0:
                tokens.append(Token("comment", val, pos, end, line, col))
        elif kind != "ws":
            if val in "([":
                depth += 1
            elif val in ")]":
                depth = max(depth - 1, 0)
            tokens.append(Token(kind, val, pos, end, line, col))
            at_line_start = False
        pos = end
    tokens.append(Token("eof", "", n, n, line, n - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# syntax tree


@dataclass
class Num:
    value: float
    tok: Token


@dataclass
class Tup:
    items: list
    tok: Token
    end: int


@dataclass
class ListLit:
    items: list
    tok: Token
    end: int


@dataclass
class Name:
    tok: Token


@dataclass
class Attr:
    base: Token
    attr: Token


@dataclass
class Arg:
    keyword: str | None
    value: Any
    tok: Token


@dataclass
class Call:
    name: Token
    args: list[Arg]
    end: int


class _SyntaxFailure(Exception):
    def __init__(self, message: str, tok: Token, truncated: bool = False,
                 kind: ErrorKind = ErrorKind.SYNTAX):
        self.message = message
        self.tok = tok
        self.truncated = truncated
        self.kind = kind


class _StatementParser:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.i = 0

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.peek()
        self.i += 1
        return t

    def fail(self, what: str, tok: Token | None = None):
        tok = tok or self.peek()
        if tok.kind == "error":
            raise _SyntaxFailure(f"unexpected character {tok.text!r}", tok, kind=ErrorKind.LEXICAL)
        if tok.kind == "eof":
            raise _SyntaxFailure(f"unexpected end of input, expected {what}", tok, truncated=True)
        if tok.kind == "newline":
            raise _SyntaxFailure(f"unexpected end of statement, expected {what}", tok)
        raise _SyntaxFailure(f"expected {what}, found {tok.text!r}", tok)

    def expect_op(self, op: str) -> Token:
        t = self.peek()
        if t.kind == "op" and t.text == op:
            return self.next()
        self.fail(repr(op))

    def expect_name(self) -> Token:
        t = self.peek()
        if t.kind == "name":
            return self.next()
        self.fail("a name")

    def at_end(self) -> bool:
        return self.peek().kind in ("newline", "eof")

    def statement(self):
        first = self.expect_name()
        t = self.peek()
        if t.kind == "op" and t.text == "=":
            self.next()
            if self.peek().kind == "op" and self.peek().text == "[":
                value = self.list_lit()
            else:
                value = self.call(self.expect_name())
            stmt = ("assign", first, value)
        elif t.kind == "op" and t.text == ".":
            self.next()
            meth = self.expect_name()
            if meth.text != "append":
                raise _SyntaxFailure(f"unknown method {meth.text!r}", meth,
                                     kind=ErrorKind.UNKNOWN_COMMAND)
            self.expect_op("(")
            arg = self.value()
            self.expect_op(")")
            stmt = ("append", first, arg)
        elif t.kind == "op" and t.text == "(":
            stmt = ("expr", self.call(first))
        else:
            self.fail("'=', '(' or '.append('")
        if not self.at_end():
            self.fail("end of statement")
        return stmt

    def call(self, name: Token) -> Call:
        self.expect_op("(")
        args: list[Arg] = []
        while not (self.peek().kind == "op" and self.peek().text == ")"):
            tok = self.peek()
            kw = None
            if tok.kind == "name" and self.peek(1).kind == "op" and self.peek(1).text == "=":
                kw = self.next().text
                self.next()
            args.append(Arg(kw, self.value(), tok))
            if self.peek().kind == "op" and self.peek().text == ",":
                self.next()
            elif not (self.peek().kind == "op" and self.peek().text == ")"):
                self.fail("',' or ')'")
        end = self.next().end
        return Call(name, args, end)

    def list_lit(self) -> ListLit:
        start = self.expect_op("[")
        items = []
        while not (self.peek().kind == "op" and self.peek().text == "]"):
            items.append(self.value())
            if self.peek().kind == "op" and self.peek().text == ",":
                self.next()
            elif not (self.peek().kind == "op" and self.peek().text == "]"):
                self.fail("',' or ']'")
        end = self.next().end
        return ListLit(items, start, end)

    def value(self):
        t = self.peek()
        if t.kind == "number":
            self.next()
            return Num(float(t.text), t)
        if t.kind == "op" and t.text in "+-":
            self.next()
            num = self.peek()
            if num.kind != "number":
                self.fail("a number")
            self.next()
            v = float(num.text)
            return Num(-v if t.text == "-" else v, t)
        if t.kind == "op" and t.text == "(":
            self.next()
            items = [self.value()]
            while self.peek().kind == "op" and self.peek().text == ",":
                self.next()
                if self.peek().kind == "op" and self.peek().text == ")":
                    break
                items.append(self.value())
            end = self.expect_op(")").end
            return Tup(items, t, end)
        if t.kind == "op" and t.text == "[":
            return self.list_lit()
        if t.kind == "name":
            self.next()
            if self.peek().kind == "op" and self.peek().text == ".":
                self.next()
                return Attr(t, self.expect_name())
            return Name(t)
        self.fail("a value")


# ---------------------------------------------------------------------------
# command signatures

_OPS = {o.value: o for o in Operation}
_EXTS = {e.value: e for e in ExtentType}
_BOOLS = {"true": True, "false": False}


@dataclass(frozen=True)
class _Param:
    name: str
    type: str
    required: bool = True
    default: Any = None
    aliases: tuple[str, ...] = ()


_SIGS: dict[str, list[_Param]] = {
    "add_sketchplane": [_Param("origin_point", "vec3", aliases=("origin",)),
                        _Param("x_axis", "vec3"), _Param("y_axis", "vec3"),
                        _Param("normal", "vec3", False)],
    "add_line": [_Param("start_point", "vec2", aliases=("start",)),
                 _Param("end_point", "vec2", aliases=("end",))],
    "add_arc": [_Param("start_point", "vec2", aliases=("start",)),
                _Param("end_point", "vec2", aliases=("end",)),
                _Param("mid_point", "vec2", aliases=("mid",))],
    "add_circle": [_Param("center_point", "vec2", aliases=("center",)),
                   _Param("radius", "num")],
    "add_loop": [_Param("curves", "list:curve", aliases=("curves_list",))],
    "add_profile": [_Param("loops_list", "list:loop", aliases=("loops",))],
    "add_sketch": [_Param("sketchplane", "plane", aliases=("plane", "sketch_plane")),
                   _Param("profile", "profile"),
                   _Param("position", "vec2", False, (0.0, 0.0)),
                   _Param("size", "num", False, 1.0)],
    "add_extrude": [_Param("sketch", "sketch"),
                    _Param("operation", "op"),
                    _Param("type", "ext", aliases=("extent_type",)),
                    _Param("extent_size", "num", aliases=("extent", "extent_one")),
                    _Param("extent_two", "num", False, 0.0)],
    "make_horizontal": [_Param("line0", "line", aliases=("line",))],
    "make_vertical": [_Param("line0", "line", aliases=("line",))],
    "fix_size": [_Param("curve0", "curve", aliases=("curve",)), _Param("size", "num")],
    "make_coincident": [_Param("point0", "point"), _Param("point1", "point")],
    "make_parallel": [_Param("line0", "line"), _Param("line1", "line")],
    "make_perpendicular": [_Param("line0", "line"), _Param("line1", "line")],
    "make_tangent": [_Param("curve0", "curve"), _Param("curve1", "curve")],
    "make_mirror": [_Param("curve0", "curve"), _Param("curve1", "curve"),
                    _Param("axis", "line")],
    "make_angle": [_Param("line0", "line"), _Param("line1", "line"),
                   _Param("angle", "num"), _Param("clockwise", "bool", False, False)],
}

_RESULT_KIND = {
    "add_sketchplane": "plane", "add_line": "curve", "add_arc": "curve",
    "add_circle": "curve", "add_loop": "loop", "add_profile": "profile",
    "add_sketch": "sketch", "add_extrude": "extrude",
}

COMMANDS = tuple(_SIGS)


@dataclass
class _Binding:
    kind: str  # plane|curve|loop|profile|sketch|extrude|constraint|list|poison
    index: int = -1
    items: list = field(default_factory=list)  # for lists: [(kind, index)]


class _SemanticFailure(Exception):
    def __init__(self, kind: ErrorKind, message: str, tok: Token, end: int | None = None):
        self.kind = kind
        self.message = message
        self.tok = tok
        self.end = end


class _Evaluator:
    def __init__(self):
        self.env: dict[str, _Binding] = {}
        self.stmts: list = []

    def curve_kind(self, index: int) -> str:
        return self.stmts[index].curve.kind

    def lookup(self, tok: Token) -> _Binding:
        b = self.env.get(tok.text)
        if b is None:
            raise _SemanticFailure(ErrorKind.UNDEFINED_IDENTIFIER,
                                   f"undefined identifier {tok.text!r}", tok)
        if b.kind == "poison":
            raise _Poisoned()
        return b

    def number(self, node) -> float:
        if isinstance(node, Num):
            if not math.isfinite(node.value):
                raise _SemanticFailure(ErrorKind.LEXICAL, "number out of range", node.tok)
            return node.value
        raise _SemanticFailure(ErrorKind.TYPE_MISMATCH, "expected a number", _first_tok(node))

    def vec(self, node, n: int) -> tuple:
        if not isinstance(node, Tup) or len(node.items) != n:
            raise _SemanticFailure(ErrorKind.TYPE_MISMATCH, f"expected a {n}-tuple",
                                   _first_tok(node))
        return tuple(self.number(x) for x in node.items)

    def ref(self, node, kind: str) -> int:
        if not isinstance(node, Name):
            raise _SemanticFailure(ErrorKind.TYPE_MISMATCH, f"expected a {kind} name",
                                   _first_tok(node))
        b = self.lookup(node.tok)
        want = "curve" if kind == "line" else kind
        if b.kind != want:
            raise _SemanticFailure(ErrorKind.TYPE_MISMATCH,
                                   f"{node.tok.text!r} is a {b.kind}, expected {kind}", node.tok)
        if kind == "line" and self.curve_kind(b.index) != "line":
            raise _SemanticFailure(ErrorKind.TYPE_MISMATCH,
                                   f"{node.tok.text!r} is not a line", node.tok)
        return b.index

    def ref_list(self, node, kind: str) -> tuple[int, ...]:
        if isinstance(node, Name):
            b = self.lookup(node.tok)
            if b.kind != "list":
                raise _SemanticFailure(ErrorKind.TYPE_MISMATCH,
                                       f"{node.tok.text!r} is not a list", node.tok)
            for k, _ in b.items:
                if k != kind:
                    raise _SemanticFailure(ErrorKind.TYPE_MISMATCH,
                                           f"list {node.tok.text!r} holds a {k}, expected {kind}",
                                           node.tok)
            return tuple(i for _, i in b.items)
        if isinstance(node, ListLit):
            return tuple(self.ref(x, kind) for x in node.items)
        raise _SemanticFailure(ErrorKind.TYPE_MISMATCH, f"expected a list of {kind}s",
                               _first_tok(node))

    def enum(self, node, table: dict, what: str):
        if isinstance(node, Name) and node.tok.text.lower() in table:
            return table[node.tok.text.lower()]
        raise _SemanticFailure(ErrorKind.TYPE_MISMATCH, f"expected {what}", _first_tok(node))

    def point(self, node):
        if isinstance(node, Tup):
            return self.vec(node, 2)
        if isinstance(node, Attr):
            b = self.lookup(node.base)
            if b.kind != "curve":
                raise _SemanticFailure(ErrorKind.TYPE_MISMATCH,
                                       f"{node.base.text!r} is not a curve", node.base)
            sel = node.attr.text.lower()
            from .model import POINT_SELECTORS
            if sel not in POINT_SELECTORS[self.curve_kind(b.index)]:
                raise _SemanticFailure(ErrorKind.TYPE_MISMATCH,
                                       f"{self.curve_kind(b.index)} has no point {sel!r}", node.attr)
            return PointRef(b.index, sel)
        raise _SemanticFailure(ErrorKind.TYPE_MISMATCH, "expected a curve point or (u, v)",
                               _first_tok(node))

    def convert(self, node, ptype: str):
        if ptype == "vec3":
            return self.vec(node, 3)
        if ptype == "vec2":
            return self.vec(node, 2)
        if ptype == "num":
            return self.number(node)
        if ptype.startswith("list:"):
            return self.ref_list(node, ptype[5:])
        if ptype == "op":
            return self.enum(node, _OPS, "an operation (new_body|join|cut|intersect)")
        if ptype == "ext":
            return self.enum(node, _EXTS, "an extent type (one_sided|symmetric|two_sided)")
        if ptype == "bool":
            return self.enum(node, _BOOLS, "True or False")
        if ptype == "point":
            return self.point(node)
        return self.ref(node, ptype)

    def bind_args(self, call: Call) -> dict[str, Any]:
        cmd = call.name.text
        sig = _SIGS.get(cmd)
        if sig is None:
            raise _SemanticFailure(ErrorKind.UNKNOWN_COMMAND, f"unknown command {cmd!r}",
                                   call.name, call.end)
        positional = [a for a in call.args if a.keyword is None]
        if any(a.keyword is None for a in call.args[len(positional):]):
            raise _SemanticFailure(ErrorKind.SYNTAX, "positional argument after keyword",
                                   call.name, call.end)
        params = list(sig)
        if cmd == "add_sketchplane" and len(positional) == 4:
            # pseudo-code order: origin, normal, x_axis, y_axis
            params = [sig[0], sig[3], sig[1], sig[2]]
        if len(positional) > len(params):
            raise _SemanticFailure(ErrorKind.ARITY_MISMATCH,
                                   f"{cmd} takes at most {len(params)} arguments, "
                                   f"got {len(positional)}", call.name, call.end)
        nodes: dict[str, Any] = {}
        for p, a in zip(params, positional):
            nodes[p.name] = a
        lookup = {}
        for p in sig:
            lookup[p.name] = p
            for al in p.aliases:
                lookup[al] = p
        for a in call.args[len(positional):]:
            p = lookup.get(a.keyword)
            if p is None:
                raise _SemanticFailure(ErrorKind.ARITY_MISMATCH,
                                       f"{cmd} has no parameter {a.keyword!r}", a.tok, call.end)
            if p.name in nodes:
                raise _SemanticFailure(ErrorKind.ARITY_MISMATCH,
                                       f"duplicate argument {p.name!r}", a.tok, call.end)
            nodes[p.name] = a
        missing = [p.name for p in sig if p.required and p.name not in nodes]
        if missing:
            raise _SemanticFailure(ErrorKind.ARITY_MISMATCH,
                                   f"{cmd} missing argument(s): {', '.join(missing)}",
                                   call.name, call.end)
        out = {}
        for p in sig:
            out[p.name] = self.convert(nodes[p.name].value, p.type) if p.name in nodes \
                else p.default
        return out

    def run_call(self, call: Call, annotation: str | None):
        cmd = call.name.text
        a = self.bind_args(call)
        ann = {"annotation": annotation}
        if cmd == "add_sketchplane":
            if a["normal"] is not None:
                from .model import make_sketchplane, DegenerateAxes
                import warnings
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    try:
                        make_sketchplane(a["origin_point"], a["x_axis"], a["y_axis"], a["normal"])
                    except DegenerateAxes:
                        pass
            stmt = PlaneDef(a["origin_point"], a["x_axis"], a["y_axis"], **ann)
        elif cmd == "add_line":
            stmt = CurveDef(Line(a["start_point"], a["end_point"]), **ann)
        elif cmd == "add_arc":
            stmt = CurveDef(Arc(a["start_point"], a["end_point"], a["mid_point"]), **ann)
        elif cmd == "add_circle":
            stmt = CurveDef(Circle(a["center_point"], a["radius"]), **ann)
        elif cmd == "add_loop":
            stmt = LoopDef(a["curves"], **ann)
        elif cmd == "add_profile":
            stmt = ProfileDef(a["loops_list"], **ann)
        elif cmd == "add_sketch":
            stmt = SketchDef(a["sketchplane"], a["profile"], a["position"], a["size"], **ann)
        elif cmd == "add_extrude":
            stmt = ExtrudeDef(a["sketch"], a["operation"], a["type"], a["extent_size"],
                              a["extent_two"], **ann)
        else:
            stmt = ConstraintDef(_make_constraint(cmd, a, self, call), **ann)
        self.stmts.append(stmt)
        return _RESULT_KIND.get(cmd, "constraint"), len(self.stmts) - 1


class _Poisoned(Exception):
    """Raised when a statement uses a name whose definition already failed."""


def _make_constraint(cmd: str, a: dict, ev: _Evaluator, call: Call):
    if cmd == "make_horizontal":
        return Horizontal(a["line0"])
    if cmd == "make_vertical":
        return Vertical(a["line0"])
    if cmd == "fix_size":
        return FixSize(a["curve0"], a["size"])
    if cmd == "make_coincident":
        if not any(isinstance(p, PointRef) for p in (a["point0"], a["point1"])):
            raise _SemanticFailure(ErrorKind.TYPE_MISMATCH,
                                   "make_coincident needs at least one curve point",
                                   call.name, call.end)
        return Coincident(a["point0"], a["point1"])
    if cmd == "make_parallel":
        return Parallel(a["line0"], a["line1"])
    if cmd == "make_perpendicular":
        return Perpendicular(a["line0"], a["line1"])
    if cmd == "make_tangent":
        kinds = (ev.curve_kind(a["curve0"]), ev.curve_kind(a["curve1"]))
        if kinds == ("line", "line"):
            raise _SemanticFailure(ErrorKind.TYPE_MISMATCH, "tangent between two lines",
                                   call.name, call.end)
        return Tangent(a["curve0"], a["curve1"])
    if cmd == "make_mirror":
        if ev.curve_kind(a["curve0"]) != ev.curve_kind(a["curve1"]):
            raise _SemanticFailure(ErrorKind.TYPE_MISMATCH,
                                   "make_mirror requires curves of the same type",
                                   call.name, call.end)
        return Mirror(a["curve0"], a["curve1"], a["axis"])
    return Angle(a["line0"], a["line1"], a["angle"], a["clockwise"])


def _first_tok(node) -> Token:
    if isinstance(node, Attr):
        return node.base
    return node.tok


def _split_statements(tokens: list[Token]):
    """Yield (comments, statement tokens) groups split at top-level newlines."""
    comments: list[Token] = []
    cur: list[Token] = []
    for t in tokens:
        if t.kind == "comment":
            comments.append(t)
        elif t.kind in ("newline", "eof"):
            if cur:
                yield comments, cur + [t]
                comments, cur = [], []
            if t.kind == "eof":
                break
        else:
            cur.append(t)


def _comment_text(tok: Token) -> str:
    body = tok.text[1:]
    return body[1:] if body.startswith(" ") else body


def parse_program(text: str) -> CADProgram:
    """Parse DSL text into a CADProgram.

    Raises DSLParseError carrying every error found; no partial program is
    ever returned.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    tokens = tokenize(text)
    ev = _Evaluator()
    errors: list[ParseError] = []
    pending: list[str] = []
    byte_index = _ByteIndex(text)

    for sidx, (comments, toks) in enumerate(_split_statements(tokens)):
        pending.extend(_comment_text(c) for c in comments)
        stmt_start = toks[0].start
        stmt_end = toks[-2].end if len(toks) > 1 else toks[0].end
        if toks[-1].kind == "eof":
            stmt_end = toks[-1].end

        def err(kind, message, tok, end=None, truncated=False):
            s = min(max(tok.start, stmt_start), stmt_end)
            e = min(max(end if end is not None else tok.end, s), stmt_end)
            span = SourceSpan(sidx, byte_index(s), byte_index(e), tok.line, tok.col)
            errors.append(ParseError(kind, message, span, truncated))

        lex_errors = [t for t in toks if t.kind == "error"]
        target = None
        try:
            if lex_errors:
                raise _SyntaxFailure(f"unexpected character {lex_errors[0].text!r}",
                                     lex_errors[0], kind=ErrorKind.LEXICAL)
            parsed = _StatementParser(toks).statement()
            if parsed[0] == "assign":
                target = parsed[1].text
            annotation = "\n".join(pending) if pending else None
            _execute(ev, parsed, annotation)
            if parsed[0] != "append" and not (parsed[0] == "assign" and isinstance(parsed[2], ListLit)):
                pending = []
        except _SyntaxFailure as exc:
            err(exc.kind, exc.message, exc.tok, truncated=exc.truncated)
            if target is None and toks[0].kind == "name" and len(toks) > 1 \
                    and toks[1].text == "=":
                target = toks[0].text
            if target:
                ev.env[target] = _Binding("poison")
        except _SemanticFailure as exc:
            err(exc.kind, exc.message, exc.tok, exc.end)
            if target:
                ev.env[target] = _Binding("poison")
        except _Poisoned:
            if target:
                ev.env[target] = _Binding("poison")

    if errors:
        raise DSLParseError(errors)
    return CADProgram(tuple(ev.stmts))


def _execute(ev: _Evaluator, parsed, annotation: str | None) -> None:
    kind = parsed[0]
    if kind == "append":
        target, arg = parsed[1], parsed[2]
        b = ev.lookup(target)
        if b.kind != "list":
            raise _SemanticFailure(ErrorKind.TYPE_MISMATCH, f"{target.text!r} is not a list",
                                   target)
        if not isinstance(arg, Name):
            raise _SemanticFailure(ErrorKind.TYPE_MISMATCH, "append expects a name",
                                   _first_tok(arg))
        item = ev.lookup(arg.tok)
        if item.kind not in ("curve", "loop"):
            raise _SemanticFailure(ErrorKind.TYPE_MISMATCH,
                                   f"cannot append a {item.kind} to a list", arg.tok)
        b.items.append((item.kind, item.index))
        return
    if kind == "assign" and isinstance(parsed[2], ListLit):
        items = []
        for node in parsed[2].items:
            if not isinstance(node, Name):
                raise _SemanticFailure(ErrorKind.TYPE_MISMATCH, "list items must be names",
                                       _first_tok(node))
            item = ev.lookup(node.tok)
            if item.kind not in ("curve", "loop"):
                raise _SemanticFailure(ErrorKind.TYPE_MISMATCH,
                                       f"cannot put a {item.kind} in a list", node.tok)
            items.append((item.kind, item.index))
        ev.env[parsed[1].text] = _Binding("list", items=items)
        return
    call = parsed[2] if kind == "assign" else parsed[1]
    rkind, index = ev.run_call(call, annotation)
    if kind == "assign":
        ev.env[parsed[1].text] = _Binding(rkind, index)


class _ByteIndex:
    def __init__(self, text: str):
        self.text = text
        self.ascii = text.isascii()

    def __call__(self, i: int) -> int:
        return i if self.ascii else len(self.text[:i].encode("utf-8"))


# ---------------------------------------------------------------------------
# serializer


def _num(x: float) -> str:
    return repr(float(x))


def _tuple(v) -> str:
    return "(" + ", ".join(_num(x) for x in v) + ")"


def serialize_program(program: CADProgram) -> str:
    """Canonical text: one statement per line, auto-named identifiers, LF endings."""
    names: dict[int, str] = {}
    counters: dict[str, int] = {}
    lines: list[str] = []

    def fresh(prefix: str) -> str:
        k = counters.get(prefix, 0)
        counters[prefix] = k + 1
        return f"{prefix}{k}"

    def point(p) -> str:
        if isinstance(p, PointRef):
            return f"{names[p.curve]}.{p.which}"
        return _tuple(p)

    for i, st in enumerate(program.statements):
        if st.annotation is not None:
            lines.extend(f"# {ln}" if ln else "#" for ln in st.annotation.split("\n"))
        if isinstance(st, PlaneDef):
            names[i] = fresh("SketchPlane")
            lines.append(f"{names[i]} = add_sketchplane({_tuple(st.origin)}, "
                         f"{_tuple(st.x_axis)}, {_tuple(st.y_axis)})")
        elif isinstance(st, CurveDef):
            c = st.curve
            k = counters.get("curve", 0)
            counters["curve"] = k + 1
            if isinstance(c, Line):
                names[i] = f"Line{k}"
                lines.append(f"{names[i]} = add_line({_tuple(c.start)}, {_tuple(c.end)})")
            elif isinstance(c, Arc):
                names[i] = f"Arc{k}"
                lines.append(f"{names[i]} = add_arc({_tuple(c.start)}, {_tuple(c.end)}, "
                             f"{_tuple(c.mid)})")
            else:
                names[i] = f"Circle{k}"
                lines.append(f"{names[i]} = add_circle({_tuple(c.center)}, {_num(c.radius)})")
        elif isinstance(st, (LoopDef, ProfileDef)):
            is_loop = isinstance(st, LoopDef)
            lst = fresh("Curves" if is_loop else "Loops")
            lines.append(f"{lst} = []")
            for r in (st.curves if is_loop else st.loops):
                lines.append(f"{lst}.append({names[r]})")
            names[i] = fresh("Loop" if is_loop else "Profile")
            cmd = "add_loop" if is_loop else "add_profile"
            lines.append(f"{names[i]} = {cmd}({lst})")
        elif isinstance(st, SketchDef):
            names[i] = fresh("Sketch")
            extra = ""
            if tuple(st.position) != (0.0, 0.0) or st.size != 1.0:
                extra = f", {_tuple(st.position)}, {_num(st.size)}"
            lines.append(f"{names[i]} = add_sketch({names[st.plane]}, {names[st.profile]}{extra})")
        elif isinstance(st, ExtrudeDef):
            names[i] = fresh("Extrude")
            extra = ""
            if st.extent_type is ExtentType.TWO_SIDED or st.extent_two != 0.0:
                extra = f", {_num(st.extent_two)}"
            lines.append(f"{names[i]} = add_extrude({names[st.sketch]}, {st.operation.value}, "
                         f"{st.extent_type.value}, {_num(st.extent_one)}{extra})")
        elif isinstance(st, ConstraintDef):
            c = st.constraint
            if isinstance(c, (Horizontal, Vertical)):
                args = [names[c.line]]
            elif isinstance(c, FixSize):
                args = [names[c.curve], _num(c.size)]
            elif isinstance(c, Coincident):
                args = [point(c.point_a), point(c.point_b)]
            elif isinstance(c, (Parallel, Perpendicular)):
                args = [names[c.line_a], names[c.line_b]]
            elif isinstance(c, Tangent):
                args = [names[c.curve_a], names[c.curve_b]]
            elif isinstance(c, Mirror):
                args = [names[c.curve_a], names[c.curve_b], names[c.axis]]
            else:
                args = [names[c.line_a], names[c.line_b], _num(c.angle), str(bool(c.clockwise))]
            lines.append(f"{c.command}({', '.join(args)})")
        else:
            raise TypeError(f"unknown statement {st!r}")
    return "\n".join(lines) + "\n" if lines else ""


def count_tokens(text: str) -> int:
    """Length proxy used by the dataset filter: ceil(utf-8 bytes / 4)."""
    n = len(text.encode("utf-8"))
    return (n + 3) // 4


def load(path) -> CADProgram:
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read())


def dump(program: CADProgram, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_program(program))
