"""Import and export of deterministic state-based Büchi automata in HOA v1.

Only the subset that LTL translators emit for such automata is accepted:
explicit edge labels, a single initial state, ``Acceptance: 1 Inf(0)`` with
marks on states. Everything else fails loudly. Header claims such as
``properties: deterministic`` are not trusted; determinism is checked by
enumerating assignments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from omega_lab.automaton import DBA, MAX_PROPS, MISSING


class HoaError(Exception):
    def __init__(self, message, line=None, col=None):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col

    def located(self, filename="<input>") -> str:
        if self.line is None:
            return f"{filename}: {self.message}"
        return f"{filename}:{self.line}:{self.col}: {self.message}"


class HoaSyntaxError(HoaError):
    pass


class UnsupportedFeature(HoaError):
    def __init__(self, feature, line=None, col=None):
        super().__init__(f"unsupported feature: {feature}", line, col)
        self.feature = feature


class NotADBA(HoaError):
    pass


# ----------------------------------------------------------------------------
# label formulas


@dataclass(frozen=True)
class Const:
    value: bool

    def eval(self, sym: int) -> bool:
        return self.value


@dataclass(frozen=True)
class Var:
    index: int

    def eval(self, sym: int) -> bool:
        return bool((sym >> self.index) & 1)


@dataclass(frozen=True)
class Not:
    arg: object

    def eval(self, sym: int) -> bool:
        return not self.arg.eval(sym)


@dataclass(frozen=True)
class And:
    args: tuple

    def eval(self, sym: int) -> bool:
        return all(a.eval(sym) for a in self.args)


@dataclass(frozen=True)
class Or:
    args: tuple

    def eval(self, sym: int) -> bool:
        return any(a.eval(sym) for a in self.args)


def variables(f) -> set[int]:
    if isinstance(f, Var):
        return {f.index}
    if isinstance(f, Not):
        return variables(f.arg)
    if isinstance(f, (And, Or)):
        return set().union(*(variables(a) for a in f.args))
    return set()


def satisfying(f, prop_count: int) -> frozenset[int]:
    return frozenset(s for s in range(1 << prop_count) if f.eval(s))


# ----------------------------------------------------------------------------
# raw parse


@dataclass
class Edge:
    label: object
    dest: int
    marks: tuple[int, ...] = ()
    line: int = 0


@dataclass
class StateBlock:
    id: int
    marks: tuple[int, ...] = ()
    name: str | None = None
    edges: list[Edge] = field(default_factory=list)


@dataclass
class RawAutomaton:
    header_fields: dict[str, list]
    ap_names: list[str]
    state_blocks: list[StateBlock]
    acceptance_spec: str
    start: int
    name: str | None = None


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>/\*)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<marker>--BODY--|--END--|--ABORT--)
  | (?P<header>[A-Za-z_][A-Za-z0-9_-]*:)
  | (?P<int>\d+)
  | (?P<alias>@[A-Za-z0-9_-]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_-]*)
  | (?P<punct>[\[\]{}()!&|])
""",
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise HoaSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "comment":
            depth, end = 1, pos + 2
            while depth:
                nxt = min((i for i in (text.find("/*", end), text.find("*/", end)) if i >= 0), default=-1)
                if nxt < 0:
                    raise HoaSyntaxError("unterminated comment", line, col)
                depth += 1 if text.startswith("/*", nxt) else -1
                end = nxt + 2
            chunk = text[pos:end]
        else:
            chunk = m.group()
            end = m.end()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rfind("\n") + 1
        pos = end
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.aliases: dict[str, object] = {}
        self.ap_count = None

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return HoaSyntaxError(msg, tok.line, tok.col)

    def expect(self, kind, text=None) -> Token:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            raise self.error(f"expected {want}, found {t.text or 'end of input'!r}")
        return self.advance()

    # header ------------------------------------------------------------

    def parse(self) -> RawAutomaton:
        first = self.tok
        if first.kind != "header" or first.text != "HOA:":
            raise self.error("document must start with 'HOA: v1'")
        self.advance()
        version = self.expect("ident")
        if version.text != "v1":
            raise UnsupportedFeature(f"HOA version {version.text}", version.line, version.col)

        header: dict[str, list] = {"HOA": ["v1"]}
        ap_names = None
        n_states = None
        start = None
        acceptance = None
        name = None

        while self.tok.kind == "header":
            key_tok = self.advance()
            key = key_tok.text[:-1]
            values = self._header_values()
            header.setdefault(key, []).extend(t.text for t in values)
            if key == "States":
                n_states = self._single_int(values, key_tok)
            elif key == "Start":
                if start is not None:
                    raise UnsupportedFeature("multiple initial states", key_tok.line, key_tok.col)
                if len(values) != 1 or values[0].kind != "int":
                    raise UnsupportedFeature("conjunctive or multiple initial states", key_tok.line, key_tok.col)
                start = int(values[0].text)
            elif key == "AP":
                ap_names = self._ap(values, key_tok)
            elif key == "Acceptance":
                acceptance = " ".join(t.text for t in values)
                acceptance = re.sub(r"\s*([()])\s*", r"\1", acceptance)
            elif key == "Alias":
                self._alias(values, key_tok)
            elif key == "name":
                name = values[0].text[1:-1] if values and values[0].kind == "string" else None

        body_tok = self.tok
        if body_tok.kind == "marker" and body_tok.text == "--ABORT--":
            raise self.error("document aborted")
        self.expect("marker", "--BODY--")
        if start is None:
            raise HoaSyntaxError("missing 'Start:' header", body_tok.line, body_tok.col)
        if acceptance is None:
            raise HoaSyntaxError("missing 'Acceptance:' header", body_tok.line, body_tok.col)
        if ap_names is None:
            ap_names = []
            self.ap_count = 0

        blocks = self._body()
        end_tok = self.tok
        if end_tok.kind == "marker" and end_tok.text == "--ABORT--":
            raise self.error("document aborted")
        self.expect("marker", "--END--")
        if self.tok.kind != "eof":
            raise UnsupportedFeature("multiple automata in one document", self.tok.line, self.tok.col)

        return self._assemble(header, ap_names, blocks, acceptance, start, n_states, name, body_tok)

    def _header_values(self) -> list[Token]:
        vals = []
        while self.tok.kind not in ("header", "marker", "eof"):
            vals.append(self.advance())
        return vals

    def _single_int(self, values, key_tok) -> int:
        if len(values) != 1 or values[0].kind != "int":
            raise HoaSyntaxError(f"'{key_tok.text}' expects one integer", key_tok.line, key_tok.col)
        return int(values[0].text)

    def _ap(self, values, key_tok) -> list[str]:
        if not values or values[0].kind != "int":
            raise HoaSyntaxError("'AP:' expects a count followed by names", key_tok.line, key_tok.col)
        count = int(values[0].text)
        names = []
        for t in values[1:]:
            if t.kind != "string":
                raise HoaSyntaxError("proposition names must be quoted", t.line, t.col)
            names.append(t.text[1:-1])
        if len(names) != count:
            raise HoaSyntaxError(f"'AP:' declares {count} propositions but lists {len(names)}", key_tok.line, key_tok.col)
        if len(set(names)) != len(names):
            raise HoaSyntaxError("duplicate proposition name", key_tok.line, key_tok.col)
        if count > MAX_PROPS:
            raise UnsupportedFeature(f"more than {MAX_PROPS} atomic propositions", key_tok.line, key_tok.col)
        self.ap_count = count
        return names

    def _alias(self, values, key_tok):
        if not values or values[0].kind != "alias":
            raise HoaSyntaxError("'Alias:' expects @name followed by a label", key_tok.line, key_tok.col)
        if self.ap_count is None:
            raise UnsupportedFeature("Alias declared before AP", key_tok.line, key_tok.col)
        name = values[0].text
        if name in self.aliases:
            raise HoaSyntaxError(f"alias {name} redefined", values[0].line, values[0].col)
        sub = _Parser.__new__(_Parser)
        sub.toks = values[1:] + [Token("eof", "", key_tok.line, key_tok.col)]
        sub.i = 0
        sub.aliases = self.aliases
        sub.ap_count = self.ap_count
        expr = sub._label_or()
        if sub.tok.kind != "eof":
            raise sub.error("trailing tokens in alias definition")
        self.aliases[name] = expr

    # body --------------------------------------------------------------

    def _body(self) -> list[StateBlock]:
        blocks = []
        while self.tok.kind == "header" and self.tok.text == "State:":
            st = self.advance()
            if self.tok.kind == "punct" and self.tok.text == "[":
                raise UnsupportedFeature("state labels", self.tok.line, self.tok.col)
            sid = int(self.expect("int").text)
            block = StateBlock(sid)
            if self.tok.kind == "string":
                block.name = self.advance().text[1:-1]
            if self.tok.kind == "punct" and self.tok.text == "{":
                block.marks = self._marks()
            while self.tok.kind == "punct" and self.tok.text == "[":
                line = self.tok.line
                self.advance()
                label = self._label_or()
                self.expect("punct", "]")
                dest_tok = self.tok
                if dest_tok.kind != "int":
                    raise self.error("expected destination state")
                self.advance()
                if self.tok.kind == "punct" and self.tok.text == "&":
                    raise UnsupportedFeature("alternating (conjunctive) destinations", self.tok.line, self.tok.col)
                marks = self._marks() if (self.tok.kind == "punct" and self.tok.text == "{") else ()
                block.edges.append(Edge(label, int(dest_tok.text), marks, line))
            if self.tok.kind == "int":
                raise UnsupportedFeature("implicit-label edges", self.tok.line, self.tok.col)
            blocks.append((block, st))
        if self.tok.kind not in ("marker",):
            raise self.error(f"unexpected {self.tok.text!r} in body")
        return blocks

    def _marks(self) -> tuple[int, ...]:
        self.expect("punct", "{")
        marks = []
        while self.tok.kind == "int":
            marks.append(int(self.advance().text))
        self.expect("punct", "}")
        return tuple(marks)

    def _label_or(self):
        args = [self._label_and()]
        while self.tok.kind == "punct" and self.tok.text == "|":
            self.advance()
            args.append(self._label_and())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def _label_and(self):
        args = [self._label_not()]
        while self.tok.kind == "punct" and self.tok.text == "&":
            self.advance()
            args.append(self._label_not())
        return args[0] if len(args) == 1 else And(tuple(args))

    def _label_not(self):
        if self.tok.kind == "punct" and self.tok.text == "!":
            self.advance()
            return Not(self._label_not())
        return self._label_atom()

    def _label_atom(self):
        t = self.tok
        if t.kind == "ident" and t.text in ("t", "f"):
            self.advance()
            return Const(t.text == "t")
        if t.kind == "int":
            self.advance()
            idx = int(t.text)
            if idx >= (self.ap_count or 0):
                raise HoaSyntaxError(f"proposition index {idx} out of range", t.line, t.col)
            return Var(idx)
        if t.kind == "alias":
            self.advance()
            if t.text not in self.aliases:
                raise HoaSyntaxError(f"undefined alias {t.text}", t.line, t.col)
            return self.aliases[t.text]
        if t.kind == "punct" and t.text == "(":
            self.advance()
            inner = self._label_or()
            self.expect("punct", ")")
            return inner
        raise self.error(f"expected label expression, found {t.text or 'end of input'!r}")

    def _assemble(self, header, ap_names, blocks, acceptance, start, n_states, name, body_tok):
        by_id: dict[int, StateBlock] = {}
        for block, tok in blocks:
            if block.id in by_id:
                raise HoaSyntaxError(f"state {block.id} defined twice", tok.line, tok.col)
            if n_states is not None and block.id >= n_states:
                raise HoaSyntaxError(f"state {block.id} exceeds declared States: {n_states}", tok.line, tok.col)
            by_id[block.id] = block
        if n_states is None:
            n_states = max(by_id, default=-1) + 1
        for q in range(n_states):
            by_id.setdefault(q, StateBlock(q))
        for block in by_id.values():
            for e in block.edges:
                if not 0 <= e.dest < n_states:
                    raise HoaSyntaxError(f"edge of state {block.id} targets missing state {e.dest}", e.line, 1)
        if not 0 <= start < n_states:
            raise HoaSyntaxError(f"initial state {start} does not exist", body_tok.line, body_tok.col)
        return RawAutomaton(
            header_fields=header,
            ap_names=list(ap_names),
            state_blocks=[by_id[q] for q in range(n_states)],
            acceptance_spec=acceptance,
            start=start,
            name=name,
        )


def parse_hoa(text: str) -> RawAutomaton:
    """Parse one HOA v1 document (LF or CRLF line endings)."""
    if text.startswith("\ufeff"):
        text = text[1:]
    return _Parser(text).parse()


# ----------------------------------------------------------------------------
# validation / completion


def validate_dba(raw: RawAutomaton) -> DBA:
    acc_names = raw.header_fields.get("acc-name")
    if acc_names and acc_names[0] != "Buchi":
        raise NotADBA(f"acceptance '{' '.join(acc_names)}' is not Büchi")
    if raw.acceptance_spec.replace(" ", "") != "1Inf(0)":
        raise NotADBA(f"acceptance condition '{raw.acceptance_spec}' is not state-based Büchi 'Inf(0)'")
    prop_count = len(raw.ap_names)
    n_sym = 1 << prop_count
    table = np.full((len(raw.state_blocks), n_sym), MISSING, dtype=np.int64)
    accepting = set()
    for block in raw.state_blocks:
        if any(m != 0 for m in block.marks):
            raise NotADBA(f"state {block.id} carries acceptance mark outside Inf(0)")
        if 0 in block.marks:
            accepting.add(block.id)
        row = table[block.id]
        owner = {}
        for e in block.edges:
            if e.marks:
                raise NotADBA(f"transition-based acceptance mark on an edge of state {block.id}", e.line, 1)
            for sym in satisfying(e.label, prop_count):
                if row[sym] != MISSING:
                    witness = {raw.ap_names[i]: (sym >> i) & 1 for i in range(prop_count)}
                    raise NotADBA(
                        f"nondeterminism in state {block.id}: assignment {witness} enables edges to "
                        f"{owner[sym]} and {e.dest}",
                        e.line,
                        1,
                    )
                row[sym] = e.dest
                owner[sym] = e.dest
    return DBA(
        n_states=len(raw.state_blocks),
        initial=raw.start,
        delta=table,
        accepting=frozenset(accepting),
        ap_names=tuple(raw.ap_names),
        name=raw.name or "",
    )


def complete(dba: DBA) -> DBA:
    """Route missing transitions to a fresh non-accepting trap state."""
    if dba.is_complete:
        return dba
    trap = dba.n_states
    table = np.vstack([np.array(dba.delta), np.full((1, dba.n_symbols), trap, dtype=np.int64)])
    table[table == MISSING] = trap
    return DBA(
        n_states=dba.n_states + 1,
        initial=dba.initial,
        delta=table,
        accepting=dba.accepting,
        ap_names=dba.ap_names,
        name=dba.name,
        completed=True,
    )


def load_dba(text: str, *, make_complete: bool = True) -> DBA:
    dba = validate_dba(parse_hoa(text))
    return complete(dba) if make_complete else dba


# ----------------------------------------------------------------------------
# emission


def _cube(sym: int, prop_count: int) -> str:
    return "&".join(str(i) if (sym >> i) & 1 else f"!{i}" for i in range(prop_count))


def _label_text(symbols: list[int], prop_count: int) -> str:
    if len(symbols) == 1 << prop_count:
        return "t"
    cubes = [_cube(s, prop_count) for s in sorted(symbols)]
    return " | ".join(cubes)


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def emit_hoa(dba: DBA) -> str:
    """Normalized HOA text: one edge per destination, labels as sums of full cubes."""
    lines = ["HOA: v1"]
    if dba.name:
        lines.append(f"name: {_quote(dba.name)}")
    lines.append(f"States: {dba.n_states}")
    lines.append(f"Start: {dba.initial}")
    lines.append(" ".join([f"AP: {dba.prop_count}"] + [_quote(a) for a in dba.ap_names]))
    lines.append("acc-name: Buchi")
    lines.append("Acceptance: 1 Inf(0)")
    props = ["trans-labels", "explicit-labels", "state-acc", "deterministic"]
    if dba.is_complete:
        props.append("complete")
    lines.append("properties: " + " ".join(props))
    lines.append("--BODY--")
    for q in range(dba.n_states):
        lines.append(f"State: {q}" + (" {0}" if q in dba.accepting else ""))
        by_dest: dict[int, list[int]] = {}
        for sym, dst in enumerate(dba.rows[q]):
            if dst != MISSING:
                by_dest.setdefault(dst, []).append(sym)
        for dst in sorted(by_dest):
            lines.append(f"[{_label_text(by_dest[dst], dba.prop_count)}] {dst}")
    lines.append("--END--")
    return "\n".join(lines) + "\n"
