"""Shape-rule DSL: parse, print, bind to a wavelength axis, and evaluate.

Grammar (whitespace-insensitive, `#` comments to end of line):

    ruleset := rule+
    rule    := "RULE" ident "{" expr "}"
    expr    := term ("OR" term)*
    term    := factor ("AND" factor)*
    factor  := atom | "(" expr ")"
    atom    := feature "[" number "]" cmp number
    feature := "CV" | "CRRV" | "RV"
    cmp     := "<" | "<=" | ">" | ">="

CV reads the signed-curvature series at the wavelength's bound band, CRRV the
continuum-removed value, RV the calibrated reflectance.  Rules fire first
match in declaration order; class ids are 1-based declaration positions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

FEATURES = ("CV", "CRRV", "RV")
COMPARATORS = ("<", "<=", ">", ">=")
KEYWORDS = {"RULE", "AND", "OR"}

DEFAULT_BIND_TOLERANCE_NM = 10.0


# ---------------------------------------------------------------------------
# Diagnostics


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str
    kind: str  # lexical | syntax | duplicate-class | empty-rule

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.kind}: {self.message}"


class RuleSyntaxError(ValueError):
    """Raised on any lexical/grammatical problem; carries a positioned diagnostic."""

    def __init__(self, diagnostic: Diagnostic):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic


class RuleBindError(ValueError):
    """Raised when an atom's wavelength cannot be matched to a cube band."""


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Atom:
    feature: str
    wavelength: float
    op: str
    threshold: float


@dataclass(frozen=True)
class And:
    items: tuple["Expr", ...]


@dataclass(frozen=True)
class Or:
    items: tuple["Expr", ...]


Expr = Union[Atom, And, Or]


@dataclass(frozen=True)
class Rule:
    name: str
    expr: Expr

    def atoms(self) -> Iterator[Atom]:
        yield from _walk_atoms(self.expr)


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...]

    def __len__(self) -> int:
        return len(self.rules)

    def class_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.rules)


def _walk_atoms(expr: Expr) -> Iterator[Atom]:
    if isinstance(expr, Atom):
        yield expr
    else:
        for item in expr.items:
            yield from _walk_atoms(item)


# ---------------------------------------------------------------------------
# Lexer


@dataclass(frozen=True)
class _Token:
    kind: str   # IDENT NUMBER LBRACE RBRACE LPAREN RPAREN LBRACKET RBRACKET CMP EOF
    text: str
    line: int
    col: int


_NUMBER_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*")
_PUNCT = {"{": "LBRACE", "}": "RBRACE", "(": "LPAREN", ")": "RPAREN",
          "[": "LBRACKET", "]": "RBRACKET"}


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in _PUNCT:
            tokens.append(_Token(_PUNCT[ch], ch, line, col))
            i += 1
            col += 1
            continue
        if ch in "<>":
            length = 2 if i + 1 < n and text[i + 1] == "=" else 1
            tokens.append(_Token("CMP", text[i: i + length], line, col))
            i += length
            col += length
            continue
        if ch.isalpha() or ch == "_":
            m = _IDENT_RE.match(text, i)
            tokens.append(_Token("IDENT", m.group(), line, col))
            col += m.end() - i
            i = m.end()
            continue
        if ch.isdigit() or ch == "." or (ch in "+-" and i + 1 < n and
                                         (text[i + 1].isdigit() or text[i + 1] == ".")):
            m = _NUMBER_RE.match(text, i)
            tokens.append(_Token("NUMBER", m.group(), line, col))
            col += m.end() - i
            i = m.end()
            continue
        raise RuleSyntaxError(Diagnostic(line, col, f"unexpected character {ch!r}", "lexical"))
    tokens.append(_Token("EOF", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self._tokens = tokens
        self._pos = 0

    def _peek(self) -> _Token:
        return self._tokens[self._pos]

    def _next(self) -> _Token:
        tok = self._tokens[self._pos]
        self._pos += 1
        return tok

    def _fail(self, tok: _Token, message: str, kind: str = "syntax") -> RuleSyntaxError:
        return RuleSyntaxError(Diagnostic(tok.line, tok.col, message, kind))

    def _expect(self, kind: str, what: str) -> _Token:
        tok = self._next()
        if tok.kind != kind:
            raise self._fail(tok, f"expected {what}, found {tok.text or 'end of input'!r}")
        return tok

    def parse_ruleset(self) -> RuleSet:
        rules: list[Rule] = []
        seen: dict[str, int] = {}
        while self._peek().kind != "EOF":
            tok = self._peek()
            if not (tok.kind == "IDENT" and tok.text == "RULE"):
                raise self._fail(tok, f"expected 'RULE', found {tok.text or 'end of input'!r}")
            rule, name_tok = self._parse_rule()
            if rule.name in seen:
                raise self._fail(
                    name_tok,
                    f"duplicate class name {rule.name!r} (first defined as rule {seen[rule.name] + 1})",
                    "duplicate-class",
                )
            seen[rule.name] = len(rules)
            rules.append(rule)
        if not rules:
            tok = self._peek()
            raise self._fail(tok, "no rules found")
        return RuleSet(tuple(rules))

    def _parse_rule(self) -> tuple[Rule, _Token]:
        self._next()  # RULE keyword
        name_tok = self._expect("IDENT", "a class name")
        if name_tok.text in KEYWORDS:
            raise self._fail(name_tok, f"{name_tok.text!r} cannot be used as a class name")
        self._expect("LBRACE", "'{'")
        if self._peek().kind == "RBRACE":
            tok = self._next()
            raise self._fail(tok, f"rule {name_tok.text!r} has an empty expression", "empty-rule")
        expr = self._parse_expr()
        self._expect("RBRACE", "'}'")
        return Rule(name_tok.text, expr), name_tok

    def _parse_expr(self) -> Expr:
        terms = [self._parse_term()]
        while self._peek().kind == "IDENT" and self._peek().text == "OR":
            self._next()
            terms.append(self._parse_term())
        return terms[0] if len(terms) == 1 else Or(tuple(terms))

    def _parse_term(self) -> Expr:
        factors = [self._parse_factor()]
        while self._peek().kind == "IDENT" and self._peek().text == "AND":
            self._next()
            factors.append(self._parse_factor())
        return factors[0] if len(factors) == 1 else And(tuple(factors))

    def _parse_factor(self) -> Expr:
        tok = self._peek()
        if tok.kind == "LPAREN":
            self._next()
            expr = self._parse_expr()
            self._expect("RPAREN", "')'")
            return expr
        if tok.kind == "IDENT" and tok.text in FEATURES:
            return self._parse_atom()
        raise self._fail(tok, f"expected an atom or '(', found {tok.text or 'end of input'!r}")

    def _parse_atom(self) -> Atom:
        feature = self._next().text
        self._expect("LBRACKET", "'['")
        wl_tok = self._expect("NUMBER", "a wavelength in nm")
        wavelength = float(wl_tok.text)
        if wavelength <= 0.0:
            raise self._fail(wl_tok, f"wavelength must be positive, got {wl_tok.text}")
        self._expect("RBRACKET", "']'")
        op = self._expect("CMP", "a comparator (<, <=, >, >=)").text
        thr_tok = self._expect("NUMBER", "a threshold number")
        return Atom(feature, wavelength, op, float(thr_tok.text))


def parse_rules(text: str) -> RuleSet:
    """Parse rule DSL text; raises RuleSyntaxError with line/column on bad input."""
    return _Parser(_tokenize(text)).parse_ruleset()


# ---------------------------------------------------------------------------
# Printer (canonical form; parse(format_rules(rs)) == rs)


def format_rules(rs: RuleSet) -> str:
    return "\n".join(f"RULE {r.name} {{ {_format_expr(r.expr)} }}" for r in rs.rules) + "\n"


def _format_expr(expr: Expr) -> str:
    if isinstance(expr, Atom):
        return (f"{expr.feature}[{_format_number(expr.wavelength)}] "
                f"{expr.op} {_format_number(expr.threshold)}")
    if isinstance(expr, And):
        return " AND ".join(_format_child(c, wrap=(And, Or)) for c in expr.items)
    return " OR ".join(_format_child(c, wrap=(Or,)) for c in expr.items)


def _format_child(expr: Expr, wrap: tuple[type, ...]) -> str:
    text = _format_expr(expr)
    return f"({text})" if isinstance(expr, wrap) else text


def _format_number(x: float) -> str:
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


# ---------------------------------------------------------------------------
# Binding wavelengths to concrete bands


@dataclass(frozen=True)
class CompiledAtom(Atom):
    band: int
    bound_wavelength: float


@dataclass(frozen=True)
class CompiledRule:
    name: str
    class_id: int
    expr: Expr  # tree of CompiledAtom / And / Or

    def atoms(self) -> Iterator[CompiledAtom]:
        yield from _walk_atoms(self.expr)  # type: ignore[arg-type]


@dataclass(frozen=True)
class CompiledRuleSet:
    rules: tuple[CompiledRule, ...]
    axis_fingerprint: str
    tolerance_nm: float
    continuum_mode: str = "ratio"
    x_scale: float = 1.0

    def __len__(self) -> int:
        return len(self.rules)

    def class_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.rules)


def nearest_band(wavelengths: np.ndarray, target: float) -> int:
    """Index of the axis entry closest to ``target``; ties go to the lower band."""
    idx = int(np.searchsorted(wavelengths, target))
    if idx == 0:
        return 0
    if idx == wavelengths.size:
        return int(wavelengths.size - 1)
    below, above = wavelengths[idx - 1], wavelengths[idx]
    return idx - 1 if (target - below) <= (above - target) else idx


def bind(rs: RuleSet, wavelengths: np.ndarray,
         tolerance_nm: float = DEFAULT_BIND_TOLERANCE_NM,
         continuum_mode: str = "ratio", x_scale: float = 1.0) -> CompiledRuleSet:
    """Bind every atom's wavelength to the nearest band of ``wavelengths``.

    Fails with RuleBindError when the nearest band is farther than
    ``tolerance_nm``.  The compiled set records the axis fingerprint plus the
    continuum mode and curvature x-scale its thresholds were authored for.
    """
    from .cube import axis_fingerprint  # local import: cube depends on preprocess only

    wavelengths = np.asarray(wavelengths, dtype=np.float64)
    if wavelengths.size == 0:
        raise RuleBindError("cannot bind rules to an empty wavelength axis")
    if tolerance_nm <= 0.0:
        raise ValueError("tolerance_nm must be positive")

    def bind_expr(expr: Expr, rule_name: str) -> Expr:
        if isinstance(expr, Atom):
            band = nearest_band(wavelengths, expr.wavelength)
            bound = float(wavelengths[band])
            if abs(bound - expr.wavelength) > tolerance_nm:
                raise RuleBindError(
                    f"rule {rule_name!r}: {expr.feature}[{_format_number(expr.wavelength)}] "
                    f"is {abs(bound - expr.wavelength):.1f} nm from the nearest band "
                    f"({bound:.1f} nm), tolerance {tolerance_nm:g} nm"
                )
            return CompiledAtom(expr.feature, expr.wavelength, expr.op,
                                expr.threshold, band, bound)
        if isinstance(expr, And):
            return And(tuple(bind_expr(c, rule_name) for c in expr.items))
        return Or(tuple(bind_expr(c, rule_name) for c in expr.items))

    compiled = tuple(
        CompiledRule(r.name, i + 1, bind_expr(r.expr, r.name))
        for i, r in enumerate(rs.rules)
    )
    return CompiledRuleSet(
        rules=compiled,
        axis_fingerprint=axis_fingerprint(wavelengths),
        tolerance_nm=float(tolerance_nm),
        continuum_mode=continuum_mode,
        x_scale=float(x_scale),
    )


# ---------------------------------------------------------------------------
# Evaluation


_OPS = {
    "<": lambda x, t: x < t,
    "<=": lambda x, t: x <= t,
    ">": lambda x, t: x > t,
    ">=": lambda x, t: x >= t,
}


def evaluate(crs: CompiledRuleSet, fs, cr, raw, diagnostic: bool = False):
    """Classify one pixel: first rule whose expression holds wins.

    ``fs`` is the pixel's FeatureSet, ``cr`` its continuum-removed Spectrum and
    ``raw`` its calibrated Spectrum.  Returns the winning class id, or None
    when no rule fires; with ``diagnostic=True`` returns the list of all
    matching class ids so overlapping rules can be audited.

    Each atom reads exactly one band of one series (short-circuited), so a
    rule with n atoms touches at most n values.
    """
    from .cube import axis_fingerprint

    if axis_fingerprint(np.asarray(cr.wavelengths)) != crs.axis_fingerprint:
        raise ValueError(
            "compiled rules were bound to a different wavelength axis than this pixel"
        )
    kappa = fs.curvature.kappa
    cr_values = cr.values
    raw_values = raw.values

    def eval_expr(expr) -> bool:
        if isinstance(expr, CompiledAtom):
            if expr.feature == "CV":
                x = kappa[expr.band]
            elif expr.feature == "CRRV":
                x = cr_values[expr.band]
            else:
                x = raw_values[expr.band]
            return bool(_OPS[expr.op](x, expr.threshold))
        if isinstance(expr, And):
            return all(eval_expr(c) for c in expr.items)
        return any(eval_expr(c) for c in expr.items)

    if diagnostic:
        return [r.class_id for r in crs.rules if eval_expr(r.expr)]
    for r in crs.rules:
        if eval_expr(r.expr):
            return r.class_id
    return None


# ---------------------------------------------------------------------------
# Builtin rule corpus (nine plastics; curvature thresholds are +-0.1)


BUILTIN_RULES_TEXT = """\
# Shape rules for the nine reference plastics, 900-1700 nm range.
RULE PA {
    CV[1135] < -0.1 AND CV[1246] < -0.1 AND CV[1350] < -0.1 AND CV[1460] < -0.1 AND
    CV[1201] > 0.1 AND CV[1388] > 0.1 AND CV[1529] > 0.1 AND CV[1604] > 0.1
}
RULE PE {
    CV[1139] < -0.1 AND CV[1253] < -0.1 AND CV[1357] < -0.1 AND
    CV[1215] > 0.1 AND CV[1394] > 0.1
}
RULE PF-black {
    CV[973] > 0.1 AND CV[1681] > 0.1 AND CRRV[1429] < 0.6
}
RULE PMMA {
    CV[1322] < -0.1 AND CV[1639] < -0.1 AND
    CV[1174] > 0.1 AND CV[1360] > 0.1 AND CV[1432] > 0.1 AND CV[1674] > 0.1
}
RULE PVC {
    CV[1139] < -0.1 AND CV[1236] < -0.1 AND CV[1353] < -0.1 AND
    CV[1194] > 0.1 AND CV[1422] > 0.1
}
RULE PS {
    CV[1108] < -0.1 AND CV[1174] < -0.1 AND CV[1608] < -0.1 AND
    CV[1143] > 0.1 AND CV[1204] > 0.1 AND CV[1677] > 0.1
}
RULE UP {
    CV[1377] < -0.1 AND CV[1488] < -0.1 AND CV[1450] > 0.1
}
RULE PP {
    CV[1128] < -0.1 AND CV[1342] < -0.1 AND
    CV[1190] > 0.1 AND CV[1215] > 0.1 AND CV[1387] > 0.1 AND CV[1694] > 0.1
}
RULE ABS {
    CV[1104] < -0.1 AND CV[1152] < -0.1 AND CV[1339] > -0.1 AND CV[1629] > -0.1 AND
    CV[1128] > 0.1 AND CV[1187] > 0.1 AND CV[1415] > 0.1 AND CV[1656] > 0.1
}
"""

# Circuit boards vary too much for a fixed spectral rule; this placeholder
# registers the class without ever firing (reflectance is clamped to >= 0).
PCB_RULE_TEXT = """\
RULE PCB {
    RV[1300] < -1
}
"""


def builtin_rules(include_pcb: bool = False) -> RuleSet:
    """The nine built-in plastic rules, optionally plus the PCB placeholder class."""
    text = BUILTIN_RULES_TEXT + (PCB_RULE_TEXT if include_pcb else "")
    return parse_rules(text)
