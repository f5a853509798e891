"""Deterministic AST serialization for submitted code.

Output is a parenthesized node-labeled tree. Java is parsed by a compact
structural parser covering the constructs student submissions use
(declarations, control flow, calls, literals); Python uses the stdlib
parser. Parse failures never break the feedback pipeline: the sentinel
``AST_UNAVAILABLE(parse_error)`` is returned instead.
"""

from __future__ import annotations

import ast as python_ast
import re

from ..errors import ValidationError

PARSE_SENTINEL = "AST_UNAVAILABLE(parse_error)"

JAVA_PRIMITIVES = {"int", "long", "short", "byte", "char", "boolean", "float", "double", "void", "var"}
JAVA_MODIFIERS = {"public", "private", "protected", "static", "final", "abstract",
                  "synchronized", "native", "transient", "volatile", "strictfp", "default"}

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<line_comment>//[^\n]*)
  | (?P<block_comment>/\*.*?\*/)
  | (?P<string>"(?:\\.|[^"\\])*")
  | (?P<char>'(?:\\.|[^'\\])')
  | (?P<number>\d[\w.]*)
  | (?P<ident>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<op><<=|>>=|>>>|==|!=|<=|>=|&&|\|\||\+\+|--|\+=|-=|\*=|/=|%=|&=|\|=|\^=|<<|>>|->|::|[{}()\[\];,.<>=+\-*/%!&|^~?:@])
""", re.VERBOSE | re.DOTALL)


class _JavaParseError(Exception):
    pass


class Node:
    __slots__ = ("label", "children")

    def __init__(self, label: str, children=None):
        self.label = label
        self.children = list(children or [])

    def add(self, child) -> "Node":
        self.children.append(child)
        return self

    def serialize(self) -> str:
        parts = [self.label]
        for child in self.children:
            if isinstance(child, Node):
                parts.append(child.serialize())
            else:
                parts.append(_leaf(child))
        return "(" + " ".join(parts) + ")"

    def contains_label(self, label: str) -> bool:
        if self.label == label:
            return True
        return any(isinstance(c, Node) and c.contains_label(label) for c in self.children)


def _leaf(token: str) -> str:
    if re.fullmatch(r"[A-Za-z0-9_$.]+", token):
        return token
    return '"' + token.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _tokenize_java(code: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(code):
        m = _TOKEN_RE.match(code, pos)
        if m is None:
            raise _JavaParseError(f"unexpected character {code[pos]!r} at offset {pos}")
        pos = m.end()
        kind = m.lastgroup
        if kind in ("ws", "line_comment", "block_comment"):
            continue
        tokens.append(m.group())
    return tokens


class _JavaParser:
    """Recursive-descent over a practical Java subset; anything it cannot
    shape raises and the caller falls back to the sentinel."""

    MAX_DEPTH = 80

    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.i = 0
        self.depth = 0

    # -- token helpers --------------------------------------------------

    def peek(self, offset: int = 0) -> str | None:
        j = self.i + offset
        return self.tokens[j] if j < len(self.tokens) else None

    def next(self) -> str:
        if self.i >= len(self.tokens):
            raise _JavaParseError("unexpected end of input")
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, tok: str) -> None:
        got = self.next()
        if got != tok:
            raise _JavaParseError(f"expected {tok!r}, got {got!r}")

    def _is_ident(self, tok: str | None) -> bool:
        return tok is not None and re.fullmatch(r"[A-Za-z_$][A-Za-z0-9_$]*", tok) is not None

    # -- entry ------------------------------------------------------------

    def parse_compilation_unit(self) -> Node:
        root = Node("CompilationUnit")
        while self.peek() is not None:
            root.add(self.parse_top_level())
        if not root.children:
            raise _JavaParseError("no content")
        return root

    def parse_top_level(self) -> Node:
        tok = self.peek()
        if tok == "package" or tok == "import":
            label = "Package" if tok == "package" else "Import"
            self.next()
            name = []
            while self.peek() not in (";", None):
                name.append(self.next())
            self.expect(";")
            return Node(label, ["".join(name)])
        return self.parse_member_or_statement()

    def parse_member_or_statement(self) -> Node:
        start = self.i
        mods = []
        while self.peek() in JAVA_MODIFIERS:
            mods.append(self.next())
        tok = self.peek()
        if tok in ("class", "interface", "enum"):
            return self.parse_type_declaration(mods)
        if self._looks_like_method():
            return self.parse_method_declaration(mods)
        self.i = start
        return self.parse_statement()

    def parse_type_declaration(self, mods: list[str]) -> Node:
        kind = self.next()
        label = {"class": "ClassDeclaration", "interface": "InterfaceDeclaration",
                 "enum": "EnumDeclaration"}[kind]
        node = Node(label)
        for m in mods:
            node.add(Node("Modifier", [m]))
        node.add(Node("Identifier", [self.next()]))
        while self.peek() not in ("{", None):
            self.next()  # extends/implements clause kept out of the outline
        body = Node("Body")
        self.expect("{")
        while self.peek() != "}":
            if self.peek() is None:
                raise _JavaParseError("unterminated class body")
            if self.peek() == ";":
                self.next()
                continue
            body.add(self.parse_member_or_statement())
        self.expect("}")
        return node.add(body)

    def _looks_like_method(self) -> bool:
        # type-ish tokens then Ident then '(' ... ')' then '{' or ';'
        j = self.i
        saw_type = False
        while j < len(self.tokens):
            tok = self.tokens[j]
            if tok in JAVA_PRIMITIVES or self._is_ident(tok):
                saw_type = True
                j += 1
                while j < len(self.tokens) and self.tokens[j] in ("[", "]", "<", ">", "."):
                    j += 1
            else:
                break
            if j < len(self.tokens) and self._is_ident(self.tokens[j]) \
                    and j + 1 < len(self.tokens) and self.tokens[j + 1] == "(":
                k = self._skip_parens(j + 1)
                return k is not None and k < len(self.tokens) and self.tokens[k] in ("{", ";")
            break
        # constructor form: Ident '(' ... ')' '{'
        if saw_type and self.i + 1 < len(self.tokens) and self.tokens[self.i + 1] == "(":
            k = self._skip_parens(self.i + 1)
            return k is not None and k < len(self.tokens) and self.tokens[k] == "{"
        return False

    def _skip_parens(self, open_idx: int) -> int | None:
        if self.tokens[open_idx] != "(":
            return None
        depth = 0
        j = open_idx
        while j < len(self.tokens):
            if self.tokens[j] == "(":
                depth += 1
            elif self.tokens[j] == ")":
                depth -= 1
                if depth == 0:
                    return j + 1
            j += 1
        return None

    def parse_method_declaration(self, mods: list[str]) -> Node:
        node = Node("MethodDeclaration")
        for m in mods:
            node.add(Node("Modifier", [m]))
        type_tokens = []
        while not (self._is_ident(self.peek()) and self.peek(1) == "("):
            type_tokens.append(self.next())
        if type_tokens:
            node.add(Node("Type", ["".join(type_tokens)]))
        node.add(Node("Identifier", [self.next()]))
        node.add(self.parse_parameters())
        if self.peek() == ";":
            self.next()
        else:
            node.add(self.parse_block())
        return node

    def parse_parameters(self) -> Node:
        node = Node("Parameters")
        self.expect("(")
        current: list[str] = []
        depth = 1
        while True:
            tok = self.next()
            if tok == "(":
                depth += 1
            elif tok == ")":
                depth -= 1
                if depth == 0:
                    break
            elif tok == "," and depth == 1:
                if current:
                    node.add(Node("Parameter", [current[-1]]))
                current = []
                continue
            current.append(tok)
        if current:
            node.add(Node("Parameter", [current[-1]]))
        return node

    # -- statements -------------------------------------------------------

    def parse_block(self) -> Node:
        self.expect("{")
        node = Node("Block")
        while self.peek() != "}":
            if self.peek() is None:
                raise _JavaParseError("unterminated block")
            node.add(self.parse_statement())
        self.expect("}")
        return node

    def parse_statement(self) -> Node:
        self.depth += 1
        if self.depth > self.MAX_DEPTH:
            raise _JavaParseError("nesting too deep")
        try:
            return self._parse_statement_inner()
        finally:
            self.depth -= 1

    def _parse_statement_inner(self) -> Node:
        tok = self.peek()
        if tok == "{":
            return self.parse_block()
        if tok == ";":
            self.next()
            return Node("EmptyStatement")
        if tok == "if":
            return self.parse_if()
        if tok == "for":
            return self.parse_for()
        if tok == "while":
            self.next()
            cond = self.parse_paren_expression("Condition")
            return Node("WhileStatement", [cond, Node("Body", [self.parse_statement()])])
        if tok == "do":
            self.next()
            body = self.parse_statement()
            self.expect("while")
            cond = self.parse_paren_expression("Condition")
            self.expect(";")
            return Node("DoStatement", [Node("Body", [body]), cond])
        if tok == "return":
            self.next()
            node = Node("ReturnStatement")
            if self.peek() != ";":
                node.add(self.parse_expression_until((";",)))
            self.expect(";")
            return node
        if tok in ("break", "continue"):
            self.next()
            label = Node("BreakStatement" if tok == "break" else "ContinueStatement")
            if self.peek() != ";":
                label.add(Node("Identifier", [self.next()]))
            self.expect(";")
            return label
        if tok == "throw":
            self.next()
            expr = self.parse_expression_until((";",))
            self.expect(";")
            return Node("ThrowStatement", [expr])
        if tok == "switch":
            self.next()
            header = self.parse_paren_expression("Selector")
            return Node("SwitchStatement", [header, self.parse_brace_soup("Body")])
        if tok == "try":
            self.next()
            node = Node("TryStatement", [self.parse_block()])
            while self.peek() == "catch":
                self.next()
                clause = Node("CatchClause", [self.parse_paren_expression("Parameter")])
                clause.add(self.parse_block())
                node.add(clause)
            if self.peek() == "finally":
                self.next()
                node.add(Node("Finally", [self.parse_block()]))
            return node
        if self._looks_like_local_var():
            return self.parse_local_var()
        expr = self.parse_expression_until((";",))
        self.expect(";")
        return Node("ExpressionStatement", [expr])

    def parse_if(self) -> Node:
        self.expect("if")
        node = Node("IfStatement", [self.parse_paren_expression("Condition")])
        node.add(Node("Then", [self.parse_statement()]))
        if self.peek() == "else":
            self.next()
            node.add(Node("Else", [self.parse_statement()]))
        return node

    def parse_for(self) -> Node:
        self.expect("for")
        self.expect("(")
        header: list[str] = []
        depth = 1
        while True:
            tok = self.next()
            if tok == "(":
                depth += 1
            elif tok == ")":
                depth -= 1
                if depth == 0:
                    break
            header.append(tok)
        label = "ForEachStatement" if ":" in header and ";" not in header else "ForStatement"
        node = Node(label, [Node("Control", [" ".join(header)])])
        return node.add(Node("Body", [self.parse_statement()]))

    def parse_paren_expression(self, label: str) -> Node:
        self.expect("(")
        expr = self.parse_expression_until((")",), stop_depth_zero=True)
        self.expect(")")
        return Node(label, [expr])

    def parse_brace_soup(self, label: str) -> Node:
        # opaque braced region (switch bodies etc.): structure kept coarse
        self.expect("{")
        depth = 1
        kept: list[str] = []
        while depth > 0:
            tok = self.next()
            if tok == "{":
                depth += 1
            elif tok == "}":
                depth -= 1
                if depth == 0:
                    break
            kept.append(tok)
        return Node(label, [" ".join(kept)] if kept else [])

    def _looks_like_local_var(self) -> bool:
        j = self.i
        if self.peek() == "final":
            j += 1
        tok = self.tokens[j] if j < len(self.tokens) else None
        if tok is None:
            return False
        if tok in JAVA_PRIMITIVES or self._is_ident(tok):
            j += 1
            while j < len(self.tokens) and self.tokens[j] in ("[", "]", "<", ">", ","):
                j += 1
            return j < len(self.tokens) and self._is_ident(self.tokens[j]) \
                and self.tokens[j] not in JAVA_PRIMITIVES \
                and j + 1 < len(self.tokens) and self.tokens[j + 1] in ("=", ";", ",", "[")
        return False

    def parse_local_var(self) -> Node:
        node = Node("LocalVariableDeclaration")
        if self.peek() == "final":
            node.add(Node("Modifier", [self.next()]))
        type_tokens = [self.next()]
        while self.peek() in ("[", "]", "<", ">"):
            type_tokens.append(self.next())
        node.add(Node("Type", ["".join(type_tokens)]))
        while True:
            decl = Node("VariableDeclarator", [Node("Identifier", [self.next()])])
            while self.peek() in ("[", "]"):
                self.next()
            if self.peek() == "=":
                self.next()
                decl.add(self.parse_expression_until((",", ";")))
            node.add(decl)
            tok = self.next()
            if tok == ";":
                break
            if tok != ",":
                raise _JavaParseError(f"bad declarator separator {tok!r}")
        return node

    # -- expressions --------------------------------------------------------

    def parse_expression_until(self, stops: tuple[str, ...], stop_depth_zero: bool = False) -> Node:
        node = Node("Expression")
        depth = 0
        while True:
            tok = self.peek()
            if tok is None:
                raise _JavaParseError("unterminated expression")
            if depth == 0 and tok in stops:
                break
            tok = self.next()
            if tok in ("(", "[", "{"):
                depth += 1
                node.add(tok)
                continue
            if tok in (")", "]", "}"):
                if depth == 0:
                    raise _JavaParseError(f"unbalanced {tok!r} in expression")
                depth -= 1
                node.add(tok)
                continue
            node.add(self._classify_atom(tok))
        if not node.children:
            raise _JavaParseError("empty expression")
        return node

    def _classify_atom(self, tok: str):
        if tok.startswith('"'):
            return Node("StringLiteral", [tok])
        if tok.startswith("'"):
            return Node("CharLiteral", [tok])
        if tok[0].isdigit():
            return Node("Literal", [tok])
        if tok in ("true", "false", "null"):
            return Node("Literal", [tok])
        if tok == "new":
            return Node("New")
        if self._is_ident(tok):
            if self.peek() == "(":
                return Node("MethodCall", [Node("Identifier", [tok])])
            return Node("Identifier", [tok])
        return tok


def _python_tree(node) -> Node:
    out = Node(type(node).__name__)
    if isinstance(node, python_ast.Name):
        out.add(node.id)
    elif isinstance(node, python_ast.Constant):
        out.add(repr(node.value))
    elif isinstance(node, (python_ast.FunctionDef, python_ast.AsyncFunctionDef, python_ast.ClassDef)):
        out.add(node.name)
    elif isinstance(node, (python_ast.Attribute,)):
        out.add(node.attr)
    for child in python_ast.iter_child_nodes(node):
        if isinstance(child, (python_ast.Load, python_ast.Store, python_ast.Del)):
            continue
        out.add(_python_tree(child))
    return out


def extract_ast(code: str, language: str = "java") -> str:
    """Serialize the code's parse tree; sentinel on parse failure."""
    if language not in ("java", "python"):
        raise ValidationError(f"unsupported language {language!r} for AST extraction")
    if not code or not code.strip():
        return PARSE_SENTINEL
    try:
        if language == "python":
            return _python_tree(python_ast.parse(code)).serialize()
        tokens = _tokenize_java(code)
        tree = _JavaParser(tokens).parse_compilation_unit()
        return tree.serialize()
    except (_JavaParseError, SyntaxError, RecursionError, ValueError):
        return PARSE_SENTINEL
