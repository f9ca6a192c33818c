//! Recursive-descent parser for HL.
//!
//! Statement boundaries follow lines: a binary or postfix operator only
//! continues an expression when it sits on the same line as the token
//! before it. The printer keeps every expression on one line, so printed
//! trees always reparse with the original statement structure.

use super::lexer::{lex, StrPart, Tok, Token};
use super::node::{Atom, Node, NodeKind, Param, SourceLoc};
use super::SyntaxError;

const KEYWORDS: &[&str] = &[
    "module", "function", "struct", "mutable", "end", "for", "in", "if", "elseif", "else", "let",
    "try", "catch", "finally", "return", "begin", "true", "false",
];

/// Parses a whole HL program. The result is a Block whose children
/// alternate LineInfo/statement, starting with LineInfo.
pub fn parse(source: &str, filename: &str) -> Result<Node, SyntaxError> {
    parse_fragment(source, filename, 1, false)
}

/// Parses an HL fragment, optionally allowing advice splice holes
/// (`@jp(...)`, `@args`, `@original`, ...). Used for advice bodies, which
/// carry the aspect file's name and line numbers.
pub fn parse_fragment(
    source: &str,
    filename: &str,
    start_line: u32,
    allow_holes: bool,
) -> Result<Node, SyntaxError> {
    let tokens = lex(source, filename, start_line)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        file: filename.to_string(),
        allow_holes,
    };
    let first_line = p.peek().line;
    let stmts = p.stmt_list(&[])?;
    p.expect_eof()?;
    Ok(Node::block(stmts, SourceLoc::new(filename, first_line)))
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    file: String,
    allow_holes: bool,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn peek_at(&self, off: usize) -> &Token {
        let i = (self.pos + off).min(self.tokens.len() - 1);
        &self.tokens[i]
    }

    fn last_line(&self) -> u32 {
        if self.pos == 0 {
            self.tokens[0].line
        } else {
            self.tokens[self.pos - 1].end_line
        }
    }

    /// True when the next token sits on the same line as the previous one,
    /// i.e. it may extend the current expression.
    fn continues(&self) -> bool {
        self.peek().line == self.last_line()
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos.min(self.tokens.len() - 1)].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn at(&self, tok: &Tok) -> bool {
        &self.peek().tok == tok
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.at(tok) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, SyntaxError> {
        if self.at(&tok) {
            Ok(self.bump())
        } else {
            Err(self.error(format!("expected {what}, found {}", describe(&self.peek().tok))))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(format!(
                "expected '{kw}', found {}",
                describe(&self.peek().tok)
            )))
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, u32), SyntaxError> {
        match self.peek().tok.clone() {
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                let line = self.bump().line;
                Ok((name, line))
            }
            other => Err(self.error(format!("expected {what}, found {}", describe(&other)))),
        }
    }

    fn expect_eof(&mut self) -> Result<(), SyntaxError> {
        if self.at(&Tok::Eof) {
            Ok(())
        } else {
            Err(self.error(format!(
                "unexpected {} after end of statement",
                describe(&self.peek().tok)
            )))
        }
    }

    fn error(&self, msg: impl Into<String>) -> SyntaxError {
        SyntaxError {
            file: self.file.clone(),
            line: self.peek().line,
            message: msg.into(),
        }
    }

    fn loc(&self) -> SourceLoc {
        SourceLoc::new(&self.file, self.peek().line)
    }

    // ---- statements ------------------------------------------------------

    /// Parses statements until one of the terminator keywords (or EOF),
    /// interleaving a LineInfo before every statement.
    fn stmt_list(&mut self, terminators: &[&str]) -> Result<Vec<Node>, SyntaxError> {
        let mut out = Vec::new();
        loop {
            if self.at(&Tok::Eof) || terminators.iter().any(|t| self.at_keyword(t)) {
                return Ok(out);
            }
            let line = self.peek().line;
            let stmt = self.stmt()?;
            out.push(Node::line_info(SourceLoc::new(&self.file, line)));
            out.push(stmt);
        }
    }

    fn block(&mut self, terminators: &[&str]) -> Result<Node, SyntaxError> {
        let loc = self.loc();
        let stmts = self.stmt_list(terminators)?;
        Ok(Node::block(stmts, loc))
    }

    fn stmt(&mut self) -> Result<Node, SyntaxError> {
        if self.at_keyword("module") {
            return self.module_def();
        }
        if self.at_keyword("function") {
            return self.function_def();
        }
        if self.at_keyword("struct") || (self.at_keyword("mutable") && {
            matches!(&self.peek_at(1).tok, Tok::Ident(s) if s == "struct")
        }) {
            return self.struct_def();
        }
        if self.at(&Tok::At) && matches!(&self.peek_at(1).tok, Tok::Ident(s) if s == "attr") {
            return self.attr_annot();
        }
        if self.at_keyword("return") {
            let loc = self.loc();
            self.bump();
            if self.continues() && self.starts_expr() {
                let value = self.expr()?;
                return Ok(Node::new(NodeKind::Return, vec![value], loc));
            }
            return Ok(Node::new(NodeKind::Return, Vec::new(), loc));
        }
        // short function definition: IDENT ( params ) = expr
        if let Tok::Ident(name) = &self.peek().tok {
            if !KEYWORDS.contains(&name.as_str())
                && self.peek_at(1).tok == Tok::LParen
                && self.peek_at(1).line == self.peek().line
            {
                if let Some(close) = self.matching_paren(self.pos + 1) {
                    let after = &self.tokens[(close + 1).min(self.tokens.len() - 1)];
                    if after.tok == Tok::Assign && after.line == self.tokens[close].line {
                        return self.short_function_def();
                    }
                }
            }
        }
        let expr = self.expr()?;
        if self.continues() && (self.at(&Tok::Assign) || self.at(&Tok::PlusAssign)) {
            return self.assignment(expr);
        }
        Ok(expr)
    }

    fn assignment(&mut self, target: Node) -> Result<Node, SyntaxError> {
        let op = self.bump().tok;
        let loc = target.loc.clone();
        let rhs = self.expr()?;
        let kind = match (&target.kind, &op) {
            (NodeKind::Symbol, Tok::Assign) => NodeKind::Assign,
            (NodeKind::Symbol, _) => NodeKind::OpAssign,
            (NodeKind::IndexRef, Tok::Assign) => NodeKind::IndexAssign,
            (NodeKind::FieldRef, Tok::Assign) => NodeKind::FieldAssign,
            _ => {
                return Err(SyntaxError {
                    file: loc.file,
                    line: loc.line,
                    message: format!("invalid assignment target ({})", target.kind),
                })
            }
        };
        let children = match kind {
            NodeKind::Assign | NodeKind::OpAssign => vec![target, rhs],
            _ => {
                let mut cs = target.children;
                cs.push(rhs);
                cs
            }
        };
        Ok(Node::new(kind, children, loc))
    }

    fn module_def(&mut self) -> Result<Node, SyntaxError> {
        let loc = self.loc();
        self.bump();
        let (name, nline) = self.expect_ident("module name")?;
        let mut children = vec![Node::symbol(name, SourceLoc::new(&self.file, nline))];
        children.extend(self.stmt_list(&["end"])?);
        self.expect_keyword("end")?;
        Ok(Node::new(NodeKind::Module, children, loc))
    }

    fn function_def(&mut self) -> Result<Node, SyntaxError> {
        let loc = self.loc();
        self.bump();
        let (name, nline) = self.expect_ident("function name")?;
        self.expect(Tok::LParen, "'('")?;
        let params = self.params(Tok::RParen)?;
        self.expect(Tok::RParen, "')'")?;
        let body = self.block(&["end"])?;
        self.expect_keyword("end")?;
        let mut node = Node::new(
            NodeKind::FunctionDef,
            vec![Node::symbol(name, SourceLoc::new(&self.file, nline)), body],
            loc,
        );
        node.params = params;
        Ok(node)
    }

    fn short_function_def(&mut self) -> Result<Node, SyntaxError> {
        let loc = self.loc();
        let (name, nline) = self.expect_ident("function name")?;
        self.expect(Tok::LParen, "'('")?;
        let params = self.params(Tok::RParen)?;
        self.expect(Tok::RParen, "')'")?;
        self.expect(Tok::Assign, "'='")?;
        let body = self.expr()?;
        let mut node = Node::new(
            NodeKind::ShortFuncDef,
            vec![Node::symbol(name, SourceLoc::new(&self.file, nline)), body],
            loc,
        );
        node.params = params;
        Ok(node)
    }

    fn struct_def(&mut self) -> Result<Node, SyntaxError> {
        let loc = self.loc();
        let is_mutable = self.eat_keyword("mutable");
        self.expect_keyword("struct")?;
        let (name, nline) = self.expect_ident("struct name")?;
        let mut fields = Vec::new();
        let mut children = vec![Node::symbol(name, SourceLoc::new(&self.file, nline))];
        loop {
            if self.eat_keyword("end") {
                break;
            }
            if self.at_keyword("function") {
                children.push(self.function_def()?);
                continue;
            }
            let (fname, _) = self.expect_ident("field name")?;
            let type_name = if self.eat(&Tok::ColonColon) {
                Some(self.expect_ident("type name")?.0)
            } else {
                None
            };
            fields.push(Param {
                name: fname,
                type_name,
                ..Param::default()
            });
        }
        let mut node = Node::new(NodeKind::StructDef, children, loc);
        node.params = fields;
        node.is_mutable = is_mutable;
        Ok(node)
    }

    fn attr_annot(&mut self) -> Result<Node, SyntaxError> {
        let loc = self.loc();
        self.bump(); // '@'
        self.bump(); // 'attr'
        let name = match self.peek().tok.clone() {
            Tok::Str(parts) => {
                let line = self.bump().line;
                match parts.as_slice() {
                    [StrPart::Text(t)] => Node::string(t.clone(), SourceLoc::new(&self.file, line)),
                    _ => return Err(self.error("@attr name must be a plain string")),
                }
            }
            _ => return Err(self.error("expected string after @attr")),
        };
        let stmt = self.stmt()?;
        Ok(Node::new(NodeKind::AttrAnnot, vec![name, stmt], loc))
    }

    fn params(&mut self, close: Tok) -> Result<Vec<Param>, SyntaxError> {
        let mut params = Vec::new();
        let mut keyword = false;
        if self.at(&close) {
            return Ok(params);
        }
        loop {
            if self.eat(&Tok::Semi) {
                if keyword {
                    return Err(self.error("duplicate ';' in parameter list"));
                }
                keyword = true;
                if self.at(&close) {
                    break;
                }
            }
            let (name, _) = self.expect_ident("parameter name")?;
            let type_name = if self.eat(&Tok::ColonColon) {
                Some(self.expect_ident("type name")?.0)
            } else {
                None
            };
            let variadic = self.eat(&Tok::Ellipsis);
            let default = if self.eat(&Tok::Assign) {
                Some(self.expr()?)
            } else {
                None
            };
            params.push(Param {
                name,
                type_name,
                variadic,
                default,
                keyword,
            });
            if self.at(&close) {
                break;
            }
            if !self.eat(&Tok::Comma) && !self.at(&Tok::Semi) {
                return Err(self.error(format!(
                    "expected ',' or '{}' in parameter list, found {}",
                    if close == Tok::RParen { ")" } else { "?" },
                    describe(&self.peek().tok)
                )));
            }
        }
        Ok(params)
    }

    /// Token index of the ')' matching the '(' at `open`, if any.
    fn matching_paren(&self, open: usize) -> Option<usize> {
        let mut depth = 0usize;
        for (i, t) in self.tokens.iter().enumerate().skip(open) {
            match t.tok {
                Tok::LParen => depth += 1,
                Tok::RParen => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(i);
                    }
                }
                Tok::Eof => return None,
                _ => {}
            }
        }
        None
    }

    fn starts_expr(&self) -> bool {
        matches!(
            &self.peek().tok,
            Tok::Ident(_)
                | Tok::Int(_)
                | Tok::Float(_)
                | Tok::Str(_)
                | Tok::LParen
                | Tok::LBracket
                | Tok::At
                | Tok::Minus
        ) && !["end", "else", "elseif", "catch", "finally"]
            .iter()
            .any(|k| self.at_keyword(k))
    }

    // ---- expressions -----------------------------------------------------

    fn expr(&mut self) -> Result<Node, SyntaxError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Node, SyntaxError> {
        let mut lhs = self.and_expr()?;
        while self.continues() && self.at(&Tok::OrOr) {
            let loc = lhs.loc.clone();
            self.bump();
            let rhs = self.and_expr()?;
            lhs = Node::new(NodeKind::OrOr, vec![lhs, rhs], loc);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Node, SyntaxError> {
        let mut lhs = self.cmp_expr()?;
        while self.continues() && self.at(&Tok::AndAnd) {
            let loc = lhs.loc.clone();
            self.bump();
            let rhs = self.cmp_expr()?;
            lhs = Node::new(NodeKind::AndAnd, vec![lhs, rhs], loc);
        }
        Ok(lhs)
    }

    fn cmp_expr(&mut self) -> Result<Node, SyntaxError> {
        let mut lhs = self.range_expr()?;
        while self.continues() {
            let op = match &self.peek().tok {
                Tok::EqEq => "==",
                Tok::NotEq => "!=",
                Tok::Lt => "<",
                Tok::Gt => ">",
                Tok::Le => "<=",
                Tok::Ge => ">=",
                _ => break,
            };
            let loc = lhs.loc.clone();
            self.bump();
            let rhs = self.range_expr()?;
            lhs = op_call(op, vec![lhs, rhs], loc);
        }
        Ok(lhs)
    }

    fn range_expr(&mut self) -> Result<Node, SyntaxError> {
        let lhs = self.add_expr()?;
        if self.continues() && self.at(&Tok::Colon) {
            let loc = lhs.loc.clone();
            self.bump();
            let rhs = self.add_expr()?;
            return Ok(Node::new(NodeKind::Range, vec![lhs, rhs], loc));
        }
        Ok(lhs)
    }

    fn add_expr(&mut self) -> Result<Node, SyntaxError> {
        let mut lhs = self.mul_expr()?;
        while self.continues() {
            let op = match &self.peek().tok {
                Tok::Plus => "+",
                Tok::Minus => "-",
                _ => break,
            };
            let loc = lhs.loc.clone();
            self.bump();
            let rhs = self.mul_expr()?;
            lhs = op_call(op, vec![lhs, rhs], loc);
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> Result<Node, SyntaxError> {
        let mut lhs = self.unary_expr()?;
        while self.continues() {
            let op = match &self.peek().tok {
                Tok::Star => "*",
                Tok::Slash => "/",
                _ => break,
            };
            let loc = lhs.loc.clone();
            self.bump();
            let rhs = self.unary_expr()?;
            lhs = op_call(op, vec![lhs, rhs], loc);
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> Result<Node, SyntaxError> {
        if self.at(&Tok::Minus) {
            let loc = self.loc();
            self.bump();
            let operand = self.unary_expr()?;
            // fold negation into numeric literals so -3 roundtrips as a literal
            match (&operand.kind, &operand.atom) {
                (NodeKind::IntLit, Some(Atom::Int(v))) => {
                    return Ok(Node::leaf(NodeKind::IntLit, Atom::Int(-v), loc))
                }
                (NodeKind::FloatLit, Some(Atom::Float(v))) => {
                    return Ok(Node::leaf(NodeKind::FloatLit, Atom::Float(-v), loc))
                }
                _ => return Ok(op_call("-", vec![operand], loc)),
            }
        }
        self.postfix_expr()
    }

    fn postfix_expr(&mut self) -> Result<Node, SyntaxError> {
        let mut node = self.primary()?;
        loop {
            if !self.continues() {
                return Ok(node);
            }
            match &self.peek().tok {
                Tok::LParen => {
                    let loc = node.loc.clone();
                    self.bump();
                    let args = self.expr_list(Tok::RParen)?;
                    self.expect(Tok::RParen, "')'")?;
                    node = make_call(node, args, loc, &self.file)?;
                }
                Tok::LBracket => {
                    let loc = node.loc.clone();
                    self.bump();
                    let index = self.expr()?;
                    self.expect(Tok::RBracket, "']'")?;
                    node = Node::new(NodeKind::IndexRef, vec![node, index], loc);
                }
                Tok::Dot => {
                    let loc = node.loc.clone();
                    self.bump();
                    let (field, fline) = self.expect_ident("field name")?;
                    node = Node::new(
                        NodeKind::FieldRef,
                        vec![node, Node::symbol(field, SourceLoc::new(&self.file, fline))],
                        loc,
                    );
                }
                _ => return Ok(node),
            }
        }
    }

    fn expr_list(&mut self, close: Tok) -> Result<Vec<Node>, SyntaxError> {
        let mut out = Vec::new();
        if self.at(&close) {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if !self.eat(&Tok::Comma) {
                return Ok(out);
            }
            if self.at(&close) {
                return Ok(out);
            }
        }
    }

    fn primary(&mut self) -> Result<Node, SyntaxError> {
        let loc = self.loc();
        match self.peek().tok.clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Node::leaf(NodeKind::IntLit, Atom::Int(v), loc))
            }
            Tok::Float(v) => {
                self.bump();
                Ok(Node::leaf(NodeKind::FloatLit, Atom::Float(v), loc))
            }
            Tok::Str(parts) => {
                self.bump();
                self.string_node(parts, loc)
            }
            Tok::At => self.macro_call(),
            Tok::LBracket => {
                self.bump();
                let items = self.expr_list(Tok::RBracket)?;
                self.expect(Tok::RBracket, "']'")?;
                Ok(Node::new(NodeKind::ArrayLit, items, loc))
            }
            Tok::LParen => self.paren_expr(),
            Tok::Ident(name) => match name.as_str() {
                "true" | "false" => {
                    self.bump();
                    Ok(Node::leaf(NodeKind::BoolLit, Atom::Bool(name == "true"), loc))
                }
                "if" => self.if_expr(),
                "begin" => {
                    self.bump();
                    let block = self.block(&["end"])?;
                    self.expect_keyword("end")?;
                    Ok(block)
                }
                "let" => self.let_expr(),
                "for" => self.for_expr(),
                "try" => self.try_expr(),
                _ if KEYWORDS.contains(&name.as_str()) => {
                    Err(self.error(format!("unexpected keyword '{name}'")))
                }
                _ => {
                    self.bump();
                    // bare single-parameter lambda: x -> expr
                    if self.continues() && self.at(&Tok::Arrow) {
                        self.bump();
                        let body = self.expr()?;
                        let mut lambda = Node::new(NodeKind::Lambda, vec![body], loc);
                        lambda.params = vec![Param::named(name)];
                        return Ok(lambda);
                    }
                    Ok(Node::symbol(name, loc))
                }
            },
            other => Err(self.error(format!("expected expression, found {}", describe(&other)))),
        }
    }

    fn string_node(&mut self, parts: Vec<StrPart>, loc: SourceLoc) -> Result<Node, SyntaxError> {
        if let [StrPart::Text(t)] = parts.as_slice() {
            return Ok(Node::string(t.clone(), loc));
        }
        let mut children = Vec::new();
        for part in parts {
            match part {
                StrPart::Text(t) => {
                    if !t.is_empty() {
                        children.push(Node::string(t, loc.clone()));
                    }
                }
                StrPart::Interp(tokens) => {
                    let mut sub = Parser {
                        tokens,
                        pos: 0,
                        file: self.file.clone(),
                        allow_holes: self.allow_holes,
                    };
                    let expr = sub.expr()?;
                    sub.expect_eof()?;
                    children.push(expr);
                }
            }
        }
        Ok(normalize_interp(children, loc))
    }

    fn paren_expr(&mut self) -> Result<Node, SyntaxError> {
        let loc = self.loc();
        // lambda: ( params ) -> expr
        if let Some(close) = self.matching_paren(self.pos) {
            let after = &self.tokens[(close + 1).min(self.tokens.len() - 1)];
            if after.tok == Tok::Arrow && after.line == self.tokens[close].line {
                self.bump();
                let params = self.params(Tok::RParen)?;
                self.expect(Tok::RParen, "')'")?;
                self.expect(Tok::Arrow, "'->'")?;
                let body = self.expr()?;
                let mut lambda = Node::new(NodeKind::Lambda, vec![body], loc);
                lambda.params = params;
                return Ok(lambda);
            }
        }
        self.bump();
        if self.eat(&Tok::RParen) {
            return Ok(Node::new(NodeKind::TupleLit, Vec::new(), loc));
        }
        // record literal: ( name = expr, ... )
        if matches!(&self.peek().tok, Tok::Ident(n) if !KEYWORDS.contains(&n.as_str()))
            && self.peek_at(1).tok == Tok::Assign
        {
            let mut children = Vec::new();
            loop {
                let (key, kline) = self.expect_ident("record key")?;
                self.expect(Tok::Assign, "'='")?;
                let value = self.expr()?;
                children.push(Node::symbol(key, SourceLoc::new(&self.file, kline)));
                children.push(value);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::RParen, "')'")?;
            return Ok(Node::new(NodeKind::MapLit, children, loc));
        }
        let first = self.expr()?;
        if self.eat(&Tok::Comma) {
            let mut items = vec![first];
            if !self.at(&Tok::RParen) {
                items.extend(self.expr_list(Tok::RParen)?);
            }
            self.expect(Tok::RParen, "')'")?;
            return Ok(Node::new(NodeKind::TupleLit, items, loc));
        }
        self.expect(Tok::RParen, "')'")?;
        Ok(first)
    }

    fn if_expr(&mut self) -> Result<Node, SyntaxError> {
        let node = self.if_chain()?;
        self.expect_keyword("end")?;
        Ok(node)
    }

    /// Parses from (els)if's condition up to, but not including, the shared
    /// final `end`.
    fn if_chain(&mut self) -> Result<Node, SyntaxError> {
        let loc = self.loc();
        self.bump(); // 'if' / 'elseif'
        let cond = self.expr()?;
        let then_block = self.block(&["elseif", "else", "end"])?;
        let mut children = vec![cond, then_block];
        if self.at_keyword("elseif") {
            let eloc = self.loc();
            let nested = self.if_chain()?;
            let else_block = Node::block(
                vec![Node::line_info(eloc.clone()), nested],
                eloc,
            );
            children.push(else_block);
        } else if self.eat_keyword("else") {
            children.push(self.block(&["end"])?);
        }
        Ok(Node::new(NodeKind::If, children, loc))
    }

    fn let_expr(&mut self) -> Result<Node, SyntaxError> {
        let loc = self.loc();
        let let_line = self.bump().line;
        let mut children = Vec::new();
        // bindings sit on the same line as the 'let' keyword
        if self.peek().line == let_line
            && matches!(&self.peek().tok, Tok::Ident(n) if !KEYWORDS.contains(&n.as_str()))
            && self.peek_at(1).tok == Tok::Assign
        {
            loop {
                let (name, nline) = self.expect_ident("binding name")?;
                self.expect(Tok::Assign, "'='")?;
                let value = self.expr()?;
                let sloc = SourceLoc::new(&self.file, nline);
                children.push(Node::new(
                    NodeKind::Assign,
                    vec![Node::symbol(name, sloc.clone()), value],
                    sloc,
                ));
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        children.push(self.block(&["end"])?);
        self.expect_keyword("end")?;
        Ok(Node::new(NodeKind::Let, children, loc))
    }

    fn for_expr(&mut self) -> Result<Node, SyntaxError> {
        let loc = self.loc();
        self.bump();
        let mut children = Vec::new();
        loop {
            let (var, vline) = self.expect_ident("loop variable")?;
            self.expect_keyword("in")?;
            let iter = self.expr()?;
            children.push(Node::symbol(var, SourceLoc::new(&self.file, vline)));
            children.push(iter);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        children.push(self.block(&["end"])?);
        self.expect_keyword("end")?;
        Ok(Node::new(NodeKind::For, children, loc))
    }

    fn try_expr(&mut self) -> Result<Node, SyntaxError> {
        let loc = self.loc();
        self.bump();
        let body = self.block(&["catch", "finally", "end"])?;
        let mut children = vec![body];
        let mut has_clause = false;
        if self.eat_keyword("catch") {
            let (var, vline) = self.expect_ident("catch variable")?;
            children.push(Node::symbol(var, SourceLoc::new(&self.file, vline)));
            children.push(self.block(&["finally", "end"])?);
            has_clause = true;
        }
        if self.eat_keyword("finally") {
            children.push(self.block(&["end"])?);
            has_clause = true;
        }
        self.expect_keyword("end")?;
        if !has_clause {
            return Err(SyntaxError {
                file: loc.file,
                line: loc.line,
                message: "'try' requires a 'catch' or 'finally' clause".into(),
            });
        }
        Ok(Node::new(NodeKind::TryCatchFinally, children, loc))
    }

    fn macro_call(&mut self) -> Result<Node, SyntaxError> {
        let loc = self.loc();
        self.bump(); // '@'
        let (name, nline) = match self.peek().tok.clone() {
            Tok::Ident(n) => (n, self.bump().line),
            other => return Err(self.error(format!("expected macro name, found {}", describe(&other)))),
        };
        let name_node = Node::symbol(name.clone(), SourceLoc::new(&self.file, nline));
        match name.as_str() {
            "time" => {
                if !self.continues() || !self.starts_expr() {
                    return Err(self.error("expected expression after @time"));
                }
                let arg = self.expr()?;
                Ok(Node::new(NodeKind::MacroCall, vec![name_node, arg], loc))
            }
            "isdefined" => {
                self.expect(Tok::LParen, "'('")?;
                let (var, vline) = self.expect_ident("variable name")?;
                self.expect(Tok::RParen, "')'")?;
                Ok(Node::new(
                    NodeKind::MacroCall,
                    vec![name_node, Node::symbol(var, SourceLoc::new(&self.file, vline))],
                    loc,
                ))
            }
            "attr" => Err(self.error("@attr is only allowed at statement position")),
            "args" | "result" | "exception" | "original" if self.allow_holes => {
                Ok(Node::new(NodeKind::MacroCall, vec![name_node], loc))
            }
            "jp" if self.allow_holes => {
                self.expect(Tok::LParen, "'('")?;
                let (which, wline) = self.expect_ident("jp field")?;
                if !matches!(which.as_str(), "name" | "file" | "line" | "pointcut") {
                    return Err(self.error(format!("unknown @jp field '{which}'")));
                }
                self.expect(Tok::RParen, "')'")?;
                Ok(Node::new(
                    NodeKind::MacroCall,
                    vec![name_node, Node::symbol(which, SourceLoc::new(&self.file, wline))],
                    loc,
                ))
            }
            "arg_expr" if self.allow_holes => {
                self.expect(Tok::LParen, "'('")?;
                let idx = match self.peek().tok.clone() {
                    Tok::Int(v) if v >= 1 => {
                        let line = self.bump().line;
                        Node::leaf(NodeKind::IntLit, Atom::Int(v), SourceLoc::new(&self.file, line))
                    }
                    _ => return Err(self.error("@arg_expr expects a positive integer index")),
                };
                self.expect(Tok::RParen, "')'")?;
                Ok(Node::new(NodeKind::MacroCall, vec![name_node, idx], loc))
            }
            "transform" if self.allow_holes => {
                self.expect(Tok::LParen, "'('")?;
                let (which, wline) = self.expect_ident("transform name")?;
                self.expect(Tok::RParen, "')'")?;
                Ok(Node::new(
                    NodeKind::MacroCall,
                    vec![name_node, Node::symbol(which, SourceLoc::new(&self.file, wline))],
                    loc,
                ))
            }
            other => Err(self.error(format!("unknown macro '@{other}'"))),
        }
    }
}

/// Canonical interpolation shape: an interpolated string-literal expression
/// is indistinguishable from literal text when printed, so adjacent string
/// parts merge, empty text drops out, and an interpolation left with no
/// non-literal part collapses to a plain string.
pub fn normalize_interp(children: Vec<Node>, loc: SourceLoc) -> Node {
    let mut merged: Vec<Node> = Vec::new();
    for c in children {
        if let Some(text) = c.str_value() {
            if text.is_empty() {
                continue;
            }
            if let Some(prev) = merged.last_mut() {
                if let (NodeKind::StringLit, Some(Atom::Str(p))) = (prev.kind, &mut prev.atom) {
                    p.push_str(text);
                    continue;
                }
            }
        }
        merged.push(c);
    }
    let all_text = merged.iter().all(|c| c.kind == NodeKind::StringLit);
    if all_text {
        let text: String = merged
            .iter()
            .filter_map(|c| c.str_value())
            .collect();
        return Node::string(text, loc);
    }
    Node::new(NodeKind::StringInterp, merged, loc)
}

fn op_call(op: &str, operands: Vec<Node>, loc: SourceLoc) -> Node {
    let mut children = vec![Node::symbol(op, loc.clone())];
    children.extend(operands);
    Node::new(NodeKind::Call, children, loc)
}

/// Builds a call node, special-casing the `include` and `throw` forms.
fn make_call(callee: Node, args: Vec<Node>, loc: SourceLoc, file: &str) -> Result<Node, SyntaxError> {
    match callee.sym_name() {
        Some("include") => {
            if args.len() != 1 {
                return Err(SyntaxError {
                    file: file.to_string(),
                    line: loc.line,
                    message: "include takes exactly one argument".into(),
                });
            }
            Ok(Node::new(NodeKind::Include, args, loc))
        }
        Some("throw") => {
            if args.len() != 1 {
                return Err(SyntaxError {
                    file: file.to_string(),
                    line: loc.line,
                    message: "throw takes exactly one argument".into(),
                });
            }
            Ok(Node::new(NodeKind::Throw, args, loc))
        }
        _ => {
            let mut children = vec![callee];
            children.extend(args);
            Ok(Node::new(NodeKind::Call, children, loc))
        }
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Int(v) => format!("integer {v}"),
        Tok::Float(v) => format!("float {v}"),
        Tok::Str(_) => "string literal".into(),
        Tok::Eof => "end of input".into(),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::LBracket => "'['".into(),
        Tok::RBracket => "']'".into(),
        Tok::Comma => "','".into(),
        Tok::Semi => "';'".into(),
        Tok::Dot => "'.'".into(),
        Tok::Ellipsis => "'...'".into(),
        Tok::At => "'@'".into(),
        Tok::Colon => "':'".into(),
        Tok::ColonColon => "'::'".into(),
        Tok::Arrow => "'->'".into(),
        Tok::Assign => "'='".into(),
        Tok::PlusAssign => "'+='".into(),
        Tok::EqEq => "'=='".into(),
        Tok::NotEq => "'!='".into(),
        Tok::Lt => "'<'".into(),
        Tok::Gt => "'>'".into(),
        Tok::Le => "'<='".into(),
        Tok::Ge => "'>='".into(),
        Tok::Plus => "'+'".into(),
        Tok::Minus => "'-'".into(),
        Tok::Star => "'*'".into(),
        Tok::Slash => "'/'".into(),
        Tok::AndAnd => "'&&'".into(),
        Tok::OrOr => "'||'".into(),
    }
}
