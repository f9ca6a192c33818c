//! Advice kinds, advice templates with splice holes, fusion, the Aspect
//! pairing, and the `.asp` aspect-file parser.
//!
//! Insert advice (before/after families) adds behavior around a join point
//! without touching it; Replace advice (around/append) substitutes or
//! extends the matched AST. Template bodies are HL fragments with holes:
//! `@jp(name|file|line|pointcut)`, `@args`, `@result`, `@exception`,
//! `@original`, `@arg_expr(i)`, and `@transform(swap_loop)`.

use thiserror::Error;

use crate::pcxpath;
use crate::pointcut::{ArgMatcher, ArgRole, JoinPoint, NamePattern, Pointcut, PointcutKind};
use crate::syntax::{parse_fragment, Node, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdviceKind {
    Before,
    BeforeA,
    AfterR,
    AfterRA,
    AfterThrowing,
    AfterThrowingA,
    After,
    AfterA,
    Around,
    AppendF,
    AppendB,
    Nothing,
}

impl AdviceKind {
    pub fn surface_name(self) -> &'static str {
        match self {
            AdviceKind::Before => "before",
            AdviceKind::BeforeA => "before_args",
            AdviceKind::AfterR => "after_returning",
            AdviceKind::AfterRA => "after_returning_args",
            AdviceKind::AfterThrowing => "after_throwing",
            AdviceKind::AfterThrowingA => "after_throwing_args",
            AdviceKind::After => "after",
            AdviceKind::AfterA => "after_args",
            AdviceKind::Around => "around",
            AdviceKind::AppendF => "append_front",
            AdviceKind::AppendB => "append_back",
            AdviceKind::Nothing => "nothing",
        }
    }

    fn from_surface(name: &str) -> Option<Self> {
        Some(match name {
            "before" => AdviceKind::Before,
            "before_args" => AdviceKind::BeforeA,
            "after_returning" => AdviceKind::AfterR,
            "after_returning_args" => AdviceKind::AfterRA,
            "after_throwing" => AdviceKind::AfterThrowing,
            "after_throwing_args" => AdviceKind::AfterThrowingA,
            "after" => AdviceKind::After,
            "after_args" => AdviceKind::AfterA,
            "around" => AdviceKind::Around,
            "append_front" => AdviceKind::AppendF,
            "append_back" => AdviceKind::AppendB,
            "nothing" => AdviceKind::Nothing,
            _ => return None,
        })
    }

    /// Insert advice leaves the original logic unmodified.
    pub fn is_insert(self) -> bool {
        matches!(
            self,
            AdviceKind::Before
                | AdviceKind::BeforeA
                | AdviceKind::AfterR
                | AdviceKind::AfterRA
                | AdviceKind::AfterThrowing
                | AdviceKind::AfterThrowingA
                | AdviceKind::After
                | AdviceKind::AfterA
        )
    }

    pub fn is_replace(self) -> bool {
        matches!(
            self,
            AdviceKind::Around | AdviceKind::AppendF | AdviceKind::AppendB
        )
    }

    /// The A-variants, which receive the join point's arguments.
    pub fn consumes_args(self) -> bool {
        matches!(
            self,
            AdviceKind::BeforeA | AdviceKind::AfterRA | AdviceKind::AfterThrowingA | AdviceKind::AfterA
        )
    }
}

#[derive(Debug, Clone)]
pub struct AdviceTemplate {
    pub kind: AdviceKind,
    /// Parsed HL fragment (a Block) with splice holes as macro-call nodes.
    pub body: Node,
    pub file: String,
    pub line: u32,
}

/// Ordered composition of advice templates applied at the same join points.
#[derive(Debug, Clone, Default)]
pub struct FusedAdvice {
    pub templates: Vec<AdviceTemplate>,
}

impl FusedAdvice {
    pub fn single(template: AdviceTemplate) -> Self {
        FusedAdvice {
            templates: vec![template],
        }
    }
}

/// One pointcut paired with one (possibly fused) advice.
#[derive(Debug, Clone)]
pub struct Aspect {
    pub name: String,
    pub pointcut: Pointcut,
    pub advice: FusedAdvice,
    pub file: String,
    pub line: u32,
}

#[derive(Debug, Clone, Error)]
pub enum AdviceError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: u32,
        message: String,
    },
    #[error("fusion would combine two {0} templates; composition of same-family after/around advice is undefined")]
    FusionConflict(&'static str),
    #[error("@arg_expr({index}) is out of range: the join point has {available} argument(s)")]
    ArgExprOutOfRange { index: usize, available: usize },
    #[error("@transform(swap_loop) requires a for-loop join point, found {found}")]
    SwapLoopTarget { found: String },
    #[error("unknown transform '{0}'")]
    UnknownTransform(String),
}

fn family(kind: AdviceKind) -> Option<&'static str> {
    match kind {
        AdviceKind::AfterR | AdviceKind::AfterRA => Some("after_returning"),
        AdviceKind::AfterThrowing | AdviceKind::AfterThrowingA => Some("after_throwing"),
        AdviceKind::After | AdviceKind::AfterA => Some("after"),
        AdviceKind::Around => Some("around"),
        _ => None,
    }
}

fn check_caps(templates: &[AdviceTemplate]) -> Result<(), AdviceError> {
    for fam in ["after_returning", "after_throwing", "after", "around"] {
        let n = templates
            .iter()
            .filter(|t| family(t.kind) == Some(fam))
            .count();
        if n > 1 {
            let name: &'static str = match fam {
                "after_returning" => "after_returning",
                "after_throwing" => "after_throwing",
                "after" => "after",
                _ => "around",
            };
            return Err(AdviceError::FusionConflict(name));
        }
    }
    Ok(())
}

/// Concatenates two fused advices, preserving order. Before-family
/// templates may repeat; afters and around are capped at one each.
pub fn fuse(a: FusedAdvice, b: FusedAdvice) -> Result<FusedAdvice, AdviceError> {
    let mut templates = a.templates;
    templates.extend(b.templates);
    check_caps(&templates)?;
    Ok(FusedAdvice { templates })
}

/// What each context-dependent hole expands to at a particular site. The
/// weaver fills these with the binder names it synthesizes.
pub struct SpliceCtx<'a> {
    pub jp: &'a JoinPoint,
    pub original: &'a Node,
    pub args_expr: Option<&'a Node>,
    pub result_expr: Option<&'a Node>,
    pub exception_expr: Option<&'a Node>,
    /// Argument ASTs spliced by @arg_expr; defaults to jp.arg_exprs.
    pub arg_exprs: Option<&'a [Node]>,
}

impl<'a> SpliceCtx<'a> {
    pub fn new(jp: &'a JoinPoint, original: &'a Node) -> Self {
        SpliceCtx {
            jp,
            original,
            args_expr: None,
            result_expr: None,
            exception_expr: None,
            arg_exprs: None,
        }
    }
}

/// Substitutes the template's holes for the given join point. The returned
/// tree shares nothing with the template, so repeat instantiation at other
/// sites stays independent.
pub fn instantiate(
    template: &AdviceTemplate,
    jp: &JoinPoint,
    original: &Node,
) -> Result<Node, AdviceError> {
    instantiate_with(template, &SpliceCtx::new(jp, original))
}

pub fn instantiate_with(template: &AdviceTemplate, ctx: &SpliceCtx) -> Result<Node, AdviceError> {
    let body = substitute(&template.body, ctx)?;
    Ok(unwrap_single(body))
}

/// A Block holding exactly one real statement stands for that statement.
pub fn unwrap_single(node: Node) -> Node {
    if node.kind != NodeKind::Block {
        return node;
    }
    let mut real = node
        .children
        .iter()
        .filter(|c| c.kind != NodeKind::LineInfo);
    match (real.next(), real.next()) {
        (Some(_), None) => {
            let only = node
                .children
                .into_iter()
                .find(|c| c.kind != NodeKind::LineInfo)
                .unwrap();
            unwrap_single(only)
        }
        _ => node,
    }
}

fn substitute(node: &Node, ctx: &SpliceCtx) -> Result<Node, AdviceError> {
    if node.kind == NodeKind::MacroCall {
        if let Some(hole) = node.children[0].sym_name() {
            match hole {
                "jp" => {
                    let which = node.children[1].sym_name().unwrap_or("");
                    let loc = node.loc.clone();
                    return Ok(match which {
                        "name" => Node::symbol(ctx.jp.name.clone(), loc),
                        "file" => Node::string(ctx.jp.loc.file.clone(), loc),
                        "line" => Node::int(ctx.jp.loc.line as i64, loc),
                        _ => Node::string(ctx.jp.pointcut_description.clone(), loc),
                    });
                }
                "args" => {
                    return Ok(ctx
                        .args_expr
                        .cloned()
                        .unwrap_or_else(|| Node::symbol("arg", node.loc.clone())));
                }
                "result" => {
                    return Ok(ctx
                        .result_expr
                        .cloned()
                        .unwrap_or_else(|| Node::symbol("result", node.loc.clone())));
                }
                "exception" => {
                    return Ok(ctx
                        .exception_expr
                        .cloned()
                        .unwrap_or_else(|| Node::symbol("exception", node.loc.clone())));
                }
                "original" => return Ok(ctx.original.clone()),
                "arg_expr" => {
                    let index = node.children[1].int_value().unwrap_or(0) as usize;
                    let args = ctx.arg_exprs.unwrap_or(&ctx.jp.arg_exprs);
                    let expr = args.get(index.wrapping_sub(1)).ok_or(
                        AdviceError::ArgExprOutOfRange {
                            index,
                            available: args.len(),
                        },
                    )?;
                    return Ok(expr.clone());
                }
                "transform" => {
                    let which = node.children[1].sym_name().unwrap_or("");
                    if which != "swap_loop" {
                        return Err(AdviceError::UnknownTransform(which.to_string()));
                    }
                    return swap_loop(ctx.original);
                }
                _ => {}
            }
        }
    }
    let mut out = node.clone();
    out.children = node
        .children
        .iter()
        .map(|c| substitute(c, ctx))
        .collect::<Result<_, _>>()?;
    Ok(out)
}

/// Reverses the iterator clauses of a for loop; applying it twice restores
/// the original loop.
pub fn swap_loop(node: &Node) -> Result<Node, AdviceError> {
    if node.kind != NodeKind::For {
        return Err(AdviceError::SwapLoopTarget {
            found: node.kind.to_string(),
        });
    }
    let clauses = (node.children.len() - 1) / 2;
    let mut children = Vec::with_capacity(node.children.len());
    for i in (0..clauses).rev() {
        children.push(node.children[2 * i].clone());
        children.push(node.children[2 * i + 1].clone());
    }
    children.push(node.children[clauses * 2].clone());
    let mut out = node.clone();
    out.children = children;
    Ok(out)
}

// ---- hole validation -------------------------------------------------------

fn validate_template(template: &AdviceTemplate) -> Result<(), AdviceError> {
    let mut originals = 0usize;
    let mut transforms = 0usize;
    let mut err = None;
    template.body.walk(&mut |n| {
        if err.is_some() || n.kind != NodeKind::MacroCall {
            return;
        }
        let Some(hole) = n.children[0].sym_name() else {
            return;
        };
        let kind = template.kind;
        let bad = |message: String| AdviceError::Parse {
            file: template.file.clone(),
            line: n.loc.line,
            message,
        };
        match hole {
            "args" if !kind.consumes_args() => {
                err = Some(bad(format!(
                    "@args is only available under the _args advice kinds, not '{}'",
                    kind.surface_name()
                )));
            }
            "result" if !matches!(kind, AdviceKind::AfterR | AdviceKind::AfterRA) => {
                err = Some(bad(format!(
                    "@result is only available under after_returning kinds, not '{}'",
                    kind.surface_name()
                )));
            }
            "exception"
                if !matches!(kind, AdviceKind::AfterThrowing | AdviceKind::AfterThrowingA) =>
            {
                err = Some(bad(format!(
                    "@exception is only available under after_throwing kinds, not '{}'",
                    kind.surface_name()
                )));
            }
            "original" => {
                originals += 1;
                if kind != AdviceKind::Around {
                    err = Some(bad(format!(
                        "@original is only available under 'around', not '{}'",
                        kind.surface_name()
                    )));
                } else if originals > 1 {
                    err = Some(bad("@original may appear at most once".to_string()));
                }
            }
            "arg_expr" if !kind.is_replace() => {
                err = Some(bad(format!(
                    "@arg_expr is only available under replace advice, not '{}'",
                    kind.surface_name()
                )));
            }
            "transform" => {
                transforms += 1;
                if kind != AdviceKind::Around {
                    err = Some(bad(format!(
                        "@transform is only available under 'around', not '{}'",
                        kind.surface_name()
                    )));
                }
            }
            _ => {}
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if transforms > 0 {
        // a transform is a whole-body rewrite: the body must be exactly it
        let real: Vec<&Node> = template
            .body
            .children
            .iter()
            .filter(|c| c.kind != NodeKind::LineInfo)
            .collect();
        let sole_transform = real.len() == 1
            && real[0].kind == NodeKind::MacroCall
            && real[0].children[0].sym_name() == Some("transform");
        if !sole_transform || transforms > 1 {
            return Err(AdviceError::Parse {
                file: template.file.clone(),
                line: template.line,
                message: "@transform(...) must be the entire advice body".to_string(),
            });
        }
    }
    Ok(())
}

// ---- aspect file parser ----------------------------------------------------

/// Parses a `.asp` aspect file into aspects in file order.
pub fn parse_aspect_file(text: &str, filename: &str) -> Result<Vec<Aspect>, AdviceError> {
    let mut p = AspParser {
        chars: text.chars().collect(),
        pos: 0,
        line: 1,
        file: filename.to_string(),
    };
    let mut aspects = Vec::new();
    loop {
        p.skip_trivia();
        if p.peek().is_none() {
            return Ok(aspects);
        }
        aspects.push(p.aspect()?);
    }
}

struct AspParser {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    file: String,
}

impl AspParser {
    fn error(&self, message: impl Into<String>) -> AdviceError {
        AdviceError::Parse {
            file: self.file.clone(),
            line: self.line,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if let Some(c) = c {
            self.pos += 1;
            if c == '\n' {
                self.line += 1;
            }
        }
        c
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('#') => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => return,
            }
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_trivia();
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), AdviceError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!(
                "expected '{c}', found '{}'",
                self.peek().map(String::from).unwrap_or_else(|| "end of file".into())
            )))
        }
    }

    fn ident(&mut self) -> Result<String, AdviceError> {
        self.skip_trivia();
        let mut s = String::new();
        while self
            .peek()
            .is_some_and(|c| c.is_alphanumeric() || c == '_')
        {
            s.push(self.bump().unwrap());
        }
        if s.is_empty() {
            return Err(self.error("expected a name"));
        }
        Ok(s)
    }

    fn string(&mut self) -> Result<String, AdviceError> {
        self.skip_trivia();
        if self.peek() != Some('"') {
            return Err(self.error("expected a string literal"));
        }
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                Some('"') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some('\\') => s.push('\\'),
                    Some('"') => s.push('"'),
                    Some('$') => s.push('$'),
                    _ => return Err(self.error("bad escape in string")),
                },
                Some(c) => s.push(c),
                None => return Err(self.error("unterminated string")),
            }
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), AdviceError> {
        let got = self.ident()?;
        if got == kw {
            Ok(())
        } else {
            Err(self.error(format!("expected '{kw}', found '{got}'")))
        }
    }

    fn aspect(&mut self) -> Result<Aspect, AdviceError> {
        self.skip_trivia();
        let line = self.line;
        self.keyword("aspect")?;
        let name = self.string()?;
        self.expect('{')?;
        self.skip_trivia();
        self.keyword("pointcut")?;
        self.expect(':')?;
        let pointcut = self.pointcut()?;
        let mut advice: Option<FusedAdvice> = None;
        loop {
            self.skip_trivia();
            if self.eat('}') {
                break;
            }
            self.keyword("advice")?;
            self.expect(':')?;
            let kind_name = self.ident()?;
            let Some(kind) = AdviceKind::from_surface(&kind_name) else {
                return Err(self.error(format!("unknown advice kind '{kind_name}'")));
            };
            self.expect('{')?;
            let body_line = self.line;
            let body_text = self.capture_body()?;
            let body = parse_fragment(&body_text, &self.file, body_line, true).map_err(|e| {
                AdviceError::Parse {
                    file: e.file,
                    line: e.line,
                    message: e.message,
                }
            })?;
            let template = AdviceTemplate {
                kind,
                body,
                file: self.file.clone(),
                line: body_line,
            };
            validate_template(&template)?;
            advice = Some(match advice.take() {
                None => FusedAdvice::single(template),
                Some(prev) => fuse(prev, FusedAdvice::single(template))?,
            });
        }
        let advice = advice.ok_or_else(|| self.error("aspect has no advice block"))?;
        Ok(Aspect {
            name,
            pointcut,
            advice,
            file: self.file.clone(),
            line,
        })
    }

    /// Raw text up to the matching '}', honoring strings, interpolations
    /// and comments inside the body.
    fn capture_body(&mut self) -> Result<String, AdviceError> {
        enum Mode {
            Code,
            Str,
            Interp(usize),
        }
        let mut depth = 1usize;
        let mut modes: Vec<Mode> = vec![Mode::Code];
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(self.error("unterminated advice body"));
            };
            match modes.last().unwrap() {
                Mode::Code => match c {
                    '{' => {
                        depth += 1;
                        out.push(c);
                        self.bump();
                    }
                    '}' => {
                        depth -= 1;
                        self.bump();
                        if depth == 0 {
                            return Ok(out);
                        }
                        out.push(c);
                    }
                    '"' => {
                        modes.push(Mode::Str);
                        out.push(c);
                        self.bump();
                    }
                    '#' => {
                        // copy comments through; the HL lexer will skip them
                        while let Some(cc) = self.peek() {
                            if cc == '\n' {
                                break;
                            }
                            out.push(cc);
                            self.bump();
                        }
                    }
                    _ => {
                        out.push(c);
                        self.bump();
                    }
                },
                Mode::Str => match c {
                    '\\' => {
                        out.push(c);
                        self.bump();
                        if let Some(e) = self.bump() {
                            out.push(e);
                        }
                    }
                    '"' => {
                        modes.pop();
                        out.push(c);
                        self.bump();
                    }
                    '$' => {
                        out.push(c);
                        self.bump();
                        if self.peek() == Some('(') {
                            out.push('(');
                            self.bump();
                            modes.push(Mode::Interp(1));
                        }
                    }
                    _ => {
                        out.push(c);
                        self.bump();
                    }
                },
                Mode::Interp(d) => {
                    let d = *d;
                    match c {
                        '(' => {
                            *modes.last_mut().map(|m| match m {
                                Mode::Interp(n) => n,
                                _ => unreachable!(),
                            }).unwrap() = d + 1;
                            out.push(c);
                            self.bump();
                        }
                        ')' => {
                            if d == 1 {
                                modes.pop();
                            } else {
                                *modes.last_mut().map(|m| match m {
                                    Mode::Interp(n) => n,
                                    _ => unreachable!(),
                                }).unwrap() = d - 1;
                            }
                            out.push(c);
                            self.bump();
                        }
                        '"' => {
                            modes.push(Mode::Str);
                            out.push(c);
                            self.bump();
                        }
                        _ => {
                            out.push(c);
                            self.bump();
                        }
                    }
                }
            }
        }
    }

    fn pointcut(&mut self) -> Result<Pointcut, AdviceError> {
        let kind_name = self.ident()?;
        self.expect('(')?;
        let pc = match kind_name.as_str() {
            "xpath" => {
                let source = self.string()?;
                let query = pcxpath::parse_query(&source).map_err(|e| {
                    self.error(format!("in xpath pointcut: {e}"))
                })?;
                Pointcut::xpath(source, query)
            }
            _ => {
                let kind = match kind_name.as_str() {
                    "exec_func" => PointcutKind::ExecFunc,
                    "call" => PointcutKind::CallFunc,
                    "assign" => PointcutKind::Assign,
                    "assign_ary" => PointcutKind::AssignAry,
                    "assign_st" => PointcutKind::AssignSt,
                    "ref_ary" => PointcutKind::RefAry,
                    "ref_st" => PointcutKind::RefSt,
                    "attr" => PointcutKind::Attr,
                    "module" => PointcutKind::Module,
                    "struct" => PointcutKind::Struct,
                    other => {
                        return Err(self.error(format!("unknown pointcut kind '{other}'")))
                    }
                };
                let pattern = self.pattern()?;
                if self.eat(',') {
                    if kind != PointcutKind::ExecFunc {
                        return Err(self.error(
                            "argument matchers are only supported by exec_func".to_string(),
                        ));
                    }
                    self.expect('[')?;
                    let mut matchers = Vec::new();
                    if !self.eat(']') {
                        loop {
                            matchers.push(self.matcher()?);
                            if self.eat(']') {
                                break;
                            }
                            self.expect(',')?;
                        }
                    }
                    Pointcut::with_matchers(kind, pattern, matchers)
                } else {
                    Pointcut::new(kind, pattern)
                }
            }
        };
        self.expect(')')?;
        Ok(pc)
    }

    fn pattern(&mut self) -> Result<NamePattern, AdviceError> {
        self.skip_trivia();
        match self.peek() {
            Some(':') => {
                self.bump();
                let name = self.ident()?;
                Ok(NamePattern::exact(name))
            }
            Some('"') => Ok(NamePattern::substring(self.string()?)),
            _ => Err(self.error("expected :name or \"substring\" pattern")),
        }
    }

    fn matcher(&mut self) -> Result<ArgMatcher, AdviceError> {
        let token = self.ident()?;
        let (role, type_name) = if let Some(t) = token.strip_prefix("KVA") {
            (ArgRole::VariadicKeyword, t)
        } else if let Some(t) = token.strip_prefix("KA") {
            (ArgRole::Keyword, t)
        } else if let Some(t) = token.strip_prefix("VA") {
            (ArgRole::Variadic, t)
        } else if let Some(t) = token.strip_prefix('A') {
            (ArgRole::Positional, t)
        } else {
            return Err(self.error(format!(
                "bad argument matcher '{token}': expected A/VA/KA/KVA prefix"
            )));
        };
        if type_name.is_empty() {
            return Err(self.error(format!("argument matcher '{token}' is missing a type name")));
        }
        let symbol = if self.eat('(') {
            self.skip_trivia();
            if self.peek() != Some(':') {
                return Err(self.error("expected :symbol in argument matcher"));
            }
            self.bump();
            let s = self.ident()?;
            self.expect(')')?;
            Some(s)
        } else {
            None
        };
        if role == ArgRole::Keyword && symbol.is_none() {
            return Err(self.error("keyword matcher requires a symbol, e.g. KAAny(:z)".to_string()));
        }
        if role == ArgRole::VariadicKeyword {
            if type_name != "Any" {
                return Err(self.error("variadic keyword matcher must be KVAAny".to_string()));
            }
            if symbol.is_none() {
                return Err(self.error("KVAAny requires a symbol".to_string()));
            }
        }
        Ok(ArgMatcher {
            role,
            type_name: type_name.to_string(),
            symbol,
        })
    }
}
