//! XML projection of the HL AST and the restricted XPath dialect evaluated
//! over it.
//!
//! The projection maps definition constructs (module/function/struct/for)
//! to container elements and expression constructs (call/ref/assign/
//! macrocall) to leaf elements whose nested expressions surface as
//! following siblings, in document order. Each projected element keeps the
//! child-index path of the AST node it came from, so query results can be
//! mapped back to live tree sites.

use thiserror::Error;

use crate::syntax::{Node, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XmlTag {
    Joinpoint,
    Macro,
    Macrocall,
    Module,
    Function,
    Call,
    Struct,
    Ref,
    Assign,
    For,
}

impl XmlTag {
    pub fn as_str(self) -> &'static str {
        match self {
            XmlTag::Joinpoint => "joinpoint",
            XmlTag::Macro => "macro",
            XmlTag::Macrocall => "macrocall",
            XmlTag::Module => "module",
            XmlTag::Function => "function",
            XmlTag::Call => "call",
            XmlTag::Struct => "struct",
            XmlTag::Ref => "ref",
            XmlTag::Assign => "assign",
            XmlTag::For => "for",
        }
    }
}

/// Attributes that the serializer drops when they hold their default value.
fn is_optional(attr: &str, value: &str) -> bool {
    match attr {
        "bare" | "parallel" | "comprehension" | "mutable" => value == "false",
        "args" | "ref" | "op" | "attr" => value.is_empty(),
        _ => false,
    }
}

#[derive(Debug, Clone)]
pub struct XmlNode {
    pub tag: XmlTag,
    /// Attribute list in the serialization order fixed per tag.
    pub attrs: Vec<(String, String)>,
    pub children: Vec<XmlNode>,
    /// Child-index path of the source AST node; absent only for the root.
    pub origin: Option<Vec<usize>>,
}

impl XmlNode {
    pub fn new(tag: XmlTag) -> Self {
        XmlNode {
            tag,
            attrs: Vec::new(),
            children: Vec::new(),
            origin: None,
        }
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    fn set_attr(&mut self, name: &str, value: impl Into<String>) {
        let value = value.into();
        if let Some(slot) = self.attrs.iter_mut().find(|(k, _)| k == name) {
            slot.1 = value;
        } else {
            self.attrs.push((name.to_string(), value));
        }
    }
}

/// Projects a pre-weaved program into its XML document.
pub fn project(program: &Node) -> XmlNode {
    let mut root = XmlNode::new(XmlTag::Joinpoint);
    let mut path = Vec::new();
    walk(program, &mut path, &mut root.children, None);
    root
}

fn walk(node: &Node, path: &mut Vec<usize>, out: &mut Vec<XmlNode>, pending_attr: Option<String>) {
    let attr_value = {
        let mut tags = node.attrs.clone();
        if let Some(p) = pending_attr {
            tags.push(p);
        }
        tags.join(",")
    };
    match node.kind {
        NodeKind::Module => {
            let mut el = XmlNode::new(XmlTag::Module);
            el.origin = Some(path.clone());
            el.set_attr("name", node.children[0].sym_name().unwrap_or(""));
            el.set_attr("bare", "false");
            el.set_attr("attr", attr_value);
            walk_children(node, 1, path, &mut el.children);
            out.push(el);
        }
        NodeKind::FunctionDef | NodeKind::ShortFuncDef => {
            let mut el = XmlNode::new(XmlTag::Function);
            el.origin = Some(path.clone());
            el.set_attr("name", node.children[0].sym_name().unwrap_or(""));
            let args: Vec<&str> = node.params.iter().map(|p| p.name.as_str()).collect();
            el.set_attr("args", args.join(","));
            el.set_attr("attr", attr_value);
            walk_children(node, 1, path, &mut el.children);
            out.push(el);
        }
        NodeKind::StructDef => {
            let mut el = XmlNode::new(XmlTag::Struct);
            el.origin = Some(path.clone());
            el.set_attr("name", node.children[0].sym_name().unwrap_or(""));
            el.set_attr("mutable", if node.is_mutable { "true" } else { "false" });
            el.set_attr("attr", attr_value);
            walk_children(node, 1, path, &mut el.children);
            out.push(el);
        }
        NodeKind::For => {
            let mut el = XmlNode::new(XmlTag::For);
            el.origin = Some(path.clone());
            let iterc = (node.children.len() - 1) / 2;
            el.set_attr("iterc", iterc.to_string());
            el.set_attr("comprehension", "false");
            el.set_attr("attr", attr_value);
            for (i, child) in node.children.iter().enumerate() {
                if child.kind == NodeKind::Symbol && i % 2 == 0 && i < iterc * 2 {
                    continue; // loop variables are binders, not references
                }
                path.push(i);
                walk(child, path, &mut el.children, None);
                path.pop();
            }
            out.push(el);
        }
        NodeKind::Call => {
            let mut el = XmlNode::new(XmlTag::Call);
            el.origin = Some(path.clone());
            let callee = &node.children[0];
            let mut extra = Vec::new();
            let (name, chain) = callee_name(callee, &mut extra);
            el.set_attr("name", name);
            el.set_attr("ref", chain);
            el.set_attr("argc", (node.children.len() - 1).to_string());
            el.set_attr("parallel", "false");
            el.set_attr("attr", attr_value);
            out.push(el);
            for (idx, inner) in extra {
                path.push(0);
                path.push(idx);
                walk(inner, path, out, None);
                path.pop();
                path.pop();
            }
            walk_children(node, 1, path, out);
        }
        NodeKind::MacroCall => {
            let mut el = XmlNode::new(XmlTag::Macrocall);
            el.origin = Some(path.clone());
            el.set_attr(
                "name",
                format!("@{}", node.children[0].sym_name().unwrap_or("")),
            );
            el.set_attr("attr", attr_value);
            out.push(el);
            walk_children(node, 1, path, out);
        }
        NodeKind::Assign | NodeKind::OpAssign => {
            let mut el = XmlNode::new(XmlTag::Assign);
            el.origin = Some(path.clone());
            el.set_attr("name", node.children[0].sym_name().unwrap_or(""));
            el.set_attr("ref", "");
            el.set_attr(
                "op",
                if node.kind == NodeKind::OpAssign { "+=" } else { "" },
            );
            el.set_attr("attr", attr_value);
            out.push(el);
            walk_children(node, 1, path, out);
        }
        NodeKind::IndexAssign | NodeKind::FieldAssign => {
            let mut el = XmlNode::new(XmlTag::Assign);
            el.origin = Some(path.clone());
            let mut extra = Vec::new();
            let (name, mut chain) = chain_of(&node.children[0], &mut extra, &[0]);
            if node.kind == NodeKind::IndexAssign {
                chain.push_str("[]");
            } else {
                chain.push_str(&format!(
                    ".{}",
                    node.children[1].sym_name().unwrap_or("")
                ));
            }
            el.set_attr("name", name);
            el.set_attr("ref", format!("%{chain}"));
            el.set_attr("op", "");
            el.set_attr("attr", attr_value);
            out.push(el);
            for (p, inner) in extra {
                path.extend(&p);
                walk(inner, path, out, None);
                path.truncate(path.len() - p.len());
            }
            // explicit index expression, then the assigned value
            if node.kind == NodeKind::IndexAssign {
                walk_children(node, 1, path, out);
            } else {
                walk_children(node, 2, path, out);
            }
        }
        NodeKind::IndexRef | NodeKind::FieldRef => {
            let mut el = XmlNode::new(XmlTag::Ref);
            el.origin = Some(path.clone());
            let mut extra = Vec::new();
            let (name, chain) = chain_of(node, &mut extra, &[]);
            el.set_attr("name", name);
            el.set_attr("ref", format!("%{chain}"));
            el.set_attr("attr", attr_value);
            out.push(el);
            for (p, inner) in extra {
                path.extend(&p);
                walk(inner, path, out, None);
                path.truncate(path.len() - p.len());
            }
        }
        NodeKind::AttrAnnot => {
            let tag = node.children[0].str_value().unwrap_or("").to_string();
            path.push(1);
            walk(&node.children[1], path, out, Some(tag));
            path.pop();
        }
        NodeKind::Aj => {
            // transparent wrapper introduced by earlier weaves
            if node.children.len() > 1 {
                path.push(1);
                walk(&node.children[1], path, out, None);
                path.pop();
            }
        }
        NodeKind::Symbol
        | NodeKind::IntLit
        | NodeKind::FloatLit
        | NodeKind::BoolLit
        | NodeKind::StringLit
        | NodeKind::LineInfo => {}
        _ => {
            // transparent node kinds: children are hoisted to this level
            walk_children(node, 0, path, out);
        }
    }
}

fn walk_children(node: &Node, from: usize, path: &mut Vec<usize>, out: &mut Vec<XmlNode>) {
    for (i, child) in node.children.iter().enumerate().skip(from) {
        path.push(i);
        walk(child, path, out, None);
        path.pop();
    }
}

/// Name and access chain of a call's callee. `s.f(x)` gets name "s" and
/// chain "%.f"; a computed callee gets an empty name.
fn callee_name<'a>(
    callee: &'a Node,
    extra: &mut Vec<(usize, &'a Node)>,
) -> (String, String) {
    match callee.kind {
        NodeKind::Symbol => (callee.sym_name().unwrap_or("").to_string(), String::new()),
        NodeKind::FieldRef | NodeKind::IndexRef => {
            let mut inner = Vec::new();
            let (name, chain) = chain_of(callee, &mut inner, &[]);
            for (p, n) in inner {
                // re-anchor: inner expressions of the callee live under child 0
                if let Some(first) = p.first() {
                    extra.push((*first, n));
                }
            }
            (name, format!("%{chain}"))
        }
        _ => (String::new(), String::new()),
    }
}

/// Builds the ref chain of an access expression, collecting non-chain inner
/// expressions (array indexes) with their relative paths.
fn chain_of<'a>(
    node: &'a Node,
    extra: &mut Vec<(Vec<usize>, &'a Node)>,
    prefix: &[usize],
) -> (String, String) {
    match node.kind {
        NodeKind::Symbol => (node.sym_name().unwrap_or("").to_string(), String::new()),
        NodeKind::FieldRef => {
            let mut base_prefix = prefix.to_vec();
            base_prefix.push(0);
            let (name, mut chain) = chain_of(&node.children[0], extra, &base_prefix);
            chain.push_str(&format!(".{}", node.children[1].sym_name().unwrap_or("")));
            (name, chain)
        }
        NodeKind::IndexRef => {
            let mut base_prefix = prefix.to_vec();
            base_prefix.push(0);
            let (name, mut chain) = chain_of(&node.children[0], extra, &base_prefix);
            chain.push_str("[]");
            let mut index_path = prefix.to_vec();
            index_path.push(1);
            extra.push((index_path, &node.children[1]));
            (name, chain)
        }
        NodeKind::TupleLit => {
            // tuple access chains render as "(,,)" with arity-1 commas
            let commas = node.children.len().saturating_sub(1);
            (String::new(), format!("({})", ",".repeat(commas)))
        }
        _ => (String::new(), String::new()),
    }
}

/// Serializes the document: 2-space indentation, fixed attribute order,
/// self-closing leaves. Matches the golden dump format byte for byte.
pub fn to_xml(doc: &XmlNode) -> String {
    let mut out = String::new();
    write_node(doc, 0, &mut out);
    out
}

fn write_node(node: &XmlNode, depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    out.push('<');
    out.push_str(node.tag.as_str());
    for (k, v) in &node.attrs {
        if is_optional(k, v) {
            continue;
        }
        out.push_str(&format!(" {k}=\"{v}\""));
    }
    if node.children.is_empty() {
        out.push_str("/>\n");
        return;
    }
    out.push_str(">\n");
    for child in &node.children {
        write_node(child, depth + 1, out);
    }
    for _ in 0..depth {
        out.push_str("  ");
    }
    out.push_str(&format!("</{}>\n", node.tag.as_str()));
}

// ---- query dialect --------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Child,
    Descendant,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pred {
    Eq(String, String),
    Contains(String, String),
    Not(Box<Pred>),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
}

#[derive(Debug, Clone)]
pub struct Step {
    pub axis: Axis,
    /// None is the wildcard `*`.
    pub tag: Option<String>,
    pub preds: Vec<Pred>,
}

#[derive(Debug, Clone)]
pub struct Query {
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, Error)]
#[error("query syntax error at column {column}: {message}")]
pub struct QueryError {
    pub column: usize,
    pub message: String,
}

pub fn parse_query(text: &str) -> Result<Query, QueryError> {
    let mut p = QueryParser {
        chars: text.chars().collect(),
        pos: 0,
    };
    p.query()
}

struct QueryParser {
    chars: Vec<char>,
    pos: usize,
}

impl QueryParser {
    fn error(&self, message: impl Into<String>) -> QueryError {
        QueryError {
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), QueryError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{c}'")))
        }
    }

    fn ident(&mut self) -> Result<String, QueryError> {
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

    fn query(&mut self) -> Result<Query, QueryError> {
        let mut steps = Vec::new();
        self.skip_ws();
        loop {
            if !self.eat('/') {
                return Err(self.error("expected '/' or '//'"));
            }
            let axis = if self.eat('/') {
                Axis::Descendant
            } else {
                Axis::Child
            };
            let tag = if self.eat('*') {
                None
            } else {
                Some(self.ident()?)
            };
            let mut preds = Vec::new();
            while self.eat('[') {
                preds.push(self.pred_or()?);
                self.expect(']')?;
            }
            steps.push(Step { axis, tag, preds });
            self.skip_ws();
            if self.peek().is_none() {
                break;
            }
            if self.peek() != Some('/') {
                return Err(self.error(format!(
                    "unexpected '{}'",
                    self.peek().unwrap_or_default()
                )));
            }
        }
        if steps.is_empty() {
            return Err(self.error("empty query"));
        }
        Ok(Query { steps })
    }

    fn pred_or(&mut self) -> Result<Pred, QueryError> {
        let mut lhs = self.pred_and()?;
        loop {
            self.skip_ws();
            if self.keyword("or") {
                let rhs = self.pred_and()?;
                lhs = Pred::Or(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn pred_and(&mut self) -> Result<Pred, QueryError> {
        let mut lhs = self.pred_unary()?;
        loop {
            self.skip_ws();
            if self.keyword("and") {
                let rhs = self.pred_unary()?;
                lhs = Pred::And(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        let save = self.pos;
        for c in kw.chars() {
            if !self.eat(c) {
                self.pos = save;
                return false;
            }
        }
        // must not be a prefix of a longer name
        if self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
            self.pos = save;
            return false;
        }
        true
    }

    fn pred_unary(&mut self) -> Result<Pred, QueryError> {
        self.skip_ws();
        if self.keyword("not") {
            self.skip_ws();
            self.expect('(')?;
            let inner = self.pred_or()?;
            self.skip_ws();
            self.expect(')')?;
            return Ok(Pred::Not(Box::new(inner)));
        }
        if self.keyword("contains") {
            self.skip_ws();
            self.expect('(')?;
            self.skip_ws();
            self.expect('@')?;
            let attr = self.ident()?;
            self.skip_ws();
            self.expect(',')?;
            self.skip_ws();
            let lit = self.literal()?;
            self.skip_ws();
            self.expect(')')?;
            return Ok(Pred::Contains(attr, lit));
        }
        if self.eat('(') {
            let inner = self.pred_or()?;
            self.skip_ws();
            self.expect(')')?;
            return Ok(inner);
        }
        if self.eat('@') {
            let attr = self.ident()?;
            self.skip_ws();
            self.expect('=')?;
            self.skip_ws();
            let lit = self.literal()?;
            return Ok(Pred::Eq(attr, lit));
        }
        Err(self.error("expected a predicate"))
    }

    fn literal(&mut self) -> Result<String, QueryError> {
        let quote = match self.peek() {
            Some(q @ ('\'' | '"')) => {
                self.bump();
                q
            }
            _ => return Err(self.error("expected a quoted literal")),
        };
        let mut s = String::new();
        loop {
            match self.bump() {
                Some(c) if c == quote => return Ok(s),
                Some(c) => s.push(c),
                None => return Err(self.error("unterminated literal")),
            }
        }
    }
}

/// Evaluates a query against a projected document. Results come back in
/// document order with duplicates removed.
pub fn select<'a>(query: &Query, doc: &'a XmlNode) -> Vec<&'a XmlNode> {
    let mut ctx: Vec<&XmlNode> = vec![doc];
    for step in &query.steps {
        let source: std::collections::HashSet<*const XmlNode> =
            ctx.iter().map(|n| *n as *const XmlNode).collect();
        let mut next = Vec::new();
        collect_step(doc, step, &source, false, &mut next);
        ctx = next;
    }
    ctx
}

fn collect_step<'a>(
    node: &'a XmlNode,
    step: &Step,
    sources: &std::collections::HashSet<*const XmlNode>,
    under_source: bool,
    out: &mut Vec<&'a XmlNode>,
) {
    let is_source = sources.contains(&(node as *const XmlNode));
    for child in &node.children {
        let selectable = match step.axis {
            Axis::Child => is_source,
            Axis::Descendant => is_source || under_source,
        };
        if selectable && matches_step(child, step) {
            out.push(child);
        }
        collect_step(child, step, sources, under_source || is_source, out);
    }
}

fn matches_step(node: &XmlNode, step: &Step) -> bool {
    if let Some(tag) = &step.tag {
        if node.tag.as_str() != tag {
            return false;
        }
    }
    step.preds.iter().all(|p| eval_pred(node, p))
}

pub fn eval_pred(node: &XmlNode, pred: &Pred) -> bool {
    match pred {
        Pred::Eq(attr, lit) => node.attr(attr).is_some_and(|v| v == lit),
        Pred::Contains(attr, lit) => node.attr(attr).is_some_and(|v| v.contains(lit.as_str())),
        Pred::Not(p) => !eval_pred(node, p),
        Pred::And(a, b) => eval_pred(node, a) && eval_pred(node, b),
        Pred::Or(a, b) => eval_pred(node, a) || eval_pred(node, b),
    }
}

/// Resolves an origin path back to the node in the source tree.
pub fn resolve_path<'a>(program: &'a Node, path: &[usize]) -> Option<&'a Node> {
    let mut current = program;
    for &i in path {
        current = current.children.get(i)?;
    }
    Some(current)
}
