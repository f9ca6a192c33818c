//! AST node types for HL and structural equality.

use std::fmt;

/// Source position attached to every node. Synthesized nodes carry line 0.
/// `provenance` is set by the weaver on the line markers it inserts in front
/// of advice invocations; parsed nodes never have it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceLoc {
    pub file: String,
    pub line: u32,
    pub provenance: Option<String>,
}

impl SourceLoc {
    pub fn new(file: impl Into<String>, line: u32) -> Self {
        SourceLoc {
            file: file.into(),
            line,
            provenance: None,
        }
    }

    /// Location for nodes the toolchain makes up out of thin air.
    pub fn synthesized() -> Self {
        SourceLoc::default()
    }
}

impl fmt::Display for SourceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Module,
    FunctionDef,
    ShortFuncDef,
    Lambda,
    StructDef,
    Call,
    MacroCall,
    Assign,
    OpAssign,
    IndexAssign,
    FieldAssign,
    IndexRef,
    FieldRef,
    For,
    If,
    Let,
    TryCatchFinally,
    Throw,
    Block,
    AndAnd,
    OrOr,
    Return,
    Symbol,
    IntLit,
    FloatLit,
    BoolLit,
    StringLit,
    StringInterp,
    ArrayLit,
    TupleLit,
    MapLit,
    Range,
    Include,
    AttrAnnot,
    Aj,
    LineInfo,
}

impl NodeKind {
    pub fn is_literal(self) -> bool {
        matches!(
            self,
            NodeKind::Symbol
                | NodeKind::IntLit
                | NodeKind::FloatLit
                | NodeKind::BoolLit
                | NodeKind::StringLit
        )
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

/// Literal payload; present iff the kind is one of the five literal kinds.
#[derive(Debug, Clone)]
pub enum Atom {
    Sym(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
}

impl Atom {
    fn equal(&self, other: &Atom) -> bool {
        match (self, other) {
            (Atom::Sym(a), Atom::Sym(b)) => a == b,
            (Atom::Int(a), Atom::Int(b)) => a == b,
            // bit equality so that -0.0 and 0.0 stay distinguishable
            (Atom::Float(a), Atom::Float(b)) => a.to_bits() == b.to_bits(),
            (Atom::Bool(a), Atom::Bool(b)) => a == b,
            (Atom::Str(a), Atom::Str(b)) => a == b,
            _ => false,
        }
    }
}

/// One parameter of a function-like definition, or one field of a struct
/// (fields are params with no default, not variadic, not keyword).
#[derive(Debug, Clone, Default)]
pub struct Param {
    pub name: String,
    pub type_name: Option<String>,
    pub variadic: bool,
    pub default: Option<Node>,
    pub keyword: bool,
}

impl Param {
    pub fn named(name: impl Into<String>) -> Self {
        Param {
            name: name.into(),
            ..Param::default()
        }
    }
}

/// The HL syntax tree node. `params` is used only by FunctionDef,
/// ShortFuncDef, Lambda and StructDef (struct fields); `is_mutable` only by
/// StructDef.
#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    pub children: Vec<Node>,
    pub atom: Option<Atom>,
    pub loc: SourceLoc,
    pub attrs: Vec<String>,
    pub params: Vec<Param>,
    pub is_mutable: bool,
}

impl Node {
    pub fn new(kind: NodeKind, children: Vec<Node>, loc: SourceLoc) -> Self {
        Node {
            kind,
            children,
            atom: None,
            loc,
            attrs: Vec::new(),
            params: Vec::new(),
            is_mutable: false,
        }
    }

    pub fn leaf(kind: NodeKind, atom: Atom, loc: SourceLoc) -> Self {
        Node {
            kind,
            children: Vec::new(),
            atom: Some(atom),
            loc,
            attrs: Vec::new(),
            params: Vec::new(),
            is_mutable: false,
        }
    }

    pub fn symbol(name: impl Into<String>, loc: SourceLoc) -> Self {
        Node::leaf(NodeKind::Symbol, Atom::Sym(name.into()), loc)
    }

    pub fn int(value: i64, loc: SourceLoc) -> Self {
        Node::leaf(NodeKind::IntLit, Atom::Int(value), loc)
    }

    pub fn string(value: impl Into<String>, loc: SourceLoc) -> Self {
        Node::leaf(NodeKind::StringLit, Atom::Str(value.into()), loc)
    }

    pub fn line_info(loc: SourceLoc) -> Self {
        Node::new(NodeKind::LineInfo, Vec::new(), loc)
    }

    pub fn block(stmts: Vec<Node>, loc: SourceLoc) -> Self {
        Node::new(NodeKind::Block, stmts, loc)
    }

    /// Name payload of a Symbol node.
    pub fn sym_name(&self) -> Option<&str> {
        match (&self.kind, &self.atom) {
            (NodeKind::Symbol, Some(Atom::Sym(s))) => Some(s),
            _ => None,
        }
    }

    pub fn str_value(&self) -> Option<&str> {
        match (&self.kind, &self.atom) {
            (NodeKind::StringLit, Some(Atom::Str(s))) => Some(s),
            _ => None,
        }
    }

    pub fn int_value(&self) -> Option<i64> {
        match (&self.kind, &self.atom) {
            (NodeKind::IntLit, Some(Atom::Int(i))) => Some(*i),
            _ => None,
        }
    }

    /// True if any node in the tree has the given kind.
    pub fn contains_kind(&self, kind: NodeKind) -> bool {
        if self.kind == kind {
            return true;
        }
        self.children.iter().any(|c| c.contains_kind(kind))
            || self
                .params
                .iter()
                .any(|p| p.default.as_ref().is_some_and(|d| d.contains_kind(kind)))
    }

    /// Pre-order walk over the tree, including parameter defaults.
    pub fn walk(&self, f: &mut impl FnMut(&Node)) {
        f(self);
        for p in &self.params {
            if let Some(d) = &p.default {
                d.walk(f);
            }
        }
        for c in &self.children {
            c.walk(f);
        }
    }
}

/// Structural equality. With `ignore_lines`, LineInfo nodes and `loc` fields
/// are skipped and redundant Block nesting is normalized away, so that trees
/// differing only in layout artifacts compare equal.
pub fn node_equal(a: &Node, b: &Node, ignore_lines: bool) -> bool {
    if ignore_lines {
        eq_ignore(a, b)
    } else {
        eq_strict(a, b)
    }
}

fn eq_strict(a: &Node, b: &Node) -> bool {
    a.kind == b.kind
        && atoms_equal(&a.atom, &b.atom)
        && a.loc == b.loc
        && a.attrs == b.attrs
        && a.is_mutable == b.is_mutable
        && params_equal(&a.params, &b.params, false)
        && a.children.len() == b.children.len()
        && a.children
            .iter()
            .zip(&b.children)
            .all(|(x, y)| eq_strict(x, y))
}

fn eq_ignore(a: &Node, b: &Node) -> bool {
    let a = unwrap_singleton(a);
    let b = unwrap_singleton(b);
    if a.kind != b.kind
        || !atoms_equal(&a.atom, &b.atom)
        || a.attrs != b.attrs
        || a.is_mutable != b.is_mutable
        || !params_equal(&a.params, &b.params, true)
    {
        return false;
    }
    if matches!(a.kind, NodeKind::Block | NodeKind::Module) {
        let xs = flat_stmts(a);
        let ys = flat_stmts(b);
        return xs.len() == ys.len() && xs.iter().zip(&ys).all(|(x, y)| eq_ignore(x, y));
    }
    let xs: Vec<&Node> = a
        .children
        .iter()
        .filter(|c| c.kind != NodeKind::LineInfo)
        .collect();
    let ys: Vec<&Node> = b
        .children
        .iter()
        .filter(|c| c.kind != NodeKind::LineInfo)
        .collect();
    xs.len() == ys.len() && xs.iter().zip(&ys).all(|(x, y)| eq_ignore(x, y))
}

/// A Block with exactly one real statement stands for that statement.
fn unwrap_singleton(node: &Node) -> &Node {
    let mut n = node;
    while n.kind == NodeKind::Block && n.attrs.is_empty() {
        let mut real = n.children.iter().filter(|c| c.kind != NodeKind::LineInfo);
        match (real.next(), real.next()) {
            (Some(only), None) => n = only,
            _ => break,
        }
    }
    n
}

/// Statement list with LineInfo dropped and nested Blocks spliced inline.
fn flat_stmts(node: &Node) -> Vec<&Node> {
    let mut out = Vec::new();
    let skip = if node.kind == NodeKind::Module { 1 } else { 0 };
    collect_stmts(&node.children[skip.min(node.children.len())..], &mut out);
    if node.kind == NodeKind::Module {
        if let Some(name) = node.children.first() {
            out.insert(0, name);
        }
    }
    out
}

fn collect_stmts<'a>(children: &'a [Node], out: &mut Vec<&'a Node>) {
    for c in children {
        match c.kind {
            NodeKind::LineInfo => {}
            NodeKind::Block if c.attrs.is_empty() => collect_stmts(&c.children, out),
            _ => out.push(c),
        }
    }
}

fn atoms_equal(a: &Option<Atom>, b: &Option<Atom>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => x.equal(y),
        _ => false,
    }
}

fn params_equal(a: &[Param], b: &[Param], ignore_lines: bool) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.name == y.name
                && x.type_name == y.type_name
                && x.variadic == y.variadic
                && x.keyword == y.keyword
                && match (&x.default, &y.default) {
                    (None, None) => true,
                    (Some(dx), Some(dy)) => node_equal(dx, dy, ignore_lines),
                    _ => false,
                }
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(s: &str) -> Node {
        Node::symbol(s, SourceLoc::new("t.hl", 1))
    }

    #[test]
    fn differing_atom_is_unequal() {
        assert!(!node_equal(&sym("a"), &sym("b"), true));
        assert!(node_equal(&sym("a"), &sym("a"), true));
    }

    #[test]
    fn loc_only_difference_matters_when_lines_compared() {
        let a = Node::symbol("x", SourceLoc::new("t.hl", 1));
        let b = Node::symbol("x", SourceLoc::new("t.hl", 2));
        assert!(!node_equal(&a, &b, false));
        assert!(node_equal(&a, &b, true));
    }

    #[test]
    fn block_nesting_is_normalized_when_ignoring_lines() {
        let loc = SourceLoc::synthesized();
        let flat = Node::block(vec![sym("a"), sym("b")], loc.clone());
        let nested = Node::block(
            vec![
                Node::line_info(SourceLoc::new("t.hl", 1)),
                sym("a"),
                Node::block(vec![sym("b")], loc.clone()),
            ],
            loc,
        );
        assert!(node_equal(&flat, &nested, true));
        assert!(!node_equal(&flat, &nested, false));
    }

    #[test]
    fn singleton_block_equals_its_statement() {
        let loc = SourceLoc::synthesized();
        let wrapped = Node::block(vec![sym("a")], loc);
        assert!(node_equal(&wrapped, &sym("a"), true));
    }

    #[test]
    fn nodes_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Node>();
        assert_send_sync::<Param>();
        assert_send_sync::<SourceLoc>();
    }
}
