//! Pointcut kinds, name/argument matching, and the crawler that turns
//! matches into join-point descriptors.
//!
//! Internal pointcuts (exec_func, module, struct) select definitions;
//! external pointcuts (call, assign*, ref*) select uses. attr selects
//! nodes tagged by `@attr`, and xpath delegates to the [`crate::pcxpath`]
//! projection.

use crate::pcxpath::{self, Query, XmlTag};
use crate::syntax::{Node, NodeKind, Param, SourceLoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternMode {
    Exact,
    Substring,
}

/// Name pattern: a symbol in the surface syntax means exact match, a
/// string means substring match. The empty substring matches everything.
#[derive(Debug, Clone)]
pub struct NamePattern {
    pub mode: PatternMode,
    pub text: String,
}

impl NamePattern {
    pub fn exact(text: impl Into<String>) -> Self {
        NamePattern {
            mode: PatternMode::Exact,
            text: text.into(),
        }
    }

    pub fn substring(text: impl Into<String>) -> Self {
        NamePattern {
            mode: PatternMode::Substring,
            text: text.into(),
        }
    }

    fn display(&self) -> String {
        match self.mode {
            PatternMode::Exact => format!(":{}", self.text),
            PatternMode::Substring => format!("\"{}\"", self.text),
        }
    }
}

pub fn match_name(pattern: &NamePattern, candidate: &str) -> bool {
    match pattern.mode {
        PatternMode::Exact => candidate == pattern.text,
        PatternMode::Substring => candidate.contains(&pattern.text),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgRole {
    Positional,
    Variadic,
    Keyword,
    VariadicKeyword,
}

/// One argument matcher of an exec_func pointcut. Type matching is textual
/// on annotation names; "Any" is the wildcard and unannotated parameters
/// count as "Any".
#[derive(Debug, Clone)]
pub struct ArgMatcher {
    pub role: ArgRole,
    pub type_name: String,
    pub symbol: Option<String>,
}

impl ArgMatcher {
    pub fn display(&self) -> String {
        let prefix = match self.role {
            ArgRole::Positional => "A",
            ArgRole::Variadic => "VA",
            ArgRole::Keyword => "KA",
            ArgRole::VariadicKeyword => "KVA",
        };
        match &self.symbol {
            Some(s) => format!("{prefix}{}(:{s})", self.type_name),
            None => format!("{prefix}{}", self.type_name),
        }
    }
}

/// True when the matcher list covers the signature exactly: positional
/// matchers align one-to-one with positional parameters, keyword matchers
/// consume every keyword parameter by symbol, and nothing is left over.
pub fn match_args(matchers: &[ArgMatcher], params: &[Param]) -> bool {
    let positional_params: Vec<&Param> = params.iter().filter(|p| !p.keyword).collect();
    let keyword_params: Vec<&Param> = params.iter().filter(|p| p.keyword).collect();
    let positional_matchers: Vec<&ArgMatcher> = matchers
        .iter()
        .filter(|m| matches!(m.role, ArgRole::Positional | ArgRole::Variadic))
        .collect();
    let keyword_matchers: Vec<&ArgMatcher> = matchers
        .iter()
        .filter(|m| matches!(m.role, ArgRole::Keyword | ArgRole::VariadicKeyword))
        .collect();

    if positional_matchers.len() != positional_params.len() {
        return false;
    }
    for (m, p) in positional_matchers.iter().zip(&positional_params) {
        let wants_variadic = m.role == ArgRole::Variadic;
        if wants_variadic != p.variadic {
            return false;
        }
        if !type_matches(&m.type_name, p) {
            return false;
        }
        if let Some(sym) = &m.symbol {
            if sym != &p.name {
                return false;
            }
        }
    }

    let mut consumed = vec![false; keyword_params.len()];
    for m in &keyword_matchers {
        let Some(sym) = &m.symbol else {
            return false; // the symbol is required for keyword matchers
        };
        let Some(idx) = keyword_params
            .iter()
            .position(|p| &p.name == sym)
        else {
            return false;
        };
        if consumed[idx] {
            return false;
        }
        let p = keyword_params[idx];
        let wants_variadic = m.role == ArgRole::VariadicKeyword;
        if wants_variadic != p.variadic {
            return false;
        }
        if !type_matches(&m.type_name, p) {
            return false;
        }
        consumed[idx] = true;
    }
    consumed.iter().all(|c| *c)
}

fn type_matches(matcher_type: &str, param: &Param) -> bool {
    if matcher_type == "Any" {
        return true;
    }
    match &param.type_name {
        Some(t) => t == matcher_type,
        None => false, // unannotated parameters are "Any"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointcutKind {
    ExecFunc,
    Module,
    Struct,
    CallFunc,
    Assign,
    AssignAry,
    AssignSt,
    RefAry,
    RefSt,
    Attr,
    XPath,
}

#[derive(Debug, Clone)]
pub struct Pointcut {
    pub kind: PointcutKind,
    pub pattern: NamePattern,
    pub arg_matchers: Option<Vec<ArgMatcher>>,
    pub xpath_source: Option<String>,
    pub xpath: Option<Query>,
    /// Debug string in the pointcut's surface form, e.g. "PCCallFunc(:foo)".
    pub description: String,
}

impl Pointcut {
    pub fn new(kind: PointcutKind, pattern: NamePattern) -> Self {
        let name = match kind {
            PointcutKind::ExecFunc => "PCExecFunc",
            PointcutKind::Module => "PCModule",
            PointcutKind::Struct => "PCStruct",
            PointcutKind::CallFunc => "PCCallFunc",
            PointcutKind::Assign => "PCAssign",
            PointcutKind::AssignAry => "PCAssignAry",
            PointcutKind::AssignSt => "PCAssignSt",
            PointcutKind::RefAry => "PCRefAry",
            PointcutKind::RefSt => "PCRefSt",
            PointcutKind::Attr => "PCAttr",
            PointcutKind::XPath => "PCXPath",
        };
        let description = format!("{name}({})", pattern.display());
        Pointcut {
            kind,
            pattern,
            arg_matchers: None,
            xpath_source: None,
            xpath: None,
            description,
        }
    }

    pub fn with_matchers(kind: PointcutKind, pattern: NamePattern, matchers: Vec<ArgMatcher>) -> Self {
        let mut pc = Pointcut::new(kind, pattern);
        let shown: Vec<String> = matchers.iter().map(|m| m.display()).collect();
        pc.description = format!(
            "PCExecFunc({}, [{}])",
            pc.pattern.display(),
            shown.join(", ")
        );
        pc.arg_matchers = Some(matchers);
        pc
    }

    pub fn xpath(source: impl Into<String>, query: Query) -> Self {
        let source = source.into();
        let mut pc = Pointcut::new(PointcutKind::XPath, NamePattern::substring(""));
        pc.description = format!("PCXPath(\"{source}\")");
        pc.xpath_source = Some(source);
        pc.xpath = Some(query);
        pc
    }

    /// Tries to match one node. XPath pointcuts are path-based and never
    /// match through this entry; use [`scan`].
    pub fn match_site(&self, node: &Node) -> Option<JoinPoint> {
        let jp_kind = match self.kind {
            PointcutKind::ExecFunc => {
                if node.kind != NodeKind::FunctionDef {
                    return None; // short forms and lambdas are not exec join points
                }
                let name = node.children[0].sym_name()?;
                if !match_name(&self.pattern, name) {
                    return None;
                }
                if let Some(matchers) = &self.arg_matchers {
                    if !match_args(matchers, &node.params) {
                        return None;
                    }
                }
                JpKind::ExecFunc
            }
            PointcutKind::Module => {
                if node.kind != NodeKind::Module
                    || !match_name(&self.pattern, node.children[0].sym_name()?)
                {
                    return None;
                }
                JpKind::Module
            }
            PointcutKind::Struct => {
                if node.kind != NodeKind::StructDef
                    || !match_name(&self.pattern, node.children[0].sym_name()?)
                {
                    return None;
                }
                JpKind::Struct
            }
            PointcutKind::CallFunc => {
                if node.kind != NodeKind::Call
                    || !match_name(&self.pattern, node.children[0].sym_name()?)
                {
                    return None;
                }
                JpKind::CallFunc
            }
            PointcutKind::Assign => {
                if !matches!(node.kind, NodeKind::Assign | NodeKind::OpAssign)
                    || !match_name(&self.pattern, node.children[0].sym_name()?)
                {
                    return None;
                }
                JpKind::Assign
            }
            PointcutKind::AssignAry => {
                if node.kind != NodeKind::IndexAssign
                    || !match_name(&self.pattern, base_name(&node.children[0])?)
                {
                    return None;
                }
                JpKind::Assign
            }
            PointcutKind::AssignSt => {
                if node.kind != NodeKind::FieldAssign
                    || !match_name(&self.pattern, base_name(&node.children[0])?)
                {
                    return None;
                }
                JpKind::Assign
            }
            PointcutKind::RefAry => {
                if node.kind != NodeKind::IndexRef
                    || !match_name(&self.pattern, base_name(&node.children[0])?)
                {
                    return None;
                }
                JpKind::Ref
            }
            PointcutKind::RefSt => {
                if node.kind != NodeKind::FieldRef
                    || !match_name(&self.pattern, base_name(&node.children[0])?)
                {
                    return None;
                }
                JpKind::Ref
            }
            PointcutKind::Attr => {
                if !node.attrs.iter().any(|a| match_name(&self.pattern, a)) {
                    return None;
                }
                auto_kind(node)
            }
            PointcutKind::XPath => return None,
        };
        Some(make_join_point(jp_kind, node, &self.description))
    }

    /// True for exec_func pointcuts whose name matched but whose argument
    /// matchers rejected the signature — surfaced as match diagnostics.
    pub fn near_miss(&self, node: &Node) -> bool {
        if self.kind != PointcutKind::ExecFunc || node.kind != NodeKind::FunctionDef {
            return false;
        }
        let Some(name) = node.children[0].sym_name() else {
            return false;
        };
        let Some(matchers) = &self.arg_matchers else {
            return false;
        };
        match_name(&self.pattern, name) && !match_args(matchers, &node.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JpKind {
    ExecFunc,
    Module,
    Struct,
    CallFunc,
    Assign,
    Ref,
    Default,
}

impl JpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            JpKind::ExecFunc => "JPExecFunc",
            JpKind::Module => "JPModule",
            JpKind::Struct => "JPStruct",
            JpKind::CallFunc => "JPCallFunc",
            JpKind::Assign => "JPAssign",
            JpKind::Ref => "JPRef",
            JpKind::Default => "JPDefault",
        }
    }
}

/// A matched site: what was matched, by which pointcut, and the argument
/// expressions advice may consume.
#[derive(Debug, Clone)]
pub struct JoinPoint {
    pub kind: JpKind,
    pub name: String,
    pub original: Node,
    pub pointcut_description: String,
    pub arg_exprs: Vec<Node>,
    pub kw_exprs: Vec<(String, Node)>,
    pub loc: SourceLoc,
}

/// JP kind for attr pointcuts, determined by the tagged node itself.
fn auto_kind(node: &Node) -> JpKind {
    match node.kind {
        NodeKind::Call => JpKind::CallFunc,
        NodeKind::Assign | NodeKind::OpAssign | NodeKind::IndexAssign | NodeKind::FieldAssign => {
            JpKind::Assign
        }
        _ => JpKind::Default,
    }
}

fn jp_kind_for_tag(tag: XmlTag) -> JpKind {
    match tag {
        XmlTag::Call => JpKind::CallFunc,
        XmlTag::Function => JpKind::ExecFunc,
        XmlTag::Module => JpKind::Module,
        XmlTag::Struct => JpKind::Struct,
        XmlTag::Assign => JpKind::Assign,
        XmlTag::Ref => JpKind::Ref,
        _ => JpKind::Default,
    }
}

/// Root symbol of an access chain like `s.x[i]`.
fn base_name(node: &Node) -> Option<&str> {
    match node.kind {
        NodeKind::Symbol => node.sym_name(),
        NodeKind::FieldRef | NodeKind::IndexRef => base_name(&node.children[0]),
        _ => None,
    }
}

pub fn make_join_point(kind: JpKind, node: &Node, description: &str) -> JoinPoint {
    let (name, arg_exprs, kw_exprs) = site_info(node);
    JoinPoint {
        kind,
        name,
        original: node.clone(),
        pointcut_description: description.to_string(),
        arg_exprs,
        kw_exprs,
        loc: node.loc.clone(),
    }
}

/// Name and argument expressions of a site, by node kind. For definitions
/// the "arguments" are the parameter names as symbols; for calls the
/// argument expressions; for short-circuit operators the operands; for
/// assignments the assigned value.
fn site_info(node: &Node) -> (String, Vec<Node>, Vec<(String, Node)>) {
    match node.kind {
        NodeKind::FunctionDef | NodeKind::ShortFuncDef => {
            let name = node.children[0].sym_name().unwrap_or("").to_string();
            let mut args = Vec::new();
            let mut kwargs = Vec::new();
            for p in &node.params {
                let sym = Node::symbol(p.name.clone(), node.loc.clone());
                if p.keyword {
                    kwargs.push((p.name.clone(), sym));
                } else {
                    args.push(sym);
                }
            }
            (name, args, kwargs)
        }
        NodeKind::Call => {
            let name = node.children[0].sym_name().unwrap_or("").to_string();
            (name, node.children[1..].to_vec(), Vec::new())
        }
        NodeKind::AndAnd | NodeKind::OrOr => (String::new(), node.children.clone(), Vec::new()),
        NodeKind::Assign | NodeKind::OpAssign => (
            node.children[0].sym_name().unwrap_or("").to_string(),
            vec![node.children[1].clone()],
            Vec::new(),
        ),
        NodeKind::IndexAssign | NodeKind::FieldAssign => (
            base_name(&node.children[0]).unwrap_or("").to_string(),
            vec![node.children[2].clone()],
            Vec::new(),
        ),
        NodeKind::IndexRef => (
            base_name(&node.children[0]).unwrap_or("").to_string(),
            vec![node.children[1].clone()],
            Vec::new(),
        ),
        NodeKind::FieldRef => (
            base_name(&node.children[0]).unwrap_or("").to_string(),
            Vec::new(),
            Vec::new(),
        ),
        NodeKind::Module | NodeKind::StructDef => (
            node.children[0].sym_name().unwrap_or("").to_string(),
            Vec::new(),
            Vec::new(),
        ),
        _ => (String::new(), Vec::new(), Vec::new()),
    }
}

/// Every matching site in document order, paired with its child-index path.
pub fn scan(pointcut: &Pointcut, program: &Node) -> Vec<(Vec<usize>, JoinPoint)> {
    if pointcut.kind == PointcutKind::XPath {
        return scan_xpath(pointcut, program);
    }
    let mut out = Vec::new();
    let mut path = Vec::new();
    scan_rec(pointcut, program, &mut path, &mut out, &mut Vec::new(), true);
    out
}

/// Let bindings are binders, not assignment sites: the binding child of a
/// Let node is never a join point (its right-hand side still is).
pub fn is_binding_position(parent: &Node, child_index: usize) -> bool {
    parent.kind == NodeKind::Let && child_index + 1 < parent.children.len()
}

/// A name-matched exec_func site whose argument matchers failed.
#[derive(Debug, Clone)]
pub struct NearMiss {
    pub name: String,
    pub loc: SourceLoc,
    pub pointcut_description: String,
}

pub fn scan_with_near_misses(
    pointcut: &Pointcut,
    program: &Node,
) -> (Vec<(Vec<usize>, JoinPoint)>, Vec<NearMiss>) {
    if pointcut.kind == PointcutKind::XPath {
        return (scan_xpath(pointcut, program), Vec::new());
    }
    let mut out = Vec::new();
    let mut misses = Vec::new();
    let mut path = Vec::new();
    scan_rec(pointcut, program, &mut path, &mut out, &mut misses, true);
    (out, misses)
}

fn scan_rec(
    pointcut: &Pointcut,
    node: &Node,
    path: &mut Vec<usize>,
    out: &mut Vec<(Vec<usize>, JoinPoint)>,
    misses: &mut Vec<NearMiss>,
    matchable: bool,
) {
    if matchable {
        if let Some(jp) = pointcut.match_site(node) {
            out.push((path.clone(), jp));
        } else if pointcut.near_miss(node) {
            misses.push(NearMiss {
                name: node.children[0].sym_name().unwrap_or("").to_string(),
                loc: node.loc.clone(),
                pointcut_description: pointcut.description.clone(),
            });
        }
    }
    for (i, child) in node.children.iter().enumerate() {
        path.push(i);
        scan_rec(
            pointcut,
            child,
            path,
            out,
            misses,
            !is_binding_position(node, i),
        );
        path.pop();
    }
}

fn scan_xpath(pointcut: &Pointcut, program: &Node) -> Vec<(Vec<usize>, JoinPoint)> {
    let Some(query) = &pointcut.xpath else {
        return Vec::new();
    };
    let doc = pcxpath::project(program);
    let mut out = Vec::new();
    for hit in pcxpath::select(query, &doc) {
        let Some(origin) = &hit.origin else { continue };
        let Some(node) = pcxpath::resolve_path(program, origin) else {
            continue;
        };
        // a selected let binding is a binder, not a weavable site
        if let Some((&last, parent_path)) = origin.split_last() {
            if let Some(parent) = pcxpath::resolve_path(program, parent_path) {
                if is_binding_position(parent, last) {
                    continue;
                }
            }
        }
        let jp = make_join_point(jp_kind_for_tag(hit.tag), node, &pointcut.description);
        out.push((origin.clone(), jp));
    }
    out
}
