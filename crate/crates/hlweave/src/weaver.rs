//! The three-stage pipeline: pre-weave (include resolution, @attr
//! expansion), weave (join-point generation, aj-node insertion), and emit
//! (elaboration of aj nodes into standard HL).
//!
//! An aj node marks a matched site between weave and emit. Its first child
//! is an integer handle into the weaver's side table, which carries the
//! join point and the advice attached by each matching aspect; its second
//! child is the live original subtree. Emit eliminates every aj node.
//!
//! Elaboration layering, outermost to innermost: try/catch/finally when
//! after/after_throwing advice is present, the argument pre-evaluation
//! `let` when an args-consuming advice needs values, return-value capture
//! through a fresh `resulttmp`, before-advice invocations, and finally the
//! (possibly around-replaced) core. Plain before advice at expression sites
//! is hoisted to the enclosing statement boundary.

use std::collections::{HashMap, HashSet};
use std::io;
use std::path::{Component, Path, PathBuf};

use thiserror::Error;

use crate::advice::{
    fuse, instantiate_with, unwrap_single, AdviceError, AdviceKind, AdviceTemplate, Aspect,
    FusedAdvice, SpliceCtx,
};
use crate::pointcut::{scan, JoinPoint, JpKind, PointcutKind};
use crate::syntax::{parse, Atom, Node, NodeKind, SourceLoc, SyntaxError};

#[derive(Debug, Error)]
pub enum WeaveError {
    #[error("{loc}: {message}")]
    PreWeave { loc: SourceLoc, message: String },
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Advice(#[from] AdviceError),
    #[error("{loc}: {message}")]
    Emit { loc: SourceLoc, message: String },
}

/// Weave-time diagnostic; currently only the short-circuit pre-evaluation
/// caveat produces one.
#[derive(Debug, Clone)]
pub struct WeaveWarning {
    pub loc: SourceLoc,
    pub pointcut: String,
    pub message: String,
}

// ---- pre-weave -------------------------------------------------------------

/// Resolves include paths to source text. Paths are resolved relative to
/// the including file's directory before lookup.
pub trait FileLoader {
    fn load(&self, path: &Path) -> io::Result<String>;
}

pub struct FsLoader;

impl FileLoader for FsLoader {
    fn load(&self, path: &Path) -> io::Result<String> {
        std::fs::read_to_string(path)
    }
}

/// In-memory loader for tests and embedded use.
#[derive(Default)]
pub struct MapLoader {
    files: HashMap<PathBuf, String>,
}

impl MapLoader {
    pub fn with(mut self, path: impl Into<PathBuf>, text: impl Into<String>) -> Self {
        self.files.insert(normalize(&path.into()), text.into());
        self
    }
}

impl FileLoader for MapLoader {
    fn load(&self, path: &Path) -> io::Result<String> {
        self.files
            .get(&normalize(path))
            .cloned()
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "file not found"))
    }
}

fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other),
        }
    }
    out
}

/// Replaces literal includes with the parsed, recursively pre-weaved file
/// contents and expands @attr annotations into attrs tags on the annotated
/// node.
pub fn pre_weave(program: &Node, loader: &dyn FileLoader) -> Result<Node, WeaveError> {
    let mut stack = vec![normalize(Path::new(&program.loc.file))];
    pre_weave_rec(program, loader, &mut stack)
}

fn pre_weave_rec(
    node: &Node,
    loader: &dyn FileLoader,
    stack: &mut Vec<PathBuf>,
) -> Result<Node, WeaveError> {
    match node.kind {
        NodeKind::Include => {
            let Some(path_text) = node.children[0].str_value() else {
                return Err(WeaveError::PreWeave {
                    loc: node.loc.clone(),
                    message: "include argument must be a string literal; dynamically computed includes are not supported".into(),
                });
            };
            let base = Path::new(&node.loc.file)
                .parent()
                .unwrap_or_else(|| Path::new(""));
            let resolved = normalize(&base.join(path_text));
            if stack.contains(&resolved) {
                return Err(WeaveError::PreWeave {
                    loc: node.loc.clone(),
                    message: format!("include cycle through '{}'", resolved.display()),
                });
            }
            let text = loader.load(&resolved).map_err(|e| WeaveError::PreWeave {
                loc: node.loc.clone(),
                message: format!("cannot include '{}': {e}", resolved.display()),
            })?;
            let name = resolved.to_string_lossy().to_string();
            let parsed = parse(&text, &name)?;
            stack.push(resolved);
            let out = pre_weave_rec(&parsed, loader, stack)?;
            stack.pop();
            Ok(out)
        }
        NodeKind::AttrAnnot => {
            let tag = node.children[0].str_value().unwrap_or("").to_string();
            let mut inner = pre_weave_rec(&node.children[1], loader, stack)?;
            inner.attrs.push(tag);
            Ok(inner)
        }
        _ => {
            let mut out = node.clone();
            out.children = node
                .children
                .iter()
                .map(|c| pre_weave_rec(c, loader, stack))
                .collect::<Result<_, _>>()?;
            Ok(out)
        }
    }
}

// ---- weave -----------------------------------------------------------------

struct AjEntry {
    jp: JoinPoint,
    aspect_file: String,
    aspect_line: u32,
    templates: Vec<AdviceTemplate>,
}

impl AjEntry {
    fn provenance(&self) -> Node {
        let loc = SourceLoc {
            file: self.aspect_file.clone(),
            line: self.aspect_line,
            provenance: Some(self.jp.pointcut_description.clone()),
        };
        Node::line_info(loc)
    }
}

#[derive(Default)]
pub struct Weaver {
    next_id: i64,
    table: HashMap<i64, Vec<AjEntry>>,
    pub warnings: Vec<WeaveWarning>,
}

impl Weaver {
    pub fn new() -> Self {
        Weaver::default()
    }

    /// Wraps every site matched by each aspect (in order) in an aj node.
    /// Sites matched by several aspects accumulate all their advice in one
    /// aj node, in aspect order. Weaving with no aspects is the identity.
    pub fn weave(&mut self, program: &Node, aspects: &[Aspect]) -> Node {
        let mut tree = program.clone();
        for aspect in aspects {
            tree = self.apply_aspect(tree, aspect);
        }
        tree
    }

    fn apply_aspect(&mut self, tree: Node, aspect: &Aspect) -> Node {
        // xpath pointcuts are path-based: precompute the matched paths on
        // the current tree (aj wrappers project transparently)
        let xpath_hits: Option<HashMap<Vec<usize>, JpKind>> =
            if aspect.pointcut.kind == PointcutKind::XPath {
                Some(
                    scan(&aspect.pointcut, &tree)
                        .into_iter()
                        .map(|(path, jp)| (path, jp.kind))
                        .collect(),
                )
            } else {
                None
            };
        let mut path = Vec::new();
        self.wrap(tree, &mut path, aspect, xpath_hits.as_ref(), true)
    }

    fn match_at(
        &self,
        aspect: &Aspect,
        node: &Node,
        path: &[usize],
        xpath_hits: Option<&HashMap<Vec<usize>, JpKind>>,
    ) -> Option<JoinPoint> {
        match xpath_hits {
            Some(hits) => hits.get(path).map(|kind| {
                crate::pointcut::make_join_point(*kind, node, &aspect.pointcut.description)
            }),
            None => aspect.pointcut.match_site(node),
        }
    }

    fn wrap(
        &mut self,
        node: Node,
        path: &mut Vec<usize>,
        aspect: &Aspect,
        xpath_hits: Option<&HashMap<Vec<usize>, JpKind>>,
        matchable: bool,
    ) -> Node {
        if node.kind == NodeKind::Aj {
            let id = node.children[0].int_value().unwrap_or_default();
            let mut parts = node.children.into_iter();
            let marker = parts.next().unwrap();
            let original = parts.next().unwrap();
            path.push(1);
            let jp = if matchable {
                self.match_at(aspect, &original, path, xpath_hits)
            } else {
                None
            };
            let rewrapped = {
                let mut out = original;
                let kids = std::mem::take(&mut out.children);
                let is_let = out.kind == NodeKind::Let;
                let n = kids.len();
                let child_flags: Vec<bool> = (0..n).map(|i| !(is_let && i + 1 < n)).collect();
                out.children = kids
                    .into_iter()
                    .enumerate()
                    .map(|(i, c)| {
                        path.push(i);
                        let r = self.wrap(c, path, aspect, xpath_hits, child_flags[i]);
                        path.pop();
                        r
                    })
                    .collect();
                out
            };
            path.pop();
            if let Some(jp) = jp {
                self.table.get_mut(&id).expect("aj table entry").push(AjEntry {
                    jp,
                    aspect_file: aspect.file.clone(),
                    aspect_line: aspect.line,
                    templates: aspect.advice.templates.clone(),
                });
            }
            let mut aj = Node::new(NodeKind::Aj, vec![marker, rewrapped], SourceLoc::synthesized());
            aj.loc = aj.children[1].loc.clone();
            aj
        } else {
            // the join point's snapshot is taken before inner sites are wrapped
            let jp = if matchable {
                self.match_at(aspect, &node, path, xpath_hits)
            } else {
                None
            };
            let mut out = node;
            let kids = std::mem::take(&mut out.children);
            let is_let = out.kind == NodeKind::Let;
            let n = kids.len();
            let child_flags: Vec<bool> = (0..n).map(|i| !(is_let && i + 1 < n)).collect();
            out.children = kids
                .into_iter()
                .enumerate()
                .map(|(i, c)| {
                    path.push(i);
                    let r = self.wrap(c, path, aspect, xpath_hits, child_flags[i]);
                    path.pop();
                    r
                })
                .collect();
            match jp {
                Some(jp) => {
                    let id = self.next_id;
                    self.next_id += 1;
                    self.table.insert(
                        id,
                        vec![AjEntry {
                            jp,
                                    aspect_file: aspect.file.clone(),
                            aspect_line: aspect.line,
                            templates: aspect.advice.templates.clone(),
                        }],
                    );
                    let loc = out.loc.clone();
                    let marker = Node::leaf(NodeKind::IntLit, Atom::Int(id), SourceLoc::synthesized());
                    Node::new(NodeKind::Aj, vec![marker, out], loc)
                }
                None => out,
            }
        }
    }

    /// Folds (weave; emit) over the aspect passes left to right. A later
    /// pass's pointcuts can match code introduced by an earlier pass.
    pub fn weave_chain(
        &mut self,
        program: &Node,
        passes: &[Vec<Aspect>],
    ) -> Result<Node, WeaveError> {
        let mut tree = program.clone();
        for pass in passes {
            let woven = self.weave(&tree, pass);
            tree = self.emit(&woven)?;
        }
        Ok(tree)
    }

    // ---- emit --------------------------------------------------------------

    /// Elaborates every aj node into standard HL. The output contains no
    /// aj nodes and prints as plain source.
    pub fn emit(&mut self, program: &Node) -> Result<Node, WeaveError> {
        let mut prelude = Vec::new();
        let out = self.emit_node(program.clone(), &mut prelude)?;
        if prelude.is_empty() {
            Ok(out)
        } else {
            // a bare expression at the very top: keep the hoisted advice
            let mut stmts = prelude;
            let loc = out.loc.clone();
            stmts.push(out);
            Ok(Node::block(stmts, loc))
        }
    }

    fn emit_node(&mut self, node: Node, prelude: &mut Vec<Node>) -> Result<Node, WeaveError> {
        match node.kind {
            NodeKind::Aj => {
                let id = node.children[0].int_value().unwrap_or_default();
                let mut parts = node.children.into_iter();
                let _marker = parts.next();
                let core_raw = parts.next().expect("aj node carries its original");
                let mut inner_prelude = Vec::new();
                let core = self.emit_node(core_raw, &mut inner_prelude)?;
                prelude.extend(inner_prelude);
                let entries = self.table.remove(&id).ok_or_else(|| WeaveError::Emit {
                    loc: node.loc.clone(),
                    message: "aj table entry missing (tree already emitted?)".into(),
                })?;
                if entries.is_empty() || entries.iter().all(|e| e.templates.is_empty()) {
                    return Err(WeaveError::Emit {
                        loc: node.loc.clone(),
                        message: "aj node with an empty advice list".into(),
                    });
                }
                self.elaborate(core, entries, prelude)
            }
            NodeKind::Block | NodeKind::Module => {
                let skip = usize::from(node.kind == NodeKind::Module);
                let mut out = node;
                let kids = std::mem::take(&mut out.children);
                let mut rebuilt = Vec::with_capacity(kids.len());
                for (i, child) in kids.into_iter().enumerate() {
                    if i < skip {
                        rebuilt.push(child);
                        continue;
                    }
                    let mut pre = Vec::new();
                    let stmt = self.emit_node(child, &mut pre)?;
                    rebuilt.extend(pre);
                    rebuilt.push(stmt);
                }
                out.children = rebuilt;
                Ok(out)
            }
            NodeKind::Lambda | NodeKind::ShortFuncDef => {
                // expression bodies form their own statement boundary
                let mut out = node;
                let body_index = out.children.len() - 1;
                let kids = std::mem::take(&mut out.children);
                let mut rebuilt = Vec::with_capacity(kids.len());
                for (i, child) in kids.into_iter().enumerate() {
                    if i == body_index {
                        let mut pre = Vec::new();
                        let body = self.emit_node(child, &mut pre)?;
                        if pre.is_empty() {
                            rebuilt.push(body);
                        } else {
                            let loc = body.loc.clone();
                            pre.push(body);
                            rebuilt.push(Node::block(pre, loc));
                        }
                    } else {
                        rebuilt.push(self.emit_node(child, prelude)?);
                    }
                }
                out.children = rebuilt;
                Ok(out)
            }
            _ => {
                let mut out = node;
                let kids = std::mem::take(&mut out.children);
                out.children = kids
                    .into_iter()
                    .map(|c| self.emit_node(c, prelude))
                    .collect::<Result<_, _>>()?;
                Ok(out)
            }
        }
    }

    fn elaborate(
        &mut self,
        core: Node,
        entries: Vec<AjEntry>,
        prelude: &mut Vec<Node>,
    ) -> Result<Node, WeaveError> {
        match core.kind {
            NodeKind::FunctionDef | NodeKind::ShortFuncDef => self.elaborate_exec(core, entries),
            NodeKind::StructDef | NodeKind::Module => {
                let (core, rest) = self.apply_appends(core, entries)?;
                if rest.iter().all(|e| e.templates.is_empty()) {
                    Ok(core)
                } else {
                    self.elaborate_expr(core, rest, prelude)
                }
            }
            _ => self.elaborate_expr(core, entries, prelude),
        }
    }

    /// append_front/append_back on struct and module definitions splice
    /// members into the definition body; any other advice wraps the
    /// definition statement itself.
    fn apply_appends(
        &mut self,
        mut core: Node,
        entries: Vec<AjEntry>,
    ) -> Result<(Node, Vec<AjEntry>), WeaveError> {
        let mut rest = Vec::new();
        for entry in entries {
            let mut kept = Vec::new();
            for template in &entry.templates {
                if !matches!(template.kind, AdviceKind::AppendF | AdviceKind::AppendB) {
                    kept.push(template.clone());
                    continue;
                }
                let ctx = SpliceCtx::new(&entry.jp, &core);
                let body = instantiate_with(template, &ctx)?;
                let stmts: Vec<Node> = match body.kind {
                    NodeKind::Block => body
                        .children
                        .into_iter()
                        .filter(|c| c.kind != NodeKind::LineInfo)
                        .collect(),
                    _ => vec![body],
                };
                let front = template.kind == AdviceKind::AppendF;
                if core.kind == NodeKind::StructDef {
                    splice_struct_members(&mut core, stmts, front)?;
                } else {
                    // module: statements go after the name / at the end
                    if front {
                        for (off, stmt) in stmts.into_iter().enumerate() {
                            core.children.insert(1 + off, stmt);
                        }
                    } else {
                        core.children.extend(stmts);
                    }
                }
            }
            if !kept.is_empty() {
                rest.push(AjEntry {
                    templates: kept,
                    ..entry
                });
            }
        }
        Ok((core, rest))
    }

    /// Function-execution sites: the advice wraps the function body.
    fn elaborate_exec(&mut self, core: Node, entries: Vec<AjEntry>) -> Result<Node, WeaveError> {
        let mut func = core;
        let body = func.children.pop().expect("function body");
        let name = func.children.pop().expect("function name");
        func.attrs.clear();

        let mut used = used_names(&func);
        used.extend(collect_idents(&body));
        for e in &entries {
            for t in &e.templates {
                used.extend(collect_idents(&t.body));
            }
        }
        for p in &func.params {
            used.insert(p.name.clone());
        }

        // args record over the parameter names
        let loc = func.loc.clone();
        let args_record = record_from_params(&func, &loc);

        let plan = AdvicePlan::build(&entries);
        let mut builder = SiteBuilder {
            weaver: self,
            used,
            loc: loc.clone(),
        };

        let mut stmts: Vec<Node> = Vec::new();
        for (template, entry) in &plan.befores {
            stmts.push(entry.provenance());
            stmts.push(builder.insert_invocation(template, entry, args_record.clone(), None, None)?);
        }
        for (template, entry) in &plan.append_front {
            stmts.extend(builder.replace_stmts(template, entry, None)?);
        }

        // around advice replaces the body; @original is the body's value
        let mut core_value: Option<Node> = None;
        for (template, entry) in &plan.arounds {
            let prev = core_value.take().unwrap_or_else(|| body_value(&body));
            let ctx = SpliceCtx {
                jp: &entry.jp,
                original: &prev,
                args_expr: Some(&args_record),
                result_expr: None,
                exception_expr: None,
                arg_exprs: None,
            };
            core_value = Some(instantiate_with(template, &ctx)?);
        }

        if plan.after_returning.is_empty() {
            match core_value {
                Some(v) => stmts.push(v),
                // long-form bodies splice statement-by-statement; a short
                // definition's body is a single expression
                None if body.kind == NodeKind::Block => {
                    stmts.extend(body.children.iter().cloned())
                }
                None => stmts.push(body.clone()),
            }
        } else {
            let resulttmp = builder.fresh("resulttmp");
            let value = core_value.unwrap_or_else(|| body_value(&body));
            stmts.push(assign(&resulttmp, value, &loc));
            for (template, entry) in &plan.after_returning {
                stmts.push(entry.provenance());
                stmts.push(builder.insert_invocation(
                    template,
                    entry,
                    args_record.clone(),
                    Some(&resulttmp),
                    None,
                )?);
            }
            for (template, entry) in &plan.append_back {
                stmts.extend(builder.replace_stmts(template, entry, None)?);
            }
            stmts.push(Node::symbol(resulttmp.clone(), loc.clone()));
        }
        if plan.after_returning.is_empty() {
            for (template, entry) in &plan.append_back {
                stmts.extend(builder.replace_stmts(template, entry, None)?);
            }
        }

        let new_body = builder.wrap_exceptions(stmts, &plan, &args_record, &loc)?;
        func.children.push(name);
        func.children.push(new_body);
        Ok(func)
    }

    /// Expression and statement sites.
    fn elaborate_expr(
        &mut self,
        core: Node,
        entries: Vec<AjEntry>,
        prelude: &mut Vec<Node>,
    ) -> Result<Node, WeaveError> {
        let mut core = core;
        core.attrs.clear();
        let loc = core.loc.clone();
        let plan = AdvicePlan::build(&entries);
        if plan.is_empty() {
            return Ok(core);
        }

        let mut used = collect_idents(&core);
        for e in &entries {
            for t in &e.templates {
                used.extend(collect_idents(&t.body));
            }
        }
        let mut builder = SiteBuilder {
            weaver: self,
            used,
            loc: loc.clone(),
        };

        // argument pre-evaluation
        let needs_args = plan.consumes_args();
        let arg_slots = argument_slots(&core);
        let pre_eval = needs_args && !arg_slots.is_empty();
        let mut bindings: Vec<Node> = Vec::new();
        let mut binding_syms: Vec<Node> = Vec::new();
        if pre_eval {
            if matches!(core.kind, NodeKind::AndAnd | NodeKind::OrOr) {
                let entry = &entries[0];
                builder.weaver.warnings.push(WeaveWarning {
                    loc: loc.clone(),
                    pointcut: entry.jp.pointcut_description.clone(),
                    message: "argument pre-evaluation defeats short-circuit evaluation at this join point"
                        .into(),
                });
            }
            for slot in &arg_slots {
                let name = builder.fresh(&format!("arg{}", bindings.len() + 1));
                let expr = core.children[*slot].clone();
                bindings.push(assign(&name, expr, &loc));
                let sym = Node::symbol(name, loc.clone());
                core.children[*slot] = sym.clone();
                binding_syms.push(sym);
            }
        }

        let args_record = if pre_eval {
            record_from_exprs(&binding_syms, &[], &loc)
        } else {
            record_from_exprs(&[], &[], &loc)
        };

        // plain before advice hoists to the statement boundary
        for (template, entry) in &plan.befores {
            if template.kind == AdviceKind::Before {
                prelude.push(entry.provenance());
                prelude.push(builder.insert_invocation(template, entry, args_record.clone(), None, None)?);
            }
        }

        // around advice replaces the core, innermost first in aspect order
        let mut core_expr = core;
        for (template, entry) in &plan.arounds {
            let splice_args: &[Node] = if pre_eval {
                &binding_syms
            } else {
                &entry.jp.arg_exprs
            };
            let ctx = SpliceCtx {
                jp: &entry.jp,
                original: &core_expr,
                args_expr: Some(&args_record),
                result_expr: None,
                exception_expr: None,
                arg_exprs: Some(splice_args),
            };
            core_expr = instantiate_with(template, &ctx)?;
        }

        let mut stmts: Vec<Node> = Vec::new();
        for (template, entry) in &plan.befores {
            if template.kind == AdviceKind::BeforeA {
                stmts.push(entry.provenance());
                stmts.push(builder.insert_invocation(template, entry, args_record.clone(), None, None)?);
            }
        }
        for (template, entry) in &plan.append_front {
            stmts.extend(builder.replace_stmts(template, entry, Some(&core_expr))?);
        }

        if plan.after_returning.is_empty() {
            stmts.push(core_expr);
            for (template, entry) in &plan.append_back {
                let original = stmts.last().cloned();
                stmts.extend(builder.replace_stmts(template, entry, original.as_ref())?);
            }
        } else {
            let resulttmp = builder.fresh("resulttmp");
            stmts.push(assign(&resulttmp, core_expr, &loc));
            for (template, entry) in &plan.after_returning {
                stmts.push(entry.provenance());
                stmts.push(builder.insert_invocation(
                    template,
                    entry,
                    args_record.clone(),
                    Some(&resulttmp),
                    None,
                )?);
            }
            for (template, entry) in &plan.append_back {
                stmts.extend(builder.replace_stmts(template, entry, None)?);
            }
            stmts.push(Node::symbol(resulttmp, loc.clone()));
        }

        // assemble: core block, optional let, optional try, optional guard
        let wants_try = !plan.after_throwing.is_empty() || !plan.afters.is_empty();
        let catch_finally_needs_args = plan
            .after_throwing
            .iter()
            .chain(plan.afters.iter())
            .any(|(t, _)| t.kind.consumes_args());

        let mut result = if !wants_try && !pre_eval && stmts.len() == 1 {
            stmts.pop().unwrap()
        } else {
            Node::block(stmts, loc.clone())
        };

        if wants_try {
            if pre_eval && !catch_finally_needs_args {
                // canonical layering: try outermost, let inside
                let inner = make_let(bindings.clone(), result, &loc);
                result = builder.make_try(inner, &plan, &args_record, &loc)?;
            } else {
                result = builder.make_try(result, &plan, &args_record, &loc)?;
                if pre_eval {
                    result = make_let(bindings.clone(), result, &loc);
                }
            }
        } else if pre_eval {
            result = make_let(bindings.clone(), result, &loc);
        }

        // a plain assignment rewritten into a let needs the target declared
        // outside, per the @isdefined guard
        if pre_eval && result_mentions_assign_target(&entries, &result) {
            let target = entries[0].jp.name.clone();
            let guard = isdefined_guard(&target, &loc);
            result = Node::block(vec![guard, result], loc);
        }

        Ok(result)
    }
}

fn result_mentions_assign_target(entries: &[AjEntry], _result: &Node) -> bool {
    entries
        .first()
        .map(|e| e.jp.original.kind == NodeKind::Assign)
        .unwrap_or(false)
}

/// Advice grouped into the canonical layers, preserving (aspect, template)
/// order inside each layer.
struct AdvicePlan<'a> {
    befores: Vec<(&'a AdviceTemplate, &'a AjEntry)>,
    after_returning: Vec<(&'a AdviceTemplate, &'a AjEntry)>,
    after_throwing: Vec<(&'a AdviceTemplate, &'a AjEntry)>,
    afters: Vec<(&'a AdviceTemplate, &'a AjEntry)>,
    arounds: Vec<(&'a AdviceTemplate, &'a AjEntry)>,
    append_front: Vec<(&'a AdviceTemplate, &'a AjEntry)>,
    append_back: Vec<(&'a AdviceTemplate, &'a AjEntry)>,
}

impl<'a> AdvicePlan<'a> {
    fn build(entries: &'a [AjEntry]) -> Self {
        let mut plan = AdvicePlan {
            befores: Vec::new(),
            after_returning: Vec::new(),
            after_throwing: Vec::new(),
            afters: Vec::new(),
            arounds: Vec::new(),
            append_front: Vec::new(),
            append_back: Vec::new(),
        };
        for entry in entries {
            for template in &entry.templates {
                let slot = match template.kind {
                    AdviceKind::Before | AdviceKind::BeforeA => &mut plan.befores,
                    AdviceKind::AfterR | AdviceKind::AfterRA => &mut plan.after_returning,
                    AdviceKind::AfterThrowing | AdviceKind::AfterThrowingA => {
                        &mut plan.after_throwing
                    }
                    AdviceKind::After | AdviceKind::AfterA => &mut plan.afters,
                    AdviceKind::Around => &mut plan.arounds,
                    AdviceKind::AppendF => &mut plan.append_front,
                    AdviceKind::AppendB => &mut plan.append_back,
                    AdviceKind::Nothing => continue,
                };
                slot.push((template, entry));
            }
        }
        plan
    }

    fn is_empty(&self) -> bool {
        self.befores.is_empty()
            && self.after_returning.is_empty()
            && self.after_throwing.is_empty()
            && self.afters.is_empty()
            && self.arounds.is_empty()
            && self.append_front.is_empty()
            && self.append_back.is_empty()
    }

    fn consumes_args(&self) -> bool {
        self.befores
            .iter()
            .chain(&self.after_returning)
            .chain(&self.after_throwing)
            .chain(&self.afters)
            .any(|(t, _)| t.kind.consumes_args())
    }
}

struct SiteBuilder<'w> {
    weaver: &'w mut Weaver,
    used: HashSet<String>,
    loc: SourceLoc,
}

impl SiteBuilder<'_> {
    fn fresh(&mut self, base: &str) -> String {
        if !self.used.contains(base) {
            self.used.insert(base.to_string());
            return base.to_string();
        }
        for k in 1.. {
            let candidate = format!("{base}_{k}");
            if !self.used.contains(&candidate) {
                self.used.insert(candidate.clone());
                return candidate;
            }
        }
        unreachable!()
    }

    /// Builds the immediately-invoked lambda for one insert template.
    fn insert_invocation(
        &mut self,
        template: &AdviceTemplate,
        entry: &AjEntry,
        args_record: Node,
        resulttmp: Option<&str>,
        exception_binder: Option<&str>,
    ) -> Result<Node, WeaveError> {
        let loc = self.loc.clone();
        let (param, call_arg, result_expr, exception_expr): (
            Option<String>,
            Option<Node>,
            Option<Node>,
            Option<Node>,
        ) = match template.kind {
            AdviceKind::Before | AdviceKind::After => (None, None, None, None),
            AdviceKind::BeforeA | AdviceKind::AfterA => {
                let p = self.fresh("arg");
                (Some(p), Some(args_record), None, None)
            }
            AdviceKind::AfterR => {
                let p = self.fresh("result");
                let r = Node::symbol(p.clone(), loc.clone());
                (
                    Some(p),
                    Some(Node::symbol(resulttmp.unwrap_or("resulttmp"), loc.clone())),
                    Some(r),
                    None,
                )
            }
            AdviceKind::AfterRA => {
                let p = self.fresh("arg");
                let r = Node::symbol(resulttmp.unwrap_or("resulttmp"), loc.clone());
                (Some(p), Some(args_record), Some(r), None)
            }
            AdviceKind::AfterThrowing => {
                let p = self.fresh("exception");
                let e = Node::symbol(p.clone(), loc.clone());
                (
                    Some(p),
                    Some(Node::symbol(exception_binder.unwrap_or("e"), loc.clone())),
                    None,
                    Some(e),
                )
            }
            AdviceKind::AfterThrowingA => {
                let p = self.fresh("arg");
                let e = Node::symbol(exception_binder.unwrap_or("e"), loc.clone());
                (Some(p), Some(args_record), None, Some(e))
            }
            other => {
                return Err(WeaveError::Emit {
                    loc,
                    message: format!("{} is not insert advice", other.surface_name()),
                })
            }
        };
        let param_sym = param.as_ref().map(|p| Node::symbol(p.clone(), loc.clone()));
        let ctx = SpliceCtx {
            jp: &entry.jp,
            original: &entry.jp.original,
            args_expr: param_sym.as_ref(),
            result_expr: result_expr.as_ref(),
            exception_expr: exception_expr.as_ref(),
            arg_exprs: None,
        };
        let body = instantiate_with(template, &ctx)?;
        let mut lambda = Node::new(NodeKind::Lambda, vec![body], loc.clone());
        if let Some(p) = param {
            lambda.params = vec![crate::syntax::Param::named(p)];
        }
        let mut call_children = vec![lambda];
        if let Some(arg) = call_arg {
            call_children.push(arg);
        }
        Ok(Node::new(NodeKind::Call, call_children, loc))
    }

    /// Replace-advice bodies (append_front/append_back) splice in raw.
    fn replace_stmts(
        &mut self,
        template: &AdviceTemplate,
        entry: &AjEntry,
        original: Option<&Node>,
    ) -> Result<Vec<Node>, WeaveError> {
        let fallback = entry.jp.original.clone();
        let ctx = SpliceCtx {
            jp: &entry.jp,
            original: original.unwrap_or(&fallback),
            args_expr: None,
            result_expr: None,
            exception_expr: None,
            arg_exprs: None,
        };
        let body = instantiate_with(template, &ctx)?;
        Ok(match body.kind {
            NodeKind::Block => body.children,
            _ => vec![body],
        })
    }

    fn make_try(
        &mut self,
        body: Node,
        plan: &AdvicePlan,
        args_record: &Node,
        loc: &SourceLoc,
    ) -> Result<Node, WeaveError> {
        let body_block = match body.kind {
            NodeKind::Block => body,
            _ => Node::block(vec![body], loc.clone()),
        };
        let mut children = vec![body_block];
        if !plan.after_throwing.is_empty() {
            let binder = self.fresh("e");
            let mut catch_stmts = Vec::new();
            for (template, entry) in &plan.after_throwing {
                catch_stmts.push(entry.provenance());
                catch_stmts.push(self.insert_invocation(
                    template,
                    entry,
                    args_record.clone(),
                    None,
                    Some(&binder),
                )?);
            }
            catch_stmts.push(Node::new(
                NodeKind::Throw,
                vec![Node::symbol(binder.clone(), loc.clone())],
                loc.clone(),
            ));
            children.push(Node::symbol(binder, loc.clone()));
            children.push(Node::block(catch_stmts, loc.clone()));
        }
        if !plan.afters.is_empty() {
            let mut fin_stmts = Vec::new();
            for (template, entry) in &plan.afters {
                fin_stmts.push(entry.provenance());
                fin_stmts.push(self.insert_invocation(
                    template,
                    entry,
                    args_record.clone(),
                    None,
                    None,
                )?);
            }
            children.push(Node::block(fin_stmts, loc.clone()));
        }
        Ok(Node::new(NodeKind::TryCatchFinally, children, loc.clone()))
    }
}

impl SiteBuilder<'_> {
    /// Function-body statements wrapped in try/catch/finally when after or
    /// after_throwing advice is present.
    fn wrap_exceptions(
        &mut self,
        stmts: Vec<Node>,
        plan: &AdvicePlan,
        args_record: &Node,
        loc: &SourceLoc,
    ) -> Result<Node, WeaveError> {
        if plan.after_throwing.is_empty() && plan.afters.is_empty() {
            return Ok(Node::block(stmts, loc.clone()));
        }
        let body = Node::block(stmts, loc.clone());
        let try_node = self.make_try(body, plan, args_record, loc)?;
        Ok(Node::block(vec![try_node], loc.clone()))
    }
}

/// Appended advice statements become struct members: a bare symbol is a
/// field, a function definition is a constructor.
fn splice_struct_members(core: &mut Node, stmts: Vec<Node>, front: bool) -> Result<(), WeaveError> {
    let mut fields = Vec::new();
    let mut ctors = Vec::new();
    for stmt in stmts {
        match stmt.kind {
            NodeKind::Symbol => fields.push(crate::syntax::Param::named(
                stmt.sym_name().unwrap_or("").to_string(),
            )),
            NodeKind::FunctionDef => ctors.push(stmt),
            other => {
                return Err(WeaveError::Emit {
                    loc: stmt.loc.clone(),
                    message: format!(
                        "cannot splice a {other} into a struct body; only fields and constructors are allowed"
                    ),
                })
            }
        }
    }
    if front {
        for (i, f) in fields.into_iter().enumerate() {
            core.params.insert(i, f);
        }
        for (i, c) in ctors.into_iter().enumerate() {
            core.children.insert(1 + i, c);
        }
    } else {
        core.params.extend(fields);
        core.children.extend(ctors);
    }
    Ok(())
}

// ---- helpers ---------------------------------------------------------------

fn assign(name: &str, value: Node, loc: &SourceLoc) -> Node {
    Node::new(
        NodeKind::Assign,
        vec![Node::symbol(name, loc.clone()), value],
        loc.clone(),
    )
}

fn make_let(bindings: Vec<Node>, body: Node, loc: &SourceLoc) -> Node {
    let body_block = match body.kind {
        NodeKind::Block => body,
        _ => Node::block(vec![body], loc.clone()),
    };
    let mut children = bindings;
    children.push(body_block);
    Node::new(NodeKind::Let, children, loc.clone())
}

/// `if @isdefined(x) == false` then declare x, per the guard the paper
/// emits before assignment join points that move into a let.
fn isdefined_guard(target: &str, loc: &SourceLoc) -> Node {
    let isdef = Node::new(
        NodeKind::MacroCall,
        vec![
            Node::symbol("isdefined", loc.clone()),
            Node::symbol(target, loc.clone()),
        ],
        loc.clone(),
    );
    let cond = Node::new(
        NodeKind::Call,
        vec![
            Node::symbol("==", loc.clone()),
            isdef,
            Node::leaf(NodeKind::BoolLit, Atom::Bool(false), loc.clone()),
        ],
        loc.clone(),
    );
    let decl = assign(target, Node::symbol("nothing", loc.clone()), loc);
    Node::new(
        NodeKind::If,
        vec![cond, Node::block(vec![decl], loc.clone())],
        loc.clone(),
    )
}

/// Child indexes whose expressions count as the site's arguments.
fn argument_slots(core: &Node) -> Vec<usize> {
    match core.kind {
        NodeKind::Call => (1..core.children.len()).collect(),
        NodeKind::AndAnd | NodeKind::OrOr => vec![0, 1],
        NodeKind::Assign | NodeKind::OpAssign => vec![1],
        NodeKind::IndexAssign | NodeKind::FieldAssign => vec![core.children.len() - 1],
        NodeKind::IndexRef => vec![1],
        _ => Vec::new(),
    }
}

/// `(args = [...], kargs = mkmap(...))`
fn record_from_exprs(args: &[Node], kwargs: &[(String, Node)], loc: &SourceLoc) -> Node {
    let array = Node::new(NodeKind::ArrayLit, args.to_vec(), loc.clone());
    let mut mk_children = vec![Node::symbol("mkmap", loc.clone())];
    for (k, v) in kwargs {
        mk_children.push(Node::string(k.clone(), loc.clone()));
        mk_children.push(v.clone());
    }
    let kmap = Node::new(NodeKind::Call, mk_children, loc.clone());
    Node::new(
        NodeKind::MapLit,
        vec![
            Node::symbol("args", loc.clone()),
            array,
            Node::symbol("kargs", loc.clone()),
            kmap,
        ],
        loc.clone(),
    )
}

fn record_from_params(func: &Node, loc: &SourceLoc) -> Node {
    let mut args = Vec::new();
    let mut kwargs = Vec::new();
    for p in &func.params {
        let sym = Node::symbol(p.name.clone(), loc.clone());
        if p.keyword {
            kwargs.push((p.name.clone(), sym));
        } else {
            args.push(sym);
        }
    }
    record_from_exprs(&args, &kwargs, loc)
}

/// The function body as a single value expression: a one-statement body
/// unwraps (matching the emitted `resulttmp = (x + y) / z` shape), longer
/// bodies stay a block.
fn body_value(body: &Node) -> Node {
    unwrap_single(body.clone())
}

fn collect_idents(node: &Node) -> HashSet<String> {
    fn rec(node: &Node, out: &mut HashSet<String>) {
        if let Some(s) = node.sym_name() {
            out.insert(s.to_string());
        }
        for p in &node.params {
            out.insert(p.name.clone());
            if let Some(d) = &p.default {
                rec(d, out);
            }
        }
        // a macro's name child is not an identifier reference
        let skip = usize::from(node.kind == NodeKind::MacroCall);
        for c in node.children.iter().skip(skip) {
            rec(c, out);
        }
    }
    let mut out = HashSet::new();
    rec(node, &mut out);
    out
}

fn used_names(func: &Node) -> HashSet<String> {
    collect_idents(func)
}

/// Convenience wrapper for a single weave+emit over one aspect list.
pub fn weave_and_emit(
    program: &Node,
    aspects: &[Aspect],
) -> Result<(Node, Vec<WeaveWarning>), WeaveError> {
    let mut weaver = Weaver::new();
    let woven = weaver.weave(program, aspects);
    let out = weaver.emit(&woven)?;
    Ok((out, weaver.warnings))
}

/// Merges several aspects' advice into one fused list; used by tests.
pub fn fuse_all(advices: Vec<FusedAdvice>) -> Result<FusedAdvice, AdviceError> {
    let mut out = FusedAdvice::default();
    for a in advices {
        out = fuse(out, a)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advice::parse_aspect_file;
    use crate::interp::Interp;
    use crate::syntax::{node_equal, parse, print_source};

    fn aspects(src: &str) -> Vec<Aspect> {
        parse_aspect_file(src, "test.asp").unwrap()
    }

    fn weave_emit(program_src: &str, aspect_src: &str) -> (Node, Vec<WeaveWarning>) {
        let program = parse(program_src, "prog.hl").unwrap();
        let loader = MapLoader::default();
        let pre = pre_weave(&program, &loader).unwrap();
        weave_and_emit(&pre, &aspects(aspect_src)).unwrap()
    }

    fn run_woven(program_src: &str, aspect_src: &str, entry: &str) -> crate::interp::RunResult {
        let (woven, _) = weave_emit(program_src, aspect_src);
        Interp::run(&woven, entry)
    }

    #[test]
    fn pre_weave_resolves_includes_with_included_file_names() {
        let loader = MapLoader::default().with("part.hl", "function g()\n    1\nend\n");
        let program = parse("module M\ninclude(\"part.hl\")\nend", "M.hl").unwrap();
        let out = pre_weave(&program, &loader).unwrap();
        let expected = parse("module M\nfunction g()\n    1\nend\nend", "M.hl").unwrap();
        assert!(node_equal(&out, &expected, true));
        // the inlined definition keeps the included file's line info
        let module = &out.children[1];
        let inlined = module
            .children
            .iter()
            .find(|c| c.kind == NodeKind::Block)
            .expect("included block");
        assert_eq!(inlined.children[0].kind, NodeKind::LineInfo);
        assert_eq!(inlined.children[0].loc.file, "part.hl");
    }

    #[test]
    fn pre_weave_reports_missing_files_cycles_and_dynamic_includes() {
        let program = parse("include(\"absent.hl\")", "M.hl").unwrap();
        let err = pre_weave(&program, &MapLoader::default()).unwrap_err();
        assert!(err.to_string().contains("absent.hl"));

        let loader = MapLoader::default()
            .with("a.hl", "include(\"b.hl\")")
            .with("b.hl", "include(\"a.hl\")");
        let program = parse("include(\"a.hl\")", "root.hl").unwrap();
        let err = pre_weave(&program, &loader).unwrap_err();
        assert!(err.to_string().contains("cycle"));

        let program = parse("include(f())", "M.hl").unwrap();
        let err = pre_weave(&program, &MapLoader::default()).unwrap_err();
        assert!(err.to_string().contains("string literal"));
    }

    #[test]
    fn pre_weave_expands_attr_annotations() {
        let src = "function myloop()\n    @attr \"loopA\" for i in 1:10, j in 1:10\n        println(i)\n    end\nend";
        let program = parse(src, "t.hl").unwrap();
        let out = pre_weave(&program, &MapLoader::default()).unwrap();
        assert!(!out.contains_kind(NodeKind::AttrAnnot));
        let body = &out.children[1].children[1];
        let for_node = body
            .children
            .iter()
            .find(|c| c.kind == NodeKind::For)
            .unwrap();
        assert_eq!(for_node.attrs, vec!["loopA".to_string()]);
    }

    #[test]
    fn pre_weave_without_includes_or_attrs_is_identity() {
        let src = "function f(x)\n    x + 1\nend";
        let program = parse(src, "t.hl").unwrap();
        let out = pre_weave(&program, &MapLoader::default()).unwrap();
        assert!(node_equal(&out, &program, false));
    }

    const SAMPLE: &str = "module Test\nfunction foo()\n    print(\"foo\")\nend\nfunction main()\n    foo()\nend\nend";
    const SAMPLE_ASP: &str =
        "aspect \"sample\" {\n  pointcut: call(:foo)\n  advice: before {\n    print(\"before foo!\")\n  }\n}";

    #[test]
    fn weave_wraps_matched_call_in_aj_node() {
        let program = parse(SAMPLE, "Test.hl").unwrap();
        let mut weaver = Weaver::new();
        let woven = weaver.weave(&program, &aspects(SAMPLE_ASP));
        let mut count = 0;
        woven.walk(&mut |n| {
            if n.kind == NodeKind::Aj {
                count += 1;
            }
        });
        assert_eq!(count, 1);
        assert!(print_source(&woven).is_err(), "aj trees must not print");
    }

    #[test]
    fn weaving_no_aspects_then_emit_is_identity() {
        let program = parse(SAMPLE, "Test.hl").unwrap();
        let mut weaver = Weaver::new();
        let woven = weaver.weave(&program, &[]);
        let out = weaver.emit(&woven).unwrap();
        assert!(node_equal(&out, &program, true));
    }

    #[test]
    fn sample_setup_prints_before_foo() {
        let r = run_woven(SAMPLE, SAMPLE_ASP, "Test.main");
        assert!(r.error.is_none(), "{:?}", r.error);
        assert_eq!(r.stdout, "before foo!foo");
    }

    #[test]
    fn woven_output_carries_bit_exact_provenance_marker() {
        let (woven, _) = weave_emit(SAMPLE, SAMPLE_ASP);
        let printed = print_source(&woven).unwrap();
        assert!(
            printed.contains("#= AOP: PCCallFunc(:foo) ##= test.asp:1 =##:0 =#"),
            "printed:\n{printed}"
        );
    }

    #[test]
    fn internal_vs_external_pointcut_semantics() {
        let program = "function foo()\n    println(\"foo\")\nend\nfunction main()\n    bar = foo\n    foo()\n    bar()\nend";
        let internal =
            "aspect \"i\" {\n  pointcut: exec_func(:foo)\n  advice: before { print(\"b!\") }\n}";
        let external =
            "aspect \"e\" {\n  pointcut: call(:foo)\n  advice: before { print(\"b!\") }\n}";
        let ri = run_woven(program, internal, "main");
        assert_eq!(ri.stdout, "b!foo\nb!foo\n");
        let re = run_woven(program, external, "main");
        assert_eq!(re.stdout, "b!foo\nfoo\n");
    }

    const MYCALC: &str = "function mycalc(x, y, z = 100)\n    (x + y) / z\nend";
    const LOGGING_ASP: &str = r#"
aspect "logging" {
  pointcut: exec_func(:mycalc)
  advice: before_args {
    println("exec $(@jp(name)) with $(@args)")
    if @args.args[3] == 0
      error("zero division")
    end
  }
  advice: after_returning {
    println("$(@jp(name)) return $(@result)")
  }
  advice: after_throwing {
    println("exception $(@exception)")
  }
}
"#;
    const MYCALC_WOVEN: &str = r#"function mycalc(x, y, z = 100)
    try
        ((arg) -> begin
            println("exec $(mycalc) with $(arg)")
            if arg.args[3] == 0
                error("zero division")
            end
        end)((args = [x, y, z], kargs = mkmap()))
        resulttmp = (x + y) / z
        ((result) -> println("$(mycalc) return $(result)"))(resulttmp)
        resulttmp
    catch e
        ((exception) -> println("exception $(exception)"))(e)
        throw(e)
    end
end"#;

    #[test]
    fn logging_weave_reproduces_the_reference_shape() {
        let (woven, _) = weave_emit(MYCALC, LOGGING_ASP);
        let expected = parse(MYCALC_WOVEN, "e.hl").unwrap();
        assert!(
            node_equal(&woven, &expected, true),
            "woven:\n{}",
            print_source(&woven).unwrap()
        );
    }

    #[test]
    fn logging_weave_runs_with_exec_and_return_logs() {
        let program = format!("{MYCALC}\nfunction main()\n    mycalc(1, 2)\nend");
        let r = run_woven(&program, LOGGING_ASP, "main");
        assert!(r.error.is_none(), "{:?}", r.error);
        assert_eq!(
            r.stdout,
            "exec mycalc with (args = [1, 2, 100], kargs = ())\nmycalc return 0.03\n"
        );
        match r.value {
            crate::interp::Value::Float(f) => assert!((f - 0.03).abs() < 1e-12),
            _ => panic!("expected a float result"),
        }
    }

    #[test]
    fn logging_weave_zero_division_logs_then_rethrows() {
        let program = format!("{MYCALC}\nfunction main()\n    mycalc(1, 2, 0)\nend");
        let r = run_woven(&program, LOGGING_ASP, "main");
        assert_eq!(
            r.stdout,
            "exec mycalc with (args = [1, 2, 0], kargs = ())\nexception zero division\n"
        );
        assert_eq!(r.error.unwrap().message, "zero division");
    }

    #[test]
    fn around_time_profiling_matches_reference_and_runs() {
        let program = "bar() = sleep(10)\nfunction main()\n    bar()\nend";
        let aspect =
            "aspect \"prof\" {\n  pointcut: call(:bar)\n  advice: around { @time @original }\n}";
        let (woven, _) = weave_emit(program, aspect);
        let expected = parse(
            "bar() = sleep(10)\nfunction main()\n    @time bar()\nend",
            "e.hl",
        )
        .unwrap();
        assert!(node_equal(&woven, &expected, true));
        let r = Interp::run(&woven, "main");
        assert!(r.stdout.starts_with("time: "));
    }

    #[test]
    fn short_circuit_preeval_produces_let_shape_and_one_warning() {
        let program = "function main()\n    ary = [false, true, false]\n    @attr \"p\" pop!(ary) && pop!(ary)\n    println(length(ary))\n    println(ary[1])\nend";
        let aspect = "aspect \"probe\" {\n  pointcut: attr(:p)\n  advice: before_args { length(@args.args) }\n}";
        let program_ast = parse(program, "t.hl").unwrap();
        let pre = pre_weave(&program_ast, &MapLoader::default()).unwrap();
        let (woven, warnings) = weave_and_emit(&pre, &aspects(aspect)).unwrap();
        assert_eq!(warnings.len(), 1, "exactly one short-circuit warning");
        assert!(warnings[0].message.contains("short-circuit"));

        // the woven site is a let binding both operands, core uses bindings
        let printed = print_source(&woven).unwrap();
        assert!(
            printed.contains("let arg1 = pop!(ary), arg2 = pop!(ary)"),
            "printed:\n{printed}"
        );
        assert!(printed.contains("arg1 && arg2"));

        let r = Interp::run(&woven, "main");
        assert!(r.error.is_none(), "{:?}", r.error);
        assert_eq!(r.stdout, "1\nfalse\n");
    }

    #[test]
    fn assignment_site_gets_isdefined_guard_and_stays_visible() {
        let program =
            "function f()\n    41\nend\nfunction main()\n    var_x = f()\n    println(var_x + 1)\nend";
        let aspect = "aspect \"g\" {\n  pointcut: assign(:var_x)\n  advice: before_args { length(@args.args) }\n}";
        let (woven, _) = weave_emit(program, aspect);
        let printed = print_source(&woven).unwrap();
        assert!(
            printed.contains("if @isdefined(var_x) == false"),
            "printed:\n{printed}"
        );
        assert!(printed.contains("var_x = nothing"));
        let r = Interp::run(&woven, "main");
        assert!(r.error.is_none(), "{:?}\n{printed}", r.error);
        assert_eq!(r.stdout, "42\n");
    }

    #[test]
    fn struct_append_back_adds_field_and_constructor() {
        let program = "struct MYST\n    x::Int\n    y::Int\nend\nfunction main()\n    s = MYST(1, 2)\n    println(s.init_time)\nend";
        let aspect = "aspect \"ext\" {\n  pointcut: struct(:MYST)\n  advice: append_back {\n    init_time\n    function MYST(x, y)\n        new(x, y, mynow())\n    end\n  }\n}";
        let (woven, _) = weave_emit(program, aspect);
        let expected = parse(
            "struct MYST\n    x::Int\n    y::Int\n    init_time\n    function MYST(x, y)\n        new(x, y, mynow())\n    end\nend\nfunction main()\n    s = MYST(1, 2)\n    println(s.init_time)\nend",
            "e.hl",
        )
        .unwrap();
        assert!(
            node_equal(&woven, &expected, true),
            "woven:\n{}",
            print_source(&woven).unwrap()
        );
        let r = Interp::run(&woven, "main");
        assert!(r.error.is_none(), "{:?}", r.error);
        let n: i64 = r.stdout.trim().parse().unwrap();
        assert!(n >= 1);
    }

    #[test]
    fn xpath_partial_weaving_touches_only_the_outer_call() {
        let program = "module MyFib\nfunction fib(n)\n    if n < 2\n        n\n    else\n        fib(n - 1) + fib(n - 2)\n    end\nend\nfunction main()\n    println(fib(10))\nend\nend";
        let aspect = "aspect \"partial\" {\n  pointcut: xpath(\"//function[not(contains(@name,'fib'))]//call[@name='fib']\")\n  advice: before { println(\"before call\") }\n}";
        let (woven, _) = weave_emit(program, aspect);
        let expected = parse(
            "module MyFib\nfunction fib(n)\n    if n < 2\n        n\n    else\n        fib(n - 1) + fib(n - 2)\n    end\nend\nfunction main()\n    ((() -> println(\"before call\")))()\n    println(fib(10))\nend\nend",
            "e.hl",
        )
        .unwrap();
        assert!(
            node_equal(&woven, &expected, true),
            "woven:\n{}",
            print_source(&woven).unwrap()
        );
        let r = Interp::run(&woven, "MyFib.main");
        assert_eq!(r.stdout, "before call\n55\n");
    }

    #[test]
    fn loop_swap_transform_matches_reference_and_swaps_iteration() {
        let program = "function myloop()\n    @attr \"loopA\" for i in 1:2, j in 1:2\n        println(\"x=$(i), y=$(j)\")\n    end\nend\nfunction main()\n    myloop()\nend";
        let aspect = "aspect \"swap\" {\n  pointcut: attr(:loopA)\n  advice: around { @transform(swap_loop) }\n}";
        let program_ast = parse(program, "t.hl").unwrap();
        let pre = pre_weave(&program_ast, &MapLoader::default()).unwrap();
        let (woven, _) = weave_and_emit(&pre, &aspects(aspect)).unwrap();
        let expected = parse(
            "function myloop()\n    for j in 1:2, i in 1:2\n        println(\"x=$(i), y=$(j)\")\n    end\nend\nfunction main()\n    myloop()\nend",
            "e.hl",
        )
        .unwrap();
        assert!(
            node_equal(&woven, &expected, true),
            "woven:\n{}",
            print_source(&woven).unwrap()
        );
        let r = Interp::run(&woven, "main");
        assert_eq!(r.stdout, "x=1, y=1\nx=2, y=1\nx=1, y=2\nx=2, y=2\n");
    }

    #[test]
    fn arg_expr_around_redirects_matching_calls() {
        let program = "module GetResource\nfunction load()\n    [myfetch(\"https://example.net/\"), myfetch(\"https://example.org/\")]\nend\nend";
        let aspect = "aspect \"redirect\" {\n  pointcut: call(:myfetch)\n  advice: around {\n    if @arg_expr(1) == \"https://example.net/\"\n        myfetch(\"https://localhost/\")\n    else\n        @original\n    end\n  }\n}";
        let (woven, _) = weave_emit(program, aspect);
        let r = Interp::run(&woven, "GetResource.load");
        assert!(r.error.is_none(), "{:?}", r.error);
        match r.value {
            crate::interp::Value::Array(a) => {
                let texts: Vec<String> = a
                    .borrow()
                    .iter()
                    .map(crate::interp::format_value)
                    .collect();
                assert_eq!(
                    texts,
                    vec![
                        "fetched:https://localhost/".to_string(),
                        "fetched:https://example.org/".to_string()
                    ]
                );
            }
            _ => panic!("expected array result"),
        }
    }

    #[test]
    fn single_evaluation_of_join_point_arguments() {
        let program = "function f(a, b)\n    a + b\nend\nfunction main()\n    println(f(counter!(), counter!()))\n    println(counter!())\nend";
        let aspect = "aspect \"a\" {\n  pointcut: call(:f)\n  advice: before_args { length(@args.args) }\n  advice: after_returning_args { length(@args.args) }\n}";
        let r = run_woven(program, aspect, "main");
        assert!(r.error.is_none(), "{:?}", r.error);
        // args evaluate once each (1, 2); the final counter is 3
        assert_eq!(r.stdout, "3\n3\n");
    }

    #[test]
    fn exception_rethrow_transparency() {
        let program = "function boom()\n    error(\"kaboom\")\nend\nfunction main()\n    boom()\nend";
        let aspect = "aspect \"t\" {\n  pointcut: call(:boom)\n  advice: after_throwing { println(\"observed $(@exception)\") }\n  advice: after { println(\"after\") }\n}";
        let plain = Interp::run(&parse(program, "t.hl").unwrap(), "main");
        let woven = run_woven(program, aspect, "main");
        assert_eq!(woven.stdout, "observed kaboom\nafter\n");
        assert_eq!(
            plain.error.unwrap().message,
            woven.error.unwrap().message
        );
    }

    #[test]
    fn nothing_advice_leaves_core_unchanged() {
        let program = "function main()\n    f(1)\nend\nfunction f(x)\n    x\nend";
        let aspect = "aspect \"n\" {\n  pointcut: call(:f)\n  advice: nothing { }\n}";
        let (woven, _) = weave_emit(program, aspect);
        assert!(node_equal(&woven, &parse(program, "t.hl").unwrap(), true));
    }

    #[test]
    fn emit_output_never_contains_aj_nodes() {
        let (woven, _) = weave_emit(SAMPLE, SAMPLE_ASP);
        assert!(!woven.contains_kind(NodeKind::Aj));
        assert!(print_source(&woven).is_ok());
    }

    #[test]
    fn two_aspects_accumulate_on_one_site_in_order() {
        let program = "function main()\n    f(1)\nend\nfunction f(x)\n    x\nend";
        let asp = "aspect \"one\" {\n  pointcut: call(:f)\n  advice: before { println(\"one\") }\n}\naspect \"two\" {\n  pointcut: call(:f)\n  advice: before { println(\"two\") }\n}";
        let r = run_woven(program, asp, "main");
        assert_eq!(r.stdout, "one\ntwo\n");
    }

    #[test]
    fn chained_passes_match_code_introduced_earlier() {
        let program = "function foo()\n    println(\"foo\")\nend\nfunction trace1(x)\n    println(\"traced\")\n    x\nend\nfunction main()\n    foo()\nend";
        let pass1 = aspects(
            "aspect \"wrap\" {\n  pointcut: call(:foo)\n  advice: around { trace1(@original) }\n}",
        );
        let pass2 = aspects(
            "aspect \"obs\" {\n  pointcut: call(:trace1)\n  advice: before { println(\"pass2\") }\n}",
        );
        let program = parse(program, "t.hl").unwrap();

        // a single pass cannot match code introduced by itself
        let mut single = Weaver::new();
        let mut one_pass = pass1.clone();
        one_pass.extend(pass2.clone());
        let single_out = single.weave_chain(&program, &[one_pass]).unwrap();
        let r1 = Interp::run(&single_out, "main");
        assert_eq!(r1.stdout, "foo\ntraced\n");

        // chained passes do
        let mut chained = Weaver::new();
        let chained_out = chained.weave_chain(&program, &[pass1, pass2]).unwrap();
        let r2 = Interp::run(&chained_out, "main");
        assert_eq!(r2.stdout, "pass2\nfoo\ntraced\n");
    }

    #[test]
    fn chain_with_zero_passes_is_identity() {
        let program = parse(SAMPLE, "t.hl").unwrap();
        let mut weaver = Weaver::new();
        let out = weaver.weave_chain(&program, &[]).unwrap();
        assert!(node_equal(&out, &program, false));
    }

    #[test]
    fn before_advice_in_value_position_hoists_to_statement() {
        let program = "function g(x)\n    x\nend\nfunction main()\n    println(g(5))\nend";
        let aspect = "aspect \"h\" {\n  pointcut: call(:g)\n  advice: before { println(\"pre\") }\n}";
        let (woven, _) = weave_emit(program, aspect);
        let expected = parse(
            "function g(x)\n    x\nend\nfunction main()\n    ((() -> println(\"pre\")))()\n    println(g(5))\nend",
            "e.hl",
        )
        .unwrap();
        assert!(
            node_equal(&woven, &expected, true),
            "woven:\n{}",
            print_source(&woven).unwrap()
        );
    }

    #[test]
    fn binder_names_avoid_capture() {
        let program = "function main()\n    arg1 = 10\n    resulttmp = 20\n    println(f(arg1 + resulttmp))\nend\nfunction f(x)\n    x\nend";
        let aspect = "aspect \"c\" {\n  pointcut: call(:f)\n  advice: before_args { length(@args.args) }\n  advice: after_returning { @result }\n}";
        let (woven, _) = weave_emit(program, aspect);
        let r = Interp::run(&woven, "main");
        assert!(r.error.is_none(), "{:?}\n{}", r.error, print_source(&woven).unwrap());
        assert_eq!(r.stdout, "30\n");
    }

    #[test]
    fn chain_with_one_pass_equals_weave_then_emit() {
        let program = parse(SAMPLE, "t.hl").unwrap();
        let asp = aspects(SAMPLE_ASP);
        let mut w1 = Weaver::new();
        let chained = w1.weave_chain(&program, &[asp.clone()]).unwrap();
        let mut w2 = Weaver::new();
        let woven = w2.weave(&program, &asp);
        let emitted = w2.emit(&woven).unwrap();
        assert!(node_equal(&chained, &emitted, false));
    }

    #[test]
    fn insert_advice_preserves_value_and_side_effect_trace() {
        let program = "function f(x)\n    push!(log, x)\n    x * 2\nend\nfunction main()\n    log = []\n    total = f(counter!()) + f(counter!())\n    println(total)\n    println(log)\n    println(counter!())\nend";
        let aspect = "aspect \"obs\" {\n  pointcut: call(:f)\n  advice: before_args { length(@args.args) }\n  advice: after_returning { @result }\n  advice: after { 0 }\n}";
        let plain = Interp::run(&parse(program, "t.hl").unwrap(), "main");
        let woven = run_woven(program, aspect, "main");
        assert!(plain.error.is_none() && woven.error.is_none());
        assert_eq!(plain.stdout, woven.stdout, "insert advice is transparent");
    }

    #[test]
    fn xpath_function_tag_reaches_short_definitions() {
        let program = "bar() = sleep(10)\nfunction main()\n    bar()\nend";
        let aspect = "aspect \"x\" {\n  pointcut: xpath(\"//function[@name='bar']\")\n  advice: before { println(\"enter\") }\n}";
        let r = run_woven(program, aspect, "main");
        assert!(r.error.is_none(), "{:?}", r.error);
        assert_eq!(r.stdout, "enter\n");
    }

    #[test]
    fn module_append_back_adds_definitions() {
        let program = "module M\nfunction main()\n    helper()\nend\nend";
        let aspect = "aspect \"m\" {\n  pointcut: module(:M)\n  advice: append_back {\n    function helper()\n        println(\"added\")\n    end\n  }\n}";
        let r = run_woven(program, aspect, "M.main");
        assert!(r.error.is_none(), "{:?}", r.error);
        assert_eq!(r.stdout, "added\n");
    }
}
