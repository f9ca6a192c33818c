//! Canonical source rendering for HL trees.
//!
//! 4-space indentation, one statement per line. LineInfo nodes render as
//! `#= file:line =#` comments; weaver-inserted markers render in the debug
//! form `#= AOP: <pointcut> ##= <file>:<line> =##:0 =#`. Printed output
//! reparses to a tree that is node_equal (ignoring lines) to the input.

use super::node::{Atom, Node, NodeKind};
use super::PrintError;

pub fn print_source(node: &Node) -> Result<String, PrintError> {
    print_source_opts(node, true)
}

/// `line_comments = false` drops LineInfo comments from the output
/// (the CLI's --no-debug-lines).
pub fn print_source_opts(node: &Node, line_comments: bool) -> Result<String, PrintError> {
    if node.contains_kind(NodeKind::Aj) {
        return Err(PrintError::AjNode {
            loc: node.loc.clone(),
        });
    }
    let mut pr = Printer {
        out: String::new(),
        line_comments,
    };
    match node.kind {
        NodeKind::Block => pr.stmt_seq(&node.children, 0),
        NodeKind::LineInfo => {
            pr.line_info(node, 0);
        }
        _ => {
            pr.stmt(node, 0);
        }
    }
    Ok(pr.out)
}

/// Renders a single node inline, without a trailing newline. Handy for
/// diagnostics; errors on Aj like print_source.
pub fn print_expr(node: &Node) -> Result<String, PrintError> {
    if node.contains_kind(NodeKind::Aj) {
        return Err(PrintError::AjNode {
            loc: node.loc.clone(),
        });
    }
    let mut pr = Printer {
        out: String::new(),
        line_comments: false,
    };
    pr.expr(node, 0);
    Ok(pr.out)
}

// precedence ranks used for parenthesization
const PREC_LAMBDA: u8 = 1;
const PREC_OR: u8 = 2;
const PREC_AND: u8 = 3;
const PREC_CMP: u8 = 4;
const PREC_RANGE: u8 = 5;
const PREC_ADD: u8 = 6;
const PREC_MUL: u8 = 7;
const PREC_UNARY: u8 = 8;
const PREC_POSTFIX: u8 = 9;
const PREC_ATOM: u8 = 10;

fn binary_op_prec(op: &str) -> Option<u8> {
    match op {
        "==" | "!=" | "<" | ">" | "<=" | ">=" => Some(PREC_CMP),
        "+" | "-" => Some(PREC_ADD),
        "*" | "/" => Some(PREC_MUL),
        _ => None,
    }
}

fn prec(node: &Node) -> u8 {
    match node.kind {
        NodeKind::Lambda => PREC_LAMBDA,
        NodeKind::OrOr => PREC_OR,
        NodeKind::AndAnd => PREC_AND,
        NodeKind::Range => PREC_RANGE,
        NodeKind::Assign | NodeKind::OpAssign | NodeKind::IndexAssign | NodeKind::FieldAssign => {
            PREC_LAMBDA
        }
        NodeKind::MacroCall => match node.children.first().and_then(Node::sym_name) {
            Some("time") => PREC_LAMBDA,
            _ => PREC_ATOM,
        },
        NodeKind::Call => {
            if let Some(op) = node.children.first().and_then(Node::sym_name) {
                if node.children.len() == 3 {
                    if let Some(p) = binary_op_prec(op) {
                        return p;
                    }
                }
                if node.children.len() == 2 && op == "-" {
                    return PREC_UNARY;
                }
            }
            PREC_POSTFIX
        }
        NodeKind::IndexRef | NodeKind::FieldRef => PREC_POSTFIX,
        _ => PREC_ATOM,
    }
}

struct Printer {
    out: String,
    line_comments: bool,
}

impl Printer {
    fn pad(&mut self, indent: usize) {
        for _ in 0..indent {
            self.out.push_str("    ");
        }
    }

    fn stmt_seq(&mut self, stmts: &[Node], indent: usize) {
        for stmt in stmts {
            if stmt.kind == NodeKind::LineInfo {
                self.line_info(stmt, indent);
            } else {
                self.stmt(stmt, indent);
            }
        }
    }

    fn line_info(&mut self, node: &Node, indent: usize) {
        if !self.line_comments {
            return;
        }
        self.pad(indent);
        match &node.loc.provenance {
            Some(prov) => {
                self.out.push_str(&format!(
                    "#= AOP: {prov} ##= {}:{} =##:0 =#",
                    node.loc.file, node.loc.line
                ));
            }
            None => {
                self.out
                    .push_str(&format!("#= {}:{} =#", node.loc.file, node.loc.line));
            }
        }
        self.out.push('\n');
    }

    fn stmt(&mut self, node: &Node, indent: usize) {
        self.pad(indent);
        for attr in &node.attrs {
            self.out.push_str(&format!("@attr \"{}\" ", escape(attr)));
        }
        self.stmt_expr(node, indent);
        self.out.push('\n');
    }

    /// Statement position: assignments print bare here.
    fn stmt_expr(&mut self, node: &Node, indent: usize) {
        self.node(node, indent);
    }

    /// Value position: assignments and definitions only have statement
    /// syntax (parenthesized assignment would read as a record literal), so
    /// here they print wrapped in a begin block.
    fn expr(&mut self, node: &Node, indent: usize) {
        if matches!(
            node.kind,
            NodeKind::Assign
                | NodeKind::OpAssign
                | NodeKind::IndexAssign
                | NodeKind::FieldAssign
                | NodeKind::FunctionDef
                | NodeKind::ShortFuncDef
                | NodeKind::StructDef
                | NodeKind::Module
                | NodeKind::AttrAnnot
                | NodeKind::Return
        ) {
            self.out.push_str("begin\n");
            self.pad(indent + 1);
            self.node(node, indent + 1);
            self.out.push('\n');
            self.pad(indent);
            self.out.push_str("end");
            return;
        }
        self.node(node, indent);
    }

    fn node(&mut self, node: &Node, indent: usize) {
        match node.kind {
            NodeKind::Module => {
                let name = node.children[0].sym_name().unwrap_or("?");
                self.out.push_str(&format!("module {name}\n"));
                self.stmt_seq(&node.children[1..], indent);
                self.pad(indent);
                self.out.push_str("end");
            }
            NodeKind::FunctionDef => {
                let name = node.children[0].sym_name().unwrap_or("?");
                self.out.push_str(&format!("function {name}("));
                self.params(node, indent);
                self.out.push_str(")\n");
                self.stmt_seq(&node.children[1].children, indent + 1);
                self.pad(indent);
                self.out.push_str("end");
            }
            NodeKind::ShortFuncDef => {
                let name = node.children[0].sym_name().unwrap_or("?");
                self.out.push_str(&format!("{name}("));
                self.params(node, indent);
                self.out.push_str(") = ");
                self.expr(&node.children[1], indent);
            }
            NodeKind::Lambda => {
                self.out.push('(');
                self.params(node, indent);
                self.out.push_str(") -> ");
                self.expr(&node.children[0], indent);
            }
            NodeKind::StructDef => {
                if node.is_mutable {
                    self.out.push_str("mutable ");
                }
                let name = node.children[0].sym_name().unwrap_or("?");
                self.out.push_str(&format!("struct {name}\n"));
                for field in &node.params {
                    self.pad(indent + 1);
                    self.out.push_str(&field.name);
                    if let Some(t) = &field.type_name {
                        self.out.push_str(&format!("::{t}"));
                    }
                    self.out.push('\n');
                }
                for ctor in &node.children[1..] {
                    self.stmt(ctor, indent + 1);
                }
                self.pad(indent);
                self.out.push_str("end");
            }
            NodeKind::Call => self.call(node, indent),
            NodeKind::MacroCall => self.macro_call(node, indent),
            NodeKind::Assign | NodeKind::OpAssign => {
                self.child(node, &node.children[0], indent);
                self.out
                    .push_str(if node.kind == NodeKind::Assign { " = " } else { " += " });
                self.child(node, &node.children[1], indent);
            }
            NodeKind::IndexAssign => {
                self.operand(&node.children[0], PREC_POSTFIX, indent);
                self.out.push('[');
                self.expr(&node.children[1], indent);
                self.out.push_str("] = ");
                self.child(node, &node.children[2], indent);
            }
            NodeKind::FieldAssign => {
                self.operand(&node.children[0], PREC_POSTFIX, indent);
                self.out
                    .push_str(&format!(".{}", node.children[1].sym_name().unwrap_or("?")));
                self.out.push_str(" = ");
                self.child(node, &node.children[2], indent);
            }
            NodeKind::IndexRef => {
                self.operand(&node.children[0], PREC_POSTFIX, indent);
                self.out.push('[');
                self.expr(&node.children[1], indent);
                self.out.push(']');
            }
            NodeKind::FieldRef => {
                self.operand(&node.children[0], PREC_POSTFIX, indent);
                self.out
                    .push_str(&format!(".{}", node.children[1].sym_name().unwrap_or("?")));
            }
            NodeKind::For => {
                self.out.push_str("for ");
                let clauses = (node.children.len() - 1) / 2;
                for i in 0..clauses {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    self.out
                        .push_str(node.children[2 * i].sym_name().unwrap_or("?"));
                    self.out.push_str(" in ");
                    self.expr(&node.children[2 * i + 1], indent);
                }
                self.out.push('\n');
                self.stmt_seq(&node.children[clauses * 2].children, indent + 1);
                self.pad(indent);
                self.out.push_str("end");
            }
            NodeKind::If => {
                self.out.push_str("if ");
                self.expr(&node.children[0], indent);
                self.out.push('\n');
                self.stmt_seq(&node.children[1].children, indent + 1);
                if let Some(else_block) = node.children.get(2) {
                    self.pad(indent);
                    self.out.push_str("else\n");
                    self.stmt_seq(&else_block.children, indent + 1);
                }
                self.pad(indent);
                self.out.push_str("end");
            }
            NodeKind::Let => {
                self.out.push_str("let");
                let bindings = node.children.len() - 1;
                for (i, binding) in node.children[..bindings].iter().enumerate() {
                    self.out.push_str(if i == 0 { " " } else { ", " });
                    self.out
                        .push_str(binding.children[0].sym_name().unwrap_or("?"));
                    self.out.push_str(" = ");
                    self.expr(&binding.children[1], indent);
                }
                self.out.push('\n');
                self.stmt_seq(&node.children[bindings].children, indent + 1);
                self.pad(indent);
                self.out.push_str("end");
            }
            NodeKind::TryCatchFinally => {
                self.out.push_str("try\n");
                self.stmt_seq(&node.children[0].children, indent + 1);
                let mut rest = &node.children[1..];
                if rest.first().map(|n| n.kind) == Some(NodeKind::Symbol) {
                    self.pad(indent);
                    self.out
                        .push_str(&format!("catch {}\n", rest[0].sym_name().unwrap_or("?")));
                    self.stmt_seq(&rest[1].children, indent + 1);
                    rest = &rest[2..];
                }
                if let Some(fin) = rest.first() {
                    self.pad(indent);
                    self.out.push_str("finally\n");
                    self.stmt_seq(&fin.children, indent + 1);
                }
                self.pad(indent);
                self.out.push_str("end");
            }
            NodeKind::Throw => {
                self.out.push_str("throw(");
                self.expr(&node.children[0], indent);
                self.out.push(')');
            }
            NodeKind::Block => {
                self.out.push_str("begin\n");
                self.stmt_seq(&node.children, indent + 1);
                self.pad(indent);
                self.out.push_str("end");
            }
            NodeKind::AndAnd | NodeKind::OrOr => {
                let (op, p) = if node.kind == NodeKind::AndAnd {
                    ("&&", PREC_AND)
                } else {
                    ("||", PREC_OR)
                };
                self.operand(&node.children[0], p, indent);
                self.out.push_str(&format!(" {op} "));
                self.operand(&node.children[1], p + 1, indent);
            }
            NodeKind::Range => {
                self.operand(&node.children[0], PREC_RANGE + 1, indent);
                self.out.push(':');
                self.operand(&node.children[1], PREC_RANGE + 1, indent);
            }
            NodeKind::Return => {
                self.out.push_str("return");
                if let Some(value) = node.children.first() {
                    self.out.push(' ');
                    self.expr(value, indent);
                }
            }
            NodeKind::Symbol => self.out.push_str(node.sym_name().unwrap_or("?")),
            NodeKind::IntLit => {
                if let Some(Atom::Int(v)) = &node.atom {
                    self.out.push_str(&v.to_string());
                }
            }
            NodeKind::FloatLit => {
                if let Some(Atom::Float(v)) = &node.atom {
                    self.out.push_str(&format_float(*v));
                }
            }
            NodeKind::BoolLit => {
                if let Some(Atom::Bool(b)) = &node.atom {
                    self.out.push_str(if *b { "true" } else { "false" });
                }
            }
            NodeKind::StringLit => {
                if let Some(Atom::Str(s)) = &node.atom {
                    self.out.push_str(&format!("\"{}\"", escape(s)));
                }
            }
            NodeKind::StringInterp => {
                self.out.push('"');
                for part in &node.children {
                    if let Some(Atom::Str(s)) = part
                        .str_value()
                        .map(|s| Atom::Str(s.to_string()))
                    {
                        self.out.push_str(&escape(&s));
                    } else {
                        self.out.push_str("$(");
                        self.expr(part, indent);
                        self.out.push(')');
                    }
                }
                self.out.push('"');
            }
            NodeKind::ArrayLit => {
                self.out.push('[');
                self.comma_list(&node.children, indent);
                self.out.push(']');
            }
            NodeKind::TupleLit => {
                self.out.push('(');
                self.comma_list(&node.children, indent);
                if node.children.len() == 1 {
                    self.out.push(',');
                }
                self.out.push(')');
            }
            NodeKind::MapLit => {
                self.out.push('(');
                for (i, pair) in node.children.chunks(2).enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    self.out.push_str(pair[0].sym_name().unwrap_or("?"));
                    self.out.push_str(" = ");
                    self.expr(&pair[1], indent);
                }
                self.out.push(')');
            }
            NodeKind::Include => {
                self.out.push_str("include(");
                self.expr(&node.children[0], indent);
                self.out.push(')');
            }
            NodeKind::AttrAnnot => {
                self.out.push_str(&format!(
                    "@attr \"{}\" ",
                    escape(node.children[0].str_value().unwrap_or(""))
                ));
                self.expr(&node.children[1], indent);
            }
            NodeKind::LineInfo => {
                // handled by stmt_seq; inline occurrence prints nothing
            }
            NodeKind::Aj => unreachable!("print called on Aj node"),
        }
    }

    fn call(&mut self, node: &Node, indent: usize) {
        let callee = &node.children[0];
        let args = &node.children[1..];
        if let Some(op) = callee.sym_name() {
            if args.len() == 2 {
                if let Some(p) = binary_op_prec(op) {
                    self.operand(&args[0], p, indent);
                    self.out.push_str(&format!(" {op} "));
                    self.operand(&args[1], p + 1, indent);
                    return;
                }
            }
            if args.len() == 1 && op == "-" {
                self.out.push('-');
                self.operand(&args[0], PREC_UNARY, indent);
                return;
            }
        }
        self.operand(callee, PREC_POSTFIX, indent);
        self.out.push('(');
        self.comma_list(args, indent);
        self.out.push(')');
    }

    fn macro_call(&mut self, node: &Node, indent: usize) {
        let name = node.children[0].sym_name().unwrap_or("?");
        match name {
            "time" => {
                self.out.push_str("@time ");
                self.expr(&node.children[1], indent);
            }
            "args" | "result" | "exception" | "original" => {
                self.out.push_str(&format!("@{name}"));
            }
            _ => {
                self.out.push_str(&format!("@{name}("));
                self.comma_list(&node.children[1..], indent);
                self.out.push(')');
            }
        }
    }

    fn comma_list(&mut self, nodes: &[Node], indent: usize) {
        for (i, n) in nodes.iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            self.expr(n, indent);
        }
    }

    /// Child of an assignment-like parent: never needs parens at our
    /// grammar's positions.
    fn child(&mut self, _parent: &Node, node: &Node, indent: usize) {
        self.expr(node, indent);
    }

    /// Prints `node` parenthesized when its precedence is below `min`.
    fn operand(&mut self, node: &Node, min: u8, indent: usize) {
        if prec(node) < min {
            self.out.push('(');
            self.expr(node, indent);
            self.out.push(')');
        } else {
            self.expr(node, indent);
        }
    }

    fn params(&mut self, node: &Node, indent: usize) {
        let mut first = true;
        let mut kw_started = false;
        for p in &node.params {
            if p.keyword && !kw_started {
                self.out.push_str("; ");
                kw_started = true;
                first = true;
            }
            if !first {
                self.out.push_str(", ");
            }
            first = false;
            self.out.push_str(&p.name);
            if let Some(t) = &p.type_name {
                self.out.push_str(&format!("::{t}"));
            }
            if p.variadic {
                self.out.push_str("...");
            }
            if let Some(d) = &p.default {
                self.out.push_str(" = ");
                self.expr(d, indent);
            }
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '$' => out.push_str("\\$"),
            other => out.push(other),
        }
    }
    out
}

fn format_float(v: f64) -> String {
    let s = v.to_string();
    if s.contains('.') || s.contains('e') || s.contains('E') || s.contains("inf") || s.contains("NaN")
    {
        s
    } else {
        format!("{s}.0")
    }
}
