//! Tree-walking evaluator for HL.
//!
//! The interpreter exists so that original and woven programs can be
//! executed and their observable output compared. It is deterministic:
//! stdout is captured in memory, `mynow`/`counter!` are monotonic counters,
//! `sleep` only advances the virtual clock, and `@time` reports virtual
//! ticks.

use std::cell::RefCell;
use std::rc::Rc;

use indexmap::IndexMap;

use crate::syntax::{Atom, Node, NodeKind, Param, SourceLoc};

/// Runtime value. Arrays, maps and struct instances have shared mutable
/// storage; everything else is immutable.
#[derive(Clone)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(Rc<str>),
    Nil,
    Array(Rc<RefCell<Vec<Value>>>),
    Tuple(Rc<Vec<Value>>),
    Range(i64, i64),
    Map(Rc<RefCell<IndexMap<String, Value>>>),
    Struct(Rc<StructInstance>),
    Closure(Rc<ClosureData>),
    Builtin(Rc<BuiltinData>),
}

pub struct StructInstance {
    pub type_name: String,
    pub mutable: bool,
    pub fields: RefCell<IndexMap<String, Value>>,
}

pub struct ClosureData {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Node,
    pub env: EnvRef,
    /// Set for inner struct constructors; gives the body access to `new`.
    pub struct_info: Option<Rc<StructInfo>>,
}

pub struct StructInfo {
    pub name: String,
    pub fields: Vec<String>,
    pub mutable: bool,
    pub ctor: Option<Rc<ClosureData>>,
}

pub struct BuiltinData {
    pub name: String,
    pub kind: BuiltinKind,
}

#[derive(Clone)]
pub enum BuiltinKind {
    Print,
    Println,
    Push,
    Pop,
    Length,
    ErrorFn,
    ThrowFn,
    Sleep,
    MyNow,
    MyFetch,
    Counter,
    MkMap,
    StructCtor(Rc<StructInfo>),
    New(Rc<StructInfo>),
}

/// Lexical scope chain. The variable map is reference-counted so a module's
/// scope can double as its namespace value.
pub struct Scope {
    vars: Rc<RefCell<IndexMap<String, Value>>>,
    parent: Option<EnvRef>,
}

pub type EnvRef = Rc<Scope>;

impl Scope {
    pub fn root() -> EnvRef {
        Rc::new(Scope {
            vars: Rc::new(RefCell::new(IndexMap::new())),
            parent: None,
        })
    }

    pub fn child(parent: &EnvRef) -> EnvRef {
        Rc::new(Scope {
            vars: Rc::new(RefCell::new(IndexMap::new())),
            parent: Some(parent.clone()),
        })
    }

    pub fn define(&self, name: &str, value: Value) {
        self.vars.borrow_mut().insert(name.to_string(), value);
    }

    pub fn lookup(&self, name: &str) -> Option<Value> {
        if let Some(v) = self.vars.borrow().get(name) {
            return Some(v.clone());
        }
        self.parent.as_ref().and_then(|p| p.lookup(name))
    }

    /// Updates the innermost existing binding; creates a new one in this
    /// scope when the name is unbound everywhere.
    pub fn assign(&self, name: &str, value: Value) {
        if self.try_update(name, &value) {
            return;
        }
        self.define(name, value);
    }

    fn try_update(&self, name: &str, value: &Value) -> bool {
        if self.vars.borrow().contains_key(name) {
            self.vars.borrow_mut().insert(name.to_string(), value.clone());
            return true;
        }
        self.parent.as_ref().is_some_and(|p| p.try_update(name, value))
    }

    pub fn is_defined(&self, name: &str) -> bool {
        self.vars.borrow().contains_key(name)
            || self.parent.as_ref().is_some_and(|p| p.is_defined(name))
    }
}

/// Non-local control flow during evaluation.
pub enum Flow {
    Return(Value),
    Throw { value: Value, stack: Vec<SourceLoc> },
}

#[derive(Debug, Clone)]
pub struct RunError {
    pub message: String,
    pub stack: Vec<SourceLoc>,
    /// True when the entry point itself could not be resolved or called.
    pub entry_failure: bool,
}

pub struct RunResult {
    pub value: Value,
    pub stdout: String,
    pub error: Option<RunError>,
}

const DEFAULT_FUEL: u64 = 50_000_000;

pub struct Interp {
    stdout: String,
    ticks: i64,
    counter: i64,
    fuel: u64,
    call_stack: Vec<SourceLoc>,
    pub globals: EnvRef,
}

impl Default for Interp {
    fn default() -> Self {
        Interp::new()
    }
}

impl Interp {
    pub fn new() -> Self {
        let root = Scope::root();
        for (name, kind) in [
            ("print", BuiltinKind::Print),
            ("println", BuiltinKind::Println),
            ("push!", BuiltinKind::Push),
            ("pop!", BuiltinKind::Pop),
            ("length", BuiltinKind::Length),
            ("error", BuiltinKind::ErrorFn),
            ("throw", BuiltinKind::ThrowFn),
            ("sleep", BuiltinKind::Sleep),
            ("mynow", BuiltinKind::MyNow),
            ("myfetch", BuiltinKind::MyFetch),
            ("counter!", BuiltinKind::Counter),
            ("mkmap", BuiltinKind::MkMap),
        ] {
            root.define(
                name,
                Value::Builtin(Rc::new(BuiltinData {
                    name: name.to_string(),
                    kind,
                })),
            );
        }
        root.define("nothing", Value::Nil);
        let globals = Scope::child(&root);
        Interp {
            stdout: String::new(),
            ticks: 0,
            counter: 0,
            fuel: DEFAULT_FUEL,
            call_stack: Vec::new(),
            globals,
        }
    }

    /// Evaluates the program's top-level statements, then calls the entry
    /// function (a dotted path like "Test.main") with no arguments.
    pub fn run(program: &Node, entry: &str) -> RunResult {
        let mut interp = Interp::new();
        let env = interp.globals.clone();
        match interp.eval(program, &env) {
            Ok(_) => {}
            Err(flow) => return interp.finish_flow(flow),
        }
        let target = match interp.resolve_entry(entry) {
            Ok(v) => v,
            Err(message) => {
                return RunResult {
                    value: Value::Nil,
                    stdout: std::mem::take(&mut interp.stdout),
                    error: Some(RunError {
                        message,
                        stack: Vec::new(),
                        entry_failure: true,
                    }),
                }
            }
        };
        let loc = SourceLoc::new("<entry>", 0);
        match interp.call_value(&target, Vec::new(), &loc) {
            Ok(value) => RunResult {
                value,
                stdout: std::mem::take(&mut interp.stdout),
                error: None,
            },
            Err(flow) => interp.finish_flow(flow),
        }
    }

    fn finish_flow(&mut self, flow: Flow) -> RunResult {
        let error = match flow {
            Flow::Return(_) => Some(RunError {
                message: "return outside of function".into(),
                stack: Vec::new(),
                entry_failure: false,
            }),
            Flow::Throw { value, stack } => Some(RunError {
                message: exception_message(&value),
                stack,
                entry_failure: false,
            }),
        };
        RunResult {
            value: Value::Nil,
            stdout: std::mem::take(&mut self.stdout),
            error,
        }
    }

    fn resolve_entry(&self, entry: &str) -> Result<Value, String> {
        let mut segments = entry.split('.');
        let first = segments.next().unwrap_or_default();
        let mut current = self
            .globals
            .lookup(first)
            .ok_or_else(|| format!("unknown entry '{entry}': '{first}' is not defined"))?;
        for seg in segments {
            let Value::Map(m) = &current else {
                return Err(format!("unknown entry '{entry}': '{seg}' is not reachable"));
            };
            let next = m.borrow().get(seg).cloned();
            current = next.ok_or_else(|| format!("unknown entry '{entry}': no member '{seg}'"))?;
        }
        match current {
            Value::Closure(_) | Value::Builtin(_) => Ok(current),
            _ => Err(format!("entry '{entry}' is not callable")),
        }
    }

    fn throw_text(&self, message: impl Into<String>, loc: &SourceLoc) -> Flow {
        let mut stack = self.call_stack.clone();
        stack.push(loc.clone());
        Flow::Throw {
            value: Value::Text(Rc::from(message.into())),
            stack,
        }
    }

    /// Evaluates one expression node in the given environment.
    pub fn eval_expr(&mut self, node: &Node, env: &EnvRef) -> Result<Value, Flow> {
        self.eval(node, env)
    }

    fn eval(&mut self, node: &Node, env: &EnvRef) -> Result<Value, Flow> {
        if self.fuel == 0 {
            return Err(self.throw_text("evaluation budget exceeded", &node.loc));
        }
        self.fuel -= 1;
        match node.kind {
            NodeKind::Block => {
                let mut value = Value::Nil;
                for stmt in &node.children {
                    if stmt.kind == NodeKind::LineInfo {
                        continue;
                    }
                    value = self.eval(stmt, env)?;
                }
                Ok(value)
            }
            NodeKind::LineInfo => Ok(Value::Nil),
            NodeKind::Module => {
                let name = node.children[0].sym_name().unwrap_or_default().to_string();
                let scope = Scope::child(env);
                for stmt in &node.children[1..] {
                    if stmt.kind == NodeKind::LineInfo {
                        continue;
                    }
                    self.eval(stmt, &scope)?;
                }
                env.define(&name, Value::Map(scope.vars.clone()));
                Ok(Value::Nil)
            }
            NodeKind::FunctionDef | NodeKind::ShortFuncDef => {
                let name = node.children[0].sym_name().unwrap_or_default().to_string();
                let closure = Value::Closure(Rc::new(ClosureData {
                    name: name.clone(),
                    params: node.params.clone(),
                    body: node.children[1].clone(),
                    env: env.clone(),
                    struct_info: None,
                }));
                env.define(&name, closure);
                Ok(Value::Nil)
            }
            NodeKind::Lambda => Ok(Value::Closure(Rc::new(ClosureData {
                name: "#<lambda>".to_string(),
                params: node.params.clone(),
                body: node.children[0].clone(),
                env: env.clone(),
                struct_info: None,
            }))),
            NodeKind::StructDef => self.eval_struct_def(node, env),
            NodeKind::Call => self.eval_call(node, env),
            NodeKind::MacroCall => self.eval_macro(node, env),
            NodeKind::Assign => {
                let value = self.eval(&node.children[1], env)?;
                let name = node.children[0].sym_name().unwrap_or_default();
                env.assign(name, value.clone());
                Ok(value)
            }
            NodeKind::OpAssign => {
                let name = node.children[0].sym_name().unwrap_or_default();
                let old = env.lookup(name).ok_or_else(|| {
                    self.throw_text(format!("undefined variable '{name}'"), &node.loc)
                })?;
                let rhs = self.eval(&node.children[1], env)?;
                let value = self.arith("+", &old, &rhs, &node.loc)?;
                env.assign(name, value.clone());
                Ok(value)
            }
            NodeKind::IndexAssign => {
                let base = self.eval(&node.children[0], env)?;
                let index = self.eval(&node.children[1], env)?;
                let value = self.eval(&node.children[2], env)?;
                self.index_set(&base, &index, value.clone(), &node.loc)?;
                Ok(value)
            }
            NodeKind::FieldAssign => {
                let base = self.eval(&node.children[0], env)?;
                let field = node.children[1].sym_name().unwrap_or_default();
                let value = self.eval(&node.children[2], env)?;
                self.field_set(&base, field, value.clone(), &node.loc)?;
                Ok(value)
            }
            NodeKind::IndexRef => {
                let base = self.eval(&node.children[0], env)?;
                let index = self.eval(&node.children[1], env)?;
                self.index_get(&base, &index, &node.loc)
            }
            NodeKind::FieldRef => {
                let base = self.eval(&node.children[0], env)?;
                let field = node.children[1].sym_name().unwrap_or_default();
                self.field_get(&base, field, &node.loc)
            }
            NodeKind::For => self.eval_for(node, env, 0),
            NodeKind::If => {
                let cond = self.eval(&node.children[0], env)?;
                match cond {
                    Value::Bool(true) => self.eval(&node.children[1], env),
                    Value::Bool(false) => match node.children.get(2) {
                        Some(else_block) => self.eval(else_block, env),
                        None => Ok(Value::Nil),
                    },
                    other => Err(self.throw_text(
                        format!("if condition must be a boolean, got {}", type_name(&other)),
                        &node.loc,
                    )),
                }
            }
            NodeKind::Let => {
                let scope = Scope::child(env);
                let body_index = node.children.len() - 1;
                for binding in &node.children[..body_index] {
                    let value = self.eval(&binding.children[1], &scope)?;
                    let name = binding.children[0].sym_name().unwrap_or_default();
                    scope.define(name, value);
                }
                self.eval(&node.children[body_index], &scope)
            }
            NodeKind::TryCatchFinally => self.eval_try(node, env),
            NodeKind::Throw => {
                let value = self.eval(&node.children[0], env)?;
                let mut stack = self.call_stack.clone();
                stack.push(node.loc.clone());
                Err(Flow::Throw { value, stack })
            }
            NodeKind::AndAnd => {
                let lhs = self.eval(&node.children[0], env)?;
                match lhs {
                    Value::Bool(false) => Ok(Value::Bool(false)),
                    Value::Bool(true) => self.expect_bool(&node.children[1], env, "&&"),
                    other => Err(self.throw_text(
                        format!("&& expects booleans, got {}", type_name(&other)),
                        &node.loc,
                    )),
                }
            }
            NodeKind::OrOr => {
                let lhs = self.eval(&node.children[0], env)?;
                match lhs {
                    Value::Bool(true) => Ok(Value::Bool(true)),
                    Value::Bool(false) => self.expect_bool(&node.children[1], env, "||"),
                    other => Err(self.throw_text(
                        format!("|| expects booleans, got {}", type_name(&other)),
                        &node.loc,
                    )),
                }
            }
            NodeKind::Return => {
                let value = match node.children.first() {
                    Some(expr) => self.eval(expr, env)?,
                    None => Value::Nil,
                };
                Err(Flow::Return(value))
            }
            NodeKind::Symbol => {
                let name = node.sym_name().unwrap_or_default();
                env.lookup(name).ok_or_else(|| {
                    self.throw_text(format!("undefined variable '{name}'"), &node.loc)
                })
            }
            NodeKind::IntLit => match &node.atom {
                Some(Atom::Int(v)) => Ok(Value::Int(*v)),
                _ => unreachable!(),
            },
            NodeKind::FloatLit => match &node.atom {
                Some(Atom::Float(v)) => Ok(Value::Float(*v)),
                _ => unreachable!(),
            },
            NodeKind::BoolLit => match &node.atom {
                Some(Atom::Bool(v)) => Ok(Value::Bool(*v)),
                _ => unreachable!(),
            },
            NodeKind::StringLit => match &node.atom {
                Some(Atom::Str(s)) => Ok(Value::Text(Rc::from(s.as_str()))),
                _ => unreachable!(),
            },
            NodeKind::StringInterp => {
                let mut out = String::new();
                for part in &node.children {
                    let v = self.eval(part, env)?;
                    out.push_str(&format_value(&v));
                }
                Ok(Value::Text(Rc::from(out)))
            }
            NodeKind::ArrayLit => {
                let mut items = Vec::with_capacity(node.children.len());
                for c in &node.children {
                    items.push(self.eval(c, env)?);
                }
                Ok(Value::Array(Rc::new(RefCell::new(items))))
            }
            NodeKind::TupleLit => {
                let mut items = Vec::with_capacity(node.children.len());
                for c in &node.children {
                    items.push(self.eval(c, env)?);
                }
                Ok(Value::Tuple(Rc::new(items)))
            }
            NodeKind::MapLit => {
                let mut map = IndexMap::new();
                for pair in node.children.chunks(2) {
                    let key = pair[0].sym_name().unwrap_or_default().to_string();
                    let value = self.eval(&pair[1], env)?;
                    map.insert(key, value);
                }
                Ok(Value::Map(Rc::new(RefCell::new(map))))
            }
            NodeKind::Range => {
                let lo = self.eval(&node.children[0], env)?;
                let hi = self.eval(&node.children[1], env)?;
                match (lo, hi) {
                    (Value::Int(a), Value::Int(b)) => Ok(Value::Range(a, b)),
                    _ => Err(self.throw_text("range bounds must be integers", &node.loc)),
                }
            }
            NodeKind::Include => Err(self.throw_text(
                "unresolved include at runtime; run pre-weave first",
                &node.loc,
            )),
            NodeKind::AttrAnnot => self.eval(&node.children[1], env),
            NodeKind::Aj => Err(self.throw_text(
                "internal aj node reached the interpreter; run emit first",
                &node.loc,
            )),
        }
    }

    fn expect_bool(&mut self, node: &Node, env: &EnvRef, op: &str) -> Result<Value, Flow> {
        match self.eval(node, env)? {
            v @ Value::Bool(_) => Ok(v),
            other => Err(self.throw_text(
                format!("{op} expects booleans, got {}", type_name(&other)),
                &node.loc,
            )),
        }
    }

    fn eval_struct_def(&mut self, node: &Node, env: &EnvRef) -> Result<Value, Flow> {
        let name = node.children[0].sym_name().unwrap_or_default().to_string();
        let fields: Vec<String> = node.params.iter().map(|p| p.name.clone()).collect();
        let mut ctor = None;
        for member in &node.children[1..] {
            if member.kind == NodeKind::FunctionDef
                && member.children[0].sym_name() == Some(name.as_str())
            {
                if ctor.is_some() {
                    return Err(self.throw_text(
                        format!("struct {name} has more than one constructor"),
                        &member.loc,
                    ));
                }
                ctor = Some(Rc::new(ClosureData {
                    name: name.clone(),
                    params: member.params.clone(),
                    body: member.children[1].clone(),
                    env: env.clone(),
                    struct_info: None,
                }));
            }
        }
        let info = Rc::new(StructInfo {
            name: name.clone(),
            fields,
            mutable: node.is_mutable,
            ctor,
        });
        let ctor_value = Value::Builtin(Rc::new(BuiltinData {
            name: name.clone(),
            kind: BuiltinKind::StructCtor(info),
        }));
        env.define(&name, ctor_value);
        Ok(Value::Nil)
    }

    fn eval_call(&mut self, node: &Node, env: &EnvRef) -> Result<Value, Flow> {
        let callee_node = &node.children[0];
        // binary/unary operators are calls on operator symbols
        if let Some(op) = callee_node.sym_name() {
            if is_operator(op) && !env.is_defined(op) {
                return self.eval_op(op, node, env);
            }
        }
        let callee = self.eval(callee_node, env)?;
        let mut args = Vec::with_capacity(node.children.len() - 1);
        for a in &node.children[1..] {
            args.push(self.eval(a, env)?);
        }
        self.call_value(&callee, args, &node.loc)
    }

    pub fn call_value(
        &mut self,
        callee: &Value,
        args: Vec<Value>,
        loc: &SourceLoc,
    ) -> Result<Value, Flow> {
        self.ticks += 1;
        if self.call_stack.len() > 4000 {
            return Err(self.throw_text("call stack exhausted", loc));
        }
        match callee {
            Value::Closure(c) => self.call_closure(c, args, loc),
            Value::Builtin(b) => {
                let kind = b.kind.clone();
                let name = b.name.clone();
                self.call_builtin(&kind, &name, args, loc)
            }
            other => Err(self.throw_text(
                format!("cannot call a value of type {}", type_name(other)),
                loc,
            )),
        }
    }

    fn call_closure(
        &mut self,
        closure: &Rc<ClosureData>,
        args: Vec<Value>,
        loc: &SourceLoc,
    ) -> Result<Value, Flow> {
        let scope = Scope::child(&closure.env);
        if let Some(info) = &closure.struct_info {
            scope.define(
                "new",
                Value::Builtin(Rc::new(BuiltinData {
                    name: "new".to_string(),
                    kind: BuiltinKind::New(info.clone()),
                })),
            );
        }
        self.bind_params(closure, &scope, args, loc)?;
        self.call_stack.push(loc.clone());
        let result = self.eval(&closure.body, &scope);
        self.call_stack.pop();
        match result {
            Ok(v) => Ok(v),
            Err(Flow::Return(v)) => Ok(v),
            Err(throw) => Err(throw),
        }
    }

    fn bind_params(
        &mut self,
        closure: &Rc<ClosureData>,
        scope: &EnvRef,
        args: Vec<Value>,
        loc: &SourceLoc,
    ) -> Result<(), Flow> {
        let positional: Vec<&Param> = closure.params.iter().filter(|p| !p.keyword).collect();
        let mut remaining = args.len();
        let mut args = args.into_iter();
        for (i, param) in positional.iter().enumerate() {
            if param.variadic {
                if i != positional.len() - 1 {
                    return Err(self.throw_text(
                        format!("variadic parameter '{}' must be last", param.name),
                        loc,
                    ));
                }
                let rest: Vec<Value> = args.by_ref().collect();
                scope.define(&param.name, Value::Array(Rc::new(RefCell::new(rest))));
                remaining = 0;
                continue;
            }
            match args.next() {
                Some(v) => {
                    remaining -= 1;
                    scope.define(&param.name, v);
                }
                None => match &param.default {
                    Some(d) => {
                        let v = self.eval(d, scope)?;
                        scope.define(&param.name, v);
                    }
                    None => {
                        return Err(self.throw_text(
                            format!(
                                "function '{}' expects argument '{}'",
                                closure.name, param.name
                            ),
                            loc,
                        ))
                    }
                },
            }
        }
        if remaining > 0 {
            return Err(self.throw_text(
                format!("too many arguments in call to '{}'", closure.name),
                loc,
            ));
        }
        for param in closure.params.iter().filter(|p| p.keyword) {
            match &param.default {
                Some(d) => {
                    let v = self.eval(d, scope)?;
                    scope.define(&param.name, v);
                }
                None if param.variadic => {
                    scope.define(&param.name, Value::Map(Rc::new(RefCell::new(IndexMap::new()))));
                }
                None => {
                    return Err(self.throw_text(
                        format!(
                            "function '{}' requires keyword argument '{}' (call-site keywords are not supported)",
                            closure.name, param.name
                        ),
                        loc,
                    ))
                }
            }
        }
        Ok(())
    }

    fn call_builtin(
        &mut self,
        kind: &BuiltinKind,
        name: &str,
        args: Vec<Value>,
        loc: &SourceLoc,
    ) -> Result<Value, Flow> {
        match kind {
            BuiltinKind::Print | BuiltinKind::Println => {
                for a in &args {
                    let text = format_value(a);
                    self.stdout.push_str(&text);
                }
                if matches!(kind, BuiltinKind::Println) {
                    self.stdout.push('\n');
                }
                Ok(Value::Nil)
            }
            BuiltinKind::Push => {
                let [Value::Array(a), v] = args.as_slice() else {
                    return Err(self.throw_text("push! expects (array, value)", loc));
                };
                a.borrow_mut().push(v.clone());
                Ok(Value::Array(a.clone()))
            }
            BuiltinKind::Pop => {
                let [Value::Array(a)] = args.as_slice() else {
                    return Err(self.throw_text("pop! expects an array", loc));
                };
                let popped = a.borrow_mut().pop();
                popped.ok_or_else(|| self.throw_text("pop! of an empty array", loc))
            }
            BuiltinKind::Length => {
                let [v] = args.as_slice() else {
                    return Err(self.throw_text("length expects one argument", loc));
                };
                let n = match v {
                    Value::Array(a) => a.borrow().len() as i64,
                    Value::Tuple(t) => t.len() as i64,
                    Value::Text(s) => s.chars().count() as i64,
                    Value::Map(m) => m.borrow().len() as i64,
                    Value::Range(lo, hi) => (hi - lo + 1).max(0),
                    other => {
                        return Err(self.throw_text(
                            format!("length is not defined for {}", type_name(other)),
                            loc,
                        ))
                    }
                };
                Ok(Value::Int(n))
            }
            BuiltinKind::ErrorFn => {
                let message = args
                    .first()
                    .map(format_value)
                    .unwrap_or_else(|| "error".to_string());
                Err(self.throw_text(message, loc))
            }
            BuiltinKind::ThrowFn => {
                let value = args.into_iter().next().unwrap_or(Value::Nil);
                let mut stack = self.call_stack.clone();
                stack.push(loc.clone());
                Err(Flow::Throw { value, stack })
            }
            BuiltinKind::Sleep => {
                if let Some(Value::Int(n)) = args.first() {
                    self.ticks += (*n).max(0);
                }
                Ok(Value::Nil)
            }
            BuiltinKind::MyNow => {
                self.ticks += 1;
                Ok(Value::Int(self.ticks))
            }
            BuiltinKind::MyFetch => {
                let [Value::Text(url)] = args.as_slice() else {
                    return Err(self.throw_text("myfetch expects a url string", loc));
                };
                Ok(Value::Text(Rc::from(format!("fetched:{url}"))))
            }
            BuiltinKind::Counter => {
                self.counter += 1;
                Ok(Value::Int(self.counter))
            }
            BuiltinKind::MkMap => {
                if args.len() % 2 != 0 {
                    return Err(self.throw_text("mkmap expects key/value pairs", loc));
                }
                let mut map = IndexMap::new();
                for pair in args.chunks(2) {
                    let Value::Text(k) = &pair[0] else {
                        return Err(self.throw_text("mkmap keys must be strings", loc));
                    };
                    map.insert(k.to_string(), pair[1].clone());
                }
                Ok(Value::Map(Rc::new(RefCell::new(map))))
            }
            BuiltinKind::StructCtor(info) => match &info.ctor {
                Some(ctor) => {
                    let closure = Rc::new(ClosureData {
                        name: ctor.name.clone(),
                        params: ctor.params.clone(),
                        body: ctor.body.clone(),
                        env: ctor.env.clone(),
                        struct_info: Some(info.clone()),
                    });
                    self.call_closure(&closure, args, loc)
                }
                None => self.construct(info, args, loc),
            },
            BuiltinKind::New(info) => {
                let _ = name;
                self.construct(info, args, loc)
            }
        }
    }

    fn construct(
        &mut self,
        info: &Rc<StructInfo>,
        args: Vec<Value>,
        loc: &SourceLoc,
    ) -> Result<Value, Flow> {
        if args.len() != info.fields.len() {
            return Err(self.throw_text(
                format!(
                    "{} expects {} field values, got {}",
                    info.name,
                    info.fields.len(),
                    args.len()
                ),
                loc,
            ));
        }
        let fields: IndexMap<String, Value> = info.fields.iter().cloned().zip(args).collect();
        Ok(Value::Struct(Rc::new(StructInstance {
            type_name: info.name.clone(),
            mutable: info.mutable,
            fields: RefCell::new(fields),
        })))
    }

    fn eval_op(&mut self, op: &str, node: &Node, env: &EnvRef) -> Result<Value, Flow> {
        let args = &node.children[1..];
        if op == "-" && args.len() == 1 {
            let v = self.eval(&args[0], env)?;
            return match v {
                Value::Int(i) => Ok(Value::Int(-i)),
                Value::Float(f) => Ok(Value::Float(-f)),
                other => Err(self.throw_text(
                    format!("cannot negate {}", type_name(&other)),
                    &node.loc,
                )),
            };
        }
        if args.len() != 2 {
            return Err(self.throw_text(format!("operator {op} expects two operands"), &node.loc));
        }
        let lhs = self.eval(&args[0], env)?;
        let rhs = self.eval(&args[1], env)?;
        match op {
            "+" | "-" | "*" | "/" => self.arith(op, &lhs, &rhs, &node.loc),
            "==" => Ok(Value::Bool(values_equal(&lhs, &rhs))),
            "!=" => Ok(Value::Bool(!values_equal(&lhs, &rhs))),
            "<" | ">" | "<=" | ">=" => {
                let (a, b) = match (&lhs, &rhs) {
                    (Value::Int(a), Value::Int(b)) => (*a as f64, *b as f64),
                    (Value::Int(a), Value::Float(b)) => (*a as f64, *b),
                    (Value::Float(a), Value::Int(b)) => (*a, *b as f64),
                    (Value::Float(a), Value::Float(b)) => (*a, *b),
                    _ => {
                        return Err(self.throw_text(
                            format!(
                                "cannot compare {} and {}",
                                type_name(&lhs),
                                type_name(&rhs)
                            ),
                            &node.loc,
                        ))
                    }
                };
                let r = match op {
                    "<" => a < b,
                    ">" => a > b,
                    "<=" => a <= b,
                    _ => a >= b,
                };
                Ok(Value::Bool(r))
            }
            _ => unreachable!(),
        }
    }

    fn arith(&self, op: &str, lhs: &Value, rhs: &Value, loc: &SourceLoc) -> Result<Value, Flow> {
        if op == "/" {
            let (a, b) = match (as_f64(lhs), as_f64(rhs)) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(self.throw_text(
                        format!("cannot divide {} by {}", type_name(lhs), type_name(rhs)),
                        loc,
                    ))
                }
            };
            return Ok(Value::Float(a / b));
        }
        match (lhs, rhs) {
            (Value::Int(a), Value::Int(b)) => {
                let r = match op {
                    "+" => a.checked_add(*b),
                    "-" => a.checked_sub(*b),
                    _ => a.checked_mul(*b),
                };
                r.map(Value::Int)
                    .ok_or_else(|| self.throw_text("integer overflow", loc))
            }
            _ => match (as_f64(lhs), as_f64(rhs)) {
                (Some(a), Some(b)) => {
                    let r = match op {
                        "+" => a + b,
                        "-" => a - b,
                        _ => a * b,
                    };
                    Ok(Value::Float(r))
                }
                _ => Err(self.throw_text(
                    format!(
                        "operator {op} is not defined for {} and {}",
                        type_name(lhs),
                        type_name(rhs)
                    ),
                    loc,
                )),
            },
        }
    }

    fn eval_for(&mut self, node: &Node, env: &EnvRef, clause: usize) -> Result<Value, Flow> {
        let clauses = (node.children.len() - 1) / 2;
        if clause == clauses {
            let body = &node.children[clauses * 2];
            self.eval(body, env)?;
            return Ok(Value::Nil);
        }
        let var = node.children[clause * 2].sym_name().unwrap_or_default();
        let iterable = self.eval(&node.children[clause * 2 + 1], env)?;
        let items: Vec<Value> = match &iterable {
            Value::Range(lo, hi) => (*lo..=*hi).map(Value::Int).collect(),
            Value::Array(a) => a.borrow().clone(),
            Value::Tuple(t) => t.as_ref().clone(),
            other => {
                return Err(self.throw_text(
                    format!("cannot iterate over {}", type_name(other)),
                    &node.loc,
                ))
            }
        };
        for item in items {
            let scope = Scope::child(env);
            scope.define(var, item);
            self.eval_for(node, &scope, clause + 1)?;
        }
        Ok(Value::Nil)
    }

    fn eval_try(&mut self, node: &Node, env: &EnvRef) -> Result<Value, Flow> {
        let body = &node.children[0];
        let (catch, finally) = split_try(node);
        let mut outcome = self.eval(body, env);
        if let (Err(Flow::Throw { value, .. }), Some((binder, catch_block))) = (&outcome, catch) {
            let scope = Scope::child(env);
            scope.define(binder, value.clone());
            outcome = self.eval(catch_block, &scope);
        }
        if let Some(fin) = finally {
            // the finally block runs on every path; its own control flow wins
            self.eval(fin, env)?;
        }
        outcome
    }

    fn index_get(&self, base: &Value, index: &Value, loc: &SourceLoc) -> Result<Value, Flow> {
        match (base, index) {
            (Value::Array(a), Value::Int(i)) => {
                let items = a.borrow();
                let idx = *i;
                if idx < 1 || idx as usize > items.len() {
                    return Err(self.throw_text(
                        format!(
                            "index {idx} out of bounds for array of length {}",
                            items.len()
                        ),
                        loc,
                    ));
                }
                Ok(items[idx as usize - 1].clone())
            }
            (Value::Tuple(t), Value::Int(i)) => {
                let idx = *i;
                if idx < 1 || idx as usize > t.len() {
                    return Err(self.throw_text(
                        format!("index {idx} out of bounds for tuple of length {}", t.len()),
                        loc,
                    ));
                }
                Ok(t[idx as usize - 1].clone())
            }
            (Value::Map(m), Value::Text(k)) => m
                .borrow()
                .get(k.as_ref())
                .cloned()
                .ok_or_else(|| self.throw_text(format!("key '{k}' not found"), loc)),
            (Value::Range(lo, hi), Value::Int(i)) => {
                let idx = *i;
                let len = (hi - lo + 1).max(0);
                if idx < 1 || idx > len {
                    return Err(self.throw_text(format!("index {idx} out of range"), loc));
                }
                Ok(Value::Int(lo + idx - 1))
            }
            _ => Err(self.throw_text(
                format!(
                    "cannot index {} with {}",
                    type_name(base),
                    type_name(index)
                ),
                loc,
            )),
        }
    }

    fn index_set(
        &self,
        base: &Value,
        index: &Value,
        value: Value,
        loc: &SourceLoc,
    ) -> Result<(), Flow> {
        match (base, index) {
            (Value::Array(a), Value::Int(i)) => {
                let mut items = a.borrow_mut();
                let idx = *i;
                if idx < 1 || idx as usize > items.len() {
                    return Err(self.throw_text(
                        format!(
                            "index {idx} out of bounds for array of length {}",
                            items.len()
                        ),
                        loc,
                    ));
                }
                items[idx as usize - 1] = value;
                Ok(())
            }
            (Value::Map(m), Value::Text(k)) => {
                m.borrow_mut().insert(k.to_string(), value);
                Ok(())
            }
            _ => Err(self.throw_text(
                format!(
                    "cannot assign into {} at {}",
                    type_name(base),
                    type_name(index)
                ),
                loc,
            )),
        }
    }

    fn field_get(&self, base: &Value, field: &str, loc: &SourceLoc) -> Result<Value, Flow> {
        match base {
            Value::Struct(s) => s.fields.borrow().get(field).cloned().ok_or_else(|| {
                self.throw_text(format!("type {} has no field '{field}'", s.type_name), loc)
            }),
            Value::Map(m) => m
                .borrow()
                .get(field)
                .cloned()
                .ok_or_else(|| self.throw_text(format!("no member '{field}'"), loc)),
            other => Err(self.throw_text(format!("{} has no fields", type_name(other)), loc)),
        }
    }

    fn field_set(
        &self,
        base: &Value,
        field: &str,
        value: Value,
        loc: &SourceLoc,
    ) -> Result<(), Flow> {
        match base {
            Value::Struct(s) => {
                if !s.mutable {
                    return Err(self.throw_text(
                        format!(
                            "cannot assign field '{field}' of immutable struct {}",
                            s.type_name
                        ),
                        loc,
                    ));
                }
                s.fields.borrow_mut().insert(field.to_string(), value);
                Ok(())
            }
            Value::Map(m) => {
                m.borrow_mut().insert(field.to_string(), value);
                Ok(())
            }
            other => Err(self.throw_text(format!("{} has no fields", type_name(other)), loc)),
        }
    }

    fn eval_macro(&mut self, node: &Node, env: &EnvRef) -> Result<Value, Flow> {
        match node.children[0].sym_name() {
            Some("time") => {
                let before = self.ticks;
                let value = self.eval(&node.children[1], env)?;
                let elapsed = self.ticks - before;
                self.stdout.push_str(&format!("time: {elapsed} ns\n"));
                Ok(value)
            }
            Some("isdefined") => {
                let name = node.children[1].sym_name().unwrap_or_default();
                Ok(Value::Bool(env.is_defined(name)))
            }
            Some(other) => Err(self.throw_text(
                format!("unexpanded advice hole or unknown macro '@{other}'"),
                &node.loc,
            )),
            None => Err(self.throw_text("malformed macro call", &node.loc)),
        }
    }
}

fn split_try(node: &Node) -> (Option<(&str, &Node)>, Option<&Node>) {
    let rest = &node.children[1..];
    match rest {
        [binder, catch_block] if binder.kind == NodeKind::Symbol => (
            Some((binder.sym_name().unwrap_or_default(), catch_block)),
            None,
        ),
        [finally] => (None, Some(finally)),
        [binder, catch_block, finally] => (
            Some((binder.sym_name().unwrap_or_default(), catch_block)),
            Some(finally),
        ),
        _ => (None, None),
    }
}

fn is_operator(name: &str) -> bool {
    matches!(
        name,
        "+" | "-" | "*" | "/" | "==" | "!=" | "<" | ">" | "<=" | ">="
    )
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Float(f) => Some(*f),
        _ => None,
    }
}

pub fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Float(x), Value::Float(y)) => x == y,
        (Value::Int(x), Value::Float(y)) | (Value::Float(y), Value::Int(x)) => *x as f64 == *y,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Text(x), Value::Text(y)) => x == y,
        (Value::Nil, Value::Nil) => true,
        (Value::Range(a1, b1), Value::Range(a2, b2)) => a1 == a2 && b1 == b2,
        (Value::Array(x), Value::Array(y)) => {
            let (x, y) = (x.borrow(), y.borrow());
            x.len() == y.len() && x.iter().zip(y.iter()).all(|(a, b)| values_equal(a, b))
        }
        (Value::Tuple(x), Value::Tuple(y)) => {
            x.len() == y.len() && x.iter().zip(y.iter()).all(|(a, b)| values_equal(a, b))
        }
        (Value::Map(x), Value::Map(y)) => {
            let (x, y) = (x.borrow(), y.borrow());
            x.len() == y.len()
                && x.iter()
                    .all(|(k, v)| y.get(k).is_some_and(|w| values_equal(v, w)))
        }
        (Value::Struct(x), Value::Struct(y)) => {
            x.type_name == y.type_name && {
                let (xf, yf) = (x.fields.borrow(), y.fields.borrow());
                xf.len() == yf.len()
                    && xf
                        .iter()
                        .all(|(k, v)| yf.get(k).is_some_and(|w| values_equal(v, w)))
            }
        }
        (Value::Closure(x), Value::Closure(y)) => Rc::ptr_eq(x, y),
        (Value::Builtin(x), Value::Builtin(y)) => Rc::ptr_eq(x, y),
        _ => false,
    }
}

fn exception_message(value: &Value) -> String {
    match value {
        Value::Text(s) => s.to_string(),
        other => format_value(other),
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Int(_) => "an integer",
        Value::Float(_) => "a float",
        Value::Bool(_) => "a boolean",
        Value::Text(_) => "a string",
        Value::Nil => "nothing",
        Value::Array(_) => "an array",
        Value::Tuple(_) => "a tuple",
        Value::Range(_, _) => "a range",
        Value::Map(_) => "a map",
        Value::Struct(_) => "a struct",
        Value::Closure(_) => "a function",
        Value::Builtin(_) => "a function",
    }
}

/// Text rendering used by print/println and string interpolation.
pub fn format_value(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Float(f) => format_float(*f),
        Value::Bool(b) => b.to_string(),
        Value::Text(s) => s.to_string(),
        Value::Nil => "nothing".to_string(),
        Value::Array(a) => {
            let items: Vec<String> = a.borrow().iter().map(format_value).collect();
            format!("[{}]", items.join(", "))
        }
        Value::Tuple(t) => {
            let items: Vec<String> = t.iter().map(format_value).collect();
            if items.len() == 1 {
                format!("({},)", items[0])
            } else {
                format!("({})", items.join(", "))
            }
        }
        Value::Range(lo, hi) => format!("{lo}:{hi}"),
        Value::Map(m) => {
            let items: Vec<String> = m
                .borrow()
                .iter()
                .map(|(k, v)| format!("{k} = {}", format_value(v)))
                .collect();
            format!("({})", items.join(", "))
        }
        Value::Struct(s) => {
            let items: Vec<String> = s.fields.borrow().values().map(format_value).collect();
            format!("{}({})", s.type_name, items.join(", "))
        }
        Value::Closure(c) => c.name.clone(),
        Value::Builtin(b) => b.name.clone(),
    }
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse;

    fn run_src(src: &str, entry: &str) -> RunResult {
        let program = parse(src, "t.hl").unwrap();
        Interp::run(&program, entry)
    }

    fn stdout(src: &str, entry: &str) -> String {
        let r = run_src(src, entry);
        assert!(r.error.is_none(), "unexpected error: {:?}", r.error);
        r.stdout
    }

    #[test]
    fn internal_pointcut_woven_form_prints_twice() {
        let src = "function foo()\n    print(\"b!\")\n    println(\"foo\")\nend\nfunction main()\n    bar = foo\n    foo()\n    bar()\nend";
        assert_eq!(stdout(src, "main"), "b!foo\nb!foo\n");
    }

    #[test]
    fn external_pointcut_woven_form_prints_once() {
        let src = "function foo()\n    println(\"foo\")\nend\nfunction main()\n    bar = foo\n    print(\"b!\")\n    foo()\n    bar()\nend";
        assert_eq!(stdout(src, "main"), "b!foo\nfoo\n");
    }

    #[test]
    fn unknown_entry_on_empty_program() {
        let r = run_src("", "main");
        let err = r.error.expect("expected an error");
        assert!(err.entry_failure);
        assert!(err.message.contains("unknown entry"));
    }

    #[test]
    fn pop_mutates_and_returns_last() {
        let src = "function main()\n    ary = [1, 2, 3]\n    println(pop!(ary))\n    println(length(ary))\n    println(ary[1])\nend";
        assert_eq!(stdout(src, "main"), "3\n2\n1\n");
    }

    #[test]
    fn short_circuit_skips_side_effects() {
        let src = "function main()\n    ary = [1]\n    x = false && pop!(ary) == 1\n    println(x)\n    println(length(ary))\nend";
        assert_eq!(stdout(src, "main"), "false\n1\n");
    }

    #[test]
    fn assignment_returns_the_assigned_value() {
        let src = "function main()\n    y = begin\n        x = 5\n    end\n    println(y)\n    println(x)\nend";
        assert_eq!(stdout(src, "main"), "5\n5\n");
    }

    #[test]
    fn let_scoping_and_isdefined() {
        let src = "function main()\n    x = 1\n    let y = 2\n        println(@isdefined(y))\n        println(@isdefined(x))\n        z = 3\n    end\n    println(@isdefined(y))\n    println(@isdefined(z))\nend";
        assert_eq!(stdout(src, "main"), "true\ntrue\nfalse\nfalse\n");
    }

    #[test]
    fn assignment_inside_let_updates_outer_binding() {
        let src = "function main()\n    v = 0\n    let a = 1\n        v = a\n    end\n    println(v)\nend";
        assert_eq!(stdout(src, "main"), "1\n");
    }

    #[test]
    fn module_entry_and_member_access() {
        let src = "module Test\nfunction foo()\n    print(\"foo\")\nend\nfunction main()\n    foo()\nend\nend";
        assert_eq!(stdout(src, "Test.main"), "foo");
    }

    #[test]
    fn division_yields_float_and_prints_julia_style() {
        let src = "function main()\n    println((1 + 2) / 100)\n    println(6 / 2)\nend";
        assert_eq!(stdout(src, "main"), "0.03\n3.0\n");
    }

    #[test]
    fn counter_is_monotonic_and_single_eval() {
        let src = "function f(x)\n    x\nend\nfunction main()\n    f(counter!())\n    println(counter!())\nend";
        assert_eq!(stdout(src, "main"), "2\n");
    }

    #[test]
    fn time_macro_prints_tick_delta() {
        let src = "bar() = sleep(10)\nfunction main()\n    @time bar()\nend";
        let out = stdout(src, "main");
        assert!(out.starts_with("time: "), "got: {out}");
        assert!(out.ends_with(" ns\n"));
    }

    #[test]
    fn exceptions_catch_rethrow_and_finally() {
        let src = "function boom()\n    error(\"zero division\")\nend\nfunction main()\n    try\n        boom()\n    catch e\n        println(\"caught $(e)\")\n        throw(e)\n    finally\n        println(\"cleanup\")\n    end\nend";
        let r = run_src(src, "main");
        assert_eq!(r.stdout, "caught zero division\ncleanup\n");
        let err = r.error.expect("expected rethrown error");
        assert!(!err.entry_failure);
        assert_eq!(err.message, "zero division");
        assert!(!err.stack.is_empty());
    }

    #[test]
    fn structs_construct_and_enforce_mutability() {
        let src = "struct P\n    x::Int64\n    y\nend\nmutable struct Q\n    a\nend\nfunction main()\n    p = P(1, 2)\n    q = Q(5)\n    q.a = 6\n    println(p.x)\n    println(q.a)\n    p.x = 9\nend";
        let r = run_src(src, "main");
        assert_eq!(r.stdout, "1\n6\n");
        assert!(r.error.unwrap().message.contains("immutable"));
    }

    #[test]
    fn struct_inner_constructor_uses_new() {
        let src = "struct MYST\n    x::Int\n    y::Int\n    init_time\n    function MYST(x, y)\n        new(x, y, mynow())\n    end\nend\nfunction main()\n    s = MYST(1, 2)\n    println(s.init_time)\nend";
        let out = stdout(src, "main");
        let n: i64 = out.trim().parse().expect("init_time should be an integer");
        assert!(n >= 1);
    }

    #[test]
    fn myfetch_is_pure() {
        let src = "function main()\n    println(myfetch(\"https://example.org/\"))\nend";
        assert_eq!(stdout(src, "main"), "fetched:https://example.org/\n");
    }

    #[test]
    fn for_loops_iterate_ranges_in_order() {
        let src = "function main()\n    for i in 1:2, j in 1:2\n        println(\"x=$(i), y=$(j)\")\n    end\n    for k in 2:1\n        println(k)\n    end\nend";
        assert_eq!(stdout(src, "main"), "x=1, y=1\nx=1, y=2\nx=2, y=1\nx=2, y=2\n");
    }

    #[test]
    fn runs_are_deterministic() {
        let src = "function main()\n    println(mynow())\n    @time sleep(3)\n    println(counter!())\nend";
        let a = run_src(src, "main");
        let b = run_src(src, "main");
        assert_eq!(a.stdout, b.stdout);
    }

    #[test]
    fn records_support_field_and_index_access() {
        let src = "function main()\n    arg = (args = [10, 20, 30], kargs = mkmap())\n    println(arg.args[3])\n    println(length(arg.kargs))\nend";
        assert_eq!(stdout(src, "main"), "30\n0\n");
    }

    #[test]
    fn return_unwinds_through_try_running_finally() {
        let src = "function f()\n    try\n        return 1\n    finally\n        println(\"fin\")\n    end\nend\nfunction main()\n    println(f())\nend";
        assert_eq!(stdout(src, "main"), "fin\n1\n");
    }

    #[test]
    fn module_members_are_reachable_by_dotted_access() {
        let src = "module M\nx = 41\nfunction f()\n    x\nend\nend\nfunction main()\n    println(M.x)\n    println(M.f())\nend";
        assert_eq!(stdout(src, "main"), "41\n41\n");
    }

    #[test]
    fn variadic_and_default_params_bind() {
        let src = "function f(a, rest...)\n    println(a)\n    println(rest)\nend\nfunction g(x, y = x + 1)\n    y\nend\nfunction main()\n    f(1, 2, 3)\n    println(g(5))\nend";
        assert_eq!(stdout(src, "main"), "1\n[2, 3]\n6\n");
    }
}
