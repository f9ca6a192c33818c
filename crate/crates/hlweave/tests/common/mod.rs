//! Random HL tree generation for the property suites.
//!
//! Trees come out parser-shaped: every construct the generator emits can be
//! printed by the canonical printer and reparsed to a node_equal tree.
//! LineInfo interleaving is omitted (equality ignores it).

use hlweave::syntax::{Atom, Node, NodeKind, Param, SourceLoc};
use proptest::prelude::*;

const VARS: &[&str] = &["a", "b", "c", "x", "y", "acc", "val"];
const FUNCS: &[&str] = &["f", "g", "h", "compute", "helper", "step"];
const FIELDS: &[&str] = &["fst", "snd", "size", "data"];
const TYPES: &[&str] = &["Int64", "Float64", "Any", "String"];
const ATTRS: &[&str] = &["loopA", "p", "hot"];
const STRUCTS: &[&str] = &["P", "Q", "Rec"];
const MODULES: &[&str] = &["M", "N"];
const BINOPS: &[&str] = &["+", "-", "*", "/", "==", "!=", "<", ">", "<=", ">="];

fn loc() -> SourceLoc {
    SourceLoc::new("gen.hl", 0)
}

fn sym(name: &str) -> Node {
    Node::symbol(name, loc())
}

fn block(stmts: Vec<Node>) -> Node {
    Node::block(stmts, loc())
}

fn pick(pool: &'static [&'static str]) -> impl Strategy<Value = &'static str> {
    prop::sample::select(pool)
}

fn arb_text() -> impl Strategy<Value = String> {
    let chars: Vec<char> = "abcxyz 0189.,!?$\"\\ntü".chars().collect();
    prop::collection::vec(prop::sample::select(chars), 0..8).prop_map(String::from_iter)
}

fn expr_leaf() -> BoxedStrategy<Node> {
    prop_oneof![
        (-100i64..100).prop_map(|v| Node::leaf(NodeKind::IntLit, Atom::Int(v), loc())),
        (-800i32..800).prop_map(|v| Node::leaf(
            NodeKind::FloatLit,
            Atom::Float(v as f64 / 8.0),
            loc()
        )),
        any::<bool>().prop_map(|b| Node::leaf(NodeKind::BoolLit, Atom::Bool(b), loc())),
        arb_text().prop_map(|s| Node::string(s, loc())),
        pick(VARS).prop_map(sym),
    ]
    .boxed()
}

fn expr_branch(inner: BoxedStrategy<Node>) -> BoxedStrategy<Node> {
    let binop = (pick(BINOPS), inner.clone(), inner.clone()).prop_map(|(op, l, r)| {
        Node::new(NodeKind::Call, vec![sym(op), l, r], loc())
    });
    let logic = (any::<bool>(), inner.clone(), inner.clone()).prop_map(|(is_and, l, r)| {
        let kind = if is_and { NodeKind::AndAnd } else { NodeKind::OrOr };
        Node::new(kind, vec![l, r], loc())
    });
    let range =
        (inner.clone(), inner.clone()).prop_map(|(l, r)| Node::new(NodeKind::Range, vec![l, r], loc()));
    // negating a literal would fold back into the literal on reparse, so
    // only negate names and calls
    let neg = pick(VARS).prop_map(|v| Node::new(NodeKind::Call, vec![sym("-"), sym(v)], loc()));
    let call = (pick(FUNCS), prop::collection::vec(inner.clone(), 0..3)).prop_map(|(f, args)| {
        let mut children = vec![sym(f)];
        children.extend(args);
        Node::new(NodeKind::Call, children, loc())
    });
    let index = (pick(VARS), inner.clone())
        .prop_map(|(v, i)| Node::new(NodeKind::IndexRef, vec![sym(v), i], loc()));
    let field = (pick(VARS), pick(FIELDS))
        .prop_map(|(v, f)| Node::new(NodeKind::FieldRef, vec![sym(v), sym(f)], loc()));
    let array = prop::collection::vec(inner.clone(), 0..3)
        .prop_map(|items| Node::new(NodeKind::ArrayLit, items, loc()));
    let tuple = prop::collection::vec(inner.clone(), 0..3)
        .prop_map(|items| Node::new(NodeKind::TupleLit, items, loc()));
    let record = prop::collection::vec((pick(VARS), inner.clone()), 1..3).prop_map(|pairs| {
        let mut children = Vec::new();
        for (k, v) in pairs {
            children.push(sym(k));
            children.push(v);
        }
        Node::new(NodeKind::MapLit, children, loc())
    });
    let interp = (
        prop::collection::vec((arb_text(), inner.clone()), 1..3),
        arb_text(),
    )
        .prop_map(|(parts, tail)| {
            let mut children = Vec::new();
            for (text, expr) in parts {
                if !text.is_empty() {
                    children.push(Node::string(text, loc()));
                }
                children.push(expr);
            }
            if !tail.is_empty() {
                children.push(Node::string(tail, loc()));
            }
            // same canonicalization the parser applies
            hlweave::syntax::normalize_interp(children, loc())
        });
    let lambda = (arb_params(), inner.clone()).prop_map(|(params, body)| {
        let mut l = Node::new(NodeKind::Lambda, vec![body], loc());
        l.params = params;
        l
    });
    let begin = prop::collection::vec(inner.clone(), 1..3).prop_map(block);
    let if_expr = (inner.clone(), inner.clone(), prop::option::of(inner.clone())).prop_map(
        |(cond, then, els)| {
            let mut children = vec![cond, block(vec![then])];
            if let Some(e) = els {
                children.push(block(vec![e]));
            }
            Node::new(NodeKind::If, children, loc())
        },
    );
    let throw = inner
        .clone()
        .prop_map(|e| Node::new(NodeKind::Throw, vec![e], loc()));
    let time = inner.prop_map(|e| Node::new(NodeKind::MacroCall, vec![sym("time"), e], loc()));
    prop_oneof![
        4 => binop,
        2 => logic,
        1 => range,
        1 => neg,
        4 => call,
        1 => index,
        1 => field,
        2 => array,
        1 => tuple,
        1 => record,
        2 => interp,
        1 => lambda,
        1 => begin,
        1 => if_expr,
        1 => throw,
        1 => time,
    ]
    .boxed()
}

pub fn arb_expr() -> BoxedStrategy<Node> {
    expr_leaf()
        .prop_recursive(3, 24, 4, |inner| expr_branch(inner.boxed()))
        .boxed()
}

fn arb_params() -> BoxedStrategy<Vec<Param>> {
    let pool: Vec<&'static str> = vec!["p1", "p2", "p3", "k1", "k2"];
    (
        prop::sample::subsequence(pool, 0..4),
        prop::collection::vec((prop::option::of(pick(TYPES)), any::<bool>()), 5),
        0usize..4,
        any::<bool>(),
    )
        .prop_map(|(names, options, kw_from, variadic)| {
            let n = names.len();
            let kw_from = kw_from.min(n);
            names
                .into_iter()
                .enumerate()
                .map(|(i, name)| {
                    let (ty, has_default) = options[i].clone();
                    let is_last_positional = i + 1 == kw_from;
                    Param {
                        name: name.to_string(),
                        type_name: ty.map(str::to_string),
                        variadic: variadic && is_last_positional && !has_default,
                        default: has_default.then(|| Node::int(7, loc())),
                        keyword: i >= kw_from,
                    }
                })
                .collect()
        })
        .boxed()
}

fn stmt_leaf() -> BoxedStrategy<Node> {
    let expr_stmt = arb_expr();
    let assign = (pick(VARS), arb_expr())
        .prop_map(|(v, e)| Node::new(NodeKind::Assign, vec![sym(v), e], loc()));
    let op_assign = (pick(VARS), arb_expr())
        .prop_map(|(v, e)| Node::new(NodeKind::OpAssign, vec![sym(v), e], loc()));
    let index_assign = (pick(VARS), arb_expr(), arb_expr())
        .prop_map(|(v, i, e)| Node::new(NodeKind::IndexAssign, vec![sym(v), i, e], loc()));
    let field_assign = (pick(VARS), pick(FIELDS), arb_expr())
        .prop_map(|(v, f, e)| Node::new(NodeKind::FieldAssign, vec![sym(v), sym(f), e], loc()));
    let ret = prop::option::of(arb_expr())
        .prop_map(|e| Node::new(NodeKind::Return, e.into_iter().collect(), loc()));
    let isdefined = pick(VARS).prop_map(|v| {
        Node::new(NodeKind::MacroCall, vec![sym("isdefined"), sym(v)], loc())
    });
    prop_oneof![
        3 => expr_stmt,
        3 => assign,
        1 => op_assign,
        1 => index_assign,
        1 => field_assign,
        1 => ret,
        1 => isdefined,
    ]
    .boxed()
}

fn stmt_branch(inner: BoxedStrategy<Node>) -> BoxedStrategy<Node> {
    let body = prop::collection::vec(inner.clone(), 1..3).prop_map(block);
    let for_stmt = (arb_for_clauses(), body.clone()).prop_map(|(clauses, body)| {
        let mut children = clauses;
        children.push(body);
        Node::new(NodeKind::For, children, loc())
    });
    let let_stmt = (
        prop::collection::vec((pick(VARS), arb_expr()), 0..3),
        body.clone(),
    )
        .prop_map(|(bindings, body)| {
            let mut children: Vec<Node> = bindings
                .into_iter()
                .map(|(v, e)| Node::new(NodeKind::Assign, vec![sym(v), e], loc()))
                .collect();
            children.push(body);
            Node::new(NodeKind::Let, children, loc())
        });
    let if_stmt = (arb_expr(), body.clone(), prop::option::of(body.clone())).prop_map(
        |(cond, then, els)| {
            let mut children = vec![cond, then];
            if let Some(e) = els {
                children.push(e);
            }
            Node::new(NodeKind::If, children, loc())
        },
    );
    let try_stmt = (
        body.clone(),
        prop::option::of(body.clone()),
        prop::option::of(body.clone()),
    )
        .prop_map(|(b, catch, finally)| {
            let mut children = vec![b];
            match (catch, finally) {
                (Some(c), f) => {
                    children.push(sym("err"));
                    children.push(c);
                    if let Some(f) = f {
                        children.push(f);
                    }
                }
                (None, Some(f)) => children.push(f),
                (None, None) => children.push(block(vec![sym("cleanup")])),
            }
            Node::new(NodeKind::TryCatchFinally, children, loc())
        });
    let func = (pick(FUNCS), arb_params(), body.clone()).prop_map(|(name, params, body)| {
        let mut f = Node::new(NodeKind::FunctionDef, vec![sym(name), body], loc());
        f.params = params;
        f
    });
    let short_func = (pick(FUNCS), arb_params(), arb_expr()).prop_map(|(name, params, e)| {
        let mut f = Node::new(NodeKind::ShortFuncDef, vec![sym(name), e], loc());
        f.params = params;
        f
    });
    let struct_def = (
        pick(STRUCTS),
        prop::sample::subsequence(FIELDS.to_vec(), 0..3),
        prop::collection::vec(prop::option::of(pick(TYPES)), 4),
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|(name, field_names, types, mutable, with_ctor)| {
            let params: Vec<Param> = field_names
                .iter()
                .enumerate()
                .map(|(i, f)| Param {
                    name: f.to_string(),
                    type_name: types[i].map(str::to_string),
                    ..Param::default()
                })
                .collect();
            let mut children = vec![sym(name)];
            if with_ctor {
                let ctor_params: Vec<Param> =
                    field_names.iter().map(|f| Param::named(f.to_string())).collect();
                let new_args: Vec<Node> = std::iter::once(sym("new"))
                    .chain(field_names.iter().map(|f| sym(f)))
                    .collect();
                let ctor_body = block(vec![Node::new(NodeKind::Call, new_args, loc())]);
                let mut ctor =
                    Node::new(NodeKind::FunctionDef, vec![sym(name), ctor_body], loc());
                ctor.params = ctor_params;
                children.push(ctor);
            }
            let mut s = Node::new(NodeKind::StructDef, children, loc());
            s.params = params;
            s.is_mutable = mutable;
            s
        });
    let module = (pick(MODULES), prop::collection::vec(inner.clone(), 1..3)).prop_map(
        |(name, stmts)| {
            let mut children = vec![sym(name)];
            children.extend(stmts);
            Node::new(NodeKind::Module, children, loc())
        },
    );
    let attr = (pick(ATTRS), inner).prop_map(|(tag, stmt)| {
        Node::new(
            NodeKind::AttrAnnot,
            vec![Node::string(tag, loc()), stmt],
            loc(),
        )
    });
    prop_oneof![
        2 => for_stmt,
        2 => let_stmt,
        2 => if_stmt,
        1 => try_stmt,
        3 => func,
        1 => short_func,
        1 => struct_def,
        1 => module,
        1 => attr,
    ]
    .boxed()
}

pub fn arb_stmt() -> BoxedStrategy<Node> {
    stmt_leaf()
        .prop_recursive(3, 16, 3, |inner| stmt_branch(inner.boxed()))
        .boxed()
}

/// A whole program: a Block of statements, as the parser would shape it
/// (minus LineInfo interleaving).
pub fn arb_program() -> BoxedStrategy<Node> {
    prop::collection::vec(arb_stmt(), 0..5).prop_map(block).boxed()
}

fn arb_for_clauses() -> BoxedStrategy<Vec<Node>> {
    prop::sample::subsequence(vec!["i", "j", "k"], 1..4)
        .prop_flat_map(|vars| {
            let n = vars.len();
            (
                Just(vars),
                prop::collection::vec((1i64..4, 1i64..9), n),
            )
        })
        .prop_map(|(vars, ranges)| {
            let mut out = Vec::new();
            for (v, (lo, hi)) in vars.into_iter().zip(ranges) {
                out.push(sym(v));
                out.push(Node::new(
                    NodeKind::Range,
                    vec![Node::int(lo, loc()), Node::int(hi, loc())],
                    loc(),
                ));
            }
            out
        })
        .boxed()
}

/// A standalone for loop with 1..3 iterator clauses, for the swap_loop
/// involution property.
pub fn arb_for_loop() -> BoxedStrategy<Node> {
    (arb_for_clauses(), prop::collection::vec(arb_expr(), 1..3))
        .prop_map(|(clauses, body_stmts)| {
            let mut children = clauses;
            children.push(block(body_stmts));
            Node::new(NodeKind::For, children, loc())
        })
        .boxed()
}

/// Aspect-file text pairing a random pointcut with a random fused advice
/// list; bodies are minimal but exercise every hole family.
pub fn arb_aspect_source() -> BoxedStrategy<String> {
    let pattern = prop_oneof![
        pick(FUNCS).prop_map(|n| format!(":{n}")),
        pick(VARS).prop_map(|n| format!(":{n}")),
        pick(STRUCTS).prop_map(|n| format!(":{n}")),
        pick(MODULES).prop_map(|n| format!(":{n}")),
        pick(ATTRS).prop_map(|n| format!(":{n}")),
        Just("\"\"".to_string()),
        Just("\"f\"".to_string()),
    ];
    let pointcut = prop_oneof![
        pattern.clone().prop_map(|p| format!("exec_func({p})")),
        pattern.clone().prop_map(|p| format!("call({p})")),
        pattern.clone().prop_map(|p| format!("assign({p})")),
        pattern.clone().prop_map(|p| format!("assign_ary({p})")),
        pattern.clone().prop_map(|p| format!("assign_st({p})")),
        pattern.clone().prop_map(|p| format!("ref_ary({p})")),
        pattern.clone().prop_map(|p| format!("ref_st({p})")),
        pattern.clone().prop_map(|p| format!("attr({p})")),
        pattern.clone().prop_map(|p| format!("module({p})")),
        pattern.prop_map(|p| format!("struct({p})")),
        prop::sample::select(vec![
            "xpath(\"//call\")",
            "xpath(\"//function\")",
            "xpath(\"//call[@argc='2']\")",
            "xpath(\"//*\")",
            "xpath(\"/module//assign\")",
        ])
        .prop_map(str::to_string),
    ];
    // at most one template per capped family (after_returning,
    // after_throwing, after, around); before and append repeat freely
    let befores = prop::sample::subsequence(
        vec![
            "advice: before { 0 }",
            "advice: before_args { length(@args.args) }",
        ],
        0..3,
    );
    let one_of = |options: Vec<&'static str>| {
        prop::option::of(prop::sample::select(options)).prop_map(|o| o.into_iter().collect::<Vec<_>>())
    };
    let after_r = one_of(vec![
        "advice: after_returning { @result }",
        "advice: after_returning_args { length(@args.args) }",
    ]);
    let throwing = one_of(vec![
        "advice: after_throwing { @exception }",
        "advice: after_throwing_args { length(@args.args) }",
    ]);
    let after = one_of(vec!["advice: after { 0 }", "advice: after_args { length(@args.args) }"]);
    let around = one_of(vec!["advice: around { @original }"]);
    let appends = prop::sample::subsequence(
        vec![
            "advice: append_front { extra_front }",
            "advice: append_back { extra_back }",
        ],
        0..3,
    );
    (pointcut, befores, after_r, throwing, after, around, appends)
        .prop_map(|(pc, b, r, t, a, ar, ap)| {
            let mut advices: Vec<&str> = Vec::new();
            advices.extend(b);
            advices.extend(r);
            advices.extend(t);
            advices.extend(a);
            advices.extend(ar);
            advices.extend(ap);
            if advices.is_empty() {
                advices.push("advice: nothing { }");
            }
            format!(
                "aspect \"gen\" {{\n  pointcut: {pc}\n  {}\n}}\n",
                advices.join("\n  ")
            )
        })
        .boxed()
}
