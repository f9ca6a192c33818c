//! Command-line surface: `hlweave weave|run|match|dump-xml`.
//!
//! Aspects are given with repeatable `--aspects` flags; a `--then` marker
//! splits them into chained passes, so a later pass's pointcuts can match
//! code introduced by an earlier one. All diagnostics go to stderr; program
//! and artifact output goes to stdout (or `-o`).
//!
//! Exit codes: 0 success, 1 configuration/static error, 2 woven-program
//! runtime error.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::advice::{parse_aspect_file, Aspect};
use crate::interp::Interp;
use crate::pcxpath;
use crate::pointcut::scan_with_near_misses;
use crate::syntax::{parse, print_source_opts, Node};
use crate::weaver::{pre_weave, FsLoader, Weaver};

/// Resolved invocation settings shared by the weaving commands.
pub struct Config {
    pub aspect_files: Vec<PathBuf>,
    /// Pass boundaries: chain_groups partitions aspect_files in order.
    pub chain_groups: Vec<Vec<PathBuf>>,
    pub entry: String,
    pub output: Option<PathBuf>,
    pub emit_debug_lines: bool,
}

pub fn run() -> i32 {
    let args: Vec<OsString> = std::env::args_os().collect();
    dispatch(args)
}

fn dispatch(args: Vec<OsString>) -> i32 {
    let matches = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            // clap handles --help/--version by "erroring" with exit code 0
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match matches.subcommand() {
        Some(("weave", sub)) => cmd_weave(&config_from(sub), source_path(sub)),
        Some(("run", sub)) => cmd_run(&config_from(sub), source_path(sub)),
        Some(("match", sub)) => cmd_match(&config_from(sub), source_path(sub)),
        Some(("dump-xml", sub)) => cmd_dump_xml(source_path(sub)),
        _ => 1,
    }
}

fn cli() -> Command {
    let source = Arg::new("source")
        .required(true)
        .value_name("SOURCE.hl")
        .help("HL source file");
    let aspects = Arg::new("aspects")
        .long("aspects")
        .value_name("FILE.asp")
        .action(ArgAction::Append)
        .help("An aspect file; repeat the flag to add more, in order");
    let then = Arg::new("then")
        .long("then")
        .action(ArgAction::Count)
        .help("Pass boundary: aspects after --then weave over the previous passes' output");
    let entry = Arg::new("entry")
        .long("entry")
        .default_value("Main.main")
        .help("Entry function as a dotted path");
    Command::new("hlweave")
        .about("Aspect weaving toolchain for the HL mini-language")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("weave")
                .about("Weave aspects into a program and print the woven source")
                .arg(source.clone())
                .arg(aspects.clone())
                .arg(then.clone())
                .arg(
                    Arg::new("output")
                        .short('o')
                        .long("output")
                        .value_name("FILE")
                        .help("Write woven source here instead of stdout"),
                )
                .arg(
                    Arg::new("no-debug-lines")
                        .long("no-debug-lines")
                        .action(ArgAction::SetTrue)
                        .help("Omit line and provenance comments from the output"),
                ),
        )
        .subcommand(
            Command::new("run")
                .about("Weave aspects into a program and execute it")
                .arg(source.clone())
                .arg(aspects.clone())
                .arg(then.clone())
                .arg(entry),
        )
        .subcommand(
            Command::new("match")
                .about("List the join points each aspect matches, with near-miss diagnostics")
                .arg(source.clone())
                .arg(aspects)
                .arg(then),
        )
        .subcommand(
            Command::new("dump-xml")
                .about("Print the XML projection used by xpath pointcuts")
                .arg(source),
        )
}

fn source_path(matches: &ArgMatches) -> PathBuf {
    PathBuf::from(matches.get_one::<String>("source").expect("required"))
}

/// Rebuilds the ordered aspect list and its pass partition from the
/// interleaving of --aspects values and --then markers.
fn config_from(matches: &ArgMatches) -> Config {
    let mut events: Vec<(usize, Option<PathBuf>)> = Vec::new();
    if let (Some(indices), Some(values)) = (
        matches.indices_of("aspects"),
        matches.get_many::<String>("aspects"),
    ) {
        for (i, v) in indices.zip(values) {
            events.push((i, Some(PathBuf::from(v))));
        }
    }
    if let Some(indices) = matches.indices_of("then") {
        for i in indices {
            events.push((i, None));
        }
    }
    events.sort_by_key(|(i, _)| *i);

    let mut aspect_files = Vec::new();
    let mut groups: Vec<Vec<PathBuf>> = vec![Vec::new()];
    for (_, ev) in events {
        match ev {
            Some(path) => {
                aspect_files.push(path.clone());
                groups.last_mut().unwrap().push(path);
            }
            None => groups.push(Vec::new()),
        }
    }
    groups.retain(|g| !g.is_empty());

    Config {
        aspect_files,
        chain_groups: groups,
        entry: matches
            .try_get_one::<String>("entry")
            .ok()
            .flatten()
            .cloned()
            .unwrap_or_else(|| "Main.main".to_string()),
        output: matches
            .try_get_one::<String>("output")
            .ok()
            .flatten()
            .map(PathBuf::from),
        emit_debug_lines: !matches.get_flag_safe("no-debug-lines"),
    }
}

trait FlagSafe {
    fn get_flag_safe(&self, name: &str) -> bool;
}

impl FlagSafe for ArgMatches {
    fn get_flag_safe(&self, name: &str) -> bool {
        self.try_get_one::<bool>(name)
            .ok()
            .flatten()
            .copied()
            .unwrap_or(false)
    }
}

fn fail(message: impl std::fmt::Display) -> i32 {
    eprintln!("hlweave: {message}");
    1
}

fn load_program(path: &PathBuf) -> Result<Node, i32> {
    let text = fs::read_to_string(path)
        .map_err(|e| fail(format!("cannot read '{}': {e}", path.display())))?;
    let parsed =
        parse(&text, &path.to_string_lossy()).map_err(|e| fail(format!("{e}")))?;
    pre_weave(&parsed, &FsLoader).map_err(|e| fail(format!("{e}")))
}

fn load_passes(config: &Config) -> Result<Vec<Vec<Aspect>>, i32> {
    let mut passes = Vec::new();
    for group in &config.chain_groups {
        let mut pass = Vec::new();
        for file in group {
            let text = fs::read_to_string(file)
                .map_err(|e| fail(format!("aspect file not found '{}': {e}", file.display())))?;
            let aspects = parse_aspect_file(&text, &file.to_string_lossy())
                .map_err(|e| fail(format!("{e}")))?;
            pass.extend(aspects);
        }
        passes.push(pass);
    }
    Ok(passes)
}

fn weave_program(config: &Config, source: &PathBuf) -> Result<Node, i32> {
    let program = load_program(source)?;
    let passes = load_passes(config)?;
    let mut weaver = Weaver::new();
    let woven = weaver
        .weave_chain(&program, &passes)
        .map_err(|e| fail(format!("{e}")))?;
    for w in &weaver.warnings {
        eprintln!("hlweave: warning: {}: {} ({})", w.loc, w.message, w.pointcut);
    }
    Ok(woven)
}

/// Weaves and prints (or saves) the woven source.
pub fn cmd_weave(config: &Config, source: PathBuf) -> i32 {
    let woven = match weave_program(config, &source) {
        Ok(n) => n,
        Err(code) => return code,
    };
    let text = match print_source_opts(&woven, config.emit_debug_lines) {
        Ok(t) => t,
        Err(e) => return fail(format!("{e}")),
    };
    match &config.output {
        Some(path) => {
            if let Err(e) = fs::write(path, text) {
                return fail(format!("cannot write '{}': {e}", path.display()));
            }
        }
        None => print!("{text}"),
    }
    0
}

/// Weaves, then interprets. The woven program's stdout goes to stdout.
pub fn cmd_run(config: &Config, source: PathBuf) -> i32 {
    let woven = match weave_program(config, &source) {
        Ok(n) => n,
        Err(code) => return code,
    };
    let result = Interp::run(&woven, &config.entry);
    print!("{}", result.stdout);
    match result.error {
        None => 0,
        Some(err) if err.entry_failure => fail(err.message),
        Some(err) => {
            eprintln!("hlweave: uncaught exception: {}", err.message);
            for loc in err.stack.iter().rev() {
                eprintln!("  at {loc}");
            }
            2
        }
    }
}

/// Lists the join points each aspect matches over the pre-weaved program,
/// plus exec_func near-misses whose argument matchers failed.
pub fn cmd_match(config: &Config, source: PathBuf) -> i32 {
    let program = match load_program(&source) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let passes = match load_passes(config) {
        Ok(p) => p,
        Err(code) => return code,
    };
    for aspect in passes.iter().flatten() {
        let (matches, misses) = scan_with_near_misses(&aspect.pointcut, &program);
        for (_, jp) in matches {
            println!(
                "{}:{} {} {} <- {} ({})",
                jp.loc.file,
                jp.loc.line,
                jp.kind.as_str(),
                jp.name,
                aspect.name,
                jp.pointcut_description
            );
        }
        for miss in misses {
            println!(
                "{}:{} near-miss {} <- {} ({} @ {}:{}): argument matchers did not match",
                miss.loc.file,
                miss.loc.line,
                miss.name,
                aspect.name,
                miss.pointcut_description,
                aspect.file,
                aspect.line
            );
        }
    }
    0
}

/// Prints the pcxpath projection of the program.
pub fn cmd_dump_xml(source: PathBuf) -> i32 {
    let program = match load_program(&source) {
        Ok(p) => p,
        Err(code) => return code,
    };
    print!("{}", pcxpath::to_xml(&pcxpath::project(&program)));
    0
}
