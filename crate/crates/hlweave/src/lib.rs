//! hlweave — an aspect weaving toolchain for the HL mini-language.
//!
//! HL is a small Julia-like language (modules, functions, structs, loops,
//! exceptions). hlweave locates join points in HL programs with pointcuts,
//! attaches advice to them, and rewrites the syntax tree ahead of time in a
//! three-stage pre-weave → weave → emit pipeline. Woven programs are plain
//! HL and run on the bundled tree-walking interpreter.
//!
//! Module map:
//!
//! - [`syntax`] — lexer, parser, canonical printer, structural equality
//! - [`interp`] — tree-walking evaluator with captured stdout
//! - [`pointcut`] — the ten standard pointcut kinds and the AST crawler
//! - [`pcxpath`] — XML projection of the AST and the XPath-dialect engine
//! - [`advice`] — advice kinds, templates with splice holes, fusion, and
//!   the `.asp` aspect-file parser
//! - [`weaver`] — include resolution, @attr expansion, aj-node insertion,
//!   and elaboration of aj nodes into standard HL
//! - [`cli`] — the `hlweave` command-line surface

pub mod advice;
pub mod cli;
pub mod interp;
pub mod pcxpath;
pub mod pointcut;
pub mod syntax;
pub mod weaver;
