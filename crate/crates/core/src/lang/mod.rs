//! WhileLang: syntax tree, parser, type checker, printer and interpreter.

pub mod ast;
pub mod interp;
pub mod lexer;
pub mod parser;
pub mod printer;
pub mod simplify;
pub mod typeck;
pub mod value;

use std::collections::HashMap;

use crate::annotate::{AnnotatedProgram, Label};
use crate::error::{Error, Result};
use ast::{LabelId, LocationId, Program};

/// Parses and type-checks a plain program. Label pragmas are rejected.
pub fn parse(src: &str) -> Result<Program> {
    let ap = parse_annotated(src)?;
    if let Some(l) = ap.labels.first() {
        return Err(Error::Label(format!(
            "label {} found in a plain program; load it as annotated",
            l.id
        )));
    }
    Ok(ap.program)
}

/// Parses and type-checks a program that may carry label pragmas.
pub fn parse_annotated(src: &str) -> Result<AnnotatedProgram> {
    let parsed = parser::parse_source(src)?;
    let mut preds = HashMap::new();
    for l in &parsed.labels {
        if preds.insert(l.id, l.predicate.clone()).is_some() {
            return Err(Error::Label(format!("duplicate label id {}", l.id)));
        }
    }
    let mut program = parsed.program;
    typeck::check(&mut program, &preds)?;
    let mut locs: HashMap<LabelId, LocationId> = HashMap::new();
    program.walk(&mut |_, s| {
        if let Some(id) = s.label_id() {
            locs.insert(id, s.loc);
        }
    });
    let mut labels: Vec<Label> = parsed
        .labels
        .iter()
        .map(|p| parser::pragma_to_label(p, locs[&p.id]))
        .collect();
    labels.sort_by_key(|l| l.id);
    Ok(AnnotatedProgram { program, labels })
}
