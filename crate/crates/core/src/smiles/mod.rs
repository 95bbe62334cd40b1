//! Subset SMILES: lexer, validating parser, valence model and descriptors.
//!
//! Supported: organic-subset atoms (`B C N O P S F Cl Br I`, aromatic
//! `b c n o s p`), bracket atoms with isotope, H count and charge, bonds
//! `- = # :`, branches, and ring closures (`1`–`9`, `%nn`). Stereochemistry,
//! wildcards and multi-fragment dots are recognised and rejected as
//! *unsupported*, which callers tally separately from plain syntax errors.

mod chem;
mod lexer;
mod parser;
mod writer;

use std::path::Path;

use thiserror::Error;

pub use chem::{
    implicit_hydrogens, molecular_weight, simple_descriptors, AtomicMassTable, Descriptors,
};
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::{parse, Atom, Bond, BondOrder, ParsedMol};
pub use writer::to_smiles;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SmilesError {
    #[error("empty SMILES string")]
    Empty,
    #[error("unknown character {character:?} at {position}")]
    Lex { position: usize, character: char },
    #[error("bracket atom opened at {position} is never closed")]
    UnterminatedBracket { position: usize },
    #[error("ring closure opened at {position} is never closed")]
    UnclosedRing { position: usize },
    #[error("unbalanced branch at {position}")]
    UnbalancedBranch { position: usize },
    #[error("valence exceeded for atom at {position}")]
    ValenceExceeded { position: usize },
    #[error("unexpected {lexeme:?} at {position}")]
    UnexpectedToken { position: usize, lexeme: String },
    #[error("unsupported SMILES feature {feature:?} at {position}")]
    Unsupported { position: usize, feature: String },
    #[error("element {0} missing from the atomic mass table")]
    UnknownElement(String),
}

impl SmilesError {
    /// Whether the string used syntax outside the supported subset.
    pub fn is_unsupported(&self) -> bool {
        matches!(self, SmilesError::Unsupported { .. })
    }

    /// Offending byte offset, when the error has one.
    pub fn position(&self) -> Option<usize> {
        match self {
            SmilesError::Lex { position, .. }
            | SmilesError::UnterminatedBracket { position }
            | SmilesError::UnclosedRing { position }
            | SmilesError::UnbalancedBranch { position }
            | SmilesError::ValenceExceeded { position }
            | SmilesError::UnexpectedToken { position, .. }
            | SmilesError::Unsupported { position, .. } => Some(*position),
            SmilesError::Empty | SmilesError::UnknownElement(_) => None,
        }
    }
}

/// Tokenize and parse in one call.
pub fn parse_smiles(s: &str) -> Result<ParsedMol, SmilesError> {
    parse(&tokenize(s)?)
}

/// Outcome of checking one string, as counted by the sample-quality metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Invalid,
    Unsupported,
}

pub fn classify(s: &str) -> Validity {
    match parse_smiles(s) {
        Ok(_) => Validity::Valid,
        Err(e) if e.is_unsupported() => Validity::Unsupported,
        Err(_) => Validity::Invalid,
    }
}

/// Strips all whitespace; generated strings are compared in this form.
pub fn normalize(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

const TOY_CORPUS: &str = include_str!("../../data/toy_corpus.smi");

/// Parses corpus text: one SMILES per line, `#` comment lines and blank lines skipped.
pub fn parse_corpus(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(normalize)
        .collect()
}

pub fn read_corpus(path: impl AsRef<Path>) -> std::io::Result<Vec<String>> {
    Ok(parse_corpus(&std::fs::read_to_string(path)?))
}

/// The bundled corpus of short valid molecules.
pub fn toy_corpus() -> Vec<String> {
    parse_corpus(TOY_CORPUS)
}

pub fn toy_corpus_text() -> &'static str {
    TOY_CORPUS
}
