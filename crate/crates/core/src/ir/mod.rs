//! Textual IR frontend.
//!
//! Parses a fixed subset of LLVM-style textual IR (`.ll`) and linear dynamic
//! traces (`.trace`, one executed instruction per line) into a flat,
//! index-ordered instruction sequence. Opcodes outside the supported subset
//! are kept as nodes: the opcode is preserved and every `%` token on the line
//! becomes a source.

mod parse;
mod print;
mod types;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

pub use parse::{parse_ll, parse_trace, SUPPORTED_OPCODES};
pub use print::print_unit;
pub use types::{sizeof_type, ParseTypeError, ValueType, DEFAULT_WEIGHT, POINTER_BYTES};


#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IrError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("no instructions found")]
    EmptyUnit,
}

/// A virtual register, identified by its name within a function.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Register {
    pub name: String,
    /// Enclosing function name; empty outside any `define` body.
    pub scope: String,
}

impl Register {
    pub fn new(name: impl Into<String>, scope: impl Into<String>) -> Self {
        Register {
            name: name.into(),
            scope: scope.into(),
        }
    }
}

impl fmt::Display for Register {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    /// Position in the unit, dense from 0.
    pub index: usize,
    pub opcode: String,
    pub dest: Option<Register>,
    pub sources: Vec<Register>,
    /// Block labels referenced by `br` and `phi`.
    pub targets: Vec<String>,
    /// Direct callee of a `call`.
    pub callee: Option<String>,
    pub result_type: ValueType,
    /// From a trailing `; addr=0x..` annotation.
    pub mem_addr: Option<u64>,
    pub function: String,
    pub block: String,
}

impl Instruction {
    pub fn is_terminator(&self) -> bool {
        matches!(self.opcode.as_str(), "br" | "switch" | "ret")
    }

    pub fn is_supported(&self) -> bool {
        SUPPORTED_OPCODES.contains(&self.opcode.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceFormat {
    StaticLl,
    DynamicTrace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceUnit {
    pub origin: PathBuf,
    pub format: TraceFormat,
    pub instructions: Vec<Instruction>,
    /// Registers declared as function parameters.
    pub arguments: BTreeSet<Register>,
    /// Registers used before any definition in the unit and not parameters.
    pub externals: BTreeSet<Register>,
}

impl TraceUnit {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }
}
