use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Pointer width of the fixed 64-bit data layout.
pub const POINTER_BYTES: u64 = 8;

/// Weight assigned to values without a known size.
pub const DEFAULT_WEIGHT: u64 = 1;

const INT_WIDTHS: [u32; 5] = [1, 8, 16, 32, 64];

/// The value types the frontend distinguishes. Anything else the parser
/// meets (arrays, structs, named types, odd integer widths) is `Opaque`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ValueType {
    Int(u32),
    Float32,
    Float64,
    Pointer,
    Vector { count: u32, elem: Box<ValueType> },
    Void,
    Opaque,
}

impl ValueType {
    /// Integer type of `bits` width, or `Opaque` for widths outside
    /// {1, 8, 16, 32, 64}.
    pub fn int(bits: u32) -> Self {
        if INT_WIDTHS.contains(&bits) {
            ValueType::Int(bits)
        } else {
            ValueType::Opaque
        }
    }

    pub fn vector(count: u32, elem: ValueType) -> Self {
        if count == 0 {
            return ValueType::Opaque;
        }
        ValueType::Vector {
            count,
            elem: Box::new(elem),
        }
    }

    pub fn is_void(&self) -> bool {
        matches!(self, ValueType::Void)
    }
}

/// Size in bytes of a value of type `t`; this is the edge weight of every
/// dependency produced by a value of that type.
pub fn sizeof_type(t: &ValueType) -> u64 {
    match t {
        ValueType::Int(bits) => u64::from(*bits).div_ceil(8),
        ValueType::Float32 => 4,
        ValueType::Float64 => 8,
        ValueType::Pointer => POINTER_BYTES,
        ValueType::Vector { count, elem } => u64::from(*count) * sizeof_type(elem),
        ValueType::Void | ValueType::Opaque => DEFAULT_WEIGHT,
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::Int(bits) => write!(f, "i{bits}"),
            ValueType::Float32 => f.write_str("float"),
            ValueType::Float64 => f.write_str("double"),
            ValueType::Pointer => f.write_str("ptr"),
            ValueType::Vector { count, elem } => write!(f, "<{count} x {elem}>"),
            ValueType::Void => f.write_str("void"),
            ValueType::Opaque => f.write_str("opaque"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unrecognized type `{0}`")]
pub struct ParseTypeError(pub String);

impl FromStr for ValueType {
    type Err = ParseTypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // Named types are only meaningful inside IR text.
        if s.starts_with('%') {
            return Err(ParseTypeError(s.to_string()));
        }
        match parse_type_prefix(s) {
            Some((t, rest)) if rest.is_empty() => Ok(t),
            _ => Err(ParseTypeError(s.to_string())),
        }
    }
}

impl Serialize for ValueType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ValueType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$' | '-')
}

/// Splits the leading `[A-Za-z0-9_.]` word off `s`.
pub(crate) fn leading_word(s: &str) -> (&str, &str) {
    let end = s
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.'))
        .unwrap_or(s.len());
    (&s[..end], &s[end..])
}

/// Index one past the bracket closing the one that opens `s`.
pub(crate) fn matching_close(s: &str, open: char, close: char) -> Option<usize> {
    let mut depth = 0usize;
    for (i, c) in s.char_indices() {
        if c == open {
            depth += 1;
        } else if c == close {
            depth = depth.checked_sub(1)?;
            if depth == 0 {
                return Some(i + c.len_utf8());
            }
        }
    }
    None
}

/// Parses a type at the start of `s`, returning it with the remaining text
/// (left-trimmed). Returns `None` when `s` does not begin with a type.
pub(crate) fn parse_type_prefix(s: &str) -> Option<(ValueType, &str)> {
    let s = s.trim_start();
    let (mut ty, mut rest) = parse_base_type(s)?;
    loop {
        let r = rest.trim_start();
        if let Some(after) = r.strip_prefix("addrspace(") {
            let close = after.find(')')?;
            let r2 = after[close + 1..].trim_start();
            if r2.starts_with('*') {
                rest = r2;
                continue;
            }
            // `ptr addrspace(N)` is still a pointer; anything else is not ours.
            if ty == ValueType::Pointer {
                rest = r2;
                continue;
            }
            return Some((ty, r));
        }
        if let Some(after) = r.strip_prefix('*') {
            ty = ValueType::Pointer;
            rest = after;
            continue;
        }
        // Function type `ret (params)*`; only meaningful as a pointer.
        if r.starts_with('(') {
            let close = matching_close(r, '(', ')')?;
            let after = r[close..].trim_start();
            if let Some(after) = after.strip_prefix('*') {
                ty = ValueType::Pointer;
                rest = after;
                continue;
            }
        }
        return Some((ty, r));
    }
}

fn parse_base_type(s: &str) -> Option<(ValueType, &str)> {
    let first = s.chars().next()?;
    match first {
        '<' => {
            if s.starts_with("<{") {
                let close = matching_close(s, '<', '>')?;
                return Some((ValueType::Opaque, &s[close..]));
            }
            let close = matching_close(s, '<', '>')?;
            let inner = s[1..close - 1].trim();
            let (count, after) = leading_word(inner);
            let count: u32 = count.parse().ok()?;
            let after = after.trim_start().strip_prefix('x')?;
            let (elem, tail) = parse_type_prefix(after)?;
            if !tail.trim().is_empty() {
                return None;
            }
            Some((ValueType::vector(count, elem), &s[close..]))
        }
        '[' => {
            let close = matching_close(s, '[', ']')?;
            let inner = s[1..close - 1].trim();
            let (count, after) = leading_word(inner);
            count.parse::<u64>().ok()?;
            after.trim_start().strip_prefix('x')?;
            Some((ValueType::Opaque, &s[close..]))
        }
        '{' => {
            let close = matching_close(s, '{', '}')?;
            Some((ValueType::Opaque, &s[close..]))
        }
        '%' => {
            // Named struct type. Only reached where the grammar expects a type.
            let end = s[1..]
                .find(|c: char| !is_ident_char(c))
                .map_or(s.len(), |i| i + 1);
            if end == 1 {
                return None;
            }
            Some((ValueType::Opaque, &s[end..]))
        }
        _ => {
            let (word, rest) = leading_word(s);
            let ty = match word {
                "float" => ValueType::Float32,
                "double" => ValueType::Float64,
                "ptr" => ValueType::Pointer,
                "void" => ValueType::Void,
                "opaque" | "half" | "bfloat" | "fp128" | "x86_fp80" | "ppc_fp128" => {
                    ValueType::Opaque
                }
                w if w.len() > 1 && w.starts_with('i') => {
                    let bits: u32 = w[1..].parse().ok()?;
                    ValueType::int(bits)
                }
                _ => return None,
            };
            Some((ty, rest))
        }
    }
}
