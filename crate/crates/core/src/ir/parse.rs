use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use super::types::{is_ident_char, leading_word, matching_close, parse_type_prefix};
use super::{Instruction, IrError, Register, TraceFormat, TraceUnit, ValueType};

/// Opcodes parsed into full instruction records. Everything else falls back
/// to opcode + register tokens.
pub const SUPPORTED_OPCODES: &[&str] = &[
    "add", "sub", "mul", "udiv", "sdiv", "urem", "srem", "fadd", "fsub", "fmul", "fdiv", "frem",
    "fneg", "and", "or", "xor", "shl", "lshr", "ashr", "icmp", "fcmp", "select", "phi", "zext",
    "sext", "trunc", "bitcast", "fptrunc", "fpext", "fptoui", "fptosi", "uitofp", "sitofp",
    "ptrtoint", "inttoptr", "freeze", "load", "store", "getelementptr", "alloca", "call", "br",
    "ret",
];

const CASTS: &[&str] = &[
    "zext", "sext", "trunc", "bitcast", "fptrunc", "fpext", "fptoui", "fptosi", "uitofp", "sitofp",
    "ptrtoint", "inttoptr",
];

const FLAGS: &[&str] = &[
    "nsw", "nuw", "exact", "disjoint", "samesign", "fast", "nnan", "ninf", "nsz", "arcp",
    "contract", "afn", "reassoc", "inbounds", "nusw", "volatile", "atomic",
];

const PREDICATES: &[&str] = &[
    "eq", "ne", "ugt", "uge", "ult", "ule", "sgt", "sge", "slt", "sle", "oeq", "ogt", "oge", "olt",
    "ole", "one", "ord", "ueq", "une", "uno", "true", "false",
];

const TOP_LEVEL_KEYWORDS: &[&str] = &[
    "declare",
    "target",
    "source_filename",
    "attributes",
    "module",
    "uselistorder",
    "uselistorder_bb",
];

/// Parses a textual `.ll` module (or a bare fragment of instruction lines).
pub fn parse_ll(text: &str, origin: impl AsRef<Path>) -> Result<TraceUnit, IrError> {
    parse_unit(text, origin.as_ref(), TraceFormat::StaticLl)
}

/// Parses a dynamic trace: one executed instruction per line, registers may
/// be redefined, and load/store lines may carry `; addr=0x..`.
pub fn parse_trace(text: &str, origin: impl AsRef<Path>) -> Result<TraceUnit, IrError> {
    parse_unit(text, origin.as_ref(), TraceFormat::DynamicTrace)
}

fn parse_unit(text: &str, origin: &Path, format: TraceFormat) -> Result<TraceUnit, IrError> {
    let mut instructions = Vec::new();
    let mut arguments = BTreeSet::new();
    let mut externals = BTreeSet::new();
    let mut defined: HashSet<Register> = HashSet::new();
    let mut function: Option<String> = None;
    let mut block = String::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let (code, comment) = split_comment(raw);
        let code = code.trim();
        if code.is_empty() {
            continue;
        }
        let malformed = |reason: &str| IrError::MalformedLine {
            line: line_no,
            reason: reason.to_string(),
        };

        if code.starts_with("define ") || code.starts_with("define\t") {
            let (name, params) = parse_define(code).map_err(|r| malformed(&r))?;
            for p in params {
                arguments.insert(Register::new(p, name.clone()));
            }
            function = Some(name);
            block = "entry".to_string();
            continue;
        }
        if code == "}" {
            function = None;
            block.clear();
            continue;
        }
        if let Some(label) = parse_label(code) {
            block = label;
            continue;
        }
        if function.is_none() && is_top_level_line(code) {
            continue;
        }

        let scope = function.as_deref().unwrap_or("");
        let mem_addr = match comment {
            Some(c) => parse_addr_annotation(c).map_err(|r| malformed(&r))?,
            None => None,
        };
        let parsed = parse_instruction(code, scope).map_err(|r| malformed(&r))?;

        for src in &parsed.sources {
            if !defined.contains(src) && !arguments.contains(src) {
                externals.insert(src.clone());
            }
        }
        if let Some(d) = &parsed.dest {
            defined.insert(d.clone());
        }
        instructions.push(Instruction {
            index: instructions.len(),
            opcode: parsed.opcode,
            dest: parsed.dest,
            sources: parsed.sources,
            targets: parsed.targets,
            callee: parsed.callee,
            result_type: parsed.result_type,
            mem_addr,
            function: scope.to_string(),
            block: block.clone(),
        });
    }

    if instructions.is_empty() {
        return Err(IrError::EmptyUnit);
    }
    Ok(TraceUnit {
        origin: origin.to_path_buf(),
        format,
        instructions,
        arguments,
        externals,
    })
}

struct Parsed {
    opcode: String,
    dest: Option<Register>,
    sources: Vec<Register>,
    targets: Vec<String>,
    callee: Option<String>,
    result_type: ValueType,
}

fn split_comment(line: &str) -> (&str, Option<&str>) {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            ';' if !in_quotes => return (&line[..i], Some(&line[i + 1..])),
            _ => {}
        }
    }
    (line, None)
}

fn parse_addr_annotation(comment: &str) -> Result<Option<u64>, String> {
    let Some(pos) = comment.find("addr=") else {
        return Ok(None);
    };
    let value = &comment[pos + "addr=".len()..];
    let Some(hex) = value
        .strip_prefix("0x")
        .or_else(|| value.strip_prefix("0X"))
    else {
        return Err("address annotation must be hexadecimal (addr=0x..)".into());
    };
    let end = hex
        .find(|c: char| !c.is_ascii_hexdigit())
        .unwrap_or(hex.len());
    u64::from_str_radix(&hex[..end], 16)
        .map(Some)
        .map_err(|_| "invalid address annotation".to_string())
}

fn parse_label(code: &str) -> Option<String> {
    let body = code.strip_suffix(':')?;
    if let Some(q) = body.strip_prefix('"').and_then(|b| b.strip_suffix('"')) {
        return Some(q.to_string());
    }
    if !body.is_empty() && body.chars().all(is_ident_char) {
        Some(body.to_string())
    } else {
        None
    }
}

fn is_top_level_line(code: &str) -> bool {
    if code.starts_with(['!', '@', '$', '#']) {
        return true;
    }
    let (word, _) = leading_word(code);
    if TOP_LEVEL_KEYWORDS.contains(&word) {
        return true;
    }
    // `%name = type {...}`
    if let Some((_, rest)) = take_register(code) {
        if let Some(rhs) = rest.trim_start().strip_prefix('=') {
            return leading_word(rhs.trim_start()).0 == "type";
        }
    }
    false
}

fn parse_define(code: &str) -> Result<(String, Vec<String>), String> {
    let at = code.find('@').ok_or("function header without a name")?;
    let after = &code[at + 1..];
    let (name, rest) = if let Some(q) = after.strip_prefix('"') {
        let end = q.find('"').ok_or("unterminated function name")?;
        (q[..end].to_string(), &q[end + 1..])
    } else {
        let end = after
            .find(|c: char| !is_ident_char(c))
            .unwrap_or(after.len());
        (after[..end].to_string(), &after[end..])
    };
    if name.is_empty() {
        return Err("function header without a name".into());
    }
    let rest = rest.trim_start();
    if !rest.starts_with('(') {
        return Err("function header without a parameter list".into());
    }
    let close = matching_close(rest, '(', ')').ok_or("unbalanced parameter list")?;
    let mut params = Vec::new();
    for seg in split_top_level(&rest[1..close - 1]) {
        if let Some(op) = parse_operand(seg) {
            if let Some(r) = op.reg {
                params.push(r);
            }
        }
    }
    Ok((name, params))
}

/// Takes a `%name` or `%"quoted name"` token from the start of `s`.
fn take_register(s: &str) -> Option<(String, &str)> {
    let after = s.strip_prefix('%')?;
    if let Some(q) = after.strip_prefix('"') {
        let end = q.find('"')?;
        return Some((q[..end].to_string(), &q[end + 1..]));
    }
    let end = after
        .find(|c: char| !is_ident_char(c))
        .unwrap_or(after.len());
    if end == 0 {
        return None;
    }
    Some((after[..end].to_string(), &after[end..]))
}

/// Splits on commas that are not nested in brackets.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' | '{' | '<' => depth += 1,
            ')' | ']' | '}' | '>' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    if out.len() == 1 && out[0].trim().is_empty() {
        out.clear();
    }
    out
}

/// Whitespace-separated tokens at bracket depth 0, with byte offsets.
fn top_level_tokens(s: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start: Option<usize> = None;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' | '{' | '<' => {
                depth += 1;
                start.get_or_insert(i);
            }
            ')' | ']' | '}' | '>' => depth -= 1,
            c if c.is_whitespace() && depth == 0 => {
                if let Some(st) = start.take() {
                    out.push((st, &s[st..i]));
                }
            }
            _ => {
                start.get_or_insert(i);
            }
        }
    }
    if let Some(st) = start {
        out.push((st, &s[st..]));
    }
    out
}

/// One comma-separated operand: optional type, a value, and for casts an
/// optional `to <ty>` suffix.
struct Operand {
    ty: Option<ValueType>,
    reg: Option<String>,
    has_value: bool,
    cast_to: Option<ValueType>,
}

fn parse_operand(seg: &str) -> Option<Operand> {
    let seg = seg.trim();
    if seg.is_empty() {
        return None;
    }
    // A leading `%` is a register unless more tokens follow, in which case it
    // is a named type (`%struct.S* %p`).
    let bare_register = seg.starts_with('%') && {
        let tokens = top_level_tokens(seg);
        tokens.len() == 1 || tokens.get(1).is_some_and(|(_, t)| *t == "to")
    };
    let (ty, body) = if bare_register {
        (None, seg)
    } else {
        match parse_type_prefix(seg) {
            Some((t, rest)) => (Some(t), rest),
            None => (None, seg),
        }
    };
    let tokens = top_level_tokens(body);
    let to_pos = tokens.iter().position(|(_, t)| *t == "to");
    let value_tokens = &tokens[..to_pos.unwrap_or(tokens.len())];
    let cast_to = to_pos
        .and_then(|p| tokens.get(p + 1))
        .and_then(|(off, _)| parse_type_prefix(&body[*off..]))
        .map(|(t, _)| t);
    let reg = value_tokens
        .iter()
        .find_map(|(_, t)| take_register(t).map(|(name, _)| name));
    Some(Operand {
        ty,
        reg,
        has_value: !value_tokens.is_empty(),
        cast_to,
    })
}

fn skip_words<'a>(mut s: &'a str, words: &[&str]) -> &'a str {
    loop {
        let t = s.trim_start();
        let (w, rest) = leading_word(t);
        if !w.is_empty() && words.contains(&w) {
            s = rest;
        } else {
            return t;
        }
    }
}

fn parse_instruction(code: &str, scope: &str) -> Result<Parsed, String> {
    let reg = |name: String| Register::new(name, scope);

    let (dest, body) = if code.starts_with('%') {
        let (name, rest) = take_register(code).ok_or("invalid destination register")?;
        let rhs = rest
            .trim_start()
            .strip_prefix('=')
            .ok_or("expected `=` after destination register")?;
        (Some(reg(name)), rhs.trim_start())
    } else {
        (None, code)
    };
    if body.is_empty() {
        return Err("missing opcode".into());
    }
    if !body.starts_with(|c: char| c.is_ascii_alphabetic()) {
        return Err("expected an opcode".into());
    }
    let (word, mut rest) = leading_word(body);
    let mut opcode = word.to_ascii_lowercase();
    if matches!(opcode.as_str(), "tail" | "musttail" | "notail") {
        let (next, r) = leading_word(rest.trim_start());
        if next != "call" {
            return Err(format!("expected `call` after `{opcode}`"));
        }
        opcode = "call".to_string();
        rest = r;
    }
    // Opcodes are words; `add.x` style tokens are fine, but an opcode must be
    // separated from its operands.
    if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
        return Err("expected whitespace after opcode".into());
    }

    let shape = match opcode.as_str() {
        "load" => parse_load(rest)?,
        "store" => parse_store(rest)?,
        "getelementptr" => parse_gep(rest)?,
        "alloca" => parse_alloca(rest)?,
        "call" => parse_call(rest)?,
        "br" => parse_br(rest)?,
        "ret" => parse_ret(rest)?,
        "phi" => parse_phi(rest)?,
        op if SUPPORTED_OPCODES.contains(&op) => parse_generic(op, rest)?,
        _ => fallback(rest, dest.as_ref().map(|d| d.name.as_str())),
    };

    let value_less = match opcode.as_str() {
        "store" | "br" | "ret" => true,
        "call" => shape.result_type.is_void(),
        _ => false,
    };
    let supported = SUPPORTED_OPCODES.contains(&opcode.as_str());
    if supported && value_less && dest.is_some() {
        return Err(format!("`{opcode}` does not produce a value"));
    }
    if supported && !value_less && opcode != "call" && dest.is_none() {
        return Err(format!("`{opcode}` requires a destination register"));
    }

    Ok(Parsed {
        opcode,
        dest,
        sources: shape.sources.into_iter().map(reg).collect(),
        targets: shape.targets,
        callee: shape.callee,
        result_type: shape.result_type,
    })
}

struct Shape {
    sources: Vec<String>,
    targets: Vec<String>,
    callee: Option<String>,
    result_type: ValueType,
}

impl Shape {
    fn new(result_type: ValueType) -> Self {
        Shape {
            sources: Vec::new(),
            targets: Vec::new(),
            callee: None,
            result_type,
        }
    }
}

fn fallback(rest: &str, dest: Option<&str>) -> Shape {
    let mut shape = Shape::new(ValueType::Opaque);
    let mut s = rest;
    while let Some(pos) = s.find('%') {
        match take_register(&s[pos..]) {
            Some((name, after)) => {
                if Some(name.as_str()) != dest {
                    shape.sources.push(name);
                }
                s = after;
            }
            None => s = &s[pos + 1..],
        }
    }
    shape
}

fn leading_type(s: &str) -> Result<(ValueType, &str), String> {
    parse_type_prefix(s).ok_or_else(|| "expected a type".to_string())
}

fn parse_generic(op: &str, rest: &str) -> Result<Shape, String> {
    let mut s = skip_words(rest, FLAGS);
    if op == "icmp" || op == "fcmp" {
        s = skip_words(s, PREDICATES);
    }
    let (ty, s) = leading_type(s)?;
    let segments = split_top_level(s);
    if segments.is_empty() {
        return Err(format!("`{op}` needs at least one operand"));
    }
    // The leading type belongs to the first operand.
    let mut operands = Vec::with_capacity(segments.len());
    for (i, seg) in segments.iter().enumerate() {
        let op = if i == 0 {
            parse_operand_untyped(seg)
        } else {
            parse_operand(seg)
        };
        match op {
            Some(o) if o.has_value => operands.push(o),
            _ => return Err("empty operand".into()),
        }
    }

    let result_type = match op {
        "icmp" | "fcmp" => match &ty {
            ValueType::Vector { count, .. } => ValueType::vector(*count, ValueType::Int(1)),
            _ => ValueType::Int(1),
        },
        "select" => operands
            .get(1)
            .and_then(|o| o.ty.clone())
            .unwrap_or_else(|| ty.clone()),
        c if CASTS.contains(&c) => operands[0].cast_to.clone().unwrap_or_else(|| ty.clone()),
        _ => ty,
    };
    let mut shape = Shape::new(result_type);
    shape.sources = operands.into_iter().filter_map(|o| o.reg).collect();
    Ok(shape)
}

/// Operand whose type was already consumed.
fn parse_operand_untyped(seg: &str) -> Option<Operand> {
    let seg = seg.trim();
    if seg.is_empty() {
        return None;
    }
    let tokens = top_level_tokens(seg);
    let to_pos = tokens.iter().position(|(_, t)| *t == "to");
    let value_tokens = &tokens[..to_pos.unwrap_or(tokens.len())];
    let cast_to = to_pos
        .and_then(|p| tokens.get(p + 1))
        .and_then(|(off, _)| parse_type_prefix(&seg[*off..]))
        .map(|(t, _)| t);
    Some(Operand {
        ty: None,
        reg: value_tokens
            .first()
            .and_then(|(_, t)| take_register(t))
            .map(|(n, _)| n),
        has_value: !value_tokens.is_empty(),
        cast_to,
    })
}

fn parse_phi(rest: &str) -> Result<Shape, String> {
    let s = skip_words(rest, FLAGS);
    let (ty, mut s) = leading_type(s)?;
    let mut shape = Shape::new(ty);
    loop {
        s = s.trim_start();
        if s.is_empty() {
            break;
        }
        if !s.starts_with('[') {
            return Err("expected `[ value, %label ]` in phi".into());
        }
        let close = matching_close(s, '[', ']').ok_or("unbalanced `[` in phi")?;
        let parts = split_top_level(&s[1..close - 1]);
        if parts.len() != 2 {
            return Err("phi incoming entry must be `[ value, %label ]`".into());
        }
        let value = parts[0].trim();
        if value.is_empty() {
            return Err("phi incoming entry without a value".into());
        }
        if let Some((name, _)) = take_register(value) {
            shape.sources.push(name);
        }
        let (label, _) = take_register(parts[1].trim()).ok_or("phi incoming label must be `%label`")?;
        shape.targets.push(label);
        s = s[close..].trim_start();
        if let Some(after) = s.strip_prefix(',') {
            s = after;
        } else {
            // Trailing attachments such as `!dbg !4` end the list.
            break;
        }
    }
    if shape.targets.is_empty() {
        return Err("phi without incoming values".into());
    }
    Ok(shape)
}

fn parse_load(rest: &str) -> Result<Shape, String> {
    let s = skip_words(rest, FLAGS);
    let (ty, s) = leading_type(s)?;
    let s = s
        .trim_start()
        .strip_prefix(',')
        .ok_or("load needs `<ty>, <ty>* %ptr`")?;
    let segments = split_top_level(s);
    let ptr = segments
        .first()
        .and_then(|seg| parse_operand(seg))
        .filter(|o| o.has_value)
        .ok_or("load is missing its pointer operand")?;
    let mut shape = Shape::new(ty);
    shape.sources.extend(ptr.reg);
    Ok(shape)
}

fn parse_store(rest: &str) -> Result<Shape, String> {
    let s = skip_words(rest, FLAGS);
    let segments = split_top_level(s);
    if segments.len() < 2 {
        return Err("store needs `<ty> %val, <ty>* %ptr`".into());
    }
    let value = parse_operand(segments[0]).ok_or("store is missing its value operand")?;
    let ty = value.ty.clone().ok_or("store value needs a type")?;
    if !value.has_value {
        return Err("store is missing its value operand".into());
    }
    let ptr = parse_operand(segments[1])
        .filter(|o| o.has_value)
        .ok_or("store is missing its pointer operand")?;
    let mut shape = Shape::new(ty);
    shape.sources.extend(value.reg);
    shape.sources.extend(ptr.reg);
    Ok(shape)
}

fn parse_gep(rest: &str) -> Result<Shape, String> {
    let mut s = skip_words(rest, FLAGS);
    if s.starts_with("inrange(") {
        let close = matching_close(s, '(', ')').ok_or("unbalanced inrange")?;
        s = s[close..].trim_start();
    }
    let (_, s) = leading_type(s)?;
    let s = s
        .trim_start()
        .strip_prefix(',')
        .ok_or("getelementptr needs `<ty>, <ty>* %ptr`")?;
    let mut shape = Shape::new(ValueType::Pointer);
    let segments = split_top_level(s);
    if segments.is_empty() {
        return Err("getelementptr is missing its pointer operand".into());
    }
    for seg in segments {
        let op = parse_operand(seg)
            .filter(|o| o.has_value)
            .ok_or("empty getelementptr operand")?;
        shape.sources.extend(op.reg);
    }
    Ok(shape)
}

fn parse_alloca(rest: &str) -> Result<Shape, String> {
    let s = skip_words(rest, &["inalloca"]);
    let (_, s) = leading_type(s)?;
    let mut shape = Shape::new(ValueType::Pointer);
    if let Some(s) = s.trim_start().strip_prefix(',') {
        for seg in split_top_level(s) {
            if let Some(op) = parse_operand(seg) {
                shape.sources.extend(op.reg);
            }
        }
    }
    Ok(shape)
}

fn parse_call(rest: &str) -> Result<Shape, String> {
    // Callee is the first `@name(` or `%reg(` at depth 0.
    let tokens = top_level_tokens(rest);
    let (callee_off, callee_tok) = tokens
        .iter()
        .find(|(_, t)| (t.starts_with('@') || t.starts_with('%')) && t.contains('('))
        .copied()
        .ok_or("call is missing `@callee(...)`")?;
    let prefix = &rest[..callee_off];

    // Return type, skipping calling-convention and return attributes.
    let mut p = prefix.trim();
    let ty = loop {
        if p.is_empty() {
            return Err("call is missing its return type".into());
        }
        if let Some((t, _)) = parse_type_prefix(p) {
            break t;
        }
        let cut = p.find(char::is_whitespace).unwrap_or(p.len());
        p = p[cut..].trim_start();
    };

    let mut shape = Shape::new(ty);
    let paren = callee_tok.find('(').expect("checked above");
    let name = &callee_tok[..paren];
    if let Some(n) = name.strip_prefix('@') {
        shape.callee = Some(n.trim_matches('"').to_string());
    } else if let Some((r, _)) = take_register(name) {
        shape.sources.push(r);
    }
    let args_start = callee_off + paren;
    let close = matching_close(&rest[args_start..], '(', ')').ok_or("unbalanced call arguments")?;
    for seg in split_top_level(&rest[args_start + 1..args_start + close - 1]) {
        if let Some(op) = parse_operand(seg) {
            shape.sources.extend(op.reg);
        }
    }
    Ok(shape)
}

fn parse_br(rest: &str) -> Result<Shape, String> {
    let segments = split_top_level(rest);
    let mut shape = Shape::new(ValueType::Void);
    let label = |seg: &str| -> Result<String, String> {
        let s = seg.trim();
        let s = s.strip_prefix("label").ok_or("expected `label %L`")?;
        take_register(s.trim_start())
            .map(|(n, _)| n)
            .ok_or_else(|| "expected `label %L`".to_string())
    };
    match segments.len() {
        1 => shape.targets.push(label(segments[0])?),
        3 => {
            let cond = parse_operand(segments[0])
                .filter(|o| o.has_value && o.ty.is_some())
                .ok_or("expected `i1 %cond`")?;
            shape.sources.extend(cond.reg);
            shape.targets.push(label(segments[1])?);
            shape.targets.push(label(segments[2])?);
        }
        _ => return Err("br must be `br label %L` or `br i1 %c, label %a, label %b`".into()),
    }
    Ok(shape)
}

fn parse_ret(rest: &str) -> Result<Shape, String> {
    let (ty, s) = leading_type(rest)?;
    let mut shape = Shape::new(ty.clone());
    if ty.is_void() {
        return Ok(shape);
    }
    let seg = split_top_level(s).into_iter().next().unwrap_or("");
    let op = parse_operand_untyped(seg)
        .filter(|o| o.has_value)
        .ok_or("ret is missing its value")?;
    shape.sources.extend(op.reg);
    Ok(shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(line: &str) -> Instruction {
        let unit = parse_ll(line, "t.ll").unwrap();
        assert_eq!(unit.instructions.len(), 1);
        unit.instructions.into_iter().next().unwrap()
    }

    fn names(regs: &[Register]) -> Vec<&str> {
        regs.iter().map(|r| r.name.as_str()).collect()
    }

    #[test]
    fn sub_from_worked_example() {
        let ins = one("%3 = sub i32 %1, %2");
        assert_eq!(ins.opcode, "sub");
        assert_eq!(ins.dest, Some(Register::new("3", "")));
        assert_eq!(names(&ins.sources), ["1", "2"]);
        assert_eq!(ins.result_type, ValueType::Int(32));
    }

    #[test]
    fn empty_text_is_empty_unit() {
        assert_eq!(parse_ll("", "x.ll"), Err(IrError::EmptyUnit));
        assert_eq!(
            parse_trace("; only a comment\n\n", "x.trace"),
            Err(IrError::EmptyUnit)
        );
    }

    #[test]
    fn operand_forms() {
        let ins = one("%c = icmp slt i32 %a, 10");
        assert_eq!(ins.result_type, ValueType::Int(1));
        assert_eq!(names(&ins.sources), ["a"]);

        let ins = one("%w = zext i8 %b to i64");
        assert_eq!(ins.result_type, ValueType::Int(64));
        assert_eq!(names(&ins.sources), ["b"]);

        let ins = one("%s = select i1 %c, double %x, double %y");
        assert_eq!(ins.result_type, ValueType::Float64);
        assert_eq!(names(&ins.sources), ["c", "x", "y"]);

        let ins = one("%v = add nsw <4 x i32> %p, %q");
        assert_eq!(ins.result_type, ValueType::vector(4, ValueType::Int(32)));

        let ins = one("%m = icmp eq <2 x i64> %p, %q");
        assert_eq!(ins.result_type, ValueType::vector(2, ValueType::Int(1)));
    }

    #[test]
    fn memory_forms() {
        let ins = one("%v = load i32, i32* %p, align 4");
        assert_eq!(ins.result_type, ValueType::Int(32));
        assert_eq!(names(&ins.sources), ["p"]);

        let ins = one("store i32 %7, i32* %p ; addr=0x10");
        assert_eq!(ins.opcode, "store");
        assert_eq!(ins.dest, None);
        assert_eq!(ins.mem_addr, Some(16));
        assert_eq!(names(&ins.sources), ["7", "p"]);
        assert_eq!(ins.result_type, ValueType::Int(32));

        let ins = one("store i64 0, ptr @counter");
        assert!(ins.sources.is_empty());

        let ins = one("%e = getelementptr inbounds [8 x i32], ptr %arr, i64 0, i64 %i");
        assert_eq!(ins.result_type, ValueType::Pointer);
        assert_eq!(names(&ins.sources), ["arr", "i"]);

        let ins = one("%v = load %struct.node*, %struct.node** %pp");
        assert_eq!(ins.result_type, ValueType::Pointer);
        assert_eq!(names(&ins.sources), ["pp"]);

        let ins = one("%a = alloca %struct.node, align 8");
        assert_eq!(ins.result_type, ValueType::Pointer);
        assert!(ins.sources.is_empty());
    }

    #[test]
    fn call_forms() {
        let ins = one("%r = tail call noalias ptr @malloc(i64 noundef %n) #3");
        assert_eq!(ins.opcode, "call");
        assert_eq!(ins.callee.as_deref(), Some("malloc"));
        assert_eq!(ins.result_type, ValueType::Pointer);
        assert_eq!(names(&ins.sources), ["n"]);

        let ins = one("call void @free(ptr %r)");
        assert_eq!(ins.dest, None);
        assert_eq!(ins.result_type, ValueType::Void);

        let ins = one("%x = call i32 %fp(i32 %a, i32 7)");
        assert_eq!(ins.callee, None);
        assert_eq!(names(&ins.sources), ["fp", "a"]);
    }

    #[test]
    fn control_forms() {
        let ins = one("br i1 %c, label %then, label %else");
        assert_eq!(names(&ins.sources), ["c"]);
        assert_eq!(ins.targets, ["then", "else"]);

        let ins = one("br label %loop");
        assert!(ins.sources.is_empty());
        assert_eq!(ins.targets, ["loop"]);

        let ins = one("ret i32 %v");
        assert_eq!(names(&ins.sources), ["v"]);
        assert_eq!(one("ret void").result_type, ValueType::Void);

        let ins = one("%i = phi i64 [ 0, %entry ], [ %next, %loop ]");
        assert_eq!(names(&ins.sources), ["next"]);
        assert_eq!(ins.targets, ["entry", "loop"]);
    }

    #[test]
    fn unknown_opcodes_fall_back() {
        let ins = one("%old = cmpxchg ptr %p, i32 %cmp, i32 %new seq_cst seq_cst");
        assert_eq!(ins.opcode, "cmpxchg");
        assert_eq!(ins.result_type, ValueType::Opaque);
        assert_eq!(names(&ins.sources), ["p", "cmp", "new"]);

        let ins = one("unreachable");
        assert_eq!(ins.opcode, "unreachable");
        assert!(ins.sources.is_empty());
    }

    #[test]
    fn malformed_lines() {
        let cases = [
            "%3 sub i32 %1, %2",
            "%3 =",
            "%3 = 42",
            "%3 = load i32",
            "%3 = add i32",
            "%3 = store i32 %1, ptr %p",
            "add i32 %1, %2",
            "br %x",
            "%v = call void @f()",
            "store i32 %v, ptr %p ; addr=0xZZ",
            "ret",
            "%p = phi i32 %a",
        ];
        for text in cases {
            let src = format!("%ok = add i32 %a, %b\n{text}\n");
            match parse_ll(&src, "bad.ll") {
                Err(IrError::MalformedLine { line, .. }) => assert_eq!(line, 2, "{text}"),
                other => panic!("{text:?} parsed as {other:?}"),
            }
        }
    }

    #[test]
    fn functions_blocks_and_arguments() {
        let text = "\
target triple = \"x86_64-pc-linux-gnu\"
@g = global i32 0
%struct.node = type { i32, ptr }
declare ptr @malloc(i64)

define dso_local i32 @sum(ptr noundef %xs, i32 %n) #0 {
entry:
  %c = icmp sgt i32 %n, 0
  br i1 %c, label %body, label %done
body:                                   ; preds = %entry
  %v = load i32, ptr %xs
  br label %done
done:
  %r = phi i32 [ 0, %entry ], [ %v, %body ]
  ret i32 %r
}
";
        let unit = parse_ll(text, "sum.ll").unwrap();
        assert_eq!(unit.format, TraceFormat::StaticLl);
        assert_eq!(unit.len(), 6);
        assert!(unit.instructions.iter().all(|i| i.function == "sum"));
        let blocks: Vec<_> = unit.instructions.iter().map(|i| i.block.as_str()).collect();
        assert_eq!(blocks, ["entry", "entry", "body", "body", "done", "done"]);
        let args: Vec<_> = unit.arguments.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(args, ["n", "xs"]);
        assert!(unit.externals.is_empty());
        assert_eq!(unit.instructions[0].sources[0], Register::new("n", "sum"));
    }

    #[test]
    fn undefined_registers_are_flagged_external() {
        let unit = parse_trace("%3 = sub i32 %1, %2\n%5 = sub i32 %3, %4\n", "t").unwrap();
        let ext: Vec<_> = unit.externals.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(ext, ["1", "2", "4"]);
    }

    #[test]
    fn redefinitions_are_distinct_instructions() {
        let text = "%3 = add i32 %1, %2\n%3 = mul i32 %3, %3\n%4 = sub i32 %3, %1\n";
        let unit = parse_trace(text, "t").unwrap();
        assert_eq!(unit.format, TraceFormat::DynamicTrace);
        let idx: Vec<_> = unit.instructions.iter().map(|i| i.index).collect();
        assert_eq!(idx, [0, 1, 2]);
    }
}
