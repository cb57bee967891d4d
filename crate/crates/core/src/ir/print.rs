use std::fmt::Write as _;

use super::{Instruction, Register, TraceUnit};

fn regs(rs: &[Register]) -> String {
    rs.iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Register operands, or a constant placeholder when every operand was a
/// constant (constants are not retained).
fn value_operands(rs: &[Register]) -> String {
    if rs.is_empty() {
        "0".to_string()
    } else {
        regs(rs)
    }
}

/// Canonical single-line form of an instruction, without annotation.
pub(crate) fn print_instruction(ins: &Instruction) -> String {
    let mut s = String::new();
    if let Some(d) = &ins.dest {
        let _ = write!(s, "{d} = ");
    }
    let ty = &ins.result_type;
    match ins.opcode.as_str() {
        "load" => {
            let _ = write!(s, "load {ty}, ptr {}", regs(&ins.sources));
        }
        "store" => {
            let (value, ptr) = match ins.sources.as_slice() {
                [v, p] => (v.to_string(), p.to_string()),
                [p] => ("undef".to_string(), p.to_string()),
                _ => ("undef".to_string(), "null".to_string()),
            };
            let _ = write!(s, "store {ty} {value}, ptr {ptr}");
        }
        "getelementptr" => {
            let mut parts = ins.sources.iter();
            let base = parts.next().map_or("null".to_string(), |r| r.to_string());
            let _ = write!(s, "getelementptr i8, ptr {base}");
            for idx in parts {
                let _ = write!(s, ", i64 {idx}");
            }
        }
        "alloca" => {
            s.push_str("alloca i8");
            for n in &ins.sources {
                let _ = write!(s, ", i64 {n}");
            }
        }
        "call" => {
            let args = ins
                .sources
                .iter()
                .map(|r| format!("i64 {r}"))
                .collect::<Vec<_>>()
                .join(", ");
            let callee = ins.callee.as_deref().unwrap_or("unknown");
            let _ = write!(s, "call {ty} @{callee}({args})");
        }
        "br" => match (ins.sources.as_slice(), ins.targets.as_slice()) {
            ([c], [a, b]) => {
                let _ = write!(s, "br i1 {c}, label %{a}, label %{b}");
            }
            ([], [a, b]) => {
                let _ = write!(s, "br i1 true, label %{a}, label %{b}");
            }
            (_, targets) => {
                let t = targets.first().map_or("exit", String::as_str);
                let _ = write!(s, "br label %{t}");
            }
        },
        "ret" => {
            if ty.is_void() {
                s.push_str("ret void");
            } else {
                let v = ins.sources.first().map_or("undef".to_string(), |r| r.to_string());
                let _ = write!(s, "ret {ty} {v}");
            }
        }
        "phi" if ins.sources.len() == ins.targets.len() && !ins.targets.is_empty() => {
            let pairs = ins
                .sources
                .iter()
                .zip(&ins.targets)
                .map(|(v, l)| format!("[ {v}, %{l} ]"))
                .collect::<Vec<_>>()
                .join(", ");
            let _ = write!(s, "phi {ty} {pairs}");
        }
        "icmp" | "fcmp" => {
            // The predicate is not retained; the result type is always i1.
            let _ = write!(s, "{} {ty} {}", ins.opcode, value_operands(&ins.sources));
        }
        op if ins.is_supported() => {
            let _ = write!(s, "{op} {ty} {}", value_operands(&ins.sources));
        }
        op => {
            let _ = write!(s, "{op}");
            if !ins.sources.is_empty() {
                let _ = write!(s, " {}", regs(&ins.sources));
            }
        }
    }
    s
}

/// Renders a unit in the canonical grammar: function headers and block
/// labels are emitted wherever attribution changes, and memory annotations
/// are kept.
pub fn print_unit(unit: &TraceUnit) -> String {
    let mut out = String::new();
    let mut current: Option<(&str, &str)> = None;
    for ins in &unit.instructions {
        let func = ins.function.as_str();
        let block = ins.block.as_str();
        if current.map(|c| c.0) != Some(func) {
            if matches!(current, Some((f, _)) if !f.is_empty()) {
                out.push_str("}\n");
            }
            if !func.is_empty() {
                let params = unit
                    .arguments
                    .iter()
                    .filter(|r| r.scope == func)
                    .map(|r| format!("i64 {r}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                let _ = writeln!(out, "define void @{func}({params}) {{");
            }
            if !block.is_empty() {
                let _ = writeln!(out, "{block}:");
            }
        } else if current.map(|c| c.1) != Some(block) && !block.is_empty() {
            let _ = writeln!(out, "{block}:");
        }
        current = Some((func, block));

        out.push_str(&print_instruction(ins));
        if let Some(addr) = ins.mem_addr {
            let _ = write!(out, " ; addr=0x{addr:x}");
        }
        out.push('\n');
    }
    if matches!(current, Some((f, _)) if !f.is_empty()) {
        out.push_str("}\n");
    }
    out
}
