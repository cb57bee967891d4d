//! Synthetic labeled trace corpus.
//!
//! Benign files are dominated by short-range dependency chains: operands
//! come from the last few definitions, so most values are used once or
//! twice. Malicious files route a large share of operands through a few
//! hub registers (call and getelementptr results) and add store/load
//! cycles on fixed addresses, which raises fan-out and degree. Both classes
//! draw opcodes from one shared table, so topology rather than vocabulary
//! separates them unless `easy` is set.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::depgraph::Label;
use crate::pipeline::{Manifest, ManifestEntry};
use crate::seed::mix;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Malicious family names with weights proportional to their sample counts
/// in a large labeled malware collection.
pub const MALICIOUS_FAMILIES: [(&str, f64); 9] = [
    ("spyware", 4757.0),
    ("botnet", 1548.0),
    ("trojan", 4645.0),
    ("rootkit", 3048.0),
    ("backdoor", 3097.0),
    ("worm", 1548.0),
    ("ransomware", 900.0),
    ("injection", 900.0),
    ("mixed", 3933.0),
];

pub const BENIGN_FAMILIES: [(&str, f64); 3] = [("compute", 1.0), ("io", 1.0), ("container", 1.0)];

/// Manifest family recorded for every benign file.
pub const BENIGN_FAMILY: &str = "benign";

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub benign_count: usize,
    pub malicious_count: usize,
    pub seed: u64,
    /// Inclusive instruction-count range per file.
    pub size_range: (usize, usize),
    pub benign_families: Vec<(String, f64)>,
    pub malicious_families: Vec<(String, f64)>,
    /// Lets each class use a few opcodes the other never emits.
    pub easy: bool,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        let owned = |fams: &[(&str, f64)]| fams.iter().map(|(n, w)| (n.to_string(), *w)).collect();
        CorpusSpec {
            benign_count: 500,
            malicious_count: 500,
            seed: 42,
            size_range: (50, 400),
            benign_families: owned(&BENIGN_FAMILIES),
            malicious_families: owned(&MALICIOUS_FAMILIES),
            easy: false,
        }
    }
}

impl CorpusSpec {
    pub fn new(benign_count: usize, malicious_count: usize, seed: u64) -> Self {
        CorpusSpec {
            benign_count,
            malicious_count,
            seed,
            ..CorpusSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidSpec(m));
        if self.benign_count == 0 || self.malicious_count == 0 {
            return bad("both class counts must be at least 1".into());
        }
        let (lo, hi) = self.size_range;
        if lo < 5 || hi < lo {
            return bad(format!("size range {lo}..{hi} needs 5 <= min <= max"));
        }
        for (name, w) in self.benign_families.iter().chain(&self.malicious_families) {
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return bad(format!("family name `{name}` must be a nonempty identifier"));
            }
            if !(w.is_finite() && *w > 0.0) {
                return bad(format!("family `{name}` needs a positive weight"));
            }
        }
        if self.benign_families.is_empty() || self.malicious_families.is_empty() {
            return bad("each class needs at least one family".into());
        }
        Ok(())
    }
}

/// Writes `traces/<family>_<index>.trace` files and `manifest.jsonl` under
/// `out_dir`. Returns the manifest with paths joined onto `out_dir`.
pub fn generate(spec: &CorpusSpec, out_dir: &Path) -> Result<Manifest, CorpusError> {
    spec.validate()?;
    let traces = out_dir.join("traces");
    std::fs::create_dir_all(&traces).map_err(|source| CorpusError::Io {
        path: traces.clone(),
        source,
    })?;

    let plan = plan_files(spec);
    let width = (plan.len() - 1).to_string().len().max(4);
    let rel_paths: Vec<PathBuf> = plan
        .iter()
        .enumerate()
        .map(|(i, f)| PathBuf::from("traces").join(format!("{}_{i:0width$}.trace", f.family)))
        .collect();

    plan.par_iter()
        .zip(&rel_paths)
        .enumerate()
        .try_for_each(|(i, (file, rel))| {
            let text = generate_trace(spec, file, mix(spec.seed, i as u64));
            let path = out_dir.join(rel);
            std::fs::write(&path, text).map_err(|source| CorpusError::Io { path, source })
        })?;

    let entries: Vec<ManifestEntry> = plan
        .iter()
        .zip(rel_paths)
        .map(|(f, rel)| ManifestEntry {
            path: rel,
            label: f.label,
            family: match f.label {
                Label::Benign => BENIGN_FAMILY.to_string(),
                Label::Malicious => f.family.clone(),
            },
        })
        .collect();
    let relative = Manifest {
        entries: entries.clone(),
    };
    let manifest_path = out_dir.join("manifest.jsonl");
    std::fs::write(&manifest_path, relative.to_jsonl()).map_err(|source| CorpusError::Io {
        path: manifest_path,
        source,
    })?;
    Ok(Manifest {
        entries: entries
            .into_iter()
            .map(|e| ManifestEntry {
                path: out_dir.join(e.path),
                ..e
            })
            .collect(),
    })
}

struct PlannedFile {
    label: Label,
    family: String,
}

/// Largest-remainder apportionment of `count` over weighted families.
fn apportion(count: usize, families: &[(String, f64)]) -> Vec<usize> {
    let total: f64 = families.iter().map(|(_, w)| w).sum();
    let quotas: Vec<f64> = families.iter().map(|(_, w)| w / total * count as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rest: Vec<usize> = (0..families.len()).collect();
    rest.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let missing = count - alloc.iter().sum::<usize>();
    for &i in rest.iter().take(missing) {
        alloc[i] += 1;
    }
    alloc
}

fn plan_files(spec: &CorpusSpec) -> Vec<PlannedFile> {
    let mut plan = Vec::with_capacity(spec.benign_count + spec.malicious_count);
    for (label, count, families) in [
        (Label::Benign, spec.benign_count, &spec.benign_families),
        (Label::Malicious, spec.malicious_count, &spec.malicious_families),
    ] {
        for ((name, _), n) in families.iter().zip(apportion(count, families)) {
            plan.extend((0..n).map(|_| PlannedFile {
                label,
                family: name.clone(),
            }));
        }
    }
    plan
}

/// Motif intensities; ranges are sampled once per file.
#[derive(Debug, Clone, Copy)]
struct Profile {
    /// Probability that an operand is a previously defined register rather
    /// than a constant or an outside value.
    reg_rate: (f64, f64),
    /// Probability that a register operand refers to a hub.
    hub_rate: (f64, f64),
    hubs: (usize, usize),
    /// Probability per step of emitting a store/load cycle on a hub address.
    mem_cycle: (f64, f64),
    /// How many recent definitions non-hub operands draw from.
    window: usize,
}

fn profile(label: Label, family: &str) -> Profile {
    let benign = Profile {
        reg_rate: (0.35, 0.75),
        hub_rate: (0.0, 0.08),
        hubs: (1, 2),
        mem_cycle: (0.0, 0.02),
        window: 2,
    };
    let malicious = Profile {
        reg_rate: (0.55, 0.9),
        hub_rate: (0.3, 0.6),
        hubs: (2, 5),
        mem_cycle: (0.04, 0.1),
        window: 4,
    };
    match (label, family) {
        (Label::Benign, "compute") => Profile {
            mem_cycle: (0.0, 0.0),
            ..benign
        },
        (Label::Benign, "io") => Profile {
            hub_rate: (0.03, 0.12),
            window: 3,
            ..benign
        },
        (Label::Benign, _) => benign,
        (Label::Malicious, "spyware") => Profile {
            mem_cycle: (0.08, 0.16),
            ..malicious
        },
        (Label::Malicious, "botnet") => Profile {
            hub_rate: (0.4, 0.7),
            ..malicious
        },
        (Label::Malicious, "trojan") => Profile {
            reg_rate: (0.45, 0.85),
            hub_rate: (0.2, 0.45),
            ..malicious
        },
        (Label::Malicious, "rootkit") => Profile {
            hubs: (1, 3),
            ..malicious
        },
        (Label::Malicious, "worm") => Profile {
            hubs: (1, 2),
            hub_rate: (0.45, 0.75),
            ..malicious
        },
        (Label::Malicious, "ransomware") => Profile {
            mem_cycle: (0.1, 0.2),
            ..malicious
        },
        (Label::Malicious, _) => malicious,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Bin(&'static str),
    Icmp,
    Select,
    Zext,
    Trunc,
    Load,
    Store,
    Gep,
    Call,
    Alloca,
    Br,
}

/// Shared opcode table for both classes.
const OPS: [(Op, u32); 17] = [
    (Op::Bin("add"), 10),
    (Op::Bin("sub"), 8),
    (Op::Bin("mul"), 6),
    (Op::Bin("xor"), 5),
    (Op::Bin("and"), 4),
    (Op::Bin("or"), 4),
    (Op::Bin("shl"), 3),
    (Op::Icmp, 6),
    (Op::Select, 3),
    (Op::Zext, 3),
    (Op::Trunc, 2),
    (Op::Load, 10),
    (Op::Store, 8),
    (Op::Gep, 8),
    (Op::Call, 6),
    (Op::Alloca, 2),
    (Op::Br, 4),
];

const EASY_BENIGN_OPS: [&str; 2] = ["fadd", "fmul"];
const EASY_MALICIOUS_OPS: [&str; 2] = ["ashr", "srem"];

const CALLEES: [&str; 8] = [
    "memcpy", "strlen", "open", "read", "write", "socket", "getenv", "hash",
];

const EXTERNAL_PTRS: u64 = 3;

struct TraceGen {
    rng: ChaCha8Rng,
    out: String,
    ints: Vec<String>,
    ptrs: Vec<(String, u64)>,
    int_hubs: Vec<String>,
    ptr_hubs: Vec<(String, u64)>,
    next_reg: usize,
    next_addr: u64,
    next_block: usize,
    reg_rate: f64,
    hub_rate: f64,
    window: usize,
    lines: usize,
}

impl TraceGen {
    fn chance(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    fn fresh(&mut self) -> String {
        self.next_reg += 1;
        format!("%v{}", self.next_reg)
    }

    fn fresh_addr(&mut self) -> u64 {
        self.next_addr += 0x40;
        self.next_addr
    }

    fn emit(&mut self, line: std::fmt::Arguments) {
        self.out.write_fmt(line).expect("write to string");
        self.out.push('\n');
        self.lines += 1;
    }

    fn recent<T: Clone>(rng: &mut ChaCha8Rng, pool: &[T], window: usize) -> T {
        let back = rng.random_range(0..window.min(pool.len()));
        pool[pool.len() - 1 - back].clone()
    }

    fn int_operand(&mut self) -> String {
        if !self.ints.is_empty() && self.chance(self.reg_rate) {
            if !self.int_hubs.is_empty() && self.chance(self.hub_rate) {
                let i = self.rng.random_range(0..self.int_hubs.len());
                return self.int_hubs[i].clone();
            }
            return Self::recent(&mut self.rng, &self.ints, self.window);
        }
        self.rng.random_range(0..256u32).to_string()
    }

    fn ptr_operand(&mut self) -> (String, u64) {
        if !self.ptrs.is_empty() && self.chance(self.reg_rate) {
            if !self.ptr_hubs.is_empty() && self.chance(self.hub_rate) {
                let i = self.rng.random_range(0..self.ptr_hubs.len());
                return self.ptr_hubs[i].clone();
            }
            return Self::recent(&mut self.rng, &self.ptrs, self.window);
        }
        let k = self.rng.random_range(0..EXTERNAL_PTRS);
        (format!("%arg{k}"), 0x10 * (k + 1))
    }

    fn def_int(&mut self, reg: String) {
        self.ints.push(reg);
    }

    fn def_ptr(&mut self, reg: String) -> u64 {
        let addr = self.fresh_addr();
        self.ptrs.push((reg, addr));
        addr
    }

    fn callee(&mut self) -> &'static str {
        CALLEES[self.rng.random_range(0..CALLEES.len())]
    }

    fn op(&mut self, op: Op) {
        match op {
            Op::Bin(name) => {
                let (a, b) = (self.int_operand(), self.int_operand());
                let d = self.fresh();
                self.emit(format_args!("{d} = {name} i64 {a}, {b}"));
                self.def_int(d);
            }
            Op::Icmp => {
                let (a, b) = (self.int_operand(), self.int_operand());
                let d = self.fresh();
                self.emit(format_args!("{d} = icmp slt i64 {a}, {b}"));
                self.def_int(d);
            }
            Op::Select => {
                let (c, a, b) = (self.int_operand(), self.int_operand(), self.int_operand());
                let d = self.fresh();
                self.emit(format_args!("{d} = select i1 {c}, i64 {a}, i64 {b}"));
                self.def_int(d);
            }
            Op::Zext => {
                let a = self.int_operand();
                let d = self.fresh();
                self.emit(format_args!("{d} = zext i32 {a} to i64"));
                self.def_int(d);
            }
            Op::Trunc => {
                let a = self.int_operand();
                let d = self.fresh();
                self.emit(format_args!("{d} = trunc i64 {a} to i32"));
                self.def_int(d);
            }
            Op::Load => {
                let (p, addr) = self.ptr_operand();
                let d = self.fresh();
                self.emit(format_args!("{d} = load i64, ptr {p} ; addr=0x{addr:x}"));
                self.def_int(d);
            }
            Op::Store => {
                let v = self.int_operand();
                let (p, addr) = self.ptr_operand();
                self.emit(format_args!("store i64 {v}, ptr {p} ; addr=0x{addr:x}"));
            }
            Op::Gep => {
                let (p, _) = self.ptr_operand();
                let i = self.int_operand();
                let d = self.fresh();
                self.emit(format_args!("{d} = getelementptr i8, ptr {p}, i64 {i}"));
                self.def_ptr(d);
            }
            Op::Call => {
                let name = self.callee();
                let a = self.int_operand();
                let (p, _) = self.ptr_operand();
                let d = self.fresh();
                if self.chance(0.3) {
                    self.emit(format_args!("{d} = call ptr @{name}(i64 {a}, ptr {p})"));
                    self.def_ptr(d);
                } else {
                    self.emit(format_args!("{d} = call i64 @{name}(i64 {a}, ptr {p})"));
                    self.def_int(d);
                }
            }
            Op::Alloca => {
                let d = self.fresh();
                self.emit(format_args!("{d} = alloca i64"));
                self.def_ptr(d);
            }
            Op::Br => {
                let c = self.int_operand();
                self.next_block += 2;
                let (t, f) = (self.next_block - 1, self.next_block);
                self.emit(format_args!("br i1 {c}, label %bb{t}, label %bb{f}"));
            }
        }
    }

    /// Defines a hub: a call or getelementptr result that later operands
    /// keep returning to.
    fn hub(&mut self) {
        let name = self.callee();
        let a = self.int_operand();
        let d = self.fresh();
        if self.chance(0.5) {
            let (p, _) = self.ptr_operand();
            self.emit(format_args!("{d} = getelementptr i8, ptr {p}, i64 {a}"));
            let addr = self.def_ptr(d.clone());
            self.ptr_hubs.push((d, addr));
        } else {
            self.emit(format_args!("{d} = call i64 @{name}(i64 {a})"));
            self.def_int(d.clone());
            self.int_hubs.push(d);
        }
    }

    /// store → load → xor → store on one hub address.
    fn mem_cycle(&mut self) {
        let (p, addr) = if self.ptr_hubs.is_empty() {
            self.ptr_operand()
        } else {
            let i = self.rng.random_range(0..self.ptr_hubs.len());
            self.ptr_hubs[i].clone()
        };
        let v = self.int_operand();
        self.emit(format_args!("store i64 {v}, ptr {p} ; addr=0x{addr:x}"));
        let l = self.fresh();
        self.emit(format_args!("{l} = load i64, ptr {p} ; addr=0x{addr:x}"));
        let k = self.int_operand();
        let x = self.fresh();
        self.emit(format_args!("{x} = xor i64 {l}, {k}"));
        self.emit(format_args!("store i64 {x}, ptr {p} ; addr=0x{addr:x}"));
        self.def_int(l);
        self.def_int(x);
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn generate_trace(spec: &CorpusSpec, file: &PlannedFile, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = profile(file.label, &file.family);
    let (lo, hi) = spec.size_range;
    let target = rng.random_range(lo..=hi);
    let reg_rate = draw(&mut rng, p.reg_rate);
    let hub_rate = draw(&mut rng, p.hub_rate);
    let mem_cycle = draw(&mut rng, p.mem_cycle);
    let hubs = rng.random_range(p.hubs.0..=p.hubs.1);
    let mut g = TraceGen {
        rng,
        out: String::new(),
        ints: Vec::new(),
        ptrs: Vec::new(),
        int_hubs: Vec::new(),
        ptr_hubs: Vec::new(),
        next_reg: 0,
        next_addr: 0x1000,
        next_block: 0,
        reg_rate,
        hub_rate,
        window: p.window,
        lines: 0,
    };
    g.op(Op::Alloca);
    for _ in 0..hubs.min(target.saturating_sub(2)) {
        g.hub();
    }
    let easy_ops: &[&str] = match (spec.easy, file.label) {
        (false, _) => &[],
        (true, Label::Benign) => &EASY_BENIGN_OPS,
        (true, Label::Malicious) => &EASY_MALICIOUS_OPS,
    };
    let table = WeightedIndex::new(OPS.iter().map(|(_, w)| *w)).expect("positive weights");
    // Leave room for a full cycle plus the final ret.
    while g.lines + 5 <= target {
        if g.chance(mem_cycle) {
            g.mem_cycle();
        } else if !easy_ops.is_empty() && g.chance(0.1) {
            let name = easy_ops[g.rng.random_range(0..easy_ops.len())];
            g.op(Op::Bin(name));
        } else {
            let op = OPS[table.sample(&mut g.rng)].0;
            g.op(op);
        }
    }
    while g.lines + 1 < target {
        let op = OPS[table.sample(&mut g.rng)].0;
        g.op(op);
    }
    let v = g.int_operand();
    g.emit(format_args!("ret i64 {v}"));
    g.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_trace;

    #[test]
    fn apportionment_is_exact() {
        let fams: Vec<(String, f64)> =
            MALICIOUS_FAMILIES.iter().map(|(n, w)| (n.to_string(), *w)).collect();
        for count in [1, 7, 500, 1001] {
            assert_eq!(apportion(count, &fams).iter().sum::<usize>(), count);
        }
        let a = apportion(500, &fams);
        assert!(a[0] > a[6], "{a:?}");
    }

    #[test]
    fn traces_parse_and_hit_target_size() {
        let spec = CorpusSpec {
            size_range: (5, 60),
            ..CorpusSpec::new(3, 3, 1)
        };
        for (i, f) in plan_files(&spec).iter().enumerate() {
            let text = generate_trace(&spec, f, mix(1, i as u64));
            let unit = parse_trace(&text, "x.trace").unwrap();
            assert!((5..=60).contains(&unit.instructions.len()), "{}", unit.instructions.len());
        }
    }

    #[test]
    fn spec_validation() {
        assert!(CorpusSpec::new(0, 1, 0).validate().is_err());
        let s = CorpusSpec {
            size_range: (4, 10),
            ..CorpusSpec::default()
        };
        assert!(s.validate().is_err());
        let mut s = CorpusSpec::default();
        s.malicious_families[0].1 = 0.0;
        assert!(s.validate().is_err());
    }
}
