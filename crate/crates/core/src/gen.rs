//! Random terminating WhileLang programs for property tests and benchmarks.
//!
//! Loops are counter loops with a literal bound whose counter the body never
//! writes, and the call graph only points backwards, so every run ends.

use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::annotate::AnnotatedProgram;
use crate::lang::parse_annotated;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenConfig {
    /// Parameters of `main`, at least one.
    pub inputs: usize,
    /// Rough cap on statements per program.
    pub max_stmts: usize,
    /// Helper functions besides `main`.
    pub helpers: usize,
    pub branches: bool,
    pub loops: bool,
    pub divisions: bool,
    pub globals: bool,
    /// `exit`, `assert` and `break`.
    pub abrupt: bool,
    /// Label pragmas with random predicates between statements.
    pub labels: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            inputs: 3,
            max_stmts: 30,
            helpers: 0,
            branches: true,
            loops: true,
            divisions: true,
            globals: true,
            abrupt: true,
            labels: false,
        }
    }
}

impl GenConfig {
    /// Assignments and declarations only.
    pub fn straight_line(inputs: usize) -> GenConfig {
        GenConfig {
            inputs,
            max_stmts: 12,
            helpers: 0,
            branches: false,
            loops: false,
            divisions: true,
            globals: false,
            abrupt: false,
            labels: false,
        }
    }

    /// A configuration drawn at random, mixing single- and multi-function programs.
    pub fn random(rng: &mut impl Rng) -> GenConfig {
        GenConfig {
            inputs: rng.gen_range(1..=3),
            max_stmts: rng.gen_range(6..=30),
            helpers: *[0, 0, 1, 2, 3].choose(rng).unwrap(),
            branches: true,
            loops: rng.gen_bool(0.5),
            divisions: rng.gen_bool(0.5),
            globals: rng.gen_bool(0.5),
            abrupt: rng.gen_bool(0.5),
            labels: false,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Bool,
}

struct Var {
    name: String,
    kind: Kind,
    writable: bool,
}

struct Helper {
    name: String,
    arity: usize,
    returns: bool,
}

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    cfg: &'r GenConfig,
    out: String,
    budget: usize,
    fresh: usize,
    scopes: Vec<Vec<Var>>,
    globals: Vec<String>,
    helpers: Vec<Helper>,
    loop_depth: usize,
    next_label: u32,
}

impl<R: Rng> Gen<'_, R> {
    fn line(&mut self, indent: usize, text: &str) {
        let _ = writeln!(self.out, "{}{text}", "  ".repeat(indent));
    }

    fn vars(&self, kind: Kind) -> Vec<String> {
        let mut v: Vec<String> = self
            .scopes
            .iter()
            .flatten()
            .filter(|v| v.kind == kind)
            .map(|v| v.name.clone())
            .collect();
        if kind == Kind::Int {
            v.extend(self.globals.iter().cloned());
        }
        v
    }

    fn writable(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .scopes
            .iter()
            .flatten()
            .filter(|v| v.kind == Kind::Int && v.writable)
            .map(|v| v.name.clone())
            .collect();
        v.extend(self.globals.iter().cloned());
        v
    }

    fn declare(&mut self, kind: Kind, writable: bool) -> String {
        self.fresh += 1;
        let name = format!("{}{}", if kind == Kind::Int { "v" } else { "b" }, self.fresh);
        self.scopes.last_mut().unwrap().push(Var {
            name: name.clone(),
            kind,
            writable,
        });
        name
    }

    fn literal(&mut self) -> String {
        self.rng.gen_range(-3..=3).to_string()
    }

    fn int_expr(&mut self, depth: usize) -> String {
        let vars = self.vars(Kind::Int);
        if depth == 0 || self.rng.gen_bool(0.35) {
            return match vars.choose(self.rng) {
                Some(v) if self.rng.gen_bool(0.75) => v.clone(),
                _ => self.literal(),
            };
        }
        match self.rng.gen_range(0..10) {
            0..=2 => format!("{} + {}", self.int_expr(depth - 1), self.int_atom()),
            3..=4 => format!("{} - {}", self.int_expr(depth - 1), self.int_atom()),
            5 if self.rng.gen_bool(0.25) => format!("{} * {}", self.int_atom(), self.int_atom()),
            5 => format!("{} * {}", self.rng.gen_range(-3..=3), self.int_atom()),
            6 if self.cfg.divisions => format!("{} / {}", self.int_atom(), self.int_atom()),
            7 => format!("-{}", self.int_atom()),
            8 => format!("abs({})", self.int_expr(depth - 1)),
            _ => format!("({})", self.int_expr(depth - 1)),
        }
    }

    fn int_atom(&mut self) -> String {
        let e = self.int_expr(0);
        if e.starts_with('-') {
            format!("({e})")
        } else {
            e
        }
    }

    fn bool_expr(&mut self, depth: usize) -> String {
        let bools = self.vars(Kind::Bool);
        if !bools.is_empty() && self.rng.gen_bool(0.15) {
            return bools.choose(self.rng).unwrap().clone();
        }
        if depth == 0 || self.rng.gen_bool(0.6) {
            let op = *["<", "<=", ">", ">=", "==", "!="].choose(self.rng).unwrap();
            return format!("{} {op} {}", self.int_expr(1), self.int_expr(1));
        }
        match self.rng.gen_range(0..5) {
            0 | 1 => format!("{} && {}", self.bool_expr(depth - 1), self.bool_expr(depth - 1)),
            2 | 3 => format!("({} || {})", self.bool_expr(depth - 1), self.bool_expr(depth - 1)),
            _ => format!("!({})", self.bool_expr(depth - 1)),
        }
    }

    fn block(&mut self, indent: usize, max: usize) {
        self.scopes.push(Vec::new());
        let n = self.rng.gen_range(1..=max.max(1));
        for _ in 0..n {
            if self.budget == 0 {
                break;
            }
            self.stmt(indent);
        }
        self.scopes.pop();
    }

    fn maybe_label(&mut self, indent: usize) {
        if self.cfg.labels && self.rng.gen_bool(0.4) {
            let pred = self.bool_expr(1);
            self.next_label += 1;
            let id = self.next_label;
            self.line(indent, &format!("// label({id}, \"{pred}\", cc)"));
        }
    }

    fn stmt(&mut self, indent: usize) {
        self.maybe_label(indent);
        self.budget -= 1;
        let nested = indent < 3;
        let choice = self.rng.gen_range(0..100);
        match choice {
            0..=21 => {
                let e = self.int_expr(2);
                let v = self.declare(Kind::Int, true);
                self.line(indent, &format!("int {v} = {e};"));
            }
            22..=41 => {
                let targets = self.writable();
                let e = self.int_expr(2);
                match targets.choose(self.rng) {
                    Some(t) => {
                        let t = t.clone();
                        self.line(indent, &format!("{t} = {e};"));
                    }
                    None => {
                        let v = self.declare(Kind::Int, true);
                        self.line(indent, &format!("int {v} = {e};"));
                    }
                }
            }
            42..=46 => {
                let e = self.bool_expr(1);
                let v = self.declare(Kind::Bool, false);
                self.line(indent, &format!("bool {v} = {e};"));
            }
            47..=66 if self.cfg.branches && nested => {
                let c = self.bool_expr(2);
                self.line(indent, &format!("if ({c}) {{"));
                self.block(indent + 1, 3);
                if self.rng.gen_bool(0.5) {
                    self.line(indent, "} else {");
                    self.block(indent + 1, 3);
                }
                self.line(indent, "}");
            }
            67..=76 if self.cfg.loops && nested => {
                let i = self.declare(Kind::Int, false);
                let k = self.rng.gen_range(0..=3);
                self.line(indent, &format!("int {i} = 0;"));
                let extra = if self.rng.gen_bool(0.5) {
                    format!(" && {}", self.bool_expr(0))
                } else {
                    String::new()
                };
                self.line(indent, &format!("while ({i} < {k}{extra}) {{"));
                self.loop_depth += 1;
                self.block(indent + 1, 3);
                if self.rng.gen_bool(0.2) {
                    let c = self.bool_expr(1);
                    self.line(indent + 1, &format!("if ({c}) {{"));
                    self.line(indent + 2, "break;");
                    self.line(indent + 1, "}");
                }
                self.loop_depth -= 1;
                self.line(indent + 1, &format!("{i} = {i} + 1;"));
                self.line(indent, "}");
            }
            77..=86 if !self.helpers.is_empty() => {
                let h = self.rng.gen_range(0..self.helpers.len());
                let (name, arity, returns) = {
                    let h = &self.helpers[h];
                    (h.name.clone(), h.arity, h.returns)
                };
                let args: Vec<String> = (0..arity).map(|_| self.int_expr(1)).collect();
                let call = format!("{name}({})", args.join(", "));
                if returns {
                    let v = self.declare(Kind::Int, true);
                    self.line(indent, &format!("int {v} = {call};"));
                } else {
                    self.line(indent, &format!("{call};"));
                }
            }
            87..=90 if self.cfg.abrupt && indent > 1 => {
                let c = self.bool_expr(1);
                self.line(indent, &format!("assert({c});"));
            }
            91..=93 if self.cfg.abrupt && indent > 1 => {
                self.line(indent, "exit;");
            }
            94..=96 if self.cfg.abrupt && indent > 1 && self.loop_depth > 0 => {
                self.line(indent, "break;");
            }
            _ => {
                let e = self.int_expr(2);
                let v = self.declare(Kind::Int, true);
                self.line(indent, &format!("int {v} = {e};"));
            }
        }
    }

    fn function(&mut self, name: &str, params: usize, returns: bool, budget: usize) {
        self.budget = budget;
        let ps: Vec<String> = (0..params).map(|i| format!("int {}", param_name(name, i))).collect();
        let ret = if returns { "int" } else { "void" };
        self.line(0, &format!("{ret} {name}({}) {{", ps.join(", ")));
        self.scopes = vec![(0..params)
            .map(|i| Var {
                name: param_name(name, i),
                kind: Kind::Int,
                writable: true,
            })
            .collect()];
        self.scopes.push(Vec::new());
        while self.budget > 0 {
            self.stmt(1);
        }
        if returns {
            let e = self.int_expr(2);
            self.line(1, &format!("return {e};"));
        }
        self.scopes.clear();
        self.line(0, "}");
        self.out.push('\n');
    }
}

fn param_name(func: &str, i: usize) -> String {
    if func == "main" {
        ["a", "b", "c", "d", "e"][i.min(4)].to_string()
    } else {
        format!("p{i}")
    }
}

/// Source text of a random program.
pub fn generate_source(rng: &mut impl Rng, cfg: &GenConfig) -> String {
    let mut g = Gen {
        rng,
        cfg,
        out: String::new(),
        budget: 0,
        fresh: 0,
        scopes: Vec::new(),
        globals: Vec::new(),
        helpers: Vec::new(),
        loop_depth: 0,
        next_label: 0,
    };
    if cfg.globals {
        let n = g.rng.gen_range(1..=2);
        for k in 0..n {
            let init = g.literal();
            g.line(0, &format!("int g{k} = {init};"));
            g.globals.push(format!("g{k}"));
        }
        g.out.push('\n');
    }
    let helper_budget = (cfg.max_stmts / (cfg.helpers + 2)).max(1);
    let mut used = 0;
    for k in 0..cfg.helpers {
        let returns = g.rng.gen_bool(0.7);
        let arity = g.rng.gen_range(0..=2);
        let name = format!("h{k}");
        let budget = g.rng.gen_range(1..=helper_budget);
        used += budget;
        g.function(&name, arity, returns, budget);
        g.helpers.push(Helper { name, arity, returns });
    }
    let main_budget = cfg.max_stmts.saturating_sub(used).max(1);
    g.function("main", cfg.inputs.clamp(1, 5), true, main_budget);
    g.out
}

/// A random expression over the given integer variables.
pub fn expr_source(rng: &mut impl Rng, vars: &[&str], boolean: bool, divisions: bool) -> String {
    let cfg = GenConfig {
        divisions,
        ..GenConfig::default()
    };
    let mut g = Gen {
        rng,
        cfg: &cfg,
        out: String::new(),
        budget: 0,
        fresh: 0,
        scopes: vec![vars
            .iter()
            .map(|v| Var {
                name: v.to_string(),
                kind: Kind::Int,
                writable: true,
            })
            .collect()],
        globals: Vec::new(),
        helpers: Vec::new(),
        loop_depth: 0,
        next_label: 0,
    };
    if boolean {
        g.bool_expr(2)
    } else {
        g.int_expr(3)
    }
}

/// A random program; generation retries until the text type-checks.
pub fn generate(rng: &mut impl Rng, cfg: &GenConfig) -> AnnotatedProgram {
    loop {
        let src = generate_source(rng, cfg);
        match parse_annotated(&src) {
            Ok(p) => return p,
            Err(e) => log::debug!("generated program rejected: {e}\n{src}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;
    use crate::lang::interp::{execute, Termination};
    use crate::lang::value::Value;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn generated_programs_parse_and_terminate() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let cfg = GenConfig::random(&mut rng);
            let src = generate_source(&mut rng, &cfg);
            let p = parse(&src).unwrap_or_else(|e| panic!("{e}\n{src}"));
            let inputs: Vec<Value> = (0..cfg.inputs).map(|i| Value::int(i as i64 - 1)).collect();
            let t = execute(&p, &inputs, 100_000).unwrap();
            assert_ne!(t.termination, Termination::FuelExhausted, "{src}");
            assert_ne!(t.termination, Termination::CallDepthExceeded, "{src}");
        }
    }

    #[test]
    fn straight_line_has_no_control_flow() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let src = generate_source(&mut rng, &GenConfig::straight_line(2));
            for kw in ["if", "while", "exit", "assert", "break"] {
                assert!(!src.contains(&format!("{kw} ")) && !src.contains(&format!("{kw}(")), "{src}");
            }
        }
    }

    #[test]
    fn labels_are_placed_when_asked() {
        let mut rng = StdRng::seed_from_u64(5);
        let cfg = GenConfig {
            labels: true,
            ..GenConfig::straight_line(3)
        };
        let total: usize = (0..20).map(|_| generate(&mut rng, &cfg).labels.len()).sum();
        assert!(total > 20);
    }

    #[test]
    fn same_seed_same_program() {
        let cfg = GenConfig::default();
        let a = generate_source(&mut StdRng::seed_from_u64(11), &cfg);
        let b = generate_source(&mut StdRng::seed_from_u64(11), &cfg);
        assert_eq!(a, b);
    }
}
