//! Quantifier-free formulas over unbounded integers and booleans.
//!
//! Terms live in a hash-consed arena, so structurally equal terms share one
//! id and substitution results can be memoized. Constructors fold constants
//! and apply a handful of boolean identities.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use crate::lang::value::{Int, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    Int,
    Bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Int(i64),
    Bool(bool),
    Var(String, Sort),
    Not(TermId),
    And(TermId, TermId),
    Or(TermId, TermId),
    Implies(TermId, TermId),
    Ite(TermId, TermId, TermId),
    Eq(TermId, TermId),
    Lt(TermId, TermId),
    Le(TermId, TermId),
    Add(TermId, TermId),
    Sub(TermId, TermId),
    Mul(TermId, TermId),
    /// Division truncating toward zero.
    Div(TermId, TermId),
    Neg(TermId),
    Abs(TermId),
}

impl Node {
    fn children(&self) -> Vec<TermId> {
        match *self {
            Node::Int(_) | Node::Bool(_) | Node::Var(..) => vec![],
            Node::Not(a) | Node::Neg(a) | Node::Abs(a) => vec![a],
            Node::And(a, b)
            | Node::Or(a, b)
            | Node::Implies(a, b)
            | Node::Eq(a, b)
            | Node::Lt(a, b)
            | Node::Le(a, b)
            | Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b) => vec![a, b],
            Node::Ite(c, a, b) => vec![c, a, b],
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct TermStore {
    nodes: Vec<Node>,
    sorts: Vec<Sort>,
    index: HashMap<Node, TermId>,
    fresh: HashMap<String, u32>,
}

impl TermStore {
    pub fn new() -> TermStore {
        TermStore::default()
    }

    pub fn node(&self, t: TermId) -> &Node {
        &self.nodes[t.0 as usize]
    }

    pub fn sort(&self, t: TermId) -> Sort {
        self.sorts[t.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn intern(&mut self, n: Node) -> TermId {
        if let Some(&id) = self.index.get(&n) {
            return id;
        }
        let sort = match &n {
            Node::Int(_)
            | Node::Add(..)
            | Node::Sub(..)
            | Node::Mul(..)
            | Node::Div(..)
            | Node::Neg(_)
            | Node::Abs(_) => Sort::Int,
            Node::Var(_, s) => *s,
            Node::Ite(_, a, _) => self.sort(*a),
            _ => Sort::Bool,
        };
        let id = TermId(self.nodes.len() as u32);
        self.nodes.push(n.clone());
        self.sorts.push(sort);
        self.index.insert(n, id);
        id
    }

    fn as_int(&self, t: TermId) -> Option<i64> {
        match self.node(t) {
            Node::Int(v) => Some(*v),
            _ => None,
        }
    }

    fn as_bool(&self, t: TermId) -> Option<bool> {
        match self.node(t) {
            Node::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn int(&mut self, v: i64) -> TermId {
        self.intern(Node::Int(v))
    }

    pub fn bool(&mut self, b: bool) -> TermId {
        self.intern(Node::Bool(b))
    }

    pub fn tt(&mut self) -> TermId {
        self.bool(true)
    }

    pub fn ff(&mut self) -> TermId {
        self.bool(false)
    }

    pub fn var(&mut self, name: &str, sort: Sort) -> TermId {
        self.intern(Node::Var(name.to_string(), sort))
    }

    /// A variable named after `base` that has not been handed out before.
    pub fn fresh(&mut self, base: &str, sort: Sort) -> TermId {
        loop {
            let n = self.fresh.entry(base.to_string()).or_insert(0);
            *n += 1;
            let name = format!("{base}${n}");
            if !self.index.contains_key(&Node::Var(name.clone(), sort)) {
                return self.var(&name, sort);
            }
        }
    }

    pub fn not(&mut self, a: TermId) -> TermId {
        match *self.node(a) {
            Node::Bool(b) => self.bool(!b),
            Node::Not(x) => x,
            _ => self.intern(Node::Not(a)),
        }
    }

    pub fn and(&mut self, a: TermId, b: TermId) -> TermId {
        match (self.as_bool(a), self.as_bool(b)) {
            (Some(false), _) | (_, Some(false)) => return self.ff(),
            (Some(true), _) => return b,
            (_, Some(true)) => return a,
            _ => {}
        }
        if a == b {
            return a;
        }
        if self.node(a) == &Node::Not(b) || self.node(b) == &Node::Not(a) {
            return self.ff();
        }
        self.intern(Node::And(a, b))
    }

    pub fn or(&mut self, a: TermId, b: TermId) -> TermId {
        match (self.as_bool(a), self.as_bool(b)) {
            (Some(true), _) | (_, Some(true)) => return self.tt(),
            (Some(false), _) => return b,
            (_, Some(false)) => return a,
            _ => {}
        }
        if a == b {
            return a;
        }
        if self.node(a) == &Node::Not(b) || self.node(b) == &Node::Not(a) {
            return self.tt();
        }
        self.intern(Node::Or(a, b))
    }

    pub fn and_all(&mut self, parts: impl IntoIterator<Item = TermId>) -> TermId {
        let mut acc = self.tt();
        for p in parts {
            acc = self.and(acc, p);
        }
        acc
    }

    pub fn implies(&mut self, a: TermId, b: TermId) -> TermId {
        match (self.as_bool(a), self.as_bool(b)) {
            (Some(false), _) | (_, Some(true)) => return self.tt(),
            (Some(true), _) => return b,
            (_, Some(false)) => return self.not(a),
            _ => {}
        }
        if a == b {
            return self.tt();
        }
        self.intern(Node::Implies(a, b))
    }

    pub fn ite(&mut self, c: TermId, a: TermId, b: TermId) -> TermId {
        if let Some(v) = self.as_bool(c) {
            return if v { a } else { b };
        }
        if a == b {
            return a;
        }
        if self.sort(a) == Sort::Bool {
            match (self.as_bool(a), self.as_bool(b)) {
                (Some(true), Some(false)) => return c,
                (Some(false), Some(true)) => return self.not(c),
                _ => {}
            }
        }
        self.intern(Node::Ite(c, a, b))
    }

    pub fn eq(&mut self, a: TermId, b: TermId) -> TermId {
        if a == b {
            return self.tt();
        }
        if let (Some(x), Some(y)) = (self.as_int(a), self.as_int(b)) {
            return self.bool(x == y);
        }
        if let (Some(x), Some(y)) = (self.as_bool(a), self.as_bool(b)) {
            return self.bool(x == y);
        }
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.intern(Node::Eq(a, b))
    }

    pub fn lt(&mut self, a: TermId, b: TermId) -> TermId {
        if a == b {
            return self.ff();
        }
        if let (Some(x), Some(y)) = (self.as_int(a), self.as_int(b)) {
            return self.bool(x < y);
        }
        self.intern(Node::Lt(a, b))
    }

    pub fn le(&mut self, a: TermId, b: TermId) -> TermId {
        if a == b {
            return self.tt();
        }
        if let (Some(x), Some(y)) = (self.as_int(a), self.as_int(b)) {
            return self.bool(x <= y);
        }
        self.intern(Node::Le(a, b))
    }

    fn fold2(
        &mut self,
        a: TermId,
        b: TermId,
        f: impl Fn(i64, i64) -> Option<i64>,
    ) -> Option<TermId> {
        let v = f(self.as_int(a)?, self.as_int(b)?)?;
        Some(self.int(v))
    }

    pub fn add(&mut self, a: TermId, b: TermId) -> TermId {
        if let Some(t) = self.fold2(a, b, i64::checked_add) {
            return t;
        }
        match (self.as_int(a), self.as_int(b)) {
            (Some(0), _) => b,
            (_, Some(0)) => a,
            _ => self.intern(Node::Add(a, b)),
        }
    }

    pub fn sub(&mut self, a: TermId, b: TermId) -> TermId {
        if let Some(t) = self.fold2(a, b, i64::checked_sub) {
            return t;
        }
        if self.as_int(b) == Some(0) {
            return a;
        }
        self.intern(Node::Sub(a, b))
    }

    pub fn mul(&mut self, a: TermId, b: TermId) -> TermId {
        if let Some(t) = self.fold2(a, b, i64::checked_mul) {
            return t;
        }
        match (self.as_int(a), self.as_int(b)) {
            (Some(1), _) => b,
            (_, Some(1)) => a,
            (Some(0), _) | (_, Some(0)) => self.int(0),
            _ => self.intern(Node::Mul(a, b)),
        }
    }

    pub fn div(&mut self, a: TermId, b: TermId) -> TermId {
        if let Some(t) = self.fold2(a, b, |x, y| if y == 0 { None } else { x.checked_div(y) }) {
            return t;
        }
        if self.as_int(b) == Some(1) {
            return a;
        }
        self.intern(Node::Div(a, b))
    }

    pub fn neg(&mut self, a: TermId) -> TermId {
        match *self.node(a) {
            Node::Int(v) if v != i64::MIN => self.int(-v),
            Node::Neg(x) => x,
            _ => self.intern(Node::Neg(a)),
        }
    }

    pub fn abs(&mut self, a: TermId) -> TermId {
        match *self.node(a) {
            Node::Int(v) if v != i64::MIN => self.int(v.abs()),
            _ => self.intern(Node::Abs(a)),
        }
    }

    /// Rebuilds `n` with new children through the simplifying constructors.
    fn rebuild(&mut self, n: &Node, kids: &[TermId]) -> TermId {
        match n {
            Node::Int(_) | Node::Bool(_) | Node::Var(..) => self.intern(n.clone()),
            Node::Not(_) => self.not(kids[0]),
            Node::Neg(_) => self.neg(kids[0]),
            Node::Abs(_) => self.abs(kids[0]),
            Node::And(..) => self.and(kids[0], kids[1]),
            Node::Or(..) => self.or(kids[0], kids[1]),
            Node::Implies(..) => self.implies(kids[0], kids[1]),
            Node::Eq(..) => self.eq(kids[0], kids[1]),
            Node::Lt(..) => self.lt(kids[0], kids[1]),
            Node::Le(..) => self.le(kids[0], kids[1]),
            Node::Add(..) => self.add(kids[0], kids[1]),
            Node::Sub(..) => self.sub(kids[0], kids[1]),
            Node::Mul(..) => self.mul(kids[0], kids[1]),
            Node::Div(..) => self.div(kids[0], kids[1]),
            Node::Ite(..) => self.ite(kids[0], kids[1], kids[2]),
        }
    }

    /// Simultaneous substitution of variables.
    pub fn subst(&mut self, t: TermId, map: &HashMap<TermId, TermId>) -> TermId {
        if map.is_empty() {
            return t;
        }
        let mut memo = HashMap::new();
        self.subst_memo(t, map, &mut memo)
    }

    fn subst_memo(
        &mut self,
        t: TermId,
        map: &HashMap<TermId, TermId>,
        memo: &mut HashMap<TermId, TermId>,
    ) -> TermId {
        if let Some(&r) = map.get(&t) {
            return r;
        }
        if let Some(&r) = memo.get(&t) {
            return r;
        }
        let n = self.node(t).clone();
        let kids = n.children();
        let r = if kids.is_empty() {
            t
        } else {
            let new: Vec<TermId> = kids.iter().map(|&k| self.subst_memo(k, map, memo)).collect();
            if new == kids {
                t
            } else {
                self.rebuild(&n, &new)
            }
        };
        memo.insert(t, r);
        r
    }

    /// Terms reachable from `roots`, children before parents.
    pub fn postorder(&self, roots: &[TermId]) -> Vec<TermId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut out = Vec::new();
        let mut stack: Vec<(TermId, bool)> = roots.iter().rev().map(|&r| (r, false)).collect();
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                out.push(t);
                continue;
            }
            if seen[t.0 as usize] {
                continue;
            }
            seen[t.0 as usize] = true;
            stack.push((t, true));
            for k in self.node(t).children().into_iter().rev() {
                if !seen[k.0 as usize] {
                    stack.push((k, false));
                }
            }
        }
        out
    }

    /// Free variables of `roots`, sorted by name.
    pub fn vars(&self, roots: &[TermId]) -> Vec<(String, Sort)> {
        let mut out: BTreeMap<String, Sort> = BTreeMap::new();
        for t in self.postorder(roots) {
            if let Node::Var(name, sort) = self.node(t) {
                out.insert(name.clone(), *sort);
            }
        }
        out.into_iter().collect()
    }

    /// Whether `roots` need nonlinear arithmetic: a product of two
    /// non-constants, or a division by a non-constant.
    pub fn is_nonlinear(&self, roots: &[TermId]) -> bool {
        self.postorder(roots).into_iter().any(|t| match *self.node(t) {
            Node::Mul(a, b) => self.as_int(a).is_none() && self.as_int(b).is_none(),
            Node::Div(_, b) => self.as_int(b).is_none(),
            _ => false,
        })
    }

    pub fn logic(&self, roots: &[TermId]) -> &'static str {
        if self.is_nonlinear(roots) {
            "QF_NIA"
        } else {
            "QF_LIA"
        }
    }

    /// Evaluates `t` under `env`. `None` when a division by zero is needed,
    /// since SMT-LIB leaves that value unconstrained.
    pub fn eval(&self, t: TermId, env: &HashMap<&str, Value>) -> Option<Value> {
        let mut memo: HashMap<TermId, Option<Value>> = HashMap::new();
        self.eval_memo(t, env, &mut memo)
    }

    fn eval_memo(
        &self,
        t: TermId,
        env: &HashMap<&str, Value>,
        memo: &mut HashMap<TermId, Option<Value>>,
    ) -> Option<Value> {
        if let Some(v) = memo.get(&t) {
            return v.clone();
        }
        let int = |v: Option<Value>| -> Option<Int> {
            match v? {
                Value::Int(i) => Some(i),
                Value::Bool(_) => None,
            }
        };
        let boolean = |v: Option<Value>| v.and_then(|v| v.as_bool());
        let ev = |x: TermId, memo: &mut HashMap<TermId, Option<Value>>| self.eval_memo(x, env, memo);
        let v = match *self.node(t) {
            Node::Int(v) => Some(Value::int(v)),
            Node::Bool(b) => Some(Value::Bool(b)),
            Node::Var(ref name, _) => env.get(name.as_str()).cloned(),
            Node::Not(a) => boolean(ev(a, memo)).map(|b| Value::Bool(!b)),
            // Three-valued: a known dominating operand decides.
            Node::And(a, b) => match (boolean(ev(a, memo)), boolean(ev(b, memo))) {
                (Some(false), _) | (_, Some(false)) => Some(Value::Bool(false)),
                (Some(true), Some(true)) => Some(Value::Bool(true)),
                _ => None,
            },
            Node::Or(a, b) => match (boolean(ev(a, memo)), boolean(ev(b, memo))) {
                (Some(true), _) | (_, Some(true)) => Some(Value::Bool(true)),
                (Some(false), Some(false)) => Some(Value::Bool(false)),
                _ => None,
            },
            Node::Implies(a, b) => match (boolean(ev(a, memo)), boolean(ev(b, memo))) {
                (Some(false), _) | (_, Some(true)) => Some(Value::Bool(true)),
                (Some(true), Some(false)) => Some(Value::Bool(false)),
                _ => None,
            },
            Node::Ite(c, a, b) => match boolean(ev(c, memo)) {
                Some(true) => ev(a, memo),
                Some(false) => ev(b, memo),
                None => {
                    let (x, y) = (ev(a, memo), ev(b, memo));
                    if x.is_some() && x == y {
                        x
                    } else {
                        None
                    }
                }
            },
            Node::Eq(a, b) => {
                let (x, y) = (ev(a, memo), ev(b, memo));
                match (x, y) {
                    (Some(x), Some(y)) => Some(Value::Bool(x == y)),
                    _ => None,
                }
            }
            Node::Lt(a, b) => {
                let (x, y) = (int(ev(a, memo)), int(ev(b, memo)));
                Some(Value::Bool(x? < y?))
            }
            Node::Le(a, b) => {
                let (x, y) = (int(ev(a, memo)), int(ev(b, memo)));
                Some(Value::Bool(x? <= y?))
            }
            Node::Add(a, b) => {
                let (x, y) = (int(ev(a, memo)), int(ev(b, memo)));
                Some(Value::Int(x?.add(&y?)))
            }
            Node::Sub(a, b) => {
                let (x, y) = (int(ev(a, memo)), int(ev(b, memo)));
                Some(Value::Int(x?.sub(&y?)))
            }
            Node::Mul(a, b) => {
                let (x, y) = (int(ev(a, memo)), int(ev(b, memo)));
                Some(Value::Int(x?.mul(&y?)))
            }
            Node::Div(a, b) => {
                let (x, y) = (int(ev(a, memo)), int(ev(b, memo)));
                x?.div(&y?).map(Value::Int)
            }
            Node::Neg(a) => int(ev(a, memo)).map(|x| Value::Int(x.neg())),
            Node::Abs(a) => int(ev(a, memo)).map(|x| Value::Int(x.abs())),
        };
        memo.insert(t, v.clone());
        v
    }
}

/// SMT-LIB spelling of a variable.
pub fn smt_symbol(name: &str) -> String {
    format!("|{name}|")
}

fn smt_sort(s: Sort) -> &'static str {
    match s {
        Sort::Int => "Int",
        Sort::Bool => "Bool",
    }
}

fn smt_int(v: i64) -> String {
    if v < 0 {
        format!("(- {})", v.unsigned_abs())
    } else {
        v.to_string()
    }
}

/// Prints SMT-LIB definitions for the shared subterms of `root` followed by
/// an expression for `root` itself. Names of definitions start with `prefix`.
pub fn smt_term(store: &TermStore, root: TermId, prefix: &str) -> (Vec<String>, String) {
    let order = store.postorder(&[root]);
    let mut uses: HashMap<TermId, u32> = HashMap::new();
    for &t in &order {
        for k in store.node(t).children() {
            *uses.entry(k).or_default() += 1;
        }
    }
    let mut names: HashMap<TermId, String> = HashMap::new();
    let mut defs = Vec::new();
    let mut text: HashMap<TermId, String> = HashMap::new();
    for &t in &order {
        let s = render(store, t, &|k| {
            names
                .get(&k)
                .cloned()
                .unwrap_or_else(|| text[&k].clone())
        });
        let shared = uses.get(&t).copied().unwrap_or(0) > 1 && !store.node(t).children().is_empty();
        if shared && t != root {
            let name = format!("{prefix}{}", t.0);
            defs.push(format!(
                "(define-fun {name} () {} {s})",
                smt_sort(store.sort(t))
            ));
            names.insert(t, name);
        } else {
            text.insert(t, s);
        }
    }
    let body = names.get(&root).cloned().unwrap_or_else(|| text[&root].clone());
    (defs, body)
}

fn render(store: &TermStore, t: TermId, sub: &dyn Fn(TermId) -> String) -> String {
    let bin = |op: &str, a: TermId, b: TermId| format!("({op} {} {})", sub(a), sub(b));
    match *store.node(t) {
        Node::Int(v) => smt_int(v),
        Node::Bool(b) => b.to_string(),
        Node::Var(ref name, _) => smt_symbol(name),
        Node::Not(a) => format!("(not {})", sub(a)),
        Node::Neg(a) => format!("(- {})", sub(a)),
        Node::Abs(a) => {
            let a = sub(a);
            format!("(ite (>= {a} 0) {a} (- {a}))")
        }
        Node::And(a, b) => bin("and", a, b),
        Node::Or(a, b) => bin("or", a, b),
        Node::Implies(a, b) => bin("=>", a, b),
        Node::Eq(a, b) => bin("=", a, b),
        Node::Lt(a, b) => bin("<", a, b),
        Node::Le(a, b) => bin("<=", a, b),
        Node::Add(a, b) => bin("+", a, b),
        Node::Sub(a, b) => bin("-", a, b),
        Node::Mul(a, b) => bin("*", a, b),
        Node::Div(a, b) => {
            // SMT-LIB `div` is Euclidean; this agrees with truncation.
            let (a, b) = (sub(a), sub(b));
            format!("(ite (>= {a} 0) (div {a} {b}) (- (div (- {a}) {b})))")
        }
        Node::Ite(c, a, b) => format!("(ite {} {} {})", sub(c), sub(a), sub(b)),
    }
}

/// Declarations for the free variables of `roots`.
pub fn smt_declarations(store: &TermStore, roots: &[TermId]) -> String {
    let mut out = String::new();
    for (name, sort) in store.vars(roots) {
        let _ = writeln!(out, "(declare-const {} {})", smt_symbol(&name), smt_sort(sort));
    }
    out
}

/// A complete script checking whether `goal` can be false.
pub fn smt_script(store: &TermStore, goal: TermId) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(set-logic {})", store.logic(&[goal]));
    out.push_str(&smt_declarations(store, &[goal]));
    let (defs, body) = smt_term(store, goal, "t!");
    for d in defs {
        out.push_str(&d);
        out.push('\n');
    }
    let _ = writeln!(out, "(assert (not {body}))");
    out.push_str("(check-sat)\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_consing_shares_structure() {
        let mut s = TermStore::new();
        let x = s.var("x", Sort::Int);
        let one = s.int(1);
        let a = s.add(x, one);
        let b = s.add(x, one);
        assert_eq!(a, b);
        let e1 = s.eq(a, x);
        let e2 = s.eq(x, a);
        assert_eq!(e1, e2);
    }

    #[test]
    fn constructors_simplify() {
        let mut s = TermStore::new();
        let p = s.var("p", Sort::Bool);
        let np = s.not(p);
        assert_eq!(s.not(np), p);
        let f = s.ff();
        assert_eq!(s.and(p, np), f);
        let t = s.tt();
        assert_eq!(s.implies(f, p), t);
        assert_eq!(s.implies(p, f), np);
        let two = s.int(2);
        let three = s.int(3);
        let six = s.int(6);
        assert_eq!(s.mul(two, three), six);
        let m7 = s.int(-7);
        let m3 = s.int(-3);
        assert_eq!(s.div(m7, two), m3);
    }

    #[test]
    fn substitution_is_simultaneous() {
        let mut s = TermStore::new();
        let x = s.var("x", Sort::Int);
        let y = s.var("y", Sort::Int);
        let lt = s.lt(x, y);
        let map = HashMap::from([(x, y), (y, x)]);
        let swapped = s.subst(lt, &map);
        assert_eq!(*s.node(swapped), Node::Lt(y, x));
    }

    #[test]
    fn script_shape() {
        let mut s = TermStore::new();
        let x = s.var("x", Sort::Int);
        let y = s.var("y", Sort::Int);
        let d = s.div(x, y);
        let zero = s.int(0);
        let g = s.lt(d, zero);
        let h = s.eq(d, zero);
        let goal = s.or(g, h);
        let text = smt_script(&s, goal);
        assert!(text.starts_with("(set-logic QF_NIA)\n(declare-const |x| Int)\n(declare-const |y| Int)\n"));
        assert!(text.contains("(define-fun t!"));
        assert!(text.ends_with("(check-sat)\n"));
    }

    #[test]
    fn eval_three_valued() {
        let mut s = TermStore::new();
        let x = s.var("x", Sort::Int);
        let zero = s.int(0);
        let d = s.div(x, zero);
        let e = s.eq(d, zero);
        let f = s.ff();
        let guarded = s.and(f, e);
        let env = HashMap::from([("x", Value::int(4))]);
        assert_eq!(s.eval(e, &env), None);
        assert_eq!(s.eval(guarded, &env), Some(Value::Bool(false)));
        let m = s.int(-7);
        let two = s.int(2);
        let q = s.intern(Node::Div(m, two));
        assert_eq!(s.eval(q, &env), Some(Value::int(-3)));
    }
}
