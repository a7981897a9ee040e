//! Verification conditions for the three detection steps.
//!
//! Each assertion becomes one goal obtained by backward weakest-precondition
//! computation over its function. Loops are cut by havocking the variables
//! they modify, calls are havocked on their target and the globals they may
//! write, and for subsumption goals the callees merged into a co-reached
//! group are inlined. Parameters and globals are unconstrained at entry.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use serde::Serialize;

use crate::annotate::AnnotatedProgram;
use crate::blocks::CoReachedGroup;
use crate::lang::ast::*;
use crate::lang::simplify::{negate, simplify_bool};
use crate::logic::{smt_script, Sort, TermId, TermStore};
use crate::status::{LabelStatus, Status, StatusMap};

/// What an assertion is meant to establish.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Purpose {
    /// The label predicate never holds at the label.
    Infeasible { label: LabelId },
    /// The label predicate always holds at the label.
    AlwaysTrue { label: LabelId },
    /// Whenever the group is traversed, `from` holding implies `to` holding.
    Implies { group: u32, from: LabelId, to: LabelId },
}

impl Purpose {
    pub fn step(self) -> u8 {
        match self {
            Purpose::Infeasible { .. } => 1,
            Purpose::AlwaysTrue { .. } => 2,
            Purpose::Implies { .. } => 3,
        }
    }

    /// `step1_l9`, `step2_l3`, `step3_g1_l1_l3`.
    pub fn name(self) -> String {
        match self {
            Purpose::Infeasible { label } => format!("step1_{label}"),
            Purpose::AlwaysTrue { label } => format!("step2_{label}"),
            Purpose::Implies { group, from, to } => format!("step3_g{group}_{from}_{to}"),
        }
    }
}

/// A condition attached to a program location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assertion {
    pub function: String,
    pub location: LocationId,
    /// Readable form of the condition; ghost variables are spelled `vl$i`.
    pub formula: Expr,
    pub purpose: Purpose,
}

/// A goal to be proved valid.
#[derive(Debug, Clone)]
pub struct VerificationCondition {
    /// `vc_` followed by the purpose name.
    pub id: String,
    pub function: String,
    pub purpose: Purpose,
    pub store: Arc<TermStore>,
    pub goal: TermId,
}

impl VerificationCondition {
    pub fn logic(&self) -> &'static str {
        self.store.logic(&[self.goal])
    }

    /// Stand-alone SMT-LIB script; `unsat` means the goal is valid.
    pub fn smtlib(&self) -> String {
        smt_script(&self.store, self.goal)
    }

    pub fn file_name(&self) -> String {
        format!("{}.smt2", self.id)
    }
}

/// The labels of a group left to compare after steps 1 and 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupPlan {
    pub group_id: u32,
    pub function: String,
    pub survivors: Vec<LabelId>,
}

fn ghost(id: LabelId) -> String {
    format!("vl${}", id.0)
}

fn label_assertion(ap: &AnnotatedProgram, owners: &HashMap<LabelId, String>, id: LabelId, step1: bool) -> Assertion {
    let label = ap.label(id).expect("label exists");
    let (formula, purpose) = if step1 {
        (
            simplify_bool(&Expr::not(label.predicate.clone())),
            Purpose::Infeasible { label: id },
        )
    } else {
        (label.predicate.clone(), Purpose::AlwaysTrue { label: id })
    };
    Assertion {
        function: owners[&id].clone(),
        location: label.location,
        formula,
        purpose,
    }
}

/// One infeasibility assertion per label, in id order.
pub fn gen_step1(ap: &AnnotatedProgram) -> Vec<Assertion> {
    let owners = ap.label_functions();
    ap.labels
        .iter()
        .map(|l| label_assertion(ap, &owners, l.id, true))
        .collect()
}

/// One always-true assertion per label that has no verdict yet.
pub fn gen_step2(ap: &AnnotatedProgram, statuses: &StatusMap) -> Vec<Assertion> {
    let owners = ap.label_functions();
    ap.labels
        .iter()
        .filter(|l| undecided(statuses, l.id))
        .map(|l| label_assertion(ap, &owners, l.id, false))
        .collect()
}

fn undecided(statuses: &StatusMap, id: LabelId) -> bool {
    statuses
        .get(&id)
        .is_none_or(|s| s.status == Status::Unknown)
}

/// For each group, the ordered pairs of its surviving labels. Infeasible
/// labels and duplicates are left out; groups with fewer than two survivors
/// produce no assertions.
pub fn gen_step3(
    groups: &[CoReachedGroup],
    statuses: &StatusMap,
) -> Vec<(GroupPlan, Vec<Assertion>)> {
    let mut out = Vec::new();
    for g in groups {
        let survivors: Vec<LabelId> = g
            .labels
            .iter()
            .copied()
            .filter(|&l| {
                !matches!(statuses.get(&l), Some(s) if s.status == Status::Infeasible || s.status.is_duplicate())
            })
            .collect();
        let mut asserts = Vec::new();
        for &from in &survivors {
            for &to in &survivors {
                if from != to {
                    asserts.push(Assertion {
                        function: g.function.clone(),
                        location: g.anchor,
                        formula: Expr::or(Expr::not(Expr::var(ghost(from))), Expr::var(ghost(to))),
                        purpose: Purpose::Implies {
                            group: g.group_id,
                            from,
                            to,
                        },
                    });
                }
            }
        }
        out.push((
            GroupPlan {
                group_id: g.group_id,
                function: g.function.clone(),
                survivors,
            },
            asserts,
        ));
    }
    out
}

/// Labels whose predicate is `true` and that sit, together with the two
/// decision-coverage labels `d` and `!d` of a division-free decision, right
/// before that decision. Such a label is covered exactly when one of the
/// other two is.
pub fn pair_duplicates(ap: &AnnotatedProgram, statuses: &StatusMap) -> Vec<LabelStatus> {
    let mut out = Vec::new();
    let pred = |id: LabelId| &ap.label(id).expect("label exists").predicate;
    let mut scan = |labels: &[LabelId], cond: &Expr| {
        if cond.has_division() {
            return;
        }
        let not_cond = negate(cond);
        let pos = labels.iter().copied().find(|&l| pred(l) == cond);
        let neg = labels.iter().copied().find(|&l| *pred(l) == not_cond);
        let (Some(a), Some(b)) = (pos, neg) else { return };
        let infeasible = |l: LabelId| matches!(statuses.get(&l), Some(s) if s.status == Status::Infeasible);
        for &l in labels {
            if *pred(l) != Expr::Bool(true) || !undecided(statuses, l) {
                continue;
            }
            let status = match (infeasible(a), infeasible(b)) {
                (false, false) => Status::DuplicateOfPair(a, b),
                (true, false) => Status::DuplicateOf(b),
                (false, true) => Status::DuplicateOf(a),
                (true, true) => continue,
            };
            out.push(LabelStatus { id: l, status, step: 2 });
        }
    };
    fn visit(block: &Block, scan: &mut dyn FnMut(&[LabelId], &Expr)) {
        let mut pending: Vec<LabelId> = Vec::new();
        for s in &block.stmts {
            match &s.kind {
                StmtKind::Label(id) => {
                    pending.push(*id);
                    continue;
                }
                StmtKind::If {
                    cond,
                    then_block,
                    else_block,
                } => {
                    scan(&pending, cond);
                    visit(then_block, scan);
                    visit(else_block, scan);
                }
                StmtKind::While { cond, head, body } => {
                    let head_labels: Vec<LabelId> = head.iter().filter_map(Stmt::label_id).collect();
                    scan(&head_labels, cond);
                    visit(body, scan);
                }
                _ => {}
            }
            pending.clear();
        }
    }
    for f in &ap.program.functions {
        visit(&f.body, &mut scan);
    }
    out.sort_by_key(|s| s.id);
    out.dedup_by_key(|s| s.id);
    out
}

/// Verification conditions for `assertions`, in input order. Assertions of
/// one function share a term store.
pub fn wp(ap: &AnnotatedProgram, groups: &[CoReachedGroup], assertions: &[Assertion]) -> Vec<VerificationCondition> {
    let owners = ap.label_functions();
    let preds: HashMap<LabelId, &Expr> = ap.labels.iter().map(|l| (l.id, &l.predicate)).collect();
    let mut by_fn: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, a) in assertions.iter().enumerate() {
        by_fn.entry(a.function.as_str()).or_default().push(i);
    }
    let mut out: Vec<Option<VerificationCondition>> = vec![None; assertions.len()];
    for (fname, idxs) in by_fn {
        let func = ap.program.function(fname).expect("assertion in a known function");
        let mut store = TermStore::new();
        let mut goals = Vec::new();
        for &i in &idxs {
            let a = &assertions[i];
            let (target, inline) = match a.purpose {
                Purpose::Infeasible { label } => (Target::Label { label, negated: true }, HashSet::new()),
                Purpose::AlwaysTrue { label } => (Target::Label { label, negated: false }, HashSet::new()),
                Purpose::Implies { group, from, to } => {
                    let g = groups.iter().find(|g| g.group_id == group).expect("group exists");
                    (
                        Target::Pair {
                            from,
                            to,
                            anchor: a.location,
                        },
                        inline_set(&ap.program, fname, &g.labels, &owners),
                    )
                }
            };
            let mut engine = Engine {
                p: &ap.program,
                st: &mut store,
                target,
                inline: &inline,
                preds: &preds,
            };
            let ctx = Ctx {
                func,
                prefix: String::new(),
            };
            let tt = engine.st.tt();
            let post = Post {
                normal: tt,
                brk: tt,
                cont: tt,
                ret: Ret::Top,
            };
            let mut goal = engine.block(&ctx, &func.body, post);
            if func.name == ap.program.entry {
                // The entry function starts right after the global initializers.
                for g in ap.program.globals.iter().rev() {
                    let x = engine.var(&ctx, &g.name);
                    goal = match &g.init {
                        Some(e) => engine.assign_expr(&ctx, goal, x, e),
                        None => {
                            let d = engine.default(g.ty);
                            engine.assign(goal, x, d)
                        }
                    };
                }
            }
            goals.push((i, goal));
        }
        let store = Arc::new(store);
        for (i, goal) in goals {
            let a = &assertions[i];
            out[i] = Some(VerificationCondition {
                id: format!("vc_{}", a.purpose.name()),
                function: a.function.clone(),
                purpose: a.purpose,
                store: Arc::clone(&store),
                goal,
            });
        }
    }
    out.into_iter().map(|v| v.expect("every assertion handled")).collect()
}

/// Callees of `host` that lead to a function owning one of `labels`.
fn inline_set(
    p: &Program,
    host: &str,
    labels: &[LabelId],
    owners: &HashMap<LabelId, String>,
) -> HashSet<String> {
    let owning: BTreeSet<&str> = labels.iter().map(|l| owners[l].as_str()).collect();
    let mut memo: HashMap<String, bool> = HashMap::new();
    fn reaches(
        p: &Program,
        f: &str,
        owning: &BTreeSet<&str>,
        memo: &mut HashMap<String, bool>,
        stack: &mut Vec<String>,
    ) -> bool {
        if let Some(&v) = memo.get(f) {
            return v;
        }
        if stack.iter().any(|s| s == f) {
            return false;
        }
        stack.push(f.to_string());
        let func = p.function(f).expect("resolved callee");
        let v = owning.contains(f)
            || crate::lang::typeck::callees(func)
                .iter()
                .any(|c| reaches(p, c, owning, memo, stack));
        stack.pop();
        memo.insert(f.to_string(), v);
        v
    }
    p.functions
        .iter()
        .filter(|f| f.name != host && reaches(p, &f.name, &owning, &mut memo, &mut Vec::new()))
        .map(|f| f.name.clone())
        .collect()
}

#[derive(Debug, Clone, Copy)]
enum Target {
    Label { label: LabelId, negated: bool },
    Pair { from: LabelId, to: LabelId, anchor: LocationId },
}

#[derive(Clone, Copy)]
enum Ret {
    /// Returning from the analysed function ends the obligation.
    Top,
    /// Returning from an inlined callee continues with `q` after assigning `target`.
    Inline { target: Option<TermId>, q: TermId },
}

#[derive(Clone, Copy)]
struct Post {
    normal: TermId,
    brk: TermId,
    cont: TermId,
    ret: Ret,
}

struct Ctx<'f> {
    func: &'f Function,
    /// Prepended to locals of an inlined callee.
    prefix: String,
}

struct Engine<'a, 's> {
    p: &'a Program,
    st: &'s mut TermStore,
    target: Target,
    inline: &'a HashSet<String>,
    preds: &'a HashMap<LabelId, &'a Expr>,
}

fn sort_of(t: Type) -> Sort {
    match t {
        Type::Bool => Sort::Bool,
        _ => Sort::Int,
    }
}

impl Engine<'_, '_> {
    fn var(&mut self, ctx: &Ctx<'_>, name: &str) -> TermId {
        let ty = self
            .p
            .var_type(ctx.func, name)
            .unwrap_or_else(|| panic!("unknown variable {name}"));
        if ctx.func.vars.contains_key(name) {
            let full = format!("{}{name}", ctx.prefix);
            self.st.var(&full, sort_of(ty))
        } else {
            self.st.var(name, sort_of(ty))
        }
    }

    fn default(&mut self, ty: Type) -> TermId {
        match ty {
            Type::Bool => self.st.ff(),
            _ => self.st.int(0),
        }
    }

    fn term(&mut self, ctx: &Ctx<'_>, e: &Expr) -> TermId {
        match e {
            Expr::Int(v) => self.st.int(*v),
            Expr::Bool(b) => self.st.bool(*b),
            Expr::Var(x) => self.var(ctx, x),
            Expr::Unary(op, a) => {
                let a = self.term(ctx, a);
                match op {
                    UnOp::Neg => self.st.neg(a),
                    UnOp::Not => self.st.not(a),
                    UnOp::Abs => self.st.abs(a),
                }
            }
            Expr::Binary(op, l, r) => {
                let a = self.term(ctx, l);
                let b = self.term(ctx, r);
                let st = &mut *self.st;
                match op {
                    BinOp::Add => st.add(a, b),
                    BinOp::Sub => st.sub(a, b),
                    BinOp::Mul => st.mul(a, b),
                    BinOp::Div => st.div(a, b),
                    BinOp::Lt => st.lt(a, b),
                    BinOp::Le => st.le(a, b),
                    BinOp::Gt => st.lt(b, a),
                    BinOp::Ge => st.le(b, a),
                    BinOp::Eq => st.eq(a, b),
                    BinOp::Ne => {
                        let eq = st.eq(a, b);
                        st.not(eq)
                    }
                    BinOp::And => st.and(a, b),
                    BinOp::Or => st.or(a, b),
                }
            }
        }
    }

    /// Evaluation of `e` does not divide by zero, with `&&` and `||` short-circuiting.
    fn def(&mut self, ctx: &Ctx<'_>, e: &Expr) -> TermId {
        match e {
            Expr::Int(_) | Expr::Bool(_) | Expr::Var(_) => self.st.tt(),
            Expr::Unary(_, a) => self.def(ctx, a),
            Expr::Binary(op, l, r) => {
                let dl = self.def(ctx, l);
                let dr = self.def(ctx, r);
                match op {
                    BinOp::And | BinOp::Or => {
                        let mut c = self.term(ctx, l);
                        if *op == BinOp::Or {
                            c = self.st.not(c);
                        }
                        let guarded = self.st.implies(c, dr);
                        self.st.and(dl, guarded)
                    }
                    BinOp::Div => {
                        let d = self.term(ctx, r);
                        let zero = self.st.int(0);
                        let is_zero = self.st.eq(d, zero);
                        let nz = self.st.not(is_zero);
                        let both = self.st.and(dl, dr);
                        self.st.and(both, nz)
                    }
                    _ => self.st.and(dl, dr),
                }
            }
        }
    }

    fn defs(&mut self, ctx: &Ctx<'_>, es: &[&Expr]) -> TermId {
        let parts: Vec<TermId> = es.iter().map(|e| self.def(ctx, e)).collect();
        self.st.and_all(parts)
    }

    /// Label predicate under strict evaluation: every divisor nonzero and the predicate true.
    fn holds(&mut self, ctx: &Ctx<'_>, phi: &Expr) -> TermId {
        let mut parts = Vec::new();
        let mut divisors = Vec::new();
        phi.walk(&mut |e| {
            if let Expr::Binary(BinOp::Div, _, d) = e {
                divisors.push(d.as_ref());
            }
        });
        for d in divisors {
            let t = self.term(ctx, d);
            let zero = self.st.int(0);
            let is_zero = self.st.eq(t, zero);
            parts.push(self.st.not(is_zero));
        }
        parts.push(self.term(ctx, phi));
        self.st.and_all(parts)
    }

    fn assign(&mut self, q: TermId, x: TermId, v: TermId) -> TermId {
        self.st.subst(q, &HashMap::from([(x, v)]))
    }

    fn block(&mut self, ctx: &Ctx<'_>, b: &Block, post: Post) -> TermId {
        self.stmts(ctx, &b.stmts, post)
    }

    fn stmts(&mut self, ctx: &Ctx<'_>, stmts: &[Stmt], post: Post) -> TermId {
        let mut q = post.normal;
        for s in stmts.iter().rev() {
            q = self.stmt(ctx, s, q, post);
        }
        q
    }

    fn stmt(&mut self, ctx: &Ctx<'_>, s: &Stmt, mut q: TermId, post: Post) -> TermId {
        if let Target::Pair { from, to, anchor } = self.target {
            if s.loc == anchor && ctx.prefix.is_empty() {
                let a = self.st.var(&ghost(from), Sort::Bool);
                let b = self.st.var(&ghost(to), Sort::Bool);
                let imp = self.st.implies(a, b);
                q = self.st.and(imp, q);
            }
        }
        match &s.kind {
            StmtKind::Label(id) => {
                let id = *id;
                match self.target {
                    Target::Label { label, negated } if label == id => {
                        let h = self.holds(ctx, self.preds[&id]);
                        let g = if negated { self.st.not(h) } else { h };
                        self.st.and(g, q)
                    }
                    Target::Pair { from, to, .. } if id == from || id == to => {
                        let h = self.holds(ctx, self.preds[&id]);
                        let v = self.st.var(&ghost(id), Sort::Bool);
                        self.assign(q, v, h)
                    }
                    _ => q,
                }
            }
            StmtKind::Decl { name, ty, init } => {
                let x = self.var(ctx, name);
                match init {
                    Some(e) => self.assign_expr(ctx, q, x, e),
                    None => {
                        let d = self.default(*ty);
                        self.assign(q, x, d)
                    }
                }
            }
            StmtKind::Assign { name, value } => {
                let x = self.var(ctx, name);
                self.assign_expr(ctx, q, x, value)
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                let inner = Post { normal: q, ..post };
                let wa = self.block(ctx, then_block, inner);
                let wb = self.block(ctx, else_block, inner);
                let c = self.term(ctx, cond);
                let nc = self.st.not(c);
                let ta = self.st.implies(c, wa);
                let tb = self.st.implies(nc, wb);
                let both = self.st.and(ta, tb);
                let d = self.def(ctx, cond);
                self.st.implies(d, both)
            }
            StmtKind::While { cond, head, body } => {
                let tt = self.st.tt();
                let wbody = self.block(
                    ctx,
                    body,
                    Post {
                        normal: tt,
                        brk: q,
                        cont: tt,
                        ret: post.ret,
                    },
                );
                let c = self.term(ctx, cond);
                let nc = self.st.not(c);
                let enter = self.st.implies(c, wbody);
                let leave = self.st.implies(nc, q);
                let both = self.st.and(enter, leave);
                let d = self.def(ctx, cond);
                let test = self.st.implies(d, both);
                let w = self.stmts(
                    ctx,
                    head,
                    Post {
                        normal: test,
                        ..post
                    },
                );
                let mut modified = BTreeSet::new();
                for h in head {
                    self.modified(ctx, h, &mut modified);
                }
                self.modified(ctx, s, &mut modified);
                let mut map = HashMap::new();
                for (name, sort) in modified {
                    let old = self.st.var(&name, sort);
                    let new = self.st.fresh(&name, sort);
                    map.insert(old, new);
                }
                self.st.subst(w, &map)
            }
            StmtKind::Call {
                callee,
                args,
                target,
            } => {
                let f = self.p.function(callee).expect("resolved callee");
                let arg_refs: Vec<&Expr> = args.iter().collect();
                let d = self.defs(ctx, &arg_refs);
                let tvar = target.as_ref().map(|t| self.var(ctx, &t.name));
                if self.inline.contains(callee) {
                    let cctx = Ctx {
                        func: f,
                        prefix: format!("{}{}.", ctx.prefix, f.name),
                    };
                    let normal = match tvar {
                        Some(x) if f.ret != Type::Void => {
                            let dv = self.default(f.ret);
                            self.assign(q, x, dv)
                        }
                        _ => q,
                    };
                    let tt = self.st.tt();
                    let w = self.block(
                        &cctx,
                        &f.body,
                        Post {
                            normal,
                            brk: tt,
                            cont: tt,
                            ret: Ret::Inline { target: tvar, q },
                        },
                    );
                    let mut map = HashMap::new();
                    for (param, a) in f.params.iter().zip(args) {
                        let pv = self.var(&cctx, &param.name);
                        let av = self.term(ctx, a);
                        map.insert(pv, av);
                    }
                    let w = self.st.subst(w, &map);
                    self.st.implies(d, w)
                } else {
                    let mut map = HashMap::new();
                    if let Some(x) = tvar {
                        let (name, sort) = self.var_name(x);
                        map.insert(x, self.st.fresh(&name, sort));
                    }
                    for g in &f.writes {
                        let gv = self.var(&Ctx { func: ctx.func, prefix: String::new() }, g);
                        let (name, sort) = self.var_name(gv);
                        map.insert(gv, self.st.fresh(&name, sort));
                    }
                    let w = self.st.subst(q, &map);
                    self.st.implies(d, w)
                }
            }
            StmtKind::Return(e) => {
                let (d, v) = match e {
                    Some(e) => (self.def(ctx, e), Some(self.term(ctx, e))),
                    None => (self.st.tt(), None),
                };
                let after = match post.ret {
                    Ret::Top => self.st.tt(),
                    Ret::Inline { target, q } => match (target, v) {
                        (Some(x), Some(v)) => self.assign(q, x, v),
                        _ => q,
                    },
                };
                self.st.implies(d, after)
            }
            StmtKind::Break => post.brk,
            StmtKind::Continue => post.cont,
            StmtKind::Exit => self.st.tt(),
            StmtKind::Assert(e) => {
                let d = self.def(ctx, e);
                let c = self.term(ctx, e);
                let ok = self.st.and(d, c);
                self.st.implies(ok, q)
            }
        }
    }

    fn assign_expr(&mut self, ctx: &Ctx<'_>, q: TermId, x: TermId, e: &Expr) -> TermId {
        let d = self.def(ctx, e);
        let v = self.term(ctx, e);
        let w = self.assign(q, x, v);
        self.st.implies(d, w)
    }

    fn var_name(&self, t: TermId) -> (String, Sort) {
        match self.st.node(t) {
            crate::logic::Node::Var(name, sort) => (name.clone(), *sort),
            _ => unreachable!("variables translate to variable terms"),
        }
    }

    /// Variables the statement may change, as term names.
    fn modified(&mut self, ctx: &Ctx<'_>, s: &Stmt, out: &mut BTreeSet<(String, Sort)>) {
        let mut names: Vec<String> = Vec::new();
        let mut globals: Vec<String> = Vec::new();
        s.walk(&mut |t| match &t.kind {
            StmtKind::Decl { name, .. } | StmtKind::Assign { name, .. } => names.push(name.clone()),
            StmtKind::Call { callee, target, .. } => {
                if let Some(t) = target {
                    names.push(t.name.clone());
                }
                if let Some(f) = self.p.function(callee) {
                    globals.extend(f.writes.iter().cloned());
                }
            }
            _ => {}
        });
        for n in names {
            let v = self.var(ctx, &n);
            out.insert(self.var_name(v));
        }
        let top = Ctx {
            func: ctx.func,
            prefix: String::new(),
        };
        for g in globals {
            let v = self.var(&top, &g);
            out.insert(self.var_name(v));
        }
    }
}
