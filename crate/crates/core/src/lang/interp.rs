//! Reference interpreter.
//!
//! Execution is a deterministic big-step walk that reports every visited
//! location to an [`Observer`]. [`execute`] records a full [`Trace`];
//! coverage measurement instead evaluates label predicates on the fly.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::annotate::Label;
use crate::error::{Error, Result};
use crate::lang::ast::*;
use crate::lang::value::{Int, Value};

pub const DEFAULT_FUEL: u64 = 1_000_000;
pub const MAX_CALL_DEPTH: usize = 1000;

/// Input vector for the entry function.
pub type TestDatum = Vec<Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Returned,
    Exited,
    FuelExhausted,
    DivisionByZero,
    AssertionFailed,
    CallDepthExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub loc: LocationId,
    /// Globals and the variables in scope in the current frame.
    pub state: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub entries: Vec<TraceEntry>,
    pub termination: Termination,
    pub return_value: Option<Value>,
    /// Location of the statement that aborted the run, if any.
    pub fault: Option<LocationId>,
}

impl Trace {
    pub fn locations(&self) -> impl Iterator<Item = LocationId> + '_ {
        self.entries.iter().map(|e| e.loc)
    }
}

/// Read access to a variable environment.
pub trait Env {
    fn get(&self, name: &str) -> Option<&Value>;
}

impl Env for BTreeMap<String, Value> {
    fn get(&self, name: &str) -> Option<&Value> {
        BTreeMap::get(self, name)
    }
}

impl Env for HashMap<String, Value> {
    fn get(&self, name: &str) -> Option<&Value> {
        HashMap::get(self, name)
    }
}

/// The machine state at one point of the run, as seen from the current frame.
pub struct StateView<'a> {
    globals: &'a HashMap<String, Value>,
    locals: &'a HashMap<String, Value>,
}

impl Env for StateView<'_> {
    fn get(&self, name: &str) -> Option<&Value> {
        self.locals.get(name).or_else(|| self.globals.get(name))
    }
}

impl StateView<'_> {
    pub fn snapshot(&self) -> BTreeMap<String, Value> {
        let mut out: BTreeMap<String, Value> = self
            .globals
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        out.extend(self.locals.iter().map(|(k, v)| (k.clone(), v.clone())));
        out
    }
}

/// Callbacks fired during execution. All methods default to no-ops.
pub trait Observer {
    /// Every visited location, before the statement runs.
    fn step(&mut self, _loc: LocationId, _state: &StateView<'_>) {}
    /// A label statement was reached.
    fn label(&mut self, _id: LabelId, _loc: LocationId, _state: &StateView<'_>) {}
    /// A decision (`if` or `while` condition) is about to be evaluated.
    fn decision(&mut self, _loc: LocationId, _cond: &Expr, _state: &StateView<'_>) {}
}

impl Observer for () {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    DivisionByZero,
    Unbound(String),
}

/// Evaluates `e`. With `strict`, `&&`/`||` evaluate both operands, so a
/// division by zero anywhere makes the whole expression fail.
pub fn eval(e: &Expr, env: &dyn Env, strict: bool) -> std::result::Result<Value, Fault> {
    Ok(match e {
        Expr::Int(v) => Value::int(*v),
        Expr::Bool(b) => Value::Bool(*b),
        Expr::Var(name) => env
            .get(name)
            .cloned()
            .ok_or_else(|| Fault::Unbound(name.clone()))?,
        Expr::Unary(op, x) => {
            let v = eval(x, env, strict)?;
            match (op, v) {
                (UnOp::Not, Value::Bool(b)) => Value::Bool(!b),
                (UnOp::Neg, Value::Int(i)) => Value::Int(i.neg()),
                (UnOp::Abs, Value::Int(i)) => Value::Int(i.abs()),
                (op, v) => panic!("ill-typed unary {op:?} on {v}"),
            }
        }
        Expr::Binary(op @ (BinOp::And | BinOp::Or), l, r) => {
            let a = as_bool(eval(l, env, strict)?);
            let short = if *op == BinOp::And { !a } else { a };
            if short && !strict {
                return Ok(Value::Bool(a));
            }
            let b = as_bool(eval(r, env, strict)?);
            Value::Bool(if *op == BinOp::And { a && b } else { a || b })
        }
        Expr::Binary(op, l, r) => {
            let a = eval(l, env, strict)?;
            let b = eval(r, env, strict)?;
            match (a, b) {
                (Value::Int(a), Value::Int(b)) => int_binop(*op, &a, &b)?,
                (Value::Bool(a), Value::Bool(b)) => match op {
                    BinOp::Eq => Value::Bool(a == b),
                    BinOp::Ne => Value::Bool(a != b),
                    _ => panic!("ill-typed {op:?} on bools"),
                },
                (a, b) => panic!("ill-typed {op:?} on {a} and {b}"),
            }
        }
    })
}

fn as_bool(v: Value) -> bool {
    v.as_bool().expect("well-typed boolean operand")
}

fn int_binop(op: BinOp, a: &Int, b: &Int) -> std::result::Result<Value, Fault> {
    Ok(match op {
        BinOp::Add => Value::Int(a.add(b)),
        BinOp::Sub => Value::Int(a.sub(b)),
        BinOp::Mul => Value::Int(a.mul(b)),
        BinOp::Div => Value::Int(a.div(b).ok_or(Fault::DivisionByZero)?),
        BinOp::Lt => Value::Bool(a < b),
        BinOp::Le => Value::Bool(a <= b),
        BinOp::Gt => Value::Bool(a > b),
        BinOp::Ge => Value::Bool(a >= b),
        BinOp::Eq => Value::Bool(a == b),
        BinOp::Ne => Value::Bool(a != b),
        BinOp::And | BinOp::Or => unreachable!("handled by caller"),
    })
}

/// Truth of a label predicate: any failure (division by zero included) is false.
pub fn eval_predicate(e: &Expr, env: &dyn Env) -> bool {
    matches!(eval(e, env, true), Ok(Value::Bool(true)))
}

/// Runs `p` on `t`, reporting to `obs`. Returns how the run ended, the
/// entry function's return value and the faulting location.
pub fn run(
    p: &Program,
    t: &[Value],
    fuel: u64,
    obs: &mut (dyn Observer + Send),
) -> Result<(Termination, Option<Value>, Option<LocationId>)> {
    if is_recursive(p) {
        // Deep recursion needs more stack than a default thread offers.
        return std::thread::scope(|scope| {
            std::thread::Builder::new()
                .stack_size(RECURSION_STACK)
                .spawn_scoped(scope, || run_here(p, t, fuel, obs))
                .expect("spawn interpreter thread")
                .join()
                .expect("interpreter thread")
        });
    }
    run_here(p, t, fuel, obs)
}

const RECURSION_STACK: usize = 512 << 20;

/// Whether the call graph has a cycle.
pub fn is_recursive(p: &Program) -> bool {
    let calls: HashMap<&str, Vec<String>> = p
        .functions
        .iter()
        .map(|f| (f.name.as_str(), crate::lang::typeck::callees(f)))
        .collect();
    // 0 = unvisited, 1 = on stack, 2 = done
    fn visit<'a>(f: &'a str, calls: &'a HashMap<&str, Vec<String>>, mark: &mut HashMap<&'a str, u8>) -> bool {
        match mark.get(f) {
            Some(1) => return true,
            Some(2) => return false,
            _ => {}
        }
        mark.insert(f, 1);
        for c in calls.get(f).into_iter().flatten() {
            if visit(c, calls, mark) {
                return true;
            }
        }
        mark.insert(f, 2);
        false
    }
    let mut mark = HashMap::new();
    p.functions.iter().any(|f| visit(&f.name, &calls, &mut mark))
}

fn run_here(
    p: &Program,
    t: &[Value],
    fuel: u64,
    obs: &mut (dyn Observer + Send),
) -> Result<(Termination, Option<Value>, Option<LocationId>)> {
    let entry = p.entry_function();
    check_datum(entry, t)?;
    let mut globals = HashMap::new();
    for g in &p.globals {
        let v = match &g.init {
            Some(e) => eval(e, &HashMap::new(), false)
                .map_err(|f| Error::Input(format!("global {}: {f:?}", g.name)))?,
            None => Value::default_for(g.ty),
        };
        globals.insert(g.name.clone(), v);
    }
    let mut m = Machine {
        p,
        fuel,
        globals,
        depth: 0,
        obs,
        fault: None,
    };
    let flow = m.call(entry, t.to_vec());
    Ok(match flow {
        Ok(v) => (Termination::Returned, v, None),
        Err(term) => (term, None, m.fault),
    })
}

fn check_datum(entry: &Function, t: &[Value]) -> Result<()> {
    if entry.params.len() != t.len() {
        return Err(Error::Input(format!(
            "{} expects {} inputs, got {}",
            entry.name,
            entry.params.len(),
            t.len()
        )));
    }
    for (param, v) in entry.params.iter().zip(t) {
        let ok = matches!(
            (param.ty, v),
            (Type::Int, Value::Int(_)) | (Type::Bool, Value::Bool(_))
        );
        if !ok {
            return Err(Error::Input(format!(
                "parameter {} is {} but input is {v}",
                param.name, param.ty
            )));
        }
    }
    Ok(())
}

struct Recorder {
    entries: Vec<TraceEntry>,
}

impl Observer for Recorder {
    fn step(&mut self, loc: LocationId, state: &StateView<'_>) {
        self.entries.push(TraceEntry {
            loc,
            state: state.snapshot(),
        });
    }
}

/// Runs `p` on `t` and records every visited location with its state.
pub fn execute(p: &Program, t: &[Value], fuel: u64) -> Result<Trace> {
    let mut rec = Recorder {
        entries: Vec::new(),
    };
    let (termination, return_value, fault) = run(p, t, fuel, &mut rec)?;
    Ok(Trace {
        entries: rec.entries,
        termination,
        return_value,
        fault,
    })
}

/// Whether `trace` reaches `label.location` in a state satisfying its predicate.
pub fn trace_covers(trace: &Trace, label: &Label) -> bool {
    trace
        .entries
        .iter()
        .any(|e| e.loc == label.location && eval_predicate(&label.predicate, &e.state))
}

/// Instrumented execution: evaluates each label predicate when its statement is reached.
pub struct CoverObserver<'a> {
    preds: HashMap<LabelId, &'a Expr>,
    pub covered: BTreeSet<LabelId>,
}

impl<'a> CoverObserver<'a> {
    pub fn new(labels: &'a [Label]) -> Self {
        CoverObserver {
            preds: labels.iter().map(|l| (l.id, &l.predicate)).collect(),
            covered: BTreeSet::new(),
        }
    }
}

impl Observer for CoverObserver<'_> {
    fn label(&mut self, id: LabelId, _loc: LocationId, state: &StateView<'_>) {
        if self.covered.contains(&id) {
            return;
        }
        if let Some(pred) = self.preds.get(&id) {
            if eval_predicate(pred, state) {
                self.covered.insert(id);
            }
        }
    }
}

/// Labels of `labels` covered by running `p` on `t`.
pub fn covered_labels(
    p: &Program,
    labels: &[Label],
    t: &[Value],
    fuel: u64,
) -> Result<BTreeSet<LabelId>> {
    let mut obs = CoverObserver::new(labels);
    run(p, t, fuel, &mut obs)?;
    Ok(obs.covered)
}

pub fn covers(p: &Program, t: &[Value], label: &Label, fuel: u64) -> Result<bool> {
    Ok(covered_labels(p, std::slice::from_ref(label), t, fuel)?.contains(&label.id))
}

enum Flow {
    Normal,
    Break,
    Continue,
    Return(Option<Value>),
}

/// `Err` carries an abnormal end of the whole run.
type Step<T> = std::result::Result<T, Termination>;

struct Machine<'p, 'o> {
    p: &'p Program,
    fuel: u64,
    globals: HashMap<String, Value>,
    depth: usize,
    obs: &'o mut (dyn Observer + Send),
    fault: Option<LocationId>,
}

struct Frame {
    vars: HashMap<String, Value>,
}

impl<'p> Machine<'p, '_> {
    fn view<'a>(globals: &'a HashMap<String, Value>, frame: &'a Frame) -> StateView<'a> {
        StateView {
            globals,
            locals: &frame.vars,
        }
    }

    fn tick(&mut self) -> Step<()> {
        if self.fuel == 0 {
            return Err(Termination::FuelExhausted);
        }
        self.fuel -= 1;
        Ok(())
    }

    fn call(&mut self, f: &'p Function, args: Vec<Value>) -> Step<Option<Value>> {
        if self.depth >= MAX_CALL_DEPTH {
            return Err(Termination::CallDepthExceeded);
        }
        self.depth += 1;
        let mut frame = Frame {
            vars: f
                .params
                .iter()
                .map(|p| p.name.clone())
                .zip(args)
                .collect(),
        };
        self.tick()?;
        self.obs.step(f.loc, &Self::view(&self.globals, &frame));
        let flow = self.block(&f.body, &mut frame)?;
        self.depth -= 1;
        Ok(match flow {
            Flow::Return(v) => v,
            // A non-void function that runs off its end yields its type's default.
            _ if f.ret != Type::Void => Some(Value::default_for(f.ret)),
            _ => None,
        })
    }

    fn eval(&mut self, e: &Expr, frame: &Frame, loc: LocationId) -> Step<Value> {
        match eval(e, &Self::view(&self.globals, frame), false) {
            Ok(v) => Ok(v),
            Err(Fault::DivisionByZero) => {
                self.fault = Some(loc);
                Err(Termination::DivisionByZero)
            }
            Err(Fault::Unbound(name)) => panic!("unbound variable {name} at {loc}"),
        }
    }

    fn assign(&mut self, name: &str, v: Value, frame: &mut Frame) {
        if let Some(slot) = frame.vars.get_mut(name) {
            *slot = v;
        } else if let Some(slot) = self.globals.get_mut(name) {
            *slot = v;
        } else {
            panic!("assignment to undeclared {name}");
        }
    }

    fn block(&mut self, b: &'p Block, frame: &mut Frame) -> Step<Flow> {
        let mut declared = Vec::new();
        let mut flow = Flow::Normal;
        for s in &b.stmts {
            if let StmtKind::Decl { name, .. } = &s.kind {
                declared.push(name.as_str());
            }
            if let StmtKind::Call {
                target: Some(CallTarget {
                    name,
                    declare: Some(_),
                }),
                ..
            } = &s.kind
            {
                declared.push(name.as_str());
            }
            flow = self.stmt(s, frame)?;
            if !matches!(flow, Flow::Normal) {
                break;
            }
        }
        for name in declared {
            frame.vars.remove(name);
        }
        Ok(flow)
    }

    fn label(&mut self, s: &Stmt, id: LabelId, frame: &Frame) {
        let view = Self::view(&self.globals, frame);
        self.obs.step(s.loc, &view);
        self.obs.label(id, s.loc, &view);
    }

    fn stmt(&mut self, s: &'p Stmt, frame: &mut Frame) -> Step<Flow> {
        if let StmtKind::Label(id) = s.kind {
            self.label(s, id, frame);
            return Ok(Flow::Normal);
        }
        if !matches!(s.kind, StmtKind::While { .. }) {
            self.tick()?;
            self.obs.step(s.loc, &Self::view(&self.globals, frame));
        }
        match &s.kind {
            StmtKind::Decl { name, ty, init } => {
                let v = match init {
                    Some(e) => self.eval(e, frame, s.loc)?,
                    None => Value::default_for(*ty),
                };
                frame.vars.insert(name.clone(), v);
            }
            StmtKind::Assign { name, value } => {
                let v = self.eval(value, frame, s.loc)?;
                self.assign(name, v, frame);
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                self.obs
                    .decision(s.loc, cond, &Self::view(&self.globals, frame));
                let c = as_bool(self.eval(cond, frame, s.loc)?);
                return self.block(if c { then_block } else { else_block }, frame);
            }
            StmtKind::While { cond, head, body } => loop {
                for h in head {
                    if let StmtKind::Label(id) = h.kind {
                        self.label(h, id, frame);
                    }
                }
                self.tick()?;
                let view = Self::view(&self.globals, frame);
                self.obs.step(s.loc, &view);
                self.obs.decision(s.loc, cond, &view);
                if !as_bool(self.eval(cond, frame, s.loc)?) {
                    break;
                }
                match self.block(body, frame)? {
                    Flow::Break => break,
                    Flow::Return(v) => return Ok(Flow::Return(v)),
                    Flow::Normal | Flow::Continue => {}
                }
            },
            StmtKind::Call {
                callee,
                args,
                target,
            } => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(a, frame, s.loc)?);
                }
                let f = self.p.function(callee).expect("resolved callee");
                let ret = self.call(f, vals)?;
                if let Some(t) = target {
                    let v = ret.expect("non-void callee returns a value");
                    if t.declare.is_some() {
                        frame.vars.insert(t.name.clone(), v);
                    } else {
                        self.assign(&t.name, v, frame);
                    }
                }
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => Some(self.eval(e, frame, s.loc)?),
                    None => None,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::Break => return Ok(Flow::Break),
            StmtKind::Continue => return Ok(Flow::Continue),
            StmtKind::Exit => return Err(Termination::Exited),
            StmtKind::Assert(e) => {
                if !as_bool(self.eval(e, frame, s.loc)?) {
                    self.fault = Some(s.loc);
                    return Err(Termination::AssertionFailed);
                }
            }
            StmtKind::Label(_) => unreachable!("handled above"),
        }
        Ok(Flow::Normal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    fn ints(v: &[i64]) -> Vec<Value> {
        v.iter().map(|&x| Value::int(x)).collect()
    }

    #[test]
    fn minimal_program_trace() {
        let p = parse("int main(int x){ if(x>0){x=1;} return x; }").unwrap();
        assert_eq!(p.location_count(), 4);
        let t = execute(&p, &ints(&[5]), DEFAULT_FUEL).unwrap();
        let locs: Vec<u32> = t.locations().map(|l| l.0).collect();
        assert_eq!(locs, vec![1, 2, 3, 4]);
        assert_eq!(t.return_value, Some(Value::int(1)));
        let t = execute(&p, &ints(&[-5]), DEFAULT_FUEL).unwrap();
        assert_eq!(t.locations().count(), 3);
        assert_eq!(t.return_value, Some(Value::int(-5)));
    }

    #[test]
    fn nontermination_is_cut_off() {
        let p = parse("int main(){ while(true){} return 0; }").unwrap();
        let t = execute(&p, &[], 100).unwrap();
        assert_eq!(t.termination, Termination::FuelExhausted);
    }

    #[test]
    fn division_by_zero_aborts() {
        let p = parse("int main(int x){ int y = 10 / x; return y; }").unwrap();
        let t = execute(&p, &ints(&[0]), DEFAULT_FUEL).unwrap();
        assert_eq!(t.termination, Termination::DivisionByZero);
        assert_eq!(t.fault, Some(LocationId(2)));
        let t = execute(&p, &ints(&[-3]), DEFAULT_FUEL).unwrap();
        assert_eq!(t.return_value, Some(Value::int(-3)));
    }

    #[test]
    fn short_circuit_guards_division_in_statements_only() {
        let p = parse("int main(int x){ if(x != 0 && 10 / x > 1){ return 1; } return 0; }").unwrap();
        let t = execute(&p, &ints(&[0]), DEFAULT_FUEL).unwrap();
        assert_eq!(t.return_value, Some(Value::int(0)));
        let env: HashMap<String, Value> = [("x".to_string(), Value::int(0))].into();
        let pred = crate::lang::parser::parse_expr("x == 0 || 10 / x > 1").unwrap();
        assert!(!eval_predicate(&pred, &env));
    }

    #[test]
    fn exit_and_calls() {
        let src = "int g = 0;
            void f(int a){ g = a + 1; if (a > 5) { exit; } }
            int main(int x){ f(x); return g; }";
        let p = parse(src).unwrap();
        let t = execute(&p, &ints(&[2]), DEFAULT_FUEL).unwrap();
        assert_eq!(t.return_value, Some(Value::int(3)));
        let t = execute(&p, &ints(&[9]), DEFAULT_FUEL).unwrap();
        assert_eq!(t.termination, Termination::Exited);
    }

    #[test]
    fn unbounded_recursion_hits_depth_limit() {
        let p = parse("int f(int a){ int r = f(a); return r; } int main(){ int r = f(1); return r; }")
            .unwrap();
        let t = execute(&p, &[], DEFAULT_FUEL).unwrap();
        assert_eq!(t.termination, Termination::CallDepthExceeded);
    }

    #[test]
    fn big_integers_do_not_overflow() {
        let p = parse(
            "int main(){ int x = 1; int i = 0; while(i < 70){ x = x * 2; i = i + 1; } return x / 1024; }",
        )
        .unwrap();
        let t = execute(&p, &[], DEFAULT_FUEL).unwrap();
        assert_eq!(t.return_value.unwrap().to_string(), (1u128 << 60).to_string());
    }

    #[test]
    fn wrong_arity_is_an_input_error() {
        let p = parse("int main(int x){ return x; }").unwrap();
        assert!(execute(&p, &[], 10).is_err());
    }
}
