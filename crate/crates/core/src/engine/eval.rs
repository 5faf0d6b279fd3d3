//! Slot-compiled evaluation over materialized structures.

use std::collections::HashMap;

use crate::logic::{Element, FiniteStructure, Formula, Signature, SortId, Term};

use super::exec::Meter;
use super::EngineError;

#[derive(Debug, Clone)]
pub(crate) enum CTerm {
    Slot(usize),
    Const(Element),
    App(usize, Vec<CTerm>),
}

#[derive(Debug, Clone)]
pub(crate) enum CForm {
    Rel(usize, Vec<CTerm>),
    Eq(CTerm, CTerm),
    Not(Box<CForm>),
    And(Box<CForm>, Box<CForm>),
    Or(Box<CForm>, Box<CForm>),
    Implies(Box<CForm>, Box<CForm>),
    Exists(usize, SortId, Box<CForm>),
    Forall(usize, SortId, Box<CForm>),
}

/// A formula with every variable resolved to a slot in a flat environment.
/// Slots `0..free.len()` hold the free variables in the order given to
/// [`compile`]; binders get fresh slots after that.
#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub root: CForm,
    pub slots: usize,
    pub free: Vec<SortId>,
}

pub(crate) fn compile(
    f: &Formula,
    sig: &Signature,
    constants: &dyn Fn(usize) -> Element,
    free: &[(String, String)],
) -> Result<Compiled, EngineError> {
    struct Ctx<'a> {
        sig: &'a Signature,
        constants: &'a dyn Fn(usize) -> Element,
        scope: Vec<(String, usize)>,
        next: usize,
        free: HashMap<String, usize>,
    }

    fn term(t: &Term, cx: &Ctx) -> Result<CTerm, EngineError> {
        Ok(match t {
            Term::Var(v) => {
                if let Some(&(_, slot)) = cx.scope.iter().rev().find(|(n, _)| n == &v.name) {
                    CTerm::Slot(slot)
                } else {
                    CTerm::Slot(
                        *cx.free
                            .get(&v.name)
                            .ok_or_else(|| EngineError::Unassigned(v.name.clone()))?,
                    )
                }
            }
            Term::Const(c) => {
                let (i, _) = cx
                    .sig
                    .constant(c)
                    .ok_or_else(|| EngineError::Unsupported(format!("unknown constant `{c}`")))?;
                CTerm::Const((cx.constants)(i))
            }
            Term::App(name, args) => {
                let (i, _) = cx
                    .sig
                    .function(name)
                    .ok_or_else(|| EngineError::Unsupported(format!("unknown function `{name}`")))?;
                CTerm::App(i, args.iter().map(|a| term(a, cx)).collect::<Result<_, _>>()?)
            }
        })
    }

    fn form(f: &Formula, cx: &mut Ctx) -> Result<CForm, EngineError> {
        Ok(match f {
            Formula::Rel(r, args) => {
                let (i, _) = cx
                    .sig
                    .relation(r)
                    .ok_or_else(|| EngineError::Unsupported(format!("unknown relation `{r}`")))?;
                CForm::Rel(i, args.iter().map(|a| term(a, cx)).collect::<Result<_, _>>()?)
            }
            Formula::Eq(a, b) => CForm::Eq(term(a, cx)?, term(b, cx)?),
            Formula::Not(a) => CForm::Not(Box::new(form(a, cx)?)),
            Formula::And(a, b) => CForm::And(Box::new(form(a, cx)?), Box::new(form(b, cx)?)),
            Formula::Or(a, b) => CForm::Or(Box::new(form(a, cx)?), Box::new(form(b, cx)?)),
            Formula::Implies(a, b) => {
                CForm::Implies(Box::new(form(a, cx)?), Box::new(form(b, cx)?))
            }
            Formula::Exists(v, body) | Formula::Forall(v, body) => {
                let sort = cx
                    .sig
                    .sort_id(&v.sort)
                    .ok_or_else(|| EngineError::Unsupported(format!("unknown sort `{}`", v.sort)))?;
                let slot = cx.next;
                cx.next += 1;
                cx.scope.push((v.name.clone(), slot));
                let inner = form(body, cx);
                cx.scope.pop();
                let inner = Box::new(inner?);
                if matches!(f, Formula::Exists(..)) {
                    CForm::Exists(slot, sort, inner)
                } else {
                    CForm::Forall(slot, sort, inner)
                }
            }
        })
    }

    let mut free_sorts = Vec::with_capacity(free.len());
    for (_, s) in free {
        free_sorts.push(
            sig.sort_id(s)
                .ok_or_else(|| EngineError::Unsupported(format!("unknown sort `{s}`")))?,
        );
    }
    let mut cx = Ctx {
        sig,
        constants,
        scope: Vec::new(),
        next: free.len(),
        free: free
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.clone(), i))
            .collect(),
    };
    let root = form(f, &mut cx)?;
    Ok(Compiled {
        root,
        slots: cx.next,
        free: free_sorts,
    })
}

const INLINE_ARGS: usize = 8;

pub(crate) struct Evaluator<'a> {
    pub m: &'a FiniteStructure,
}

impl Evaluator<'_> {
    #[inline]
    fn term(&self, t: &CTerm, env: &[Element]) -> Element {
        match t {
            CTerm::Slot(s) => env[*s],
            CTerm::Const(c) => *c,
            CTerm::App(fi, args) => {
                let table = self.m.function_table(*fi);
                if args.len() <= INLINE_ARGS {
                    let mut buf = [0 as Element; INLINE_ARGS];
                    for (b, a) in buf.iter_mut().zip(args) {
                        *b = self.term(a, env);
                    }
                    table.apply(&buf[..args.len()])
                } else {
                    let vals: Vec<Element> = args.iter().map(|a| self.term(a, env)).collect();
                    table.apply(&vals)
                }
            }
        }
    }

    /// Truth value under `env`; meaningless once `meter` has tripped.
    pub fn eval(&self, f: &CForm, env: &mut [Element], meter: &mut Meter) -> bool {
        match f {
            CForm::Rel(ri, args) => {
                let table = self.m.relation_table(*ri);
                if args.len() <= INLINE_ARGS {
                    let mut buf = [0 as Element; INLINE_ARGS];
                    for (b, a) in buf.iter_mut().zip(args) {
                        *b = self.term(a, env);
                    }
                    table.contains(&buf[..args.len()])
                } else {
                    let vals: Vec<Element> = args.iter().map(|a| self.term(a, env)).collect();
                    table.contains(&vals)
                }
            }
            CForm::Eq(a, b) => self.term(a, env) == self.term(b, env),
            CForm::Not(a) => !self.eval(a, env, meter),
            CForm::And(a, b) => self.eval(a, env, meter) && self.eval(b, env, meter),
            CForm::Or(a, b) => self.eval(a, env, meter) || self.eval(b, env, meter),
            CForm::Implies(a, b) => !self.eval(a, env, meter) || self.eval(b, env, meter),
            CForm::Exists(slot, sort, body) => {
                for v in 0..self.m.size(*sort) {
                    if !meter.tick() {
                        return false;
                    }
                    env[*slot] = v;
                    if self.eval(body, env, meter) {
                        return true;
                    }
                }
                false
            }
            CForm::Forall(slot, sort, body) => {
                for v in 0..self.m.size(*sort) {
                    if !meter.tick() {
                        return false;
                    }
                    env[*slot] = v;
                    if !self.eval(body, env, meter) {
                        return false;
                    }
                }
                true
            }
        }
    }
}
