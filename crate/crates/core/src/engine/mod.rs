//! Exact evaluation and counting of definable sets.
//!
//! Two routes share one compiled formula representation: plain enumeration
//! over a [`FiniteStructure`] (parallel over the first counted variable) and
//! block-level counting over a [`BlockStructure`] for families far too large
//! to materialize.

mod count;
mod eval;
pub mod exec;
mod lifted;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::Serialize;
use thiserror::Error;

use crate::logic::{
    free_variables, sort_check, Assignment, AssignmentError, Element, FiniteStructure, Formula,
    Signature, SortDiagnostic,
};

pub use count::{ln_biguint, Count};
pub use exec::{EngineConfig, DEFAULT_BUDGET};
pub use lifted::{BlockElement, BlockRelation, BlockStructure};

use eval::{compile, Evaluator};
use exec::Budget;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Sort(#[from] SortDiagnostic),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error("variable `{0}` is both fixed and counted")]
    Overlap(String),
    #[error("counted variable `{0}` is not free in the formula")]
    NotFree(String),
    #[error("free variable `{0}` has no value")]
    Unassigned(String),
    #[error("value of `{0}` lies outside its universe")]
    OutOfBounds(String),
    #[error("budget exceeded after {0} visited assignments")]
    BudgetExceeded(u64),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// Splits the free variables of `f` into counted and fixed ones, in the
/// order the compiled environment expects.
fn plan(
    f: &Formula,
    sig: &Signature,
    fixed: &[&str],
    counted: &[&str],
) -> Result<(Vec<(String, String)>, Vec<(String, String)>), EngineError> {
    sort_check(f, sig)?;
    let free = free_variables(f);
    let mut counted_vars = Vec::new();
    for &c in counted {
        if fixed.contains(&c) {
            return Err(EngineError::Overlap(c.to_string()));
        }
        let (n, s) = free
            .iter()
            .find(|(n, _)| n == c)
            .ok_or_else(|| EngineError::NotFree(c.to_string()))?;
        if counted_vars.iter().any(|(m, _)| m == n) {
            return Err(EngineError::Overlap(c.to_string()));
        }
        counted_vars.push((n.clone(), s.clone()));
    }
    let params: Vec<(String, String)> = free
        .into_iter()
        .filter(|(n, _)| !counted.contains(&n.as_str()))
        .collect();
    Ok((counted_vars, params))
}

/// Tarskian truth of `f` under `a`.
pub fn evaluate(f: &Formula, m: &FiniteStructure, a: &Assignment) -> Result<bool, EngineError> {
    let c = count_with(f, m, a, &[], &EngineConfig::default().with_workers(1))?;
    Ok(!c.is_zero())
}

/// Number of `counted`-tuples satisfying `f` with the other free variables fixed.
pub fn count(
    f: &Formula,
    m: &FiniteStructure,
    fixed: &Assignment,
    counted: &[&str],
) -> Result<Count, EngineError> {
    count_with(f, m, fixed, counted, &EngineConfig::default())
}

pub fn count_with(
    f: &Formula,
    m: &FiniteStructure,
    fixed: &Assignment,
    counted: &[&str],
    cfg: &EngineConfig,
) -> Result<Count, EngineError> {
    let sig = m.signature();
    let fixed_names: Vec<&str> = fixed.iter().map(|(n, _, _)| n).collect();
    let (counted_vars, params) = plan(f, sig, &fixed_names, counted)?;
    fixed.check_covers(&params)?;

    let mut order = counted_vars.clone();
    order.extend(params.iter().cloned());
    let compiled = compile(f, sig, &|i| m.constant_value(i), &order)?;

    let k = counted_vars.len();
    let mut base = vec![0 as Element; compiled.slots];
    for (i, (name, _)) in params.iter().enumerate() {
        let (_, v) = fixed.get(name).expect("covered");
        if v >= m.size(compiled.free[k + i]) {
            return Err(EngineError::OutOfBounds(name.clone()));
        }
        base[k + i] = v;
    }

    let budget = Budget::new(cfg.budget);
    let ev = Evaluator { m };
    let sizes: Vec<u32> = compiled.free[..k].iter().map(|&s| m.size(s)).collect();

    let total: u128 = if k == 0 {
        let mut env = base.clone();
        let mut meter = budget.meter();
        u128::from(ev.eval(&compiled.root, &mut env, &mut meter))
    } else {
        exec::map_reduce(
            cfg.workers,
            sizes[0] as usize,
            |first| {
                let mut env = base.clone();
                env[0] = first as Element;
                let mut meter = budget.meter();
                let mut hits = 0u128;
                // odometer over the remaining counted slots
                for slot in env.iter_mut().take(k).skip(1) {
                    *slot = 0;
                }
                loop {
                    if !meter.tick() {
                        break;
                    }
                    if ev.eval(&compiled.root, &mut env, &mut meter) {
                        hits += 1;
                    }
                    let mut pos = k;
                    loop {
                        pos -= 1;
                        if pos == 0 {
                            return hits;
                        }
                        env[pos] += 1;
                        if env[pos] < sizes[pos] {
                            break;
                        }
                        env[pos] = 0;
                    }
                }
                hits
            },
            || 0,
            |a, b| a + b,
        )
    };
    if budget.exhausted() {
        return Err(EngineError::BudgetExceeded(budget.used()));
    }
    Ok(Count::new(BigUint::from(total)))
}

/// An element of either kind of model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(untagged)]
pub enum ElementRef {
    Id(Element),
    Block(BlockElement),
}

/// Parameter values by variable name: (sort, element).
pub type Bindings = BTreeMap<String, (String, ElementRef)>;

/// A structure to count in: explicit, or described block-wise.
#[derive(Debug, Clone)]
pub enum Model {
    Finite(Arc<FiniteStructure>),
    Blocks(Arc<BlockStructure>),
}

impl Model {
    pub fn signature(&self) -> &Arc<Signature> {
        match self {
            Model::Finite(m) => m.signature(),
            Model::Blocks(b) => b.signature(),
        }
    }

    pub fn universe_size(&self, sort: &str) -> Option<BigUint> {
        let s = self.signature().sort_id(sort)?;
        Some(match self {
            Model::Finite(m) => BigUint::from(m.size(s)),
            Model::Blocks(b) => b.universe_size(s),
        })
    }

    pub fn count(
        &self,
        f: &Formula,
        fixed: &Bindings,
        counted: &[&str],
        cfg: &EngineConfig,
    ) -> Result<Count, EngineError> {
        match self {
            Model::Finite(m) => {
                let mut a = Assignment::new();
                for (name, (sort, e)) in fixed {
                    let id = match e {
                        ElementRef::Id(id) => *id,
                        ElementRef::Block(_) => {
                            return Err(EngineError::Unsupported(format!(
                                "block element for `{name}` in an explicit structure"
                            )))
                        }
                    };
                    a.insert(name, sort, id);
                }
                count_with(f, m, &a, counted, cfg)
            }
            Model::Blocks(bs) => {
                let sig = bs.signature();
                let fixed_names: Vec<&str> = fixed.keys().map(String::as_str).collect();
                let (counted_vars, params) = plan(f, sig, &fixed_names, counted)?;
                let mut resolved = Vec::new();
                for (name, sort) in &params {
                    let (s, e) = fixed
                        .get(name)
                        .ok_or_else(|| AssignmentError::Missing(name.clone()))?;
                    if s != sort {
                        return Err(AssignmentError::SortMismatch {
                            name: name.clone(),
                            expected: sort.clone(),
                            found: s.clone(),
                        }
                        .into());
                    }
                    let sid = sig.sort_id(sort).expect("sort-checked");
                    let be = match e {
                        ElementRef::Block(b) => b.clone(),
                        ElementRef::Id(id) => bs
                            .locate(sid, &BigUint::from(*id))
                            .ok_or_else(|| EngineError::OutOfBounds(name.clone()))?,
                    };
                    resolved.push((name.clone(), sort.clone(), be));
                }
                let budget = Budget::new(cfg.budget);
                let n = lifted::count_blocks(f, bs, &resolved, &counted_vars, &budget)?;
                Ok(Count::new(n))
            }
        }
    }

    /// Every assignment to `params` up to automorphism, with multiplicities.
    /// Explicit models list all tuples, so `limit` bounds their number.
    pub fn parameter_space(
        &self,
        params: &[(String, String)],
        limit: u64,
    ) -> Result<Vec<(BigUint, Bindings)>, EngineError> {
        let sig = self.signature();
        let sorts = params
            .iter()
            .map(|(_, s)| {
                sig.sort_id(s)
                    .ok_or_else(|| EngineError::Unsupported(format!("unknown sort `{s}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let bind = |values: Vec<ElementRef>| -> Bindings {
            params
                .iter()
                .zip(values)
                .map(|((n, s), v)| (n.clone(), (s.clone(), v)))
                .collect()
        };
        match self {
            Model::Finite(m) => {
                let total: u128 = sorts.iter().map(|&s| m.size(s) as u128).product();
                if total > limit as u128 {
                    return Err(EngineError::BudgetExceeded(limit));
                }
                let mut out = Vec::with_capacity(total as usize);
                let mut tuple = vec![0u32; sorts.len()];
                let dims: Vec<u64> = sorts.iter().map(|&s| m.size(s) as u64).collect();
                crate::logic::for_each_tuple(&dims, &mut tuple, &mut |t| {
                    out.push((
                        BigUint::from(1u32),
                        bind(t.iter().map(|&v| ElementRef::Id(v)).collect()),
                    ))
                });
                Ok(out)
            }
            Model::Blocks(bs) => Ok(bs
                .parameter_types(&sorts)
                .into_iter()
                .map(|(w, es)| (w, bind(es.into_iter().map(ElementRef::Block).collect())))
                .collect()),
        }
    }

    /// Explicit form, if small enough.
    pub fn materialize(&self, max_elements: u64) -> Option<Arc<FiniteStructure>> {
        match self {
            Model::Finite(m) => Some(m.clone()),
            Model::Blocks(b) => b.materialize(max_elements).map(Arc::new),
        }
    }

    /// Rewrites block references as element ids of [`Self::materialize`].
    pub fn to_ids(&self, bindings: &Bindings) -> Option<Bindings> {
        let mut out = Bindings::new();
        for (n, (s, e)) in bindings {
            let e = match (self, e) {
                (_, ElementRef::Id(id)) => ElementRef::Id(*id),
                (Model::Blocks(bs), ElementRef::Block(b)) => {
                    let sid = bs.signature().sort_id(s)?;
                    ElementRef::Id(bs.element_id(sid, b)?.to_u32()?)
                }
                (Model::Finite(_), ElementRef::Block(_)) => return None,
            };
            out.insert(n.clone(), (s.clone(), e));
        }
        Some(out)
    }
}
