//! Tabular factors and the algebra the inference engines are built on.
//!
//! A [`Factor`] stores a non-negative table over an ordered scope. Tables are
//! row-major with the last scope variable varying fastest; every module relies
//! on that layout so tables can be compared bit for bit.
//!
//! Combination always produces a factor whose scope is sorted by ascending
//! variable id. The operands of each entry are multiplied in ascending value
//! order, so the result does not depend on how the caller listed or sliced
//! the arguments.

use std::cmp::Ordering;

use thiserror::Error;

/// Dense variable index, `0..n`.
pub type VarId = usize;

/// Default cap on the number of entries a single materialized table may hold.
pub const DEFAULT_TABLE_LIMIT: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorError {
    #[error("variable {var} used with cardinalities {left} and {right}")]
    CardinalityMismatch { var: VarId, left: usize, right: usize },
    #[error("table of {entries} entries exceeds the limit of {limit}")]
    ScopeTooLarge { entries: u128, limit: usize },
    #[error("variable {var} is not in the factor scope")]
    VarNotInScope { var: VarId },
    #[error("all entries are zero")]
    AllZero,
    #[error("a product of positive entries underflowed to zero")]
    Underflow,
    #[error("malformed factor: {0}")]
    Malformed(String),
}

/// Aggregation applied when a set of variables is eliminated from a factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EliminationOperator {
    Sum,
    Max,
    Min,
    /// Sum divided by the number of configurations eliminated.
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    scope: Vec<VarId>,
    cards: Vec<usize>,
    values: Vec<f64>,
    child: Option<VarId>,
}

/// Number of entries of a table over `cards`, if it fits in memory at all.
pub fn table_size(cards: &[usize]) -> u128 {
    cards.iter().fold(1u128, |acc, &c| acc.saturating_mul(c as u128))
}

fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![0; cards.len()];
    let mut acc = 1;
    for i in (0..cards.len()).rev() {
        s[i] = acc;
        acc *= cards[i];
    }
    s
}

impl Factor {
    pub fn new(scope: Vec<VarId>, cards: Vec<usize>, values: Vec<f64>) -> Result<Self, FactorError> {
        if scope.len() != cards.len() {
            return Err(FactorError::Malformed(format!(
                "scope has {} variables but {} cardinalities",
                scope.len(),
                cards.len()
            )));
        }
        for (i, v) in scope.iter().enumerate() {
            if scope[..i].contains(v) {
                return Err(FactorError::Malformed(format!("variable {v} repeated in scope")));
            }
        }
        if cards.iter().any(|&c| c == 0) {
            return Err(FactorError::Malformed("zero cardinality".into()));
        }
        let expected = table_size(&cards);
        if expected != values.len() as u128 {
            return Err(FactorError::Malformed(format!(
                "table has {} entries, expected {}",
                values.len(),
                expected
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(FactorError::Malformed(format!("invalid table entry {bad}")));
        }
        Ok(Factor { scope, cards, values, child: None })
    }

    /// A conditional probability table for `child`. Normalization is checked by
    /// the network constructor, not here.
    pub fn cpt(
        scope: Vec<VarId>,
        cards: Vec<usize>,
        values: Vec<f64>,
        child: VarId,
    ) -> Result<Self, FactorError> {
        if !scope.contains(&child) {
            return Err(FactorError::VarNotInScope { var: child });
        }
        let mut f = Factor::new(scope, cards, values)?;
        f.child = Some(child);
        Ok(f)
    }

    pub fn scalar(value: f64) -> Self {
        Factor { scope: Vec::new(), cards: Vec::new(), values: vec![value], child: None }
    }

    pub fn constant(scope: Vec<VarId>, cards: Vec<usize>, value: f64) -> Result<Self, FactorError> {
        let n = table_size(&cards) as usize;
        Factor::new(scope, cards, vec![value; n])
    }

    pub fn scope(&self) -> &[VarId] {
        &self.scope
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn child(&self) -> Option<VarId> {
        self.child
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.scope.is_empty()
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.scope.contains(&var)
    }

    pub fn card_of(&self, var: VarId) -> Option<usize> {
        self.scope.iter().position(|&v| v == var).map(|p| self.cards[p])
    }

    /// Row-major index of `assignment`, given in scope order.
    pub fn index_of(&self, assignment: &[usize]) -> usize {
        debug_assert_eq!(assignment.len(), self.scope.len());
        assignment
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&a, &c)| acc * c + a)
    }

    pub fn value_at(&self, assignment: &[usize]) -> f64 {
        self.values[self.index_of(assignment)]
    }

    /// Value under a full assignment indexed by variable id.
    pub fn eval(&self, full: &[usize]) -> f64 {
        let idx = self
            .scope
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&v, &c)| acc * c + full[v]);
        self.values[idx]
    }

    /// Decode a row-major index into an assignment in scope order.
    pub fn assignment_of(&self, mut index: usize) -> Vec<usize> {
        let mut a = vec![0; self.scope.len()];
        for i in (0..self.scope.len()).rev() {
            a[i] = index % self.cards[i];
            index /= self.cards[i];
        }
        a
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub(crate) fn with_child(mut self, child: Option<VarId>) -> Self {
        self.child = child;
        self
    }

    /// Fix `var` to `value` and drop it from the scope. Factors that do not
    /// mention `var` are returned unchanged.
    pub fn restrict(&self, var: VarId, value: usize) -> Factor {
        let Some(pos) = self.scope.iter().position(|&v| v == var) else {
            return self.clone();
        };
        assert!(value < self.cards[pos], "value {value} out of range for variable {var}");
        let st = strides(&self.cards);
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(pos);
        cards.remove(pos);
        let outer = self.values.len() / (st[pos] * self.cards[pos]);
        let inner = st[pos];
        let mut values = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = o * st[pos] * self.cards[pos] + value * inner;
            values.extend_from_slice(&self.values[base..base + inner]);
        }
        let child = self.child.filter(|&c| c != var);
        Factor { scope, cards, values, child }
    }

    /// Same function with its scope permuted to `order`.
    pub fn reorder(&self, order: &[VarId]) -> Result<Factor, FactorError> {
        if order.len() != self.scope.len() {
            return Err(FactorError::Malformed("reorder needs a permutation of the scope".into()));
        }
        let mut perm = Vec::with_capacity(order.len());
        for v in order {
            let p = self
                .scope
                .iter()
                .position(|w| w == v)
                .ok_or(FactorError::VarNotInScope { var: *v })?;
            perm.push(p);
        }
        let cards: Vec<usize> = perm.iter().map(|&p| self.cards[p]).collect();
        let src_strides = strides(&self.cards);
        let mut values = Vec::with_capacity(self.values.len());
        let mut counter = vec![0usize; order.len()];
        for _ in 0..self.values.len() {
            let idx: usize = counter.iter().zip(&perm).map(|(&c, &p)| c * src_strides[p]).sum();
            values.push(self.values[idx]);
            for i in (0..counter.len()).rev() {
                counter[i] += 1;
                if counter[i] < cards[i] {
                    break;
                }
                counter[i] = 0;
            }
        }
        Ok(Factor { scope: order.to_vec(), cards, values, child: self.child })
    }

    /// Scope sorted by ascending variable id.
    pub fn canonical(&self) -> Factor {
        let mut order = self.scope.clone();
        order.sort_unstable();
        if order == self.scope {
            return self.clone();
        }
        self.reorder(&order).expect("sorted scope is a permutation")
    }

    /// Multiply every entry by `k`.
    pub fn multiplied(&self, k: f64) -> Factor {
        let mut f = self.clone();
        f.values.iter_mut().for_each(|v| *v *= k);
        f
    }

    /// Divide every entry by `k`.
    pub fn divided(&self, k: f64) -> Factor {
        let mut f = self.clone();
        f.values.iter_mut().for_each(|v| *v /= k);
        f
    }
}

fn canonical_cmp(a: &Factor, b: &Factor) -> Ordering {
    a.scope
        .cmp(&b.scope)
        .then_with(|| a.cards.cmp(&b.cards))
        .then_with(|| {
            for (x, y) in a.values.iter().zip(&b.values) {
                match x.total_cmp(y) {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            a.values.len().cmp(&b.values.len())
        })
}

/// Product of `factors` under the default table limit.
pub fn combine(factors: &[&Factor]) -> Result<Factor, FactorError> {
    combine_with_limit(factors, DEFAULT_TABLE_LIMIT)
}

/// Product of `factors`; the result scope is the ascending union of the input
/// scopes. Fails instead of allocating a table larger than `limit` entries.
pub fn combine_with_limit(factors: &[&Factor], limit: usize) -> Result<Factor, FactorError> {
    multiply(factors, limit, true).map(|(f, _)| f)
}

/// Product of `factors` that tolerates entries underflowing to zero. When
/// any did, also returns the support indicator: 1 where every operand is
/// positive, 0 elsewhere.
pub fn combine_with_support(factors: &[&Factor], limit: usize) -> Result<(Factor, Option<Factor>), FactorError> {
    multiply(factors, limit, false)
}

fn multiply(factors: &[&Factor], limit: usize, strict: bool) -> Result<(Factor, Option<Factor>), FactorError> {
    if factors.is_empty() {
        return Ok((Factor::scalar(1.0), None));
    }
    let mut inputs: Vec<&Factor> = factors.to_vec();
    inputs.sort_by(|a, b| canonical_cmp(a, b));

    let mut scope: Vec<VarId> = Vec::new();
    let mut cards: Vec<usize> = Vec::new();
    {
        let mut pairs: Vec<(VarId, usize)> = Vec::new();
        for f in &inputs {
            for (&v, &c) in f.scope.iter().zip(&f.cards) {
                match pairs.iter().find(|(w, _)| *w == v) {
                    Some(&(_, c0)) if c0 != c => {
                        return Err(FactorError::CardinalityMismatch { var: v, left: c0, right: c })
                    }
                    Some(_) => {}
                    None => pairs.push((v, c)),
                }
            }
        }
        pairs.sort_unstable();
        for (v, c) in pairs {
            scope.push(v);
            cards.push(c);
        }
    }
    let size = table_size(&cards);
    if size > limit as u128 {
        return Err(FactorError::ScopeTooLarge { entries: size, limit });
    }
    let size = size as usize;

    // Per-input stride along each output position (0 when absent).
    let in_strides: Vec<Vec<usize>> = inputs
        .iter()
        .map(|f| {
            let st = strides(&f.cards);
            scope
                .iter()
                .map(|v| f.scope.iter().position(|w| w == v).map_or(0, |p| st[p]))
                .collect()
        })
        .collect();

    let k = inputs.len();
    let mut idx = vec![0usize; k];
    let mut counter = vec![0usize; scope.len()];
    let mut values = Vec::with_capacity(size);
    let mut operands = vec![0.0f64; k];
    let mut support = Vec::with_capacity(if strict { 0 } else { size });
    let mut underflow = false;
    for _ in 0..size {
        // Multiplying in value order makes every entry independent of how
        // the inputs were listed or sliced.
        for j in 0..k {
            operands[j] = inputs[j].values[idx[j]];
        }
        if k > 2 {
            operands.sort_unstable_by(f64::total_cmp);
        }
        let prod = operands.iter().product::<f64>();
        let positive = operands.iter().all(|&x| x > 0.0);
        if prod == 0.0 && positive {
            if strict {
                return Err(FactorError::Underflow);
            }
            underflow = true;
        }
        if !strict {
            support.push(if positive { 1.0 } else { 0.0 });
        }
        values.push(prod);
        for p in (0..scope.len()).rev() {
            counter[p] += 1;
            if counter[p] < cards[p] {
                for j in 0..k {
                    idx[j] += in_strides[j][p];
                }
                break;
            }
            counter[p] = 0;
            for j in 0..k {
                idx[j] -= in_strides[j][p] * (cards[p] - 1);
            }
        }
    }
    let child = if k == 1 { inputs[0].child } else { None };
    let support = underflow.then(|| Factor { scope: scope.clone(), cards: cards.clone(), values: support, child: None });
    Ok((Factor { scope, cards, values, child }, support))
}

/// Eliminate `vars` from `f` with `op`. Eliminating the whole scope yields a
/// scalar factor.
pub fn eliminate(f: &Factor, vars: &[VarId], op: EliminationOperator) -> Result<Factor, FactorError> {
    for v in vars {
        if !f.scope.contains(v) {
            return Err(FactorError::VarNotInScope { var: *v });
        }
    }
    if vars.is_empty() {
        return Ok(f.clone().with_child(None));
    }
    let keep: Vec<usize> = (0..f.scope.len()).filter(|&p| !vars.contains(&f.scope[p])).collect();
    let scope: Vec<VarId> = keep.iter().map(|&p| f.scope[p]).collect();
    let cards: Vec<usize> = keep.iter().map(|&p| f.cards[p]).collect();
    let out_strides_kept = strides(&cards);
    let mut out_stride = vec![0usize; f.scope.len()];
    for (i, &p) in keep.iter().enumerate() {
        out_stride[p] = out_strides_kept[i];
    }
    let out_size = table_size(&cards) as usize;
    let init = match op {
        EliminationOperator::Sum | EliminationOperator::Mean => 0.0,
        EliminationOperator::Max => f64::NEG_INFINITY,
        EliminationOperator::Min => f64::INFINITY,
    };
    let mut values = vec![init; out_size];
    let mut counter = vec![0usize; f.scope.len()];
    let mut out = 0usize;
    for &x in &f.values {
        let slot = &mut values[out];
        match op {
            EliminationOperator::Sum | EliminationOperator::Mean => *slot += x,
            EliminationOperator::Max => *slot = slot.max(x),
            EliminationOperator::Min => *slot = slot.min(x),
        }
        for p in (0..counter.len()).rev() {
            counter[p] += 1;
            if counter[p] < f.cards[p] {
                out += out_stride[p];
                break;
            }
            counter[p] = 0;
            out -= out_stride[p] * (f.cards[p] - 1);
        }
    }
    if op == EliminationOperator::Mean {
        let count: f64 = (0..f.scope.len())
            .filter(|p| !keep.contains(p))
            .map(|p| f.cards[p] as f64)
            .product();
        values.iter_mut().for_each(|v| *v /= count);
    }
    Ok(Factor { scope, cards, values, child: None })
}

/// Scale `f` to sum to one. Returns the scaled factor and the original sum.
pub fn normalize(f: &Factor) -> Result<(Factor, f64), FactorError> {
    let z = f.sum();
    if !(z > 0.0) {
        return Err(FactorError::AllZero);
    }
    let mut g = f.clone();
    g.values.iter_mut().for_each(|v| *v /= z);
    Ok((g, z))
}
