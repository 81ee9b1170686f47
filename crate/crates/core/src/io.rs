//! Plain-text network, evidence, marginals and truth files.
//!
//! Network grammar (whitespace separated, `#` starts a comment line):
//!
//! ```text
//! BAYES
//! n
//! d_0 ... d_{n-1}
//! r
//! k v_1 ... v_k        (r scope lines, the child variable last)
//! t p_1 ... p_t        (r tables, row-major, last scope variable fastest)
//! ```
//!
//! A `MARKOV` header reads the same layout as a plain factor list with no
//! CPT checks.

use std::fmt::Write as _;

use thiserror::Error;

use crate::factor::Factor;
use crate::model::{BayesianNetwork, Evidence, Variable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{msg}")]
    Semantic { msg: String },
}

fn syntax(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Syntax { line, msg: msg.into() }
}

fn semantic(msg: impl ToString) -> IoError {
    IoError::Semantic { msg: msg.to_string() }
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut items = Vec::new();
        let mut last_line = 1;
        for (i, line) in text.lines().enumerate() {
            last_line = i + 1;
            if line.trim_start().starts_with('#') {
                continue;
            }
            items.extend(line.split_whitespace().map(|t| (i + 1, t)));
        }
        Tokens { items, pos: 0, last_line }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), IoError> {
        let t = self
            .items
            .get(self.pos)
            .copied()
            .ok_or_else(|| syntax(self.last_line, format!("unexpected end of input, expected {what}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn usize(&mut self, what: &str) -> Result<(usize, usize), IoError> {
        let (line, t) = self.next(what)?;
        t.parse().map(|v| (line, v)).map_err(|_| syntax(line, format!("expected {what}, found `{t}`")))
    }

    fn real(&mut self, what: &str) -> Result<f64, IoError> {
        let (line, t) = self.next(what)?;
        t.parse().map_err(|_| syntax(line, format!("expected {what}, found `{t}`")))
    }

    fn finish(&self) -> Result<(), IoError> {
        match self.items.get(self.pos) {
            Some(&(line, t)) => Err(syntax(line, format!("unexpected trailing token `{t}`"))),
            None => Ok(()),
        }
    }
}

pub fn parse_network(text: &str) -> Result<BayesianNetwork, IoError> {
    let mut tk = Tokens::new(text);
    let (line, header) = tk.next("header")?;
    let bayes = match header {
        "BAYES" => true,
        "MARKOV" => false,
        other => return Err(syntax(line, format!("expected BAYES or MARKOV, found `{other}`"))),
    };
    let (_, n) = tk.usize("variable count")?;
    let mut cards = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, c) = tk.usize("cardinality")?;
        if c == 0 {
            return Err(syntax(line, "cardinality must be positive"));
        }
        cards.push(c);
    }
    let (line, r) = tk.usize("function count")?;
    if bayes && r != n {
        return Err(syntax(line, format!("a Bayesian network needs {n} tables, found {r}")));
    }
    let mut scopes = Vec::with_capacity(r);
    for _ in 0..r {
        let (line, k) = tk.usize("scope size")?;
        if bayes && k == 0 {
            return Err(syntax(line, "a CPT scope cannot be empty"));
        }
        let mut scope = Vec::with_capacity(k);
        for _ in 0..k {
            let (line, v) = tk.usize("variable id")?;
            if v >= n {
                return Err(syntax(line, format!("variable {v} out of range")));
            }
            if scope.contains(&v) {
                return Err(syntax(line, format!("variable {v} repeated in a scope")));
            }
            scope.push(v);
        }
        scopes.push((line, scope));
    }
    let mut factors = Vec::with_capacity(r);
    let mut edges = Vec::new();
    for (line, scope) in scopes {
        let (tline, t) = tk.usize("table size")?;
        let fcards: Vec<usize> = scope.iter().map(|&v| cards[v]).collect();
        let expected: usize = fcards.iter().product();
        if t != expected {
            return Err(syntax(tline, format!("table has {t} entries, its scope needs {expected}")));
        }
        let mut values = Vec::with_capacity(t);
        for _ in 0..t {
            values.push(tk.real("probability")?);
        }
        let f = if bayes {
            let child = *scope.last().expect("nonempty scope");
            edges.extend(scope[..scope.len() - 1].iter().map(|&p| (p, child)));
            Factor::cpt(scope, fcards, values, child)
        } else {
            Factor::new(scope, fcards, values)
        };
        factors.push(f.map_err(|e| syntax(line, e.to_string()))?);
    }
    tk.finish()?;
    let variables = cards.iter().enumerate().map(|(i, &c)| Variable::new(i, c)).collect();
    if bayes {
        BayesianNetwork::new(variables, factors, edges).map_err(semantic)
    } else {
        BayesianNetwork::from_factors(variables, factors).map_err(semantic)
    }
}

fn push_values(out: &mut String, values: &[f64]) {
    for (k, p) in values.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{p:.16e}");
    }
    out.push('\n');
}

pub fn write_network(net: &BayesianNetwork) -> String {
    let bayes = !net.is_permissive();
    let mut out = String::from(if bayes { "BAYES\n" } else { "MARKOV\n" });
    let _ = writeln!(out, "{}", net.num_variables());
    let cards: Vec<String> = net.cards().iter().map(|c| c.to_string()).collect();
    let _ = writeln!(out, "{}", cards.join(" "));
    let _ = writeln!(out, "{}", net.cpts().len());
    let tables: Vec<Factor> = net
        .cpts()
        .iter()
        .map(|f| match (bayes, f.child()) {
            (true, Some(child)) if f.scope().last() != Some(&child) => {
                let mut order: Vec<usize> = f.scope().iter().copied().filter(|&v| v != child).collect();
                order.push(child);
                f.reorder(&order).expect("permutation of the scope")
            }
            _ => f.clone(),
        })
        .collect();
    for f in &tables {
        let _ = write!(out, "{}", f.scope().len());
        for v in f.scope() {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    for f in &tables {
        out.push('\n');
        let _ = writeln!(out, "{}", f.len());
        push_values(&mut out, f.values());
    }
    out
}

/// `m` followed by `m` pairs `var value`.
pub fn parse_evidence(text: &str) -> Result<Evidence, IoError> {
    let mut tk = Tokens::new(text);
    let (_, m) = tk.usize("evidence count")?;
    let mut ev = Evidence::empty();
    for _ in 0..m {
        let (line, var) = tk.usize("variable id")?;
        let (_, value) = tk.usize("value")?;
        if ev.contains(var) {
            return Err(syntax(line, format!("variable {var} observed twice")));
        }
        ev.insert(var, value);
    }
    tk.finish()?;
    Ok(ev)
}

/// [`parse_evidence`] plus a range check against `net`.
pub fn parse_evidence_for(text: &str, net: &BayesianNetwork) -> Result<Evidence, IoError> {
    let ev = parse_evidence(text)?;
    ev.validate(net).map_err(semantic)?;
    Ok(ev)
}

pub fn write_evidence(ev: &Evidence) -> String {
    let mut out = format!("{}\n", ev.len());
    for (v, x) in ev.iter() {
        let _ = writeln!(out, "{v} {x}");
    }
    out
}

/// Lines `var d p_1 ... p_d`, variables in order starting at 0.
pub fn parse_marginals(text: &str) -> Result<Vec<Vec<f64>>, IoError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        let num = |k: usize| -> Result<usize, IoError> {
            fields
                .get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| syntax(line_no, "expected `var d p_1 ... p_d`"))
        };
        let (var, d) = (num(0)?, num(1)?);
        if var != rows.len() {
            return Err(syntax(line_no, format!("expected variable {}, found {var}", rows.len())));
        }
        if fields.len() != d + 2 {
            return Err(syntax(line_no, format!("expected {d} probabilities")));
        }
        let row: Result<Vec<f64>, IoError> = fields[2..]
            .iter()
            .map(|s| s.parse().map_err(|_| syntax(line_no, format!("bad probability `{s}`"))))
            .collect();
        rows.push(row?);
    }
    Ok(rows)
}

pub fn write_marginals(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for (v, row) in rows.iter().enumerate() {
        let _ = write!(out, "{v} {}", row.len());
        for p in row {
            let _ = write!(out, " {p:.16e}");
        }
        out.push('\n');
    }
    out
}

/// One bit per line.
pub fn parse_truth(text: &str) -> Result<Vec<usize>, IoError> {
    let mut bits = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match line.trim() {
            "" => {}
            "0" => bits.push(0),
            "1" => bits.push(1),
            other => return Err(syntax(i + 1, format!("expected 0 or 1, found `{other}`"))),
        }
    }
    Ok(bits)
}

pub fn write_truth(bits: &[usize]) -> String {
    bits.iter().map(|b| format!("{b}\n")).collect()
}
