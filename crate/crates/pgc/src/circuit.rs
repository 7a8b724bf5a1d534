//! Generating circuits: DAGs of weighted sums, products and variable leaves
//! computing a generating polynomial, plus closure-backed evaluators that
//! satisfy the same evaluation contract without materialized nodes.
//!
//! Queries follow the polynomial-ring scheme: to compute
//! Pr(X_i = 1 for i in A, X_i = 0 for i in B), evaluate the circuit with
//! z_i -> t for i in A, z_i -> 0 for i in B, z_i -> 1 otherwise, and read the
//! coefficient of t^|A|.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::num::Real;
use crate::polyring::{GenPoly, MulBackend};

/// One node of a circuit DAG. Children refer to earlier node ids.
#[derive(Debug, Clone, PartialEq)]
pub enum Node<R: Real> {
    /// Weighted sum; weights may be negative.
    Sum(Vec<(usize, R)>),
    /// Unweighted product.
    Product(Vec<usize>),
    /// Variable leaf z_i, 0-based.
    Var(usize),
    /// Constant leaf.
    Const(R),
}

/// Materialized circuit: topologically ordered node store plus root id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag<R: Real> {
    pub nodes: Vec<Node<R>>,
    pub root: usize,
    pub nvars: usize,
}

/// Evaluator backed by a closure instead of a node DAG; used for
/// determinant-based generating polynomials. `size` reports the cost model's
/// operation count in place of an edge count.
#[derive(Clone)]
pub struct ClosureCircuit<R: Real> {
    pub nvars: usize,
    pub size: usize,
    pub eval: Arc<dyn Fn(&[GenPoly<R>]) -> Result<GenPoly<R>> + Send + Sync>,
}

impl<R: Real> std::fmt::Debug for ClosureCircuit<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClosureCircuit")
            .field("nvars", &self.nvars)
            .field("size", &self.size)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum Circuit<R: Real> {
    Dag(Dag<R>),
    Closure(ClosureCircuit<R>),
}

/// A marginal query: variables in `ones` are set to 1, `zeros` to 0, the
/// rest are summed out.
#[derive(Debug, Clone, Default)]
pub struct MarginalQuery {
    ones: Vec<usize>,
    zeros: Vec<usize>,
}

impl MarginalQuery {
    pub fn new(ones: Vec<usize>, zeros: Vec<usize>) -> Result<Self> {
        for i in &ones {
            if zeros.contains(i) {
                return Err(Error::contract(format!(
                    "variable {} in both the one-set and the zero-set",
                    i + 1
                )));
            }
        }
        Ok(MarginalQuery { ones, zeros })
    }

    pub fn ones(&self) -> &[usize] {
        &self.ones
    }

    pub fn zeros(&self) -> &[usize] {
        &self.zeros
    }
}

/// Outcome of a semantic check by enumeration.
#[derive(Debug, Clone)]
pub struct SemanticsReport<R> {
    pub nonnegative: bool,
    pub normalized: bool,
    pub max_violation: R,
}

pub const SEMANTIC_TOL: f64 = 1e-9;
pub const DEFAULT_ENUM_LIMIT: usize = 20;

impl<R: Real> Circuit<R> {
    pub fn nvars(&self) -> usize {
        match self {
            Circuit::Dag(d) => d.nvars,
            Circuit::Closure(c) => c.nvars,
        }
    }

    /// Edge count for a DAG; reported operation count for a closure.
    pub fn size(&self) -> usize {
        match self {
            Circuit::Dag(d) => d
                .nodes
                .iter()
                .map(|n| match n {
                    Node::Sum(ch) => ch.len(),
                    Node::Product(ch) => ch.len(),
                    _ => 0,
                })
                .sum(),
            Circuit::Closure(c) => c.size,
        }
    }

    pub fn as_dag(&self) -> Option<&Dag<R>> {
        match self {
            Circuit::Dag(d) => Some(d),
            Circuit::Closure(_) => None,
        }
    }

    /// Structural checks: topological child order, variable ranges, a single
    /// node of out-degree zero which is the root. Returns all violations
    /// instead of failing on the first.
    pub fn validate_syntax(&self) -> Vec<String> {
        let d = match self {
            Circuit::Dag(d) => d,
            Circuit::Closure(_) => return Vec::new(),
        };
        let mut violations = Vec::new();
        if d.nodes.is_empty() {
            violations.push("empty circuit".to_string());
            return violations;
        }
        if d.root >= d.nodes.len() {
            violations.push(format!("root id {} out of range", d.root));
        }
        let mut has_parent = vec![false; d.nodes.len()];
        for (id, node) in d.nodes.iter().enumerate() {
            let children: Vec<usize> = match node {
                Node::Sum(ch) => ch.iter().map(|&(c, _)| c).collect(),
                Node::Product(ch) => ch.clone(),
                Node::Var(i) => {
                    if *i >= d.nvars {
                        violations.push(format!(
                            "node {id}: variable index {} out of range 1..{}",
                            i + 1,
                            d.nvars
                        ));
                    }
                    continue;
                }
                Node::Const(_) => continue,
            };
            if children.is_empty() {
                violations.push(format!("node {id}: inner node without children"));
            }
            for c in children {
                if c >= d.nodes.len() {
                    violations.push(format!("node {id}: child id {c} out of range"));
                } else if c >= id {
                    violations.push(format!("node {id}: not topologically ordered (child {c})"));
                } else {
                    has_parent[c] = true;
                }
            }
        }
        let roots: Vec<usize> = has_parent
            .iter()
            .enumerate()
            .filter(|&(_, &p)| !p)
            .map(|(i, _)| i)
            .collect();
        if roots.len() > 1 {
            violations.push(format!("multiple roots: nodes {roots:?}"));
        }
        if roots != [d.root] && roots.len() == 1 && roots[0] != d.root {
            violations.push(format!(
                "designated root {} is not the out-degree-0 node {}",
                d.root, roots[0]
            ));
        }
        violations
    }

    /// Value of the represented polynomial at a numeric point.
    pub fn evaluate_numeric(&self, z: &[R]) -> Result<R> {
        if z.len() != self.nvars() {
            return Err(Error::contract(format!(
                "expected {} variable values, got {}",
                self.nvars(),
                z.len()
            )));
        }
        match self {
            Circuit::Dag(d) => {
                let mut vals: Vec<R> = Vec::with_capacity(d.nodes.len());
                for node in &d.nodes {
                    let v = match node {
                        Node::Var(i) => z[*i],
                        Node::Const(c) => *c,
                        Node::Sum(ch) => ch.iter().map(|&(c, w)| vals[c] * w).sum(),
                        Node::Product(ch) => {
                            ch.iter().fold(R::one(), |acc, &c| acc * vals[c])
                        }
                    };
                    vals.push(v);
                }
                Ok(vals[d.root])
            }
            Circuit::Closure(_) => {
                // degree-0 ring evaluation
                let leaves: Vec<GenPoly<R>> =
                    z.iter().map(|&v| GenPoly::constant(v, 0)).collect();
                Ok(self.evaluate_ring(&leaves)?.coef(0))
            }
        }
    }

    /// Bottom-up evaluation over the truncated polynomial ring; `leaves[i]`
    /// is the value assigned to z_i and all leaves must share a cap.
    pub fn evaluate_ring(&self, leaves: &[GenPoly<R>]) -> Result<GenPoly<R>> {
        if leaves.len() != self.nvars() {
            return Err(Error::contract(format!(
                "expected {} leaf polynomials, got {}",
                self.nvars(),
                leaves.len()
            )));
        }
        let cap = leaves.first().map(|p| p.cap()).unwrap_or(0);
        if leaves.iter().any(|p| p.cap() != cap) {
            return Err(Error::contract("leaf polynomials must share a cap"));
        }
        match self {
            Circuit::Dag(d) => {
                let mut vals: Vec<GenPoly<R>> = Vec::with_capacity(d.nodes.len());
                for node in &d.nodes {
                    let v = match node {
                        Node::Var(i) => leaves[*i].clone(),
                        Node::Const(c) => GenPoly::constant(*c, cap),
                        Node::Sum(ch) => {
                            let mut acc = GenPoly::zero(cap);
                            for &(c, w) in ch {
                                acc = acc.add(&vals[c].scale(w))?;
                            }
                            acc
                        }
                        Node::Product(ch) => {
                            let mut acc = GenPoly::one(cap);
                            for &c in ch {
                                acc = acc.mul(&vals[c], MulBackend::Auto)?;
                            }
                            acc
                        }
                    };
                    vals.push(v);
                }
                Ok(vals.swap_remove(d.root))
            }
            Circuit::Closure(c) => (c.eval)(leaves),
        }
    }

    /// Marginal probability of the query, via ring evaluation at cap |A|.
    pub fn marginal(&self, q: &MarginalQuery) -> Result<R> {
        let n = self.nvars();
        for &i in q.ones().iter().chain(q.zeros()) {
            if i >= n {
                return Err(Error::contract(format!(
                    "query variable {} out of range 1..{n}",
                    i + 1
                )));
            }
        }
        let cap = q.ones().len();
        let mut leaves = vec![GenPoly::one(cap); n];
        for &i in q.ones() {
            leaves[i] = GenPoly::t(cap);
        }
        for &i in q.zeros() {
            leaves[i] = GenPoly::zero(cap);
        }
        Ok(self.evaluate_ring(&leaves)?.coef(cap))
    }

    /// Likelihood of a full assignment.
    pub fn likelihood(&self, x: &[bool]) -> Result<R> {
        if x.len() != self.nvars() {
            return Err(Error::contract(format!(
                "assignment length {} does not match {} variables",
                x.len(),
                self.nvars()
            )));
        }
        let ones = x.iter().enumerate().filter(|&(_, &b)| b).map(|(i, _)| i).collect();
        let zeros = x.iter().enumerate().filter(|&(_, &b)| !b).map(|(i, _)| i).collect();
        self.marginal(&MarginalQuery::new(ones, zeros)?)
    }

    /// Natural log of the likelihood; underflows to -inf for zero mass.
    pub fn log_likelihood(&self, x: &[bool]) -> Result<R> {
        Ok(self.likelihood(x)?.ln())
    }

    /// Probability of every assignment by 2^n likelihood calls. Assignment
    /// order counts up with variable 1 as the most significant bit, matching
    /// a truth table.
    pub fn expand_joint(&self, limit: usize) -> Result<Vec<R>> {
        let n = self.nvars();
        if n > limit {
            return Err(Error::refused(format!(
                "enumeration over {n} variables exceeds limit {limit}"
            )));
        }
        let mut table = Vec::with_capacity(1 << n);
        for row in 0..(1usize << n) {
            let x: Vec<bool> = (0..n).map(|i| (row >> (n - 1 - i)) & 1 == 1).collect();
            table.push(self.likelihood(&x)?);
        }
        Ok(table)
    }

    /// Enumeration check that the circuit's joint is a distribution.
    pub fn validate_semantics(&self, limit: usize) -> Result<SemanticsReport<R>> {
        let tol = R::lit(SEMANTIC_TOL);
        let table = self.expand_joint(limit)?;
        let mut max_violation = R::zero();
        let mut nonnegative = true;
        let mut sum = R::zero();
        for &p in &table {
            if p < -tol {
                nonnegative = false;
            }
            if -p > max_violation {
                max_violation = -p;
            }
            sum += p;
        }
        let norm_err = (sum - R::one()).abs();
        let normalized = norm_err <= tol;
        if norm_err > max_violation {
            max_violation = norm_err;
        }
        Ok(SemanticsReport { nonnegative, normalized, max_violation })
    }
}

/// Incremental DAG builder; node ids are returned in push order and the last
/// pushed node becomes the root.
#[derive(Debug, Clone)]
pub struct CircuitBuilder<R: Real> {
    nodes: Vec<Node<R>>,
    nvars: usize,
}

impl<R: Real> CircuitBuilder<R> {
    pub fn new(nvars: usize) -> Self {
        CircuitBuilder { nodes: Vec::new(), nvars }
    }

    pub fn var(&mut self, i: usize) -> usize {
        self.push(Node::Var(i))
    }

    pub fn constant(&mut self, c: R) -> usize {
        self.push(Node::Const(c))
    }

    pub fn sum(&mut self, children: Vec<(usize, R)>) -> usize {
        self.push(Node::Sum(children))
    }

    pub fn product(&mut self, children: Vec<usize>) -> usize {
        self.push(Node::Product(children))
    }

    pub fn push(&mut self, node: Node<R>) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    pub fn next_id(&self) -> usize {
        self.nodes.len()
    }

    pub fn build(self) -> Circuit<R> {
        let root = self.nodes.len().saturating_sub(1);
        Circuit::Dag(Dag { nodes: self.nodes, root, nvars: self.nvars })
    }

    pub fn build_with_root(self, root: usize) -> Circuit<R> {
        Circuit::Dag(Dag { nodes: self.nodes, root, nvars: self.nvars })
    }
}

/// Line-oriented text format. Header `pgc <n> <num_nodes>`, one node per
/// line (`v <i>` 1-based variable, `k <value>`, `s <child:weight>...`,
/// `p <child>...`), node ids are 0-based line positions, last node is root.
pub fn to_text<R: Real>(circuit: &Circuit<R>) -> Result<String> {
    let d = circuit
        .as_dag()
        .ok_or_else(|| Error::refused("closure-backed circuits have no node serialization"))?;
    // serialization relies on the root being last
    if d.root != d.nodes.len() - 1 {
        return Err(Error::refused("root must be the last node for serialization"));
    }
    let mut out = String::new();
    writeln!(out, "pgc {} {}", d.nvars, d.nodes.len()).unwrap();
    for node in &d.nodes {
        match node {
            Node::Var(i) => writeln!(out, "v {}", i + 1).unwrap(),
            Node::Const(c) => writeln!(out, "k {:.16e}", c).unwrap(),
            Node::Sum(ch) => {
                out.push('s');
                for &(c, w) in ch {
                    write!(out, " {}:{:.16e}", c, w).unwrap();
                }
                out.push('\n');
            }
            Node::Product(ch) => {
                out.push('p');
                for &c in ch {
                    write!(out, " {}", c).unwrap();
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

pub fn from_text<R: Real>(text: &str) -> Result<Circuit<R>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "pgc" {
        return Err(Error::Parse { line: 1, msg: "expected header `pgc <n> <num_nodes>`".into() });
    }
    let nvars: usize = parse_field(parts[1], 1)?;
    let num_nodes: usize = parse_field(parts[2], 1)?;
    let mut nodes: Vec<Node<R>> = Vec::with_capacity(num_nodes);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let tag = toks.next().unwrap();
        let node = match tag {
            "v" => {
                let i: usize = parse_field(
                    toks.next().ok_or_else(|| missing(lineno))?,
                    lineno,
                )?;
                if i == 0 {
                    return Err(Error::Parse { line: lineno, msg: "variable index is 1-based".into() });
                }
                Node::Var(i - 1)
            }
            "k" => {
                let c: f64 = parse_field(toks.next().ok_or_else(|| missing(lineno))?, lineno)?;
                Node::Const(R::lit(c))
            }
            "s" => {
                let mut ch = Vec::new();
                for tok in toks {
                    let (c, w) = tok.split_once(':').ok_or(Error::Parse {
                        line: lineno,
                        msg: format!("expected child:weight, got `{tok}`"),
                    })?;
                    ch.push((parse_field::<usize>(c, lineno)?, R::lit(parse_field(w, lineno)?)));
                }
                Node::Sum(ch)
            }
            "p" => {
                let mut ch = Vec::new();
                for tok in toks {
                    ch.push(parse_field::<usize>(tok, lineno)?);
                }
                Node::Product(ch)
            }
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("unknown node tag `{other}`"),
                })
            }
        };
        nodes.push(node);
    }
    if nodes.len() != num_nodes {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header promises {} nodes, found {}", num_nodes, nodes.len()),
        });
    }
    let root = nodes.len().saturating_sub(1);
    let circuit = Circuit::Dag(Dag { nodes, root, nvars });
    let violations = circuit.validate_syntax();
    if !violations.is_empty() {
        return Err(Error::Parse { line: 1, msg: violations.join("; ") });
    }
    Ok(circuit)
}

pub(crate) fn parse_field<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse { line, msg: format!("bad token `{tok}`") })
}

fn missing(line: usize) -> Error {
    Error::Parse { line, msg: "missing field".into() }
}
