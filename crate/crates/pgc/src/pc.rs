//! Probabilistic mass circuits: circuits over positive/negative literal
//! leaves with nonnegative weights, computing a probability mass polynomial.
//! Smooth and decomposable mass circuits answer marginals by evaluation and
//! convert to generating circuits by substituting z_i for X_i and 1 for the
//! negated literal.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::circuit::{Circuit, CircuitBuilder, MarginalQuery};
use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum MassNode<R: Real> {
    /// Weighted sum; weights must be nonnegative.
    Sum(Vec<(usize, R)>),
    Product(Vec<usize>),
    /// Positive literal X_i, 0-based.
    Pos(usize),
    /// Negated literal, 0-based.
    Neg(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassCircuit<R: Real> {
    pub nodes: Vec<MassNode<R>>,
    pub root: usize,
    pub nvars: usize,
}

impl<R: Real> MassCircuit<R> {
    /// Checks topological order, ranges and the nonnegative-weight rule.
    pub fn new(nodes: Vec<MassNode<R>>, root: usize, nvars: usize) -> Result<Self> {
        if nodes.is_empty() || root >= nodes.len() {
            return Err(Error::contract("empty circuit or root out of range"));
        }
        for (id, node) in nodes.iter().enumerate() {
            match node {
                MassNode::Pos(i) | MassNode::Neg(i) => {
                    if *i >= nvars {
                        return Err(Error::contract(format!(
                            "node {id}: variable index out of range"
                        )));
                    }
                }
                MassNode::Sum(ch) => {
                    for &(c, w) in ch {
                        if c >= id {
                            return Err(Error::contract(format!(
                                "node {id}: not topologically ordered"
                            )));
                        }
                        if w < R::zero() {
                            return Err(Error::contract(format!(
                                "node {id}: negative sum weight {w}"
                            )));
                        }
                    }
                }
                MassNode::Product(ch) => {
                    if ch.iter().any(|&c| c >= id) {
                        return Err(Error::contract(format!(
                            "node {id}: not topologically ordered"
                        )));
                    }
                }
            }
        }
        Ok(MassCircuit { nodes, root, nvars })
    }

    pub fn edge_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                MassNode::Sum(ch) => ch.len(),
                MassNode::Product(ch) => ch.len(),
                _ => 0,
            })
            .sum()
    }

    /// Variable scope of every node, bottom-up.
    fn scopes(&self) -> Vec<BTreeSet<usize>> {
        let mut scopes: Vec<BTreeSet<usize>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let s = match node {
                MassNode::Pos(i) | MassNode::Neg(i) => BTreeSet::from([*i]),
                MassNode::Sum(ch) => ch
                    .iter()
                    .flat_map(|&(c, _)| scopes[c].iter().copied())
                    .collect(),
                MassNode::Product(ch) => {
                    ch.iter().flat_map(|&c| scopes[c].iter().copied()).collect()
                }
            };
            scopes.push(s);
        }
        scopes
    }

    /// Every product node's children must have pairwise disjoint scopes.
    pub fn check_decomposable(&self) -> (bool, Vec<usize>) {
        let scopes = self.scopes();
        let mut offending = Vec::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if let MassNode::Product(ch) = node {
                let total: usize = ch.iter().map(|&c| scopes[c].len()).sum();
                if total != scopes[id].len() {
                    offending.push(id);
                }
            }
        }
        (offending.is_empty(), offending)
    }

    /// Every sum node's children must have identical scopes.
    pub fn check_smooth(&self) -> (bool, Vec<usize>) {
        let scopes = self.scopes();
        let mut offending = Vec::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if let MassNode::Sum(ch) = node {
                if ch.iter().any(|&(c, _)| scopes[c] != scopes[id]) {
                    offending.push(id);
                }
            }
        }
        (offending.is_empty(), offending)
    }

    /// Make every sum node smooth by multiplying deficient children with
    /// (X_j + negated X_j) gadgets for their missing scope variables. The
    /// induced distribution is unchanged.
    pub fn smooth(&self) -> Result<MassCircuit<R>> {
        let (decomposable, offending) = self.check_decomposable();
        if !decomposable {
            return Err(Error::refused(format!(
                "cannot smooth a non-decomposable circuit (product nodes {offending:?})"
            )));
        }
        let scopes = self.scopes();
        let mut out: Vec<MassNode<R>> = Vec::new();
        let mut remap: Vec<usize> = Vec::with_capacity(self.nodes.len());
        // one (X_j + negated X_j) gadget per variable, created on demand
        let mut gadget: Vec<Option<usize>> = vec![None; self.nvars];
        for (id, node) in self.nodes.iter().enumerate() {
            let new_node = match node {
                MassNode::Pos(i) => MassNode::Pos(*i),
                MassNode::Neg(i) => MassNode::Neg(*i),
                MassNode::Product(ch) => {
                    MassNode::Product(ch.iter().map(|&c| remap[c]).collect())
                }
                MassNode::Sum(ch) => {
                    let mut new_ch = Vec::with_capacity(ch.len());
                    for &(c, w) in ch {
                        let missing: Vec<usize> =
                            scopes[id].difference(&scopes[c]).copied().collect();
                        let child = if missing.is_empty() {
                            remap[c]
                        } else {
                            let mut factors = vec![remap[c]];
                            for j in missing {
                                let g = *gadget[j].get_or_insert_with(|| {
                                    out.push(MassNode::Pos(j));
                                    out.push(MassNode::Neg(j));
                                    out.push(MassNode::Sum(vec![
                                        (out.len() - 2, R::one()),
                                        (out.len() - 1, R::one()),
                                    ]));
                                    out.len() - 1
                                });
                                factors.push(g);
                            }
                            out.push(MassNode::Product(factors));
                            out.len() - 1
                        };
                        new_ch.push((child, w));
                    }
                    MassNode::Sum(new_ch)
                }
            };
            out.push(new_node);
            remap.push(out.len() - 1);
        }
        MassCircuit::new(out, remap[self.root], self.nvars)
    }

    /// Raw evaluation with explicit values for each literal.
    pub fn evaluate_mass(&self, pos: &[R], neg: &[R]) -> Result<R> {
        if pos.len() != self.nvars || neg.len() != self.nvars {
            return Err(Error::contract("literal value vectors must have length n"));
        }
        let mut vals: Vec<R> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node {
                MassNode::Pos(i) => pos[*i],
                MassNode::Neg(i) => neg[*i],
                MassNode::Sum(ch) => ch.iter().map(|&(c, w)| vals[c] * w).sum(),
                MassNode::Product(ch) => ch.iter().fold(R::one(), |acc, &c| acc * vals[c]),
            };
            vals.push(v);
        }
        Ok(vals[self.root])
    }

    fn require_smooth_decomposable(&self) -> Result<()> {
        let (d, off) = self.check_decomposable();
        if !d {
            return Err(Error::refused(format!("not decomposable (nodes {off:?})")));
        }
        let (s, off) = self.check_smooth();
        if !s {
            return Err(Error::refused(format!("not smooth (nodes {off:?})")));
        }
        Ok(())
    }

    /// Marginal by evaluation: literals in A get (1, 0), in B (0, 1), free
    /// variables (1, 1). Unnormalized circuits are accepted; the result is
    /// divided by the all-free evaluation.
    pub fn marginal(&self, q: &MarginalQuery) -> Result<R> {
        self.require_smooth_decomposable()?;
        for &i in q.ones().iter().chain(q.zeros()) {
            if i >= self.nvars {
                return Err(Error::contract(format!("query variable {} out of range", i + 1)));
            }
        }
        let mut pos = vec![R::one(); self.nvars];
        let mut neg = vec![R::one(); self.nvars];
        for &i in q.ones() {
            neg[i] = R::zero();
        }
        for &i in q.zeros() {
            pos[i] = R::zero();
        }
        let raw = self.evaluate_mass(&pos, &neg)?;
        let norm = self.evaluate_mass(&vec![R::one(); self.nvars], &vec![R::one(); self.nvars])?;
        if !(norm > R::zero()) {
            return Err(Error::numerical(format!("all-free evaluation is {norm}")));
        }
        Ok(raw / norm)
    }

    pub fn likelihood(&self, x: &[bool]) -> Result<R> {
        let ones = x.iter().enumerate().filter(|&(_, &b)| b).map(|(i, _)| i).collect();
        let zeros = x.iter().enumerate().filter(|&(_, &b)| !b).map(|(i, _)| i).collect();
        self.marginal(&MarginalQuery::new(ones, zeros)?)
    }

    /// Convert to a generating circuit by substituting z_i for X_i and the
    /// constant 1 for negated literals; smooths first when needed, and
    /// normalizes unnormalized inputs with one extra sum node.
    pub fn to_pgc(&self) -> Result<Circuit<R>> {
        let (smooth_already, _) = self.check_smooth();
        let source = if smooth_already {
            self.clone()
        } else {
            self.smooth()?
        };
        source.require_smooth_decomposable()?;
        let norm = source
            .evaluate_mass(&vec![R::one(); self.nvars], &vec![R::one(); self.nvars])?;
        if !(norm > R::zero()) {
            return Err(Error::numerical("circuit mass is not positive"));
        }
        let mut b = CircuitBuilder::new(self.nvars);
        let mut const_one: Option<usize> = None;
        let mut remap = Vec::with_capacity(source.nodes.len());
        for node in &source.nodes {
            let id = match node {
                MassNode::Pos(i) => b.var(*i),
                MassNode::Neg(_) => *const_one.get_or_insert_with(|| b.constant(R::one())),
                MassNode::Sum(ch) => b.sum(ch.iter().map(|&(c, w)| (remap[c], w)).collect()),
                MassNode::Product(ch) => b.product(ch.iter().map(|&c| remap[c]).collect()),
            };
            remap.push(id);
        }
        let root = remap[source.root];
        if (norm - R::one()).abs() > R::lit(1e-9) {
            b.sum(vec![(root, R::one() / norm)]);
            Ok(b.build())
        } else {
            Ok(b.build_with_root(root))
        }
    }
}

/// Text format mirroring the generating-circuit one: header
/// `pmc <n> <num_nodes>`, leaf lines `x <i>` / `nx <i>` (1-based).
pub fn to_text<R: Real>(pc: &MassCircuit<R>) -> Result<String> {
    if pc.root != pc.nodes.len() - 1 {
        return Err(Error::refused("root must be the last node for serialization"));
    }
    let mut out = String::new();
    writeln!(out, "pmc {} {}", pc.nvars, pc.nodes.len()).unwrap();
    for node in &pc.nodes {
        match node {
            MassNode::Pos(i) => writeln!(out, "x {}", i + 1).unwrap(),
            MassNode::Neg(i) => writeln!(out, "nx {}", i + 1).unwrap(),
            MassNode::Sum(ch) => {
                out.push('s');
                for &(c, w) in ch {
                    write!(out, " {}:{:.16e}", c, w).unwrap();
                }
                out.push('\n');
            }
            MassNode::Product(ch) => {
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

pub fn from_text<R: Real>(text: &str) -> Result<MassCircuit<R>> {
    use crate::circuit::parse_field;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "pmc" {
        return Err(Error::Parse { line: 1, msg: "expected header `pmc <n> <num_nodes>`".into() });
    }
    let nvars: usize = parse_field(parts[1], 1)?;
    let num_nodes: usize = parse_field(parts[2], 1)?;
    let mut nodes = Vec::with_capacity(num_nodes);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let tag = toks.next().unwrap();
        let leaf_index = |toks: &mut dyn Iterator<Item = &str>| -> Result<usize> {
            let i: usize = parse_field(
                toks.next()
                    .ok_or(Error::Parse { line: lineno, msg: "missing field".into() })?,
                lineno,
            )?;
            if i == 0 {
                return Err(Error::Parse { line: lineno, msg: "variable index is 1-based".into() });
            }
            Ok(i - 1)
        };
        let node = match tag {
            "x" => MassNode::Pos(leaf_index(&mut toks)?),
            "nx" => MassNode::Neg(leaf_index(&mut toks)?),
            "s" => {
                let mut ch = Vec::new();
                for tok in toks {
                    let (c, w) = tok.split_once(':').ok_or(Error::Parse {
                        line: lineno,
                        msg: format!("expected child:weight, got `{tok}`"),
                    })?;
                    ch.push((parse_field::<usize>(c, lineno)?, R::lit(parse_field(w, lineno)?)));
                }
                MassNode::Sum(ch)
            }
            "p" => MassNode::Product(
                toks.map(|t| parse_field::<usize>(t, lineno)).collect::<Result<_>>()?,
            ),
            other => {
                return Err(Error::Parse { line: lineno, msg: format!("unknown node tag `{other}`") })
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
    let root = nodes.len() - 1;
    MassCircuit::new(nodes, root, nvars)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// A smooth, decomposable mass circuit for the worked three-variable
    /// distribution: the joint over (X1, X2) factors out of X3, so the
    /// circuit is (sum over the four X1 X2 states) * (0.8 X3 + 0.2 nX3).
    pub fn beta_pc<R: Real>() -> MassCircuit<R> {
        let w = [0.1, 0.6, 0.1, 0.2]; // Pr(X1 X2) for 00, 01, 10, 11
        let mut nodes = Vec::new();
        let x1 = nodes.len();
        nodes.push(MassNode::Pos(0));
        let nx1 = nodes.len();
        nodes.push(MassNode::Neg(0));
        let x2 = nodes.len();
        nodes.push(MassNode::Pos(1));
        let nx2 = nodes.len();
        nodes.push(MassNode::Neg(1));
        let states = [(nx1, nx2), (nx1, x2), (x1, nx2), (x1, x2)];
        let mut prods = Vec::new();
        for (a, b) in states {
            prods.push(nodes.len());
            nodes.push(MassNode::Product(vec![a, b]));
        }
        let pair_sum = nodes.len();
        nodes.push(MassNode::Sum(
            prods.iter().zip(w).map(|(&p, wi)| (p, R::lit(wi))).collect(),
        ));
        let x3 = nodes.len();
        nodes.push(MassNode::Pos(2));
        let nx3 = nodes.len();
        nodes.push(MassNode::Neg(2));
        let x3_sum = nodes.len();
        nodes.push(MassNode::Sum(vec![(x3, R::lit(0.8)), (nx3, R::lit(0.2))]));
        let root = nodes.len();
        nodes.push(MassNode::Product(vec![pair_sum, x3_sum]));
        MassCircuit::new(nodes, root, 3).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::beta_pc;
    use super::*;
    use crate::circuit::fixtures::BETA_TABLE;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn q(ones: &[usize], zeros: &[usize]) -> MarginalQuery {
        MarginalQuery::new(ones.to_vec(), zeros.to_vec()).unwrap()
    }

    #[test]
    fn beta_pc_is_smooth_and_decomposable() {
        let pc = beta_pc::<f64>();
        assert!(pc.check_decomposable().0);
        assert!(pc.check_smooth().0);
    }

    #[test]
    fn decomposability_counterexamples() {
        // X1 * nX1 shares a scope
        let bad = MassCircuit::<f64>::new(
            vec![MassNode::Pos(0), MassNode::Neg(0), MassNode::Product(vec![0, 1])],
            2,
            1,
        )
        .unwrap();
        let (ok, off) = bad.check_decomposable();
        assert!(!ok);
        assert_eq!(off, vec![2]);
        // X1 * X2 is fine
        let good = MassCircuit::<f64>::new(
            vec![MassNode::Pos(0), MassNode::Pos(1), MassNode::Product(vec![0, 1])],
            2,
            2,
        )
        .unwrap();
        assert!(good.check_decomposable().0);
    }

    #[test]
    fn smoothness_counterexamples() {
        // sum of X1 and X2 has differing child scopes
        let bad = MassCircuit::new(
            vec![
                MassNode::Pos(0),
                MassNode::Pos(1),
                MassNode::Sum(vec![(0, 0.5), (1, 0.5)]),
            ],
            2,
            2,
        )
        .unwrap();
        let (ok, off) = bad.check_smooth();
        assert!(!ok);
        assert_eq!(off, vec![2]);
        // sum of X1 and (0.5 X1 + 0.5 nX1) shares the scope {1}
        let good = MassCircuit::new(
            vec![
                MassNode::Pos(0),
                MassNode::Neg(0),
                MassNode::Sum(vec![(0, 0.5), (1, 0.5)]),
                MassNode::Sum(vec![(0, 0.5), (2, 0.5)]),
            ],
            3,
            1,
        )
        .unwrap();
        assert!(good.check_smooth().0);
    }

    #[test]
    fn negative_weights_are_rejected() {
        let err = MassCircuit::new(
            vec![MassNode::Pos(0), MassNode::Sum(vec![(0, -0.5)])],
            1,
            1,
        );
        assert!(err.is_err());
    }

    fn joint(pc: &MassCircuit<f64>) -> Vec<f64> {
        let n = pc.nvars;
        (0..1usize << n)
            .map(|row| {
                let x: Vec<bool> = (0..n).map(|i| (row >> (n - 1 - i)) & 1 == 1).collect();
                pc.likelihood(&x).unwrap()
            })
            .collect()
    }

    #[test]
    fn smoothing_preserves_the_distribution() {
        // sum over children with scopes {1} and {1,2}
        let pc = MassCircuit::new(
            vec![
                MassNode::Pos(0),
                MassNode::Pos(1),
                MassNode::Neg(1),
                MassNode::Sum(vec![(1, 0.3), (2, 0.7)]),
                MassNode::Product(vec![0, 3]),
                MassNode::Neg(0),
                MassNode::Sum(vec![(4, 0.5), (5, 0.5)]),
            ],
            6,
            2,
        )
        .unwrap();
        assert!(!pc.check_smooth().0);
        let smoothed = pc.smooth().unwrap();
        assert!(smoothed.check_smooth().0);
        assert!(smoothed.check_decomposable().0);
        for (a, b) in joint(&smoothed).iter().zip(joint_unchecked(&pc)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        // already-smooth input is a fixpoint up to node identity
        let again = smoothed.smooth().unwrap();
        for (a, b) in joint(&again).iter().zip(joint(&smoothed)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    /// Evaluation-based joint that skips the smoothness gate, for comparing
    /// against non-smooth inputs (full assignments need no smoothness).
    fn joint_unchecked(pc: &MassCircuit<f64>) -> Vec<f64> {
        // a non-smooth circuit's partition function is the sum over
        // assignments, not the all-ones evaluation
        let n = pc.nvars;
        let raw: Vec<f64> = (0..1usize << n)
            .map(|row| {
                let pos: Vec<f64> =
                    (0..n).map(|i| ((row >> (n - 1 - i)) & 1) as f64).collect();
                let neg: Vec<f64> = pos.iter().map(|p| 1.0 - p).collect();
                pc.evaluate_mass(&pos, &neg).unwrap()
            })
            .collect();
        let norm: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / norm).collect()
    }

    #[test]
    fn beta_pc_marginals() {
        let pc = beta_pc::<f64>();
        assert_abs_diff_eq!(pc.marginal(&q(&[1, 2], &[])).unwrap(), 0.64, epsilon = 1e-12);
        assert_abs_diff_eq!(pc.marginal(&q(&[], &[])).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pc.marginal(&q(&[0], &[])).unwrap(), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn beta_pc_converts_to_the_beta_distribution() {
        let g = beta_pc::<f64>().to_pgc().unwrap();
        let table = g.expand_joint(12).unwrap();
        for (got, want) in table.iter().zip(BETA_TABLE) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_leaf_pair_converts_directly() {
        // 0.3 X1 + 0.7 nX1 becomes 0.3 z1 + 0.7
        let pc = MassCircuit::new(
            vec![
                MassNode::Pos(0),
                MassNode::Neg(0),
                MassNode::Sum(vec![(0, 0.3), (1, 0.7)]),
            ],
            2,
            1,
        )
        .unwrap();
        let g = pc.to_pgc().unwrap();
        assert_abs_diff_eq!(g.evaluate_numeric(&[0.0]).unwrap(), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(g.evaluate_numeric(&[1.0]).unwrap(), 1.0, epsilon = 1e-12);
    }

    /// Random smooth+decomposable mass circuit over a variable range.
    fn random_pc(vars: &[usize], nvars: usize, rng: &mut StdRng, depth: usize) -> Vec<MassNode<f64>> {
        // returns a node list whose last node covers `vars`
        fn build(
            nodes: &mut Vec<MassNode<f64>>,
            vars: &[usize],
            rng: &mut StdRng,
            depth: usize,
        ) -> usize {
            if vars.len() == 1 || depth == 0 {
                // smooth leaf region: product of per-variable Bernoulli sums
                let mut factors = Vec::new();
                for &v in vars {
                    let p = rng.gen_range(0.05..0.95);
                    nodes.push(MassNode::Pos(v));
                    nodes.push(MassNode::Neg(v));
                    nodes.push(MassNode::Sum(vec![
                        (nodes.len() - 2, p),
                        (nodes.len() - 1, 1.0 - p),
                    ]));
                    factors.push(nodes.len() - 1);
                }
                if factors.len() == 1 {
                    return factors[0];
                }
                nodes.push(MassNode::Product(factors));
                return nodes.len() - 1;
            }
            if rng.gen_bool(0.5) {
                // mixture over the same scope
                let a = build(nodes, vars, rng, depth - 1);
                let b = build(nodes, vars, rng, depth - 1);
                let w = rng.gen_range(0.1..0.9);
                nodes.push(MassNode::Sum(vec![(a, w), (b, 1.0 - w)]));
            } else {
                let split = rng.gen_range(1..vars.len());
                let a = build(nodes, &vars[..split], rng, depth - 1);
                let b = build(nodes, &vars[split..], rng, depth - 1);
                nodes.push(MassNode::Product(vec![a, b]));
            }
            nodes.len() - 1
        }
        let mut nodes = Vec::new();
        build(&mut nodes, vars, rng, depth);
        let _ = nvars;
        nodes
    }

    #[test]
    fn random_pcs_convert_losslessly() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..12 {
            let n = rng.gen_range(2..=6);
            let vars: Vec<usize> = (0..n).collect();
            let nodes = random_pc(&vars, n, &mut rng, 3);
            let root = nodes.len() - 1;
            let pc = MassCircuit::new(nodes, root, n).unwrap();
            assert!(pc.check_smooth().0 && pc.check_decomposable().0);
            let g = pc.to_pgc().unwrap();
            // conversion keeps the edge count up to the normalization node
            assert!(g.size() <= pc.edge_count() + 1);
            let table = g.expand_joint(12).unwrap();
            // the mass polynomial's coefficients are the distribution
            let mut total = 0.0;
            for (row, &p) in table.iter().enumerate() {
                let x: Vec<bool> = (0..n).map(|i| (row >> (n - 1 - i)) & 1 == 1).collect();
                assert_abs_diff_eq!(p, pc.likelihood(&x).unwrap(), epsilon = 1e-9);
                total += p;
            }
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
            // marginals agree across representations for every query pattern
            for pattern in 0..3usize.pow(n as u32) {
                let mut ones = Vec::new();
                let mut zeros = Vec::new();
                let mut rest = pattern;
                for i in 0..n {
                    match rest % 3 {
                        1 => ones.push(i),
                        2 => zeros.push(i),
                        _ => {}
                    }
                    rest /= 3;
                }
                let mq = q(&ones, &zeros);
                assert_abs_diff_eq!(
                    pc.marginal(&mq).unwrap(),
                    g.marginal(&mq).unwrap(),
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn non_decomposable_conversion_is_refused() {
        let bad = MassCircuit::<f64>::new(
            vec![MassNode::Pos(0), MassNode::Neg(0), MassNode::Product(vec![0, 1])],
            2,
            1,
        )
        .unwrap();
        assert!(bad.to_pgc().is_err());
        assert!(bad.smooth().is_err());
    }

    #[test]
    fn text_round_trip() {
        let pc = beta_pc::<f64>();
        let text = to_text(&pc).unwrap();
        assert!(text.starts_with("pmc 3 "));
        let back: MassCircuit<f64> = from_text(&text).unwrap();
        for (a, b) in joint(&back).iter().zip(joint(&pc)) {
            assert_abs_diff_eq!(*a, b, epsilon = 0.0);
        }
    }
}
