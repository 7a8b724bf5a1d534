//! Compositional operators on generating circuits: mixtures, products over
//! disjoint scopes, hierarchical substitution of leaf circuits into an outer
//! circuit, and the determinantal-PGC construction built from them.
//!
//! A scoped circuit ties a circuit's local variables to global indices. Out
//! of scope, the represented distribution forces variables to zero, so its
//! generating polynomial over any enclosing scope is the same polynomial,
//! just ignoring the extra variables.

use std::sync::Arc;

use crate::circuit::{Circuit, ClosureCircuit, MarginalQuery, Node};
use crate::detring::{lensemble_gp, DetBackend, Kernel, KernelKind};
use crate::error::{Error, Result};
use crate::linalg::{matmul, Matrix};
use crate::num::Real;
use crate::polyring::GenPoly;

#[derive(Debug, Clone)]
pub struct ScopedCircuit<R: Real> {
    pub circuit: Circuit<R>,
    /// Global variable index of each local variable, in local order.
    pub scope: Vec<usize>,
}

impl<R: Real> ScopedCircuit<R> {
    pub fn new(circuit: Circuit<R>, scope: Vec<usize>) -> Result<Self> {
        if circuit.nvars() != scope.len() {
            return Err(Error::contract(format!(
                "circuit has {} variables but the scope lists {}",
                circuit.nvars(),
                scope.len()
            )));
        }
        let mut seen = scope.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract("scope indices must be distinct"));
        }
        Ok(ScopedCircuit { circuit, scope })
    }

    /// Marginal with globally indexed query variables. A one-set variable
    /// outside the scope has probability zero; zero-set variables outside
    /// the scope hold vacuously.
    pub fn marginal(&self, q: &MarginalQuery) -> Result<R> {
        let local = |g: usize| self.scope.iter().position(|&s| s == g);
        let mut ones = Vec::new();
        for &g in q.ones() {
            match local(g) {
                Some(i) => ones.push(i),
                None => return Ok(R::zero()),
            }
        }
        let zeros = q.zeros().iter().filter_map(|&g| local(g)).collect();
        self.circuit.marginal(&MarginalQuery::new(ones, zeros)?)
    }

    /// Likelihood of a globally indexed assignment; any variable set outside
    /// the scope gives zero.
    pub fn likelihood_global(&self, x: &[bool]) -> Result<R> {
        for (g, &b) in x.iter().enumerate() {
            if b && !self.scope.contains(&g) {
                return Ok(R::zero());
            }
        }
        let local: Vec<bool> = self
            .scope
            .iter()
            .map(|&g| g < x.len() && x[g])
            .collect();
        self.circuit.likelihood(&local)
    }
}

/// Disjoint, covering, nonempty variable groups over {1..n}.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    pub groups: Vec<Vec<usize>>,
}

impl GroupPartition {
    pub fn new(n: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n];
        for (gi, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::contract(format!("group {gi} is empty")));
            }
            for &v in group {
                if v >= n {
                    return Err(Error::contract(format!(
                        "group {gi}: variable {} out of range 1..{n}",
                        v + 1
                    )));
                }
                if seen[v] {
                    return Err(Error::contract(format!(
                        "variable {} appears in two groups",
                        v + 1
                    )));
                }
                seen[v] = true;
            }
        }
        if let Some(v) = seen.iter().position(|&s| !s) {
            return Err(Error::contract(format!("variable {} is in no group", v + 1)));
        }
        Ok(GroupPartition { groups })
    }

    pub fn n(&self) -> usize {
        self.groups.iter().map(|g| g.len()).sum()
    }
}

/// Sorted union of two scopes.
fn union_scope(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
    u.sort_unstable();
    u.dedup();
    u
}

/// Positions of `scope`'s globals inside the (sorted) union scope.
fn positions_in(union: &[usize], scope: &[usize]) -> Vec<usize> {
    scope
        .iter()
        .map(|g| union.binary_search(g).expect("scope not in union"))
        .collect()
}

/// Evaluate a member circuit over the union leaf vector, restricted to its
/// own scope; the result is recapped to the shared cap so that circuits over
/// smaller (or empty) scopes still combine.
fn eval_restricted<R: Real>(
    circuit: &Circuit<R>,
    leaves: &[GenPoly<R>],
    pos: &[usize],
    cap: usize,
) -> Result<GenPoly<R>> {
    let sub: Vec<GenPoly<R>> = pos.iter().map(|&p| leaves[p].clone()).collect();
    Ok(circuit.evaluate_ring(&sub)?.with_cap(cap))
}

/// Copy a DAG's nodes into a builder vector with variable leaves remapped to
/// union-local positions; returns the copied root id.
fn append_remapped<R: Real>(
    out: &mut Vec<Node<R>>,
    dag: &crate::circuit::Dag<R>,
    pos: &[usize],
) -> usize {
    let offset = out.len();
    for node in &dag.nodes {
        out.push(match node {
            Node::Var(i) => Node::Var(pos[*i]),
            Node::Const(c) => Node::Const(*c),
            Node::Sum(ch) => Node::Sum(ch.iter().map(|&(c, w)| (c + offset, w)).collect()),
            Node::Product(ch) => Node::Product(ch.iter().map(|&c| c + offset).collect()),
        });
    }
    offset + dag.root
}

/// Mixture alpha*f + (1-alpha)*g over the scope union. A variable missing
/// from one member's scope is forced to zero under that member.
pub fn mix<R: Real>(
    f: &ScopedCircuit<R>,
    g: &ScopedCircuit<R>,
    alpha: R,
) -> Result<ScopedCircuit<R>> {
    if !(alpha >= R::zero() && alpha <= R::one()) {
        return Err(Error::contract(format!("mixture weight {alpha} outside [0, 1]")));
    }
    let union = union_scope(&f.scope, &g.scope);
    let fpos = positions_in(&union, &f.scope);
    let gpos = positions_in(&union, &g.scope);
    let circuit = match (&f.circuit, &g.circuit) {
        (Circuit::Dag(fd), Circuit::Dag(gd)) => {
            let mut nodes = Vec::with_capacity(fd.nodes.len() + gd.nodes.len() + 1);
            let froot = append_remapped(&mut nodes, fd, &fpos);
            let groot = append_remapped(&mut nodes, gd, &gpos);
            nodes.push(Node::Sum(vec![(froot, alpha), (groot, R::one() - alpha)]));
            let root = nodes.len() - 1;
            Circuit::Dag(crate::circuit::Dag { nodes, root, nvars: union.len() })
        }
        _ => {
            let fc = f.circuit.clone();
            let gc = g.circuit.clone();
            let size = f.circuit.size() + g.circuit.size() + 2;
            let nvars = union.len();
            Circuit::Closure(ClosureCircuit {
                nvars,
                size,
                eval: Arc::new(move |leaves| {
                    let cap = leaves.first().map(|p| p.cap()).unwrap_or(0);
                    let a = eval_restricted(&fc, leaves, &fpos, cap)?;
                    let b = eval_restricted(&gc, leaves, &gpos, cap)?;
                    a.scale(alpha).add(&b.scale(R::one() - alpha))
                }),
            })
        }
    };
    ScopedCircuit::new(circuit, union)
}

/// Product of two generating circuits over disjoint scopes; the joint
/// distribution factorizes.
pub fn product<R: Real>(f: &ScopedCircuit<R>, g: &ScopedCircuit<R>) -> Result<ScopedCircuit<R>> {
    if f.scope.iter().any(|v| g.scope.contains(v)) {
        return Err(Error::refused("product requires disjoint scopes"));
    }
    let union = union_scope(&f.scope, &g.scope);
    let fpos = positions_in(&union, &f.scope);
    let gpos = positions_in(&union, &g.scope);
    let circuit = match (&f.circuit, &g.circuit) {
        (Circuit::Dag(fd), Circuit::Dag(gd)) => {
            let mut nodes = Vec::with_capacity(fd.nodes.len() + gd.nodes.len() + 1);
            let froot = append_remapped(&mut nodes, fd, &fpos);
            let groot = append_remapped(&mut nodes, gd, &gpos);
            nodes.push(Node::Product(vec![froot, groot]));
            let root = nodes.len() - 1;
            Circuit::Dag(crate::circuit::Dag { nodes, root, nvars: union.len() })
        }
        _ => {
            let fc = f.circuit.clone();
            let gc = g.circuit.clone();
            let size = f.circuit.size() + g.circuit.size() + 1;
            let nvars = union.len();
            Circuit::Closure(ClosureCircuit {
                nvars,
                size,
                eval: Arc::new(move |leaves| {
                    let cap = leaves.first().map(|p| p.cap()).unwrap_or(0);
                    let a = eval_restricted(&fc, leaves, &fpos, cap)?;
                    let b = eval_restricted(&gc, leaves, &gpos, cap)?;
                    a.mul(&b, crate::polyring::MulBackend::Auto)
                }),
            })
        }
    };
    ScopedCircuit::new(circuit, union)
}

/// Hierarchical composition: substitute the generating circuit `leaves[i]`
/// for slot variable i of the outer circuit. Leaf scopes must be pairwise
/// disjoint; the result's scope is their union.
pub fn hier_compose<R: Real>(
    outer: &Circuit<R>,
    leaves: &[ScopedCircuit<R>],
) -> Result<ScopedCircuit<R>> {
    if outer.nvars() != leaves.len() {
        return Err(Error::contract(format!(
            "outer circuit has {} slots but {} leaves were given",
            outer.nvars(),
            leaves.len()
        )));
    }
    let mut union: Vec<usize> = leaves.iter().flat_map(|l| l.scope.iter().copied()).collect();
    let total = union.len();
    union.sort_unstable();
    union.dedup();
    if union.len() != total {
        return Err(Error::refused("leaf scopes must be pairwise disjoint"));
    }
    let pos: Vec<Vec<usize>> = leaves.iter().map(|l| positions_in(&union, &l.scope)).collect();
    let circuit = if let (Circuit::Dag(od), true) =
        (outer, leaves.iter().all(|l| l.circuit.as_dag().is_some()))
    {
        // pure-DAG path: inline each leaf DAG and redirect slot leaves
        let mut nodes = Vec::new();
        let mut slot_root = Vec::with_capacity(leaves.len());
        for (l, p) in leaves.iter().zip(&pos) {
            slot_root.push(append_remapped(&mut nodes, l.circuit.as_dag().unwrap(), p));
        }
        let offset = nodes.len();
        for node in &od.nodes {
            nodes.push(match node {
                Node::Var(i) => Node::Sum(vec![(slot_root[*i], R::one())]),
                Node::Const(c) => Node::Const(*c),
                Node::Sum(ch) => Node::Sum(ch.iter().map(|&(c, w)| (c + offset, w)).collect()),
                Node::Product(ch) => Node::Product(ch.iter().map(|&c| c + offset).collect()),
            });
        }
        let root = offset + od.root;
        Circuit::Dag(crate::circuit::Dag { nodes, root, nvars: union.len() })
    } else {
        let outer = outer.clone();
        let inner: Vec<Circuit<R>> = leaves.iter().map(|l| l.circuit.clone()).collect();
        let size = outer.size() + leaves.iter().map(|l| l.circuit.size()).sum::<usize>();
        let nvars = union.len();
        let pos = pos.clone();
        Circuit::Closure(ClosureCircuit {
            nvars,
            size,
            eval: Arc::new(move |lv| {
                let cap = lv.first().map(|p| p.cap()).unwrap_or(0);
                let slots: Vec<GenPoly<R>> = inner
                    .iter()
                    .zip(&pos)
                    .map(|(c, p)| eval_restricted(c, lv, p, cap))
                    .collect::<Result<_>>()?;
                outer.evaluate_ring(&slots)
            }),
        })
    };
    ScopedCircuit::new(circuit, union)
}

/// Determinantal PGC: the hierarchical composition of the L-ensemble for
/// L = B * B^T (one slot per group) with a generating circuit per group.
/// Taking the kernel in factored form keeps it positive semidefinite by
/// construction.
pub fn det_pgc<R: Real>(
    l_factor: &Matrix<R>,
    partition: &GroupPartition,
    leaf_gps: &[Circuit<R>],
    backend: DetBackend,
) -> Result<ScopedCircuit<R>> {
    let l = matmul(l_factor, &l_factor.transpose());
    det_pgc_from_psd(&l, partition, leaf_gps, backend)
}

/// As `det_pgc` but with the kernel given directly; the caller is
/// responsible for it being positive semidefinite (`validate_kernel` checks).
pub fn det_pgc_from_psd<R: Real>(
    l: &Matrix<R>,
    partition: &GroupPartition,
    leaf_gps: &[Circuit<R>],
    backend: DetBackend,
) -> Result<ScopedCircuit<R>> {
    let m = partition.groups.len();
    if l.rows() != m || leaf_gps.len() != m {
        return Err(Error::contract(format!(
            "kernel is {}x{} and {} leaves were given for {} groups",
            l.rows(),
            l.cols(),
            leaf_gps.len(),
            m
        )));
    }
    for (gi, (group, leaf)) in partition.groups.iter().zip(leaf_gps).enumerate() {
        if leaf.nvars() != group.len() {
            return Err(Error::contract(format!(
                "leaf {gi} has {} variables for a group of {}",
                leaf.nvars(),
                group.len()
            )));
        }
    }
    let kernel = Kernel::new(l.clone(), KernelKind::Lensemble)?;
    let outer = lensemble_gp(&kernel, backend)?;
    let leaves: Vec<ScopedCircuit<R>> = partition
        .groups
        .iter()
        .zip(leaf_gps)
        .map(|(group, leaf)| ScopedCircuit::new(leaf.clone(), group.clone()))
        .collect::<Result<_>>()?;
    hier_compose(&outer, &leaves)
}
