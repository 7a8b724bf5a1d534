//! Determinants over the polynomial ring and the kernel-based generating
//! polynomials built from them: L-ensembles, marginal-kernel DPPs,
//! nonsymmetric kernels, and spanning-tree distributions.
//!
//! Determinant-based circuits are closure-backed: the determinant is never
//! unrolled into sum/product nodes, the closure just runs a division-free
//! determinant over whatever ring elements the leaves evaluate to.

use std::sync::Arc;

use num_complex::Complex;

use crate::circuit::{Circuit, ClosureCircuit};
use crate::error::{Error, Result};
use crate::linalg::{invert, lu_det, matmul, symmetric_eigenvalues, Matrix};
use crate::num::Real;
use crate::polyring::{GenPoly, MulBackend};

/// Determinant strategy over the polynomial ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DetBackend {
    /// Bird's division-free iteration of matrix products.
    #[default]
    Bird,
    /// Numeric determinants at roots of unity, coefficients recovered by an
    /// inverse DFT.
    EvalInterp,
}

impl std::str::FromStr for DetBackend {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bird" => Ok(DetBackend::Bird),
            "evalinterp" => Ok(DetBackend::EvalInterp),
            other => Err(format!("unknown determinant backend `{other}`")),
        }
    }
}

/// Determinant of a numeric matrix (LU with partial pivoting).
pub fn det_numeric<R: Real>(m: &Matrix<R>) -> R {
    assert!(m.is_square(), "determinant of a non-square matrix");
    lu_det(m)
}

/// Determinant of a matrix of ring elements, truncated at the shared cap.
///
/// In debug builds small instances are cross-checked against the other
/// backend; a disagreement is an internal consistency error.
pub fn det_ring<R: Real>(m: &Matrix<GenPoly<R>>, backend: DetBackend) -> Result<GenPoly<R>> {
    let primary = det_ring_one(m, backend)?;
    if cfg!(debug_assertions) && m.rows() <= 4 && m.rows() > 0 {
        let other = match backend {
            DetBackend::Bird => DetBackend::EvalInterp,
            DetBackend::EvalInterp => DetBackend::Bird,
        };
        let check = det_ring_one(m, other)?;
        let cap = primary.cap();
        for k in 0..=cap {
            let diff = (primary.coef(k) - check.coef(k)).abs();
            if diff > R::lit(1e-6) {
                return Err(Error::numerical(format!(
                    "determinant backends disagree at coefficient {k} by {diff:e}"
                )));
            }
        }
    }
    Ok(primary)
}

fn det_ring_one<R: Real>(m: &Matrix<GenPoly<R>>, backend: DetBackend) -> Result<GenPoly<R>> {
    if !m.is_square() {
        return Err(Error::contract("determinant of a non-square matrix"));
    }
    let n = m.rows();
    let cap = if n == 0 { 0 } else { m[(0, 0)].cap() };
    for i in 0..n {
        for j in 0..n {
            if m[(i, j)].cap() != cap {
                return Err(Error::contract("determinant entries must share a cap"));
            }
        }
    }
    if n == 0 {
        return Ok(GenPoly::one(cap));
    }
    match backend {
        DetBackend::Bird => bird_det(m, cap),
        DetBackend::EvalInterp => evalinterp_det(m, cap),
    }
}

/// Bird's division-free determinant: X_1 = A, X_{k+1} = mu(X_k) A, and the
/// (0,0) entry of X_n is (-1)^(n-1) det(A). mu keeps the strict upper
/// triangle, zeroes the lower one, and puts minus the trailing diagonal sum
/// on the diagonal.
fn bird_det<R: Real>(m: &Matrix<GenPoly<R>>, cap: usize) -> Result<GenPoly<R>> {
    let n = m.rows();
    if n == 1 {
        return Ok(m[(0, 0)].clone());
    }
    let mut x = m.clone();
    for _ in 0..n - 1 {
        let mu = mu_of(&x, cap)?;
        x = poly_matmul(&mu, m, cap)?;
    }
    let head = x[(0, 0)].clone();
    Ok(if n % 2 == 0 { head.scale(-R::one()) } else { head })
}

fn mu_of<R: Real>(x: &Matrix<GenPoly<R>>, cap: usize) -> Result<Matrix<GenPoly<R>>> {
    let n = x.rows();
    // running suffix sums of the diagonal
    let mut suffix = vec![GenPoly::zero(cap); n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1].add(&x[(i, i)])?;
    }
    let mut out = Matrix::from_fn(n, n, |_, _| GenPoly::zero(cap));
    for i in 0..n {
        for j in 0..n {
            if j > i {
                out[(i, j)] = x[(i, j)].clone();
            } else if j == i {
                out[(i, j)] = suffix[i + 1].scale(-R::one());
            }
        }
    }
    Ok(out)
}

fn poly_matmul<R: Real>(
    a: &Matrix<GenPoly<R>>,
    b: &Matrix<GenPoly<R>>,
    cap: usize,
) -> Result<Matrix<GenPoly<R>>> {
    let n = a.rows();
    let mut out = Matrix::from_fn(n, n, |_, _| GenPoly::zero(cap));
    for i in 0..n {
        for j in 0..n {
            let mut acc = GenPoly::zero(cap);
            for k in 0..n {
                if a[(i, k)].is_zero() || b[(k, j)].is_zero() {
                    continue;
                }
                acc = acc.add(&a[(i, k)].mul(&b[(k, j)], MulBackend::Auto)?)?;
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Evaluate the determinant at D+1 complex roots of unity (D = row-wise
/// degree bound) and recover coefficients by an inverse DFT; points are
/// processed in a fixed order so results are deterministic.
fn evalinterp_det<R: Real>(m: &Matrix<GenPoly<R>>, cap: usize) -> Result<GenPoly<R>> {
    let n = m.rows();
    let mut degree_bound = 0usize;
    for i in 0..n {
        let row_deg = (0..n).map(|j| m[(i, j)].degree()).max().unwrap();
        if row_deg < 0 {
            return Ok(GenPoly::zero(cap)); // a zero row
        }
        degree_bound += row_deg as usize;
    }
    let points = degree_bound + 1;
    let tau = R::lit(2.0) * R::PI();
    let mut dets = Vec::with_capacity(points);
    for j in 0..points {
        let angle = tau * R::from_usize(j).unwrap() / R::from_usize(points).unwrap();
        let omega = Complex::new(angle.cos(), angle.sin());
        let mj = Matrix::from_fn(n, n, |r, c| m[(r, c)].eval_complex(omega));
        dets.push(crate::linalg::lu_det_complex(&mj));
    }
    let mut coeffs = Vec::with_capacity((degree_bound.min(cap)) + 1);
    let norm = R::from_usize(points).unwrap();
    for k in 0..=degree_bound.min(cap) {
        let mut acc = Complex::new(R::zero(), R::zero());
        for (j, d) in dets.iter().enumerate() {
            let angle = -tau * R::from_usize(j * k % points).unwrap()
                / R::from_usize(points).unwrap();
            acc = acc + *d * Complex::new(angle.cos(), angle.sin());
        }
        coeffs.push(acc.re / norm);
    }
    Ok(GenPoly::from_coeffs(coeffs, cap))
}

// --------------------------------------------------------------------------
// Kernels

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// L-ensemble kernel: Pr(x) = det(L_x) / det(L + I).
    Lensemble,
    /// Marginal kernel: Pr(all of A on) = det(K_A).
    MarginalK,
    /// L-ensemble kernel without the symmetry requirement.
    NonsymmetricL,
}

impl KernelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelKind::Lensemble => "lensemble",
            KernelKind::MarginalK => "marginal",
            KernelKind::NonsymmetricL => "nonsymmetric",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lensemble" => Ok(KernelKind::Lensemble),
            "marginal" => Ok(KernelKind::MarginalK),
            "nonsymmetric" => Ok(KernelKind::NonsymmetricL),
            other => Err(format!("unknown kernel kind `{other}`")),
        }
    }
}

/// A DPP kernel matrix tagged with how it is to be interpreted.
#[derive(Debug, Clone)]
pub struct Kernel<R: Real> {
    pub matrix: Matrix<R>,
    pub kind: KernelKind,
}

/// Relative floor on the most negative eigenvalue still accepted as PSD;
/// kernels assembled as B B^T in floating point land slightly below zero.
const PSD_REL_TOL: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct KernelReport {
    pub valid: bool,
    pub issues: Vec<String>,
}

impl<R: Real> Kernel<R> {
    pub fn new(matrix: Matrix<R>, kind: KernelKind) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::contract("kernel matrix must be square"));
        }
        Ok(Kernel { matrix, kind })
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }
}

/// Symmetric kinds get eigenvalue checks; nonsymmetric kernels are checked
/// behaviorally by enumerating the induced joint at small n.
pub fn validate_kernel<R: Real>(kernel: &Kernel<R>, limit: usize) -> KernelReport {
    let mut issues = Vec::new();
    let m = &kernel.matrix;
    let n = kernel.n();
    match kernel.kind {
        KernelKind::Lensemble | KernelKind::MarginalK => {
            let mut max_asym = R::zero();
            for i in 0..n {
                for j in i + 1..n {
                    max_asym = max_asym.max((m[(i, j)] - m[(j, i)]).abs());
                }
            }
            if max_asym > R::lit(SYMMETRY_TOL) {
                issues.push(format!("not symmetric: max asymmetry {max_asym:e}"));
            }
            let eig = symmetric_eigenvalues(m);
            if let (Some(&lo), Some(&hi)) = (eig.first(), eig.last()) {
                let floor = -R::lit(PSD_REL_TOL) * hi.max(R::one());
                if lo < floor {
                    issues.push(format!("not positive semidefinite: eigenvalue {lo:e}"));
                }
                if kernel.kind == KernelKind::MarginalK && hi > R::one() + R::lit(PSD_REL_TOL) {
                    issues.push(format!("marginal kernel eigenvalue {hi:e} exceeds 1"));
                }
            }
        }
        KernelKind::NonsymmetricL => match lensemble_gp(kernel, DetBackend::default()) {
            Ok(circuit) if n <= limit => match circuit.expand_joint(limit) {
                Ok(table) => {
                    let tol = R::lit(crate::circuit::SEMANTIC_TOL);
                    for (row, &p) in table.iter().enumerate() {
                        if p < -tol {
                            issues.push(format!("negative probability {p:e} at assignment {row}"));
                            break;
                        }
                    }
                }
                Err(e) => issues.push(format!("enumeration failed: {e}")),
            },
            Ok(_) => issues.push(format!("behavioral check skipped: n {n} exceeds limit {limit}")),
            Err(e) => issues.push(format!("kernel is degenerate: {e}")),
        },
    }
    KernelReport { valid: issues.is_empty(), issues }
}

/// Closure-backed circuit computing det(L diag(z) + I) / det(L + I).
pub fn lensemble_gp<R: Real>(kernel: &Kernel<R>, backend: DetBackend) -> Result<Circuit<R>> {
    if kernel.kind == KernelKind::MarginalK {
        return Err(Error::contract(
            "lensemble_gp expects an L-ensemble kernel, not a marginal kernel",
        ));
    }
    let n = kernel.n();
    let l_plus_i = Matrix::from_fn(n, n, |i, j| {
        kernel.matrix[(i, j)] + if i == j { R::one() } else { R::zero() }
    });
    let norm = det_numeric(&l_plus_i);
    if !(norm > R::lit(1e-12)) {
        return Err(Error::refused(format!("degenerate kernel: det(L + I) = {norm:e}")));
    }
    let l = kernel.matrix.clone();
    let eval = move |leaves: &[GenPoly<R>]| -> Result<GenPoly<R>> {
        let cap = leaves.first().map(|p| p.cap()).unwrap_or(0);
        let m = Matrix::from_fn(n, n, |i, j| {
            let mut entry = leaves[j].scale(l[(i, j)]);
            if i == j {
                entry = entry.add(&GenPoly::one(cap)).expect("same cap");
            }
            entry
        });
        Ok(det_ring(&m, backend)?.scale(R::one() / norm))
    };
    Ok(Circuit::Closure(ClosureCircuit {
        nvars: n,
        size: n.pow(4).max(1),
        eval: Arc::new(eval),
    }))
}

/// Closure-backed circuit computing det(I - K + K diag(z)).
pub fn dpp_gp<R: Real>(kernel: &Kernel<R>, backend: DetBackend) -> Result<Circuit<R>> {
    if kernel.kind != KernelKind::MarginalK {
        return Err(Error::contract("dpp_gp expects a marginal kernel"));
    }
    let report = validate_kernel(kernel, 0);
    if !report.valid {
        return Err(Error::refused(format!(
            "invalid marginal kernel: {}",
            report.issues.join("; ")
        )));
    }
    let n = kernel.n();
    let k = kernel.matrix.clone();
    let eval = move |leaves: &[GenPoly<R>]| -> Result<GenPoly<R>> {
        let cap = leaves.first().map(|p| p.cap()).unwrap_or(0);
        let m = Matrix::from_fn(n, n, |i, j| {
            // K_ij (z_j - 1) + delta_ij
            let mut entry = leaves[j]
                .add(&GenPoly::constant(-R::one(), cap))
                .expect("same cap")
                .scale(k[(i, j)]);
            if i == j {
                entry = entry.add(&GenPoly::one(cap)).expect("same cap");
            }
            entry
        });
        det_ring(&m, backend)
    };
    Ok(Circuit::Closure(ClosureCircuit {
        nvars: n,
        size: n.pow(4).max(1),
        eval: Arc::new(eval),
    }))
}

/// Pr(all of A on) as the determinant of the A-indexed principal submatrix.
pub fn dpp_marginal_direct<R: Real>(kernel: &Kernel<R>, subset: &[usize]) -> Result<R> {
    if kernel.kind != KernelKind::MarginalK {
        return Err(Error::contract("dpp_marginal_direct expects a marginal kernel"));
    }
    for &i in subset {
        if i >= kernel.n() {
            return Err(Error::contract(format!("index {} out of range", i + 1)));
        }
    }
    Ok(det_numeric(&kernel.matrix.select(subset, subset)))
}

/// Convert an L-ensemble kernel to its marginal kernel K = L (L + I)^-1.
pub fn l_to_marginal_kernel<R: Real>(kernel: &Kernel<R>) -> Result<Kernel<R>> {
    if kernel.kind != KernelKind::Lensemble {
        return Err(Error::contract("conversion expects an L-ensemble kernel"));
    }
    let n = kernel.n();
    let l_plus_i = Matrix::from_fn(n, n, |i, j| {
        kernel.matrix[(i, j)] + if i == j { R::one() } else { R::zero() }
    });
    let inv = invert(&l_plus_i)
        .ok_or_else(|| Error::refused("degenerate kernel: L + I is singular"))?;
    let k = matmul(&kernel.matrix, &inv);
    // L symmetric makes K symmetric; clean up floating-point drift
    let sym = Matrix::from_fn(n, n, |i, j| (k[(i, j)] + k[(j, i)]) / R::lit(2.0));
    Kernel::new(sym, KernelKind::MarginalK)
}

// --------------------------------------------------------------------------
// Spanning-tree distributions

/// Undirected graph with nonnegative edge weights; variables of the
/// generating polynomial are the edges in their stored order.
#[derive(Debug, Clone)]
pub struct WeightedGraph<R: Real> {
    pub n: usize,
    pub edges: Vec<(usize, usize, R)>,
}

impl<R: Real> WeightedGraph<R> {
    pub fn new(n: usize, edges: Vec<(usize, usize, R)>) -> Result<Self> {
        for &(u, v, w) in &edges {
            if u >= n || v >= n {
                return Err(Error::contract(format!("edge ({u},{v}) out of range")));
            }
            if u == v {
                return Err(Error::contract(format!("self-loop at vertex {u}")));
            }
            if w < R::zero() {
                return Err(Error::contract("edge weights must be nonnegative"));
            }
        }
        Ok(WeightedGraph { n, edges })
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            if parent[x] != x {
                let root = find(parent, parent[x]);
                parent[x] = root;
            }
            parent[x]
        }
        for &(u, v, _) in &self.edges {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            parent[ru] = rv;
        }
        let root = find(&mut parent, 0);
        (1..self.n).all(|v| find(&mut parent, v) == root)
    }
}

/// Unnormalized spanning-tree generating polynomial: the determinant of the
/// weighted Laplacian with one vertex's row and column removed. The caller
/// normalizes by the all-ones evaluation (the weighted spanning-tree count).
pub fn spanning_tree_gp<R: Real>(
    graph: &WeightedGraph<R>,
    removed_vertex: usize,
    backend: DetBackend,
) -> Result<Circuit<R>> {
    if removed_vertex >= graph.n {
        return Err(Error::contract(format!("vertex {removed_vertex} out of range")));
    }
    if !graph.is_connected() {
        return Err(Error::refused("graph is disconnected: no spanning trees"));
    }
    let kept: Vec<usize> = (0..graph.n).filter(|&v| v != removed_vertex).collect();
    let pos: Vec<Option<usize>> = (0..graph.n)
        .map(|v| kept.iter().position(|&k| k == v))
        .collect();
    let edges = graph.edges.clone();
    let m = kept.len();
    let nvars = edges.len();
    let eval = move |leaves: &[GenPoly<R>]| -> Result<GenPoly<R>> {
        let cap = leaves.first().map(|p| p.cap()).unwrap_or(0);
        let mut lap = Matrix::from_fn(m, m, |_, _| GenPoly::zero(cap));
        for (e, &(u, v, w)) in edges.iter().enumerate() {
            let term = leaves[e].scale(w);
            if let Some(iu) = pos[u] {
                lap[(iu, iu)] = lap[(iu, iu)].add(&term)?;
            }
            if let Some(iv) = pos[v] {
                lap[(iv, iv)] = lap[(iv, iv)].add(&term)?;
            }
            if let (Some(iu), Some(iv)) = (pos[u], pos[v]) {
                let neg = term.scale(-R::one());
                lap[(iu, iv)] = lap[(iu, iv)].add(&neg)?;
                lap[(iv, iu)] = lap[(iv, iu)].add(&neg)?;
            }
        }
        det_ring(&lap, backend)
    };
    Ok(Circuit::Closure(ClosureCircuit {
        nvars,
        size: m.pow(4).max(1),
        eval: Arc::new(eval),
    }))
}

// --------------------------------------------------------------------------
// File formats

/// `kernel <kind> <n>` header, then n rows of n whitespace-separated reals.
pub fn kernel_to_text<R: Real>(kernel: &Kernel<R>) -> String {
    use std::fmt::Write;
    let n = kernel.n();
    let mut out = format!("kernel {} {}\n", kernel.kind.as_str(), n);
    for i in 0..n {
        for j in 0..n {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{:.16e}", kernel.matrix[(i, j)]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn kernel_from_text<R: Real>(text: &str) -> Result<Kernel<R>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "kernel" {
        return Err(Error::Parse { line: 1, msg: "expected header `kernel <kind> <n>`".into() });
    }
    let kind: KernelKind = parts[1]
        .parse()
        .map_err(|msg| Error::Parse { line: 1, msg })?;
    let n: usize = crate::circuit::parse_field(parts[2], 1)?;
    let mut data = Vec::with_capacity(n * n);
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        for tok in line.split_whitespace() {
            data.push(R::lit(crate::circuit::parse_field::<f64>(tok, lineno)?));
        }
    }
    if data.len() != n * n {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected {} entries, found {}", n * n, data.len()),
        });
    }
    Kernel::new(Matrix::from_vec(n, n, data), kind)
}

/// `graph <n> <m>` header, then m lines `i j w` with 1-based vertices.
pub fn graph_to_text<R: Real>(graph: &WeightedGraph<R>) -> String {
    use std::fmt::Write;
    let mut out = format!("graph {} {}\n", graph.n, graph.edges.len());
    for &(u, v, w) in &graph.edges {
        writeln!(out, "{} {} {:.16e}", u + 1, v + 1, w).unwrap();
    }
    out
}

pub fn graph_from_text<R: Real>(text: &str) -> Result<WeightedGraph<R>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "graph" {
        return Err(Error::Parse { line: 1, msg: "expected header `graph <n> <m>`".into() });
    }
    let n: usize = crate::circuit::parse_field(parts[1], 1)?;
    let m: usize = crate::circuit::parse_field(parts[2], 1)?;
    let mut edges = Vec::with_capacity(m);
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 3 {
            return Err(Error::Parse { line: lineno, msg: "expected `i j w`".into() });
        }
        let u: usize = crate::circuit::parse_field(toks[0], lineno)?;
        let v: usize = crate::circuit::parse_field(toks[1], lineno)?;
        let w: f64 = crate::circuit::parse_field(toks[2], lineno)?;
        if u == 0 || v == 0 {
            return Err(Error::Parse { line: lineno, msg: "vertices are 1-based".into() });
        }
        edges.push((u - 1, v - 1, R::lit(w)));
    }
    if edges.len() != m {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header promises {} edges, found {}", m, edges.len()),
        });
    }
    WeightedGraph::new(n, edges)
}
