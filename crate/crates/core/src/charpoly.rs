//! Pencil determinants `P_A(x) = det(x₁A₁ + ⋯ + x_mA_m − I)`: full expansion
//! for short tuples, restriction to complex lines, roots and the sampled
//! k-th-power certificate.
//!
//! The k-th-power decision never factors a polynomial. On a generic complex
//! line `a + t·d` the restricted determinant has degree `N`; if the pencil
//! determinant is `R^k` with `deg R = n` its roots come in exactly `n`
//! groups of `k` coincident values. Roots are taken from the linearized
//! pencil `det(M₀ + t M₁)` as eigenvalues of `−M₁⁻¹M₀`, so a root repeated
//! because the matrices really are `k` copies stays tight to rounding level
//! instead of splitting like a multiple root of a coefficient vector.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PencilError, Result};
use crate::linalg::{c64, determinant, general_eigenvalues, identity, CMat, SpectralData, SINGULAR_TOL};
use crate::poly::{MultiPoly, UniPoly};

/// Cap on the number of determinant evaluations in a full expansion.
pub const GRID_CAP: u128 = 1_000_000;
pub const DEFAULT_LINES: usize = 8;
/// Root clusters are formed at `CLUSTER_REL_TOL · (1 + max|root|)`.
pub const CLUSTER_REL_TOL: f64 = 1e-6;
/// Relative size of the leading line coefficient below which a direction is degenerate.
pub const DEGENERATE_REL_TOL: f64 = 1e-12;
pub const LINE_RETRIES: usize = 10;
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// `Σ x_i A_i − I`.
pub fn pencil_matrix(mats: &[CMat], x: &[Complex64]) -> CMat {
    let n = mats[0].nrows();
    let mut out = -identity(n);
    for (a, &xi) in mats.iter().zip(x) {
        if xi != Complex64::default() {
            out += a * xi;
        }
    }
    out
}

fn check_square_family(mats: &[CMat]) -> Result<usize> {
    let Some(first) = mats.first() else {
        return Err(PencilError::InvalidArgument("empty matrix list".into()));
    };
    let n = first.nrows();
    if mats.iter().any(|a| a.nrows() != n || a.ncols() != n) || n == 0 {
        return Err(PencilError::DimensionMismatch("pencil matrices must share one square shape".into()));
    }
    Ok(n)
}

fn roots_of_unity(count: usize) -> Vec<Complex64> {
    (0..count)
        .map(|p| Complex64::from_polar(1.0, 2.0 * PI * p as f64 / count as f64))
        .collect()
}

/// In-place inverse DFT along one axis of a row-major grid of `count^m` values.
fn inverse_dft_axis(values: &mut [Complex64], count: usize, m: usize, axis: usize, nodes: &[Complex64]) {
    let stride = count.pow((m - 1 - axis) as u32);
    let total = values.len();
    let mut fiber = vec![Complex64::default(); count];
    for base in 0..total {
        // Only start at fibre heads: the axis digit of `base` must be zero.
        if (base / stride) % count != 0 {
            continue;
        }
        for (e, slot) in fiber.iter_mut().enumerate() {
            let mut acc = Complex64::default();
            for p in 0..count {
                acc += values[base + p * stride] * nodes[(p * (count - e)) % count];
            }
            *slot = acc / count as f64;
        }
        for (e, v) in fiber.iter().enumerate() {
            values[base + e * stride] = *v;
        }
    }
}

/// Full expansion of the pencil determinant by interpolation on a grid of
/// roots of unity, one axis at a time. Intended for `m ≤ 3`.
pub fn pencil_charpoly(mats: &[CMat]) -> Result<MultiPoly> {
    let n = check_square_family(mats)?;
    let m = mats.len();
    if m > 3 {
        return Err(PencilError::InvalidArgument(format!(
            "full expansion supports at most 3 matrices, got {m}; use line restrictions"
        )));
    }
    let count = n + 1;
    let points = (count as u128).pow(m as u32);
    if points > GRID_CAP {
        return Err(PencilError::GridTooLarge { points, cap: GRID_CAP });
    }
    let nodes = roots_of_unity(count);
    let total = points as usize;
    let digits = |mut idx: usize| {
        let mut d = vec![0usize; m];
        for slot in d.iter_mut().rev() {
            *slot = idx % count;
            idx /= count;
        }
        d
    };
    let mut values: Vec<Complex64> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let x: Vec<Complex64> = digits(idx).into_iter().map(|p| nodes[p]).collect();
            determinant(&pencil_matrix(mats, &x))
        })
        .collect();
    let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for axis in 0..m {
        inverse_dft_axis(&mut values, count, m, axis, &nodes);
    }
    let noise = 1e-13 * scale.max(1.0);
    let mut poly = MultiPoly::zero(m);
    for (idx, value) in values.into_iter().enumerate() {
        let d = digits(idx);
        if d.iter().sum::<usize>() > n || value.norm() <= noise {
            continue;
        }
        poly.add_term(d.into_iter().map(|e| e as u32).collect(), value);
    }
    Ok(poly)
}

/// `q(t) = det(Σ (a_i + t d_i) A_i − I)` as a dense polynomial of degree ≤ N.
pub fn restrict_pencil_to_line(mats: &[CMat], base: &[Complex64], dir: &[Complex64]) -> Result<UniPoly> {
    let n = check_square_family(mats)?;
    if base.len() != mats.len() || dir.len() != mats.len() {
        return Err(PencilError::DimensionMismatch("line point and direction must have one entry per matrix".into()));
    }
    if dir.iter().all(|d| *d == Complex64::default()) {
        return Err(PencilError::InvalidArgument("line direction must be non-zero".into()));
    }
    let (m0, m1) = line_matrices(mats, base, dir);
    let count = n + 1;
    let nodes = roots_of_unity(count);
    let mut values: Vec<Complex64> = nodes.iter().map(|&t| determinant(&(&m0 + &m1 * t))).collect();
    inverse_dft_axis(&mut values, count, 1, 0, &nodes);
    let poly = UniPoly::new(values);
    let leading = poly.coeffs().get(n).copied().unwrap_or_default().norm();
    let max = poly.max_coefficient();
    if leading < DEGENERATE_REL_TOL * max {
        return Err(PencilError::DegenerateDirection { leading, max });
    }
    Ok(poly)
}

/// `(M₀, M₁)` with `M₀ = Σ a_i A_i − I` and `M₁ = Σ d_i A_i`.
pub fn line_matrices(mats: &[CMat], base: &[Complex64], dir: &[Complex64]) -> (CMat, CMat) {
    let n = mats[0].nrows();
    let m0 = pencil_matrix(mats, base);
    let mut m1 = CMat::zeros(n, n);
    for (a, &d) in mats.iter().zip(dir) {
        m1 += a * d;
    }
    (m0, m1)
}

/// Roots of `det(M₀ + t M₁)` as eigenvalues of `−M₁⁻¹M₀`.
pub fn line_roots(mats: &[CMat], base: &[Complex64], dir: &[Complex64]) -> Result<Vec<Complex64>> {
    check_square_family(mats)?;
    let (m0, m1) = line_matrices(mats, base, dir);
    let solved = m1
        .lu()
        .solve(&m0)
        .ok_or(PencilError::DegenerateDirection { leading: 0.0, max: 1.0 })?;
    general_eigenvalues(&(-solved))
}

/// Parlett–Reinsch diagonal balancing with powers of two.
fn balance(m: &mut CMat) {
    let n = m.nrows();
    let radix = 2.0f64;
    loop {
        let mut converged = true;
        for i in 0..n {
            let mut col = 0.0;
            let mut row = 0.0;
            for j in 0..n {
                if j != i {
                    col += m[(j, i)].norm();
                    row += m[(i, j)].norm();
                }
            }
            if col == 0.0 || row == 0.0 {
                continue;
            }
            let total = col + row;
            let mut f = 1.0;
            let (mut c, r) = (col, row);
            while c < r / radix {
                c *= radix * radix;
                f *= radix;
            }
            while c >= r * radix {
                c /= radix * radix;
                f /= radix;
            }
            let _ = c;
            if (col * f + row / f) < 0.95 * total {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
}

/// All `d` roots of a degree-`d` polynomial, from the eigenvalues of its
/// balanced companion matrix.
pub fn univariate_roots(p: &UniPoly) -> Result<Vec<Complex64>> {
    let d = p.degree();
    if p.is_zero() || d == 0 {
        return Err(PencilError::InvalidArgument("root finding needs degree ≥ 1".into()));
    }
    let lead = p.leading();
    let coeffs = p.coeffs();
    let mut companion = CMat::zeros(d, d);
    for i in 1..d {
        companion[(i, i - 1)] = c64(1.0, 0.0);
    }
    for i in 0..d {
        companion[(i, d - 1)] = -coeffs[i] / lead;
    }
    balance(&mut companion);
    let roots = general_eigenvalues(&companion)?;
    for r in &roots {
        let scale = p.eval_abs(*r);
        if scale > 0.0 && p.eval(*r).norm() / scale > 1e-6 {
            return Err(PencilError::NumericalBreakdown(format!(
                "companion root {r} has relative residual {:.3e}",
                p.eval(*r).norm() / scale
            )));
        }
    }
    Ok(roots)
}

/// Single-linkage clustering at distance `tol`. Clusters are listed by
/// their first member in input order; members keep input order.
pub fn cluster_roots(roots: &[Complex64], tol: f64) -> Vec<Vec<Complex64>> {
    let n = roots.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (roots[i] - roots[j]).norm() <= tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut order: Vec<usize> = Vec::new();
    let mut groups: Vec<Vec<Complex64>> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        match order.iter().position(|&r| r == root) {
            Some(slot) => groups[slot].push(roots[i]),
            None => {
                order.push(root);
                groups.push(vec![roots[i]]);
            }
        }
    }
    groups
}

/// Diameter of a cluster.
pub fn cluster_spread(cluster: &[Complex64]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in cluster.iter().enumerate() {
        for b in &cluster[i + 1..] {
            worst = worst.max((a - b).norm());
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineProfile {
    pub line_seed: u64,
    pub cluster_sizes: Vec<usize>,
    pub max_spread: f64,
    pub tolerance: f64,
}

impl LineProfile {
    pub fn matches(&self, n: usize, k: usize) -> bool {
        self.cluster_sizes.len() == n
            && self.cluster_sizes.iter().all(|&s| s == k)
            && self.max_spread <= self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KPowerVerdict {
    pub is_kth_power: bool,
    pub k: usize,
    pub n: usize,
    pub per_line_clusters: Vec<LineProfile>,
    pub worst_spread: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KPowerOptions {
    pub lines: usize,
    pub cluster_rel_tol: f64,
}

impl Default for KPowerOptions {
    fn default() -> Self {
        Self {
            lines: DEFAULT_LINES,
            cluster_rel_tol: CLUSTER_REL_TOL,
        }
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            c64(re * s, im * s)
        })
        .collect()
}

/// Per-item sub-seeds drawn up front so that results do not depend on the
/// order in which workers pick items up.
pub fn sub_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random()).collect()
}

fn profile_line(mats: &[CMat], k: usize, line: usize, line_seed: u64, tol_rel: f64) -> Result<LineProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(line_seed);
    for _ in 0..LINE_RETRIES {
        let base = gaussian_vector(&mut rng, mats.len());
        let dir = gaussian_vector(&mut rng, mats.len());
        match restrict_pencil_to_line(mats, &base, &dir) {
            Err(PencilError::DegenerateDirection { .. }) => continue,
            Err(e) => return Err(e),
            Ok(_) => {}
        }
        let roots = match line_roots(mats, &base, &dir) {
            Err(PencilError::DegenerateDirection { .. }) => continue,
            other => other?,
        };
        let biggest = roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
        let tolerance = tol_rel * (1.0 + biggest);
        let clusters = cluster_roots(&roots, tolerance);
        let _ = k;
        return Ok(LineProfile {
            line_seed,
            cluster_sizes: clusters.iter().map(Vec::len).collect(),
            max_spread: clusters.iter().map(|c| cluster_spread(c)).fold(0.0, f64::max),
            tolerance,
        });
    }
    Err(PencilError::LineSamplingFailed {
        line,
        attempts: LINE_RETRIES,
    })
}

/// Sampled certificate that `det(Σx_iA_i − I)` is the `k`-th power of a
/// degree-`n` polynomial, using the default options.
pub fn kth_power_test(mats: &[CMat], k: usize, n: usize, lines: usize, seed: u64) -> Result<KPowerVerdict> {
    kth_power_test_with(
        mats,
        k,
        n,
        &KPowerOptions {
            lines,
            ..KPowerOptions::default()
        },
        seed,
    )
}

pub fn kth_power_test_with(
    mats: &[CMat],
    k: usize,
    n: usize,
    opts: &KPowerOptions,
    seed: u64,
) -> Result<KPowerVerdict> {
    let dim = check_square_family(mats)?;
    if k == 0 || n == 0 || n * k != dim {
        return Err(PencilError::InvalidArgument(format!(
            "n·k = {}·{} does not match the dimension {dim}",
            n, k
        )));
    }
    if opts.lines < 4 {
        return Err(PencilError::InvalidArgument("at least 4 lines are required".into()));
    }
    let seeds = sub_seeds(seed, opts.lines);
    let per_line_clusters = seeds
        .par_iter()
        .enumerate()
        .map(|(line, &s)| profile_line(mats, k, line, s, opts.cluster_rel_tol))
        .collect::<Result<Vec<_>>>()?;
    let is_kth_power = per_line_clusters.iter().all(|p| p.matches(n, k));
    let worst_spread = per_line_clusters.iter().map(|p| p.max_spread).fold(0.0, f64::max);
    Ok(KPowerVerdict {
        is_kth_power,
        k,
        n,
        per_line_clusters,
        worst_spread,
    })
}

/// `p(Cᵀx)`: the pencil determinant of the transformed tuple
/// `Â_j = Σ_s c_js A_s` in terms of the determinant of the original one.
pub fn transform_tuple_vars(p: &MultiPoly, c: &DMatrix<Complex64>) -> Result<MultiPoly> {
    let m = p.nvars();
    if c.nrows() != m || c.ncols() != m {
        return Err(PencilError::DimensionMismatch(format!(
            "transform is {}x{}, polynomial has {m} variables",
            c.nrows(),
            c.ncols()
        )));
    }
    let det = c.clone().lu().determinant().norm();
    if det <= 1e-10 {
        return Err(PencilError::SingularTransform { det });
    }
    // y_s = Σ_j c_js x_j
    let forms: Vec<MultiPoly> = (0..m)
        .map(|s| MultiPoly::linear(&(0..m).map(|j| c[(j, s)]).collect::<Vec<_>>()))
        .collect();
    let max_power = p.total_degree();
    let powers: Vec<Vec<MultiPoly>> = forms
        .iter()
        .map(|y| {
            let mut list = vec![MultiPoly::constant(m, c64(1.0, 0.0))];
            for e in 1..=max_power as usize {
                let next = list[e - 1].mul(y);
                list.push(next);
            }
            list
        })
        .collect();
    let mut out = MultiPoly::zero(m);
    for (exps, coef) in p.terms() {
        let mut term = MultiPoly::constant(m, coef);
        for (s, &e) in exps.iter().enumerate() {
            if e > 0 {
                term = term.mul(&powers[s][e as usize]);
            }
        }
        out = out.add(&term);
    }
    Ok(out)
}

/// `∂R/∂x₁` at `τ_j = (1/λ_j, 0, …)` for `R(x₁, 0, …) = ∏_l (λ_l x₁ − 1)`,
/// i.e. `λ_j ∏_{l≠j} (λ_l/λ_j − 1)`.
pub fn reduced_x1_slope(lambdas: &[f64], j: usize) -> f64 {
    let lj = lambdas[j];
    lambdas
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != j)
        .fold(lj, |acc, (_, &ll)| acc * (ll / lj - 1.0))
}

/// Estimate `∂x_{1,j}/∂x₂` at `x₂ = 0` for the branch of
/// `det(x₁A₁ + x₂W − I) = 0` through `x₁ = 1/λ_j`.
///
/// For fixed `x₂` the admissible `x₁` are the eigenvalues of
/// `A₁⁻¹(I − x₂W)`. The branch is followed as the mean of the `l_j`
/// eigenvalues nearest `1/λ_j` (the mean stays analytic even if the group
/// splits), and differentiated by a central difference at `±eps`.
pub fn branch_derivative(a1: &CMat, w: &CMat, spec: &SpectralData, j: usize, eps: f64) -> Result<Complex64> {
    let n = spec.n();
    if j >= n {
        return Err(PencilError::IndexOutOfRange { index: j, limit: n });
    }
    if a1.shape() != w.shape() || a1.nrows() != spec.dim() {
        return Err(PencilError::DimensionMismatch("branch_derivative: shapes differ".into()));
    }
    if !(eps > 0.0) {
        return Err(PencilError::InvalidArgument("eps must be positive".into()));
    }
    if spec.eigenvalues.iter().any(|l| l.abs() < SINGULAR_TOL * spec.norm.max(1.0)) {
        return Err(PencilError::InvalidArgument("A1 must be invertible; shift it first".into()));
    }
    let target = 1.0 / spec.eigenvalues[j];
    let width = spec.multiplicities[j];
    let separation = spec
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != j)
        .map(|(_, &l)| (1.0 / l - target).abs())
        .fold(f64::INFINITY, f64::min);
    // Work in A₁'s eigenbasis and shift by the target, so the differenced
    // quantity is the O(h) displacement rather than an O(1) eigenvalue.
    let inv: Vec<f64> = spec
        .eigenvalues
        .iter()
        .zip(&spec.multiplicities)
        .flat_map(|(&l, &mult)| std::iter::repeat_n(1.0 / l, mult))
        .collect();
    let rotated = spec.basis.adjoint() * w * &spec.basis;
    let dim = inv.len();

    let center = |h: f64| -> Result<Complex64> {
        let m = CMat::from_fn(dim, dim, |r, col| {
            let shift = if r == col { c64(inv[r] - target, 0.0) } else { c64(0.0, 0.0) };
            shift - rotated[(r, col)] * (h * inv[r])
        });
        let mut values = general_eigenvalues(&m)?;
        values.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        let inner = values[width - 1].norm();
        let outer = values.get(width).map(|v| v.norm()).unwrap_or(f64::INFINITY);
        // a lone cluster owns every root, so there is nothing to confuse it with
        let tracked = separation.is_infinite() || (inner < 0.5 * separation && outer > 0.5 * separation);
        if !tracked {
            return Err(PencilError::BranchTrackingLost {
                cluster: j + 1,
                detail: format!("at x2 = {h:e}: nearest group radius {inner:.3e}, next root at {outer:.3e}"),
            });
        }
        Ok(values[..width].iter().sum::<Complex64>() / width as f64)
    };
    Ok((center(eps)? - center(-eps)?) / (2.0 * eps))
}
