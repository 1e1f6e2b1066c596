//! Explicit reducing unitary for a tuple that passes the spectral test.
//!
//! In the eigenbasis of `A₁` every generator becomes an `n×n` grid of `k×k`
//! blocks. When the tuple is `k` copies of one `n×n` tuple, each block is a
//! scalar times a unitary `u_ij` shared by all generators, and the `u_ij`
//! multiply consistently around every cycle of indices. Conjugating by the
//! block-diagonal unitary built from those `u_ij` makes every block scalar,
//! and a final interleaving permutation turns `B ⊗ I_k`-shaped blocks into
//! `I_k ⊗ B`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::charpoly::kth_power_test_with;
use crate::charpoly::KPowerOptions;
use crate::config::Tolerances;
use crate::error::{PencilError, Result};
use crate::linalg::{c64, eigendecompose_clustered, frobenius, identity, unitary_deviation, CMat, HermitianTuple, SpectralData};

/// A `k×k` block split as `c·u` with `c ≥ 0` and `u` unitary.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockFactor {
    Zero,
    Scaled { c: f64, u: CMat },
}

/// Why a block could not be factored; `deviation` is the relative distance
/// of `bb*` from a multiple of the identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockDefect {
    pub deviation: f64,
}

/// Zero when `‖b‖ ≤ tol`; otherwise `b = c·u` provided
/// `‖bb* − sI‖ ≤ tol·‖bb*‖` and `s ≥ tol²` with `s = tr(bb*)/k`.
pub fn factor_block(b: &CMat, tol: f64) -> std::result::Result<BlockFactor, BlockDefect> {
    if frobenius(b) <= tol {
        return Ok(BlockFactor::Zero);
    }
    let k = b.nrows();
    let gram = b * b.adjoint();
    let s = gram.trace().re / k as f64;
    let deviation = frobenius(&(&gram - identity(k).scale(s))) / frobenius(&gram);
    if deviation > tol || s < tol * tol {
        return Err(BlockDefect { deviation });
    }
    let c = s.sqrt();
    Ok(BlockFactor::Scaled { c, u: b.unscale(c) })
}

/// Nearest unimodular scalar `e^{iθ}` to a `k×k` matrix in Frobenius norm,
/// with `θ = arg tr`, and the distance to `e^{iθ}I`. A zero trace gives `θ = 0`.
pub fn unimodular_fit(m: &CMat) -> (f64, f64) {
    let tr = m.trace();
    let theta = if tr.norm() > 0.0 { tr.arg() } else { 0.0 };
    let k = m.nrows();
    let residual = frobenius(&(m - identity(k) * num_complex::Complex64::from_polar(1.0, theta)));
    (theta, residual)
}

/// The `k×k` block grid of every generator in `A₁`'s clustered eigenbasis.
#[derive(Clone, Debug)]
pub struct RawBlocks {
    pub n: usize,
    pub k: usize,
    /// `blocks[l][i][j]` for generator `l` (0 is `A₁`).
    pub blocks: Vec<Vec<Vec<CMat>>>,
    /// The eigenbasis as columns; rotated generators are `E* A E`.
    pub basis: CMat,
}

/// Rotated generators `E* A_l E` for the basis stored in `spec`.
pub fn rotate(tuple: &HermitianTuple, spec: &SpectralData) -> Vec<CMat> {
    let e = &spec.basis;
    tuple.matrices().iter().map(|a| e.adjoint() * a * e).collect()
}

fn check_pattern(spec: &SpectralData, n: usize, k: usize) -> Result<()> {
    if spec.n() != n || spec.multiplicities.iter().any(|&mult| mult != k) {
        return Err(PencilError::SpectrumPatternViolation {
            n,
            k,
            found: spec.multiplicities.clone(),
        });
    }
    Ok(())
}

pub fn extract_block_structure(tuple: &HermitianTuple, spec: &SpectralData, k: usize) -> Result<RawBlocks> {
    let dim = tuple.dim();
    if k == 0 || dim % k != 0 {
        return Err(PencilError::SpectrumPatternViolation {
            n: if k == 0 { 0 } else { dim / k },
            k,
            found: spec.multiplicities.clone(),
        });
    }
    let n = dim / k;
    check_pattern(spec, n, k)?;
    let blocks = rotate(tuple, spec)
        .iter()
        .map(|a| {
            (0..n)
                .map(|i| (0..n).map(|j| a.view((i * k, j * k), (k, k)).into_owned()).collect())
                .collect()
        })
        .collect();
    Ok(RawBlocks {
        n,
        k,
        blocks,
        basis: spec.basis.clone(),
    })
}

/// Factored and unified block data.
///
/// For every linked pair `(i, j)`, `i ≠ j`, block `(i, j)` of generator `l`
/// equals `coefficients[l][(i, j)] · u[(i, j)]`, with one unitary per pair
/// shared across generators. Diagonal blocks are real multiples of `I_k`
/// stored on the diagonal of `coefficients[l]`.
#[derive(Clone, Debug)]
pub struct BlockStructure {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub coefficients: Vec<CMat>,
    pub u: BTreeMap<(usize, usize), CMat>,
    /// Pairs with a non-zero block in some generator.
    pub linked: BTreeSet<(usize, usize)>,
    /// `linked` closed under `(i,s),(i,t) ↦ (s,t)`.
    pub closure: BTreeSet<(usize, usize)>,
    /// Generator whose unitary was adopted for each linked pair.
    pub reference_layer: BTreeMap<(usize, usize), usize>,
}

impl BlockStructure {
    /// `u_ij`, defaulting to `I_k` off the closed pair set and on the diagonal.
    pub fn unitary(&self, i: usize, j: usize) -> CMat {
        self.u.get(&(i, j)).cloned().unwrap_or_else(|| identity(self.k))
    }
}

/// Factors every block and picks one unitary per linked pair, rewriting the
/// other generators' coefficients as complex multiples of it.
pub fn unify_layers(raw: &RawBlocks, tol: &Tolerances) -> Result<BlockStructure> {
    let (n, k, m) = (raw.n, raw.k, raw.blocks.len());
    let mut coefficients = vec![CMat::zeros(n, n); m];
    let mut factors: Vec<BTreeMap<(usize, usize), (f64, CMat)>> = vec![BTreeMap::new(); m];

    for (l, grid) in raw.blocks.iter().enumerate() {
        let norm = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| frobenius(&grid[i][j]).powi(2))
            .sum::<f64>()
            .sqrt();
        let threshold = tol.structural_tol * norm.max(1.0);
        for i in 0..n {
            let d = &grid[i][i];
            let s = d.trace().re / k as f64;
            let deviation = frobenius(&(d - identity(k).scale(s)));
            if deviation > threshold {
                return Err(PencilError::NotUnitaryScalar {
                    i: i + 1,
                    j: i + 1,
                    layer: l + 1,
                    deviation,
                });
            }
            coefficients[l][(i, i)] = c64(s, 0.0);
            for j in (i + 1)..n {
                match factor_block(&grid[i][j], threshold) {
                    Ok(BlockFactor::Zero) => {}
                    Ok(BlockFactor::Scaled { c, u }) => {
                        factors[l].insert((i, j), (c, u));
                    }
                    Err(BlockDefect { deviation }) => {
                        return Err(PencilError::NotUnitaryScalar {
                            i: i + 1,
                            j: j + 1,
                            layer: l + 1,
                            deviation,
                        })
                    }
                }
            }
        }
    }

    let mut u = BTreeMap::new();
    let mut linked = BTreeSet::new();
    let mut reference_layer = BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let present: Vec<usize> = (0..m).filter(|&l| factors[l].contains_key(&(i, j))).collect();
            let Some(&reference) = present
                .iter()
                .max_by(|&&a, &&b| factors[a][&(i, j)].0.total_cmp(&factors[b][&(i, j)].0).then(b.cmp(&a)))
            else {
                continue;
            };
            let shared = factors[reference][&(i, j)].1.clone();
            for &l in &present {
                let (c, ul) = &factors[l][&(i, j)];
                let overlap = (shared.adjoint() * ul).trace() / k as f64;
                let sigma = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { c64(1.0, 0.0) };
                let deviation = frobenius(&(ul - &shared * sigma));
                if deviation > tol.structural_tol {
                    return Err(PencilError::LayerInconsistency {
                        i: i + 1,
                        j: j + 1,
                        layer: l + 1,
                        reference: reference + 1,
                        deviation,
                    });
                }
                coefficients[l][(i, j)] = sigma * *c;
                coefficients[l][(j, i)] = (sigma * *c).conj();
            }
            u.insert((j, i), shared.adjoint());
            u.insert((i, j), shared);
            for pair in [(i, j), (j, i)] {
                linked.insert(pair);
                reference_layer.insert(pair, reference);
            }
        }
    }
    Ok(BlockStructure {
        n,
        k,
        m,
        coefficients,
        u,
        closure: linked.clone(),
        linked,
        reference_layer,
    })
}

/// Closes the pair set by `u_st = u_si·u_it` until no pair can be added,
/// then checks that every index triangle inside the closed set multiplies
/// to a unimodular scalar. Triangles suffice: once each connected set of
/// indices is complete, every longer cycle factors into triangles.
pub fn extend_closure(mut bs: BlockStructure, tol: &Tolerances) -> Result<(BlockStructure, Vec<CyclePhase>)> {
    let n = bs.n;
    loop {
        let mut added = false;
        for i in 0..n {
            for s in 0..n {
                for t in 0..n {
                    if s == t || s == i || t == i {
                        continue;
                    }
                    if bs.closure.contains(&(i, s)) && bs.closure.contains(&(i, t)) && !bs.closure.contains(&(s, t)) {
                        let ust = bs.unitary(s, i) * bs.unitary(i, t);
                        bs.u.insert((t, s), ust.adjoint());
                        bs.u.insert((s, t), ust);
                        bs.closure.insert((s, t));
                        bs.closure.insert((t, s));
                        added = true;
                    }
                }
            }
        }
        if !added {
            break;
        }
    }
    let mut phases = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                if !(bs.closure.contains(&(a, b)) && bs.closure.contains(&(b, c)) && bs.closure.contains(&(c, a))) {
                    continue;
                }
                let product = bs.unitary(a, b) * bs.unitary(b, c) * bs.unitary(c, a);
                let (theta, residual) = unimodular_fit(&product);
                if residual > tol.structural_tol {
                    return Err(PencilError::CycleInconsistency {
                        cycle: vec![a + 1, b + 1, c + 1],
                        residual,
                    });
                }
                phases.push(CyclePhase {
                    cycle: vec![a + 1, b + 1, c + 1],
                    theta,
                    residual,
                });
            }
        }
    }
    Ok((bs, phases))
}

/// Diagnostic phase of one closed index cycle (one-based indices).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CyclePhase {
    pub cycle: Vec<usize>,
    pub theta: f64,
    pub residual: f64,
}

/// Greedy partition of `0..n`: the smallest index with a partner, together
/// with all its partners, forms a block; repeat on the rest; indices with no
/// partner become singletons, listed last.
pub fn partition_indices(closure: &BTreeSet<(usize, usize)>, n: usize) -> Result<Vec<Vec<usize>>> {
    let partners = |i: usize| -> Vec<usize> { (0..n).filter(|&j| j != i && closure.contains(&(i, j))).collect() };
    let mut taken = vec![false; n];
    let mut blocks = Vec::new();
    for i in 0..n {
        if taken[i] {
            continue;
        }
        let others = partners(i);
        if others.is_empty() {
            continue;
        }
        let mut block = vec![i];
        block.extend(others);
        for &a in &block {
            if taken[a] {
                return Err(PencilError::PartitionInconsistency(format!("index {} lies in two blocks", a + 1)));
            }
            let mut expected: Vec<usize> = block.iter().copied().filter(|&b| b != a).collect();
            expected.sort_unstable();
            if partners(a) != expected {
                return Err(PencilError::PartitionInconsistency(format!(
                    "index {} is not linked to exactly the rest of its block",
                    a + 1
                )));
            }
        }
        for &a in &block {
            taken[a] = true;
        }
        blocks.push(block);
    }
    for (i, t) in taken.iter().enumerate() {
        if !t {
            blocks.push(vec![i]);
        }
    }
    Ok(blocks)
}

/// Block-diagonal `𝒰` with `k×k` diagonal entries `u_{t,q}` for `q` in a
/// block whose largest index is `t` (so `u_{t,t} = I_k`), and `I_k` on
/// singletons.
pub fn build_block_unitary(bs: &BlockStructure, partition: &[Vec<usize>]) -> CMat {
    let (n, k) = (bs.n, bs.k);
    let mut out = identity(n * k);
    for block in partition {
        let last = *block.iter().max().expect("non-empty block");
        for &q in block {
            if q != last {
                out.view_mut((q * k, q * k), (k, k)).copy_from(&bs.unitary(last, q));
            }
        }
    }
    out
}

/// `perm[p·k + a] = a·n + p`: gathers the `a`-th vector of every cluster
/// into the `a`-th copy.
pub fn interleaving_permutation(n: usize, k: usize) -> Vec<usize> {
    let mut perm = vec![0; n * k];
    for p in 0..n {
        for a in 0..k {
            perm[p * k + a] = a * n + p;
        }
    }
    perm
}

/// Matrix `Π` with `Π e_old = e_{perm[old]}`.
pub fn permutation_matrix(perm: &[usize]) -> CMat {
    let mut out = CMat::zeros(perm.len(), perm.len());
    for (old, &new) in perm.iter().enumerate() {
        out[(new, old)] = c64(1.0, 0.0);
    }
    out
}

#[derive(Clone, Debug)]
pub struct DecompositionResult {
    pub n: usize,
    pub k: usize,
    /// `V = E*`, the adjoint of `A₁`'s clustered eigenbasis.
    pub basis: CMat,
    pub block_unitary: CMat,
    pub permutation: Vec<usize>,
    pub reduced: Vec<CMat>,
    pub partition: Vec<Vec<usize>>,
    pub cycle_phases: Vec<CyclePhase>,
    /// Per generator, `‖Q A_l Q* − I_k ⊗ B_l‖_F`.
    pub residuals: Vec<f64>,
    pub residual: f64,
}

impl DecompositionResult {
    /// `Q = Π 𝒰 V`, so that `Q A_l Q* = I_k ⊗ B_l`.
    pub fn unitary(&self) -> CMat {
        permutation_matrix(&self.permutation) * &self.block_unitary * &self.basis
    }
}

fn kron_identity(k: usize, b: &CMat) -> CMat {
    crate::linalg::block_diag_copies(b, k)
}

fn residuals_for(tuple: &HermitianTuple, q: &CMat, reduced: &[CMat], k: usize) -> Vec<f64> {
    tuple
        .matrices()
        .iter()
        .zip(reduced)
        .map(|(a, b)| frobenius(&(q * a * q.adjoint() - kron_identity(k, b))))
        .collect()
}

pub fn decompose(tuple: &HermitianTuple, k: usize, seed: u64) -> Result<DecompositionResult> {
    decompose_with(tuple, k, seed, &Tolerances::default())
}

/// End-to-end reduction: eigenbasis, blocks, factorization, unification,
/// closure, partition, `𝒰`, interleaving and the reduced tuple.
pub fn decompose_with(tuple: &HermitianTuple, k: usize, seed: u64, tol: &Tolerances) -> Result<DecompositionResult> {
    let dim = tuple.dim();
    let spec = eigendecompose_clustered(tuple.get(0), tol.gap_tol)?;
    if k == 0 || dim % k != 0 {
        return Err(PencilError::SpectrumPatternViolation {
            n: if k == 0 { 0 } else { dim / k },
            k,
            found: spec.multiplicities.clone(),
        });
    }
    let n = dim / k;
    check_pattern(&spec, n, k)?;
    let (shifted, _) = tuple.shifted_invertible();
    let opts = KPowerOptions {
        cluster_rel_tol: tol.cluster_rel_tol,
        ..KPowerOptions::default()
    };
    if !kth_power_test_with(shifted.matrices(), k, n, &opts, seed)?.is_kth_power {
        return Err(PencilError::NotKthPower { k });
    }
    let scale = tuple.max_norm().max(1.0);
    let basis = spec.basis.adjoint();

    if k == 1 {
        let reduced: Vec<CMat> = rotate(tuple, &spec);
        let result = DecompositionResult {
            n,
            k,
            basis,
            block_unitary: identity(n),
            permutation: (0..n).collect(),
            residuals: vec![0.0; reduced.len()],
            residual: 0.0,
            reduced,
            partition: (0..n).map(|i| vec![i]).collect(),
            cycle_phases: Vec::new(),
        };
        return finish(tuple, result, scale, tol);
    }

    let raw = extract_block_structure(tuple, &spec, k)?;
    let bs = unify_layers(&raw, tol)?;
    let (bs, cycle_phases) = extend_closure(bs, tol)?;
    let partition = partition_indices(&bs.closure, n)?;
    let block_unitary = build_block_unitary(&bs, &partition);

    for (l, grid) in raw.blocks.iter().enumerate() {
        for p in 0..n {
            for q in 0..n {
                let up = block_unitary.view((p * k, p * k), (k, k));
                let uq = block_unitary.view((q * k, q * k), (k, k));
                let block = up * &grid[p][q] * uq.adjoint();
                let s = block.trace() / k as f64;
                let deviation = frobenius(&(&block - identity(k) * s));
                if deviation > tol.residual_tol * scale {
                    return Err(PencilError::ScalarizationFailed {
                        i: p + 1,
                        j: q + 1,
                        layer: l + 1,
                        deviation,
                    });
                }
            }
        }
    }

    let permutation = interleaving_permutation(n, k);
    let q = permutation_matrix(&permutation) * &block_unitary * &basis;
    let reduced: Vec<CMat> = tuple
        .matrices()
        .iter()
        .map(|a| {
            let full = &q * a * q.adjoint();
            crate::linalg::hermitize(&full.view((0, 0), (n, n)).into_owned())
        })
        .collect();
    let result = DecompositionResult {
        n,
        k,
        basis,
        block_unitary,
        permutation,
        reduced,
        partition,
        cycle_phases,
        residuals: Vec::new(),
        residual: 0.0,
    };
    finish(tuple, result, scale, tol)
}

fn finish(tuple: &HermitianTuple, mut result: DecompositionResult, scale: f64, tol: &Tolerances) -> Result<DecompositionResult> {
    result.residuals = residuals_for(tuple, &result.unitary(), &result.reduced, result.k);
    result.residual = result.residuals.iter().copied().fold(0.0, f64::max);
    if result.residual > tol.residual_tol * scale {
        return Err(PencilError::NumericalBreakdown(format!(
            "decomposition residual {:.3e} exceeds {:.3e}",
            result.residual,
            tol.residual_tol * scale
        )));
    }
    Ok(result)
}

/// Independent recomputation of a decomposition's claims.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub residuals: Vec<f64>,
    pub residual: f64,
    pub basis_unitarity: f64,
    pub block_unitarity: f64,
    pub permutation_valid: bool,
    /// `‖𝒰D − D𝒰‖` for `D` the rotated `A₁`.
    pub commutator: f64,
    /// Distance of `B₁` from a diagonal matrix.
    pub reduced_a1_offdiagonal: f64,
    pub passed: bool,
}

pub fn verify_decomposition(tuple: &HermitianTuple, result: &DecompositionResult) -> VerificationReport {
    let dim = tuple.dim();
    let mut seen = vec![false; dim];
    let permutation_valid = result.permutation.len() == dim
        && result.permutation.iter().all(|&p| p < dim && !std::mem::replace(&mut seen[p], true));
    let shapes_ok = permutation_valid
        && result.basis.shape() == (dim, dim)
        && result.block_unitary.shape() == (dim, dim)
        && result.reduced.len() == tuple.len()
        && result.reduced.iter().all(|b| b.shape() == (result.n, result.n))
        && result.n * result.k == dim;
    if !shapes_ok {
        return VerificationReport {
            residuals: Vec::new(),
            residual: f64::INFINITY,
            basis_unitarity: unitary_deviation(&result.basis),
            block_unitarity: unitary_deviation(&result.block_unitary),
            permutation_valid,
            commutator: f64::INFINITY,
            reduced_a1_offdiagonal: f64::INFINITY,
            passed: false,
        };
    }
    let residuals = residuals_for(tuple, &result.unitary(), &result.reduced, result.k);
    let residual = residuals.iter().copied().fold(0.0, f64::max);
    let d = &result.basis * tuple.get(0) * result.basis.adjoint();
    let u = &result.block_unitary;
    let commutator = frobenius(&(u * &d - &d * u));
    let mut b1 = result.reduced[0].clone();
    b1.fill_diagonal(c64(0.0, 0.0));
    let reduced_a1_offdiagonal = frobenius(&b1);
    let basis_unitarity = unitary_deviation(&result.basis);
    let block_unitarity = unitary_deviation(u);
    let scale = tuple.max_norm().max(1.0);
    let passed = residual <= 1e-6 * scale
        && basis_unitarity <= 1e-10 * dim as f64
        && block_unitarity <= 1e-10 * dim as f64
        && commutator <= 1e-9 * scale;
    VerificationReport {
        residuals,
        residual,
        basis_unitarity,
        block_unitarity,
        permutation_valid,
        commutator,
        reduced_a1_offdiagonal,
        passed,
    }
}
