//! Seeded instance generators: decomposable tuples, a conjugate-pair family
//! whose full pencil determinant is a square but which does not split, and
//! commuting tuples. Every generator is a pure function of its arguments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conditions::Overall;
use crate::error::{PencilError, Result};
use crate::io::MatrixData;
use crate::linalg::{block_diag_copies, c64, from_real_diagonal, hermitian_eigen, hermitize, CMat, HermitianTuple};

/// Floor on eigenvalue gaps and on eigenvalue moduli in generated seeds.
pub const SEED_GAP: f64 = 0.1;
const MAX_RESAMPLES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Decomposable,
    ConjugateNegative,
    Commuting,
}

impl std::str::FromStr for Family {
    type Err = PencilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decomposable" => Ok(Family::Decomposable),
            "conjugate_negative" => Ok(Family::ConjugateNegative),
            "commuting" => Ok(Family::Commuting),
            other => Err(PencilError::InvalidArgument(format!("unknown family `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub expected: Overall,
    /// Display form of a word known to fail, for negative families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failing_word: Option<String>,
    /// The n×n tuple that was copied `k` times, for positive families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_tuple: Option<Vec<MatrixData>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceDescriptor {
    pub family: Family,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub ground_truth: GroundTruth,
}

impl InstanceDescriptor {
    /// The seed tuple, if one was recorded.
    pub fn seed_tuple(&self) -> Option<Vec<CMat>> {
        self.ground_truth
            .seed_tuple
            .as_ref()
            .map(|ms| ms.iter().map(crate::io::matrix_from_data).collect::<Result<Vec<_>>>())
            .and_then(Result::ok)
    }
}

fn complex_gaussian(rng: &mut impl Rng) -> num_complex::Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// GUE-distributed `n×n` Hermitian matrix.
pub fn random_hermitian(n: usize, rng: &mut impl Rng) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| complex_gaussian(rng));
    hermitize(&g)
}

/// Haar-distributed `N×N` unitary: QR of a complex Ginibre matrix with the
/// phases of `R`'s diagonal moved into `Q`.
pub fn haar_unitary(size: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    haar_unitary_from(size, &mut rng)
}

fn haar_unitary_from(size: usize, rng: &mut impl Rng) -> CMat {
    let g = CMat::from_fn(size, size, |_, _| complex_gaussian(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c64(1.0, 0.0) };
        col *= phase;
    }
    q
}

fn well_separated(values: &[f64]) -> bool {
    values.iter().all(|v| v.abs() >= SEED_GAP) && values.windows(2).all(|w| w[1] - w[0] >= SEED_GAP)
}

fn separated_hermitian(n: usize, rng: &mut impl Rng) -> CMat {
    for _ in 0..MAX_RESAMPLES {
        let t = random_hermitian(n, rng);
        if well_separated(&hermitian_eigen(&t).0) {
            return t;
        }
    }
    unreachable!("GUE sample with gap {SEED_GAP} not found in {MAX_RESAMPLES} draws")
}

fn conjugate_all(mats: &[CMat], u: &CMat) -> Vec<CMat> {
    mats.iter().map(|a| hermitize(&(u * a * u.adjoint()))).collect()
}

fn check_sizes(n: usize, k: usize, m: usize) -> Result<()> {
    if n == 0 || k == 0 || m == 0 {
        return Err(PencilError::InvalidArgument("n, k and m must be positive".into()));
    }
    if n * k > 16 {
        return Err(PencilError::InvalidArgument(format!("n·k = {} exceeds 16", n * k)));
    }
    Ok(())
}

/// `k` copies of a random `n×n` Hermitian `m`-tuple, conjugated by one Haar
/// unitary. Each seed generator has simple spectrum with gaps and moduli at
/// least `SEED_GAP`.
pub fn gen_decomposable(n: usize, k: usize, m: usize, seed: u64) -> Result<(HermitianTuple, InstanceDescriptor)> {
    check_sizes(n, k, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seed_mats: Vec<CMat> = (0..m).map(|_| separated_hermitian(n, &mut rng)).collect();
    let u = haar_unitary_from(n * k, &mut rng);
    let copies: Vec<CMat> = seed_mats.iter().map(|t| block_diag_copies(t, k)).collect();
    let tuple = HermitianTuple::new(conjugate_all(&copies, &u))?;
    let descriptor = InstanceDescriptor {
        family: Family::Decomposable,
        n,
        k,
        m,
        seed,
        ground_truth: GroundTruth {
            expected: Overall::Pass,
            failing_word: None,
            seed_tuple: Some(seed_mats.iter().map(crate::io::matrix_to_data).collect()),
        },
    };
    Ok((tuple, descriptor))
}

/// The 3×3 Hermitian matrix with unit couplings `b₁₂ = b₂₃ = 1`, `b₁₃ = i`
/// and zero diagonal. Its triangle product `b₁₂b₂₃b₃₁ = −i` is not real.
pub fn twisted_triangle() -> CMat {
    let (o, z, i) = (c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 1.0));
    CMat::from_row_slice(3, 3, &[z, o, i, o, z, o, -i, o, z])
}

/// `(D ⊕ D, B ⊕ B̄)` with `D = diag(1,2,3)` and `B` the twisted triangle,
/// conjugated by a Haar unitary drawn from `seed`.
///
/// The two summands have conjugate pencil determinants, which agree because
/// the determinant of a Hermitian pencil has real coefficients, so the full
/// determinant is a square. The summands are not unitarily equivalent
/// (their triangle phases are `−i` and `i`), so no splitting into two
/// identical copies exists.
pub fn gen_conjugate_negative(seed: u64) -> Result<(HermitianTuple, InstanceDescriptor)> {
    let d = from_real_diagonal(&[1.0, 2.0, 3.0]);
    let b = twisted_triangle();
    let mut a1 = CMat::zeros(6, 6);
    a1.view_mut((0, 0), (3, 3)).copy_from(&d);
    a1.view_mut((3, 3), (3, 3)).copy_from(&d);
    let mut a2 = CMat::zeros(6, 6);
    a2.view_mut((0, 0), (3, 3)).copy_from(&b);
    a2.view_mut((3, 3), (3, 3)).copy_from(&b.conjugate());
    let u = haar_unitary(6, seed);
    let tuple = HermitianTuple::new(conjugate_all(&[a1, a2], &u))?;
    let descriptor = InstanceDescriptor {
        family: Family::ConjugateNegative,
        n: 3,
        k: 2,
        m: 2,
        seed,
        ground_truth: GroundTruth {
            expected: Overall::Fail,
            failing_word: Some("A2 P2 A2 P3 A2".into()),
            seed_tuple: None,
        },
    };
    Ok((tuple, descriptor))
}

/// Generators diagonal in one Haar basis; each of the `n` joint eigenvalue
/// vectors appears exactly `k` times. Every generator's `n` distinct values
/// obey the `SEED_GAP` floor.
pub fn gen_commuting(n: usize, k: usize, m: usize, seed: u64) -> Result<(HermitianTuple, InstanceDescriptor)> {
    check_sizes(n, k, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut joint: Vec<Vec<f64>> = Vec::with_capacity(m);
    for _ in 0..m {
        let values = (0..MAX_RESAMPLES)
            .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>())
            .find(|v| {
                let mut sorted = v.clone();
                sorted.sort_by(f64::total_cmp);
                well_separated(&sorted)
            })
            .expect("separated joint eigenvalues");
        joint.push(values);
    }
    let u = haar_unitary_from(n * k, &mut rng);
    let seed_mats: Vec<CMat> = joint.iter().map(|v| from_real_diagonal(v)).collect();
    let repeated: Vec<CMat> = joint
        .iter()
        .map(|v| {
            let expanded: Vec<f64> = v.iter().flat_map(|&x| std::iter::repeat_n(x, k)).collect();
            from_real_diagonal(&expanded)
        })
        .collect();
    let tuple = HermitianTuple::new(conjugate_all(&repeated, &u))?;
    let descriptor = InstanceDescriptor {
        family: Family::Commuting,
        n,
        k,
        m,
        seed,
        ground_truth: GroundTruth {
            expected: Overall::Pass,
            failing_word: None,
            seed_tuple: Some(seed_mats.iter().map(crate::io::matrix_to_data).collect()),
        },
    };
    Ok((tuple, descriptor))
}

/// Dispatch by family; the negative family ignores `n`, `k` and `m`.
pub fn generate(family: Family, n: usize, k: usize, m: usize, seed: u64) -> Result<(HermitianTuple, InstanceDescriptor)> {
    match family {
        Family::Decomposable => gen_decomposable(n, k, m, seed),
        Family::ConjugateNegative => gen_conjugate_negative(seed),
        Family::Commuting => gen_commuting(n, k, m, seed),
    }
}
