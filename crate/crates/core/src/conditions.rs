//! The word family, the per-word k-th-power test, admissibility and the
//! aggregate verdict.
//!
//! A word interleaves generators `A_s` (`s ≥ 2`) with distinct spectral
//! projections of `A₁`: `A_{s₁}𝒫_{j₁}A_{s₂}⋯𝒫_{j_r}A_{s_{r+1}}`, `r < n`.
//! A tuple splits into `k` identical copies exactly when the pencil
//! determinant of `(A₁, W)` is a `k`-th power for every such word, provided
//! the tuple is admissible. Admissibility can always be reached by a small
//! real change of variables, which `analyze` applies when needed.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charpoly::{branch_derivative, kth_power_test_with, sub_seeds, KPowerOptions, KPowerVerdict, DEFAULT_LINES};
use crate::config::Tolerances;
use crate::decomposer::{unimodular_fit, BlockStructure};
use crate::error::{PencilError, Result};
use crate::linalg::{eigendecompose_clustered, frobenius, CMat, HermitianTuple, SpectralData};

pub const DEFAULT_WORD_CAP: usize = 10_000;
pub const DEFAULT_MAX_TRIES: usize = 50;

/// One word, with one-based indices: `letters` are generator indices in
/// `2..=m`, `projections` are cluster indices in `1..=n`, pairwise distinct.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WordSpec {
    pub letters: Vec<usize>,
    pub projections: Vec<usize>,
}

impl WordSpec {
    pub fn r(&self) -> usize {
        self.projections.len()
    }
}

impl fmt::Display for WordSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, s) in self.letters.iter().enumerate() {
            if p > 0 {
                write!(f, " P{} ", self.projections[p - 1])?;
            }
            write!(f, "A{s}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordMode {
    /// Ordered projection tuples.
    #[default]
    All,
    /// Strictly increasing projection indices only.
    ProofCore,
}

impl std::str::FromStr for WordMode {
    type Err = PencilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(WordMode::All),
            "proof_core" => Ok(WordMode::ProofCore),
            other => Err(PencilError::InvalidArgument(format!("unknown word mode `{other}`"))),
        }
    }
}

fn projection_tuples(n: usize, r: usize, mode: WordMode) -> Vec<Vec<usize>> {
    fn extend(n: usize, r: usize, mode: WordMode, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == r {
            out.push(prefix.iter().map(|j| j + 1).collect());
            return;
        }
        let start = match (mode, prefix.last()) {
            (WordMode::ProofCore, Some(&last)) => last + 1,
            _ => 0,
        };
        for j in start..n {
            if !prefix.contains(&j) {
                prefix.push(j);
                extend(n, r, mode, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(n, r, mode, &mut Vec::with_capacity(r), &mut out);
    out
}

/// Words ordered by `r`, then projection tuple, then letters, both
/// lexicographically. Returns the words and whether `cap` cut the list short.
pub fn enumerate_words(n: usize, m: usize, mode: WordMode, cap: usize) -> (Vec<WordSpec>, bool) {
    let mut words = Vec::new();
    if n == 0 || m < 2 {
        return (words, false);
    }
    let alphabet = m - 1;
    for r in 0..n {
        for projections in projection_tuples(n, r, mode) {
            let total = alphabet.pow((r + 1) as u32);
            for code in 0..total {
                if words.len() == cap {
                    return (words, true);
                }
                let mut letters = vec![0; r + 1];
                let mut rest = code;
                for slot in letters.iter_mut().rev() {
                    *slot = rest % alphabet + 2;
                    rest /= alphabet;
                }
                words.push(WordSpec {
                    letters,
                    projections: projections.clone(),
                });
            }
        }
    }
    (words, false)
}

/// The matrix `A_{s₁}𝒫_{j₁}A_{s₂}⋯𝒫_{j_r}A_{s_{r+1}}`.
pub fn realize_word(tuple: &HermitianTuple, spec: &SpectralData, w: &WordSpec) -> Result<CMat> {
    let m = tuple.len();
    let n = spec.n();
    if w.letters.len() != w.projections.len() + 1 || w.letters.is_empty() {
        return Err(PencilError::InvalidArgument(format!("word `{w}` needs one more letter than projections")));
    }
    for &s in &w.letters {
        if !(2..=m).contains(&s) {
            return Err(PencilError::IndexOutOfRange { index: s, limit: m });
        }
    }
    for (p, &j) in w.projections.iter().enumerate() {
        if !(1..=n).contains(&j) {
            return Err(PencilError::IndexOutOfRange { index: j, limit: n });
        }
        if w.projections[..p].contains(&j) {
            return Err(PencilError::InvalidArgument(format!("word `{w}` repeats projection {j}")));
        }
    }
    let mut out = tuple.get(w.letters[0] - 1).clone();
    for (p, &j) in w.projections.iter().enumerate() {
        out = out * &spec.projections[j - 1] * tuple.get(w.letters[p + 1] - 1);
    }
    Ok(out)
}

/// k-th-power test of `det(x₁A₁ + x₂W − I)`.
pub fn check_word_condition(
    tuple: &HermitianTuple,
    spec: &SpectralData,
    w: &WordSpec,
    k: usize,
    n: usize,
    opts: &KPowerOptions,
    seed: u64,
) -> Result<KPowerVerdict> {
    let word = realize_word(tuple, spec, w)?;
    kth_power_test_with(&[tuple.get(0).clone(), word], k, n, opts, seed)
}

/// Cluster pattern of one generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorPattern {
    pub index: usize,
    pub cluster_sizes: Vec<usize>,
    pub min_separation: f64,
    pub min_modulus: f64,
    pub required: f64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub generators: Vec<GeneratorPattern>,
}

/// Each generator must be invertible with exactly `N/k` eigenvalue clusters
/// of size `k`, clusters and moduli at least `separation_tol·max(1, ‖A‖)`
/// apart from each other and from zero.
pub fn check_admissibility(tuple: &HermitianTuple, k: usize, tol: &Tolerances) -> AdmissibilityReport {
    let dim = tuple.dim();
    let n = if k > 0 && dim % k == 0 { dim / k } else { 0 };
    let generators: Vec<GeneratorPattern> = tuple
        .matrices()
        .iter()
        .enumerate()
        .map(|(l, a)| match eigendecompose_clustered(a, tol.gap_tol) {
            Ok(spec) => {
                let required = tol.separation_tol * spec.norm.max(1.0);
                let min_separation = spec.eigenvalues.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
                let min_modulus = spec.eigenvalues.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
                let pattern = n > 0 && spec.n() == n && spec.multiplicities.iter().all(|&s| s == k);
                GeneratorPattern {
                    index: l + 1,
                    ok: pattern && min_separation >= required && min_modulus >= required,
                    cluster_sizes: spec.multiplicities,
                    min_separation,
                    min_modulus,
                    required,
                    note: None,
                }
            }
            Err(e) => GeneratorPattern {
                index: l + 1,
                cluster_sizes: Vec::new(),
                min_separation: 0.0,
                min_modulus: 0.0,
                required: 0.0,
                ok: false,
                note: Some(e.to_string()),
            },
        })
        .collect();
    AdmissibilityReport {
        admissible: n > 0 && generators.iter().all(|g| g.ok),
        generators,
    }
}

/// Draws `C = I + radius·U[−1,1]^{m×m}` until the transformed tuple
/// `Â_j = Σ_s c_js A_s` is admissible.
pub fn sample_admissible(
    tuple: &HermitianTuple,
    k: usize,
    tol: &Tolerances,
    seed: u64,
    max_tries: usize,
) -> Result<(DMatrix<f64>, HermitianTuple)> {
    let radius = tol.admissible_radius;
    if !(radius > 0.0 && radius <= 0.5) {
        return Err(PencilError::InvalidArgument(format!("radius {radius} outside (0, 0.5]")));
    }
    let m = tuple.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_tries {
        let c = DMatrix::<f64>::identity(m, m) + DMatrix::from_fn(m, m, |_, _| radius * rng.random_range(-1.0..=1.0));
        if c.determinant().abs() <= 1e-10 {
            continue;
        }
        let candidate = tuple.transformed(&c)?;
        if check_admissibility(&candidate, k, tol).admissible {
            return Ok((c, candidate));
        }
    }
    Err(PencilError::AdmissibleSamplingFailed { tries: max_tries })
}

/// `‖𝒫_iA_l𝒫_i − c𝒫_i‖` with `c = −λ_i·∂x₁/∂x₂` read off the root branch
/// through `1/λ_i`. Indices are zero-based; `l ≥ 1` and `A₁` must be
/// invertible.
pub fn verify_first_order_identity(
    tuple: &HermitianTuple,
    spec: &SpectralData,
    i: usize,
    l: usize,
    fd_step: f64,
) -> Result<f64> {
    if l == 0 || l >= tuple.len() {
        return Err(PencilError::IndexOutOfRange { index: l, limit: tuple.len() });
    }
    let a1 = tuple.get(0);
    let al = tuple.get(l);
    let slope = branch_derivative(a1, al, spec, i, fd_step)?;
    let c = -slope * spec.eigenvalues[i];
    let p = &spec.projections[i];
    Ok(frobenius(&(p * al * p - p * c)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleCheck {
    pub theta: f64,
    pub residual: f64,
}

/// Phase and scalar residual of `u_{j₀j₁}u_{j₁j₂}⋯u_{j_rj₀}` for a cycle of
/// zero-based indices whose edges all carry a non-zero block.
pub fn verify_cycle_identity(bs: &BlockStructure, cycle: &[usize]) -> Result<CycleCheck> {
    if cycle.is_empty() {
        return Err(PencilError::InvalidArgument("empty cycle".into()));
    }
    if let Some(&bad) = cycle.iter().find(|&&j| j >= bs.n) {
        return Err(PencilError::IndexOutOfRange { index: bad, limit: bs.n });
    }
    let mut product = crate::linalg::identity(bs.k);
    for (p, &a) in cycle.iter().enumerate() {
        let b = cycle[(p + 1) % cycle.len()];
        if a == b {
            continue;
        }
        if !bs.linked.contains(&(a, b)) {
            return Err(PencilError::ZeroCoefficientOnCycle { i: a + 1, j: b + 1 });
        }
        product *= bs.unitary(a, b);
    }
    let (theta, residual) = unimodular_fit(&product);
    Ok(CycleCheck { theta, residual })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overall {
    Pass,
    Fail,
    PreconditionViolated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub mode: WordMode,
    pub cap: usize,
    pub lines: usize,
    pub seed: u64,
    pub max_tries: usize,
    pub tolerances: Tolerances,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            mode: WordMode::All,
            cap: DEFAULT_WORD_CAP,
            lines: DEFAULT_LINES,
            seed: 0,
            max_tries: DEFAULT_MAX_TRIES,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordResult {
    pub word: WordSpec,
    pub label: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<KPowerVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub dim: usize,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub precondition_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precondition_detail: Option<String>,
    pub a1_cluster_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_tuple: Option<KPowerVerdict>,
    /// Diagonal shifts applied to singular generators before testing.
    pub shifts: Vec<f64>,
    pub admissible_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admissibility: Option<AdmissibilityReport>,
    /// Change of variables used when the shifted tuple was not admissible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<Vec<Vec<f64>>>,
    pub words_truncated: bool,
    pub word_results: Vec<WordResult>,
    pub failing_words: Vec<String>,
    /// Numerical failures encountered along the way.
    pub errors: Vec<String>,
    pub overall: Overall,
}

impl ConditionReport {
    fn empty(tuple: &HermitianTuple, k: usize) -> Self {
        Self {
            dim: tuple.dim(),
            n: if k > 0 { tuple.dim() / k } else { 0 },
            k,
            m: tuple.len(),
            precondition_ok: false,
            precondition_detail: None,
            a1_cluster_sizes: Vec::new(),
            full_tuple: None,
            shifts: Vec::new(),
            admissible_ok: false,
            admissibility: None,
            transform: None,
            words_truncated: false,
            word_results: Vec::new(),
            failing_words: Vec::new(),
            errors: Vec::new(),
            overall: Overall::PreconditionViolated,
        }
    }

    fn violated(mut self, detail: String) -> Self {
        self.precondition_ok = false;
        self.precondition_detail = Some(detail);
        self.overall = Overall::PreconditionViolated;
        self
    }
}

/// Full decision procedure. Never fails: numerical problems are recorded in
/// `errors` and make the verdict `Fail`.
///
/// Singular generators are shifted by a multiple of `I` first, which moves
/// no invariant subspace. If the shifted tuple is not admissible a seeded
/// admissible change of variables is applied, and the words are built from
/// the resulting tuple.
pub fn analyze(tuple: &HermitianTuple, k: usize, opts: &AnalyzeOptions) -> ConditionReport {
    let tol = &opts.tolerances;
    let mut report = ConditionReport::empty(tuple, k);
    let dim = tuple.dim();
    if k == 0 || dim % k != 0 {
        return report.violated(format!("dimension {dim} is not a multiple of k = {k}"));
    }
    let n = dim / k;
    let seeds = sub_seeds(opts.seed, 3);
    let kopts = KPowerOptions {
        lines: opts.lines,
        cluster_rel_tol: tol.cluster_rel_tol,
    };

    let (shifted, shifts) = tuple.shifted_invertible();
    report.shifts = shifts;

    match eigendecompose_clustered(shifted.get(0), tol.gap_tol) {
        Ok(spec) => {
            report.a1_cluster_sizes = spec.multiplicities.clone();
            if spec.n() != n || spec.multiplicities.iter().any(|&s| s != k) {
                return report.violated(format!(
                    "A1 has cluster sizes {:?}, expected {n} clusters of size {k}",
                    spec.multiplicities
                ));
            }
        }
        Err(e) => return report.violated(format!("A1: {e}")),
    }

    match kth_power_test_with(shifted.matrices(), k, n, &kopts, seeds[0]) {
        Ok(v) => {
            let ok = v.is_kth_power;
            report.full_tuple = Some(v);
            if !ok {
                return report.violated(format!("the full pencil determinant is not a {k}-th power"));
            }
        }
        Err(e) => {
            report.errors.push(format!("full tuple: {e}"));
            report.overall = Overall::Fail;
            return report;
        }
    }
    report.precondition_ok = true;

    let first = check_admissibility(&shifted, k, tol);
    let working = if first.admissible {
        report.admissible_ok = true;
        report.admissibility = Some(first);
        shifted
    } else {
        report.admissibility = Some(first);
        match sample_admissible(&shifted, k, tol, seeds[1], opts.max_tries) {
            Ok((c, t)) => {
                report.admissible_ok = true;
                report.transform = Some(c.row_iter().map(|r| r.iter().copied().collect()).collect());
                report.admissibility = Some(check_admissibility(&t, k, tol));
                t
            }
            Err(e) => {
                report.errors.push(e.to_string());
                report.overall = Overall::Fail;
                return report;
            }
        }
    };

    let spec = match eigendecompose_clustered(working.get(0), tol.gap_tol) {
        Ok(s) => s,
        Err(e) => {
            report.errors.push(format!("transformed A1: {e}"));
            report.overall = Overall::Fail;
            return report;
        }
    };
    let (words, truncated) = enumerate_words(n, working.len(), opts.mode, opts.cap);
    report.words_truncated = truncated;
    let word_seeds = sub_seeds(seeds[2], words.len());
    report.word_results = words
        .into_par_iter()
        .zip(word_seeds)
        .map(|(word, seed)| {
            let label = word.to_string();
            match check_word_condition(&working, &spec, &word, k, n, &kopts, seed) {
                Ok(v) => WordResult {
                    passed: v.is_kth_power,
                    word,
                    label,
                    verdict: Some(v),
                    error: None,
                },
                Err(e) => WordResult {
                    passed: false,
                    word,
                    label,
                    verdict: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    for w in &report.word_results {
        if let Some(e) = &w.error {
            report.errors.push(format!("{}: {e}", w.label));
        }
    }
    report.failing_words = report.word_results.iter().filter(|w| !w.passed).map(|w| w.label.clone()).collect();
    report.overall = if report.failing_words.is_empty() && report.errors.is_empty() {
        Overall::Pass
    } else {
        Overall::Fail
    };
    report
}
