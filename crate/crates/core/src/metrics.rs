//! Ground-truth vs perceived distances, traversal distance matrices,
//! Spearman rank correlation of distances, and the mutual information gap.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::gridworld::{enumerate_states, render, FactorState, GridSpec, DEFAULT_STATE_CAP};
use crate::latentmodel::{latent_distance, reconstruction_loss, LatentDistance};

/// Anything that maps states to latent representatives (posterior means).
/// Hand-built encoders implement this directly in tests; the trained
/// model renders and encodes.
pub trait LatentMap: Sync {
    fn latent_dim(&self) -> usize;

    /// Latent means for each state, in order.
    fn encode_states(&self, spec: &GridSpec, states: &[FactorState]) -> Result<Vec<Vec<f64>>>;
}

/// Manhattan distance between the underlying factor vectors.
pub fn ground_truth_distance(a: &FactorState, b: &FactorState) -> Result<u32> {
    if a.positions.len() != b.positions.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} squares", a.positions.len()),
            actual: format!("{}", b.positions.len()),
        });
    }
    Ok(a.factors()
        .iter()
        .zip(b.factors())
        .map(|(&x, y)| x.abs_diff(y))
        .sum())
}

/// Pixel-space distance as measured by the reconstruction loss (summed
/// squared error). Symmetric, zero on identical observations.
pub fn perceived_distance(
    a: &crate::gridworld::Observation,
    b: &crate::gridworld::Observation,
) -> Result<f64> {
    reconstruction_loss(a, b)
}

/// Square, symmetric, zero-diagonal matrix of distances over an ordered
/// state list.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    pub values: Array2<f64>,
    pub labels: Vec<FactorState>,
}

impl DistanceMatrix {
    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.values.dim() != (n, n) {
            return Err(Error::ShapeMismatch {
                expected: format!("({n}, {n})"),
                actual: format!("{:?}", self.values.dim()),
            });
        }
        for i in 0..n {
            if self.values[(i, i)] != 0.0 {
                return Err(Error::Degenerate("non-zero diagonal".into()));
            }
            for j in 0..i {
                let (a, b) = (self.values[(i, j)], self.values[(j, i)]);
                if a != b || a < 0.0 {
                    return Err(Error::Degenerate("asymmetric or negative entry".into()));
                }
            }
        }
        Ok(())
    }

    /// Strict upper-triangle entries, row-major.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let n = self.labels.len();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                out.push(self.values[(i, j)]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    GroundTruth,
    Perceived,
    Latent,
}

/// States along the traversal of one factor, all other factors held at 0.
pub fn traversal_states(spec: &GridSpec, factor_index: usize) -> Result<Vec<FactorState>> {
    if factor_index >= spec.num_factors() {
        return Err(Error::Precondition(format!(
            "factor_index {factor_index} out of range for {} factors",
            spec.num_factors()
        )));
    }
    let mut out = Vec::with_capacity(spec.grid_cells_per_axis);
    for v in 0..spec.grid_cells_per_axis as u32 {
        let mut factors = vec![0u32; spec.num_factors()];
        factors[factor_index] = v;
        let positions = factors.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        out.push(FactorState::new(positions));
    }
    Ok(out)
}

/// Pairwise distances over the traversal of one factor. `Latent` requires
/// a model and a latent distance.
pub fn traversal_distance_matrix(
    spec: &GridSpec,
    factor_index: usize,
    kind: DistanceKind,
    latent: Option<(&dyn LatentMap, LatentDistance)>,
) -> Result<DistanceMatrix> {
    let states = traversal_states(spec, factor_index)?;
    let n = states.len();
    let mut values = Array2::zeros((n, n));
    match kind {
        DistanceKind::GroundTruth => {
            for i in 0..n {
                for j in 0..n {
                    values[(i, j)] = ground_truth_distance(&states[i], &states[j])? as f64;
                }
            }
        }
        DistanceKind::Perceived => {
            let images = exec::map(&states, |s| render(s, spec));
            let images: Vec<_> = images.into_iter().collect::<Result<_>>()?;
            let rows = exec::map_range(n, |i| {
                let mut row = vec![0.0; n];
                for j in 0..n {
                    row[j] = perceived_distance(&images[i], &images[j]).expect("same shapes");
                }
                row
            });
            for (i, row) in rows.into_iter().enumerate() {
                for (j, v) in row.into_iter().enumerate() {
                    values[(i, j)] = v;
                }
            }
        }
        DistanceKind::Latent => {
            let (map, dist_kind) = latent.ok_or_else(|| {
                Error::Precondition("latent traversal matrix needs a model".into())
            })?;
            let codes = map.encode_states(spec, &states)?;
            for i in 0..n {
                for j in 0..n {
                    values[(i, j)] = latent_distance(&codes[i], &codes[j], dist_kind);
                }
            }
        }
    }
    let matrix = DistanceMatrix { values, labels: states };
    matrix.validate()?;
    Ok(matrix)
}

/// Average ranks with ties sharing their midrank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = midrank;
        }
        i = j + 1;
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        dx += (x - mx) * (x - mx);
        dy += (y - my) * (y - my);
    }
    if dx == 0.0 || dy == 0.0 {
        return Err(Error::Degenerate(
            "rank correlation undefined: at least one list is constant".into(),
        ));
    }
    Ok(num / (dx * dy).sqrt())
}

/// Spearman rank correlation with average-rank tie handling. Errors with
/// [`Error::Degenerate`] when either list is constant rather than
/// reporting a silent zero.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Precondition("spearman needs two equal lists of length >= 2".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Precondition("spearman needs finite values".into()));
    }
    pearson(&ranks(xs), &ranks(ys))
}

/// Spearman correlation between ground-truth factor distances and latent
/// distances over `num_pairs` sampled state pairs.
pub fn distance_rank_correlation(
    map: &dyn LatentMap,
    spec: &GridSpec,
    states: &[FactorState],
    distance: LatentDistance,
    num_pairs: usize,
    seed: u64,
) -> Result<f64> {
    if states.len() < 2 {
        return Err(Error::Precondition("need at least 2 states".into()));
    }
    if num_pairs == 0 {
        return Err(Error::Precondition("need at least 1 pair".into()));
    }
    let codes = map.encode_states(spec, states)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gt = Vec::with_capacity(num_pairs);
    let mut lat = Vec::with_capacity(num_pairs);
    for _ in 0..num_pairs {
        let i = rng.random_range(0..states.len());
        let mut j = rng.random_range(0..states.len());
        while j == i {
            j = rng.random_range(0..states.len());
        }
        gt.push(ground_truth_distance(&states[i], &states[j])? as f64);
        lat.push(latent_distance(&codes[i], &codes[j], distance));
    }
    spearman(&gt, &lat)
}

/// Mutual information gap report.
#[derive(Debug, Clone)]
pub struct MigReport {
    /// Mean normalised gap over included factors, in [0, 1].
    pub mig_score: f64,
    /// Normalised top1 - top2 gap per factor (0 for excluded factors).
    pub per_factor_gaps: Vec<f64>,
    /// Mutual information in nats, `(factor, latent)`.
    pub mutual_info: Array2<f64>,
    /// Empirical factor entropies in nats.
    pub factor_entropies: Vec<f64>,
    /// Factors skipped because their empirical entropy is zero.
    pub excluded_factors: Vec<usize>,
}

/// Equal-frequency bin assignment. Cut points sit at sorted quantile
/// positions; assignment compares values against cuts, so ties always land
/// in the same bin.
fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut cuts = Vec::with_capacity(bins.saturating_sub(1));
    for k in 1..bins {
        let idx = (k * n) / bins;
        if idx < n {
            cuts.push(sorted[idx]);
        }
    }
    cuts.dedup();
    values
        .iter()
        .map(|&v| cuts.iter().filter(|&&c| c <= v).count())
        .collect()
}

/// Discrete mutual information in nats from two label sequences.
fn discrete_mutual_information(xs: &[usize], ys: &[usize], nx: usize, ny: usize) -> f64 {
    let n = xs.len() as f64;
    let mut joint = vec![0.0f64; nx * ny];
    let mut px = vec![0.0f64; nx];
    let mut py = vec![0.0f64; ny];
    for (&x, &y) in xs.iter().zip(ys) {
        joint[x * ny + y] += 1.0;
        px[x] += 1.0;
        py[y] += 1.0;
    }
    let mut mi = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            let j = joint[x * ny + y];
            if j > 0.0 {
                mi += (j / n) * ((j * n) / (px[x] * py[y])).ln();
            }
        }
    }
    mi.max(0.0)
}

fn entropy(labels: &[usize], n_values: usize) -> f64 {
    let n = labels.len() as f64;
    let mut counts = vec![0.0f64; n_values];
    for &l in labels {
        counts[l] += 1.0;
    }
    -counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| (c / n) * (c / n).ln())
        .sum::<f64>()
}

/// Mutual information gap: discretise each latent into equal-frequency
/// bins, compute discrete MI against every ground-truth factor, and
/// average the normalised top-1 minus top-2 gap over factors.
///
/// `samples == 0` evaluates over the exhaustive state enumeration;
/// otherwise `samples` states are drawn uniformly (with repetition) from
/// the state space.
pub fn mig(
    map: &dyn LatentMap,
    spec: &GridSpec,
    bins: usize,
    samples: usize,
    seed: u64,
) -> Result<MigReport> {
    if bins < 2 {
        return Err(Error::Precondition("bins must be >= 2".into()));
    }
    let states: Vec<FactorState> = if samples == 0 {
        enumerate_states(spec, DEFAULT_STATE_CAP)?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = spec.grid_cells_per_axis as u32;
        (0..samples)
            .map(|_| {
                let positions = (0..spec.num_squares)
                    .map(|_| (rng.random_range(0..cells), rng.random_range(0..cells)))
                    .collect();
                FactorState::new(positions)
            })
            .collect()
    };
    let codes = map.encode_states(spec, &states)?;
    let latent_dim = map.latent_dim();
    let num_factors = spec.num_factors();
    let cells = spec.grid_cells_per_axis;

    // Bin every latent dimension.
    let latent_bins: Vec<Vec<usize>> = exec::map_range(latent_dim, |j| {
        let column: Vec<f64> = codes.iter().map(|c| c[j]).collect();
        equal_frequency_bins(&column, bins)
    });
    let factor_values: Vec<Vec<usize>> = (0..num_factors)
        .map(|k| states.iter().map(|s| s.factors()[k] as usize).collect())
        .collect();

    let mut mutual_info = Array2::zeros((num_factors, latent_dim));
    for k in 0..num_factors {
        for j in 0..latent_dim {
            mutual_info[(k, j)] =
                discrete_mutual_information(&latent_bins[j], &factor_values[k], bins, cells);
        }
    }

    let mut per_factor_gaps = vec![0.0; num_factors];
    let mut factor_entropies = vec![0.0; num_factors];
    let mut excluded = Vec::new();
    let mut included_gaps = Vec::new();
    for k in 0..num_factors {
        let h = entropy(&factor_values[k], cells);
        factor_entropies[k] = h;
        if h <= 0.0 {
            excluded.push(k);
            continue;
        }
        let mut mis: Vec<f64> = (0..latent_dim).map(|j| mutual_info[(k, j)]).collect();
        mis.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        let gap = if mis.len() >= 2 { (mis[0] - mis[1]) / h } else { mis[0] / h };
        per_factor_gaps[k] = gap;
        included_gaps.push(gap);
    }
    if included_gaps.is_empty() {
        return Err(Error::Degenerate("every factor has zero entropy".into()));
    }
    let mig_score = included_gaps.iter().sum::<f64>() / included_gaps.len() as f64;
    Ok(MigReport { mig_score, per_factor_gaps, mutual_info, factor_entropies, excluded_factors: excluded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    struct FactorEncoder {
        dim: usize,
        scale: f64,
    }

    impl LatentMap for FactorEncoder {
        fn latent_dim(&self) -> usize {
            self.dim
        }

        fn encode_states(&self, _spec: &GridSpec, states: &[FactorState]) -> Result<Vec<Vec<f64>>> {
            Ok(states
                .iter()
                .map(|s| {
                    let mut z: Vec<f64> =
                        s.factors().iter().map(|&f| self.scale * f as f64).collect();
                    z.resize(self.dim, 0.0);
                    z
                })
                .collect())
        }
    }

    struct ConstantEncoder;

    impl LatentMap for ConstantEncoder {
        fn latent_dim(&self) -> usize {
            3
        }

        fn encode_states(&self, _spec: &GridSpec, states: &[FactorState]) -> Result<Vec<Vec<f64>>> {
            Ok(states.iter().map(|_| vec![1.0, 2.0, 3.0]).collect())
        }
    }

    fn spec8(step_px: usize) -> GridSpec {
        GridSpec::new(1, 8, step_px, 8, 64).unwrap()
    }

    #[test]
    fn ground_truth_distance_examples() {
        let a = FactorState::single(0, 0);
        assert_eq!(ground_truth_distance(&a, &a).unwrap(), 0);
        assert_eq!(ground_truth_distance(&a, &FactorState::single(3, 4)).unwrap(), 7);
        let s1 = FactorState::new(vec![(0, 0), (1, 1), (2, 2)]);
        let s2 = FactorState::new(vec![(1, 1), (2, 2), (3, 3)]);
        assert_eq!(ground_truth_distance(&s1, &s2).unwrap(), 6);
        assert!(ground_truth_distance(&a, &s1).is_err());
    }

    #[test]
    fn ground_truth_distance_triangle_inequality() {
        let states = enumerate_states(&GridSpec::new(1, 2, 2, 3, 8).unwrap(), 1000).unwrap();
        for a in &states {
            for b in &states {
                for c in &states {
                    let ab = ground_truth_distance(a, b).unwrap();
                    let bc = ground_truth_distance(b, c).unwrap();
                    let ac = ground_truth_distance(a, c).unwrap();
                    assert!(ac <= ab + bc);
                }
            }
        }
    }

    #[test]
    fn perceived_distance_no_overlap_is_two_squares() {
        let spec = spec8(8);
        let a = render(&FactorState::single(0, 0), &spec).unwrap();
        let b = render(&FactorState::single(1, 0), &spec).unwrap();
        assert_eq!(perceived_distance(&a, &b).unwrap(), 128.0);
        assert_eq!(perceived_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn perceived_distance_half_overlap() {
        let spec = GridSpec::new(1, 8, 4, 8, 64).unwrap();
        let a = render(&FactorState::single(2, 3), &spec).unwrap();
        let b = render(&FactorState::single(3, 3), &spec).unwrap();
        assert_eq!(perceived_distance(&a, &b).unwrap(), 64.0);
    }

    /// Perceived distance is monotone non-increasing in pixel overlap,
    /// checked exhaustively on a small spec.
    #[test]
    fn perceived_distance_monotone_in_overlap() {
        let spec = GridSpec::new(1, 4, 2, 4, 16).unwrap();
        let states = enumerate_states(&spec, 1000).unwrap();
        let imgs: Vec<_> = states.iter().map(|s| render(s, &spec).unwrap()).collect();
        for i in 0..states.len() {
            for j in 0..states.len() {
                let overlap: f64 = imgs[i]
                    .iter()
                    .zip(imgs[j].iter())
                    .filter(|(&a, &b)| a > 0.0 && b > 0.0)
                    .count() as f64;
                let d = perceived_distance(&imgs[i], &imgs[j]).unwrap();
                assert_relative_eq!(d, 2.0 * (16.0 - overlap), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn traversal_ground_truth_is_absolute_difference() {
        let m = traversal_distance_matrix(&spec8(8), 0, DistanceKind::GroundTruth, None).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(m.values[(i, j)], (i as f64 - j as f64).abs());
            }
        }
    }

    #[test]
    fn traversal_perceived_constant_without_overlap() {
        let m = traversal_distance_matrix(&spec8(8), 1, DistanceKind::Perceived, None).unwrap();
        let off = m.off_diagonal();
        assert!(off.iter().all(|&v| v == 128.0));
    }

    #[test]
    fn traversal_perceived_increases_with_gap_at_step1() {
        let m = traversal_distance_matrix(&spec8(1), 0, DistanceKind::Perceived, None).unwrap();
        // Row 0: strictly increasing until overlap vanishes (|i-j| >= 8,
        // beyond this 8-cell traversal).
        for j in 2..8 {
            assert!(m.values[(0, j)] > m.values[(0, j - 1)]);
        }
    }

    #[test]
    fn traversal_latent_requires_model() {
        let err = traversal_distance_matrix(&spec8(1), 0, DistanceKind::Latent, None).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn spearman_basics() {
        assert_relative_eq!(
            spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            spearman(&[1.0, 2.0, 3.0], &[5.0, 1.0, -2.0]).unwrap(),
            -1.0,
            max_relative = 1e-12
        );
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn rank_correlation_perfect_for_factor_encoder() {
        let spec = spec8(8);
        let states = enumerate_states(&spec, 1000).unwrap();
        let enc = FactorEncoder { dim: 4, scale: 1.0 };
        let r = distance_rank_correlation(&enc, &spec, &states, LatentDistance::L1, 2000, 0)
            .unwrap();
        assert_relative_eq!(r, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn rank_correlation_scaled_negated_factors_still_perfect() {
        let spec = spec8(8);
        let states = enumerate_states(&spec, 1000).unwrap();
        let enc = FactorEncoder { dim: 4, scale: -2.0 };
        let r = distance_rank_correlation(&enc, &spec, &states, LatentDistance::L1, 2000, 1)
            .unwrap();
        assert_relative_eq!(r, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn rank_correlation_degenerate_for_constant_encoder() {
        let spec = spec8(8);
        let states = enumerate_states(&spec, 1000).unwrap();
        let r = distance_rank_correlation(&ConstantEncoder, &spec, &states, LatentDistance::L1, 500, 2);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn equal_frequency_bins_keep_ties_together() {
        let values = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0];
        let bins = equal_frequency_bins(&values, 4);
        for (v, b) in values.iter().zip(&bins) {
            let first = values.iter().position(|x| x == v).unwrap();
            assert_eq!(bins[first], *b);
        }
        // Distinct values in distinct bins here.
        assert!(bins[0] != bins[3] && bins[3] != bins[6]);
    }

    #[test]
    fn mig_perfect_encoder_saturates() {
        let spec = spec8(8);
        let enc = FactorEncoder { dim: 4, scale: 1.0 };
        let report = mig(&enc, &spec, 20, 0, 0).unwrap();
        assert!(report.mig_score > 0.95, "mig = {}", report.mig_score);
        assert!(report.excluded_factors.is_empty());
    }

    #[test]
    fn mig_duplicated_latent_kills_the_gap() {
        // Two latents both equal to factor 0: gap for factor 0 collapses.
        struct Dup;
        impl LatentMap for Dup {
            fn latent_dim(&self) -> usize {
                3
            }
            fn encode_states(&self, _s: &GridSpec, states: &[FactorState]) -> Result<Vec<Vec<f64>>> {
                Ok(states
                    .iter()
                    .map(|s| {
                        let f = s.factors();
                        vec![f[0] as f64, f[0] as f64, f[1] as f64]
                    })
                    .collect())
            }
        }
        let spec = spec8(8);
        let report = mig(&Dup, &spec, 20, 0, 0).unwrap();
        assert!(report.per_factor_gaps[0].abs() < 1e-9);
        assert!(report.per_factor_gaps[1] > 0.9);
    }

    #[test]
    fn mig_in_unit_interval_and_permutation_invariant() {
        let spec = spec8(8);
        struct Permuted;
        impl LatentMap for Permuted {
            fn latent_dim(&self) -> usize {
                4
            }
            fn encode_states(&self, _s: &GridSpec, states: &[FactorState]) -> Result<Vec<Vec<f64>>> {
                Ok(states
                    .iter()
                    .map(|s| {
                        let f = s.factors();
                        vec![0.0, f[1] as f64, f[0] as f64, 0.0]
                    })
                    .collect())
            }
        }
        let base = mig(&FactorEncoder { dim: 4, scale: 1.0 }, &spec, 20, 0, 0).unwrap();
        let perm = mig(&Permuted, &spec, 20, 0, 0).unwrap();
        assert!(base.mig_score >= 0.0 && base.mig_score <= 1.0);
        assert_relative_eq!(base.mig_score, perm.mig_score, max_relative = 1e-9);
    }

    /// MIG is invariant under strictly monotone per-latent transforms, up
    /// to the binning tolerance (equal-frequency bins only see order).
    #[test]
    fn mig_invariant_under_monotone_transform() {
        let spec = spec8(8);
        struct Warped;
        impl LatentMap for Warped {
            fn latent_dim(&self) -> usize {
                4
            }
            fn encode_states(&self, _s: &GridSpec, states: &[FactorState]) -> Result<Vec<Vec<f64>>> {
                Ok(states
                    .iter()
                    .map(|s| {
                        let f = s.factors();
                        vec![(f[0] as f64).exp(), (f[1] as f64 + 1.0).powi(3), 0.0, 0.0]
                    })
                    .collect())
            }
        }
        let base = mig(&FactorEncoder { dim: 4, scale: 1.0 }, &spec, 20, 0, 0).unwrap();
        let warped = mig(&Warped, &spec, 20, 0, 0).unwrap();
        assert_relative_eq!(base.mig_score, warped.mig_score, max_relative = 1e-9);
    }

    proptest! {
        /// Spearman is invariant under strictly increasing transforms of
        /// either list.
        #[test]
        fn spearman_monotone_invariance(mut xs in proptest::collection::vec(-50.0f64..50.0, 5..40)) {
            // De-duplicate to keep the test focused on the invariance.
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs.dedup();
            prop_assume!(xs.len() >= 3);
            let ys: Vec<f64> = xs.iter().map(|&x| x * 0.5 - 3.0).collect();
            let r1 = spearman(&xs, &ys).unwrap();
            let transformed: Vec<f64> = xs.iter().map(|&x| (x * 0.1).exp()).collect();
            let r2 = spearman(&transformed, &ys).unwrap();
            prop_assert!((r1 - r2).abs() < 1e-9);
        }

        /// Traversal matrices are symmetric with zero diagonal for every
        /// factor and spacing.
        #[test]
        fn traversal_matrix_invariants(step in 1usize..=8, factor in 0usize..2) {
            let spec = GridSpec::new(1, 8, step, 8, 7 * step + 8).unwrap();
            let m = traversal_distance_matrix(&spec, factor, DistanceKind::Perceived, None).unwrap();
            prop_assert!(m.validate().is_ok());
        }
    }
}
