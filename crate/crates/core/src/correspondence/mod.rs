//! Permutation-invariant comparison of spatial map sets.
//!
//! Two map sets are compared by the mean absolute correlation of their
//! best one-to-one assignment. Multi-run comparison concatenates the maps
//! of `l` runs on each side before matching.

mod hungarian;

pub use hungarian::{solve_max, solve_min};

use nalgebra::{DMatrix, DVectorView};

use crate::error::{Error, Result};

/// Columns are spatial maps; `run_labels[j]` names the run of column `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSet {
    pub maps: DMatrix<f64>,
    pub run_labels: Vec<String>,
}

impl MapSet {
    pub fn new(maps: DMatrix<f64>, run_labels: Vec<String>) -> Result<Self> {
        if run_labels.len() != maps.ncols() {
            return Err(Error::dim(format!(
                "{} run labels for {} maps",
                run_labels.len(),
                maps.ncols()
            )));
        }
        Ok(Self { maps, run_labels })
    }

    /// All columns from one run labelled `run0`.
    pub fn single(maps: DMatrix<f64>) -> Self {
        Self::from_run(maps, "run0")
    }

    pub fn from_run(maps: DMatrix<f64>, label: &str) -> Self {
        let run_labels = vec![label.to_owned(); maps.ncols()];
        Self { maps, run_labels }
    }

    pub fn p(&self) -> usize {
        self.maps.nrows()
    }

    pub fn len(&self) -> usize {
        self.maps.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.ncols() == 0
    }

    /// Column-wise concatenation `[V_1, V_2, ...]`.
    pub fn concat(sets: &[MapSet]) -> Result<MapSet> {
        let first = sets.first().ok_or_else(|| Error::Usage("no map sets to concatenate".into()))?;
        let p = first.p();
        let mut q = 0;
        for s in sets {
            if s.p() != p {
                return Err(Error::dim(format!("map sets have p = {p} and p = {}", s.p())));
            }
            q += s.len();
        }
        let mut maps = DMatrix::zeros(p, q);
        let mut labels = Vec::with_capacity(q);
        let mut at = 0;
        for s in sets {
            maps.columns_mut(at, s.len()).copy_from(&s.maps);
            labels.extend(s.run_labels.iter().cloned());
            at += s.len();
        }
        Ok(MapSet { maps, run_labels: labels })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub i: usize,
    pub j: usize,
    pub corr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub pairs: Vec<MatchedPair>,
    pub mean_corr: f64,
}

/// `|v0ᵀv| / (‖v0‖‖v‖)`, defined as 0 when either column is zero.
pub fn corr(v0: DVectorView<'_, f64>, v: DVectorView<'_, f64>) -> Result<f64> {
    if v0.len() != v.len() {
        return Err(Error::dim(format!("maps have lengths {} and {}", v0.len(), v.len())));
    }
    let (n0, n) = (v0.norm(), v.norm());
    if n0 == 0.0 || n == 0.0 {
        return Ok(0.0);
    }
    Ok((v0.dot(&v).abs() / (n0 * n)).min(1.0))
}

/// `q₀ × q` matrix of absolute correlations, row-major.
pub fn correlation_matrix(a: &MapSet, b: &MapSet) -> Result<Vec<f64>> {
    if a.p() != b.p() {
        return Err(Error::dim(format!(
            "map sets have different voxel counts: p = {} vs p = {}",
            a.p(),
            b.p()
        )));
    }
    let normalize = |m: &DMatrix<f64>| {
        let mut m = m.clone();
        for mut c in m.column_iter_mut() {
            let n = c.norm();
            if n > 0.0 {
                c /= n;
            }
        }
        m
    };
    let (na, nb) = (normalize(&a.maps), normalize(&b.maps));
    let g = na.tr_mul(&nb);
    let mut out = Vec::with_capacity(g.len());
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            out.push(g[(i, j)].abs().min(1.0));
        }
    }
    Ok(out)
}

/// Best one-to-one assignment between the columns of `a` and `b`.
pub fn match_maps(a: &MapSet, b: &MapSet) -> Result<Matching> {
    let w = correlation_matrix(a, b)?;
    let (q0, q) = (a.len(), b.len());
    let pairs: Vec<MatchedPair> = solve_max(&w, q0, q)
        .into_iter()
        .map(|(i, j)| MatchedPair { i, j, corr: w[i * q + j] })
        .collect();
    let mean_corr = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().map(|p| p.corr).sum::<f64>() / pairs.len() as f64
    };
    Ok(Matching { pairs, mean_corr })
}

/// Mean best-assignment correlation `d(A, B)`.
pub fn d(a: &MapSet, b: &MapSet) -> Result<f64> {
    Ok(match_maps(a, b)?.mean_corr)
}

/// Groups needed before a dispersion is reported.
pub const MIN_GROUPS_FOR_DISPERSION: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    /// Mean over reference groups of the concatenated-run matching.
    pub value: f64,
    /// Population standard deviation over reference groups, when at least
    /// [`MIN_GROUPS_FOR_DISPERSION`] groups exist.
    pub dispersion: Option<f64>,
    pub group_values: Vec<f64>,
    /// Matching against the first reference group.
    pub matching: Matching,
}

/// Multi-run correspondence `d_l`.
///
/// `l` is the number of candidate runs. The reference runs are split into
/// consecutive groups of `l` (a trailing partial group is ignored); each
/// group is concatenated and matched against the concatenated candidates.
pub fn d_l(reference_runs: &[MapSet], candidate_runs: &[MapSet]) -> Result<Correspondence> {
    if reference_runs.is_empty() || candidate_runs.is_empty() {
        return Err(Error::Usage("d_l needs nonempty reference and candidate run lists".into()));
    }
    let l = candidate_runs.len();
    if reference_runs.len() < l {
        return Err(Error::Usage(format!(
            "d_l with l = {l} candidate runs needs at least {l} reference runs, got {}",
            reference_runs.len()
        )));
    }
    let groups: Vec<&[MapSet]> = reference_runs.chunks_exact(l).collect();
    d_l_grouped(&groups, candidate_runs)
}

/// `d_l` against explicit reference groups (each of any size).
pub fn d_l_grouped(groups: &[&[MapSet]], candidate_runs: &[MapSet]) -> Result<Correspondence> {
    if groups.is_empty() || candidate_runs.is_empty() {
        return Err(Error::Usage("d_l needs nonempty reference and candidate run lists".into()));
    }
    let cand = MapSet::concat(candidate_runs)?;
    let mut values = Vec::with_capacity(groups.len());
    let mut first = None;
    for g in groups {
        let reference = MapSet::concat(g)?;
        let m = match_maps(&reference, &cand)?;
        values.push(m.mean_corr);
        first.get_or_insert(m);
    }
    let n = values.len() as f64;
    let value = values.iter().sum::<f64>() / n;
    let dispersion = (values.len() >= MIN_GROUPS_FOR_DISPERSION)
        .then(|| (values.iter().map(|v| (v - value).powi(2)).sum::<f64>() / n).sqrt());
    Ok(Correspondence {
        value,
        dispersion,
        group_values: values,
        matching: first.expect("at least one group"),
    })
}

/// The matched pair at the (lower) median correlation of the matching.
pub fn median_matched_pair(a: &MapSet, b: &MapSet) -> Result<MatchedPair> {
    let m = match_maps(a, b)?;
    median_of(&m).ok_or_else(|| Error::Usage("empty matching has no median".into()))
}

pub fn median_of(m: &Matching) -> Option<MatchedPair> {
    if m.pairs.is_empty() {
        return None;
    }
    let mut sorted = m.pairs.clone();
    sorted.sort_by(|x, y| x.corr.total_cmp(&y.corr).then(x.i.cmp(&y.i)));
    Some(sorted[(sorted.len() - 1) / 2].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian;
    use crate::rng::RngSpec;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn rand_set(p: usize, q: usize, seed: u64) -> MapSet {
        MapSet::single(gaussian(p, q, &mut RngSpec::new(seed, "maps").rng()))
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for perm in permutations(n - 1) {
            for pos in 0..=perm.len() {
                let mut p = perm.clone();
                p.insert(pos, n - 1);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn corr_basic_cases() {
        let v = DVector::from_vec(vec![1.0, 2.0, -3.0]);
        let w = DVector::from_vec(vec![2.0, -1.0, 0.0]);
        assert!((corr(v.as_view(), v.as_view()).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(corr(v.as_view(), w.as_view()).unwrap(), 0.0);
        let neg = -v.clone();
        assert!((corr(v.as_view(), neg.as_view()).unwrap() - 1.0).abs() < 1e-15);
        let z = DVector::zeros(3);
        assert_eq!(corr(v.as_view(), z.as_view()).unwrap(), 0.0);
        let short = DVector::zeros(2);
        assert!(matches!(corr(v.as_view(), short.as_view()), Err(Error::Dimension(_))));
    }

    #[test]
    fn permuted_copy_matches_perfectly() {
        let a = rand_set(50, 5, 1);
        let perm = [3, 0, 4, 1, 2];
        let b = MapSet::single(a.maps.select_columns(&perm));
        let m = match_maps(&a, &b).unwrap();
        assert!((m.mean_corr - 1.0).abs() < 1e-12);
        for pair in &m.pairs {
            assert_eq!(perm[pair.j], pair.i);
        }
    }

    #[test]
    fn zero_column_counts_as_zero() {
        let mut a = rand_set(30, 4, 2);
        a.maps.column_mut(2).fill(0.0);
        let m = match_maps(&a, &a).unwrap();
        assert!((m.mean_corr - 0.75).abs() < 1e-12);
    }

    #[test]
    fn agrees_with_exhaustive_search() {
        for seed in 0..30 {
            let q = 1 + (seed as usize % 6);
            let a = rand_set(20, q, seed);
            let b = rand_set(20, q, seed + 1000);
            let w = correlation_matrix(&a, &b).unwrap();
            let brute = permutations(q)
                .iter()
                .map(|p| (0..q).map(|i| w[i * q + p[i]]).sum::<f64>() / q as f64)
                .fold(f64::NEG_INFINITY, f64::max);
            let m = match_maps(&a, &b).unwrap();
            assert!((m.mean_corr - brute).abs() <= 1e-12);
        }
    }

    #[test]
    fn rectangular_excludes_surplus() {
        let a = rand_set(40, 3, 3);
        let extra = gaussian(40, 2, &mut RngSpec::new(4, "x").rng());
        let b = MapSet::concat(&[a.clone(), MapSet::single(extra)]).unwrap();
        let m = match_maps(&a, &b).unwrap();
        assert_eq!(m.pairs.len(), 3);
        assert!((m.mean_corr - 1.0).abs() < 1e-12);
        let m2 = match_maps(&b, &a).unwrap();
        assert_eq!(m2.pairs.len(), 3);
    }

    #[test]
    fn p_mismatch_is_dimension_error() {
        let err = match_maps(&rand_set(10, 2, 1), &rand_set(11, 2, 1)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("10") && msg.contains("11"));
    }

    #[test]
    fn d_l_definitional_cases() {
        let runs: Vec<MapSet> = (0..3).map(|s| rand_set(30, 4, s)).collect();
        let same = d_l(&runs, &runs).unwrap();
        assert!((same.value - 1.0).abs() < 1e-12);
        assert_eq!(same.dispersion, None);
        let one = d_l(&runs[..1], &runs[1..2]).unwrap();
        assert_eq!(one.value, match_maps(&runs[0], &runs[1]).unwrap().mean_corr);
        assert!(d_l(&[], &runs).is_err());
        assert!(matches!(d_l(&runs[..1], &runs), Err(Error::Usage(_))));
    }

    #[test]
    fn d_l_dispersion_over_four_groups() {
        let refs: Vec<MapSet> = (0..8).map(|s| rand_set(30, 3, s)).collect();
        let cand: Vec<MapSet> = (100..102).map(|s| rand_set(30, 3, s)).collect();
        let c = d_l(&refs, &cand).unwrap();
        assert_eq!(c.group_values.len(), 4);
        let mean = c.group_values.iter().sum::<f64>() / 4.0;
        let sd = (c.group_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((c.value - mean).abs() < 1e-15);
        assert!((c.dispersion.unwrap() - sd).abs() < 1e-15);
        for (g, v) in refs.chunks(2).zip(&c.group_values) {
            let direct = d(&MapSet::concat(g).unwrap(), &MapSet::concat(&cand).unwrap()).unwrap();
            assert_eq!(direct, *v);
        }
    }

    #[test]
    fn median_pair_rule() {
        let mk = |cs: &[f64]| Matching {
            pairs: cs.iter().enumerate().map(|(i, &c)| MatchedPair { i, j: i, corr: c }).collect(),
            mean_corr: 0.0,
        };
        assert_eq!(median_of(&mk(&[0.9, 0.2, 0.5])).unwrap().corr, 0.5);
        assert_eq!(median_of(&mk(&[0.8, 0.2])).unwrap().corr, 0.2);
        let a = rand_set(20, 5, 9);
        assert!((median_matched_pair(&a, &a).unwrap().corr - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn invariances(seed in any::<u64>(), q in 1usize..6, scale in 0.01f64..100.0) {
            let a = rand_set(25, q, seed);
            let b = rand_set(25, q, seed ^ 0xdead_beef);
            let base = d(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&base));
            prop_assert!((d(&b, &a).unwrap() - base).abs() <= 1e-12);
            let mut t = b.maps.clone();
            t.column_mut(0).neg_mut();
            t.column_mut(q - 1).scale_mut(scale);
            let perm: Vec<usize> = (0..q).rev().collect();
            let t = MapSet::single(t.select_columns(&perm));
            prop_assert!((d(&a, &t).unwrap() - base).abs() <= 1e-12);
            prop_assert!((d(&a, &a).unwrap() - 1.0).abs() <= 1e-12);
        }
    }
}
