//! Ward.D2 hierarchical clustering, dendrogram cuts and elbow selection.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::linalg::project_coefficients;
use crate::spectral::PeriodogramSet;

/// Symmetric matrix of pairwise distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let m = values.nrows();
        if values.ncols() != m {
            return Err(Error::Shape(format!("distance matrix is {}x{}", m, values.ncols())));
        }
        for i in 0..m {
            if values[(i, i)] != 0.0 {
                return Err(Error::Shape(format!("non-zero diagonal at {i}")));
            }
            for j in 0..i {
                let (a, b) = (values[(i, j)], values[(j, i)]);
                if !(a.is_finite() && a >= 0.0) || (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                    return Err(Error::Shape(format!("entry ({i}, {j}) is not a symmetric non-negative distance")));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

/// Pairwise Euclidean distances between the rows of `points`.
pub fn euclidean_distances(points: &DMatrix<f64>) -> Result<DistanceMatrix> {
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("points contain non-finite entries"));
    }
    let m = points.nrows();
    let mut d = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..i {
            let v = (points.row(i) - points.row(j)).norm();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(DistanceMatrix { values: d })
}

/// One agglomeration step. Leaves are `0..m`; the cluster formed at step `s`
/// gets id `m + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    pub leaf_labels: Vec<String>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.merges.len() + 1
    }
}

/// Cluster labels `1..=k`, numbered by first appearance in leaf order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

/// Ward.D2 agglomeration: Lance-Williams updates on squared distances,
/// square-rooted merge heights. Ties go to the smallest pair of cluster ids.
pub fn ward_linkage(dist: &DistanceMatrix, leaf_labels: Option<Vec<String>>) -> Result<Dendrogram> {
    let m = dist.len();
    if m == 0 {
        return Err(Error::Size("cannot cluster zero points".into()));
    }
    let leaf_labels = match leaf_labels {
        Some(l) if l.len() != m => {
            return Err(Error::Shape(format!("{} labels for {m} points", l.len())));
        }
        Some(l) => l,
        None => (1..=m).map(|i| i.to_string()).collect(),
    };
    let mut d2 = dist.values.map(|v| v * v);
    let mut ids: Vec<usize> = (0..m).collect();
    let mut sizes = vec![1usize; m];
    let mut active = vec![true; m];
    let mut merges = Vec::with_capacity(m.saturating_sub(1));

    for step in 0..m.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..m {
            if !active[a] {
                continue;
            }
            for b in a + 1..m {
                if !active[b] {
                    continue;
                }
                let (lo, hi) = (ids[a].min(ids[b]), ids[a].max(ids[b]));
                let cand = (d2[(a, b)], lo, hi, a, b);
                let better = match best {
                    None => true,
                    Some(cur) => (cand.0, cand.1, cand.2) < (cur.0, cur.1, cur.2),
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        let (dij, left, right, a, b) = best.expect("at least two active clusters");
        let (na, nb) = (sizes[a] as f64, sizes[b] as f64);
        for c in 0..m {
            if !active[c] || c == a || c == b {
                continue;
            }
            let nc = sizes[c] as f64;
            let v = ((na + nc) * d2[(a, c)] + (nb + nc) * d2[(b, c)] - nc * dij) / (na + nb + nc);
            d2[(a, c)] = v;
            d2[(c, a)] = v;
        }
        active[b] = false;
        sizes[a] += sizes[b];
        ids[a] = m + step;
        merges.push(Merge {
            left,
            right,
            height: dij.max(0.0).sqrt(),
            size: sizes[a],
        });
    }
    Ok(Dendrogram { merges, leaf_labels })
}

/// Partition into `k` clusters by applying the first `m - k` merges.
pub fn cut(dend: &Dendrogram, k: usize) -> Result<ClusterAssignment> {
    let m = dend.n_leaves();
    if k == 0 || k > m {
        return Err(Error::Size(format!("k = {k} must satisfy 1 <= k <= m = {m}")));
    }
    let mut parent: Vec<usize> = (0..2 * m - 1).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (step, merge) in dend.merges.iter().take(m - k).enumerate() {
        let new = m + step;
        let l = find(&mut parent, merge.left);
        let r = find(&mut parent, merge.right);
        parent[l] = new;
        parent[r] = new;
    }
    let mut roots: Vec<usize> = Vec::with_capacity(k);
    let labels = (0..m)
        .map(|leaf| {
            let root = find(&mut parent, leaf);
            match roots.iter().position(|&r| r == root) {
                Some(i) => i + 1,
                None => {
                    roots.push(root);
                    roots.len()
                }
            }
        })
        .collect();
    Ok(ClusterAssignment { labels, k })
}

/// Within-cluster sum of squared deviations from cluster centroids.
pub fn within_ss(points: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let k = labels.iter().copied().max().unwrap_or(0);
    let d = points.ncols();
    let mut sums = DMatrix::<f64>::zeros(k + 1, d);
    let mut counts = vec![0usize; k + 1];
    for (i, &l) in labels.iter().enumerate() {
        let mut row = sums.row_mut(l);
        row += points.row(i);
        counts[l] += 1;
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let centroid = sums.row(l) / counts[l] as f64;
            (points.row(i) - centroid).norm_squared()
        })
        .sum()
}

/// WSS of the Ward cuts for `k = 1..=k_max` (entry `k - 1`).
pub fn wss_curve(points: &DMatrix<f64>, k_max: usize) -> Result<Vec<f64>> {
    let m = points.nrows();
    if k_max == 0 || k_max > m {
        return Err(Error::Size(format!("k_max = {k_max} must satisfy 1 <= k_max <= m = {m}")));
    }
    let dend = ward_linkage(&euclidean_distances(points)?, None)?;
    (1..=k_max)
        .map(|k| Ok(within_ss(points, &cut(&dend, k)?.labels)))
        .collect()
}

/// `k` (1-based) maximizing `wss[k-1] - 2 wss[k] + wss[k+1]`; the first
/// maximizer wins ties.
pub fn elbow(wss: &[f64]) -> Result<usize> {
    if wss.len() < 3 {
        return Err(Error::Size(format!("elbow needs at least 3 WSS values, got {}", wss.len())));
    }
    let mut best = (f64::NEG_INFINITY, 2);
    for k in 2..wss.len() {
        let curv = wss[k - 2] - 2.0 * wss[k - 1] + wss[k];
        if curv > best.0 {
            best = (curv, k);
        }
    }
    Ok(best.1)
}

/// WSS curve with its automatic elbow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowResult {
    pub wss: Vec<f64>,
    pub suggested_k: usize,
    /// False when the curve is numerically flat at zero.
    pub reliable: bool,
}

/// Elbow analysis on arbitrary points (one per row).
pub fn elbow_analysis(points: &DMatrix<f64>, k_max: usize) -> Result<ElbowResult> {
    let wss = wss_curve(points, k_max)?;
    let suggested_k = elbow(&wss)?;
    let scale = points.norm_squared();
    let reliable = wss[0] > 1e-12 * scale.max(f64::MIN_POSITIVE);
    Ok(ElbowResult {
        wss,
        suggested_k,
        reliable,
    })
}

/// Elbow analysis on the projection-smoothed log periodograms, one point per
/// series.
pub fn select_k(periodogram: &PeriodogramSet, basis: &BasisMatrix, k_max: usize) -> Result<ElbowResult> {
    if basis.n_freq() != periodogram.n_freq() {
        return Err(Error::Shape("basis and periodogram grids differ".into()));
    }
    let b = basis.values();
    let psi = project_coefficients(b, &periodogram.log_floored(), 0.0)?;
    let smoothed = b * psi;
    elbow_analysis(&smoothed.transpose(), k_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(xs.len(), 1, xs)
    }

    #[test]
    fn three_points_on_a_line() {
        let d = euclidean_distances(&line(&[0.0, 1.0, 10.0])).unwrap();
        let dend = ward_linkage(&d, None).unwrap();
        assert_eq!((dend.merges[0].left, dend.merges[0].right), (0, 1));
        assert!((dend.merges[0].height - 1.0).abs() < 1e-12);
        // sqrt(2 * (2 * 1 / 3) * 9.5^2)
        let expected = (2.0 * 2.0 / 3.0 * 9.5f64.powi(2)).sqrt();
        assert!((dend.merges[1].height - expected).abs() < 1e-12);
        assert_eq!((dend.merges[1].left, dend.merges[1].right, dend.merges[1].size), (2, 3, 3));
    }

    #[test]
    fn two_points() {
        let d = euclidean_distances(&line(&[2.0, 5.0])).unwrap();
        let dend = ward_linkage(&d, None).unwrap();
        assert_eq!(dend.merges.len(), 1);
        assert!((dend.merges[0].height - 3.0).abs() < 1e-15);
    }

    #[test]
    fn cuts() {
        let pts = line(&[0.0, 0.1, 5.0, 5.1, 20.0]);
        let dend = ward_linkage(&euclidean_distances(&pts).unwrap(), None).unwrap();
        assert_eq!(cut(&dend, 1).unwrap().labels, vec![1; 5]);
        assert_eq!(cut(&dend, 5).unwrap().labels, vec![1, 2, 3, 4, 5]);
        assert_eq!(cut(&dend, 3).unwrap().labels, vec![1, 1, 2, 2, 3]);
        assert!(cut(&dend, 0).is_err());
        assert!(cut(&dend, 6).is_err());
    }

    #[test]
    fn elbow_examples() {
        assert_eq!(elbow(&[100.0, 10.0, 9.0, 8.0, 7.0]).unwrap(), 2);
        assert_eq!(elbow(&[50.0, 30.0, 10.0, 9.0, 8.0, 7.0]).unwrap(), 3);
        assert!(elbow(&[1.0, 0.5]).is_err());
        let scaled: Vec<f64> = [50.0, 30.0, 10.0, 9.0, 8.0, 7.0].iter().map(|v| v * 3.5).collect();
        assert_eq!(elbow(&scaled).unwrap(), 3);
    }

    #[test]
    fn wss_endpoints() {
        let pts = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 3.0, 3.0]);
        let wss = wss_curve(&pts, 4).unwrap();
        assert_eq!(wss[3], 0.0);
        // grand centroid (1, 1.25)
        let total = 1.0 + 1.5625 + 0.0 + 1.5625 + 1.0 + 0.5625 + 4.0 + 3.0625;
        assert!((wss[0] - total).abs() < 1e-12);
    }

    #[test]
    fn flat_curve_is_unreliable() {
        let pts = DMatrix::from_element(6, 3, 1.5);
        let res = elbow_analysis(&pts, 4).unwrap();
        assert!(!res.reliable);
    }
}
