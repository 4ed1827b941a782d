#![allow(dead_code)]

use nalgebra::DMatrix;
use ncsde::basis::{eval_basis, BasisMatrix, BasisSpec};
use ncsde::simulate::{generate_mixture, MixtureDesign};
use ncsde::spectral::{periodogram, PeriodogramSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))
}

/// `|sum_t x_t exp(-2 pi i j t / n)|^2 / n` for `j = 0..n`, by direct summation.
pub fn naive_periodogram(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|j| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let arg = -2.0 * PI * ((j * t) % n) as f64 / n as f64;
                re += v * arg.cos();
                im += v * arg.sin();
            }
            (re * re + im * im) / n as f64
        })
        .collect()
}

/// Periodogram and default-domain cubic basis for a standard mixture.
pub fn mixture_problem(n: usize, m: usize, l: usize, seed: u64) -> (PeriodogramSet, BasisMatrix, Vec<usize>) {
    let (ts, labels) = generate_mixture(&MixtureDesign::standard(n, m, seed)).unwrap();
    let ps = periodogram(&ts).unwrap();
    let spec = BasisSpec::new(l, 3, BasisSpec::domain_for(ps.grid())).unwrap();
    let basis = eval_basis(ps.grid(), &spec).unwrap();
    (ps, basis, labels)
}

/// Greville abscissae: the coefficients that reproduce `f(w) = w`.
pub fn greville(spec: &BasisSpec) -> Vec<f64> {
    let knots = spec.knots();
    (0..spec.n_basis)
        .map(|i| knots[i + 1..=i + spec.degree].iter().sum::<f64>() / spec.degree as f64)
        .collect()
}

/// Pair counts by enumerating every unordered pair.
pub fn brute_pairs(a: &[usize], b: &[usize]) -> (f64, f64, f64, f64) {
    let (mut n11, mut n10, mut n01, mut n00) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => n11 += 1,
                (true, false) => n10 += 1,
                (false, true) => n01 += 1,
                (false, false) => n00 += 1,
            }
        }
    }
    (n11 as f64, n10 as f64, n01 as f64, n00 as f64)
}

pub fn brute_ari(a: &[usize], b: &[usize]) -> f64 {
    let (n11, n10, n01, n00) = brute_pairs(a, b);
    let den = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    if den == 0.0 {
        1.0
    } else {
        2.0 * (n00 * n11 - n01 * n10) / den
    }
}

/// Ward.D2 by brute force: at every step recompute the merge cost of every
/// pair of current clusters from the raw points,
/// `sqrt(2 n_a n_b / (n_a + n_b)) * |c_a - c_b|`.
pub fn naive_ward(points: &DMatrix<f64>) -> Vec<(usize, usize, f64, usize)> {
    let m = points.nrows();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..m).map(|i| (i, vec![i])).collect();
    let centroid = |members: &[usize]| {
        let mut c = points.row(members[0]).into_owned() * 0.0;
        for &i in members {
            c += points.row(i);
        }
        c / members.len() as f64
    };
    let mut out = Vec::new();
    for step in 0..m - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let (ia, ma) = &clusters[a];
                let (ib, mb) = &clusters[b];
                let (na, nb) = (ma.len() as f64, mb.len() as f64);
                let cost = (2.0 * na * nb / (na + nb)).sqrt() * (centroid(ma) - centroid(mb)).norm();
                let key = (cost, (*ia).min(*ib), (*ia).max(*ib), a, b);
                if best.is_none_or(|cur| (key.0, key.1, key.2) < (cur.0, cur.1, cur.2)) {
                    best = Some(key);
                }
            }
        }
        let (cost, lo, hi, a, b) = best.unwrap();
        let (_, mb) = clusters.remove(b);
        let (_, ma) = clusters.remove(a);
        let merged: Vec<usize> = ma.into_iter().chain(mb).collect();
        out.push((lo, hi, cost, merged.len()));
        clusters.push((m + step, merged));
    }
    out
}

/// Orthonormal basis by modified Gram-Schmidt, applied twice.
pub fn gram_schmidt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = m.clone();
    for _ in 0..2 {
        for j in 0..q.ncols() {
            for p in 0..j {
                let proj = q.column(p).dot(&q.column(j));
                let col_p = q.column(p).into_owned();
                q.column_mut(j).axpy(-proj, &col_p, 1.0);
            }
            let norm = q.column(j).norm();
            q.column_mut(j).scale_mut(1.0 / norm);
        }
    }
    q
}

/// Largest principal angle from the eigenvalues of the cosine and sine Gram
/// matrices, whichever is better conditioned.
pub fn angle_oracle(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let (qu, qv) = (gram_schmidt(u), gram_schmidt(v));
    let cross = qu.transpose() * &qv;
    let cos2 = if cross.nrows() <= cross.ncols() {
        &cross * cross.transpose()
    } else {
        cross.transpose() * &cross
    };
    let min_cos2 = cos2.symmetric_eigen().eigenvalues.min().clamp(0.0, 1.0);
    if min_cos2 < 0.5 {
        return min_cos2.sqrt().acos().to_degrees();
    }
    let (big, small) = if qu.ncols() >= qv.ncols() { (&qu, &qv) } else { (&qv, &qu) };
    let resid = small - big * (big.transpose() * small);
    let sin2 = (resid.transpose() * &resid).symmetric_eigen().eigenvalues.max().clamp(0.0, 1.0);
    sin2.sqrt().asin().to_degrees()
}
