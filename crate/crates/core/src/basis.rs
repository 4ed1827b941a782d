//! Clamped B-spline bases on a frequency interval and their roughness
//! penalties.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::FrequencyGrid;

/// Tolerance used when checking that grid points fall inside the domain.
const DOMAIN_SLACK: f64 = 1e-12;

/// Clamped B-spline basis with equally spaced interior knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    /// Number of basis functions.
    #[serde(rename = "L")]
    pub n_basis: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_domain")]
    pub domain: (f64, f64),
}

fn default_degree() -> usize {
    3
}

fn default_domain() -> (f64, f64) {
    (0.0, 0.5)
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            n_basis: 40,
            degree: 3,
            domain: (0.0, 0.5),
        }
    }
}

impl BasisSpec {
    pub fn new(n_basis: usize, degree: usize, domain: (f64, f64)) -> Result<Self> {
        let spec = Self {
            n_basis,
            degree,
            domain,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_basis < self.degree + 1 {
            return Err(Error::Config(format!(
                "L = {} must be at least degree + 1 = {}",
                self.n_basis,
                self.degree + 1
            )));
        }
        let (lo, hi) = self.domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi && lo >= 0.0 && hi <= 0.5) {
            return Err(Error::Config(format!(
                "domain [{lo}, {hi}] must satisfy 0 <= lo < hi <= 1/2"
            )));
        }
        Ok(())
    }

    /// Smallest domain `[0, hi]` that covers every grid point with half a
    /// frequency spacing to spare.
    pub fn domain_for(grid: &FrequencyGrid) -> (f64, f64) {
        let last = grid.omegas().last().copied().unwrap_or(0.5);
        let hi = (last + 0.5 / grid.source_n() as f64).min(0.5);
        (0.0, hi)
    }

    /// Full knot vector: `degree + 1` copies of each boundary plus the
    /// equally spaced interior knots.
    pub fn knots(&self) -> Vec<f64> {
        let (lo, hi) = self.domain;
        let spans = self.n_basis - self.degree;
        let mut knots = Vec::with_capacity(self.n_basis + self.degree + 1);
        knots.extend(std::iter::repeat_n(lo, self.degree + 1));
        for s in 1..spans {
            knots.push(lo + (hi - lo) * s as f64 / spans as f64);
        }
        knots.extend(std::iter::repeat_n(hi, self.degree + 1));
        knots
    }
}

/// Evaluator for one clamped B-spline basis.
#[derive(Debug, Clone)]
pub struct BSpline {
    spec: BasisSpec,
    knots: Vec<f64>,
}

impl BSpline {
    pub fn new(spec: BasisSpec) -> Result<Self> {
        spec.validate()?;
        let knots = spec.knots();
        Ok(Self { spec, knots })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    /// Index `mu` of the knot span `[t_mu, t_{mu+1})` containing `x`; the right
    /// boundary belongs to the last non-empty span.
    fn span(&self, x: f64) -> usize {
        let p = self.spec.degree;
        let last = self.spec.n_basis - 1;
        if x >= self.knots[last + 1] {
            return last;
        }
        if x <= self.knots[p] {
            return p;
        }
        // Binary search over t_p..t_{L}.
        let (mut low, mut high) = (p, last + 1);
        while high - low > 1 {
            let mid = (low + high) / 2;
            if x < self.knots[mid] {
                high = mid;
            } else {
                low = mid;
            }
        }
        low
    }

    fn check_domain(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.spec.domain;
        let slack = DOMAIN_SLACK * (hi - lo).max(1.0);
        if !(x >= lo - slack && x <= hi + slack) {
            return Err(Error::Domain { omega: x, lo, hi });
        }
        Ok(x.clamp(lo, hi))
    }

    /// Non-zero basis values at `x` (Cox-de Boor). Returns the index of the
    /// first non-zero function and the `degree + 1` values.
    pub fn eval_nonzero(&self, x: f64) -> Result<(usize, Vec<f64>)> {
        let x = self.check_domain(x)?;
        let p = self.spec.degree;
        let mu = self.span(x);
        let t = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        Ok((mu - p, n))
    }

    /// Derivatives of order `0..=order` of the non-zero basis functions at
    /// `x`; `out[k][r]` is the k-th derivative of function `first + r`.
    pub fn eval_derivatives(&self, x: f64, order: usize) -> Result<(usize, Vec<Vec<f64>>)> {
        let x = self.check_domain(x)?;
        let p = self.spec.degree;
        let mu = self.span(x);
        let t = &self.knots;

        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![0.0; p + 1]; order + 1];
        for (j, d) in ders[0].iter_mut().enumerate() {
            *d = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=order.min(p) {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    let rk = rk as usize;
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                    d = a[s2][0] * ndu[rk][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=order.min(p) {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        Ok((mu - p, ders))
    }

    /// Dense `points x L` matrix of basis values.
    pub fn design(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        let mut b = DMatrix::zeros(points.len(), self.spec.n_basis);
        for (row, &x) in points.iter().enumerate() {
            let (first, vals) = self.eval_nonzero(x)?;
            for (r, v) in vals.into_iter().enumerate() {
                b[(row, first + r)] = v;
            }
        }
        Ok(b)
    }

    /// Distinct knot breakpoints `lo = x_0 < ... < x_S = hi`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let p = self.spec.degree;
        self.knots[p..=self.spec.n_basis].to_vec()
    }
}

/// Basis functions evaluated on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    values: DMatrix<f64>,
    spec: BasisSpec,
    grid: FrequencyGrid,
}

impl BasisMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn n_freq(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.values.ncols()
    }
}

pub fn eval_basis(grid: &FrequencyGrid, spec: &BasisSpec) -> Result<BasisMatrix> {
    let spline = BSpline::new(spec.clone())?;
    Ok(BasisMatrix {
        values: spline.design(grid.omegas())?,
        spec: spec.clone(),
        grid: grid.clone(),
    })
}

/// Which roughness functional a penalty matrix encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    SecondDerivative,
    Difference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    values: DMatrix<f64>,
    /// `F` with `R = F' F`; quadratic forms are evaluated as `|F theta|^2`.
    factor: DMatrix<f64>,
    kind: PenaltyKind,
    order_a: usize,
}

impl PenaltyMatrix {
    /// Penalty `R = F' F` from an arbitrary factor `F` (`rows x L`). `order`
    /// is the offset used by the automatic smoothing-parameter rule.
    pub fn from_factor(factor: DMatrix<f64>, kind: PenaltyKind, order: usize) -> Result<Self> {
        if factor.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("penalty factor has non-finite entries"));
        }
        let r = factor.transpose() * &factor;
        Ok(Self {
            values: (&r + r.transpose()) * 0.5,
            factor,
            kind,
            order_a: order,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    /// Difference order `a`, or 2 for the second-derivative penalty.
    pub fn order(&self) -> usize {
        self.order_a
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `theta' R theta`, computed as `|F theta|^2` so that null-space
    /// directions give round-off-level results.
    pub fn quadratic_form(&self, theta: &[f64]) -> f64 {
        let v = nalgebra::DVectorView::from_slice(theta, theta.len());
        (&self.factor * v).norm_squared()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(points: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; points];
    let mut weights = vec![0.0; points];
    let n = points as f64;
    for i in 0..points.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=points {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let pn = if points == 1 { x } else { p1 };
            let pm = if points == 1 { 1.0 } else { p0 };
            dp = n * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[points - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[points - 1 - i] = w;
    }
    (nodes, weights)
}

/// `R_1 = integral of b''(w) b''(w)' dw`, by Gauss-Legendre quadrature on
/// every knot span (exact for polynomial integrands).
pub fn second_derivative_penalty(spec: &BasisSpec) -> Result<PenaltyMatrix> {
    if spec.degree < 2 {
        return Err(Error::Unsupported(format!(
            "second-derivative penalty needs degree >= 2, got {}",
            spec.degree
        )));
    }
    let spline = BSpline::new(spec.clone())?;
    let l = spec.n_basis;
    let (nodes, weights) = gauss_legendre(spec.degree + 1);
    let breaks = spline.breakpoints();
    let spans = breaks.len() - 1;
    let mut factor = DMatrix::zeros(spans * nodes.len(), l);
    let mut row = 0;
    for win in breaks.windows(2) {
        let (a, b) = (win[0], win[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (&z, &w) in nodes.iter().zip(&weights) {
            let (first, ders) = spline.eval_derivatives(mid + half * z, 2)?;
            let scale = (w * half).sqrt();
            for (i, &d) in ders[2].iter().enumerate() {
                factor[(row, first + i)] = scale * d;
            }
            row += 1;
        }
    }
    let r = factor.transpose() * &factor;
    // Symmetrize away accumulation-order round-off.
    let r = (&r + r.transpose()) * 0.5;
    Ok(PenaltyMatrix {
        values: r,
        factor,
        kind: PenaltyKind::SecondDerivative,
        order_a: 2,
    })
}

/// The `(L - a) x L` matrix of `a`-th order differences, built by repeated
/// application of the `(1, -1)` stencil.
pub fn difference_matrix(l: usize, a: usize) -> Result<DMatrix<f64>> {
    if a == 0 || a >= l {
        return Err(Error::Shape(format!(
            "difference order a = {a} must satisfy 1 <= a <= L - 1 = {}",
            l.saturating_sub(1)
        )));
    }
    let first = |rows: usize| {
        DMatrix::from_fn(rows, rows + 1, |i, j| {
            if j == i {
                1.0
            } else if j == i + 1 {
                -1.0
            } else {
                0.0
            }
        })
    };
    let mut d = first(l - 1);
    for order in 2..=a {
        d = first(l - order) * d;
    }
    Ok(d)
}

pub fn difference_penalty(l: usize, a: usize) -> Result<PenaltyMatrix> {
    let d = difference_matrix(l, a)?;
    Ok(PenaltyMatrix {
        values: d.transpose() * &d,
        factor: d,
        kind: PenaltyKind::Difference,
        order_a: a,
    })
}
