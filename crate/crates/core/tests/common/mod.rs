//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the library's numerics: each
//! oracle recomputes its quantity from the model definition with explicit
//! inverses, joint-Gaussian conditioning, quadrature or simulation.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| normal(rng));
    let q = a.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.gen_range(lo..hi)));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

// ---------------------------------------------------------------------------
// Gaussian process

/// Dense evaluation of the GP posterior: inputs scaled to [0,1] by `domains`,
/// trend (1, z) or (1), squared-exponential correlation, explicit inverses.
pub struct DenseGp {
    pub z: Vec<Vec<f64>>,
    pub f: DVector<f64>,
    pub domains: Vec<(f64, f64)>,
    pub delta: Vec<f64>,
    pub tau2: f64,
    pub linear: bool,
    pub beta: DVector<f64>,
    pub sigma2: f64,
    /// 2-norm condition number of R + τ²I.
    pub condition: f64,
    rt_inv: DMatrix<f64>,
    h: DMatrix<f64>,
    k_inv: DMatrix<f64>,
}

impl DenseGp {
    pub fn new(x: &[Vec<f64>], f: &[f64], domains: &[(f64, f64)], delta: &[f64], tau2: f64, linear: bool) -> Self {
        let n = x.len();
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|row| row.iter().zip(domains).map(|(v, (l, u))| (v - l) / (u - l)).collect())
            .collect();
        let basis = |zi: &[f64]| -> Vec<f64> {
            let mut h = vec![1.0];
            if linear {
                h.extend_from_slice(zi);
            }
            h
        };
        let q = basis(&z[0]).len();
        let mut rt = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                rt[(i, j)] = corr(&z[i], &z[j], delta);
            }
            rt[(i, i)] += tau2;
        }
        let h = DMatrix::from_fn(n, q, |i, k| basis(&z[i])[k]);
        let f = DVector::from_column_slice(f);
        let sv = rt.clone().singular_values();
        let condition = sv.max() / sv.min();
        let rt_inv = rt.try_inverse().expect("correlation matrix invertible");
        let k = h.transpose() * &rt_inv * &h;
        let k_inv = k.try_inverse().expect("HᵀR⁻¹H invertible");
        let beta = &k_inv * h.transpose() * &rt_inv * &f;
        let e = &f - &h * &beta;
        let s2 = (e.transpose() * &rt_inv * &e)[(0, 0)];
        let denom = if n > q + 2 { n - q - 2 } else { n - q };
        Self {
            z,
            f,
            domains: domains.to_vec(),
            delta: delta.to_vec(),
            tau2,
            linear,
            beta,
            sigma2: s2 / denom as f64,
            condition,
            rt_inv,
            h,
            k_inv,
        }
    }

    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let zs: Vec<f64> = x.iter().zip(&self.domains).map(|(v, (l, u))| (v - l) / (u - l)).collect();
        let mut hs = vec![1.0];
        if self.linear {
            hs.extend_from_slice(&zs);
        }
        let hs = DVector::from_vec(hs);
        let r = DVector::from_iterator(self.z.len(), self.z.iter().map(|zi| corr(zi, &zs, &self.delta)));
        let resid = &self.f - &self.h * &self.beta;
        let mean = hs.dot(&self.beta) + (r.transpose() * &self.rt_inv * resid)[(0, 0)];
        let g = &hs - self.h.transpose() * &self.rt_inv * &r;
        let c = 1.0 + self.tau2 - (r.transpose() * &self.rt_inv * &r)[(0, 0)] + (g.transpose() * &self.k_inv * &g)[(0, 0)];
        (mean, self.sigma2 * c)
    }
}

pub fn corr(a: &[f64], b: &[f64], delta: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).zip(delta).map(|((x, y), d)| ((x - y) / d).powi(2)).sum();
    (-s).exp()
}

// ---------------------------------------------------------------------------
// Dynamic linear model

#[derive(Debug, Clone)]
pub struct LinearGaussianSystem {
    pub g: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub v: f64,
    pub m0: DVector<f64>,
    pub c0: DMatrix<f64>,
    /// Regression vectors for every time point, observed and future.
    pub f: Vec<DVector<f64>>,
}

pub struct JointOracle {
    /// Filtered (m_t, C_t) for t = 1..=T.
    pub filtered: Vec<(DVector<f64>, DMatrix<f64>)>,
    /// (mean, variance) of y_{T+k} given the observations, k = 1..
    pub forecasts: Vec<(f64, f64)>,
}

/// Writes every state and observation as a linear map of the independent
/// sources (θ₀, ω₁.., ν₁..), forms their joint mean and covariance, and
/// conditions by explicit Schur complements.
pub fn joint_gaussian_oracle(sys: &LinearGaussianSystem, ys: &[Option<f64>]) -> JointOracle {
    let p = sys.m0.len();
    let total = sys.f.len();
    let t_obs = ys.len();
    // Sources: θ₀ (p), ω_t (p each), ν_t (1 each).
    let ns = p + total * p + total;
    let mut src_mean = DVector::zeros(ns);
    let mut src_cov = DMatrix::zeros(ns, ns);
    src_mean.rows_mut(0, p).copy_from(&sys.m0);
    src_cov.view_mut((0, 0), (p, p)).copy_from(&sys.c0);
    for t in 0..total {
        let o = p + t * p;
        src_cov.view_mut((o, o), (p, p)).copy_from(&sys.w);
        src_cov[(p + total * p + t, p + total * p + t)] = sys.v;
    }
    // θ_t = G θ_{t−1} + ω_t as rows over the sources.
    let mut theta_maps: Vec<DMatrix<f64>> = Vec::with_capacity(total);
    let mut prev = DMatrix::zeros(p, ns);
    prev.view_mut((0, 0), (p, p)).fill_with_identity();
    for t in 0..total {
        let mut cur = &sys.g * &prev;
        let o = p + t * p;
        for k in 0..p {
            cur[(k, o + k)] += 1.0;
        }
        theta_maps.push(cur.clone());
        prev = cur;
    }
    let y_map = |t: usize| -> DVector<f64> {
        let mut row = theta_maps[t].transpose() * &sys.f[t];
        row[p + total * p + t] += 1.0;
        row
    };
    let observed: Vec<usize> = (0..t_obs).filter(|&t| ys[t].is_some()).collect();

    let condition = |target: &DMatrix<f64>, upto: usize| -> (DVector<f64>, DMatrix<f64>) {
        let idx: Vec<usize> = observed.iter().copied().filter(|&t| t < upto).collect();
        let mu_t = target * &src_mean;
        let s_tt = target * &src_cov * target.transpose();
        if idx.is_empty() {
            return (mu_t, s_tt);
        }
        let a = DMatrix::from_fn(idx.len(), ns, |i, j| y_map(idx[i])[j]);
        let obs = DVector::from_iterator(idx.len(), idx.iter().map(|&t| ys[t].unwrap()));
        let s_yy = &a * &src_cov * a.transpose();
        let s_ty = target * &src_cov * a.transpose();
        let inv = s_yy.try_inverse().expect("observation covariance invertible");
        let mean = &mu_t + &s_ty * &inv * (obs - &a * &src_mean);
        let cov = &s_tt - &s_ty * &inv * s_ty.transpose();
        (mean, cov)
    };
    let filtered = (0..t_obs).map(|t| condition(&theta_maps[t], t + 1)).collect();
    let forecasts = (t_obs..total)
        .map(|t| {
            let row = DMatrix::from_row_slice(1, ns, y_map(t).as_slice());
            let (m, c) = condition(&row, t_obs);
            (m[0], c[(0, 0)])
        })
        .collect();
    JointOracle { filtered, forecasts }
}

// ---------------------------------------------------------------------------
// Quadrature

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

type Vector<const K: usize> = [f64; K];

fn gk15<const K: usize>(f: &dyn Fn(f64) -> Vector<K>, a: f64, b: f64) -> (Vector<K>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc.map(|v| GK_WEIGHTS_K[7] * v);
    let mut g = fc.map(|v| GK_WEIGHTS_G[3] * v);
    for i in 0..7 {
        let (lo, hi) = (f(c - h * GK_NODES[i]), f(c + h * GK_NODES[i]));
        for j in 0..K {
            let s = lo[j] + hi[j];
            k[j] += GK_WEIGHTS_K[i] * s;
            if i % 2 == 1 {
                g[j] += GK_WEIGHTS_G[i / 2] * s;
            }
        }
    }
    let diff = (0..K).map(|j| ((k[j] - g[j]) * h).abs()).fold(0.0, f64::max);
    (k.map(|v| v * h), diff)
}

/// Width of the panels adaptive integration starts from.
pub const PANEL_WIDTH: f64 = 1.5;

/// Adaptive Gauss–Kronrod (7/15) integration of a vector-valued function:
/// fixed panels of width about [`PANEL_WIDTH`], each bisected until the
/// Kronrod–Gauss difference meets `tol` in every component.
pub fn integrate<const K: usize>(f: &dyn Fn(f64) -> Vector<K>, a: f64, b: f64, tol: f64) -> Vector<K> {
    fn rec<const K: usize>(
        f: &dyn Fn(f64) -> Vector<K>,
        a: f64,
        b: f64,
        tol: f64,
        whole: (Vector<K>, f64),
        depth: u32,
    ) -> Vector<K> {
        let (v, diff) = whole;
        if diff <= tol || depth > 30 {
            return v;
        }
        let m = 0.5 * (a + b);
        let l = rec(f, a, m, 0.5 * tol, gk15(f, a, m), depth + 1);
        let r = rec(f, m, b, 0.5 * tol, gk15(f, m, b), depth + 1);
        std::array::from_fn(|j| l[j] + r[j])
    }
    let panels = ((b - a) / PANEL_WIDTH).ceil().max(1.0) as usize;
    let w = (b - a) / panels as f64;
    let mut total = [0.0; K];
    for i in 0..panels {
        let (lo, hi) = (a + i as f64 * w, a + (i + 1) as f64 * w);
        let part = rec(f, lo, hi, tol / panels as f64, gk15(f, lo, hi), 0);
        for j in 0..K {
            total[j] += part[j];
        }
    }
    total
}

/// E[g(X)] for X ~ N(µ, Σ) in up to three dimensions, by nested adaptive
/// quadrature over whitened coordinates X = µ + Lz on [−9, 9]^d. `tol` is
/// the absolute tolerance of each one-dimensional integral.
pub fn gaussian_expectation<const K: usize>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    g: &dyn Fn(&[f64]) -> Vector<K>,
    tol: f64,
) -> Vector<K> {
    let d = mean.len();
    assert!((1..=3).contains(&d));
    let l = cov.clone().cholesky().expect("covariance positive definite").l();
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let eval = |z: [f64; 3]| -> Vector<K> {
        let mut x = [0.0; 3];
        for i in 0..d {
            x[i] = mean[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>();
        }
        g(&x[..d])
    };
    let scaled = |w: f64, v: Vector<K>| v.map(|x| w * x);
    let b = 9.0;
    match d {
        1 => integrate(&|z0| scaled(phi(z0), eval([z0, 0.0, 0.0])), -b, b, tol),
        2 => integrate(
            &|z0| scaled(phi(z0), integrate(&|z1| scaled(phi(z1), eval([z0, z1, 0.0])), -b, b, tol)),
            -b,
            b,
            tol,
        ),
        _ => integrate(
            &|z0| {
                scaled(
                    phi(z0),
                    integrate(
                        &|z1| scaled(phi(z1), integrate(&|z2| scaled(phi(z2), eval([z0, z1, z2])), -b, b, tol)),
                        -b,
                        b,
                        tol,
                    ),
                )
            },
            -b,
            b,
            tol,
        ),
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo

/// Streaming mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct Running {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl Running {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, o: Running) -> Running {
        if self.n == 0 {
            return o;
        }
        if o.n == 0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Running {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64) * (o.n as f64) / n as f64,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.m2 / (self.n as f64 - 1.0)
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Draws x ~ N(mean, sd²) and returns Monte Carlo estimates of E[m(X)] and
/// E[v(X)] + V[m(X)] with their standard errors, given the conditional mean
/// and variance functions `mv`.
pub struct TotalMoments {
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
}

pub fn mc_total_moments(mean: f64, sd: f64, draws: usize, seed: u64, mv: &(dyn Fn(f64) -> (f64, f64) + Sync)) -> TotalMoments {
    use rayon::prelude::*;
    let chunks = 64;
    let per = draws / chunks;
    // First pass: conditional means and variances; second pass needs the
    // overall mean of m, so keep sums of m, m², v per chunk.
    type Chunk = (Running, Running, Vec<(f64, f64)>);
    let parts: Vec<Chunk> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng(seed.wrapping_mul(1_000_003).wrapping_add(c as u64));
            let mut m_acc = Running::default();
            let mut v_acc = Running::default();
            let mut samples = Vec::with_capacity(per);
            for _ in 0..per {
                let x = mean + sd * normal(&mut r);
                let (m, v) = mv(x);
                m_acc.push(m);
                v_acc.push(v);
                samples.push((m, v));
            }
            (m_acc, v_acc, samples)
        })
        .collect();
    let m_all = parts.iter().fold(Running::default(), |a, p| a.merge(p.0));
    let mbar = m_all.mean();
    let mut g = Running::default();
    for (_, _, s) in &parts {
        for (m, v) in s {
            g.push(v + (m - mbar).powi(2));
        }
    }
    TotalMoments {
        mean: mbar,
        mean_se: m_all.se(),
        variance: g.mean(),
        variance_se: g.se(),
    }
}

// ---------------------------------------------------------------------------
// Example system with two chained one-dimensional simulators

pub fn example_f1(x: f64) -> f64 {
    2.0 * x * x.sin()
}

pub fn example_f2(y: f64) -> f64 {
    y * y * y.cos()
}

pub fn fixtures_dir() -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}
