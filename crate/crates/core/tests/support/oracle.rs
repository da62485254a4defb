//! Reference values computed independently of the library kernels.
#![allow(dead_code, clippy::excessive_precision)]

use rand_distr::{Distribution, Normal};

// Gauss-Kronrod 7/15 nodes (non-negative half) and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One G7K15 panel: (kronrod estimate, |kronrod - gauss|).
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss-Kronrod quadrature of `f` over `[a, b]`: the panel
/// with the largest error estimate is bisected until the total error is below
/// `tol` (or rounding level) or the panel budget runs out.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let f: &dyn Fn(f64) -> f64 = &f;
    let (k, e) = gk15(f, a, b);
    let mut panels = vec![(a, b, k, e)];
    for _ in 0..5000 {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= tol.max(50.0 * f64::EPSILON * total.abs()) {
            break;
        }
        let (i, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (a, b, _, _) = panels.swap_remove(i);
        let m = 0.5 * (a + b);
        let (k1, e1) = gk15(f, a, m);
        let (k2, e2) = gk15(f, m, b);
        panels.push((a, m, k1, e1));
        panels.push((m, b, k2, e2));
    }
    // sum small panels first
    let mut vals: Vec<f64> = panels.iter().map(|p| p.2).collect();
    vals.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    vals.iter().sum()
}

/// ln Gamma(nu / 2) for integer nu, by exact factorial and half-integer products.
pub fn ln_gamma_half(nu: u32) -> f64 {
    assert!(nu >= 1);
    if nu.is_multiple_of(2) {
        (1..nu / 2).map(|i| (i as f64).ln()).sum()
    } else {
        let j = (nu - 1) / 2;
        0.5 * std::f64::consts::PI.ln() + (0..j).map(|i| (i as f64 + 0.5).ln()).sum::<f64>()
    }
}

/// Chi-square density with integer degrees of freedom.
pub fn chi2_pdf(nu: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let h = nu as f64 / 2.0;
    ((h - 1.0) * x.ln() - 0.5 * x - h * std::f64::consts::LN_2 - ln_gamma_half(nu)).exp()
}

/// `E[(chi2_nu - c)^+]` by quadrature over a truncated upper tail.
pub fn excess_by_quadrature(nu: u32, c: f64) -> f64 {
    let sd = (2.0 * nu as f64).sqrt();
    // far enough that the integrand is below 1e-30
    let width = 40.0 * sd + 2.0 * nu as f64 + 200.0;
    integrate(|x| (x - c) * chi2_pdf(nu, x), c, c + width, 1e-14)
}

/// One-shot least squares by SVD of the dense design: `(beta, s2)`.
pub fn dense_fit(xs: &[Vec<f64>], ys: &[f64]) -> (Vec<f64>, f64) {
    use nalgebra::{DMatrix, DVector};
    let n = ys.len();
    let p = xs[0].len();
    let x = DMatrix::from_fn(n, p, |i, j| xs[i][j]);
    let y = DVector::from_column_slice(ys);
    let beta = x
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .expect("svd solve");
    let resid = &y - &x * &beta;
    let s2 = resid.norm_squared() / (n - p) as f64;
    (beta.iter().copied().collect(), s2)
}

/// Largest componentwise gap relative to the reference vector's scale.
pub fn rel_gap(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
    got.iter()
        .zip(want)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max)
}

pub struct Instance {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
}

/// Random well-scaled regression problem: p <= 10, n <= 500.
pub fn instance(rng: &mut impl rand::Rng) -> Instance {
    let p = rng.random_range(1..=10);
    let n = rng.random_range(p + 2..=500);
    let intercept = rng.random_bool(0.7);
    let scales: Vec<(f64, f64)> = (0..p)
        .map(|_| (rng.random_range(-50.0..50.0), rng.random_range(1.0..10.0)))
        .collect();
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-5.0..5.0)).collect();
    let sd = rng.random_range(0.5..5.0);
    let z = Normal::new(0.0, 1.0).unwrap();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = scales
            .iter()
            .enumerate()
            .map(|(j, (mu, s))| {
                if intercept && j == 0 {
                    1.0
                } else {
                    mu + s * z.sample(rng)
                }
            })
            .collect();
        let y = x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + sd * z.sample(rng);
        xs.push(x);
        ys.push(y);
    }
    Instance { xs, ys }
}

/// Random batch lengths summing to `n`, zero-length batches included.
pub fn segments(rng: &mut impl rand::Rng, n: usize) -> Vec<usize> {
    let mut cuts = vec![0, n];
    for _ in 0..rng.random_range(0..12) {
        cuts.push(rng.random_range(0..=n));
    }
    cuts.sort_unstable();
    cuts.windows(2).map(|w| w[1] - w[0]).collect()
}
