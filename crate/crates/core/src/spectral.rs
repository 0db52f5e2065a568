//! Residual spectra: grid sampling, 2-D DFT, dominant modes and PSD-weighted
//! frequency sampling.
//!
//! Grids are uniform and periodic-style: axis `a` has `N_a` nodes
//! `lo_a + i·L_a/N_a`, `i = 0..N_a`, so `hi_a` itself is never sampled.
//! The forward DFT carries the `1/(N_x N_y)` factor, so `g = Σ_k c_k e^{+i…}`
//! and a unit cosine shows up as two conjugate coefficients of magnitude ½.

use num_complex::Complex64;
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::{check_dim, Error, Result};

/// Axis-aligned rectangle `[[x_lo, x_hi], [y_lo, y_hi]]`.
pub type Domain2 = [[f64; 2]; 2];

/// Real samples of a field on a uniform `N_x × N_y` grid, row-major in `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    nx: usize,
    ny: usize,
    domain: Domain2,
    values: Vec<f64>,
}

fn check_resolution(nx: usize, ny: usize) -> Result<()> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid resolution must be at least 2 per axis, got {nx}×{ny}"
        )));
    }
    Ok(())
}

fn check_domain(domain: &Domain2) -> Result<()> {
    for axis in domain {
        if !(axis[1] > axis[0]) || !axis[0].is_finite() || !axis[1].is_finite() {
            return Err(Error::InvalidArgument(format!("invalid domain axis {axis:?}")));
        }
    }
    Ok(())
}

impl GridField {
    pub fn new(nx: usize, ny: usize, domain: Domain2, values: Vec<f64>) -> Result<Self> {
        check_resolution(nx, ny)?;
        check_domain(&domain)?;
        check_dim("grid values", nx * ny, values.len())?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("grid node ({}, {})", pos / ny, pos % ny),
                value: values[pos],
            });
        }
        Ok(Self {
            nx,
            ny,
            domain,
            values,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn domain(&self) -> Domain2 {
        self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ny + j]
    }

    pub fn x(&self, i: usize) -> f64 {
        grid_coord(self.domain[0], self.nx, i)
    }

    pub fn y(&self, j: usize) -> f64 {
        grid_coord(self.domain[1], self.ny, j)
    }

    /// Grid node coordinates in the same order as [`values`](Self::values).
    pub fn nodes(&self) -> Vec<f64> {
        grid_nodes(self.domain, self.nx, self.ny)
    }
}

#[inline]
fn grid_coord(axis: [f64; 2], n: usize, i: usize) -> f64 {
    axis[0] + (axis[1] - axis[0]) * i as f64 / n as f64
}

/// Flat `(x, y)` pairs of the periodic-style grid, row-major in `x`.
pub fn grid_nodes(domain: Domain2, nx: usize, ny: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            out.push(grid_coord(domain[0], nx, i));
            out.push(grid_coord(domain[1], ny, j));
        }
    }
    out
}

/// Sample `f` on the uniform grid including `lo` and excluding `hi`.
pub fn sample_on_grid(
    f: impl Fn(f64, f64) -> f64,
    domain: Domain2,
    resolution: (usize, usize),
) -> Result<GridField> {
    let (nx, ny) = resolution;
    check_resolution(nx, ny)?;
    check_domain(&domain)?;
    let mut values = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        let x = grid_coord(domain[0], nx, i);
        for j in 0..ny {
            let y = grid_coord(domain[1], ny, j);
            let v = f(x, y);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    location: format!("({x}, {y})"),
                    value: v,
                });
            }
            values.push(v);
        }
    }
    GridField::new(nx, ny, domain, values)
}

/// Signed frequency index of DFT bin `p` on an axis of `n` bins, in `(-n/2, n/2]`.
#[inline]
pub fn signed_index(p: usize, n: usize) -> i64 {
    if 2 * p <= n {
        p as i64
    } else {
        p as i64 - n as i64
    }
}

/// Complex DFT coefficients of a [`GridField`].
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    nx: usize,
    ny: usize,
    domain: Domain2,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn domain(&self) -> Domain2 {
        self.domain
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeff(&self, p: usize, q: usize) -> Complex64 {
        self.coeffs[p * self.ny + q]
    }

    pub fn amplitude(&self, p: usize, q: usize) -> f64 {
        self.coeff(p, q).norm()
    }

    pub fn phase(&self, p: usize, q: usize) -> f64 {
        self.coeff(p, q).arg()
    }

    pub fn index(&self, p: usize, q: usize) -> [i64; 2] {
        [signed_index(p, self.nx), signed_index(q, self.ny)]
    }

    /// Cyclic frequency (cycles per unit length) of bin `(p, q)`.
    pub fn cyclic_frequency(&self, p: usize, q: usize) -> [f64; 2] {
        cyclic_frequency(&self.domain, self.index(p, q))
    }

    /// Angular frequency `2π · cyclic` of bin `(p, q)`.
    pub fn angular_frequency(&self, p: usize, q: usize) -> [f64; 2] {
        let c = self.cyclic_frequency(p, q);
        [TAU * c[0], TAU * c[1]]
    }

    /// Inverse transform back to grid samples.
    pub fn inverse(&self) -> GridField {
        let mut data = self.coeffs.clone();
        transform_2d(&mut data, self.nx, self.ny, true);
        let values = data.iter().map(|c| c.re).collect();
        GridField {
            nx: self.nx,
            ny: self.ny,
            domain: self.domain,
            values,
        }
    }
}

fn cyclic_frequency(domain: &Domain2, index: [i64; 2]) -> [f64; 2] {
    [
        index[0] as f64 / (domain[0][1] - domain[0][0]),
        index[1] as f64 / (domain[1][1] - domain[1][0]),
    ]
}

/// In-place unnormalized 2-D transform of row-major `nx × ny` data.
fn transform_2d(data: &mut [Complex64], nx: usize, ny: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(ny), planner.plan_fft_inverse(nx))
    } else {
        (planner.plan_fft_forward(ny), planner.plan_fft_forward(nx))
    };
    for row in data.chunks_exact_mut(ny) {
        row_fft.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); nx];
    for q in 0..ny {
        for p in 0..nx {
            column[p] = data[p * ny + q];
        }
        col_fft.process(&mut column);
        for p in 0..nx {
            data[p * ny + q] = column[p];
        }
    }
}

/// Forward 2-D DFT, `c(p,q) = (1/N_x N_y) Σ g(i,j) e^{-2πi(pi/N_x + qj/N_y)}`.
pub fn dft2(g: &GridField) -> Spectrum {
    let mut data: Vec<Complex64> = g.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_2d(&mut data, g.nx, g.ny, false);
    let norm = 1.0 / (g.nx * g.ny) as f64;
    data.iter_mut().for_each(|c| *c *= norm);
    Spectrum {
        nx: g.nx,
        ny: g.ny,
        domain: g.domain,
        coeffs: data,
    }
}

/// One retained Fourier mode `α cos(k · x + θ)` in absolute coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralMode {
    /// Signed integer DFT index per axis.
    pub index: [i64; 2],
    /// Angular frequency vector `k`.
    pub frequency: [f64; 2],
    /// Amplitude normalized by [`SpectralModes::scale`].
    pub alpha: f64,
    pub phase: f64,
}

/// Dominant modes of a spectrum, sorted by descending amplitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralModes {
    pub modes: Vec<SpectralMode>,
    /// Largest retained real-series amplitude; `α_j · scale` is the physical amplitude.
    pub scale: f64,
}

impl SpectralModes {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn frequencies(&self) -> Vec<Vec<f64>> {
        self.modes.iter().map(|m| m.frequency.to_vec()).collect()
    }

    pub fn phases(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.phase).collect()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.alpha).collect()
    }

    /// `scale · Σ α_j cos(k_j · x + θ_j)`.
    pub fn series_value(&self, x: f64, y: f64) -> f64 {
        self.scale
            * self
                .modes
                .iter()
                .map(|m| m.alpha * (m.frequency[0] * x + m.frequency[1] * y + m.phase).cos())
                .sum::<f64>()
    }
}

#[inline]
fn is_self_conjugate(p: usize, n: usize) -> bool {
    (2 * p) % n == 0
}

/// Representatives of the conjugate orbits `{k, −k}`: bins with `k_y > 0`,
/// plus `k_x ≥ 0` on the self-conjugate rows `k_y = 0` (and `k_y = N_y/2`).
fn non_redundant_bins(nx: usize, ny: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for p in 0..nx {
        for q in 0..ny {
            let keep = if is_self_conjugate(q, ny) {
                is_self_conjugate(p, nx) || signed_index(p, nx) > 0
            } else {
                signed_index(q, ny) > 0
            };
            if keep {
                out.push((p, q));
            }
        }
    }
    out
}

fn wrap_phase(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(TAU);
    if t > PI {
        t -= TAU;
    }
    t
}

/// Real-series amplitude and absolute-coordinate phase of bin `(p, q)`.
fn real_mode(s: &Spectrum, p: usize, q: usize) -> (f64, f64) {
    let c = s.coeff(p, q);
    let omega = s.angular_frequency(p, q);
    let shift = omega[0] * s.domain[0][0] + omega[1] * s.domain[1][0];
    if is_self_conjugate(p, s.nx) && is_self_conjugate(q, s.ny) {
        let base = if c.re >= 0.0 { 0.0 } else { PI };
        let theta = if omega == [0.0, 0.0] {
            base
        } else {
            wrap_phase(base - shift)
        };
        (c.re.abs(), theta)
    } else {
        (2.0 * c.norm(), wrap_phase(c.arg() - shift))
    }
}

/// The `n_f` largest-amplitude modes of the non-redundant half spectrum.
pub fn extract_top_modes(s: &Spectrum, n_f: usize) -> Result<SpectralModes> {
    extract_top_modes_multi(std::slice::from_ref(s), n_f)
}

/// Mode selection over the combined power of several component spectra on
/// the same grid. Each mode takes its phase from the component with the
/// largest amplitude at that bin; its amplitude is the root of the summed
/// component powers.
pub fn extract_top_modes_multi(spectra: &[Spectrum], n_f: usize) -> Result<SpectralModes> {
    let first = spectra
        .first()
        .ok_or_else(|| Error::InvalidArgument("no spectra given".into()))?;
    for s in spectra {
        if s.nx != first.nx || s.ny != first.ny {
            return Err(Error::InvalidArgument("spectra have different grids".into()));
        }
    }
    let bins = non_redundant_bins(first.nx, first.ny);
    if n_f == 0 || n_f > bins.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {n_f} modes but only {} non-redundant modes exist",
            bins.len()
        )));
    }
    let mut candidates: Vec<(f64, SpectralMode)> = bins
        .into_iter()
        .map(|(p, q)| {
            let mut power = 0.0;
            let mut best = (f64::NEG_INFINITY, 0.0);
            for s in spectra {
                let (a, theta) = real_mode(s, p, q);
                power += a * a;
                if a > best.0 {
                    best = (a, theta);
                }
            }
            let amp = power.sqrt();
            (
                amp,
                SpectralMode {
                    index: first.index(p, q),
                    frequency: first.angular_frequency(p, q),
                    alpha: amp,
                    phase: best.1,
                },
            )
        })
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    candidates.truncate(n_f);
    let scale = candidates[0].0;
    let modes = candidates
        .into_iter()
        .map(|(amp, mut m)| {
            m.alpha = if scale > 0.0 { amp / scale } else { 0.0 };
            m
        })
        .collect();
    Ok(SpectralModes { modes, scale })
}

/// Power spectral density `|c(k)|²` on the full DFT grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSpectrum {
    nx: usize,
    ny: usize,
    domain: Domain2,
    power: Vec<f64>,
}

impl PowerSpectrum {
    pub fn new(nx: usize, ny: usize, domain: Domain2, power: Vec<f64>) -> Result<Self> {
        check_resolution(nx, ny)?;
        check_dim("power values", nx * ny, power.len())?;
        if power.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("power must be finite and non-negative".into()));
        }
        Ok(Self {
            nx,
            ny,
            domain,
            power,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn values(&self) -> &[f64] {
        &self.power
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.power[p * self.ny + q]
    }

    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }

    pub fn cyclic_frequency(&self, p: usize, q: usize) -> [f64; 2] {
        cyclic_frequency(
            &self.domain,
            [signed_index(p, self.nx), signed_index(q, self.ny)],
        )
    }

    /// Cyclic frequencies of every bin in enumeration order.
    pub fn support(&self) -> Vec<[f64; 2]> {
        (0..self.nx)
            .flat_map(|p| (0..self.ny).map(move |q| (p, q)))
            .map(|(p, q)| self.cyclic_frequency(p, q))
            .collect()
    }

    /// Magnitude of the cyclic frequency vector at the PSD maximum.
    pub fn dominant_frequency(&self) -> f64 {
        let (best, _) = self
            .power
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let f = self.cyclic_frequency(best / self.ny, best % self.ny);
        f[0].hypot(f[1])
    }
}

/// Elementwise squared magnitude of the DFT coefficients.
pub fn psd(s: &Spectrum) -> PowerSpectrum {
    PowerSpectrum {
        nx: s.nx,
        ny: s.ny,
        domain: s.domain,
        power: s.coeffs.iter().map(|c| c.norm_sqr()).collect(),
    }
}

/// Summed PSD of several component spectra on the same grid.
pub fn psd_multi(spectra: &[Spectrum]) -> Result<PowerSpectrum> {
    let mut iter = spectra.iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::InvalidArgument("no spectra given".into()))?;
    let mut out = psd(first);
    for s in iter {
        if s.nx != out.nx || s.ny != out.ny {
            return Err(Error::InvalidArgument("spectra have different grids".into()));
        }
        for (a, c) in out.power.iter_mut().zip(&s.coeffs) {
            *a += c.norm_sqr();
        }
    }
    Ok(out)
}

/// Discrete distribution over frequency vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyDistribution {
    pub support: Vec<[f64; 2]>,
    pub probs: Vec<f64>,
}

impl FrequencyDistribution {
    pub fn uniform(support: Vec<[f64; 2]>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidArgument("empty frequency support".into()));
        }
        let p = 1.0 / support.len() as f64;
        let probs = vec![p; support.len()];
        Ok(Self { support, probs })
    }
}

/// `p(k) = P(k) / Σ P(k)`.
pub fn normalize_psd(power: &PowerSpectrum) -> Result<FrequencyDistribution> {
    let total = power.total();
    if !(total > 0.0) {
        return Err(Error::DegenerateResidual(
            "power spectrum is identically zero".into(),
        ));
    }
    Ok(FrequencyDistribution {
        support: power.support(),
        probs: power.power.iter().map(|p| p / total).collect(),
    })
}

/// `m` independent draws (with replacement) by inverse CDF over the support
/// in enumeration order.
pub fn sample_frequencies(
    dist: &FrequencyDistribution,
    m: usize,
    seed: u64,
) -> Result<Vec<[f64; 2]>> {
    if m == 0 {
        return Err(Error::InvalidArgument("must draw at least one frequency".into()));
    }
    check_dim("distribution", dist.support.len(), dist.probs.len())?;
    let mut cdf = Vec::with_capacity(dist.probs.len());
    let mut acc = 0.0;
    for p in &dist.probs {
        acc += p;
        cdf.push(acc);
    }
    let last_positive = dist
        .probs
        .iter()
        .rposition(|&p| p > 0.0)
        .ok_or_else(|| Error::DegenerateResidual("distribution has no mass".into()))?;
    let total = acc;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..m)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * total;
            let i = cdf.partition_point(|&c| c <= u).min(last_positive);
            dist.support[i]
        })
        .collect())
}

/// RFF frequency matrix (rows in draw order) and phases `b_j ~ U[0, 2π)`.
pub fn build_rff_layer(freqs: &[[f64; 2]], seed: u64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if freqs.is_empty() {
        return Err(Error::InvalidArgument("no frequencies given".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(0.0, TAU);
    let rows = freqs.iter().map(|f| f.to_vec()).collect();
    let phases = freqs.iter().map(|_| dist.sample(&mut rng)).collect();
    Ok((rows, phases))
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: Domain2 = [[0.0, 1.0], [0.0, 1.0]];

    #[test]
    fn sampling_examples() {
        let g = sample_on_grid(|_, _| 3.0, UNIT, (4, 4)).unwrap();
        assert!(g.values().iter().all(|&v| v == 3.0));
        let g = sample_on_grid(|x, _| x, UNIT, (4, 4)).unwrap();
        let col: Vec<f64> = (0..4).map(|i| g.get(i, 2)).collect();
        assert_eq!(col, vec![0.0, 0.25, 0.5, 0.75]);
        let f = |x: f64, _: f64| (TAU * 2.0 * x).cos();
        let g = sample_on_grid(f, UNIT, (16, 16)).unwrap();
        for i in 0..16 {
            assert_eq!(g.get(i, 5), f(g.x(i), 0.0));
        }
    }

    #[test]
    fn sampling_errors() {
        assert!(sample_on_grid(|_, _| 1.0, UNIT, (1, 4)).is_err());
        let err = sample_on_grid(|x, _| 1.0 / (x - 0.5), UNIT, (4, 4)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert!(err.to_string().contains("0.5"));
    }

    #[test]
    fn constant_field_spectrum() {
        let g = sample_on_grid(|_, _| 2.5, UNIT, (8, 6)).unwrap();
        let s = dft2(&g);
        assert!((s.coeff(0, 0).re - 2.5).abs() < 1e-14);
        for (i, c) in s.coeffs().iter().enumerate().skip(1) {
            assert!(c.norm() <= 1e-12, "bin {i}");
        }
        let modes = extract_top_modes(&s, 1).unwrap();
        assert_eq!(modes.modes[0].index, [0, 0]);
        assert_eq!(modes.modes[0].phase, 0.0);
        assert!((modes.scale - 2.5).abs() < 1e-14);
    }

    #[test]
    fn negative_dc_has_phase_pi() {
        let g = sample_on_grid(|_, _| -1.5, UNIT, (4, 4)).unwrap();
        let m = extract_top_modes(&dft2(&g), 1).unwrap();
        assert_eq!(m.modes[0].phase, PI);
        assert!((m.series_value(0.3, 0.1) + 1.5).abs() < 1e-14);
    }

    #[test]
    fn psd_examples() {
        let zero = sample_on_grid(|_, _| 0.0, UNIT, (4, 4)).unwrap();
        assert!(psd(&dft2(&zero)).values().iter().all(|&v| v == 0.0));
        assert!(matches!(
            normalize_psd(&psd(&dft2(&zero))),
            Err(Error::DegenerateResidual(_))
        ));
        assert_eq!(Complex64::new(3.0, 4.0).norm_sqr(), 25.0);
    }

    #[test]
    fn normalize_examples() {
        let p = PowerSpectrum::new(2, 2, UNIT, vec![0.0, 0.0, 7.0, 0.0]).unwrap();
        assert_eq!(normalize_psd(&p).unwrap().probs, vec![0.0, 0.0, 1.0, 0.0]);
        let p = PowerSpectrum::new(2, 2, UNIT, vec![2.0; 4]).unwrap();
        assert_eq!(normalize_psd(&p).unwrap().probs, vec![0.25; 4]);
        let p = PowerSpectrum::new(2, 2, UNIT, vec![1.0, 3.0, 0.0, 0.0]).unwrap();
        let d = normalize_psd(&p).unwrap();
        assert_eq!(&d.probs[..2], &[0.25, 0.75]);
    }

    #[test]
    fn concentrated_distribution_draws_one_frequency() {
        let dist = FrequencyDistribution {
            support: vec![[1.0, 0.0], [2.0, 3.0], [4.0, 0.0]],
            probs: vec![0.0, 1.0, 0.0],
        };
        let draws = sample_frequencies(&dist, 50, 3).unwrap();
        assert!(draws.iter().all(|f| *f == [2.0, 3.0]));
        assert_eq!(draws, sample_frequencies(&dist, 50, 3).unwrap());
        assert!(sample_frequencies(&dist, 0, 3).is_err());
    }

    #[test]
    fn rff_layer_examples() {
        let (b, ph) = build_rff_layer(&[[0.0, 0.0]], 5).unwrap();
        assert_eq!(b, vec![vec![0.0, 0.0]]);
        assert!(ph[0] >= 0.0 && ph[0] < TAU);
        let (b, ph) = build_rff_layer(&[[1.0, 0.0], [0.0, 2.0], [3.0, 3.0]], 5).unwrap();
        assert_eq!(b, vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 3.0]]);
        assert_eq!(ph.len(), 3);
        assert!(build_rff_layer(&[], 0).is_err());
    }

    #[test]
    fn top_modes_rejects_too_many() {
        let g = sample_on_grid(|x, y| x + y, UNIT, (4, 4)).unwrap();
        let s = dft2(&g);
        // 4×4 grid: 16 bins, 4 self-conjugate, so 4 + 12/2 = 10 orbits.
        assert!(extract_top_modes(&s, 10).is_ok());
        assert!(extract_top_modes(&s, 11).is_err());
        assert!(extract_top_modes(&s, 0).is_err());
    }

    #[test]
    fn dominant_frequency_of_single_mode() {
        let g = sample_on_grid(|x, _| (TAU * 4.0 * x).sin(), UNIT, (32, 8)).unwrap();
        let p = psd(&dft2(&g));
        assert!((p.dominant_frequency() - 4.0).abs() < 1e-12);
    }
}
