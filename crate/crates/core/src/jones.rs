//! 2×2 Jones calculus for the ellipsometer: element matrices, the
//! Fabry-Perot resolvent, and the detected-intensity expansion.
//!
//! Frame: beam along Z, input polarisation along X. Small parameters
//! (ψ, η, α) are ellipticities and the element matrices are first order in them.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Above this magnitude a "small" ellipticity parameter is outside the
/// first-order formalism. Constructors still proceed.
pub const SMALL_PARAMETER_WARN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JonesVector<F> {
    pub x: Complex<F>,
    pub y: Complex<F>,
}

impl<F: Real> JonesVector<F> {
    pub fn new(x: Complex<F>, y: Complex<F>) -> Self {
        Self { x, y }
    }

    /// Unit field polarised along X.
    pub fn horizontal() -> Self {
        Self::new(Complex::new(F::one(), F::zero()), Complex::new(F::zero(), F::zero()))
    }

    pub fn vertical() -> Self {
        Self::new(Complex::new(F::zero(), F::zero()), Complex::new(F::one(), F::zero()))
    }

    /// |E_x|² + |E_y|²
    pub fn intensity(&self) -> F {
        self.x.norm_sqr() + self.y.norm_sqr()
    }

    /// Small-angle ellipticity of a field whose major axis lies along X:
    /// Im(E_y / E_x).
    pub fn ellipticity(&self) -> F {
        (self.y / self.x).im
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JonesMatrix<F> {
    /// Row-major entries `[[a, b], [c, d]]`.
    pub m: [[Complex<F>; 2]; 2],
}

impl<F: Real> JonesMatrix<F> {
    pub fn new(a: Complex<F>, b: Complex<F>, c: Complex<F>, d: Complex<F>) -> Self {
        Self { m: [[a, b], [c, d]] }
    }

    pub fn identity() -> Self {
        Self::scalar(Complex::new(F::one(), F::zero()))
    }

    pub fn scalar(s: Complex<F>) -> Self {
        let z = Complex::new(F::zero(), F::zero());
        Self::new(s, z, z, s)
    }

    pub fn scale(&self, s: Complex<F>) -> Self {
        let m = self.m;
        Self::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    pub fn det(&self) -> Complex<F> {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(&self) -> Complex<F> {
        self.m[0][0] + self.m[1][1]
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> F {
        self.m.iter().flatten().map(|z| z.norm()).fold(F::zero(), F::max)
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Exact 2×2 inverse.
    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        let scale = self.max_abs();
        if !(det.norm() > lit::<F>(1e3) * F::epsilon() * scale * scale) {
            return Err(Error::Singular(format!("|det| = {} for entries of size {}", det.norm(), scale)));
        }
        let m = self.m;
        let inv = Complex::new(F::one(), F::zero()) / det;
        Ok(Self::new(m[1][1] * inv, -m[0][1] * inv, -m[1][0] * inv, m[0][0] * inv))
    }

    pub fn apply(&self, v: &JonesVector<F>) -> JonesVector<F> {
        JonesVector::new(self.m[0][0] * v.x + self.m[0][1] * v.y, self.m[1][0] * v.x + self.m[1][1] * v.y)
    }

    /// Eigenvalues of the 2×2 matrix.
    pub fn eigenvalues(&self) -> (Complex<F>, Complex<F>) {
        let half = lit::<F>(0.5);
        let tr = self.trace();
        let disc = (tr * tr * half * half - self.det()).sqrt();
        (tr * half + disc, tr * half - disc)
    }
}

impl<F: Real> Mul for JonesMatrix<F> {
    type Output = Self;

    fn mul(self, b: Self) -> Self {
        let a = self.m;
        let b = b.m;
        Self::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

impl<F: Real> Add for JonesMatrix<F> {
    type Output = Self;

    fn add(self, b: Self) -> Self {
        let (a, b) = (self.m, b.m);
        Self::new(a[0][0] + b[0][0], a[0][1] + b[0][1], a[1][0] + b[1][0], a[1][1] + b[1][1])
    }
}

impl<F: Real> Sub for JonesMatrix<F> {
    type Output = Self;

    fn sub(self, b: Self) -> Self {
        let (a, b) = (self.m, b.m);
        Self::new(a[0][0] - b[0][0], a[0][1] - b[0][1], a[1][0] - b[1][0], a[1][1] - b[1][1])
    }
}

/// Whether a first-order small parameter is outside its comfortable range.
pub fn exceeds_small_parameter<F: Real>(p: F) -> bool {
    p.abs() > lit(SMALL_PARAMETER_WARN)
}

/// Uniaxial birefringent element with ellipticity parameter ψ and slow axis at θ from X.
pub fn brf_matrix<F: Real>(psi: F, theta: F) -> JonesMatrix<F> {
    let two_theta = theta + theta;
    let c = psi * two_theta.cos();
    let s = psi * two_theta.sin();
    JonesMatrix::new(
        Complex::new(F::one(), c),
        Complex::new(F::zero(), s),
        Complex::new(F::zero(), s),
        Complex::new(F::one(), -c),
    )
}

/// Ellipticity modulator: a birefringent element at 45°.
pub fn mod_matrix<F: Real>(eta: F) -> JonesMatrix<F> {
    let one = Complex::new(F::one(), F::zero());
    let ie = Complex::new(F::zero(), eta);
    JonesMatrix::new(one, ie, ie, one)
}

/// Spurious ellipticity α, placed after the cavity like the modulator.
pub fn sp_matrix<F: Real>(alpha: F) -> JonesMatrix<F> {
    mod_matrix(alpha)
}

/// Analyser crossed with the input polariser: passes Y only.
pub fn analyzer_matrix<F: Real>() -> JonesMatrix<F> {
    let z = Complex::new(F::zero(), F::zero());
    JonesMatrix::new(z, z, z, Complex::new(F::one(), F::zero()))
}

/// Mirror power coefficients T = t², R = r², P = p².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorParams<F> {
    pub t2: F,
    pub r2: F,
    pub p2: F,
}

impl<F: Real> MirrorParams<F> {
    pub fn new(t2: F, r2: F, p2: F) -> Result<Self> {
        let mut errs = Vec::new();
        for (name, v) in [("t2", t2), ("r2", r2), ("p2", p2)] {
            if !(v >= F::zero() && v <= F::one()) {
                errs.push(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        let sum = t2 + r2 + p2;
        if (sum - F::one()).abs() > lit::<F>(1e-12).max(lit::<F>(16.0) * F::epsilon()) {
            errs.push(format!("t2 + r2 + p2 must equal 1, got {sum}"));
        }
        if errs.is_empty() { Ok(Self { t2, r2, p2 }) } else { Err(Error::Validation(errs)) }
    }

    /// Lossless mirror with the given reflectance.
    pub fn lossless(r2: F) -> Result<Self> {
        Self::new(F::one() - r2, r2, F::zero())
    }

    /// On-resonance field transmission of the cavity, t²/(1 − r²) = T/(T + P).
    pub fn resonant_field_transmission(&self) -> F {
        self.t2 / (self.t2 + self.p2)
    }

    /// On-resonance power transmission (T/(T + P))².
    pub fn resonant_power_transmission(&self) -> F {
        self.resonant_field_transmission().powi(2)
    }

    pub fn finesse(&self) -> Result<F> {
        finesse(self.r2)
    }
}

/// Cavity geometry and lock state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityState<F> {
    /// m
    pub length: F,
    /// δ = 4πd/λ, rad
    pub roundtrip_phase: F,
    pub finesse: F,
}

impl<F: Real> CavityState<F> {
    pub fn new(length: F, wavelength: F, mirrors: &MirrorParams<F>) -> Result<Self> {
        if !(length > F::zero() && wavelength > F::zero()) {
            return Err(Error::Domain("cavity length and wavelength must be > 0".into()));
        }
        Ok(Self {
            length,
            roundtrip_phase: lit::<F>(4.0) * F::PI() * length / wavelength,
            finesse: mirrors.finesse()?,
        })
    }

    /// Distance of δ from the nearest multiple of 2π.
    pub fn detuning(&self) -> F {
        let tau = F::TAU();
        let r = self.roundtrip_phase % tau;
        if r > F::PI() { r - tau } else { r }
    }

    pub fn is_resonant(&self, tol: F) -> bool {
        self.detuning().abs() <= tol
    }
}

fn check_r2<F: Real>(r2: F) -> Result<()> {
    if r2 >= F::zero() && r2 < F::one() {
        Ok(())
    } else {
        Err(Error::Domain(format!("mirror reflectance r² must lie in [0, 1), got {r2}")))
    }
}

/// 𝓕 = π √R / (1 − R)
pub fn finesse<F: Real>(r2: F) -> Result<F> {
    check_r2(r2)?;
    Ok(F::PI() * r2.sqrt() / (F::one() - r2))
}

/// Ellipticity gain of the cavity, (1 + R)/(1 − R) ≈ 2𝓕/π.
pub fn amplification<F: Real>(r2: F) -> Result<F> {
    check_r2(r2)?;
    Ok((F::one() + r2) / (F::one() - r2))
}

/// Inverse of [`finesse`]: the reflectance giving finesse `f`.
pub fn r2_from_finesse<F: Real>(f: F) -> Result<F> {
    if !(f > F::zero()) || !f.is_finite() {
        return Err(Error::Domain(format!("finesse must be > 0, got {f}")));
    }
    // f R + π √R − f = 0, quadratic in √R
    let pi = F::PI();
    let two = lit::<F>(2.0);
    let four = lit::<F>(4.0);
    let sqrt_r = (-pi + (pi * pi + four * f * f).sqrt()) / (two * f);
    Ok(sqrt_r * sqrt_r)
}

/// Single-pass phase retardation of a nearly-identity element: the
/// argument difference of its eigenvalues.
pub fn single_pass_retardation<F: Real>(m: &JonesMatrix<F>) -> F {
    let (l1, l2) = m.eigenvalues();
    (l1 / l2).arg().abs()
}

/// Jones matrix of the cavity followed by `downstream` elements (listed in
/// the order the beam meets them):
///
/// `D · t² e^{iδ/2} [I − M² r² e^{iδ}]⁻¹ · M`
///
/// with `M` the intracavity element. The resolvent is an exact 2×2 inverse.
/// Refuses configurations whose accumulated birefringent phase exceeds π/2.
pub fn cavity_chain<F: Real>(
    mirrors: &MirrorParams<F>,
    delta: F,
    intracavity: &JonesMatrix<F>,
    downstream: &[JonesMatrix<F>],
) -> Result<JonesMatrix<F>> {
    check_r2(mirrors.r2)?;
    let accumulated = single_pass_retardation(intracavity) * amplification(mirrors.r2)?;
    if accumulated > F::FRAC_PI_2() {
        return Err(Error::TwoResonance(accumulated.to_f64_lossy()));
    }
    let round_trip = Complex::from_polar(mirrors.r2, delta);
    let m2 = *intracavity * *intracavity;
    let resolvent = (JonesMatrix::identity() - m2.scale(round_trip)).inverse()?;
    let entrance = Complex::from_polar(mirrors.t2, delta / lit(2.0));
    let cavity = resolvent.scale(entrance) * *intracavity;
    let out = downstream.iter().fold(cavity, |acc, d| *d * acc);
    if !out.is_finite() {
        return Err(Error::Singular("non-finite cavity transfer matrix".into()));
    }
    Ok(out)
}

/// Detected intensity, first order in the small parameters:
/// `I_out [σ² + η² + α² + 2ηΨ + 2ηα]`, where Ψ already contains sin 2θ and
/// the cavity gain.
pub fn transmitted_intensity<F: Real>(i_out: F, sigma2: F, alpha: F, eta: F, psi: F) -> F {
    let two = lit::<F>(2.0);
    i_out * (sigma2 + eta * eta + alpha * alpha + two * eta * psi + two * eta * alpha)
}

/// Detected intensity from the full matrix chain SP·MOD·cavity, analyser
/// applied, σ² added incoherently. `I_out` is the power reaching the analyser.
pub fn chain_intensity<F: Real>(
    i_in: F,
    mirrors: &MirrorParams<F>,
    delta: F,
    intracavity: &JonesMatrix<F>,
    eta: F,
    alpha: F,
    sigma2: F,
) -> Result<(F, F)> {
    let chain = cavity_chain(mirrors, delta, intracavity, &[mod_matrix(eta), sp_matrix(alpha)])?;
    let e = chain.apply(&JonesVector::horizontal());
    let i_out = i_in * e.intensity();
    let crossed = analyzer_matrix().apply(&e);
    Ok((i_out, i_in * crossed.intensity() + sigma2 * i_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};

    type C = Complex<f64>;

    fn assert_mat_eq(a: &JonesMatrix<f64>, b: &JonesMatrix<f64>, eps: f64) {
        for (x, y) in a.m.iter().flatten().zip(b.m.iter().flatten()) {
            assert_abs_diff_eq!(x.re, y.re, epsilon = eps);
            assert_abs_diff_eq!(x.im, y.im, epsilon = eps);
        }
    }

    /// Σ_{n=0}^{N-1} [M² r² e^{iδ}]ⁿ · M · t² e^{iδ/2}, summed term by term.
    fn cavity_series(mirrors: &MirrorParams<f64>, delta: f64, m: &JonesMatrix<f64>, terms: usize) -> JonesMatrix<f64> {
        let step = (*m * *m).scale(C::from_polar(mirrors.r2, delta));
        let mut power = JonesMatrix::identity();
        let mut sum = JonesMatrix::scalar(C::new(0.0, 0.0));
        for _ in 0..terms {
            sum = sum + power;
            power = power * step;
        }
        (sum * *m).scale(C::from_polar(mirrors.t2, delta / 2.0))
    }

    #[test]
    fn brf_cases() {
        assert_mat_eq(&brf_matrix(0.0, 0.3), &JonesMatrix::identity(), 0.0);
        let m = brf_matrix(1e-3, FRAC_PI_4);
        assert_abs_diff_eq!(m.m[0][1].im, 1e-3, epsilon = 1e-18);
        assert_abs_diff_eq!(m.m[0][0].re, 1.0);
        assert_abs_diff_eq!(m.m[0][0].im, 0.0, epsilon = 1e-18);
        let m = brf_matrix(1e-3, FRAC_PI_8);
        assert_relative_eq!(m.m[0][0].im, 1e-3 / 2f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(m.m[1][1].im, -1e-3 / 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn modulator_cases() {
        assert_mat_eq(&mod_matrix(0.0), &JonesMatrix::identity(), 0.0);
        assert_mat_eq(&mod_matrix(0.02), &brf_matrix(0.02, FRAC_PI_4), 1e-17);
        assert_eq!(mod_matrix(0.1).m[1][0], C::new(0.0, 0.1));
        assert!(exceeds_small_parameter(0.2) && !exceeds_small_parameter(0.05));
    }

    #[test]
    fn analyzer_cases() {
        let a = analyzer_matrix::<f64>();
        assert_eq!(a.apply(&JonesVector::horizontal()).intensity(), 0.0);
        assert_eq!(a.apply(&JonesVector::vertical()), JonesVector::vertical());
        assert_eq!(a * a, a);
    }

    #[test]
    fn inverse_roundtrip_and_singular() {
        let m = JonesMatrix::new(C::new(1.0, 0.2), C::new(0.3, -0.1), C::new(0.0, 0.5), C::new(2.0, 0.0));
        assert_mat_eq(&(m * m.inverse().unwrap()), &JonesMatrix::identity(), 1e-14);
        let s = JonesMatrix::new(C::new(1.0, 0.0), C::new(2.0, 0.0), C::new(2.0, 0.0), C::new(4.0, 0.0));
        assert!(matches!(s.inverse(), Err(Error::Singular(_))));
    }

    #[test]
    fn mirror_budget() {
        assert!(MirrorParams::new(1e-5, 0.99998, 1e-5).is_ok());
        assert!(matches!(MirrorParams::new(0.1, 0.8, 0.2), Err(Error::Validation(_))));
        let m = MirrorParams::new(2e-6, 0.999996, 2e-6).unwrap();
        assert_relative_eq!(m.resonant_field_transmission(), 0.5, max_relative = 1e-9);
        assert_relative_eq!(m.resonant_field_transmission(), m.t2 / (1.0 - m.r2), max_relative = 1e-9);
    }

    #[test]
    fn identity_cavity_on_resonance_is_geometric_series() {
        let mirrors = MirrorParams::new(0.004, 0.995, 0.001).unwrap();
        let out = cavity_chain(&mirrors, 0.0, &JonesMatrix::identity(), &[]).unwrap();
        let expect = mirrors.t2 / (1.0 - mirrors.r2);
        assert_mat_eq(&out, &JonesMatrix::scalar(C::new(expect, 0.0)), 1e-12);
    }

    #[test]
    fn cavity_amplifies_ellipticity() {
        let mirrors = MirrorParams::lossless(0.9999).unwrap();
        let psi = 1e-8;
        let m = brf_matrix(psi, FRAC_PI_4);
        let closed = cavity_chain(&mirrors, 0.0, &m, &[]).unwrap();
        let series = cavity_series(&mirrors, 0.0, &m, 1_000_000);
        assert_mat_eq(&closed, &series, 1e-9);
        let e = closed.apply(&JonesVector::horizontal());
        assert_relative_eq!(e.ellipticity(), psi * amplification(0.9999).unwrap(), max_relative = 1e-6);
        let e_series = series.apply(&JonesVector::horizontal());
        assert_relative_eq!(e.ellipticity(), e_series.ellipticity(), max_relative = 1e-6);
    }

    #[test]
    fn off_resonance_airy_suppression() {
        let mirrors = MirrorParams::lossless(0.99).unwrap();
        let id = JonesMatrix::identity();
        let on = cavity_chain(&mirrors, 0.0, &id, &[]).unwrap().apply(&JonesVector::horizontal()).intensity();
        let off = cavity_chain(&mirrors, PI, &id, &[]).unwrap().apply(&JonesVector::horizontal()).intensity();
        let series_off = cavity_series(&mirrors, PI, &id, 20_000).apply(&JonesVector::horizontal()).intensity();
        assert_relative_eq!(off, series_off, max_relative = 1e-10);
        let r2 = mirrors.r2;
        assert_relative_eq!(off / on, ((1.0 - r2) / (1.0 + r2)).powi(2), max_relative = 1e-10);
    }

    #[test]
    fn series_error_bounded_by_geometric_tail() {
        let mirrors = MirrorParams::lossless(0.9999).unwrap();
        let m = brf_matrix(1e-7, 0.3);
        let closed = cavity_chain(&mirrors, 0.0, &m, &[]).unwrap();
        let n = 100_000;
        let series = cavity_series(&mirrors, 0.0, &m, n);
        let err = (closed - series).max_abs() / closed.max_abs();
        assert!(err <= mirrors.r2.powi(n as i32) * 1.01 + 1e-9, "err {err}");
    }

    #[test]
    fn two_resonance_regime_refused() {
        let mirrors = MirrorParams::lossless(0.9999).unwrap();
        let m = brf_matrix(1e-3, FRAC_PI_4);
        assert!(matches!(cavity_chain(&mirrors, 0.0, &m, &[]), Err(Error::TwoResonance(_))));
    }

    #[test]
    fn finesse_and_gain() {
        assert_eq!(amplification(0.0).unwrap(), 1.0);
        let r2 = r2_from_finesse(414000.0).unwrap();
        assert_relative_eq!(finesse(r2).unwrap(), 414000.0, max_relative = 1e-9);
        assert_relative_eq!(2.0 * 414000.0 / PI, 2.64e5, max_relative = 1e-2);
        let a = amplification(0.99).unwrap();
        let f = finesse(0.99).unwrap();
        assert!((a - 2.0 * f / PI).abs() / a < 3e-3);
        assert!(finesse(1.0).is_err() && amplification(1.5).is_err());
        let dev = amplification(0.99999).unwrap() / (2.0 * finesse(0.99999).unwrap() / PI) - 1.0;
        assert!(dev.abs() < 1e-5);
    }

    #[test]
    fn gain_ratio_approaches_one_monotonically() {
        let mut last = f64::INFINITY;
        for r2 in [0.5, 0.9, 0.99, 0.999, 0.9999, 0.99999] {
            let d = (amplification(r2).unwrap() / (2.0 * finesse(r2).unwrap() / PI) - 1.0).abs();
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn cavity_state_resonance() {
        let mirrors = MirrorParams::lossless(0.999).unwrap();
        let s = CavityState::new(1064e-9 * 1000.0, 1064e-9, &mirrors).unwrap();
        assert!(s.is_resonant(1e-6));
        let s = CavityState::new(1064e-9 * 1000.25, 1064e-9, &mirrors).unwrap();
        assert!(!s.is_resonant(1e-3));
    }

    #[test]
    fn intensity_expansion() {
        assert_eq!(transmitted_intensity(2.0, 1e-7, 0.0, 0.0, 0.0), 2e-7);
        assert_relative_eq!(transmitted_intensity(1.0, 0.0, 0.0, 0.1, 1e-6), 0.01 + 2e-7, max_relative = 1e-14);
        // against the full modulus |iα + iη + iΨ|² + σ²
        let (a, e, p, s2) = (3e-4, 2e-3, 1e-5, 1e-7);
        let full = s2 + (C::new(0.0, a) + C::new(0.0, e) + C::new(0.0, p)).norm_sqr();
        let first = transmitted_intensity(1.0, s2, a, e, p);
        assert!((full - first).abs() <= 10.0 * e * e * (a.max(p)).max(e));
    }

    proptest::proptest! {
        #[test]
        fn first_order_additivity(
            psi in 0.0f64..1e-3, eta in 0.0f64..1e-3, alpha in 0.0f64..1e-3, theta in 0.0f64..PI,
        ) {
            // single pass, no cavity gain
            let mirrors = MirrorParams::lossless(0.0).unwrap();
            let (i_out, i_tr) = chain_intensity(1.0, &mirrors, 0.0, &brf_matrix(psi, theta), eta, alpha, 1e-8).unwrap();
            let expect = transmitted_intensity(i_out, 1e-8, alpha, eta, psi * (2.0 * theta).sin());
            let largest = psi.max(eta).max(alpha);
            proptest::prop_assert!((i_tr - expect).abs() / i_out <= 10.0 * largest * largest + 1e-18);
        }
    }
}
