//! Bosonic environments: spectral densities, bath correlation functions,
//! and the discretized influence kernel.
//!
//! Kernel coefficients are double time integrals of the bath correlation
//! function over grid cells. We evaluate them in the frequency domain: the
//! cell integral of `exp(-i w (t' - t''))` has a closed form for both full
//! rectangles and the time-ordered triangle on the diagonal, so each
//! coefficient is a single frequency integral of the spectral density
//! against that closed form. This avoids nested oscillatory quadrature and
//! keeps the diagonal (time-ordered) cells exact.

use num_complex::Complex;
use std::io::Write;
use thiserror::Error;

use crate::quad::{adaptive_panels, linear_panels};
use crate::scalar::{re, Scalar};

#[derive(Debug, Error)]
pub enum BathError {
    #[error("spectral density evaluated at negative frequency {omega}")]
    NegativeFrequency { omega: f64 },
    #[error("spectral density parameter {name} must be positive, got {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("temperature must be non-negative, got {value}")]
    NegativeTemperature { value: f64 },
    #[error("history ratio must be at least 1")]
    BadRatio,
    #[error("history ratio {ratio} exceeds step count {steps}")]
    RatioExceedsSteps { ratio: usize, steps: usize },
    #[error("kernel i/o failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Continuum spectral density families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralDensity<T: Scalar> {
    /// `J(w) = a w^p / wc^{p-1} exp(-w/wc)`.
    PowerLawExp { a: T, p: T, cutoff: T },
    /// `J(w) = a G w0^2 w / ((w0^2 - w^2)^2 + G^2 w^2)`.
    Underdamped { a: T, omega0: T, width: T },
}

impl<T: Scalar> SpectralDensity<T> {
    pub fn validate(&self) -> Result<(), BathError> {
        let bad = |name: &'static str, v: T| BathError::BadParameter {
            name,
            value: v.to_f64().unwrap_or(f64::NAN),
        };
        match *self {
            SpectralDensity::PowerLawExp { a, p, cutoff } => {
                if !(a > T::zero()) {
                    return Err(bad("a", a));
                }
                if !(p >= T::one()) {
                    return Err(bad("p", p));
                }
                if !(cutoff > T::zero()) {
                    return Err(bad("cutoff", cutoff));
                }
            }
            SpectralDensity::Underdamped { a, omega0, width } => {
                if !(a > T::zero()) {
                    return Err(bad("a", a));
                }
                if !(omega0 > T::zero()) {
                    return Err(bad("omega0", omega0));
                }
                if !(width > T::zero()) {
                    return Err(bad("width", width));
                }
            }
        }
        Ok(())
    }

    /// Evaluate `J(w)`; negative frequencies are rejected.
    pub fn eval(&self, w: T) -> Result<T, BathError> {
        if w < T::zero() {
            return Err(BathError::NegativeFrequency {
                omega: w.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(self.eval_unchecked(w))
    }

    pub(crate) fn eval_unchecked(&self, w: T) -> T {
        match *self {
            SpectralDensity::PowerLawExp { a, p, cutoff } => {
                if w == T::zero() {
                    if p == T::one() {
                        return a * cutoff.powf(T::one() - p);
                    }
                    return T::zero();
                }
                a * w.powf(p) / cutoff.powf(p - T::one()) * (-w / cutoff).exp()
            }
            SpectralDensity::Underdamped { a, omega0, width } => {
                let d = omega0 * omega0 - w * w;
                a * width * omega0 * omega0 * w / (d * d + width * width * w * w)
            }
        }
    }

    /// Location and value of the spectral density's maximum (numerically).
    fn peak(&self) -> (T, T) {
        let guess = match *self {
            SpectralDensity::PowerLawExp { p, cutoff, .. } => p * cutoff,
            SpectralDensity::Underdamped { omega0, .. } => omega0,
        };
        let mut best = (guess, self.eval_unchecked(guess));
        let n = 400;
        for i in 1..=n {
            let w = guess * T::of(2.0 * i as f64 / n as f64);
            let v = self.eval_unchecked(w);
            if v > best.1 {
                best = (w, v);
            }
        }
        best
    }

    /// Frequency beyond which `J(w) * max(coth(w/2T), 1)` is below
    /// `tol` times its peak value; integration cutoff.
    pub fn omega_max(&self, temperature: T, tol: T) -> T {
        let (wp, jp) = self.peak();
        let thermal = if temperature > T::zero() {
            T::of(2.0) * temperature
        } else {
            T::zero()
        };
        let peak_env = jp * (T::one() + thermal / wp.max(T::eps()));
        let mut w = wp;
        let step = match *self {
            SpectralDensity::PowerLawExp { cutoff, .. } => cutoff,
            SpectralDensity::Underdamped { omega0, .. } => omega0,
        };
        for _ in 0..100_000 {
            w = w + step;
            let coth = if thermal > T::zero() && w < thermal {
                thermal / w
            } else {
                T::one()
            };
            if self.eval_unchecked(w) * coth.max(T::one()) < tol * peak_env {
                return w;
            }
        }
        w
    }

    /// Reorganisation energy `int J(w)/w dw`.
    pub fn reorganisation_energy(&self, rel_tol: T) -> T {
        let wmax = self.omega_max(T::zero(), T::of(1e-16));
        let r = adaptive_panels(
            &mut |w: T| {
                if w == T::zero() {
                    // J/w -> finite limit (or the p = 1 value).
                    return re(self.eval_unchecked(T::eps().sqrt()) / T::eps().sqrt());
                }
                re(self.eval_unchecked(w) / w)
            },
            &linear_panels(wmax, wmax / T::of(32.0)),
            rel_tol,
            T::zero(),
            40,
        );
        r.value.re
    }
}

/// Either a continuum of modes or a single discrete mode with coupling `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BathModel<T: Scalar> {
    Continuum(SpectralDensity<T>),
    Mode { omega: T, g: T },
}

/// One environment: its mode content, temperature, and which system
/// coupling operator it attaches to.
#[derive(Debug, Clone)]
pub struct BathSpec<T: Scalar> {
    pub model: BathModel<T>,
    pub temperature: T,
    pub coupling_index: usize,
}

impl<T: Scalar> BathSpec<T> {
    pub fn validate(&self) -> Result<(), BathError> {
        if self.temperature < T::zero() {
            return Err(BathError::NegativeTemperature {
                value: self.temperature.to_f64().unwrap_or(f64::NAN),
            });
        }
        match &self.model {
            BathModel::Continuum(j) => j.validate(),
            BathModel::Mode { omega, .. } => {
                if !(*omega > T::zero()) {
                    return Err(BathError::BadParameter {
                        name: "omega",
                        value: omega.to_f64().unwrap_or(f64::NAN),
                    });
                }
                Ok(())
            }
        }
    }
}

/// `coth(x)` stable for small and large arguments.
pub fn coth<T: Scalar>(x: T) -> T {
    let ax = x.abs();
    if ax > T::of(20.0) {
        return T::one().copysign(x);
    }
    if ax < T::of(1e-4) {
        return T::one() / x + x / T::of(3.0) - x * x * x / T::of(45.0);
    }
    let e = (T::of(2.0) * x).exp();
    (e + T::one()) / (e - T::one())
}

/// Thermal factor `coth(w / 2T)`, with the zero-temperature limit 1.
pub fn thermal_factor<T: Scalar>(w: T, temperature: T) -> T {
    if temperature > T::zero() {
        coth(w / (T::of(2.0) * temperature))
    } else {
        T::one()
    }
}

/// Bath correlation function
/// `C(t) = int_0^inf dw J(w) [cos(wt) coth(w/2T) - i sin(wt)]`.
pub fn correlation<T: Scalar>(bath: &BathSpec<T>, t: T, rel_tol: T) -> Complex<T> {
    match &bath.model {
        BathModel::Mode { omega, g } => {
            let w = *omega;
            let gg = *g * *g;
            Complex::new(
                gg * (w * t).cos() * thermal_factor(w, bath.temperature),
                -gg * (w * t).sin(),
            )
        }
        BathModel::Continuum(j) => {
            let wmax = j.omega_max(bath.temperature, T::of(1e-15));
            let period = T::PI() / (t.abs() + T::one() / wmax);
            let pts = linear_panels(wmax, period.min(wmax / T::of(16.0)));
            adaptive_panels(
                &mut |w: T| {
                    let jv = j.eval_unchecked(w.max(T::zero()));
                    Complex::new(
                        jv * (w * t).cos() * thermal_factor(w.max(T::eps()), bath.temperature),
                        -jv * (w * t).sin(),
                    )
                },
                &pts,
                rel_tol,
                T::zero(),
                30,
            )
            .value
        }
    }
}

fn sinc<T: Scalar>(x: T) -> T {
    if x.abs() < T::of(1e-4) {
        let x2 = x * x;
        T::one() - x2 / T::of(6.0) + x2 * x2 / T::of(120.0)
    } else {
        x.sin() / x
    }
}

/// `int_a^b dt' int_c^d dt'' exp(-i w (t' - t''))`.
fn cell_rect<T: Scalar>(w: T, a: T, b: T, c: T, d: T) -> Complex<T> {
    let two = T::of(2.0);
    let sep = (a + b) / two - (c + d) / two;
    let area = (b - a) * (d - c);
    let amp = area * sinc(w * (b - a) / two) * sinc(w * (d - c) / two);
    Complex::from_polar(amp, -w * sep)
}

/// `int_a^b dt' int_c^{t'} dt'' exp(-i w (t' - t''))` for `c <= a`.
fn cell_tri<T: Scalar>(w: T, a: T, b: T, c: T) -> Complex<T> {
    let span = b - c;
    if (w * span).abs() < T::of(0.5) {
        // Series in (-i w): moments of (t' - c)^{n+1}/(n+1) over [a, b].
        let mut term = Complex::new(T::one(), T::zero());
        let mut acc = Complex::new(T::zero(), T::zero());
        let miw = Complex::new(T::zero(), -w);
        let bc = b - c;
        let ac = a - c;
        let mut pow_b = bc * bc;
        let mut pow_a = ac * ac;
        for n in 0..30 {
            let np1 = T::of((n + 1) as f64);
            let np2 = T::of((n + 2) as f64);
            let moment = (pow_b - pow_a) / (np1 * np2);
            let contrib = term * moment;
            acc = acc + contrib;
            if contrib.norm() < T::eps() * acc.norm() && n > 2 {
                break;
            }
            term = term * miw / np1;
            pow_b = pow_b * bc;
            pow_a = pow_a * ac;
        }
        acc
    } else {
        let two = T::of(2.0);
        let iw = Complex::new(T::zero(), w);
        let mid = (a + b) / two - c;
        let osc = Complex::from_polar(sinc(w * (b - a) / two), -w * mid);
        (Complex::new(T::one(), T::zero()) - osc) * (Complex::new(b - a, T::zero()) / iw)
    }
}

/// Geometry of one kernel cell: the closed-form frequency response
/// `G(w) = int int_cell exp(-i w (t' - t''))`, or its midpoint surrogate.
#[derive(Debug, Clone, Copy)]
enum Cell<T: Scalar> {
    Rect { a: T, b: T, c: T, d: T },
    Tri { a: T, b: T, c: T },
}

impl<T: Scalar> Cell<T> {
    fn response(&self, w: T) -> Complex<T> {
        match *self {
            Cell::Rect { a, b, c, d } => cell_rect(w, a, b, c, d),
            Cell::Tri { a, b, c } => cell_tri(w, a, b, c),
        }
    }

    fn area(&self) -> T {
        match *self {
            Cell::Rect { a, b, c, d } => (b - a) * (d - c),
            Cell::Tri { a, b, .. } => (b - a) * (b - a) / T::of(2.0),
        }
    }

    /// Centroid separation `t' - t''` for the midpoint rule.
    fn centroid_sep(&self) -> T {
        match *self {
            Cell::Rect { a, b, c, d } => (a + b) / T::of(2.0) - (c + d) / T::of(2.0),
            // Vertices (a, a), (b, a), (b, b): centroid separation (b-a)/3.
            Cell::Tri { a, b, .. } => (b - a) / T::of(3.0),
        }
    }
}

/// How cell integrals are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellRule {
    /// Exact double integral of the correlation function over the cell.
    Exact,
    /// `C(centroid separation) * area`; second-order, used for
    /// convergence cross-checks.
    Midpoint,
}

/// Which grid the later-time (outer) integral lives on. `Fine` is the
/// partial coarse graining used in production: the outer integral keeps
/// propagation resolution while the earlier-time integral is coarse.
/// `Coarse` coarse-grains both and is kept only for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterGrid {
    Fine,
    Coarse,
}

/// Discretized influence kernel for one bath: coefficients `b[j]` indexed
/// by separation in fine (propagation) steps between the later-time cell
/// and the start of the earlier-time history cell.
#[derive(Debug, Clone)]
pub struct InfluenceKernel<T: Scalar> {
    pub delta_p: T,
    /// History cell size in fine steps (`delta_h = ratio * delta_p`).
    pub ratio: usize,
    coeffs: Vec<Complex<T>>,
}

impl<T: Scalar> InfluenceKernel<T> {
    /// Coefficient for fine-step separation `j`; zero beyond the table
    /// (memory cutoff).
    pub fn coeff(&self, j: usize) -> Complex<T> {
        self.coeffs
            .get(j)
            .copied()
            .unwrap_or_else(|| Complex::new(T::zero(), T::zero()))
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Write `separation, re, im` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), BathError> {
        writeln!(w, "separation,re,im")?;
        for (j, c) in self.coeffs.iter().enumerate() {
            writeln!(
                w,
                "{},{:.17e},{:.17e}",
                j,
                c.re.to_f64().unwrap_or(f64::NAN),
                c.im.to_f64().unwrap_or(f64::NAN)
            )?;
        }
        Ok(())
    }
}

/// The cell for separation `j`, given history cell size `ratio` fine steps.
fn cell_for<T: Scalar>(j: usize, r: usize, dp: T, outer: OuterGrid) -> Option<Cell<T>> {
    let f = |k: usize| dp * T::of(k as f64);
    match outer {
        OuterGrid::Fine => {
            if j == 0 {
                Some(Cell::Tri {
                    a: T::zero(),
                    b: dp,
                    c: T::zero(),
                })
            } else if j < r {
                // Later cell still inside the earlier history cell: a full
                // rectangle against the part strictly before it, plus the
                // time-ordered triangle within its own column.
                None // handled specially below (two pieces)
            } else {
                Some(Cell::Rect {
                    a: f(j),
                    b: f(j + 1),
                    c: T::zero(),
                    d: f(r),
                })
            }
        }
        OuterGrid::Coarse => {
            if j == 0 {
                Some(Cell::Tri {
                    a: T::zero(),
                    b: f(r),
                    c: T::zero(),
                })
            } else if j % r == 0 {
                Some(Cell::Rect {
                    a: f(j),
                    b: f(j + r),
                    c: T::zero(),
                    d: f(r),
                })
            } else {
                None
            }
        }
    }
}

/// All cell pieces contributing to coefficient `j` (0, 1, or 2 pieces).
fn cell_pieces<T: Scalar>(j: usize, r: usize, dp: T, outer: OuterGrid) -> Vec<Cell<T>> {
    if outer == OuterGrid::Fine && j > 0 && j < r {
        let f = |k: usize| dp * T::of(k as f64);
        return vec![
            Cell::Rect {
                a: f(j),
                b: f(j + 1),
                c: T::zero(),
                d: f(j),
            },
            Cell::Tri {
                a: f(j),
                b: f(j + 1),
                c: f(j),
            },
        ];
    }
    cell_for(j, r, dp, outer).into_iter().collect()
}

/// Build the influence kernel for `bath` on a fine grid of `n_steps` steps
/// of size `delta_p`, with history cells of `ratio` fine steps. `memory`
/// truncates the table at that many fine steps of separation.
pub fn build_kernel<T: Scalar>(
    bath: &BathSpec<T>,
    delta_p: T,
    ratio: usize,
    memory: Option<usize>,
    n_steps: usize,
    rule: CellRule,
    outer: OuterGrid,
) -> Result<InfluenceKernel<T>, BathError> {
    bath.validate()?;
    if ratio < 1 {
        return Err(BathError::BadRatio);
    }
    if ratio > n_steps {
        return Err(BathError::RatioExceedsSteps {
            ratio,
            steps: n_steps,
        });
    }
    let j_max = match memory {
        Some(k) => k.min(n_steps.saturating_sub(1)),
        None => n_steps.saturating_sub(1),
    };
    let mut coeffs = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        let pieces = cell_pieces(j, ratio, delta_p, outer);
        let mut b = Complex::new(T::zero(), T::zero());
        for cell in &pieces {
            b = b + match rule {
                CellRule::Exact => cell_coefficient(bath, cell),
                CellRule::Midpoint => {
                    correlation(bath, cell.centroid_sep(), T::of(1e-12)) * cell.area()
                }
            };
        }
        coeffs.push(b);
    }
    Ok(InfluenceKernel {
        delta_p,
        ratio,
        coeffs,
    })
}

/// Exact cell coefficient via the frequency domain:
/// `b = int dw J(w) [coth(w/2T) Re G(w) + i Im G(w)]`.
fn cell_coefficient<T: Scalar>(bath: &BathSpec<T>, cell: &Cell<T>) -> Complex<T> {
    match &bath.model {
        BathModel::Mode { omega, g } => {
            let gr = cell.response(*omega);
            let gg = *g * *g;
            Complex::new(
                gg * thermal_factor(*omega, bath.temperature) * gr.re,
                gg * gr.im,
            )
        }
        BathModel::Continuum(j) => {
            let wmax = j.omega_max(bath.temperature, T::of(1e-15));
            // Largest separation t' - t'' in the cell sets the fastest
            // oscillation of G(w); size panels to resolve it.
            let t_osc = match *cell {
                Cell::Rect { b, c, .. } => (b - c).abs(),
                Cell::Tri { b, c, .. } => (b - c).abs(),
            }
            .max(T::eps());
            let step = (T::PI() / t_osc).min(wmax / T::of(16.0));
            let pts = linear_panels(wmax, step);
            // Absolute floor tied to the integrand's own scale; without it,
            // panels whose value happens to cross zero bisect to the depth
            // limit.
            let (wp, jp) = j.peak();
            let scale = jp
                * thermal_factor(wp.max(T::eps()), bath.temperature)
                * cell.area()
                * wmax;
            let floor = scale.abs() * T::of(1e-14) + T::eps();
            adaptive_panels(
                &mut |w: T| {
                    let jv = j.eval_unchecked(w.max(T::zero()));
                    let gr = cell.response(w);
                    Complex::new(
                        jv * thermal_factor(w.max(T::eps()), bath.temperature) * gr.re,
                        jv * gr.im,
                    )
                },
                &pts,
                T::of(1e-12),
                floor,
                25,
            )
            .value
        }
    }
}
