//! Tsallis deformed exponential and logarithm, the generalized divergence
//! cost, and the outflow-rate bound used by the time-step guards.
//!
//! For `q != 1` the deformed exponential is `(1 + (1-q) z)_+^{1/(1-q)}`. When
//! `1/(1-q)` is an integer (q = 0.5, 0.8, 0.9, 1.5, ...) the power is taken with
//! repeated multiplication; this is the hot path of every solver step.

use crate::error::{Error, Result};

/// Entropic index `q` and uncertainty scale `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsallisParams {
    q: f64,
    eta: f64,
}

impl TsallisParams {
    pub fn new(q: f64, eta: f64) -> Result<Self> {
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::InvalidParams(format!("q must be positive, got {q}")));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidParams(format!(
                "eta must be positive, got {eta}"
            )));
        }
        Ok(Self { q, eta })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn is_classical(&self) -> bool {
        self.q == 1.0
    }

    /// `1 - 2|1-q| L / eta`. Positive margin keeps every deformed-exponential
    /// argument built from utility differences inside its domain.
    pub fn assumption2_margin(&self, bound: f64) -> f64 {
        1.0 - 2.0 * (1.0 - self.q).abs() * bound / self.eta
    }

    /// True when `q != 1` and the margin for `bound` is not positive. Such
    /// parameters are usable but the solver guards only warn.
    pub fn outside_guaranteed_regime(&self, bound: f64) -> bool {
        !self.is_classical() && self.assumption2_margin(bound) <= 0.0
    }

    pub(crate) fn kernel(&self) -> ExpKernel {
        ExpKernel::new(self)
    }
}

#[derive(Debug, Clone, Copy)]
enum Branch {
    Classical,
    /// `1/(1-q)` rounded to an integer.
    Integer(i32),
    Real(f64),
}

fn branch_for(q: f64) -> Branch {
    if q == 1.0 {
        return Branch::Classical;
    }
    let n = 1.0 / (1.0 - q);
    let r = n.round();
    if r.abs() <= 64.0 && (n - r).abs() <= 1e-9 * r.abs().max(1.0) {
        Branch::Integer(r as i32)
    } else {
        Branch::Real(n)
    }
}

/// Precomputed evaluator for `exp_q(z)` and `exp_q(z)^q`, shared by the
/// transition kernels.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ExpKernel {
    q: f64,
    one_minus_q: f64,
    branch: Branch,
}

impl ExpKernel {
    fn new(params: &TsallisParams) -> Self {
        Self {
            q: params.q,
            one_minus_q: 1.0 - params.q,
            branch: branch_for(params.q),
        }
    }

    /// Base `1 + (1-q) z`; clipped at zero for q < 1. For q > 1 a nonpositive
    /// base is returned unchanged so the caller can report it.
    #[inline(always)]
    fn base(&self, z: f64) -> f64 {
        let b = 1.0 + self.one_minus_q * z;
        if self.one_minus_q > 0.0 {
            b.max(0.0)
        } else {
            b
        }
    }

    /// Returns `(exp_q(z), exp_q(z)^q)`. Uses `exp_q(z)^q = exp_q(z) / base`,
    /// so only one power is evaluated. Out-of-domain arguments (q > 1) yield
    /// `(inf, inf)`; callers check with [`Self::in_domain`].
    #[cfg(test)]
    pub(crate) fn pair(&self, z: f64) -> (f64, f64) {
        match self.branch {
            Branch::Classical => {
                let e = z.exp();
                (e, e)
            }
            Branch::Integer(n) => {
                let b = self.base(z);
                if b <= 0.0 {
                    return self.degenerate();
                }
                let eq = b.powi(n - 1);
                (eq * b, eq)
            }
            Branch::Real(n) => {
                let b = self.base(z);
                if b <= 0.0 {
                    return self.degenerate();
                }
                let eq = ((n - 1.0) * (self.one_minus_q * z).ln_1p()).exp();
                (eq * b, eq)
            }
        }
    }

    #[inline(always)]
    fn degenerate(&self) -> (f64, f64) {
        if self.one_minus_q > 0.0 {
            (0.0, 0.0)
        } else {
            (f64::INFINITY, f64::INFINITY)
        }
    }

    /// `exp_q(z)` alone.
    #[inline(always)]
    pub(crate) fn value(&self, z: f64) -> f64 {
        match self.branch {
            Branch::Classical => z.exp(),
            Branch::Integer(n) => {
                let b = self.base(z);
                if b <= 0.0 {
                    self.degenerate().0
                } else {
                    b.powi(n)
                }
            }
            Branch::Real(n) => {
                let b = self.base(z);
                if b <= 0.0 {
                    self.degenerate().0
                } else {
                    (n * (self.one_minus_q * z).ln_1p()).exp()
                }
            }
        }
    }

    #[inline(always)]
    pub(crate) fn in_domain(&self, z: f64) -> bool {
        self.one_minus_q >= 0.0 || 1.0 + self.one_minus_q * z > 0.0
    }

    /// `y^q`.
    #[inline]
    pub(crate) fn pow_q(&self, y: f64) -> f64 {
        if self.q == 1.0 {
            y
        } else {
            y.powf(self.q)
        }
    }
}

/// A monomorphized `z -> (exp_q(z), exp_q(z)^q)` evaluator for inner loops.
pub(crate) trait PairFn: Fn(f64) -> (f64, f64) + Copy + Send + Sync {}
impl<T: Fn(f64) -> (f64, f64) + Copy + Send + Sync> PairFn for T {}

/// Callback receiving the evaluator specialized for the current `q`.
pub(crate) trait WithPair {
    type Output;
    fn run<P: PairFn>(self, pair: P) -> Self::Output;
}

#[inline(always)]
fn clipped<const K: i32>(c: f64) -> impl PairFn {
    move |z: f64| {
        let b = (1.0 + c * z).max(0.0);
        let eq = b.powi(K);
        (eq * b, eq)
    }
}

#[inline(always)]
fn unclipped<const K: i32>(c: f64) -> impl PairFn {
    move |z: f64| {
        let b = 1.0 + c * z;
        if b > 0.0 {
            let eq = b.powi(K);
            (eq * b, eq)
        } else {
            (f64::INFINITY, f64::INFINITY)
        }
    }
}

impl ExpKernel {
    /// Runs `w` with an evaluator whose power is a compile-time constant for
    /// the common integer exponents, so the inner loop stays branch-free.
    pub(crate) fn with_pair<W: WithPair>(&self, w: W) -> W::Output {
        let c = self.one_minus_q;
        match self.branch {
            Branch::Classical => w.run(|z: f64| {
                let e = z.exp();
                (e, e)
            }),
            Branch::Integer(n) if c > 0.0 => match n - 1 {
                1 => w.run(clipped::<1>(c)),
                2 => w.run(clipped::<2>(c)),
                3 => w.run(clipped::<3>(c)),
                4 => w.run(clipped::<4>(c)),
                5 => w.run(clipped::<5>(c)),
                6 => w.run(clipped::<6>(c)),
                7 => w.run(clipped::<7>(c)),
                8 => w.run(clipped::<8>(c)),
                9 => w.run(clipped::<9>(c)),
                k => w.run(move |z: f64| {
                    let b = (1.0 + c * z).max(0.0);
                    let eq = b.powi(k);
                    (eq * b, eq)
                }),
            },
            Branch::Integer(n) => match n - 1 {
                -2 => w.run(unclipped::<-2>(c)),
                -3 => w.run(unclipped::<-3>(c)),
                -4 => w.run(unclipped::<-4>(c)),
                -5 => w.run(unclipped::<-5>(c)),
                k => w.run(move |z: f64| {
                    let b = 1.0 + c * z;
                    if b > 0.0 {
                        let eq = b.powi(k);
                        (eq * b, eq)
                    } else {
                        (f64::INFINITY, f64::INFINITY)
                    }
                }),
            },
            Branch::Real(n) => {
                let k = n - 1.0;
                if c > 0.0 {
                    w.run(move |z: f64| {
                        let b = (1.0 + c * z).max(0.0);
                        let eq = if b > 0.0 { (k * (c * z).ln_1p()).exp() } else { 0.0 };
                        (eq * b, eq)
                    })
                } else {
                    w.run(move |z: f64| {
                        let b = 1.0 + c * z;
                        if b > 0.0 {
                            let eq = (k * (c * z).ln_1p()).exp();
                            (eq * b, eq)
                        } else {
                            (f64::INFINITY, f64::INFINITY)
                        }
                    })
                }
            }
        }
    }
}

/// Deformed exponential. Errors with [`Error::UndefinedDeformedExp`] when
/// q > 1 and `1 + (1-q) z <= 0`; returns exactly 0 when q < 1 and the base
/// clips at zero.
pub fn exp_q(z: f64, params: &TsallisParams) -> Result<f64> {
    let kernel = params.kernel();
    if !kernel.in_domain(z) {
        return Err(Error::UndefinedDeformedExp { q: params.q, z });
    }
    Ok(kernel.value(z))
}

/// Inverse of [`exp_q`] on the positive reals.
pub fn ln_q(y: f64, params: &TsallisParams) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("ln_q requires y > 0, got {y}")));
    }
    Ok(ln_q_unchecked(y, params.q))
}

#[inline]
pub(crate) fn ln_q_unchecked(y: f64, q: f64) -> f64 {
    if q == 1.0 {
        y.ln()
    } else {
        let a = 1.0 - q;
        (a * y.ln()).exp_m1() / a
    }
}

/// Generalized divergence cost `phi(u)`; zero exactly at `u = 1`.
pub fn phi_cost(u: f64, params: &TsallisParams) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::Domain(format!("phi_cost requires u >= 0, got {u}")));
    }
    let q = params.q;
    let raw = if q == 1.0 {
        let u_ln_u = if u == 0.0 { 0.0 } else { u * u.ln() };
        u_ln_u - u + 1.0
    } else {
        (1.0 - u.powf(q) + q * (u - 1.0)) / (1.0 - q)
    };
    Ok(params.eta * raw)
}

/// Uniform outflow-rate bound `{exp_q(2L/eta) / exp_q(-2L/eta)}^q`.
///
/// Returns `f64::INFINITY` when the ratio is unbounded: the denominator
/// clipped to zero (q < 1) or the numerator left its domain (q > 1). An
/// infinite value means no time step is guaranteed.
pub fn theta_bar(bound: f64, params: &TsallisParams) -> f64 {
    assert!(bound >= 0.0, "utility bound must be nonnegative");
    let a = 2.0 * bound / params.eta;
    let kernel = params.kernel();
    if !kernel.in_domain(a) {
        return f64::INFINITY;
    }
    let num = kernel.value(a);
    let den = kernel.value(-a);
    if den <= 0.0 || !num.is_finite() {
        return f64::INFINITY;
    }
    kernel.pow_q(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p(q: f64, eta: f64) -> TsallisParams {
        TsallisParams::new(q, eta).unwrap()
    }

    #[test]
    fn exp_q_examples() {
        for q in [0.1, 0.5, 0.8, 1.0, 1.5, 2.0, 3.7] {
            assert_eq!(exp_q(0.0, &p(q, 1.0)).unwrap(), 1.0);
        }
        assert_relative_eq!(exp_q(1.0, &p(0.5, 1.0)).unwrap(), 2.25, epsilon = 1e-15);
        assert!(matches!(
            exp_q(1.0, &p(2.0, 1.0)),
            Err(Error::UndefinedDeformedExp { .. })
        ));
        assert_relative_eq!(
            exp_q(1.0, &p(1.0, 1.0)).unwrap(),
            std::f64::consts::E,
            epsilon = 1e-15
        );
    }

    #[test]
    fn exp_q_clips_to_zero_below_one() {
        // 1 + 0.5 * (-3) < 0
        assert_eq!(exp_q(-3.0, &p(0.5, 1.0)).unwrap(), 0.0);
        assert_eq!(exp_q(-6.0, &p(0.8, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn non_integer_exponent_branch() {
        // 1/(1-0.3) is not an integer
        let z: f64 = 0.7;
        let expect = (1.0 + 0.7 * z).powf(1.0 / 0.7);
        assert_relative_eq!(exp_q(z, &p(0.3, 1.0)).unwrap(), expect, max_relative = 1e-15);
    }

    #[test]
    fn ln_q_examples() {
        for q in [0.3, 0.5, 1.0, 1.5] {
            assert_eq!(ln_q(1.0, &p(q, 1.0)).unwrap(), 0.0);
        }
        assert_relative_eq!(ln_q(2.25, &p(0.5, 1.0)).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(ln_q(0.0, &p(0.5, 1.0)), Err(Error::Domain(_))));
        assert!(matches!(ln_q(-1.0, &p(1.0, 1.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn ln_q_inverts_exp_q() {
        for q in [0.5, 0.8, 1.0, 1.5] {
            for z in [-1.0, 0.3, 2.0] {
                let params = p(q, 1.0);
                // q = 1.5 at z = 2 sits on the boundary of the domain
                let Ok(e) = exp_q(z, &params) else { continue };
                assert!(e.is_finite() && e > 0.0);
                assert!((ln_q(e, &params).unwrap() - z).abs() < 1e-12, "q={q} z={z}");
            }
        }
    }

    #[test]
    fn phi_cost_examples() {
        for q in [0.3, 0.8, 1.0, 2.0] {
            for eta in [0.01, 1.0, 5.0] {
                assert_eq!(phi_cost(1.0, &p(q, eta)).unwrap(), 0.0);
            }
        }
        assert_relative_eq!(
            phi_cost(std::f64::consts::E, &p(1.0, 1.0)).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(phi_cost(4.0, &p(0.5, 2.0)).unwrap(), 2.0, epsilon = 1e-14);
        // 0 ln 0 = 0
        assert_eq!(phi_cost(0.0, &p(1.0, 1.0)).unwrap(), 1.0);
        assert!(matches!(phi_cost(-0.1, &p(0.5, 1.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn theta_bar_examples() {
        for q in [0.5, 0.8, 1.0, 1.5] {
            assert_eq!(theta_bar(0.0, &p(q, 0.3)), 1.0);
        }
        let (l, eta) = (0.3, 0.7);
        assert_relative_eq!(
            theta_bar(l, &p(1.0, eta)),
            (4.0 * l / eta).exp(),
            max_relative = 1e-14
        );
        // q < 1 with a large bound: the denominator clips to zero.
        assert_eq!(theta_bar(3.4667, &p(0.8, 0.01)), f64::INFINITY);
        // q > 1 with a large bound: the numerator is undefined.
        assert_eq!(theta_bar(1.0, &p(2.0, 0.5)), f64::INFINITY);
        // inside the guaranteed regime the value is finite
        let params = p(0.8, 1.0);
        let expect = ((1.0f64 + 0.2 * 0.2).powi(5) / (1.0f64 - 0.2 * 0.2).powi(5)).powf(0.8);
        assert_relative_eq!(theta_bar(0.1, &params), expect, max_relative = 1e-14);
    }

    #[test]
    fn assumption2_flags() {
        let params = p(0.8, 0.01);
        assert!(params.outside_guaranteed_regime(3.4667));
        assert!(!params.outside_guaranteed_regime(0.01));
        assert!(!p(1.0, 0.01).outside_guaranteed_regime(100.0));
        assert_relative_eq!(p(0.5, 2.0).assumption2_margin(1.0), 0.5);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(TsallisParams::new(0.0, 1.0).is_err());
        assert!(TsallisParams::new(-1.0, 1.0).is_err());
        assert!(TsallisParams::new(0.5, 0.0).is_err());
        assert!(TsallisParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn pair_matches_scalar_definitions() {
        for q in [0.3, 0.5, 0.8, 1.0, 1.5, 2.5] {
            let params = p(q, 1.0);
            let k = params.kernel();
            for z in [-1.5, -0.4, 0.0, 0.2, 0.35] {
                if !k.in_domain(z) {
                    continue;
                }
                let (e, eq) = k.pair(z);
                let direct = exp_q(z, &params).unwrap();
                assert_relative_eq!(e, direct, max_relative = 1e-14);
                assert_relative_eq!(eq, direct.powf(q), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn continuity_across_classical_branch() {
        for q in [1.0 - 1e-12, 1.0 + 1e-12] {
            let params = p(q, 1.0);
            for i in 0..=100 {
                let z = -5.0 + 0.1 * i as f64;
                let e = exp_q(z, &params).unwrap();
                assert!((e - z.exp()).abs() <= 1e-8, "q={q} z={z}");
            }
        }
    }

    proptest! {
        #[test]
        fn exp_q_nondecreasing(q in 0.05f64..3.0, z1 in -20.0f64..20.0, dz in 0.0f64..5.0) {
            let params = p(q, 1.0);
            let z2 = z1 + dz;
            if let (Ok(a), Ok(b)) = (exp_q(z1, &params), exp_q(z2, &params)) {
                prop_assert!(a <= b * (1.0 + 1e-15));
            }
        }

        #[test]
        fn phi_cost_convex(
            q in 0.05f64..3.0,
            eta in 0.01f64..5.0,
            u1 in 0.0f64..10.0,
            u2 in 0.0f64..10.0,
            lambda in 0.0f64..1.0,
        ) {
            let params = p(q, eta);
            let mid = phi_cost(lambda * u1 + (1.0 - lambda) * u2, &params).unwrap();
            let chord = lambda * phi_cost(u1, &params).unwrap()
                + (1.0 - lambda) * phi_cost(u2, &params).unwrap();
            prop_assert!(mid <= chord + 1e-12 * (1.0 + chord.abs()));
        }

        #[test]
        fn phi_cost_nonnegative(q in 0.05f64..3.0, u in 0.0f64..50.0) {
            let v = phi_cost(u, &p(q, 1.0)).unwrap();
            prop_assert!(v >= -1e-15);
            if (u - 1.0).abs() > 1e-3 {
                prop_assert!(v > 0.0);
            }
        }
    }
}
