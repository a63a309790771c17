//! Max-min robust tree OT.
//!
//! The adversary perturbs the edge weights inside an uncertainty set and the
//! transporter then solves the tree OT problem with the perturbed metric.
//! Because the inner problem is linear in the weights with coefficients
//! `h_e`, both uncertainty sets admit closed forms:
//!
//! * box `w − α ≤ ŵ ≤ w + β`: the adversary takes the upper corner, giving
//!   `Σ (w_e + β_e) h_e`;
//! * ball `‖ŵ − w‖_p ≤ λ`: the surcharge is the dual norm, giving
//!   `Σ w_e h_e + λ‖h‖_{p′}` with `1/p + 1/p′ = 1`.

use core::fmt;
use core::str::FromStr;

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{abs, powf, sqrt};
use crate::measure::Measure;
use crate::transport::{h_profile, HProfile};
use crate::tree::{EdgeVector, Tree};

/// An exponent `p ∈ [1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Exponent(f64);

impl Exponent {
    pub const ONE: Exponent = Exponent(1.0);
    pub const TWO: Exponent = Exponent(2.0);
    pub const INFINITY: Exponent = Exponent(f64::INFINITY);

    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::InvalidP(p));
        }
        Ok(Exponent(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0 == f64::INFINITY
    }

    /// `p′` with `1/p + 1/p′ = 1`; the endpoints map to each other exactly.
    pub fn conjugate(self) -> Exponent {
        if self.0 == 1.0 {
            Exponent::INFINITY
        } else if self.is_infinite() {
            Exponent::ONE
        } else {
            Exponent(self.0 / (self.0 - 1.0))
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    /// Accepts a decimal or `inf`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Exponent::INFINITY);
        }
        let p: f64 = s.parse().map_err(|_| Error::InvalidP(f64::NAN))?;
        Exponent::new(p)
    }
}

/// `‖x‖_q` for nonnegative or signed entries.
pub fn lp_norm(values: &[f64], q: Exponent) -> f64 {
    let max = values.iter().fold(0.0f64, |m, &x| m.max(abs(x)));
    if q.is_infinite() || max == 0.0 {
        return max;
    }
    if q.value() == 1.0 {
        return values.iter().fold(0.0, |s, &x| s + abs(x));
    }
    let nonzero = values.iter().filter(|&&x| x != 0.0);
    if q.value() == 2.0 {
        let s = nonzero.fold(0.0, |s, &x| {
            let r = x / max;
            s + r * r
        });
        return max * sqrt(s);
    }
    let s = nonzero.fold(0.0, |s, &x| s + powf(abs(x) / max, q.value()));
    max * powf(s, 1.0 / q.value())
}

/// `‖h‖_{p′}`, the norm dual to `‖·‖_p`.
pub fn dual_norm(h: &[f64], p: Exponent) -> f64 {
    lp_norm(h, p.conjugate())
}

fn check_radius(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidRadius(lambda));
    }
    Ok(())
}

fn check_beta(tree: &Tree, beta: &EdgeVector) -> Result<()> {
    beta.check_len(tree.edge_count())?;
    if let Some((edge, &value)) = beta
        .iter()
        .enumerate()
        .find(|(_, b)| !(b.is_finite() && **b >= 0.0))
    {
        return Err(Error::NegativeBeta { edge, value });
    }
    Ok(())
}

/// An uncertainty set around the weights of a tree.
#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintySpec {
    /// `w − α ≤ ŵ ≤ w + β`. A missing `α` means `α = 0`.
    Box {
        alpha: Option<EdgeVector>,
        beta: EdgeVector,
    },
    /// `‖ŵ − w‖_p ≤ λ`, `ŵ ≥ 0`.
    Ball { p: Exponent, lambda: f64 },
}

impl UncertaintySpec {
    /// Box with `β = λ·1`.
    pub fn uniform_box(tree: &Tree, lambda: f64) -> Self {
        UncertaintySpec::Box {
            alpha: None,
            beta: EdgeVector::constant(tree.edge_count(), lambda),
        }
    }

    pub fn validate(&self, tree: &Tree) -> Result<()> {
        match self {
            UncertaintySpec::Box { alpha, beta } => {
                check_beta(tree, beta)?;
                if let Some(alpha) = alpha {
                    alpha.check_len(tree.edge_count())?;
                    for (edge, &a) in alpha.iter().enumerate() {
                        if !(a.is_finite() && a >= 0.0 && a <= tree.edge_weight(edge)) {
                            return Err(Error::InvalidAlpha { edge, value: a });
                        }
                    }
                }
                Ok(())
            }
            UncertaintySpec::Ball { lambda, .. } => check_radius(*lambda),
        }
    }

    /// Closed-form robust distance for this set.
    pub fn distance(&self, tree: &Tree, mu: &Measure, nu: &Measure) -> Result<f64> {
        self.validate(tree)?;
        let profile = h_profile(tree, mu, nu)?;
        Ok(match self {
            UncertaintySpec::Box { beta, .. } => box_value(&profile, beta),
            UncertaintySpec::Ball { p, lambda } => ball_value(&profile, *p, *lambda),
        })
    }
}

pub(crate) fn box_value(profile: &HProfile, beta: &EdgeVector) -> f64 {
    profile
        .edges
        .iter()
        .zip(&profile.w)
        .zip(&profile.h)
        .fold(0.0, |s, ((&e, w), h)| s + (w + beta[e]) * h)
}

pub(crate) fn ball_value(profile: &HProfile, p: Exponent, lambda: f64) -> f64 {
    profile.weighted_sum() + lambda * dual_norm(&profile.h, p)
}

/// Robust distance over the box `w − α ≤ ŵ ≤ w + β`: `Σ (w_e + β_e) h_e`.
///
/// The lower limit `α` does not enter the value.
pub fn rt_box(tree: &Tree, mu: &Measure, nu: &Measure, beta: &EdgeVector) -> Result<f64> {
    check_beta(tree, beta)?;
    Ok(box_value(&h_profile(tree, mu, nu)?, beta))
}

/// Robust distance over the ℓp ball of radius `λ`: `Σ w_e h_e + λ‖h‖_{p′}`.
///
/// `λ = 0` is accepted and reduces to the tree-Wasserstein distance.
pub fn rt_ball(tree: &Tree, mu: &Measure, nu: &Measure, p: Exponent, lambda: f64) -> Result<f64> {
    check_radius(lambda)?;
    Ok(ball_value(&h_profile(tree, mu, nu)?, p, lambda))
}

/// A maximizer `ŵ*` of `Σ ŵ_e h_e` over `‖ŵ − w‖_p ≤ λ`.
///
/// * `1 < p < ∞`: `ŵ*_e = w_e + λ (h_e / ‖h‖_{p′})^{p′−1}`
/// * `p = ∞`: `ŵ* = w + λ·1`
/// * `p = 1`: `λ` added to the single edge with the largest `h_e`, the
///   smallest edge id winning ties.
///
/// When `h = 0` every feasible point is optimal and `w` is returned.
pub fn adversarial_weights(
    tree: &Tree,
    mu: &Measure,
    nu: &Measure,
    p: Exponent,
    lambda: f64,
) -> Result<EdgeVector> {
    check_radius(lambda)?;
    let profile = h_profile(tree, mu, nu)?;
    Ok(maximizer(tree, &profile, p, lambda))
}

pub(crate) fn maximizer(tree: &Tree, profile: &HProfile, p: Exponent, lambda: f64) -> EdgeVector {
    let mut w: Vec<f64> = tree.weights().into_inner();
    if profile.is_empty() {
        return EdgeVector::new(w);
    }
    if p.is_infinite() {
        for x in &mut w {
            *x += lambda;
        }
    } else if p.value() == 1.0 {
        let mut best = 0;
        for i in 1..profile.len() {
            if profile.h[i] > profile.h[best] {
                best = i;
            }
        }
        w[profile.edges[best]] += lambda;
    } else {
        let q = p.conjugate().value();
        let norm = lp_norm(&profile.h, p.conjugate());
        for (&e, &h) in profile.edges.iter().zip(&profile.h) {
            w[e] += lambda * powf(h / norm, q - 1.0);
        }
    }
    EdgeVector::new(w)
}

/// Whether the ball `B_p(w, λ)` leaves the nonnegative orthant, i.e. some
/// edge is shorter than `λ`. The closed forms stay valid either way since
/// the maximizer is nonnegative.
pub fn ball_exits_orthant(tree: &Tree, lambda: f64) -> bool {
    tree.weights().iter().any(|&w| w < lambda)
}

/// `(rt_box with β = λ·1, rt_ball with p = ∞)`. The two agree.
pub fn check_box_ball_connection(
    tree: &Tree,
    mu: &Measure,
    nu: &Measure,
    lambda: f64,
) -> Result<(f64, f64)> {
    check_radius(lambda)?;
    let profile = h_profile(tree, mu, nu)?;
    let beta = EdgeVector::constant(tree.edge_count(), lambda);
    Ok((
        box_value(&profile, &beta),
        ball_value(&profile, Exponent::INFINITY, lambda),
    ))
}
