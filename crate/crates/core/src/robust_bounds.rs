//! Closed-form robust-SINR mathematics.
//!
//! For user `(i, g)` with estimate `ĥ`, radius `ε = 1/√λ_min(C)` and noise `σ²`,
//!
//! ```text
//! ζ(w, τ) = ε‖w_g‖ + √τ · √( Σ_{l≠g} (|w_lᴴĥ| + ε‖w_l‖)² + σ² )
//! ```
//!
//! and `ζ(w, τ) − |w_gᴴĥ| ≤ 0` guarantees `SINR(w, e) ≥ τ` for every error in the
//! user's ellipsoid. The only nonconvex piece is `−|w_gᴴĥ|`, which the MM loops
//! replace by the linear minorant `Re(uᴴĥĥᴴw_g)/|uᴴĥ|` taken at the previous iterate `u`.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scenario::{rng_stream, Beamformer, Scenario};

/// Pivots with `|w_prevᴴĥ|` at or below this are rejected as degenerate.
pub const PIVOT_TOL: f64 = 1e-12;

/// `f_ig(w) = ζ(w, τ_g) − |w_gᴴĥ_ig|`; nonpositive values certify the user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustMargin {
    pub user: usize,
    pub value: f64,
}

/// SINR of a group-`group` user whose true channel is `channel`.
fn sinr_for_channel(w: &Beamformer, group: usize, channel: &DVector<Complex64>, noise: f64) -> f64 {
    let mut interference = 0.0;
    let mut signal = 0.0;
    for (l, wl) in w.groups.iter().enumerate() {
        let p = wl.dotc(channel).norm_sqr();
        if l == group {
            signal = p;
        } else {
            interference += p;
        }
    }
    signal / (interference + noise)
}

/// SINR of `user` when its true channel is `ĥ + e`.
pub fn sinr(w: &Beamformer, scenario: &Scenario, user: usize, e: &DVector<Complex64>) -> f64 {
    let u = &scenario.users[user];
    let channel = &u.channel + e;
    sinr_for_channel(w, u.group, &channel, u.noise)
}

/// SINR at the channel estimate (`e = 0`).
pub fn nominal_sinr(w: &Beamformer, scenario: &Scenario, user: usize) -> f64 {
    let u = &scenario.users[user];
    sinr_for_channel(w, u.group, &u.channel, u.noise)
}

/// The conservative bound `ζ(w, τ)` for `user`, using that user's own ε.
pub fn zeta(w: &Beamformer, tau: f64, scenario: &Scenario, user: usize) -> f64 {
    let u = &scenario.users[user];
    let eps = u.epsilon();
    let mut sum = u.noise;
    for (l, wl) in w.groups.iter().enumerate() {
        if l != u.group {
            let q = wl.dotc(&u.channel).norm() + eps * wl.norm();
            sum += q * q;
        }
    }
    eps * w.groups[u.group].norm() + tau.sqrt() * sum.sqrt()
}

pub fn margin(w: &Beamformer, tau: f64, scenario: &Scenario, user: usize) -> RobustMargin {
    let u = &scenario.users[user];
    let value = zeta(w, tau, scenario, user) - w.groups[u.group].dotc(&u.channel).norm();
    RobustMargin { user, value }
}

/// `w_prev,gᴴ ĥ` for `user`, rejecting near-zero pivots.
pub fn pivot(w_prev: &Beamformer, scenario: &Scenario, user: usize) -> Result<Complex64> {
    let u = &scenario.users[user];
    let p = w_prev.groups[u.group].dotc(&u.channel);
    let magnitude = p.norm();
    if magnitude <= PIVOT_TOL {
        return Err(Error::DegeneratePivot { user, magnitude });
    }
    Ok(p)
}

/// The linear minorant of `|w_gᴴĥ|` at `w_prev`: `Re(conj(p)·w_gᴴĥ)/|p|` with
/// `p = w_prev,gᴴĥ`.
pub fn linearized_signal(
    w: &Beamformer,
    w_prev: &Beamformer,
    scenario: &Scenario,
    user: usize,
) -> Result<f64> {
    let p = pivot(w_prev, scenario, user)?;
    let u = &scenario.users[user];
    let v = w.groups[u.group].dotc(&u.channel);
    Ok((p.conj() * v).re / p.norm())
}

/// Surrogate margin `ζ(w, τ) − Re(w_prevᴴĥĥᴴw_g)/|w_prevᴴĥ|`.
///
/// Upper-bounds [`margin`] everywhere and touches it at `w = w_prev`.
pub fn linearized_margin(
    w: &Beamformer,
    w_prev: &Beamformer,
    tau: f64,
    scenario: &Scenario,
    user: usize,
) -> Result<f64> {
    Ok(zeta(w, tau, scenario, user) - linearized_signal(w, w_prev, scenario, user)?)
}

/// Worst-case error for one group under the sphere model:
/// `e = −ε e^{j∠(wᴴĥ)} w/‖w‖`.
pub fn analytic_worst_error_single_group(
    w: &DVector<Complex64>,
    channel: &DVector<Complex64>,
    eps: f64,
) -> Result<DVector<Complex64>> {
    let norm = w.norm();
    if norm == 0.0 {
        return Err(Error::ZeroBeamformer);
    }
    let inner = w.dotc(channel);
    let phase = if inner.norm() > 0.0 {
        inner / inner.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    Ok(w.map(|z| -eps * phase * z / norm))
}

/// Worst-case SINR of `user` for G = 1 under the sphere model,
/// `((|wᴴĥ| − ε‖w‖)₊)² / σ²`.
pub fn analytic_worst_sinr_single_group(w: &Beamformer, scenario: &Scenario, user: usize) -> f64 {
    let u = &scenario.users[user];
    let wg = &w.groups[u.group];
    let amplitude = (wg.dotc(&u.channel).norm() - u.epsilon() * wg.norm()).max(0.0);
    amplitude * amplitude / u.noise
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WorstCaseReport {
    /// Smallest sampled SINR per user (linear).
    pub empirical: Vec<f64>,
    /// Closed-form worst SINR per user, when the scenario admits one.
    pub analytic: Vec<Option<f64>>,
    /// `min(empirical, analytic)` per user.
    pub worst: Vec<f64>,
    pub min_sinr: f64,
    /// `log₂(1 + min_sinr)` in bit/s/Hz.
    pub rate: f64,
}

/// Smallest SINR per user over `n_draws` sampled error realizations.
///
/// Draws are generated draw-major (all users of draw 0, then draw 1, ...) from
/// one stream of `seed`, so a run with more draws visits a superset of the
/// errors of a shorter run with the same seed. For G = 1 under the sphere
/// model the analytic worst case is folded in as well.
pub fn monte_carlo_worst(
    w: &Beamformer,
    scenario: &Scenario,
    n_draws: usize,
    seed: u64,
) -> WorstCaseReport {
    let mut rng = rng_stream(seed, 2);
    let mut empirical = vec![f64::INFINITY; scenario.n_users()];
    for _ in 0..n_draws {
        for (i, u) in scenario.users.iter().enumerate() {
            let e = u.uncertainty.sample(scenario.antennas, &mut rng);
            let s = sinr(w, scenario, i, &e);
            if s < empirical[i] {
                empirical[i] = s;
            }
        }
    }
    if n_draws == 0 {
        empirical = (0..scenario.n_users())
            .map(|i| nominal_sinr(w, scenario, i))
            .collect();
    }
    let analytic: Vec<Option<f64>> = (0..scenario.n_users())
        .map(|i| {
            scenario
                .is_single_group_sphere()
                .then(|| analytic_worst_sinr_single_group(w, scenario, i))
        })
        .collect();
    let worst: Vec<f64> = empirical
        .iter()
        .zip(&analytic)
        .map(|(e, a)| a.map_or(*e, |a| e.min(a)))
        .collect();
    let min_sinr = worst.iter().copied().fold(f64::INFINITY, f64::min);
    WorstCaseReport {
        rate: (1.0 + min_sinr).log2(),
        empirical,
        analytic,
        worst,
        min_sinr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{complex_gaussian_vector, Design, PowerMode, Uncertainty, User};
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cv(v: &[(f64, f64)]) -> DVector<Complex64> {
        DVector::from_iterator(v.len(), v.iter().map(|&(a, b)| c(a, b)))
    }

    fn fixed_instance(mu2: f64) -> (Scenario, Beamformer) {
        let h = cv(&[(1.0, 0.5), (-0.3, 0.8)]);
        let users = vec![
            User {
                group: 0,
                channel: h.clone(),
                uncertainty: Uncertainty::sphere(mu2).unwrap(),
                noise: 0.7,
            },
            User {
                group: 1,
                channel: h,
                uncertainty: Uncertainty::sphere(mu2).unwrap(),
                noise: 0.7,
            },
        ];
        let s = Scenario::new(
            2,
            2,
            users,
            PowerMode::Sum,
            Design::MaxMinFair { power_limit: 1.0 },
        )
        .unwrap();
        let w = Beamformer::new(vec![
            cv(&[(0.6, -0.2), (0.1, 0.4)]),
            cv(&[(-0.3, 0.1), (0.5, -0.5)]),
        ]);
        (s, w)
    }

    fn single_user(h: Complex64, mu2: f64, noise: f64) -> Scenario {
        Scenario::with_sphere(
            1,
            &[0],
            vec![DVector::from_element(1, h)],
            mu2,
            noise,
            PowerMode::Sum,
            Design::MaxMinFair { power_limit: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn sinr_matches_scalar_evaluation() {
        let (s, w) = fixed_instance(0.09);
        let e = cv(&[(0.05, -0.1), (0.02, 0.03)]);
        // frozen from a direct numpy evaluation of the SINR formula
        assert!((sinr(&w, &s, 0, &e) - 0.8231572516889465).abs() < 1e-13);
    }

    #[test]
    fn matched_filter_sinr() {
        let h = cv(&[(1.0, 2.0), (-0.5, 0.3), (0.2, 0.0)]);
        let s = Scenario::with_sphere(
            3,
            &[0],
            vec![h.clone()],
            0.0,
            1.0,
            PowerMode::Sum,
            Design::MaxMinFair { power_limit: 1.0 },
        )
        .unwrap();
        let w = Beamformer::new(vec![h.unscale(h.norm())]);
        assert!((nominal_sinr(&w, &s, 0) - h.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_beam_has_zero_sinr() {
        let s = single_user(c(1.0, 0.0), 0.0, 1.0);
        let w = Beamformer::new(vec![cv(&[(0.0, 0.0)])]);
        assert_eq!(nominal_sinr(&w, &s, 0), 0.0);
        let s2 = Scenario::with_sphere(
            2,
            &[0],
            vec![cv(&[(1.0, 0.0), (0.0, 0.0)])],
            0.0,
            1.0,
            PowerMode::Sum,
            Design::MaxMinFair { power_limit: 1.0 },
        )
        .unwrap();
        let w2 = Beamformer::new(vec![cv(&[(0.0, 0.0), (1.0, 1.0)])]);
        assert_eq!(nominal_sinr(&w2, &s2, 0), 0.0);
    }

    #[test]
    fn zeta_examples() {
        // G=1, ε=0.5, ‖w‖=2, τ=1, σ=1 → 0.5·2 + 1
        let s = single_user(c(1.0, 0.0), 0.25, 1.0);
        let w = Beamformer::new(vec![cv(&[(0.0, 2.0)])]);
        assert!((zeta(&w, 1.0, &s, 0) - 2.0).abs() < 1e-15);
        assert!((zeta(&w, 0.0, &s, 0) - 1.0).abs() < 1e-15);

        let (s, w) = fixed_instance(0.09);
        // frozen from numpy, ε = 0.3, τ = 2
        assert!((zeta(&w, 2.0, &s, 0) - 2.1057536109211648).abs() < 1e-13);
        assert!((zeta(&w, 2.0, &s, 1) - 2.3973433204928636).abs() < 1e-13);
        assert!((margin(&w, 2.0, &s, 0).value - 1.050244255207062).abs() < 1e-13);
    }

    #[test]
    fn linearized_margin_matches_scalar_evaluation() {
        let (s, w) = fixed_instance(0.09);
        let wp = Beamformer::new(vec![cv(&[(0.2, 0.9), (-0.4, 0.1)]), w.groups[1].clone()]);
        let v = linearized_margin(&w, &wp, 2.0, &s, 0).unwrap();
        assert!((v - 2.1719502907375774).abs() < 1e-13);
    }

    #[test]
    fn zero_beamformer_margin() {
        let (s, _) = fixed_instance(0.09);
        let w = Beamformer::zeros(2, 2);
        let m = margin(&w, 3.0, &s, 0).value;
        assert!((m - (3.0f64 * 0.7).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_pivot_is_signalled() {
        let (s, w) = fixed_instance(0.09);
        let zero = Beamformer::zeros(2, 2);
        assert!(matches!(
            linearized_margin(&w, &zero, 1.0, &s, 0),
            Err(Error::DegeneratePivot { user: 0, .. })
        ));
    }

    #[test]
    fn surrogate_touches_and_majorizes() {
        let mut rng = rng_stream(77, 0);
        for trial in 0..500 {
            let (mut s, _) = fixed_instance(rng.gen_range(0.0..0.5));
            for u in &mut s.users {
                u.channel = complex_gaussian_vector(&mut rng, 2);
            }
            let rand_w = |rng: &mut _| {
                Beamformer::new(vec![complex_gaussian_vector(rng, 2), complex_gaussian_vector(rng, 2)])
            };
            let w = rand_w(&mut rng);
            let wp = rand_w(&mut rng);
            let tau = rng.gen_range(0.0..5.0);
            for user in 0..2 {
                let m = margin(&w, tau, &s, user).value;
                let lm = linearized_margin(&w, &wp, tau, &s, user).unwrap();
                assert!(lm >= m - 1e-10, "trial {trial}: {lm} < {m}");
                let touch = linearized_margin(&wp, &wp, tau, &s, user).unwrap();
                assert!((touch - margin(&wp, tau, &s, user).value).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn common_phase_rotation_gap() {
        // w = e^{jθ} w_prev: the surrogate signal term is cos θ · |w_prevᴴĥ|.
        let (s, w) = fixed_instance(0.09);
        for k in 0..12 {
            let theta = k as f64 * 0.5;
            let rot = Complex64::from_polar(1.0, theta);
            let wr = Beamformer::new(w.groups.iter().map(|g| g.map(|z| z * rot)).collect());
            let lin = linearized_signal(&wr, &w, &s, 0).unwrap();
            let mag = w.groups[0].dotc(&s.users[0].channel).norm();
            assert!((lin - theta.cos() * mag).abs() < 1e-12);
            let lm = linearized_margin(&wr, &w, 1.5, &s, 0).unwrap();
            assert!(lm >= margin(&wr, 1.5, &s, 0).value - 1e-12);
        }
    }

    #[test]
    fn phase_invariance() {
        let (s, w) = fixed_instance(0.2);
        let wr = Beamformer::new(vec![
            w.groups[0].map(|z| z * Complex64::from_polar(1.0, 0.7)),
            w.groups[1].map(|z| z * Complex64::from_polar(1.0, -2.1)),
        ]);
        let e = cv(&[(0.1, 0.1), (-0.2, 0.0)]);
        for user in 0..2 {
            assert!((sinr(&w, &s, user, &e) - sinr(&wr, &s, user, &e)).abs() < 1e-12);
            assert!((zeta(&w, 1.3, &s, user) - zeta(&wr, 1.3, &s, user)).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_error_example() {
        let w = cv(&[(1.0, 0.0), (0.0, 0.0)]);
        let h = cv(&[(2.0, 0.0), (0.0, 0.0)]);
        let e = analytic_worst_error_single_group(&w, &h, 0.5).unwrap();
        assert!((e[0] - c(-0.5, 0.0)).norm() < 1e-15);
        assert!((w.dotc(&(&h + &e)).norm() - 1.5).abs() < 1e-15);

        // grid search over the error disc |e₁| ≤ 0.5 (second coordinate is irrelevant)
        let mut best = f64::INFINITY;
        for ir in 0..=200 {
            for ia in 0..400 {
                let e1 = Complex64::from_polar(0.5 * ir as f64 / 200.0, ia as f64 * std::f64::consts::TAU / 400.0);
                best = best.min((c(2.0, 0.0) + e1).norm());
            }
        }
        assert!((best - 1.5).abs() < 1e-12);

        assert!(matches!(
            analytic_worst_error_single_group(&DVector::zeros(2), &h, 0.5),
            Err(Error::ZeroBeamformer)
        ));
        let none = analytic_worst_error_single_group(&w, &h, 0.0).unwrap();
        assert_eq!(none, DVector::zeros(2));
    }

    #[test]
    fn analytic_error_has_radius_eps() {
        let mut rng = rng_stream(3, 1);
        for _ in 0..100 {
            let w = complex_gaussian_vector(&mut rng, 4);
            let h = complex_gaussian_vector(&mut rng, 4);
            let eps = rng.gen_range(0.01..1.0);
            let e = analytic_worst_error_single_group(&w, &h, eps).unwrap();
            assert!((e.norm() - eps).abs() < 1e-12);
            let lhs = w.dotc(&(&h + &e)).norm();
            let rhs = w.dotc(&h).norm() - eps * w.norm();
            if rhs >= 0.0 {
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_model_worst_equals_nominal() {
        let (s, w) = fixed_instance(0.0);
        let r = monte_carlo_worst(&w, &s, 50, 1);
        for i in 0..2 {
            assert_eq!(r.worst[i], nominal_sinr(&w, &s, i));
        }
        assert!((r.rate - (1.0 + r.min_sinr).log2()).abs() < 1e-15);
    }

    #[test]
    fn more_draws_never_raise_the_minimum() {
        let (s, w) = fixed_instance(0.25);
        let short = monte_carlo_worst(&w, &s, 1000, 5);
        let long = monte_carlo_worst(&w, &s, 4000, 5);
        for i in 0..2 {
            assert!(long.empirical[i] <= short.empirical[i]);
        }
    }

    #[test]
    fn single_group_report_includes_analytic_candidate() {
        let mut rng = rng_stream(8, 0);
        let h: Vec<_> = (0..3).map(|_| complex_gaussian_vector(&mut rng, 4)).collect();
        let s = Scenario::with_sphere(
            4,
            &[0, 0, 0],
            h,
            0.1,
            1.0,
            PowerMode::Sum,
            Design::MaxMinFair { power_limit: 4.0 },
        )
        .unwrap();
        let w = Beamformer::new(vec![s.users[0].channel.clone()]);
        let r = monte_carlo_worst(&w, &s, 500, 2);
        for i in 0..3 {
            let a = r.analytic[i].unwrap();
            assert!(r.empirical[i] >= a - 1e-9);
            assert_eq!(r.worst[i], a);
        }
    }
}
