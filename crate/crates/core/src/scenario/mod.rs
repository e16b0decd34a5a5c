//! Problem instances: dimensions, channel estimates, uncertainty sets, noise
//! and power settings, plus the seeded generators used to draw channels and
//! channel errors.

mod config;

pub use config::{load_channels_csv, ErrorConfig, ScenarioConfig};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Tolerance on `‖C − Cᴴ‖_∞` accepted as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Seeded generator for one independent random stream.
///
/// ChaCha is counter based, so distinct `(seed, stream)` pairs never overlap and
/// every worker can own its own stream.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<Complex64> {
    DVector::from_fn(len, |_, _| complex_gaussian(rng))
}

/// Draws one i.i.d. CN(0, 1) channel estimate per user.
///
/// `groups[g]` lists the user indices of group `g`; the returned vector is
/// indexed by user. Users are drawn in index order so the result depends only
/// on `(antennas, user count, seed)`.
pub fn generate_channels(
    antennas: usize,
    groups: &[Vec<usize>],
    seed: u64,
) -> Vec<DVector<Complex64>> {
    let n_users = groups.iter().map(Vec::len).sum();
    let mut rng = rng_stream(seed, 0);
    (0..n_users)
        .map(|_| complex_gaussian_vector(&mut rng, antennas))
        .collect()
}

/// Infinity norm (max absolute row sum) of `C − Cᴴ`.
fn hermitian_deviation(c: &DMatrix<Complex64>) -> f64 {
    let diff = c - c.adjoint();
    diff.row_iter()
        .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn min_eigenvalue(c: &DMatrix<Complex64>) -> Result<f64> {
    if !c.is_square() || c.nrows() == 0 {
        return Err(Error::InvalidScenario(format!(
            "uncertainty matrix must be square and nonempty, got {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    let deviation = hermitian_deviation(c);
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    // Symmetrize so the eigensolver sees an exactly Hermitian input.
    let sym = (c + c.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Worst-case error radius `1/√λ_min(C)` of the ellipsoid `{e : eᴴCe ≤ 1}`.
pub fn epsilon_of(c: &DMatrix<Complex64>) -> Result<f64> {
    let lambda = min_eigenvalue(c)?;
    if lambda <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: lambda,
        });
    }
    Ok(1.0 / lambda.sqrt())
}

/// Channel-error set of one user.
#[derive(Debug, Clone)]
pub enum Uncertainty {
    /// Perfect CSI: the error set is `{0}`.
    Exact,
    /// `C = I/μ²`, i.e. `‖e‖₂ ≤ μ`.
    Sphere { radius: f64 },
    /// General `eᴴCe ≤ 1`.
    Ellipsoid(Ellipsoid),
}

#[derive(Debug, Clone)]
pub struct Ellipsoid {
    matrix: DMatrix<Complex64>,
    /// `L⁻ᴴ` for `C = LLᴴ`; maps the unit ball onto the ellipsoid.
    shaping: DMatrix<Complex64>,
    epsilon: f64,
}

impl Ellipsoid {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }
}

impl Uncertainty {
    /// Sphere model with squared radius `mu2`. `mu2 == 0` gives [`Uncertainty::Exact`].
    pub fn sphere(mu2: f64) -> Result<Self> {
        if !(mu2.is_finite() && mu2 >= 0.0) {
            return Err(Error::InvalidScenario(format!(
                "sphere radius² must be finite and >= 0, got {mu2}"
            )));
        }
        if mu2 == 0.0 {
            Ok(Uncertainty::Exact)
        } else {
            Ok(Uncertainty::Sphere {
                radius: mu2.sqrt(),
            })
        }
    }

    pub fn ellipsoid(matrix: DMatrix<Complex64>) -> Result<Self> {
        let epsilon = epsilon_of(&matrix)?;
        let sym = (&matrix + matrix.adjoint()).scale(0.5);
        let chol = sym.cholesky().ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: 1.0 / (epsilon * epsilon),
        })?;
        let shaping = chol
            .l()
            .adjoint()
            .try_inverse()
            .ok_or_else(|| Error::InvalidScenario("singular Cholesky factor".into()))?;
        Ok(Uncertainty::Ellipsoid(Ellipsoid {
            matrix,
            shaping,
            epsilon,
        }))
    }

    /// `ε = 1/√λ_min(C)`, zero for perfect CSI.
    pub fn epsilon(&self) -> f64 {
        match self {
            Uncertainty::Exact => 0.0,
            Uncertainty::Sphere { radius } => *radius,
            Uncertainty::Ellipsoid(e) => e.epsilon,
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, Uncertainty::Sphere { .. })
    }

    /// `eᴴCe`; for perfect CSI this is 0 at `e = 0` and infinite elsewhere.
    pub fn quadratic_form(&self, e: &DVector<Complex64>) -> f64 {
        match self {
            Uncertainty::Exact => {
                if e.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Uncertainty::Sphere { radius } => e.norm_squared() / (radius * radius),
            Uncertainty::Ellipsoid(el) => e.dotc(&(&el.matrix * e)).re,
        }
    }

    /// Draws one error vector inside the set.
    ///
    /// Half of the draws land on the boundary `eᴴCe = 1`; the rest are uniform
    /// in volume over the interior.
    pub fn sample<R: Rng + ?Sized>(&self, antennas: usize, rng: &mut R) -> DVector<Complex64> {
        if let Uncertainty::Exact = self {
            return DVector::zeros(antennas);
        }
        let mut z = complex_gaussian_vector(rng, antennas);
        let norm = z.norm();
        if norm > 0.0 {
            z.unscale_mut(norm);
        }
        let on_shell: bool = rng.gen_bool(0.5);
        let radius = if on_shell {
            1.0
        } else {
            let u: f64 = rng.gen();
            u.powf(1.0 / (2.0 * antennas as f64))
        };
        z.scale_mut(radius);
        match self {
            Uncertainty::Exact => unreachable!(),
            Uncertainty::Sphere { radius: mu } => z.scale(*mu),
            Uncertainty::Ellipsoid(el) => &el.shaping * z,
        }
    }
}

/// One error vector per user.
#[derive(Debug, Clone)]
pub struct ErrorSample {
    pub errors: Vec<DVector<Complex64>>,
}

/// Draws an [`ErrorSample`] covering every user of `scenario`.
pub fn sample_error<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> ErrorSample {
    ErrorSample {
        errors: scenario
            .users
            .iter()
            .map(|u| u.uncertainty.sample(scenario.antennas, rng))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    #[serde(alias = "sum_power")]
    Sum,
    #[serde(alias = "per_antenna_power")]
    PerAntenna,
}

/// Which of the two design problems a scenario poses.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    /// Minimize power subject to worst-case SINR ≥ `targets[g]` (linear scale).
    PowerMin { targets: Vec<f64> },
    /// Maximize the smallest worst-case SINR subject to power ≤ `power_limit` (W).
    MaxMinFair { power_limit: f64 },
}

#[derive(Debug, Clone)]
pub struct User {
    pub group: usize,
    pub channel: DVector<Complex64>,
    pub uncertainty: Uncertainty,
    pub noise: f64,
}

impl User {
    pub fn epsilon(&self) -> f64 {
        self.uncertainty.epsilon()
    }
}

/// An immutable problem instance.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub antennas: usize,
    /// User indices per group.
    pub groups: Vec<Vec<usize>>,
    pub users: Vec<User>,
    pub power_mode: PowerMode,
    pub design: Design,
}

impl Scenario {
    /// Validates and assembles a scenario. Group membership is read from
    /// `User::group`; `n_groups` fixes G so empty groups are detected.
    pub fn new(
        antennas: usize,
        n_groups: usize,
        users: Vec<User>,
        power_mode: PowerMode,
        design: Design,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidScenario(msg));
        if antennas == 0 {
            return invalid("antenna count must be >= 1".into());
        }
        if n_groups == 0 {
            return invalid("group count must be >= 1".into());
        }
        let mut groups = vec![Vec::new(); n_groups];
        for (i, u) in users.iter().enumerate() {
            if u.group >= n_groups {
                return invalid(format!("user {i} assigned to group {} >= G", u.group));
            }
            if u.channel.len() != antennas {
                return invalid(format!(
                    "user {i} channel has {} entries, expected {antennas}",
                    u.channel.len()
                ));
            }
            if u.channel.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return invalid(format!("user {i} channel is not finite"));
            }
            if !(u.noise.is_finite() && u.noise > 0.0) {
                return invalid(format!("user {i} noise power must be > 0"));
            }
            if let Uncertainty::Ellipsoid(el) = &u.uncertainty {
                if el.matrix.nrows() != antennas {
                    return invalid(format!("user {i} uncertainty matrix has wrong size"));
                }
            }
            groups[u.group].push(i);
        }
        if let Some(g) = groups.iter().position(Vec::is_empty) {
            return invalid(format!("group {g} has no users"));
        }
        match &design {
            Design::PowerMin { targets } => {
                if targets.len() != n_groups {
                    return invalid(format!(
                        "{} SINR targets given for {n_groups} groups",
                        targets.len()
                    ));
                }
                if targets.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                    return invalid("SINR targets must be > 0".into());
                }
            }
            Design::MaxMinFair { power_limit } => {
                if !(power_limit.is_finite() && *power_limit > 0.0) {
                    return invalid("power limit must be > 0".into());
                }
            }
        }
        Ok(Scenario {
            antennas,
            groups,
            users,
            power_mode,
            design,
        })
    }

    /// Convenience constructor for the sphere model with one shared radius and
    /// noise power. `channels[i]` belongs to the user whose group is `membership[i]`.
    pub fn with_sphere(
        antennas: usize,
        membership: &[usize],
        channels: Vec<DVector<Complex64>>,
        mu2: f64,
        sigma2: f64,
        power_mode: PowerMode,
        design: Design,
    ) -> Result<Self> {
        if membership.len() != channels.len() {
            return Err(Error::InvalidScenario(format!(
                "{} group labels for {} channels",
                membership.len(),
                channels.len()
            )));
        }
        let uncertainty = Uncertainty::sphere(mu2)?;
        let n_groups = membership.iter().copied().max().map_or(0, |g| g + 1);
        let users = membership
            .iter()
            .zip(channels)
            .map(|(&group, channel)| User {
                group,
                channel,
                uncertainty: uncertainty.clone(),
                noise: sigma2,
            })
            .collect();
        Scenario::new(antennas, n_groups, users, power_mode, design)
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    /// SINR target of `user` in power-minimization mode.
    pub fn target_of(&self, user: usize) -> Option<f64> {
        match &self.design {
            Design::PowerMin { targets } => Some(targets[self.users[user].group]),
            Design::MaxMinFair { .. } => None,
        }
    }

    pub fn power_limit(&self) -> Option<f64> {
        match self.design {
            Design::MaxMinFair { power_limit } => Some(power_limit),
            Design::PowerMin { .. } => None,
        }
    }

    /// Copy of the scenario that trusts the channel estimates (ε = 0 for all users).
    pub fn nominal(&self) -> Scenario {
        let mut s = self.clone();
        for u in &mut s.users {
            u.uncertainty = Uncertainty::Exact;
        }
        s
    }

    /// Single group and sphere errors for every user: the case where the
    /// worst-case error is known in closed form.
    pub fn is_single_group_sphere(&self) -> bool {
        self.n_groups() == 1
            && self
                .users
                .iter()
                .all(|u| matches!(u.uncertainty, Uncertainty::Sphere { .. } | Uncertainty::Exact))
    }
}

/// One complex M-vector per group.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    pub groups: Vec<DVector<Complex64>>,
}

impl Beamformer {
    pub fn new(groups: Vec<DVector<Complex64>>) -> Self {
        Beamformer { groups }
    }

    pub fn zeros(antennas: usize, n_groups: usize) -> Self {
        Beamformer {
            groups: vec![DVector::zeros(antennas); n_groups],
        }
    }

    pub fn antennas(&self) -> usize {
        self.groups.first().map_or(0, |w| w.len())
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn is_finite(&self) -> bool {
        self.groups
            .iter()
            .flat_map(|w| w.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn matches(&self, scenario: &Scenario) -> bool {
        self.n_groups() == scenario.n_groups()
            && self.groups.iter().all(|w| w.len() == scenario.antennas)
    }

    /// `P_s(w) = Σ_g ‖w_g‖²`.
    pub fn sum_power(&self) -> f64 {
        self.groups.iter().map(|w| w.norm_squared()).sum()
    }

    /// `P_m(w) = Σ_g |w_{g,m}|²` for each antenna `m`.
    pub fn antenna_powers(&self) -> Vec<f64> {
        (0..self.antennas())
            .map(|m| self.groups.iter().map(|w| w[m].norm_sqr()).sum())
            .collect()
    }

    /// The power metric a scenario constrains: `P_s` or `max_m P_m`.
    pub fn power(&self, mode: PowerMode) -> f64 {
        match mode {
            PowerMode::Sum => self.sum_power(),
            PowerMode::PerAntenna => self.antenna_powers().into_iter().fold(0.0, f64::max),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(values: &[f64]) -> DMatrix<Complex64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            values.len(),
            values.iter().map(|v| Complex64::new(*v, 0.0)),
        ))
    }

    fn random_hpd(m: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = rng_stream(seed, 9);
        let a = DMatrix::from_fn(m, m, |_, _| complex_gaussian(&mut rng));
        &a * a.adjoint() + DMatrix::identity(m, m).scale(0.5)
    }

    #[test]
    fn channels_are_deterministic() {
        let groups = vec![vec![0, 1], vec![2, 3]];
        assert_eq!(generate_channels(4, &groups, 11), generate_channels(4, &groups, 11));
        assert_ne!(generate_channels(4, &groups, 11), generate_channels(4, &groups, 12));
    }

    #[test]
    fn channel_entries_have_unit_variance() {
        let groups = vec![(0..25_000).collect::<Vec<_>>()];
        let h = generate_channels(4, &groups, 3);
        let n = (h.len() * 4) as f64;
        let mean: f64 = h.iter().flat_map(|v| v.iter()).map(|z| z.norm_sqr()).sum::<f64>() / n;
        assert!((0.98..=1.02).contains(&mean), "mean |h|^2 = {mean}");
        let re_var: f64 = h.iter().flat_map(|v| v.iter()).map(|z| z.re * z.re).sum::<f64>() / n;
        assert!((re_var - 0.5).abs() < 0.02, "Re variance {re_var}");
    }

    #[test]
    fn scalar_channel() {
        let h = generate_channels(1, &[vec![0]], 5);
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].len(), 1);
    }

    #[test]
    fn epsilon_examples() {
        assert!((epsilon_of(&DMatrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-12);
        let c = DMatrix::<Complex64>::identity(4, 4).scale(1.0 / 0.25);
        assert!((epsilon_of(&c).unwrap() - 0.5).abs() < 1e-12);
        assert!((epsilon_of(&diag(&[4.0, 9.0])).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn epsilon_rejects_bad_matrices() {
        let mut c = diag(&[1.0, 2.0]);
        c[(0, 1)] = Complex64::new(0.0, 1.0);
        assert!(matches!(epsilon_of(&c), Err(Error::NotHermitian { .. })));
        assert!(matches!(
            epsilon_of(&diag(&[1.0, -2.0])),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            epsilon_of(&diag(&[1.0, 0.0])),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn epsilon_scaling_and_unitary_invariance() {
        for seed in 0..20 {
            let c = random_hpd(4, seed);
            let eps = epsilon_of(&c).unwrap();
            let alpha = 0.3 + seed as f64;
            let scaled = epsilon_of(&c.scale(alpha)).unwrap();
            assert!((scaled - eps / alpha.sqrt()).abs() <= 1e-10 * eps);

            let mut rng = rng_stream(seed, 4);
            let a = DMatrix::from_fn(4, 4, |_, _| complex_gaussian(&mut rng));
            let q = a.qr().q();
            let rotated = &q * &c * q.adjoint();
            let rotated = (&rotated + rotated.adjoint()).scale(0.5);
            assert!((epsilon_of(&rotated).unwrap() - eps).abs() <= 1e-10 * eps);
        }
    }

    #[test]
    fn samples_stay_inside_ellipsoid() {
        let mut rng = rng_stream(1, 0);
        for seed in 0..5 {
            let u = Uncertainty::ellipsoid(random_hpd(3, seed)).unwrap();
            for _ in 0..2000 {
                let e = u.sample(3, &mut rng);
                assert!(u.quadratic_form(&e) <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn sphere_sampler_hits_the_shell() {
        let u = Uncertainty::ellipsoid(DMatrix::identity(4, 4)).unwrap();
        let mut rng = rng_stream(2, 0);
        let max = (0..10_000)
            .map(|_| u.sample(4, &mut rng).norm_squared())
            .fold(0.0, f64::max);
        assert!(max > 0.999 && max <= 1.0 + 1e-12, "max e^H e = {max}");

        let sphere = Uncertainty::sphere(0.25).unwrap();
        for _ in 0..10_000 {
            assert!(sphere.sample(4, &mut rng).norm() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn exact_uncertainty_samples_zero() {
        let mut rng = rng_stream(0, 0);
        let e = Uncertainty::sphere(0.0).unwrap().sample(3, &mut rng);
        assert_eq!(e, DVector::zeros(3));
    }

    #[test]
    fn scenario_validation() {
        let h = generate_channels(2, &[vec![0], vec![1]], 0);
        let design = Design::MaxMinFair { power_limit: 1.0 };
        let ok = Scenario::with_sphere(2, &[0, 1], h.clone(), 0.1, 1.0, PowerMode::Sum, design.clone());
        assert!(ok.is_ok());
        // group 1 empty
        let bad = Scenario::with_sphere(2, &[0, 2], h.clone(), 0.1, 1.0, PowerMode::Sum, design.clone());
        assert!(bad.is_err());
        let bad_noise = Scenario::with_sphere(2, &[0, 1], h.clone(), 0.1, 0.0, PowerMode::Sum, design);
        assert!(bad_noise.is_err());
        let bad_tau = Scenario::with_sphere(
            2,
            &[0, 1],
            h,
            0.1,
            1.0,
            PowerMode::Sum,
            Design::PowerMin { targets: vec![1.0] },
        );
        assert!(bad_tau.is_err());
    }

    #[test]
    fn power_metrics() {
        let w = Beamformer::new(vec![
            DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)]),
            DVector::from_vec(vec![Complex64::new(0.0, 1.0), Complex64::new(1.0, 1.0)]),
        ]);
        assert_eq!(w.sum_power(), 8.0);
        assert_eq!(w.antenna_powers(), vec![2.0, 6.0]);
        assert_eq!(w.power(PowerMode::PerAntenna), 6.0);
    }
}
