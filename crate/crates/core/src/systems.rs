//! Analytic benchmark Hamiltonians with closed-form values and gradients.
//!
//! These serve as ground-truth generators for training data and as oracles
//! in tests. Each system carries a recommended initial-condition sampling
//! box so experiments are reproducible.

use crate::provider::HamiltonianProvider;
use crate::state::PhaseState;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("unknown system `{name}`; known systems: {known}")]
pub struct UnknownSystem {
    pub name: String,
    pub known: String,
}

/// The benchmark systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyticSystem {
    Pendulum,
    LotkaVolterra,
    Spring,
    HenonHeiles,
    TaoExample,
    SchrodingerFourier,
}

impl AnalyticSystem {
    pub const ALL: [AnalyticSystem; 6] = [
        AnalyticSystem::Pendulum,
        AnalyticSystem::LotkaVolterra,
        AnalyticSystem::Spring,
        AnalyticSystem::HenonHeiles,
        AnalyticSystem::TaoExample,
        AnalyticSystem::SchrodingerFourier,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AnalyticSystem::Pendulum => "pendulum",
            AnalyticSystem::LotkaVolterra => "lotka-volterra",
            AnalyticSystem::Spring => "spring",
            AnalyticSystem::HenonHeiles => "henon-heiles",
            AnalyticSystem::TaoExample => "tao-example",
            AnalyticSystem::SchrodingerFourier => "schrodinger",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, UnknownSystem> {
        Self::ALL
            .iter()
            .find(|s| s.name() == name)
            .copied()
            .ok_or_else(|| UnknownSystem {
                name: name.to_string(),
                known: Self::ALL
                    .iter()
                    .map(|s| s.name())
                    .collect::<Vec<_>>()
                    .join(", "),
            })
    }

    /// Dimension `N` of the configuration space.
    pub fn dim(&self) -> usize {
        match self {
            AnalyticSystem::HenonHeiles | AnalyticSystem::SchrodingerFourier => 2,
            _ => 1,
        }
    }

    /// Whether `H` splits as `T(q) + V(p)`.
    pub fn separable(&self) -> bool {
        !matches!(
            self,
            AnalyticSystem::TaoExample | AnalyticSystem::SchrodingerFourier
        )
    }

    /// Axis-aligned sampling box for initial conditions: per-coordinate
    /// `(lo, hi)` bounds, ordered `q_0..q_{N-1}, p_0..p_{N-1}`.
    pub fn sampling_box(&self) -> Vec<(f64, f64)> {
        match self {
            AnalyticSystem::Pendulum => vec![(-PI / 2.0, PI / 2.0), (-1.0, 1.0)],
            AnalyticSystem::LotkaVolterra => vec![(-1.0, 1.0), (-1.0, 1.0)],
            AnalyticSystem::Spring => vec![(-1.0, 1.0), (-1.0, 1.0)],
            AnalyticSystem::HenonHeiles => vec![(-0.5, 0.5); 4],
            AnalyticSystem::TaoExample => vec![(-2.0, 2.0), (-2.0, 2.0)],
            AnalyticSystem::SchrodingerFourier => vec![(-1.0, 1.0); 4],
        }
    }

    pub fn value(&self, q: &[f64], p: &[f64]) -> f64 {
        match self {
            AnalyticSystem::Pendulum => 3.0 * (1.0 - q[0].cos()) + p[0] * p[0],
            AnalyticSystem::LotkaVolterra => p[0] - p[0].exp() + 2.0 * q[0] - q[0].exp(),
            AnalyticSystem::Spring => q[0] * q[0] + p[0] * p[0],
            AnalyticSystem::HenonHeiles => {
                let (q1, q2, p1, p2) = (q[0], q[1], p[0], p[1]);
                (p1 * p1 + p2 * p2) / 2.0
                    + (q1 * q1 + q2 * q2)
                    + (q1 * q1 * q2 - q2 * q2 * q2 / 3.0) / 2.0
            }
            AnalyticSystem::TaoExample => {
                (q[0] * q[0] + 1.0) * (p[0] * p[0] + 1.0) / 2.0
            }
            AnalyticSystem::SchrodingerFourier => {
                let (q1, q2, p1, p2) = (q[0], q[1], p[0], p[1]);
                let m1 = q1 * q1 + p1 * p1;
                let m2 = q2 * q2 + p2 * p2;
                (m1 * m1 + m2 * m2) / 4.0
                    - (q1 * q1 * q2 * q2 + p1 * p1 * p2 * p2
                        - q1 * q1 * p2 * p2
                        - p1 * p1 * q2 * q2
                        + 4.0 * q1 * q2 * p1 * p2)
            }
        }
    }

    /// Hand-derived partial derivatives `(dH/dq, dH/dp)`.
    pub fn gradient(&self, q: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self {
            AnalyticSystem::Pendulum => (vec![3.0 * q[0].sin()], vec![2.0 * p[0]]),
            AnalyticSystem::LotkaVolterra => {
                (vec![2.0 - q[0].exp()], vec![1.0 - p[0].exp()])
            }
            AnalyticSystem::Spring => (vec![2.0 * q[0]], vec![2.0 * p[0]]),
            AnalyticSystem::HenonHeiles => {
                let (q1, q2, p1, p2) = (q[0], q[1], p[0], p[1]);
                (
                    vec![2.0 * q1 + q1 * q2, 2.0 * q2 + (q1 * q1 - q2 * q2) / 2.0],
                    vec![p1, p2],
                )
            }
            AnalyticSystem::TaoExample => {
                let (qv, pv) = (q[0], p[0]);
                (
                    vec![qv * (pv * pv + 1.0)],
                    vec![pv * (qv * qv + 1.0)],
                )
            }
            AnalyticSystem::SchrodingerFourier => {
                let (q1, q2, p1, p2) = (q[0], q[1], p[0], p[1]);
                let m1 = q1 * q1 + p1 * p1;
                let m2 = q2 * q2 + p2 * p2;
                (
                    vec![
                        m1 * q1 - (2.0 * q1 * q2 * q2 - 2.0 * q1 * p2 * p2 + 4.0 * q2 * p1 * p2),
                        m2 * q2 - (2.0 * q1 * q1 * q2 - 2.0 * p1 * p1 * q2 + 4.0 * q1 * p1 * p2),
                    ],
                    vec![
                        m1 * p1 - (2.0 * p1 * p2 * p2 - 2.0 * p1 * q2 * q2 + 4.0 * q1 * q2 * p2),
                        m2 * p2 - (2.0 * p1 * p1 * p2 - 2.0 * q1 * q1 * p2 + 4.0 * q1 * q2 * p1),
                    ],
                )
            }
        }
    }
}

impl HamiltonianProvider for AnalyticSystem {
    fn dim(&self) -> usize {
        AnalyticSystem::dim(self)
    }
    fn value(&self, q: &[f64], p: &[f64]) -> f64 {
        AnalyticSystem::value(self, q, p)
    }
    fn gradient(&self, q: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        AnalyticSystem::gradient(self, q, p)
    }
}

/// One catalog row: name, dimension, provider and sampling domain.
#[derive(Debug, Clone)]
pub struct SystemCatalogEntry {
    pub name: &'static str,
    pub dimension: usize,
    pub system: AnalyticSystem,
    pub sampling_box: Vec<(f64, f64)>,
    pub separable: bool,
}

/// The full benchmark catalog.
pub fn catalog() -> Vec<SystemCatalogEntry> {
    AnalyticSystem::ALL
        .iter()
        .map(|&s| SystemCatalogEntry {
            name: s.name(),
            dimension: s.dim(),
            system: s,
            sampling_box: s.sampling_box(),
            separable: s.separable(),
        })
        .collect()
}

/// Closed-form solution of the spring system `H = q^2 + p^2`:
/// `dq/dt = 2p`, `dp/dt = -2q` is a rotation at angular rate 2.
pub fn exact_spring_solution(q0: f64, p0: f64, t: f64) -> PhaseState {
    let (s, c) = (2.0 * t).sin_cos();
    PhaseState {
        q: vec![q0 * c + p0 * s],
        p: vec![p0 * c - q0 * s],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::check_gradient_fd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tao_example_at_origin() {
        assert_eq!(AnalyticSystem::TaoExample.value(&[0.0], &[0.0]), 0.5);
    }

    #[test]
    fn spring_and_pendulum_at_rest() {
        assert_eq!(AnalyticSystem::Spring.value(&[0.0], &[0.0]), 0.0);
        assert_eq!(AnalyticSystem::Pendulum.value(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn henon_heiles_origin_is_critical_point() {
        let (gq, gp) = AnalyticSystem::HenonHeiles.gradient(&[0.0, 0.0], &[0.0, 0.0]);
        assert!(gq.iter().chain(gp.iter()).all(|&g| g == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for sys in AnalyticSystem::ALL {
            let n = sys.dim();
            for _ in 0..100 {
                let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
                check_gradient_fd(&sys, &q, &p, 1e-5, 1e-6);
            }
        }
    }

    #[test]
    fn exact_spring_at_zero_time() {
        let s = exact_spring_solution(0.0, -3.0, 0.0);
        assert_eq!(s.q[0], 0.0);
        assert_eq!(s.p[0], -3.0);
    }

    #[test]
    fn exact_spring_quarter_period() {
        let s = exact_spring_solution(1.0, 0.0, std::f64::consts::FRAC_PI_2);
        assert!((s.q[0] + 1.0).abs() < 1e-12);
        assert!(s.p[0].abs() < 1e-12);
    }

    #[test]
    fn exact_spring_conserves_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let t: f64 = rng.gen_range(0.0..20.0);
            let s = exact_spring_solution(1.0, 1.0, t);
            let h = s.q[0] * s.q[0] + s.p[0] * s.p[0];
            assert!((h - 2.0).abs() < 1e-12, "H drifted to {h} at t={t}");
        }
    }

    #[test]
    fn catalog_lookup() {
        assert_eq!(
            AnalyticSystem::from_name("pendulum").unwrap(),
            AnalyticSystem::Pendulum
        );
        let err = AnalyticSystem::from_name("kepler").unwrap_err();
        assert!(err.known.contains("spring"));
        assert_eq!(catalog().len(), 6);
    }
}
