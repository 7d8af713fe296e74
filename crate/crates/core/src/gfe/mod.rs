//! The goal-observation composite node.
//!
//! An observation model Cat(x | A z) faces a goal prior Cat(x | c) on a shared
//! observation edge x. Under p-substitution the node exchanges three messages
//! with the rest of the graph:
//!
//! - towards the goal statistic c: Dir(c | Ā z̄ + 1),
//! - towards the state z: Cat(z | σ(ρ)) directly, or the Newton-stabilised
//!   indirect form Cat(z | σ(ln z̄* − ln d)),
//! - towards the observation matrix A: the log-function z̄ᵀ ξ(A), which is not
//!   of a standard family and is handled by importance sampling.
//!
//! with
//!
//! ```text
//! ξ(A) = Aᵀ (E[ln c] − ln(Ā z̄)) − h(A)
//! ρ    = Āᵀ (E[ln c] − ln(Ā z̄)) − E[h(A)]
//! ```
//!
//! and local average energy U = −z̄ᵀ ρ.

pub mod importance;
mod newton;

use ndarray::{Array1, Array2};

use crate::dist::{
    safe_ln, softmax, Categorical, Dirichlet, ProbVector, TransitionMatrix, LOG_FLOOR,
};
use crate::error::{shape_err, Error, Result};
use crate::graph::ParamBelief;

pub use importance::{importance_expectations, ImportanceEstimate, LogMessage};
pub use newton::{fixed_point_residual, message_to_state_newton, NewtonConfig, NewtonOutcome};

/// Sufficient statistics of q(A) and q(c) consumed by the node's updates.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationStats {
    /// Ā
    pub a_bar: Array2<f64>,
    /// E[h(A)]
    pub h_bar: Array1<f64>,
    /// E[ln c], floored at [`LOG_FLOOR`]
    pub log_c: Array1<f64>,
}

impl ObservationStats {
    pub fn new(a_bar: Array2<f64>, h_bar: Array1<f64>, log_c: Array1<f64>) -> Result<Self> {
        let (nx, nz) = a_bar.dim();
        if h_bar.len() != nz {
            return Err(shape_err("E[h(A)]", nz, h_bar.len()));
        }
        if log_c.len() != nx {
            return Err(shape_err("E[ln c]", nx, log_c.len()));
        }
        Ok(Self {
            a_bar,
            h_bar,
            log_c: log_c.mapv(|x| {
                if x.is_nan() {
                    LOG_FLOOR
                } else {
                    x.max(LOG_FLOOR)
                }
            }),
        })
    }

    pub fn from_beliefs(a: &ParamBelief, c: &ParamBelief) -> Result<Self> {
        let log_c = c.mean_log().column(0).to_owned();
        Self::new(a.mean(), a.mean_column_entropies(), log_c)
    }

    pub fn states(&self) -> usize {
        self.a_bar.ncols()
    }

    pub fn outcomes(&self) -> usize {
        self.a_bar.nrows()
    }

    /// E[ln c] − ln(Ā z̄), the offset shared by ρ and ξ.
    fn offset(&self, z_bar: &Array1<f64>) -> Array1<f64> {
        let pred = self.a_bar.dot(z_bar);
        &self.log_c - &pred.mapv(safe_ln)
    }
}

/// q(x) = Cat(x | Ā z̄) under the tentative-decision approximation.
pub fn q_x_update(a_bar: &TransitionMatrix, z_bar: &ProbVector) -> Result<Categorical> {
    Ok(Categorical::new(a_bar.predict(z_bar)?))
}

/// ρ = Āᵀ(E[ln c] − ln(Ā z̄)) − E[h(A)].
pub fn rho(stats: &ObservationStats, z_bar: &Array1<f64>) -> Result<Array1<f64>> {
    if z_bar.len() != stats.states() {
        return Err(shape_err("rho", stats.states(), z_bar.len()));
    }
    let off = stats.offset(z_bar);
    Ok(stats.a_bar.t().dot(&off) - &stats.h_bar)
}

/// ρ together with the ξ handle for the same z̄.
#[derive(Clone, Debug)]
pub struct RhoXi {
    pub rho: Array1<f64>,
    pub xi: Xi,
}

impl RhoXi {
    pub fn new(stats: &ObservationStats, z_bar: &Array1<f64>) -> Result<Self> {
        Ok(Self {
            rho: rho(stats, z_bar)?,
            xi: Xi {
                offset: stats.offset(z_bar),
            },
        })
    }
}

/// ξ(A) = Aᵀ·offset − h(A) with offset = E[ln c] − ln(Ā z̄) frozen at the current Ā, z̄.
#[derive(Clone, Debug, PartialEq)]
pub struct Xi {
    pub offset: Array1<f64>,
}

impl Xi {
    pub fn eval(&self, a: &TransitionMatrix) -> Array1<f64> {
        a.as_array().t().dot(&self.offset) - crate::dist::column_entropies(a)
    }
}

/// Message ① towards a Dirichlet goal statistic: Dir(c | Ā z̄ + 1).
pub fn message_to_goal(a_bar: &Array2<f64>, z_bar: &Array1<f64>) -> Result<Dirichlet> {
    if a_bar.ncols() != z_bar.len() {
        return Err(shape_err("message to goal", a_bar.ncols(), z_bar.len()));
    }
    Dirichlet::vector(a_bar.dot(z_bar) + 1.0)
}

/// Direct form of message ②: Cat(z | σ(ρ)).
pub fn message_to_state_direct(rho: &Array1<f64>) -> Result<Categorical> {
    Ok(Categorical::new(softmax(rho)?))
}

/// Message ③ as a log-function: ln μ(A) = z̄ᵀ ξ(A).
pub fn log_message_to_matrix(stats: &ObservationStats, z_bar: &Array1<f64>) -> Result<LogMessage> {
    if z_bar.len() != stats.states() {
        return Err(shape_err("log message to A", stats.states(), z_bar.len()));
    }
    let off = stats.offset(z_bar);
    let (nx, nz) = stats.a_bar.dim();
    let mut linear = Array2::zeros((nx, nz));
    for j in 0..nz {
        for x in 0..nx {
            linear[[x, j]] = off[x] * z_bar[j];
        }
    }
    Ok(LogMessage {
        linear,
        entropy_weight: z_bar.clone(),
    })
}

/// U = −z̄ᵀρ.
pub fn average_energy(rho: &Array1<f64>, z_bar: &Array1<f64>) -> f64 {
    -rho.iter()
        .zip(z_bar.iter())
        .map(|(&r, &z)| if z > 0.0 { r * z } else { 0.0 })
        .sum::<f64>()
}

/// Stationary block belief q*(z) ∝ f̃(z) Π μᵢ(z).
pub fn stationary_q_z(messages: &[Array1<f64>], f_tilde: &Array1<f64>) -> Result<Categorical> {
    let mut q = f_tilde.clone();
    for m in messages {
        if m.len() != q.len() {
            return Err(shape_err("stationary q(z)", q.len(), m.len()));
        }
        q *= m;
    }
    if q.sum() <= 0.0 {
        return Err(Error::ZeroNormaliser {
            context: "stationary q(z)".into(),
        });
    }
    Ok(Categorical::new(ProbVector::normalised(q)?))
}

/// Family of the goal model attached to the c edge.
#[derive(Clone, Debug)]
pub enum GoalModel {
    /// c is fixed; it receives no message.
    PointMass,
    /// Dirichlet hyper-prior on c.
    Dirichlet,
    /// c is a deterministic function of another clamped variable, e.g. an offer.
    Deterministic(ProbVector),
    /// Any other family; not supported by the discrete node.
    Other(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum GoalMessage {
    /// The goal edge is clamped and needs no message.
    None,
    Dirichlet(Dirichlet),
    /// A point mass propagated from a deterministic goal model.
    PointMass(ProbVector),
}

/// Fixed-point message towards the goal-model states, specialised to the
/// families used by the discrete node.
pub fn message_to_goal_states(
    model: &GoalModel,
    a_bar: &Array2<f64>,
    z_bar: &Array1<f64>,
) -> Result<GoalMessage> {
    match model {
        GoalModel::PointMass => Ok(GoalMessage::None),
        GoalModel::Dirichlet => Ok(GoalMessage::Dirichlet(message_to_goal(a_bar, z_bar)?)),
        GoalModel::Deterministic(c) => Ok(GoalMessage::PointMass(c.clone())),
        GoalModel::Other(name) => Err(Error::Model(format!(
            "unsupported goal-model family '{name}'"
        ))),
    }
}

/// Node state tracked across sweeps: the auxiliary q(x), incoming d and the
/// current statistic z̄.
#[derive(Clone, Debug)]
pub struct GfeNodeState {
    pub q_x: Categorical,
    pub incoming: ProbVector,
    pub z_bar: ProbVector,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn stats_identity(log_c: Array1<f64>) -> ObservationStats {
        let n = log_c.len();
        ObservationStats::new(Array2::eye(n), Array1::zeros(n), log_c).unwrap()
    }

    #[test]
    fn q_x_cases() {
        let i = TransitionMatrix::identity(3);
        let e2 = ProbVector::new(array![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(q_x_update(&i, &e2).unwrap().probs(), &array![0.0, 1.0, 0.0]);
        let u = ProbVector::uniform(3);
        assert_eq!(q_x_update(&i, &u).unwrap().probs(), u.as_array());
    }

    #[test]
    fn rho_vanishes_for_identity_and_uniform() {
        let s = stats_identity(Array1::from_elem(4, 0.25f64.ln()));
        let r = rho(&s, &Array1::from_elem(4, 0.25)).unwrap();
        assert!(r.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn rho_with_identity_reduces_to_log_ratio() {
        let c = softmax(&array![2.0, -2.0]).unwrap();
        let s = stats_identity(c.ln_floored());
        let z = array![0.5, 0.5];
        let r = rho(&s, &z).unwrap();
        for i in 0..2 {
            assert!((r[i] - (c.get(i).ln() - 0.5f64.ln())).abs() < 1e-14);
        }
        // direct message is the softmax of ρ, which equals c here
        let m = message_to_state_direct(&r).unwrap();
        for i in 0..2 {
            assert!((m.probs()[i] - c.get(i)).abs() < 1e-14);
        }
    }

    #[test]
    fn goal_message_adds_one() {
        let a = Array2::eye(4);
        let m = message_to_goal(&a, &array![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(m.alpha().column(0).to_owned(), array![1.0, 1.0, 2.0, 1.0]);
        let m = message_to_goal(&a, &Array1::from_elem(4, 0.25)).unwrap();
        assert!(m.alpha().iter().all(|&x| x == 1.25));
    }

    #[test]
    fn direct_message_limits() {
        let m = message_to_state_direct(&Array1::zeros(3)).unwrap();
        assert!(m.probs().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        let m = message_to_state_direct(&array![50.0, -50.0, -50.0]).unwrap();
        assert!(m.probs()[0] > 1.0 - 1e-15);
        assert!(m.probs()[1] < 1e-40);
    }

    #[test]
    fn xi_at_deterministic_matrix() {
        let log_c = array![0.7f64.ln(), 0.3f64.ln()];
        let s = ObservationStats::new(Array2::eye(2), Array1::zeros(2), log_c.clone()).unwrap();
        let z = array![1.0, 0.0];
        let rx = RhoXi::new(&s, &z).unwrap();
        let a = TransitionMatrix::identity(2);
        let xi = rx.xi.eval(&a);
        // direct formula: ln c_mode − ln (Ā z̄)_mode
        assert!((xi[0] - (0.7f64.ln() - 0.0)).abs() < 1e-14);
        // the log-message is z̄ᵀξ
        let lm = log_message_to_matrix(&s, &z).unwrap();
        assert!((lm.eval(a.as_array()) - xi.dot(&z)).abs() < 1e-14);
    }

    #[test]
    fn xi_shift_by_constant() {
        let a_bar = array![[0.6, 0.2], [0.4, 0.8]];
        let s1 =
            ObservationStats::new(a_bar.clone(), array![0.1, 0.2], array![-1.0, -2.0]).unwrap();
        let s2 =
            ObservationStats::new(a_bar, array![0.1, 0.2], array![-1.0 + 3.0, -2.0 + 3.0]).unwrap();
        let z = array![0.3, 0.7];
        let a = TransitionMatrix::new(array![[0.9, 0.5], [0.1, 0.5]]).unwrap();
        let x1 = RhoXi::new(&s1, &z).unwrap().xi.eval(&a);
        let x2 = RhoXi::new(&s2, &z).unwrap().xi.eval(&a);
        for j in 0..2 {
            assert!((x2[j] - x1[j] - 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn average_energy_cases() {
        assert_eq!(
            average_energy(&Array1::zeros(3), &array![0.2, 0.3, 0.5]),
            0.0
        );
        assert_eq!(
            average_energy(&array![1.0, -2.0, 4.0], &array![0.0, 1.0, 0.0]),
            2.0
        );
    }

    #[test]
    fn stationary_q_z_cases() {
        let q = stationary_q_z(&[array![0.2, 0.8], array![0.5, 0.5]], &array![1.0, 1.0]).unwrap();
        assert!((q.probs()[0] - 0.2).abs() < 1e-15);
        let q = stationary_q_z(&[Array1::from_elem(2, 0.5)], &array![3.0, 1.0]).unwrap();
        assert!((q.probs()[0] - 0.75).abs() < 1e-15);
        assert!(stationary_q_z(&[array![0.0, 1.0]], &array![1.0, 0.0]).is_err());
    }

    #[test]
    fn goal_state_messages() {
        let a = Array2::eye(2);
        let z = array![0.25, 0.75];
        assert_eq!(
            message_to_goal_states(&GoalModel::PointMass, &a, &z).unwrap(),
            GoalMessage::None
        );
        let GoalMessage::Dirichlet(d) =
            message_to_goal_states(&GoalModel::Dirichlet, &a, &z).unwrap()
        else {
            panic!("expected Dirichlet")
        };
        assert_eq!(d, message_to_goal(&a, &z).unwrap());
        let c = softmax(&array![0.0, 0.0]).unwrap();
        assert_eq!(
            message_to_goal_states(&GoalModel::Deterministic(c.clone()), &a, &z).unwrap(),
            GoalMessage::PointMass(c)
        );
        assert!(message_to_goal_states(&GoalModel::Other("gaussian".into()), &a, &z).is_err());
    }
}
