//! Importance sampling of a Dirichlet-distributed matrix reweighted by a
//! non-conjugate log-message.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::dist::{Dirichlet, TransitionMatrix};
use crate::error::{shape_err, Error, Result};

/// Log-message over a column-stochastic matrix of the form
/// `Σⱼ Σₓ A[x,j]·linear[x,j] − Σⱼ entropy_weight[j]·h(A)[j]`.
///
/// Sums of `z̄ᵀξ(A)` messages from several goal-observation nodes stay in
/// this family.
#[derive(Clone, Debug, PartialEq)]
pub struct LogMessage {
    pub linear: Array2<f64>,
    pub entropy_weight: Array1<f64>,
}

impl LogMessage {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self {
            linear: Array2::zeros((rows, cols)),
            entropy_weight: Array1::zeros(cols),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.linear.dim()
    }

    pub fn accumulate(&mut self, other: &LogMessage) -> Result<()> {
        if other.shape() != self.shape() {
            return Err(shape_err(
                "log-message sum",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        self.linear += &other.linear;
        self.entropy_weight += &other.entropy_weight;
        Ok(())
    }

    /// Evaluates the log-message at a column-stochastic matrix.
    pub fn eval(&self, a: &Array2<f64>) -> f64 {
        let log_a = a.mapv(|x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY });
        self.eval_with_log(a, &log_a)
    }

    /// Evaluation given both A and ln A (samples are kept in log space).
    pub fn eval_with_log(&self, a: &Array2<f64>, log_a: &Array2<f64>) -> f64 {
        let mut acc = 0.0;
        for j in 0..a.ncols() {
            let s = self.entropy_weight[j];
            let mut lin = 0.0;
            let mut neg_h = 0.0;
            for x in 0..a.nrows() {
                let p = a[[x, j]];
                lin += p * self.linear[[x, j]];
                if p > 0.0 {
                    neg_h += p * log_a[[x, j]];
                }
            }
            acc += lin + s * neg_h;
        }
        acc
    }
}

/// Weighted-sample estimate of a reweighted Dirichlet belief q(A).
#[derive(Clone, Debug)]
pub struct ImportanceEstimate {
    /// Ā = Σ wᵢ A⁽ⁱ⁾
    pub a_bar: TransitionMatrix,
    /// Σ wᵢ h(A⁽ⁱ⁾)
    pub h_bar: Array1<f64>,
    /// Σ wᵢ ln A⁽ⁱ⁾
    pub mean_log: Array2<f64>,
    /// 1 / Σ wᵢ²
    pub ess: f64,
    pub n_samples: usize,
    /// ln of the mean unnormalised weight, an estimate of ln E_proposal[exp L].
    pub log_evidence: f64,
    /// Estimate of E_q[ln q(A)].
    pub neg_entropy: f64,
    /// Set when every weight was non-finite and uniform weights were used.
    pub fallback: bool,
}

/// Draws ln A for A ~ Dir(α) column-wise, using Gamma variates in log space so
/// that small concentrations do not underflow.
pub fn sample_dirichlet_log<R: Rng + ?Sized>(
    gammas: &[Gamma<f64>],
    alpha: &Array2<f64>,
    rng: &mut R,
) -> Array2<f64> {
    let (rows, cols) = alpha.dim();
    let mut out = Array2::zeros((rows, cols));
    let mut la = vec![0.0; rows];
    let mut a = vec![0.0; rows];
    for j in 0..cols {
        let col: Vec<f64> = alpha.column(j).to_vec();
        draw_column(
            &gammas[j * rows..(j + 1) * rows],
            &col,
            rng,
            &mut la,
            &mut a,
        );
        for (i, &l) in la.iter().enumerate() {
            out[[i, j]] = l;
        }
    }
    out
}

/// One Dirichlet column into `la` (ln A) and `a` (A).
fn draw_column<R: Rng + ?Sized>(
    gammas: &[Gamma<f64>],
    alpha: &[f64],
    rng: &mut R,
    la: &mut [f64],
    a: &mut [f64],
) {
    let mut max = f64::NEG_INFINITY;
    for ((g, &al), out) in gammas.iter().zip(alpha).zip(la.iter_mut()) {
        let x = g.sample(rng);
        let lg = if al < 1.0 {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            x.ln() + u.ln() / al
        } else {
            x.max(f64::MIN_POSITIVE).ln()
        };
        *out = lg;
        max = max.max(lg);
    }
    let mut sum = 0.0;
    for (l, p) in la.iter().zip(a.iter_mut()) {
        *p = (l - max).exp();
        sum += *p;
    }
    let lse = max + sum.ln();
    for (l, p) in la.iter_mut().zip(a.iter_mut()) {
        *l -= lse;
        *p /= sum;
    }
}

fn gamma_table(alpha: &Array2<f64>) -> Result<Vec<Gamma<f64>>> {
    let (rows, cols) = alpha.dim();
    let mut v = Vec::with_capacity(rows * cols);
    for j in 0..cols {
        for i in 0..rows {
            let a = alpha[[i, j]];
            let shape = if a < 1.0 { a + 1.0 } else { a };
            v.push(Gamma::new(shape, 1.0).map_err(|e| Error::InvalidDistribution(e.to_string()))?);
        }
    }
    Ok(v)
}

/// Samples from `proposal`, weights by `exp(log_msg)`, and returns weighted
/// expectations of A, h(A) and ln A.
///
/// The message is a sum of per-column terms and the proposal has independent
/// columns, so the reweighted belief factorises over columns. Each column with
/// a non-zero message term is estimated from its own `n` draws; columns the
/// message does not touch keep their exact Dirichlet expectations.
pub fn importance_expectations<R: Rng + ?Sized>(
    proposal: &Dirichlet,
    log_msg: &LogMessage,
    n: usize,
    rng: &mut R,
) -> Result<ImportanceEstimate> {
    if n == 0 {
        return Err(Error::Config(
            "importance sampling needs at least one sample".into(),
        ));
    }
    let alpha = proposal.alpha();
    if log_msg.shape() != alpha.dim() {
        return Err(shape_err(
            "importance sampling",
            format!("{:?}", alpha.dim()),
            format!("{:?}", log_msg.shape()),
        ));
    }
    let (rows, cols) = alpha.dim();
    let exact_mean = proposal.mean().into_array();
    let exact_log = proposal.mean_log();
    let exact_h = proposal.expected_column_entropies();

    let mut a_bar = Array2::zeros((rows, cols));
    let mut mean_log = Array2::zeros((rows, cols));
    let mut h_bar = Array1::zeros(cols);
    let mut log_evidence = 0.0;
    let mut neg_entropy = 0.0;
    let mut ess = n as f64;
    let mut fallback = false;
    for j in 0..cols {
        let col_alpha = alpha.column(j).to_owned().insert_axis(Axis(1));
        let col_dir = Dirichlet::new(col_alpha.clone())?;
        let touched =
            log_msg.entropy_weight[j] != 0.0 || log_msg.linear.column(j).iter().any(|&x| x != 0.0);
        if !touched {
            a_bar.column_mut(j).assign(&exact_mean.column(j));
            mean_log.column_mut(j).assign(&exact_log.column(j));
            h_bar[j] = exact_h[j];
            neg_entropy -= col_dir.entropy();
            continue;
        }
        let col_msg = LogMessage {
            linear: log_msg.linear.column(j).to_owned().insert_axis(Axis(1)),
            entropy_weight: Array1::from_elem(1, log_msg.entropy_weight[j]),
        };
        let est = sample_column(&col_dir, &col_msg, n, rng)?;
        a_bar.column_mut(j).assign(&est.a_bar);
        mean_log.column_mut(j).assign(&est.mean_log);
        h_bar[j] = est.h_bar;
        log_evidence += est.log_evidence;
        neg_entropy += est.neg_entropy;
        ess = ess.min(est.ess);
        fallback |= est.fallback;
    }
    Ok(ImportanceEstimate {
        a_bar: TransitionMatrix::from_unnormalised(a_bar)?,
        h_bar,
        mean_log,
        ess,
        n_samples: n,
        log_evidence,
        neg_entropy,
        fallback,
    })
}

struct ColumnEstimate {
    a_bar: Array1<f64>,
    mean_log: Array1<f64>,
    h_bar: f64,
    log_evidence: f64,
    neg_entropy: f64,
    ess: f64,
    fallback: bool,
}

/// Self-normalised importance sampling of one Dirichlet column.
fn sample_column<R: Rng + ?Sized>(
    proposal: &Dirichlet,
    log_msg: &LogMessage,
    n: usize,
    rng: &mut R,
) -> Result<ColumnEstimate> {
    let alpha: Vec<f64> = proposal.alpha().column(0).to_vec();
    let rows = alpha.len();
    let gammas = gamma_table(proposal.alpha())?;
    let linear: Vec<f64> = log_msg.linear.column(0).to_vec();
    let s = log_msg.entropy_weight[0];
    // per sample: ln A, A, -h(A)
    let mut log_samples = vec![0.0; n * rows];
    let mut samples = vec![0.0; n * rows];
    let mut neg_h = vec![0.0; n];
    let mut log_w = vec![0.0; n];
    for i in 0..n {
        let la = &mut log_samples[i * rows..(i + 1) * rows];
        let a = &mut samples[i * rows..(i + 1) * rows];
        draw_column(&gammas, &alpha, rng, la, a);
        let mut lin = 0.0;
        let mut nh = 0.0;
        for x in 0..rows {
            lin += a[x] * linear[x];
            if a[x] > 0.0 {
                nh += a[x] * la[x];
            }
        }
        neg_h[i] = nh;
        log_w[i] = lin + s * nh;
    }

    let max = log_w
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let fallback = !max.is_finite();
    let raw: Vec<f64> = if fallback {
        vec![1.0; n]
    } else {
        log_w
            .iter()
            .map(|&l| if l.is_finite() { (l - max).exp() } else { 0.0 })
            .collect()
    };
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let log_evidence = if fallback {
        0.0
    } else {
        max + (total / n as f64).ln()
    };

    let ln_norm = proposal.ln_normaliser();
    let mut a_bar = Array1::zeros(rows);
    let mut mean_log = Array1::zeros(rows);
    let mut h_bar = 0.0;
    let mut e_log_q = 0.0;
    for (i, (&w, &lw)) in weights.iter().zip(&log_w).enumerate() {
        if w == 0.0 {
            continue;
        }
        let la = &log_samples[i * rows..(i + 1) * rows];
        let a = &samples[i * rows..(i + 1) * rows];
        let mut kernel = 0.0;
        for x in 0..rows {
            a_bar[x] += w * a[x];
            mean_log[x] += w * la[x];
            kernel += (alpha[x] - 1.0) * la[x];
        }
        h_bar -= w * neg_h[i];
        let l = if fallback { 0.0 } else { lw };
        e_log_q += w * (kernel - ln_norm + l);
    }
    Ok(ColumnEstimate {
        a_bar,
        mean_log,
        h_bar,
        log_evidence,
        neg_entropy: e_log_q - log_evidence,
        ess: 1.0 / weights.iter().map(|w| w * w).sum::<f64>(),
        fallback,
    })
}
