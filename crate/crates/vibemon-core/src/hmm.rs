//! Gaussian-emission hidden Markov model: forward log-likelihood, Viterbi
//! decoding, and Baum-Welch training over multiple sequences.
//!
//! Emissions are diagonal-covariance Gaussians, which resolves the continuous
//! PCA features against the classic discrete-symbol formulation. All
//! recursions run in scaled form with a per-step shift of the log emission
//! densities, so no raw probability product over the sequence length is ever
//! formed; likelihoods stay finite whenever variances respect the floor.

use crate::cluster::Clustering;
use crate::error::{Error, Result};
use crate::pca::FeatureSequence;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 200;

const LN_2PI: f64 = 1.8378770664093453;

/// Model parameters: `a` is row-stochastic S x S, `pi` sums to 1, and the
/// per-state Gaussians live in `means`/`vars` (S x d). `var_floor` is the
/// per-dimension lower bound every variance respects.
#[derive(Debug, Clone)]
pub struct HmmModel {
    pub a: Array2<f64>,
    pub pi: Array1<f64>,
    pub means: Array2<f64>,
    pub vars: Array2<f64>,
    pub var_floor: Array1<f64>,
}

/// Per-iteration log-likelihoods of a Baum-Welch run. The returned model
/// always corresponds to the last history entry.
#[derive(Debug, Clone)]
pub struct TrainingTrace {
    pub ll_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl HmmModel {
    pub fn new(
        a: Array2<f64>,
        pi: Array1<f64>,
        means: Array2<f64>,
        vars: Array2<f64>,
        var_floor: Array1<f64>,
    ) -> Result<Self> {
        let model = HmmModel {
            a,
            pi,
            means,
            vars,
            var_floor,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.pi.len();
        let d = self.means.ncols();
        if self.a.nrows() != s || self.a.ncols() != s {
            return Err(Error::dim(format!(
                "transition matrix is {}x{}, expected {s}x{s}",
                self.a.nrows(),
                self.a.ncols()
            )));
        }
        if self.means.nrows() != s || self.vars.nrows() != s || self.vars.ncols() != d {
            return Err(Error::dim(format!(
                "emission parameters must be {s}x{d}: means {}x{}, vars {}x{}",
                self.means.nrows(),
                self.means.ncols(),
                self.vars.nrows(),
                self.vars.ncols()
            )));
        }
        if self.var_floor.len() != d {
            return Err(Error::dim(format!(
                "variance floor has length {}, expected {d}",
                self.var_floor.len()
            )));
        }
        let tol = 1e-9;
        if self.pi.iter().any(|&p| !(0.0..=1.0 + tol).contains(&p)) {
            return Err(Error::numerical("pi entries outside [0, 1]"));
        }
        if (self.pi.sum() - 1.0).abs() > tol {
            return Err(Error::numerical(format!("pi sums to {}", self.pi.sum())));
        }
        for (i, row) in self.a.rows().into_iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0 + tol).contains(&p)) {
                return Err(Error::numerical(format!("row {i} of A outside [0, 1]")));
            }
            if (row.sum() - 1.0).abs() > tol {
                return Err(Error::numerical(format!("row {i} of A sums to {}", row.sum())));
            }
        }
        if self.var_floor.iter().any(|&f| !f.is_finite() || f <= 0.0) {
            return Err(Error::numerical("variance floor must be positive"));
        }
        for s_idx in 0..s {
            for j in 0..d {
                if self.vars[(s_idx, j)] < self.var_floor[j] {
                    return Err(Error::numerical(format!(
                        "variance[{s_idx},{j}] below floor"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// log N(o; mean_s, diag vars_s) for every (t, s).
fn log_emissions(model: &HmmModel, obs: &ArrayView2<f64>) -> Array2<f64> {
    let t_len = obs.nrows();
    let s_len = model.n_states();
    let d = model.dim();
    // per-state constant: -0.5 * sum_j ln(2 pi var_j)
    let consts: Vec<f64> = (0..s_len)
        .map(|s| {
            -0.5 * (0..d)
                .map(|j| LN_2PI + model.vars[(s, j)].ln())
                .sum::<f64>()
        })
        .collect();
    let mut logb = Array2::zeros((t_len, s_len));
    for t in 0..t_len {
        for s in 0..s_len {
            let mut quad = 0.0;
            for j in 0..d {
                let diff = obs[(t, j)] - model.means[(s, j)];
                quad += diff * diff / model.vars[(s, j)];
            }
            logb[(t, s)] = consts[s] - 0.5 * quad;
        }
    }
    logb
}

struct ForwardPass {
    /// scaled alpha, each row sums to 1
    alpha: Array2<f64>,
    /// per-step normalizers c_t
    scales: Vec<f64>,
    /// per-step emission shifts m_t = max_s log b_s(o_t)
    shifts: Vec<f64>,
    loglik: f64,
}

/// Scaled forward recursion. log P(O) accumulates as sum of ln c_t + m_t.
fn forward_pass(model: &HmmModel, logb: &Array2<f64>) -> Result<ForwardPass> {
    let t_len = logb.nrows();
    let s_len = logb.ncols();
    let mut alpha = Array2::zeros((t_len, s_len));
    let mut scales = Vec::with_capacity(t_len);
    let mut shifts = Vec::with_capacity(t_len);
    let mut loglik = 0.0;
    for t in 0..t_len {
        let shift = (0..s_len)
            .map(|s| logb[(t, s)])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut c = 0.0;
        for s in 0..s_len {
            let b = (logb[(t, s)] - shift).exp();
            let mass = if t == 0 {
                model.pi[s]
            } else {
                let mut acc = 0.0;
                for r in 0..s_len {
                    acc += alpha[(t - 1, r)] * model.a[(r, s)];
                }
                acc
            };
            let value = mass * b;
            alpha[(t, s)] = value;
            c += value;
        }
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::numerical(format!(
                "forward scaling collapsed at step {t} (c = {c})"
            )));
        }
        for s in 0..s_len {
            alpha[(t, s)] /= c;
        }
        loglik += c.ln() + shift;
        scales.push(c);
        shifts.push(shift);
    }
    Ok(ForwardPass {
        alpha,
        scales,
        shifts,
        loglik,
    })
}

/// Backward recursion under the same scales and shifts as the forward pass,
/// so alpha[t][s] * beta[t][s] is the state posterior without rescaling.
fn backward_pass(
    model: &HmmModel,
    logb: &Array2<f64>,
    scales: &[f64],
    shifts: &[f64],
) -> Array2<f64> {
    let t_len = logb.nrows();
    let s_len = logb.ncols();
    let mut beta = Array2::zeros((t_len, s_len));
    for s in 0..s_len {
        beta[(t_len - 1, s)] = 1.0;
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let mut acc = 0.0;
            for r in 0..s_len {
                let b_next = (logb[(t + 1, r)] - shifts[t + 1]).exp();
                acc += model.a[(s, r)] * b_next * beta[(t + 1, r)];
            }
            beta[(t, s)] = acc / scales[t + 1];
        }
    }
    beta
}

fn check_sequence(model: &HmmModel, seq: &FeatureSequence) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    if seq.dim() != model.dim() {
        return Err(Error::dim(format!(
            "sequence has dimension {}, model expects {}",
            seq.dim(),
            model.dim()
        )));
    }
    Ok(())
}

/// log P(O | model) of one sequence.
pub fn forward_loglik(model: &HmmModel, seq: &FeatureSequence) -> Result<f64> {
    check_sequence(model, seq)?;
    let logb = log_emissions(model, &seq.vectors.view());
    Ok(forward_pass(model, &logb)?.loglik)
}

/// Most probable state path. Ties resolve to the smallest state index, both
/// at the final argmax and at every predecessor choice, which makes the
/// decoded path the reverse-lexicographically smallest optimal path.
pub fn viterbi(model: &HmmModel, seq: &FeatureSequence) -> Result<Vec<usize>> {
    check_sequence(model, seq)?;
    let logb = log_emissions(model, &seq.vectors.view());
    let t_len = logb.nrows();
    let s_len = logb.ncols();
    let ln_a = model.a.mapv(f64::ln);
    let mut delta = Array2::zeros((t_len, s_len));
    let mut psi = Array2::<usize>::zeros((t_len, s_len));
    for s in 0..s_len {
        delta[(0, s)] = model.pi[s].ln() + logb[(0, s)];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut best_r = 0;
            let mut best = delta[(t - 1, 0)] + ln_a[(0, s)];
            for r in 1..s_len {
                let cand = delta[(t - 1, r)] + ln_a[(r, s)];
                if cand > best {
                    best = cand;
                    best_r = r;
                }
            }
            delta[(t, s)] = best + logb[(t, s)];
            psi[(t, s)] = best_r;
        }
    }
    let mut last = 0;
    for s in 1..s_len {
        if delta[(t_len - 1, s)] > delta[(t_len - 1, last)] {
            last = s;
        }
    }
    let mut path = vec![0usize; t_len];
    path[t_len - 1] = last;
    for t in (0..t_len - 1).rev() {
        path[t] = psi[(t + 1, path[t + 1])];
    }
    Ok(path)
}

/// Per-sequence expectation statistics summed during the E-step.
#[derive(Clone)]
struct SuffStats {
    gamma0: Array1<f64>,
    xi_sum: Array2<f64>,
    /// sum of gamma_t over t = 0..T-2 (transition denominators)
    gamma_trans: Array1<f64>,
    gamma_all: Array1<f64>,
    obs_sum: Array2<f64>,
    obs_sq_sum: Array2<f64>,
    loglik: f64,
}

impl SuffStats {
    fn zeros(s: usize, d: usize) -> Self {
        SuffStats {
            gamma0: Array1::zeros(s),
            xi_sum: Array2::zeros((s, s)),
            gamma_trans: Array1::zeros(s),
            gamma_all: Array1::zeros(s),
            obs_sum: Array2::zeros((s, d)),
            obs_sq_sum: Array2::zeros((s, d)),
            loglik: 0.0,
        }
    }

    fn add(&mut self, other: &SuffStats) {
        self.gamma0 += &other.gamma0;
        self.xi_sum += &other.xi_sum;
        self.gamma_trans += &other.gamma_trans;
        self.gamma_all += &other.gamma_all;
        self.obs_sum += &other.obs_sum;
        self.obs_sq_sum += &other.obs_sq_sum;
        self.loglik += other.loglik;
    }
}

fn e_step_sequence(model: &HmmModel, obs: &ArrayView2<f64>) -> Result<SuffStats> {
    let s_len = model.n_states();
    let d = model.dim();
    let t_len = obs.nrows();
    let logb = log_emissions(model, obs);
    let fwd = forward_pass(model, &logb)?;
    let beta = backward_pass(model, &logb, &fwd.scales, &fwd.shifts);

    let mut stats = SuffStats::zeros(s_len, d);
    stats.loglik = fwd.loglik;

    let mut gamma = Array1::zeros(s_len);
    for t in 0..t_len {
        let mut total = 0.0;
        for s in 0..s_len {
            let g = fwd.alpha[(t, s)] * beta[(t, s)];
            gamma[s] = g;
            total += g;
        }
        // algebraically total == 1; renormalize to absorb round-off
        for s in 0..s_len {
            let g = gamma[s] / total;
            stats.gamma_all[s] += g;
            if t == 0 {
                stats.gamma0[s] = g;
            }
            if t + 1 < t_len {
                stats.gamma_trans[s] += g;
            }
            for j in 0..d {
                let o = obs[(t, j)];
                stats.obs_sum[(s, j)] += g * o;
                stats.obs_sq_sum[(s, j)] += g * o * o;
            }
        }
    }

    let mut xi = Array2::zeros((s_len, s_len));
    for t in 0..t_len.saturating_sub(1) {
        let mut total = 0.0;
        for s in 0..s_len {
            for r in 0..s_len {
                let b_next = (logb[(t + 1, r)] - fwd.shifts[t + 1]).exp();
                let v = fwd.alpha[(t, s)] * model.a[(s, r)] * b_next * beta[(t + 1, r)]
                    / fwd.scales[t + 1];
                xi[(s, r)] = v;
                total += v;
            }
        }
        for s in 0..s_len {
            for r in 0..s_len {
                stats.xi_sum[(s, r)] += xi[(s, r)] / total;
            }
        }
    }
    Ok(stats)
}

fn m_step(model: &HmmModel, stats: &SuffStats, n_sequences: usize) -> HmmModel {
    let s_len = model.n_states();
    let d = model.dim();
    let mut pi = &stats.gamma0 / n_sequences as f64;
    let pi_sum = pi.sum();
    if pi_sum > 0.0 {
        pi /= pi_sum;
    } else {
        pi = model.pi.clone();
    }

    let mut a = Array2::zeros((s_len, s_len));
    for s in 0..s_len {
        let denom = stats.gamma_trans[s];
        if denom > 0.0 {
            let mut row_sum = 0.0;
            for r in 0..s_len {
                let v = stats.xi_sum[(s, r)] / denom;
                a[(s, r)] = v;
                row_sum += v;
            }
            if row_sum > 0.0 {
                for r in 0..s_len {
                    a[(s, r)] /= row_sum;
                }
            } else {
                for r in 0..s_len {
                    a[(s, r)] = model.a[(s, r)];
                }
            }
        } else {
            // state never occupied before the last step: keep its old row
            for r in 0..s_len {
                a[(s, r)] = model.a[(s, r)];
            }
        }
    }

    let mut means = model.means.clone();
    let mut vars = model.vars.clone();
    for s in 0..s_len {
        let weight = stats.gamma_all[s];
        if weight > 0.0 {
            for j in 0..d {
                let mean = stats.obs_sum[(s, j)] / weight;
                let second = stats.obs_sq_sum[(s, j)] / weight;
                means[(s, j)] = mean;
                vars[(s, j)] = (second - mean * mean).max(model.var_floor[j]);
            }
        }
    }

    HmmModel {
        a,
        pi,
        means,
        vars,
        var_floor: model.var_floor.clone(),
    }
}

/// Expectation-maximization over all sequences. Stops once the total
/// log-likelihood improves by less than `tol` relative or `max_iter`
/// likelihood evaluations have run. The returned model is the one whose
/// likelihood is the last `ll_history` entry.
pub fn baum_welch(
    model: &HmmModel,
    sequences: &[FeatureSequence],
    tol: f64,
    max_iter: usize,
) -> Result<(HmmModel, TrainingTrace)> {
    if sequences.is_empty() {
        return Err(Error::EmptySequence);
    }
    for seq in sequences {
        check_sequence(model, seq)?;
    }
    if max_iter == 0 {
        return Err(Error::numerical("baum_welch needs max_iter >= 1"));
    }
    let mut current = model.clone();
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    for iter in 0..max_iter {
        let per_seq: Vec<Result<SuffStats>> = sequences
            .par_iter()
            .map(|seq| e_step_sequence(&current, &seq.vectors.view()))
            .collect();
        let mut stats = SuffStats::zeros(current.n_states(), current.dim());
        for s in per_seq {
            stats.add(&s?);
        }
        let ll = stats.loglik;
        if let Some(&prev) = history.last() {
            debug_assert!(
                ll >= prev - 1e-8 * prev.abs().max(1.0),
                "EM likelihood decreased: {prev} -> {ll}"
            );
        }
        history.push(ll);
        if history.len() >= 2 {
            let prev = history[history.len() - 2];
            if (ll - prev).abs() < tol * ll.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        if iter + 1 < max_iter {
            current = m_step(&current, &stats, sequences.len());
        }
    }
    let iterations = history.len();
    Ok((
        current,
        TrainingTrace {
            ll_history: history,
            iterations,
            converged,
        },
    ))
}

/// Builds the starting model from a k-means solution over the pooled
/// training vectors. `seq_lens` gives the length of each training sequence
/// inside `x` (rows in order); transition counts never cross a boundary and
/// the initial distribution comes from the per-sequence first assignments.
/// Both sets of counts get Laplace +1 smoothing. The variance floor is
/// 1e-6 of the pooled per-dimension variance, at least 1e-12.
pub fn init_from_clusters(
    clustering: &Clustering,
    x: &ArrayView2<f64>,
    seq_lens: &[usize],
) -> Result<HmmModel> {
    let n = x.nrows();
    let d = x.ncols();
    let s_len = clustering.k;
    if clustering.assignments.len() != n {
        return Err(Error::dim(format!(
            "clustering covers {} vectors, data has {n}",
            clustering.assignments.len()
        )));
    }
    let total: usize = seq_lens.iter().sum();
    if seq_lens.is_empty() || total != n || seq_lens.contains(&0) {
        return Err(Error::dim(format!(
            "sequence lengths sum to {total}, data has {n} rows"
        )));
    }

    // pooled variance sets the floor
    let mut floor = Array1::zeros(d);
    for j in 0..d {
        let col = x.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        floor[j] = (1e-6 * var).max(1e-12);
    }

    let means = clustering.centroids.clone();
    let mut vars: Array2<f64> = Array2::zeros((s_len, d));
    let mut counts = vec![0usize; s_len];
    for (i, &s) in clustering.assignments.iter().enumerate() {
        counts[s] += 1;
        for j in 0..d {
            let diff = x[(i, j)] - means[(s, j)];
            vars[(s, j)] += diff * diff;
        }
    }
    for s in 0..s_len {
        for j in 0..d {
            let v = if counts[s] > 0 {
                vars[(s, j)] / counts[s] as f64
            } else {
                0.0
            };
            vars[(s, j)] = v.max(floor[j]);
        }
    }

    let mut a_counts = Array2::from_elem((s_len, s_len), 1.0);
    let mut pi_counts = Array1::from_elem(s_len, 1.0);
    let mut offset = 0;
    for &len in seq_lens {
        pi_counts[clustering.assignments[offset]] += 1.0;
        for i in offset..offset + len - 1 {
            a_counts[(clustering.assignments[i], clustering.assignments[i + 1])] += 1.0;
        }
        offset += len;
    }
    let mut a = a_counts;
    for mut row in a.rows_mut() {
        let sum = row.sum();
        row /= sum;
    }
    let pi = &pi_counts / pi_counts.sum();

    HmmModel::new(a, pi, means, vars, floor)
}

fn sample_categorical(probs: ArrayView1<f64>, rng: &mut impl Rng) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Draws a state path and observations from the model; the generator side of
/// the parameter-recovery and decoding tests.
pub fn sample_sequence(
    model: &HmmModel,
    len: usize,
    rng: &mut impl Rng,
) -> (Array2<f64>, Vec<usize>) {
    let d = model.dim();
    let mut obs = Array2::zeros((len, d));
    let mut states = Vec::with_capacity(len);
    let mut state = sample_categorical(model.pi.view(), rng);
    for t in 0..len {
        if t > 0 {
            state = sample_categorical(model.a.row(state), rng);
        }
        states.push(state);
        for j in 0..d {
            let z = crate::synth::standard_normal(rng);
            obs[(t, j)] = model.means[(state, j)] + model.vars[(state, j)].sqrt() * z;
        }
    }
    (obs, states)
}
