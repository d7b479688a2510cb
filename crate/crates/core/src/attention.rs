//! Attention scoring over sensor features and top-k context pruning.
//!
//! Each candidate sensor contributes one feature row (queue length, battery,
//! link gain). Rows are min-max normalized per column, projected into query,
//! key, and value spaces, mixed by row-softmax attention over raw dot-product
//! scores (no scale factor), and reduced to one scalar importance score per
//! sensor. The top-k sensors by score form the pruned context handed to the
//! decision prompt. Parameters can be refined online by gradient steps on a
//! cross-entropy surrogate that treats the hindsight-worst sensor of a step
//! as the one that should have scored highest.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use thiserror::Error;

/// Feature columns per sensor: queue length, battery, link gain.
pub const FEATURE_DIM: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum AttentionError {
    #[error("feature matrix must have at least one row")]
    EmptyMatrix,
    #[error("feature matrix must have {FEATURE_DIM} columns, got {got}")]
    BadFeatureDim { got: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("{what}: expected shape {expected_rows}x{expected_cols}, got {got_rows}x{got_cols}")]
    ShapeMismatch {
        what: &'static str,
        expected_rows: usize,
        expected_cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("matrix carries no normalization bounds to invert")]
    NotNormalized,
    #[error("top-k size {k} outside 1..={n}")]
    BadTopK { k: usize, n: usize },
    #[error("non-finite score at index {index}")]
    NonFiniteScore { index: usize },
    #[error("parameter entries must be finite")]
    NonFiniteParams,
    #[error("learning rate must be finite and non-negative, got {learning_rate}")]
    BadLearningRate { learning_rate: f64 },
    #[error("feedback batch is empty")]
    EmptyFeedback,
    #[error("feedback step {step}: {n_loss} per-sensor losses for {n_rows} feature rows")]
    FeedbackShape { step: usize, n_loss: usize, n_rows: usize },
    #[error("checkpoint line {line}: {reason}")]
    BadCheckpoint { line: usize, reason: String },
}

// ===== Feature matrices =====

/// An N x 3 matrix of per-sensor features. A matrix produced by
/// [`normalize_features`] additionally carries the per-column bounds used,
/// so the normalization can be inverted exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
    /// Per-column (min, max) recorded at normalization time.
    norm_bounds: Option<Vec<(f64, f64)>>,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self, AttentionError> {
        if values.nrows() == 0 {
            return Err(AttentionError::EmptyMatrix);
        }
        if values.ncols() != FEATURE_DIM {
            return Err(AttentionError::BadFeatureDim { got: values.ncols() });
        }
        for ((row, col), &v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(AttentionError::NonFinite { row, col });
            }
        }
        Ok(Self { values, norm_bounds: None })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_sensors(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_normalized(&self) -> bool {
        self.norm_bounds.is_some()
    }

    pub fn norm_bounds(&self) -> Option<&[(f64, f64)]> {
        self.norm_bounds.as_deref()
    }
}

/// Min-max normalizes every column into [0, 1] and records the bounds.
/// A constant column carries no ordering information and maps to 0.5.
pub fn normalize_features(x: &FeatureMatrix) -> FeatureMatrix {
    let mut out = x.values.clone();
    let mut bounds = Vec::with_capacity(out.ncols());
    for col in 0..out.ncols() {
        let column = x.values.column(col);
        let min = column.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        bounds.push((min, max));
        for row in 0..out.nrows() {
            out[[row, col]] = if max > min {
                (x.values[[row, col]] - min) / (max - min)
            } else {
                0.5
            };
        }
    }
    FeatureMatrix { values: out, norm_bounds: Some(bounds) }
}

/// Inverts [`normalize_features`] using the recorded bounds. A constant
/// column maps back to its recorded minimum (which equals its maximum).
pub fn denormalize_features(x: &FeatureMatrix) -> Result<FeatureMatrix, AttentionError> {
    let bounds = x.norm_bounds.as_ref().ok_or(AttentionError::NotNormalized)?;
    let mut out = x.values.clone();
    for col in 0..out.ncols() {
        let (min, max) = bounds[col];
        for row in 0..out.nrows() {
            out[[row, col]] = if max > min {
                x.values[[row, col]] * (max - min) + min
            } else {
                min
            };
        }
    }
    FeatureMatrix { values: out, norm_bounds: None }.into_checked()
}

impl FeatureMatrix {
    fn into_checked(self) -> Result<Self, AttentionError> {
        Self::new(self.values)
    }
}

// ===== Parameters =====

/// Learnable projection and scoring parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_s: Array1<f64>,
    pub b_s: f64,
}

impl AttentionParams {
    /// Draws every entry uniformly from [-0.5, 0.5].
    pub fn init<R: Rng + ?Sized>(d: usize, d_prime: usize, rng: &mut R) -> Self {
        assert!(d >= 1 && d_prime >= 1, "projection dimensions must be positive");
        let mut draw = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-0.5..=0.5))
        };
        let w_q = draw(d, d_prime);
        let w_k = draw(d, d_prime);
        let w_v = draw(d, d_prime);
        let w_s = Array1::from_shape_fn(d_prime, |_| rng.gen_range(-0.5..=0.5));
        let b_s = rng.gen_range(-0.5..=0.5);
        Self { w_q, w_k, w_v, w_s, b_s }
    }

    pub fn d(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn d_prime(&self) -> usize {
        self.w_q.ncols()
    }

    pub fn validate(&self) -> Result<(), AttentionError> {
        let (d, dp) = (self.d(), self.d_prime());
        for (name, m) in [("w_k", &self.w_k), ("w_v", &self.w_v)] {
            if m.dim() != (d, dp) {
                return Err(AttentionError::ShapeMismatch {
                    what: name,
                    expected_rows: d,
                    expected_cols: dp,
                    got_rows: m.nrows(),
                    got_cols: m.ncols(),
                });
            }
        }
        if self.w_s.len() != dp {
            return Err(AttentionError::ShapeMismatch {
                what: "w_s",
                expected_rows: dp,
                expected_cols: 1,
                got_rows: self.w_s.len(),
                got_cols: 1,
            });
        }
        let all_finite = self.w_q.iter().all(|v| v.is_finite())
            && self.w_k.iter().all(|v| v.is_finite())
            && self.w_v.iter().all(|v| v.is_finite())
            && self.w_s.iter().all(|v| v.is_finite())
            && self.b_s.is_finite();
        if !all_finite {
            return Err(AttentionError::NonFiniteParams);
        }
        Ok(())
    }
}

// ===== Forward pipeline =====

/// Projects normalized features into query, key, and value spaces.
pub fn qkv_project(
    x: &FeatureMatrix,
    params: &AttentionParams,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>), AttentionError> {
    params.validate()?;
    if x.values.ncols() != params.d() {
        return Err(AttentionError::ShapeMismatch {
            what: "features vs projection",
            expected_rows: x.values.nrows(),
            expected_cols: params.d(),
            got_rows: x.values.nrows(),
            got_cols: x.values.ncols(),
        });
    }
    Ok((
        x.values.dot(&params.w_q),
        x.values.dot(&params.w_k),
        x.values.dot(&params.w_v),
    ))
}

/// Row-softmax of the raw dot-product score matrix Q K^T. Scores are used
/// as-is, with no dimension-dependent scale factor. Each output row is a
/// probability distribution over the N sensors.
pub fn attention_weights(q: &Array2<f64>, k: &Array2<f64>) -> Result<Array2<f64>, AttentionError> {
    if q.ncols() != k.ncols() {
        return Err(AttentionError::ShapeMismatch {
            what: "query vs key width",
            expected_rows: q.nrows(),
            expected_cols: q.ncols(),
            got_rows: k.nrows(),
            got_cols: k.ncols(),
        });
    }
    let scores = q.dot(&k.t());
    Ok(softmax_rows(&scores))
}

/// Numerically stable row softmax: the row maximum is subtracted before
/// exponentiation.
fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mixes value rows by the attention weights: Z = alpha V.
pub fn context_vectors(alpha: &Array2<f64>, v: &Array2<f64>) -> Result<Array2<f64>, AttentionError> {
    if alpha.ncols() != v.nrows() {
        return Err(AttentionError::ShapeMismatch {
            what: "attention weights vs values",
            expected_rows: alpha.nrows(),
            expected_cols: alpha.ncols(),
            got_rows: v.nrows(),
            got_cols: v.ncols(),
        });
    }
    Ok(alpha.dot(v))
}

/// Reduces each context row to one scalar: s_i = w_s . z_i + b_s.
pub fn importance_scores(z: &Array2<f64>, params: &AttentionParams) -> Result<Array1<f64>, AttentionError> {
    if z.ncols() != params.d_prime() {
        return Err(AttentionError::ShapeMismatch {
            what: "context vs scoring weights",
            expected_rows: z.nrows(),
            expected_cols: params.d_prime(),
            got_rows: z.nrows(),
            got_cols: z.ncols(),
        });
    }
    Ok(z.dot(&params.w_s) + params.b_s)
}

/// Full scoring pipeline on raw features: normalize, project, attend, score.
pub fn score_sensors(x_raw: &FeatureMatrix, params: &AttentionParams) -> Result<Array1<f64>, AttentionError> {
    let xn = normalize_features(x_raw);
    let (q, k, v) = qkv_project(&xn, params)?;
    let alpha = attention_weights(&q, &k)?;
    let z = context_vectors(&alpha, &v)?;
    importance_scores(&z, params)
}

/// Indices of the k highest scores, in descending score order. Ties break
/// toward the lower index so selection is deterministic.
pub fn top_k_select(scores: &[f64], k: usize) -> Result<Vec<usize>, AttentionError> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(AttentionError::BadTopK { k, n });
    }
    if let Some(index) = scores.iter().position(|v| !v.is_finite()) {
        return Err(AttentionError::NonFiniteScore { index });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .expect("scores checked finite")
            .then(i.cmp(&j))
    });
    order.truncate(k);
    Ok(order)
}

// ===== Online refinement =====

/// One step of collected evidence for parameter refinement: the raw
/// features each UAV saw, which rows it selected, and the packets each
/// sensor lost that step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFeedback {
    pub features: FeatureMatrix,
    /// Feature rows selected into the pruned context (for analysis only;
    /// the surrogate loss does not depend on them).
    pub selected: Vec<usize>,
    /// Realized packets lost per feature row.
    pub per_sensor_loss: Vec<f64>,
}

/// Summary of one [`update_params`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateReport {
    /// Steps that contributed gradient signal.
    pub used_steps: usize,
    /// Steps skipped because no sensor lost anything.
    pub skipped_steps: usize,
    /// Mean surrogate cross-entropy over the used steps (0 when none).
    pub surrogate_loss: f64,
    /// True when a non-finite gradient forced the update to be dropped.
    pub degenerate_gradient: bool,
}

struct Gradients {
    w_q: Array2<f64>,
    w_k: Array2<f64>,
    w_v: Array2<f64>,
    w_s: Array1<f64>,
    b_s: f64,
}

impl Gradients {
    fn zeros(d: usize, dp: usize) -> Self {
        Self {
            w_q: Array2::zeros((d, dp)),
            w_k: Array2::zeros((d, dp)),
            w_v: Array2::zeros((d, dp)),
            w_s: Array1::zeros(dp),
            b_s: 0.0,
        }
    }

    fn all_finite(&self) -> bool {
        self.w_q.iter().all(|v| v.is_finite())
            && self.w_k.iter().all(|v| v.is_finite())
            && self.w_v.iter().all(|v| v.is_finite())
            && self.w_s.iter().all(|v| v.is_finite())
            && self.b_s.is_finite()
    }

    fn scale(&mut self, c: f64) {
        self.w_q *= c;
        self.w_k *= c;
        self.w_v *= c;
        self.w_s *= c;
        self.b_s *= c;
    }
}

/// Takes one averaged gradient step on the surrogate objective: softmax
/// over importance scores, cross-entropy against the hindsight-worst
/// sensor of each step (the row with the highest realized loss, ties to
/// the lowest row). Steps where nothing was lost carry no signal and are
/// skipped. The input parameters are never mutated; a fresh set is
/// returned together with a report. A non-finite gradient returns the
/// parameters unchanged with the report flagged.
pub fn update_params(
    params: &AttentionParams,
    feedback: &[StepFeedback],
    learning_rate: f64,
) -> Result<(AttentionParams, UpdateReport), AttentionError> {
    params.validate()?;
    if !learning_rate.is_finite() || learning_rate < 0.0 {
        return Err(AttentionError::BadLearningRate { learning_rate });
    }
    if feedback.is_empty() {
        return Err(AttentionError::EmptyFeedback);
    }

    let (d, dp) = (params.d(), params.d_prime());
    let mut grads = Gradients::zeros(d, dp);
    let mut used = 0usize;
    let mut skipped = 0usize;
    let mut loss_sum = 0.0;

    for (step, fb) in feedback.iter().enumerate() {
        let n = fb.features.n_sensors();
        if fb.per_sensor_loss.len() != n {
            return Err(AttentionError::FeedbackShape {
                step,
                n_loss: fb.per_sensor_loss.len(),
                n_rows: n,
            });
        }
        let Some(target) = hindsight_target(&fb.per_sensor_loss) else {
            skipped += 1;
            continue;
        };
        loss_sum += accumulate_step_gradients(params, &fb.features, target, &mut grads);
        used += 1;
    }

    let mut report = UpdateReport {
        used_steps: used,
        skipped_steps: skipped,
        surrogate_loss: 0.0,
        degenerate_gradient: false,
    };
    if used == 0 {
        return Ok((params.clone(), report));
    }
    grads.scale(1.0 / used as f64);
    report.surrogate_loss = loss_sum / used as f64;

    if !grads.all_finite() {
        report.degenerate_gradient = true;
        return Ok((params.clone(), report));
    }

    let next = AttentionParams {
        w_q: &params.w_q - &(grads.w_q * learning_rate),
        w_k: &params.w_k - &(grads.w_k * learning_rate),
        w_v: &params.w_v - &(grads.w_v * learning_rate),
        w_s: &params.w_s - &(grads.w_s * learning_rate),
        b_s: params.b_s - grads.b_s * learning_rate,
    };
    Ok((next, report))
}

/// Row with the highest realized loss; ties break to the lowest row.
/// Returns None when every loss is zero or below.
fn hindsight_target(per_sensor_loss: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &l) in per_sensor_loss.iter().enumerate() {
        match best {
            Some((_, bl)) if l <= bl => {}
            _ => best = Some((i, l)),
        }
    }
    match best {
        Some((i, l)) if l > 0.0 => Some(i),
        _ => None,
    }
}

/// Forward pass plus exact backward pass for one step; accumulates into
/// `grads` and returns the step's cross-entropy loss.
fn accumulate_step_gradients(
    params: &AttentionParams,
    features: &FeatureMatrix,
    target: usize,
    grads: &mut Gradients,
) -> f64 {
    let xn = normalize_features(features);
    let x = xn.values();
    let q = x.dot(&params.w_q);
    let k = x.dot(&params.w_k);
    let v = x.dot(&params.w_v);
    let alpha = softmax_rows(&q.dot(&k.t()));
    let z = alpha.dot(&v);
    let s = z.dot(&params.w_s) + params.b_s;

    // Cross-entropy of softmax(s) against the hindsight target.
    let s_max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp_sum: f64 = s.iter().map(|&v| (v - s_max).exp()).sum();
    let log_sum = s_max + exp_sum.ln();
    let loss = log_sum - s[target];

    // d loss / d s = softmax(s) - onehot(target)
    let mut ds = s.mapv(|v| (v - log_sum).exp());
    ds[target] -= 1.0;

    grads.b_s += ds.sum();
    grads.w_s = &grads.w_s + &z.t().dot(&ds);

    // dZ = ds w_s^T (outer product), then back through Z = alpha V.
    let dz = ds
        .view()
        .insert_axis(Axis(1))
        .to_owned()
        .dot(&params.w_s.view().insert_axis(Axis(0)).to_owned());
    let dalpha = dz.dot(&v.t());
    let dv = alpha.t().dot(&dz);

    // Softmax backward per row: dS_i = alpha_i o (dalpha_i - dalpha_i . alpha_i).
    let mut dscores = Array2::<f64>::zeros(alpha.raw_dim());
    for i in 0..alpha.nrows() {
        let a = alpha.row(i);
        let da = dalpha.row(i);
        let dot: f64 = da.iter().zip(a.iter()).map(|(x, y)| x * y).sum();
        for j in 0..alpha.ncols() {
            dscores[[i, j]] = a[j] * (da[j] - dot);
        }
    }

    let dq = dscores.dot(&k);
    let dk = dscores.t().dot(&q);

    grads.w_q = &grads.w_q + &x.t().dot(&dq);
    grads.w_k = &grads.w_k + &x.t().dot(&dk);
    grads.w_v = &grads.w_v + &x.t().dot(&dv);
    loss
}

// ===== Checkpoints =====

const CHECKPOINT_HEADER: &str = "uavsim-attention-params v1";

impl AttentionParams {
    /// Serializes to a line-oriented text checkpoint. Floats are written in
    /// Rust's shortest round-trip form, so a reload is bit-exact.
    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::new();
        out.push_str(CHECKPOINT_HEADER);
        out.push('\n');
        out.push_str(&format!("d={} d_prime={}\n", self.d(), self.d_prime()));
        let join = |it: &mut dyn Iterator<Item = f64>| {
            it.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
        };
        out.push_str(&format!("w_q: {}\n", join(&mut self.w_q.iter().cloned())));
        out.push_str(&format!("w_k: {}\n", join(&mut self.w_k.iter().cloned())));
        out.push_str(&format!("w_v: {}\n", join(&mut self.w_v.iter().cloned())));
        out.push_str(&format!("w_s: {}\n", join(&mut self.w_s.iter().cloned())));
        out.push_str(&format!("b_s: {}\n", self.b_s));
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self, AttentionError> {
        let bad = |line: usize, reason: &str| AttentionError::BadCheckpoint {
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate();

        let (ln, header) = lines.next().ok_or_else(|| bad(1, "empty checkpoint"))?;
        if header.trim() != CHECKPOINT_HEADER {
            return Err(bad(ln + 1, "unrecognized header"));
        }

        let (ln, dims) = lines.next().ok_or_else(|| bad(2, "missing dimension line"))?;
        let mut d = None;
        let mut dp = None;
        for tok in dims.split_whitespace() {
            if let Some(v) = tok.strip_prefix("d=") {
                d = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("d_prime=") {
                dp = v.parse::<usize>().ok();
            }
        }
        let (d, dp) = match (d, dp) {
            (Some(d), Some(dp)) if d >= 1 && dp >= 1 => (d, dp),
            _ => return Err(bad(ln + 1, "malformed dimension line")),
        };

        let mut read_floats = |name: &str, expect: usize| -> Result<Vec<f64>, AttentionError> {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| bad(0, &format!("missing tensor line {name}")))?;
            let body = line
                .strip_prefix(name)
                .and_then(|r| r.strip_prefix(':'))
                .ok_or_else(|| bad(ln + 1, &format!("expected line starting with '{name}:'")))?;
            let vals: Result<Vec<f64>, _> = body.split_whitespace().map(str::parse::<f64>).collect();
            let vals = vals.map_err(|_| bad(ln + 1, "unparseable float"))?;
            if vals.len() != expect {
                return Err(bad(ln + 1, &format!("expected {expect} values, got {}", vals.len())));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(bad(ln + 1, "non-finite value"));
            }
            Ok(vals)
        };

        let w_q = read_floats("w_q", d * dp)?;
        let w_k = read_floats("w_k", d * dp)?;
        let w_v = read_floats("w_v", d * dp)?;
        let w_s = read_floats("w_s", dp)?;
        let b_s = read_floats("b_s", 1)?[0];

        let shape = |v: Vec<f64>| {
            Array2::from_shape_vec((d, dp), v).expect("length checked against d * d_prime")
        };
        let params = AttentionParams {
            w_q: shape(w_q),
            w_k: shape(w_k),
            w_v: shape(w_v),
            w_s: Array1::from_vec(w_s),
            b_s,
        };
        params.validate()?;
        Ok(params)
    }
}

// ===== Tests =====
