use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::encoder::SparseVector;
use crate::error::{Error, Result};
use crate::schema::{validate_labels, Finding, LabelValue, ReportLabels, NUM_FINDINGS};

/// Output rows of all heads together: 13 four-class heads and the
/// two-class NoFinding head.
pub const HEAD_ROWS: usize = 13 * 4 + 2;

/// First output row of each head.
pub fn head_offset(finding: Finding) -> usize {
    Finding::ALL[..finding.index()].iter().map(|f| f.num_classes()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Encoder feature dimension.
    pub input: usize,
    /// Width of the shared rectified layer.
    pub hidden: usize,
}

impl ModelDims {
    pub fn len(&self) -> usize {
        self.input * self.hidden + self.hidden + HEAD_ROWS * self.hidden + HEAD_ROWS
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn w_shared(&self) -> std::ops::Range<usize> {
        0..self.input * self.hidden
    }

    fn b_shared(&self) -> std::ops::Range<usize> {
        let start = self.input * self.hidden;
        start..start + self.hidden
    }

    fn w_heads(&self) -> std::ops::Range<usize> {
        let start = self.b_shared().end;
        start..start + HEAD_ROWS * self.hidden
    }

    fn b_heads(&self) -> std::ops::Range<usize> {
        let start = self.w_heads().end;
        start..start + HEAD_ROWS
    }
}

/// All weights in one flat buffer, laid out as
/// `[w_shared | b_shared | w_heads | b_heads]`.
///
/// `w_shared` is stored feature-major: row `j` holds the `hidden` weights
/// fed by feature `j`, so a sparse input touches contiguous rows.
/// `w_heads` is row-major over the 54 output rows in canonical finding
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: ModelDims,
    data: Vec<f64>,
}

/// Same layout as [`ModelParams`].
pub type Gradient = ModelParams;

/// Per-head class distributions for one report.
#[derive(Debug, Clone, PartialEq)]
pub struct Distributions {
    /// Concatenated head distributions, see [`head_offset`].
    pub probs: [f64; HEAD_ROWS],
}

impl Distributions {
    pub fn head(&self, finding: Finding) -> &[f64] {
        let start = head_offset(finding);
        &self.probs[start..start + finding.num_classes()]
    }

    /// Argmax per head; ties go to the lowest class index.
    pub fn labels(&self) -> ReportLabels {
        ReportLabels::from_fn(|f| {
            let head = self.head(f);
            let mut best = 0;
            for (c, &p) in head.iter().enumerate().skip(1) {
                if p > head[best] {
                    best = c;
                }
            }
            LabelValue::ALL[best]
        })
    }

    /// Probability that the finding is present: Positive plus Uncertain.
    pub fn presence(&self) -> [f64; NUM_FINDINGS] {
        std::array::from_fn(|i| {
            let head = self.head(Finding::ALL[i]);
            head[LabelValue::Positive.class_index()]
                + head.get(LabelValue::Uncertain.class_index()).copied().unwrap_or(0.0)
        })
    }
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
}

/// Hidden activations before and after the rectifier.
struct Hidden {
    pre: Vec<f64>,
    post: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> ModelParams {
        ModelParams {
            dims,
            data: vec![0.0; dims.len()],
        }
    }

    /// Shared weights ~ N(0, 1) so that a unit-norm input gives unit-variance
    /// pre-activations; head weights ~ N(0, 1/hidden); biases zero.
    pub fn init(dims: ModelDims, seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::zeros(dims);
        let shared = Normal::new(0.0, 1.0).expect("valid normal");
        for w in &mut params.data[dims.w_shared()] {
            *w = shared.sample(&mut rng);
        }
        let head = Normal::new(0.0, 1.0 / (dims.hidden as f64).sqrt()).expect("valid normal");
        for w in &mut params.data[dims.w_heads()] {
            *w = head.sample(&mut rng);
        }
        params
    }

    pub fn from_raw(dims: ModelDims, data: Vec<f64>) -> Result<ModelParams> {
        if data.len() != dims.len() {
            return Err(Error::Dimension {
                expected: dims.len(),
                actual: data.len(),
            });
        }
        Ok(ModelParams { dims, data })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn w_shared(&self) -> &[f64] {
        &self.data[self.dims.w_shared()]
    }

    pub fn b_shared(&self) -> &[f64] {
        &self.data[self.dims.b_shared()]
    }

    pub fn w_heads(&self) -> &[f64] {
        &self.data[self.dims.w_heads()]
    }

    pub fn b_heads(&self) -> &[f64] {
        &self.data[self.dims.b_heads()]
    }

    /// Weight row of one head output (class `class` of `finding`).
    pub fn head_row_mut(&mut self, finding: Finding, class: usize) -> &mut [f64] {
        let h = self.dims.hidden;
        let row = head_offset(finding) + class;
        let start = self.dims.w_heads().start + row * h;
        &mut self.data[start..start + h]
    }

    pub fn head_bias_mut(&mut self, finding: Finding) -> &mut [f64] {
        let start = self.dims.b_heads().start + head_offset(finding);
        &mut self.data[start..start + finding.num_classes()]
    }

    fn check_input(&self, x: &SparseVector) -> Result<()> {
        match x.max_index() {
            Some(j) if j >= self.dims.input => Err(Error::Dimension {
                expected: self.dims.input,
                actual: j + 1,
            }),
            _ => Ok(()),
        }
    }

    fn hidden(&self, x: &SparseVector) -> Hidden {
        let h = self.dims.hidden;
        let w = self.w_shared();
        let mut pre = self.b_shared().to_vec();
        for (j, v) in x.iter() {
            let row = &w[j * h..(j + 1) * h];
            for (z, &wj) in pre.iter_mut().zip(row) {
                *z += v * wj;
            }
        }
        let post = pre.iter().map(|&z| z.max(0.0)).collect();
        Hidden { pre, post }
    }

    fn head_logits(&self, post: &[f64]) -> [f64; HEAD_ROWS] {
        let h = self.dims.hidden;
        let w = self.w_heads();
        let b = self.b_heads();
        std::array::from_fn(|r| {
            let row = &w[r * h..(r + 1) * h];
            b[r] + row.iter().zip(post).map(|(a, b)| a * b).sum::<f64>()
        })
    }

    fn distributions_from_logits(mut logits: [f64; HEAD_ROWS]) -> Distributions {
        for f in Finding::ALL {
            let start = head_offset(f);
            softmax_in_place(&mut logits[start..start + f.num_classes()]);
        }
        Distributions { probs: logits }
    }

    pub fn forward(&self, x: &SparseVector) -> Result<Distributions> {
        self.check_input(x)?;
        let hidden = self.hidden(x);
        Ok(Self::distributions_from_logits(self.head_logits(&hidden.post)))
    }

    /// Raw head logits, before the per-head softmax.
    pub fn logits(&self, x: &SparseVector) -> Result<[f64; HEAD_ROWS]> {
        self.check_input(x)?;
        Ok(self.head_logits(&self.hidden(x).post))
    }

    fn check_batch(&self, batch: &[(&SparseVector, &ReportLabels)]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Dataset("empty batch".into()));
        }
        for (x, y) in batch {
            self.check_input(x)?;
            validate_labels(y)?;
        }
        Ok(())
    }

    /// Mean over the batch of the mean over the 14 heads of cross-entropy.
    pub fn loss(&self, batch: &[(&SparseVector, &ReportLabels)]) -> Result<f64> {
        self.check_batch(batch)?;
        let mut total = 0.0;
        for (x, y) in batch {
            let d = self.forward(x)?;
            let ce: f64 = Finding::ALL
                .iter()
                .map(|&f| -d.head(f)[y.get(f).class_index()].ln())
                .sum();
            total += ce / NUM_FINDINGS as f64;
        }
        Ok(total / batch.len() as f64)
    }

    /// Loss and its exact gradient, accumulated in batch order.
    pub fn loss_and_grad(&self, batch: &[(&SparseVector, &ReportLabels)]) -> Result<(f64, Gradient)> {
        let mut grad = ModelParams::zeros(self.dims);
        let loss = self.accumulate_grad(batch, &mut grad)?;
        Ok((loss, grad))
    }

    pub fn grad(&self, batch: &[(&SparseVector, &ReportLabels)]) -> Result<Gradient> {
        Ok(self.loss_and_grad(batch)?.1)
    }

    /// Adds the batch gradient into `grad` (which must be zeroed by the
    /// caller) and returns the batch loss.
    pub(crate) fn accumulate_grad(&self, batch: &[(&SparseVector, &ReportLabels)], grad: &mut Gradient) -> Result<f64> {
        self.check_batch(batch)?;
        let dims = self.dims;
        let h = dims.hidden;
        let scale = 1.0 / (batch.len() * NUM_FINDINGS) as f64;
        let w_heads = self.w_heads();
        let (gw_shared_r, gb_shared_r, gw_heads_r, gb_heads_r) =
            (dims.w_shared(), dims.b_shared(), dims.w_heads(), dims.b_heads());
        let mut total = 0.0;
        let mut d_post = vec![0.0; h];
        for (x, y) in batch {
            let hidden = self.hidden(x);
            let mut probs = self.head_logits(&hidden.post);
            let mut ce = 0.0;
            for f in Finding::ALL {
                let start = head_offset(f);
                let head = &mut probs[start..start + f.num_classes()];
                softmax_in_place(head);
                let target = y.get(f).class_index();
                ce -= head[target].ln();
                // probs becomes dL/dlogits for this head.
                head[target] -= 1.0;
                head.iter_mut().for_each(|g| *g *= scale);
            }
            total += ce / NUM_FINDINGS as f64;

            d_post.iter_mut().for_each(|d| *d = 0.0);
            let data = &mut grad.data;
            for (r, &dl) in probs.iter().enumerate() {
                data[gb_heads_r.start + r] += dl;
                let w_row = &w_heads[r * h..(r + 1) * h];
                let g_row = &mut data[gw_heads_r.start + r * h..gw_heads_r.start + (r + 1) * h];
                for k in 0..h {
                    g_row[k] += dl * hidden.post[k];
                    d_post[k] += dl * w_row[k];
                }
            }
            let d_pre: Vec<f64> = d_post
                .iter()
                .zip(&hidden.pre)
                .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
                .collect();
            for (g, &d) in data[gb_shared_r.clone()].iter_mut().zip(&d_pre) {
                *g += d;
            }
            for (j, v) in x.iter() {
                let start = gw_shared_r.start + j * h;
                for (g, &d) in data[start..start + h].iter_mut().zip(&d_pre) {
                    *g += v * d;
                }
            }
        }
        Ok(total / batch.len() as f64)
    }

    /// Zeroes every gradient entry `batch` can have touched, which is
    /// cheaper than clearing all of `w_shared`.
    pub(crate) fn zero_grad_rows(grad: &mut Gradient, batch: &[(&SparseVector, &ReportLabels)]) {
        let dims = grad.dims;
        let h = dims.hidden;
        for (x, _) in batch {
            for (j, _) in x.iter() {
                grad.data[j * h..(j + 1) * h].iter_mut().for_each(|g| *g = 0.0);
            }
        }
        let dense_start = dims.b_shared().start;
        grad.data[dense_start..].iter_mut().for_each(|g| *g = 0.0);
    }
}
