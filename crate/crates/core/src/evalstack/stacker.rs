use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{EvalError, Labeled, NUM_CLASSES};
use crate::lexmodel::SentimentClass;

const PROB_TOLERANCE: f64 = 1e-6;
const MIN_LEARNING_RATE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams { learning_rate: 0.1, l2_lambda: 1e-4, max_iters: 5000, tolerance: 1e-7 }
    }
}

impl Hyperparams {
    fn validate(&self) -> Result<(), EvalError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EvalError::Hyperparam(format!("learning_rate {}", self.learning_rate)));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(EvalError::Hyperparam(format!("l2_lambda {}", self.l2_lambda)));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(EvalError::Hyperparam(format!("tolerance {}", self.tolerance)));
        }
        Ok(())
    }
}

/// Probability outputs of `k` base models for one sample, each in class order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbRow {
    pub id: String,
    pub label: Option<SentimentClass>,
    pub probs: Vec<[f64; NUM_CLASSES]>,
}

impl Labeled for ProbRow {
    fn label(&self) -> Option<SentimentClass> {
        self.label
    }
}

impl ProbRow {
    fn validate(&self) -> Result<(), EvalError> {
        if self.probs.is_empty() {
            return Err(EvalError::BadRow { id: self.id.clone(), message: "no base-model probabilities".into() });
        }
        for (m, p) in self.probs.iter().enumerate() {
            if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(EvalError::BadRow { id: self.id.clone(), message: format!("model {} has a negative or non-finite probability", m + 1) });
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > PROB_TOLERANCE {
                return Err(EvalError::BadRow { id: self.id.clone(), message: format!("model {} probabilities sum to {sum}", m + 1) });
            }
        }
        Ok(())
    }

    fn features(&self) -> Vec<f64> {
        let mut x: Vec<f64> = self.probs.iter().flatten().copied().collect();
        x.push(1.0);
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackerModel {
    pub class_order: Vec<SentimentClass>,
    /// Number of base models.
    pub k: usize,
    /// `(3k + 1) x 3`; the last row is the bias.
    pub weights: Vec<Vec<f64>>,
    pub hyperparams: Hyperparams,
    #[serde(skip)]
    pub loss_trace: Vec<f64>,
    #[serde(skip)]
    pub train_accuracy: f64,
}

fn softmax(z: [f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - max).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

fn argmax(p: &[f64; NUM_CLASSES]) -> usize {
    let mut best = 0;
    for i in 1..NUM_CLASSES {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

fn forward(weights: &[Vec<f64>], x: &[f64]) -> [f64; NUM_CLASSES] {
    let mut z = [0.0; NUM_CLASSES];
    for (xi, w) in x.iter().zip(weights) {
        for c in 0..NUM_CLASSES {
            z[c] += xi * w[c];
        }
    }
    softmax(z)
}

fn check_rows(rows: &[ProbRow], k: usize) -> Result<(), EvalError> {
    for r in rows {
        if r.probs.len() != k {
            return Err(EvalError::Width { expected: k, found: r.probs.len(), id: r.id.clone() });
        }
        r.validate()?;
    }
    Ok(())
}

/// Mean cross-entropy plus `lambda/2 * ||W||^2` (bias row excluded), and its
/// gradient with respect to `weights`.
pub fn loss_and_gradient(weights: &[Vec<f64>], rows: &[ProbRow], lambda: f64) -> Result<(f64, Vec<Vec<f64>>), EvalError> {
    if rows.is_empty() {
        return Err(EvalError::Empty);
    }
    let k = rows[0].probs.len();
    check_rows(rows, k)?;
    if weights.len() != NUM_CLASSES * k + 1 || weights.iter().any(|w| w.len() != NUM_CLASSES) {
        return Err(EvalError::Width { expected: k, found: (weights.len().saturating_sub(1)) / NUM_CLASSES, id: "<weights>".into() });
    }
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![vec![0.0; NUM_CLASSES]; weights.len()];
    for r in rows {
        let label = r.label.ok_or_else(|| EvalError::BadRow { id: r.id.clone(), message: "missing label".into() })?;
        let x = r.features();
        let p = forward(weights, &x);
        loss -= p[label.index()].max(f64::MIN_POSITIVE).ln();
        for (g, xi) in grad.iter_mut().zip(&x) {
            for c in 0..NUM_CLASSES {
                let y = if c == label.index() { 1.0 } else { 0.0 };
                g[c] += xi * (p[c] - y) / n;
            }
        }
    }
    loss /= n;
    let bias = weights.len() - 1;
    for (j, (g, w)) in grad.iter_mut().zip(weights).enumerate().take(bias) {
        debug_assert!(j < bias);
        for c in 0..NUM_CLASSES {
            loss += 0.5 * lambda * w[c] * w[c];
            g[c] += lambda * w[c];
        }
    }
    Ok((loss, grad))
}

/// Full-batch gradient descent from zero weights. A step that would raise the
/// loss is rejected and the learning rate halved.
pub fn train_stacker(rows: &[ProbRow], hp: Hyperparams) -> Result<StackerModel, EvalError> {
    hp.validate()?;
    if rows.is_empty() {
        return Err(EvalError::Empty);
    }
    let k = rows[0].probs.len();
    check_rows(rows, k)?;
    let mut seen = [false; NUM_CLASSES];
    for r in rows {
        let label = r.label.ok_or_else(|| EvalError::BadRow { id: r.id.clone(), message: "missing label".into() })?;
        seen[label.index()] = true;
    }
    if seen.iter().filter(|s| **s).count() < 2 {
        return Err(EvalError::SingleClass);
    }

    let mut weights = vec![vec![0.0; NUM_CLASSES]; NUM_CLASSES * k + 1];
    let (mut loss, mut grad) = loss_and_gradient(&weights, rows, hp.l2_lambda)?;
    let mut trace = vec![loss];
    let mut lr = hp.learning_rate;
    let mut iters = 0;
    while iters < hp.max_iters && lr >= MIN_LEARNING_RATE {
        let candidate: Vec<Vec<f64>> = weights
            .iter()
            .zip(&grad)
            .map(|(w, g)| w.iter().zip(g).map(|(w, g)| w - lr * g).collect())
            .collect();
        let (new_loss, new_grad) = loss_and_gradient(&candidate, rows, hp.l2_lambda)?;
        if new_loss > loss {
            lr /= 2.0;
            continue;
        }
        iters += 1;
        let delta = loss - new_loss;
        weights = candidate;
        loss = new_loss;
        grad = new_grad;
        trace.push(loss);
        if delta < hp.tolerance {
            break;
        }
    }

    let mut model = StackerModel {
        class_order: SentimentClass::ORDER.to_vec(),
        k,
        weights,
        hyperparams: hp,
        loss_trace: trace,
        train_accuracy: 0.0,
    };
    let (preds, _) = predict_stacker(&model, rows)?;
    let correct = rows.iter().zip(&preds).filter(|(r, p)| r.label == Some(**p)).count();
    model.train_accuracy = correct as f64 / rows.len() as f64;
    Ok(model)
}

pub fn predict_stacker(
    model: &StackerModel,
    rows: &[ProbRow],
) -> Result<(Vec<SentimentClass>, Vec<[f64; NUM_CLASSES]>), EvalError> {
    check_rows(rows, model.k)?;
    let mut labels = Vec::with_capacity(rows.len());
    let mut probs = Vec::with_capacity(rows.len());
    for r in rows {
        let p = forward(&model.weights, &r.features());
        labels.push(model.class_order[argmax(&p)]);
        probs.push(p);
    }
    Ok((labels, probs))
}

/// Reads `id,label,m1_neg,m1_neu,m1_pos[,m2_neg,...]`. An empty label is
/// allowed for unlabeled rows.
pub fn read_prob_csv(bytes: &[u8]) -> Result<Vec<ProbRow>, EvalError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let width = reader.headers()?.len();
    if width < 2 + NUM_CLASSES || (width - 2) % NUM_CLASSES != 0 {
        return Err(EvalError::BadRow {
            id: "<header>".into(),
            message: format!("expected id, label and a multiple of {NUM_CLASSES} probability columns, found {width} columns"),
        });
    }
    let k = (width - 2) / NUM_CLASSES;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let id = record.get(0).unwrap_or_default().to_string();
        let bad = |message: String| EvalError::BadRow { id: id.clone(), message };
        let label = match record.get(1).unwrap_or_default() {
            "" => None,
            s => Some(s.parse::<SentimentClass>().map_err(|_| bad(format!("unknown label `{s}`")))?),
        };
        let mut probs = Vec::with_capacity(k);
        for m in 0..k {
            let mut p = [0.0; NUM_CLASSES];
            for (c, slot) in p.iter_mut().enumerate() {
                let field = record.get(2 + m * NUM_CLASSES + c).unwrap_or_default();
                *slot = field.parse().map_err(|_| bad(format!("bad probability `{field}`")))?;
            }
            probs.push(p);
        }
        let row = ProbRow { id, label, probs };
        row.validate()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_prob_csv<W: Write>(rows: &[ProbRow], out: W) -> Result<(), EvalError> {
    let k = rows.first().map_or(1, |r| r.probs.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "label".to_string()];
    for m in 1..=k {
        for c in SentimentClass::ORDER {
            header.push(format!("m{m}_{}", c.short().to_lowercase()));
        }
    }
    w.write_record(&header)?;
    for r in rows {
        if r.probs.len() != k {
            return Err(EvalError::Width { expected: k, found: r.probs.len(), id: r.id.clone() });
        }
        let mut rec = vec![r.id.clone(), r.label.map(|l| l.to_string()).unwrap_or_default()];
        rec.extend(r.probs.iter().flatten().map(|p| p.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use SentimentClass::{Negative as N, Neutral as U, Positive as P};

    fn one_hot(c: SentimentClass) -> [f64; 3] {
        let mut p = [0.0; 3];
        p[c.index()] = 1.0;
        p
    }

    fn row(id: usize, label: SentimentClass, probs: Vec<[f64; 3]>) -> ProbRow {
        ProbRow { id: id.to_string(), label: Some(label), probs }
    }

    fn soft_rows() -> Vec<ProbRow> {
        vec![
            row(0, P, vec![[0.1, 0.2, 0.7], [0.3, 0.3, 0.4]]),
            row(1, N, vec![[0.6, 0.3, 0.1], [0.2, 0.5, 0.3]]),
            row(2, U, vec![[0.2, 0.5, 0.3], [0.1, 0.8, 0.1]]),
            row(3, P, vec![[0.4, 0.1, 0.5], [0.05, 0.15, 0.8]]),
        ]
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let rows = soft_rows();
        let mut w: Vec<Vec<f64>> =
            (0..7).map(|i| (0..3).map(|c| ((i * 3 + c) as f64 * 0.37).sin() * 0.5).collect()).collect();
        let lambda = 0.01;
        let (_, g) = loss_and_gradient(&w, &rows, lambda).unwrap();
        let h = 1e-5;
        for i in 0..w.len() {
            for c in 0..3 {
                let orig = w[i][c];
                w[i][c] = orig + h;
                let (lp, _) = loss_and_gradient(&w, &rows, lambda).unwrap();
                w[i][c] = orig - h;
                let (lm, _) = loss_and_gradient(&w, &rows, lambda).unwrap();
                w[i][c] = orig;
                let numeric = (lp - lm) / (2.0 * h);
                let rel = (numeric - g[i][c]).abs() / numeric.abs().max(g[i][c].abs()).max(1e-8);
                assert!(rel <= 1e-4 || (numeric - g[i][c]).abs() < 1e-9, "w[{i}][{c}]: {numeric} vs {}", g[i][c]);
            }
        }
    }

    #[test]
    fn one_hot_inputs_are_learned_exactly() {
        let rows: Vec<ProbRow> =
            (0..30).map(|i| { let c = SentimentClass::ORDER[i % 3]; row(i, c, vec![one_hot(c)]) }).collect();
        let model = train_stacker(&rows, Hyperparams::default()).unwrap();
        assert_eq!(model.train_accuracy, 1.0);
        assert!(model.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    fn accuracy(rows: &[ProbRow], preds: &[SentimentClass]) -> f64 {
        rows.iter().zip(preds).filter(|(r, p)| r.label == Some(**p)).count() as f64 / rows.len() as f64
    }

    /// Model 1 is reliable on positives and confuses the rest; model 2 the
    /// opposite. Each alone is wrong where the other is right.
    fn anti_correlated_rows() -> Vec<ProbRow> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut noisy = |c: usize| {
            let mut p = [0.0; 3];
            for (i, v) in p.iter_mut().enumerate() {
                *v = rng.gen_range(0.05..0.2) + if i == c { 0.6 } else { 0.0 };
            }
            let s: f64 = p.iter().sum();
            p.map(|v| v / s)
        };
        (0..150)
            .map(|i| {
                let label = SentimentClass::ORDER[i % 3];
                let (a, b) = match label {
                    P => (noisy(2), noisy(0)),
                    N => (noisy(1), noisy(0)),
                    U => (noisy(0), noisy(1)),
                };
                row(i, label, vec![a, b])
            })
            .collect()
    }

    #[test]
    fn stacker_beats_each_base_model() {
        let rows = anti_correlated_rows();
        let single = |m: usize| {
            let preds: Vec<SentimentClass> =
                rows.iter().map(|r| SentimentClass::ORDER[argmax(&r.probs[m])]).collect();
            accuracy(&rows, &preds)
        };
        let model = train_stacker(&rows, Hyperparams::default()).unwrap();
        assert!(model.train_accuracy >= single(0).max(single(1)), "{} vs {} / {}", model.train_accuracy, single(0), single(1));
        let (preds, probs) = predict_stacker(&model, &rows).unwrap();
        assert_eq!(accuracy(&rows, &preds), model.train_accuracy);
        for p in probs {
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn scaling_weights_keeps_labels() {
        let rows = anti_correlated_rows();
        let model = train_stacker(&rows, Hyperparams { max_iters: 200, ..Default::default() }).unwrap();
        let (labels, _) = predict_stacker(&model, &rows).unwrap();
        for factor in [0.01, 3.0, 250.0] {
            let mut scaled = model.clone();
            scaled.weights.iter_mut().flatten().for_each(|w| *w *= factor);
            assert_eq!(predict_stacker(&scaled, &rows).unwrap().0, labels);
        }
    }

    #[test]
    fn prediction_rejects_width_mismatch() {
        let rows = anti_correlated_rows();
        let model = train_stacker(&rows, Hyperparams { max_iters: 5, ..Default::default() }).unwrap();
        let narrow = vec![row(0, P, vec![one_hot(P)])];
        assert!(matches!(predict_stacker(&model, &narrow), Err(EvalError::Width { expected: 2, found: 1, .. })));
    }

    #[test]
    fn zero_model_is_uniform_and_ties_to_first_class() {
        let model = StackerModel {
            class_order: SentimentClass::ORDER.to_vec(),
            k: 1,
            weights: vec![vec![0.0; 3]; 4],
            hyperparams: Hyperparams::default(),
            loss_trace: vec![],
            train_accuracy: 0.0,
        };
        let (labels, probs) = predict_stacker(&model, &[row(0, P, vec![[0.2, 0.3, 0.5]])]).unwrap();
        assert_eq!(labels, vec![N]);
        for p in probs[0] {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_and_width_errors() {
        let rows = vec![row(0, P, vec![one_hot(P)]), row(1, P, vec![one_hot(P)])];
        assert!(matches!(train_stacker(&rows, Hyperparams::default()), Err(EvalError::SingleClass)));
        let mixed = vec![row(0, P, vec![one_hot(P)]), row(1, N, vec![one_hot(N), one_hot(N)])];
        assert!(matches!(train_stacker(&mixed, Hyperparams::default()), Err(EvalError::Width { .. })));
        let bad = vec![row(0, P, vec![[0.5, 0.5, 0.5]])];
        assert!(matches!(train_stacker(&bad, Hyperparams::default()), Err(EvalError::BadRow { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let rows = soft_rows();
        let mut buf = Vec::new();
        write_prob_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,label,m1_neg,m1_neu,m1_pos,m2_neg,m2_neu,m2_pos\n"));
        assert_eq!(read_prob_csv(&buf).unwrap(), rows);
    }

    #[test]
    fn model_json_keys() {
        let rows = soft_rows();
        let model = train_stacker(&rows, Hyperparams { max_iters: 10, ..Default::default() }).unwrap();
        let v = serde_json::to_value(&model).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, vec!["class_order", "hyperparams", "k", "weights"]);
        let back: StackerModel = serde_json::from_value(v).unwrap();
        assert_eq!(back.weights, model.weights);
    }
}
