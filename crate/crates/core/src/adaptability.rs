//! Sample adaptability: how much a generated sample separates the quantized
//! student from the teacher, and the losses both players optimize.
//!
//! For teacher logits `z_p` and student logits `z_q`:
//!
//! * `p_ds = softmax(z_p − z_q)` encodes disagreement, `p_as = softmax(z_p + z_q)`
//!   encodes agreement.
//! * `H(p_ds) = Σ p ln(1/p)` is largest (`ln C`) when the two networks agree up
//!   to a constant shift.
//! * `h′ = (H − min_batch H) / (ln C − min_batch H)` rescales it into `[0, 1]`
//!   with the batch minimum detached from the graph; the adaptability is
//!   `1 − h′`.
//!
//! The generator maximizes
//! `E[−max(λ_l − h′, 0)] + E[−max(h′ − λ_u, 0)] − β·L_bal − γ·L_BNS`;
//! the student minimizes `E[1 − h′]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{argmax, BnStats};
use crate::tensor::{Graph, Tensor, Var};

/// Below this spread the normalization is degenerate and returns zeros.
pub const DEGENERATE_SPREAD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameHyperparams {
    pub alpha_ds: f64,
    pub alpha_as: f64,
    pub lambda_l: f64,
    pub lambda_u: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for GameHyperparams {
    fn default() -> Self {
        GameHyperparams {
            alpha_ds: 0.2,
            alpha_as: 0.1,
            lambda_l: 0.1,
            lambda_u: 0.8,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

impl GameHyperparams {
    pub fn validate(&self) -> Result<()> {
        check_bounds(self.lambda_l, self.lambda_u)?;
        for (name, v) in [
            ("alpha_ds", self.alpha_ds),
            ("alpha_as", self.alpha_as),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be a finite value ≥ 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn check_bounds(lambda_l: f64, lambda_u: f64) -> Result<()> {
    if !(0.0 <= lambda_l && lambda_l < lambda_u && lambda_u <= 1.0) {
        return Err(Error::config(format!(
            "margin bounds need 0 ≤ λ_l < λ_u ≤ 1, got λ_l={lambda_l}, λ_u={lambda_u}"
        )));
    }
    Ok(())
}

/// `softmax(z_p − z_q)` row-wise.
pub fn disagreement_vector(g: &mut Graph, zp: Var, zq: Var) -> Result<Var> {
    let d = g.sub(zp, zq)?;
    g.softmax(d)
}

/// `softmax(z_p + z_q)` row-wise.
pub fn agreement_vector(g: &mut Graph, zp: Var, zq: Var) -> Result<Var> {
    let s = g.add(zp, zq)?;
    g.softmax(s)
}

/// Entropy in nats of each row of a probability matrix, with `0·ln(1/0) = 0`.
pub fn info_entropy(p: &Tensor) -> Result<Vec<f64>> {
    let c = p.cols();
    if p.shape().len() != 2 {
        return Err(Error::dim("info_entropy", p.shape(), &[0, c]));
    }
    (0..p.rows())
        .map(|r| {
            let row = p.row(r);
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-6 || row.iter().any(|v| *v < 0.0) {
                return Err(Error::contract(format!("row {r} is not a distribution (sum {total})")));
            }
            Ok(row.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum())
        })
        .collect()
}

/// Row entropy of `softmax(logits)` on the graph, as `−Σ softmax · log_softmax`.
pub fn entropy_of_logits(g: &mut Graph, logits: Var) -> Result<Var> {
    let p = g.softmax(logits)?;
    let logp = g.log_softmax(logits)?;
    let plogp = g.mul(p, logp)?;
    let s = g.sum_rows(plogp)?;
    Ok(g.neg(s))
}

/// `(h − min) / (h_max − min)` over a batch; all zeros when the spread is
/// below [`DEGENERATE_SPREAD`].
pub fn normalize_entropy_values(h: &[f64], h_max: f64) -> Vec<f64> {
    let min = h.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = h_max - min;
    if !(spread >= DEGENERATE_SPREAD) {
        return vec![0.0; h.len()];
    }
    h.iter().map(|v| (v - min) / spread).collect()
}

/// Graph version of the normalization with `h_max = ln C`. The batch
/// minimum enters as a constant, so gradients flow only through each
/// sample's own entropy.
pub fn normalize_entropy(g: &mut Graph, h: Var, classes: usize) -> Result<Var> {
    let min = g.value(h).iter().copied().fold(f64::INFINITY, f64::min);
    normalize_entropy_with_min(g, h, classes, min)
}

/// Normalization against a caller-supplied minimum, treated as a constant.
pub fn normalize_entropy_with_min(g: &mut Graph, h: Var, classes: usize, min: f64) -> Result<Var> {
    if g.shape(h).len() != 1 {
        return Err(Error::dim("normalize_entropy", g.shape(h), &[0]));
    }
    let h_max = (classes as f64).ln();
    let spread = h_max - min;
    if !(spread >= DEGENERATE_SPREAD) {
        return Ok(g.scale(h, 0.0));
    }
    let shifted = g.add_scalar(h, -min);
    Ok(g.scale(shifted, 1.0 / spread))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleClass {
    /// Teacher predicts the conditioning label, student predicts otherwise.
    Disagreement,
    /// Teacher and student predict the same class.
    Agreement,
    /// Teacher misses the label and the student disagrees with the teacher.
    TeacherWrong,
}

pub fn classify(zp: &[f64], zq: &[f64], y: &[f64]) -> SampleClass {
    let (p, q, t) = (argmax(zp), argmax(zq), argmax(y));
    if p == q {
        SampleClass::Agreement
    } else if p == t {
        SampleClass::Disagreement
    } else {
        SampleClass::TeacherWrong
    }
}

pub fn classify_samples(zp: &Tensor, zq: &Tensor, y: &Tensor) -> Result<Vec<SampleClass>> {
    if zp.shape() != zq.shape() || zp.shape() != y.shape() {
        return Err(Error::dim("classify_samples", zp.shape(), zq.shape()));
    }
    Ok((0..zp.rows())
        .map(|r| classify(zp.row(r), zq.row(r), y.row(r)))
        .collect())
}

/// Mean of `−Σ y ⊙ log_softmax(logits)`.
pub fn soft_cross_entropy(g: &mut Graph, logits: Var, y: Var) -> Result<Var> {
    let logp = g.log_softmax(logits)?;
    let picked = g.mul(logp, y)?;
    let rows = g.sum_rows(picked)?;
    let mean = g.mean(rows);
    Ok(g.neg(mean))
}

/// Cross-entropy of `p_ds` against `y`, evaluated on the logits `z_p − z_q`.
pub fn loss_ds(g: &mut Graph, zp: Var, zq: Var, y: Var) -> Result<Var> {
    let d = g.sub(zp, zq)?;
    soft_cross_entropy(g, d, y)
}

/// Cross-entropy of `p_as` against `y`, evaluated on the logits `z_p + z_q`.
pub fn loss_as(g: &mut Graph, zp: Var, zq: Var, y: Var) -> Result<Var> {
    let s = g.add(zp, zq)?;
    soft_cross_entropy(g, s, y)
}

/// Mean `−ln p[y]` for probability rows; reference for the logit-space losses.
pub fn cross_entropy_of_probs(p: &Tensor, labels: &[usize]) -> Result<f64> {
    if p.rows() != labels.len() {
        return Err(Error::dim("cross_entropy_of_probs", p.shape(), &[labels.len()]));
    }
    Ok(labels.iter().enumerate().map(|(r, l)| -p.row(r)[*l].ln()).sum::<f64>() / labels.len() as f64)
}

pub fn loss_bal(g: &mut Graph, l_ds: Var, l_as: Var, alpha_ds: f64, alpha_as: f64) -> Result<Var> {
    let a = g.scale(l_ds, alpha_ds);
    let b = g.scale(l_as, alpha_as);
    g.add(a, b)
}

/// Batch mean of `−max(λ_l − h′, 0) − max(h′ − λ_u, 0)`: zero when every
/// sample lies inside the margin, negative otherwise.
pub fn margin_terms(g: &mut Graph, h_prime: Var, lambda_l: f64, lambda_u: f64) -> Result<Var> {
    check_bounds(lambda_l, lambda_u)?;
    let neg = g.neg(h_prime);
    let below = g.hinge(neg, -lambda_l);
    let above = g.hinge(h_prime, lambda_u);
    let both = g.add(below, above)?;
    let mean = g.mean(both);
    Ok(g.neg(mean))
}

/// Margin penalty for a single `h′` value; scalar reference for the graph op.
pub fn margin_penalty(h_prime: f64, lambda_l: f64, lambda_u: f64) -> f64 {
    -(lambda_l - h_prime).max(0.0) - (h_prime - lambda_u).max(0.0)
}

/// `Σ_m ‖μ^g_m − μ_m‖² + ‖σ^g_m − σ_m‖²` over BN sites, with the batch
/// standard deviation `√(biased var + eps)` matching [`BnStats::std`].
pub fn loss_bns(g: &mut Graph, bn_inputs: &[Var], stats: &[BnStats]) -> Result<Var> {
    if bn_inputs.len() != stats.len() {
        return Err(Error::contract(format!(
            "{} BN inputs for {} reference sites",
            bn_inputs.len(),
            stats.len()
        )));
    }
    let mut total: Option<Var> = None;
    for (&a, st) in bn_inputs.iter().zip(stats) {
        let (b, d) = match g.shape(a) {
            [b, d] => (*b, *d),
            s => return Err(Error::dim("loss_bns", s, &[0, st.mean.len()])),
        };
        if b < 2 {
            return Err(Error::contract("batch statistics need at least 2 rows"));
        }
        if d != st.mean.len() {
            return Err(Error::dim("loss_bns", g.shape(a), &[b, st.mean.len()]));
        }
        let mean = g.col_mean(a)?;
        let neg_mean = g.neg(mean);
        let centered = g.add_row(a, neg_mean)?;
        let sq = g.square(centered);
        let var = g.col_mean(sq)?;
        let var = g.add_scalar(var, st.eps);
        let std = g.sqrt(var);

        let ref_mean = g.constant(&Tensor::new(vec![d], st.mean.clone())?);
        let ref_std = g.constant(&Tensor::new(vec![d], st.std.clone())?);
        let dm = g.sub(mean, ref_mean)?;
        let ds = g.sub(std, ref_std)?;
        let dm2 = g.square(dm);
        let ds2 = g.square(ds);
        let sm = g.sum(dm2);
        let ss = g.sum(ds2);
        let site = g.add(sm, ss)?;
        total = Some(match total {
            Some(t) => g.add(t, site)?,
            None => site,
        });
    }
    match total {
        Some(t) => Ok(t),
        None => {
            let zero = g.constant(&Tensor::scalar(0.0));
            Ok(zero)
        }
    }
}

/// `H(p_ds)` per sample and its normalization.
fn entropies(g: &mut Graph, zp: Var, zq: Var, floor: Option<f64>) -> Result<(Var, Var)> {
    let classes = g.shape(zp)[1];
    let diff = g.sub(zp, zq)?;
    let h_info = entropy_of_logits(g, diff)?;
    let h_prime = match floor {
        Some(min) => normalize_entropy_with_min(g, h_info, classes, min)?,
        None => normalize_entropy(g, h_info, classes)?,
    };
    Ok((h_info, h_prime))
}

/// Every term of the generator's objective, kept for logging.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorObjective {
    /// Quantity to maximize.
    pub total: Var,
    pub margin: Var,
    pub l_ds: Var,
    pub l_as: Var,
    pub l_bal: Var,
    pub l_bns: Var,
    pub h_info: Var,
    pub h_prime: Var,
}

/// `margin_terms − β·L_bal − γ·L_BNS`, to be maximized over the generator.
pub fn generator_objective(
    g: &mut Graph,
    zp: Var,
    zq: Var,
    y: Var,
    bn_inputs: &[Var],
    stats: &[BnStats],
    hp: &GameHyperparams,
) -> Result<GeneratorObjective> {
    generator_objective_with_floor(g, zp, zq, y, bn_inputs, stats, hp, None)
}

/// [`generator_objective`] with the entropy floor pinned to `floor` instead
/// of the batch minimum. With a pinned floor the objective is a smooth
/// function of its inputs, which is what finite-difference checks need.
#[allow(clippy::too_many_arguments)]
pub fn generator_objective_with_floor(
    g: &mut Graph,
    zp: Var,
    zq: Var,
    y: Var,
    bn_inputs: &[Var],
    stats: &[BnStats],
    hp: &GameHyperparams,
    floor: Option<f64>,
) -> Result<GeneratorObjective> {
    hp.validate()?;
    let (h_info, h_prime) = entropies(g, zp, zq, floor)?;
    let margin = margin_terms(g, h_prime, hp.lambda_l, hp.lambda_u)?;
    let l_ds = loss_ds(g, zp, zq, y)?;
    let l_as = loss_as(g, zp, zq, y)?;
    let l_bal = loss_bal(g, l_ds, l_as, hp.alpha_ds, hp.alpha_as)?;
    let l_bns = loss_bns(g, bn_inputs, stats)?;
    let bal = g.scale(l_bal, hp.beta);
    let bns = g.scale(l_bns, hp.gamma);
    let total = g.sub(margin, bal)?;
    let total = g.sub(total, bns)?;
    Ok(GeneratorObjective {
        total,
        margin,
        l_ds,
        l_as,
        l_bal,
        l_bns,
        h_info,
        h_prime,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct CalibrationObjective {
    /// Quantity to minimize: batch mean of `1 − h′`.
    pub total: Var,
    pub h_info: Var,
    pub h_prime: Var,
}

pub fn calibration_objective(g: &mut Graph, zp: Var, zq: Var) -> Result<CalibrationObjective> {
    calibration_objective_with_floor(g, zp, zq, None)
}

/// [`calibration_objective`] with a pinned entropy floor.
pub fn calibration_objective_with_floor(
    g: &mut Graph,
    zp: Var,
    zq: Var,
    floor: Option<f64>,
) -> Result<CalibrationObjective> {
    let (h_info, h_prime) = entropies(g, zp, zq, floor)?;
    let adapt = g.scale(h_prime, -1.0);
    let adapt = g.add_scalar(adapt, 1.0);
    let total = g.mean(adapt);
    Ok(CalibrationObjective { total, h_info, h_prime })
}

/// Per-sample adaptability quantities for one batch, computed from values.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptabilityBatch {
    pub zp: Tensor,
    pub zq: Tensor,
    pub y: Tensor,
    pub p_ds: Tensor,
    pub p_as: Tensor,
    pub h_info: Vec<f64>,
    pub h_prime: Vec<f64>,
    pub h_nor: Vec<f64>,
    pub classes: Vec<SampleClass>,
}

impl AdaptabilityBatch {
    pub fn compute(zp: &Tensor, zq: &Tensor, y: &Tensor) -> Result<Self> {
        let classes = classify_samples(zp, zq, y)?;
        let mut g = Graph::new();
        let (p, q) = (g.constant(zp), g.constant(zq));
        let p_ds = disagreement_vector(&mut g, p, q)?;
        let p_as = agreement_vector(&mut g, p, q)?;
        let p_ds = g.tensor(p_ds);
        let p_as = g.tensor(p_as);
        let h_info = info_entropy(&p_ds)?;
        let h_prime = normalize_entropy_values(&h_info, (zp.cols() as f64).ln());
        let h_nor = h_prime.iter().map(|h| 1.0 - h).collect();
        Ok(AdaptabilityBatch {
            zp: zp.clone(),
            zq: zq.clone(),
            y: y.clone(),
            p_ds,
            p_as,
            h_info,
            h_prime,
            h_nor,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.h_info.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_info.is_empty()
    }

    pub fn mean_h_info(&self) -> f64 {
        self.h_info.iter().sum::<f64>() / self.len() as f64
    }

    /// Counts of (disagreement, agreement, teacher-wrong).
    pub fn class_counts(&self) -> (usize, usize, usize) {
        self.classes.iter().fold((0, 0, 0), |(d, a, t), c| match c {
            SampleClass::Disagreement => (d + 1, a, t),
            SampleClass::Agreement => (d, a + 1, t),
            SampleClass::TeacherWrong => (d, a, t + 1),
        })
    }

    pub fn in_margin(&self, lambda_l: f64, lambda_u: f64) -> usize {
        self.h_prime
            .iter()
            .filter(|h| **h >= lambda_l && **h <= lambda_u)
            .count()
    }
}

/// Pairwise ℓ1 distances between rows of `p`.
pub fn l1_similarity_matrix(p: &Tensor) -> Vec<Vec<f64>> {
    let n = p.rows();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = p.row(i).iter().zip(p.row(j)).map(|(a, b)| (a - b).abs()).sum();
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{one_hot, SeededRng};
    use crate::tensor::check_gradients;

    const LN2: f64 = std::f64::consts::LN_2;

    fn rows(r: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(r).unwrap()
    }

    fn p_ds_of(zp: &Tensor, zq: &Tensor) -> Tensor {
        let mut g = Graph::new();
        let (a, b) = (g.constant(zp), g.constant(zq));
        let p = disagreement_vector(&mut g, a, b).unwrap();
        g.tensor(p)
    }

    fn p_as_of(zp: &Tensor, zq: &Tensor) -> Tensor {
        let mut g = Graph::new();
        let (a, b) = (g.constant(zp), g.constant(zq));
        let p = agreement_vector(&mut g, a, b).unwrap();
        g.tensor(p)
    }

    #[test]
    fn disagreement_vector_cases() {
        let z = rows(&[vec![0.3, -1.0, 2.0, 0.0]]);
        assert!(p_ds_of(&z, &z).data().iter().all(|v| (v - 0.25).abs() < 1e-15));

        let zp = rows(&[vec![LN2 + 1.0, 1.0, 1.0]]);
        let zq = rows(&[vec![1.0, 1.0, 1.0]]);
        let p = p_ds_of(&zp, &zq);
        for (a, b) in p.data().iter().zip([0.5, 0.25, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }

        let shift = |t: &Tensor, c: f64| rows(&[t.data().iter().map(|v| v + c).collect()]);
        let p2 = p_ds_of(&shift(&zp, 3.7), &shift(&zq, 3.7));
        for (a, b) in p.data().iter().zip(p2.data()) {
            assert!((a - b).abs() < 1e-15);
        }

        let mut g = Graph::new();
        let a = g.constant(&Tensor::zeros(&[2, 3]));
        let b = g.constant(&Tensor::zeros(&[2, 4]));
        assert!(disagreement_vector(&mut g, a, b).is_err());
    }

    #[test]
    fn agreement_vector_cases() {
        let zp = rows(&[vec![0.4, -1.3, 2.2]]);
        let zq = rows(&[vec![-0.4, 1.3, -2.2]]);
        assert!(p_as_of(&zp, &zq).data().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));

        // peaked, aligned logits: p_as sharper than softmax(z_p)
        let z = rows(&[vec![2.0, 0.0, 0.0, 0.0]]);
        let p = p_as_of(&z, &z);
        let mut g = Graph::new();
        let zv = g.constant(&z);
        let s = g.softmax(zv).unwrap();
        let sp = g.value(s)[0];
        // e^4/(e^4+3) vs e^2/(e^2+3)
        assert!((p.data()[0] - 4f64.exp() / (4f64.exp() + 3.0)).abs() < 1e-15);
        assert!(p.data()[0] > sp);

        // class-axis permutation commutes
        let zq = rows(&[vec![0.1, 0.7, -0.3]]);
        let perm = [2, 0, 1];
        let permute = |t: &Tensor| rows(&[perm.iter().map(|&i| t.data()[i]).collect()]);
        let a = permute(&p_as_of(&zp, &zq));
        let b = p_as_of(&permute(&zp), &permute(&zq));
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn entropy_cases() {
        let h = info_entropy(&rows(&[vec![0.25; 4], vec![0.0, 1.0, 0.0, 0.0]])).unwrap();
        assert!((h[0] - 4f64.ln()).abs() < 1e-15);
        assert!((h[0] - 1.386294).abs() < 1e-6);
        assert_eq!(h[1], 0.0);
        let h = info_entropy(&rows(&[vec![0.5, 0.25, 0.25]])).unwrap();
        assert!((h[0] - 1.5 * LN2).abs() < 1e-15);
        assert!((h[0] - 1.039721).abs() < 1e-6);
        assert!(matches!(
            info_entropy(&rows(&[vec![0.5, 0.6]])),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn graph_entropy_matches_value_entropy() {
        let mut rng = SeededRng::new(1);
        let logits = Tensor::new(vec![5, 4], (0..20).map(|_| 3.0 * rng.normal()).collect()).unwrap();
        let mut g = Graph::new();
        let v = g.constant(&logits);
        let h = entropy_of_logits(&mut g, v).unwrap();
        let p = g.softmax(v).unwrap();
        let expected = info_entropy(&g.tensor(p)).unwrap();
        for (a, b) in g.value(h).iter().zip(expected) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn normalization_cases() {
        let ln4 = 4f64.ln();
        assert_eq!(normalize_entropy_values(&[0.2, ln4], ln4), vec![0.0, 1.0]);
        assert_eq!(normalize_entropy_values(&[0.7, 0.7, 0.7], ln4), vec![0.0; 3]);
        assert_eq!(normalize_entropy_values(&[ln4, ln4], ln4), vec![0.0; 2]);
        let h = normalize_entropy_values(&[0.5, 1.0, 1.386294], ln4);
        assert_eq!(h[0], 0.0);
        let oracle = 0.5 / (ln4 - 0.5);
        assert!((h[1] - oracle).abs() < 1e-12, "{}", h[1]);
        assert!((h[1] - 0.564147).abs() < 1e-6);
        assert!((h[2] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn normalization_is_log_base_invariant() {
        let nats = [0.31, 0.9, 1.2, 0.05];
        let bits: Vec<f64> = nats.iter().map(|h| h / LN2).collect();
        let a = normalize_entropy_values(&nats, 4f64.ln());
        let b = normalize_entropy_values(&bits, 2.0);
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn graph_normalization_detaches_min() {
        let mut g = Graph::new();
        let h = g.input(&[3], vec![0.2, 0.5, 1.0], true).unwrap();
        let n = normalize_entropy(&mut g, h, 4).unwrap();
        let s = g.sum(n);
        let grads = g.backward(s).unwrap();
        let inv = 1.0 / (4f64.ln() - 0.2);
        for v in grads.get(h).unwrap() {
            assert!((v - inv).abs() < 1e-15);
        }
    }

    #[test]
    fn classification_definitions() {
        let y = one_hot(&[0], 3).unwrap();
        let t = |p: Vec<f64>, q: Vec<f64>| classify(&p, &q, y.data());
        assert_eq!(t(vec![5.0, 0.0, 0.0], vec![0.0, 5.0, 0.0]), SampleClass::Disagreement);
        assert_eq!(t(vec![0.0, 5.0, 0.0], vec![0.0, 5.0, 0.0]), SampleClass::Agreement);
        assert_eq!(t(vec![0.0, 5.0, 0.0], vec![0.0, 0.0, 5.0]), SampleClass::TeacherWrong);

        // every argmax configuration for C=3
        for yc in 0..3 {
            for pc in 0..3 {
                for qc in 0..3 {
                    let mut zp = vec![0.0; 3];
                    zp[pc] = 1.0;
                    let mut zq = vec![0.0; 3];
                    zq[qc] = 1.0;
                    let y = one_hot(&[yc], 3).unwrap();
                    let expected = if pc == qc {
                        SampleClass::Agreement
                    } else if pc == yc {
                        SampleClass::Disagreement
                    } else {
                        SampleClass::TeacherWrong
                    };
                    assert_eq!(classify(&zp, &zq, y.data()), expected, "y={yc} p={pc} q={qc}");
                }
            }
        }
    }

    #[test]
    fn classify_partitions_batches() {
        let mut rng = SeededRng::new(8);
        let zp = Tensor::new(vec![16, 4], (0..64).map(|_| rng.normal()).collect()).unwrap();
        let zq = Tensor::new(vec![16, 4], (0..64).map(|_| rng.normal()).collect()).unwrap();
        let labels: Vec<usize> = (0..16).map(|i| i % 4).collect();
        let batch = AdaptabilityBatch::compute(&zp, &zq, &one_hot(&labels, 4).unwrap()).unwrap();
        let (d, a, t) = batch.class_counts();
        assert_eq!(d + a + t, 16);
    }

    fn ce_logits(logits: &Tensor, labels: &[usize], agree: bool) -> f64 {
        let mut g = Graph::new();
        let zp = g.constant(logits);
        let zq = g.constant(&Tensor::zeros(logits.shape()));
        let y = g.constant(&one_hot(labels, logits.cols()).unwrap());
        let l = if agree {
            loss_as(&mut g, zp, zq, y)
        } else {
            loss_ds(&mut g, zp, zq, y)
        }
        .unwrap();
        g.scalar(l)
    }

    #[test]
    fn balance_losses() {
        for agree in [false, true] {
            // p[y] = 1 up to exp(-800) → 0
            assert!(ce_logits(&rows(&[vec![800.0, 0.0, 0.0]]), &[0], agree) < 1e-300);
            assert!((ce_logits(&rows(&[vec![0.0; 4]]), &[2], agree) - 4f64.ln()).abs() < 1e-15);
            // p[y] = 0.7 with C=2: logits [ln 0.7, ln 0.3]
            let l = ce_logits(&rows(&[vec![0.7f64.ln(), 0.3f64.ln()]]), &[0], agree);
            assert!((l - 0.356675).abs() < 1e-6);
            assert!((l + 0.7f64.ln()).abs() < 1e-15);
        }
        let p = rows(&[vec![0.7, 0.3]]);
        assert!((cross_entropy_of_probs(&p, &[0]).unwrap() - 0.356675).abs() < 1e-6);

        let mut g = Graph::new();
        let one = g.constant(&Tensor::scalar(1.0));
        let two = g.constant(&Tensor::scalar(2.0));
        let hp = GameHyperparams::default();
        let b = loss_bal(&mut g, one, two, hp.alpha_ds, hp.alpha_as).unwrap();
        assert!((g.scalar(b) - 0.4).abs() < 1e-15);
        let b = loss_bal(&mut g, one, two, 0.0, 0.0).unwrap();
        assert_eq!(g.scalar(b), 0.0);
        let b = loss_bal(&mut g, one, two, 1.0, 0.0).unwrap();
        assert_eq!(g.scalar(b), 1.0);
    }

    fn margin_of(h: &[f64], ll: f64, lu: f64) -> Result<f64> {
        let mut g = Graph::new();
        let v = g.input(&[h.len()], h.to_vec(), false)?;
        let m = margin_terms(&mut g, v, ll, lu)?;
        Ok(g.scalar(m))
    }

    #[test]
    fn margin_cases() {
        assert_eq!(margin_of(&[0.1, 0.5, 0.8], 0.1, 0.8).unwrap(), 0.0);
        assert!((margin_of(&[0.05], 0.1, 0.8).unwrap() + 0.05).abs() < 1e-15);
        assert!((margin_of(&[0.9], 0.1, 0.8).unwrap() + 0.1).abs() < 1e-15);
        // per-sample hinge, then mean
        assert!((margin_of(&[0.05, 0.9, 0.5], 0.1, 0.8).unwrap() + 0.15 / 3.0).abs() < 1e-15);
        assert!(matches!(margin_of(&[0.5], 0.8, 0.1), Err(Error::Config(_))));
        assert!(matches!(margin_of(&[0.5], -0.1, 0.8), Err(Error::Config(_))));
        assert_eq!(margin_penalty(0.05, 0.1, 0.8), -(0.1f64 - 0.05));
    }

    fn two_pass_stats(x: &Tensor, eps: f64) -> (Vec<f64>, Vec<f64>) {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        for j in 0..d {
            mean[j] = (0..n).map(|i| x.row(i)[j]).sum::<f64>() / n as f64;
        }
        let std = (0..d)
            .map(|j| ((0..n).map(|i| (x.row(i)[j] - mean[j]).powi(2)).sum::<f64>() / n as f64 + eps).sqrt())
            .collect();
        (mean, std)
    }

    #[test]
    fn bns_cases() {
        let x = rows(&[vec![1.0, 2.0], vec![3.0, 6.0]]);
        let eps = 1e-5;
        let (mean, std) = two_pass_stats(&x, eps);
        let run = |stats: BnStats, x: &Tensor| {
            let mut g = Graph::new();
            let v = g.constant(x);
            let l = loss_bns(&mut g, &[v], &[stats]).unwrap();
            g.scalar(l)
        };
        assert_eq!(
            run(
                BnStats {
                    mean: mean.clone(),
                    std: std.clone(),
                    eps
                },
                &x
            ),
            0.0
        );
        let shifted = BnStats {
            mean: vec![mean[0] - 1.0, mean[1]],
            std: std.clone(),
            eps,
        };
        assert!((run(shifted, &x) - 1.0).abs() < 1e-15);

        let mut g = Graph::new();
        let v = g.constant(&rows(&[vec![1.0, 2.0]]));
        let st = BnStats {
            mean: vec![0.0; 2],
            std: vec![1.0; 2],
            eps,
        };
        assert!(matches!(loss_bns(&mut g, &[v], &[st]), Err(Error::Contract(_))));
    }

    #[test]
    fn bns_matches_independent_statistics() {
        let mut rng = SeededRng::new(21);
        for _ in 0..5 {
            let a = Tensor::new(vec![7, 3], (0..21).map(|_| rng.normal() * 2.0 + 0.5).collect()).unwrap();
            let b = Tensor::new(vec![7, 5], (0..35).map(|_| rng.normal()).collect()).unwrap();
            let refs: Vec<BnStats> = [3, 5]
                .iter()
                .map(|&d| BnStats {
                    mean: (0..d).map(|_| rng.normal()).collect(),
                    std: (0..d).map(|_| 0.5 + rng.uniform()).collect(),
                    eps: 1e-5,
                })
                .collect();
            let mut expected = 0.0;
            for (x, r) in [&a, &b].iter().zip(&refs) {
                let (m, s) = two_pass_stats(x, r.eps);
                expected += m.iter().zip(&r.mean).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
                expected += s.iter().zip(&r.std).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
            }
            let mut g = Graph::new();
            let (va, vb) = (g.constant(&a), g.constant(&b));
            let l = loss_bns(&mut g, &[va, vb], &refs).unwrap();
            assert!((g.scalar(l) - expected).abs() < 1e-10);
        }
    }

    fn objective_value(
        zp: &Tensor,
        zq: &Tensor,
        y: &Tensor,
        bn: &[Tensor],
        stats: &[BnStats],
        hp: &GameHyperparams,
    ) -> f64 {
        let mut g = Graph::new();
        let (p, q, yv) = (g.constant(zp), g.constant(zq), g.constant(y));
        let bns: Vec<Var> = bn.iter().map(|t| g.constant(t)).collect();
        let obj = generator_objective(&mut g, p, q, yv, &bns, stats, hp).unwrap();
        g.scalar(obj.total)
    }

    #[test]
    fn generator_objective_dead_zone_and_isolation() {
        let hp = GameHyperparams {
            beta: 0.0,
            gamma: 0.0,
            ..Default::default()
        };
        let y = one_hot(&[0, 1, 2], 3).unwrap();
        let bn = [Tensor::zeros(&[3, 2])];
        let stats = [BnStats {
            mean: vec![0.0; 2],
            std: vec![1.0; 2],
            eps: 1e-5,
        }];
        // h_info = [0.5·hmax-ish...]: choose logits so h′ = [0.2-ish, 0.5, 1]
        // sample 0 sets the batch min so its h′ is 0 < λ_l: isolate that term
        let zp = rows(&[vec![3.0, 0.0, 0.0], vec![0.5, 0.0, 0.0], vec![0.0, 0.0, 0.0]]);
        let zq = Tensor::zeros(&[3, 3]);
        let batch = AdaptabilityBatch::compute(&zp, &zq, &y).unwrap();
        let expected: f64 = batch
            .h_prime
            .iter()
            .map(|h| margin_penalty(*h, hp.lambda_l, hp.lambda_u))
            .sum::<f64>()
            / 3.0;
        let v = objective_value(&zp, &zq, &y, &bn, &stats, &hp);
        assert!((v - expected).abs() < 1e-15);
        assert!(v < 0.0);

        // all inside margin → exactly 0: use a degenerate batch plus λ_l = 0
        let hp0 = GameHyperparams { lambda_l: 0.0, ..hp };
        let flat = rows(&[vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]);
        assert_eq!(objective_value(&flat, &zq, &y, &bn, &stats, &hp0), 0.0);
    }

    #[test]
    fn generator_objective_composes_its_terms() {
        let mut rng = SeededRng::new(33);
        let b = 8;
        let zp = Tensor::new(vec![b, 4], (0..b * 4).map(|_| 2.0 * rng.normal()).collect()).unwrap();
        let zq = Tensor::new(vec![b, 4], (0..b * 4).map(|_| 2.0 * rng.normal()).collect()).unwrap();
        let labels: Vec<usize> = (0..b).map(|_| rng.below(4)).collect();
        let y = one_hot(&labels, 4).unwrap();
        let bn = [Tensor::new(vec![b, 3], (0..b * 3).map(|_| rng.normal()).collect()).unwrap()];
        let stats = [BnStats {
            mean: vec![0.1, -0.2, 0.3],
            std: vec![1.1, 0.9, 1.0],
            eps: 1e-5,
        }];
        let hp = GameHyperparams::default();

        let batch = AdaptabilityBatch::compute(&zp, &zq, &y).unwrap();
        let margin = batch
            .h_prime
            .iter()
            .map(|h| margin_penalty(*h, hp.lambda_l, hp.lambda_u))
            .sum::<f64>()
            / b as f64;
        let l_ds = cross_entropy_of_probs(&batch.p_ds, &labels).unwrap();
        let l_as = cross_entropy_of_probs(&batch.p_as, &labels).unwrap();
        let (m, s) = two_pass_stats(&bn[0], 1e-5);
        let l_bns: f64 = m.iter().zip(&stats[0].mean).map(|(p, q)| (p - q).powi(2)).sum::<f64>()
            + s.iter().zip(&stats[0].std).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
        let expected = margin - hp.beta * (hp.alpha_ds * l_ds + hp.alpha_as * l_as) - hp.gamma * l_bns;
        let v = objective_value(&zp, &zq, &y, &bn, &stats, &hp);
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }

    #[test]
    fn calibration_objective_cases() {
        // sample 0 aligned (h′ = 1), sample 1 the batch minimum (h′ = 0)
        let zp = rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 0.0, 0.0]]);
        let zq = rows(&[vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 0.0]]);
        let mut g = Graph::new();
        let (p, q) = (g.constant(&zp), g.constant(&zq));
        let obj = calibration_objective(&mut g, p, q).unwrap();
        let hp = g.value(obj.h_prime);
        assert!((hp[0] - 1.0).abs() < 1e-15 && hp[1] == 0.0, "{hp:?}");
        assert!((g.scalar(obj.total) - 0.5).abs() < 1e-15);

        let mut rng = SeededRng::new(4);
        let zp = Tensor::new(vec![6, 5], (0..30).map(|_| rng.normal()).collect()).unwrap();
        let zq = Tensor::new(vec![6, 5], (0..30).map(|_| rng.normal()).collect()).unwrap();
        let h = info_entropy(&p_ds_of(&zp, &zq)).unwrap();
        let hn = normalize_entropy_values(&h, 5f64.ln());
        let expected = 1.0 - hn.iter().sum::<f64>() / 6.0;
        let mut g = Graph::new();
        let (p, q) = (g.constant(&zp), g.constant(&zq));
        let obj = calibration_objective(&mut g, p, q).unwrap();
        assert!((g.scalar(obj.total) - expected).abs() < 1e-14);
    }

    #[test]
    fn entropy_rises_as_logits_converge() {
        let zp = [2.0, -1.0, 0.5, 0.0];
        let zq = [-1.0, 1.5, 0.0, 0.3];
        let mut last = -1.0;
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            let q: Vec<f64> = zq.iter().zip(&zp).map(|(a, b)| a + t * (b - a)).collect();
            let h = info_entropy(&p_ds_of(&rows(&[zp.to_vec()]), &rows(&[q]))).unwrap()[0];
            assert!(h > last - 1e-15, "not monotone at t={t}");
            last = h;
        }
        assert!((last - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hyperparam_validation() {
        assert!(GameHyperparams::default().validate().is_ok());
        assert!(GameHyperparams {
            lambda_l: 0.8,
            lambda_u: 0.8,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(GameHyperparams {
            beta: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(GameHyperparams {
            lambda_l: 0.0,
            lambda_u: 1.0,
            ..Default::default()
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn similarity_matrix_cases() {
        let p = rows(&[vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0], vec![0.1, 0.2, 0.7]]);
        let m = l1_similarity_matrix(&p);
        assert_eq!(m[0][0], 0.0);
        assert_eq!(m[0][1], 0.0);
        assert!((m[0][2] - (0.4 + 0.3 + 0.7)).abs() < 1e-15);
        assert_eq!(m[2][0], m[0][2]);
    }

    #[test]
    fn losses_pass_gradient_checks() {
        let mut rng = SeededRng::new(77);
        let (b, c) = (4, 3);
        let zp = Tensor::new(vec![b, c], (0..b * c).map(|_| rng.normal()).collect()).unwrap();
        let zq = Tensor::new(vec![b, c], (0..b * c).map(|_| rng.normal()).collect()).unwrap();
        let y = one_hot(&[0, 2, 1, 1], c).unwrap();
        let err = check_gradients(
            |g, v| {
                let yv = g.constant(&y);
                let a = loss_ds(g, v[0], v[1], yv)?;
                let s = loss_as(g, v[0], v[1], yv)?;
                loss_bal(g, a, s, 0.2, 0.1)
            },
            &[zp.clone(), zq.clone()],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
        // the batch minimum is detached, so the check pins it
        let h = info_entropy(&p_ds_of(&zp, &zq)).unwrap();
        let floor = h.iter().copied().fold(f64::INFINITY, f64::min) - 0.05;
        let err = check_gradients(
            |g, v| Ok(calibration_objective_with_floor(g, v[0], v[1], Some(floor))?.total),
            &[zp, zq],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
