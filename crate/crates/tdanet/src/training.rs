//! Permutation-invariant SI-SNR training: the loss (in both differentiable
//! and plain-scalar form), Adam, gradient clipping, the patience-based
//! learning-rate schedule, and the training loop.

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::MixtureExample;
use crate::layers::ForwardCtx;
use crate::model::{derive_seed, save_checkpoint, ParamStore, TdaNet, TrainerState};
use crate::numerics::{no_grad, Scalar, Tensor};
use crate::{Error, Result};

/// SI-SNR numerical conventions, shared between training and evaluation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SiSnrOptions {
    /// Remove the mean of both signals before projecting. The bare formula
    /// omits this; the flag defaults on to match common practice.
    pub zero_mean: bool,
    /// Symmetric clamp in dB, so exact matches stay finite.
    pub clamp_db: f64,
    /// Energy floor in the projection denominators.
    pub eps: f64,
}

impl Default for SiSnrOptions {
    fn default() -> Self {
        SiSnrOptions {
            zero_mean: true,
            clamp_db: 60.0,
            eps: 1e-8,
        }
    }
}

impl SiSnrOptions {
    pub fn raw() -> Self {
        SiSnrOptions {
            zero_mean: false,
            ..SiSnrOptions::default()
        }
    }
}

/// The projection split behind an SI-SNR value: the (possibly zero-meaned)
/// estimate equals `target_part + noise_part` exactly, element by element.
#[derive(Debug, Clone)]
pub struct SiSnrTerms {
    /// Projection of the estimate onto the target direction.
    pub target_part: Vec<f64>,
    /// Residual left over after the projection.
    pub noise_part: Vec<f64>,
    pub db: f64,
}

/// SI-SNR with its projection decomposition exposed.
pub fn si_snr_terms(estimate: &[f64], target: &[f64], opts: &SiSnrOptions) -> Result<SiSnrTerms> {
    if estimate.len() != target.len() {
        return Err(Error::Input(format!(
            "si_snr length mismatch: {} vs {}",
            estimate.len(),
            target.len()
        )));
    }
    if target.iter().all(|v| *v == 0.0) {
        return Err(Error::Input("si_snr target is identically zero".into()));
    }
    let n = estimate.len() as f64;
    let (est, tgt): (Vec<f64>, Vec<f64>) = if opts.zero_mean {
        let me = estimate.iter().sum::<f64>() / n;
        let mt = target.iter().sum::<f64>() / n;
        (
            estimate.iter().map(|v| v - me).collect(),
            target.iter().map(|v| v - mt).collect(),
        )
    } else {
        (estimate.to_vec(), target.to_vec())
    };
    let dot: f64 = est.iter().zip(&tgt).map(|(a, b)| a * b).sum();
    let tgt_energy: f64 = tgt.iter().map(|v| v * v).sum();
    let coeff = dot / (tgt_energy + opts.eps);
    let mut target_part = Vec::with_capacity(est.len());
    let mut noise_part = Vec::with_capacity(est.len());
    let mut a_energy = 0.0;
    let mut e_energy = 0.0;
    for (e, t) in est.iter().zip(&tgt) {
        let a = coeff * t;
        let r = e - a;
        a_energy += a * a;
        e_energy += r * r;
        target_part.push(a);
        noise_part.push(r);
    }
    // The floor lives only in the projection coefficient: the energy ratio
    // itself stays exactly scale-invariant. Degenerate estimates hit the
    // clamp rails instead of dividing by zero.
    let db = if a_energy == 0.0 {
        -opts.clamp_db
    } else if e_energy == 0.0 {
        opts.clamp_db
    } else {
        (10.0 / std::f64::consts::LN_10 * (a_energy.ln() - e_energy.ln()))
            .clamp(-opts.clamp_db, opts.clamp_db)
    };
    Ok(SiSnrTerms {
        target_part,
        noise_part,
        db,
    })
}

/// Scale-invariant SNR in dB between plain slices. Scalar twin of
/// [`si_snr_graph`]; also the oracle path used for metric alignment.
pub fn si_snr(estimate: &[f64], target: &[f64], opts: &SiSnrOptions) -> Result<f64> {
    Ok(si_snr_terms(estimate, target, opts)?.db)
}

/// Differentiable SI-SNR of a graph tensor against a constant target.
pub fn si_snr_graph<T: Scalar>(
    estimate: &Tensor<T>,
    target: &[T],
    opts: &SiSnrOptions,
) -> Result<Tensor<T>> {
    if estimate.numel() != target.len() {
        return Err(Error::Input(format!(
            "si_snr length mismatch: {} vs {}",
            estimate.numel(),
            target.len()
        )));
    }
    if target.iter().all(|v| *v == T::zero()) {
        return Err(Error::Input("si_snr target is identically zero".into()));
    }
    let n = target.len();
    let shape = estimate.shape();

    let tgt: Vec<T> = if opts.zero_mean {
        let mean = target.iter().fold(0.0, |a, v| a + v.to_f64_lossy()) / n as f64;
        target.iter().map(|v| *v - T::from_f64(mean)).collect()
    } else {
        target.to_vec()
    };
    let tgt_energy: f64 = tgt.iter().map(|v| v.to_f64_lossy().powi(2)).sum();
    let tgt_t = Tensor::from_vec(tgt, &shape);

    let est = if opts.zero_mean {
        estimate.sub_scalar_t(&estimate.mean_all())?
    } else {
        estimate.clone()
    };

    let dot = est.mul(&tgt_t)?.sum_all();
    let coeff = dot.scale(T::from_f64(1.0 / (tgt_energy + opts.eps)));
    let projection = tgt_t.mul_scalar_t(&coeff)?;
    let residual = est.sub(&projection)?;
    let num = projection.mul(&projection)?.sum_all();
    let den = residual.mul(&residual)?.sum_all();
    // Degenerate cases sit on a clamp rail where the gradient is zero, so a
    // constant is the correct (and finite) value there.
    if num.item() == T::zero() {
        return Ok(Tensor::scalar(T::from_f64(-opts.clamp_db)));
    }
    if den.item() == T::zero() {
        return Ok(Tensor::scalar(T::from_f64(opts.clamp_db)));
    }
    let db = num
        .ln()
        .sub(&den.ln())?
        .scale(T::from_f64(10.0 / std::f64::consts::LN_10));
    Ok(db.clamp(T::from_f64(-opts.clamp_db), T::from_f64(opts.clamp_db)))
}

/// Lexicographic permutations of `0..c` (identity first).
pub fn permutations(c: usize) -> Vec<Vec<usize>> {
    fn rec(remaining: &mut Vec<usize>, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if remaining.is_empty() {
            out.push(current.clone());
            return;
        }
        for i in 0..remaining.len() {
            let v = remaining.remove(i);
            current.push(v);
            rec(remaining, current, out);
            current.pop();
            remaining.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut (0..c).collect(), &mut Vec::new(), &mut out);
    out
}

/// Permutation-invariant loss: the minimum over speaker assignments of the
/// mean negative SI-SNR. Gradients flow only through the winning assignment;
/// ties go to the first permutation enumerated (the identity first).
pub fn pit_loss<T: Scalar>(
    estimates: &[Tensor<T>],
    targets: &[Vec<T>],
    opts: &SiSnrOptions,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let c = estimates.len();
    if c != targets.len() || c == 0 {
        return Err(Error::Input(format!(
            "pit_loss needs matching speaker counts, got {} estimates and {} targets",
            c,
            targets.len()
        )));
    }
    if c > 4 {
        return Err(Error::Input(format!(
            "pit_loss enumerates permutations exhaustively; C={c} exceeds the supported 4"
        )));
    }
    // Pairwise SI-SNR graph nodes, shared across permutations.
    let mut pair = vec![Vec::with_capacity(c); c];
    for (i, est) in estimates.iter().enumerate() {
        for tgt in targets.iter() {
            pair[i].push(si_snr_graph(est, tgt, opts)?);
        }
    }
    let mut best: Option<(f64, Tensor<T>, Vec<usize>)> = None;
    for perm in permutations(c) {
        let mut acc = pair[0][perm[0]].clone();
        for (i, &p) in perm.iter().enumerate().skip(1) {
            acc = acc.add(&pair[i][p])?;
        }
        let loss = acc.scale(T::from_f64(-1.0 / c as f64));
        let value = loss.item().to_f64_lossy();
        if best.as_ref().is_none_or(|(b, _, _)| value < *b) {
            best = Some((value, loss, perm));
        }
    }
    let (_, loss, perm) = best.unwrap();
    Ok((loss, perm))
}

/// Scalar PIT alignment: best permutation and its mean SI-SNR.
pub fn pit_align(
    estimates: &[Vec<f64>],
    targets: &[Vec<f64>],
    opts: &SiSnrOptions,
) -> Result<(f64, Vec<usize>)> {
    let c = estimates.len();
    if c != targets.len() || c == 0 {
        return Err(Error::Input("pit_align needs matching speaker counts".into()));
    }
    let mut pair = vec![vec![0.0; c]; c];
    for i in 0..c {
        for j in 0..c {
            pair[i][j] = si_snr(&estimates[i], &targets[j], opts)?;
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(c) {
        let mean = perm.iter().enumerate().map(|(i, &p)| pair[i][p]).sum::<f64>() / c as f64;
        if best.as_ref().is_none_or(|(b, _)| mean > *b) {
            best = Some((mean, perm));
        }
    }
    Ok(best.unwrap())
}

/// Optimizer, schedule, and loop configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub lr_halve_patience: usize,
    pub early_stop_patience: usize,
    pub grad_clip_l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub si_snr_zero_mean: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            lr_halve_patience: 15,
            early_stop_patience: 30,
            grad_clip_l2: 5.0,
            batch_size: 1,
            max_epochs: 100,
            seed: 0,
            si_snr_zero_mean: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.lr_halve_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config("patience values must be positive".into()));
        }
        if self.grad_clip_l2 <= 0.0 {
            return Err(Error::Config("grad_clip_l2 must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn si_snr_options(&self) -> SiSnrOptions {
        SiSnrOptions {
            zero_mean: self.si_snr_zero_mean,
            ..SiSnrOptions::default()
        }
    }
}

/// Adam with bias correction. Moment estimates are kept in f64 regardless of
/// the parameter precision.
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new<T: Scalar>(params: &ParamStore<T>, cfg: &TrainConfig) -> Self {
        let shapes: Vec<usize> = params.iter().map(|(_, t)| t.numel()).collect();
        Adam {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }

    /// One update over every parameter. Missing gradients count as zero; a
    /// non-finite gradient aborts with a diagnostic naming the tensor.
    pub fn step<T: Scalar>(&mut self, params: &ParamStore<T>, lr: f64) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (idx, (name, tensor)) in params.iter().enumerate() {
            let grad = tensor.grad();
            let mut data: Vec<f64> = tensor.to_vec().iter().map(|v| v.to_f64_lossy()).collect();
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..data.len() {
                let g = grad
                    .as_ref()
                    .map(|g| g[i].to_f64_lossy())
                    .unwrap_or(0.0);
                if !g.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient in `{name}` at element {i}"
                    )));
                }
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            tensor.set_data(data.into_iter().map(T::from_f64).collect());
        }
        Ok(())
    }
}

/// Scales every gradient so the global L2 norm does not exceed `max_l2`.
/// Returns the applied factor (1 when no clipping engages).
pub fn clip_grads<T: Scalar>(params: &ParamStore<T>, max_l2: f64) -> f64 {
    let mut sq = 0.0f64;
    for (_, tensor) in params.iter() {
        if let Some(g) = tensor.grad() {
            sq += g.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>();
        }
    }
    let norm = sq.sqrt();
    if norm <= max_l2 || norm == 0.0 {
        return 1.0;
    }
    let factor = max_l2 / norm;
    let f = T::from_f64(factor);
    for (_, tensor) in params.iter() {
        tensor.scale_grad(f);
    }
    factor
}

/// What the schedule decided after observing one validation value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleDecision {
    pub improved: bool,
    pub halved: bool,
    pub stop: bool,
}

/// Patience tracker: halves the learning rate after each run of
/// `halve_patience` non-improving epochs and stops after
/// `stop_patience` of them.
pub struct ScheduleTracker {
    pub lr: f64,
    pub best: f64,
    pub epochs_since_best: usize,
    halve_patience: usize,
    stop_patience: usize,
}

impl ScheduleTracker {
    pub fn new(lr: f64, halve_patience: usize, stop_patience: usize) -> Self {
        ScheduleTracker {
            lr,
            best: f64::INFINITY,
            epochs_since_best: 0,
            halve_patience,
            stop_patience,
        }
    }

    pub fn observe(&mut self, val_loss: f64) -> ScheduleDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.epochs_since_best = 0;
            return ScheduleDecision {
                improved: true,
                halved: false,
                stop: false,
            };
        }
        self.epochs_since_best += 1;
        if self.epochs_since_best >= self.stop_patience {
            return ScheduleDecision {
                improved: false,
                halved: false,
                stop: true,
            };
        }
        let halved = self.epochs_since_best.is_multiple_of(self.halve_patience);
        if halved {
            self.lr /= 2.0;
        }
        ScheduleDecision {
            improved: false,
            halved,
            stop: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub wall_time_s: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub checkpoint: std::path::PathBuf,
}

fn append_log(path: &Path, record: &EpochRecord) -> Result<()> {
    let fresh = !path.exists();
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    if fresh {
        writeln!(file, "epoch,train_loss,val_loss,lr,wall_time_s").map_err(|e| Error::io(path, e))?;
    }
    writeln!(
        file,
        "{},{:.6},{:.6},{},{:.3}",
        record.epoch, record.train_loss, record.val_loss, record.lr, record.wall_time_s
    )
    .map_err(|e| Error::io(path, e))
}

/// Mean validation PIT loss (negative mean SI-SNR), computed without a tape.
pub fn validation_loss(model: &TdaNet<f32>, val: &[MixtureExample], opts: &SiSnrOptions) -> Result<f64> {
    let mut total = 0.0;
    for ex in val {
        let estimates = model.separate(&ex.mixture)?;
        let est64: Vec<Vec<f64>> = estimates
            .iter()
            .map(|s| s.iter().map(|v| *v as f64).collect())
            .collect();
        let tgt64: Vec<Vec<f64>> = ex
            .sources
            .iter()
            .map(|s| s.iter().map(|v| *v as f64).collect())
            .collect();
        let (mean_si_snr, _) = pit_align(&est64, &tgt64, opts)?;
        total += -mean_si_snr;
    }
    Ok(total / val.len() as f64)
}

/// Full training loop: shuffled single-pass epochs, per-batch Adam steps with
/// global-norm clipping, patience-based LR halving and early stopping, an
/// append-only CSV log, and a `best` checkpoint in `out_dir`.
///
/// `resume` carries the trainer state of a previous run; epoch numbering
/// continues from it.
pub fn train_loop(
    model: &TdaNet<f32>,
    train: &[MixtureExample],
    val: &[MixtureExample],
    cfg: &TrainConfig,
    out_dir: &Path,
    resume: Option<TrainerState>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config(
            "training requires non-empty train and validation splits".into(),
        ));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = out_dir.join("train_log.csv");
    let ckpt_path = out_dir.join("checkpoint.json");
    let opts = cfg.si_snr_options();

    let mut adam = Adam::new(model.params(), cfg);
    let mut tracker = ScheduleTracker::new(cfg.lr, cfg.lr_halve_patience, cfg.early_stop_patience);
    let mut start_epoch = 0usize;
    if let Some(state) = &resume {
        tracker.lr = state.lr;
        tracker.best = state.best_val_loss;
        tracker.epochs_since_best = state.epochs_since_best;
        start_epoch = state.epoch + 1;
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "data"));
    let mut records = Vec::new();
    let mut best_epoch = start_epoch;
    let mut stopped_early = false;

    for epoch in start_epoch..start_epoch + cfg.max_epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut ctx = ForwardCtx::training(derive_seed(cfg.seed, &format!("dropout.{epoch}")));
        let mut train_loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.params().zero_grads();
            for &idx in batch {
                let ex = &train[idx];
                let estimates = model.separate_tensors(&ex.mixture, &mut ctx)?;
                let (loss, _) = pit_loss(&estimates, &ex.sources, &opts)?;
                train_loss_sum += loss.item() as f64;
                loss.backward()?;
            }
            if batch.len() > 1 {
                let f = 1.0 / batch.len() as f64;
                for (_, t) in model.params().iter() {
                    t.scale_grad(f as f32);
                }
            }
            clip_grads(model.params(), cfg.grad_clip_l2);
            adam.step(model.params(), tracker.lr)?;
        }
        let train_loss = train_loss_sum / train.len() as f64;

        let val_loss = no_grad(|| validation_loss(model, val, &opts))?;
        let lr_before = tracker.lr;
        let decision = tracker.observe(val_loss);

        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr: lr_before,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        append_log(&log_path, &record)?;
        records.push(record);

        if decision.improved {
            best_epoch = epoch;
            let state = TrainerState {
                epoch,
                lr: tracker.lr,
                best_val_loss: tracker.best,
                epochs_since_best: 0,
            };
            save_checkpoint(model, &ckpt_path, Some(state))?;
            std::fs::write(
                out_dir.join("best"),
                format!("epoch={epoch}\nval_loss={val_loss:.6}\n"),
            )
            .map_err(|e| Error::io(out_dir.join("best"), e))?;
        }
        if decision.stop {
            stopped_early = true;
            break;
        }
    }

    Ok(TrainOutcome {
        records,
        best_epoch,
        best_val_loss: tracker.best,
        stopped_early,
        checkpoint: ckpt_path,
    })
}
