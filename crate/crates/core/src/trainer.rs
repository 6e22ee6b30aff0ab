//! Wasserstein training with gradient penalty, Adam, temperature annealing
//! and the two early-stopping rules (validation link prediction or target
//! edge overlap).

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembler::{assemble_graph, scores_for_pairs, symmetrize, ScoreMatrix};
use crate::autodiff::{gradient_penalty_with_metric, Tape, Var};
use crate::error::{Error, Result};
use crate::evaluator::{average_precision, roc_auc, LabeledScores};
use crate::graph::{edge_overlap, EdgeSplit, Graph};
use crate::model::{
    one_hot, Checkpoint, Critic, Discriminator, DiscriminatorDims, Generator, GeneratorDims, ParamSet,
};
use crate::walker::{add_transitions, WalkConfig, WalkSampler};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StopMode {
    /// Stop once validation AUC + AP has not improved for `patience` evaluations.
    Val,
    /// Stop once the assembled graph reaches `target_eo` edge overlap.
    Eo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub l2: f64,
    pub d_steps_per_g: usize,
    pub gp_weight: f64,
    pub tau_start: f64,
    pub tau_min: f64,
    pub tau_every: u64,
    pub tau_decay: f64,
    pub eval_every: u64,
    pub patience: usize,
    pub stop_mode: StopMode,
    pub target_eo: f64,
    /// Sliding-window length in iterations.
    pub window: u64,
    pub seed: u64,
    pub batch_size: usize,
    pub walk_len: usize,
    pub p: f64,
    pub q: f64,
    /// Transitions generated at each evaluation.
    pub eval_transitions: usize,
    pub max_iters: u64,
    /// Wall-clock budget in seconds; the best state so far is returned when
    /// it runs out.
    pub time_budget_secs: Option<f64>,
    pub latent_dim: usize,
    pub gen_hidden: usize,
    pub gen_down_dim: usize,
    pub disc_hidden: usize,
    pub disc_down_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            l2: 1e-6,
            d_steps_per_g: 5,
            gp_weight: 10.0,
            tau_start: 1.0,
            tau_min: 0.5,
            tau_every: 500,
            tau_decay: 0.995,
            eval_every: 500,
            patience: 5,
            stop_mode: StopMode::Val,
            target_eo: 0.5,
            window: 1000,
            seed: 0,
            batch_size: 128,
            walk_len: 16,
            p: 1.0,
            q: 1.0,
            eval_transitions: 150_000,
            max_iters: 200_000,
            time_budget_secs: None,
            latent_dim: 16,
            gen_hidden: 40,
            gen_down_dim: 64,
            disc_hidden: 30,
            disc_down_dim: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.d_steps_per_g == 0 {
            return bad("at least one critic step per generator step is required");
        }
        if !(self.tau_start > 0.0 && self.tau_min > 0.0 && self.tau_decay > 0.0 && self.tau_decay <= 1.0) {
            return bad("temperature schedule must be positive and non-increasing");
        }
        if self.eval_every == 0 || self.tau_every == 0 {
            return bad("evaluation and annealing intervals must be positive");
        }
        if self.walk_config().validate().is_err() {
            return bad("invalid walk settings");
        }
        if self.stop_mode == StopMode::Eo && !(0.0..=1.0).contains(&self.target_eo) {
            return bad("target edge overlap must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn walk_config(&self) -> WalkConfig {
        WalkConfig {
            walk_len: self.walk_len,
            p: self.p,
            q: self.q,
            batch_size: self.batch_size,
        }
    }

    /// Temperature in effect after `iteration` completed iterations.
    pub fn tau_at(&self, iteration: u64) -> f64 {
        let steps = (iteration / self.tau_every) as i32;
        (self.tau_start * self.tau_decay.powi(steps)).max(self.tau_min)
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let zeros: Vec<Array2<f64>> = params.iter().map(|p| Array2::zeros(p.value.dim())).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, params: &mut ParamSet, grads: &[Array2<f64>]) {
        assert_eq!(grads.len(), self.m.len(), "gradient count does not match parameters");
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let lr = self.lr;
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut p.value).and(g).and(m).and(v).for_each(|w, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

/// Gradient values with the L2 term `2·l2·θ` added for decayed parameters.
fn collect_grads(tape: &Tape, loss: Var, vars: &[Var], params: &ParamSet, l2: f64) -> Result<Vec<Array2<f64>>> {
    let mut grads = tape.grad_values(loss, vars)?;
    for (g, p) in grads.iter_mut().zip(params.iter()) {
        if p.decay && l2 != 0.0 {
            g.scaled_add(2.0 * l2, &p.value);
        }
    }
    Ok(grads)
}

fn diverged(what: &str, params: &ParamSet) -> Error {
    let last = params.iter().last().expect("models have parameters");
    let max_abs = last.value.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mean = last.value.mean().unwrap_or(f64::NAN);
    Error::InvalidArgument(format!(
        "{what} loss is not finite; last layer `{}` has mean {mean:.4e}, max |w| {max_abs:.4e}",
        last.name
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticReport {
    pub loss: f64,
    pub wasserstein: f64,
    pub penalty: f64,
}

/// One critic update:
/// `mean D(fake) − mean D(real) + gp_weight·GP(x̂) + l2·‖θ_D‖²`, where `x̂`
/// interpolates real and fake walks with one `ε ~ U(0,1)` per walk.
pub fn critic_step<C: Critic, R: Rng + ?Sized>(
    critic: &mut C,
    adam: &mut Adam,
    real: &[Array2<f64>],
    fake: &[Array2<f64>],
    gp_weight: f64,
    l2: f64,
    rng: &mut R,
) -> Result<CriticReport> {
    assert_eq!(real.len(), fake.len(), "real and fake walks differ in length");
    let batch = real[0].nrows();
    let eps: Vec<f64> = (0..batch).map(|_| rng.random::<f64>()).collect();

    let tape = Tape::new();
    let vars = critic.params().track(&tape);
    let embed = |xs: &[Array2<f64>]| -> Vec<Var> {
        xs.iter().map(|x| critic.embed(&tape, &vars, tape.constant(x.clone()))).collect()
    };
    let real_in = embed(real);
    let fake_in = embed(fake);
    let mixed: Vec<Array2<f64>> = real
        .iter()
        .zip(fake)
        .map(|(r, f)| {
            let mut x = f.clone();
            for (b, mut row) in x.rows_mut().into_iter().enumerate() {
                let e = eps[b];
                row.zip_mut_with(&r.row(b), |f, &r| *f = e * r + (1.0 - e) * *f);
            }
            x
        })
        .collect();
    // The penalty differentiates with respect to the embedded inputs; for
    // the identity embedding those must be tracked leaves.
    let mixed_in: Vec<Var> = mixed
        .into_iter()
        .map(|x| critic.embed(&tape, &vars, tape.var(x)))
        .collect();

    let real_score = tape.mean(critic.score_embedded(&tape, &vars, &real_in));
    let fake_score = tape.mean(critic.score_embedded(&tape, &vars, &fake_in));
    let wasserstein = tape.sub(fake_score, real_score);
    let mixed_total = tape.sum(critic.score_embedded(&tape, &vars, &mixed_in));
    let metric = critic.embed_metric(&tape, &vars);
    let penalty = gradient_penalty_with_metric(&tape, mixed_total, &mixed_in, metric)?;
    let loss = tape.add(wasserstein, tape.scale(penalty, gp_weight));

    let l2_term = l2 * critic.params().l2_norm_sq();
    let loss_value = tape.scalar_value(loss) + l2_term;
    if !loss_value.is_finite() || tape.ensure_finite().is_err() {
        return Err(diverged("critic", critic.params()));
    }
    let grads = collect_grads(&tape, loss, &vars, critic.params(), l2)?;
    adam.update(critic.params_mut(), &grads);
    Ok(CriticReport {
        loss: loss_value,
        wasserstein: tape.scalar_value(wasserstein),
        penalty: tape.scalar_value(penalty),
    })
}

/// One generator update on `−mean D(fake) + l2·‖θ_G‖²`, differentiating
/// through the straight-through samples.
#[allow(clippy::too_many_arguments)]
pub fn generator_step<C: Critic, R: Rng + ?Sized>(
    generator: &mut Generator,
    critic: &C,
    adam: &mut Adam,
    batch: usize,
    walk_len: usize,
    tau: f64,
    l2: f64,
    rng: &mut R,
) -> Result<f64> {
    let tape = Tape::new();
    let vars = generator.params.track(&tape);
    let critic_vars = critic.params().freeze(&tape);
    let z = generator.sample_latent(batch, rng);
    let walks = generator.unroll(&tape, &vars, &z, walk_len, tau, Some(rng))?;
    let score = tape.mean(critic.score(&tape, &critic_vars, &walks.inputs));
    let loss = tape.neg(score);
    let loss_value = tape.scalar_value(loss) + l2 * generator.params.l2_norm_sq();
    if !loss_value.is_finite() || tape.ensure_finite().is_err() {
        return Err(diverged("generator", &generator.params));
    }
    let grads = collect_grads(&tape, loss, &vars, &generator.params, l2)?;
    adam.update(&mut generator.params, &grads);
    Ok(loss_value)
}

/// Transition counts of walks generated during the last `window` iterations,
/// kept as per-evaluation deltas so eviction touches only the expired delta.
#[derive(Clone, Debug)]
pub struct TransitionWindow {
    window: u64,
    deltas: VecDeque<(u64, ScoreMatrix)>,
    total: ScoreMatrix,
}

impl TransitionWindow {
    pub fn new(n: usize, window: u64) -> Self {
        TransitionWindow {
            window,
            deltas: VecDeque::new(),
            total: ScoreMatrix::new(n),
        }
    }

    /// Adds counts generated at `iteration` and evicts deltas older than the
    /// window.
    pub fn push(&mut self, iteration: u64, delta: ScoreMatrix) {
        self.total.merge(&delta);
        self.deltas.push_back((iteration, delta));
        while let Some((it, _)) = self.deltas.front() {
            if it + self.window > iteration {
                break;
            }
            let (_, old) = self.deltas.pop_front().expect("front exists");
            self.total.remove(&old);
        }
    }

    pub fn counts(&self) -> &ScoreMatrix {
        &self.total
    }

    /// Iterations of the deltas currently held.
    pub fn iterations(&self) -> impl Iterator<Item = u64> + '_ {
        self.deltas.iter().map(|(it, _)| *it)
    }
}

/// Generates walks in parallel batches with seeds drawn from `rng` and
/// returns their transition counts, merged in seed order.
pub fn generate_counts<R: Rng + ?Sized>(
    generator: &Generator,
    walks: usize,
    walk_len: usize,
    batch: usize,
    rng: &mut R,
) -> Result<ScoreMatrix> {
    let mut jobs = Vec::new();
    let mut left = walks;
    while left > 0 {
        let size = left.min(batch);
        jobs.push((size, rng.random::<u64>()));
        left -= size;
    }
    let parts: Vec<Result<ScoreMatrix>> = jobs
        .par_iter()
        .map(|&(size, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = generator.sample(size, walk_len, &mut rng)?;
            let mut s = ScoreMatrix::new(generator.dims.n);
            add_transitions(&mut s, &w);
            Ok(s)
        })
        .collect();
    let mut total = ScoreMatrix::new(generator.dims.n);
    for part in parts {
        total.merge(&part?);
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: u64,
    /// Mean critic loss since the previous record.
    pub d_loss: f64,
    /// Mean generator loss since the previous record.
    pub g_loss: f64,
    pub tau: f64,
    pub eo: Option<f64>,
    pub val_auc: Option<f64>,
    pub val_ap: Option<f64>,
    pub critic_updates: u64,
    pub generator_updates: u64,
    pub elapsed_secs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    TargetOverlap,
    MaxIterations,
    TimeBudget,
}

pub struct TrainOutcome {
    /// Best state under VAL, final state under EO.
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRecord>,
    pub stop_reason: StopReason,
    /// Window transition counts at the returned checkpoint.
    pub scores: ScoreMatrix,
    /// Iteration of the returned checkpoint.
    pub best_iteration: u64,
    pub warnings: Vec<String>,
}

/// Trains on `split.train`. Validation pairs come from `split`.
pub fn train(split: &EdgeSplit, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(split, cfg, |_, _| {})
}

/// As [`train`], calling `on_eval` with each log record and the generator
/// it was computed from.
pub fn train_with(
    split: &EdgeSplit,
    cfg: &TrainConfig,
    mut on_eval: impl FnMut(&LogRecord, &Generator),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let graph = &split.train;
    if !graph.is_connected() {
        return Err(Error::InvalidArgument("training graph must be connected".into()));
    }
    let val_pairs: Vec<(usize, usize)> = split.val_edges.iter().chain(&split.val_nonedges).copied().collect();
    let val_labels: Vec<bool> = std::iter::repeat_n(true, split.val_edges.len())
        .chain(std::iter::repeat_n(false, split.val_nonedges.len()))
        .collect();
    if cfg.stop_mode == StopMode::Val && (split.val_edges.is_empty() || split.val_nonedges.is_empty()) {
        return Err(Error::InvalidArgument("validation stopping needs held-out edges and non-edges".into()));
    }

    let n = graph.n();
    let mut root = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut generator = Generator::new(
        GeneratorDims {
            n,
            latent_dim: cfg.latent_dim,
            hidden: cfg.gen_hidden,
            down_dim: cfg.gen_down_dim,
            init_width: cfg.gen_hidden,
        },
        &mut ChaCha8Rng::seed_from_u64(root.random()),
    );
    let mut critic = Discriminator::new(
        DiscriminatorDims {
            n,
            hidden: cfg.disc_hidden,
            down_dim: cfg.disc_down_dim,
        },
        &mut ChaCha8Rng::seed_from_u64(root.random()),
    );
    let mut real_walks = WalkSampler::new(graph, cfg.walk_config(), root.random())?;
    let mut step_rng = ChaCha8Rng::seed_from_u64(root.random());
    let mut eval_rng = ChaCha8Rng::seed_from_u64(root.random());
    let mut adam_g = Adam::new(&generator.params, cfg.lr);
    let mut adam_d = Adam::new(&critic.params, cfg.lr);

    let eval_walks = cfg.eval_transitions.div_ceil(cfg.walk_len - 1).max(1);
    let mut window = TransitionWindow::new(n, cfg.window);
    let mut log = Vec::new();
    let mut warnings = Vec::new();
    let started = Instant::now();
    let budget = cfg.time_budget_secs.map(Duration::from_secs_f64);

    let snapshot = |g: &Generator, d: &Discriminator, it: u64| Checkpoint {
        generator: g.clone(),
        discriminator: d.clone(),
        walk_len: cfg.walk_len,
        tau: cfg.tau_at(it),
        iteration: it,
    };
    let mut best: Option<(f64, Checkpoint, ScoreMatrix)> = None;
    let mut stale = 0usize;
    let mut last: Option<(Checkpoint, ScoreMatrix)> = None;
    let (mut d_sum, mut g_sum, mut since) = (0.0, 0.0, 0u64);
    let (mut critic_updates, mut generator_updates) = (0u64, 0u64);
    let mut stop_reason = StopReason::MaxIterations;

    let mut iteration = 0u64;
    while iteration < cfg.max_iters {
        let tau = cfg.tau_at(iteration);
        for _ in 0..cfg.d_steps_per_g {
            let real = one_hot(&real_walks.next_batch()?, n);
            let fake = one_hot(&generator.sample(cfg.batch_size, cfg.walk_len, &mut step_rng)?, n);
            let report = critic_step(&mut critic, &mut adam_d, &real, &fake, cfg.gp_weight, cfg.l2, &mut step_rng)?;
            d_sum += report.loss;
            critic_updates += 1;
        }
        g_sum += generator_step(
            &mut generator,
            &critic,
            &mut adam_g,
            cfg.batch_size,
            cfg.walk_len,
            tau,
            cfg.l2,
            &mut step_rng,
        )?;
        generator_updates += 1;
        since += 1;
        iteration += 1;

        let out_of_time = budget.is_some_and(|b| started.elapsed() >= b);
        if !iteration.is_multiple_of(cfg.eval_every) && !out_of_time && iteration < cfg.max_iters {
            continue;
        }

        let delta = generate_counts(&generator, eval_walks, cfg.walk_len, 1024, &mut eval_rng)?;
        window.push(iteration, delta);
        let scores = symmetrize(window.counts());
        let eo = match assemble_graph(&scores, graph.m(), eval_rng.random()) {
            Ok(g) => Some(edge_overlap(graph, &g)?),
            Err(Error::IsolatedNode(_)) | Err(Error::NotEnoughPairs { .. }) => None,
            Err(e) => return Err(e),
        };
        let (val_auc, val_ap) = if val_pairs.is_empty() {
            (None, None)
        } else {
            let ls = LabeledScores::new(scores_for_pairs(&scores, &val_pairs), val_labels.clone())?;
            (Some(roc_auc(&ls)?), Some(average_precision(&ls)?))
        };
        let record = LogRecord {
            iter: iteration,
            d_loss: d_sum / (since * cfg.d_steps_per_g as u64) as f64,
            g_loss: g_sum / since as f64,
            tau: cfg.tau_at(iteration),
            eo,
            val_auc,
            val_ap,
            critic_updates,
            generator_updates,
            elapsed_secs: started.elapsed().as_secs_f64(),
        };
        on_eval(&record, &generator);
        log.push(record);
        (d_sum, g_sum, since) = (0.0, 0.0, 0);

        let mut done = false;
        match cfg.stop_mode {
            StopMode::Val => {
                let score = val_auc.unwrap_or(0.0) + val_ap.unwrap_or(0.0);
                if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                    best = Some((score, snapshot(&generator, &critic, iteration), scores.clone()));
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= cfg.patience {
                        stop_reason = StopReason::Patience;
                        done = true;
                    }
                }
            }
            StopMode::Eo => {
                if eo.is_some_and(|eo| eo >= cfg.target_eo) {
                    stop_reason = StopReason::TargetOverlap;
                    done = true;
                }
            }
        }
        last = Some((snapshot(&generator, &critic, iteration), scores));
        if done {
            break;
        }
        if out_of_time {
            warnings.push(format!(
                "time budget exhausted after {iteration} iterations; returning best state so far"
            ));
            stop_reason = StopReason::TimeBudget;
            break;
        }
    }

    let (checkpoint, scores) = match (cfg.stop_mode, best) {
        (StopMode::Val, Some((_, ck, s))) => (ck, s),
        _ => last.unwrap_or_else(|| (snapshot(&generator, &critic, iteration), ScoreMatrix::new(n))),
    };
    Ok(TrainOutcome {
        best_iteration: checkpoint.iteration,
        checkpoint,
        log,
        stop_reason,
        scores,
        warnings,
    })
}

/// Trains on a graph without holding out edges (edge-overlap stopping only).
pub fn train_full(graph: &Graph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let split = EdgeSplit {
        train: graph.clone(),
        val_edges: Vec::new(),
        test_edges: Vec::new(),
        val_nonedges: Vec::new(),
        test_nonedges: Vec::new(),
        seed: cfg.seed,
    };
    train(&split, cfg)
}
