//! Variance-preserving diffusion over standardized mirror coordinates,
//! conditioned on truncated outcome labels.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::mirror::{coord_count, from_mirror, to_mirror, MirrorPoint, DEFAULT_EIGEN_CLAMP};
use super::network::{Adam, AdamConfig, ScoreNetwork};
use crate::dataset::{RdmDataset, TruncatedLabel};
use crate::error::{Error, Result};
use crate::qstate::{DensityMatrix, C64};

/// Sin/cos features of the diffusion time.
pub const TIME_FEATURES: usize = 8;

/// Samples denoised together in one forward pass during generation.
const GENERATION_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { hidden: vec![128; 3] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionConfig {
    pub beta_min: f64,
    pub beta_max: f64,
    /// Reverse-process discretization steps.
    pub steps: usize,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Eigenvalue floor of the mirror map.
    pub eigen_clamp: f64,
    /// Smallest training time; avoids the singular `t = 0` end.
    pub t_min: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            beta_min: 0.1,
            beta_max: 10.0,
            steps: 500,
            adam: AdamConfig::default(),
            epochs: 200,
            batch_size: 256,
            seed: 0,
            eigen_clamp: DEFAULT_EIGEN_CLAMP,
            t_min: 1e-3,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.beta_min > 0.0) {
            return bad(format!("beta_min must be positive, got {}", self.beta_min));
        }
        if !(self.beta_max > self.beta_min) || !self.beta_max.is_finite() {
            return bad(format!("beta_max must exceed beta_min, got {}", self.beta_max));
        }
        if self.steps < 10 {
            return bad(format!("need at least 10 steps, got {}", self.steps));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.adam.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.adam.learning_rate));
        }
        if !(self.t_min > 0.0 && self.t_min < 1.0) {
            return bad(format!("t_min must lie in (0, 1), got {}", self.t_min));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        Schedule { beta_min: self.beta_min, beta_max: self.beta_max }
    }
}

/// `β(t) = β_min + t (β_max - β_min)` on `t ∈ [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Schedule {
    pub fn beta(&self, t: f64) -> f64 {
        self.beta_min + t * (self.beta_max - self.beta_min)
    }

    /// `ᾱ(t) = exp(-∫₀ᵗ β)`.
    pub fn alpha_bar(&self, t: f64) -> f64 {
        (-(self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t)).exp()
    }
}

pub fn time_embedding(t: f64) -> [f64; TIME_FEATURES] {
    let mut out = [0.0; TIME_FEATURES];
    for k in 0..TIME_FEATURES / 2 {
        let w = std::f64::consts::PI * (1u32 << k) as f64 * t;
        out[2 * k] = w.sin();
        out[2 * k + 1] = w.cos();
    }
    out
}

fn label_embedding(label: &TruncatedLabel) -> Vec<f64> {
    label.bits().iter().map(|&b| if b == 0 { -1.0 } else { 1.0 }).collect()
}

/// Per-coordinate affine map to zero mean and unit variance.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    /// Weighted moments; a spread below `1e-8` is replaced by 1.
    pub fn fit(points: &[Vec<f64>], weights: &[f64]) -> Result<Self> {
        let dim = points.first().ok_or(Error::EmptyInput)?.len();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyInput);
        }
        let mut mean = vec![0.0; dim];
        for (p, w) in points.iter().zip(weights) {
            mean.iter_mut().zip(p).for_each(|(m, x)| *m += w * x);
        }
        mean.iter_mut().for_each(|m| *m /= total);
        let mut var = vec![0.0; dim];
        for (p, w) in points.iter().zip(weights) {
            var.iter_mut().zip(p.iter().zip(&mean)).for_each(|(v, (x, m))| *v += w * (x - m) * (x - m));
        }
        let std = var.iter().map(|v| (v / total).sqrt()).map(|s| if s < 1e-8 { 1.0 } else { s }).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.std)).map(|(x, (m, s))| (x - m) / s).collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(self.mean.iter().zip(&self.std)).map(|(z, (m, s))| z * s + m).collect()
    }
}

/// Standardized mirror coordinates, label embeddings and sampling weights.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub rdm_dim: usize,
    pub label_len: usize,
    pub standardization: Standardization,
    coords: Vec<Vec<f64>>,
    labels: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TrainingData {
    pub fn from_dataset(dataset: &RdmDataset, eigen_clamp: f64) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyInput);
        }
        let rdm_dim = dataset.records[0].rdm.dim();
        let label_len = dataset.records[0].label.len();
        for r in &dataset.records {
            if r.rdm.dim() != rdm_dim {
                return Err(Error::LengthMismatch { expected: rdm_dim, found: r.rdm.dim() });
            }
            if r.label.len() != label_len {
                return Err(Error::LabelMismatch { expected: label_len, found: r.label.len() });
            }
        }
        let raw: Vec<Vec<f64>> =
            dataset.records.par_iter().map(|r| to_mirror(&r.rdm, eigen_clamp).map(|p| p.coords)).collect::<Result<_>>()?;
        let weights: Vec<f64> = dataset.records.iter().map(|r| r.weight).collect();
        let standardization = Standardization::fit(&raw, &weights)?;
        Ok(Self {
            rdm_dim,
            label_len,
            coords: raw.iter().map(|x| standardization.forward(x)).collect(),
            labels: dataset.records.iter().map(|r| label_embedding(&r.label)).collect(),
            weights,
            standardization,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coord_dim(&self) -> usize {
        coord_count(self.rdm_dim)
    }

    pub fn input_dim(&self) -> usize {
        self.coord_dim() + TIME_FEATURES + self.label_len
    }
}

/// Draws a noised batch: records proportional to weight, `t` uniform on
/// `[t_min, 1]`, Gaussian noise. Returns network inputs and noise targets.
fn noised_batch(
    data: &TrainingData,
    sampler: &WeightedIndex<f64>,
    schedule: Schedule,
    t_min: f64,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let dc = data.coord_dim();
    let mut input = DMatrix::zeros(data.input_dim(), batch);
    let mut target = DMatrix::zeros(dc, batch);
    for b in 0..batch {
        let i = sampler.sample(rng);
        let t = rng.random_range(t_min..=1.0);
        let ab = schedule.alpha_bar(t);
        let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
        let mut col = input.column_mut(b);
        for (k, &x0) in data.coords[i].iter().enumerate() {
            let eps: f64 = rng.sample(StandardNormal);
            target[(k, b)] = eps;
            col[k] = sa * x0 + sn * eps;
        }
        for (k, f) in time_embedding(t).into_iter().enumerate() {
            col[dc + k] = f;
        }
        for (k, &l) in data.labels[i].iter().enumerate() {
            col[dc + TIME_FEATURES + k] = l;
        }
    }
    (input, target)
}

fn sampler_for(data: &TrainingData) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(&data.weights).map_err(|e| Error::InvalidConfig(format!("record weights: {e}")))
}

/// Denoising loss of `network` on one freshly drawn batch.
pub fn batch_loss(network: &ScoreNetwork, data: &TrainingData, config: &DiffusionConfig, batch: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (input, target) = noised_batch(data, &sampler_for(data)?, config.schedule(), config.t_min, batch, &mut rng);
    Ok(network.loss_and_grad(&input, &target).0)
}

/// A trained sampler with everything needed to generate without the data.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub network: ScoreNetwork,
    pub standardization: Standardization,
    pub rdm_dim: usize,
    pub label_len: usize,
    pub schedule: Schedule,
    pub steps: usize,
    /// Mean training loss of each epoch.
    pub loss_trace: Vec<f64>,
}

impl TrainedModel {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss_trace.last().copied()
    }
}

/// Steps per epoch: `ceil(records / batch)`.
pub fn steps_per_epoch(records: usize, batch: usize) -> usize {
    records.div_ceil(batch)
}

pub fn train(dataset: &RdmDataset, arch: &Architecture, config: &DiffusionConfig) -> Result<TrainedModel> {
    config.validate()?;
    let data = TrainingData::from_dataset(dataset, config.eigen_clamp)?;
    train_on(&data, arch, config)
}

pub fn train_on(data: &TrainingData, arch: &Architecture, config: &DiffusionConfig) -> Result<TrainedModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut network = ScoreNetwork::new(data.input_dim(), &arch.hidden, data.coord_dim(), &mut rng)?;
    let mut adam = Adam::new(config.adam, network.param_count());
    let sampler = sampler_for(data)?;
    let per_epoch = steps_per_epoch(data.len(), config.batch_size);
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for _ in 0..config.epochs {
        let mut total = 0.0;
        for _ in 0..per_epoch {
            let (input, target) = noised_batch(data, &sampler, config.schedule(), config.t_min, config.batch_size, &mut rng);
            let (loss, grads) = network.loss_and_grad(&input, &target);
            if !loss.is_finite() || grads.layers.iter().any(|g| !g.weight.iter().all(|x| x.is_finite())) {
                return Err(Error::TrainingDiverged { step });
            }
            adam.step(&mut network, &grads);
            total += loss;
            step += 1;
        }
        loss_trace.push(total / per_epoch as f64);
    }
    Ok(TrainedModel {
        network,
        standardization: data.standardization.clone(),
        rdm_dim: data.rdm_dim,
        label_len: data.label_len,
        schedule: config.schedule(),
        steps: config.steps,
        loss_trace,
    })
}

/// Ancestral sampling of standardized coordinates for samples
/// `first..first + count`, each from its own random stream.
fn denoise_chunk(model: &TrainedModel, cond: &[f64], seed: u64, first: usize, count: usize) -> Vec<Vec<f64>> {
    let dc = coord_count(model.rdm_dim);
    let mut rngs: Vec<ChaCha8Rng> = (first..first + count)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i as u64);
            r
        })
        .collect();
    let mut x = DMatrix::<f64>::zeros(dc, count);
    for (b, rng) in rngs.iter_mut().enumerate() {
        x.column_mut(b).iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
    }
    let mut input = DMatrix::<f64>::zeros(dc + TIME_FEATURES + cond.len(), count);
    for b in 0..count {
        for (k, &c) in cond.iter().enumerate() {
            input[(dc + TIME_FEATURES + k, b)] = c;
        }
    }
    let m = model.steps;
    for i in (1..=m).rev() {
        let t = i as f64 / m as f64;
        let s = (i - 1) as f64 / m as f64;
        let (ab_t, ab_s) = (model.schedule.alpha_bar(t), model.schedule.alpha_bar(s));
        let alpha = ab_t / ab_s;
        let beta = 1.0 - alpha;
        let sigma = (beta * (1.0 - ab_s) / (1.0 - ab_t)).sqrt();
        let emb = time_embedding(t);
        for b in 0..count {
            input.view_mut((0, b), (dc, 1)).copy_from(&x.column(b));
            for (k, &f) in emb.iter().enumerate() {
                input[(dc + k, b)] = f;
            }
        }
        let eps = model.network.forward(&input);
        let coef = beta / (1.0 - ab_t).sqrt();
        let inv_sqrt_alpha = 1.0 / alpha.sqrt();
        for (b, rng) in rngs.iter_mut().enumerate() {
            for k in 0..dc {
                let mean = (x[(k, b)] - coef * eps[(k, b)]) * inv_sqrt_alpha;
                let noise = if i > 1 { sigma * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
                x[(k, b)] = mean + noise;
            }
        }
    }
    (0..count).map(|b| x.column(b).iter().copied().collect()).collect()
}

/// Mirror coordinates of `count` samples conditioned on `label`.
pub fn generate_coords(model: &TrainedModel, label: &TruncatedLabel, count: usize, seed: u64) -> Result<Vec<MirrorPoint>> {
    if label.len() != model.label_len {
        return Err(Error::LabelMismatch { expected: model.label_len, found: label.len() });
    }
    let cond = label_embedding(label);
    let starts: Vec<usize> = (0..count).step_by(GENERATION_CHUNK).collect();
    let chunks: Vec<Vec<Vec<f64>>> =
        starts.par_iter().map(|&s| denoise_chunk(model, &cond, seed, s, GENERATION_CHUNK.min(count - s))).collect();
    chunks.into_iter().flatten().map(|z| MirrorPoint::new(model.standardization.inverse(&z))).collect()
}

/// `count` density matrices conditioned on `label`. Sample `i` uses stream
/// `i` of the seeded generator, so results do not depend on scheduling.
pub fn generate(model: &TrainedModel, label: &TruncatedLabel, count: usize, seed: u64) -> Result<Vec<DensityMatrix>> {
    generate_coords(model, label, count, seed)?.par_iter().map(from_mirror).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// Trace distance between the two mean RDMs.
    pub mean_trace_distance: f64,
    /// `|mean_gen - mean_ref|` per entry, row-major.
    pub entry_mean_diff: Vec<f64>,
    /// `|std_gen - std_ref|` per entry, row-major.
    pub entry_std_diff: Vec<f64>,
    /// Generated matrices failing a density-matrix invariant.
    pub generated_violations: usize,
    pub reference_violations: usize,
}

fn mean_and_std(items: &[(&DensityMatrix, f64)]) -> Result<(DensityMatrix, Vec<f64>)> {
    let d = items.first().ok_or(Error::EmptyInput)?.0.dim();
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(Error::EmptyInput);
    }
    let mut mean = DMatrix::<C64>::zeros(d, d);
    for (rho, w) in items {
        if rho.dim() != d {
            return Err(Error::LengthMismatch { expected: d, found: rho.dim() });
        }
        mean += rho.matrix() * C64::new(w / total, 0.0);
    }
    let mut var = vec![0.0; d * d];
    for (rho, w) in items {
        for (k, v) in var.iter_mut().enumerate() {
            *v += w / total * (rho.matrix()[(k / d, k % d)] - mean[(k / d, k % d)]).norm_sqr();
        }
    }
    Ok((DensityMatrix::from_hermitian_part(mean)?, var.into_iter().map(f64::sqrt).collect()))
}

/// Weighted mean RDM.
pub fn weighted_mean(items: &[(&DensityMatrix, f64)]) -> Result<DensityMatrix> {
    Ok(mean_and_std(items)?.0)
}

pub fn evaluate(generated: &[DensityMatrix], reference: &[DensityMatrix]) -> Result<Metrics> {
    let gen: Vec<_> = generated.iter().map(|r| (r, 1.0)).collect();
    let refs: Vec<_> = reference.iter().map(|r| (r, 1.0)).collect();
    evaluate_weighted(&gen, &refs)
}

/// Like [`evaluate`] with per-item weights on both sides.
pub fn evaluate_weighted(generated: &[(&DensityMatrix, f64)], reference: &[(&DensityMatrix, f64)]) -> Result<Metrics> {
    let (gm, gs) = mean_and_std(generated)?;
    let (rm, rs) = mean_and_std(reference)?;
    let d = gm.dim();
    Ok(Metrics {
        mean_trace_distance: gm.trace_distance(&rm)?,
        entry_mean_diff: (0..d * d).map(|k| (gm.entry(k / d, k % d) - rm.entry(k / d, k % d)).norm()).collect(),
        entry_std_diff: gs.iter().zip(&rs).map(|(a, b)| (a - b).abs()).collect(),
        generated_violations: generated.iter().filter(|(r, _)| !r.is_valid()).count(),
        reference_violations: reference.iter().filter(|(r, _)| !r.is_valid()).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetMetadata, GenerationMode, RdmRecord};

    fn point_dataset(entries: &[(&str, DensityMatrix, usize)]) -> RdmDataset {
        let records: Vec<RdmRecord> = entries
            .iter()
            .flat_map(|(label, rho, count)| {
                (0..*count).map(move |_| RdmRecord { label: label.parse().unwrap(), offsets: vec![0], rdm: rho.clone(), weight: 1.0 })
            })
            .collect();
        let radius = (entries[0].0.len() - 1) / 2;
        RdmDataset {
            metadata: DatasetMetadata {
                num_sites: 6,
                u: 0.0,
                dt: 0.05,
                paramagnet_steps: 5,
                energy_tol: 1e-10,
                radius,
                offsets: vec![0],
                seed: 0,
                mode: GenerationMode::Exhaustive,
                record_count: records.len(),
            },
            records,
        }
    }

    fn qubit(z: f64, x: f64) -> DensityMatrix {
        let e = |a: f64, b: f64| C64::new(a, b);
        DensityMatrix::from_row_major(2, &[e(0.5 + z / 2.0, 0.0), e(x / 2.0, 0.0), e(x / 2.0, 0.0), e(0.5 - z / 2.0, 0.0)]).unwrap()
    }

    fn small_config(epochs: usize) -> DiffusionConfig {
        DiffusionConfig { epochs, batch_size: 64, steps: 100, seed: 5, ..DiffusionConfig::default() }
    }

    #[test]
    fn schedule_endpoints() {
        let s = DiffusionConfig::default().schedule();
        assert_eq!(s.alpha_bar(0.0), 1.0);
        assert!((s.alpha_bar(1.0) - (-5.05f64).exp()).abs() < 1e-15);
        assert_eq!(s.beta(1.0), 10.0);
        let emb = time_embedding(0.0);
        assert_eq!(emb[0], 0.0);
        assert_eq!(emb[1], 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(DiffusionConfig::default().validate().is_ok());
        assert!(DiffusionConfig { steps: 9, ..DiffusionConfig::default() }.validate().is_err());
        assert!(DiffusionConfig { beta_max: 0.05, ..DiffusionConfig::default() }.validate().is_err());
        assert!(DiffusionConfig { beta_min: 0.0, ..DiffusionConfig::default() }.validate().is_err());
    }

    #[test]
    fn standardization_round_trip_and_degenerate_spread() {
        let pts = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let st = Standardization::fit(&pts, &[1.0, 1.0]).unwrap();
        assert_eq!(st.mean, vec![2.0, 5.0]);
        assert_eq!(st.std, vec![1.0, 1.0]);
        assert_eq!(st.forward(&[3.0, 5.0]), vec![1.0, 0.0]);
        assert_eq!(st.inverse(&st.forward(&[0.25, 7.0])), vec![0.25, 7.0]);
        assert!(Standardization::fit(&[], &[]).is_err());
    }

    #[test]
    fn untrained_loss_is_noise_dimension() {
        for (d, rho) in [(2, DensityMatrix::maximally_mixed(2)), (4, DensityMatrix::maximally_mixed(4))] {
            let mut ds = point_dataset(&[("010", DensityMatrix::maximally_mixed(2), 4)]);
            ds.records.iter_mut().for_each(|r| r.rdm = rho.clone());
            let data = TrainingData::from_dataset(&ds, DEFAULT_EIGEN_CLAMP).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let net = ScoreNetwork::new(data.input_dim(), &[16], data.coord_dim(), &mut rng).unwrap();
            let loss = batch_loss(&net, &data, &DiffusionConfig::default(), 20_000, 1).unwrap();
            let expected = (d * d - 1) as f64;
            assert!((loss / expected - 1.0).abs() < 0.03, "d={d}: {loss}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let ds = point_dataset(&[("0", qubit(0.3, 0.2), 50), ("1", qubit(-0.2, 0.4), 50)]);
        let arch = Architecture { hidden: vec![16, 16] };
        let a = train(&ds, &arch, &small_config(3)).unwrap();
        let b = train(&ds, &arch, &small_config(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.loss_trace.len(), 3);
        assert_eq!(generate(&a, &"1".parse().unwrap(), 40, 3).unwrap(), generate(&b, &"1".parse().unwrap(), 40, 3).unwrap());
    }

    #[test]
    fn generation_is_independent_of_chunking() {
        let ds = point_dataset(&[("0", qubit(0.3, 0.2), 20)]);
        let model = train(&ds, &Architecture { hidden: vec![8] }, &small_config(1)).unwrap();
        let label: TruncatedLabel = "0".parse().unwrap();
        let many = generate_coords(&model, &label, GENERATION_CHUNK + 7, 11).unwrap();
        let one = generate_coords(&model, &label, 1, 11).unwrap();
        assert_eq!(many[0], one[0]);
        let tail = denoise_chunk(&model, &[-1.0], 11, GENERATION_CHUNK + 3, 1);
        assert_eq!(MirrorPoint::new(model.standardization.inverse(&tail[0])).unwrap(), many[GENERATION_CHUNK + 3]);
        assert!(generate(&model, &label, 0, 1).unwrap().is_empty());
        assert!(matches!(generate(&model, &"010".parse().unwrap(), 1, 1), Err(Error::LabelMismatch { .. })));
    }

    #[test]
    fn point_mass_is_learned() {
        let mixed = DensityMatrix::maximally_mixed(2);
        let ds = point_dataset(&[("0", mixed.clone(), 256)]);
        let model = train(&ds, &Architecture { hidden: vec![32, 32] }, &DiffusionConfig { epochs: 300, ..small_config(0) }).unwrap();
        let pts = generate_coords(&model, &"0".parse().unwrap(), 400, 2).unwrap();
        for k in 0..3 {
            let mean = pts.iter().map(|p| p.coords[k]).sum::<f64>() / pts.len() as f64;
            let var = pts.iter().map(|p| (p.coords[k] - mean).powi(2)).sum::<f64>() / pts.len() as f64;
            assert!(var <= 0.05, "coordinate {k}: variance {var}");
        }
        let rhos: Vec<DensityMatrix> = pts.iter().map(|p| from_mirror(p).unwrap()).collect();
        let m = evaluate(&rhos, std::slice::from_ref(&mixed)).unwrap();
        assert!(m.mean_trace_distance <= 0.02, "mean-RDM trace distance {}", m.mean_trace_distance);
        assert_eq!(m.generated_violations, 0);
    }

    #[test]
    fn conditioning_separates_labels() {
        let (a, b) = (qubit(0.5, 0.1), qubit(-0.3, 0.1));
        assert!(a.trace_distance(&b).unwrap() >= 0.1);
        let ds = point_dataset(&[("0", a.clone(), 128), ("1", b.clone(), 128)]);
        let model = train(&ds, &Architecture { hidden: vec![32, 32] }, &DiffusionConfig { epochs: 40, ..small_config(0) }).unwrap();
        let ga = generate(&model, &"0".parse().unwrap(), 200, 1).unwrap();
        let gb = generate(&model, &"1".parse().unwrap(), 200, 2).unwrap();
        let mean = |v: &[DensityMatrix]| weighted_mean(&v.iter().map(|r| (r, 1.0)).collect::<Vec<_>>()).unwrap();
        let lead = mean(&ga).entry(0, 0).re - mean(&gb).entry(0, 0).re;
        let truth = a.entry(0, 0).re - b.entry(0, 0).re;
        assert_eq!(lead.signum(), truth.signum(), "generated split {lead}, empirical {truth}");
    }

    #[test]
    fn evaluate_closed_forms() {
        let mixed = DensityMatrix::maximally_mixed(2);
        let zero = qubit(1.0, 0.0);
        let same = evaluate(&[mixed.clone(), zero.clone()], &[mixed.clone(), zero.clone()]).unwrap();
        assert_eq!(same.mean_trace_distance, 0.0);
        assert!(same.entry_mean_diff.iter().chain(&same.entry_std_diff).all(|&x| x == 0.0));
        let m = evaluate(&[zero], &[mixed]).unwrap();
        assert!((m.mean_trace_distance - 0.5).abs() < 1e-15);
        assert_eq!(m.generated_violations, 0);
        assert!(matches!(evaluate(&[], &[qubit(0.0, 0.0)]), Err(Error::EmptyInput)));
    }
}
