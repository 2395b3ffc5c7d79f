//! Labeled reduced-density-matrix datasets.
//!
//! Every post-measurement state contributes one record per center site `i`:
//! the RDM on sites `i + δ (mod N)` for the configured offsets `δ`, labeled by
//! the outcome bits on sites `i - r ..= i + r`. Pooling all centers relies on
//! the translation invariance of both chains.
//!
//! # File format (`MACRDM01`)
//!
//! All integers and floats little-endian.
//!
//! ```text
//! magic        8 bytes  "MACRDM01"
//! num_sites    u32
//! u            f64
//! dt           f64
//! k            u32      paramagnet steps
//! energy_tol   f64
//! radius       u32
//! n_offsets    u32, then n_offsets × i8
//! seed         u64
//! mode         u8       0 = exhaustive, 1 = sampled
//! draws        u64      sampled-mode draw count (0 when exhaustive)
//! n_records    u64
//! records      n_records × {
//!                label bits   (2r+1) × u8
//!                n_offsets    u8, then n_offsets × i8
//!                entries      d² × (re f64, im f64), row-major
//!                weight       f64 }
//! checksum     u64      first 8 bytes of SHA-256 over everything above
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ising::EvolutionConfig;
use crate::persist::{read_file, Decoder, Encoder};
use crate::protocol::{MeasurementProtocol, OutcomeBitstring};
use crate::qstate::{DensityMatrix, StateVector, C64};

pub const DATASET_MAGIC: &[u8; 8] = b"MACRDM01";
pub const STATE_MAGIC: &[u8; 8] = b"MACSTV01";

pub const DEFAULT_RADIUS: usize = 2;
pub const DEFAULT_TWO_BODY_OFFSETS: [i32; 2] = [-2, 3];

/// Outcome bits on sites `i - r ..= i + r` (periodic), in that order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TruncatedLabel {
    bits: Vec<u8>,
}

impl TruncatedLabel {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.len() % 2 == 0 || bits.iter().any(|&b| b > 1) {
            return Err(Error::MalformedLabel(format!("{bits:?}")));
        }
        Ok(Self { bits })
    }

    pub fn from_outcome(outcome: &OutcomeBitstring, center: usize, radius: usize) -> Self {
        let n = outcome.num_sites();
        let bits = (0..2 * radius + 1).map(|k| outcome.bit((center + n * (radius + 1) + k - radius) % n)).collect();
        Self { bits }
    }

    /// Bit `k` of `index` is window position `k`.
    pub fn from_index(radius: usize, index: usize) -> Self {
        Self { bits: (0..2 * radius + 1).map(|k| ((index >> k) & 1) as u8).collect() }
    }

    /// All `2^{2r+1}` labels in index order.
    pub fn all(radius: usize) -> Vec<Self> {
        (0..1usize << (2 * radius + 1)).map(|i| Self::from_index(radius, i)).collect()
    }

    pub fn index(&self) -> usize {
        self.bits.iter().enumerate().fold(0, |acc, (k, &b)| acc | ((b as usize) << k))
    }

    pub fn radius(&self) -> usize {
        self.bits.len() / 2
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// The label seen from the mirror-image chain.
    pub fn reflected(&self) -> Self {
        Self { bits: self.bits.iter().rev().copied().collect() }
    }
}

impl fmt::Display for TruncatedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.bits.iter().try_for_each(|b| write!(f, "{b}"))
    }
}

impl FromStr for TruncatedLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| c.to_digit(2).map(|d| d as u8).ok_or_else(|| Error::MalformedLabel(s.to_string())))
            .collect::<Result<Vec<u8>>>()?;
        Self::new(bits)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenerationMode {
    /// Every outcome once, Born-weighted.
    Exhaustive,
    /// `draws` outcomes sampled from the Born distribution, unit weight each.
    Sampled { draws: usize },
}

impl fmt::Display for GenerationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenerationMode::Exhaustive => write!(f, "exhaustive"),
            GenerationMode::Sampled { draws } => write!(f, "sampled({draws})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub radius: usize,
    /// Subsystem sites relative to the center; one or two entries.
    pub offsets: Vec<i32>,
    pub mode: GenerationMode,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { radius: DEFAULT_RADIUS, offsets: vec![0], mode: GenerationMode::Exhaustive }
    }
}

impl DatasetConfig {
    pub fn validate(&self, num_sites: usize) -> Result<()> {
        if 2 * self.radius + 1 > num_sites {
            return Err(Error::RadiusTooLarge { radius: self.radius, num_sites });
        }
        if !(1..=2).contains(&self.offsets.len()) {
            return Err(Error::InvalidConfig(format!("need one or two offsets, got {}", self.offsets.len())));
        }
        if self.offsets.iter().any(|&d| d.unsigned_abs() as usize >= num_sites || !(-128..=127).contains(&d)) {
            return Err(Error::InvalidConfig(format!("offsets {:?} out of range", self.offsets)));
        }
        let sites = subsystem_sites(num_sites, 0, &self.offsets);
        if sites.len() == 2 && sites[0] == sites[1] {
            return Err(Error::DuplicateSite(sites[0]));
        }
        Ok(())
    }
}

fn subsystem_sites(num_sites: usize, center: usize, offsets: &[i32]) -> Vec<usize> {
    let n = num_sites as i64;
    offsets.iter().map(|&d| (center as i64 + d as i64).rem_euclid(n) as usize).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdmRecord {
    pub label: TruncatedLabel,
    pub offsets: Vec<i32>,
    pub rdm: DensityMatrix,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMetadata {
    pub num_sites: usize,
    pub u: f64,
    pub dt: f64,
    pub paramagnet_steps: usize,
    pub energy_tol: f64,
    pub radius: usize,
    pub offsets: Vec<i32>,
    pub seed: u64,
    pub mode: GenerationMode,
    pub record_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdmDataset {
    pub metadata: DatasetMetadata,
    pub records: Vec<RdmRecord>,
}

fn records_for_state(state: &StateVector, outcome: &OutcomeBitstring, config: &DatasetConfig, weight: f64) -> Result<Vec<RdmRecord>> {
    let n = state.num_sites();
    (0..n)
        .map(|center| {
            Ok(RdmRecord {
                label: TruncatedLabel::from_outcome(outcome, center, config.radius),
                offsets: config.offsets.clone(),
                rdm: state.partial_trace(&subsystem_sites(n, center, &config.offsets))?,
                weight,
            })
        })
        .collect()
}

/// Builds records for every outcome (exhaustive) or for `draws` sampled
/// outcomes, pooled over all centers. Records are ordered by outcome (index
/// order, or draw order when sampled) and then by center. Outcomes with zero
/// ancilla amplitude are impossible and contribute nothing.
pub fn build_dataset(protocol: &MeasurementProtocol, evolution: &EvolutionConfig, config: &DatasetConfig, seed: u64) -> Result<RdmDataset> {
    let n = protocol.num_sites();
    config.validate(n)?;
    let records = match config.mode {
        GenerationMode::Exhaustive => {
            let weights = protocol.weights()?;
            let total: f64 = weights.iter().sum();
            if !(total > 0.0) {
                return Err(Error::DegenerateState);
            }
            let per_outcome = (0..1usize << n)
                .into_par_iter()
                .map(|i| {
                    let outcome = OutcomeBitstring::from_index(n, i);
                    match protocol.measure(&outcome)? {
                        Some(pm) => records_for_state(&pm.state, &outcome, config, weights[i] / total),
                        None => Ok(Vec::new()),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            per_outcome.into_iter().flatten().collect()
        }
        GenerationMode::Sampled { draws } => {
            let outcomes = protocol.sample(draws, seed)?;
            let mut unique: Vec<usize> = outcomes.iter().map(|o| o.index()).collect();
            unique.sort_unstable();
            unique.dedup();
            let computed = unique
                .par_iter()
                .map(|&i| {
                    let outcome = OutcomeBitstring::from_index(n, i);
                    let pm = protocol.measure(&outcome)?.ok_or_else(|| Error::ZeroAmplitudeOutcome { outcome: outcome.to_string() })?;
                    records_for_state(&pm.state, &outcome, config, 1.0)
                })
                .collect::<Result<Vec<_>>>()?;
            let lookup: BTreeMap<usize, Vec<RdmRecord>> = unique.into_iter().zip(computed).collect();
            outcomes.iter().flat_map(|o| lookup[&o.index()].iter().cloned()).collect::<Vec<_>>()
        }
    };
    Ok(RdmDataset {
        metadata: DatasetMetadata {
            num_sites: n,
            u: protocol.config().u,
            dt: evolution.dt,
            paramagnet_steps: evolution.paramagnet_steps,
            energy_tol: evolution.energy_tol,
            radius: config.radius,
            offsets: config.offsets.clone(),
            seed,
            mode: config.mode,
            record_count: records.len(),
        },
        records,
    })
}

impl RdmDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// RDM dimension shared by all records.
    pub fn rdm_dim(&self) -> usize {
        1 << self.metadata.offsets.len()
    }

    /// Records carrying `label`, in insertion order.
    pub fn group_by_label(&self, label: &TruncatedLabel) -> Result<Vec<(&DensityMatrix, f64)>> {
        let expected = 2 * self.metadata.radius + 1;
        if label.len() != expected {
            return Err(Error::LabelMismatch { expected, found: label.len() });
        }
        Ok(self.records.iter().filter(|r| &r.label == label).map(|r| (&r.rdm, r.weight)).collect())
    }

    /// Total record weight per label.
    pub fn label_weights(&self) -> BTreeMap<TruncatedLabel, f64> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.label.clone()).or_insert(0.0) += r.weight;
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let md = &self.metadata;
        let mut e = Encoder::new(DATASET_MAGIC);
        e.u32(md.num_sites as u32);
        e.f64(md.u);
        e.f64(md.dt);
        e.u32(md.paramagnet_steps as u32);
        e.f64(md.energy_tol);
        e.u32(md.radius as u32);
        e.u32(md.offsets.len() as u32);
        md.offsets.iter().for_each(|&d| e.i8(d as i8));
        e.u64(md.seed);
        match md.mode {
            GenerationMode::Exhaustive => {
                e.u8(0);
                e.u64(0);
            }
            GenerationMode::Sampled { draws } => {
                e.u8(1);
                e.u64(draws as u64);
            }
        }
        e.u64(self.records.len() as u64);
        for r in &self.records {
            r.label.bits.iter().for_each(|&b| e.u8(b));
            e.u8(r.offsets.len() as u8);
            r.offsets.iter().for_each(|&d| e.i8(d as i8));
            for z in r.rdm.row_major() {
                e.f64(z.re);
                e.f64(z.im);
            }
            e.f64(r.weight);
        }
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::open(bytes, DATASET_MAGIC)?;
        let num_sites = d.u32()? as usize;
        let u = d.f64()?;
        let dt = d.f64()?;
        let paramagnet_steps = d.u32()? as usize;
        let energy_tol = d.f64()?;
        let radius = d.u32()? as usize;
        let n_offsets = d.u32()? as usize;
        if !(1..=2).contains(&n_offsets) {
            return Err(Error::Malformed(format!("{n_offsets} offsets")));
        }
        let offsets = (0..n_offsets).map(|_| d.i8().map(i32::from)).collect::<Result<Vec<_>>>()?;
        let seed = d.u64()?;
        let mode = match (d.u8()?, d.u64()?) {
            (0, _) => GenerationMode::Exhaustive,
            (1, draws) => GenerationMode::Sampled { draws: draws as usize },
            (m, _) => return Err(Error::Malformed(format!("unknown mode {m}"))),
        };
        let record_count = d.u64()? as usize;
        let dim = 1usize << n_offsets;
        let label_len = 2 * radius + 1;
        let record_bytes = label_len + 1 + n_offsets + 16 * dim * dim + 8;
        if record_count.checked_mul(record_bytes) != Some(d.remaining()) {
            return Err(Error::Malformed(format!("{} payload bytes for {record_count} records", d.remaining())));
        }
        let mut records = Vec::with_capacity(record_count);
        for _ in 0..record_count {
            let bits = (0..label_len).map(|_| d.u8()).collect::<Result<Vec<_>>>()?;
            let label = TruncatedLabel::new(bits)?;
            let k = d.u8()? as usize;
            let rec_offsets = (0..k).map(|_| d.i8().map(i32::from)).collect::<Result<Vec<_>>>()?;
            if rec_offsets != offsets {
                return Err(Error::Malformed("record offsets differ from metadata".into()));
            }
            let entries: Vec<C64> = d.f64s(2 * dim * dim)?.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect();
            let rdm = DensityMatrix::from_row_major(dim, &entries)?;
            let weight = d.f64()?;
            records.push(RdmRecord { label, offsets: rec_offsets, rdm, weight });
        }
        d.finish()?;
        Ok(Self {
            metadata: DatasetMetadata { num_sites, u, dt, paramagnet_steps, energy_tol, radius, offsets, seed, mode, record_count },
            records,
        })
    }

    /// One row per record: label, offsets, weight, then the row-major
    /// entries as `re`/`im` column pairs, all floats with 17 significant
    /// digits. Export only.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |e: csv::Error| Error::io(path, e.into());
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let d = self.rdm_dim();
        let mut header = vec!["label".to_string(), "offsets".to_string(), "weight".to_string()];
        for r in 0..d {
            for c in 0..d {
                header.push(format!("rho{r}{c}_re"));
                header.push(format!("rho{r}{c}_im"));
            }
        }
        w.write_record(&header).map_err(csv_err)?;
        for rec in &self.records {
            let offsets = rec.offsets.iter().map(i32::to_string).collect::<Vec<_>>().join(";");
            let mut row = vec![rec.label.to_string(), offsets, fmt_f64(rec.weight)];
            for z in rec.rdm.row_major() {
                row.push(fmt_f64(z.re));
                row.push(fmt_f64(z.im));
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn save_dataset(dataset: &RdmDataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<RdmDataset> {
    RdmDataset::from_bytes(&read_file(path)?)
}

/// `MACSTV01`: magic, `num_sites` as u32, `2^N` amplitudes as interleaved
/// `re, im` f64 pairs, checksum.
pub fn save_state(state: &StateVector, path: &Path) -> Result<()> {
    let mut e = Encoder::new(STATE_MAGIC);
    e.u32(state.num_sites() as u32);
    for a in state.amplitudes() {
        e.f64(a.re);
        e.f64(a.im);
    }
    e.write_to(path)
}

pub fn load_state(path: &Path) -> Result<StateVector> {
    let bytes = read_file(path)?;
    let mut d = Decoder::open(&bytes, STATE_MAGIC)?;
    let n = d.u32()? as usize;
    if n == 0 || n > crate::qstate::MAX_SITES {
        return Err(Error::UnsupportedSize { num_sites: n, max: crate::qstate::MAX_SITES });
    }
    let dim = 1usize << n;
    if d.remaining() != 16 * dim {
        return Err(Error::LengthMismatch { expected: 16 * dim, found: d.remaining() });
    }
    let amps = d.f64s(2 * dim)?.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect();
    d.finish()?;
    StateVector::new(n, amps)
}

/// Loads a state and checks its chain length.
pub fn load_state_expecting(path: &Path, num_sites: usize) -> Result<StateVector> {
    let s = load_state(path)?;
    if s.num_sites() != num_sites {
        return Err(Error::LengthMismatch { expected: num_sites, found: s.num_sites() });
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::{prepare_ground_state, prepare_paramagnet};
    use crate::protocol::ProtocolConfig;

    fn protocol(n: usize, u: f64) -> (MeasurementProtocol, EvolutionConfig) {
        let cfg = EvolutionConfig::new(n);
        let psi_c = prepare_ground_state(&cfg).unwrap().state;
        let psi_a = prepare_paramagnet(&cfg).unwrap();
        (MeasurementProtocol::new(psi_c, psi_a, ProtocolConfig::with_u(u)).unwrap(), cfg)
    }

    #[test]
    fn label_window_wraps() {
        let o: OutcomeBitstring = "1000001".parse().unwrap();
        assert_eq!(TruncatedLabel::from_outcome(&o, 0, 2).to_string(), "01100");
        assert_eq!(TruncatedLabel::from_outcome(&o, 6, 1).to_string(), "011");
        assert_eq!(TruncatedLabel::from_index(2, 0b00100).to_string(), "00100");
        assert_eq!("00110".parse::<TruncatedLabel>().unwrap().index(), 0b01100);
        assert!("0011".parse::<TruncatedLabel>().is_err());
        assert!("00a".parse::<TruncatedLabel>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = DatasetConfig { radius: 3, ..Default::default() };
        assert!(matches!(c.validate(6), Err(Error::RadiusTooLarge { .. })));
        c.radius = 2;
        c.offsets = vec![-2, 4];
        assert!(matches!(c.validate(6), Err(Error::DuplicateSite(_))));
        c.offsets = vec![];
        assert!(c.validate(6).is_err());
        c.offsets = vec![-2, 3];
        c.validate(6).unwrap();
    }

    #[test]
    fn zero_coupling_records_match_ground_state() {
        let (p, cfg) = protocol(6, 0.0);
        let ds = build_dataset(&p, &cfg, &DatasetConfig { radius: 1, ..Default::default() }, 0).unwrap();
        assert_eq!(ds.len(), 64 * 6);
        let reference = p.psi_c().partial_trace(&[0]).unwrap();
        for r in &ds.records {
            assert!(r.rdm.trace_distance(&reference).unwrap() < 1e-12);
        }
        for label in TruncatedLabel::all(1) {
            let group = ds.group_by_label(&label).unwrap();
            assert!(group.windows(2).all(|w| w[0].0.trace_distance(w[1].0).unwrap() < 1e-12));
        }
    }

    #[test]
    fn group_weights_sum_to_chain_length() {
        let (p, cfg) = protocol(6, 0.1);
        let ds = build_dataset(&p, &cfg, &DatasetConfig { radius: 1, ..Default::default() }, 0).unwrap();
        let total: f64 = TruncatedLabel::all(1).iter().map(|l| ds.group_by_label(l).unwrap().iter().map(|g| g.1).sum::<f64>()).sum();
        assert!((total - 6.0).abs() < 1e-10);
        let unseen = TruncatedLabel::from_index(2, 0);
        assert!(matches!(ds.group_by_label(&unseen), Err(Error::LabelMismatch { .. })));
    }

    #[test]
    fn unseen_label_gives_empty_group() {
        let (p, cfg) = protocol(6, 0.1);
        let ds = build_dataset(&p, &cfg, &DatasetConfig { radius: 1, mode: GenerationMode::Sampled { draws: 1 }, ..Default::default() }, 3).unwrap();
        let seen: Vec<_> = ds.records.iter().map(|r| r.label.clone()).collect();
        let unseen = TruncatedLabel::all(1).into_iter().find(|l| !seen.contains(l)).unwrap();
        assert!(ds.group_by_label(&unseen).unwrap().is_empty());
    }

    #[test]
    fn pooling_matches_rotated_outcome() {
        let n = 6;
        let (p, cfg) = protocol(n, 0.1);
        let config = DatasetConfig { radius: 2, offsets: vec![-2, 3], mode: GenerationMode::Exhaustive };
        let ds = build_dataset(&p, &cfg, &config, 0).unwrap();
        for idx in [5usize, 22, 41] {
            for center in 0..n {
                // Rotating the outcome so that `center` lands on site 0.
                let rot = ((idx >> center) | (idx << (n - center))) & ((1 << n) - 1);
                let a = &ds.records[idx * n + center];
                let b = &ds.records[rot * n];
                assert_eq!(a.label, b.label);
                for (x, y) in a.rdm.row_major().iter().zip(b.rdm.row_major()) {
                    assert!((x - y).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn label_weight_is_window_marginal() {
        let n = 8;
        let (p, cfg) = protocol(n, 0.1);
        let ds = build_dataset(&p, &cfg, &DatasetConfig::default(), 0).unwrap();
        let dist = p.distribution().unwrap();
        let by_label = ds.label_weights();
        for label in TruncatedLabel::all(2) {
            // Window around each center, marginalized directly.
            let mut direct = 0.0;
            for center in 0..n {
                for (i, &w) in dist.iter().enumerate() {
                    let o = OutcomeBitstring::from_index(n, i);
                    if TruncatedLabel::from_outcome(&o, center, 2) == label {
                        direct += w;
                    }
                }
            }
            assert!((by_label.get(&label).copied().unwrap_or(0.0) - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn sampled_mode_is_seeded() {
        let (p, cfg) = protocol(6, 0.1);
        let config = DatasetConfig { radius: 1, offsets: vec![0], mode: GenerationMode::Sampled { draws: 20 } };
        let a = build_dataset(&p, &cfg, &config, 9).unwrap();
        assert_eq!(a.len(), 20 * 6);
        assert!(a.records.iter().all(|r| r.weight == 1.0));
        assert_eq!(a, build_dataset(&p, &cfg, &config, 9).unwrap());
    }

    #[test]
    fn dataset_round_trip_and_corruption() {
        let (p, cfg) = protocol(6, 0.1);
        let config = DatasetConfig { radius: 1, offsets: vec![-1, 2], mode: GenerationMode::Sampled { draws: 2 } };
        let mut ds = build_dataset(&p, &cfg, &config, 1).unwrap();
        ds.records.truncate(10);
        ds.metadata.record_count = 10;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.records.iter().zip(&ds.records) {
            for (x, y) in a.rdm.row_major().iter().zip(b.rdm.row_major()) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
            a.rdm.check().unwrap();
        }

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 40]).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Checksum)));

        let mut header_only = ds.clone();
        header_only.records.clear();
        header_only.metadata.record_count = 0;
        save_dataset(&header_only, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.metadata, header_only.metadata);

        let mut wrong_version = bytes.clone();
        wrong_version[7] = b'9';
        std::fs::write(&path, &wrong_version).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::VersionMismatch { .. })));
    }

    #[test]
    fn state_round_trip() {
        let cfg = EvolutionConfig::new(3);
        let s = prepare_ground_state(&cfg).unwrap().state;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        save_state(&s, &path).unwrap();
        assert_eq!(load_state(&path).unwrap(), s);
        assert!(matches!(load_state_expecting(&path, 4), Err(Error::LengthMismatch { .. })));
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_state(&path), Err(Error::Checksum)));
        assert!(matches!(load_state(&dir.path().join("missing")), Err(Error::Io { .. })));
    }

    #[test]
    fn csv_export_has_one_row_per_record() {
        let (p, cfg) = protocol(6, 0.1);
        let config = DatasetConfig { radius: 1, offsets: vec![0], mode: GenerationMode::Sampled { draws: 1 } };
        let ds = build_dataset(&p, &cfg, &config, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        ds.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "label,offsets,weight,rho00_re,rho00_im,rho01_re,rho01_im,rho10_re,rho10_im,rho11_re,rho11_im");
        assert_eq!(lines.count(), ds.len());
    }
}
