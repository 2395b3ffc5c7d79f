//! Locality diagnostics for measurement-conditioned RDMs: per-label scatter
//! of one-body coherences, and how much selected RDM entries move when a
//! single outcome bit is flipped.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::{fmt_f64, DatasetConfig, GenerationMode, RdmDataset, TruncatedLabel};
use crate::error::{Error, Result};
use crate::ising::EvolutionConfig;
use crate::protocol::{MeasurementProtocol, OutcomeBitstring, MAX_ENUMERATION_SITES};
use crate::qstate::{gate_matrix, kron, DensityMatrix, Pauli, StateVector, C64};

/// Display rescaling of the ZZ-connected profile.
pub const ZZ_RESCALE: f64 = 3.0;
/// Display rescaling of the XX-connected profile.
pub const XX_RESCALE: f64 = 2000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EntryKind {
    /// `ρ₀₀` of a one-site RDM.
    OneBodyDiag,
    /// `ρ₀₁` of a one-site RDM.
    OneBodyOffdiag,
    TwoBodyZzConnected,
    TwoBodyXxConnected,
}

impl EntryKind {
    pub const ALL: [EntryKind; 4] =
        [EntryKind::OneBodyDiag, EntryKind::OneBodyOffdiag, EntryKind::TwoBodyZzConnected, EntryKind::TwoBodyXxConnected];

    pub fn name(self) -> &'static str {
        match self {
            EntryKind::OneBodyDiag => "one_body_diag",
            EntryKind::OneBodyOffdiag => "one_body_offdiag",
            EntryKind::TwoBodyZzConnected => "two_body_zz_connected",
            EntryKind::TwoBodyXxConnected => "two_body_xx_connected",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            EntryKind::OneBodyDiag | EntryKind::OneBodyOffdiag => 1,
            _ => 2,
        }
    }

    /// Factor applied in the `rescaled_value` profile column.
    pub fn display_scale(self) -> f64 {
        match self {
            EntryKind::TwoBodyZzConnected => ZZ_RESCALE,
            EntryKind::TwoBodyXxConnected => XX_RESCALE,
            _ => 1.0,
        }
    }
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EntryKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown entry kind {s:?}")))
    }
}

/// A scalar RDM entry on specific chain sites.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntrySelector {
    pub kind: EntryKind,
    pub sites: Vec<usize>,
}

impl EntrySelector {
    pub fn new(kind: EntryKind, sites: Vec<usize>) -> Result<Self> {
        if sites.len() != kind.arity() {
            return Err(Error::LengthMismatch { expected: kind.arity(), found: sites.len() });
        }
        if sites.len() == 2 && sites[0] == sites[1] {
            return Err(Error::DuplicateSite(sites[0]));
        }
        Ok(Self { kind, sites })
    }

    fn check(&self, num_sites: usize) -> Result<()> {
        match self.sites.iter().find(|&&s| s >= num_sites) {
            Some(&site) => Err(Error::SiteOutOfRange { site, num_sites }),
            None => Ok(()),
        }
    }

    /// The selected entry of `state`; real kinds have zero imaginary part.
    pub fn evaluate(&self, state: &StateVector) -> Result<C64> {
        let rdm = state.partial_trace(&self.sites)?;
        Ok(match self.kind {
            EntryKind::OneBodyDiag => C64::new(rdm.entry(0, 0).re, 0.0),
            EntryKind::OneBodyOffdiag => rdm.entry(0, 1),
            EntryKind::TwoBodyZzConnected => C64::new(correlator_from_rdm(&rdm, CorrelatorKind::ZzConnected)?, 0.0),
            EntryKind::TwoBodyXxConnected => C64::new(correlator_from_rdm(&rdm, CorrelatorKind::XxConnected)?, 0.0),
        })
    }
}

/// Internal index of display site 0.
pub fn display_offset(num_sites: usize) -> usize {
    (num_sites / 2).saturating_sub(1)
}

/// One-body entries at display site 0, two-body entries on display sites
/// `-2` and `3`.
pub fn default_selectors(num_sites: usize) -> Result<Vec<EntrySelector>> {
    if num_sites < 6 {
        return Err(Error::UnsupportedSize { num_sites, max: MAX_ENUMERATION_SITES });
    }
    let n = num_sites as i64;
    let c = display_offset(num_sites) as i64;
    let pair = vec![(c - 2).rem_euclid(n) as usize, (c + 3).rem_euclid(n) as usize];
    Ok(EntryKind::ALL
        .into_iter()
        .map(|kind| EntrySelector { kind, sites: if kind.arity() == 1 { vec![c as usize] } else { pair.clone() } })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorrelatorKind {
    ZzConnected,
    XxConnected,
}

/// `Tr(ρ P⊗P) - Tr(ρ₁P)·Tr(ρ₂P)` on a two-site RDM with `ρ₁`, `ρ₂` its
/// one-site marginals.
pub fn correlator_from_rdm(rdm: &DensityMatrix, kind: CorrelatorKind) -> Result<f64> {
    if rdm.dim() != 4 {
        return Err(Error::LengthMismatch { expected: 4, found: rdm.dim() });
    }
    let p = gate_matrix(&match kind {
        CorrelatorKind::ZzConnected => Pauli::Z,
        CorrelatorKind::XxConnected => Pauli::X,
    }
    .matrix());
    let joint = rdm.expect(&kron(&p, &p));
    let first = rdm.reduce(&[0])?.expect(&p);
    let second = rdm.reduce(&[1])?.expect(&p);
    Ok(joint - first * second)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Weighting {
    /// Every fixed assignment of the other bits counts equally.
    #[default]
    Uniform,
    /// Assignments weighted by the summed Born weight of both flips.
    Born,
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Uniform => "uniform",
            Weighting::Born => "born",
        })
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Weighting::Uniform),
            "born" => Ok(Weighting::Born),
            _ => Err(Error::InvalidConfig(format!("unknown weighting {s:?}"))),
        }
    }
}

/// Selected entries and the Born weight for every outcome.
#[derive(Clone, Debug)]
pub struct OutcomeTable {
    num_sites: usize,
    selectors: Vec<EntrySelector>,
    /// `values[outcome][selector]`; `None` for impossible outcomes.
    values: Vec<Option<Vec<C64>>>,
    weights: Vec<f64>,
}

/// Evaluates every selector on every post-measurement state.
pub fn outcome_table(protocol: &MeasurementProtocol, selectors: &[EntrySelector]) -> Result<OutcomeTable> {
    let n = protocol.num_sites();
    if n > MAX_ENUMERATION_SITES {
        return Err(Error::UnsupportedSize { num_sites: n, max: MAX_ENUMERATION_SITES });
    }
    selectors.iter().try_for_each(|s| s.check(n))?;
    let rows = (0..1usize << n)
        .into_par_iter()
        .map(|i| match protocol.measure(&OutcomeBitstring::from_index(n, i))? {
            Some(pm) => {
                let vals = selectors.iter().map(|s| s.evaluate(&pm.state)).collect::<Result<Vec<_>>>()?;
                Ok((Some(vals), pm.weight))
            }
            None => Ok((None, 0.0)),
        })
        .collect::<Result<Vec<_>>>()?;
    let (values, mut weights): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateState);
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(OutcomeTable { num_sites: n, selectors: selectors.to_vec(), values, weights })
}

impl OutcomeTable {
    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn selectors(&self) -> &[EntrySelector] {
        &self.selectors
    }

    /// Normalized Born weights in outcome index order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn value(&self, outcome: usize, selector: usize) -> Option<C64> {
        self.values[outcome].as_ref().map(|v| v[selector])
    }

    /// Average two-point variance of selector `selector` under a flip of
    /// outcome bit `site`.
    pub fn flip_variance(&self, selector: usize, site: usize, weighting: Weighting) -> Result<f64> {
        if selector >= self.selectors.len() {
            return Err(Error::LengthMismatch { expected: self.selectors.len(), found: selector });
        }
        if site >= self.num_sites {
            return Err(Error::SiteOutOfRange { site, num_sites: self.num_sites });
        }
        let bit = 1usize << site;
        let terms: Vec<(f64, f64)> = (0..self.values.len())
            .into_par_iter()
            .filter(|b| b & bit == 0)
            .map(|lo| {
                let hi = lo | bit;
                match (self.value(lo, selector), self.value(hi, selector)) {
                    (Some(x0), Some(x1)) => {
                        let w = match weighting {
                            Weighting::Uniform => 1.0,
                            Weighting::Born => self.weights[lo] + self.weights[hi],
                        };
                        (two_point_variance(x0, x1), w)
                    }
                    _ => (0.0, 0.0),
                }
            })
            .collect();
        let (num, den) = terms.iter().fold((0.0, 0.0), |(n, d), (v, w)| (n + v * w, d + w));
        if !(den > 0.0) {
            return Err(Error::DegenerateState);
        }
        Ok(num / den)
    }

    pub fn variance_profile(&self, selector: usize, weighting: Weighting) -> Result<VarianceProfile> {
        let per_site = (0..self.num_sites).map(|i| self.flip_variance(selector, i, weighting)).collect::<Result<Vec<_>>>()?;
        Ok(VarianceProfile {
            kind: self.selectors[selector].kind,
            sites: self.selectors[selector].sites.clone(),
            display_offset: display_offset(self.num_sites),
            per_site,
        })
    }

    pub fn variance_profiles(&self, weighting: Weighting) -> Result<Vec<VarianceProfile>> {
        (0..self.selectors.len()).map(|s| self.variance_profile(s, weighting)).collect()
    }
}

/// Variance of the two equally weighted values `{x0, x1}`: `|x0 - x1|²/4`.
/// Complex entries use the modulus.
pub fn two_point_variance(x0: C64, x1: C64) -> f64 {
    (x0 - x1).norm_sqr() / 4.0
}

/// Flip variance of one entry at one flipped site, computed from scratch.
pub fn flip_variance(protocol: &MeasurementProtocol, selector: &EntrySelector, site: usize, weighting: Weighting) -> Result<f64> {
    outcome_table(protocol, std::slice::from_ref(selector))?.flip_variance(0, site, weighting)
}

pub fn variance_profile(protocol: &MeasurementProtocol, selector: &EntrySelector, weighting: Weighting) -> Result<VarianceProfile> {
    outcome_table(protocol, std::slice::from_ref(selector))?.variance_profile(0, weighting)
}

/// Flip variance against flipped site for one entry.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceProfile {
    pub kind: EntryKind,
    /// Internal sites of the entry.
    pub sites: Vec<usize>,
    /// Internal index shown as display site 0.
    pub display_offset: usize,
    /// Indexed by internal flipped site.
    pub per_site: Vec<f64>,
}

impl VarianceProfile {
    pub fn num_sites(&self) -> usize {
        self.per_site.len()
    }

    pub fn display_site(&self, internal: usize) -> i64 {
        internal as i64 - self.display_offset as i64
    }

    /// Internal site of the largest value (first on ties).
    pub fn argmax(&self) -> usize {
        self.per_site.iter().enumerate().fold(0, |best, (i, &v)| if v > self.per_site[best] { i } else { best })
    }

    pub fn max(&self) -> f64 {
        self.per_site.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Periodic distance from `site` to the nearest entry site.
    pub fn distance_to_entry(&self, site: usize) -> usize {
        let n = self.num_sites();
        self.sites.iter().map(|&s| ring_distance(n, s, site)).min().unwrap_or(0)
    }

    /// Sites at the largest distance from the entry, ascending.
    pub fn farthest_sites(&self) -> Vec<usize> {
        let far = (0..self.num_sites()).map(|i| self.distance_to_entry(i)).max().unwrap_or(0);
        (0..self.num_sites()).filter(|&i| self.distance_to_entry(i) == far).collect()
    }

    /// Internal sites that exceed both ring neighbours.
    pub fn local_maxima(&self) -> Vec<usize> {
        let n = self.num_sites();
        let v = &self.per_site;
        (0..n).filter(|&i| v[i] > v[(i + n - 1) % n] && v[i] > v[(i + 1) % n]).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["display_site", "value", "rescaled_value"]).map_err(|e| csv_error(path, e))?;
        let scale = self.kind.display_scale();
        for (i, &v) in self.per_site.iter().enumerate() {
            w.write_record([self.display_site(i).to_string(), fmt_f64(v), fmt_f64(v * scale)]).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn ring_distance(n: usize, a: usize, b: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Malformed(format!("{}: {other:?}", path.display())),
    }
}

/// One record's `ρ₀₁` with its label and weight.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatterPoint {
    pub label: TruncatedLabel,
    pub re: f64,
    pub im: f64,
    pub weight: f64,
}

/// Off-diagonal entries of one-body records carrying each requested label,
/// grouped in request order and dataset order within a label.
pub fn offdiag_scatter(dataset: &RdmDataset, labels: &[TruncatedLabel]) -> Result<Vec<ScatterPoint>> {
    if dataset.rdm_dim() != 2 {
        return Err(Error::InvalidConfig("scatter needs a one-body dataset".into()));
    }
    let mut out = Vec::new();
    for label in labels {
        for (rdm, weight) in dataset.group_by_label(label)? {
            let z = rdm.entry(0, 1);
            out.push(ScatterPoint { label: label.clone(), re: z.re, im: z.im, weight });
        }
    }
    Ok(out)
}

/// Builds the exhaustive one-body dataset in memory and scatters it.
pub fn offdiag_scatter_live(
    protocol: &MeasurementProtocol,
    evolution: &EvolutionConfig,
    radius: usize,
    labels: &[TruncatedLabel],
) -> Result<Vec<ScatterPoint>> {
    let config = DatasetConfig { radius, offsets: vec![0], mode: GenerationMode::Exhaustive };
    offdiag_scatter(&crate::dataset::build_dataset(protocol, evolution, &config, 0)?, labels)
}

/// Weighted centroid of one label's points in the complex plane, or `None`
/// when the label has no weight.
pub fn cloud_mean(points: &[ScatterPoint], label: &TruncatedLabel, weighting: Weighting) -> Option<C64> {
    let (sum, total) = points.iter().filter(|p| &p.label == label).fold((C64::new(0.0, 0.0), 0.0), |(s, t), p| {
        let w = match weighting {
            Weighting::Uniform => 1.0,
            Weighting::Born => p.weight,
        };
        (s + C64::new(p.re, p.im) * w, t + w)
    });
    (total > 0.0).then(|| sum / total)
}

/// Distance between two labels' centroids.
pub fn cloud_separation(points: &[ScatterPoint], a: &TruncatedLabel, b: &TruncatedLabel, weighting: Weighting) -> Option<f64> {
    Some((cloud_mean(points, a, weighting)? - cloud_mean(points, b, weighting)?).norm())
}

pub fn write_scatter_csv(points: &[ScatterPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["label", "re", "im", "weight"]).map_err(|e| csv_error(path, e))?;
    for p in points {
        w.write_record([p.label.to_string(), fmt_f64(p.re), fmt_f64(p.im), fmt_f64(p.weight)]).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
