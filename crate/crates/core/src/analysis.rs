//! Listening-test aggregation and regression analysis over an edited corpus.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::session::{Confidence, ExportRecord};
use crate::track::FeatureKind;

/// Width of relative-change histogram bins.
pub const BIN_WIDTH: f64 = 0.05;
/// Relative changes are binned over `[0, HISTOGRAM_MAX]`; outliers go to the edge bins.
pub const HISTOGRAM_MAX: f64 = 2.0;
pub const BIN_COUNT: usize = 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("no records")]
    Empty,
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("zero vector")]
    ZeroVector,
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("x and y lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("all x values are equal")]
    DegenerateX,
    #[error("non-finite input")]
    NonFinite,
    #[error("no joined items for {0}")]
    EmptyJoin(String),
}

/// Mean and sample standard deviation. `single` marks n = 1, where the
/// standard deviation is undefined and reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub single: bool,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std =
            if n > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        Some(MeanStd { n, mean, std, single: n == 1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Original,
    Edited,
    Anchor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RatingKind {
    #[serde(rename = "mos_1_5")]
    Mos,
    #[serde(rename = "mushra_0_100")]
    Mushra,
    #[serde(rename = "ab_choice")]
    AbChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbChoice {
    Original,
    Edited,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RatingValue {
    Score(f64),
    Choice(AbChoice),
}

/// One listener judgement.
///
/// For `ab_choice` records the preferred sample is carried in `value`;
/// `condition` is not used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub item_id: String,
    pub kind: RatingKind,
    pub condition: Condition,
    pub confidence: Confidence,
    pub value: RatingValue,
}

impl RatingRecord {
    pub fn validate(&self) -> Result<(), String> {
        match (self.kind, self.value) {
            (RatingKind::Mos, RatingValue::Score(v)) if (1.0..=5.0).contains(&v) && v.fract() == 0.0 => Ok(()),
            (RatingKind::Mos, v) => Err(format!("MOS rating must be an integer 1..5, got {v:?}")),
            (RatingKind::Mushra, RatingValue::Score(v)) if (0.0..=100.0).contains(&v) => Ok(()),
            (RatingKind::Mushra, v) => Err(format!("MUSHRA rating must lie in [0, 100], got {v:?}")),
            (RatingKind::AbChoice, RatingValue::Choice(_)) => Ok(()),
            (RatingKind::AbChoice, v) => Err(format!("A/B value must be \"original\" or \"edited\", got {v:?}")),
        }
    }

    fn score(&self) -> Option<f64> {
        match self.value {
            RatingValue::Score(v) => Some(v),
            RatingValue::Choice(_) => None,
        }
    }

    fn choice(&self) -> Option<AbChoice> {
        match self.value {
            RatingValue::Choice(c) => Some(c),
            RatingValue::Score(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPair {
    pub item_id: String,
    pub reference: Vec<f64>,
    pub sample: Vec<f64>,
    pub mushra: f64,
}

fn parse_lines<T: serde::de::DeserializeOwned>(
    text: &str,
    check: impl Fn(&T) -> Result<(), String>,
) -> Result<Vec<T>, AnalysisError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_err = |message: String| AnalysisError::Line { line: i + 1, message };
        let record: T = serde_json::from_str(line).map_err(|e| line_err(e.to_string()))?;
        check(&record).map_err(line_err)?;
        out.push(record);
    }
    Ok(out)
}

/// Parses a line-delimited ratings file.
pub fn parse_ratings(text: &str) -> Result<Vec<RatingRecord>, AnalysisError> {
    parse_lines(text, RatingRecord::validate)
}

/// Parses a line-delimited embeddings file.
pub fn parse_embeddings(text: &str) -> Result<Vec<EmbeddingPair>, AnalysisError> {
    parse_lines(text, |p: &EmbeddingPair| {
        if p.reference.is_empty() || p.reference.len() != p.sample.len() {
            return Err(format!(
                "embedding dimensions must be equal and nonzero ({} vs {})",
                p.reference.len(),
                p.sample.len()
            ));
        }
        if p.reference.iter().chain(&p.sample).any(|v| !v.is_finite()) {
            return Err("embedding entries must be finite".into());
        }
        if !(0.0..=100.0).contains(&p.mushra) {
            return Err(format!("mushra score must lie in [0, 100], got {}", p.mushra));
        }
        Ok(())
    })
}

/// Percentages of A/B choices favouring (original, edited).
pub fn ab_preference(choices: &[AbChoice]) -> Result<(f64, f64), AnalysisError> {
    if choices.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let n = choices.len() as f64;
    let originals = choices.iter().filter(|c| **c == AbChoice::Original).count() as f64;
    let pct_original = 100.0 * originals / n;
    Ok((pct_original, 100.0 - pct_original))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub mos: Option<MeanStd>,
    pub mushra: Option<MeanStd>,
    /// Share of A/B choices won by this condition, in percent.
    pub ab_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub original: ConditionRow,
    pub edited: ConditionRow,
    /// MUSHRA-like scores of the random-reference anchor.
    pub anchor_mushra: Option<MeanStd>,
    pub ab_n: usize,
    pub records: usize,
}

/// Results broken down by participant confidence. Strata without any
/// records are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub low: Option<Stratum>,
    pub high: Option<Stratum>,
    pub total: Option<Stratum>,
}

fn stratum(records: &[&RatingRecord]) -> Option<Stratum> {
    if records.is_empty() {
        return None;
    }
    let scores = |kind: RatingKind, cond: Condition| -> Option<MeanStd> {
        let v: Vec<f64> =
            records.iter().filter(|r| r.kind == kind && r.condition == cond).filter_map(|r| r.score()).collect();
        MeanStd::of(&v)
    };
    let choices: Vec<AbChoice> =
        records.iter().filter(|r| r.kind == RatingKind::AbChoice).filter_map(|r| r.choice()).collect();
    let ab = ab_preference(&choices).ok();
    let row = |cond: Condition, pct: Option<f64>| ConditionRow {
        mos: scores(RatingKind::Mos, cond),
        mushra: scores(RatingKind::Mushra, cond),
        ab_pct: pct,
    };
    Some(Stratum {
        original: row(Condition::Original, ab.map(|p| p.0)),
        edited: row(Condition::Edited, ab.map(|p| p.1)),
        anchor_mushra: scores(RatingKind::Mushra, Condition::Anchor),
        ab_n: choices.len(),
        records: records.len(),
    })
}

pub fn aggregate_table(records: &[RatingRecord]) -> Result<ResultsTable, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let by = |c: Confidence| records.iter().filter(|r| r.confidence == c).collect::<Vec<_>>();
    Ok(ResultsTable {
        low: stratum(&by(Confidence::Low)),
        high: stratum(&by(Confidence::High)),
        total: stratum(&records.iter().collect::<Vec<_>>()),
    })
}

/// `1 - cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, AnalysisError> {
    if a.len() != b.len() {
        return Err(AnalysisError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(dot.is_finite() && na.is_finite() && nb.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    if na == 0.0 || nb == 0.0 {
        return Err(AnalysisError::ZeroVector);
    }
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
}

/// Ordinary least-squares line with a 95% band for the conditional mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation; 0 when the responses are constant.
    pub r: f64,
    pub residual_std: f64,
    pub t_critical: f64,
    pub x_mean: f64,
    pub sxx: f64,
    pub x_min: f64,
    pub x_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub x: f64,
    pub fit: f64,
    pub lo: f64,
    pub hi: f64,
}

impl RegressionFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// Half-width of the 95% confidence band at `x`.
    pub fn half_width(&self, x: f64) -> f64 {
        let d = x - self.x_mean;
        self.t_critical * self.residual_std * (1.0 / self.n as f64 + d * d / self.sxx).sqrt()
    }

    pub fn band(&self, x: f64) -> BandPoint {
        let fit = self.predict(x);
        let h = self.half_width(x);
        BandPoint { x, fit, lo: fit - h, hi: fit + h }
    }

    /// Band evaluated at `points` evenly spaced x values over the data range.
    pub fn band_samples(&self, points: usize) -> Vec<BandPoint> {
        match points {
            0 => Vec::new(),
            1 => vec![self.band(self.x_min)],
            _ => (0..points)
                .map(|i| self.band(self.x_min + (self.x_max - self.x_min) * i as f64 / (points - 1) as f64))
                .collect(),
        }
    }
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<RegressionFit, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(AnalysisError::TooFewPoints(n));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(AnalysisError::DegenerateX);
    }
    let nf = n as f64;
    let x_mean = xs.iter().sum::<f64>() / nf;
    let y_mean = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - x_mean, y - y_mean);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let r = if syy > 0.0 { (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0) } else { 0.0 };
    let sse: f64 = xs.iter().zip(ys).map(|(&x, &y)| (y - intercept - slope * x).powi(2)).sum();
    let residual_std = (sse / (nf - 2.0)).sqrt();
    let t_critical = StudentsT::new(0.0, 1.0, nf - 2.0).expect("n >= 3 gives positive dof").inverse_cdf(0.975);
    let x_min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RegressionFit { n, slope, intercept, r, residual_std, t_critical, x_mean, sxx, x_min, x_max })
}

/// Counts of relative phone-level changes for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureHistogram {
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Default for FeatureHistogram {
    fn default() -> Self {
        Self { counts: vec![0; BIN_COUNT], total: 0 }
    }
}

impl FeatureHistogram {
    fn add(&mut self, ratio: f64) {
        let per_unit = BIN_COUNT as f64 / HISTOGRAM_MAX;
        let bin = ((ratio * per_unit).floor().max(0.0) as usize).min(BIN_COUNT - 1);
        self.counts[bin] += 1;
        self.total += 1;
    }

    /// Lower edge of bin `i`.
    pub fn bin_start(i: usize) -> f64 {
        i as f64 * BIN_WIDTH
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditDistribution {
    pub bin_width: f64,
    pub range: [f64; 2],
    pub f0: FeatureHistogram,
    pub energy: FeatureHistogram,
    pub duration: FeatureHistogram,
    /// Records whose baseline and edited tracks differ in shape.
    pub skipped_records: usize,
}

impl EditDistribution {
    pub fn histogram(&self, feature: FeatureKind) -> &FeatureHistogram {
        match feature {
            FeatureKind::F0 => &self.f0,
            FeatureKind::Energy => &self.energy,
            FeatureKind::Duration => &self.duration,
        }
    }

    fn histogram_mut(&mut self, feature: FeatureKind) -> &mut FeatureHistogram {
        match feature {
            FeatureKind::F0 => &mut self.f0,
            FeatureKind::Energy => &mut self.energy,
            FeatureKind::Duration => &mut self.duration,
        }
    }
}

/// Histogram of `edited / baseline` per phone and feature, unchanged values omitted.
pub fn edit_distribution(records: &[ExportRecord]) -> EditDistribution {
    let mut dist = EditDistribution {
        bin_width: BIN_WIDTH,
        range: [0.0, HISTOGRAM_MAX],
        f0: FeatureHistogram::default(),
        energy: FeatureHistogram::default(),
        duration: FeatureHistogram::default(),
        skipped_records: 0,
    };
    for record in records {
        if record.baseline.phones.len() != record.edited.phones.len() {
            dist.skipped_records += 1;
            continue;
        }
        for (before, after) in record.baseline.phones.iter().zip(&record.edited.phones) {
            for feature in FeatureKind::ALL {
                if feature == FeatureKind::F0 && !before.voiced {
                    continue;
                }
                let (b, a) = (before.feature(feature), after.feature(feature));
                if b == 0.0 || a == b {
                    continue;
                }
                dist.histogram_mut(feature).add(a / b);
            }
        }
    }
    dist
}

/// Per-item mean rating of the edited sample joined with editing time.
fn effort_points(records: &[ExportRecord], ratings: &[RatingRecord], kind: RatingKind) -> (Vec<f64>, Vec<f64>) {
    let mut per_item: HashMap<&str, (f64, usize)> = HashMap::new();
    for r in ratings.iter().filter(|r| r.kind == kind && r.condition == Condition::Edited) {
        if let Some(v) = r.score() {
            let e = per_item.entry(r.item_id.as_str()).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in records {
        if let Some(&(sum, n)) = per_item.get(rec.session_id.as_str()) {
            xs.push(rec.elapsed_seconds);
            ys.push(sum / n as f64);
        }
    }
    (xs, ys)
}

/// Quality (MOS, MUSHRA-like) of edited samples regressed on editing time.
pub fn effort_vs_quality(
    records: &[ExportRecord],
    ratings: &[RatingRecord],
) -> BTreeMap<&'static str, Result<RegressionFit, AnalysisError>> {
    [(RatingKind::Mos, "mos"), (RatingKind::Mushra, "mushra")]
        .into_iter()
        .map(|(kind, name)| {
            let (xs, ys) = effort_points(records, ratings, kind);
            let fit = if xs.is_empty() { Err(AnalysisError::EmptyJoin(name.into())) } else { linear_fit(&xs, &ys) };
            (name, fit)
        })
        .collect()
}

/// MUSHRA-like score regressed on the cosine distance between embeddings.
pub fn distance_vs_similarity(pairs: &[EmbeddingPair]) -> Result<RegressionFit, AnalysisError> {
    if pairs.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let xs = pairs.iter().map(|p| cosine_distance(&p.reference, &p.sample)).collect::<Result<Vec<_>, _>>()?;
    let ys: Vec<f64> = pairs.iter().map(|p| p.mushra).collect();
    linear_fit(&xs, &ys)
}
