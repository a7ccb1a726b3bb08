//! Per-field statistics computed in one pass over the matching documents.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Document, StoreError, Value};

pub const KDE_POINTS: usize = 128;
pub const MIN_AUTO_BINS: usize = 10;
pub const MAX_AUTO_BINS: usize = 100;
pub const FALLBACK_BINS: usize = 20;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Value", into = "serde_json::Value")]
pub enum Bins {
    /// Freedman–Diaconis, clamped.
    #[default]
    Auto,
    Fixed(usize),
}

impl TryFrom<serde_json::Value> for Bins {
    type Error = String;
    fn try_from(v: serde_json::Value) -> Result<Self, String> {
        match &v {
            serde_json::Value::String(s) if s == "auto" => Ok(Bins::Auto),
            serde_json::Value::Null => Ok(Bins::Auto),
            serde_json::Value::Number(n) => match n.as_u64() {
                Some(k) if k >= 1 => Ok(Bins::Fixed(k as usize)),
                _ => Err(format!("bins must be \"auto\" or a positive integer, got {n}")),
            },
            other => Err(format!("bins must be \"auto\" or a positive integer, got {other}")),
        }
    }
}

impl From<Bins> for serde_json::Value {
    fn from(b: Bins) -> Self {
        match b {
            Bins::Auto => "auto".into(),
            Bins::Fixed(k) => k.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryOpts {
    pub bins: Bins,
    /// Categorical field whose values split each numeric field into box plots.
    pub group_by: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Numeric,
    Categorical,
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdKind {
    #[default]
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxPlot {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub value: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBoxPlot {
    pub category: String,
    pub count: usize,
    pub boxplot: BoxPlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub field: String,
    pub kind: FieldKind,
    /// Numeric values for numeric fields, non-null values for categorical ones.
    pub count: usize,
    pub missing: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub std_kind: StdKind,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub histogram: Vec<HistogramBin>,
    pub kde: Vec<[f64; 2]>,
    pub bandwidth: Option<f64>,
    pub boxplot: Option<BoxPlot>,
    pub categories: Vec<CategoryCount>,
    pub groups: Vec<GroupBoxPlot>,
}

/// Linear interpolation between closest ranks on sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    match sorted.get(lo + 1) {
        Some(&next) if frac > 0.0 => sorted[lo] + frac * (next - sorted[lo]),
        _ => sorted[lo],
    }
}

pub fn boxplot(sorted: &[f64]) -> BoxPlot {
    let q1 = quantile(sorted, 0.25);
    let q3 = quantile(sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || sorted.iter().copied().filter(|&x| x >= lo_fence && x <= hi_fence);
    BoxPlot {
        median: quantile(sorted, 0.5),
        q1,
        q3,
        whisker_lo: inside().fold(f64::INFINITY, f64::min),
        whisker_hi: inside().fold(f64::NEG_INFINITY, f64::max),
        outliers: sorted.iter().filter(|&&x| x < lo_fence || x > hi_fence).count(),
    }
}

pub fn auto_bin_count(sorted: &[f64]) -> usize {
    let iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    if iqr <= 0.0 {
        return FALLBACK_BINS;
    }
    let width = 2.0 * iqr * (sorted.len() as f64).powf(-1.0 / 3.0);
    let range = sorted[sorted.len() - 1] - sorted[0];
    ((range / width).ceil() as usize).clamp(MIN_AUTO_BINS, MAX_AUTO_BINS)
}

/// Equal-width bins over [min, max] (widened by 0.5 each side when the data
/// is constant); the last bin is closed on the right.
pub fn histogram(sorted: &[f64], bins: usize) -> Vec<HistogramBin> {
    let (mut lo, mut hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let edge = |i: usize| if i == bins { hi } else { lo + (hi - lo) * i as f64 / bins as f64 };
    let mut counts = vec![0usize; bins];
    for &x in sorted {
        let mut idx = (((x - lo) / (hi - lo)) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize;
        while idx > 0 && x < edge(idx) {
            idx -= 1;
        }
        while idx + 1 < bins && x >= edge(idx + 1) {
            idx += 1;
        }
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin { left: edge(i), right: edge(i + 1), count })
        .collect()
}

pub fn silverman_bandwidth(sorted: &[f64], std: f64) -> f64 {
    let iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    if std > 0.0 && iqr > 0.0 {
        0.9 * std.min(iqr / 1.34) * (sorted.len() as f64).powf(-0.2)
    } else {
        (0.1 * (sorted[sorted.len() - 1] - sorted[0])).max(1e-9)
    }
}

/// Gaussian KDE on a regular grid, with the data first spread linearly onto
/// the two nearest grid points.
pub fn binned_kde(values: &[f64], min: f64, max: f64, bandwidth: f64) -> Vec<[f64; 2]> {
    let lo = min - 3.0 * bandwidth;
    let hi = max + 3.0 * bandwidth;
    let step = (hi - lo) / (KDE_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..KDE_POINTS).map(|i| lo + step * i as f64).collect();
    let mut weights = vec![0.0; KDE_POINTS];
    for &x in values {
        let t = (x - lo) / step;
        let i = (t.floor().max(0.0) as usize).min(KDE_POINTS - 2);
        let frac = (t - i as f64).clamp(0.0, 1.0);
        weights[i] += 1.0 - frac;
        weights[i + 1] += frac;
    }
    let norm = 1.0 / (values.len() as f64 * bandwidth * (2.0 * PI).sqrt());
    grid.iter()
        .map(|&g| {
            let density: f64 = grid
                .iter()
                .zip(&weights)
                .filter(|(_, &w)| w != 0.0)
                .map(|(&c, &w)| {
                    let u = (g - c) / bandwidth;
                    w * (-0.5 * u * u).exp()
                })
                .sum();
            [g, density * norm]
        })
        .collect()
}

#[derive(Default)]
struct Accumulator {
    count: usize,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
    values: Vec<f64>,
    categories: BTreeMap<String, usize>,
    groups: BTreeMap<String, Vec<f64>>,
}

impl Accumulator {
    fn push_number(&mut self, x: f64) {
        if self.count == 0 {
            self.min = x;
            self.max = x;
        } else {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        self.values.push(x);
    }

    fn finish(self, field: &str, total: usize, bins: Bins, grouped: bool) -> Result<FieldSummary, StoreError> {
        let mut s = FieldSummary {
            field: field.to_string(),
            kind: FieldKind::Empty,
            count: 0,
            missing: total,
            min: None,
            max: None,
            mean: None,
            std: None,
            std_kind: StdKind::Population,
            q1: None,
            median: None,
            q3: None,
            histogram: Vec::new(),
            kde: Vec::new(),
            bandwidth: None,
            boxplot: None,
            categories: Vec::new(),
            groups: Vec::new(),
        };
        if self.count == 0 {
            if self.categories.is_empty() {
                return Ok(s);
            }
            if grouped {
                return Err(StoreError::NonNumericField(field.to_string()));
            }
            s.kind = FieldKind::Categorical;
            s.count = self.categories.values().sum();
            s.missing = total - s.count;
            let mut cats: Vec<CategoryCount> =
                self.categories.into_iter().map(|(value, count)| CategoryCount { value, count }).collect();
            cats.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.value.cmp(&b.value)));
            s.categories = cats;
            return Ok(s);
        }

        let mut sorted = self.values;
        sorted.sort_by(f64::total_cmp);
        let std = (self.m2 / self.count as f64).sqrt();
        let n_bins = match bins {
            Bins::Auto => auto_bin_count(&sorted),
            Bins::Fixed(k) => k,
        };
        let bandwidth = silverman_bandwidth(&sorted, std);
        s.kind = FieldKind::Numeric;
        s.count = self.count;
        s.missing = total - self.count;
        s.min = Some(self.min);
        s.max = Some(self.max);
        s.mean = Some(self.mean);
        s.std = Some(std);
        s.q1 = Some(quantile(&sorted, 0.25));
        s.median = Some(quantile(&sorted, 0.5));
        s.q3 = Some(quantile(&sorted, 0.75));
        s.histogram = histogram(&sorted, n_bins);
        s.kde = binned_kde(&sorted, self.min, self.max, bandwidth);
        s.bandwidth = Some(bandwidth);
        s.boxplot = Some(boxplot(&sorted));
        s.groups = self
            .groups
            .into_iter()
            .map(|(category, mut values)| {
                values.sort_by(f64::total_cmp);
                GroupBoxPlot { category, count: values.len(), boxplot: boxplot(&values) }
            })
            .collect();
        Ok(s)
    }
}

fn category_key(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        other => Some(other.to_string()),
    }
}

/// Summarizes `fields` over `docs`. Documents without a value for the
/// grouping field are left out of the group box plots.
pub fn summarize_docs<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
    fields: &[String],
    opts: &SummaryOpts,
) -> Result<Vec<FieldSummary>, StoreError> {
    if let Bins::Fixed(0) = opts.bins {
        return Err(StoreError::InvalidParameter("bins must be positive".into()));
    }
    let mut accs: Vec<Accumulator> = fields.iter().map(|_| Accumulator::default()).collect();
    let mut total = 0usize;
    for doc in docs {
        total += 1;
        let group = opts.group_by.as_deref().and_then(|g| doc.get(g)).as_ref().and_then(category_key);
        for (field, acc) in fields.iter().zip(accs.iter_mut()) {
            match doc.get(field) {
                Some(Value::Number(x)) => {
                    acc.push_number(x);
                    if let Some(g) = &group {
                        acc.groups.entry(g.clone()).or_default().push(x);
                    }
                }
                Some(v) => {
                    if let Some(key) = category_key(&v) {
                        *acc.categories.entry(key).or_default() += 1;
                    }
                }
                None => {}
            }
        }
    }
    fields
        .iter()
        .zip(accs)
        .map(|(field, acc)| acc.finish(field, total, opts.bins, opts.group_by.is_some()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(values: &[f64]) -> Vec<Document> {
        values
            .iter()
            .enumerate()
            .map(|(i, &x)| Document::new(format!("d{i}"), "C").with("mass", Value::Number(x)))
            .collect()
    }

    #[test]
    fn five_values() {
        let d = docs(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let s = &summarize_docs(&d, &["mass".into()], &SummaryOpts::default()).unwrap()[0];
        assert_eq!(s.mean, Some(3.0));
        assert!((s.std.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((s.q1, s.median, s.q3), (Some(2.0), Some(3.0), Some(4.0)));
        assert_eq!(s.histogram.iter().map(|b| b.count).sum::<usize>(), 5);
        assert_eq!(s.kde.len(), KDE_POINTS);
    }

    #[test]
    fn absent_field_is_all_missing() {
        let d = docs(&[1.0, 2.0]);
        let s = &summarize_docs(&d, &["boiling".into()], &SummaryOpts::default()).unwrap()[0];
        assert_eq!((s.kind, s.count, s.missing, s.mean), (FieldKind::Empty, 0, 2, None));
    }

    #[test]
    fn text_cells_count_as_missing_for_numbers() {
        let mut d = docs(&[1.0, 2.0, 3.0]);
        d[1].fields.insert("mass".into(), Value::Text("n/a".into()));
        let s = &summarize_docs(&d, &["mass".into()], &SummaryOpts::default()).unwrap()[0];
        assert_eq!((s.count, s.missing), (2, 1));
        assert_eq!(s.mean, Some(2.0));
    }

    #[test]
    fn categorical_and_grouped() {
        let d: Vec<Document> = (0..6)
            .map(|i| {
                Document::new(format!("d{i}"), "C")
                    .with("family", Value::Text(if i < 4 { "a".into() } else { "b".into() }))
                    .with("mass", Value::Number(i as f64))
            })
            .collect();
        let s = &summarize_docs(&d, &["family".into()], &SummaryOpts::default()).unwrap()[0];
        assert_eq!(s.kind, FieldKind::Categorical);
        assert_eq!(s.categories[0], CategoryCount { value: "a".into(), count: 4 });
        let opts = SummaryOpts { group_by: Some("family".into()), ..Default::default() };
        let g = &summarize_docs(&d, &["mass".into()], &opts).unwrap()[0];
        assert_eq!(g.groups.len(), 2);
        assert_eq!(g.groups[1].boxplot.median, 4.5);
        assert_eq!(
            summarize_docs(&d, &["family".into()], &opts),
            Err(StoreError::NonNumericField("family".into()))
        );
    }

    #[test]
    fn boxplot_flags_outliers() {
        let b = boxplot(&[1.0, 2.0, 3.0, 4.0, 100.0]);
        assert_eq!(b.outliers, 1);
        assert_eq!(b.whisker_hi, 4.0);
        assert_eq!(b.whisker_lo, 1.0);
    }

    #[test]
    fn kde_integrates_to_one() {
        let v: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 10.0).collect();
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        let h = silverman_bandwidth(&sorted, std);
        let kde = binned_kde(&v, sorted[0], sorted[199], h);
        let step = kde[1][0] - kde[0][0];
        let area: f64 = kde.iter().map(|p| p[1]).sum::<f64>() * step;
        assert!((area - 1.0).abs() < 0.01, "{area}");
    }
}
