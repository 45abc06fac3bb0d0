//! Global and local explanation artifacts: bar and beeswarm summaries,
//! dependence scatters and single-instance force bars, as serializable data
//! and as standalone SVG documents.
//!
//! Colors run from blue (`#008bff`, low feature value / negative push) to red
//! (`#ff0052`, high feature value / positive push). Rendering is a pure
//! function of the input; beeswarm jitter is a hash of the sample index.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featsel::{mean_abs_shap_importance, top_k, FeatureRanking};
use crate::scalar::Scalar;
use crate::shapley::ShapExplanation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPoint {
    pub feature: String,
    pub sample: usize,
    pub shap_value: f64,
    /// Feature value min-max normalized over the explained batch.
    pub normalized_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryData {
    pub ranking: FeatureRanking,
    pub points: Vec<SummaryPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencePoint {
    pub main_value: f64,
    pub shap_value: f64,
    pub interaction_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceData {
    pub main_feature: String,
    pub interaction_feature: String,
    pub points: Vec<DependencePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceContribution {
    pub feature: String,
    pub value: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceData {
    pub base_value: f64,
    pub prediction: f64,
    /// Sorted by `|phi|` descending.
    pub contributions: Vec<ForceContribution>,
}

impl ForceData {
    pub fn positive(&self) -> impl Iterator<Item = &ForceContribution> {
        self.contributions.iter().filter(|c| c.phi > 0.0)
    }

    pub fn negative(&self) -> impl Iterator<Item = &ForceContribution> {
        self.contributions.iter().filter(|c| c.phi < 0.0)
    }
}

fn check_consistent<T: Scalar>(explanations: &[ShapExplanation<T>]) -> Result<&[String]> {
    let first = explanations
        .first()
        .ok_or_else(|| Error::invalid("no explanations"))?;
    if explanations.iter().any(|e| {
        e.feature_names != first.feature_names
            || e.phi.len() != first.feature_names.len()
            || e.feature_values.len() != first.feature_names.len()
    }) {
        return Err(Error::invalid("explanations have inconsistent features"));
    }
    Ok(&first.feature_names)
}

fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

/// Mean-|phi| ranking truncated to `top_n`, plus one point per (sample,
/// ranked feature).
pub fn global_summary<T: Scalar>(explanations: &[ShapExplanation<T>], top_n: usize) -> Result<SummaryData> {
    let names = check_consistent(explanations)?;
    let ranking = top_k(&mean_abs_shap_importance(explanations)?, top_n)?;
    let mut points = Vec::with_capacity(ranking.len() * explanations.len());
    for entry in &ranking.entries {
        let j = names.iter().position(|n| *n == entry.name).expect("ranked feature exists");
        let raw: Vec<f64> = explanations.iter().map(|e| e.feature_values[j].as_f64()).collect();
        for (sample, (e, norm)) in explanations.iter().zip(min_max_normalize(&raw)).enumerate() {
            points.push(SummaryPoint {
                feature: entry.name.clone(),
                sample,
                shap_value: e.phi[j].as_f64(),
                normalized_value: norm,
            });
        }
    }
    Ok(SummaryData { ranking, points })
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Per-sample `(value, phi)` of `main_feature`, colored by the feature whose
/// values correlate most strongly (in absolute Pearson terms) with the main
/// feature's attributions. Ties go to the lexicographically smaller name.
pub fn dependence_data<T: Scalar>(explanations: &[ShapExplanation<T>], main_feature: &str) -> Result<DependenceData> {
    let names = check_consistent(explanations)?;
    let main = names
        .iter()
        .position(|n| n == main_feature)
        .ok_or_else(|| Error::UnknownFeature(main_feature.to_string()))?;
    if names.len() < 2 {
        return Err(Error::invalid("dependence plot needs a second feature"));
    }
    let column = |j: usize| -> Vec<f64> { explanations.iter().map(|e| e.feature_values[j].as_f64()).collect() };
    let main_phi: Vec<f64> = explanations.iter().map(|e| e.phi[main].as_f64()).collect();
    let mut best: Option<(f64, usize)> = None;
    for c in (0..names.len()).filter(|&c| c != main) {
        let r = pearson(&column(c), &main_phi).abs();
        let better = match best {
            None => true,
            Some((br, bc)) => r > br || (r == br && names[c] < names[bc]),
        };
        if better {
            best = Some((r, c));
        }
    }
    let (_, inter) = best.expect("at least one other feature");
    let main_values = column(main);
    let inter_values = column(inter);
    let points = (0..explanations.len())
        .map(|i| DependencePoint {
            main_value: main_values[i],
            shap_value: main_phi[i],
            interaction_value: inter_values[i],
        })
        .collect();
    Ok(DependenceData {
        main_feature: main_feature.to_string(),
        interaction_feature: names[inter].clone(),
        points,
    })
}

pub fn force_data<T: Scalar>(explanation: &ShapExplanation<T>) -> ForceData {
    let mut contributions: Vec<ForceContribution> = explanation
        .feature_names
        .iter()
        .zip(&explanation.feature_values)
        .zip(&explanation.phi)
        .map(|((name, &value), &phi)| ForceContribution {
            feature: name.clone(),
            value: value.as_f64(),
            phi: phi.as_f64(),
        })
        .collect();
    contributions.sort_by(|a, b| b.phi.abs().total_cmp(&a.phi.abs()));
    let base_value = explanation.base_value.as_f64();
    ForceData {
        base_value,
        prediction: base_value + contributions.iter().map(|c| c.phi).sum::<f64>(),
        contributions,
    }
}

/// Anything that can be drawn.
#[derive(Debug, Clone, Copy)]
pub enum Plot<'a> {
    Bar(&'a FeatureRanking),
    Summary(&'a SummaryData),
    Dependence(&'a DependenceData),
    Force(&'a ForceData),
}

impl Plot<'_> {
    pub fn kind(&self) -> &'static str {
        match self {
            Plot::Bar(_) => "bar",
            Plot::Summary(_) => "summary",
            Plot::Dependence(_) => "dependence",
            Plot::Force(_) => "force",
        }
    }

    /// `<kind>_<scenario>.svg`
    pub fn file_name(&self, scenario: &str) -> String {
        format!("{}_{}.svg", self.kind(), scenario)
    }

    pub fn to_svg(&self) -> String {
        match self {
            Plot::Bar(r) => bar_svg(r),
            Plot::Summary(s) => summary_svg(s),
            Plot::Dependence(d) => dependence_svg(d),
            Plot::Force(f) => force_svg(f),
        }
    }
}

pub fn render_svg(plot: Plot<'_>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, plot.to_svg()).map_err(|e| Error::io(path, e))
}

const WIDTH: f64 = 800.0;
const LABEL_MARGIN: f64 = 230.0;
const RIGHT_MARGIN: f64 = 40.0;
const ROW: f64 = 26.0;
const TOP: f64 = 30.0;
const BLUE: (f64, f64, f64) = (0.0, 139.0, 255.0);
const RED: (f64, f64, f64) = (255.0, 0.0, 82.0);

fn color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.5 };
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(BLUE.0, RED.0), mix(BLUE.1, RED.1), mix(BLUE.2, RED.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height:.0}" viewBox="0 0 {WIDTH} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
}

/// Linear map from `[lo, hi]` onto `[a, b]`.
struct Scale {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, a: f64, b: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self { lo, hi, a, b }
    }

    fn at(&self, v: f64) -> f64 {
        self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }
}

fn bar_svg(ranking: &FeatureRanking) -> String {
    let height = TOP * 2.0 + ROW * ranking.len() as f64;
    let mut out = String::new();
    header(&mut out, height, "mean |SHAP value|");
    let max = ranking.entries.iter().map(|e| e.score).fold(0.0, f64::max);
    let x = Scale::new(0.0, if max > 0.0 { max } else { 1.0 }, LABEL_MARGIN, WIDTH - RIGHT_MARGIN);
    for (i, e) in ranking.entries.iter().enumerate() {
        let y = TOP + ROW * i as f64;
        let _ = writeln!(out, r#"<g class="row" data-feature="{}">"#, escape(&e.name));
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LABEL_MARGIN - 8.0,
            y + ROW * 0.6,
            escape(&e.name)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{LABEL_MARGIN:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#008bff"/>"##,
            y + 4.0,
            (x.at(e.score) - LABEL_MARGIN).max(0.0),
            ROW - 8.0
        );
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">mean(|SHAP value|)</text>"#,
        (LABEL_MARGIN + WIDTH - RIGHT_MARGIN) / 2.0,
        height - 8.0
    );
    out.push_str("</svg>\n");
    out
}

/// Deterministic offset in `[-0.5, 0.5)` from a sample index (splitmix64).
fn jitter(sample: usize) -> f64 {
    let mut z = (sample as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

fn summary_svg(data: &SummaryData) -> String {
    let height = TOP * 2.0 + ROW * data.ranking.len() as f64 + 20.0;
    let mut out = String::new();
    header(&mut out, height, "SHAP summary");
    let (lo, hi) = data
        .points
        .iter()
        .fold((0.0f64, 0.0f64), |(lo, hi), p| (lo.min(p.shap_value), hi.max(p.shap_value)));
    let x = Scale::new(lo, hi, LABEL_MARGIN, WIDTH - RIGHT_MARGIN);
    let zero = x.at(0.0);
    let bottom = TOP + ROW * data.ranking.len() as f64;
    let _ = writeln!(
        out,
        r##"<line x1="{zero:.2}" y1="{TOP:.2}" x2="{zero:.2}" y2="{bottom:.2}" stroke="#999999"/>"##
    );
    for (i, e) in data.ranking.entries.iter().enumerate() {
        let y = TOP + ROW * i as f64 + ROW / 2.0;
        let _ = writeln!(out, r#"<g class="row" data-feature="{}">"#, escape(&e.name));
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LABEL_MARGIN - 8.0,
            y + 4.0,
            escape(&e.name)
        );
        for p in data.points.iter().filter(|p| p.feature == e.name) {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                x.at(p.shap_value),
                y + jitter(p.sample) * ROW * 0.7,
                color(p.normalized_value)
            );
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">SHAP value (color: feature value, blue low, red high)</text>"#,
        (LABEL_MARGIN + WIDTH - RIGHT_MARGIN) / 2.0,
        height - 10.0
    );
    out.push_str("</svg>\n");
    out
}

fn dependence_svg(data: &DependenceData) -> String {
    let height = 420.0;
    let (left, right, top, bottom) = (70.0, WIDTH - RIGHT_MARGIN, TOP, height - 50.0);
    let mut out = String::new();
    header(&mut out, height, &format!("SHAP dependence: {}", data.main_feature));
    let range = |f: &dyn Fn(&DependencePoint) -> f64| {
        data.points
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (xlo, xhi) = range(&|p| p.main_value);
    let (ylo, yhi) = range(&|p| p.shap_value);
    let (clo, chi) = range(&|p| p.interaction_value);
    let x = Scale::new(xlo, xhi, left, right);
    let y = Scale::new(ylo, yhi, bottom, top);
    let _ = writeln!(
        out,
        r##"<line x1="{left:.2}" y1="{bottom:.2}" x2="{right:.2}" y2="{bottom:.2}" stroke="#333333"/>"##
    );
    let _ = writeln!(
        out,
        r##"<line x1="{left:.2}" y1="{top:.2}" x2="{left:.2}" y2="{bottom:.2}" stroke="#333333"/>"##
    );
    for p in &data.points {
        let c = if chi > clo { (p.interaction_value - clo) / (chi - clo) } else { 0.0 };
        let _ = writeln!(
            out,
            r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
            x.at(p.main_value),
            y.at(p.shap_value),
            color(c)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        height - 15.0,
        escape(&data.main_feature)
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{:.2}" transform="rotate(-90 15 {:.2})" text-anchor="middle">SHAP value for {}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(&data.main_feature)
    );
    let _ = writeln!(
        out,
        r#"<text x="{right:.2}" y="18" text-anchor="end">color: {}</text>"#,
        escape(&data.interaction_feature)
    );
    out.push_str("</svg>\n");
    out
}

/// Red blocks (positive attributions) run left to right and end at the
/// prediction; blue blocks (negative) start at the prediction and run to
/// the right, ending at the base value.
fn force_svg(data: &ForceData) -> String {
    let height = 160.0;
    let bar_y = 60.0;
    let bar_h = 30.0;
    let mut out = String::new();
    header(&mut out, height, "SHAP force");
    let pos_total: f64 = data.positive().map(|c| c.phi).sum();
    let neg_total: f64 = data.negative().map(|c| -c.phi).sum();
    let start = data.prediction - pos_total;
    let end = data.prediction + neg_total;
    let lo = start.min(data.base_value).min(data.prediction);
    let hi = end.max(data.base_value).max(data.prediction);
    let x = Scale::new(lo, hi, 40.0, WIDTH - 40.0);

    let mut cursor = start;
    for c in data.positive() {
        let (a, b) = (x.at(cursor), x.at(cursor + c.phi));
        let _ = writeln!(
            out,
            r##"<rect class="pos" data-feature="{}" x="{a:.2}" y="{bar_y:.2}" width="{:.2}" height="{bar_h:.2}" fill="#ff0052" stroke="#ffffff"/>"##,
            escape(&c.feature),
            b - a
        );
        cursor += c.phi;
    }
    let mut cursor = data.prediction;
    for c in data.negative() {
        let (a, b) = (x.at(cursor), x.at(cursor - c.phi));
        let _ = writeln!(
            out,
            r##"<rect class="neg" data-feature="{}" x="{a:.2}" y="{bar_y:.2}" width="{:.2}" height="{bar_h:.2}" fill="#008bff" stroke="#ffffff"/>"##,
            escape(&c.feature),
            b - a
        );
        cursor -= c.phi;
    }
    for (class, v, label_y) in [("prediction", data.prediction, 40.0), ("base", data.base_value, 125.0)] {
        let px = x.at(v);
        let _ = writeln!(
            out,
            r##"<line class="{class}" x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#333333"/>"##,
            bar_y - 8.0,
            bar_y + bar_h + 8.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{px:.2}" y="{label_y:.2}" text-anchor="middle">{class} {v:.4}</text>"#
        );
    }
    let mut labels = String::new();
    for c in data.contributions.iter().take(6) {
        let _ = write!(labels, "{} = {:.4} ({:+.4})  ", escape(&c.feature), c.value, c.phi);
    }
    let _ = writeln!(out, r#"<text x="40" y="150" font-size="10">{}</text>"#, labels.trim_end());
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn explanation(values: Vec<f64>, phi: Vec<f64>, base: f64) -> ShapExplanation<f64> {
        let names = ["A", "B", "C", "D"][..phi.len()].iter().map(|s| s.to_string()).collect();
        ShapExplanation {
            feature_names: names,
            prediction: base + phi.iter().sum::<f64>(),
            feature_values: values,
            phi,
            base_value: base,
        }
    }

    #[test]
    fn summary_ranks_by_mean_abs() {
        let ex = [
            explanation(vec![1.0, 5.0], vec![0.3, 0.1], 0.5),
            explanation(vec![3.0, 5.0], vec![-0.3, 0.1], 0.5),
        ];
        let s = global_summary(&ex, 20).unwrap();
        assert_eq!(s.ranking.names(), vec!["A", "B"]);
        assert_eq!(s.ranking.entries[0].score, 0.3);
        assert!((s.ranking.entries[1].score - 0.1).abs() < 1e-15);
        assert_eq!(s.points.len(), 4);
        let a: Vec<f64> = s.points.iter().filter(|p| p.feature == "A").map(|p| p.normalized_value).collect();
        assert_eq!(a, vec![0.0, 1.0]);

        let top1 = global_summary(&ex, 1).unwrap();
        assert_eq!(top1.ranking.len(), 1);
        assert!(top1.points.iter().all(|p| p.feature == "A"));

        let ties = [explanation(vec![0.0, 0.0, 0.0], vec![0.2, 0.2, 0.2], 0.0)];
        assert_eq!(global_summary(&ties, 3).unwrap().ranking.names(), vec!["A", "B", "C"]);
    }

    #[test]
    fn dependence_zero_attribution_feature() {
        let ex: Vec<_> = (0..5)
            .map(|i| explanation(vec![i as f64, 1.0 - i as f64], vec![0.0, 0.1 * i as f64], 0.5))
            .collect();
        let d = dependence_data(&ex, "A").unwrap();
        assert_eq!(d.points.len(), 5);
        assert!(d.points.iter().all(|p| p.shap_value == 0.0));
        assert_eq!(d.interaction_feature, "B");
        assert!(dependence_data(&ex, "Z").is_err());
    }

    #[test]
    fn dependence_binary_feature_forms_two_columns() {
        let ex: Vec<_> = (0..20)
            .map(|i| {
                let bit = (i % 2) as f64;
                let phi = if bit == 1.0 { 0.1 } else { -0.1 } + 0.001 * (i as f64);
                explanation(vec![bit, (i * 7 % 5) as f64, bit * 3.0], vec![phi, 0.0, 0.0], 0.5)
            })
            .collect();
        let d = dependence_data(&ex, "A").unwrap();
        let mut columns: Vec<f64> = d.points.iter().map(|p| p.main_value).collect();
        columns.sort_by(f64::total_cmp);
        columns.dedup();
        assert_eq!(columns, vec![0.0, 1.0]);
        for p in &d.points {
            assert!((p.shap_value > 0.0) == (p.main_value == 1.0));
        }
        // C is a copy of A (scaled), so it tracks A's attribution exactly.
        assert_eq!(d.interaction_feature, "C");
    }

    #[test]
    fn force_orders_by_magnitude() {
        let e = explanation(vec![1.0, 0.0, 2.0], vec![0.2, -0.5, 0.1], 0.62);
        let f = force_data(&e);
        assert!((f.prediction - 0.42).abs() < 1e-12);
        let order: Vec<&str> = f.contributions.iter().map(|c| c.feature.as_str()).collect();
        assert_eq!(order, vec!["B", "A", "C"]);
        assert_eq!(f.positive().count(), 2);
        assert_eq!(f.negative().count(), 1);

        let zero = force_data(&explanation(vec![0.0, 0.0], vec![0.0, 0.0], 0.3));
        assert_eq!(zero.prediction, 0.3);
        assert!(!force_svg(&zero).contains("<rect class="));

        let single = force_data(&explanation(vec![1.0], vec![0.25], 0.5));
        assert_eq!(single.contributions.len(), 1);
        assert_eq!(single.contributions[0].phi.abs(), 0.25);
    }

    fn attr(svg: &str, tag_start: &str, name: &str) -> Vec<f64> {
        svg.lines()
            .filter(|l| l.starts_with(tag_start))
            .map(|l| {
                let key = format!(" {name}=\"");
                let at = l.find(&key).unwrap() + key.len();
                l[at..].split('"').next().unwrap().parse().unwrap()
            })
            .collect()
    }

    #[test]
    fn summary_svg_has_one_row_per_feature() {
        let ex = [
            explanation(vec![1.0, 5.0, 2.0], vec![0.3, 0.1, -0.2], 0.5),
            explanation(vec![3.0, 4.0, 1.0], vec![-0.3, 0.1, 0.0], 0.5),
        ];
        let s = global_summary(&ex, 20).unwrap();
        let svg = Plot::Summary(&s).to_svg();
        assert_eq!(svg.matches(r#"<g class="row""#).count(), 3);
        assert_eq!(svg.matches("<circle").count(), 6);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let bar = Plot::Bar(&s.ranking).to_svg();
        assert_eq!(bar.matches(r#"<g class="row""#).count(), 3);
    }

    #[test]
    fn force_svg_colors_and_direction() {
        let e = explanation(vec![1.0, 0.0, 2.0, 4.0], vec![0.2, -0.5, 0.1, 0.05], 0.62);
        let svg = Plot::Force(&force_data(&e)).to_svg();
        let red_x = attr(&svg, r#"<rect class="pos""#, "x");
        assert_eq!(red_x.len(), 3);
        assert!(red_x.windows(2).all(|w| w[0] < w[1]));
        assert!(svg.lines().filter(|l| l.starts_with(r#"<rect class="pos""#)).all(|l| l.contains("#ff0052")));
        let blue = attr(&svg, r#"<rect class="neg""#, "x");
        assert_eq!(blue.len(), 1);
        assert!(blue[0] > *red_x.last().unwrap());
    }

    #[test]
    fn rendering_is_deterministic() {
        let ex: Vec<_> = (0..10)
            .map(|i| explanation(vec![i as f64, 2.0, 1.0], vec![0.01 * i as f64, -0.02, 0.03], 0.4))
            .collect();
        let s = global_summary(&ex, 3).unwrap();
        let d = dependence_data(&ex, "A").unwrap();
        let dir = tempfile::tempdir().unwrap();
        for plot in [Plot::Summary(&s), Plot::Dependence(&d), Plot::Bar(&s.ranking)] {
            let a = dir.path().join(plot.file_name("one"));
            let b = dir.path().join(format!("copy_{}", plot.file_name("one")));
            render_svg(plot, &a).unwrap();
            render_svg(plot, &b).unwrap();
            assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        }
        assert_eq!(Plot::Bar(&s.ranking).file_name("one-to-all"), "bar_one-to-all.svg");
    }

    #[test]
    fn unwritable_path_errors() {
        let f = force_data(&explanation(vec![1.0], vec![0.1], 0.5));
        assert!(render_svg(Plot::Force(&f), "/nonexistent-dir/x.svg").is_err());
    }

    #[test]
    fn names_are_escaped() {
        let r = FeatureRanking::from_scores(crate::featsel::RankingMethod::Shap, &["a<b & \"c\""], &[1.0]).unwrap();
        let svg = Plot::Bar(&r).to_svg();
        assert!(svg.contains("a&lt;b &amp; &quot;c&quot;"));
    }
}
