//! Prediction files, per-run scores and the rendered comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use wivi_core::csi::{ActivityLabel, SceneLabel};

use crate::error::Result;
use crate::metrics::{confusion, overall_accuracy, product_accuracy, ConfusionMatrix};

/// Column order of the published results table.
pub const TABLE_ORDER: [ActivityLabel; 9] = [
    ActivityLabel::Falling,
    ActivityLabel::Throwing,
    ActivityLabel::Pushing,
    ActivityLabel::Kicking,
    ActivityLabel::Punching,
    ActivityLabel::Jumping,
    ActivityLabel::Phonetalk,
    ActivityLabel::Seating,
    ActivityLabel::Drinking,
];

pub const METHODS: [&str; 3] = ["svm", "cnn", "winn"];

/// Published per-class PA and OA, bundled for side-by-side display.
pub const REFERENCE_CSV: &str = include_str!("../data/reference_table.csv");

fn method_rank(m: &str) -> usize {
    METHODS.iter().position(|x| *x == m).unwrap_or(METHODS.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredRow {
    pub index: usize,
    pub truth: ActivityLabel,
    pub pred: ActivityLabel,
    pub subject: String,
    pub scene: SceneLabel,
}

pub const PRED_HEADER: &str = "index,truth,pred,subject,scene";

pub fn format_predictions(rows: &[PredRow]) -> String {
    let mut s = format!("{PRED_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.index, r.truth, r.pred, r.subject, r.scene);
    }
    s
}

pub fn parse_predictions(text: &str) -> std::result::Result<Vec<PredRow>, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(PRED_HEADER) {
        return Err(format!("expected header '{PRED_HEADER}'"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            let err = |m: String| format!("line {}: {m}", i + 2);
            if f.len() != 5 {
                return Err(err(format!("{} fields", f.len())));
            }
            Ok(PredRow {
                index: f[0].parse().map_err(|e| err(format!("{e}")))?,
                truth: f[1].parse().map_err(|e| err(format!("{e}")))?,
                pred: f[2].parse().map_err(|e| err(format!("{e}")))?,
                subject: f[3].to_string(),
                scene: f[4].parse().map_err(|e| err(format!("{e}")))?,
            })
        })
        .collect()
}

/// Scores of one (method, segmentation) run. Per-class vectors are indexed by label id.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub method: String,
    pub segmentation_s: u32,
    pub pa: Vec<f64>,
    pub oa: f64,
    /// Classes absent from the test set.
    pub empty: Vec<bool>,
    pub confusion: ConfusionMatrix,
}

impl RunReport {
    pub fn from_predictions(method: &str, segmentation_s: u32, rows: &[PredRow]) -> Result<Self> {
        let preds: Vec<ActivityLabel> = rows.iter().map(|r| r.pred).collect();
        let truth: Vec<ActivityLabel> = rows.iter().map(|r| r.truth).collect();
        let cm = confusion(&preds, &truth)?;
        Ok(Self {
            method: method.to_string(),
            segmentation_s,
            pa: product_accuracy(&cm)?,
            oa: overall_accuracy(&cm)?,
            empty: cm.empty_rows(),
            confusion: cm,
        })
    }

    pub fn stem(&self) -> String {
        format!("{}_{}s", self.method, self.segmentation_s)
    }

    /// Smallest PA over classes that have test samples.
    pub fn min_pa(&self) -> f64 {
        self.pa
            .iter()
            .zip(&self.empty)
            .filter(|(_, &e)| !e)
            .map(|(&p, _)| p)
            .fold(f64::INFINITY, f64::min)
    }
}

fn canonical(runs: &[RunReport]) -> Vec<&RunReport> {
    let mut v: Vec<&RunReport> = runs.iter().collect();
    v.sort_by(|a, b| {
        (a.segmentation_s, method_rank(&a.method), &a.method).cmp(&(b.segmentation_s, method_rank(&b.method), &b.method))
    });
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRow {
    pub segmentation_s: u32,
    pub method: String,
    /// In [`TABLE_ORDER`].
    pub pa: Vec<f64>,
    pub oa: f64,
}

pub fn reference_rows() -> Vec<ReferenceRow> {
    REFERENCE_CSV
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |s: &str| s.parse::<f64>().expect("bundled reference table is well-formed");
            ReferenceRow {
                segmentation_s: f[0].parse().expect("bundled reference table is well-formed"),
                method: f[1].to_string(),
                pa: f[2..11].iter().map(|s| num(s)).collect(),
                oa: num(f[11]),
            }
        })
        .collect()
}

fn header_cells() -> Vec<String> {
    TABLE_ORDER.iter().map(|a| a.name().to_string()).collect()
}

/// Markdown table: one block per segmentation, this run's figures next to the published ones.
pub fn render_table_md(runs: &[RunReport]) -> String {
    let refs = reference_rows();
    let mut s = String::from("| Segmentation | Method | Source |");
    for h in header_cells() {
        let _ = write!(s, " {h} |");
    }
    s.push_str(" OA |\n|---|---|---|");
    s.push_str(&"---|".repeat(TABLE_ORDER.len() + 1));
    s.push('\n');
    for r in canonical(runs) {
        let _ = write!(s, "| {}s | {} | synthetic |", r.segmentation_s, r.method.to_uppercase());
        for a in TABLE_ORDER {
            let i = a.id() as usize;
            if r.empty[i] {
                s.push_str(" n/a |");
            } else {
                let _ = write!(s, " {:.3} |", r.pa[i]);
            }
        }
        let _ = writeln!(s, " {:.3} |", r.oa);
        if let Some(p) = refs.iter().find(|p| p.segmentation_s == r.segmentation_s && p.method == r.method) {
            let _ = write!(s, "| {}s | {} | published |", p.segmentation_s, p.method.to_uppercase());
            for v in &p.pa {
                let _ = write!(s, " {v:.2} |");
            }
            let _ = writeln!(s, " {:.2} |", p.oa);
        }
    }
    s
}

pub fn render_table_csv(runs: &[RunReport]) -> String {
    let mut s = String::from("segmentation_s,method");
    for h in header_cells() {
        let _ = write!(s, ",{h}");
    }
    s.push_str(",oa\n");
    for r in canonical(runs) {
        let _ = write!(s, "{},{}", r.segmentation_s, r.method);
        for a in TABLE_ORDER {
            let _ = write!(s, ",{:.6}", r.pa[a.id() as usize]);
        }
        let _ = writeln!(s, ",{:.6}", r.oa);
    }
    s
}

/// Counts in table order, with a header row/column of class names.
pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut s = String::from("truth\\pred");
    for h in header_cells() {
        let _ = write!(s, ",{h}");
    }
    s.push('\n');
    for t in TABLE_ORDER {
        s.push_str(t.name());
        for p in TABLE_ORDER {
            let _ = write!(s, ",{}", cm.get(t.id() as usize, p.id() as usize));
        }
        s.push('\n');
    }
    s
}

/// Row-normalized heatmap of a confusion matrix.
pub fn confusion_svg(cm: &ConfusionMatrix, title: &str) -> String {
    const CELL: usize = 48;
    const LEFT: usize = 96;
    const TOP: usize = 112;
    let n = TABLE_ORDER.len();
    let (w, h) = (LEFT + n * CELL + 16, TOP + n * CELL + 16);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{title}</text>"#, w / 2);
    for (k, a) in TABLE_ORDER.iter().enumerate() {
        let cx = LEFT + k * CELL + CELL / 2;
        let _ = writeln!(
            s,
            r#"<text x="{cx}" y="{}" transform="rotate(-45 {cx} {})" text-anchor="start">{}</text>"#,
            TOP - 6,
            TOP - 6,
            a.name()
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 6,
            TOP + k * CELL + CELL / 2 + 4,
            a.name()
        );
    }
    for (r, t) in TABLE_ORDER.iter().enumerate() {
        let row = cm.row_sum(t.id() as usize).max(1) as f64;
        for (c, p) in TABLE_ORDER.iter().enumerate() {
            let v = cm.get(t.id() as usize, p.id() as usize);
            let frac = v as f64 / row;
            let shade = (255.0 * (1.0 - frac)).round() as u8;
            let (x, y) = (LEFT + c * CELL, TOP + r * CELL);
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)" stroke="#888"/>"##
            );
            let ink = if frac > 0.5 { "#fff" } else { "#000" };
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{v}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 4
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Full-occlusion probe: per method, the minimum per-class PA over all
/// segmentations restricted to full-occlusion test samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Robustness {
    pub min_pa: BTreeMap<String, f64>,
}

impl Robustness {
    pub fn from_runs(runs: &[(String, u32, Vec<PredRow>)]) -> Result<Self> {
        let mut min_pa: BTreeMap<String, f64> = BTreeMap::new();
        for (method, seg, rows) in runs {
            let subset: Vec<PredRow> = rows.iter().filter(|r| r.scene == SceneLabel::FullOcclusion).cloned().collect();
            if subset.is_empty() {
                continue;
            }
            let r = RunReport::from_predictions(method, *seg, &subset)?;
            let e = min_pa.entry(method.clone()).or_insert(f64::INFINITY);
            *e = e.min(r.min_pa());
        }
        Ok(Self { min_pa })
    }

    /// `Some(true)` when WiNN's minimum is at least every other method's.
    pub fn winn_most_robust(&self) -> Option<bool> {
        let w = *self.min_pa.get("winn")?;
        let others: Vec<f64> = self.min_pa.iter().filter(|(k, _)| *k != "winn").map(|(_, &v)| v).collect();
        if others.is_empty() {
            return None;
        }
        Some(others.iter().all(|&o| w >= o))
    }

    pub fn render_md(&self) -> String {
        let mut s = String::from("| Method | min per-class PA (full occlusion, all segmentations) |\n|---|---|\n");
        let mut methods: Vec<&String> = self.min_pa.keys().collect();
        methods.sort_by_key(|m| (method_rank(m), m.to_string()));
        for m in methods {
            let _ = writeln!(s, "| {} | {:.3} |", m.to_uppercase(), self.min_pa[m]);
        }
        match self.winn_most_robust() {
            Some(true) => s.push_str("\nWiNN has the highest worst-class accuracy under full occlusion.\n"),
            Some(false) => s.push_str("\nWARNING: WiNN is not the most robust method under full occlusion on this data.\n"),
            None => s.push_str("\nNot enough methods to compare.\n"),
        }
        s
    }
}

pub fn parse_stem(stem: &str) -> Option<(String, u32)> {
    let (m, s) = stem.rsplit_once('_')?;
    let seg = s.strip_suffix('s')?.parse().ok()?;
    Some((m.to_string(), seg))
}
