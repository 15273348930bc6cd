//! Pipeline stages. Each stage reads the previous stage's files under the
//! output root and writes its own:
//!
//! ```text
//! raw/<name>.{dat,labels.csv,skl}    simulate
//! parsed/<stem>.{amp,labels}.csv     parse
//! clean/<stem>.{clean,labels}.csv    preprocess
//! seg<N>s/{train,test}.{smp,skl,manifest}, test.index.csv    segment
//! models/<method>_<N>s.{svm,nn}, logs/<method>_<N>s.train.csv    train
//! results/<method>_<N>s.pred.csv     eval
//! report/…                           report
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use wivi_core::csi::{ActivityLabel, CsiSample, SceneLabel};
use wivi_core::dsp::{amplitude_streams, format_streams_csv, parse_streams_csv, preprocess_streams};
use wivi_core::ingest::{format_labels, parse_labels, read_capture, scale_csi, sequences_from_capture, LabelRow};
use wivi_core::segment::{
    augment, augment_vectors, average_into_samples, averaging_plan, read_samples, rows_from_streams, segment_len,
    segment_ranges, split_indices, write_samples, SampleManifest,
};
use wivi_core::sim::{
    emit_dataset, read_heatmaps, write_heatmaps, SimScenario, SkeletonHeatmap, PACKETS_PER_FRAME,
};
use wivi_ml::nn::{
    eval_cnn, load_cnn, load_winn, save_cnn, save_winn, train_cnn_with, train_winn_with, winn_heatmaps, Cnn, Winn,
};
use wivi_ml::{train_multiclass, MulticlassModel};

use crate::config::Config;
use crate::error::{read, read_text, write, CliError, Result};
use crate::report::{
    confusion_csv, confusion_svg, format_predictions, parse_predictions, parse_stem, render_table_csv,
    render_table_md, PredRow, Robustness, RunReport, REFERENCE_CSV,
};

pub const SEGMENTATION_KEY: &str = "segmentation_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Svm,
    Cnn,
    Winn,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Svm, Method::Cnn, Method::Winn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Svm => "svm",
            Method::Cnn => "cnn",
            Method::Winn => "winn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown method '{s}' (expected svm, cnn or winn)"))
    }
}

/// Shared settings for every stage.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub cfg: Config,
    pub seed: u64,
    pub out: PathBuf,
    /// Print stage progress and timing to stderr.
    pub verbose: bool,
}

impl Ctx {
    pub fn new(cfg: Config, seed: u64, out: impl Into<PathBuf>) -> Self {
        Self {
            cfg,
            seed,
            out: out.into(),
            verbose: false,
        }
    }

    pub fn dir(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn seg_dir(&self, seg: u32) -> PathBuf {
        self.out.join(format!("seg{seg}s"))
    }

    pub fn model_path(&self, method: Method, seg: u32) -> PathBuf {
        let ext = if method == Method::Svm { "svm" } else { "nn" };
        self.dir("models").join(format!("{method}_{seg}s.{ext}"))
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Files in `dir` ending with `suffix`, sorted by name, as `(stem, path)`.
fn list(dir: &Path, suffix: &str) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| crate::error::io_err(dir, e))?;
    let mut v = Vec::new();
    for e in entries {
        let e = e.map_err(|e| crate::error::io_err(dir, e))?;
        let name = e.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(suffix) {
            v.push((stem.to_string(), e.path()));
        }
    }
    v.sort();
    if v.is_empty() {
        return Err(CliError::MissingFile(dir.join(format!("*{suffix}"))));
    }
    Ok(v)
}

/// Scenario list in activity → subject → scene order.
pub fn scenarios(ctx: &Ctx) -> Result<Vec<SimScenario>> {
    let sim = &ctx.cfg.simulate;
    let mut out = Vec::new();
    for a in ctx.cfg.activities()? {
        for subj in &sim.subjects {
            for scene in ctx.cfg.scenes()? {
                let k = out.len() as u64;
                let seed = ctx.seed.wrapping_mul(1_000_003).wrapping_add(k);
                let s = SimScenario::new(a, scene, subj.name.clone(), subj.scale, sim.duration_s, sim.noise_sigma, seed);
                s.validate().map_err(|e| CliError::Config(format!("[simulate] {e}")))?;
                out.push(s);
            }
        }
    }
    Ok(out)
}

pub fn simulate(ctx: &Ctx) -> Result<usize> {
    let t = Instant::now();
    let sc = scenarios(ctx)?;
    let emitted = emit_dataset(&sc, &ctx.dir("raw")).map_err(CliError::other)?;
    ctx.log(format!("simulate: {} scenarios in {:.1}s", emitted.len(), t.elapsed().as_secs_f64()));
    Ok(emitted.len())
}

/// One labelled sequence per label row; multi-row captures get `__k` suffixes.
pub fn parse(ctx: &Ctx) -> Result<usize> {
    let t = Instant::now();
    let raw = ctx.dir("raw");
    let captures = list(&raw, ".dat")?;
    let fs_hz = ctx.cfg.dsp.fs_hz;
    let scale = ctx.cfg.dsp.scale_csi;
    let parsed = ctx.dir("parsed");
    let counts: Vec<usize> = captures
        .par_iter()
        .map(|(stem, path)| -> Result<usize> {
            let bytes = read(path)?;
            let mut packets = read_capture(&bytes[..]).map_err(|e| CliError::format(path, e))?;
            let lpath = raw.join(format!("{stem}.labels.csv"));
            let rows = parse_labels(&read_text(&lpath)?).map_err(|e| CliError::format(&lpath, e))?;
            if scale {
                for p in &mut packets {
                    p.csi = scale_csi(p).map_err(|e| CliError::format(path, e))?;
                }
            }
            let seqs = sequences_from_capture(&packets, &rows, fs_hz).map_err(|e| CliError::format(&lpath, e))?;
            for (k, (seq, row)) in seqs.iter().zip(&rows).enumerate() {
                let out_stem = if rows.len() == 1 { stem.clone() } else { format!("{stem}__{k}") };
                let streams = amplitude_streams(seq).map_err(|e| CliError::format(path, e))?;
                write(&parsed.join(format!("{out_stem}.amp.csv")), format_streams_csv(&streams))?;
                write(&parsed.join(format!("{out_stem}.labels.csv")), format_labels(std::slice::from_ref(row)))?;
            }
            Ok(seqs.len())
        })
        .collect::<Result<_>>()?;
    let n = counts.iter().sum();
    ctx.log(format!("parse: {n} sequences in {:.1}s", t.elapsed().as_secs_f64()));
    Ok(n)
}

pub fn preprocess(ctx: &Ctx) -> Result<usize> {
    let t = Instant::now();
    let spec = ctx.cfg.dsp.filter_spec();
    let parsed = ctx.dir("parsed");
    let clean = ctx.dir("clean");
    let inputs = list(&parsed, ".amp.csv")?;
    // Streams are already filtered in parallel inside each file.
    for (stem, path) in &inputs {
        let streams = parse_streams_csv(&read_text(path)?).map_err(|e| CliError::format(path, e))?;
        let cleaned = preprocess_streams(&streams, &spec).map_err(|e| CliError::format(path, e))?;
        write(&clean.join(format!("{stem}.clean.csv")), format_streams_csv(&cleaned))?;
        let lpath = parsed.join(format!("{stem}.labels.csv"));
        write(&clean.join(format!("{stem}.labels.csv")), read(&lpath)?)?;
    }
    ctx.log(format!("preprocess: {} sequences in {:.1}s", inputs.len(), t.elapsed().as_secs_f64()));
    Ok(inputs.len())
}

struct CleanSeq {
    stem: String,
    row: LabelRow,
    streams: Vec<Vec<f64>>,
    frames: Option<Vec<SkeletonHeatmap>>,
}

fn load_clean(ctx: &Ctx) -> Result<Vec<CleanSeq>> {
    let clean = ctx.dir("clean");
    let raw = ctx.dir("raw");
    let inputs = list(&clean, ".clean.csv")?;
    let mut seqs: Vec<CleanSeq> = inputs
        .par_iter()
        .map(|(stem, path)| {
            let streams = parse_streams_csv(&read_text(path)?).map_err(|e| CliError::format(path, e))?;
            let lpath = clean.join(format!("{stem}.labels.csv"));
            let rows = parse_labels(&read_text(&lpath)?).map_err(|e| CliError::format(&lpath, e))?;
            let [row] = <[LabelRow; 1]>::try_from(rows)
                .map_err(|r| CliError::format(&lpath, format!("expected one label row, found {}", r.len())))?;
            let capture = stem.split("__").next().unwrap_or(stem);
            let skl = raw.join(format!("{capture}.skl"));
            let frames = match fs::read(&skl) {
                Ok(b) => Some(read_heatmaps(&b).map_err(|e| CliError::format(&skl, e))?),
                Err(_) => None,
            };
            Ok(CleanSeq {
                stem: stem.clone(),
                row,
                streams,
                frames,
            })
        })
        .collect::<Result<_>>()?;
    seqs.sort_by(|a, b| {
        (a.row.activity, &a.row.subject, a.row.scene, &a.stem).cmp(&(b.row.activity, &b.row.subject, b.row.scene, &b.stem))
    });
    Ok(seqs)
}

/// Per-sample provenance of the segmented dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleInfo {
    pub scenario: String,
    pub subject: String,
    pub scene: SceneLabel,
    pub label: ActivityLabel,
}

pub const INDEX_HEADER: &str = "index,scenario,subject,scene,label";

fn format_index(infos: &[SampleInfo]) -> String {
    let mut s = format!("{INDEX_HEADER}\n");
    for (i, r) in infos.iter().enumerate() {
        s.push_str(&format!("{i},{},{},{},{}\n", r.scenario, r.subject, r.scene, r.label));
    }
    s
}

fn parse_index(path: &Path) -> Result<Vec<SampleInfo>> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(INDEX_HEADER) {
        return Err(CliError::format(path, format!("expected header '{INDEX_HEADER}'")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            let bad = |m: String| CliError::format(path, format!("line {}: {m}", i + 2));
            if f.len() != 5 || f[0] != i.to_string() {
                return Err(bad("malformed row".into()));
            }
            Ok(SampleInfo {
                scenario: f[1].to_string(),
                subject: f[2].to_string(),
                scene: f[3].parse().map_err(|e| bad(format!("{e}")))?,
                label: f[4].parse().map_err(|e| bad(format!("{e}")))?,
            })
        })
        .collect()
}

/// Frame nearest in time to the centre of sample `s` of a segment starting at `start`.
fn nearest_frame(start: usize, s: usize, d: usize, frames: usize) -> usize {
    let centre = start as f64 + s as f64 + 4.5 * d as f64;
    ((centre / PACKETS_PER_FRAME as f64).round() as usize).min(frames - 1)
}

/// Segments, splits (stratified, seeded) and augments the training part.
pub fn segment(ctx: &Ctx, seg: u32) -> Result<(usize, usize)> {
    let t = Instant::now();
    let seqs = load_clean(ctx)?;
    let with_frames = seqs.iter().all(|s| s.frames.is_some());
    let mut samples: Vec<CsiSample> = Vec::new();
    let mut infos: Vec<SampleInfo> = Vec::new();
    let mut targets: Vec<SkeletonHeatmap> = Vec::new();
    for q in &seqs {
        let n = q.streams.first().map_or(0, Vec::len);
        let ranges = segment_ranges(n, ctx.cfg.dsp.fs_hz, seg)
            .map_err(|e| CliError::other(format!("{}: {e}", q.stem)))?;
        let (d, _) = averaging_plan(segment_len(ctx.cfg.dsp.fs_hz, seg)).map_err(CliError::other)?;
        for (a, b) in ranges {
            let rows = rows_from_streams(&q.streams, a, b);
            let got = average_into_samples(&rows, q.row.activity).map_err(CliError::other)?;
            if let (true, Some(frames)) = (with_frames, &q.frames) {
                for s in 0..got.len() {
                    targets.push(frames[nearest_frame(q.row.start_packet + a, s, d, frames.len())].clone());
                }
            }
            for _ in 0..got.len() {
                infos.push(SampleInfo {
                    scenario: q.stem.clone(),
                    subject: q.row.subject.clone(),
                    scene: q.row.scene,
                    label: q.row.activity,
                });
            }
            samples.extend(got);
        }
    }
    let labels: Vec<ActivityLabel> = samples.iter().map(|s| s.label).collect();
    let (tr, te) = split_indices(&labels, ctx.seed, ctx.cfg.segment.train_fraction).map_err(CliError::other)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    let (train, test) = (pick(&tr), pick(&te));
    let aug_cfg = ctx.cfg.augment();
    let train_aug = augment(&train, &aug_cfg).map_err(CliError::other)?;
    let dir = ctx.seg_dir(seg);
    write(&dir.join("train.smp"), write_samples(&train_aug))?;
    write(&dir.join("test.smp"), write_samples(&test))?;
    let manifest = |count, augmented| {
        SampleManifest {
            segmentation_s: seg,
            count,
            augmented,
        }
        .to_text()
    };
    write(&dir.join("train.manifest"), manifest(train_aug.len(), true))?;
    write(&dir.join("test.manifest"), manifest(test.len(), false))?;
    let test_info: Vec<SampleInfo> = te.iter().map(|&i| infos[i].clone()).collect();
    write(&dir.join("test.index.csv"), format_index(&test_info))?;
    if with_frames {
        let tr_maps: Vec<Vec<f64>> = tr.iter().map(|&i| targets[i].values().to_vec()).collect();
        let tr_labels: Vec<ActivityLabel> = train.iter().map(|s| s.label).collect();
        let aug_maps = augment_vectors(&tr_maps, &tr_labels, &aug_cfg).map_err(CliError::other)?;
        let maps = aug_maps
            .into_iter()
            .map(SkeletonHeatmap::from_values)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(CliError::other)?;
        write(&dir.join("train.skl"), write_heatmaps(&maps))?;
        let te_maps: Vec<SkeletonHeatmap> = te.iter().map(|&i| targets[i].clone()).collect();
        write(&dir.join("test.skl"), write_heatmaps(&te_maps))?;
    }
    ctx.log(format!(
        "segment {seg}s: {} train (augmented from {}), {} test in {:.1}s",
        train_aug.len(),
        train.len(),
        test.len(),
        t.elapsed().as_secs_f64()
    ));
    Ok((train_aug.len(), test.len()))
}

fn load_split(ctx: &Ctx, seg: u32, part: &str) -> Result<(Vec<CsiSample>, SampleManifest)> {
    let dir = ctx.seg_dir(seg);
    let mpath = dir.join(format!("{part}.manifest"));
    let manifest = SampleManifest::parse(&read_text(&mpath)?).map_err(|e| CliError::format(&mpath, e))?;
    let spath = dir.join(format!("{part}.smp"));
    let samples = read_samples(&read(&spath)?).map_err(|e| CliError::format(&spath, e))?;
    if samples.len() != manifest.count || manifest.segmentation_s != seg {
        return Err(CliError::format(
            &mpath,
            format!(
                "manifest says {} samples at {}s, file has {} for {seg}s",
                manifest.count,
                manifest.segmentation_s,
                samples.len()
            ),
        ));
    }
    Ok((samples, manifest))
}

fn load_targets(ctx: &Ctx, seg: u32, part: &str, n: usize) -> Result<Vec<SkeletonHeatmap>> {
    let path = ctx.seg_dir(seg).join(format!("{part}.skl"));
    let maps = read_heatmaps(&read(&path)?).map_err(|e| CliError::format(&path, e))?;
    if maps.len() != n {
        return Err(CliError::format(&path, format!("{} heatmaps for {n} samples", maps.len())));
    }
    Ok(maps)
}

fn seg_meta(seg: u32) -> BTreeMap<String, String> {
    BTreeMap::from([(SEGMENTATION_KEY.to_string(), seg.to_string())])
}

fn meta_seg(meta: &BTreeMap<String, String>, path: &Path) -> Result<u32> {
    meta.get(SEGMENTATION_KEY)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::format(path, "model has no segmentation metadata"))
}

fn features(samples: &[CsiSample]) -> (Vec<Vec<f64>>, Vec<ActivityLabel>) {
    (samples.iter().map(|s| s.values().to_vec()).collect(), samples.iter().map(|s| s.label).collect())
}

fn winn_svm_path(nn_path: &Path) -> PathBuf {
    nn_path.with_extension("svm")
}

pub fn train(ctx: &Ctx, method: Method, seg: u32) -> Result<PathBuf> {
    let t = Instant::now();
    let (train, _) = load_split(ctx, seg, "train")?;
    let path = ctx.model_path(method, seg);
    let log_path = ctx.dir("logs").join(format!("{method}_{seg}s.train.csv"));
    let net_cfg = ctx.cfg.nn.net_config(ctx.seed);
    let mut progress = |e: &wivi_ml::nn::EpochStats| {
        ctx.log(format!(
            "  {method} {seg}s epoch {}: loss {:.4e} train_acc {:.3} ({:.0}s)",
            e.epoch,
            e.loss,
            e.train_acc,
            t.elapsed().as_secs_f64()
        ))
    };
    match method {
        Method::Svm => {
            let (x, y) = features(&train);
            let mut m = train_multiclass(&x, &y, &ctx.cfg.svm.svm_config()).map_err(CliError::other)?;
            m.metadata = seg_meta(seg);
            write(&path, m.to_bytes())?;
        }
        Method::Cnn => {
            let (m, log): (Cnn<f32>, _) = train_cnn_with(&train, &net_cfg, &mut progress).map_err(CliError::other)?;
            write(&path, save_cnn(&m, &seg_meta(seg)))?;
            write(&log_path, log.to_csv())?;
        }
        Method::Winn => {
            let targets = load_targets(ctx, seg, "train", train.len())?;
            let (m, log): (Winn<f32>, _) =
                train_winn_with(&train, &targets, &net_cfg, &mut progress).map_err(CliError::other)?;
            write(&path, save_winn(&m, &seg_meta(seg)))?;
            write(&log_path, log.to_csv())?;
            let feats = winn_heatmaps(&m, &train).map_err(CliError::other)?;
            let labels: Vec<ActivityLabel> = train.iter().map(|s| s.label).collect();
            let mut svm = train_multiclass(&feats, &labels, &ctx.cfg.svm.svm_config()).map_err(CliError::other)?;
            svm.metadata = seg_meta(seg);
            write(&winn_svm_path(&path), svm.to_bytes())?;
        }
    }
    ctx.log(format!("train {method} {seg}s: {:.1}s", t.elapsed().as_secs_f64()));
    Ok(path)
}

fn load_svm(path: &Path) -> Result<MulticlassModel> {
    MulticlassModel::from_bytes(&read(path)?).map_err(|e| CliError::format(path, e))
}

fn check_seg(model: u32, data: u32) -> Result<()> {
    if model != data {
        return Err(CliError::SegmentationMismatch { model, data });
    }
    Ok(())
}

/// Predicts the test split and writes `results/<method>_<N>s.pred.csv`.
/// `model` overrides the default model location.
pub fn eval(ctx: &Ctx, method: Method, seg: u32, model: Option<&Path>) -> Result<RunReport> {
    let t = Instant::now();
    let (test, manifest) = load_split(ctx, seg, "test")?;
    let index_path = ctx.seg_dir(seg).join("test.index.csv");
    let info = parse_index(&index_path)?;
    if info.len() != test.len() {
        return Err(CliError::format(&index_path, format!("{} rows for {} samples", info.len(), test.len())));
    }
    let path = model.map(Path::to_path_buf).unwrap_or_else(|| ctx.model_path(method, seg));
    let preds: Vec<ActivityLabel> = match method {
        Method::Svm => {
            let m = load_svm(&path)?;
            check_seg(meta_seg(&m.metadata, &path)?, manifest.segmentation_s)?;
            let (x, _) = features(&test);
            m.predict_batch(&x).map_err(|e| CliError::format(&path, e))?
        }
        Method::Cnn => {
            let (m, meta) = load_cnn::<f32>(&read(&path)?).map_err(|e| CliError::format(&path, e))?;
            check_seg(meta_seg(&meta, &path)?, manifest.segmentation_s)?;
            eval_cnn(&m, &test).map_err(CliError::other)?
        }
        Method::Winn => {
            let (m, meta) = load_winn::<f32>(&read(&path)?).map_err(|e| CliError::format(&path, e))?;
            check_seg(meta_seg(&meta, &path)?, manifest.segmentation_s)?;
            let svm_path = winn_svm_path(&path);
            let svm = load_svm(&svm_path)?;
            check_seg(meta_seg(&svm.metadata, &svm_path)?, manifest.segmentation_s)?;
            let feats = winn_heatmaps(&m, &test).map_err(CliError::other)?;
            svm.predict_batch(&feats).map_err(|e| CliError::format(&svm_path, e))?
        }
    };
    let rows: Vec<PredRow> = test
        .iter()
        .zip(&info)
        .zip(&preds)
        .enumerate()
        .map(|(i, ((s, inf), &p))| PredRow {
            index: i,
            truth: s.label,
            pred: p,
            subject: inf.subject.clone(),
            scene: inf.scene,
        })
        .collect();
    write(&ctx.dir("results").join(format!("{method}_{seg}s.pred.csv")), format_predictions(&rows))?;
    let r = RunReport::from_predictions(method.name(), seg, &rows)?;
    ctx.log(format!("eval {method} {seg}s: OA {:.4} ({:.1}s)", r.oa, t.elapsed().as_secs_f64()));
    Ok(r)
}

/// Renders tables, confusion matrices and the occlusion probe from every
/// prediction file under `results/`.
pub fn report(ctx: &Ctx) -> Result<Vec<RunReport>> {
    let results = ctx.dir("results");
    let files = list(&results, ".pred.csv")?;
    let mut runs = Vec::new();
    let mut raw_runs = Vec::new();
    for (stem, path) in files {
        let (method, seg) = parse_stem(&stem)
            .ok_or_else(|| CliError::format(&path, "file name must look like <method>_<N>s.pred.csv"))?;
        let rows = parse_predictions(&read_text(&path)?).map_err(|m| CliError::format(&path, m))?;
        runs.push(RunReport::from_predictions(&method, seg, &rows)?);
        raw_runs.push((method, seg, rows));
    }
    let dir = ctx.dir("report");
    write(&dir.join("table.md"), render_table_md(&runs))?;
    write(&dir.join("table.csv"), render_table_csv(&runs))?;
    write(&dir.join("reference.csv"), REFERENCE_CSV)?;
    for r in &runs {
        write(&dir.join(format!("confusion_{}.csv", r.stem())), confusion_csv(&r.confusion))?;
        let title = format!("{} — {}s segments (OA {:.3})", r.method.to_uppercase(), r.segmentation_s, r.oa);
        write(&dir.join(format!("confusion_{}.svg", r.stem())), confusion_svg(&r.confusion, &title))?;
    }
    let rob = Robustness::from_runs(&raw_runs)?;
    write(&dir.join("robustness.md"), rob.render_md())?;
    if rob.winn_most_robust() == Some(false) {
        eprintln!("warning: WiNN is not the most robust method under full occlusion on this data");
    }
    Ok(runs)
}

/// Every stage in order, for all configured segmentations and the given methods.
pub fn run_all(ctx: &Ctx, methods: &[Method]) -> Result<Vec<RunReport>> {
    simulate(ctx)?;
    parse(ctx)?;
    preprocess(ctx)?;
    for &seg in &ctx.cfg.segment.segmentations {
        segment(ctx, seg)?;
        for &m in methods {
            train(ctx, m, seg)?;
            eval(ctx, m, seg, None)?;
        }
    }
    report(ctx)
}
