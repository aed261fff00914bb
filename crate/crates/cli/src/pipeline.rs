use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use rvefield::data::{io, pre_trim, Family, NormalizationSpec, SequenceRecord, FLAG_TRUNCATED};
use rvefield::micro::{build_ensemble, run_sequences};
use rvefield::pathgen::{generate_path_set, LoadingPath, PathKind};
use rvefield::pca::PcaModel;
use rvefield::rng::RNG_ALGORITHM;
use rvefield::surrogate::{
    build_surrogate, evaluate, fit_field_pca, fit_normalizations, hidden_size_trial, pca_floor, train, Kind, Preprocessing,
    SurrogateBundle,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    GenPaths,
    GenData,
    PcaFit,
    Train,
    Trial,
    Eval,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::GenPaths => "gen-paths",
            Stage::GenData => "gen-data",
            Stage::PcaFit => "pca-fit",
            Stage::Train => "train",
            Stage::Trial => "trial",
            Stage::Eval => "eval",
        }
    }
}

/// Stages run by `all`; the hidden-size trial is a separate diagnostic.
pub const ALL: [Stage; 5] = [Stage::GenPaths, Stage::GenData, Stage::PcaFit, Stage::Train, Stage::Eval];

/// Where every artifact lives below the output root.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    fn paths(&self, split: &str) -> PathBuf {
        self.root.join("paths").join(format!("{split}_paths.rveseq"))
    }
    fn data(&self, split: &str) -> PathBuf {
        self.root.join("data").join(format!("{split}.rveseq"))
    }
    fn pca(&self, family: Family) -> PathBuf {
        self.root.join("pca").join(format!("pca_{}.bin", family.name()))
    }
    fn normspec(&self) -> PathBuf {
        self.root.join("pca").join("normspec.json")
    }
    fn model(&self) -> PathBuf {
        self.root.join("model")
    }
    fn manifest(&self, dir: &str) -> PathBuf {
        self.root.join(dir).join("manifest.json")
    }
}

#[derive(Serialize, Deserialize)]
struct NormSpecs {
    family: Family,
    input: NormalizationSpec,
    field: NormalizationSpec,
}

#[derive(Serialize)]
struct Manifest<'a> {
    stage: &'static str,
    version: &'static str,
    rng: &'static str,
    seed: u64,
    config: &'a PipelineConfig,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    summary: serde_json::Value,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn require(path: &Path, producer: Stage) -> Result<()> {
    if !path.exists() {
        bail!("missing {}: run `rvefield {}` first", path.display(), producer.name());
    }
    Ok(())
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

struct StageRun<'a> {
    layout: &'a Layout,
    cfg: &'a PipelineConfig,
    stage: Stage,
    dir: String,
}

impl StageRun<'_> {
    fn hashes(&self, files: &[PathBuf]) -> Result<BTreeMap<String, String>> {
        files
            .iter()
            .map(|f| {
                let key = f.strip_prefix(&self.layout.root).unwrap_or(f).to_string_lossy().replace('\\', "/");
                Ok((key, sha256_file(f)?))
            })
            .collect()
    }

    fn finish(&self, inputs: &[PathBuf], outputs: &[PathBuf], summary: serde_json::Value) -> Result<()> {
        let m = Manifest {
            stage: self.stage.name(),
            version: env!("CARGO_PKG_VERSION"),
            rng: RNG_ALGORITHM,
            seed: self.cfg.seed,
            config: self.cfg,
            inputs: self.hashes(inputs)?,
            outputs: self.hashes(outputs)?,
            summary,
        };
        write_text(&self.layout.manifest(&self.dir), &(serde_json::to_string_pretty(&m)? + "\n"))?;
        info!("{}: wrote {} artifacts", self.stage.name(), outputs.len());
        Ok(())
    }
}

pub fn run_stage(stage: Stage, cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    let dir = match stage {
        Stage::GenPaths => "paths",
        Stage::GenData => "data",
        Stage::PcaFit => "pca",
        Stage::Train => "model",
        Stage::Trial => "trial",
        Stage::Eval => cfg.eval.output_dir.as_str(),
    };
    let run = StageRun { layout, cfg, stage, dir: dir.to_string() };
    mkdir(&layout.root.join(dir))?;
    info!("running {}", stage.name());
    match stage {
        Stage::GenPaths => gen_paths(&run),
        Stage::GenData => gen_data(&run),
        Stage::PcaFit => pca_fit(&run),
        Stage::Train => train_stage(&run),
        Stage::Trial => trial_stage(&run),
        Stage::Eval => eval_stage(&run),
    }
    .with_context(|| format!("stage {} failed", stage.name()))
}

fn length_summary(lengths: &[usize]) -> serde_json::Value {
    let mut l = lengths.to_vec();
    l.sort_unstable();
    serde_json::json!({
        "count": l.len(),
        "steps": l.iter().sum::<usize>(),
        "min_length": l.first().copied().unwrap_or(0),
        "median_length": l.get(l.len() / 2).copied().unwrap_or(0),
        "max_length": l.last().copied().unwrap_or(0),
    })
}

fn gen_paths(run: &StageRun) -> Result<()> {
    let (cfg, layout) = (run.cfg, run.layout);
    let mut outputs = Vec::new();
    let mut summary = serde_json::Map::new();
    for (split, set) in [("train", cfg.path_set()), ("test", cfg.test_path_set())] {
        let paths = if set.n_random + set.n_cyclic > 0 { generate_path_set(&set)? } else { Vec::new() };
        let records: Vec<SequenceRecord> = paths.iter().map(SequenceRecord::from_path).collect();
        let file = layout.paths(split);
        io::write_records(&file, &records)?;
        let lengths: Vec<usize> = paths.iter().map(LoadingPath::len).collect();
        let mut s = length_summary(&lengths);
        s["random_walk"] = paths.iter().filter(|p| p.kind == PathKind::RandomWalk).count().into();
        s["cyclic"] = paths.iter().filter(|p| p.kind == PathKind::Cyclic).count().into();
        s["seed"] = set.seed.into();
        summary.insert(split.into(), s);
        outputs.push(file);
    }
    summary.insert(
        "termination".into(),
        "random walks stop at the first step with max_i |lambda_i(U) - 1| > r_max (stretch deviation)".into(),
    );
    run.finish(&[], &outputs, summary.into())
}

fn read_paths(file: &Path) -> Result<Vec<LoadingPath>> {
    io::read_records(file)?.iter().map(|r| r.to_path().map_err(Into::into)).collect()
}

fn gen_data(run: &StageRun) -> Result<()> {
    let (cfg, layout) = (run.cfg, run.layout);
    let inputs = [layout.paths("train"), layout.paths("test")];
    inputs.iter().try_for_each(|f| require(f, Stage::GenPaths))?;
    let ens_cfg = cfg.ensemble_config();
    let ensemble = build_ensemble(&ens_cfg)?;
    let mut outputs = Vec::new();
    let mut summary = serde_json::Map::new();
    for (split, input) in ["train", "test"].into_iter().zip(&inputs) {
        let paths = read_paths(input)?;
        info!("simulating {} {split} sequences", paths.len());
        let mut records = Vec::with_capacity(paths.len());
        let mut n_trimmed = 0;
        for (p, r) in paths.iter().zip(run_sequences(&paths, &ensemble)) {
            let rec = SequenceRecord::from_simulation(p, &r, ensemble.d_gamma(), ensemble.d_tau());
            let cut = pre_trim(&rec, cfg.dataset.gamma_crit, Family::Gamma)?;
            n_trimmed += usize::from(cut.length < rec.length);
            records.push(cut);
        }
        let file = layout.data(split);
        io::write_records(&file, &records)?;
        let mut s = length_summary(&records.iter().map(|r| r.length).collect::<Vec<_>>());
        s["pre_trimmed"] = n_trimmed.into();
        s["truncated_by_solver"] = records.iter().filter(|r| r.flags & FLAG_TRUNCATED != 0).count().into();
        summary.insert(split.into(), s);
        outputs.push(file);
    }
    summary.insert("ensemble".into(), serde_json::to_value(&ens_cfg)?);
    summary.insert("points".into(), "each material point stands in for one element of the field".into());
    run.finish(&inputs, &outputs, summary.into())
}

fn read_data(layout: &Layout, split: &str) -> Result<(PathBuf, Vec<SequenceRecord>)> {
    let file = layout.data(split);
    require(&file, Stage::GenData)?;
    let records = io::read_records(&file)?;
    Ok((file, records))
}

fn pca_fit(run: &StageRun) -> Result<()> {
    let (cfg, layout) = (run.cfg, run.layout);
    let family = cfg.pca.family;
    let (data_file, records) = read_data(layout, "train")?;
    let (input, field) = fit_normalizations(&records, family)?;
    let pca = fit_field_pca(&records, family, &field, &cfg.pca_options())?;
    let pca_file = layout.pca(family);
    pca.write(&pca_file)?;
    let norm_file = layout.normspec();
    write_text(&norm_file, &(serde_json::to_string_pretty(&NormSpecs { family, input, field })? + "\n"))?;
    let mut csv = String::from("p,residual_fraction\n");
    for (p, frac) in pca.residual_curve() {
        writeln!(csv, "{p},{frac}")?;
    }
    let curve_file = layout.root.join("pca").join("residual_curve.csv");
    write_text(&curve_file, &csv)?;
    let summary = serde_json::json!({
        "family": family,
        "d": pca.d,
        "p": pca.p,
        "snapshots_used": pca.n_fit,
        "residual_fraction": pca.residual_fraction(pca.p),
    });
    run.finish(&[data_file], &[pca_file, norm_file, curve_file], summary)
}

struct Fitted {
    files: Vec<PathBuf>,
    norms: NormSpecs,
    pca: PcaModel,
}

fn read_fitted(cfg: &PipelineConfig, layout: &Layout) -> Result<Fitted> {
    let pca_file = layout.pca(cfg.pca.family);
    let norm_file = layout.normspec();
    require(&pca_file, Stage::PcaFit)?;
    require(&norm_file, Stage::PcaFit)?;
    let norms: NormSpecs = serde_json::from_str(&fs::read_to_string(&norm_file)?)?;
    if norms.family != cfg.pca.family {
        bail!("{} was fitted for the {} field; rerun `rvefield pca-fit`", norm_file.display(), norms.family.name());
    }
    let pca = PcaModel::read(&pca_file)?;
    Ok(Fitted { files: vec![pca_file, norm_file], norms, pca })
}

fn train_stage(run: &StageRun) -> Result<()> {
    let (cfg, layout) = (run.cfg, run.layout);
    let (data_file, records) = read_data(layout, "train")?;
    let fitted = read_fitted(cfg, layout)?;
    let spec = cfg.surrogate_spec(fitted.pca.p);
    let d = fitted.pca.d;
    spec.validate(d)?;
    let pca = (spec.kind != Kind::I).then_some(&fitted.pca);
    let prep = Preprocessing::new(&records, spec.family, spec.kind, fitted.norms.input.clone(), fitted.norms.field.clone(), pca, spec.p)?;
    let set = prep.training_set(&records, &cfg.dataset.group_lengths)?;
    let mut bundle = build_surrogate(&spec, d)?;
    bundle.prep = Some(prep);
    info!("training {:?} surrogate with {} parameters on {} sequences", spec.kind, bundle.n_params(), set.seqs.len());
    let history = train(&mut bundle, &set, &cfg.train_config())?;

    let dir = layout.model();
    bundle.save(&dir)?;
    let mut csv = String::from("batch,length_group,length,full_dim_mse");
    for q in 0..bundle.rnns.len() {
        write!(csv, ",loss_{q}")?;
    }
    csv.push('\n');
    for b in &history.batches {
        write!(csv, "{},{},{},{}", b.batch, b.length_group, b.length, b.full_dim_mse)?;
        for l in &b.losses {
            match l {
                Some(v) => write!(csv, ",{v}")?,
                None => csv.push(','),
            }
        }
        csv.push('\n');
    }
    write_text(&dir.join("loss_curve.csv"), &csv)?;

    let mut outputs: Vec<PathBuf> = fs::read_dir(&dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    outputs.retain(|p| p.file_name().is_some_and(|n| n != "manifest.json"));
    outputs.sort();
    let tail = (history.batches.len() / 10).max(1);
    let summary = serde_json::json!({
        "kind": spec.kind,
        "parameters": bundle.n_params(),
        "sequences": set.seqs.len(),
        "batches": history.batches.len(),
        "final_full_dim_mse": history.tail_mean_full_dim(tail),
        "tail_batches": tail,
    });
    let mut inputs = vec![data_file];
    inputs.extend(fitted.files);
    run.finish(&inputs, &outputs, summary)
}

fn trial_stage(run: &StageRun) -> Result<()> {
    let (cfg, layout) = (run.cfg, run.layout);
    let (data_file, records) = read_data(layout, "train")?;
    let fitted = read_fitted(cfg, layout)?;
    let prep = Preprocessing::new(
        &records,
        cfg.pca.family,
        Kind::II,
        fitted.norms.input.clone(),
        fitted.norms.field.clone(),
        Some(&fitted.pca),
        fitted.pca.p,
    )?;
    let report = hidden_size_trial(&records, &prep, &cfg.trial_config())?;
    let dir = layout.root.join("trial");
    let report_file = dir.join("report.json");
    write_text(&report_file, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    let mut csv = String::from("n_h,final_loss,score,passed\n");
    for s in &report.steps {
        writeln!(csv, "{},{},{},{}", s.n_h, s.final_loss, s.score, s.passed)?;
    }
    let steps_file = dir.join("steps.csv");
    write_text(&steps_file, &csv)?;
    let summary = serde_json::json!({ "recommended_n_h": report.recommended_n_h, "best_n_h": report.best_n_h });
    let mut inputs = vec![data_file];
    inputs.extend(fitted.files);
    run.finish(&inputs, &[report_file, steps_file], summary)
}

fn eval_stage(run: &StageRun) -> Result<()> {
    let (cfg, layout) = (run.cfg, run.layout);
    let model = layout.model();
    require(&model.join("bundle.json"), Stage::Train)?;
    let bundle = SurrogateBundle::load(&model)?;
    let (data_file, records) = read_data(layout, "test")?;
    if records.iter().all(|r| r.length == 0) {
        bail!("the held-out set is empty; set paths.test_random or paths.test_cyclic and rerun `rvefield gen-paths`");
    }
    let report = evaluate(&bundle, &records, &cfg.eval.snapshots)?;
    let family = bundle.prep()?.family;
    let dir = layout.root.join(&cfg.eval.output_dir);

    let mut per_seq = String::from("sequence,length,mse\n");
    let mut traces = String::from("sequence,step,max_predicted,max_reference\n");
    for s in &report.per_sequence {
        writeln!(per_seq, "{},{},{}", s.index, s.length, s.mse)?;
        for (t, (p, r)) in s.max_pred.iter().zip(&s.max_true).enumerate() {
            writeln!(traces, "{},{t},{p},{r}", s.index)?;
        }
    }
    let mut points = String::from("sequence,step,point_index,predicted,predicted_clamped,reference\n");
    for snap in &report.snapshots {
        for (i, (p, r)) in snap.predicted.iter().zip(&snap.reference).enumerate() {
            let clamped = if family == Family::Gamma { p.max(0.0) } else { *p };
            writeln!(points, "{},{},{i},{p},{clamped},{r}", snap.sequence, snap.step)?;
        }
    }
    let files = [("report.csv", per_seq), ("max_trace.csv", traces), ("points.csv", points)];
    let mut outputs = Vec::new();
    for (name, text) in files {
        let f = dir.join(name);
        write_text(&f, &text)?;
        outputs.push(f);
    }
    let floor = match bundle.kind() {
        Kind::I => None,
        _ => Some(pca_floor(&bundle, &records)?),
    };
    let summary = serde_json::json!({
        "mse_full_dim": report.mse_full_dim,
        "pca_floor": floor,
        "sequences": report.per_sequence.len(),
        "steps": report.per_sequence.iter().map(|s| s.length).sum::<usize>(),
    });
    let summary_file = dir.join("summary.json");
    write_text(&summary_file, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    outputs.push(summary_file);
    let mut inputs = vec![data_file, model.join("bundle.json")];
    inputs.extend((0..bundle.rnns.len()).map(|q| model.join(format!("rnn_{q}.bin"))));
    run.finish(&inputs, &outputs, summary)
}
