//! The stage graph and its runner.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};
use spikeprune_core::analysis::{energy_ratio, noise_robustness, spike_stats, SpikeStats};
use spikeprune_core::quantize::quantize_network;
use spikeprune_core::snn::{Network, NetworkConfig, PoissonEncoder};
use spikeprune_core::spatial::prune_spatial;
use spikeprune_core::temporal::temporal_prune;
use spikeprune_core::train::{
    balance_thresholds, evaluate, evaluate_ann, train_ann, train_snn, EpochLog, SnnTrainer,
};
use spikeprune_core::{Dataset32, Network32};

use crate::config::ExperimentConfig;
use crate::dataset::{load_dataset, Splits};
use crate::error::{PipelineError, Result};
use crate::manifest::{csv_bytes, sha256_hex, write_atomic, ArtifactRef, RunManifest};
use crate::model::ModelArtifact;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    TrainAnn,
    Convert,
    TrainSnn,
    PruneSpatial,
    PruneTemporal,
    Quantize,
    Analyze,
    EvalNoise,
    Report,
}

impl Stage {
    /// Every stage in dependency order.
    pub const ALL: [Stage; 9] = [
        Stage::TrainAnn,
        Stage::Convert,
        Stage::TrainSnn,
        Stage::PruneSpatial,
        Stage::PruneTemporal,
        Stage::Quantize,
        Stage::Analyze,
        Stage::EvalNoise,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::TrainAnn => "train-ann",
            Stage::Convert => "convert",
            Stage::TrainSnn => "train-snn",
            Stage::PruneSpatial => "prune-spatial",
            Stage::PruneTemporal => "prune-temporal",
            Stage::Quantize => "quantize",
            Stage::Analyze => "analyze",
            Stage::EvalNoise => "eval-noise",
            Stage::Report => "report",
        }
    }

    pub fn from_name(s: &str) -> Option<Stage> {
        Self::ALL.into_iter().find(|st| st.name() == s)
    }

    /// Stages whose outputs this one reads.
    pub fn deps(self) -> &'static [Stage] {
        match self {
            Stage::TrainAnn => &[],
            Stage::Convert => &[Stage::TrainAnn],
            Stage::TrainSnn => &[Stage::Convert],
            Stage::PruneSpatial => &[Stage::TrainSnn],
            Stage::PruneTemporal => &[Stage::PruneSpatial],
            Stage::Quantize => &[Stage::PruneTemporal],
            Stage::Analyze => &[Stage::TrainAnn, Stage::TrainSnn, Stage::Quantize],
            Stage::EvalNoise => &[Stage::TrainSnn, Stage::Quantize],
            Stage::Report => &[
                Stage::TrainAnn,
                Stage::Convert,
                Stage::TrainSnn,
                Stage::PruneSpatial,
                Stage::PruneTemporal,
                Stage::Quantize,
                Stage::Analyze,
                Stage::EvalNoise,
            ],
        }
    }

    /// The stage's primary output file.
    pub fn artifact(self) -> &'static str {
        match self {
            Stage::TrainAnn => "ann.spkm",
            Stage::Convert => "converted.spkm",
            Stage::TrainSnn => "snn.spkm",
            Stage::PruneSpatial => "spatial.spkm",
            Stage::PruneTemporal => "temporal.spkm",
            Stage::Quantize => "quantized.spkm",
            Stage::Analyze => "analysis.json",
            Stage::EvalNoise => "noise.csv",
            Stage::Report => "report.json",
        }
    }
}

#[derive(Clone, Debug)]
pub struct StageOutcome {
    pub stage: Stage,
    /// The stage was up to date and did not run.
    pub skipped: bool,
    pub manifest: RunManifest,
}

/// Files and metrics produced by one stage body.
#[derive(Default)]
struct Produced {
    files: Vec<(String, Vec<u8>)>,
    metrics: BTreeMap<String, Value>,
}

impl Produced {
    fn file(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        self.file(name, serde_json::to_vec_pretty(value).expect("report serializes"));
    }

    fn metric(&mut self, key: &str, v: impl Into<Value>) {
        self.metrics.insert(key.to_string(), v.into());
    }
}

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    hash: String,
    data: Option<Splits>,
}

#[derive(Serialize)]
struct LatencyRow {
    timesteps: usize,
    val_accuracy: f64,
    asci: f64,
}

#[derive(Serialize)]
struct NoiseRow {
    sigma: f64,
    unpruned_accuracy: f64,
    compressed_accuracy: f64,
}

#[derive(Serialize)]
struct RateRow {
    network: &'static str,
    layer: usize,
    neurons: usize,
    rate: f64,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig, out: impl Into<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            hash: cfg.hash(),
            cfg,
            out: out.into(),
            data: None,
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    fn data(&mut self) -> Result<Splits> {
        if self.data.is_none() {
            self.data = Some(load_dataset(&self.cfg.dataset)?);
        }
        Ok(self.data.clone().expect("loaded above"))
    }

    fn eval_encoder(&self) -> PoissonEncoder {
        PoissonEncoder::new(self.cfg.snn.seed)
    }

    /// Runs every stage in order, skipping the ones that are up to date.
    pub fn run_all(&mut self) -> Result<Vec<StageOutcome>> {
        Stage::ALL.iter().map(|&s| self.run(s)).collect()
    }

    /// Runs one stage. Its prerequisites must already be complete for the
    /// current configuration.
    pub fn run(&mut self, stage: Stage) -> Result<StageOutcome> {
        let mut parents = Vec::new();
        for &dep in stage.deps() {
            let m = RunManifest::load(&self.out, dep.name())?;
            let ok = m
                .as_ref()
                .is_some_and(|m| m.config_hash == self.hash && m.outputs_intact(&self.out));
            if !ok {
                return Err(PipelineError::Dependency {
                    stage: stage.name().into(),
                    required: dep.name().into(),
                });
            }
            parents.push(self.artifact_ref(dep.artifact())?);
        }
        if let Some(m) = RunManifest::load(&self.out, stage.name())? {
            if m.config_hash == self.hash && m.parents == parents && m.outputs_intact(&self.out) {
                info!("{}: up to date", stage.name());
                return Ok(StageOutcome {
                    stage,
                    skipped: true,
                    manifest: m,
                });
            }
        }
        info!("{}: running", stage.name());
        let start = Instant::now();
        let produced = match stage {
            Stage::TrainAnn => self.train_ann()?,
            Stage::Convert => self.convert()?,
            Stage::TrainSnn => self.train_snn()?,
            Stage::PruneSpatial => self.prune_spatial()?,
            Stage::PruneTemporal => self.prune_temporal()?,
            Stage::Quantize => self.quantize()?,
            Stage::Analyze => self.analyze()?,
            Stage::EvalNoise => self.eval_noise()?,
            Stage::Report => self.report()?,
        };
        let mut outputs = Vec::with_capacity(produced.files.len());
        for (name, bytes) in &produced.files {
            write_atomic(&self.out.join(name), bytes)?;
            outputs.push(ArtifactRef {
                file: name.clone(),
                sha256: sha256_hex(bytes),
            });
        }
        let manifest = RunManifest {
            stage: stage.name().into(),
            config_hash: self.hash.clone(),
            seeds: self.seeds(),
            parents,
            outputs,
            metrics: produced.metrics,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        manifest.save(&self.out)?;
        Ok(StageOutcome {
            stage,
            skipped: false,
            manifest,
        })
    }

    fn seeds(&self) -> BTreeMap<String, u64> {
        BTreeMap::from([
            ("global".into(), self.cfg.seed),
            ("ann".into(), self.cfg.ann.seed),
            ("snn".into(), self.cfg.snn.seed),
            ("split".into(), self.cfg.dataset.split_seed),
            ("noise".into(), self.cfg.noise.seed),
        ])
    }

    fn artifact_ref(&self, file: &str) -> Result<ArtifactRef> {
        let path = self.out.join(file);
        let bytes = std::fs::read(&path).map_err(|e| PipelineError::io(&path, e))?;
        Ok(ArtifactRef {
            file: file.into(),
            sha256: sha256_hex(&bytes),
        })
    }

    pub fn load_model(&self, stage: Stage) -> Result<ModelArtifact> {
        load_model_file(&self.out.join(stage.artifact()))
    }

    fn train_ann(&mut self) -> Result<Produced> {
        let d = self.data()?;
        let mut p = Produced::default();
        let (net, log) = fit_ann(&self.cfg, self.cfg.network()?, self.cfg.seed, &d)?;
        ann_metrics(&mut p, "ann", &net, &d)?;
        p.file("ann_training.csv", csv_bytes(&log)?);
        p.file(Stage::TrainAnn.artifact(), ModelArtifact::dense(net, self.cfg.timesteps).to_bytes());
        Ok(p)
    }

    fn convert(&mut self) -> Result<Produced> {
        let d = self.data()?;
        let ann = self.load_model(Stage::TrainAnn)?;
        let net = convert(&self.cfg, ann.net, &d.train)?;
        let mut p = Produced::default();
        let r = evaluate(&net, &d.test, self.cfg.timesteps, &self.eval_encoder())?;
        p.metric("converted_test_accuracy", r.accuracy);
        let th = net.thresholds.as_ref().expect("converted net has thresholds");
        p.metric("thresholds", th.values.iter().map(|&v| v as f64).collect::<Vec<_>>());
        p.file(Stage::Convert.artifact(), ModelArtifact::dense(net, self.cfg.timesteps).to_bytes());
        Ok(p)
    }

    fn train_snn(&mut self) -> Result<Produced> {
        let d = self.data()?;
        let mut net = self.load_model(Stage::Convert)?.net;
        let log = train_snn(&mut net, &d.train, Some(&d.val), self.cfg.timesteps, &self.cfg.snn, |_, _| {})?;
        let mut p = Produced::default();
        snn_metrics(&mut p, "snn", &net, &d, self.cfg.timesteps, &self.eval_encoder())?;
        p.file("snn_training.csv", csv_bytes(&log)?);
        p.file(Stage::TrainSnn.artifact(), ModelArtifact::dense(net, self.cfg.timesteps).to_bytes());
        Ok(p)
    }

    fn prune_spatial(&mut self) -> Result<Produced> {
        let d = self.data()?;
        let t = self.cfg.timesteps;
        let parent = self.load_model(Stage::TrainSnn)?.net;
        let (pruned, report) = prune_spatial(&parent, &d.train, t, &self.eval_encoder(), &self.cfg.spatial)?;
        info!(
            "pruned widths {:?}, removed layers {:?}, {} -> {} parameters",
            report.layers.iter().map(|l| l.final_dim).collect::<Vec<_>>(),
            report.removed,
            report.parent_params,
            report.pruned_params
        );
        let mut p = Produced::default();
        let (ann, ann_log) = fit_ann(&self.cfg, pruned.clone(), self.cfg.seed ^ 0x5a, &d)?;
        ann_metrics(&mut p, "spatial_ann", &ann, &d)?;
        let mut net = convert(&self.cfg, ann, &d.train)?;
        let snn_log = train_snn(&mut net, &d.train, Some(&d.val), t, &self.cfg.snn, |_, _| {})?;
        snn_metrics(&mut p, "spatial", &net, &d, t, &self.eval_encoder())?;
        p.metric("parent_params", report.parent_params as u64);
        p.metric("pruned_params", report.pruned_params as u64);
        p.metric("param_ratio", report.param_ratio);
        p.json("prune_report.json", &report);
        p.file("pruned_architecture.json", serde_json::to_vec_pretty(&pruned).expect("serializes"));
        p.file("spatial_ann_training.csv", csv_bytes(&ann_log)?);
        p.file("spatial_snn_training.csv", csv_bytes(&snn_log)?);
        p.file(Stage::PruneSpatial.artifact(), ModelArtifact::dense(net, t).to_bytes());
        Ok(p)
    }

    fn prune_temporal(&mut self) -> Result<Produced> {
        let d = self.data()?;
        let t = self.cfg.timesteps;
        let net = self.load_model(Stage::PruneSpatial)?.net;
        let baseline = evaluate(&net, &d.val, t, &self.eval_encoder())?.accuracy;
        let tcfg = self.cfg.temporal.to_core(t, baseline);
        let mut trainer = SnnTrainer::new(&net, self.cfg.snn.clone())?;
        let mut p = Produced::default();
        let mut checkpoints = Vec::new();
        let out = temporal_prune(&net, &mut trainer, &d.train, &d.val, &tcfg, |pt, n| {
            let m = ModelArtifact::dense(n.clone(), pt.timesteps);
            checkpoints.push((format!("checkpoints/temporal_t{:03}.spkm", pt.timesteps), m.to_bytes()));
        })?;
        info!(
            "temporal pruning: T {} -> {} ({:?}), val accuracy {:.4} (bar {:.4})",
            t, out.timesteps, out.status, out.accuracy, tcfg.min_accuracy
        );
        for (name, bytes) in checkpoints {
            p.file(name, bytes);
        }
        let rows: Vec<LatencyRow> = out
            .curve
            .iter()
            .map(|pt| LatencyRow {
                timesteps: pt.timesteps,
                val_accuracy: pt.accuracy,
                asci: pt.asci,
            })
            .collect();
        p.file("latency.csv", csv_bytes(&rows)?);
        p.metric("start_val_accuracy", out.start_accuracy);
        p.metric("min_accuracy", tcfg.min_accuracy);
        p.metric("final_timesteps", out.timesteps as u64);
        p.metric("final_val_accuracy", out.accuracy);
        p.metric("iterations", out.curve.len() as u64);
        p.metric("status", serde_json::to_value(out.status).expect("serializes"));
        let r = evaluate(&out.net, &d.test, out.timesteps, &self.eval_encoder())?;
        p.metric("temporal_test_accuracy", r.accuracy);
        p.metric("temporal_asci", spike_stats(&r.tally)?.asci);
        p.file(Stage::PruneTemporal.artifact(), ModelArtifact::dense(out.net, out.timesteps).to_bytes());
        Ok(p)
    }

    fn quantize(&mut self) -> Result<Produced> {
        let d = self.data()?;
        let m = self.load_model(Stage::PruneTemporal)?;
        let (q, books, report) = quantize_network(&m.net, self.cfg.quantize.bits, self.cfg.seed)?;
        let enc = self.eval_encoder();
        let before = evaluate(&m.net, &d.test, m.timesteps, &enc)?.accuracy;
        let after = evaluate(&q, &d.test, m.timesteps, &enc)?.accuracy;
        let mut p = Produced::default();
        p.metric("bits", self.cfg.quantize.bits);
        p.metric("test_accuracy_before", before);
        p.metric("test_accuracy_after", after);
        p.metric("compression_rate", report.overall_r);
        p.json("compression.json", &report);
        let art = ModelArtifact {
            net: q,
            timesteps: m.timesteps,
            codebooks: books,
        };
        p.file(Stage::Quantize.artifact(), art.to_bytes());
        Ok(p)
    }

    fn analyze(&mut self) -> Result<Produced> {
        let d = self.data()?;
        let enc = self.eval_encoder();
        let ann = self.load_model(Stage::TrainAnn)?;
        let unpruned = self.load_model(Stage::TrainSnn)?;
        let last = self.load_model(Stage::Quantize)?;
        let ru = evaluate(&unpruned.net, &d.test, unpruned.timesteps, &enc)?;
        let rf = evaluate(&last.net, &d.test, last.timesteps, &enc)?;
        let su = spike_stats(&ru.tally)?;
        let sf = spike_stats(&rf.tally)?;
        let energy = energy_ratio(ann.net.config(), last.net.config(), &rf.tally)?;
        let energy_unpruned = energy_ratio(ann.net.config(), unpruned.net.config(), &ru.tally)?;
        let mut p = Produced::default();
        p.metric("unpruned_test_accuracy", ru.accuracy);
        p.metric("compressed_test_accuracy", rf.accuracy);
        p.metric("unpruned_timesteps", unpruned.timesteps as u64);
        p.metric("compressed_timesteps", last.timesteps as u64);
        p.metric("asci_unpruned", su.asci);
        p.metric("asci_compressed", sf.asci);
        p.metric("asci_ratio", sf.asci / su.asci);
        p.metric("alpha", energy.alpha);
        p.metric("alpha_unpruned", energy_unpruned.alpha);
        let rates = rate_rows("unpruned", &su).chain(rate_rows("compressed", &sf)).collect::<Vec<_>>();
        p.file("spike_rates.csv", csv_bytes(&rates)?);
        p.json(
            Stage::Analyze.artifact(),
            &json!({
                "unpruned": su,
                "compressed": sf,
                "energy": energy,
                "energy_unpruned": energy_unpruned,
            }),
        );
        Ok(p)
    }

    fn eval_noise(&mut self) -> Result<Produced> {
        let d = self.data()?;
        let enc = self.eval_encoder();
        let sig = &self.cfg.noise.sigmas;
        let unpruned = self.load_model(Stage::TrainSnn)?;
        let last = self.load_model(Stage::Quantize)?;
        let cu = noise_robustness(&unpruned.net, &d.test, sig, unpruned.timesteps, &enc, self.cfg.noise.seed)?;
        let cf = noise_robustness(&last.net, &d.test, sig, last.timesteps, &enc, self.cfg.noise.seed)?;
        let rows: Vec<NoiseRow> = cu
            .iter()
            .zip(&cf)
            .map(|(a, b)| NoiseRow {
                sigma: a.sigma,
                unpruned_accuracy: a.accuracy,
                compressed_accuracy: b.accuracy,
            })
            .collect();
        let mut p = Produced::default();
        p.metric("unpruned_mean_accuracy", mean(cu.iter().map(|x| x.accuracy)));
        p.metric("compressed_mean_accuracy", mean(cf.iter().map(|x| x.accuracy)));
        p.file(Stage::EvalNoise.artifact(), csv_bytes(&rows)?);
        Ok(p)
    }

    fn report(&mut self) -> Result<Produced> {
        let mut stages = serde_json::Map::new();
        for &s in Stage::Report.deps() {
            let m = RunManifest::load(&self.out, s.name())?.expect("checked as dependency");
            stages.insert(s.name().into(), Value::Object(m.metrics.into_iter().collect()));
        }
        let mut p = Produced::default();
        p.metric("stages", stages.len() as u64);
        p.json(
            Stage::Report.artifact(),
            &json!({
                "config_hash": self.hash,
                "seed": self.cfg.seed,
                "stages": stages,
            }),
        );
        Ok(p)
    }
}

pub fn load_model_file(path: &Path) -> Result<ModelArtifact> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    ModelArtifact::from_bytes(&bytes).map_err(|e| match e {
        PipelineError::Format { offset, reason, .. } => PipelineError::Format {
            what: path.display().to_string(),
            offset,
            reason,
        },
        other => other,
    })
}

/// Fresh He-initialized ANN of the given architecture, trained with the
/// experiment's ANN settings.
pub fn fit_ann(cfg: &ExperimentConfig, arch: NetworkConfig, seed: u64, d: &Splits) -> Result<(Network32, Vec<EpochLog>)> {
    let mut net = Network::init(arch, seed)?;
    let val = (!d.val.is_empty()).then_some(&d.val);
    let log = train_ann(&mut net, &d.train, val, &cfg.ann)?;
    Ok((net, log))
}

/// Threshold balancing on the first calibration samples of `train`.
pub fn convert(cfg: &ExperimentConfig, mut net: Network32, train: &Dataset32) -> Result<Network32> {
    let calib = train.take(cfg.convert.samples);
    let enc = PoissonEncoder::new(cfg.snn.seed);
    let th = balance_thresholds(&net, &calib, cfg.timesteps, &enc, cfg.convert.percentile)?;
    net.set_thresholds(th)?;
    Ok(net)
}

fn ann_metrics(p: &mut Produced, prefix: &str, net: &Network32, d: &Splits) -> Result<()> {
    if !d.val.is_empty() {
        p.metric(&format!("{prefix}_val_accuracy"), evaluate_ann(net, &d.val)?.0);
    }
    p.metric(&format!("{prefix}_test_accuracy"), evaluate_ann(net, &d.test)?.0);
    p.metric(&format!("{prefix}_params"), net.param_count() as u64);
    Ok(())
}

fn snn_metrics(p: &mut Produced, prefix: &str, net: &Network32, d: &Splits, t: usize, enc: &PoissonEncoder) -> Result<()> {
    if !d.val.is_empty() {
        p.metric(&format!("{prefix}_val_accuracy"), evaluate(net, &d.val, t, enc)?.accuracy);
    }
    let r = evaluate(net, &d.test, t, enc)?;
    p.metric(&format!("{prefix}_test_accuracy"), r.accuracy);
    match spike_stats(&r.tally) {
        Ok(s) => p.metric(&format!("{prefix}_asci"), s.asci),
        Err(e) => warn!("{prefix}: no spike statistics: {e}"),
    }
    p.metric(&format!("{prefix}_params"), net.param_count() as u64);
    Ok(())
}

fn rate_rows<'a>(network: &'static str, s: &'a SpikeStats) -> impl Iterator<Item = RateRow> + 'a {
    s.layers.iter().map(move |l| RateRow {
        network,
        layer: l.layer,
        neurons: l.neurons,
        rate: l.rate,
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}
